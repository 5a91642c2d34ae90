//! Day-trip design: choose a subset of points of interest (POIs) to visit in
//! one day.
//!
//! A state is the set of selected POIs. Every action toggles one POI, and a
//! do-nothing action leaves the trip as it is. Once the optimal itinerary of
//! the current trip runs over the day's time limit, only removals are legal.
//! The agent values a trip by how much of the visiting time goes to topics it
//! likes, discounted by its willingness to pay the total admission.
//!
//! The agent plans on its own view of the problem: it estimates itineraries
//! with a hull-following heuristic rather than solving the tour exactly and,
//! when anchored, does not consider POIs far from its current itinerary.

mod tsp;

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::agent::{
    bfs_q_estimate, AgentDomain, AgentView, BiasParams, QCache, QEstimate, TemperatureBelief,
};
use crate::decision::{EnvModel, ParameterSample};
use crate::dist::{normal, truncated_normal, truncated_normal_cdf_nonneg};
use crate::error::{Error, Result};
use crate::memo::Memo;
use crate::rng::{Digest, SimRng};

pub use tsp::{
    convex_hull, distance, distance_to_tour, held_karp, hull_insertion, nearest_neighbor,
    point_segment_distance, shortest_tour, tour_length, two_opt, Point,
};

pub const MAX_POIS: usize = 128;
pub const MAX_TOPICS: usize = 32;

mod topic_list {
    use super::*;

    pub fn serialize<S: Serializer>(mask: &u32, s: S) -> std::result::Result<S::Ok, S::Error> {
        let ids: Vec<u8> = (0..32u8).filter(|j| mask & (1 << j) != 0).collect();
        ids.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<u32, D::Error> {
        let ids = Vec::<u8>::deserialize(d)?;
        ids.into_iter().try_fold(0u32, |m, j| {
            if (j as usize) < MAX_TOPICS {
                Ok(m | (1 << j))
            } else {
                Err(serde::de::Error::custom(format!("topic id {j} out of range")))
            }
        })
    }
}

/// A point of interest. Coordinates are kilometres from home at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poi {
    pub x: f64,
    pub y: f64,
    pub cost: f64,
    /// Visit duration in minutes.
    pub duration: f64,
    /// Topic ids the POI belongs to.
    #[serde(with = "topic_list")]
    pub topics: u32,
}

impl Poi {
    pub fn point(&self) -> Point {
        (self.x, self.y)
    }
}

/// Random POIs: coordinates `N(0, 1.15)` on `[-5, 5]`, cost `N(10, 3)` on
/// `[0, ∞)`, duration `N(30, 20)` on `[0, 100]`, each topic with probability
/// 0.1.
pub fn generate_pois(n: usize, n_topics: usize, rng: &mut SimRng) -> Vec<Poi> {
    (0..n)
        .map(|_| {
            let x = truncated_normal(rng, 0.0, 1.15, -5.0, 5.0);
            let y = truncated_normal(rng, 0.0, 1.15, -5.0, 5.0);
            let cost = truncated_normal(rng, 10.0, 3.0, 0.0, f64::INFINITY);
            let duration = truncated_normal(rng, 30.0, 20.0, 0.0, 100.0);
            let mut topics = 0u32;
            for j in 0..n_topics {
                if rng.random::<f64>() < 0.1 {
                    topics |= 1 << j;
                }
            }
            Poi {
                x,
                y,
                cost,
                duration,
                topics,
            }
        })
        .collect()
}

/// Reward parameters: topic interests and the admission-cost tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaytripOmega {
    #[serde(with = "topic_list")]
    pub topics: u32,
    pub mu_c: f64,
    pub sigma_c: f64,
}

/// Bias parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaytripTheta {
    pub anchoring: bool,
    pub beta1: f64,
    pub beta2: f64,
}

impl BiasParams for DaytripTheta {
    fn beta1(&self) -> f64 {
        self.beta1
    }
    fn beta2(&self) -> f64 {
        self.beta2
    }
}

pub type DaytripParams = ParameterSample<DaytripOmega, DaytripTheta>;

/// Fraction of the POI's topics the agent is interested in.
pub fn interest(poi: &Poi, omega: &DaytripOmega) -> f64 {
    let shared = (poi.topics & omega.topics).count_ones() as f64;
    shared / (poi.topics.count_ones().max(1)) as f64
}

/// Willingness to pay a total admission of `cost`.
pub fn cost_score(cost: f64, omega: &DaytripOmega) -> f64 {
    1.0 - truncated_normal_cdf_nonneg(cost, omega.mu_c, omega.sigma_c)
}

/// Set of selected POIs, stored as a bit mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct TripState {
    pub selected: u128,
}

impl TripState {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_indices(indices: &[usize]) -> Self {
        Self {
            selected: indices.iter().fold(0, |m, i| m | (1u128 << i)),
        }
    }

    pub fn contains(&self, i: usize) -> bool {
        self.selected & (1u128 << i) != 0
    }

    pub fn indices(&self) -> Vec<usize> {
        bits(self.selected).collect()
    }

    pub fn len(&self) -> usize {
        self.selected.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.selected == 0
    }

    pub fn toggled(&self, i: usize) -> Self {
        Self {
            selected: self.selected ^ (1u128 << i),
        }
    }
}

impl Serialize for TripState {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.indices().serialize(s)
    }
}

impl<'de> Deserialize<'de> for TripState {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let idx = Vec::<usize>::deserialize(d)?;
        if let Some(bad) = idx.iter().find(|i| **i >= MAX_POIS) {
            return Err(serde::de::Error::custom(format!("POI index {bad} out of range")));
        }
        Ok(Self::from_indices(&idx))
    }
}

fn bits(mut mask: u128) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if mask == 0 {
            None
        } else {
            let i = mask.trailing_zeros() as usize;
            mask &= mask - 1;
            Some(i)
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripAction {
    /// Add the POI if absent, remove it if present.
    Toggle(usize),
    Noop,
}

/// A tour through the selected POIs and its duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Itinerary {
    /// POI indices in visiting order; the tour starts and ends at home.
    pub order: Vec<usize>,
    pub travel_minutes: f64,
    pub visit_minutes: f64,
}

impl Itinerary {
    pub fn total_minutes(&self) -> f64 {
        self.travel_minutes + self.visit_minutes
    }
}

/// The agent's picture of a trip: its heuristic itinerary and which
/// unselected POIs lie within the anchoring radius of it.
#[derive(Debug, Clone)]
struct Perception {
    itinerary: Itinerary,
    near: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DaytripConfig {
    pub n_pois: usize,
    pub n_topics: usize,
    pub max_minutes: f64,
    pub speed_kmh: f64,
    pub anchor_radius_km: f64,
    /// Largest number of stops solved exactly.
    pub exact_tsp_limit: usize,
    pub bfs_iterations: usize,
    pub bfs_depth: usize,
    /// Discount the agent applies when looking ahead; below one it prefers
    /// direct routes to a good trip over detours through worse ones.
    pub agent_gamma: f64,
    pub memo_capacity: usize,
}

impl Default for DaytripConfig {
    fn default() -> Self {
        Self::full()
    }
}

impl DaytripConfig {
    pub fn full() -> Self {
        Self {
            n_pois: 100,
            n_topics: 20,
            max_minutes: 720.0,
            speed_kmh: 5.0,
            anchor_radius_km: 0.5,
            exact_tsp_limit: 12,
            bfs_iterations: 500,
            bfs_depth: 3,
            agent_gamma: 0.95,
            memo_capacity: 400_000,
        }
    }

    pub fn desk() -> Self {
        Self {
            n_pois: 30,
            n_topics: 10,
            bfs_iterations: 100,
            ..Self::full()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_pois == 0 || self.n_pois > MAX_POIS {
            return Err(Error::InvalidArgument(format!(
                "day trips support 1 to {MAX_POIS} POIs"
            )));
        }
        if self.n_topics == 0 || self.n_topics > MAX_TOPICS {
            return Err(Error::InvalidArgument(format!(
                "day trips support 1 to {MAX_TOPICS} topics"
            )));
        }
        if !(self.max_minutes > 0.0 && self.speed_kmh > 0.0 && self.anchor_radius_km >= 0.0) {
            return Err(Error::InvalidArgument("day-trip limits must be positive".into()));
        }
        if !(self.agent_gamma > 0.0 && self.agent_gamma <= 1.0) {
            return Err(Error::InvalidArgument("agent discount must be in (0, 1]".into()));
        }
        if self.bfs_iterations == 0 || self.bfs_depth == 0 {
            return Err(Error::InvalidArgument("agent search needs iterations and depth".into()));
        }
        if self.exact_tsp_limit > 16 {
            return Err(Error::InvalidArgument("exact tours are limited to 16 stops".into()));
        }
        Ok(())
    }
}

/// How the assistant's belief treats the anchoring bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchoringBelief {
    /// Half the particles are anchored, and observations decide.
    Infer,
    /// No particle is anchored.
    AssumeNone,
    /// Every particle is anchored.
    AssumeAlways,
}

pub struct DaytripEnv {
    config: DaytripConfig,
    pois: Vec<Poi>,
    all: u128,
    reward_bound: f64,
    optimal: Memo<u128, Itinerary>,
    perceived: Memo<u128, Perception>,
    q_cache: QCache<TripAction>,
}

impl std::fmt::Debug for DaytripEnv {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DaytripEnv")
            .field("config", &self.config)
            .field("pois", &self.pois.len())
            .finish()
    }
}

impl DaytripEnv {
    pub fn new(config: DaytripConfig, pois: Vec<Poi>) -> Result<Self> {
        config.validate()?;
        if pois.len() != config.n_pois {
            return Err(Error::InvalidArgument(format!(
                "expected {} POIs, got {}",
                config.n_pois,
                pois.len()
            )));
        }
        let topic_limit = if config.n_topics == 32 {
            u32::MAX
        } else {
            (1u32 << config.n_topics) - 1
        };
        for p in &pois {
            if !(p.duration >= 0.0 && p.cost >= 0.0 && p.x.is_finite() && p.y.is_finite()) {
                return Err(Error::InvalidArgument("POI attributes must be finite and non-negative".into()));
            }
            if p.topics & !topic_limit != 0 {
                return Err(Error::InvalidArgument("POI topic id out of range".into()));
            }
        }
        let all = if pois.len() == 128 {
            u128::MAX
        } else {
            (1u128 << pois.len()) - 1
        };
        let reward_bound = pois.iter().map(|p| p.duration).fold(0.0, f64::max) / config.max_minutes;
        let capacity = config.memo_capacity;
        Ok(Self {
            config,
            pois,
            all,
            reward_bound,
            optimal: Memo::new(capacity),
            perceived: Memo::new(capacity),
            q_cache: QCache::new(capacity),
        })
    }

    /// Generates a fresh instance.
    pub fn generate(config: DaytripConfig, rng: &mut SimRng) -> Result<Self> {
        let pois = generate_pois(config.n_pois, config.n_topics, rng);
        Self::new(config, pois)
    }

    pub fn config(&self) -> &DaytripConfig {
        &self.config
    }

    pub fn pois(&self) -> &[Poi] {
        &self.pois
    }

    fn points(&self, selected: &[usize]) -> Vec<Point> {
        std::iter::once((0.0, 0.0))
            .chain(selected.iter().map(|i| self.pois[*i].point()))
            .collect()
    }

    fn minutes(&self, km: f64) -> f64 {
        km / self.config.speed_kmh * 60.0
    }

    fn itinerary_from(&self, selected: &[usize], tour: &[usize], km: f64) -> Itinerary {
        Itinerary {
            order: tour.iter().skip(1).map(|k| selected[*k - 1]).collect(),
            travel_minutes: self.minutes(km),
            visit_minutes: selected.iter().map(|i| self.pois[*i].duration).sum(),
        }
    }

    /// The shortest itinerary for `state`.
    pub fn optimal_itinerary(&self, state: &TripState) -> Arc<Itinerary> {
        self.optimal.get_or_insert_with(state.selected, || {
            let selected = state.indices();
            let points = self.points(&selected);
            let (tour, km) = shortest_tour(&points, self.config.exact_tsp_limit);
            self.itinerary_from(&selected, &tour, km)
        })
    }

    fn perception(&self, state: &TripState) -> Arc<Perception> {
        self.perceived.get_or_insert_with(state.selected, || {
            let selected = state.indices();
            let points = self.points(&selected);
            let tour = hull_insertion(&points);
            let km = tour_length(&points, &tour);
            let mut near = 0u128;
            for i in bits(self.all & !state.selected) {
                if distance_to_tour(self.pois[i].point(), &points, &tour)
                    <= self.config.anchor_radius_km + 1e-9
                {
                    near |= 1u128 << i;
                }
            }
            Perception {
                itinerary: self.itinerary_from(&selected, &tour, km),
                near,
            }
        })
    }

    /// The itinerary the agent perceives for `state`.
    pub fn heuristic_itinerary(&self, state: &TripState) -> Itinerary {
        self.perception(state).itinerary.clone()
    }

    /// Unselected POIs within the anchoring radius of the perceived
    /// itinerary.
    pub fn near_itinerary(&self, state: &TripState) -> Vec<usize> {
        bits(self.perception(state).near).collect()
    }

    pub fn total_cost(&self, state: &TripState) -> f64 {
        bits(state.selected).map(|i| self.pois[i].cost).sum()
    }

    /// Trip value `f_ω`: interest-weighted visiting time as a fraction of the
    /// day, times the willingness to pay.
    pub fn objective(&self, state: &TripState, omega: &DaytripOmega) -> f64 {
        let mut enjoyment = 0.0;
        let mut cost = 0.0;
        for i in bits(state.selected) {
            let p = &self.pois[i];
            enjoyment += p.duration * interest(p, omega);
            cost += p.cost;
        }
        enjoyment / self.config.max_minutes * cost_score(cost, omega)
    }

    pub fn is_over_time(&self, state: &TripState) -> bool {
        self.optimal_itinerary(state).total_minutes() > self.config.max_minutes
    }

    /// Why `action` is illegal in `state`, if it is.
    pub fn check_action(&self, state: &TripState, action: TripAction) -> Result<()> {
        match action {
            TripAction::Noop => Ok(()),
            TripAction::Toggle(i) if i >= self.pois.len() => {
                Err(Error::IllegalAction(format!("POI {i} does not exist")))
            }
            TripAction::Toggle(i) if !state.contains(i) && self.is_over_time(state) => {
                Err(Error::IllegalAction(format!(
                    "cannot add POI {i}: the trip already takes {:.0} of {:.0} minutes",
                    self.optimal_itinerary(state).total_minutes(),
                    self.config.max_minutes
                )))
            }
            TripAction::Toggle(_) => Ok(()),
        }
    }

    fn actions_from_masks(adds: u128, removes: u128) -> Vec<TripAction> {
        let mut out: Vec<TripAction> = bits(adds | removes).map(TripAction::Toggle).collect();
        out.push(TripAction::Noop);
        out
    }

    /// Actions the agent considers in `state`.
    pub fn agent_actions(&self, state: &TripState, anchoring: bool) -> Vec<TripAction> {
        let p = self.perception(state);
        let adds = if p.itinerary.total_minutes() > self.config.max_minutes {
            0
        } else if anchoring {
            p.near
        } else {
            self.all & !state.selected
        };
        Self::actions_from_masks(adds, state.selected)
    }

    pub fn params_digest(omega: &DaytripOmega, theta: &DaytripTheta) -> u64 {
        Digest::default()
            .push(omega.topics as u64)
            .push_f64(omega.mu_c)
            .push_f64(omega.sigma_c)
            .push(theta.anchoring as u64)
            .finish()
    }

    pub fn q_cache(&self) -> &QCache<TripAction> {
        &self.q_cache
    }

    /// Simulated agent parameters: topics `Bern(0.3)`, `μ_c ~ N(140, 25)`,
    /// `σ_c = 10`, `β₁ ~ U(1, 4)`, `β₂ = 10 β₁`, anchoring `Bern(0.5)` unless
    /// given.
    pub fn sample_agent(&self, rng: &mut SimRng, anchoring: Option<bool>) -> DaytripParams {
        let omega = self.sample_omega(rng);
        let beta1 = rng.random_range(1.0..4.0);
        let anchoring = anchoring.unwrap_or_else(|| rng.random::<f64>() < 0.5);
        ParameterSample::new(
            omega,
            DaytripTheta {
                anchoring,
                beta1,
                beta2: 10.0 * beta1,
            },
        )
    }

    fn sample_omega(&self, rng: &mut SimRng) -> DaytripOmega {
        let mut topics = 0u32;
        for j in 0..self.config.n_topics {
            if rng.random::<f64>() < 0.3 {
                topics |= 1 << j;
            }
        }
        DaytripOmega {
            topics,
            mu_c: normal(rng, 140.0, 25.0),
            sigma_c: 10.0,
        }
    }

    /// One particle of the assistant's prior.
    pub fn sample_particle(
        &self,
        rng: &mut SimRng,
        anchoring: AnchoringBelief,
        temperatures: &TemperatureBelief,
    ) -> DaytripParams {
        let omega = self.sample_omega(rng);
        let anchored = match anchoring {
            AnchoringBelief::Infer => rng.random::<f64>() < 0.5,
            AnchoringBelief::AssumeNone => false,
            AnchoringBelief::AssumeAlways => true,
        };
        let (beta1, beta2) = match temperatures {
            TemperatureBelief::Fixed { beta1, beta2 } => (*beta1, *beta2),
            TemperatureBelief::Prior => {
                let b = rng.random_range(1.0..4.0);
                (b, 10.0 * b)
            }
        };
        ParameterSample::new(
            omega,
            DaytripTheta {
                anchoring: anchored,
                beta1,
                beta2,
            },
        )
    }

    /// Reward-parameter coordinates compared when measuring inference error:
    /// each topic interest, and `μ_c` in units of its prior spread.
    pub fn omega_features(&self, omega: &DaytripOmega) -> Vec<f64> {
        let mut v: Vec<f64> = (0..self.config.n_topics)
            .map(|j| f64::from((omega.topics >> j) & 1))
            .collect();
        v.push(omega.mu_c / 25.0);
        v
    }
}

/// The agent's deterministic model of the problem with its reward bound in.
struct AgentModel<'a> {
    env: &'a DaytripEnv,
    /// Duration times interest, per POI.
    enjoyment: Vec<f64>,
    omega: &'a DaytripOmega,
    anchoring: bool,
}

#[derive(Clone)]
struct Imagined {
    state: TripState,
    enjoyment: f64,
    cost: f64,
}

impl AgentModel<'_> {
    fn value(&self, s: &Imagined) -> f64 {
        s.enjoyment / self.env.config.max_minutes * cost_score(s.cost, self.omega)
    }
}

impl AgentView for AgentModel<'_> {
    type State = Imagined;
    type Action = TripAction;

    fn actions(&self, s: &Imagined) -> Vec<TripAction> {
        self.env.agent_actions(&s.state, self.anchoring)
    }

    fn step(&self, s: &Imagined, action: TripAction) -> (Imagined, f64) {
        match action {
            TripAction::Noop => (s.clone(), 0.0),
            TripAction::Toggle(i) => {
                let sign = if s.state.contains(i) { -1.0 } else { 1.0 };
                let next = Imagined {
                    state: s.state.toggled(i),
                    enjoyment: s.enjoyment + sign * self.enjoyment[i],
                    cost: s.cost + sign * self.env.pois[i].cost,
                };
                let r = self.value(&next) - self.value(s);
                (next, r)
            }
        }
    }

    fn discount(&self) -> f64 {
        self.env.config.agent_gamma
    }

    fn reward_bound(&self) -> f64 {
        self.env.reward_bound
    }
}

impl EnvModel for DaytripEnv {
    type State = TripState;
    type Action = TripAction;
    type Omega = DaytripOmega;

    fn actions(&self, state: &TripState) -> Vec<TripAction> {
        let adds = if self.is_over_time(state) {
            0
        } else {
            self.all & !state.selected
        };
        Self::actions_from_masks(adds, state.selected)
    }

    fn transition(&self, state: &TripState, action: TripAction, _rng: &mut SimRng) -> TripState {
        match action {
            TripAction::Noop => *state,
            TripAction::Toggle(i) => state.toggled(i),
        }
    }

    fn reward(&self, state: &TripState, _action: TripAction, next: &TripState, omega: &DaytripOmega) -> f64 {
        if state == next {
            return 0.0;
        }
        self.objective(next, omega) - self.objective(state, omega)
    }

    fn discount(&self) -> f64 {
        1.0
    }

    fn start_state(&self, _rng: &mut SimRng) -> TripState {
        TripState::empty()
    }

    fn state_key(&self, state: &TripState) -> u64 {
        Digest::new(0x7212).push(state.selected as u64).push((state.selected >> 64) as u64).finish()
    }

    fn noop(&self) -> Option<TripAction> {
        Some(TripAction::Noop)
    }

    fn transition_distribution(&self, state: &TripState, action: TripAction) -> Option<Vec<(TripState, f64)>> {
        let mut rng = crate::rng::seeded(0);
        Some(vec![(self.transition(state, action, &mut rng), 1.0)])
    }
}

impl AgentDomain for DaytripEnv {
    type Theta = DaytripTheta;

    fn agent_q(
        &self,
        state: &TripState,
        omega: &DaytripOmega,
        theta: &DaytripTheta,
    ) -> Result<Arc<QEstimate<TripAction>>> {
        let key = (self.state_key(state), Self::params_digest(omega, theta));
        self.q_cache.get_or_compute(key, || {
            let model = AgentModel {
                env: self,
                enjoyment: self.pois.iter().map(|p| p.duration * interest(p, omega)).collect(),
                omega,
                anchoring: theta.anchoring,
            };
            let root = Imagined {
                state: *state,
                enjoyment: bits(state.selected).map(|i| model.enjoyment[i]).sum(),
                cost: self.total_cost(state),
            };
            bfs_q_estimate(&model, &root, self.config.bfs_iterations, self.config.bfs_depth)
        })
    }
}
