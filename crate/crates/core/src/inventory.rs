//! Three-product inventory management with stochastic Gaussian demand.
//!
//! Each step the agent picks production quantities (even numbers, at most 12
//! in total), demand is realised, stock is sold, unsold units are stored and
//! unmet demand is lost. Agents plan on point estimates `μ + θσ` of demand.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{ChiSquared, Distribution};
use serde::{Deserialize, Serialize};

use crate::agent::{
    bfs_q_estimate, AgentDomain, AgentView, BiasParams, QCache, QEstimate, TemperatureBelief,
};
use crate::decision::{EnvModel, ParameterSample};
use crate::dist::{normal, truncated_normal};
use crate::error::{Error, Result};
use crate::rng::{Digest, SimRng};

pub const PRODUCTS: usize = 3;

/// Production quantities per product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Production(pub [u32; PRODUCTS]);

/// Mean and standard deviation of one product's demand at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandDist {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InventoryState {
    pub stock: [u32; PRODUCTS],
    pub t: usize,
    /// Demand realised on the step that led here (zero at the start).
    pub demand: [u32; PRODUCTS],
}

impl InventoryState {
    pub fn start() -> Self {
        Self {
            stock: [0; PRODUCTS],
            t: 0,
            demand: [0; PRODUCTS],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InventoryOmega {
    /// Profit per unit sold.
    pub profit: [f64; PRODUCTS],
    /// Cost per unit in stock after a step.
    pub storage_cost: f64,
    /// Cost per unit of unmet demand.
    pub lost_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InventoryTheta {
    /// Optimism (> 0) or pessimism (< 0) of the agent's demand estimates, in
    /// standard deviations.
    pub theta: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl BiasParams for InventoryTheta {
    fn beta1(&self) -> f64 {
        self.beta1
    }
    fn beta2(&self) -> f64 {
        self.beta2
    }
}

pub type InventoryParams = ParameterSample<InventoryOmega, InventoryTheta>;

/// Outcome of one production step for a single product.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProductStep<T> {
    pub sold: T,
    pub lost: T,
    pub stock: T,
}

/// Sells from `stock + produced` against `demand`.
pub fn product_step(stock: u32, produced: u32, demand: u32) -> ProductStep<u32> {
    let available = stock + produced;
    let sold = available.min(demand);
    ProductStep {
        sold,
        lost: demand - sold,
        stock: available - sold,
    }
}

/// `Σ v·sold − c·Σ stock′ − l·Σ lost`.
pub fn step_reward(omega: &InventoryOmega, sold: [f64; PRODUCTS], lost: [f64; PRODUCTS], stock: [f64; PRODUCTS]) -> f64 {
    (0..PRODUCTS)
        .map(|i| omega.profit[i] * sold[i] - omega.storage_cost * stock[i] - omega.lost_cost * lost[i])
        .sum()
}

/// The agent's point estimate of demand, clamped at zero.
pub fn point_estimate(d: DemandDist, theta: f64) -> f64 {
    (d.mean + theta * d.sd).max(0.0)
}

/// How the assistant's belief treats the optimism parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BiasBelief {
    /// Particles draw `θ` from the prior.
    Infer,
    /// Every particle uses this value.
    Assume { theta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InventoryConfig {
    pub horizon: usize,
    /// Total production per step.
    pub capacity: u32,
    /// Production comes in multiples of this.
    pub batch: u32,
    pub bfs_iterations: usize,
    pub bfs_depth: usize,
    /// Discount the agent uses when evaluating its options.
    pub agent_gamma: f64,
    /// Simulated agents draw `β₁` uniformly from this range; `β₂ = ratio · β₁`.
    pub beta1_range: (f64, f64),
    pub beta2_ratio: f64,
    pub memo_capacity: usize,
}

impl Default for InventoryConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl InventoryConfig {
    pub fn full() -> Self {
        Self {
            horizon: 50,
            capacity: 12,
            batch: 2,
            bfs_iterations: 300,
            bfs_depth: 2,
            agent_gamma: 0.99,
            beta1_range: (1.0, 4.0),
            beta2_ratio: 10.0,
            memo_capacity: 400_000,
        }
    }

    pub fn desk() -> Self {
        Self {
            horizon: 20,
            ..Self::full()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.batch == 0 || self.capacity < self.batch {
            return Err(Error::InvalidArgument(
                "horizon, batch and capacity must be positive with capacity ≥ batch".into(),
            ));
        }
        if self.bfs_iterations == 0 || self.bfs_depth == 0 {
            return Err(Error::InvalidArgument("agent search needs depth and iterations".into()));
        }
        if !(self.agent_gamma > 0.0 && self.agent_gamma <= 1.0) {
            return Err(Error::InvalidArgument("agent_gamma must be in (0, 1]".into()));
        }
        let (lo, hi) = self.beta1_range;
        if !(lo >= 0.0 && hi >= lo) || self.beta2_ratio < 0.0 {
            return Err(Error::InvalidArgument("temperature prior must be non-negative".into()));
        }
        Ok(())
    }

    /// Every production vector in lexicographic order.
    pub fn production_options(&self) -> Vec<Production> {
        let levels: Vec<u32> = (0..=self.capacity / self.batch).map(|k| k * self.batch).collect();
        let mut out = Vec::new();
        for &a in &levels {
            for &b in &levels {
                for &c in &levels {
                    if a + b + c <= self.capacity {
                        out.push(Production([a, b, c]));
                    }
                }
            }
        }
        out
    }
}

/// Draws a demand schedule: means from `N(2, 0.75)` truncated to `[0, 5]`,
/// standard deviations from `χ²(0.75)`.
pub fn generate_schedule(horizon: usize, rng: &mut SimRng) -> Vec<[DemandDist; PRODUCTS]> {
    let chi = ChiSquared::new(0.75).expect("valid degrees of freedom");
    (0..horizon)
        .map(|_| {
            std::array::from_fn(|_| DemandDist {
                mean: truncated_normal(rng, 2.0, 0.75, 0.0, 5.0),
                sd: chi.sample(rng),
            })
        })
        .collect()
}

pub struct InventoryEnv {
    config: InventoryConfig,
    schedule: Vec<[DemandDist; PRODUCTS]>,
    options: Vec<Production>,
    q_cache: QCache<Production>,
}

impl std::fmt::Debug for InventoryEnv {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InventoryEnv")
            .field("config", &self.config)
            .field("horizon", &self.schedule.len())
            .finish()
    }
}

impl InventoryEnv {
    pub fn new(config: InventoryConfig, schedule: Vec<[DemandDist; PRODUCTS]>) -> Result<Self> {
        config.validate()?;
        if schedule.len() < config.horizon {
            return Err(Error::InvalidArgument(format!(
                "schedule covers {} steps but the horizon is {}",
                schedule.len(),
                config.horizon
            )));
        }
        if schedule.iter().flatten().any(|d| !(d.mean.is_finite() && d.sd >= 0.0)) {
            return Err(Error::InvalidArgument("demand must have finite mean and sd ≥ 0".into()));
        }
        let options = config.production_options();
        let q_cache = QCache::new(config.memo_capacity);
        Ok(Self {
            config,
            schedule,
            options,
            q_cache,
        })
    }

    pub fn generate(config: InventoryConfig, rng: &mut SimRng) -> Result<Self> {
        let schedule = generate_schedule(config.horizon, rng);
        Self::new(config, schedule)
    }

    pub fn config(&self) -> &InventoryConfig {
        &self.config
    }

    pub fn schedule(&self) -> &[[DemandDist; PRODUCTS]] {
        &self.schedule
    }

    pub fn q_cache(&self) -> &QCache<Production> {
        &self.q_cache
    }

    pub fn check_action(&self, action: Production) -> Result<()> {
        if self.options.binary_search(&action).is_err() {
            return Err(Error::IllegalAction(format!(
                "production {:?} must use multiples of {} totalling at most {}",
                action.0, self.config.batch, self.config.capacity
            )));
        }
        Ok(())
    }

    /// Applies `action` against an explicit demand vector.
    pub fn step_with_demand(
        &self,
        state: &InventoryState,
        action: Production,
        demand: [u32; PRODUCTS],
    ) -> Result<InventoryState> {
        self.check_action(action)?;
        let stock = std::array::from_fn(|i| product_step(state.stock[i], action.0[i], demand[i]).stock);
        Ok(InventoryState {
            stock,
            t: state.t + 1,
            demand,
        })
    }

    fn sample_demand(&self, t: usize, rng: &mut SimRng) -> [u32; PRODUCTS] {
        std::array::from_fn(|i| {
            let d = self.schedule[t][i];
            normal(rng, d.mean, d.sd).round().max(0.0) as u32
        })
    }

    pub fn params_digest(omega: &InventoryOmega, theta: &InventoryTheta) -> u64 {
        let mut d = Digest::new(0x1A7);
        for v in omega.profit {
            d = d.push(v.to_bits());
        }
        d.push(omega.storage_cost.to_bits())
            .push(omega.lost_cost.to_bits())
            .push(theta.theta.to_bits())
            .finish()
    }

    fn sample_omega(&self, rng: &mut SimRng) -> InventoryOmega {
        let mut profit: [f64; PRODUCTS] = std::array::from_fn(|_| rng.random::<f64>());
        profit[rng.random_range(0..PRODUCTS)] = 1.0;
        let storage = rand_distr::Beta::new(2.5, 8.0).expect("valid beta");
        let lost = rand_distr::Beta::new(3.0, 3.0).expect("valid beta");
        InventoryOmega {
            profit,
            storage_cost: storage.sample(rng),
            lost_cost: lost.sample(rng),
        }
    }

    fn sample_theta(rng: &mut SimRng) -> f64 {
        truncated_normal(rng, 0.0, 1.5, -3.0, 3.0)
    }

    fn sample_beta1(&self, rng: &mut SimRng) -> f64 {
        let (lo, hi) = self.config.beta1_range;
        if hi > lo {
            rng.random_range(lo..hi)
        } else {
            lo
        }
    }

    /// A simulated agent drawn from the prior.
    pub fn sample_agent(&self, rng: &mut SimRng) -> InventoryParams {
        let omega = self.sample_omega(rng);
        let theta = Self::sample_theta(rng);
        let beta1 = self.sample_beta1(rng);
        ParameterSample::new(
            omega,
            InventoryTheta {
                theta,
                beta1,
                beta2: self.config.beta2_ratio * beta1,
            },
        )
    }

    /// One particle of the assistant's prior.
    pub fn sample_particle(
        &self,
        rng: &mut SimRng,
        bias: BiasBelief,
        temperatures: &TemperatureBelief,
    ) -> InventoryParams {
        let omega = self.sample_omega(rng);
        let theta = match bias {
            BiasBelief::Infer => Self::sample_theta(rng),
            BiasBelief::Assume { theta } => theta,
        };
        let (beta1, beta2) = match temperatures {
            TemperatureBelief::Fixed { beta1, beta2 } => (*beta1, *beta2),
            TemperatureBelief::Prior => {
                let b = self.sample_beta1(rng);
                (b, self.config.beta2_ratio * b)
            }
        };
        ParameterSample::new(omega, InventoryTheta { theta, beta1, beta2 })
    }

    /// Reward-parameter coordinates compared when measuring inference error.
    pub fn omega_features(&self, omega: &InventoryOmega) -> Vec<f64> {
        let mut v = omega.profit.to_vec();
        v.push(omega.storage_cost);
        v.push(omega.lost_cost);
        v
    }

    fn view<'a>(&'a self, omega: &'a InventoryOmega, theta: f64) -> AgentModel<'a> {
        let estimates: Vec<[f64; PRODUCTS]> = self.schedule[..self.config.horizon]
            .iter()
            .map(|step| std::array::from_fn(|i| point_estimate(step[i], theta)))
            .collect();
        let bound = estimates
            .iter()
            .map(|d| (0..PRODUCTS).map(|i| omega.profit[i] * d[i]).sum::<f64>())
            .fold(0.0, f64::max);
        AgentModel {
            env: self,
            omega,
            estimates,
            bound,
        }
    }

    /// Number of internal nodes in the agent's full search tree.
    fn full_tree_expansions(&self) -> usize {
        let b = self.options.len();
        let mut total = 0usize;
        let mut level = 1usize;
        for _ in 0..self.config.bfs_depth.saturating_sub(1) {
            total = total.saturating_add(level);
            level = level.saturating_mul(b);
        }
        total
    }
}

/// The agent's deterministic model: demand equals the point estimate and
/// stock is real-valued.
struct AgentModel<'a> {
    env: &'a InventoryEnv,
    omega: &'a InventoryOmega,
    estimates: Vec<[f64; PRODUCTS]>,
    bound: f64,
}

#[derive(Clone)]
struct Imagined {
    stock: [f64; PRODUCTS],
    t: usize,
}

impl AgentModel<'_> {
    fn product(&self, i: usize, stock: f64, produced: f64, demand: f64) -> (f64, f64) {
        let available = stock + produced;
        let sold = available.min(demand);
        let next = available - sold;
        let lost = demand - sold;
        let o = self.omega;
        (o.profit[i] * sold - o.storage_cost * next - o.lost_cost * lost, next)
    }

    /// Best return over paths of length `1..=depth` from `s`, floored at 0
    /// (the empty path).
    fn best_path(&self, s: &Imagined, depth: usize) -> f64 {
        if depth == 0 || s.t >= self.estimates.len() {
            return 0.0;
        }
        let d = self.estimates[s.t];
        if depth == 1 {
            // Rewards separate by product, so tabulate each product's
            // contribution per production level.
            let levels = (self.env.config.capacity / self.env.config.batch) as usize + 1;
            let mut table = [[0.0; 64]; PRODUCTS];
            for (i, row) in table.iter_mut().enumerate() {
                for (k, slot) in row.iter_mut().enumerate().take(levels) {
                    let p = (k as u32 * self.env.config.batch) as f64;
                    *slot = self.product(i, s.stock[i], p, d[i]).0;
                }
            }
            let batch = self.env.config.batch;
            return self
                .env
                .options
                .iter()
                .map(|a| (0..PRODUCTS).map(|i| table[i][(a.0[i] / batch) as usize]).sum::<f64>())
                .fold(0.0, f64::max);
        }
        let gamma = self.env.config.agent_gamma;
        self.env
            .options
            .iter()
            .map(|&a| {
                let (next, r) = self.step(s, a);
                r + gamma * self.best_path(&next, depth - 1)
            })
            .fold(0.0, f64::max)
    }

    /// Same result as a best-first search that exhausts the tree.
    fn exhaustive_q(&self, root: &Imagined) -> QEstimate<Production> {
        let gamma = self.env.config.agent_gamma;
        let depth = self.env.config.bfs_depth;
        QEstimate::new(
            self.env
                .options
                .iter()
                .map(|&a| {
                    let (next, r) = self.step(root, a);
                    (a, r + gamma * self.best_path(&next, depth - 1))
                })
                .collect(),
        )
    }
}

impl AgentView for AgentModel<'_> {
    type State = Imagined;
    type Action = Production;

    fn actions(&self, s: &Imagined) -> Vec<Production> {
        if s.t >= self.estimates.len() {
            Vec::new()
        } else {
            self.env.options.clone()
        }
    }

    fn step(&self, s: &Imagined, action: Production) -> (Imagined, f64) {
        let d = self.estimates[s.t];
        let mut stock = [0.0; PRODUCTS];
        let mut reward = 0.0;
        for i in 0..PRODUCTS {
            let (r, next) = self.product(i, s.stock[i], f64::from(action.0[i]), d[i]);
            reward += r;
            stock[i] = next;
        }
        (Imagined { stock, t: s.t + 1 }, reward)
    }

    fn discount(&self) -> f64 {
        self.env.config.agent_gamma
    }

    fn reward_bound(&self) -> f64 {
        self.bound
    }
}

impl EnvModel for InventoryEnv {
    type State = InventoryState;
    type Action = Production;
    type Omega = InventoryOmega;

    fn actions(&self, state: &InventoryState) -> Vec<Production> {
        if self.is_terminal(state) {
            Vec::new()
        } else {
            self.options.clone()
        }
    }

    fn transition(&self, state: &InventoryState, action: Production, rng: &mut SimRng) -> InventoryState {
        let demand = self.sample_demand(state.t, rng);
        self.step_with_demand(state, action, demand)
            .expect("planner and agent only choose legal production")
    }

    fn reward(&self, state: &InventoryState, action: Production, next: &InventoryState, omega: &InventoryOmega) -> f64 {
        let mut sold = [0.0; PRODUCTS];
        let mut lost = [0.0; PRODUCTS];
        let mut stock = [0.0; PRODUCTS];
        for i in 0..PRODUCTS {
            let o = product_step(state.stock[i], action.0[i], next.demand[i]);
            sold[i] = f64::from(o.sold);
            lost[i] = f64::from(o.lost);
            stock[i] = f64::from(o.stock);
        }
        step_reward(omega, sold, lost, stock)
    }

    fn discount(&self) -> f64 {
        0.99
    }

    fn start_state(&self, _rng: &mut SimRng) -> InventoryState {
        InventoryState::start()
    }

    /// Keys on stock and time only: the last demand has no effect on the
    /// future.
    fn state_key(&self, state: &InventoryState) -> u64 {
        let mut d = Digest::new(0x1A7_5747).push(state.t as u64);
        for s in state.stock {
            d = d.push(u64::from(s));
        }
        d.finish()
    }

    fn is_terminal(&self, state: &InventoryState) -> bool {
        state.t >= self.config.horizon
    }
}

impl AgentDomain for InventoryEnv {
    type Theta = InventoryTheta;

    fn agent_q(
        &self,
        state: &InventoryState,
        omega: &InventoryOmega,
        theta: &InventoryTheta,
    ) -> Result<Arc<QEstimate<Production>>> {
        if self.is_terminal(state) {
            return Err(Error::EmptyActionSet);
        }
        let key = (self.state_key(state), Self::params_digest(omega, theta));
        self.q_cache.get_or_compute(key, || {
            let view = self.view(omega, theta.theta);
            let root = Imagined {
                stock: state.stock.map(f64::from),
                t: state.t,
            };
            if self.config.bfs_iterations >= self.full_tree_expansions() {
                Ok(view.exhaustive_q(&root))
            } else {
                bfs_q_estimate(&view, &root, self.config.bfs_iterations, self.config.bfs_depth)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn omega() -> InventoryOmega {
        InventoryOmega {
            profit: [1.0, 0.5, 0.5],
            storage_cost: 0.1,
            lost_cost: 0.2,
        }
    }

    fn flat_schedule(horizon: usize, mean: f64, sd: f64) -> Vec<[DemandDist; PRODUCTS]> {
        vec![[DemandDist { mean, sd }; PRODUCTS]; horizon]
    }

    fn env(config: InventoryConfig, seed: u64) -> InventoryEnv {
        InventoryEnv::generate(config, &mut seeded(seed)).unwrap()
    }

    #[test]
    fn eighty_four_production_options() {
        let options = InventoryConfig::desk().production_options();
        assert_eq!(options.len(), 84);
        assert!(options.iter().all(|p| p.0.iter().sum::<u32>() <= 12 && p.0.iter().all(|x| x % 2 == 0)));
        let mut sorted = options.clone();
        sorted.sort();
        assert_eq!(sorted, options);
    }

    #[test]
    fn hand_worked_transition_and_reward() {
        let env = InventoryEnv::new(InventoryConfig::desk(), flat_schedule(20, 2.0, 1.0)).unwrap();
        let s = InventoryState::start();
        let a = Production([4, 0, 0]);
        let next = env.step_with_demand(&s, a, [2, 3, 1]).unwrap();
        assert_eq!(next.stock, [2, 0, 0]);
        assert_eq!(next.t, 1);
        assert!((env.reward(&s, a, &next, &omega()) - 1.0).abs() < 1e-12);

        let idle = env.step_with_demand(&s, Production([0, 0, 0]), [0, 0, 0]).unwrap();
        assert_eq!(env.reward(&s, Production([0, 0, 0]), &idle, &omega()), 0.0);
    }

    #[test]
    fn illegal_production_is_rejected() {
        let env = env(InventoryConfig::desk(), 1);
        let s = InventoryState::start();
        assert!(env.step_with_demand(&s, Production([3, 0, 0]), [0; 3]).is_err());
        assert!(env.step_with_demand(&s, Production([8, 6, 0]), [0; 3]).is_err());
    }

    #[test]
    fn zero_spread_demand_is_deterministic() {
        let env = InventoryEnv::new(InventoryConfig::desk(), flat_schedule(20, 2.4, 0.0)).unwrap();
        let s = InventoryState::start();
        for seed in 0..5 {
            let next = env.transition(&s, Production([2, 2, 2]), &mut seeded(seed));
            assert_eq!(next.demand, [2, 2, 2]);
            assert_eq!(next.stock, [0, 0, 0]);
        }
    }

    #[test]
    fn point_estimates() {
        let d = DemandDist { mean: 2.0, sd: 0.75 };
        assert_eq!(point_estimate(d, 0.0), 2.0);
        assert_eq!(point_estimate(d, 1.0), 2.75);
        assert_eq!(point_estimate(DemandDist { mean: 2.0, sd: 1.0 }, -3.0), 0.0);
    }

    #[test]
    fn schedule_follows_truncated_prior() {
        let schedule = generate_schedule(10_000, &mut seeded(4));
        let means: Vec<f64> = schedule.iter().map(|s| s[0].mean).collect();
        assert!(means.iter().all(|m| (0.0..=5.0).contains(m)));
        // Mean of N(2, 0.75) on [0, 5]: 2 + 0.75 (φ(a) − φ(b)) / (Φ(b) − Φ(a)).
        let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let (a, b) = (-2.0 / 0.75, 3.0 / 0.75);
        let n = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
        use statrs::distribution::ContinuousCDF;
        let expected = 2.0 + 0.75 * (phi(a) - phi(b)) / (n.cdf(b) - n.cdf(a));
        let mean = means.iter().sum::<f64>() / means.len() as f64;
        assert!((mean - expected).abs() < 3.0 * 0.75 / 100.0);
        let sd_mean = schedule.iter().map(|s| s[1].sd).sum::<f64>() / 10_000.0;
        assert!((sd_mean - 0.75).abs() < 0.05, "{sd_mean}");
        assert_eq!(generate_schedule(5, &mut seeded(9)), generate_schedule(5, &mut seeded(9)));
    }

    #[test]
    fn exhaustive_q_matches_best_first_search() {
        for seed in 0..6 {
            let env = env(InventoryConfig::desk(), seed);
            let mut rng = seeded(100 + seed);
            let params = env.sample_agent(&mut rng);
            let view = env.view(&params.omega, params.theta.theta);
            let root = Imagined {
                stock: [1.0, 0.0, 3.0],
                t: (seed as usize * 3) % 20,
            };
            let fast = view.exhaustive_q(&root);
            let bfs = bfs_q_estimate(&view, &root, 300, 2).unwrap();
            assert_eq!(fast.len(), bfs.len());
            for (a, q) in bfs.iter() {
                assert!((fast.get(*a).unwrap() - q).abs() < 1e-9, "seed {seed}");
            }
        }
    }

    #[test]
    fn exhaustive_q_matches_at_depth_three() {
        let config = InventoryConfig {
            capacity: 4,
            bfs_depth: 3,
            ..InventoryConfig::desk()
        };
        let env = env(config, 3);
        let params = env.sample_agent(&mut seeded(5));
        let view = env.view(&params.omega, 0.5);
        let root = Imagined {
            stock: [0.0, 2.0, 0.5],
            t: 18,
        };
        let fast = view.exhaustive_q(&root);
        let bfs = bfs_q_estimate(&view, &root, 10_000, 3).unwrap();
        for (a, q) in bfs.iter() {
            assert!((fast.get(*a).unwrap() - q).abs() < 1e-9);
        }
    }

    #[test]
    fn optimism_raises_preferred_production() {
        let env = InventoryEnv::new(InventoryConfig::desk(), flat_schedule(20, 2.0, 1.0)).unwrap();
        let o = omega();
        let s = InventoryState::start();
        let best = |theta: f64| {
            let q = env
                .agent_q(&s, &o, &InventoryTheta { theta, beta1: 1.0, beta2: 10.0 })
                .unwrap();
            q.argmax().unwrap().0.iter().sum::<u32>()
        };
        assert!(best(2.0) > best(-1.5));
    }

    #[test]
    fn stock_is_conserved() {
        let env = env(InventoryConfig::desk(), 7);
        let mut rng = seeded(8);
        let mut s = InventoryState::start();
        while !env.is_terminal(&s) {
            let a = env.options[rng.random_range(0..env.options.len())];
            let next = env.transition(&s, a, &mut rng);
            for i in 0..PRODUCTS {
                let o = product_step(s.stock[i], a.0[i], next.demand[i]);
                assert_eq!(s.stock[i] + a.0[i], o.sold + next.stock[i]);
                assert!(o.sold <= next.demand[i]);
            }
            s = next;
        }
        assert_eq!(s.t, 20);
        assert!(env.actions(&s).is_empty());
    }

    #[test]
    fn priors_are_in_range() {
        let env = env(InventoryConfig::desk(), 2);
        let mut rng = seeded(3);
        for _ in 0..200 {
            let p = env.sample_agent(&mut rng);
            assert!(p.omega.profit.contains(&1.0));
            assert!(p.omega.profit.iter().all(|v| (0.0..=1.0).contains(v)));
            assert!((0.0..=1.0).contains(&p.omega.storage_cost));
            assert!((-3.0..=3.0).contains(&p.theta.theta));
            assert!((p.theta.beta2 - 10.0 * p.theta.beta1).abs() < 1e-12);
        }
        let fixed = env.sample_particle(&mut rng, BiasBelief::Assume { theta: -1.0 }, &TemperatureBelief::default());
        assert_eq!(fixed.theta.theta, -1.0);
        assert_eq!(fixed.theta.beta1, 2.0);
    }
}
