//! Interaction protocols: how agent, assistant, belief and environment are
//! coupled in each assistance mode.
//!
//! Every loop draws its randomness from streams of the run seed indexed by
//! the environment step, so modes run on the same seed see the same
//! instance and the same transition noise at equal step indices.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::agent::{sample_agent_action, AgentDomain, BiasParams};
use crate::belief::{Belief, Coord};
use crate::daytrip::{DaytripEnv, DaytripOmega, DaytripParams, TripAction, TripState};
use crate::decision::{Actor, EnvModel, InteractionRecord, ParameterSample};
use crate::error::{Error, Result};
use crate::inventory::{InventoryEnv, InventoryParams, InventoryState, Production};
use crate::planner::{automation_plan, ghpmcp_plan, ActionSpace, AssistantAction, PlannerConfig};
use crate::rng::{derive_seed, stream_rng, SimRng, Stream};

pub type Params<D> = ParameterSample<<D as EnvModel>::Omega, <D as AgentDomain>::Theta>;

/// Domain hooks the interaction loops and metrics need beyond the agent model.
pub trait AssistDomain:
    AgentDomain<
    State: PartialEq + Serialize + DeserializeOwned,
    Action: Serialize + DeserializeOwned,
    Omega: Serialize + DeserializeOwned,
    Theta: Serialize + DeserializeOwned,
>
{
    /// Value of the design in `state`, for domains where the end product
    /// matters more than the path.
    fn objective(&self, _state: &Self::State, _omega: &Self::Omega) -> Option<f64> {
        None
    }

    fn omega_features(&self, omega: &Self::Omega) -> Vec<f64>;

    /// Named bias and temperature coordinates reported in belief summaries.
    fn theta_features(&self, theta: &Self::Theta) -> Vec<(&'static str, f64)>;

    /// Coordinates of a particle used for the belief-entropy histogram.
    fn belief_coords(&self, params: &Params<Self>) -> Vec<Coord>;

    /// Actions that return `state` to the start design, if the domain allows
    /// free resets.
    fn reset_actions(&self, _state: &Self::State) -> Option<Vec<Self::Action>> {
        None
    }

    /// Why `action` cannot be taken in `state`, if it cannot.
    fn check_action(&self, state: &Self::State, action: Self::Action) -> Result<()> {
        if self.actions(state).contains(&action) {
            Ok(())
        } else {
            Err(Error::IllegalAction(format!("{action:?} is not available in this state")))
        }
    }

    /// Facts about `state` that do not depend on the agent's preferences.
    fn describe(&self, _state: &Self::State) -> Option<serde_json::Value> {
        None
    }
}

/// Domains where the agent can answer "which of these two do you prefer?".
pub trait PreferenceDomain: AssistDomain {
    fn query_candidate(&self, rng: &mut SimRng) -> Self::State;
    fn utility(&self, state: &Self::State, omega: &Self::Omega) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    Aiad,
    AiadAutomation,
    Unassisted,
    IrlAutomation,
    PlAutomation,
    PartialAutomation,
    Oracle,
}

impl ModeKind {
    pub const ALL: [ModeKind; 7] = [
        ModeKind::Aiad,
        ModeKind::AiadAutomation,
        ModeKind::Unassisted,
        ModeKind::IrlAutomation,
        ModeKind::PlAutomation,
        ModeKind::PartialAutomation,
        ModeKind::Oracle,
    ];

    pub fn needs_belief(self) -> bool {
        !matches!(self, ModeKind::Unassisted | ModeKind::Oracle)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModeConfig {
    /// Planner for advice (and for mixed advice/action menus).
    pub planner: PlannerConfig,
    /// Planner used when the assistant acts alone.
    pub automation: PlannerConfig,
    /// Agent interactions (actions taken plus queries answered).
    pub budget: usize,
    /// Cap on environment steps, counting both agent and assistant steps.
    pub max_steps: usize,
    /// Unassisted steps observed before automating.
    pub irl_demos: usize,
    pub pl_queries: usize,
    /// Candidate pairs scored per query.
    pub pl_pool: usize,
}

impl Default for ModeConfig {
    fn default() -> Self {
        Self {
            planner: PlannerConfig::default(),
            automation: PlannerConfig {
                gamma: 0.99,
                max_depth: 3,
                ..PlannerConfig::default()
            },
            budget: 20,
            max_steps: 60,
            irl_demos: 10,
            pl_queries: 10,
            pl_pool: 100,
        }
    }
}

impl ModeConfig {
    pub fn validate(&self) -> Result<()> {
        self.planner.validate()?;
        self.automation.validate()?;
        if self.pl_pool == 0 {
            return Err(Error::InvalidArgument("query pool must be non-empty".into()));
        }
        Ok(())
    }
}

/// Metrics after a given number of agent interactions, including any
/// assistant steps taken before the next interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub interactions: usize,
    pub objective: Option<f64>,
    pub discounted_return: f64,
    pub entropy: Option<f64>,
    pub error: Option<f64>,
    /// Whether the agent followed the advice at this interaction.
    pub accepted: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord<S> {
    pub index: usize,
    pub first: S,
    pub second: S,
    pub chose_first: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput<S, A> {
    pub mode: ModeKind,
    pub records: Vec<InteractionRecord<S, A>>,
    pub queries: Vec<QueryRecord<S>>,
    /// Exactly `budget + 1` points, for 0 through `budget` interactions.
    pub curve: Vec<CurvePoint>,
    pub belief_updates: usize,
}

impl<S, A> RunOutput<S, A> {
    pub fn final_point(&self) -> &CurvePoint {
        self.curve.last().expect("curve has at least one point")
    }
}

#[derive(Debug, Clone, Copy)]
struct BeliefPoint {
    entropy: f64,
    error: f64,
}

/// Shared bookkeeping for every loop.
struct Session<'a, D: AssistDomain> {
    env: &'a D,
    truth: &'a Params<D>,
    cfg: &'a ModeConfig,
    seed: u64,
    state: D::State,
    step: usize,
    interactions: usize,
    /// Steps that do not count toward `max_steps`.
    free_steps: usize,
    records: Vec<InteractionRecord<D::State, D::Action>>,
    queries: Vec<QueryRecord<D::State>>,
    /// Belief metrics after each interaction count; index 0 is the prior.
    belief_points: Vec<Option<BeliefPoint>>,
    belief_updates: usize,
}

impl<'a, D: AssistDomain> Session<'a, D> {
    fn new(env: &'a D, truth: &'a Params<D>, cfg: &'a ModeConfig, seed: u64, belief: Option<&Belief<Params<D>>>) -> Self {
        let state = env.start_state(&mut stream_rng(seed, Stream::Instance, 0));
        let mut s = Self {
            env,
            truth,
            cfg,
            seed,
            state,
            step: 0,
            interactions: 0,
            free_steps: 0,
            records: Vec::new(),
            queries: Vec::new(),
            belief_points: Vec::new(),
            belief_updates: 0,
        };
        s.belief_points.push(belief.map(|b| s.measure(b)));
        s
    }

    fn measure(&self, belief: &Belief<Params<D>>) -> BeliefPoint {
        let truth = self.env.omega_features(&self.truth.omega);
        let mean = belief.posterior_mean(|p| self.env.omega_features(&p.omega));
        let error = truth.iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        BeliefPoint {
            entropy: belief.entropy(|p| self.env.belief_coords(p)),
            error,
        }
    }

    fn out_of_budget(&self) -> bool {
        self.interactions >= self.cfg.budget
    }

    fn out_of_steps(&self) -> bool {
        self.env.is_terminal(&self.state) || self.step - self.free_steps >= self.cfg.max_steps
    }

    fn apply(&mut self, actor: Actor, advice: Option<D::Action>, action: D::Action) {
        let mut rng = stream_rng(self.seed, Stream::Environment, self.step as u64);
        let next = self.env.transition(&self.state, action, &mut rng);
        let reward = self.env.reward(&self.state, action, &next, &self.truth.omega);
        if actor == Actor::Agent {
            self.interactions += 1;
        }
        self.records.push(InteractionRecord {
            step: self.step,
            actor,
            state: self.state.clone(),
            advice,
            action,
            next_state: next.clone(),
            reward,
            accepted: advice.map(|a| a == action),
            interactions: self.interactions,
        });
        self.state = next;
        self.step += 1;
    }

    /// The agent responds to `advice` and the world moves.
    fn agent_step(&mut self, advice: Option<D::Action>, belief: Option<&mut Belief<Params<D>>>) -> Result<()> {
        let mut rng = stream_rng(self.seed, Stream::Agent, self.step as u64);
        let action = sample_agent_action(self.env, &self.state, advice, self.truth, &mut rng)?;
        let point = match belief {
            Some(b) => {
                b.observe(self.env, &self.state, advice, action)?;
                self.belief_updates += 1;
                Some(self.measure(b))
            }
            None => None,
        };
        self.apply(Actor::Agent, advice, action);
        self.belief_points.push(point);
        Ok(())
    }

    fn planner_seed(&self) -> u64 {
        derive_seed(self.seed, Stream::Planner, self.step as u64)
    }

    /// The assistant plans over `space` each step until the budget, the step
    /// cap or the episode runs out, or it chooses to act with the do-nothing
    /// action.
    fn assisted_loop(&mut self, belief: &mut Belief<Params<D>>, space: ActionSpace) -> Result<()> {
        while !self.out_of_budget() && !self.out_of_steps() {
            let plan = ghpmcp_plan(self.env, belief, &self.state, space, &self.cfg.planner, self.planner_seed())?;
            match plan.action {
                AssistantAction::Advise(a) => self.agent_step(Some(a), Some(belief))?,
                AssistantAction::Yield => self.agent_step(None, Some(belief))?,
                AssistantAction::Act(a) => {
                    if Some(a) == self.env.noop() {
                        break;
                    }
                    self.apply(Actor::Assistant, None, a);
                }
            }
        }
        Ok(())
    }

    /// The assistant acts alone with rewards drawn from `belief`.
    fn automate(&mut self, belief: &Belief<Params<D>>) -> Result<()> {
        while !self.out_of_steps() {
            let plan = automation_plan(self.env, belief, &self.state, &self.cfg.automation, self.planner_seed())?;
            if Some(plan.action) == self.env.noop() {
                break;
            }
            self.apply(Actor::Assistant, None, plan.action);
        }
        Ok(())
    }

    fn finish(self, mode: ModeKind) -> RunOutput<D::State, D::Action> {
        let gamma = self.env.discount();
        let start = match self.records.first() {
            Some(r) => r.state.clone(),
            None => self.state.clone(),
        };
        let mut curve = Vec::with_capacity(self.cfg.budget + 1);
        let mut state = start;
        let mut ret = 0.0;
        let mut discount = 1.0;
        let mut next_record = 0;
        let mut belief = self.belief_points[0];
        for k in 0..=self.cfg.budget {
            let mut accepted = None;
            while next_record < self.records.len() && self.records[next_record].interactions <= k {
                let r = &self.records[next_record];
                ret += discount * r.reward;
                discount *= gamma;
                state = r.next_state.clone();
                if r.actor == Actor::Agent && r.interactions == k {
                    accepted = r.accepted;
                }
                next_record += 1;
            }
            if let Some(p) = self.belief_points.get(k) {
                belief = *p;
            }
            curve.push(CurvePoint {
                interactions: k,
                objective: self.env.objective(&state, &self.truth.omega),
                discounted_return: ret,
                entropy: belief.map(|b| b.entropy),
                error: belief.map(|b| b.error),
                accepted,
            });
        }
        RunOutput {
            mode,
            records: self.records,
            queries: self.queries,
            curve,
            belief_updates: self.belief_updates,
        }
    }
}

fn require_belief<P>(mode: ModeKind, belief: Option<Belief<P>>) -> Result<Belief<P>> {
    belief.ok_or_else(|| Error::InvalidArgument(format!("mode {mode:?} needs a belief")))
}

/// Advice only: the assistant recommends, the agent decides.
pub fn run_aiad<D: AssistDomain>(
    env: &D,
    truth: &Params<D>,
    mut belief: Belief<Params<D>>,
    cfg: &ModeConfig,
    seed: u64,
) -> Result<RunOutput<D::State, D::Action>> {
    let mut s = Session::new(env, truth, cfg, seed, Some(&belief));
    s.assisted_loop(&mut belief, ActionSpace::ADVISE)?;
    Ok(s.finish(ModeKind::Aiad))
}

/// Advice plus direct actions on the environment.
pub fn run_aiad_automation<D: AssistDomain>(
    env: &D,
    truth: &Params<D>,
    mut belief: Belief<Params<D>>,
    cfg: &ModeConfig,
    seed: u64,
) -> Result<RunOutput<D::State, D::Action>> {
    let mut s = Session::new(env, truth, cfg, seed, Some(&belief));
    s.assisted_loop(&mut belief, ActionSpace::ADVISE_OR_ACT)?;
    Ok(s.finish(ModeKind::AiadAutomation))
}

pub fn run_unassisted<D: AssistDomain>(
    env: &D,
    truth: &Params<D>,
    cfg: &ModeConfig,
    seed: u64,
) -> Result<RunOutput<D::State, D::Action>> {
    let mut s = Session::new(env, truth, cfg, seed, None);
    while !s.out_of_budget() && !s.out_of_steps() {
        s.agent_step(None, None)?;
    }
    Ok(s.finish(ModeKind::Unassisted))
}

/// Watches `demos` unassisted steps, then automates with the posterior.
/// Domains with free resets go back to the start design first.
pub fn run_irl_automation<D: AssistDomain>(
    env: &D,
    truth: &Params<D>,
    mut belief: Belief<Params<D>>,
    demos: usize,
    cfg: &ModeConfig,
    seed: u64,
) -> Result<RunOutput<D::State, D::Action>> {
    let mut s = Session::new(env, truth, cfg, seed, Some(&belief));
    while s.interactions < demos.min(cfg.budget) && !s.out_of_steps() {
        s.agent_step(None, Some(&mut belief))?;
    }
    if let Some(actions) = env.reset_actions(&s.state) {
        for a in actions {
            s.apply(Actor::Assistant, None, a);
            s.free_steps += 1;
        }
    }
    s.automate(&belief)?;
    Ok(s.finish(ModeKind::IrlAutomation))
}

/// `P(first chosen)` under a two-option Boltzmann choice on utilities.
fn prefer_first(u1: f64, u2: f64, beta: f64) -> f64 {
    let z = beta * (u1 - u2);
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn binary_entropy(p: f64) -> f64 {
    let h = |x: f64| if x > 0.0 { -x * x.ln() } else { 0.0 };
    h(p) + h(1.0 - p)
}

/// Mutual information between the answer to `(a, b)` and the particle.
pub fn query_information_gain<D: PreferenceDomain>(
    env: &D,
    belief: &Belief<Params<D>>,
    a: &D::State,
    b: &D::State,
) -> f64 {
    let mut marginal = 0.0;
    let mut conditional = 0.0;
    for (p, w) in belief.particles().iter().zip(belief.weights()) {
        let q = prefer_first(env.utility(a, &p.omega), env.utility(b, &p.omega), p.theta.beta2());
        marginal += w * q;
        conditional += w * binary_entropy(q);
    }
    (binary_entropy(marginal) - conditional).max(0.0)
}

/// Likelihood of the answer under every particle.
pub fn answer_likelihoods<D: PreferenceDomain>(
    env: &D,
    belief: &Belief<Params<D>>,
    a: &D::State,
    b: &D::State,
    chose_first: bool,
) -> Vec<f64> {
    belief
        .particles()
        .iter()
        .map(|p| {
            let q = prefer_first(env.utility(a, &p.omega), env.utility(b, &p.omega), p.theta.beta2());
            if chose_first {
                q
            } else {
                1.0 - q
            }
        })
        .collect()
}

/// Asks `queries` pairwise comparisons chosen for information gain, then
/// automates with the posterior.
pub fn run_pl_automation<D: PreferenceDomain>(
    env: &D,
    truth: &Params<D>,
    mut belief: Belief<Params<D>>,
    queries: usize,
    cfg: &ModeConfig,
    seed: u64,
) -> Result<RunOutput<D::State, D::Action>> {
    let mut s = Session::new(env, truth, cfg, seed, Some(&belief));
    for q in 0..queries.min(cfg.budget) {
        let mut rng = stream_rng(seed, Stream::Queries, 2 * q as u64);
        let mut best: Option<(f64, D::State, D::State)> = None;
        for _ in 0..cfg.pl_pool {
            let a = env.query_candidate(&mut rng);
            let b = env.query_candidate(&mut rng);
            let gain = query_information_gain(env, &belief, &a, &b);
            if best.as_ref().is_none_or(|(g, _, _)| gain > *g) {
                best = Some((gain, a, b));
            }
        }
        let (_, a, b) = best.expect("pool is non-empty");
        let p = prefer_first(env.utility(&a, &truth.omega), env.utility(&b, &truth.omega), truth.theta.beta2());
        let u: f64 = rand::Rng::random(&mut stream_rng(seed, Stream::Queries, 2 * q as u64 + 1));
        let chose_first = u < p;
        belief.update(&answer_likelihoods(env, &belief, &a, &b, chose_first))?;
        s.belief_updates += 1;
        s.interactions += 1;
        let point = s.measure(&belief);
        s.belief_points.push(Some(point));
        s.queries.push(QueryRecord {
            index: q,
            first: a,
            second: b,
            chose_first,
        });
    }
    s.automate(&belief)?;
    Ok(s.finish(ModeKind::PlAutomation))
}

/// Automates by default but may hand single steps back to the agent.
pub fn run_partial_automation<D: AssistDomain>(
    env: &D,
    truth: &Params<D>,
    mut belief: Belief<Params<D>>,
    cfg: &ModeConfig,
    seed: u64,
) -> Result<RunOutput<D::State, D::Action>> {
    let mut s = Session::new(env, truth, cfg, seed, Some(&belief));
    s.assisted_loop(&mut belief, ActionSpace::ACT_OR_YIELD)?;
    Ok(s.finish(ModeKind::PartialAutomation))
}

/// Automation that knows the true reward parameters.
pub fn run_oracle<D: AssistDomain>(
    env: &D,
    truth: &Params<D>,
    cfg: &ModeConfig,
    seed: u64,
) -> Result<RunOutput<D::State, D::Action>> {
    let belief = Belief::uniform(vec![truth.clone()])?;
    let mut s = Session::new(env, truth, cfg, seed, None);
    s.automate(&belief)?;
    Ok(s.finish(ModeKind::Oracle))
}

/// Dispatches on `mode`. PL falls back to an error for domains without
/// preference queries; use [`run_pl_automation`] directly for those that
/// have them.
pub fn run_mode<D: AssistDomain>(
    mode: ModeKind,
    env: &D,
    truth: &Params<D>,
    belief: Option<Belief<Params<D>>>,
    cfg: &ModeConfig,
    seed: u64,
) -> Result<RunOutput<D::State, D::Action>> {
    match mode {
        ModeKind::Aiad => run_aiad(env, truth, require_belief(mode, belief)?, cfg, seed),
        ModeKind::AiadAutomation => run_aiad_automation(env, truth, require_belief(mode, belief)?, cfg, seed),
        ModeKind::Unassisted => run_unassisted(env, truth, cfg, seed),
        ModeKind::IrlAutomation => {
            run_irl_automation(env, truth, require_belief(mode, belief)?, cfg.irl_demos, cfg, seed)
        }
        ModeKind::PartialAutomation => run_partial_automation(env, truth, require_belief(mode, belief)?, cfg, seed),
        ModeKind::Oracle => run_oracle(env, truth, cfg, seed),
        ModeKind::PlAutomation => Err(Error::InvalidArgument(
            "preference queries are not available in this domain".into(),
        )),
    }
}

impl AssistDomain for DaytripEnv {
    fn objective(&self, state: &TripState, omega: &DaytripOmega) -> Option<f64> {
        Some(DaytripEnv::objective(self, state, omega))
    }

    fn omega_features(&self, omega: &DaytripOmega) -> Vec<f64> {
        DaytripEnv::omega_features(self, omega)
    }

    fn theta_features(&self, theta: &crate::daytrip::DaytripTheta) -> Vec<(&'static str, f64)> {
        vec![("anchoring", f64::from(u8::from(theta.anchoring))), ("beta1", theta.beta1)]
    }

    fn belief_coords(&self, p: &DaytripParams) -> Vec<Coord> {
        let mut v: Vec<Coord> = (0..self.config().n_topics)
            .map(|j| Coord::Discrete(i64::from((p.omega.topics >> j) & 1)))
            .collect();
        v.push(Coord::Continuous(p.omega.mu_c));
        v.push(Coord::Discrete(i64::from(p.theta.anchoring)));
        v.push(Coord::Continuous(p.theta.beta1));
        v
    }

    fn reset_actions(&self, state: &TripState) -> Option<Vec<TripAction>> {
        Some(state.indices().into_iter().map(TripAction::Toggle).collect())
    }

    fn check_action(&self, state: &TripState, action: TripAction) -> Result<()> {
        DaytripEnv::check_action(self, state, action)
    }

    fn describe(&self, state: &TripState) -> Option<serde_json::Value> {
        let it = self.optimal_itinerary(state);
        Some(serde_json::json!({
            "order": it.order,
            "minutes": it.total_minutes(),
            "max_minutes": self.config().max_minutes,
            "cost": self.total_cost(state),
        }))
    }
}

impl PreferenceDomain for DaytripEnv {
    /// A random walk of 5 to 15 legal toggles from the empty trip.
    fn query_candidate(&self, rng: &mut SimRng) -> TripState {
        use rand::Rng;
        let steps = rng.random_range(5..=15);
        let mut state = TripState::empty();
        for _ in 0..steps {
            let moves: Vec<TripAction> = self
                .actions(&state)
                .into_iter()
                .filter(|a| *a != TripAction::Noop)
                .collect();
            if moves.is_empty() {
                break;
            }
            let a = moves[rng.random_range(0..moves.len())];
            state = self.transition(&state, a, rng);
        }
        state
    }

    fn utility(&self, state: &TripState, omega: &DaytripOmega) -> f64 {
        DaytripEnv::objective(self, state, omega)
    }
}

impl AssistDomain for InventoryEnv {
    fn omega_features(&self, omega: &crate::inventory::InventoryOmega) -> Vec<f64> {
        InventoryEnv::omega_features(self, omega)
    }

    fn theta_features(&self, theta: &crate::inventory::InventoryTheta) -> Vec<(&'static str, f64)> {
        vec![("theta", theta.theta), ("beta1", theta.beta1)]
    }

    fn belief_coords(&self, p: &InventoryParams) -> Vec<Coord> {
        let mut v: Vec<Coord> = p.omega.profit.iter().map(|x| Coord::Continuous(*x)).collect();
        v.push(Coord::Continuous(p.omega.storage_cost));
        v.push(Coord::Continuous(p.omega.lost_cost));
        v.push(Coord::Continuous(p.theta.theta));
        v
    }

    fn check_action(&self, state: &InventoryState, action: Production) -> Result<()> {
        if self.is_terminal(state) {
            return Err(Error::IllegalAction("the horizon has been reached".into()));
        }
        InventoryEnv::check_action(self, action)
    }
}

/// Convenience aliases for the concrete domains.
pub type DaytripRun = RunOutput<TripState, TripAction>;
pub type InventoryRun = RunOutput<InventoryState, Production>;
