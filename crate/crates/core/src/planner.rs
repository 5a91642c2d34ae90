//! Monte Carlo tree search for the assistant.
//!
//! [`ghpmcp_plan`] searches the assistant's hidden-parameter MDP: every
//! iteration draws one `(ω, θ)` hypothesis from the belief and simulates it
//! down a single shared tree whose nodes are keyed by history. Advice is
//! simulated by sampling the agent's response and then the environment.
//! [`automation_plan`] is the same search restricted to direct actions, with
//! only the reward parameters drawn from the belief.

use std::collections::HashMap;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::agent::{agent_policy_unchecked, AgentDomain};
use crate::belief::Belief;
use crate::decision::{EnvModel, ParameterSample};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Digest, SimRng, Stream};

/// What the assistant can do in one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssistantAction<A> {
    /// Recommend an action; the agent decides what to do.
    Advise(A),
    /// Change the environment directly.
    Act(A),
    /// Let the agent act unassisted for one step.
    Yield,
}

impl<A: Copy> AssistantAction<A> {
    pub fn env_action(&self) -> Option<A> {
        match self {
            AssistantAction::Advise(a) | AssistantAction::Act(a) => Some(*a),
            AssistantAction::Yield => None,
        }
    }
}

/// Which kinds of assistant actions are on the menu.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpace {
    pub advise: bool,
    pub act: bool,
    pub yield_control: bool,
}

impl ActionSpace {
    pub const ADVISE: Self = Self {
        advise: true,
        act: false,
        yield_control: false,
    };
    pub const ADVISE_OR_ACT: Self = Self {
        advise: true,
        act: true,
        yield_control: false,
    };
    pub const ACT: Self = Self {
        advise: false,
        act: true,
        yield_control: false,
    };
    pub const ACT_OR_YIELD: Self = Self {
        advise: false,
        act: true,
        yield_control: true,
    };

    /// Assistant actions available in `state`, advice first, then direct
    /// actions, then yield.
    pub fn enumerate<E: EnvModel>(&self, env: &E, state: &E::State) -> Vec<AssistantAction<E::Action>> {
        let env_actions = env.actions(state);
        let mut out = Vec::new();
        if self.advise {
            out.extend(env_actions.iter().map(|a| AssistantAction::Advise(*a)));
        }
        if self.act {
            out.extend(env_actions.iter().map(|a| AssistantAction::Act(*a)));
        }
        if self.yield_control {
            out.push(AssistantAction::Yield);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub gamma: f64,
    pub max_depth: usize,
    pub iterations: usize,
    /// UCT exploration constant `c`.
    pub exploration: f64,
    /// Number of particles drawn from the belief at the start of a planning
    /// call and cycled through; `None` draws from the full belief each
    /// iteration.
    pub subsample: Option<usize>,
    /// Draw a fresh particle from the subsample every iteration instead of
    /// cycling in order.
    pub redraw_each_iteration: bool,
    /// Independent root-parallel trees whose root statistics are merged.
    pub workers: usize,
    /// Stop early once this much wall-clock time has passed (after every root
    /// action has been tried).
    pub time_limit_ms: Option<u64>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            max_depth: 2,
            iterations: 10_000,
            exploration: 0.1,
            subsample: None,
            redraw_each_iteration: false,
            workers: 1,
            time_limit_ms: None,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidArgument("gamma must be in (0, 1]".into()));
        }
        if self.max_depth == 0 || self.iterations == 0 || self.workers == 0 {
            return Err(Error::InvalidArgument(
                "depth, iterations and workers must be positive".into(),
            ));
        }
        if !(self.exploration >= 0.0) {
            return Err(Error::InvalidArgument("exploration must be non-negative".into()));
        }
        if self.subsample == Some(0) {
            return Err(Error::InvalidArgument("subsample size must be positive".into()));
        }
        Ok(())
    }
}

/// Statistics of one root action after planning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootStat<X> {
    pub action: X,
    pub visits: u64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOutcome<X> {
    pub action: X,
    pub root: Vec<RootStat<X>>,
    pub iterations: usize,
    pub elapsed_ms: f64,
}

/// UCT choice among `counts`/`q`: untried actions first, then the highest
/// `q + c·√(ln N / n_a)`; ties go to the lowest index.
pub fn uct_select(visits: u64, counts: &[u64], q: &[f64], c: f64) -> usize {
    if let Some(i) = counts.iter().position(|n| *n == 0) {
        return i;
    }
    let ln_n = (visits.max(1) as f64).ln();
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, (n, v)) in counts.iter().zip(q).enumerate() {
        let score = v + c * (ln_n / *n as f64).sqrt();
        if score > best_score {
            best = i;
            best_score = score;
        }
    }
    best
}

#[derive(Debug, Clone)]
struct Node<X> {
    visits: u64,
    actions: Vec<X>,
    counts: Vec<u64>,
    q: Vec<f64>,
}

impl<X> Node<X> {
    fn new(actions: Vec<X>) -> Self {
        let n = actions.len();
        Self {
            visits: 0,
            actions,
            counts: vec![0; n],
            q: vec![0.0; n],
        }
    }
}

/// A generative model for tree search: the action menu of a state and one
/// sampled step under a given particle.
trait SearchModel {
    type State;
    type X: Copy;

    fn menu(&self, state: &Self::State) -> Vec<Self::X>;
    fn is_terminal(&self, state: &Self::State) -> bool;
    fn state_key(&self, state: &Self::State) -> u64;
    fn step(
        &self,
        state: &Self::State,
        x: Self::X,
        particle: usize,
        rng: &mut SimRng,
    ) -> Result<Step<Self::State>>;
    fn leaf_value(&self, state: &Self::State, particle: usize) -> f64;
}

struct Step<S> {
    next: S,
    reward: f64,
    /// Digest of what the assistant observes besides the next state: the
    /// agent's chosen action.
    observation: u64,
}

fn action_digest<A: Hash>(action: &A) -> u64 {
    let mut h = DefaultHasher::new();
    action.hash(&mut h);
    h.finish()
}

struct Tree<X> {
    nodes: HashMap<u64, Node<X>>,
}

fn simulate<M: SearchModel>(
    model: &M,
    tree: &mut Tree<M::X>,
    cfg: &PlannerConfig,
    history: u64,
    state: &M::State,
    particle: usize,
    depth: usize,
    rng: &mut SimRng,
) -> Result<f64> {
    if model.is_terminal(state) {
        return Ok(0.0);
    }
    if !tree.nodes.contains_key(&history) {
        let menu = model.menu(state);
        if menu.is_empty() {
            return Err(Error::EmptyActionSet);
        }
        tree.nodes.insert(history, Node::new(menu));
    }
    let (ai, x, untried) = {
        let node = &tree.nodes[&history];
        let ai = uct_select(node.visits, &node.counts, &node.q, cfg.exploration);
        (ai, node.actions[ai], node.counts[ai] == 0)
    };
    let Step {
        next,
        reward,
        observation,
    } = model.step(state, x, particle, rng)?;
    let value = if untried || depth + 1 >= cfg.max_depth {
        reward + cfg.gamma * model.leaf_value(&next, particle)
    } else {
        let child = Digest::new(history)
            .push(ai as u64)
            .push(observation)
            .push(model.state_key(&next))
            .finish();
        reward + cfg.gamma * simulate(model, tree, cfg, child, &next, particle, depth + 1, rng)?
    };
    let node = tree.nodes.get_mut(&history).expect("node inserted above");
    node.visits += 1;
    node.counts[ai] += 1;
    node.q[ai] += (value - node.q[ai]) / node.counts[ai] as f64;
    Ok(value)
}

/// Runs one tree and returns the root node's statistics.
fn search_tree<M: SearchModel>(
    model: &M,
    root: &M::State,
    cfg: &PlannerConfig,
    iterations: usize,
    mut draw_particle: impl FnMut(usize, &mut SimRng) -> usize,
    rng: &mut SimRng,
    started: Instant,
) -> Result<(Node<M::X>, usize)> {
    let root_key = Digest::default().push(model.state_key(root)).finish();
    let mut tree = Tree {
        nodes: HashMap::new(),
    };
    let limit = cfg.time_limit_ms.map(Duration::from_millis);
    let mut done = 0;
    for i in 0..iterations {
        let particle = draw_particle(i, rng);
        simulate(model, &mut tree, cfg, root_key, root, particle, 0, rng)?;
        done += 1;
        if let Some(limit) = limit {
            if i % 32 == 31 && started.elapsed() >= limit {
                let node = &tree.nodes[&root_key];
                if node.counts.iter().all(|n| *n > 0) {
                    break;
                }
            }
        }
    }
    let node = tree.nodes.remove(&root_key).ok_or(Error::EmptyActionSet)?;
    Ok((node, done))
}

fn run_search<M, P>(
    model: &M,
    belief: &Belief<P>,
    root: &M::State,
    cfg: &PlannerConfig,
    seed: u64,
) -> Result<PlanOutcome<M::X>>
where
    M: SearchModel + Sync,
    M::State: Sync,
    M::X: Send + Sync,
    P: Sync,
{
    cfg.validate()?;
    if model.is_terminal(root) {
        return Err(Error::InvalidArgument("cannot plan from a terminal state".into()));
    }
    let menu = model.menu(root);
    if menu.is_empty() {
        return Err(Error::EmptyActionSet);
    }
    if cfg.iterations < menu.len() {
        return Err(Error::InvalidArgument(format!(
            "{} iterations cannot try all {} root actions",
            cfg.iterations,
            menu.len()
        )));
    }
    let started = Instant::now();
    let workers = cfg.workers.min(cfg.iterations / menu.len()).max(1);

    let run_worker = |w: usize| -> Result<(Node<M::X>, usize)> {
        let mut rng = stream_rng(seed, Stream::Planner, w as u64);
        let share = cfg.iterations / workers + usize::from(w < cfg.iterations % workers);
        let pool = match cfg.subsample {
            Some(m) => belief.subsample(&mut stream_rng(seed, Stream::Subsample, w as u64), m),
            None => Vec::new(),
        };
        let redraw = cfg.redraw_each_iteration;
        let draw = |i: usize, rng: &mut SimRng| -> usize {
            if pool.is_empty() {
                belief.sample_index(rng)
            } else if redraw {
                pool[rand::Rng::random_range(rng, 0..pool.len())]
            } else {
                pool[i % pool.len()]
            }
        };
        search_tree(model, root, cfg, share, draw, &mut rng, started)
    };

    let results: Vec<Result<(Node<M::X>, usize)>> = if workers == 1 {
        vec![run_worker(0)]
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|w| scope.spawn(move || run_worker(w)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("planner worker panicked"))
                .collect()
        })
    };

    let mut merged: Option<Node<M::X>> = None;
    let mut iterations = 0;
    for r in results {
        let (node, done) = r?;
        iterations += done;
        match merged.as_mut() {
            None => merged = Some(node),
            Some(m) => {
                for i in 0..m.actions.len() {
                    let total = m.counts[i] + node.counts[i];
                    if total > 0 {
                        m.q[i] = (m.q[i] * m.counts[i] as f64 + node.q[i] * node.counts[i] as f64)
                            / total as f64;
                    }
                    m.counts[i] = total;
                }
                m.visits += node.visits;
            }
        }
    }
    let root_node = merged.expect("at least one worker");
    let best = uct_select(root_node.visits, &root_node.counts, &root_node.q, 0.0);
    let root_stats = root_node
        .actions
        .iter()
        .zip(&root_node.counts)
        .zip(&root_node.q)
        .map(|((a, n), q)| RootStat {
            action: *a,
            visits: *n,
            q: *q,
        })
        .collect();
    Ok(PlanOutcome {
        action: root_node.actions[best],
        root: root_stats,
        iterations,
        elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

type LeafFn<'a, S, P> = Option<&'a (dyn Fn(&S, &P) -> f64 + Sync)>;

struct AssistModel<'a, D: AgentDomain> {
    env: &'a D,
    particles: &'a [ParameterSample<D::Omega, D::Theta>],
    space: ActionSpace,
    leaf: LeafFn<'a, D::State, ParameterSample<D::Omega, D::Theta>>,
}

impl<D: AgentDomain> SearchModel for AssistModel<'_, D> {
    type State = D::State;
    type X = AssistantAction<D::Action>;

    fn menu(&self, state: &D::State) -> Vec<Self::X> {
        self.space.enumerate(self.env, state)
    }

    fn is_terminal(&self, state: &D::State) -> bool {
        self.env.is_terminal(state)
    }

    fn state_key(&self, state: &D::State) -> u64 {
        self.env.state_key(state)
    }

    fn step(
        &self,
        state: &D::State,
        x: Self::X,
        particle: usize,
        rng: &mut SimRng,
    ) -> Result<Step<D::State>> {
        let params = &self.particles[particle];
        let action = match x {
            AssistantAction::Act(a) => a,
            AssistantAction::Advise(a) => {
                agent_policy_unchecked(self.env, state, Some(a), params)?.sample(rng)
            }
            AssistantAction::Yield => agent_policy_unchecked(self.env, state, None, params)?.sample(rng),
        };
        let next = self.env.transition(state, action, rng);
        let reward = self.env.reward(state, action, &next, &params.omega);
        Ok(Step {
            next,
            reward,
            observation: action_digest(&action),
        })
    }

    fn leaf_value(&self, state: &D::State, particle: usize) -> f64 {
        self.leaf.map_or(0.0, |f| f(state, &self.particles[particle]))
    }
}

/// Chooses the assistant's next action by root-sampling tree search over the
/// belief.
pub fn ghpmcp_plan<D: AgentDomain>(
    env: &D,
    belief: &Belief<ParameterSample<D::Omega, D::Theta>>,
    state: &D::State,
    space: ActionSpace,
    cfg: &PlannerConfig,
    seed: u64,
) -> Result<PlanOutcome<AssistantAction<D::Action>>> {
    ghpmcp_plan_with_leaf(env, belief, state, space, cfg, seed, None)
}

/// [`ghpmcp_plan`] with a leaf-value estimator in place of zero.
pub fn ghpmcp_plan_with_leaf<D: AgentDomain>(
    env: &D,
    belief: &Belief<ParameterSample<D::Omega, D::Theta>>,
    state: &D::State,
    space: ActionSpace,
    cfg: &PlannerConfig,
    seed: u64,
    leaf: LeafFn<'_, D::State, ParameterSample<D::Omega, D::Theta>>,
) -> Result<PlanOutcome<AssistantAction<D::Action>>> {
    let model = AssistModel {
        env,
        particles: belief.particles(),
        space,
        leaf,
    };
    run_search(&model, belief, state, cfg, seed)
}

struct AutomationModel<'a, E: EnvModel, T> {
    env: &'a E,
    particles: &'a [ParameterSample<E::Omega, T>],
}

impl<E: EnvModel, T> SearchModel for AutomationModel<'_, E, T> {
    type State = E::State;
    type X = E::Action;

    fn menu(&self, state: &E::State) -> Vec<E::Action> {
        self.env.actions(state)
    }

    fn is_terminal(&self, state: &E::State) -> bool {
        self.env.is_terminal(state)
    }

    fn state_key(&self, state: &E::State) -> u64 {
        self.env.state_key(state)
    }

    fn step(
        &self,
        state: &E::State,
        action: E::Action,
        particle: usize,
        rng: &mut SimRng,
    ) -> Result<Step<E::State>> {
        let next = self.env.transition(state, action, rng);
        let reward = self
            .env
            .reward(state, action, &next, &self.particles[particle].omega);
        // The tree action is the environment action; nothing more is seen.
        Ok(Step {
            next,
            reward,
            observation: 0,
        })
    }

    fn leaf_value(&self, _state: &E::State, _particle: usize) -> f64 {
        0.0
    }
}

/// Plain MCTS acting directly in the environment, with the reward of each
/// iteration drawn from the belief's reward parameters.
pub fn automation_plan<E, T>(
    env: &E,
    belief: &Belief<ParameterSample<E::Omega, T>>,
    state: &E::State,
    cfg: &PlannerConfig,
    seed: u64,
) -> Result<PlanOutcome<E::Action>>
where
    E: EnvModel,
    T: Sync,
{
    let model = AutomationModel {
        env,
        particles: belief.particles(),
    };
    run_search(&model, belief, state, cfg, seed)
}
