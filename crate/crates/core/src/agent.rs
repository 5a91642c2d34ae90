//! The Boltzmann-rational agent model `π̂(a | s, a'; θ, ω)`.
//!
//! The agent first picks the best action it can think of (`A₁`, a softmax over
//! its own Q-estimates), then considers switching to the advised action with a
//! logistic switch rule, giving `A₂`. Domains with a do-nothing action add a
//! second switch step in which the agent recommends that action to itself.
//! Q-estimates come from depth-limited best-first search over the agent's
//! (possibly wrong) view of the problem.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt::Debug;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};
use std::sync::{Arc, RwLock};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::decision::{EnvModel, ParameterSample};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Access to the choice temperatures carried by a bias-parameter type.
pub trait BiasParams {
    /// Own-choice temperature `β₁`.
    fn beta1(&self) -> f64;
    /// Switch temperature `β₂`.
    fn beta2(&self) -> f64;
}

/// How the assistant's belief treats the agent's temperatures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TemperatureBelief {
    /// Every particle uses these values.
    Fixed { beta1: f64, beta2: f64 },
    /// Particles draw temperatures from the domain's prior for simulated
    /// agents, so they are inferred along with everything else.
    Prior,
}

impl Default for TemperatureBelief {
    fn default() -> Self {
        TemperatureBelief::Fixed {
            beta1: 2.0,
            beta2: 20.0,
        }
    }
}

/// Q-values for a fixed state under fixed `(θ, ω)`, defined exactly on the
/// actions the agent can see.
#[derive(Debug, Clone, PartialEq)]
pub struct QEstimate<A> {
    entries: Vec<(A, f64)>,
}

impl<A: Copy + Eq> QEstimate<A> {
    pub fn new(entries: Vec<(A, f64)>) -> Self {
        Self { entries }
    }

    pub fn get(&self, action: A) -> Option<f64> {
        self.entries.iter().find(|(a, _)| *a == action).map(|(_, q)| *q)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn actions(&self) -> impl Iterator<Item = A> + '_ {
        self.entries.iter().map(|(a, _)| *a)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|(_, q)| *q)
    }

    pub fn iter(&self) -> impl Iterator<Item = &(A, f64)> {
        self.entries.iter()
    }

    /// Highest-valued action; ties go to the earliest entry.
    pub fn argmax(&self) -> Option<A> {
        let mut best: Option<(A, f64)> = None;
        for &(a, q) in &self.entries {
            if best.is_none_or(|(_, b)| q > b) {
                best = Some((a, q));
            }
        }
        best.map(|(a, _)| a)
    }
}

/// A finite distribution over actions.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution<A> {
    entries: Vec<(A, f64)>,
}

impl<A: Copy + Eq> ActionDistribution<A> {
    pub fn prob(&self, action: A) -> f64 {
        self.entries
            .iter()
            .find(|(a, _)| *a == action)
            .map_or(0.0, |(_, p)| *p)
    }

    pub fn iter(&self) -> impl Iterator<Item = &(A, f64)> {
        self.entries.iter()
    }

    pub fn probs(&self) -> Vec<f64> {
        self.entries.iter().map(|(_, p)| *p).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum()
    }

    pub fn sample(&self, rng: &mut SimRng) -> A {
        let u: f64 = rng.random::<f64>() * self.total();
        let mut acc = 0.0;
        let mut last = self.entries[0].0;
        for &(a, p) in &self.entries {
            if p <= 0.0 {
                continue;
            }
            acc += p;
            last = a;
            if u < acc {
                return a;
            }
        }
        last
    }
}

/// Choice rule `p(a) ∝ prior(a) · exp(β q(a))`, stabilized by subtracting the
/// maximum utility. `prior` is aligned with the entries of `q`; `None` means
/// uniform.
pub fn boltzmann_distribution<A: Copy + Eq>(
    q: &QEstimate<A>,
    prior: Option<&[f64]>,
    beta: f64,
) -> Result<ActionDistribution<A>> {
    if q.is_empty() {
        return Err(Error::EmptyActionSet);
    }
    if !(beta >= 0.0) {
        return Err(Error::InvalidArgument(format!("temperature {beta} is negative")));
    }
    if let Some(prior) = prior {
        if prior.len() != q.len() {
            return Err(Error::InvalidArgument("prior length differs from action count".into()));
        }
        if prior.iter().any(|p| !(*p >= 0.0)) || prior.iter().all(|p| *p == 0.0) {
            return Err(Error::InvalidArgument(
                "prior must be non-negative and not all zero".into(),
            ));
        }
    }
    let max_q = q.values().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = q
        .values()
        .enumerate()
        .map(|(i, v)| {
            let p = prior.map_or(1.0, |p| p[i]);
            let scaled = if beta == 0.0 { 0.0 } else { beta * (v - max_q) };
            p * scaled.exp()
        })
        .collect();
    let z: f64 = weights.iter().sum();
    Ok(ActionDistribution {
        entries: q.actions().zip(weights.iter().map(|w| w / z)).collect(),
    })
}

/// The agent's own pick, `A₁`, with the uniform action prior.
pub fn own_choice_distribution<A: Copy + Eq>(
    q: &QEstimate<A>,
    beta1: f64,
) -> Result<ActionDistribution<A>> {
    boltzmann_distribution(q, None, beta1)
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Probability of switching from an own choice worth `q_own` to an advised
/// action worth `q_advised`. An advised action the agent cannot see has value
/// `-∞` and is never taken.
pub fn switch_probability(q_own: f64, q_advised: f64, beta2: f64) -> f64 {
    if q_advised == f64::NEG_INFINITY {
        return 0.0;
    }
    if beta2 == 0.0 {
        return 0.5;
    }
    logistic(beta2 * (q_advised - q_own))
}

/// Moves mass from every other action towards `target` with the switch rule.
fn switch_towards<A: Copy + Eq>(
    dist: &mut ActionDistribution<A>,
    q: &QEstimate<A>,
    target: A,
    beta2: f64,
) {
    let Some(q_target) = q.get(target) else {
        return;
    };
    let Some(target_idx) = dist.entries.iter().position(|(a, _)| *a == target) else {
        return;
    };
    let mut moved = 0.0;
    for (i, (a, p)) in dist.entries.iter_mut().enumerate() {
        if i == target_idx {
            continue;
        }
        let q_own = q.get(*a).unwrap_or(f64::NEG_INFINITY);
        let s = switch_probability(q_own, q_target, beta2);
        moved += s * *p;
        *p *= 1.0 - s;
    }
    dist.entries[target_idx].1 += moved;
}

/// The agent policy after hearing `advice` (`A₂`), followed by the
/// self-recommendation of `noop` when the domain has one.
///
/// Advice outside the agent-visible set leaves `A₁` unchanged.
pub fn advised_policy<A: Copy + Eq>(
    q: &QEstimate<A>,
    advice: Option<A>,
    beta1: f64,
    beta2: f64,
    noop: Option<A>,
) -> Result<ActionDistribution<A>> {
    let mut dist = own_choice_distribution(q, beta1)?;
    if let Some(advice) = advice {
        switch_towards(&mut dist, q, advice, beta2);
    }
    if let Some(noop) = noop {
        switch_towards(&mut dist, q, noop, beta2);
    }
    Ok(dist)
}

/// A deterministic model `Ê` of the problem as the agent sees it, with the
/// agent's reward parameters already bound.
pub trait AgentView {
    type State: Clone;
    type Action: Copy + Eq;

    fn actions(&self, state: &Self::State) -> Vec<Self::Action>;

    /// Next state and reward.
    fn step(&self, state: &Self::State, action: Self::Action) -> (Self::State, f64);

    fn discount(&self) -> f64;

    /// Upper bound on any single-step reward; makes the frontier priority
    /// optimistic.
    fn reward_bound(&self) -> f64;
}

struct Frontier<S> {
    priority: f64,
    seq: u64,
    state: S,
    depth: usize,
    value: f64,
    root_action: usize,
}

impl<S> PartialEq for Frontier<S> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<S> Eq for Frontier<S> {}
impl<S> PartialOrd for Frontier<S> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<S> Ord for Frontier<S> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Depth-limited best-first search over `view` from `root`.
///
/// One iteration expands one node (generating all its children). The node
/// expanded next is the frontier node with the highest optimistic value:
/// accumulated discounted reward plus `reward_bound` for every step left to
/// the depth limit. The Q-value of a root action is the best discounted
/// return found anywhere beneath it.
pub fn bfs_q_estimate<V: AgentView>(
    view: &V,
    root: &V::State,
    iterations: usize,
    depth_limit: usize,
) -> Result<QEstimate<V::Action>> {
    if depth_limit == 0 || iterations == 0 {
        return Err(Error::InvalidArgument("search needs depth and iterations".into()));
    }
    let root_actions = view.actions(root);
    if root_actions.is_empty() {
        return Err(Error::EmptyActionSet);
    }
    let gamma = view.discount();
    let bound = view.reward_bound().max(0.0);
    // optimism[d] = bound · Σ_{k=d}^{depth_limit-1} γ^k
    let mut optimism = vec![0.0; depth_limit + 1];
    for d in (0..depth_limit).rev() {
        optimism[d] = optimism[d + 1] + bound * gamma.powi(d as i32);
    }

    let mut best = Vec::with_capacity(root_actions.len());
    let mut frontier = BinaryHeap::new();
    let mut seq = 0u64;
    for (i, &a) in root_actions.iter().enumerate() {
        let (next, r) = view.step(root, a);
        best.push(r);
        if depth_limit > 1 {
            frontier.push(Frontier {
                priority: r + optimism[1],
                seq,
                state: next,
                depth: 1,
                value: r,
                root_action: i,
            });
            seq += 1;
        }
    }

    for _ in 1..iterations {
        let Some(node) = frontier.pop() else {
            break;
        };
        let discount = gamma.powi(node.depth as i32);
        for a in view.actions(&node.state) {
            let (next, r) = view.step(&node.state, a);
            let value = node.value + discount * r;
            if value > best[node.root_action] {
                best[node.root_action] = value;
            }
            let depth = node.depth + 1;
            if depth < depth_limit {
                frontier.push(Frontier {
                    priority: value + optimism[depth],
                    seq,
                    state: next,
                    depth,
                    value,
                    root_action: node.root_action,
                });
                seq += 1;
            }
        }
    }

    Ok(QEstimate::new(root_actions.into_iter().zip(best).collect()))
}

/// Memo for agent Q-estimates keyed by `(state digest, parameter digest)`.
///
/// When full the table is cleared wholesale; estimates are pure functions of
/// their key so eviction never changes results.
pub struct QCache<A> {
    map: RwLock<HashMap<(u64, u64), Arc<QEstimate<A>>>>,
    capacity: usize,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl<A> std::fmt::Debug for QCache<A> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("QCache")
            .field("capacity", &self.capacity)
            .field("hits", &self.hits.load(AtomicOrdering::Relaxed))
            .field("misses", &self.misses.load(AtomicOrdering::Relaxed))
            .finish()
    }
}

impl<A> QCache<A> {
    pub fn new(capacity: usize) -> Self {
        Self {
            map: RwLock::new(HashMap::new()),
            capacity: capacity.max(1),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn get_or_compute<F>(&self, key: (u64, u64), compute: F) -> Result<Arc<QEstimate<A>>>
    where
        F: FnOnce() -> Result<QEstimate<A>>,
    {
        if let Some(q) = self.map.read().unwrap().get(&key) {
            self.hits.fetch_add(1, AtomicOrdering::Relaxed);
            return Ok(Arc::clone(q));
        }
        self.misses.fetch_add(1, AtomicOrdering::Relaxed);
        let q = Arc::new(compute()?);
        let mut map = self.map.write().unwrap();
        if map.len() >= self.capacity {
            map.clear();
        }
        map.insert(key, Arc::clone(&q));
        Ok(q)
    }

    pub fn len(&self) -> usize {
        self.map.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stats(&self) -> (u64, u64) {
        (
            self.hits.load(AtomicOrdering::Relaxed),
            self.misses.load(AtomicOrdering::Relaxed),
        )
    }

    pub fn clear(&self) {
        self.map.write().unwrap().clear();
    }
}

/// A domain whose agents follow the Boltzmann agent model.
pub trait AgentDomain: EnvModel {
    type Theta: BiasParams + Clone + Debug + Send + Sync;

    /// `Q̂(s, ·; θ, ω)` over the actions visible to an agent with these
    /// parameters. Always a subset of `actions(state)`.
    fn agent_q(
        &self,
        state: &Self::State,
        omega: &Self::Omega,
        theta: &Self::Theta,
    ) -> Result<Arc<QEstimate<Self::Action>>>;
}

/// `π̂(· | s, advice; θ, ω)`. Advice, when given, must be a legal environment
/// action.
pub fn agent_policy<D: AgentDomain>(
    env: &D,
    state: &D::State,
    advice: Option<D::Action>,
    params: &ParameterSample<D::Omega, D::Theta>,
) -> Result<ActionDistribution<D::Action>> {
    if let Some(advice) = advice {
        if !env.actions(state).contains(&advice) {
            return Err(Error::IllegalAction(format!(
                "advice {advice:?} is not a legal action"
            )));
        }
    }
    agent_policy_unchecked(env, state, advice, params)
}

pub(crate) fn agent_policy_unchecked<D: AgentDomain>(
    env: &D,
    state: &D::State,
    advice: Option<D::Action>,
    params: &ParameterSample<D::Omega, D::Theta>,
) -> Result<ActionDistribution<D::Action>> {
    let q = env.agent_q(state, &params.omega, &params.theta)?;
    advised_policy(
        &q,
        advice,
        params.theta.beta1(),
        params.theta.beta2(),
        env.noop(),
    )
}

/// Draws the agent's response to `advice`.
pub fn sample_agent_action<D: AgentDomain>(
    env: &D,
    state: &D::State,
    advice: Option<D::Action>,
    params: &ParameterSample<D::Omega, D::Theta>,
    rng: &mut SimRng,
) -> Result<D::Action> {
    Ok(agent_policy(env, state, advice, params)?.sample(rng))
}

/// One generative step of the assisted system: the agent responds to
/// `advice`, then the environment moves.
pub fn sample_advised_transition<D: AgentDomain>(
    env: &D,
    state: &D::State,
    advice: Option<D::Action>,
    params: &ParameterSample<D::Omega, D::Theta>,
    rng: &mut SimRng,
) -> Result<(D::Action, D::State)> {
    let action = sample_agent_action(env, state, advice, params, rng)?;
    let next = env.transition(state, action, rng);
    Ok((action, next))
}

/// Exact next-state distribution `Σ_a π̂(a | s, advice) T(s' | s, a)` for
/// domains that can enumerate their transitions. Returns `None` otherwise.
pub fn advised_transition_distribution<D>(
    env: &D,
    state: &D::State,
    advice: Option<D::Action>,
    params: &ParameterSample<D::Omega, D::Theta>,
) -> Result<Option<Vec<(D::State, f64)>>>
where
    D: AgentDomain,
    D::State: PartialEq,
{
    let policy = agent_policy(env, state, advice, params)?;
    let mut out: Vec<(D::State, f64)> = Vec::new();
    for &(action, p) in policy.iter() {
        if p == 0.0 {
            continue;
        }
        let Some(outcomes) = env.transition_distribution(state, action) else {
            return Ok(None);
        };
        for (next, t) in outcomes {
            match out.iter_mut().find(|(s, _)| *s == next) {
                Some((_, mass)) => *mass += p * t,
                None => out.push((next, p * t)),
            }
        }
    }
    Ok(Some(out))
}
