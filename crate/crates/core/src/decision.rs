//! MDP abstractions shared by every domain, planner and assistance mode.

use std::fmt::Debug;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, SimRng, Stream};

/// A fully observed MDP with a parametric reward family `R_ω`.
///
/// Implementations hold no shared mutable state other than memo tables, and
/// every stochastic method takes its randomness source explicitly, so one
/// model can be driven by several planner workers at once.
pub trait EnvModel: Send + Sync {
    type State: Clone + Debug + Send + Sync;
    type Action: Copy + Eq + Hash + Debug + Send + Sync;
    type Omega: Clone + Debug + Send + Sync;

    /// Legal actions in `state`: non-empty and duplicate-free for every
    /// non-terminal state.
    fn actions(&self, state: &Self::State) -> Vec<Self::Action>;

    fn transition(&self, state: &Self::State, action: Self::Action, rng: &mut SimRng) -> Self::State;

    fn reward(
        &self,
        state: &Self::State,
        action: Self::Action,
        next: &Self::State,
        omega: &Self::Omega,
    ) -> f64;

    fn discount(&self) -> f64;

    fn start_state(&self, rng: &mut SimRng) -> Self::State;

    /// Canonical digest of a state, stable across processes.
    fn state_key(&self, state: &Self::State) -> u64;

    fn is_terminal(&self, _state: &Self::State) -> bool {
        false
    }

    /// The domain's do-nothing action, if it has one.
    fn noop(&self) -> Option<Self::Action> {
        None
    }

    /// Exact next-state distribution, for domains small enough to enumerate.
    fn transition_distribution(
        &self,
        _state: &Self::State,
        _action: Self::Action,
    ) -> Option<Vec<(Self::State, f64)>> {
        None
    }
}

/// A joint `(ω, θ)` hypothesis about the agent: the unit of belief.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSample<O, T> {
    pub omega: O,
    pub theta: T,
}

impl<O, T> ParameterSample<O, T> {
    pub fn new(omega: O, theta: T) -> Self {
        Self { omega, theta }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actor {
    Agent,
    Assistant,
}

/// One environment step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord<S, A> {
    pub step: usize,
    pub actor: Actor,
    pub state: S,
    pub advice: Option<A>,
    pub action: A,
    pub next_state: S,
    pub reward: f64,
    /// `Some(action == advice)` when advice was given, else `None`.
    pub accepted: Option<bool>,
    /// Agent interactions (actions plus answered queries) so far, including
    /// this step.
    pub interactions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<S, A> {
    pub seed: u64,
    pub records: Vec<InteractionRecord<S, A>>,
}

impl<S: PartialEq, A> Trajectory<S, A> {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.reward).collect()
    }

    /// Next-state of record `t` equals the state of record `t + 1`.
    pub fn is_consistent(&self) -> bool {
        self.records
            .windows(2)
            .all(|w| w[0].next_state == w[1].state)
    }
}

/// `Σ_t rewards[t] · gamma^t`.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    let mut discount = 1.0;
    let mut total = 0.0;
    for &r in rewards {
        total += discount * r;
        discount *= gamma;
    }
    total
}

/// Runs `policy` in `env` for `horizon` steps (or until a terminal state).
///
/// Transition randomness for step `t` comes from the environment stream of
/// `seed` at index `t`, and policy randomness from the agent stream, so equal
/// seeds give identical trajectories.
pub fn rollout_episode<E, P>(
    env: &E,
    mut policy: P,
    omega: &E::Omega,
    horizon: usize,
    seed: u64,
) -> Result<Trajectory<E::State, E::Action>>
where
    E: EnvModel,
    E::State: PartialEq,
    P: FnMut(&E::State, &mut SimRng) -> E::Action,
{
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let mut trajectory = Trajectory::new(seed);
    let mut state = env.start_state(&mut stream_rng(seed, Stream::Instance, 0));
    for step in 0..horizon {
        if env.is_terminal(&state) {
            break;
        }
        let action = policy(&state, &mut stream_rng(seed, Stream::Agent, step as u64));
        if !env.actions(&state).contains(&action) {
            return Err(Error::Contract(format!(
                "policy chose {action:?}, which is not legal at step {step}"
            )));
        }
        let next = env.transition(&state, action, &mut stream_rng(seed, Stream::Environment, step as u64));
        let reward = env.reward(&state, action, &next, omega);
        trajectory.records.push(InteractionRecord {
            step,
            actor: Actor::Agent,
            state: state.clone(),
            advice: None,
            action,
            next_state: next.clone(),
            reward,
            accepted: None,
            interactions: step + 1,
        });
        state = next;
    }
    Ok(trajectory)
}

#[cfg(test)]
pub(crate) mod toy {
    //! Tiny enumerable environments shared by unit tests across modules.

    use super::*;
    use rand::Rng;

    /// States `0..n_states`, actions `0..n_actions`, tabular stochastic
    /// transitions and one reward table per ω index.
    #[derive(Debug, Clone)]
    pub struct TabularEnv {
        #[allow(dead_code)]
    pub n_states: usize,
        pub n_actions: usize,
        /// `transitions[s][a]` is a distribution over next states.
        pub transitions: Vec<Vec<Vec<f64>>>,
        /// `rewards[omega][s][a]`, independent of the next state.
        pub rewards: Vec<Vec<Vec<f64>>>,
        pub gamma: f64,
    }

    impl EnvModel for TabularEnv {
        type State = usize;
        type Action = usize;
        type Omega = usize;

        fn actions(&self, _state: &usize) -> Vec<usize> {
            (0..self.n_actions).collect()
        }

        fn transition(&self, state: &usize, action: usize, rng: &mut SimRng) -> usize {
            let u: f64 = rng.random();
            let row = &self.transitions[*state][action];
            let mut acc = 0.0;
            for (next, p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    return next;
                }
            }
            row.len() - 1
        }

        fn reward(&self, state: &usize, action: usize, _next: &usize, omega: &usize) -> f64 {
            self.rewards[*omega][*state][action]
        }

        fn discount(&self) -> f64 {
            self.gamma
        }

        fn start_state(&self, _rng: &mut SimRng) -> usize {
            0
        }

        fn state_key(&self, state: &usize) -> u64 {
            *state as u64
        }

        fn transition_distribution(&self, state: &usize, action: usize) -> Option<Vec<(usize, f64)>> {
            Some(
                self.transitions[*state][action]
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| **p > 0.0)
                    .map(|(s, p)| (s, *p))
                    .collect(),
            )
        }
    }

    /// Temperatures for agents acting in a [`TabularEnv`].
    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct ToyTheta {
        pub beta1: f64,
        pub beta2: f64,
    }

    impl crate::agent::BiasParams for ToyTheta {
        fn beta1(&self) -> f64 {
            self.beta1
        }
        fn beta2(&self) -> f64 {
            self.beta2
        }
    }

    /// Agents judge actions by their immediate reward.
    impl crate::agent::AgentDomain for TabularEnv {
        type Theta = ToyTheta;

        fn agent_q(
            &self,
            state: &usize,
            omega: &usize,
            _theta: &ToyTheta,
        ) -> Result<std::sync::Arc<crate::agent::QEstimate<usize>>> {
            Ok(std::sync::Arc::new(crate::agent::QEstimate::new(
                self.rewards[*omega][*state].iter().copied().enumerate().collect(),
            )))
        }
    }

    /// One state, one action, reward 1 per step.
    pub fn unit_reward_env() -> TabularEnv {
        TabularEnv {
            n_states: 1,
            n_actions: 1,
            transitions: vec![vec![vec![1.0]]],
            rewards: vec![vec![vec![1.0]]],
            gamma: 1.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::toy::*;
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn discounted_return_examples() {
        assert_eq!(discounted_return(&[], 0.9), 0.0);
        assert_eq!(discounted_return(&[1.0, 1.0, 1.0], 1.0), 3.0);
        assert_eq!(discounted_return(&[2.0, 4.0], 0.5), 4.0);
    }

    proptest! {
        #[test]
        fn undiscounted_return_is_plain_sum(rewards in proptest::collection::vec(-1e3f64..1e3, 0..64)) {
            let sum: f64 = rewards.iter().sum();
            prop_assert!((discounted_return(&rewards, 1.0) - sum).abs() <= 1e-9 * (1.0 + sum.abs()));
        }
    }

    #[test]
    fn rollout_rejects_zero_horizon() {
        let env = unit_reward_env();
        assert!(rollout_episode(&env, |_, _| 0, &0, 0, 1).is_err());
    }

    #[test]
    fn rollout_unit_reward_sums_to_horizon() {
        let env = unit_reward_env();
        let traj = rollout_episode(&env, |_, _| 0, &0, 5, 9).unwrap();
        assert_eq!(traj.len(), 5);
        assert_eq!(discounted_return(&traj.rewards(), env.discount()), 5.0);
        assert!(traj.is_consistent());
    }

    #[test]
    fn rollout_is_deterministic_per_seed() {
        let env = TabularEnv {
            n_states: 3,
            n_actions: 2,
            transitions: vec![vec![vec![0.2, 0.5, 0.3]; 2]; 3],
            rewards: vec![vec![vec![0.0, 1.0], vec![2.0, 0.5], vec![1.0, 1.0]]],
            gamma: 0.9,
        };
        let policy = |_: &usize, rng: &mut SimRng| rng.random_range(0..2usize);
        let a = rollout_episode(&env, policy, &0, 40, 123).unwrap();
        let b = rollout_episode(&env, policy, &0, 40, 123).unwrap();
        assert_eq!(a, b);
        assert!(a.is_consistent());
        let c = rollout_episode(&env, policy, &0, 40, 124).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rollout_rejects_illegal_policy_action() {
        let env = unit_reward_env();
        let err = rollout_episode(&env, |_, _| 3, &0, 2, 0).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }
}
