//! Live assisted episodes: a real agent takes the actions, the assistant
//! keeps a belief about them and offers advice before each step.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::belief::Belief;
use crate::daytrip::DaytripEnv;
use crate::decision::{Actor, InteractionRecord};
use crate::error::{Error, Result};
use crate::harness::spec::{BiasAssumption, DomainKind, ExperimentSpec, Preset};
use crate::inventory::InventoryEnv;
use crate::modes::{AssistDomain, Params};
use crate::planner::{ghpmcp_plan, ActionSpace, AssistantAction, PlannerConfig};
use crate::rng::{derive_seed, stream_rng, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub domain: DomainKind,
    #[serde(default = "desk")]
    pub preset: Preset,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub particles: Option<usize>,
    /// Planner fields overriding the interactive defaults.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planner: Option<Value>,
    #[serde(default)]
    pub bias: BiasAssumption,
}

fn desk() -> Preset {
    Preset::Desk
}

/// Iteration budget and wall-clock cap for advice in live sessions.
pub const INTERACTIVE_ITERATIONS: usize = 5_000;
pub const INTERACTIVE_TIME_LIMIT_MS: u64 = 2_000;

impl SessionConfig {
    /// The advice planner: the preset's, cut to interactive latency, with
    /// any overrides applied.
    pub fn planner_config(&self) -> Result<PlannerConfig> {
        let mut base = ExperimentSpec::preset(self.domain, self.preset).settings.planner;
        base.iterations = base.iterations.min(INTERACTIVE_ITERATIONS);
        base.time_limit_ms = Some(INTERACTIVE_TIME_LIMIT_MS);
        let Some(overrides) = &self.planner else {
            return Ok(base);
        };
        let Value::Object(fields) = overrides else {
            return Err(Error::InvalidArgument("planner overrides must be an object".into()));
        };
        let mut merged = serde_json::to_value(base)?;
        for (k, v) in fields {
            merged[k] = v.clone();
        }
        let planner: PlannerConfig =
            serde_json::from_value(merged).map_err(|e| Error::InvalidArgument(format!("planner: {e}")))?;
        planner.validate()?;
        Ok(planner)
    }

    pub fn new(domain: DomainKind, seed: u64) -> Self {
        Self {
            domain,
            preset: Preset::Desk,
            seed,
            particles: None,
            planner: None,
            bias: BiasAssumption::Infer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefSummary {
    pub particles: usize,
    pub entropy: f64,
    pub effective_sample_size: f64,
    /// Posterior mean of the reward-parameter features.
    pub omega_mean: Vec<f64>,
    /// Posterior mean of the named bias and temperature features.
    pub theta_mean: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub domain: DomainKind,
    pub step: usize,
    pub interactions: usize,
    /// Set once the horizon is reached or the agent declares the design
    /// finished; no further actions are accepted.
    pub done: bool,
    pub state: Value,
    /// Preference-free facts about the state, such as trip duration and cost.
    pub details: Option<Value>,
    /// Advice on display for the current state; `null` once done.
    pub advice: Option<Value>,
    /// Objective of the current design expected under the belief.
    pub expected_objective: Option<f64>,
    pub belief: BeliefSummary,
    pub history: Vec<Value>,
}

/// One live episode in a concrete domain.
pub struct AssistSession<D: AssistDomain> {
    env: D,
    belief: Belief<Params<D>>,
    planner: PlannerConfig,
    seed: u64,
    state: D::State,
    step: usize,
    done: bool,
    advice: Option<D::Action>,
    history: Vec<InteractionRecord<D::State, D::Action>>,
}

impl<D: AssistDomain> AssistSession<D> {
    /// Starts the episode and plans the first advice.
    pub fn new(env: D, belief: Belief<Params<D>>, planner: PlannerConfig, seed: u64) -> Result<Self> {
        planner.validate()?;
        let state = env.start_state(&mut stream_rng(seed, Stream::Instance, 0));
        let mut s = Self {
            env,
            belief,
            planner,
            seed,
            state,
            step: 0,
            done: false,
            advice: None,
            history: Vec::new(),
        };
        s.done = s.env.is_terminal(&s.state);
        s.advice()?;
        Ok(s)
    }

    pub fn env(&self) -> &D {
        &self.env
    }

    pub fn state(&self) -> &D::State {
        &self.state
    }

    pub fn belief(&self) -> &Belief<Params<D>> {
        &self.belief
    }

    pub fn history(&self) -> &[InteractionRecord<D::State, D::Action>] {
        &self.history
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Advice for the current state, planned on first request.
    pub fn advice(&mut self) -> Result<Option<D::Action>> {
        if self.done {
            return Ok(None);
        }
        if self.advice.is_none() {
            let seed = derive_seed(self.seed, Stream::Planner, self.step as u64);
            let plan = ghpmcp_plan(&self.env, &self.belief, &self.state, ActionSpace::ADVISE, &self.planner, seed)?;
            let AssistantAction::Advise(a) = plan.action else {
                return Err(Error::Contract("advice planner returned a non-advice action".into()));
            };
            self.advice = Some(a);
        }
        Ok(self.advice)
    }

    pub fn cached_advice(&self) -> Option<D::Action> {
        self.advice
    }

    /// Records the agent's `action`, conditioning the belief on it given the
    /// advice that was on display, then plans the next advice. Illegal
    /// actions leave the session as it was.
    pub fn act(&mut self, action: D::Action) -> Result<&InteractionRecord<D::State, D::Action>> {
        if self.done {
            return Err(Error::IllegalAction("the session is done".into()));
        }
        self.env.check_action(&self.state, action)?;
        let advice = self.advice;
        self.belief.observe(&self.env, &self.state, advice, action)?;
        let next = self
            .env
            .transition(&self.state, action, &mut stream_rng(self.seed, Stream::Environment, self.step as u64));
        let reward = self
            .belief
            .particles()
            .iter()
            .zip(self.belief.weights())
            .map(|(p, w)| w * self.env.reward(&self.state, action, &next, &p.omega))
            .sum();
        self.history.push(InteractionRecord {
            step: self.step,
            actor: Actor::Agent,
            state: self.state.clone(),
            advice,
            action,
            next_state: next.clone(),
            reward,
            accepted: advice.map(|a| a == action),
            interactions: self.history.len() + 1,
        });
        self.state = next;
        self.step += 1;
        self.advice = None;
        self.done = Some(action) == self.env.noop() || self.env.is_terminal(&self.state);
        self.advice()?;
        Ok(self.history.last().expect("record pushed above"))
    }

    pub fn belief_summary(&self) -> BeliefSummary {
        let b = &self.belief;
        let names: Vec<&'static str> = self
            .env
            .theta_features(&b.particle(0).theta)
            .into_iter()
            .map(|(n, _)| n)
            .collect();
        let theta = b.posterior_mean(|p| self.env.theta_features(&p.theta).into_iter().map(|(_, v)| v).collect());
        BeliefSummary {
            particles: b.len(),
            entropy: b.entropy(|p| self.env.belief_coords(p)),
            effective_sample_size: b.effective_sample_size(),
            omega_mean: b.posterior_mean(|p| self.env.omega_features(&p.omega)),
            theta_mean: names.into_iter().map(String::from).zip(theta).collect(),
        }
    }

    pub fn expected_objective(&self) -> Option<f64> {
        let mut total = 0.0;
        for (p, w) in self.belief.particles().iter().zip(self.belief.weights()) {
            total += w * self.env.objective(&self.state, &p.omega)?;
        }
        Some(total)
    }

    pub fn view(&self, domain: DomainKind) -> Result<SessionView> {
        Ok(SessionView {
            domain,
            step: self.step,
            interactions: self.history.len(),
            done: self.done,
            state: serde_json::to_value(&self.state)?,
            details: self.env.describe(&self.state),
            advice: self.advice.map(serde_json::to_value).transpose()?,
            expected_objective: self.expected_objective(),
            belief: self.belief_summary(),
            history: self.history.iter().map(serde_json::to_value).collect::<std::result::Result<_, _>>()?,
        })
    }
}

/// A session in either domain, with actions exchanged as JSON.
pub enum AnySession {
    Daytrip(AssistSession<DaytripEnv>),
    Inventory(AssistSession<InventoryEnv>),
}

impl AnySession {
    pub fn create(config: &SessionConfig) -> Result<Self> {
        let spec = ExperimentSpec::preset(config.domain, config.preset);
        let particles = config.particles.unwrap_or(spec.particles);
        if particles == 0 {
            return Err(Error::InvalidArgument("particles must be positive".into()));
        }
        let planner = config.planner_config()?;
        let seed = config.seed;
        let mut belief_rng = stream_rng(seed, Stream::Belief, 0);
        Ok(match config.domain {
            DomainKind::Daytrip => {
                let env = DaytripEnv::generate(spec.daytrip.clone(), &mut stream_rng(seed, Stream::Instance, 1))?;
                let anchoring = config.bias.anchoring()?;
                let belief = Belief::from_prior(particles, &mut belief_rng, |r| {
                    env.sample_particle(r, anchoring, &spec.temperatures)
                })?;
                AnySession::Daytrip(AssistSession::new(env, belief, planner, seed)?)
            }
            DomainKind::Inventory => {
                let env = InventoryEnv::generate(spec.inventory.clone(), &mut stream_rng(seed, Stream::Instance, 1))?;
                let demand = config.bias.demand()?;
                let belief = Belief::from_prior(particles, &mut belief_rng, |r| {
                    env.sample_particle(r, demand, &spec.temperatures)
                })?;
                AnySession::Inventory(AssistSession::new(env, belief, planner, seed)?)
            }
        })
    }

    pub fn domain(&self) -> DomainKind {
        match self {
            AnySession::Daytrip(_) => DomainKind::Daytrip,
            AnySession::Inventory(_) => DomainKind::Inventory,
        }
    }

    /// The problem instance: POIs or the demand schedule.
    pub fn instance(&self) -> Result<Value> {
        Ok(match self {
            AnySession::Daytrip(s) => serde_json::to_value(s.env().pois())?,
            AnySession::Inventory(s) => serde_json::to_value(s.env().schedule())?,
        })
    }

    pub fn advice(&mut self) -> Result<Option<Value>> {
        Ok(match self {
            AnySession::Daytrip(s) => s.advice()?.map(serde_json::to_value).transpose()?,
            AnySession::Inventory(s) => s.advice()?.map(serde_json::to_value).transpose()?,
        })
    }

    /// Applies an action given as JSON and returns the logged record.
    pub fn act(&mut self, action: Value) -> Result<Value> {
        fn parse<T: serde::de::DeserializeOwned>(v: Value) -> Result<T> {
            serde_json::from_value(v).map_err(|e| Error::InvalidArgument(format!("malformed action: {e}")))
        }
        Ok(match self {
            AnySession::Daytrip(s) => serde_json::to_value(s.act(parse(action)?)?)?,
            AnySession::Inventory(s) => serde_json::to_value(s.act(parse(action)?)?)?,
        })
    }

    pub fn view(&self) -> Result<SessionView> {
        match self {
            AnySession::Daytrip(s) => s.view(DomainKind::Daytrip),
            AnySession::Inventory(s) => s.view(DomainKind::Inventory),
        }
    }
}
