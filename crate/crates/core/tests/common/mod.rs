//! A small enumerable problem: three states, three actions, stochastic
//! transitions, and agents whose Q tables and rewards are given directly.

#![allow(dead_code)]

use std::sync::Arc;

use aiad_core::agent::{AgentDomain, BiasParams, QEstimate};
use aiad_core::decision::{EnvModel, ParameterSample};
use aiad_core::rng::SimRng;
use aiad_core::Result;
use rand::Rng;

pub const N: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyOmega {
    /// The agent's own estimate `Q̂(s, a)`.
    pub q: [[f64; N]; N],
    /// Reward `R(s, a)`.
    pub r: [[f64; N]; N],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyTheta {
    pub beta1: f64,
    pub beta2: f64,
}

impl BiasParams for ToyTheta {
    fn beta1(&self) -> f64 {
        self.beta1
    }
    fn beta2(&self) -> f64 {
        self.beta2
    }
}

pub type ToyParams = ParameterSample<ToyOmega, ToyTheta>;

#[derive(Debug, Clone)]
pub struct Toy {
    /// `t[s][a][s']`.
    pub t: [[[f64; N]; N]; N],
    pub gamma: f64,
}

fn simplex(rng: &mut SimRng) -> [f64; N] {
    let mut v = [0.0; N];
    for x in &mut v {
        *x = rng.random_range(0.05..1.0);
    }
    let z: f64 = v.iter().sum();
    v.map(|x| x / z)
}

impl Toy {
    pub fn random(rng: &mut SimRng) -> Self {
        let mut t = [[[0.0; N]; N]; N];
        for row in t.iter_mut() {
            for cell in row.iter_mut() {
                *cell = simplex(rng);
            }
        }
        Self { t, gamma: 0.9 }
    }

    pub fn random_params(rng: &mut SimRng) -> ToyParams {
        let mut q = [[0.0; N]; N];
        let mut r = [[0.0; N]; N];
        for s in 0..N {
            for a in 0..N {
                q[s][a] = rng.random_range(-1.0..1.0);
                r[s][a] = rng.random_range(0.0..1.0);
            }
        }
        ParameterSample::new(
            ToyOmega { q, r },
            ToyTheta {
                beta1: rng.random_range(0.5..4.0),
                beta2: rng.random_range(1.0..10.0),
            },
        )
    }
}

impl EnvModel for Toy {
    type State = usize;
    type Action = usize;
    type Omega = ToyOmega;

    fn actions(&self, _state: &usize) -> Vec<usize> {
        (0..N).collect()
    }

    fn transition(&self, state: &usize, action: usize, rng: &mut SimRng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (s, p) in self.t[*state][action].iter().enumerate() {
            acc += p;
            if u < acc {
                return s;
            }
        }
        N - 1
    }

    fn reward(&self, state: &usize, action: usize, _next: &usize, omega: &ToyOmega) -> f64 {
        omega.r[*state][action]
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
        Some(self.t[*state][action].iter().copied().enumerate().collect())
    }
}

impl AgentDomain for Toy {
    type Theta = ToyTheta;

    fn agent_q(&self, state: &usize, omega: &ToyOmega, _theta: &ToyTheta) -> Result<Arc<QEstimate<usize>>> {
        Ok(Arc::new(QEstimate::new(omega.q[*state].iter().copied().enumerate().collect())))
    }
}

/// Own-choice and advised policies written out directly from their
/// definitions, without stabilization.
pub fn boltzmann(q: &[f64], prior: &[f64], beta: f64) -> Vec<f64> {
    let w: Vec<f64> = q.iter().zip(prior).map(|(q, p)| p * (beta * q).exp()).collect();
    let z: f64 = w.iter().sum();
    w.iter().map(|x| x / z).collect()
}

pub fn switch(q_own: f64, q_advised: f64, beta2: f64) -> f64 {
    1.0 / (1.0 + (-beta2 * (q_advised - q_own)).exp())
}

/// `P(a | advice)`: draw from the own-choice rule, then switch to the advice
/// with the logistic probability.
pub fn advised(q: &[f64], advice: usize, beta1: f64, beta2: f64) -> Vec<f64> {
    let own = boltzmann(q, &vec![1.0; q.len()], beta1);
    let mut out = vec![0.0; q.len()];
    for (a, p) in own.iter().enumerate() {
        if a == advice {
            out[a] += p;
        } else {
            let s = switch(q[a], q[advice], beta2);
            out[a] += p * (1.0 - s);
            out[advice] += p * s;
        }
    }
    out
}

pub fn toy_policy(params: &ToyParams, state: usize, advice: usize) -> Vec<f64> {
    advised(&params.omega.q[state], advice, params.theta.beta1, params.theta.beta2)
}
