//! Weighted particle belief over `(ω, θ)`.
//!
//! Particles are drawn once from the prior and never moved; observations only
//! reweight them, so the posterior is exact Bayes restricted to the particle
//! support.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{agent_policy_unchecked, AgentDomain};
use crate::decision::ParameterSample;
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// One coordinate of a particle for the joint-histogram entropy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coord {
    /// A categorical value; every distinct value is its own bin.
    Discrete(i64),
    /// A real value, binned into [`CONTINUOUS_BINS`] equal-width bins over the
    /// particles' range.
    Continuous(f64),
}

pub const CONTINUOUS_BINS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief<P> {
    particles: Vec<P>,
    weights: Vec<f64>,
}

impl<P> Belief<P> {
    /// Uniform weights over `particles`.
    pub fn uniform(particles: Vec<P>) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::InvalidArgument("belief needs at least one particle".into()));
        }
        let w = 1.0 / particles.len() as f64;
        let weights = vec![w; particles.len()];
        Ok(Self { particles, weights })
    }

    pub fn with_weights(particles: Vec<P>, weights: Vec<f64>) -> Result<Self> {
        if particles.is_empty() || particles.len() != weights.len() {
            return Err(Error::InvalidArgument("particles and weights must match".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidArgument("weights sum to zero".into()));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { particles, weights })
    }

    /// `n` independent prior draws with uniform weights.
    pub fn from_prior<F>(n: usize, rng: &mut SimRng, mut sampler: F) -> Result<Self>
    where
        F: FnMut(&mut SimRng) -> P,
    {
        if n == 0 {
            return Err(Error::InvalidArgument("belief needs at least one particle".into()));
        }
        Self::uniform((0..n).map(|_| sampler(rng)).collect())
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[P] {
        &self.particles
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn particle(&self, i: usize) -> &P {
        &self.particles[i]
    }

    /// Multiplies each weight by its likelihood and renormalizes.
    ///
    /// If every likelihood is zero the observation is impossible under the
    /// whole support; the weights are left unchanged and `false` is returned.
    pub fn update(&mut self, likelihoods: &[f64]) -> Result<bool> {
        if likelihoods.len() != self.weights.len() {
            return Err(Error::InvalidArgument("one likelihood per particle expected".into()));
        }
        let updated: Vec<f64> = self
            .weights
            .iter()
            .zip(likelihoods)
            .map(|(w, l)| w * l.max(0.0))
            .collect();
        let total: f64 = updated.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            log::warn!("observation has zero likelihood under every particle; belief kept");
            return Ok(false);
        }
        self.weights = updated.into_iter().map(|w| w / total).collect();
        Ok(true)
    }

    pub fn sample_index(&self, rng: &mut SimRng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, w) in self.weights.iter().enumerate() {
            if *w <= 0.0 {
                continue;
            }
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
        last
    }

    /// `k` particle indices drawn with replacement in proportion to weight.
    pub fn subsample(&self, rng: &mut SimRng, k: usize) -> Vec<usize> {
        (0..k).map(|_| self.sample_index(rng)).collect()
    }

    /// A new equally weighted belief of `m` particles drawn with replacement.
    pub fn resampled(&self, rng: &mut SimRng, m: usize) -> Result<Self>
    where
        P: Clone,
    {
        if m == 0 {
            return Err(Error::InvalidArgument("subsample size must be positive".into()));
        }
        let idx = self.subsample(rng, m);
        Self::uniform(idx.into_iter().map(|i| self.particles[i].clone()).collect())
    }

    /// Weighted mean of a vector-valued feature.
    pub fn posterior_mean<F>(&self, feature: F) -> Vec<f64>
    where
        F: Fn(&P) -> Vec<f64>,
    {
        let mut mean: Vec<f64> = Vec::new();
        for (p, w) in self.particles.iter().zip(&self.weights) {
            let x = feature(p);
            if mean.is_empty() {
                mean = vec![0.0; x.len()];
            }
            for (m, v) in mean.iter_mut().zip(x) {
                *m += w * v;
            }
        }
        mean
    }

    /// `1 / Σ w²`.
    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Shannon entropy (nats) of the joint histogram of `coords` under the
    /// particle weights.
    pub fn entropy<F>(&self, coords: F) -> f64
    where
        F: Fn(&P) -> Vec<Coord>,
    {
        let rows: Vec<Vec<Coord>> = self.particles.iter().map(&coords).collect();
        let dims = rows[0].len();
        let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); dims];
        for row in &rows {
            for (d, c) in row.iter().enumerate() {
                if let Coord::Continuous(x) = c {
                    ranges[d].0 = ranges[d].0.min(*x);
                    ranges[d].1 = ranges[d].1.max(*x);
                }
            }
        }
        let mut mass: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
        for (row, w) in rows.iter().zip(&self.weights) {
            if *w <= 0.0 {
                continue;
            }
            let key: Vec<i64> = row
                .iter()
                .enumerate()
                .map(|(d, c)| match c {
                    Coord::Discrete(v) => *v,
                    Coord::Continuous(x) => {
                        let (lo, hi) = ranges[d];
                        if hi > lo {
                            let b = ((x - lo) / (hi - lo) * CONTINUOUS_BINS as f64) as i64;
                            b.min(CONTINUOUS_BINS as i64 - 1)
                        } else {
                            0
                        }
                    }
                })
                .collect();
            *mass.entry(key).or_default() += w;
        }
        -mass.values().map(|p| p * p.ln()).sum::<f64>()
    }
}

impl<O, T> Belief<ParameterSample<O, T>> {
    /// Conditions on the agent taking `action` in `state` after `advice`.
    pub fn observe<D>(
        &mut self,
        env: &D,
        state: &D::State,
        advice: Option<D::Action>,
        action: D::Action,
    ) -> Result<bool>
    where
        D: AgentDomain<Omega = O, Theta = T>,
    {
        let likelihoods = self.action_likelihoods(env, state, advice, action)?;
        self.update(&likelihoods)
    }

    /// `π̂(action | state, advice; particle)` for every particle.
    pub fn action_likelihoods<D>(
        &self,
        env: &D,
        state: &D::State,
        advice: Option<D::Action>,
        action: D::Action,
    ) -> Result<Vec<f64>>
    where
        D: AgentDomain<Omega = O, Theta = T>,
    {
        self.particles
            .iter()
            .map(|p| Ok(agent_policy_unchecked(env, state, advice, p)?.prob(action)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;

    #[test]
    fn uniform_prior() {
        let b = Belief::uniform(vec![1, 2, 3, 4]).unwrap();
        assert!(b.weights().iter().all(|w| *w == 0.25));
        assert!(Belief::<u8>::uniform(vec![]).is_err());
    }

    #[test]
    fn update_matches_bayes_rule() {
        let mut b = Belief::with_weights(vec!['a', 'b', 'c'], vec![0.5, 0.3, 0.2]).unwrap();
        b.update(&[0.1, 0.6, 0.0]).unwrap();
        let z = 0.5 * 0.1 + 0.3 * 0.6;
        assert!((b.weights()[0] - 0.05 / z).abs() < 1e-15);
        assert!((b.weights()[1] - 0.18 / z).abs() < 1e-15);
        assert_eq!(b.weights()[2], 0.0);
    }

    #[test]
    fn impossible_observation_keeps_belief() {
        let mut b = Belief::with_weights(vec![0, 1], vec![0.4, 0.6]).unwrap();
        let before = b.clone();
        assert!(!b.update(&[0.0, 0.0]).unwrap());
        assert_eq!(b, before);
    }

    #[test]
    fn entropy_of_uniform_discrete_is_log_n() {
        let b = Belief::uniform(vec![0i64, 1, 2, 3, 4, 5, 6, 7]).unwrap();
        let h = b.entropy(|x| vec![Coord::Discrete(*x)]);
        assert!((h - 8f64.ln()).abs() < 1e-12);
        let point = Belief::with_weights(vec![0i64, 1], vec![1.0, 0.0]).unwrap();
        assert_eq!(point.entropy(|x| vec![Coord::Discrete(*x)]), 0.0);
    }

    #[test]
    fn continuous_coordinates_are_binned() {
        // 32 evenly spread values fill 16 bins with two particles each.
        let b = Belief::uniform((0..32).map(|i| i as f64).collect()).unwrap();
        let h = b.entropy(|x| vec![Coord::Continuous(*x)]);
        assert!((h - 16f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn posterior_mean_weights_features() {
        let b = Belief::with_weights(vec![1.0, 3.0], vec![0.25, 0.75]).unwrap();
        assert_eq!(b.posterior_mean(|x| vec![*x, 2.0 * x]), vec![2.5, 5.0]);
    }

    #[test]
    fn subsample_follows_weights() {
        let b = Belief::with_weights(vec![0, 1, 2], vec![0.0, 0.25, 0.75]).unwrap();
        let idx = b.subsample(&mut seeded(3), 40_000);
        assert!(!idx.contains(&0));
        let ones = idx.iter().filter(|i| **i == 1).count() as f64 / 40_000.0;
        assert!((ones - 0.25).abs() < 0.015);
    }

    #[test]
    fn prior_draws_are_reproducible() {
        let draw = |rng: &mut SimRng| rand::Rng::random::<f64>(rng);
        let a = Belief::from_prior(16, &mut seeded(2), draw).unwrap();
        let b = Belief::from_prior(16, &mut seeded(2), draw).unwrap();
        assert_eq!(a, b);
        assert!(Belief::from_prior(0, &mut seeded(2), draw).is_err());
    }

    #[test]
    fn resampling_a_point_mass() {
        let b = Belief::with_weights(vec![5, 6, 7], vec![0.0, 1.0, 0.0]).unwrap();
        let r = b.resampled(&mut seeded(1), 10).unwrap();
        assert!(r.particles().iter().all(|p| *p == 6));
        assert!(b.resampled(&mut seeded(1), 0).is_err());
    }

    #[test]
    fn observation_order_does_not_matter() {
        let obs = [[0.1, 0.5, 0.9], [0.7, 0.2, 0.3], [0.4, 0.4, 0.8]];
        let mut forward = Belief::uniform(vec![0, 1, 2]).unwrap();
        let mut backward = forward.clone();
        for l in &obs {
            forward.update(l).unwrap();
        }
        for l in obs.iter().rev() {
            backward.update(l).unwrap();
        }
        for (a, b) in forward.weights().iter().zip(backward.weights()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn weights_stay_normalized(
            updates in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 6), 1..20),
        ) {
            let mut b = Belief::uniform((0..6).collect::<Vec<_>>()).unwrap();
            for l in &updates {
                b.update(l).unwrap();
                let total: f64 = b.weights().iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
                prop_assert!(b.weights().iter().all(|w| *w >= 0.0));
            }
        }
    }
}
