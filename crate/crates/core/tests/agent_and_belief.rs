mod common;

use aiad_core::agent::{advised_policy, advised_transition_distribution, QEstimate};
use aiad_core::belief::{Belief, Coord};
use aiad_core::rng::seeded;
use common::{advised, switch, toy_policy, Toy, N};
use proptest::prelude::*;

fn q_values() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-4.0f64..4.0, 2..7)
}

proptest! {
    #[test]
    fn advised_policy_matches_the_two_stage_rule(q in q_values(), b1 in 0.0f64..5.0, b2 in 0.0f64..15.0, pick in 0usize..64) {
        let advice = pick % q.len();
        let est = QEstimate::new(q.iter().copied().enumerate().collect());
        let got = advised_policy(&est, Some(advice), b1, b2, None).unwrap().probs();
        let want = advised(&q, advice, b1, b2);
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() < 1e-12);
        }
        prop_assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noop_self_recommendation_is_a_second_switch(q in q_values(), b1 in 0.0f64..5.0, b2 in 0.0f64..15.0, pick in 0usize..64) {
        let n = q.len();
        let (advice, noop) = (pick % n, (pick / n) % n);
        let est = QEstimate::new(q.iter().copied().enumerate().collect());
        let got = advised_policy(&est, Some(advice), b1, b2, Some(noop)).unwrap().probs();
        let first = advised(&q, advice, b1, b2);
        let mut want = vec![0.0; n];
        for (a, p) in first.iter().enumerate() {
            if a == noop {
                want[a] += p;
            } else {
                let s = switch(q[a], q[noop], b2);
                want[a] += p * (1.0 - s);
                want[noop] += p * s;
            }
        }
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn posterior_is_the_normalized_product(
        prior in proptest::collection::vec(0.05f64..1.0, 1..6),
        steps in proptest::collection::vec(proptest::collection::vec(0.01f64..1.0, 6), 1..20),
    ) {
        let n = prior.len();
        let z: f64 = prior.iter().sum();
        let mut belief = Belief::with_weights((0..n).collect::<Vec<_>>(), prior.iter().map(|p| p / z).collect()).unwrap();
        let mut logs: Vec<f64> = prior.iter().map(|p| p.ln()).collect();
        for l in &steps {
            belief.update(&l[..n]).unwrap();
            for i in 0..n {
                logs[i] += l[i].ln();
            }
        }
        let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = logs.iter().map(|x| (x - m).exp()).sum();
        for i in 0..n {
            prop_assert!((belief.weights()[i] - (logs[i] - m).exp() / total).abs() < 1e-12);
        }
    }
}

#[test]
fn advised_transitions_sum_over_agent_actions() {
    let mut rng = seeded(9);
    for _ in 0..20 {
        let env = Toy::random(&mut rng);
        let params = Toy::random_params(&mut rng);
        for s in 0..N {
            for advice in 0..N {
                let pi = toy_policy(&params, s, advice);
                let dist = advised_transition_distribution(&env, &s, Some(advice), &params).unwrap().unwrap();
                assert!((dist.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs() < 1e-12);
                for (next, p) in dist {
                    let want: f64 = (0..N).map(|a| pi[a] * env.t[s][a][next]).sum();
                    assert!((p - want).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn uniform_belief_entropy_is_log_of_distinct_values() {
    let belief = Belief::uniform(vec![0i64, 1, 2, 3, 3, 3, 3, 3]).unwrap();
    // Bins 0, 1, 2 carry 1/8 each and bin 3 carries 5/8.
    let want = -(3.0 * (0.125f64 * 0.125f64.ln()) + 0.625 * 0.625f64.ln());
    assert!((belief.entropy(|p| vec![Coord::Discrete(*p)]) - want).abs() < 1e-12);
    assert!((belief.effective_sample_size() - 8.0).abs() < 1e-12);
    assert_eq!(belief.posterior_mean(|p| vec![*p as f64]), vec![2.25]);
}

#[test]
fn zero_likelihood_everywhere_is_reported() {
    let mut belief = Belief::uniform(vec![1, 2]).unwrap();
    let before = belief.weights().to_vec();
    assert!(!belief.update(&[0.0, 0.0]).unwrap());
    assert_eq!(belief.weights(), &before[..]);
}
