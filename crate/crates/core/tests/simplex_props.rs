use proptest::prelude::*;
use temrl_core::qmath::{q_log, tsallis_entropy};
use temrl_core::simplex::{argmax, q_star_greedy, softmax_policy, sparsemax_policy};
use temrl_core::EntropicIndex;

fn idx(q: f64) -> EntropicIndex {
    EntropicIndex::new(q).unwrap()
}

fn row(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, 1..=max_len)
}

/// Sparsemax by enumerating every support and keeping the one whose threshold
/// satisfies the KKT conditions.
fn kkt_sparsemax(z: &[f64]) -> Vec<f64> {
    let n = z.len();
    for mask in 1u32..(1 << n) {
        let members: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let psi = (members.iter().map(|&i| z[i]).sum::<f64>() - 1.0) / members.len() as f64;
        let inside = members.iter().all(|&i| z[i] > psi);
        let outside = (0..n).filter(|i| mask & (1 << i) == 0).all(|j| z[j] <= psi);
        if inside && outside {
            return z.iter().map(|&v| (v - psi).max(0.0)).collect();
        }
    }
    unreachable!("the projection always has a KKT support")
}

/// `⟨π, q⟩ − τ Σ π q_log(π)` evaluated directly.
fn objective(p: &[f64], q: &[f64], tau: f64, i: EntropicIndex) -> f64 {
    let linear: f64 = p.iter().zip(q).map(|(a, b)| a * b).sum();
    let reg: f64 = p.iter().filter(|&&x| x > 0.0).map(|&x| x * q_log(x, i).unwrap()).sum();
    linear - tau * reg
}

fn grid_maximum(q: &[f64; 3], tau: f64, i: EntropicIndex) -> f64 {
    let steps = 1000;
    let mut best = f64::NEG_INFINITY;
    for a in 0..=steps {
        for b in 0..=(steps - a) {
            let p = [a as f64 / steps as f64, b as f64 / steps as f64, (steps - a - b) as f64 / steps as f64];
            best = best.max(objective(&p, q, tau, i));
        }
    }
    best
}

proptest! {
    #[test]
    fn sparsemax_matches_kkt_enumeration(q in row(8), tau in 0.05f64..5.0) {
        let z: Vec<f64> = q.iter().map(|v| v / tau).collect();
        let oracle = kkt_sparsemax(&z);
        let got = sparsemax_policy(&q, tau);
        let oracle_support: Vec<usize> = (0..q.len()).filter(|&i| oracle[i] > 0.0).collect();
        prop_assert_eq!(&got.support, &oracle_support);
        for (a, b) in got.policy.iter().zip(&oracle) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn greedy_policies_are_distributions(q in row(8), tau in 0.01f64..10.0, q_star in 1.0f64..4.0) {
        for g in [softmax_policy(&q, tau), sparsemax_policy(&q, tau), q_star_greedy(&q, tau, idx(q_star))] {
            prop_assert!(g.policy.iter().all(|&p| (0.0..=1.0).contains(&p)));
            prop_assert!((g.policy.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(g.support.contains(&argmax(&q)));
        }
    }

    #[test]
    fn greedy_is_shift_invariant(q in row(6), tau in 0.05f64..5.0, q_star in 1.0f64..4.0, c in -10.0f64..10.0) {
        let i = idx(q_star);
        let shifted: Vec<f64> = q.iter().map(|v| v + c).collect();
        let (a, b) = (q_star_greedy(&q, tau, i), q_star_greedy(&shifted, tau, i));
        for (x, y) in a.policy.iter().zip(b.policy.iter()) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
        prop_assert!((b.value - a.value - c).abs() <= 1e-9 * c.abs().max(1.0));
    }

    #[test]
    fn greedy_is_scale_covariant(q in row(6), tau in 0.05f64..5.0, q_star in 1.0f64..4.0, c in 0.1f64..10.0) {
        let i = idx(q_star);
        let scaled: Vec<f64> = q.iter().map(|v| v * c).collect();
        let (a, b) = (q_star_greedy(&q, tau, i), q_star_greedy(&scaled, c * tau, i));
        for (x, y) in a.policy.iter().zip(b.policy.iter()) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
        prop_assert!((b.value - c * a.value).abs() <= 1e-9 * c.max(1.0) * a.value.abs().max(1.0));
    }

    #[test]
    fn softmax_value_is_scaled_logsumexp(q in row(6), tau in 0.5f64..5.0) {
        let direct = tau * q.iter().map(|v| (v / tau).exp()).sum::<f64>().ln();
        prop_assert!((softmax_policy(&q, tau).value - direct).abs() <= 1e-12 * direct.abs().max(1.0));
    }

    #[test]
    fn greedy_value_is_its_objective(q in row(6), tau in 0.05f64..5.0, q_star in 1.0f64..4.0) {
        let i = idx(q_star);
        let g = q_star_greedy(&q, tau, i);
        let direct = objective(&g.policy, &q, tau, i);
        prop_assert!((g.value - direct).abs() <= 1e-10 * direct.abs().max(1.0));
        prop_assert!(g.value >= q[argmax(&q)] - 1e-12);
        prop_assert!(g.value <= q[argmax(&q)] + tau * i.max_entropy(q.len()) + 1e-12);
    }

    #[test]
    fn greedy_beats_random_policies(
        q in row(5).prop_filter("at least two actions", |q| q.len() > 1),
        tau in 0.05f64..5.0,
        q_star in 1.0f64..4.0,
        w in prop::collection::vec(0.0f64..1.0, 5),
    ) {
        let i = idx(q_star);
        let total: f64 = w[..q.len()].iter().sum();
        prop_assume!(total > 1e-6);
        let p: Vec<f64> = w[..q.len()].iter().map(|x| x / total).collect();
        prop_assert!(q_star_greedy(&q, tau, i).value >= objective(&p, &q, tau, i) - 1e-10);
    }

    #[test]
    fn sparsemax_is_q_star_two_at_double_temperature(q in row(6), tau in 0.05f64..5.0) {
        let g = q_star_greedy(&q, tau, idx(2.0));
        let s = sparsemax_policy(&q, 2.0 * tau);
        prop_assert_eq!(g.policy, s.policy);
    }
}

#[test]
fn greedy_is_never_beaten_by_the_grid() {
    let rows = [[0.3, -0.2, 0.1], [1.0, 0.0, 0.0], [0.05, 0.04, -1.0], [0.0, 0.0, 0.0], [2.0, -2.0, 1.9]];
    for q_star in [1.0, 1.5, 2.0, 3.0] {
        let i = idx(q_star);
        for q in &rows {
            for tau in [0.1, 0.5, 1.0, 2.0] {
                let exact = objective(&q_star_greedy(q, tau, i).policy, q, tau, i);
                let grid = grid_maximum(q, tau, i);
                assert!(exact >= grid - 1e-6, "q*={q_star}, q={q:?}, tau={tau}: {exact} vs {grid}");
                // for q* > 1 the grid error is O(τ·h²), below 1e-6 when τ ≤ 1;
                // at q* = 1 the optimum carries e^{-Δq/τ} mass the grid cannot resolve
                if q_star > 1.0 && tau <= 1.0 {
                    assert!(exact - grid <= 1e-6, "q*={q_star}, q={q:?}, tau={tau}: {exact} vs {grid}");
                }
            }
        }
    }
}

#[test]
fn temperature_limits() {
    let q = [0.4, 1.0, -0.5, 0.9];
    for q_star in [1.0, 1.5, 2.0, 3.0] {
        let i = idx(q_star);
        let cold = q_star_greedy(&q, 1e-4, i);
        assert_eq!(cold.support, vec![1], "q* = {q_star}");
        assert!((cold.policy[1] - 1.0).abs() < 1e-12);

        let hot = q_star_greedy(&q, 1e6, i);
        assert!(hot.policy.iter().all(|p| (p - 0.25).abs() < 1e-4), "q* = {q_star}: {:?}", hot.policy);
        let s = tsallis_entropy(&hot.policy, i);
        assert!((s - i.max_entropy(4)).abs() < 1e-6);
    }
}

#[test]
fn sparsemax_examples() {
    let g = sparsemax_policy(&[0.6, 0.5, -4.0], 1.0);
    assert!((g.policy[0] - 0.55).abs() < 1e-15);
    assert!((g.policy[1] - 0.45).abs() < 1e-15);
    assert_eq!(g.support, vec![0, 1]);
    assert_eq!(sparsemax_policy(&[5.0, 0.0], 1.0).support, vec![0]);
}
