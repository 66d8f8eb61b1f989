use proptest::prelude::*;
use temrl_core::qmath::{ln_q, q_exp, q_log, q_product, tsallis_entropy, tsallis_kl_furuichi, tsallis_kl_qlog};
use temrl_core::EntropicIndex;

fn idx(q: f64) -> EntropicIndex {
    EntropicIndex::new(q).unwrap()
}

fn q_star() -> impl Strategy<Value = f64> {
    prop_oneof![Just(1.0), Just(2.0), 1.0f64..4.0]
}

fn distribution(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, n).prop_filter_map("positive mass", |w| {
        let total: f64 = w.iter().sum();
        (total > 1e-3).then(|| w.iter().map(|x| x / total).collect())
    })
}

fn full_support(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(|w| {
        let total: f64 = w.iter().sum();
        w.iter().map(|x| x / total).collect()
    })
}

proptest! {
    #[test]
    fn exp_inverts_log(q in q_star(), x in 1e-3f64..50.0) {
        let i = idx(q);
        let back = q_exp(q_log(x, i).unwrap(), i);
        prop_assert!((back - x).abs() <= 1e-12 * x.max(1.0), "x = {x}, back = {back}");
    }

    #[test]
    fn log_inverts_exp_on_unclipped_domain(q in q_star(), y in -0.9f64..5.0) {
        let i = idx(q);
        // keep 1 + (q*−1)·y away from the clip at 0
        prop_assume!(1.0 + (q - 1.0) * y > 0.05);
        let back = q_log(q_exp(y, i), i).unwrap();
        prop_assert!((back - y).abs() <= 1e-12 * y.abs().max(1.0) * 20.0);
    }

    #[test]
    fn log_is_strictly_increasing(q in q_star(), x in 1e-3f64..20.0, dx in 1e-3f64..5.0) {
        let i = idx(q);
        prop_assert!(q_log(x + dx, i).unwrap() > q_log(x, i).unwrap());
    }

    #[test]
    fn pseudo_additivity(q in q_star(), x in 1e-2f64..10.0, y in 1e-2f64..10.0) {
        let i = idx(q);
        let (lx, ly) = (q_log(x, i).unwrap(), q_log(y, i).unwrap());
        let expected = lx + ly + (q - 1.0) * lx * ly;
        prop_assert!((q_log(x * y, i).unwrap() - expected).abs() <= 1e-12 * expected.abs().max(1.0));
    }

    #[test]
    fn physics_convention_is_the_dual(q in q_star(), x in 1e-2f64..10.0) {
        prop_assert!((ln_q(x, 2.0 - q) - q_log(x, idx(q)).unwrap()).abs() <= 1e-12 * x.max(1.0));
    }

    #[test]
    fn q_product_chains_exponentials(q in 1.0f64..3.0, a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0) {
        let i = idx(q);
        let chained = q_product(q_product(q_exp(a, i), q_exp(b, i), i), q_exp(c, i), i);
        let direct = q_exp(a + b + c, i);
        prop_assert!((chained - direct).abs() <= 1e-12 * direct.max(1.0));
    }

    #[test]
    fn entropy_bounds(q in q_star(), p in (2usize..7).prop_flat_map(distribution)) {
        let i = idx(q);
        let s = tsallis_entropy(&p, i);
        prop_assert!(s >= -1e-15);
        prop_assert!(s <= i.max_entropy(p.len()) + 1e-12);
    }

    #[test]
    fn entropy_is_concave(
        q in q_star(),
        (p, m) in (2usize..6).prop_flat_map(|n| (distribution(n), distribution(n))),
        lambda in 0.0f64..1.0,
    ) {
        let i = idx(q);
        let mix: Vec<f64> = p.iter().zip(&m).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
        let chord = lambda * tsallis_entropy(&p, i) + (1.0 - lambda) * tsallis_entropy(&m, i);
        prop_assert!(tsallis_entropy(&mix, i) >= chord - 1e-12);
    }

    #[test]
    fn furuichi_nonnegative_and_zero_on_diagonal(
        q in 0.2f64..4.0,
        (p, m) in (2usize..6).prop_flat_map(|n| (full_support(n), full_support(n))),
    ) {
        prop_assert!(tsallis_kl_furuichi(&p, &m, q).unwrap() >= -1e-12);
        prop_assert!(tsallis_kl_furuichi(&p, &p, q).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn furuichi_is_jointly_convex(
        q in 0.2f64..3.0,
        (p1, m1, p2, m2) in (2usize..5).prop_flat_map(|n| (full_support(n), full_support(n), full_support(n), full_support(n))),
        lambda in 0.0f64..1.0,
    ) {
        let mix = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| lambda * x + (1.0 - lambda) * y).collect() };
        let joint = tsallis_kl_furuichi(&mix(&p1, &p2), &mix(&m1, &m2), q).unwrap();
        let chord = lambda * tsallis_kl_furuichi(&p1, &m1, q).unwrap() + (1.0 - lambda) * tsallis_kl_furuichi(&p2, &m2, q).unwrap();
        prop_assert!(joint <= chord + 1e-12, "{joint} > {chord}");
    }

    #[test]
    fn qlog_divergence_vanishes_on_diagonal(q in q_star(), p in (2usize..6).prop_flat_map(full_support)) {
        prop_assert!(tsallis_kl_qlog(&p, &p, idx(q)).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn shannon_limit_is_lipschitz(x in 0.05f64..20.0, eps in 1e-5f64..1e-2) {
        // (x^ε − 1)/ε − ln x = ε·ln²x/2·e^{θε ln x} for some θ ∈ (0, 1)
        let l = x.ln();
        let gap = (q_log(x, idx(1.0 + eps)).unwrap() - l).abs();
        let bound = eps * l * l / 2.0 * (eps * l).exp().max(1.0);
        prop_assert!(gap <= bound + 1e-10, "gap {gap} > bound {bound}");
    }
}

/// Maximum of `S̃` over a 1e-3 grid on the 3-simplex.
fn grid_max_entropy(i: EntropicIndex) -> (f64, [f64; 3]) {
    let steps = 1000;
    let mut best = (f64::NEG_INFINITY, [0.0; 3]);
    for a in 0..=steps {
        for b in 0..=(steps - a) {
            let p = [a as f64 / steps as f64, b as f64 / steps as f64, (steps - a - b) as f64 / steps as f64];
            let s = tsallis_entropy(&p, i);
            if s > best.0 {
                best = (s, p);
            }
        }
    }
    best
}

#[test]
fn grid_maximum_entropy_is_near_uniform() {
    for q in [1.0, 1.5, 2.0, 3.0] {
        let i = idx(q);
        let (s, p) = grid_max_entropy(i);
        assert!(s <= i.max_entropy(3) + 1e-12);
        assert!(i.max_entropy(3) - s < 1e-5, "q* = {q}: grid max {s}");
        assert!(p.iter().all(|x| (x - 1.0 / 3.0).abs() < 2e-3), "q* = {q}: argmax {p:?}");
    }
}

#[test]
fn continuity_at_shannon_index() {
    let p = [0.2, 0.5, 0.3];
    let shannon = tsallis_entropy(&p, idx(1.0));
    let mut previous = f64::INFINITY;
    for k in 1..=6 {
        let eps = 10f64.powi(-k);
        let gap = (tsallis_entropy(&p, idx(1.0 + eps)) - shannon).abs();
        assert!(gap <= previous, "gap must shrink with ε");
        assert!(gap <= 2.0 * eps, "ε = {eps}: gap {gap}");
        previous = gap;
    }
}
