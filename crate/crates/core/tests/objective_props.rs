use etlalm::linalg::Stacked;
use etlalm::objective::{
    make_lasso_instance, make_logistic_instance, make_quadratic_instance, soft_threshold, Instance,
    NonsmoothPart, SmoothPart,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instances(seed: u64) -> Vec<Instance> {
    vec![
        make_lasso_instance(4, 3, 6, 0.1, seed).unwrap(),
        make_logistic_instance(4, 8, 5, 0.0, seed).unwrap(),
        make_logistic_instance(3, 8, 5, 0.3, seed).unwrap(),
        make_quadratic_instance(4, 6, seed).unwrap(),
    ]
}

fn random_point(rng: &mut ChaCha8Rng, m: usize, scale: f64) -> Vec<f64> {
    (0..m).map(|_| rng.random_range(-scale..scale)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[test]
fn lipschitz_and_strong_convexity_inequalities() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..3 {
        for inst in instances(seed) {
            let m = inst.dim();
            for agent in inst.objective.agents() {
                let f = &agent.smooth;
                let (l, mu) = (f.lipschitz(), f.strong_convexity());
                for _ in 0..100 {
                    let x = random_point(&mut rng, m, 3.0);
                    let y = random_point(&mut rng, m, 3.0);
                    let (gx, gy) = (f.gradient(&x), f.gradient(&y));
                    let d = dist(&x, &y);
                    let dg = dist(&gx, &gy);
                    assert!(dg <= l * d * (1.0 + 1e-12) + 1e-12, "{}: {dg} > {l}·{d}", inst.kind.name());
                    let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
                    let gdiff: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a - b).collect();
                    // (∇f(x) − ∇f(y))ᵀ(x − y) ≥ μ‖x − y‖²
                    assert!(dot(&gdiff, &diff) >= mu * d * d * (1.0 - 1e-12) - 1e-12);
                    // f(y) ≥ f(x) + ∇f(x)ᵀ(y − x) + μ/2‖y − x‖²
                    let lower = f.value(&x) - dot(&gx, &diff) + 0.5 * mu * d * d;
                    assert!(f.value(&y) >= lower - 1e-9 * (1.0 + lower.abs()));
                }
            }
        }
    }
}

#[test]
fn gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for inst in instances(1) {
        let m = inst.dim();
        for agent in inst.objective.agents() {
            let f = &agent.smooth;
            for _ in 0..10 {
                let x = random_point(&mut rng, m, 2.0);
                let g = f.gradient(&x);
                let h = 1e-6;
                let fd: Vec<f64> = (0..m)
                    .map(|j| {
                        let mut p = x.clone();
                        let mut q = x.clone();
                        p[j] += h;
                        q[j] -= h;
                        (f.value(&p) - f.value(&q)) / (2.0 * h)
                    })
                    .collect();
                let err = dist(&g, &fd) / dist(&g, &vec![0.0; m]).max(1e-8);
                assert!(err <= 1e-5, "{}: relative FD error {err:e}", inst.kind.name());
            }
        }
    }
}

#[test]
fn logistic_single_sample_at_origin() {
    let features = Stacked::from_rows(&[vec![0.5, -2.0, 1.0]]).unwrap();
    let f = SmoothPart::logistic(features, vec![-1.0], 0.0).unwrap();
    assert!((f.value(&[0.0; 3]) - std::f64::consts::LN_2).abs() < 1e-15);
    // ∇f(0) = −½ y M
    let g = f.gradient(&[0.0; 3]);
    for (a, b) in g.iter().zip([0.25, -1.0, 0.5]) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn identity_least_squares() {
    let f = SmoothPart::least_squares(
        Stacked::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
        vec![0.0, 0.0],
    )
    .unwrap();
    assert!((f.lipschitz() - 1.0).abs() < 1e-12);
    assert_eq!(f.gradient(&[3.0, -4.0]), vec![3.0, -4.0]);
    assert_eq!(f.value(&[3.0, -4.0]), 12.5);
}

#[test]
fn generators_are_bit_deterministic() {
    for seed in [0, 17, 123] {
        let a = instances(seed);
        let b = instances(seed);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.objective, y.objective);
            assert_eq!(x.to_text(), y.to_text());
        }
    }
    assert_ne!(
        make_lasso_instance(4, 3, 6, 0.1, 1).unwrap().objective,
        make_lasso_instance(4, 3, 6, 0.1, 2).unwrap().objective
    );
}

#[test]
fn lasso_rows_and_targets_are_unit_norm() {
    let inst = make_lasso_instance(5, 3, 7, 0.1, 4).unwrap();
    for agent in inst.objective.agents() {
        let SmoothPart::LeastSquares { a, b, .. } = &agent.smooth else {
            panic!("lasso agents are least squares");
        };
        for r in 0..a.rows() {
            assert!((dot(a.row(r), a.row(r)) - 1.0).abs() < 1e-14);
        }
        assert!((dot(b, b) - 1.0).abs() < 1e-14);
    }
}

#[test]
fn logistic_bias_feature_and_labels() {
    let inst = make_logistic_instance(6, 8, 5, 0.0, 9).unwrap();
    for agent in inst.objective.agents() {
        let SmoothPart::Logistic { features, labels, .. } = &agent.smooth else {
            panic!("logistic agents");
        };
        assert_eq!(features.rows(), 8);
        for r in 0..8 {
            assert_eq!(features.get(r, 4), 1.0);
        }
        assert!(labels.iter().all(|y| *y == 1.0 || *y == -1.0));
    }
}

proptest! {
    #[test]
    fn prox_satisfies_the_optimality_inclusion(
        y in prop::collection::vec(-5.0f64..5.0, 1..12),
        t in 0.0f64..3.0,
        w in 0.0f64..2.0,
    ) {
        let g = NonsmoothPart::L1 { dim: y.len(), weight: w };
        let x = g.prox(t, &y);
        // 0 ∈ ∂g(x) + (x − y)/t  ⇔  (y − x)/t ∈ ∂g(x)
        if t > 0.0 {
            let v: Vec<f64> = y.iter().zip(&x).map(|(a, b)| (a - b) / t).collect();
            prop_assert!(g.subdifferential_distance(&x, &v) <= 1e-9 * (1.0 + w));
        } else {
            prop_assert_eq!(&x, &y);
        }
    }

    #[test]
    fn prox_is_nonexpansive(
        pair in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..12),
        t in 0.0f64..3.0,
        w in 0.0f64..2.0,
    ) {
        let (a, b): (Vec<f64>, Vec<f64>) = pair.into_iter().unzip();
        let g = NonsmoothPart::L1 { dim: a.len(), weight: w };
        prop_assert!(dist(&g.prox(t, &a), &g.prox(t, &b)) <= dist(&a, &b) * (1.0 + 1e-15));
    }

    #[test]
    fn one_dimensional_prox_matches_grid_search(y in -4.0f64..4.0, t in 0.05f64..2.0, w in 0.0f64..2.0) {
        let g = NonsmoothPart::L1 { dim: 1, weight: w };
        let x = g.prox(t, &[y])[0];
        let objective = |v: f64| w * v.abs() + (v - y) * (v - y) / (2.0 * t);
        let best = (-80_000..=80_000)
            .map(|k| k as f64 * 1e-4)
            .min_by(|a, b| objective(*a).partial_cmp(&objective(*b)).unwrap())
            .unwrap();
        prop_assert!((x - best).abs() <= 1e-4 + 1e-12, "prox {} grid {}", x, best);
        prop_assert!(objective(x) <= objective(best) + 1e-12);
    }

    #[test]
    fn soft_threshold_formula(y in -10.0f64..10.0, t in 0.0f64..5.0) {
        let s = soft_threshold(&[y], t)[0];
        prop_assert_eq!(s, y.signum() * (y.abs() - t).max(0.0));
    }
}

#[test]
fn soft_threshold_examples() {
    assert_eq!(soft_threshold(&[3.0], 1.0), vec![2.0]);
    assert_eq!(soft_threshold(&[-0.5], 1.0), vec![0.0]);
    assert_eq!(soft_threshold(&[1.5, -2.0], 0.0), vec![1.5, -2.0]);
}
