use super::*;
use crate::data::{Dataset, FeatureRow};
use crate::linalg::SymMatrix;
use crate::models::{Glm, LossSpec, Quadratic};
use crate::privacy::{default_orders, PrivacyBudget};

fn row(v: &[f64]) -> FeatureRow {
    FeatureRow::from_dense(v).unwrap()
}

fn toy(rows: &[(&[f64], usize)]) -> Dataset {
    let p = rows[0].0.len();
    Dataset::new(
        rows.iter().map(|(r, _)| row(r)).collect(),
        rows.iter().map(|(_, l)| *l).collect(),
        p,
        2,
    )
    .unwrap()
}

fn three_point() -> Dataset {
    toy(&[(&[1.0, 0.5], 1), (&[-0.3, 2.0], 0), (&[0.8, -1.2], 1)])
}

#[test]
fn schedule_rates() {
    assert_eq!(Schedule::Constant { rate: 0.3 }.rate(7), 0.3);
    assert_eq!(Schedule::InverseNuT { nu: 2.0 }.rate(5), 0.1);
    assert_eq!(Schedule::InverseSqrt { radius: 2.0, bound: 1.0 }.rate(4), 1.0);
    let h = Schedule::HalveAtMidpoint { rate: 1.0, total_steps: 7 };
    assert_eq!(h.rate(3), 1.0);
    assert_eq!(h.rate(4), 0.5);
    assert!(Schedule::Constant { rate: 0.0 }.validate().is_err());
}

#[test]
fn unit_rate_solves_quadratic_in_one_step() {
    let c = vec![1.5, -2.0, 0.25];
    let q = Quadratic::new(SymMatrix::identity(3), c.clone()).unwrap();
    let cfg = GdConfig::new(1, Schedule::Constant { rate: 1.0 }, 1e9, 0.0, 0);
    let (x, trace) = dp_gd(&q, &cfg).unwrap();
    assert_eq!(&x[..], &c[..]);
    assert_eq!(trace.records.len(), 1);
}

#[test]
fn noiseless_descent_is_monotone() {
    let ds = toy(&[(&[1.0, 0.0], 1)]);
    let glm = Glm::new(&ds, LossSpec::logistic(0.0, 10.0).unwrap()).unwrap();
    let cfg = GdConfig::new(50, Schedule::Constant { rate: 1.0 }, 10.0, 0.0, 0);
    let (_, trace) = dp_gd(&glm, &cfg).unwrap();
    for w in trace.records.windows(2) {
        assert!(w[1].objective < w[0].objective);
    }
}

#[test]
fn same_seed_same_trace() {
    let ds = three_point();
    let glm = Glm::new(&ds, LossSpec::logistic(1e-2, 1.0).unwrap()).unwrap();
    let mut cfg = GdConfig::new(20, Schedule::Constant { rate: 0.5 }, 1.0, 0.3, 42);
    cfg.average_iterates = true;
    assert_eq!(dp_gd(&glm, &cfg).unwrap(), dp_gd(&glm, &cfg).unwrap());
    let other = GdConfig { seed: 43, ..cfg };
    assert_ne!(dp_gd(&glm, &cfg).unwrap().0, dp_gd(&glm, &other).unwrap().0);
    let sgd = SgdConfig::new(20, Schedule::Constant { rate: 0.5 }, 1.0, 1.0, Sampling::Poisson { q: 0.5 }, 7);
    assert_eq!(dp_sgd(&glm, &sgd).unwrap(), dp_sgd(&glm, &sgd).unwrap());
}

#[test]
fn averaging_and_snapshots() {
    let q = Quadratic::new(SymMatrix::identity(1), vec![1.0]).unwrap();
    let mut cfg = GdConfig::new(4, Schedule::Constant { rate: 0.5 }, 1e9, 0.0, 0);
    cfg.average_iterates = true;
    cfg.snapshot_stride = Some(2);
    let (x, trace) = dp_gd(&q, &cfg).unwrap();
    // Iterates 0.5, 0.75, 0.875, 0.9375.
    assert!((x[0] - 3.0625 / 4.0).abs() < 1e-15);
    assert_eq!(trace.final_params[0], 0.9375);
    let steps: Vec<usize> = trace.snapshots.iter().map(|s| s.0).collect();
    assert_eq!(steps, [1, 3, 5]);
}

#[test]
fn full_lot_sgd_matches_gd_without_noise() {
    let ds = three_point();
    let glm = Glm::new(&ds, LossSpec::logistic(1e-2, 0.7).unwrap()).unwrap();
    let sched = Schedule::Constant { rate: 0.8 };
    let (_, gd) = dp_gd(&glm, &GdConfig::new(15, sched, 0.7, 0.0, 1)).unwrap();
    let (_, sgd) = dp_sgd(&glm, &SgdConfig::new(15, sched, 0.7, 0.0, Sampling::FixedRatio { q: 1.0 }, 2)).unwrap();
    assert_eq!(gd.final_params, sgd.final_params);
    for (a, b) in gd.records.iter().zip(&sgd.records) {
        assert_eq!(a.objective, b.objective);
        assert_eq!(a.grad_norm, b.grad_norm);
    }
}

#[test]
fn projection_keeps_iterates_in_ball() {
    let ds = three_point();
    let glm = Glm::new(&ds, LossSpec::logistic(0.0, 1.0).unwrap()).unwrap();
    let mut cfg = SgdConfig::new(1, Schedule::Constant { rate: 2.0 }, 1.0, 3.0, Sampling::Single, 5);
    cfg.projection_radius = Some(0.5);
    cfg.snapshot_stride = Some(1);
    cfg.steps = 200;
    let (_, trace) = dp_sgd(&glm, &cfg).unwrap();
    for (_, x) in &trace.snapshots {
        assert!(x.norm() <= 0.5 + 1e-12);
    }
}

#[test]
fn single_sample_with_one_example_is_noisy_gd() {
    let ds = toy(&[(&[0.4, -1.0, 2.0], 1)]);
    let glm = Glm::new(&ds, LossSpec::logistic(0.05, 0.9).unwrap()).unwrap();
    let sched = Schedule::Constant { rate: 0.3 };
    let (x, _) = dp_sgd(&glm, &SgdConfig::new(25, sched, 0.9, 0.8, Sampling::Single, 11)).unwrap();
    // Replay: the lot draw consumes one integer, then the Gaussian vector.
    let mut rng = seed::rng(11);
    let mut y = vec![0.0; 3];
    let mut g = vec![0.0; 3];
    let mut z = vec![0.0; 3];
    for _ in 0..25 {
        let _: usize = rng.random_range(0..1);
        glm.gradient(&y, Some(0.9), &mut g);
        seed::fill_gaussian(&mut rng, 0.8 * 0.9, &mut z);
        for ((yi, gi), zi) in y.iter_mut().zip(&g).zip(&z) {
            *yi -= 0.3 * (gi + zi);
        }
    }
    for (a, b) in x.iter().zip(&y) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn divergence_is_reported() {
    let q = Quadratic::new(SymMatrix::identity(2), vec![1.0, 1.0]).unwrap();
    let cfg = GdConfig::new(5000, Schedule::Constant { rate: 3.0 }, f64::INFINITY, 0.0, 0);
    assert!(matches!(dp_gd(&q, &cfg), Err(Error::Diverged { .. })));
}

#[test]
fn empty_poisson_lot_is_noise_only() {
    let ds = three_point();
    let glm = Glm::new(&ds, LossSpec::logistic(0.0, 1.0).unwrap()).unwrap();
    let cfg = SgdConfig::new(30, Schedule::Constant { rate: 0.1 }, 1.0, 1.0, Sampling::Poisson { q: 1e-9 }, 3);
    let (x, trace) = dp_sgd(&glm, &cfg).unwrap();
    assert!(x.is_finite());
    assert!(trace.records.iter().all(|r| r.grad_norm == 0.0));
}

#[test]
fn optimum_of_scalar_quadratic() {
    let q = Quadratic::new(SymMatrix::identity(1), vec![3.0]).unwrap();
    let sol = nonprivate_optimum(&q, DEFAULT_TOL).unwrap();
    assert!((sol.params[0] - 3.0).abs() <= 1e-10);
}

#[test]
fn optimum_of_separable_regularized_logistic() {
    let ds = toy(&[(&[1.0, 0.2], 1), (&[-1.0, 0.3], 0), (&[2.0, -0.1], 1)]);
    let glm = Glm::new(&ds, LossSpec::logistic(0.1, 1.0).unwrap()).unwrap();
    let sol = nonprivate_optimum(&glm, DEFAULT_TOL).unwrap();
    assert!(sol.grad_norm <= 1e-10);
    assert!(sol.params.is_finite());
}

#[test]
fn symmetric_pair_optimum_is_colinear() {
    let a = [0.7, -1.3, 0.4];
    let neg: Vec<f64> = a.iter().map(|v| -v).collect();
    let ds = toy(&[(&a, 1), (&neg, 0)]);
    let glm = Glm::new(&ds, LossSpec::logistic(0.05, 1.0).unwrap()).unwrap();
    let x = nonprivate_optimum(&glm, DEFAULT_TOL).unwrap().params;
    let s = math::dot(&x, &a) / math::norm_sq(&a);
    assert!(s > 0.0);
    for (xi, ai) in x.iter().zip(&a) {
        assert!((xi - s * ai).abs() < 1e-9);
    }
}

#[test]
fn output_gd_sensitivity_limits() {
    assert_eq!(output_gd_sensitivity(0.5, 0.3, 1.0, 4, 1), 0.25);
    let big = output_gd_sensitivity(0.5, 2.0, 1.0, 4, 50);
    assert!((big - 0.25).abs() < 1e-15);
    let geo = output_gd_sensitivity(0.1, 0.5, 1.0, 10, 30);
    let closed = 0.02 * (1.0 - 0.95f64.powi(30)) / 0.05;
    assert!((geo - closed).abs() < 1e-12);
}

fn random_row(rng: &mut seed::Rng) -> (FeatureRow, usize) {
    let v: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
    (row(&v), rng.random_range(0..2))
}

#[test]
fn output_gd_distance_within_sensitivity() {
    let ds = three_point();
    let spec = LossSpec::logistic(0.2, 1.0).unwrap();
    let (steps, rate) = (40, 0.5);
    let base = nonprivate_clipped_gd(&Glm::new(&ds, spec).unwrap(), steps, rate, 1.0);
    let delta = output_gd_sensitivity(rate, 0.2, 1.0, 3, steps);
    let mut rng = seed::rng(99);
    for trial in 0..20 {
        let (r, l) = random_row(&mut rng);
        let nb = ds.replace_record(trial % 3, r, l).unwrap();
        let other = nonprivate_clipped_gd(&Glm::new(&nb, spec).unwrap(), steps, rate, 1.0);
        let d: f64 = base.iter().zip(&other).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        assert!(d <= delta + 1e-12, "{d} > {delta}");
    }
}

#[test]
fn output_sgd_distance_within_sensitivity() {
    let ds = three_point();
    let spec = LossSpec::logistic(0.0, 1.0).unwrap();
    let rate = 0.4;
    let base = one_pass_sgd(&Glm::new(&ds, spec).unwrap(), rate, 1.0, 5);
    let mut rng = seed::rng(100);
    for trial in 0..20 {
        let (r, l) = random_row(&mut rng);
        let nb = ds.replace_record(trial % 3, r, l).unwrap();
        let other = one_pass_sgd(&Glm::new(&nb, spec).unwrap(), rate, 1.0, 5);
        let d: f64 = base.iter().zip(&other).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        assert!(d <= output_sgd_sensitivity(rate, 1.0) + 1e-12);
    }
}

#[test]
fn pass_order_is_a_seeded_permutation() {
    let a = pass_order(50, 8);
    assert_eq!(a, pass_order(50, 8));
    let mut s = a.clone();
    s.sort_unstable();
    assert_eq!(s, (0..50).collect::<Vec<_>>());
}

#[test]
fn output_perturbation_release() {
    let ds = three_point();
    let budget = PrivacyBudget::new(1.0, 1e-3).unwrap();
    let orders = default_orders();
    let unreg = Glm::new(&ds, LossSpec::logistic(0.0, 1.0).unwrap()).unwrap();
    let gd = OutputGdConfig { steps: 10, rate: 0.5, clip: 1.0, smoothness: 1.0, seed: 1 };
    assert!(matches!(
        output_perturbation_gd(&unreg, &gd, budget, &orders),
        Err(Error::Unsupported(_))
    ));
    let reg = Glm::new(&ds, LossSpec::logistic(0.1, 1.0).unwrap()).unwrap();
    assert!(output_perturbation_gd(&reg, &OutputGdConfig { rate: 2.0, ..gd }, budget, &orders).is_err());
    let out = output_perturbation_gd(&reg, &gd, budget, &orders).unwrap();
    assert!((out.sigma - out.noise_multiplier * out.sensitivity).abs() < 1e-15);
    assert_eq!(out, output_perturbation_gd(&reg, &gd, budget, &orders).unwrap());

    let sgd = OutputSgdConfig { rate: 1e-9, clip: 1.0, smoothness: 1.0, seed: 2 };
    let tiny = output_perturbation_sgd(&unreg, &sgd, budget, &orders).unwrap();
    assert!(tiny.params.norm() < 1e-6);
    assert_eq!(tiny.sensitivity, 2e-9);
}
