use gradpert_core::curvature::{average_curvature, estimate_nu};
use gradpert_core::data::{Dataset, FeatureRow};
use gradpert_core::linalg::SymMatrix;
use gradpert_core::models::{
    clip, full_gradient, hessian, per_example_gradient, smoothness_bound, Glm, LossSpec, Objective, Quadratic,
};
use gradpert_core::privacy::{
    calibrate_noise, default_orders, rdp_curve, rdp_subsampled_gaussian, sigma_for_gd, to_epsilon,
    PrivacyBudget, RdpCurve,
};
use gradpert_core::seed;
use nalgebra::DMatrix;
use rand::Rng;

fn random_dataset(n: usize, p: usize, seed: u64) -> Dataset {
    let mut rng = seed::rng(seed);
    let rows = (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
            FeatureRow::from_dense(&v).unwrap()
        })
        .collect();
    let labels = (0..n).map(|_| rng.random_range(0..2)).collect();
    Dataset::new(rows, labels, p, 2).unwrap()
}

#[test]
fn order_two_subsampled_value() {
    let expected = (1.0 + 0.01 * (std::f64::consts::E - 1.0)).ln();
    let got = rdp_subsampled_gaussian(2, 0.1, 1.0).unwrap();
    assert!((got - expected).abs() <= 1e-12);
    assert!((got - 0.0170369).abs() < 5e-8);
}

#[test]
fn epsilon_matches_calculus_minimum() {
    let orders: Vec<f64> = (0..=254_500).map(|i| 1.5 + i as f64 * 1e-3).collect();
    let curve = rdp_curve(1.0, 4.0, &orders).unwrap();
    let eps = to_epsilon(&curve, 1e-5).unwrap();
    let l = 1e5f64.ln();
    let a = 1.0 + (32.0 * l).sqrt();
    let closed = a / 32.0 + l / (a - 1.0);
    assert!((eps - closed).abs() <= 1e-6, "{eps} vs {closed}");
}

#[test]
fn single_order_epsilon_and_inverse() {
    let curve = RdpCurve::new(vec![2.0], vec![1.0]).unwrap();
    let eps = to_epsilon(&curve, 1e-6).unwrap();
    assert!((eps - (1.0 + 1e6f64.ln())).abs() <= 1e-9);
    let z = calibrate_noise(PrivacyBudget::new(eps, 1e-6).unwrap(), 1.0, 1, &[2.0]).unwrap();
    assert!((z - 1.0).abs() <= 1e-4);
}

#[test]
fn more_steps_need_more_noise() {
    let budget = PrivacyBudget::new(0.5, 1e-8).unwrap();
    let orders = default_orders();
    for q in [0.1, 1.0] {
        let z: Vec<f64> = [50, 200, 800]
            .iter()
            .map(|&t| calibrate_noise(budget, q, t, &orders).unwrap())
            .collect();
        assert!(z[0] < z[1] && z[1] < z[2], "{z:?}");
    }
}

#[test]
fn mean_clipped_gradient_sensitivity() {
    // Every record with features in {-1, 1}² and either label; replace each
    // position of a 3-example set by every alternative record.
    let corners = [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]];
    let records: Vec<(FeatureRow, usize)> = corners
        .iter()
        .flat_map(|c| [0, 1].map(|l| (FeatureRow::from_dense(&[3.0 * c[0], 2.0 * c[1]]).unwrap(), l)))
        .collect();
    let spec = LossSpec::logistic(0.3, 0.5).unwrap();
    let n = 3;
    let w = [0.2, -0.4];
    let mut worst: f64 = 0.0;
    for base in 0..records.len() {
        let rows: Vec<FeatureRow> = (0..n).map(|i| records[(base + i) % records.len()].0.clone()).collect();
        let labels: Vec<usize> = (0..n).map(|i| records[(base + i) % records.len()].1).collect();
        let ds = Dataset::new(rows, labels, 2, 2).unwrap();
        let g = full_gradient(&spec, &ds, &w, true).unwrap();
        for i in 0..n {
            for (r, l) in &records {
                let nb = ds.replace_record(i, r.clone(), *l).unwrap();
                let h = full_gradient(&spec, &nb, &w, true).unwrap();
                let d = g.iter().zip(&h).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                worst = worst.max(d);
            }
        }
    }
    let bound = sigma_for_gd(0.5, n, 1.0);
    assert!(worst <= bound + 1e-12, "{worst} > {bound}");
    assert!(worst > 0.5 * bound);
}

#[test]
fn clipped_gradient_equals_naive_loop_exactly() {
    for s in 0..20 {
        let ds = random_dataset(40, 7, s);
        let spec = LossSpec::logistic(1e-2, 0.3).unwrap();
        let w: Vec<f64> = (0..7).map(|j| (j as f64 - 3.0) * 0.7).collect();
        let mut sum = vec![0.0; 7];
        for i in 0..ds.len() {
            let g = clip(&per_example_gradient(&spec, ds.row(i), ds.label(i), &w).unwrap(), 0.3);
            for (a, b) in sum.iter_mut().zip(&g) {
                *a += b;
            }
        }
        let naive: Vec<f64> = sum.iter().zip(&w).map(|(s, wi)| s / 40.0 + 1e-2 * wi).collect();
        assert_eq!(full_gradient(&spec, &ds, &w, true).unwrap(), naive);
    }
}

#[test]
fn hessian_matches_gradient_differences() {
    let ds = random_dataset(15, 5, 3);
    let spec = LossSpec::logistic(0.05, 1.0).unwrap();
    let w = [0.3, -1.0, 0.5, 2.0, -0.2];
    let h = hessian(&spec, &ds, &w).unwrap();
    let step = 1e-5;
    for j in 0..5 {
        let mut up = w;
        let mut down = w;
        up[j] += step;
        down[j] -= step;
        let gu = full_gradient(&spec, &ds, &up, false).unwrap();
        let gd = full_gradient(&spec, &ds, &down, false).unwrap();
        for i in 0..5 {
            let fd = (gu[i] - gd[i]) / (2.0 * step);
            assert!((h.get(i, j) - fd).abs() <= 1e-5);
        }
    }
}

#[test]
fn two_class_softmax_embeds_logistic() {
    let ds = random_dataset(10, 4, 9);
    let w = [0.4, -0.3, 1.1, 0.0];
    let logistic = LossSpec::logistic(0.0, 1.0).unwrap();
    let softmax = LossSpec::softmax(0.0, 1.0).unwrap();
    // Class rows (-w/2, w/2) give logits difference ⟨w, a⟩, the logistic margin.
    let mut wk = Vec::new();
    wk.extend(w.iter().map(|v| -v / 2.0));
    wk.extend(w.iter().map(|v| v / 2.0));
    for i in 0..ds.len() {
        let gl = per_example_gradient(&logistic, ds.row(i), ds.label(i), &w).unwrap();
        let gs = per_example_gradient(&softmax, ds.row(i), ds.label(i), &wk).unwrap();
        for j in 0..4 {
            assert!((0.5 * (gs[4 + j] - gs[j]) - gl[j]).abs() < 1e-12);
        }
    }
}

#[test]
fn smoothness_matches_dense_eigensolver() {
    let ds = random_dataset(5, 3, 21);
    let spec = LossSpec::logistic(0.0, 1.0).unwrap();
    let a = DMatrix::from_row_slice(5, 3, &ds.dense_mirror().unwrap());
    let gram = a.transpose() * &a / (4.0 * 5.0);
    let top = gram.symmetric_eigen().eigenvalues.max();
    assert!((smoothness_bound(&ds, &spec).unwrap() - top).abs() <= 1e-8);
    let shifted = LossSpec::logistic(0.5, 1.0).unwrap();
    assert!((smoothness_bound(&ds, &shifted).unwrap() - top - 0.5).abs() <= 1e-8);
}

#[test]
fn origin_trace_closed_form() {
    let ds = random_dataset(30, 6, 4);
    let spec = LossSpec::logistic(1e-3, 1.0).unwrap();
    let h = hessian(&spec, &ds, &[0.0; 6]).unwrap();
    let mean_sq = ds.rows().iter().map(FeatureRow::norm_sq).sum::<f64>() / 30.0;
    assert!((average_curvature(&h) - (mean_sq / 24.0 + 1e-3)).abs() < 1e-14);
}

fn anisotropic() -> Quadratic {
    Quadratic::new(SymMatrix::diagonal(&[0.1, 0.5, 1.0, 3.0]), vec![0.0; 4]).unwrap()
}

#[test]
fn nu_hat_at_optimum_is_average_curvature() {
    let q = anisotropic();
    let est = estimate_nu(&q, &[0.0; 4], &[0.0; 4], 0.7, 10_000, 17).unwrap();
    let target = 4.6 / 4.0;
    assert!((est.nu_hat - target).abs() <= 3.0 * est.standard_error, "{est:?}");
}

#[test]
fn nu_hat_interpolates_with_noise_scale() {
    // E⟨A x̃, x̃⟩ = xᵀAx + σ² tr A and E‖x̃‖² = ‖x‖² + p σ².
    let q = anisotropic();
    let x = [2.0, 0.0, 0.0, 0.0];
    let oracle = |s: f64| (0.1 * 4.0 + s * s * 4.6) / (4.0 + 4.0 * s * s);
    for (s, seed) in [(0.05, 1), (0.5, 2), (5.0, 3)] {
        let est = estimate_nu(&q, &x, &[0.0; 4], s, 10_000, seed).unwrap();
        assert!((est.nu_hat - oracle(s)).abs() <= 3.0 * est.standard_error + 1e-12, "{s}: {est:?}");
    }
    let small = estimate_nu(&q, &x, &[0.0; 4], 0.05, 10_000, 4).unwrap().nu_hat;
    let large = estimate_nu(&q, &x, &[0.0; 4], 5.0, 10_000, 5).unwrap().nu_hat;
    assert!((small - 0.1).abs() < 0.01 && (large - 1.15).abs() < 0.05);
}

#[test]
fn glm_gradient_agrees_with_trait_value() {
    let ds = random_dataset(12, 3, 8);
    let glm = Glm::new(&ds, LossSpec::logistic(0.2, 1.0).unwrap()).unwrap();
    let w = [0.5, -0.1, 0.9];
    let mut g = vec![0.0; 3];
    let f = glm.gradient(&w, None, &mut g);
    assert_eq!(f, glm.value(&w));
    assert_eq!(g, full_gradient(glm.spec(), &ds, &w, false).unwrap());
}
