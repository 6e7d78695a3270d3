//! Empirical rate checks for DP-GD on a synthetic strongly convex logistic
//! task: excess risk against ε or n, summarized by a log-log slope.

use gradpert_core::curvature::average_curvature;
use gradpert_core::data::{Dataset, FeatureRow};
use gradpert_core::models::{hessian, smoothness_bound, Glm, LossSpec};
use gradpert_core::optim::{dp_gd, nonprivate_optimum, GdConfig, Schedule, DEFAULT_TOL};
use gradpert_core::privacy::{calibrate_noise, default_orders, sigma_for_gd, PrivacyBudget};
use gradpert_core::seed;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::excess_risk;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Epsilon,
    N,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    pub family: Family,
    /// ε values (epsilon family) or sample sizes (n family).
    pub points: Vec<f64>,
    /// Sample size for the epsilon family.
    pub n: usize,
    /// Budget for the n family.
    pub epsilon: f64,
    pub dim: usize,
    pub lambda: f64,
    pub repeats: usize,
    pub seed: u64,
    /// Run without noise (ε then only labels the points).
    pub zero_noise: bool,
    /// Replaces `T = ⌈2 ln n / (η ν̂)⌉`.
    pub steps_override: Option<usize>,
}

impl ScalingConfig {
    pub fn epsilon_family() -> Self {
        ScalingConfig {
            family: Family::Epsilon,
            points: vec![0.1, 0.2, 0.4, 0.8, 1.6],
            n: 100_000,
            epsilon: 1.0,
            dim: 10,
            lambda: 0.01,
            repeats: 50,
            seed: 0,
            zero_noise: false,
            steps_override: None,
        }
    }

    pub fn n_family() -> Self {
        ScalingConfig {
            family: Family::N,
            points: vec![25_000.0, 50_000.0, 100_000.0, 200_000.0],
            ..Self::epsilon_family()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub x: f64,
    pub mean_excess_risk: f64,
    pub se_excess_risk: f64,
    pub noise_multiplier: f64,
    pub steps: usize,
    pub rate: f64,
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingResult {
    pub family: Family,
    pub points: Vec<ScalingPoint>,
    pub slope: f64,
    pub slope_se: f64,
}

/// `n` rows `a ~ N(0, I/p)` rescaled into the unit ball, labels drawn from a
/// logistic model with a fixed unit-norm-times-two weight vector.
pub fn synthetic_logistic(n: usize, p: usize, seed: u64) -> Result<Dataset> {
    let mut rng = seed::rng(seed);
    let w: Vec<f64> = (0..p).map(|j| if j % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let scale = 2.0 / (p as f64).sqrt();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let sd = 1.0 / (p as f64).sqrt();
    for _ in 0..n {
        let mut a: Vec<f64> = (0..p)
            .map(|_| sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1.0 {
            a.iter_mut().for_each(|v| *v /= norm);
        }
        let margin: f64 = scale * a.iter().zip(&w).map(|(x, y)| x * y).sum::<f64>();
        let prob = 1.0 / (1.0 + (-margin).exp());
        labels.push(usize::from(rng.random::<f64>() < prob));
        rows.push(FeatureRow::from_dense(&a)?);
    }
    Ok(Dataset::new(rows, labels, p, 2)?)
}

/// Least-squares slope of `ys` on `xs` and its standard error.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
    let se = if xs.len() > 2 { (rss / (k - 2.0) / sxx).sqrt() } else { f64::NAN };
    (slope, se)
}

fn run_point(ds: &Dataset, epsilon: f64, x: f64, cfg: &ScalingConfig) -> Result<ScalingPoint> {
    let spec = LossSpec::logistic(cfg.lambda, 1.0)?;
    let obj = Glm::new(ds, spec)?;
    let beta = smoothness_bound(ds, &spec)?;
    let nu = average_curvature(&hessian(&spec, ds, &vec![0.0; ds.dim()])?);
    let rate = 1.0 / beta;
    let n = ds.len() as f64;
    let steps = cfg
        .steps_override
        .unwrap_or_else(|| (2.0 * n.ln() / (rate * nu)).ceil() as usize);
    let budget = PrivacyBudget::new(epsilon, 1.0 / (n * n))?;
    let z = calibrate_noise(budget, 1.0, steps, &default_orders())?;
    let sigma = if cfg.zero_noise { 0.0 } else { sigma_for_gd(1.0, ds.len(), z) };
    let optimum = nonprivate_optimum(&obj, DEFAULT_TOL)?;
    let risks = (0..cfg.repeats)
        .into_par_iter()
        .map(|r| {
            let s = seed::derive(cfg.seed, &[seed::label("scaling"), x.to_bits(), r as u64]);
            let gd = GdConfig::new(steps, Schedule::Constant { rate }, 1.0, sigma, s);
            let (w, _) = dp_gd(&obj, &gd)?;
            Ok(excess_risk(&obj, &w, &optimum))
        })
        .collect::<Result<Vec<f64>>>()?;
    let k = risks.len() as f64;
    let mean = risks.iter().sum::<f64>() / k;
    let var = risks.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
    Ok(ScalingPoint {
        x,
        mean_excess_risk: mean,
        se_excess_risk: (var / k).sqrt(),
        noise_multiplier: z,
        steps,
        rate,
        repeats: cfg.repeats,
    })
}

pub fn scaling_study(cfg: &ScalingConfig) -> Result<ScalingResult> {
    if cfg.points.len() < 2 || cfg.repeats == 0 {
        return Err(Error::Config("need at least two points and one repeat".into()));
    }
    let data_seed = seed::derive(cfg.seed, &[seed::label("synthetic")]);
    let points = match cfg.family {
        Family::Epsilon => {
            let ds = synthetic_logistic(cfg.n, cfg.dim, data_seed)?;
            cfg.points
                .iter()
                .map(|&e| run_point(&ds, e, e, cfg))
                .collect::<Result<Vec<_>>>()?
        }
        Family::N => cfg
            .points
            .iter()
            .map(|&n| {
                let ds = synthetic_logistic(n as usize, cfg.dim, data_seed)?;
                run_point(&ds, cfg.epsilon, n, cfg)
            })
            .collect::<Result<Vec<_>>>()?,
    };
    if let Some(bad) = points.iter().find(|p| !(p.mean_excess_risk > 0.0)) {
        return Err(Error::Config(format!(
            "non-positive mean excess risk {} at {}",
            bad.mean_excess_risk, bad.x
        )));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.x.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean_excess_risk.ln()).collect();
    let (slope, slope_se) = fit_slope(&xs, &ys);
    Ok(ScalingResult {
        family: cfg.family,
        points,
        slope,
        slope_se,
    })
}
