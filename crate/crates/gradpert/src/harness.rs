//! Experiment runner: grids, seeded repeats, selection and metrics.

use std::collections::BTreeMap;
use std::path::Path;

use gradpert_core::curvature::{curvature_trace, CurvatureTrace, NuProbe};
use gradpert_core::data::{row_l2_normalize, train_test_split, Dataset, SplitSpec};
use gradpert_core::models::{smoothness_upper_bound, Glm, LossSpec, Objective};
use gradpert_core::optim::{
    dp_gd, dp_sgd, nonprivate_optimum, output_perturbation_gd, output_perturbation_sgd, GdConfig, OutputGdConfig,
    OutputSgdConfig, ReferenceSolution, RunTrace, Sampling, Schedule, SgdConfig, DEFAULT_TOL,
};
use gradpert_core::privacy::{calibrate_noise, default_orders, sigma_for_gd, MechanismSpec, PrivacyBudget};
use gradpert_core::seed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Algorithm, ExperimentConfig};
use crate::error::{io_at, Result};
use crate::formats;

/// Train/test data plus everything shared by all runs on it.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub name: String,
    pub train: Dataset,
    pub test: Dataset,
    pub spec: LossSpec,
    pub delta: f64,
    pub smoothness: f64,
    pub optimum: ReferenceSolution,
}

impl Prepared {
    pub fn new(name: &str, full: &Dataset, cfg: &ExperimentConfig) -> Result<Self> {
        let full = if cfg.dataset.normalize_rows {
            row_l2_normalize(full)
        } else {
            full.clone()
        };
        let split = SplitSpec::new(cfg.dataset.train_fraction, cfg.dataset.split_seed)?;
        let (train, test) = train_test_split(&full, split)?;
        let spec = LossSpec::new(cfg.objective, cfg.lambda, cfg.clip())?;
        let n = train.len() as f64;
        let delta = cfg.delta.unwrap_or(1.0 / (n * n));
        let smoothness = smoothness_upper_bound(&train, &spec)?;
        let optimum = nonprivate_optimum(&Glm::new(&train, spec)?, DEFAULT_TOL)?;
        Ok(Prepared {
            name: name.into(),
            train,
            test,
            spec,
            delta,
            smoothness,
            optimum,
        })
    }

    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        let d = &cfg.dataset;
        let full = formats::load(&d.path, d.format, d.csv_header, d.p_hint)?;
        Self::new(&d.display_name(), &full, cfg)
    }

    pub fn objective(&self) -> Glm<'_> {
        Glm::new(&self.train, self.spec).expect("spec validated against the training split")
    }
}

/// `F(params) − F(x*)` on the training objective, regularizer included.
pub fn excess_risk<O: Objective + ?Sized>(obj: &O, params: &[f64], optimum: &ReferenceSolution) -> f64 {
    obj.value(params) - optimum.objective
}

/// One (algorithm, ε, T, η) cell of the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
struct GridPoint {
    algorithm: Algorithm,
    epsilon: f64,
    steps: usize,
    /// Rate as listed in the grid.
    rate: f64,
}

/// What the accountant charged for one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accounting {
    pub noise_multiplier: f64,
    pub sampling_ratio: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub algorithm: Algorithm,
    pub epsilon: f64,
    pub delta: f64,
    pub steps: usize,
    /// Learning rate actually used (output perturbation caps it at `1/β̂`).
    pub rate: f64,
    pub feasible: bool,
    pub accounting: Option<Accounting>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_excess_risk: f64,
    pub std_excess_risk: f64,
    pub repeats: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub seed: u64,
    /// Test accuracy in percent.
    pub accuracy: f64,
    pub excess_risk: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    /// The selected grid point per (algorithm, ε).
    pub rows: Vec<ResultRow>,
    /// Every grid point, in grid order.
    pub grid: Vec<ResultRow>,
    /// Per-run outcomes keyed like `grid`.
    pub runs: Vec<Vec<RunOutcome>>,
}

pub fn run_seed(master: u64, algorithm: Algorithm, epsilon: f64, steps: usize, rate: f64, repeat: usize) -> u64 {
    seed::derive(
        master,
        &[seed::label(algorithm.name()), epsilon.to_bits(), steps as u64, rate.to_bits(), repeat as u64],
    )
}

fn accounting_for(point: &GridPoint, cfg: &ExperimentConfig, delta: f64) -> Result<Option<Accounting>> {
    let (q, steps) = match point.algorithm {
        Algorithm::DpGd => (1.0, point.steps),
        Algorithm::DpSgd => (cfg.sampling_ratio, point.steps),
        Algorithm::OutGd | Algorithm::OutSgd => (1.0, 1),
    };
    let budget = PrivacyBudget::new(point.epsilon, delta)?;
    match calibrate_noise(budget, q, steps, &default_orders()) {
        Ok(z) => Ok(Some(Accounting {
            noise_multiplier: z,
            sampling_ratio: q,
            steps,
        })),
        Err(gradpert_core::Error::Infeasible { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn effective_rate(point: &GridPoint, smoothness: f64) -> f64 {
    match point.algorithm {
        Algorithm::OutGd | Algorithm::OutSgd => point.rate.min(1.0 / smoothness),
        _ => point.rate,
    }
}

/// A single seeded run. Returns the released parameters and, for the
/// iterative private methods, the trace.
fn run_once(
    prep: &Prepared,
    cfg: &ExperimentConfig,
    point: &GridPoint,
    acct: &Accounting,
    seed: u64,
) -> Result<(Vec<f64>, Option<RunTrace>)> {
    let obj = prep.objective();
    let clip = cfg.clip();
    let rate = effective_rate(point, prep.smoothness);
    let z = if cfg.zero_noise { 0.0 } else { acct.noise_multiplier };
    let budget = PrivacyBudget::new(point.epsilon, prep.delta)?;
    let orders = default_orders();
    Ok(match point.algorithm {
        Algorithm::DpGd => {
            let sigma = sigma_for_gd(clip, prep.train.len(), z);
            let mut gd = GdConfig::new(point.steps, Schedule::Constant { rate }, clip, sigma, seed);
            gd.average_iterates = cfg.average_iterates;
            let (x, trace) = dp_gd(&obj, &gd)?;
            (x.into_inner(), Some(trace))
        }
        Algorithm::DpSgd => {
            let schedule = Schedule::HalveAtMidpoint {
                rate: 2.0 * rate,
                total_steps: point.steps,
            };
            let sampling = if cfg.sampling_ratio >= 1.0 {
                Sampling::FixedRatio { q: 1.0 }
            } else {
                Sampling::Poisson { q: cfg.sampling_ratio }
            };
            let sgd = SgdConfig::new(point.steps, schedule, clip, z, sampling, seed);
            let (x, trace) = dp_sgd(&obj, &sgd)?;
            (x.into_inner(), Some(trace))
        }
        Algorithm::OutGd => {
            let out = OutputGdConfig {
                steps: point.steps,
                rate,
                clip,
                smoothness: prep.smoothness,
                seed,
            };
            let released = output_perturbation_gd(&obj, &out, budget, &orders)?;
            let x = if cfg.zero_noise { released.noiseless } else { released.params };
            (x.into_inner(), None)
        }
        Algorithm::OutSgd => {
            let out = OutputSgdConfig {
                rate,
                clip,
                smoothness: prep.smoothness,
                seed,
            };
            let released = output_perturbation_sgd(&obj, &out, budget, &orders)?;
            let x = if cfg.zero_noise { released.noiseless } else { released.params };
            (x.into_inner(), None)
        }
    })
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Output-perturbation rates above `1/β̂` are capped; grid rates that cap to
/// the same value are kept once.
fn grid_points(cfg: &ExperimentConfig, n_train: usize, smoothness: f64) -> Vec<GridPoint> {
    let mut points = Vec::new();
    for &algorithm in &cfg.algorithms {
        for &epsilon in &cfg.epsilons {
            let (steps, rates) = match algorithm {
                Algorithm::OutSgd => (vec![n_train], cfg.output_sgd_learning_rates.clone()),
                _ => (cfg.steps.clone(), cfg.learning_rates()),
            };
            for &t in &steps {
                let mut used: Vec<f64> = Vec::new();
                for &rate in &rates {
                    let point = GridPoint {
                        algorithm,
                        epsilon,
                        steps: t,
                        rate,
                    };
                    let eff = effective_rate(&point, smoothness);
                    if !used.contains(&eff) {
                        used.push(eff);
                        points.push(point);
                    }
                }
            }
        }
    }
    points
}

/// Index of the best grid point among `candidates`: highest mean accuracy,
/// ties broken by smaller T, then smaller η.
pub fn select_best(candidates: &[&ResultRow]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in candidates.iter().enumerate() {
        if !r.feasible {
            continue;
        }
        let better = match best {
            None => true,
            Some(b) => {
                let c = candidates[b];
                r.mean_accuracy > c.mean_accuracy
                    || (r.mean_accuracy == c.mean_accuracy
                        && (r.steps < c.steps || (r.steps == c.steps && r.rate < c.rate)))
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

/// Runs every configured grid point `repeats` times and selects one row per
/// (algorithm, ε). Traces go to `<trace_dir>` when given.
pub fn run_prepared(prep: &Prepared, cfg: &ExperimentConfig, trace_dir: Option<&Path>) -> Result<Report> {
    cfg.validate()?;
    let points = grid_points(cfg, prep.train.len(), prep.smoothness);
    let accounts = points
        .iter()
        .map(|p| accounting_for(p, cfg, prep.delta))
        .collect::<Result<Vec<_>>>()?;
    if let Some(dir) = trace_dir {
        std::fs::create_dir_all(dir).map_err(io_at(dir))?;
    }

    let cells: Vec<(usize, usize)> = (0..points.len())
        .filter(|&i| accounts[i].is_some())
        .flat_map(|i| (0..cfg.repeats).map(move |r| (i, r)))
        .collect();
    let outcomes: BTreeMap<(usize, usize), RunOutcome> = cells
        .par_iter()
        .map(|&(i, r)| {
            let point = &points[i];
            let acct = accounts[i].as_ref().unwrap();
            let s = run_seed(cfg.seed, point.algorithm, point.epsilon, point.steps, point.rate, r);
            let (x, trace) = run_once(prep, cfg, point, acct, s)?;
            let obj = prep.objective();
            let outcome = RunOutcome {
                seed: s,
                accuracy: 100.0 * obj.accuracy_on(&prep.test, &x),
                excess_risk: excess_risk(&obj, &x, &prep.optimum),
            };
            if let Some(dir) = trace_dir {
                let stem = format!(
                    "{}_{}_eps{}_T{}_lr{}_r{}",
                    prep.name,
                    point.algorithm.name(),
                    point.epsilon,
                    point.steps,
                    point.rate,
                    r
                );
                crate::report::write_run(dir, &stem, &x, trace.as_ref(), &outcome, obj.value(&x))?;
            }
            Ok(((i, r), outcome))
        })
        .collect::<Result<_>>()?;

    let mut grid = Vec::with_capacity(points.len());
    let mut runs = Vec::with_capacity(points.len());
    for (i, point) in points.iter().enumerate() {
        let these: Vec<RunOutcome> = (0..cfg.repeats).filter_map(|r| outcomes.get(&(i, r)).copied()).collect();
        let acc: Vec<f64> = these.iter().map(|o| o.accuracy).collect();
        let risk: Vec<f64> = these.iter().map(|o| o.excess_risk).collect();
        let feasible = accounts[i].is_some();
        let (ma, sa) = if feasible { mean_std(&acc) } else { (f64::NAN, f64::NAN) };
        let (mr, sr) = if feasible { mean_std(&risk) } else { (f64::NAN, f64::NAN) };
        grid.push(ResultRow {
            dataset: prep.name.clone(),
            algorithm: point.algorithm,
            epsilon: point.epsilon,
            delta: prep.delta,
            steps: point.steps,
            rate: effective_rate(point, prep.smoothness),
            feasible,
            accounting: accounts[i],
            mean_accuracy: ma,
            std_accuracy: sa,
            mean_excess_risk: mr,
            std_excess_risk: sr,
            repeats: these.len(),
        });
        runs.push(these);
    }

    let mut rows = Vec::new();
    for &algorithm in &cfg.algorithms {
        for &epsilon in &cfg.epsilons {
            let members: Vec<usize> = (0..points.len())
                .filter(|&i| points[i].algorithm == algorithm && points[i].epsilon == epsilon)
                .collect();
            let cands: Vec<&ResultRow> = members.iter().map(|&i| &grid[i]).collect();
            // With nothing feasible the first grid point stands in, marked infeasible.
            rows.push(cands[select_best(&cands).unwrap_or(0)].clone());
        }
    }
    Ok(Report { rows, grid, runs })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    let prep = Prepared::load(cfg)?;
    let traces = cfg.write_traces.then(|| cfg.resolved_output_dir().join("traces"));
    run_prepared(&prep, cfg, traces.as_deref())
}

/// Re-runs the accountant on a row's recorded mechanism and returns the ε it
/// actually spends; `None` for infeasible rows.
pub fn ledger_epsilon(row: &ResultRow) -> Result<Option<f64>> {
    let Some(a) = row.accounting else {
        return Ok(None);
    };
    let mech = MechanismSpec::new(a.noise_multiplier, a.sampling_ratio, a.steps)?;
    Ok(Some(mech.epsilon(row.delta, &default_orders())?))
}

/// Settings for a curvature-along-the-path study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureStudy {
    pub epsilon: f64,
    pub steps: usize,
    pub rate: f64,
    pub stride: usize,
    pub lambdas: Vec<f64>,
    pub seed: u64,
    /// Monte-Carlo draws for `ν̂` at each probe; `None` skips it.
    pub nu_draws: Option<usize>,
}

/// Trains one DP-GD path at the prepared λ and probes curvature under each
/// overlay λ. `ν̂` uses the per-step perturbation scale `η σ_t`.
pub fn curvature_study(prep: &Prepared, study: &CurvatureStudy) -> Result<Vec<CurvatureTrace>> {
    let budget = PrivacyBudget::new(study.epsilon, prep.delta)?;
    let z = calibrate_noise(budget, 1.0, study.steps, &default_orders())?;
    let sigma = sigma_for_gd(prep.spec.clip, prep.train.len(), z);
    let mut gd = GdConfig::new(study.steps, Schedule::Constant { rate: study.rate }, prep.spec.clip, sigma, study.seed);
    gd.snapshot_stride = Some(1);
    let (_, trace) = dp_gd(&prep.objective(), &gd)?;
    let probe = study.nu_draws.map(|draws| NuProbe {
        x_star: prep.optimum.params.clone(),
        sigma: study.rate * sigma,
        draws,
        seed: seed::derive(study.seed, &[seed::label("nu")]),
    });
    Ok(curvature_trace(
        &prep.train,
        &prep.name,
        &prep.spec,
        &trace.snapshots,
        study.stride,
        &study.lambdas,
        probe.as_ref(),
    )?)
}
