use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gradpert::config::{ExperimentConfig, OUTPUT_DIR_ENV};
use gradpert::core::curvature::DEFAULT_STRIDE;
use gradpert::core::privacy::{calibrate_noise, default_orders, MechanismSpec, PrivacyBudget};
use gradpert::formats::Format;
use gradpert::harness::{self, CurvatureStudy, Prepared};
use gradpert::report;
use gradpert::scaling::{scaling_study, Family, ScalingConfig};
use gradpert::{Error, Result};

#[derive(Parser)]
#[command(name = "gradpert", version, about = "Gradient-perturbed private ERM experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the accuracy/excess-risk grid described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print ε for (z, q, T, δ), or the calibrated z for (ε, q, T, δ).
    Account(AccountArgs),
    /// Curvature along a DP-GD path with λ overlays.
    Curvature(CurvatureArgs),
    /// Log-log excess-risk slope on a synthetic logistic task.
    Scale(ScaleArgs),
}

#[derive(Args)]
struct AccountArgs {
    #[arg(long, conflicts_with = "epsilon", required_unless_present = "epsilon")]
    z: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: f64,
    #[arg(long, default_value_t = 1.0)]
    q: f64,
    #[arg(long, default_value_t = 1)]
    steps: usize,
}

#[derive(Args)]
struct CurvatureArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum, default_value = "libsvm")]
    format: FormatArg,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 1e-4, 1e-3])]
    lambda_list: Vec<f64>,
    /// λ used for training.
    #[arg(long, default_value_t = 1e-4)]
    lambda: f64,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[arg(long, default_value_t = 1.0)]
    rate: f64,
    #[arg(long, default_value_t = DEFAULT_STRIDE)]
    stride: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Monte-Carlo draws for ν̂ per probe (omit to skip).
    #[arg(long)]
    nu_draws: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum FormatArg {
    Libsvm,
    Csv,
}

#[derive(Args)]
struct ScaleArgs {
    #[arg(long, value_enum)]
    family: Family,
    #[arg(long, value_delimiter = ',')]
    points: Option<Vec<f64>>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn output_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn run(config: &Path) -> Result<bool> {
    let cfg = ExperimentConfig::load(config)?;
    let out = cfg.resolved_output_dir();
    let report = harness::run_experiment(&cfg)?;
    report::emit_table(&report.rows, &out.join("results.csv"))?;
    report::emit_table(&report.grid, &out.join("grid.csv"))?;
    report::write_manifest(&out, &cfg, &["results.csv".into(), "grid.csv".into()])?;
    let mut complete = true;
    for row in &report.rows {
        if !row.feasible {
            eprintln!("{} eps={}: infeasible", row.algorithm.name(), row.epsilon);
            complete = false;
            continue;
        }
        let spent = harness::ledger_epsilon(row)?.unwrap_or(f64::INFINITY);
        if spent > row.epsilon {
            eprintln!("{} eps={}: accountant reports {spent}", row.algorithm.name(), row.epsilon);
            complete = false;
        }
        println!(
            "{}\t{}\teps={}\tT={}\teta={}\tacc={}±{}\texcess={}",
            row.dataset,
            row.algorithm.name(),
            row.epsilon,
            row.steps,
            report::sig6(row.rate),
            report::sig6(row.mean_accuracy),
            report::sig6(row.std_accuracy),
            report::sig6(row.mean_excess_risk)
        );
    }
    Ok(complete)
}

fn account(a: &AccountArgs) -> Result<bool> {
    let orders = default_orders();
    match (a.z, a.epsilon) {
        (Some(z), _) => println!("{}", MechanismSpec::new(z, a.q, a.steps)?.epsilon(a.delta, &orders)?),
        (None, Some(eps)) => println!(
            "{}",
            calibrate_noise(PrivacyBudget::new(eps, a.delta)?, a.q, a.steps, &orders)?
        ),
        (None, None) => return Err(Error::Config("pass --z or --epsilon".into())),
    }
    Ok(true)
}

fn curvature(a: CurvatureArgs) -> Result<bool> {
    let format = match a.format {
        FormatArg::Libsvm => Format::Libsvm,
        FormatArg::Csv => Format::Csv,
    };
    let mut cfg = ExperimentConfig::for_dataset(&a.dataset);
    cfg.dataset.format = format;
    cfg.lambda = a.lambda;
    cfg.validate()?;
    let prep = Prepared::load(&cfg)?;
    let study = CurvatureStudy {
        epsilon: a.epsilon,
        steps: a.steps,
        rate: a.rate,
        stride: a.stride,
        lambdas: a.lambda_list,
        seed: a.seed,
        nu_draws: a.nu_draws,
    };
    let traces = harness::curvature_study(&prep, &study)?;
    let out = output_dir(a.output_dir);
    let file = format!("curvature_{}.csv", prep.name);
    report::emit_plot_data(&traces, &out.join(&file))?;
    report::write_manifest(&out, &(&cfg, &study), &[file.clone().into()])?;
    println!("{}", out.join(file).display());
    Ok(true)
}

fn scale(a: ScaleArgs) -> Result<bool> {
    let mut cfg = match a.family {
        Family::Epsilon => ScalingConfig::epsilon_family(),
        Family::N => ScalingConfig::n_family(),
    };
    if let Some(p) = a.points {
        cfg.points = p;
    }
    if let Some(r) = a.repeats {
        cfg.repeats = r;
    }
    if let Some(n) = a.n {
        cfg.n = n;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let result = scaling_study(&cfg)?;
    let out = output_dir(a.output_dir);
    let file = match cfg.family {
        Family::Epsilon => "scaling_epsilon.csv",
        Family::N => "scaling_n.csv",
    };
    report::emit_scaling(&result.points, &out.join(file))?;
    report::write_manifest(&out, &cfg, &[file.into()])?;
    println!("slope\t{}\nslope_se\t{}", result.slope, result.slope_se);
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config } => run(&config),
        Command::Account(a) => account(&a),
        Command::Curvature(a) => curvature(a),
        Command::Scale(a) => scale(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
