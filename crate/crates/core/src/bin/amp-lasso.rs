use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use amp_lasso::experiments::{
    dump_se_curves, gnuplot_script, minimum_lambda, run_sweep, summarize, write_csv, write_records_csv,
    ExperimentConfig, PriorSpec, Sidecar,
};
use amp_lasso::instances::{column_norm_range, generate, singular_edge_check, Ensemble, Instance, EDGE_CHECK_MIN_N};
use amp_lasso::state_evolution::{tau2_star, SeParams};
use amp_lasso::Error;

#[derive(Parser)]
#[command(name = "amp-lasso", version, about = "AMP, state evolution and LASSO risk experiments")]
struct Cli {
    /// Worker threads for the sweep (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a penalty sweep and write records, seed averages and a JSON sidecar.
    Sweep {
        /// Experiment configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to the config's `output`, then the working directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Offset added to every seed in the config.
        #[arg(long)]
        seed_base: Option<u64>,
        /// Also write a gnuplot script for the summary table.
        #[arg(long)]
        gnuplot: bool,
    },
    /// Tables of the state-evolution map, its fixed point and the calibration.
    SeCurves {
        #[command(flatten)]
        params: ParamArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Threshold ratio for the map table.
        #[arg(long, default_value_t = 2.0)]
        alpha: f64,
        /// Upper end of the alpha grid; rows at or below alpha_min are left empty.
        #[arg(long, default_value_t = 4.0)]
        alpha_max: f64,
        /// Upper end of the tau^2 grid; defaults to twice tau_0^2.
        #[arg(long)]
        tau2_max: Option<f64>,
        /// Grid points per table.
        #[arg(long, default_value_t = 200)]
        points: usize,
    },
    /// Penalty minimizing the predicted risk.
    MinLambda {
        #[command(flatten)]
        params: ParamArgs,
        /// Lower end of the penalty bracket.
        #[arg(long, default_value_t = 0.05)]
        lo: f64,
        /// Upper end of the penalty bracket.
        #[arg(long, default_value_t = 2.0)]
        hi: f64,
        /// Directory for `min_lambda.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate (or load) an instance and check its singular values and column norms.
    CheckInstance {
        #[command(flatten)]
        params: ParamArgs,
        /// Signal dimension.
        #[arg(long = "N", default_value_t = 2000)]
        big_n: usize,
        /// Matrix ensemble: gaussian or rademacher.
        #[arg(long, default_value = "gaussian")]
        ensemble: Ensemble,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Offset added to `--seed`.
        #[arg(long)]
        seed_base: Option<u64>,
        /// Read this instance container instead of generating one.
        #[arg(long)]
        instance: Option<PathBuf>,
        /// Write the instance container here.
        #[arg(long)]
        save: Option<PathBuf>,
        /// Directory for `instance_check.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ParamArgs {
    /// JSON file providing `delta`, `sigma2` and `prior`; other keys are ignored.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Deserialize)]
struct ParamsOnly {
    delta: f64,
    sigma2: f64,
    prior: PriorSpec,
}

impl ParamArgs {
    fn load(&self) -> amp_lasso::Result<SeParams> {
        let Some(path) = &self.config else {
            return Ok(SeParams::reference());
        };
        let text = fs::read_to_string(path)?;
        let p: ParamsOnly =
            serde_json::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
        SeParams::new(p.delta, p.sigma2, p.prior.resolve()?)
    }
}

enum Failure {
    Validation(String),
    Cells(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_)
            | Error::Validation(_)
            | Error::OutOfDomain { .. }
            | Error::DimensionMismatch(_)
            | Error::Json(_) => Failure::Validation(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn out_dir(path: Option<PathBuf>) -> Result<PathBuf, Failure> {
    let dir = path.unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn sweep(config: &Path, out: Option<PathBuf>, seed_base: Option<u64>, gnuplot: bool) -> Result<(), Failure> {
    let mut cfg = ExperimentConfig::from_json_file(config)?;
    if let Some(base) = seed_base {
        cfg.seed_base = base;
    }
    let dir = out_dir(out.or_else(|| cfg.output.clone()))?;
    cfg.validate()?;
    let records = run_sweep(&cfg)?;
    write_records_csv(create(&dir, "records.csv")?, &records)?;
    let summary = summarize(&records);
    write_csv(create(&dir, "summary.csv")?, &summary)?;
    serde_json::to_writer_pretty(create(&dir, "sweep.json")?, &Sidecar::new(&cfg, &records)).map_err(Error::from)?;
    if gnuplot {
        fs::write(dir.join("summary.gp"), gnuplot_script("summary.csv"))?;
    }
    for s in &summary {
        println!(
            "lambda={:<6} N={:<6} mse_lasso={:.5} (+-{:.5}) mse_amp={:.5} predicted={:.5} failed={}",
            s.lambda, s.n_signal, s.mse_lasso_mean, s.mse_lasso_stderr, s.mse_amp_mean, s.mse_predicted, s.failed
        );
    }
    let failed = records.iter().filter(|r| r.failed()).count();
    if failed > 0 {
        return Err(Failure::Cells(format!("{failed} of {} cells failed", records.len())));
    }
    Ok(())
}

fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let steps = points.max(2) - 1;
    (0..=steps).map(|k| lo + (hi - lo) * k as f64 / steps as f64).collect()
}

fn se_curves(
    params: &SeParams,
    out: PathBuf,
    alpha: f64,
    alpha_max: f64,
    tau2_max: Option<f64>,
    points: usize,
) -> Result<(), Failure> {
    if points < 2 || !(alpha_max > 0.0) {
        return Err(Failure::Validation("need at least two points and a positive alpha_max".into()));
    }
    let tau2_max = tau2_max.unwrap_or(2.0 * params.initial_tau2());
    let tau2_grid = linspace(tau2_max / points as f64, tau2_max, points);
    let alpha_grid = linspace(alpha_max / points as f64, alpha_max, points);
    let curves = dump_se_curves(params, alpha, &tau2_grid, &alpha_grid)?;
    let dir = out_dir(Some(out))?;
    write_csv(create(&dir, "se_map.csv")?, &curves.map)?;
    let tau_rows: Vec<_> = curves.by_alpha.iter().map(|r| (r.alpha, r.tau2_star, r.warning.as_str())).collect();
    let lambda_rows: Vec<_> = curves.by_alpha.iter().map(|r| (r.alpha, r.lambda, r.warning.as_str())).collect();
    write_tuples(create(&dir, "tau2_star.csv")?, ["alpha", "tau2_star", "warning"], &tau_rows)?;
    write_tuples(create(&dir, "lambda.csv")?, ["alpha", "lambda", "warning"], &lambda_rows)?;
    if let Ok(t) = tau2_star(params, alpha) {
        println!("alpha={alpha} tau2_star={t}");
    }
    Ok(())
}

fn write_tuples<W: std::io::Write>(
    out: W,
    header: [&str; 3],
    rows: &[(f64, Option<f64>, &str)],
) -> Result<(), Failure> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Failure::from(Error::from(e));
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn check_instance(
    params: &SeParams,
    big_n: usize,
    ensemble: Ensemble,
    seed: u64,
    instance: Option<PathBuf>,
    save: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let inst = match instance {
        Some(path) => Instance::read_from(std::io::BufReader::new(File::open(path)?))?,
        None => generate(params, big_n, ensemble, seed)?,
    };
    if let Some(path) = save {
        inst.write_to(BufWriter::new(File::create(path)?))?;
    }
    let edges = singular_edge_check(&inst.a, inst.delta)?;
    let (col_max, col_min) = column_norm_range(&inst.a);
    // enforced from the same size as the edge band
    let columns_ok = (inst.n_signal() >= EDGE_CHECK_MIN_N)
        .then(|| (col_max - 1.0).abs() <= 0.1 && (col_min - 1.0).abs() <= 0.1);
    let report = serde_json::json!({
        "N": inst.n_signal(),
        "n": inst.n_measurements(),
        "ensemble": inst.ensemble,
        "seed": inst.seed,
        "singular_values": edges,
        "column_norm_max": col_max,
        "column_norm_min": col_min,
        "column_norms_within_10_percent": columns_ok,
    });
    let text = serde_json::to_string_pretty(&report).map_err(Error::from)?;
    println!("{text}");
    if let Some(dir) = out {
        fs::write(out_dir(Some(dir))?.join("instance_check.json"), &text)?;
    }
    if edges.pass == Some(false) || columns_ok == Some(false) {
        return Err(Failure::Cells("instance check failed".into()));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    match cli.command {
        Command::Sweep { config, out, seed_base, gnuplot } => sweep(&config, out, seed_base, gnuplot),
        Command::SeCurves { params, out, alpha, alpha_max, tau2_max, points } => {
            se_curves(&params.load()?, out, alpha, alpha_max, tau2_max, points)
        }
        Command::MinLambda { params, lo, hi, out } => {
            let m = minimum_lambda(&params.load()?, (lo, hi))?;
            let text = serde_json::to_string_pretty(&m).map_err(Error::from)?;
            println!("{text}");
            if let Some(dir) = out {
                fs::write(out_dir(Some(dir))?.join("min_lambda.json"), text)?;
            }
            Ok(())
        }
        Command::CheckInstance { params, big_n, ensemble, seed, seed_base, instance, save, out } => {
            let seed = seed_base.unwrap_or(0).wrapping_add(seed);
            check_instance(&params.load()?, big_n, ensemble, seed, instance, save, out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Cells(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
