//! Batch experiments: penalty sweeps over seeded instances comparing the
//! LASSO optimum, AMP and the state-evolution prediction, plus tables of the
//! state-evolution curves and the penalty minimizing the predicted risk.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amp::{run_amp, AmpOptions};
use crate::error::{Error, Result};
use crate::instances::{generate, Ensemble};
use crate::lasso::{solve_lasso_from, LassoOptions};
use crate::linalg::dist2;
use crate::scalar::{Prior, THREE_POINT_PRESET};
use crate::state_evolution::{self, predicted_risk, PredictionBundle, SeParams};

/// A prior given either by preset name or inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorSpec {
    Named(String),
    Inline(Prior),
}

impl PriorSpec {
    pub fn resolve(&self) -> Result<Prior> {
        match self {
            PriorSpec::Named(name) => Prior::preset(name),
            PriorSpec::Inline(p) => Ok(p.clone()),
        }
    }
}

/// Where the reference solver starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LassoStart {
    Zero,
    /// From the final AMP iterate. The answer is still certified by the KKT
    /// residual, the start only saves iterations.
    #[default]
    Amp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub delta: f64,
    pub sigma2: f64,
    pub prior: PriorSpec,
    pub lambda_grid: Vec<f64>,
    #[serde(rename = "N_list", alias = "n_list")]
    pub n_list: Vec<usize>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_ensemble")]
    pub ensemble: Ensemble,
    #[serde(default)]
    pub seed_base: u64,
    #[serde(default)]
    pub amp: AmpOptions,
    #[serde(default)]
    pub lasso: LassoOptions,
    #[serde(default)]
    pub lasso_start: LassoStart,
    /// Iteration at which the early subgradient residual is recorded.
    #[serde(default = "default_early_t")]
    pub early_t: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_ensemble() -> Ensemble {
    Ensemble::Gaussian
}

fn default_early_t() -> usize {
    10
}

impl ExperimentConfig {
    /// Penalties 0.2, 0.4, ..., 2.0 at the reference parameters, `N = 2000`,
    /// seeds `0..20`.
    pub fn reference(ensemble: Ensemble) -> Self {
        let params = SeParams::reference();
        ExperimentConfig {
            delta: params.delta,
            sigma2: params.sigma2,
            prior: PriorSpec::Named(THREE_POINT_PRESET.to_string()),
            lambda_grid: (1..=10).map(|k| k as f64 / 5.0).collect(),
            n_list: vec![2000],
            seeds: (0..20).collect(),
            ensemble,
            seed_base: 0,
            amp: AmpOptions { t_max: 100, stop_tol: 0.0, ..Default::default() },
            lasso: LassoOptions::default(),
            lasso_start: LassoStart::Amp,
            early_t: 10,
            output: None,
        }
    }

    pub fn params(&self) -> Result<SeParams> {
        SeParams::new(self.delta, self.sigma2, self.prior.resolve()?)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(m));
        if self.lambda_grid.is_empty() || self.n_list.is_empty() || self.seeds.is_empty() {
            return fail("lambda_grid, N_list and seeds must all be non-empty".into());
        }
        if let Some(l) = self.lambda_grid.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return fail(format!("lambda values must be positive, got {l}"));
        }
        if let Some(n) = self.n_list.iter().find(|n| **n < 2) {
            return fail(format!("N values must be at least 2, got {n}"));
        }
        if !(self.lasso.tol > 0.0) {
            return fail(format!("lasso tolerance must be positive, got {}", self.lasso.tol));
        }
        self.params().map_err(|e| Error::Validation(e.to_string()))?;
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    /// `N^{-1} ||x_hat - x0||^2`.
    pub mse_lasso: f64,
    /// `N^{-1} ||x^t - x0||^2` at the last AMP iterate.
    pub mse_amp: f64,
    pub mse_predicted: f64,
    /// `N^{-1} ||x^t - x_hat||^2`.
    pub amp_lasso_gap: f64,
    /// `N^{-1} ||x_hat||_1`.
    pub l1_lasso: f64,
    pub l1_predicted: f64,
    pub kkt_residual: f64,
    pub lasso_converged: bool,
    pub lasso_iterations: usize,
    pub amp_iterations: usize,
    pub subgradient_early: f64,
    pub subgradient_final: f64,
    pub time_generate: f64,
    pub time_amp: f64,
    pub time_lasso: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub lambda: f64,
    pub n_signal: usize,
    pub seed: u64,
    pub ensemble: Ensemble,
    pub outcome: std::result::Result<CellMetrics, String>,
}

impl ExperimentRecord {
    pub fn metrics(&self) -> Option<&CellMetrics> {
        self.outcome.as_ref().ok()
    }

    pub fn failed(&self) -> bool {
        self.outcome.is_err()
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    lambda: f64,
    #[serde(rename = "N")]
    n_signal: usize,
    seed: u64,
    ensemble: Ensemble,
    mse_lasso: Option<f64>,
    mse_amp: Option<f64>,
    mse_predicted: Option<f64>,
    amp_lasso_gap: Option<f64>,
    l1_lasso: Option<f64>,
    l1_predicted: Option<f64>,
    kkt_residual: Option<f64>,
    lasso_converged: Option<bool>,
    lasso_iterations: Option<usize>,
    amp_iterations: Option<usize>,
    subgradient_early: Option<f64>,
    subgradient_final: Option<f64>,
    time_generate: Option<f64>,
    time_amp: Option<f64>,
    time_lasso: Option<f64>,
    error: Option<&'a str>,
}

impl<'a> From<&'a ExperimentRecord> for CsvRow<'a> {
    fn from(r: &'a ExperimentRecord) -> Self {
        let m = r.metrics();
        CsvRow {
            lambda: r.lambda,
            n_signal: r.n_signal,
            seed: r.seed,
            ensemble: r.ensemble,
            mse_lasso: m.map(|m| m.mse_lasso),
            mse_amp: m.map(|m| m.mse_amp),
            mse_predicted: m.map(|m| m.mse_predicted),
            amp_lasso_gap: m.map(|m| m.amp_lasso_gap),
            l1_lasso: m.map(|m| m.l1_lasso),
            l1_predicted: m.map(|m| m.l1_predicted),
            kkt_residual: m.map(|m| m.kkt_residual),
            lasso_converged: m.map(|m| m.lasso_converged),
            lasso_iterations: m.map(|m| m.lasso_iterations),
            amp_iterations: m.map(|m| m.amp_iterations),
            subgradient_early: m.map(|m| m.subgradient_early),
            subgradient_final: m.map(|m| m.subgradient_final),
            time_generate: m.map(|m| m.time_generate),
            time_amp: m.map(|m| m.time_amp),
            time_lasso: m.map(|m| m.time_lasso),
            error: r.outcome.as_ref().err().map(String::as_str),
        }
    }
}

fn run_cell(
    config: &ExperimentConfig,
    params: &SeParams,
    prediction: &PredictionBundle,
    lambda: f64,
    big_n: usize,
    seed: u64,
) -> Result<CellMetrics> {
    let clock = Instant::now();
    let inst = generate(params, big_n, config.ensemble, config.seed_base.wrapping_add(seed))?;
    let time_generate = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let run = run_amp(&inst, params, lambda, &config.amp)?;
    let time_amp = clock.elapsed().as_secs_f64();
    let subgradient_at = |t: usize| {
        run.diagnostics
            .iter()
            .find(|d| d.t == t)
            .or(run.diagnostics.last())
            .and_then(|d| d.subgradient_norm)
            .unwrap_or(f64::NAN)
    };

    let clock = Instant::now();
    let start = match config.lasso_start {
        LassoStart::Zero => vec![0.0; big_n],
        LassoStart::Amp => run.state.x.clone(),
    };
    let sol = solve_lasso_from(&inst.a, &inst.y, lambda, &start, &config.lasso)?;
    let time_lasso = clock.elapsed().as_secs_f64();

    let nf = big_n as f64;
    Ok(CellMetrics {
        mse_lasso: dist2(&sol.x_hat, &inst.x0) / nf,
        mse_amp: dist2(&run.state.x, &inst.x0) / nf,
        mse_predicted: prediction.mse_predicted,
        amp_lasso_gap: dist2(&run.state.x, &sol.x_hat) / nf,
        l1_lasso: sol.x_hat.iter().map(|v| v.abs()).sum::<f64>() / nf,
        l1_predicted: prediction.l1_predicted,
        kkt_residual: sol.kkt_residual,
        lasso_converged: sol.converged,
        lasso_iterations: sol.iterations,
        amp_iterations: run.state.t,
        subgradient_early: subgradient_at(config.early_t),
        subgradient_final: subgradient_at(run.state.t),
        time_generate,
        time_amp,
        time_lasso,
    })
}

/// Runs every `(lambda, N, seed)` cell. Failures are recorded per cell and do
/// not stop the sweep; the result is sorted by `(lambda, N, seed)`.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    config.validate()?;
    let params = config.params()?;
    let predictions: Vec<std::result::Result<PredictionBundle, String>> = config
        .lambda_grid
        .iter()
        .map(|&l| predicted_risk(&params, l).map_err(|e| e.to_string()))
        .collect();

    let mut cells = Vec::new();
    for (li, &lambda) in config.lambda_grid.iter().enumerate() {
        for &big_n in &config.n_list {
            for &seed in &config.seeds {
                cells.push((li, lambda, big_n, seed));
            }
        }
    }
    let mut records: Vec<ExperimentRecord> = cells
        .into_par_iter()
        .map(|(li, lambda, big_n, seed)| {
            let outcome = match &predictions[li] {
                Ok(pred) => run_cell(config, &params, pred, lambda, big_n, seed).map_err(|e| e.to_string()),
                Err(e) => Err(format!("prediction failed: {e}")),
            };
            ExperimentRecord { lambda, n_signal: big_n, seed, ensemble: config.ensemble, outcome }
        })
        .collect();
    records.sort_by(|a, b| {
        a.lambda.total_cmp(&b.lambda).then(a.n_signal.cmp(&b.n_signal)).then(a.seed.cmp(&b.seed))
    });
    Ok(records)
}

pub fn write_records_csv<W: Write>(out: W, records: &[ExperimentRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(CsvRow::from(r))?;
    }
    w.flush()?;
    Ok(())
}

/// Seed averages for one `(lambda, N)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSummary {
    pub lambda: f64,
    #[serde(rename = "N")]
    pub n_signal: usize,
    pub cells: usize,
    pub failed: usize,
    pub mse_lasso_mean: f64,
    pub mse_lasso_stderr: f64,
    pub mse_amp_mean: f64,
    pub mse_predicted: f64,
    pub amp_lasso_gap_max: f64,
    pub kkt_residual_max: f64,
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

pub fn summarize(records: &[ExperimentRecord]) -> Vec<LambdaSummary> {
    let mut groups: BTreeMap<(u64, usize), Vec<&ExperimentRecord>> = BTreeMap::new();
    for r in records {
        // positive floats order like their bit patterns
        groups.entry((r.lambda.to_bits(), r.n_signal)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((bits, big_n), rs)| {
            let ok: Vec<&CellMetrics> = rs.iter().filter_map(|r| r.metrics()).collect();
            let (mse_lasso_mean, mse_lasso_stderr) =
                mean_and_stderr(&ok.iter().map(|m| m.mse_lasso).collect::<Vec<_>>());
            let (mse_amp_mean, _) = mean_and_stderr(&ok.iter().map(|m| m.mse_amp).collect::<Vec<_>>());
            LambdaSummary {
                lambda: f64::from_bits(bits),
                n_signal: big_n,
                cells: rs.len(),
                failed: rs.len() - ok.len(),
                mse_lasso_mean,
                mse_lasso_stderr,
                mse_amp_mean,
                mse_predicted: ok.first().map_or(f64::NAN, |m| m.mse_predicted),
                amp_lasso_gap_max: ok.iter().map(|m| m.amp_lasso_gap).fold(f64::NAN, f64::max),
                kkt_residual_max: ok.iter().map(|m| m.kkt_residual).fold(f64::NAN, f64::max),
            }
        })
        .collect()
}

pub fn write_csv<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// JSON written next to the sweep CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sidecar {
    pub version: String,
    pub config: ExperimentConfig,
    pub cells: usize,
    pub failed_cells: usize,
}

impl Sidecar {
    pub fn new(config: &ExperimentConfig, records: &[ExperimentRecord]) -> Self {
        Sidecar {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            cells: records.len(),
            failed_cells: records.iter().filter(|r| r.failed()).count(),
        }
    }
}

/// Gnuplot commands plotting a summary CSV written by [`write_csv`].
pub fn gnuplot_script(summary_csv: &str) -> String {
    format!(
        "set datafile separator ','\n\
         set key autotitle columnhead\n\
         set xlabel 'lambda'\n\
         set ylabel 'MSE'\n\
         plot '{summary_csv}' using 1:5 with points pt 7 title 'LASSO (seed mean)', \\\n     \
         '' using 1:7 with points pt 6 title 'AMP (seed mean)', \\\n     \
         '' using 1:8 with lines lw 2 title 'prediction'\n"
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapRow {
    pub tau2: f64,
    /// `F(tau^2, alpha tau)`.
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaRow {
    pub alpha: f64,
    pub tau2_star: Option<f64>,
    pub lambda: Option<f64>,
    /// Empty unless the row was skipped.
    pub warning: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeCurves {
    pub alpha_for_map: f64,
    pub map: Vec<MapRow>,
    /// `alpha -> tau_*^2(alpha)` and `alpha -> lambda(alpha)` on the same grid.
    pub by_alpha: Vec<AlphaRow>,
}

/// Tables of `tau^2 -> F(tau^2, alpha tau)` at `alpha_for_map`, and of
/// `tau_*^2` and `lambda` over `alpha_grid`. Grid points at or below
/// `alpha_min` keep their row with a warning and no values.
pub fn dump_se_curves(params: &SeParams, alpha_for_map: f64, tau2_grid: &[f64], alpha_grid: &[f64]) -> Result<SeCurves> {
    params.validate()?;
    let map = tau2_grid
        .iter()
        .map(|&tau2| {
            Ok(MapRow { tau2, f: state_evolution::se_map(params, tau2, alpha_for_map * tau2.sqrt())? })
        })
        .collect::<Result<Vec<_>>>()?;
    let amin = state_evolution::alpha_min(params.delta)?;
    let by_alpha = alpha_grid
        .iter()
        .map(|&alpha| {
            if alpha <= amin {
                log::warn!("alpha = {alpha} is not above alpha_min = {amin}; row left empty");
                return Ok(AlphaRow { alpha, tau2_star: None, lambda: None, warning: "below_alpha_min".into() });
            }
            Ok(AlphaRow {
                alpha,
                tau2_star: Some(state_evolution::tau2_star(params, alpha)?),
                lambda: Some(state_evolution::calibrate_lambda(params, alpha)?),
                warning: String::new(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SeCurves { alpha_for_map, map, by_alpha })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinLambda {
    pub lambda: f64,
    pub mse: f64,
    /// Set when the sampled profile was not unimodal and the best grid
    /// point was returned without refinement.
    pub not_unimodal: bool,
}

const PROFILE_POINTS: usize = 41;
const GOLDEN_REL_TOL: f64 = 1e-4;

/// Minimizes the predicted risk over `lambda` in `[lo, hi]`: a coarse profile
/// locates the basin, golden-section search refines it.
pub fn minimum_lambda(params: &SeParams, bracket: (f64, f64)) -> Result<MinLambda> {
    let (lo, hi) = bracket;
    if !(lo > 0.0 && hi.is_finite() && lo <= hi) {
        return Err(Error::Validation(format!("bracket must satisfy 0 < lo <= hi < inf, got ({lo}, {hi})")));
    }
    let mse = |l: f64| predicted_risk(params, l).map(|p| p.mse_predicted);
    if lo == hi {
        return Ok(MinLambda { lambda: lo, mse: mse(lo)?, not_unimodal: false });
    }
    let grid: Vec<f64> =
        (0..PROFILE_POINTS).map(|k| lo + (hi - lo) * k as f64 / (PROFILE_POINTS - 1) as f64).collect();
    let values = grid.iter().map(|&l| mse(l)).collect::<Result<Vec<_>>>()?;
    let best = (0..grid.len()).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    let unimodal = values[..=best].windows(2).all(|w| w[1] <= w[0]) && values[best..].windows(2).all(|w| w[1] >= w[0]);
    if !unimodal {
        log::warn!("predicted risk is not unimodal on [{lo}, {hi}]; returning the best grid point");
        return Ok(MinLambda { lambda: grid[best], mse: values[best], not_unimodal: true });
    }
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(grid.len() - 1)]);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (mse(c)?, mse(d)?);
    while b - a > GOLDEN_REL_TOL * 0.5 * (a + b) {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = mse(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = mse(d)?;
        }
    }
    let lambda = 0.5 * (a + b);
    let value = mse(lambda)?;
    // an endpoint of the bracket may still be the best point
    let (lambda, value) = if values[best] < value { (grid[best], values[best]) } else { (lambda, value) };
    Ok(MinLambda { lambda, mse: value, not_unimodal: false })
}
