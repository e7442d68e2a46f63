//! The AMP iteration for the LASSO
//!
//! ```text
//! x^{t+1} = eta(A^T z^t + x^t; theta_t)
//! z^t     = y - A x^t + (1/delta) z^{t-1} <eta'(A^T z^{t-1} + x^{t-1}; theta_{t-1})>
//! ```
//!
//! started from `x^0 = 0`, `z^0 = y`, together with the per-iteration
//! diagnostics used to compare it against state evolution and the LASSO
//! optimum.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::instances::Instance;
use crate::linalg::{dist2, norm2, DenseMatrix};
use crate::scalar::{shrink, shrink_active};
use crate::state_evolution::{self, SeParams};

/// How `theta_t` is chosen at each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdPolicy {
    /// `theta_t = alpha(lambda) tau_t` with `tau_t` from state evolution.
    #[default]
    StateEvolution,
    /// `theta_t = alpha(lambda) ||z^t|| / sqrt(n)`. Not covered by the
    /// asymptotic theory.
    Empirical,
    /// `theta_t` solves `theta (1 - <eta'(A^T z^t + x^t; theta)> / delta) = lambda`
    /// on the current iterate, the finite-size version of the calibration.
    /// Fixed points of AMP under this policy are exact LASSO minimizers.
    Calibrated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AmpOptions {
    pub t_max: usize,
    /// Stop once `N^{-1/2} ||x^{t+1} - x^t||` drops to this value.
    pub stop_tol: f64,
    pub policy: ThresholdPolicy,
    /// Margin of the near-boundary set `S_t(gamma)` in the diagnostics.
    pub gamma: f64,
}

impl Default for AmpOptions {
    fn default() -> Self {
        AmpOptions { t_max: 200, stop_tol: 1e-8, policy: ThresholdPolicy::StateEvolution, gamma: 0.1 }
    }
}

/// AMP iterate `(x^t, z^t)` plus what the next step and the diagnostics need.
#[derive(Debug, Clone, PartialEq)]
pub struct AmpState {
    pub t: usize,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    /// `A^T z^t`.
    pub at_z: Vec<f64>,
    /// State-evolution scale attached to this iterate (`NaN` when unknown).
    pub tau_t: f64,
    /// Threshold that produced `x^t` (`0` at `t = 0`).
    pub theta_prev: f64,
    /// Coefficient of `z^{t-1}` in `z^t`.
    pub onsager: f64,
}

impl AmpState {
    /// `x^0 = 0`, `z^0 = y`, no Onsager term.
    pub fn initial(a: &DenseMatrix, y: &[f64]) -> Result<Self> {
        if y.len() != a.rows() {
            return Err(Error::DimensionMismatch(format!("y has {} entries, A has {} rows", y.len(), a.rows())));
        }
        Ok(AmpState {
            t: 0,
            x: vec![0.0; a.cols()],
            z: y.to_vec(),
            at_z: a.mul_t_vec(y),
            tau_t: f64::NAN,
            theta_prev: 0.0,
            onsager: 0.0,
        })
    }

    /// `A^T z^t + x^t`, the input to the next thresholding.
    pub fn pre_threshold(&self) -> Vec<f64> {
        self.at_z.iter().zip(&self.x).map(|(a, b)| a + b).collect()
    }
}

/// One AMP step with threshold `theta`.
pub fn amp_step(state: &AmpState, a: &DenseMatrix, y: &[f64], theta: f64) -> Result<AmpState> {
    step(state, a, y, theta, None)
}

/// [`amp_step`] with a prescribed Onsager coefficient.
///
/// When `theta` sits exactly at some `|u_i|`, the derivative of the soft
/// threshold at that entry can be any value in `[0, 1]`, so the coefficient
/// can be anything between the strict and inclusive active fractions. The
/// calibrated policy uses this to make `theta (1 - onsager)` equal `lambda`
/// exactly.
pub fn amp_step_with_onsager(
    state: &AmpState,
    a: &DenseMatrix,
    y: &[f64],
    theta: f64,
    onsager: f64,
) -> Result<AmpState> {
    if !(onsager.is_finite() && onsager >= 0.0) {
        return Err(invalid(format!("Onsager coefficient must be finite and nonnegative, got {onsager}")));
    }
    step(state, a, y, theta, Some(onsager))
}

fn step(state: &AmpState, a: &DenseMatrix, y: &[f64], theta: f64, onsager: Option<f64>) -> Result<AmpState> {
    let (n, big_n) = (a.rows(), a.cols());
    if y.len() != n || state.x.len() != big_n || state.z.len() != n || state.at_z.len() != big_n {
        return Err(Error::DimensionMismatch(format!(
            "A is {n}x{big_n}; y, x, z, A^T z have {}, {}, {}, {}",
            y.len(),
            state.x.len(),
            state.z.len(),
            state.at_z.len()
        )));
    }
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(invalid(format!("threshold must be nonnegative and finite, got {theta}")));
    }
    let mut active = 0usize;
    let x: Vec<f64> = state
        .at_z
        .iter()
        .zip(&state.x)
        .map(|(g, xi)| {
            let u = g + xi;
            active += usize::from(shrink_active(u, theta));
            shrink(u, theta)
        })
        .collect();
    // (1/delta) <eta'> = (N/n) (active/N)
    let onsager = onsager.unwrap_or(active as f64 / n as f64);
    let mut z = a.mul_vec(&x);
    for ((zi, yi), zp) in z.iter_mut().zip(y).zip(&state.z) {
        *zi = yi - *zi + onsager * zp;
    }
    let at_z = a.mul_t_vec(&z);
    let t = state.t + 1;
    if !(x.iter().all(|v| v.is_finite()) && z.iter().all(|v| v.is_finite())) {
        return Err(Error::Divergence { t });
    }
    Ok(AmpState { t, x, z, at_z, tau_t: f64::NAN, theta_prev: theta, onsager })
}

/// The threshold `theta` with `theta (1 - #{|u_i| > theta} / n) = lambda`,
/// taking the generalized inverse at the jumps of the left-hand side.
pub fn calibrated_threshold(u: &[f64], lambda: f64, n: usize) -> f64 {
    let mut mags: Vec<f64> = u.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let nf = n as f64;
    let last = mags.len().min(n.saturating_sub(1));
    for k in 0..=last {
        let upper = if k == 0 { f64::INFINITY } else { mags[k - 1] };
        let lower = mags.get(k).copied().unwrap_or(0.0);
        let c = 1.0 - k as f64 / nf;
        if lambda < lower * c {
            continue;
        }
        return if lambda < upper * c { lambda / c } else { upper };
    }
    mags.get(last).copied().unwrap_or(lambda)
}

/// Per-iteration record. The step-dependent fields are absent at `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmpDiagnostics {
    pub t: usize,
    pub theta_t: Option<f64>,
    pub tau2_se: f64,
    pub z_norm2_over_n: f64,
    pub mse_vs_x0: f64,
    pub delta_x_norm: Option<f64>,
    pub subgradient_norm: Option<f64>,
    pub active_set_size: Option<usize>,
    pub active_set_jaccard_prev: Option<f64>,
}

/// Result of [`run_amp`]: the final state, the diagnostics and the
/// calibration that set the thresholds.
#[derive(Debug, Clone)]
pub struct AmpRun {
    pub state: AmpState,
    pub diagnostics: Vec<AmpDiagnostics>,
    pub alpha: f64,
    /// `tau_t^2` for `t = 0..=t_max`.
    pub tau2_se: Vec<f64>,
}

pub fn run_amp(instance: &Instance, params: &SeParams, lambda: f64, opts: &AmpOptions) -> Result<AmpRun> {
    run_amp_with(instance, params, lambda, opts, |_, _| {})
}

/// [`run_amp`] with an observer called as `observer(previous, current)` after every step.
pub fn run_amp_with<F>(
    instance: &Instance,
    params: &SeParams,
    lambda: f64,
    opts: &AmpOptions,
    mut observer: F,
) -> Result<AmpRun>
where
    F: FnMut(&AmpState, &AmpState),
{
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("lambda must be positive, got {lambda}")));
    }
    if !(opts.gamma > 0.0 && opts.gamma < 1.0) {
        return Err(invalid(format!("gamma must lie in (0, 1), got {}", opts.gamma)));
    }
    let (a, y, x0) = (&instance.a, instance.y.as_slice(), instance.x0.as_slice());
    let (n, big_n) = (a.rows(), a.cols());
    let alpha = state_evolution::invert_calibration(params, lambda)?;
    let tau2_se = state_evolution::se_sequence(params, alpha, params.initial_tau2(), opts.t_max)?;
    let inv_sqrt_n = 1.0 / (big_n as f64).sqrt();

    let mut state = AmpState::initial(a, y)?;
    state.tau_t = tau2_se[0].sqrt();
    let mut diagnostics = vec![AmpDiagnostics {
        t: 0,
        theta_t: None,
        tau2_se: tau2_se[0],
        z_norm2_over_n: norm2(&state.z) / n as f64,
        mse_vs_x0: dist2(&state.x, x0) / big_n as f64,
        delta_x_norm: None,
        subgradient_norm: None,
        active_set_size: None,
        active_set_jaccard_prev: None,
    }];
    let mut prev_set: Option<Vec<bool>> = None;

    for t in 0..opts.t_max {
        let mut next = match opts.policy {
            ThresholdPolicy::StateEvolution => amp_step(&state, a, y, alpha * tau2_se[t].sqrt())?,
            ThresholdPolicy::Empirical => amp_step(&state, a, y, alpha * (norm2(&state.z) / n as f64).sqrt())?,
            ThresholdPolicy::Calibrated => {
                let theta = calibrated_threshold(&state.pre_threshold(), lambda, n);
                amp_step_with_onsager(&state, a, y, theta, (1.0 - lambda / theta).max(0.0))?
            }
        };
        let theta = next.theta_prev;
        next.tau_t = tau2_se[t + 1].sqrt();

        let u = state.pre_threshold();
        let set: Vec<bool> = u
            .iter()
            .zip(&next.x)
            .map(|(ui, xi)| ((ui - xi) / theta).abs() >= 1.0 - opts.gamma)
            .collect();
        let size = set.iter().filter(|b| **b).count();
        let jaccard = prev_set.as_ref().map(|p| jaccard(p, &set));
        let subgradient = cached_subgradient(&state, &next, &u, lambda, theta)?;
        let delta_x = dist2(&next.x, &state.x).sqrt() * inv_sqrt_n;

        diagnostics.push(AmpDiagnostics {
            t: next.t,
            theta_t: Some(theta),
            tau2_se: tau2_se[t + 1],
            z_norm2_over_n: norm2(&next.z) / n as f64,
            mse_vs_x0: dist2(&next.x, x0) / big_n as f64,
            delta_x_norm: Some(delta_x),
            subgradient_norm: Some(subgradient),
            active_set_size: Some(size),
            active_set_jaccard_prev: jaccard,
        });
        observer(&state, &next);
        prev_set = Some(set);
        state = next;
        if delta_x <= opts.stop_tol {
            break;
        }
    }
    Ok(AmpRun { state, diagnostics, alpha, tau2_se })
}

fn jaccard(a: &[bool], b: &[bool]) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (x, y) in a.iter().zip(b) {
        inter += usize::from(*x && *y);
        union += usize::from(*x || *y);
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// The subgradient `s^t`: `sign(x^t_i)` on the support, the scaled
/// pre-threshold value elsewhere.
fn subgradient_vector(x: &[f64], u_prev: &[f64], theta_prev: f64) -> Result<Vec<f64>> {
    let s: Vec<f64> = x
        .iter()
        .zip(u_prev)
        .map(|(xi, ui)| if *xi != 0.0 { xi.signum() } else { ui / theta_prev })
        .collect();
    if let Some((i, v)) = s.iter().enumerate().find(|(_, v)| v.abs() > 1.0 + 1e-12) {
        return Err(Error::InternalConsistency(format!("subgradient entry {i} is {v}, outside [-1, 1]")));
    }
    Ok(s)
}

/// Uses `y - A x^t = z^t - onsager_t z^{t-1}` so no extra products are needed.
fn cached_subgradient(prev: &AmpState, cur: &AmpState, u_prev: &[f64], lambda: f64, theta: f64) -> Result<f64> {
    if theta == 0.0 {
        return Ok(f64::NAN);
    }
    let s = subgradient_vector(&cur.x, u_prev, theta)?;
    let sq: f64 = s
        .iter()
        .zip(cur.at_z.iter().zip(&prev.at_z))
        .map(|(si, (g, gp))| {
            let d = lambda * si - (g - cur.onsager * gp);
            d * d
        })
        .sum();
    Ok((sq / s.len() as f64).sqrt())
}

/// `N^{-1/2} ||lambda s^t - A^T (y - A x^t)||` for consecutive iterates.
pub fn subgradient_residual(
    state: &AmpState,
    prev_state: &AmpState,
    a: &DenseMatrix,
    y: &[f64],
    lambda: f64,
    theta_prev: f64,
) -> Result<f64> {
    if state.x.len() != a.cols() || prev_state.x.len() != a.cols() || y.len() != a.rows() {
        return Err(Error::DimensionMismatch("iterates do not match A".into()));
    }
    if !(theta_prev > 0.0) {
        return Err(invalid(format!("previous threshold must be positive, got {theta_prev}")));
    }
    let s = subgradient_vector(&state.x, &prev_state.pre_threshold(), theta_prev)?;
    let ax = a.mul_vec(&state.x);
    let resid: Vec<f64> = y.iter().zip(&ax).map(|(yi, v)| yi - v).collect();
    let corr = a.mul_t_vec(&resid);
    let sq: f64 = s.iter().zip(&corr).map(|(si, c)| (lambda * si - c).powi(2)).sum();
    Ok((sq / s.len() as f64).sqrt())
}

/// `S_t(gamma) = {i : |v^t_i| >= 1 - gamma}` with
/// `v^t = (x^{t-1} + A^T z^{t-1} - x^t) / theta_{t-1}`.
pub fn active_set(state: &AmpState, prev_state: &AmpState, theta_prev: f64, gamma: f64) -> Result<Vec<usize>> {
    if state.x.len() != prev_state.x.len() || prev_state.at_z.len() != prev_state.x.len() {
        return Err(Error::DimensionMismatch("iterates have different lengths".into()));
    }
    if !(gamma > 0.0 && gamma < 1.0) || !(theta_prev > 0.0) {
        return Err(invalid(format!("need 0 < gamma < 1 and theta > 0, got {gamma}, {theta_prev}")));
    }
    Ok(prev_state
        .pre_threshold()
        .iter()
        .zip(&state.x)
        .enumerate()
        .filter(|(_, (u, x))| ((*u - *x) / theta_prev).abs() >= 1.0 - gamma)
        .map(|(i, _)| i)
        .collect())
}

/// Asymptotic `|S_t(gamma)| / N` at scale `tau` and threshold `theta`:
/// `E{eta'} + P{(1 - gamma) theta <= |X0 + tau Z| <= theta}`.
pub fn active_set_limit(params: &SeParams, tau: f64, theta: f64, gamma: f64) -> Result<f64> {
    let prior = &params.prior;
    Ok(crate::scalar::eta_prime_expectation(prior, tau, theta)?
        + crate::scalar::abs_band_probability(prior, tau, (1.0 - gamma) * theta, theta)?)
}

pub fn write_diagnostics_csv<W: Write>(out: W, rows: &[AmpDiagnostics]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
