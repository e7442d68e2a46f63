//! State evolution for AMP with the threshold policy `theta_t = alpha * tau_t`:
//! the scalar recursion, its fixed point, the `alpha_min` boundary, the
//! calibration between `alpha` and the LASSO penalty, the asymptotic risk,
//! and the two-time covariance recursion.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::{self, normal_cdf, normal_pdf, Prior};

/// Relative step size at which the plain fixed-point iteration stops.
pub const FIXED_POINT_TOL: f64 = 1e-12;
pub const FIXED_POINT_MAX_ITER: usize = 100_000;

const NEWTON_TOL: f64 = 1e-14;
const NEWTON_MAX_ITER: usize = 500;
const ALPHA_MIN_TOL: f64 = 1e-14;
const CALIBRATION_TOL: f64 = 1e-9;
const BRACKET_LIMIT: f64 = 1e6;
const TWO_TIME_DIAG_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeParams {
    pub delta: f64,
    pub sigma2: f64,
    pub prior: Prior,
}

impl SeParams {
    pub fn new(delta: f64, sigma2: f64, prior: Prior) -> Result<Self> {
        let p = SeParams { delta, sigma2, prior };
        p.validate()?;
        Ok(p)
    }

    /// The reference configuration: `delta = 0.64`,
    /// `sigma^2 = 0.2`, three-point prior with `P(+-1) = 0.064`.
    pub fn reference() -> Self {
        SeParams {
            delta: 0.64,
            sigma2: 0.2,
            prior: Prior::preset(scalar::THREE_POINT_PRESET).expect("preset is valid"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(invalid(format!("delta must be positive, got {}", self.delta)));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(invalid(format!("sigma2 must be positive, got {}", self.sigma2)));
        }
        Ok(())
    }

    /// `tau_0^2 = sigma^2 + E{X0^2} / delta`.
    pub fn initial_tau2(&self) -> f64 {
        self.sigma2 + self.prior.second_moment() / self.delta
    }
}

/// `F(tau^2, theta) = sigma^2 + E{[eta(X0 + tau Z; theta) - X0]^2} / delta`.
pub fn se_map(params: &SeParams, tau2: f64, theta: f64) -> Result<f64> {
    if !(tau2 > 0.0) {
        return Err(invalid(format!("tau2 must be positive, got {tau2}")));
    }
    Ok(params.sigma2 + scalar::mse_functional(&params.prior, tau2.sqrt(), theta)? / params.delta)
}

fn along_ray(params: &SeParams, tau2: f64, alpha: f64) -> Result<f64> {
    se_map(params, tau2, alpha * tau2.sqrt())
}

/// `f(alpha) = (1 + alpha^2) Phi(-alpha) - alpha phi(alpha)`, decreasing from 1/2 to 0.
pub fn alpha_min_function(alpha: f64) -> f64 {
    (1.0 + alpha * alpha) * normal_cdf(-alpha) - alpha * normal_pdf(alpha)
}

/// Root of `f(alpha) = delta / 2`. Returns 0 when `delta >= 1`, where every
/// `alpha > 0` is admissible.
pub fn alpha_min(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(invalid(format!("delta must be positive, got {delta}")));
    }
    if delta >= 1.0 {
        return Ok(0.0);
    }
    let target = 0.5 * delta;
    let g = |a: f64| alpha_min_function(a) - target;
    let (mut lo, mut hi) = (0.0, 1.0);
    while g(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    // Newton on a decreasing function, falling back to bisection when a step
    // leaves the bracket.
    let mut a = 0.5 * (lo + hi);
    for _ in 0..200 {
        let ga = g(a);
        if ga.abs() <= ALPHA_MIN_TOL * target.max(1e-300) || hi - lo <= 1e-16 * hi {
            break;
        }
        if ga > 0.0 {
            lo = a;
        } else {
            hi = a;
        }
        let slope = 2.0 * a * normal_cdf(-a) - 2.0 * normal_pdf(a);
        let next = a - ga / slope;
        a = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
    }
    Ok(a)
}

/// Iterates of the state-evolution recursion and its fixed point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeTrajectory {
    pub tau2_sequence: Vec<f64>,
    pub theta_sequence: Vec<f64>,
    pub alpha: f64,
    pub converged: bool,
    pub tau2_star: f64,
}

fn check_alpha(params: &SeParams, alpha: f64) -> Result<f64> {
    params.validate()?;
    let amin = alpha_min(params.delta)?;
    if alpha > amin && alpha.is_finite() {
        Ok(amin)
    } else {
        Err(Error::OutOfDomain { alpha, alpha_min: amin })
    }
}

/// Runs `steps` iterations of `tau^2 <- F(tau^2, alpha tau)` from `tau2_init`,
/// returning all `steps + 1` values.
pub fn se_sequence(params: &SeParams, alpha: f64, tau2_init: f64, steps: usize) -> Result<Vec<f64>> {
    let mut seq = Vec::with_capacity(steps + 1);
    let mut tau2 = tau2_init;
    seq.push(tau2);
    for _ in 0..steps {
        tau2 = along_ray(params, tau2, alpha)?;
        seq.push(tau2);
    }
    Ok(seq)
}

/// Plain fixed-point iteration from `tau2_init` until the relative step
/// drops below [`FIXED_POINT_TOL`].
pub fn fixed_point_from(params: &SeParams, alpha: f64, tau2_init: f64) -> Result<SeTrajectory> {
    check_alpha(params, alpha)?;
    if !(tau2_init > 0.0 && tau2_init.is_finite()) {
        return Err(invalid(format!("initial tau2 must be positive, got {tau2_init}")));
    }
    let mut tau2_sequence = vec![tau2_init];
    let mut tau2 = tau2_init;
    let mut converged = false;
    for _ in 0..FIXED_POINT_MAX_ITER {
        let next = along_ray(params, tau2, alpha)?;
        tau2_sequence.push(next);
        let step = (next - tau2).abs();
        tau2 = next;
        if step <= FIXED_POINT_TOL * tau2.max(1.0) {
            converged = true;
            break;
        }
    }
    let theta_sequence = tau2_sequence.iter().map(|t2| alpha * t2.sqrt()).collect();
    let trajectory = SeTrajectory { tau2_sequence, theta_sequence, alpha, converged, tau2_star: tau2 };
    if !converged {
        return Err(Error::NotConverged { trajectory: Box::new(trajectory) });
    }
    if !is_monotone(&trajectory.tau2_sequence) {
        return Err(Error::InternalConsistency(format!(
            "state-evolution trajectory for alpha = {alpha} is not monotone"
        )));
    }
    let residual = (tau2 - along_ray(params, tau2, alpha)?).abs();
    if residual > 1e-10 * tau2.max(1.0) {
        return Err(Error::InternalConsistency(format!("fixed-point residual {residual:e} too large")));
    }
    Ok(trajectory)
}

/// Fixed point reached from `tau_0^2 = sigma^2 + E{X0^2}/delta`.
pub fn fixed_point(params: &SeParams, alpha: f64) -> Result<SeTrajectory> {
    fixed_point_from(params, alpha, params.initial_tau2())
}

/// Monotone up to rounding in the last few bits.
fn is_monotone(seq: &[f64]) -> bool {
    let slack = |a: f64, b: f64| 1e-14 * a.abs().max(b.abs());
    let up = seq.windows(2).all(|w| w[1] >= w[0] - slack(w[0], w[1]));
    let down = seq.windows(2).all(|w| w[1] <= w[0] + slack(w[0], w[1]));
    up || down
}

/// `tau_*^2(alpha)` by safeguarded Newton on `F(s, alpha sqrt(s)) - s`.
///
/// The map is concave in `s` with `F(0) > 0`, so `F(s) > s` exactly to the
/// left of the root, and a Newton step taken where the slope of `F` is below
/// one lands on or to the right of the root. Left of the root with slope at
/// least one, `s` is doubled instead. From the right Newton decreases
/// monotonically, which stays fast close to `alpha_min` where `tau_*^2`
/// blows up and the plain iteration contracts very slowly.
pub fn tau2_star(params: &SeParams, alpha: f64) -> Result<f64> {
    check_alpha(params, alpha)?;
    let mut s = params.initial_tau2();
    for _ in 0..NEWTON_MAX_ITER {
        let fs = along_ray(params, s, alpha)?;
        let g = fs - s;
        if g.abs() <= NEWTON_TOL * s.max(1.0) {
            return Ok(fs);
        }
        let slope = se_derivative(params, s, alpha)? - 1.0;
        let newton = s - g / slope;
        let next = if slope < 0.0 && newton > params.sigma2 && newton.is_finite() {
            newton
        } else if g > 0.0 {
            fs.max(2.0 * s)
        } else {
            fs
        };
        if next == s {
            // rounding floor reached
            return Ok(fs);
        }
        s = next;
    }
    // Fall back to the certified plain iteration.
    fixed_point(params, alpha).map(|t| t.tau2_star)
}

/// Total derivative `dF/d(tau^2)` along `theta = alpha tau`.
pub fn se_derivative(params: &SeParams, tau2: f64, alpha: f64) -> Result<f64> {
    if !(tau2 > 0.0) {
        return Err(invalid(format!("tau2 must be positive, got {tau2}")));
    }
    let tau = tau2.sqrt();
    let total: f64 = params
        .prior
        .support()
        .map(|(x, w)| {
            let a = (x - alpha * tau) / tau;
            let b = (-x - alpha * tau) / tau;
            let active = normal_cdf(a) + normal_cdf(b);
            let edge = (x + alpha * tau) / tau * normal_pdf(a) - (x - alpha * tau) / tau * normal_pdf(b);
            w * ((1.0 + alpha * alpha) * active - edge)
        })
        .sum();
    Ok(total / params.delta)
}

/// `lambda(alpha) = alpha tau_* [1 - E{eta'(X0 + tau_* Z; alpha tau_*)} / delta]`.
pub fn calibrate_lambda(params: &SeParams, alpha: f64) -> Result<f64> {
    let tau = tau2_star(params, alpha)?.sqrt();
    let theta = alpha * tau;
    let active = scalar::eta_prime_expectation(&params.prior, tau, theta)?;
    Ok(theta * (1.0 - active / params.delta))
}

/// Finds `alpha > alpha_min` with `lambda(alpha) = lambda`.
///
/// Only uniqueness of the root is assumed, not monotonicity of
/// `lambda(alpha)`: the search keeps a bracket `lambda(lo) < lambda <=
/// lambda(hi)`, growing the upper end geometrically, and bisects it.
/// Non-positive targets are accepted; the root is unique for `lambda > 0`.
pub fn invert_calibration(params: &SeParams, lambda: f64) -> Result<f64> {
    if !lambda.is_finite() {
        return Err(invalid(format!("lambda must be finite, got {lambda}")));
    }
    params.validate()?;
    let amin = alpha_min(params.delta)?;
    let resid = |a: f64| calibrate_lambda(params, a).map(|l| l - lambda);

    let mut lo = amin + 1e-6;
    let mut shrinks = 0;
    while resid(lo)? >= 0.0 {
        shrinks += 1;
        if shrinks > 60 {
            return Err(Error::NoSolution(format!("lambda(alpha) stays above {lambda} near alpha_min")));
        }
        lo = amin + 0.5 * (lo - amin);
    }
    let mut width = 1.0;
    let mut hi = amin + width;
    while resid(hi)? < 0.0 {
        lo = hi;
        width *= 2.0;
        hi = amin + width;
        if hi > BRACKET_LIMIT {
            return Err(Error::NoSolution(format!("no alpha below {BRACKET_LIMIT} reaches lambda = {lambda}")));
        }
    }

    let scale = lambda.abs().max(1.0);
    let mut best = (hi, resid(hi)?.abs());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let r = resid(mid)?;
        if r.abs() < best.1 {
            best = (mid, r.abs());
        }
        if r.abs() <= 1e-3 * CALIBRATION_TOL * scale || hi - lo <= 1e-15 * hi {
            break;
        }
        if r < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if best.1 > CALIBRATION_TOL * scale {
        return Err(Error::NoSolution(format!(
            "bisection for lambda = {lambda} stalled with residual {:e}",
            best.1
        )));
    }
    Ok(best.0)
}

/// Asymptotic prediction for the LASSO at penalty `lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionBundle {
    pub tau2_star: f64,
    pub theta_star: f64,
    pub alpha: f64,
    pub lambda: f64,
    /// `delta (tau_*^2 - sigma^2)`.
    pub mse_predicted: f64,
    /// `E{|eta(X0 + tau_* Z; theta_*)|}`.
    pub l1_predicted: f64,
    /// `E{eta'(X0 + tau_* Z; theta_*)}`, the asymptotic fraction of nonzeros.
    pub sparsity_predicted: f64,
    /// `E{[eta(X0 + tau_* Z; theta_*) - X0]^2}`, evaluated directly.
    #[serde(skip)]
    pub mse_direct: f64,
}

pub fn predicted_risk(params: &SeParams, lambda: f64) -> Result<PredictionBundle> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("lambda must be positive, got {lambda}")));
    }
    if params.prior.prob_nonzero() <= 0.0 {
        return Err(invalid("the prior must put positive mass away from zero"));
    }
    let alpha = invert_calibration(params, lambda)?;
    let tau2 = tau2_star(params, alpha)?;
    let tau = tau2.sqrt();
    let theta = alpha * tau;
    let prior = &params.prior;
    let mse_direct = scalar::mse_functional(prior, tau, theta)?;
    let mse_predicted = params.delta * (tau2 - params.sigma2);
    if (mse_direct - mse_predicted).abs() > 1e-10 * mse_direct.max(1.0) {
        return Err(Error::InternalConsistency(format!(
            "risk formulas disagree: {mse_direct} vs {mse_predicted}"
        )));
    }
    Ok(PredictionBundle {
        tau2_star: tau2,
        theta_star: theta,
        alpha,
        lambda,
        mse_predicted,
        l1_predicted: scalar::l1_functional(prior, tau, theta)?,
        sparsity_predicted: scalar::eta_prime_expectation(prior, tau, theta)?,
        mse_direct,
    })
}

/// Covariances `R_{s,t}` of the effective noises at iterations `s` and `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoTimeCov {
    dim: usize,
    entries: Vec<f64>,
}

impl TwoTimeCov {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, s: usize, t: usize) -> f64 {
        self.entries[s * self.dim + t]
    }

    fn set(&mut self, s: usize, t: usize, v: f64) {
        self.entries[s * self.dim + t] = v;
        self.entries[t * self.dim + s] = v;
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|t| self.get(t, t)).collect()
    }

    /// Pivots of the Cholesky factorization, in order. Their running
    /// products are the leading principal minors.
    pub fn cholesky_pivots(&self) -> Vec<f64> {
        let n = self.dim;
        let mut l = vec![0.0; n * n];
        let mut pivots = Vec::with_capacity(n);
        for j in 0..n {
            let mut d = self.get(j, j);
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            pivots.push(d);
            let root = d.max(0.0).sqrt();
            for i in j + 1..n {
                let mut v = self.get(i, j);
                for k in 0..j {
                    v -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = if root > 0.0 { v / root } else { 0.0 };
            }
            l[j * n + j] = root;
        }
        pivots
    }
}

/// Builds `R_{s,t}` for `0 <= s, t <= horizon` with `theta_t = alpha tau_t`.
pub fn two_time_recursion(params: &SeParams, alpha: f64, horizon: usize) -> Result<TwoTimeCov> {
    check_alpha(params, alpha)?;
    if horizon == 0 {
        return Err(invalid("two-time horizon must be positive"));
    }
    let taus2 = se_sequence(params, alpha, params.initial_tau2(), horizon)?;
    let thetas: Vec<f64> = taus2.iter().map(|t2| alpha * t2.sqrt()).collect();
    let dim = horizon + 1;
    let mut cov = TwoTimeCov { dim, entries: vec![0.0; dim * dim] };
    let (sigma2, delta, prior) = (params.sigma2, params.delta, &params.prior);
    cov.set(0, 0, taus2[0]);
    for m in 1..dim {
        let prev = m - 1;
        let tau_prev = cov.get(prev, prev).sqrt();
        let boundary = scalar::signal_cross_functional(prior, tau_prev, thetas[prev])?;
        cov.set(0, m, sigma2 + boundary / delta);
        for s in 0..m {
            let e = scalar::cross_mse_functional(
                prior,
                cov.get(s, s).sqrt(),
                tau_prev,
                cov.get(s, prev),
                thetas[s],
                thetas[prev],
            )?;
            cov.set(s + 1, m, sigma2 + e / delta);
        }
    }
    for (t, expected) in taus2.iter().enumerate() {
        let got = cov.get(t, t);
        if (got - expected).abs() > TWO_TIME_DIAG_TOL {
            return Err(Error::InternalConsistency(format!(
                "R[{t},{t}] = {got} differs from tau_t^2 = {expected}"
            )));
        }
    }
    let floor = -1e-9 * taus2.iter().fold(0.0_f64, |m, v| m.max(*v));
    if let Some((i, p)) = cov.cholesky_pivots().into_iter().enumerate().find(|(_, p)| *p < floor) {
        return Err(Error::InternalConsistency(format!("two-time covariance pivot {i} is {p:e}")));
    }
    Ok(cov)
}
