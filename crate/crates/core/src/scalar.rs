//! Scalar primitives: soft thresholding, the standard Gaussian, discrete
//! priors, and the Gaussian-smoothed expectations built from them.
//!
//! All expectations are over `X0 ~ prior` and an independent `Z ~ N(0, 1)`.
//! The one-dimensional functionals are evaluated in closed form atom by atom;
//! the two-time functional whitens the Gaussian pair, integrates one
//! coordinate in closed form and the other by adaptive quadrature split at
//! the kinks of the thresholding function.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quadrature;

/// Name of the three-point preset used throughout the experiments.
pub const THREE_POINT_PRESET: &str = "three_point_0.064";

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Soft thresholding without argument checks. Hot loops use this directly.
#[inline]
pub fn shrink(x: f64, theta: f64) -> f64 {
    if x > theta {
        x - theta
    } else if x < -theta {
        x + theta
    } else {
        0.0
    }
}

/// Derivative of [`shrink`] in its first argument, with the value at
/// `|x| = theta` fixed to 0.
#[inline]
pub fn shrink_active(x: f64, theta: f64) -> bool {
    x.abs() > theta
}

pub fn soft_threshold(x: f64, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    Ok(shrink(x, theta))
}

pub fn soft_threshold_deriv(x: f64, theta: f64) -> Result<u8> {
    check_theta(theta)?;
    Ok(u8::from(shrink_active(x, theta)))
}

fn check_theta(theta: f64) -> Result<()> {
    if theta >= 0.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("threshold must be a finite nonnegative number, got {theta}")))
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("noise scale tau must be positive and finite, got {tau}")))
    }
}

/// Standard normal density.
#[inline]
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Standard normal distribution function.
#[inline]
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// `P{lo <= Z <= hi}` without cancellation in either tail.
fn normal_interval(lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        0.0
    } else if hi <= 0.0 {
        normal_cdf(hi) - normal_cdf(lo)
    } else if lo >= 0.0 {
        normal_cdf(-lo) - normal_cdf(-hi)
    } else {
        1.0 - normal_cdf(lo) - normal_cdf(-hi)
    }
}

/// A finitely supported signal distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PriorRepr", into = "PriorRepr")]
pub struct Prior {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PriorRepr {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl TryFrom<PriorRepr> for Prior {
    type Error = Error;

    fn try_from(r: PriorRepr) -> Result<Self> {
        Prior::new(r.atoms, r.weights)
    }
}

impl From<Prior> for PriorRepr {
    fn from(p: Prior) -> Self {
        PriorRepr { atoms: p.atoms, weights: p.weights }
    }
}

impl Prior {
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(invalid(format!(
                "prior needs matching non-empty atoms/weights, got {} and {}",
                atoms.len(),
                weights.len()
            )));
        }
        if let Some(a) = atoms.iter().find(|a| !a.is_finite()) {
            return Err(invalid(format!("prior atom {a} is not finite")));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
            return Err(invalid(format!("prior weight {w} is negative or not finite")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(invalid(format!("prior weights sum to {total}, not 1")));
        }
        let mut sorted = atoms.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("prior atoms must be distinct"));
        }
        Ok(Prior { atoms, weights })
    }

    pub fn point_mass(atom: f64) -> Result<Self> {
        Prior::new(vec![atom], vec![1.0])
    }

    /// Symmetric prior on {-1, 0, +1} with `P(+1) = P(-1) = p`.
    pub fn three_point(p: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 0.5) {
            return Err(invalid(format!("three-point mass p must lie in (0, 1/2], got {p}")));
        }
        Prior::new(vec![-1.0, 0.0, 1.0], vec![p, 1.0 - 2.0 * p, p])
    }

    /// Looks up a named preset. `three_point_<p>` is accepted for any `p`.
    pub fn preset(name: &str) -> Result<Self> {
        match name.strip_prefix("three_point_") {
            Some(p) => {
                let p: f64 = p
                    .parse()
                    .map_err(|_| invalid(format!("cannot parse mass in preset '{name}'")))?;
                Prior::three_point(p)
            }
            None => Err(invalid(format!("unknown prior preset '{name}'"))),
        }
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `(atom, weight)` pairs with nonzero weight.
    pub fn support(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.atoms
            .iter()
            .copied()
            .zip(self.weights.iter().copied())
            .filter(|(_, w)| *w > 0.0)
    }

    pub fn second_moment(&self) -> f64 {
        self.support().map(|(a, w)| w * a * a).sum()
    }

    pub fn prob_nonzero(&self) -> f64 {
        self.support().filter(|(a, _)| *a != 0.0).map(|(_, w)| w).sum()
    }

    /// Maps a uniform draw in [0, 1) to an atom.
    pub fn quantile(&self, u: f64) -> f64 {
        let mut acc = 0.0;
        for (a, w) in self.support() {
            acc += w;
            if u < acc {
                return a;
            }
        }
        // u within rounding of 1
        self.support().last().map(|(a, _)| a).unwrap_or(self.atoms[0])
    }
}

/// `E{[eta(x + tau Z; theta) - x]^2}` for a single atom.
fn atom_mse(x: f64, tau: f64, theta: f64) -> f64 {
    let a = (theta - x) / tau;
    let b = (-theta - x) / tau;
    let spread = tau * tau + theta * theta;
    let upper = spread * normal_cdf(-a) - tau * (theta + x) * normal_pdf(a);
    let lower = spread * normal_cdf(b) - tau * (theta - x) * normal_pdf(b);
    upper + lower + x * x * normal_interval(b, a)
}

/// `P{|x + tau Z| > theta}` for a single atom.
fn atom_active(x: f64, tau: f64, theta: f64) -> f64 {
    normal_cdf((x - theta) / tau) + normal_cdf((-x - theta) / tau)
}

/// `E{eta(m + s V; theta)}` for `V ~ N(0, 1)`; `s = 0` is allowed.
fn shrink_mean(m: f64, s: f64, theta: f64) -> f64 {
    if s <= 0.0 {
        return shrink(m, theta);
    }
    let a = (theta - m) / s;
    let b = (-theta - m) / s;
    (m - theta) * normal_cdf(-a) + (m + theta) * normal_cdf(b) + s * (normal_pdf(a) - normal_pdf(b))
}

/// `E{|eta(x + tau Z; theta)|}` for a single atom.
fn atom_abs(x: f64, tau: f64, theta: f64) -> f64 {
    let a = (theta - x) / tau;
    let b = (-theta - x) / tau;
    (x - theta) * normal_cdf(-a) + tau * normal_pdf(a) - (x + theta) * normal_cdf(b) + tau * normal_pdf(b)
}

/// Mean squared error of soft thresholding a Gaussian-corrupted prior draw:
/// `E{[eta(X0 + tau Z; theta) - X0]^2}`.
pub fn mse_functional(prior: &Prior, tau: f64, theta: f64) -> Result<f64> {
    check_tau(tau)?;
    check_theta(theta)?;
    Ok(prior.support().map(|(x, w)| w * atom_mse(x, tau, theta)).sum())
}

/// The `tau -> 0` limit of [`mse_functional`]: `E{min(X0^2, theta^2)}`.
pub fn mse_functional_noiseless(prior: &Prior, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    Ok(prior.support().map(|(x, w)| w * (x * x).min(theta * theta)).sum())
}

/// `E{eta'(X0 + tau Z; theta)} = P{|X0 + tau Z| > theta}`.
pub fn eta_prime_expectation(prior: &Prior, tau: f64, theta: f64) -> Result<f64> {
    check_tau(tau)?;
    check_theta(theta)?;
    let p: f64 = prior.support().map(|(x, w)| w * atom_active(x, tau, theta)).sum();
    Ok(p.clamp(0.0, 1.0))
}

/// `E{|eta(X0 + tau Z; theta)|}`, the per-coordinate l1 norm of the estimate.
pub fn l1_functional(prior: &Prior, tau: f64, theta: f64) -> Result<f64> {
    check_tau(tau)?;
    check_theta(theta)?;
    Ok(prior.support().map(|(x, w)| w * atom_abs(x, tau, theta)).sum())
}

/// `P{lo <= |X0 + tau Z| <= hi}`.
pub fn abs_band_probability(prior: &Prior, tau: f64, lo: f64, hi: f64) -> Result<f64> {
    check_tau(tau)?;
    if !(lo >= 0.0 && hi >= lo) {
        return Err(invalid(format!("band [{lo}, {hi}] is not a valid nonnegative interval")));
    }
    Ok(prior
        .support()
        .map(|(x, w)| {
            // |x + tau Z| in [lo, hi]  <=>  Z in [(lo-x)/tau, (hi-x)/tau] or [(-hi-x)/tau, (-lo-x)/tau]
            let right = normal_interval((lo - x) / tau, (hi - x) / tau);
            let left = normal_interval((-hi - x) / tau, (-lo - x) / tau);
            w * (right + left)
        })
        .sum())
}

/// `E{-X0 [eta(X0 + tau Z; theta) - X0]}`, the boundary term of the two-time recursion.
pub fn signal_cross_functional(prior: &Prior, tau: f64, theta: f64) -> Result<f64> {
    check_tau(tau)?;
    check_theta(theta)?;
    Ok(prior.support().map(|(x, w)| -w * x * (shrink_mean(x, tau, theta) - x)).sum())
}

const CROSS_TAIL: f64 = 13.0;
const CROSS_TOL: f64 = 1e-14;

/// Two-time error correlation
/// `E{[eta(X0 + Z_a; theta_a) - X0][eta(X0 + Z_b; theta_b) - X0]}` with
/// `(Z_a, Z_b)` centered Gaussian, variances `tau_a^2`, `tau_b^2` and
/// covariance `cov`.
pub fn cross_mse_functional(
    prior: &Prior,
    tau_a: f64,
    tau_b: f64,
    cov: f64,
    theta_a: f64,
    theta_b: f64,
) -> Result<f64> {
    check_tau(tau_a)?;
    check_tau(tau_b)?;
    check_theta(theta_a)?;
    check_theta(theta_b)?;
    let scale = tau_a * tau_b;
    if !cov.is_finite() || cov.abs() > scale * (1.0 + 1e-10) {
        return Err(invalid(format!(
            "covariance {cov} is not admissible for variances {} and {}",
            tau_a * tau_a,
            tau_b * tau_b
        )));
    }
    let rho = (cov / scale).clamp(-1.0, 1.0);
    // Z_a = tau_a U,  Z_b = coupling U + resid V  with U, V iid N(0, 1)
    let coupling = rho * tau_b;
    let resid = tau_b * (1.0 - rho * rho).max(0.0).sqrt();

    let mut total = 0.0;
    for (x, w) in prior.support() {
        let integrand = |u: f64| {
            let first = shrink(x + tau_a * u, theta_a) - x;
            if first == 0.0 && x == 0.0 {
                return 0.0;
            }
            let second = shrink_mean(x + coupling * u, resid, theta_b) - x;
            first * second * normal_pdf(u)
        };
        let mut breaks = vec![(theta_a - x) / tau_a, (-theta_a - x) / tau_a];
        if coupling != 0.0 {
            breaks.push((theta_b - x) / coupling);
            breaks.push((-theta_b - x) / coupling);
        }
        total += w * quadrature::integrate_pieces(integrand, -CROSS_TAIL, CROSS_TAIL, &breaks, CROSS_TOL);
    }
    Ok(total)
}
