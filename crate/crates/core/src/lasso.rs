//! Reference LASSO solver: accelerated proximal gradient with adaptive
//! restarts, finished by an exact solve on the detected support, and
//! certified by the KKT residual of the subgradient conditions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{norm2, DenseMatrix};
use crate::scalar::shrink;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LassoOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Nesterov momentum with restarts; plain proximal gradient otherwise.
    pub accelerated: bool,
    /// Try an exact solve on the current support once the support settles.
    pub polish: bool,
    /// Iterations between KKT evaluations (each costs one extra product).
    pub check_every: usize,
    pub power_iters: usize,
    pub power_tol: f64,
    /// Precomputed `sigma_max(A)^2`; estimated by power iteration when absent.
    #[serde(skip)]
    pub lipschitz: Option<f64>,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions {
            tol: 1e-8,
            max_iter: 50_000,
            accelerated: true,
            polish: true,
            check_every: 10,
            power_iters: 50,
            power_tol: 1e-10,
            lipschitz: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoSolution {
    pub x_hat: Vec<f64>,
    pub cost: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn check_dims(a: &DenseMatrix, y: &[f64], x: &[f64]) -> Result<()> {
    if y.len() != a.rows() || x.len() != a.cols() {
        return Err(Error::DimensionMismatch(format!(
            "A is {}x{}, y has {}, x has {}",
            a.rows(),
            a.cols(),
            y.len(),
            x.len()
        )));
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("lambda must be positive, got {lambda}")))
    }
}

fn cost_from_fit(y: &[f64], ax: &[f64], x: &[f64], lambda: f64) -> f64 {
    let fit: f64 = y.iter().zip(ax).map(|(a, b)| (a - b) * (a - b)).sum();
    0.5 * fit + lambda * x.iter().map(|v| v.abs()).sum::<f64>()
}

/// `1/2 ||y - A x||^2 + lambda ||x||_1`.
pub fn lasso_cost(a: &DenseMatrix, y: &[f64], x: &[f64], lambda: f64) -> Result<f64> {
    check_dims(a, y, x)?;
    check_lambda(lambda)?;
    Ok(cost_from_fit(y, &a.mul_vec(x), x, lambda))
}

/// Maximal violation of the optimality conditions given the correlation
/// `corr = A^T (y - A x)`.
pub fn kkt_from_correlation(corr: &[f64], x: &[f64], lambda: f64) -> f64 {
    corr.iter().zip(x).fold(0.0_f64, |worst, (c, xi)| {
        let v = if *xi == 0.0 { (c.abs() - lambda).max(0.0) } else { (c - lambda * xi.signum()).abs() };
        worst.max(v)
    })
}

/// `max(0, ||[A^T(y-Ax)]_off||_inf - lambda)` combined with
/// `max_{support} |[A^T(y-Ax)]_i - lambda sign(x_i)|`.
pub fn kkt_residual(a: &DenseMatrix, y: &[f64], x: &[f64], lambda: f64) -> Result<f64> {
    check_dims(a, y, x)?;
    check_lambda(lambda)?;
    let ax = a.mul_vec(x);
    let resid: Vec<f64> = y.iter().zip(&ax).map(|(yi, v)| yi - v).collect();
    Ok(kkt_from_correlation(&a.mul_t_vec(&resid), x, lambda))
}

/// `sigma_max(A)^2` from power iteration, padded slightly because the
/// iteration approaches from below.
pub fn lipschitz_constant(a: &DenseMatrix, opts: &LassoOptions) -> f64 {
    let s = a.spectral_norm(opts.power_iters, opts.power_tol);
    1.01 * s * s
}

pub fn solve_lasso(a: &DenseMatrix, y: &[f64], lambda: f64, opts: &LassoOptions) -> Result<LassoSolution> {
    solve_lasso_from(a, y, lambda, &vec![0.0; a.cols()], opts)
}

/// Same as [`solve_lasso`], started from `x_init`.
pub fn solve_lasso_from(
    a: &DenseMatrix,
    y: &[f64],
    lambda: f64,
    x_init: &[f64],
    opts: &LassoOptions,
) -> Result<LassoSolution> {
    check_dims(a, y, x_init)?;
    check_lambda(lambda)?;
    if !(opts.tol > 0.0) {
        return Err(invalid(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let (n, big_n) = (a.rows(), a.cols());
    let lip = opts.lipschitz.unwrap_or_else(|| lipschitz_constant(a, opts));
    if lip <= 0.0 {
        // A = 0: zero is optimal.
        let x = vec![0.0; big_n];
        let cost = 0.5 * norm2(y);
        return Ok(LassoSolution { x_hat: x, cost, kkt_residual: 0.0, iterations: 0, converged: true });
    }
    let step = 1.0 / lip;
    let check_every = opts.check_every.max(1);

    let mut x = x_init.to_vec();
    let mut ax = a.mul_vec(&x);
    let mut v = x.clone();
    let mut av = ax.clone();
    let mut momentum = 1.0_f64;

    let mut resid = vec![0.0; n];
    let mut grad = vec![0.0; big_n];
    let mut x_new = vec![0.0; big_n];
    let mut ax_new = vec![0.0; n];

    let kkt_at = |x: &[f64], ax: &[f64], resid: &mut Vec<f64>, grad: &mut Vec<f64>| {
        resid.iter_mut().zip(y.iter().zip(ax)).for_each(|(r, (yi, v))| *r = yi - v);
        a.mul_t_vec_into(resid, grad);
        kkt_from_correlation(grad, x, lambda)
    };

    let mut kkt = kkt_at(&x, &ax, &mut resid, &mut grad);
    let mut iterations = 0;
    let mut last_support: Option<Vec<usize>> = None;
    let mut polished: Option<Vec<usize>> = None;
    while kkt > opts.tol && iterations < opts.max_iter {
        iterations += 1;
        // gradient of the smooth part at the extrapolated point
        resid.iter_mut().zip(av.iter().zip(y)).for_each(|(r, (v, yi))| *r = v - yi);
        a.mul_t_vec_into(&resid, &mut grad);
        for ((xn, vi), gi) in x_new.iter_mut().zip(&v).zip(&grad) {
            *xn = shrink(vi - step * gi, step * lambda);
        }
        a.mul_vec_into(&x_new, &mut ax_new);

        // gradient-based restart: the step points against the momentum
        let against: f64 = (0..big_n).map(|i| (v[i] - x_new[i]) * (x_new[i] - x[i])).sum();
        let beta = if !opts.accelerated {
            0.0
        } else if against > 0.0 {
            momentum = 1.0;
            0.0
        } else {
            let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            let b = (momentum - 1.0) / next;
            momentum = next;
            b
        };
        for i in 0..big_n {
            v[i] = x_new[i] + beta * (x_new[i] - x[i]);
        }
        for i in 0..n {
            av[i] = ax_new[i] + beta * (ax_new[i] - ax[i]);
        }
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut ax, &mut ax_new);

        if iterations % check_every == 0 {
            kkt = kkt_at(&x, &ax, &mut resid, &mut grad);
            if opts.polish && kkt > opts.tol {
                let support: Vec<usize> = (0..big_n).filter(|&i| x[i] != 0.0).collect();
                if last_support.as_ref() == Some(&support) && polished.as_ref() != Some(&support) {
                    if let Some((xp, axp)) = polish_on_support(a, y, lambda, &x, &support) {
                        let kp = kkt_at(&xp, &axp, &mut resid, &mut grad);
                        if kp < kkt {
                            x = xp;
                            ax = axp;
                            kkt = kp;
                            v.copy_from_slice(&x);
                            av.copy_from_slice(&ax);
                            momentum = 1.0;
                        }
                    }
                    polished = Some(support.clone());
                }
                last_support = Some(support);
            }
        }
    }
    if iterations % check_every != 0 {
        kkt = kkt_at(&x, &ax, &mut resid, &mut grad);
    }
    // A final exact solve removes the remaining tolerance-sized error.
    if opts.polish && kkt > 0.0 {
        let support: Vec<usize> = (0..big_n).filter(|&i| x[i] != 0.0).collect();
        if polished.as_ref() != Some(&support) {
            if let Some((xp, axp)) = polish_on_support(a, y, lambda, &x, &support) {
                let kp = kkt_at(&xp, &axp, &mut resid, &mut grad);
                if kp < kkt {
                    x = xp;
                    ax = axp;
                    kkt = kp;
                }
            }
        }
    }
    let cost = cost_from_fit(y, &ax, &x, lambda);
    Ok(LassoSolution { x_hat: x, cost, kkt_residual: kkt, iterations, converged: kkt <= opts.tol })
}

/// Solves `A_S^T A_S x_S = A_S^T y - lambda sign(x_S)` on the support `S`
/// of `x`. Returns `None` when the system is singular or the solution
/// changes a sign, since then it is not a stationary point of the LASSO.
fn polish_on_support(
    a: &DenseMatrix,
    y: &[f64],
    lambda: f64,
    x: &[f64],
    support: &[usize],
) -> Option<(Vec<f64>, Vec<f64>)> {
    let k = support.len();
    if k == 0 || k >= a.rows() {
        return None;
    }
    let mut sub = DMatrix::zeros(a.rows(), k);
    for i in 0..a.rows() {
        let row = a.row(i);
        for (c, &j) in support.iter().enumerate() {
            sub[(i, c)] = row[j];
        }
    }
    let gram = sub.tr_mul(&sub);
    let rhs = sub.tr_mul(&DVector::from_column_slice(y))
        - DVector::from_iterator(k, support.iter().map(|&j| lambda * x[j].signum()));
    let sol = gram.cholesky()?.solve(&rhs);
    let mut out = vec![0.0; x.len()];
    for (c, &j) in support.iter().enumerate() {
        if sol[c].signum() != x[j].signum() || !sol[c].is_finite() {
            return None;
        }
        out[j] = sol[c];
    }
    let ax = a.mul_vec(&out);
    Some((out, ax))
}
