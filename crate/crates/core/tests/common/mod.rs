//! Independent oracles shared by the integration tests. Nothing here calls
//! the library's numerical routines; only plain data types are borrowed.

#![allow(dead_code)]

use amp_lasso::{DenseMatrix, Prior};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn soft(x: f64, theta: f64) -> f64 {
    if x > theta {
        x - theta
    } else if x < -theta {
        x + theta
    } else {
        0.0
    }
}

pub fn phi_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

pub fn phi_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn z_score(&self, exact: f64) -> f64 {
        if self.stderr == 0.0 {
            if exact == self.mean {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (exact - self.mean).abs() / self.stderr
        }
    }
}

fn draw_prior(prior: &Prior, r: &mut ChaCha8Rng) -> f64 {
    let u: f64 = r.random();
    let mut acc = 0.0;
    for (x, w) in prior.atoms().iter().zip(prior.weights()) {
        acc += w;
        if u < acc {
            return *x;
        }
    }
    *prior.atoms().last().unwrap()
}

fn monte_carlo<F: FnMut(&mut ChaCha8Rng) -> f64>(samples: usize, seed: u64, mut f: F) -> Estimate {
    let mut r = rng(seed);
    let (mut sum, mut sq) = (0.0, 0.0);
    // Kahan-free but chunked sums keep the rounding far below the sampling error
    let mut chunk = (0.0, 0.0);
    for k in 0..samples {
        let v = f(&mut r);
        chunk.0 += v;
        chunk.1 += v * v;
        if k % 4096 == 4095 {
            sum += chunk.0;
            sq += chunk.1;
            chunk = (0.0, 0.0);
        }
    }
    sum += chunk.0;
    sq += chunk.1;
    let m = samples as f64;
    let mean = sum / m;
    let var = (sq / m - mean * mean).max(0.0) * m / (m - 1.0);
    Estimate { mean, stderr: (var / m).sqrt() }
}

/// `E{[eta(X0 + tau Z; theta) - X0]^2}` by sampling.
pub fn mc_mse(prior: &Prior, tau: f64, theta: f64, samples: usize, seed: u64) -> Estimate {
    monte_carlo(samples, seed, |r| {
        let x = draw_prior(prior, r);
        let z: f64 = r.sample(StandardNormal);
        let e = soft(x + tau * z, theta) - x;
        e * e
    })
}

/// `P{|X0 + tau Z| > theta}` by sampling.
pub fn mc_eta_prime(prior: &Prior, tau: f64, theta: f64, samples: usize, seed: u64) -> Estimate {
    monte_carlo(samples, seed, |r| {
        let x = draw_prior(prior, r);
        let z: f64 = r.sample(StandardNormal);
        f64::from(u8::from((x + tau * z).abs() > theta))
    })
}

/// Two-time correlation of thresholding errors by sampling correlated noises.
#[allow(clippy::too_many_arguments)]
pub fn mc_cross(
    prior: &Prior,
    tau_a: f64,
    tau_b: f64,
    cov: f64,
    theta_a: f64,
    theta_b: f64,
    samples: usize,
    seed: u64,
) -> Estimate {
    let rho = cov / (tau_a * tau_b);
    let perp = (1.0 - rho * rho).max(0.0).sqrt();
    monte_carlo(samples, seed, |r| {
        let x = draw_prior(prior, r);
        let g1: f64 = r.sample(StandardNormal);
        let g2: f64 = r.sample(StandardNormal);
        let za = tau_a * g1;
        let zb = tau_b * (rho * g1 + perp * g2);
        (soft(x + za, theta_a) - x) * (soft(x + zb, theta_b) - x)
    })
}

/// Root of `(1 + a^2) Phi(-a) - a phi(a) = delta / 2` by plain bisection.
pub fn bisect_alpha_min(delta: f64) -> f64 {
    let g = |a: f64| (1.0 + a * a) * phi_cdf(-a) - a * phi_pdf(a) - 0.5 * delta;
    let (mut lo, mut hi) = (0.0_f64, 20.0_f64);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        // g decreases from (1 - delta)/2 at 0
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * hi.max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Cyclic coordinate descent for `1/2 ||y - A x||^2 + lambda ||x||_1`, run
/// until a full sweep moves no coordinate by more than `tol`.
pub fn cd_lasso(a: &DenseMatrix, y: &[f64], lambda: f64, tol: f64, max_sweeps: usize) -> Vec<f64> {
    let (n, big_n) = (a.rows(), a.cols());
    let col = |j: usize| (0..n).map(|i| a.get(i, j)).collect::<Vec<_>>();
    let cols: Vec<Vec<f64>> = (0..big_n).map(col).collect();
    let sq: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
    let mut x = vec![0.0; big_n];
    let mut r = y.to_vec();
    for _ in 0..max_sweeps {
        let mut moved = 0.0_f64;
        for j in 0..big_n {
            if sq[j] == 0.0 {
                continue;
            }
            let rho: f64 = cols[j].iter().zip(&r).map(|(c, ri)| c * ri).sum::<f64>() + sq[j] * x[j];
            let new = soft(rho, lambda) / sq[j];
            let d = new - x[j];
            if d != 0.0 {
                for (ri, c) in r.iter_mut().zip(&cols[j]) {
                    *ri -= d * c;
                }
                x[j] = new;
                moved = moved.max(d.abs());
            }
        }
        if moved <= tol {
            break;
        }
    }
    x
}

/// Gaussian matrix with `N(0, 1/n)` entries from its own stream.
pub fn gaussian_matrix(n: usize, big_n: usize, seed: u64) -> DenseMatrix {
    let mut r = rng(seed);
    let s = 1.0 / (n as f64).sqrt();
    let data = (0..n * big_n).map(|_| s * r.sample::<f64, _>(StandardNormal)).collect();
    DenseMatrix::new(n, big_n, data).unwrap()
}

pub fn gaussian_vector(len: usize, scale: f64, r: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len).map(|_| scale * r.sample::<f64, _>(StandardNormal)).collect()
}

/// A random prior on 2 to 4 atoms including zero.
pub fn random_prior(r: &mut ChaCha8Rng) -> Prior {
    let k = r.random_range(2..=4);
    let mut atoms = vec![0.0];
    while atoms.len() < k {
        let a: f64 = r.random_range(-3.0..3.0);
        if a.abs() > 0.05 && atoms.iter().all(|b| (a - b).abs() > 0.05) {
            atoms.push(a);
        }
    }
    let mut weights: Vec<f64> = (0..k).map(|_| r.random_range(0.05..1.0)).collect();
    weights[0] += 1.0;
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Prior::new(atoms, weights).unwrap()
}
