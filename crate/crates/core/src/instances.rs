//! Random problem instances `y = A x0 + w` and ensemble sanity checks.
//!
//! Every field draws from its own ChaCha stream keyed by `(seed, tag)`, so
//! the matrix can be held fixed while the signal or noise varies.

use std::io::{Read, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::DenseMatrix;
use crate::state_evolution::SeParams;

const STREAM_SIGNAL: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_MATRIX: u64 = 3;

const MAGIC: &[u8; 8] = b"AMPLINST";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ensemble {
    /// iid `N(0, 1/n)` entries.
    Gaussian,
    /// iid `+-1/sqrt(n)` entries with equal probabilities.
    Rademacher,
}

impl Ensemble {
    fn code(self) -> u32 {
        match self {
            Ensemble::Gaussian => 0,
            Ensemble::Rademacher => 1,
        }
    }

    fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(Ensemble::Gaussian),
            1 => Ok(Ensemble::Rademacher),
            other => Err(invalid(format!("unknown ensemble code {other}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Ensemble::Gaussian => "gaussian",
            Ensemble::Rademacher => "rademacher",
        }
    }
}

impl std::fmt::Display for Ensemble {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ensemble {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Ensemble::Gaussian),
            "rademacher" => Ok(Ensemble::Rademacher),
            other => Err(invalid(format!("unknown ensemble '{other}'"))),
        }
    }
}

/// One realization of the measurement model.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub x0: Vec<f64>,
    pub w: Vec<f64>,
    pub a: DenseMatrix,
    pub y: Vec<f64>,
    pub seed: u64,
    pub ensemble: Ensemble,
    pub delta: f64,
    pub sigma2: f64,
}

impl Instance {
    /// Assembles an instance and computes `y = A x0 + w`.
    pub fn from_parts(
        a: DenseMatrix,
        x0: Vec<f64>,
        w: Vec<f64>,
        seed: u64,
        ensemble: Ensemble,
        delta: f64,
        sigma2: f64,
    ) -> Result<Self> {
        if x0.len() != a.cols() || w.len() != a.rows() {
            return Err(Error::DimensionMismatch(format!(
                "A is {}x{}, x0 has {}, w has {}",
                a.rows(),
                a.cols(),
                x0.len(),
                w.len()
            )));
        }
        let mut y = a.mul_vec(&x0);
        y.iter_mut().zip(&w).for_each(|(yi, wi)| *yi += wi);
        Ok(Instance { x0, w, a, y, seed, ensemble, delta, sigma2 })
    }

    /// Signal dimension `N`.
    pub fn n_signal(&self) -> usize {
        self.a.cols()
    }

    /// Number of measurements `n`.
    pub fn n_measurements(&self) -> usize {
        self.a.rows()
    }

    /// Writes the little-endian binary container: header, then `A`
    /// (row-major), `x0` and `w` as `f64`.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&FORMAT_VERSION.to_le_bytes())?;
        out.write_all(&self.ensemble.code().to_le_bytes())?;
        out.write_all(&(self.n_signal() as u64).to_le_bytes())?;
        out.write_all(&(self.n_measurements() as u64).to_le_bytes())?;
        out.write_all(&self.delta.to_le_bytes())?;
        out.write_all(&self.sigma2.to_le_bytes())?;
        out.write_all(&self.seed.to_le_bytes())?;
        for v in self.a.data().iter().chain(&self.x0).chain(&self.w) {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(invalid("not an instance container (bad magic)"));
        }
        let version = read_u32(&mut input)?;
        if version != FORMAT_VERSION {
            return Err(invalid(format!("unsupported container version {version}")));
        }
        let ensemble = Ensemble::from_code(read_u32(&mut input)?)?;
        let big_n = read_u64(&mut input)? as usize;
        let n = read_u64(&mut input)? as usize;
        let delta = read_f64(&mut input)?;
        let sigma2 = read_f64(&mut input)?;
        let seed = read_u64(&mut input)?;
        let a = DenseMatrix::new(n, big_n, read_f64s(&mut input, n * big_n)?)?;
        let x0 = read_f64s(&mut input, big_n)?;
        let w = read_f64s(&mut input, n)?;
        Instance::from_parts(a, x0, w, seed, ensemble, delta, sigma2)
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    read_u64(r).map(f64::from_bits)
}

fn read_f64s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

/// `n = round(delta N)` with ties to even.
pub fn measurement_count(delta: f64, big_n: usize) -> usize {
    (delta * big_n as f64).round_ties_even() as usize
}

fn stream(seed: u64, tag: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng
}

pub fn generate(params: &SeParams, big_n: usize, ensemble: Ensemble, seed: u64) -> Result<Instance> {
    params.validate()?;
    if big_n < 2 {
        return Err(invalid(format!("N must be at least 2, got {big_n}")));
    }
    let n = measurement_count(params.delta, big_n);
    if n < 1 {
        return Err(invalid(format!("delta * N = {} gives no measurements", params.delta * big_n as f64)));
    }

    let mut rng = stream(seed, STREAM_SIGNAL);
    let x0: Vec<f64> = (0..big_n).map(|_| params.prior.quantile(rng.random::<f64>())).collect();

    let sigma = params.sigma2.sqrt();
    let mut rng = stream(seed, STREAM_NOISE);
    let w: Vec<f64> = (0..n).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect();

    let scale = 1.0 / (n as f64).sqrt();
    let mut rng = stream(seed, STREAM_MATRIX);
    let data: Vec<f64> = match ensemble {
        Ensemble::Gaussian => (0..n * big_n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect(),
        Ensemble::Rademacher => (0..n * big_n).map(|_| if rng.random::<bool>() { scale } else { -scale }).collect(),
    };
    let a = DenseMatrix::new(n, big_n, data)?;
    Instance::from_parts(a, x0, w, seed, ensemble, params.delta, params.sigma2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingularEdgeReport {
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub expected_max: f64,
    pub expected_min: f64,
    /// `None` below the size at which the asymptotic edges are enforced.
    pub pass: Option<bool>,
}

/// Signal size from which [`singular_edge_check`] enforces its 5% band.
pub const EDGE_CHECK_MIN_N: usize = 1000;
const EDGE_TOL: f64 = 0.05;

/// Compares the extreme nonzero singular values of `A` with the
/// Marchenko–Pastur edges `1/sqrt(delta) +- 1`.
pub fn singular_edge_check(a: &DenseMatrix, delta: f64) -> Result<SingularEdgeReport> {
    if !(delta > 0.0) {
        return Err(invalid(format!("delta must be positive, got {delta}")));
    }
    let (sigma_max, sigma_min) = a.extreme_singular_values(500, 300);
    let expected_max = 1.0 / delta.sqrt() + 1.0;
    let expected_min = (1.0 / delta.sqrt() - 1.0).abs();
    let pass = (a.cols() >= EDGE_CHECK_MIN_N).then(|| {
        (sigma_max - expected_max).abs() <= EDGE_TOL * expected_max
            && (sigma_min - expected_min).abs() <= EDGE_TOL * expected_min
    });
    Ok(SingularEdgeReport { sigma_max, sigma_min, expected_max, expected_min, pass })
}

/// `(max_i ||A e_i||, min_i ||A e_i||)`.
pub fn column_norm_range(a: &DenseMatrix) -> (f64, f64) {
    let norms = a.column_norms();
    let max = norms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = norms.iter().copied().fold(f64::INFINITY, f64::min);
    (max, min)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    SquaredError,
    /// `|x_est|`.
    L1,
    /// `1{x_est != 0}`. Not pseudo-Lipschitz; its limit holds through a
    /// weak-convergence argument, not the pseudo-Lipschitz one.
    SupportIndicator,
}

impl Observable {
    pub fn is_pseudo_lipschitz(self) -> bool {
        !matches!(self, Observable::SupportIndicator)
    }

    fn eval(self, est: f64, truth: f64) -> f64 {
        match self {
            Observable::SquaredError => (est - truth) * (est - truth),
            Observable::L1 => est.abs(),
            Observable::SupportIndicator => f64::from(u8::from(est != 0.0)),
        }
    }
}

/// `N^{-1} sum_i psi(x_est_i, x0_i)`.
pub fn empirical_observable(x_est: &[f64], x0: &[f64], psi: Observable) -> Result<f64> {
    if x_est.len() != x0.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {} entries", x_est.len(), x0.len())));
    }
    if x_est.is_empty() {
        return Err(invalid("empty vectors"));
    }
    Ok(x_est.iter().zip(x0).map(|(e, t)| psi.eval(*e, *t)).sum::<f64>() / x_est.len() as f64)
}
