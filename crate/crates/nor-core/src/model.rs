//! Model parameters, datasets, and variational state containers.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{NorError, Result};

/// Generative parameters of the noisy-OR model.
///
/// `theta[(i, k)]` couples latent cause `k` to observed dimension `i`, in
/// nats (`theta_ik = -ln(1 - p_ik)`). `theta0[i]` is the leak weight of
/// dimension `i`, and `mu[k]` is the prior activation probability of cause
/// `k`. All weights are non-negative and `mu` lies strictly inside (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub theta: Array2<f64>,
    pub theta0: Array1<f64>,
    pub mu: Array1<f64>,
}

impl ModelParams {
    pub fn new(theta: Array2<f64>, theta0: Array1<f64>, mu: Array1<f64>) -> Result<Self> {
        let p = ModelParams { theta, theta0, mu };
        p.validate()?;
        Ok(p)
    }

    pub fn d(&self) -> usize {
        self.theta.nrows()
    }

    pub fn k(&self) -> usize {
        self.theta.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta0.len() != self.d() {
            return Err(NorError::DimMismatch(format!(
                "theta0 has length {}, expected D={}",
                self.theta0.len(),
                self.d()
            )));
        }
        if self.mu.len() != self.k() {
            return Err(NorError::DimMismatch(format!(
                "mu has length {}, expected K={}",
                self.mu.len(),
                self.k()
            )));
        }
        for &v in self.theta.iter().chain(self.theta0.iter()) {
            if !v.is_finite() || v < 0.0 {
                return Err(NorError::Domain(format!(
                    "weights must be finite and non-negative, got {v}"
                )));
            }
        }
        for &m in self.mu.iter() {
            if !m.is_finite() || m <= 0.0 || m >= 1.0 {
                return Err(NorError::Domain(format!(
                    "prior probabilities must lie strictly in (0,1), got {m}"
                )));
            }
        }
        Ok(())
    }

    /// Serializes to the canonical JSON document
    /// `{"D":..,"K":..,"theta0":[..],"theta":[[..]],"mu":[..]}`.
    pub fn to_json(&self) -> String {
        let file = ParamsFile {
            d: self.d(),
            k: self.k(),
            theta0: self.theta0.to_vec(),
            theta: self.theta.rows().into_iter().map(|r| r.to_vec()).collect(),
            mu: self.mu.to_vec(),
        };
        serde_json::to_string_pretty(&file).expect("params serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ParamsFile =
            serde_json::from_str(text).map_err(|e| NorError::Format(e.to_string()))?;
        if file.theta.len() != file.d || file.theta.iter().any(|r| r.len() != file.k) {
            return Err(NorError::Format("theta shape does not match D/K".into()));
        }
        let flat: Vec<f64> = file.theta.into_iter().flatten().collect();
        let theta = Array2::from_shape_vec((file.d, file.k), flat)
            .map_err(|e| NorError::Format(e.to_string()))?;
        ModelParams::new(theta, Array1::from(file.theta0), Array1::from(file.mu))
    }
}

#[derive(Serialize, Deserialize)]
struct ParamsFile {
    #[serde(rename = "D")]
    d: usize,
    #[serde(rename = "K")]
    k: usize,
    theta0: Vec<f64>,
    theta: Vec<Vec<f64>>,
    mu: Vec<f64>,
}

/// A set of binary observation vectors, optionally paired with the latent
/// vectors that generated them.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryDataset {
    pub x: Array2<u8>,
    pub z_true: Option<Array2<u8>>,
}

impl BinaryDataset {
    pub fn new(x: Array2<u8>, z_true: Option<Array2<u8>>) -> Result<Self> {
        let ds = BinaryDataset { x, z_true };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.iter().any(|&b| b > 1) {
            return Err(NorError::Domain("observations must be 0/1".into()));
        }
        if let Some(z) = &self.z_true {
            if z.nrows() != self.n() {
                return Err(NorError::DimMismatch(format!(
                    "latents have {} rows, observations {}",
                    z.nrows(),
                    self.n()
                )));
            }
            if z.iter().any(|&b| b > 1) {
                return Err(NorError::Domain("latents must be 0/1".into()));
            }
        }
        Ok(())
    }

    /// Borrowing view of the first `n` rows (latents included when present).
    pub fn take(&self, n: usize) -> Result<BinaryDataset> {
        if n > self.n() {
            return Err(NorError::DimMismatch(format!(
                "requested {n} rows from a dataset of {}",
                self.n()
            )));
        }
        Ok(BinaryDataset {
            x: self.x.slice(ndarray::s![..n, ..]).to_owned(),
            z_true: self
                .z_true
                .as_ref()
                .map(|z| z.slice(ndarray::s![..n, ..]).to_owned()),
        })
    }
}

/// Factorized Bernoulli posterior: `q[k] = q(z_k = 1 | x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorFactors {
    pub q: Array1<f64>,
}

impl PosteriorFactors {
    pub fn new(q: Array1<f64>) -> Result<Self> {
        if q.iter().any(|&v| !v.is_finite() || !(0.0..=1.0).contains(&v)) {
            return Err(NorError::Domain(
                "posterior factors must lie in [0,1]".into(),
            ));
        }
        Ok(PosteriorFactors { q })
    }

    pub fn k(&self) -> usize {
        self.q.len()
    }
}

/// Tolerance for the simplex constraint on lower-bound responsibilities.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Per-positive-dimension variational parameters of a conjugate bound.
///
/// Entries are ordered by ascending observed dimension index over the
/// positive dimensions of the observation the state was built for.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundState {
    /// One `psi_i > 0` per positive dimension.
    Upper { psi: Vec<f64> },
    /// One simplex vector of K responsibilities per positive dimension.
    Lower { lambda: Vec<Vec<f64>> },
}

impl BoundState {
    pub fn validate(&self, k: usize) -> Result<()> {
        match self {
            BoundState::Upper { psi } => {
                if psi.iter().any(|&p| !p.is_finite() || p <= 0.0) {
                    return Err(NorError::Domain("psi entries must be positive".into()));
                }
            }
            BoundState::Lower { lambda } => {
                for lam in lambda {
                    if lam.len() != k {
                        return Err(NorError::DimMismatch(format!(
                            "responsibility vector has length {}, expected K={k}",
                            lam.len()
                        )));
                    }
                    if lam.iter().any(|&v| !v.is_finite() || v < 0.0) {
                        return Err(NorError::Domain(
                            "responsibilities must be non-negative".into(),
                        ));
                    }
                    let sum: f64 = lam.iter().sum();
                    if (sum - 1.0).abs() > SIMPLEX_TOL {
                        return Err(NorError::Domain(format!(
                            "responsibilities must sum to 1, got {sum}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}
