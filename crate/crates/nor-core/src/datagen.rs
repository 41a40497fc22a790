//! Synthetic dataset construction: patterned and random-sparse generative
//! weights, ancestral sampling, sparsity measurement, and the dataset file
//! format.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{NorError, Result};
use crate::model::{BinaryDataset, ModelParams};

/// Leak weights masked out by the sparsity control are clamped to this
/// floor instead of zero so the conjugate lower bound stays defined.
pub const THETA0_FLOOR: f64 = 1e-3;

/// Pattern-image specification: K binary images plus a leak image, all the
/// same size; set pixels (value 1) carry weight `w_on`.
#[derive(Debug, Clone)]
pub struct PatternSpec {
    pub patterns: Vec<Array2<u8>>,
    pub leak: Array2<u8>,
    pub w_on: f64,
    pub mu: Array1<f64>,
}

/// `-ln(1 - 0.8)`: a set pixel triggers its observation with probability
/// 0.8.
pub fn default_w_on() -> f64 {
    -(1.0f64 - 0.8).ln()
}

impl PatternSpec {
    pub fn validate(&self) -> Result<()> {
        if self.patterns.is_empty() {
            return Err(NorError::Config("need at least one pattern".into()));
        }
        let dim = self.leak.dim();
        if self.patterns.iter().any(|p| p.dim() != dim) {
            return Err(NorError::DimMismatch(
                "patterns and leak image must share one size".into(),
            ));
        }
        if !(self.w_on > 0.0) {
            return Err(NorError::Config("w_on must be positive".into()));
        }
        if self.mu.len() != self.patterns.len() {
            return Err(NorError::DimMismatch(format!(
                "{} prior entries for {} patterns",
                self.mu.len(),
                self.patterns.len()
            )));
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        let (h, w) = self.leak.dim();
        h * w
    }
}

/// Maps a pattern spec to generative parameters: column k is `w_on` on the
/// set pixels of pattern k (row-major flattening), the leak likewise.
pub fn gen_patterned(spec: &PatternSpec) -> Result<ModelParams> {
    spec.validate()?;
    let d = spec.d();
    let k = spec.patterns.len();
    let mut theta = Array2::zeros((d, k));
    for (kk, pat) in spec.patterns.iter().enumerate() {
        for (i, &px) in pat.iter().enumerate() {
            if px != 0 {
                theta[(i, kk)] = spec.w_on;
            }
        }
    }
    let mut theta0 = Array1::zeros(d);
    for (i, &px) in spec.leak.iter().enumerate() {
        if px != 0 {
            theta0[i] = spec.w_on;
        }
    }
    ModelParams::new(theta, theta0, spec.mu.clone())
}

/// Deterministic 8x8 bar/block pattern set: eight patterns drawn without
/// replacement from the pool of row bars, column bars, and 3x3 blocks,
/// shuffled by `pattern_seed`. The leak image is empty. Priors are 0.125.
pub fn builtin_syn_pattern_spec(pattern_seed: u64) -> PatternSpec {
    const SIDE: usize = 8;
    let mut pool: Vec<Array2<u8>> = Vec::new();
    for r in 0..SIDE {
        let mut img = Array2::zeros((SIDE, SIDE));
        for c in 0..SIDE {
            img[(r, c)] = 1;
        }
        pool.push(img);
    }
    for c in 0..SIDE {
        let mut img = Array2::zeros((SIDE, SIDE));
        for r in 0..SIDE {
            img[(r, c)] = 1;
        }
        pool.push(img);
    }
    for &r in &[0usize, 2, 5] {
        for &c in &[0usize, 2, 5] {
            let mut img = Array2::zeros((SIDE, SIDE));
            for dr in 0..3 {
                for dc in 0..3 {
                    img[(r + dr, c + dc)] = 1;
                }
            }
            pool.push(img);
        }
    }
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(pattern_seed);
    pool.shuffle(&mut rng);
    pool.truncate(8);
    PatternSpec {
        patterns: pool,
        leak: Array2::zeros((SIDE, SIDE)),
        w_on: default_w_on(),
        mu: Array1::from_elem(8, 0.125),
    }
}

/// Random-weight specification: Beta-distributed weights and priors with a
/// sparsity control `s` (the probability of removing each coupling).
#[derive(Debug, Clone)]
pub struct SparseSpec {
    pub d: usize,
    pub k: usize,
    pub alpha_theta: f64,
    pub beta_theta: f64,
    pub alpha_mu: f64,
    pub beta_mu: f64,
    pub sparsity_control: f64,
    pub n_test: usize,
    pub seed: u64,
}

impl SparseSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.k == 0 {
            return Err(NorError::Config("D and K must be positive".into()));
        }
        for (name, v) in [
            ("alpha_theta", self.alpha_theta),
            ("beta_theta", self.beta_theta),
            ("alpha_mu", self.alpha_mu),
            ("beta_mu", self.beta_mu),
        ] {
            if !(v > 0.0) {
                return Err(NorError::Config(format!("{name} must be positive")));
            }
        }
        if !(self.sparsity_control > 0.0 && self.sparsity_control < 1.0) {
            return Err(NorError::Config(
                "sparsity control must lie strictly in (0,1)".into(),
            ));
        }
        Ok(())
    }
}

/// Samples sparse random weights. Couplings are Beta draws zeroed with
/// probability `s`; rows and columns left without any coupling get one
/// fresh connection at a random partner. Leak weights take the same Beta
/// draw but fall to [`THETA0_FLOOR`] when masked, and priors are clamped
/// into `[1e-4, 1 - 1e-4]`.
pub fn gen_sparse(spec: &SparseSpec) -> Result<ModelParams> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let beta_theta = Beta::new(spec.alpha_theta, spec.beta_theta)
        .map_err(|e| NorError::Config(e.to_string()))?;
    let beta_mu =
        Beta::new(spec.alpha_mu, spec.beta_mu).map_err(|e| NorError::Config(e.to_string()))?;
    let s = spec.sparsity_control;

    let mut theta = Array2::zeros((spec.d, spec.k));
    for i in 0..spec.d {
        for kk in 0..spec.k {
            let draw = beta_theta.sample(&mut rng);
            let keep = rng.random::<f64>() >= s;
            if keep {
                theta[(i, kk)] = draw;
            }
        }
    }
    let mut theta0 = Array1::zeros(spec.d);
    for i in 0..spec.d {
        let draw: f64 = beta_theta.sample(&mut rng);
        let keep = rng.random::<f64>() >= s;
        theta0[i] = if keep {
            draw.max(THETA0_FLOOR)
        } else {
            THETA0_FLOOR
        };
    }
    let mut mu = Array1::zeros(spec.k);
    for kk in 0..spec.k {
        let draw: f64 = beta_mu.sample(&mut rng);
        mu[kk] = draw.clamp(1e-4, 1.0 - 1e-4);
    }

    // orphan fix-up: one fresh connection per empty row, then per empty
    // column
    for i in 0..spec.d {
        if theta.row(i).iter().all(|&t| t == 0.0) {
            let kk = rng.random_range(0..spec.k);
            theta[(i, kk)] = beta_theta.sample(&mut rng);
        }
    }
    for kk in 0..spec.k {
        if theta.column(kk).iter().all(|&t| t == 0.0) {
            let i = rng.random_range(0..spec.d);
            theta[(i, kk)] = beta_theta.sample(&mut rng);
        }
    }

    ModelParams::new(theta, theta0, mu)
}

/// Ancestral sampling: `z_k ~ Bern(mu_k)`, then `x_i = 0` with probability
/// `e^{-a_i(z)}`. Reproducible bit-for-bit per seed.
pub fn sample_dataset(
    params: &ModelParams,
    n: usize,
    seed: u64,
    keep_latents: bool,
) -> Result<BinaryDataset> {
    if n == 0 {
        return Err(NorError::Config("need at least one sample".into()));
    }
    let (d, k) = (params.d(), params.k());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::zeros((n, d));
    let mut z_store = keep_latents.then(|| Array2::zeros((n, k)));
    let mut z = vec![0u8; k];
    for row in 0..n {
        for (kk, zk) in z.iter_mut().enumerate() {
            *zk = u8::from(rng.random::<f64>() < params.mu[kk]);
        }
        if let Some(zs) = &mut z_store {
            for (kk, &zk) in z.iter().enumerate() {
                zs[(row, kk)] = zk;
            }
        }
        for i in 0..d {
            let mut a = params.theta0[i];
            for (kk, &zk) in z.iter().enumerate() {
                if zk == 1 {
                    a += params.theta[(i, kk)];
                }
            }
            let stays_zero = rng.random::<f64>() < (-a).exp();
            x[(row, i)] = u8::from(!stays_zero);
        }
    }
    BinaryDataset::new(x, z_store)
}

/// Fraction of zero entries in the observation matrix.
pub fn sparsity(ds: &BinaryDataset) -> f64 {
    let zeros = ds.x.iter().filter(|&&b| b == 0).count();
    zeros as f64 / (ds.n() * ds.d()) as f64
}

/// Writes the dataset file format:
///
/// ```text
/// NOR-DS v1 D=<d> K=<k> N=<n> latents=<0|1>
/// <N lines of D characters in {0,1}>
/// [blank line, then N lines of K characters when latents=1]
/// ```
///
/// The write is atomic (temp file in the same directory, then rename).
pub fn write_dataset(path: &Path, ds: &BinaryDataset, k: usize) -> Result<()> {
    let has_latents = ds.z_true.is_some();
    let k_out = ds.z_true.as_ref().map_or(k, |z| z.ncols());
    let mut text = String::new();
    text.push_str(&format!(
        "NOR-DS v1 D={} K={} N={} latents={}\n",
        ds.d(),
        k_out,
        ds.n(),
        u8::from(has_latents)
    ));
    for row in ds.x.rows() {
        for &b in row {
            text.push(if b == 0 { '0' } else { '1' });
        }
        text.push('\n');
    }
    if let Some(z) = &ds.z_true {
        text.push('\n');
        for row in z.rows() {
            for &b in row {
                text.push(if b == 0 { '0' } else { '1' });
            }
            text.push('\n');
        }
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(text.as_bytes())?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<BinaryDataset> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| NorError::Format("empty dataset file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 6 || fields[0] != "NOR-DS" || fields[1] != "v1" {
        return Err(NorError::Format(format!("bad header: {header}")));
    }
    let parse = |field: &str, prefix: &str| -> Result<usize> {
        field
            .strip_prefix(prefix)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| NorError::Format(format!("bad header field: {field}")))
    };
    let d = parse(fields[2], "D=")?;
    let k = parse(fields[3], "K=")?;
    let n = parse(fields[4], "N=")?;
    let latents = parse(fields[5], "latents=")? == 1;

    let read_block = |lines: &mut std::str::Lines<'_>, rows: usize, width: usize| -> Result<Array2<u8>> {
        let mut data = Vec::with_capacity(rows * width);
        for _ in 0..rows {
            let line = lines
                .next()
                .ok_or_else(|| NorError::Format("unexpected end of file".into()))?;
            if line.len() != width {
                return Err(NorError::Format(format!(
                    "row has {} characters, expected {width}",
                    line.len()
                )));
            }
            for ch in line.chars() {
                match ch {
                    '0' => data.push(0),
                    '1' => data.push(1),
                    _ => return Err(NorError::Format(format!("bad character {ch:?}"))),
                }
            }
        }
        Array2::from_shape_vec((rows, width), data).map_err(|e| NorError::Format(e.to_string()))
    };

    let x = read_block(&mut lines, n, d)?;
    let z = if latents {
        let blank = lines
            .next()
            .ok_or_else(|| NorError::Format("missing latent block".into()))?;
        if !blank.is_empty() {
            return Err(NorError::Format("expected blank line before latents".into()));
        }
        Some(read_block(&mut lines, n, k)?)
    } else {
        None
    };
    BinaryDataset::new(x, z)
}
