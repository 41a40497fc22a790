//! Brute-force oracles and harness helpers for the acceptance suite.
//! The enumeration oracles are independent straight-line implementations.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use ndarray::{Array1, Array2};
use nor_core::model::{ModelParams, PosteriorFactors};
use rand::Rng;

pub fn f_naive(s: f64) -> f64 {
    (1.0 - (-s).exp()).ln()
}

pub fn g_naive(t: f64) -> f64 {
    -t * t.ln() + (t + 1.0) * (t + 1.0).ln()
}

pub fn activation_naive(params: &ModelParams, i: usize, z_bits: usize) -> f64 {
    let mut a = params.theta0[i];
    for kk in 0..params.k() {
        if z_bits >> kk & 1 == 1 {
            a += params.theta[(i, kk)];
        }
    }
    a
}

pub fn prior_prob(params: &ModelParams, z_bits: usize) -> f64 {
    let mut p = 1.0;
    for (kk, &m) in params.mu.iter().enumerate() {
        p *= if z_bits >> kk & 1 == 1 { m } else { 1.0 - m };
    }
    p
}

pub fn factorized_prob(q: &PosteriorFactors, z_bits: usize) -> f64 {
    let mut p = 1.0;
    for (kk, &qk) in q.q.iter().enumerate() {
        p *= if z_bits >> kk & 1 == 1 { qk } else { 1.0 - qk };
    }
    p
}

/// Enumerated log-normalizer and marginals of the upper-bound surrogate.
pub fn surrogate_ub_enumeration(params: &ModelParams, x: &[u8], psi: &[f64]) -> (f64, Vec<f64>) {
    let k = params.k();
    let mut weights = Vec::with_capacity(1 << k);
    for cfg in 0..(1usize << k) {
        let mut w = prior_prob(params, cfg);
        let mut pi = 0;
        for (i, &xi) in x.iter().enumerate() {
            let a = activation_naive(params, i, cfg);
            if xi == 1 {
                w *= (psi[pi] * a - g_naive(psi[pi])).exp();
                pi += 1;
            } else {
                w *= (-a).exp();
            }
        }
        weights.push(w);
    }
    let z: f64 = weights.iter().sum();
    let mut marginals = vec![0.0; k];
    for (cfg, &w) in weights.iter().enumerate() {
        for (kk, m) in marginals.iter_mut().enumerate() {
            if cfg >> kk & 1 == 1 {
                *m += w / z;
            }
        }
    }
    (z.ln(), marginals)
}

/// Enumerated marginals of the lower-bound surrogate.
pub fn surrogate_lb_enumeration(params: &ModelParams, x: &[u8], lambda: &[Vec<f64>]) -> Vec<f64> {
    let k = params.k();
    let mut weights = Vec::with_capacity(1 << k);
    for cfg in 0..(1usize << k) {
        let mut logw = prior_prob(params, cfg).ln();
        let mut pi = 0;
        for (i, &xi) in x.iter().enumerate() {
            let a = activation_naive(params, i, cfg);
            if xi == 1 {
                let t0 = params.theta0[i];
                for kk in 0..k {
                    let lam = lambda[pi][kk];
                    if lam <= 0.0 {
                        continue;
                    }
                    let zk = if cfg >> kk & 1 == 1 { 1.0 } else { 0.0 };
                    logw += lam * f_naive(t0 + params.theta[(i, kk)] * zk / lam);
                }
                pi += 1;
            } else {
                logw += -a;
            }
        }
        weights.push(logw.exp());
    }
    let z: f64 = weights.iter().sum();
    let mut marginals = vec![0.0; k];
    for (cfg, &w) in weights.iter().enumerate() {
        for (kk, m) in marginals.iter_mut().enumerate() {
            if cfg >> kk & 1 == 1 {
                *m += w / z;
            }
        }
    }
    marginals
}

pub fn negative_term_enumeration(params: &ModelParams, x: &[u8], q: &PosteriorFactors) -> f64 {
    let mut total = 0.0;
    for cfg in 0..(1usize << params.k()) {
        let p = factorized_prob(q, cfg);
        if p == 0.0 {
            continue;
        }
        let mut ll = 0.0;
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0 {
                ll -= activation_naive(params, i, cfg);
            }
        }
        total += p * ll;
    }
    total
}

pub fn kl_enumeration(q: &PosteriorFactors, mu: &Array1<f64>) -> f64 {
    let k = q.k();
    let mut total = 0.0;
    for cfg in 0..(1usize << k) {
        let pq = factorized_prob(q, cfg);
        if pq == 0.0 {
            continue;
        }
        let mut pp = 1.0;
        for (kk, &m) in mu.iter().enumerate() {
            pp *= if cfg >> kk & 1 == 1 { m } else { 1.0 - m };
        }
        total += pq * (pq.ln() - pp.ln());
    }
    total
}

pub fn random_instance<R: Rng>(rng: &mut R, d: usize, k: usize) -> ModelParams {
    let theta = Array2::from_shape_fn((d, k), |_| {
        if rng.random::<f64>() < 0.3 {
            0.0
        } else {
            rng.random_range(0.05..2.0)
        }
    });
    let theta0 = Array1::from_shape_fn(d, |_| rng.random_range(0.01..1.0));
    let mu = Array1::from_shape_fn(k, |_| rng.random_range(0.05..0.95));
    ModelParams::new(theta, theta0, mu).expect("valid random instance")
}

pub fn random_observation<R: Rng>(rng: &mut R, d: usize) -> Vec<u8> {
    (0..d).map(|_| u8::from(rng.random::<f64>() < 0.4)).collect()
}

pub fn random_posterior<R: Rng>(rng: &mut R, k: usize) -> PosteriorFactors {
    PosteriorFactors::new(Array1::from_shape_fn(k, |_| rng.random_range(0.01..0.99)))
        .expect("valid posterior")
}

pub fn random_simplex<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..k).map(|_| -rng.random::<f64>().max(1e-12).ln()).collect();
    let total: f64 = draws.iter().sum();
    draws.iter().map(|&e| e / total).collect()
}

// ---------------------------------------------------------------------------
// binary-driving helpers

pub fn norlab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_norlab"))
}

/// Runs the binary, asserting success, and returns stdout.
pub fn run_ok(args: &[&str]) -> String {
    let output = norlab().args(args).output().expect("spawn norlab");
    assert!(
        output.status.success(),
        "norlab {:?} failed with {:?}:\n{}",
        args,
        output.status.code(),
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8_lossy(&output.stdout).into_owned()
}

pub fn run_code(args: &[&str]) -> i32 {
    let output = norlab().args(args).output().expect("spawn norlab");
    output.status.code().unwrap_or(-1)
}

/// Fresh scratch directory under the target tmp area.
pub fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("norlab-accept-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).expect("create scratch dir");
    dir
}

pub fn write(path: &Path, text: &str) {
    std::fs::write(path, text).expect("write file");
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).expect("read json"))
        .expect("parse json")
}

/// Parses one named column out of a simple CSV.
pub fn csv_column(path: &Path, name: &str) -> Vec<f64> {
    let text = std::fs::read_to_string(path).expect("read csv");
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().expect("csv header").split(',').collect();
    let idx = header
        .iter()
        .position(|&h| h == name)
        .unwrap_or_else(|| panic!("column {name} in {header:?}"));
    lines
        .map(|l| {
            l.split(',').nth(idx).unwrap_or_else(|| panic!("short row {l}"))
                .parse()
                .unwrap_or_else(|_| panic!("non-numeric cell in column {name}: {l}"))
        })
        .collect()
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
