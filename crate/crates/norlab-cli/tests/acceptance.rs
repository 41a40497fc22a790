//! Acceptance suite: one test per gate criterion, each printing a PASS line
//! with the measured figures (visible with `--nocapture` or on failure).
//!
//! The heavy criteria drive the `norlab` binary end to end with pinned
//! seeds and configurations, so a green run is reproducible bit for bit.

mod common;

use std::path::Path;

use common::*;
use nor_core::bounds::{conjugate_f, conjugate_g, lb_log_lik, log_lik_positive, tight_psi};
use nor_core::exact::{elbo_exact, elbo_mc_test, exact_log_marginal, positive_dims};
use nor_core::posterior::{conjugate_posterior, lb_surrogate_posterior, ub_marginal_loglik};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pass(name: &str, detail: impl std::fmt::Display) {
    println!("[PASS] {name}: {detail}");
}

/// Oracle suite: closed forms equal surrogate enumeration on 200 random
/// instances with K <= 8, D <= 16.
#[test]
fn acceptance_oracle_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce97);
    let mut max_q = 0.0f64;
    let mut max_lb = 0.0f64;
    let mut max_z = 0.0f64;
    let mut max_terms = 0.0f64;
    for _ in 0..200 {
        let d = rng.random_range(2..=16usize);
        let k = rng.random_range(1..=8usize);
        let params = random_instance(&mut rng, d, k);
        let mut x = random_observation(&mut rng, d);
        x[0] = 1;
        let n_pos = positive_dims(&x).len();

        // (a) conjugate posterior vs surrogate marginals
        let psi: Vec<f64> = (0..n_pos).map(|_| rng.random_range(0.05..5.0)).collect();
        let q = conjugate_posterior(&params, &x, &psi).unwrap();
        let (log_z, marginals) = surrogate_ub_enumeration(&params, &x, &psi);
        for kk in 0..k {
            max_q = max_q.max((q.q[kk] - marginals[kk]).abs());
        }

        // (b) lower-bound surrogate posterior vs enumeration
        let lambda: Vec<Vec<f64>> = (0..n_pos).map(|_| random_simplex(&mut rng, k)).collect();
        let ql = lb_surrogate_posterior(&params, &x, &lambda).unwrap();
        let lb_marg = surrogate_lb_enumeration(&params, &x, &lambda);
        for kk in 0..k {
            max_lb = max_lb.max((ql.q[kk] - lb_marg[kk]).abs());
        }

        // (c) surrogate normalizer: agreement and dominance
        let fast = ub_marginal_loglik(&params, &x, &psi).unwrap();
        max_z = max_z.max((fast - log_z).abs());
        let lm = exact_log_marginal(&params, &x).unwrap();
        assert!(fast >= lm - 1e-10, "surrogate {fast} below exact {lm}");

        // (d) analytic ELBO terms vs enumeration
        let qr = random_posterior(&mut rng, k);
        let neg = nor_core::elbo::expected_negative_term(&params, &x, &qr).unwrap();
        max_terms = max_terms.max((neg - negative_term_enumeration(&params, &x, &qr)).abs());
        let kl = nor_core::elbo::kl_to_prior(&qr, &params.mu).unwrap();
        max_terms = max_terms.max((kl - kl_enumeration(&qr, &params.mu)).abs());
    }
    assert!(max_q < 1e-9, "conjugate posterior error {max_q}");
    assert!(max_lb < 1e-9, "lb posterior error {max_lb}");
    assert!(max_z < 1e-10, "normalizer error {max_z}");
    assert!(max_terms < 1e-10, "analytic term error {max_terms}");
    pass(
        "oracle suite",
        format!(
            "200 instances; max errors: posterior {max_q:.2e}, lb-posterior {max_lb:.2e}, \
             normalizer {max_z:.2e}, terms {max_terms:.2e}"
        ),
    );
}

/// Bound suite: dominance and tightness of the conjugate pair.
#[test]
fn acceptance_bound_suite() {
    // tightness over a log grid
    let n = 400;
    let (lo, hi) = (1e-4f64.ln(), 20f64.ln());
    let mut max_gap = 0.0f64;
    for j in 0..=n {
        let a = (lo + (hi - lo) * j as f64 / n as f64).exp();
        let psi = tight_psi(a).unwrap();
        let gap = psi * a - conjugate_g(psi).unwrap() - conjugate_f(a).unwrap();
        assert!(gap >= -1e-10, "a={a}: negative gap {gap}");
        max_gap = max_gap.max(gap.abs());
    }
    assert!(max_gap < 1e-10, "tightness gap {max_gap}");

    // UB dominance on random (a, psi)
    let mut rng = ChaCha8Rng::seed_from_u64(0xb0bd);
    for _ in 0..1000 {
        let a = rng.random_range(1e-4..20.0);
        let psi = rng.random_range(1e-4..50.0);
        let bound = psi * a - conjugate_g(psi).unwrap();
        assert!(bound >= conjugate_f(a).unwrap() - 1e-12);
    }

    // LB dominance on 1000 random (theta, z, lambda)
    for _ in 0..1000 {
        let k = rng.random_range(1..=6usize);
        let params = random_instance(&mut rng, 1, k);
        let z: Vec<f64> = (0..k).map(|_| f64::from(rng.random::<bool>() as u8)).collect();
        let lam = random_simplex(&mut rng, k);
        let lb = lb_log_lik(&params, 0, &z, &lam).unwrap();
        let truth = log_lik_positive(&params, 0, &z).unwrap();
        assert!(lb <= truth + 1e-12, "lb {lb} above truth {truth}");
    }
    pass(
        "bound suite",
        format!("tightness gap {max_gap:.2e}; 1000 UB and 1000 LB dominance trials"),
    );
}

/// Gradient suite: all three losses agree with finite differences.
#[test]
fn acceptance_gradient_suite() {
    use ndarray::Array2;
    use nor_core::datagen::sample_dataset;
    use nor_core::encoder::Activation;
    use nor_core::flat::{
        build_layout, init_encoder_flat, init_generative, FlatParams, GenShape, SegmentKind,
    };
    use nor_core::loss::{GumbelNoise, LossContext, Method, MethodLoss, TermMask};
    use nor_core::tape::grad_check;

    const D: usize = 12;
    const K: usize = 6;
    const BATCH: usize = 10;
    let mut worst = 0.0f64;
    for method in [Method::Acp, Method::Avi, Method::Svi] {
        for point in 0..5u64 {
            let seed = 0x60ad + 131 * point + u64::from(method == Method::Avi) * 7001;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let truth = random_instance(&mut rng, D, K);
            let ds = sample_dataset(&truth, BATCH, seed ^ 0xd5, false).unwrap();
            let shape = GenShape { d: D, k: K };
            let widths = match method {
                Method::Acp => Some(vec![D, 2 * D, D]),
                Method::Avi => Some(vec![D, 2 * D, K]),
                Method::Svi => None,
            };
            let layout = build_layout(
                shape,
                widths.as_deref(),
                true,
                point == 4,
                if method == Method::Svi { BATCH } else { 0 },
            );
            let mut flat = FlatParams::zeros(layout);
            init_generative(&mut flat, shape, 0.2, &mut rng);
            if let Some(w) = &widths {
                init_encoder_flat(&mut flat, w, &mut rng);
            }
            if method == Method::Svi {
                for v in flat.segment_mut(SegmentKind::SviLogits).unwrap() {
                    *v = rng.random_range(-1.5..1.5);
                }
            }
            let noise = (method != Method::Svi)
                .then(|| GumbelNoise::draw(BATCH, 4, K, &mut rng));
            let lambda: Option<Vec<Vec<Vec<f64>>>> = (method == Method::Svi).then(|| {
                ds.x.rows()
                    .into_iter()
                    .map(|row| {
                        positive_dims(row.as_slice().unwrap())
                            .iter()
                            .map(|_| random_simplex(&mut rng, K))
                            .collect()
                    })
                    .collect()
            });
            let ctx = LossContext {
                shape,
                encoder_widths: widths,
                hidden_act: Activation::Relu,
                tau: 0.5,
                l_samples: 4,
                terms: TermMask::default(),
            };
            let idx: Vec<usize> = (0..BATCH).collect();
            let loss = MethodLoss {
                method,
                layout: &flat.layout,
                ctx: &ctx,
                data: &ds.x,
                idx: &idx,
                noise: noise.as_ref(),
                svi_lambda: lambda.as_deref(),
            };
            let err = grad_check(&loss, &flat.values, 1e-5).unwrap();
            assert!(err < 1e-4, "{method} point {point}: relative error {err}");
            worst = worst.max(err);
            let _ = Array2::<u8>::zeros((1, 1));
        }
    }
    pass(
        "gradient suite",
        format!("worst relative error {worst:.2e} over 3 methods x 5 points"),
    );
}

/// Fig. 4b phenomenon: monotone bound tightening, non-monotone ELBO that
/// drops below its initial value in at least 4 of 5 seeds.
#[test]
fn acceptance_fig4b_phenomenon() {
    let dir = scratch("fig4b");
    write(
        &dir.join("gen.json"),
        r#"{"kind":"pattern","preset":"syn-pattern","n_train":50,"n_test":200,"seed":20240801}"#,
    );
    run_ok(&[
        "generate",
        "--config",
        dir.join("gen.json").to_str().unwrap(),
        "--out",
        dir.join("data").to_str().unwrap(),
    ]);
    let mut drops = 0;
    for seed in 1..=5u64 {
        let out = dir.join(format!("cdi{seed}"));
        run_ok(&[
            "cdi",
            "--kind",
            "ub",
            "--params",
            dir.join("data/params.json").to_str().unwrap(),
            "--data",
            dir.join("data").to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            &seed.to_string(),
            "--max-iter",
            "50",
        ]);
        let ll = csv_column(&out.join("trace.csv"), "mean_ll_ub");
        for w in ll.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-9,
                "seed {seed}: LL-UB increased {} -> {}",
                w[0],
                w[1]
            );
        }
        let elbo = csv_column(&out.join("trace.csv"), "mean_elbo");
        if elbo[1..].iter().any(|&e| e < elbo[0]) {
            drops += 1;
        }
    }
    assert!(drops >= 4, "ELBO dropped below initial in only {drops}/5 seeds");
    pass(
        "fig4b phenomenon",
        format!("LL-UB monotone in 5/5 seeds; ELBO dipped below initial in {drops}/5"),
    );
}

fn train_and_eval(
    data: &Path,
    out_root: &Path,
    method: &str,
    cfg_path: &Path,
    seed: u64,
) -> f64 {
    let ckpt = out_root.join(format!("{method}_s{seed}"));
    run_ok(&[
        "train",
        "--method",
        method,
        "--data",
        data.to_str().unwrap(),
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        ckpt.to_str().unwrap(),
        "--seed",
        &seed.to_string(),
    ]);
    let eval_dir = ckpt.join("eval");
    run_ok(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        eval_dir.to_str().unwrap(),
    ]);
    read_json(&eval_dir.join("metrics.json"))["nelbo"]
        .as_f64()
        .expect("nelbo")
}

/// Fig. 4a ordering at desk scale: inference-only training on the true
/// syn-pattern generator. ACP beats AVI by >= 2 nats at N=20; the two tie
/// within 2 nats at N=1000.
#[test]
fn acceptance_fig4a_ordering() {
    let dir = scratch("fig4a");
    write(
        &dir.join("gen.json"),
        r#"{"kind":"pattern","preset":"syn-pattern","n_train":1000,"n_test":1000,"seed":20240801}"#,
    );
    run_ok(&[
        "generate",
        "--config",
        dir.join("gen.json").to_str().unwrap(),
        "--out",
        dir.join("data").to_str().unwrap(),
    ]);
    write(
        &dir.join("train20.json"),
        r#"{"train_generative":false,"n_train":20,"max_epochs":300,"patience":40}"#,
    );
    write(
        &dir.join("train1000.json"),
        r#"{"train_generative":false,"n_train":1000,"max_epochs":150,"patience":20}"#,
    );
    let seeds = [1u64, 2, 3, 4, 5];
    let run_mean = |cfg: &Path, method: &str| -> f64 {
        let nelbos: Vec<f64> = seeds
            .iter()
            .map(|&s| train_and_eval(&dir.join("data"), &dir, method, cfg, s))
            .collect();
        mean(&nelbos)
    };
    let acp20 = run_mean(&dir.join("train20.json"), "acp");
    let avi20 = run_mean(&dir.join("train20.json"), "avi");
    let acp1000 = run_mean(&dir.join("train1000.json"), "acp");
    let avi1000 = run_mean(&dir.join("train1000.json"), "avi");
    assert!(
        acp20 + 2.0 <= avi20,
        "N=20: ACP {acp20:.3} vs AVI {avi20:.3} (gap {:.3} < 2)",
        avi20 - acp20
    );
    assert!(
        (acp1000 - avi1000).abs() <= 2.0,
        "N=1000: ACP {acp1000:.3} vs AVI {avi1000:.3} differ by more than 2"
    );
    pass(
        "fig4a ordering",
        format!(
            "N=20: ACP {acp20:.2} vs AVI {avi20:.2} (gap {:.2}); \
             N=1000: ACP {acp1000:.2} vs AVI {avi1000:.2} (|gap| {:.2})",
            avi20 - acp20,
            (acp1000 - avi1000).abs()
        ),
    );
}

/// Table-5 trend at desk scale via the sweep harness: the AVI - ACP NELBO
/// gap at N=1k is non-negative and larger than at N=10k.
#[test]
fn acceptance_table5_trend() {
    let dir = scratch("table5");
    write(
        &dir.join("gen.json"),
        r#"{"kind":"sparse","d":100,"k":20,"alpha_theta":1.0,"beta_theta":5.0,"alpha_mu":1.0,"beta_mu":5.0,"sparsity_control":0.95,"n_test":1000,"n_train":10000,"seed":424242}"#,
    );
    run_ok(&[
        "generate",
        "--config",
        dir.join("gen.json").to_str().unwrap(),
        "--out",
        dir.join("data").to_str().unwrap(),
    ]);
    let data = dir.join("data");
    let manifest = serde_json::json!({
        "cells": [
            {"data": data, "method": "acp", "n_train": 1000, "seeds": [1, 2, 3, 4, 5]},
            {"data": data, "method": "avi", "n_train": 1000, "seeds": [1, 2, 3, 4, 5]},
            {"data": data, "method": "acp", "n_train": 10000, "seeds": [1, 2, 3, 4, 5]},
            {"data": data, "method": "avi", "n_train": 10000, "seeds": [1, 2, 3, 4, 5]},
        ],
        "train": {"max_epochs": 40, "patience": 8, "hidden": [64], "mu_init": 0.1}
    });
    write(&dir.join("manifest.json"), &manifest.to_string());
    run_ok(&[
        "sweep",
        "--manifest",
        dir.join("manifest.json").to_str().unwrap(),
        "--out",
        dir.join("sweep").to_str().unwrap(),
        "--jobs",
        "2",
    ]);
    let means = csv_column(&dir.join("sweep/results.csv"), "nelbo_mean");
    let (acp1k, avi1k, acp10k, avi10k) = (means[0], means[1], means[2], means[3]);
    let gap1k = avi1k - acp1k;
    let gap10k = avi10k - acp10k;
    assert!(gap1k >= 0.0, "gap at 1k is negative: {gap1k:.3}");
    assert!(
        gap1k > gap10k,
        "gap did not grow as data shrank: 1k {gap1k:.3} vs 10k {gap10k:.3}"
    );
    pass(
        "table5 trend",
        format!("gap(1k) = {gap1k:.3} >= 0 and > gap(10k) = {gap10k:.3}"),
    );
}

/// Parameter recovery: joint ACP training recovers the syn-pattern columns
/// (best-of-5 matched correlation >= 0.8 at N=1000) and beats AVI at N=200
/// in at least 3 of 5 paired seeds.
#[test]
fn acceptance_parameter_recovery() {
    let dir = scratch("recovery");
    write(
        &dir.join("gen.json"),
        r#"{"kind":"pattern","preset":"syn-pattern","n_train":1000,"n_test":500,"seed":20240801}"#,
    );
    run_ok(&[
        "generate",
        "--config",
        dir.join("gen.json").to_str().unwrap(),
        "--out",
        dir.join("data").to_str().unwrap(),
    ]);
    write(
        &dir.join("train1000.json"),
        r#"{"n_train":1000,"max_epochs":200,"patience":25,"mu_init":0.125}"#,
    );
    write(
        &dir.join("train200.json"),
        r#"{"n_train":200,"max_epochs":250,"patience":30,"mu_init":0.125}"#,
    );
    let data = dir.join("data");
    let match_score = |method: &str, cfg: &str, seed: u64| -> f64 {
        let ckpt = dir.join(format!("{method}_{cfg}_s{seed}"));
        run_ok(&[
            "train",
            "--method",
            method,
            "--data",
            data.to_str().unwrap(),
            "--config",
            dir.join(cfg).to_str().unwrap(),
            "--out",
            ckpt.to_str().unwrap(),
            "--seed",
            &seed.to_string(),
        ]);
        let eval_dir = ckpt.join("eval");
        run_ok(&[
            "eval",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--out",
            eval_dir.to_str().unwrap(),
            "--true-params",
            data.join("params.json").to_str().unwrap(),
        ]);
        read_json(&eval_dir.join("metrics.json"))["pattern_match_mean"]
            .as_f64()
            .expect("pattern_match_mean")
    };

    let seeds = [1u64, 2, 3, 4, 5];
    let best_1000 = seeds
        .iter()
        .map(|&s| match_score("acp", "train1000.json", s))
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(
        best_1000 >= 0.8,
        "best ACP matched correlation at N=1000: {best_1000:.3}"
    );

    let mut acp_wins = 0;
    let mut pairs = Vec::new();
    for &s in &seeds {
        let acp = match_score("acp", "train200.json", s);
        let avi = match_score("avi", "train200.json", s);
        if acp > avi {
            acp_wins += 1;
        }
        pairs.push(format!("{acp:.2}/{avi:.2}"));
    }
    assert!(
        acp_wins >= 3,
        "ACP beat AVI in only {acp_wins}/5 paired seeds ({pairs:?})"
    );
    pass(
        "parameter recovery",
        format!(
            "best N=1000 correlation {best_1000:.3}; N=200 ACP>AVI in {acp_wins}/5 ({})",
            pairs.join(", ")
        ),
    );
}

/// Generator statistics: preset sparsities land in the published bands.
#[test]
fn acceptance_generator_statistics() {
    let dir = scratch("genstats");
    let check = |name: &str, cfg: &str, lo: f64, hi: f64| -> f64 {
        let cfg_path = dir.join(format!("{name}.json"));
        write(&cfg_path, cfg);
        let out = dir.join(name);
        run_ok(&[
            "generate",
            "--config",
            cfg_path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        let s = read_json(&out.join("summary.json"))["sparsity_train"]
            .as_f64()
            .expect("sparsity")
            * 100.0;
        assert!(
            (lo..=hi).contains(&s),
            "{name}: sparsity {s:.2}% outside [{lo}, {hi}]"
        );
        s
    };
    let sp = check(
        "syn-pattern",
        r#"{"kind":"pattern","preset":"syn-pattern","n_train":2000,"n_test":500,"seed":11}"#,
        87.0,
        91.0,
    );
    let sr1 = check(
        "sparse-row1",
        r#"{"kind":"sparse","d":50,"k":100,"alpha_theta":1.0,"beta_theta":5.0,"alpha_mu":1.0,"beta_mu":10.0,"sparsity_control":0.95,"n_test":500,"n_train":2000,"seed":11}"#,
        91.2,
        97.2,
    );
    let sr3 = check(
        "sparse-row3",
        r#"{"kind":"sparse","d":50,"k":100,"alpha_theta":2.0,"beta_theta":5.0,"alpha_mu":2.0,"beta_mu":5.0,"sparsity_control":0.9,"n_test":500,"n_train":2000,"seed":13}"#,
        48.4,
        54.4,
    );
    pass(
        "generator statistics",
        format!("syn-pattern {sp:.1}%, sparse high {sr1:.1}%, sparse dense {sr3:.1}%"),
    );
}

fn compare_trees(a: &Path, b: &Path) {
    let mut entries_a: Vec<_> = std::fs::read_dir(a)
        .unwrap_or_else(|e| panic!("{}: {e}", a.display()))
        .map(|e| e.unwrap().file_name())
        .collect();
    entries_a.sort();
    let mut entries_b: Vec<_> = std::fs::read_dir(b).unwrap().map(|e| e.unwrap().file_name()).collect();
    entries_b.sort();
    assert_eq!(entries_a, entries_b, "directory listings differ: {}", a.display());
    for name in entries_a {
        let (pa, pb) = (a.join(&name), b.join(&name));
        if pa.is_dir() {
            compare_trees(&pa, &pb);
        } else if name == "train_log.csv" {
            // wall-clock column is exempt from bit-identical comparison
            let strip = |p: &Path| -> String {
                std::fs::read_to_string(p)
                    .unwrap()
                    .lines()
                    .map(|l| l.rsplit_once(',').map_or(l.to_string(), |(head, _)| head.to_string()))
                    .collect::<Vec<_>>()
                    .join("\n")
            };
            assert_eq!(strip(&pa), strip(&pb), "{} differs (ignoring wall_ms)", pa.display());
        } else {
            let ba = std::fs::read(&pa).unwrap();
            let bb = std::fs::read(&pb).unwrap();
            assert_eq!(ba, bb, "{} differs between reruns", pa.display());
        }
    }
}

/// Determinism: every command, rerun with identical inputs and seeds,
/// produces byte-identical outputs (wall-clock column exempt).
#[test]
fn acceptance_determinism() {
    let dir = scratch("determinism");
    write(
        &dir.join("gen.json"),
        r#"{"kind":"sparse","d":24,"k":8,"alpha_theta":1.0,"beta_theta":4.0,"alpha_mu":1.0,"beta_mu":6.0,"sparsity_control":0.7,"n_test":60,"n_train":120,"seed":33}"#,
    );
    write(
        &dir.join("train.json"),
        r#"{"max_epochs":3,"patience":5,"batch_size":60}"#,
    );
    // the sweep manifest echoes its data path into results.csv, so both
    // reruns must reference one canonical dataset; its own generation
    // determinism is covered by comparing run1/data with run2/data
    let shared = dir.join("shared-data");
    run_ok(&[
        "generate",
        "--config",
        dir.join("gen.json").to_str().unwrap(),
        "--out",
        shared.to_str().unwrap(),
    ]);
    let pipeline = |tag: &str| {
        let root = dir.join(tag);
        let data = root.join("data");
        run_ok(&[
            "generate",
            "--config",
            dir.join("gen.json").to_str().unwrap(),
            "--out",
            data.to_str().unwrap(),
        ]);
        for method in ["acp", "avi", "svi"] {
            let ckpt = root.join(format!("ckpt_{method}"));
            run_ok(&[
                "train",
                "--method",
                method,
                "--data",
                data.to_str().unwrap(),
                "--config",
                dir.join("train.json").to_str().unwrap(),
                "--out",
                ckpt.to_str().unwrap(),
                "--seed",
                "5",
            ]);
            run_ok(&[
                "eval",
                "--checkpoint",
                ckpt.to_str().unwrap(),
                "--data",
                data.to_str().unwrap(),
                "--out",
                root.join(format!("eval_{method}")).to_str().unwrap(),
                "--true-params",
                data.join("params.json").to_str().unwrap(),
            ]);
        }
        for kind in ["ub", "lb"] {
            run_ok(&[
                "cdi",
                "--kind",
                kind,
                "--params",
                data.join("params.json").to_str().unwrap(),
                "--data",
                data.to_str().unwrap(),
                "--out",
                root.join(format!("cdi_{kind}")).to_str().unwrap(),
                "--seed",
                "3",
                "--max-iter",
                "25",
            ]);
        }
        run_ok(&[
            "export-patterns",
            "--checkpoint",
            data.join("params.json").to_str().unwrap(),
            "--height",
            "4",
            "--width",
            "6",
            "--out",
            root.join("patterns").to_str().unwrap(),
        ]);
        let manifest = serde_json::json!({
            "cells": [{"data": shared, "method": "acp", "n_train": 120, "seeds": [1, 2]}],
            "train": {"max_epochs": 2, "patience": 3, "batch_size": 60}
        });
        write(&root.join("manifest.json"), &manifest.to_string());
        run_ok(&[
            "sweep",
            "--manifest",
            root.join("manifest.json").to_str().unwrap(),
            "--out",
            root.join("sweep").to_str().unwrap(),
            "--jobs",
            "2",
        ]);
        root
    };
    let first = pipeline("run1");
    let second = pipeline("run2");
    compare_trees(&first, &second);
    pass(
        "determinism",
        "generate/train/eval/cdi/export-patterns/sweep reruns are byte-identical",
    );
}

/// Monte Carlo estimator consistency: 200k-sample estimates stay within
/// three exact standard errors of enumeration on 20 random K=6 instances.
#[test]
fn acceptance_mc_consistency() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x3c0de);
    let n_samples = 200_000;
    let mut worst_sigmas = 0.0f64;
    for trial in 0..20 {
        let d = rng.random_range(2..10usize);
        let k = 6;
        let params = random_instance(&mut rng, d, k);
        let x = random_observation(&mut rng, d);
        let q = random_posterior(&mut rng, k);
        let exact = elbo_exact(&params, &x, &q).unwrap();
        let mc = elbo_mc_test(&params, &x, &q, n_samples, 31_000 + trial).unwrap();

        let pos: Vec<usize> = positive_dims(&x);
        let mut mean_v = 0.0;
        let mut second = 0.0;
        for cfg in 0..(1usize << k) {
            let p = factorized_prob(&q, cfg);
            let mut val = 0.0;
            for &i in &pos {
                val += f_naive(activation_naive(&params, i, cfg).max(1e-6));
            }
            mean_v += p * val;
            second += p * val * val;
        }
        let se = ((second - mean_v * mean_v).max(0.0) / n_samples as f64).sqrt();
        let dev = (mc - exact).abs();
        assert!(
            dev <= 3.0 * se + 1e-12,
            "trial {trial}: |{mc} - {exact}| = {dev} > 3 x {se}"
        );
        if se > 0.0 {
            worst_sigmas = worst_sigmas.max(dev / se);
        }
    }
    pass(
        "mc estimator consistency",
        format!("20 instances at 200k samples; worst deviation {worst_sigmas:.2} sigma"),
    );
}
