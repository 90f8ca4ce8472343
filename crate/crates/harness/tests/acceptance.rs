//! Acceptance suite. Runs as a plain binary (`harness = false`) so that one
//! PASS/FAIL line per criterion is always printed; exits non-zero if any
//! criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use dp_ntk::dp::{
    check_dp_conditions, gaussian_sampling_mechanism, max_k, max_k_raw, min_k, ConditionConfig, DpParams,
    SensitivityInputs, TruncLapParams, DEFAULT_K_CAP,
};
use dp_ntk::kernel::{continuous_kernel, discrete_kernel, sample_weights};
use dp_ntk::numerics::{eigen_extremes, SymMatrix};
use dp_ntk::oracle::{
    cts_sensitivity_check, dis_sensitivity_check, entry_lipschitz_check, radial_probe_pair, DEFAULT_DISCRETE_SLACK,
};
use dp_ntk::regression::{fit, fit_private_with_kernel, PrivateFitConfig, Predictor};
use dp_ntk::{Dataset, RngStream};
use dp_ntk_harness::persist::{load_model, save_model, SavedModel};
use dp_ntk_harness::tradeoff::{prepare, run_tradeoff};
use dp_ntk_harness::verify::{ball_dataset, utility_instance, VerifyConfig};
use dp_ntk_harness::ExperimentConfig;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn psd_preservation() -> Outcome {
    let root = RngStream::new(101);
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut failures = 0;
    for i in 0..500 {
        let s = root.substream(format!("input/{i}"));
        let n = 1 + i % 10;
        let r = 1 + (i / 10) % n;
        let mut gen = s.rng();
        let a = DMatrix::from_fn(r, n, |_, _| gen.sample::<f64, _>(StandardNormal));
        let sigma = SymMatrix::new(a.transpose() * a).unwrap();
        for k in [1, 5, 100] {
            let out = gaussian_sampling_mechanism(&sigma, k, &s.substream(format!("k/{k}"))).unwrap();
            let (lo, _) = eigen_extremes(&out).unwrap();
            let rel = -lo / out.frobenius_norm().max(f64::MIN_POSITIVE);
            worst = worst.max(rel);
            if lo < -1e-10 * out.frobenius_norm() {
                failures += 1;
            }
        }
    }
    outcome(
        failures == 0,
        format!("1500 releases, worst -λ_min/‖Σ̂‖_F = {worst:.3e} (limit 1e-10), violations {failures}"),
    )
}

fn kernel_closed_form() -> Outcome {
    let data = ball_dataset(4, 3, 1, &RngStream::new(202).substream("data")).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for sigma in [1.0, 2.0] {
        let root = RngStream::new(202).substream(format!("sigma/{sigma}"));
        let mut avg = DMatrix::<f64>::zeros(4, 4);
        let draws = 10_000;
        for t in 0..draws {
            let w = sample_weights(1, 3, sigma, &root.substream(format!("w/{t}"))).unwrap();
            avg += discrete_kernel(&data, &w).unwrap().matrix().as_matrix();
        }
        avg /= draws as f64;
        let cts = continuous_kernel(&data, sigma).unwrap();
        let err = (avg - cts.matrix().as_matrix()).amax();
        let big = sample_weights(100_000, 3, sigma, &root.substream("m1e5")).unwrap();
        let gap = (discrete_kernel(&data, &big).unwrap().matrix().as_matrix() - cts.matrix().as_matrix()).norm();
        ok &= err <= 0.05 * sigma * sigma && gap <= 0.05 * 4.0;
        parts.push(format!(
            "σ={sigma}: max entry error {err:.4} (limit {:.2}), m=1e5 gap {gap:.4} (limit 0.2)",
            0.05 * sigma * sigma
        ));
    }
    outcome(ok, parts.join("; "))
}

fn gsm_concentration() -> Outcome {
    let eye = SymMatrix::identity(5);
    let limit = 3.0 * (25.0_f64 / 1e5).sqrt();
    let root = RngStream::new(303);
    let mut within = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let out = gaussian_sampling_mechanism(&eye, 100_000, &root.substream(format!("seed/{seed}"))).unwrap();
        let err = (out.as_matrix() - DMatrix::<f64>::identity(5, 5)).norm();
        worst = worst.max(err);
        if err <= limit {
            within += 1;
        }
    }
    outcome(
        within >= 99,
        format!("{within}/100 seeds within {limit:.4}, worst ‖Σ̂-I‖_F = {worst:.4}"),
    )
}

fn tlap_reference_cdf(z: f64) -> f64 {
    // Laplace(0, 1) restricted to [-1, 1]
    if z <= -1.0 {
        return 0.0;
    }
    if z >= 1.0 {
        return 1.0;
    }
    let half = 0.5 * (1.0 - (-z.abs()).exp()) / (1.0 - (-1.0_f64).exp());
    if z < 0.0 {
        0.5 - half
    } else {
        0.5 + half
    }
}

fn truncated_laplace() -> Outcome {
    let p = TruncLapParams::new(1.0, 1.0, 0.5).unwrap();
    let mut gen = RngStream::new(404).substream("support").rng();
    let mut outside = 0u64;
    let mut max_abs: f64 = 0.0;
    for _ in 0..10_000_000u64 {
        let z = p.sample(&mut gen);
        max_abs = max_abs.max(z.abs());
        if z.abs() > 1.0 {
            outside += 1;
        }
    }
    let mut gen = RngStream::new(404).substream("ks").rng();
    let mut draws: Vec<f64> = (0..100_000).map(|_| p.sample(&mut gen)).collect();
    draws.sort_by(f64::total_cmp);
    let n = draws.len() as f64;
    let ks = draws
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            let f = tlap_reference_cdf(z);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0_f64, f64::max);
    outcome(
        outside == 0 && ks <= 0.01,
        format!(
            "B_L = {}, max |z| over 1e7 draws = {max_abs:.6}, outside {outside}; KS at 1e5 = {ks:.5} (limit 0.01)",
            p.width()
        ),
    )
}

fn sensitivity_suite() -> Outcome {
    let beta = 0.1;
    let data = ball_dataset(5, 4, 1, &RngStream::new(505).substream("data")).unwrap();
    let cts = cts_sensitivity_check(&data, 1.0, beta, 1000, &RngStream::new(505).substream("cts")).unwrap();
    let w = sample_weights(10_000, 4, 1.0, &RngStream::new(505).substream("weights")).unwrap();
    let dis = dis_sensitivity_check(
        &data,
        &w,
        beta,
        1000,
        &RngStream::new(505).substream("dis"),
        DEFAULT_DISCRETE_SLACK,
    )
    .unwrap();
    let sandwich = dis.sandwich_max_ratio.unwrap_or(f64::INFINITY);

    // a well-conditioned base where the sandwich interval excludes zero
    let x = DMatrix::from_row_slice(
        5,
        4,
        &[1., 0., 0., 0., 0., 1., 0., 0., 0., 0., 1., 0., 0., 0., 0., 1., 0.5, 0.5, 0.5, 0.5],
    );
    let spread = Dataset::new(x, DMatrix::zeros(5, 1), 1.0).unwrap();
    let tight = dis_sensitivity_check(
        &spread,
        &w,
        0.05,
        1000,
        &RngStream::new(505).substream("dis/tight"),
        DEFAULT_DISCRETE_SLACK,
    )
    .unwrap();
    let tight_ratio = tight.sandwich_max_ratio.unwrap_or(f64::INFINITY);

    let probe = entry_lipschitz_check(&radial_probe_pair(5, 4, 1.0, beta).unwrap(), 1.0).unwrap();

    let ok = cts.max_offdiag_ratio <= 1.0
        && cts.max_diag_ratio <= 1.0
        && cts.max_ratio <= 1.0
        && sandwich <= 1.0
        && dis.passed()
        && tight.sandwich_informative
        && tight_ratio <= 1.0
        && probe.passed();
    outcome(
        ok,
        format!(
            "entry ratios offdiag {:.3} diag {:.3}, probe diag {:.3}; cts Frobenius ratio {:.3}; \
             sandwich ratio {sandwich:.4} (informative: {}), well-conditioned sandwich {tight_ratio:.3} \
             (informative: {}); discrete within 2ψ in {:.1}% (max ratio {:.3})",
            cts.max_offdiag_ratio,
            cts.max_diag_ratio,
            probe.diag_ratio,
            cts.max_ratio,
            dis.sandwich_informative,
            tight.sandwich_informative,
            100.0 * dis.within_fraction,
            dis.max_ratio
        ),
    )
}

fn budget_calculator() -> Outcome {
    let s = SensitivityInputs {
        n: 1000,
        sigma: 1.0,
        bound_b: 1.0,
        beta: 1e-6,
    };
    let eta = 7e-3;
    let delta = 2e-3;
    let raw = max_k_raw(1.0, delta, &s, eta);
    let raw10 = max_k_raw(10.0, delta, &s, eta);
    let floor = min_k(delta);
    let k = max_k(1.0, delta, &s, eta, DEFAULT_K_CAP);
    let report = check_dp_conditions(DpParams::new(1.0, delta).unwrap(), floor, &s, eta, &ConditionConfig::default());
    let scale = raw10 / raw;
    let ok = (raw - 0.985_581_054_025_765_5).abs() < 1e-12
        && raw < 8.0 * (1.0 / delta).ln()
        && k == 0
        && !report.feasible()
        && (scale - 100.0).abs() <= 1e-12 * 100.0;
    outcome(
        ok,
        format!("raw bound {raw:.6} < 8 ln(1/δ) = {:.3}, max_k = {k}, feasible at k = {floor}: {}; ×10 ε scales raw by {scale}", 8.0 * (1.0 / delta).ln(), report.feasible()),
    )
}

fn utility_consistency() -> Outcome {
    let cfg = VerifyConfig {
        n: 5,
        d: 4,
        utility_k: 10_000,
        utility_beta: 1e-4,
        utility_lambda: 1.0,
        utility_queries: 10,
        ..VerifyConfig::default()
    };
    let root = RngStream::new(707);
    let mut within = 0;
    let mut inv_within = 0;
    let mut worst: f64 = 0.0;
    for t in 0..200 {
        let s = utility_instance(&cfg, &root.substream(format!("instance/{t}"))).unwrap();
        worst = worst.max(s.prediction_ratio);
        within += usize::from(s.prediction_ratio <= 10.0);
        inv_within += usize::from(s.inverse_ratio <= 10.0);
    }
    outcome(
        within as f64 >= 0.95 * 200.0,
        format!(
            "{within}/200 instances within 10× the regression bound (worst ratio {worst:.2e}); inverse gap within 10× in {inv_within}/200"
        ),
    )
}

fn tradeoff_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        n: 200,
        d: 16,
        n_cls: 2,
        separation: 1.0,
        spread: 0.6,
        train_fraction: 0.3,
        epsilon_grid: vec![3.0, 10.0, 30.0, 100.0, 300.0, 1e3, 3e3, 1e4, 3e4],
        seed,
        ..ExperimentConfig::default()
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn tradeoff_trend() -> Outcome {
    let tables: Vec<_> = (0..10).map(|seed| run_tradeoff(&tradeoff_config(seed)).unwrap()).collect();
    let grid = tradeoff_config(0).epsilon_grid;
    let all_feasible = tables.iter().all(|t| t.rows.iter().all(|r| r.feasible));
    let med: Vec<f64> = (0..grid.len())
        .map(|i| median(tables.iter().map(|t| t.rows[i].acc_test_priv).collect()))
        .collect();
    let non_private = median(tables.iter().map(|t| t.rows[0].acc_test).collect());
    let monotone = med.windows(2).all(|w| w[1] >= w[0] - 0.03);
    let last = *med.last().unwrap();
    let decades = (grid[grid.len() - 1] / grid[0]).log10();
    let ok = all_feasible && monotone && (last - non_private).abs() <= 0.05 && decades >= 4.0;
    let curve: Vec<String> = grid.iter().zip(&med).map(|(e, a)| format!("{e}:{a:.3}")).collect();
    outcome(
        ok,
        format!(
            "{decades:.2} decades, all rows feasible: {all_feasible}, median private test acc [{}], non-private {non_private:.3}, monotone within 0.03: {monotone}",
            curve.join(" ")
        ),
    )
}

fn determinism_and_persistence() -> Outcome {
    let cfg = tradeoff_config(909);
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    run_tradeoff(&cfg).unwrap().save(&a).unwrap();
    run_tradeoff(&cfg).unwrap().save(&b).unwrap();
    let same_csv = std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap();

    let prep = prepare(&cfg).unwrap();
    let dp = DpParams::new(50.0, 1e-3).unwrap();
    let fit_cfg = PrivateFitConfig::new(cfg.lambda, 100_000, dp, dp, cfg.beta);
    let private =
        fit_private_with_kernel(&prep.train, &prep.kernel, &prep.weights, &fit_cfg, &RngStream::new(909)).unwrap();
    let plain = fit(&prep.train, &prep.weights, cfg.lambda).unwrap();
    let pp = dir.path().join("private.bin");
    let pn = dir.path().join("plain.bin");
    save_model(&SavedModel::Private(private.clone()), &pp).unwrap();
    save_model(&SavedModel::Plain(plain.clone()), &pn).unwrap();
    let (SavedModel::Private(private2), SavedModel::Plain(plain2)) = (load_model(&pp).unwrap(), load_model(&pn).unwrap())
    else {
        return outcome(false, "model kind changed on reload".into());
    };
    let mut gen = RngStream::new(909).substream("queries").rng();
    let mut mismatches = 0;
    for _ in 0..100 {
        let q: Vec<f64> = (0..cfg.d).map(|_| gen.sample::<f64, _>(StandardNormal)).collect();
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        let q: Vec<f64> = q.iter().map(|v| v / norm).collect();
        let bits = |v: nalgebra::DVector<f64>| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        if bits(private.predict(&q).unwrap()) != bits(private2.predict(&q).unwrap()) {
            mismatches += 1;
        }
        if bits(plain.predict(&q).unwrap()) != bits(plain2.predict(&q).unwrap()) {
            mismatches += 1;
        }
    }
    outcome(
        same_csv && mismatches == 0,
        format!("repeated tradeoff CSVs byte-identical: {same_csv}; reload prediction mismatches over 100 queries: {mismatches}"),
    )
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("GSM output is PSD", Duration::from_secs(30), psd_preservation),
        ("kernel matches its closed form", Duration::from_secs(60), kernel_closed_form),
        ("GSM concentrates", Duration::from_secs(60), gsm_concentration),
        ("truncated Laplace support and law", Duration::from_secs(60), truncated_laplace),
        ("sensitivity oracle suite", Duration::from_secs(300), sensitivity_suite),
        ("budget calculator", Duration::from_secs(1), budget_calculator),
        ("utility bound consistency", Duration::from_secs(300), utility_consistency),
        ("privacy-utility trend", Duration::from_secs(600), tradeoff_trend),
        ("determinism and persistence", Duration::from_secs(120), determinism_and_persistence),
    ];
    let mut failed = 0;
    for (i, (name, limit, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let in_time = elapsed < *limit;
        let passed = out.passed && in_time;
        if !passed {
            failed += 1;
        }
        println!(
            "{} criterion {}: {name}: {} [{:.2}s, limit {}s{}]",
            if passed { "PASS" } else { "FAIL" },
            i + 1,
            out.detail,
            elapsed.as_secs_f64(),
            limit.as_secs(),
            if in_time { "" } else { ", over time" }
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
