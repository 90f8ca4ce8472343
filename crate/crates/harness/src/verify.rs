//! Bound-verification report: every closed-form bound next to its measured
//! counterpart.

use std::io::Write;
use std::path::Path;

use dp_ntk::dp::{
    check_dp_conditions, feature_noise, gaussian_sampling_mechanism, privatize_dataset, rho_bound, ConditionConfig,
    DpParams, TruncLapParams,
};
use dp_ntk::kernel::{continuous_kernel, discrete_kernel, sample_weights};
use dp_ntk::numerics::{eigen_extremes, spd_solve, sym_eigen, SymMatrix};
use dp_ntk::oracle::{
    cts_sensitivity_check, dis_sensitivity_check, entry_lipschitz_check, radial_probe_pair, ratio, BoundCheck,
    DEFAULT_DISCRETE_SLACK, DISCRETE_PASS_FRACTION,
};
use dp_ntk::regression::{
    fit, fit_private_with_kernel, inverse_gap_bound, kx_gap_bound, regression_utility_bound, PrivateFitConfig,
    Predictor, UtilityInputs,
};
use dp_ntk::{Dataset, RngStream};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{HarnessError, Result};
use crate::tradeoff::fmt_g6;

/// Multiple of the utility bounds allowed per instance.
pub const UTILITY_FACTOR: f64 = 10.0;
/// Share of instances that must stay within [`UTILITY_FACTOR`].
pub const UTILITY_PASS_FRACTION: f64 = 0.95;

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyConfig {
    pub n: usize,
    pub d: usize,
    pub sigma: f64,
    pub beta: f64,
    pub trials: usize,
    pub m: usize,
    /// Utility instances and their parameters.
    pub utility_instances: usize,
    pub utility_k: u64,
    pub utility_beta: f64,
    pub utility_lambda: f64,
    pub utility_queries: usize,
    pub utility_dp: DpParams,
    /// Multiplies every theoretical value; values below 1 act as a negative
    /// control.
    pub bound_scale: f64,
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            n: 5,
            d: 4,
            sigma: 1.0,
            beta: 0.1,
            trials: 1000,
            m: 10_000,
            utility_instances: 200,
            utility_k: 10_000,
            utility_beta: 1e-4,
            utility_lambda: 1.0,
            utility_queries: 10,
            utility_dp: DpParams::new(1.0, 1e-3).expect("valid default budget"),
            bound_scale: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyReport {
    pub rows: Vec<BoundCheck>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn row(&self, name: &str) -> Option<&BoundCheck> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "bound,theoretical,empirical,ratio,pass")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.name,
                fmt_g6(r.theoretical),
                fmt_g6(r.empirical),
                fmt_g6(r.ratio),
                r.passed
            )?;
        }
        w.flush()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
            .map_err(|e| HarnessError::io(path, e))
    }
}

fn unit_vector(d: usize, gen: &mut impl Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| gen.sample(StandardNormal)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

/// Points drawn uniformly from the unit ball, with random ±1 labels.
pub fn ball_dataset(n: usize, d: usize, outputs: usize, rng: &RngStream) -> Result<Dataset> {
    let mut gen = rng.rng();
    let mut x = DMatrix::zeros(n, d);
    for i in 0..n {
        let dir = unit_vector(d, &mut gen);
        let r = gen.random::<f64>().powf(1.0 / d as f64);
        for j in 0..d {
            x[(i, j)] = r * dir[j];
        }
    }
    let y = DMatrix::from_fn(n, outputs, |_, _| if gen.random::<bool>() { 1.0 } else { -1.0 });
    Ok(Dataset::new(x, y, 1.0)?)
}

fn quantile(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let idx = ((q * values.len() as f64).ceil() as usize).clamp(1, values.len()) - 1;
    values[idx]
}

/// Per-instance ratios of measured inverse gap and prediction gap to their
/// bounds.
pub struct UtilitySample {
    pub inverse_ratio: f64,
    pub prediction_ratio: f64,
}

/// One seeded utility instance: unit-ball data, a private fit with fixed `k`
/// and `queries` unit-sphere queries.
pub fn utility_instance(cfg: &VerifyConfig, rng: &RngStream) -> Result<UtilitySample> {
    let data = ball_dataset(cfg.n, cfg.d, 1, &rng.substream("data"))?;
    let w = sample_weights(cfg.m, cfg.d, cfg.sigma, &rng.substream("weights"))?;
    let kernel = discrete_kernel(&data, &w)?;
    let plain = fit(&data, &w, cfg.utility_lambda)?;
    let fit_cfg = PrivateFitConfig::new(
        cfg.utility_lambda,
        cfg.utility_k,
        cfg.utility_dp,
        cfg.utility_dp,
        cfg.utility_beta,
    );
    let private = fit_private_with_kernel(&data, &kernel, &w, &fit_cfg, &rng.substream("private"))?;

    let rho = rho_bound(cfg.n, cfg.utility_k, fit_cfg.conditions.gamma, fit_cfg.conditions.c_rho);
    let u = UtilityInputs::new(
        kernel.eta_min(),
        kernel.eta_max(),
        cfg.utility_lambda,
        rho,
        private.feature_noise_width(),
        data.bound_b(),
        cfg.d,
        cfg.sigma,
    );

    let eye = DMatrix::<f64>::identity(cfg.n, cfg.n);
    let inv = spd_solve(&kernel.matrix().shifted(cfg.utility_lambda)?, &eye)?;
    let inv_priv = spd_solve(&private.private_kernel().shifted(cfg.utility_lambda)?, &eye)?;
    let inv_gap = sym_eigen(&SymMatrix::new(inv - inv_priv)?)?
        .eigenvalues
        .iter()
        .fold(0.0_f64, |a, v| a.max(v.abs()));

    let mut gen = rng.substream("queries").rng();
    let mut worst: f64 = 0.0;
    for _ in 0..cfg.utility_queries {
        let q = unit_vector(cfg.d, &mut gen);
        let gap = (plain.predict(&q)? - private.predict(&q)?).amax();
        worst = worst.max(gap);
    }
    Ok(UtilitySample {
        inverse_ratio: ratio(inv_gap, inverse_gap_bound(&u)),
        prediction_ratio: ratio(worst, regression_utility_bound(&u)),
    })
}

pub fn verify_bounds(cfg: &VerifyConfig) -> Result<VerifyReport> {
    if cfg.trials == 0 || cfg.n < 2 || cfg.d == 0 || cfg.m == 0 {
        return Err(HarnessError::Usage("verify needs trials >= 1, n >= 2, d >= 1, m >= 1".into()));
    }
    if !(cfg.bound_scale.is_finite() && cfg.bound_scale > 0.0) {
        return Err(HarnessError::Usage("bound-scale must be positive".into()));
    }
    let scale = cfg.bound_scale;
    let root = RngStream::new(cfg.seed);
    let mut rows = Vec::new();

    // sensitivity of the continuous kernel, entrywise and in Frobenius norm
    let data = ball_dataset(cfg.n, cfg.d, 1, &root.substream("data"))?;
    let cts = cts_sensitivity_check(&data, cfg.sigma, cfg.beta, cfg.trials, &root.substream("cts"))?;
    let b3 = data.bound_b().powi(3);
    let off_bound = 2.0 * cfg.sigma.powi(2) * b3 * cfg.beta;
    let diag_bound = 4.0 * cfg.sigma.powi(2) * b3 * cfg.beta;
    rows.push(BoundCheck::upper(
        "entry_lipschitz_offdiag",
        off_bound * scale,
        cts.max_offdiag_ratio * off_bound,
    ));
    rows.push(BoundCheck::upper(
        "entry_lipschitz_diag",
        diag_bound * scale,
        cts.max_diag_ratio * diag_bound,
    ));
    if cfg.beta > 0.0 {
        let probe = radial_probe_pair(cfg.n, cfg.d, data.bound_b(), cfg.beta)?;
        let r = entry_lipschitz_check(&probe, cfg.sigma)?;
        rows.push(BoundCheck::upper(
            "entry_lipschitz_probe",
            diag_bound * scale,
            r.diag_ratio * diag_bound,
        ));
    }
    rows.push(BoundCheck::upper("cts_frobenius", cts.bound * scale, cts.max_gap));

    // discrete kernel: Frobenius sensitivity with slack, and the PSD sandwich
    let w = sample_weights(cfg.m, cfg.d, cfg.sigma, &root.substream("weights"))?;
    let slack = DEFAULT_DISCRETE_SLACK * scale;
    let dis = dis_sensitivity_check(&data, &w, cfg.beta, cfg.trials, &root.substream("dis"), slack)?;
    rows.push(BoundCheck::new(
        "dis_frobenius",
        slack * dis.psi,
        dis.max_gap,
        dis.within_fraction >= DISCRETE_PASS_FRACTION,
    ));
    if let Some(r) = dis.sandwich_max_ratio {
        let unit = ratio(dis.psi, dis.eta_min);
        rows.push(BoundCheck::upper("psd_sandwich", unit * scale, r * unit));
    }

    // feature noise support and the kernel-vector gap it induces
    let dp = cfg.utility_dp;
    let noise = feature_noise(cfg.d, cfg.beta, dp)?;
    let mut max_noise: f64 = 0.0;
    let mut max_kx_ratio: f64 = 0.0;
    for t in 0..cfg.trials {
        let stream = root.substream(format!("tlap/{t}"));
        let noisy = privatize_dataset(&data, cfg.beta, dp, &stream)?;
        max_noise = max_noise.max((noisy.features() - data.features()).amax());
        let q = unit_vector(cfg.d, &mut stream.substream("query").rng());
        let kq = |x: &Dataset| -> Vec<f64> {
            x.rows()
                .iter()
                .map(|r| {
                    let g: f64 = r.iter().zip(&q).map(|(a, b)| a * b).sum();
                    cfg.sigma * cfg.sigma * g * g
                })
                .collect()
        };
        let gap = kq(&data)
            .iter()
            .zip(kq(&noisy))
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let u = UtilityInputs::new(0.0, 0.0, 1.0, 0.0, noise.width(), noisy.bound_b(), cfg.d, cfg.sigma);
        max_kx_ratio = max_kx_ratio.max(ratio(gap, kx_gap_bound(cfg.n, &u)));
    }
    rows.push(BoundCheck::upper("tlap_support", noise.width() * scale, max_noise));
    rows.push(BoundCheck::upper("kx_gap", scale, max_kx_ratio));

    let unit_lap = TruncLapParams::new(1.0, 1.0, 0.5)?;
    let mut gen = root.substream("tlap/unit").rng();
    let unit_max = (0..cfg.trials * 100)
        .map(|_| unit_lap.sample(&mut gen).abs())
        .fold(0.0_f64, f64::max);
    rows.push(BoundCheck::upper("tlap_unit_support", unit_lap.width() * scale, unit_max));

    // GSM output stays PSD
    let h = continuous_kernel(&data, cfg.sigma)?;
    let mut worst_neg: f64 = 0.0;
    for (i, k) in [1usize, 5, 100].into_iter().enumerate() {
        let out = gaussian_sampling_mechanism(h.matrix(), k, &root.substream(format!("gsm/{i}")))?;
        let (lo, _) = eigen_extremes(&out)?;
        worst_neg = worst_neg.max(ratio(-lo, out.frobenius_norm()).max(0.0));
    }
    rows.push(BoundCheck::upper("gsm_psd", 1e-10 * scale, worst_neg));

    // budget conditions at the verification point are reported, not gated
    let kd = discrete_kernel(&data, &w)?;
    let sens = dp_ntk::dp::SensitivityInputs {
        n: cfg.n,
        sigma: cfg.sigma,
        bound_b: data.bound_b(),
        beta: cfg.beta,
    };
    let report = check_dp_conditions(dp, cfg.utility_k, &sens, kd.eta_min(), &ConditionConfig::default());
    log::info!("conditions at the verification point: {report}");

    // utility bounds over seeded instances
    if cfg.utility_instances > 0 {
        let mut inv = Vec::with_capacity(cfg.utility_instances);
        let mut pred = Vec::with_capacity(cfg.utility_instances);
        for t in 0..cfg.utility_instances {
            let s = utility_instance(cfg, &root.substream(format!("utility/{t}")))?;
            inv.push(s.inverse_ratio);
            pred.push(s.prediction_ratio);
        }
        let limit = UTILITY_FACTOR * scale;
        for (name, mut values) in [("inverse_gap", inv), ("regression_utility", pred)] {
            let within = values.iter().filter(|&&r| r <= limit).count() as f64 / values.len() as f64;
            let q = quantile(&mut values, UTILITY_PASS_FRACTION);
            rows.push(BoundCheck::new(name, limit, q, within >= UTILITY_PASS_FRACTION));
        }
    }

    Ok(VerifyReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> VerifyConfig {
        VerifyConfig {
            trials: 50,
            m: 2000,
            utility_instances: 20,
            ..VerifyConfig::default()
        }
    }

    #[test]
    fn small_default_passes() {
        let report = verify_bounds(&small()).unwrap();
        for r in &report.rows {
            assert!(r.passed, "{r:?}");
        }
        assert!(report.row("psd_sandwich").is_some());
    }

    #[test]
    fn zero_beta_gives_zero_sensitivity() {
        let cfg = VerifyConfig { beta: 0.0, ..small() };
        let report = verify_bounds(&cfg).unwrap();
        for name in ["entry_lipschitz_offdiag", "entry_lipschitz_diag", "cts_frobenius", "dis_frobenius"] {
            let r = report.row(name).unwrap();
            assert!(r.passed && r.empirical == 0.0, "{r:?}");
        }
    }

    #[test]
    fn shrunk_bounds_fail() {
        let cfg = VerifyConfig {
            bound_scale: 1e-3,
            ..small()
        };
        let report = verify_bounds(&cfg).unwrap();
        for name in ["entry_lipschitz_diag", "cts_frobenius", "dis_frobenius", "tlap_support"] {
            assert!(!report.row(name).unwrap().passed, "{name}");
        }
    }

    #[test]
    fn quantile_picks_order_statistic() {
        let mut v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(quantile(&mut v, 0.95), 95.0);
        assert_eq!(quantile(&mut v, 1.0), 100.0);
    }
}
