//! Privacy-utility sweep over an ε grid.

use std::io::Write;
use std::path::Path;

use dp_ntk::dp::{
    check_dp_conditions, compose, feature_noise, max_k, rho_bound, DpParams, GsmSampler,
    SensitivityInputs, DEFAULT_K_CAP,
};
use dp_ntk::kernel::{discrete_kernel, sample_weights};
use dp_ntk::regression::{
    argmax, fit, fit_private_with_kernel, regression_utility_bound, PrivateFitConfig, Predictor, UtilityInputs,
};
use dp_ntk::{Dataset, KernelMatrix, RngStream, WeightMatrix};
use log::{info, warn};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, KPolicy};
use crate::data::{classes_of, generate_synthetic, load_features_csv, split};
use crate::error::{HarnessError, Result};

pub const CSV_HEADER: &str =
    "epsilon,k,feasible,acc_train,acc_test,acc_train_priv,acc_test_priv,gap_median,gap_max,utility_bound";

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub epsilon: f64,
    pub k: u64,
    pub feasible: bool,
    pub acc_train: f64,
    pub acc_test: f64,
    /// `NaN` on infeasible rows, as are the remaining fields.
    pub acc_train_priv: f64,
    pub acc_test_priv: f64,
    pub gap_median: f64,
    pub gap_max: f64,
    pub utility_bound: f64,
    /// `compose(dp_x, dp_alpha)` for this row.
    pub budget: DpParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
}

/// `%g`-style rendering with six significant digits; `nan` for missing values.
pub fn fmt_g6(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

impl ResultsTable {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.rows {
            let fields = [
                fmt_g6(r.epsilon),
                r.k.to_string(),
                r.feasible.to_string(),
                fmt_g6(r.acc_train),
                fmt_g6(r.acc_test),
                fmt_g6(r.acc_train_priv),
                fmt_g6(r.acc_test_priv),
                fmt_g6(r.gap_median),
                fmt_g6(r.gap_max),
                fmt_g6(r.utility_bound),
            ];
            writeln!(w, "{}", fields.join(","))?;
        }
        w.flush()
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
            .map_err(|e| HarnessError::io(path, e))
    }

    pub fn any_infeasible(&self) -> bool {
        self.rows.iter().any(|r| !r.feasible)
    }
}

/// Predicted class: argmax of the outputs, or 0 for single-output models.
pub fn predicted_class<P: Predictor + ?Sized>(model: &P, x: &[f64]) -> Result<usize> {
    let out = model.predict(x)?;
    Ok(if out.len() < 2 { 0 } else { argmax(&out) })
}

pub fn accuracy<P: Predictor + ?Sized>(model: &P, data: &Dataset) -> Result<f64> {
    let truth = classes_of(data);
    let mut hits = 0usize;
    for (i, &c) in truth.iter().enumerate() {
        if predicted_class(model, &data.row(i))? == c {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.n() as f64)
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Loads `cfg.input` or generates synthetic data from substream `data`.
pub fn load_or_generate(cfg: &ExperimentConfig, root: &RngStream) -> Result<Dataset> {
    match &cfg.input {
        Some(path) => load_features_csv(path, cfg.bound_b, cfg.normalize),
        None => generate_synthetic(cfg.n, cfg.d, cfg.n_cls, cfg.separation, cfg.spread, &root.substream("data")),
    }
}

/// Everything shared by the rows of one sweep.
pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
    pub weights: WeightMatrix,
    pub kernel: KernelMatrix,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let root = RngStream::new(cfg.seed);
    let data = load_or_generate(cfg, &root)?;
    let (train, test) = split(&data, cfg.train_fraction, &root.substream("split"))?;
    let weights = sample_weights(cfg.m, train.dim(), cfg.sigma, &root.substream("weights"))?;
    let kernel = discrete_kernel(&train, &weights)?;
    Ok(Prepared {
        train,
        test,
        weights,
        kernel,
    })
}

/// `k` for one grid point; `None` when the policy finds no admissible value.
pub fn choose_k(cfg: &ExperimentConfig, dp_alpha: DpParams, s: &SensitivityInputs, eta_min: f64) -> Option<u64> {
    match cfg.k_policy {
        KPolicy::Fixed(k) => Some(k),
        KPolicy::MaxK => match max_k(dp_alpha.epsilon(), dp_alpha.delta(), s, eta_min, DEFAULT_K_CAP) {
            0 => None,
            k => Some(k),
        },
    }
}

pub fn run_tradeoff(cfg: &ExperimentConfig) -> Result<ResultsTable> {
    let prep = prepare(cfg)?;
    run_prepared(cfg, &prep)
}

pub fn run_prepared(cfg: &ExperimentConfig, prep: &Prepared) -> Result<ResultsTable> {
    let root = RngStream::new(cfg.seed);
    let plain = fit(&prep.train, &prep.weights, cfg.lambda)?;
    let acc_train = accuracy(&plain, &prep.train)?;
    let acc_test = accuracy(&plain, &prep.test)?;
    let plain_test: Vec<_> = (0..prep.test.n())
        .map(|i| plain.predict(&prep.test.row(i)))
        .collect::<std::result::Result<_, _>>()?;
    let eta_min = prep.kernel.eta_min();
    let eta_max = prep.kernel.eta_max();
    info!(
        "train n = {}, test n = {}, η_min = {eta_min:.6e}, η_max = {eta_max:.6e}, non-private acc {acc_train:.4}/{acc_test:.4}",
        prep.train.n(),
        prep.test.n()
    );
    let sens = SensitivityInputs {
        n: prep.train.n(),
        sigma: cfg.sigma,
        bound_b: prep.train.bound_b(),
        beta: cfg.beta,
    };
    let conditions = cfg.conditions();

    let rows: Vec<ResultRow> = cfg
        .epsilon_grid
        .par_iter()
        .enumerate()
        .map(|(idx, &epsilon)| -> Result<ResultRow> {
            let (dp_x, dp_alpha) = cfg.split_budget(epsilon)?;
            let budget = compose(&[dp_x, dp_alpha])?;
            let mut row = ResultRow {
                epsilon,
                k: 0,
                feasible: false,
                acc_train,
                acc_test,
                acc_train_priv: f64::NAN,
                acc_test_priv: f64::NAN,
                gap_median: f64::NAN,
                gap_max: f64::NAN,
                utility_bound: f64::NAN,
                budget,
            };
            let Some(k) = choose_k(cfg, dp_alpha, &sens, eta_min) else {
                info!("ε = {epsilon}: no admissible k, row skipped");
                return Ok(row);
            };
            row.k = k;
            let report = check_dp_conditions(dp_alpha, k, &sens, eta_min, &conditions);
            if !report.feasible() {
                info!("ε = {epsilon}: infeasible ({report}), row skipped");
                return Ok(row);
            }
            info!("ε = {epsilon}: budget {dp_x} + {dp_alpha} = {budget}; {report}");
            let fit_cfg = PrivateFitConfig {
                lambda: cfg.lambda,
                k,
                dp_alpha,
                dp_x,
                beta: cfg.beta,
                enforce: true,
                conditions,
                sampler: GsmSampler::Auto,
            };
            let model = fit_private_with_kernel(
                &prep.train,
                &prep.kernel,
                &prep.weights,
                &fit_cfg,
                &root.substream(format!("row/{idx}")),
            )?;
            row.feasible = true;
            row.acc_train_priv = accuracy(&model, &prep.train)?;
            row.acc_test_priv = accuracy(&model, &prep.test)?;
            let mut gaps = Vec::with_capacity(prep.test.n());
            for (i, f) in plain_test.iter().enumerate() {
                let g = model.predict(&prep.test.row(i))?;
                gaps.push((f - g).amax());
            }
            gaps.sort_by(f64::total_cmp);
            row.gap_median = median(&gaps);
            row.gap_max = *gaps.last().expect("non-empty test set");
            let b_l = feature_noise(prep.train.dim(), cfg.beta, dp_x)?.width();
            let u = UtilityInputs::new(
                eta_min,
                eta_max,
                cfg.lambda,
                rho_bound(prep.train.n(), k, conditions.gamma, conditions.c_rho),
                b_l,
                prep.train.bound_b(),
                prep.train.dim(),
                cfg.sigma,
            );
            row.utility_bound = regression_utility_bound(&u);
            Ok(row)
        })
        .collect::<Result<_>>()?;

    if rows.iter().all(|r| !r.feasible) {
        warn!("every grid point is infeasible; only non-private accuracies were computed");
    }
    Ok(ResultsTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g6_formatting() {
        assert_eq!(fmt_g6(0.0), "0");
        assert_eq!(fmt_g6(1.0), "1");
        assert_eq!(fmt_g6(0.95), "0.95");
        assert_eq!(fmt_g6(1234567.0), "1.23457e+06");
        assert_eq!(fmt_g6(123456.0), "123456");
        assert_eq!(fmt_g6(0.000123456789), "0.000123457");
        assert_eq!(fmt_g6(0.0000123456789), "1.23457e-05");
        assert_eq!(fmt_g6(-2.5), "-2.5");
        assert_eq!(fmt_g6(1e6), "1e+06");
        assert_eq!(fmt_g6(f64::NAN), "nan");
        assert_eq!(fmt_g6(999999.5), "1e+06");
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[1.0, 2.0, 3.0]), 2.0);
        assert_eq!(median(&[1.0, 2.0, 3.0, 5.0]), 2.5);
    }
}
