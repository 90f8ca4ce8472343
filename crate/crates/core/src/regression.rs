//! Kernel ridge regression on the discrete NTK, private and non-private.
//!
//! Both predictors return `f(x) = (1/n) K(x, X)ᵀ α` with `α = (K + λI)⁻¹ Y`.
//! The private model replaces `K` by a Gaussian-sampling release `K̃` and
//! the training features by their truncated-Laplace release `X̃`; it keeps no
//! reference to the raw features, so every prediction is post-processing of
//! `(X̃, K̃)`.

use nalgebra::{DMatrix, DVector};

use crate::dp::budget::{
    check_dp_conditions, compose, ConditionConfig, ConditionReport, DpParams, SensitivityInputs,
};
use crate::dp::gsm::{gaussian_sampling_mechanism_with, GsmSampler};
use crate::dp::laplace::{feature_noise, privatize_dataset};
use crate::error::{NtkError, Result};
use crate::kernel::{Dataset, KernelKind, KernelMatrix, ProjectedData, WeightMatrix};
use crate::numerics::{spd_solve, SymMatrix};
use crate::rng::RngStream;

/// Anything that maps a query to `c` regression outputs.
pub trait Predictor {
    fn predict(&self, x: &[f64]) -> Result<DVector<f64>>;
    fn n_outputs(&self) -> usize;
}

/// Index of the largest output; ties go to the lowest index.
pub fn argmax(v: &DVector<f64>) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// Multi-class readout. Single-output models use [`predict_sign`].
pub fn predict_class<P: Predictor + ?Sized>(model: &P, x: &[f64]) -> Result<usize> {
    if model.n_outputs() < 2 {
        return Err(NtkError::invalid(
            "predict_class needs at least two output columns; use predict_sign for binary labels",
        ));
    }
    Ok(argmax(&model.predict(x)?))
}

/// Binary readout for ±1 labels: `+1` when `f(x) ≥ 0`, else `-1`.
pub fn predict_sign<P: Predictor + ?Sized>(model: &P, x: &[f64]) -> Result<f64> {
    if model.n_outputs() != 1 {
        return Err(NtkError::invalid("predict_sign needs exactly one output column"));
    }
    Ok(if model.predict(x)?[0] >= 0.0 { 1.0 } else { -1.0 })
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(NtkError::invalid(format!("lambda must be > 0, got {lambda}")));
    }
    Ok(())
}

fn solve_shifted(kernel: &SymMatrix, lambda: f64, labels: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    spd_solve(&kernel.shifted(lambda)?, labels)
}

fn scaled_readout(kvec: &DVector<f64>, alpha: &DMatrix<f64>) -> DVector<f64> {
    let n = alpha.nrows() as f64;
    (alpha.transpose() * kvec) / n
}

#[derive(Clone, Debug)]
pub struct NtkModel {
    data: Dataset,
    weights: WeightMatrix,
    lambda: f64,
    alpha: DMatrix<f64>,
    projected: ProjectedData,
}

impl NtkModel {
    /// Reassembles a model from stored parts without re-solving.
    pub fn from_parts(data: Dataset, weights: WeightMatrix, lambda: f64, alpha: DMatrix<f64>) -> Result<Self> {
        check_lambda(lambda)?;
        if alpha.shape() != data.labels().shape() {
            return Err(NtkError::invalid("alpha must have the shape of the labels"));
        }
        let projected = ProjectedData::new(&data, &weights)?;
        Ok(Self {
            data,
            weights,
            lambda,
            alpha,
            projected,
        })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn weights(&self) -> &WeightMatrix {
        &self.weights
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn alpha(&self) -> &DMatrix<f64> {
        &self.alpha
    }
}

impl Predictor for NtkModel {
    fn predict(&self, x: &[f64]) -> Result<DVector<f64>> {
        Ok(scaled_readout(&self.projected.kernel_vector(x)?, &self.alpha))
    }

    fn n_outputs(&self) -> usize {
        self.alpha.ncols()
    }
}

/// `α = (H^dis + λI)⁻¹ Y`.
pub fn fit(data: &Dataset, w: &WeightMatrix, lambda: f64) -> Result<NtkModel> {
    check_lambda(lambda)?;
    let projected = ProjectedData::new(data, w)?;
    let kernel = projected.kernel_matrix()?;
    let alpha = solve_shifted(&kernel, lambda, data.labels())?;
    Ok(NtkModel {
        data: data.clone(),
        weights: w.clone(),
        lambda,
        alpha,
        projected,
    })
}

pub fn predict(model: &NtkModel, x: &[f64]) -> Result<DVector<f64>> {
    model.predict(x)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrivateFitConfig {
    pub lambda: f64,
    /// Number of Gaussian samples behind `K̃`.
    pub k: u64,
    pub dp_alpha: DpParams,
    pub dp_x: DpParams,
    pub beta: f64,
    /// Refuse to run when the kernel-stage conditions fail.
    pub enforce: bool,
    pub conditions: ConditionConfig,
    pub sampler: GsmSampler,
}

impl PrivateFitConfig {
    pub fn new(lambda: f64, k: u64, dp_alpha: DpParams, dp_x: DpParams, beta: f64) -> Self {
        Self {
            lambda,
            k,
            dp_alpha,
            dp_x,
            beta,
            enforce: false,
            conditions: ConditionConfig::default(),
            sampler: GsmSampler::Auto,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PrivateNtkModel {
    private_features: Dataset,
    private_kernel: SymMatrix,
    weights: WeightMatrix,
    lambda: f64,
    private_alpha: DMatrix<f64>,
    dp_x: DpParams,
    dp_alpha: DpParams,
    budget: DpParams,
    feature_noise_width: f64,
    condition_report: ConditionReport,
    projected: ProjectedData,
}

impl PrivateNtkModel {
    /// Rebuilds a model from its released parts `(X̃, K̃)` plus public
    /// configuration, re-solving for `α̃`. No randomness is consumed.
    #[allow(clippy::too_many_arguments)]
    pub fn from_release(
        private_features: Dataset,
        private_kernel: SymMatrix,
        weights: WeightMatrix,
        lambda: f64,
        dp_x: DpParams,
        dp_alpha: DpParams,
        feature_noise_width: f64,
        condition_report: ConditionReport,
    ) -> Result<Self> {
        check_lambda(lambda)?;
        if private_kernel.order() != private_features.n() {
            return Err(NtkError::DimensionMismatch {
                expected: private_features.n(),
                found: private_kernel.order(),
            });
        }
        let private_alpha = solve_shifted(&private_kernel, lambda, private_features.labels())?;
        let projected = ProjectedData::new(&private_features, &weights)?;
        Ok(Self {
            budget: compose(&[dp_x, dp_alpha])?,
            private_features,
            private_kernel,
            weights,
            lambda,
            private_alpha,
            dp_x,
            dp_alpha,
            feature_noise_width,
            condition_report,
            projected,
        })
    }

    pub fn private_features(&self) -> &Dataset {
        &self.private_features
    }

    pub fn private_kernel(&self) -> &SymMatrix {
        &self.private_kernel
    }

    pub fn weights(&self) -> &WeightMatrix {
        &self.weights
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn private_alpha(&self) -> &DMatrix<f64> {
        &self.private_alpha
    }

    /// `(ε_X + ε_α, δ_X + δ_α)`.
    pub fn budget(&self) -> DpParams {
        self.budget
    }

    pub fn dp_x(&self) -> DpParams {
        self.dp_x
    }

    pub fn dp_alpha(&self) -> DpParams {
        self.dp_alpha
    }

    /// `B_L` of the feature noise.
    pub fn feature_noise_width(&self) -> f64 {
        self.feature_noise_width
    }

    pub fn condition_report(&self) -> &ConditionReport {
        &self.condition_report
    }

    pub fn k(&self) -> u64 {
        self.condition_report.k
    }
}

impl Predictor for PrivateNtkModel {
    fn predict(&self, x: &[f64]) -> Result<DVector<f64>> {
        Ok(scaled_readout(&self.projected.kernel_vector(x)?, &self.private_alpha))
    }

    fn n_outputs(&self) -> usize {
        self.private_alpha.ncols()
    }
}

/// Private fit from raw data; computes `H^dis` first.
pub fn fit_private(
    data: &Dataset,
    w: &WeightMatrix,
    cfg: &PrivateFitConfig,
    rng: &RngStream,
) -> Result<PrivateNtkModel> {
    let projected = ProjectedData::new(data, w)?;
    let kernel = KernelMatrix::new(projected.kernel_matrix()?, KernelKind::Discrete);
    fit_private_with_kernel(data, &kernel, w, cfg, rng)
}

/// Private fit reusing an already computed `H^dis` of `data`.
///
/// Draws `K̃` from substream `gsm` and `X̃` from substream `tlap`.
pub fn fit_private_with_kernel(
    data: &Dataset,
    kernel: &KernelMatrix,
    w: &WeightMatrix,
    cfg: &PrivateFitConfig,
    rng: &RngStream,
) -> Result<PrivateNtkModel> {
    check_lambda(cfg.lambda)?;
    if kernel.order() != data.n() {
        return Err(NtkError::DimensionMismatch {
            expected: data.n(),
            found: kernel.order(),
        });
    }
    let sens = SensitivityInputs {
        n: data.n(),
        sigma: w.sigma(),
        bound_b: data.bound_b(),
        beta: cfg.beta,
    };
    let report = check_dp_conditions(cfg.dp_alpha, cfg.k, &sens, kernel.eta_min(), &cfg.conditions);
    if cfg.enforce && !report.feasible() {
        return Err(NtkError::BudgetInfeasible(Box::new(report)));
    }
    if cfg.k == 0 {
        return Err(NtkError::invalid("private fit needs k >= 1"));
    }
    let k = usize::try_from(cfg.k).map_err(|_| NtkError::invalid("k does not fit in usize"))?;
    let private_kernel = gaussian_sampling_mechanism_with(kernel.matrix(), k, &rng.substream("gsm"), cfg.sampler)?;
    let noise = feature_noise(data.dim(), cfg.beta, cfg.dp_x)?;
    let private_features = privatize_dataset(data, cfg.beta, cfg.dp_x, &rng.substream("tlap"))?;
    PrivateNtkModel::from_release(
        private_features,
        private_kernel,
        w.clone(),
        cfg.lambda,
        cfg.dp_x,
        cfg.dp_alpha,
        noise.width(),
        report,
    )
}

pub fn predict_private(model: &PrivateNtkModel, x: &[f64]) -> Result<DVector<f64>> {
    model.predict(x)
}

/// Inputs to the closed-form utility bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UtilityInputs {
    pub eta_min: f64,
    pub eta_max: f64,
    pub lambda: f64,
    pub rho: f64,
    /// `ω = 6 d σ² B⁴`.
    pub omega: f64,
    /// `B_L` of the feature noise.
    pub b_l: f64,
    pub bound_b: f64,
    pub dim_d: usize,
    pub sigma: f64,
}

impl UtilityInputs {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        eta_min: f64,
        eta_max: f64,
        lambda: f64,
        rho: f64,
        b_l: f64,
        bound_b: f64,
        dim_d: usize,
        sigma: f64,
    ) -> Self {
        Self {
            eta_min,
            eta_max,
            lambda,
            rho,
            omega: 6.0 * dim_d as f64 * sigma.powi(2) * bound_b.powi(4),
            b_l,
            bound_b,
            dim_d,
            sigma,
        }
    }
}

/// `ρ · η_max / (η_min + λ)²`, bounding `‖(K+λI)⁻¹ - (K̃+λI)⁻¹‖`.
pub fn inverse_gap_bound(u: &UtilityInputs) -> f64 {
    u.rho * u.eta_max / (u.eta_min + u.lambda).powi(2)
}

/// `2 √n σ² B³ √d B_L`, bounding `‖K(x, X̃) - K(x, X)‖₂`.
pub fn kx_gap_bound(n: usize, u: &UtilityInputs) -> f64 {
    2.0 * (n as f64).sqrt() * u.sigma.powi(2) * u.bound_b.powi(3) * (u.dim_d as f64).sqrt() * u.b_l
}

/// `B³ √d B_L / (η_min + λ) + ρ η_max ω / (η_min + λ)²`, bounding
/// `|f_K(x) - f_K̃(x)|`. Hidden constants are taken as one.
pub fn regression_utility_bound(u: &UtilityInputs) -> f64 {
    let shift = u.eta_min + u.lambda;
    u.bound_b.powi(3) * (u.dim_d as f64).sqrt() * u.b_l / shift + u.rho * u.eta_max * u.omega / shift.powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::budget::{rho_bound, MRule};
    use crate::kernel::{discrete_kernel, sample_weights};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn ball_data(n: usize, d: usize, c: usize, stream: &RngStream) -> Dataset {
        let mut gen = stream.rng();
        let mut x = DMatrix::from_fn(n, d, |_, _| gen.sample::<f64, _>(StandardNormal));
        for i in 0..n {
            let norm = x.row(i).norm();
            let r: f64 = 0.3 + 0.7 * gen.random::<f64>();
            x.row_mut(i).scale_mut(r / norm);
        }
        let y = DMatrix::from_fn(n, c, |_, _| if gen.random::<bool>() { 1.0 } else { -1.0 });
        Dataset::new(x, y, 1.0).unwrap()
    }

    fn unit_weight() -> WeightMatrix {
        WeightMatrix::from_parts(DMatrix::from_element(1, 1, 1.0), 1.0, RngStream::new(0)).unwrap()
    }

    #[test]
    fn scalar_fit_and_predict() {
        let data = Dataset::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            1.0,
        )
        .unwrap();
        let model = fit(&data, &unit_weight(), 1.0).unwrap();
        assert!((model.alpha()[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((predict(&model, &[1.0]).unwrap()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_labels_give_zero_alpha() {
        let s = RngStream::new(1);
        let mut data = ball_data(4, 3, 2, &s);
        data = Dataset::new(data.features().clone(), DMatrix::zeros(4, 2), 1.0).unwrap();
        let w = sample_weights(16, 3, 1.0, &s.substream("w")).unwrap();
        let model = fit(&data, &w, 0.5).unwrap();
        assert!(model.alpha().iter().all(|&v| v == 0.0));
        assert!(predict(&model, &data.row(0)).unwrap().iter().all(|&v| v == 0.0));
        assert!(fit(&data, &w, 0.0).is_err());
    }

    #[test]
    fn fit_residual() {
        let s = RngStream::new(2);
        let data = ball_data(3, 4, 1, &s);
        let w = sample_weights(32, 4, 1.0, &s.substream("w")).unwrap();
        let model = fit(&data, &w, 0.7).unwrap();
        let k = discrete_kernel(&data, &w).unwrap();
        let shifted = k.matrix().shifted(0.7).unwrap();
        let resid = (shifted.as_matrix() * model.alpha() - data.labels()).norm();
        assert!(resid < 1e-10);
    }

    #[test]
    fn predict_matches_straight_line_oracle() {
        let s = RngStream::new(3);
        let data = ball_data(4, 3, 2, &s);
        let w = sample_weights(20, 3, 1.3, &s.substream("w")).unwrap();
        let lambda = 0.9;
        let model = fit(&data, &w, lambda).unwrap();
        let x = [0.2, -0.5, 0.1];

        // independent route: explicit kernel, explicit inverse, explicit sum
        let n = 4;
        let m = w.m();
        let k_fn = |a: &[f64], b: &[f64]| {
            let mut acc = 0.0;
            for r in 0..m {
                let wa: f64 = (0..3).map(|t| w.weights()[(r, t)] * a[t]).sum();
                let wb: f64 = (0..3).map(|t| w.weights()[(r, t)] * b[t]).sum();
                let ab: f64 = (0..3).map(|t| a[t] * b[t]).sum();
                acc += wa * wb * ab;
            }
            acc / m as f64
        };
        let rows = data.rows();
        let kmat = DMatrix::from_fn(n, n, |i, j| k_fn(&rows[i], &rows[j]) + if i == j { lambda } else { 0.0 });
        let inv = kmat.try_inverse().unwrap();
        let alpha = inv * data.labels();
        for c in 0..2 {
            let want: f64 = (0..n).map(|j| k_fn(&x, &rows[j]) * alpha[(j, c)]).sum::<f64>() / n as f64;
            let got = predict(&model, &x).unwrap()[c];
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        assert!(predict(&model, &[0.1, 0.2]).is_err());
    }

    #[test]
    fn class_readout() {
        struct Fixed(DVector<f64>);
        impl Predictor for Fixed {
            fn predict(&self, _: &[f64]) -> Result<DVector<f64>> {
                Ok(self.0.clone())
            }
            fn n_outputs(&self) -> usize {
                self.0.len()
            }
        }
        assert_eq!(predict_class(&Fixed(DVector::from_vec(vec![0.3, 0.3, 0.3])), &[]).unwrap(), 0);
        assert_eq!(predict_class(&Fixed(DVector::from_vec(vec![0.1, 0.7, 0.2])), &[]).unwrap(), 1);
        // permuting columns permutes the argmax
        assert_eq!(predict_class(&Fixed(DVector::from_vec(vec![0.7, 0.2, 0.1])), &[]).unwrap(), 0);
        assert!(predict_class(&Fixed(DVector::from_vec(vec![0.1])), &[]).is_err());
        assert_eq!(predict_sign(&Fixed(DVector::from_vec(vec![-0.1])), &[]).unwrap(), -1.0);
    }

    #[test]
    fn separable_toy_is_fit() {
        // two orthogonal clusters, one-hot labels
        let rows = [
            [1.0, 0.0, 0.0],
            [0.95, 0.1, 0.0],
            [0.9, 0.0, 0.1],
            [0.0, 1.0, 0.0],
            [0.1, 0.95, 0.0],
            [0.0, 0.9, 0.1],
        ];
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let x = DMatrix::from_row_slice(6, 3, &flat);
        let y = DMatrix::from_fn(6, 2, |i, c| if (i < 3) == (c == 0) { 1.0 } else { 0.0 });
        let data = Dataset::new(x, y, 1.0).unwrap();
        let w = sample_weights(256, 3, 1.0, &RngStream::new(4)).unwrap();
        let model = fit(&data, &w, 0.1).unwrap();
        for i in 0..6 {
            let want = if i < 3 { 0 } else { 1 };
            assert_eq!(predict_class(&model, &data.row(i)).unwrap(), want);
        }
    }

    fn private_cfg(k: u64, beta: f64) -> PrivateFitConfig {
        PrivateFitConfig::new(
            1.0,
            k,
            DpParams::new(0.5, 1e-3).unwrap(),
            DpParams::new(0.5, 1e-3).unwrap(),
            beta,
        )
    }

    #[test]
    fn private_zero_labels() {
        let s = RngStream::new(5);
        let base = ball_data(5, 3, 1, &s);
        let data = Dataset::new(base.features().clone(), DMatrix::zeros(5, 1), 1.0).unwrap();
        let w = sample_weights(32, 3, 1.0, &s.substream("w")).unwrap();
        let model = fit_private(&data, &w, &private_cfg(50, 0.01), &s.substream("p")).unwrap();
        assert!(model.private_alpha().iter().all(|&v| v == 0.0));
        assert!(predict_private(&model, &[0.1, 0.1, 0.1]).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn private_budget_composes_and_is_deterministic() {
        let s = RngStream::new(6);
        let data = ball_data(6, 3, 1, &s);
        let w = sample_weights(32, 3, 1.0, &s.substream("w")).unwrap();
        let mut cfg = private_cfg(100, 1e-3);
        cfg.dp_x = DpParams::new(0.3, 4e-4).unwrap();
        cfg.dp_alpha = DpParams::new(0.7, 6e-4).unwrap();
        let a = fit_private(&data, &w, &cfg, &s.substream("p")).unwrap();
        assert_eq!(a.budget(), compose(&[cfg.dp_x, cfg.dp_alpha]).unwrap());
        let b = fit_private(&data, &w, &cfg, &s.substream("p")).unwrap();
        let q = [0.3, -0.2, 0.4];
        assert_eq!(
            predict_private(&a, &q).unwrap()[0].to_bits(),
            predict_private(&b, &q).unwrap()[0].to_bits()
        );
    }

    #[test]
    fn replay_from_release_is_post_processing() {
        let s = RngStream::new(7);
        let data = ball_data(6, 3, 2, &s);
        let w = sample_weights(32, 3, 1.0, &s.substream("w")).unwrap();
        let cfg = private_cfg(200, 1e-3);
        let model = fit_private(&data, &w, &cfg, &s.substream("p")).unwrap();
        // fresh randomness elsewhere must not matter
        let _unrelated: f64 = s.substream("elsewhere").rng().random();
        let replay = PrivateNtkModel::from_release(
            model.private_features().clone(),
            model.private_kernel().clone(),
            w.clone(),
            cfg.lambda,
            cfg.dp_x,
            cfg.dp_alpha,
            model.feature_noise_width(),
            *model.condition_report(),
        )
        .unwrap();
        for t in 0..10 {
            let q: Vec<f64> = (0..3).map(|j| ((t * 3 + j) as f64 * 0.37).sin() * 0.5).collect();
            assert_eq!(
                predict_private(&model, &q).unwrap(),
                predict_private(&replay, &q).unwrap()
            );
        }
    }

    #[test]
    fn enforce_rejects_infeasible() {
        let s = RngStream::new(8);
        let data = ball_data(5, 3, 1, &s);
        let w = sample_weights(64, 3, 1.0, &s.substream("w")).unwrap();
        let mut cfg = private_cfg(1_000_000, 0.1);
        cfg.enforce = true;
        cfg.conditions.m_rule = MRule::Composed;
        match fit_private(&data, &w, &cfg, &s.substream("p")) {
            Err(NtkError::BudgetInfeasible(report)) => assert!(!report.feasible()),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn private_converges_with_k() {
        let s = RngStream::new(9);
        let data = ball_data(5, 3, 1, &s);
        let w = sample_weights(64, 3, 1.0, &s.substream("w")).unwrap();
        let plain = fit(&data, &w, 1.0).unwrap();
        let q = [0.4, 0.1, -0.3];
        let f = predict(&plain, &q).unwrap()[0];
        let median_gap = |k: u64| {
            let mut gaps: Vec<f64> = (0..20)
                .map(|seed| {
                    let m = fit_private(&data, &w, &private_cfg(k, 0.0), &RngStream::new(seed).substream(k.to_string()))
                        .unwrap();
                    (predict_private(&m, &q).unwrap()[0] - f).abs()
                })
                .collect();
            gaps.sort_by(f64::total_cmp);
            0.5 * (gaps[9] + gaps[10])
        };
        let g2 = median_gap(100);
        let g4 = median_gap(10_000);
        let g6 = median_gap(1_000_000);
        assert!(g2 > g4 && g4 > g6, "{g2} {g4} {g6}");
    }

    #[test]
    fn bound_formulas() {
        let u = UtilityInputs::new(1.0, 2.0, 1.0, 0.0, 0.0, 1.0, 1, 1.0);
        assert_eq!(inverse_gap_bound(&u), 0.0);
        assert_eq!(regression_utility_bound(&u), 0.0);
        assert_eq!(kx_gap_bound(4, &u), 0.0);

        let u = UtilityInputs::new(1.0, 2.0, 1.0, 0.1, 0.0, 1.0, 1, 1.0);
        assert_eq!(u.omega, 6.0);
        assert!((inverse_gap_bound(&u) - 0.05).abs() < 1e-15);
        assert!((regression_utility_bound(&u) - 0.3).abs() < 1e-15);

        let u = UtilityInputs::new(0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 4, 1.0);
        assert!((kx_gap_bound(4, &u) - 8.0).abs() < 1e-15);

        let mut prev = f64::INFINITY;
        for lambda in [0.1, 1.0, 10.0, 100.0] {
            let u = UtilityInputs::new(0.5, 3.0, lambda, 0.2, 0.1, 1.0, 4, 1.0);
            assert!(inverse_gap_bound(&u) < prev);
            prev = inverse_gap_bound(&u);
        }
    }

    #[test]
    fn kx_gap_holds_for_continuous_kernel() {
        let s = RngStream::new(10);
        let data = ball_data(6, 4, 1, &s);
        let dp = DpParams::new(1.0, 1e-3).unwrap();
        let beta = 0.05;
        let sigma = 1.5;
        let noise = feature_noise(4, beta, dp).unwrap();
        let cts = |q: &[f64], x: &Dataset| {
            DVector::from_iterator(
                x.n(),
                x.rows().iter().map(|r| sigma * sigma * crate::kernel::dot(q, r).powi(2)),
            )
        };
        for seed in 0..100 {
            let st = RngStream::new(seed);
            let noisy = privatize_dataset(&data, beta, dp, &st).unwrap();
            let mut gen = st.substream("q").rng();
            let mut q: Vec<f64> = (0..4).map(|_| gen.sample(StandardNormal)).collect();
            let qn = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            q.iter_mut().for_each(|v| *v /= qn);
            let gap = (cts(&q, &data) - cts(&q, &noisy)).norm();
            let u = UtilityInputs::new(0.0, 0.0, 1.0, 0.0, noise.width(), noisy.bound_b(), 4, sigma);
            assert!(gap <= kx_gap_bound(6, &u), "{gap}");
        }
    }

    #[test]
    fn rho_feeds_inverse_gap() {
        let rho = rho_bound(5, 10_000, 0.01, 1.0);
        let u = UtilityInputs::new(0.2, 2.0, 1.0, rho, 0.0, 1.0, 4, 1.0);
        assert!((inverse_gap_bound(&u) - rho * 2.0 / 1.44).abs() < 1e-15);
    }
}
