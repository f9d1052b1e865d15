//! Sparse probabilistic kernel classifier with a probit link.
//!
//! The model is `f(x) = probit(sum_i w_i k(x, x_i) + b)` with one basis
//! function per training sample. Training runs expectation-maximization
//! with truncated-Gaussian weight priors whose sign is tied to the basis
//! sample's label: the E-step replaces the probit likelihood with the
//! expectation of a truncated latent response, the M-step solves an
//! adaptively reweighted ridge system (weight `i` regularized by
//! `1 / w_i^2`), projects weights that violate the label-sign constraint to
//! zero and re-estimates the bias. Basis functions whose weight magnitude
//! falls below the prune threshold are removed and never revived, which is
//! what makes the trained models sparse.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::erf::erfc;
use crate::error::{Error, Result};
use crate::kernel::{gram_matrix, KernelMatrix, KernelSpec};

/// Decision values are clamped to this magnitude before the probit link so
/// probabilities never degenerate to exact 0/1. Labels are unaffected: the
/// clamp preserves sign.
pub const DECISION_CLAMP: f64 = 8.0;

const FRAC_1_SQRT_2PI: f64 = 0.3989422804014327;

/// Standard normal cumulative distribution function.
pub fn probit(x: f64) -> f64 {
    0.5 * erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal density.
pub(crate) fn normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// EM training knobs. The defaults are fixed for reproducibility:
/// weights start at `0.1 * y_i`, bias at 0, pruning at `|w_i| < 1e-3`,
/// convergence at relative weight change `< 1e-4`, at most 500 iterations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_iterations: usize,
    pub weight_prune_threshold: f64,
    pub convergence_tolerance: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_iterations: 500,
            weight_prune_threshold: 1e-3,
            convergence_tolerance: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::InvalidInput("max_iterations must be >= 1".into()));
        }
        if !(self.weight_prune_threshold > 0.0) || !(self.convergence_tolerance > 0.0) {
            return Err(Error::InvalidInput(
                "prune threshold and convergence tolerance must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Raw result of binary EM training on a precomputed kernel: the sparse
/// weight vector over the surviving basis functions plus bookkeeping.
#[derive(Debug, Clone)]
pub struct PcvmFit {
    pub weights: DVector<f64>,
    pub bias: f64,
    /// Indices into the training set of the surviving basis functions.
    pub retained_indices: Vec<usize>,
    pub iterations: usize,
    /// Retained basis count after every iteration (non-increasing).
    pub retained_history: Vec<usize>,
}

impl PcvmFit {
    pub fn basis_count(&self) -> usize {
        self.retained_indices.len()
    }

    /// Decision values for test points given the kernel block between the
    /// retained basis functions (rows) and the test points (columns).
    pub fn decision_values(&self, k_basis_test: &DMatrix<f64>) -> Result<DVector<f64>> {
        if k_basis_test.nrows() != self.basis_count() {
            return Err(Error::InvalidInput(format!(
                "kernel has {} rows but the model retains {} basis functions",
                k_basis_test.nrows(),
                self.basis_count()
            )));
        }
        let mut d = k_basis_test.transpose() * &self.weights;
        d.add_scalar_mut(self.bias);
        Ok(d)
    }
}

/// Maps the internal {-1, +1} coding to external class ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    pub negative: i64,
    pub positive: i64,
}

impl LabelMap {
    /// Smaller external label becomes -1, larger becomes +1.
    pub fn from_binary_labels(labels: &[i64]) -> Result<Self> {
        let mut set: Vec<i64> = labels.to_vec();
        set.sort_unstable();
        set.dedup();
        match set.as_slice() {
            [a, b] => Ok(LabelMap {
                negative: *a,
                positive: *b,
            }),
            [_] => Err(Error::InvalidInput("single-class input".into())),
            _ => Err(Error::InvalidInput(format!(
                "expected exactly two classes, got {}",
                set.len()
            ))),
        }
    }

    pub fn to_internal(&self, label: i64) -> Result<i64> {
        if label == self.negative {
            Ok(-1)
        } else if label == self.positive {
            Ok(1)
        } else {
            Err(Error::InvalidInput(format!(
                "label {label} is not in the mapped set {{{}, {}}}",
                self.negative, self.positive
            )))
        }
    }

    pub fn to_external(&self, internal: i64) -> i64 {
        if internal >= 0 {
            self.positive
        } else {
            self.negative
        }
    }
}

fn validate_training_inputs(k: &KernelMatrix, labels: &[i64]) -> Result<()> {
    let v = k.values();
    if !v.is_square() {
        return Err(Error::InvalidInput(format!(
            "training kernel must be square, got {} x {}",
            v.nrows(),
            v.ncols()
        )));
    }
    if v.nrows() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "kernel rows ({}) do not match label count ({})",
            v.nrows(),
            labels.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical(
            "kernel contains non-finite entries".into(),
        ));
    }
    if labels.iter().any(|&y| y != 1 && y != -1) {
        return Err(Error::InvalidInput(
            "training labels must be -1 or +1".into(),
        ));
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::InvalidInput("single-class input".into()));
    }
    Ok(())
}

/// Expected value of the latent response `h ~ N(z, 1)` truncated to the
/// half-line consistent with label `y`.
fn truncated_latent_mean(z: f64, y: f64) -> f64 {
    let zc = z.clamp(-DECISION_CLAMP, DECISION_CLAMP);
    zc + y * normal_pdf(zc) / probit(y * zc)
}

/// Trains a binary PCVM by EM on a precomputed square kernel with labels
/// in {-1, +1}. Rows of the kernel must align with the labels.
///
/// The returned model is the iterate with the lowest training error; ties
/// go to the later (sparser) iterate. The sparsity pressure of the
/// adaptive prior can prune past the point of usefulness on very small
/// problems, and the best iterate is what reproduces the training labels
/// at the accuracy the optimizer actually achieved.
pub fn pcvm_train(k_train: &KernelMatrix, labels: &[i64], cfg: &TrainConfig) -> Result<PcvmFit> {
    cfg.validate()?;
    validate_training_inputs(k_train, labels)?;
    let n = labels.len();
    let y_full: Vec<f64> = labels.iter().map(|&l| l as f64).collect();

    // Active basis set; starts as every training sample.
    let mut active: Vec<usize> = (0..n).collect();
    let mut design = k_train.values().clone(); // n x l, columns follow `active`
    let mut basis_y: Vec<f64> = y_full.clone();
    let mut weights = DVector::from_fn(n, |i, _| 0.1 * y_full[i]);
    let mut bias = 0.0;
    let mut iterations = 0;
    let mut retained_history = Vec::new();

    let mut best: Option<(usize, DVector<f64>, f64, Vec<usize>)> = None; // (errors, w, b, active)

    for it in 0..cfg.max_iterations {
        iterations = it + 1;
        // E-step: expected truncated latent responses.
        let mut z = &design * &weights;
        z.add_scalar_mut(bias);
        let h = DVector::from_fn(n, |i, _| truncated_latent_mean(z[i], y_full[i]));

        // M-step: adaptively reweighted ridge solve, w = M u with
        // (M K^T K M + I) u = M K^T (h - b 1).
        let l = active.len();
        let m_diag = weights.map(f64::abs);
        let mut g = design.clone();
        for j in 0..l {
            g.column_mut(j).scale_mut(m_diag[j]);
        }
        let mut a = g.transpose() * &g;
        for j in 0..l {
            a[(j, j)] += 1.0;
        }
        let residual_target = h.add_scalar(-bias);
        let rhs = g.transpose() * &residual_target;
        let chol = a
            .cholesky()
            .ok_or_else(|| Error::Numerical("EM normal system is not positive definite".into()))?;
        let u = chol.solve(&rhs);
        let mut new_weights = DVector::from_fn(l, |j, _| m_diag[j] * u[j]);
        // Label-sign constraint from the truncated prior.
        for j in 0..l {
            if new_weights[j] * basis_y[j] < 0.0 {
                new_weights[j] = 0.0;
            }
        }
        let new_bias = (&h - &design * &new_weights).sum() / n as f64;

        // Relative change over (weights, bias) before pruning.
        let mut change = (new_bias - bias) * (new_bias - bias);
        let mut scale = bias * bias;
        for j in 0..l {
            change += (new_weights[j] - weights[j]) * (new_weights[j] - weights[j]);
            scale += weights[j] * weights[j];
        }
        let rel_change = change.sqrt() / scale.sqrt().max(1e-12);

        // Prune basis functions whose weight fell below the threshold.
        let keep: Vec<usize> = (0..l)
            .filter(|&j| new_weights[j].abs() >= cfg.weight_prune_threshold)
            .collect();
        if keep.len() < l {
            active = keep.iter().map(|&j| active[j]).collect();
            basis_y = keep.iter().map(|&j| basis_y[j]).collect();
            let pruned_design = DMatrix::from_fn(n, keep.len(), |i, j| design[(i, keep[j])]);
            design = pruned_design;
            weights = DVector::from_fn(keep.len(), |j, _| new_weights[keep[j]]);
        } else {
            weights = new_weights;
        }
        bias = new_bias;
        retained_history.push(active.len());

        // Track the best iterate by training error (ties to the sparser,
        // later one).
        let mut z_now = &design * &weights;
        z_now.add_scalar_mut(bias);
        let errors = (0..n)
            .filter(|&i| (z_now[i] >= 0.0) != (y_full[i] > 0.0))
            .count();
        if best.as_ref().map_or(true, |(e, ..)| errors <= *e) {
            best = Some((errors, weights.clone(), bias, active.clone()));
        }

        if active.is_empty() || rel_change < cfg.convergence_tolerance {
            break;
        }
    }

    let (_, weights, bias, active) = best.expect("at least one EM iteration ran");
    Ok(PcvmFit {
        weights,
        bias,
        retained_indices: active,
        iterations,
        retained_history,
    })
}

/// Probabilistic prediction from a kernel block between the retained basis
/// functions (rows) and test points (columns). Returns internal {-1, +1}
/// labels and probit probabilities; the decision boundary is inclusive,
/// `decision >= 0` maps to +1.
pub fn pcvm_predict(fit: &PcvmFit, k_test: &KernelMatrix) -> Result<(Vec<i64>, Vec<f64>)> {
    let d = fit.decision_values(k_test.values())?;
    let labels = d.iter().map(|&v| if v >= 0.0 { 1 } else { -1 }).collect();
    let probs = d
        .iter()
        .map(|&v| probit(v.clamp(-DECISION_CLAMP, DECISION_CLAMP)))
        .collect();
    Ok((labels, probs))
}

/// A fully assembled binary model: sparse weights, the kernel spec, the
/// retained training samples, and the label mapping. This is the unit that
/// serializes to JSON.
#[derive(Debug, Clone)]
pub struct PcvmModel {
    pub weights: DVector<f64>,
    pub bias: f64,
    pub retained_indices: Vec<usize>,
    pub kernel: KernelSpec,
    /// Retained training samples, one row per basis function.
    pub basis_points: DMatrix<f64>,
    pub label_map: LabelMap,
}

impl PcvmModel {
    /// Attaches kernel spec, basis sample rows and label mapping to a fit.
    pub fn assemble(
        fit: &PcvmFit,
        kernel: KernelSpec,
        training_points: &DMatrix<f64>,
        label_map: LabelMap,
    ) -> Result<Self> {
        for &i in &fit.retained_indices {
            if i >= training_points.nrows() {
                return Err(Error::InvalidInput(format!(
                    "retained index {i} out of range for {} training rows",
                    training_points.nrows()
                )));
            }
        }
        let basis_points =
            DMatrix::from_fn(fit.retained_indices.len(), training_points.ncols(), |i, j| {
                training_points[(fit.retained_indices[i], j)]
            });
        Ok(PcvmModel {
            weights: fit.weights.clone(),
            bias: fit.bias,
            retained_indices: fit.retained_indices.clone(),
            kernel,
            basis_points,
            label_map,
        })
    }

    pub fn basis_count(&self) -> usize {
        self.retained_indices.len()
    }

    /// Kernelized prediction on raw feature rows: evaluates the kernel
    /// between the basis points and `x`, then thresholds.
    pub fn predict_features(&self, x: &DMatrix<f64>) -> Result<(Vec<i64>, Vec<f64>)> {
        let k = if self.basis_count() == 0 {
            DMatrix::zeros(0, x.nrows())
        } else {
            gram_matrix(&self.kernel, &self.basis_points, x)?
        };
        let mut d = k.transpose() * &self.weights;
        d.add_scalar_mut(self.bias);
        let labels = d
            .iter()
            .map(|&v| self.label_map.to_external(if v >= 0.0 { 1 } else { -1 }))
            .collect();
        let probs = d
            .iter()
            .map(|&v| probit(v.clamp(-DECISION_CLAMP, DECISION_CLAMP)))
            .collect();
        Ok((labels, probs))
    }

    pub fn to_json(&self) -> Result<String> {
        let dto = PcvmModelJson::from(self);
        serde_json::to_string_pretty(&dto)
            .map_err(|e| Error::Config(format!("model serialization failed: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let dto: PcvmModelJson = serde_json::from_str(text)
            .map_err(|e| Error::Parse(format!("model deserialization failed: {e}")))?;
        dto.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct PcvmModelJson {
    kernel: KernelSpec,
    weights: Vec<f64>,
    bias: f64,
    retained_indices: Vec<usize>,
    basis_points: Vec<Vec<f64>>,
    label_map: LabelMap,
}

impl From<&PcvmModel> for PcvmModelJson {
    fn from(m: &PcvmModel) -> Self {
        PcvmModelJson {
            kernel: m.kernel,
            weights: m.weights.iter().copied().collect(),
            bias: m.bias,
            retained_indices: m.retained_indices.clone(),
            basis_points: (0..m.basis_points.nrows())
                .map(|i| m.basis_points.row(i).iter().copied().collect())
                .collect(),
            label_map: m.label_map,
        }
    }
}

impl TryFrom<PcvmModelJson> for PcvmModel {
    type Error = Error;

    fn try_from(dto: PcvmModelJson) -> Result<Self> {
        let rows = dto.basis_points.len();
        let cols = dto.basis_points.first().map_or(0, |r| r.len());
        if dto.basis_points.iter().any(|r| r.len() != cols) {
            return Err(Error::Parse("ragged basis_points in model JSON".into()));
        }
        if dto.weights.len() != rows || dto.retained_indices.len() != rows {
            return Err(Error::Parse(
                "weights, retained_indices and basis_points disagree in length".into(),
            ));
        }
        let basis_points = DMatrix::from_fn(rows, cols, |i, j| dto.basis_points[i][j]);
        Ok(PcvmModel {
            weights: DVector::from_vec(dto.weights),
            bias: dto.bias,
            retained_indices: dto.retained_indices,
            kernel: dto.kernel,
            basis_points,
            label_map: dto.label_map,
        })
    }
}

/// One binary PCVM per class, class versus rest.
#[derive(Debug, Clone)]
pub struct OneVsRestFits {
    /// Class ids, ascending; aligned with `fits`.
    pub classes: Vec<i64>,
    pub fits: Vec<PcvmFit>,
}

impl OneVsRestFits {
    /// Number of distinct training samples retained by any sub-model.
    pub fn model_vector_count(&self) -> usize {
        let mut all: Vec<usize> = self
            .fits
            .iter()
            .flat_map(|f| f.retained_indices.iter().copied())
            .collect();
        all.sort_unstable();
        all.dedup();
        all.len()
    }
}

/// Trains one binary PCVM per class on a shared precomputed kernel.
pub fn one_vs_rest_train(
    k_train: &KernelMatrix,
    labels: &[i64],
    cfg: &TrainConfig,
) -> Result<OneVsRestFits> {
    let mut classes: Vec<i64> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::InvalidInput("single-class input".into()));
    }
    let mut fits = Vec::with_capacity(classes.len());
    for &c in &classes {
        let internal: Vec<i64> = labels
            .iter()
            .map(|&l| if l == c { 1 } else { -1 })
            .collect();
        let fit = pcvm_train(k_train, &internal, cfg)
            .map_err(|e| e.in_stage(format!("class {c} vs rest")))?;
        fits.push(fit);
    }
    Ok(OneVsRestFits { classes, fits })
}

/// Predicts by largest probabilistic output across the per-class models;
/// ties break toward the smallest class id. `k_full_test` is the kernel
/// between all training rows and the test points; each sub-model restricts
/// it to its own retained rows.
pub fn one_vs_rest_predict(
    ovr: &OneVsRestFits,
    k_full_test: &KernelMatrix,
) -> Result<(Vec<i64>, Vec<f64>)> {
    let m = k_full_test.ncols();
    let mut best_labels = vec![ovr.classes[0]; m];
    let mut best_probs = vec![f64::NEG_INFINITY; m];
    for (c, fit) in ovr.classes.iter().zip(&ovr.fits) {
        let restricted = restrict_rows(k_full_test.values(), &fit.retained_indices);
        let d = fit.decision_values(&restricted)?;
        for j in 0..m {
            let p = probit(d[j].clamp(-DECISION_CLAMP, DECISION_CLAMP));
            if p > best_probs[j] {
                best_probs[j] = p;
                best_labels[j] = *c;
            }
        }
    }
    Ok((best_labels, best_probs))
}

/// Rows of `k` at the given indices, in order.
pub(crate) fn restrict_rows(k: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), k.ncols(), |i, j| k[(rows[i], j)])
}

/// Binary-or-multiclass PCVM trained on one shared kernel. This is the
/// classifier unit the transfer pipelines embed.
#[derive(Debug, Clone)]
pub enum TrainedPcvm {
    Binary { fit: PcvmFit, label_map: LabelMap },
    MultiClass(OneVsRestFits),
}

impl TrainedPcvm {
    /// Routes by class count: two classes train a single binary model,
    /// more go through one-vs-rest.
    pub fn train(k_train: &KernelMatrix, labels: &[i64], cfg: &TrainConfig) -> Result<Self> {
        let mut classes: Vec<i64> = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        match classes.len() {
            0 | 1 => Err(Error::InvalidInput("single-class input".into())),
            2 => {
                let label_map = LabelMap::from_binary_labels(labels)?;
                let internal: Result<Vec<i64>> =
                    labels.iter().map(|&l| label_map.to_internal(l)).collect();
                let fit = pcvm_train(k_train, &internal?, cfg)?;
                Ok(TrainedPcvm::Binary { fit, label_map })
            }
            _ => Ok(TrainedPcvm::MultiClass(one_vs_rest_train(
                k_train, labels, cfg,
            )?)),
        }
    }

    /// Predicts external labels from the full kernel between all training
    /// rows and the test points.
    pub fn predict(&self, k_full_test: &KernelMatrix) -> Result<(Vec<i64>, Vec<f64>)> {
        match self {
            TrainedPcvm::Binary { fit, label_map } => {
                let restricted = KernelMatrix::new(
                    restrict_rows(k_full_test.values(), &fit.retained_indices),
                    k_full_test.row_source(),
                    k_full_test.col_source(),
                );
                let (internal, probs) = pcvm_predict(fit, &restricted)?;
                let labels = internal.iter().map(|&l| label_map.to_external(l)).collect();
                Ok((labels, probs))
            }
            TrainedPcvm::MultiClass(ovr) => one_vs_rest_predict(ovr, k_full_test),
        }
    }

    pub fn model_vector_count(&self) -> usize {
        match self {
            TrainedPcvm::Binary { fit, .. } => fit.basis_count(),
            TrainedPcvm::MultiClass(ovr) => ovr.model_vector_count(),
        }
    }
}

/// Test helper style constructors live with the tests below; the public
/// surface above is what the pipelines consume.
#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{gram, KernelSpec};
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn gaussian_blob(
        rng: &mut ChaCha8Rng,
        center: &[f64],
        sigma: f64,
        count: usize,
    ) -> Vec<Vec<f64>> {
        let dist = Normal::new(0.0, sigma).unwrap();
        (0..count)
            .map(|_| center.iter().map(|&c| c + dist.sample(rng)).collect())
            .collect()
    }

    fn two_gaussians_1d(seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = gaussian_blob(&mut rng, &[3.0], 0.5, 50);
        rows.extend(gaussian_blob(&mut rng, &[-3.0], 0.5, 50));
        let mut labels = vec![1i64; 50];
        labels.extend(vec![-1i64; 50]);
        let features = DMatrix::from_fn(100, 1, |i, j| rows[i][j]);
        Dataset::new(features, labels, "two-gaussians").unwrap()
    }

    #[test]
    fn probit_at_zero_is_half() {
        assert_eq!(probit(0.0), 0.5);
    }

    #[test]
    fn probit_matches_quadrature_oracle() {
        // Simpson quadrature of the standard normal density.
        let quad = |a: f64, b: f64| {
            let steps = 20_000;
            let h = (b - a) / steps as f64;
            let mut acc = normal_pdf(a) + normal_pdf(b);
            for i in 1..steps {
                let x = a + i as f64 * h;
                acc += if i % 2 == 1 { 4.0 } else { 2.0 } * normal_pdf(x);
            }
            acc * h / 3.0
        };
        for &x in &[0.1, 0.5, 1.0, 1.6449, 2.5, 4.0] {
            let oracle = 0.5 + quad(0.0, x);
            assert!(
                (probit(x) - oracle).abs() < 1e-7,
                "x = {x}: probit {} vs oracle {oracle}",
                probit(x)
            );
        }
        assert!((probit(1.6449) - 0.95).abs() < 1e-4);
    }

    #[test]
    fn probit_symmetry_identity() {
        for i in 0..200 {
            let x = -6.0 + i as f64 * 0.06;
            assert!((probit(x) + probit(-x) - 1.0).abs() < 1e-12, "x = {x}");
        }
    }

    fn train_on(ds: &Dataset, theta: f64, cfg: &TrainConfig) -> PcvmFit {
        let spec = KernelSpec::rbf(theta).unwrap();
        let k = gram(&spec, ds, ds).unwrap();
        pcvm_train(&k, ds.labels(), cfg).unwrap()
    }

    #[test]
    fn two_gaussian_toy_low_error_and_sparse() {
        let ds = two_gaussians_1d(42);
        let fit = train_on(&ds, 1.0, &TrainConfig::default());
        let spec = KernelSpec::rbf(1.0).unwrap();
        let k_full = gram(&spec, &ds, &ds).unwrap();
        let restricted = KernelMatrix::new(
            restrict_rows(k_full.values(), &fit.retained_indices),
            "t",
            "t",
        );
        let (pred, _) = pcvm_predict(&fit, &restricted).unwrap();
        let errors = pred
            .iter()
            .zip(ds.labels())
            .filter(|(p, y)| *p != *y)
            .count();
        assert!(errors <= 2, "training errors: {errors}");
        assert!(
            fit.basis_count() <= 15,
            "retained basis: {}",
            fit.basis_count()
        );
    }

    #[test]
    fn minimal_two_point_problem() {
        for theta in [0.5, 1.0, 3.0] {
            let ds = Dataset::new(
                DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
                vec![1, -1],
                "pair",
            )
            .unwrap();
            let fit = train_on(&ds, theta, &TrainConfig::default());
            let spec = KernelSpec::rbf(theta).unwrap();
            let k = gram(&spec, &ds, &ds).unwrap();
            let restricted = KernelMatrix::new(
                restrict_rows(k.values(), &fit.retained_indices),
                "t",
                "t",
            );
            let (pred, _) = pcvm_predict(&fit, &restricted).unwrap();
            assert_eq!(pred, vec![1, -1], "theta = {theta}");
        }
    }

    #[test]
    fn single_class_rejected() {
        let ds = Dataset::new(
            DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]),
            vec![1, 1, 1],
            "one-class",
        )
        .unwrap();
        let spec = KernelSpec::rbf(1.0).unwrap();
        let k = gram(&spec, &ds, &ds).unwrap();
        let err = pcvm_train(&k, ds.labels(), &TrainConfig::default()).unwrap_err();
        assert!(err.to_string().contains("single-class"), "{err}");
    }

    #[test]
    fn predict_with_zero_basis_uses_bias() {
        let fit = PcvmFit {
            weights: DVector::zeros(0),
            bias: -1.0,
            retained_indices: vec![],
            iterations: 0,
            retained_history: vec![],
        };
        let k = KernelMatrix::new(DMatrix::zeros(0, 4), "b", "x");
        let (labels, probs) = pcvm_predict(&fit, &k).unwrap();
        assert_eq!(labels, vec![-1, -1, -1, -1]);
        for p in probs {
            assert!((p - probit(-1.0)).abs() < 1e-12);
            assert!((p - 0.15865525393145707).abs() < 1e-9);
        }
    }

    #[test]
    fn decision_zero_is_positive_with_half_probability() {
        let fit = PcvmFit {
            weights: DVector::zeros(0),
            bias: 0.0,
            retained_indices: vec![],
            iterations: 0,
            retained_history: vec![],
        };
        let k = KernelMatrix::new(DMatrix::zeros(0, 2), "b", "x");
        let (labels, probs) = pcvm_predict(&fit, &k).unwrap();
        assert_eq!(labels, vec![1, 1]);
        assert_eq!(probs, vec![0.5, 0.5]);
    }

    #[test]
    fn sparsity_is_monotone_over_iterations() {
        let ds = two_gaussians_1d(7);
        let fit = train_on(&ds, 1.0, &TrainConfig::default());
        for w in fit.retained_history.windows(2) {
            assert!(w[1] <= w[0], "history {:?}", fit.retained_history);
        }
    }

    #[test]
    fn permuting_training_order_preserves_decisions() {
        let ds = two_gaussians_1d(11);
        let n = ds.n_samples();
        let perm: Vec<usize> = (0..n).rev().collect();
        let permuted = ds.select_rows(&perm, "permuted").unwrap();

        let spec = KernelSpec::rbf(1.0).unwrap();
        let cfg = TrainConfig::default();
        let fit_a = train_on(&ds, 1.0, &cfg);
        let fit_b = train_on(&permuted, 1.0, &cfg);

        let test = Dataset::new(
            DMatrix::from_row_slice(5, 1, &[-3.2, -1.0, 0.0, 1.3, 3.4]),
            vec![1; 5],
            "test",
        )
        .unwrap();
        let ka = gram(&spec, &ds, &test).unwrap();
        let kb = gram(&spec, &permuted, &test).unwrap();
        let da = fit_a
            .decision_values(&restrict_rows(ka.values(), &fit_a.retained_indices))
            .unwrap();
        let db = fit_b
            .decision_values(&restrict_rows(kb.values(), &fit_b.retained_indices))
            .unwrap();
        for j in 0..5 {
            assert!(
                (da[j] - db[j]).abs() < 1e-6,
                "test point {j}: {} vs {}",
                da[j],
                db[j]
            );
        }
    }

    #[test]
    fn restricted_rows_equal_zero_padded_full_product() {
        let ds = two_gaussians_1d(3);
        let fit = train_on(&ds, 1.0, &TrainConfig::default());
        let spec = KernelSpec::rbf(1.0).unwrap();
        let test = Dataset::new(
            DMatrix::from_row_slice(3, 1, &[-2.0, 0.5, 2.5]),
            vec![1; 3],
            "test",
        )
        .unwrap();
        let k_full = gram(&spec, &ds, &test).unwrap();

        let restricted = restrict_rows(k_full.values(), &fit.retained_indices);
        let d_restricted = fit.decision_values(&restricted).unwrap();

        let mut padded = DVector::zeros(ds.n_samples());
        for (slot, &idx) in fit.retained_indices.iter().enumerate() {
            padded[idx] = fit.weights[slot];
        }
        let d_full = k_full.values().transpose() * padded;
        for j in 0..3 {
            assert_eq!(d_restricted[j], d_full[j] + fit.bias);
        }
    }

    fn three_class_2d(seed: u64, per_class: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = [[0.0, 4.0], [4.0, -2.0], [-4.0, -2.0]];
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            rows.extend(gaussian_blob(&mut rng, center, 0.5, per_class));
            labels.extend(std::iter::repeat((c + 1) as i64).take(per_class));
        }
        let features = DMatrix::from_fn(rows.len(), 2, |i, j| rows[i][j]);
        Dataset::new(features, labels, "three-class").unwrap()
    }

    #[test]
    fn one_vs_rest_reduces_to_binary_on_two_classes() {
        let ds = two_gaussians_1d(19);
        let spec = KernelSpec::rbf(1.0).unwrap();
        let k = gram(&spec, &ds, &ds).unwrap();
        let cfg = TrainConfig::default();

        let trained = TrainedPcvm::train(&k, ds.labels(), &cfg).unwrap();
        let ovr = one_vs_rest_train(&k, ds.labels(), &cfg).unwrap();

        let (binary_pred, _) = trained.predict(&k).unwrap();
        let (ovr_pred, _) = one_vs_rest_predict(&ovr, &k).unwrap();
        assert_eq!(binary_pred, ovr_pred);
    }

    #[test]
    fn one_vs_rest_on_three_separated_classes() {
        let train = three_class_2d(5, 30);
        let test = three_class_2d(99, 20);
        let spec = KernelSpec::rbf(1.5).unwrap();
        let k = gram(&spec, &train, &train).unwrap();
        let ovr = one_vs_rest_train(&k, train.labels(), &TrainConfig::default()).unwrap();
        let k_test = gram(&spec, &train, &test).unwrap();
        let (pred, _) = one_vs_rest_predict(&ovr, &k_test).unwrap();
        let errors = pred
            .iter()
            .zip(test.labels())
            .filter(|(p, y)| *p != *y)
            .count();
        let rate = errors as f64 / test.n_samples() as f64;
        assert!(rate <= 0.05, "multi-class test error {rate}");
    }

    #[test]
    fn one_vs_rest_single_class_rejected() {
        let ds = Dataset::new(DMatrix::zeros(3, 1), vec![2, 2, 2], "x").unwrap();
        let spec = KernelSpec::rbf(1.0).unwrap();
        let k = gram(&spec, &ds, &ds).unwrap();
        assert!(one_vs_rest_train(&k, ds.labels(), &TrainConfig::default()).is_err());
    }

    #[test]
    fn model_json_round_trip() {
        let ds = two_gaussians_1d(23);
        let spec = KernelSpec::rbf(1.0).unwrap();
        let fit = train_on(&ds, 1.0, &TrainConfig::default());
        let label_map = LabelMap::from_binary_labels(ds.labels()).unwrap();
        let model = PcvmModel::assemble(&fit, spec, ds.features(), label_map).unwrap();
        let json = model.to_json().unwrap();
        let back = PcvmModel::from_json(&json).unwrap();
        assert_eq!(back.retained_indices, model.retained_indices);
        assert_eq!(back.bias, model.bias);
        assert_eq!(back.label_map, model.label_map);
        let x = DMatrix::from_row_slice(3, 1, &[-3.0, 0.2, 3.0]);
        assert_eq!(
            model.predict_features(&x).unwrap(),
            back.predict_features(&x).unwrap()
        );
    }

    #[test]
    fn held_out_point_scores_confidently() {
        let ds = two_gaussians_1d(31);
        let fit = train_on(&ds, 1.0, &TrainConfig::default());
        let spec = KernelSpec::rbf(1.0).unwrap();
        let test = Dataset::new(DMatrix::from_row_slice(1, 1, &[3.0]), vec![1], "t").unwrap();
        let k = gram(&spec, &ds, &test).unwrap();
        let restricted = KernelMatrix::new(
            restrict_rows(k.values(), &fit.retained_indices),
            "t",
            "t",
        );
        let (labels, probs) = pcvm_predict(&fit, &restricted).unwrap();
        assert_eq!(labels[0], 1);
        assert!(probs[0] > 0.9, "probability {}", probs[0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn label_and_probability_are_consistent(bias in -4.0f64..4.0) {
            let fit = PcvmFit {
                weights: DVector::zeros(0),
                bias,
                retained_indices: vec![],
                iterations: 0,
                retained_history: vec![],
            };
            let k = KernelMatrix::new(DMatrix::zeros(0, 1), "b", "x");
            let (labels, probs) = pcvm_predict(&fit, &k).unwrap();
            prop_assert_eq!(labels[0] == 1, probs[0] >= 0.5);
        }
    }
}
