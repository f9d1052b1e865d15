//! End-to-end transfer estimators.
//!
//! All three estimators share the transductive shape: `fit` receives the
//! labeled source dataset plus the *unlabeled* target features (a
//! [`FeatureSet`], so no fit path can touch target labels), and `predict`
//! returns labels for exactly those target samples.
//!
//! * [`PcvmEstimator`] — no transfer; RBF PCVM trained on the source.
//! * [`PctkvmEstimator`] — PCVM trained on the damped transfer kernel;
//!   prediction restricts the test-side kernel to the retained rows.
//! * [`NtvmEstimator`] — normalization, source augmentation, Nyström basis
//!   transfer, then an RBF PCVM on the transferred representation.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::data::{normalize_features, Dataset, FeatureSet, NormalizationStats};
use crate::error::{Error, Result};
use crate::kernel::{gram_matrix, KernelMatrix, KernelSpec};
use crate::nbt::{augment_source, nbt_fit, AugmentationReport, NbtResult};
use crate::pcvm::{TrainConfig, TrainedPcvm};
use crate::tkl::{tkl_fit, EigenCount, TransferKernel};

/// A transductive transfer method the benchmark harness can drive: fit on
/// (labeled source, unlabeled target features), then predict labels for the
/// target samples given at fit time.
pub trait TransferMethod {
    fn name(&self) -> String;
    fn fit(
        &self,
        source: &Dataset,
        target: &FeatureSet,
        seed: u64,
    ) -> Result<Box<dyn FittedModel>>;
}

/// A fitted transfer model bound to its fit-time target.
pub trait FittedModel {
    /// External labels and confidence values for the fit-time target rows.
    fn predict(&self) -> Result<(Vec<i64>, Vec<f64>)>;
    /// Number of training samples that participate in prediction.
    fn model_vector_count(&self) -> usize;
}

fn check_dims(source: &Dataset, target: &FeatureSet) -> Result<()> {
    if source.n_features() != target.n_features() {
        return Err(Error::InvalidInput(format!(
            "feature dimension mismatch: source d = {}, target d = {}",
            source.n_features(),
            target.n_features()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// plain PCVM baseline
// ---------------------------------------------------------------------------

/// RBF PCVM on the raw source features; no transfer step.
#[derive(Debug, Clone)]
pub struct PcvmEstimator {
    pub model: TrainedPcvm,
    pub theta: f64,
    training_points: DMatrix<f64>,
    target: DMatrix<f64>,
    target_name: String,
    source_name: String,
}

pub fn pcvm_baseline_fit(
    source: &Dataset,
    target: &FeatureSet,
    theta: f64,
    cfg: &TrainConfig,
) -> Result<PcvmEstimator> {
    check_dims(source, target)?;
    let spec = KernelSpec::rbf(theta)?;
    let k_train = crate::kernel::gram(&spec, source, source)?;
    let model = TrainedPcvm::train(&k_train, source.labels(), cfg)?;
    Ok(PcvmEstimator {
        model,
        theta,
        training_points: source.features().clone(),
        target: target.features().clone(),
        target_name: target.name().to_string(),
        source_name: source.name().to_string(),
    })
}

pub fn pcvm_baseline_predict(est: &PcvmEstimator) -> Result<(Vec<i64>, Vec<f64>)> {
    let spec = KernelSpec::rbf(est.theta)?;
    let k = gram_matrix(&spec, &est.training_points, &est.target)?;
    est.model
        .predict(&KernelMatrix::new(k, &est.source_name, &est.target_name))
}

// ---------------------------------------------------------------------------
// PCTKVM
// ---------------------------------------------------------------------------

/// Transfer-kernel PCVM: trained on the damped approximation of the source
/// kernel, predicting through the test-side kernel.
#[derive(Debug, Clone)]
pub struct PctkvmEstimator {
    pub transfer: TransferKernel,
    pub model: TrainedPcvm,
    pub theta: f64,
    pub zeta: f64,
}

/// Runs transfer kernel learning, then trains the PCVM on the approximated
/// training kernel with the source labels. Multi-class sources route
/// through the one-vs-rest wrapper.
pub fn pctkvm_fit(
    source: &Dataset,
    target: &FeatureSet,
    theta: f64,
    zeta: f64,
    cfg: &TrainConfig,
) -> Result<PctkvmEstimator> {
    check_dims(source, target)?;
    let spec = KernelSpec::rbf(theta)?;
    let transfer = tkl_fit(
        &source.features_only(),
        target,
        &spec,
        zeta,
        EigenCount::All,
    )
    .map_err(|e| e.in_stage("transfer kernel learning"))?;
    let k_bar = KernelMatrix::new(transfer.k_bar_z.clone(), source.name(), source.name());
    let model = TrainedPcvm::train(&k_bar, source.labels(), cfg)
        .map_err(|e| e.in_stage("pcvm training"))?;
    Ok(PctkvmEstimator {
        transfer,
        model,
        theta,
        zeta,
    })
}

/// Predicts target labels by restricting the transposed test-side kernel to
/// each model's retained rows. Equivalent to the full-matrix product with
/// zero-padded weights.
pub fn pctkvm_predict(est: &PctkvmEstimator) -> Result<(Vec<i64>, Vec<f64>)> {
    // rows: source training samples, columns: target points
    let k_zx_bar = KernelMatrix::new(est.transfer.k_bar_xz.transpose(), "source", "target");
    est.model.predict(&k_zx_bar)
}

impl TransferMethod for PctkvmMethod {
    fn name(&self) -> String {
        "pctkvm".into()
    }

    fn fit(
        &self,
        source: &Dataset,
        target: &FeatureSet,
        _seed: u64,
    ) -> Result<Box<dyn FittedModel>> {
        let est = pctkvm_fit(source, target, self.theta, self.zeta, &self.train)?;
        Ok(Box::new(est))
    }
}

impl FittedModel for PctkvmEstimator {
    fn predict(&self) -> Result<(Vec<i64>, Vec<f64>)> {
        pctkvm_predict(self)
    }

    fn model_vector_count(&self) -> usize {
        self.model.model_vector_count()
    }
}

// ---------------------------------------------------------------------------
// NTVM
// ---------------------------------------------------------------------------

/// Basis-transfer PCVM: normalization, source augmentation, landmark SVD
/// reduction onto the target basis, RBF PCVM on the transferred rows.
#[derive(Debug, Clone)]
pub struct NtvmEstimator {
    pub nbt: NbtResult,
    pub model: TrainedPcvm,
    pub theta: f64,
    pub landmarks: usize,
    pub seed: u64,
    pub normalization: (NormalizationStats, NormalizationStats),
    pub augmentation: AugmentationReport,
}

/// Normalizes both domains independently, augments the source to the
/// target's sample count, runs the basis transfer and trains an RBF PCVM on
/// the Gram matrix of the transferred source rows with the augmented labels.
pub fn ntvm_fit(
    source: &Dataset,
    target: &FeatureSet,
    theta: f64,
    landmarks: usize,
    seed: u64,
    cfg: &TrainConfig,
) -> Result<NtvmEstimator> {
    check_dims(source, target)?;
    let (z_normed, z_stats) = normalize_features(source.features());
    let (x_normed, x_stats) = normalize_features(target.features());
    let z_dataset = Dataset::new(z_normed, source.labels().to_vec(), source.name())
        .map_err(|e| e.in_stage("normalization"))?;

    let m = target.n_samples();
    let (z_aug, augmentation) =
        augment_source(&z_dataset, m, seed).map_err(|e| e.in_stage("data augmentation"))?;

    let nbt = nbt_fit(
        &z_aug.features_only(),
        &FeatureSet::new(x_normed, target.name()),
        landmarks,
        seed,
    )
    .map_err(|e| e.in_stage("basis transfer"))?;

    let spec = KernelSpec::rbf(theta)?;
    let k_train = gram_matrix(&spec, &nbt.z_s, &nbt.z_s)?;
    let model = TrainedPcvm::train(
        &KernelMatrix::new(k_train, "z_s", "z_s"),
        z_aug.labels(),
        cfg,
    )
    .map_err(|e| e.in_stage("pcvm training"))?;

    Ok(NtvmEstimator {
        nbt,
        model,
        theta,
        landmarks,
        seed,
        normalization: (z_stats, x_stats),
        augmentation,
    })
}

/// Evaluates the PCVM on the reduced target rows.
pub fn ntvm_predict(est: &NtvmEstimator) -> Result<(Vec<i64>, Vec<f64>)> {
    let spec = KernelSpec::rbf(est.theta)?;
    let k = gram_matrix(&spec, &est.nbt.z_s, &est.nbt.x_s)?;
    est.model.predict(&KernelMatrix::new(k, "z_s", "x_s"))
}

impl FittedModel for NtvmEstimator {
    fn predict(&self) -> Result<(Vec<i64>, Vec<f64>)> {
        ntvm_predict(self)
    }

    fn model_vector_count(&self) -> usize {
        self.model.model_vector_count()
    }
}

// ---------------------------------------------------------------------------
// harness-facing method descriptors
// ---------------------------------------------------------------------------

/// Plain PCVM with a fixed kernel width.
#[derive(Debug, Clone)]
pub struct PcvmMethod {
    pub theta: f64,
    pub train: TrainConfig,
}

/// PCTKVM with fixed kernel width and damping factor.
#[derive(Debug, Clone)]
pub struct PctkvmMethod {
    pub theta: f64,
    pub zeta: f64,
    pub train: TrainConfig,
}

/// NTVM with fixed kernel width and landmark count. The landmark count is
/// clamped to `min(m, d)` of the fold at fit time, mirroring how the
/// landmark sweep caps its range.
#[derive(Debug, Clone)]
pub struct NtvmMethod {
    pub theta: f64,
    pub landmarks: usize,
    pub train: TrainConfig,
}

impl TransferMethod for PcvmMethod {
    fn name(&self) -> String {
        "pcvm".into()
    }

    fn fit(
        &self,
        source: &Dataset,
        target: &FeatureSet,
        _seed: u64,
    ) -> Result<Box<dyn FittedModel>> {
        let est = pcvm_baseline_fit(source, target, self.theta, &self.train)?;
        Ok(Box::new(est))
    }
}

impl FittedModel for PcvmEstimator {
    fn predict(&self) -> Result<(Vec<i64>, Vec<f64>)> {
        pcvm_baseline_predict(self)
    }

    fn model_vector_count(&self) -> usize {
        self.model.model_vector_count()
    }
}

impl TransferMethod for NtvmMethod {
    fn name(&self) -> String {
        "ntvm".into()
    }

    fn fit(
        &self,
        source: &Dataset,
        target: &FeatureSet,
        seed: u64,
    ) -> Result<Box<dyn FittedModel>> {
        let cap = target.n_samples().min(target.n_features()).max(1);
        let s = self.landmarks.clamp(1, cap);
        let est = ntvm_fit(source, target, self.theta, s, seed, &self.train)?;
        Ok(Box::new(est))
    }
}

// ---------------------------------------------------------------------------
// estimator serialization
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct FitJson {
    weights: Vec<f64>,
    bias: f64,
    retained_indices: Vec<usize>,
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ClassifierJson {
    Binary {
        label_map: crate::pcvm::LabelMap,
        fit: FitJson,
    },
    OneVsRest {
        classes: Vec<i64>,
        fits: Vec<FitJson>,
    },
}

fn classifier_json(model: &TrainedPcvm) -> ClassifierJson {
    let to_fit = |f: &crate::pcvm::PcvmFit| FitJson {
        weights: f.weights.iter().copied().collect(),
        bias: f.bias,
        retained_indices: f.retained_indices.clone(),
    };
    match model {
        TrainedPcvm::Binary { fit, label_map } => ClassifierJson::Binary {
            label_map: *label_map,
            fit: to_fit(fit),
        },
        TrainedPcvm::MultiClass(ovr) => ClassifierJson::OneVsRest {
            classes: ovr.classes.clone(),
            fits: ovr.fits.iter().map(to_fit).collect(),
        },
    }
}

/// JSON document for a fitted estimator: the classifier plus the transfer
/// artifacts that prediction depends on.
pub fn estimator_to_json(method: &str, fitted: &FittedEstimator) -> Result<String> {
    #[derive(Serialize)]
    struct EstimatorJson {
        method: String,
        theta: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        zeta: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        landmarks: Option<usize>,
        #[serde(skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        classifier: ClassifierJson,
        #[serde(skip_serializing_if = "Option::is_none")]
        transfer_error: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        lambda_opt: Option<Vec<f64>>,
        #[serde(skip_serializing_if = "Option::is_none")]
        normalization: Option<(NormalizationStats, NormalizationStats)>,
    }

    let dto = match fitted {
        FittedEstimator::Pcvm(est) => EstimatorJson {
            method: method.into(),
            theta: est.theta,
            zeta: None,
            landmarks: None,
            seed: None,
            classifier: classifier_json(&est.model),
            transfer_error: None,
            lambda_opt: None,
            normalization: None,
        },
        FittedEstimator::Pctkvm(est) => EstimatorJson {
            method: method.into(),
            theta: est.theta,
            zeta: Some(est.zeta),
            landmarks: None,
            seed: None,
            classifier: classifier_json(&est.model),
            transfer_error: None,
            lambda_opt: Some(est.transfer.lambda_opt.iter().copied().collect()),
            normalization: None,
        },
        FittedEstimator::Ntvm(est) => EstimatorJson {
            method: method.into(),
            theta: est.theta,
            zeta: None,
            landmarks: Some(est.landmarks),
            seed: Some(est.seed),
            classifier: classifier_json(&est.model),
            transfer_error: Some(est.nbt.transfer_error),
            lambda_opt: None,
            normalization: Some(est.normalization.clone()),
        },
    };
    serde_json::to_string_pretty(&dto)
        .map_err(|e| Error::Config(format!("estimator serialization failed: {e}")))
}

/// Concrete fitted estimator, for serialization by the CLI.
pub enum FittedEstimator {
    Pcvm(PcvmEstimator),
    Pctkvm(PctkvmEstimator),
    Ntvm(NtvmEstimator),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::rotated_gaussians;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn error_rate(pred: &[i64], truth: &[i64]) -> f64 {
        let wrong = pred.iter().zip(truth).filter(|(p, t)| p != t).count();
        wrong as f64 / truth.len() as f64
    }

    #[test]
    fn pctkvm_self_transfer_matches_plain_pcvm() {
        let (ds, _) = rotated_gaussians(80, 80, 2, 0.0, 3).unwrap();
        let cfg = TrainConfig::default();
        let plain = pcvm_baseline_fit(&ds, &ds.features_only(), 1.0, &cfg).unwrap();
        let (plain_pred, _) = pcvm_baseline_predict(&plain).unwrap();
        let plain_err = error_rate(&plain_pred, ds.labels());

        let tk = pctkvm_fit(&ds, &ds.features_only(), 1.0, 1.0, &cfg).unwrap();
        let (tk_pred, _) = pctkvm_predict(&tk).unwrap();
        let tk_err = error_rate(&tk_pred, ds.labels());
        assert!(
            (tk_err - plain_err).abs() <= 0.02,
            "pctkvm {tk_err} vs pcvm {plain_err}"
        );
    }

    #[test]
    fn pctkvm_propagates_single_class_error() {
        let features = DMatrix::from_fn(6, 2, |i, j| (i * 2 + j) as f64);
        let ds = Dataset::new(features, vec![1; 6], "mono").unwrap();
        let err = pctkvm_fit(&ds, &ds.features_only(), 1.0, 1.5, &TrainConfig::default())
            .unwrap_err();
        assert!(err.to_string().contains("single-class"), "{err}");
    }

    #[test]
    fn pctkvm_stays_sparse_on_text_like_toy() {
        // sparse-ish high-dimensional rows with shifted class-conditional
        // feature activity between the domains
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = 120usize;
        let n = 80usize;
        let mut make = |active: std::ops::Range<usize>, rows: usize| -> Vec<Vec<f64>> {
            (0..rows)
                .map(|_| {
                    let mut row = vec![0.0; d];
                    for j in active.clone() {
                        if rng.gen_bool(0.3) {
                            row[j] = rng.gen_range(0.2..1.5);
                        }
                    }
                    row
                })
                .collect()
        };
        let mut src_rows = make(0..40, n / 2);
        src_rows.extend(make(40..80, n / 2));
        let mut tgt_rows = make(10..50, n / 2);
        tgt_rows.extend(make(50..90, n / 2));
        let mut labels = vec![1i64; n / 2];
        labels.extend(vec![-1i64; n / 2]);
        let src = Dataset::new(
            DMatrix::from_fn(n, d, |i, j| src_rows[i][j]),
            labels.clone(),
            "text-src",
        )
        .unwrap();
        let tgt = Dataset::new(
            DMatrix::from_fn(n, d, |i, j| tgt_rows[i][j]),
            labels,
            "text-tgt",
        )
        .unwrap();

        let est = pctkvm_fit(
            &src,
            &tgt.features_only(),
            3.0,
            2.0,
            &TrainConfig::default(),
        )
        .unwrap();
        let retained = est.model.model_vector_count();
        assert!(retained <= n, "retained {retained} of {n}");
        assert!(
            (retained as f64) / (n as f64) <= 0.2,
            "retained {retained} of {n}"
        );
        let (pred, _) = pctkvm_predict(&est).unwrap();
        assert_eq!(pred.len(), n);
    }

    #[test]
    fn ntvm_self_transfer_is_accurate() {
        let (ds, _) = rotated_gaussians(60, 60, 2, 0.0, 5).unwrap();
        let cfg = TrainConfig::default();
        let est = ntvm_fit(&ds, &ds.features_only(), 1.0, 2, 7, &cfg).unwrap();
        let (pred, _) = ntvm_predict(&est).unwrap();
        let err = error_rate(&pred, ds.labels());
        assert!(err <= 0.02, "self-transfer error {err}");
    }

    #[test]
    fn ntvm_beats_plain_pcvm_on_rotated_toy() {
        let (z, x) = rotated_gaussians(200, 200, 20, 40.0, 11).unwrap();
        let cfg = TrainConfig::default();

        let ntvm = ntvm_fit(&z, &x.features_only(), 4.0, 20, 3, &cfg).unwrap();
        let (pred, _) = ntvm_predict(&ntvm).unwrap();
        let ntvm_err = error_rate(&pred, x.labels());

        let plain = pcvm_baseline_fit(&z, &x.features_only(), 1.0, &cfg).unwrap();
        let (plain_pred, _) = pcvm_baseline_predict(&plain).unwrap();
        let plain_err = error_rate(&plain_pred, x.labels());

        assert!(ntvm_err <= 0.10, "ntvm error {ntvm_err}");
        assert!(plain_err >= 0.25, "plain pcvm error {plain_err}");
    }

    #[test]
    fn ntvm_handles_unequal_sample_counts() {
        let (z, x) = rotated_gaussians(150, 200, 10, 30.0, 13).unwrap();
        let est = ntvm_fit(
            &z,
            &x.features_only(),
            2.0,
            10,
            21,
            &TrainConfig::default(),
        )
        .unwrap();
        assert_eq!(est.augmentation.added, 50);
        assert_eq!(est.augmentation.removed, 0);
        let (pred, _) = ntvm_predict(&est).unwrap();
        assert_eq!(pred.len(), 200);

        let (z2, x2) = rotated_gaussians(240, 200, 10, 30.0, 14).unwrap();
        let est2 = ntvm_fit(
            &z2,
            &x2.features_only(),
            2.0,
            10,
            22,
            &TrainConfig::default(),
        )
        .unwrap();
        assert_eq!(est2.augmentation.removed, 40);
    }

    #[test]
    fn ntvm_is_deterministic_under_seed() {
        let (z, x) = rotated_gaussians(50, 50, 8, 35.0, 17).unwrap();
        let cfg = TrainConfig::default();
        let a = ntvm_fit(&z, &x.features_only(), 1.5, 6, 99, &cfg).unwrap();
        let b = ntvm_fit(&z, &x.features_only(), 1.5, 6, 99, &cfg).unwrap();
        let (pa, _) = ntvm_predict(&a).unwrap();
        let (pb, _) = ntvm_predict(&b).unwrap();
        assert_eq!(pa, pb);
    }

    #[test]
    fn ntvm_maps_labels_back_to_external_ids() {
        let (z_raw, x_raw) = rotated_gaussians(40, 40, 4, 10.0, 19).unwrap();
        // relabel {1, -1} -> {7, 3}
        let relabel = |ds: &Dataset| {
            let labels: Vec<i64> = ds
                .labels()
                .iter()
                .map(|&l| if l == 1 { 7 } else { 3 })
                .collect();
            Dataset::new(ds.features().clone(), labels, ds.name()).unwrap()
        };
        let z = relabel(&z_raw);
        let x = relabel(&x_raw);
        let est = ntvm_fit(&z, &x.features_only(), 1.0, 4, 1, &TrainConfig::default()).unwrap();
        let (pred, _) = ntvm_predict(&est).unwrap();
        assert!(pred.iter().all(|&p| p == 3 || p == 7), "{pred:?}");
    }

    #[test]
    fn pctkvm_boundary_prediction_is_positive_class() {
        use crate::pcvm::{LabelMap, PcvmFit};
        use nalgebra::DVector;
        // hand-built estimator: zero weights, zero bias
        let (z, x) = rotated_gaussians(10, 8, 2, 15.0, 23).unwrap();
        let transfer = tkl_fit(
            &z.features_only(),
            &x.features_only(),
            &KernelSpec::rbf(1.0).unwrap(),
            1.0,
            EigenCount::All,
        )
        .unwrap();
        let est = PctkvmEstimator {
            transfer,
            model: TrainedPcvm::Binary {
                fit: PcvmFit {
                    weights: DVector::zeros(0),
                    bias: 0.0,
                    retained_indices: vec![],
                    iterations: 0,
                    retained_history: vec![],
                },
                label_map: LabelMap {
                    negative: -1,
                    positive: 1,
                },
            },
            theta: 1.0,
            zeta: 1.0,
        };
        let (pred, probs) = pctkvm_predict(&est).unwrap();
        assert!(pred.iter().all(|&p| p == 1));
        assert!(probs.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn multiclass_source_routes_through_one_vs_rest() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let centers = [[0.0, 5.0], [5.0, -3.0], [-5.0, -3.0]];
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            for _ in 0..20 {
                rows.push([
                    center[0] + rng.gen_range(-0.5..0.5),
                    center[1] + rng.gen_range(-0.5..0.5),
                ]);
                labels.push((c + 1) as i64);
            }
        }
        let ds = Dataset::new(
            DMatrix::from_fn(rows.len(), 2, |i, j| rows[i][j]),
            labels,
            "tri",
        )
        .unwrap();
        let est = ntvm_fit(&ds, &ds.features_only(), 2.0, 2, 5, &TrainConfig::default()).unwrap();
        assert!(matches!(est.model, TrainedPcvm::MultiClass(_)));
        let (pred, _) = ntvm_predict(&est).unwrap();
        let err = error_rate(&pred, ds.labels());
        assert!(err <= 0.1, "multi-class self transfer error {err}");
    }

    #[test]
    fn estimator_json_has_transfer_artifacts() {
        let (z, x) = rotated_gaussians(30, 30, 4, 20.0, 31).unwrap();
        let cfg = TrainConfig::default();
        let est = ntvm_fit(&z, &x.features_only(), 1.0, 4, 2, &cfg).unwrap();
        let json = estimator_to_json("ntvm", &FittedEstimator::Ntvm(est)).unwrap();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(value["method"], "ntvm");
        assert!(value["transfer_error"].is_number());
        assert!(value["classifier"]["fit"]["weights"].is_array());
    }
}
