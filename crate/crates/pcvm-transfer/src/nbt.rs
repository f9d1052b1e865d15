//! Nyström basis transfer.
//!
//! Source and target data matrices are reduced with landmark SVDs, and the
//! source representation is rebuilt on the *target's* left singular basis:
//! `X_s = L~_X S_X` is the reduced target, `Z_s = L~_X S_Z` the transferred
//! source. Both live in the same `s`-dimensional space and share every
//! column up to the ratio of the two singular spectra, so after per-domain
//! standard normalization (which puts the spectra on a common scale) the
//! transferred source is directly usable as training data for the target.
//!
//! Unequal sample counts are fixed beforehand by [`augment_source`]: the
//! source either grows by sampling class-wise axis-aligned Gaussians into
//! the currently smallest class, or shrinks by removing uniform picks from
//! the currently largest class.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{Dataset, FeatureSet};
use crate::error::{Error, Result};
use crate::nystrom::{nystrom_svd, Selection, SPECTRAL_FLOOR_REL};

/// What [`augment_source`] did: how many samples were added or removed and
/// the class statistics used for sampling.
#[derive(Debug, Clone)]
pub struct AugmentationReport {
    pub added: usize,
    pub removed: usize,
    /// Per-class feature means, ascending by class id.
    pub class_means: Vec<(i64, Vec<f64>)>,
    /// Per-class feature variances (population), ascending by class id.
    pub class_variances: Vec<(i64, Vec<f64>)>,
    pub target_size: usize,
}

/// Result of [`nbt_fit`].
#[derive(Debug, Clone)]
pub struct NbtResult {
    /// Transferred source representation (m x k).
    pub z_s: DMatrix<f64>,
    /// Reduced target representation (m x k).
    pub x_s: DMatrix<f64>,
    /// Source landmark singular values, aligned to the retained basis width.
    pub s_z: DVector<f64>,
    /// Target landmark singular values (the retained basis width).
    pub s_x: DVector<f64>,
    /// Spectral mismatch between the domains after alignment.
    pub transfer_error: f64,
    pub landmark_indices_source: Vec<usize>,
    pub landmark_indices_target: Vec<usize>,
}

fn class_statistics(z: &Dataset) -> Vec<(i64, Vec<f64>, Vec<f64>)> {
    let d = z.n_features();
    z.label_set()
        .into_iter()
        .map(|c| {
            let rows: Vec<usize> = z
                .labels()
                .iter()
                .enumerate()
                .filter(|(_, &l)| l == c)
                .map(|(i, _)| i)
                .collect();
            let count = rows.len() as f64;
            let mut mean = vec![0.0; d];
            for &i in &rows {
                for j in 0..d {
                    mean[j] += z.features()[(i, j)];
                }
            }
            for v in &mut mean {
                *v /= count;
            }
            let mut var = vec![0.0; d];
            for &i in &rows {
                for j in 0..d {
                    let diff = z.features()[(i, j)] - mean[j];
                    var[j] += diff * diff;
                }
            }
            for v in &mut var {
                *v /= count;
            }
            (c, mean, var)
        })
        .collect()
}

/// Equalizes the source sample count to `m`.
///
/// Growth draws from the axis-aligned Gaussian of the currently smallest
/// class (statistics frozen from the original samples; a singleton class
/// has zero variance and therefore contributes copies of its mean) and
/// appends the new rows. Shrinking removes a uniformly chosen member of
/// the currently largest class until the count matches; it refuses to run
/// when `m` is below the number of classes, since some class would have to
/// disappear. Ties on class size resolve toward the smaller class id.
pub fn augment_source(z: &Dataset, m: usize, seed: u64) -> Result<(Dataset, AugmentationReport)> {
    if m == 0 {
        return Err(Error::InvalidInput("target size m must be positive".into()));
    }
    let n = z.n_samples();
    let d = z.n_features();
    let stats = class_statistics(z);
    let report_means: Vec<(i64, Vec<f64>)> =
        stats.iter().map(|(c, m, _)| (*c, m.clone())).collect();
    let report_vars: Vec<(i64, Vec<f64>)> =
        stats.iter().map(|(c, _, v)| (*c, v.clone())).collect();

    if n > m && m < stats.len() {
        return Err(Error::InvalidInput(format!(
            "cannot shrink to {m} samples while keeping all {} classes represented",
            stats.len()
        )));
    }

    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|i| z.features().row(i).iter().copied().collect())
        .collect();
    let mut labels: Vec<i64> = z.labels().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let standard = Normal::new(0.0, 1.0).expect("unit normal");

    let count_of = |labels: &[i64], c: i64| labels.iter().filter(|&&l| l == c).count();

    while labels.len() < m {
        // smallest class right now, ties toward the smaller id
        let (c, mean, var) = stats
            .iter()
            .min_by_key(|(c, _, _)| (count_of(&labels, *c), *c))
            .expect("at least one class");
        let row: Vec<f64> = (0..d)
            .map(|j| mean[j] + var[j].sqrt() * standard.sample(&mut rng))
            .collect();
        rows.push(row);
        labels.push(*c);
    }
    while labels.len() > m {
        // largest class right now, ties toward the smaller id
        let c = *stats
            .iter()
            .map(|(c, _, _)| c)
            .max_by_key(|&&c| (count_of(&labels, c), std::cmp::Reverse(c)))
            .expect("at least one class");
        let members: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == c)
            .map(|(i, _)| i)
            .collect();
        let victim = members[rng.gen_range(0..members.len())];
        rows.remove(victim);
        labels.remove(victim);
    }

    let added = m.saturating_sub(n);
    let removed = n.saturating_sub(m);
    let features = DMatrix::from_fn(m, d, |i, j| rows[i][j]);
    let out = Dataset::new(features, labels, z.name())?;
    Ok((
        out,
        AugmentationReport {
            added,
            removed,
            class_means: report_means,
            class_variances: report_vars,
            target_size: m,
        },
    ))
}

/// Euclidean norm of the difference of two descending-sorted spectra; the
/// shorter one is zero-padded.
pub fn nbt_error(s_z: &[f64], s_x: &[f64]) -> f64 {
    let mut a = s_z.to_vec();
    let mut b = s_x.to_vec();
    a.sort_by(|x, y| y.partial_cmp(x).expect("finite singular values"));
    b.sort_by(|x, y| y.partial_cmp(x).expect("finite singular values"));
    let len = a.len().max(b.len());
    let mut acc = 0.0;
    for i in 0..len {
        let va = a.get(i).copied().unwrap_or(0.0);
        let vb = b.get(i).copied().unwrap_or(0.0);
        acc += (va - vb) * (va - vb);
    }
    acc.sqrt()
}

/// Runs the basis transfer proper. Inputs are expected to be normalized
/// (the pipeline does this; augmentation may perturb the moments slightly)
/// and must have equal sample counts and dimensions. Landmarks for the two
/// domains are drawn independently from the seed.
pub fn nbt_fit(z: &FeatureSet, x: &FeatureSet, s: usize, seed: u64) -> Result<NbtResult> {
    let m = x.n_samples();
    let d = x.n_features();
    if z.n_samples() != m || z.n_features() != d {
        return Err(Error::InvalidInput(format!(
            "shape mismatch: source {} x {}, target {m} x {d}",
            z.n_samples(),
            z.n_features()
        )));
    }
    if s < 1 || s > m.min(d) {
        return Err(Error::InvalidInput(format!(
            "landmark count s = {s} out of range [1, {}]",
            m.min(d)
        )));
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let seed_z: u64 = master.gen();
    let seed_x: u64 = master.gen();

    let svd_z = nystrom_svd(z.features(), s, &Selection::Random { seed: seed_z })?;
    let svd_x = nystrom_svd(x.features(), s, &Selection::Random { seed: seed_x })?;

    let transfer_error = nbt_error(svd_z.s.as_slice(), svd_x.s.as_slice());

    // Target basis in the target's original row order; align the source
    // spectrum to the retained basis width (truncate or zero-pad).
    let l_x = svd_x.left_original_order();
    let k = svd_x.s.len();
    let s_x = svd_x.s.clone();
    let s_z = DVector::from_fn(k, |j, _| svd_z.s.get(j).copied().unwrap_or(0.0));

    let x_s = &l_x * DMatrix::from_diagonal(&s_x);
    let z_s = &l_x * DMatrix::from_diagonal(&s_z);

    Ok(NbtResult {
        z_s,
        x_s,
        s_z,
        s_x,
        transfer_error,
        landmark_indices_source: svd_z.landmark_indices,
        landmark_indices_target: svd_x.landmark_indices,
    })
}

/// Columns with singular values above the relative floor; used by the
/// shared-basis checks.
pub fn above_floor(s: &DVector<f64>) -> Vec<usize> {
    let max = s.amax();
    (0..s.len())
        .filter(|&j| s[j] > SPECTRAL_FLOOR_REL * max)
        .collect()
}
