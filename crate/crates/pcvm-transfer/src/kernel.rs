//! RBF kernel evaluation: Gram and cross-domain matrices.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Supported kernel families. Only the RBF kernel ships; the enumeration
/// leaves room for further Mercer kernels without interface changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Rbf,
}

/// Kernel family plus its Gaussian width theta.
///
/// The RBF convention is fixed as `k(x, x') = exp(-||x - x'||^2 / theta^2)`;
/// alternative scalings of the denominator are absorbed by the theta grid
/// search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub theta: f64,
}

impl KernelSpec {
    pub fn rbf(theta: f64) -> Result<Self> {
        if !(theta > 0.0) {
            return Err(Error::InvalidInput(format!(
                "kernel width theta must be positive, got {theta}"
            )));
        }
        Ok(KernelSpec {
            kind: KernelKind::Rbf,
            theta,
        })
    }
}

/// A kernel block together with tags naming the datasets its rows and
/// columns were evaluated on.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    values: DMatrix<f64>,
    row_source: String,
    col_source: String,
}

impl KernelMatrix {
    pub fn new(
        values: DMatrix<f64>,
        row_source: impl Into<String>,
        col_source: impl Into<String>,
    ) -> Self {
        KernelMatrix {
            values,
            row_source: row_source.into(),
            col_source: col_source.into(),
        }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn row_source(&self) -> &str {
        &self.row_source
    }

    pub fn col_source(&self) -> &str {
        &self.col_source
    }

    /// True when rows and columns come from the same dataset.
    pub fn is_gram(&self) -> bool {
        self.row_source == self.col_source && self.values.is_square()
    }
}

/// Pairwise squared Euclidean distances between the rows of `a` and the
/// rows of `b`. Computed entry-wise so that `sq_dist(a,b)[i,j]` and
/// `sq_dist(b,a)[j,i]` are bit-identical and diagonals of self-distances
/// are exactly zero.
pub(crate) fn squared_distances(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let d = a.ncols();
    DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
        let mut acc = 0.0;
        for k in 0..d {
            let diff = a[(i, k)] - b[(j, k)];
            acc += diff * diff;
        }
        acc
    })
}

/// Applies the RBF map `exp(-dist / theta^2)` to a squared-distance matrix.
pub(crate) fn rbf_from_sq_dist(sq: &DMatrix<f64>, theta: f64) -> DMatrix<f64> {
    let inv = 1.0 / (theta * theta);
    sq.map(|v| (-v * inv).exp())
}

/// Kernel matrix between two raw feature matrices (rows are samples).
pub fn gram_matrix(
    spec: &KernelSpec,
    rows: &DMatrix<f64>,
    cols: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if !(spec.theta > 0.0) {
        return Err(Error::InvalidInput(format!(
            "kernel width theta must be positive, got {}",
            spec.theta
        )));
    }
    if rows.ncols() != cols.ncols() {
        return Err(Error::InvalidInput(format!(
            "kernel dimension mismatch: rows d = {}, cols d = {}",
            rows.ncols(),
            cols.ncols()
        )));
    }
    match spec.kind {
        KernelKind::Rbf => Ok(rbf_from_sq_dist(&squared_distances(rows, cols), spec.theta)),
    }
}

/// Kernel matrix between two datasets; with `rows == cols` this is the Gram
/// matrix of the set.
pub fn gram(spec: &KernelSpec, rows: &Dataset, cols: &Dataset) -> Result<KernelMatrix> {
    let values = gram_matrix(spec, rows.features(), cols.features())?;
    Ok(KernelMatrix::new(values, rows.name(), cols.name()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn toy(points: &[f64], d: usize, name: &str) -> Dataset {
        let n = points.len() / d;
        Dataset::new(
            DMatrix::from_row_slice(n, d, points),
            vec![1; n],
            name,
        )
        .unwrap()
    }

    #[test]
    fn self_similarity_is_one() {
        let spec = KernelSpec::rbf(1.3).unwrap();
        let ds = toy(&[0.2, -0.4, 1.0, 2.0], 2, "a");
        let k = gram(&spec, &ds, &ds).unwrap();
        assert_eq!(k.values()[(0, 0)], 1.0);
        assert_eq!(k.values()[(1, 1)], 1.0);
        assert!(k.is_gram());
    }

    #[test]
    fn distance_theta_gives_exp_minus_one() {
        let theta = 0.73;
        let spec = KernelSpec::rbf(theta).unwrap();
        let ds = toy(&[0.0, 0.0, theta, 0.0], 2, "a");
        let k = gram(&spec, &ds, &ds).unwrap();
        assert!((k.values()[(0, 1)] - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn gram_is_exactly_symmetric() {
        let spec = KernelSpec::rbf(0.9).unwrap();
        let ds = toy(&[0.0, 0.1, 1.0, -0.3, 0.4, 2.2], 2, "a");
        let k = gram(&spec, &ds, &ds).unwrap();
        let v = k.values();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(v[(i, j)], v[(j, i)]);
            }
        }
    }

    #[test]
    fn cross_gram_is_exact_transpose() {
        let spec = KernelSpec::rbf(1.1).unwrap();
        let a = toy(&[0.0, 0.1, 1.0, -0.3], 2, "a");
        let b = toy(&[2.0, 0.5, -1.0, 0.7, 0.0, 0.0], 2, "b");
        let kab = gram(&spec, &a, &b).unwrap();
        let kba = gram(&spec, &b, &a).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(kab.values()[(i, j)], kba.values()[(j, i)]);
            }
        }
    }

    #[test]
    fn non_positive_theta_rejected() {
        assert!(KernelSpec::rbf(0.0).is_err());
        assert!(KernelSpec::rbf(-1.0).is_err());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let spec = KernelSpec::rbf(1.0).unwrap();
        let a = toy(&[0.0, 0.1], 2, "a");
        let b = toy(&[1.0, 2.0, 3.0], 3, "b");
        assert!(gram(&spec, &a, &b).is_err());
    }

    #[test]
    fn gram_is_positive_semidefinite() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for &n in &[20usize, 80, 200] {
            let features = DMatrix::from_fn(n, 4, |_, _| rng.gen_range(-2.0..2.0));
            let spec = KernelSpec::rbf(1.5).unwrap();
            let k = gram_matrix(&spec, &features, &features).unwrap();
            let eig = nalgebra::SymmetricEigen::new(k);
            let min = eig.eigenvalues.min();
            assert!(min >= -1e-8, "n = {n}: min eigenvalue {min}");
        }
    }

    proptest! {
        #[test]
        fn larger_theta_larger_offdiagonal(
            xs in proptest::collection::vec(-3.0f64..3.0, 8),
            t1 in 0.2f64..1.0,
            bump in 0.1f64..3.0,
        ) {
            let t2 = t1 + bump;
            let m = DMatrix::from_fn(4, 2, |i, j| xs[i * 2 + j]);
            let k1 = gram_matrix(&KernelSpec::rbf(t1).unwrap(), &m, &m).unwrap();
            let k2 = gram_matrix(&KernelSpec::rbf(t2).unwrap(), &m, &m).unwrap();
            for i in 0..4 {
                for j in 0..4 {
                    if i != j {
                        prop_assert!(k2[(i, j)] >= k1[(i, j)]);
                    }
                }
            }
        }
    }
}
