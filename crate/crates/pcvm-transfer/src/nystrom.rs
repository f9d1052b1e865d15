//! Landmark-based low-rank factorizations.
//!
//! A matrix is split around a set of landmark indices into blocks
//!
//! ```text
//!     [ A  B ]
//!     [ C  D ]
//! ```
//!
//! where `A` is the landmark block. The eigen- or singular system of `A` is
//! computed exactly and extrapolated to the full matrix; the `D` block is
//! never materialized, only approximated as `C A^+ B`. Eigen- and singular
//! values whose magnitude falls below `SPECTRAL_FLOOR_REL` times the largest
//! one are dropped (pseudo-inversion by truncation), shrinking the retained
//! dimension.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Relative cutoff under which eigen/singular values are treated as zero.
pub const SPECTRAL_FLOOR_REL: f64 = 1e-10;

/// How landmark indices are chosen: uniformly at random without
/// replacement (seeded), or supplied explicitly.
#[derive(Debug, Clone)]
pub enum Selection {
    Random { seed: u64 },
    Given { indices: Vec<usize> },
}

/// Landmark block decomposition of a matrix. `a` holds the selected
/// rows-and-columns intersection, `b` the selected rows against the
/// remaining columns, `c` the remaining rows against the selected columns.
#[derive(Debug, Clone)]
pub struct BlockDecomposition {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub landmark_indices: Vec<usize>,
    /// Non-landmark row indices, ascending.
    pub row_complement: Vec<usize>,
    /// Non-landmark column indices, ascending.
    pub col_complement: Vec<usize>,
}

fn resolve_indices(rows: usize, cols: usize, s: usize, selection: &Selection) -> Result<Vec<usize>> {
    let bound = rows.min(cols);
    if s < 1 || s > bound {
        return Err(Error::InvalidInput(format!(
            "landmark count s = {s} out of range [1, {bound}]"
        )));
    }
    let indices = match selection {
        Selection::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut pool: Vec<usize> = (0..bound).collect();
            pool.shuffle(&mut rng);
            let mut picked: Vec<usize> = pool.into_iter().take(s).collect();
            picked.sort_unstable();
            picked
        }
        Selection::Given { indices } => {
            if indices.len() != s {
                return Err(Error::InvalidInput(format!(
                    "selection supplies {} indices but s = {s}",
                    indices.len()
                )));
            }
            let mut sorted = indices.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != s {
                return Err(Error::InvalidInput("duplicate landmark indices".into()));
            }
            if let Some(&max) = sorted.last() {
                if max >= bound {
                    return Err(Error::InvalidInput(format!(
                        "landmark index {max} out of range [0, {bound})"
                    )));
                }
            }
            sorted
        }
    };
    Ok(indices)
}

fn gather(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Splits `mtx` into the landmark blocks `A`, `B`, `C`. Landmark indices
/// address rows and columns jointly, so they range over
/// `0..min(rows, cols)`.
pub fn decompose(mtx: &DMatrix<f64>, s: usize, selection: &Selection) -> Result<BlockDecomposition> {
    let (rows, cols) = mtx.shape();
    let indices = resolve_indices(rows, cols, s, selection)?;
    let row_complement: Vec<usize> = (0..rows).filter(|r| !indices.contains(r)).collect();
    let col_complement: Vec<usize> = (0..cols).filter(|c| !indices.contains(c)).collect();
    Ok(BlockDecomposition {
        a: gather(mtx, &indices, &indices),
        b: gather(mtx, &indices, &col_complement),
        c: gather(mtx, &row_complement, &indices),
        landmark_indices: indices,
        row_complement,
        col_complement,
    })
}

/// Nyström eigendecomposition of a symmetric matrix.
///
/// Factor matrices are stored with landmark rows/columns first; the
/// original ordering is recorded in `row_order` and restored by
/// [`reconstruct_evd`].
#[derive(Debug, Clone)]
pub struct NystromEvd {
    /// Eigenvectors of the landmark block (s x k after spectral filtering).
    pub u: DMatrix<f64>,
    /// Retained eigenvalues, descending by magnitude.
    pub lambda: DVector<f64>,
    /// Full extrapolated eigenvectors (n x k), landmark rows on top.
    pub u_full: DMatrix<f64>,
    /// Inverted eigenvector block (k x n), landmark columns first.
    pub v_inv: DMatrix<f64>,
    pub landmark_indices: Vec<usize>,
    /// Maps permuted position -> original index (landmarks, then the rest).
    pub row_order: Vec<usize>,
}

fn check_symmetric(k: &DMatrix<f64>) -> Result<()> {
    if !k.is_square() {
        return Err(Error::InvalidInput(format!(
            "matrix is not square: {} x {}",
            k.nrows(),
            k.ncols()
        )));
    }
    let scale = k.amax().max(1.0);
    for i in 0..k.nrows() {
        for j in (i + 1)..k.ncols() {
            if (k[(i, j)] - k[(j, i)]).abs() > 1e-8 * scale {
                return Err(Error::InvalidInput(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// Eigendecomposition of a symmetric matrix sorted descending by
/// eigenvalue magnitude, with values at or below the spectral floor
/// dropped. Errors if nothing survives.
fn filtered_symmetric_eigen(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .abs()
            .partial_cmp(&eig.eigenvalues[i].abs())
            .expect("eigenvalues are finite")
    });
    let max_mag = eig.eigenvalues[order[0]].abs();
    let floor = SPECTRAL_FLOOR_REL * max_mag;
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| eig.eigenvalues[i].abs() > floor)
        .collect();
    if kept.is_empty() || max_mag == 0.0 {
        return Err(Error::Numerical(
            "all eigenvalues of the landmark block fall below the spectral floor".into(),
        ));
    }
    let u = DMatrix::from_fn(a.nrows(), kept.len(), |i, j| eig.eigenvectors[(i, kept[j])]);
    let lambda = DVector::from_fn(kept.len(), |j, _| eig.eigenvalues[kept[j]]);
    Ok((u, lambda))
}

/// Nyström EVD: the landmark block is eigendecomposed exactly, remaining
/// eigenvector rows extrapolated as `C U Lambda^-1`, and the inverted block
/// assembled as `[U^T, Lambda^-1 U^T B]` (the landmark eigenvector matrix is
/// orthogonal, so its inverse is its transpose).
pub fn nystrom_evd(k: &DMatrix<f64>, s: usize, selection: &Selection) -> Result<NystromEvd> {
    check_symmetric(k)?;
    if k.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix contains non-finite entries".into()));
    }
    let blocks = decompose(k, s, selection)?;
    let (u, lambda) = filtered_symmetric_eigen(&blocks.a)?;
    let lambda_inv = DMatrix::from_diagonal(&lambda.map(|v| 1.0 / v));
    let u_hat = &blocks.c * &u * &lambda_inv;
    let mut u_full = DMatrix::zeros(k.nrows(), u.ncols());
    u_full.rows_mut(0, s).copy_from(&u);
    u_full.rows_mut(s, u_hat.nrows()).copy_from(&u_hat);
    // v_inv = [U^T, Lambda^-1 U^T B]
    let right = &lambda_inv * u.transpose() * &blocks.b;
    let mut v_inv = DMatrix::zeros(u.ncols(), k.ncols());
    v_inv.columns_mut(0, s).copy_from(&u.transpose());
    v_inv.columns_mut(s, right.ncols()).copy_from(&right);
    let mut row_order = blocks.landmark_indices.clone();
    row_order.extend_from_slice(&blocks.row_complement);
    Ok(NystromEvd {
        u,
        lambda,
        u_full,
        v_inv,
        landmark_indices: blocks.landmark_indices,
        row_order,
    })
}

/// Rebuilds the approximated matrix `U~ Lambda V~` and restores the
/// original row/column ordering, so the result is directly comparable to
/// the input of [`nystrom_evd`].
pub fn reconstruct_evd(f: &NystromEvd) -> DMatrix<f64> {
    let permuted = &f.u_full * DMatrix::from_diagonal(&f.lambda) * &f.v_inv;
    let n = f.row_order.len();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(f.row_order[i], f.row_order[j])] = permuted[(i, j)];
        }
    }
    out
}

/// Pseudo-inverse of a symmetric matrix by eigenvalue truncation.
fn pseudo_inverse_symmetric(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (u, lambda) = filtered_symmetric_eigen(a)?;
    let inv = DMatrix::from_diagonal(&lambda.map(|v| 1.0 / v));
    Ok(&u * inv * u.transpose())
}

/// Nyström kernel approximation `K~ = K_ns K_ss^+ K_ns^T`.
///
/// `k_ns` holds all rows against the landmark columns, `k_ss` the landmark
/// block itself.
pub fn nystrom_kernel(k_ns: &DMatrix<f64>, k_ss: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(k_ss)?;
    if k_ns.ncols() != k_ss.nrows() {
        return Err(Error::InvalidInput(format!(
            "shape mismatch: K_ns has {} columns, K_ss is {} x {}",
            k_ns.ncols(),
            k_ss.nrows(),
            k_ss.ncols()
        )));
    }
    let pinv = pseudo_inverse_symmetric(k_ss)?;
    Ok(k_ns * pinv * k_ns.transpose())
}

/// Nyström SVD of a rectangular matrix.
///
/// `l_full`/`r_full` are stored with landmark rows/columns first; the top
/// `s x k` blocks are the exact singular vectors of the landmark block.
#[derive(Debug, Clone)]
pub struct NystromSvd {
    /// Left singular vectors (rows x k), landmark rows on top.
    pub l_full: DMatrix<f64>,
    /// Retained singular values, descending.
    pub s: DVector<f64>,
    /// Right singular vectors (cols x k), landmark columns on top.
    pub r_full: DMatrix<f64>,
    pub landmark_indices: Vec<usize>,
    pub row_order: Vec<usize>,
    pub col_order: Vec<usize>,
}

impl NystromSvd {
    /// Left factor with rows restored to the original row ordering.
    pub fn left_original_order(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.l_full.nrows(), self.l_full.ncols());
        for (pos, &orig) in self.row_order.iter().enumerate() {
            out.row_mut(orig).copy_from(&self.l_full.row(pos));
        }
        out
    }

    /// Right factor with rows restored to the original column ordering.
    pub fn right_original_order(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.r_full.nrows(), self.r_full.ncols());
        for (pos, &orig) in self.col_order.iter().enumerate() {
            out.row_mut(orig).copy_from(&self.r_full.row(pos));
        }
        out
    }

    /// Rebuilds `L~ S R~^T` in the original row/column ordering.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.left_original_order()
            * DMatrix::from_diagonal(&self.s)
            * self.right_original_order().transpose()
    }
}

/// Nyström SVD: exact SVD of the landmark block `A = L S R^T`, with the
/// remaining left/right singular vector rows extrapolated as `C R S^-1` and
/// `B^T L S^-1`. Singular values at or below the spectral floor are dropped.
pub fn nystrom_svd(g: &DMatrix<f64>, s: usize, selection: &Selection) -> Result<NystromSvd> {
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix contains non-finite entries".into()));
    }
    let blocks = decompose(g, s, selection)?;
    let svd = blocks.a.clone().svd(true, true);
    let left = svd.u.as_ref().expect("u requested");
    let right_t = svd.v_t.as_ref().expect("v_t requested");
    let sigma_max = svd.singular_values.max();
    if sigma_max <= 0.0 {
        return Err(Error::Numerical(
            "all singular values of the landmark block fall below the spectral floor".into(),
        ));
    }
    let floor = SPECTRAL_FLOOR_REL * sigma_max;
    let kept: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > floor)
        .collect();
    if kept.is_empty() {
        return Err(Error::Numerical(
            "all singular values of the landmark block fall below the spectral floor".into(),
        ));
    }
    let k = kept.len();
    let l = DMatrix::from_fn(s, k, |i, j| left[(i, kept[j])]);
    let r = DMatrix::from_fn(s, k, |i, j| right_t[(kept[j], i)]);
    let sing = DVector::from_fn(k, |j, _| svd.singular_values[kept[j]]);
    let sigma_inv = DMatrix::from_diagonal(&sing.map(|v| 1.0 / v));

    let l_hat = &blocks.c * &r * &sigma_inv;
    let r_hat = blocks.b.transpose() * &l * &sigma_inv;

    let mut l_full = DMatrix::zeros(g.nrows(), k);
    l_full.rows_mut(0, s).copy_from(&l);
    l_full.rows_mut(s, l_hat.nrows()).copy_from(&l_hat);
    let mut r_full = DMatrix::zeros(g.ncols(), k);
    r_full.rows_mut(0, s).copy_from(&r);
    r_full.rows_mut(s, r_hat.nrows()).copy_from(&r_hat);

    let mut row_order = blocks.landmark_indices.clone();
    row_order.extend_from_slice(&blocks.row_complement);
    let mut col_order = blocks.landmark_indices.clone();
    col_order.extend_from_slice(&blocks.col_complement);

    Ok(NystromSvd {
        l_full,
        s: sing,
        r_full,
        landmark_indices: blocks.landmark_indices,
        row_order,
        col_order,
    })
}

/// Frobenius norm of the difference between an approximation and the
/// matrix it approximates.
pub fn approximation_error(approx: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    if approx.shape() != truth.shape() {
        return Err(Error::InvalidInput(format!(
            "shape mismatch: {:?} vs {:?}",
            approx.shape(),
            truth.shape()
        )));
    }
    Ok((approx - truth).norm())
}
