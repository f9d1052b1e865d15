//! Transfer kernel learning.
//!
//! The target (test) kernel acts as the landmark block of a Nyström
//! approximation of the source (training) kernel: source-side eigenvectors
//! are extrapolated from the target eigensystem, and the eigenspectrum is
//! then re-optimized so the approximated source kernel matches the true one
//! as closely as possible, subject to the damping constraints
//! `lambda_i >= zeta * lambda_{i+1} >= 0`. The damped kernel is domain
//! invariant and drops into any kernel machine; here it feeds PCVM training.
//!
//! The quadratic program is solved by reparametrizing with non-negative
//! increments `lambda_i = sum_{j >= i} zeta^(j-i) delta_j`, which turns the
//! chain constraint into a plain non-negativity constraint, and then running
//! an active-set non-negative least squares on the normal equations.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::data::FeatureSet;
use crate::error::{Error, Result};
use crate::kernel::{rbf_from_sq_dist, squared_distances, KernelSpec};
use crate::nystrom::SPECTRAL_FLOOR_REL;

/// How many target eigenvectors to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenCount {
    /// Everything above the spectral floor.
    All,
    /// At most this many (still subject to the floor).
    Top(usize),
}

/// Result of [`tkl_fit`]: the optimized spectrum, the extrapolated source
/// eigenvectors, the approximated training kernel and the test-side kernel.
#[derive(Debug, Clone)]
pub struct TransferKernel {
    /// Target-kernel eigenvectors (m x r).
    pub u_x: DMatrix<f64>,
    /// Target-kernel eigenvalues (r), descending.
    pub lambda_x: DVector<f64>,
    /// Optimized eigenvalues (r), the model parameters.
    pub lambda_opt: DVector<f64>,
    /// Extrapolated source eigenvectors (n x r).
    pub u_bar_z: DMatrix<f64>,
    /// Approximated training kernel (n x n).
    pub k_bar_z: DMatrix<f64>,
    /// Test-side kernel (m x n): rows are target points, columns source.
    pub k_bar_xz: DMatrix<f64>,
    pub zeta: f64,
    pub r: usize,
}

/// Geometric powers of zeta are capped here to keep the reparametrized
/// normal equations finite for extreme damping factors.
const POWER_CAP: f64 = 1e150;

fn damping_transform(r: usize, zeta: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, r, |i, j| {
        if j < i {
            0.0
        } else {
            zeta.powi((j - i) as i32).min(POWER_CAP)
        }
    })
}

/// Active-set non-negative least squares on the normal equations:
/// minimizes `x^T M x - 2 v^T x` over `x >= 0` for positive semi-definite
/// `M`. Follows the Bro & de Jong fast-NNLS scheme.
fn nnls_normal(m: &DMatrix<f64>, v: &DVector<f64>, tol: f64) -> DVector<f64> {
    let r = v.len();
    let mut x = DVector::zeros(r);
    let mut passive = vec![false; r];
    let mut w = v.clone(); // negative gradient at x = 0

    let solve_passive = |passive: &[bool]| -> Option<(Vec<usize>, DVector<f64>)> {
        let idx: Vec<usize> = (0..r).filter(|&j| passive[j]).collect();
        if idx.is_empty() {
            return None;
        }
        let k = idx.len();
        let mut sub = DMatrix::from_fn(k, k, |a, b| m[(idx[a], idx[b])]);
        let rhs = DVector::from_fn(k, |a, _| v[idx[a]]);
        // tiny ridge keeps degenerate passive sets solvable
        let ridge = 1e-12 * (1.0 + sub.diagonal().amax());
        for a in 0..k {
            sub[(a, a)] += ridge;
        }
        let solved = sub.lu().solve(&rhs)?;
        Some((idx, solved))
    };

    let max_outer = 30 * r.max(1);
    for _ in 0..max_outer {
        // most positive gradient among active (clamped) coordinates
        let mut best: Option<(usize, f64)> = None;
        for j in 0..r {
            if !passive[j] && w[j] > tol && best.map_or(true, |(_, bw)| w[j] > bw) {
                best = Some((j, w[j]));
            }
        }
        let Some((j_star, _)) = best else { break };
        passive[j_star] = true;

        // inner loop: keep the passive solve feasible
        let mut guard = 0;
        loop {
            guard += 1;
            let Some((idx, s)) = solve_passive(&passive) else {
                break;
            };
            let min_s = s.min();
            if min_s > 0.0 || guard > 2 * r + 2 {
                for (slot, &j) in idx.iter().enumerate() {
                    x[j] = s[slot].max(0.0);
                }
                break;
            }
            // step toward s until the first passive coordinate hits zero
            let mut alpha = f64::INFINITY;
            for (slot, &j) in idx.iter().enumerate() {
                if s[slot] <= 0.0 {
                    let denom = x[j] - s[slot];
                    if denom > 0.0 {
                        alpha = alpha.min(x[j] / denom);
                    } else {
                        alpha = 0.0;
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            for (slot, &j) in idx.iter().enumerate() {
                x[j] += alpha * (s[slot] - x[j]);
            }
            for &j in &idx {
                if x[j] <= 0.0 {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
        }
        w = v - m * &x;
    }
    x
}

/// Minimizes `|| U_bar diag(Lambda) U_bar^T - K_Z ||_F^2` over diagonal
/// spectra satisfying `lambda_i >= zeta * lambda_{i+1} >= 0`.
pub fn spectral_qp(u_bar: &DMatrix<f64>, k_z: &DMatrix<f64>, zeta: f64) -> Result<DVector<f64>> {
    if zeta < 1.0 {
        return Err(Error::InvalidInput(format!(
            "damping factor zeta must be >= 1, got {zeta}"
        )));
    }
    if u_bar.nrows() != k_z.nrows() || !k_z.is_square() {
        return Err(Error::InvalidInput(format!(
            "shape mismatch: U_bar is {} x {}, K_Z is {} x {}",
            u_bar.nrows(),
            u_bar.ncols(),
            k_z.nrows(),
            k_z.ncols()
        )));
    }
    if u_bar.iter().any(|v| !v.is_finite()) || k_z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite input to spectral_qp".into()));
    }
    let r = u_bar.ncols();
    if r == 0 {
        return Ok(DVector::zeros(0));
    }

    // Quadratic form in Lambda: Q = (U^T U) o (U^T U), c_i = u_i^T K_Z u_i.
    let gram = u_bar.transpose() * u_bar;
    let q = gram.component_mul(&gram);
    let projected = k_z * u_bar;
    let c = DVector::from_fn(r, |i, _| u_bar.column(i).dot(&projected.column(i)));

    let t = damping_transform(r, zeta);
    let m = t.transpose() * &q * &t;
    let v = t.transpose() * &c;

    let tol = 1e-9 * v.amax().max(1e-30);
    let delta = nnls_normal(&m, &v, tol);
    Ok(&t * delta)
}

/// Fits a transfer kernel: evaluates the three RBF blocks from one pass of
/// pairwise squared distances, eigendecomposes the target kernel, and
/// re-optimizes the spectrum under the damping constraint.
pub fn tkl_fit(
    z: &FeatureSet,
    x: &FeatureSet,
    spec: &KernelSpec,
    zeta: f64,
    r: EigenCount,
) -> Result<TransferKernel> {
    if z.n_features() != x.n_features() {
        return Err(Error::InvalidInput(format!(
            "feature dimension mismatch: source d = {}, target d = {}",
            z.n_features(),
            x.n_features()
        )));
    }
    if zeta < 1.0 {
        return Err(Error::InvalidInput(format!(
            "damping factor zeta must be >= 1, got {zeta}"
        )));
    }
    let m = x.n_samples();
    if let EigenCount::Top(cap) = r {
        if cap > m {
            return Err(Error::InvalidInput(format!(
                "requested {cap} eigenvectors but the target has only {m} samples"
            )));
        }
    }

    // All three kernel blocks from pairwise squared distances.
    let k_x = rbf_from_sq_dist(&squared_distances(x.features(), x.features()), spec.theta);
    let k_z = rbf_from_sq_dist(&squared_distances(z.features(), z.features()), spec.theta);
    let k_zx = rbf_from_sq_dist(&squared_distances(z.features(), x.features()), spec.theta);

    // Top eigenpairs of the target kernel.
    let eig = SymmetricEigen::new(k_x);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .expect("finite eigenvalues")
    });
    let lambda_max = eig.eigenvalues[order[0]].abs();
    let floor = SPECTRAL_FLOOR_REL * lambda_max;
    let mut kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| eig.eigenvalues[i] > floor)
        .collect();
    if kept.is_empty() {
        return Err(Error::Numerical(
            "degenerate target kernel: no eigenvalue above the spectral floor".into(),
        ));
    }
    if let EigenCount::Top(cap) = r {
        kept.truncate(cap);
    }
    let rank = kept.len();
    let u_x = DMatrix::from_fn(m, rank, |i, j| eig.eigenvectors[(i, kept[j])]);
    let lambda_x = DVector::from_fn(rank, |j, _| eig.eigenvalues[kept[j]]);

    // Extrapolated source eigenvectors from the target eigensystem.
    let lambda_x_inv = DMatrix::from_diagonal(&lambda_x.map(|v| 1.0 / v));
    let u_bar_z = &k_zx * &u_x * lambda_x_inv;

    let lambda_opt = spectral_qp(&u_bar_z, &k_z, zeta)?;

    let lambda_diag = DMatrix::from_diagonal(&lambda_opt);
    let k_bar_z = &u_bar_z * &lambda_diag * u_bar_z.transpose();
    let k_bar_xz = &u_x * &lambda_diag * u_bar_z.transpose();

    Ok(TransferKernel {
        u_x,
        lambda_x,
        lambda_opt,
        u_bar_z,
        k_bar_z,
        k_bar_xz,
        zeta,
        r: rank,
    })
}
