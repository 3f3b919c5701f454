//! Dense symmetric linear algebra helpers shared by the GP and sampling code.
//!
//! Everything here works on explicit `DMatrix<f64>` values. Trajectory sizes
//! stay in the low hundreds of states, so dense factorizations are fine.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative eigenvalue cutoff used when pseudo-inverting PSD matrices.
pub const PINV_REL_TOL: f64 = 1e-12;

/// Force exact symmetry; conditioning updates accumulate asymmetric rounding.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Symmetric eigendecomposition, eigenvalues ascending.
pub fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let mut s = m.clone();
    symmetrize(&mut s);
    let eig = s.symmetric_eigen();
    (eig.eigenvalues, eig.eigenvectors)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let (vals, _) = sym_eigen(m);
    vals.min()
}

/// Result of a symmetric pseudo-inverse solve.
pub struct PinvSolve {
    pub solution: DMatrix<f64>,
    /// True when at least one eigenvalue fell below the cutoff.
    pub rank_deficient: bool,
    /// max|λ| / min kept |λ|; `None` for the zero matrix.
    pub condition: Option<f64>,
}

/// Solve `S X = B` for symmetric PSD `S` via eigendecomposition, dropping
/// eigenvalues below `PINV_REL_TOL * max|λ|`. Rank-deficient systems are
/// accepted only when `B` lies in the range of `S`; otherwise the system is
/// inconsistent and an error with a condition-number report is returned.
pub fn pinv_solve(s: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<PinvSolve> {
    let (vals, vecs) = sym_eigen(s);
    let max_abs = vals.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if max_abs == 0.0 {
        // S = 0: consistent only for B = 0.
        let bnorm = b.norm();
        if bnorm > 1e-12 {
            return Err(Error::numerical(
                "singular innovation matrix (zero) with nonzero right-hand side",
                None,
            ));
        }
        return Ok(PinvSolve {
            solution: DMatrix::zeros(s.nrows(), b.ncols()),
            rank_deficient: true,
            condition: None,
        });
    }
    let cutoff = PINV_REL_TOL * max_abs;
    let mut inv_vals = DVector::zeros(vals.len());
    let mut rank_deficient = false;
    let mut min_kept = f64::INFINITY;
    for i in 0..vals.len() {
        if vals[i].abs() > cutoff {
            inv_vals[i] = 1.0 / vals[i];
            min_kept = min_kept.min(vals[i].abs());
        } else {
            inv_vals[i] = 0.0;
            rank_deficient = true;
        }
    }
    let condition = Some(max_abs / min_kept);
    // X = V diag(1/λ) Vᵀ B
    let vt_b = vecs.transpose() * b;
    let mut scaled = vt_b;
    for i in 0..inv_vals.len() {
        let w = inv_vals[i];
        scaled.row_mut(i).scale_mut(w);
    }
    let solution = &vecs * scaled;
    if rank_deficient {
        // Inconsistent right-hand side means the observation contradicts an
        // exactly-determined subspace.
        let residual = s * &solution - b;
        let scale = b.norm().max(1.0);
        if residual.norm() > 1e-8 * scale {
            return Err(Error::numerical(
                "singular innovation matrix with inconsistent right-hand side",
                condition,
            ));
        }
    }
    Ok(PinvSolve {
        solution,
        rank_deficient,
        condition,
    })
}

/// Pseudo-inverse of a symmetric PSD matrix. Returns the inverse and whether
/// any eigenvalue was dropped (degenerate directions).
pub fn pinv(s: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let (vals, vecs) = sym_eigen(s);
    let max_abs = vals.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let cutoff = PINV_REL_TOL * max_abs;
    let n = s.nrows();
    let mut degenerate = false;
    let mut out = DMatrix::zeros(n, n);
    for i in 0..vals.len() {
        if max_abs > 0.0 && vals[i].abs() > cutoff {
            let col = vecs.column(i);
            out += col * col.transpose() / vals[i];
        } else {
            degenerate = true;
        }
    }
    symmetrize(&mut out);
    (out, degenerate)
}

/// Symmetric square-root factor `A` with `A Aᵀ ≈ S`, clipping negative
/// eigenvalues at zero. Returns the factor and whether clipping occurred.
pub fn psd_sqrt(s: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let (vals, vecs) = sym_eigen(s);
    let mut clipped = false;
    let mut scaled = vecs.clone();
    for i in 0..vals.len() {
        let v = if vals[i] < 0.0 {
            clipped = true;
            0.0
        } else {
            vals[i]
        };
        scaled.column_mut(i).scale_mut(v.sqrt());
    }
    (scaled, clipped)
}

/// log det of a PSD matrix restricted to its non-degenerate subspace,
/// together with the retained rank. Used for Gaussian log-densities.
pub fn psd_log_det(s: &DMatrix<f64>) -> (f64, usize) {
    let (vals, _) = sym_eigen(s);
    let max_abs = vals.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let cutoff = PINV_REL_TOL * max_abs;
    let mut log_det = 0.0;
    let mut rank = 0;
    for &v in vals.iter() {
        if max_abs > 0.0 && v > cutoff {
            log_det += v.ln();
            rank += 1;
        }
    }
    (log_det, rank)
}
