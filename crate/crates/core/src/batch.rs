//! Direct least-squares DMD solves.
//!
//! These recompute everything from the stored snapshots and serve as the
//! reference every incremental algorithm is checked against.

use crate::error::{DmdError, Result};
use crate::kernel::{gram, gram_rows, matmul, mul_abt, mul_abt_rows, Cholesky, Mat, COND_LIMIT};
use crate::snapshots::{stack, SnapshotMatrices, SnapshotPair};

/// `A = Q P` with `P = (X Xᵀ)⁻¹` and `Q = Y Xᵀ`.
#[derive(Debug, Clone)]
pub struct BatchSolution {
    pub a: Mat,
    pub p: Mat,
    pub q: Mat,
    /// Condition estimate of the Gram matrix.
    pub cond: f64,
}

pub(crate) fn validate_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho <= 1.0 {
        Ok(())
    } else {
        Err(DmdError::Parameter(format!("rho must lie in (0, 1], got {rho}")))
    }
}

/// Factors the Gram matrix and rejects it when it is too ill-conditioned.
fn guarded_inverse(g: &Mat) -> Result<(Mat, f64)> {
    let chol = Cholesky::factor(g).map_err(|e| match e {
        DmdError::Rank { cond, .. } => DmdError::Rank { cond, hint: "the snapshot Gram matrix is singular".into() },
        other => other,
    })?;
    let cond = chol.cond_estimate(g);
    if !(cond <= COND_LIMIT) {
        return Err(DmdError::Rank {
            cond,
            hint: "the snapshots do not span the state space; gather more varied snapshots".into(),
        });
    }
    Ok((chol.inverse(), cond))
}

/// Standard DMD: `A = Y X⁺ = Y Xᵀ (X Xᵀ)⁻¹`.
pub fn batch_dmd(snaps: &SnapshotMatrices) -> Result<BatchSolution> {
    let (n, k) = (snaps.n_in(), snaps.k());
    if k < n {
        return Err(DmdError::Underdetermined { pairs: k, dim: n });
    }
    solve_normal(gram(&snaps.x), mul_abt(&snaps.y, &snaps.x)?)
}

/// [`batch_dmd`] on snapshot components given as rows: `x_rows[i][j]` is
/// component `i` of `x_j`. Lets callers solve over a sub-range of a growing
/// history without copying it.
pub fn batch_dmd_rows(x_rows: &[&[f64]], y_rows: &[&[f64]]) -> Result<BatchSolution> {
    let n = x_rows.len();
    let k = x_rows.first().map_or(0, |r| r.len());
    if k < n {
        return Err(DmdError::Underdetermined { pairs: k, dim: n });
    }
    solve_normal(gram_rows(x_rows)?, mul_abt_rows(y_rows, x_rows)?)
}

fn solve_normal(g: Mat, q: Mat) -> Result<BatchSolution> {
    let (p, cond) = guarded_inverse(&g)?;
    let a = matmul(&q, &p)?;
    Ok(BatchSolution { a, p, q, cond })
}

/// Minimizes `Σ ρ^{k−i} ‖yᵢ − A xᵢ‖²`.
///
/// The stored `p` is `(1/ρ)(X̃ X̃ᵀ)⁻¹`, the form the weighted recursions
/// carry, and `q` is scaled by `ρ` to keep `A = Q P`.
pub fn weighted_batch_dmd(snaps: &SnapshotMatrices, rho: f64) -> Result<BatchSolution> {
    validate_rho(rho)?;
    if rho == 1.0 {
        return batch_dmd(snaps);
    }
    let (n, k) = (snaps.n_in(), snaps.k());
    if k < n {
        return Err(DmdError::Underdetermined { pairs: k, dim: n });
    }
    let sigma = rho.sqrt();
    // column j (0-based) carries weight σ^{k−1−j}
    let weights: Vec<f64> = (0..k).map(|j| sigma.powi((k - 1 - j) as i32)).collect();
    let scale = |m: &Mat| {
        let mut s = m.clone();
        for i in 0..s.rows() {
            for (v, w) in s.row_mut(i).iter_mut().zip(&weights) {
                *v *= w;
            }
        }
        crate::kernel::flops::record((m.rows() * k) as u64);
        s
    };
    let xs = scale(&snaps.x);
    let ys = scale(&snaps.y);
    let g = gram(&xs);
    let q_tilde = mul_abt(&ys, &xs)?;
    let (g_inv, cond) = guarded_inverse(&g).map_err(|e| match e {
        DmdError::Rank { cond, .. } => {
            DmdError::Rank { cond, hint: format!("weighting by rho = {rho} leaves too few effective snapshots") }
        }
        other => other,
    })?;
    let a = matmul(&q_tilde, &g_inv)?;
    Ok(BatchSolution { a, p: g_inv.scaled(1.0 / rho), q: q_tilde.scaled(rho), cond })
}

/// Batch solve restricted to a window of exactly `w` pairs.
pub fn mini_batch_dmd(window: &[SnapshotPair], w: usize) -> Result<BatchSolution> {
    weighted_mini_batch_dmd(window, w, 1.0)
}

/// Weighted solve over a window, oldest pair first.
pub fn weighted_mini_batch_dmd(window: &[SnapshotPair], w: usize, rho: f64) -> Result<BatchSolution> {
    if window.len() != w {
        return Err(DmdError::Shape(format!("window holds {} pairs, expected {w}", window.len())));
    }
    let snaps = stack(window)?;
    if w < snaps.n_in() {
        return Err(DmdError::WindowTooSmall { w, dim: snaps.n_in() });
    }
    weighted_batch_dmd(&snaps, rho)
}
