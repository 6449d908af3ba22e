//! Dense real-matrix primitives: storage, products, SPD solves, the
//! pseudoinverse of full-row-rank matrices, and a nonsymmetric eigensolver.

mod chol;
mod eig;
pub mod flops;
mod mat;
mod products;

pub use chol::{cond_estimate_spd, solve_spd, Cholesky};
pub use eig::{eig, EigDecomp};
pub use flops::{measure, FlopCounter};
pub use mat::Mat;
pub use products::{dot, gram, gram_rows, matmul, matvec, mul_abt, mul_abt_rows};

use crate::error::{DmdError, Result};

/// Gram matrices with condition estimates above this are rejected.
pub const COND_LIMIT: f64 = 1e12;

/// X⁺ = Xᵀ (X Xᵀ)⁻¹ for a wide matrix of full row rank.
pub fn pinv_full_row_rank(x: &Mat) -> Result<Mat> {
    if x.rows() > x.cols() {
        return Err(DmdError::Underdetermined { pairs: x.cols(), dim: x.rows() });
    }
    let g = gram(x);
    let chol = Cholesky::factor(&g).map_err(|e| match e {
        DmdError::Rank { cond, .. } => DmdError::Rank { cond, hint: "X X^T is singular".into() },
        other => other,
    })?;
    let cond = chol.cond_estimate(&g);
    if cond > COND_LIMIT {
        return Err(DmdError::Rank { cond, hint: "X does not have full row rank".into() });
    }
    // X⁺ᵀ = G⁻¹ X, so X⁺ is its transpose
    Ok(chol.solve(x)?.transpose())
}
