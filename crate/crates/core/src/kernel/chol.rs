//! Cholesky factorization and the SPD helpers built on it.

use super::flops;
use super::mat::Mat;
use super::products::dot_uncounted;
use crate::error::{DmdError, Result};

/// Iterations used by the power / inverse-power condition estimate.
const COND_ITERS: usize = 30;

/// Lower-triangular factor L with S = L Lᵀ.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Mat,
}

impl Cholesky {
    pub fn factor(s: &Mat) -> Result<Self> {
        if !s.is_square() {
            return Err(DmdError::Shape(format!("cholesky of {}x{} matrix", s.rows(), s.cols())));
        }
        let scale = s.frobenius_norm();
        if s.symmetry_residual() > 1e-10 * scale {
            return Err(DmdError::Parameter("matrix is not symmetric".into()));
        }
        let n = s.rows();
        let mut l = Mat::zeros(n, n);
        let mut count = 0u64;
        for j in 0..n {
            let (head, tail) = l.as_mut_slice().split_at_mut(j * n + n);
            let lj = &head[j * n..j * n + j];
            let d = s[(j, j)] - dot_uncounted(lj, lj);
            count += j as u64;
            if d <= 0.0 || !d.is_finite() {
                flops::record(count);
                return Err(DmdError::Rank { cond: f64::INFINITY, hint: format!("nonpositive pivot at column {j}") });
            }
            let ljj = d.sqrt();
            head[j * n + j] = ljj;
            let lj = &head[j * n..j * n + j];
            for i in (j + 1)..n {
                let row = &mut tail[(i - j - 1) * n..(i - j) * n];
                let v = (s[(i, j)] - dot_uncounted(&row[..j], lj)) / ljj;
                row[j] = v;
            }
            count += ((n - j - 1) * j) as u64;
        }
        flops::record(count);
        Ok(Cholesky { l })
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    pub fn factor_l(&self) -> &Mat {
        &self.l
    }

    /// Solves S Z = B for a block of right-hand sides.
    pub fn solve(&self, b: &Mat) -> Result<Mat> {
        let n = self.dim();
        if b.rows() != n {
            return Err(DmdError::Shape(format!("solve: system of order {n} with {} rhs rows", b.rows())));
        }
        let r = b.cols();
        let mut z = b.clone();
        // forward: L Y = B, row-wise over the block
        for i in 0..n {
            for j in 0..i {
                let lij = self.l[(i, j)];
                if lij == 0.0 {
                    continue;
                }
                let (top, rest) = z.as_mut_slice().split_at_mut(i * r);
                let yj = &top[j * r..(j + 1) * r];
                for (zi, y) in rest[..r].iter_mut().zip(yj) {
                    *zi -= lij * y;
                }
            }
            let inv = self.l[(i, i)];
            for v in z.row_mut(i) {
                *v /= inv;
            }
        }
        // backward: Lᵀ Z = Y
        for i in (0..n).rev() {
            for j in (i + 1)..n {
                let lji = self.l[(j, i)];
                if lji == 0.0 {
                    continue;
                }
                let (top, rest) = z.as_mut_slice().split_at_mut(j * r);
                let zj = &rest[..r];
                for (zi, v) in top[i * r..(i + 1) * r].iter_mut().zip(zj) {
                    *zi -= lji * v;
                }
            }
            let inv = self.l[(i, i)];
            for v in z.row_mut(i) {
                *v /= inv;
            }
        }
        flops::record((n * n.saturating_sub(1) * r) as u64);
        Ok(z)
    }

    pub fn solve_vec(&self, b: &[f64]) -> Result<Vec<f64>> {
        let m = Mat::from_vec(b.len(), 1, b.to_vec())?;
        Ok(self.solve(&m)?.into_vec())
    }

    /// S⁻¹, exactly symmetric.
    pub fn inverse(&self) -> Mat {
        let mut p = self.solve(&Mat::identity(self.dim())).expect("identity has matching rows");
        p.mirror_upper();
        p
    }

    /// Estimate of λ_max / λ_min for the factored matrix.
    pub fn cond_estimate(&self, s: &Mat) -> f64 {
        let n = self.dim();
        if n == 0 {
            return 1.0;
        }
        let max_diag = (0..n).map(|i| s[(i, i)]).fold(f64::MIN, f64::max);
        let min_diag = (0..n).map(|i| s[(i, i)]).fold(f64::MAX, f64::min);

        let start: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64) / (n as f64)).collect();

        // power iteration for λ_max
        let mut v = normalized(&start);
        let mut lam_max = max_diag;
        for _ in 0..COND_ITERS {
            let w: Vec<f64> = (0..n).map(|i| dot_uncounted(s.row(i), &v)).collect();
            let rq = dot_uncounted(&v, &w);
            lam_max = lam_max.max(rq);
            let norm = dot_uncounted(&w, &w).sqrt();
            if norm == 0.0 {
                break;
            }
            v = w.iter().map(|x| x / norm).collect();
        }

        // inverse iteration for λ_min
        let mut v = normalized(&start);
        let mut lam_min = min_diag;
        for _ in 0..COND_ITERS {
            let w = match self.solve_vec(&v) {
                Ok(w) => w,
                Err(_) => return f64::INFINITY,
            };
            let rq = dot_uncounted(&v, &w);
            if rq > 0.0 {
                lam_min = lam_min.min(1.0 / rq);
            }
            let norm = dot_uncounted(&w, &w).sqrt();
            if norm == 0.0 || !norm.is_finite() {
                break;
            }
            v = w.iter().map(|x| x / norm).collect();
        }
        flops::record((2 * COND_ITERS * n * n) as u64);
        if lam_min <= 0.0 {
            f64::INFINITY
        } else {
            lam_max / lam_min
        }
    }
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let norm = dot_uncounted(v, v).sqrt();
    v.iter().map(|x| x / norm).collect()
}

/// Solves S Z = B for symmetric positive definite S.
pub fn solve_spd(s: &Mat, b: &Mat) -> Result<Mat> {
    Cholesky::factor(s)?.solve(b)
}

/// Condition number estimate of a symmetric matrix; `+inf` when it is not
/// positive definite.
pub fn cond_estimate_spd(s: &Mat) -> f64 {
    match Cholesky::factor(s) {
        Ok(c) => c.cond_estimate(s),
        Err(_) => f64::INFINITY,
    }
}
