//! Matrix products. All multiply counts are exact.

use super::flops;
use super::mat::Mat;
use crate::error::{DmdError, Result};

/// Inner product with four independent partial sums.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    flops::record(a.len() as u64);
    dot_uncounted(a, b)
}

#[inline]
pub(crate) fn dot_uncounted(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// y = A x.
pub fn matvec(a: &Mat, x: &[f64]) -> Result<Vec<f64>> {
    if a.cols() != x.len() {
        return Err(DmdError::Shape(format!(
            "matvec: {}x{} matrix with vector of length {}",
            a.rows(),
            a.cols(),
            x.len()
        )));
    }
    flops::record((a.rows() * a.cols()) as u64);
    Ok((0..a.rows()).map(|i| dot_uncounted(a.row(i), x)).collect())
}

/// Standard product C = A B. Counts `a.rows * a.cols * b.cols` multiplies.
pub fn matmul(a: &Mat, b: &Mat) -> Result<Mat> {
    if a.cols() != b.rows() {
        return Err(DmdError::Shape(format!("matmul: {}x{} times {}x{}", a.rows(), a.cols(), b.rows(), b.cols())));
    }
    let (m, inner, n) = (a.rows(), a.cols(), b.cols());
    flops::record((m * inner * n) as u64);
    let mut c = Mat::zeros(m, n);
    for i in 0..m {
        let arow = a.row(i);
        let crow = c.row_mut(i);
        for (p, &aip) in arow.iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            let brow = b.row(p);
            for (cij, bpj) in crow.iter_mut().zip(brow) {
                *cij += aip * bpj;
            }
        }
    }
    Ok(c)
}

/// C = A Bᵀ where A and B are given as rows of equal length.
///
/// This is the workhorse behind Gram and cross-Gram matrices: with snapshot
/// components stored as rows, `X Xᵀ` and `Y Xᵀ` are row-by-row dot products.
pub fn mul_abt_rows(a: &[&[f64]], b: &[&[f64]]) -> Result<Mat> {
    let len = check_rows(a, b)?;
    flops::record((a.len() * b.len() * len) as u64);
    Ok(abt_tiled(a, b, len, false))
}

/// Symmetric G = A Aᵀ from rows; only the lower triangle is computed and
/// mirrored, so the result is exactly symmetric.
pub fn gram_rows(a: &[&[f64]]) -> Result<Mat> {
    let len = check_rows(a, a)?;
    let n = a.len();
    flops::record((n * (n + 1) / 2 * len) as u64);
    let mut g = abt_tiled(a, a, len, true);
    for i in 0..n {
        for j in (i + 1)..n {
            g[(i, j)] = g[(j, i)];
        }
    }
    Ok(g)
}

/// X Xᵀ for a matrix.
pub fn gram(x: &Mat) -> Mat {
    gram_rows(&x.row_slices()).expect("rows of a matrix have equal length")
}

/// Y Xᵀ for matrices with equal column counts.
pub fn mul_abt(y: &Mat, x: &Mat) -> Result<Mat> {
    mul_abt_rows(&y.row_slices(), &x.row_slices())
}

fn check_rows(a: &[&[f64]], b: &[&[f64]]) -> Result<usize> {
    let len = a.first().or(b.first()).map_or(0, |r| r.len());
    if a.iter().chain(b).any(|r| r.len() != len) {
        return Err(DmdError::Shape("rows of differing length".into()));
    }
    Ok(len)
}

const TILE: usize = 1024;
const BLK: usize = 4;

fn abt_tiled(a: &[&[f64]], b: &[&[f64]], len: usize, lower: bool) -> Mat {
    let (m, n) = (a.len(), b.len());
    let mut c = Mat::zeros(m, n);
    let mut t0 = 0;
    while t0 < len {
        let t1 = (t0 + TILE).min(len);
        let mut i0 = 0;
        while i0 < m {
            let ib = BLK.min(m - i0);
            let jmax = if lower { (i0 + ib).min(n) } else { n };
            let mut j0 = 0;
            while j0 < jmax {
                let jb = BLK.min(jmax - j0);
                if ib == BLK && jb == BLK {
                    micro_4x4(a, b, i0, j0, t0, t1, &mut c);
                } else {
                    for i in i0..i0 + ib {
                        for j in j0..j0 + jb {
                            if lower && j > i {
                                continue;
                            }
                            c[(i, j)] += dot_uncounted(&a[i][t0..t1], &b[j][t0..t1]);
                        }
                    }
                }
                j0 += jb;
            }
            i0 += ib;
        }
        t0 = t1;
    }
    c
}

/// `a·b + c`, fused when the target supports it.
#[inline(always)]
fn madd(a: f64, b: f64, c: f64) -> f64 {
    if cfg!(target_feature = "fma") {
        a.mul_add(b, c)
    } else {
        a * b + c
    }
}

const LANES: usize = 4;

#[inline]
fn micro_4x4(a: &[&[f64]], b: &[&[f64]], i0: usize, j0: usize, t0: usize, t1: usize, c: &mut Mat) {
    let ar = [&a[i0][t0..t1], &a[i0 + 1][t0..t1], &a[i0 + 2][t0..t1], &a[i0 + 3][t0..t1]];
    let br = [&b[j0][t0..t1], &b[j0 + 1][t0..t1], &b[j0 + 2][t0..t1], &b[j0 + 3][t0..t1]];
    let len = t1 - t0;
    let body = len - len % LANES;
    let mut acc = [[[0.0f64; LANES]; 4]; 4];
    let mut t = 0;
    while t < body {
        let av: [[f64; LANES]; 4] = std::array::from_fn(|r| ar[r][t..t + LANES].try_into().unwrap());
        let bv: [[f64; LANES]; 4] = std::array::from_fn(|s| br[s][t..t + LANES].try_into().unwrap());
        for r in 0..4 {
            for s in 0..4 {
                for l in 0..LANES {
                    acc[r][s][l] = madd(av[r][l], bv[s][l], acc[r][s][l]);
                }
            }
        }
        t += LANES;
    }
    for r in 0..4 {
        for s in 0..4 {
            let h = acc[r][s];
            let mut v = (h[0] + h[1]) + (h[2] + h[3]);
            for tt in body..len {
                v = madd(ar[r][tt], br[s][tt], v);
            }
            c[(i0 + r, j0 + s)] += v;
        }
    }
}
