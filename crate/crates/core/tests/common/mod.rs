#![allow(dead_code)]

use odmd::kernel::Mat;
use odmd::snapshots::{stack, SnapshotMatrices, SnapshotPair};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| normal(rng)).collect()
}

pub fn gaussian_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| normal(rng))
}

/// Pairs with Gaussian `x` and Gaussian `y`, unrelated to each other.
pub fn noise_pairs(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<SnapshotPair> {
    (0..k).map(|j| SnapshotPair::new(gaussian_vec(rng, n), gaussian_vec(rng, n), j)).collect()
}

/// Pairs with Gaussian `x` and `y = A x` exactly.
pub fn linear_pairs(rng: &mut ChaCha8Rng, a: &Mat, k: usize) -> Vec<SnapshotPair> {
    (0..k)
        .map(|j| {
            let x = gaussian_vec(rng, a.cols());
            let y = odmd::kernel::matvec(a, &x).unwrap();
            SnapshotPair::new(x, y, j)
        })
        .collect()
}

pub fn matrices(pairs: &[SnapshotPair]) -> SnapshotMatrices {
    stack(pairs).unwrap()
}

/// Direct oracle: `Y Xᵀ (X Xᵀ)⁻¹` by Gauss-Jordan elimination on the
/// transposed normal equations, independent of the library's Cholesky.
pub fn lstsq_oracle(pairs: &[SnapshotPair], weights: &[f64]) -> Mat {
    let n = pairs[0].x.len();
    let n_out = pairs[0].y.len();
    let mut g = vec![vec![0.0; n]; n];
    let mut q = vec![vec![0.0; n_out]; n];
    for (p, &wt) in pairs.iter().zip(weights) {
        for i in 0..n {
            for j in 0..n {
                g[i][j] += wt * p.x[i] * p.x[j];
            }
            for j in 0..n_out {
                q[i][j] += wt * p.x[i] * p.y[j];
            }
        }
    }
    // solve G Aᵀ = Qᵀ
    for c in 0..n {
        let piv = (c..n).max_by(|&a, &b| g[a][c].abs().total_cmp(&g[b][c].abs())).unwrap();
        g.swap(c, piv);
        q.swap(c, piv);
        let d = g[c][c];
        for j in 0..n {
            g[c][j] /= d;
        }
        for j in 0..n_out {
            q[c][j] /= d;
        }
        for r in 0..n {
            if r != c {
                let f = g[r][c];
                for j in 0..n {
                    g[r][j] -= f * g[c][j];
                }
                for j in 0..n_out {
                    q[r][j] -= f * q[c][j];
                }
            }
        }
    }
    Mat::from_fn(n_out, n, |i, j| q[j][i])
}

/// Weights `ρ^{k−1−j}` for `k` pairs, oldest first.
pub fn forgetting_weights(rho: f64, k: usize) -> Vec<f64> {
    (0..k).map(|j| rho.powi((k - 1 - j) as i32)).collect()
}
