//! Windowed DMD: the exact solution over the `w` most recent pairs, kept
//! current by one rank-2 update per slide.
//!
//! Dropping `(x_old, y_old)` and adding `(x_new, y_new)` changes the Gram
//! matrix by `U C Uᵀ` with `U = [x_old x_new]` and `C = diag(−1, 1)`. The
//! Woodbury identity then gives
//!
//! ```text
//! Γ = (C⁻¹ + Uᵀ P U)⁻¹
//! A ← A + (V − A U) Γ Uᵀ P
//! P ← P − P U Γ Uᵀ P
//! ```
//!
//! With a forgetting factor the oldest pair carries weight `ρʷ` by the time it
//! leaves, so `C` becomes `diag(−ρʷ, 1)` and `P̂` is divided by `ρ`.

use std::collections::VecDeque;

use crate::batch::{validate_rho, weighted_mini_batch_dmd};
use crate::error::{DmdError, Result};
use crate::kernel::flops::{self, FlopCounter};
use crate::kernel::{dot, matvec, Mat};
use crate::online::{check_pair, scale_upper};
use crate::snapshots::SnapshotPair;

/// Smallest admissible `|det(C⁻¹ + Uᵀ P U)|`.
const DET_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlideReport {
    /// The 2×2 matrix `Γ`, row-major.
    pub gamma: [[f64; 2]; 2],
    /// `‖y_new − A x_new‖` under the model before the slide.
    pub prediction_error_norm: f64,
    pub multiplies: u64,
}

#[derive(Debug, Clone)]
pub struct WindowedState {
    a: Mat,
    p: Mat,
    w: usize,
    ring: VecDeque<SnapshotPair>,
    rho: f64,
    /// `−ρ^{−w}`, the first diagonal entry of `C⁻¹`.
    c_inv_old: f64,
    k: usize,
}

impl WindowedState {
    /// Solves over the first `w` pairs, oldest first.
    pub fn init_window(pairs: &[SnapshotPair], rho: f64) -> Result<Self> {
        validate_rho(rho)?;
        let w = pairs.len();
        let sol = weighted_mini_batch_dmd(pairs, w, rho)?;
        Ok(WindowedState {
            a: sol.a,
            p: sol.p,
            w,
            ring: pairs.iter().cloned().collect(),
            rho,
            c_inv_old: -1.0 / rho.powi(w as i32),
            k: w,
        })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn p(&self) -> &Mat {
        &self.p
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Pairs absorbed so far, including the initial window.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_in(&self) -> usize {
        self.p.rows()
    }

    pub fn n_out(&self) -> usize {
        self.a.rows()
    }

    /// In-window pairs, oldest first.
    pub fn window_contents(&self) -> impl ExactSizeIterator<Item = &SnapshotPair> + '_ {
        self.ring.iter()
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        matvec(&self.a, x)
    }

    /// Drops the oldest pair and absorbs `pair`. On error nothing changes.
    pub fn slide(&mut self, pair: SnapshotPair) -> Result<SlideReport> {
        let (n, n_out) = (self.n_in(), self.n_out());
        check_pair(&pair.x, &pair.y, n, n_out)?;
        let counter = FlopCounter::start();
        let old = self.ring.front().expect("window is never empty");
        let (x0, x1) = (&old.x, &pair.x);

        let pu0 = matvec(&self.p, x0)?;
        let pu1 = matvec(&self.p, x1)?;
        let au0 = matvec(&self.a, x0)?;
        let au1 = matvec(&self.a, x1)?;

        // M = C⁻¹ + Uᵀ P U, symmetric
        let m00 = self.c_inv_old + dot(x0, &pu0);
        let m01 = dot(x0, &pu1);
        let m11 = 1.0 + dot(x1, &pu1);
        let det = m00 * m11 - m01 * m01;
        flops::record(2);
        if !(det.abs() >= DET_FLOOR) || !det.is_finite() {
            return Err(DmdError::Conditioning(format!(
                "det(C^-1 + U^T P U) = {det:e}; the window after this slide would be rank deficient"
            )));
        }
        let g00 = m11 / det;
        let g01 = -m01 / det;
        let g11 = m00 / det;

        // E = V − A U, then E Γ
        let mut err_sq = 0.0;
        let mut eg0 = Vec::with_capacity(n_out);
        let mut eg1 = Vec::with_capacity(n_out);
        for i in 0..n_out {
            let e0 = old.y[i] - au0[i];
            let e1 = pair.y[i] - au1[i];
            err_sq += e1 * e1;
            eg0.push(e0 * g00 + e1 * g01);
            eg1.push(e0 * g01 + e1 * g11);
        }
        flops::record(4 * n_out as u64);

        // A += (E Γ)(P U)ᵀ
        for i in 0..n_out {
            let (a0, a1) = (eg0[i], eg1[i]);
            for ((aij, p0), p1) in self.a.row_mut(i).iter_mut().zip(&pu0).zip(&pu1) {
                *aij += a0 * p0 + a1 * p1;
            }
        }
        flops::record(2 * (n_out * n) as u64);

        // P −= (P U Γ)(P U)ᵀ, upper triangle
        let mut h0 = Vec::with_capacity(n);
        let mut h1 = Vec::with_capacity(n);
        for i in 0..n {
            h0.push(pu0[i] * g00 + pu1[i] * g01);
            h1.push(pu0[i] * g01 + pu1[i] * g11);
        }
        flops::record(4 * n as u64);
        for i in 0..n {
            let (c0, c1) = (h0[i], h1[i]);
            for ((pij, p0), p1) in self.p.row_mut(i)[i..].iter_mut().zip(&pu0[i..]).zip(&pu1[i..]) {
                *pij -= c0 * p0 + c1 * p1;
            }
        }
        flops::record((n * (n + 1)) as u64);
        if self.rho != 1.0 {
            scale_upper(&mut self.p, 1.0 / self.rho);
        }
        self.p.mirror_upper();

        self.ring.pop_front();
        self.ring.push_back(pair);
        self.k += 1;
        Ok(SlideReport {
            gamma: [[g00, g01], [g01, g11]],
            prediction_error_norm: err_sq.sqrt(),
            multiplies: counter.multiplies(),
        })
    }

    /// Slides in several pairs one at a time.
    pub fn slide_many(&mut self, pairs: impl IntoIterator<Item = SnapshotPair>) -> Result<u64> {
        let mut total = 0;
        for p in pairs {
            total += self.slide(p)?.multiplies;
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::batch::mini_batch_dmd;

    fn lcg_vec(len: usize, seed: &mut u64) -> Vec<f64> {
        (0..len)
            .map(|_| {
                *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    fn random_pairs(n: usize, count: usize, seed: u64) -> Vec<SnapshotPair> {
        let mut s = seed;
        (0..count).map(|j| SnapshotPair::new(lcg_vec(n, &mut s), lcg_vec(n, &mut s), j)).collect()
    }

    fn scalar(x: f64, y: f64, i: usize) -> SnapshotPair {
        SnapshotPair::new(vec![x], vec![y], i)
    }

    #[test]
    fn consistent_scalar_data() {
        let mut st = WindowedState::init_window(&[scalar(1.0, 2.0, 0), scalar(2.0, 4.0, 1)], 1.0).unwrap();
        st.slide(scalar(3.0, 6.0, 2)).unwrap();
        assert!((st.a()[(0, 0)] - 2.0).abs() < 1e-15);
        let xs: Vec<f64> = st.window_contents().map(|p| p.x[0]).collect();
        assert_eq!(xs, vec![2.0, 3.0]);
    }

    #[test]
    fn square_window_inverts() {
        let pairs = random_pairs(3, 3, 1);
        let st = WindowedState::init_window(&pairs, 1.0).unwrap();
        let b = mini_batch_dmd(&pairs, 3).unwrap();
        assert_eq!(st.a(), &b.a);
        for p in &pairs {
            let y = st.predict(&p.x).unwrap();
            for (a, b) in y.iter().zip(&p.y) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn no_op_slide() {
        let pairs = random_pairs(3, 8, 2);
        let mut st = WindowedState::init_window(&pairs, 1.0).unwrap();
        let (a0, p0) = (st.a().clone(), st.p().clone());
        st.slide(pairs[0].clone()).unwrap();
        assert!(st.a().rel_diff(&a0) < 1e-12);
        assert!(st.p().rel_diff(&p0) < 1e-12);
    }

    #[test]
    fn tracks_mini_batch() {
        let pairs = random_pairs(4, 116, 3);
        let w = 16;
        let mut st = WindowedState::init_window(&pairs[..w], 1.0).unwrap();
        for k in w..pairs.len() {
            let r = st.slide(pairs[k].clone()).unwrap();
            assert!(r.multiplies <= 8 * 16 + 32 * 4);
            let b = mini_batch_dmd(&pairs[k + 1 - w..=k], w).unwrap();
            assert!(st.a().rel_diff(&b.a) < 1e-9, "slide {k}");
            assert!(st.p().rel_diff(&b.p) < 1e-8);
        }
    }

    #[test]
    fn weighted_tracks_weighted_mini_batch() {
        let pairs = random_pairs(3, 80, 6);
        let (w, rho) = (12, 0.9);
        let mut st = WindowedState::init_window(&pairs[..w], rho).unwrap();
        for k in w..pairs.len() {
            st.slide(pairs[k].clone()).unwrap();
            let b = weighted_mini_batch_dmd(&pairs[k + 1 - w..=k], w, rho).unwrap();
            assert!(st.a().rel_diff(&b.a) < 1e-9, "slide {k}");
            assert!(st.p().rel_diff(&b.p) < 1e-8);
        }
    }

    #[test]
    fn bookkeeping() {
        let pairs = random_pairs(2, 12, 4);
        let mut st = WindowedState::init_window(&pairs[..6], 1.0).unwrap();
        let first: Vec<_> = st.window_contents().cloned().collect();
        assert_eq!(first, pairs[..6].to_vec());
        st.slide(pairs[6].clone()).unwrap();
        let after: Vec<_> = st.window_contents().cloned().collect();
        assert_eq!(after, pairs[1..7].to_vec());
        st.slide_many(pairs[7..12].iter().cloned()).unwrap();
        assert!(st.window_contents().all(|p| p.index >= 6));
        assert_eq!(st.k(), 12);
    }

    #[test]
    fn window_too_small() {
        let pairs = random_pairs(4, 3, 5);
        assert_eq!(WindowedState::init_window(&pairs, 1.0).unwrap_err(), DmdError::WindowTooSmall { w: 3, dim: 4 });
    }

    #[test]
    fn singular_slide_is_rejected_without_change() {
        // n=1, w=1: sliding in x=0 leaves an empty Gram matrix
        let mut st = WindowedState::init_window(&[scalar(1.0, 1.0, 0)], 1.0).unwrap();
        let a0 = st.a().clone();
        assert!(matches!(st.slide(scalar(0.0, 0.0, 1)), Err(DmdError::Conditioning(_))));
        assert_eq!(st.a(), &a0);
        assert_eq!(st.window_contents().next().unwrap().x, vec![1.0]);
    }
}
