//! Online DMD: exact rank-1 updates of `(A, P)` as pairs arrive.
//!
//! With `P = (X Xᵀ)⁻¹`, absorbing a pair `(x, y)` costs two matrix-vector
//! products and two outer products:
//!
//! ```text
//! γ = 1 / (1 + xᵀ P x)
//! A ← A + γ (y − A x) (P x)ᵀ
//! P ← P − γ (P x)(P x)ᵀ
//! ```
//!
//! With a forgetting factor `ρ < 1` the state carries `P̂ = P/ρ` and the last
//! step is additionally divided by `ρ`.

use crate::batch::{validate_rho, weighted_batch_dmd};
use crate::error::{DmdError, Result};
use crate::kernel::flops::{self, FlopCounter};
use crate::kernel::{cond_estimate_spd, matvec, Mat};
use crate::snapshots::{SnapshotMatrices, SnapshotPair};

/// Default `α` for [`OnlineState::init_regularized`].
pub const DEFAULT_ALPHA: f64 = 1e10;

/// Smallest admissible `1 + xᵀ P x`.
const DENOM_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Initialization {
    Exact,
    Regularized { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateReport {
    pub gamma: f64,
    /// `‖y − A x‖` under the model before the update.
    pub prediction_error_norm: f64,
    pub multiplies: u64,
}

#[derive(Debug, Clone)]
pub struct OnlineState {
    a: Mat,
    p: Mat,
    rho: f64,
    k: usize,
    initialized_by: Initialization,
}

impl OnlineState {
    /// Initializes from a batch solve over at least `n` pairs.
    pub fn init_exact(snaps: &SnapshotMatrices, rho: f64) -> Result<Self> {
        validate_rho(rho)?;
        let sol = weighted_batch_dmd(snaps, rho).map_err(|e| match e {
            DmdError::Rank { cond, hint } => {
                DmdError::Rank { cond, hint: format!("{hint}; collect more snapshots before initializing") }
            }
            other => other,
        })?;
        Ok(OnlineState { a: sol.a, p: sol.p, rho, k: snaps.k(), initialized_by: Initialization::Exact })
    }

    /// `A₀ = 0`, `P₀ = α I`. Converges to the exact solution as `α → ∞`.
    pub fn init_regularized(n_in: usize, n_out: usize, alpha: f64, rho: f64) -> Result<Self> {
        validate_rho(rho)?;
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(DmdError::Parameter(format!("alpha must be positive, got {alpha}")));
        }
        if n_in == 0 || n_out == 0 {
            return Err(DmdError::Parameter("dimensions must be at least 1".into()));
        }
        let mut p = Mat::zeros(n_in, n_in);
        for i in 0..n_in {
            p[(i, i)] = alpha;
        }
        Ok(OnlineState {
            a: Mat::zeros(n_out, n_in),
            p,
            rho,
            k: 0,
            initialized_by: Initialization::Regularized { alpha },
        })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    /// The inverse Gram matrix (`P̂` when `ρ < 1`).
    pub fn p(&self) -> &Mat {
        &self.p
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Pairs absorbed so far, including those used to initialize.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn initialized_by(&self) -> Initialization {
        self.initialized_by
    }

    pub fn n_in(&self) -> usize {
        self.p.rows()
    }

    pub fn n_out(&self) -> usize {
        self.a.rows()
    }

    pub fn into_a(self) -> Mat {
        self.a
    }

    /// Absorbs one pair. On error the state is left untouched.
    pub fn update(&mut self, pair: &SnapshotPair) -> Result<UpdateReport> {
        self.update_xy(&pair.x, &pair.y)
    }

    pub fn update_xy(&mut self, x: &[f64], y: &[f64]) -> Result<UpdateReport> {
        let (n, n_out) = (self.n_in(), self.n_out());
        check_pair(x, y, n, n_out)?;
        let counter = FlopCounter::start();

        let px = matvec(&self.p, x)?;
        let ax = matvec(&self.a, x)?;
        let denom = 1.0 + crate::kernel::dot(x, &px);
        if !(denom >= DENOM_FLOOR) || !denom.is_finite() {
            return Err(DmdError::Conditioning(format!("1 + x^T P x = {denom:e}")));
        }
        let gamma = 1.0 / denom;

        let mut err_sq = 0.0;
        let scaled_err: Vec<f64> = y
            .iter()
            .zip(&ax)
            .map(|(yi, axi)| {
                let e = yi - axi;
                err_sq += e * e;
                gamma * e
            })
            .collect();
        flops::record(n_out as u64);
        rank1_add(&mut self.a, &scaled_err, &px);

        let g: Vec<f64> = px.iter().map(|v| gamma * v).collect();
        flops::record(n as u64);
        sym_rank1_sub(&mut self.p, &g, &px);
        if self.rho != 1.0 {
            scale_upper(&mut self.p, 1.0 / self.rho);
        }
        self.p.mirror_upper();
        self.k += 1;

        Ok(UpdateReport { gamma, prediction_error_norm: err_sq.sqrt(), multiplies: counter.multiplies() })
    }

    /// `A x`.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        matvec(&self.a, x)
    }

    /// Condition estimate of `P`; grows when the stream stops exciting some
    /// direction. The state is never reset automatically.
    pub fn p_condition(&self) -> f64 {
        cond_estimate_spd(&self.p)
    }
}

pub(crate) fn check_pair(x: &[f64], y: &[f64], n: usize, n_out: usize) -> Result<()> {
    if x.len() != n || y.len() != n_out {
        return Err(DmdError::Shape(format!(
            "pair has dimensions ({}, {}), model expects ({n}, {n_out})",
            x.len(),
            y.len()
        )));
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(DmdError::Data(format!("x[{i}]")));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(DmdError::Data(format!("y[{i}]")));
    }
    Ok(())
}

/// `M += u vᵀ`.
pub(crate) fn rank1_add(m: &mut Mat, u: &[f64], v: &[f64]) {
    for (i, ui) in u.iter().enumerate() {
        if *ui == 0.0 {
            continue;
        }
        for (mij, vj) in m.row_mut(i).iter_mut().zip(v) {
            *mij += ui * vj;
        }
    }
    flops::record((u.len() * v.len()) as u64);
}

/// Upper triangle of `P −= g hᵀ`; the caller mirrors.
pub(crate) fn sym_rank1_sub(p: &mut Mat, g: &[f64], h: &[f64]) {
    let n = p.rows();
    for i in 0..n {
        let gi = g[i];
        for (pij, hj) in p.row_mut(i)[i..].iter_mut().zip(&h[i..]) {
            *pij -= gi * hj;
        }
    }
    flops::record((n * (n + 1) / 2) as u64);
}

pub(crate) fn scale_upper(p: &mut Mat, s: f64) {
    let n = p.rows();
    for i in 0..n {
        for v in &mut p.row_mut(i)[i..] {
            *v *= s;
        }
    }
    flops::record((n * (n + 1) / 2) as u64);
}

/// `ρ = 2^{−1/m}`: a weight that halves every `m` samples.
pub fn half_life_to_rho(m_half: f64) -> Result<f64> {
    if !(m_half > 0.0) {
        return Err(DmdError::Parameter(format!("half-life must be positive, got {m_half}")));
    }
    Ok((-1.0 / m_half).exp2())
}
