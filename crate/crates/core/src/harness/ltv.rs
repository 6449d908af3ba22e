//! The slowly varying oscillator `ẋ = A(t) x` with
//! `A(t) = [[0, ω(t)], [−ω(t), 0]]` and `ω(t) = 1 + ε t`.
//!
//! The instantaneous eigenvalues are `±i ω(t)`, so every algorithm's
//! `Im(λ)` can be compared against a known curve.

use crate::batch::{batch_dmd, mini_batch_dmd};
use crate::error::{DmdError, Result};
use crate::kernel::Mat;
use crate::online::OnlineState;
use crate::snapshots::{pair_trajectory, stack};
use crate::spectral::{spectrum_of, TrackRecord};
use crate::windowed::WindowedState;

#[derive(Debug, Clone, PartialEq)]
pub struct LtvConfig {
    pub epsilon: f64,
    pub dt: f64,
    pub t_end: f64,
    pub w: usize,
    pub rho_list: Vec<f64>,
    pub x0: [f64; 2],
    /// RK4 steps per sampling interval.
    pub substeps: usize,
}

impl Default for LtvConfig {
    fn default() -> Self {
        LtvConfig {
            epsilon: 0.1,
            dt: 0.1,
            t_end: 10.0,
            w: 10,
            rho_list: vec![1.0, 0.95, 0.8],
            x0: [1.0, 0.0],
            substeps: 10,
        }
    }
}

impl LtvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) {
            return Err(DmdError::Config(format!("epsilon must be nonnegative, got {}", self.epsilon)));
        }
        if !(self.dt > 0.0) || !(self.t_end > 0.0) {
            return Err(DmdError::Config("dt and t_end must be positive".into()));
        }
        if self.w < 2 {
            return Err(DmdError::Config(format!("window must be at least 2, got {}", self.w)));
        }
        if self.w >= self.samples() {
            return Err(DmdError::Config(format!(
                "window w={} leaves no steps to track with {} pairs",
                self.w,
                self.samples()
            )));
        }
        if self.substeps == 0 {
            return Err(DmdError::Config("substeps must be at least 1".into()));
        }
        if let Some(r) = self.rho_list.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return Err(DmdError::Config(format!("rho must lie in (0, 1], got {r}")));
        }
        Ok(())
    }

    /// Number of sampling intervals, which is also the number of pairs.
    pub fn samples(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn omega(&self, t: f64) -> f64 {
        1.0 + self.epsilon * t
    }
}

pub const BATCH: &str = "batch";
pub const MINI_BATCH: &str = "mini-batch";
pub const WINDOWED: &str = "windowed";

pub fn online_label(rho: f64) -> String {
    format!("online(rho={rho})")
}

fn rhs(cfg: &LtvConfig, t: f64, x: [f64; 2]) -> [f64; 2] {
    let w = cfg.omega(t);
    [w * x[1], -w * x[0]]
}

/// States at `t = j Δt` for `j = 0..=samples`, by fixed-step RK4.
pub fn ltv_trajectory(cfg: &LtvConfig) -> Vec<Vec<f64>> {
    let h = cfg.dt / cfg.substeps as f64;
    let mut x = cfg.x0;
    let mut out = vec![x.to_vec()];
    for j in 0..cfg.samples() {
        for s in 0..cfg.substeps {
            let t = j as f64 * cfg.dt + s as f64 * h;
            let k1 = rhs(cfg, t, x);
            let k2 = rhs(cfg, t + h / 2.0, [x[0] + h / 2.0 * k1[0], x[1] + h / 2.0 * k1[1]]);
            let k3 = rhs(cfg, t + h / 2.0, [x[0] + h / 2.0 * k2[0], x[1] + h / 2.0 * k2[1]]);
            let k4 = rhs(cfg, t + h, [x[0] + h * k3[0], x[1] + h * k3[1]]);
            for i in 0..2 {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        out.push(x.to_vec());
    }
    out
}

/// Runs batch, mini-batch, online for each `ρ`, and windowed DMD over the
/// trajectory. Rows start at step `w + 1`, where a step counts absorbed pairs
/// and `time = step · Δt`.
pub fn run_ltv(cfg: &LtvConfig) -> Result<TrackRecord> {
    cfg.validate()?;
    let states = ltv_trajectory(cfg);
    let pairs = pair_trajectory(&states)?;
    let w = cfg.w;
    let head = stack(&pairs[..w])?;
    let mut online: Vec<(String, OnlineState)> = cfg
        .rho_list
        .iter()
        .map(|&rho| Ok((online_label(rho), OnlineState::init_exact(&head, rho)?)))
        .collect::<Result<_>>()?;
    let mut windowed = WindowedState::init_window(&pairs[..w], 1.0)?;

    let mut record = TrackRecord::new();
    let push = |record: &mut TrackRecord, step: usize, a: &Mat, label: &str, reference: &[f64]| -> Result<()> {
        let spec = spectrum_of(a, cfg.dt, Some(reference))?;
        record.append_track(step, &spec, label, 1);
        Ok(())
    };
    for k in w..pairs.len() {
        let step = k + 1;
        let pair = &pairs[k];
        let reference = pair.y.as_slice();
        let batch = batch_dmd(&stack(&pairs[..=k])?)?;
        push(&mut record, step, &batch.a, BATCH, reference)?;
        let mini = mini_batch_dmd(&pairs[k + 1 - w..=k], w)?;
        push(&mut record, step, &mini.a, MINI_BATCH, reference)?;
        for (label, st) in &mut online {
            st.update(pair)?;
            push(&mut record, step, st.a(), label, reference)?;
        }
        windowed.slide(pair.clone())?;
        push(&mut record, step, windowed.a(), WINDOWED, reference)?;
    }
    Ok(record)
}

/// Mean `|Im(λ) − ω(t)|` over rows of `label` with `t ∈ [t0, t1]`.
pub fn mean_tracking_error(cfg: &LtvConfig, record: &TrackRecord, label: &str, t0: f64, t1: f64) -> f64 {
    let errs: Vec<f64> = record
        .for_algorithm(label)
        .filter(|r| r.time >= t0 - 1e-9 && r.time <= t1 + 1e-9)
        .map(|r| (r.im_lambda - cfg.omega(r.time)).abs())
        .collect();
    errs.iter().sum::<f64>() / errs.len() as f64
}
