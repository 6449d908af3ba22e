//! Timing and multiply-count benchmark over random linear data.
//!
//! Each cell draws a random `n × n` matrix `A` and `m` random states `x_j`
//! with standard normal entries and forms pairs `(x_j, A x_j)`. All algorithms
//! in a cell see the same data.

use std::fmt;
use std::hint::black_box;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::batch::batch_dmd_rows;
use crate::error::{DmdError, Result};
use crate::kernel::{FlopCounter, Mat};
use crate::online::OnlineState;
use crate::snapshots::{SnapshotMatrices, SnapshotPair};
use crate::windowed::WindowedState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    /// The DMD matrix is needed only after the last snapshot.
    FinalOnly,
    /// The DMD matrix is needed after every snapshot.
    EveryStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// One solve over all pairs.
    Standard,
    /// A fresh solve over all pairs seen so far, every step from `m₀ = n`.
    Batch,
    /// A fresh solve over the last `w` pairs, every step.
    MiniBatch,
    Online,
    Windowed,
}

impl FromStr for Task {
    type Err = DmdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "final-only" => Ok(Task::FinalOnly),
            "every-step" => Ok(Task::EveryStep),
            _ => Err(DmdError::Config(format!("unknown task '{s}' (expected final-only or every-step)"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::FinalOnly => "final-only",
            Task::EveryStep => "every-step",
        })
    }
}

impl FromStr for Algorithm {
    type Err = DmdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Algorithm::Standard),
            "batch" => Ok(Algorithm::Batch),
            "mini-batch" => Ok(Algorithm::MiniBatch),
            "online" => Ok(Algorithm::Online),
            "windowed" => Ok(Algorithm::Windowed),
            _ => Err(DmdError::Config(format!(
                "unknown algorithm '{s}' (expected standard, batch, mini-batch, online or windowed)"
            ))),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Standard => "standard",
            Algorithm::Batch => "batch",
            Algorithm::MiniBatch => "mini-batch",
            Algorithm::Online => "online",
            Algorithm::Windowed => "windowed",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub n_list: Vec<usize>,
    pub m: usize,
    pub w: usize,
    pub task: Task,
    pub algorithms: Vec<Algorithm>,
    pub seed: u64,
    /// Every-step batch cells above these sizes are skipped.
    pub batch_max_n: usize,
    pub batch_max_m: usize,
    /// Timed runs per cell; the fastest is reported.
    pub repeats: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            n_list: (1..=10).map(|e| 1usize << e).collect(),
            m: 10_000,
            w: 2048,
            task: Task::EveryStep,
            algorithms: default_algorithms(Task::EveryStep),
            seed: 0,
            batch_max_n: 256,
            batch_max_m: 10_000,
            repeats: 1,
        }
    }
}

pub fn default_algorithms(task: Task) -> Vec<Algorithm> {
    match task {
        Task::FinalOnly => vec![Algorithm::Standard, Algorithm::Online],
        Task::EveryStep => vec![Algorithm::Batch, Algorithm::MiniBatch, Algorithm::Online, Algorithm::Windowed],
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return Err(DmdError::Config("state dimensions must be at least 1".into()));
        }
        if self.w >= self.m {
            return Err(DmdError::Config(format!("window w={} must be smaller than m={}", self.w, self.m)));
        }
        if let Some(n) = self.n_list.iter().find(|&&n| n > self.w) {
            return Err(DmdError::Config(format!("state dimension {n} exceeds the window w={}", self.w)));
        }
        if self.repeats == 0 {
            return Err(DmdError::Config("repeats must be at least 1".into()));
        }
        Ok(())
    }

    fn skips(&self, alg: Algorithm, n: usize) -> bool {
        alg == Algorithm::Batch && self.task == Task::EveryStep && (n > self.batch_max_n || self.m > self.batch_max_m)
    }
}

/// One line of the benchmark summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub algorithm: Algorithm,
    pub n: usize,
    pub m: usize,
    pub w: usize,
    pub task: Task,
    /// Everything, initialization included.
    pub total_multiplies: u64,
    /// `(total − init) / steps`.
    pub per_step_multiplies: f64,
    pub init_multiplies: u64,
    pub wall_seconds: f64,
    pub per_step_seconds: f64,
    /// Snapshot pairs held at the end of the run.
    pub stored_pairs: usize,
    pub seed: u64,
    /// DMD matrices produced after initialization.
    pub steps: usize,
    /// Steps at which the solve was rejected by the rank guard.
    pub rank_failures: usize,
}

#[derive(Debug, Clone, Default)]
pub struct BenchResult {
    pub records: Vec<BenchRecord>,
    /// Cells left out by the batch size cap.
    pub skipped: Vec<(Algorithm, usize)>,
}

impl BenchResult {
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.records {
            let line = serde_json::to_string(r).map_err(|e| DmdError::Io(e.to_string()))?;
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn get(&self, alg: Algorithm, n: usize) -> Option<&BenchRecord> {
        self.records.iter().find(|r| r.algorithm == alg && r.n == n)
    }
}

/// Random data for one cell, stored by component so solves over any range of
/// pairs can borrow it.
#[derive(Debug, Clone)]
pub struct BenchData {
    pub a_true: Mat,
    /// `x_rows[i][j]` is component `i` of `x_j`.
    pub x_rows: Vec<Vec<f64>>,
    pub y_rows: Vec<Vec<f64>>,
}

impl BenchData {
    pub fn generate(n: usize, m: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
        let a_true = Mat::from_fn(n, n, |_, _| draw());
        let mut x_rows = vec![vec![0.0; m]; n];
        let mut y_rows = vec![vec![0.0; m]; n];
        let mut x = vec![0.0; n];
        for j in 0..m {
            for (i, xi) in x.iter_mut().enumerate() {
                *xi = draw();
                x_rows[i][j] = *xi;
            }
            for (i, row) in y_rows.iter_mut().enumerate() {
                row[j] = a_true.row(i).iter().zip(&x).map(|(a, b)| a * b).sum();
            }
        }
        BenchData { a_true, x_rows, y_rows }
    }

    pub fn n(&self) -> usize {
        self.x_rows.len()
    }

    pub fn m(&self) -> usize {
        self.x_rows.first().map_or(0, |r| r.len())
    }

    pub fn pair(&self, j: usize) -> SnapshotPair {
        SnapshotPair::new(self.x_rows.iter().map(|r| r[j]).collect(), self.y_rows.iter().map(|r| r[j]).collect(), j)
    }

    fn fill_pair(&self, j: usize, x: &mut [f64], y: &mut [f64]) {
        for (i, r) in self.x_rows.iter().enumerate() {
            x[i] = r[j];
        }
        for (i, r) in self.y_rows.iter().enumerate() {
            y[i] = r[j];
        }
    }

    fn rows(&self, from: usize, to: usize) -> (Vec<&[f64]>, Vec<&[f64]>) {
        (self.x_rows.iter().map(|r| &r[from..to]).collect(), self.y_rows.iter().map(|r| &r[from..to]).collect())
    }

    fn matrices(&self, from: usize, to: usize) -> Result<SnapshotMatrices> {
        let (x, y) = self.rows(from, to);
        let k = to - from;
        SnapshotMatrices::new(Mat::from_vec(x.len(), k, x.concat())?, Mat::from_vec(y.len(), k, y.concat())?)
    }
}

/// Outcome of one (algorithm, n) cell.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub record: BenchRecord,
    /// The DMD matrix after the last pair, when the final solve succeeded.
    pub final_a: Option<Mat>,
}

struct Timed {
    total: u64,
    init: u64,
    wall: f64,
    loop_wall: f64,
    steps: usize,
    stored: usize,
    rank_failures: usize,
    final_a: Option<Mat>,
}

fn solve_counting(data: &BenchData, from: usize, to: usize, failures: &mut usize) -> Result<Option<Mat>> {
    let (x, y) = data.rows(from, to);
    match batch_dmd_rows(&x, &y) {
        Ok(sol) => Ok(Some(black_box(sol.a))),
        Err(DmdError::Rank { .. }) => {
            *failures += 1;
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

fn execute(alg: Algorithm, task: Task, data: &BenchData, w: usize) -> Result<Timed> {
    let (n, m) = (data.n(), data.m());
    let counter = FlopCounter::start();
    let start = Instant::now();
    let mut failures = 0;
    let repeated = task == Task::EveryStep;
    let mut out = match alg {
        Algorithm::Standard => {
            let a = solve_counting(data, 0, m, &mut failures)?;
            Timed { total: 0, init: 0, wall: 0.0, loop_wall: 0.0, steps: 1, stored: m, rank_failures: 0, final_a: a }
        }
        Algorithm::Batch | Algorithm::MiniBatch => {
            let window = alg == Algorithm::MiniBatch;
            let first = if !repeated {
                m
            } else if window {
                w
            } else {
                n
            };
            let mut last = None;
            for k in first..=m {
                let from = if window { k - w } else { 0 };
                last = solve_counting(data, from, k, &mut failures)?;
            }
            let stored = if window { w } else { m };
            Timed {
                total: 0,
                init: 0,
                wall: 0.0,
                loop_wall: 0.0,
                steps: m - first + 1,
                stored,
                rank_failures: 0,
                final_a: last,
            }
        }
        Algorithm::Online => {
            let mut st = OnlineState::init_exact(&data.matrices(0, w)?, 1.0)?;
            let init = counter.multiplies();
            let loop_start = Instant::now();
            let (mut x, mut y) = (vec![0.0; n], vec![0.0; n]);
            for j in w..m {
                data.fill_pair(j, &mut x, &mut y);
                st.update_xy(&x, &y)?;
            }
            let loop_wall = loop_start.elapsed().as_secs_f64();
            Timed {
                total: 0,
                init,
                wall: 0.0,
                loop_wall,
                steps: m - w,
                stored: 0,
                rank_failures: 0,
                final_a: Some(st.into_a()),
            }
        }
        Algorithm::Windowed => {
            let head: Vec<SnapshotPair> = (0..w).map(|j| data.pair(j)).collect();
            let mut st = WindowedState::init_window(&head, 1.0)?;
            let init = counter.multiplies();
            let loop_start = Instant::now();
            for j in w..m {
                st.slide(data.pair(j))?;
            }
            let loop_wall = loop_start.elapsed().as_secs_f64();
            Timed {
                total: 0,
                init,
                wall: 0.0,
                loop_wall,
                steps: m - w,
                stored: w,
                rank_failures: 0,
                final_a: Some(st.a().clone()),
            }
        }
    };
    out.wall = start.elapsed().as_secs_f64();
    if out.loop_wall == 0.0 {
        out.loop_wall = out.wall;
    }
    out.total = counter.multiplies();
    out.rank_failures = failures;
    Ok(out)
}

/// Runs one cell on pre-generated data, keeping the fastest of `repeats` runs.
pub fn run_cell(cfg: &BenchConfig, alg: Algorithm, data: &BenchData) -> Result<CellOutcome> {
    let mut best: Option<Timed> = None;
    for _ in 0..cfg.repeats.max(1) {
        let t = execute(alg, cfg.task, data, cfg.w)?;
        if let Some(b) = &best {
            debug_assert_eq!(b.total, t.total, "multiply counts must not vary between runs");
        }
        if best.as_ref().is_none_or(|b| t.wall < b.wall) {
            best = Some(t);
        }
    }
    let t = best.expect("at least one run");
    let per_step = (t.total - t.init) as f64 / t.steps as f64;
    Ok(CellOutcome {
        record: BenchRecord {
            algorithm: alg,
            n: data.n(),
            m: data.m(),
            w: cfg.w,
            task: cfg.task,
            total_multiplies: t.total,
            per_step_multiplies: per_step,
            init_multiplies: t.init,
            wall_seconds: t.wall,
            per_step_seconds: t.loop_wall / t.steps as f64,
            stored_pairs: t.stored,
            seed: cfg.seed,
            steps: t.steps,
            rank_failures: t.rank_failures,
        },
        final_a: t.final_a,
    })
}

/// Runs every (algorithm, n) cell of the configuration.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchResult> {
    run_benchmark_with(cfg, |_| {})
}

/// As [`run_benchmark`], calling `on_record` as each cell finishes.
pub fn run_benchmark_with(cfg: &BenchConfig, mut on_record: impl FnMut(&BenchRecord)) -> Result<BenchResult> {
    cfg.validate()?;
    let mut result = BenchResult::default();
    for &n in &cfg.n_list {
        let data = BenchData::generate(n, cfg.m, cfg.seed);
        for &alg in &cfg.algorithms {
            if cfg.skips(alg, n) {
                result.skipped.push((alg, n));
                continue;
            }
            let cell = run_cell(cfg, alg, &data)?;
            on_record(&cell.record);
            result.records.push(cell.record);
        }
    }
    Ok(result)
}
