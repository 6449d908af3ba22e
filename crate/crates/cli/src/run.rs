//! The `run` subcommand: stream a snapshot file through one algorithm and
//! write the ranked spectrum after every step.

use std::collections::VecDeque;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use odmd::batch::{batch_dmd, mini_batch_dmd, weighted_batch_dmd, weighted_mini_batch_dmd};
use odmd::kernel::Mat;
use odmd::online::{OnlineState, DEFAULT_ALPHA};
use odmd::snapshots::{open_stream, stack, Pairing, SnapshotPair, StreamHeader};
use odmd::spectral::{spectrum_of, track_rows, TRACK_HEADER};
use odmd::windowed::WindowedState;
use odmd::{DmdError, Result};

use crate::{is_stdio, open_input, open_output};

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RunAlgorithm {
    Batch,
    MiniBatch,
    Online,
    Windowed,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitKind {
    Exact,
    Regularized,
}

#[derive(Args)]
pub struct RunArgs {
    #[arg(long, value_enum)]
    algorithm: RunAlgorithm,
    /// Forgetting factor in (0, 1].
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    /// Window length, required for mini-batch and windowed.
    #[arg(long)]
    w: Option<usize>,
    /// Online initialization.
    #[arg(long, value_enum, default_value = "exact")]
    init: InitKind,
    /// Prior scale for regularized initialization.
    #[arg(long)]
    alpha: Option<f64>,
    /// Pairs used for exact initialization and before the first batch
    /// solve; defaults to twice the state dimension.
    #[arg(long)]
    init_pairs: Option<usize>,
    #[arg(short, long, default_value = "-")]
    input: PathBuf,
    #[arg(short, long, default_value = "-")]
    output: PathBuf,
    /// Sampling interval, overriding the file header.
    #[arg(long)]
    dt: Option<f64>,
    /// State dimension when the input has no header.
    #[arg(long)]
    n: Option<usize>,
    /// Modes reported per step.
    #[arg(long, default_value_t = 4)]
    track_count: usize,
}

enum Tracker {
    Batch { pairs: Vec<SnapshotPair>, start: usize, rho: f64 },
    MiniBatch { window: VecDeque<SnapshotPair>, w: usize, rho: f64 },
    Online { state: Option<OnlineState>, pending: Vec<SnapshotPair>, start: usize, rho: f64 },
    Windowed { state: Option<WindowedState>, pending: Vec<SnapshotPair>, w: usize, rho: f64 },
}

impl Tracker {
    fn new(args: &RunArgs, n: usize) -> Result<Self> {
        let needs_window = matches!(args.algorithm, RunAlgorithm::MiniBatch | RunAlgorithm::Windowed);
        if needs_window && args.w.is_none() {
            return Err(DmdError::Config("--w is required for mini-batch and windowed".into()));
        }
        if !needs_window && args.w.is_some() {
            return Err(DmdError::Config("--w applies only to mini-batch and windowed".into()));
        }
        let regularized = args.init == InitKind::Regularized;
        if args.algorithm != RunAlgorithm::Online && (regularized || args.alpha.is_some()) {
            return Err(DmdError::Config("--init regularized and --alpha apply only to online".into()));
        }
        if args.alpha.is_some() && !regularized {
            return Err(DmdError::Config("--alpha needs --init regularized".into()));
        }
        if args.init_pairs.is_some() && (needs_window || regularized) {
            return Err(DmdError::Config("--init-pairs applies only to batch and exact online".into()));
        }
        if !(args.rho > 0.0 && args.rho <= 1.0) {
            return Err(DmdError::Parameter(format!("rho must lie in (0, 1], got {}", args.rho)));
        }
        let start = args.init_pairs.unwrap_or(2 * n);
        if start < n {
            return Err(DmdError::Config(format!("--init-pairs must be at least the state dimension {n}")));
        }
        let rho = args.rho;
        Ok(match args.algorithm {
            RunAlgorithm::Batch => Tracker::Batch { pairs: Vec::new(), start, rho },
            RunAlgorithm::MiniBatch => Tracker::MiniBatch { window: VecDeque::new(), w: window(args, n)?, rho },
            RunAlgorithm::Online if regularized => {
                let alpha = args.alpha.unwrap_or(DEFAULT_ALPHA);
                let state = OnlineState::init_regularized(n, n, alpha, rho)?;
                Tracker::Online { state: Some(state), pending: Vec::new(), start: 0, rho }
            }
            RunAlgorithm::Online => Tracker::Online { state: None, pending: Vec::new(), start, rho },
            RunAlgorithm::Windowed => Tracker::Windowed { state: None, pending: Vec::new(), w: window(args, n)?, rho },
        })
    }

    /// Absorbs one pair and returns the current DMD matrix once one exists.
    fn push(&mut self, pair: SnapshotPair) -> Result<Option<Mat>> {
        match self {
            Tracker::Batch { pairs, start, rho } => {
                pairs.push(pair);
                if pairs.len() < *start {
                    return Ok(None);
                }
                let snaps = stack(pairs)?;
                let sol = if *rho == 1.0 { batch_dmd(&snaps)? } else { weighted_batch_dmd(&snaps, *rho)? };
                Ok(Some(sol.a))
            }
            Tracker::MiniBatch { window, w, rho } => {
                window.push_back(pair);
                if window.len() > *w {
                    window.pop_front();
                }
                if window.len() < *w {
                    return Ok(None);
                }
                let pairs = window.make_contiguous();
                let sol =
                    if *rho == 1.0 { mini_batch_dmd(pairs, *w)? } else { weighted_mini_batch_dmd(pairs, *w, *rho)? };
                Ok(Some(sol.a))
            }
            Tracker::Online { state: Some(s), .. } => {
                s.update(&pair)?;
                Ok(Some(s.a().clone()))
            }
            Tracker::Online { state, pending, start, rho } => {
                pending.push(pair);
                if pending.len() < *start {
                    return Ok(None);
                }
                let s = OnlineState::init_exact(&stack(pending)?, *rho)?;
                let a = s.a().clone();
                *state = Some(s);
                pending.clear();
                Ok(Some(a))
            }
            Tracker::Windowed { state: Some(s), .. } => {
                s.slide(pair)?;
                Ok(Some(s.a().clone()))
            }
            Tracker::Windowed { state, pending, w, rho } => {
                pending.push(pair);
                if pending.len() < *w {
                    return Ok(None);
                }
                let s = WindowedState::init_window(pending, *rho)?;
                let a = s.a().clone();
                *state = Some(s);
                pending.clear();
                Ok(Some(a))
            }
        }
    }
}

fn window(args: &RunArgs, n: usize) -> Result<usize> {
    let w = args.w.unwrap_or(0);
    if w < n {
        return Err(DmdError::Config(format!("--w {w} is smaller than the state dimension {n}")));
    }
    Ok(w)
}

fn label(args: &RunArgs) -> String {
    let name = match args.algorithm {
        RunAlgorithm::Batch => "batch",
        RunAlgorithm::MiniBatch => "mini-batch",
        RunAlgorithm::Online => "online",
        RunAlgorithm::Windowed => "windowed",
    };
    if args.rho == 1.0 {
        name.to_string()
    } else {
        format!("{name}(rho={})", args.rho)
    }
}

pub fn run(args: RunArgs) -> Result<()> {
    let fallback = match args.n {
        Some(n) => Some(StreamHeader::new(n, args.dt.unwrap_or(1.0), Pairing::Trajectory)?),
        None => None,
    };
    let (header, stream) = open_stream(open_input(&args.input)?, fallback)?;
    let dt = args.dt.unwrap_or(header.dt);
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DmdError::Config(format!("dt must be positive, got {dt}")));
    }
    let mut tracker = Tracker::new(&args, header.n)?;
    let label = label(&args);
    let live = is_stdio(&args.input);
    let mut out = open_output(&args.output)?;
    writeln!(out, "{TRACK_HEADER}")?;
    let mut steps = 0;
    for pair in stream {
        let pair = pair?;
        let step = pair.index + 1;
        let reference = pair.y.clone();
        let Some(a) = tracker.push(pair)? else { continue };
        let spec = spectrum_of(&a, dt, Some(&reference))?;
        for row in track_rows(step, &spec, &label, args.track_count) {
            writeln!(out, "{}", row.to_csv())?;
        }
        if live {
            out.flush()?;
        }
        steps += 1;
    }
    out.flush()?;
    if steps == 0 {
        return Err(DmdError::InsufficientData("input ended before the first DMD matrix could be formed".into()));
    }
    Ok(())
}
