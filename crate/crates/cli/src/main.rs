use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use odmd::harness::bench::{default_algorithms, run_benchmark_with, Algorithm, BenchConfig, Task};
use odmd::harness::ltv::{run_ltv, LtvConfig};
use odmd::harness::sensors::{run_synthetic_sensors, sensor_signals, SensorConfig};
use odmd::snapshots::write_trajectory;
use odmd::sysid::{identify_stream, read_samples, Dictionary, IdMode};
use odmd::{DmdError, Result};

mod run;

#[derive(Parser)]
#[command(name = "odmd", version, about = "Online and windowed dynamic mode decomposition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track the dominant DMD eigenvalues of a snapshot file step by step.
    Run(run::RunArgs),
    /// Count multiplies and time each algorithm on random data.
    Bench(BenchArgs),
    /// Track the eigenvalues of the slowly varying oscillator.
    Ltv(LtvArgs),
    /// Track the tones in a synthetic multi-channel signal.
    Sensors(SensorArgs),
    /// Identify a (possibly nonlinear) controlled system from samples.
    Sysid(SysidArgs),
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value = "every-step")]
    task: String,
    /// Dimensions: `a..b` doubles from a up to b, or a comma-separated list.
    #[arg(long, default_value = "2..1024")]
    n: String,
    #[arg(long, default_value_t = 10_000)]
    m: usize,
    #[arg(long, default_value_t = 2048)]
    w: usize,
    /// Comma-separated; defaults depend on the task.
    #[arg(long)]
    algorithms: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Timed runs per cell; the fastest is kept.
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    /// Run every-step batch cells of any size.
    #[arg(long)]
    no_batch_cap: bool,
    #[arg(short, long, default_value = "-")]
    output: PathBuf,
}

#[derive(Args)]
struct LtvArgs {
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 10)]
    w: usize,
    /// Forgetting factors for the online runs.
    #[arg(long, default_value = "1,0.95,0.8")]
    rho: String,
    #[arg(long, default_value_t = 0.1)]
    dt: f64,
    #[arg(long, default_value_t = 10.0)]
    t_end: f64,
    #[arg(short, long, default_value = "-")]
    output: PathBuf,
}

#[derive(Args)]
struct SensorArgs {
    #[arg(long, default_value_t = 13)]
    channels: usize,
    #[arg(long, default_value_t = 10.0)]
    duration: f64,
    #[arg(long, default_value_t = 2048.0)]
    fs: f64,
    /// Standard deviation of additive white noise.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    w: usize,
    #[arg(long, default_value = "1,0.999")]
    rho: String,
    #[arg(long, default_value_t = 4)]
    track_count: usize,
    /// Also write the generated signals as a snapshot file.
    #[arg(long)]
    snapshots: Option<PathBuf>,
    #[arg(short, long, default_value = "-")]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum DictKind {
    Linear,
    Quadratic,
}

#[derive(Clone, Copy, ValueEnum)]
enum IdKind {
    Online,
    Windowed,
}

#[derive(Args)]
struct SysidArgs {
    /// Sample file with `x, u, x_next` rows.
    #[arg(short, long, default_value = "-")]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "linear")]
    dict: DictKind,
    #[arg(long, value_enum, default_value = "online")]
    mode: IdKind,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    /// Window length, required for windowed mode.
    #[arg(long)]
    w: Option<usize>,
    /// State and input dimensions when the file has no header.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(short, long, default_value = "-")]
    output: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => run::run(a),
        Command::Bench(a) => bench(a),
        Command::Ltv(a) => ltv(a),
        Command::Sensors(a) => sensors(a),
        Command::Sysid(a) => sysid(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("odmd: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}

pub(crate) fn is_stdio(path: &Path) -> bool {
    path.as_os_str() == "-"
}

pub(crate) fn open_input(path: &Path) -> Result<Box<dyn BufRead>> {
    if is_stdio(path) {
        return Ok(Box::new(BufReader::new(io::stdin())));
    }
    let f = File::open(path).map_err(|e| DmdError::Io(format!("cannot read {}: {e}", path.display())))?;
    Ok(Box::new(BufReader::new(f)))
}

pub(crate) fn open_output(path: &Path) -> Result<Box<dyn Write>> {
    if is_stdio(path) {
        return Ok(Box::new(BufWriter::new(io::stdout())));
    }
    let f = File::create(path).map_err(|e| DmdError::Io(format!("cannot write {}: {e}", path.display())))?;
    Ok(Box::new(BufWriter::new(f)))
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|t| t.trim().parse().map_err(|_| DmdError::Config(format!("invalid {what} '{}' in '{s}'", t.trim()))))
        .collect()
}

/// `a..b` doubles from `a` while not exceeding `b`; otherwise a list.
fn parse_dims(s: &str) -> Result<Vec<usize>> {
    let Some((lo, hi)) = s.split_once("..") else {
        return parse_list(s, "dimension");
    };
    let bad = || DmdError::Config(format!("invalid dimension range '{s}' (expected e.g. 2..256)"));
    let lo: usize = lo.trim().parse().map_err(|_| bad())?;
    let hi: usize = hi.trim().parse().map_err(|_| bad())?;
    if lo == 0 || hi < lo {
        return Err(bad());
    }
    Ok(std::iter::successors(Some(lo), |&n| n.checked_mul(2)).take_while(|&n| n <= hi).collect())
}

fn bench(a: BenchArgs) -> Result<()> {
    let task: Task = a.task.parse()?;
    let algorithms = match &a.algorithms {
        Some(s) => parse_list::<Algorithm>(s, "algorithm")?,
        None => default_algorithms(task),
    };
    let mut cfg = BenchConfig {
        n_list: parse_dims(&a.n)?,
        m: a.m,
        w: a.w,
        task,
        algorithms,
        seed: a.seed,
        repeats: a.repeats,
        ..BenchConfig::default()
    };
    if a.no_batch_cap {
        cfg.batch_max_n = usize::MAX;
        cfg.batch_max_m = usize::MAX;
    }
    let mut out = open_output(&a.output)?;
    let mut write_err = None;
    let result = run_benchmark_with(&cfg, |r| {
        let line = serde_json::to_string(r).expect("benchmark records serialize");
        if let Err(e) = writeln!(out, "{line}").and_then(|_| out.flush()) {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    for (alg, n) in &result.skipped {
        eprintln!("odmd: skipped {alg} at n={n} (over the batch size cap; pass --no-batch-cap to run it)");
    }
    Ok(())
}

fn ltv(a: LtvArgs) -> Result<()> {
    let cfg = LtvConfig {
        epsilon: a.epsilon,
        dt: a.dt,
        t_end: a.t_end,
        w: a.w,
        rho_list: parse_list(&a.rho, "rho")?,
        ..LtvConfig::default()
    };
    let record = run_ltv(&cfg)?;
    let mut out = open_output(&a.output)?;
    record.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

fn sensors(a: SensorArgs) -> Result<()> {
    let cfg = SensorConfig {
        channels: a.channels,
        duration_s: a.duration,
        fs: a.fs,
        noise: a.noise,
        seed: a.seed,
        w: a.w,
        online_rhos: parse_list(&a.rho, "rho")?,
        track_count: a.track_count,
        ..SensorConfig::default()
    };
    cfg.validate()?;
    if let Some(path) = &a.snapshots {
        let mut out = open_output(path)?;
        write_trajectory(&mut out, cfg.dt(), &sensor_signals(&cfg))?;
        out.flush()?;
    }
    let record = run_synthetic_sensors(&cfg)?;
    let mut out = open_output(&a.output)?;
    record.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

fn sysid(a: SysidArgs) -> Result<()> {
    let dims = match (a.n, a.p) {
        (Some(n), p) => Some((n, p.unwrap_or(0))),
        (None, Some(_)) => return Err(DmdError::Config("--p needs --n".into())),
        (None, None) => None,
    };
    let mode = match (a.mode, a.w) {
        (IdKind::Online, None) => IdMode::Online { rho: a.rho },
        (IdKind::Online, Some(_)) => return Err(DmdError::Config("--w applies only to --mode windowed".into())),
        (IdKind::Windowed, Some(w)) => IdMode::Windowed { w, rho: a.rho },
        (IdKind::Windowed, None) => return Err(DmdError::Config("--mode windowed needs --w".into())),
    };
    let (n, p, samples) = read_samples(open_input(&a.input)?, dims)?;
    let dict = match a.dict {
        DictKind::Linear => Dictionary::linear(n, p),
        DictKind::Quadratic => Dictionary::quadratic(n, p),
    };
    let (model, _) = identify_stream(samples, &dict, mode)?;
    let mut out = open_output(&a.output)?;
    writeln!(out, "state,{}", dict.names().join(","))?;
    for i in 0..n {
        let row: Vec<String> = (0..dict.q()).map(|j| format!("{:.16e}", model.a_hat[(i, j)])).collect();
        writeln!(out, "x{},{}", i + 1, row.join(","))?;
    }
    out.flush()?;
    Ok(())
}
