//! Snapshot pairs, the stacked snapshot matrices, and the snapshot CSV format.
//!
//! On disk every data line is one snapshot (a row), because streams grow by
//! appending rows. In memory the stacked matrices hold snapshots as columns:
//! `X` is `n × k` and `Y` is `n_out × k`.
//!
//! ```text
//! # n=2 dt=0.1 pairing=trajectory
//! 1.0,0.0
//! 0.995,-0.0998
//! ```
//!
//! In `pairs` mode each line carries `2n` values, `x` followed by `y`.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::error::{DmdError, Result};
use crate::kernel::Mat;

/// One `(x, y)` pair with its position in the stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotPair {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub index: usize,
}

impl SnapshotPair {
    pub fn new(x: Vec<f64>, y: Vec<f64>, index: usize) -> Self {
        SnapshotPair { x, y, index }
    }
}

/// Pairs stacked column-wise: `X = [x_1 … x_k]`, `Y = [y_1 … y_k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrices {
    pub x: Mat,
    pub y: Mat,
}

impl SnapshotMatrices {
    pub fn new(x: Mat, y: Mat) -> Result<Self> {
        if x.cols() != y.cols() {
            return Err(DmdError::Shape(format!("X has {} columns but Y has {}", x.cols(), y.cols())));
        }
        Ok(SnapshotMatrices { x, y })
    }

    /// Number of pairs.
    pub fn k(&self) -> usize {
        self.x.cols()
    }

    pub fn n_in(&self) -> usize {
        self.x.rows()
    }

    pub fn n_out(&self) -> usize {
        self.y.rows()
    }

    /// Recovers the pairs, indexed from 0.
    pub fn unstack(&self) -> Vec<SnapshotPair> {
        (0..self.k()).map(|j| SnapshotPair::new(self.x.column(j), self.y.column(j), j)).collect()
    }
}

/// `(x_j, x_{j+1})` for consecutive states of a single trajectory.
pub fn pair_trajectory(states: &[Vec<f64>]) -> Result<Vec<SnapshotPair>> {
    if states.len() < 2 {
        return Err(DmdError::InsufficientData(format!("a trajectory needs at least 2 states, got {}", states.len())));
    }
    let n = states[0].len();
    if let Some(bad) = states.iter().position(|s| s.len() != n) {
        return Err(DmdError::Shape(format!(
            "state {bad} has dimension {} but the stream has dimension {n}",
            states[bad].len()
        )));
    }
    Ok(states.windows(2).enumerate().map(|(j, w)| SnapshotPair::new(w[0].clone(), w[1].clone(), j)).collect())
}

/// Stacks pairs as the columns of `X` and `Y`.
pub fn stack(pairs: &[SnapshotPair]) -> Result<SnapshotMatrices> {
    let first = pairs.first().ok_or_else(|| DmdError::InsufficientData("cannot stack an empty set of pairs".into()))?;
    let (n, n_out) = (first.x.len(), first.y.len());
    let k = pairs.len();
    let mut x = Mat::zeros(n, k);
    let mut y = Mat::zeros(n_out, k);
    for (j, p) in pairs.iter().enumerate() {
        if p.x.len() != n || p.y.len() != n_out {
            return Err(DmdError::Shape(format!(
                "pair {j} has dimensions ({}, {}), expected ({n}, {n_out})",
                p.x.len(),
                p.y.len()
            )));
        }
        for i in 0..n {
            x[(i, j)] = p.x[i];
        }
        for i in 0..n_out {
            y[(i, j)] = p.y[i];
        }
    }
    Ok(SnapshotMatrices { x, y })
}

/// How data lines map onto pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pairing {
    /// Each line is one state; consecutive states form pairs.
    Trajectory,
    /// Each line holds `x` then `y`.
    Pairs,
}

impl FromStr for Pairing {
    type Err = DmdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trajectory" => Ok(Pairing::Trajectory),
            "pairs" => Ok(Pairing::Pairs),
            other => Err(DmdError::Config(format!("unknown pairing '{other}' (expected trajectory or pairs)"))),
        }
    }
}

impl fmt::Display for Pairing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pairing::Trajectory => "trajectory",
            Pairing::Pairs => "pairs",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamHeader {
    pub n: usize,
    /// Sampling interval in seconds.
    pub dt: f64,
    pub pairing: Pairing,
}

impl StreamHeader {
    pub fn new(n: usize, dt: f64, pairing: Pairing) -> Result<Self> {
        let h = StreamHeader { n, dt, pairing };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(DmdError::Config("state dimension n must be at least 1".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(DmdError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }

    fn fields_per_line(&self) -> usize {
        match self.pairing {
            Pairing::Trajectory => self.n,
            Pairing::Pairs => 2 * self.n,
        }
    }

    /// Parses `# n=<int> dt=<float> pairing=<trajectory|pairs>`. `dt`
    /// defaults to 1 and `pairing` to `trajectory`.
    pub fn parse_line(line: &str) -> Result<Self> {
        let body = line
            .trim()
            .strip_prefix('#')
            .ok_or_else(|| DmdError::Parse { line: 1, msg: "header must start with '#'".into() })?;
        let mut n = None;
        let mut dt = 1.0;
        let mut pairing = Pairing::Trajectory;
        for token in body.split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| DmdError::Parse { line: 1, msg: format!("malformed header field '{token}'") })?;
            let bad = |what: &str| DmdError::Parse { line: 1, msg: format!("invalid {what} '{value}' in header") };
            match key {
                "n" => n = Some(value.parse::<usize>().map_err(|_| bad("n"))?),
                "dt" => dt = value.parse::<f64>().map_err(|_| bad("dt"))?,
                "pairing" => pairing = value.parse().map_err(|_| bad("pairing"))?,
                _ => {}
            }
        }
        let n = n.ok_or_else(|| DmdError::Parse { line: 1, msg: "header lacks n=<int>".into() })?;
        StreamHeader::new(n, dt, pairing)
    }

    pub fn to_line(&self) -> String {
        format!("# n={} dt={:e} pairing={}", self.n, self.dt, self.pairing)
    }
}

/// True when a line looks like a stream header rather than a comment.
fn is_header_line(line: &str) -> bool {
    line.trim_start().strip_prefix('#').is_some_and(|rest| rest.split_whitespace().any(|t| t.starts_with("n=")))
}

/// Parses one comma-separated data line.
pub(crate) fn parse_row(line: &str, lineno: usize, expected: usize) -> Result<Vec<f64>> {
    let mut values = Vec::with_capacity(expected);
    for (col, field) in line.split(',').enumerate() {
        let field = field.trim();
        let v: f64 = field.parse().map_err(|_| DmdError::Parse {
            line: lineno,
            msg: format!("field {} ('{field}') is not a number", col + 1),
        })?;
        if !v.is_finite() {
            return Err(DmdError::Data(format!("line {lineno}, field {}", col + 1)));
        }
        values.push(v);
    }
    if values.len() != expected {
        return Err(DmdError::Parse {
            line: lineno,
            msg: format!("expected {expected} fields, found {}", values.len()),
        });
    }
    Ok(values)
}

/// Lazy iterator of pairs read from a snapshot CSV source.
pub struct SnapshotStream<R> {
    source: R,
    header: StreamHeader,
    lineno: usize,
    previous: Option<Vec<f64>>,
    next_index: usize,
    buf: String,
    failed: bool,
}

impl<R: BufRead> SnapshotStream<R> {
    pub fn header(&self) -> &StreamHeader {
        &self.header
    }

    fn next_row(&mut self) -> Option<Result<Vec<f64>>> {
        loop {
            self.buf.clear();
            match self.source.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e.into())),
            }
            self.lineno += 1;
            let line = self.buf.trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('#') {
                if is_header_line(line) {
                    if self.lineno != 1 {
                        return Some(Err(DmdError::Parse {
                            line: self.lineno,
                            msg: "header line must come first".into(),
                        }));
                    }
                    match StreamHeader::parse_line(line) {
                        Ok(h) if h.n == self.header.n && h.pairing == self.header.pairing => continue,
                        Ok(h) => {
                            return Some(Err(DmdError::Parse {
                                line: self.lineno,
                                msg: format!(
                                    "file header (n={}, pairing={}) disagrees with the expected (n={}, pairing={})",
                                    h.n, h.pairing, self.header.n, self.header.pairing
                                ),
                            }))
                        }
                        Err(e) => return Some(Err(e)),
                    }
                }
                continue;
            }
            let expected = self.header.fields_per_line();
            return Some(parse_row(line, self.lineno, expected));
        }
    }
}

impl<R: BufRead> Iterator for SnapshotStream<R> {
    type Item = Result<SnapshotPair>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            let row = match self.next_row()? {
                Ok(r) => r,
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e));
                }
            };
            let index = self.next_index;
            match self.header.pairing {
                Pairing::Pairs => {
                    self.next_index += 1;
                    let y = row[self.header.n..].to_vec();
                    let mut x = row;
                    x.truncate(self.header.n);
                    return Some(Ok(SnapshotPair::new(x, y, index)));
                }
                Pairing::Trajectory => match self.previous.replace(row.clone()) {
                    None => continue,
                    Some(x) => {
                        self.next_index += 1;
                        return Some(Ok(SnapshotPair::new(x, row, index)));
                    }
                },
            }
        }
    }
}

/// Reads pairs lazily from `source` using `header` for the layout.
///
/// A header line in the file is accepted when it agrees with `header`.
pub fn read_stream<R: BufRead>(source: R, header: StreamHeader) -> SnapshotStream<R> {
    SnapshotStream { source, header, lineno: 0, previous: None, next_index: 0, buf: String::new(), failed: false }
}

/// Reads the header from the first line of `source` when present, otherwise
/// uses `fallback`. Fails when neither is available.
pub fn open_stream<R: BufRead>(
    mut source: R,
    fallback: Option<StreamHeader>,
) -> Result<(StreamHeader, SnapshotStream<R>)> {
    let first = source.fill_buf()?;
    let end = first.iter().position(|b| *b == b'\n').unwrap_or(first.len());
    let head = String::from_utf8_lossy(&first[..end]).into_owned();
    let header = if is_header_line(&head) {
        StreamHeader::parse_line(&head)?
    } else {
        fallback.ok_or_else(|| {
            DmdError::Config("input has no '# n=... dt=...' header; pass the state dimension explicitly".into())
        })?
    };
    Ok((header, read_stream(source, header)))
}

/// Writes states as a trajectory-mode snapshot file. Values are written in
/// shortest round-trip form, so reading the file back is bitwise exact.
pub fn write_trajectory<W: Write>(mut out: W, dt: f64, states: &[Vec<f64>]) -> Result<()> {
    let n = states.first().map_or(0, |s| s.len());
    writeln!(out, "{}", StreamHeader { n, dt, pairing: Pairing::Trajectory }.to_line())?;
    for s in states {
        write_row(&mut out, s)?;
    }
    Ok(())
}

pub(crate) fn write_row<W: Write>(out: &mut W, values: &[f64]) -> Result<()> {
    let mut first = true;
    for v in values {
        if !first {
            out.write_all(b",")?;
        }
        write!(out, "{v:e}")?;
        first = false;
    }
    out.write_all(b"\n")?;
    Ok(())
}
