//! System identification by regressor augmentation.
//!
//! A controlled linear system `x' = A x + B u` is a DMD problem on the stacked
//! regressor `z = [x; u]` with the rectangular unknown `[A B]`. Replacing `z`
//! with a vector of monomials in `x` and `u` extends the same machinery to
//! nonlinear models `x' = Â z(x, u)`.

use std::collections::HashSet;
use std::fmt;
use std::io::BufRead;

use crate::error::{DmdError, Result};
use crate::kernel::{matvec, Mat};
use crate::online::OnlineState;
use crate::snapshots::{parse_row, stack, SnapshotPair};
use crate::windowed::WindowedState;

/// One observable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Term {
    State(usize),
    Input(usize),
    /// `x_i · u_j`.
    Product(usize, usize),
    SquareState(usize),
    SquareInput(usize),
    Constant,
}

impl Term {
    fn eval(&self, x: &[f64], u: &[f64]) -> f64 {
        match *self {
            Term::State(i) => x[i],
            Term::Input(j) => u[j],
            Term::Product(i, j) => x[i] * u[j],
            Term::SquareState(i) => x[i] * x[i],
            Term::SquareInput(j) => u[j] * u[j],
            Term::Constant => 1.0,
        }
    }

    fn fits(&self, n: usize, p: usize) -> bool {
        match *self {
            Term::State(i) | Term::SquareState(i) => i < n,
            Term::Input(j) | Term::SquareInput(j) => j < p,
            Term::Product(i, j) => i < n && j < p,
            Term::Constant => true,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Term::State(i) => write!(f, "x{}", i + 1),
            Term::Input(j) => write!(f, "u{}", j + 1),
            Term::Product(i, j) => write!(f, "x{}*u{}", i + 1, j + 1),
            Term::SquareState(i) => write!(f, "x{}^2", i + 1),
            Term::SquareInput(j) => write!(f, "u{}^2", j + 1),
            Term::Constant => f.write_str("1"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    n: usize,
    p: usize,
    terms: Vec<Term>,
}

impl Dictionary {
    pub fn new(n: usize, p: usize, terms: Vec<Term>) -> Result<Self> {
        if terms.is_empty() {
            return Err(DmdError::Parameter("a dictionary needs at least one term".into()));
        }
        if let Some(t) = terms.iter().find(|t| !t.fits(n, p)) {
            return Err(DmdError::Parameter(format!("term {t} is out of range for n={n}, p={p}")));
        }
        let mut seen = HashSet::new();
        if let Some(t) = terms.iter().find(|t| !seen.insert(**t)) {
            return Err(DmdError::Parameter(format!("term {t} appears twice")));
        }
        Ok(Dictionary { n, p, terms })
    }

    /// `[x; u]`.
    pub fn linear(n: usize, p: usize) -> Self {
        let terms = (0..n).map(Term::State).chain((0..p).map(Term::Input)).collect();
        Dictionary { n, p, terms }
    }

    /// States, their squares, inputs, their squares, then every `x_i u_j`.
    /// For `n = p = 1` this is `(x, x², u, u², x u)`.
    pub fn quadratic(n: usize, p: usize) -> Self {
        let mut terms: Vec<Term> = (0..n).map(Term::State).chain((0..n).map(Term::SquareState)).collect();
        terms.extend((0..p).map(Term::Input));
        terms.extend((0..p).map(Term::SquareInput));
        for i in 0..n {
            terms.extend((0..p).map(|j| Term::Product(i, j)));
        }
        Dictionary { n, p, terms }
    }

    pub fn q(&self) -> usize {
        self.terms.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn names(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.to_string()).collect()
    }
}

/// Evaluates every observable of `dict` at `(x, u)`.
pub fn lift(dict: &Dictionary, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    if x.len() != dict.n || u.len() != dict.p {
        return Err(DmdError::Shape(format!(
            "sample has state dimension {} and input dimension {}, dictionary expects {} and {}",
            x.len(),
            u.len(),
            dict.n,
            dict.p
        )));
    }
    Ok(dict.terms.iter().map(|t| t.eval(x, u)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SysIdSample {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub x_next: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IdMode {
    /// Initialized exactly from the first `2q` samples.
    Online { rho: f64 },
    /// Initialized from the first `w` samples.
    Windowed { w: usize, rho: f64 },
}

#[derive(Debug, Clone)]
pub struct SysIdModel {
    /// `n × q` coefficients; `[A B]` for the linear dictionary.
    pub a_hat: Mat,
    pub dict: Dictionary,
}

impl SysIdModel {
    pub fn n(&self) -> usize {
        self.dict.n
    }

    pub fn p(&self) -> usize {
        self.dict.p
    }

    /// Predicted next state.
    pub fn predict(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        matvec(&self.a_hat, &lift(&self.dict, x, u)?)
    }
}

/// Coefficient matrix after each absorbed sample, starting at initialization.
#[derive(Debug, Clone, Default)]
pub struct CoefficientTrack {
    /// Samples absorbed when the matching entry of `coefficients` was taken.
    pub steps: Vec<usize>,
    pub coefficients: Vec<Mat>,
}

enum Updater {
    Online(OnlineState),
    Windowed(WindowedState),
}

impl Updater {
    fn a(&self) -> &Mat {
        match self {
            Updater::Online(s) => s.a(),
            Updater::Windowed(s) => s.a(),
        }
    }

    fn k(&self) -> usize {
        match self {
            Updater::Online(s) => s.k(),
            Updater::Windowed(s) => s.k(),
        }
    }

    fn absorb(&mut self, pair: SnapshotPair) -> Result<()> {
        match self {
            Updater::Online(s) => s.update(&pair).map(|_| ()),
            Updater::Windowed(s) => s.slide(pair).map(|_| ()),
        }
    }
}

fn rank_hint(e: DmdError) -> DmdError {
    match e {
        DmdError::Rank { cond, .. } => DmdError::Rank {
            cond,
            hint: "the lifted regressors are collinear; the input may not be persistently exciting".into(),
        },
        other => other,
    }
}

/// Fits `x_next ≈ Â z(x, u)` over a stream of samples.
pub fn identify_stream<I>(samples: I, dict: &Dictionary, mode: IdMode) -> Result<(SysIdModel, CoefficientTrack)>
where
    I: IntoIterator<Item = SysIdSample>,
{
    let q = dict.q();
    let init_len = match mode {
        IdMode::Online { .. } => 2 * q,
        IdMode::Windowed { w, .. } => {
            if w < q {
                return Err(DmdError::WindowTooSmall { w, dim: q });
            }
            w
        }
    };
    let to_pair = |s: SysIdSample, index: usize| -> Result<SnapshotPair> {
        if s.x_next.len() != dict.n {
            return Err(DmdError::Shape(format!("x_next has dimension {}, expected {}", s.x_next.len(), dict.n)));
        }
        Ok(SnapshotPair::new(lift(dict, &s.x, &s.u)?, s.x_next, index))
    };

    let mut iter = samples.into_iter().enumerate();
    let mut head = Vec::with_capacity(init_len);
    for (i, s) in iter.by_ref().take(init_len) {
        head.push(to_pair(s, i)?);
    }
    if head.len() < init_len {
        return Err(DmdError::InsufficientData(format!(
            "{} samples available, {init_len} needed to initialize a {q}-term model",
            head.len()
        )));
    }
    let mut updater = match mode {
        IdMode::Online { rho } => Updater::Online(OnlineState::init_exact(&stack(&head)?, rho).map_err(rank_hint)?),
        IdMode::Windowed { rho, .. } => Updater::Windowed(WindowedState::init_window(&head, rho).map_err(rank_hint)?),
    };
    let mut track = CoefficientTrack::default();
    track.steps.push(updater.k());
    track.coefficients.push(updater.a().clone());
    for (i, s) in iter {
        updater.absorb(to_pair(s, i)?)?;
        track.steps.push(updater.k());
        track.coefficients.push(updater.a().clone());
    }
    Ok((SysIdModel { a_hat: updater.a().clone(), dict: dict.clone() }, track))
}

/// Reads samples written as `x(1..n), u(1..p), x_next(1..n)` rows under a
/// `# n=<int> p=<int>` header. `dims` is used when the header is absent.
pub fn read_samples<R: BufRead>(source: R, dims: Option<(usize, usize)>) -> Result<(usize, usize, Vec<SysIdSample>)> {
    let mut dims = dims;
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(body) = t.strip_prefix('#') {
            if let Some(d) = parse_dims(body, lineno)? {
                dims = Some(d);
            }
            continue;
        }
        let (n, p) = dims.ok_or_else(|| {
            DmdError::Config("sample file has no '# n=<int> p=<int>' header; pass the dimensions explicitly".into())
        })?;
        let row = parse_row(t, lineno, 2 * n + p)?;
        out.push(SysIdSample { x: row[..n].to_vec(), u: row[n..n + p].to_vec(), x_next: row[n + p..].to_vec() });
    }
    let (n, p) = dims.ok_or_else(|| DmdError::Config("sample file is empty".into()))?;
    Ok((n, p, out))
}

fn parse_dims(body: &str, lineno: usize) -> Result<Option<(usize, usize)>> {
    let (mut n, mut p) = (None, None);
    for token in body.split_whitespace() {
        if let Some((k, v)) = token.split_once('=') {
            let parse = || {
                v.parse::<usize>()
                    .map_err(|_| DmdError::Parse { line: lineno, msg: format!("invalid {k} '{v}' in header") })
            };
            match k {
                "n" => n = Some(parse()?),
                "p" => p = Some(parse()?),
                _ => {}
            }
        }
    }
    match (n, p) {
        (Some(0), _) => Err(DmdError::Config("state dimension n must be at least 1".into())),
        (Some(n), p) => Ok(Some((n, p.unwrap_or(0)))),
        _ => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn linear_lift_stacks() {
        let d = Dictionary::linear(2, 1);
        assert_eq!(lift(&d, &[1.0, 2.0], &[3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(matches!(lift(&d, &[1.0], &[3.0]), Err(DmdError::Shape(_))));
    }

    #[test]
    fn scalar_quadratic_lift() {
        let d = Dictionary::quadratic(1, 1);
        assert_eq!(d.names(), vec!["x1", "x1^2", "u1", "u1^2", "x1*u1"]);
        assert_eq!(lift(&d, &[2.0], &[3.0]).unwrap(), vec![2.0, 4.0, 3.0, 9.0, 6.0]);
    }

    #[test]
    fn constant_term() {
        let d = Dictionary::new(1, 0, vec![Term::State(0), Term::Constant]).unwrap();
        assert_eq!(lift(&d, &[7.0], &[]).unwrap()[1], 1.0);
    }

    #[test]
    fn dictionary_validation() {
        assert!(Dictionary::new(1, 1, vec![Term::State(0), Term::State(0)]).is_err());
        assert!(Dictionary::new(1, 1, vec![Term::Input(1)]).is_err());
        assert!(Dictionary::new(1, 1, vec![]).is_err());
    }

    #[test]
    fn zero_dynamics() {
        let mut s = 1u64;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let samples: Vec<_> =
            (0..30).map(|_| SysIdSample { x: vec![next(), next()], u: vec![next()], x_next: vec![0.0, 0.0] }).collect();
        let (m, track) = identify_stream(samples, &Dictionary::linear(2, 1), IdMode::Online { rho: 1.0 }).unwrap();
        assert_eq!(m.a_hat, Mat::zeros(2, 3));
        assert_eq!(track.steps.first(), Some(&6));
        assert_eq!(track.steps.last(), Some(&30));
    }

    #[test]
    fn constant_input_is_rank_error() {
        let samples: Vec<_> =
            (0..20).map(|i| SysIdSample { x: vec![i as f64 * 0.1], u: vec![1.0], x_next: vec![0.0] }).collect();
        let d = Dictionary::new(1, 1, vec![Term::State(0), Term::Input(0), Term::Constant]).unwrap();
        let err = identify_stream(samples, &d, IdMode::Online { rho: 1.0 }).unwrap_err();
        assert!(matches!(err, DmdError::Rank { .. }), "{err:?}");
    }

    #[test]
    fn too_few_samples() {
        let samples = vec![SysIdSample { x: vec![1.0], u: vec![], x_next: vec![1.0] }];
        let d = Dictionary::linear(1, 0);
        assert!(matches!(
            identify_stream(samples, &d, IdMode::Online { rho: 1.0 }),
            Err(DmdError::InsufficientData(_))
        ));
    }

    #[test]
    fn sample_file() {
        let text = "# n=1 p=1\n1,2,3\n3,4,5\n";
        let (n, p, s) = read_samples(Cursor::new(text), None).unwrap();
        assert_eq!((n, p), (1, 1));
        assert_eq!(s[1], SysIdSample { x: vec![3.0], u: vec![4.0], x_next: vec![5.0] });
        assert!(read_samples(Cursor::new("1,2,3\n"), None).is_err());
        let err = read_samples(Cursor::new("# n=1 p=1\n1,2\n"), None).unwrap_err();
        assert!(matches!(err, DmdError::Parse { line: 2, .. }));
    }
}
