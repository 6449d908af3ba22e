//! Eigenvalues, frequencies and mode amplitudes of a DMD matrix, and the
//! per-step track records built from them.
//!
//! Discrete eigenvalues `μ` map to continuous ones through `μ = e^{λ Δt}`,
//! taken on the principal branch so that `Im(λ) Δt ∈ (−π, π]`. The DMD
//! frequency is `Im(λ) / 2π`.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;

use crate::error::{DmdError, Result};
use crate::kernel::{eig, Mat};

/// How [`Spectrum::amplitudes`] were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmplitudeSource {
    /// `|b|` from expanding the reference state in the modes.
    Expansion,
    /// `|μ|`, used when no reference is given or the modes are degenerate.
    Magnitude,
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    pub mu: Vec<Complex64>,
    /// `ln(μ)/Δt`; a zero `μ` gives a real part of `−∞`.
    pub lambda: Vec<Complex64>,
    pub freq_hz: Vec<f64>,
    /// `modes[i]` is the unit-norm eigenvector for `mu[i]`.
    pub modes: Vec<Vec<Complex64>>,
    pub amplitudes: Vec<f64>,
    pub amplitude_source: AmplitudeSource,
    pub converged: Vec<bool>,
    pub dt: f64,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    /// True when `mu[i]` is zero and `lambda[i]` carries the `−∞` encoding.
    pub fn is_degenerate(&self, i: usize) -> bool {
        self.mu[i] == Complex64::new(0.0, 0.0)
    }
}

/// `ln(μ)/Δt` on the principal branch, with the Nyquist case at `+π`.
pub fn continuous_eigenvalue(mu: Complex64, dt: f64) -> Complex64 {
    let mut arg = mu.im.atan2(mu.re);
    if arg == -PI {
        arg = PI;
    }
    let mut im = arg / dt;
    // keep Im(λ)·Δt inside (−π, π] after rounding
    while im * dt > PI {
        im = im.next_down();
    }
    while im * dt <= -PI {
        im = im.next_up();
    }
    Complex64::new(mu.norm().ln() / dt, im)
}

/// Eigen-analysis of a square DMD matrix sampled every `dt` seconds.
pub fn spectrum_of(a: &Mat, dt: f64, reference: Option<&[f64]>) -> Result<Spectrum> {
    if !a.is_square() {
        return Err(DmdError::Shape(format!("spectrum of a {}x{} matrix", a.rows(), a.cols())));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DmdError::Parameter(format!("dt must be positive, got {dt}")));
    }
    if let Some(r) = reference {
        if r.len() != a.rows() {
            return Err(DmdError::Shape(format!(
                "reference state has length {}, matrix has order {}",
                r.len(),
                a.rows()
            )));
        }
    }
    let d = eig(a);
    let lambda: Vec<Complex64> = d.eigenvalues.iter().map(|m| continuous_eigenvalue(*m, dt)).collect();
    let freq_hz = lambda.iter().map(|l| l.im / (2.0 * PI)).collect();
    let expansion = reference.and_then(|r| expand(&d.eigenvectors, r));
    let (amplitudes, amplitude_source) = match expansion {
        Some(b) => (b.iter().map(|c| c.norm()).collect(), AmplitudeSource::Expansion),
        None => (d.eigenvalues.iter().map(|m| m.norm()).collect(), AmplitudeSource::Magnitude),
    };
    Ok(Spectrum {
        mu: d.eigenvalues,
        lambda,
        freq_hz,
        modes: d.eigenvectors,
        amplitudes,
        amplitude_source,
        converged: d.converged,
        dt,
    })
}

/// Solves `Φ b = x` by Gaussian elimination with partial pivoting. Returns
/// `None` when the modes are numerically dependent.
fn expand(modes: &[Vec<Complex64>], x: &[f64]) -> Option<Vec<Complex64>> {
    let n = x.len();
    // augmented rows [Φ | x]
    let mut m: Vec<Vec<Complex64>> = (0..n)
        .map(|i| {
            let mut row: Vec<Complex64> = (0..n).map(|j| modes[j][i]).collect();
            row.push(Complex64::new(x[i], 0.0));
            row
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&a, &b| m[a][col].norm().total_cmp(&m[b][col].norm()))?;
        // unit-norm columns: a pivot this small means the modes are dependent
        if !(m[pivot][col].norm() > 1e-12) {
            return None;
        }
        m.swap(col, pivot);
        let inv = m[col][col].inv();
        for r in (col + 1)..n {
            let f = m[r][col] * inv;
            if f == Complex64::new(0.0, 0.0) {
                continue;
            }
            for c in col..=n {
                let v = m[col][c];
                m[r][c] -= f * v;
            }
        }
    }
    let mut b = vec![Complex64::new(0.0, 0.0); n];
    for i in (0..n).rev() {
        let mut s = m[i][n];
        for j in (i + 1)..n {
            s -= m[i][j] * b[j];
        }
        b[i] = s / m[i][i];
    }
    b.iter().all(|c| c.re.is_finite() && c.im.is_finite()).then_some(b)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ranking {
    /// Mode indices, most dominant first.
    pub indices: Vec<usize>,
    /// Set when fewer distinct modes exist than were requested.
    pub truncated: bool,
}

/// The `count` most dominant modes by amplitude.
///
/// Each conjugate pair is represented once, by its member with nonnegative
/// frequency. Equal amplitudes are ordered by ascending frequency.
pub fn rank_dominant(spec: &Spectrum, count: usize) -> Ranking {
    let mut reps: Vec<usize> = (0..spec.len()).filter(|&i| spec.mu[i].im >= 0.0).collect();
    reps.sort_by(|&a, &b| {
        let (aa, ab) = (nan_low(spec.amplitudes[a]), nan_low(spec.amplitudes[b]));
        ab.total_cmp(&aa).then(spec.freq_hz[a].total_cmp(&spec.freq_hz[b])).then(a.cmp(&b))
    });
    let truncated = count > reps.len();
    reps.truncate(count);
    Ranking { indices: reps, truncated }
}

fn nan_low(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackRow {
    pub step: usize,
    pub time: f64,
    pub algorithm: String,
    /// Index of the mode within its spectrum.
    pub idx: usize,
    pub re_lambda: f64,
    pub im_lambda: f64,
    pub freq_hz: f64,
    pub amplitude: f64,
    /// 1 for the most dominant mode.
    pub rank: usize,
}

pub const TRACK_HEADER: &str = "step,time,algorithm,idx,re_lambda,im_lambda,freq_hz,amplitude,rank";

impl TrackRow {
    /// One CSV line with 17 significant digits per float.
    pub fn to_csv(&self) -> String {
        format!(
            "{},{:.16e},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            self.step,
            self.time,
            self.algorithm,
            self.idx,
            self.re_lambda,
            self.im_lambda,
            self.freq_hz,
            self.amplitude,
            self.rank
        )
    }

    pub fn parse_csv(line: &str) -> Result<TrackRow> {
        let f: Vec<&str> = line.trim().split(',').collect();
        let bad = || DmdError::Parse { line: 0, msg: format!("malformed track row '{line}'") };
        if f.len() != 9 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad());
        Ok(TrackRow {
            step: int(f[0])?,
            time: num(f[1])?,
            algorithm: f[2].to_string(),
            idx: int(f[3])?,
            re_lambda: num(f[4])?,
            im_lambda: num(f[5])?,
            freq_hz: num(f[6])?,
            amplitude: num(f[7])?,
            rank: int(f[8])?,
        })
    }
}

/// Ranked spectral rows accumulated over a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackRecord {
    pub rows: Vec<TrackRow>,
}

impl TrackRecord {
    pub fn new() -> Self {
        TrackRecord::default()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Appends the `count` dominant modes of `spec` for this step and returns
    /// the appended rows.
    pub fn append_track(&mut self, step: usize, spec: &Spectrum, label: &str, count: usize) -> &[TrackRow] {
        let start = self.rows.len();
        self.rows.extend(track_rows(step, spec, label, count));
        &self.rows[start..]
    }

    /// Rows for one algorithm, in order.
    pub fn for_algorithm<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a TrackRow> + 'a {
        self.rows.iter().filter(move |r| r.algorithm == label)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{TRACK_HEADER}")?;
        for r in &self.rows {
            writeln!(out, "{}", r.to_csv())?;
        }
        Ok(())
    }

    pub fn read_csv(text: &str) -> Result<TrackRecord> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 && line.trim() == TRACK_HEADER || line.trim().is_empty() {
                continue;
            }
            rows.push(
                TrackRow::parse_csv(line)
                    .map_err(|_| DmdError::Parse { line: i + 1, msg: "malformed track row".into() })?,
            );
        }
        Ok(TrackRecord { rows })
    }
}

/// Ranked rows for one step without accumulating them.
pub fn track_rows(step: usize, spec: &Spectrum, label: &str, count: usize) -> Vec<TrackRow> {
    rank_dominant(spec, count)
        .indices
        .into_iter()
        .enumerate()
        .map(|(r, i)| TrackRow {
            step,
            time: step as f64 * spec.dt,
            algorithm: label.to_string(),
            idx: i,
            re_lambda: spec.lambda[i].re,
            im_lambda: spec.lambda[i].im,
            freq_hz: spec.freq_hz[i],
            amplitude: spec.amplitudes[i],
            rank: r + 1,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotation(theta: f64) -> Mat {
        Mat::from_rows(&[vec![theta.cos(), -theta.sin()], vec![theta.sin(), theta.cos()]]).unwrap()
    }

    fn with_amplitudes(mu: Vec<Complex64>, amplitudes: Vec<f64>) -> Spectrum {
        let dt = 1.0;
        let lambda: Vec<Complex64> = mu.iter().map(|m| continuous_eigenvalue(*m, dt)).collect();
        let n = mu.len();
        Spectrum {
            freq_hz: lambda.iter().map(|l| l.im / (2.0 * PI)).collect(),
            lambda,
            modes: vec![vec![]; n],
            amplitudes,
            amplitude_source: AmplitudeSource::Expansion,
            converged: vec![true; n],
            mu,
            dt,
        }
    }

    #[test]
    fn identity_spectrum() {
        let s = spectrum_of(&Mat::identity(3), 0.1, None).unwrap();
        for i in 0..3 {
            assert_eq!(s.mu[i], Complex64::new(1.0, 0.0));
            assert_eq!(s.lambda[i], Complex64::new(0.0, 0.0));
            assert_eq!(s.freq_hz[i], 0.0);
        }
    }

    #[test]
    fn rotation_spectrum() {
        let s = spectrum_of(&rotation(0.1), 0.1, None).unwrap();
        let mut im: Vec<f64> = s.lambda.iter().map(|l| l.im).collect();
        im.sort_by(f64::total_cmp);
        assert!((im[0] + 1.0).abs() < 1e-10 && (im[1] - 1.0).abs() < 1e-10);
        for f in &s.freq_hz {
            assert!((f.abs() - 1.0 / (2.0 * PI)).abs() < 1e-10);
        }
    }

    #[test]
    fn nyquist_on_upper_branch() {
        let l = continuous_eigenvalue(Complex64::new(-1.0, -0.0), 0.5);
        assert_eq!(l.im, PI / 0.5);
        let s = spectrum_of(&Mat::diag(&[-2.0]), 1.0, None).unwrap();
        assert_eq!(s.lambda[0].im, PI);
        assert!((s.lambda[0].re - 2f64.ln()).abs() < 1e-15);
        // π/Δt·Δt rounds above π for this Δt
        let dt = 0.7132930652492441;
        assert!(continuous_eigenvalue(Complex64::new(-1.0, 0.0), dt).im * dt <= PI);
    }

    #[test]
    fn zero_eigenvalue_is_flagged() {
        let s = spectrum_of(&Mat::diag(&[0.0, 0.5]), 1.0, None).unwrap();
        let z = (0..2).find(|&i| s.is_degenerate(i)).unwrap();
        assert_eq!(s.lambda[z].re, f64::NEG_INFINITY);
    }

    #[test]
    fn expansion_amplitudes() {
        let s = spectrum_of(&Mat::diag(&[0.9, 0.5]), 1.0, Some(&[3.0, -4.0])).unwrap();
        assert_eq!(s.amplitude_source, AmplitudeSource::Expansion);
        for i in 0..2 {
            let expected = if s.mu[i].re == 0.9 { 3.0 } else { 4.0 };
            assert!((s.amplitudes[i] - expected).abs() < 1e-12);
        }
        let s = spectrum_of(&rotation(0.4).scaled(0.9), 1.0, Some(&[1.0, 0.2])).unwrap();
        assert!((s.amplitudes[0] - s.amplitudes[1]).abs() <= 1e-8 * s.amplitudes[0]);
    }

    #[test]
    fn defective_falls_back_to_magnitude() {
        let j = Mat::from_rows(&[vec![0.5, 1.0], vec![0.0, 0.5]]).unwrap();
        let s = spectrum_of(&j, 1.0, Some(&[1.0, 1.0])).unwrap();
        assert_eq!(s.amplitude_source, AmplitudeSource::Magnitude);
    }

    #[test]
    fn rank_real_modes() {
        let mu = vec![Complex64::new(0.1, 0.0), Complex64::new(0.2, 0.0), Complex64::new(0.3, 0.0)];
        let s = with_amplitudes(mu, vec![3.0, 1.0, 2.0]);
        assert_eq!(rank_dominant(&s, 2), Ranking { indices: vec![0, 2], truncated: false });
    }

    #[test]
    fn rank_collapses_pairs() {
        let z = Complex64::from_polar(0.9, 0.3);
        let s = with_amplitudes(vec![z, z.conj(), Complex64::new(0.5, 0.0)], vec![2.0, 2.0, 1.0]);
        assert_eq!(rank_dominant(&s, 1).indices, vec![0]);
        let r = rank_dominant(&s, 3);
        assert_eq!(r.indices, vec![0, 2]);
        assert!(r.truncated);
    }

    #[test]
    fn rank_ties_by_frequency() {
        let s = with_amplitudes(
            vec![Complex64::from_polar(1.0, 0.5), Complex64::from_polar(1.0, -0.5), Complex64::new(1.0, 0.0)],
            vec![1.0, 1.0, 1.0],
        );
        assert_eq!(rank_dominant(&s, 2).indices, vec![2, 0]);
    }

    #[test]
    fn track_rows_and_csv() {
        let spec = spectrum_of(&rotation(0.1), 0.1, Some(&[1.0, 0.0])).unwrap();
        let mut rec = TrackRecord::new();
        assert_eq!(rec.append_track(5, &spec, "online", 1).len(), 1);
        rec.append_track(6, &spec, "online", 4);
        assert_eq!(rec.len(), 2);
        assert!(rec.rows.windows(2).all(|w| w[0].step <= w[1].step));
        let row = &rec.rows[0];
        assert!((row.time - 0.5).abs() < 1e-15);
        assert!(row.freq_hz > 0.0);
        assert_eq!(row.rank, 1);

        let mut buf = Vec::new();
        rec.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(TRACK_HEADER));
        assert_eq!(TrackRecord::read_csv(&text).unwrap(), rec);
    }
}
