//! Time-stamped multi-axis position traces.
//!
//! CSV form: header `t_s,x_mm,y_mm,z_mm` with absent axes omitted, values
//! written with 9 significant digits.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::AxisId;

/// Spacing tolerance for declaring a trace uniformly sampled, s.
pub const UNIFORM_TOLERANCE_S: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("timestamp at sample {index} ({t} s) does not increase")]
    Monotonicity { index: usize, t: f64 },
    #[error("trace needs at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceSource {
    Simulated,
    Measured,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceMetadata {
    pub source: TraceSource,
    pub trajectory_id: String,
}

impl TraceMetadata {
    pub fn simulated(id: impl Into<String>) -> Self {
        Self {
            source: TraceSource::Simulated,
            trajectory_id: id.into(),
        }
    }

    pub fn measured(id: impl Into<String>) -> Self {
        Self {
            source: TraceSource::Measured,
            trajectory_id: id.into(),
        }
    }
}

/// Position samples of up to three linear axes. Positions of axes not listed
/// in `axes` are zero and not written out.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    axes: Vec<AxisId>,
    times: Vec<f64>,
    positions: Vec<[f64; 3]>,
    sample_period: Option<f64>,
    pub metadata: TraceMetadata,
}

impl Trace {
    pub fn new(
        axes: Vec<AxisId>,
        times: Vec<f64>,
        positions: Vec<[f64; 3]>,
        metadata: TraceMetadata,
    ) -> Result<Self, TraceError> {
        if times.len() < 2 {
            return Err(TraceError::TooFewSamples {
                needed: 2,
                got: times.len(),
            });
        }
        if positions.len() != times.len() {
            return Err(TraceError::Parse {
                line: 0,
                message: format!(
                    "{} timestamps but {} position rows",
                    times.len(),
                    positions.len()
                ),
            });
        }
        for (i, w) in times.windows(2).enumerate() {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(TraceError::Monotonicity {
                    index: i + 1,
                    t: w[1],
                });
            }
        }
        let mut axes = axes;
        axes.retain(|a| a.is_linear());
        axes.sort();
        axes.dedup();
        let sample_period = detect_period(&times);
        Ok(Self {
            axes,
            times,
            positions,
            sample_period,
            metadata,
        })
    }

    pub fn axes(&self) -> &[AxisId] {
        &self.axes
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Uniform sample period when every spacing agrees within
    /// [`UNIFORM_TOLERANCE_S`]; `None` flags a non-uniform trace.
    pub fn sample_period(&self) -> Option<f64> {
        self.sample_period
    }

    pub fn duration(&self) -> f64 {
        self.times[self.times.len() - 1] - self.times[0]
    }

    pub fn first(&self) -> [f64; 3] {
        self.positions[0]
    }

    pub fn last(&self) -> [f64; 3] {
        self.positions[self.positions.len() - 1]
    }

    /// Column of one axis.
    pub fn axis_positions(&self, axis: AxisId) -> Option<Vec<f64>> {
        let idx = axis.index()?;
        self.axes
            .contains(&axis)
            .then(|| self.positions.iter().map(|p| p[idx]).collect())
    }

    pub fn shifted(&self, dt: f64) -> Self {
        let mut out = self.clone();
        for t in &mut out.times {
            *t += dt;
        }
        out.sample_period = detect_period(&out.times);
        out
    }

    /// Keeps every `factor`-th sample (and always the last one).
    pub fn decimated(&self, factor: usize) -> Self {
        let factor = factor.max(1);
        let n = self.len();
        let mut idx: Vec<usize> = (0..n).step_by(factor).collect();
        if idx.last() != Some(&(n - 1)) {
            idx.push(n - 1);
        }
        let times: Vec<f64> = idx.iter().map(|&i| self.times[i]).collect();
        let sample_period = detect_period(&times);
        Self {
            axes: self.axes.clone(),
            positions: idx.iter().map(|&i| self.positions[i]).collect(),
            times,
            sample_period,
            metadata: self.metadata.clone(),
        }
    }

    /// Appends `other`, skipping its first sample when it repeats our last
    /// timestamp.
    pub(crate) fn append_shifted(&mut self, other: &Trace, offset: f64) {
        let t_end = self.times[self.times.len() - 1];
        for (t, p) in other.times.iter().zip(&other.positions) {
            let t = t + offset;
            if t <= t_end + UNIFORM_TOLERANCE_S {
                continue;
            }
            self.times.push(t);
            self.positions.push(*p);
        }
        for a in &other.axes {
            if !self.axes.contains(a) {
                self.axes.push(*a);
            }
        }
        self.axes.sort();
        self.sample_period = detect_period(&self.times);
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut header = String::from("t_s");
        for a in &self.axes {
            header.push_str(&format!(",{}_mm", a.as_str().to_lowercase()));
        }
        writeln!(w, "{header}")?;
        for (t, p) in self.times.iter().zip(&self.positions) {
            let mut line = format_sig(*t, 9);
            for a in &self.axes {
                line.push(',');
                line.push_str(&format_sig(p[a.index().unwrap()], 9));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn read_csv<R: Read>(reader: R, metadata: TraceMetadata) -> Result<Self, TraceError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| TraceError::Parse {
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        if headers.get(0) != Some("t_s") {
            return Err(TraceError::Parse {
                line: 1,
                message: format!("first column must be `t_s`, got {:?}", headers.get(0)),
            });
        }
        let mut axes = Vec::new();
        for h in headers.iter().skip(1) {
            let axis = match h {
                "x_mm" => AxisId::X,
                "y_mm" => AxisId::Y,
                "z_mm" => AxisId::Z,
                other => {
                    return Err(TraceError::Parse {
                        line: 1,
                        message: format!("unexpected column `{other}`"),
                    })
                }
            };
            if axes.last().is_some_and(|last| *last >= axis) {
                return Err(TraceError::Parse {
                    line: 1,
                    message: "axis columns must be in x, y, z order without repeats".into(),
                });
            }
            axes.push(axis);
        }
        if axes.is_empty() {
            return Err(TraceError::Parse {
                line: 1,
                message: "no axis columns".into(),
            });
        }

        let mut times = Vec::new();
        let mut positions = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| TraceError::Parse {
                line,
                message: e.to_string(),
            })?;
            if rec.len() != axes.len() + 1 {
                return Err(TraceError::Parse {
                    line,
                    message: format!("expected {} fields, got {}", axes.len() + 1, rec.len()),
                });
            }
            let parse = |s: &str| -> Result<f64, TraceError> {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| TraceError::Parse {
                        line,
                        message: format!("not a finite number: `{s}`"),
                    })
            };
            times.push(parse(&rec[0])?);
            let mut p = [0.0; 3];
            for (k, a) in axes.iter().enumerate() {
                p[a.index().unwrap()] = parse(&rec[k + 1])?;
            }
            positions.push(p);
        }
        Trace::new(axes, times, positions, metadata)
    }
}

/// Reads a trace CSV file. The file stem becomes the trajectory id.
pub fn load_trace(path: &Path) -> Result<Trace, TraceError> {
    let file = std::fs::File::open(path)?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Trace::read_csv(file, TraceMetadata::measured(id))
}

pub fn write_trace(trace: &Trace, path: &Path) -> std::io::Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    trace.write_csv(&mut w)?;
    w.flush()
}

fn detect_period(times: &[f64]) -> Option<f64> {
    let n = times.len();
    if n < 2 {
        return None;
    }
    let h = (times[n - 1] - times[0]) / (n - 1) as f64;
    times
        .iter()
        .enumerate()
        .all(|(i, t)| (t - (times[0] + i as f64 * h)).abs() <= UNIFORM_TOLERANCE_S)
        .then_some(h)
}

/// Decimal rendering with `sig` significant digits.
pub fn format_sig(x: f64, sig: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (sig as i32 - 1 - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.starts_with("-0") && s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        return s[1..].to_string();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str) -> Result<Trace, TraceError> {
        Trace::read_csv(text.as_bytes(), TraceMetadata::measured("t"))
    }

    #[test]
    fn reads_well_formed_file() {
        let t = read("t_s,x_mm,y_mm\n0,0,0\n0.001,0.5,0.1\n0.002,1.0,0.2\n").unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.axes(), &[AxisId::X, AxisId::Y]);
        assert!(t.sample_period().is_some());
    }

    #[test]
    fn duplicate_timestamp_rejected() {
        let err = read("t_s,x_mm\n0,0\n0.001,1\n0.001,2\n").unwrap_err();
        assert!(matches!(err, TraceError::Monotonicity { index: 2, .. }));
    }

    #[test]
    fn bad_header_and_rows_rejected() {
        assert!(matches!(read("time,x_mm\n0,0\n1,1\n"), Err(TraceError::Parse { .. })));
        assert!(matches!(read("t_s,q_mm\n0,0\n1,1\n"), Err(TraceError::Parse { .. })));
        assert!(matches!(
            read("t_s,x_mm\n0,0\n1,abc\n"),
            Err(TraceError::Parse { line: 3, .. })
        ));
        assert!(matches!(read("t_s,x_mm\n0,0\n"), Err(TraceError::TooFewSamples { .. })));
    }

    #[test]
    fn non_uniform_is_flagged_not_rejected() {
        let t = read("t_s,z_mm\n0,0\n0.001,1\n0.003,2\n").unwrap();
        assert_eq!(t.sample_period(), None);
    }

    #[test]
    fn significant_digits() {
        assert_eq!(format_sig(123.456789012, 9), "123.456789");
        assert_eq!(format_sig(0.001, 9), "0.00100000000");
        assert_eq!(format_sig(-2.5, 9), "-2.50000000");
        assert_eq!(format_sig(0.0, 9), "0");
        assert_eq!(format_sig(1234567890.0, 9), "1234567890");
    }

    #[test]
    fn decimation_keeps_last_sample() {
        let t = read("t_s,x_mm\n0,0\n1,1\n2,2\n3,3\n").unwrap();
        let d = t.decimated(2);
        assert_eq!(d.times(), &[0.0, 2.0, 3.0]);
    }
}
