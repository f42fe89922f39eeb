//! Kinematic analysis of servo traces.
//!
//! Velocity and acceleration come from three-point finite differences
//! (exact on quadratics for any spacing, on cubics for uniform spacing).
//! Jerk is the three-point derivative of the acceleration after a quadratic
//! Savitzky-Golay smoothing pass, which keeps jerk plateaus readable without
//! biasing their level.
//!
//! Internally everything is in mm and s; [`KinematicIndicators`] converts to
//! m/min, m/s² and m/s³.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::AxisId;
use crate::trace::Trace;

/// Samples below which [`differentiate`] refuses to run.
pub const MIN_SAMPLES: usize = 5;

/// Cruise window: longest run where path speed is at least this fraction of
/// its maximum.
pub const CRUISE_FRACTION: f64 = 0.98;

/// Fraction of the cruise window trimmed at each end before measuring
/// oscillation.
pub const CRUISE_TRIM: f64 = 0.25;

pub const DEFAULT_HOMOGENEITY_THRESHOLD: f64 = 0.05;

/// Attained/commanded ratio under which a quantity is flagged.
pub const ATTAINED_FLAG_RATIO: f64 = 0.5;

pub const SATURATION_RATIO: f64 = 0.95;

/// Relative speed spread allowed inside a plateau for it to count as stable.
pub const PLATEAU_SPREAD: f64 = 0.01;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("trace has no cruise phase")]
    NoCruisePhase,
    #[error("axis sets differ: commanded {commanded:?}, attained {attained:?}")]
    AxisMismatch {
        commanded: Vec<AxisId>,
        attained: Vec<AxisId>,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothingMethod {
    None,
    SavitzkyGolay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmoothingDescriptor {
    pub method: SmoothingMethod,
    /// Odd window length in samples.
    pub window: usize,
}

impl Default for SmoothingDescriptor {
    fn default() -> Self {
        Self {
            method: SmoothingMethod::SavitzkyGolay,
            window: 7,
        }
    }
}

impl SmoothingDescriptor {
    pub fn none() -> Self {
        Self {
            method: SmoothingMethod::None,
            window: 1,
        }
    }

    /// Half window `m` of the jerk filter, or `None` without smoothing.
    fn half_window(&self) -> Option<usize> {
        (self.method == SmoothingMethod::SavitzkyGolay && self.window >= 5).then_some(self.window / 2)
    }
}

/// Trace with per-axis velocity, acceleration and jerk aligned to its
/// timestamps. Edge samples that cannot be differentiated are kept and
/// flagged invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicTrace {
    base: Trace,
    v: Vec<[f64; 3]>,
    a: Vec<[f64; 3]>,
    j: Vec<[f64; 3]>,
    v_valid: Vec<bool>,
    a_valid: Vec<bool>,
    j_valid: Vec<bool>,
    pub smoothing: SmoothingDescriptor,
}

impl KinematicTrace {
    pub fn base(&self) -> &Trace {
        &self.base
    }

    pub fn velocity(&self) -> &[[f64; 3]] {
        &self.v
    }

    pub fn acceleration(&self) -> &[[f64; 3]] {
        &self.a
    }

    pub fn jerk(&self) -> &[[f64; 3]] {
        &self.j
    }

    pub fn velocity_valid(&self) -> &[bool] {
        &self.v_valid
    }

    pub fn acceleration_valid(&self) -> &[bool] {
        &self.a_valid
    }

    pub fn jerk_valid(&self) -> &[bool] {
        &self.j_valid
    }

    fn norm_over_axes(&self, row: &[f64; 3]) -> f64 {
        self.base
            .axes()
            .iter()
            .map(|a| row[a.index().unwrap()].powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Path speed, mm/s, `None` where the velocity is flagged.
    pub fn path_speed(&self) -> Vec<Option<f64>> {
        self.v
            .iter()
            .zip(&self.v_valid)
            .map(|(v, ok)| ok.then(|| self.norm_over_axes(v)))
            .collect()
    }

    fn path_norm(&self, series: &[[f64; 3]], valid: &[bool]) -> Vec<Option<f64>> {
        series
            .iter()
            .zip(valid)
            .map(|(x, ok)| ok.then(|| self.norm_over_axes(x)))
            .collect()
    }

    /// Longest contiguous run of samples with path speed ≥
    /// [`CRUISE_FRACTION`] of the maximum, as an inclusive index range.
    pub fn cruise_window(&self) -> Option<(usize, usize)> {
        let speed = self.path_speed();
        let vmax = speed.iter().flatten().fold(0.0f64, |m, v| m.max(*v));
        if vmax <= 0.0 {
            return None;
        }
        let threshold = CRUISE_FRACTION * vmax;
        let mut best: Option<(usize, usize)> = None;
        let mut start: Option<usize> = None;
        for (i, s) in speed.iter().enumerate() {
            let inside = s.is_some_and(|v| v >= threshold);
            match (inside, start) {
                (true, None) => start = Some(i),
                (false, Some(s0)) => {
                    best = longer(best, (s0, i - 1));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s0) = start {
            best = longer(best, (s0, speed.len() - 1));
        }
        best
    }
}

fn longer(best: Option<(usize, usize)>, cand: (usize, usize)) -> Option<(usize, usize)> {
    match best {
        Some(b) if b.1 - b.0 >= cand.1 - cand.0 => Some(b),
        _ => Some(cand),
    }
}

/// Three-point first and second derivative at an interior sample.
fn three_point(t: [f64; 3], x: [f64; 3]) -> (f64, f64) {
    let h1 = t[1] - t[0];
    let h2 = t[2] - t[1];
    let s1 = (x[1] - x[0]) / h1;
    let s2 = (x[2] - x[1]) / h2;
    ((h1 * s2 + h2 * s1) / (h1 + h2), 2.0 * (s2 - s1) / (h1 + h2))
}

/// Differentiates a position trace.
pub fn differentiate(
    trace: &Trace,
    descriptor: SmoothingDescriptor,
) -> Result<KinematicTrace, AnalysisError> {
    let n = trace.len();
    if n < MIN_SAMPLES {
        return Err(AnalysisError::TooFewSamples {
            needed: MIN_SAMPLES,
            got: n,
        });
    }
    if descriptor.method == SmoothingMethod::SavitzkyGolay && descriptor.window.is_multiple_of(2) {
        return Err(AnalysisError::InvalidInput(format!(
            "smoothing window must be odd, got {}",
            descriptor.window
        )));
    }
    let t = trace.times();
    let x = trace.positions();
    let axes: Vec<usize> = trace.axes().iter().filter_map(|a| a.index()).collect();

    let mut v = vec![[0.0; 3]; n];
    let mut a = vec![[0.0; 3]; n];
    let mut v_valid = vec![false; n];
    for i in 1..n - 1 {
        for &k in &axes {
            let (d1, d2) = three_point([t[i - 1], t[i], t[i + 1]], [x[i - 1][k], x[i][k], x[i + 1][k]]);
            v[i][k] = d1;
            a[i][k] = d2;
        }
        v_valid[i] = true;
    }
    let a_valid = v_valid.clone();

    // With smoothing, jerk is the least-squares slope of the accelerations
    // over the window. On a uniform grid this is the center derivative of the
    // quadratic Savitzky-Golay fit. Its weights on consecutive slopes are
    // non-negative, so it never exceeds the largest raw jerk, whereas
    // differencing smoothed samples overshoots by ~7% at jerk reversals.
    let mut j = vec![[0.0; 3]; n];
    let mut j_valid = vec![false; n];
    let smoothed = descriptor.half_window();
    let (m, range) = match smoothed {
        Some(m) => (m, (1 + m)..(n - 1).saturating_sub(m)),
        None => (1, 2..n.saturating_sub(2)),
    };
    for i in range {
        let ts = &t[i - m..=i + m];
        for &k in &axes {
            let window: Vec<f64> = a[i - m..=i + m].iter().map(|s| s[k]).collect();
            j[i][k] = if smoothed.is_some() {
                least_squares_slope(ts, &window)
            } else {
                three_point([ts[0], ts[1], ts[2]], [window[0], window[1], window[2]]).0
            };
        }
        j_valid[i] = true;
    }

    Ok(KinematicTrace {
        base: trace.clone(),
        v,
        a,
        j,
        v_valid,
        a_valid,
        j_valid,
        smoothing: descriptor,
    })
}

fn least_squares_slope(t: &[f64], y: &[f64]) -> f64 {
    let n = t.len() as f64;
    let (tm, ym) = (t.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (num, den) = t.iter().zip(y).fold((0.0, 0.0), |(num, den), (ti, yi)| {
        (num + (ti - tm) * (yi - ym), den + (ti - tm) * (ti - tm))
    });
    num / den
}

/// Maxima for one axis, in m/min, m/s² and m/s³.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisIndicators {
    pub v_max: f64,
    pub a_max: f64,
    pub j_max: f64,
    /// Time from trace start to the first velocity maximum, s.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_to_vmax: Option<f64>,
}

impl AxisIndicators {
    pub fn new(v_max: f64, a_max: f64, j_max: f64) -> Self {
        Self {
            v_max,
            a_max,
            j_max,
            time_to_vmax: None,
        }
    }

    pub fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KinematicIndicators {
    pub axes: BTreeMap<AxisId, AxisIndicators>,
}

impl KinematicIndicators {
    pub fn get(&self, axis: AxisId) -> Option<&AxisIndicators> {
        self.axes.get(&axis)
    }
}

fn max_abs(series: &[[f64; 3]], valid: &[bool], k: usize) -> (f64, Option<usize>) {
    let mut best = (0.0, None);
    for (i, (row, ok)) in series.iter().zip(valid).enumerate() {
        if *ok && row[k].abs() > best.0 {
            best = (row[k].abs(), Some(i));
        }
    }
    best
}

/// Per-axis maxima of |v|, |a|, |j| over valid samples.
pub fn kinematic_indicators(kt: &KinematicTrace) -> KinematicIndicators {
    let t0 = kt.base.times()[0];
    let axes = kt
        .base
        .axes()
        .iter()
        .map(|&axis| {
            let k = axis.index().unwrap();
            let (v, at) = max_abs(&kt.v, &kt.v_valid, k);
            let (a, _) = max_abs(&kt.a, &kt.a_valid, k);
            let (j, _) = max_abs(&kt.j, &kt.j_valid, k);
            let ind = AxisIndicators {
                v_max: v * 60.0 / 1000.0,
                a_max: a / 1000.0,
                j_max: j / 1000.0,
                time_to_vmax: Some(at.map_or(0.0, |i| kt.base.times()[i] - t0)),
            };
            (axis, ind)
        })
        .collect();
    KinematicIndicators { axes }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityReport {
    pub velocity_diff: f64,
    pub accel_diff: f64,
    pub jerk_diff: f64,
    pub threshold: f64,
    pub homogeneous: bool,
}

fn relative_difference(a: f64, b: f64) -> f64 {
    let m = a.abs().max(b.abs());
    if m == 0.0 {
        0.0
    } else {
        (a - b).abs() / m
    }
}

/// Relative differences `|qx − qy| / max(qx, qy)` between the two axes of an
/// interpolated move.
pub fn homogeneity(ix: &AxisIndicators, iy: &AxisIndicators, threshold: f64) -> HomogeneityReport {
    let velocity_diff = relative_difference(ix.v_max, iy.v_max);
    let accel_diff = relative_difference(ix.a_max, iy.a_max);
    let jerk_diff = relative_difference(ix.j_max, iy.j_max);
    HomogeneityReport {
        velocity_diff,
        accel_diff,
        jerk_diff,
        threshold,
        homogeneous: velocity_diff <= threshold && accel_diff <= threshold && jerk_diff <= threshold,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationReport {
    /// m/min
    pub commanded: f64,
    /// m/min
    pub attained: f64,
    pub ratio: f64,
    /// Plateau duration over trace duration.
    pub plateau_fraction: f64,
    pub stable_plateau: bool,
    pub saturated: bool,
}

/// Compares the attained path speed to the commanded feed (mm/min).
pub fn saturation_analysis(kt: &KinematicTrace, commanded_feed: f64) -> Result<SaturationReport, AnalysisError> {
    if !(commanded_feed.is_finite() && commanded_feed > 0.0) {
        return Err(AnalysisError::InvalidInput(format!(
            "commanded feed must be > 0, got {commanded_feed}"
        )));
    }
    let speed = kt.path_speed();
    let vmax = speed.iter().flatten().fold(0.0f64, |m, v| m.max(*v));
    let ratio = vmax / (commanded_feed / 60.0);
    let (plateau_fraction, stable_plateau) = match kt.cruise_window() {
        Some((s, e)) => {
            let t = kt.base.times();
            let fraction = if kt.base.duration() > 0.0 {
                (t[e] - t[s]) / kt.base.duration()
            } else {
                0.0
            };
            let inside: Vec<f64> = speed[s..=e].iter().flatten().copied().collect();
            let lo = inside.iter().copied().fold(f64::INFINITY, f64::min);
            let stable = inside.len() >= MIN_SAMPLES && (vmax - lo) <= PLATEAU_SPREAD * vmax * 2.0;
            (fraction, stable)
        }
        None => (0.0, false),
    };
    Ok(SaturationReport {
        commanded: commanded_feed / 1000.0,
        attained: vmax * 60.0 / 1000.0,
        ratio,
        plateau_fraction,
        stable_plateau,
        saturated: ratio < SATURATION_RATIO && stable_plateau,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub window_start: f64,
    pub window_end: f64,
    /// RMS of path acceleration over the trimmed cruise window divided by
    /// its maximum over the whole trace.
    pub accel_oscillation: f64,
    pub jerk_oscillation: f64,
}

impl StabilityReport {
    /// Single figure: the mean of both normalized oscillations.
    pub fn index(&self) -> f64 {
        (self.accel_oscillation + self.jerk_oscillation) / 2.0
    }
}

/// Oscillation of acceleration and jerk during cruise. Higher is less stable.
///
/// The cruise window is the longest run at ≥ 98 % of the maximum path speed;
/// a quarter of it is trimmed at each end so the tails of the acceleration
/// ramps do not count as oscillation.
pub fn stability_metric(kt: &KinematicTrace) -> Result<StabilityReport, AnalysisError> {
    let (s, e) = kt.cruise_window().ok_or(AnalysisError::NoCruisePhase)?;
    let trim = ((e - s + 1) as f64 * CRUISE_TRIM).floor() as usize;
    let (cs, ce) = (s + trim, e - trim);
    let acc = kt.path_norm(&kt.a, &kt.a_valid);
    let jerk = kt.path_norm(&kt.j, &kt.j_valid);
    let core_a: Vec<f64> = acc[cs..=ce].iter().flatten().copied().collect();
    let core_j: Vec<f64> = jerk[cs..=ce].iter().flatten().copied().collect();
    if core_a.len() < 3 || core_j.len() < 3 {
        return Err(AnalysisError::NoCruisePhase);
    }
    let rms = |xs: &[f64]| (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt();
    let max = |xs: &[Option<f64>]| xs.iter().flatten().fold(0.0f64, |m, v| m.max(*v));
    let normalized = |core: &[f64], all: &[Option<f64>]| {
        let m = max(all);
        if m > 0.0 {
            rms(core) / m
        } else {
            0.0
        }
    };
    let t = kt.base.times();
    Ok(StabilityReport {
        window_start: t[s],
        window_end: t[e],
        accel_oscillation: normalized(&core_a, &acc),
        jerk_oscillation: normalized(&core_j, &jerk),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantityComparison {
    pub commanded: f64,
    pub attained: f64,
    /// attained / commanded; `None` when nothing was commanded.
    pub ratio: Option<f64>,
    pub flagged: bool,
}

impl QuantityComparison {
    fn new(commanded: f64, attained: f64) -> Self {
        let ratio = if commanded > 0.0 {
            Some(attained / commanded)
        } else if attained == 0.0 {
            Some(1.0)
        } else {
            None
        };
        Self {
            commanded,
            attained,
            ratio,
            flagged: ratio.is_some_and(|r| r < ATTAINED_FLAG_RATIO),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisComparison {
    pub velocity: QuantityComparison,
    pub accel: QuantityComparison,
    pub jerk: QuantityComparison,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DynamicsComparison {
    pub axes: BTreeMap<AxisId, AxisComparison>,
}

impl DynamicsComparison {
    pub fn flagged(&self) -> Vec<(AxisId, &'static str)> {
        let mut out = Vec::new();
        for (axis, c) in &self.axes {
            for (name, q) in [("velocity", c.velocity), ("accel", c.accel), ("jerk", c.jerk)] {
                if q.flagged {
                    out.push((*axis, name));
                }
            }
        }
        out
    }
}

/// Per-quantity attained/commanded ratios for matching axes.
pub fn compare_commanded_attained(
    commanded: &KinematicIndicators,
    attained: &KinematicIndicators,
) -> Result<DynamicsComparison, AnalysisError> {
    let ca: Vec<AxisId> = commanded.axes.keys().copied().collect();
    let aa: Vec<AxisId> = attained.axes.keys().copied().collect();
    if ca != aa {
        return Err(AnalysisError::AxisMismatch {
            commanded: ca,
            attained: aa,
        });
    }
    let axes = commanded
        .axes
        .iter()
        .map(|(axis, c)| {
            let a = &attained.axes[axis];
            (
                *axis,
                AxisComparison {
                    velocity: QuantityComparison::new(c.v_max, a.v_max),
                    accel: QuantityComparison::new(c.a_max, a.a_max),
                    jerk: QuantityComparison::new(c.j_max, a.j_max),
                },
            )
        })
        .collect();
    Ok(DynamicsComparison { axes })
}
