//! Jerk-limited motion simulation producing synthetic servo traces.
//!
//! Every segment starts and ends at rest. Linear moves are planned on the path
//! parameter with limits projected from the moving axes; arcs are planned on
//! arc length with the tangential feed capped by centripetal acceleration and
//! centripetal jerk.

mod scurve;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use scurve::{plan_scurve, MotionState, SCurveProfile, PHASE_JERK_SIGN};

use crate::model::{AxisId, AxisLimits};
use crate::trace::{Trace, TraceError, TraceMetadata};

/// Default simulation step, s.
pub const DEFAULT_DT: f64 = 1e-3;

/// Position continuity tolerance between consecutive segments, mm.
pub const CONTINUITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MotionError {
    #[error("start and end points coincide")]
    DegenerateMove,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no limits given for moving axis {0}")]
    MissingAxisLimits(AxisId),
    #[error("segment {index} starts {gap} mm away from the previous end")]
    Discontinuous { index: usize, gap: f64 },
    #[error(transparent)]
    Trace(#[from] TraceError),
}

pub type Point3 = [f64; 3];

pub type LimitMap = BTreeMap<AxisId, AxisLimits>;

fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(a: Point3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn dist(a: Point3, b: Point3) -> f64 {
    norm(sub(a, b))
}

/// Circular arc in the XY plane. Positive sweep (`end_angle > start_angle`)
/// is counter-clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArcSegment {
    pub center: Point3,
    pub radius: f64,
    /// rad
    pub start_angle: f64,
    /// rad
    pub end_angle: f64,
    /// mm/min
    pub feed: f64,
}

impl ArcSegment {
    pub fn full_circle(center: Point3, radius: f64, feed: f64) -> Self {
        Self {
            center,
            radius,
            start_angle: 0.0,
            end_angle: 2.0 * PI,
            feed,
        }
    }

    pub fn point_at(&self, angle: f64) -> Point3 {
        [
            self.center[0] + self.radius * angle.cos(),
            self.center[1] + self.radius * angle.sin(),
            self.center[2],
        ]
    }

    pub fn start(&self) -> Point3 {
        self.point_at(self.start_angle)
    }

    pub fn end(&self) -> Point3 {
        self.point_at(self.end_angle)
    }

    pub fn length(&self) -> f64 {
        self.radius * (self.end_angle - self.start_angle).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Segment {
    Linear {
        start: Point3,
        end: Point3,
        /// mm/min
        feed: f64,
    },
    Arc(ArcSegment),
    Dwell {
        seconds: f64,
    },
}

impl Segment {
    fn start(&self) -> Option<Point3> {
        match self {
            Segment::Linear { start, .. } => Some(*start),
            Segment::Arc(arc) => Some(arc.start()),
            Segment::Dwell { .. } => None,
        }
    }

    fn end(&self) -> Option<Point3> {
        match self {
            Segment::Linear { end, .. } => Some(*end),
            Segment::Arc(arc) => Some(arc.end()),
            Segment::Dwell { .. } => None,
        }
    }

    fn feed(&self) -> Option<f64> {
        match self {
            Segment::Linear { feed, .. } => Some(*feed),
            Segment::Arc(arc) => Some(arc.feed),
            Segment::Dwell { .. } => None,
        }
    }

    fn reversed(&self) -> Segment {
        match self {
            Segment::Linear { start, end, feed } => Segment::Linear {
                start: *end,
                end: *start,
                feed: *feed,
            },
            Segment::Arc(arc) => Segment::Arc(ArcSegment {
                start_angle: arc.end_angle,
                end_angle: arc.start_angle,
                ..*arc
            }),
            Segment::Dwell { seconds } => Segment::Dwell { seconds: *seconds },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApproachDirection {
    #[default]
    Positive,
    Negative,
    Bidirectional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub segments: Vec<Segment>,
    #[serde(default = "one")]
    pub repeats: u32,
    #[serde(default)]
    pub approach_direction: ApproachDirection,
}

fn one() -> u32 {
    1
}

impl TrajectorySpec {
    pub fn single(segment: Segment) -> Self {
        Self {
            segments: vec![segment],
            repeats: 1,
            approach_direction: ApproachDirection::Positive,
        }
    }

    pub fn validate(&self) -> Result<(), MotionError> {
        if self.repeats == 0 {
            return Err(MotionError::InvalidInput("repeats must be >= 1".into()));
        }
        if self.segments.iter().all(|s| matches!(s, Segment::Dwell { .. })) {
            return Err(MotionError::InvalidInput(
                "trajectory needs at least one move".into(),
            ));
        }
        let mut last_end: Option<Point3> = None;
        for (index, seg) in self.segments.iter().enumerate() {
            match seg {
                Segment::Arc(arc) if !(arc.radius.is_finite() && arc.radius > 0.0) => {
                    return Err(MotionError::InvalidInput(format!(
                        "segment {index}: arc radius must be > 0"
                    )))
                }
                Segment::Dwell { seconds } if !(seconds.is_finite() && *seconds > 0.0) => {
                    return Err(MotionError::InvalidInput(format!(
                        "segment {index}: dwell must be > 0 s"
                    )))
                }
                _ => {}
            }
            if let Some(f) = seg.feed() {
                if !(f.is_finite() && f > 0.0) {
                    return Err(MotionError::InvalidInput(format!(
                        "segment {index}: feed must be > 0"
                    )));
                }
            }
            if let (Some(prev), Some(start)) = (last_end, seg.start()) {
                let gap = dist(prev, start);
                if gap > CONTINUITY_TOLERANCE {
                    return Err(MotionError::Discontinuous { index, gap });
                }
            }
            if let Some(end) = seg.end() {
                last_end = Some(end);
            }
        }
        Ok(())
    }
}

/// Effective path limits (v mm/s, a mm/s², j mm/s³) along a unit direction:
/// for every moving axis the axis limit divided by its direction component.
pub fn path_limits(direction: Point3, limits: &LimitMap) -> Result<(f64, f64, f64), MotionError> {
    let mut out = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    for axis in AxisId::LINEAR {
        let c = direction[axis.index().unwrap()].abs();
        if c <= 1e-12 {
            continue;
        }
        let lim = limits.get(&axis).ok_or(MotionError::MissingAxisLimits(axis))?;
        out.0 = out.0.min(lim.v_max_mm_s() / c);
        out.1 = out.1.min(lim.a_max_mm_s2() / c);
        out.2 = out.2.min(lim.j_max_mm_s3() / c);
    }
    Ok(out)
}

/// Analytic tangential feed cap on a circle of `radius` mm, in mm/s:
/// `min(sqrt(a·R), cbrt(j·R²))` with `a` in mm/s² and `j` in mm/s³.
pub fn arc_feed_cap(radius: f64, a_radial: f64, j_radial: f64) -> f64 {
    (a_radial * radius).sqrt().min((j_radial * radius * radius).cbrt())
}

/// Sample times `0, dt, 2dt, …` up to `total`, ending exactly at `total`.
/// Grid points closer than `dt/2` to the end are dropped.
fn sample_times(total: f64, dt: f64) -> Vec<f64> {
    if total <= 0.0 {
        return vec![0.0, dt];
    }
    let mut times = Vec::with_capacity((total / dt) as usize + 2);
    let mut k = 0u64;
    loop {
        let t = k as f64 * dt;
        if t > total - 0.5 * dt {
            break;
        }
        times.push(t);
        k += 1;
    }
    times.push(total);
    times
}

fn check_dt(dt: f64) -> Result<(), MotionError> {
    if dt.is_finite() && dt > 0.0 {
        Ok(())
    } else {
        Err(MotionError::InvalidInput(format!("dt must be > 0, got {dt}")))
    }
}

/// Samples a planned profile along `direction` from `origin`, evaluating the
/// closed form at every timestamp.
pub fn sample_profile(
    profile: &SCurveProfile,
    direction: Point3,
    origin: Point3,
    dt: f64,
) -> Result<Trace, MotionError> {
    check_dt(dt)?;
    let times = sample_times(profile.total_time(), dt);
    let positions = times
        .iter()
        .map(|&t| {
            let s = profile.position_at(t);
            [
                origin[0] + s * direction[0],
                origin[1] + s * direction[1],
                origin[2] + s * direction[2],
            ]
        })
        .collect();
    Ok(Trace::new(
        AxisId::LINEAR.to_vec(),
        times,
        positions,
        TraceMetadata::simulated("profile"),
    )?)
}

/// Profile used by [`simulate_linear_move`].
pub fn plan_linear_move(
    p0: Point3,
    p1: Point3,
    feed: f64,
    limits: &LimitMap,
) -> Result<SCurveProfile, MotionError> {
    let delta = sub(p1, p0);
    let length = norm(delta);
    if length <= CONTINUITY_TOLERANCE {
        return Err(MotionError::DegenerateMove);
    }
    if !(feed.is_finite() && feed > 0.0) {
        return Err(MotionError::InvalidInput(format!("feed must be > 0, got {feed}")));
    }
    let dir = [delta[0] / length, delta[1] / length, delta[2] / length];
    let (v, a, j) = path_limits(dir, limits)?;
    plan_scurve(length, (feed / 60.0).min(v), a, j)
}

/// Linear move from `p0` to `p1` at `feed` mm/min.
pub fn simulate_linear_move(
    p0: Point3,
    p1: Point3,
    feed: f64,
    limits: &LimitMap,
    dt: f64,
) -> Result<Trace, MotionError> {
    check_dt(dt)?;
    let profile = plan_linear_move(p0, p1, feed, limits)?;
    let length = dist(p0, p1);
    let dir = [
        (p1[0] - p0[0]) / length,
        (p1[1] - p0[1]) / length,
        (p1[2] - p0[2]) / length,
    ];
    let times = sample_times(profile.total_time(), dt);
    let last = times.len() - 1;
    let positions = times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            if i == last {
                return p1;
            }
            let s = profile.position_at(t);
            [p0[0] + s * dir[0], p0[1] + s * dir[1], p0[2] + s * dir[2]]
        })
        .collect();
    Ok(Trace::new(
        AxisId::LINEAR.to_vec(),
        times,
        positions,
        TraceMetadata::simulated("linear"),
    )?)
}

/// Tangential limits `(v_eff mm/s, a mm/s², j mm/s³)` for an arc. The radial
/// acceleration and jerk limits are the smaller of the X and Y axis limits.
pub fn arc_limits(arc: &ArcSegment, limits: &LimitMap) -> Result<(f64, f64, f64), MotionError> {
    let x = limits.get(&AxisId::X).ok_or(MotionError::MissingAxisLimits(AxisId::X))?;
    let y = limits.get(&AxisId::Y).ok_or(MotionError::MissingAxisLimits(AxisId::Y))?;
    let a = x.a_max_mm_s2().min(y.a_max_mm_s2());
    let j = x.j_max_mm_s3().min(y.j_max_mm_s3());
    let v_axis = x.v_max_mm_s().min(y.v_max_mm_s());
    let v_eff = (arc.feed / 60.0)
        .min(v_axis)
        .min(arc_feed_cap(arc.radius, a, j));
    Ok((v_eff, a, j))
}

pub fn plan_circular_move(arc: &ArcSegment, limits: &LimitMap) -> Result<SCurveProfile, MotionError> {
    if !(arc.radius.is_finite() && arc.radius > 0.0) {
        return Err(MotionError::InvalidInput("arc radius must be > 0".into()));
    }
    if !(arc.feed.is_finite() && arc.feed > 0.0) {
        return Err(MotionError::InvalidInput("arc feed must be > 0".into()));
    }
    let (v, a, j) = arc_limits(arc, limits)?;
    plan_scurve(arc.length(), v, a, j)
}

/// Circular interpolation in the XY plane.
pub fn simulate_circular_move(
    arc: &ArcSegment,
    limits: &LimitMap,
    dt: f64,
) -> Result<Trace, MotionError> {
    check_dt(dt)?;
    let profile = plan_circular_move(arc, limits)?;
    let sweep = arc.end_angle - arc.start_angle;
    let sign = sweep.signum();
    let times = sample_times(profile.total_time(), dt);
    let last = times.len() - 1;
    let positions = times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let angle = if i == last {
                arc.end_angle
            } else {
                arc.start_angle + sign * profile.position_at(t) / arc.radius
            };
            arc.point_at(angle)
        })
        .collect();
    Ok(Trace::new(
        AxisId::LINEAR.to_vec(),
        times,
        positions,
        TraceMetadata::simulated("arc"),
    )?)
}

fn dwell_trace(at: Point3, seconds: f64, dt: f64) -> Result<Trace, MotionError> {
    let times = sample_times(seconds, dt);
    let positions = vec![at; times.len()];
    Ok(Trace::new(
        AxisId::LINEAR.to_vec(),
        times,
        positions,
        TraceMetadata::simulated("dwell"),
    )?)
}

/// Runs a whole trajectory: segments in order, repeated `repeats` times.
/// Negative approach runs the path reversed; bidirectional alternates.
/// A return move at the first segment's feed closes open paths between
/// repeats.
pub fn run_trajectory(spec: &TrajectorySpec, limits: &LimitMap, dt: f64) -> Result<Trace, MotionError> {
    check_dt(dt)?;
    spec.validate()?;
    let forward: Vec<Segment> = spec.segments.clone();
    let backward: Vec<Segment> = spec.segments.iter().rev().map(Segment::reversed).collect();
    let return_feed = spec.segments.iter().find_map(Segment::feed).unwrap_or(1.0);

    let pass_for = |r: u32| match spec.approach_direction {
        ApproachDirection::Positive => &forward,
        ApproachDirection::Negative => &backward,
        ApproachDirection::Bidirectional if r % 2 == 1 => &backward,
        ApproachDirection::Bidirectional => &forward,
    };
    let mut plan: Vec<Segment> = Vec::new();
    let mut position = pass_for(0).iter().find_map(Segment::start).unwrap_or([0.0; 3]);
    for r in 0..spec.repeats {
        let pass = pass_for(r);
        if let Some(start) = pass.iter().find_map(Segment::start) {
            if dist(position, start) > CONTINUITY_TOLERANCE {
                plan.push(Segment::Linear {
                    start: position,
                    end: start,
                    feed: return_feed,
                });
            }
        }
        for seg in pass {
            plan.push(seg.clone());
            if let Some(end) = seg.end() {
                position = end;
            }
        }
    }

    let mut trace: Option<Trace> = None;
    let mut position = plan.iter().find_map(Segment::start).unwrap_or([0.0; 3]);
    for seg in &plan {
        let piece = match seg {
            Segment::Linear { start, end, feed } => simulate_linear_move(*start, *end, *feed, limits, dt)?,
            Segment::Arc(arc) => simulate_circular_move(arc, limits, dt)?,
            Segment::Dwell { seconds } => dwell_trace(position, *seconds, dt)?,
        };
        if let Some(end) = seg.end() {
            position = end;
        }
        match &mut trace {
            None => trace = Some(piece),
            Some(t) => {
                let offset = t.times()[t.len() - 1];
                t.append_shifted(&piece, offset);
            }
        }
    }
    let mut trace = trace.expect("validated trajectory has a move");
    trace.metadata = TraceMetadata::simulated("trajectory");
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn limits(v_m_min: f64, a: f64, j: f64) -> LimitMap {
        AxisId::LINEAR
            .iter()
            .map(|&id| {
                (
                    id,
                    AxisLimits {
                        axis_id: id,
                        v_max: v_m_min * 1000.0,
                        a_max: a,
                        j_max: j,
                        travel: 1000.0,
                    },
                )
            })
            .collect()
    }

    #[test]
    fn zero_profile_gives_two_samples_at_origin() {
        let t = sample_profile(&SCurveProfile::zero(), [1.0, 0.0, 0.0], [1.0, 2.0, 3.0], 1e-3).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.first(), [1.0, 2.0, 3.0]);
        assert_eq!(t.last(), [1.0, 2.0, 3.0]);
    }

    #[test]
    fn halving_dt_keeps_shared_samples() {
        let p = plan_scurve(100.0, 400.0, 3000.0, 100_000.0).unwrap();
        let a = sample_profile(&p, [1.0, 0.0, 0.0], [0.0; 3], 1e-3).unwrap();
        let b = sample_profile(&p, [1.0, 0.0, 0.0], [0.0; 3], 5e-4).unwrap();
        for (i, t) in a.times().iter().enumerate().take(a.len() - 1) {
            let jb = b.times().iter().position(|tb| tb == t).unwrap();
            assert!((a.positions()[i][0] - b.positions()[jb][0]).abs() <= 1e-9);
        }
        assert!((a.last()[0] - a.first()[0] - 100.0).abs() <= 1e-6);
    }

    #[test]
    fn degenerate_linear_move() {
        let r = simulate_linear_move([1.0; 3], [1.0; 3], 1000.0, &limits(30.0, 2.0, 100.0), 1e-3);
        assert!(matches!(r, Err(MotionError::DegenerateMove)));
    }

    #[test]
    fn diagonal_feed_capped_by_axis_limits() {
        let lim = limits(30.0, 2.73, 120.0);
        let p = plan_linear_move([0.0; 3], [500.0, 500.0, 0.0], 60_000.0, &lim).unwrap();
        // each axis carries v/√2; the path may go √2 faster than one axis
        assert!((p.v_peak - 500.0 * 2f64.sqrt()).abs() < 1e-9);
        let p = plan_linear_move([0.0; 3], [500.0, 500.0, 0.0], 30_000.0, &lim).unwrap();
        assert!((p.v_peak - 500.0).abs() < 1e-9);
    }

    #[test]
    fn linear_move_ends_on_target() {
        let t = simulate_linear_move([0.0; 3], [320.0, -50.0, 10.0], 20_000.0, &limits(30.0, 2.73, 120.0), 1e-3).unwrap();
        assert_eq!(t.last(), [320.0, -50.0, 10.0]);
    }

    #[test]
    fn arc_saturates_on_small_radius() {
        let lim = limits(30.0, 0.6, 120.0);
        let arc = ArcSegment::full_circle([0.0; 3], 5.0, 9000.0);
        let (v, _, _) = arc_limits(&arc, &lim).unwrap();
        assert!((v - (600.0f64 * 5.0).sqrt()).abs() < 1e-9);
        assert!((v * 60.0 / 1000.0 - 3.29).abs() < 0.01);
    }

    #[test]
    fn huge_radius_keeps_commanded_feed() {
        let lim = limits(30.0, 0.6, 120.0);
        let arc = ArcSegment {
            center: [0.0; 3],
            radius: 1e6,
            start_angle: 0.0,
            end_angle: 1e-3,
            feed: 9000.0,
        };
        assert_eq!(arc_limits(&arc, &lim).unwrap().0, 150.0);
    }

    #[test]
    fn arc_samples_stay_on_circle() {
        let arc = ArcSegment::full_circle([10.0, -4.0, 2.0], 5.0, 6000.0);
        let t = simulate_circular_move(&arc, &limits(30.0, 0.6, 120.0), 1e-3).unwrap();
        for p in t.positions() {
            let r = ((p[0] - 10.0).powi(2) + (p[1] + 4.0).powi(2)).sqrt();
            assert!((r - 5.0).abs() <= 1e-6);
            assert_eq!(p[2], 2.0);
        }
    }

    #[test]
    fn single_segment_trajectory_equals_linear_move() {
        let lim = limits(30.0, 2.73, 120.0);
        let seg = Segment::Linear { start: [0.0; 3], end: [200.0, 0.0, 0.0], feed: 18_000.0 };
        let a = run_trajectory(&TrajectorySpec::single(seg), &lim, 1e-3).unwrap();
        let b = simulate_linear_move([0.0; 3], [200.0, 0.0, 0.0], 18_000.0, &lim, 1e-3).unwrap();
        assert_eq!(a.times(), b.times());
        assert_eq!(a.positions(), b.positions());
    }

    #[test]
    fn out_and_back_closes() {
        let lim = limits(30.0, 2.73, 120.0);
        let spec = TrajectorySpec {
            segments: vec![
                Segment::Linear { start: [0.0; 3], end: [100.0, 50.0, 0.0], feed: 18_000.0 },
                Segment::Dwell { seconds: 0.05 },
                Segment::Linear { start: [100.0, 50.0, 0.0], end: [0.0; 3], feed: 18_000.0 },
            ],
            repeats: 2,
            approach_direction: ApproachDirection::Positive,
        };
        let t = run_trajectory(&spec, &lim, 1e-3).unwrap();
        assert!(dist(t.last(), [0.0; 3]) <= 1e-6);
        assert!(t.times().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn open_path_repeats_insert_return_move() {
        let lim = limits(30.0, 2.73, 120.0);
        let spec = TrajectorySpec {
            segments: vec![Segment::Linear { start: [0.0; 3], end: [100.0, 0.0, 0.0], feed: 6000.0 }],
            repeats: 2,
            approach_direction: ApproachDirection::Bidirectional,
        };
        let t = run_trajectory(&spec, &lim, 1e-3).unwrap();
        assert!(dist(t.last(), [0.0; 3]) <= 1e-6);
        let pos = TrajectorySpec { approach_direction: ApproachDirection::Positive, ..spec };
        let t = run_trajectory(&pos, &lim, 1e-3).unwrap();
        assert!(dist(t.last(), [100.0, 0.0, 0.0]) <= 1e-6);
    }

    #[test]
    fn discontinuous_spec_rejected() {
        let spec = TrajectorySpec {
            segments: vec![
                Segment::Linear { start: [0.0; 3], end: [1.0, 0.0, 0.0], feed: 100.0 },
                Segment::Linear { start: [2.0, 0.0, 0.0], end: [3.0, 0.0, 0.0], feed: 100.0 },
            ],
            repeats: 1,
            approach_direction: ApproachDirection::Positive,
        };
        assert!(matches!(spec.validate(), Err(MotionError::Discontinuous { index: 1, .. })));
    }
}
