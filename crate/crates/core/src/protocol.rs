//! Standard characterization protocol derived from a machine's travels.
//!
//! Points are in machine coordinates with every axis running from 0 to its
//! travel. `O` is the center of the work volume; the `A` points sit on the
//! edges of an XY window covering a fraction of the X/Y travels, the `B`
//! points bound a Z stroke through `O`, and the `C` trajectories are full
//! circles around `O` at two feeds.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrology::Direction;
use crate::model::{AxisId, ValidatedDatasheet};
use crate::motion::{ArcSegment, Point3, Segment, TrajectorySpec};

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("travel too small: {0}")]
    TravelTooSmall(String),
    #[error("invalid override: {0}")]
    InvalidOverride(String),
}

/// Optional changes to the standard geometry. Omitted fields keep their
/// defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolOverrides {
    /// Fraction of the X/Y travels spanned by the `A` window (0.9).
    pub a_span_fraction: Option<f64>,
    /// Fraction of the Z travel spanned by the `B` stroke (0.8).
    pub b_span_fraction: Option<f64>,
    /// mm (100)
    pub c1_radius: Option<f64>,
    /// mm (5)
    pub c2_radius: Option<f64>,
    /// Feeds of the `a` and `b` circle variants, mm/min (6000, 9000).
    pub circle_feeds: Option<[f64; 2]>,
    /// Offset of `A7` along X and `A8` along Y as a fraction of the span (0).
    pub a7_a8_offset: Option<f64>,
    /// Linear feed, mm/min (fastest axis rapid).
    pub linear_feed: Option<f64>,
    /// Targets per axis in the positioning plan (5).
    pub positioning_targets: Option<usize>,
    /// Approaches per direction and target (5).
    pub positioning_repeats: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    Linear,
    Circle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTrajectory {
    pub id: String,
    pub kind: TrajectoryKind,
    /// mm/min
    pub commanded_feed: f64,
    pub spec: TrajectorySpec,
}

impl NamedTrajectory {
    /// Axes the trajectory moves.
    pub fn moving_axes(&self) -> Vec<AxisId> {
        match &self.spec.segments[0] {
            Segment::Linear { start, end, .. } => AxisId::LINEAR
                .into_iter()
                .filter(|a| {
                    let k = a.index().unwrap();
                    (end[k] - start[k]).abs() > 1e-9
                })
                .collect(),
            _ => vec![AxisId::X, AxisId::Y],
        }
    }

    /// Nominal circle of a circular trajectory.
    pub fn nominal_circle(&self) -> Option<crate::metrology::Circle> {
        match &self.spec.segments[0] {
            Segment::Arc(arc) => Some(crate::metrology::Circle {
                center: [arc.center[0], arc.center[1]],
                radius: arc.radius,
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositioningPlan {
    /// mm
    pub targets: Vec<f64>,
    pub repeats: usize,
    pub directions: Vec<Direction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Detourage,
    Alesage,
    Percage,
    Taraudage,
}

/// Nominal geometry in the part frame, mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum NominalGeometry {
    /// Milled face; `normal` in the part frame.
    Face { normal: [f64; 3] },
    Bore { center: [f64; 2], diameter: f64 },
    HolePattern { diameter: f64, centers: Vec<[f64; 2]> },
    Thread { diameter: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartEntity {
    pub entity_id: String,
    pub kind: EntityKind,
    pub nominal: NominalGeometry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub machine: ValidatedDatasheet,
    pub points: BTreeMap<String, Point3>,
    pub trajectories: Vec<NamedTrajectory>,
    pub positioning_plan: BTreeMap<AxisId, PositioningPlan>,
    pub part_entities: Vec<PartEntity>,
    pub overrides: ProtocolOverrides,
}

impl ProtocolSpec {
    pub fn trajectory(&self, id: &str) -> Option<&NamedTrajectory> {
        self.trajectories.iter().find(|t| t.id == id)
    }
}

fn fraction(name: &str, value: Option<f64>, default: f64) -> Result<f64, ProtocolError> {
    let v = value.unwrap_or(default);
    if v.is_finite() && v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(ProtocolError::InvalidOverride(format!("{name} must be in (0, 1], got {v}")))
    }
}

fn positive(name: &str, value: Option<f64>, default: f64) -> Result<f64, ProtocolError> {
    let v = value.unwrap_or(default);
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(ProtocolError::InvalidOverride(format!("{name} must be > 0, got {v}")))
    }
}

/// Builds the standard protocol for a validated machine.
pub fn build_standard_protocol(
    machine: &ValidatedDatasheet,
    overrides: &ProtocolOverrides,
) -> Result<ProtocolSpec, ProtocolError> {
    let mut travel = [0.0; 3];
    for axis in AxisId::LINEAR {
        let t = machine.axis(axis).map_or(0.0, |a| a.travel);
        if !(t > 0.0) {
            return Err(ProtocolError::TravelTooSmall(format!("axis {axis} has no travel")));
        }
        travel[axis.index().unwrap()] = t;
    }
    let af = fraction("a_span_fraction", overrides.a_span_fraction, 0.9)?;
    let bf = fraction("b_span_fraction", overrides.b_span_fraction, 0.8)?;
    let offset = overrides.a7_a8_offset.unwrap_or(0.0);
    if !(0.0..=1.0).contains(&offset) {
        return Err(ProtocolError::InvalidOverride(format!("a7_a8_offset must be in [0, 1], got {offset}")));
    }
    let r1 = positive("c1_radius", overrides.c1_radius, 100.0)?;
    let r2 = positive("c2_radius", overrides.c2_radius, 5.0)?;
    let feeds = overrides.circle_feeds.unwrap_or([6000.0, 9000.0]);
    for f in feeds {
        positive("circle_feeds", Some(f), 1.0)?;
    }
    let rapid = machine.axes.iter().map(|a| a.v_max).fold(0.0, f64::max);
    let linear_feed = positive("linear_feed", overrides.linear_feed, rapid)?;
    let n_targets = overrides.positioning_targets.unwrap_or(5);
    let repeats = overrides.positioning_repeats.unwrap_or(5);
    if n_targets < 2 || repeats < 2 {
        return Err(ProtocolError::InvalidOverride(
            "positioning needs at least 2 targets and 2 repeats".into(),
        ));
    }

    let [tx, ty, tz] = travel;
    let (xc, yc, zc) = (tx / 2.0, ty / 2.0, tz / 2.0);
    let (sx, sy) = (af * tx, af * ty);
    let (xmin, xmax) = (xc - sx / 2.0, xc + sx / 2.0);
    let (ymin, ymax) = (yc - sy / 2.0, yc + sy / 2.0);
    let sz = bf * tz;
    let (zmin, zmax) = (zc - sz / 2.0, zc + sz / 2.0);

    let largest = r1.max(r2);
    if largest > xc.min(yc) {
        return Err(ProtocolError::TravelTooSmall(format!(
            "circle radius {largest} mm exceeds half the X/Y travel ({} mm)",
            xc.min(yc)
        )));
    }

    let points: BTreeMap<String, Point3> = [
        ("O", [xc, yc, zc]),
        ("A1", [xmax, yc, zc]),
        ("A2", [xmin, ymin, zc]),
        ("A3", [xc, ymax, zc]),
        ("A4", [xmin, yc, zc]),
        ("A5", [xmax, ymax, zc]),
        ("A6", [xc, ymin, zc]),
        ("A7", [xmin + offset * sx, ymax, zc]),
        ("A8", [xmax, ymin + offset * sy, zc]),
        ("B1", [xc, yc, zmin]),
        ("B2", [xc, yc, zmax]),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();

    let linear = |from: &str, to: &str| NamedTrajectory {
        id: format!("{from}-{to}"),
        kind: TrajectoryKind::Linear,
        commanded_feed: linear_feed,
        spec: TrajectorySpec::single(Segment::Linear {
            start: points[from],
            end: points[to],
            feed: linear_feed,
        }),
    };
    let mut trajectories: Vec<NamedTrajectory> = [
        ("A1", "O"),
        ("A4", "O"),
        ("A3", "O"),
        ("A6", "O"),
        ("A2", "A5"),
        ("A2", "A7"),
        ("A2", "A8"),
        ("B1", "B2"),
    ]
    .iter()
    .map(|(a, b)| linear(a, b))
    .collect();
    for (name, radius) in [("C1", r1), ("C2", r2)] {
        for (suffix, feed) in ["a", "b"].into_iter().zip(feeds) {
            trajectories.push(NamedTrajectory {
                id: format!("{name}{suffix}"),
                kind: TrajectoryKind::Circle,
                commanded_feed: feed,
                spec: TrajectorySpec::single(Segment::Arc(ArcSegment::full_circle(points["O"], radius, feed))),
            });
        }
    }

    let spaced = |lo: f64, hi: f64| -> Vec<f64> {
        (0..n_targets)
            .map(|i| lo + (hi - lo) * i as f64 / (n_targets - 1) as f64)
            .collect()
    };
    let positioning_plan = [
        (AxisId::X, spaced(xmin, xmax)),
        (AxisId::Y, spaced(ymin, ymax)),
        (AxisId::Z, spaced(zmin, zmax)),
    ]
    .into_iter()
    .map(|(axis, targets)| {
        (
            axis,
            PositioningPlan {
                targets,
                repeats,
                directions: vec![Direction::Positive, Direction::Negative],
            },
        )
    })
    .collect();

    Ok(ProtocolSpec {
        machine: machine.clone(),
        points,
        trajectories,
        positioning_plan,
        part_entities: standard_part_entities(),
        overrides: overrides.clone(),
    })
}

/// Entities of the standard test part. Only diameters, orientations and
/// cutting labels are known; bore and hole positions are placeholders in
/// the part frame and should be replaced by the drawing's values when
/// available.
pub fn standard_part_entities() -> Vec<PartEntity> {
    let entity = |id: &str, kind, nominal, label: Option<&str>| PartEntity {
        entity_id: id.to_string(),
        kind,
        nominal,
        label: label.map(str::to_string),
    };
    let bore = |d: f64| NominalGeometry::Bore {
        center: [0.0, 0.0],
        diameter: d,
    };
    let pattern = |d: f64| NominalGeometry::HolePattern {
        diameter: d,
        centers: (0..10).map(|i| [(i % 5) as f64 * 20.0, (i / 5) as f64 * 20.0]).collect(),
    };
    let mut out = vec![
        entity("Détourage YZ", EntityKind::Detourage, NominalGeometry::Face { normal: [1.0, 0.0, 0.0] }, None),
        entity("Détourage XZ", EntityKind::Detourage, NominalGeometry::Face { normal: [0.0, 1.0, 0.0] }, None),
    ];
    for (i, label) in ["530 m/min", "750 m/min", "940 m/min"].iter().enumerate() {
        out.push(entity(&format!("Alésage {} Ø80", i + 1), EntityKind::Alesage, bore(80.0), Some(label)));
    }
    for (i, label) in ["470 m/min", "580 m/min", "670 m/min"].iter().enumerate() {
        out.push(entity(&format!("Alésage {} Ø25", i + 1), EntityKind::Alesage, bore(25.0), Some(label)));
    }
    out.push(entity("Perçages Ø9,5", EntityKind::Percage, pattern(9.5), None));
    out.push(entity("Alésages Ø10", EntityKind::Alesage, pattern(10.0), None));
    out.push(entity("Alésages Ø10,5", EntityKind::Alesage, pattern(10.5), None));
    out.push(entity("Perçages Ø5", EntityKind::Percage, NominalGeometry::Thread { diameter: 5.0 }, None));
    for (i, label) in ["20 m/min", "40 m/min", "60 m/min", "80 m/min", "100 m/min"].iter().enumerate() {
        out.push(entity(
            &format!("Taraudage {}", i + 1),
            EntityKind::Taraudage,
            NominalGeometry::Thread { diameter: 6.0 },
            Some(label),
        ));
    }
    out
}
