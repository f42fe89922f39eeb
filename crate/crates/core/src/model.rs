//! Machine datasheets, axis limits and sector requirement profiles.
//!
//! A [`RawDatasheet`] is what a user transcribes from a vendor sheet; it keeps
//! unit tags as free text. [`validate_datasheet`] turns it into a
//! [`ValidatedDatasheet`] whose quantities are in fixed units:
//! velocities in mm/min, accelerations in m/s², jerks in m/s³, lengths in mm.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::report::CharacterizationReport;

/// Standard gravity, m/s².
pub const STANDARD_GRAVITY: f64 = 9.80665;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AxisId {
    X,
    Y,
    Z,
    A,
    C,
}

impl AxisId {
    pub const LINEAR: [AxisId; 3] = [AxisId::X, AxisId::Y, AxisId::Z];

    pub fn is_linear(self) -> bool {
        matches!(self, AxisId::X | AxisId::Y | AxisId::Z)
    }

    /// Column index of a linear axis in `[x, y, z]` arrays.
    pub fn index(self) -> Option<usize> {
        match self {
            AxisId::X => Some(0),
            AxisId::Y => Some(1),
            AxisId::Z => Some(2),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AxisId::X => "X",
            AxisId::Y => "Y",
            AxisId::Z => "Z",
            AxisId::A => "A",
            AxisId::C => "C",
        }
    }
}

impl fmt::Display for AxisId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AxisId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "X" | "x" => Ok(AxisId::X),
            "Y" | "y" => Ok(AxisId::Y),
            "Z" | "z" => Ok(AxisId::Z),
            "A" | "a" => Ok(AxisId::A),
            "C" | "c" => Ok(AxisId::C),
            other => Err(format!("unknown axis `{other}`")),
        }
    }
}

/// Kinematic limits of one linear axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisLimits {
    pub axis_id: AxisId,
    /// mm/min
    pub v_max: f64,
    /// m/s²
    pub a_max: f64,
    /// m/s³
    pub j_max: f64,
    /// mm
    pub travel: f64,
}

impl AxisLimits {
    pub fn v_max_mm_s(&self) -> f64 {
        self.v_max / 60.0
    }

    pub fn a_max_mm_s2(&self) -> f64 {
        self.a_max * 1000.0
    }

    pub fn j_max_mm_s3(&self) -> f64 {
        self.j_max * 1000.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AccelUnit {
    G,
    MetersPerSecond2,
}

impl FromStr for AccelUnit {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "G" | "g" => Ok(AccelUnit::G),
            "m/s2" | "m/s²" | "m/s^2" => Ok(AccelUnit::MetersPerSecond2),
            other => Err(ModelError::Unit {
                field: "accel_spec.unit".into(),
                tag: other.into(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JerkUnit {
    #[serde(rename = "m/s3")]
    MetersPerSecond3,
    #[serde(rename = "mm/s3")]
    MillimetersPerSecond3,
}

impl JerkUnit {
    fn tag(self) -> &'static str {
        match self {
            JerkUnit::MetersPerSecond3 => "m/s3",
            JerkUnit::MillimetersPerSecond3 => "mm/s3",
        }
    }
}

impl FromStr for JerkUnit {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "m/s3" | "m/s³" | "m/s^3" => Ok(JerkUnit::MetersPerSecond3),
            "mm/s3" | "mm/s³" | "mm/s^3" => Ok(JerkUnit::MillimetersPerSecond3),
            other => Err(ModelError::Unit {
                field: "jerk_spec.unit".into(),
                tag: other.into(),
            }),
        }
    }
}

/// Datasheet errors. Validation collects every violation before failing.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("unknown unit tag `{tag}` for {field}")]
    Unit { field: String, tag: String },
    #[error("{field} must be finite and > 0 (got {value})")]
    Range { field: String, value: f64 },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("criterion {0} has no measured value")]
    MissingIndicator(Criterion),
    #[error("profile weights sum to {0}, expected 1")]
    Weights(f64),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("cannot parse {path}: {message}")]
    Parse { path: String, message: String },
    #[error("{} datasheet violation(s): {}", .0.len(), join(.0))]
    Violations(Vec<ModelError>),
}

fn join(errors: &[ModelError]) -> String {
    errors
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

// ---------------------------------------------------------------------------
// Raw (as transcribed) datasheet
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedValue {
    pub value: f64,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawAxis {
    pub id: AxisId,
    /// Rapid traverse, mm/min.
    pub v_max_mm_min: f64,
    /// Per-axis acceleration, m/s². Falls back to the global `accel_spec`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_max_m_s2: Option<f64>,
    /// Per-axis jerk, m/s³. Falls back to the global `jerk_spec`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j_max_m_s3: Option<f64>,
    pub travel_mm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositioningAccuracy {
    pub value_um: f64,
    pub per_length_mm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spindle {
    pub speed_rpm: f64,
    pub power_kw: f64,
    pub accel_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToolChanger {
    pub count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub change_time_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartCapacity {
    pub x_mm: f64,
    pub y_mm: f64,
    pub z_mm: f64,
    pub max_mass_kg: f64,
}

/// Rotary axis: only indexation characteristics are kept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotaryIndexation {
    pub id: AxisId,
    pub resolution_deg: f64,
    pub accuracy_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDatasheet {
    pub name: String,
    pub axes: Vec<RawAxis>,
    /// (min, max) feed in mm/min.
    pub feed_range: (f64, f64),
    pub accel_spec: TaggedValue,
    pub resolution_um: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positioning_accuracy: Option<PositioningAccuracy>,
    pub spindle: Spindle,
    pub tool_changer: ToolChanger,
    pub part_capacity: PartCapacity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeatability_spec_um: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jerk_spec: Option<TaggedValue>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rotary: Vec<RotaryIndexation>,
}

impl RawDatasheet {
    /// Reads a datasheet from TOML, or JSON when the extension is `.json`.
    pub fn from_path(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let is_json = path.extension().is_some_and(|e| e == "json");
        Self::parse(&text, is_json).map_err(|message| ModelError::Parse {
            path: path.display().to_string(),
            message,
        })
    }

    pub fn parse(text: &str, json: bool) -> Result<Self, String> {
        if json {
            serde_json::from_str(text).map_err(|e| e.to_string())
        } else {
            toml::from_str(text).map_err(|e| e.to_string())
        }
    }
}

/// Declared jerk value, stored with its declared unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JerkSpec {
    pub value: f64,
    pub unit: JerkUnit,
}

impl JerkSpec {
    pub fn m_s3(&self) -> f64 {
        match self.unit {
            JerkUnit::MetersPerSecond3 => self.value,
            JerkUnit::MillimetersPerSecond3 => self.value / 1000.0,
        }
    }
}

/// Datasheet with normalized units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatedDatasheet {
    pub name: String,
    pub axes: Vec<AxisLimits>,
    pub feed_range: (f64, f64),
    /// m/s²
    pub accel: f64,
    pub resolution_um: f64,
    pub positioning_accuracy: Option<PositioningAccuracy>,
    pub spindle: Spindle,
    pub tool_changer: ToolChanger,
    pub part_capacity: PartCapacity,
    pub repeatability_spec_um: Option<f64>,
    pub jerk_spec: Option<JerkSpec>,
    pub rotary: Vec<RotaryIndexation>,
    /// Whether per-axis jerk was given explicitly on the sheet.
    pub axis_jerk_declared: bool,
}

impl ValidatedDatasheet {
    pub fn axis(&self, id: AxisId) -> Option<&AxisLimits> {
        self.axes.iter().find(|a| a.axis_id == id)
    }

    pub fn limits_map(&self) -> BTreeMap<AxisId, AxisLimits> {
        self.axes.iter().map(|a| (a.axis_id, *a)).collect()
    }

    /// Raw form in normalized units; validating it again is the identity.
    pub fn to_raw(&self) -> RawDatasheet {
        RawDatasheet {
            name: self.name.clone(),
            axes: self
                .axes
                .iter()
                .map(|a| RawAxis {
                    id: a.axis_id,
                    v_max_mm_min: a.v_max,
                    a_max_m_s2: Some(a.a_max),
                    j_max_m_s3: Some(a.j_max),
                    travel_mm: a.travel,
                })
                .collect(),
            feed_range: self.feed_range,
            accel_spec: TaggedValue {
                value: self.accel,
                unit: "m/s2".into(),
            },
            resolution_um: self.resolution_um,
            positioning_accuracy: self.positioning_accuracy,
            spindle: self.spindle,
            tool_changer: self.tool_changer,
            part_capacity: self.part_capacity,
            repeatability_spec_um: self.repeatability_spec_um,
            jerk_spec: self.jerk_spec.map(|j| TaggedValue {
                value: j.value,
                unit: j.unit.tag().into(),
            }),
            rotary: self.rotary.clone(),
        }
    }
}

fn check_positive(errors: &mut Vec<ModelError>, field: impl Into<String>, value: f64) {
    if !(value.is_finite() && value > 0.0) {
        errors.push(ModelError::Range {
            field: field.into(),
            value,
        });
    }
}

/// Normalizes units and checks ranges. All violations are reported together.
pub fn validate_datasheet(ds: &RawDatasheet) -> Result<ValidatedDatasheet, ModelError> {
    let mut errors = Vec::new();

    let accel_unit = ds.accel_spec.unit.parse::<AccelUnit>();
    let accel = match &accel_unit {
        Ok(AccelUnit::G) => ds.accel_spec.value * STANDARD_GRAVITY,
        Ok(AccelUnit::MetersPerSecond2) => ds.accel_spec.value,
        Err(e) => {
            errors.push(e.clone());
            f64::NAN
        }
    };
    if accel_unit.is_ok() {
        check_positive(&mut errors, "accel_spec.value", accel);
    }

    let jerk_spec = match &ds.jerk_spec {
        None => None,
        Some(tv) => match tv.unit.parse::<JerkUnit>() {
            Ok(unit) => {
                check_positive(&mut errors, "jerk_spec.value", tv.value);
                Some(JerkSpec {
                    value: tv.value,
                    unit,
                })
            }
            Err(e) => {
                errors.push(e);
                None
            }
        },
    };

    if ds.axes.is_empty() {
        errors.push(ModelError::Invalid {
            field: "axes".into(),
            message: "at least one axis is required".into(),
        });
    }
    let mut axes = Vec::with_capacity(ds.axes.len());
    let mut axis_jerk_declared = true;
    for raw in &ds.axes {
        let name = raw.id.as_str();
        if !raw.id.is_linear() {
            errors.push(ModelError::Invalid {
                field: format!("axes.{name}"),
                message: "rotary axes belong in `rotary`".into(),
            });
            continue;
        }
        if axes.iter().any(|a: &AxisLimits| a.axis_id == raw.id) {
            errors.push(ModelError::Invalid {
                field: format!("axes.{name}"),
                message: "duplicate axis".into(),
            });
            continue;
        }
        let a_max = raw.a_max_m_s2.unwrap_or(accel);
        let j_max = match (raw.j_max_m_s3, jerk_spec) {
            (Some(j), _) => j,
            (None, Some(spec)) => {
                axis_jerk_declared = false;
                spec.m_s3()
            }
            (None, None) => {
                axis_jerk_declared = false;
                errors.push(ModelError::Invalid {
                    field: format!("axes.{name}.j_max_m_s3"),
                    message: "no per-axis jerk and no jerk_spec to fall back on".into(),
                });
                f64::NAN
            }
        };
        check_positive(&mut errors, format!("axes.{name}.v_max_mm_min"), raw.v_max_mm_min);
        if accel_unit.is_ok() || raw.a_max_m_s2.is_some() {
            check_positive(&mut errors, format!("axes.{name}.a_max"), a_max);
        }
        if j_max.is_finite() || raw.j_max_m_s3.is_some() {
            check_positive(&mut errors, format!("axes.{name}.j_max"), j_max);
        }
        check_positive(&mut errors, format!("axes.{name}.travel_mm"), raw.travel_mm);
        axes.push(AxisLimits {
            axis_id: raw.id,
            v_max: raw.v_max_mm_min,
            a_max,
            j_max,
            travel: raw.travel_mm,
        });
    }

    let (fmin, fmax) = ds.feed_range;
    check_positive(&mut errors, "feed_range.min", fmin);
    check_positive(&mut errors, "feed_range.max", fmax);
    if fmin > fmax {
        errors.push(ModelError::Invalid {
            field: "feed_range".into(),
            message: format!("min {fmin} exceeds max {fmax}"),
        });
    }
    check_positive(&mut errors, "resolution_um", ds.resolution_um);
    if let Some(p) = ds.positioning_accuracy {
        check_positive(&mut errors, "positioning_accuracy.value_um", p.value_um);
        check_positive(&mut errors, "positioning_accuracy.per_length_mm", p.per_length_mm);
    }
    check_positive(&mut errors, "spindle.speed_rpm", ds.spindle.speed_rpm);
    check_positive(&mut errors, "spindle.power_kw", ds.spindle.power_kw);
    check_positive(&mut errors, "spindle.accel_time_s", ds.spindle.accel_time_s);
    if let Some(t) = ds.tool_changer.change_time_s {
        check_positive(&mut errors, "tool_changer.change_time_s", t);
    }
    let pc = ds.part_capacity;
    for (field, v) in [
        ("part_capacity.x_mm", pc.x_mm),
        ("part_capacity.y_mm", pc.y_mm),
        ("part_capacity.z_mm", pc.z_mm),
        ("part_capacity.max_mass_kg", pc.max_mass_kg),
    ] {
        check_positive(&mut errors, field, v);
    }
    if let Some(r) = ds.repeatability_spec_um {
        check_positive(&mut errors, "repeatability_spec_um", r);
    }
    for r in &ds.rotary {
        if r.id.is_linear() {
            errors.push(ModelError::Invalid {
                field: format!("rotary.{}", r.id),
                message: "linear axis listed as rotary".into(),
            });
        }
        check_positive(&mut errors, format!("rotary.{}.resolution_deg", r.id), r.resolution_deg);
        check_positive(&mut errors, format!("rotary.{}.accuracy_deg", r.id), r.accuracy_deg);
    }

    if !errors.is_empty() {
        return Err(ModelError::Violations(errors));
    }
    Ok(ValidatedDatasheet {
        name: ds.name.clone(),
        axes,
        feed_range: ds.feed_range,
        accel,
        resolution_um: ds.resolution_um,
        positioning_accuracy: ds.positioning_accuracy,
        spindle: ds.spindle,
        tool_changer: ds.tool_changer,
        part_capacity: ds.part_capacity,
        repeatability_spec_um: ds.repeatability_spec_um,
        jerk_spec,
        rotary: ds.rotary.clone(),
        axis_jerk_declared,
    })
}

// ---------------------------------------------------------------------------
// Sector profiles
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sector {
    ComplexForms,
    AeronauticMassRemoval,
    Automotive,
    GeneralMechanics,
}

impl Sector {
    pub fn as_str(self) -> &'static str {
        match self {
            Sector::ComplexForms => "complex_forms",
            Sector::AeronauticMassRemoval => "aeronautic_mass_removal",
            Sector::Automotive => "automotive",
            Sector::GeneralMechanics => "general_mechanics",
        }
    }
}

impl FromStr for Sector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().replace('-', "_").as_str() {
            "complex_forms" => Ok(Sector::ComplexForms),
            "aeronautic_mass_removal" | "aeronautic" => Ok(Sector::AeronauticMassRemoval),
            "automotive" => Ok(Sector::Automotive),
            "general_mechanics" | "general" => Ok(Sector::GeneralMechanics),
            other => Err(format!("unknown sector `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    LinearAxisDynamics,
    XyRepeatabilityHomogeneity,
    ZaSynchronism,
    CycleTime,
    TrajectoryTracking,
    ChipRemovalRate,
    Polyvalence,
    GeometricQuality,
}

impl Criterion {
    pub const ALL: [Criterion; 8] = [
        Criterion::LinearAxisDynamics,
        Criterion::XyRepeatabilityHomogeneity,
        Criterion::ZaSynchronism,
        Criterion::CycleTime,
        Criterion::TrajectoryTracking,
        Criterion::ChipRemovalRate,
        Criterion::Polyvalence,
        Criterion::GeometricQuality,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::LinearAxisDynamics => "linear_axis_dynamics",
            Criterion::XyRepeatabilityHomogeneity => "xy_repeatability_homogeneity",
            Criterion::ZaSynchronism => "za_synchronism",
            Criterion::CycleTime => "cycle_time",
            Criterion::TrajectoryTracking => "trajectory_tracking",
            Criterion::ChipRemovalRate => "chip_removal_rate",
            Criterion::Polyvalence => "polyvalence",
            Criterion::GeometricQuality => "geometric_quality",
        }
    }

    /// Default acceptance band in the criterion's indicator unit:
    /// (minimum acceptable, target).
    ///
    /// | criterion | indicator | unit |
    /// |---|---|---|
    /// | linear_axis_dynamics | min over X/Y of attained a_max | m/s² |
    /// | xy_repeatability_homogeneity | max over X/Y of bidirectional repeatability | µm |
    /// | za_synchronism | Z/A synchronism error (user supplied) | µm |
    /// | cycle_time | loaded global cycle time | s |
    /// | trajectory_tracking | max radial deviation on circles | µm |
    /// | chip_removal_rate | user supplied | cm³/min |
    /// | polyvalence | user supplied | 0..1 |
    /// | geometric_quality | worst form defect on the part | µm |
    pub fn default_band(self) -> ReferenceBand {
        let (min_acceptable, target) = match self {
            Criterion::LinearAxisDynamics => (1.0, 5.0),
            Criterion::XyRepeatabilityHomogeneity => (40.0, 5.0),
            Criterion::ZaSynchronism => (50.0, 5.0),
            Criterion::CycleTime => (600.0, 200.0),
            Criterion::TrajectoryTracking => (100.0, 10.0),
            Criterion::ChipRemovalRate => (100.0, 1000.0),
            Criterion::Polyvalence => (0.0, 1.0),
            Criterion::GeometricQuality => (100.0, 10.0),
        };
        ReferenceBand {
            min_acceptable,
            target,
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Score is 0 at `min_acceptable`, 1 at `target`, linear and clamped in
/// between. A target below the minimum encodes lower-is-better.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceBand {
    pub min_acceptable: f64,
    pub target: f64,
}

impl ReferenceBand {
    pub fn score(&self, value: f64) -> f64 {
        let span = self.target - self.min_acceptable;
        if span == 0.0 {
            return if value == self.target { 1.0 } else { 0.0 };
        }
        ((value - self.min_acceptable) / span).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedCriterion {
    pub criterion: Criterion,
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<ReferenceBand>,
}

impl WeightedCriterion {
    pub fn band(&self) -> ReferenceBand {
        self.band.unwrap_or_else(|| self.criterion.default_band())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorProfile {
    pub sector: Sector,
    pub criteria: Vec<WeightedCriterion>,
}

impl SectorProfile {
    pub fn new(sector: Sector, criteria: Vec<WeightedCriterion>) -> Result<Self, ModelError> {
        let profile = Self { sector, criteria };
        profile.check()?;
        Ok(profile)
    }

    pub fn check(&self) -> Result<(), ModelError> {
        let sum: f64 = self.criteria.iter().map(|c| c.weight).sum();
        let weights_ok = self
            .criteria
            .iter()
            .all(|c| c.weight.is_finite() && (0.0..=1.0).contains(&c.weight));
        if !weights_ok || (sum - 1.0).abs() > 1e-9 {
            return Err(ModelError::Weights(sum));
        }
        Ok(())
    }

    /// Built-in profile for a sector.
    ///
    /// The automotive profile carries the four productivity criteria used for
    /// automotive part machining, equally weighted.
    pub fn standard(sector: Sector) -> Self {
        use Criterion::*;
        let weights: &[(Criterion, f64)] = match sector {
            Sector::Automotive => &[
                (LinearAxisDynamics, 0.25),
                (XyRepeatabilityHomogeneity, 0.25),
                (ZaSynchronism, 0.25),
                (CycleTime, 0.25),
            ],
            Sector::ComplexForms => &[(TrajectoryTracking, 0.6), (GeometricQuality, 0.4)],
            Sector::AeronauticMassRemoval => &[
                (ChipRemovalRate, 0.6),
                (LinearAxisDynamics, 0.2),
                (GeometricQuality, 0.2),
            ],
            Sector::GeneralMechanics => &[(Polyvalence, 0.6), (GeometricQuality, 0.4)],
        };
        Self {
            sector,
            criteria: weights
                .iter()
                .map(|&(criterion, weight)| WeightedCriterion {
                    criterion,
                    weight,
                    band: None,
                })
                .collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Gap report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coverage {
    Covered,
    PartiallyCovered,
    Missing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionGap {
    pub criterion: Criterion,
    pub coverage: Coverage,
    pub present: Vec<String>,
    pub absent: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub machine: String,
    pub sector: Sector,
    pub criteria: Vec<CriterionGap>,
    pub notes: Vec<String>,
}

impl GapReport {
    pub fn coverage(&self, criterion: Criterion) -> Option<Coverage> {
        self.criteria
            .iter()
            .find(|g| g.criterion == criterion)
            .map(|g| g.coverage)
    }
}

/// Datasheet fields informing a criterion, with their presence.
/// `None` means the criterion cannot be read from any datasheet.
fn informing_fields(ds: &ValidatedDatasheet, c: Criterion) -> Option<Vec<(&'static str, bool)>> {
    let fields = match c {
        Criterion::LinearAxisDynamics => vec![
            ("v_max", !ds.axes.is_empty()),
            ("a_max", !ds.axes.is_empty()),
            ("jerk_spec", ds.jerk_spec.is_some() || ds.axis_jerk_declared),
        ],
        Criterion::XyRepeatabilityHomogeneity => {
            vec![("repeatability_spec", ds.repeatability_spec_um.is_some())]
        }
        Criterion::ZaSynchronism => return None,
        Criterion::CycleTime => vec![
            ("tool_changer.change_time", ds.tool_changer.change_time_s.is_some()),
            ("a_max", !ds.axes.is_empty()),
        ],
        Criterion::TrajectoryTracking => vec![
            ("a_max", !ds.axes.is_empty()),
            ("jerk_spec", ds.jerk_spec.is_some() || ds.axis_jerk_declared),
        ],
        Criterion::ChipRemovalRate => vec![("spindle.power", true), ("spindle.speed", true)],
        Criterion::Polyvalence => vec![("tool_changer.count", true), ("rotary", !ds.rotary.is_empty())],
        Criterion::GeometricQuality => vec![
            ("positioning_accuracy", ds.positioning_accuracy.is_some()),
            ("repeatability_spec", ds.repeatability_spec_um.is_some()),
        ],
    };
    Some(fields)
}

/// Classifies each profile criterion by which informing datasheet fields are
/// present. Only presence matters, never values.
pub fn datasheet_gap_report(ds: &ValidatedDatasheet, profile: &SectorProfile) -> GapReport {
    let criteria = profile
        .criteria
        .iter()
        .map(|wc| {
            let (coverage, present, absent) = match informing_fields(ds, wc.criterion) {
                None => (
                    Coverage::Missing,
                    Vec::new(),
                    vec!["(measurable only)".to_string()],
                ),
                Some(fields) => {
                    let present: Vec<String> = fields
                        .iter()
                        .filter(|f| f.1)
                        .map(|f| f.0.to_string())
                        .collect();
                    let absent: Vec<String> = fields
                        .iter()
                        .filter(|f| !f.1)
                        .map(|f| f.0.to_string())
                        .collect();
                    let coverage = if absent.is_empty() {
                        Coverage::Covered
                    } else if present.is_empty() {
                        Coverage::Missing
                    } else {
                        Coverage::PartiallyCovered
                    };
                    (coverage, present, absent)
                }
            };
            CriterionGap {
                criterion: wc.criterion,
                coverage,
                present,
                absent,
            }
        })
        .collect();

    let mut notes = Vec::new();
    if let Some(j) = ds.jerk_spec {
        // HSM axes reach tens to hundreds of m/s³; a declared value below
        // 1 m/s³ usually means the unit was mislabelled.
        if j.m_s3() < 1.0 {
            notes.push(format!(
                "jerk_spec {} {} is {} m/s³, implausibly low for a high-speed axis; \
                 check the declared unit (kept as declared)",
                j.value,
                j.unit.tag(),
                j.m_s3()
            ));
        }
    } else {
        notes.push("jerk value not given".into());
    }
    if ds.repeatability_spec_um.is_none() {
        notes.push("repeatability not given".into());
    }
    if ds.tool_changer.change_time_s.is_none() {
        notes.push("tool change time not given".into());
    }

    GapReport {
        machine: ds.name.clone(),
        sector: profile.sector,
        criteria,
        notes,
    }
}

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionScore {
    pub criterion: Criterion,
    pub value: f64,
    pub weight: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scorecard {
    pub sector: Sector,
    pub criteria: Vec<CriterionScore>,
    pub total: f64,
}

/// Scores raw criterion values against the profile's reference bands.
pub fn score_values(
    values: &BTreeMap<Criterion, f64>,
    profile: &SectorProfile,
) -> Result<Scorecard, ModelError> {
    profile.check()?;
    let mut criteria = Vec::with_capacity(profile.criteria.len());
    for wc in &profile.criteria {
        let value = *values
            .get(&wc.criterion)
            .filter(|v| v.is_finite())
            .ok_or(ModelError::MissingIndicator(wc.criterion))?;
        criteria.push(CriterionScore {
            criterion: wc.criterion,
            value,
            weight: wc.weight,
            score: wc.band().score(value),
        });
    }
    let total = criteria.iter().map(|c| c.weight * c.score).sum();
    Ok(Scorecard {
        sector: profile.sector,
        criteria,
        total,
    })
}

/// Scores a characterization report. Criterion values come from
/// [`CharacterizationReport::criterion_values`].
pub fn score_machine(
    report: &CharacterizationReport,
    profile: &SectorProfile,
) -> Result<Scorecard, ModelError> {
    score_values(&report.criterion_values(), profile)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn vendor_raw() -> RawDatasheet {
        let text = include_str!("../../../data/machines/vendor_datasheet.toml");
        RawDatasheet::parse(text, false).unwrap()
    }

    #[test]
    fn g_accel_is_converted_once() {
        let ds = validate_datasheet(&vendor_raw()).unwrap();
        assert!((ds.accel - 7.845).abs() < 0.001);
        assert_eq!(ds.axis(AxisId::X).unwrap().a_max, ds.accel);
    }

    #[test]
    fn metric_accel_is_identity() {
        let mut raw = vendor_raw();
        raw.accel_spec = TaggedValue {
            value: 1.0,
            unit: "m/s2".into(),
        };
        assert_eq!(validate_datasheet(&raw).unwrap().accel, 1.0);
    }

    #[test]
    fn zero_vmax_is_range_error() {
        let mut raw = vendor_raw();
        raw.axes[0].v_max_mm_min = 0.0;
        match validate_datasheet(&raw) {
            Err(ModelError::Violations(v)) => {
                assert!(matches!(&v[0], ModelError::Range { field, .. } if field.contains("v_max")))
            }
            other => panic!("expected range error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_unit_tag_is_unit_error() {
        let mut raw = vendor_raw();
        raw.accel_spec.unit = "furlong/s2".into();
        let err = validate_datasheet(&raw).unwrap_err();
        let ModelError::Violations(v) = err else { panic!() };
        assert!(v.iter().any(|e| matches!(e, ModelError::Unit { .. })));
    }

    #[test]
    fn normalization_is_idempotent() {
        let once = validate_datasheet(&vendor_raw()).unwrap();
        let twice = validate_datasheet(&once.to_raw()).unwrap();
        assert_eq!(once.axes, twice.axes);
        assert!((once.accel - twice.accel).abs() <= 1e-12 * once.accel);
        assert_eq!(once.jerk_spec, twice.jerk_spec);
    }

    #[test]
    fn vendor_datasheet_automotive_gaps() {
        let ds = validate_datasheet(&vendor_raw()).unwrap();
        let gaps = datasheet_gap_report(&ds, &SectorProfile::standard(Sector::Automotive));
        assert_eq!(
            gaps.coverage(Criterion::XyRepeatabilityHomogeneity),
            Some(Coverage::Missing)
        );
        assert_eq!(gaps.coverage(Criterion::ZaSynchronism), Some(Coverage::Missing));
        assert_eq!(gaps.coverage(Criterion::CycleTime), Some(Coverage::Covered));
        assert!(gaps.notes.iter().any(|n| n.contains("jerk_spec")));
    }

    #[test]
    fn missing_change_time_partially_covers_cycle_time() {
        let mut raw = vendor_raw();
        raw.tool_changer.change_time_s = None;
        let ds = validate_datasheet(&raw).unwrap();
        let gaps = datasheet_gap_report(&ds, &SectorProfile::standard(Sector::Automotive));
        assert_eq!(gaps.coverage(Criterion::CycleTime), Some(Coverage::PartiallyCovered));
    }

    #[test]
    fn complete_sheet_covers_everything_readable() {
        let mut raw = vendor_raw();
        raw.repeatability_spec_um = Some(2.0);
        let ds = validate_datasheet(&raw).unwrap();
        for sector in [Sector::ComplexForms, Sector::GeneralMechanics, Sector::AeronauticMassRemoval] {
            let gaps = datasheet_gap_report(&ds, &SectorProfile::standard(sector));
            assert!(
                gaps.criteria.iter().all(|g| g.coverage == Coverage::Covered),
                "{sector:?}: {gaps:?}"
            );
        }
    }

    #[test]
    fn gap_depends_on_presence_only() {
        let mut a = vendor_raw();
        a.repeatability_spec_um = Some(1.0);
        let mut b = a.clone();
        b.repeatability_spec_um = Some(500.0);
        b.axes[0].v_max_mm_min = 1.0;
        let p = SectorProfile::standard(Sector::Automotive);
        let ga = datasheet_gap_report(&validate_datasheet(&a).unwrap(), &p);
        let gb = datasheet_gap_report(&validate_datasheet(&b).unwrap(), &p);
        assert_eq!(ga.criteria, gb.criteria);
    }

    #[test]
    fn automotive_profile_has_four_criteria() {
        let p = SectorProfile::standard(Sector::Automotive);
        assert_eq!(p.criteria.len(), 4);
        p.check().unwrap();
        for s in [Sector::ComplexForms, Sector::AeronauticMassRemoval, Sector::GeneralMechanics] {
            SectorProfile::standard(s).check().unwrap();
        }
    }

    #[test]
    fn bad_weights_rejected() {
        let r = SectorProfile::new(
            Sector::Automotive,
            vec![WeightedCriterion {
                criterion: Criterion::CycleTime,
                weight: 0.5,
                band: None,
            }],
        );
        assert!(matches!(r, Err(ModelError::Weights(_))));
    }

    #[test]
    fn degenerate_weights_pick_single_score() {
        let profile = SectorProfile {
            sector: Sector::Automotive,
            criteria: vec![
                WeightedCriterion { criterion: Criterion::CycleTime, weight: 1.0, band: None },
                WeightedCriterion { criterion: Criterion::LinearAxisDynamics, weight: 0.0, band: None },
                WeightedCriterion { criterion: Criterion::ZaSynchronism, weight: 0.0, band: None },
                WeightedCriterion { criterion: Criterion::XyRepeatabilityHomogeneity, weight: 0.0, band: None },
            ],
        };
        let values: BTreeMap<_, _> = [
            (Criterion::CycleTime, 400.0),
            (Criterion::LinearAxisDynamics, 3.0),
            (Criterion::ZaSynchronism, 10.0),
            (Criterion::XyRepeatabilityHomogeneity, 20.0),
        ]
        .into();
        let card = score_values(&values, &profile).unwrap();
        assert_eq!(card.total, card.criteria[0].score);
        assert!((card.total - 0.5).abs() < 1e-12);
    }

    #[test]
    fn missing_indicator_is_reported() {
        let p = SectorProfile::standard(Sector::Automotive);
        let values: BTreeMap<_, _> = [(Criterion::CycleTime, 300.0)].into();
        assert!(matches!(
            score_values(&values, &p),
            Err(ModelError::MissingIndicator(_))
        ));
    }

    #[test]
    fn score_is_weight_linear() {
        let values: BTreeMap<_, _> = [(Criterion::TrajectoryTracking, 40.0), (Criterion::GeometricQuality, 25.0)].into();
        let mk = |w1: f64| SectorProfile {
            sector: Sector::ComplexForms,
            criteria: vec![
                WeightedCriterion { criterion: Criterion::TrajectoryTracking, weight: w1, band: None },
                WeightedCriterion { criterion: Criterion::GeometricQuality, weight: 1.0 - w1, band: None },
            ],
        };
        let s1 = score_values(&values, &mk(1.0)).unwrap().total;
        let s2 = score_values(&values, &mk(0.0)).unwrap().total;
        let mixed = score_values(&values, &mk(0.3)).unwrap().total;
        assert!((mixed - (0.3 * s1 + 0.7 * s2)).abs() < 1e-12);
    }
}
