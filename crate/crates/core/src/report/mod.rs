//! Characterization runs and their reports.
//!
//! Every section is either executed (with the SHA-256 digests of the inputs
//! it read), not executed (no data), or failed (its error is embedded). A
//! missing or broken input never aborts the whole run.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    compare_commanded_attained, differentiate, homogeneity, kinematic_indicators, saturation_analysis,
    stability_metric, AxisIndicators, DynamicsComparison, HomogeneityReport, KinematicIndicators,
    SaturationReport, SmoothingDescriptor, StabilityReport, DEFAULT_HOMOGENEITY_THRESHOLD,
};
use crate::metrology::{
    circularity_report, fit_plane, localization_stats, perpendicularity, perpendicularity_default,
    positioning_stats, read_cmm_points, read_holes_csv, read_positioning_csv, read_profiles_csv,
    tool_deflection_indicator, CircularityReport, DeflectionReport, FittedPlane, LocalizationStats,
    MetrologyError, PositioningRecord, PositioningStats,
};
use crate::model::{
    datasheet_gap_report, score_values, validate_datasheet, AxisId, Criterion, GapReport, ModelError,
    RawDatasheet, Scorecard, Sector, SectorProfile,
};
use crate::motion::{arc_limits, plan_linear_move, run_trajectory, Segment};
use crate::protocol::{NamedTrajectory, ProtocolSpec, TrajectoryKind};
use crate::timing::{
    aggregate_cycle, cut_influence_verdict, pair_and_compare, read_timing_csv, CycleSummary, PairedTimings,
    TimingContext, VerdictReport, VerdictThresholds,
};
use crate::trace::{Trace, TraceMetadata, TraceSource};
use crate::{sha256_hex, TOOL_VERSION};

mod bundle;
mod reference;
mod render;

pub use bundle::{load_bundle, Bundle, BundleError, BundleManifest};
pub use reference::{
    compare_to_reference, indicators, polarity, DiffEntry, DiffReport, Polarity, ReferenceIndicator,
    ReferenceTable, Standing,
};
pub use render::{positioning_markdown, render_report, timing_markdown, ReportFormat};

pub const SCHEMA_VERSION: u32 = 1;

pub const SECTORS: [Sector; 4] = [
    Sector::ComplexForms,
    Sector::AeronauticMassRemoval,
    Sector::Automotive,
    Sector::GeneralMechanics,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Section<T> {
    Executed {
        /// Input label → SHA-256 digest.
        #[serde(default)]
        inputs: BTreeMap<String, String>,
        value: T,
    },
    NotExecuted {
        reason: String,
    },
    Failed {
        #[serde(default)]
        inputs: BTreeMap<String, String>,
        error: String,
    },
}

impl<T> Section<T> {
    pub fn not_executed(reason: impl Into<String>) -> Self {
        Section::NotExecuted { reason: reason.into() }
    }

    pub fn value(&self) -> Option<&T> {
        match self {
            Section::Executed { value, .. } => Some(value),
            _ => None,
        }
    }

    pub fn is_failed(&self) -> bool {
        matches!(self, Section::Failed { .. })
    }

    fn from_result(inputs: BTreeMap<String, String>, result: Result<T, String>) -> Self {
        match result {
            Ok(value) => Section::Executed { inputs, value },
            Err(error) => Section::Failed { inputs, error },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    /// Every input read by the run, label → SHA-256.
    pub inputs: BTreeMap<String, String>,
}

/// Kinematic indicators for one trajectory or trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryKinematics {
    pub source: TraceSource,
    pub samples: usize,
    /// s
    pub duration: f64,
    /// m/min
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub commanded_feed: Option<f64>,
    /// Planned per-axis peaks under the machine limits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planned: Option<KinematicIndicators>,
    /// Indicators of a commanded (setpoint) trace, when one was supplied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub commanded: Option<KinematicIndicators>,
    pub attained: KinematicIndicators,
    /// Attained against commanded trace, or against the plan.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<DynamicsComparison>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saturation: Option<SaturationReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilityReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AxisPositioning {
    Computed(PositioningStats),
    InsufficientData { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perpendicularity {
    pub faces: [String; 2],
    /// mm
    pub ref_length: f64,
    /// µm
    pub defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatnessSection {
    pub faces: BTreeMap<String, FittedPlane>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perpendicularity: Option<Perpendicularity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub flatness: Section<FlatnessSection>,
    pub localization: Section<LocalizationStats>,
    pub deflection: Section<BTreeMap<String, DeflectionReport>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSection {
    pub paired: PairedTimings,
    pub verdict: VerdictReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub air_cut: Option<CycleSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loaded: Option<CycleSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterizationReport {
    pub schema_version: u32,
    /// Only field allowed to differ between runs on the same inputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<String>,
    pub machine: String,
    pub provenance: Provenance,
    pub datasheet: Section<BTreeMap<Sector, GapReport>>,
    pub kinematics: Section<BTreeMap<String, Section<TrajectoryKinematics>>>,
    pub homogeneity: Section<BTreeMap<String, HomogeneityReport>>,
    pub positioning: Section<BTreeMap<AxisId, AxisPositioning>>,
    pub circular: Section<BTreeMap<String, CircularityReport>>,
    pub tolerances: Tolerances,
    pub timing: Section<TimingSection>,
    pub scorecard: Section<Scorecard>,
    pub reference: Section<DiffReport>,
}

impl CharacterizationReport {
    /// Report with every section not executed.
    pub fn empty(machine: impl Into<String>) -> Self {
        let none = || "no input".to_string();
        Self {
            schema_version: SCHEMA_VERSION,
            generated_at: None,
            machine: machine.into(),
            provenance: Provenance {
                tool_version: TOOL_VERSION.to_string(),
                inputs: BTreeMap::new(),
            },
            datasheet: Section::not_executed(none()),
            kinematics: Section::not_executed(none()),
            homogeneity: Section::not_executed(none()),
            positioning: Section::not_executed(none()),
            circular: Section::not_executed(none()),
            tolerances: Tolerances {
                flatness: Section::not_executed(none()),
                localization: Section::not_executed(none()),
                deflection: Section::not_executed(none()),
            },
            timing: Section::not_executed(none()),
            scorecard: Section::not_executed(none()),
            reference: Section::not_executed(none()),
        }
    }

    /// Whether any section, or any trajectory inside the kinematics
    /// section, failed.
    pub fn has_failures(&self) -> bool {
        let nested = self
            .kinematics
            .value()
            .is_some_and(|m| m.values().any(Section::is_failed));
        nested
            || self.datasheet.is_failed()
            || self.kinematics.is_failed()
            || self.homogeneity.is_failed()
            || self.positioning.is_failed()
            || self.circular.is_failed()
            || self.tolerances.flatness.is_failed()
            || self.tolerances.localization.is_failed()
            || self.tolerances.deflection.is_failed()
            || self.timing.is_failed()
            || self.scorecard.is_failed()
            || self.reference.is_failed()
    }

    /// Raw values for the sector criteria that the report can support:
    ///
    /// * dynamics: lowest attained acceleration over single-axis moves, m/s²
    /// * repeatability: worst bi-directional repeatability, µm
    /// * cycle: global cycle time (loaded, else air cut), s
    /// * tracking: worst circularity about the fitted center, µm
    /// * geometric: mean hole localization, else worst flatness, µm
    pub fn criterion_values(&self) -> BTreeMap<Criterion, f64> {
        let mut out = BTreeMap::new();
        if let Some(k) = self.kinematics.value() {
            let lowest = k
                .values()
                .filter_map(Section::value)
                .filter(|t| t.attained.axes.len() == 1)
                .flat_map(|t| t.attained.axes.values().map(|i| i.a_max))
                .fold(f64::INFINITY, f64::min);
            if lowest.is_finite() {
                out.insert(Criterion::LinearAxisDynamics, lowest);
            }
        }
        if let Some(p) = self.positioning.value() {
            let worst = p
                .values()
                .filter_map(|a| match a {
                    AxisPositioning::Computed(s) => Some(s.repeat_bi),
                    AxisPositioning::InsufficientData { .. } => None,
                })
                .fold(f64::NEG_INFINITY, f64::max);
            if worst.is_finite() {
                out.insert(Criterion::XyRepeatabilityHomogeneity, worst);
            }
        }
        if let Some(t) = self.timing.value() {
            if let Some(g) = t.paired.global() {
                out.insert(Criterion::CycleTime, g.t_loaded);
            } else if let Some(g) = t.air_cut.as_ref().and_then(|s| s.recorded_global) {
                out.insert(Criterion::CycleTime, g);
            }
        }
        if let Some(c) = self.circular.value() {
            let worst = c.values().map(|r| r.fitted.circularity).fold(f64::NEG_INFINITY, f64::max);
            if worst.is_finite() {
                out.insert(Criterion::TrajectoryTracking, worst);
            }
        }
        if let Some(l) = self.tolerances.localization.value() {
            out.insert(Criterion::GeometricQuality, l.mean);
        } else if let Some(f) = self.tolerances.flatness.value() {
            let worst = f
                .faces
                .values()
                .map(|p| p.flatness_mz.unwrap_or(p.flatness_ls))
                .fold(f64::NEG_INFINITY, f64::max);
            if worst.is_finite() {
                out.insert(Criterion::GeometricQuality, worst);
            }
        }
        out
    }
}

/// A file read by the run; `label` is what the report shows.
#[derive(Debug, Clone, PartialEq)]
pub struct InputFile {
    pub label: String,
    pub path: PathBuf,
}

impl InputFile {
    pub fn new(label: impl Into<String>, path: impl Into<PathBuf>) -> Self {
        Self {
            label: label.into(),
            path: path.into(),
        }
    }

    fn read(&self) -> Result<(Vec<u8>, BTreeMap<String, String>), String> {
        let bytes = std::fs::read(&self.path).map_err(|e| format!("{}: {e}", self.label))?;
        let inputs = BTreeMap::from([(self.label.clone(), sha256_hex(&bytes))]);
        Ok((bytes, inputs))
    }
}

/// What a run may use besides the protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacterizationInputs {
    /// Simulate trajectories that have no measured trace.
    pub simulate: bool,
    /// Simulation sample period, s.
    pub dt: f64,
    /// Measured traces by trajectory id; ids outside the protocol are
    /// analyzed as free traces.
    pub traces: BTreeMap<String, InputFile>,
    /// Commanded (setpoint) traces paired with `traces` by id.
    pub commanded_traces: BTreeMap<String, InputFile>,
    pub positioning: Option<InputFile>,
    /// CMM points of circular features.
    pub circles: Option<InputFile>,
    /// CMM points of plane faces.
    pub planes: Option<InputFile>,
    pub perpendicular_pair: Option<[String; 2]>,
    /// Perpendicularity reference length, mm; defaults to the smaller
    /// face's extent.
    pub perpendicular_length: Option<f64>,
    pub holes: Option<InputFile>,
    pub profiles: Option<InputFile>,
    pub timing: Option<InputFile>,
    pub references: Option<InputFile>,
    /// Published datasheet for the gap analysis; the protocol machine is
    /// used otherwise.
    pub datasheet: Option<InputFile>,
    pub sector: Option<Sector>,
    pub verdict_thresholds: VerdictThresholds,
}

impl Default for CharacterizationInputs {
    fn default() -> Self {
        Self {
            simulate: false,
            dt: crate::motion::DEFAULT_DT,
            traces: BTreeMap::new(),
            commanded_traces: BTreeMap::new(),
            positioning: None,
            circles: None,
            planes: None,
            perpendicular_pair: None,
            perpendicular_length: None,
            holes: None,
            profiles: None,
            timing: None,
            references: None,
            datasheet: None,
            sector: None,
            verdict_thresholds: VerdictThresholds::default(),
        }
    }
}

fn digest_of<T: Serialize>(value: &T) -> String {
    sha256_hex(serde_json::to_string(value).expect("serializable").as_bytes())
}

fn load_trace(file: &InputFile, id: &str) -> Result<(Trace, BTreeMap<String, String>), String> {
    let (bytes, inputs) = file.read()?;
    let trace = Trace::read_csv(bytes.as_slice(), TraceMetadata::measured(id)).map_err(|e| format!("{}: {e}", file.label))?;
    Ok((trace, inputs))
}

fn keep_axes(ind: KinematicIndicators, axes: &[AxisId]) -> KinematicIndicators {
    KinematicIndicators {
        axes: ind.axes.into_iter().filter(|(a, _)| axes.contains(a)).collect(),
    }
}

/// Planned per-axis peaks, in indicator units.
fn planned_indicators(traj: &NamedTrajectory, spec: &ProtocolSpec) -> Result<KinematicIndicators, String> {
    let limits = spec.machine.limits_map();
    let mut axes = BTreeMap::new();
    match &traj.spec.segments[0] {
        Segment::Linear { start, end, feed } => {
            let p = plan_linear_move(*start, *end, *feed, &limits).map_err(|e| e.to_string())?;
            let len = ((end[0] - start[0]).powi(2) + (end[1] - start[1]).powi(2) + (end[2] - start[2]).powi(2)).sqrt();
            for axis in traj.moving_axes() {
                let k = axis.index().unwrap();
                let c = (end[k] - start[k]).abs() / len;
                axes.insert(
                    axis,
                    AxisIndicators::new(p.v_peak * c * 0.06, p.a_peak * c / 1000.0, p.jerk * c / 1000.0),
                );
            }
        }
        Segment::Arc(arc) => {
            let (v, a, j) = arc_limits(arc, &limits).map_err(|e| e.to_string())?;
            for axis in [AxisId::X, AxisId::Y] {
                axes.insert(axis, AxisIndicators::new(v * 0.06, a / 1000.0, j / 1000.0));
            }
        }
        Segment::Dwell { .. } => {}
    }
    Ok(KinematicIndicators { axes })
}

fn analyze_trajectory(
    id: &str,
    traj: Option<&NamedTrajectory>,
    spec: &ProtocolSpec,
    inputs: &CharacterizationInputs,
) -> Section<TrajectoryKinematics> {
    let mut digests = BTreeMap::new();
    let result = (|| -> Result<Option<TrajectoryKinematics>, String> {
        let trace = if let Some(file) = inputs.traces.get(id) {
            let (t, d) = load_trace(file, id)?;
            digests.extend(d);
            t
        } else if let (true, Some(traj)) = (inputs.simulate, traj) {
            let limits = spec.machine.limits_map();
            digests.insert(
                "simulation".to_string(),
                digest_of(&(&limits, &traj.spec, inputs.dt)),
            );
            let mut t = run_trajectory(&traj.spec, &limits, inputs.dt).map_err(|e| e.to_string())?;
            t.metadata = TraceMetadata::simulated(id);
            t
        } else {
            return Ok(None);
        };
        let kt = differentiate(&trace, SmoothingDescriptor::default()).map_err(|e| e.to_string())?;
        let moving = traj.map_or_else(|| trace.axes().to_vec(), NamedTrajectory::moving_axes);
        let attained = keep_axes(kinematic_indicators(&kt), &moving);
        let commanded = match inputs.commanded_traces.get(id) {
            Some(file) => {
                let (ct, d) = load_trace(file, id)?;
                digests.extend(d);
                let ckt = differentiate(&ct, SmoothingDescriptor::default()).map_err(|e| e.to_string())?;
                Some(keep_axes(kinematic_indicators(&ckt), &moving))
            }
            None => None,
        };
        let planned = traj.map(|t| planned_indicators(t, spec)).transpose()?;
        let comparison = match commanded.as_ref().or(planned.as_ref()) {
            Some(reference) => Some(compare_commanded_attained(reference, &attained).map_err(|e| e.to_string())?),
            None => None,
        };
        let saturation = match traj {
            Some(t) => Some(saturation_analysis(&kt, t.commanded_feed).map_err(|e| e.to_string())?),
            None => None,
        };
        Ok(Some(TrajectoryKinematics {
            source: trace.metadata.source,
            samples: trace.len(),
            duration: trace.duration(),
            commanded_feed: traj.map(|t| t.commanded_feed / 1000.0),
            planned,
            commanded,
            attained,
            comparison,
            saturation,
            stability: stability_metric(&kt).ok(),
        }))
    })();
    match result {
        Ok(Some(value)) => Section::Executed { inputs: digests, value },
        Ok(None) => Section::not_executed("no measured trace and simulation disabled"),
        Err(error) => Section::Failed { inputs: digests, error },
    }
}

fn kinematics_section(spec: &ProtocolSpec, inputs: &CharacterizationInputs) -> Section<BTreeMap<String, Section<TrajectoryKinematics>>> {
    let mut ids: Vec<(String, Option<&NamedTrajectory>)> =
        spec.trajectories.iter().map(|t| (t.id.clone(), Some(t))).collect();
    for id in inputs.traces.keys() {
        if spec.trajectory(id).is_none() {
            ids.push((id.clone(), None));
        }
    }
    // independent trajectories are analyzed in parallel and merged by id
    let results: BTreeMap<String, Section<TrajectoryKinematics>> = std::thread::scope(|scope| {
        let handles: Vec<_> = ids
            .iter()
            .map(|(id, traj)| {
                let id = id.clone();
                let traj = *traj;
                scope.spawn(move || {
                    let section = analyze_trajectory(&id, traj, spec, inputs);
                    (id, section)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("trajectory analysis panicked"))
            .collect()
    });
    if results.values().all(|s| matches!(s, Section::NotExecuted { .. })) {
        return Section::not_executed("no measured traces and simulation disabled");
    }
    let digests = results
        .values()
        .flat_map(|s| match s {
            Section::Executed { inputs, .. } | Section::Failed { inputs, .. } => inputs.clone(),
            Section::NotExecuted { .. } => BTreeMap::new(),
        })
        .collect();
    Section::Executed {
        inputs: digests,
        value: results,
    }
}

fn homogeneity_section(
    spec: &ProtocolSpec,
    kinematics: &Section<BTreeMap<String, Section<TrajectoryKinematics>>>,
) -> Section<BTreeMap<String, HomogeneityReport>> {
    let Some(k) = kinematics.value() else {
        return Section::not_executed("kinematics not executed");
    };
    let attained = |id: &str, axis: AxisId| -> Option<AxisIndicators> {
        k.get(id)?.value()?.attained.get(axis).copied()
    };
    let mut out = BTreeMap::new();
    for t in &spec.trajectories {
        if t.kind == TrajectoryKind::Linear && t.moving_axes() == [AxisId::X, AxisId::Y] {
            if let (Some(x), Some(y)) = (attained(&t.id, AxisId::X), attained(&t.id, AxisId::Y)) {
                out.insert(t.id.clone(), homogeneity(&x, &y, DEFAULT_HOMOGENEITY_THRESHOLD));
            }
        }
    }
    if let (Some(x), Some(y)) = (attained("A1-O", AxisId::X), attained("A3-O", AxisId::Y)) {
        out.insert("uniaxial".to_string(), homogeneity(&x, &y, DEFAULT_HOMOGENEITY_THRESHOLD));
    }
    if out.is_empty() {
        return Section::not_executed("no interpolated XY move analyzed");
    }
    Section::Executed {
        inputs: BTreeMap::new(),
        value: out,
    }
}

fn positioning_section(file: &InputFile) -> Section<BTreeMap<AxisId, AxisPositioning>> {
    let (bytes, digests) = match file.read() {
        Ok(v) => v,
        Err(error) => return Section::Failed { inputs: BTreeMap::new(), error },
    };
    let result = read_positioning_csv(bytes.as_slice())
        .map_err(|e| e.to_string())
        .map(|records| {
            let mut by_axis: BTreeMap<AxisId, Vec<PositioningRecord>> = BTreeMap::new();
            for r in records {
                by_axis.entry(r.axis).or_default().push(r);
            }
            by_axis
                .into_iter()
                .map(|(axis, rs)| {
                    let entry = match positioning_stats(&rs) {
                        Ok(s) => AxisPositioning::Computed(s),
                        Err(e) => AxisPositioning::InsufficientData { reason: e.to_string() },
                    };
                    (axis, entry)
                })
                .collect()
        });
    Section::from_result(digests, result)
}

fn circular_section(spec: &ProtocolSpec, inputs: &CharacterizationInputs) -> Section<BTreeMap<String, CircularityReport>> {
    let mut digests = BTreeMap::new();
    let mut out = BTreeMap::new();
    let result = (|| -> Result<(), String> {
        for t in spec.trajectories.iter().filter(|t| t.kind == TrajectoryKind::Circle) {
            let Some(file) = inputs.traces.get(&t.id) else { continue };
            let (trace, d) = load_trace(file, &t.id)?;
            digests.extend(d);
            let pts: Vec<[f64; 2]> = trace.positions().iter().map(|p| [p[0], p[1]]).collect();
            let report = circularity_report(&pts, t.nominal_circle()).map_err(|e| format!("{}: {e}", t.id))?;
            out.insert(t.id.clone(), report);
        }
        if let Some(file) = &inputs.circles {
            let (bytes, d) = file.read()?;
            digests.extend(d);
            let features = read_cmm_points(bytes.as_slice()).map_err(|e| e.to_string())?;
            for (id, pts) in features {
                let xy: Vec<[f64; 2]> = pts.iter().map(|p| [p[0], p[1]]).collect();
                let report = circularity_report(&xy, None).map_err(|e| format!("{id}: {e}"))?;
                out.insert(id, report);
            }
        }
        Ok(())
    })();
    match result {
        Err(error) => Section::Failed { inputs: digests, error },
        Ok(()) if out.is_empty() => Section::not_executed("no measured circle data"),
        Ok(()) => Section::Executed { inputs: digests, value: out },
    }
}

fn flatness_section(inputs: &CharacterizationInputs) -> Section<FlatnessSection> {
    let Some(file) = &inputs.planes else {
        return Section::not_executed("no plane measurements");
    };
    let (bytes, digests) = match file.read() {
        Ok(v) => v,
        Err(error) => return Section::Failed { inputs: BTreeMap::new(), error },
    };
    let result = (|| -> Result<FlatnessSection, String> {
        let features = read_cmm_points(bytes.as_slice()).map_err(|e| e.to_string())?;
        let faces: BTreeMap<String, FittedPlane> = features
            .into_iter()
            .map(|(id, pts)| fit_plane(&pts, true).map(|p| (id.clone(), p)).map_err(|e| format!("{id}: {e}")))
            .collect::<Result<_, _>>()?;
        let perpendicularity = match &inputs.perpendicular_pair {
            Some([a, b]) => {
                let pa = faces.get(a).ok_or_else(|| format!("face `{a}` not measured"))?;
                let pb = faces.get(b).ok_or_else(|| format!("face `{b}` not measured"))?;
                let (ref_length, defect) = match inputs.perpendicular_length {
                    Some(l) => (l, perpendicularity(pa, pb, l)),
                    None => (pa.extent.min(pb.extent), perpendicularity_default(pa, pb)),
                };
                Some(Perpendicularity {
                    faces: [a.clone(), b.clone()],
                    ref_length,
                    defect,
                })
            }
            None => None,
        };
        Ok(FlatnessSection { faces, perpendicularity })
    })();
    Section::from_result(digests, result)
}

fn localization_section(inputs: &CharacterizationInputs) -> Section<LocalizationStats> {
    let Some(file) = &inputs.holes else {
        return Section::not_executed("no hole measurements");
    };
    let (bytes, digests) = match file.read() {
        Ok(v) => v,
        Err(error) => return Section::Failed { inputs: BTreeMap::new(), error },
    };
    let result = read_holes_csv(bytes.as_slice())
        .and_then(|h| localization_stats(&h.nominal, &h.measured))
        .map_err(|e: MetrologyError| e.to_string());
    Section::from_result(digests, result)
}

fn deflection_section(inputs: &CharacterizationInputs) -> Section<BTreeMap<String, DeflectionReport>> {
    let Some(file) = &inputs.profiles else {
        return Section::not_executed("no rough/finish profiles");
    };
    let (bytes, digests) = match file.read() {
        Ok(v) => v,
        Err(error) => return Section::Failed { inputs: BTreeMap::new(), error },
    };
    let result = read_profiles_csv(bytes.as_slice()).map_err(|e| e.to_string()).and_then(|profiles| {
        profiles
            .into_iter()
            .map(|(id, p)| {
                tool_deflection_indicator(&p.rough, &p.finish, p.nominal_offset)
                    .map(|r| (id.clone(), r))
                    .map_err(|e| format!("{id}: {e}"))
            })
            .collect()
    });
    Section::from_result(digests, result)
}

fn timing_section(file: &InputFile, thresholds: VerdictThresholds) -> Section<TimingSection> {
    let (bytes, digests) = match file.read() {
        Ok(v) => v,
        Err(error) => return Section::Failed { inputs: BTreeMap::new(), error },
    };
    let result = (|| -> Result<TimingSection, String> {
        let records = read_timing_csv(bytes.as_slice()).map_err(|e| e.to_string())?;
        let paired = pair_and_compare(&records).map_err(|e| e.to_string())?;
        let verdict = cut_influence_verdict(&paired.comparisons, thresholds).map_err(|e| e.to_string())?;
        Ok(TimingSection {
            air_cut: aggregate_cycle(&records, TimingContext::AirCut).ok(),
            loaded: aggregate_cycle(&records, TimingContext::Loaded).ok(),
            paired,
            verdict,
        })
    })();
    Section::from_result(digests, result)
}

fn datasheet_section(spec: &ProtocolSpec, inputs: &CharacterizationInputs) -> Section<BTreeMap<Sector, GapReport>> {
    let (sheet, digests) = match &inputs.datasheet {
        Some(file) => {
            let parsed = file.read().and_then(|(bytes, d)| {
                let text = String::from_utf8(bytes).map_err(|e| format!("{}: {e}", file.label))?;
                let json = file.path.extension().is_some_and(|e| e == "json");
                let raw = RawDatasheet::parse(&text, json).map_err(|e| format!("{}: {e}", file.label))?;
                let sheet = validate_datasheet(&raw).map_err(|e: ModelError| format!("{}: {e}", file.label))?;
                Ok((sheet, d))
            });
            match parsed {
                Ok(v) => v,
                Err(error) => return Section::Failed { inputs: BTreeMap::new(), error },
            }
        }
        None => (
            spec.machine.clone(),
            BTreeMap::from([("machine".to_string(), digest_of(&spec.machine))]),
        ),
    };
    let gaps = SECTORS
        .iter()
        .map(|s| (*s, datasheet_gap_report(&sheet, &SectorProfile::standard(*s))))
        .collect();
    Section::Executed { inputs: digests, value: gaps }
}

fn collect_digests<T>(section: &Section<T>, into: &mut BTreeMap<String, String>) {
    if let Section::Executed { inputs, .. } | Section::Failed { inputs, .. } = section {
        into.extend(inputs.iter().map(|(k, v)| (k.clone(), v.clone())));
    }
}

/// Runs every protocol section for which data (or simulation) is available.
pub fn run_characterization(spec: &ProtocolSpec, inputs: &CharacterizationInputs) -> CharacterizationReport {
    let mut report = CharacterizationReport::empty(spec.machine.name.clone());
    report.datasheet = datasheet_section(spec, inputs);
    report.kinematics = kinematics_section(spec, inputs);
    report.homogeneity = homogeneity_section(spec, &report.kinematics);
    if let Some(file) = &inputs.positioning {
        report.positioning = positioning_section(file);
    } else {
        report.positioning = Section::not_executed("no positioning measurements");
    }
    report.circular = circular_section(spec, inputs);
    report.tolerances = Tolerances {
        flatness: flatness_section(inputs),
        localization: localization_section(inputs),
        deflection: deflection_section(inputs),
    };
    report.timing = match &inputs.timing {
        Some(file) => timing_section(file, inputs.verdict_thresholds),
        None => Section::not_executed("no timing records"),
    };
    report.scorecard = match inputs.sector {
        None => Section::not_executed("no sector selected"),
        Some(sector) => match score_values(&report.criterion_values(), &SectorProfile::standard(sector)) {
            Ok(card) => Section::Executed {
                inputs: BTreeMap::new(),
                value: card,
            },
            Err(ModelError::MissingIndicator(c)) => {
                Section::not_executed(format!("no value for criterion `{}`", c.as_str()))
            }
            Err(e) => Section::Failed {
                inputs: BTreeMap::new(),
                error: e.to_string(),
            },
        },
    };
    report.reference = match &inputs.references {
        None => Section::not_executed("no reference table"),
        Some(file) => match file.read().and_then(|(bytes, d)| {
            let text = String::from_utf8(bytes).map_err(|e| e.to_string())?;
            let table = ReferenceTable::parse(&text).map_err(|e| format!("{}: {e}", file.label))?;
            Ok((table, d))
        }) {
            Ok((table, digests)) => Section::Executed {
                inputs: digests,
                value: compare_to_reference(&report, &table),
            },
            Err(error) => Section::Failed {
                inputs: BTreeMap::new(),
                error,
            },
        },
    };

    let mut all = BTreeMap::from([("protocol".to_string(), digest_of(spec))]);
    collect_digests(&report.datasheet, &mut all);
    collect_digests(&report.kinematics, &mut all);
    collect_digests(&report.positioning, &mut all);
    collect_digests(&report.circular, &mut all);
    collect_digests(&report.tolerances.flatness, &mut all);
    collect_digests(&report.tolerances.localization, &mut all);
    collect_digests(&report.tolerances.deflection, &mut all);
    collect_digests(&report.timing, &mut all);
    collect_digests(&report.reference, &mut all);
    report.provenance.inputs = all;
    report
}
