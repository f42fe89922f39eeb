use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use hsm_core::analysis::{
    compare_commanded_attained, differentiate, kinematic_indicators, saturation_analysis, stability_metric,
    DynamicsComparison, KinematicIndicators, SaturationReport, SmoothingDescriptor, StabilityReport,
};
use hsm_core::metrology::{
    circularity_report, fit_plane, localization_stats, pair_hole_positions, perpendicularity,
    perpendicularity_default, positioning_stats, read_cmm_points, read_hole_positions_csv, read_holes_csv,
    read_positioning_csv, Circle, CircularityReport, PositioningRecord,
};
use hsm_core::model::{datasheet_gap_report, validate_datasheet, AxisId, RawDatasheet, SectorProfile};
use hsm_core::motion::{run_trajectory, DEFAULT_DT};
use hsm_core::protocol::{build_standard_protocol, ProtocolOverrides};
use hsm_core::report::{
    load_bundle, positioning_markdown, render_report, timing_markdown, AxisPositioning, FlatnessSection,
    Perpendicularity, ReportFormat, SECTORS,
};
use hsm_core::timing::{cut_influence_verdict, pair_and_compare, read_timing_csv, PairedTimings, VerdictReport};
use hsm_core::trace::{Trace, TraceMetadata};
use serde::Serialize;

use crate::config::{read_document, CliConfig};
use crate::{AnalyzeCommand, Cli, Command, DatasheetCommand, FitCommand, SimulateArgs, TimingCommand};

#[derive(Debug)]
pub enum CliError {
    /// Bad input: exit code 1.
    Validation(String),
}

impl CliError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Validation(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> u8 {
        1
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => f.write_str(m),
        }
    }
}

fn invalid<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::Validation(format!("{}: {e}", path.display()))
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::io(path, e))
}

struct Output<'a> {
    out: Option<&'a Path>,
    format: ReportFormat,
}

impl Output<'_> {
    fn write(&self, text: &str) -> Result<(), CliError> {
        match self.out {
            Some(path) => std::fs::write(path, text).map_err(|e| CliError::io(path, e)),
            None => std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| CliError::Validation(format!("stdout: {e}"))),
        }
    }

    fn json<T: Serialize>(&self, value: &T) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(value).expect("serializable output");
        s.push('\n');
        self.write(&s)
    }

    /// JSON, or the given Markdown rendering.
    fn either<T: Serialize>(&self, value: &T, markdown: impl FnOnce() -> String) -> Result<(), CliError> {
        match self.format {
            ReportFormat::Json => self.json(value),
            ReportFormat::Markdown => self.write(&markdown()),
        }
    }

    fn json_only<T: Serialize>(&self, value: &T, command: &str) -> Result<(), CliError> {
        if self.format == ReportFormat::Markdown {
            return Err(CliError::Validation(format!("`{command}` only produces JSON")));
        }
        self.json(value)
    }
}

pub fn run(cli: &Cli) -> Result<ExitCode, CliError> {
    let config = CliConfig::load(cli.config.as_deref())?;
    let output = Output {
        out: cli.out.as_deref(),
        format: cli.format.or(config.format).unwrap_or_default(),
    };
    match &cli.command {
        Command::Datasheet(cmd) => datasheet(cmd, &output),
        Command::Simulate(args) => simulate(args, &config, cli.out.as_deref()),
        Command::Analyze(AnalyzeCommand::Trace {
            file,
            commanded_feed,
            commanded,
            window,
        }) => analyze_trace(file, *commanded_feed, commanded.as_deref(), window.or(config.smoothing_window), &output),
        Command::Positioning { file } => positioning(file, &output),
        Command::Fit(cmd) => fit(cmd, &output),
        Command::Localization { nominal, measured } => localization(nominal, measured.as_deref(), &output),
        Command::Timing(TimingCommand::Compare { file }) => timing(file, &config, &output),
        Command::Report { bundle, no_timestamp } => return report(bundle, *no_timestamp, &config, &output),
    }?;
    Ok(ExitCode::SUCCESS)
}

fn load_machine(path: &Path) -> Result<hsm_core::model::ValidatedDatasheet, CliError> {
    let raw = RawDatasheet::from_path(path).map_err(|e| CliError::Validation(e.to_string()))?;
    validate_datasheet(&raw).map_err(invalid(path))
}

fn datasheet(cmd: &DatasheetCommand, output: &Output) -> Result<(), CliError> {
    match cmd {
        DatasheetCommand::Validate { file } => output.json_only(&load_machine(file)?, "datasheet validate"),
        DatasheetCommand::Gaps { file, sector } => {
            let sheet = load_machine(file)?;
            let sectors = sector.map_or_else(|| SECTORS.to_vec(), |s| vec![s]);
            let gaps: BTreeMap<_, _> = sectors
                .into_iter()
                .map(|s| (s, datasheet_gap_report(&sheet, &SectorProfile::standard(s))))
                .collect();
            output.json_only(&gaps, "datasheet gaps")
        }
    }
}

#[derive(Serialize)]
struct SimulationSummary {
    machine: String,
    dt: f64,
    /// Trajectory id → sample count.
    traces: BTreeMap<String, usize>,
}

fn simulate(args: &SimulateArgs, config: &CliConfig, out: Option<&Path>) -> Result<(), CliError> {
    let machine = load_machine(&args.machine)?;
    let overrides: ProtocolOverrides = match &args.protocol {
        Some(p) => read_document(p)?,
        None => ProtocolOverrides::default(),
    };
    let spec = build_standard_protocol(&machine, &overrides).map_err(|e| CliError::Validation(e.to_string()))?;
    let dt = args.dt.or(config.dt).unwrap_or(DEFAULT_DT);
    for id in &args.trajectories {
        if spec.trajectory(id).is_none() {
            let known: Vec<&str> = spec.trajectories.iter().map(|t| t.id.as_str()).collect();
            return Err(CliError::Validation(format!(
                "unknown trajectory `{id}` (known: {})",
                known.join(", ")
            )));
        }
    }
    let selected: Vec<_> = spec
        .trajectories
        .iter()
        .filter(|t| args.trajectories.is_empty() || args.trajectories.contains(&t.id))
        .collect();
    let limits = machine.limits_map();
    let simulate_one = |t: &hsm_core::protocol::NamedTrajectory| -> Result<Trace, CliError> {
        let mut trace = run_trajectory(&t.spec, &limits, dt).map_err(|e| CliError::Validation(format!("{}: {e}", t.id)))?;
        trace.metadata = TraceMetadata::simulated(&t.id);
        Ok(trace)
    };
    let Some(dir) = out else {
        let [only] = selected.as_slice() else {
            return Err(CliError::Validation(
                "without --out exactly one --trajectory must be selected".into(),
            ));
        };
        let trace = simulate_one(only)?;
        return Output { out: None, format: ReportFormat::Json }.write(&trace.to_csv_string());
    };
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut summary = SimulationSummary {
        machine: machine.name.clone(),
        dt,
        traces: BTreeMap::new(),
    };
    for t in selected {
        let trace = simulate_one(t)?;
        let path = dir.join(format!("{}.csv", t.id));
        std::fs::write(&path, trace.to_csv_string()).map_err(|e| CliError::io(&path, e))?;
        summary.traces.insert(t.id.clone(), trace.len());
    }
    let protocol_path = dir.join("protocol.json");
    let protocol = serde_json::to_string_pretty(&spec).expect("serializable protocol") + "\n";
    std::fs::write(&protocol_path, protocol).map_err(|e| CliError::io(&protocol_path, e))?;
    Output { out: None, format: ReportFormat::Json }.json(&summary)
}

#[derive(Serialize)]
struct TraceAnalysis {
    samples: usize,
    /// s
    duration: f64,
    smoothing: SmoothingDescriptor,
    attained: KinematicIndicators,
    #[serde(skip_serializing_if = "Option::is_none")]
    commanded: Option<KinematicIndicators>,
    #[serde(skip_serializing_if = "Option::is_none")]
    comparison: Option<DynamicsComparison>,
    #[serde(skip_serializing_if = "Option::is_none")]
    saturation: Option<SaturationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stability: Option<StabilityReport>,
}

fn smoothing(window: Option<usize>) -> SmoothingDescriptor {
    match window {
        Some(w) if w <= 1 => SmoothingDescriptor::none(),
        Some(w) => SmoothingDescriptor {
            window: w,
            ..SmoothingDescriptor::default()
        },
        None => SmoothingDescriptor::default(),
    }
}

fn read_trace(path: &Path) -> Result<Trace, CliError> {
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Trace::read_csv(open(path)?, TraceMetadata::measured(id)).map_err(invalid(path))
}

fn analyze_trace(
    file: &Path,
    commanded_feed: Option<f64>,
    commanded: Option<&Path>,
    window: Option<usize>,
    output: &Output,
) -> Result<(), CliError> {
    let descriptor = smoothing(window);
    let trace = read_trace(file)?;
    let kt = differentiate(&trace, descriptor).map_err(invalid(file))?;
    let attained = kinematic_indicators(&kt);
    let commanded = match commanded {
        Some(path) => {
            let ckt = differentiate(&read_trace(path)?, descriptor).map_err(invalid(path))?;
            Some(kinematic_indicators(&ckt))
        }
        None => None,
    };
    let comparison = match &commanded {
        Some(c) => Some(compare_commanded_attained(c, &attained).map_err(invalid(file))?),
        None => None,
    };
    let saturation = match commanded_feed {
        Some(f) => Some(saturation_analysis(&kt, f).map_err(invalid(file))?),
        None => None,
    };
    let analysis = TraceAnalysis {
        samples: trace.len(),
        duration: trace.duration(),
        smoothing: descriptor,
        attained,
        commanded,
        comparison,
        saturation,
        stability: stability_metric(&kt).ok(),
    };
    output.json_only(&analysis, "analyze trace")
}

fn positioning(file: &Path, output: &Output) -> Result<(), CliError> {
    let records = read_positioning_csv(open(file)?).map_err(invalid(file))?;
    if records.is_empty() {
        return Err(CliError::Validation(format!("{}: no positioning rows", file.display())));
    }
    let mut by_axis: BTreeMap<AxisId, Vec<PositioningRecord>> = BTreeMap::new();
    for r in records {
        by_axis.entry(r.axis).or_default().push(r);
    }
    let stats: BTreeMap<AxisId, AxisPositioning> = by_axis
        .into_iter()
        .map(|(axis, rs)| {
            let entry = match positioning_stats(&rs) {
                Ok(s) => AxisPositioning::Computed(s),
                Err(e) => AxisPositioning::InsufficientData { reason: e.to_string() },
            };
            (axis, entry)
        })
        .collect();
    output.either(&stats, || positioning_markdown(&stats))
}

fn fit(cmd: &FitCommand, output: &Output) -> Result<(), CliError> {
    match cmd {
        FitCommand::Circle {
            file,
            nominal_center,
            nominal_radius,
        } => {
            let nominal = match (nominal_center, nominal_radius) {
                (Some(c), Some(r)) => Some(Circle {
                    center: *c,
                    radius: *r,
                }),
                _ => None,
            };
            let features = read_cmm_points(open(file)?).map_err(invalid(file))?;
            let reports: BTreeMap<String, CircularityReport> = features
                .into_iter()
                .map(|(id, pts)| {
                    let xy: Vec<[f64; 2]> = pts.iter().map(|p| [p[0], p[1]]).collect();
                    circularity_report(&xy, nominal)
                        .map(|r| (id.clone(), r))
                        .map_err(|e| CliError::Validation(format!("{}: {id}: {e}", file.display())))
                })
                .collect::<Result<_, _>>()?;
            output.json_only(&reports, "fit circle")
        }
        FitCommand::Plane {
            file,
            perpendicular,
            length,
        } => {
            let features = read_cmm_points(open(file)?).map_err(invalid(file))?;
            let faces: BTreeMap<_, _> = features
                .into_iter()
                .map(|(id, pts)| {
                    fit_plane(&pts, true)
                        .map(|p| (id.clone(), p))
                        .map_err(|e| CliError::Validation(format!("{}: {id}: {e}", file.display())))
                })
                .collect::<Result<_, _>>()?;
            let perpendicularity = match perpendicular {
                Some([a, b]) => {
                    let face = |id: &String| {
                        faces
                            .get(id)
                            .ok_or_else(|| CliError::Validation(format!("face `{id}` not in {}", file.display())))
                    };
                    let (pa, pb) = (face(a)?, face(b)?);
                    let (ref_length, defect) = match length {
                        Some(l) => (*l, perpendicularity(pa, pb, *l)),
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
            output.json_only(&FlatnessSection { faces, perpendicularity }, "fit plane")
        }
    }
}

fn localization(nominal: &Path, measured: Option<&Path>, output: &Output) -> Result<(), CliError> {
    let holes = match measured {
        None => read_holes_csv(open(nominal)?).map_err(invalid(nominal))?,
        Some(m) => {
            let n = read_hole_positions_csv(open(nominal)?).map_err(invalid(nominal))?;
            let mm = read_hole_positions_csv(open(m)?).map_err(invalid(m))?;
            pair_hole_positions(n, mm).map_err(|e| CliError::Validation(e.to_string()))?
        }
    };
    let stats = localization_stats(&holes.nominal, &holes.measured).map_err(|e| CliError::Validation(e.to_string()))?;
    output.json_only(&stats, "localization")
}

#[derive(Serialize)]
struct TimingOutput {
    paired: PairedTimings,
    verdict: VerdictReport,
}

fn timing(file: &Path, config: &CliConfig, output: &Output) -> Result<(), CliError> {
    let records = read_timing_csv(open(file)?).map_err(invalid(file))?;
    let paired = pair_and_compare(&records).map_err(invalid(file))?;
    let verdict = cut_influence_verdict(&paired.comparisons, config.thresholds.unwrap_or_default())
        .map_err(invalid(file))?;
    let result = TimingOutput { paired, verdict };
    output.either(&result, || timing_markdown(&result.paired, &result.verdict))
}

fn report(bundle: &Path, no_timestamp: bool, config: &CliConfig, output: &Output) -> Result<ExitCode, CliError> {
    let mut bundle = load_bundle(bundle).map_err(|e| CliError::Validation(e.to_string()))?;
    if bundle.manifest.thresholds.is_none() {
        if let Some(t) = config.thresholds {
            bundle.inputs.verdict_thresholds = t;
        }
    }
    if bundle.manifest.dt.is_none() {
        if let Some(dt) = config.dt {
            bundle.inputs.dt = dt;
        }
    }
    let mut report = bundle.run();
    if !no_timestamp {
        report.generated_at = Some(chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
    }
    output.write(&render_report(&report, output.format))?;
    if report.has_failures() {
        eprintln!("report written with failed sections");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}
