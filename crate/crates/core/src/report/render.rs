//! JSON and Markdown renderings of a report.

use std::fmt::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AxisPositioning, CharacterizationReport, Section, Standing, SECTORS};
use std::collections::BTreeMap;

use crate::metrology::PositioningStats;
use crate::model::{AxisId, Coverage, Criterion};
use crate::timing::{PairedTimings, Verdict, VerdictReport};
use crate::trace::format_sig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Json,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown format `{other}` (json, markdown)")),
        }
    }
}

/// Deterministic rendering: same report, same bytes.
pub fn render_report(report: &CharacterizationReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Markdown => markdown(report),
    }
}

fn n(x: f64) -> String {
    format_sig(x, 4)
}

fn fixed(x: f64, decimals: usize) -> String {
    let s = format!("{x:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

fn coverage(c: Option<Coverage>) -> &'static str {
    match c {
        Some(Coverage::Covered) => "covered",
        Some(Coverage::PartiallyCovered) => "partial",
        Some(Coverage::Missing) => "missing",
        None => "n/a",
    }
}

fn flag(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

/// Writes the status line of a non-executed or failed section and returns
/// its value otherwise.
fn body<'a, T>(out: &mut String, section: &'a Section<T>) -> Option<&'a T> {
    match section {
        Section::Executed { value, .. } => Some(value),
        Section::NotExecuted { reason } => {
            let _ = writeln!(out, "_Not executed: {reason}._\n");
            None
        }
        Section::Failed { error, .. } => {
            let _ = writeln!(out, "**Failed:** {error}\n");
            None
        }
    }
}

/// Positioning table: one column per axis.
pub fn positioning_markdown(p: &BTreeMap<AxisId, AxisPositioning>) -> String {
    let mut o = String::new();
    let axes: Vec<AxisId> = p.keys().copied().collect();
    o.push_str("| indicator |");
    for a in &axes {
        let _ = write!(o, " {a} |");
    }
    o.push_str("\n|---|");
    o.push_str(&"---|".repeat(axes.len()));
    o.push('\n');
    type Field = fn(&PositioningStats) -> f64;
    let rows: [(&str, Option<Field>); 8] = [
        ("mean deviation +", Some(|s| s.mean_dev_pos)),
        ("mean deviation −", Some(|s| s.mean_dev_neg)),
        ("repeatability +", Some(|s| s.repeat_uni_pos)),
        ("repeatability −", Some(|s| s.repeat_uni_neg)),
        ("reversibility B", Some(|s| s.reversibility_b)),
        ("bi-directional mean", Some(|s| s.mean_dev_bi)),
        ("bi-directional repeatability", Some(|s| s.repeat_bi)),
        ("samples + / −", None),
    ];
    for (name, get) in rows {
        let _ = write!(o, "| {name} |");
        for a in &axes {
            let cell = match (&p[a], get) {
                (AxisPositioning::Computed(s), Some(get)) => fixed(get(s), 2),
                (AxisPositioning::Computed(s), None) => format!("{} / {}", s.n_pos, s.n_neg),
                (AxisPositioning::InsufficientData { .. }, _) => "insufficient data".to_string(),
            };
            let _ = write!(o, " {cell} |");
        }
        o.push('\n');
    }
    o
}

/// Entity time table followed by the verdict line.
pub fn timing_markdown(paired: &PairedTimings, verdict: &VerdictReport) -> String {
    let mut o = paired.to_markdown();
    o.push('\n');
    if !paired.unmatched.is_empty() {
        let names: Vec<String> = paired
            .unmatched
            .iter()
            .map(|r| format!("{} ({})", r.entity, r.context.as_str()))
            .collect();
        let _ = writeln!(o, "Unmatched entities: {}\n", names.join(", "));
    }
    let text = match &verdict.verdict {
        Verdict::NoInfluence => "no influence of cutting".to_string(),
        Verdict::Influence { offending } => format!("cutting influences {}", offending.join(", ")),
    };
    let _ = writeln!(
        o,
        "Verdict: {text} (entity threshold {}, global threshold {}, largest entity gap {})",
        n(verdict.thresholds.entity),
        n(verdict.thresholds.global),
        fixed(verdict.max_entity_relative, 4)
    );
    o
}

fn markdown(r: &CharacterizationReport) -> String {
    let mut o = String::new();
    let _ = writeln!(o, "# Characterization report: {}\n", r.machine);
    let _ = writeln!(o, "- schema version: {}", r.schema_version);
    let _ = writeln!(o, "- tool version: {}", r.provenance.tool_version);
    if let Some(t) = &r.generated_at {
        let _ = writeln!(o, "- generated at: {t}");
    }
    o.push('\n');
    if !r.provenance.inputs.is_empty() {
        o.push_str("## Inputs\n\n| input | sha256 |\n|---|---|\n");
        for (label, digest) in &r.provenance.inputs {
            let _ = writeln!(o, "| {label} | `{digest}` |");
        }
        o.push('\n');
    }

    o.push_str("## Datasheet coverage\n\n");
    if let Some(gaps) = body(&mut o, &r.datasheet) {
        o.push_str("| criterion |");
        for s in SECTORS {
            let _ = write!(o, " {} |", s.as_str());
        }
        o.push_str("\n|---|");
        o.push_str(&"---|".repeat(SECTORS.len()));
        o.push('\n');
        for c in Criterion::ALL {
            let _ = write!(o, "| {} |", c.as_str());
            for s in SECTORS {
                let _ = write!(o, " {} |", coverage(gaps.get(&s).and_then(|g| g.coverage(c))));
            }
            o.push('\n');
        }
        o.push('\n');
    }

    o.push_str("## Kinematics\n\n");
    if let Some(k) = body(&mut o, &r.kinematics) {
        o.push_str("| trajectory | source | axis | V max (m/min) | A max (m/s²) | J max (m/s³) | flagged |\n");
        o.push_str("|---|---|---|---|---|---|---|\n");
        let mut notes = String::new();
        for (id, section) in k {
            match section {
                Section::Executed { value: t, .. } => {
                    for (axis, ind) in &t.attained.axes {
                        let flagged: Vec<&str> = t
                            .comparison
                            .as_ref()
                            .map(|c| c.flagged().into_iter().filter(|(a, _)| a == axis).map(|(_, q)| q).collect())
                            .unwrap_or_default();
                        let _ = writeln!(
                            o,
                            "| {id} | {} | {axis} | {} | {} | {} | {} |",
                            if t.source == crate::trace::TraceSource::Simulated { "simulated" } else { "measured" },
                            fixed(ind.v_max, 2),
                            fixed(ind.a_max, 2),
                            fixed(ind.j_max, 1),
                            if flagged.is_empty() { "-".to_string() } else { flagged.join(", ") },
                        );
                    }
                    if let Some(s) = &t.saturation {
                        let _ = writeln!(
                            notes,
                            "- {id}: commanded {} m/min, attained {} m/min (ratio {}), saturated: {}",
                            n(s.commanded),
                            n(s.attained),
                            fixed(s.ratio, 3),
                            flag(s.saturated)
                        );
                    }
                }
                Section::NotExecuted { reason } => {
                    let _ = writeln!(notes, "- {id}: not executed ({reason})");
                }
                Section::Failed { error, .. } => {
                    let _ = writeln!(notes, "- {id}: **failed** ({error})");
                }
            }
        }
        if !notes.is_empty() {
            o.push('\n');
            o.push_str(&notes);
        }
        o.push('\n');
    }

    o.push_str("## Homogeneity\n\n");
    if let Some(h) = body(&mut o, &r.homogeneity) {
        o.push_str("| comparison | velocity | acceleration | jerk | homogeneous |\n|---|---|---|---|---|\n");
        for (id, x) in h {
            let _ = writeln!(
                o,
                "| {id} | {} | {} | {} | {} |",
                fixed(x.velocity_diff, 3),
                fixed(x.accel_diff, 3),
                fixed(x.jerk_diff, 3),
                flag(x.homogeneous)
            );
        }
        o.push('\n');
    }

    o.push_str("## Positioning (µm)\n\n");
    if let Some(p) = body(&mut o, &r.positioning) {
        o.push_str(&positioning_markdown(p));
        o.push('\n');
    }

    o.push_str("## Circularity (µm)\n\n");
    if let Some(c) = body(&mut o, &r.circular) {
        o.push_str("| feature | fitted center | least squares | nominal center |\n|---|---|---|---|\n");
        for (id, x) in c {
            let _ = writeln!(
                o,
                "| {id} | {} | {} | {} |",
                fixed(x.fitted.circularity, 1),
                fixed(x.least_squares.circularity, 1),
                x.nominal.as_ref().map_or("-".to_string(), |v| fixed(v.circularity, 1))
            );
        }
        o.push('\n');
    }

    o.push_str("## Part tolerances\n\n### Flatness (µm)\n\n");
    if let Some(f) = body(&mut o, &r.tolerances.flatness) {
        o.push_str("| face | least squares | minimum zone | extent (mm) |\n|---|---|---|---|\n");
        for (face, p) in &f.faces {
            let _ = writeln!(
                o,
                "| {face} | {} | {} | {} |",
                fixed(p.flatness_ls, 1),
                p.flatness_mz.map_or("-".to_string(), |v| fixed(v, 1)),
                fixed(p.extent, 1)
            );
        }
        if let Some(p) = &f.perpendicularity {
            let _ = writeln!(
                o,
                "\nPerpendicularity {} / {} over {} mm: {} µm",
                p.faces[0],
                p.faces[1],
                fixed(p.ref_length, 1),
                fixed(p.defect, 1)
            );
        }
        o.push('\n');
    }
    o.push_str("### Localization (µm)\n\n");
    if let Some(l) = body(&mut o, &r.tolerances.localization) {
        o.push_str("| holes | min | max | mean | 6σ |\n|---|---|---|---|---|\n");
        let _ = writeln!(
            o,
            "| {} | {} | {} | {} | {} |\n",
            l.deviations.len(),
            fixed(l.min, 1),
            fixed(l.max, 1),
            fixed(l.mean, 1),
            fixed(l.dispersion_6s, 1)
        );
    }
    o.push_str("### Tool deflection (µm)\n\n");
    if let Some(d) = body(&mut o, &r.tolerances.deflection) {
        o.push_str("| profile | min | max |\n|---|---|---|\n");
        for (id, x) in d {
            let _ = writeln!(o, "| {id} | {} | {} |", fixed(x.min, 1), fixed(x.max, 1));
        }
        o.push('\n');
    }

    o.push_str("## Cycle times\n\n");
    if let Some(t) = body(&mut o, &r.timing) {
        o.push_str(&timing_markdown(&t.paired, &t.verdict));
        o.push('\n');
    }

    o.push_str("## Scorecard\n\n");
    if let Some(card) = body(&mut o, &r.scorecard) {
        let _ = writeln!(o, "Sector: {}\n", card.sector.as_str());
        o.push_str("| criterion | value | weight | score |\n|---|---|---|---|\n");
        for c in &card.criteria {
            let _ = writeln!(
                o,
                "| {} | {} | {} | {} |",
                c.criterion.as_str(),
                n(c.value),
                n(c.weight),
                fixed(c.score, 3)
            );
        }
        let _ = writeln!(o, "\nTotal: {}\n", fixed(card.total, 3));
    }

    o.push_str("## Reference comparison\n\n");
    if let Some(d) = body(&mut o, &r.reference) {
        o.push_str("| indicator | value | reference | ratio | standing |\n|---|---|---|---|---|\n");
        for e in &d.entries {
            let standing = match e.standing {
                Standing::Better => "better",
                Standing::Equal => "equal",
                Standing::Worse => "worse",
            };
            let _ = writeln!(
                o,
                "| {} | {} | {} | {} | {standing} |",
                e.key,
                n(e.value),
                n(e.reference),
                e.ratio.map_or("-".to_string(), |x| fixed(x, 3))
            );
        }
        if !d.missing.is_empty() {
            let _ = writeln!(o, "\nNo value for: {}", d.missing.join(", "));
        }
        o.push('\n');
    }
    o
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_renders() {
        let r = CharacterizationReport::empty("bench");
        let md = render_report(&r, ReportFormat::Markdown);
        assert!(md.starts_with("# Characterization report: bench"));
        assert!(md.contains("_Not executed: no input._"));
        let json = render_report(&r, ReportFormat::Json);
        let back: CharacterizationReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        assert_eq!(render_report(&back, ReportFormat::Json), json);
    }

    #[test]
    fn formats_parse() {
        assert_eq!("md".parse::<ReportFormat>().unwrap(), ReportFormat::Markdown);
        assert!("pdf".parse::<ReportFormat>().is_err());
    }

    #[test]
    fn negative_zero_is_plain() {
        assert_eq!(fixed(-0.0001, 2), "0.00");
        assert_eq!(fixed(-1.5, 1), "-1.5");
    }
}
