//! Entity cycle times: air-cut vs loaded comparison, gains and the
//! cut-influence verdict.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Entity name that carries the recorded whole-part cycle time.
pub const GLOBAL_ENTITY: &str = "Cycle global";

#[derive(Debug, Error)]
pub enum TimingError {
    #[error("entity `{entity}` appears more than once for {context}")]
    DuplicateEntity { entity: String, context: TimingContext },
    #[error("entity `{entity}`: duration must be > 0, got {value}")]
    InvalidDuration { entity: String, value: f64 },
    #[error("no timing records")]
    EmptyInput,
    #[error("csv line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimingContext {
    AirCut,
    Loaded,
}

impl TimingContext {
    pub fn as_str(self) -> &'static str {
        match self {
            TimingContext::AirCut => "air_cut",
            TimingContext::Loaded => "loaded",
        }
    }
}

impl fmt::Display for TimingContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TimingContext {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "air_cut" | "air" => Ok(TimingContext::AirCut),
            "loaded" => Ok(TimingContext::Loaded),
            other => Err(format!("unknown timing context `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub entity: String,
    pub context: TimingContext,
    /// s
    pub duration: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl TimingRecord {
    pub fn new(entity: impl Into<String>, context: TimingContext, duration: f64) -> Self {
        Self {
            entity: entity.into(),
            context,
            duration,
            label: None,
        }
    }

    fn check(&self) -> Result<(), TimingError> {
        if self.duration.is_finite() && self.duration > 0.0 {
            Ok(())
        } else {
            Err(TimingError::InvalidDuration {
                entity: self.entity.clone(),
                value: self.duration,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingComparison {
    pub entity: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub t_air: f64,
    pub t_loaded: f64,
    /// `t_loaded − t_air`, s.
    pub delta: f64,
    /// `delta / t_air`.
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PairedTimings {
    /// Sorted by entity name.
    pub comparisons: Vec<TimingComparison>,
    /// Records whose entity is missing from the other context, sorted by
    /// entity then context.
    pub unmatched: Vec<TimingRecord>,
}

impl PairedTimings {
    pub fn global(&self) -> Option<&TimingComparison> {
        self.comparisons.iter().find(|c| c.entity == GLOBAL_ENTITY)
    }

    /// Markdown table with one row per entity.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from(
            "| Entity / phase | Label | Air cut (s) | Loaded (s) | Delta (s) | Relative (%) |\n\
             |---|---|---:|---:|---:|---:|\n",
        );
        for c in &self.comparisons {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {:+.2} | {:+.2} |",
                c.entity,
                c.label.as_deref().unwrap_or(""),
                c.t_air,
                c.t_loaded,
                c.delta,
                c.relative * 100.0
            );
        }
        for r in &self.unmatched {
            let (air, loaded) = match r.context {
                TimingContext::AirCut => (r.duration.to_string(), String::new()),
                TimingContext::Loaded => (String::new(), r.duration.to_string()),
            };
            let _ = writeln!(
                out,
                "| {} | {} | {air} | {loaded} |  |  |",
                r.entity,
                r.label.as_deref().unwrap_or("")
            );
        }
        out
    }
}

/// Pairs air-cut and loaded durations by exact entity name.
pub fn pair_and_compare(records: &[TimingRecord]) -> Result<PairedTimings, TimingError> {
    let mut by_entity: BTreeMap<&str, [Option<&TimingRecord>; 2]> = BTreeMap::new();
    for r in records {
        r.check()?;
        let slot = &mut by_entity.entry(r.entity.as_str()).or_default()[r.context as usize];
        if slot.is_some() {
            return Err(TimingError::DuplicateEntity {
                entity: r.entity.clone(),
                context: r.context,
            });
        }
        *slot = Some(r);
    }
    let mut out = PairedTimings::default();
    for (entity, [air, loaded]) in by_entity {
        match (air, loaded) {
            (Some(a), Some(l)) => {
                let delta = l.duration - a.duration;
                out.comparisons.push(TimingComparison {
                    entity: entity.to_string(),
                    label: a.label.clone().or_else(|| l.label.clone()),
                    t_air: a.duration,
                    t_loaded: l.duration,
                    delta,
                    relative: delta / a.duration,
                });
            }
            (a, l) => out.unmatched.extend(a.into_iter().chain(l).cloned()),
        }
    }
    Ok(out)
}

/// Time saved by the faster of two durations, relative to the slower one.
///
/// Positive when `t_alt` is slower than `t_ref`; swapping the arguments
/// flips the sign.
pub fn gain(t_ref: f64, t_alt: f64) -> f64 {
    (t_alt - t_ref) / t_ref.max(t_alt)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerdictThresholds {
    /// Largest |relative| difference tolerated for a single entity.
    pub entity: f64,
    /// Largest |relative| difference tolerated for the global cycle.
    pub global: f64,
}

impl Default for VerdictThresholds {
    fn default() -> Self {
        Self {
            entity: 0.07,
            global: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    NoInfluence,
    Influence { offending: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictReport {
    pub verdict: Verdict,
    pub thresholds: VerdictThresholds,
    /// Largest |relative| over the non-global entities.
    pub max_entity_relative: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global_relative: Option<f64>,
}

/// Decides whether cutting changed the entity times.
pub fn cut_influence_verdict(
    comparisons: &[TimingComparison],
    thresholds: VerdictThresholds,
) -> Result<VerdictReport, TimingError> {
    if comparisons.is_empty() {
        return Err(TimingError::EmptyInput);
    }
    let mut offending = Vec::new();
    let mut max_entity_relative = 0.0f64;
    let mut global_relative = None;
    for c in comparisons {
        let rel = c.relative.abs();
        let limit = if c.entity == GLOBAL_ENTITY {
            global_relative = Some(c.relative);
            thresholds.global
        } else {
            max_entity_relative = max_entity_relative.max(rel);
            thresholds.entity
        };
        if rel > limit {
            offending.push(c.entity.clone());
        }
    }
    let verdict = if offending.is_empty() {
        Verdict::NoInfluence
    } else {
        Verdict::Influence { offending }
    };
    Ok(VerdictReport {
        verdict,
        thresholds,
        max_entity_relative,
        global_relative,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSummary {
    pub context: TimingContext,
    pub entities: usize,
    /// Sum of all entity durations except the global one, s.
    pub entity_sum: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recorded_global: Option<f64>,
    /// `entity_sum / recorded_global`; below 1 the remainder is non-cutting
    /// time (rapid moves, tool changes not recorded as entities).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<f64>,
}

/// Sums the entity durations of one context. Group sub-totals are summed as
/// recorded like any other entity.
pub fn aggregate_cycle(records: &[TimingRecord], context: TimingContext) -> Result<CycleSummary, TimingError> {
    let mut durations = Vec::new();
    let mut recorded_global = None;
    for r in records.iter().filter(|r| r.context == context) {
        r.check()?;
        if r.entity == GLOBAL_ENTITY {
            recorded_global = Some(r.duration);
        } else {
            durations.push(r.duration);
        }
    }
    if durations.is_empty() && recorded_global.is_none() {
        return Err(TimingError::EmptyInput);
    }
    // fixed summation order so the result does not depend on record order
    durations.sort_by(f64::total_cmp);
    let entity_sum: f64 = durations.iter().sum();
    Ok(CycleSummary {
        context,
        entities: durations.len(),
        entity_sum,
        recorded_global,
        coverage: recorded_global.map(|g| entity_sum / g),
    })
}

#[derive(Deserialize)]
struct Row {
    entity: String,
    context: String,
    duration_s: f64,
    #[serde(default)]
    label: Option<String>,
}

/// Reads `entity,context,duration_s[,label]`; other columns are ignored.
pub fn read_timing_csv<R: Read>(reader: R) -> Result<Vec<TimingRecord>, TimingError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| TimingError::Csv {
            line: e.position().map_or(i as u64 + 2, |p| p.line()),
            message: e.to_string(),
        })?;
        let context = row.context.parse().map_err(|message| TimingError::Csv {
            line: i as u64 + 2,
            message,
        })?;
        let record = TimingRecord {
            entity: row.entity,
            context,
            duration: row.duration_s,
            label: row.label.filter(|l| !l.is_empty()),
        };
        record.check()?;
        out.push(record);
    }
    Ok(out)
}

pub fn load_timing_csv(path: impl AsRef<Path>) -> Result<Vec<TimingRecord>, TimingError> {
    read_timing_csv(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use TimingContext::{AirCut, Loaded};

    fn pair(entity: &str, air: f64, loaded: f64) -> Vec<TimingRecord> {
        vec![TimingRecord::new(entity, AirCut, air), TimingRecord::new(entity, Loaded, loaded)]
    }

    #[test]
    fn global_cycle_delta() {
        let p = pair_and_compare(&pair(GLOBAL_ENTITY, 295.6, 295.08)).unwrap();
        let c = &p.comparisons[0];
        assert!((c.delta + 0.52).abs() < 1e-9);
        assert!((c.relative * 100.0 + 0.18).abs() < 0.005);
    }

    #[test]
    fn tapping_delta() {
        let p = pair_and_compare(&pair("Taraudage 3", 4.85, 5.15)).unwrap();
        let c = &p.comparisons[0];
        assert!((c.delta - 0.30).abs() < 1e-9);
        assert!((c.relative * 100.0 - 6.2).abs() < 0.05);
    }

    #[test]
    fn identical_durations() {
        let p = pair_and_compare(&pair("E", 3.0, 3.0)).unwrap();
        assert_eq!(p.comparisons[0].delta, 0.0);
    }

    #[test]
    fn duplicates_rejected() {
        let mut rs = pair("E", 1.0, 1.0);
        rs.push(TimingRecord::new("E", Loaded, 2.0));
        assert!(matches!(pair_and_compare(&rs), Err(TimingError::DuplicateEntity { .. })));
    }

    #[test]
    fn unmatched_are_listed() {
        let mut rs = pair("E", 1.0, 1.0);
        rs.push(TimingRecord::new("Only air", AirCut, 2.0));
        let p = pair_and_compare(&rs).unwrap();
        assert_eq!(p.comparisons.len(), 1);
        assert_eq!(p.unmatched[0].entity, "Only air");
        assert!(p.to_markdown().contains("| Only air |"));
    }

    #[test]
    fn gain_values() {
        assert!((gain(2.58, 3.46) * 100.0 - 25.4).abs() < 0.05);
        assert_eq!(gain(3.0, 3.0), 0.0);
        assert_eq!(gain(1.5, 3.0), 0.5);
    }

    #[test]
    fn verdicts() {
        let mut rs = pair(GLOBAL_ENTITY, 100.0, 100.1);
        rs.extend(pair("E", 2.0, 2.4));
        let p = pair_and_compare(&rs).unwrap();
        let v = cut_influence_verdict(&p.comparisons, VerdictThresholds::default()).unwrap();
        assert_eq!(v.verdict, Verdict::Influence { offending: vec!["E".into()] });
        let zero = VerdictThresholds { entity: 0.0, global: 0.0 };
        let v = cut_influence_verdict(&p.comparisons, zero).unwrap();
        assert!(matches!(v.verdict, Verdict::Influence { ref offending } if offending.len() == 2));
        assert!(cut_influence_verdict(&[], zero).is_err());
    }

    #[test]
    fn single_entity_full_coverage() {
        let rs = [TimingRecord::new("E", AirCut, 10.0), TimingRecord::new(GLOBAL_ENTITY, AirCut, 10.0)];
        let s = aggregate_cycle(&rs, AirCut).unwrap();
        assert_eq!(s.coverage, Some(1.0));
        assert!(aggregate_cycle(&rs, Loaded).is_err());
    }

    #[test]
    fn csv_round() {
        let text = "entity,context,duration_s,label,cell\nTaraudage 3,air_cut,4.85,60 m/min,r3c3\nTaraudage 3,loaded,5.15,60 m/min,r3c3\nE,loaded,1,,x\n";
        let rs = read_timing_csv(text.as_bytes()).unwrap();
        assert_eq!(rs.len(), 3);
        assert_eq!(rs[0].label.as_deref(), Some("60 m/min"));
        assert_eq!(rs[2].label, None);
        assert!(read_timing_csv("entity,context,duration_s\nE,wet,1\n".as_bytes()).is_err());
        assert!(read_timing_csv("entity,context,duration_s\nE,loaded,0\n".as_bytes()).is_err());
    }

    fn records() -> impl Strategy<Value = Vec<TimingRecord>> {
        prop::collection::btree_map(0u8..12, (0.1f64..100.0, 0.1f64..100.0, 0u8..3), 1..10).prop_map(|m| {
            let mut out = Vec::new();
            for (k, (a, l, which)) in m {
                let name = format!("entity {k}");
                if which != 1 {
                    out.push(TimingRecord::new(name.clone(), AirCut, a));
                }
                if which != 2 {
                    out.push(TimingRecord::new(name, Loaded, l));
                }
            }
            out
        })
    }

    proptest! {
        #[test]
        fn pairing_is_order_invariant_and_total(rs in records(), seed in any::<u64>()) {
            let mut shuffled = rs.clone();
            let n = shuffled.len();
            for i in 0..n {
                let j = (seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64) % n as u64) as usize;
                shuffled.swap(i, j);
            }
            let a = pair_and_compare(&rs).unwrap();
            let b = pair_and_compare(&shuffled).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(2 * a.comparisons.len() + a.unmatched.len(), rs.len());
            let sa = aggregate_cycle(&rs, AirCut);
            let sb = aggregate_cycle(&shuffled, AirCut);
            prop_assert_eq!(sa.ok(), sb.ok());
        }

        #[test]
        fn gain_antisymmetric(a in 0.01f64..1000.0, b in 0.01f64..1000.0) {
            prop_assert_eq!(gain(a, b), -gain(b, a));
        }

        #[test]
        fn verdict_monotone(rs in records(), e in 0.0f64..0.5, g in 0.0f64..0.5, de in 0.0f64..0.5, dg in 0.0f64..0.5) {
            let p = pair_and_compare(&rs).unwrap();
            prop_assume!(!p.comparisons.is_empty());
            let tight = cut_influence_verdict(&p.comparisons, VerdictThresholds { entity: e, global: g }).unwrap();
            let loose = cut_influence_verdict(&p.comparisons, VerdictThresholds { entity: e + de, global: g + dg }).unwrap();
            if tight.verdict == Verdict::NoInfluence {
                prop_assert_eq!(loose.verdict, Verdict::NoInfluence);
            }
        }
    }
}
