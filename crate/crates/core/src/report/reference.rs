//! Flat indicator keys and comparison against a reference table.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AxisPositioning, CharacterizationReport};

/// One reference value, keyed like [`indicators`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceIndicator {
    pub key: String,
    pub value: f64,
    /// Where the value was transcribed from, free text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell: Option<String>,
}

/// TOML form: a list of `[[indicator]]` tables.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceTable {
    #[serde(default, rename = "indicator")]
    pub indicators: Vec<ReferenceIndicator>,
}

impl ReferenceTable {
    pub fn parse(text: &str) -> Result<Self, String> {
        let table: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        let mut seen = std::collections::BTreeSet::new();
        for i in &table.indicators {
            if !i.value.is_finite() {
                return Err(format!("indicator `{}` is not finite", i.key));
            }
            if !seen.insert(i.key.as_str()) {
                return Err(format!("indicator `{}` listed twice", i.key));
            }
        }
        Ok(table)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    HigherIsBetter,
    /// Compared on absolute values.
    LowerIsBetter,
}

/// Dynamic capabilities are better when higher; deviations, times and
/// defects when smaller in magnitude.
pub fn polarity(key: &str) -> Polarity {
    match key.rsplit('.').next() {
        Some("v_max" | "a_max" | "j_max") => Polarity::HigherIsBetter,
        _ => Polarity::LowerIsBetter,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Standing {
    Better,
    Equal,
    Worse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffEntry {
    pub key: String,
    pub value: f64,
    pub reference: f64,
    /// `value / reference`, absent when the reference is zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    pub polarity: Polarity,
    pub standing: Standing,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiffReport {
    pub entries: Vec<DiffEntry>,
    /// Reference keys the report has no value for.
    pub missing: Vec<String>,
}

const EQUAL_RELATIVE: f64 = 1e-6;

fn standing(value: f64, reference: f64, polarity: Polarity) -> Standing {
    let (v, r) = match polarity {
        Polarity::HigherIsBetter => (value, reference),
        Polarity::LowerIsBetter => (-value.abs(), -reference.abs()),
    };
    if (v - r).abs() <= EQUAL_RELATIVE * v.abs().max(r.abs()) {
        Standing::Equal
    } else if v > r {
        Standing::Better
    } else {
        Standing::Worse
    }
}

/// Every scalar indicator in the report under a dotted key.
pub fn indicators(report: &CharacterizationReport) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    let mut put = |key: String, value: f64| {
        out.insert(key, value);
    };
    if let Some(k) = report.kinematics.value() {
        for (id, section) in k {
            let Some(t) = section.value() else { continue };
            for (axis, ind) in &t.attained.axes {
                put(format!("kinematics.{id}.{axis}.v_max"), ind.v_max);
                put(format!("kinematics.{id}.{axis}.a_max"), ind.a_max);
                put(format!("kinematics.{id}.{axis}.j_max"), ind.j_max);
            }
            for (axis, ind) in t.commanded.iter().flat_map(|c| &c.axes) {
                put(format!("kinematics.{id}.commanded.{axis}.v_max"), ind.v_max);
                put(format!("kinematics.{id}.commanded.{axis}.a_max"), ind.a_max);
                put(format!("kinematics.{id}.commanded.{axis}.j_max"), ind.j_max);
            }
        }
    }
    if let Some(h) = report.homogeneity.value() {
        for (id, r) in h {
            put(format!("homogeneity.{id}.velocity"), r.velocity_diff);
            put(format!("homogeneity.{id}.accel"), r.accel_diff);
            put(format!("homogeneity.{id}.jerk"), r.jerk_diff);
        }
    }
    if let Some(p) = report.positioning.value() {
        for (axis, entry) in p {
            let AxisPositioning::Computed(s) = entry else { continue };
            for (field, v) in [
                ("mean_dev_pos", s.mean_dev_pos),
                ("mean_dev_neg", s.mean_dev_neg),
                ("s_pos", s.s_pos),
                ("s_neg", s.s_neg),
                ("repeat_uni_pos", s.repeat_uni_pos),
                ("repeat_uni_neg", s.repeat_uni_neg),
                ("reversibility_b", s.reversibility_b),
                ("mean_dev_bi", s.mean_dev_bi),
                ("repeat_bi", s.repeat_bi),
            ] {
                put(format!("positioning.{axis}.{field}"), v);
            }
        }
    }
    if let Some(c) = report.circular.value() {
        for (id, r) in c {
            put(format!("circular.{id}.fitted.circularity"), r.fitted.circularity);
            put(format!("circular.{id}.least_squares.circularity"), r.least_squares.circularity);
            if let Some(n) = &r.nominal {
                put(format!("circular.{id}.nominal.circularity"), n.circularity);
                put(format!("circular.{id}.nominal.radial_max"), n.radial_max);
                put(format!("circular.{id}.nominal.radial_min"), n.radial_min);
            }
        }
    }
    if let Some(f) = report.tolerances.flatness.value() {
        for (face, p) in &f.faces {
            put(format!("tolerances.flatness.{face}.ls"), p.flatness_ls);
            if let Some(mz) = p.flatness_mz {
                put(format!("tolerances.flatness.{face}.mz"), mz);
            }
        }
        if let Some(p) = &f.perpendicularity {
            put("tolerances.perpendicularity".to_string(), p.defect);
        }
    }
    if let Some(l) = report.tolerances.localization.value() {
        put("tolerances.localization.min".to_string(), l.min);
        put("tolerances.localization.max".to_string(), l.max);
        put("tolerances.localization.mean".to_string(), l.mean);
        put("tolerances.localization.dispersion_6s".to_string(), l.dispersion_6s);
    }
    if let Some(d) = report.tolerances.deflection.value() {
        for (id, r) in d {
            put(format!("tolerances.deflection.{id}.min"), r.min);
            put(format!("tolerances.deflection.{id}.max"), r.max);
        }
    }
    if let Some(t) = report.timing.value() {
        for c in &t.paired.comparisons {
            put(format!("timing.{}.air", c.entity), c.t_air);
            put(format!("timing.{}.loaded", c.entity), c.t_loaded);
            put(format!("timing.{}.relative", c.entity), c.relative);
        }
    }
    out
}

/// Compares the report's indicators with a reference table, in table order.
pub fn compare_to_reference(report: &CharacterizationReport, table: &ReferenceTable) -> DiffReport {
    let values = indicators(report);
    let mut diff = DiffReport::default();
    for r in &table.indicators {
        let Some(&value) = values.get(&r.key) else {
            diff.missing.push(r.key.clone());
            continue;
        };
        let pol = polarity(&r.key);
        diff.entries.push(DiffEntry {
            key: r.key.clone(),
            value,
            reference: r.value,
            ratio: (r.value != 0.0).then(|| value / r.value),
            polarity: pol,
            standing: standing(value, r.value, pol),
            cell: r.cell.clone(),
        });
    }
    diff
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::{Section, Tolerances};
    use crate::metrology::localization_from_deviations;

    fn report_with_localization(devs: Vec<f64>) -> CharacterizationReport {
        let mut r = CharacterizationReport::empty("m");
        r.tolerances = Tolerances {
            localization: Section::Executed {
                inputs: BTreeMap::new(),
                value: localization_from_deviations(devs).unwrap(),
            },
            ..r.tolerances
        };
        r
    }

    #[test]
    fn polarity_examples() {
        assert_eq!(standing(20.0, 35.0, polarity("circular.C1a.fitted.circularity")), Standing::Better);
        assert_eq!(standing(30.0, 25.0, polarity("kinematics.A1-O.X.v_max")), Standing::Better);
        assert_eq!(standing(-3.0, 2.0, polarity("positioning.X.mean_dev_pos")), Standing::Worse);
        assert_eq!(standing(2.0, 2.0, Polarity::LowerIsBetter), Standing::Equal);
    }

    #[test]
    fn self_comparison_is_equal() {
        let r = report_with_localization(vec![48.0, 70.0, 64.0]);
        let table = ReferenceTable {
            indicators: indicators(&r)
                .into_iter()
                .map(|(key, value)| ReferenceIndicator { key, value, cell: None })
                .collect(),
        };
        let diff = compare_to_reference(&r, &table);
        assert_eq!(diff.entries.len(), 4);
        assert!(diff.missing.is_empty());
        for e in diff.entries {
            assert_eq!(e.ratio, Some(1.0));
            assert_eq!(e.standing, Standing::Equal);
        }
    }

    #[test]
    fn missing_keys_listed() {
        let r = CharacterizationReport::empty("m");
        let table = ReferenceTable::parse("[[indicator]]\nkey = \"positioning.X.repeat_bi\"\nvalue = 1.0\n").unwrap();
        assert_eq!(compare_to_reference(&r, &table).missing, vec!["positioning.X.repeat_bi"]);
    }

    #[test]
    fn parse_rejects_duplicates() {
        let text = "[[indicator]]\nkey = \"a\"\nvalue = 1.0\n[[indicator]]\nkey = \"a\"\nvalue = 2.0\n";
        assert!(ReferenceTable::parse(text).is_err());
    }
}
