//! Hole-pattern localization and tool deflection along a contour.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::{csv_error, csv_reader, mean, sample_std, MetrologyError, MM_TO_UM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationStats {
    /// Distance between nominal and measured hole axes, µm.
    pub deviations: Vec<f64>,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Sample standard deviation, µm.
    pub std_dev: f64,
    pub dispersion_6s: f64,
}

fn distance_um(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1]) * MM_TO_UM
}

/// Localization statistics for holes paired by index.
pub fn localization_stats(
    nominal: &[[f64; 2]],
    measured: &[[f64; 2]],
) -> Result<LocalizationStats, MetrologyError> {
    if nominal.len() != measured.len() {
        return Err(MetrologyError::LengthMismatch {
            nominal: nominal.len(),
            measured: measured.len(),
        });
    }
    if nominal.len() < 2 {
        return Err(MetrologyError::InsufficientData(format!(
            "localization needs at least 2 holes, got {}",
            nominal.len()
        )));
    }
    let deviations: Vec<f64> = nominal
        .iter()
        .zip(measured)
        .map(|(n, m)| distance_um(*n, *m))
        .collect();
    Ok(summarize(deviations))
}

fn summarize(deviations: Vec<f64>) -> LocalizationStats {
    let min = deviations.iter().copied().fold(f64::INFINITY, f64::min);
    let max = deviations.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let std_dev = sample_std(&deviations);
    LocalizationStats {
        min,
        max,
        // rounding can push the mean of equal values just outside [min, max]
        mean: mean(&deviations).clamp(min, max),
        std_dev,
        dispersion_6s: 6.0 * std_dev,
        deviations,
    }
}

/// Builds the statistics directly from deviations in µm.
pub fn localization_from_deviations(deviations: Vec<f64>) -> Result<LocalizationStats, MetrologyError> {
    if deviations.len() < 2 {
        return Err(MetrologyError::InsufficientData(format!(
            "localization needs at least 2 holes, got {}",
            deviations.len()
        )));
    }
    Ok(summarize(deviations))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeflectionReport {
    /// Per-station `distance − nominal_offset`, µm.
    pub deviations: Vec<f64>,
    pub min: f64,
    pub max: f64,
}

/// Compares the rough and finish contours station by station against the
/// programmed stock offset (mm).
pub fn tool_deflection_indicator(
    rough_profile: &[[f64; 2]],
    finish_profile: &[[f64; 2]],
    nominal_offset: f64,
) -> Result<DeflectionReport, MetrologyError> {
    if rough_profile.len() != finish_profile.len() || rough_profile.is_empty() {
        return Err(MetrologyError::StationMismatch {
            rough: rough_profile.len(),
            finish: finish_profile.len(),
        });
    }
    let deviations: Vec<f64> = rough_profile
        .iter()
        .zip(finish_profile)
        .map(|(r, f)| distance_um(*r, *f) - nominal_offset * MM_TO_UM)
        .collect();
    Ok(DeflectionReport {
        min: deviations.iter().copied().fold(f64::INFINITY, f64::min),
        max: deviations.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        deviations,
    })
}

/// Nominal and measured hole axis positions, mm.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HoleSet {
    pub ids: Vec<String>,
    pub nominal: Vec<[f64; 2]>,
    pub measured: Vec<[f64; 2]>,
}

#[derive(Deserialize)]
struct HoleRow {
    hole_id: String,
    nominal_x_mm: f64,
    nominal_y_mm: f64,
    measured_x_mm: f64,
    measured_y_mm: f64,
}

/// Reads `hole_id,nominal_x_mm,nominal_y_mm,measured_x_mm,measured_y_mm`.
pub fn read_holes_csv<R: Read>(reader: R) -> Result<HoleSet, MetrologyError> {
    let mut out = HoleSet::default();
    for row in csv_reader(reader).deserialize::<HoleRow>() {
        let row = row.map_err(csv_error)?;
        out.ids.push(row.hole_id);
        out.nominal.push([row.nominal_x_mm, row.nominal_y_mm]);
        out.measured.push([row.measured_x_mm, row.measured_y_mm]);
    }
    Ok(out)
}

#[derive(Deserialize)]
struct PositionRow {
    hole_id: String,
    x_mm: f64,
    y_mm: f64,
}

/// Reads `hole_id,x_mm,y_mm` rows in file order.
pub fn read_hole_positions_csv<R: Read>(reader: R) -> Result<(Vec<String>, Vec<[f64; 2]>), MetrologyError> {
    let mut ids = Vec::new();
    let mut points = Vec::new();
    for row in csv_reader(reader).deserialize::<PositionRow>() {
        let row = row.map_err(csv_error)?;
        ids.push(row.hole_id);
        points.push([row.x_mm, row.y_mm]);
    }
    Ok((ids, points))
}

/// Pairs separate nominal and measured position files by row. Hole ids must
/// agree row by row.
pub fn pair_hole_positions(
    nominal: (Vec<String>, Vec<[f64; 2]>),
    measured: (Vec<String>, Vec<[f64; 2]>),
) -> Result<HoleSet, MetrologyError> {
    if nominal.0.len() != measured.0.len() {
        return Err(MetrologyError::LengthMismatch {
            nominal: nominal.0.len(),
            measured: measured.0.len(),
        });
    }
    if let Some((a, b)) = nominal.0.iter().zip(&measured.0).find(|(a, b)| a != b) {
        return Err(MetrologyError::InvalidInput(format!(
            "hole order differs: nominal `{a}` vs measured `{b}`"
        )));
    }
    Ok(HoleSet {
        ids: nominal.0,
        nominal: nominal.1,
        measured: measured.1,
    })
}

/// Rough and finish contour stations of one profile, mm.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProfilePair {
    pub rough: Vec<[f64; 2]>,
    pub finish: Vec<[f64; 2]>,
    pub nominal_offset: f64,
}

#[derive(Deserialize)]
struct ProfileRow {
    profile_id: String,
    rough_x_mm: f64,
    rough_y_mm: f64,
    finish_x_mm: f64,
    finish_y_mm: f64,
    nominal_offset_mm: f64,
}

/// Reads `profile_id,rough_x_mm,rough_y_mm,finish_x_mm,finish_y_mm,nominal_offset_mm`
/// grouped by profile. The offset must be constant within a profile.
pub fn read_profiles_csv<R: Read>(reader: R) -> Result<BTreeMap<String, ProfilePair>, MetrologyError> {
    let mut out: BTreeMap<String, ProfilePair> = BTreeMap::new();
    for row in csv_reader(reader).deserialize::<ProfileRow>() {
        let row = row.map_err(csv_error)?;
        let entry = out.entry(row.profile_id.clone()).or_insert_with(|| ProfilePair {
            nominal_offset: row.nominal_offset_mm,
            ..Default::default()
        });
        if entry.nominal_offset != row.nominal_offset_mm {
            return Err(MetrologyError::InvalidInput(format!(
                "profile `{}` mixes nominal offsets",
                row.profile_id
            )));
        }
        entry.rough.push([row.rough_x_mm, row.rough_y_mm]);
        entry.finish.push([row.finish_x_mm, row.finish_y_mm]);
    }
    Ok(out)
}
