//! Precision statistics and geometric tolerance evaluation from measured
//! points. Inputs are in mm, tolerances and deviations are reported in µm.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use serde::Deserialize;
use thiserror::Error;

mod circle;
mod localization;
mod plane;
mod positioning;

pub use circle::{
    circularity, circularity_report, fit_circle, minimum_zone_center, Circle, CircleFitMethod,
    CircleReference, CircularityReport, CircularityResult, FittedCircle,
};
pub use localization::{
    localization_from_deviations, localization_stats, pair_hole_positions, read_hole_positions_csv, read_holes_csv, read_profiles_csv,
    tool_deflection_indicator, DeflectionReport, HoleSet, LocalizationStats, ProfilePair,
};
pub use plane::{fit_plane, perpendicularity, perpendicularity_default, FittedPlane};
pub use positioning::{
    load_positioning_csv, positioning_stats, positioning_stats_by_axis, read_positioning_csv,
    Direction, PositioningRecord, PositioningStats,
};

pub(crate) const MM_TO_UM: f64 = 1000.0;

#[derive(Debug, Error)]
pub enum MetrologyError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("length mismatch: {nominal} nominal vs {measured} measured points")]
    LengthMismatch { nominal: usize, measured: usize },
    #[error("station mismatch: {rough} rough vs {finish} finish stations")]
    StationMismatch { rough: usize, finish: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("csv line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn csv_error(e: csv::Error) -> MetrologyError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => MetrologyError::Io(io),
        kind => MetrologyError::Csv {
            line,
            message: format!("{kind:?}"),
        },
    }
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader)
}

#[derive(Deserialize)]
struct CmmRow {
    feature_id: String,
    x_mm: f64,
    y_mm: f64,
    z_mm: f64,
}

/// Reads CMM points (`feature_id,x_mm,y_mm,z_mm`) grouped by feature, in file
/// order within each feature.
pub fn read_cmm_points<R: Read>(reader: R) -> Result<BTreeMap<String, Vec<[f64; 3]>>, MetrologyError> {
    let mut out: BTreeMap<String, Vec<[f64; 3]>> = BTreeMap::new();
    for row in csv_reader(reader).deserialize::<CmmRow>() {
        let row = row.map_err(csv_error)?;
        out.entry(row.feature_id)
            .or_default()
            .push([row.x_mm, row.y_mm, row.z_mm]);
    }
    Ok(out)
}

pub fn load_cmm_points(path: impl AsRef<Path>) -> Result<BTreeMap<String, Vec<[f64; 3]>>, MetrologyError> {
    read_cmm_points(std::fs::File::open(path)?)
}

/// Solves `min (up − lo)` subject to `lo ≤ value_i − coefs_i·x ≤ up` with
/// `|x_k| ≤ bound`. Returns the minimizing `x` and the width.
pub(crate) fn min_width_lp(rows: &[(Vec<f64>, f64)], bound: f64) -> Option<(Vec<f64>, f64)> {
    let dim = rows.first()?.0.len();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let xs: Vec<_> = (0..dim).map(|_| lp.add_var(0.0, (-bound, bound))).collect();
    let up = lp.add_var(1.0, (f64::NEG_INFINITY, f64::INFINITY));
    let lo = lp.add_var(-1.0, (f64::NEG_INFINITY, f64::INFINITY));
    for (coefs, value) in rows {
        // value − c·x ≤ up  ⇔  c·x + up ≥ value
        let mut upper: Vec<_> = xs.iter().zip(coefs).map(|(v, c)| (*v, *c)).collect();
        upper.push((up, 1.0));
        lp.add_constraint(&upper, ComparisonOp::Ge, *value);
        let mut lower: Vec<_> = xs.iter().zip(coefs).map(|(v, c)| (*v, *c)).collect();
        lower.push((lo, 1.0));
        lp.add_constraint(&lower, ComparisonOp::Le, *value);
    }
    let solution = lp.solve().ok()?.into_solution().ok()?;
    Some((xs.iter().map(|v| solution[*v]).collect(), solution.objective()))
}

/// Sample standard deviation; 0 for fewer than two values.
pub(crate) fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_cmm_groups() {
        let text = "feature_id,x_mm,y_mm,z_mm\n# probe 1\nP1,0,0,0\nP2,1,0,0\nP1,1,1,0\n";
        let groups = read_cmm_points(text.as_bytes()).unwrap();
        assert_eq!(groups["P1"], vec![[0.0, 0.0, 0.0], [1.0, 1.0, 0.0]]);
        assert_eq!(groups["P2"].len(), 1);
    }

    #[test]
    fn bad_cmm_row() {
        let text = "feature_id,x_mm,y_mm,z_mm\nP1,zero,0,0\n";
        assert!(matches!(read_cmm_points(text.as_bytes()), Err(MetrologyError::Csv { .. })));
    }

    #[test]
    fn lp_width_of_a_line() {
        // values 0, 1, 2 at coefficients 0, 1, 2: the line x = 1 fits exactly
        let rows = vec![(vec![0.0], 0.0), (vec![1.0], 1.0), (vec![2.0], 2.0)];
        let (x, w) = min_width_lp(&rows, 10.0).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-9 && w.abs() < 1e-9);
    }

    #[test]
    fn std_dev_is_sample() {
        assert!((sample_std(&[1.0, 2.0, 3.0, 4.0]) - 1.2909944487358056).abs() < 1e-15);
        assert_eq!(sample_std(&[5.0]), 0.0);
    }
}
