//! Plane fitting, flatness and perpendicularity.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{min_width_lp, MetrologyError, MM_TO_UM};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FittedPlane {
    /// Unit normal; its largest component is positive.
    pub normal: [f64; 3],
    /// `normal · p` for points on the plane, mm.
    pub offset: f64,
    /// Spread of signed distances to the least-squares plane, µm.
    pub flatness_ls: f64,
    /// Minimum-zone flatness, µm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flatness_mz: Option<f64>,
    /// Span of the points along their main in-plane direction, mm.
    pub extent: f64,
}

fn width(points: &[Vector3<f64>], n: &Vector3<f64>) -> f64 {
    let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        let d = n.dot(p);
        (lo.min(d), hi.max(d))
    });
    hi - lo
}

fn canonical(n: Vector3<f64>) -> Vector3<f64> {
    let n = n.normalize();
    let k = n.iamax();
    if n[k] < 0.0 {
        -n
    } else {
        n
    }
}

/// Orthogonal-distance least-squares plane. With `minimum_zone` the
/// minimum-zone flatness is computed as well.
pub fn fit_plane(points: &[[f64; 3]], minimum_zone: bool) -> Result<FittedPlane, MetrologyError> {
    if points.len() < 3 {
        return Err(MetrologyError::DegenerateGeometry(format!(
            "plane fit needs 3 points, got {}",
            points.len()
        )));
    }
    let pts: Vec<Vector3<f64>> = points.iter().map(|p| Vector3::from(*p)).collect();
    let centroid = pts.iter().sum::<Vector3<f64>>() / pts.len() as f64;
    let centered: Vec<Vector3<f64>> = pts.iter().map(|p| p - centroid).collect();
    let scatter: Matrix3<f64> = centered.iter().map(|p| p * p.transpose()).sum();
    let eig = scatter.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b]));
    let (lmid, lmax) = (eig.eigenvalues[order[1]], eig.eigenvalues[order[2]]);
    if !(lmax > 0.0) || lmid <= 1e-14 * lmax {
        return Err(MetrologyError::DegenerateGeometry("points are collinear".into()));
    }
    let normal = canonical(eig.eigenvectors.column(order[0]).into_owned());
    let main = eig.eigenvectors.column(order[2]).into_owned().normalize();
    let extent = width(&centered, &main);
    let flatness_ls = width(&centered, &normal) * MM_TO_UM;
    let flatness_mz = minimum_zone.then(|| minimum_zone_width(&centered, normal, main).min(flatness_ls));
    Ok(FittedPlane {
        normal: normal.into(),
        offset: normal.dot(&centroid),
        flatness_ls,
        flatness_mz,
        extent,
    })
}

/// Minimum-zone width in µm of centered points, starting from the LS frame.
///
/// In a frame whose third axis is the current normal, the narrowest slab
/// measured along that axis is an LP in the slab tilt. Re-aligning the frame
/// with the LP's tilted normal and repeating converges to the orthogonal
/// minimum zone.
fn minimum_zone_width(points: &[Vector3<f64>], normal: Vector3<f64>, main: Vector3<f64>) -> f64 {
    let mut n = normal;
    let mut e1 = main;
    let mut best = width(points, &n) * MM_TO_UM;
    for _ in 0..20 {
        e1 = (e1 - n * n.dot(&e1)).normalize();
        let e2 = n.cross(&e1);
        let scale_u = points.iter().map(|p| p.dot(&e1).abs()).fold(1e-12, f64::max);
        let scale_v = points.iter().map(|p| p.dot(&e2).abs()).fold(1e-12, f64::max);
        let rows: Vec<(Vec<f64>, f64)> = points
            .iter()
            .map(|p| (vec![p.dot(&e1) / scale_u, p.dot(&e2) / scale_v], p.dot(&n) * MM_TO_UM))
            .collect();
        // a tilt beyond a few widths cannot narrow the slab; a tight bound
        // keeps the simplex well scaled
        let Some((tilt, _)) = min_width_lp(&rows, 10.0 * best.max(1e-3)) else {
            break;
        };
        let (a, b) = (tilt[0] / MM_TO_UM / scale_u, tilt[1] / MM_TO_UM / scale_v);
        let candidate = (n - e1 * a - e2 * b).normalize();
        let w = width(points, &candidate) * MM_TO_UM;
        if !(w < best) {
            break;
        }
        best = w;
        n = candidate;
        if a.hypot(b) < 1e-15 {
            break;
        }
    }
    best
}

/// Squareness defect of two faces over `ref_length` mm, in µm:
/// `L · |sin δ|` with `δ` the departure of the normals from 90°.
pub fn perpendicularity(plane_a: &FittedPlane, plane_b: &FittedPlane, ref_length: f64) -> f64 {
    let na = Vector3::from(plane_a.normal);
    let nb = Vector3::from(plane_b.normal);
    // |sin(θ − 90°)| = |cos θ|
    ref_length * na.dot(&nb).abs().min(1.0) * MM_TO_UM
}

/// Perpendicularity over the extent of the smaller face.
pub fn perpendicularity_default(plane_a: &FittedPlane, plane_b: &FittedPlane) -> f64 {
    perpendicularity(plane_a, plane_b, plane_a.extent.min(plane_b.extent))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(z: impl Fn(f64, f64) -> f64) -> Vec<[f64; 3]> {
        let mut out = Vec::new();
        for i in 0..6 {
            for j in 0..5 {
                let (x, y) = (i as f64 * 10.0, j as f64 * 8.0);
                out.push([x, y, z(x, y)]);
            }
        }
        out
    }

    #[test]
    fn coplanar_is_flat() {
        let p = fit_plane(&grid(|x, y| 0.01 * x - 0.02 * y + 3.0), true).unwrap();
        assert!(p.flatness_ls < 1e-6);
        assert!(p.flatness_mz.unwrap() < 1e-6);
        let n = Vector3::from(p.normal);
        assert!((n.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_levels_ten_micrometres() {
        let pts = grid(|x, y| if ((x / 10.0) as i64 + (y / 8.0) as i64) % 2 == 0 { 0.0 } else { 0.01 });
        let p = fit_plane(&pts, true).unwrap();
        assert!((p.flatness_mz.unwrap() - 10.0).abs() < 1e-6);
        assert!(p.flatness_ls >= p.flatness_mz.unwrap());
    }

    #[test]
    fn collinear_rejected() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 1.0, 1.0], [2.0, 2.0, 2.0]];
        assert!(matches!(fit_plane(&pts, false), Err(MetrologyError::DegenerateGeometry(_))));
    }

    fn plane_with_normal(n: [f64; 3]) -> FittedPlane {
        FittedPlane {
            normal: n,
            offset: 0.0,
            flatness_ls: 0.0,
            flatness_mz: None,
            extent: 50.0,
        }
    }

    #[test]
    fn perpendicularity_cases() {
        let a = plane_with_normal([1.0, 0.0, 0.0]);
        let b = plane_with_normal([0.0, 1.0, 0.0]);
        assert_eq!(perpendicularity(&a, &b, 100.0), 0.0);
        let d: f64 = 0.001;
        let c = plane_with_normal([d.sin(), d.cos(), 0.0]);
        let v = perpendicularity(&a, &c, 100.0);
        assert!((v - 100.0).abs() <= 0.1);
        assert_eq!(v, perpendicularity(&c, &a, 100.0));
        assert_eq!(perpendicularity_default(&a, &c), perpendicularity(&a, &c, 50.0));
    }

    proptest! {
        #[test]
        fn mz_not_above_ls(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<[f64; 3]> = (0..50)
                .map(|_| {
                    let (x, y) = (rng.gen_range(0.0..80.0), rng.gen_range(0.0..60.0));
                    [x, y, 0.001 * x + rng.gen_range(-0.01..0.01)]
                })
                .collect();
            let p = fit_plane(&pts, true).unwrap();
            prop_assert!(p.flatness_mz.unwrap() <= p.flatness_ls);
            prop_assert!((Vector3::from(p.normal).norm() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn flatness_rigid_invariant(seed in 0u64..100, ax in -1.0f64..1.0, ay in -1.0f64..1.0, t in -50.0f64..50.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<[f64; 3]> = (0..30)
                .map(|_| [rng.gen_range(0.0..40.0), rng.gen_range(0.0..40.0), rng.gen_range(-0.005..0.005)])
                .collect();
            let rot = nalgebra::Rotation3::from_euler_angles(ax, ay, 0.3);
            let moved: Vec<[f64; 3]> = pts
                .iter()
                .map(|p| (rot * Vector3::from(*p) + Vector3::new(t, -t, 2.0 * t)).into())
                .collect();
            let a = fit_plane(&pts, true).unwrap();
            let b = fit_plane(&moved, true).unwrap();
            prop_assert!((a.flatness_ls - b.flatness_ls).abs() < 1e-6);
            prop_assert!((a.flatness_mz.unwrap() - b.flatness_mz.unwrap()).abs() < 1e-4);
        }
    }
}
