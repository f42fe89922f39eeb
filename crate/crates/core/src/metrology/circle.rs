//! Circle fitting and circularity.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{min_width_lp, MetrologyError, MM_TO_UM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CircleFitMethod {
    Algebraic,
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    /// mm
    pub center: [f64; 2],
    /// mm
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FittedCircle {
    pub center: [f64; 2],
    pub radius: f64,
    /// RMS of the orthogonal residuals, µm.
    pub residual_rms: f64,
    pub method: CircleFitMethod,
}

impl FittedCircle {
    pub fn circle(&self) -> Circle {
        Circle {
            center: self.center,
            radius: self.radius,
        }
    }
}

fn dist(p: [f64; 2], c: [f64; 2]) -> f64 {
    (p[0] - c[0]).hypot(p[1] - c[1])
}

fn rms_um(points: &[[f64; 2]], c: [f64; 2], r: f64) -> f64 {
    let ss: f64 = points.iter().map(|p| (dist(*p, c) - r).powi(2)).sum();
    (ss / points.len() as f64).sqrt() * MM_TO_UM
}

fn check_points(points: &[[f64; 2]]) -> Result<[f64; 2], MetrologyError> {
    if points.len() < 3 {
        return Err(MetrologyError::DegenerateGeometry(format!(
            "circle fit needs 3 points, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let centroid = [
        points.iter().map(|p| p[0]).sum::<f64>() / n,
        points.iter().map(|p| p[1]).sum::<f64>() / n,
    ];
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let (x, y) = (p[0] - centroid[0], p[1] - centroid[1]);
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
    }
    // smallest eigenvalue of the scatter matrix relative to the largest
    let tr = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    let disc = ((tr * tr / 4.0) - det).max(0.0).sqrt();
    let (lmax, lmin) = (tr / 2.0 + disc, tr / 2.0 - disc);
    if !(lmax > 0.0) || lmin <= 1e-14 * lmax {
        return Err(MetrologyError::DegenerateGeometry("points are collinear".into()));
    }
    Ok(centroid)
}

/// Kåsa fit: linear least squares on `x² + y² + D x + E y + F = 0`,
/// solved in centroid coordinates.
fn algebraic(points: &[[f64; 2]], centroid: [f64; 2]) -> Result<Circle, MetrologyError> {
    let n = points.len();
    let mut a = DMatrix::zeros(n, 3);
    let mut b = DVector::zeros(n);
    for (i, p) in points.iter().enumerate() {
        let (x, y) = (p[0] - centroid[0], p[1] - centroid[1]);
        a[(i, 0)] = x;
        a[(i, 1)] = y;
        a[(i, 2)] = 1.0;
        b[i] = -(x * x + y * y);
    }
    let sol = a
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| MetrologyError::DegenerateGeometry(e.to_string()))?;
    let (cx, cy) = (-sol[0] / 2.0, -sol[1] / 2.0);
    let r2 = cx * cx + cy * cy - sol[2];
    if !(r2 > 0.0) {
        return Err(MetrologyError::DegenerateGeometry("no real circle".into()));
    }
    Ok(Circle {
        center: [cx + centroid[0], cy + centroid[1]],
        radius: r2.sqrt(),
    })
}

fn normal_equations(points: &[[f64; 2]], c: [f64; 2], r: f64) -> (Matrix3<f64>, Vector3<f64>) {
    let mut jtj = Matrix3::<f64>::zeros();
    let mut jtr = Vector3::<f64>::zeros();
    for p in points {
        let d = dist(*p, c);
        if d == 0.0 {
            continue;
        }
        let jac = Vector3::new(-(p[0] - c[0]) / d, -(p[1] - c[1]) / d, -1.0);
        jtj += jac * jac.transpose();
        jtr += jac * (d - r);
    }
    (jtj, jtr)
}

/// Levenberg-Marquardt on the orthogonal residuals `|p − c| − r`. Steps are
/// only accepted when they lower the cost, so the result never fits worse
/// than the seed.
fn geometric(points: &[[f64; 2]], seed: Circle) -> Circle {
    let cost = |c: [f64; 2], r: f64| -> f64 { points.iter().map(|p| (dist(*p, c) - r).powi(2)).sum() };
    let (mut c, mut r) = (seed.center, seed.radius);
    let seed_cost = cost(c, r);
    let mut current = seed_cost;
    let mut lambda = 1e-3;
    for _ in 0..200 {
        let (jtj, jtr) = normal_equations(points, c, r);
        let mut improved = false;
        while lambda < 1e12 {
            let mut damped = jtj;
            for k in 0..3 {
                damped[(k, k)] *= 1.0 + lambda;
            }
            let Some(step) = damped.lu().solve(&(-jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let (nc, nr) = ([c[0] + step[0], c[1] + step[1]], r + step[2]);
            let next = cost(nc, nr);
            // ties are accepted so that rounding noise in the cost does not
            // stop the iteration before the parameters settle
            if next <= current {
                (c, r, current) = (nc, nr, next);
                lambda = (lambda / 10.0).max(1e-12);
                improved = step.norm() > 1e-15 * seed.radius;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    // Near the minimum the cost is flat to rounding, so finish with plain
    // Gauss-Newton steps driven by the gradient alone.
    for _ in 0..3 {
        let (jtj, jtr) = normal_equations(points, c, r);
        let Some(step) = jtj.lu().solve(&(-jtr)) else {
            break;
        };
        (c, r) = ([c[0] + step[0], c[1] + step[1]], r + step[2]);
    }
    if cost(c, r) > seed_cost {
        return seed;
    }
    Circle { center: c, radius: r }
}

/// Least-squares circle through `points` (mm).
pub fn fit_circle(points: &[[f64; 2]], method: CircleFitMethod) -> Result<FittedCircle, MetrologyError> {
    let centroid = check_points(points)?;
    let seed = algebraic(points, centroid)?;
    let circle = match method {
        CircleFitMethod::Algebraic => seed,
        CircleFitMethod::Geometric => {
            let local: Vec<[f64; 2]> = points
                .iter()
                .map(|p| [p[0] - centroid[0], p[1] - centroid[1]])
                .collect();
            let seed_local = Circle {
                center: [seed.center[0] - centroid[0], seed.center[1] - centroid[1]],
                radius: seed.radius,
            };
            let fit = geometric(&local, seed_local);
            if fit == seed_local {
                seed
            } else {
                Circle {
                    center: [fit.center[0] + centroid[0], fit.center[1] + centroid[1]],
                    radius: fit.radius,
                }
            }
        }
    };
    Ok(FittedCircle {
        center: circle.center,
        radius: circle.radius,
        residual_rms: rms_um(points, circle.center, circle.radius),
        method,
    })
}

/// Radial spread `max |p − c| − min |p − c|` in mm.
fn spread(points: &[[f64; 2]], c: [f64; 2]) -> f64 {
    let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        let d = dist(*p, c);
        (lo.min(d), hi.max(d))
    });
    hi - lo
}

/// Minimum-zone center by sequential linear programming from `seed`.
///
/// Each step linearizes the radii around the current center and solves the
/// width LP inside a trust region; steps that do not shrink the true spread
/// halve the region.
pub fn minimum_zone_center(points: &[[f64; 2]], seed: [f64; 2]) -> [f64; 2] {
    let scale = points
        .iter()
        .map(|p| dist(*p, seed))
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let mut c = seed;
    let mut best = spread(points, c);
    let mut trust = (best * 4.0).max(1e-6 * scale);
    let floor = 1e-13 * scale;
    for _ in 0..200 {
        if trust < floor || best == 0.0 {
            break;
        }
        let rows: Vec<(Vec<f64>, f64)> = points
            .iter()
            .filter_map(|p| {
                let d = dist(*p, c);
                // d(c + δ) ≈ d − u·δ; work in µm for solver tolerances
                (d > 0.0).then(|| {
                    (
                        vec![(p[0] - c[0]) / d, (p[1] - c[1]) / d],
                        d * MM_TO_UM,
                    )
                })
            })
            .collect();
        let Some((delta, _)) = min_width_lp(&rows, trust * MM_TO_UM) else {
            trust /= 2.0;
            continue;
        };
        let cand = [c[0] + delta[0] / MM_TO_UM, c[1] + delta[1] / MM_TO_UM];
        let width = spread(points, cand);
        if width < best {
            let moved = (cand[0] - c[0]).hypot(cand[1] - c[1]);
            (c, best) = (cand, width);
            trust = trust.min(4.0 * moved).max(floor * 2.0);
            if moved < floor {
                break;
            }
        } else {
            trust /= 2.0;
        }
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CircleReference {
    /// Minimum-zone center seeded by the least-squares fit.
    Fitted,
    /// Least-squares (geometric) center.
    LeastSquares,
    Nominal(Circle),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircularityResult {
    pub reference: CircleReference,
    /// Center the radii were measured from, mm.
    pub center: [f64; 2],
    /// Reference radius, mm.
    pub radius: f64,
    /// µm
    pub circularity: f64,
    /// Largest signed radial deviation from the reference circle, µm.
    pub radial_max: f64,
    /// Smallest signed radial deviation, µm.
    pub radial_min: f64,
}

/// Circularity of `points` about the chosen reference.
///
/// For the fitted references the radius is the least-squares radius, so the
/// signed extremes straddle zero; for a nominal circle they are deviations
/// from the commanded radius.
pub fn circularity(points: &[[f64; 2]], reference: CircleReference) -> Result<CircularityResult, MetrologyError> {
    let (center, radius) = match reference {
        CircleReference::Nominal(c) => {
            if points.is_empty() {
                return Err(MetrologyError::InsufficientData("no points".into()));
            }
            (c.center, c.radius)
        }
        CircleReference::LeastSquares => {
            let fit = fit_circle(points, CircleFitMethod::Geometric)?;
            (fit.center, fit.radius)
        }
        CircleReference::Fitted => {
            let fit = fit_circle(points, CircleFitMethod::Geometric)?;
            (minimum_zone_center(points, fit.center), fit.radius)
        }
    };
    let devs = points.iter().map(|p| (dist(*p, center) - radius) * MM_TO_UM);
    let (lo, hi) = devs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
    Ok(CircularityResult {
        reference,
        center,
        radius,
        circularity: spread(points, center) * MM_TO_UM,
        radial_max: hi,
        radial_min: lo,
    })
}

/// Circularity about the minimum-zone and least-squares centers, plus the
/// nominal circle when known, side by side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircularityReport {
    pub fitted: CircularityResult,
    pub least_squares: CircularityResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nominal: Option<CircularityResult>,
}

pub fn circularity_report(points: &[[f64; 2]], nominal: Option<Circle>) -> Result<CircularityReport, MetrologyError> {
    Ok(CircularityReport {
        fitted: circularity(points, CircleReference::Fitted)?,
        least_squares: circularity(points, CircleReference::LeastSquares)?,
        nominal: nominal
            .map(|c| circularity(points, CircleReference::Nominal(c)))
            .transpose()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn on_circle(c: [f64; 2], r: f64, n: usize, phase: f64) -> Vec<[f64; 2]> {
        (0..n)
            .map(|i| {
                let t = phase + i as f64 * std::f64::consts::TAU / n as f64;
                [c[0] + r * t.cos(), c[1] + r * t.sin()]
            })
            .collect()
    }

    #[test]
    fn exact_points_recovered() {
        let pts = on_circle([10.0, -3.0], 40.0, 8, 0.3);
        for m in [CircleFitMethod::Algebraic, CircleFitMethod::Geometric] {
            let f = fit_circle(&pts, m).unwrap();
            assert!((f.center[0] - 10.0).abs() < 1e-9 && (f.center[1] + 3.0).abs() < 1e-9);
            assert!((f.radius - 40.0).abs() < 1e-9);
        }
    }

    #[test]
    fn three_points_give_circumcircle() {
        let pts = [[0.0, 0.0], [4.0, 0.0], [0.0, 3.0]];
        let a = fit_circle(&pts, CircleFitMethod::Algebraic).unwrap();
        let g = fit_circle(&pts, CircleFitMethod::Geometric).unwrap();
        assert!((a.center[0] - 2.0).abs() < 1e-9 && (a.center[1] - 1.5).abs() < 1e-9);
        assert!((a.radius - 2.5).abs() < 1e-9);
        assert!((g.center[0] - a.center[0]).abs() < 1e-9 && (g.radius - a.radius).abs() < 1e-9);
    }

    #[test]
    fn collinear_rejected() {
        let pts = [[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]];
        assert!(matches!(
            fit_circle(&pts, CircleFitMethod::Geometric),
            Err(MetrologyError::DegenerateGeometry(_))
        ));
        assert!(fit_circle(&pts[..2], CircleFitMethod::Algebraic).is_err());
    }

    #[test]
    fn exact_circle_zero_circularity() {
        let pts = on_circle([0.0, 0.0], 50.0, 36, 0.0);
        let r = circularity_report(&pts, Some(Circle { center: [0.0, 0.0], radius: 50.0 })).unwrap();
        assert!(r.fitted.circularity < 1e-6);
        let n = r.nominal.unwrap();
        assert!(n.radial_max.abs() < 1e-6 && n.radial_min.abs() < 1e-6);
    }

    #[test]
    fn ellipse_circularity() {
        let (r, e) = (50.0, 0.01);
        let pts: Vec<[f64; 2]> = (0..720)
            .map(|i| {
                let t = i as f64 * std::f64::consts::TAU / 720.0;
                [(r + e) * t.cos(), (r - e) * t.sin()]
            })
            .collect();
        let c = circularity(&pts, CircleReference::Fitted).unwrap();
        assert!((c.circularity - 2.0 * e * MM_TO_UM).abs() <= 0.01 * 2.0 * e * MM_TO_UM);
    }

    #[test]
    fn geometric_no_worse_than_algebraic_on_arc() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<[f64; 2]> = (0..30)
            .map(|i| {
                let t = i as f64 * 0.03;
                let rr = 20.0 + rng.gen_range(-0.05..0.05);
                [rr * t.cos(), rr * t.sin()]
            })
            .collect();
        let a = fit_circle(&pts, CircleFitMethod::Algebraic).unwrap();
        let g = fit_circle(&pts, CircleFitMethod::Geometric).unwrap();
        assert!(g.residual_rms <= a.residual_rms + 1e-12);
    }

    proptest! {
        #[test]
        fn fitted_center_beats_other_centers(
            seed in 0u64..1000,
            dx in -0.05f64..0.05,
            dy in -0.05f64..0.05,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<[f64; 2]> = (0..40)
                .map(|i| {
                    let t = i as f64 * std::f64::consts::TAU / 40.0;
                    let rr = 30.0 + rng.gen_range(-0.02..0.02);
                    [5.0 + rr * t.cos(), -2.0 + rr * t.sin()]
                })
                .collect();
            let fitted = circularity(&pts, CircleReference::Fitted).unwrap();
            let ls = circularity(&pts, CircleReference::LeastSquares).unwrap();
            prop_assert!(fitted.circularity <= ls.circularity + 1e-9);
            let other = [fitted.center[0] + dx, fitted.center[1] + dy];
            prop_assert!(fitted.circularity <= spread(&pts, other) * MM_TO_UM + 1e-6);
        }

        #[test]
        fn geometric_rms_not_above_algebraic(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<[f64; 2]> = (0..25)
                .map(|_| {
                    let t: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                    let rr = 10.0 + rng.gen_range(-0.3..0.3);
                    [rr * t.cos(), rr * t.sin()]
                })
                .collect();
            let a = fit_circle(&pts, CircleFitMethod::Algebraic).unwrap();
            let g = fit_circle(&pts, CircleFitMethod::Geometric).unwrap();
            prop_assert!(g.residual_rms <= a.residual_rms + 1e-12);
        }

        #[test]
        fn rigid_motion_invariance(seed in 0u64..200, angle in 0.0f64..std::f64::consts::TAU, tx in -100.0f64..100.0, ty in -100.0f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<[f64; 2]> = (0..30)
                .map(|i| {
                    let t = i as f64 * std::f64::consts::TAU / 30.0;
                    let rr = 12.0 + rng.gen_range(-0.01..0.01);
                    [rr * t.cos(), rr * t.sin()]
                })
                .collect();
            let (s, c) = angle.sin_cos();
            let moved: Vec<[f64; 2]> = pts.iter().map(|p| [c * p[0] - s * p[1] + tx, s * p[0] + c * p[1] + ty]).collect();
            let a = fit_circle(&pts, CircleFitMethod::Geometric).unwrap();
            let b = fit_circle(&moved, CircleFitMethod::Geometric).unwrap();
            prop_assert!((a.radius - b.radius).abs() < 1e-9);
            let expect = [c * a.center[0] - s * a.center[1] + tx, s * a.center[0] + c * a.center[1] + ty];
            prop_assert!((b.center[0] - expect[0]).abs() < 1e-8 && (b.center[1] - expect[1]).abs() < 1e-8);
            let ca = circularity(&pts, CircleReference::Fitted).unwrap().circularity;
            let cb = circularity(&moved, CircleReference::Fitted).unwrap().circularity;
            prop_assert!((ca - cb).abs() < 1e-3);
        }
    }
}
