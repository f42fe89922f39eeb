//! Time-optimal jerk-limited (7-phase) point-to-point profile, rest to rest.

use serde::{Deserialize, Serialize};

use super::MotionError;

/// Sign of the jerk in each of the seven phases: jerk+, constant
/// acceleration, jerk-, cruise, jerk-, constant deceleration, jerk+.
pub const PHASE_JERK_SIGN: [f64; 7] = [1.0, 0.0, -1.0, 0.0, -1.0, 0.0, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SCurveProfile {
    /// mm
    pub distance: f64,
    /// mm/s
    pub v_peak: f64,
    /// mm/s²
    pub a_peak: f64,
    /// mm/s³
    pub jerk: f64,
    /// s
    pub phase_durations: [f64; 7],
}

/// Path state at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MotionState {
    pub s: f64,
    pub v: f64,
    pub a: f64,
    pub j: f64,
}

impl MotionState {
    /// Exact state after `dt` under constant jerk `j`.
    fn advance(self, j: f64, dt: f64) -> Self {
        Self {
            s: self.s + self.v * dt + self.a * dt * dt / 2.0 + j * dt * dt * dt / 6.0,
            v: self.v + self.a * dt + j * dt * dt / 2.0,
            a: self.a + j * dt,
            j,
        }
    }
}

impl SCurveProfile {
    pub fn zero() -> Self {
        Self {
            distance: 0.0,
            v_peak: 0.0,
            a_peak: 0.0,
            jerk: 0.0,
            phase_durations: [0.0; 7],
        }
    }

    pub fn total_time(&self) -> f64 {
        self.phase_durations.iter().sum()
    }

    pub fn cruise_time(&self) -> f64 {
        self.phase_durations[3]
    }

    /// Closed-form state at time `t` (clamped to `[0, total_time]`).
    pub fn state_at(&self, t: f64) -> MotionState {
        if t <= 0.0 {
            return MotionState::default();
        }
        let mut state = MotionState::default();
        let mut elapsed = 0.0;
        for (k, &d) in self.phase_durations.iter().enumerate() {
            let jerk = PHASE_JERK_SIGN[k] * self.jerk;
            if t < elapsed + d {
                return state.advance(jerk, t - elapsed);
            }
            state = state.advance(jerk, d);
            elapsed += d;
        }
        MotionState {
            s: self.distance,
            ..MotionState::default()
        }
    }

    pub fn position_at(&self, t: f64) -> f64 {
        self.state_at(t).s
    }
}

/// Jerk-phase and constant-acceleration durations to go from rest to `v`.
fn ramp_shape(v: f64, a_max: f64, j_max: f64) -> (f64, f64) {
    if v * j_max >= a_max * a_max {
        (a_max / j_max, v / a_max - a_max / j_max)
    } else {
        ((v / j_max).sqrt(), 0.0)
    }
}

/// Plans the time-optimal rest-to-rest profile over `distance` mm under the
/// velocity (mm/s), acceleration (mm/s²) and jerk (mm/s³) limits.
///
/// When the move is too short to reach `v_cmd` (or `a_max`) the matching
/// phases get zero duration.
pub fn plan_scurve(
    distance: f64,
    v_cmd: f64,
    a_max: f64,
    j_max: f64,
) -> Result<SCurveProfile, MotionError> {
    for (name, value) in [("v_cmd", v_cmd), ("a_max", a_max), ("j_max", j_max)] {
        if !(value.is_finite() && value > 0.0) {
            return Err(MotionError::InvalidInput(format!(
                "{name} must be finite and > 0, got {value}"
            )));
        }
    }
    if !(distance.is_finite() && distance >= 0.0) {
        return Err(MotionError::InvalidInput(format!(
            "distance must be finite and >= 0, got {distance}"
        )));
    }
    if distance == 0.0 {
        return Ok(SCurveProfile::zero());
    }

    let (mut tj, mut tc) = ramp_shape(v_cmd, a_max, j_max);
    let ramp_distance = v_cmd * (2.0 * tj + tc) / 2.0;
    let (v_peak, cruise) = if 2.0 * ramp_distance <= distance {
        (v_cmd, (distance - 2.0 * ramp_distance) / v_cmd)
    } else {
        // Peak velocity with a_max reached: d = v (a/j + v/a).
        let q = a_max * a_max / j_max;
        let v_trap = (-q + (q * q + 4.0 * a_max * distance).sqrt()) / 2.0;
        let v = if v_trap >= q {
            v_trap
        } else {
            // Acceleration never saturates: d = 2 j tj³.
            let t = (distance / (2.0 * j_max)).cbrt();
            j_max * t * t
        };
        (tj, tc) = ramp_shape(v, a_max, j_max);
        (v, 0.0)
    };
    let tc = tc.max(0.0);
    Ok(SCurveProfile {
        distance,
        v_peak,
        a_peak: j_max * tj,
        jerk: j_max,
        phase_durations: [tj, tc, tj, cruise.max(0.0), tj, tc, tj],
    })
}
