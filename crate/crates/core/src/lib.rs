//! Characterization toolkit for high-speed machining centers.
//!
//! The crate follows the no-load / in-load test sequence used to compare
//! machining centers:
//!
//! * [`model`]: vendor datasheets, axis limits, sector requirement profiles,
//!   datasheet gap analysis and machine scoring.
//! * [`motion`]: jerk-limited S-curve planning and synthetic servo traces for
//!   the standard linear and circular test trajectories.
//! * [`trace`]: the time-stamped multi-axis position trace and its CSV form.
//! * [`analysis`]: numerical differentiation of traces and extraction of
//!   kinematic indicators (max velocity/acceleration/jerk, homogeneity,
//!   saturation, stability, commanded vs attained dynamics).
//! * [`metrology`]: positioning statistics, circle and plane fitting,
//!   circularity, flatness, perpendicularity and hole localization.
//! * [`timing`]: entity cycle times, air-cut vs loaded comparison.
//! * [`protocol`] and [`report`]: the standard protocol generator, the
//!   characterization run orchestration and report rendering.

// `!(x > 0.0)` is used on purpose so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod metrology;
pub mod model;
pub mod motion;
pub mod protocol;
pub mod report;
pub mod timing;
pub mod trace;

mod digest;

pub use digest::sha256_hex;

/// Crate version embedded in report provenance.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
