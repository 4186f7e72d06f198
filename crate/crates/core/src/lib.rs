//! Simulation toolkit for hybrid photosensor/video eye tracking.
//!
//! A fast four-photodiode tracker ([`psog`]) is corrected for sensor shifts
//! using low-rate pupil/corneal-reflection tracking ([`vog`]), a composite
//! quadratic calibration ([`calib`]) and multirate fusion ([`fusion`]). The
//! frames both subsystems observe come from an analytic renderer ([`scene`]);
//! [`eval`] runs the experiments and computes accuracy metrics.

// `!(x <= limit)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calib;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod par;
pub mod psog;
pub mod scan;
pub mod scene;
pub mod vog;

pub use error::{Error, Result};

use serde::{Deserialize, Serialize};

/// Horizontal or vertical channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    H,
    V,
}

impl Axis {
    pub const BOTH: [Axis; 2] = [Axis::H, Axis::V];

    pub fn index(self) -> usize {
        match self {
            Axis::H => 0,
            Axis::V => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::H => "horizontal",
            Axis::V => "vertical",
        }
    }

    pub fn other(self) -> Axis {
        match self {
            Axis::H => Axis::V,
            Axis::V => Axis::H,
        }
    }
}
