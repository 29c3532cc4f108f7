//! Dynamic cardiac CT perfusion analysis of pericoronary adipose tissue (PCAT).
//!
//! The crate is organised by pipeline stage:
//!
//! * [`volgrid`]: volumes, dynamic series, label masks and their file formats.
//! * [`phantom`]: synthetic 4D perfusion datasets with programmed ground truth.
//! * [`prep`]: translation registration and spatio-temporal bilateral filtering.
//! * [`roi`]: centerlines, effective diameter, axial-disk masks and fat selection.
//! * [`tac`]: time-attenuation curves, landmarks, enhancement and apparent volume.
//! * [`flow`]: supervoxel clustering and maximum-slope blood-flow estimation.
//! * [`feat`]: hand-crafted and radiomics features and their drift over time.

pub mod error;
pub mod feat;
pub mod flow;
pub mod phantom;
pub mod prep;
pub mod roi;
pub mod tac;
pub mod volgrid;

pub use error::{Error, Result};
pub use volgrid::{DynamicSeries, Grid, Label, LabelMask, VolumeGrid};

/// Closed HU interval `[lo, hi]` used for fat-window membership.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HuWindow {
    pub lo: f64,
    pub hi: f64,
}

impl HuWindow {
    /// Conventional fat window.
    pub const STANDARD: HuWindow = HuWindow { lo: -190.0, hi: -30.0 };
    /// Widened window that keeps mildly enhanced fat.
    pub const EXTENDED: HuWindow = HuWindow { lo: -190.0, hi: -10.0 };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::invalid(format!("window lower bound {lo} must be below upper bound {hi}")));
        }
        Ok(HuWindow { lo, hi })
    }

    /// Inclusive at both ends.
    #[inline]
    pub fn contains(&self, hu: f64) -> bool {
        hu >= self.lo && hu <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

impl std::fmt::Display for HuWindow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}
