//! Supervoxel clustering and maximum-slope blood flow.
//!
//! `MBF = 6000 * max_slope(tissue - tissue[P1]) / (density * max(aif - aif[P1]))`
//! in mL/100g-min, with tissue and input as mean HU curves.

mod slic;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tac::TimeAttenuationCurve;
use crate::volgrid::{DynamicSeries, Label};

pub use slic::{slic_cluster, SlicParams, SupervoxelSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeMethod {
    /// Central differences inside, one-sided at the ends.
    #[default]
    CentralDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowParams {
    /// Tissue density, g/mL.
    pub density: f64,
    pub derivative: DerivativeMethod,
    /// Region whose mean curve serves as arterial input.
    pub aif_label: Label,
    /// Report negative estimates as 0 (flagged).
    pub clamp_negative: bool,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            density: 0.92,
            derivative: DerivativeMethod::CentralDifference,
            aif_label: Label::Aorta,
            clamp_negative: true,
        }
    }
}

impl FlowParams {
    pub fn with_density(density: f64) -> Self {
        FlowParams { density, ..Default::default() }
    }
}

/// Steepest slope of a sampled curve, HU/s.
pub fn max_slope(values: &[f64], times: &[f64]) -> Result<f64> {
    let n = values.len();
    if n < 3 || times.len() != n {
        return Err(Error::invalid("max_slope needs at least 3 samples with matching times"));
    }
    let mut best = (values[1] - values[0]) / (times[1] - times[0]);
    for k in 1..n - 1 {
        best = best.max((values[k + 1] - values[k - 1]) / (times[k + 1] - times[k - 1]));
    }
    best = best.max((values[n - 1] - values[n - 2]) / (times[n - 1] - times[n - 2]));
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowMap {
    pub label: Label,
    pub density: f64,
    /// Peak input enhancement over P1, HU.
    pub aif_peak_hu: f64,
    pub mbf: Vec<f64>,
    /// Supervoxels whose raw estimate was negative.
    pub clamped: Vec<bool>,
    pub voxel_counts: Vec<usize>,
    pub mean: f64,
    pub median: f64,
}

impl FlowMap {
    pub fn any_clamped(&self) -> bool {
        self.clamped.iter().any(|&c| c)
    }
}

/// Mean HU curve of each supervoxel.
pub fn supervoxel_tacs(s: &DynamicSeries, sv: &SupervoxelSet) -> Result<Vec<Vec<f64>>> {
    s.grid().ensure_same(&sv.grid, "supervoxel_tacs")?;
    Ok(sv
        .members
        .par_iter()
        .map(|m| {
            s.volumes()
                .iter()
                .map(|v| {
                    let vals = v.values();
                    m.iter().map(|&i| vals[i] as f64).sum::<f64>() / m.len() as f64
                })
                .collect()
        })
        .collect())
}

pub fn estimate_flow(
    s: &DynamicSeries,
    sv: &SupervoxelSet,
    aif: &TimeAttenuationCurve,
    p: &FlowParams,
) -> Result<FlowMap> {
    if !(p.density > 0.0) || !p.density.is_finite() {
        return Err(Error::invalid("density must be > 0"));
    }
    if aif.len() != s.len() {
        return Err(Error::invalid("input curve and series lengths differ"));
    }
    if sv.is_empty() {
        return Err(Error::empty("supervoxel set"));
    }
    let aif_peak = aif.mean_hu.iter().map(|v| v - aif.mean_hu[0]).fold(f64::NEG_INFINITY, f64::max);
    if !(aif_peak > 0.0) {
        return Err(Error::Degenerate(format!("arterial input peak enhancement {aif_peak} is not positive")));
    }
    let tacs = supervoxel_tacs(s, sv)?;
    let times = s.times();
    let mut mbf = Vec::with_capacity(tacs.len());
    let mut clamped = Vec::with_capacity(tacs.len());
    for tac in &tacs {
        let rel: Vec<f64> = tac.iter().map(|v| v - tac[0]).collect();
        let raw = 6000.0 * max_slope(&rel, times)? / (p.density * aif_peak);
        if raw < 0.0 && p.clamp_negative {
            mbf.push(0.0);
            clamped.push(true);
        } else {
            mbf.push(raw);
            clamped.push(false);
        }
    }
    let mean = mbf.iter().sum::<f64>() / mbf.len() as f64;
    let median = crate::roi::median(&mbf).expect("nonempty");
    Ok(FlowMap {
        label: sv.label,
        density: p.density,
        aif_peak_hu: aif_peak,
        voxel_counts: sv.members.iter().map(Vec::len).collect(),
        mbf,
        clamped,
        mean,
        median,
    })
}
