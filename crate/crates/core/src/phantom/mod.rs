//! Synthetic dynamic CCTP datasets with programmed ground truth.
//!
//! The arterial input is a gamma variate. Tissue compartments take up contrast
//! as `c(t) = K * ∫ amp_scale * aif(τ - delay) dτ` with `K = mbf * density / 6000`
//! (per second), integrated by the trapezoid rule on a 0.1 s grid. An optional
//! first-order washout rate turns this into `dc/dt = K * input - k_out * c`;
//! with `k_out = 0` the pure uptake integral is recovered exactly.

mod presets;
mod shape;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roi::Centerline;
use crate::volgrid::{DynamicSeries, Grid, Label, LabelMask, VolumeGrid};

pub use presets::{ADIPOSE_DENSITY, LAD_AXIS_XY, MYOCARDIUM_DENSITY, STENOSIS_SPLIT_MM};
pub use shape::{Axis, Geometry};

/// Internal integration step of the uptake model, seconds.
pub const INTEGRATION_STEP_S: f64 = 0.1;

/// Gamma-variate bolus parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AifParams {
    /// Peak enhancement above baseline, HU.
    pub amplitude: f64,
    /// Bolus arrival time, s.
    pub arrival_s: f64,
    /// Time from arrival to peak, s.
    pub time_to_peak_s: f64,
    /// Shape exponent.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    3.0
}

impl AifParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.amplitude > 0.0
            && self.time_to_peak_s > 0.0
            && self.alpha > 0.0
            && self.arrival_s >= 0.0
            && [self.amplitude, self.arrival_s, self.time_to_peak_s, self.alpha].iter().all(|v| v.is_finite());
        if !ok {
            return Err(Error::invalid(format!("invalid AIF parameters {self:?}")));
        }
        Ok(())
    }

    /// Time of the bolus maximum.
    pub fn peak_time(&self) -> f64 {
        self.arrival_s + self.time_to_peak_s
    }
}

/// Enhancement above baseline of the arterial input at time `t`.
///
/// Zero up to the arrival time; the maximum is exactly `amplitude` at
/// `arrival_s + time_to_peak_s`.
pub fn gamma_variate(t: f64, p: &AifParams) -> f64 {
    if t <= p.arrival_s {
        return 0.0;
    }
    let x = (t - p.arrival_s) / p.time_to_peak_s;
    p.amplitude * x.powf(p.alpha) * (p.alpha * (1.0 - x)).exp()
}

/// Kinetic parameters of one tissue compartment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Uptake {
    /// mL/100g-min.
    pub mbf: f64,
    /// g/mL.
    pub density: f64,
    pub delay_s: f64,
    pub amp_scale: f64,
    /// First-order efflux rate, 1/s.
    pub washout_per_s: f64,
}

impl Uptake {
    /// Uptake rate constant `mbf * density / 6000`, 1/s.
    pub fn rate(&self) -> f64 {
        self.mbf * self.density / 6000.0
    }

    /// Curve on the internal grid `0, step, 2*step, ...` up to at least `t_end`.
    pub fn fine_curve(&self, aif: &AifParams, t_end: f64) -> Vec<f64> {
        let n = (t_end / INTEGRATION_STEP_S - 1e-9).ceil().max(0.0) as usize + 1;
        let k = self.rate();
        let input = |j: usize| self.amp_scale * gamma_variate(j as f64 * INTEGRATION_STEP_S - self.delay_s, aif);
        let decay = (-self.washout_per_s * INTEGRATION_STEP_S).exp();
        let half = 0.5 * k * INTEGRATION_STEP_S;
        let mut out = Vec::with_capacity(n);
        let mut c = 0.0;
        let mut prev = input(0);
        out.push(c);
        for j in 1..n {
            let cur = input(j);
            c = c * decay + half * (prev * decay + cur);
            out.push(c);
            prev = cur;
        }
        out
    }

    /// Curve sampled at `times` (linear interpolation on the internal grid).
    pub fn sample(&self, aif: &AifParams, times: &[f64]) -> Vec<f64> {
        let t_end = times.iter().copied().fold(0.0, f64::max);
        let fine = self.fine_curve(aif, t_end);
        times.iter().map(|&t| interpolate_fine(&fine, t)).collect()
    }
}

fn interpolate_fine(fine: &[f64], t: f64) -> f64 {
    let pos = (t / INTEGRATION_STEP_S).max(0.0);
    let mut j = pos.floor();
    let mut frac = pos - j;
    if 1.0 - frac < 1e-9 {
        j += 1.0;
        frac = 0.0;
    } else if frac < 1e-9 {
        frac = 0.0;
    }
    let j = (j as usize).min(fine.len() - 1);
    if frac == 0.0 || j + 1 >= fine.len() {
        fine[j]
    } else {
        fine[j] * (1.0 - frac) + fine[j + 1] * frac
    }
}

/// No-washout tissue enhancement above baseline at `times`.
pub fn tissue_curve(
    mbf: f64,
    density: f64,
    aif: &AifParams,
    delay_s: f64,
    amp_scale: f64,
    times: &[f64],
) -> Vec<f64> {
    Uptake { mbf, density, delay_s, amp_scale, washout_per_s: 0.0 }.sample(aif, times)
}

/// One labelled region of the phantom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompartmentSpec {
    pub label: Label,
    #[serde(flatten)]
    pub geometry: Geometry,
    pub baseline_hu: f64,
    /// Width of a uniform baseline spread centred on `baseline_hu`.
    #[serde(default)]
    pub baseline_spread_hu: f64,
    #[serde(default)]
    pub mbf: f64,
    #[serde(default = "default_density")]
    pub density: f64,
    #[serde(default)]
    pub delay_s: f64,
    #[serde(default = "default_amp_scale")]
    pub amp_scale: f64,
    #[serde(default)]
    pub washout_per_s: f64,
}

fn default_density() -> f64 {
    1.0
}

fn default_amp_scale() -> f64 {
    1.0
}

impl CompartmentSpec {
    pub fn uptake(&self) -> Uptake {
        Uptake {
            mbf: self.mbf,
            density: self.density,
            delay_s: self.delay_s,
            amp_scale: self.amp_scale,
            washout_per_s: self.washout_per_s,
        }
    }

    /// Enhancement above baseline at `times`. Blood-pool labels follow the
    /// (scaled, delayed) arterial input directly.
    pub fn enhancement(&self, aif: &AifParams, times: &[f64]) -> Vec<f64> {
        if self.label.is_blood_pool() {
            times.iter().map(|&t| self.amp_scale * gamma_variate(t - self.delay_s, aif)).collect()
        } else {
            self.uptake().sample(aif, times)
        }
    }

    fn validate(&self) -> Result<()> {
        let name = self.label.name();
        if self.label == Label::Background {
            return Err(Error::invalid("compartments may not use the BG label"));
        }
        if !(self.mbf >= 0.0) || !self.mbf.is_finite() {
            return Err(Error::invalid(format!("{name}: mbf must be >= 0")));
        }
        if !(self.density > 0.0) || !self.density.is_finite() {
            return Err(Error::invalid(format!("{name}: density must be > 0")));
        }
        if !(self.amp_scale > 0.0 && self.amp_scale <= 1.0) {
            return Err(Error::invalid(format!("{name}: amp_scale must be in (0, 1]")));
        }
        if !(self.delay_s >= 0.0) || !self.delay_s.is_finite() {
            return Err(Error::invalid(format!("{name}: delay_s must be >= 0")));
        }
        if !(self.washout_per_s >= 0.0) || !self.washout_per_s.is_finite() {
            return Err(Error::invalid(format!("{name}: washout_per_s must be >= 0")));
        }
        if !(self.baseline_spread_hu >= 0.0) || !self.baseline_hu.is_finite() {
            return Err(Error::invalid(format!("{name}: bad baseline")));
        }
        self.geometry.validate().map_err(|e| Error::invalid(format!("{name}: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    #[serde(default)]
    pub origin: [f64; 3],
    /// HU of voxels outside every compartment.
    #[serde(default = "default_background")]
    pub background_hu: f64,
}

fn default_background() -> f64 {
    -1000.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanSchedule {
    pub count: usize,
    pub interval_s: f64,
    #[serde(default)]
    pub start_s: f64,
}

impl ScanSchedule {
    pub fn times(&self) -> Vec<f64> {
        (0..self.count).map(|k| self.start_s + k as f64 * self.interval_s).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(default)]
    pub sigma_hu: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Complete description of a synthetic acquisition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub grid: GridSpec,
    pub aif: AifParams,
    pub scans: ScanSchedule,
    pub noise: NoiseSpec,
    #[serde(rename = "compartment")]
    pub compartments: Vec<CompartmentSpec>,
}

impl PhantomSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: PhantomSpec = toml::from_str(text).map_err(|e| Error::invalid(format!("phantom spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: PhantomSpec = toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("phantom spec serialises")
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid.dims, self.grid.spacing, self.grid.origin)
    }

    pub fn compartment(&self, label: Label) -> Option<&CompartmentSpec> {
        self.compartments.iter().find(|c| c.label == label)
    }

    pub fn compartment_mut(&mut self, label: Label) -> Option<&mut CompartmentSpec> {
        self.compartments.iter_mut().find(|c| c.label == label)
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        self.aif.validate()?;
        if self.scans.count < 2 {
            return Err(Error::invalid("phantom needs at least 2 scans"));
        }
        if !(self.scans.interval_s > 0.0) || !(self.scans.start_s >= 0.0) {
            return Err(Error::invalid("scan interval must be > 0 and start >= 0"));
        }
        if !(self.noise.sigma_hu >= 0.0) || !self.noise.sigma_hu.is_finite() {
            return Err(Error::invalid("noise sigma must be >= 0"));
        }
        if !self.grid.background_hu.is_finite() {
            return Err(Error::invalid("background HU must be finite"));
        }
        let mut seen = Vec::new();
        for c in &self.compartments {
            c.validate()?;
            if seen.contains(&c.label) {
                return Err(Error::invalid(format!("label {} used by more than one compartment", c.label)));
            }
            seen.push(c.label);
            c.geometry
                .check_within(&grid)
                .map_err(|e| Error::invalid(format!("{}: {e}", c.label)))?;
        }
        Ok(())
    }
}

/// Programmed truth for one compartment.
#[derive(Debug, Clone, PartialEq)]
pub struct CompartmentTruth {
    pub label: Label,
    pub mbf: f64,
    pub density: f64,
    pub baseline_hu: f64,
    pub baseline_spread_hu: f64,
    pub voxel_count: usize,
    /// Noiseless enhancement above baseline at each scan time.
    pub enhancement: Vec<f64>,
    /// Earliest time of the maximum of the fine-grid curve, relative to the
    /// first scan.
    pub time_to_peak_s: f64,
}

impl CompartmentTruth {
    pub fn peak_enhancement(&self) -> f64 {
        self.enhancement.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub times: Vec<f64>,
    pub aif: AifParams,
    pub compartments: Vec<CompartmentTruth>,
    pub mask: LabelMask,
    pub centerlines: Vec<(Label, Centerline)>,
}

impl GroundTruth {
    pub fn compartment(&self, label: Label) -> Option<&CompartmentTruth> {
        self.compartments.iter().find(|c| c.label == label)
    }

    pub fn centerline(&self, label: Label) -> Option<&Centerline> {
        self.centerlines.iter().find(|(l, _)| *l == label).map(|(_, c)| c)
    }
}

#[derive(Debug, Clone)]
pub struct PhantomOutput {
    pub series: DynamicSeries,
    pub mask: LabelMask,
    pub centerlines: Vec<(Label, Centerline)>,
    pub truth: GroundTruth,
}

const NO_COMPARTMENT: u16 = u16::MAX;

/// Rasterise, fill and (optionally) add noise. Deterministic for a fixed spec.
pub fn simulate(spec: &PhantomSpec) -> Result<PhantomOutput> {
    spec.validate()?;
    let grid = spec.grid()?;
    let n = grid.len();

    // Rasterise compartments; any voxel claimed twice is an error.
    let mut owner = vec![NO_COMPARTMENT; n];
    let mut members: Vec<Vec<usize>> = Vec::with_capacity(spec.compartments.len());
    for (ci, c) in spec.compartments.iter().enumerate() {
        let mut voxels = Vec::new();
        for idx in c.geometry.voxels(&grid) {
            if owner[idx] != NO_COMPARTMENT {
                let other = &spec.compartments[owner[idx] as usize];
                return Err(Error::Overlap(format!(
                    "{} and {} both claim voxel {:?}",
                    other.label,
                    c.label,
                    grid.coords(idx)
                )));
            }
            owner[idx] = ci as u16;
            voxels.push(idx);
        }
        if voxels.is_empty() {
            return Err(Error::invalid(format!("compartment {} covers no voxel centres", c.label)));
        }
        members.push(voxels);
    }

    let mut mask = LabelMask::empty(grid);
    let mut baseline = vec![spec.grid.background_hu; n];
    for (ci, c) in spec.compartments.iter().enumerate() {
        let voxels = &members[ci];
        for &idx in voxels {
            mask.set(idx, c.label);
        }
        if c.baseline_spread_hu > 0.0 {
            // Stratified uniform levels, shuffled over the compartment's voxels.
            let m = voxels.len();
            let lo = c.baseline_hu - 0.5 * c.baseline_spread_hu;
            let mut levels: Vec<f64> =
                (0..m).map(|i| lo + c.baseline_spread_hu * (i as f64 + 0.5) / m as f64).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(spec.noise.seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(ci as u64 + 1)));
            levels.shuffle(&mut rng);
            for (&idx, b) in voxels.iter().zip(levels) {
                baseline[idx] = b;
            }
        } else {
            for &idx in voxels {
                baseline[idx] = c.baseline_hu;
            }
        }
    }

    let times = spec.scans.times();
    let curves: Vec<Vec<f64>> = spec.compartments.iter().map(|c| c.enhancement(&spec.aif, &times)).collect();

    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.noise.seed);
    let normal = Normal::new(0.0, spec.noise.sigma_hu.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::invalid(format!("noise: {e}")))?;
    let mut volumes = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let mut values = Vec::with_capacity(n);
        for idx in 0..n {
            let ci = owner[idx];
            let enh = if ci == NO_COMPARTMENT { 0.0 } else { curves[ci as usize][k] };
            let noise = if spec.noise.sigma_hu > 0.0 { normal.sample(&mut noise_rng) } else { 0.0 };
            values.push((baseline[idx] + enh + noise) as f32);
        }
        volumes.push(VolumeGrid::new(grid, values, Some(t))?);
    }
    let series = DynamicSeries::new(volumes, times.clone())?;

    let mut centerlines = Vec::new();
    for c in &spec.compartments {
        if matches!(c.geometry, Geometry::Tube { .. }) || (c.label.is_lumen() && matches!(c.geometry, Geometry::Cylinder { .. })) {
            if let Some(cl) = c.geometry.axis_centerline(&grid)? {
                centerlines.push((c.label, cl));
            }
        }
    }

    let t_first = times[0];
    let t_last = *times.last().unwrap_or(&t_first);
    let compartments = spec
        .compartments
        .iter()
        .zip(&curves)
        .zip(&members)
        .map(|((c, curve), voxels)| CompartmentTruth {
            label: c.label,
            mbf: c.mbf,
            density: c.density,
            baseline_hu: c.baseline_hu,
            baseline_spread_hu: c.baseline_spread_hu,
            voxel_count: voxels.len(),
            enhancement: curve.clone(),
            time_to_peak_s: analytic_time_to_peak(c, &spec.aif, t_first, t_last),
        })
        .collect();

    let truth = GroundTruth {
        times,
        aif: spec.aif,
        compartments,
        mask: mask.clone(),
        centerlines: centerlines.clone(),
    };
    Ok(PhantomOutput { series, mask, centerlines, truth })
}

/// Earliest fine-grid time of the curve maximum within `[t_first, t_last]`,
/// relative to `t_first`.
pub fn analytic_time_to_peak(c: &CompartmentSpec, aif: &AifParams, t_first: f64, t_last: f64) -> f64 {
    let steps = ((t_last - t_first) / INTEGRATION_STEP_S).round() as usize;
    let grid: Vec<f64> = (0..=steps).map(|j| t_first + j as f64 * INTEGRATION_STEP_S).collect();
    let curve = c.enhancement(aif, &grid);
    let mut best = 0;
    for (j, &v) in curve.iter().enumerate() {
        if v > curve[best] {
            best = j;
        }
    }
    grid[best] - t_first
}
