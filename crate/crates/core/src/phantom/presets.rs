//! Built-in phantom layouts.
//!
//! All presets share a 48 mm field of view: an aorta with a periaortic fat
//! sleeve, one LAD-like vessel running along z with a pericoronary fat tube,
//! and box-shaped EAT, myocardium, paracardial and subcutaneous depots.

use super::{AifParams, Axis, CompartmentSpec, Geometry, GridSpec, NoiseSpec, PhantomSpec, ScanSchedule};
use crate::volgrid::Label;

const FOV_MM: f64 = 48.0;
/// Vessel axis in the xy plane.
pub const LAD_AXIS_XY: [f64; 2] = [30.0, 26.0];
pub const LAD_RADIUS_MM: f64 = 2.0;
pub const PCAT_OUTER_RADIUS_MM: f64 = 3.8;
pub const LAD_EXTENT_MM: [f64; 2] = [2.0, 46.0];
/// Arclength from the start of the vessel where the stenosis preset switches
/// from proximal to distal fat.
pub const STENOSIS_SPLIT_MM: f64 = 20.0;

pub const ADIPOSE_DENSITY: f64 = 0.92;
pub const MYOCARDIUM_DENSITY: f64 = 1.05;

fn comp(label: Label, geometry: Geometry, baseline_hu: f64, mbf: f64, density: f64) -> CompartmentSpec {
    CompartmentSpec {
        label,
        geometry,
        baseline_hu,
        baseline_spread_hu: 0.0,
        mbf,
        density,
        delay_s: 0.0,
        amp_scale: 1.0,
        washout_per_s: 0.0,
    }
}

fn boxed(min: [f64; 3], max: [f64; 3]) -> Geometry {
    Geometry::Box { min, max }
}

fn lad_tube(extent: [f64; 2]) -> Geometry {
    Geometry::Tube {
        axis: Axis::Z,
        center: LAD_AXIS_XY,
        inner_radius: LAD_RADIUS_MM,
        outer_radius: PCAT_OUTER_RADIUS_MM,
        extent,
    }
}

fn layout(z_hi: f64) -> Vec<CompartmentSpec> {
    let (z0, z1) = (LAD_EXTENT_MM[0], LAD_EXTENT_MM[1]);
    let mut pcat = comp(Label::Pcat, lad_tube(LAD_EXTENT_MM), -75.0, 75.0, ADIPOSE_DENSITY);
    // Uniform spread with a 5 HU standard deviation.
    pcat.baseline_spread_hu = 5.0 * 12f64.sqrt();
    vec![
        comp(
            Label::Aorta,
            Geometry::Cylinder { axis: Axis::Z, center: [10.0, 10.0], radius: 6.0, extent: [0.0, z_hi] },
            40.0,
            0.0,
            1.0,
        ),
        comp(
            Label::Periaortic,
            Geometry::Tube { axis: Axis::Z, center: [10.0, 10.0], inner_radius: 6.0, outer_radius: 9.0, extent: [0.0, z_hi] },
            -76.0,
            2.0,
            ADIPOSE_DENSITY,
        ),
        comp(
            Label::LumenLad,
            Geometry::Cylinder { axis: Axis::Z, center: LAD_AXIS_XY, radius: LAD_RADIUS_MM, extent: LAD_EXTENT_MM },
            40.0,
            0.0,
            1.0,
        ),
        pcat,
        comp(Label::Epicardial, boxed([35.0, 18.0, z0], [46.0, 34.0, z1]), -86.0, 15.0, ADIPOSE_DENSITY),
        comp(Label::Myocardium, boxed([18.0, 36.0, z0], [46.0, 46.0, z1]), 40.0, 324.0, MYOCARDIUM_DENSITY),
        comp(Label::Paracardial, boxed([2.0, 24.0, z0], [14.0, 34.0, z1]), -100.0, 1.0, ADIPOSE_DENSITY),
        comp(Label::Subcutaneous, boxed([22.0, 2.0, z0], [46.0, 8.0, z1]), -105.0, 1.0, ADIPOSE_DENSITY),
    ]
}

fn grid_for(spacing: [f64; 3]) -> GridSpec {
    let dims = [0, 1, 2].map(|a| (FOV_MM / spacing[a]).round() as usize);
    GridSpec { dims, spacing, origin: [0.0; 3], background_hu: -1000.0 }
}

impl PhantomSpec {
    /// Reference acquisition: 11 scans at 2 s, aorta peak at scan 8 and PCAT
    /// rising about 22 HU by the end of the series.
    pub fn baseline() -> Self {
        Self::baseline_with_spacing([0.5, 0.5, 1.0])
    }

    /// Same layout resampled on another grid (the field of view is fixed).
    pub fn baseline_with_spacing(spacing: [f64; 3]) -> Self {
        let grid = grid_for(spacing);
        let z_hi = (grid.dims[2] as f64 - 0.5) * spacing[2];
        PhantomSpec {
            grid,
            aif: AifParams { amplitude: 170.0, arrival_s: 2.0, time_to_peak_s: 14.0, alpha: 3.0 },
            scans: ScanSchedule { count: 11, interval_s: 2.0, start_s: 0.0 },
            noise: NoiseSpec { sigma_hu: 0.0, seed: 1 },
            compartments: layout(z_hi),
        }
    }

    /// Baseline layout with the PCAT baseline spread uniformly over the whole
    /// standard fat window.
    pub fn uniform_fat() -> Self {
        let mut spec = Self::baseline();
        let pcat = spec.compartment_mut(Label::Pcat).expect("baseline preset has PCAT");
        pcat.baseline_hu = -110.0;
        pcat.baseline_spread_hu = 160.0;
        spec
    }

    /// Proximal and distal fat around the vessel; the distal half sees a
    /// delayed, damped input. Tissue washout gives both curves an interior peak.
    pub fn stenosis() -> Self {
        let mut spec = Self::baseline();
        spec.aif = AifParams { amplitude: 300.0, arrival_s: 1.0, time_to_peak_s: 5.0, alpha: 3.0 };
        let split = LAD_EXTENT_MM[0] + STENOSIS_SPLIT_MM;
        let pos = spec.compartments.iter().position(|c| c.label == Label::Pcat).expect("PCAT");
        let template = spec.compartments.remove(pos);
        let prox = CompartmentSpec {
            label: Label::PcatProximal,
            geometry: lad_tube([LAD_EXTENT_MM[0], split]),
            mbf: 100.0,
            washout_per_s: 0.15,
            ..template.clone()
        };
        let dist = CompartmentSpec {
            label: Label::PcatDistal,
            geometry: lad_tube([split, LAD_EXTENT_MM[1]]),
            delay_s: 2.0,
            amp_scale: 0.75,
            ..prox.clone()
        };
        spec.compartments.insert(pos, dist);
        spec.compartments.insert(pos, prox);
        spec
    }

    /// No contrast uptake anywhere: every scan equals P1.
    pub fn flow_free() -> Self {
        let mut spec = Self::baseline();
        for c in &mut spec.compartments {
            c.mbf = 0.0;
            if c.label.is_blood_pool() {
                // Blood pool follows the input directly; keep it but make it tiny.
                c.amp_scale = 1e-9;
            }
        }
        spec
    }

    pub fn with_noise(mut self, sigma_hu: f64, seed: u64) -> Self {
        self.noise = NoiseSpec { sigma_hu, seed };
        self
    }

    /// Looks up a preset by name.
    pub fn preset(name: &str) -> Option<Self> {
        Some(match name {
            "baseline" => Self::baseline(),
            "baseline-128" => Self::baseline_with_spacing([0.375; 3]),
            "uniform-fat" => Self::uniform_fat(),
            "stenosis" => Self::stenosis(),
            "flow-free" => Self::flow_free(),
            _ => return None,
        })
    }

    pub const PRESETS: [&'static str; 5] = ["baseline", "baseline-128", "uniform-fat", "stenosis", "flow-free"];
}
