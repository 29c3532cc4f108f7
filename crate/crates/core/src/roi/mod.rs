//! Pericoronary region geometry.
//!
//! Disk masks are built per axial slice: the centerline is resampled finely,
//! every run of samples falling in one slice is a crossing, and the crossing
//! is represented by its sample closest to the slice centre. Membership uses
//! the in-plane distance to the nearest crossing of the voxel's slice.

mod centerline;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volgrid::{Grid, Label, LabelMask, VolumeGrid};
use crate::HuWindow;

pub use centerline::{read_centerline, write_centerline, Centerline};

/// Default arclength over which the lumen diameter and PCAT disks are taken.
pub const DEFAULT_LENGTH_MM: f64 = 40.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SliceGeometry {
    pub slice: usize,
    pub z_mm: f64,
    pub lumen_voxels: usize,
    pub area_mm2: f64,
    pub d_eff_mm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VesselGeometry {
    /// Slices crossed by the analysed centerline segment, in crossing order.
    pub slices: Vec<SliceGeometry>,
    /// Median effective diameter over slices with lumen.
    pub median_d_eff_mm: f64,
    pub length_mm: f64,
}

/// `2 * sqrt(area / pi)`.
pub fn d_eff_from_area(area_mm2: f64) -> f64 {
    2.0 * (area_mm2 / std::f64::consts::PI).sqrt()
}

/// Median with the mean-of-middle-two convention.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Crossing {
    slice: usize,
    xy: [f64; 2],
}

/// Slice crossings of the first `length_mm` of `cl`.
fn crossings(grid: &Grid, cl: &Centerline, length_mm: f64) -> Vec<Crossing> {
    let step = 0.25 * grid.spacing.iter().copied().fold(f64::INFINITY, f64::min);
    let samples = cl.resample(step, length_mm);
    let mut out: Vec<Crossing> = Vec::new();
    let mut run: Option<(usize, [f64; 3], f64)> = None;
    let centre = |k: usize| grid.origin[2] + k as f64 * grid.spacing[2];
    for p in samples {
        let slice = grid.slice_of(p[2]);
        match (slice, run) {
            (Some(k), Some((rk, _, best))) if k == rk => {
                let d = (p[2] - centre(k)).abs();
                if d < best {
                    run = Some((k, p, d));
                }
            }
            _ => {
                if let Some((rk, rp, _)) = run.take() {
                    out.push(Crossing { slice: rk, xy: [rp[0], rp[1]] });
                }
                run = slice.map(|k| (k, p, (p[2] - centre(k)).abs()));
            }
        }
    }
    if let Some((rk, rp, _)) = run {
        out.push(Crossing { slice: rk, xy: [rp[0], rp[1]] });
    }
    out
}

/// Distinct slice indices in first-crossing order.
fn distinct_slices(cs: &[Crossing]) -> Vec<usize> {
    let mut seen = Vec::new();
    for c in cs {
        if !seen.contains(&c.slice) {
            seen.push(c.slice);
        }
    }
    seen
}

/// Lumen area and effective diameter per slice over the first 40 mm.
pub fn effective_diameter(lumen: &LabelMask, cl: &Centerline) -> Result<VesselGeometry> {
    effective_diameter_over(lumen, cl, DEFAULT_LENGTH_MM)
}

/// As [`effective_diameter`] over an arbitrary leading arclength. Every voxel
/// carrying a lumen label in a crossed slice counts towards that slice's area.
pub fn effective_diameter_over(lumen: &LabelMask, cl: &Centerline, length_mm: f64) -> Result<VesselGeometry> {
    if !(length_mm > 0.0) {
        return Err(Error::invalid("length must be > 0"));
    }
    let grid = *lumen.grid();
    let cs = crossings(&grid, cl, length_mm);
    let plane = grid.slice_len();
    let mut slices = Vec::new();
    for k in distinct_slices(&cs) {
        let labels = &lumen.labels()[k * plane..(k + 1) * plane];
        let count = labels.iter().filter(|&&c| Label::from_code(c).is_some_and(Label::is_lumen)).count();
        let area = count as f64 * grid.axial_area();
        slices.push(SliceGeometry {
            slice: k,
            z_mm: grid.origin[2] + k as f64 * grid.spacing[2],
            lumen_voxels: count,
            area_mm2: area,
            d_eff_mm: d_eff_from_area(area),
        });
    }
    let with_lumen: Vec<f64> = slices.iter().filter(|s| s.lumen_voxels > 0).map(|s| s.d_eff_mm).collect();
    let median_d_eff_mm =
        median(&with_lumen).ok_or_else(|| Error::empty("no lumen voxels along the analysed centerline"))?;
    Ok(VesselGeometry { slices, median_d_eff_mm, length_mm })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PcatRegionSpec {
    /// Disk diameter in multiples of the median effective lumen diameter.
    pub diameter_factor: f64,
    pub length_mm: f64,
    pub fat_window: HuWindow,
    pub extended_window: HuWindow,
    /// Scan whose HU values gate fat-window membership for fixed TAC analyses.
    pub membership_reference: usize,
}

impl Default for PcatRegionSpec {
    fn default() -> Self {
        PcatRegionSpec {
            diameter_factor: 2.0,
            length_mm: DEFAULT_LENGTH_MM,
            fat_window: HuWindow::STANDARD,
            extended_window: HuWindow::EXTENDED,
            membership_reference: 0,
        }
    }
}

impl PcatRegionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.diameter_factor > 1.0) || !self.diameter_factor.is_finite() {
            return Err(Error::invalid("diameter_factor must be > 1"));
        }
        if !(self.length_mm > 0.0) || !self.length_mm.is_finite() {
            return Err(Error::invalid("length_mm must be > 0"));
        }
        for w in [self.fat_window, self.extended_window] {
            HuWindow::new(w.lo, w.hi)?;
        }
        Ok(())
    }

    pub fn disk_radius(&self, geom: &VesselGeometry) -> f64 {
        0.5 * self.diameter_factor * geom.median_d_eff_mm
    }
}

/// Minimum in-plane distance from each voxel of a crossed slice to that
/// slice's crossings, restricted to `radius`. Calls `f(idx, distance)`.
fn for_each_within(grid: &Grid, cs: &[Crossing], radius: f64, mut f: impl FnMut(usize, f64)) {
    let [sx, sy, _] = grid.spacing;
    let [nx, ny, _] = grid.dims;
    for k in distinct_slices(cs) {
        let here: Vec<[f64; 2]> = cs.iter().filter(|c| c.slice == k).map(|c| c.xy).collect();
        let (mut i0, mut i1, mut j0, mut j1) = (usize::MAX, 0usize, usize::MAX, 0usize);
        for xy in &here {
            let lo_i = ((xy[0] - radius - grid.origin[0]) / sx).floor().max(0.0) as usize;
            let hi_i = (((xy[0] + radius - grid.origin[0]) / sx).ceil().max(-1.0) + 1.0) as usize;
            let lo_j = ((xy[1] - radius - grid.origin[1]) / sy).floor().max(0.0) as usize;
            let hi_j = (((xy[1] + radius - grid.origin[1]) / sy).ceil().max(-1.0) + 1.0) as usize;
            i0 = i0.min(lo_i);
            i1 = i1.max(hi_i.min(nx));
            j0 = j0.min(lo_j);
            j1 = j1.max(hi_j.min(ny));
        }
        for j in j0..j1 {
            for i in i0..i1 {
                let p = grid.position(i, j, k);
                let d = here
                    .iter()
                    .map(|xy| ((p[0] - xy[0]).powi(2) + (p[1] - xy[1]).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min);
                if d <= radius {
                    f(grid.index(i, j, k), d);
                }
            }
        }
    }
}

fn is_lumen_code(code: u8) -> bool {
    Label::from_code(code).is_some_and(Label::is_lumen)
}

/// Axial disks of radius `diameter_factor * median_d_eff / 2` around the
/// first `length_mm` of the centerline, lumen voxels excluded. Disk voxels
/// carry the PCAT label.
pub fn axial_disk_mask(
    cl: &Centerline,
    geom: &VesselGeometry,
    spec: &PcatRegionSpec,
    lumen: &LabelMask,
) -> Result<LabelMask> {
    spec.validate()?;
    let grid = *lumen.grid();
    let cs = crossings(&grid, cl, spec.length_mm);
    let radius = spec.disk_radius(geom);
    let mut out = LabelMask::empty(grid);
    for_each_within(&grid, &cs, radius, |idx, _| {
        if !is_lumen_code(lumen.labels()[idx]) {
            out.set(idx, Label::Pcat);
        }
    });
    Ok(out)
}

/// Disk voxels whose HU lies in the closed window; selected voxels keep the
/// disk's label.
pub fn fat_select(v: &VolumeGrid, disks: &LabelMask, window: HuWindow) -> Result<LabelMask> {
    v.grid().ensure_same(disks.grid(), "fat_select")?;
    let labels = disks
        .labels()
        .iter()
        .zip(v.values())
        .map(|(&c, &hu)| if c != 0 && window.contains(hu as f64) { c } else { 0 })
        .collect();
    LabelMask::new(*disks.grid(), labels)
}

/// Concentric bands around the centerline, in multiples of the median
/// effective diameter: band `(a, b)` holds voxels with `a*d/2 < r <= b*d/2`
/// (a band starting at 0 also holds `r = 0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionPartition {
    pub bands: Vec<(f64, f64)>,
    /// Proximal/distal split arclength in mm.
    #[serde(default)]
    pub split_mm: Option<f64>,
}

impl RegionPartition {
    /// An inner disk out to `disk_factor` followed by `rings`.
    pub fn with_disk(disk_factor: f64, rings: &[(f64, f64)]) -> Self {
        let mut bands = vec![(0.0, disk_factor)];
        bands.extend_from_slice(rings);
        RegionPartition { bands, split_mm: None }
    }

    pub fn validate(&self, max_factor: f64) -> Result<()> {
        if self.bands.is_empty() {
            return Err(Error::invalid("partition needs at least one band"));
        }
        let mut prev = 0.0;
        for (n, &(a, b)) in self.bands.iter().enumerate() {
            if !(a >= prev) || !(b > a) || !b.is_finite() {
                return Err(Error::invalid(format!(
                    "band {n} ({a}, {b}) overlaps or is not increasing"
                )));
            }
            prev = b;
        }
        if prev > max_factor + 1e-12 {
            return Err(Error::invalid(format!("outermost band {prev} exceeds diameter factor {max_factor}")));
        }
        Ok(())
    }

    fn band_of(&self, r: f64, d: f64) -> Option<usize> {
        self.bands.iter().position(|&(a, b)| {
            let inner = 0.5 * a * d;
            let outer = 0.5 * b * d;
            (r > inner || (a == 0.0 && r >= 0.0)) && r <= outer
        })
    }
}

/// Band index map: code `n + 1` for band `n`, 0 outside every band.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMap {
    grid: Grid,
    codes: Vec<u8>,
    bands: usize,
}

impl BandMap {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    pub fn band_count(&self) -> usize {
        self.bands
    }

    pub fn count(&self, band: usize) -> usize {
        self.codes.iter().filter(|&&c| c as usize == band + 1).count()
    }

    pub fn indices(&self, band: usize) -> Vec<usize> {
        (0..self.codes.len()).filter(|&i| self.codes[i] as usize == band + 1).collect()
    }

    /// Voxels of one band as a PCAT mask.
    pub fn band_mask(&self, band: usize) -> LabelMask {
        let labels = self.codes.iter().map(|&c| if c as usize == band + 1 { Label::Pcat.code() } else { 0 }).collect();
        LabelMask::new(self.grid, labels).expect("valid codes")
    }
}

pub fn annular_partition(
    cl: &Centerline,
    geom: &VesselGeometry,
    part: &RegionPartition,
    spec: &PcatRegionSpec,
    lumen: &LabelMask,
) -> Result<BandMap> {
    spec.validate()?;
    part.validate(spec.diameter_factor)?;
    if part.bands.len() > u8::MAX as usize {
        return Err(Error::invalid("too many bands"));
    }
    let grid = *lumen.grid();
    let cs = crossings(&grid, cl, spec.length_mm);
    let d = geom.median_d_eff_mm;
    let outer = 0.5 * part.bands.last().unwrap().1 * d;
    let mut codes = vec![0u8; grid.len()];
    for_each_within(&grid, &cs, outer, |idx, r| {
        if !is_lumen_code(lumen.labels()[idx]) {
            if let Some(b) = part.band_of(r, d) {
                codes[idx] = b as u8 + 1;
            }
        }
    });
    Ok(BandMap { grid, codes, bands: part.bands.len() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteEat {
    pub mask: LabelMask,
    /// Set when no EAT voxel survives the exclusion.
    pub empty: bool,
}

pub const DEFAULT_REMOTE_FACTOR: f64 = 3.0;

/// EAT voxels farther than `exclusion_factor * median_d_eff` (3D distance)
/// from every point of every vessel centerline. Survivors are labelled
/// EAT_REMOTE.
pub fn remote_eat(
    eat: &LabelMask,
    vessels: &[(&Centerline, &VesselGeometry)],
    exclusion_factor: f64,
) -> Result<RemoteEat> {
    if !(exclusion_factor >= 0.0) {
        return Err(Error::invalid("exclusion factor must be >= 0"));
    }
    let source = eat.indices(Label::Epicardial);
    if source.is_empty() {
        return Err(Error::empty("EAT"));
    }
    let grid = *eat.grid();
    let mut out = LabelMask::empty(grid);
    let mut kept = 0usize;
    for idx in source {
        let p = grid.position_of(idx);
        let remote = vessels.iter().all(|(cl, geom)| {
            let limit = exclusion_factor * geom.median_d_eff_mm;
            cl.nearest(p).1 > limit
        });
        if remote {
            out.set(idx, Label::EatRemote);
            kept += 1;
        }
    }
    Ok(RemoteEat { mask: out, empty: kept == 0 })
}

/// Splits PCAT voxels by the arclength of their nearest centerline point:
/// below `s_star` proximal, otherwise distal.
pub fn split_prox_dist(pcat: &LabelMask, cl: &Centerline, s_star: f64) -> Result<LabelMask> {
    if !(s_star > 0.0 && s_star <= cl.length()) {
        return Err(Error::invalid(format!(
            "split arclength {s_star} outside (0, {}]",
            cl.length()
        )));
    }
    let grid = *pcat.grid();
    let mut out = LabelMask::empty(grid);
    for idx in pcat.indices(Label::Pcat) {
        let (i, _) = cl.nearest(grid.position_of(idx));
        let label = if cl.arclength()[i] < s_star { Label::PcatProximal } else { Label::PcatDistal };
        out.set(idx, label);
    }
    Ok(out)
}
