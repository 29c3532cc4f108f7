//! Volumes, dynamic series and label masks.
//!
//! All grids use an x-fastest layout: the linear index of voxel `(i, j, k)` is
//! `i + nx * (j + ny * k)`. Voxel `(i, j, k)` is centred at
//! `origin + (i, j, k) * spacing` in millimetres.

mod io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{read_mask, read_series, read_volume, write_mask, write_series, write_volume};

/// Shared sampling geometry of volumes and masks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

impl Grid {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        if dims.iter().any(|&n| n == 0) {
            return Err(Error::invalid(format!("dims must all be >= 1, got {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::invalid(format!("spacing must be finite and > 0, got {spacing:?}")));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::invalid(format!("origin must be finite, got {origin:?}")));
        }
        Ok(Grid { dims, spacing, origin })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let [nx, ny, _] = self.dims;
        (idx % nx, (idx / nx) % ny, idx / (nx * ny))
    }

    /// Physical centre of a voxel in mm.
    #[inline]
    pub fn position(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        ]
    }

    #[inline]
    pub fn position_of(&self, idx: usize) -> [f64; 3] {
        let (i, j, k) = self.coords(idx);
        self.position(i, j, k)
    }

    /// Voxel volume in mm³.
    pub fn voxel_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    /// In-plane voxel area in mm².
    pub fn axial_area(&self) -> f64 {
        self.spacing[0] * self.spacing[1]
    }

    pub fn slice_len(&self) -> usize {
        self.dims[0] * self.dims[1]
    }

    /// Nearest slice index for a physical z coordinate, if inside the grid.
    pub fn slice_of(&self, z: f64) -> Option<usize> {
        let k = ((z - self.origin[2]) / self.spacing[2]).round();
        (k >= 0.0 && (k as usize) < self.dims[2]).then_some(k as usize)
    }

    pub fn ensure_same(&self, other: &Grid, what: &str) -> Result<()> {
        if self != other {
            return Err(Error::GeometryMismatch(format!(
                "{what}: {:?}/{:?}/{:?} vs {:?}/{:?}/{:?}",
                self.dims, self.spacing, self.origin, other.dims, other.spacing, other.origin
            )));
        }
        Ok(())
    }
}

/// A scalar HU volume.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeGrid {
    grid: Grid,
    values: Vec<f32>,
    time_s: Option<f64>,
}

impl VolumeGrid {
    pub fn new(grid: Grid, values: Vec<f32>, time_s: Option<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::invalid(format!(
                "volume has {} values but dims {:?} need {}",
                values.len(),
                grid.dims,
                grid.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value at voxel {pos}")));
        }
        if let Some(t) = time_s {
            if !t.is_finite() {
                return Err(Error::invalid("non-finite acquisition time"));
            }
        }
        Ok(VolumeGrid { grid, values, time_s })
    }

    pub fn filled(grid: Grid, value: f32) -> Self {
        VolumeGrid { grid, values: vec![value; grid.len()], time_s: None }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn time_s(&self) -> Option<f64> {
        self.time_s
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.time_s = Some(t);
        self
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f32 {
        self.values[self.grid.index(i, j, k)]
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    /// Rebuild with new values on the same geometry and time.
    pub fn map_values(&self, values: Vec<f32>) -> Result<Self> {
        VolumeGrid::new(self.grid, values, self.time_s)
    }
}

/// Time-ordered sequence of co-registered volumes.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicSeries {
    volumes: Vec<VolumeGrid>,
    times_s: Vec<f64>,
}

impl DynamicSeries {
    /// Volume time tags are overwritten with `times_s`.
    pub fn new(volumes: Vec<VolumeGrid>, times_s: Vec<f64>) -> Result<Self> {
        if volumes.is_empty() {
            return Err(Error::invalid("series needs at least one volume"));
        }
        if volumes.len() != times_s.len() {
            return Err(Error::invalid(format!(
                "{} volumes but {} times",
                volumes.len(),
                times_s.len()
            )));
        }
        let grid = *volumes[0].grid();
        for (k, v) in volumes.iter().enumerate().skip(1) {
            grid.ensure_same(v.grid(), &format!("scan {k} vs scan 0"))?;
        }
        if times_s.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("non-finite scan time"));
        }
        for (k, w) in times_s.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(Error::NonIncreasingTimes(format!(
                    "scan {} at {} s is not after scan {} at {} s",
                    k + 1,
                    w[1],
                    k,
                    w[0]
                )));
            }
        }
        let volumes = volumes
            .into_iter()
            .zip(&times_s)
            .map(|(v, &t)| v.with_time(t))
            .collect();
        Ok(DynamicSeries { volumes, times_s })
    }

    pub fn len(&self) -> usize {
        self.volumes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.volumes.is_empty()
    }

    pub fn grid(&self) -> &Grid {
        self.volumes[0].grid()
    }

    pub fn volumes(&self) -> &[VolumeGrid] {
        &self.volumes
    }

    pub fn volume(&self, k: usize) -> &VolumeGrid {
        &self.volumes[k]
    }

    pub fn times(&self) -> &[f64] {
        &self.times_s
    }

    pub fn into_volumes(self) -> Vec<VolumeGrid> {
        self.volumes
    }
}

/// Tissue label codes stored in [`LabelMask`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Label {
    #[serde(rename = "BG")]
    Background = 0,
    #[serde(rename = "MYO")]
    Myocardium = 1,
    #[serde(rename = "AORTA")]
    Aorta = 2,
    #[serde(rename = "LUMEN_LAD")]
    LumenLad = 3,
    #[serde(rename = "LUMEN_RCA")]
    LumenRca = 4,
    #[serde(rename = "SUB")]
    Subcutaneous = 5,
    #[serde(rename = "PAT")]
    Paracardial = 6,
    #[serde(rename = "EAT")]
    Epicardial = 7,
    #[serde(rename = "PAAT")]
    Periaortic = 8,
    #[serde(rename = "PCAT")]
    Pcat = 9,
    #[serde(rename = "PCAT_PROX")]
    PcatProximal = 10,
    #[serde(rename = "PCAT_DIST")]
    PcatDistal = 11,
    #[serde(rename = "EAT_REMOTE")]
    EatRemote = 12,
}

impl Label {
    pub const ALL: [Label; 13] = [
        Label::Background,
        Label::Myocardium,
        Label::Aorta,
        Label::LumenLad,
        Label::LumenRca,
        Label::Subcutaneous,
        Label::Paracardial,
        Label::Epicardial,
        Label::Periaortic,
        Label::Pcat,
        Label::PcatProximal,
        Label::PcatDistal,
        Label::EatRemote,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Label> {
        Label::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Background => "BG",
            Label::Myocardium => "MYO",
            Label::Aorta => "AORTA",
            Label::LumenLad => "LUMEN_LAD",
            Label::LumenRca => "LUMEN_RCA",
            Label::Subcutaneous => "SUB",
            Label::Paracardial => "PAT",
            Label::Epicardial => "EAT",
            Label::Periaortic => "PAAT",
            Label::Pcat => "PCAT",
            Label::PcatProximal => "PCAT_PROX",
            Label::PcatDistal => "PCAT_DIST",
            Label::EatRemote => "EAT_REMOTE",
        }
    }

    pub fn from_name(name: &str) -> Option<Label> {
        Label::ALL.iter().copied().find(|l| l.name().eq_ignore_ascii_case(name))
    }

    /// Contrast-filled compartments that follow the arterial input directly.
    pub fn is_blood_pool(self) -> bool {
        matches!(self, Label::Aorta | Label::LumenLad | Label::LumenRca)
    }

    pub fn is_lumen(self) -> bool {
        matches!(self, Label::LumenLad | Label::LumenRca)
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One label code per voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMask {
    grid: Grid,
    labels: Vec<u8>,
}

impl LabelMask {
    pub fn new(grid: Grid, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != grid.len() {
            return Err(Error::invalid(format!(
                "mask has {} labels but dims {:?} need {}",
                labels.len(),
                grid.dims,
                grid.len()
            )));
        }
        if let Some(pos) = labels.iter().position(|&c| Label::from_code(c).is_none()) {
            return Err(Error::invalid(format!("unknown label code {} at voxel {pos}", labels[pos])));
        }
        Ok(LabelMask { grid, labels })
    }

    pub fn empty(grid: Grid) -> Self {
        LabelMask { grid, labels: vec![0; grid.len()] }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, idx: usize) -> Label {
        // Codes are validated on construction and by `set`.
        Label::from_code(self.labels[idx]).unwrap_or(Label::Background)
    }

    #[inline]
    pub fn is(&self, idx: usize, label: Label) -> bool {
        self.labels[idx] == label.code()
    }

    #[inline]
    pub fn set(&mut self, idx: usize, label: Label) {
        self.labels[idx] = label.code();
    }

    pub fn count(&self, label: Label) -> usize {
        let c = label.code();
        self.labels.iter().filter(|&&l| l == c).count()
    }

    /// Linear indices of voxels carrying `label`, ascending.
    pub fn indices(&self, label: Label) -> Vec<usize> {
        let c = label.code();
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == c).then_some(i))
            .collect()
    }

    /// Mask holding only `label` (everything else background).
    pub fn only(&self, label: Label) -> LabelMask {
        let c = label.code();
        let labels = self.labels.iter().map(|&l| if l == c { c } else { 0 }).collect();
        LabelMask { grid: self.grid, labels }
    }

    /// Replace every non-background code with `label`.
    pub fn relabel_all(&self, label: Label) -> LabelMask {
        let c = label.code();
        let labels = self.labels.iter().map(|&l| if l != 0 { c } else { 0 }).collect();
        LabelMask { grid: self.grid, labels }
    }

    pub fn present_labels(&self) -> Vec<Label> {
        let mut seen = [false; 256];
        for &l in &self.labels {
            seen[l as usize] = true;
        }
        Label::ALL.iter().copied().filter(|l| *l != Label::Background && seen[l.code() as usize]).collect()
    }
}

/// Mean, population standard deviation and voxel count of a region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionStats {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

/// Mean and spread of `v` over the voxels of `m` carrying `code`.
///
/// The standard deviation uses the population denominator `n`.
pub fn mask_stats(v: &VolumeGrid, m: &LabelMask, code: Label) -> Result<RegionStats> {
    v.grid().ensure_same(m.grid(), "mask_stats")?;
    let c = code.code();
    stats_of(
        m.labels().iter().zip(v.values()).filter(|(&l, _)| l == c).map(|(_, &x)| x as f64),
    )
    .ok_or_else(|| Error::empty(format!("no voxels labelled {code}")))
}

/// Two-pass mean/population-stdev in iteration order; `None` when empty.
pub(crate) fn stats_of<I>(values: I) -> Option<RegionStats>
where
    I: Iterator<Item = f64> + Clone,
{
    let (mut n, mut sum) = (0usize, 0.0f64);
    for x in values.clone() {
        n += 1;
        sum += x;
    }
    if n == 0 {
        return None;
    }
    let mean = sum / n as f64;
    let ss: f64 = values.map(|x| (x - mean) * (x - mean)).sum();
    Some(RegionStats { mean, std: (ss / n as f64).sqrt(), count: n })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: [usize; 3]) -> Grid {
        Grid::new(n, [1.0, 1.0, 1.0], [0.0; 3]).unwrap()
    }

    #[test]
    fn grid_rejects_bad_geometry() {
        assert!(Grid::new([0, 1, 1], [1.0; 3], [0.0; 3]).is_err());
        assert!(Grid::new([1, 1, 1], [1.0, 0.0, 1.0], [0.0; 3]).is_err());
        assert!(Grid::new([1, 1, 1], [1.0, -1.0, 1.0], [0.0; 3]).is_err());
    }

    #[test]
    fn index_roundtrip() {
        let g = Grid::new([3, 4, 5], [0.5, 0.5, 1.0], [1.0, 2.0, 3.0]).unwrap();
        for idx in 0..g.len() {
            let (i, j, k) = g.coords(idx);
            assert_eq!(g.index(i, j, k), idx);
        }
        assert_eq!(g.position(2, 3, 4), [2.0, 3.5, 7.0]);
    }

    #[test]
    fn volume_rejects_non_finite() {
        let g = grid([2, 1, 1]);
        assert!(VolumeGrid::new(g, vec![0.0, f32::NAN], None).is_err());
        assert!(VolumeGrid::new(g, vec![0.0], None).is_err());
    }

    #[test]
    fn mask_stats_uniform_region() {
        let g = grid([4, 4, 2]);
        let v = VolumeGrid::filled(g, -75.0);
        let mut m = LabelMask::empty(g);
        for idx in 0..10 {
            m.set(idx, Label::Pcat);
        }
        let s = mask_stats(&v, &m, Label::Pcat).unwrap();
        assert_eq!(s, RegionStats { mean: -75.0, std: 0.0, count: 10 });
    }

    #[test]
    fn mask_stats_two_voxels() {
        let g = grid([2, 1, 1]);
        let v = VolumeGrid::new(g, vec![-80.0, -70.0], None).unwrap();
        let m = LabelMask::new(g, vec![9, 9]).unwrap();
        let s = mask_stats(&v, &m, Label::Pcat).unwrap();
        assert_eq!((s.mean, s.std, s.count), (-75.0, 5.0, 2));
    }

    #[test]
    fn mask_stats_absent_code() {
        let g = grid([2, 1, 1]);
        let v = VolumeGrid::filled(g, 0.0);
        let m = LabelMask::empty(g);
        let err = mask_stats(&v, &m, Label::Pcat).unwrap_err();
        assert!(err.to_string().contains("empty region"));
    }

    #[test]
    fn mask_rejects_unknown_code() {
        assert!(LabelMask::new(grid([1, 1, 1]), vec![200]).is_err());
    }

    #[test]
    fn series_rejects_repeated_time() {
        let g = grid([1, 1, 1]);
        let vols = vec![VolumeGrid::filled(g, 0.0); 3];
        let err = DynamicSeries::new(vols, vec![0.0, 2.0, 2.0]).unwrap_err();
        assert!(err.to_string().contains("non-increasing times"));
    }

    #[test]
    fn series_rejects_geometry_mismatch() {
        let a = VolumeGrid::filled(grid([1, 1, 1]), 0.0);
        let b = VolumeGrid::filled(grid([2, 1, 1]), 0.0);
        assert!(matches!(
            DynamicSeries::new(vec![a, b], vec![0.0, 1.0]),
            Err(Error::GeometryMismatch(_))
        ));
    }

    #[test]
    fn label_names_roundtrip() {
        for l in Label::ALL {
            assert_eq!(Label::from_name(l.name()), Some(l));
            assert_eq!(Label::from_code(l.code()), Some(l));
        }
    }
}
