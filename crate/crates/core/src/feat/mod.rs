//! Hand-crafted and radiomics features of a PCAT voxel set, and their drift
//! over the acquisition.
//!
//! The ROI of a mask is every non-background voxel. Texture matrices use 16
//! equal-width bins over the ROI's own value range.

mod discretize;
mod texture;
mod wavelet;

use nalgebra::{Matrix3, SymmetricEigen};

use crate::error::{Error, Result};
use crate::tac::PeakInfo;
use crate::volgrid::{Grid, LabelMask, VolumeGrid};

pub use discretize::{discretize, DiscretizedRoi, DEFAULT_BINS};
pub use texture::{
    glcm, gldm, glszm, texture_features, texture_matrices, TextureMatrices, GLCM_DIRECTIONS, MAX_DEPENDENCE,
    TEXTURE_NAMES,
};
pub use wavelet::{wavelet3d, BBox, Subband, SUBBAND_NAMES};

/// Voxel set a feature is computed over.
#[derive(Debug, Clone, PartialEq)]
pub struct Roi {
    grid: Grid,
    indices: Vec<usize>,
}

impl Roi {
    pub fn from_mask(m: &LabelMask) -> Result<Self> {
        let indices: Vec<usize> = (0..m.labels().len()).filter(|&i| m.labels()[i] != 0).collect();
        if indices.is_empty() {
            return Err(Error::empty("feature ROI"));
        }
        Ok(Roi { grid: *m.grid(), indices })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn values(&self, v: &VolumeGrid) -> Vec<f64> {
        self.indices.iter().map(|&i| v.values()[i] as f64).collect()
    }

    /// Tight bounding box.
    pub fn bbox(&self) -> BBox {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        for &idx in &self.indices {
            let (i, j, k) = self.grid.coords(idx);
            for (a, c) in [i, j, k].into_iter().enumerate() {
                lo[a] = lo[a].min(c);
                hi[a] = hi[a].max(c + 1);
            }
        }
        BBox { lo, hi }
    }

    /// Box of bin levels (0 outside the ROI) for values given in ROI order.
    fn level_box(&self, bbox: &BBox, bins: &[u16]) -> Vec<u16> {
        let mut out = vec![0u16; bbox.len()];
        for (&idx, &b) in self.indices.iter().zip(bins) {
            let (i, j, k) = self.grid.coords(idx);
            out[bbox.local_index(i, j, k)] = b;
        }
        out
    }
}

/// Ordered named values; `None` marks an undefined feature.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub scan: Option<usize>,
    pub entries: Vec<(String, Option<f64>)>,
}

impl FeatureVector {
    pub fn get(&self, name: &str) -> Option<Option<f64>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|(n, _)| n.as_str()).collect()
    }
}

struct Moments {
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
    constant: bool,
}

fn moments(values: &[f64]) -> Moments {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in values {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let constant = values.iter().all(|&x| x == values[0]);
    Moments { mean, m2: m2 / n, m3: m3 / n, m4: m4 / n, constant }
}

impl Moments {
    fn skewness(&self) -> Option<f64> {
        (!self.constant && self.m2 > 0.0).then(|| self.m3 / self.m2.powf(1.5))
    }

    fn kurtosis(&self) -> Option<f64> {
        (!self.constant && self.m2 > 0.0).then(|| self.m4 / (self.m2 * self.m2))
    }
}

pub const HANDCRAFTED_NAMES: [&str; 13] = [
    "mean",
    "std",
    "skewness",
    "kurtosis",
    "entropy",
    "fraction_-190_-110",
    "fraction_-110_-70",
    "fraction_-70_-30",
    "voxel_count",
    "volume_cm3",
    "axial_area_mean",
    "axial_area_std",
    "axial_area_max",
];

/// Histogram moments, 16-bin entropy, HU-range fractions and size/area
/// statistics of the ROI.
pub fn handcrafted(v: &VolumeGrid, pcat: &LabelMask) -> Result<Vec<(&'static str, Option<f64>)>> {
    v.grid().ensure_same(pcat.grid(), "handcrafted")?;
    let roi = Roi::from_mask(pcat)?;
    let values = roi.values(v);
    let n = values.len() as f64;
    let mo = moments(&values);
    let hist = discretize(&values, DEFAULT_BINS)?.histogram();
    let entropy = -hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.log2()
        })
        .sum::<f64>();
    let frac = |lo: f64, hi: f64, closed: bool| {
        values.iter().filter(|&&x| x >= lo && (x < hi || (closed && x == hi))).count() as f64 / n
    };
    let g = roi.grid();
    let mut per_slice = vec![0usize; g.dims[2]];
    for &idx in roi.indices() {
        per_slice[g.coords(idx).2] += 1;
    }
    let areas: Vec<f64> = per_slice.iter().filter(|&&c| c > 0).map(|&c| c as f64 * g.axial_area()).collect();
    let na = areas.len() as f64;
    let area_mean = areas.iter().sum::<f64>() / na;
    let area_std = (areas.iter().map(|a| (a - area_mean).powi(2)).sum::<f64>() / na).sqrt();
    let area_max = areas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let vals = [
        Some(mo.mean),
        Some(mo.m2.sqrt()),
        mo.skewness(),
        mo.kurtosis(),
        Some(entropy),
        Some(frac(-190.0, -110.0, false)),
        Some(frac(-110.0, -70.0, false)),
        Some(frac(-70.0, -30.0, true)),
        Some(n),
        Some(n * g.voxel_volume() / 1000.0),
        Some(area_mean),
        Some(area_std),
        Some(area_max),
    ];
    Ok(HANDCRAFTED_NAMES.iter().copied().zip(vals).collect())
}

/// Relative eigenvalue magnitude treated as zero by [`shape_features`].
pub const EIGEN_REL_FLOOR: f64 = 1e-12;

/// `(elongation, flatness)` from the eigenvalues of the physical-coordinate
/// covariance. Undefined only when the ROI has no spatial extent.
pub fn shape_features(pcat: &LabelMask) -> Result<(Option<f64>, Option<f64>)> {
    let roi = Roi::from_mask(pcat)?;
    let g = roi.grid();
    let n = roi.len() as f64;
    let mut mean = [0.0; 3];
    for &idx in roi.indices() {
        let p = g.position_of(idx);
        for a in 0..3 {
            mean[a] += p[a];
        }
    }
    let mean = mean.map(|m| m / n);
    let mut cov = Matrix3::<f64>::zeros();
    for &idx in roi.indices() {
        let p = g.position_of(idx);
        let d = [p[0] - mean[0], p[1] - mean[1], p[2] - mean[2]];
        for r in 0..3 {
            for c in 0..3 {
                cov[(r, c)] += d[r] * d[c];
            }
        }
    }
    cov /= n;
    let mut ev: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    // Eigenvalues at round-off level of the largest are zero; planar ROIs
    // would otherwise get a flatness of about 1e-8.
    let floor = ev[0] * EIGEN_REL_FLOOR;
    ev.iter_mut().for_each(|l| {
        if *l <= floor {
            *l = 0.0;
        }
    });
    if !(ev[0] > 0.0) {
        return Ok((None, None));
    }
    Ok((Some((ev[1] / ev[0]).sqrt()), Some((ev[2] / ev[0]).sqrt())))
}

pub const RADIOMICS_NAMES: [&str; 8] = [
    "original-shape-Elongation",
    "original-shape-Flatness",
    "wavelet-LLH-firstorder-Mean",
    "wavelet-LHL-firstorder-Kurtosis",
    "wavelet-LLL-gldm-Idmn",
    "wavelet-HHH-glszm-SizeZoneNonUniformityNormalized",
    "original-glcm-Idmn",
    "original-gldm-DependenceNonUniformityNormalized",
];

/// Matrices for values in ROI order, or `None` if the values are constant.
fn roi_matrices(roi: &Roi, bbox: &BBox, values: &[f64]) -> Result<Option<TextureMatrices>> {
    let d = discretize(values, DEFAULT_BINS)?;
    if d.degenerate {
        return Ok(None);
    }
    let levels = roi.level_box(bbox, &d.bins);
    texture_matrices(bbox.dims(), &levels, DEFAULT_BINS).map(Some)
}

/// The eight radiomics values. Wavelet subbands are computed on the ROI box
/// grown by one voxel on the upper side, so the forward Haar neighbour of an
/// ROI voxel is real data wherever the volume has it.
pub fn radiomics8(v: &VolumeGrid, pcat: &LabelMask) -> Result<Vec<(&'static str, Option<f64>)>> {
    v.grid().ensure_same(pcat.grid(), "radiomics8")?;
    let roi = Roi::from_mask(pcat)?;
    let (elong, flat) = shape_features(pcat)?;
    let wbox = roi.bbox().grow_upper(1, v.grid().dims);
    let bands = wavelet3d(v, wbox)?;
    let band_values = |name: &str| -> Vec<f64> {
        let b = bands.iter().find(|b| b.name == name).expect("subband");
        roi.indices()
            .iter()
            .map(|&idx| {
                let (i, j, k) = roi.grid().coords(idx);
                b.data[wbox.local_index(i, j, k)]
            })
            .collect()
    };
    let llh = band_values("LLH");
    let lhl = moments(&band_values("LHL"));
    let lll = roi_matrices(&roi, &wbox, &band_values("LLL"))?;
    let hhh = roi_matrices(&roi, &wbox, &band_values("HHH"))?;
    let orig = roi_matrices(&roi, &wbox, &roi.values(v))?;
    let vals = [
        elong,
        flat,
        Some(llh.iter().sum::<f64>() / llh.len() as f64),
        lhl.kurtosis(),
        lll.as_ref().map(TextureMatrices::gldm_idmn),
        hhh.as_ref().map(TextureMatrices::glszm_sznn),
        orig.as_ref().and_then(TextureMatrices::glcm_idmn),
        orig.as_ref().map(TextureMatrices::gldm_dnn),
    ];
    Ok(RADIOMICS_NAMES.iter().copied().zip(vals).collect())
}

/// All 21 features (13 hand-crafted, then 8 radiomics).
pub fn extract_features(v: &VolumeGrid, pcat: &LabelMask, scan: Option<usize>) -> Result<FeatureVector> {
    let mut entries: Vec<(String, Option<f64>)> =
        handcrafted(v, pcat)?.into_iter().map(|(n, x)| (n.to_string(), x)).collect();
    entries.extend(radiomics8(v, pcat)?.into_iter().map(|(n, x)| (n.to_string(), x)));
    Ok(FeatureVector { scan, entries })
}

/// Percent change of each feature against P1 over the scans around Pa.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDriftTable {
    pub names: Vec<String>,
    /// Scan indices of the columns (P1 first, then Pa-4..=Pa+4 clipped).
    pub scans: Vec<usize>,
    /// `pct[f][c]`: change of feature `f` at column `c`; `None` if undefined.
    pub pct: Vec<Vec<Option<f64>>>,
    /// Largest absolute change per feature, `None` if any entry is undefined.
    pub max_abs_pct: Vec<Option<f64>>,
    /// Share of defined features whose largest change stays below 10 %.
    pub stable_fraction: Option<f64>,
}

pub const STABLE_LIMIT_PCT: f64 = 10.0;
pub const DRIFT_HALF_WIDTH: usize = 4;

pub fn drift_table(features: &[FeatureVector], peaks: &PeakInfo) -> Result<FeatureDriftTable> {
    if features.len() < 2 {
        return Err(Error::invalid("drift table needs features at two or more scans"));
    }
    let names: Vec<String> = features[0].entries.iter().map(|(n, _)| n.clone()).collect();
    for f in features {
        if f.entries.len() != names.len() || f.entries.iter().zip(&names).any(|((a, _), b)| a != b) {
            return Err(Error::invalid("feature vectors have different name sets"));
        }
    }
    let last = features.len() - 1;
    let lo = peaks.pa_index.saturating_sub(DRIFT_HALF_WIDTH);
    let hi = (peaks.pa_index + DRIFT_HALF_WIDTH).min(last);
    let mut scans = vec![0];
    scans.extend((lo..=hi).filter(|&k| k != 0));
    let mut pct = Vec::with_capacity(names.len());
    let mut max_abs = Vec::with_capacity(names.len());
    for (fi, _) in names.iter().enumerate() {
        let base = features[0].entries[fi].1;
        let row: Vec<Option<f64>> = scans
            .iter()
            .map(|&k| match (base, features[k].entries[fi].1) {
                (Some(b), Some(x)) if b.abs() >= 1e-9 => Some(100.0 * (x - b) / b.abs()),
                _ => None,
            })
            .collect();
        let m = row.iter().try_fold(0.0f64, |acc, v| v.map(|x| acc.max(x.abs())));
        pct.push(row);
        max_abs.push(m);
    }
    let defined: Vec<f64> = max_abs.iter().flatten().copied().collect();
    let stable_fraction = (!defined.is_empty())
        .then(|| defined.iter().filter(|&&m| m < STABLE_LIMIT_PCT).count() as f64 / defined.len() as f64);
    Ok(FeatureDriftTable { names, scans, pct, max_abs_pct: max_abs, stable_fraction })
}
