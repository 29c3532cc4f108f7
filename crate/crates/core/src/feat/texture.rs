//! Gray-level texture matrices on a discretized ROI.
//!
//! Inputs are a box of bin indices (`0` = outside the ROI, `1..=ng` inside).
//! Neighbours outside the ROI are ignored throughout.

use crate::error::{Error, Result};

/// The 13 unique 3D offsets of the 26-neighbourhood.
pub const GLCM_DIRECTIONS: [[isize; 3]; 13] = [
    [1, 0, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 1, 0],
    [1, -1, 0],
    [1, 0, 1],
    [1, 0, -1],
    [0, 1, 1],
    [0, 1, -1],
    [1, 1, 1],
    [1, 1, -1],
    [1, -1, 1],
    [1, -1, -1],
];

/// Maximum dependence size with a 26-neighbourhood.
pub const MAX_DEPENDENCE: usize = 27;

#[derive(Debug, Clone, PartialEq)]
pub struct TextureMatrices {
    pub ng: usize,
    /// Mean of the symmetric, normalized per-direction co-occurrence matrices
    /// (row-major `ng x ng`); `None` when no direction has a voxel pair.
    pub glcm: Option<Vec<f64>>,
    /// Dependence counts, row-major `ng x 27` (gray level, dependence size).
    pub gldm: Vec<usize>,
    pub gldm_voxels: usize,
    /// Zone counts, row-major `ng x max_zone_size` (gray level, zone size).
    pub glszm: Vec<usize>,
    pub max_zone_size: usize,
    pub zones: usize,
}

#[inline]
fn offset(dims: [usize; 3], i: usize, j: usize, k: usize, d: [isize; 3]) -> Option<usize> {
    let ii = i as isize + d[0];
    let jj = j as isize + d[1];
    let kk = k as isize + d[2];
    if ii < 0 || jj < 0 || kk < 0 || ii >= dims[0] as isize || jj >= dims[1] as isize || kk >= dims[2] as isize {
        return None;
    }
    Some(ii as usize + dims[0] * (jj as usize + dims[1] * kk as usize))
}

fn coords(dims: [usize; 3], idx: usize) -> (usize, usize, usize) {
    (idx % dims[0], (idx / dims[0]) % dims[1], idx / (dims[0] * dims[1]))
}

fn neighbours26() -> impl Iterator<Item = [isize; 3]> {
    (-1..=1).flat_map(|dz| (-1..=1).flat_map(move |dy| (-1..=1).map(move |dx| [dx, dy, dz])))
        .filter(|d| *d != [0, 0, 0])
}

pub fn glcm(dims: [usize; 3], levels: &[u16], ng: usize) -> Option<Vec<f64>> {
    let mut mean = vec![0.0; ng * ng];
    let mut used = 0usize;
    let mut counts = vec![0usize; ng * ng];
    for d in GLCM_DIRECTIONS {
        counts.iter_mut().for_each(|c| *c = 0);
        let mut pairs = 0usize;
        for (idx, &a) in levels.iter().enumerate() {
            if a == 0 {
                continue;
            }
            let (i, j, k) = coords(dims, idx);
            if let Some(n) = offset(dims, i, j, k, d) {
                let b = levels[n];
                if b != 0 {
                    let (a, b) = (a as usize - 1, b as usize - 1);
                    counts[a * ng + b] += 1;
                    counts[b * ng + a] += 1;
                    pairs += 2;
                }
            }
        }
        if pairs > 0 {
            used += 1;
            for (m, &c) in mean.iter_mut().zip(&counts) {
                *m += c as f64 / pairs as f64;
            }
        }
    }
    (used > 0).then(|| mean.into_iter().map(|m| m / used as f64).collect())
}

/// Dependence matrix with tolerance 0: the dependence size of a voxel is
/// one plus the number of 26-neighbours in the ROI at the same level.
pub fn gldm(dims: [usize; 3], levels: &[u16], ng: usize) -> (Vec<usize>, usize) {
    let mut m = vec![0usize; ng * MAX_DEPENDENCE];
    let mut n = 0;
    for (idx, &a) in levels.iter().enumerate() {
        if a == 0 {
            continue;
        }
        let (i, j, k) = coords(dims, idx);
        let dep = 1 + neighbours26()
            .filter_map(|d| offset(dims, i, j, k, d))
            .filter(|&nb| levels[nb] == a)
            .count();
        m[(a as usize - 1) * MAX_DEPENDENCE + dep - 1] += 1;
        n += 1;
    }
    (m, n)
}

/// Size-zone matrix over 26-connected zones of equal level.
pub fn glszm(dims: [usize; 3], levels: &[u16], ng: usize) -> (Vec<usize>, usize, usize) {
    let mut seen = vec![false; levels.len()];
    let mut zones: Vec<(usize, usize)> = Vec::new();
    let mut stack = Vec::new();
    for start in 0..levels.len() {
        let a = levels[start];
        if a == 0 || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut size = 0;
        while let Some(idx) = stack.pop() {
            size += 1;
            let (i, j, k) = coords(dims, idx);
            for d in neighbours26() {
                if let Some(nb) = offset(dims, i, j, k, d) {
                    if !seen[nb] && levels[nb] == a {
                        seen[nb] = true;
                        stack.push(nb);
                    }
                }
            }
        }
        zones.push((a as usize, size));
    }
    let max_size = zones.iter().map(|z| z.1).max().unwrap_or(0);
    let mut m = vec![0usize; ng * max_size];
    for &(a, s) in &zones {
        m[(a - 1) * max_size + s - 1] += 1;
    }
    (m, max_size, zones.len())
}

pub fn texture_matrices(dims: [usize; 3], levels: &[u16], ng: usize) -> Result<TextureMatrices> {
    if levels.len() != dims[0] * dims[1] * dims[2] {
        return Err(Error::invalid("level box does not match dims"));
    }
    if levels.iter().any(|&l| l as usize > ng) {
        return Err(Error::invalid("level exceeds gray-level count"));
    }
    let (gldm, gldm_voxels) = gldm(dims, levels, ng);
    if gldm_voxels == 0 {
        return Err(Error::empty("texture ROI"));
    }
    let (glszm, max_zone_size, zones) = glszm(dims, levels, ng);
    Ok(TextureMatrices { ng, glcm: glcm(dims, levels, ng), gldm, gldm_voxels, glszm, max_zone_size, zones })
}

fn idmn_weight(i: usize, j: usize, ng: usize) -> f64 {
    let d = i as f64 - j as f64;
    1.0 / (1.0 + d * d / (ng * ng) as f64)
}

impl TextureMatrices {
    /// Inverse difference moment normalized of the co-occurrence matrix.
    pub fn glcm_idmn(&self) -> Option<f64> {
        let p = self.glcm.as_ref()?;
        let ng = self.ng;
        let mut s = 0.0;
        for i in 0..ng {
            for j in 0..ng {
                s += p[i * ng + j] * idmn_weight(i, j, ng);
            }
        }
        Some(s)
    }

    /// IDMN evaluated on the normalized dependence matrix with gray level
    /// on one axis and dependence size (both 1-based) on the other.
    pub fn gldm_idmn(&self) -> f64 {
        let n = self.gldm_voxels as f64;
        let mut s = 0.0;
        for i in 0..self.ng {
            for j in 0..MAX_DEPENDENCE {
                let c = self.gldm[i * MAX_DEPENDENCE + j];
                if c > 0 {
                    s += c as f64 / n * idmn_weight(i + 1, j + 1, self.ng);
                }
            }
        }
        s
    }

    pub fn gldm_dnn(&self) -> f64 {
        let n = self.gldm_voxels as f64;
        let mut s = 0.0;
        for j in 0..MAX_DEPENDENCE {
            let col: usize = (0..self.ng).map(|i| self.gldm[i * MAX_DEPENDENCE + j]).sum();
            s += (col as f64).powi(2);
        }
        s / (n * n)
    }

    pub fn glszm_sznn(&self) -> f64 {
        let nz = self.zones as f64;
        let mut s = 0.0;
        for j in 0..self.max_zone_size {
            let col: usize = (0..self.ng).map(|i| self.glszm[i * self.max_zone_size + j]).sum();
            s += (col as f64).powi(2);
        }
        s / (nz * nz)
    }
}

pub const TEXTURE_NAMES: [&str; 4] = [
    "glcm-Idmn",
    "gldm-DependenceNonUniformityNormalized",
    "gldm-Idmn",
    "glszm-SizeZoneNonUniformityNormalized",
];

/// Texture values in [`TEXTURE_NAMES`] order.
pub fn texture_features(mats: &TextureMatrices) -> Vec<(&'static str, Option<f64>)> {
    vec![
        (TEXTURE_NAMES[0], mats.glcm_idmn()),
        (TEXTURE_NAMES[1], Some(mats.gldm_dnn())),
        (TEXTURE_NAMES[2], Some(mats.gldm_idmn())),
        (TEXTURE_NAMES[3], Some(mats.glszm_sznn())),
    ]
}
