use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};
use crate::volgrid::VolumeGrid;

/// Half-open voxel box `lo..hi` per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BBox {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl BBox {
    pub fn dims(&self) -> [usize; 3] {
        [self.hi[0] - self.lo[0], self.hi[1] - self.lo[1], self.hi[2] - self.lo[2]]
    }

    pub fn len(&self) -> usize {
        let d = self.dims();
        d[0] * d[1] * d[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Position of grid voxel `(i, j, k)` inside the box, x-fastest.
    pub fn local_index(&self, i: usize, j: usize, k: usize) -> usize {
        let d = self.dims();
        (i - self.lo[0]) + d[0] * ((j - self.lo[1]) + d[1] * (k - self.lo[2]))
    }

    /// Grows the upper edge by `n` voxels where the grid allows.
    pub fn grow_upper(&self, n: usize, dims: [usize; 3]) -> BBox {
        BBox { lo: self.lo, hi: [0, 1, 2].map(|a| (self.hi[a] + n).min(dims[a])) }
    }
}

/// One subband of the undecimated transform; `name` spells the filter per
/// axis in x, y, z order.
#[derive(Debug, Clone, PartialEq)]
pub struct Subband {
    pub name: String,
    pub dims: [usize; 3],
    pub data: Vec<f64>,
}

pub const SUBBAND_NAMES: [&str; 8] = ["LLL", "LLH", "LHL", "LHH", "HLL", "HLH", "HHL", "HHH"];

/// Filters one axis: `L[i] = (x[i] + x[i+1])/√2`, `H[i] = (x[i] - x[i+1])/√2`,
/// the forward neighbour replicated at the box edge.
fn haar_axis(data: &[f64], dims: [usize; 3], axis: usize) -> (Vec<f64>, Vec<f64>) {
    let stride = match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    };
    let n = dims[axis];
    let mut lo = vec![0.0; data.len()];
    let mut hi = vec![0.0; data.len()];
    for (idx, &x) in data.iter().enumerate() {
        let pos = (idx / stride) % n;
        let next = if pos + 1 < n { data[idx + stride] } else { x };
        lo[idx] = FRAC_1_SQRT_2 * (x + next);
        hi[idx] = FRAC_1_SQRT_2 * (x - next);
    }
    (lo, hi)
}

/// Single-level stationary Haar decomposition of the box contents.
pub fn wavelet3d(v: &VolumeGrid, bbox: BBox) -> Result<Vec<Subband>> {
    let g = v.grid();
    if (0..3).any(|a| bbox.lo[a] >= bbox.hi[a] || bbox.hi[a] > g.dims[a]) {
        return Err(Error::invalid(format!("bounding box {bbox:?} invalid for dims {:?}", g.dims)));
    }
    let dims = bbox.dims();
    let mut crop = Vec::with_capacity(bbox.len());
    for k in bbox.lo[2]..bbox.hi[2] {
        for j in bbox.lo[1]..bbox.hi[1] {
            for i in bbox.lo[0]..bbox.hi[0] {
                crop.push(v.get(i, j, k) as f64);
            }
        }
    }
    let mut bands: Vec<(String, Vec<f64>)> = vec![(String::new(), crop)];
    for axis in 0..3 {
        bands = bands
            .into_iter()
            .flat_map(|(name, data)| {
                let (l, h) = haar_axis(&data, dims, axis);
                [(format!("{name}L"), l), (format!("{name}H"), h)]
            })
            .collect();
    }
    Ok(bands.into_iter().map(|(name, data)| Subband { name, dims, data }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volgrid::Grid;

    #[test]
    fn constant_volume() {
        let g = Grid::new([4, 3, 5], [1.0; 3], [0.0; 3]).unwrap();
        let v = VolumeGrid::filled(g, 7.0);
        let bands = wavelet3d(&v, BBox { lo: [0; 3], hi: [4, 3, 5] }).unwrap();
        let names: Vec<&str> = bands.iter().map(|b| b.name.as_str()).collect();
        assert_eq!(names, SUBBAND_NAMES);
        for b in &bands {
            let expect = if b.name == "LLL" { 7.0 * 2f64.sqrt().powi(3) } else { 0.0 };
            assert!(b.data.iter().all(|&x| (x - expect).abs() < 1e-12), "{}", b.name);
        }
    }

    #[test]
    fn alternating_x_pattern() {
        let g = Grid::new([6, 3, 3], [1.0; 3], [0.0; 3]).unwrap();
        let vals = (0..g.len()).map(|i| if g.coords(i).0 % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let v = VolumeGrid::new(g, vals, None).unwrap();
        let bands = wavelet3d(&v, BBox { lo: [0; 3], hi: [6, 3, 3] }).unwrap();
        let get = |n: &str| bands.iter().find(|b| b.name == n).unwrap();
        assert!(get("HLL").data.iter().any(|&x| x != 0.0));
        for n in ["LHH", "HHH", "HLH", "HHL", "LLH", "LHL"] {
            assert!(get(n).data.iter().all(|&x| x == 0.0), "{n}");
        }
    }
}
