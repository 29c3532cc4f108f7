use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roi::Centerline;
use crate::volgrid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    /// The two remaining axes in increasing order.
    fn others(self) -> (usize, usize) {
        match self {
            Axis::X => (1, 2),
            Axis::Y => (0, 2),
            Axis::Z => (0, 1),
        }
    }
}

/// Compartment primitive in physical millimetres.
///
/// Boxes are half-open `[min, max)`. Cylinders and tubes span `[from, to)`
/// along their axis; a cylinder holds voxel centres with radial distance
/// `r <= radius`, a tube those with `inner < r <= outer`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Geometry {
    Box {
        min: [f64; 3],
        max: [f64; 3],
    },
    Cylinder {
        axis: Axis,
        /// Position in the plane of the two other axes (in x, y, z order).
        center: [f64; 2],
        radius: f64,
        extent: [f64; 2],
    },
    Tube {
        axis: Axis,
        center: [f64; 2],
        inner_radius: f64,
        outer_radius: f64,
        extent: [f64; 2],
    },
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match *self {
            Geometry::Box { min, max } => {
                if !finite(&min) || !finite(&max) || (0..3).any(|a| !(min[a] < max[a])) {
                    return Err(Error::invalid(format!("box needs min < max, got {min:?} {max:?}")));
                }
            }
            Geometry::Cylinder { center, radius, extent, .. } => {
                if !finite(&center) || !(radius > 0.0) || !finite(&extent) || !(extent[0] < extent[1]) {
                    return Err(Error::invalid("cylinder needs radius > 0 and from < to"));
                }
            }
            Geometry::Tube { center, inner_radius, outer_radius, extent, .. } => {
                if !finite(&center)
                    || !(inner_radius >= 0.0)
                    || !(outer_radius > inner_radius)
                    || !finite(&extent)
                    || !(extent[0] < extent[1])
                {
                    return Err(Error::invalid("tube needs 0 <= inner < outer and from < to"));
                }
            }
        }
        Ok(())
    }

    /// Axis-aligned physical bounding box.
    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        match *self {
            Geometry::Box { min, max } => (min, max),
            Geometry::Cylinder { axis, center, radius, extent } => cyl_bounds(axis, center, radius, extent),
            Geometry::Tube { axis, center, outer_radius, extent, .. } => cyl_bounds(axis, center, outer_radius, extent),
        }
    }

    /// Rejects primitives reaching outside the grid's physical extent
    /// (voxel centres plus half a voxel on each side).
    pub fn check_within(&self, grid: &Grid) -> Result<()> {
        let (lo, hi) = self.bounds();
        for a in 0..3 {
            let g_lo = grid.origin[a] - 0.5 * grid.spacing[a];
            let g_hi = grid.origin[a] + (grid.dims[a] as f64 - 0.5) * grid.spacing[a];
            let tol = 1e-9 * (1.0 + g_hi.abs().max(g_lo.abs()));
            if lo[a] < g_lo - tol || hi[a] > g_hi + tol {
                return Err(Error::invalid(format!(
                    "geometry {lo:?}..{hi:?} exceeds grid bounds on axis {a} ([{g_lo}, {g_hi}])"
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        match *self {
            Geometry::Box { min, max } => (0..3).all(|a| p[a] >= min[a] && p[a] < max[a]),
            Geometry::Cylinder { axis, center, radius, extent } => {
                let (along, r) = radial(axis, center, p);
                along >= extent[0] && along < extent[1] && r <= radius
            }
            Geometry::Tube { axis, center, inner_radius, outer_radius, extent } => {
                let (along, r) = radial(axis, center, p);
                along >= extent[0] && along < extent[1] && r > inner_radius && r <= outer_radius
            }
        }
    }

    /// Linear indices of voxels whose centres lie inside, in increasing order.
    pub fn voxels(&self, grid: &Grid) -> Vec<usize> {
        let (lo, hi) = self.bounds();
        let mut range = [(0usize, 0usize); 3];
        for a in 0..3 {
            let first = ((lo[a] - grid.origin[a]) / grid.spacing[a]).floor().max(0.0) as usize;
            let last = ((hi[a] - grid.origin[a]) / grid.spacing[a]).ceil().max(0.0) as usize;
            range[a] = (first.min(grid.dims[a]), (last + 1).min(grid.dims[a]));
        }
        let mut out = Vec::new();
        for k in range[2].0..range[2].1 {
            for j in range[1].0..range[1].1 {
                for i in range[0].0..range[0].1 {
                    if self.contains(grid.position(i, j, k)) {
                        out.push(grid.index(i, j, k));
                    }
                }
            }
        }
        out
    }

    /// Axis of a cylinder or tube sampled at half the smallest voxel spacing,
    /// clipped to the voxel-centre range of the grid along that axis.
    pub fn axis_centerline(&self, grid: &Grid) -> Result<Option<Centerline>> {
        let (axis, center, extent) = match *self {
            Geometry::Box { .. } => return Ok(None),
            Geometry::Cylinder { axis, center, extent, .. } => (axis, center, extent),
            Geometry::Tube { axis, center, extent, .. } => (axis, center, extent),
        };
        let a = axis.index();
        let first_centre = grid.origin[a];
        let last_centre = grid.origin[a] + (grid.dims[a] as f64 - 1.0) * grid.spacing[a];
        let from = extent[0].max(first_centre);
        let to = extent[1].min(last_centre);
        if !(to > from) {
            return Ok(None);
        }
        let step = 0.5 * grid.spacing.iter().copied().fold(f64::INFINITY, f64::min);
        let n = ((to - from) / step).ceil() as usize;
        let (u, v) = axis.others();
        let points = (0..=n)
            .map(|s| {
                let mut p = [0.0; 3];
                p[a] = (from + s as f64 * step).min(to);
                p[u] = center[0];
                p[v] = center[1];
                p
            })
            .collect();
        Centerline::new(points).map(Some)
    }
}

fn cyl_bounds(axis: Axis, center: [f64; 2], radius: f64, extent: [f64; 2]) -> ([f64; 3], [f64; 3]) {
    let a = axis.index();
    let (u, v) = axis.others();
    let mut lo = [0.0; 3];
    let mut hi = [0.0; 3];
    lo[a] = extent[0];
    hi[a] = extent[1];
    lo[u] = center[0] - radius;
    hi[u] = center[0] + radius;
    lo[v] = center[1] - radius;
    hi[v] = center[1] + radius;
    (lo, hi)
}

fn radial(axis: Axis, center: [f64; 2], p: [f64; 3]) -> (f64, f64) {
    let (u, v) = axis.others();
    let du = p[u] - center[0];
    let dv = p[v] - center[1];
    (p[axis.index()], (du * du + dv * dv).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new([20, 20, 10], [1.0, 1.0, 1.0], [0.0; 3]).unwrap()
    }

    #[test]
    fn box_is_half_open() {
        let b = Geometry::Box { min: [0.0, 0.0, 0.0], max: [2.0, 2.0, 1.0] };
        assert_eq!(b.voxels(&grid()).len(), 4);
    }

    #[test]
    fn tube_excludes_inner_radius() {
        let t = Geometry::Tube { axis: Axis::Z, center: [10.0, 10.0], inner_radius: 1.0, outer_radius: 2.0, extent: [0.0, 1.0] };
        let c = Geometry::Cylinder { axis: Axis::Z, center: [10.0, 10.0], radius: 1.0, extent: [0.0, 1.0] };
        let tv = t.voxels(&grid());
        let cv = c.voxels(&grid());
        assert_eq!(cv.len(), 5);
        assert!(tv.iter().all(|i| !cv.contains(i)));
        // integer points with 1 < r <= 2: (±1,±1) x4, (±2,0),(0,±2) x4
        assert_eq!(tv.len(), 8);
    }

    #[test]
    fn out_of_grid_rejected() {
        let b = Geometry::Box { min: [0.0, 0.0, 0.0], max: [25.0, 2.0, 1.0] };
        assert!(b.check_within(&grid()).is_err());
    }

    #[test]
    fn centerline_along_axis() {
        let c = Geometry::Cylinder { axis: Axis::X, center: [5.0, 5.0], radius: 1.0, extent: [2.0, 12.0] };
        let cl = c.axis_centerline(&grid()).unwrap().unwrap();
        let p = cl.points();
        assert_eq!(p[0], [2.0, 5.0, 5.0]);
        assert_eq!(*p.last().unwrap(), [12.0, 5.0, 5.0]);
        assert!((cl.length() - 10.0).abs() < 1e-12);
    }
}
