//! Small synthetic inputs shared by the integration suites.

#![allow(dead_code)]

use pcatdyn_core::roi::Centerline;
use pcatdyn_core::{DynamicSeries, Grid, Label, LabelMask, VolumeGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Straight lumen of radius `r_mm` along z through `(cx, cy)`, with a
/// centerline sampled every half slice over the full grid height.
pub fn cylinder(grid: Grid, center: [f64; 2], r_mm: f64) -> (LabelMask, Centerline) {
    let mut m = LabelMask::empty(grid);
    for idx in 0..grid.len() {
        let p = grid.position_of(idx);
        if (p[0] - center[0]).hypot(p[1] - center[1]) <= r_mm {
            m.set(idx, Label::LumenLad);
        }
    }
    let z0 = grid.origin[2];
    let z1 = z0 + (grid.dims[2] - 1) as f64 * grid.spacing[2];
    let step = 0.5 * grid.spacing[2];
    let n = ((z1 - z0) / step).round() as usize;
    let pts = (0..=n).map(|i| [center[0], center[1], z0 + i as f64 * step]).collect();
    (m, Centerline::new(pts).unwrap())
}

/// Smooth structured volume: a sum of Gaussian blobs on a fat background.
pub fn blobs(grid: Grid, seed: u64) -> VolumeGrid {
    let ext = [0, 1, 2].map(|a| grid.dims[a] as f64 * grid.spacing[a]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<([f64; 3], f64, f64)> = (0..6)
        .map(|_| {
            let c = [0, 1, 2].map(|a| ext[a] * rng.gen_range(0.2..0.8));
            (c, rng.gen_range(1.0..3.0), rng.gen_range(150.0..400.0))
        })
        .collect();
    let vals = (0..grid.len())
        .map(|idx| {
            let p = grid.position_of(idx);
            let mut v = -90.0;
            for (c, w, a) in &centers {
                let d2 = (0..3).map(|x| (p[x] - c[x]).powi(2)).sum::<f64>();
                v += a * (-d2 / (2.0 * w * w)).exp();
            }
            v as f32
        })
        .collect();
    VolumeGrid::new(grid, vals, None).unwrap()
}

/// `n` copies of `v` at 2 s spacing.
pub fn repeated(v: &VolumeGrid, n: usize) -> DynamicSeries {
    let vols = (0..n).map(|k| v.clone().with_time(2.0 * k as f64)).collect();
    DynamicSeries::new(vols, (0..n).map(|k| 2.0 * k as f64).collect()).unwrap()
}
