//! Registration to a reference scan and spatio-temporal bilateral filtering.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volgrid::{DynamicSeries, Grid, Label, LabelMask, VolumeGrid};

/// Per-scan integer voxel shifts applied to reach the reference scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftRecord {
    pub reference: usize,
    pub shifts: Vec<[i32; 3]>,
    /// Correlation with the reference at the chosen shift.
    pub ncc: Vec<f64>,
    /// Scans that were constant (or had a constant reference); left unshifted.
    pub degenerate: Vec<bool>,
}

impl ShiftRecord {
    pub fn any_degenerate(&self) -> bool {
        self.degenerate.iter().any(|&d| d)
    }
}

#[inline]
fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Translates a volume by an integer voxel offset: `out[x] = v[clamp(x - shift)]`.
pub fn apply_shift(v: &VolumeGrid, shift: [i32; 3]) -> VolumeGrid {
    let g = *v.grid();
    let [nx, ny, nz] = g.dims;
    let src = v.values();
    let mut out = Vec::with_capacity(g.len());
    for k in 0..nz {
        let kk = clamp_index(k as isize - shift[2] as isize, nz);
        for j in 0..ny {
            let jj = clamp_index(j as isize - shift[1] as isize, ny);
            let row = nx * (jj + ny * kk);
            for i in 0..nx {
                out.push(src[row + clamp_index(i as isize - shift[0] as isize, nx)]);
            }
        }
    }
    v.map_values(out).expect("same grid")
}

/// Candidate shifts ordered by L2 norm, then lexicographically.
fn candidates(search: i32) -> Vec<[i32; 3]> {
    let mut c = Vec::new();
    for dx in -search..=search {
        for dy in -search..=search {
            for dz in -search..=search {
                c.push([dx, dy, dz]);
            }
        }
    }
    c.sort_by_key(|s| (s[0] * s[0] + s[1] * s[1] + s[2] * s[2], *s));
    c
}

const LANES: usize = 4;

/// Normalized cross-correlation of the centred reference with a shifted scan.
///
/// Sums run per row in `LANES` interleaved partial sums combined in a fixed
/// order, so the value does not depend on scheduling.
fn ncc_at(g: &Grid, ref_c: &[f64], ref_ss: f64, scan: &[f32], shift: [i32; 3]) -> Option<f64> {
    let [nx, ny, nz] = g.dims;
    let mut s1 = [0.0f64; LANES];
    let mut s2 = [0.0f64; LANES];
    let mut sx = [0.0f64; LANES];
    let mut row_buf = vec![0.0f64; nx];
    let mut idx = 0;
    for k in 0..nz {
        let kk = clamp_index(k as isize - shift[2] as isize, nz);
        for j in 0..ny {
            let jj = clamp_index(j as isize - shift[1] as isize, ny);
            let src = &scan[nx * (jj + ny * kk)..][..nx];
            for (i, b) in row_buf.iter_mut().enumerate() {
                *b = src[clamp_index(i as isize - shift[0] as isize, nx)] as f64;
            }
            let r = &ref_c[idx..idx + nx];
            let mut rc = r.chunks_exact(LANES);
            let mut mc = row_buf.chunks_exact(LANES);
            for (rv, mv) in (&mut rc).zip(&mut mc) {
                for l in 0..LANES {
                    s1[l] += mv[l];
                    s2[l] += mv[l] * mv[l];
                    sx[l] += rv[l] * mv[l];
                }
            }
            for (l, (&rv, &m)) in rc.remainder().iter().zip(mc.remainder()).enumerate() {
                s1[l] += m;
                s2[l] += m * m;
                sx[l] += rv * m;
            }
            idx += nx;
        }
    }
    let fold = |a: [f64; LANES]| (a[0] + a[1]) + (a[2] + a[3]);
    let (s1, s2, sx) = (fold(s1), fold(s2), fold(sx));
    let n = g.len() as f64;
    let var = s2 - s1 * s1 / n;
    if !(var > 1e-9 * s2.max(1.0)) || !(ref_ss > 0.0) {
        return None;
    }
    Some(sx / (ref_ss * var).sqrt())
}

fn is_constant(v: &[f32]) -> bool {
    v.iter().all(|&x| x == v[0])
}

/// Aligns every scan to `reference` by the integer translation (within
/// `±search` voxels per axis) maximizing normalized cross-correlation.
/// Ties go to the smallest shift norm, then lexicographic order.
pub fn register_translation(
    s: &DynamicSeries,
    reference: usize,
    search: usize,
) -> Result<(DynamicSeries, ShiftRecord)> {
    if reference >= s.len() {
        return Err(Error::invalid(format!("reference scan {reference} out of range (series has {})", s.len())));
    }
    let search = i32::try_from(search).map_err(|_| Error::invalid("search radius too large"))?;
    let g = *s.grid();
    let r = s.volume(reference).values();
    let n = r.len() as f64;
    let mean = r.iter().map(|&v| v as f64).sum::<f64>() / n;
    let ref_c: Vec<f64> = r.iter().map(|&v| v as f64 - mean).collect();
    let ref_ss: f64 = ref_c.iter().map(|v| v * v).sum();
    let ref_constant = is_constant(r);
    let cands = candidates(search);

    let mut volumes = Vec::with_capacity(s.len());
    let mut rec = ShiftRecord {
        reference,
        shifts: Vec::with_capacity(s.len()),
        ncc: Vec::with_capacity(s.len()),
        degenerate: Vec::with_capacity(s.len()),
    };
    for (k, v) in s.volumes().iter().enumerate() {
        if k == reference {
            volumes.push(v.clone());
            rec.shifts.push([0; 3]);
            rec.ncc.push(if ref_constant { 0.0 } else { 1.0 });
            rec.degenerate.push(ref_constant);
            continue;
        }
        if ref_constant || is_constant(v.values()) {
            volumes.push(v.clone());
            rec.shifts.push([0; 3]);
            rec.ncc.push(0.0);
            rec.degenerate.push(true);
            continue;
        }
        let scores: Vec<Option<f64>> =
            cands.par_iter().map(|&c| ncc_at(&g, &ref_c, ref_ss, v.values(), c)).collect();
        let mut best: Option<(usize, f64)> = None;
        for (ci, sc) in scores.iter().enumerate() {
            if let Some(val) = *sc {
                if best.map_or(true, |(_, b)| val > b) {
                    best = Some((ci, val));
                }
            }
        }
        match best {
            Some((ci, val)) => {
                volumes.push(apply_shift(v, cands[ci]));
                rec.shifts.push(cands[ci]);
                rec.ncc.push(val);
                rec.degenerate.push(false);
            }
            None => {
                volumes.push(v.clone());
                rec.shifts.push([0; 3]);
                rec.ncc.push(0.0);
                rec.degenerate.push(true);
            }
        }
    }
    Ok((DynamicSeries::new(volumes, s.times().to_vec())?, rec))
}

/// Picks the aorta peak-enhancement scan: argmax of the aorta mean when a
/// mask with aorta voxels is given, otherwise of each scan's 99th percentile.
pub fn auto_reference(s: &DynamicSeries, mask: Option<&LabelMask>) -> Result<usize> {
    let scores: Vec<f64> = match mask.filter(|m| m.count(Label::Aorta) > 0) {
        Some(m) => {
            s.grid().ensure_same(m.grid(), "auto_reference")?;
            let idx = m.indices(Label::Aorta);
            s.volumes()
                .iter()
                .map(|v| idx.iter().map(|&i| v.values()[i] as f64).sum::<f64>() / idx.len() as f64)
                .collect()
        }
        None => s
            .volumes()
            .iter()
            .map(|v| {
                let mut vals = v.values().to_vec();
                let pos = ((vals.len() - 1) as f64 * 0.99).round() as usize;
                let (_, p, _) = vals.select_nth_unstable_by(pos, |a, b| a.total_cmp(b));
                *p as f64
            })
            .collect(),
    };
    Ok(argmax_first(&scores))
}

/// Index of the first maximum.
pub fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterParams {
    pub sigma_spatial_mm: f64,
    pub sigma_time_s: f64,
    pub sigma_range_hu: f64,
    pub spatial_radius: usize,
    pub time_radius: usize,
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams { sigma_spatial_mm: 2.0, sigma_time_s: 2.0, sigma_range_hu: 30.0, spatial_radius: 2, time_radius: 1 }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_spatial_mm", self.sigma_spatial_mm),
            ("sigma_time_s", self.sigma_time_s),
            ("sigma_range_hu", self.sigma_range_hu),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite and > 0")));
            }
        }
        Ok(())
    }
}

/// `exp(-x)` for `x >= 0`, written without branches or float-to-int
/// conversions so the filter's inner loop vectorizes. `x = (n + f) ln 2` with
/// integer `n` found by magic-number rounding and `|f| <= 1/2`; `exp(f ln 2)`
/// is a degree-12 Taylor polynomial (relative error below 1e-12). Arguments
/// are capped at 40, where the weight is already below 5e-18.
#[inline(always)]
fn exp_neg(x: f64) -> f64 {
    const MAGIC: f64 = 6_755_399_441_055_744.0; // 1.5 * 2^52
    const C: [f64; 13] = [
        1.0,
        1.0,
        1.0 / 2.0,
        1.0 / 6.0,
        1.0 / 24.0,
        1.0 / 120.0,
        1.0 / 720.0,
        1.0 / 5040.0,
        1.0 / 40320.0,
        1.0 / 362880.0,
        1.0 / 3628800.0,
        1.0 / 39916800.0,
        1.0 / 479001600.0,
    ];
    let t = -x.min(40.0) * std::f64::consts::LOG2_E;
    let r = t + MAGIC;
    let n = r - MAGIC;
    let y = (t - n) * std::f64::consts::LN_2;
    let mut p = C[12];
    for c in C[..12].iter().rev() {
        p = p * y + *c;
    }
    // Low mantissa bits of `r` hold n; shifting n + 1023 into the exponent
    // field builds 2^n.
    p * f64::from_bits(r.to_bits().wrapping_add(1023) << 52)
}

#[inline(always)]
fn accumulate_body(src: &[f64], centre: &[f64], wsum: &mut [f64], vsum: &mut [f64], wk: f64, inv_range: f64) {
    for (((&v, &c), ws), vs) in src.iter().zip(centre).zip(wsum.iter_mut()).zip(vsum.iter_mut()) {
        let d = v - c;
        let w = wk * exp_neg(d * d * inv_range);
        *ws += w;
        *vs += w * v;
    }
}

// Wider vectors only; no fused multiply-add, so both paths round identically.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn accumulate_avx2(src: &[f64], centre: &[f64], wsum: &mut [f64], vsum: &mut [f64], wk: f64, inv_range: f64) {
    accumulate_body(src, centre, wsum, vsum, wk, inv_range)
}

#[inline]
fn accumulate(src: &[f64], centre: &[f64], wsum: &mut [f64], vsum: &mut [f64], wk: f64, inv_range: f64) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the CPU supports AVX2, checked just above.
        return unsafe { accumulate_avx2(src, centre, wsum, vsum, wk, inv_range) };
    }
    accumulate_body(src, centre, wsum, vsum, wk, inv_range)
}

/// Spatio-temporal bilateral filter.
///
/// Each output voxel is the weight-normalized sum over the
/// `(2r+1)^3 x (2rt+1)` neighbourhood with weights
/// `exp(-ds²/2σs²) * exp(-dt²/2σt²) * exp(-ΔHU²/2σr²)`, where `ΔHU` is taken
/// against the centre voxel. Spatial neighbours clamp to the volume edge;
/// temporal neighbours outside the series are skipped.
pub fn stbf(s: &DynamicSeries, p: &FilterParams) -> Result<DynamicSeries> {
    p.validate()?;
    let g = *s.grid();
    let [nx, ny, nz] = g.dims;
    let r = p.spatial_radius as isize;
    let span = 2 * p.spatial_radius + 1;
    let mut spatial = Vec::with_capacity(span * span * span);
    for dz in -r..=r {
        for dy in -r..=r {
            for dx in -r..=r {
                let d2 = (dx as f64 * g.spacing[0]).powi(2)
                    + (dy as f64 * g.spacing[1]).powi(2)
                    + (dz as f64 * g.spacing[2]).powi(2);
                spatial.push((-d2 / (2.0 * p.sigma_spatial_mm * p.sigma_spatial_mm)).exp());
            }
        }
    }
    let inv_range = 1.0 / (2.0 * p.sigma_range_hu * p.sigma_range_hu);
    let times = s.times();
    let plane = nx * ny;
    let table = |n: usize| -> Vec<usize> {
        (0..n).flat_map(|c| (-r..=r).map(move |d| clamp_index(c as isize + d, n))).collect()
    };
    let (ys, zs) = (table(ny), table(nz));

    let mut volumes = Vec::with_capacity(s.len());
    for t in 0..s.len() {
        let lo = t.saturating_sub(p.time_radius);
        let hi = (t + p.time_radius).min(s.len() - 1);
        let temporal: Vec<(&[f32], f64)> = (lo..=hi)
            .map(|u| {
                let dt = times[u] - times[t];
                (s.volume(u).values(), (-dt * dt / (2.0 * p.sigma_time_s * p.sigma_time_s)).exp())
            })
            .collect();
        let centre = s.volume(t).values();
        let mut out = vec![0f32; g.len()];
        out.par_chunks_mut(plane).enumerate().for_each(|(k, slab)| {
            let ks = &zs[k * span..(k + 1) * span];
            let mut c = vec![0f64; nx];
            let mut padded = vec![0f64; nx + span - 1];
            let mut wsum = vec![0f64; nx];
            let mut vsum = vec![0f64; nx];
            for j in 0..ny {
                let js = &ys[j * span..(j + 1) * span];
                let crow = nx * (j + ny * k);
                for (ci, &v) in c.iter_mut().zip(&centre[crow..crow + nx]) {
                    *ci = v as f64;
                }
                wsum.fill(0.0);
                vsum.fill(0.0);
                // Row-wise accumulation; each voxel still sums its neighbours
                // in (time, z, y, x) order.
                for &(vol, wt) in &temporal {
                    let mut si = 0;
                    for &kk in ks {
                        for &jj in js {
                            let src = &vol[nx * (jj + ny * kk)..][..nx];
                            for (p, v) in padded.iter_mut().enumerate() {
                                *v = src[clamp_index(p as isize - r, nx)] as f64;
                            }
                            for dxi in 0..span {
                                accumulate(&padded[dxi..dxi + nx], &c, &mut wsum, &mut vsum, wt * spatial[si], inv_range);
                                si += 1;
                            }
                        }
                    }
                }
                for i in 0..nx {
                    slab[i + nx * j] = (vsum[i] / wsum[i]) as f32;
                }
            }
        });
        volumes.push(s.volume(t).map_values(out)?);
    }
    DynamicSeries::new(volumes, times.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_series(n: usize) -> DynamicSeries {
        let g = Grid::new([10, 9, 8], [1.0; 3], [0.0; 3]).unwrap();
        let vols = (0..n)
            .map(|t| {
                let vals = (0..g.len())
                    .map(|idx| {
                        let (i, j, k) = g.coords(idx);
                        ((i * i + 3 * j + 7 * k * j) % 97) as f32 + t as f32
                    })
                    .collect();
                VolumeGrid::new(g, vals, None).unwrap()
            })
            .collect();
        DynamicSeries::new(vols, (0..n).map(|t| 2.0 * t as f64).collect()).unwrap()
    }

    #[test]
    fn aligned_series_zero_shifts() {
        let s = ramp_series(3);
        let (_, rec) = register_translation(&s, 1, 2).unwrap();
        assert!(rec.shifts.iter().all(|&v| v == [0; 3]));
        assert!(!rec.any_degenerate());
    }

    #[test]
    fn injected_shift_recovered() {
        let s = ramp_series(2);
        let moved = apply_shift(s.volume(1), [2, 0, 1]);
        let s2 = DynamicSeries::new(vec![s.volume(0).clone(), moved], s.times().to_vec()).unwrap();
        let (_, rec) = register_translation(&s2, 0, 3).unwrap();
        assert_eq!(rec.shifts[1], [-2, 0, -1]);
    }

    #[test]
    fn constant_scan_flagged() {
        let s = ramp_series(2);
        let flat = VolumeGrid::filled(*s.grid(), 5.0);
        let s2 = DynamicSeries::new(vec![s.volume(0).clone(), flat], s.times().to_vec()).unwrap();
        let (_, rec) = register_translation(&s2, 0, 1).unwrap();
        assert_eq!(rec.shifts[1], [0; 3]);
        assert!(rec.degenerate[1]);
    }

    #[test]
    fn exp_neg_matches_libm() {
        for i in 0..4000 {
            let x = i as f64 * 0.01;
            let (a, b) = (exp_neg(x), (-x).exp());
            assert!((a - b).abs() <= 1e-12 * b, "{x}: {a} vs {b}");
        }
        assert_eq!(exp_neg(0.0), 1.0);
    }

    #[test]
    fn vector_paths_agree() {
        let src: Vec<f64> = (0..37).map(|i| -100.0 + 7.3 * i as f64).collect();
        let centre: Vec<f64> = (0..37).map(|i| -60.0 + 3.1 * (i % 5) as f64).collect();
        let (mut w1, mut v1) = (vec![0.5; 37], vec![1.5; 37]);
        let (mut w2, mut v2) = (w1.clone(), v1.clone());
        accumulate(&src, &centre, &mut w1, &mut v1, 0.7, 1.0 / 1800.0);
        accumulate_body(&src, &centre, &mut w2, &mut v2, 0.7, 1.0 / 1800.0);
        assert_eq!((w1, v1), (w2, v2));
    }

    #[test]
    fn candidate_order() {
        let c = candidates(1);
        assert_eq!(c[0], [0, 0, 0]);
        assert_eq!(c[1], [-1, 0, 0]);
        assert_eq!(c.len(), 27);
    }

    #[test]
    fn constant_series_unchanged_by_filter() {
        let g = Grid::new([6, 5, 4], [0.5, 0.5, 1.0], [0.0; 3]).unwrap();
        let vols = (0..3).map(|_| VolumeGrid::filled(g, -75.0)).collect();
        let s = DynamicSeries::new(vols, vec![0.0, 2.0, 4.0]).unwrap();
        let f = stbf(&s, &FilterParams::default()).unwrap();
        assert_eq!(f, s);
    }

    #[test]
    fn single_scan_equals_spatial_only() {
        let s = ramp_series(1);
        let a = stbf(&s, &FilterParams::default()).unwrap();
        let b = stbf(&s, &FilterParams { time_radius: 0, ..Default::default() }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn auto_reference_without_mask_uses_bright_tail() {
        let s = ramp_series(4);
        assert_eq!(auto_reference(&s, None).unwrap(), 3);
    }
}
