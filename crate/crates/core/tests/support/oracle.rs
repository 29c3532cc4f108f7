//! Brute-force reference implementations of the feature definitions.
//!
//! Everything here works from voxel coordinate lists and pairwise
//! comparisons, with no shared code from the library beyond the volume
//! containers.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use pcatdyn_core::{Grid, Label, LabelMask, VolumeGrid};
use rand::Rng;

pub const BINS: usize = 16;
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Random volume on a small grid with a random ROI inside a box of at most
/// `max_side` voxels per axis.
pub fn random_case<R: Rng>(rng: &mut R, max_side: usize) -> (VolumeGrid, LabelMask) {
    let dims = [max_side + 3, max_side + 3, max_side + 3];
    let spacing = [rng.gen_range(0.3..1.0), rng.gen_range(0.3..1.0), rng.gen_range(0.3..1.5)];
    let grid = Grid::new(dims, spacing, [rng.gen_range(-5.0..5.0), 0.0, 1.0]).unwrap();
    let values: Vec<f32> = (0..grid.len()).map(|_| rng.gen_range(-200.0f32..0.0)).collect();
    let v = VolumeGrid::new(grid, values, None).unwrap();
    let side: Vec<usize> = (0..3).map(|_| rng.gen_range(1..=max_side)).collect();
    let lo: Vec<usize> = (0..3).map(|a| rng.gen_range(0..=dims[a] - side[a])).collect();
    let fill = rng.gen_range(0.3..=1.0);
    let mut m = LabelMask::empty(grid);
    for k in lo[2]..lo[2] + side[2] {
        for j in lo[1]..lo[1] + side[1] {
            for i in lo[0]..lo[0] + side[0] {
                if rng.gen_bool(fill) {
                    m.set(grid.index(i, j, k), Label::Pcat);
                }
            }
        }
    }
    if m.count(Label::Pcat) == 0 {
        m.set(grid.index(lo[0], lo[1], lo[2]), Label::Pcat);
    }
    (v, m)
}

/// `max(|a - b| / max(1, |a|, |b|))`; an error when definedness differs.
pub fn max_rel_err(ours: &[(String, Option<f64>)], oracle: &[(String, Option<f64>)]) -> Result<f64, String> {
    if ours.len() != oracle.len() {
        return Err(format!("{} values against {} from the oracle", ours.len(), oracle.len()));
    }
    let mut worst = 0.0f64;
    for ((na, a), (nb, b)) in ours.iter().zip(oracle) {
        if na != nb {
            return Err(format!("name {na} against {nb}"));
        }
        match (a, b) {
            (None, None) => {}
            (Some(x), Some(y)) => worst = worst.max((x - y).abs() / 1f64.max(x.abs()).max(y.abs())),
            _ => return Err(format!("{na}: {a:?} against oracle {b:?}")),
        }
    }
    Ok(worst)
}

fn roi_points(m: &LabelMask) -> Vec<(usize, [usize; 3])> {
    let g = m.grid();
    let mut out = Vec::new();
    for k in 0..g.dims[2] {
        for j in 0..g.dims[1] {
            for i in 0..g.dims[0] {
                let idx = i + g.dims[0] * (j + g.dims[1] * k);
                if m.labels()[idx] != 0 {
                    out.push((idx, [i, j, k]));
                }
            }
        }
    }
    out
}

fn central_moment(xs: &[f64], p: i32) -> f64 {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - mean).powi(p)).sum::<f64>() / xs.len() as f64
}

fn is_constant(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[0] == w[1])
}

fn skew(xs: &[f64]) -> Option<f64> {
    let m2 = central_moment(xs, 2);
    (!is_constant(xs) && m2 > 0.0).then(|| central_moment(xs, 3) / m2.powf(1.5))
}

fn kurt(xs: &[f64]) -> Option<f64> {
    let m2 = central_moment(xs, 2);
    (!is_constant(xs) && m2 > 0.0).then(|| central_moment(xs, 4) / (m2 * m2))
}

/// Bin per value (1-based) and whether the values are constant.
pub fn bins(xs: &[f64]) -> (Vec<usize>, bool) {
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return (vec![1; xs.len()], true);
    }
    let b = xs
        .iter()
        .map(|&x| {
            let t = (BINS as f64 * (x - lo) / (hi - lo)).floor() as i64;
            (t.max(0).min(BINS as i64 - 1) + 1) as usize
        })
        .collect();
    (b, false)
}

pub fn handcrafted(v: &VolumeGrid, m: &LabelMask) -> Vec<(String, Option<f64>)> {
    let g = *m.grid();
    let pts = roi_points(m);
    let xs: Vec<f64> = pts.iter().map(|&(idx, _)| v.values()[idx] as f64).collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (b, _) = bins(&xs);
    let mut hist = [0usize; BINS];
    for &x in &b {
        hist[x - 1] += 1;
    }
    let entropy: f64 = hist.iter().filter(|&&c| c > 0).map(|&c| c as f64 / n).map(|p| -p * p.log2()).sum();
    let count = |f: &dyn Fn(f64) -> bool| xs.iter().filter(|&&x| f(x)).count() as f64 / n;
    let mut slices: BTreeMap<usize, usize> = BTreeMap::new();
    for &(_, c) in &pts {
        *slices.entry(c[2]).or_default() += 1;
    }
    let px = g.spacing[0] * g.spacing[1];
    let areas: Vec<f64> = slices.values().map(|&c| c as f64 * px).collect();
    let amean = areas.iter().sum::<f64>() / areas.len() as f64;
    let astd = (areas.iter().map(|a| (a - amean) * (a - amean)).sum::<f64>() / areas.len() as f64).sqrt();
    let vals = [
        ("mean", Some(mean)),
        ("std", Some(central_moment(&xs, 2).sqrt())),
        ("skewness", skew(&xs)),
        ("kurtosis", kurt(&xs)),
        ("entropy", Some(entropy)),
        ("fraction_-190_-110", Some(count(&|x| (-190.0..-110.0).contains(&x)))),
        ("fraction_-110_-70", Some(count(&|x| (-110.0..-70.0).contains(&x)))),
        ("fraction_-70_-30", Some(count(&|x| (-70.0..=-30.0).contains(&x)))),
        ("voxel_count", Some(n)),
        ("volume_cm3", Some(n * g.spacing[0] * g.spacing[1] * g.spacing[2] / 1000.0)),
        ("axial_area_mean", Some(amean)),
        ("axial_area_std", Some(astd)),
        ("axial_area_max", Some(areas.iter().cloned().fold(f64::NEG_INFINITY, f64::max))),
    ];
    vals.into_iter().map(|(k, x)| (k.to_string(), x)).collect()
}

/// Eigenvalues of a symmetric 3x3 matrix by cyclic Jacobi rotations,
/// descending.
pub fn jacobi_eigenvalues(mut a: [[f64; 3]; 3]) -> [f64; 3] {
    for _ in 0..100 {
        let off = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
        if off == 0.0 {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if a[p][q] == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut r = a;
            for k in 0..3 {
                r[k][p] = c * a[k][p] - s * a[k][q];
                r[k][q] = s * a[k][p] + c * a[k][q];
            }
            let mut out = r;
            for k in 0..3 {
                out[p][k] = c * r[p][k] - s * r[q][k];
                out[q][k] = s * r[p][k] + c * r[q][k];
            }
            out[p][q] = 0.0;
            out[q][p] = 0.0;
            a = out;
        }
    }
    let mut ev = [a[0][0], a[1][1], a[2][2]];
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

pub fn shape(m: &LabelMask) -> (Option<f64>, Option<f64>) {
    let g = *m.grid();
    let pos: Vec<[f64; 3]> = roi_points(m)
        .iter()
        .map(|&(_, c)| [0, 1, 2].map(|a| g.origin[a] + c[a] as f64 * g.spacing[a]))
        .collect();
    let n = pos.len() as f64;
    let mean = [0, 1, 2].map(|a| pos.iter().map(|p| p[a]).sum::<f64>() / n);
    let mut cov = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            cov[r][c] = pos.iter().map(|p| (p[r] - mean[r]) * (p[c] - mean[c])).sum::<f64>() / n;
        }
    }
    let ev = jacobi_eigenvalues(cov);
    let ev = ev.map(|l| if l <= ev[0] * EIGEN_FLOOR { 0.0 } else { l });
    if ev[0] <= 0.0 {
        return (None, None);
    }
    (Some((ev[1] / ev[0]).sqrt()), Some((ev[2] / ev[0]).sqrt()))
}

/// Stationary Haar subbands over the box `lo..hi` by direct 2x2x2
/// convolution; the forward neighbour past the box edge is the edge voxel.
/// The signed sum of f32 inputs is exact in f64, so the kernel scale is
/// applied once at the end.
pub fn wavelet(v: &VolumeGrid, lo: [usize; 3], hi: [usize; 3]) -> Vec<(String, Vec<f64>)> {
    let scale = FRAC_1_SQRT_2 * FRAC_1_SQRT_2 * FRAC_1_SQRT_2;
    let mut out = Vec::new();
    for name in ["LLL", "LLH", "LHL", "LHH", "HLL", "HLH", "HHL", "HHH"] {
        let high: Vec<bool> = name.chars().map(|c| c == 'H').collect();
        let mut data = Vec::new();
        for k in lo[2]..hi[2] {
            for j in lo[1]..hi[1] {
                for i in lo[0]..hi[0] {
                    let mut acc = 0.0;
                    for c in 0..2 {
                        for b in 0..2 {
                            for a in 0..2 {
                                let odd = [a, b, c].iter().zip(&high).filter(|(&t, &h)| h && t == 1).count();
                                let sign = if odd % 2 == 0 { 1.0 } else { -1.0 };
                                let x = (i + a).min(hi[0] - 1);
                                let y = (j + b).min(hi[1] - 1);
                                let z = (k + c).min(hi[2] - 1);
                                acc += sign * v.get(x, y, z) as f64;
                            }
                        }
                    }
                    data.push(acc * scale);
                }
            }
        }
        out.push((name.to_string(), data));
    }
    out
}

fn neighbours(a: [usize; 3], b: [usize; 3]) -> bool {
    a != b && (0..3).all(|x| a[x].abs_diff(b[x]) <= 1)
}

fn idmn(i: f64, j: f64) -> f64 {
    let n = BINS as f64;
    1.0 / (1.0 + (i - j).powi(2) / (n * n))
}

/// ROI voxels as (coordinate, level).
type Leveled = Vec<([usize; 3], usize)>;

pub fn glcm_idmn(pts: &Leveled) -> Option<f64> {
    let dirs: [[i64; 3]; 13] = [
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
    let mut total = 0.0;
    let mut used = 0;
    for d in dirs {
        let mut p = vec![[0.0f64; BINS]; BINS];
        let mut pairs = 0.0;
        for &(a, la) in pts {
            for &(b, lb) in pts {
                if (0..3).all(|x| b[x] as i64 - a[x] as i64 == d[x]) {
                    p[la - 1][lb - 1] += 1.0;
                    p[lb - 1][la - 1] += 1.0;
                    pairs += 2.0;
                }
            }
        }
        if pairs > 0.0 {
            used += 1;
            let mut s = 0.0;
            for i in 0..BINS {
                for j in 0..BINS {
                    s += p[i][j] / pairs * idmn(i as f64, j as f64);
                }
            }
            total += s;
        }
    }
    (used > 0).then(|| total / used as f64)
}

/// Dependence size per voxel.
fn dependence(pts: &Leveled) -> Vec<usize> {
    pts.iter().map(|&(a, la)| 1 + pts.iter().filter(|&&(b, lb)| lb == la && neighbours(a, b)).count()).collect()
}

pub fn gldm_idmn(pts: &Leveled) -> f64 {
    let dep = dependence(pts);
    let n = pts.len() as f64;
    pts.iter().zip(&dep).map(|(&(_, l), &d)| idmn(l as f64, d as f64) / n).sum()
}

pub fn gldm_dnn(pts: &Leveled) -> f64 {
    let dep = dependence(pts);
    let n = pts.len() as f64;
    let mut cols: BTreeMap<usize, f64> = BTreeMap::new();
    for d in dep {
        *cols.entry(d).or_default() += 1.0;
    }
    cols.values().map(|c| c * c).sum::<f64>() / (n * n)
}

pub fn glszm_sznn(pts: &Leveled) -> f64 {
    let n = pts.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            x = p[x];
        }
        x
    }
    for a in 0..n {
        for b in 0..n {
            if pts[a].1 == pts[b].1 && neighbours(pts[a].0, pts[b].0) {
                let (ra, rb) = (root(&mut parent, a), root(&mut parent, b));
                parent[ra] = rb;
            }
        }
    }
    let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for a in 0..n {
        *sizes.entry(root(&mut parent, a)).or_default() += 1;
    }
    let zones = sizes.len() as f64;
    let mut by_size: BTreeMap<usize, f64> = BTreeMap::new();
    for s in sizes.values() {
        *by_size.entry(*s).or_default() += 1.0;
    }
    by_size.values().map(|c| c * c).sum::<f64>() / (zones * zones)
}

/// Levels of `values` (ROI order) attached to coordinates, or `None` if
/// the values are constant.
fn leveled(coords: &[[usize; 3]], values: &[f64]) -> Option<Leveled> {
    let (b, constant) = bins(values);
    (!constant).then(|| coords.iter().copied().zip(b).collect())
}

pub fn radiomics(v: &VolumeGrid, m: &LabelMask) -> Vec<(String, Option<f64>)> {
    let g = *m.grid();
    let pts = roi_points(m);
    let coords: Vec<[usize; 3]> = pts.iter().map(|p| p.1).collect();
    let lo = [0, 1, 2].map(|a| coords.iter().map(|c| c[a]).min().unwrap());
    let hi = [0, 1, 2].map(|a| (coords.iter().map(|c| c[a]).max().unwrap() + 2).min(g.dims[a]));
    let bands = wavelet(v, lo, hi);
    let band = |name: &str| -> Vec<f64> {
        let data = &bands.iter().find(|b| b.0 == name).unwrap().1;
        let d = [hi[0] - lo[0], hi[1] - lo[1]];
        coords.iter().map(|c| data[(c[0] - lo[0]) + d[0] * ((c[1] - lo[1]) + d[1] * (c[2] - lo[2]))]).collect()
    };
    let original: Vec<f64> = pts.iter().map(|&(idx, _)| v.values()[idx] as f64).collect();
    let (elong, flat) = shape(m);
    let llh = band("LLH");
    let orig = leveled(&coords, &original);
    let vals = [
        ("original-shape-Elongation", elong),
        ("original-shape-Flatness", flat),
        ("wavelet-LLH-firstorder-Mean", Some(llh.iter().sum::<f64>() / llh.len() as f64)),
        ("wavelet-LHL-firstorder-Kurtosis", kurt(&band("LHL"))),
        ("wavelet-LLL-gldm-Idmn", leveled(&coords, &band("LLL")).map(|p| gldm_idmn(&p))),
        ("wavelet-HHH-glszm-SizeZoneNonUniformityNormalized", leveled(&coords, &band("HHH")).map(|p| glszm_sznn(&p))),
        ("original-glcm-Idmn", orig.as_ref().and_then(glcm_idmn)),
        ("original-gldm-DependenceNonUniformityNormalized", orig.as_ref().map(gldm_dnn)),
    ];
    vals.into_iter().map(|(k, x)| (k.to_string(), x)).collect()
}

/// All 21 values in library order.
pub fn features(v: &VolumeGrid, m: &LabelMask) -> Vec<(String, Option<f64>)> {
    let mut out = handcrafted(v, m);
    out.extend(radiomics(v, m));
    out
}
