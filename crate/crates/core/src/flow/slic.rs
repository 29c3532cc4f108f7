use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volgrid::{Grid, Label, LabelMask, VolumeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlicParams {
    /// Target supervoxel size in voxels.
    pub size: usize,
    /// Weight of spatial distance relative to HU difference.
    pub compactness: f64,
    pub iterations: usize,
}

impl Default for SlicParams {
    fn default() -> Self {
        SlicParams { size: 125, compactness: 10.0, iterations: 10 }
    }
}

impl SlicParams {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 || !(self.compactness >= 0.0) || !self.compactness.is_finite() {
            return Err(Error::invalid("supervoxel size must be >= 1 and compactness >= 0"));
        }
        Ok(())
    }
}

/// Connected clusters partitioning one labelled region.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervoxelSet {
    pub grid: Grid,
    pub label: Label,
    pub params: SlicParams,
    /// Voxel indices of each supervoxel, ascending.
    pub members: Vec<Vec<usize>>,
    /// Physical centroids in mm.
    pub centroids: Vec<[f64; 3]>,
    /// Mean HU of each supervoxel on the clustered volume.
    pub mean_hu: Vec<f64>,
}

impl SupervoxelSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Supervoxel id per voxel (`u32::MAX` outside the region).
    pub fn assignment(&self) -> Vec<u32> {
        let mut a = vec![u32::MAX; self.grid.len()];
        for (sv, m) in self.members.iter().enumerate() {
            for &i in m {
                a[i] = sv as u32;
            }
        }
        a
    }
}

#[derive(Debug, Clone, Copy)]
struct Center {
    pos: [f64; 3],
    hu: f64,
}

const UNASSIGNED: u32 = u32::MAX;

fn neighbours26(g: &Grid, idx: usize, mut f: impl FnMut(usize)) {
    let (i, j, k) = g.coords(idx);
    let [nx, ny, nz] = g.dims;
    for dz in -1isize..=1 {
        let kk = k as isize + dz;
        if kk < 0 || kk >= nz as isize {
            continue;
        }
        for dy in -1isize..=1 {
            let jj = j as isize + dy;
            if jj < 0 || jj >= ny as isize {
                continue;
            }
            for dx in -1isize..=1 {
                let ii = i as isize + dx;
                if ii < 0 || ii >= nx as isize || (dx == 0 && dy == 0 && dz == 0) {
                    continue;
                }
                f(g.index(ii as usize, jj as usize, kk as usize));
            }
        }
    }
}

/// SLIC-style clustering of the voxels of `mask` carrying `code`, using
/// `D = sqrt(ΔHU² + (d/S)² m²)` with `S = size^(1/3) * mean spacing`.
/// Connectivity is enforced afterwards: stray fragments join the adjacent
/// supervoxel closest in `D`, and fragments without a neighbour become
/// supervoxels of their own.
pub fn slic_cluster(v: &VolumeGrid, mask: &LabelMask, code: Label, p: &SlicParams) -> Result<SupervoxelSet> {
    p.validate()?;
    v.grid().ensure_same(mask.grid(), "slic_cluster")?;
    let g = *v.grid();
    let region = mask.indices(code);
    if region.is_empty() {
        return Err(Error::empty(format!("{code} (supervoxel clustering)")));
    }
    let hu: Vec<f64> = v.values().iter().map(|&x| x as f64).collect();
    let mean_spacing = (g.spacing[0] + g.spacing[1] + g.spacing[2]) / 3.0;
    let s = (p.size as f64).cbrt() * mean_spacing;
    let m = p.compactness;

    let mut label = vec![UNASSIGNED; g.len()];
    if region.len() <= p.size {
        for &i in &region {
            label[i] = 0;
        }
    } else {
        let centers = seed_centers(&g, &region, &hu, s);
        let mut centers = centers;
        for _ in 0..p.iterations.max(1) {
            let buckets = bucket_centers(&centers, s);
            let new: Vec<u32> = region
                .par_iter()
                .map(|&idx| nearest_center(&g.position_of(idx), hu[idx], &centers, &buckets, s, m, true))
                .collect();
            let mut changed = false;
            for (&idx, &c) in region.iter().zip(&new) {
                if label[idx] != c {
                    changed = true;
                    label[idx] = c;
                }
            }
            // Voxels outside every search window go to the globally closest centre.
            let strays: Vec<usize> = region.iter().copied().filter(|&i| label[i] == UNASSIGNED).collect();
            for idx in strays {
                label[idx] = nearest_center(&g.position_of(idx), hu[idx], &centers, &buckets, s, m, false);
            }
            centers = update_centers(&g, &region, &label, &hu, centers.len());
            // Drop empty clusters and compact ids.
            let (kept, remap) = compact(&centers);
            for &idx in &region {
                label[idx] = remap[label[idx] as usize];
            }
            centers = kept;
            if !changed {
                break;
            }
        }
    }
    enforce_connectivity(&g, &region, &hu, &mut label, s, m);
    Ok(build_set(&g, code, *p, &region, &label, &hu))
}

fn seed_centers(g: &Grid, region: &[usize], hu: &[f64], s: f64) -> Vec<Option<Center>> {
    let mut lo = [f64::INFINITY; 3];
    for &idx in region {
        let p = g.position_of(idx);
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
        }
    }
    // Cell -> (distance to cell centre, voxel index) of the best seed so far.
    let mut best: HashMap<[i64; 3], (f64, usize)> = HashMap::new();
    for &idx in region {
        let p = g.position_of(idx);
        let cell = [0, 1, 2].map(|a| ((p[a] - lo[a] + 1e-9) / s).floor() as i64);
        let mut d2 = 0.0;
        for a in 0..3 {
            let c = lo[a] + (cell[a] as f64 + 0.5) * s;
            d2 += (p[a] - c).powi(2);
        }
        let e = best.entry(cell).or_insert((f64::INFINITY, usize::MAX));
        if d2 < e.0 || (d2 == e.0 && idx < e.1) {
            *e = (d2, idx);
        }
    }
    let mut seeds: Vec<usize> = best.values().map(|&(_, i)| i).collect();
    seeds.sort_unstable();
    seeds.into_iter().map(|i| Some(Center { pos: g.position_of(i), hu: hu[i] })).collect()
}

type Buckets = HashMap<[i64; 3], Vec<u32>>;

fn bucket_centers(centers: &[Option<Center>], s: f64) -> Buckets {
    let mut b: Buckets = HashMap::new();
    for (ci, c) in centers.iter().enumerate() {
        if let Some(c) = c {
            b.entry(c.pos.map(|x| (x / s).floor() as i64)).or_default().push(ci as u32);
        }
    }
    b
}

fn distance(p: &[f64; 3], hu: f64, c: &Center, s: f64, m: f64) -> f64 {
    let d2 = (p[0] - c.pos[0]).powi(2) + (p[1] - c.pos[1]).powi(2) + (p[2] - c.pos[2]).powi(2);
    ((hu - c.hu).powi(2) + d2 / (s * s) * m * m).sqrt()
}

/// Closest centre by `D`; with `windowed`, only centres within `±S` per axis
/// are candidates. Ties go to the lower id.
fn nearest_center(
    p: &[f64; 3],
    hu: f64,
    centers: &[Option<Center>],
    buckets: &Buckets,
    s: f64,
    m: f64,
    windowed: bool,
) -> u32 {
    let mut best = (f64::INFINITY, UNASSIGNED);
    let mut consider = |ci: u32| {
        if let Some(c) = &centers[ci as usize] {
            if windowed && (0..3).any(|a| (p[a] - c.pos[a]).abs() > s) {
                return;
            }
            let d = distance(p, hu, c, s, m);
            if d < best.0 || (d == best.0 && ci < best.1) {
                best = (d, ci);
            }
        }
    };
    if windowed {
        let cell = p.map(|x| (x / s).floor() as i64);
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if let Some(list) = buckets.get(&[cell[0] + dx, cell[1] + dy, cell[2] + dz]) {
                        for &ci in list {
                            consider(ci);
                        }
                    }
                }
            }
        }
    } else {
        for ci in 0..centers.len() as u32 {
            consider(ci);
        }
    }
    best.1
}

fn update_centers(g: &Grid, region: &[usize], label: &[u32], hu: &[f64], n: usize) -> Vec<Option<Center>> {
    let mut acc = vec![([0.0f64; 3], 0.0f64, 0usize); n];
    for &idx in region {
        let l = label[idx] as usize;
        let p = g.position_of(idx);
        let a = &mut acc[l];
        for d in 0..3 {
            a.0[d] += p[d];
        }
        a.1 += hu[idx];
        a.2 += 1;
    }
    acc.into_iter()
        .map(|(pos, h, c)| {
            (c > 0).then(|| {
                let c = c as f64;
                Center { pos: pos.map(|x| x / c), hu: h / c }
            })
        })
        .collect()
}

fn compact(centers: &[Option<Center>]) -> (Vec<Option<Center>>, Vec<u32>) {
    let mut kept = Vec::new();
    let mut remap = vec![UNASSIGNED; centers.len()];
    for (i, c) in centers.iter().enumerate() {
        if c.is_some() {
            remap[i] = kept.len() as u32;
            kept.push(*c);
        }
    }
    (kept, remap)
}

/// 26-connected components of the voxels carrying each label.
fn components(g: &Grid, region: &[usize], label: &[u32]) -> Vec<(u32, Vec<usize>)> {
    let mut seen = vec![false; g.len()];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for &start in region {
        if seen[start] {
            continue;
        }
        let l = label[start];
        seen[start] = true;
        stack.push(start);
        let mut comp = Vec::new();
        while let Some(idx) = stack.pop() {
            comp.push(idx);
            neighbours26(g, idx, |n| {
                if !seen[n] && label[n] == l {
                    seen[n] = true;
                    stack.push(n);
                }
            });
        }
        comp.sort_unstable();
        out.push((l, comp));
    }
    out
}

fn enforce_connectivity(g: &Grid, region: &[usize], hu: &[f64], label: &mut [u32], s: f64, m: f64) {
    let comps = components(g, region, label);
    // Largest component per label stays; ties keep the earliest (lowest voxel index).
    let mut main: HashMap<u32, usize> = HashMap::new();
    for (ci, (l, c)) in comps.iter().enumerate() {
        match main.get(l) {
            Some(&prev) if comps[prev].1.len() >= c.len() => {}
            _ => {
                main.insert(*l, ci);
            }
        }
    }
    let mut orphans: Vec<usize> = (0..comps.len()).filter(|ci| main.get(&comps[*ci].0) != Some(ci)).collect();
    if orphans.is_empty() {
        return;
    }
    let mut is_orphan = vec![false; g.len()];
    for &ci in &orphans {
        for &idx in &comps[ci].1 {
            is_orphan[idx] = true;
        }
    }
    let centres = update_centers(g, region, label, hu, label.iter().filter(|&&l| l != UNASSIGNED).map(|&l| l as usize + 1).max().unwrap_or(0));
    let mut next = centres.len() as u32;
    loop {
        let mut progressed = false;
        let mut remaining = Vec::new();
        for &ci in &orphans {
            let comp = &comps[ci].1;
            let n = comp.len() as f64;
            let mut pos = [0.0; 3];
            let mut mean_hu = 0.0;
            for &idx in comp {
                let p = g.position_of(idx);
                for a in 0..3 {
                    pos[a] += p[a] / n;
                }
                mean_hu += hu[idx] / n;
            }
            let mut adjacent: Vec<u32> = Vec::new();
            for &idx in comp {
                neighbours26(g, idx, |nb| {
                    let l = label[nb];
                    if l != UNASSIGNED && !is_orphan[nb] && !adjacent.contains(&l) {
                        adjacent.push(l);
                    }
                });
            }
            adjacent.sort_unstable();
            let target = adjacent
                .iter()
                .filter_map(|&l| {
                    centres.get(l as usize).copied().flatten().map(|c| (distance(&pos, mean_hu, &c, s, m), l))
                })
                .fold(None::<(f64, u32)>, |b, (d, l)| match b {
                    Some((bd, _)) if bd <= d => b,
                    _ => Some((d, l)),
                });
            match target.or_else(|| adjacent.first().map(|&l| (0.0, l))) {
                Some((_, l)) => {
                    for &idx in comp {
                        label[idx] = l;
                        is_orphan[idx] = false;
                    }
                    progressed = true;
                }
                None => remaining.push(ci),
            }
        }
        orphans = remaining;
        if orphans.is_empty() {
            break;
        }
        if !progressed {
            // Isolated fragments: each becomes its own supervoxel.
            for &ci in &orphans {
                for &idx in &comps[ci].1 {
                    label[idx] = next;
                    is_orphan[idx] = false;
                }
                next += 1;
            }
            break;
        }
    }
}

fn build_set(g: &Grid, code: Label, p: SlicParams, region: &[usize], label: &[u32], hu: &[f64]) -> SupervoxelSet {
    // Final ids ordered by each supervoxel's lowest voxel index; a label
    // that still spans several components is split.
    let comps = components(g, region, label);
    let mut members: Vec<Vec<usize>> = comps.into_iter().map(|(_, c)| c).collect();
    members.sort_by_key(|m| m[0]);
    let centroids = members
        .iter()
        .map(|m| {
            let n = m.len() as f64;
            let mut c = [0.0; 3];
            for &i in m {
                let pos = g.position_of(i);
                for a in 0..3 {
                    c[a] += pos[a];
                }
            }
            c.map(|x| x / n)
        })
        .collect();
    let mean_hu = members.iter().map(|m| m.iter().map(|&i| hu[i]).sum::<f64>() / m.len() as f64).collect();
    SupervoxelSet { grid: *g, label: code, params: p, members, centroids, mean_hu }
}
