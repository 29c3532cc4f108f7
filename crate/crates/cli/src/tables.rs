//! CSV renderings of stage results. Numbers use the shortest round-trip
//! decimal form; undefined values are written as `NA`.

use pcatdyn_core::feat::{FeatureDriftTable, FeatureVector};
use pcatdyn_core::flow::{FlowMap, SupervoxelSet};
use pcatdyn_core::prep::ShiftRecord;
use pcatdyn_core::roi::VesselGeometry;
use pcatdyn_core::tac::{EnhancementSummary, ProxDistComparison, TimeAttenuationCurve, VolumeCurve};

/// Display limit of the drift chart, percent.
pub const DRIFT_PLOT_LIMIT: f64 = 30.0;

pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), num)
}

fn render(header: &[String], rows: &[Vec<String>]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

pub fn shifts(rec: &ShiftRecord) -> Vec<u8> {
    let rows: Vec<Vec<String>> = rec
        .shifts
        .iter()
        .enumerate()
        .map(|(k, s)| {
            vec![
                k.to_string(),
                s[0].to_string(),
                s[1].to_string(),
                s[2].to_string(),
                num(rec.ncc[k]),
                rec.degenerate[k].to_string(),
            ]
        })
        .collect();
    render(&strings(&["scan", "dx", "dy", "dz", "ncc", "degenerate"]), &rows)
}

/// Per crossed slice, then a closing `median` row.
pub fn geometry(g: &VesselGeometry) -> Vec<u8> {
    let mut rows: Vec<Vec<String>> = g
        .slices
        .iter()
        .map(|s| {
            vec![s.slice.to_string(), num(s.z_mm), s.lumen_voxels.to_string(), num(s.area_mm2), num(s.d_eff_mm)]
        })
        .collect();
    rows.push(vec!["median".into(), String::new(), String::new(), String::new(), num(g.median_d_eff_mm)]);
    render(&strings(&["slice", "z_mm", "lumen_voxels", "area_mm2", "d_eff_mm"]), &rows)
}

/// Long format, one row per region and scan.
pub fn tacs(curves: &[TimeAttenuationCurve]) -> Vec<u8> {
    let mut rows = Vec::new();
    for c in curves {
        let delta = c.delta();
        for k in 0..c.len() {
            rows.push(vec![
                c.label.name().to_string(),
                c.policy.tag().to_string(),
                k.to_string(),
                num(c.times_s[k]),
                num(c.mean_hu[k]),
                num(c.std_hu[k]),
                c.voxel_count[k].to_string(),
                num(delta[k]),
            ]);
        }
    }
    render(&strings(&["region", "membership", "scan", "time_s", "mean_hu", "std_hu", "voxels", "delta_hu"]), &rows)
}

pub fn enhancement(summaries: &[EnhancementSummary]) -> Vec<u8> {
    let mut rows = Vec::new();
    for s in summaries {
        rows.push(vec![s.label.name().into(), "ppcat".into(), num(s.delta_at_ppcat)]);
        rows.push(vec![s.label.name().into(), "peak".into(), num(s.peak_delta_hu)]);
        rows.push(vec![s.label.name().into(), "time_to_peak_s".into(), num(s.time_to_peak_s)]);
        for &(k, d) in &s.offset_deltas {
            rows.push(vec![s.label.name().into(), format!("pa{k:+}"), num(d)]);
        }
    }
    render(&strings(&["region", "quantity", "value"]), &rows)
}

pub fn volume(v: &VolumeCurve) -> Vec<u8> {
    let mut rows = Vec::new();
    for w in &v.windows {
        for k in 0..v.times_s.len() {
            rows.push(vec![
                num(w.window.lo),
                num(w.window.hi),
                k.to_string(),
                num(v.times_s[k]),
                w.counts[k].to_string(),
                num(w.volume_cm3[k]),
                num(w.pct_change[k]),
            ]);
        }
    }
    render(&strings(&["window_lo_hu", "window_hi_hu", "scan", "time_s", "voxels", "volume_cm3", "pct_change"]), &rows)
}

pub fn supervoxels(sets: &[(&SupervoxelSet, &FlowMap)]) -> Vec<u8> {
    let mut rows = Vec::new();
    for (sv, fm) in sets {
        for i in 0..sv.len() {
            let c = sv.centroids[i];
            rows.push(vec![
                sv.label.name().into(),
                i.to_string(),
                num(c[0]),
                num(c[1]),
                num(c[2]),
                sv.members[i].len().to_string(),
                num(fm.mbf[i]),
                fm.clamped[i].to_string(),
            ]);
        }
    }
    render(&strings(&["region", "id", "x_mm", "y_mm", "z_mm", "voxels", "mbf", "clamped"]), &rows)
}

pub fn flow_regions(maps: &[&FlowMap]) -> Vec<u8> {
    let rows: Vec<Vec<String>> = maps
        .iter()
        .map(|m| {
            vec![
                m.label.name().into(),
                m.mbf.len().to_string(),
                m.voxel_counts.iter().sum::<usize>().to_string(),
                num(m.density),
                num(m.aif_peak_hu),
                num(m.mean),
                num(m.median),
                m.clamped.iter().filter(|&&c| c).count().to_string(),
            ]
        })
        .collect();
    render(
        &strings(&["region", "supervoxels", "voxels", "density", "aif_peak_hu", "mean_mbf", "median_mbf", "clamped"]),
        &rows,
    )
}

/// One row per scan, one column per feature.
pub fn features(fv: &[FeatureVector], times: &[f64]) -> Vec<u8> {
    let mut header = strings(&["scan", "time_s"]);
    if let Some(first) = fv.first() {
        header.extend(first.entries.iter().map(|(n, _)| n.clone()));
    }
    let rows: Vec<Vec<String>> = fv
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let mut r = vec![k.to_string(), num(times[k])];
            r.extend(f.entries.iter().map(|(_, v)| opt(*v)));
            r
        })
        .collect();
    render(&header, &rows)
}

/// Percent change per feature and column; `limit` clips for display.
pub fn drift(d: &FeatureDriftTable, limit: Option<f64>) -> Vec<u8> {
    let mut header = vec!["feature".to_string()];
    header.extend(d.scans.iter().map(|k| format!("scan_{k}")));
    header.push("max_abs_pct".into());
    let clip = |v: Option<f64>| match (v, limit) {
        (Some(x), Some(l)) => Some(x.clamp(-l, l)),
        _ => v,
    };
    let rows: Vec<Vec<String>> = d
        .names
        .iter()
        .enumerate()
        .map(|(f, name)| {
            let mut r = vec![name.clone()];
            r.extend(d.pct[f].iter().map(|&v| opt(clip(v))));
            r.push(opt(clip(d.max_abs_pct[f])));
            r
        })
        .collect();
    render(&header, &rows)
}

pub fn stenosis(c: &ProxDistComparison, times: &[f64]) -> Vec<u8> {
    let mut rows = Vec::new();
    for s in [&c.proximal, &c.distal] {
        for (k, d) in s.delta_hu_vs_p1.iter().enumerate() {
            rows.push(vec![s.label.name().into(), k.to_string(), num(times[k]), num(*d)]);
        }
    }
    render(&strings(&["region", "scan", "time_s", "delta_hu"]), &rows)
}
