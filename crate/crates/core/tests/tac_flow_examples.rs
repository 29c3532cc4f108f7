use pcatdyn_core::flow::{estimate_flow, max_slope, slic_cluster, FlowParams, SlicParams};
use pcatdyn_core::phantom::{simulate, tissue_curve, PhantomOutput, PhantomSpec, STENOSIS_SPLIT_MM};
use pcatdyn_core::roi::{axial_disk_mask, effective_diameter, fat_select, split_prox_dist, PcatRegionSpec};
use pcatdyn_core::tac::{
    apparent_volume_curve, compare_prox_dist, compute_tac, enhancement_summary, find_peaks, MembershipPolicy,
    TimeAttenuationCurve,
};
use pcatdyn_core::{Grid, HuWindow, Label, LabelMask, VolumeGrid};

fn fixed_fat() -> MembershipPolicy {
    MembershipPolicy::Fixed { reference: 0, window: Some(HuWindow::STANDARD) }
}

/// Disk mask around the LAD and its fat-window subset at scan 0.
fn disks(out: &PhantomOutput) -> (LabelMask, LabelMask) {
    let cl = out.truth.centerline(Label::LumenLad).unwrap();
    let lumen = out.mask.only(Label::LumenLad);
    let geom = effective_diameter(&lumen, cl).unwrap();
    let disk = axial_disk_mask(cl, &geom, &PcatRegionSpec::default(), &out.mask).unwrap();
    let pcat = fat_select(out.series.volume(0), &disk, HuWindow::STANDARD).unwrap();
    (disk, pcat)
}

fn aorta(out: &PhantomOutput) -> TimeAttenuationCurve {
    compute_tac(&out.series, &out.mask, Label::Aorta, MembershipPolicy::whole_region()).unwrap()
}

#[test]
fn baseline_curve_peaks_and_offsets() {
    let out = simulate(&PhantomSpec::baseline()).unwrap();
    let (disk, _) = disks(&out);
    let pcat = compute_tac(&out.series, &disk, Label::Pcat, fixed_fat()).unwrap();
    let peaks = find_peaks(&aorta(&out), &pcat).unwrap();
    assert_eq!((peaks.pa_index, peaks.ppcat_index), (8, 10));
    assert!((pcat.mean_hu[0] + 75.0).abs() < 1.0);
    assert!((pcat.mean_hu[10] + 53.0).abs() < 1.0);
    let s = enhancement_summary(&pcat, &peaks, &[-1, 1]).unwrap();
    assert!((s.delta_at_ppcat - 22.0).abs() <= 1.0, "{}", s.delta_at_ppcat);
    let truth = &out.truth.compartment(Label::Pcat).unwrap().enhancement;
    for &(k, d) in &s.offset_deltas {
        let programmed = truth[(8 + k) as usize] - truth[8];
        assert!((d - programmed).abs() <= 1.0, "Pa{k:+}: {d} vs {programmed}");
    }
}

#[test]
fn flat_curve_has_zero_deltas() {
    let out = simulate(&PhantomSpec::flow_free()).unwrap();
    let (disk, _) = disks(&out);
    let pcat = compute_tac(&out.series, &disk, Label::Pcat, fixed_fat()).unwrap();
    let peaks = find_peaks(&pcat, &pcat).unwrap();
    let s = enhancement_summary(&pcat, &peaks, &[0]).unwrap();
    assert!(s.delta_hu_vs_p1.iter().all(|&d| d == 0.0));
    assert!(s.offset_deltas.iter().all(|&(_, d)| d == 0.0));
    let v = apparent_volume_curve(&out.series, &disk, &[HuWindow::STANDARD]).unwrap();
    assert!(v.windows[0].pct_change.iter().all(|&p| p == 0.0));
}

#[test]
fn uniform_fat_volume_loss() {
    let out = simulate(&PhantomSpec::uniform_fat()).unwrap();
    let (disk, _) = disks(&out);
    let v = apparent_volume_curve(&out.series, &disk, &[HuWindow::STANDARD, HuWindow::EXTENDED]).unwrap();
    let std_loss = v.windows[0].max_loss_pct();
    let ext_loss = v.windows[1].max_loss_pct();
    assert!((std_loss - 13.75).abs() <= 0.5, "{std_loss}");
    assert!(ext_loss < std_loss);
    for k in 0..v.times_s.len() {
        assert!(v.windows[0].counts[k] <= v.windows[1].counts[k]);
    }
}

#[test]
fn stenosis_distal_delayed_and_damped() {
    let out = simulate(&PhantomSpec::stenosis()).unwrap();
    let (disk, _) = disks(&out);
    let cl = out.truth.centerline(Label::LumenLad).unwrap();
    let split = split_prox_dist(&disk, cl, STENOSIS_SPLIT_MM).unwrap();
    let c = compare_prox_dist(&out.series, &split, &split, fixed_fat()).unwrap();
    assert!(c.distal.peak_delta_hu < c.proximal.peak_delta_hu);
    assert!((c.peak_difference_hu - 3.8).abs() <= 1.0, "{}", c.peak_difference_hu);
    assert!(c.time_to_peak_difference_s >= 1.5, "{}", c.time_to_peak_difference_s);
}

#[test]
fn identical_sides_have_no_difference() {
    let out = simulate(&PhantomSpec::baseline()).unwrap();
    let (disk, _) = disks(&out);
    let cl = out.truth.centerline(Label::LumenLad).unwrap();
    let split = split_prox_dist(&disk, cl, STENOSIS_SPLIT_MM).unwrap();
    let c = compare_prox_dist(&out.series, &split, &split, fixed_fat()).unwrap();
    assert!(c.peak_difference_hu.abs() < 0.5, "{}", c.peak_difference_hu);
    assert_eq!(c.time_to_peak_difference_s, 0.0);
}

#[test]
fn sampled_tissue_slope_near_analytic() {
    let spec = PhantomSpec::baseline();
    let times = spec.scans.times();
    let curve = tissue_curve(324.0, 1.05, &spec.aif, 0.0, 1.0, &times);
    let analytic = 324.0 * 1.05 / 6000.0 * spec.aif.amplitude;
    let got = max_slope(&curve, &times).unwrap();
    assert!((got - analytic).abs() <= 0.1 * analytic, "{got} vs {analytic}");
}

#[test]
fn baseline_flows_recovered_without_noise() {
    let out = simulate(&PhantomSpec::baseline()).unwrap();
    let (_, pcat) = disks(&out);
    let aif = aorta(&out);
    let v0 = out.series.volume(0);
    let myo = slic_cluster(v0, &out.mask, Label::Myocardium, &SlicParams::default()).unwrap();
    let fat = slic_cluster(v0, &pcat, Label::Pcat, &SlicParams::default()).unwrap();
    let m = estimate_flow(&out.series, &myo, &aif, &FlowParams::with_density(1.05)).unwrap();
    let p = estimate_flow(&out.series, &fat, &aif, &FlowParams::with_density(0.92)).unwrap();
    assert!((m.mean - 324.0).abs() <= 32.4, "MYO {}", m.mean);
    assert!((p.mean - 75.0).abs() <= 7.5, "PCAT {}", p.mean);
    let ratio = p.mean / m.mean;
    assert!((0.20..=0.26).contains(&ratio), "{ratio}");

    // Halving the arterial enhancement doubles every estimate.
    let mut half = aif.clone();
    half.mean_hu = aif.mean_hu.iter().map(|x| aif.mean_hu[0] + 0.5 * (x - aif.mean_hu[0])).collect();
    let m2 = estimate_flow(&out.series, &myo, &half, &FlowParams::with_density(1.05)).unwrap();
    for (a, b) in m.mbf.iter().zip(&m2.mbf) {
        assert!((2.0 * a - b).abs() <= 1e-9 * b.abs().max(1.0));
    }
}

#[test]
fn zero_flow_depot_estimates_zero() {
    let mut spec = PhantomSpec::baseline();
    spec.compartment_mut(Label::Pcat).unwrap().mbf = 0.0;
    let out = simulate(&spec).unwrap();
    let (_, pcat) = disks(&out);
    let sv = slic_cluster(out.series.volume(0), &pcat, Label::Pcat, &SlicParams::default()).unwrap();
    let f = estimate_flow(&out.series, &sv, &aorta(&out), &FlowParams::with_density(0.92)).unwrap();
    assert!(f.mbf.iter().all(|&x| x == 0.0));
}

/// Share of voxels next to the intensity edge whose supervoxel's majority
/// side is their own side.
fn boundary_purity(compactness: f64) -> f64 {
    let g = Grid::new([20, 10, 10], [1.0; 3], [0.0; 3]).unwrap();
    let edge = 7;
    let vals = (0..g.len()).map(|i| if g.coords(i).0 < edge { -100.0 } else { 100.0 }).collect();
    let v = VolumeGrid::new(g, vals, None).unwrap();
    let m = LabelMask::new(g, vec![Label::Myocardium.code(); g.len()]).unwrap();
    let sv = slic_cluster(&v, &m, Label::Myocardium, &SlicParams { size: 125, compactness, iterations: 10 }).unwrap();
    let assign = sv.assignment();
    let left_share: Vec<f64> = sv
        .members
        .iter()
        .map(|mem| mem.iter().filter(|&&i| g.coords(i).0 < edge).count() as f64 / mem.len() as f64)
        .collect();
    let boundary: Vec<usize> = (0..g.len()).filter(|&i| (edge - 1..=edge).contains(&g.coords(i).0)).collect();
    let pure = boundary
        .iter()
        .filter(|&&i| {
            let left = g.coords(i).0 < edge;
            let share = left_share[assign[i] as usize];
            if left { share > 0.5 } else { share < 0.5 }
        })
        .count();
    pure as f64 / boundary.len() as f64
}

#[test]
fn low_compactness_follows_intensity_edge() {
    let low = boundary_purity(0.5);
    let high = boundary_purity(1000.0);
    assert!(low > 0.9, "low {low}");
    assert!(low >= high, "low {low} high {high}");
}
