//! Full pipeline: input → prep → roi → tac → flow → features → report.

use std::path::{Path, PathBuf};

use pcatdyn_core::feat::{drift_table, extract_features, FeatureDriftTable, FeatureVector};
use pcatdyn_core::flow::{estimate_flow, slic_cluster, FlowMap, SupervoxelSet};
use pcatdyn_core::phantom::{simulate, GroundTruth};
use pcatdyn_core::prep::{auto_reference, register_translation, stbf, ShiftRecord};
use pcatdyn_core::roi::{
    axial_disk_mask, effective_diameter_over, fat_select, read_centerline, remote_eat, split_prox_dist, Centerline,
    RemoteEat, VesselGeometry,
};
use pcatdyn_core::tac::{
    apparent_volume_curve, compare_prox_dist, compute_tac, enhancement_summary, find_peaks, EnhancementSummary,
    MembershipPolicy, PeakInfo, ProxDistComparison, TimeAttenuationCurve, VolumeCurve,
};
use pcatdyn_core::volgrid::{read_mask, read_series, write_mask};
use pcatdyn_core::{DynamicSeries, Label, LabelMask};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bundle::{Bundle, FileEntry};
use crate::config::{FeatureMembership, PrepSection, ReferenceScan, RoiSection, RunConfig, Source, TacSection};
use crate::error::{AtStage, CliError, CliResult, Stage};
use crate::plot::{LineChart, Series};
use crate::tables;

pub const REPORT_FILE: &str = "report.toml";

/// Fat depots reported next to PCAT, in display order.
pub const DEPOTS: [Label; 5] =
    [Label::Epicardial, Label::EatRemote, Label::Paracardial, Label::Subcutaneous, Label::Periaortic];

/// Everything loaded besides the series itself.
pub struct Inputs {
    pub mask: LabelMask,
    pub centerline: Centerline,
    pub seed: Option<u64>,
    pub truth: Option<GroundTruth>,
}

pub fn load_inputs(src: &Source, vessel: Label) -> CliResult<(DynamicSeries, Inputs)> {
    match src {
        Source::Phantom { spec, .. } => {
            let out = simulate(spec).at(Stage::Input)?;
            let centerline = out
                .truth
                .centerline(vessel)
                .cloned()
                .ok_or_else(|| CliError::config(format!("phantom has no {vessel} centerline")))?;
            Ok((out.series, Inputs { mask: out.mask, centerline, seed: Some(spec.noise.seed), truth: Some(out.truth) }))
        }
        Source::Measured { series, mask, centerline } => {
            let series = read_series(series).at(Stage::Input)?;
            let mask = read_mask(mask).at(Stage::Input)?;
            series.grid().ensure_same(mask.grid(), "series and mask").at(Stage::Input)?;
            let centerline = read_centerline(centerline).at(Stage::Input)?;
            Ok((series, Inputs { mask, centerline, seed: None, truth: None }))
        }
    }
}

pub struct Prepared {
    pub registered: DynamicSeries,
    /// Filtered copy of `registered`, when filtering is enabled.
    pub filtered: Option<DynamicSeries>,
    pub record: ShiftRecord,
}

impl Prepared {
    /// Series used for flow estimation.
    pub fn flow_series(&self) -> &DynamicSeries {
        self.filtered.as_ref().unwrap_or(&self.registered)
    }
}

pub fn resolve_reference(s: &DynamicSeries, mask: Option<&LabelMask>, r: ReferenceScan) -> CliResult<usize> {
    match r {
        ReferenceScan::Auto => auto_reference(s, mask).at(Stage::Prep),
        ReferenceScan::Index(k) if k < s.len() => Ok(k),
        ReferenceScan::Index(k) => Err(CliError::Stage {
            stage: Stage::Prep,
            source: pcatdyn_core::Error::InvalidInput(format!("reference scan {k} outside a {}-scan series", s.len())),
        }),
    }
}

pub fn prep_stage(s: DynamicSeries, mask: Option<&LabelMask>, p: &PrepSection) -> CliResult<Prepared> {
    let reference = resolve_reference(&s, mask, p.reference)?;
    let (registered, record) = if p.register {
        register_translation(&s, reference, p.search).at(Stage::Prep)?
    } else {
        let n = s.len();
        let record = ShiftRecord { reference, shifts: vec![[0; 3]; n], ncc: vec![1.0; n], degenerate: vec![false; n] };
        (s, record)
    };
    let filtered = if p.filter { Some(stbf(&registered, &p.filter_params()).at(Stage::Prep)?) } else { None };
    Ok(Prepared { registered, filtered, record })
}

pub struct RoiResult {
    pub geometry: VesselGeometry,
    pub disk_radius_mm: f64,
    /// Axial disks around the vessel, lumen excluded (PCAT code).
    pub disks: LabelMask,
    /// Disk voxels inside the fat window at the membership reference scan.
    pub pcat: LabelMask,
    pub remote: Option<RemoteEat>,
    /// Disks split into proximal and distal parts.
    pub split: Option<LabelMask>,
}

pub fn roi_stage(s: &DynamicSeries, mask: &LabelMask, cl: &Centerline, r: &RoiSection) -> CliResult<RoiResult> {
    let spec = r.region_spec();
    let vessel = r.vessel_label()?;
    let lumen = mask.only(vessel);
    let geometry = effective_diameter_over(&lumen, cl, spec.length_mm).at(Stage::Roi)?;
    let disks = axial_disk_mask(cl, &geometry, &spec, mask).at(Stage::Roi)?;
    if disks.count(Label::Pcat) == 0 {
        return Err(CliError::Stage { stage: Stage::Roi, source: pcatdyn_core::Error::EmptyRegion("PCAT disks".into()) });
    }
    if spec.membership_reference >= s.len() {
        return Err(CliError::Stage {
            stage: Stage::Roi,
            source: pcatdyn_core::Error::InvalidInput(format!(
                "membership reference {} outside the series",
                spec.membership_reference
            )),
        });
    }
    let pcat = fat_select(s.volume(spec.membership_reference), &disks, spec.fat_window).at(Stage::Roi)?;
    let remote = if mask.count(Label::Epicardial) > 0 {
        Some(remote_eat(mask, &[(cl, &geometry)], r.remote_factor).at(Stage::Roi)?)
    } else {
        None
    };
    let split = match r.split_mm {
        Some(s_star) => Some(split_prox_dist(&disks, cl, s_star).at(Stage::Roi)?),
        None => None,
    };
    Ok(RoiResult { disk_radius_mm: spec.disk_radius(&geometry), geometry, disks, pcat, remote, split })
}

pub struct TacResult {
    pub curves: Vec<TimeAttenuationCurve>,
    pub peaks: PeakInfo,
    pub summaries: Vec<EnhancementSummary>,
    pub volume: VolumeCurve,
    pub stenosis: Option<ProxDistComparison>,
    pub notes: Vec<String>,
}

/// In-range offsets around Pa, and a note for each dropped one.
pub fn usable_offsets(offsets: &[i64], pa: usize, n: usize) -> (Vec<i64>, Vec<String>) {
    let mut keep = Vec::new();
    let mut notes = Vec::new();
    for &k in offsets {
        let at = pa as i64 + k;
        if at >= 0 && at < n as i64 {
            keep.push(k);
        } else {
            notes.push(format!("offset Pa{k:+} falls outside the series and was skipped"));
        }
    }
    (keep, notes)
}

/// Masks the TAC stage reads besides the tissue labels.
#[derive(Clone, Copy)]
pub struct TacRegions<'a> {
    pub disks: &'a LabelMask,
    pub remote: Option<&'a LabelMask>,
    pub split: Option<&'a LabelMask>,
}

impl RoiResult {
    pub fn regions(&self) -> TacRegions<'_> {
        TacRegions { disks: &self.disks, remote: self.remote.as_ref().map(|r| &r.mask), split: self.split.as_ref() }
    }
}

/// Aorta and PCAT landmarks; PCAT uses fixed fat-window membership.
pub fn landmarks(s: &DynamicSeries, mask: &LabelMask, disks: &LabelMask, r: &RoiSection) -> CliResult<(TimeAttenuationCurve, TimeAttenuationCurve, PeakInfo)> {
    let aorta = compute_tac(s, mask, Label::Aorta, MembershipPolicy::whole_region()).at(Stage::Tac)?;
    let pcat = compute_tac(s, disks, Label::Pcat, r.fixed_fat_policy()).at(Stage::Tac)?;
    let peaks = find_peaks(&aorta, &pcat).at(Stage::Tac)?;
    Ok((aorta, pcat, peaks))
}

pub fn tac_stage(s: &DynamicSeries, mask: &LabelMask, regions: TacRegions<'_>, r: &RoiSection, t: &TacSection) -> CliResult<TacResult> {
    let fat = r.fixed_fat_policy();
    let whole = MembershipPolicy::whole_region();
    let (aorta, pcat, peaks) = landmarks(s, mask, regions.disks, r)?;
    let (offsets, mut notes) = usable_offsets(&t.offsets(), peaks.pa_index, s.len());

    let mut fat_curves = vec![pcat];
    for depot in DEPOTS {
        let source = if depot == Label::EatRemote { regions.remote } else { Some(mask) };
        match source {
            Some(m) if m.count(depot) > 0 => match compute_tac(s, m, depot, fat) {
                Ok(c) => fat_curves.push(c),
                Err(pcatdyn_core::Error::EmptyRegion(msg)) => notes.push(format!("{depot} skipped: no voxels ({msg})")),
                Err(e) => return Err(e).at(Stage::Tac),
            },
            _ => notes.push(format!("{depot} absent")),
        }
    }
    let summaries =
        fat_curves.iter().map(|c| enhancement_summary(c, &peaks, &offsets)).collect::<Result<Vec<_>, _>>().at(Stage::Tac)?;

    let mut curves = vec![aorta];
    if mask.count(Label::Myocardium) > 0 {
        curves.push(compute_tac(s, mask, Label::Myocardium, whole).at(Stage::Tac)?);
    }
    curves.extend(fat_curves);

    let spec = r.region_spec();
    let volume = apparent_volume_curve(s, regions.disks, &[spec.fat_window, spec.extended_window]).at(Stage::Tac)?;
    let stenosis = match regions.split {
        Some(split) => Some(compare_prox_dist(s, split, split, fat).at(Stage::Tac)?),
        None => None,
    };
    Ok(TacResult { curves, peaks, summaries, volume, stenosis, notes })
}

pub struct FlowResult {
    pub regions: Vec<(SupervoxelSet, FlowMap)>,
}

impl FlowResult {
    pub fn map(&self, label: Label) -> Option<&FlowMap> {
        self.regions.iter().map(|(_, m)| m).find(|m| m.label == label)
    }
}

/// Flow for the myocardium (if labelled) and the PCAT fat; clustering runs on
/// the first scan of `s`.
pub fn flow_stage(
    s: &DynamicSeries,
    mask: &LabelMask,
    pcat: &LabelMask,
    f: &crate::config::FlowSection,
) -> CliResult<FlowResult> {
    let aif = compute_tac(s, mask, Label::Aorta, MembershipPolicy::whole_region()).at(Stage::Flow)?;
    let slic = f.slic();
    let mut regions = Vec::new();
    let mut todo = Vec::new();
    if mask.count(Label::Myocardium) > 0 {
        todo.push((mask, Label::Myocardium, f.myocardium_density));
    }
    todo.push((pcat, Label::Pcat, f.pcat_density));
    for (m, label, density) in todo {
        let sv = slic_cluster(s.volume(0), m, label, &slic).at(Stage::Flow)?;
        let map = estimate_flow(s, &sv, &aif, &f.params(density)).at(Stage::Flow)?;
        regions.push((sv, map));
    }
    Ok(FlowResult { regions })
}

pub struct FeatureResult {
    pub vectors: Vec<FeatureVector>,
    pub drift: FeatureDriftTable,
}

/// Per-scan features inside the disks; `Fixed` membership uses `pcat` for
/// every scan.
pub fn feature_stage(
    s: &DynamicSeries,
    disks: &LabelMask,
    pcat: &LabelMask,
    peaks: &PeakInfo,
    r: &RoiSection,
    membership: FeatureMembership,
) -> CliResult<FeatureResult> {
    let window = r.region_spec().fat_window;
    let vectors = (0..s.len())
        .into_par_iter()
        .map(|k| {
            let v = s.volume(k);
            match membership {
                FeatureMembership::PerScan => extract_features(v, &fat_select(v, disks, window)?, Some(k)),
                FeatureMembership::Fixed => extract_features(v, pcat, Some(k)),
            }
        })
        .collect::<Result<Vec<_>, _>>()
        .at(Stage::Features)?;
    let drift = drift_table(&vectors, peaks).at(Stage::Features)?;
    Ok(FeatureResult { vectors, drift })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub config_sha256: String,
    pub source: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landmarks {
    pub p1_index: usize,
    pub pa_index: usize,
    pub ppcat_index: usize,
    pub p1_time_s: f64,
    pub pa_time_s: f64,
    pub ppcat_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepSummary {
    pub reference: usize,
    pub registered: bool,
    pub filtered: bool,
    pub max_abs_shift: i32,
    pub degenerate_scans: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometrySummary {
    pub median_d_eff_mm: f64,
    pub slices: usize,
    pub disk_radius_mm: f64,
    pub disk_voxels: usize,
    pub pcat_voxels: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub remote_eat_voxels: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhancementRow {
    pub region: String,
    pub membership: String,
    pub p1_voxels: usize,
    pub delta_at_ppcat_hu: f64,
    pub peak_delta_hu: f64,
    pub time_to_peak_s: f64,
    pub offsets: Vec<i64>,
    pub offset_delta_hu: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeRow {
    pub window_lo_hu: f64,
    pub window_hi_hu: f64,
    pub p1_volume_cm3: f64,
    pub max_loss_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRow {
    pub region: String,
    pub supervoxels: usize,
    pub density: f64,
    pub aif_peak_hu: f64,
    pub mean_mbf: f64,
    pub median_mbf: f64,
    pub clamped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSummary {
    pub membership: String,
    pub scans: Vec<usize>,
    pub features: usize,
    pub defined: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stable_fraction: Option<f64>,
    pub stable: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StenosisSummary {
    pub split_mm: f64,
    pub proximal_peak_delta_hu: f64,
    pub distal_peak_delta_hu: f64,
    pub peak_difference_hu: f64,
    pub proximal_time_to_peak_s: f64,
    pub distal_time_to_peak_s: f64,
    pub time_to_peak_difference_s: f64,
}

/// Structured summary written as `report.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pcat_to_myo_flow_ratio: Option<f64>,
    pub notes: Vec<String>,
    pub provenance: Provenance,
    pub landmarks: Landmarks,
    pub prep: PrepSummary,
    pub geometry: GeometrySummary,
    pub enhancement: Vec<EnhancementRow>,
    pub volume: Vec<VolumeRow>,
    pub flow: Vec<FlowRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drift: Option<DriftSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stenosis: Option<StenosisSummary>,
    pub files: Vec<FileEntry>,
}

impl RunReport {
    pub fn enhancement(&self, region: Label) -> Option<&EnhancementRow> {
        self.enhancement.iter().find(|e| e.region == region.name())
    }

    pub fn flow(&self, region: Label) -> Option<&FlowRow> {
        self.flow.iter().find(|f| f.region == region.name())
    }

    pub fn load(dir: &Path) -> CliResult<RunReport> {
        let p = dir.join(REPORT_FILE);
        let text = std::fs::read_to_string(&p).map_err(|e| CliError::output(&p, e))?;
        toml::from_str(&text).map_err(|e| CliError::Verify(format!("{}: {e}", p.display())))
    }
}

/// Everything a run computed, before it is written out.
pub struct RunOutcome {
    pub inputs: Inputs,
    pub prepared: Prepared,
    pub roi: RoiResult,
    pub tac: TacResult,
    pub flow: Option<FlowResult>,
    pub features: Option<FeatureResult>,
}

/// Executes every stage in memory.
pub fn execute(cfg: &RunConfig, workdir: &Path) -> CliResult<RunOutcome> {
    cfg.validate()?;
    let src = cfg.source(workdir)?;
    let vessel = cfg.roi.vessel_label()?;
    let (series, inputs) = load_inputs(&src, vessel)?;
    let prepared = prep_stage(series, Some(&inputs.mask), &cfg.prep)?;
    let s = &prepared.registered;
    let roi = roi_stage(s, &inputs.mask, &inputs.centerline, &cfg.roi)?;
    let tac = tac_stage(s, &inputs.mask, roi.regions(), &cfg.roi, &cfg.tac)?;
    let flow = if cfg.flow.enabled {
        Some(flow_stage(prepared.flow_series(), &inputs.mask, &roi.pcat, &cfg.flow)?)
    } else {
        None
    };
    let features = if cfg.features.enabled {
        Some(feature_stage(s, &roi.disks, &roi.pcat, &tac.peaks, &cfg.roi, cfg.features.membership)?)
    } else {
        None
    };
    Ok(RunOutcome { inputs, prepared, roi, tac, flow, features })
}

/// Runs the pipeline and writes the bundle into `cfg.output.dir`.
pub fn run_pipeline(cfg: &RunConfig, workdir: &Path) -> CliResult<(PathBuf, RunReport)> {
    cfg.validate()?;
    let target = workdir.join(&cfg.output.dir);
    let bundle = Bundle::create(&target)?;
    let outcome = execute(cfg, workdir)?;
    let report = write_outcome(&bundle, cfg, &outcome)?;
    let dir = bundle.commit()?;
    Ok((dir, report))
}

/// As [`run_pipeline`], inside a pool of `threads` workers.
pub fn run_with_threads(cfg: &RunConfig, workdir: &Path, threads: Option<usize>) -> CliResult<(PathBuf, RunReport)> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
            pool.install(|| run_pipeline(cfg, workdir))
        }
        None => run_pipeline(cfg, workdir),
    }
}

fn source_name(cfg: &RunConfig) -> String {
    let i = &cfg.input;
    if let Some(p) = &i.phantom {
        format!("phantom preset {p}")
    } else if let Some(p) = &i.phantom_spec {
        format!("phantom spec {p}")
    } else {
        format!("series {}", i.series.as_deref().unwrap_or(""))
    }
}

fn write_outcome(bundle: &Bundle, cfg: &RunConfig, o: &RunOutcome) -> CliResult<RunReport> {
    let s = &o.prepared.registered;
    let times = s.times();
    let mut notes = o.tac.notes.clone();

    bundle.write("config.toml", cfg.to_toml_string())?;
    bundle.write("shifts.csv", tables::shifts(&o.prepared.record))?;
    bundle.write("geometry.csv", tables::geometry(&o.roi.geometry))?;
    bundle.write("tac.csv", tables::tacs(&o.tac.curves))?;
    bundle.write("enhancement.csv", tables::enhancement(&o.tac.summaries))?;
    bundle.write("volume.csv", tables::volume(&o.tac.volume))?;
    write_mask(&o.roi.disks, &bundle.path("masks/disk")?).at(Stage::Output)?;
    write_mask(&o.roi.pcat, &bundle.path("masks/pcat")?).at(Stage::Output)?;
    if let Some(r) = &o.roi.remote {
        write_mask(&r.mask, &bundle.path("masks/eat_remote")?).at(Stage::Output)?;
        if r.empty {
            notes.push("remote EAT is empty at the configured exclusion factor".into());
        }
    }
    if let Some(split) = &o.roi.split {
        write_mask(split, &bundle.path("masks/split")?).at(Stage::Output)?;
    }
    if let Some(t) = &o.inputs.truth {
        bundle.write("phantom_truth.csv", truth_table(t))?;
    }

    let mut flow_rows = Vec::new();
    if let Some(f) = &o.flow {
        let pairs: Vec<(&SupervoxelSet, &FlowMap)> = f.regions.iter().map(|(a, b)| (a, b)).collect();
        bundle.write("flow_supervoxels.csv", tables::supervoxels(&pairs))?;
        let maps: Vec<&FlowMap> = f.regions.iter().map(|(_, m)| m).collect();
        bundle.write("flow_regions.csv", tables::flow_regions(&maps))?;
        for m in maps {
            let clamped = m.clamped.iter().filter(|&&c| c).count();
            if clamped > 0 {
                notes.push(format!("{}: {clamped} negative supervoxel flows clamped to 0", m.label));
            }
            flow_rows.push(FlowRow {
                region: m.label.name().into(),
                supervoxels: m.mbf.len(),
                density: m.density,
                aif_peak_hu: m.aif_peak_hu,
                mean_mbf: m.mean,
                median_mbf: m.median,
                clamped,
            });
        }
    } else {
        notes.push("flow estimation disabled".into());
    }
    let ratio = o.flow.as_ref().and_then(|f| match (f.map(Label::Pcat), f.map(Label::Myocardium)) {
        (Some(p), Some(m)) if m.mean > 0.0 => Some(p.mean / m.mean),
        _ => None,
    });

    let drift = match &o.features {
        Some(fr) => {
            bundle.write("features.csv", tables::features(&fr.vectors, times))?;
            bundle.write("drift.csv", tables::drift(&fr.drift, None))?;
            bundle.write("drift_plot.csv", tables::drift(&fr.drift, Some(tables::DRIFT_PLOT_LIMIT)))?;
            let d = &fr.drift;
            Some(DriftSummary {
                membership: match cfg.features.membership {
                    FeatureMembership::PerScan => "per-scan".into(),
                    FeatureMembership::Fixed => "fixed".into(),
                },
                scans: d.scans.clone(),
                features: d.names.len(),
                defined: d.max_abs_pct.iter().flatten().count(),
                stable_fraction: d.stable_fraction,
                stable: d
                    .names
                    .iter()
                    .zip(&d.max_abs_pct)
                    .filter(|(_, m)| m.is_some_and(|m| m < pcatdyn_core::feat::STABLE_LIMIT_PCT))
                    .map(|(n, _)| n.clone())
                    .collect(),
            })
        }
        None => {
            notes.push("feature extraction disabled".into());
            None
        }
    };

    let stenosis = o.tac.stenosis.as_ref().map(|c| StenosisSummary {
        split_mm: cfg.roi.split_mm.expect("split configured"),
        proximal_peak_delta_hu: c.proximal.peak_delta_hu,
        distal_peak_delta_hu: c.distal.peak_delta_hu,
        peak_difference_hu: c.peak_difference_hu,
        proximal_time_to_peak_s: c.proximal.time_to_peak_s,
        distal_time_to_peak_s: c.distal.time_to_peak_s,
        time_to_peak_difference_s: c.time_to_peak_difference_s,
    });
    if let Some(c) = &o.tac.stenosis {
        bundle.write("stenosis.csv", tables::stenosis(c, times))?;
    }

    if cfg.output.plots {
        for (name, svg) in plots(o) {
            bundle.write(&format!("plots/{name}"), svg)?;
        }
        if o.tac.stenosis.is_none() {
            notes.push("stenosis chart omitted: no proximal/distal split configured".into());
        }
    }

    let p = &o.tac.peaks;
    let rec = &o.prepared.record;
    let fat_tag = |c: &TimeAttenuationCurve| c.policy.tag().to_string();
    let enhancement = o
        .tac
        .summaries
        .iter()
        .map(|e| {
            let c = o.tac.curves.iter().find(|c| c.label == e.label).expect("curve for summary");
            EnhancementRow {
                region: e.label.name().into(),
                membership: fat_tag(c),
                p1_voxels: c.voxel_count[0],
                delta_at_ppcat_hu: e.delta_at_ppcat,
                peak_delta_hu: e.peak_delta_hu,
                time_to_peak_s: e.time_to_peak_s,
                offsets: e.offset_deltas.iter().map(|x| x.0).collect(),
                offset_delta_hu: e.offset_deltas.iter().map(|x| x.1).collect(),
            }
        })
        .collect();
    let files = bundle.checksums(&[REPORT_FILE])?;
    let report = RunReport {
        pcat_to_myo_flow_ratio: ratio,
        notes,
        provenance: Provenance {
            version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: cfg.hash(),
            source: source_name(cfg),
            seed: o.inputs.seed,
        },
        landmarks: Landmarks {
            p1_index: p.p1_index,
            pa_index: p.pa_index,
            ppcat_index: p.ppcat_index,
            p1_time_s: p.p1_time_s,
            pa_time_s: p.pa_time_s,
            ppcat_time_s: p.ppcat_time_s,
        },
        prep: PrepSummary {
            reference: rec.reference,
            registered: cfg.prep.register,
            filtered: o.prepared.filtered.is_some(),
            max_abs_shift: rec.shifts.iter().flatten().map(|v| v.abs()).max().unwrap_or(0),
            degenerate_scans: rec.degenerate.iter().enumerate().filter(|(_, &d)| d).map(|(k, _)| k).collect(),
        },
        geometry: GeometrySummary {
            median_d_eff_mm: o.roi.geometry.median_d_eff_mm,
            slices: o.roi.geometry.slices.len(),
            disk_radius_mm: o.roi.disk_radius_mm,
            disk_voxels: o.roi.disks.count(Label::Pcat),
            pcat_voxels: o.roi.pcat.count(Label::Pcat),
            remote_eat_voxels: o.roi.remote.as_ref().map(|r| r.mask.count(Label::EatRemote)),
        },
        enhancement,
        volume: o
            .tac
            .volume
            .windows
            .iter()
            .map(|w| VolumeRow {
                window_lo_hu: w.window.lo,
                window_hi_hu: w.window.hi,
                p1_volume_cm3: w.volume_cm3[0],
                max_loss_pct: w.max_loss_pct(),
            })
            .collect(),
        flow: flow_rows,
        drift,
        stenosis,
        files,
    };
    let text = toml::to_string(&report).map_err(|e| CliError::Verify(format!("report serialisation: {e}")))?;
    bundle.write(REPORT_FILE, text)?;
    Ok(report)
}

pub fn truth_table(t: &GroundTruth) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["region", "mbf", "density", "baseline_hu", "baseline_spread_hu", "voxels", "peak_enhancement_hu", "time_to_peak_s"])
        .expect("in-memory write");
    for c in &t.compartments {
        w.write_record([
            c.label.name().to_string(),
            tables::num(c.mbf),
            tables::num(c.density),
            tables::num(c.baseline_hu),
            tables::num(c.baseline_spread_hu),
            c.voxel_count.to_string(),
            tables::num(c.peak_enhancement()),
            tables::num(c.time_to_peak_s),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Fat-depot enhancement and blood-pool charts with a dashed Pa marker.
pub fn tac_charts(curves: &[TimeAttenuationCurve], pa_time_s: f64) -> [(&'static str, String); 2] {
    let mut tac = LineChart::new("Fat depot enhancement", "time (s)", "enhancement vs P1 (HU)");
    let mut aif = LineChart::new("Blood pool and myocardium", "time (s)", "mean (HU)");
    for c in curves {
        if c.label == Label::Aorta || c.label == Label::Myocardium {
            aif.series.push(Series::new(c.label.name(), &c.times_s, &c.mean_hu));
        } else {
            tac.series.push(Series::new(c.label.name(), &c.times_s, &c.delta()));
        }
    }
    tac.marker = Some((pa_time_s, "Pa".into()));
    aif.marker = Some((pa_time_s, "Pa".into()));
    [("tac.svg", tac.to_svg()), ("aif.svg", aif.to_svg())]
}

pub fn volume_chart(v: &VolumeCurve, pa_time_s: Option<f64>) -> String {
    let mut vol = LineChart::new("Apparent PCAT volume", "time (s)", "change vs P1 (%)");
    for w in &v.windows {
        vol.series.push(Series::new(format!("{}", w.window), &v.times_s, &w.pct_change));
    }
    vol.marker = pa_time_s.map(|t| (t, "Pa".to_string()));
    vol.to_svg()
}

/// Drift per feature, clipped to the display range.
pub fn drift_chart(d: &FeatureDriftTable, pa_index: usize) -> String {
    let mut drift = LineChart::new("Feature change vs P1", "scan", "change (%)");
    let xs: Vec<f64> = d.scans.iter().map(|&k| k as f64).collect();
    for (name, row) in d.names.iter().zip(&d.pct) {
        drift.series.push(Series { name: name.clone(), points: xs.iter().copied().zip(row.iter().copied()).collect() });
    }
    drift.y_clip = Some((-tables::DRIFT_PLOT_LIMIT, tables::DRIFT_PLOT_LIMIT));
    drift.marker = Some((pa_index as f64, "Pa".into()));
    drift.to_svg()
}

pub fn stenosis_chart(c: &ProxDistComparison, times: &[f64]) -> String {
    let mut st = LineChart::new("Proximal vs distal PCAT", "time (s)", "enhancement vs P1 (HU)");
    st.series.push(Series::new(c.proximal.label.name(), times, &c.proximal.delta_hu_vs_p1));
    st.series.push(Series::new(c.distal.label.name(), times, &c.distal.delta_hu_vs_p1));
    st.to_svg()
}

/// Charts of a finished run. The stenosis chart is only drawn with a split.
pub fn plots(o: &RunOutcome) -> Vec<(&'static str, String)> {
    let times = o.prepared.registered.times();
    let pa = o.tac.peaks.pa_time_s;
    let mut out: Vec<(&'static str, String)> = tac_charts(&o.tac.curves, pa).into_iter().collect();
    out.push(("volume.svg", volume_chart(&o.tac.volume, Some(pa))));
    if let Some(f) = &o.features {
        out.push(("drift.svg", drift_chart(&f.drift, o.tac.peaks.pa_index)));
    }
    if let Some(c) = &o.tac.stenosis {
        out.push(("stenosis.svg", stenosis_chart(c, times)));
    }
    out
}

/// Checks every listed checksum of a finished run.
pub fn verify_bundle(dir: &Path) -> CliResult<RunReport> {
    let report = RunReport::load(dir)?;
    for f in &report.files {
        let p = dir.join(&f.path);
        let bytes = std::fs::read(&p).map_err(|e| CliError::Verify(format!("{}: {e}", p.display())))?;
        if crate::bundle::sha256_hex(&bytes) != f.sha256 || bytes.len() as u64 != f.bytes {
            return Err(CliError::Verify(format!("{} does not match its recorded checksum", f.path)));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_outside_series_dropped() {
        let (keep, notes) = usable_offsets(&[-2, -1, 1, 2], 9, 11);
        assert_eq!(keep, vec![-2, -1, 1]);
        assert_eq!(notes.len(), 1);
        assert!(notes[0].contains("Pa+2"));
    }
}
