//! Subcommands. Each stage reads and writes the volume/series formats so it
//! can run on its own; `run` chains them from one config file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use pcatdyn_core::flow::FlowMap;
use pcatdyn_core::phantom::{simulate, PhantomSpec};
use pcatdyn_core::prep::FilterParams;
use pcatdyn_core::roi::{read_centerline, write_centerline};
use pcatdyn_core::tac::apparent_volume_curve;
use pcatdyn_core::volgrid::{read_mask, read_series, write_mask, write_series, write_volume};
use pcatdyn_core::VolumeGrid;

use crate::bundle::Bundle;
use crate::config::{FeatureMembership, FlowSection, PrepSection, ReferenceScan, RoiSection, RunConfig, TacSection};
use crate::error::{AtStage, CliError, CliResult, Stage};
use crate::pipeline::{self, TacRegions};
use crate::tables;

#[derive(Debug, Parser)]
#[command(name = "pcatdyn", version, about = "Dynamic CT perfusion analysis of pericoronary adipose tissue")]
pub struct Cli {
    /// Directory all relative paths are resolved against.
    #[arg(long, global = true, default_value = ".")]
    pub workdir: PathBuf,
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true, env = "PCATDYN_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a phantom series with its mask, centerlines and truth.
    Phantom(PhantomArgs),
    /// Register and filter a series.
    Prep(PrepArgs),
    /// Vessel geometry, PCAT disks and derived masks.
    Roi(RoiArgs),
    /// Time-attenuation curves, landmarks and enhancement.
    Tac(TacArgs),
    /// Supervoxel blood flow.
    Flow(FlowArgs),
    /// Per-scan features and their drift.
    Features(FeatureArgs),
    /// Apparent PCAT volume per scan and fat window.
    VolumeCurve(VolumeArgs),
    /// Verify and summarise a finished run.
    Report(ReportArgs),
    /// Full pipeline from a config file.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    #[arg(long, required_unless_present = "spec", conflicts_with = "spec")]
    pub preset: Option<String>,
    /// Phantom description file.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PrepArgs {
    #[arg(long)]
    pub series: PathBuf,
    /// Label mask used to find the aorta peak for `--ref-scan auto`.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long, default_value = "auto")]
    pub ref_scan: ReferenceScan,
    /// Filter parameter file; defaults apply when absent.
    #[arg(long)]
    pub filter: Option<PathBuf>,
    #[arg(long)]
    pub no_filter: bool,
    #[arg(long)]
    pub no_register: bool,
    #[arg(long, default_value_t = 3)]
    pub search: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Default)]
pub struct RoiOpts {
    /// Lumen label of the analysed vessel.
    #[arg(long)]
    pub vessel: Option<String>,
    #[arg(long)]
    pub diameter_factor: Option<f64>,
    #[arg(long)]
    pub length_mm: Option<f64>,
    #[arg(long)]
    pub membership_reference: Option<usize>,
    #[arg(long)]
    pub remote_factor: Option<f64>,
    #[arg(long)]
    pub split_mm: Option<f64>,
}

impl RoiOpts {
    pub fn section(&self) -> CliResult<RoiSection> {
        let mut r = RoiSection::default();
        if let Some(v) = &self.vessel {
            r.vessel = v.clone();
        }
        if let Some(v) = self.diameter_factor {
            r.diameter_factor = v;
        }
        if let Some(v) = self.length_mm {
            r.length_mm = v;
        }
        if let Some(v) = self.membership_reference {
            r.membership_reference = v;
        }
        if let Some(v) = self.remote_factor {
            r.remote_factor = v;
        }
        r.split_mm = self.split_mm;
        // Reuse the config checks on a config holding only these settings.
        let cfg = RunConfig {
            input: crate::config::InputSection { phantom: Some("baseline".into()), ..Default::default() },
            roi: r.clone(),
            ..Default::default()
        };
        cfg.validate()?;
        Ok(r)
    }
}

#[derive(Debug, Args)]
pub struct RoiArgs {
    #[arg(long)]
    pub series: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long)]
    pub centerline: PathBuf,
    #[command(flatten)]
    pub roi: RoiOpts,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TacArgs {
    #[arg(long)]
    pub series: PathBuf,
    /// Tissue label mask (must contain the aorta).
    #[arg(long)]
    pub mask: PathBuf,
    /// PCAT disk mask written by `roi`.
    #[arg(long)]
    pub disk: PathBuf,
    #[arg(long)]
    pub remote: Option<PathBuf>,
    /// Proximal/distal mask written by `roi --split-mm`.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub offsets: usize,
    #[command(flatten)]
    pub roi: RoiOpts,
    #[arg(long)]
    pub plots: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FlowArgs {
    #[arg(long)]
    pub series: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    /// PCAT fat mask written by `roi`.
    #[arg(long)]
    pub pcat: PathBuf,
    #[arg(long)]
    pub myocardium_density: Option<f64>,
    #[arg(long)]
    pub pcat_density: Option<f64>,
    #[arg(long)]
    pub supervoxel_size: Option<usize>,
    #[arg(long)]
    pub compactness: Option<f64>,
    /// Also write per-voxel flow volumes.
    #[arg(long)]
    pub flow_map: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FeatureArgs {
    #[arg(long)]
    pub series: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long)]
    pub disk: PathBuf,
    /// Fixed-membership mask (required for `--membership fixed`).
    #[arg(long)]
    pub pcat: Option<PathBuf>,
    #[arg(long, default_value = "per-scan")]
    pub membership: FeatureMembership,
    #[command(flatten)]
    pub roi: RoiOpts,
    #[arg(long)]
    pub plots: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VolumeArgs {
    #[arg(long)]
    pub series: PathBuf,
    #[arg(long)]
    pub disk: PathBuf,
    #[command(flatten)]
    pub roi: RoiOpts,
    #[arg(long)]
    pub plots: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub run_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
}

/// Runs the parsed command line; returns the text printed on success.
pub fn execute(cli: &Cli) -> CliResult<String> {
    match cli.threads {
        Some(0) => Err(CliError::config("--threads must be >= 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::config(format!("thread pool: {e}")))?
            .install(|| dispatch(&cli.command, &cli.workdir)),
        None => dispatch(&cli.command, &cli.workdir),
    }
}

fn dispatch(cmd: &Command, wd: &Path) -> CliResult<String> {
    match cmd {
        Command::Phantom(a) => phantom(a, wd),
        Command::Prep(a) => prep(a, wd),
        Command::Roi(a) => roi(a, wd),
        Command::Tac(a) => tac(a, wd),
        Command::Flow(a) => flow(a, wd),
        Command::Features(a) => features(a, wd),
        Command::VolumeCurve(a) => volume_curve(a, wd),
        Command::Report(a) => report(a, wd),
        Command::Run(a) => run(a, wd),
    }
}

fn series_at(wd: &Path, p: &Path) -> CliResult<pcatdyn_core::DynamicSeries> {
    read_series(&wd.join(p)).at(Stage::Input)
}

fn mask_at(wd: &Path, p: &Path) -> CliResult<pcatdyn_core::LabelMask> {
    read_mask(&wd.join(p)).at(Stage::Input)
}

fn wrote(dir: &Path) -> String {
    format!("wrote {}\n", dir.display())
}

fn phantom(a: &PhantomArgs, wd: &Path) -> CliResult<String> {
    let mut spec = match (&a.preset, &a.spec) {
        (Some(name), _) => PhantomSpec::preset(name).ok_or_else(|| {
            CliError::config(format!("unknown preset {name:?} (known: {})", PhantomSpec::PRESETS.join(", ")))
        })?,
        (None, Some(p)) => PhantomSpec::load(&wd.join(p)).map_err(|e| CliError::config(e.to_string()))?,
        (None, None) => return Err(CliError::config("--preset or --spec required")),
    };
    if let Some(s) = a.noise {
        spec.noise.sigma_hu = s;
    }
    if let Some(s) = a.seed {
        spec.noise.seed = s;
    }
    spec.validate().map_err(|e| CliError::config(e.to_string()))?;
    let bundle = Bundle::create(&wd.join(&a.out))?;
    let out = simulate(&spec).at(Stage::Input)?;
    bundle.write("spec.toml", spec.to_toml_string())?;
    write_series(&out.series, &bundle.path("series.toml")?, "scan").at(Stage::Output)?;
    write_mask(&out.mask, &bundle.path("mask")?).at(Stage::Output)?;
    for (label, cl) in &out.centerlines {
        write_centerline(cl, &bundle.path(&format!("centerline_{}.csv", label.name()))?).at(Stage::Output)?;
    }
    bundle.write("truth.csv", pipeline::truth_table(&out.truth))?;
    Ok(wrote(&bundle.commit()?))
}

fn prep(a: &PrepArgs, wd: &Path) -> CliResult<String> {
    let mut p = PrepSection {
        register: !a.no_register,
        reference: a.ref_scan,
        search: a.search,
        filter: !a.no_filter,
        ..Default::default()
    };
    if let Some(f) = &a.filter {
        let path = wd.join(f);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let fp: FilterParams = toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        fp.validate().map_err(|e| CliError::config(e.to_string()))?;
        p.sigma_spatial_mm = fp.sigma_spatial_mm;
        p.sigma_time_s = fp.sigma_time_s;
        p.sigma_range_hu = fp.sigma_range_hu;
        p.spatial_radius = fp.spatial_radius;
        p.time_radius = fp.time_radius;
    }
    let bundle = Bundle::create(&wd.join(&a.out))?;
    let s = series_at(wd, &a.series)?;
    let mask = a.mask.as_ref().map(|m| mask_at(wd, m)).transpose()?;
    let prepared = pipeline::prep_stage(s, mask.as_ref(), &p)?;
    write_series(prepared.flow_series(), &bundle.path("series.toml")?, "scan").at(Stage::Output)?;
    bundle.write("shifts.csv", tables::shifts(&prepared.record))?;
    Ok(wrote(&bundle.commit()?))
}

fn roi(a: &RoiArgs, wd: &Path) -> CliResult<String> {
    let r = a.roi.section()?;
    let bundle = Bundle::create(&wd.join(&a.out))?;
    let s = series_at(wd, &a.series)?;
    let mask = mask_at(wd, &a.mask)?;
    let cl = read_centerline(&wd.join(&a.centerline)).at(Stage::Input)?;
    let res = pipeline::roi_stage(&s, &mask, &cl, &r)?;
    write_mask(&res.disks, &bundle.path("disk")?).at(Stage::Output)?;
    write_mask(&res.pcat, &bundle.path("pcat")?).at(Stage::Output)?;
    if let Some(rem) = &res.remote {
        write_mask(&rem.mask, &bundle.path("eat_remote")?).at(Stage::Output)?;
    }
    if let Some(split) = &res.split {
        write_mask(split, &bundle.path("split")?).at(Stage::Output)?;
    }
    bundle.write("geometry.csv", tables::geometry(&res.geometry))?;
    let mut msg = format!(
        "median effective diameter {:.4} mm over {} slices; disk radius {:.4} mm\n",
        res.geometry.median_d_eff_mm,
        res.geometry.slices.len(),
        res.disk_radius_mm
    );
    msg.push_str(&wrote(&bundle.commit()?));
    Ok(msg)
}

fn landmark_table(p: &pcatdyn_core::tac::PeakInfo) -> String {
    format!(
        "landmark,scan,time_s\nP1,{},{}\nPa,{},{}\nPpcat,{},{}\n",
        p.p1_index,
        tables::num(p.p1_time_s),
        p.pa_index,
        tables::num(p.pa_time_s),
        p.ppcat_index,
        tables::num(p.ppcat_time_s)
    )
}

fn tac(a: &TacArgs, wd: &Path) -> CliResult<String> {
    let r = a.roi.section()?;
    let t = TacSection { offset_scans: a.offsets };
    let bundle = Bundle::create(&wd.join(&a.out))?;
    let s = series_at(wd, &a.series)?;
    let mask = mask_at(wd, &a.mask)?;
    let disks = mask_at(wd, &a.disk)?;
    let remote = a.remote.as_ref().map(|p| mask_at(wd, p)).transpose()?;
    let split = a.split.as_ref().map(|p| mask_at(wd, p)).transpose()?;
    let regions = TacRegions { disks: &disks, remote: remote.as_ref(), split: split.as_ref() };
    let res = pipeline::tac_stage(&s, &mask, regions, &r, &t)?;
    bundle.write("tac.csv", tables::tacs(&res.curves))?;
    bundle.write("enhancement.csv", tables::enhancement(&res.summaries))?;
    bundle.write("landmarks.csv", landmark_table(&res.peaks))?;
    if let Some(c) = &res.stenosis {
        bundle.write("stenosis.csv", tables::stenosis(c, s.times()))?;
    }
    if a.plots {
        for (name, svg) in pipeline::tac_charts(&res.curves, res.peaks.pa_time_s) {
            bundle.write(&format!("plots/{name}"), svg)?;
        }
        if let Some(c) = &res.stenosis {
            bundle.write("plots/stenosis.svg", pipeline::stenosis_chart(c, s.times()))?;
        }
    }
    let mut msg = String::new();
    let p = &res.peaks;
    let _ = writeln!(msg, "P1 scan {}, Pa scan {}, Ppcat scan {}", p.p1_index, p.pa_index, p.ppcat_index);
    for e in &res.summaries {
        let _ = writeln!(msg, "{}: delta at Ppcat {:.3} HU", e.label, e.delta_at_ppcat);
    }
    for n in &res.notes {
        let _ = writeln!(msg, "note: {n}");
    }
    msg.push_str(&wrote(&bundle.commit()?));
    Ok(msg)
}

fn flow(a: &FlowArgs, wd: &Path) -> CliResult<String> {
    let mut f = FlowSection::default();
    if let Some(v) = a.myocardium_density {
        f.myocardium_density = v;
    }
    if let Some(v) = a.pcat_density {
        f.pcat_density = v;
    }
    if let Some(v) = a.supervoxel_size {
        f.supervoxel_size = v;
    }
    if let Some(v) = a.compactness {
        f.compactness = v;
    }
    RunConfig {
        input: crate::config::InputSection { phantom: Some("baseline".into()), ..Default::default() },
        flow: f.clone(),
        ..Default::default()
    }
    .validate()?;
    let bundle = Bundle::create(&wd.join(&a.out))?;
    let s = series_at(wd, &a.series)?;
    let mask = mask_at(wd, &a.mask)?;
    let pcat = mask_at(wd, &a.pcat)?;
    let res = pipeline::flow_stage(&s, &mask, &pcat, &f)?;
    let pairs: Vec<_> = res.regions.iter().map(|(a, b)| (a, b)).collect();
    bundle.write("flow_supervoxels.csv", tables::supervoxels(&pairs))?;
    let maps: Vec<&FlowMap> = res.regions.iter().map(|(_, m)| m).collect();
    bundle.write("flow_regions.csv", tables::flow_regions(&maps))?;
    if a.flow_map {
        for (sv, m) in &res.regions {
            let mut values = vec![0.0f32; sv.grid.len()];
            for (members, &mbf) in sv.members.iter().zip(&m.mbf) {
                for &i in members {
                    values[i] = mbf as f32;
                }
            }
            let v = VolumeGrid::new(sv.grid, values, None).at(Stage::Output)?;
            write_volume(&v, &bundle.path(&format!("flow_map_{}", m.label.name()))?).at(Stage::Output)?;
        }
    }
    let mut msg = String::new();
    for m in &maps {
        let _ = writeln!(msg, "{}: mean {:.3}, median {:.3} mL/100g-min over {} supervoxels", m.label, m.mean, m.median, m.mbf.len());
    }
    msg.push_str(&wrote(&bundle.commit()?));
    Ok(msg)
}

fn features(a: &FeatureArgs, wd: &Path) -> CliResult<String> {
    let r = a.roi.section()?;
    if a.membership == FeatureMembership::Fixed && a.pcat.is_none() {
        return Err(CliError::config("--membership fixed needs --pcat"));
    }
    let bundle = Bundle::create(&wd.join(&a.out))?;
    let s = series_at(wd, &a.series)?;
    let mask = mask_at(wd, &a.mask)?;
    let disks = mask_at(wd, &a.disk)?;
    let pcat = match &a.pcat {
        Some(p) => mask_at(wd, p)?,
        None => disks.clone(),
    };
    let (_, _, peaks) = pipeline::landmarks(&s, &mask, &disks, &r)?;
    let res = pipeline::feature_stage(&s, &disks, &pcat, &peaks, &r, a.membership)?;
    bundle.write("features.csv", tables::features(&res.vectors, s.times()))?;
    bundle.write("drift.csv", tables::drift(&res.drift, None))?;
    bundle.write("drift_plot.csv", tables::drift(&res.drift, Some(tables::DRIFT_PLOT_LIMIT)))?;
    if a.plots {
        bundle.write("plots/drift.svg", pipeline::drift_chart(&res.drift, peaks.pa_index))?;
    }
    let mut msg = match res.drift.stable_fraction {
        Some(f) => format!("stable features: {:.1}% of defined\n", 100.0 * f),
        None => "no feature is defined at every scan\n".to_string(),
    };
    msg.push_str(&wrote(&bundle.commit()?));
    Ok(msg)
}

fn volume_curve(a: &VolumeArgs, wd: &Path) -> CliResult<String> {
    let spec = a.roi.section()?.region_spec();
    let bundle = Bundle::create(&wd.join(&a.out))?;
    let s = series_at(wd, &a.series)?;
    let disks = mask_at(wd, &a.disk)?;
    let v = apparent_volume_curve(&s, &disks, &[spec.fat_window, spec.extended_window]).at(Stage::Tac)?;
    bundle.write("volume.csv", tables::volume(&v))?;
    if a.plots {
        bundle.write("plots/volume.svg", pipeline::volume_chart(&v, None))?;
    }
    let mut msg = String::new();
    for w in &v.windows {
        let _ = writeln!(msg, "window {}: largest loss {:.3}%", w.window, w.max_loss_pct());
    }
    msg.push_str(&wrote(&bundle.commit()?));
    Ok(msg)
}

/// Human-readable summary of a report.
pub fn summary(r: &pipeline::RunReport) -> String {
    let mut s = String::new();
    let l = &r.landmarks;
    let _ = writeln!(s, "landmarks: P1 {} | Pa {} ({} s) | Ppcat {} ({} s)", l.p1_index, l.pa_index, l.pa_time_s, l.ppcat_index, l.ppcat_time_s);
    for e in &r.enhancement {
        let _ = writeln!(s, "{:<10} delta at Ppcat {:>8.3} HU, peak {:>8.3} HU", e.region, e.delta_at_ppcat_hu, e.peak_delta_hu);
    }
    for f in &r.flow {
        let _ = writeln!(s, "{:<10} flow mean {:>8.3} mL/100g-min ({} supervoxels)", f.region, f.mean_mbf, f.supervoxels);
    }
    if let Some(x) = r.pcat_to_myo_flow_ratio {
        let _ = writeln!(s, "PCAT/MYO flow ratio {x:.4}");
    }
    for v in &r.volume {
        let _ = writeln!(s, "window [{}, {}]: largest apparent volume loss {:.3}%", v.window_lo_hu, v.window_hi_hu, v.max_loss_pct);
    }
    if let Some(d) = &r.drift {
        if let Some(f) = d.stable_fraction {
            let _ = writeln!(s, "features stable within 10%: {:.1}% ({} of {} defined)", 100.0 * f, d.stable.len(), d.defined);
        }
    }
    if let Some(st) = &r.stenosis {
        let _ = writeln!(
            s,
            "proximal/distal peak difference {:.3} HU, time-to-peak difference {} s",
            st.peak_difference_hu, st.time_to_peak_difference_s
        );
    }
    for n in &r.notes {
        let _ = writeln!(s, "note: {n}");
    }
    s
}

fn report(a: &ReportArgs, wd: &Path) -> CliResult<String> {
    let dir = wd.join(&a.run_dir);
    let r = pipeline::verify_bundle(&dir)?;
    Ok(format!("{}{} files verified\n", summary(&r), r.files.len()))
}

fn run(a: &RunArgs, wd: &Path) -> CliResult<String> {
    let cfg = RunConfig::load(&wd.join(&a.config))?;
    let (dir, r) = pipeline::run_pipeline(&cfg, wd)?;
    Ok(format!("{}{}", summary(&r), wrote(&dir)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn parses_prep_reference() {
        let cli = Cli::try_parse_from(["pcatdyn", "prep", "--series", "s.toml", "--ref-scan", "4", "--out", "o"]).unwrap();
        match cli.command {
            Command::Prep(a) => assert_eq!(a.ref_scan, ReferenceScan::Index(4)),
            _ => panic!("wrong subcommand"),
        }
        assert!(Cli::try_parse_from(["pcatdyn", "prep", "--series", "s", "--ref-scan", "x", "--out", "o"]).is_err());
    }

    #[test]
    fn roi_opts_validated() {
        let bad = RoiOpts { diameter_factor: Some(0.5), ..Default::default() };
        assert_eq!(bad.section().unwrap_err().exit_code(), 2);
        let ok = RoiOpts { split_mm: Some(20.0), ..Default::default() };
        assert_eq!(ok.section().unwrap().split_mm, Some(20.0));
    }

    #[test]
    fn zero_threads_rejected() {
        let cli = Cli::try_parse_from(["pcatdyn", "--threads", "0", "report", "--run-dir", "x"]).unwrap();
        assert_eq!(execute(&cli).unwrap_err().exit_code(), 2);
    }
}
