//! Run configuration: one flat TOML table per section, scalar values only.
//!
//! ```toml
//! [input]
//! phantom = "baseline"
//! noise_sigma_hu = 10.0
//! seed = 7
//!
//! [prep]
//! reference = "auto"
//! search = 3
//!
//! [roi]
//! split_mm = 20.0
//!
//! [output]
//! dir = "out"
//! ```
//!
//! Paths are resolved against the working directory.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use pcatdyn_core::flow::{FlowParams, SlicParams};
use pcatdyn_core::phantom::PhantomSpec;
use pcatdyn_core::prep::FilterParams;
use pcatdyn_core::roi::{PcatRegionSpec, DEFAULT_LENGTH_MM, DEFAULT_REMOTE_FACTOR};
use pcatdyn_core::tac::MembershipPolicy;
use pcatdyn_core::{HuWindow, Label};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Scan used as registration target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReferenceScan {
    /// Aorta peak-enhancement scan.
    #[default]
    Auto,
    Index(usize),
}

impl FromStr for ReferenceScan {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(ReferenceScan::Auto);
        }
        s.parse().map(ReferenceScan::Index).map_err(|_| format!("expected `auto` or a scan index, got {s:?}"))
    }
}

impl fmt::Display for ReferenceScan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReferenceScan::Auto => f.write_str("auto"),
            ReferenceScan::Index(k) => write!(f, "{k}"),
        }
    }
}

impl Serialize for ReferenceScan {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ReferenceScan::Auto => s.serialize_str("auto"),
            ReferenceScan::Index(k) => s.serialize_u64(*k as u64),
        }
    }
}

impl<'de> Deserialize<'de> for ReferenceScan {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Index(usize),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Index(k) => Ok(ReferenceScan::Index(k)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Voxel membership used for feature extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMembership {
    #[default]
    PerScan,
    Fixed,
}

impl FromStr for FeatureMembership {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "per-scan" => Ok(FeatureMembership::PerScan),
            "fixed" => Ok(FeatureMembership::Fixed),
            _ => Err(format!("expected `per-scan` or `fixed`, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputSection {
    /// Built-in phantom preset.
    pub phantom: Option<String>,
    /// Phantom description file.
    pub phantom_spec: Option<String>,
    /// Overrides the phantom noise level.
    pub noise_sigma_hu: Option<f64>,
    /// Overrides the phantom noise seed.
    pub seed: Option<u64>,
    /// Series manifest of measured scans.
    pub series: Option<String>,
    pub mask: Option<String>,
    pub centerline: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
    pub plots: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: "out".into(), plots: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepSection {
    pub register: bool,
    pub reference: ReferenceScan,
    /// Registration search radius in voxels per axis.
    pub search: usize,
    /// Bilateral filtering of the series used for flow estimation.
    pub filter: bool,
    pub sigma_spatial_mm: f64,
    pub sigma_time_s: f64,
    pub sigma_range_hu: f64,
    pub spatial_radius: usize,
    pub time_radius: usize,
}

impl Default for PrepSection {
    fn default() -> Self {
        let f = FilterParams::default();
        PrepSection {
            register: true,
            reference: ReferenceScan::Auto,
            search: 3,
            filter: true,
            sigma_spatial_mm: f.sigma_spatial_mm,
            sigma_time_s: f.sigma_time_s,
            sigma_range_hu: f.sigma_range_hu,
            spatial_radius: f.spatial_radius,
            time_radius: f.time_radius,
        }
    }
}

impl PrepSection {
    pub fn filter_params(&self) -> FilterParams {
        FilterParams {
            sigma_spatial_mm: self.sigma_spatial_mm,
            sigma_time_s: self.sigma_time_s,
            sigma_range_hu: self.sigma_range_hu,
            spatial_radius: self.spatial_radius,
            time_radius: self.time_radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoiSection {
    /// Lumen label whose centerline is analysed.
    pub vessel: String,
    pub diameter_factor: f64,
    pub length_mm: f64,
    pub fat_lo_hu: f64,
    pub fat_hi_hu: f64,
    pub extended_lo_hu: f64,
    pub extended_hi_hu: f64,
    pub membership_reference: usize,
    pub remote_factor: f64,
    /// Proximal/distal split arclength; no split when absent.
    pub split_mm: Option<f64>,
}

impl Default for RoiSection {
    fn default() -> Self {
        RoiSection {
            vessel: Label::LumenLad.name().into(),
            diameter_factor: 2.0,
            length_mm: DEFAULT_LENGTH_MM,
            fat_lo_hu: HuWindow::STANDARD.lo,
            fat_hi_hu: HuWindow::STANDARD.hi,
            extended_lo_hu: HuWindow::EXTENDED.lo,
            extended_hi_hu: HuWindow::EXTENDED.hi,
            membership_reference: 0,
            remote_factor: DEFAULT_REMOTE_FACTOR,
            split_mm: None,
        }
    }
}

impl RoiSection {
    pub fn region_spec(&self) -> PcatRegionSpec {
        PcatRegionSpec {
            diameter_factor: self.diameter_factor,
            length_mm: self.length_mm,
            fat_window: HuWindow { lo: self.fat_lo_hu, hi: self.fat_hi_hu },
            extended_window: HuWindow { lo: self.extended_lo_hu, hi: self.extended_hi_hu },
            membership_reference: self.membership_reference,
        }
    }

    pub fn vessel_label(&self) -> CliResult<Label> {
        Label::from_name(&self.vessel)
            .filter(|l| l.is_lumen())
            .ok_or_else(|| CliError::config(format!("roi.vessel {:?} is not a lumen label", self.vessel)))
    }

    /// Fixed membership gated by the fat window at the reference scan.
    pub fn fixed_fat_policy(&self) -> MembershipPolicy {
        let spec = self.region_spec();
        MembershipPolicy::Fixed { reference: spec.membership_reference, window: Some(spec.fat_window) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TacSection {
    /// Offsets `-k..=k` around Pa reported as enhancement differences.
    pub offset_scans: usize,
}

impl Default for TacSection {
    fn default() -> Self {
        TacSection { offset_scans: 1 }
    }
}

impl TacSection {
    pub fn offsets(&self) -> Vec<i64> {
        let k = self.offset_scans as i64;
        (-k..=k).filter(|&o| o != 0).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowSection {
    pub enabled: bool,
    pub myocardium_density: f64,
    pub pcat_density: f64,
    pub supervoxel_size: usize,
    pub compactness: f64,
    pub iterations: usize,
    pub clamp_negative: bool,
}

impl Default for FlowSection {
    fn default() -> Self {
        let s = SlicParams::default();
        FlowSection {
            enabled: true,
            myocardium_density: pcatdyn_core::phantom::MYOCARDIUM_DENSITY,
            pcat_density: pcatdyn_core::phantom::ADIPOSE_DENSITY,
            supervoxel_size: s.size,
            compactness: s.compactness,
            iterations: s.iterations,
            clamp_negative: true,
        }
    }
}

impl FlowSection {
    pub fn slic(&self) -> SlicParams {
        SlicParams { size: self.supervoxel_size, compactness: self.compactness, iterations: self.iterations }
    }

    pub fn params(&self, density: f64) -> FlowParams {
        FlowParams { clamp_negative: self.clamp_negative, ..FlowParams::with_density(density) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSection {
    pub enabled: bool,
    pub membership: FeatureMembership,
}

impl Default for FeatureSection {
    fn default() -> Self {
        FeatureSection { enabled: true, membership: FeatureMembership::PerScan }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: InputSection,
    pub prep: PrepSection,
    pub roi: RoiSection,
    pub tac: TacSection,
    pub flow: FlowSection,
    pub features: FeatureSection,
    pub output: OutputSection,
}

/// Where the series comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Phantom { name: String, spec: PhantomSpec },
    Measured { series: PathBuf, mask: PathBuf, centerline: PathBuf },
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// SHA-256 of the canonical serialisation.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.to_toml_string().as_bytes()))
    }

    /// Checks everything that can be checked without touching data.
    pub fn validate(&self) -> CliResult<()> {
        let i = &self.input;
        let sources = [i.phantom.is_some(), i.phantom_spec.is_some(), i.series.is_some()];
        match sources.iter().filter(|&&s| s).count() {
            0 => return Err(CliError::config("input needs one of phantom, phantom_spec or series")),
            1 => {}
            _ => return Err(CliError::config("input has more than one of phantom, phantom_spec and series")),
        }
        if i.series.is_some() {
            if i.centerline.is_none() {
                return Err(CliError::config("input.centerline is required without a phantom"));
            }
            if i.mask.is_none() {
                return Err(CliError::config("input.mask is required without a phantom"));
            }
            if i.noise_sigma_hu.is_some() || i.seed.is_some() {
                return Err(CliError::config("noise_sigma_hu and seed only apply to phantom input"));
            }
        }
        if let Some(name) = &i.phantom {
            if PhantomSpec::preset(name).is_none() {
                return Err(CliError::config(format!(
                    "unknown phantom preset {name:?} (known: {})",
                    PhantomSpec::PRESETS.join(", ")
                )));
            }
        }
        if let Some(s) = i.noise_sigma_hu {
            if !(s >= 0.0) || !s.is_finite() {
                return Err(CliError::config("noise_sigma_hu must be >= 0"));
            }
        }
        if self.output.dir.trim().is_empty() {
            return Err(CliError::config("output.dir is empty"));
        }
        let cfg_err = |e: pcatdyn_core::Error| CliError::config(e.to_string());
        self.prep.filter_params().validate().map_err(cfg_err)?;
        self.roi.region_spec().validate().map_err(cfg_err)?;
        self.roi.vessel_label()?;
        if !(self.roi.remote_factor >= 0.0) || !self.roi.remote_factor.is_finite() {
            return Err(CliError::config("roi.remote_factor must be >= 0"));
        }
        if let Some(s) = self.roi.split_mm {
            if !(s > 0.0 && s <= self.roi.length_mm) {
                return Err(CliError::config("roi.split_mm must lie in (0, length_mm]"));
            }
        }
        self.flow.slic().validate().map_err(cfg_err)?;
        for (name, d) in [("myocardium_density", self.flow.myocardium_density), ("pcat_density", self.flow.pcat_density)] {
            if !(d > 0.0) || !d.is_finite() {
                return Err(CliError::config(format!("flow.{name} must be > 0")));
            }
        }
        Ok(())
    }

    /// Resolves the input source against `workdir`, loading phantom specs.
    pub fn source(&self, workdir: &Path) -> CliResult<Source> {
        let i = &self.input;
        let apply_noise = |mut spec: PhantomSpec| {
            if let Some(s) = i.noise_sigma_hu {
                spec.noise.sigma_hu = s;
            }
            if let Some(seed) = i.seed {
                spec.noise.seed = seed;
            }
            spec
        };
        if let Some(name) = &i.phantom {
            let spec = PhantomSpec::preset(name).ok_or_else(|| CliError::config(format!("unknown preset {name}")))?;
            return Ok(Source::Phantom { name: name.clone(), spec: apply_noise(spec) });
        }
        if let Some(p) = &i.phantom_spec {
            let spec = PhantomSpec::load(&workdir.join(p)).map_err(|e| CliError::config(e.to_string()))?;
            return Ok(Source::Phantom { name: p.clone(), spec: apply_noise(spec) });
        }
        let need = |v: &Option<String>, what: &str| {
            v.as_ref().map(|p| workdir.join(p)).ok_or_else(|| CliError::config(format!("input.{what} missing")))
        };
        Ok(Source::Measured {
            series: need(&i.series, "series")?,
            mask: need(&i.mask, "mask")?,
            centerline: need(&i.centerline, "centerline")?,
        })
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_phantom_config() {
        let cfg = RunConfig::from_toml_str("[input]\nphantom = \"baseline\"\n").unwrap();
        assert_eq!(cfg.prep, PrepSection::default());
        assert_eq!(cfg.output.dir, "out");
    }

    #[test]
    fn reference_scan_forms() {
        let cfg = RunConfig::from_toml_str("[input]\nphantom = \"baseline\"\n[prep]\nreference = 4\n").unwrap();
        assert_eq!(cfg.prep.reference, ReferenceScan::Index(4));
        let cfg = RunConfig::from_toml_str("[input]\nphantom = \"baseline\"\n[prep]\nreference = \"auto\"\n").unwrap();
        assert_eq!(cfg.prep.reference, ReferenceScan::Auto);
        assert!(RunConfig::from_toml_str("[input]\nphantom = \"baseline\"\n[prep]\nreference = \"peak\"\n").is_err());
    }

    #[test]
    fn measured_input_needs_centerline() {
        let e = RunConfig::from_toml_str("[input]\nseries = \"s.toml\"\nmask = \"m\"\n").unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("centerline"));
    }

    #[test]
    fn two_sources_rejected() {
        assert!(RunConfig::from_toml_str("[input]\nphantom = \"baseline\"\nseries = \"s\"\n").is_err());
        assert!(RunConfig::from_toml_str("").is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml_str("[input]\nphantom = \"baseline\"\n[prep]\nsigma = 3\n").is_err());
        assert!(RunConfig::from_toml_str("[input]\nphantom = \"baseline\"\n[extra]\na = 1\n").is_err());
    }

    #[test]
    fn bad_parameters_are_config_errors() {
        for extra in [
            "[prep]\nsigma_range_hu = 0\n",
            "[roi]\ndiameter_factor = 1.0\n",
            "[roi]\nsplit_mm = 50\n",
            "[roi]\nvessel = \"AORTA\"\n",
            "[flow]\npcat_density = -1\n",
            "[input]\nnoise_sigma_hu = -1\n",
        ] {
            let text = if extra.starts_with("[input]") {
                format!("[input]\nphantom = \"baseline\"\n{}", &extra[8..])
            } else {
                format!("[input]\nphantom = \"baseline\"\n{extra}")
            };
            let e = RunConfig::from_toml_str(&text).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{extra}");
        }
    }

    #[test]
    fn serialisation_round_trips() {
        let mut cfg = RunConfig::from_toml_str("[input]\nphantom = \"stenosis\"\n[roi]\nsplit_mm = 20.0\n").unwrap();
        cfg.prep.reference = ReferenceScan::Index(3);
        let back = RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn offsets_skip_zero() {
        assert_eq!(TacSection { offset_scans: 2 }.offsets(), vec![-2, -1, 1, 2]);
    }
}
