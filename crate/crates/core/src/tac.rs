//! Time-attenuation curves, landmarks and enhancement analytics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prep::argmax_first;
use crate::volgrid::{stats_of, DynamicSeries, Label, LabelMask};
use crate::HuWindow;

/// How region membership is decided over time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum MembershipPolicy {
    /// One voxel set for all scans, optionally gated by a HU window evaluated
    /// at the reference scan.
    Fixed { reference: usize, window: Option<HuWindow> },
    /// Window membership re-evaluated on every scan.
    PerScan { window: HuWindow },
}

impl MembershipPolicy {
    pub fn tag(&self) -> &'static str {
        match self {
            MembershipPolicy::Fixed { .. } => "fixed",
            MembershipPolicy::PerScan { .. } => "per-scan",
        }
    }

    /// Ungated fixed membership.
    pub fn whole_region() -> Self {
        MembershipPolicy::Fixed { reference: 0, window: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeAttenuationCurve {
    pub label: Label,
    pub policy: MembershipPolicy,
    pub times_s: Vec<f64>,
    pub mean_hu: Vec<f64>,
    pub std_hu: Vec<f64>,
    pub voxel_count: Vec<usize>,
}

impl TimeAttenuationCurve {
    pub fn len(&self) -> usize {
        self.times_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_s.is_empty()
    }

    pub fn peak_index(&self) -> usize {
        argmax_first(&self.mean_hu)
    }

    /// Mean HU relative to the first scan.
    pub fn delta(&self) -> Vec<f64> {
        self.mean_hu.iter().map(|m| m - self.mean_hu[0]).collect()
    }
}

pub fn compute_tac(
    s: &DynamicSeries,
    region: &LabelMask,
    code: Label,
    policy: MembershipPolicy,
) -> Result<TimeAttenuationCurve> {
    s.grid().ensure_same(region.grid(), "compute_tac")?;
    let base = region.indices(code);
    let mut out = TimeAttenuationCurve {
        label: code,
        policy,
        times_s: s.times().to_vec(),
        mean_hu: Vec::with_capacity(s.len()),
        std_hu: Vec::with_capacity(s.len()),
        voxel_count: Vec::with_capacity(s.len()),
    };
    match policy {
        MembershipPolicy::Fixed { reference, window } => {
            if reference >= s.len() {
                return Err(Error::invalid(format!("membership reference {reference} out of range")));
            }
            let gate = s.volume(reference).values();
            let voxels: Vec<usize> = match window {
                Some(w) => base.into_iter().filter(|&i| w.contains(gate[i] as f64)).collect(),
                None => base,
            };
            if voxels.is_empty() {
                return Err(Error::empty(format!("{code} (fixed membership)")));
            }
            for v in s.volumes() {
                let vals = v.values();
                let st = stats_of(voxels.iter().map(|&i| vals[i] as f64)).expect("nonempty");
                out.mean_hu.push(st.mean);
                out.std_hu.push(st.std);
                out.voxel_count.push(st.count);
            }
        }
        MembershipPolicy::PerScan { window } => {
            for (k, v) in s.volumes().iter().enumerate() {
                let vals = v.values();
                let st = stats_of(base.iter().map(|&i| vals[i] as f64).filter(|&x| window.contains(x)))
                    .ok_or_else(|| Error::empty(format!("{code} at scan {k} (per-scan membership)")))?;
                out.mean_hu.push(st.mean);
                out.std_hu.push(st.std);
                out.voxel_count.push(st.count);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakInfo {
    pub p1_index: usize,
    pub pa_index: usize,
    pub ppcat_index: usize,
    pub p1_time_s: f64,
    pub pa_time_s: f64,
    pub ppcat_time_s: f64,
}

/// Aorta and PCAT peaks as first maxima of the region means.
pub fn find_peaks(aorta: &TimeAttenuationCurve, pcat: &TimeAttenuationCurve) -> Result<PeakInfo> {
    if aorta.is_empty() || pcat.is_empty() {
        return Err(Error::invalid("find_peaks needs nonempty curves"));
    }
    let pa = aorta.peak_index();
    let pp = pcat.peak_index();
    Ok(PeakInfo {
        p1_index: 0,
        pa_index: pa,
        ppcat_index: pp,
        p1_time_s: aorta.times_s[0],
        pa_time_s: aorta.times_s[pa],
        ppcat_time_s: pcat.times_s[pp],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnhancementSummary {
    pub label: Label,
    pub delta_hu_vs_p1: Vec<f64>,
    /// `(k, mean(Pa + k) - mean(Pa))` for each requested offset.
    pub offset_deltas: Vec<(i64, f64)>,
    pub delta_at_ppcat: f64,
    pub peak_index: usize,
    pub peak_delta_hu: f64,
    /// Time of the curve maximum relative to the first scan.
    pub time_to_peak_s: f64,
}

pub fn enhancement_summary(
    tac: &TimeAttenuationCurve,
    peaks: &PeakInfo,
    offsets: &[i64],
) -> Result<EnhancementSummary> {
    let n = tac.len() as i64;
    if peaks.pa_index >= tac.len() || peaks.ppcat_index >= tac.len() {
        return Err(Error::invalid("peak indices outside the curve"));
    }
    let delta = tac.delta();
    let mut offset_deltas = Vec::with_capacity(offsets.len());
    for &k in offsets {
        let at = peaks.pa_index as i64 + k;
        if at < 0 || at >= n {
            return Err(Error::invalid(format!("offset Pa{k:+} outside the series")));
        }
        offset_deltas.push((k, tac.mean_hu[at as usize] - tac.mean_hu[peaks.pa_index]));
    }
    let peak = tac.peak_index();
    Ok(EnhancementSummary {
        label: tac.label,
        delta_at_ppcat: delta[peaks.ppcat_index],
        peak_index: peak,
        peak_delta_hu: delta[peak],
        time_to_peak_s: tac.times_s[peak] - tac.times_s[0],
        offset_deltas,
        delta_hu_vs_p1: delta,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowVolume {
    pub window: HuWindow,
    pub counts: Vec<usize>,
    pub volume_cm3: Vec<f64>,
    pub pct_change: Vec<f64>,
}

impl WindowVolume {
    /// Largest decrease relative to P1, in percent (positive = loss).
    pub fn max_loss_pct(&self) -> f64 {
        self.pct_change.iter().map(|p| -p).fold(0.0, f64::max) + 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeCurve {
    pub times_s: Vec<f64>,
    pub windows: Vec<WindowVolume>,
}

/// Apparent fat volume inside the disks per scan and window (per-scan
/// membership).
pub fn apparent_volume_curve(s: &DynamicSeries, disks: &LabelMask, windows: &[HuWindow]) -> Result<VolumeCurve> {
    s.grid().ensure_same(disks.grid(), "apparent_volume_curve")?;
    let voxels: Vec<usize> = (0..disks.labels().len()).filter(|&i| disks.labels()[i] != 0).collect();
    if voxels.is_empty() {
        return Err(Error::empty("disk mask"));
    }
    let cm3 = s.grid().voxel_volume() / 1000.0;
    let mut out = VolumeCurve { times_s: s.times().to_vec(), windows: Vec::with_capacity(windows.len()) };
    for &w in windows {
        let counts: Vec<usize> = s
            .volumes()
            .iter()
            .map(|v| voxels.iter().filter(|&&i| w.contains(v.values()[i] as f64)).count())
            .collect();
        if counts[0] == 0 {
            return Err(Error::empty(format!("no disk voxels inside {w} at P1")));
        }
        let base = counts[0] as f64;
        out.windows.push(WindowVolume {
            window: w,
            volume_cm3: counts.iter().map(|&c| c as f64 * cm3).collect(),
            pct_change: counts.iter().map(|&c| 100.0 * (c as f64 - base) / base).collect(),
            counts,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxDistComparison {
    pub proximal: EnhancementSummary,
    pub distal: EnhancementSummary,
    /// Proximal minus distal peak enhancement, HU.
    pub peak_difference_hu: f64,
    /// Distal minus proximal time-to-peak, s.
    pub time_to_peak_difference_s: f64,
}

/// Enhancement of the PCAT_PROX voxels of `prox` against the PCAT_DIST
/// voxels of `dist`. Each summary uses its own curve maximum as peak.
pub fn compare_prox_dist(
    s: &DynamicSeries,
    prox: &LabelMask,
    dist: &LabelMask,
    policy: MembershipPolicy,
) -> Result<ProxDistComparison> {
    let summarize = |mask: &LabelMask, code: Label| -> Result<EnhancementSummary> {
        let tac = compute_tac(s, mask, code, policy)?;
        let pk = tac.peak_index();
        let peaks = PeakInfo {
            p1_index: 0,
            pa_index: pk,
            ppcat_index: pk,
            p1_time_s: tac.times_s[0],
            pa_time_s: tac.times_s[pk],
            ppcat_time_s: tac.times_s[pk],
        };
        enhancement_summary(&tac, &peaks, &[])
    };
    let proximal = summarize(prox, Label::PcatProximal)?;
    let distal = summarize(dist, Label::PcatDistal)?;
    Ok(ProxDistComparison {
        peak_difference_hu: proximal.peak_delta_hu - distal.peak_delta_hu,
        time_to_peak_difference_s: distal.time_to_peak_s - proximal.time_to_peak_s,
        proximal,
        distal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volgrid::{Grid, VolumeGrid};

    fn two_voxel_series() -> (DynamicSeries, LabelMask) {
        let g = Grid::new([2, 1, 1], [1.0; 3], [0.0; 3]).unwrap();
        let data = [[-80.0, -70.0], [-60.0, -70.0], [-90.0, -20.0]];
        let vols = data.iter().map(|d| VolumeGrid::new(g, d.to_vec(), None).unwrap()).collect();
        let s = DynamicSeries::new(vols, vec![0.0, 2.0, 4.0]).unwrap();
        let m = LabelMask::new(g, vec![Label::Pcat.code(); 2]).unwrap();
        (s, m)
    }

    #[test]
    fn fixed_means_by_hand() {
        let (s, m) = two_voxel_series();
        let tac = compute_tac(&s, &m, Label::Pcat, MembershipPolicy::whole_region()).unwrap();
        assert_eq!(tac.mean_hu, vec![-75.0, -65.0, -55.0]);
        assert_eq!(tac.std_hu[0], 5.0);
        assert_eq!(tac.delta()[0], 0.0);
    }

    #[test]
    fn per_scan_membership_drops_voxels() {
        let (s, m) = two_voxel_series();
        let tac = compute_tac(&s, &m, Label::Pcat, MembershipPolicy::PerScan { window: HuWindow::STANDARD }).unwrap();
        assert_eq!(tac.voxel_count, vec![2, 2, 1]);
        assert_eq!(tac.mean_hu[2], -90.0);
    }

    #[test]
    fn fixed_gate_at_reference() {
        let (s, m) = two_voxel_series();
        let p = MembershipPolicy::Fixed { reference: 2, window: Some(HuWindow::STANDARD) };
        let tac = compute_tac(&s, &m, Label::Pcat, p).unwrap();
        assert_eq!(tac.mean_hu, vec![-80.0, -60.0, -90.0]);
    }

    #[test]
    fn peaks_tie_to_earliest() {
        let (s, m) = two_voxel_series();
        let mut tac = compute_tac(&s, &m, Label::Pcat, MembershipPolicy::whole_region()).unwrap();
        tac.mean_hu = vec![1.0, 3.0, 3.0];
        let p = find_peaks(&tac, &tac).unwrap();
        assert_eq!(p.pa_index, 1);
    }

    #[test]
    fn offsets_out_of_range_rejected() {
        let (s, m) = two_voxel_series();
        let tac = compute_tac(&s, &m, Label::Pcat, MembershipPolicy::whole_region()).unwrap();
        let p = find_peaks(&tac, &tac).unwrap();
        assert!(enhancement_summary(&tac, &p, &[1]).is_err());
        let e = enhancement_summary(&tac, &p, &[-1, -2]).unwrap();
        assert_eq!(e.offset_deltas, vec![(-1, -10.0), (-2, -20.0)]);
        assert_eq!(e.delta_at_ppcat, 20.0);
        assert_eq!(e.time_to_peak_s, 4.0);
    }

    #[test]
    fn empty_region_error() {
        let (s, m) = two_voxel_series();
        assert!(matches!(
            compute_tac(&s, &m, Label::Epicardial, MembershipPolicy::whole_region()),
            Err(Error::EmptyRegion(_))
        ));
    }
}
