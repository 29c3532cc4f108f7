use pcatdyn_core::phantom::{analytic_time_to_peak, simulate, Geometry, PhantomSpec, Uptake, INTEGRATION_STEP_S};
use pcatdyn_core::prep::{stbf, FilterParams};
use pcatdyn_core::volgrid::mask_stats;
use pcatdyn_core::{DynamicSeries, Grid, Label, VolumeGrid};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[test]
fn baseline_pcat_reaches_minus_53_at_its_peak() {
    let out = simulate(&PhantomSpec::baseline()).unwrap();
    let p1 = mask_stats(out.series.volume(0), &out.mask, Label::Pcat).unwrap();
    let pk = mask_stats(out.series.volume(10), &out.mask, Label::Pcat).unwrap();
    assert!((p1.mean + 75.0).abs() < 0.5, "P1 {}", p1.mean);
    assert!((p1.std - 5.0).abs() < 0.5, "P1 spread {}", p1.std);
    assert!((pk.mean + 53.0).abs() < 1.0, "peak {}", pk.mean);
}

#[test]
fn stenosis_distal_peaks_at_least_two_seconds_later() {
    let spec = PhantomSpec::stenosis();
    let t = spec.scans.times();
    let (t0, t1) = (t[0], *t.last().unwrap());
    let prox = analytic_time_to_peak(spec.compartment(Label::PcatProximal).unwrap(), &spec.aif, t0, t1);
    let dist = analytic_time_to_peak(spec.compartment(Label::PcatDistal).unwrap(), &spec.aif, t0, t1);
    assert!(dist - prox >= 2.0 - 1e-9, "prox {prox} dist {dist}");
}

#[test]
fn zero_flow_noiseless_scans_equal_baseline() {
    let mut spec = PhantomSpec::baseline();
    spec.compartments.retain(|c| c.label == Label::Epicardial);
    spec.compartments[0].mbf = 0.0;
    let out = simulate(&spec).unwrap();
    for v in out.series.volumes() {
        assert_eq!(v.values(), out.series.volume(0).values());
    }
    let eat = mask_stats(out.series.volume(5), &out.mask, Label::Epicardial).unwrap();
    assert_eq!((eat.mean, eat.std), (-86.0, 0.0));
}

#[test]
fn delay_shifts_the_fine_curve() {
    let spec = PhantomSpec::baseline();
    let base = spec.compartment(Label::Myocardium).unwrap().uptake();
    let delayed = Uptake { delay_s: 2.0, ..base };
    let a = base.fine_curve(&spec.aif, 20.0);
    let b = delayed.fine_curve(&spec.aif, 20.0);
    let lag = (2.0 / INTEGRATION_STEP_S).round() as usize;
    for j in 0..a.len() - lag {
        assert!((b[j + lag] - a[j]).abs() <= 1e-9 * a[j].abs().max(1.0), "step {j}");
    }
    assert!(b[..lag].iter().all(|&x| x == 0.0));
}

#[test]
fn overlapping_compartments_rejected() {
    let mut spec = PhantomSpec::baseline();
    let mut extra = spec.compartment(Label::Subcutaneous).unwrap().clone();
    extra.label = Label::Paracardial;
    extra.geometry = Geometry::Box { min: [23.0, 3.0, 5.0], max: [30.0, 7.0, 9.0] };
    spec.compartments.push(extra);
    assert!(simulate(&spec).is_err());
}

fn residual_std(a: &DynamicSeries, truth: &DynamicSeries) -> f64 {
    let mut ss = 0.0;
    let mut n = 0.0;
    for (va, vt) in a.volumes().iter().zip(truth.volumes()) {
        for (x, y) in va.values().iter().zip(vt.values()) {
            ss += ((x - y) as f64).powi(2);
            n += 1.0;
        }
    }
    (ss / n).sqrt()
}

#[test]
fn default_filter_removes_forty_percent_of_uniform_noise() {
    let g = Grid::new([24, 24, 16], [0.5, 0.5, 1.0], [0.0; 3]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let normal = Normal::new(0.0, 20.0).unwrap();
    let clean = VolumeGrid::filled(g, -75.0);
    let times: Vec<f64> = (0..5).map(|k| 2.0 * k as f64).collect();
    let noisy: Vec<VolumeGrid> = times
        .iter()
        .map(|&t| {
            let vals = clean.values().iter().map(|&x| x + normal.sample(&mut rng) as f32).collect();
            VolumeGrid::new(g, vals, Some(t)).unwrap()
        })
        .collect();
    let truth = DynamicSeries::new(times.iter().map(|&t| clean.clone().with_time(t)).collect(), times.clone()).unwrap();
    let noisy = DynamicSeries::new(noisy, times).unwrap();
    let before = residual_std(&noisy, &truth);
    let after = residual_std(&stbf(&noisy, &FilterParams::default()).unwrap(), &truth);
    assert!(after <= 0.6 * before, "before {before} after {after}");
}

#[test]
fn filter_reduces_phantom_residual() {
    let spec = PhantomSpec::flow_free();
    let clean = simulate(&spec).unwrap().series;
    let noisy = simulate(&spec.with_noise(20.0, 9)).unwrap().series;
    let sub = |s: &DynamicSeries| {
        // A 40 x 40 x 12 corner keeps the test fast and covers several tissues.
        let g = *s.grid();
        let h = Grid::new([40, 40, 12], g.spacing, g.origin).unwrap();
        let vols = s
            .volumes()
            .iter()
            .map(|v| {
                let mut vals = Vec::with_capacity(h.len());
                for k in 0..12 {
                    for j in 30..70 {
                        for i in 30..70 {
                            vals.push(v.get(i, j, k + 10));
                        }
                    }
                }
                VolumeGrid::new(h, vals, v.time_s()).unwrap()
            })
            .collect();
        DynamicSeries::new(vols, s.times().to_vec()).unwrap()
    };
    let (clean, noisy) = (sub(&clean), sub(&noisy));
    let before = residual_std(&noisy, &clean);
    let after = residual_std(&stbf(&noisy, &FilterParams::default()).unwrap(), &clean);
    assert!(after < before, "before {before} after {after}");
}
