#[path = "support/oracle.rs"]
mod oracle;

use pcatdyn_core::feat::{extract_features, shape_features, wavelet3d, BBox, Roi, TEXTURE_NAMES};
use pcatdyn_core::{Grid, Label, LabelMask, VolumeGrid};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn named(v: Vec<(String, Option<f64>)>) -> Vec<(String, Option<f64>)> {
    v
}

#[test]
fn hundred_random_rois_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_611);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let (v, m) = oracle::random_case(&mut rng, 5);
        let ours = extract_features(&v, &m, None).unwrap().entries;
        let theirs = oracle::features(&v, &m);
        let err = oracle::max_rel_err(&named(ours), &theirs).unwrap_or_else(|e| panic!("case {case}: {e}"));
        assert!(err <= 1e-9, "case {case}: error {err}");
        worst = worst.max(err);
    }
    assert!(worst <= 1e-9);
}

#[test]
fn wavelet_matches_direct_convolution() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let (v, m) = oracle::random_case(&mut rng, 5);
        let b = Roi::from_mask(&m).unwrap().bbox().grow_upper(1, v.grid().dims);
        let ours = wavelet3d(&v, b).unwrap();
        let direct = oracle::wavelet(&v, b.lo, b.hi);
        for (o, (name, d)) in ours.iter().zip(&direct) {
            assert_eq!(&o.name, name);
            for (x, y) in o.data.iter().zip(d) {
                assert!((x - y).abs() <= 1e-12 * 1f64.max(x.abs()), "{name}: {x} vs {y}");
            }
        }
    }
}

#[test]
fn jacobi_oracle_on_known_matrix() {
    // Eigenvalues 3, 1, 1 after a rotation by 45 degrees in the xy plane.
    let ev = oracle::jacobi_eigenvalues([[2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 1.0]]);
    for (a, b) in ev.iter().zip([3.0, 1.0, 1.0]) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn planar_roi_has_zero_flatness() {
    let g = Grid::new([6, 6, 3], [0.7, 0.45, 1.1], [0.0; 3]).unwrap();
    let mut m = LabelMask::empty(g);
    for (i, j) in [(0, 0), (1, 0), (2, 1), (4, 4), (5, 2)] {
        m.set(g.index(i, j, 1), Label::Pcat);
    }
    let (e, f) = shape_features(&m).unwrap();
    assert!(e.unwrap() > 0.0);
    assert_eq!(f, Some(0.0));
    assert_eq!(oracle::shape(&m).1, Some(0.0));
}

fn roi_case(values: &[f32], occupancy: &[bool]) -> (VolumeGrid, LabelMask) {
    let g = Grid::new([6, 6, 6], [0.5; 3], [0.0; 3]).unwrap();
    let v = VolumeGrid::new(g, values.to_vec(), None).unwrap();
    let mut m = LabelMask::empty(g);
    for k in 1..5 {
        for j in 1..5 {
            for i in 1..5 {
                if occupancy[(i - 1) + 4 * ((j - 1) + 4 * (k - 1))] {
                    m.set(g.index(i, j, k), Label::Pcat);
                }
            }
        }
    }
    m.set(g.index(1, 1, 1), Label::Pcat);
    m.set(g.index(4, 4, 4), Label::Pcat);
    (v, m)
}

fn texture_of(v: &VolumeGrid, m: &LabelMask) -> Vec<Option<f64>> {
    let fv = extract_features(v, m, None).unwrap();
    ["original-glcm-Idmn", "original-gldm-DependenceNonUniformityNormalized"]
        .iter()
        .map(|n| fv.get(n).unwrap())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn texture_invariant_to_positive_affine_hu(
        values in prop::collection::vec(-180.0f32..-20.0, 216),
        occupancy in prop::collection::vec(any::<bool>(), 64),
        scale in prop::sample::select(vec![0.5f32, 2.0, 4.0]),
        offset in prop::sample::select(vec![-64.0f32, 0.0, 128.0]),
    ) {
        let (v, m) = roi_case(&values, &occupancy);
        let w = v.map_values(values.iter().map(|x| x * scale + offset).collect()).unwrap();
        let a = texture_of(&v, &m);
        let b = texture_of(&w, &m);
        prop_assert_eq!(a.len(), TEXTURE_NAMES.len() - 2);
        for (x, y) in a.iter().zip(&b) {
            match (x, y) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
                _ => prop_assert_eq!(x, y),
            }
        }
    }

    #[test]
    fn shape_invariant_to_rotation_and_scale(
        occupancy in prop::collection::vec(any::<bool>(), 64),
        scale in 0.2f64..3.0,
    ) {
        let values = vec![-80.0f32; 216];
        let (_, m) = roi_case(&values, &occupancy);
        let g = *m.grid();
        // Quarter turn about z, (i, j) -> (5 - j, i), then uniform spacing scale.
        let h = Grid::new(g.dims, [0.5 * scale; 3], [1.0, -2.0, 3.0]).unwrap();
        let mut r = LabelMask::empty(h);
        for idx in 0..g.len() {
            if m.labels()[idx] != 0 {
                let (i, j, k) = g.coords(idx);
                r.set(h.index(5 - j, i, k), Label::Pcat);
            }
        }
        let (e0, f0) = shape_features(&m).unwrap();
        let (e1, f1) = shape_features(&r).unwrap();
        prop_assert!((e0.unwrap() - e1.unwrap()).abs() < 1e-9);
        prop_assert!((f0.unwrap() - f1.unwrap()).abs() < 1e-9);
    }
}

#[test]
fn voxel_set_outside_roi_does_not_leak_into_texture() {
    // Changing a non-ROI voxel outside the grown wavelet box leaves every
    // feature unchanged.
    let g = Grid::new([8, 8, 8], [0.5; 3], [0.0; 3]).unwrap();
    let vals: Vec<f32> = (0..g.len()).map(|i| -150.0 + ((i * 37) % 101) as f32).collect();
    let v = VolumeGrid::new(g, vals.clone(), None).unwrap();
    let mut m = LabelMask::empty(g);
    for k in 1..4 {
        for j in 1..4 {
            for i in 1..4 {
                m.set(g.index(i, j, k), Label::Pcat);
            }
        }
    }
    let mut changed = vals;
    changed[g.index(7, 7, 7)] = 500.0;
    let w = v.map_values(changed).unwrap();
    let a = extract_features(&v, &m, None).unwrap();
    let b = extract_features(&w, &m, None).unwrap();
    assert_eq!(a, b);
    let _ = BBox { lo: [0; 3], hi: [1; 3] };
}
