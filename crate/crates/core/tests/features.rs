mod common;

use common::*;
use proptest::prelude::*;
use shelfsize::gbdt::{encode_candidate, fit_bins, BinOptions};
use shelfsize::{extract_candidate_features, DetectedBox, Scene};

#[test]
fn hand_arithmetic_example() {
    let scene = Scene {
        scene_id: "s".into(),
        boxes: vec![
            DetectedBox::new("c", 10.0, 20.0, "G1", None),
            DetectedBox::new("o1", 20.0, 20.0, "G2", None),
            DetectedBox::new("o2", 5.0, 8.0, "G1", None),
        ],
    };
    let f = extract_candidate_features(&scene, 0).unwrap();
    assert_eq!(f.r, 0.5);
    // areas 200, 400, 40
    assert_eq!(f.context[0].area_ratio, 400.0 / 200.0);
    assert_eq!(f.context[1].area_ratio, 40.0 / 200.0);
    assert_eq!(f.context[0].group_id.as_str(), "G2");
    assert_eq!(f.context[1].group_id.as_str(), "G1");
}

proptest! {
    #[test]
    fn features_are_scale_invariant(scene in arb_scene(), s in prop::sample::select(vec![0.1, 0.37, 1.0, 7.3, 250.0])) {
        let big = scene.rescaled(s);
        for i in 0..scene.boxes.len() {
            let a = extract_candidate_features(&scene, i).unwrap();
            let b = extract_candidate_features(&big, i).unwrap();
            prop_assert!(rel_diff(a.r, b.r) <= 1e-12);
            prop_assert_eq!(a.context.len(), scene.boxes.len() - 1);
            for (x, y) in a.context.iter().zip(&b.context) {
                prop_assert_eq!(&x.group_id, &y.group_id);
                prop_assert!(rel_diff(x.area_ratio, y.area_ratio) <= 1e-12);
            }
        }
    }

    #[test]
    fn area_ratios_are_reciprocal(scene in arb_scene()) {
        let n = scene.boxes.len();
        for i in 0..n {
            let fi = extract_candidate_features(&scene, i).unwrap();
            for j in 0..n {
                if i == j { continue; }
                let fj = extract_candidate_features(&scene, j).unwrap();
                let a = fi.context[if j < i { j } else { j - 1 }].area_ratio;
                let b = fj.context[if i < j { i } else { i - 1 }].area_ratio;
                prop_assert!((a * b - 1.0).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn bins_on_noiseless_two_group_data() {
    let (cat, scenes) = dataset(2, (2, 2), 200, noise(0.0, 0.0), 4);
    let opts = BinOptions::default();
    for g in cat.groups() {
        let spec = fit_bins(&scenes, &cat, &g.group_id, &opts).unwrap();
        assert_eq!(spec.included_groups, cat.group_ids());
        assert_eq!(spec.blocks.len(), 4);
        assert!(spec.blocks.iter().all(|b| b.bin_edges.len() == opts.n_bins + 1));
    }
}

#[test]
fn encoding_is_fixed_length_and_order_and_scale_free() {
    let (cat, scenes) = dataset(4, (2, 3), 150, noise(0.05, 0.1), 6);
    let (train, test) = scenes.split_at(100);
    for g in cat.groups() {
        let spec = fit_bins(train, &cat, &g.group_id, &BinOptions::default()).unwrap();
        for scene in test.iter().take(20) {
            let mut reversed = scene.clone();
            reversed.boxes.reverse();
            let n = scene.boxes.len();
            for i in (0..n).filter(|&i| scene.boxes[i].group_id == g.group_id) {
                let x = encode_candidate(scene, i, &spec).unwrap();
                assert_eq!(x.len(), spec.encoded_len());
                assert_eq!(encode_candidate(&reversed, n - 1 - i, &spec).unwrap(), x);
                let scaled = encode_candidate(&scene.rescaled(7.3), i, &spec).unwrap();
                assert!(x.iter().zip(&scaled).all(|(a, b)| (a - b).abs() <= 1e-12));
            }
        }
    }
}
