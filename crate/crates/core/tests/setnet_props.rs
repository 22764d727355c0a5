mod common;

use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shelfsize::gmm::{build_feature_bank, BankOptions};
use shelfsize::setnet::{forward, init_setnet, train_setnet, LabeledSet, SetFeatureItem, SetNetParams};
use shelfsize::synth::{generate_dataset, variant_ladder, SceneConfig};
use shelfsize::{Catalog, DetectedBox, GroupId, Scene};

fn two_group_catalog() -> Catalog {
    Catalog::new(vec![variant_ladder("A", 40.0, 60.0, 2, 0.3), variant_ladder("R", 50.0, 50.0, 1, 0.3)]).unwrap()
}

/// A reference box of known size pins the candidate's size: with exact
/// ratios the two class hypotheses predict area ratios 1.69x apart, so Bayes
/// with the fitted mixtures must favour the true (larger) variant.
#[test]
fn reference_box_resolves_large_variant() {
    let cat = two_group_catalog();
    let cfg = SceneConfig { groups_per_scene: (2, 2), boxes_per_group: (1, 3), rng_seed: 0 };
    let scenes = generate_dataset(&cat, &cfg, &noise(0.0, 0.0), 200, 5).unwrap();
    let (bank, _) = build_feature_bank(&scenes, &cat, &BankOptions::default()).unwrap();

    let a = &cat.groups()[0];
    let big = &a.variants[1];
    let scale = 2.0;
    let scene = Scene {
        scene_id: "t".into(),
        boxes: vec![
            DetectedBox::new("c", big.width_mm * scale, big.height_mm * scale, "A", None),
            DetectedBox::new("r", 50.0 * scale, 50.0 * scale, "R", None),
        ],
    };
    let items = shelfsize::setnet::assemble_set_features(&scene, 0, &bank).unwrap();
    assert_eq!(items.len(), 1);
    assert!((items[0].area_ratio - 2500.0 / big.area_mm2()).abs() <= 1e-12);
    assert!(items[0].posteriors[1] >= 0.9, "{:?}", items[0].posteriors);
}

fn arb_items(k: usize) -> impl Strategy<Value = Vec<SetFeatureItem>> {
    prop::collection::vec((0usize..3, 0.01f64..20.0, 0.2f64..4.0, prop::collection::vec(0.01f64..1.0, k)), 0..10)
        .prop_map(|v| {
            v.into_iter()
                .map(|(g, ratio, r, p)| {
                    let z: f64 = p.iter().sum();
                    SetFeatureItem {
                        other_group: GroupId::from(["A", "R", "Z"][g]),
                        area_ratio: ratio,
                        own_r: r,
                        posteriors: p.iter().map(|x| x / z).collect(),
                    }
                })
                .collect()
        })
}

proptest! {
    #[test]
    fn outputs_are_probabilities(items in arb_items(2), seed in 0u64..50) {
        let model = init_setnet(&two_group_catalog(), &"A".into(), 6, seed).unwrap();
        let p = forward(&model, &items).unwrap();
        prop_assert_eq!(p.len(), 2);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        let mut shuffled = items.clone();
        shuffled.reverse();
        prop_assert_eq!(forward(&model, &shuffled).unwrap(), p);
    }
}

/// Inputs that carry no information leave the model at chance.
#[test]
fn uninformative_inputs_give_chance_accuracy() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let item = SetFeatureItem { other_group: "R".into(), area_ratio: 1.3, own_r: 0.67, posteriors: vec![0.5, 0.5] };
    let mut sets = |n: usize| -> Vec<LabeledSet> {
        (0..n).map(|_| LabeledSet { items: vec![item.clone(); rng.random_range(1..4)], label: rng.random_range(0..2) }).collect()
    };
    let train = sets(400);
    let test = sets(2000);
    let model = init_setnet(&two_group_catalog(), &"A".into(), 8, 1).unwrap();
    let (model, _) = train_setnet(model, &train, &SetNetParams { hidden: 8, epochs: 20, ..Default::default() }).unwrap();
    let correct = test.iter().filter(|ex| argmax(&forward(&model, &ex.items).unwrap()) == ex.label).count();
    let acc = correct as f64 / test.len() as f64;
    assert!((acc - 0.5).abs() <= 0.05, "accuracy {acc}");
}
