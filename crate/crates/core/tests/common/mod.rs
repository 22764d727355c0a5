#![allow(dead_code)]

use proptest::prelude::*;
use shelfsize::pipeline::TrainConfig;
use shelfsize::synth::{generate_catalog, generate_dataset, NoiseConfig, SceneConfig};
use shelfsize::{Catalog, DetectedBox, Scene};
use shelfsize::gbdt::GbdtParams;
use shelfsize::setnet::SetNetParams;

pub fn noise(sigma: f64, outlier_prob: f64) -> NoiseConfig {
    NoiseConfig { sigma, outlier_prob, ..Default::default() }
}

pub fn dataset(n_groups: usize, variants: (usize, usize), n_scenes: usize, noise: NoiseConfig, seed: u64) -> (Catalog, Vec<Scene>) {
    let cat = generate_catalog(n_groups, variants, 0.3, seed).unwrap();
    let scenes = generate_dataset(&cat, &SceneConfig::default(), &noise, n_scenes, seed).unwrap();
    (cat, scenes)
}

/// Small budgets for tests that only need a working model.
pub fn quick_config() -> TrainConfig {
    TrainConfig {
        gbdt: GbdtParams { n_rounds: 30, ..Default::default() },
        setnet: SetNetParams { hidden: 8, epochs: 15, ..Default::default() },
        ..Default::default()
    }
}

pub fn argmax(p: &[f64]) -> usize {
    (0..p.len()).fold(0, |b, i| if p[i] > p[b] { i } else { b })
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Unlabelled scenes of 1-8 boxes over groups A, B, C.
pub fn arb_scene() -> impl Strategy<Value = Scene> {
    prop::collection::vec((1.0f64..500.0, 1.0f64..500.0, 0usize..3), 1..8).prop_map(|v| Scene {
        scene_id: "p".into(),
        boxes: v
            .into_iter()
            .enumerate()
            .map(|(i, (w, h, g))| DetectedBox::new(format!("b{i}"), w, h, ["A", "B", "C"][g], None))
            .collect(),
    })
}
