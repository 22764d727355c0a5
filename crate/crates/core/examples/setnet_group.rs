//! Method 2 for a single group: GMM posterior sets fed to the set network.
//!
//! cargo run --release --example setnet_group

use shelfsize::gmm::{build_feature_bank, BankOptions};
use shelfsize::pipeline::split_scenes;
use shelfsize::setnet::{assemble_set_features, forward, grad_check, init_setnet, train_setnet, LabeledSet, SetNetParams};
use shelfsize::synth::{generate_catalog, generate_dataset, NoiseConfig, SceneConfig};
use shelfsize::Scene;

fn sets(scenes: &[Scene], group: &shelfsize::GroupSpec, bank: &shelfsize::gmm::GmmFeatureBank) -> shelfsize::Result<Vec<LabeledSet>> {
    let mut out = Vec::new();
    for s in scenes {
        for (i, b) in s.boxes.iter().enumerate() {
            if b.group_id == group.group_id {
                let label = group.class_index(b.class_id.as_ref().unwrap()).unwrap();
                out.push(LabeledSet { items: assemble_set_features(s, i, bank)?, label });
            }
        }
    }
    Ok(out)
}

fn main() -> shelfsize::Result<()> {
    let catalog = generate_catalog(5, (3, 3), 0.3, 2)?;
    let noise = NoiseConfig { sigma: 0.1, outlier_prob: 0.15, ..Default::default() };
    let scenes = generate_dataset(&catalog, &SceneConfig::default(), &noise, 300, 2)?;
    let (train, test) = split_scenes(&scenes, 0.25, 2)?;
    let group = &catalog.groups()[0];

    let (bank, _) = build_feature_bank(&train, &catalog, &BankOptions::default())?;
    let train_sets = sets(&train, group, &bank)?;
    let params = SetNetParams { epochs: 60, ..Default::default() };
    let model = init_setnet(&catalog, &group.group_id, params.hidden, 9)?;
    println!("grad check at init: {:.2e}", grad_check(&model, &train_sets[0], 1e-5));

    let (model, hist) = train_setnet(model, &train_sets, &params)?;
    println!("loss {:.4} -> {:.4}, fallback phase ends at {:.4}", hist.loss[0], hist.loss.last().unwrap(), hist.fallback_loss.last().unwrap());

    let test_sets = sets(&test, group, &bank)?;
    let correct = test_sets
        .iter()
        .filter(|ex| {
            let p = forward(&model, &ex.items).unwrap();
            (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])) == Some(ex.label)
        })
        .count();
    println!("test accuracy {:.4} on {} candidates", correct as f64 / test_sets.len() as f64, test_sets.len());
    Ok(())
}
