//! Train a bundle, save it, load it back and classify an unlabelled shelf.
//!
//! cargo run --release --example bundle_inference

use shelfsize::pipeline::{evaluate, infer_scene, load_bundle, save_bundle, train_bundle, Method, TrainConfig};
use shelfsize::synth::{generate_catalog, generate_dataset, NoiseConfig, SceneConfig};

fn main() -> shelfsize::Result<()> {
    let catalog = generate_catalog(4, (2, 3), 0.3, 8)?;
    let scenes = generate_dataset(&catalog, &SceneConfig::default(), &NoiseConfig { sigma: 0.02, ..Default::default() }, 250, 8)?;
    let (train, test) = scenes.split_at(200);

    let (bundle, diag) = train_bundle(train, &catalog, Method::Gbdt, &TrainConfig::default())?;
    println!("trained {} groups, provenance {}", diag.trained.len(), &bundle.provenance.config_hash[..12]);

    let path = std::env::temp_dir().join("shelfsize-bundle-gbdt.json");
    save_bundle(&bundle, &path)?;
    let bundle = load_bundle(&path)?;
    let report = evaluate(&bundle, test)?;
    println!("macro accuracy {:.4}, micro {:.4}", report.macro_accuracy, report.micro_accuracy);

    let mut shelf = test[0].rescaled(3.0);
    shelf.boxes.iter_mut().for_each(|b| b.class_id = None);
    for p in infer_scene(&bundle, &shelf)? {
        let cls = p.predicted_class.map_or("-".to_string(), |c| c.to_string());
        let top = p.probs.iter().copied().fold(0.0, f64::max);
        println!("  {:<4} {:<4} {:<8} p={top:.3} ({:?})", p.box_id, p.group, cls, p.source);
    }
    Ok(())
}
