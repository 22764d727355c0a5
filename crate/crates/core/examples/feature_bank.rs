//! Build the GMM feature bank from noisy shelves and read class posteriors
//! for one candidate against each of its context boxes.
//!
//! cargo run --release --example feature_bank

use shelfsize::gmm::{build_feature_bank, BankOptions};
use shelfsize::setnet::assemble_set_features;
use shelfsize::synth::{generate_catalog, generate_dataset, NoiseConfig, SceneConfig};

fn main() -> shelfsize::Result<()> {
    let catalog = generate_catalog(4, (2, 3), 0.3, 5)?;
    let noise = NoiseConfig { sigma: 0.05, ..Default::default() };
    let scenes = generate_dataset(&catalog, &SceneConfig::default(), &noise, 300, 5)?;
    let (bank, diag) = build_feature_bank(&scenes[..250], &catalog, &BankOptions::default())?;
    println!("{} mixtures fitted, {} sparse keys", diag.fitted.len(), diag.sparse.len());
    for e in diag.fitted.iter().take(4) {
        println!("  {} n={} k={}", e.key, e.n_points, e.fit.k_effective);
    }

    let scene = &scenes[260];
    let i = (0..scene.boxes.len())
        .find(|&i| catalog.n_variants(&scene.boxes[i].group_id) > Some(1))
        .expect("a multi-variant box");
    let cand = &scene.boxes[i];
    let classes = bank.classes(&cand.group_id).unwrap();
    println!("candidate {} of {} (true {}), classes {:?}", cand.box_id, cand.group_id, cand.class_id.as_ref().unwrap(), classes);
    for item in assemble_set_features(scene, i, &bank)? {
        let p: Vec<String> = item.posteriors.iter().map(|p| format!("{p:.3}")).collect();
        println!("  vs {} area_ratio={:.3} -> [{}]", item.other_group, item.area_ratio, p.join(", "));
    }
    Ok(())
}
