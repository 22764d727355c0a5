//! Method 1 for a single group: histogram encoding plus boosted trees.
//!
//! cargo run --release --example gbdt_group

use shelfsize::gbdt::{encode_candidate, fit_bins, predict_gbdt, train_gbdt, BinOptions, GbdtParams};
use shelfsize::pipeline::split_scenes;
use shelfsize::synth::{generate_catalog, generate_dataset, NoiseConfig, SceneConfig};
use shelfsize::Scene;

fn labelled(scenes: &[Scene], group: &shelfsize::GroupSpec) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for (si, s) in scenes.iter().enumerate() {
        for (bi, b) in s.boxes.iter().enumerate() {
            if b.group_id == group.group_id {
                out.push((si, bi, group.class_index(b.class_id.as_ref().unwrap()).unwrap()));
            }
        }
    }
    out
}

fn main() -> shelfsize::Result<()> {
    let catalog = generate_catalog(5, (3, 3), 0.3, 2)?;
    let noise = NoiseConfig { sigma: 0.02, ..Default::default() };
    let scenes = generate_dataset(&catalog, &SceneConfig::default(), &noise, 400, 2)?;
    let (train, test) = split_scenes(&scenes, 0.25, 2)?;
    let group = &catalog.groups()[0];

    let spec = fit_bins(&train, &catalog, &group.group_id, &BinOptions::default())?;
    println!("{}: {} context groups, {} features", group.group_id, spec.included_groups.len(), spec.encoded_len());

    let rows = labelled(&train, group);
    let x = rows.iter().map(|&(s, b, _)| encode_candidate(&train[s], b, &spec)).collect::<shelfsize::Result<Vec<_>>>()?;
    let y: Vec<usize> = rows.iter().map(|r| r.2).collect();
    let (model, hist) = train_gbdt(&x, &y, group.class_ids(), &GbdtParams::default())?;
    println!("log-loss {:.4} -> {:.4} over {} rounds", hist.loss[0], hist.loss.last().unwrap(), hist.loss.len() - 1);

    let rows = labelled(&test, group);
    let mut correct = 0;
    for &(s, b, label) in &rows {
        let p = predict_gbdt(&model, &encode_candidate(&test[s], b, &spec)?)?;
        let pred = (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
        correct += usize::from(pred == label);
    }
    println!("test accuracy {:.4} on {} candidates", correct as f64 / rows.len() as f64, rows.len());
    Ok(())
}
