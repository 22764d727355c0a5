//! Generate a catalog and a handful of noisy shelves, then check that pixel
//! ratios recover the catalog's millimetre ratios.
//!
//! cargo run --example generate_dataset

use shelfsize::synth::{generate_catalog, generate_dataset, NoiseConfig, SceneConfig};
use shelfsize::{frontal_area, validate_scene};

fn main() -> shelfsize::Result<()> {
    let catalog = generate_catalog(4, (2, 3), 0.3, 7)?;
    for g in catalog.groups() {
        let sizes: Vec<String> = g.variants.iter().map(|v| format!("{:.0}x{:.0}", v.width_mm, v.height_mm)).collect();
        println!("{}: {}", g.group_id, sizes.join(", "));
    }

    let noise = NoiseConfig { sigma: 0.03, outlier_prob: 0.05, ..Default::default() };
    let scenes = generate_dataset(&catalog, &SceneConfig::default(), &noise, 5, 7)?;
    for s in &scenes {
        assert!(validate_scene(s, &catalog).is_empty());
        let b0 = &s.boxes[0];
        let v0 = catalog.group(&b0.group_id).unwrap().variants.iter().find(|v| Some(&v.class_id) == b0.class_id.as_ref()).unwrap();
        // Pixels per mm^2 of the first box, i.e. s^2 up to noise.
        let s2 = frontal_area(b0)? / v0.area_mm2();
        println!("{} boxes={:>2} scale~{:.2}", s.scene_id, s.boxes.len(), s2.sqrt());
    }

    let line = serde_json::to_string(&scenes[0].boxes[0])?;
    println!("first box as JSON: {line}");
    Ok(())
}
