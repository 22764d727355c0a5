//! Both methods on one shared split.
//!
//! cargo run --release --example compare_methods -- [sigma] [outlier_prob] [n_scenes] [seed]

use shelfsize::pipeline::{compare_methods, comparison_csv, split_scenes, TrainConfig};
use shelfsize::synth::{generate_catalog, generate_dataset, NoiseConfig, SceneConfig};

fn main() -> shelfsize::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let (sigma, outlier_prob) = (arg(0, 0.10), arg(1, 0.15));
    let n_scenes = arg(2, 1000.0) as usize;
    let seed = arg(3, 1.0) as u64;

    let catalog = generate_catalog(6, (2, 3), 0.30, seed)?;
    let noise = NoiseConfig { sigma, outlier_prob, ..Default::default() };
    let scenes = generate_dataset(&catalog, &SceneConfig::default(), &noise, n_scenes, seed)?;
    let (train, test) = split_scenes(&scenes, 0.2, seed)?;
    let config = TrainConfig { seed, ..Default::default() };

    let t = std::time::Instant::now();
    let cmp = compare_methods(&train, &test, &catalog, &config)?;
    print!("{}", comparison_csv(&cmp)?);
    for (name, r) in [("gbdt", &cmp.gbdt), ("setnet", &cmp.setnet)] {
        match r {
            Ok(r) => println!("{name}: macro {:.4} micro {:.4}", r.macro_accuracy, r.micro_accuracy),
            Err(e) => println!("{name}: failed: {e}"),
        }
    }
    println!("setnet wins {}/{} groups in {:.1?}", cmp.setnet_wins(), cmp.paired().count(), t.elapsed());
    Ok(())
}
