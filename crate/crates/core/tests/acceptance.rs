//! Acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! Criteria 1-3 are empirical accuracy targets on synthetic data and are
//! reported as measured. Criteria 4-9 are correctness properties; any of
//! them failing makes this target fail.

mod common;

use std::time::{Duration, Instant};

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use shelfsize::commands::cmd_compare;
use shelfsize::config::RunConfig;
use shelfsize::gbdt::{predict_gbdt, train_gbdt, GbdtParams};
use shelfsize::gmm::{fit_gmm_em, gaussian_pdf, EmOptions, Gaussian2D};
use shelfsize::pipeline::{
    evaluate, infer_scene, load_bundle, save_bundle, split_scenes, train_bundle, EvalReport, Method, TrainConfig,
};
use shelfsize::setnet::{grad_check, init_setnet, LabeledSet, SetFeatureItem};
use shelfsize::synth::{generate_catalog, generate_dataset, NoiseConfig, SceneConfig};
use shelfsize::{Catalog, ClassId, GroupId, Scene};

struct Run {
    gbdt: EvalReport,
    setnet: EvalReport,
    gbdt_losses: Vec<(GroupId, Vec<f64>)>,
    elapsed: Duration,
}

impl Run {
    fn pairs(&self) -> Vec<(&GroupId, f64, f64)> {
        self.gbdt
            .groups
            .iter()
            .filter_map(|g| self.setnet.group(&g.group_id).map(|s| (&g.group_id, g.accuracy, s.accuracy)))
            .collect()
    }
}

fn acceptance_data(sigma: f64, outlier_prob: f64, n_scenes: usize, seed: u64) -> (Catalog, Vec<Scene>, Vec<Scene>) {
    let catalog = generate_catalog(6, (2, 3), 0.30, seed).unwrap();
    let noise = NoiseConfig { sigma, outlier_prob, ..Default::default() };
    let scenes = generate_dataset(&catalog, &SceneConfig::default(), &noise, n_scenes, seed).unwrap();
    let (train, test) = split_scenes(&scenes, 0.2, seed).unwrap();
    (catalog, train, test)
}

fn run_both(sigma: f64, outlier_prob: f64, n_scenes: usize, seed: u64) -> Run {
    let (catalog, train, test) = acceptance_data(sigma, outlier_prob, n_scenes, seed);
    let config = TrainConfig { seed, ..Default::default() };
    let t = Instant::now();
    let (gb, gdiag) = train_bundle(&train, &catalog, Method::Gbdt, &config).unwrap();
    let (sn, _) = train_bundle(&train, &catalog, Method::Setnet, &config).unwrap();
    let gbdt = evaluate(&gb, &test).unwrap();
    let setnet = evaluate(&sn, &test).unwrap();
    let gbdt_losses = gdiag.trained.into_iter().map(|t| (t.group_id, t.loss)).collect();
    Run { gbdt, setnet, gbdt_losses, elapsed: t.elapsed() }
}

fn per_group(run: &Run) -> String {
    run.pairs().iter().map(|(g, a, b)| format!("{g} {a:.4}/{b:.4}")).collect::<Vec<_>>().join(", ")
}

fn report(id: u32, pass: bool, detail: String) -> bool {
    println!("criterion {id}: {} | {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn criterion_1(run: &Run) -> bool {
    let gbdt_min = run.gbdt.groups.iter().map(|g| g.accuracy).fold(1.0, f64::min);
    let setnet_min = run.setnet.groups.iter().map(|g| g.accuracy).fold(1.0, f64::min);
    let fast = run.elapsed <= Duration::from_secs(300);
    report(
        1,
        gbdt_min >= 0.99 && setnet_min >= 0.99 && fast,
        format!(
            "noiseless, 500 scenes: min group accuracy gbdt {gbdt_min:.4}, setnet {setnet_min:.4} (>= 0.99); \
             train+eval {:.1?} (<= 5 min); per group gbdt/setnet: {}",
            run.elapsed,
            per_group(run)
        ),
    )
}

fn criterion_2(run: &Run) -> bool {
    let pairs = run.pairs();
    let close = pairs.iter().filter(|(_, a, b)| (a - b).abs() <= 0.05).count();
    let frac = close as f64 / pairs.len() as f64;
    report(
        2,
        frac >= 0.8,
        format!("sigma 0.02: {close}/{} groups within 0.05 ({frac:.2} >= 0.80); {}", pairs.len(), per_group(run)),
    )
}

fn criterion_3(runs: &[(u64, Run)]) -> bool {
    let mut held = 0;
    let mut parts = Vec::new();
    for (seed, run) in runs {
        let pairs = run.pairs();
        let wins = pairs.iter().filter(|(_, a, b)| b > a).count();
        let ok = run.setnet.macro_accuracy >= run.gbdt.macro_accuracy && wins as f64 >= 0.6 * pairs.len() as f64;
        held += usize::from(ok);
        parts.push(format!(
            "seed {seed}: macro gbdt {:.4} setnet {:.4}, setnet wins {wins}/{} [{}]",
            run.gbdt.macro_accuracy,
            run.setnet.macro_accuracy,
            pairs.len(),
            if ok { "holds" } else { "fails" }
        ));
    }
    report(3, held >= 2, format!("sigma 0.10, outliers 0.15: holds in {held}/3 seeds; {}", parts.join("; ")))
}

fn criterion_4() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let (mut worst_mean, mut monotone) = (0.0f64, true);
    for trial in 0..20 {
        let sd: [f64; 2] = [rng.random_range(0.5..1.5), rng.random_range(0.5..1.5)];
        let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let sep = rng.random_range(5.0..8.0) * sd[0].max(sd[1]);
        let m0 = [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)];
        let m1 = [m0[0] + sep * angle.cos(), m0[1] + sep * angle.sin()];
        let mut pts = Vec::new();
        let mut sample_means = [[0.0; 2]; 2];
        let n = [rng.random_range(150..350), rng.random_range(150..350)];
        for (c, m) in [m0, m1].iter().enumerate() {
            for _ in 0..n[c] {
                let e: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
                let p = [m[0] + sd[0] * e[0], m[1] + sd[1] * e[1]];
                sample_means[c][0] += p[0] / n[c] as f64;
                sample_means[c][1] += p[1] / n[c] as f64;
                pts.push(p);
            }
        }
        let (fit, diag) = fit_gmm_em(&pts, 2, &EmOptions { seed: trial, ..Default::default() }).unwrap();
        monotone &= diag.ll_history.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0));
        for sm in &sample_means {
            let d = fit
                .components()
                .iter()
                .map(|c| (c.mean[0] - sm[0]).hypot(c.mean[1] - sm[1]))
                .fold(f64::INFINITY, f64::min);
            worst_mean = worst_mean.max(d);
        }
    }
    report(
        4,
        worst_mean <= 0.05 && monotone,
        format!("20 separated mixtures: worst mean error {worst_mean:.2e} (<= 0.05); log-likelihood monotone: {monotone}"),
    )
}

fn criterion_5() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let (mut worst_rel, mut worst_mass) = (0.0f64, 0.0f64);
    for _ in 0..10 {
        let a: f64 = rng.random_range(0.3..2.0);
        let c: f64 = rng.random_range(0.3..2.0);
        let b: f64 = rng.random_range(-1.5..1.5);
        let cov = [[a * a, a * b], [a * b, b * b + c * c]];
        let mean = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let g = Gaussian2D::new(mean, cov).unwrap();
        let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
        for _ in 0..20 {
            let x: [f64; 2] = [rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0)];
            let (dx, dy) = (x[0] - mean[0], x[1] - mean[1]);
            let q = (cov[1][1] * dx * dx - 2.0 * cov[0][1] * dx * dy + cov[0][0] * dy * dy) / det;
            let want = (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt());
            worst_rel = worst_rel.max(rel_diff(gaussian_pdf(x, &g).unwrap(), want));
        }
        let (n, sx, sy) = (300, 6.0 * cov[0][0].sqrt(), 6.0 * cov[1][1].sqrt());
        let (hx, hy) = (2.0 * sx / n as f64, 2.0 * sy / n as f64);
        let mut mass = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = [mean[0] - sx + (i as f64 + 0.5) * hx, mean[1] - sy + (j as f64 + 0.5) * hy];
                mass += gaussian_pdf(x, &g).unwrap() * hx * hy;
            }
        }
        worst_mass = worst_mass.max((mass - 1.0).abs());
    }
    report(
        5,
        worst_rel <= 1e-12 && worst_mass <= 1e-3,
        format!("pdf relative error {worst_rel:.1e} (<= 1e-12); normalisation error {worst_mass:.1e} (<= 1e-3)"),
    )
}

fn criterion_6() -> bool {
    let catalog = generate_catalog(4, (2, 3), 0.3, 60).unwrap();
    let groups = catalog.group_ids();
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let mut worst = 0.0f64;
    for pair in 0..20 {
        let target = &catalog.groups()[pair % groups.len()];
        let k = target.n_variants();
        let model = init_setnet(&catalog, &target.group_id, 5, pair as u64).unwrap();
        let items = (0..rng.random_range(1..6))
            .map(|_| {
                let p: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
                let z: f64 = p.iter().sum();
                SetFeatureItem {
                    other_group: groups[rng.random_range(0..groups.len())].clone(),
                    area_ratio: rng.random_range(0.1..5.0),
                    own_r: rng.random_range(0.3..3.0),
                    posteriors: p.iter().map(|v| v / z).collect(),
                }
            })
            .collect();
        let ex = LabeledSet { items, label: rng.random_range(0..k) };
        worst = worst.max(grad_check(&model, &ex, 1e-5));
    }
    report(6, worst < 1e-4, format!("20 model/example pairs: max relative gradient error {worst:.2e} (< 1e-4)"))
}

fn criterion_7() -> bool {
    let (catalog, train, test) = acceptance_data(0.05, 0.05, 500, 70);
    let test = &test[..100];
    let mut worst = 0.0f64;
    let mut same_class = true;
    for method in [Method::Gbdt, Method::Setnet] {
        let (bundle, _) = train_bundle(&train, &catalog, method, &quick_config()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for scene in test {
            let base = infer_scene(&bundle, scene).unwrap();
            for s in [0.1, 1.0, 7.3] {
                let mut perm: Vec<usize> = (0..scene.boxes.len()).collect();
                for i in (1..perm.len()).rev() {
                    perm.swap(i, rng.random_range(0..=i));
                }
                let mut moved = scene.rescaled(s);
                moved.boxes = perm.iter().map(|&i| moved.boxes[i].clone()).collect();
                let preds = infer_scene(&bundle, &moved).unwrap();
                for (j, &i) in perm.iter().enumerate() {
                    same_class &= preds[j].predicted_class == base[i].predicted_class;
                    for (a, b) in preds[j].probs.iter().zip(&base[i].probs) {
                        worst = worst.max((a - b).abs());
                    }
                }
            }
        }
    }
    report(
        7,
        worst <= 1e-9 && same_class,
        format!("100 scenes x scales {{0.1, 1, 7.3}} x shuffles, both methods: max prob change {worst:.1e} (<= 1e-9)"),
    )
}

fn criterion_8() -> bool {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::new(80);
    cfg.synth.n_scenes = 150;
    cfg.paths.catalog = dir.path().join("catalog.json");
    cfg.paths.scenes = dir.path().join("scenes.jsonl");
    cfg.train = quick_config();
    shelfsize::commands::cmd_gen(&cfg, None).unwrap();
    let (_, a, _) = cmd_compare(&cfg, Some(&dir.path().join("a"))).unwrap();
    let (_, b, _) = cmd_compare(&cfg, Some(&dir.path().join("b"))).unwrap();
    let csv_same = std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap();

    let (catalog, train, test) = acceptance_data(0.05, 0.05, 250, 81);
    let test = &test[..50];
    let mut round_trip = true;
    for method in [Method::Gbdt, Method::Setnet] {
        let (bundle, _) = train_bundle(&train, &catalog, method, &quick_config()).unwrap();
        let path = dir.path().join(format!("{method}.json"));
        save_bundle(&bundle, &path).unwrap();
        let loaded = load_bundle(&path).unwrap();
        round_trip &= test.iter().all(|s| infer_scene(&bundle, s).unwrap() == infer_scene(&loaded, s).unwrap());
    }
    report(
        8,
        csv_same && round_trip,
        format!("repeated compare CSV identical: {csv_same}; save/load predictions identical on 50 scenes: {round_trip}"),
    )
}

fn criterion_9(runs: &[&Run]) -> bool {
    let mut rises = 0;
    let mut curves = 0;
    for run in runs {
        for (_, loss) in &run.gbdt_losses {
            curves += 1;
            rises += usize::from(loss.windows(2).any(|w| w[1] > w[0] + 1e-12));
        }
    }
    // Three classes, each defined by one coordinate being largest.
    let mut rng = ChaCha8Rng::seed_from_u64(90);
    let x: Vec<Vec<f64>> = (0..90).map(|i| {
        let mut r: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
        r[i % 3] += 1.0;
        r
    }).collect();
    let y: Vec<usize> = (0..90).map(|i| i % 3).collect();
    let classes: Vec<ClassId> = ["a", "b", "c"].map(ClassId::from).to_vec();
    let (model, _) = train_gbdt(&x, &y, classes, &GbdtParams { n_rounds: 10, ..Default::default() }).unwrap();
    let correct = x.iter().zip(&y).filter(|(r, &c)| argmax(&predict_gbdt(&model, r).unwrap()) == c).count();
    report(
        9,
        rises == 0 && correct == x.len(),
        format!(
            "{curves} training curves, {rises} with a loss increase; toy data {correct}/{} correct after 10 rounds",
            x.len()
        ),
    )
}

fn main() {
    // Listing mode used by some test runners.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let c1 = run_both(0.0, 0.0, 500, 1);
    let c2 = run_both(0.02, 0.0, 1000, 1);
    let c3: Vec<(u64, Run)> = [1, 2, 3].into_iter().map(|s| (s, run_both(0.10, 0.15, 1000, s))).collect();

    let empirical = [criterion_1(&c1), criterion_2(&c2), criterion_3(&c3)];
    let mut runs = vec![&c1, &c2];
    runs.extend(c3.iter().map(|(_, r)| r));
    let correctness =
        [criterion_4(), criterion_5(), criterion_6(), criterion_7(), criterion_8(), criterion_9(&runs)];
    let passed = empirical.iter().chain(&correctness).filter(|&&p| p).count();
    println!("acceptance: {passed}/9 criteria pass");
    if correctness.contains(&false) {
        std::process::exit(1);
    }
}
