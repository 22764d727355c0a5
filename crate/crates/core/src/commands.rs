//! The work behind each CLI subcommand. Every command is a pure function of
//! its config and input files, so reruns produce byte-identical outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::catalog::{validate_scene, Catalog, ClassId, GroupId, Scene};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::{read_catalog, read_scenes, write_catalog, write_jsonl, write_scenes};
use crate::pipeline::{
    compare_methods, comparison_csv, evaluate, infer_scene, load_bundle, save_bundle, split_scenes, train_bundle,
    write_report_csv, EvalReport, Method, PredictionSource, TrainDiagnostics,
};
use crate::synth::{box_counts_by_group, generate_catalog, generate_dataset};

pub const REPORT_VERSION: u32 = 1;

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => Ok(std::fs::create_dir_all(dir)?),
        _ => Ok(()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    create_parent(path)?;
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_scenes: usize,
    pub n_boxes: usize,
    pub boxes_per_group: BTreeMap<GroupId, usize>,
}

impl DatasetSummary {
    pub fn of(scenes: &[Scene]) -> Self {
        Self {
            n_scenes: scenes.len(),
            n_boxes: scenes.iter().map(|s| s.boxes.len()).sum(),
            boxes_per_group: box_counts_by_group(scenes),
        }
    }
}

impl std::fmt::Display for DatasetSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "scenes: {}", self.n_scenes)?;
        writeln!(f, "boxes:  {}", self.n_boxes)?;
        for (g, n) in &self.boxes_per_group {
            writeln!(f, "  {g:<10} {n}")?;
        }
        Ok(())
    }
}

/// Writes `catalog` and `scenes` (into `out_dir` when given, else the
/// configured paths).
pub fn cmd_gen(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<(PathBuf, PathBuf, DatasetSummary)> {
    let s = &cfg.synth;
    let catalog = generate_catalog(s.n_groups, s.variants_per_group, s.size_gap, cfg.catalog_seed())?;
    let scenes = generate_dataset(&catalog, &s.scene, &s.noise, s.n_scenes, cfg.dataset_seed())?;
    let (cat_path, scenes_path) = match out_dir {
        Some(d) => (d.join("catalog.json"), d.join("scenes.jsonl")),
        None => (cfg.paths.catalog.clone(), cfg.paths.scenes.clone()),
    };
    create_parent(&cat_path)?;
    create_parent(&scenes_path)?;
    write_catalog(&cat_path, &catalog)?;
    write_scenes(&scenes_path, &scenes)?;
    Ok((cat_path, scenes_path, DatasetSummary::of(&scenes)))
}

fn load_labeled(cfg: &RunConfig) -> Result<(Catalog, Vec<Scene>)> {
    let catalog = read_catalog(&cfg.paths.catalog)?;
    let scenes = read_scenes(&cfg.paths.scenes)?;
    for s in &scenes {
        if let Some(v) = validate_scene(s, &catalog).into_iter().next() {
            return Err(Error::Data(format!("{}: scene `{}`: {v}", cfg.paths.scenes.display(), s.scene_id)));
        }
    }
    Ok((catalog, scenes))
}

/// The configured split of the configured scenes.
pub fn load_split(cfg: &RunConfig) -> Result<(Catalog, Vec<Scene>, Vec<Scene>)> {
    let (catalog, scenes) = load_labeled(cfg)?;
    let (train, test) = split_scenes(&scenes, cfg.test_frac, cfg.split_seed())?;
    Ok((catalog, train, test))
}

/// Trains on the train side of the split and saves the bundle.
pub fn cmd_train(cfg: &RunConfig, method: Method, out: Option<&Path>) -> Result<(PathBuf, TrainDiagnostics)> {
    let (catalog, train, _) = load_split(cfg)?;
    let (bundle, diag) = train_bundle(&train, &catalog, method, &cfg.train_config())?;
    let path = out.map_or_else(|| cfg.bundle_path(method), Path::to_path_buf);
    create_parent(&path)?;
    save_bundle(&bundle, &path)?;
    Ok((path, diag))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile<T> {
    pub version: u32,
    pub config: RunConfig,
    pub report: T,
}

pub fn format_report_table(report: &EvalReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<10} {:>7} {:>9}", "group", "n_test", "accuracy");
    for g in &report.groups {
        let _ = writeln!(s, "{:<10} {:>7} {:>9.4}", g.group_id, g.n_test, g.accuracy);
    }
    let _ = writeln!(s, "{:<10} {:>7} {:>9.4}", "micro", report.n_test, report.micro_accuracy);
    let _ = writeln!(s, "{:<10} {:>7} {:>9.4}", "macro", "", report.macro_accuracy);
    s
}

/// Evaluates a bundle on the test side of the split; writes
/// `eval-<method>.json` and `eval-<method>.csv`.
pub fn cmd_eval(cfg: &RunConfig, bundle_path: &Path, out_dir: Option<&Path>) -> Result<(EvalReport, PathBuf, PathBuf)> {
    let bundle = load_bundle(bundle_path)?;
    let (_, _, test) = load_split(cfg)?;
    let report = evaluate(&bundle, &test)?;
    let dir = out_dir.unwrap_or(&cfg.paths.reports);
    let json = dir.join(format!("eval-{}.json", bundle.method));
    let csv = dir.join(format!("eval-{}.csv", bundle.method));
    write_json(&json, &ReportFile { version: REPORT_VERSION, config: cfg.clone(), report: report.clone() })?;
    write_report_csv(&report, &csv)?;
    Ok((report, json, csv))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub scene_id: String,
    pub box_id: String,
    pub group: GroupId,
    pub predicted_class: Option<ClassId>,
    pub probs: Vec<f64>,
    pub source: PredictionSource,
}

/// One record per box of `scenes_path`, written as JSONL.
pub fn cmd_infer(cfg: &RunConfig, bundle_path: &Path, scenes_path: &Path, out: Option<&Path>) -> Result<(PathBuf, usize)> {
    let bundle = load_bundle(bundle_path)?;
    let scenes = read_scenes(scenes_path)?;
    let mut records = Vec::new();
    for s in &scenes {
        for p in infer_scene(&bundle, s)? {
            records.push(PredictionRecord {
                scene_id: s.scene_id.clone(),
                box_id: p.box_id,
                group: p.group,
                predicted_class: p.predicted_class,
                probs: p.probs,
                source: p.source,
            });
        }
    }
    let path = out.map_or_else(|| cfg.paths.reports.join("predictions.jsonl"), Path::to_path_buf);
    create_parent(&path)?;
    write_jsonl(&path, &records)?;
    Ok((path, records.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub macro_accuracy: Option<f64>,
    pub micro_accuracy: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub gbdt: MethodSummary,
    pub setnet: MethodSummary,
    pub n_groups: usize,
    /// Groups where setnet is strictly more accurate.
    pub setnet_wins: usize,
}

fn summarize(r: &std::result::Result<EvalReport, String>) -> MethodSummary {
    match r {
        Ok(r) => MethodSummary { macro_accuracy: Some(r.macro_accuracy), micro_accuracy: Some(r.micro_accuracy), error: None },
        Err(e) => MethodSummary { macro_accuracy: None, micro_accuracy: None, error: Some(e.clone()) },
    }
}

/// Both methods on the same split; writes `compare.csv` and
/// `compare-summary.json`.
pub fn cmd_compare(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<(CompareSummary, PathBuf, PathBuf)> {
    let (catalog, train, test) = load_split(cfg)?;
    let cmp = compare_methods(&train, &test, &catalog, &cfg.train_config())?;
    let summary = CompareSummary {
        gbdt: summarize(&cmp.gbdt),
        setnet: summarize(&cmp.setnet),
        n_groups: cmp.rows.len(),
        setnet_wins: cmp.setnet_wins(),
    };
    let dir = out_dir.unwrap_or(&cfg.paths.reports);
    let csv = dir.join("compare.csv");
    let json = dir.join("compare-summary.json");
    create_parent(&csv)?;
    std::fs::write(&csv, comparison_csv(&cmp)?)?;
    write_json(&json, &ReportFile { version: REPORT_VERSION, config: cfg.clone(), report: summary.clone() })?;
    Ok((summary, csv, json))
}
