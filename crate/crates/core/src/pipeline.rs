//! Per-group training, scene inference, evaluation and bundle persistence.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::catalog::{validate_scene, Catalog, ClassId, GroupId, Scene};
use crate::error::{Error, Result};
use crate::gbdt::{encode_candidate, fit_bins, predict_gbdt, train_gbdt, BinOptions, BinnedFeatureSpec, GbdtModel, GbdtParams};
use crate::gmm::{build_feature_bank, BankDiagnostics, BankOptions, GmmFeatureBank};
use crate::io::to_jsonl;
use crate::setnet::{assemble_set_features, forward, init_setnet, train_setnet, LabeledSet, SetNetModel, SetNetParams};
use crate::synth::derive_seed;

pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gbdt,
    Setnet,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Gbdt => "gbdt",
            Method::Setnet => "setnet",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Splits whole scenes so no scene contributes context to both sides.
pub fn split_scenes(scenes: &[Scene], test_frac: f64, seed: u64) -> Result<(Vec<Scene>, Vec<Scene>)> {
    if scenes.len() < 2 {
        return Err(Error::Data(format!("need at least 2 scenes to split, got {}", scenes.len())));
    }
    if !(test_frac > 0.0 && test_frac < 1.0) {
        return Err(Error::Config(format!("test_frac must be in (0, 1), got {test_frac}")));
    }
    let n = scenes.len();
    let n_test = ((n as f64 * test_frac).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_test = vec![false; n];
    for &i in &idx[..n_test] {
        is_test[i] = true;
    }
    let (test, train): (Vec<_>, Vec<_>) = scenes.iter().cloned().zip(is_test).partition(|(_, t)| *t);
    Ok((train.into_iter().map(|(s, _)| s).collect(), test.into_iter().map(|(s, _)| s).collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Groups with fewer labelled training candidates are not trained.
    pub min_candidates: usize,
    /// Master seed. Per-group seeds derive from it; the `seed` fields of the
    /// nested parameter records are overwritten.
    pub seed: u64,
    pub bins: BinOptions,
    pub gbdt: GbdtParams,
    pub bank: BankOptions,
    pub setnet: SetNetParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            min_candidates: 20,
            seed: 0,
            bins: BinOptions::default(),
            gbdt: GbdtParams::default(),
            bank: BankOptions::default(),
            setnet: SetNetParams::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.setnet.validate()?;
        if self.min_candidates < 1 {
            return Err(Error::Config("min_candidates must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum GroupArtifact {
    Gbdt { spec: BinnedFeatureSpec, model: GbdtModel },
    Setnet { model: SetNetModel },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the serialized training config.
    pub config_hash: String,
    pub seed: u64,
    /// SHA-256 of the training scenes as JSONL.
    pub train_fingerprint: String,
    pub n_train_scenes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub version: u32,
    pub method: Method,
    pub catalog: Catalog,
    pub config: TrainConfig,
    pub provenance: Provenance,
    pub models: BTreeMap<GroupId, GroupArtifact>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bank: Option<GmmFeatureBank>,
}

impl ModelBundle {
    pub fn validate(&self) -> Result<()> {
        if self.version != BUNDLE_VERSION {
            return Err(Error::Version { expected: BUNDLE_VERSION, found: self.version });
        }
        if self.method == Method::Setnet && self.bank.is_none() {
            return Err(Error::Data("setnet bundle without feature bank".into()));
        }
        for (g, art) in &self.models {
            let group = self.catalog.require_group(g)?;
            match (art, self.method) {
                (GroupArtifact::Gbdt { spec, model }, Method::Gbdt) => {
                    spec.validate()?;
                    model.validate()?;
                    if model.n_features != spec.encoded_len() || model.class_order != group.class_ids() {
                        return Err(Error::Data(format!("gbdt artifact for `{g}` does not match its spec")));
                    }
                }
                (GroupArtifact::Setnet { model }, Method::Setnet) => {
                    model.validate()?;
                    if model.class_order != group.class_ids() {
                        return Err(Error::Data(format!("setnet artifact for `{g}` does not match the catalog")));
                    }
                }
                _ => return Err(Error::Data(format!("artifact for `{g}` does not match method {}", self.method))),
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupTrainInfo {
    pub group_id: GroupId,
    pub n_candidates: usize,
    /// Per-round (gbdt) or per-epoch (setnet) training loss.
    pub loss: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainDiagnostics {
    pub trained: Vec<GroupTrainInfo>,
    /// Groups below `min_candidates`, with their counts.
    pub skipped: Vec<(GroupId, usize)>,
    pub single_variant: Vec<GroupId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bank: Option<BankDiagnostics>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn check_labeled(scenes: &[Scene], catalog: &Catalog) -> Result<()> {
    for s in scenes {
        if let Some(v) = validate_scene(s, catalog).into_iter().next() {
            return Err(Error::Data(format!("scene `{}`: {v}", s.scene_id)));
        }
        if let Some(b) = s.boxes.iter().find(|b| b.class_id.is_none()) {
            return Err(Error::Data(format!("scene `{}` box `{}` has no class label", s.scene_id, b.box_id)));
        }
    }
    Ok(())
}

/// (scene index, box index, label index) for every box of `group`.
fn candidates(scenes: &[Scene], catalog: &Catalog, group: &GroupId) -> Vec<(usize, usize, usize)> {
    let spec = catalog.group(group).expect("group from catalog");
    let mut out = Vec::new();
    for (si, s) in scenes.iter().enumerate() {
        for (bi, b) in s.boxes.iter().enumerate() {
            if &b.group_id == group {
                let c = b.class_id.as_ref().and_then(|c| spec.class_index(c)).expect("validated label");
                out.push((si, bi, c));
            }
        }
    }
    out
}

fn train_group(
    scenes: &[Scene],
    catalog: &Catalog,
    group: &GroupId,
    group_index: usize,
    cands: &[(usize, usize, usize)],
    method: Method,
    config: &TrainConfig,
    bank: Option<&GmmFeatureBank>,
) -> Result<(GroupArtifact, Vec<f64>)> {
    let class_order = catalog.require_group(group)?.class_ids();
    let y: Vec<usize> = cands.iter().map(|c| c.2).collect();
    match method {
        Method::Gbdt => {
            let spec = fit_bins(scenes, catalog, group, &config.bins)?;
            let x = cands.iter().map(|&(si, bi, _)| encode_candidate(&scenes[si], bi, &spec)).collect::<Result<Vec<_>>>()?;
            let params = GbdtParams { seed: derive_seed(config.seed, 2 * group_index as u64), ..config.gbdt.clone() };
            let (model, hist) = train_gbdt(&x, &y, class_order, &params)?;
            Ok((GroupArtifact::Gbdt { spec, model }, hist.loss))
        }
        Method::Setnet => {
            let bank = bank.expect("bank built for setnet");
            let data = cands
                .iter()
                .map(|&(si, bi, label)| Ok(LabeledSet { items: assemble_set_features(&scenes[si], bi, bank)?, label }))
                .collect::<Result<Vec<_>>>()?;
            let init_seed = derive_seed(config.seed, 2 * group_index as u64);
            let params = SetNetParams { seed: derive_seed(config.seed, 2 * group_index as u64 + 1), ..config.setnet.clone() };
            let model = init_setnet(catalog, group, params.hidden, init_seed)?;
            let (model, hist) = train_setnet(model, &data, &params)?;
            Ok((GroupArtifact::Setnet { model }, hist.loss))
        }
    }
}

/// Trains one model per multi-variant group with at least
/// `config.min_candidates` labelled candidates. Groups train in parallel.
pub fn train_bundle(
    train_scenes: &[Scene],
    catalog: &Catalog,
    method: Method,
    config: &TrainConfig,
) -> Result<(ModelBundle, TrainDiagnostics)> {
    config.validate()?;
    check_labeled(train_scenes, catalog)?;
    let mut diag = TrainDiagnostics::default();

    let bank = match method {
        Method::Gbdt => None,
        Method::Setnet => {
            let mut opts = config.bank.clone();
            opts.em.seed = config.seed;
            let (bank, bd) = build_feature_bank(train_scenes, catalog, &opts)?;
            diag.bank = Some(bd);
            Some(bank)
        }
    };

    let mut jobs = Vec::new();
    for (gi, g) in catalog.groups().iter().enumerate() {
        if g.n_variants() == 1 {
            diag.single_variant.push(g.group_id.clone());
            continue;
        }
        let cands = candidates(train_scenes, catalog, &g.group_id);
        if cands.len() < config.min_candidates {
            diag.skipped.push((g.group_id.clone(), cands.len()));
            continue;
        }
        jobs.push((gi, g.group_id.clone(), cands));
    }
    if jobs.is_empty() {
        return Err(Error::Data("no group has enough training candidates".into()));
    }

    let results: Vec<(GroupId, usize, Result<(GroupArtifact, Vec<f64>)>)> = jobs
        .par_iter()
        .map(|(gi, g, cands)| {
            let r = train_group(train_scenes, catalog, g, *gi, cands, method, config, bank.as_ref());
            (g.clone(), cands.len(), r)
        })
        .collect();
    let mut models = BTreeMap::new();
    for (g, n, r) in results {
        let (art, loss) = r?;
        log::info!("trained {method} model for {g} on {n} candidates");
        diag.trained.push(GroupTrainInfo { group_id: g.clone(), n_candidates: n, loss });
        models.insert(g, art);
    }

    let provenance = Provenance {
        config_hash: sha256_hex(&serde_json::to_vec(config)?),
        seed: config.seed,
        train_fingerprint: sha256_hex(to_jsonl(train_scenes)?.as_bytes()),
        n_train_scenes: train_scenes.len(),
    };
    let bundle = ModelBundle {
        version: BUNDLE_VERSION,
        method,
        catalog: catalog.clone(),
        config: config.clone(),
        provenance,
        models,
        bank,
    };
    Ok((bundle, diag))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionSource {
    Model,
    SingleVariant,
    /// The group has no trained model; no class is guessed.
    NoModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxPrediction {
    pub box_id: String,
    pub group: GroupId,
    pub predicted_class: Option<ClassId>,
    /// Over the group's classes in catalog order; empty for `NoModel`.
    pub probs: Vec<f64>,
    pub source: PredictionSource,
}

fn argmax(p: &[f64]) -> usize {
    p.iter().enumerate().fold(0, |best, (i, &v)| if v > p[best] { i } else { best })
}

/// Classifies every box of one scene using only that scene's context.
pub fn infer_scene(bundle: &ModelBundle, scene: &Scene) -> Result<Vec<BoxPrediction>> {
    if let Some(v) = validate_scene(scene, &bundle.catalog).into_iter().next() {
        return Err(Error::Data(format!("scene `{}`: {v}", scene.scene_id)));
    }
    scene
        .boxes
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let group = bundle.catalog.require_group(&b.group_id)?;
            let (probs, source) = if group.n_variants() == 1 {
                (vec![1.0], PredictionSource::SingleVariant)
            } else {
                match bundle.models.get(&b.group_id) {
                    None => (Vec::new(), PredictionSource::NoModel),
                    Some(GroupArtifact::Gbdt { spec, model }) => {
                        (predict_gbdt(model, &encode_candidate(scene, i, spec)?)?, PredictionSource::Model)
                    }
                    Some(GroupArtifact::Setnet { model }) => {
                        let bank = bundle.bank.as_ref().ok_or(Error::Data("setnet bundle without feature bank".into()))?;
                        (forward(model, &assemble_set_features(scene, i, bank)?)?, PredictionSource::Model)
                    }
                }
            };
            let predicted_class = (!probs.is_empty()).then(|| group.variants[argmax(&probs)].class_id.clone());
            Ok(BoxPrediction { box_id: b.box_id.clone(), group: b.group_id.clone(), predicted_class, probs, source })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEval {
    pub group_id: GroupId,
    pub n_test: usize,
    pub accuracy: f64,
    pub class_order: Vec<ClassId>,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: Method,
    pub groups: Vec<GroupEval>,
    pub n_test: usize,
    pub micro_accuracy: f64,
    pub macro_accuracy: f64,
}

impl EvalReport {
    pub fn group(&self, g: &GroupId) -> Option<&GroupEval> {
        self.groups.iter().find(|e| &e.group_id == g)
    }
}

/// Accuracy over test candidates whose group has a trained model.
pub fn evaluate(bundle: &ModelBundle, test_scenes: &[Scene]) -> Result<EvalReport> {
    check_labeled(test_scenes, &bundle.catalog)?;
    let preds = test_scenes.par_iter().map(|s| infer_scene(bundle, s)).collect::<Result<Vec<_>>>()?;
    let mut confusion: BTreeMap<&GroupId, Vec<Vec<usize>>> = BTreeMap::new();
    for (scene, scene_preds) in test_scenes.iter().zip(&preds) {
        for (b, p) in scene.boxes.iter().zip(scene_preds) {
            if p.source != PredictionSource::Model {
                continue;
            }
            let group = bundle.catalog.require_group(&b.group_id)?;
            let k = group.n_variants();
            let t = b.class_id.as_ref().and_then(|c| group.class_index(c)).expect("validated label");
            let m = confusion.entry(&b.group_id).or_insert_with(|| vec![vec![0; k]; k]);
            m[t][argmax(&p.probs)] += 1;
        }
    }
    if confusion.is_empty() {
        return Err(Error::Empty("evaluable test candidates"));
    }
    let groups: Vec<GroupEval> = confusion
        .into_iter()
        .map(|(g, m)| {
            let n: usize = m.iter().flatten().sum();
            let correct: usize = (0..m.len()).map(|i| m[i][i]).sum();
            GroupEval {
                group_id: g.clone(),
                n_test: n,
                accuracy: correct as f64 / n as f64,
                class_order: bundle.catalog.require_group(g).expect("known").class_ids(),
                confusion: m,
            }
        })
        .collect();
    let n_test: usize = groups.iter().map(|g| g.n_test).sum();
    let correct: f64 = groups.iter().map(|g| g.accuracy * g.n_test as f64).sum();
    let macro_accuracy = groups.iter().map(|g| g.accuracy).sum::<f64>() / groups.len() as f64;
    Ok(EvalReport { method: bundle.method, groups, n_test, micro_accuracy: correct / n_test as f64, macro_accuracy })
}

pub fn bundle_to_json(bundle: &ModelBundle) -> Result<String> {
    Ok(serde_json::to_string(bundle)?)
}

pub fn bundle_from_json(text: &str) -> Result<ModelBundle> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let found = value
        .get("version")
        .and_then(serde_json::Value::as_u64)
        .ok_or(Error::Data("bundle has no numeric `version` field".into()))?;
    if found != u64::from(BUNDLE_VERSION) {
        return Err(Error::Version { expected: BUNDLE_VERSION, found: u32::try_from(found).unwrap_or(u32::MAX) });
    }
    let bundle: ModelBundle = serde_json::from_value(value)?;
    bundle.validate()?;
    Ok(bundle)
}

pub fn save_bundle(bundle: &ModelBundle, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, bundle_to_json(bundle)?)?;
    Ok(())
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<ModelBundle> {
    bundle_from_json(&crate::io::read_text(path)?)
}

pub fn write_report_json(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

/// Columns `group_id, n_test, accuracy_<method>`.
pub fn write_report_csv(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["group_id", "n_test", &format!("accuracy_{}", report.method)])?;
    for g in &report.groups {
        w.write_record([g.group_id.as_str(), &g.n_test.to_string(), &g.accuracy.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub group_id: GroupId,
    pub n_test: usize,
    /// `None` when the method failed or has no model for the group.
    pub acc_gbdt: Option<f64>,
    pub acc_setnet: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub gbdt: std::result::Result<EvalReport, String>,
    pub setnet: std::result::Result<EvalReport, String>,
}

impl Comparison {
    /// Groups where both methods have an accuracy.
    pub fn paired(&self) -> impl Iterator<Item = (&ComparisonRow, f64, f64)> {
        self.rows.iter().filter_map(|r| Some((r, r.acc_gbdt?, r.acc_setnet?)))
    }

    /// Groups where setnet is strictly more accurate.
    pub fn setnet_wins(&self) -> usize {
        self.paired().filter(|(_, g, s)| s > g).count()
    }
}

fn train_and_eval(train: &[Scene], test: &[Scene], catalog: &Catalog, method: Method, config: &TrainConfig) -> Result<EvalReport> {
    let (bundle, _) = train_bundle(train, catalog, method, config)?;
    evaluate(&bundle, test)
}

/// Trains and evaluates both methods on the same split. A failure of one
/// method is recorded and the other still runs.
pub fn compare_methods(train: &[Scene], test: &[Scene], catalog: &Catalog, config: &TrainConfig) -> Result<Comparison> {
    let (gbdt, setnet) = rayon::join(
        || train_and_eval(train, test, catalog, Method::Gbdt, config).map_err(|e| e.to_string()),
        || train_and_eval(train, test, catalog, Method::Setnet, config).map_err(|e| e.to_string()),
    );
    let mut rows: BTreeMap<GroupId, ComparisonRow> = BTreeMap::new();
    for (report, is_gbdt) in [(&gbdt, true), (&setnet, false)] {
        let Ok(report) = report else { continue };
        for g in &report.groups {
            let row = rows.entry(g.group_id.clone()).or_insert_with(|| ComparisonRow {
                group_id: g.group_id.clone(),
                n_test: g.n_test,
                acc_gbdt: None,
                acc_setnet: None,
            });
            if is_gbdt {
                row.acc_gbdt = Some(g.accuracy);
            } else {
                row.acc_setnet = Some(g.accuracy);
            }
        }
    }
    if gbdt.is_err() && setnet.is_err() {
        return Err(Error::Data(format!("both methods failed: gbdt: {}; setnet: {}", gbdt.unwrap_err(), setnet.unwrap_err())));
    }
    Ok(Comparison { rows: rows.into_values().collect(), gbdt, setnet })
}

/// Columns `group_id, n_test, acc_gbdt, acc_setnet`; a failed method's
/// cells read `failed`.
pub fn comparison_csv(cmp: &Comparison) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["group_id", "n_test", "acc_gbdt", "acc_setnet"])?;
    let cell = |acc: Option<f64>, failed: bool| match acc {
        Some(a) => a.to_string(),
        None if failed => "failed".to_string(),
        None => String::new(),
    };
    for r in &cmp.rows {
        w.write_record([
            r.group_id.as_str(),
            &r.n_test.to_string(),
            &cell(r.acc_gbdt, cmp.gbdt.is_err()),
            &cell(r.acc_setnet, cmp.setnet.is_err()),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_catalog, generate_dataset, NoiseConfig, SceneConfig};

    fn data(n_groups: usize, n: usize, seed: u64) -> (Catalog, Vec<Scene>) {
        let cat = generate_catalog(n_groups, (2, 2), 0.3, seed).unwrap();
        let scenes = generate_dataset(&cat, &SceneConfig::default(), &NoiseConfig::default(), n, seed).unwrap();
        (cat, scenes)
    }

    fn quick() -> TrainConfig {
        TrainConfig {
            gbdt: GbdtParams { n_rounds: 20, ..Default::default() },
            setnet: SetNetParams { hidden: 8, epochs: 20, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn split_basics() {
        let (_, scenes) = data(2, 100, 1);
        let (tr, te) = split_scenes(&scenes, 0.2, 7).unwrap();
        assert_eq!((tr.len(), te.len()), (80, 20));
        let again = split_scenes(&scenes, 0.2, 7).unwrap();
        assert_eq!((tr.clone(), te.clone()), again);
        let ids: std::collections::BTreeSet<_> = tr.iter().map(|s| &s.scene_id).collect();
        assert!(te.iter().all(|s| !ids.contains(&s.scene_id)));
        assert!(split_scenes(&scenes[..1], 0.2, 7).is_err());
        assert!(split_scenes(&scenes, 1.0, 7).is_err());
        assert!(split_scenes(&scenes, 0.0, 7).is_err());
    }

    #[test]
    fn gbdt_bundle_structure_and_determinism() {
        let (cat, scenes) = data(2, 120, 3);
        let (b, diag) = train_bundle(&scenes, &cat, Method::Gbdt, &quick()).unwrap();
        assert_eq!(b.models.len(), 2);
        assert!(b.bank.is_none());
        assert_eq!(diag.trained.len(), 2);
        assert_eq!(b.provenance.config_hash.len(), 64);
        let (b2, _) = train_bundle(&scenes, &cat, Method::Gbdt, &quick()).unwrap();
        assert_eq!(bundle_to_json(&b).unwrap(), bundle_to_json(&b2).unwrap());
    }

    #[test]
    fn setnet_bundle_carries_bank() {
        let (cat, scenes) = data(2, 120, 3);
        let (b, diag) = train_bundle(&scenes, &cat, Method::Setnet, &quick()).unwrap();
        assert!(b.bank.is_some() && diag.bank.is_some());
        assert_eq!(b.models.len(), 2);
        let (b2, _) = train_bundle(&scenes, &cat, Method::Setnet, &quick()).unwrap();
        assert_eq!(bundle_to_json(&b).unwrap(), bundle_to_json(&b2).unwrap());
    }

    #[test]
    fn small_groups_skipped_and_empty_errors() {
        let (cat, scenes) = data(2, 120, 3);
        let cfg = TrainConfig { min_candidates: 100_000, ..quick() };
        assert!(matches!(train_bundle(&scenes, &cat, Method::Gbdt, &cfg), Err(Error::Data(_))));
    }

    #[test]
    fn single_variant_and_uncovered_groups() {
        let mut groups = generate_catalog(2, (2, 2), 0.3, 5).unwrap().groups().to_vec();
        groups.push(crate::synth::variant_ladder("S", 40.0, 60.0, 1, 0.3));
        let cat = Catalog::new(groups).unwrap();
        let scenes = generate_dataset(&cat, &SceneConfig::default(), &NoiseConfig::default(), 150, 5).unwrap();
        let (mut b, diag) = train_bundle(&scenes, &cat, Method::Gbdt, &quick()).unwrap();
        assert_eq!(diag.single_variant, vec![GroupId::from("S")]);
        let g0 = cat.groups()[0].group_id.clone();
        b.models.remove(&g0);
        let scene = scenes.iter().find(|s| s.groups().contains(&GroupId::from("S")) && s.groups().contains(&g0)).unwrap();
        for (p, bx) in infer_scene(&b, scene).unwrap().iter().zip(&scene.boxes) {
            if bx.group_id.as_str() == "S" {
                assert_eq!(p.source, PredictionSource::SingleVariant);
                assert_eq!(p.probs, vec![1.0]);
                assert_eq!(p.predicted_class.as_ref(), bx.class_id.as_ref());
            } else if bx.group_id == g0 {
                assert_eq!(p.source, PredictionSource::NoModel);
                assert!(p.predicted_class.is_none() && p.probs.is_empty());
            }
        }
    }

    #[test]
    fn evaluate_counts() {
        let (cat, scenes) = data(3, 200, 9);
        let (tr, te) = split_scenes(&scenes, 0.25, 1).unwrap();
        let (b, _) = train_bundle(&tr, &cat, Method::Gbdt, &quick()).unwrap();
        let r = evaluate(&b, &te).unwrap();
        for g in &r.groups {
            let truth = te.iter().flat_map(|s| &s.boxes).filter(|b| b.group_id == g.group_id).count();
            assert_eq!(g.n_test, truth);
            for (ci, row) in g.confusion.iter().enumerate() {
                let n_class = te
                    .iter()
                    .flat_map(|s| &s.boxes)
                    .filter(|b| b.group_id == g.group_id && b.class_id.as_ref() == Some(&g.class_order[ci]))
                    .count();
                assert_eq!(row.iter().sum::<usize>(), n_class);
            }
            let trace: usize = (0..g.confusion.len()).map(|i| g.confusion[i][i]).sum();
            assert_eq!(g.accuracy, trace as f64 / g.n_test as f64);
        }
        assert!(evaluate(&b, &[]).is_err());
    }

    #[test]
    fn bundle_json_errors() {
        let (cat, scenes) = data(2, 80, 3);
        let (b, _) = train_bundle(&scenes, &cat, Method::Gbdt, &quick()).unwrap();
        let text = bundle_to_json(&b).unwrap();
        assert_eq!(bundle_from_json(&text).unwrap(), b);
        assert!(matches!(bundle_from_json(&text[..text.len() / 2]), Err(Error::Json(_))));
        let bumped = text.replacen("\"version\":1", "\"version\":2", 1);
        assert!(matches!(bundle_from_json(&bumped), Err(Error::Version { expected: 1, found: 2 })));
    }
}
