use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_gmm_em, log_sum_exp, EmOptions, FitDiagnostics, Gmm2D, Vec2, WEIGHT_SUM_TOL};
use crate::catalog::{extract_candidate_features, Catalog, ClassId, GroupId, Scene, KEY_SEPARATOR};
use crate::error::{Error, Result};
use crate::synth::derive_seed;

/// Below this likelihood every class is considered unexplained.
const UNDERFLOW_LN: f64 = -690.775_527_898_213_7; // ln(1e-300)

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BankKey {
    pub group: GroupId,
    pub class: ClassId,
    pub other: GroupId,
}

impl BankKey {
    pub fn new(group: impl Into<GroupId>, class: impl Into<ClassId>, other: impl Into<GroupId>) -> Self {
        Self { group: group.into(), class: class.into(), other: other.into() }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let mut it = s.split(KEY_SEPARATOR);
        match (it.next(), it.next(), it.next(), it.next()) {
            (Some(g), Some(c), Some(o), None) => Ok(Self::new(g, c, o)),
            _ => Err(Error::Data(format!("malformed bank key `{s}`"))),
        }
    }
}

impl fmt::Display for BankKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{KEY_SEPARATOR}{}{KEY_SEPARATOR}{}", self.group, self.class, self.other)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BankOptions {
    pub min_points: usize,
    /// Likelihood used for classes without a fitted mixture.
    pub missing_floor: f64,
    pub em: EmOptions,
}

impl Default for BankOptions {
    fn default() -> Self {
        Self { min_points: 10, missing_floor: 1e-12, em: EmOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BankRepr", into = "BankRepr")]
pub struct GmmFeatureBank {
    classes: BTreeMap<GroupId, Vec<ClassId>>,
    priors: BTreeMap<GroupId, Vec<f64>>,
    entries: BTreeMap<BankKey, Gmm2D>,
    min_points: usize,
    missing_floor: f64,
}

#[derive(Serialize, Deserialize)]
struct BankRepr {
    min_points: usize,
    missing_floor: f64,
    classes: BTreeMap<GroupId, Vec<ClassId>>,
    priors: BTreeMap<GroupId, Vec<f64>>,
    entries: BTreeMap<String, Gmm2D>,
}

impl TryFrom<BankRepr> for GmmFeatureBank {
    type Error = Error;

    fn try_from(r: BankRepr) -> Result<Self> {
        let entries = r
            .entries
            .into_iter()
            .map(|(k, v)| Ok((BankKey::parse(&k)?, v)))
            .collect::<Result<_>>()?;
        GmmFeatureBank::from_parts(r.classes, r.priors, entries, r.min_points, r.missing_floor)
    }
}

impl From<GmmFeatureBank> for BankRepr {
    fn from(b: GmmFeatureBank) -> Self {
        BankRepr {
            min_points: b.min_points,
            missing_floor: b.missing_floor,
            classes: b.classes,
            priors: b.priors,
            entries: b.entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FittedEntry {
    pub key: String,
    pub n_points: usize,
    pub fit: FitDiagnostics,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BankDiagnostics {
    pub fitted: Vec<FittedEntry>,
    /// Keys with fewer than `min_points` pairs, and their counts.
    pub sparse: Vec<(String, usize)>,
    pub warnings: Vec<String>,
}

impl GmmFeatureBank {
    pub fn from_parts(
        classes: BTreeMap<GroupId, Vec<ClassId>>,
        priors: BTreeMap<GroupId, Vec<f64>>,
        entries: BTreeMap<BankKey, Gmm2D>,
        min_points: usize,
        missing_floor: f64,
    ) -> Result<Self> {
        for (g, p) in &priors {
            let cls = classes.get(g).ok_or_else(|| Error::UnknownGroup(g.to_string()))?;
            if p.len() != cls.len() {
                return Err(Error::LengthMismatch { expected: cls.len(), got: p.len() });
            }
            let s: f64 = p.iter().sum();
            if (s - 1.0).abs() > WEIGHT_SUM_TOL || p.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::Data(format!("priors of `{g}` are not a probability vector")));
            }
        }
        if let Some(g) = classes.keys().find(|g| !priors.contains_key(*g)) {
            return Err(Error::Data(format!("missing priors for `{g}`")));
        }
        for k in entries.keys() {
            let known = classes.get(&k.group).is_some_and(|c| c.contains(&k.class));
            if !known || !classes.contains_key(&k.other) {
                return Err(Error::Data(format!("bank entry `{k}` references unknown group or class")));
            }
        }
        if !(missing_floor > 0.0) {
            return Err(Error::Config("missing_floor must be > 0".into()));
        }
        Ok(Self { classes, priors, entries, min_points, missing_floor })
    }

    pub fn entries(&self) -> &BTreeMap<BankKey, Gmm2D> {
        &self.entries
    }

    pub fn entry(&self, g: &GroupId, c: &ClassId, gw: &GroupId) -> Option<&Gmm2D> {
        // BTreeMap lookup needs an owned key.
        self.entries.get(&BankKey { group: g.clone(), class: c.clone(), other: gw.clone() })
    }

    pub fn priors(&self, g: &GroupId) -> Option<&[f64]> {
        self.priors.get(g).map(Vec::as_slice)
    }

    pub fn classes(&self, g: &GroupId) -> Option<&[ClassId]> {
        self.classes.get(g).map(Vec::as_slice)
    }

    pub fn min_points(&self) -> usize {
        self.min_points
    }

    pub fn missing_floor(&self) -> f64 {
        self.missing_floor
    }

    /// Checks the `K <= u(other group)` bound for every entry.
    pub fn check_component_bounds(&self, catalog: &Catalog) -> Result<()> {
        for (k, m) in &self.entries {
            let u = catalog.n_variants(&k.other).ok_or_else(|| Error::UnknownGroup(k.other.to_string()))?;
            if m.k() > u {
                return Err(Error::Data(format!("entry `{k}` has {} components, more than u = {u}", m.k())));
            }
        }
        Ok(())
    }
}

/// Normalises `prior * likelihood` in log space. When every likelihood is
/// below 1e-300 the priors are returned unchanged.
pub fn posteriors_from_log_likelihoods(priors: &[f64], log_liks: &[f64]) -> Vec<f64> {
    if log_liks.iter().all(|&l| !(l >= UNDERFLOW_LN)) {
        return priors.to_vec();
    }
    let joint: Vec<f64> = priors.iter().zip(log_liks).map(|(p, l)| p.ln() + l).collect();
    let z = log_sum_exp(joint.iter().copied());
    joint.iter().map(|j| (j - z).exp()).collect()
}

/// `p(c | x, gw) ∝ prior(c) · gmm_{g,c,gw}(x)` over the classes of `g`.
pub fn class_posteriors(bank: &GmmFeatureBank, g: &GroupId, gw: &GroupId, x: Vec2) -> Result<Vec<f64>> {
    let classes = bank.classes(g).ok_or_else(|| Error::UnknownGroup(g.to_string()))?;
    let priors = bank.priors(g).ok_or_else(|| Error::UnknownGroup(g.to_string()))?;
    if classes.len() == 1 {
        return Ok(vec![1.0]);
    }
    let floor = bank.missing_floor.ln();
    let lls: Vec<f64> = classes
        .iter()
        .map(|c| bank.entry(g, c, gw).map_or(floor, |m| m.ln_pdf(x)))
        .collect();
    Ok(posteriors_from_log_likelihoods(priors, &lls))
}

/// `(r_candidate, area(other)/area(candidate))` pairs keyed by
/// (candidate group, candidate class, other group).
fn collect_pairs(
    scenes: &[Scene],
    catalog: &Catalog,
) -> Result<(BTreeMap<BankKey, Vec<Vec2>>, BTreeMap<GroupId, Vec<usize>>)> {
    let mut pairs: BTreeMap<BankKey, Vec<Vec2>> = BTreeMap::new();
    let mut counts: BTreeMap<GroupId, Vec<usize>> =
        catalog.groups().iter().map(|g| (g.group_id.clone(), vec![0; g.n_variants()])).collect();
    for scene in scenes {
        for (i, b) in scene.boxes.iter().enumerate() {
            let group = catalog.require_group(&b.group_id)?;
            let Some(class) = &b.class_id else { continue };
            let ci = group
                .class_index(class)
                .ok_or_else(|| Error::Data(format!("class `{class}` not in group `{}`", group.group_id)))?;
            counts.get_mut(&group.group_id).expect("catalog group")[ci] += 1;
            let f = extract_candidate_features(scene, i)?;
            for ctx in &f.context {
                catalog.require_group(&ctx.group_id)?;
                pairs
                    .entry(BankKey { group: b.group_id.clone(), class: class.clone(), other: ctx.group_id.clone() })
                    .or_default()
                    .push([f.r, ctx.area_ratio]);
            }
        }
    }
    Ok((pairs, counts))
}

/// Fits one mixture per (group, class, other group) with at least
/// `min_points` training pairs, capped at `u(other group)` components.
/// Priors are Laplace-smoothed class frequencies.
pub fn build_feature_bank(
    train_scenes: &[Scene],
    catalog: &Catalog,
    opts: &BankOptions,
) -> Result<(GmmFeatureBank, BankDiagnostics)> {
    let (pairs, counts) = collect_pairs(train_scenes, catalog)?;
    let mut diag = BankDiagnostics::default();

    let mut to_fit = Vec::new();
    for (key, pts) in pairs {
        if pts.len() >= opts.min_points.max(1) {
            to_fit.push((key, pts));
        } else {
            diag.sparse.push((key.to_string(), pts.len()));
        }
    }

    let fitted: Vec<(BankKey, usize, Gmm2D, FitDiagnostics)> = to_fit
        .into_par_iter()
        .enumerate()
        .map(|(i, (key, pts))| {
            let u = catalog.n_variants(&key.other).expect("validated group");
            let em = EmOptions { seed: derive_seed(opts.em.seed, i as u64), ..opts.em.clone() };
            let (m, d) = fit_gmm_em(&pts, u, &em)?;
            Ok((key, pts.len(), m, d))
        })
        .collect::<Result<_>>()?;

    let mut entries = BTreeMap::new();
    for (key, n, m, d) in fitted {
        diag.fitted.push(FittedEntry { key: key.to_string(), n_points: n, fit: d });
        entries.insert(key, m);
    }

    let mut classes = BTreeMap::new();
    let mut priors = BTreeMap::new();
    for g in catalog.groups() {
        let c = &counts[&g.group_id];
        let total: usize = c.iter().sum();
        if total == 0 {
            diag.warnings.push(format!("group `{}` has no training candidates; priors are uniform", g.group_id));
        }
        for (cls, &n) in g.variants.iter().zip(c) {
            if n == 0 && total > 0 {
                diag.warnings.push(format!("class `{}` absent from training data", cls.class_id));
            }
        }
        let denom = (total + c.len()) as f64;
        priors.insert(g.group_id.clone(), c.iter().map(|&n| (n + 1) as f64 / denom).collect());
        classes.insert(g.group_id.clone(), g.class_ids());
    }

    let bank = GmmFeatureBank::from_parts(classes, priors, entries, opts.min_points, opts.missing_floor)?;
    Ok((bank, diag))
}
