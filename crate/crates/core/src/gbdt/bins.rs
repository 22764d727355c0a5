use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::catalog::{aspect_ratio, extract_candidate_features, CandidateFeatures, Catalog, GroupId, Scene};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    AspectRatio,
    AreaRatio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub other_group: GroupId,
    pub quantity: Quantity,
    /// `B + 1` strictly ascending edges.
    pub bin_edges: Vec<f64>,
}

impl Block {
    pub fn n_bins(&self) -> usize {
        self.bin_edges.len() - 1
    }

    /// Bin of `x`, with values outside the edge range clamped to the end bins.
    pub fn bin_of(&self, x: f64) -> usize {
        let b = self.n_bins();
        let above = self.bin_edges.partition_point(|&e| e <= x);
        above.saturating_sub(1).min(b - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedFeatureSpec {
    pub target_group: GroupId,
    /// Groups that co-occur often enough with the target group, catalog order.
    pub included_groups: Vec<GroupId>,
    /// Two blocks per included group: aspect ratios, then area ratios.
    pub blocks: Vec<Block>,
}

impl BinnedFeatureSpec {
    /// Own aspect ratio plus one slot per bin of every block.
    pub fn encoded_len(&self) -> usize {
        1 + self.blocks.iter().map(Block::n_bins).sum::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        for b in &self.blocks {
            if b.bin_edges.len() < 3 || b.bin_edges.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::Data(format!(
                    "block ({}, {:?}) needs at least 2 bins with strictly ascending edges",
                    b.other_group, b.quantity
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinOptions {
    pub n_bins: usize,
    pub cooccur_min_frac: f64,
    /// Lower and upper percentile (0-100) spanned by the edges.
    pub range_percentiles: (f64, f64),
}

impl Default for BinOptions {
    fn default() -> Self {
        Self { n_bins: 10, cooccur_min_frac: 0.05, range_percentiles: (1.0, 99.0) }
    }
}

/// Linear-interpolation percentile of sorted data, `p` in [0, 100].
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = (p / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// `n_bins` equal-width bins over `[lo, hi]`. A collapsed range is widened
/// symmetrically so that the edges stay strictly ascending.
pub fn equal_width_edges(lo: f64, hi: f64, n_bins: usize) -> Vec<f64> {
    let (lo, hi) = if hi - lo > 1e-12 * lo.abs().max(hi.abs()).max(1e-300) {
        (lo, hi)
    } else {
        let half = (0.05 * lo.abs()).max(1e-9);
        (lo - half, hi + half)
    };
    let mut edges: Vec<f64> = (0..=n_bins).map(|i| lo + (hi - lo) * i as f64 / n_bins as f64).collect();
    edges[n_bins] = hi;
    edges
}

pub fn fit_bins(
    train_scenes: &[Scene],
    catalog: &Catalog,
    target_group: &GroupId,
    opts: &BinOptions,
) -> Result<BinnedFeatureSpec> {
    catalog.require_group(target_group)?;
    if opts.n_bins < 2 {
        return Err(Error::Config(format!("n_bins must be >= 2, got {}", opts.n_bins)));
    }
    let (p_lo, p_hi) = opts.range_percentiles;
    if !(0.0..=100.0).contains(&p_lo) || !(0.0..=100.0).contains(&p_hi) || p_lo >= p_hi {
        return Err(Error::Config(format!("invalid range_percentiles ({p_lo}, {p_hi})")));
    }

    let mut scenes_with_target = 0usize;
    let mut cooccur: BTreeMap<GroupId, usize> = BTreeMap::new();
    let mut pooled: BTreeMap<(GroupId, Quantity), Vec<f64>> = BTreeMap::new();

    for scene in train_scenes {
        let mut seen_here: BTreeSet<GroupId> = BTreeSet::new();
        let mut has_target = false;
        for (i, b) in scene.boxes.iter().enumerate() {
            if &b.group_id != target_group {
                continue;
            }
            has_target = true;
            let f = extract_candidate_features(scene, i)?;
            for (ctx, other) in f.context.iter().zip(scene.boxes.iter().enumerate().filter(|&(j, _)| j != i)) {
                seen_here.insert(ctx.group_id.clone());
                pooled.entry((ctx.group_id.clone(), Quantity::AspectRatio)).or_default().push(aspect_ratio(other.1)?);
                pooled.entry((ctx.group_id.clone(), Quantity::AreaRatio)).or_default().push(ctx.area_ratio);
            }
        }
        if has_target {
            scenes_with_target += 1;
            for g in seen_here {
                *cooccur.entry(g).or_default() += 1;
            }
        }
    }
    if scenes_with_target == 0 {
        return Err(Error::Data(format!("no training candidates for group `{target_group}`")));
    }

    let included_groups: Vec<GroupId> = catalog
        .group_ids()
        .into_iter()
        .filter(|g| {
            let n = cooccur.get(g).copied().unwrap_or(0);
            n > 0 && n as f64 / scenes_with_target as f64 >= opts.cooccur_min_frac
        })
        .collect();

    let mut blocks = Vec::new();
    for g in &included_groups {
        for q in [Quantity::AspectRatio, Quantity::AreaRatio] {
            let mut v = pooled.remove(&(g.clone(), q)).unwrap_or_default();
            v.sort_by(f64::total_cmp);
            let (lo, hi) = (percentile(&v, p_lo), percentile(&v, p_hi));
            blocks.push(Block { other_group: g.clone(), quantity: q, bin_edges: equal_width_edges(lo, hi, opts.n_bins) });
        }
    }
    let spec = BinnedFeatureSpec { target_group: target_group.clone(), included_groups, blocks };
    spec.validate()?;
    Ok(spec)
}

/// Fixed-length encoding: `[own r]` followed by one normalised histogram per
/// block. `other_boxes_r` holds the aspect ratio and group of each context
/// box, aligned with `features.context`. Groups absent from the scene leave
/// their blocks at zero.
pub fn encode(features: &CandidateFeatures, spec: &BinnedFeatureSpec, other_boxes_r: &[(f64, GroupId)]) -> Vec<f64> {
    let mut out = Vec::with_capacity(spec.encoded_len());
    out.push(features.r);
    for block in &spec.blocks {
        let start = out.len();
        out.resize(start + block.n_bins(), 0.0);
        let values: Vec<f64> = match block.quantity {
            Quantity::AspectRatio => other_boxes_r
                .iter()
                .filter(|(_, g)| g == &block.other_group)
                .map(|&(r, _)| r)
                .collect(),
            Quantity::AreaRatio => features
                .context
                .iter()
                .filter(|c| c.group_id == block.other_group)
                .map(|c| c.area_ratio)
                .collect(),
        };
        let total = values.len().max(1) as f64;
        for v in values {
            out[start + block.bin_of(v)] += 1.0 / total;
        }
    }
    out
}

/// Encodes box `index` of `scene` under `spec`.
pub fn encode_candidate(scene: &Scene, index: usize, spec: &BinnedFeatureSpec) -> Result<Vec<f64>> {
    let f = extract_candidate_features(scene, index)?;
    let others = scene
        .boxes
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != index)
        .map(|(_, b)| Ok((aspect_ratio(b)?, b.group_id.clone())))
        .collect::<Result<Vec<_>>>()?;
    Ok(encode(&f, spec, &others))
}
