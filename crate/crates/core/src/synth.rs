//! Seeded synthetic catalogs and shelf scenes.
//!
//! Every scene shares one camera scale (pixels per millimetre) across all
//! of its boxes. Each box dimension gets multiplicative Gaussian noise and,
//! with a small probability, an extra multiplicative outlier factor, which
//! gives per-class measurement distributions that are roughly normal with
//! a heavy tail.
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! 64-bit seeds; per-scene seeds are derived from the dataset seed with
//! SplitMix64, so scenes can be generated independently and in parallel.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, DetectedBox, GroupId, GroupSpec, Scene, VariantSpec};
use crate::error::{Error, Result};

/// Name of the generator algorithm, recorded in configs and reports.
pub const RNG_ALGORITHM: &str = "chacha8";

/// Noise dimension factors below this are clamped so boxes stay positive.
const MIN_DIM_FACTOR: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Relative std-dev of the per-dimension multiplicative noise.
    pub sigma: f64,
    pub outlier_prob: f64,
    pub outlier_scale_range: (f64, f64),
    /// Camera pixels-per-millimetre range.
    pub scale_range: (f64, f64),
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma: 0.0,
            outlier_prob: 0.0,
            outlier_scale_range: (1.5, 3.0),
            scale_range: (0.5, 4.0),
        }
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if lo > 0.0 && lo <= hi && hi.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must satisfy 0 < lo <= hi, got ({lo}, {hi})")))
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if !(0.0..=1.0).contains(&self.outlier_prob) {
            return Err(Error::Config(format!("outlier_prob must lie in [0, 1], got {}", self.outlier_prob)));
        }
        check_range("outlier_scale_range", self.outlier_scale_range)?;
        check_range("scale_range", self.scale_range)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub groups_per_scene: (usize, usize),
    pub boxes_per_group: (usize, usize),
    pub rng_seed: u64,
}

/// Defaults describe a dense shelf: several brands with a few facings each.
/// Sparse scenes leave many candidates ambiguous, because every ladder grows
/// by the same factor and a single ratio only fixes a variant difference.
impl Default for SceneConfig {
    fn default() -> Self {
        Self { groups_per_scene: (4, 6), boxes_per_group: (2, 6), rng_seed: 0 }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("groups_per_scene", self.groups_per_scene), ("boxes_per_group", self.boxes_per_group)] {
            if lo < 1 || lo > hi {
                return Err(Error::Config(format!("{name} must satisfy 1 <= min <= max, got ({lo}, {hi})")));
            }
        }
        Ok(())
    }
}

/// SplitMix64 finalizer, used to derive well-spread child seeds.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index))
}

/// Variants of one group: same aspect ratio, linear size growing by
/// `(1 + size_gap)^i`.
pub fn variant_ladder(group_id: &str, base_w_mm: f64, base_h_mm: f64, k: usize, size_gap: f64) -> GroupSpec {
    let variants = (0..k)
        .map(|i| {
            let f = (1.0 + size_gap).powi(i as i32);
            VariantSpec {
                class_id: format!("{group_id}-v{i}").into(),
                width_mm: base_w_mm * f,
                height_mm: base_h_mm * f,
            }
        })
        .collect();
    GroupSpec { group_id: group_id.into(), variants }
}

pub fn generate_catalog(
    n_groups: usize,
    variants_per_group: (usize, usize),
    size_gap: f64,
    rng_seed: u64,
) -> Result<Catalog> {
    let (vmin, vmax) = variants_per_group;
    if n_groups < 1 {
        return Err(Error::Config("n_groups must be >= 1".into()));
    }
    if vmin < 1 || vmin > vmax {
        return Err(Error::Config(format!("variants_per_group must satisfy 1 <= min <= max, got ({vmin}, {vmax})")));
    }
    if !(size_gap > 0.0 && size_gap.is_finite()) {
        return Err(Error::Config(format!("size_gap must be > 0, got {size_gap}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let groups = (0..n_groups)
        .map(|g| {
            let k = rng.random_range(vmin..=vmax);
            let w = rng.random_range(30.0..100.0);
            let h = w * rng.random_range(0.6..2.5);
            variant_ladder(&format!("G{g:02}"), w, h, k, size_gap)
        })
        .collect();
    Catalog::new(groups)
}

fn noise_factor(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    let eps: f64 = rng.sample(StandardNormal);
    (1.0 + sigma * eps).max(MIN_DIM_FACTOR)
}

/// One fully labelled scene. The scene id is derived from the seed.
pub fn generate_scene(
    catalog: &Catalog,
    scene_cfg: &SceneConfig,
    noise: &NoiseConfig,
    scene_seed: u64,
) -> Result<Scene> {
    scene_cfg.validate()?;
    noise.validate()?;
    let groups = catalog.groups();
    if groups.is_empty() {
        return Err(Error::Config("catalog is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(scene_seed);

    let (gmin, gmax) = scene_cfg.groups_per_scene;
    let n_groups = rng.random_range(gmin..=gmax).min(groups.len());
    let mut picked = sample(&mut rng, groups.len(), n_groups).into_vec();
    picked.sort_unstable();

    let (s_lo, s_hi) = noise.scale_range;
    let scale = if s_lo == s_hi { s_lo } else { rng.random_range(s_lo..s_hi) };

    let mut boxes = Vec::new();
    for gi in picked {
        let group = &groups[gi];
        let count = rng.random_range(scene_cfg.boxes_per_group.0..=scene_cfg.boxes_per_group.1);
        for _ in 0..count {
            let variant = &group.variants[rng.random_range(0..group.variants.len())];
            let mut w = variant.width_mm * scale * noise_factor(&mut rng, noise.sigma);
            let mut h = variant.height_mm * scale * noise_factor(&mut rng, noise.sigma);
            if rng.random_bool(noise.outlier_prob) {
                let (lo, hi) = noise.outlier_scale_range;
                let draw = |rng: &mut ChaCha8Rng| if lo == hi { lo } else { rng.random_range(lo..hi) };
                w *= draw(&mut rng);
                h *= draw(&mut rng);
            }
            boxes.push(DetectedBox {
                box_id: format!("b{}", boxes.len()),
                width_px: w,
                height_px: h,
                group_id: group.group_id.clone(),
                class_id: Some(variant.class_id.clone()),
            });
        }
    }
    Ok(Scene { scene_id: format!("s{scene_seed:016x}"), boxes })
}

/// `n_scenes` scenes with ids `scene-00000`, `scene-00001`, ...
pub fn generate_dataset(
    catalog: &Catalog,
    scene_cfg: &SceneConfig,
    noise: &NoiseConfig,
    n_scenes: usize,
    rng_seed: u64,
) -> Result<Vec<Scene>> {
    if n_scenes < 1 {
        return Err(Error::Config("n_scenes must be >= 1".into()));
    }
    (0..n_scenes)
        .into_par_iter()
        .map(|i| {
            let mut s = generate_scene(catalog, scene_cfg, noise, derive_seed(rng_seed, i as u64))?;
            s.scene_id = format!("scene-{i:05}");
            Ok(s)
        })
        .collect()
}

/// Groups present in a catalog subset, handy for summaries.
pub fn box_counts_by_group(scenes: &[Scene]) -> std::collections::BTreeMap<GroupId, usize> {
    let mut m = std::collections::BTreeMap::new();
    for b in scenes.iter().flat_map(|s| &s.boxes) {
        *m.entry(b.group_id.clone()).or_insert(0) += 1;
    }
    m
}
