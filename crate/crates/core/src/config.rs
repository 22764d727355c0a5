//! Run configuration shared by every CLI command.
//!
//! One JSON file holds everything; `seed` is the only required key.
//!
//! ```json
//! {
//!   "seed": 1,
//!   "test_frac": 0.2,
//!   "paths": { "catalog": "data/catalog.json", "scenes": "data/scenes.jsonl",
//!              "models": "models", "reports": "reports" },
//!   "synth": { "n_groups": 6, "variants_per_group": [2, 3], "size_gap": 0.3, "n_scenes": 500,
//!              "scene": { "groups_per_scene": [4, 6], "boxes_per_group": [2, 6] },
//!              "noise": { "sigma": 0.0, "outlier_prob": 0.0 } },
//!   "train": { "min_candidates": 20, "gbdt": { "n_rounds": 200 }, "setnet": { "hidden": 32 } }
//! }
//! ```
//!
//! `synth.scene.rng_seed` and the nested `seed` fields under `train` are
//! ignored; all seeds derive from the top-level `seed`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{Method, TrainConfig};
use crate::synth::{derive_seed, NoiseConfig, SceneConfig, RNG_ALGORITHM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub catalog: PathBuf,
    pub scenes: PathBuf,
    /// Directory for model bundles.
    pub models: PathBuf,
    /// Directory for evaluation reports, comparisons and predictions.
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            catalog: "data/catalog.json".into(),
            scenes: "data/scenes.jsonl".into(),
            models: "models".into(),
            reports: "reports".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_groups: usize,
    pub variants_per_group: (usize, usize),
    pub size_gap: f64,
    pub n_scenes: usize,
    pub scene: SceneConfig,
    pub noise: NoiseConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_groups: 6,
            variants_per_group: (2, 3),
            size_gap: 0.3,
            n_scenes: 500,
            scene: SceneConfig::default(),
            noise: NoiseConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_rng")]
    pub rng: String,
    #[serde(default = "default_test_frac")]
    pub test_frac: f64,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub synth: SynthConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

fn default_rng() -> String {
    RNG_ALGORITHM.to_string()
}

fn default_test_frac() -> f64 {
    0.2
}

impl RunConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: default_rng(),
            test_frac: default_test_frac(),
            paths: Paths::default(),
            synth: SynthConfig::default(),
            train: TrainConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rng != RNG_ALGORITHM {
            return Err(Error::Config(format!("unsupported rng `{}`, only `{RNG_ALGORITHM}`", self.rng)));
        }
        if !(self.test_frac > 0.0 && self.test_frac < 1.0) {
            return Err(Error::Config(format!("test_frac must be in (0, 1), got {}", self.test_frac)));
        }
        let p = &self.paths;
        if p.catalog == p.scenes {
            return Err(Error::Config("paths.catalog and paths.scenes must differ".into()));
        }
        for out in [&p.models, &p.reports] {
            if out == &p.catalog || out == &p.scenes {
                return Err(Error::Config(format!("output directory {} collides with an input file", out.display())));
            }
        }
        let s = &self.synth;
        if s.n_groups < 1 || s.n_scenes < 1 {
            return Err(Error::Config("synth.n_groups and synth.n_scenes must be >= 1".into()));
        }
        s.scene.validate()?;
        s.noise.validate()?;
        self.train.validate()
    }

    pub fn catalog_seed(&self) -> u64 {
        derive_seed(self.seed, 0)
    }

    pub fn dataset_seed(&self) -> u64 {
        derive_seed(self.seed, 1)
    }

    pub fn split_seed(&self) -> u64 {
        derive_seed(self.seed, 2)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.train.clone() }
    }

    pub fn bundle_path(&self, method: Method) -> PathBuf {
        self.paths.models.join(format!("bundle-{method}.json"))
    }
}
