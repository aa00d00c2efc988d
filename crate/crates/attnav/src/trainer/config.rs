//! Training configuration: defaults, file loading, ablation matrix.
//!
//! Config files are TOML with one section per concern (`[model]`,
//! `[train]`, `[adaptation]`, `[fusion]`); every field is optional and
//! falls back to the default, so an empty file is the default config. The
//! resolved config serializes canonically, and the FNV-1a hash of that
//! canonical form is stamped into checkpoints so a checkpoint can be
//! matched to the config that produced it.

use serde::{Deserialize, Serialize};

use crate::attention::{AttentionDims, FusionConfig};
use crate::observe::{D_G, D_V, N_V};
use crate::policy::ModelDims;
use crate::rollout::RolloutConfig;

use super::{Result, TrainError};

pub const CONFIG_FORMAT_VERSION: u32 = 1;

/// Everything a training run needs besides the corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub dims: ModelDims,
    /// Parallel episodes per update.
    pub workers: usize,
    /// Per-episode action cap during training.
    pub max_steps: usize,
    /// Total training episodes across all workers.
    pub total_episodes: u64,
    pub gamma: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    /// Adaptive-moment step size for the outer updates.
    pub learning_rate: f64,
    pub seed: u64,
    /// Updates between validation passes (0 disables mid-run validation).
    pub eval_cadence_updates: u64,
    /// Greedy episodes per validation pass.
    pub eval_episodes: usize,
    /// Stop once a validation pass reaches this success rate.
    pub stop_at_val_success: Option<f64>,
    /// Apply the in-episode inner step.
    pub use_adaptation: bool,
    /// Prefix length triggering the inner step.
    pub k_hat: usize,
    /// Plain-gradient step size of the inner step.
    pub inner_lr: f64,
    /// Entropy coefficient inside the interaction loss.
    pub entropy_coef_int: f64,
    pub use_p_g: bool,
    pub use_p_a: bool,
    pub use_p_m: bool,
    pub fixed_beta_one: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dims: ModelDims::default(),
            workers: 12,
            max_steps: 30,
            total_episodes: 50_000,
            gamma: 0.99,
            value_coef: 0.5,
            entropy_coef: 0.01,
            learning_rate: 1e-4,
            seed: 0,
            eval_cadence_updates: 200,
            eval_episodes: 100,
            stop_at_val_success: None,
            use_adaptation: false,
            k_hat: 6,
            inner_lr: 1e-2,
            entropy_coef_int: 0.01,
            use_p_g: true,
            use_p_a: true,
            use_p_m: true,
            fixed_beta_one: false,
        }
    }
}

impl TrainConfig {
    /// Small-model preset sized for the twelve-scene smoke corpus: enough
    /// capacity to solve it, small enough to train in minutes.
    pub fn smoke(seed: u64) -> Self {
        Self {
            dims: ModelDims {
                attn: AttentionDims {
                    d_m: 64,
                    d: 32,
                    ..AttentionDims::default()
                },
                d_p: 8,
                d_in: 64,
            },
            workers: 6,
            learning_rate: 5e-4,
            eval_cadence_updates: 150,
            eval_episodes: 100,
            stop_at_val_success: Some(0.85),
            seed,
            ..Self::default()
        }
    }

    pub fn fusion(&self) -> FusionConfig {
        FusionConfig {
            use_target: self.use_p_g,
            use_action: self.use_p_a,
            use_memory: self.use_p_m,
            fixed_beta_one: self.fixed_beta_one,
        }
    }

    /// The episode-driver slice of this config, with training's step cap.
    pub fn rollout(&self) -> RolloutConfig {
        RolloutConfig {
            fusion: self.fusion(),
            use_adaptation: self.use_adaptation,
            k_hat: self.k_hat,
            inner_lr: self.inner_lr,
            entropy_coef_int: self.entropy_coef_int,
            max_steps: self.max_steps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(TrainError::Config("workers must be ≥ 1".into()));
        }
        if self.total_episodes == 0 {
            return Err(TrainError::Config("total_episodes must be ≥ 1".into()));
        }
        if self.max_steps == 0 {
            return Err(TrainError::Config("max_steps must be ≥ 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(TrainError::Config("gamma must lie in (0, 1]".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(TrainError::Config("learning_rate must be positive".into()));
        }
        if self.k_hat == 0 {
            return Err(TrainError::Config("k_hat must be ≥ 1".into()));
        }
        self.fusion()
            .validate()
            .map_err(|_| TrainError::Config("at least one attention unit must be enabled".into()))?;
        Ok(())
    }

    /// Parses a TOML config document; missing fields take defaults,
    /// unknown fields are rejected.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let doc: ConfigDoc =
            toml::from_str(text).map_err(|e| TrainError::Config(e.to_string()))?;
        if doc.format_version != CONFIG_FORMAT_VERSION {
            return Err(TrainError::Config(format!(
                "unsupported config format_version {} (expected {CONFIG_FORMAT_VERSION})",
                doc.format_version
            )));
        }
        let cfg = doc.into_config();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Canonical serialized form (every field explicit).
    pub fn to_toml_string(&self) -> String {
        toml::to_string(&ConfigDoc::from_config(self)).expect("config serializes")
    }

    /// FNV-1a hash of the canonical serialized form.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &b in self.to_toml_string().as_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
}

/// The five benchmark configurations: full, each attention unit removed in
/// turn, and the β-frozen variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    Full,
    NoPg,
    NoPa,
    NoPm,
    BetaOne,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [
        Ablation::Full,
        Ablation::NoPg,
        Ablation::NoPa,
        Ablation::NoPm,
        Ablation::BetaOne,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoPg => "no-pg",
            Ablation::NoPa => "no-pa",
            Ablation::NoPm => "no-pm",
            Ablation::BetaOne => "beta1",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == name)
            .ok_or_else(|| {
                TrainError::Config(format!(
                    "unknown ablation {name:?} (expected full | no-pg | no-pa | no-pm | beta1)"
                ))
            })
    }

    /// Applies this configuration's flags on top of `base`.
    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        cfg.use_p_g = true;
        cfg.use_p_a = true;
        cfg.use_p_m = true;
        cfg.fixed_beta_one = false;
        match self {
            Ablation::Full => {}
            Ablation::NoPg => cfg.use_p_g = false,
            Ablation::NoPa => cfg.use_p_a = false,
            Ablation::NoPm => cfg.use_p_m = false,
            Ablation::BetaOne => cfg.fixed_beta_one = true,
        }
        cfg
    }
}

/// All five benchmark configs derived from one base.
pub fn ablation_matrix(base: &TrainConfig) -> Vec<(Ablation, TrainConfig)> {
    Ablation::ALL
        .into_iter()
        .map(|a| (a, a.apply(base)))
        .collect()
}

// ── TOML document ────────────────────────────────────────────────────────

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDoc {
    #[serde(default = "default_format_version")]
    format_version: u32,
    #[serde(default)]
    model: ModelSection,
    #[serde(default)]
    train: TrainSection,
    #[serde(default)]
    adaptation: AdaptationSection,
    #[serde(default)]
    fusion: FusionSection,
}

fn default_format_version() -> u32 {
    CONFIG_FORMAT_VERSION
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ModelSection {
    d: usize,
    d_m: usize,
    d_p: usize,
    d_in: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let dims = ModelDims::default();
        Self {
            d: dims.attn.d,
            d_m: dims.attn.d_m,
            d_p: dims.d_p,
            d_in: dims.d_in,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TrainSection {
    workers: usize,
    max_steps: usize,
    total_episodes: u64,
    gamma: f64,
    value_coef: f64,
    entropy_coef: f64,
    learning_rate: f64,
    seed: u64,
    eval_cadence_updates: u64,
    eval_episodes: usize,
    stop_at_val_success: Option<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            workers: d.workers,
            max_steps: d.max_steps,
            total_episodes: d.total_episodes,
            gamma: d.gamma,
            value_coef: d.value_coef,
            entropy_coef: d.entropy_coef,
            learning_rate: d.learning_rate,
            seed: d.seed,
            eval_cadence_updates: d.eval_cadence_updates,
            eval_episodes: d.eval_episodes,
            stop_at_val_success: d.stop_at_val_success,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct AdaptationSection {
    enabled: bool,
    k_hat: usize,
    inner_lr: f64,
    entropy_coef_int: f64,
}

impl Default for AdaptationSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            enabled: d.use_adaptation,
            k_hat: d.k_hat,
            inner_lr: d.inner_lr,
            entropy_coef_int: d.entropy_coef_int,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct FusionSection {
    use_p_g: bool,
    use_p_a: bool,
    use_p_m: bool,
    fixed_beta_one: bool,
}

impl Default for FusionSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            use_p_g: d.use_p_g,
            use_p_a: d.use_p_a,
            use_p_m: d.use_p_m,
            fixed_beta_one: d.fixed_beta_one,
        }
    }
}

impl ConfigDoc {
    fn into_config(self) -> TrainConfig {
        TrainConfig {
            dims: ModelDims {
                attn: AttentionDims {
                    n_v: N_V,
                    d_v: D_V,
                    d_g: D_G,
                    d_a: 6,
                    d_m: self.model.d_m,
                    d: self.model.d,
                },
                d_p: self.model.d_p,
                d_in: self.model.d_in,
            },
            workers: self.train.workers,
            max_steps: self.train.max_steps,
            total_episodes: self.train.total_episodes,
            gamma: self.train.gamma,
            value_coef: self.train.value_coef,
            entropy_coef: self.train.entropy_coef,
            learning_rate: self.train.learning_rate,
            seed: self.train.seed,
            eval_cadence_updates: self.train.eval_cadence_updates,
            eval_episodes: self.train.eval_episodes,
            stop_at_val_success: self.train.stop_at_val_success,
            use_adaptation: self.adaptation.enabled,
            k_hat: self.adaptation.k_hat,
            inner_lr: self.adaptation.inner_lr,
            entropy_coef_int: self.adaptation.entropy_coef_int,
            use_p_g: self.fusion.use_p_g,
            use_p_a: self.fusion.use_p_a,
            use_p_m: self.fusion.use_p_m,
            fixed_beta_one: self.fusion.fixed_beta_one,
        }
    }

    fn from_config(cfg: &TrainConfig) -> Self {
        Self {
            format_version: CONFIG_FORMAT_VERSION,
            model: ModelSection {
                d: cfg.dims.attn.d,
                d_m: cfg.dims.attn.d_m,
                d_p: cfg.dims.d_p,
                d_in: cfg.dims.d_in,
            },
            train: TrainSection {
                workers: cfg.workers,
                max_steps: cfg.max_steps,
                total_episodes: cfg.total_episodes,
                gamma: cfg.gamma,
                value_coef: cfg.value_coef,
                entropy_coef: cfg.entropy_coef,
                learning_rate: cfg.learning_rate,
                seed: cfg.seed,
                eval_cadence_updates: cfg.eval_cadence_updates,
                eval_episodes: cfg.eval_episodes,
                stop_at_val_success: cfg.stop_at_val_success,
            },
            adaptation: AdaptationSection {
                enabled: cfg.use_adaptation,
                k_hat: cfg.k_hat,
                inner_lr: cfg.inner_lr,
                entropy_coef_int: cfg.entropy_coef_int,
            },
            fusion: FusionSection {
                use_p_g: cfg.use_p_g,
                use_p_a: cfg.use_p_a,
                use_p_m: cfg.use_p_m,
                fixed_beta_one: cfg.fixed_beta_one,
            },
        }
    }
}
