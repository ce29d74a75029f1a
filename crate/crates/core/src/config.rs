//! Run configuration: a flat `key = value` file (TOML syntax) whose keys
//! mirror the CLI flags.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the teacher subset is chosen per training triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Sampled from the policy network.
    Reinforced,
    /// Single teacher with the largest max probability.
    ConfTeacher,
    /// Single teacher with the lowest cross-entropy on the target.
    BestTeacher,
    /// Subset (of all seven) with the lowest cross-entropy on the target.
    BestStrategy,
    /// Mean of all three teachers.
    TeacherAvg,
}

/// Distillation objective between combined teacher and student.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KdVariant {
    Ndkd,
    Dkd,
    Vanilla,
    NekdOnly,
    NnkdOnly,
    None,
}

macro_rules! str_enum {
    ($ty:ty { $($name:literal => $v:path),* $(,)? }) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.replace('-', "_").as_str() {
                    $($name => Ok($v),)*
                    other => Err(Error::Config(format!("unknown {} {other:?}", stringify!($ty)))),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let name = match self { $($v => $name,)* };
                f.write_str(name)
            }
        }
    };
}

str_enum!(Strategy {
    "reinforced" => Strategy::Reinforced,
    "conf_teacher" => Strategy::ConfTeacher,
    "best_teacher" => Strategy::BestTeacher,
    "best_strategy" => Strategy::BestStrategy,
    "teacher_avg" => Strategy::TeacherAvg,
});

str_enum!(KdVariant {
    "ndkd" => KdVariant::Ndkd,
    "dkd" => KdVariant::Dkd,
    "vanilla" => KdVariant::Vanilla,
    "nekd_only" => KdVariant::NekdOnly,
    "nnkd_only" => KdVariant::NnkdOnly,
    "none" => KdVariant::None,
});

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Complex embedding dimension.
    pub dim: usize,
    pub learning_rate: f64,
    pub policy_learning_rate: f64,
    pub batch_size: usize,
    /// Student training epochs.
    pub epochs: usize,
    pub teacher_epochs: usize,
    /// Validate every this many epochs to keep the best checkpoint.
    pub eval_every: usize,
    pub seed: u64,
    /// Weight of the distillation term.
    pub gamma: f64,
    /// Distillation temperature.
    pub tau: f64,
    /// Weight of the neighbor (binary) term.
    pub alpha: f64,
    /// Weight of the non-neighbor term.
    pub beta: f64,
    pub policy_hidden: usize,
    pub reward_pos: f64,
    pub reward_neg: f64,
    pub strategy: Strategy,
    pub kd_variant: KdVariant,
    /// Multiply distillation losses by `tau^2`.
    pub temperature_sq_scale: bool,
    /// Standardize each teacher's score vector before it enters the policy.
    pub standardize_state: bool,
    /// L2 penalty on embeddings.
    pub l2: f64,
    /// Precompute frozen teacher scores for every training query. Memory is
    /// `3 * queries * entities` scalars, so this is off by default.
    pub cache_teacher_logits: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 256,
            learning_rate: 1e-3,
            policy_learning_rate: 1e-3,
            batch_size: 512,
            epochs: 100,
            teacher_epochs: 100,
            eval_every: 5,
            seed: 0,
            gamma: 2.0,
            tau: 4.0,
            alpha: 1.0,
            beta: 1.0,
            policy_hidden: 1024,
            reward_pos: 1.0,
            reward_neg: -10.0,
            strategy: Strategy::Reinforced,
            kd_variant: KdVariant::Ndkd,
            temperature_sq_scale: false,
            standardize_state: true,
            l2: 0.0,
            cache_teacher_logits: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.tau.is_nan() || self.tau <= 0.0 {
            return bad(format!("tau must be > 0, got {}", self.tau));
        }
        for (name, v) in [
            ("gamma", self.gamma),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("l2", self.l2),
        ] {
            if !v.is_finite() || v < 0.0 {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if self.dim == 0 || self.batch_size == 0 || self.policy_hidden == 0 || self.eval_every == 0 {
            return bad("dim, batch_size, policy_hidden and eval_every must be positive".into());
        }
        if [self.learning_rate, self.policy_learning_rate]
            .iter()
            .any(|lr| lr.is_nan() || *lr <= 0.0)
        {
            return bad("learning rates must be > 0".into());
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
