//! Multimodal knowledge-graph reasoning by distilling modality-split ComplEx
//! teachers into a unimodal student.
//!
//! Teachers (structural, visual, textual) are pre-trained independently. For
//! every training triple a policy network picks a non-empty subset of
//! teachers, their mean scores become soft labels, and the student learns
//! from hard labels plus a neighbor-decoupled distillation loss. The policy is
//! trained by REINFORCE against the student's own cross-entropy.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the working precision used by the pipeline.

pub mod backbone;
pub mod checkpoint;
pub mod config;
pub mod distill;
pub mod error;
pub mod eval;
pub mod features;
pub mod kg;
pub mod manifest;
pub mod optim;
pub mod pipeline;
pub mod reinforce;
pub mod scalar;
pub mod student;
pub mod synth;
pub mod teachers;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use backbone::{ComplexEmbeddingTable, KgeModel, Projection};
pub use config::{KdVariant, Strategy, TrainConfig};
pub use error::{Error, Result};
pub use eval::Metrics;
pub use features::FeatureMatrix;
pub use kg::{Dataset, Triple};
pub use reinforce::{Action, PolicyNet};
pub use scalar::Scalar;
pub use teachers::TeacherEnsemble;

/// Working precision of the training pipeline.
pub type Real = f64;

pub type Table = ComplexEmbeddingTable<Real>;
pub type Table32 = ComplexEmbeddingTable<f32>;
pub type Model = KgeModel<Real>;
pub type Model32 = KgeModel<f32>;
pub type Policy = PolicyNet<Real>;
pub type Policy32 = PolicyNet<f32>;
pub type Ensemble = TeacherEnsemble<Real>;
pub type Ensemble32 = TeacherEnsemble<f32>;

pub const NUM_MODALITIES: usize = 3;

/// Teacher modality. The declaration order is the state-concatenation order
/// and defines the bits of an [`Action`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Structural,
    Visual,
    Textual,
}

impl Modality {
    pub const ALL: [Modality; NUM_MODALITIES] = [Modality::Structural, Modality::Visual, Modality::Textual];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn letter(self) -> &'static str {
        match self {
            Modality::Structural => "S",
            Modality::Visual => "V",
            Modality::Textual => "D",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Structural => "structural",
            Modality::Visual => "visual",
            Modality::Textual => "textual",
        })
    }
}
