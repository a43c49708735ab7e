//! Model hyperparameters and the three model families.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Model family:
/// - `Full`: learned per-target projection matrices, shared embeddings.
/// - `NoProjection`: projections frozen to identity, shared embeddings.
/// - `PerTarget`: one independent parameter store per target (projections
///   frozen to identity), each trained only on its own instances.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Full,
    NoProjection,
    PerTarget,
}

impl Variant {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "no-projection" => Ok(Variant::NoProjection),
            "per-target" => Ok(Variant::PerTarget),
            other => Err(Error::usage(format!(
                "unknown variant {other:?} (expected full, no-projection, or per-target)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoProjection => "no-projection",
            Variant::PerTarget => "per-target",
        }
    }

    /// Whether projection matrices are identity-frozen in this family.
    pub fn projections_frozen(self) -> bool {
        !matches!(self, Variant::Full)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Embedding dimensionality.
    pub d: usize,
    /// Memory layers in the target-detection module.
    pub k_td: usize,
    /// Memory layers in the polarity-classification module.
    pub k_pc: usize,
    /// Prior-attention mixing weight, 0 <= lambda < 1.
    pub lambda: f64,
    /// Moving-average window for prior attention (odd, >= 1).
    pub window: usize,
    /// Memory capacity: fixed context length after padding/truncation.
    pub capacity: usize,
    pub variant: Variant,
    /// Vocabulary size including reserved symbols.
    pub n_voc: usize,
    /// Number of targets this store serves (1 for per-target stores).
    pub n_target: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::usage("embedding dimension d must be > 0"));
        }
        if self.k_td == 0 || self.k_pc == 0 {
            return Err(Error::usage("layer counts must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.lambda) {
            return Err(Error::usage(format!(
                "lambda must satisfy 0 <= lambda < 1, got {}",
                self.lambda
            )));
        }
        if self.window == 0 || self.window % 2 == 0 {
            return Err(Error::usage(format!(
                "window must be odd and >= 1, got {}",
                self.window
            )));
        }
        if self.capacity == 0 {
            return Err(Error::usage("capacity must be > 0"));
        }
        if self.n_voc < 2 {
            return Err(Error::usage("vocabulary must include the reserved symbols"));
        }
        if self.n_target == 0 {
            return Err(Error::usage("need at least one target"));
        }
        Ok(())
    }
}
