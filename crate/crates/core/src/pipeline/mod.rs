//! End-to-end commands built from the scoring modules: reference
//! construction, normalization fitting, dataset scoring, evaluation,
//! ablation sweeps and synthetic data generation.
//!
//! Each command is a composition of public module calls, so its outputs are
//! bit-identical to running the same calls by hand.

mod build;
mod evaluate;
mod fit;
mod score;
mod sweep;
mod synth;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use build::{build_reference, cmd_build_ref, BuildRefOptions};
pub use evaluate::{cmd_eval, evaluate_scores, load_score_dir};
pub use fit::{cmd_fit_norm, fit_stats};
pub use score::{cmd_score, score_samples, ScoreContext, ScoreSummary, ScoredBatch};
pub use sweep::{run_sweep, write_sweep_csv, SweepGrid, SweepRow};
pub use synth::{generate_synthetic, SynthSpec, TEST_DIR, TRAIN_DIR};

use crate::error::{Error, Result};
use crate::knn::KnnConfig;
use crate::sampler::SamplingSpec;
use crate::scorer::ParametricKind;

/// Which score a `score` run writes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Upsampled kNN score, un-normalized.
    #[default]
    Dnp,
    /// Parametric score from the logits alone.
    Parametric,
    /// Normalized kNN plus normalized parametric score.
    Cdnp,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Dnp => "dnp",
            Mode::Parametric => "parametric",
            Mode::Cdnp => "cdnp",
        }
    }

    pub fn needs_reference(self) -> bool {
        self != Mode::Parametric
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dnp" => Ok(Mode::Dnp),
            "parametric" => Ok(Mode::Parametric),
            "cdnp" => Ok(Mode::Cdnp),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

/// Everything a scoring run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub dataset_root: PathBuf,
    /// Reference set prefix (see [`crate::tensor_store::ReferenceSet::paths`]).
    pub reference_path: Option<PathBuf>,
    pub stats_path: Option<PathBuf>,
    pub knn: KnnConfig,
    pub sampling: SamplingSpec,
    pub parametric_kind: ParametricKind,
    pub mode: Mode,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        match self.mode {
            Mode::Dnp if self.reference_path.is_none() => {
                Err(Error::Config("mode dnp needs a reference set".into()))
            }
            Mode::Cdnp if self.reference_path.is_none() || self.stats_path.is_none() => Err(
                Error::Config("mode cdnp needs both a reference set and a stats file".into()),
            ),
            Mode::Parametric if self.reference_path.is_some() || self.stats_path.is_some() => {
                Err(Error::Config(
                    "mode parametric takes neither a reference set nor a stats file".into(),
                ))
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::SamplingMethod;

    fn config(mode: Mode, reference: bool, stats: bool) -> PipelineConfig {
        PipelineConfig {
            dataset_root: "data".into(),
            reference_path: reference.then(|| "refs".into()),
            stats_path: stats.then(|| "stats.json".into()),
            knn: KnnConfig::default(),
            sampling: SamplingSpec::new(SamplingMethod::PcGcs, 100_000, 0),
            parametric_kind: ParametricKind::default(),
            mode,
        }
    }

    #[test]
    fn mode_requirements() {
        assert!(config(Mode::Cdnp, true, true).validate().is_ok());
        assert!(config(Mode::Cdnp, true, false).validate().is_err());
        assert!(config(Mode::Cdnp, false, true).validate().is_err());
        assert!(config(Mode::Parametric, false, false).validate().is_ok());
        assert!(config(Mode::Parametric, true, false).validate().is_err());
        assert!(config(Mode::Dnp, true, false).validate().is_ok());
        assert!(config(Mode::Dnp, false, false).validate().is_err());
    }

    #[test]
    fn mode_names_round_trip() {
        for mode in [Mode::Dnp, Mode::Parametric, Mode::Cdnp] {
            assert_eq!(mode.name().parse::<Mode>().unwrap(), mode);
        }
    }
}
