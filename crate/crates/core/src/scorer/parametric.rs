use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_store::{LogitMap, ScoreMap};

/// Anomaly scores computed from a segmentation model's logits alone.
///
/// Every kind is oriented so that higher means more anomalous.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParametricKind {
    /// `1 - max softmax probability`
    Msp,
    /// Shannon entropy of the softmax, natural log.
    Entropy,
    /// Negated maximum logit.
    MaxLogit,
    /// Negated log-sum-exp of the logits (the free energy).
    #[default]
    #[serde(rename = "lse")]
    LogSumExp,
}

impl ParametricKind {
    pub const ALL: [ParametricKind; 4] = [
        ParametricKind::Msp,
        ParametricKind::Entropy,
        ParametricKind::MaxLogit,
        ParametricKind::LogSumExp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParametricKind::Msp => "msp",
            ParametricKind::Entropy => "entropy",
            ParametricKind::MaxLogit => "maxlogit",
            ParametricKind::LogSumExp => "lse",
        }
    }

    /// Score of a single logit vector, evaluated in 64-bit arithmetic.
    pub fn score(self, logits: &[f32]) -> f64 {
        let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
        if self == ParametricKind::MaxLogit {
            return -max;
        }
        // exp(z - max); the first maximal entry contributes exactly 1
        let top = logits.iter().position(|&z| z as f64 == max).unwrap_or(0);
        let mut rest = 0.0f64;
        let mut weighted = 0.0f64;
        for (c, &z) in logits.iter().enumerate() {
            if c == top {
                continue;
            }
            let shifted = z as f64 - max;
            let e = shifted.exp();
            rest += e;
            weighted += e * shifted;
        }
        let total = 1.0 + rest;
        match self {
            ParametricKind::Msp => rest / total,
            // H = ln S - sum_c p_c (z_c - max)
            ParametricKind::Entropy => (rest.ln_1p() - weighted / total).max(0.0),
            ParametricKind::LogSumExp => -(max + rest.ln_1p()),
            ParametricKind::MaxLogit => unreachable!(),
        }
    }
}

impl fmt::Display for ParametricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for ParametricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "msp" => Ok(ParametricKind::Msp),
            "entropy" | "h" => Ok(ParametricKind::Entropy),
            "maxlogit" | "ml" => Ok(ParametricKind::MaxLogit),
            "lse" | "logsumexp" | "energy" => Ok(ParametricKind::LogSumExp),
            other => Err(Error::Config(format!("unknown parametric score {other:?}"))),
        }
    }
}

/// Per-pixel parametric score at logit resolution.
pub fn parametric_score(logits: &LogitMap, kind: ParametricKind) -> Result<ScoreMap> {
    if logits.num_classes() < 2 {
        return Err(Error::Validation(
            "parametric scores need at least 2 classes".into(),
        ));
    }
    let data: Vec<f32> = logits
        .as_slice()
        .chunks_exact(logits.num_classes())
        .map(|z| kind.score(z) as f32)
        .collect();
    ScoreMap::new(logits.height(), logits.width(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(z: &[f32], kind: ParametricKind) -> f64 {
        kind.score(z)
    }

    #[test]
    fn uniform_two_class_msp() {
        assert_eq!(single(&[0.0, 0.0], ParametricKind::Msp), 0.5);
    }

    #[test]
    fn uniform_entropy_is_ln_k() {
        let h = single(&[0.0; 4], ParametricKind::Entropy);
        assert!((h - 4f64.ln()).abs() < 1e-12, "{h}");
        assert!((h - 1.3863).abs() < 1e-4);
    }

    #[test]
    fn lse_of_zeros() {
        let v = single(&[0.0, 0.0], ParametricKind::LogSumExp);
        assert!((v + 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn max_logit_is_negated() {
        assert_eq!(single(&[1.0, -3.0, 2.5], ParametricKind::MaxLogit), -2.5);
    }

    #[test]
    fn dominant_logit_lowers_every_score() {
        for kind in ParametricKind::ALL {
            let strong = single(&[10.0, 0.0], kind);
            let weak = single(&[1.0, 0.0], kind);
            assert!(strong < weak, "{kind}: {strong} vs {weak}");
        }
    }

    #[test]
    fn huge_logits_stay_finite() {
        let z = [1e4f32, -1e4, 9_999.0, 3.0];
        for kind in ParametricKind::ALL {
            assert!(single(&z, kind).is_finite(), "{kind}");
        }
    }

    #[test]
    fn map_shape_follows_logits() {
        let logits = LogitMap::new(2, 3, 2, vec![0.0; 12]).unwrap();
        let s = parametric_score(&logits, ParametricKind::Msp).unwrap();
        assert_eq!((s.height(), s.width()), (2, 3));
        assert!(s.as_slice().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn names_parse() {
        for kind in ParametricKind::ALL {
            assert_eq!(kind.name().parse::<ParametricKind>().unwrap(), kind);
        }
        assert_eq!(
            serde_json::to_string(&ParametricKind::LogSumExp).unwrap(),
            "\"lse\""
        );
    }
}
