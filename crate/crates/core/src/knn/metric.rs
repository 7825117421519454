use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Distance between feature vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    #[default]
    L2,
    L1,
    /// `1 - cosine_similarity`, in `[0, 2]`. Zero vectors are rejected.
    Cosine,
}

impl DistanceMetric {
    pub const ALL: [DistanceMetric; 3] = [
        DistanceMetric::L2,
        DistanceMetric::L1,
        DistanceMetric::Cosine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DistanceMetric::L2 => "l2",
            DistanceMetric::L1 => "l1",
            DistanceMetric::Cosine => "cosine",
        }
    }

    /// Reference evaluation in 64-bit arithmetic.
    ///
    /// `squared_norms` are `|a|^2` and `|b|^2` (see [`squared_norm`]) and
    /// are only read for [`DistanceMetric::Cosine`].
    pub fn distance(self, a: &[f32], b: &[f32], squared_norms: (f64, f64)) -> f64 {
        match self {
            DistanceMetric::L2 => squared_l2(a, b).sqrt(),
            DistanceMetric::L1 => l1(a, b),
            DistanceMetric::Cosine => {
                let denom = (squared_norms.0 * squared_norms.1).sqrt();
                (1.0 - dot(a, b) / denom).clamp(0.0, 2.0)
            }
        }
    }
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for DistanceMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "l2" | "euclidean" => Ok(DistanceMetric::L2),
            "l1" | "manhattan" => Ok(DistanceMetric::L1),
            "cosine" | "cos" => Ok(DistanceMetric::Cosine),
            other => Err(Error::Config(format!("unknown distance metric {other:?}"))),
        }
    }
}

// Four independent f64 lanes; the lane order is fixed so results do not
// depend on the caller.
macro_rules! lane_sum {
    ($a:expr, $b:expr, |$x:ident, $y:ident| $term:expr) => {{
        let (a, b) = ($a, $b);
        let mut acc = [0.0f64; 4];
        let mut ca = a.chunks_exact(4);
        let mut cb = b.chunks_exact(4);
        for (pa, pb) in (&mut ca).zip(&mut cb) {
            for lane in 0..4 {
                let ($x, $y) = (pa[lane] as f64, pb[lane] as f64);
                acc[lane] += $term;
            }
        }
        for (&xa, &xb) in ca.remainder().iter().zip(cb.remainder()) {
            let ($x, $y) = (xa as f64, xb as f64);
            acc[0] += $term;
        }
        (acc[0] + acc[1]) + (acc[2] + acc[3])
    }};
}

pub fn squared_l2(a: &[f32], b: &[f32]) -> f64 {
    lane_sum!(a, b, |x, y| (x - y) * (x - y))
}

pub fn l1(a: &[f32], b: &[f32]) -> f64 {
    lane_sum!(a, b, |x, y| (x - y).abs())
}

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    lane_sum!(a, b, |x, y| x * y)
}

pub fn squared_norm(a: &[f32]) -> f64 {
    dot(a, a)
}

/// Single-precision L1 with eight lanes, used only for candidate screening.
pub(crate) fn l1_f32(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (pa, pb) in (&mut ca).zip(&mut cb) {
        for lane in 0..8 {
            acc[lane] += (pa[lane] - pb[lane]).abs();
        }
    }
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        acc[0] += (x - y).abs();
    }
    acc.iter().sum()
}
