//! Parametric scores, normalization and fusion with kNN scores, and
//! resampling to image resolution.

mod normalize;
mod parametric;
mod render;
mod resample;

pub use normalize::{
    combine_scores, fit_normalization, ExtremaAccumulator, NormalizationStats, StatsFile,
};
pub use parametric::{parametric_score, ParametricKind};
pub use render::render_scoremap_png;
pub use resample::upsample_bilinear;
