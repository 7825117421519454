//! Dense out-of-distribution scoring for semantic segmentation.
//!
//! Pixels are scored by their mean distance to the `k` nearest entries of a
//! subsampled library of training features, optionally fused with a score
//! computed from the segmentation logits. Scores are evaluated with
//! pixel-level average precision, FPR at 95% TPR and AUROC.
//!
//! ```no_run
//! use dnp_core::knn::{knn_scores, KnnConfig};
//! use dnp_core::tensor_store::{load_tensor, FeatureMap, ReferenceSet};
//! # fn main() -> dnp_core::Result<()> {
//! let refs = ReferenceSet::load("refs/train".as_ref())?;
//! let features: FeatureMap = load_tensor("data/features/img0.npy".as_ref())?;
//! let scores = knn_scores(&features, &refs, &KnnConfig::default())?;
//! println!("max score {}", scores.max());
//! # Ok(())
//! # }
//! ```

pub mod error;
pub mod eval;
pub mod knn;
pub mod pipeline;
pub mod sampler;
pub mod scorer;
pub mod tensor_store;

pub use error::{Error, Result};
