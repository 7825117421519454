//! Times kNN scoring of one 45 x 80 x 768 feature map against a
//! 100,000-row reference set of random features.
//!
//! ```text
//! cargo run --release --example throughput [-- N]
//! ```

use std::time::Instant;

use dnp_core::knn::{knn_scores, DistanceMetric, KnnConfig};
use dnp_core::tensor_store::{FeatureMap, ReferenceSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> dnp_core::Result<()> {
    let n: usize = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(100_000);
    let (h, w, c) = (45, 80, 768);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut random =
        |len: usize| -> Vec<f32> { (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let refs = ReferenceSet::from_rows(random(n * c), c)?;
    let features = FeatureMap::new(h, w, c, random(h * w * c))?;

    for metric in [DistanceMetric::L2, DistanceMetric::Cosine] {
        let cfg = KnnConfig::new(3, metric);
        let start = Instant::now();
        let scores = knn_scores(&features, &refs, &cfg)?;
        println!(
            "{metric:>6}: {} queries x {n} refs in {:.2?} (max score {:.4})",
            h * w,
            start.elapsed(),
            scores.max()
        );
    }
    Ok(())
}
