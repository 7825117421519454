//! Scores a feature map against a small reference set under each distance
//! metric and checks the result against a brute-force computation.
//!
//! ```text
//! cargo run --example knn_scoring
//! ```

use dnp_core::knn::{knn_scores, DistanceMetric, KnnConfig};
use dnp_core::tensor_store::{FeatureMap, ReferenceSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> dnp_core::Result<()> {
    let (h, w, c, n, k) = (6, 8, 32, 500, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut random =
        |len: usize| -> Vec<f32> { (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let refs = ReferenceSet::from_rows(random(n * c), c)?;
    let features = FeatureMap::new(h, w, c, random(h * w * c))?;

    for metric in DistanceMetric::ALL {
        let scores = knn_scores(&features, &refs, &KnnConfig::new(k, metric))?;
        let mut worst = 0.0f64;
        for p in 0..h * w {
            let q = features.vector(p);
            let mut d: Vec<f64> = (0..n)
                .map(|i| {
                    let r = refs.row(i);
                    let norms = (
                        q.iter().map(|&x| (x as f64).powi(2)).sum(),
                        r.iter().map(|&x| (x as f64).powi(2)).sum(),
                    );
                    metric.distance(q, r, norms)
                })
                .collect();
            d.sort_by(f64::total_cmp);
            let expected = d[..k].iter().sum::<f64>() / k as f64;
            let got = scores.as_slice()[p] as f64;
            worst = worst.max((got - expected).abs() / expected);
        }
        println!(
            "{metric:>6}: scores in [{:.4}, {:.4}], max relative error {worst:.2e}",
            scores.min(),
            scores.max()
        );
    }
    Ok(())
}
