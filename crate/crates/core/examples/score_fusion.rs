//! Builds a combined score by hand: a coarse kNN map is upsampled to image
//! resolution and fused with a logit-based score using fitted extrema.
//!
//! ```text
//! cargo run --example score_fusion
//! ```

use dnp_core::scorer::{
    combine_scores, fit_normalization, parametric_score, upsample_bilinear, ParametricKind,
};
use dnp_core::tensor_store::{LogitMap, ScoreMap};

fn main() -> dnp_core::Result<()> {
    let coarse = ScoreMap::new(2, 2, vec![0.0, 1.0, 0.0, 1.0])?;
    let knn = upsample_bilinear(&coarse, 2, 4)?;
    println!("upsampled row: {:?}", &knn.as_slice()[..4]);

    // two classes; the right half of the image is uncertain
    let logits = LogitMap::new(
        2,
        4,
        2,
        vec![
            6.0, 0.0, 6.0, 0.0, 0.5, 0.0, 0.1, 0.0, //
            0.0, 6.0, 0.0, 6.0, 0.0, 0.5, 0.0, 0.1,
        ],
    )?;
    for kind in ParametricKind::ALL {
        let param = parametric_score(&logits, kind)?;
        let stats = fit_normalization([knn.as_slice()], [param.as_slice()])?;
        let fused = combine_scores(&knn, &param, &stats)?;
        println!(
            "{:>8}: parametric {:?}\n          fused      {:?}",
            kind.name(),
            &param.as_slice()[..4],
            &fused.as_slice()[..4]
        );
    }
    Ok(())
}
