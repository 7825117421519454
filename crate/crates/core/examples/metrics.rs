//! Computes AP, FPR at 95% TPR and AUROC for a few hand-made score sets,
//! including tied scores and a pooled two-image evaluation.
//!
//! ```text
//! cargo run --example metrics
//! ```

use dnp_core::eval::{auroc, average_precision, evaluate_dataset, fpr_at_tpr};
use dnp_core::tensor_store::{OodLabel, OodMask, ScoreMap};

fn main() -> dnp_core::Result<()> {
    let cases: [(&str, Vec<f32>, Vec<bool>); 3] = [
        (
            "perfect",
            vec![0.9, 0.8, 0.2, 0.1],
            vec![true, true, false, false],
        ),
        (
            "inverted",
            vec![0.1, 0.2, 0.8, 0.9],
            vec![true, true, false, false],
        ),
        ("all tied", vec![0.5; 4], vec![true, false, false, false]),
    ];
    for (name, scores, labels) in &cases {
        println!(
            "{name:>8}: AP {:.3}  FPR95 {:.3}  AUROC {:.3}",
            average_precision(scores, labels)?,
            fpr_at_tpr(scores, labels, 0.95)?,
            auroc(scores, labels)?
        );
    }

    let mask = |codes: &[i32]| {
        OodMask::new(
            1,
            codes.len(),
            codes.iter().map(|&c| OodLabel::from_code(c)).collect(),
        )
    };
    let a = (
        ScoreMap::new(1, 4, vec![0.9, 0.1, 0.2, 0.7])?,
        mask(&[1, 0, 0, 255])?,
    );
    let b = (
        ScoreMap::new(1, 4, vec![0.3, 0.4, 0.8, 0.6])?,
        mask(&[0, 0, 1, 0])?,
    );
    let report = evaluate_dataset(&[("a", &a.0, &a.1), ("b", &b.0, &b.1)])?;
    println!("\npooled over two images:\n{}", report.table());
    Ok(())
}
