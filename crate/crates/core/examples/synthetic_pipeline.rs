//! Runs the whole workflow on a generated dataset: reference set, stats,
//! scoring in all three modes and evaluation.
//!
//! ```text
//! cargo run --release --example synthetic_pipeline
//! ```

use dnp_core::knn::{DistanceMetric, KnnConfig};
use dnp_core::pipeline::{
    cmd_build_ref, cmd_eval, cmd_fit_norm, cmd_score, generate_synthetic, BuildRefOptions, Mode,
    PipelineConfig, SynthSpec, TEST_DIR, TRAIN_DIR,
};
use dnp_core::sampler::{SamplingMethod, SamplingSpec};
use dnp_core::scorer::ParametricKind;

fn main() -> dnp_core::Result<()> {
    let dir = std::env::temp_dir().join("dnp_example_pipeline");
    generate_synthetic(&dir, &SynthSpec::default())?;
    let (train, test) = (dir.join(TRAIN_DIR), dir.join(TEST_DIR));

    let sampling = SamplingSpec::new(SamplingMethod::PcGcs, 500, 0);
    let refs_prefix = dir.join("refs").join("train");
    let refs = cmd_build_ref(
        &BuildRefOptions {
            train_root: train.clone(),
            sampling,
            metric: DistanceMetric::L2,
            max_per_image: None,
        },
        &refs_prefix,
    )?;
    println!("reference set: {} rows", refs.count());

    let knn = KnnConfig::new(3, DistanceMetric::L2);
    let kind = ParametricKind::default();
    let stats_path = dir.join("stats.json");
    cmd_fit_norm(&train, &refs_prefix, &knn, kind, &stats_path)?;

    for mode in [Mode::Parametric, Mode::Dnp, Mode::Cdnp] {
        let cfg = PipelineConfig {
            dataset_root: test.clone(),
            reference_path: mode.needs_reference().then(|| refs_prefix.clone()),
            stats_path: (mode == Mode::Cdnp).then(|| stats_path.clone()),
            knn,
            sampling,
            parametric_kind: kind,
            mode,
        };
        let out = dir.join("scores").join(mode.name());
        let summary = cmd_score(&cfg, &[], &out, false)?;
        let report = cmd_eval(&out, &test)?;
        println!(
            "{mode:>10}: {} maps, AP {:.4}  FPR95 {:.4}  AUROC {:.4}",
            summary.written.len(),
            report.ap,
            report.fpr95,
            report.auroc
        );
    }
    Ok(())
}
