//! Compares random, greedy coreset and per-class greedy coreset selection
//! by how well the selected rows cover the candidate pool.
//!
//! ```text
//! cargo run --release --example coreset_sampling
//! ```

use dnp_core::pipeline::{generate_synthetic, SynthSpec, TRAIN_DIR};
use dnp_core::sampler::{build_pool, coverage_radius, sample, SamplingMethod, SamplingSpec};
use dnp_core::tensor_store::scan_dataset;

fn main() -> dnp_core::Result<()> {
    let dir = std::env::temp_dir().join("dnp_example_coreset");
    generate_synthetic(&dir, &SynthSpec::default())?;
    let train = scan_dataset(&dir.join(TRAIN_DIR))?;
    let pool = build_pool(&train, None, 0)?;
    println!("pool of {} rows x {} channels", pool.len(), pool.channels());

    // map every selected row back to its index in the pool
    let index_of = |row: &[f32]| {
        (0..pool.len())
            .find(|&i| pool.row(i) == row)
            .expect("selected rows come from the pool")
    };
    for budget in [16, 64, 256] {
        for method in [
            SamplingMethod::Random,
            SamplingMethod::Gcs,
            SamplingMethod::PcGcs,
        ] {
            let refs = sample(
                &pool,
                &SamplingSpec::new(method, budget, 0),
                train.manifest.num_classes,
            )?;
            let selected: Vec<usize> = (0..refs.count()).map(|i| index_of(refs.row(i))).collect();
            let radius = coverage_radius(pool.features(), pool.channels(), &selected);
            println!("n={budget:>4} {method:>6}: coverage radius {radius:.3}");
        }
    }
    Ok(())
}
