//! Writes a synthetic dataset, scans it back and round-trips one feature
//! map through the NPY format.
//!
//! ```text
//! cargo run --example tensor_io
//! ```

use dnp_core::pipeline::{generate_synthetic, SynthSpec, TEST_DIR};
use dnp_core::tensor_store::{load_tensor, save_tensor, scan_dataset, FeatureMap, OodLabel};

fn main() -> dnp_core::Result<()> {
    let dir = std::env::temp_dir().join("dnp_example_tensor_io");
    generate_synthetic(&dir, &SynthSpec::default())?;

    let test = scan_dataset(&dir.join(TEST_DIR))?;
    println!(
        "{} test images, {} classes",
        test.samples.len(),
        test.manifest.num_classes
    );
    for sample in &test.samples {
        let features = sample.load_features()?;
        let (h, w) = sample.image_size(&test.manifest)?;
        let mask = sample.load_ood_mask()?.expect("test split has masks");
        println!(
            "{}: features {}x{}x{}, image {h}x{w}, {} anomalous pixels",
            sample.id,
            features.height(),
            features.width(),
            features.channels(),
            mask.count(OodLabel::Anomaly)
        );
    }

    let original = test.samples[0].load_features()?;
    let copy = dir.join("copy.npy");
    save_tensor(&original, &copy)?;
    let reloaded: FeatureMap = load_tensor(&copy)?;
    assert_eq!(original, reloaded);
    println!("round trip through {} is exact", copy.display());
    Ok(())
}
