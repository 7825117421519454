use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::knn::DistanceMetric;
use crate::sampler::{build_pool, sample, SamplingSpec};
use crate::tensor_store::{scan_dataset, DatasetScan, ReferenceSet};

#[derive(Debug, Clone, PartialEq)]
pub struct BuildRefOptions {
    pub train_root: PathBuf,
    pub sampling: SamplingSpec,
    /// Recorded in the manifest; selection itself is always Euclidean.
    pub metric: DistanceMetric,
    /// Cap on pool rows contributed by one image.
    pub max_per_image: Option<usize>,
}

/// Pools every training feature position and subsamples it.
pub fn build_reference(train: &DatasetScan, opts: &BuildRefOptions) -> Result<ReferenceSet> {
    let pool = build_pool(train, opts.max_per_image, opts.sampling.seed)?;
    log::info!(
        "pool of {} rows x {} channels from {} images",
        pool.len(),
        pool.channels(),
        train.samples.len()
    );
    let mut refs = sample(&pool, &opts.sampling, train.manifest.num_classes)?;
    let manifest = refs.manifest_mut();
    manifest.metric = opts.metric.name().into();
    manifest.model_id = train.manifest.model_id.clone();
    manifest.layer = train.manifest.layer.clone();
    Ok(refs)
}

/// Builds a reference set and writes it under `out_prefix`.
pub fn cmd_build_ref(opts: &BuildRefOptions, out_prefix: &Path) -> Result<ReferenceSet> {
    let train = scan_dataset(&opts.train_root)?;
    let refs = build_reference(&train, opts)?;
    refs.save(out_prefix)?;
    log::info!(
        "wrote {} reference rows to {}",
        refs.count(),
        out_prefix.display()
    );
    Ok(refs)
}
