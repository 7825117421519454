use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{mix_seed, SamplingSpec};
use crate::error::{Error, Result};
use crate::tensor_store::{DatasetScan, LabelMask, ReferenceManifest, ReferenceSet};

/// Brings a full-resolution label mask to the feature grid.
///
/// Each target cell takes the label of the source pixel containing the
/// cell's center under half-pixel-center alignment, i.e. source row
/// `floor((row + 0.5) * src_h / dst_h)`. Ignore labels are carried over.
pub fn downsample_labels(mask: &LabelMask, target_h: usize, target_w: usize) -> Result<LabelMask> {
    if target_h == 0 || target_w == 0 {
        return Err(Error::Shape("target dimensions must be positive".into()));
    }
    if target_h > mask.height() || target_w > mask.width() {
        return Err(Error::Shape(format!(
            "cannot downsample {}x{} labels to larger {target_h}x{target_w}",
            mask.height(),
            mask.width()
        )));
    }
    let nearest = |t: usize, src: usize, dst: usize| (((2 * t + 1) * src) / (2 * dst)).min(src - 1);
    let mut data = Vec::with_capacity(target_h * target_w);
    for row in 0..target_h {
        let sr = nearest(row, mask.height(), target_h);
        for col in 0..target_w {
            data.push(mask.get(sr, nearest(col, mask.width(), target_w)));
        }
    }
    LabelMask::new(target_h, target_w, data, mask.ignore_value())
}

/// All training feature vectors eligible for the reference set.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    features: Vec<f32>,
    channels: usize,
    labels: Option<Vec<i32>>,
    /// `(image index, flat feature position)` per row.
    provenance: Vec<(u32, u32)>,
    image_ids: Vec<String>,
    source: String,
    max_per_image: Option<usize>,
}

impl CandidatePool {
    pub fn from_rows(
        features: Vec<f32>,
        channels: usize,
        labels: Option<Vec<i32>>,
    ) -> Result<Self> {
        if channels == 0 || features.is_empty() || !features.len().is_multiple_of(channels) {
            return Err(Error::Shape("pool must be a non-empty P x C matrix".into()));
        }
        let rows = features.len() / channels;
        if labels.as_ref().is_some_and(|l| l.len() != rows) {
            return Err(Error::Shape("one label per pool row required".into()));
        }
        Ok(CandidatePool {
            features,
            channels,
            labels,
            provenance: (0..rows as u32).map(|r| (0, r)).collect(),
            image_ids: vec!["in-memory".into()],
            source: "in-memory".into(),
            max_per_image: None,
        })
    }

    pub fn len(&self) -> usize {
        self.features.len() / self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.channels..(i + 1) * self.channels]
    }

    pub fn labels(&self) -> Option<&[i32]> {
        self.labels.as_deref()
    }

    /// Image id and flat feature-grid position a pool row came from.
    pub fn provenance(&self, row: usize) -> (&str, usize) {
        let (image, pos) = self.provenance[row];
        (&self.image_ids[image as usize], pos as usize)
    }

    pub(crate) fn to_reference(&self, rows: &[usize], spec: &SamplingSpec) -> Result<ReferenceSet> {
        let mut features = Vec::with_capacity(rows.len() * self.channels);
        for &r in rows {
            features.extend_from_slice(self.row(r));
        }
        let labels = self
            .labels
            .as_ref()
            .map(|l| rows.iter().map(|&r| l[r]).collect());
        ReferenceSet::new(
            features,
            self.channels,
            labels,
            ReferenceManifest {
                n: rows.len(),
                c: self.channels,
                metric: "l2".into(),
                sampling_method: spec.method.name().into(),
                seed: spec.seed,
                source: self.source.clone(),
                model_id: None,
                layer: None,
                budget: Some(spec.budget),
                pool_size: Some(self.len()),
                projection_dim: spec.projection_dim,
                max_per_image: self.max_per_image,
            },
        )
    }
}

/// Flattens every feature position of every training image into one pool.
///
/// When all samples carry labels, each row gets the class of its feature
/// cell and ignored cells are dropped. With `max_per_image`, each image
/// contributes a seeded uniform subsample of its remaining positions.
pub fn build_pool(
    dataset: &DatasetScan,
    max_per_image: Option<usize>,
    seed: u64,
) -> Result<CandidatePool> {
    if dataset.samples.is_empty() {
        return Err(Error::NoSamples(dataset.root.clone()));
    }
    if max_per_image == Some(0) {
        return Err(Error::Config("max_per_image must be positive".into()));
    }
    let with_labels = dataset.has_labels();
    let mut features = Vec::new();
    let mut labels = with_labels.then(Vec::new);
    let mut provenance = Vec::new();
    let mut image_ids = Vec::with_capacity(dataset.samples.len());
    let mut channels = None;

    for (image, sample) in dataset.samples.iter().enumerate() {
        let fmap = sample.load_features()?;
        match channels {
            None => channels = Some(fmap.channels()),
            Some(c) if c != fmap.channels() => {
                return Err(Error::Shape(format!(
                    "{}: {} channels, earlier images have {c}",
                    sample.id,
                    fmap.channels()
                )))
            }
            _ => {}
        }
        let cell_labels = match sample.load_labels(&dataset.manifest)? {
            Some(mask) if with_labels => {
                Some(downsample_labels(&mask, fmap.height(), fmap.width())?)
            }
            _ => None,
        };
        let mut positions: Vec<usize> = match &cell_labels {
            Some(mask) => (0..fmap.positions())
                .filter(|&p| mask.as_slice()[p] != mask.ignore_value())
                .collect(),
            None => (0..fmap.positions()).collect(),
        };
        if let Some(cap) = max_per_image {
            if positions.len() > cap {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, image as u64));
                let mut keep = index::sample(&mut rng, positions.len(), cap).into_vec();
                keep.sort_unstable();
                positions = keep.into_iter().map(|i| positions[i]).collect();
            }
        }
        for &p in &positions {
            features.extend_from_slice(fmap.vector(p));
            provenance.push((image as u32, p as u32));
        }
        if let (Some(out), Some(mask)) = (labels.as_mut(), &cell_labels) {
            out.extend(positions.iter().map(|&p| mask.as_slice()[p]));
        }
        image_ids.push(sample.id.clone());
    }

    if features.is_empty() {
        return Err(Error::Validation(
            "candidate pool is empty after removing ignored positions".into(),
        ));
    }
    Ok(CandidatePool {
        features,
        channels: channels.expect("at least one image"),
        labels,
        provenance,
        image_ids,
        source: dataset.root.display().to_string(),
        max_per_image,
    })
}
