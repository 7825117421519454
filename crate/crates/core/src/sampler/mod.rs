//! Reference-set construction from training feature maps.
//!
//! Three selection strategies are provided: uniform random subsampling,
//! greedy k-center coreset selection, and the per-class variant that runs
//! the greedy selection independently inside every semantic class with a
//! budget proportional to the class size.

mod greedy;
mod pool;

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use greedy::{coverage_radius, greedy_k_center, random_projection};
pub use pool::{build_pool, downsample_labels, CandidatePool};

use crate::error::{Error, Result};
use crate::tensor_store::ReferenceSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMethod {
    Random,
    Gcs,
    #[default]
    PcGcs,
}

impl SamplingMethod {
    pub fn name(self) -> &'static str {
        match self {
            SamplingMethod::Random => "random",
            SamplingMethod::Gcs => "gcs",
            SamplingMethod::PcGcs => "pcgcs",
        }
    }
}

impl fmt::Display for SamplingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for SamplingMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "random" => Ok(SamplingMethod::Random),
            "gcs" => Ok(SamplingMethod::Gcs),
            "pcgcs" => Ok(SamplingMethod::PcGcs),
            other => Err(Error::Config(format!("unknown sampling method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingSpec {
    pub method: SamplingMethod,
    pub budget: usize,
    pub seed: u64,
    /// Greedy selection runs in a Gaussian random projection of this size.
    pub projection_dim: Option<usize>,
}

impl SamplingSpec {
    pub fn new(method: SamplingMethod, budget: usize, seed: u64) -> Self {
        SamplingSpec {
            method,
            budget,
            seed,
            projection_dim: None,
        }
    }

    fn validate(&self, channels: usize) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::Config("sampling budget must be at least 1".into()));
        }
        if let Some(d) = self.projection_dim {
            if d == 0 || d >= channels {
                return Err(Error::Config(format!(
                    "projection_dim {d} must be in 1..{channels}"
                )));
            }
        }
        Ok(())
    }
}

/// SplitMix64 finalizer, used to derive independent sub-seeds.
pub(crate) fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Dispatches on `spec.method`.
pub fn sample(
    pool: &CandidatePool,
    spec: &SamplingSpec,
    num_classes: usize,
) -> Result<ReferenceSet> {
    match spec.method {
        SamplingMethod::Random => sample_random(pool, spec),
        SamplingMethod::Gcs => sample_gcs(pool, spec),
        SamplingMethod::PcGcs => sample_pcgcs(pool, spec, num_classes),
    }
}

fn warn_budget(spec: &SamplingSpec, available: usize) {
    log::warn!(
        "{} budget {} is not smaller than the {available} candidate rows; keeping all",
        spec.method,
        spec.budget
    );
}

/// Uniform sample without replacement.
pub fn sample_random(pool: &CandidatePool, spec: &SamplingSpec) -> Result<ReferenceSet> {
    spec.validate(pool.channels())?;
    let p = pool.len();
    let rows: Vec<usize> = if spec.budget >= p {
        warn_budget(spec, p);
        (0..p).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut rows = index::sample(&mut rng, p, spec.budget).into_vec();
        rows.sort_unstable();
        rows
    };
    pool.to_reference(&rows, spec)
}

fn gcs_rows(
    features: &[f32],
    channels: usize,
    budget: usize,
    seed: u64,
    projection_dim: Option<usize>,
) -> Vec<usize> {
    let p = features.len() / channels;
    if budget >= p {
        return (0..p).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = rng.gen_range(0..p);
    match projection_dim {
        Some(dim) => {
            let projected = random_projection(features, channels, dim, mix_seed(seed, u64::MAX));
            greedy_k_center(&projected, dim, budget, start)
        }
        None => greedy_k_center(features, channels, budget, start),
    }
}

/// Greedy k-center (farthest point) coreset.
pub fn sample_gcs(pool: &CandidatePool, spec: &SamplingSpec) -> Result<ReferenceSet> {
    spec.validate(pool.channels())?;
    if spec.budget >= pool.len() {
        warn_budget(spec, pool.len());
    }
    let rows = gcs_rows(
        pool.features(),
        pool.channels(),
        spec.budget,
        spec.seed,
        spec.projection_dim,
    );
    pool.to_reference(&rows, spec)
}

/// Splits `budget` over classes proportionally to their sizes.
///
/// Each class first gets `floor(budget * size / total)`; the remainder goes
/// one row at a time to classes in descending size order (ties broken by
/// lower class index). When the budget covers everything, every class keeps
/// all of its rows.
pub fn allocate_budget(class_sizes: &[usize], budget: usize) -> Vec<usize> {
    let total: usize = class_sizes.iter().sum();
    if budget >= total {
        return class_sizes.to_vec();
    }
    let mut alloc: Vec<usize> = class_sizes
        .iter()
        .map(|&size| ((budget as u128 * size as u128) / total as u128) as usize)
        .collect();
    let mut remainder = budget - alloc.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..class_sizes.len()).collect();
    order.sort_by(|&a, &b| class_sizes[b].cmp(&class_sizes[a]).then(a.cmp(&b)));
    for &c in order.iter().cycle() {
        if remainder == 0 {
            break;
        }
        if alloc[c] < class_sizes[c] {
            alloc[c] += 1;
            remainder -= 1;
        }
    }
    alloc
}

/// Greedy coreset run separately inside each semantic class.
pub fn sample_pcgcs(
    pool: &CandidatePool,
    spec: &SamplingSpec,
    num_classes: usize,
) -> Result<ReferenceSet> {
    spec.validate(pool.channels())?;
    let labels = pool.labels().ok_or_else(|| {
        Error::Config("per-class coreset selection needs class labels for every pool row".into())
    })?;
    if let Some(&bad) = labels.iter().find(|&&l| l < 0 || l as usize >= num_classes) {
        return Err(Error::Validation(format!(
            "pool label {bad} outside 0..{num_classes}"
        )));
    }
    if spec.budget >= pool.len() {
        warn_budget(spec, pool.len());
    }

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (row, &label) in labels.iter().enumerate() {
        members[label as usize].push(row);
    }
    let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let alloc = allocate_budget(&sizes, spec.budget);

    let channels = pool.channels();
    let per_class: Vec<Vec<usize>> = {
        use rayon::prelude::*;
        members
            .par_iter()
            .zip(alloc.par_iter())
            .enumerate()
            .map(|(class, (rows, &budget))| {
                if budget == 0 {
                    return Vec::new();
                }
                let mut features = Vec::with_capacity(rows.len() * channels);
                for &r in rows {
                    features.extend_from_slice(pool.row(r));
                }
                gcs_rows(
                    &features,
                    channels,
                    budget,
                    mix_seed(spec.seed, class as u64),
                    spec.projection_dim,
                )
                .into_iter()
                .map(|local| rows[local])
                .collect()
            })
            .collect()
    };
    let rows: Vec<usize> = per_class.concat();
    pool.to_reference(&rows, spec)
}
