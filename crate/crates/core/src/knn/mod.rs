//! Exact k-nearest-neighbor anomaly scores against a reference library.
//!
//! A query's score is the mean distance to its `k` closest reference rows.
//! The search is exact: a single-precision pass (a matrix product for L2 and
//! cosine) screens candidates under a rigorous rounding-error bound, and the
//! survivors are re-ranked with 64-bit distances. Results therefore do not
//! depend on chunking, thread count, or the order in which rows are scanned.

mod metric;
mod select;

use rayon::prelude::*;

pub use metric::{dot, l1, squared_l2, squared_norm, DistanceMetric};

use crate::error::{Error, Result};
use crate::tensor_store::{FeatureMap, ReferenceSet, Sample, ScoreMap};
use select::{Candidates, Slack};

const UNIT_ROUNDOFF: f64 = f32::EPSILON as f64 / 2.0;
const GEMM_BLOCK: usize = 1024;
const MIN_AUTO_CHUNK: usize = 64;
const MAX_AUTO_CHUNK: usize = 4096;
// Screening in f32 is skipped when squared norms get near f32::MAX.
const SCREEN_NORM_LIMIT: f64 = 1e30;
const MIN_COSINE_NORM: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnnConfig {
    pub k: usize,
    pub metric: DistanceMetric,
    /// Queries handled per work unit; `None` splits the queries evenly over
    /// the worker threads. Affects speed and memory only.
    pub query_chunk: Option<usize>,
    /// Spread query chunks over the rayon pool; `false` runs on the caller's
    /// thread.
    pub parallel: bool,
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig {
            k: 3,
            metric: DistanceMetric::L2,
            query_chunk: None,
            parallel: true,
        }
    }
}

impl KnnConfig {
    pub fn new(k: usize, metric: DistanceMetric) -> Self {
        KnnConfig {
            k,
            metric,
            ..Default::default()
        }
    }

    pub fn sequential(mut self) -> Self {
        self.parallel = false;
        self
    }
}

/// Bound on the relative error of a length-`n` floating-point sum of products.
fn gamma(n: usize) -> f64 {
    let nu = n as f64 * UNIT_ROUNDOFF;
    nu / (1.0 - nu)
}

/// Reference rows with cached norms, ready to be queried under one metric.
pub struct KnnIndex<'a> {
    refs: &'a ReferenceSet,
    metric: DistanceMetric,
    squared_norms: Vec<f64>,
    squared_norms_f32: Vec<f32>,
    inv_norms_f32: Vec<f32>,
    max_norm: f64,
    min_norm: f64,
}

impl<'a> KnnIndex<'a> {
    pub fn new(refs: &'a ReferenceSet, metric: DistanceMetric) -> Result<Self> {
        let squared_norms: Vec<f64> = (0..refs.count())
            .map(|i| squared_norm(refs.row(i)))
            .collect();
        let norms: Vec<f64> = squared_norms.iter().map(|s| s.sqrt()).collect();
        if metric == DistanceMetric::Cosine {
            if let Some(row) = norms.iter().position(|&n| n == 0.0) {
                return Err(Error::ZeroNorm { row });
            }
        }
        let max_norm = norms.iter().copied().fold(0.0, f64::max);
        let min_norm = norms.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(KnnIndex {
            refs,
            metric,
            squared_norms_f32: squared_norms.iter().map(|&s| s as f32).collect(),
            inv_norms_f32: norms.iter().map(|n| (1.0 / n) as f32).collect(),
            squared_norms,
            max_norm,
            min_norm,
        })
    }

    pub fn metric(&self) -> DistanceMetric {
        self.metric
    }

    pub fn reference_count(&self) -> usize {
        self.refs.count()
    }

    fn check_config(&self, cfg: &KnnConfig) -> Result<()> {
        if cfg.metric != self.metric {
            return Err(Error::Config(format!(
                "index built for {} but queried with {}",
                self.metric, cfg.metric
            )));
        }
        if cfg.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if cfg.k > self.refs.count() {
            return Err(Error::Config(format!(
                "k = {} exceeds the {} reference rows",
                cfg.k,
                self.refs.count()
            )));
        }
        if cfg.query_chunk == Some(0) {
            return Err(Error::Config("query_chunk must be positive".into()));
        }
        Ok(())
    }

    /// Mean distance to the `k` nearest reference rows for every query row of
    /// a row-major `M × C` matrix.
    pub fn scores(&self, queries: &[f32], cfg: &KnnConfig) -> Result<Vec<f32>> {
        self.check_config(cfg)?;
        let channels = self.refs.channels();
        if !queries.len().is_multiple_of(channels) {
            return Err(Error::Shape(format!(
                "query buffer of {} values is not a multiple of C = {channels}",
                queries.len()
            )));
        }
        let rows = queries.len() / channels;
        let query_chunk = cfg.query_chunk.unwrap_or_else(|| {
            let workers = if cfg.parallel {
                rayon::current_num_threads()
            } else {
                1
            };
            rows.div_ceil(workers).clamp(MIN_AUTO_CHUNK, MAX_AUTO_CHUNK)
        });
        let step = query_chunk * channels;
        let chunk = |(i, rows): (usize, &[f32])| self.score_chunk(rows, i * query_chunk, cfg.k);
        let parts: Vec<Vec<f32>> = if cfg.parallel {
            queries
                .par_chunks(step)
                .enumerate()
                .map(chunk)
                .collect::<Result<_>>()?
        } else {
            queries
                .chunks(step)
                .enumerate()
                .map(chunk)
                .collect::<Result<_>>()?
        };
        Ok(parts.concat())
    }

    fn score_chunk(&self, queries: &[f32], first_row: usize, k: usize) -> Result<Vec<f32>> {
        let channels = self.refs.channels();
        let rows = queries.len() / channels;
        let query_sq: Vec<f64> = queries.chunks_exact(channels).map(squared_norm).collect();
        let query_norms: Vec<f64> = query_sq.iter().map(|s| s.sqrt()).collect();
        if self.metric == DistanceMetric::Cosine {
            if let Some(i) = query_norms.iter().position(|&n| n == 0.0) {
                return Err(Error::ZeroNorm { row: first_row + i });
            }
        }

        let max_query = query_norms.iter().copied().fold(0.0, f64::max);
        let mut screenable = self.max_norm * self.max_norm < SCREEN_NORM_LIMIT
            && max_query * max_query < SCREEN_NORM_LIMIT
            && channels as f64 * UNIT_ROUNDOFF < 0.01;
        if self.metric == DistanceMetric::Cosine {
            // tiny norms would underflow the normalized products
            let min_query = query_norms.iter().copied().fold(f64::INFINITY, f64::min);
            screenable &= min_query.min(self.min_norm) >= MIN_COSINE_NORM;
        }

        let candidates = if screenable {
            match self.metric {
                DistanceMetric::L2 | DistanceMetric::Cosine => {
                    self.screen_by_product(queries, &query_norms, k)
                }
                DistanceMetric::L1 => self.screen_l1(queries, k),
            }
        } else {
            vec![None; rows]
        };

        let mut out = Vec::with_capacity(rows);
        let mut scratch: Vec<(f64, usize)> = Vec::new();
        for (i, query) in queries.chunks_exact(channels).enumerate() {
            scratch.clear();
            let exact = |j: usize| {
                let d = self.metric.distance(
                    query,
                    self.refs.row(j),
                    (query_sq[i], self.squared_norms[j]),
                );
                (d, j)
            };
            match &candidates[i] {
                Some(rows) => scratch.extend(rows.iter().map(|&j| exact(j))),
                None => scratch.extend((0..self.refs.count()).map(exact)),
            }
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if scratch.len() > k {
                scratch.select_nth_unstable_by(k - 1, cmp);
                scratch.truncate(k);
            }
            scratch.sort_unstable_by(cmp);
            let mean = scratch.iter().map(|(d, _)| d).sum::<f64>() / k as f64;
            let score = mean as f32;
            if !score.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite kNN score for query row {}",
                    first_row + i
                )));
            }
            out.push(score);
        }
        Ok(out)
    }

    /// Screening for L2 and cosine through a single-precision matrix product.
    fn screen_by_product(
        &self,
        queries: &[f32],
        query_norms: &[f64],
        k: usize,
    ) -> Vec<Option<Vec<usize>>> {
        let channels = self.refs.channels();
        let rows = queries.len() / channels;
        let n = self.refs.count();
        let u = UNIT_ROUNDOFF;
        let g = gamma(channels);
        let r = self.max_norm;

        let mut collectors: Vec<Candidates> = query_norms
            .iter()
            .map(|&q| {
                let slack = match self.metric {
                    // screening value: |r|^2 - 2<q, r>, which equals d^2 - |q|^2
                    DistanceMetric::L2 => {
                        let err = 2.0 * g * q * r + 2.0 * u * r * r + 4.0 * u * q * r;
                        Slack::Absolute((4.0 * err) as f32 + f32::MIN_POSITIVE)
                    }
                    _ => Slack::Absolute((4.0 * (g + 8.0 * u)) as f32 + f32::MIN_POSITIVE),
                };
                Candidates::new(k, slack)
            })
            .collect();
        let inv_query: Vec<f32> = query_norms.iter().map(|&q| (1.0 / q) as f32).collect();

        let block = GEMM_BLOCK.min(n);
        let mut products = vec![0.0f32; rows * block];
        let refs = self.refs.features();
        for start in (0..n).step_by(block) {
            let width = block.min(n - start);
            let out = &mut products[..rows * width];
            // SAFETY: every pointer/stride pair stays inside its slice:
            // queries is rows x channels, the ref block is width x channels
            // read transposed, out is rows x width.
            unsafe {
                matrixmultiply::sgemm(
                    rows,
                    channels,
                    width,
                    1.0,
                    queries.as_ptr(),
                    channels as isize,
                    1,
                    refs[start * channels..].as_ptr(),
                    1,
                    channels as isize,
                    0.0,
                    out.as_mut_ptr(),
                    width as isize,
                    1,
                );
            }
            for (i, row) in out.chunks_exact_mut(width).enumerate() {
                match self.metric {
                    DistanceMetric::L2 => {
                        let norms = &self.squared_norms_f32[start..start + width];
                        for (v, &nr) in row.iter_mut().zip(norms) {
                            *v = nr - 2.0 * *v;
                        }
                    }
                    _ => {
                        let inv = &self.inv_norms_f32[start..start + width];
                        let iq = inv_query[i];
                        for (v, &ir) in row.iter_mut().zip(inv) {
                            *v = 1.0 - (*v * iq) * ir;
                        }
                    }
                }
                collectors[i].offer_block(start, row);
            }
        }
        collectors
            .iter_mut()
            .map(|c| Some(c.finish().collect()))
            .collect()
    }

    fn screen_l1(&self, queries: &[f32], k: usize) -> Vec<Option<Vec<usize>>> {
        let channels = self.refs.channels();
        let n = self.refs.count();
        let g = gamma(channels + 1);
        let slack = Slack::Relative {
            factor: (1.0 + 4.0 * g) as f32,
            floor: f32::MIN_POSITIVE,
        };
        let rows = queries.len() / channels;
        let mut collectors: Vec<Candidates> =
            (0..rows).map(|_| Candidates::new(k, slack)).collect();
        let block = (65536 / channels).clamp(16, n.max(16));
        let mut values = vec![0.0f32; block];
        for start in (0..n).step_by(block) {
            let width = block.min(n - start);
            for (query, collector) in queries.chunks_exact(channels).zip(&mut collectors) {
                for (j, v) in values[..width].iter_mut().enumerate() {
                    *v = metric::l1_f32(query, self.refs.row(start + j));
                }
                collector.offer_block(start, &values[..width]);
            }
        }
        collectors
            .iter_mut()
            .map(|c| Some(c.finish().collect()))
            .collect()
    }
}

/// Full `M × N` distance matrix between query rows and reference rows,
/// evaluated in 64-bit arithmetic and stored row-major as `f32`.
pub fn pairwise_distances(
    queries: &[f32],
    refs: &ReferenceSet,
    metric: DistanceMetric,
) -> Result<Vec<f32>> {
    let channels = refs.channels();
    if !queries.len().is_multiple_of(channels) {
        return Err(Error::Shape(format!(
            "query buffer of {} values does not have C = {channels} columns",
            queries.len()
        )));
    }
    let index = KnnIndex::new(refs, metric)?;
    let query_sq: Vec<f64> = queries.chunks_exact(channels).map(squared_norm).collect();
    if metric == DistanceMetric::Cosine {
        if let Some(row) = query_sq.iter().position(|&n| n == 0.0) {
            return Err(Error::ZeroNorm { row });
        }
    }
    let n = refs.count();
    let mut out = vec![0.0f32; query_sq.len() * n];
    out.par_chunks_mut(n.max(1))
        .zip(queries.par_chunks(channels))
        .zip(query_sq.par_iter())
        .for_each(|((row, query), &qs)| {
            for (j, slot) in row.iter_mut().enumerate() {
                *slot = metric.distance(query, refs.row(j), (qs, index.squared_norms[j])) as f32;
            }
        });
    Ok(out)
}

/// Anomaly score map for one feature map, at feature resolution.
pub fn knn_scores(features: &FeatureMap, refs: &ReferenceSet, cfg: &KnnConfig) -> Result<ScoreMap> {
    if features.channels() != refs.channels() {
        return Err(Error::Shape(format!(
            "features have {} channels, references have {}",
            features.channels(),
            refs.channels()
        )));
    }
    let index = KnnIndex::new(refs, cfg.metric)?;
    score_with_index(&index, features, cfg)
}

pub fn score_with_index(
    index: &KnnIndex<'_>,
    features: &FeatureMap,
    cfg: &KnnConfig,
) -> Result<ScoreMap> {
    if features.channels() != index.refs.channels() {
        return Err(Error::Shape(format!(
            "features have {} channels, references have {}",
            features.channels(),
            index.refs.channels()
        )));
    }
    let scores = index.scores(features.as_slice(), cfg)?;
    ScoreMap::new(features.height(), features.width(), scores)
}

/// Scores for a list of samples.
#[derive(Debug)]
pub struct BatchScores {
    pub maps: Vec<(String, ScoreMap)>,
    pub failures: Vec<(String, Error)>,
}

impl BatchScores {
    /// Largest score over every returned map; `None` if any sample failed
    /// or nothing was scored.
    pub fn aggregate_max(&self) -> Option<f32> {
        if !self.failures.is_empty() || self.maps.is_empty() {
            return None;
        }
        Some(
            self.maps
                .iter()
                .map(|(_, m)| m.max())
                .fold(f32::NEG_INFINITY, f32::max),
        )
    }

    /// Turns collected per-sample failures into one error.
    pub fn into_result(self) -> Result<Vec<(String, ScoreMap)>> {
        if self.failures.is_empty() {
            return Ok(self.maps);
        }
        let summary = self
            .failures
            .iter()
            .map(|(id, e)| format!("{id}: {e}"))
            .collect::<Vec<_>>()
            .join("; ");
        Err(Error::Batch {
            count: self.failures.len(),
            summary,
        })
    }
}

/// Scores every sample against one reference set. Load or scoring failures
/// are collected per sample instead of aborting the batch.
pub fn knn_scores_batch(
    samples: &[Sample],
    refs: &ReferenceSet,
    cfg: &KnnConfig,
) -> Result<BatchScores> {
    let index = KnnIndex::new(refs, cfg.metric)?;
    index.check_config(cfg)?;
    let mut maps = Vec::with_capacity(samples.len());
    let mut failures = Vec::new();
    for sample in samples {
        let scored = sample
            .load_features()
            .and_then(|f| score_with_index(&index, &f, cfg));
        match scored {
            Ok(map) => maps.push((sample.id.clone(), map)),
            Err(e) => failures.push((sample.id.clone(), e)),
        }
    }
    Ok(BatchScores { maps, failures })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn refs(rows: &[&[f32]]) -> ReferenceSet {
        let c = rows[0].len();
        ReferenceSet::from_rows(rows.concat(), c).unwrap()
    }

    #[test]
    fn pairwise_three_four_five() {
        let r = refs(&[&[3.0, 4.0]]);
        assert_eq!(
            pairwise_distances(&[0.0, 0.0], &r, DistanceMetric::L2).unwrap(),
            vec![5.0]
        );
    }

    #[test]
    fn pairwise_identity_is_zero() {
        let r = refs(&[&[1.0, 1.0]]);
        for metric in DistanceMetric::ALL {
            assert_eq!(
                pairwise_distances(&[1.0, 1.0], &r, metric).unwrap(),
                vec![0.0]
            );
        }
    }

    #[test]
    fn channel_mismatch_is_a_shape_error() {
        let r = refs(&[&[1.0, 1.0]]);
        assert!(matches!(
            pairwise_distances(&[1.0, 1.0, 1.0], &r, DistanceMetric::L2),
            Err(Error::Shape(_))
        ));
        let f = FeatureMap::new(1, 1, 3, vec![0.0; 3]).unwrap();
        assert!(matches!(
            knn_scores(&f, &r, &KnnConfig::new(1, DistanceMetric::L2)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn cosine_rejects_zero_rows() {
        let r = refs(&[&[1.0, 0.0], &[0.0, 0.0]]);
        assert!(matches!(
            pairwise_distances(&[1.0, 1.0], &r, DistanceMetric::Cosine),
            Err(Error::ZeroNorm { row: 1 })
        ));
        let r = refs(&[&[1.0, 0.0]]);
        let f = FeatureMap::new(1, 2, 2, vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let err = knn_scores(&f, &r, &KnnConfig::new(1, DistanceMetric::Cosine)).unwrap_err();
        assert!(matches!(err, Error::ZeroNorm { row: 1 }), "{err:?}");
    }

    #[test]
    fn query_equal_to_reference_scores_zero() {
        let r = refs(&[&[0.3, -1.7, 2.5], &[4.0, 4.0, 4.0]]);
        let f = FeatureMap::new(1, 1, 3, vec![0.3, -1.7, 2.5]).unwrap();
        for metric in DistanceMetric::ALL {
            let s = knn_scores(&f, &r, &KnnConfig::new(1, metric)).unwrap();
            assert_eq!(s.as_slice(), &[0.0], "{metric}");
        }
    }

    #[test]
    fn mean_of_three_smallest() {
        // distances 1, 2, 3, 10 from the origin along one axis
        let r = refs(&[&[10.0], &[2.0], &[1.0], &[3.0]]);
        let f = FeatureMap::new(1, 1, 1, vec![0.0]).unwrap();
        let s = knn_scores(&f, &r, &KnnConfig::new(3, DistanceMetric::L2)).unwrap();
        assert_eq!(s.as_slice(), &[2.0]);
    }

    #[test]
    fn k_larger_than_reference_count_is_rejected() {
        let r = refs(&[&[1.0], &[2.0]]);
        let f = FeatureMap::new(1, 1, 1, vec![0.0]).unwrap();
        let err = knn_scores(&f, &r, &KnnConfig::new(3, DistanceMetric::L2)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err = knn_scores(&f, &r, &KnnConfig::new(0, DistanceMetric::L2)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn duplicated_references_do_not_break_selection() {
        let r = ReferenceSet::from_rows(vec![1.0; 5000], 1).unwrap();
        let f = FeatureMap::new(1, 2, 1, vec![0.0, 1.0]).unwrap();
        let s = knn_scores(&f, &r, &KnnConfig::new(3, DistanceMetric::L2)).unwrap();
        assert_eq!(s.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn huge_magnitudes_fall_back_to_direct_path() {
        let r = refs(&[&[1e18, 0.0], &[3e18, 0.0]]);
        let f = FeatureMap::new(1, 1, 2, vec![0.0, 0.0]).unwrap();
        let s = knn_scores(&f, &r, &KnnConfig::new(2, DistanceMetric::L2)).unwrap();
        assert_eq!(s.as_slice(), &[2e18]);
    }

    #[test]
    fn aggregate_max_requires_clean_batch() {
        let map = ScoreMap::new(1, 2, vec![1.0, 4.0]).unwrap();
        let mut batch = BatchScores {
            maps: vec![("a".into(), map)],
            failures: vec![],
        };
        assert_eq!(batch.aggregate_max(), Some(4.0));
        batch.failures.push(("b".into(), Error::Config("x".into())));
        assert_eq!(batch.aggregate_max(), None);
        assert!(batch.into_result().is_err());
    }
}
