use std::collections::HashMap;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{evaluate_scores, fit_stats, score_samples, Mode, ScoreContext};
use crate::error::{Error, Result};
use crate::knn::{DistanceMetric, KnnConfig};
use crate::sampler::{build_pool, sample, CandidatePool, SamplingMethod, SamplingSpec};
use crate::scorer::ParametricKind;
use crate::tensor_store::{DatasetScan, ReferenceSet};

pub const SWEEP_COLUMNS: [&str; 9] = [
    "method", "n", "k", "metric", "seed", "ap", "fpr95", "auroc", "wall_ms",
];

/// Cartesian grid of settings. Rows are emitted with `methods` varying
/// slowest, then `budgets`, `seeds`, `ks` and `metrics`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub methods: Vec<SamplingMethod>,
    pub budgets: Vec<usize>,
    pub seeds: Vec<u64>,
    pub ks: Vec<usize>,
    pub metrics: Vec<DistanceMetric>,
    pub mode: Mode,
    pub parametric_kind: ParametricKind,
    pub projection_dim: Option<usize>,
    pub max_per_image: Option<usize>,
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("methods", self.methods.is_empty()),
            ("budgets", self.budgets.is_empty()),
            ("seeds", self.seeds.is_empty()),
            ("ks", self.ks.is_empty()),
            ("metrics", self.metrics.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::Config(format!("sweep grid has no {name}")));
        }
        if self.mode == Mode::Parametric {
            return Err(Error::Config(
                "a parametric-only sweep has no kNN setting to vary".into(),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.methods.len()
            * self.budgets.len()
            * self.seeds.len()
            * self.ks.len()
            * self.metrics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepMetrics {
    pub ap: f64,
    pub fpr95: f64,
    pub auroc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub method: SamplingMethod,
    pub n: usize,
    pub k: usize,
    pub metric: DistanceMetric,
    pub seed: u64,
    /// Metrics, or the message of the error that stopped this cell.
    pub outcome: std::result::Result<SweepMetrics, String>,
    pub wall_ms: u128,
}

fn run_cell(
    train: &DatasetScan,
    test: &DatasetScan,
    refs: &ReferenceSet,
    knn: KnnConfig,
    grid: &SweepGrid,
) -> Result<SweepMetrics> {
    let stats = match grid.mode {
        Mode::Cdnp => Some(fit_stats(train, refs, &knn, grid.parametric_kind)?),
        _ => None,
    };
    let ctx = ScoreContext::new(grid.mode, grid.parametric_kind, knn, Some(refs), stats)?;
    let (maps, failures) = score_samples(&test.samples, &test.manifest, &ctx);
    if let Some((id, e)) = failures.into_iter().next() {
        return Err(Error::Validation(format!("{id}: {e}")));
    }
    let report = evaluate_scores(&maps, test)?;
    Ok(SweepMetrics {
        ap: report.ap,
        fpr95: report.fpr95,
        auroc: report.auroc,
    })
}

/// Evaluates every grid cell on `test`, with references drawn from `train`.
/// Reference sets are built once per (method, budget, seed); a failing cell
/// becomes an error row instead of stopping the sweep.
pub fn run_sweep(
    train: &DatasetScan,
    test: &DatasetScan,
    grid: &SweepGrid,
) -> Result<Vec<SweepRow>> {
    grid.validate()?;
    let mut pools: HashMap<u64, std::result::Result<CandidatePool, String>> = HashMap::new();
    let mut rows = Vec::with_capacity(grid.len());

    for &method in &grid.methods {
        for &n in &grid.budgets {
            for &seed in &grid.seeds {
                let pool = pools.entry(seed).or_insert_with(|| {
                    build_pool(train, grid.max_per_image, seed).map_err(|e| e.to_string())
                });
                let refs = pool.as_ref().map_err(Clone::clone).and_then(|pool| {
                    let mut spec = SamplingSpec::new(method, n, seed);
                    spec.projection_dim = grid.projection_dim;
                    sample(pool, &spec, train.manifest.num_classes).map_err(|e| e.to_string())
                });
                for &k in &grid.ks {
                    for &metric in &grid.metrics {
                        let start = Instant::now();
                        let outcome = refs.as_ref().map_err(Clone::clone).and_then(|refs| {
                            run_cell(train, test, refs, KnnConfig::new(k, metric), grid)
                                .map_err(|e| e.to_string())
                        });
                        if let Err(msg) = &outcome {
                            log::warn!("{method} n={n} seed={seed} k={k} {metric}: {msg}");
                        }
                        rows.push(SweepRow {
                            method,
                            n,
                            k,
                            metric,
                            seed,
                            outcome,
                            wall_ms: start.elapsed().as_millis(),
                        });
                    }
                }
            }
        }
    }
    Ok(rows)
}

/// Writes rows as CSV with a fixed header. Error rows carry `ERR:<message>`
/// in the `ap` column and leave `fpr95` and `auroc` empty.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(SWEEP_COLUMNS)?;
    for row in rows {
        let (ap, fpr95, auroc) = match &row.outcome {
            Ok(m) => (m.ap.to_string(), m.fpr95.to_string(), m.auroc.to_string()),
            Err(msg) => (format!("ERR:{msg}"), String::new(), String::new()),
        };
        writer.write_record([
            row.method.name().to_string(),
            row.n.to_string(),
            row.k.to_string(),
            row.metric.name().to_string(),
            row.seed.to_string(),
            ap,
            fpr95,
            auroc,
            row.wall_ms.to_string(),
        ])?;
    }
    writer.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}
