//! Pixel-level detection metrics: average precision, FPR at a fixed TPR,
//! and AUROC, with anomalies as the positive class.
//!
//! All metrics are computed from per-unique-score `(positives, negatives)`
//! counts swept in descending score order. Equal scores always form one
//! threshold step, so results do not depend on pixel order, and pooling a
//! dataset only needs the merged count tables, never the raw pixels.

mod report;

use rayon::prelude::*;

pub use report::{evaluate_dataset, EvalReport, ImageReport};

use crate::error::{Error, Result};

/// One threshold step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreCount {
    pub score: f64,
    pub positives: u64,
    pub negatives: u64,
}

/// Positive/negative counts per unique score, sorted by descending score.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreCounts {
    steps: Vec<ScoreCount>,
    positives: u64,
    negatives: u64,
}

impl ScoreCounts {
    pub fn from_pairs<T: Copy + Into<f64>>(scores: &[T], labels: &[bool]) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} scores but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        let mut pairs: Vec<(f64, bool)> = Vec::with_capacity(scores.len());
        for (i, (&s, &l)) in scores.iter().zip(labels).enumerate() {
            let s: f64 = s.into();
            if s.is_nan() {
                return Err(Error::NonFinite { index: i });
            }
            // + 0.0 folds -0.0 into 0.0
            pairs.push((s + 0.0, l));
        }
        pairs.par_sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut counts = ScoreCounts::default();
        for (score, positive) in pairs {
            counts.push(score, positive as u64, (!positive) as u64);
        }
        Ok(counts)
    }

    fn push(&mut self, score: f64, positives: u64, negatives: u64) {
        match self.steps.last_mut() {
            Some(last) if last.score == score => {
                last.positives += positives;
                last.negatives += negatives;
            }
            _ => self.steps.push(ScoreCount {
                score,
                positives,
                negatives,
            }),
        }
        self.positives += positives;
        self.negatives += negatives;
    }

    /// Sorted merge of two tables.
    pub fn merge(&self, other: &ScoreCounts) -> ScoreCounts {
        let mut out = ScoreCounts {
            steps: Vec::with_capacity(self.steps.len() + other.steps.len()),
            ..Default::default()
        };
        let (mut a, mut b) = (self.steps.iter().peekable(), other.steps.iter().peekable());
        loop {
            let next = match (a.peek(), b.peek()) {
                (Some(x), Some(y)) if x.score >= y.score => a.next(),
                (Some(_), Some(_)) => b.next(),
                (Some(_), None) => a.next(),
                (None, Some(_)) => b.next(),
                (None, None) => break,
            };
            let s = next.expect("peeked");
            out.push(s.score, s.positives, s.negatives);
        }
        out
    }

    /// Merges many tables pairwise.
    pub fn merge_all(mut tables: Vec<ScoreCounts>) -> ScoreCounts {
        while tables.len() > 1 {
            tables = tables
                .par_chunks(2)
                .map(|pair| match pair {
                    [a, b] => a.merge(b),
                    [a] => a.clone(),
                    _ => unreachable!(),
                })
                .collect();
        }
        tables.pop().unwrap_or_default()
    }

    pub fn steps(&self) -> &[ScoreCount] {
        &self.steps
    }

    pub fn positives(&self) -> u64 {
        self.positives
    }

    pub fn negatives(&self) -> u64 {
        self.negatives
    }

    fn require_both(&self) -> Result<()> {
        if self.positives == 0 || self.negatives == 0 {
            return Err(Error::UndefinedMetric(format!(
                "need both classes, got {} anomaly and {} inlier samples",
                self.positives, self.negatives
            )));
        }
        Ok(())
    }

    /// Step-wise area under the precision-recall curve:
    /// `sum_n (R_n - R_{n-1}) * P_n` over descending thresholds.
    pub fn average_precision(&self) -> Result<f64> {
        self.require_both()?;
        let (mut tp, mut fp) = (0u64, 0u64);
        // weighted by integer counts and divided once, so the result never exceeds 1
        let mut weighted = 0.0;
        for s in &self.steps {
            tp += s.positives;
            fp += s.negatives;
            if s.positives > 0 {
                weighted += s.positives as f64 * (tp as f64 / (tp + fp) as f64);
            }
        }
        Ok(weighted / self.positives as f64)
    }

    /// FPR at the highest threshold whose TPR reaches `target_tpr`.
    pub fn fpr_at_tpr(&self, target_tpr: f64) -> Result<f64> {
        if !(target_tpr > 0.0 && target_tpr <= 1.0) {
            return Err(Error::Config(format!(
                "target TPR {target_tpr} must be in (0, 1]"
            )));
        }
        self.require_both()?;
        let (mut tp, mut fp) = (0u64, 0u64);
        for s in &self.steps {
            tp += s.positives;
            fp += s.negatives;
            if tp as f64 / self.positives as f64 >= target_tpr {
                return Ok(fp as f64 / self.negatives as f64);
            }
        }
        unreachable!("the lowest threshold reaches TPR 1")
    }

    /// Probability that a random anomaly outscores a random inlier, with
    /// ties counted as one half.
    pub fn auroc(&self) -> Result<f64> {
        self.require_both()?;
        // twice the Mann-Whitney U, kept integral
        let mut negatives_above = 0u128;
        let mut twice_u = 0u128;
        let n = self.negatives as u128;
        for s in &self.steps {
            let (pos, neg) = (s.positives as u128, s.negatives as u128);
            let below = n - negatives_above - neg;
            twice_u += 2 * pos * below + pos * neg;
            negatives_above += neg;
        }
        Ok(twice_u as f64 / (2 * self.positives as u128 * n) as f64)
    }
}

pub fn average_precision<T: Copy + Into<f64>>(scores: &[T], labels: &[bool]) -> Result<f64> {
    ScoreCounts::from_pairs(scores, labels)?.average_precision()
}

pub fn fpr_at_tpr<T: Copy + Into<f64>>(
    scores: &[T],
    labels: &[bool],
    target_tpr: f64,
) -> Result<f64> {
    ScoreCounts::from_pairs(scores, labels)?.fpr_at_tpr(target_tpr)
}

pub fn auroc<T: Copy + Into<f64>>(scores: &[T], labels: &[bool]) -> Result<f64> {
    ScoreCounts::from_pairs(scores, labels)?.auroc()
}
