//! Independent reference implementations used as test oracles. Everything
//! here is deliberately naive: plain loops, full sorts, exhaustive search.

#![allow(dead_code)]

use dnp_core::knn::DistanceMetric;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, len: usize, lo: f32, hi: f32) -> Vec<f32> {
    (0..len).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Small integers, so exact ties between distances are common.
pub fn small_ints(rng: &mut ChaCha8Rng, len: usize, max: i32) -> Vec<f32> {
    (0..len).map(|_| rng.gen_range(-max..=max) as f32).collect()
}

pub fn naive_distance(metric: DistanceMetric, a: &[f32], b: &[f32]) -> f64 {
    match metric {
        DistanceMetric::L2 => a
            .iter()
            .zip(b)
            .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
            .sum::<f64>()
            .sqrt(),
        DistanceMetric::L1 => a
            .iter()
            .zip(b)
            .map(|(&x, &y)| (x as f64 - y as f64).abs())
            .sum(),
        DistanceMetric::Cosine => {
            let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
            let na: f64 = a.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            1.0 - dot / (na * nb)
        }
    }
}

/// Every distance from `query` to the rows of `refs`, ascending.
pub fn sorted_distances(metric: DistanceMetric, query: &[f32], refs: &[f32], c: usize) -> Vec<f64> {
    let mut d: Vec<f64> = refs
        .chunks_exact(c)
        .map(|r| naive_distance(metric, query, r))
        .collect();
    d.sort_by(f64::total_cmp);
    d
}

/// Full-sort kNN oracle: mean of the `k` smallest distances per query.
pub fn knn_oracle(
    metric: DistanceMetric,
    queries: &[f32],
    refs: &[f32],
    c: usize,
    k: usize,
) -> Vec<f64> {
    queries
        .chunks_exact(c)
        .map(|q| {
            sorted_distances(metric, q, refs, c)[..k]
                .iter()
                .sum::<f64>()
                / k as f64
        })
        .collect()
}

/// Threshold-enumeration AP: every distinct score is a threshold.
pub fn ap_oracle(scores: &[f64], labels: &[bool]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let positives = labels.iter().filter(|&&l| l).count() as f64;
    let (mut ap, mut prev_recall) = (0.0, 0.0);
    for t in thresholds {
        let (mut tp, mut fp) = (0usize, 0usize);
        for (&s, &l) in scores.iter().zip(labels) {
            if s >= t {
                if l {
                    tp += 1
                } else {
                    fp += 1
                }
            }
        }
        let recall = tp as f64 / positives;
        ap += (recall - prev_recall) * (tp as f64 / (tp + fp) as f64);
        prev_recall = recall;
    }
    ap
}

/// FPR at the highest threshold reaching TPR >= 0.95, decided in integers.
pub fn fpr95_oracle(scores: &[f64], labels: &[bool]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    for t in thresholds {
        let tp = scores
            .iter()
            .zip(labels)
            .filter(|(&s, &l)| l && s >= t)
            .count();
        if 20 * tp >= 19 * positives {
            let fp = scores
                .iter()
                .zip(labels)
                .filter(|(&s, &l)| !l && s >= t)
                .count();
            return fp as f64 / negatives as f64;
        }
    }
    unreachable!("lowest threshold has TPR 1")
}

/// Pairwise AUROC, ties counted one half.
pub fn auroc_oracle(scores: &[f64], labels: &[bool]) -> f64 {
    let pos: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(&s, _)| s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| !l)
        .map(|(&s, _)| s)
        .collect();
    let mut twice: u128 = 0;
    for &p in &pos {
        for &n in &neg {
            twice += match p.partial_cmp(&n).unwrap() {
                std::cmp::Ordering::Greater => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Less => 0,
            };
        }
    }
    twice as f64 / (2 * pos.len() as u128 * neg.len() as u128) as f64
}

/// Largest distance from any point to its nearest selected point.
pub fn coverage_radius_oracle(points: &[f32], c: usize, selected: &[Vec<f32>]) -> f64 {
    points
        .chunks_exact(c)
        .map(|p| {
            selected
                .iter()
                .map(|s| naive_distance(DistanceMetric::L2, p, s))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

fn combinations(
    n: usize,
    k: usize,
    start: usize,
    current: &mut Vec<usize>,
    visit: &mut dyn FnMut(&[usize]),
) {
    if current.len() == k {
        visit(current);
        return;
    }
    for i in start..n {
        if n - i < k - current.len() {
            break;
        }
        current.push(i);
        combinations(n, k, i + 1, current, visit);
        current.pop();
    }
}

/// Optimal k-center radius by exhaustive search over centers drawn from
/// the points themselves.
pub fn optimal_k_center_radius(points: &[f32], c: usize, budget: usize) -> f64 {
    let n = points.len() / c;
    let rows: Vec<Vec<f32>> = points.chunks_exact(c).map(<[f32]>::to_vec).collect();
    let mut best = f64::INFINITY;
    combinations(n, budget, 0, &mut Vec::new(), &mut |subset| {
        let centers: Vec<Vec<f32>> = subset.iter().map(|&i| rows[i].clone()).collect();
        best = best.min(coverage_radius_oracle(points, c, &centers));
    });
    best
}

/// Proportional split with the remainder handed out by descending class
/// size, written independently of the library.
pub fn allocation_oracle(sizes: &[usize], budget: usize) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    if budget >= total {
        return sizes.to_vec();
    }
    let mut alloc: Vec<usize> = sizes.iter().map(|&s| s * budget / total).collect();
    let mut left = budget - alloc.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(sizes[i]), i));
    while left > 0 {
        for &i in &order {
            if left > 0 && alloc[i] < sizes[i] {
                alloc[i] += 1;
                left -= 1;
            }
        }
    }
    alloc
}
