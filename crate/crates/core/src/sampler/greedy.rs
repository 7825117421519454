use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::knn::squared_l2;

const UPDATE_CHUNK: usize = 4096;

/// Farthest-point selection of `budget` rows from a row-major point matrix.
///
/// Starts at `start`, then repeatedly adds the row whose squared L2 distance
/// to the selected set is largest (lowest row index on ties). Returns the
/// selected row indices in selection order. Runs in `O(budget · P · C)` with
/// incremental minimum-distance updates.
pub fn greedy_k_center(points: &[f32], channels: usize, budget: usize, start: usize) -> Vec<usize> {
    let p = points.len() / channels;
    assert!(start < p, "start row {start} out of range for {p} points");
    let budget = budget.min(p);
    let mut selected = Vec::with_capacity(budget);
    // Selected rows sit at -inf so they are never picked again, even when
    // every remaining row duplicates a selected one.
    let mut min_dist = vec![f64::INFINITY; p];
    let mut next = start;
    while selected.len() < budget {
        selected.push(next);
        min_dist[next] = f64::NEG_INFINITY;
        if selected.len() == budget {
            break;
        }
        let center = &points[next * channels..(next + 1) * channels];
        next = min_dist
            .par_chunks_mut(UPDATE_CHUNK)
            .enumerate()
            .map(|(chunk, dists)| {
                let offset = chunk * UPDATE_CHUNK;
                let mut best = (f64::NEG_INFINITY, usize::MAX);
                for (i, d) in dists.iter_mut().enumerate() {
                    let row = offset + i;
                    let candidate =
                        squared_l2(&points[row * channels..(row + 1) * channels], center);
                    if candidate < *d {
                        *d = candidate;
                    }
                    if *d > best.0 {
                        best = (*d, row);
                    }
                }
                best
            })
            .reduce(
                || (f64::NEG_INFINITY, usize::MAX),
                |a, b| {
                    if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                        b
                    } else {
                        a
                    }
                },
            )
            .1;
    }
    selected
}

/// Largest distance from any point to its nearest selected point.
pub fn coverage_radius(points: &[f32], channels: usize, selected: &[usize]) -> f64 {
    points
        .chunks_exact(channels)
        .map(|p| {
            selected
                .iter()
                .map(|&s| squared_l2(p, &points[s * channels..(s + 1) * channels]))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
        .sqrt()
}

/// Projects rows onto `dim` Gaussian directions scaled by `1/sqrt(dim)`.
pub fn random_projection(points: &[f32], channels: usize, dim: usize, seed: u64) -> Vec<f32> {
    let rows = points.len() / channels;
    let scale = 1.0 / (dim as f32).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let matrix: Vec<f32> = (0..channels * dim)
        .map(|_| {
            let g: f32 = StandardNormal.sample(&mut rng);
            g * scale
        })
        .collect();
    let mut out = vec![0.0f32; rows * dim];
    // SAFETY: points is rows x channels, matrix is channels x dim, out is
    // rows x dim, all row-major with matching strides.
    unsafe {
        matrixmultiply::sgemm(
            rows,
            channels,
            dim,
            1.0,
            points.as_ptr(),
            channels as isize,
            1,
            matrix.as_ptr(),
            dim as isize,
            1,
            0.0,
            out.as_mut_ptr(),
            dim as isize,
            1,
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_never_reselected() {
        let points = [1.0f32, 1.0, 1.0, 1.0];
        assert_eq!(greedy_k_center(&points, 1, 4, 2), vec![2, 0, 1, 3]);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        // 2 and 6 are both at distance 2 from 4
        let points = [2.0f32, 4.0, 6.0];
        assert_eq!(greedy_k_center(&points, 1, 2, 1), vec![1, 0]);
    }

    #[test]
    fn radius_of_full_selection_is_zero() {
        let points = [0.0f32, 0.0, 3.0, 4.0];
        assert_eq!(coverage_radius(&points, 2, &[0, 1]), 0.0);
        assert_eq!(coverage_radius(&points, 2, &[0]), 5.0);
    }

    #[test]
    fn projection_is_seeded() {
        let points: Vec<f32> = (0..40).map(|i| i as f32).collect();
        let a = random_projection(&points, 8, 3, 1);
        assert_eq!(a.len(), 15);
        assert_eq!(a, random_projection(&points, 8, 3, 1));
        assert_ne!(a, random_projection(&points, 8, 3, 2));
    }
}
