//! Nearest-neighbor search in Euclidean space.
//!
//! Exact brute force for small reference sets; above [`EXACT_LIMIT`] rows a
//! random-projection index restricts the scan to points that land near the query
//! on a few random lines.

use alloc::vec::Vec;

use crate::matrix::Matrix;
use crate::rng::{fill_standard_normal, stream};

pub const EXACT_LIMIT: usize = 50_000;
const PROJECTIONS: usize = 4;
const WINDOW: usize = 128;

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the closest row of `points` to `query` (ties to the smaller index).
pub fn brute_force_nearest(points: &Matrix, query: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, row) in points.iter_rows().enumerate() {
        let d = squared_distance(row, query);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i)
}

struct Projection {
    direction: Vec<f64>,
    /// (projected value, row) sorted by value.
    sorted: Vec<(f64, usize)>,
}

pub struct NearestNeighbors<'a> {
    points: &'a Matrix,
    projections: Vec<Projection>,
}

impl<'a> NearestNeighbors<'a> {
    pub fn new(points: &'a Matrix, seed: u64) -> Self {
        Self::with_limit(points, seed, EXACT_LIMIT)
    }

    /// Uses the approximate index when `points` has more than `limit` rows.
    pub fn with_limit(points: &'a Matrix, seed: u64, limit: usize) -> Self {
        let mut projections = Vec::new();
        if points.rows() > limit {
            let mut rng = stream(seed);
            for _ in 0..PROJECTIONS {
                let mut direction = alloc::vec![0.0; points.cols()];
                fill_standard_normal(&mut rng, &mut direction);
                let mut sorted: Vec<(f64, usize)> =
                    points.iter_rows().enumerate().map(|(i, r)| (dot(r, &direction), i)).collect();
                sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                projections.push(Projection { direction, sorted });
            }
        }
        Self { points, projections }
    }

    pub fn is_exact(&self) -> bool {
        self.projections.is_empty()
    }

    pub fn nearest(&self, query: &[f64]) -> Option<usize> {
        if self.is_exact() {
            return brute_force_nearest(self.points, query);
        }
        let mut best: Option<(usize, f64)> = None;
        for p in &self.projections {
            let v = dot(query, &p.direction);
            let pos = p.sorted.partition_point(|(x, _)| *x < v);
            let lo = pos.saturating_sub(WINDOW);
            let hi = (pos + WINDOW).min(p.sorted.len());
            for &(_, i) in &p.sorted[lo..hi] {
                let d = squared_distance(self.points.row(i), query);
                if best.is_none_or(|(bi, bd)| d < bd || (d == bd && i < bi)) {
                    best = Some((i, d));
                }
            }
        }
        best.map(|(i, _)| i)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::standard_normal;

    #[test]
    fn exact_matches() {
        let pts = Matrix::from_rows(1, [[0.1], [0.9]]).unwrap();
        let nn = NearestNeighbors::new(&pts, 0);
        assert_eq!(nn.nearest(&[0.0]), Some(0));
        assert_eq!(nn.nearest(&[1.0]), Some(1));
        assert_eq!(nn.nearest(&[0.5]), Some(0));
        let empty = Matrix::zeros(0, 1);
        assert_eq!(NearestNeighbors::new(&empty, 0).nearest(&[0.0]), None);
    }

    #[test]
    fn approximate_index_finds_near_points() {
        let mut rng = stream(9);
        let rows: Vec<[f64; 3]> = (0..2000).map(|_| [standard_normal(&mut rng), standard_normal(&mut rng), standard_normal(&mut rng)]).collect();
        let pts = Matrix::from_rows(3, rows).unwrap();
        let nn = NearestNeighbors::with_limit(&pts, 1, 100);
        assert!(!nn.is_exact());
        // every stored point is its own nearest neighbor
        for i in (0..2000).step_by(37) {
            assert_eq!(nn.nearest(pts.row(i)), Some(i));
        }
    }
}
