//! Empirical foreign-key group-size distributions conditioned on the parent latent label.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::LatentAssignment;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSizeModel {
    /// Label reserved for childless parents.
    pub sentinel: u32,
    /// label -> (size -> count)
    pub histograms: BTreeMap<u32, BTreeMap<usize, u64>>,
}

impl GroupSizeModel {
    pub fn from_sizes(sentinel: u32, labels: &[u32], sizes: &[usize]) -> Result<Self> {
        if labels.len() != sizes.len() {
            return Err(Error::DimensionMismatch { expected: labels.len(), got: sizes.len() });
        }
        let mut histograms: BTreeMap<u32, BTreeMap<usize, u64>> = BTreeMap::new();
        for (&l, &s) in labels.iter().zip(sizes) {
            *histograms.entry(l).or_default().entry(s).or_insert(0) += 1;
        }
        Ok(Self { sentinel, histograms })
    }

    pub fn is_seen(&self, label: u32) -> bool {
        label == self.sentinel || self.histograms.contains_key(&label)
    }

    /// Labels with real support, excluding the sentinel.
    pub fn seen_labels(&self) -> Vec<u32> {
        self.histograms.keys().copied().filter(|&l| l != self.sentinel).collect()
    }

    pub fn total(&self, label: u32) -> u64 {
        self.histograms.get(&label).map_or(0, |h| h.values().sum())
    }

    /// `p(size | label)`; zero for unseen labels.
    pub fn probability(&self, label: u32, size: usize) -> f64 {
        if label == self.sentinel {
            return if size == 0 { 1.0 } else { 0.0 };
        }
        match self.histograms.get(&label) {
            Some(h) => h.get(&size).copied().unwrap_or(0) as f64 / self.total(label) as f64,
            None => 0.0,
        }
    }

    /// Expected group size under `p(s | label)`.
    pub fn mean(&self, label: u32) -> Option<f64> {
        if label == self.sentinel {
            return Some(0.0);
        }
        let h = self.histograms.get(&label)?;
        let n = self.total(label) as f64;
        Some(h.iter().map(|(&s, &c)| s as f64 * c as f64).sum::<f64>() / n)
    }

    /// Variance of the group size under `p(s | label)`.
    pub fn variance(&self, label: u32) -> Option<f64> {
        let m = self.mean(label)?;
        if label == self.sentinel {
            return Some(0.0);
        }
        let h = &self.histograms[&label];
        let n = self.total(label) as f64;
        Some(h.iter().map(|(&s, &c)| (s as f64 - m) * (s as f64 - m) * c as f64).sum::<f64>() / n)
    }
}

/// Histogram of `|g|` given the voted parent label.
pub fn fit_group_sizes(assignment: &LatentAssignment, fk_map: &[usize]) -> GroupSizeModel {
    let mut sizes = vec![0usize; assignment.parent_labels.len()];
    for &p in fk_map {
        sizes[p] += 1;
    }
    GroupSizeModel::from_sizes(assignment.sentinel(), &assignment.parent_labels, &sizes).expect("lengths match")
}

/// Draw a group size for `label`. The sentinel always yields 0.
pub fn sample_group_size<R: Rng + ?Sized>(model: &GroupSizeModel, label: u32, rng: &mut R) -> Result<usize> {
    if label == model.sentinel {
        return Ok(0);
    }
    let hist = model.histograms.get(&label).ok_or(Error::UnseenLabel(label))?;
    let total: u64 = hist.values().sum();
    let mut u = rng.random_range(0..total);
    for (&size, &count) in hist {
        if u < count {
            return Ok(size);
        }
        u -= count;
    }
    unreachable!("draw below histogram total")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::schema::ForeignKeyEdge;

    fn assignment(parent_labels: Vec<u32>, k: usize) -> LatentAssignment {
        LatentAssignment {
            edge: ForeignKeyEdge::new("c", "p_id", "p"),
            k,
            parent_labels,
            child_labels: vec![],
            raw_child_labels: vec![],
            agree_rates: vec![],
        }
    }

    #[test]
    fn frequencies() {
        // parents 0,1,2 in cluster 0 with sizes 1,1,3; parent 3 childless
        let a = assignment(vec![0, 0, 0, 2], 2);
        let fk = [0, 1, 2, 2, 2];
        let m = fit_group_sizes(&a, &fk);
        assert_eq!(m.probability(0, 1), 2.0 / 3.0);
        assert_eq!(m.probability(0, 3), 1.0 / 3.0);
        assert_eq!(m.probability(2, 0), 1.0);
        let mut rng = stream(0);
        assert_eq!(sample_group_size(&m, 2, &mut rng).unwrap(), 0);
        assert_eq!(sample_group_size(&m, 1, &mut rng), Err(Error::UnseenLabel(1)));
    }

    #[test]
    fn deterministic_histogram() {
        let m = GroupSizeModel::from_sizes(3, &[2], &[5]).unwrap();
        assert_eq!(m.probability(2, 5), 1.0);
        let mut rng = stream(1);
        assert!((0..100).all(|_| sample_group_size(&m, 2, &mut rng).unwrap() == 5));
    }

    #[test]
    fn monte_carlo_frequencies() {
        let m = GroupSizeModel::from_sizes(9, &[0, 0, 0], &[1, 1, 3]).unwrap();
        let mut rng = stream(2);
        let n = 100_000;
        let ones = (0..n).filter(|_| sample_group_size(&m, 0, &mut rng).unwrap() == 1).count();
        assert!((ones as f64 / n as f64 - 2.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let m = GroupSizeModel::from_sizes(4, &[0, 1, 1, 0, 3, 1], &[2, 1, 7, 2, 4, 1]).unwrap();
        for l in m.seen_labels() {
            let s: f64 = m.histograms[&l].keys().map(|&s| m.probability(l, s)).sum();
            assert!((s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn reconstruction_within_three_sigma() {
        let labels: Vec<u32> = (0..300).map(|i| (i % 3) as u32).collect();
        let sizes: Vec<usize> = (0..300).map(|i| 1 + (i * 7) % 5 + (i % 3)).collect();
        let m = GroupSizeModel::from_sizes(3, &labels, &sizes).unwrap();
        let real: usize = sizes.iter().sum();
        let mut rng = stream(5);
        let drawn: usize = labels.iter().map(|&l| sample_group_size(&m, l, &mut rng).unwrap()).sum();
        let var: f64 = labels.iter().map(|&l| m.variance(l).unwrap()).sum();
        assert!((drawn as f64 - real as f64).abs() <= 3.0 * var.sqrt());
    }
}
