//! Relationship-aware latent learning.
//!
//! For each foreign-key edge a diagonal GMM is fitted on the joint space
//! `(child features ; lambda * parent features)`. Child rows get their most responsible
//! component; each foreign-key group then votes, and the mode becomes the latent label
//! of the parent row and of every child in the group.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encode::{encode_table, fit_transforms, ColumnTransform};
use crate::error::{Error, Result};
use crate::math::{exp, ln, log_sum_exp, sqrt};
use crate::matrix::{Matrix, UnifiedMatrix};
use crate::rng::{derive_seed_str, stream};
use crate::schema::{fk_row_map, groups_from_map, ConstraintGraph, Database, ForeignKeyEdge, TableData, TopoDirection};

pub const VARIANCE_FLOOR: f64 = 1e-6;
pub const MAX_EM_ITERATIONS: usize = 200;
/// Convergence threshold on the change of mean per-row log-likelihood.
pub const EM_TOLERANCE: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Diagonal-covariance Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub k: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub feature_dim: usize,
    pub parent_scale: f64,
    /// Mean per-row log-likelihood after each E-step.
    pub log_likelihood_trace: Vec<f64>,
}

impl GmmModel {
    /// `ln pi_c + ln N(h; mu_c, diag(sigma2_c))` for every component.
    pub fn component_log_densities(&self, h: &[f64], out: &mut [f64]) {
        for c in 0..self.k {
            let mut acc = ln(self.weights[c]);
            for ((x, m), v) in h.iter().zip(&self.means[c]).zip(&self.variances[c]) {
                let d = x - m;
                acc -= 0.5 * (LN_2PI + ln(*v) + d * d / v);
            }
            out[c] = acc;
        }
    }

    /// Most responsible component (ties to the smaller index).
    pub fn assign(&self, h: &[f64]) -> u32 {
        let mut dens = vec![0.0; self.k];
        self.component_log_densities(h, &mut dens);
        let mut best = 0;
        for c in 1..self.k {
            if dens[c] > dens[best] {
                best = c;
            }
        }
        best as u32
    }

    /// Mean per-row log-likelihood of `h`.
    pub fn mean_log_likelihood(&self, h: &Matrix) -> f64 {
        let mut dens = vec![0.0; self.k];
        let mut total = 0.0;
        for row in h.iter_rows() {
            self.component_log_densities(row, &mut dens);
            total += log_sum_exp(&dens);
        }
        total / h.rows().max(1) as f64
    }
}

/// Joint matrix with one row per child: child features followed by `lambda`-scaled
/// features of the referenced parent row.
pub fn build_joint(child: &Matrix, parent: &Matrix, fk_map: &[usize], parent_scale: f64) -> Result<Matrix> {
    if parent_scale < 0.0 || !parent_scale.is_finite() {
        return Err(Error::BadRange(format!("parent scale must be >= 0, got {parent_scale}")));
    }
    if fk_map.len() != child.rows() {
        return Err(Error::DimensionMismatch { expected: child.rows(), got: fk_map.len() });
    }
    let cols = child.cols() + parent.cols();
    let mut h = Matrix::zeros(child.rows(), cols);
    for (i, &p) in fk_map.iter().enumerate() {
        if p >= parent.rows() {
            return Err(Error::OrphanChildRow { table: String::new(), row: i });
        }
        let row = h.row_mut(i);
        row[..child.cols()].copy_from_slice(child.row(i));
        for (dst, src) in row[child.cols()..].iter_mut().zip(parent.row(p)) {
            *dst = parent_scale * src;
        }
    }
    Ok(h)
}

fn kmeans_pp_centers<R: Rng + ?Sized>(h: &Matrix, k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = h.rows();
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(h.row(rng.random_range(0..n)).to_vec());
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut d2: Vec<f64> = h.iter_rows().map(|r| sq(r, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random_range(0.0..total);
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        let c = h.row(pick).to_vec();
        for (i, row) in h.iter_rows().enumerate() {
            d2[i] = d2[i].min(sq(row, &c));
        }
        centers.push(c);
    }
    centers
}

/// EM for a diagonal GMM with k-means++ initialization (one restart).
///
/// Stops when the mean per-row log-likelihood improves by less than [`EM_TOLERANCE`] or
/// after [`MAX_EM_ITERATIONS`] E-steps.
pub fn fit_gmm(h: &Matrix, k: usize, seed: u64) -> Result<GmmModel> {
    let n = h.rows();
    let dim = h.cols();
    if k == 0 {
        return Err(Error::BadRange(String::from("cluster count must be at least 1")));
    }
    if n < k {
        return Err(Error::InsufficientRows { needed: k, got: n });
    }
    let mut rng = stream(seed);
    let means = kmeans_pp_centers(h, k, &mut rng);
    let col_mean: Vec<f64> = (0..dim).map(|j| h.iter_rows().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let col_var: Vec<f64> = (0..dim)
        .map(|j| (h.iter_rows().map(|r| (r[j] - col_mean[j]) * (r[j] - col_mean[j])).sum::<f64>() / n as f64).max(VARIANCE_FLOOR))
        .collect();
    let mut model = GmmModel {
        k,
        weights: vec![1.0 / k as f64; k],
        means,
        variances: vec![col_var; k],
        feature_dim: dim,
        parent_scale: 1.0,
        log_likelihood_trace: Vec::new(),
    };

    let mut resp = Matrix::zeros(n, k);
    let mut dens = vec![0.0; k];
    for _ in 0..MAX_EM_ITERATIONS {
        // E-step
        let mut total = 0.0;
        for (i, row) in h.iter_rows().enumerate() {
            model.component_log_densities(row, &mut dens);
            let lse = log_sum_exp(&dens);
            total += lse;
            for (r, d) in resp.row_mut(i).iter_mut().zip(&dens) {
                *r = exp(d - lse);
            }
        }
        let ll = total / n as f64;
        let converged = model.log_likelihood_trace.last().is_some_and(|prev| ll - prev < EM_TOLERANCE);
        model.log_likelihood_trace.push(ll);
        if converged {
            break;
        }
        // M-step
        for c in 0..k {
            let nc: f64 = (0..n).map(|i| resp.get(i, c)).sum();
            model.weights[c] = nc / n as f64;
            if nc <= 0.0 {
                continue;
            }
            let mut mu = vec![0.0; dim];
            for (i, row) in h.iter_rows().enumerate() {
                let r = resp.get(i, c);
                for (m, x) in mu.iter_mut().zip(row) {
                    *m += r * x;
                }
            }
            mu.iter_mut().for_each(|m| *m /= nc);
            let mut var = vec![0.0; dim];
            for (i, row) in h.iter_rows().enumerate() {
                let r = resp.get(i, c);
                for ((v, x), m) in var.iter_mut().zip(row).zip(&mu) {
                    *v += r * (x - m) * (x - m);
                }
            }
            var.iter_mut().for_each(|v| *v = (*v / nc).max(VARIANCE_FLOOR));
            model.means[c] = mu;
            model.variances[c] = var;
        }
    }
    order_components(&mut model);
    Ok(model)
}

/// Relabels components by the projection of their means on the leading principal axis
/// of the (weight-averaged) means.
///
/// Labels are later diffused as numeric codes, and sampled codes spill into neighbouring
/// ones; with this order neighbouring codes are the most similar components.
fn order_components(model: &mut GmmModel) {
    let (k, dim) = (model.k, model.feature_dim);
    if k < 2 || dim == 0 {
        return;
    }
    let centre: Vec<f64> = (0..dim).map(|j| (0..k).map(|c| model.weights[c] * model.means[c][j]).sum()).collect();
    let dev: Vec<Vec<f64>> = model.means.iter().map(|m| m.iter().zip(&centre).map(|(a, b)| a - b).collect()).collect();
    let mut cov = vec![0.0; dim * dim];
    for (c, d) in dev.iter().enumerate() {
        for i in 0..dim {
            for j in 0..dim {
                cov[i * dim + j] += model.weights[c] * d[i] * d[j];
            }
        }
    }
    let norm = |v: &[f64]| sqrt(v.iter().map(|x| x * x).sum::<f64>());
    // power iteration from the most outlying component's direction
    let far = (0..k).max_by(|&a, &b| norm(&dev[a]).total_cmp(&norm(&dev[b])).then(b.cmp(&a))).unwrap_or(0);
    let mut axis = dev[far].clone();
    if norm(&axis) == 0.0 {
        return;
    }
    for _ in 0..100 {
        let next: Vec<f64> = (0..dim).map(|i| (0..dim).map(|j| cov[i * dim + j] * axis[j]).sum()).collect();
        let n = norm(&next);
        if n == 0.0 {
            break;
        }
        axis = next.into_iter().map(|x| x / n).collect();
    }
    let lead = (0..dim).max_by(|&a, &b| axis[a].abs().total_cmp(&axis[b].abs()).then(b.cmp(&a))).unwrap_or(0);
    if axis[lead] < 0.0 {
        axis.iter_mut().for_each(|x| *x = -*x);
    }
    let score: Vec<f64> = dev.iter().map(|d| d.iter().zip(&axis).map(|(a, b)| a * b).sum()).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| score[a].total_cmp(&score[b]).then(a.cmp(&b)));
    model.weights = order.iter().map(|&c| model.weights[c]).collect();
    model.means = order.iter().map(|&c| model.means[c].clone()).collect();
    model.variances = order.iter().map(|&c| model.variances[c].clone()).collect();
}

/// Voted latent labels for one foreign-key edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentAssignment {
    pub edge: ForeignKeyEdge,
    /// Number of GMM components; label `k` marks childless parents.
    pub k: usize,
    pub parent_labels: Vec<u32>,
    pub child_labels: Vec<u32>,
    /// Pre-vote labels.
    pub raw_child_labels: Vec<u32>,
    /// `m_g / |g|` for each non-empty group, in parent row order.
    pub agree_rates: Vec<f64>,
}

impl LatentAssignment {
    pub fn sentinel(&self) -> u32 {
        self.k as u32
    }

    /// Mean agree rate over groups (1.0 when there are no groups).
    pub fn avg_agree_rate(&self) -> f64 {
        if self.agree_rates.is_empty() {
            1.0
        } else {
            self.agree_rates.iter().sum::<f64>() / self.agree_rates.len() as f64
        }
    }
}

/// Argmax labels for every child row, then a majority vote within each foreign-key group
/// (ties to the smaller label). Childless parents receive the sentinel label `k`.
pub fn assign_and_vote(model: &GmmModel, h: &Matrix, fk_map: &[usize], parent_rows: usize, edge: ForeignKeyEdge) -> Result<LatentAssignment> {
    if h.cols() != model.feature_dim {
        return Err(Error::DimensionMismatch { expected: model.feature_dim, got: h.cols() });
    }
    if fk_map.len() != h.rows() {
        return Err(Error::DimensionMismatch { expected: h.rows(), got: fk_map.len() });
    }
    let raw: Vec<u32> = h.iter_rows().map(|r| model.assign(r)).collect();
    let groups = groups_from_map(fk_map, parent_rows);
    let sentinel = model.k as u32;
    let mut parent_labels = vec![sentinel; parent_rows];
    let mut agree_rates = Vec::new();
    let mut counts = vec![0usize; model.k];
    for (p, group) in groups.iter().enumerate() {
        if group.is_empty() {
            continue;
        }
        counts.iter_mut().for_each(|c| *c = 0);
        for &child in group {
            counts[raw[child] as usize] += 1;
        }
        let mut mode = 0;
        for c in 1..model.k {
            if counts[c] > counts[mode] {
                mode = c;
            }
        }
        parent_labels[p] = mode as u32;
        agree_rates.push(counts[mode] as f64 / group.len() as f64);
    }
    let child_labels = fk_map.iter().map(|&p| parent_labels[p]).collect();
    Ok(LatentAssignment { edge, k: model.k, parent_labels, child_labels, raw_child_labels: raw, agree_rates })
}

/// A latent label column attached to an augmented table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentColumn {
    pub edge: ForeignKeyEdge,
    pub name: String,
    pub k: usize,
    pub labels: Vec<u32>,
}

impl LatentColumn {
    pub fn transform(&self) -> ColumnTransform {
        ColumnTransform::latent(self.name.clone(), self.k)
    }
}

/// Column name of the latent label for an edge.
pub fn latent_column_name(edge: &ForeignKeyEdge) -> String {
    format!("__latent__{}__{}", edge.child, edge.fk_column)
}

/// A table with its latent columns.
///
/// `child_latents` (one per edge where this table is the parent) form the augmented
/// parent table `T`; `parent_latents` (one per edge where it is the child) form `T'`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedTable {
    pub table: TableData,
    pub transforms: Vec<ColumnTransform>,
    pub child_latents: Vec<LatentColumn>,
    pub parent_latents: Vec<LatentColumn>,
}

impl AugmentedTable {
    pub fn new(table: TableData) -> Result<Self> {
        let transforms = fit_transforms(&table)?;
        Ok(Self { table, transforms, child_latents: Vec::new(), parent_latents: Vec::new() })
    }

    /// Encoded raw (non-key) features.
    pub fn encoded_features(&self) -> Result<UnifiedMatrix> {
        encode_table(&self.table, &self.transforms)
    }

    /// Transforms of the augmented table `T`: raw features, then child latents.
    pub fn augmented_transforms(&self) -> Vec<ColumnTransform> {
        self.transforms.iter().cloned().chain(self.child_latents.iter().map(LatentColumn::transform)).collect()
    }

    /// Encoded augmented table `T`: raw features followed by child latent codes.
    pub fn encoded_augmented(&self) -> Result<UnifiedMatrix> {
        let mut m = self.encoded_features()?;
        if self.child_latents.is_empty() {
            return Ok(m);
        }
        let mut codes = Matrix::zeros(m.rows(), self.child_latents.len());
        for (j, lat) in self.child_latents.iter().enumerate() {
            for (i, &l) in lat.labels.iter().enumerate() {
                codes.set(i, j, f64::from(l));
            }
            m.column_order.push(lat.name.clone());
        }
        m.values = m.values.hstack(&codes)?;
        Ok(m)
    }
}

/// Output of latent learning over a whole database.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Augmentation {
    pub tables: BTreeMap<String, AugmentedTable>,
    pub latents: Vec<(GmmModel, LatentAssignment)>,
}

impl Augmentation {
    pub fn latent_for(&self, edge: &ForeignKeyEdge) -> Option<&(GmmModel, LatentAssignment)> {
        self.latents.iter().find(|(_, a)| &a.edge == edge)
    }
}

/// Latent learning and table augmentation over all edges in bottom-up order.
///
/// For edge `(i -> j)` the clustering joins the already-augmented child `T_i` with the raw
/// parent `R_j`. `k_for` gives the cluster count per edge; it is capped at the child row count.
pub fn augment_tables(
    db: &Database,
    graph: &ConstraintGraph,
    parent_scale: f64,
    k_for: &dyn Fn(&ForeignKeyEdge) -> usize,
    seed: u64,
) -> Result<Augmentation> {
    let mut tables = BTreeMap::new();
    for name in graph.nodes() {
        tables.insert(name.clone(), AugmentedTable::new(db.table(name)?.clone())?);
    }
    let mut latents = Vec::new();
    for edge in graph.topo_order(TopoDirection::BottomUp)? {
        let fk_map = fk_row_map(db, &edge)?;
        let child = tables[&edge.child].encoded_augmented()?;
        let parent = tables[&edge.parent].encoded_features()?;
        let h = build_joint(&child.values, &parent.values, &fk_map, parent_scale).map_err(|e| match e {
            Error::OrphanChildRow { row, .. } => Error::OrphanChildRow { table: edge.child.clone(), row },
            other => other,
        })?;
        let requested = k_for(&edge);
        let k = requested.min(h.rows()).max(1);
        if k != requested {
            log::warn!("edge {edge}: only {} child rows, using k = {k} instead of {requested}", h.rows());
        }
        let mut gmm = fit_gmm(&h, k, derive_seed_str(seed, &format!("gmm/{edge}")))?;
        gmm.parent_scale = parent_scale;
        let assignment = assign_and_vote(&gmm, &h, &fk_map, parent.rows(), edge.clone())?;
        log::info!("edge {edge}: k = {k}, avg agree rate {:.3}", assignment.avg_agree_rate());
        let name = latent_column_name(&edge);
        tables.get_mut(&edge.parent).expect("node").child_latents.push(LatentColumn {
            edge: edge.clone(),
            name: name.clone(),
            k,
            labels: assignment.parent_labels.clone(),
        });
        tables.get_mut(&edge.child).expect("node").parent_latents.push(LatentColumn {
            edge: edge.clone(),
            name,
            k,
            labels: assignment.child_labels.clone(),
        });
        latents.push((gmm, assignment));
    }
    Ok(Augmentation { tables, latents })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::standard_normal;

    fn edge() -> ForeignKeyEdge {
        ForeignKeyEdge::new("c", "p_id", "p")
    }

    #[test]
    fn joint_scaling() {
        let child = Matrix::from_rows(1, [[1.0]]).unwrap();
        let parent = Matrix::from_rows(1, [[2.0]]).unwrap();
        assert_eq!(build_joint(&child, &parent, &[0], 1.0).unwrap().row(0), &[1.0, 2.0]);
        assert_eq!(build_joint(&child, &parent, &[0], 1.5).unwrap().row(0), &[1.0, 3.0]);
        assert_eq!(build_joint(&child, &parent, &[0], 0.0).unwrap().row(0), &[1.0, 0.0]);
        assert!(matches!(build_joint(&child, &parent, &[3], 1.0), Err(Error::OrphanChildRow { row: 0, .. })));
    }

    #[test]
    fn single_component_closed_form() {
        let h = Matrix::from_rows(2, [[1.0, 5.0], [3.0, 5.0], [5.0, 5.0]]).unwrap();
        let m = fit_gmm(&h, 1, 0).unwrap();
        assert_eq!(m.weights, vec![1.0]);
        assert!((m.means[0][0] - 3.0).abs() < 1e-12 && (m.means[0][1] - 5.0).abs() < 1e-12);
        assert!((m.variances[0][0] - 8.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.variances[0][1], VARIANCE_FLOOR);
    }

    fn blobs() -> (Matrix, Vec<u32>) {
        let mut rng = stream(42);
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for i in 0..100 {
            let centre = if i < 50 { -10.0 } else { 10.0 };
            rows.push([centre + 0.05 * standard_normal(&mut rng)]);
            truth.push(u32::from(i >= 50));
        }
        (Matrix::from_rows(1, rows).unwrap(), truth)
    }

    /// Two-component EM started from the true labels.
    fn oracle_em(h: &Matrix, truth: &[u32]) -> [f64; 2] {
        let mut mu = [0.0; 2];
        for c in 0..2 {
            let v: Vec<f64> = h.iter_rows().zip(truth).filter(|(_, &t)| t == c as u32).map(|(r, _)| r[0]).collect();
            mu[c] = v.iter().sum::<f64>() / v.len() as f64;
        }
        mu
    }

    #[test]
    fn separated_blobs_recovered() {
        let (h, truth) = blobs();
        let m = fit_gmm(&h, 2, 7).unwrap();
        let oracle = oracle_em(&h, &truth);
        let mut means: Vec<f64> = m.means.iter().map(|v| v[0]).collect();
        means.sort_by(f64::total_cmp);
        assert!((means[0] - oracle[0]).abs() < 0.5 && (means[1] - oracle[1]).abs() < 0.5);
        assert!((means[0] + 10.0).abs() < 0.5 && (means[1] - 10.0).abs() < 0.5);
        let labels: Vec<u32> = h.iter_rows().map(|r| m.assign(r)).collect();
        let agree = labels.iter().zip(&truth).filter(|(a, b)| a == b).count();
        let purity = agree.max(100 - agree) as f64 / 100.0;
        assert!(purity >= 0.99);
    }

    #[test]
    fn labels_follow_the_principal_axis() {
        let mut rng = stream(5);
        let centres = [[4.0, 4.0], [-8.0, -8.0], [0.0, 0.0], [8.0, 8.0], [-4.0, -4.0]];
        let rows: Vec<[f64; 2]> = (0..250)
            .map(|i| {
                let c = centres[i % 5];
                [c[0] + 0.1 * standard_normal(&mut rng), c[1] + 0.1 * standard_normal(&mut rng)]
            })
            .collect();
        let m = fit_gmm(&Matrix::from_rows(2, rows).unwrap(), 5, 1).unwrap();
        let xs: Vec<f64> = m.means.iter().map(|v| v[0]).collect();
        assert!(xs.windows(2).all(|w| w[0] < w[1]), "{xs:?}");
    }

    #[test]
    fn em_trace_monotone() {
        let mut rng = stream(3);
        let rows: Vec<[f64; 2]> = (0..200).map(|_| [standard_normal(&mut rng) * 3.0, standard_normal(&mut rng)]).collect();
        let h = Matrix::from_rows(2, rows).unwrap();
        let m = fit_gmm(&h, 4, 1).unwrap();
        for w in m.log_likelihood_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-8, "{w:?}");
        }
        assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(m.variances.iter().flatten().all(|&v| v >= VARIANCE_FLOOR));
    }

    #[test]
    fn insufficient_rows() {
        let h = Matrix::from_rows(1, [[1.0]]).unwrap();
        assert_eq!(fit_gmm(&h, 2, 0).unwrap_err(), Error::InsufficientRows { needed: 2, got: 1 });
    }

    fn fixed_model(k: usize, means: &[f64]) -> GmmModel {
        GmmModel {
            k,
            weights: vec![1.0 / k as f64; k],
            means: means.iter().map(|&m| vec![m]).collect(),
            variances: vec![vec![0.01]; k],
            feature_dim: 1,
            parent_scale: 1.0,
            log_likelihood_trace: vec![],
        }
    }

    #[test]
    fn voting_mode_and_agree_rate() {
        // components at 0,1,2,3; a group whose raw labels are [2,2,3]
        let m = fixed_model(4, &[0.0, 1.0, 2.0, 3.0]);
        let h = Matrix::from_rows(1, [[2.0], [2.1], [3.0], [1.0], [2.0]]).unwrap();
        let a = assign_and_vote(&m, &h, &[0, 0, 0, 1, 1], 3, edge()).unwrap();
        assert_eq!(a.raw_child_labels, vec![2, 2, 3, 1, 2]);
        assert_eq!(a.parent_labels, vec![2, 1, 4]);
        assert!((a.agree_rates[0] - 2.0 / 3.0).abs() < 1e-15);
        // tie [1,2] -> 1
        assert_eq!(a.agree_rates[1], 0.5);
        assert_eq!(a.child_labels, vec![2, 2, 2, 1, 1]);
        assert_eq!(a.parent_labels[2], a.sentinel());
    }

    #[test]
    fn single_cluster_agrees_fully() {
        let m = fixed_model(1, &[0.0]);
        let h = Matrix::from_rows(1, [[2.0], [-5.0], [3.0]]).unwrap();
        let a = assign_and_vote(&m, &h, &[0, 0, 1], 2, edge()).unwrap();
        assert!(a.agree_rates.iter().all(|&r| r == 1.0));
        assert_eq!(a.avg_agree_rate(), 1.0);
    }

    #[test]
    fn vote_dimension_mismatch() {
        let m = fixed_model(1, &[0.0]);
        let h = Matrix::from_rows(2, [[2.0, 1.0]]).unwrap();
        assert!(matches!(assign_and_vote(&m, &h, &[0], 1, edge()), Err(Error::DimensionMismatch { .. })));
    }
}
