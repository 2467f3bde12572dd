//! Multi-table fidelity metrics.
//!
//! Every score is a complement of a distance in `[0, 1]`; [`MetricReport`] carries them
//! multiplied by 100.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{median, sqrt};
use crate::matrix::Matrix;
use crate::neighbors::NearestNeighbors;
use crate::schema::{fk_row_map, join_path_rows, ColumnData, ConstraintGraph, Database, ForeignKeyEdge, TableData};

/// Equal-frequency bins per numerical column in the pairwise metric.
pub const KHOP_BINS: usize = 20;

/// `1 - sup_x |F_a(x) - F_b(x)|`.
pub fn ks_complement(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut gap: f64 = 0.0;
    while i < a.len() || j < b.len() {
        let v = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        gap = gap.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(1.0 - gap)
}

/// `1 - 0.5 * sum_v |p_a(v) - p_b(v)|` over the union of categories.
pub fn tv_complement<K: Ord + Clone>(a: &BTreeMap<K, u64>, b: &BTreeMap<K, u64>) -> Result<f64> {
    let ta: u64 = a.values().sum();
    let tb: u64 = b.values().sum();
    if ta == 0 || tb == 0 {
        return Err(Error::EmptyHistogram);
    }
    let mut union: BTreeMap<&K, (u64, u64)> = BTreeMap::new();
    for (k, &c) in a {
        union.entry(k).or_default().0 += c;
    }
    for (k, &c) in b {
        union.entry(k).or_default().1 += c;
    }
    let tv: f64 = union.values().map(|&(ca, cb)| (ca as f64 / ta as f64 - cb as f64 / tb as f64).abs()).sum::<f64>();
    Ok((1.0 - 0.5 * tv).clamp(0.0, 1.0))
}

/// Group size of every parent row along `edge`, childless parents included as 0.
pub fn group_sizes(db: &Database, edge: &ForeignKeyEdge) -> Result<Vec<f64>> {
    let fk = fk_row_map(db, edge)?;
    let mut sizes = vec![0.0; db.table(&edge.parent)?.row_count()];
    for p in fk {
        sizes[p] += 1.0;
    }
    Ok(sizes)
}

pub fn cardinality_score(real: &Database, synth: &Database, edge: &ForeignKeyEdge) -> Result<f64> {
    ks_complement(&group_sizes(real, edge)?, &group_sizes(synth, edge)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScore {
    pub table: String,
    pub column: String,
    pub score: f64,
}

fn text_histogram(v: &[String]) -> BTreeMap<&str, u64> {
    let mut h = BTreeMap::new();
    for s in v {
        *h.entry(s.as_str()).or_insert(0) += 1;
    }
    h
}

/// KS complement per numerical column and TV complement per categorical column.
pub fn one_way_scores(real: &Database, synth: &Database) -> Result<Vec<ColumnScore>> {
    let mut out = Vec::new();
    for (name, rt) in &real.tables {
        let st = synth.table(name)?;
        for i in rt.feature_indices() {
            let col = &rt.columns[i].name;
            let score = match (&rt.data[i], st.column(col)?) {
                (ColumnData::Numerical(a), ColumnData::Numerical(b)) => ks_complement(a, b)?,
                (ColumnData::Text(a), ColumnData::Text(b)) => tv_complement(&text_histogram(a), &text_histogram(b))?,
                _ => return Err(Error::InvalidSchema(alloc::format!("column `{name}.{col}` changed type"))),
            };
            out.push(ColumnScore { table: name.clone(), column: col.clone(), score });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub table_a: String,
    pub column_a: String,
    pub table_b: String,
    pub column_b: String,
    pub score: f64,
}

/// Cut points of `KHOP_BINS` equal-frequency bins.
fn bin_edges(real: &[f64]) -> Vec<f64> {
    let mut s = real.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let mut edges: Vec<f64> = (1..KHOP_BINS).map(|q| s[(q * n / KHOP_BINS).min(n - 1)]).collect();
    edges.dedup();
    edges
}

/// Per-column discretizer fitted on the real column.
enum Discretizer {
    Bins(Vec<f64>),
    Categories(BTreeMap<String, u32>),
}

impl Discretizer {
    fn fit(real: &ColumnData, synth: &ColumnData) -> Self {
        match real {
            ColumnData::Numerical(v) => Discretizer::Bins(if v.is_empty() { Vec::new() } else { bin_edges(v) }),
            ColumnData::Text(v) => {
                let mut dict = BTreeMap::new();
                for s in v.iter().chain(synth.as_text().unwrap_or(&[])) {
                    let next = dict.len() as u32;
                    dict.entry(s.clone()).or_insert(next);
                }
                Discretizer::Categories(dict)
            }
        }
    }

    fn cells(&self, col: &ColumnData) -> Vec<u32> {
        match (self, col) {
            (Discretizer::Bins(edges), ColumnData::Numerical(v)) => {
                v.iter().map(|&x| edges.partition_point(|&e| e < x) as u32).collect()
            }
            (Discretizer::Categories(dict), ColumnData::Text(v)) => v.iter().map(|s| dict[s]).collect(),
            _ => unreachable!("column types checked by caller"),
        }
    }
}

struct CellTable {
    real: Vec<Vec<u32>>,
    synth: Vec<Vec<u32>>,
    names: Vec<String>,
}

fn discretize(real: &TableData, synth: &TableData) -> Result<CellTable> {
    let mut out = CellTable { real: Vec::new(), synth: Vec::new(), names: Vec::new() };
    for i in real.feature_indices() {
        let name = &real.columns[i].name;
        let s = synth.column(name)?;
        if core::mem::discriminant(s) != core::mem::discriminant(&real.data[i]) {
            return Err(Error::InvalidSchema(alloc::format!("column `{}.{name}` changed type", real.name)));
        }
        let d = Discretizer::fit(&real.data[i], s);
        out.real.push(d.cells(&real.data[i]));
        out.synth.push(d.cells(s));
        out.names.push(name.clone());
    }
    Ok(out)
}

fn contingency(a: &[u32], b: &[u32], pairs: &[(usize, usize)]) -> BTreeMap<(u32, u32), u64> {
    let mut h = BTreeMap::new();
    for &(i, j) in pairs {
        *h.entry((a[i], b[j])).or_insert(0) += 1;
    }
    h
}

fn pair_score(real: &BTreeMap<(u32, u32), u64>, synth: &BTreeMap<(u32, u32), u64>) -> f64 {
    if synth.is_empty() {
        0.0
    } else {
        tv_complement(real, synth).expect("non-empty histograms")
    }
}

/// Column-pair scores for tables at hop distance `k` (`k = 0`: distinct column pairs
/// within one table). Pairs whose real join is empty are skipped.
pub fn khop_scores(real: &Database, synth: &Database, graph: &ConstraintGraph, k: usize) -> Result<Vec<PairScore>> {
    let mut cells = BTreeMap::new();
    for name in graph.nodes() {
        cells.insert(name.as_str(), discretize(real.table(name)?, synth.table(name)?)?);
    }
    let mut out = Vec::new();
    let nodes = graph.nodes();
    for (ai, a) in nodes.iter().enumerate() {
        for b in &nodes[ai..] {
            if graph.hop_distance(a, b)? != Some(k) {
                continue;
            }
            let (ca, cb) = (&cells[a.as_str()], &cells[b.as_str()]);
            let (real_pairs, synth_pairs) = if k == 0 {
                let n = real.table(a)?.row_count();
                let m = synth.table(a)?.row_count();
                ((0..n).map(|i| (i, i)).collect::<Vec<_>>(), (0..m).map(|i| (i, i)).collect::<Vec<_>>())
            } else {
                (join_path_rows(real, graph, a, b)?, join_path_rows(synth, graph, a, b)?)
            };
            if real_pairs.is_empty() {
                continue;
            }
            for x in 0..ca.names.len() {
                let start = if k == 0 { x + 1 } else { 0 };
                for y in start..cb.names.len() {
                    let r = contingency(&ca.real[x], &cb.real[y], &real_pairs);
                    let s = contingency(&ca.synth[x], &cb.synth[y], &synth_pairs);
                    out.push(PairScore {
                        table_a: a.clone(),
                        column_a: ca.names[x].clone(),
                        table_b: b.clone(),
                        column_b: cb.names[y].clone(),
                        score: pair_score(&r, &s),
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Largest finite hop distance between any two tables.
pub fn max_hop_distance(graph: &ConstraintGraph) -> Result<usize> {
    let mut best = 0;
    for a in graph.nodes() {
        for b in graph.nodes() {
            if let Some(d) = graph.hop_distance(a, b)? {
                best = best.max(d);
            }
        }
    }
    Ok(best)
}

/// Mean over every pair of every hop distance.
pub fn avg_two_way(khop: &BTreeMap<usize, Vec<PairScore>>) -> Option<f64> {
    let all: Vec<f64> = khop.values().flatten().map(|p| p.score).collect();
    if all.is_empty() {
        None
    } else {
        Some(all.iter().sum::<f64>() / all.len() as f64)
    }
}

/// Median over synthetic rows of the Euclidean distance to the nearest real row.
/// Both matrices must already live in the same normalized space.
pub fn dcr_median(real: &Matrix, synth: &Matrix) -> Result<f64> {
    if real.rows() == 0 || synth.rows() == 0 {
        return Err(Error::EmptyInput);
    }
    if real.cols() != synth.cols() {
        return Err(Error::DimensionMismatch { expected: real.cols(), got: synth.cols() });
    }
    let nn = NearestNeighbors::new(real, 0);
    let d: Vec<f64> = synth
        .iter_rows()
        .map(|row| {
            let i = nn.nearest(row).expect("non-empty");
            sqrt(crate::neighbors::squared_distance(real.row(i), row))
        })
        .collect();
    Ok(median(&d).expect("non-empty"))
}

/// Feature matrices for distance-to-closest-record: numerical columns min-max scaled by
/// the real range, categorical columns one-hot over the real categories.
pub fn dcr_space(real: &TableData, synth: &TableData) -> Result<(Matrix, Matrix)> {
    let mut blocks_r: Vec<Matrix> = Vec::new();
    let mut blocks_s: Vec<Matrix> = Vec::new();
    for i in real.feature_indices() {
        let name = &real.columns[i].name;
        match (&real.data[i], synth.column(name)?) {
            (ColumnData::Numerical(a), ColumnData::Numerical(b)) => {
                let lo = a.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let range = if hi > lo { hi - lo } else { 1.0 };
                blocks_r.push(Matrix::from_vec(a.len(), 1, a.iter().map(|x| (x - lo) / range).collect())?);
                blocks_s.push(Matrix::from_vec(b.len(), 1, b.iter().map(|x| (x - lo) / range).collect())?);
            }
            (ColumnData::Text(a), ColumnData::Text(b)) => {
                let mut dict: BTreeMap<&str, usize> = BTreeMap::new();
                for s in a {
                    let next = dict.len();
                    dict.entry(s.as_str()).or_insert(next);
                }
                let one_hot = |v: &[String]| {
                    let mut m = Matrix::zeros(v.len(), dict.len());
                    for (r, s) in v.iter().enumerate() {
                        if let Some(&c) = dict.get(s.as_str()) {
                            m.set(r, c, 1.0);
                        }
                    }
                    m
                };
                blocks_r.push(one_hot(a));
                blocks_s.push(one_hot(b));
            }
            _ => return Err(Error::InvalidSchema(alloc::format!("column `{}.{name}` changed type", real.name))),
        }
    }
    let stack = |blocks: Vec<Matrix>, rows: usize| -> Result<Matrix> {
        let mut m = Matrix::zeros(rows, 0);
        for b in blocks {
            m = m.hstack(&b)?;
        }
        Ok(m)
    };
    Ok((stack(blocks_r, real.row_count())?, stack(blocks_s, synth.row_count())?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeScore {
    pub edge: ForeignKeyEdge,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KhopSummary {
    pub pairs: Vec<PairScore>,
    pub mean: Option<f64>,
}

/// All scores multiplied by 100.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub cardinality: Vec<EdgeScore>,
    pub cardinality_mean: Option<f64>,
    pub one_way: Vec<ColumnScore>,
    pub one_way_mean: Option<f64>,
    pub khop: BTreeMap<usize, KhopSummary>,
    pub avg_two_way: Option<f64>,
    pub agree_rates: Vec<EdgeScore>,
    pub dcr_median: Option<BTreeMap<String, f64>>,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Full report of `synth` against `real`. DCR medians are raw distances, not scaled.
pub fn evaluate(real: &Database, synth: &Database, graph: &ConstraintGraph, with_dcr: bool) -> Result<MetricReport> {
    let mut cardinality = Vec::new();
    for e in graph.edges() {
        cardinality.push(EdgeScore { edge: e.clone(), score: 100.0 * cardinality_score(real, synth, e)? });
    }
    let mut one_way = one_way_scores(real, synth)?;
    one_way.iter_mut().for_each(|c| c.score *= 100.0);
    let mut khop = BTreeMap::new();
    for k in 0..=max_hop_distance(graph)? {
        let mut pairs = khop_scores(real, synth, graph, k)?;
        pairs.iter_mut().for_each(|p| p.score *= 100.0);
        let m = mean(pairs.iter().map(|p| p.score));
        khop.insert(k, KhopSummary { pairs, mean: m });
    }
    let all: BTreeMap<usize, Vec<PairScore>> = khop.iter().map(|(k, s)| (*k, s.pairs.clone())).collect();
    let dcr = if with_dcr {
        let mut m = BTreeMap::new();
        for name in graph.nodes() {
            let (r, s) = dcr_space(real.table(name)?, synth.table(name)?)?;
            if r.cols() > 0 && r.rows() > 0 && s.rows() > 0 {
                m.insert(name.clone(), dcr_median(&r, &s)?);
            }
        }
        Some(m)
    } else {
        None
    };
    Ok(MetricReport {
        cardinality_mean: mean(cardinality.iter().map(|c| c.score)),
        cardinality,
        one_way_mean: mean(one_way.iter().map(|c| c.score)),
        one_way,
        avg_two_way: avg_two_way(&all),
        khop,
        agree_rates: Vec::new(),
        dcr_median: dcr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::ColumnSpec;

    #[test]
    fn ks_examples() {
        assert_eq!(ks_complement(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(ks_complement(&[0.0; 3], &[1.0; 3]).unwrap(), 0.0);
        assert_eq!(ks_complement(&[0.0, 1.0], &[0.0, 2.0]).unwrap(), 0.5);
        assert_eq!(ks_complement(&[], &[1.0]), Err(Error::EmptySample));
    }

    #[test]
    fn tv_examples() {
        let h = |v: &[(u32, u64)]| v.iter().copied().collect::<BTreeMap<u32, u64>>();
        assert_eq!(tv_complement(&h(&[(0, 1), (1, 1)]), &h(&[(0, 5), (1, 5)])).unwrap(), 1.0);
        assert_eq!(tv_complement(&h(&[(0, 1), (1, 1)]), &h(&[(0, 2)])).unwrap(), 0.5);
        assert_eq!(tv_complement(&h(&[(0, 1)]), &h(&[(1, 2)])).unwrap(), 0.0);
        assert_eq!(tv_complement(&h(&[]), &h(&[(1, 2)])), Err(Error::EmptyHistogram));
    }

    #[test]
    fn dcr_examples() {
        let real = Matrix::from_rows(2, [[0.0, 0.0], [1.0, 1.0], [0.5, 0.2]]).unwrap();
        let synth = real.clone();
        assert_eq!(dcr_median(&real, &synth).unwrap(), 0.0);
        let mut shifted = real.clone();
        for i in 0..3 {
            shifted.set(i, 0, real.get(i, 0) + 0.01);
        }
        assert!((dcr_median(&real, &shifted).unwrap() - 0.01).abs() < 1e-12);
        assert_eq!(dcr_median(&Matrix::zeros(0, 2), &synth), Err(Error::EmptyInput));
    }

    fn two_table(sizes: &[usize]) -> Database {
        let p: Vec<String> = (0..sizes.len()).map(|i| alloc::format!("{i}")).collect();
        let fk: Vec<String> = sizes.iter().enumerate().flat_map(|(i, &s)| core::iter::repeat_n(alloc::format!("{i}"), s)).collect();
        let n = fk.len();
        Database::new([
            TableData::new(
                "p",
                vec![ColumnSpec::primary_key("id"), ColumnSpec::numerical("x")],
                vec![ColumnData::Text(p), ColumnData::Numerical((0..sizes.len()).map(|i| i as f64).collect())],
            )
            .unwrap(),
            TableData::new(
                "c",
                vec![ColumnSpec::foreign_key("pid", "p", "id"), ColumnSpec::numerical("y")],
                vec![ColumnData::Text(fk), ColumnData::Numerical((0..n).map(|i| (i % 3) as f64).collect())],
            )
            .unwrap(),
        ])
    }

    #[test]
    fn cardinality_examples() {
        let e = ForeignKeyEdge::new("c", "pid", "p");
        let a = two_table(&[1, 1, 2]);
        let b = two_table(&[1, 2, 2]);
        assert!((cardinality_score(&a, &b, &e).unwrap() - (1.0 - 1.0 / 3.0)).abs() < 1e-15);
        assert_eq!(cardinality_score(&two_table(&[1, 2, 2, 3]), &two_table(&[5, 5, 5, 5]), &e).unwrap(), 0.0);
        assert_eq!(group_sizes(&two_table(&[0, 2]), &e).unwrap(), vec![0.0, 2.0]);
    }

    #[test]
    fn self_evaluation_is_perfect() {
        let db = two_table(&[1, 0, 3, 2, 5]);
        let g = ConstraintGraph::from_database(&db).unwrap();
        let r = evaluate(&db, &db, &g, true).unwrap();
        assert_eq!(r.cardinality_mean, Some(100.0));
        assert_eq!(r.one_way_mean, Some(100.0));
        assert_eq!(r.khop[&1].mean, Some(100.0));
        assert_eq!(r.khop[&1].pairs.len(), 1);
        assert!(r.khop[&0].pairs.is_empty());
        assert_eq!(r.avg_two_way, Some(100.0));
        assert!(r.dcr_median.unwrap().values().all(|&d| d == 0.0));
    }

    #[test]
    fn equal_frequency_edges() {
        let v: Vec<f64> = (0..100).map(f64::from).collect();
        let e = bin_edges(&v);
        assert_eq!(e.len(), KHOP_BINS - 1);
        assert_eq!(e[0], 5.0);
    }
}
