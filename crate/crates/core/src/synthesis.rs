//! Training and sampling across the foreign-key graph.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::{augment_tables, latent_column_name, GmmModel, LatentAssignment};
use crate::diffusion::{sample, train_denoiser, Denoiser, DiffusionConfig, NoiseSchedule};
use crate::encode::{decode_matrix, encode_table, ColumnTransform};
use crate::error::{Error, Result};
use crate::groupsize::{fit_group_sizes, sample_group_size, GroupSizeModel};
use crate::guidance::{guided_sample, train_classifier, Classifier, ClassifierConfig};
use crate::matrix::{Matrix, UnifiedMatrix};
use crate::neighbors::NearestNeighbors;
use crate::rng::{derive_seed_str, stream, substream};
use crate::schema::{
    fk_row_map, validate_database, ColumnData, ColumnKind, ColumnSpec, ConstraintGraph, Database, ForeignKeyEdge, TableData,
    TopoDirection,
};

/// Key used for per-edge settings and file names.
pub fn edge_key(edge: &ForeignKeyEdge) -> String {
    format!("{}__{}", edge.child, edge.parent)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub k_clusters: usize,
    /// Overrides of `k_clusters` keyed by `<child>__<parent>`.
    #[serde(default)]
    pub k_per_edge: BTreeMap<String, usize>,
    pub parent_scale: f64,
    pub diffusion: DiffusionConfig,
    pub classifier: ClassifierConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k_clusters: 20,
            k_per_edge: BTreeMap::new(),
            parent_scale: 1.0,
            diffusion: DiffusionConfig::default(),
            classifier: ClassifierConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn k_for(&self, edge: &ForeignKeyEdge) -> usize {
        self.k_per_edge.get(&edge_key(edge)).copied().unwrap_or(self.k_clusters)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_clusters == 0 || self.k_per_edge.values().any(|&k| k == 0) {
            return Err(Error::BadRange("cluster count must be at least 1".to_string()));
        }
        if !(self.parent_scale >= 0.0 && self.parent_scale.is_finite()) {
            return Err(Error::BadRange(format!("parent scale must be >= 0, got {}", self.parent_scale)));
        }
        if self.diffusion.layers.is_empty() || self.classifier.layers.is_empty() {
            return Err(Error::BadRange("networks need at least one hidden layer".to_string()));
        }
        self.diffusion.schedule().map(|_| ())
    }
}

/// Denoiser over one augmented table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableModel {
    pub name: String,
    pub columns: Vec<ColumnSpec>,
    /// Raw feature transforms followed by child-latent transforms.
    pub transforms: Vec<ColumnTransform>,
    /// Number of raw feature columns at the front of `transforms`.
    pub feature_count: usize,
    pub real_rows: usize,
    pub denoiser: Denoiser,
}

impl TableModel {
    pub fn raw_transforms(&self) -> &[ColumnTransform] {
        &self.transforms[..self.feature_count]
    }
}

/// Latent model, guidance classifier and group-size model for one edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeModel {
    pub edge: ForeignKeyEdge,
    pub gmm: GmmModel,
    pub assignment: LatentAssignment,
    pub classifier: Classifier,
    pub group_sizes: GroupSizeModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModels {
    pub config: TrainConfig,
    pub graph: ConstraintGraph,
    pub tables: BTreeMap<String, TableModel>,
    pub edges: Vec<EdgeModel>,
}

impl TrainedModels {
    pub fn schedule(&self) -> Result<NoiseSchedule> {
        self.config.diffusion.schedule()
    }

    pub fn table(&self, name: &str) -> Result<&TableModel> {
        self.tables.get(name).ok_or_else(|| Error::MissingModel(name.to_string()))
    }

    pub fn edge(&self, edge: &ForeignKeyEdge) -> Result<&EdgeModel> {
        self.edges.iter().find(|m| &m.edge == edge).ok_or_else(|| Error::MissingModel(edge.to_string()))
    }
}

/// Latent learning, then one denoiser per augmented table and one classifier plus one
/// group-size model per edge.
pub fn train_all(db: &Database, graph: &ConstraintGraph, config: &TrainConfig) -> Result<TrainedModels> {
    config.validate()?;
    validate_database(db, graph)?;
    let aug = augment_tables(db, graph, config.parent_scale, &|e| config.k_for(e), config.seed)?;
    let schedule = config.diffusion.schedule()?;

    let mut tables = BTreeMap::new();
    for name in graph.nodes() {
        let at = &aug.tables[name];
        let matrix = at.encoded_augmented()?;
        let mut cfg = config.diffusion.clone();
        cfg.seed = derive_seed_str(config.seed, &format!("denoiser/{name}"));
        let denoiser = if matrix.cols() == 0 {
            Denoiser::new(0, &cfg.layers, &mut stream(cfg.seed))
        } else {
            let (d, losses) = train_denoiser(&matrix, &schedule, &cfg)?;
            log::info!("denoiser `{name}`: {} columns, final loss {:.4}", matrix.cols(), losses.last().copied().unwrap_or(f64::NAN));
            d
        };
        tables.insert(
            name.clone(),
            TableModel {
                name: name.clone(),
                columns: at.table.columns.clone(),
                transforms: at.augmented_transforms(),
                feature_count: at.transforms.len(),
                real_rows: at.table.row_count(),
                denoiser,
            },
        );
    }

    let mut edges = Vec::new();
    for (gmm, assignment) in &aug.latents {
        let edge = &assignment.edge;
        let child = aug.tables[&edge.child].encoded_augmented()?;
        let mut cfg = config.classifier.clone();
        cfg.seed = derive_seed_str(config.seed, &format!("classifier/{edge}"));
        let classes = assignment.k + 1;
        let classifier = if child.cols() == 0 {
            Classifier::new(0, &cfg.layers, classes, &mut stream(cfg.seed))
        } else {
            let (c, losses) = train_classifier(&child, &assignment.child_labels, classes, &schedule, &cfg)?;
            log::info!("classifier {edge}: final loss {:.4}", losses.last().copied().unwrap_or(f64::NAN));
            c
        };
        let group_sizes = fit_group_sizes(assignment, &fk_row_map(db, edge)?);
        edges.push(EdgeModel { edge: edge.clone(), gmm: gmm.clone(), assignment: assignment.clone(), classifier, group_sizes });
    }
    edges.sort_by_key(|m| graph.edges().iter().position(|e| e == &m.edge));
    Ok(TrainedModels { config: config.clone(), graph: graph.clone(), tables, edges })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleOptions {
    /// Multiplies root-table row counts.
    pub scale: f64,
    /// Guidance weight `eta`.
    pub classifier_scale: f64,
    pub seed: u64,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self { scale: 1.0, classifier_scale: 1.0, seed: 0 }
    }
}

/// Decoded rows of one synthetic table (features and latent labels) with their
/// foreign keys as parent row indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticVersion {
    pub features: TableData,
    pub fks: BTreeMap<String, Vec<usize>>,
}

impl SyntheticVersion {
    pub fn rows(&self) -> usize {
        self.features.row_count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutcome {
    pub merged: SyntheticVersion,
    /// `matches[m - 1][r]`: row of version `m` matched to base row `r`.
    pub matches: Vec<Vec<usize>>,
}

/// Merges versions of a multi-parent table. Version 0 is the base; every base row takes
/// its nearest neighbor in each further version (encoded raw features, Euclidean),
/// numerical cells become midpoints, categorical cells stay as in the base, and the
/// matched row contributes its foreign keys.
pub fn match_multi_parent(versions: &[SyntheticVersion], transforms: &[ColumnTransform]) -> Result<MatchOutcome> {
    if versions.is_empty() {
        return Err(Error::EmptyVersion(0));
    }
    if let Some(i) = versions.iter().position(|v| v.rows() == 0) {
        return Err(Error::EmptyVersion(i));
    }
    let mut merged = versions[0].clone();
    let mut matches = Vec::with_capacity(versions.len() - 1);
    for other in &versions[1..] {
        let queries = encode_table(&merged.features, transforms)?.values;
        let points = encode_table(&other.features, transforms)?.values;
        let nn = NearestNeighbors::new(&points, 0);
        let matched: Vec<usize> = queries.iter_rows().map(|q| nn.nearest(q).expect("non-empty version")).collect();
        for (col, data) in merged.features.columns.iter().zip(merged.features.data.iter_mut()) {
            if let ColumnData::Numerical(base) = data {
                let theirs = other.features.column(&col.name)?.as_numerical().ok_or_else(|| {
                    Error::InvalidSchema(format!("column `{}` changed type between versions", col.name))
                })?;
                for (r, v) in base.iter_mut().enumerate() {
                    *v = 0.5 * (*v + theirs[matched[r]]);
                }
            }
        }
        for (col, fk) in &other.fks {
            merged.fks.insert(col.clone(), matched.iter().map(|&r| fk[r]).collect());
        }
        matches.push(matched);
    }
    Ok(MatchOutcome { merged, matches })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceEvent {
    /// Child rows sampled along an edge from the finished parent table.
    Sampled(ForeignKeyEdge),
    /// All versions of a table are merged; it can now act as a parent.
    Finalized(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchRecord {
    pub versions: Vec<SyntheticVersion>,
    pub outcome: MatchOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDatabase {
    pub database: Database,
    pub trace: Vec<TraceEvent>,
    pub matches: BTreeMap<String, MatchRecord>,
    pub options: SampleOptions,
}

fn root_rows(real: usize, scale: f64) -> usize {
    libm::round(scale * real as f64).max(0.0) as usize
}

fn sample_table(model: &TableModel, schedule: &NoiseSchedule, n: usize, seed: u64) -> Matrix {
    if model.transforms.is_empty() {
        Matrix::zeros(n, 0)
    } else {
        sample(&model.denoiser, schedule, n, seed)
    }
}

fn decode(model: &TableModel, values: Matrix) -> Result<TableData> {
    let m = UnifiedMatrix {
        table_name: model.name.clone(),
        column_order: model.transforms.iter().map(|t| t.column.clone()).collect(),
        values,
    };
    decode_matrix(&m, &model.transforms)
}

fn latent_labels(table: &TableData, edge: &ForeignKeyEdge) -> Result<Vec<u32>> {
    let col = table.column(&latent_column_name(edge))?;
    let text = col.as_text().ok_or_else(|| Error::InvalidSchema(format!("latent column for {edge} is not categorical")))?;
    Ok(text.iter().map(|s| s.parse().expect("latent categories are integers")).collect())
}

/// Maps a label without group-size support to a label that has it: the nearest seen
/// component by mean, or the most frequent seen label for an unsupported sentinel.
pub fn remap_label(model: &EdgeModel, label: u32) -> u32 {
    let gs = &model.group_sizes;
    if gs.histograms.contains_key(&label) {
        return label;
    }
    let seen = gs.seen_labels();
    let Some(&first) = seen.first() else { return gs.sentinel };
    let target = if label == gs.sentinel {
        seen.iter().copied().fold(first, |best, l| if gs.total(l) > gs.total(best) { l } else { best })
    } else {
        let m = &model.gmm.means[label as usize];
        let dist = |l: u32| crate::neighbors::squared_distance(m, &model.gmm.means[l as usize]);
        seen.iter().copied().fold(first, |best, l| if dist(l) < dist(best) { l } else { best })
    };
    log::debug!("edge {}: label {label} unseen, using {target}", model.edge);
    target
}

struct Finished {
    features: TableData,
    fks: BTreeMap<String, Vec<usize>>,
}

/// Roots are sampled unconditionally; each edge, in top-down order, draws a group size
/// per parent row from its latent label and guided-samples that many child rows.
pub fn synthesize(models: &TrainedModels, options: &SampleOptions) -> Result<SyntheticDatabase> {
    let graph = &models.graph;
    let schedule = models.schedule()?;
    let seed = options.seed;
    let mut versions: BTreeMap<String, Vec<SyntheticVersion>> = BTreeMap::new();
    let mut finished: BTreeMap<String, Finished> = BTreeMap::new();
    let mut trace = Vec::new();
    let mut matches = BTreeMap::new();

    for root in graph.roots() {
        let tm = models.table(root)?;
        let n = root_rows(tm.real_rows, options.scale);
        let values = sample_table(tm, &schedule, n, derive_seed_str(seed, &format!("root/{root}")));
        versions.insert(root.to_string(), vec![SyntheticVersion { features: decode(tm, values)?, fks: BTreeMap::new() }]);
    }

    let mut finish = |name: &str,
                      versions: &mut BTreeMap<String, Vec<SyntheticVersion>>,
                      finished: &mut BTreeMap<String, Finished>,
                      trace: &mut Vec<TraceEvent>|
     -> Result<()> {
        if finished.contains_key(name) {
            return Ok(());
        }
        let tm = models.table(name)?;
        let vs = versions.remove(name).unwrap_or_default();
        let done = match vs.len() {
            0 => Finished { features: decode(tm, Matrix::zeros(0, tm.transforms.len()))?, fks: BTreeMap::new() },
            1 => {
                let v = vs.into_iter().next().expect("one version");
                Finished { features: v.features, fks: v.fks }
            }
            _ => {
                let outcome = match_multi_parent(&vs, tm.raw_transforms())?;
                let merged = outcome.merged.clone();
                matches.insert(name.to_string(), MatchRecord { versions: vs, outcome });
                Finished { features: merged.features, fks: merged.fks }
            }
        };
        finished.insert(name.to_string(), done);
        trace.push(TraceEvent::Finalized(name.to_string()));
        Ok(())
    };

    for edge in graph.topo_order(TopoDirection::TopDown)? {
        finish(&edge.parent, &mut versions, &mut finished, &mut trace)?;
        let em = models.edge(&edge)?;
        let parent_labels = latent_labels(&finished[&edge.parent].features, &edge)?;
        let size_seed = derive_seed_str(seed, &format!("sizes/{edge}"));
        let mut labels = Vec::new();
        let mut fk = Vec::new();
        for (p, &l) in parent_labels.iter().enumerate() {
            let l = remap_label(em, l);
            let s = sample_group_size(&em.group_sizes, l, &mut substream(size_seed, p as u64))?;
            labels.extend(core::iter::repeat_n(l, s));
            fk.extend(core::iter::repeat_n(p, s));
        }
        let tm = models.table(&edge.child)?;
        let chain_seed = derive_seed_str(seed, &format!("child/{edge}"));
        let values = if tm.transforms.is_empty() {
            Matrix::zeros(labels.len(), 0)
        } else {
            guided_sample(&tm.denoiser, &em.classifier, &schedule, &labels, options.classifier_scale, chain_seed)?
        };
        let mut fks = BTreeMap::new();
        fks.insert(edge.fk_column.clone(), fk);
        versions.entry(edge.child.clone()).or_default().push(SyntheticVersion { features: decode(tm, values)?, fks });
        trace.push(TraceEvent::Sampled(edge));
    }
    for name in graph.nodes() {
        finish(name, &mut versions, &mut finished, &mut trace)?;
    }

    let mut tables = Vec::new();
    for name in graph.nodes() {
        let f = &finished[name];
        tables.push(assemble(models.table(name)?, &f.features, &f.fks)?);
    }
    Ok(SyntheticDatabase { database: Database::new(tables), trace, matches, options: *options })
}

/// Output table in schema column order: dense primary keys, foreign keys as parent row
/// indices, latent columns dropped.
fn assemble(model: &TableModel, features: &TableData, fks: &BTreeMap<String, Vec<usize>>) -> Result<TableData> {
    let n = features.row_count();
    let mut data = Vec::with_capacity(model.columns.len());
    for c in &model.columns {
        data.push(match c.kind {
            ColumnKind::PrimaryKey => ColumnData::Text((0..n).map(|i| i.to_string()).collect()),
            ColumnKind::ForeignKey => {
                let fk = fks.get(&c.name).ok_or_else(|| Error::MissingModel(format!("{}.{}", model.name, c.name)))?;
                ColumnData::Text(fk.iter().map(|p| p.to_string()).collect())
            }
            _ => features.column(&c.name)?.clone(),
        });
    }
    if model.columns.is_empty() {
        return Ok(TableData::without_columns(model.name.clone(), n));
    }
    TableData::new(model.name.clone(), model.columns.clone(), data)
}

fn draw_marginal<R: Rng + ?Sized>(hist: &BTreeMap<usize, u64>, rng: &mut R) -> usize {
    let total: u64 = hist.values().sum();
    let mut u = rng.random_range(0..total);
    for (&s, &c) in hist {
        if u < c {
            return s;
        }
        u -= c;
    }
    unreachable!("draw below histogram total")
}

fn marginal_sizes(gs: &GroupSizeModel) -> BTreeMap<usize, u64> {
    let mut m = BTreeMap::new();
    for h in gs.histograms.values() {
        for (&s, &c) in h {
            *m.entry(s).or_insert(0) += c;
        }
    }
    m
}

/// Parent row per child: each parent gets a size drawn from `hist` and the resulting
/// slots are shuffled, repeating passes until `n` slots exist.
fn random_parents<R: Rng + ?Sized>(hist: &BTreeMap<usize, u64>, parents: usize, n: usize, rng: &mut R) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    if parents == 0 {
        return vec![0; n];
    }
    let mut slots = Vec::new();
    let positive = hist.keys().any(|&s| s > 0);
    while slots.len() < n {
        if positive {
            for p in 0..parents {
                let s = draw_marginal(hist, rng);
                slots.extend(core::iter::repeat_n(p, s));
            }
        } else {
            slots.extend((0..n).map(|_| rng.random_range(0..parents)));
        }
    }
    slots.shuffle(rng);
    slots.truncate(n);
    slots
}

/// Baseline without cross-table conditioning: each table is sampled independently and
/// foreign keys come from real group sizes drawn with replacement.
pub fn singlet_baseline(models: &TrainedModels, options: &SampleOptions) -> Result<SyntheticDatabase> {
    let graph = &models.graph;
    let schedule = models.schedule()?;
    let seed = derive_seed_str(options.seed, "singlet");
    let mut rows: BTreeMap<String, usize> = BTreeMap::new();
    let mut tables = Vec::new();
    for name in graph.table_order()? {
        let tm = models.table(&name)?;
        let parents: Vec<ForeignKeyEdge> = graph.parent_edges(&name).cloned().collect();
        let mut fks = BTreeMap::new();
        let n = match parents.first() {
            None => root_rows(tm.real_rows, options.scale),
            Some(first) => {
                let hist = marginal_sizes(&models.edge(first)?.group_sizes);
                let mut rng = stream(derive_seed_str(seed, &format!("sizes/{first}")));
                let mut fk = Vec::new();
                for p in 0..rows[&first.parent] {
                    fk.extend(core::iter::repeat_n(p, draw_marginal(&hist, &mut rng)));
                }
                let n = fk.len();
                fks.insert(first.fk_column.clone(), fk);
                for e in &parents[1..] {
                    let hist = marginal_sizes(&models.edge(e)?.group_sizes);
                    let mut rng = stream(derive_seed_str(seed, &format!("sizes/{e}")));
                    fks.insert(e.fk_column.clone(), random_parents(&hist, rows[&e.parent], n, &mut rng));
                }
                n
            }
        };
        let values = sample_table(tm, &schedule, n, derive_seed_str(seed, &format!("table/{name}")));
        let features = decode(tm, values)?;
        tables.push(assemble(tm, &features, &fks)?);
        rows.insert(name, n);
    }
    Ok(SyntheticDatabase { database: Database::new(tables), trace: Vec::new(), matches: BTreeMap::new(), options: *options })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::ColumnSpec;

    fn version(xs: &[f64], cats: &[&str], fk_col: &str, fk: Vec<usize>) -> SyntheticVersion {
        let features = TableData::new(
            "c",
            vec![ColumnSpec::numerical("x"), ColumnSpec::categorical("k")],
            vec![ColumnData::Numerical(xs.to_vec()), ColumnData::Text(cats.iter().map(|s| s.to_string()).collect())],
        )
        .unwrap();
        let mut fks = BTreeMap::new();
        fks.insert(fk_col.to_string(), fk);
        SyntheticVersion { features, fks }
    }

    fn zscore(col: &str) -> ColumnTransform {
        ColumnTransform { column: col.to_string(), kind: crate::encode::TransformKind::Zscore { mean: 0.0, std: 1.0 } }
    }

    #[test]
    fn midpoint_matching() {
        let a = version(&[0.0, 1.0], &["u", "v"], "p1", vec![0, 1]);
        let b = version(&[0.1, 0.9], &["w", "w"], "p2", vec![5, 7]);
        let out = match_multi_parent(&[a, b], &[zscore("x")]).unwrap();
        assert_eq!(out.matches, vec![vec![0, 1]]);
        assert_eq!(out.merged.features.column("x").unwrap().as_numerical().unwrap(), &[0.05, 0.95]);
        assert_eq!(out.merged.features.column("k").unwrap().as_text().unwrap(), &["u", "v"]);
        assert_eq!(out.merged.fks["p1"], vec![0, 1]);
        assert_eq!(out.merged.fks["p2"], vec![5, 7]);
    }

    #[test]
    fn identical_versions_unchanged() {
        let a = version(&[0.3, -2.0, 4.0], &["u", "v", "u"], "p1", vec![0, 1, 2]);
        let b = version(&[0.3, -2.0, 4.0], &["u", "v", "u"], "p2", vec![2, 1, 0]);
        let out = match_multi_parent(&[a.clone(), b], &[zscore("x")]).unwrap();
        assert_eq!(out.merged.features.column("x"), a.features.column("x"));
    }

    #[test]
    fn three_versions_sequential() {
        let a = version(&[0.0], &["u"], "p1", vec![0]);
        let b = version(&[1.0, 9.0], &["u", "u"], "p2", vec![3, 4]);
        let c = version(&[0.5, 2.0], &["u", "u"], "p3", vec![8, 9]);
        let out = match_multi_parent(&[a, b, c], &[zscore("x")]).unwrap();
        // 0.0 with 1.0 -> 0.5, then 0.5 with 0.5 -> 0.5
        assert_eq!(out.merged.features.column("x").unwrap().as_numerical().unwrap(), &[0.5]);
        assert_eq!(out.merged.fks.len(), 3);
        assert_eq!(out.merged.fks["p3"], vec![8]);
    }

    #[test]
    fn empty_version_rejected() {
        let a = version(&[0.0], &["u"], "p1", vec![0]);
        let b = version(&[], &[], "p2", vec![]);
        assert_eq!(match_multi_parent(&[a, b], &[zscore("x")]).unwrap_err(), Error::EmptyVersion(1));
    }

    #[test]
    fn random_parents_length() {
        let hist: BTreeMap<usize, u64> = [(0, 2), (3, 1)].into_iter().collect();
        let mut rng = stream(4);
        let v = random_parents(&hist, 5, 40, &mut rng);
        assert_eq!(v.len(), 40);
        assert!(v.iter().all(|&p| p < 5));
    }
}
