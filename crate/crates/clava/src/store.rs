//! Model directory layout.
//!
//! ```text
//! config.json                              training config, guidance weight, graph
//! transforms/<table>.json                  schema, encoders, row count
//! models/<table>.bin + .json               denoiser weights (f32 LE) + header
//! latents/<child>__<parent>.json           GMM and voted labels
//! models/<child>__<parent>.classifier.bin + .json
//! groupsize/<child>__<parent>.json
//! provenance.json                          file hashes, creation time
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clava_core::cluster::{GmmModel, LatentAssignment};
use clava_core::diffusion::Denoiser;
use clava_core::encode::ColumnTransform;
use clava_core::groupsize::GroupSizeModel;
use clava_core::guidance::Classifier;
use clava_core::nn::Mlp;
use clava_core::synthesis::{edge_key, EdgeModel, TableModel, TrainConfig, TrainedModels};
use clava_core::{ColumnSpec, ConstraintGraph, ForeignKeyEdge};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};
use crate::io::{read_json, write_json};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredConfig {
    pub train: TrainConfig,
    pub classifier_scale: f64,
    pub tables: Vec<String>,
    pub edges: Vec<ForeignKeyEdge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TableHeader {
    name: String,
    columns: Vec<ColumnSpec>,
    transforms: Vec<ColumnTransform>,
    feature_count: usize,
    real_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct WeightsHeader {
    dims: Vec<usize>,
    param_count: usize,
    dtype: String,
    sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LatentFile {
    edge: ForeignKeyEdge,
    gmm: GmmModel,
    assignment: LatentAssignment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub created_unix_secs: u64,
    pub version: String,
    pub seed: u64,
    pub files: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| CliError::io(p, e))
}

fn write_weights(dir: &Path, stem: &str, mlp: &Mlp) -> Result<()> {
    let bytes: Vec<u8> = mlp.params().iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
    let bin = dir.join(format!("{stem}.bin"));
    fs::write(&bin, &bytes).map_err(|e| CliError::io(&bin, e))?;
    let header = WeightsHeader {
        dims: mlp.dims().to_vec(),
        param_count: mlp.params().len(),
        dtype: "f32-le".into(),
        sha256: sha256_hex(&bytes),
    };
    write_json(&dir.join(format!("{stem}.json")), &header)
}

fn read_weights(dir: &Path, stem: &str) -> Result<Mlp> {
    let header: WeightsHeader = read_json(&dir.join(format!("{stem}.json")))?;
    let bin = dir.join(format!("{stem}.bin"));
    let bytes = fs::read(&bin).map_err(|e| CliError::io(&bin, e))?;
    let corrupt = |reason: String| CliError::CorruptModel { path: bin.clone(), reason };
    if header.dtype != "f32-le" {
        return Err(corrupt(format!("unsupported dtype {}", header.dtype)));
    }
    if bytes.len() != 4 * header.param_count {
        return Err(corrupt(format!("expected {} bytes, found {}", 4 * header.param_count, bytes.len())));
    }
    if sha256_hex(&bytes) != header.sha256 {
        return Err(corrupt("checksum mismatch".into()));
    }
    let params = bytes.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]]))).collect();
    Mlp::from_params(header.dims, params).ok_or_else(|| corrupt("parameter count does not match layer sizes".into()))
}

fn hash_tree(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> Result<()> {
    let mut entries: Vec<PathBuf> =
        fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>().map_err(|e| CliError::io(dir, e))?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            hash_tree(root, &p, out)?;
        } else {
            let bytes = fs::read(&p).map_err(|e| CliError::io(&p, e))?;
            let rel = p.strip_prefix(root).unwrap_or(&p).to_string_lossy().replace('\\', "/");
            out.insert(rel, sha256_hex(&bytes));
        }
    }
    Ok(())
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn write_all(models: &TrainedModels, classifier_scale: f64, dir: &Path) -> Result<()> {
    for sub in ["transforms", "models", "latents", "groupsize"] {
        create_dir(&dir.join(sub))?;
    }
    let config = StoredConfig {
        train: models.config.clone(),
        classifier_scale,
        tables: models.graph.nodes().to_vec(),
        edges: models.graph.edges().to_vec(),
    };
    write_json(&dir.join("config.json"), &config)?;
    for (name, tm) in &models.tables {
        let header = TableHeader {
            name: name.clone(),
            columns: tm.columns.clone(),
            transforms: tm.transforms.clone(),
            feature_count: tm.feature_count,
            real_rows: tm.real_rows,
        };
        write_json(&dir.join("transforms").join(format!("{name}.json")), &header)?;
        write_weights(&dir.join("models"), name, tm.denoiser.mlp())?;
    }
    for em in &models.edges {
        let key = edge_key(&em.edge);
        let latent = LatentFile { edge: em.edge.clone(), gmm: em.gmm.clone(), assignment: em.assignment.clone() };
        write_json(&dir.join("latents").join(format!("{key}.json")), &latent)?;
        write_weights(&dir.join("models"), &format!("{key}.classifier"), em.classifier.mlp())?;
        write_json(&dir.join("groupsize").join(format!("{key}.json")), &em.group_sizes)?;
    }
    let mut files = BTreeMap::new();
    hash_tree(dir, dir, &mut files)?;
    let provenance = Provenance {
        created_unix_secs: unix_now(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: models.config.seed,
        files,
    };
    write_json(&dir.join("provenance.json"), &provenance)
}

/// Writes the model directory atomically: everything goes to a sibling temporary
/// directory that is renamed into place once complete.
pub fn save_models(models: &TrainedModels, classifier_scale: f64, dir: &Path, force: bool) -> Result<()> {
    let mut keys = std::collections::BTreeSet::new();
    for e in models.graph.edges() {
        if !keys.insert(edge_key(e)) {
            return Err(CliError::Config(format!(
                "several foreign keys from `{}` to `{}`; model files would collide",
                e.child, e.parent
            )));
        }
    }
    if dir.exists() && !force {
        return Err(CliError::Exists(dir.to_path_buf()));
    }
    let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
    let tmp = dir.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    }
    create_dir(&tmp)?;
    if let Err(e) = write_all(models, classifier_scale, &tmp) {
        let _ = fs::remove_dir_all(&tmp);
        return Err(e);
    }
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::rename(&tmp, dir).map_err(|e| CliError::io(dir, e))
}

pub fn load_config(dir: &Path) -> Result<StoredConfig> {
    read_json(&dir.join("config.json"))
}

pub fn load_models(dir: &Path) -> Result<TrainedModels> {
    let config = load_config(dir)?;
    let graph = ConstraintGraph::new(config.tables.clone(), config.edges.clone())?;
    let mut tables = BTreeMap::new();
    for name in graph.nodes() {
        let h: TableHeader = read_json(&dir.join("transforms").join(format!("{name}.json")))?;
        let mlp = read_weights(&dir.join("models"), name)?;
        let denoiser = Denoiser::from_mlp(mlp)?;
        tables.insert(
            name.clone(),
            TableModel {
                name: h.name,
                columns: h.columns,
                transforms: h.transforms,
                feature_count: h.feature_count,
                real_rows: h.real_rows,
                denoiser,
            },
        );
    }
    let mut edges = Vec::new();
    for edge in graph.edges() {
        let key = edge_key(edge);
        let latent: LatentFile = read_json(&dir.join("latents").join(format!("{key}.json")))?;
        let classifier = Classifier::from_mlp(read_weights(&dir.join("models"), &format!("{key}.classifier"))?);
        let group_sizes: GroupSizeModel = read_json(&dir.join("groupsize").join(format!("{key}.json")))?;
        edges.push(EdgeModel { edge: latent.edge, gmm: latent.gmm, assignment: latent.assignment, classifier, group_sizes });
    }
    Ok(TrainedModels { config: config.train, graph, tables, edges })
}
