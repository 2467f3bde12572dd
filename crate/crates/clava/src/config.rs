use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clava_core::diffusion::DiffusionConfig;
use clava_core::guidance::ClassifierConfig;
use clava_core::synthesis::{SampleOptions, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io::read_json;

/// Cluster count for every edge, or a per-edge map keyed by `<child>__<parent>` with an
/// optional `"default"` entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KClusters {
    All(usize),
    PerEdge(BTreeMap<String, usize>),
}

impl Default for KClusters {
    fn default() -> Self {
        KClusters::All(20)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data_dir: PathBuf,
    pub model_dir: PathBuf,
    pub out_dir: PathBuf,
    pub k_clusters: KClusters,
    pub parent_scale: f64,
    pub classifier_scale: f64,
    pub timesteps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub lr: f64,
    pub classifier_lr: f64,
    pub layers: Vec<usize>,
    pub classifier_layers: Vec<usize>,
    pub iterations: usize,
    pub classifier_iterations: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub scale: f64,
    /// Synthesis runs in `pipeline`; seeds are `seed, seed + 1, ...`.
    pub synth_runs: usize,
    pub dcr: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let d = DiffusionConfig::default();
        let c = ClassifierConfig::default();
        Self {
            data_dir: PathBuf::from("data"),
            model_dir: PathBuf::from("model"),
            out_dir: PathBuf::from("out"),
            k_clusters: KClusters::default(),
            parent_scale: 1.0,
            classifier_scale: 1.0,
            timesteps: d.timesteps,
            beta_min: d.beta_min,
            beta_max: d.beta_max,
            lr: d.lr,
            classifier_lr: c.lr,
            layers: d.layers,
            classifier_layers: c.layers,
            iterations: d.iterations,
            classifier_iterations: c.iterations,
            batch_size: d.batch_size,
            weight_decay: d.weight_decay,
            seed: 0,
            scale: 1.0,
            synth_runs: 3,
            dcr: false,
        }
    }
}

impl RunConfig {
    /// Reads a config file; relative paths inside it resolve against the file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg: RunConfig = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.data_dir, &mut cfg.model_dir, &mut cfg.out_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        let ks: Vec<usize> = match &self.k_clusters {
            KClusters::All(k) => vec![*k],
            KClusters::PerEdge(m) => m.values().copied().collect(),
        };
        if ks.contains(&0) {
            return bad("k_clusters must be at least 1".into());
        }
        if !(self.parent_scale >= 0.0 && self.parent_scale.is_finite()) {
            return bad(format!("parent_scale must be >= 0, got {}", self.parent_scale));
        }
        if !(self.classifier_scale >= 0.0 && self.classifier_scale.is_finite()) {
            return bad(format!("classifier_scale must be >= 0, got {}", self.classifier_scale));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return bad(format!("scale must be > 0, got {}", self.scale));
        }
        if self.timesteps == 0 || self.batch_size == 0 {
            return bad("timesteps and batch_size must be at least 1".into());
        }
        if self.synth_runs == 0 {
            return bad("synth_runs must be at least 1".into());
        }
        let paths = [&self.data_dir, &self.model_dir, &self.out_dir];
        for i in 0..3 {
            for j in i + 1..3 {
                if paths[i] == paths[j] {
                    return bad(format!("data_dir, model_dir and out_dir must differ ({} repeated)", paths[i].display()));
                }
            }
        }
        self.train_config().validate().map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn train_config(&self) -> TrainConfig {
        let (k_clusters, k_per_edge) = match &self.k_clusters {
            KClusters::All(k) => (*k, BTreeMap::new()),
            KClusters::PerEdge(m) => {
                let mut m = m.clone();
                (m.remove("default").unwrap_or(20), m)
            }
        };
        TrainConfig {
            k_clusters,
            k_per_edge,
            parent_scale: self.parent_scale,
            diffusion: DiffusionConfig {
                timesteps: self.timesteps,
                lr: self.lr,
                iterations: self.iterations,
                batch_size: self.batch_size,
                layers: self.layers.clone(),
                seed: self.seed,
                weight_decay: self.weight_decay,
                beta_min: self.beta_min,
                beta_max: self.beta_max,
            },
            classifier: ClassifierConfig {
                lr: self.classifier_lr,
                iterations: self.classifier_iterations,
                batch_size: self.batch_size,
                layers: self.classifier_layers.clone(),
                seed: self.seed,
                weight_decay: self.weight_decay,
            },
            seed: self.seed,
        }
    }

    pub fn sample_options(&self, seed: u64) -> SampleOptions {
        SampleOptions { scale: self.scale, classifier_scale: self.classifier_scale, seed }
    }

    pub fn synth_seeds(&self) -> Vec<u64> {
        (0..self.synth_runs as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_validation() {
        let c = RunConfig::default();
        assert_eq!(c.k_clusters, KClusters::All(20));
        assert_eq!((c.parent_scale, c.classifier_scale, c.timesteps), (1.0, 1.0, 2000));
        c.validate().unwrap();
        let mut bad = c.clone();
        bad.parent_scale = -1.0;
        assert!(bad.validate().is_err());
        let mut bad = c.clone();
        bad.model_dir = bad.data_dir.clone();
        assert!(bad.validate().is_err());
        let mut bad = c;
        bad.k_clusters = KClusters::All(0);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn per_edge_clusters() {
        let c: RunConfig = serde_json::from_str(r#"{"k_clusters": {"default": 4, "c__p": 2}}"#).unwrap();
        let t = c.train_config();
        assert_eq!(t.k_clusters, 4);
        assert_eq!(t.k_per_edge["c__p"], 2);
        assert!(serde_json::from_str::<RunConfig>(r#"{"nonsense": 1}"#).is_err());
    }
}
