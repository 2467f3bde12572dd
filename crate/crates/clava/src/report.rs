use std::collections::BTreeMap;
use std::path::Path;

use clava_core::metrics::{EdgeScore, MetricReport};
use clava_core::synthesis::TrainedModels;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Population standard deviation over the runs.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Self { mean, std: var.sqrt() })
    }
}

/// Reports of several synthesis runs plus their mean and spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub seeds: Vec<u64>,
    pub summary: BTreeMap<String, MeanStd>,
    pub runs: Vec<MetricReport>,
}

fn headline(r: &MetricReport) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    if let Some(v) = r.cardinality_mean {
        m.insert("cardinality".into(), v);
    }
    if let Some(v) = r.one_way_mean {
        m.insert("one_way".into(), v);
    }
    for (k, s) in &r.khop {
        if let Some(v) = s.mean {
            m.insert(format!("khop_{k}"), v);
        }
    }
    if let Some(v) = r.avg_two_way {
        m.insert("avg_two_way".into(), v);
    }
    m
}

pub fn aggregate(seeds: Vec<u64>, runs: Vec<MetricReport>) -> AggregateReport {
    let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in &runs {
        for (k, v) in headline(r) {
            values.entry(k).or_default().push(v);
        }
    }
    let summary = values.into_iter().filter_map(|(k, v)| MeanStd::of(&v).map(|s| (k, s))).collect();
    AggregateReport { seeds, summary, runs }
}

/// Average agree rate per edge, scaled to 0..100.
pub fn agree_rates(models: &TrainedModels) -> Vec<EdgeScore> {
    models.edges.iter().map(|e| EdgeScore { edge: e.edge.clone(), score: 100.0 * e.assignment.avg_agree_rate() }).collect()
}

/// One CSV row per score: `metric,k,table_a,column_a,table_b,column_b,score`.
pub fn write_csv(report: &MetricReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::csv(path, e))?;
    let mut row = |fields: [&str; 7]| w.write_record(fields).map_err(|e| CliError::csv(path, e));
    row(["metric", "k", "table_a", "column_a", "table_b", "column_b", "score"])?;
    for c in &report.cardinality {
        row(["cardinality", "", &c.edge.child, &c.edge.fk_column, &c.edge.parent, "", &c.score.to_string()])?;
    }
    for c in &report.one_way {
        row(["one_way", "", &c.table, &c.column, "", "", &c.score.to_string()])?;
    }
    for (k, s) in &report.khop {
        for p in &s.pairs {
            row(["khop", &k.to_string(), &p.table_a, &p.column_a, &p.table_b, &p.column_b, &p.score.to_string()])?;
        }
    }
    for c in &report.agree_rates {
        row(["agree_rate", "", &c.edge.child, &c.edge.fk_column, &c.edge.parent, "", &c.score.to_string()])?;
    }
    if let Some(d) = &report.dcr_median {
        for (t, v) in d {
            row(["dcr_median", "", t, "", "", "", &v.to_string()])?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_std() {
        let s = MeanStd::of(&[1.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.std), (2.0, 1.0));
        assert!(MeanStd::of(&[]).is_none());
    }
}
