//! Mixed-type table <-> unified numeric matrix.
//!
//! Categorical columns are label-encoded (`category -> 0..m-1`). Numeric columns with at
//! least [`QUANTILE_MIN_DISTINCT`] distinct values get a rank-to-Gaussian quantile map;
//! the rest are z-scored.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{normal_quantile, round_half_even, sqrt};
use crate::matrix::{Matrix, UnifiedMatrix};
use crate::schema::{ColumnData, ColumnSpec, TableData};

pub const QUANTILE_MIN_DISTINCT: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformKind {
    /// Piecewise-linear map through `(value, gaussian level)` knots.
    QuantileGaussian { values: Vec<f64>, levels: Vec<f64> },
    Zscore { mean: f64, std: f64 },
    LabelEncode { categories: Vec<String> },
}

/// Fitted transform of one non-key column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnTransform {
    pub column: String,
    #[serde(flatten)]
    pub kind: TransformKind,
}

impl ColumnTransform {
    /// Label encoding with the fixed category order `"0", "1", …, "k"` used for latent
    /// cluster columns (`k` is the childless sentinel), so that code == label.
    pub fn latent(column: impl Into<String>, k: usize) -> Self {
        Self {
            column: column.into(),
            kind: TransformKind::LabelEncode { categories: (0..=k).map(|c| c.to_string()).collect() },
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, TransformKind::LabelEncode { .. })
    }

    pub fn fit_numeric(column: &str, values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut uniques: Vec<(f64, usize)> = Vec::new();
        for &v in &sorted {
            match uniques.last_mut() {
                Some((u, c)) if *u == v => *c += 1,
                _ => uniques.push((v, 1)),
            }
        }
        let kind = if uniques.len() >= QUANTILE_MIN_DISTINCT {
            let n = sorted.len() as f64;
            let mut below = 0usize;
            let mut knot_values = Vec::with_capacity(uniques.len());
            let mut levels = Vec::with_capacity(uniques.len());
            for (v, c) in uniques {
                let p = (below as f64 + c as f64 / 2.0) / n;
                knot_values.push(v);
                levels.push(normal_quantile(p));
                below += c;
            }
            TransformKind::QuantileGaussian { values: knot_values, levels }
        } else {
            let n = values.len().max(1) as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let std = sqrt(var);
            TransformKind::Zscore { mean, std: if std < 1e-12 { 1.0 } else { std } }
        };
        Self { column: column.to_string(), kind }
    }

    pub fn fit_categorical(column: &str, values: &[String]) -> Self {
        let mut categories: Vec<String> = Vec::new();
        let mut seen = BTreeMap::new();
        for v in values {
            if !seen.contains_key(v.as_str()) {
                seen.insert(v.as_str(), categories.len());
                categories.push(v.clone());
            }
        }
        Self { column: column.to_string(), kind: TransformKind::LabelEncode { categories } }
    }

    /// Number of categories for label encodings, `None` for numeric transforms.
    pub fn category_count(&self) -> Option<usize> {
        match &self.kind {
            TransformKind::LabelEncode { categories } => Some(categories.len()),
            _ => None,
        }
    }

    pub fn encode_numeric(&self, x: f64) -> f64 {
        match &self.kind {
            TransformKind::QuantileGaussian { values, levels } => interpolate(values, levels, x),
            TransformKind::Zscore { mean, std } => (x - mean) / std,
            TransformKind::LabelEncode { .. } => panic!("encode_numeric on a categorical transform"),
        }
    }

    pub fn decode_numeric(&self, z: f64) -> f64 {
        match &self.kind {
            TransformKind::QuantileGaussian { values, levels } => interpolate(levels, values, z),
            TransformKind::Zscore { mean, std } => z * std + mean,
            TransformKind::LabelEncode { .. } => panic!("decode_numeric on a categorical transform"),
        }
    }

    /// Clamp to `[0, m-1]`, then round half to even.
    pub fn decode_code(&self, z: f64) -> usize {
        let m = self.category_count().expect("decode_code on a numeric transform");
        let top = m.saturating_sub(1) as f64;
        let z = if z.is_nan() { 0.0 } else { z.clamp(0.0, top) };
        round_half_even(z) as usize
    }

    fn encode_column(&self, table: &str, data: &ColumnData, out: &mut Matrix, j: usize) -> Result<()> {
        match (&self.kind, data) {
            (TransformKind::LabelEncode { categories }, ColumnData::Text(v)) => {
                let lookup: BTreeMap<&str, usize> = categories.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
                for (i, cell) in v.iter().enumerate() {
                    let code = lookup.get(cell.as_str()).ok_or_else(|| {
                        Error::InvalidSchema(format!("unknown category `{cell}` in `{table}.{}`", self.column))
                    })?;
                    out.set(i, j, *code as f64);
                }
            }
            (TransformKind::LabelEncode { .. }, ColumnData::Numerical(_)) | (_, ColumnData::Text(_)) => {
                return Err(Error::InvalidSchema(format!("column `{table}.{}` does not match its transform", self.column)));
            }
            (_, ColumnData::Numerical(v)) => {
                for (i, &x) in v.iter().enumerate() {
                    out.set(i, j, self.encode_numeric(x));
                }
            }
        }
        Ok(())
    }
}

/// Monotone piecewise-linear interpolation through `(xs, ys)`, clamped at both ends.
fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] || n == 1 {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    // first index with xs[i] > x; 1 <= hi <= n-1
    let hi = xs.partition_point(|&v| v <= x);
    let lo = hi - 1;
    let t = (x - xs[lo]) / (xs[hi] - xs[lo]);
    ys[lo] + t * (ys[hi] - ys[lo])
}

/// One transform per non-key column, in table order.
pub fn fit_transforms(table: &TableData) -> Result<Vec<ColumnTransform>> {
    if table.row_count() == 0 {
        return Err(Error::EmptyTable(table.name.clone()));
    }
    Ok(table
        .feature_indices()
        .into_iter()
        .map(|i| {
            let name = &table.columns[i].name;
            match &table.data[i] {
                ColumnData::Numerical(v) => ColumnTransform::fit_numeric(name, v),
                ColumnData::Text(v) => ColumnTransform::fit_categorical(name, v),
            }
        })
        .collect())
}

pub fn encode_table(table: &TableData, transforms: &[ColumnTransform]) -> Result<UnifiedMatrix> {
    let mut values = Matrix::zeros(table.row_count(), transforms.len());
    for (j, t) in transforms.iter().enumerate() {
        let col = table.column(&t.column)?;
        t.encode_column(&table.name, col, &mut values, j)?;
    }
    Ok(UnifiedMatrix {
        table_name: table.name.clone(),
        column_order: transforms.iter().map(|t| t.column.clone()).collect(),
        values,
    })
}

/// Inverse of [`encode_table`]; the result has only the non-key columns.
pub fn decode_matrix(matrix: &UnifiedMatrix, transforms: &[ColumnTransform]) -> Result<TableData> {
    if matrix.cols() != transforms.len() {
        return Err(Error::DimensionMismatch { expected: transforms.len(), got: matrix.cols() });
    }
    let mut columns = Vec::with_capacity(transforms.len());
    let mut data = Vec::with_capacity(transforms.len());
    for (j, t) in transforms.iter().enumerate() {
        let z = matrix.values.column(j);
        match &t.kind {
            TransformKind::LabelEncode { categories } => {
                columns.push(ColumnSpec::categorical(t.column.clone()));
                data.push(ColumnData::Text(z.into_iter().map(|v| categories[t.decode_code(v)].clone()).collect()));
            }
            _ => {
                columns.push(ColumnSpec::numerical(t.column.clone()));
                data.push(ColumnData::Numerical(z.into_iter().map(|v| t.decode_numeric(v)).collect()));
            }
        }
    }
    if transforms.is_empty() {
        return Ok(TableData::without_columns(matrix.table_name.clone(), matrix.rows()));
    }
    TableData::new(matrix.table_name.clone(), columns, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::normal_cdf;
    use alloc::vec;

    fn cats(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn first_occurrence_codes() {
        let t = ColumnTransform::fit_categorical("c", &cats(&["B", "A", "B", "C"]));
        assert_eq!(t.kind, TransformKind::LabelEncode { categories: cats(&["B", "A", "C"]) });
    }

    #[test]
    fn constant_column_zscore() {
        let t = ColumnTransform::fit_numeric("x", &[3.0; 10]);
        assert_eq!(t.kind, TransformKind::Zscore { mean: 3.0, std: 1.0 });
        assert_eq!(t.encode_numeric(3.0), 0.0);
    }

    /// Oracle: bisection on the normal CDF, independent of the rational approximation.
    fn bisect_quantile(p: f64) -> f64 {
        let (mut lo, mut hi) = (-40.0, 40.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if normal_cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn quantile_column_median_near_zero() {
        let values: Vec<f64> = (1..=100).map(f64::from).collect();
        let t = ColumnTransform::fit_numeric("x", &values);
        assert!(matches!(t.kind, TransformKind::QuantileGaussian { .. }));
        let mut enc: Vec<f64> = values.iter().map(|&v| t.encode_numeric(v)).collect();
        for (rank, e) in enc.iter().enumerate() {
            let want = bisect_quantile((rank as f64 + 0.5) / 100.0);
            assert!((e - want).abs() < 1e-9);
        }
        enc.sort_by(f64::total_cmp);
        let median = 0.5 * (enc[49] + enc[50]);
        assert!(median.abs() < 0.05);
    }

    #[test]
    fn decode_clamps_and_rounds() {
        let t = ColumnTransform::fit_categorical("c", &cats(&["a", "b", "c"]));
        assert_eq!(t.decode_code(1.4), 1);
        assert_eq!(t.decode_code(-0.7), 0);
        assert_eq!(t.decode_code(5.2), 2);
        assert_eq!(t.decode_code(0.5), 0);
        assert_eq!(t.decode_code(1.5), 2);
    }

    #[test]
    fn quantile_decode_clamps_to_fitted_range() {
        let values: Vec<f64> = (0..50).map(|i| f64::from(i) * 2.0).collect();
        let t = ColumnTransform::fit_numeric("x", &values);
        assert_eq!(t.decode_numeric(100.0), 98.0);
        assert_eq!(t.decode_numeric(-100.0), 0.0);
    }

    #[test]
    fn decode_dimension_mismatch() {
        let m = UnifiedMatrix { table_name: "t".into(), column_order: vec![], values: Matrix::zeros(2, 3) };
        assert!(matches!(decode_matrix(&m, &[]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn empty_table_rejected() {
        let t = TableData::new("t", vec![ColumnSpec::numerical("x")], vec![ColumnData::Numerical(vec![])]).unwrap();
        assert!(matches!(fit_transforms(&t), Err(Error::EmptyTable(_))));
    }
}
