//! Dataset directories: `dataset_meta.json` plus one CSV per table.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use clava_core::schema::validate_database;
use clava_core::{ColumnData, ColumnKind, ColumnSpec, ConstraintGraph, Database, Error, TableData};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const META_FILE: &str = "dataset_meta.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Numerical,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub kind: FeatureKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForeignKeyMeta {
    pub column: String,
    pub parent_table: String,
    pub parent_column: String,
}

/// A primary key given as one column name; a list of several names is a composite key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PrimaryKeyMeta {
    Single(String),
    Composite(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primary_key: Option<PrimaryKeyMeta>,
    #[serde(default)]
    pub columns: Vec<ColumnMeta>,
    #[serde(default)]
    pub foreign_keys: Vec<ForeignKeyMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub tables: BTreeMap<String, TableMeta>,
}

impl TableMeta {
    fn primary_key(&self, table: &str) -> Result<Option<&str>> {
        match &self.primary_key {
            None => Ok(None),
            Some(PrimaryKeyMeta::Single(c)) => Ok(Some(c)),
            Some(PrimaryKeyMeta::Composite(cols)) if cols.len() == 1 => Ok(Some(&cols[0])),
            Some(PrimaryKeyMeta::Composite(cols)) => Err(Error::InvalidSchema(format!(
                "table `{table}` declares a composite primary key ({}); only single-column keys are supported",
                cols.join(", ")
            ))
            .into()),
        }
    }

    fn spec_for(&self, table: &str, column: &str) -> Result<ColumnSpec> {
        if self.primary_key(table)? == Some(column) {
            return Ok(ColumnSpec::primary_key(column));
        }
        if let Some(fk) = self.foreign_keys.iter().find(|f| f.column == column) {
            return Ok(ColumnSpec::foreign_key(column, fk.parent_table.clone(), fk.parent_column.clone()));
        }
        match self.columns.iter().find(|c| c.name == column) {
            Some(ColumnMeta { kind: FeatureKind::Numerical, .. }) => Ok(ColumnSpec::numerical(column)),
            Some(ColumnMeta { kind: FeatureKind::Categorical, .. }) => Ok(ColumnSpec::categorical(column)),
            None => Err(Error::InvalidSchema(format!("column `{table}.{column}` is not declared in {META_FILE}")).into()),
        }
    }

    fn declared(&self, table: &str) -> Result<Vec<String>> {
        let mut names: Vec<String> = self.primary_key(table)?.map(str::to_string).into_iter().collect();
        names.extend(self.foreign_keys.iter().map(|f| f.column.clone()));
        names.extend(self.columns.iter().map(|c| c.name.clone()));
        Ok(names)
    }
}

pub fn read_meta(dir: &Path) -> Result<DatasetMeta> {
    let path = dir.join(META_FILE);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::json(&path, e))
}

fn check_parent_columns(meta: &DatasetMeta) -> Result<()> {
    for (name, t) in &meta.tables {
        for fk in &t.foreign_keys {
            let parent = meta.tables.get(&fk.parent_table).ok_or_else(|| Error::UnknownTable(fk.parent_table.clone()))?;
            if parent.primary_key(&fk.parent_table)? != Some(fk.parent_column.as_str()) {
                return Err(Error::InvalidSchema(format!(
                    "`{name}.{}` references `{}.{}`, which is not that table's primary key",
                    fk.column, fk.parent_table, fk.parent_column
                ))
                .into());
            }
        }
    }
    Ok(())
}

fn read_table(dir: &Path, name: &str, meta: &TableMeta) -> Result<TableData> {
    let path = dir.join(format!("{name}.csv"));
    if !path.exists() {
        return Err(Error::MissingTable(name.to_string()).into());
    }
    let mut reader = csv::Reader::from_path(&path).map_err(|e| CliError::csv(&path, e))?;
    let header: Vec<String> = reader.headers().map_err(|e| CliError::csv(&path, e))?.iter().map(str::to_string).collect();
    for declared in meta.declared(name)? {
        if !header.contains(&declared) {
            return Err(Error::UnknownColumn { table: name.to_string(), column: declared }.into());
        }
    }
    let specs: Vec<ColumnSpec> = header.iter().map(|c| meta.spec_for(name, c)).collect::<Result<_>>()?;
    let mut cells: Vec<Vec<String>> = vec![Vec::new(); header.len()];
    for record in reader.records() {
        let record = record.map_err(|e| CliError::csv(&path, e))?;
        for (j, field) in record.iter().enumerate() {
            cells[j].push(field.to_string());
        }
    }
    let mut data = Vec::with_capacity(specs.len());
    for (spec, col) in specs.iter().zip(cells) {
        data.push(if spec.kind == ColumnKind::Numerical {
            let mut values = Vec::with_capacity(col.len());
            for (row, s) in col.iter().enumerate() {
                match s.trim().parse::<f64>() {
                    Ok(v) if v.is_finite() => values.push(v),
                    _ => {
                        return Err(Error::TypeParseError {
                            table: name.to_string(),
                            column: spec.name.clone(),
                            row,
                            value: s.clone(),
                        }
                        .into())
                    }
                }
            }
            ColumnData::Numerical(values)
        } else {
            ColumnData::Text(col)
        });
    }
    Ok(TableData::new(name, specs, data)?)
}

/// Loads and validates a dataset directory.
pub fn load_database(dir: &Path) -> Result<(Database, ConstraintGraph)> {
    let meta = read_meta(dir)?;
    check_parent_columns(&meta)?;
    let mut tables = Vec::new();
    for (name, t) in &meta.tables {
        tables.push(read_table(dir, name, t)?);
    }
    let db = Database::new(tables);
    let graph = ConstraintGraph::from_database(&db)?;
    validate_database(&db, &graph)?;
    Ok((db, graph))
}

/// Metadata describing `db`.
pub fn meta_for(db: &Database) -> DatasetMeta {
    let mut tables = BTreeMap::new();
    for (name, t) in &db.tables {
        let mut meta = TableMeta { primary_key: None, columns: Vec::new(), foreign_keys: Vec::new() };
        for c in &t.columns {
            match c.kind {
                ColumnKind::PrimaryKey => meta.primary_key = Some(PrimaryKeyMeta::Single(c.name.clone())),
                ColumnKind::ForeignKey => meta.foreign_keys.push(ForeignKeyMeta {
                    column: c.name.clone(),
                    parent_table: c.parent_table.clone().unwrap_or_default(),
                    parent_column: c.parent_column.clone().unwrap_or_default(),
                }),
                ColumnKind::Numerical => meta.columns.push(ColumnMeta { name: c.name.clone(), kind: FeatureKind::Numerical }),
                ColumnKind::Categorical => meta.columns.push(ColumnMeta { name: c.name.clone(), kind: FeatureKind::Categorical }),
            }
        }
        tables.insert(name.clone(), meta);
    }
    DatasetMeta { tables }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::json(path, e))
}

/// Writes `db` as a dataset directory, creating `dir` if needed.
pub fn write_database(db: &Database, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write_json(&dir.join(META_FILE), &meta_for(db))?;
    for (name, t) in &db.tables {
        let path = dir.join(format!("{name}.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::csv(&path, e))?;
        w.write_record(t.columns.iter().map(|c| c.name.as_str())).map_err(|e| CliError::csv(&path, e))?;
        for r in 0..t.row_count() {
            w.write_record(t.data.iter().map(|d| d.cell_string(r))).map_err(|e| CliError::csv(&path, e))?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
    }
    Ok(())
}
