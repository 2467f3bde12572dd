//! Tables, keys and the foreign-key constraint graph.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numerical,
    Categorical,
    PrimaryKey,
    ForeignKey,
}

impl ColumnKind {
    pub fn is_key(self) -> bool {
        matches!(self, ColumnKind::PrimaryKey | ColumnKind::ForeignKey)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_table: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_column: Option<String>,
}

impl ColumnSpec {
    pub fn numerical(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: ColumnKind::Numerical, parent_table: None, parent_column: None }
    }

    pub fn categorical(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: ColumnKind::Categorical, parent_table: None, parent_column: None }
    }

    pub fn primary_key(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: ColumnKind::PrimaryKey, parent_table: None, parent_column: None }
    }

    pub fn foreign_key(name: impl Into<String>, parent_table: impl Into<String>, parent_column: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::ForeignKey,
            parent_table: Some(parent_table.into()),
            parent_column: Some(parent_column.into()),
        }
    }
}

/// Cell storage for one column. Numerical columns hold finite floats; categorical and
/// key columns hold opaque strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnData {
    Numerical(Vec<f64>),
    Text(Vec<String>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numerical(v) => v.len(),
            ColumnData::Text(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_numerical(&self) -> Option<&[f64]> {
        match self {
            ColumnData::Numerical(v) => Some(v),
            ColumnData::Text(_) => None,
        }
    }

    pub fn as_text(&self) -> Option<&[String]> {
        match self {
            ColumnData::Text(v) => Some(v),
            ColumnData::Numerical(_) => None,
        }
    }

    /// Renders cell `row` the way it is written to CSV.
    pub fn cell_string(&self, row: usize) -> String {
        match self {
            ColumnData::Numerical(v) => format!("{}", v[row]),
            ColumnData::Text(v) => v[row].clone(),
        }
    }

    fn select(&self, idx: &[usize]) -> ColumnData {
        match self {
            ColumnData::Numerical(v) => ColumnData::Numerical(idx.iter().map(|&i| v[i]).collect()),
            ColumnData::Text(v) => ColumnData::Text(idx.iter().map(|&i| v[i].clone()).collect()),
        }
    }
}

/// One relational table, stored column-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableData {
    pub name: String,
    pub columns: Vec<ColumnSpec>,
    pub data: Vec<ColumnData>,
    row_count: usize,
}

impl TableData {
    /// Builds a table, checking that every column has the same length, that storage
    /// matches the column kind, and that numerical cells are finite.
    pub fn new(name: impl Into<String>, columns: Vec<ColumnSpec>, data: Vec<ColumnData>) -> Result<Self> {
        let name = name.into();
        if columns.len() != data.len() {
            return Err(Error::DimensionMismatch { expected: columns.len(), got: data.len() });
        }
        let mut seen = BTreeSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::InvalidSchema(format!("duplicate column `{}` in table `{name}`", c.name)));
            }
            if (c.kind == ColumnKind::ForeignKey) != (c.parent_table.is_some() && c.parent_column.is_some()) {
                return Err(Error::InvalidSchema(format!(
                    "column `{name}.{}`: parent reference must be set exactly for foreign keys",
                    c.name
                )));
            }
        }
        let row_count = data.first().map_or(0, ColumnData::len);
        for (c, d) in columns.iter().zip(&data) {
            if d.len() != row_count {
                return Err(Error::DimensionMismatch { expected: row_count, got: d.len() });
            }
            match (c.kind, d) {
                (ColumnKind::Numerical, ColumnData::Numerical(v)) => {
                    if let Some(row) = v.iter().position(|x| !x.is_finite()) {
                        return Err(Error::TypeParseError {
                            table: name,
                            column: c.name.clone(),
                            row,
                            value: format!("{}", v[row]),
                        });
                    }
                }
                (ColumnKind::Numerical, ColumnData::Text(_)) | (_, ColumnData::Numerical(_)) => {
                    return Err(Error::InvalidSchema(format!("column `{name}.{}` has storage of the wrong type", c.name)));
                }
                _ => {}
            }
        }
        if columns.iter().filter(|c| c.kind == ColumnKind::PrimaryKey).count() > 1 {
            return Err(Error::InvalidSchema(format!("table `{name}` declares more than one primary key column")));
        }
        Ok(Self { name, columns, data, row_count })
    }

    /// A table with rows but no columns (all of its columns were stripped).
    pub fn without_columns(name: impl Into<String>, rows: usize) -> Self {
        Self { name: name.into(), columns: Vec::new(), data: Vec::new(), row_count: rows }
    }

    #[inline]
    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Result<&ColumnData> {
        self.column_index(name).map(|i| &self.data[i]).ok_or_else(|| Error::UnknownColumn {
            table: self.name.clone(),
            column: name.to_string(),
        })
    }

    pub fn primary_key_index(&self) -> Option<usize> {
        self.columns.iter().position(|c| c.kind == ColumnKind::PrimaryKey)
    }

    /// Indices of the non-key (modelled) columns, in table order.
    pub fn feature_indices(&self) -> Vec<usize> {
        self.columns.iter().enumerate().filter(|(_, c)| !c.kind.is_key()).map(|(i, _)| i).collect()
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> TableData {
        TableData {
            name: self.name.clone(),
            columns: self.columns.clone(),
            data: self.data.iter().map(|d| d.select(idx)).collect(),
            row_count: idx.len(),
        }
    }

    /// Copy restricted to the non-key columns.
    pub fn features_only(&self) -> TableData {
        let keep = self.feature_indices();
        TableData {
            name: self.name.clone(),
            columns: keep.iter().map(|&i| self.columns[i].clone()).collect(),
            data: keep.iter().map(|&i| self.data[i].clone()).collect(),
            row_count: self.row_count,
        }
    }
}

/// A set of tables keyed by name.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Database {
    pub tables: BTreeMap<String, TableData>,
}

impl Database {
    pub fn new(tables: impl IntoIterator<Item = TableData>) -> Self {
        Self { tables: tables.into_iter().map(|t| (t.name.clone(), t)).collect() }
    }

    pub fn table(&self, name: &str) -> Result<&TableData> {
        self.tables.get(name).ok_or_else(|| Error::MissingTable(name.to_string()))
    }
}

/// A foreign-key edge `child.fk_column -> parent`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ForeignKeyEdge {
    pub child: String,
    pub fk_column: String,
    pub parent: String,
}

impl ForeignKeyEdge {
    pub fn new(child: impl Into<String>, fk_column: impl Into<String>, parent: impl Into<String>) -> Self {
        Self { child: child.into(), fk_column: fk_column.into(), parent: parent.into() }
    }

    /// Ordering key for deterministic tie-breaks: (child, parent, column).
    fn tie_key(&self) -> (&str, &str, &str) {
        (&self.child, &self.parent, &self.fk_column)
    }
}

impl core::fmt::Display for ForeignKeyEdge {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}.{} -> {}", self.child, self.fk_column, self.parent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopoDirection {
    /// Leaves first: an edge `(i -> j)` comes after every edge into `i`.
    BottomUp,
    /// Roots first: an edge `(i -> j)` comes after every edge out of `j`.
    TopDown,
}

/// Tables plus foreign-key edges, validated to be a DAG.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintGraph {
    nodes: Vec<String>,
    edges: Vec<ForeignKeyEdge>,
}

impl ConstraintGraph {
    pub fn new(nodes: impl IntoIterator<Item = String>, edges: impl IntoIterator<Item = ForeignKeyEdge>) -> Result<Self> {
        let nodes: BTreeSet<String> = nodes.into_iter().collect();
        let mut edges: Vec<ForeignKeyEdge> = edges.into_iter().collect();
        edges.sort_by(|a, b| a.tie_key().cmp(&b.tie_key()));
        edges.dedup();
        for e in &edges {
            for t in [&e.child, &e.parent] {
                if !nodes.contains(t) {
                    return Err(Error::UnknownTable(t.clone()));
                }
            }
        }
        let graph = Self { nodes: nodes.into_iter().collect(), edges };
        graph.table_order()?;
        Ok(graph)
    }

    /// Reads the edges off the foreign-key column specs of a database.
    pub fn from_database(db: &Database) -> Result<Self> {
        let mut edges = Vec::new();
        for t in db.tables.values() {
            for c in &t.columns {
                if c.kind == ColumnKind::ForeignKey {
                    let parent = c.parent_table.clone().unwrap_or_default();
                    edges.push(ForeignKeyEdge::new(t.name.clone(), c.name.clone(), parent));
                }
            }
        }
        Self::new(db.tables.keys().cloned(), edges)
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn edges(&self) -> &[ForeignKeyEdge] {
        &self.edges
    }

    pub fn contains(&self, table: &str) -> bool {
        self.nodes.binary_search_by(|n| n.as_str().cmp(table)).is_ok()
    }

    pub fn parent_edges<'a>(&'a self, table: &'a str) -> impl Iterator<Item = &'a ForeignKeyEdge> + 'a {
        self.edges.iter().filter(move |e| e.child == table)
    }

    pub fn child_edges<'a>(&'a self, table: &'a str) -> impl Iterator<Item = &'a ForeignKeyEdge> + 'a {
        self.edges.iter().filter(move |e| e.parent == table)
    }

    /// Tables without parents.
    pub fn roots(&self) -> Vec<&str> {
        self.nodes.iter().filter(|n| self.parent_edges(n).next().is_none()).map(String::as_str).collect()
    }

    /// Tables ordered parents-first (Kahn's algorithm, smallest name first among ready tables).
    pub fn table_order(&self) -> Result<Vec<String>> {
        let mut pending: BTreeMap<&str, usize> = self.nodes.iter().map(|n| (n.as_str(), 0)).collect();
        for e in &self.edges {
            *pending.get_mut(e.child.as_str()).expect("validated node") += 1;
        }
        let mut ready: BTreeSet<&str> = pending.iter().filter(|(_, &d)| d == 0).map(|(&n, _)| n).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(n) = ready.pop_first() {
            order.push(n.to_string());
            for e in self.child_edges(n) {
                let d = pending.get_mut(e.child.as_str()).expect("validated node");
                *d -= 1;
                if *d == 0 {
                    ready.insert(e.child.as_str());
                }
            }
        }
        if order.len() != self.nodes.len() {
            let stuck = pending.iter().find(|(n, _)| !order.iter().any(|o| o == *n)).map(|(n, _)| n.to_string());
            return Err(Error::CycleDetected(stuck.unwrap_or_default()));
        }
        Ok(order)
    }

    /// Number of nodes on the longest directed path.
    pub fn depth(&self) -> usize {
        let order = self.table_order().expect("graph validated at construction");
        let mut longest: BTreeMap<&str, usize> = BTreeMap::new();
        for t in &order {
            let d = self.parent_edges(t).map(|e| longest[e.parent.as_str()] + 1).max().unwrap_or(1);
            longest.insert(t.as_str(), d);
        }
        longest.values().copied().max().unwrap_or(0)
    }

    /// Edges in topological order with the lexicographically smallest `(child, parent, column)`
    /// ready edge chosen first.
    pub fn topo_order(&self, direction: TopoDirection) -> Result<Vec<ForeignKeyEdge>> {
        // An edge is blocked by the edges that must precede it.
        let blockers = |e: &ForeignKeyEdge| -> Vec<usize> {
            self.edges
                .iter()
                .enumerate()
                .filter(|(_, o)| match direction {
                    TopoDirection::BottomUp => o.parent == e.child,
                    TopoDirection::TopDown => o.child == e.parent,
                })
                .map(|(i, _)| i)
                .collect()
        };
        let deps: Vec<Vec<usize>> = self.edges.iter().map(blockers).collect();
        let mut done = vec![false; self.edges.len()];
        let mut out = Vec::with_capacity(self.edges.len());
        while out.len() < self.edges.len() {
            let next = (0..self.edges.len())
                .filter(|&i| !done[i] && deps[i].iter().all(|&d| done[d]))
                .min_by(|&a, &b| self.edges[a].tie_key().cmp(&self.edges[b].tie_key()));
            match next {
                Some(i) => {
                    done[i] = true;
                    out.push(self.edges[i].clone());
                }
                None => {
                    let e = self.edges.iter().zip(&done).find(|(_, d)| !**d).map(|(e, _)| e.child.clone());
                    return Err(Error::CycleDetected(e.unwrap_or_default()));
                }
            }
        }
        Ok(out)
    }

    fn check_table(&self, t: &str) -> Result<()> {
        if self.contains(t) {
            Ok(())
        } else {
            Err(Error::UnknownTable(t.to_string()))
        }
    }

    /// Undirected BFS distances (in edges) from `table` to every reachable table.
    fn distances_from(&self, table: &str) -> BTreeMap<&str, usize> {
        let mut dist: BTreeMap<&str, usize> = BTreeMap::new();
        let Some(start) = self.nodes.iter().find(|n| n.as_str() == table) else {
            return dist;
        };
        dist.insert(start.as_str(), 0);
        let mut queue = VecDeque::from([start.as_str()]);
        while let Some(cur) = queue.pop_front() {
            let d = dist[cur];
            for e in &self.edges {
                let nbr = if e.child == cur {
                    e.parent.as_str()
                } else if e.parent == cur {
                    e.child.as_str()
                } else {
                    continue;
                };
                if !dist.contains_key(nbr) {
                    dist.insert(nbr, d + 1);
                    queue.push_back(nbr);
                }
            }
        }
        dist
    }

    /// Length of the shortest undirected path between two tables; `None` when disconnected.
    pub fn hop_distance(&self, table_a: &str, table_b: &str) -> Result<Option<usize>> {
        self.check_table(table_a)?;
        self.check_table(table_b)?;
        Ok(self.distances_from(table_a).get(table_b).copied())
    }

    /// All shortest undirected paths from `a` to `b`, as sequences of steps.
    fn shortest_paths(&self, a: &str, b: &str) -> Vec<Vec<PathStep>> {
        let from_a = self.distances_from(a);
        let from_b = self.distances_from(b);
        let Some(&total) = from_a.get(b) else {
            return Vec::new();
        };
        let mut paths = Vec::new();
        let mut current = Vec::new();
        self.extend_paths(a, total, &from_a, &from_b, &mut current, &mut paths);
        paths
    }

    fn extend_paths(
        &self,
        cur: &str,
        total: usize,
        from_a: &BTreeMap<&str, usize>,
        from_b: &BTreeMap<&str, usize>,
        current: &mut Vec<PathStep>,
        out: &mut Vec<Vec<PathStep>>,
    ) {
        if current.len() == total {
            out.push(current.clone());
            return;
        }
        let here = from_a[cur];
        for (i, e) in self.edges.iter().enumerate() {
            let (nbr, up) = if e.child == cur {
                (e.parent.as_str(), true)
            } else if e.parent == cur {
                (e.child.as_str(), false)
            } else {
                continue;
            };
            let on_path = from_a.get(nbr) == Some(&(here + 1)) && from_b.get(nbr).map(|d| here + 1 + d) == Some(total);
            if on_path {
                current.push(PathStep { edge: i, towards_parent: up });
                self.extend_paths(nbr, total, from_a, from_b, current, out);
                current.pop();
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct PathStep {
    edge: usize,
    towards_parent: bool,
}

/// Maps each child row to the index of the parent row its foreign key references.
pub fn fk_row_map(db: &Database, edge: &ForeignKeyEdge) -> Result<Vec<usize>> {
    let child = db.table(&edge.child)?;
    let parent = db.table(&edge.parent)?;
    let pk_idx = parent
        .primary_key_index()
        .ok_or_else(|| Error::InvalidSchema(format!("table `{}` is referenced but has no primary key", parent.name)))?;
    let pk = parent.data[pk_idx].as_text().expect("key columns are text");
    let lookup: BTreeMap<&str, usize> = pk.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect();
    let fk = child
        .column(&edge.fk_column)?
        .as_text()
        .ok_or_else(|| Error::InvalidSchema(format!("foreign key `{}` is not a key column", edge.fk_column)))?;
    fk.iter()
        .enumerate()
        .map(|(row, v)| {
            lookup.get(v.as_str()).copied().ok_or_else(|| Error::DanglingForeignKey {
                table: edge.child.clone(),
                column: edge.fk_column.clone(),
                row,
                value: v.clone(),
                parent: edge.parent.clone(),
            })
        })
        .collect()
}

/// Child-row lists per parent row (the foreign-key groups), from a child -> parent row map.
pub fn groups_from_map(fk_map: &[usize], parent_rows: usize) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); parent_rows];
    for (child, &parent) in fk_map.iter().enumerate() {
        groups[parent].push(child);
    }
    groups
}

/// Row-index pairs `(row in a, row in b)` linked through the shortest foreign-key join path(s).
///
/// When several shortest paths exist the pair sets are unioned; output is sorted and
/// deduplicated. `a == b` gives the identity pairs.
pub fn join_path_rows(db: &Database, graph: &ConstraintGraph, table_a: &str, table_b: &str) -> Result<Vec<(usize, usize)>> {
    let a = db.table(table_a)?;
    db.table(table_b)?;
    if graph.hop_distance(table_a, table_b)?.is_none() {
        return Err(Error::Disconnected(table_a.to_string(), table_b.to_string()));
    }
    let paths = graph.shortest_paths(table_a, table_b);
    let mut maps: BTreeMap<usize, (Vec<usize>, Vec<Vec<usize>>)> = BTreeMap::new();
    let mut out: Vec<(usize, usize)> = Vec::new();
    for path in &paths {
        let mut pairs: Vec<(usize, usize)> = (0..a.row_count()).map(|r| (r, r)).collect();
        for step in path {
            let edge = &graph.edges[step.edge];
            if let alloc::collections::btree_map::Entry::Vacant(slot) = maps.entry(step.edge) {
                let m = fk_row_map(db, edge)?;
                let g = groups_from_map(&m, db.table(&edge.parent)?.row_count());
                slot.insert((m, g));
            }
            let (map, groups) = &maps[&step.edge];
            pairs = if step.towards_parent {
                pairs.into_iter().map(|(s, c)| (s, map[c])).collect()
            } else {
                pairs.into_iter().flat_map(|(s, p)| groups[p].iter().map(move |&c| (s, c))).collect()
            };
        }
        out.extend(pairs);
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Checks key uniqueness, referential integrity and the schema/graph agreement.
pub fn validate_database(db: &Database, graph: &ConstraintGraph) -> Result<()> {
    for n in graph.nodes() {
        db.table(n)?;
    }
    for t in db.tables.values() {
        if !graph.contains(&t.name) {
            return Err(Error::UnknownTable(t.name.clone()));
        }
        if let Some(pk) = t.primary_key_index() {
            let values = t.data[pk].as_text().expect("key columns are text");
            let mut seen = BTreeSet::new();
            for (row, v) in values.iter().enumerate() {
                if !seen.insert(v.as_str()) {
                    return Err(Error::DuplicatePrimaryKey {
                        table: t.name.clone(),
                        column: t.columns[pk].name.clone(),
                        row,
                        value: v.clone(),
                    });
                }
            }
        }
        for c in t.columns.iter().filter(|c| c.kind == ColumnKind::ForeignKey) {
            let parent_name = c.parent_table.as_deref().unwrap_or_default();
            let parent = db.table(parent_name)?;
            let parent_pk = parent.primary_key_index().map(|i| parent.columns[i].name.as_str());
            if parent_pk != c.parent_column.as_deref() {
                return Err(Error::InvalidSchema(format!(
                    "foreign key `{}.{}` must reference the primary key of `{parent_name}`",
                    t.name, c.name
                )));
            }
        }
    }
    for e in graph.edges() {
        fk_row_map(db, e)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge(c: &str, p: &str) -> ForeignKeyEdge {
        ForeignKeyEdge::new(c, format!("{p}_id"), p)
    }

    fn graph(nodes: &[&str], edges: &[(&str, &str)]) -> Result<ConstraintGraph> {
        ConstraintGraph::new(nodes.iter().map(|s| s.to_string()), edges.iter().map(|(c, p)| edge(c, p)))
    }

    /// Lexicographically first valid order by brute-force permutation enumeration.
    fn brute_force_order(g: &ConstraintGraph, dir: TopoDirection) -> Vec<ForeignKeyEdge> {
        fn permute(items: &mut Vec<ForeignKeyEdge>, k: usize, out: &mut Vec<Vec<ForeignKeyEdge>>) {
            if k == items.len() {
                out.push(items.clone());
                return;
            }
            for i in k..items.len() {
                items.swap(k, i);
                permute(items, k + 1, out);
                items.swap(k, i);
            }
        }
        let mut all = Vec::new();
        permute(&mut g.edges().to_vec(), 0, &mut all);
        let valid = |order: &Vec<ForeignKeyEdge>| {
            order.iter().enumerate().all(|(pos, e)| {
                order.iter().enumerate().all(|(other, o)| {
                    let must_precede = match dir {
                        TopoDirection::BottomUp => o.parent == e.child,
                        TopoDirection::TopDown => o.child == e.parent,
                    };
                    !must_precede || other < pos
                })
            })
        };
        let key = |o: &Vec<ForeignKeyEdge>| -> Vec<(String, String, String)> {
            o.iter().map(|e| (e.child.clone(), e.parent.clone(), e.fk_column.clone())).collect()
        };
        all.into_iter().filter(valid).min_by_key(key).unwrap_or_default()
    }

    #[test]
    fn topo_chain_bottom_up() {
        let g = graph(&["Loan", "Account", "District"], &[("Loan", "Account"), ("Account", "District")]).unwrap();
        let order = g.topo_order(TopoDirection::BottomUp).unwrap();
        assert_eq!(order, vec![edge("Loan", "Account"), edge("Account", "District")]);
        assert_eq!(order, brute_force_order(&g, TopoDirection::BottomUp));
        let td = g.topo_order(TopoDirection::TopDown).unwrap();
        assert_eq!(td, vec![edge("Account", "District"), edge("Loan", "Account")]);
    }

    #[test]
    fn topo_tie_break_by_names() {
        let g = graph(&["Disposition", "Account", "Client"], &[("Disposition", "Client"), ("Disposition", "Account")]).unwrap();
        for dir in [TopoDirection::BottomUp, TopoDirection::TopDown] {
            let order = g.topo_order(dir).unwrap();
            assert_eq!(order, vec![edge("Disposition", "Account"), edge("Disposition", "Client")]);
            assert_eq!(order, brute_force_order(&g, dir));
        }
    }

    #[test]
    fn topo_matches_brute_force_on_berka() {
        let g = berka();
        for dir in [TopoDirection::BottomUp, TopoDirection::TopDown] {
            assert_eq!(g.topo_order(dir).unwrap(), brute_force_order(&g, dir));
        }
    }

    #[test]
    fn empty_and_single() {
        let g = graph(&["T"], &[]).unwrap();
        assert!(g.topo_order(TopoDirection::BottomUp).unwrap().is_empty());
        assert_eq!(g.depth(), 1);
        assert_eq!(g.hop_distance("T", "T").unwrap(), Some(0));
    }

    #[test]
    fn cycles_rejected() {
        let err = graph(&["a", "b"], &[("a", "b"), ("b", "a")]).unwrap_err();
        assert!(matches!(err, Error::CycleDetected(_)));
        assert!(matches!(graph(&["a"], &[("a", "a")]).unwrap_err(), Error::CycleDetected(_)));
    }

    pub(crate) fn berka() -> ConstraintGraph {
        graph(
            &["account", "card", "client", "disp", "district", "loan", "order", "trans"],
            &[
                ("account", "district"),
                ("client", "district"),
                ("disp", "account"),
                ("disp", "client"),
                ("card", "disp"),
                ("loan", "account"),
                ("order", "account"),
                ("trans", "account"),
            ],
        )
        .unwrap()
    }

    #[test]
    fn berka_shape() {
        let g = berka();
        assert_eq!(g.edges().len(), 8);
        assert_eq!(g.depth(), 4);
        assert_eq!(g.hop_distance("loan", "district").unwrap(), Some(2));
        assert_eq!(g.hop_distance("district", "loan").unwrap(), Some(2));
        assert_eq!(g.hop_distance("card", "district").unwrap(), Some(3));
        assert!(matches!(g.hop_distance("loan", "nope"), Err(Error::UnknownTable(_))));
    }

    #[test]
    fn disconnected_tables() {
        let g = graph(&["a", "b"], &[]).unwrap();
        assert_eq!(g.hop_distance("a", "b").unwrap(), None);
    }

    fn text(v: &[&str]) -> ColumnData {
        ColumnData::Text(v.iter().map(|s| s.to_string()).collect())
    }

    /// grandparent g (2 rows) <- parent p (3 rows) <- child c (5 rows)
    fn toy() -> (Database, ConstraintGraph) {
        let g = TableData::new(
            "g",
            vec![ColumnSpec::primary_key("id"), ColumnSpec::numerical("x")],
            vec![text(&["g0", "g1"]), ColumnData::Numerical(vec![1.0, 2.0])],
        )
        .unwrap();
        let p = TableData::new(
            "p",
            vec![ColumnSpec::primary_key("id"), ColumnSpec::foreign_key("g_id", "g", "id")],
            vec![text(&["p0", "p1", "p2"]), text(&["g1", "g0", "g1"])],
        )
        .unwrap();
        let c = TableData::new(
            "c",
            vec![ColumnSpec::primary_key("id"), ColumnSpec::foreign_key("p_id", "p", "id")],
            vec![text(&["c0", "c1", "c2", "c3", "c4"]), text(&["p2", "p0", "p0", "p1", "p2"])],
        )
        .unwrap();
        let db = Database::new([g, p, c]);
        let graph = ConstraintGraph::from_database(&db).unwrap();
        (db, graph)
    }

    #[test]
    fn join_one_hop_is_fk_lookup() {
        let (db, g) = toy();
        let pairs = join_path_rows(&db, &g, "c", "p").unwrap();
        assert_eq!(pairs, vec![(0, 2), (1, 0), (2, 0), (3, 1), (4, 2)]);
        assert_eq!(pairs.len(), db.table("c").unwrap().row_count());
        let rev = join_path_rows(&db, &g, "p", "c").unwrap();
        let mut flipped: Vec<_> = pairs.iter().map(|&(a, b)| (b, a)).collect();
        flipped.sort_unstable();
        assert_eq!(rev, flipped);
    }

    #[test]
    fn join_two_hop_matches_nested_loop() {
        let (db, g) = toy();
        let pairs = join_path_rows(&db, &g, "c", "g").unwrap();
        // nested-loop join oracle over string keys
        let c = db.table("c").unwrap();
        let p = db.table("p").unwrap();
        let gg = db.table("g").unwrap();
        let c_fk = c.column("p_id").unwrap().as_text().unwrap();
        let p_pk = p.column("id").unwrap().as_text().unwrap();
        let p_fk = p.column("g_id").unwrap().as_text().unwrap();
        let g_pk = gg.column("id").unwrap().as_text().unwrap();
        let mut want = Vec::new();
        for (ci, cf) in c_fk.iter().enumerate() {
            for (pi, pk) in p_pk.iter().enumerate() {
                if cf != pk {
                    continue;
                }
                for (gi, gk) in g_pk.iter().enumerate() {
                    if &p_fk[pi] == gk {
                        want.push((ci, gi));
                    }
                }
            }
        }
        want.sort_unstable();
        assert_eq!(pairs, want);
        assert_eq!(join_path_rows(&db, &g, "g", "g").unwrap(), vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn dangling_fk_detected() {
        let (mut db, g) = toy();
        let c = db.tables.get_mut("c").unwrap();
        c.data[1] = text(&["p2", "p0", "p9", "p1", "p2"]);
        match validate_database(&db, &g).unwrap_err() {
            Error::DanglingForeignKey { table, row, value, .. } => {
                assert_eq!((table.as_str(), row, value.as_str()), ("c", 2, "p9"));
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn duplicate_pk_detected() {
        let (mut db, g) = toy();
        db.tables.get_mut("g").unwrap().data[0] = text(&["g0", "g0"]);
        assert!(matches!(validate_database(&db, &g).unwrap_err(), Error::DuplicatePrimaryKey { row: 1, .. }));
    }

    #[test]
    fn table_rejects_nan() {
        let err = TableData::new("t", vec![ColumnSpec::numerical("x")], vec![ColumnData::Numerical(vec![1.0, f64::NAN])]);
        assert!(matches!(err, Err(Error::TypeParseError { row: 1, .. })));
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn random_dag() -> impl Strategy<Value = ConstraintGraph> {
        (2usize..7, proptest::collection::vec(any::<(u8, u8)>(), 0..10)).prop_map(|(n, pairs)| {
            let nodes: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
            let edges = pairs
                .into_iter()
                .map(|(a, b)| (a as usize % n, b as usize % n))
                .filter(|(a, b)| a > b)
                .map(|(a, b)| ForeignKeyEdge::new(format!("t{a}"), format!("fk_t{b}"), format!("t{b}")));
            ConstraintGraph::new(nodes, edges).unwrap()
        })
    }

    proptest! {
        #[test]
        fn hop_distance_is_a_metric(g in random_dag()) {
            let nodes = g.nodes().to_vec();
            for a in &nodes {
                for b in &nodes {
                    let ab = g.hop_distance(a, b).unwrap();
                    prop_assert_eq!(ab, g.hop_distance(b, a).unwrap());
                    prop_assert_eq!(ab == Some(0), a == b);
                    for c in &nodes {
                        if let (Some(ab), Some(bc), Some(ac)) =
                            (ab, g.hop_distance(b, c).unwrap(), g.hop_distance(a, c).unwrap())
                        {
                            prop_assert!(ac <= ab + bc);
                        }
                    }
                }
            }
        }

        #[test]
        fn topo_orders_respect_dependencies(g in random_dag()) {
            let bu = g.topo_order(TopoDirection::BottomUp).unwrap();
            prop_assert_eq!(bu.len(), g.edges().len());
            for (i, e) in bu.iter().enumerate() {
                for o in &bu[i + 1..] {
                    prop_assert!(o.parent != e.child);
                }
            }
            let td = g.topo_order(TopoDirection::TopDown).unwrap();
            for (i, e) in td.iter().enumerate() {
                for o in &td[i + 1..] {
                    prop_assert!(o.child != e.parent);
                }
            }
        }
    }
}
