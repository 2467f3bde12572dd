//! Planted-correlation toy databases.
//!
//! Each household draws a hidden binary regime. The regime shifts the household's own
//! columns, the number and values of its members, and (through the members) the
//! purchases two hops away. The optional diamond adds a `store` root and a `visit` table
//! that references both `household` and `store`.

use clava_core::{ColumnData, ColumnSpec, Database, TableData};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToySpec {
    pub households: usize,
    pub members: bool,
    pub purchases: bool,
    pub diamond: bool,
    pub stores: usize,
}

impl Default for ToySpec {
    fn default() -> Self {
        Self { households: 500, members: true, purchases: true, diamond: false, stores: 200 }
    }
}

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

fn noise(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    Normal::new(0.0, sd).expect("positive sd").sample(rng)
}

fn pick<'a>(rng: &mut ChaCha8Rng, p_first: f64, first: &'a str, second: &'a str) -> String {
    if rng.random_bool(p_first) { first } else { second }.to_string()
}

pub fn generate_toy(spec: &ToySpec, seed: u64) -> Result<Database> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.households;
    let regime: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
    let sign = |r: bool| if r { 1.0 } else { -1.0 };

    let mut income = Vec::with_capacity(n);
    let mut segment = Vec::with_capacity(n);
    for &r in &regime {
        income.push(3.0 * sign(r) + noise(&mut rng, 1.0));
        segment.push(pick(&mut rng, if r { 0.85 } else { 0.15 }, "A", "B"));
    }
    let mut tables = vec![TableData::new(
        "household",
        vec![ColumnSpec::primary_key("household_id"), ColumnSpec::numerical("income"), ColumnSpec::categorical("segment")],
        vec![ColumnData::Text(ids(n)), ColumnData::Numerical(income), ColumnData::Text(segment)],
    )?];

    if spec.members {
        let (mut fk, mut spend, mut plan, mut member_regime) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (h, &r) in regime.iter().enumerate() {
            let count = if r { rng.random_range(1..=3) } else { rng.random_range(3..=5) };
            for _ in 0..count {
                fk.push(h.to_string());
                spend.push(2.0 * sign(r) + noise(&mut rng, 0.7));
                plan.push(pick(&mut rng, if r { 0.8 } else { 0.2 }, "gold", "basic"));
                member_regime.push(r);
            }
        }
        let m = fk.len();
        if spec.purchases {
            let (mut pfk, mut amount) = (Vec::new(), Vec::new());
            for (i, s) in spend.iter().enumerate() {
                for _ in 0..rng.random_range(0..=4) {
                    pfk.push(i.to_string());
                    amount.push(s + noise(&mut rng, 0.5));
                }
            }
            let p = pfk.len();
            tables.push(TableData::new(
                "purchase",
                vec![
                    ColumnSpec::primary_key("purchase_id"),
                    ColumnSpec::foreign_key("member_id", "member", "member_id"),
                    ColumnSpec::numerical("amount"),
                ],
                vec![ColumnData::Text(ids(p)), ColumnData::Text(pfk), ColumnData::Numerical(amount)],
            )?);
        }
        tables.push(TableData::new(
            "member",
            vec![
                ColumnSpec::primary_key("member_id"),
                ColumnSpec::foreign_key("household_id", "household", "household_id"),
                ColumnSpec::numerical("spend"),
                ColumnSpec::categorical("plan"),
            ],
            vec![ColumnData::Text(ids(m)), ColumnData::Text(fk), ColumnData::Numerical(spend), ColumnData::Text(plan)],
        )?);
    }

    if spec.diamond {
        let s = spec.stores.max(1);
        let mut quality = Vec::with_capacity(s);
        let mut region = Vec::with_capacity(s);
        for _ in 0..s {
            let q: f64 = noise(&mut rng, 1.0);
            region.push(pick(&mut rng, if q > 0.0 { 0.8 } else { 0.2 }, "north", "south"));
            quality.push(q);
        }
        let (mut hfk, mut sfk, mut basket) = (Vec::new(), Vec::new(), Vec::new());
        for (h, &r) in regime.iter().enumerate() {
            for _ in 0..rng.random_range(1..=3) {
                let store = rng.random_range(0..s);
                hfk.push(h.to_string());
                sfk.push(store.to_string());
                basket.push(1.5 * sign(r) + 2.0 * quality[store] + noise(&mut rng, 0.5));
            }
        }
        let v = hfk.len();
        tables.push(TableData::new(
            "store",
            vec![ColumnSpec::primary_key("store_id"), ColumnSpec::numerical("quality"), ColumnSpec::categorical("region")],
            vec![ColumnData::Text(ids(s)), ColumnData::Numerical(quality), ColumnData::Text(region)],
        )?);
        tables.push(TableData::new(
            "visit",
            vec![
                ColumnSpec::primary_key("visit_id"),
                ColumnSpec::foreign_key("household_id", "household", "household_id"),
                ColumnSpec::foreign_key("store_id", "store", "store_id"),
                ColumnSpec::numerical("basket"),
            ],
            vec![ColumnData::Text(ids(v)), ColumnData::Text(hfk), ColumnData::Text(sfk), ColumnData::Numerical(basket)],
        )?);
    }
    Ok(Database::new(tables))
}

#[cfg(test)]
mod tests {
    use super::*;
    use clava_core::schema::validate_database;
    use clava_core::ConstraintGraph;

    #[test]
    fn chain_sizes() {
        let db = generate_toy(&ToySpec::default(), 1).unwrap();
        let g = ConstraintGraph::from_database(&db).unwrap();
        validate_database(&db, &g).unwrap();
        assert_eq!(g.depth(), 3);
        let members = db.table("member").unwrap().row_count();
        let purchases = db.table("purchase").unwrap().row_count();
        assert!((1300..1700).contains(&members), "{members}");
        assert!((2600..3400).contains(&purchases), "{purchases}");
    }

    #[test]
    fn diamond_has_two_foreign_keys() {
        let spec = ToySpec { diamond: true, purchases: false, ..ToySpec::default() };
        let db = generate_toy(&spec, 2).unwrap();
        let g = ConstraintGraph::from_database(&db).unwrap();
        assert_eq!(g.parent_edges("visit").count(), 2);
        assert_eq!(generate_toy(&spec, 2).unwrap(), db);
    }
}
