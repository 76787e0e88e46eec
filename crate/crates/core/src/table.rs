//! Minimal relational tables with projection and equi-join, used for combined
//! entity tables and key-relation path joins.

use serde::{Deserialize, Serialize};

use crate::ingest::QualifiedAttr;

pub type Value = Option<String>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub attrs: Vec<QualifiedAttr>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(name: impl Into<String>, attrs: Vec<QualifiedAttr>) -> Self {
        Table {
            name: name.into(),
            attrs,
            rows: Vec::new(),
        }
    }

    pub fn col(&self, attr: &QualifiedAttr) -> Option<usize> {
        self.attrs.iter().position(|a| a == attr)
    }

    /// Column lookup by unqualified name; unambiguous matches only.
    pub fn col_named(&self, attr: &str) -> Option<usize> {
        let mut hits = self.attrs.iter().enumerate().filter(|(_, a)| a.attr == attr);
        let first = hits.next().map(|(i, _)| i)?;
        if hits.next().is_some() {
            return None;
        }
        Some(first)
    }

    pub fn project(&self, cols: &[usize]) -> Table {
        Table {
            name: self.name.clone(),
            attrs: cols.iter().map(|&i| self.attrs[i].clone()).collect(),
            rows: self
                .rows
                .iter()
                .map(|r| cols.iter().map(|&i| r[i].clone()).collect())
                .collect(),
        }
    }

    /// Pairwise hash equi-join on (left column, right column) pairs. Null key
    /// values never match, so rows with orphaned foreign keys drop out.
    pub fn join(&self, other: &Table, on: &[(usize, usize)]) -> Table {
        use std::collections::HashMap;
        let mut index: HashMap<Vec<&str>, Vec<usize>> = HashMap::new();
        'right: for (j, row) in other.rows.iter().enumerate() {
            let mut key = Vec::with_capacity(on.len());
            for &(_, rc) in on {
                match row[rc].as_deref() {
                    Some(v) => key.push(v),
                    None => continue 'right,
                }
            }
            index.entry(key).or_default().push(j);
        }
        let mut attrs = self.attrs.clone();
        attrs.extend(other.attrs.iter().cloned());
        let mut out = Table {
            name: format!("{}*{}", self.name, other.name),
            attrs,
            rows: Vec::new(),
        };
        'left: for row in &self.rows {
            let mut key = Vec::with_capacity(on.len());
            for &(lc, _) in on {
                match row[lc].as_deref() {
                    Some(v) => key.push(v),
                    None => continue 'left,
                }
            }
            if let Some(matches) = index.get(&key) {
                for &j in matches {
                    let mut combined = row.clone();
                    combined.extend(other.rows[j].iter().cloned());
                    out.rows.push(combined);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(name: &str, attrs: &[(&str, &str)], rows: &[&[Option<&str>]]) -> Table {
        Table {
            name: name.into(),
            attrs: attrs
                .iter()
                .map(|(t, a)| QualifiedAttr::new(*t, *a))
                .collect(),
            rows: rows
                .iter()
                .map(|r| r.iter().map(|v| v.map(String::from)).collect())
                .collect(),
        }
    }

    /// Cross product then filter, the defining form of the equi-join.
    fn brute_join(a: &Table, b: &Table, on: &[(usize, usize)]) -> Vec<Vec<Value>> {
        let mut out = Vec::new();
        for ra in &a.rows {
            for rb in &b.rows {
                let ok = on.iter().all(|&(lc, rc)| {
                    matches!((&ra[lc], &rb[rc]), (Some(x), Some(y)) if x == y)
                });
                if ok {
                    let mut row = ra.clone();
                    row.extend(rb.iter().cloned());
                    out.push(row);
                }
            }
        }
        out
    }

    #[test]
    fn hash_join_equals_cross_product_filter() {
        let a = t(
            "A",
            &[("A", "id"), ("A", "x")],
            &[
                &[Some("1"), Some("p")],
                &[Some("2"), Some("q")],
                &[Some("2"), Some("r")],
                &[None, Some("s")],
            ],
        );
        let b = t(
            "B",
            &[("B", "id"), ("B", "y")],
            &[
                &[Some("2"), Some("u")],
                &[Some("2"), Some("v")],
                &[Some("3"), Some("w")],
            ],
        );
        let joined = a.join(&b, &[(0, 0)]);
        let mut got = joined.rows.clone();
        let mut want = brute_join(&a, &b, &[(0, 0)]);
        got.sort();
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn join_with_empty_table_is_empty() {
        let a = t("A", &[("A", "id")], &[&[Some("1")]]);
        let b = t("B", &[("B", "id")], &[]);
        assert!(a.join(&b, &[(0, 0)]).rows.is_empty());
    }
}
