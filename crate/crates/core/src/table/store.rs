use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::Table;

/// A specific version of a table base, rendered as `{base}_v{version}.csv`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TableRef {
    pub base: String,
    pub version: u32,
}

impl TableRef {
    pub fn new(base: impl Into<String>, version: u32) -> TableRef {
        TableRef { base: base.into(), version }
    }

    pub fn rendered(&self) -> String {
        format!("{}_v{}.csv", self.base, self.version)
    }

    /// Splits a rendered name back into base and version.
    pub fn parse_rendered(name: &str) -> Option<TableRef> {
        let stem = name.strip_suffix(".csv")?;
        let pos = stem.rfind("_v")?;
        let digits = &stem[pos + 2..];
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || pos == 0 {
            return None;
        }
        Some(TableRef::new(&stem[..pos], digits.parse().ok()?))
    }
}

impl fmt::Display for TableRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.rendered())
    }
}

/// Strips `.csv`; the remainder is the base a plain table name refers to.
pub(crate) fn base_of(name: &str) -> &str {
    name.strip_suffix(".csv").unwrap_or(name)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StoreError {
    #[error("table {0} is already stored")]
    AlreadyStored(String),
}

/// Append-only store of table versions. Every base holds the contiguous
/// versions `0..=latest`; stored entries are never replaced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VersionedStore {
    entries: BTreeMap<String, Table>,
    latest: BTreeMap<String, u32>,
}

impl VersionedStore {
    pub fn new() -> VersionedStore {
        VersionedStore::default()
    }

    /// Stores `table` as the next version of `base` and returns its reference.
    pub fn store_version(&mut self, base: &str, table: Table) -> TableRef {
        let version = self.latest.get(base).map_or(0, |v| v + 1);
        let r = TableRef::new(base, version);
        self.insert(&r, table).expect("next version is always fresh");
        r
    }

    fn insert(&mut self, r: &TableRef, table: Table) -> Result<(), StoreError> {
        let name = r.rendered();
        if self.entries.contains_key(&name) {
            return Err(StoreError::AlreadyStored(name));
        }
        self.entries.insert(name.clone(), table.with_name(name));
        self.latest.insert(r.base.clone(), r.version);
        Ok(())
    }

    pub fn fetch(&self, rendered: &str) -> Option<&Table> {
        self.entries.get(rendered)
    }

    pub fn get(&self, r: &TableRef) -> Option<&Table> {
        self.entries.get(&r.rendered())
    }

    pub fn latest_version(&self, base: &str) -> Option<u32> {
        self.latest.get(base).copied()
    }

    pub fn latest_ref(&self, base: &str) -> Option<TableRef> {
        self.latest_version(base).map(|v| TableRef::new(base, v))
    }

    /// Resolves a program-level table name. An exact rendered name such as
    /// `sales_v0.csv` pins that version; otherwise the `.csv` stem names a
    /// base and resolves to its latest version.
    pub fn resolve(&self, name: &str) -> Option<TableRef> {
        if self.entries.contains_key(name) {
            return TableRef::parse_rendered(name);
        }
        self.latest_ref(base_of(name))
    }

    pub fn contains_base(&self, base: &str) -> bool {
        self.latest.contains_key(base)
    }

    pub fn bases(&self) -> impl Iterator<Item = &str> {
        self.latest.keys().map(String::as_str)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Latest version of every base, in base order.
    pub fn latest_tables(&self) -> impl Iterator<Item = &Table> {
        self.latest
            .iter()
            .filter_map(|(b, v)| self.entries.get(&TableRef::new(b.as_str(), *v).rendered()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t() -> Table {
        Table::from_strs("sales.csv", &["a"], &[&["1"]]).unwrap()
    }

    #[test]
    fn versions_are_sequential() {
        let mut s = VersionedStore::new();
        assert_eq!(s.store_version("sales", t()).rendered(), "sales_v0.csv");
        assert_eq!(s.store_version("sales", t()).rendered(), "sales_v1.csv");
        assert_eq!(s.latest_version("sales"), Some(1));
        assert_eq!(s.fetch("sales_v0.csv").unwrap().rows(), t().rows());
        assert_eq!(s.fetch("sales_v1.csv").unwrap().name(), "sales_v1.csv");
    }

    #[test]
    fn write_once() {
        let mut s = VersionedStore::new();
        s.store_version("a", t());
        assert_eq!(
            s.insert(&TableRef::new("a", 0), t()),
            Err(StoreError::AlreadyStored("a_v0.csv".into()))
        );
    }

    #[test]
    fn resolution_prefers_exact_versions() {
        let mut s = VersionedStore::new();
        s.store_version("sales", t());
        s.store_version("sales", t());
        assert_eq!(s.resolve("sales.csv"), Some(TableRef::new("sales", 1)));
        assert_eq!(s.resolve("sales_v0.csv"), Some(TableRef::new("sales", 0)));
        assert_eq!(s.resolve("ghost.csv"), None);
    }

    #[test]
    fn rendered_names_parse() {
        assert_eq!(TableRef::parse_rendered("data_v2_v10.csv"), Some(TableRef::new("data_v2", 10)));
        assert_eq!(TableRef::parse_rendered("data.csv"), None);
        assert_eq!(TableRef::parse_rendered("_v1.csv"), None);
    }
}
