use std::collections::BTreeSet;
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::AssistantError;

/// Named time series sharing one tick axis, read from a run CSV.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DataCatalog {
    ticks: Vec<u64>,
    columns: Vec<(String, Vec<f64>)>,
}

impl DataCatalog {
    /// Reads a CSV whose first column is `tick`.
    pub fn from_csv(reader: impl Read) -> Result<Self, AssistantError> {
        let bad = |e: csv::Error| AssistantError::Catalog(e.to_string());
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers().map_err(bad)?.clone();
        if headers.get(0) != Some("tick") {
            return Err(AssistantError::Catalog("first column must be tick".into()));
        }
        let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        if names.iter().collect::<BTreeSet<_>>().len() != names.len() {
            return Err(AssistantError::Catalog("duplicate column names".into()));
        }
        let mut catalog = DataCatalog {
            ticks: Vec::new(),
            columns: names.into_iter().map(|n| (n, Vec::new())).collect(),
        };
        for (line, record) in rdr.records().enumerate() {
            let record = record.map_err(bad)?;
            let field = |i: usize| {
                record.get(i).ok_or_else(|| {
                    AssistantError::Catalog(format!("row {}: missing field {i}", line + 1))
                })
            };
            let tick = field(0)?
                .parse()
                .map_err(|e| AssistantError::Catalog(format!("row {}: tick: {e}", line + 1)))?;
            catalog.ticks.push(tick);
            for (i, (name, values)) in catalog.columns.iter_mut().enumerate() {
                let v = field(i + 1)?.parse().map_err(|e| {
                    AssistantError::Catalog(format!("row {}: {name}: {e}", line + 1))
                })?;
                values.push(v);
            }
        }
        Ok(catalog)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.ticks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ticks.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.columns.iter().any(|(n, _)| n == name)
    }

    /// `(tick, value)` points of one column.
    pub fn series(&self, name: &str) -> Result<Vec<(u64, f64)>, AssistantError> {
        let (_, values) = self
            .columns
            .iter()
            .find(|(n, _)| n == name)
            .ok_or_else(|| AssistantError::UnknownColumn(name.to_string()))?;
        Ok(self
            .ticks
            .iter()
            .copied()
            .zip(values.iter().copied())
            .collect())
    }
}

/// Columns the user is currently looking at.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FocusSet(BTreeSet<String>);

impl FocusSet {
    /// Builds a focus set, rejecting names the catalog does not have.
    pub fn new<S: AsRef<str>>(
        names: impl IntoIterator<Item = S>,
        catalog: &DataCatalog,
    ) -> Result<Self, AssistantError> {
        let mut set = BTreeSet::new();
        for n in names {
            let n = n.as_ref();
            if !catalog.contains(n) {
                return Err(AssistantError::UnknownColumn(n.to_string()));
            }
            set.insert(n.to_string());
        }
        Ok(Self(set))
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }
}
