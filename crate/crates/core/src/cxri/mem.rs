//! In-memory tabular backend — the database connector for this build.
//!
//! Datasets are registered process-wide under a name; a `database` source
//! points at one via `config: {dataset: <name>}`. Rows are rendered to text
//! once at registration ("column: value" lines), after which they behave
//! exactly like files: readable, writable, diffable by subscriptions.
//! Removing a dataset models the backing database going away.

use std::collections::{BTreeMap, HashMap};
use std::sync::OnceLock;

use chrono::{DateTime, Utc};
use indexmap::IndexMap;
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use super::{Backend, BackendFault, CxriError, ListEntry, RawEntry};
use crate::registry::{Sensitivity, UnitType};
use crate::timefmt;

/// One structured record destined to become a context unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularRow {
    /// Path-like key, e.g. `budgets/fy26`; globs and role scoping apply to it
    /// the same way they apply to file paths.
    pub path: String,
    pub author: String,
    #[serde(with = "timefmt")]
    pub timestamp: DateTime<Utc>,
    pub sensitivity: Sensitivity,
    pub authority: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub entities: Vec<String>,
    pub columns: IndexMap<String, String>,
}

impl TabularRow {
    fn render(&self) -> String {
        let mut out = String::new();
        for (key, value) in &self.columns {
            out.push_str(key);
            out.push_str(": ");
            out.push_str(value);
            out.push('\n');
        }
        out
    }
}

#[derive(Clone)]
struct MemEntry {
    content: String,
    author: String,
    timestamp: DateTime<Utc>,
    sensitivity: Sensitivity,
    authority: Option<f64>,
    entities: Vec<String>,
}

type Dataset = BTreeMap<String, MemEntry>;

fn datasets() -> &'static RwLock<HashMap<String, Dataset>> {
    static DATASETS: OnceLock<RwLock<HashMap<String, Dataset>>> = OnceLock::new();
    DATASETS.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Register (or replace) a dataset. Connections opened against the name see
/// updates immediately — the store is shared, connections are not.
pub fn register_dataset(name: &str, rows: Vec<TabularRow>) {
    let mut entries = Dataset::new();
    for row in rows {
        entries.insert(
            row.path.clone(),
            MemEntry {
                content: row.render(),
                author: row.author,
                timestamp: row.timestamp,
                sensitivity: row.sensitivity,
                authority: Some(row.authority),
                entities: row.entities,
            },
        );
    }
    datasets().write().insert(name.to_owned(), entries);
}

/// Drop a dataset — models the backing database becoming unreachable.
pub fn remove_dataset(name: &str) {
    datasets().write().remove(name);
}

pub(crate) struct MemBackend {
    dataset: String,
}

impl MemBackend {
    pub fn open(dataset: String) -> Result<Self, CxriError> {
        if !datasets().read().contains_key(&dataset) {
            return Err(CxriError::ConnectFailed(format!(
                "dataset {dataset:?} is not registered"
            )));
        }
        Ok(MemBackend { dataset })
    }

    fn with_dataset<T>(
        &self,
        f: impl FnOnce(&Dataset) -> Result<T, BackendFault>,
    ) -> Result<T, BackendFault> {
        let guard = datasets().read();
        match guard.get(&self.dataset) {
            Some(ds) => f(ds),
            None => Err(BackendFault::Gone(format!(
                "dataset {:?} no longer registered",
                self.dataset
            ))),
        }
    }
}

impl Backend for MemBackend {
    fn probe(&self) -> Result<String, String> {
        if datasets().read().contains_key(&self.dataset) {
            Ok(format!("dataset {}", self.dataset))
        } else {
            Err(format!("dataset {} unreachable", self.dataset))
        }
    }

    fn list(&self) -> Result<Vec<ListEntry>, BackendFault> {
        self.with_dataset(|ds| {
            Ok(ds
                .iter()
                .map(|(path, entry)| ListEntry {
                    path: path.clone(),
                    content_hash: super::hash64(entry.content.as_bytes()),
                    modified: entry.timestamp,
                })
                .collect())
        })
    }

    fn read(&self, path: &str) -> Result<RawEntry, BackendFault> {
        self.with_dataset(|ds| {
            let entry = ds
                .get(path)
                .ok_or_else(|| BackendFault::Missing(path.to_owned()))?;
            Ok(RawEntry {
                content: entry.content.clone(),
                author: entry.author.clone(),
                timestamp: entry.timestamp,
                sensitivity: entry.sensitivity,
                authority: entry.authority,
                entities: entry.entities.clone(),
                unit_type: UnitType::Structured,
            })
        })
    }

    fn write(&mut self, path: &str, content: &str) -> Result<(), BackendFault> {
        let mut guard = datasets().write();
        let ds = guard.get_mut(&self.dataset).ok_or_else(|| {
            BackendFault::Gone(format!("dataset {:?} no longer registered", self.dataset))
        })?;
        match ds.get_mut(path) {
            Some(entry) => {
                entry.content = content.to_owned();
                entry.timestamp = Utc::now();
            }
            None => {
                ds.insert(
                    path.to_owned(),
                    MemEntry {
                        content: content.to_owned(),
                        author: "agent".into(),
                        timestamp: Utc::now(),
                        sensitivity: Sensitivity::Internal,
                        authority: None,
                        entities: Vec::new(),
                    },
                );
            }
        }
        Ok(())
    }
}
