//! JSON dataset registry: `dataset_id → {path | synthetic, splits}`.
//!
//! ```json
//! {
//!   "datasets": {
//!     "etth1": { "path": "ETTh1.csv" },
//!     "sine":  { "synthetic": { "kind": "sine", "length": 4000, "period": 24 },
//!                "splits": { "train": 0.7, "validate": 0.1, "test": 0.2 } }
//!   }
//! }
//! ```
//!
//! Relative paths resolve against the registry file's directory.

use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::data::frame::{SeriesFrame, SplitFractions};
use crate::data::synthetic::SyntheticSpec;
use crate::error::{Error, Result};
use crate::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default)]
    pub splits: SplitFractions,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRegistry {
    pub datasets: IndexMap<String, DatasetEntry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetRegistry {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut reg: DatasetRegistry = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("registry {}: {e}", path.display())))?;
        reg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(reg)
    }

    /// Loads every dataset in registry order.
    pub fn load_all<T: Scalar>(&self) -> Result<Vec<SeriesFrame<T>>> {
        if self.datasets.is_empty() {
            return Err(Error::Config("dataset registry is empty".into()));
        }
        self.datasets.keys().map(|id| self.load(id)).collect()
    }

    pub fn load<T: Scalar>(&self, id: &str) -> Result<SeriesFrame<T>> {
        let entry = self
            .datasets
            .get(id)
            .ok_or_else(|| Error::Config(format!("unknown dataset {id}")))?;
        let frame = match (&entry.path, &entry.synthetic) {
            (Some(p), None) => {
                let full = if p.is_absolute() {
                    p.clone()
                } else {
                    self.base_dir.join(p)
                };
                if !full.exists() {
                    return Err(Error::Config(format!(
                        "dataset {id}: file {} does not exist",
                        full.display()
                    )));
                }
                SeriesFrame::load_csv(&full, id)?
            }
            (None, Some(spec)) => spec.generate(id)?,
            _ => {
                return Err(Error::Config(format!(
                    "dataset {id}: give exactly one of path or synthetic"
                )))
            }
        };
        frame.with_splits(entry.splits)
    }
}
