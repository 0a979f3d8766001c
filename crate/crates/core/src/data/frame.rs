use std::fs::File;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::Scalar;

/// Chronological train/validate/test fractions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validate: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.7,
            validate: 0.1,
            test: 0.2,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validate, self.test];
        if parts.iter().any(|&f| !(0.0..=1.0).contains(&f))
            || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::Config(format!(
                "split fractions {parts:?} must be in [0, 1] and sum to 1"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validate,
    Test,
}

/// A multivariate series, `values[C × length]`, immutable once loaded.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesFrame<T> {
    pub dataset_id: String,
    pub channel_names: Vec<String>,
    pub values: Tensor<T>,
    pub splits: SplitFractions,
}

const TIME_COLUMNS: [&str; 3] = ["date", "time", "timestamp"];

impl<T: Scalar> SeriesFrame<T> {
    pub fn new(
        dataset_id: impl Into<String>,
        channel_names: Vec<String>,
        values: Tensor<T>,
    ) -> Result<Self> {
        let (c, _) = values.dims2()?;
        if c != channel_names.len() {
            return Err(Error::dim(
                "series_frame",
                format!("{} names for {c} channels", channel_names.len()),
            ));
        }
        if !values.is_finite() {
            return Err(Error::numeric("series_frame"));
        }
        Ok(SeriesFrame {
            dataset_id: dataset_id.into(),
            channel_names,
            values,
            splits: SplitFractions::default(),
        })
    }

    pub fn with_splits(mut self, splits: SplitFractions) -> Result<Self> {
        splits.validate()?;
        self.splits = splits;
        Ok(self)
    }

    pub fn n_channels(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn len(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let n = self.len();
        &self.values.data()[c * n..(c + 1) * n]
    }

    /// Timestep range covered by `split`.
    pub fn split_range(&self, split: Split) -> Range<usize> {
        let n = self.len() as f64;
        let b1 = (self.splits.train * n).round() as usize;
        let b2 = ((self.splits.train + self.splits.validate) * n).round() as usize;
        let b2 = b2.min(self.len());
        match split {
            Split::Train => 0..b1,
            Split::Validate => b1..b2,
            Split::Test => b2..self.len(),
        }
    }

    /// Reads a CSV with a header of channel names and one row per timestep.
    ///
    /// Columns named `date`, `time` or `timestamp` are skipped.
    pub fn load_csv(path: impl AsRef<Path>, dataset_id: impl Into<String>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, path, dataset_id)
    }

    pub fn read_csv(
        reader: impl std::io::Read,
        path: &Path,
        dataset_id: impl Into<String>,
    ) -> Result<Self> {
        let ingest = |row: usize, column: &str, detail: String| Error::Ingestion {
            path: path.to_path_buf(),
            row,
            column: column.to_string(),
            detail,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| ingest(0, "-", e.to_string()))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let keep: Vec<usize> = (0..headers.len())
            .filter(|&i| !TIME_COLUMNS.contains(&headers[i].to_ascii_lowercase().as_str()))
            .collect();
        if keep.is_empty() {
            return Err(ingest(0, "-", "no value columns in header".into()));
        }
        let mut columns: Vec<Vec<T>> = vec![Vec::new(); keep.len()];
        for (r, record) in rdr.records().enumerate() {
            let row = r + 1;
            let record = record.map_err(|e| ingest(row, "-", e.to_string()))?;
            for (slot, &i) in keep.iter().enumerate() {
                let name = &headers[i];
                let cell = record.get(i).map(str::trim).unwrap_or("");
                if cell.is_empty() {
                    return Err(ingest(row, name, "missing value".into()));
                }
                let v: f64 = cell
                    .parse()
                    .map_err(|_| ingest(row, name, format!("cannot parse {cell:?}")))?;
                if !v.is_finite() {
                    return Err(ingest(row, name, format!("non-finite value {cell:?}")));
                }
                columns[slot].push(T::of(v));
            }
            if record.len() > headers.len() {
                return Err(ingest(
                    row,
                    "-",
                    format!("{} fields for {} columns", record.len(), headers.len()),
                ));
            }
        }
        let len = columns[0].len();
        if len == 0 {
            return Err(ingest(0, "-", "no data rows".into()));
        }
        let names = keep.iter().map(|&i| headers[i].clone()).collect();
        let values = Tensor::new([keep.len(), len], columns.concat())?;
        Self::new(dataset_id, names, values)
    }

    /// Writes the frame as CSV with full round-trip precision.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = String::new();
        out.push_str(&self.channel_names.join(","));
        out.push('\n');
        for t in 0..self.len() {
            let row: Vec<String> = (0..self.n_channels())
                .map(|c| format!("{}", self.channel(c)[t]))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}
