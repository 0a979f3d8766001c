//! Loss series and metric tables produced by training and evaluation runs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::train::metrics::Metrics;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: u64,
    pub mean_loss: f64,
    pub step_losses: Vec<f64>,
    pub warnings: Vec<String>,
    /// Wall-clock seconds. Not serialised, so reports stay reproducible byte-for-byte.
    #[serde(skip)]
    pub seconds: f64,
}

impl EpochSummary {
    pub fn new(epoch: u64, step_losses: Vec<f64>, warnings: Vec<String>, seconds: f64) -> Self {
        let mean_loss = if step_losses.is_empty() {
            0.0
        } else {
            step_losses.iter().sum::<f64>() / step_losses.len() as f64
        };
        EpochSummary {
            epoch,
            mean_loss,
            step_losses,
            warnings,
            seconds,
        }
    }
}

/// One `(dataset, model, horizon)` row of an evaluation table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub dataset: String,
    pub model: String,
    pub horizon: usize,
    pub windows: usize,
    #[serde(flatten)]
    pub metrics: Metrics,
}

pub const METRIC_CSV_HEADER: &str = "dataset,model,horizon,windows,mse,mae,mape";

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from(METRIC_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.dataset, r.model, r.horizon, r.windows, r.metrics.mse, r.metrics.mae, r.metrics.mape
        );
    }
    out
}

/// Everything a training stage reports: per-epoch summaries and any metrics.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub stage: String,
    pub epochs: Vec<EpochSummary>,
    #[serde(default)]
    pub metrics: Vec<MetricRow>,
}

impl TrainReport {
    pub fn new(stage: impl Into<String>) -> Self {
        TrainReport {
            stage: stage.into(),
            ..Default::default()
        }
    }

    pub fn push(&mut self, epoch: EpochSummary) -> Result<()> {
        if let Some(i) = epoch.step_losses.iter().position(|l| !l.is_finite()) {
            return Err(Error::Numeric {
                op: "loss".into(),
                detail: Some(format!(
                    "{} epoch {} step {i}: non-finite loss",
                    self.stage, epoch.epoch
                )),
            });
        }
        log::info!(
            "{} epoch {}: mean loss {:.6} over {} steps in {:.2}s",
            self.stage,
            epoch.epoch,
            epoch.mean_loss,
            epoch.step_losses.len(),
            epoch.seconds
        );
        self.epochs.push(epoch);
        Ok(())
    }

    pub fn step_losses(&self) -> impl Iterator<Item = f64> + '_ {
        self.epochs
            .iter()
            .flat_map(|e| e.step_losses.iter().copied())
    }

    /// `step,loss` with a global step index across epochs.
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("step,loss\n");
        for (i, l) in self.step_losses().enumerate() {
            let _ = writeln!(out, "{i},{l}");
        }
        out
    }

    pub fn write(&self, dir: &Path, prefix: &str) -> Result<()> {
        let csv = dir.join(format!("{prefix}_loss.csv"));
        fs::write(&csv, self.loss_csv()).map_err(|e| Error::io(&csv, e))?;
        let json = dir.join(format!("{prefix}_report.json"));
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&json, text).map_err(|e| Error::io(&json, e))
    }
}

/// Mean of the trailing `window` values ending at `index` (inclusive).
pub fn smoothed(series: &[f64], index: usize, window: usize) -> f64 {
    let lo = (index + 1).saturating_sub(window);
    let s = &series[lo..=index];
    s.iter().sum::<f64>() / s.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_csv_numbers_steps_across_epochs() {
        let mut r = TrainReport::new("pretrain");
        r.push(EpochSummary::new(0, vec![1.0, 0.5], vec![], 0.1))
            .unwrap();
        r.push(EpochSummary::new(1, vec![0.25], vec![], 0.1))
            .unwrap();
        assert_eq!(r.loss_csv(), "step,loss\n0,1\n1,0.5\n2,0.25\n");
        assert!(!serde_json::to_string(&r).unwrap().contains("seconds"));
    }

    #[test]
    fn rejects_nan_loss() {
        let mut r = TrainReport::new("x");
        assert!(r
            .push(EpochSummary::new(0, vec![1.0, f64::NAN], vec![], 0.0))
            .unwrap_err()
            .is_numeric());
    }

    #[test]
    fn smoothing_window() {
        let s = [4.0, 2.0, 0.0, 6.0];
        assert_eq!(smoothed(&s, 0, 20), 4.0);
        assert_eq!(smoothed(&s, 3, 2), 3.0);
    }
}
