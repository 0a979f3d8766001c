use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Scalar;

/// Denominator floor for MAPE on normalised data, where targets cross zero.
pub const MAPE_FLOOR: f64 = 0.1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
    pub mape: f64,
}

/// MSE, MAE and floored MAPE between equal-length predictions and truth.
pub fn compute_metrics<T: Scalar>(pred: &[T], truth: &[T]) -> Result<Metrics> {
    let mut acc = MetricAccumulator::default();
    acc.add(pred, truth)?;
    acc.finish()
}

/// Running sums so metrics can be pooled over many windows.
#[derive(Clone, Debug, Default)]
pub struct MetricAccumulator {
    sq: f64,
    abs: f64,
    ape: f64,
    n: usize,
}

impl MetricAccumulator {
    pub fn add<T: Scalar>(&mut self, pred: &[T], truth: &[T]) -> Result<()> {
        if pred.len() != truth.len() {
            return Err(Error::Usage(format!(
                "metric inputs differ in length: {} vs {}",
                pred.len(),
                truth.len()
            )));
        }
        for (&p, &y) in pred.iter().zip(truth) {
            let (p, y) = (p.as_f64(), y.as_f64());
            let e = (y - p).abs();
            self.sq += e * e;
            self.abs += e;
            self.ape += e / y.abs().max(MAPE_FLOOR);
        }
        self.n += pred.len();
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn finish(&self) -> Result<Metrics> {
        if self.n == 0 {
            return Err(Error::Usage("metrics need at least one element".into()));
        }
        let n = self.n as f64;
        Ok(Metrics {
            mse: self.sq / n,
            mae: self.abs / n,
            mape: self.ape / n,
        })
    }
}
