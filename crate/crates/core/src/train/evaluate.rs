//! Per-horizon test-split evaluation of any forecaster.

use crate::data::{build_model_input, SeriesFrame, Split, WindowSample};
use crate::error::{Error, Result};
use crate::model::{LinearBaseline, PassState, UShapedModel};
use crate::tensor::Graph;
use crate::train::metrics::MetricAccumulator;
use crate::train::report::MetricRow;
use crate::Scalar;

/// Horizons a metric table may report, besides the model's own `T`.
pub const STANDARD_HORIZONS: [usize; 4] = [96, 192, 336, 720];

/// Anything that maps a normalised lookback to `horizon_len` normalised forecasts.
pub trait Forecaster<T: Scalar> {
    fn name(&self) -> &str;
    fn lookback_len(&self) -> usize;
    fn horizon_len(&self) -> usize;
    /// Forecast for `sample.input`. Only the oracle stub may read `sample.target`.
    fn predict(&self, sample: &WindowSample<T>) -> Result<Vec<T>>;
}

impl<T: Scalar> Forecaster<T> for UShapedModel<T> {
    fn name(&self) -> &str {
        "ushape"
    }
    fn lookback_len(&self) -> usize {
        self.config.lookback_len
    }
    fn horizon_len(&self) -> usize {
        self.config.horizon_len
    }
    fn predict(&self, sample: &WindowSample<T>) -> Result<Vec<T>> {
        let mut g = Graph::new();
        let b = self.params.bind_constant(&mut g);
        let x = g.constant(build_model_input(sample.input.data(), &self.config)?);
        let (y, _) = self.forecast(&mut g, &b, x, &mut PassState::inference())?;
        Ok(g.value(y).data().to_vec())
    }
}

impl<T: Scalar> Forecaster<T> for LinearBaseline<T> {
    fn name(&self) -> &str {
        "linear"
    }
    fn lookback_len(&self) -> usize {
        self.lookback_len
    }
    fn horizon_len(&self) -> usize {
        self.horizon_len
    }
    fn predict(&self, sample: &WindowSample<T>) -> Result<Vec<T>> {
        let mut g = Graph::new();
        let b = self.params.bind_constant(&mut g);
        let x = g.constant(sample.input.clone());
        let y = self.forward(&mut g, &b, x)?;
        Ok(g.value(y).data().to_vec())
    }
}

/// Repeats the last observed value.
#[derive(Clone, Copy, Debug)]
pub struct LastValueRepeat {
    pub lookback_len: usize,
    pub horizon_len: usize,
}

impl<T: Scalar> Forecaster<T> for LastValueRepeat {
    fn name(&self) -> &str {
        "last_value"
    }
    fn lookback_len(&self) -> usize {
        self.lookback_len
    }
    fn horizon_len(&self) -> usize {
        self.horizon_len
    }
    fn predict(&self, sample: &WindowSample<T>) -> Result<Vec<T>> {
        let last = *sample.input.data().last().expect("tensor is never empty");
        Ok(vec![last; self.horizon_len])
    }
}

/// Returns the true future. Useful only for checking the harness itself.
#[derive(Clone, Copy, Debug)]
pub struct TruthOracle {
    pub lookback_len: usize,
    pub horizon_len: usize,
}

impl<T: Scalar> Forecaster<T> for TruthOracle {
    fn name(&self) -> &str {
        "oracle"
    }
    fn lookback_len(&self) -> usize {
        self.lookback_len
    }
    fn horizon_len(&self) -> usize {
        self.horizon_len
    }
    fn predict(&self, sample: &WindowSample<T>) -> Result<Vec<T>> {
        Ok(sample.target.data().to_vec())
    }
}

/// Checks requested horizons against the forecaster's `T` and the reportable set.
pub fn check_horizons(horizons: &[usize], horizon_len: usize) -> Result<()> {
    if horizons.is_empty() {
        return Err(Error::Usage("at least one horizon is required".into()));
    }
    for &h in horizons {
        if h > horizon_len {
            return Err(Error::Usage(format!(
                "horizon {h} exceeds the model horizon {horizon_len}"
            )));
        }
        if h != horizon_len && !STANDARD_HORIZONS.contains(&h) {
            return Err(Error::Usage(format!(
                "horizon {h} must be one of {STANDARD_HORIZONS:?} or the model horizon {horizon_len}"
            )));
        }
    }
    Ok(())
}

/// Target start positions of evaluation windows: every target lies inside
/// `split`, its lookback may reach back into earlier data.
pub fn split_targets<T: Scalar>(
    frame: &SeriesFrame<T>,
    split: Split,
    lookback: usize,
    horizon: usize,
    stride: usize,
) -> Vec<usize> {
    let range = frame.split_range(split);
    let mut t0 = range.start.max(lookback);
    let mut out = Vec::new();
    while t0 + horizon <= range.end {
        out.push(t0);
        t0 += stride;
    }
    out
}

/// Metrics on the first `h` forecast values for each `h` in `horizons`,
/// pooled over every channel and test window, in normalised space.
pub fn evaluate<T: Scalar, F: Forecaster<T> + ?Sized>(
    forecaster: &F,
    frame: &SeriesFrame<T>,
    horizons: &[usize],
    stride: usize,
) -> Result<Vec<MetricRow>> {
    evaluate_on(forecaster, frame, Split::Test, horizons, stride)
}

/// [`evaluate`] on any split.
pub fn evaluate_on<T: Scalar, F: Forecaster<T> + ?Sized>(
    forecaster: &F,
    frame: &SeriesFrame<T>,
    split: Split,
    horizons: &[usize],
    stride: usize,
) -> Result<Vec<MetricRow>> {
    let (l, t) = (forecaster.lookback_len(), forecaster.horizon_len());
    check_horizons(horizons, t)?;
    if stride == 0 {
        return Err(Error::Usage("evaluation stride must be >= 1".into()));
    }
    let targets = split_targets(frame, split, l, t, stride);
    if targets.is_empty() {
        return Err(Error::Usage(format!(
            "{split:?} split of {} ({} points) is too short for horizon {t}",
            frame.dataset_id,
            frame.split_range(split).len()
        )));
    }
    let mut accs = vec![MetricAccumulator::default(); horizons.len()];
    for c in 0..frame.n_channels() {
        for &t0 in &targets {
            let sample = WindowSample::extract(frame, c, t0 - l, l, t)?;
            let pred = forecaster.predict(&sample)?;
            if pred.len() != t {
                return Err(Error::dim(
                    "evaluate",
                    format!(
                        "{} returned {} values, expected {t}",
                        forecaster.name(),
                        pred.len()
                    ),
                ));
            }
            let truth = sample.target.data();
            for (acc, &h) in accs.iter_mut().zip(horizons) {
                acc.add(&pred[..h], &truth[..h])?;
            }
        }
    }
    let windows = targets.len() * frame.n_channels();
    horizons
        .iter()
        .zip(&accs)
        .map(|(&h, acc)| {
            Ok(MetricRow {
                dataset: frame.dataset_id.clone(),
                model: forecaster.name().to_string(),
                horizon: h,
                windows,
                metrics: acc.finish()?,
            })
        })
        .collect()
}
