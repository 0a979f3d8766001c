use crate::data::frame::SeriesFrame;
use crate::data::normalize::{window_stats, NormStats};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::Scalar;

/// One normalised lookback/target pair with the statistics that undo it.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSample<T> {
    pub input: Tensor<T>,
    pub target: Tensor<T>,
    pub stats: NormStats,
    pub dataset_id: String,
    pub channel: usize,
    pub start: usize,
}

impl<T: Scalar> WindowSample<T> {
    /// Cuts `lookback` points at `start` and the following `horizon` points
    /// from one channel. Both are normalised with the lookback's statistics.
    pub fn extract(
        frame: &SeriesFrame<T>,
        channel: usize,
        start: usize,
        lookback: usize,
        horizon: usize,
    ) -> Result<Self> {
        let series = frame.channel(channel);
        if start + lookback + horizon > series.len() {
            return Err(Error::dim(
                "window_sample",
                format!(
                    "window {start}+{lookback}+{horizon} exceeds {} points",
                    series.len()
                ),
            ));
        }
        let input = &series[start..start + lookback];
        let stats = window_stats(input)?;
        let input = Tensor::new([1, lookback], stats.apply(input))?;
        let target = if horizon > 0 {
            let raw = &series[start + lookback..start + lookback + horizon];
            Tensor::new([1, horizon], stats.apply(raw))?
        } else {
            Tensor::zeros([1, 1])
        };
        Ok(WindowSample {
            input,
            target,
            stats,
            dataset_id: frame.dataset_id.clone(),
            channel,
            start,
        })
    }
}
