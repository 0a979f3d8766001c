//! Pretraining, frozen-backbone finetuning and linear-baseline training.

use std::ops::Range;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::normalize::window_stats;
use crate::data::{
    apply_patch_mask, build_model_input, jittered_windows, weighted_sample, zero_mask_patches,
    SamplerConfig, SeriesFrame, Split, WindowSample,
};
use crate::error::{Error, Result};
use crate::model::{is_backbone_param, Binding, LinearBaseline, PassState, UShapedModel};
use crate::tensor::{Gradients, Graph, Tensor, Var};
use crate::train::adam::{adam_step, AdamConfig, OptimizerState};
use crate::train::report::EpochSummary;
use crate::Scalar;

/// Length and optimiser settings of one training stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    #[serde(default = "one")]
    pub epochs: usize,
    /// Steps per epoch. `None` takes one step per available window.
    #[serde(default)]
    pub steps_per_epoch: Option<usize>,
    #[serde(default)]
    pub adam: AdamConfig,
}

fn one() -> usize {
    1
}

impl Default for StageConfig {
    fn default() -> Self {
        StageConfig {
            epochs: 1,
            steps_per_epoch: None,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerConfig {
    #[serde(default)]
    pub pretrain: StageConfig,
    #[serde(default)]
    pub finetune: StageConfig,
    #[serde(default)]
    pub baseline: StageConfig,
    /// Windows averaged into one loss per optimiser step.
    #[serde(default = "one")]
    pub micro_batch: usize,
    /// Stride between test windows; defaults to the model horizon.
    #[serde(default)]
    pub eval_stride: Option<usize>,
    /// Copy the reconstruction head into the forecast head before finetuning.
    #[serde(default = "yes")]
    pub warm_start_forecast_head: bool,
}

fn yes() -> bool {
    true
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            pretrain: StageConfig::default(),
            finetune: StageConfig::default(),
            baseline: StageConfig::default(),
            micro_batch: 1,
            eval_stride: None,
            warm_start_forecast_head: true,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.micro_batch == 0 {
            return Err(Error::Config("micro_batch must be >= 1".into()));
        }
        if self.eval_stride == Some(0) {
            return Err(Error::Config("eval_stride must be >= 1".into()));
        }
        for (name, s) in [
            ("pretrain", &self.pretrain),
            ("finetune", &self.finetune),
            ("baseline", &self.baseline),
        ] {
            if s.steps_per_epoch == Some(0) {
                return Err(Error::Config(format!(
                    "{name}.steps_per_epoch must be >= 1"
                )));
            }
            if !s.adam.lr.is_finite()
                || s.adam.lr <= 0.0
                || !(0.0..1.0).contains(&s.adam.beta1)
                || !(0.0..1.0).contains(&s.adam.beta2)
            {
                return Err(Error::Config(format!(
                    "{name}.adam has out-of-range settings"
                )));
            }
        }
        Ok(())
    }
}

/// Every `(channel, start)` window of one length inside one split, per dataset.
#[derive(Clone, Debug, Default)]
pub struct WindowPool {
    pub windows: Vec<Vec<(usize, usize)>>,
    pub warnings: Vec<String>,
}

impl WindowPool {
    pub fn build<T: Scalar, R: Rng + ?Sized>(
        frames: &[SeriesFrame<T>],
        split: Split,
        window_len: usize,
        sampler: &SamplerConfig,
        rng: &mut R,
    ) -> Self {
        let mut pool = WindowPool::default();
        for frame in frames {
            let range = frame.split_range(split);
            let mut per = Vec::new();
            for c in 0..frame.n_channels() {
                let plan = jittered_windows(range.clone(), window_len, sampler, rng);
                per.extend(plan.starts.into_iter().map(|s| (c, s)));
                if c == 0 {
                    pool.warnings.extend(
                        plan.warnings
                            .into_iter()
                            .map(|w| format!("{}: {w}", frame.dataset_id)),
                    );
                }
            }
            pool.windows.push(per);
        }
        pool
    }

    pub fn total(&self) -> usize {
        self.windows.iter().map(Vec::len).sum()
    }

    /// Weighted dataset draw (datasets without windows are skipped), then a
    /// uniform window within it. Returns `(dataset, channel, start)`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(usize, usize, usize)> {
        let live: Vec<usize> = (0..self.windows.len())
            .filter(|&d| !self.windows[d].is_empty())
            .collect();
        if live.is_empty() {
            return Err(Error::Usage(format!(
                "no dataset has a usable window ({})",
                self.warnings.join("; ")
            )));
        }
        let counts: Vec<usize> = live.iter().map(|&d| self.windows[d].len()).collect();
        let d = live[weighted_sample(&counts, rng)?];
        let (c, s) = self.windows[d][rng.gen_range(0..self.windows[d].len())];
        Ok((d, c, s))
    }
}

fn at_step(stage: &str, step: usize, e: Error) -> Error {
    match e {
        Error::Numeric { op, detail } => Error::Numeric {
            op,
            detail: Some(match detail {
                Some(d) => format!("{stage} step {step}: {d}"),
                None => format!("{stage} step {step}"),
            }),
        },
        other => other,
    }
}

fn finish_step<T: Scalar>(
    g: &Graph<T>,
    loss: Var,
    stage: &str,
    step: usize,
) -> Result<(f64, Gradients<T>)> {
    let value = g.value(loss).data()[0].as_f64();
    if !value.is_finite() {
        return Err(Error::Numeric {
            op: "loss".into(),
            detail: Some(format!("{stage} step {step}: non-finite loss")),
        });
    }
    let grads = g.backward(loss).map_err(|e| at_step(stage, step, e))?;
    Ok((value, grads))
}

fn mean_of<T: Scalar>(g: &mut Graph<T>, losses: &[Var]) -> Result<Var> {
    let mut total = losses[0];
    for &l in &losses[1..] {
        total = g.add(total, l)?;
    }
    g.scale(total, T::of(1.0 / losses.len() as f64))
}

fn steps_for(stage: &StageConfig, pool: &WindowPool) -> usize {
    stage.steps_per_epoch.unwrap_or_else(|| pool.total().max(1))
}

fn dropout_rng(sampler: &SamplerConfig, epoch: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sampler.seed ^ 0xD5A6_1266_F0C9_392F ^ epoch)
}

/// Normalised window of `len` points starting at `start` in one channel.
fn normalized_window<T: Scalar>(
    frame: &SeriesFrame<T>,
    channel: usize,
    start: usize,
    len: usize,
) -> Result<Tensor<T>> {
    let raw = &frame.channel(channel)[start..start + len];
    let stats = window_stats(raw)?;
    Tensor::new([1, len], stats.apply(raw))
}

/// One pretraining epoch of masked reconstruction.
///
/// Each step draws `micro_batch` windows of model length from the train
/// splits, zero-masks `⌊mask_ratio · N⌋` patches, and regresses the
/// reconstruction onto the unmasked normalised window over every patch.
pub fn pretrain_epoch<T: Scalar>(
    model: &mut UShapedModel<T>,
    frames: &[SeriesFrame<T>],
    sampler: &SamplerConfig,
    stage: &StageConfig,
    micro_batch: usize,
    opt: &mut OptimizerState<T>,
    epoch: u64,
) -> Result<EpochSummary> {
    let started = Instant::now();
    let cfg = model.config.clone();
    let len = cfg.model_len();
    let mut rng = sampler.epoch_rng(epoch, 0);
    let mut drop_rng = dropout_rng(sampler, epoch);
    let pool = WindowPool::build(frames, Split::Train, len, sampler, &mut rng);
    let steps = steps_for(stage, &pool);
    let mut step_losses = Vec::with_capacity(steps);
    for step in 0..steps {
        let mut g = Graph::new();
        let b = model.params.bind(&mut g);
        let mut losses = Vec::with_capacity(micro_batch);
        for _ in 0..micro_batch {
            let (d, c, s) = pool.draw(&mut rng)?;
            let source = normalized_window(&frames[d], c, s, len)
                .map_err(|e| at_step("pretrain", step, e))?;
            let mask = zero_mask_patches(cfg.n_patches, cfg.mask_ratio, &mut rng)?;
            let masked = apply_patch_mask(&source, &mask, cfg.patch_size)?;
            let x = g.constant(masked);
            let target = g.constant(source);
            let mut pass = PassState {
                dropout: cfg.dropout,
                rng: Some(&mut drop_rng),
            };
            let (recon, _) = model
                .reconstruct(&mut g, &b, x, &mut pass)
                .map_err(|e| at_step("pretrain", step, e))?;
            losses.push(
                g.mse(recon, target)
                    .map_err(|e| at_step("pretrain", step, e))?,
            );
        }
        let loss = mean_of(&mut g, &losses)?;
        let (value, grads) = finish_step(&g, loss, "pretrain", step)?;
        adam_step(&mut model.params, &b.gradients(&grads), opt)
            .map_err(|e| at_step("pretrain", step, e))?;
        step_losses.push(value);
    }
    Ok(EpochSummary::new(
        epoch,
        step_losses,
        pool.warnings,
        started.elapsed().as_secs_f64(),
    ))
}

/// Freezes the backbone and optionally warm-starts the forecast head.
pub fn prepare_finetune<T: Scalar>(model: &mut UShapedModel<T>, warm_start: bool) -> Result<()> {
    model.freeze_backbone();
    if warm_start {
        model.init_forecast_head_from_recon()?;
    }
    Ok(())
}

fn ensure_frozen<T: Scalar>(model: &UShapedModel<T>) -> Result<()> {
    if let Some((name, _)) = model
        .params
        .iter()
        .find(|(n, p)| is_backbone_param(n) && !p.frozen)
    {
        return Err(Error::Config(format!(
            "finetuning needs a frozen backbone, but {name} is trainable"
        )));
    }
    Ok(())
}

/// One finetuning epoch: lookback → padded model input → forecast head, with
/// MSE against the normalised target and Adam on head parameters only.
pub fn finetune_epoch<T: Scalar>(
    model: &mut UShapedModel<T>,
    frames: &[SeriesFrame<T>],
    sampler: &SamplerConfig,
    stage: &StageConfig,
    micro_batch: usize,
    opt: &mut OptimizerState<T>,
    epoch: u64,
) -> Result<EpochSummary> {
    ensure_frozen(model)?;
    let started = Instant::now();
    let cfg = model.config.clone();
    let (l, t) = (cfg.lookback_len, cfg.horizon_len);
    let mut rng = sampler.epoch_rng(epoch, 1);
    let mut drop_rng = dropout_rng(sampler, epoch ^ 1 << 32);
    let pool = WindowPool::build(frames, Split::Train, l + t, sampler, &mut rng);
    let steps = steps_for(stage, &pool);
    let mut step_losses = Vec::with_capacity(steps);
    for step in 0..steps {
        let mut g = Graph::new();
        let b = model.params.bind(&mut g);
        let mut losses = Vec::with_capacity(micro_batch);
        for _ in 0..micro_batch {
            let (d, c, s) = pool.draw(&mut rng)?;
            let sample = WindowSample::extract(&frames[d], c, s, l, t)
                .map_err(|e| at_step("finetune", step, e))?;
            let x = g.constant(build_model_input(sample.input.data(), &cfg)?);
            let target = g.constant(sample.target);
            let mut pass = PassState {
                dropout: cfg.dropout,
                rng: Some(&mut drop_rng),
            };
            let (pred, _) = model
                .forecast(&mut g, &b, x, &mut pass)
                .map_err(|e| at_step("finetune", step, e))?;
            losses.push(
                g.mse(pred, target)
                    .map_err(|e| at_step("finetune", step, e))?,
            );
        }
        let loss = mean_of(&mut g, &losses)?;
        let (value, grads) = finish_step(&g, loss, "finetune", step)?;
        adam_step(&mut model.params, &b.gradients(&grads), opt)
            .map_err(|e| at_step("finetune", step, e))?;
        step_losses.push(value);
    }
    Ok(EpochSummary::new(
        epoch,
        step_losses,
        pool.warnings,
        started.elapsed().as_secs_f64(),
    ))
}

/// One epoch of the linear baseline on normalised lookback/target pairs.
pub fn baseline_epoch<T: Scalar>(
    baseline: &mut LinearBaseline<T>,
    frames: &[SeriesFrame<T>],
    sampler: &SamplerConfig,
    stage: &StageConfig,
    micro_batch: usize,
    opt: &mut OptimizerState<T>,
    epoch: u64,
) -> Result<EpochSummary> {
    let started = Instant::now();
    let (l, t) = (baseline.lookback_len, baseline.horizon_len);
    let mut rng = sampler.epoch_rng(epoch, 2);
    let pool = WindowPool::build(frames, Split::Train, l + t, sampler, &mut rng);
    let steps = steps_for(stage, &pool);
    let mut step_losses = Vec::with_capacity(steps);
    for step in 0..steps {
        let mut g = Graph::new();
        let b = baseline.params.bind(&mut g);
        let mut losses = Vec::with_capacity(micro_batch);
        for _ in 0..micro_batch {
            let (d, c, s) = pool.draw(&mut rng)?;
            let sample = WindowSample::extract(&frames[d], c, s, l, t)
                .map_err(|e| at_step("baseline", step, e))?;
            let x = g.constant(sample.input);
            let target = g.constant(sample.target);
            let pred = baseline.forward(&mut g, &b, x)?;
            losses.push(
                g.mse(pred, target)
                    .map_err(|e| at_step("baseline", step, e))?,
            );
        }
        let loss = mean_of(&mut g, &losses)?;
        let (value, grads) = finish_step(&g, loss, "baseline", step)?;
        adam_step(&mut baseline.params, &b.gradients(&grads), opt)
            .map_err(|e| at_step("baseline", step, e))?;
        step_losses.push(value);
    }
    Ok(EpochSummary::new(
        epoch,
        step_losses,
        pool.warnings,
        started.elapsed().as_secs_f64(),
    ))
}

/// Non-jittered, non-overlapping window starts of `len` points inside `range`.
pub fn fixed_windows(range: Range<usize>, len: usize, max: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut s = range.start;
    while s + len <= range.end && out.len() < max {
        out.push(s);
        s += len;
    }
    out
}

/// Mean masked-reconstruction MSE over fixed windows of one split, with masks
/// drawn from `seed`. Inference mode, no parameter updates.
pub fn reconstruction_mse<T: Scalar>(
    model: &UShapedModel<T>,
    frames: &[SeriesFrame<T>],
    split: Split,
    max_windows_per_channel: usize,
    seed: u64,
) -> Result<f64> {
    let cfg = &model.config;
    let len = cfg.model_len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    let mut count = 0usize;
    for frame in frames {
        for c in 0..frame.n_channels() {
            for s in fixed_windows(frame.split_range(split), len, max_windows_per_channel) {
                let source = normalized_window(frame, c, s, len)?;
                let mask = zero_mask_patches(cfg.n_patches, cfg.mask_ratio, &mut rng)?;
                let masked = apply_patch_mask(&source, &mask, cfg.patch_size)?;
                let mut g = Graph::new();
                let b: Binding = model.params.bind_constant(&mut g);
                let x = g.constant(masked);
                let target = g.constant(source);
                let (recon, _) = model.reconstruct(&mut g, &b, x, &mut PassState::inference())?;
                let loss = g.mse(recon, target)?;
                total += g.value(loss).data()[0].as_f64();
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::Usage(format!(
            "no window of {len} points fits the {split:?} split"
        )));
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SyntheticSpec;
    use crate::model::ModelConfig;

    fn sine() -> Vec<SeriesFrame<f64>> {
        vec![SyntheticSpec::sine(2000, 24.0).generate("sine").unwrap()]
    }

    #[test]
    fn pool_draws_stay_in_train_split() {
        let frames = sine();
        let sampler = SamplerConfig {
            stride: 5,
            jitter: true,
            seed: 3,
        };
        let mut rng = sampler.epoch_rng(0, 0);
        let pool = WindowPool::build(&frames, Split::Train, 64, &sampler, &mut rng);
        let end = frames[0].split_range(Split::Train).end;
        for _ in 0..200 {
            let (d, c, s) = pool.draw(&mut rng).unwrap();
            assert_eq!((d, c), (0, 0));
            assert!(s + 64 <= end);
        }
    }

    #[test]
    fn finetune_rejects_trainable_backbone() {
        let mut m = UShapedModel::<f64>::new(ModelConfig::tiny(), 0).unwrap();
        let mut opt = OptimizerState::new(AdamConfig::default());
        let stage = StageConfig {
            steps_per_epoch: Some(1),
            ..StageConfig::default()
        };
        let err = finetune_epoch(
            &mut m,
            &sine(),
            &SamplerConfig::default(),
            &stage,
            1,
            &mut opt,
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn finetune_leaves_backbone_bytes_alone_and_moves_head() {
        let mut m = UShapedModel::<f32>::new(ModelConfig::tiny(), 4).unwrap();
        prepare_finetune(&mut m, false).unwrap();
        let before = m.backbone_digest();
        let head = m.params.tensor("head.forecast.weight").unwrap().clone();
        let frames = vec![SyntheticSpec::sine(2000, 24.0)
            .generate::<f32>("sine")
            .unwrap()];
        let stage = StageConfig {
            steps_per_epoch: Some(3),
            ..StageConfig::default()
        };
        let mut opt = OptimizerState::new(stage.adam);
        let sampler = SamplerConfig {
            stride: 8,
            jitter: true,
            seed: 1,
        };
        let rep = finetune_epoch(&mut m, &frames, &sampler, &stage, 1, &mut opt, 0).unwrap();
        assert_eq!(rep.step_losses.len(), 3);
        assert_eq!(m.backbone_digest(), before);
        assert_ne!(m.params.tensor("head.forecast.weight").unwrap(), &head);
    }

    #[test]
    fn pretrain_is_deterministic() {
        let run = || {
            let mut m = UShapedModel::<f64>::new(ModelConfig::tiny(), 2).unwrap();
            let stage = StageConfig {
                steps_per_epoch: Some(4),
                ..StageConfig::default()
            };
            let mut opt = OptimizerState::new(stage.adam);
            let sampler = SamplerConfig {
                stride: 4,
                jitter: true,
                seed: 7,
            };
            pretrain_epoch(&mut m, &sine(), &sampler, &stage, 2, &mut opt, 0)
                .unwrap()
                .step_losses
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn fixed_windows_do_not_overlap() {
        assert_eq!(fixed_windows(10..40, 8, 100), vec![10, 18, 26]);
        assert_eq!(fixed_windows(10..40, 8, 2), vec![10, 18]);
        assert!(fixed_windows(0..5, 8, 9).is_empty());
    }
}
