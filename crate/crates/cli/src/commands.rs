//! One function per subcommand. Every command writes only under the run's output directory.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use ushape_core::data::normalize::window_stats;
use ushape_core::data::{build_model_input, NormStats, SeriesFrame, Split};
use ushape_core::model::{
    attention_csv, attention_file_name, mass_report, LinearBaseline, PassState, UShapedModel,
};
use ushape_core::tensor::{Graph, Tensor};
use ushape_core::train::{
    baseline_epoch, evaluate, evaluate_on, finetune_epoch, load_checkpoint_for, metrics_csv,
    prepare_finetune, pretrain_epoch, reconstruction_mse, save_checkpoint, Forecaster,
    LastValueRepeat, MetricRow, OptimizerState, TrainReport, TruthOracle,
};
use ushape_core::verify::run_gradient_suite;
use ushape_core::{Error, Model32, SeriesFrame32};

use crate::config::RunConfig;

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write(path, serde_json::to_string_pretty(value)? + "\n")
}

fn load_frames(cfg: &RunConfig) -> Result<Vec<SeriesFrame32>> {
    let frames = cfg.registry()?.load_all::<f32>()?;
    for f in &frames {
        log::info!(
            "dataset {}: {} channels × {} steps",
            f.dataset_id,
            f.n_channels(),
            f.len()
        );
    }
    Ok(frames)
}

fn load_model(cfg: &RunConfig, checkpoint: &Path) -> Result<Model32> {
    let (model, manifest) = load_checkpoint_for::<f32>(checkpoint, &cfg.model)
        .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    log::info!("loaded {} (seed {})", checkpoint.display(), manifest.seed);
    Ok(model)
}

#[derive(Serialize)]
struct ReconSummary {
    split: Split,
    initial_mse: Option<f64>,
    final_mse: Option<f64>,
}

const RECON_WINDOWS_PER_CHANNEL: usize = 8;

fn recon_mse(model: &Model32, frames: &[SeriesFrame32], seed: u64) -> Option<f64> {
    match reconstruction_mse(
        model,
        frames,
        Split::Validate,
        RECON_WINDOWS_PER_CHANNEL,
        seed,
    ) {
        Ok(v) => Some(v),
        Err(e) => {
            log::warn!("skipping validation reconstruction error: {e}");
            None
        }
    }
}

pub fn pretrain(cfg: &RunConfig) -> Result<()> {
    let frames = load_frames(cfg)?;
    cfg.prepare_out_dir()?;
    let mut model = UShapedModel::<f32>::new(cfg.model.clone(), cfg.seed)?;
    let initial = recon_mse(&model, &frames, cfg.seed);
    let stage = &cfg.trainer.pretrain;
    let mut opt = OptimizerState::new(stage.adam);
    let mut report = TrainReport::new("pretrain");
    for epoch in 0..stage.epochs as u64 {
        let summary = pretrain_epoch(
            &mut model,
            &frames,
            &cfg.sampler,
            stage,
            cfg.trainer.micro_batch,
            &mut opt,
            epoch,
        )?;
        report.push(summary)?;
    }
    let summary = ReconSummary {
        split: Split::Validate,
        initial_mse: initial,
        final_mse: recon_mse(&model, &frames, cfg.seed),
    };
    save_checkpoint(&model, cfg.seed, cfg.out_dir.join("pretrain.ckpt"))?;
    report.write(&cfg.out_dir, "pretrain")?;
    write_json(&cfg.out_dir.join("pretrain_recon.json"), &summary)?;
    log::info!("wrote {}", cfg.out_dir.display());
    Ok(())
}

#[derive(Serialize)]
struct FinetuneCheck {
    backbone_digest_loaded: String,
    backbone_digest_final: String,
    validation: Vec<MetricRow>,
}

pub fn finetune(cfg: &RunConfig, checkpoint: &Path) -> Result<()> {
    let mut model = load_model(cfg, checkpoint)?;
    let frames = load_frames(cfg)?;
    cfg.prepare_out_dir()?;
    let loaded = model.backbone_digest();
    prepare_finetune(&mut model, cfg.trainer.warm_start_forecast_head)?;
    let stage = &cfg.trainer.finetune;
    let mut opt = OptimizerState::new(stage.adam);
    let mut report = TrainReport::new("finetune");
    for epoch in 0..stage.epochs as u64 {
        let summary = finetune_epoch(
            &mut model,
            &frames,
            &cfg.sampler,
            stage,
            cfg.trainer.micro_batch,
            &mut opt,
            epoch,
        )?;
        report.push(summary)?;
    }
    let fin = model.backbone_digest();
    if fin != loaded {
        bail!("backbone changed during finetuning: {loaded} -> {fin}");
    }
    let t = cfg.model.horizon_len;
    let stride = cfg.trainer.eval_stride.unwrap_or(t);
    let naive = LastValueRepeat {
        lookback_len: cfg.model.lookback_len,
        horizon_len: t,
    };
    let mut validation = Vec::new();
    for f in &frames {
        match evaluate_on(&model, f, Split::Validate, &[t], stride) {
            Ok(rows) => {
                validation.extend(rows);
                validation.extend(evaluate_on(&naive, f, Split::Validate, &[t], stride)?);
            }
            Err(e) => log::warn!("skipping validation metrics for {}: {e}", f.dataset_id),
        }
    }
    save_checkpoint(&model, cfg.seed, cfg.out_dir.join("finetune.ckpt"))?;
    report.metrics = validation.clone();
    report.write(&cfg.out_dir, "finetune")?;
    write_json(
        &cfg.out_dir.join("finetune_check.json"),
        &FinetuneCheck {
            backbone_digest_loaded: loaded,
            backbone_digest_final: fin,
            validation,
        },
    )?;
    log::info!("backbone unchanged; wrote {}", cfg.out_dir.display());
    Ok(())
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    rows: &'a [MetricRow],
}

pub struct EvalOptions<'a> {
    pub checkpoint: Option<&'a Path>,
    pub horizons: Option<Vec<usize>>,
    pub baseline: bool,
    pub oracle_stub: bool,
}

pub fn eval(cfg: &RunConfig, opts: EvalOptions<'_>) -> Result<()> {
    let (l, t) = (cfg.model.lookback_len, cfg.model.horizon_len);
    let horizons = opts.horizons.unwrap_or_else(|| vec![t]);
    ushape_core::train::evaluate::check_horizons(&horizons, t)?;
    let primary: Box<dyn Forecaster<f32>> = match (opts.oracle_stub, opts.checkpoint) {
        (true, _) => Box::new(TruthOracle {
            lookback_len: l,
            horizon_len: t,
        }),
        (false, Some(path)) => Box::new(load_model(cfg, path)?),
        (false, None) => {
            return Err(Error::Usage("eval needs --checkpoint or --oracle-stub".into()).into())
        }
    };
    let frames = load_frames(cfg)?;
    cfg.prepare_out_dir()?;
    let stride = cfg.trainer.eval_stride.unwrap_or(t);
    let baseline = if opts.baseline {
        let mut bl = LinearBaseline::<f32>::new(l, t, cfg.seed)?;
        let stage = &cfg.trainer.baseline;
        let mut opt = OptimizerState::new(stage.adam);
        let mut report = TrainReport::new("baseline");
        for epoch in 0..stage.epochs as u64 {
            report.push(baseline_epoch(
                &mut bl,
                &frames,
                &cfg.sampler,
                stage,
                cfg.trainer.micro_batch,
                &mut opt,
                epoch,
            )?)?;
        }
        report.write(&cfg.out_dir, "baseline")?;
        Some(bl)
    } else {
        None
    };
    let naive = LastValueRepeat {
        lookback_len: l,
        horizon_len: t,
    };
    let mut rows = Vec::new();
    for f in &frames {
        rows.extend(evaluate(primary.as_ref(), f, &horizons, stride)?);
        if let Some(bl) = &baseline {
            rows.extend(evaluate(bl, f, &horizons, stride)?);
            rows.extend(evaluate(&naive, f, &horizons, stride)?);
        }
    }
    for r in &rows {
        log::info!(
            "{} {} h={}: mse {:.4} mae {:.4} mape {:.4}",
            r.dataset,
            r.model,
            r.horizon,
            r.metrics.mse,
            r.metrics.mae,
            r.metrics.mape
        );
    }
    write(&cfg.out_dir.join("metrics.csv"), metrics_csv(&rows))?;
    write_json(
        &cfg.out_dir.join("metrics.json"),
        &MetricsFile { rows: &rows },
    )?;
    Ok(())
}

fn read_input(path: &Path) -> Result<SeriesFrame32> {
    SeriesFrame::<f32>::load_csv(path, "input")
        .with_context(|| format!("reading input {}", path.display()))
}

fn model_input(model: &Model32, series: &[f32]) -> Result<(Tensor<f32>, NormStats)> {
    let stats = window_stats(series)?;
    let normalized = stats.apply(series);
    Ok((build_model_input(&normalized, &model.config)?, stats))
}

#[derive(Serialize)]
struct ChannelStats<'a> {
    channel: &'a str,
    mu: f64,
    sigma: f64,
    divides: bool,
}

pub fn forecast(cfg: &RunConfig, checkpoint: &Path, input: &Path, denormalize: bool) -> Result<()> {
    let model = load_model(cfg, checkpoint)?;
    let frame = read_input(input)?;
    cfg.prepare_out_dir()?;
    let t = cfg.model.horizon_len;
    let mut columns = Vec::with_capacity(frame.n_channels());
    let mut stats_out = Vec::new();
    for c in 0..frame.n_channels() {
        let (x, stats) = model_input(&model, frame.channel(c))?;
        let mut g = Graph::new();
        let b = model.params.bind_constant(&mut g);
        let xv = g.constant(x);
        let (y, _) = model.forecast(&mut g, &b, xv, &mut PassState::inference())?;
        let values = g.value(y).data().to_vec();
        columns.push(if denormalize {
            stats.invert(&values)
        } else {
            values
        });
        stats_out.push(ChannelStats {
            channel: &frame.channel_names[c],
            mu: stats.mu,
            sigma: stats.sigma,
            divides: stats.divides(),
        });
    }
    let mut out = frame.channel_names.join(",");
    out.push('\n');
    for i in 0..t {
        let row: Vec<String> = columns.iter().map(|col| format!("{}", col[i])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write(&cfg.out_dir.join("forecast.csv"), out)?;
    write_json(&cfg.out_dir.join("forecast_stats.json"), &stats_out)?;
    Ok(())
}

pub fn attn_dump(cfg: &RunConfig, checkpoint: &Path, input: &Path, channel: usize) -> Result<()> {
    let model = load_model(cfg, checkpoint)?;
    let frame = read_input(input)?;
    if channel >= frame.n_channels() {
        return Err(Error::Usage(format!(
            "channel {channel} out of range for {} channels",
            frame.n_channels()
        ))
        .into());
    }
    cfg.prepare_out_dir()?;
    let (x, _) = model_input(&model, frame.channel(channel))?;
    let mut g = Graph::new();
    let b = model.params.bind_constant(&mut g);
    let xv = g.constant(x);
    let (_, maps) = model.forecast(&mut g, &b, xv, &mut PassState::inference())?;
    let mut masses = Vec::new();
    for map in &maps {
        write(
            &cfg.out_dir.join(attention_file_name(map)),
            attention_csv(map)?,
        )?;
        let m = mass_report(&model.config, map)?;
        log::info!(
            "{} L{}: known queries put {:.4} on known keys, {:.4} on padded keys",
            m.side.as_str(),
            m.level,
            m.mass_known,
            m.mass_padded
        );
        masses.push(m);
    }
    write_json(&cfg.out_dir.join("attention_mass.json"), &masses)?;
    Ok(())
}

pub fn gradcheck(seeds: u64, tolerance: f64, out: Option<&Path>) -> Result<()> {
    let report = run_gradient_suite::<f64>(0..seeds, tolerance, true)?;
    let mut csv = String::from("case,seeds,worst_rel_err,passed\n");
    for (case, worst, ok) in report.by_case() {
        println!(
            "{} {case:<28} {worst:.3e}",
            if ok { "ok  " } else { "FAIL" }
        );
        csv.push_str(&format!("{case},{seeds},{worst:e},{ok}\n"));
    }
    println!(
        "tolerance {tolerance:e}, worst {:.3e} over {seeds} seeds",
        report.worst()
    );
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write(&dir.join("gradcheck.csv"), csv)?;
    }
    if !report.passed() {
        return Err(Error::Numeric {
            op: "gradcheck".into(),
            detail: Some(format!(
                "worst relative error {:.3e} ≥ {tolerance:e}",
                report.worst()
            )),
        }
        .into());
    }
    Ok(())
}
