mod common;

use std::fs;
use std::path::Path;

use common::*;
use serde_json::json;
use ushape_core::model::{ModelConfig, UShapedModel};
use ushape_core::train::{load_checkpoint, save_checkpoint};

fn pretrained(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let cfg = sine_config(dir, 10, Some(10));
    let out = dir.join("pre");
    let (c, err) = run("pretrain", &cfg, &out, &[]);
    assert_eq!(c, 0, "{err}");
    (cfg, out.join("pretrain.ckpt"))
}

#[test]
fn pretrain_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (_, ckpt) = pretrained(dir.path());
    let out = ckpt.parent().unwrap();
    for f in [
        "config.json",
        "pretrain.ckpt",
        "pretrain_loss.csv",
        "pretrain_report.json",
        "pretrain_recon.json",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let loss = fs::read_to_string(out.join("pretrain_loss.csv")).unwrap();
    assert_eq!(loss.lines().next(), Some("step,loss"));
    assert_eq!(loss.lines().count(), 11);
    let report = read_json(&out.join("pretrain_report.json"));
    assert_eq!(report["stage"], "pretrain");
}

#[test]
fn written_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let (_, ckpt) = pretrained(dir.path());
    let first = ckpt.parent().unwrap();
    let resolved = first.join("config.json");
    let (c, err) = run("pretrain", &resolved, &dir.path().join("again"), &[]);
    assert_eq!(c, 0, "{err}");
    assert_eq!(
        fs::read(&ckpt).unwrap(),
        fs::read(dir.path().join("again/pretrain.ckpt")).unwrap()
    );
}

#[test]
fn seed_flag_changes_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, ckpt) = pretrained(dir.path());
    let (c, _) = run("pretrain", &cfg, &dir.path().join("s1"), &["--seed", "1"]);
    assert_eq!(c, 0);
    assert_ne!(
        fs::read(ckpt).unwrap(),
        fs::read(dir.path().join("s1/pretrain.ckpt")).unwrap()
    );
    assert_eq!(read_json(&dir.path().join("s1/config.json"))["seed"], 1);
}

#[test]
fn finetune_keeps_backbone_and_requires_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, ckpt) = pretrained(dir.path());
    let out = dir.path().join("ft");
    let (c, err) = run("finetune", &cfg, &out, &[]);
    assert_eq!(c, 2);
    assert!(err.contains("--checkpoint"), "{err}");

    let (c, err) = run(
        "finetune",
        &cfg,
        &out,
        &["--checkpoint", ckpt.to_str().unwrap()],
    );
    assert_eq!(c, 0, "{err}");
    let check = read_json(&out.join("finetune_check.json"));
    assert_eq!(
        check["backbone_digest_loaded"],
        check["backbone_digest_final"]
    );
    let (pre, _) = load_checkpoint::<f32>(&ckpt).unwrap();
    let (post, _) = load_checkpoint::<f32>(out.join("finetune.ckpt")).unwrap();
    assert_eq!(pre.backbone_digest(), post.backbone_digest());
    assert!(post
        .params
        .iter()
        .filter(|(n, _)| n.starts_with("head.forecast"))
        .all(|(_, p)| !p.frozen));
}

#[test]
fn mismatched_checkpoint_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = sine_config(dir.path(), 1, Some(1));
    let other = ModelConfig {
        d_model: 8,
        ..ModelConfig::tiny()
    };
    let path = dir.path().join("other.ckpt");
    save_checkpoint(&UShapedModel::<f32>::new(other, 0).unwrap(), 0, &path).unwrap();
    let (c, err) = run(
        "finetune",
        &cfg,
        &dir.path().join("o"),
        &["--checkpoint", path.to_str().unwrap()],
    );
    assert_eq!(c, 2);
    assert!(err.contains("embed.weight"), "{err}");
    fs::write(&path, b"garbage").unwrap();
    let (c, err) = run(
        "eval",
        &cfg,
        &dir.path().join("o"),
        &["--checkpoint", path.to_str().unwrap()],
    );
    assert_eq!(c, 2);
    assert!(err.contains("magic"), "{err}");
}

#[test]
fn eval_rows_and_horizon_checks() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, ckpt) = pretrained(dir.path());
    let ck = ckpt.to_str().unwrap();
    let out = dir.path().join("ev");
    let (c, err) = run(
        "eval",
        &cfg,
        &out,
        &["--checkpoint", ck, "--baseline", "--horizons", "16"],
    );
    assert_eq!(c, 0, "{err}");
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(
        csv.lines().next(),
        Some("dataset,model,horizon,windows,mse,mae,mape")
    );
    let rows = read_json(&out.join("metrics.json"))["rows"]
        .as_array()
        .unwrap()
        .clone();
    let keys: Vec<(String, u64)> = rows
        .iter()
        .map(|r| {
            (
                r["model"].as_str().unwrap().to_string(),
                r["horizon"].as_u64().unwrap(),
            )
        })
        .collect();
    assert_eq!(csv.lines().count(), rows.len() + 1);
    for m in ["ushape", "linear", "last_value"] {
        assert!(keys.contains(&(m.to_string(), 16)), "{keys:?}");
    }

    for bad in ["96", "8,16"] {
        let (c, err) = run("eval", &cfg, &out, &["--checkpoint", ck, "--horizons", bad]);
        assert_eq!(c, 2, "{err}");
    }
    let (c, _) = run("eval", &cfg, &out, &[]);
    assert_eq!(c, 2);
}

#[test]
fn oracle_stub_scores_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = sine_config(dir.path(), 1, Some(1));
    let out = dir.path().join("or");
    let (c, err) = run("eval", &cfg, &out, &["--oracle-stub"]);
    assert_eq!(c, 0, "{err}");
    let rows = read_json(&out.join("metrics.json"))["rows"].clone();
    assert_eq!(rows[0]["model"], "oracle");
    assert_eq!(rows[0]["mse"], 0.0);
    assert_eq!(rows[0]["mae"], 0.0);
}

#[test]
fn forecast_writes_t_rows_per_column() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, ckpt) = pretrained(dir.path());
    let input = dir.path().join("in.csv");
    let mut text = String::from("date,a,b\n");
    for i in 0..48 {
        text.push_str(&format!(
            "t{i},{},{}\n",
            (i as f64 / 4.0).sin(),
            100.0 + i as f64
        ));
    }
    fs::write(&input, text).unwrap();
    let out = dir.path().join("fc");
    let args = [
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--input",
        input.to_str().unwrap(),
    ];
    let (c, err) = run("forecast", &cfg, &out, &args);
    assert_eq!(c, 0, "{err}");
    let body = fs::read_to_string(out.join("forecast.csv")).unwrap();
    let mut lines = body.lines();
    assert_eq!(lines.next(), Some("a,b"));
    assert_eq!(lines.count(), 16);
    let stats = read_json(&out.join("forecast_stats.json"));
    assert!((stats[1]["mu"].as_f64().unwrap() - 123.5).abs() < 1e-3);

    let out2 = dir.path().join("fc2");
    let (c, _) = run(
        "forecast",
        &cfg,
        &out2,
        &[&args[..], &["--denormalize"]].concat(),
    );
    assert_eq!(c, 0);
    let denorm: Vec<f64> = fs::read_to_string(out2.join("forecast.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(denorm.iter().all(|v| (v - 123.5).abs() < 200.0));
    assert!(denorm.iter().sum::<f64>() / 16.0 > 50.0);

    fs::write(&input, "date,a\n").unwrap();
    let (c, err) = run("forecast", &cfg, &out, &args);
    assert_eq!(c, 2);
    assert!(err.contains("no data rows"), "{err}");
    fs::write(&input, "a\n1\nnan\n").unwrap();
    let (c, err) = run("forecast", &cfg, &out, &args);
    assert_eq!(c, 2);
    assert!(err.contains("row 2"), "{err}");
}

#[test]
fn attn_dump_files() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, ckpt) = pretrained(dir.path());
    let input = dir.path().join("in.csv");
    let text: String = std::iter::once("v\n".to_string())
        .chain((0..48).map(|i| format!("{}\n", i % 7)))
        .collect();
    fs::write(&input, text).unwrap();
    let out = dir.path().join("attn");
    let (c, err) = run(
        "attn-dump",
        &cfg,
        &out,
        &[
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--input",
            input.to_str().unwrap(),
        ],
    );
    assert_eq!(c, 0, "{err}");
    for (name, p) in [
        ("attn_enc_L1.csv", 8),
        ("attn_enc_L2.csv", 4),
        ("attn_dec_L1.csv", 8),
    ] {
        let m = read_matrix(&out.join(name));
        assert_eq!((m.len(), m[0].len()), (p, p), "{name}");
    }
    assert_eq!(
        read_json(&out.join("attention_mass.json"))
            .as_array()
            .unwrap()
            .len(),
        3
    );
    let (c, _) = run(
        "attn-dump",
        &cfg,
        &out,
        &[
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--input",
            input.to_str().unwrap(),
            "--channel",
            "3",
        ],
    );
    assert_eq!(c, 2);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_json(
        &dir.path().join("bad.json"),
        &json!({"model": "tiny", "registry": {"datasets": {}}, "learning_rate": 1}),
    );
    let (c, err) = run("pretrain", &bad, &dir.path().join("o"), &[]);
    assert_eq!(c, 2);
    assert!(err.contains("learning_rate"), "{err}");
    let empty = write_json(
        &dir.path().join("empty.json"),
        &json!({"model": "tiny", "registry": {"datasets": {}}}),
    );
    let (c, err) = run("pretrain", &empty, &dir.path().join("o"), &[]);
    assert_eq!(c, 2);
    assert!(err.contains("registry is empty"), "{err}");
    let (c, _) = run(
        "pretrain",
        &dir.path().join("missing.json"),
        &dir.path().join("o"),
        &[],
    );
    assert_eq!(c, 2);
}

#[test]
fn gradcheck_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = ushape(&[
        "gradcheck",
        "--seeds",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("gradcheck.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 24);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")));
    let out = ushape(&["gradcheck", "--seeds", "1", "--tolerance", "1e-15"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn diverging_pretrain_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = sine_config(dir.path(), 20, Some(1));
    let mut v = read_json(&cfg);
    v["trainer"]["pretrain"]["adam"]["lr"] = json!(1e30);
    write_json(&cfg, &v);
    let (c, err) = run("pretrain", &cfg, &dir.path().join("o"), &[]);
    assert_eq!(c, 3, "{err}");
    assert!(err.contains("pretrain step"), "{err}");
}

#[test]
fn missing_dataset_file_names_the_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(
        &dir.path().join("run.json"),
        &json!({"model": "tiny", "registry": {"datasets": {"etth1_local": {"path": "absent.csv"}}}}),
    );
    let (c, err) = run("pretrain", &cfg, &dir.path().join("o"), &[]);
    assert_eq!(c, 2);
    assert!(err.contains("etth1_local"), "{err}");
}

fn forecast_column(path: &Path, col: usize) -> Vec<f64> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(col).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn denormalized_forecast_is_affine_image_of_normalized() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, ckpt) = pretrained(dir.path());
    let input = dir.path().join("in.csv");
    let text: String = std::iter::once("v\n".to_string())
        .chain((0..40).map(|i| format!("{}\n", 50.0 + 3.0 * (i as f64 / 5.0).cos())))
        .collect();
    fs::write(&input, text).unwrap();
    let args = [
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--input",
        input.to_str().unwrap(),
    ];
    assert_eq!(run("forecast", &cfg, &dir.path().join("n"), &args).0, 0);
    let (c, _) = run(
        "forecast",
        &cfg,
        &dir.path().join("d"),
        &[&args[..], &["--denormalize"]].concat(),
    );
    assert_eq!(c, 0);
    let stats = read_json(&dir.path().join("d/forecast_stats.json"));
    let (mu, sigma) = (
        stats[0]["mu"].as_f64().unwrap(),
        stats[0]["sigma"].as_f64().unwrap(),
    );
    let norm = forecast_column(&dir.path().join("n/forecast.csv"), 0);
    let den = forecast_column(&dir.path().join("d/forecast.csv"), 0);
    for (z, x) in norm.iter().zip(&den) {
        assert!((z * sigma + mu - x).abs() < 1e-4 * mu, "{z} {x}");
    }
}

#[test]
fn small_preset_accepts_a_700_step_input() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("small.ckpt");
    save_checkpoint(
        &UShapedModel::<f32>::new(ModelConfig::small(), 0).unwrap(),
        0,
        &ckpt,
    )
    .unwrap();
    let cfg = write_json(
        &dir.path().join("run.json"),
        &json!({"model": "small", "registry": {"datasets": {}}}),
    );
    let input = dir.path().join("in.csv");
    write_ett_style_csv(&input, 700, 1);
    let out = dir.path().join("o");
    let (c, err) = run(
        "forecast",
        &cfg,
        &out,
        &[
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--input",
            input.to_str().unwrap(),
        ],
    );
    assert_eq!(c, 0, "{err}");
    assert_eq!(
        fs::read_to_string(out.join("forecast.csv"))
            .unwrap()
            .lines()
            .count(),
        1 + 1024
    );
}

#[test]
fn head_trained_on_constants_forecasts_a_constant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(
        &dir.path().join("run.json"),
        &json!({
            "model": "tiny",
            "sampler": {"stride": 8},
            "registry": {"datasets": {"flat": {"synthetic": {"kind": "sine", "length": 1500, "period": 24,
                                                             "amplitude": 0.0, "offset": 3.0}}}},
            "trainer": {
                "pretrain": {"steps_per_epoch": 5},
                "finetune": {"epochs": 2, "steps_per_epoch": 300, "adam": {"lr": 1e-2}}
            }
        }),
    );
    assert_eq!(run("pretrain", &cfg, &dir.path().join("p"), &[]).0, 0);
    let pre = dir.path().join("p/pretrain.ckpt");
    let (c, err) = run(
        "finetune",
        &cfg,
        &dir.path().join("f"),
        &["--checkpoint", pre.to_str().unwrap()],
    );
    assert_eq!(c, 0, "{err}");
    let input = dir.path().join("in.csv");
    let text: String = std::iter::once("v\n".to_string())
        .chain((0..48).map(|_| "3.0\n".to_string()))
        .collect();
    fs::write(&input, text).unwrap();
    let ft = dir.path().join("f/finetune.ckpt");
    let args = [
        "--checkpoint",
        ft.to_str().unwrap(),
        "--input",
        input.to_str().unwrap(),
        "--denormalize",
    ];
    assert_eq!(run("forecast", &cfg, &dir.path().join("o"), &args).0, 0);
    let values = forecast_column(&dir.path().join("o/forecast.csv"), 0);
    assert!(values.iter().all(|v| (v - 3.0).abs() < 0.05), "{values:?}");
}
