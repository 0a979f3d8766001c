#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::Value;

pub fn ushape(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ushape"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn ushape")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Runs a subcommand with `--config` and `--out` and returns the exit code and stderr.
pub fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> (i32, String) {
    let mut args = vec![
        cmd,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let o = ushape(&args);
    (code(&o), stderr(&o))
}

pub fn write_json(path: &Path, v: &Value) -> PathBuf {
    fs::write(path, serde_json::to_string_pretty(v).unwrap()).unwrap();
    path.to_path_buf()
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_str(
        &fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display())),
    )
    .unwrap()
}

/// Tiny preset on a 4000-step sine with period 24.
pub fn sine_config(dir: &Path, pretrain_steps: usize, finetune_steps: Option<usize>) -> PathBuf {
    let v = serde_json::json!({
        "model": "tiny",
        "seed": 0,
        "sampler": {"stride": 4, "jitter": true},
        "registry": {"datasets": {"sine": {"synthetic": {"kind": "sine", "length": 4000, "period": 24}}}},
        "trainer": {
            "pretrain": {"steps_per_epoch": pretrain_steps, "adam": {"lr": 1e-3}},
            "finetune": {"steps_per_epoch": finetune_steps, "adam": {"lr": 1e-3}},
            "baseline": {"steps_per_epoch": 200, "adam": {"lr": 1e-3}}
        }
    });
    write_json(&dir.join("run.json"), &v)
}

/// Seven load/temperature style channels with daily and weekly cycles, a slow drift and
/// noise, hourly timestamps in the first column.
pub fn write_ett_style_csv(path: &Path, hours: usize, seed: u64) {
    let names = ["HUFL", "HULL", "MUFL", "MULL", "LUFL", "LULL", "OT"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.3).unwrap();
    let mut out = String::from("date");
    for n in names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    let tau = std::f64::consts::TAU;
    for t in 0..hours {
        let (day, hour) = (t / 24, t % 24);
        out.push_str(&format!(
            "2016-{:02}-{:02} {hour:02}:00:00",
            1 + (day / 28) % 12,
            1 + day % 28
        ));
        for (c, _) in names.iter().enumerate() {
            let cf = c as f64;
            let daily = (1.0 + 0.3 * cf) * (tau * t as f64 / 24.0 + 0.4 * cf).sin();
            let weekly = 0.5 * (tau * t as f64 / 168.0 + cf).sin();
            let drift = 0.002 * t as f64 * if c % 2 == 0 { 1.0 } else { -0.5 };
            let v = 5.0 + cf + daily + weekly + drift + noise.sample(&mut rng);
            out.push_str(&format!(",{v:.3}"));
        }
        out.push('\n');
    }
    fs::write(path, out).unwrap();
}

/// Every regular file under `dir` keyed by its relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Headerless numeric CSV as rows.
pub fn read_matrix(path: &Path) -> Vec<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .unwrap();
    rdr.records()
        .map(|r| r.unwrap().iter().map(|c| c.parse().unwrap()).collect())
        .collect()
}
