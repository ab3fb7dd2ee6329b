//! Acceptance run: every criterion in order, one PASS/FAIL line each.
//!
//! `cargo test -p strokenet-cli --test acceptance` runs all nine; numbers
//! after `--` select a subset, e.g. `-- 1 7 8`.

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use serde_json::{json, Value};
use strokenet::model::{ModelConfig, PoolOrder, TwoStreamNet};
use strokenet::Tensor;

type Outcome = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    run: fn() -> Outcome,
}

const CRITERIA: [Criterion; 9] = [
    Criterion { id: 1, name: "kernel oracles", run: kernel_oracles },
    Criterion { id: 2, name: "gradient suite", run: gradient_suite },
    Criterion { id: 3, name: "fusion algebra", run: fusion_algebra },
    Criterion { id: 4, name: "shape reproduction", run: shape_reproduction },
    Criterion { id: 5, name: "overfit run", run: overfit_run },
    Criterion { id: 6, name: "detection end-to-end", run: detection_end_to_end },
    Criterion { id: 7, name: "metric oracles", run: metric_oracles },
    Criterion { id: 8, name: "decision-method coherence", run: decision_coherence },
    Criterion { id: 9, name: "determinism", run: determinism },
];

fn main() -> ExitCode {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for c in CRITERIA.iter().filter(|c| selected.is_empty() || selected.contains(&c.id)) {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("criterion {} {tag} {} ({secs:.1}s): {detail}", c.id, c.name);
        ran += 1;
        failed += outcome.is_err() as usize;
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn within(start: Instant, limit: Duration, what: &str) -> Result<(), String> {
    let took = start.elapsed();
    if took > limit {
        return Err(format!("{what} took {:.1}s, limit {}s", took.as_secs_f64(), limit.as_secs()));
    }
    Ok(())
}

fn kernel_oracles() -> Outcome {
    let start = Instant::now();
    oracles::kernels::check_conv::<f32>(11, 1e-5);
    oracles::kernels::check_conv::<f64>(12, 1e-10);
    oracles::kernels::check_pool();
    oracles::kernels::check_linear::<f32>(13, 1e-5);
    oracles::kernels::check_linear::<f64>(14, 1e-10);
    within(start, Duration::from_secs(60), "kernel oracles")?;
    Ok(format!(
        "conv3d forward/backward, maxpool3d and linear on {} shapes each; pooling exact, rel err <= 1e-5 (f32) / 1e-10 (f64)",
        oracles::kernels::SHAPES
    ))
}

fn gradient_suite() -> Outcome {
    use oracles::gradients::*;
    let start = Instant::now();
    conv3d_gradients();
    maxpool3d_gradient();
    elementwise_gradients();
    shape_op_gradients();
    linear_gradients();
    softmax_and_cross_entropy_gradients();
    fusion_gradients();
    attention_block_gradient();
    full_model_gradients();
    within(start, Duration::from_secs(120), "gradient suite")?;
    Ok("every op below 1e-4, full two-stream tiny model (three fusions) below 1e-3".into())
}

fn fusion_algebra() -> Outcome {
    oracles::fusion::fusion_algebra::<f32>(1000, 31);
    oracles::fusion::fusion_algebra::<f64>(1000, 32);
    Ok("weighted(1,1) == summed bitwise, summed swap-symmetric, rows sum to 1 +- 1e-6 on 1000 inputs (f32 and f64)".into())
}

fn shape_reproduction() -> Outcome {
    let cfg = ModelConfig::default();
    let size = cfg.input_size;
    if (size.width, size.height, size.frames) != (120, 120, 100) || cfg.pool_order != PoolOrder::Wht {
        return Err(format!("default config is not 120x120x100 with (W,H,T) pools: {cfg:?}"));
    }
    if cfg.feature_len() != 4096 {
        return Err(format!("flattened feature length {}", cfg.feature_len()));
    }
    let net = TwoStreamNet::<f32>::init(&cfg, 0).map_err(|e| e.to_string())?;
    let clip = Tensor::<f32>::from_fn(&cfg.clip_shape(1), |i| ((i * 7919) % 255) as f32 / 255.0);
    let out = net.predict(&clip, Some(&clip)).map_err(|e| e.to_string())?;
    if out.shape() != [1, 21] {
        return Err(format!("output shape {:?}", out.shape()));
    }
    let total: f32 = out.data().iter().sum();
    if (total - 1.0).abs() > 1e-5 || out.data().iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(format!("output is not a distribution (sum {total})"));
    }
    Ok(format!(
        "extents {:?}, feature length 4096, 21-class distribution from a full-size forward pass",
        cfg.level_extents()
    ))
}

fn strokenet(args: &[&str]) -> Result<Value, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_strokenet"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        let stderr = String::from_utf8_lossy(&out.stderr);
        let tail: Vec<&str> = stderr.lines().rev().take(3).collect();
        return Err(format!("strokenet {} exited with {}: {}", args[0], out.status, tail.join(" | ")));
    }
    Ok(serde_json::from_slice(&out.stdout).unwrap_or(Value::Null))
}

fn write_json(path: &Path, v: &Value) -> Result<(), String> {
    std::fs::write(path, serde_json::to_vec_pretty(v).unwrap()).map_err(|e| e.to_string())
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

fn overfit_run() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    write_json(&root.join("spec.json"), &json!({"num_classes": 4, "clips_per_class": 32, "frame_count": 16, "width": 32, "height": 32}))?;
    strokenet(&["synth", "--spec", p(&root.join("spec.json")), "--out", p(&root.join("data"))])?;
    write_json(
        &root.join("config.json"),
        &json!({
            "dataset": "data",
            "streams": ["rgb", "pose"],
            "model": {"num_classes": 4},
            "optimizer": {"learning_rate": 1e-4, "momentum": 0.5, "epochs": 500},
            "batch_size": 8,
            "stop_at_train_accuracy": 0.95
        }),
    )?;
    let start = Instant::now();
    strokenet(&["train", "--config", p(&root.join("config.json"))])?;
    let secs = start.elapsed().as_secs_f64();
    let log = std::fs::read_to_string(root.join("run/train_log.jsonl")).map_err(|e| e.to_string())?;
    let epochs: Vec<Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let acc = |e: &Value| e["train_accuracy"].as_f64().unwrap_or(0.0);
    let best = epochs.iter().map(acc).fold(0.0, f64::max);
    let last = epochs.last().cloned().unwrap_or(Value::Null);
    let detail = format!(
        "{} epochs in {secs:.0}s, best train accuracy {best:.3}, final loss {:.5}",
        epochs.len(),
        last["loss"].as_f64().unwrap_or(f64::NAN)
    );
    if best < 0.95 {
        return Err(format!("train accuracy below 0.95: {detail}"));
    }
    if secs > 600.0 {
        return Err(format!("over the 10 minute budget: {detail}"));
    }
    Ok(detail)
}

/// Trains on one 2000-frame synthetic video with 10 planted strokes and
/// detects on a second, unseen one.
fn detection_end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    let start = Instant::now();
    write_json(
        &root.join("spec.json"),
        &json!({"num_classes": 4, "clips_per_class": 0, "seed": 3,
                "detection": {"videos": 2, "frame_count": 2000, "strokes": 10}}),
    )?;
    strokenet(&["synth", "--spec", p(&root.join("spec.json")), "--out", p(&root.join("data"))])?;
    write_json(
        &root.join("config.json"),
        &json!({
            "task": "detect",
            "dataset": "data",
            "videos": ["detect_000"],
            "model": {"num_classes": 2},
            "optimizer": {"learning_rate": 0.01, "epochs": 150},
            "decision": {"kind": "vote_sliding", "stride": 4},
            "threshold": 0.5,
            "min_length": 2
        }),
    )?;
    let config = root.join("config.json");
    strokenet(&["train", "--config", p(&config)])?;
    let pred = root.join("pred.json");
    strokenet(&[
        "detect", "--config", p(&config), "--checkpoint", p(&root.join("run/final.ckpt")),
        "--video", p(&root.join("data/videos/detect_001")), "--decision", "vote_sliding", "--out", p(&pred),
    ])?;
    let gt = root.join("data/videos/detect_001/annotations.json");
    let m = strokenet(&["evaluate", "--pred", p(&pred), "--gt", p(&gt), "--task", "detect"])?;
    within(start, Duration::from_secs(900), "detection run")?;
    let iou = m["mean_matched_iou"].as_f64().unwrap_or(0.0);
    let ap50 = m["ap"]
        .as_array()
        .and_then(|a| a.iter().find(|t| t["iou_threshold"] == 0.5))
        .and_then(|t| t["ap"].as_f64())
        .unwrap_or(0.0);
    let detail = format!(
        "{} predicted vs {} true segments, mean matched IoU {iou:.3}, AP@0.5 {ap50:.3}, mAP@[.5:.95] {:.3}",
        m["predictions"], m["ground_truth"], m["map"].as_f64().unwrap_or(0.0)
    );
    if iou >= 0.7 && ap50 >= 0.8 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn metric_oracles() -> Outcome {
    oracles::metrics::iou_reference_case_is_one_third();
    oracles::metrics::iou_matches_frame_enumeration();
    oracles::metrics::average_precision_matches_brute_force();
    Ok("IoU and AP equal brute-force enumeration on 100 instances; [0,10)/[5,15) gives exactly 1/3".into())
}

fn decision_coherence() -> Outcome {
    oracles::metrics::wide_gaussian_equals_mean();
    oracles::metrics::all_methods_coincide_on_a_single_window();
    oracles::metrics::vote_curve_matches_per_frame_tally();
    Ok("gaussian(1e6) within 1e-6 of mean; single-window inputs give identical decisions".into())
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(path.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    write_json(&root.join("spec.json"), &json!({"num_classes": 3, "clips_per_class": 4}))?;
    write_json(
        &root.join("config.json"),
        &json!({"dataset": "a", "model": {"num_classes": 3}, "optimizer": {"epochs": 3, "learning_rate": 0.01}, "seed": 5}),
    )?;
    let mut files = 0;
    for side in ["a", "b"] {
        let data = root.join(side);
        strokenet(&["synth", "--spec", p(&root.join("spec.json")), "--out", p(&data), "--seed", "9"])?;
        let video = data.join("videos/clip_c2_003");
        strokenet(&[
            "render", "--frames", p(&video.join("frames")), "--poses", p(&video.join("poses.jsonl")),
            "--mode", "overlay", "--out", p(&root.join(format!("render_{side}"))),
        ])?;
        strokenet(&[
            "--threads", "1", "train", "--config", p(&root.join("config.json")), "--out", p(&root.join(format!("run_{side}"))),
        ])?;
    }
    for (what, a, b) in [("synth", "a", "b"), ("render", "render_a", "render_b"), ("train", "run_a", "run_b")] {
        let (ta, tb) = (tree(&root.join(a)), tree(&root.join(b)));
        if ta != tb {
            return Err(format!("{what} artifacts differ between runs"));
        }
        files += ta.len();
    }
    Ok(format!("synth, render and train --threads 1 byte-identical across two runs ({files} files)"))
}
