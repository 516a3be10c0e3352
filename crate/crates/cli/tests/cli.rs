use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use boxforge_core::dataset::Manifest;
use boxforge_core::geometry::{compute_maps_fast, MapOptions};
use boxforge_core::BoundingBox;
use serde_json::{json, Value};

fn boxforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_boxforge"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn tiny_config(dir: &Path) -> PathBuf {
    let cfg = json!({
        "paths": {
            "manifest": dir.join("data/manifest.jsonl"),
            "checkpoint": dir.join("train/ckpt.bin"),
        },
        "toy": {
            "spec": {"height": 16, "width": 16, "num_defect_classes": 2, "boxes_per_image": [1, 2], "seed": 3},
            "count": 30,
            "split_seed": 1
        },
        "diffusion": {
            "num_steps": 8, "beta_start": 0.01, "beta_end": 0.3,
            "base_width": 8, "channel_mult": [1, 1], "time_embed_dim": 8, "norm_groups": 4,
            "lr": 0.001, "batch_size": 8, "epochs": 2, "seed": 1, "checkpoint_every": 1
        },
        "sampling": {"seed": 5, "batch_size": 4, "samples_per_annotation": 2},
        "downstream": {"epochs": 2, "base_width": 8, "channel_mult": [1]}
    });
    let p = dir.join("config.json");
    std::fs::write(&p, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    p
}

fn run_ok(args: &[&str]) -> String {
    let o = boxforge(args);
    assert_eq!(code(&o), 0, "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn out_arg(dir: &Path, sub: &str) -> String {
    format!("paths.output_dir={}", dir.join(sub).display())
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn pipeline_runs_end_to_end_and_archives_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = tiny_config(d);
    let cfg = cfg.to_str().unwrap();
    run_ok(&["toygen", "--config", cfg, &out_arg(d, "data")]);
    let real = Manifest::load(&d.join("data/manifest.jsonl")).unwrap();
    assert_eq!(real.records.len(), 30);

    run_ok(&["train", "--config", cfg, &out_arg(d, "train")]);
    let csv = std::fs::read_to_string(d.join("train/loss_curve.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("epoch,steps,mean_loss\n1,"));
    let run = read_json(&d.join("train/run.json"));
    assert_eq!(run["command"], "train");
    assert_eq!(run["config"]["diffusion"]["epochs"], 2);
    assert_eq!(run["inputs"]["manifest"]["sha256"].as_str().unwrap().len(), 64);

    let out = run_ok(&["sample", "--config", cfg, &out_arg(d, "synth"), "--set", "sampling.split=\"seg_train\""]);
    assert!(out.contains("SAE %"));
    let synth = Manifest::load(&d.join("synth/manifest.jsonl")).unwrap();
    assert_eq!(synth.records.len(), 2 * real.count(boxforge_core::dataset::Split::SegTrain));
    assert!(d.join("synth/alignment.json").exists());
    let first = &synth.records[0];
    let side = read_json(&d.join("synth").join(first.image.replace(".png", ".json")));
    assert_eq!(side["provenance"]["steps"], 8);

    let synth_manifest = format!("paths.synthetic_manifest={}", d.join("synth/manifest.jsonl").display());
    run_ok(&["evaluate", "--config", cfg, &out_arg(d, "eval"), &synth_manifest]);
    let report = read_json(&d.join("eval/report.json"));
    let sampled = read_json(&d.join("synth/alignment.json"));
    assert_eq!(report["counts"], sampled["counts"]);

    let table = run_ok(&["downstream", "--config", cfg, &out_arg(d, "down"), &synth_manifest]);
    for name in ["Real", "Synth", "Real+Synth"] {
        assert!(table.contains(name), "{table}");
    }
    let down = read_json(&d.join("down/downstream.json"));
    assert_eq!(down["regimes"].as_array().unwrap().len(), 3);

    // resuming with more epochs continues the curve
    let resume = format!("paths.resume={}", d.join("train/ckpt.bin").display());
    run_ok(&["train", "--config", cfg, &out_arg(d, "train2"), &resume, "diffusion.epochs=3", &format!("paths.checkpoint={}", d.join("train2/ckpt.bin").display())]);
    let csv2 = std::fs::read_to_string(d.join("train2/loss_curve.csv")).unwrap();
    assert_eq!(csv2.lines().count(), 4);
    assert!(csv2.starts_with(&csv));
}

#[test]
fn sampling_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = tiny_config(d);
    let cfg = cfg.to_str().unwrap();
    run_ok(&["toygen", "--config", cfg, &out_arg(d, "data")]);
    run_ok(&["train", "--config", cfg, &out_arg(d, "train"), "diffusion.epochs=1"]);
    for sub in ["a", "b"] {
        run_ok(&["sample", "--config", cfg, &out_arg(d, sub), "sampling.limit=5", "sampling.batch_size=3"]);
    }
    let list = |sub: &str| {
        let mut v: Vec<_> = std::fs::read_dir(d.join(sub).join("samples")).unwrap().map(|e| e.unwrap().path()).collect();
        v.sort();
        v
    };
    let (a, b) = (list("a"), list("b"));
    assert_eq!(a.len(), 5 * 2 * 3);
    for (pa, pb) in a.iter().zip(&b) {
        assert_eq!(pa.file_name(), pb.file_name());
        assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap(), "{}", pa.display());
    }
    assert_eq!(std::fs::read(d.join("a/manifest.jsonl")).unwrap(), std::fs::read(d.join("b/manifest.jsonl")).unwrap());
}

#[test]
fn oracle_generator_gives_zero_sae_and_equal_downstream_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = tiny_config(d);
    let cfg = cfg.to_str().unwrap();
    run_ok(&["toygen", "--config", cfg, &out_arg(d, "data")]);
    // ground-truth masks lie inside their boxes, so the real data scores SAE 0
    run_ok(&["evaluate", "--config", cfg, &out_arg(d, "eval")]);
    let report = read_json(&d.join("eval/report.json"));
    assert_eq!(report["sae_micro"], 0.0);
    let same = format!("paths.synthetic_manifest={}", d.join("data/manifest.jsonl").display());
    run_ok(&["downstream", "--config", cfg, &out_arg(d, "down"), &same]);
    let down = read_json(&d.join("down/downstream.json"));
    assert_eq!(down["regimes"][0]["report"], down["regimes"][1]["report"]);
}

#[test]
fn exit_codes_separate_bad_input_from_runtime_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = tiny_config(d);
    let cfg = cfg.to_str().unwrap();
    // unknown config field
    let o = boxforge(&["train", "--config", cfg, "diffusion.epoch=3"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("epoch"));
    // missing config file
    assert_eq!(code(&boxforge(&["train", "--config", "/nonexistent/config.json"])), 2);
    // missing manifest
    assert_eq!(code(&boxforge(&["train", "--config", cfg, &out_arg(d, "train")])), 2);
    // unknown subcommand
    assert_eq!(code(&boxforge(&["frobnicate"])), 2);
    // inconsistent schedule
    assert_eq!(code(&boxforge(&["train", "--config", cfg, "diffusion.beta_end=2.0"])), 2);

    run_ok(&["toygen", "--config", cfg, &out_arg(d, "data")]);
    run_ok(&["train", "--config", cfg, &out_arg(d, "train"), "diffusion.epochs=1"]);
    // checkpoint trained on 3 classes, annotations declaring 4
    let other = d.join("other");
    run_ok(&["toygen", "--config", cfg, &format!("paths.output_dir={}", other.display()), "toy.spec.num_defect_classes=3"]);
    let o = boxforge(&["sample", "--config", cfg, &out_arg(d, "s"), &format!("paths.manifest={}", other.join("manifest.jsonl").display())]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("classes"));
    // truncated chain
    assert_eq!(code(&boxforge(&["sample", "--config", cfg, &out_arg(d, "s"), "sampling.steps=4"])), 2);
    // corrupt checkpoint
    let bad = d.join("bad.bin");
    std::fs::write(&bad, b"not a checkpoint").unwrap();
    assert_eq!(code(&boxforge(&["sample", "--config", cfg, &out_arg(d, "s"), &format!("paths.checkpoint={}", bad.display())])), 2);
    // valid inputs, but the output directory cannot be created
    let blocker = d.join("file");
    std::fs::write(&blocker, b"x").unwrap();
    let o = boxforge(&["evaluate", "--config", cfg, &format!("paths.output_dir={}", blocker.join("sub").display())]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn maps_dump_writes_raw_grids() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let boxes = vec![BoundingBox::new(2, 1, 1, 6, 8), BoundingBox::new(3, 4, 5, 10, 11)];
    let bp = d.join("boxes.json");
    std::fs::write(&bp, serde_json::to_string(&boxes).unwrap()).unwrap();
    for (flags, everywhere) in [(vec![], false), (vec!["--class-everywhere", "--reference"], true)] {
        let prefix = d.join(format!("out/m{everywhere}"));
        let mut args = vec!["maps", "dump", "--boxes", bp.to_str().unwrap(), "--height", "12", "--width", "14", "--out", prefix.to_str().unwrap()];
        args.extend(flags);
        run_ok(&args);
        let want = compute_maps_fast(&boxes, 12, 14, MapOptions { class_everywhere: everywhere }).unwrap();
        let raw = std::fs::read(format!("{}.distance.f32", prefix.display())).unwrap();
        assert_eq!(raw.len(), 12 * 14 * 4);
        let dist: Vec<f32> = raw.chunks(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        for (a, b) in dist.iter().zip(want.distance.iter()) {
            assert_eq!(*a, *b as f32);
        }
        let class = std::fs::read(format!("{}.class.u8", prefix.display())).unwrap();
        assert_eq!(class, want.class_map.iter().copied().collect::<Vec<_>>());
        let header = read_json(Path::new(&format!("{}.json", prefix.display())));
        assert_eq!(header, json!({"height": 12, "width": 14, "d_max": 14.0}));
    }
    // a box outside the grid is a validation error naming the box
    std::fs::write(&bp, serde_json::to_string(&[BoundingBox::new(2, 1, 1, 20, 3)]).unwrap()).unwrap();
    let o = boxforge(&["maps", "dump", "--boxes", bp.to_str().unwrap(), "--height", "12", "--width", "14", "--out", d.join("x").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("box 0"), "{}", String::from_utf8_lossy(&o.stderr));
}
