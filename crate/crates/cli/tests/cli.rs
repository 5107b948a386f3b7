use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use wsfl_core::io::{read_head, write_predictions};
use wsfl_core::pipeline::{run_end_to_end, PipelineConfig};
use wsfl_core::pseudo_mask::BoxSource;
use wsfl_core::synth::{synth_generate, SynthSpec};

fn wsfl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wsfl"))
        .current_dir(dir)
        .env("WSFL_LOG", "warn")
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = wsfl(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn report(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

const TRAIN: [&str; 4] = ["--annotations", "d/train/annotations.jsonl", "--features", "d/train/features"];
const TEST: [&str; 4] = ["--annotations", "d/test/annotations.jsonl", "--features", "d/test/features"];

fn small_synth(dir: &Path) {
    ok(dir, &["--seed", "3", "synth-gen", "--out", "d", "--images", "30", "--train-images", "20"]);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(wsfl(dir, &["no-such-command"]).status.code(), Some(1));
    assert_eq!(wsfl(dir, &["eval-wsol", "--bogus"]).status.code(), Some(1));
    assert_eq!(wsfl(dir, &["--help"]).status.code(), Some(0));

    let missing = wsfl(dir, &["eval-wsol", "--predictions", "nope.jsonl", "--annotations", "nope.jsonl"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(missing.stdout.is_empty());

    fs::write(dir.join("bad.jsonl"), "{\"image_id\": \"a\", \"width\": 10}\n").unwrap();
    let invalid = wsfl(dir, &["eval-wsol", "--predictions", "bad.jsonl", "--annotations", "bad.jsonl"]);
    assert_eq!(invalid.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&invalid.stderr).contains("line 1"));

    assert_eq!(wsfl(dir, &["synth-gen", "--out", "x", "--separation", "-1"]).status.code(), Some(1));
    assert_eq!(wsfl(dir, &["--threads", "0", "synth-gen", "--out", "x"]).status.code(), Some(1));
}

#[test]
fn ground_truth_predictions_score_full_corloc() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_synth(dir);
    let gt = fs::read_to_string(dir.join("d/test/annotations.jsonl")).unwrap();
    let preds: String = gt
        .lines()
        .map(|l| {
            let v: Value = serde_json::from_str(l).unwrap();
            format!("{{\"image_id\":{},\"box\":{}}}\n", v["image_id"], v["boxes"][0])
        })
        .collect();
    fs::write(dir.join("pred.jsonl"), preds).unwrap();
    let out = ok(dir, &["eval-wsol", "--predictions", "pred.jsonl", "--annotations", "d/test/annotations.jsonl"]);
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["metrics"]["corloc"], 1.0);
    assert_eq!(doc["metrics"]["images"], 10);
    assert_eq!(doc["config"]["predictions"], "pred.jsonl");
}

#[test]
fn zero_learning_rate_keeps_the_initial_head() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_synth(dir);
    ok(dir, &[&["make-masks"][..], &TRAIN, &["--gt-boxes", "--out", "masks"]].concat());
    ok(
        dir,
        &[&["train-head"][..], &TRAIN, &["--masks", "masks", "--lr", "0", "--save-init", "init.wsfh", "--out", "head.wsfh"]]
            .concat(),
    );
    assert_eq!(fs::read(dir.join("init.wsfh")).unwrap(), fs::read(dir.join("head.wsfh")).unwrap());
    assert_eq!(read_head(&dir.join("head.wsfh")).unwrap().depth(), 16);
}

#[test]
fn cli_pipeline_matches_in_process_run() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let seed = ["--seed", "7"];
    ok(dir, &[&seed[..], &["synth-gen", "--out", "d"]].concat());
    ok(dir, &[&seed[..], &["ddt-boxes"], &TRAIN, &["--out", "pseudo.jsonl"]].concat());
    ok(dir, &[&seed[..], &["make-masks"], &TRAIN, &["--boxes", "pseudo.jsonl", "--out", "masks"]].concat());
    ok(
        dir,
        &[&seed[..], &["train-head"], &TRAIN, &["--masks", "masks", "--batch-size", "16", "--lr", "0.05", "--out", "head.wsfh"]]
            .concat(),
    );
    ok(dir, &[&seed[..], &["predict"], &TEST, &["--head", "head.wsfh", "--out", "pred.jsonl"]].concat());
    ok(
        dir,
        &[&seed[..], &["eval-wsol", "--predictions", "pred.jsonl", "--annotations", "d/test/annotations.jsonl", "--out", "r.json"]]
            .concat(),
    );

    let data = synth_generate(&SynthSpec::default()).unwrap();
    let run = run_end_to_end(&data.train, &data.test, &PipelineConfig::desk_scale(7), BoxSource::Pseudo).unwrap();
    let cli = report(&dir.join("r.json"));
    assert_eq!(cli["metrics"], serde_json::to_value(&run.metrics).unwrap());
    assert_eq!(cli["config"]["seed"], 7);

    write_predictions(&dir.join("in_process.jsonl"), &run.predictions).unwrap();
    assert_eq!(fs::read(dir.join("pred.jsonl")).unwrap(), fs::read(dir.join("in_process.jsonl")).unwrap());
    assert_eq!(
        run.training.head,
        read_head(&dir.join("head.wsfh")).unwrap(),
        "checkpoint differs from in-process head"
    );
}

#[test]
fn config_file_values_yield_to_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_synth(dir);
    ok(dir, &[&["make-masks"][..], &TRAIN, &["--gt-boxes", "--out", "masks"]].concat());
    fs::write(dir.join("run.cfg"), "# zero rate from file\nlr = 0\nepochs = 2\nseed = 5\n").unwrap();

    let train = |extra: &[&str], out: &str| {
        let args = [&["--config", "run.cfg", "train-head"][..], &TRAIN, &["--masks", "masks", "--save-init", "i.wsfh", "--out", out], extra].concat();
        ok(dir, &args);
    };
    train(&[], "from_file.wsfh");
    assert_eq!(fs::read(dir.join("from_file.wsfh")).unwrap(), fs::read(dir.join("i.wsfh")).unwrap());
    let init_seed5 = fs::read(dir.join("i.wsfh")).unwrap();

    train(&["--lr", "0.05"], "overridden.wsfh");
    assert_ne!(fs::read(dir.join("overridden.wsfh")).unwrap(), fs::read(dir.join("i.wsfh")).unwrap());

    ok(dir, &[&["--seed", "9", "--config", "run.cfg", "train-head"][..], &TRAIN, &["--masks", "masks", "--save-init", "i.wsfh", "--out", "s.wsfh"]].concat());
    assert_ne!(fs::read(dir.join("i.wsfh")).unwrap(), init_seed5);

    fs::write(dir.join("bad.cfg"), "lr 0.1\n").unwrap();
    assert_eq!(wsfl(dir, &["--config", "bad.cfg", "synth-gen", "--out", "x"]).status.code(), Some(1));
    assert_eq!(wsfl(dir, &["--config", "missing.cfg", "synth-gen", "--out", "x"]).status.code(), Some(2));
}

#[test]
fn proposals_map_and_overlays() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_synth(dir);
    fs::write(
        dir.join("props.jsonl"),
        concat!(
            "{\"image_id\":\"synth_00020\",\"box\":[0,0,224,224],\"class\":\"object\"}\n",
            "{\"image_id\":\"synth_00021\",\"box\":[0,0,2,2],\"class\":\"person\"}\n",
            "{\"image_id\":\"synth_00020\",\"box\":[0,0,1,1]}\n",
        ),
    )
    .unwrap();
    ok(dir, &[&["score-proposals", "--proposals", "props.jsonl", "--gt-masks"][..], &TEST, &["--out", "scored.jsonl"]].concat());
    let scored: Vec<Value> = fs::read_to_string(dir.join("scored.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(scored.len(), 3);
    assert_eq!(scored[0]["image_id"], "synth_00020");
    assert_eq!(scored[2]["image_id"], "synth_00020");
    assert!(scored.iter().all(|s| (0.0..=1.0).contains(&s["objectness"].as_f64().unwrap())));
    assert_eq!(scored[1]["class"], "person");
    assert_eq!(scored[1]["filtered"], false);

    fs::write(
        dir.join("dets.jsonl"),
        fs::read_to_string(dir.join("d/test/annotations.jsonl"))
            .unwrap()
            .lines()
            .map(|l| {
                let v: Value = serde_json::from_str(l).unwrap();
                format!("{{\"image_id\":{},\"class\":\"object\",\"score\":0.9,\"box\":{}}}\n", v["image_id"], v["boxes"][0])
            })
            .collect::<String>(),
    )
    .unwrap();
    ok(dir, &["eval-map", "--detections", "dets.jsonl", "--annotations", "d/test/annotations.jsonl", "--out", "map.json"]);
    let map = report(&dir.join("map.json"));
    assert_eq!(map["metrics"]["map"], 1.0);
    assert_eq!(map["config"]["ap_method"], "eleven_point");

    ok(dir, &[&["make-masks"][..], &TRAIN, &["--gt-boxes", "--out", "masks"]].concat());
    ok(dir, &[&["train-head"][..], &TRAIN, &["--masks", "masks", "--epochs", "1", "--out", "h.wsfh"]].concat());
    ok(dir, &[&["render-overlay"][..], &TEST, &["--head", "h.wsfh", "--out", "ov"]].concat());
    assert_eq!(fs::read_dir(dir.join("ov")).unwrap().count(), 10);
    let png = fs::read(dir.join("ov/synth_00020.png")).unwrap();
    assert_eq!(&png[1..4], b"PNG");
}
