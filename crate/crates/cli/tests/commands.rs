use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL_NET: &[&str] = &["--hidden", "8", "--layers", "3", "--epochs", "6"];

fn tempseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tempseg")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = tempseg(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn synth(dir: &Path) -> String {
    let data = dir.join("data");
    ok(&["synth", "--out", data.to_str().unwrap(), "--videos", "4", "--dim", "6", "--seed", "5"]);
    data.join("manifest.txt").to_str().unwrap().to_string()
}

#[test]
fn stage_by_stage_matches_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let stages = dir.path().join("stages");
    let s = stages.to_str().unwrap();
    let data = ["--manifest", manifest.as_str(), "--out", s];
    let with = |cmd: &str, extra: &[&str]| {
        let mut v = vec![cmd];
        v.extend_from_slice(&data);
        v.extend_from_slice(extra);
        ok(&v)
    };
    let train_log = with("train", &[SMALL_NET, &["--seed", "2"]].concat());
    assert!(train_log.starts_with("epoch 1 loss"));
    with("embed", &[]);
    with("cluster", &["--seed", "2"]);
    with("assign", &[]);
    with("decode", &[]);
    let report = ok(&["eval", "--manifest", &manifest, "--out", s]);
    assert!(report.contains("mof="));
    with("plot", &["--video", "video_001"]);
    for name in ["model.bin", "clusters.txt", "assignment.txt", "segments.txt", "report.txt", "embeddings/manifest.txt"] {
        assert!(stages.join(name).exists(), "{name}");
    }
    assert!(stages.join("segmentation_video_001.svg").exists());
    assert!(stages.join("similarity_video_001.svg").exists());

    let whole = dir.path().join("whole");
    let mut args = vec!["pipeline", "--manifest", manifest.as_str(), "--out", whole.to_str().unwrap(), "--seed", "2"];
    args.extend_from_slice(SMALL_NET);
    ok(&args);
    for name in ["model.bin", "clusters.txt", "assignment.txt", "segments.txt", "report.txt"] {
        assert_eq!(fs::read(stages.join(name)).unwrap(), fs::read(whole.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn command_line_overrides_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let out = dir.path().join("out");
    let o = out.to_str().unwrap();
    let mut train = vec!["train", "--manifest", manifest.as_str(), "--out", o];
    train.extend_from_slice(SMALL_NET);
    ok(&train);

    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# clustering\nk = 3\nrestarts=2\n").unwrap();
    let c = cfg.to_str().unwrap();
    let first_k = || fs::read_to_string(out.join("clusters.txt")).unwrap().split_whitespace().nth(1).unwrap().to_string();

    ok(&["cluster", "--config", c, "--manifest", &manifest, "--out", o]);
    assert_eq!(first_k(), "3");
    ok(&["cluster", "--config", c, "--manifest", &manifest, "--out", o, "--k", "2"]);
    assert_eq!(first_k(), "2");
    ok(&["cluster", "--k", "5", "--config", c, "--manifest", &manifest, "--out", o]);
    assert_eq!(first_k(), "5");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path());
    let o = dir.path().join("out");
    let o = o.to_str().unwrap();

    assert_eq!(tempseg(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(tempseg(&["cluster", "--manifest", &manifest]).status.code(), Some(2));
    assert_eq!(tempseg(&["train", "--manifest", &manifest, "--out", o, "--lr", "-1"]).status.code(), Some(2));
    assert_eq!(tempseg(&["cluster", "--manifest", &manifest, "--out", o, "--k", "0"]).status.code(), Some(2));
    assert_eq!(tempseg(&["pipeline", "--manifest", "nope.txt", "--out", o]).status.code(), Some(3));
    assert_eq!(tempseg(&["assign", "--manifest", &manifest, "--out", o]).status.code(), Some(3));

    let out = tempseg(&["train", "--manifest", &manifest, "--out", o, "--lr", "1e300", "--epochs", "3"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverged"));
}
