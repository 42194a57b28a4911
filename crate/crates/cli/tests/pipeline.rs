use std::fs;
use std::path::{Path, PathBuf};

use tempseg::formats::save_dataset;
use tempseg::pipeline::{run_pipeline, PipelineConfig};
use tempseg_core::data::{generate_synthetic, SynthConfig};
use tempseg_core::globalassign::Strategy;

fn dataset(dir: &Path, seed: u64) -> PathBuf {
    let ds = generate_synthetic(&SynthConfig { videos: 5, dim: 8, seed, ..SynthConfig::default() }).unwrap();
    save_dataset(&dir.join("data"), &ds.videos).unwrap()
}

fn config(manifest: &Path, out: PathBuf) -> PipelineConfig {
    let mut cfg = PipelineConfig::new(manifest, out);
    cfg.embed.arch.hidden_dim = 8;
    cfg.embed.arch.layers_per_stage = 3;
    cfg.embed.epochs = 8;
    cfg.seed = 3;
    cfg
}

fn files(dir: &Path) -> Vec<Vec<u8>> {
    ["model.bin", "clusters.txt", "assignment.txt", "segments.txt", "report.txt"]
        .iter()
        .map(|n| fs::read(dir.join(n)).unwrap())
        .collect()
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 1);
    let one = config(&manifest, dir.path().join("one"));
    let mut four = config(&manifest, dir.path().join("four"));
    four.threads = 4;
    run_pipeline(&one).unwrap();
    run_pipeline(&four).unwrap();
    assert_eq!(files(&one.out_dir), files(&four.out_dir));
}

#[test]
fn resume_reuses_saved_stages() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 2);
    let mut cfg = config(&manifest, dir.path().join("out"));
    let first = run_pipeline(&cfg).unwrap();
    assert!(first.resumed.is_empty());
    let before = files(&cfg.out_dir);

    cfg.resume = true;
    let again = run_pipeline(&cfg).unwrap();
    assert_eq!(again.resumed, ["train", "cluster", "assign"]);
    assert_eq!(files(&cfg.out_dir), before);

    // a different K keeps the model but redoes everything after it
    cfg.clusters = 3;
    let changed = run_pipeline(&cfg).unwrap();
    assert_eq!(changed.resumed, ["train"]);
    assert_eq!(changed.assignment.clusters(), 3);

    cfg.strategy = Strategy::Naive;
    let naive = run_pipeline(&cfg).unwrap();
    assert_eq!(naive.resumed, ["train", "cluster"]);
    assert!(fs::read_to_string(cfg.out_dir.join("assignment.txt")).unwrap().starts_with("strategy=naive"));
}

#[test]
fn plots_are_written_per_video() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 4);
    let mut cfg = config(&manifest, dir.path().join("out"));
    cfg.plots = true;
    run_pipeline(&cfg).unwrap();
    for n in 0..5 {
        let svg = fs::read_to_string(cfg.out_dir.join(format!("segmentation_video_{n:03}.svg"))).unwrap();
        assert!(svg.contains("<g class=\"row\""));
    }
}

#[test]
fn multi_hub_assignment_costs_no_more_than_naive() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 5);
    let hub = run_pipeline(&config(&manifest, dir.path().join("hub"))).unwrap();
    let mut cfg = config(&manifest, dir.path().join("naive"));
    cfg.strategy = Strategy::Naive;
    let naive = run_pipeline(&cfg).unwrap();
    assert!(hub.assignment.cost <= naive.assignment.cost + 1e-9);
}

#[test]
fn failures_name_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 6);
    let mut cfg = config(&manifest, dir.path().join("out"));
    cfg.clusters = 500;
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(err.to_string().starts_with("cluster"), "{err}");
    assert_eq!(err.exit_code(), 3);
}
