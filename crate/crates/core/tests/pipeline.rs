use std::path::Path;

use hispo::baselines::StrategyKind;
use hispo::envs::{gen_dataset, load_dataset, make_env, save_dataset, ExpertConfig, MazeLayout, TaskTransform};
use hispo::experiment::{load_run_reports, run_experiment, write_run, DataSource, Method, RunConfig, StreamSpec};
use hispo::metrics::summarize;
use hispo::subspace::Variant;

fn tiny(method: Method, stream: StreamSpec) -> RunConfig {
    let mut c = RunConfig::new(method, stream, vec![0, 1]);
    c.train.steps = Some(6);
    c.train.batch_size = 16;
    c.train.high_width = 8;
    c.train.low_width = 8;
    c.subspace.samples = 4;
    c.eval_episodes = 4;
    c.threads = Some(1);
    c
}

#[test]
fn dataset_files_feed_a_stream() {
    let dir = tempfile::tempdir().unwrap();
    let env = make_env(MazeLayout::builtin("U").unwrap(), TaskTransform::PA, 300, 0).unwrap();
    let data = gen_dataset(&env, 5, 2, &ExpertConfig::default()).unwrap();
    save_dataset(&data, &dir.path().join("u_pa.jsonl")).unwrap();
    assert_eq!(load_dataset(&dir.path().join("u_pa.jsonl")).unwrap(), data);

    let mut spec = StreamSpec::parse_compact("files", "U-N,U-PA", 5).unwrap();
    spec.tasks[1].source = DataSource::Dataset("u_pa.jsonl".into());
    let out = run_experiment(&tiny(Method::Baseline(StrategyKind::SCN), spec.clone()), dir.path()).unwrap();
    assert_eq!(out.runs.len(), 2);

    // a file holding another transform's data is refused
    spec.tasks[1].transform = TaskTransform::IO;
    assert!(run_experiment(&tiny(Method::Baseline(StrategyKind::SCN), spec), dir.path()).is_err());
}

#[test]
fn summary_matches_recomputation_from_saved_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let spec = StreamSpec::parse_compact("t", "U-N,U-IA", 5).unwrap();
    let out = run_experiment(&tiny(Method::Subspace(Variant::HiSPO), spec), Path::new(".")).unwrap();
    write_run(&out, dir.path()).unwrap();
    let reports = load_run_reports(dir.path()).unwrap();
    assert_eq!(reports.len(), 2);
    let row = &summarize(&reports)[0];

    let pers: Vec<f64> = reports
        .iter()
        .map(|r| (0..2).map(|k| r.matrix.get(1, k).unwrap()).sum::<f64>() / 2.0)
        .collect();
    let mean = (pers[0] + pers[1]) / 2.0;
    assert!((row.per.0 - mean).abs() < 1e-12);
    assert!((row.per.1 - ((pers[0] - mean).powi(2) / 2.0 + (pers[1] - mean).powi(2) / 2.0).sqrt()).abs() < 1e-12);
    for r in &reports {
        let bwt = r.matrix.get(1, 0).unwrap() - r.matrix.get(0, 0).unwrap();
        assert!((r.metrics.bwt - bwt).abs() < 1e-12);
    }
}

#[test]
fn identical_seeds_give_zero_spread() {
    let spec = StreamSpec::parse_compact("t", "U-N,U-N", 4).unwrap();
    let mut c = tiny(Method::Baseline(StrategyKind::FT1), spec);
    c.seeds = vec![5, 5];
    let out = run_experiment(&c, Path::new(".")).unwrap();
    let row = &summarize(&out.reports())[0];
    assert_eq!((row.per.1, row.bwt.1, row.mem.1), (0.0, 0.0, 0.0));
}
