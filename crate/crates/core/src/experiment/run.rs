use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::config::{Method, RunConfig};
use super::stream::StreamTask;
use crate::baselines::{learn_baseline_stream, PolicyStore, StrategyConfig, StrategyKind};
use crate::error::{Error, Result};
use crate::exec;
use crate::gcrl::{train_hbc, HierPolicy, TaskData};
use crate::metrics::{mean_std, policy_success, to_csv, EvalReport, SuccessMatrix};
use crate::rng::derive_path;
use crate::subspace::{learn_stream, SubspaceModel};

pub const MANIFEST_VERSION: u32 = 1;

/// Seed label of evaluation start states; task `k` uses the same starts in
/// every row of the success matrix.
const EVAL_LABEL: u64 = 0xE7A1;

pub fn eval_seed(seed: u64, task: usize) -> u64 {
    derive_path(seed, &[EVAL_LABEL, task as u64])
}

/// What a run keeps for later inspection.
#[derive(Debug, Clone, PartialEq)]
pub enum Artifact {
    Model(SubspaceModel),
    Store(PolicyStore),
}

impl Artifact {
    pub fn file_name(&self) -> &'static str {
        match self {
            Artifact::Model(_) => "model.json",
            Artifact::Store(_) => "store.json",
        }
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(self.file_name());
        match self {
            Artifact::Model(m) => m.save(&path)?,
            Artifact::Store(s) => {
                let text = serde_json::to_string(s)?;
                fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            }
        }
        Ok(path)
    }

    /// Reads a subspace model or a policy store, whichever the file holds.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: Value = serde_json::from_str(&text)?;
        if value.get("subspaces").is_some() {
            let m: SubspaceModel = serde_json::from_value(value)?;
            m.validate().map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            Ok(Artifact::Model(m))
        } else {
            Ok(Artifact::Store(serde_json::from_value(value)?))
        }
    }
}

/// One seed of one run.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub report: EvalReport,
    pub artifact: Artifact,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: RunConfig,
    pub runs: Vec<SeedRun>,
}

impl RunOutput {
    pub fn reports(&self) -> Vec<EvalReport> {
        self.runs.iter().map(|r| r.report.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub code_version: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub config: RunConfig,
}

impl Manifest {
    pub fn new(config: &RunConfig) -> Self {
        Manifest {
            format_version: MANIFEST_VERSION,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config.hash(),
            seeds: config.seeds.clone(),
            config: config.clone(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Manifest = serde_json::from_str(&text)?;
        if m.format_version != MANIFEST_VERSION {
            return Err(Error::Config(format!(
                "{}: manifest version {} (expected {MANIFEST_VERSION})",
                path.display(),
                m.format_version
            )));
        }
        if m.config.hash() != m.config_hash {
            return Err(Error::Config(format!("{}: config hash mismatch", path.display())));
        }
        Ok(m)
    }
}

/// Fills row `after` of `matrix` for tasks `0..=after`.
fn evaluate_row<F>(matrix: &mut SuccessMatrix, after: usize, tasks: &[StreamTask], n: usize, seed: u64, success: F) -> Result<()>
where
    F: Fn(usize, &StreamTask, usize, u64) -> Result<f64>,
{
    for (k, t) in tasks.iter().enumerate().take(after + 1) {
        let rate = success(k, t, n, eval_seed(seed, k))?;
        matrix.set(after, k, rate)?;
    }
    Ok(())
}

/// From-scratch hierarchical policy per task, as the FWT reference.
pub fn reference_success(tasks: &[StreamTask], cfg: &RunConfig, seed: u64) -> Result<Vec<f64>> {
    let train = cfg.train_config();
    let shapes = cfg.train.shapes();
    let out = exec::map_indices(tasks.len(), |k| -> Result<f64> {
        let policy = train_hbc(&tasks[k].data, &shapes, &train.with_seed(derive_path(seed, &[k as u64])))?;
        policy_success(&policy, &tasks[k].env, cfg.eval_episodes, eval_seed(seed, k))
    });
    out.into_iter().collect()
}

fn task_data(tasks: &[StreamTask]) -> Vec<TaskData> {
    tasks.iter().map(|t| t.data.clone()).collect()
}

/// Trains and evaluates one seed of a baseline with strategy settings `scfg`.
pub fn run_baseline_seed(
    kind: StrategyKind,
    cfg: &RunConfig,
    scfg: &StrategyConfig,
    tasks: &[StreamTask],
    seed: u64,
) -> Result<SeedRun> {
    let n = tasks.len();
    let train = cfg.train_config();
    let shapes = cfg.train.shapes();
    let mut matrix = SuccessMatrix::new(n);
    let store = learn_baseline_stream(kind, &task_data(tasks), &shapes, &train, scfg, seed, |j, store| {
        evaluate_row(&mut matrix, j, tasks, cfg.eval_episodes, seed, |k, t, n_ep, s| {
            store.success(k, &t.env, n_ep, s)
        })
        .map_err(|e| e.in_task(j, "evaluation"))
    })?;
    let single = shapes.high.param_count() + shapes.low.param_count();
    let mut report = EvalReport::new(kind.name(), &cfg.stream.name, seed, cfg.stream.labels(), matrix, store.stored_params(), single)?;
    if kind.uses_lambda() {
        report.notes.insert("lambda".into(), json!(scfg.lambda));
    }
    Ok(SeedRun {
        seed,
        report,
        artifact: Artifact::Store(store),
    })
}

/// Trains and evaluates one seed of a subspace method.
pub fn run_subspace_seed(cfg: &RunConfig, variant: crate::subspace::Variant, tasks: &[StreamTask], seed: u64) -> Result<SeedRun> {
    let n = tasks.len();
    let hcfg = cfg.hispo_config(variant);
    let mut matrix = SuccessMatrix::new(n);
    let model = learn_stream(&task_data(tasks), &hcfg, seed, |j, model| {
        let policies: Vec<HierPolicy> = (0..=j).map(|k| model.policy(k)).collect::<Result<_>>()?;
        evaluate_row(&mut matrix, j, tasks, cfg.eval_episodes, seed, |k, t, n_ep, s| {
            policy_success(&policies[k], &t.env, n_ep, s)
        })
    })?;
    let mut report = EvalReport::new(
        variant.name(),
        &cfg.stream.name,
        seed,
        cfg.stream.labels(),
        matrix,
        model.param_count(),
        model.single_policy_params(),
    )?;
    report.notes = subspace_notes(&model);
    Ok(SeedRun {
        seed,
        report,
        artifact: Artifact::Model(model),
    })
}

/// Per-role anchor counts and per-task decisions.
pub fn subspace_notes(model: &SubspaceModel) -> Map<String, Value> {
    let mut notes = Map::new();
    let anchors: Map<String, Value> = model
        .anchor_counts()
        .into_iter()
        .map(|(role, n)| (role.name().to_string(), json!(n)))
        .collect();
    notes.insert("anchors".into(), Value::Object(anchors));
    let history: Map<String, Value> = model
        .subspaces
        .iter()
        .map(|s| (s.role.name().to_string(), serde_json::to_value(&s.history).unwrap_or(Value::Null)))
        .collect();
    notes.insert("history".into(), Value::Object(history));
    notes
}

fn with_reference(mut run: SeedRun, tasks: &[StreamTask], cfg: &RunConfig) -> Result<SeedRun> {
    if cfg.fwt_reference {
        let refs = reference_success(tasks, cfg, run.seed)?;
        run.report.matrix.ref_sigma = refs.into_iter().map(Some).collect();
        let notes = std::mem::take(&mut run.report.notes);
        run.report = EvalReport::new(
            &run.report.strategy,
            &run.report.stream,
            run.report.seed,
            run.report.tasks.clone(),
            run.report.matrix.clone(),
            run.report.stored_params,
            run.report.single_params,
        )?;
        run.report.notes = notes;
    }
    Ok(run)
}

fn run_seeds(cfg: &RunConfig, tasks: &[StreamTask], scfg: &StrategyConfig) -> Result<Vec<SeedRun>> {
    let runs = exec::map_slice(&cfg.seeds, |&seed| -> Result<SeedRun> {
        let run = match cfg.method {
            Method::Baseline(kind) => run_baseline_seed(kind, cfg, scfg, tasks, seed)?,
            Method::Subspace(v) => run_subspace_seed(cfg, v, tasks, seed)?,
        };
        with_reference(run, tasks, cfg)
    });
    runs.into_iter().collect()
}

/// Runs every seed on already materialized tasks. For L2/EWC with a λ sweep,
/// all λ values run and the best mean PER is kept.
pub fn run_on_tasks(cfg: &RunConfig, tasks: &[StreamTask]) -> Result<RunOutput> {
    cfg.validate()?;
    if tasks.len() != cfg.stream.tasks.len() {
        return Err(Error::Config(format!(
            "stream has {} tasks but {} were supplied",
            cfg.stream.tasks.len(),
            tasks.len()
        )));
    }
    exec::with_threads(cfg.threads, || {
        let sweep = match cfg.method {
            Method::Baseline(k) if k.uses_lambda() && !cfg.lambda_sweep.is_empty() => cfg.lambda_sweep.clone(),
            _ => Vec::new(),
        };
        if sweep.is_empty() {
            return Ok(RunOutput {
                config: cfg.clone(),
                runs: run_seeds(cfg, tasks, &cfg.strategy)?,
            });
        }
        let results = exec::map_slice(&sweep, |&lambda| {
            let scfg = StrategyConfig {
                lambda,
                ..cfg.strategy.clone()
            };
            run_seeds(cfg, tasks, &scfg)
        });
        let mut scored = Vec::with_capacity(sweep.len());
        for (lambda, runs) in sweep.iter().zip(results) {
            let runs = runs?;
            let pers: Vec<f64> = runs.iter().map(|r| r.report.metrics.per).collect();
            scored.push((*lambda, mean_std(&pers).0, runs));
        }
        // First λ wins ties, so the choice is independent of thread timing.
        let best = scored
            .iter()
            .enumerate()
            .fold(0, |b, (i, s)| if s.1 > scored[b].1 { i } else { b });
        let table: Vec<Value> = scored.iter().map(|s| json!({"lambda": s.0, "per": s.1})).collect();
        let (_, _, mut runs) = scored.swap_remove(best);
        for r in &mut runs {
            r.report.notes.insert("lambda_sweep".into(), Value::Array(table.clone()));
        }
        Ok(RunOutput {
            config: cfg.clone(),
            runs,
        })
    })
}

/// Materializes the stream (relative dataset paths resolve against `base`)
/// and runs it.
pub fn run_experiment(cfg: &RunConfig, base: &Path) -> Result<RunOutput> {
    cfg.validate()?;
    let tasks = cfg.stream.materialize(&cfg.expert, base)?;
    run_on_tasks(cfg, &tasks)
}

/// Writes `manifest.json`, `report.csv` and one directory per seed with its
/// report and model.
pub fn write_run(out: &RunOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = Manifest::new(&out.config);
    let mpath = dir.join("manifest.json");
    fs::write(&mpath, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&mpath, e))?;
    let cpath = dir.join("report.csv");
    fs::write(&cpath, to_csv(&out.reports())).map_err(|e| Error::io(&cpath, e))?;
    for r in &out.runs {
        let sdir = dir.join(format!("seed_{}", r.seed));
        fs::create_dir_all(&sdir).map_err(|e| Error::io(&sdir, e))?;
        r.report.save_json(&sdir.join("report.json"))?;
        r.artifact.save(&sdir)?;
    }
    Ok(())
}

/// Every `seed_*/report.json` under a run directory, in seed-directory order.
pub fn load_run_reports(dir: &Path) -> Result<Vec<EvalReport>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("seed_")))
        .map(|p| p.join("report.json"))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!("{}: no seed reports found", dir.display())));
    }
    paths.iter().map(|p| EvalReport::load_json(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::StreamSpec;
    use crate::subspace::Variant;

    fn quick(method: Method) -> RunConfig {
        let mut c = RunConfig::new(method, StreamSpec::parse_compact("t", "U-N,U-IA", 6).unwrap(), vec![3]);
        c.train.steps = Some(4);
        c.train.batch_size = 16;
        c.train.high_width = 8;
        c.train.low_width = 8;
        c.subspace.samples = 4;
        c.eval_episodes = 4;
        c
    }

    #[test]
    fn every_method_produces_a_full_report() {
        for m in Method::all() {
            let out = run_experiment(&quick(m), Path::new(".")).unwrap();
            let r = &out.runs[0].report;
            assert_eq!(r.strategy, m.name());
            assert!(r.matrix.get(1, 0).is_some() && r.matrix.get(1, 1).is_some());
            assert!(r.matrix.get(0, 1).is_none());
            assert!(r.metrics.fwt.is_none());
        }
    }

    #[test]
    fn reference_gives_fwt_and_scn_matches_it() {
        let mut c = quick(Method::Baseline(StrategyKind::SCN));
        c.fwt_reference = true;
        let r = &run_experiment(&c, Path::new(".")).unwrap().runs[0].report;
        assert_eq!(r.metrics.fwt, Some(0.0));
    }

    #[test]
    fn sweep_picks_one_lambda_and_records_the_table() {
        let mut c = quick(Method::Baseline(StrategyKind::L2));
        c.lambda_sweep = vec![0.1, 10.0];
        let out = run_experiment(&c, Path::new(".")).unwrap();
        let notes = &out.runs[0].report.notes;
        assert_eq!(notes["lambda_sweep"].as_array().unwrap().len(), 2);
        assert!([0.1, 10.0].contains(&notes["lambda"].as_f64().unwrap()));
    }

    #[test]
    fn written_runs_load_back() {
        let dir = tempfile::tempdir().unwrap();
        let c = quick(Method::Subspace(Variant::HiSPO));
        let out = run_experiment(&c, Path::new(".")).unwrap();
        write_run(&out, dir.path()).unwrap();
        let reports = load_run_reports(dir.path()).unwrap();
        assert_eq!(reports, out.reports());
        let m = Manifest::load(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(m.config, c);
        assert!(matches!(Artifact::load(&dir.path().join("seed_3/model.json")).unwrap(), Artifact::Model(_)));
    }
}
