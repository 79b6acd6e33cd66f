use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use hispo::envs::{default_horizon, gen_dataset, make_env, save_dataset, ExpertConfig, MazeLayout, TaskTransform};
use hispo::error::{Error, Result};
use hispo::experiment::{load_run_reports, run_experiment, write_run, Artifact, DataSource, Manifest, Method, RunConfig, StreamSpec};
use hispo::metrics::{render_table, summarize, to_csv};

#[derive(Parser)]
#[command(name = "hispo", version, about = "Continual hierarchical imitation on maze streams")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate scripted-expert episodes for one task.
    GenData(GenData),
    /// Run a method over a stream for every configured seed.
    Run(RunArgs),
    /// Merge run reports into one CSV and a summary table.
    Report(ReportArgs),
    /// Summarize a saved model or policy store.
    InspectModel(InspectArgs),
}

fn parse_layout(s: &str) -> std::result::Result<String, String> {
    MazeLayout::builtin(s).map(|_| s.to_string()).map_err(|e| e.to_string())
}

fn parse_transform(s: &str) -> std::result::Result<TaskTransform, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Args)]
struct GenData {
    #[arg(long, value_parser = parse_layout)]
    layout: String,
    #[arg(long, value_parser = parse_transform)]
    transform: TaskTransform,
    #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u64).range(1..))]
    episodes: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Episode horizon; defaults to the layout's.
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run config.
    #[arg(long, conflicts_with_all = ["manifest", "stream"])]
    config: Option<PathBuf>,
    /// Rerun exactly what a previous run's manifest.json records.
    #[arg(long, conflicts_with = "stream")]
    manifest: Option<PathBuf>,
    /// Canned stream name; needs --method.
    #[arg(long, requires = "method")]
    stream: Option<String>,
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    /// Episodes per task relative to the reference count of 500.
    #[arg(long, default_value_t = 0.4)]
    episodes_scale: f64,
    /// Worker threads; 1 gives single-threaded evaluation.
    #[arg(long)]
    threads: Option<usize>,
    /// Output root; overrides CRL_OUT and the config's out_dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directories written by `run`.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Where to write the merged CSV; stdout table only when absent.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    /// A model.json or store.json file, or a seed directory holding one.
    path: PathBuf,
}

fn gen_data(a: &GenData) -> Result<()> {
    let horizon = a.horizon.unwrap_or_else(|| default_horizon(&a.layout));
    let env = make_env(MazeLayout::builtin(&a.layout)?, a.transform, horizon, a.seed)?;
    let data = gen_dataset(&env, a.episodes as usize, a.seed, &ExpertConfig::default())?;
    save_dataset(&data, &a.out)?;
    println!(
        "{} episodes, mean length {:.1}, written to {}",
        data.episodes.len(),
        data.mean_length(),
        a.out.display()
    );
    Ok(())
}

fn output_root(flag: &Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    flag.clone()
        .or_else(|| std::env::var_os("CRL_OUT").map(PathBuf::from))
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn parent_of(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn run(a: &RunArgs) -> Result<()> {
    let (mut cfg, base) = if let Some(p) = &a.manifest {
        (Manifest::load(p)?.config, parent_of(p))
    } else if let Some(p) = &a.config {
        (RunConfig::load(p)?, parent_of(p))
    } else if let (Some(s), Some(m)) = (&a.stream, a.method) {
        (RunConfig::new(m, StreamSpec::canned_scaled(s, a.episodes_scale)?, a.seeds.clone()), PathBuf::new())
    } else {
        return Err(Error::Config("give --config, --manifest or --stream with --method".into()));
    };
    // the manifest must stay valid wherever it is read from
    let base = std::path::absolute(&base).map_err(|e| Error::io(&base, e))?;
    for t in &mut cfg.stream.tasks {
        if let DataSource::Dataset(p) = &mut t.source {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
    if a.threads.is_some() {
        cfg.threads = a.threads;
    }
    let dir = output_root(&a.out, &cfg).join(cfg.run_name());
    let out = run_experiment(&cfg, &base)?;
    write_run(&out, &dir)?;
    print!("{}", render_table(&summarize(&out.reports())));
    println!("run written to {}", dir.display());
    Ok(())
}

fn report(a: &ReportArgs) -> Result<()> {
    let mut reports = Vec::new();
    for dir in &a.runs {
        reports.extend(load_run_reports(dir)?);
    }
    if let Some(p) = &a.csv {
        std::fs::write(p, to_csv(&reports)).map_err(|e| Error::io(p, e))?;
    }
    print!("{}", render_table(&summarize(&reports)));
    Ok(())
}

fn inspect(a: &InspectArgs) -> Result<()> {
    let path = if a.path.is_dir() {
        ["model.json", "store.json"]
            .iter()
            .map(|f| a.path.join(f))
            .find(|p| p.is_file())
            .ok_or_else(|| Error::Config(format!("{}: no model.json or store.json", a.path.display())))?
    } else {
        a.path.clone()
    };
    match Artifact::load(&path)? {
        Artifact::Model(m) => {
            println!(
                "{} model over {} tasks, way-step {}, {} parameters ({} per single policy)",
                m.variant,
                m.n_tasks,
                m.waystep,
                m.param_count(),
                m.single_policy_params()
            );
            for s in &m.subspaces {
                println!("{} subspace: {} anchors", s.role.name(), s.space.n_anchors());
                for r in &s.history {
                    let loss = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.5}"));
                    let pac = r.pac_fraction.map_or(String::new(), |f| format!(" pac {f:.3}"));
                    println!(
                        "  task {}: {:?}, L_prev {} L_curr {}{pac}, anchors {}, params {}",
                        r.task,
                        r.outcome,
                        loss(r.l_prev),
                        loss(r.l_curr),
                        r.n_anchors,
                        r.param_count
                    );
                }
            }
        }
        Artifact::Store(s) => {
            println!("policy store with {} entries, {} parameters", s.entries(), s.stored_params());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            eprint!("{e}");
            eprintln!("\n{}", Cli::command().render_usage());
            return ExitCode::from(2);
        }
    };
    let res = match &cli.cmd {
        Cmd::GenData(a) => gen_data(a),
        Cmd::Run(a) => run(a),
        Cmd::Report(a) => report(a),
        Cmd::InspectModel(a) => inspect(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
