use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cdasim::analysis::{
    analyze_run, probe_policies, read_reference_returns, read_states, write_probe_csv, write_report, AnalysisError,
    AnalyzeOptions, Partitioning, PolicyGroup, ProbeReport, DEFAULT_IMBALANCE_THRESHOLD,
};
use cdasim::harness::{
    checkpoint_file_name, execute, load_run_manifest, write_run, ExperimentConfig, Group, HarnessError, Mode,
    RunKind, RunManifest, MANIFEST_FILE,
};
use cdasim::rl::load_checkpoint;

#[derive(Parser)]
#[command(name = "cdasim", version, about = "Continuous double auction market simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train RL agents from scratch and write their checkpoints.
    Pretrain(RunArgs),
    /// Run an experiment and write its logs.
    Simulate(RunArgs),
    /// Compute stylized facts, PnL decomposition and price impact for a run.
    Analyze(AnalyzeArgs),
    /// Evaluate market-maker policies on the states logged by a run.
    Probe(ProbeArgs),
    /// Re-run a finished run from its manifest and compare the outputs.
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupArg {
    #[value(alias = "training", alias = "continual", alias = "a")]
    Train,
    #[value(alias = "testing", alias = "b")]
    Test,
    #[value(alias = "c")]
    Untrained,
}

impl From<GroupArg> for Group {
    fn from(g: GroupArg) -> Self {
        match g {
            GroupArg::Train => Group::ContinualTraining,
            GroupArg::Test => Group::Testing,
            GroupArg::Untrained => Group::Untrained,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Preset name or path to a TOML config.
    #[arg(long)]
    config: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of steps (pretraining steps for `pretrain`).
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    group: Option<GroupArg>,
    /// Checkpoint directory, or a run directory containing `checkpoints/`.
    #[arg(long)]
    checkpoints: Option<PathBuf>,
    /// Replace an existing output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Run directory written by `simulate` or `pretrain`.
    #[arg(long)]
    run: PathBuf,
    /// Defaults to `<run>/analysis`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reference returns for the QQ comparison, one float per line.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Sampling intervals for the kurtosis table, e.g. `1,10,30`.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<usize>>,
    /// Steps after each flash event in the impact curve.
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct ProbeArgs {
    /// Run directory with a `states.csv`.
    #[arg(long)]
    run: PathBuf,
    /// Policy group as LABEL=DIR; repeatable. Defaults to the run's loaded and final checkpoints.
    #[arg(long = "policies", value_parser = parse_group)]
    policies: Vec<(String, PathBuf)>,
    #[arg(long, default_value_t = DEFAULT_IMBALANCE_THRESHOLD)]
    threshold: f64,
    /// Partition by informed-schedule phase instead of imbalance.
    #[arg(long)]
    by_phase: bool,
    /// Defaults to `<run>/probe`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

fn parse_group(s: &str) -> Result<(String, PathBuf), String> {
    let (label, dir) = s.split_once('=').ok_or_else(|| format!("expected LABEL=DIR, got {s:?}"))?;
    if label.is_empty() || dir.is_empty() {
        return Err(format!("expected LABEL=DIR, got {s:?}"));
    }
    Ok((label.to_string(), PathBuf::from(dir)))
}

/// Exit 1: bad invocation or config. Exit 2: failure while running.
enum Failure {
    Config(String),
    Runtime(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::ConfigInvalid(_) | HarnessError::OutputExists(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<AnalysisError> for Failure {
    fn from(e: AnalysisError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn log(event: &str, fields: &[(&str, String)]) {
    let mut line = format!("cdasim event={event}");
    for (k, v) in fields {
        if v.contains(char::is_whitespace) {
            line.push_str(&format!(" {k}={v:?}"));
        } else {
            line.push_str(&format!(" {k}={v}"));
        }
    }
    eprintln!("{line}");
}

/// Create `dir`, refusing to reuse a non-empty one unless `force` is set.
/// Forced reuse only deletes directories that hold earlier outputs.
fn prepare_out(dir: &Path, force: bool) -> Result<(), Failure> {
    if dir.exists() {
        let empty = fs::read_dir(dir)?.next().is_none();
        if !empty {
            if !force {
                return Err(Failure::Config(format!(
                    "output directory {} already exists; pass --force to replace it",
                    dir.display()
                )));
            }
            let ours = [MANIFEST_FILE, "report.json", "probe.json"].iter().any(|f| dir.join(f).exists());
            if !ours {
                return Err(Failure::Config(format!(
                    "refusing to replace {}: it does not look like a cdasim output directory",
                    dir.display()
                )));
            }
            fs::remove_dir_all(dir)?;
        }
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

fn resolve_checkpoints(dir: PathBuf) -> PathBuf {
    let nested = dir.join("checkpoints");
    if nested.is_dir() && !dir.join(checkpoint_file_name("mm", 0)).exists() && !dir.join(checkpoint_file_name("lt", 0)).exists() {
        nested
    } else {
        dir
    }
}

fn run_command(args: RunArgs, kind: RunKind) -> Result<(), Failure> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(steps) = args.steps {
        match kind {
            RunKind::Pretrain => config.pretrain_steps = steps,
            RunKind::Simulate => config.n_steps = steps,
        }
    }
    if let Some(g) = args.group {
        config.group = g.into();
        config.training = None;
        if !config.group.loads_checkpoints() {
            config.checkpoints = None;
        }
    }
    if let Some(dir) = args.checkpoints {
        config.checkpoints = Some(resolve_checkpoints(dir));
    }
    if kind == RunKind::Simulate {
        config.validate()?;
    }
    prepare_out(&args.out, args.force)?;
    let label = match kind {
        RunKind::Pretrain => "pretrain",
        RunKind::Simulate => "simulate",
    };
    let total = match kind {
        RunKind::Pretrain => config.pretrain_steps,
        RunKind::Simulate => config.n_steps,
    };
    log(
        "start",
        &[
            ("command", label.into()),
            ("config", config.name.clone()),
            ("seed", config.seed.to_string()),
            ("steps", total.to_string()),
            ("group", config.group.label().into()),
        ],
    );
    let started = Instant::now();
    let tick = (total / 10).max(1);
    let out = execute(&config, kind, &mut |done, total| {
        if done % tick == 0 || done == total {
            log(
                "progress",
                &[
                    ("step", done.to_string()),
                    ("of", total.to_string()),
                    ("elapsed_s", format!("{:.1}", started.elapsed().as_secs_f64())),
                ],
            );
        }
    })?;
    let manifest = write_run(&out, &args.out)?;
    log(
        "done",
        &[
            ("trades", out.log.trades.len().to_string()),
            ("files", manifest.files.len().to_string()),
            ("out", args.out.display().to_string()),
            ("elapsed_s", format!("{:.1}", started.elapsed().as_secs_f64())),
        ],
    );
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<(), Failure> {
    let out = args.out.unwrap_or_else(|| args.run.join("analysis"));
    if !args.run.join(MANIFEST_FILE).exists() {
        return Err(Failure::Config(format!("{} is not a run directory", args.run.display())));
    }
    let reference = args.reference.as_deref().map(read_reference_returns).transpose()?;
    let opts = AnalyzeOptions {
        grid: args.grid,
        reference,
        impact_horizon: args.horizon,
    };
    log("start", &[("command", "analyze".into()), ("run", args.run.display().to_string())]);
    let (_, report) = analyze_run(&args.run, &opts)?;
    prepare_out(&out, args.force)?;
    write_report(&report, &out)?;
    let sf = &report.stylized_facts;
    let mut fields = vec![
        ("pnl_identity", report.pnl_identity_holds.to_string()),
        ("acf1", format!("{:.4}", sf.first_lag_acf().unwrap_or(f64::NAN))),
    ];
    for k in &sf.kurtosis {
        fields.push(("kurtosis", format!("dt{}:{:.3}", k.dt, k.excess_kurtosis)));
    }
    if let Some(c) = &report.impact {
        if let Some((k, v)) = c.trough {
            fields.push(("impact_trough", format!("k{k}:{v:.5}")));
        }
    }
    fields.push(("out", out.display().to_string()));
    log("done", &fields);
    Ok(())
}

fn load_group(label: &str, dir: &Path, config: &ExperimentConfig) -> Result<PolicyGroup, Failure> {
    let dir = resolve_checkpoints(dir.to_path_buf());
    let mut policies = Vec::new();
    for (k, params) in config.market_makers.iter().enumerate() {
        let path = dir.join(checkpoint_file_name("mm", k));
        let ckpt = load_checkpoint(&path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
        policies.push((ckpt.policy, *params));
    }
    Ok(PolicyGroup {
        label: label.to_string(),
        policies,
    })
}

fn run_config(manifest: &RunManifest) -> Result<ExperimentConfig, Failure> {
    toml::from_str(&manifest.config).map_err(|e| Failure::Config(format!("manifest config: {e}")))
}

fn probe(args: ProbeArgs) -> Result<(), Failure> {
    let manifest = load_run_manifest(&args.run)?;
    let config = run_config(&manifest)?;
    let states_path = args.run.join("states.csv");
    if !states_path.exists() {
        return Err(Failure::Config(format!(
            "{} has no states.csv; rerun with record.states = true",
            args.run.display()
        )));
    }
    let mut specs = args.policies;
    if specs.is_empty() {
        if let Some(dir) = &config.checkpoints {
            specs.push(("loaded".into(), dir.clone()));
        }
        specs.push(("final".into(), args.run.join("checkpoints")));
    }
    let groups = specs
        .iter()
        .map(|(label, dir)| load_group(label, dir, &config))
        .collect::<Result<Vec<_>, _>>()?;
    let partitioning = if args.by_phase {
        Partitioning::Phase
    } else {
        Partitioning::Imbalance {
            threshold: args.threshold,
        }
    };
    let states = read_states(&states_path)?;
    let report: ProbeReport = probe_policies(&states, &groups, partitioning)?;
    let out = args.out.unwrap_or_else(|| args.run.join("probe"));
    prepare_out(&out, args.force)?;
    write_probe_csv(&report, &out.join("probe.csv"))?;
    fs::write(out.join("probe.json"), serde_json::to_string_pretty(&report).map_err(|e| Failure::Runtime(e.to_string()))?)?;
    for p in &report.empty_partitions {
        log("warning", &[("no_states_in_partition", p.clone())]);
    }
    for r in report.results.iter().filter(|r| !r.is_empty()) {
        log(
            "summary",
            &[
                ("group", r.group.clone()),
                ("partition", r.partition.clone()),
                ("n", r.len().to_string()),
                ("mean_eps_s", format!("{:.5}", r.mean_eps_s.unwrap_or(f64::NAN))),
                ("mean_eps_a", format!("{:.5}", r.mean_eps_a.unwrap_or(f64::NAN))),
            ],
        );
    }
    Ok(())
}

fn replay(args: ReplayArgs) -> Result<(), Failure> {
    let original = load_run_manifest(&args.run)?;
    let config = run_config(&original)?;
    prepare_out(&args.out, args.force)?;
    log("start", &[("command", "replay".into()), ("run", args.run.display().to_string())]);
    let out = execute(&config, original.kind, &mut |_, _| {})?;
    if out.loaded_checkpoints != original.checkpoints_loaded {
        return Err(Failure::Runtime("loaded checkpoints differ from the recorded hashes".into()));
    }
    let manifest = write_run(&out, &args.out)?;
    let mut mismatched: Vec<&String> = original
        .files
        .iter()
        .filter(|(f, h)| manifest.files.get(*f) != Some(*h))
        .map(|(f, _)| f)
        .collect();
    let extra: BTreeMap<&String, &String> = manifest.files.iter().filter(|(f, _)| !original.files.contains_key(*f)).collect();
    mismatched.extend(extra.keys());
    if mismatched.is_empty() {
        log("done", &[("identical", "true".into()), ("files", manifest.files.len().to_string())]);
        Ok(())
    } else if config.mode == Mode::Realtime {
        log("done", &[("identical", "false".into()), ("note", "realtime runs are not reproducible".into())]);
        Ok(())
    } else {
        let list: Vec<String> = mismatched.iter().map(|s| s.to_string()).collect();
        Err(Failure::Runtime(format!("replay differs in {}", list.join(", "))))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Pretrain(a) => run_command(a, RunKind::Pretrain),
        Command::Simulate(a) => run_command(a, RunKind::Simulate),
        Command::Analyze(a) => analyze(a),
        Command::Probe(a) => probe(a),
        Command::Replay(a) => replay(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            log("error", &[("kind", "config".into()), ("message", m)]);
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            log("error", &[("kind", "runtime".into()), ("message", m)]);
            ExitCode::from(2)
        }
    }
}
