use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use srl_core::config::{Algo, Precision, TrainConfig};
use srl_core::envs::{make_env, Env};
use srl_core::eval::{
    asl_sweep, evaluate_fixed, fas_with_axis, mean_and_se, online_planning_eval, pearson, random_policy_return,
    stochastic_timestep_eval, EvalMode, FasAxis, FasReport, GroundTruthModel, ScoreCurve, TransitionModel,
    DEFAULT_ASL_GRID,
};
use srl_core::trainer::Trainer;
use srl_core::{Scalar, SrlError};

use crate::loaded::LoadedAgent;
use crate::svg::curves_svg;

/// Default parent directory for new runs.
pub const RUN_ROOT_VAR: &str = "SRL_RUN_ROOT";

/// Bad invocation or configuration; exits with code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    let config = e.chain().any(|c| {
        c.is::<ConfigError>() || matches!(c.downcast_ref::<SrlError>(), Some(SrlError::Config(_) | SrlError::UnknownKey(_)))
    });
    if config {
        2
    } else {
        3
    }
}

#[derive(Parser, Debug)]
#[command(name = "srl", version, about = "Sequence reinforcement learning: training and frequency-robustness evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train an agent into a fresh run directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint at one decision interval, or with random intervals.
    Eval(EvalArgs),
    /// Mean return across a grid of action-sequence lengths.
    Sweep(SweepArgs),
    /// Score curve plus frequency-averaged score.
    Fas(FasArgs),
    /// Online planning with a learned or exact one-step model.
    Plan(PlanArgs),
    /// FAS against stochastic-interval return for several policies.
    Compare(CompareArgs),
    /// Markdown table of FAS results grouped by policy.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum AlgoArg {
    Srl,
    Sac,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PrecisionArg {
    F32,
    F64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Sequence,
    Repeat,
}

impl From<ModeArg> for EvalMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Sequence => EvalMode::Sequence,
            ModeArg::Repeat => EvalMode::Repeat,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum AxisArg {
    Asl,
    Frequency,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// JSON config file; flags and --set are applied on top.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    algo: Option<AlgoArg>,
    #[arg(long)]
    env: Option<String>,
    /// Action-sequence length (ignored by SAC).
    #[arg(long = "J")]
    j: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    precision: Option<PrecisionArg>,
    /// Dotted-key override, e.g. `--set lr.actor=1e-4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Run directory. Defaults to `$SRL_RUN_ROOT/<algo>-<env>-J<J>-seed<seed>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace an existing non-empty run directory.
    #[arg(long)]
    force: bool,
}

/// Which checkpoint to evaluate and where.
#[derive(Args, Debug)]
pub struct Target {
    /// Checkpoint directory, or a run directory containing `checkpoint/`.
    checkpoint: PathBuf,
    /// Environment name; defaults to the one the agent was trained on.
    #[arg(long)]
    env: Option<String>,
    /// Defaults to `sequence` for SRL and `repeat` for SAC.
    #[arg(long)]
    mode: Option<ModeArg>,
    /// Evaluation seed; defaults to the training seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 10)]
    episodes: usize,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    target: Target,
    /// Decision interval; defaults to the trained J.
    #[arg(long)]
    interval: Option<usize>,
    /// Draw each interval uniformly from `LO,HI` instead.
    #[arg(long, value_name = "LO,HI", value_delimiter = ',')]
    stochastic: Option<Vec<usize>>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    target: Target,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_ASL_GRID.to_vec())]
    grid: Vec<usize>,
    /// Output directory; defaults to the run directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write `curve.svg`.
    #[arg(long)]
    svg: bool,
}

#[derive(Args, Debug)]
pub struct FasArgs {
    #[command(flatten)]
    sweep: SweepArgs,
    /// Lower anchor; defaults to the random-policy return.
    #[arg(long, allow_hyphen_values = true)]
    min: Option<f64>,
    /// Upper anchor; defaults to this curve's best point. Pass the best
    /// score across all compared agents to make FAS values comparable.
    #[arg(long, allow_hyphen_values = true)]
    max: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    random_episodes: usize,
    #[arg(long, value_enum, default_value_t = AxisArg::Asl)]
    axis: AxisArg,
}

#[derive(Args, Debug)]
pub struct PlanArgs {
    #[command(flatten)]
    target: Target,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_ASL_GRID.to_vec())]
    grid: Vec<usize>,
    /// Plan with the environment's exact dynamics instead of the learned model.
    #[arg(long)]
    ground_truth: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Run or checkpoint directories, one policy each.
    runs: Vec<PathBuf>,
    /// Extra precomputed rows from a CSV with columns `label,fas,stochastic_return`.
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    mode: Option<ModeArg>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    episodes: usize,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_ASL_GRID.to_vec())]
    grid: Vec<usize>,
    #[arg(long, value_name = "LO,HI", value_delimiter = ',', default_values_t = vec![1, 16])]
    stochastic_range: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    stochastic_episodes: usize,
    #[arg(long, default_value_t = 1000)]
    random_episodes: usize,
    #[arg(long, allow_hyphen_values = true)]
    min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    max: Option<f64>,
    /// Writes `compare.csv`, `compare.md` and `compare.json` here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// `fas.json` files or directories containing one.
    inputs: Vec<PathBuf>,
    /// Write the table to this file as well as stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a).map(|_| ()),
        Command::Fas(a) => fas(a),
        Command::Plan(a) => plan(a),
        Command::Compare(a) => compare(a),
        Command::Report(a) => report(a),
    }
}

fn run_root() -> PathBuf {
    std::env::var_os(RUN_ROOT_VAR).map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

pub fn build_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut c = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
            TrainConfig::from_json(&text).map_err(|e| match e {
                SrlError::UnknownKey(_) => anyhow::Error::from(e),
                other => config_error(format!("{}: {other}", path.display())),
            })?
        }
        None => TrainConfig::default(),
    };
    if let Some(algo) = a.algo {
        c.algo = match algo {
            AlgoArg::Srl => Algo::Srl,
            AlgoArg::Sac => Algo::Sac,
        };
        if c.algo == Algo::Sac {
            c.model_updates = false;
        }
    }
    if let Some(env) = &a.env {
        c.env = env.clone();
    }
    if let Some(j) = a.j {
        c.j = j;
    }
    if let Some(seed) = a.seed {
        c.seed = seed;
    }
    if let Some(p) = a.precision {
        c.precision = match p {
            PrecisionArg::F32 => Precision::F32,
            PrecisionArg::F64 => Precision::F64,
        };
    }
    c.apply_overrides(&a.set)?;
    c.validate()?;
    Ok(c)
}

fn train(a: TrainArgs) -> Result<()> {
    let config = build_config(&a)?;
    if config.algo == Algo::Sac && a.j.is_some_and(|j| j != 1) {
        log::warn!("--J is ignored for SAC");
    }
    let dir = a.out.clone().unwrap_or_else(|| {
        let algo = match config.algo {
            Algo::Srl => "srl",
            Algo::Sac => "sac",
        };
        let env = config.env.replace([':', '/'], "_");
        run_root().join(format!("{algo}-{env}-J{}-seed{}", config.effective_j(), config.seed))
    });
    if dir.exists() && fs::read_dir(&dir)?.next().is_some() {
        if !a.force {
            return Err(config_error(format!(
                "run directory {} is not empty (use --force to replace it)",
                dir.display()
            )));
        }
        fs::remove_dir_all(&dir)?;
    }
    let env = make_env(&config.env)?;
    let final_return = match config.precision {
        Precision::F32 => train_in::<f32>(&config, env, &dir)?,
        Precision::F64 => train_in::<f64>(&config, env, &dir)?,
    };
    if let Some(r) = final_return {
        log::info!("final evaluation return {r:.3}");
    }
    println!("{}", dir.display());
    Ok(())
}

fn train_in<T: Scalar>(config: &TrainConfig, env: Box<dyn Env>, dir: &Path) -> Result<Option<f64>> {
    let outcome = Trainer::<T>::new(config, env)?
        .with_run_dir(dir)?
        .run()
        .with_context(|| format!("training into {}", dir.display()))?;
    Ok(outcome.metrics.last().map(|r| r.eval_return))
}

/// The environment to evaluate `agent` on, checked against its dimensions.
fn open_env(agent: &LoadedAgent, name: Option<&str>) -> Result<Box<dyn Env>> {
    let name = name.unwrap_or(&agent.config().env);
    let env = make_env(name)?;
    let (want, got) = (agent.spec(), env.spec());
    if want.state_dim != got.state_dim || want.action_dim != got.action_dim {
        return Err(config_error(format!(
            "environment `{name}` has state/action dims {}/{}, the agent expects {}/{}",
            got.state_dim, got.action_dim, want.state_dim, want.action_dim
        )));
    }
    Ok(env)
}

fn check_grid(grid: &[usize]) -> Result<()> {
    if grid.is_empty() || grid[0] == 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(config_error("--grid must be positive and strictly increasing"));
    }
    Ok(())
}

fn check_range(r: &[usize]) -> Result<(usize, usize)> {
    match r {
        &[lo, hi] if lo >= 1 && lo <= hi => Ok((lo, hi)),
        _ => Err(config_error(format!("interval range must be LO,HI with 1 <= LO <= HI, got {r:?}"))),
    }
}

/// Directory that holds `checkpoint/`, used for default outputs.
fn run_dir_of(path: &Path) -> PathBuf {
    if path.join("agent.json").is_file() {
        path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)
    } else {
        path.to_path_buf()
    }
}

struct Resolved {
    agent: LoadedAgent,
    env: Box<dyn Env>,
    mode: EvalMode,
    seed: u64,
}

fn resolve(t: &Target) -> Result<Resolved> {
    let agent = LoadedAgent::load(&t.checkpoint)?;
    let env = open_env(&agent, t.env.as_deref())?;
    let mode = t.mode.map_or_else(|| agent.default_mode(), EvalMode::from);
    let seed = t.seed.unwrap_or(agent.config().seed);
    Ok(Resolved { agent, env, mode, seed })
}

#[derive(Serialize)]
struct EvalOutput {
    label: String,
    mode: EvalMode,
    episodes: usize,
    interval: Option<usize>,
    interval_range: Option<(usize, usize)>,
    mean_return: f64,
    std_error: f64,
    returns: Vec<f64>,
}

fn eval(a: EvalArgs) -> Result<()> {
    let mut r = resolve(&a.target)?;
    let ctrl = r.agent.controller();
    let out = match &a.stochastic {
        Some(range) => {
            let range = check_range(range)?;
            let s = stochastic_timestep_eval(ctrl, r.env.as_mut(), a.target.episodes, range, r.mode, r.seed)?;
            EvalOutput {
                label: r.agent.label(),
                mode: r.mode,
                episodes: a.target.episodes,
                interval: None,
                interval_range: Some(range),
                mean_return: s.mean_return,
                std_error: s.std_error,
                returns: s.returns,
            }
        }
        None => {
            let k = a.interval.unwrap_or_else(|| r.agent.config().effective_j());
            if k == 0 {
                return Err(config_error("--interval must be positive"));
            }
            let s = evaluate_fixed(ctrl, r.env.as_mut(), k, r.mode, a.target.episodes, r.seed)?;
            EvalOutput {
                label: r.agent.label(),
                mode: r.mode,
                episodes: a.target.episodes,
                interval: Some(k),
                interval_range: None,
                mean_return: s.mean,
                std_error: s.std_error,
                returns: s.returns,
            }
        }
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

struct SweepResult {
    resolved: Resolved,
    curve: ScoreCurve,
    out: PathBuf,
}

fn sweep(a: SweepArgs) -> Result<SweepResult> {
    check_grid(&a.grid)?;
    let mut r = resolve(&a.target)?;
    let curve = asl_sweep(r.agent.controller(), r.env.as_mut(), &a.grid, a.target.episodes, r.mode, r.seed)?;
    let out = a.out.unwrap_or_else(|| run_dir_of(&a.target.checkpoint));
    fs::create_dir_all(&out)?;
    fs::write(out.join("curve.csv"), curve.to_csv())?;
    fs::write(out.join("curve.json"), serde_json::to_string_pretty(&curve)?)?;
    if a.svg {
        let svg = curves_svg(&format!("{} on {}", r.agent.label(), r.agent.config().env), &[(r.agent.label(), &curve)]);
        fs::write(out.join("curve.svg"), svg)?;
    }
    print!("{}", curve.to_csv());
    Ok(SweepResult { resolved: r, curve, out })
}

/// Contents of `fas.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FasOutput {
    pub label: String,
    pub env: String,
    pub mode: EvalMode,
    pub seed: u64,
    #[serde(flatten)]
    pub report: FasReport,
}

fn fas(a: FasArgs) -> Result<()> {
    let (min, max, axis, random_episodes) = (a.min, a.max, a.axis, a.random_episodes);
    let SweepResult {
        mut resolved,
        curve,
        out,
    } = sweep(a.sweep)?;
    let min = match min {
        Some(m) => m,
        None => random_policy_return(resolved.env.as_mut(), random_episodes, resolved.seed)?.mean,
    };
    let max = max.unwrap_or_else(|| {
        log::warn!("no --max given; anchoring at this curve's best point");
        curve.best()
    });
    let axis = match axis {
        AxisArg::Asl => FasAxis::Asl,
        AxisArg::Frequency => FasAxis::Frequency,
    };
    let report = fas_with_axis(&curve, min, max, axis)?;
    let output = FasOutput {
        label: resolved.agent.label(),
        env: resolved.agent.config().env.clone(),
        mode: resolved.mode,
        seed: resolved.seed,
        report,
    };
    fs::write(out.join("fas.json"), serde_json::to_string_pretty(&output)?)?;
    println!("FAS {:.4} (min {min:.3}, max {max:.3})", output.report.fas);
    Ok(())
}

fn plan(a: PlanArgs) -> Result<()> {
    check_grid(&a.grid)?;
    let mut r = resolve(&a.target)?;
    let exact;
    let model: &dyn TransitionModel = if a.ground_truth {
        let cf = r
            .env
            .closed_form()
            .ok_or_else(|| config_error("this environment has no exact dynamics for --ground-truth"))?;
        exact = GroundTruthModel(cf);
        &exact
    } else {
        r.agent
            .model()
            .ok_or_else(|| config_error("checkpoint has no state-space dynamics model; use --ground-truth"))?
    };
    let pc = online_planning_eval(r.agent.controller(), model, r.env.as_mut(), &a.grid, a.target.episodes, r.seed)?;
    let mut csv = String::from("asl,mean_return,std_error,episodes,decisions,model_calls\n");
    for i in 0..pc.curve.len() {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            pc.curve.asl_grid[i],
            pc.curve.mean_returns[i],
            pc.curve.std_errors[i],
            pc.curve.episodes_per_point,
            pc.decisions[i],
            pc.model_calls[i]
        ));
    }
    let out = a.out.unwrap_or_else(|| run_dir_of(&a.target.checkpoint));
    fs::create_dir_all(&out)?;
    fs::write(out.join("planning.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub label: String,
    pub source: String,
    pub fas: f64,
    pub stochastic_return: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompareOutput {
    pub rows: Vec<CompareRow>,
    pub min_score: Option<f64>,
    pub max_score: Option<f64>,
    pub pearson_r: Option<f64>,
}

fn read_pairs(path: &Path) -> Result<Vec<CompareRow>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("label")) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [label, fas, ret] = fields[..] else {
            bail!("{}:{}: expected label,fas,stochastic_return", path.display(), i + 1);
        };
        let num = |s: &str| s.parse::<f64>().with_context(|| format!("{}:{}: `{s}` is not a number", path.display(), i + 1));
        rows.push(CompareRow {
            label: label.to_string(),
            source: path.display().to_string(),
            fas: num(fas)?,
            stochastic_return: num(ret)?,
        });
    }
    Ok(rows)
}

fn compare(a: CompareArgs) -> Result<()> {
    if a.runs.is_empty() && a.pairs.is_none() {
        return Err(config_error("compare needs run directories or --pairs"));
    }
    check_grid(&a.grid)?;
    let range = check_range(&a.stochastic_range)?;
    let mut rows = Vec::new();
    let (mut min_score, mut max_score) = (None, None);
    if !a.runs.is_empty() {
        let agents = a.runs.iter().map(|p| LoadedAgent::load(p)).collect::<Result<Vec<_>>>()?;
        let env_name = match &a.env {
            Some(e) => e.clone(),
            None => {
                let first = agents[0].config().env.clone();
                if agents.iter().any(|g| g.config().env != first) {
                    return Err(config_error("runs were trained on different environments; pass --env"));
                }
                first
            }
        };
        let mut evaluated = Vec::with_capacity(agents.len());
        for agent in &agents {
            let mut env = open_env(agent, Some(&env_name))?;
            let mode = a.mode.map_or_else(|| agent.default_mode(), EvalMode::from);
            let ctrl = agent.controller();
            let curve = asl_sweep(ctrl, env.as_mut(), &a.grid, a.episodes, mode, a.seed)?;
            let stoch = stochastic_timestep_eval(ctrl, env.as_mut(), a.stochastic_episodes, range, mode, a.seed)?;
            evaluated.push((curve, stoch.mean_return));
        }
        let min = match a.min {
            Some(m) => m,
            None => random_policy_return(make_env(&env_name)?.as_mut(), a.random_episodes, a.seed)?.mean,
        };
        let max = a
            .max
            .unwrap_or_else(|| evaluated.iter().map(|(c, _)| c.best()).fold(f64::NEG_INFINITY, f64::max));
        for ((agent, path), (curve, ret)) in agents.iter().zip(&a.runs).zip(&evaluated) {
            rows.push(CompareRow {
                label: format!("{} seed {}", agent.label(), agent.config().seed),
                source: path.display().to_string(),
                fas: fas_with_axis(curve, min, max, FasAxis::Asl)?.fas,
                stochastic_return: *ret,
            });
        }
        (min_score, max_score) = (Some(min), Some(max));
    }
    if let Some(p) = &a.pairs {
        rows.extend(read_pairs(p)?);
    }

    let fas: Vec<f64> = rows.iter().map(|r| r.fas).collect();
    let ret: Vec<f64> = rows.iter().map(|r| r.stochastic_return).collect();
    let (pearson_r, failure) = if rows.len() < 3 {
        eprintln!("notice: {} policies; at least 3 are needed for a correlation, skipping r", rows.len());
        (None, None)
    } else {
        match pearson(&fas, &ret) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e)),
        }
    };
    let output = CompareOutput {
        rows,
        min_score,
        max_score,
        pearson_r,
    };
    let md = compare_markdown(&output);
    print!("{md}");
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir)?;
        let mut csv = String::from("label,source,fas,stochastic_return\n");
        for r in &output.rows {
            csv.push_str(&format!("{},{},{},{}\n", r.label, r.source, r.fas, r.stochastic_return));
        }
        fs::write(dir.join("compare.csv"), csv)?;
        fs::write(dir.join("compare.md"), &md)?;
        fs::write(dir.join("compare.json"), serde_json::to_string_pretty(&output)?)?;
    }
    match failure {
        Some(e) => Err(anyhow!(e).context("correlation between FAS and stochastic return")),
        None => Ok(()),
    }
}

fn compare_markdown(o: &CompareOutput) -> String {
    let mut md = String::from("| policy | FAS | stochastic return | source |\n|---|---:|---:|---|\n");
    for r in &o.rows {
        md.push_str(&format!("| {} | {:.4} | {:.2} | {} |\n", r.label, r.fas, r.stochastic_return, r.source));
    }
    match o.pearson_r {
        Some(r) => md.push_str(&format!("\nPearson r = {r:.6}\n")),
        None => md.push_str("\nPearson r not computed\n"),
    }
    md
}

fn report(a: ReportArgs) -> Result<()> {
    if a.inputs.is_empty() {
        return Err(config_error("report needs at least one fas.json"));
    }
    let mut groups: Vec<(String, String, Vec<f64>)> = Vec::new();
    for input in &a.inputs {
        let path = if input.is_dir() { input.join("fas.json") } else { input.clone() };
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let f: FasOutput = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        match groups.iter_mut().find(|g| g.0 == f.label && g.1 == f.env) {
            Some(g) => g.2.push(f.report.fas),
            None => groups.push((f.label, f.env, vec![f.report.fas])),
        }
    }
    let mut md = String::from("| env | policy | runs | mean FAS | std. error |\n|---|---|---:|---:|---:|\n");
    for (label, env, xs) in &groups {
        let (m, se) = mean_and_se(xs);
        md.push_str(&format!("| {env} | {label} | {} | {m:.4} | {se:.4} |\n", xs.len()));
    }
    print!("{md}");
    if let Some(out) = &a.out {
        fs::write(out, &md)?;
    }
    Ok(())
}
