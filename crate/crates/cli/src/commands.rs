//! Subcommands of the `mimi` binary.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use mimi_core::envs::{EnvKind, InterfaceParams};
use mimi_core::mi_estimator::{chain_rule_check, mimi_evaluate_with, EstimatorConfig, FINAL_STATE};
use mimi_core::numerics::Rng;
use mimi_core::offline::{load_episodes, save_episodes, score_conditions_with, delta_sweep_with, EpisodeLog, Outcome};
use mimi_core::optimizer::{evaluate_interface, mimi_train_with_hook, save_run, TrainConfig};
use mimi_core::sim_user::SimUser;
use serde_json::json;

use crate::session::{default_bind, Server, SessionConfig, TICK_HZ};
use crate::BoxError;

/// Largest acceptable chain-rule gap for `oracle`.
pub const ORACLE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(name = "mimi", version, about = "Score and train human-machine interfaces by mutual information")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Commands,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Transition horizon; a comma list for `sweep`. `T` pairs each state
    /// with the episode's final state.
    #[arg(long, value_delimiter = ',', default_value = "1", value_parser = parse_delta)]
    pub delta: Vec<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Common {
    fn single_delta(&self) -> Result<usize, BoxError> {
        match self.delta.as_slice() {
            [d] => Ok(*d),
            _ => Err("this subcommand takes a single --delta value".into()),
        }
    }

    fn require_out(&self) -> Result<&Path, BoxError> {
        self.out.as_deref().ok_or_else(|| "--out is required".into())
    }
}

pub fn parse_delta(s: &str) -> Result<usize, String> {
    match s.trim() {
        "T" | "final" => Ok(FINAL_STATE),
        v => match v.parse::<usize>() {
            Ok(0) | Err(_) => Err(format!("`{v}` is not a positive integer or `T`")),
            Ok(d) => Ok(d),
        },
    }
}

fn delta_label(delta: usize) -> String {
    if delta == FINAL_STATE {
        "T".into()
    } else {
        delta.to_string()
    }
}

fn parse_env(s: &str) -> Result<EnvKind, String> {
    s.parse::<EnvKind>().map_err(|e| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Commands {
    /// Run simulated-user episodes under a fixed interface.
    Simulate(SimulateArgs),
    /// Seed-averaged MI per logged group and its rank correlation with reward.
    Score(ScoreArgs),
    /// `score` at several horizons.
    Sweep(ScoreArgs),
    /// Full training loop with a simulated user.
    Train(TrainArgs),
    /// Live training session for one WebSocket client.
    Serve(ServeArgs),
    /// Exact discrete chain-rule self-test.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_parser = parse_env)]
    pub env: EnvKind,
    /// Interface parameters, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    pub theta: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    pub episodes: usize,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub common: Common,
    /// A log file, or a directory whose `.jsonl` files are read.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub seeds: usize,
    #[arg(long, hide = true)]
    pub estimator_steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_parser = parse_env)]
    pub env: EnvKind,
    #[arg(long, default_value_t = 30)]
    pub budget: usize,
    #[arg(long, default_value_t = 10)]
    pub episodes_per_interface: usize,
    /// Random interfaces before the surrogate takes over.
    #[arg(long)]
    pub random_phase: Option<usize>,
    #[arg(long, hide = true)]
    pub estimator_steps: Option<usize>,
}

impl TrainArgs {
    fn train_config(&self) -> Result<TrainConfig, BoxError> {
        let mut config = TrainConfig::for_env(self.env, self.budget);
        config.episodes_per_interface = self.episodes_per_interface;
        config.delta = self.common.single_delta()?;
        if let Some(k) = self.random_phase {
            config.random_phase = k;
        }
        config.estimator = estimator(self.estimator_steps);
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Listen address; defaults to `$MIMI_BIND` or 127.0.0.1:8732.
    #[arg(long)]
    pub bind: Option<String>,
    #[arg(long, default_value_t = TICK_HZ)]
    pub tick_hz: f64,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 100)]
    pub joints: usize,
}

fn estimator(steps: Option<usize>) -> EstimatorConfig {
    let mut config = EstimatorConfig::default();
    if let Some(s) = steps {
        config.steps = s;
    }
    config
}

pub fn run(cli: Cli) -> Result<(), BoxError> {
    match cli.command {
        Commands::Simulate(a) => simulate(&a),
        Commands::Score(a) => score(&a),
        Commands::Sweep(a) => sweep(&a),
        Commands::Train(a) => train(&a),
        Commands::Serve(a) => serve(&a),
        Commands::Oracle(a) => oracle(&a),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), BoxError> {
    fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn simulate(a: &SimulateArgs) -> Result<(), BoxError> {
    let delta = a.common.single_delta()?;
    let out = a.common.require_out()?;
    let params = InterfaceParams::new(a.env, a.theta.clone())?;
    let mut user = SimUser::for_env(a.env);
    let mut rng = Rng::new(a.common.seed);
    let mut episodes = evaluate_interface(&params, &mut user, a.episodes, &mut rng, 0, "fixed")?;
    for ep in &mut episodes {
        ep.meta.condition_id = "simulate".into();
        ep.meta.seed = a.common.seed;
    }
    fs::create_dir_all(out)?;
    save_episodes(&out.join("episodes.jsonl"), &a.env.log_header(), &episodes)?;
    let rewards = episodes
        .iter()
        .map(|e| a.env.episode_reward(e))
        .collect::<Result<Vec<_>, _>>()?;
    let mean_reward = rewards.iter().sum::<f64>() / rewards.len().max(1) as f64;
    let successes = episodes
        .iter()
        .filter(|e| e.meta.outcome == Some(Outcome::Success))
        .count();
    let mi = mimi_evaluate_with(&episodes, delta, a.common.seed, &EstimatorConfig::default()).ok();
    let summary = json!({
        "env": a.env,
        "theta": params.theta(),
        "seed": a.common.seed,
        "delta": delta_label(delta),
        "episodes": episodes.len(),
        "mean_reward": mean_reward,
        "successes": successes,
        "mi": mi.map(|m| m.value),
    });
    write_text(&out.join("summary.json"), &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    println!(
        "{} episodes, mean reward {mean_reward:.3}, {successes} successes, mi {}",
        episodes.len(),
        mi.map_or("n/a".into(), |m| format!("{:.4}", m.value))
    );
    Ok(())
}

/// Every log under `input`: the file itself, or the directory's `.jsonl`
/// files in name order.
pub fn load_input(input: &Path) -> Result<Vec<EpisodeLog>, BoxError> {
    if input.is_file() {
        return Ok(load_episodes(input)?);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(input)
        .map_err(|e| format!("{}: {e}", input.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(format!("{}: no .jsonl logs", input.display()).into());
    }
    let mut logs = Vec::new();
    for f in files {
        logs.extend(load_episodes(&f)?);
    }
    Ok(logs)
}

fn report_dir(a: &ScoreArgs) -> PathBuf {
    match &a.common.out {
        Some(dir) => dir.clone(),
        None if a.input.is_dir() => a.input.clone(),
        None => a.input.parent().map(Path::to_path_buf).unwrap_or_default(),
    }
}

fn score(a: &ScoreArgs) -> Result<(), BoxError> {
    let delta = a.common.single_delta()?;
    let logs = load_input(&a.input)?;
    info!("scoring {} episodes", logs.len());
    let report = score_conditions_with(&logs, delta, a.seeds, &estimator(a.estimator_steps))?;
    let dir = report_dir(a);
    fs::create_dir_all(&dir)?;
    let stem = format!("correlation_delta{}", delta_label(delta));
    write_text(&dir.join(format!("{stem}.json")), &(report.to_json()? + "\n"))?;
    let table = report.to_table();
    write_text(&dir.join(format!("{stem}.txt")), &table)?;
    print!("{table}");
    Ok(())
}

fn sweep(a: &ScoreArgs) -> Result<(), BoxError> {
    let logs = load_input(&a.input)?;
    let result = delta_sweep_with(&logs, &a.common.delta, a.seeds, &estimator(a.estimator_steps))?;
    let dir = report_dir(a);
    fs::create_dir_all(&dir)?;
    write_text(&dir.join("sweep.json"), &(serde_json::to_string_pretty(&result)? + "\n"))?;
    let table = result.to_table();
    write_text(&dir.join("sweep.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn train(a: &TrainArgs) -> Result<(), BoxError> {
    let out = a.common.require_out()?.to_path_buf();
    let config = a.train_config()?;
    let mut user = SimUser::for_env(a.env);
    let mut saved = Ok(());
    let history = mimi_train_with_hook(a.env, &mut user, &config, a.common.seed, &mut |h| {
        if saved.is_ok() {
            saved = save_run(&out, h).map(|_| ());
        }
    })?;
    saved?;
    save_run(&out, &history)?;
    if let Some(best) = history.best() {
        println!(
            "best interface {} of {}: theta {:?} score {:.4} mean reward {:.3}",
            best.index,
            history.iterations.len(),
            best.theta,
            best.score,
            best.mean_reward()
        );
    }
    Ok(())
}

fn serve(a: &ServeArgs) -> Result<(), BoxError> {
    let t = &a.train;
    let out = t.common.require_out()?.to_path_buf();
    let mut config = SessionConfig::new(t.env, t.train_config()?, t.common.seed, out);
    config.tick_hz = a.tick_hz;
    let bind = a.bind.clone().unwrap_or_else(default_bind);
    let server = Server::bind(bind.as_str(), config)?;
    println!("listening on ws://{}", server.local_addr()?);
    let report = server.run()?;
    match &report.aborted {
        Some(reason) => println!(
            "session aborted after {} interfaces: {reason}",
            report.history.iterations.len()
        ),
        None => println!(
            "session complete: {} interfaces, {} ticks, {} missed deadlines",
            report.history.iterations.len(),
            report.ticks,
            report.missed_deadlines
        ),
    }
    Ok(())
}

fn oracle(a: &OracleArgs) -> Result<(), BoxError> {
    let gap = chain_rule_check(a.joints, a.common.seed)?;
    let line = format!(
        "chain rule over {} random joints: max |I(s;x) + I(x;s'|s) - I(x;s,s')| = {gap:.3e}",
        a.joints
    );
    println!("{line}");
    if let Some(out) = &a.common.out {
        fs::create_dir_all(out)?;
        let record = json!({ "joints": a.joints, "seed": a.common.seed, "max_gap": gap, "tolerance": ORACLE_TOLERANCE });
        write_text(&out.join("oracle.json"), &(serde_json::to_string_pretty(&record)? + "\n"))?;
    }
    if gap < ORACLE_TOLERANCE {
        println!("ok");
        Ok(())
    } else {
        Err(format!("gap {gap:.3e} exceeds {ORACLE_TOLERANCE:.0e}").into())
    }
}
