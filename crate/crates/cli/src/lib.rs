//! Command implementations behind the `tsynth` binary.

use std::ffi::OsString;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use tsynth_core::checkpoint::Checkpoint;
use tsynth_core::dataset::{generate_targets, read_jsonl, write_jsonl, TargetSpec};
use tsynth_core::env::EnvConfig;
use tsynth_core::gates::action_count;
use tsynth_core::library::{structured_unitary, STRUCTURED};
use tsynth_core::matrix::{ComplexMatrix, UnitaryFile};
use tsynth_core::net::{Evaluator, UniformEvaluator};
use tsynth_core::oracle::{mask_completeness_check, oracle_synthesize, OracleConfig};
use tsynth_core::qasm::emit_qasm;
use tsynth_core::synth::{synthesize, EvalConfig, ScoreKind, SynthesisReport};
use tsynth_core::trainer::{Trainer, TrainerConfig};
use tsynth_core::{derive_seed, streams, Error};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SYNTH_FAILED: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;

/// Directory searched for `checkpoint.json` when `--checkpoint` is omitted.
pub const CHECKPOINT_DIR_VAR: &str = "TSYNTH_CHECKPOINT_DIR";

pub const GIT_DESCRIBE: &str = env!("TSYNTH_GIT_DESCRIBE");

#[derive(Parser, Debug)]
#[command(name = "tsynth", version, about = "Exact Clifford+T unitary synthesis with Gumbel AlphaZero")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Self-play training; writes checkpoints, a CSV log and a manifest.
    Train(TrainArgs),
    /// Synthesize one unitary with `b` independent searched runs.
    Synth(SynthArgs),
    /// Generate a JSONL dataset of random masked target circuits.
    GenTargets(GenArgs),
    /// Synthesize every target of a dataset and write a CSV summary.
    Bench(BenchArgs),
    /// Exhaustive minimal-length synthesis for small targets.
    Oracle(OracleArgs),
    /// Compare reachable unitaries with and without the action mask.
    MaskCheck(MaskCheckArgs),
    /// Export a named structured unitary as JSON, or list the names.
    Library(LibraryArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub qubits: usize,
    #[arg(long, default_value_t = 3)]
    pub gate_min: usize,
    /// Defaults to 60, or 40 at five qubits.
    #[arg(long)]
    pub gate_max: Option<usize>,
    /// Episode step cap; defaults to twice `--gate-max`.
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Environment steps summed over workers.
    #[arg(long, default_value_t = 200_000)]
    pub steps: u64,
    #[arg(long, default_value_t = 64)]
    pub workers: usize,
    #[arg(long, default_value_t = 256)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory; defaults to `$TSYNTH_CHECKPOINT_DIR` or `tsynth-train`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    pub width: usize,
    #[arg(long, default_value_t = 5)]
    pub layers: usize,
    #[arg(long, default_value_t = 3e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 4.0)]
    pub update_to_data: f64,
    /// Simulations per search during self-play.
    #[arg(long, default_value_t = 32)]
    pub sims: usize,
    #[arg(long, default_value_t = 64)]
    pub eval_sims: usize,
    #[arg(long, default_value_t = 50)]
    pub eval_targets: usize,
    #[arg(long, default_value_t = 16)]
    pub eval_runs: usize,
    #[arg(long, default_value_t = 50_000)]
    pub eval_interval: u64,
    #[arg(long, default_value_t = 50_000)]
    pub checkpoint_interval: u64,
    /// Continue from a checkpoint instead of a fresh network.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct ModelArgs {
    /// Trained checkpoint; defaults to `$TSYNTH_CHECKPOINT_DIR/checkpoint.json`.
    #[arg(long, conflicts_with = "uniform")]
    pub checkpoint: Option<PathBuf>,
    /// Use zero logits and zero values instead of a trained network.
    #[arg(long)]
    pub uniform: bool,
    /// Episode step cap with `--uniform` (defaults to 16).
    #[arg(long)]
    pub max_steps: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
pub struct SearchArgs {
    #[arg(long, default_value_t = 256)]
    pub runs: usize,
    /// `tcount` or `gates`.
    #[arg(long, default_value = "tcount")]
    pub score: String,
    #[arg(long, default_value_t = 64)]
    pub sims: usize,
    /// Root candidates; defaults to min(16, action count).
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Serialize)]
pub struct SynthArgs {
    /// Unitary JSON: {"n_qubits", "real", "imag"}.
    #[arg(long)]
    pub unitary: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long, default_value = "tsynth-synth")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
#[command(group(clap::ArgGroup::new("statistic").required(true).multiple(true).args(["t_gates", "total_gates"])))]
pub struct GenArgs {
    #[arg(long)]
    pub qubits: usize,
    #[arg(long)]
    pub count: usize,
    /// Exact T-count of every generating circuit.
    #[arg(long)]
    pub t_gates: Option<usize>,
    /// Exact gate count of every generating circuit.
    #[arg(long)]
    pub total_gates: Option<usize>,
    #[arg(long, default_value_t = 3)]
    pub gate_min: usize,
    /// Defaults to 60, or 40 at five qubits.
    #[arg(long)]
    pub gate_max: Option<usize>,
    #[arg(long, default_value_t = 200_000)]
    pub max_attempts: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct BenchArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Per-target time limit in seconds; unfinished runs count as failures.
    #[arg(long)]
    pub timeout: Option<f64>,
    /// CSV output; timings go next to it with a `.timing.csv` suffix.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct OracleArgs {
    #[arg(long)]
    pub unitary: PathBuf,
    #[arg(long, default_value_t = 6)]
    pub max_gates: usize,
    /// `gates` or `tcount`.
    #[arg(long, default_value = "gates")]
    pub score: String,
    #[arg(long)]
    pub no_mask: bool,
    #[arg(long, default_value = "tsynth-oracle")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct MaskCheckArgs {
    #[arg(long)]
    pub qubits: usize,
    #[arg(long)]
    pub depth: usize,
    #[arg(long, default_value = "tsynth-mask-check")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct LibraryArgs {
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Written once per command next to its outputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub git_describe: String,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub wall_time_s: f64,
    pub outputs: Vec<PathBuf>,
    pub exit_code: i32,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(Error::Json(e))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Core(Error::Io(std::io::Error::other(e)))
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(Error::Divergence(_)) => EXIT_DIVERGED,
            CliError::Core(_) => EXIT_CONFIG,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

struct Run {
    command: &'static str,
    config: serde_json::Value,
    seed: Option<u64>,
    started_at: DateTime<Utc>,
    start: Instant,
    outputs: Vec<PathBuf>,
}

impl Run {
    fn new(command: &'static str, config: &impl Serialize, seed: Option<u64>) -> CliResult<Self> {
        Ok(Self {
            command,
            config: serde_json::to_value(config)?,
            seed,
            started_at: Utc::now(),
            start: Instant::now(),
            outputs: Vec::new(),
        })
    }

    fn write(&mut self, path: PathBuf, bytes: &[u8]) -> CliResult<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, bytes)?;
        self.outputs.push(path);
        Ok(())
    }

    fn finish(self, manifest_path: &Path, exit_code: i32) -> CliResult<i32> {
        let m = RunManifest {
            command: self.command.to_string(),
            config: self.config,
            seed: self.seed,
            git_describe: GIT_DESCRIBE.to_string(),
            started_at: self.started_at,
            finished_at: Utc::now(),
            wall_time_s: self.start.elapsed().as_secs_f64(),
            outputs: self.outputs,
            exit_code,
        };
        if let Some(dir) = manifest_path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(manifest_path, serde_json::to_string_pretty(&m)? + "\n")?;
        Ok(exit_code)
    }
}

fn parse_score(s: &str) -> CliResult<ScoreKind> {
    s.parse().map_err(CliError::Usage)
}

fn read_unitary(path: &Path) -> CliResult<ComplexMatrix> {
    let f: UnitaryFile = serde_json::from_reader(BufReader::new(fs::File::open(path)?))?;
    Ok(f.to_matrix()?)
}

fn default_gate_max(n: usize) -> usize {
    EnvConfig::full_scale(n).gate_max
}

fn checkpoint_path(explicit: &Option<PathBuf>) -> CliResult<PathBuf> {
    if let Some(p) = explicit {
        return Ok(p.clone());
    }
    match std::env::var_os(CHECKPOINT_DIR_VAR) {
        Some(dir) => Ok(PathBuf::from(dir).join("checkpoint.json")),
        None => Err(CliError::Usage(format!(
            "--checkpoint is required unless --uniform is given or {CHECKPOINT_DIR_VAR} is set"
        ))),
    }
}

/// Either a trained network or the uniform evaluator, with its environment config.
enum Model {
    Trained(Box<Checkpoint>),
    Uniform(UniformEvaluator, EnvConfig),
}

impl Model {
    fn load(args: &ModelArgs, n_qubits: usize) -> CliResult<Self> {
        if args.uniform {
            let max_steps = args.max_steps.unwrap_or(16);
            if max_steps == 0 {
                return Err(CliError::Usage("--max-steps must be positive".into()));
            }
            let mut env = EnvConfig::new(n_qubits, 1, max_steps);
            env.max_steps = max_steps;
            return Ok(Model::Uniform(
                UniformEvaluator {
                    n_actions: action_count(n_qubits),
                },
                env,
            ));
        }
        let path = checkpoint_path(&args.checkpoint)?;
        let mut ck = Checkpoint::load_for(&path, n_qubits)?;
        if let Some(m) = args.max_steps {
            ck.env.max_steps = m;
            ck.env.validate()?;
        }
        Ok(Model::Trained(Box::new(ck)))
    }

    fn synthesize(&self, u: &ComplexMatrix, cfg: &EvalConfig, seed: u64) -> CliResult<SynthesisReport> {
        Ok(match self {
            Model::Trained(c) => synthesize(u, &c.env, &c.net, cfg, seed)?,
            Model::Uniform(net, env) => synthesize(u, env, net, cfg, seed)?,
        })
    }

    fn n_actions(&self) -> usize {
        match self {
            Model::Trained(c) => c.net.n_actions(),
            Model::Uniform(u, _) => u.n_actions,
        }
    }
}

fn eval_config(search: &SearchArgs, n_actions: usize) -> CliResult<EvalConfig> {
    let mut cfg = EvalConfig::new(search.runs, n_actions);
    cfg.search.n_sim = search.sims;
    if let Some(k) = search.k {
        cfg.search.k = k;
    }
    cfg.score_kind = parse_score(&search.score)?;
    cfg.validate(n_actions).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

pub fn cmd_train(args: &TrainArgs) -> CliResult<i32> {
    let gate_max = args.gate_max.unwrap_or_else(|| default_gate_max(args.qubits));
    if args.gate_min == 0 || args.gate_min > gate_max {
        return Err(CliError::Usage(format!(
            "--gate-min {} must lie in [1, --gate-max {gate_max}]",
            args.gate_min
        )));
    }
    let mut env = EnvConfig::new(args.qubits, args.gate_min, gate_max);
    if let Some(m) = args.max_steps {
        env.max_steps = m;
    }
    env.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let cfg = TrainerConfig {
        n_workers: args.workers,
        batch_size: args.batch,
        update_to_data: args.update_to_data,
        total_steps: args.steps,
        checkpoint_interval: args.checkpoint_interval,
        eval_interval: args.eval_interval,
        eval_targets: args.eval_targets,
        eval_runs: args.eval_runs,
        eval_sims: args.eval_sims,
        train_sims: args.sims,
        width: args.width,
        hidden_layers: args.layers,
        lr: args.lr,
        value_weight: 1.0,
        buffer_capacity: tsynth_core::trainer::REPLAY_CAPACITY,
        seed: args.seed,
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let out = match &args.out {
        Some(p) => p.clone(),
        None => std::env::var_os(CHECKPOINT_DIR_VAR)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("tsynth-train")),
    };
    fs::create_dir_all(&out)?;
    let mut run = Run::new(
        "train",
        &serde_json::json!({ "args": args, "env": env, "trainer": cfg }),
        Some(args.seed),
    )?;
    let trainer = match &args.resume {
        Some(p) => {
            let ck = Checkpoint::load_for(p, args.qubits)?;
            if ck.env != env {
                return Err(CliError::Core(Error::Config(
                    "resumed checkpoint was trained with a different environment".into(),
                )));
            }
            Trainer::from_checkpoint(cfg, ck)?
        }
        None => Trainer::new(cfg, env)?,
    };
    let result = trainer.run(Some(&out), |row| {
        eprintln!(
            "step {:>9} updates {:>7} loss {} eval success {} mean gates {}",
            row.step,
            row.updates,
            fmt_opt(row.loss),
            fmt_opt(row.eval_success_rate),
            fmt_opt(row.mean_solution_gates)
        );
    });
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            let e = CliError::Core(e);
            let code = e.exit_code();
            eprintln!("error: {e}");
            run.finish(&out.join("manifest.json"), code)?;
            return Ok(code);
        }
    };
    let final_path = out.join("checkpoint.json");
    outcome.checkpoint.save(&final_path)?;
    run.outputs.extend(outcome.checkpoints);
    run.outputs.push(out.join("train_log.csv"));
    run.outputs.push(final_path);
    run.finish(&out.join("manifest.json"), EXIT_OK)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

pub fn cmd_synth(args: &SynthArgs) -> CliResult<i32> {
    let u = read_unitary(&args.unitary)?;
    let model = Model::load(&args.model, u.n_qubits())?;
    let cfg = eval_config(&args.search, model.n_actions())?;
    let mut run = Run::new("synth", &args, Some(args.search.seed))?;
    let report = model.synthesize(&u, &cfg, args.search.seed)?;
    run.write(args.out.join("report.json"), (serde_json::to_string_pretty(&report)? + "\n").as_bytes())?;
    if let Some(q) = &report.best_qasm {
        run.write(args.out.join("best.qasm"), q.as_bytes())?;
    }
    if report.success {
        println!(
            "success: {} gates, T-count {}, {}/{} valid runs, {:.2}s",
            report.total_gates.unwrap_or(0),
            report.t_count.unwrap_or(0),
            report.success_count(),
            report.runs.len(),
            report.wall_time.as_secs_f64()
        );
        if let Some(q) = &report.best_qasm {
            print!("{q}");
        }
    } else {
        println!(
            "synthesis failed: no run matched the target ({} runs, {:.2}s)",
            report.runs.len(),
            report.wall_time.as_secs_f64()
        );
    }
    let code = if report.success { EXIT_OK } else { EXIT_SYNTH_FAILED };
    run.finish(&args.out.join("manifest.json"), code)
}

pub fn cmd_gen_targets(args: &GenArgs) -> CliResult<i32> {
    let mut spec = TargetSpec::new(args.qubits, args.count, args.seed);
    spec.t_gates = args.t_gates;
    spec.total_gates = args.total_gates;
    spec.gate_range = (args.gate_min, args.gate_max.unwrap_or_else(|| default_gate_max(args.qubits)));
    spec.max_attempts = args.max_attempts;
    if spec.gate_range.0 > spec.gate_range.1 {
        return Err(CliError::Usage("--gate-min exceeds --gate-max".into()));
    }
    tsynth_core::gates::ActionSpace::for_qubits(args.qubits).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut run = Run::new("gen-targets", &serde_json::json!({ "args": args, "targets": spec }), Some(args.seed))?;
    let records = generate_targets(&spec)?;
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &records)?;
    run.write(args.out.clone(), &buf)?;
    println!("wrote {} targets to {}", records.len(), args.out.display());
    run.finish(&sidecar(&args.out, "manifest.json"), EXIT_OK)
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(OsString::from).unwrap_or_default();
    name.push(".");
    name.push(suffix);
    path.with_file_name(name)
}

#[derive(Serialize)]
struct BenchRow {
    target_id: String,
    success: String,
    input_t_count: String,
    input_gate_count: String,
    output_t_count: String,
    output_gate_count: String,
}

#[derive(Serialize)]
struct TimingRow {
    target_id: usize,
    wall_time_s: f64,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let m = s.len() / 2;
    Some(if s.len() % 2 == 1 { s[m] } else { (s[m - 1] + s[m]) / 2.0 })
}

fn num(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Per-target results of a benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub target_id: usize,
    pub success: bool,
    pub input_t_count: usize,
    pub input_gate_count: usize,
    pub output_t_count: Option<usize>,
    pub output_gate_count: Option<usize>,
    #[serde(skip)]
    pub wall_time: Duration,
}

/// Aggregates over a benchmark: means and medians over successful targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub targets: usize,
    pub success_fraction: f64,
    pub mean_input_gates: Option<f64>,
    pub mean_output_gates: Option<f64>,
    pub mean_input_t: Option<f64>,
    pub mean_output_t: Option<f64>,
}

pub fn summarize(results: &[BenchResult]) -> BenchSummary {
    let ok: Vec<&BenchResult> = results.iter().filter(|r| r.success).collect();
    let col = |f: &dyn Fn(&BenchResult) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<_>>();
    BenchSummary {
        targets: results.len(),
        success_fraction: if results.is_empty() {
            0.0
        } else {
            ok.len() as f64 / results.len() as f64
        },
        mean_input_gates: mean(&col(&|r| r.input_gate_count as f64)),
        mean_output_gates: mean(&col(&|r| r.output_gate_count.unwrap_or(0) as f64)),
        mean_input_t: mean(&col(&|r| r.input_t_count as f64)),
        mean_output_t: mean(&col(&|r| r.output_t_count.unwrap_or(0) as f64)),
    }
}

/// CSV body for bench results, including `mean`, `median` and `success_fraction` rows.
pub fn bench_csv(results: &[BenchResult]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if results.is_empty() {
        w.write_record([
            "target_id",
            "success",
            "input_t_count",
            "input_gate_count",
            "output_t_count",
            "output_gate_count",
        ])?;
    }
    let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in results {
        w.serialize(BenchRow {
            target_id: r.target_id.to_string(),
            success: (r.success as u8).to_string(),
            input_t_count: r.input_t_count.to_string(),
            input_gate_count: r.input_gate_count.to_string(),
            output_t_count: opt(r.output_t_count),
            output_gate_count: opt(r.output_gate_count),
        })?;
    }
    if !results.is_empty() {
        let ok: Vec<&BenchResult> = results.iter().filter(|r| r.success).collect();
        let frac = ok.len() as f64 / results.len() as f64;
        let cols: [Vec<f64>; 4] = [
            ok.iter().map(|r| r.input_t_count as f64).collect(),
            ok.iter().map(|r| r.input_gate_count as f64).collect(),
            ok.iter().map(|r| r.output_t_count.unwrap_or(0) as f64).collect(),
            ok.iter().map(|r| r.output_gate_count.unwrap_or(0) as f64).collect(),
        ];
        for (label, f) in [("mean", mean as fn(&[f64]) -> Option<f64>), ("median", median)] {
            w.serialize(BenchRow {
                target_id: label.into(),
                success: num(Some(frac)),
                input_t_count: num(f(&cols[0])),
                input_gate_count: num(f(&cols[1])),
                output_t_count: num(f(&cols[2])),
                output_gate_count: num(f(&cols[3])),
            })?;
        }
        w.serialize(BenchRow {
            target_id: "success_fraction".into(),
            success: num(Some(frac)),
            input_t_count: String::new(),
            input_gate_count: String::new(),
            output_t_count: String::new(),
            output_gate_count: String::new(),
        })?;
    }
    w.into_inner().map_err(|e| CliError::Core(Error::Io(std::io::Error::other(e.to_string()))))
}

pub fn cmd_bench(args: &BenchArgs) -> CliResult<i32> {
    let records = read_jsonl(BufReader::new(fs::File::open(&args.dataset)?))?;
    let mut run = Run::new("bench", &args, Some(args.search.seed))?;
    let mut results = Vec::with_capacity(records.len());
    if let Some(first) = records.first() {
        let n = first.n_qubits;
        if records.iter().any(|r| r.n_qubits != n) {
            return Err(Error::Config("dataset mixes qubit counts".into()).into());
        }
        let model = Model::load(&args.model, n)?;
        let mut cfg = eval_config(&args.search, model.n_actions())?;
        for (i, rec) in records.iter().enumerate() {
            let target = rec.circuit()?;
            if let Some(t) = args.timeout {
                cfg.deadline = Some(Instant::now() + Duration::from_secs_f64(t));
            }
            let seed = derive_seed(args.search.seed, streams::EVAL_RUNS, i as u64);
            let report = model.synthesize(target.unitary(), &cfg, seed)?;
            results.push(BenchResult {
                target_id: i,
                success: report.success,
                input_t_count: target.t_count(),
                input_gate_count: target.len(),
                output_t_count: report.t_count,
                output_gate_count: report.total_gates,
                wall_time: report.wall_time,
            });
        }
    }
    run.write(args.out.clone(), &bench_csv(&results)?)?;
    let mut tw = csv::Writer::from_writer(Vec::new());
    for r in &results {
        tw.serialize(TimingRow {
            target_id: r.target_id,
            wall_time_s: r.wall_time.as_secs_f64(),
        })?;
    }
    let timing = tw
        .into_inner()
        .map_err(|e| CliError::Core(Error::Io(std::io::Error::other(e.to_string()))))?;
    run.write(sidecar(&args.out, "timing.csv"), &timing)?;
    let s = summarize(&results);
    println!(
        "{} targets, success fraction {:.3}, mean output gates {}, mean output T-count {}",
        s.targets,
        s.success_fraction,
        fmt_opt(s.mean_output_gates),
        fmt_opt(s.mean_output_t)
    );
    run.finish(&sidecar(&args.out, "manifest.json"), EXIT_OK)
}

#[derive(Serialize)]
struct OracleReport {
    found: bool,
    max_gates: usize,
    score_kind: ScoreKind,
    use_mask: bool,
    gate_count: Option<usize>,
    t_count: Option<usize>,
    witness_qasm: Option<String>,
    nodes_expanded: Option<u64>,
}

pub fn cmd_oracle(args: &OracleArgs) -> CliResult<i32> {
    let u = read_unitary(&args.unitary)?;
    let mut cfg = OracleConfig::new(args.max_gates);
    cfg.use_mask = !args.no_mask;
    cfg.score_kind = parse_score(&args.score)?;
    let mut run = Run::new("oracle", &args, None)?;
    let found = oracle_synthesize(&u, &cfg)?;
    let report = OracleReport {
        found: found.is_some(),
        max_gates: args.max_gates,
        score_kind: cfg.score_kind,
        use_mask: cfg.use_mask,
        gate_count: found.as_ref().map(|r| r.gate_count),
        t_count: found.as_ref().map(|r| r.t_count),
        witness_qasm: found.as_ref().map(|r| emit_qasm(&r.circuit)),
        nodes_expanded: found.as_ref().map(|r| r.nodes_expanded),
    };
    run.write(args.out.join("oracle.json"), (serde_json::to_string_pretty(&report)? + "\n").as_bytes())?;
    match &found {
        Some(r) => {
            let q = emit_qasm(&r.circuit);
            run.write(args.out.join("witness.qasm"), q.as_bytes())?;
            println!("minimal count {} (T-count {})", r.gate_count, r.t_count);
            print!("{q}");
        }
        None => println!("not found within {} gates", args.max_gates),
    }
    let code = if found.is_some() { EXIT_OK } else { EXIT_SYNTH_FAILED };
    run.finish(&args.out.join("manifest.json"), code)
}

pub fn cmd_mask_check(args: &MaskCheckArgs) -> CliResult<i32> {
    let mut run = Run::new("mask-check", &args, None)?;
    let report = mask_completeness_check(args.qubits, args.depth).map_err(|e| CliError::Usage(e.to_string()))?;
    run.write(args.out.join("mask_check.json"), (serde_json::to_string_pretty(&report)? + "\n").as_bytes())?;
    println!(
        "depth {}: {} masked vs {} unmasked sequences, {} vs {} unitaries, identical: {}",
        report.depth,
        report.masked_sequences,
        report.unmasked_sequences,
        report.masked_unitaries,
        report.unmasked_unitaries,
        report.identical
    );
    let code = if report.identical { EXIT_OK } else { EXIT_SYNTH_FAILED };
    run.finish(&args.out.join("manifest.json"), code)
}

pub fn cmd_library(args: &LibraryArgs) -> CliResult<i32> {
    let Some(name) = &args.name else {
        for s in STRUCTURED {
            let t = s.t_count.map(|t| t.to_string()).unwrap_or_else(|| "-".into());
            println!("{:<24} {} qubits  T-count {t}", s.name, s.n_qubits);
        }
        return Ok(EXIT_OK);
    };
    let u = structured_unitary(name).ok_or_else(|| CliError::Usage(format!("unknown unitary `{name}`")))?;
    let text = serde_json::to_string_pretty(&UnitaryFile::from_matrix(&u))? + "\n";
    match &args.out {
        Some(p) => {
            let mut run = Run::new("library", &args, None)?;
            run.write(p.clone(), text.as_bytes())?;
            run.finish(&sidecar(p, "manifest.json"), EXIT_OK)
        }
        None => {
            print!("{text}");
            Ok(EXIT_OK)
        }
    }
}

pub fn dispatch(cli: &Cli) -> CliResult<i32> {
    match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Synth(a) => cmd_synth(a),
        Command::GenTargets(a) => cmd_gen_targets(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::MaskCheck(a) => cmd_mask_check(a),
        Command::Library(a) => cmd_library(a),
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(id: usize, success: bool, gates: usize) -> BenchResult {
        BenchResult {
            target_id: id,
            success,
            input_t_count: 1,
            input_gate_count: 5,
            output_t_count: success.then_some(1),
            output_gate_count: success.then_some(gates),
            wall_time: Duration::ZERO,
        }
    }

    #[test]
    fn empty_bench_is_header_only() {
        let text = String::from_utf8(bench_csv(&[]).unwrap()).unwrap();
        assert_eq!(
            text,
            "target_id,success,input_t_count,input_gate_count,output_t_count,output_gate_count\n"
        );
    }

    #[test]
    fn bench_aggregates_use_successful_targets() {
        let rs = [result(0, true, 3), result(1, false, 0), result(2, true, 6)];
        let text = String::from_utf8(bench_csv(&rs).unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 3 + 3);
        assert_eq!(lines[2], "1,0,1,5,,");
        assert_eq!(lines[4], "mean,0.666667,1.000000,5.000000,1.000000,4.500000");
        assert_eq!(lines[5], "median,0.666667,1.000000,5.000000,1.000000,4.500000");
        assert_eq!(lines[6], "success_fraction,0.666667,,,,");
        let s = summarize(&rs);
        assert_eq!(s.mean_output_gates, Some(4.5));
    }

    #[test]
    fn usage_errors_exit_with_one() {
        assert_eq!(main_with_args(["tsynth", "train"]), EXIT_USAGE);
        assert_eq!(main_with_args(["tsynth", "frobnicate"]), EXIT_USAGE);
        assert_eq!(main_with_args(["tsynth", "--help"]), EXIT_OK);
    }

    #[test]
    fn sidecar_names() {
        assert_eq!(sidecar(Path::new("a/b.csv"), "timing.csv"), PathBuf::from("a/b.csv.timing.csv"));
    }
}
