//! Command-line front end: one subcommand per workbench capability.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on runtime failures.
//! Every run is reproducible from its arguments and input files — all
//! randomness flows from `--seed` (default 0) through tagged derived
//! streams, and every machine-readable artifact carries a
//! `format_version` field.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::evaluator::{self, EvalError, EvalOptions};
use crate::gridworld::{
    generate_corpus, load_corpus, load_scene, sample_start, sample_task, save_corpus,
    smoke_corpus, AgentPose, Corpus, EnvError, ObjectClass, Scene, Split, Task,
};
use crate::observe::render;
use crate::policy::{stack_gradcheck, ModelParams};
use crate::rollout::{run_episode, ActionMode, RolloutConfig, RolloutOutcome};
use crate::seeding;
use crate::tensor::{Graph, TensorError};
use crate::trainer::{
    train_observed, Ablation, AdamHyper, Checkpoint, TrainConfig, TrainError,
    CONFIG_FORMAT_VERSION,
};

const EXIT_OK: i32 = 0;
const EXIT_USAGE: i32 = 1;
const EXIT_RUNTIME: i32 = 2;

/// Tolerance the `gradcheck` command enforces.
pub const GRADCHECK_TOL: f64 = 1e-4;
/// Version stamp on rollout traces, attention exports, and view dumps.
pub const TRACE_FORMAT_VERSION: u32 = 1;
/// Fused-attention cells listed per rollout step.
const ROLLOUT_TOP_K: usize = 5;

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Msg(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, CliError>;

fn fail<T>(msg: impl Into<String>) -> Result<T> {
    Err(CliError::Msg(msg.into()))
}

/// Parses `argv` and runs the selected command, returning the process exit
/// code. Usage problems print to the diagnostic stream and yield 1;
/// runtime failures yield 2.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = err.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(err) => {
            eprintln!("error: {err}");
            EXIT_RUNTIME
        }
    }
}

#[derive(Parser)]
#[command(
    name = "attnav",
    version,
    about = "Object-goal navigation workbench: scene generation, attention-policy training, evaluation, and inspection artifacts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the 120-scene corpus (or the 12-scene smoke corpus) and
    /// write one structured-text file per scene.
    GenScenes(GenScenesArgs),
    /// Train a policy and write checkpoints plus a training log.
    Train(TrainArgs),
    /// Score a checkpoint on a split and print the evaluation report.
    Eval(EvalArgs),
    /// Run one episode and dump a per-step trace.
    Rollout(RolloutArgs),
    /// Check reverse-mode gradients of the full model against finite
    /// differences.
    Gradcheck(GradcheckArgs),
    /// Export per-step attention distributions as graymaps plus a
    /// full-precision trace.
    ExportAttn(ExportAttnArgs),
    /// Print per-step fusion-weight statistics for a checkpoint.
    BetaStats(BetaStatsArgs),
    /// Render one observation and dump the feature grid as text.
    ExportView(ExportViewArgs),
}

// ── Shared argument blocks ───────────────────────────────────────────────

#[derive(Args)]
struct ConfigArgs {
    /// Configuration file; omitted → the selected preset.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Built-in configuration preset used when no --config is given.
    #[arg(long, value_enum, default_value_t = Preset::Default, conflicts_with = "config")]
    preset: Preset,
}

#[derive(Args)]
struct SceneSourceArgs {
    /// Directory of scene files; omitted → the standard corpus regenerated
    /// from seed 0.
    #[arg(long, value_name = "DIR", conflicts_with = "smoke")]
    scenes: Option<PathBuf>,
    /// Use the built-in 12-scene smoke corpus (tiny five-class kitchens).
    #[arg(long)]
    smoke: bool,
}

impl SceneSourceArgs {
    fn load(&self) -> Result<Corpus> {
        if self.smoke {
            return Ok(smoke_corpus());
        }
        match &self.scenes {
            Some(dir) => Ok(load_corpus(dir)?),
            None => Ok(generate_corpus(0)?),
        }
    }
}

#[derive(Args)]
struct OverrideArgs {
    /// Master seed; omitted → the config's seed (default 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Parallel episodes per update.
    #[arg(long)]
    workers: Option<usize>,
    /// Total training episodes.
    #[arg(long)]
    episodes: Option<u64>,
    /// Attention configuration (full or one unit disabled).
    #[arg(long, value_enum)]
    ablation: Option<AblationArg>,
    /// Override the in-episode adaptation switch.
    #[arg(long, value_enum)]
    adapt: Option<OnOff>,
}

impl ConfigArgs {
    /// Loads the config, then layers the shared overrides on top.
    fn resolve(&self, over: &OverrideArgs) -> Result<TrainConfig> {
        let mut config = match &self.config {
            Some(path) => TrainConfig::load(path)?,
            None => match self.preset {
                Preset::Default => TrainConfig::default(),
                Preset::Smoke => TrainConfig::smoke(0),
            },
        };
        if let Some(seed) = over.seed {
            config.seed = seed;
        }
        if let Some(workers) = over.workers {
            config.workers = workers;
        }
        if let Some(episodes) = over.episodes {
            config.total_episodes = episodes;
        }
        if let Some(ablation) = over.ablation {
            config = Ablation::from(ablation).apply(&config);
        }
        if let Some(adapt) = over.adapt {
            config.use_adaptation = matches!(adapt, OnOff::On);
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Full-size defaults.
    Default,
    /// Small smoke-training setup for the 12-scene smoke corpus.
    Smoke,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum AblationArg {
    /// All three attention units with learned fusion.
    Full,
    /// Target unit disabled.
    NoPg,
    /// Action unit disabled.
    NoPa,
    /// Memory unit disabled.
    NoPm,
    /// Fusion weights pinned to one.
    Beta1,
}

impl From<AblationArg> for Ablation {
    fn from(a: AblationArg) -> Self {
        match a {
            AblationArg::Full => Ablation::Full,
            AblationArg::NoPg => Ablation::NoPg,
            AblationArg::NoPa => Ablation::NoPa,
            AblationArg::NoPm => Ablation::NoPm,
            AblationArg::Beta1 => Ablation::BetaOne,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

// ── Shared helpers ───────────────────────────────────────────────────────

fn load_checkpoint(path: &Path, config: &TrainConfig) -> Result<Checkpoint> {
    let ckpt = Checkpoint::load(path, config.dims, AdamHyper::with_lr(config.learning_rate))?;
    let active = config.hash();
    if ckpt.config_hash != active {
        eprintln!(
            "warning: checkpoint was written under config hash {:016x} but the active \
             config hashes to {active:016x}; shapes matched, proceeding",
            ckpt.config_hash
        );
    }
    Ok(ckpt)
}

/// Model parameters from a checkpoint, or freshly initialized from the
/// config seed when no checkpoint is given (a training run's starting
/// point).
fn params_from(ckpt: Option<&PathBuf>, config: &TrainConfig) -> Result<ModelParams> {
    match ckpt {
        Some(path) => Ok(load_checkpoint(path, config)?.params),
        None => Ok(ModelParams::init(config.dims, config.seed)),
    }
}

/// Resolves what to run on: an explicit scene file plus target class, or a
/// task sampled from the corpus split.
fn resolve_task(
    scene_file: Option<&PathBuf>,
    target: Option<&str>,
    scenes: &SceneSourceArgs,
    split: Split,
    seed: u64,
) -> Result<(Corpus, Task)> {
    let mut rng = seeding::rng_for(seed, "cli.task");
    match scene_file {
        Some(path) => {
            let scene = load_scene(path)?;
            let Some(name) = target else {
                return fail("--target CLASS is required with --scene");
            };
            let class = ObjectClass::from_name(name)?;
            let start = sample_start(&scene, class, &mut rng)?;
            let corpus = Corpus::new(vec![scene]);
            Ok((
                corpus,
                Task {
                    scene_index: 0,
                    target: class,
                    start,
                },
            ))
        }
        None => {
            let corpus = scenes.load()?;
            let task = sample_task(&corpus, split, &mut rng)?;
            Ok((corpus, task))
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::GenScenes(args) => gen_scenes(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Rollout(args) => cmd_rollout(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::ExportAttn(args) => cmd_export_attn(args),
        Command::BetaStats(args) => cmd_beta_stats(args),
        Command::ExportView(args) => cmd_export_view(args),
    }
}

// ── gen-scenes ───────────────────────────────────────────────────────────

#[derive(Args)]
struct GenScenesArgs {
    /// Corpus generation seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory to write the scene files into.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Write the 12-scene smoke corpus instead of the full 120 scenes
    /// (ignores --seed; the smoke corpus is fixed).
    #[arg(long)]
    smoke: bool,
}

fn gen_scenes(args: GenScenesArgs) -> Result<()> {
    let corpus = if args.smoke {
        smoke_corpus()
    } else {
        generate_corpus(args.seed)?
    };
    save_corpus(&args.out, &corpus)?;
    println!(
        "wrote {} scene files to {}",
        corpus.scenes.len(),
        args.out.display()
    );
    Ok(())
}

// ── train ────────────────────────────────────────────────────────────────

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    scenes: SceneSourceArgs,
    #[command(flatten)]
    over: OverrideArgs,
    /// Directory for checkpoints, the resolved config, and the log.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let config = args.config.resolve(&args.over)?;
    let corpus = args.scenes.load()?;
    std::fs::create_dir_all(&args.out)?;
    write_text(&args.out.join("config.toml"), &config.to_toml_string())?;

    let mut log = format!(
        "format_version = {CONFIG_FORMAT_VERSION}\nconfig_hash = \"{:016x}\"\n",
        config.hash()
    );
    let outcome = train_observed(&config, &corpus, &mut |record| {
        let line = record.render_line();
        println!("{line}");
        log.push_str(&line);
        log.push('\n');
    })?;
    write_text(&args.out.join("train_log.txt"), &log)?;

    let final_ckpt = Checkpoint {
        params: outcome.final_params.clone(),
        adam: outcome.adam.clone(),
        episode: outcome.episodes,
        config_hash: outcome.config_hash,
    };
    final_ckpt.save(&args.out.join("final.atnv"))?;
    outcome.best_checkpoint().save(&args.out.join("best.atnv"))?;

    println!(
        "trained {} episodes over {} updates{}; best validation success {:.4}",
        outcome.episodes,
        outcome.updates_applied,
        if outcome.stopped_early {
            " (stopped early at the validation target)"
        } else {
            ""
        },
        outcome.best_val_success,
    );
    println!("artifacts in {}", args.out.display());
    Ok(())
}

// ── eval / beta-stats ────────────────────────────────────────────────────

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint to score.
    #[arg(long, value_name = "FILE")]
    ckpt: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    scenes: SceneSourceArgs,
    #[command(flatten)]
    over: OverrideArgs,
    /// Split to evaluate.
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    split: SplitArg,
    /// Episodes per room type.
    #[arg(long, value_name = "N", default_value_t = 50)]
    episodes_per_room: usize,
    /// Also write report.toml into this directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn run_evaluation(args: &EvalArgs) -> Result<evaluator::Evaluation> {
    let config = args.config.resolve(&args.over)?;
    let corpus = args.scenes.load()?;
    let params = load_checkpoint(&args.ckpt, &config)?.params;
    let opts = EvalOptions {
        split: args.split.into(),
        episodes_per_room: args.episodes_per_room,
        seed: args.over.seed.unwrap_or(config.seed),
        rollout: config.rollout(),
        ..EvalOptions::default()
    };
    Ok(evaluator::evaluate(&params, &corpus, &opts)?)
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let eval = run_evaluation(&args)?;
    let report = evaluator::render_report(&eval);
    print!("{report}");
    if let Some(dir) = &args.out {
        write_text(&dir.join("report.toml"), &report)?;
        println!("# report written to {}", dir.join("report.toml").display());
    }
    Ok(())
}

#[derive(Args)]
struct BetaStatsArgs {
    #[command(flatten)]
    eval: EvalArgs,
}

fn cmd_beta_stats(args: BetaStatsArgs) -> Result<()> {
    let eval = run_evaluation(&args.eval)?;
    let table = evaluator::render_beta_stats(&eval);
    print!("{table}");
    if let Some(dir) = &args.eval.out {
        write_text(&dir.join("beta_stats.toml"), &table)?;
        println!(
            "# table written to {}",
            dir.join("beta_stats.toml").display()
        );
    }
    Ok(())
}

// ── rollout ──────────────────────────────────────────────────────────────

#[derive(Args)]
struct RolloutArgs {
    /// Scene file to run in; omitted → a task sampled from the corpus.
    #[arg(long, value_name = "FILE")]
    scene: Option<PathBuf>,
    /// Target class name (requires --scene).
    #[arg(long, value_name = "CLASS", requires = "scene")]
    target: Option<String>,
    /// Checkpoint to drive the policy; omitted → fresh seeded parameters.
    #[arg(long, value_name = "FILE")]
    ckpt: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    scenes: SceneSourceArgs,
    #[command(flatten)]
    over: OverrideArgs,
    /// Corpus split to sample the task from (without --scene).
    #[arg(long, value_enum, default_value_t = SplitArg::Train)]
    split: SplitArg,
    /// Greedy action selection instead of sampling from π.
    #[arg(long)]
    greedy: bool,
    /// Write the trace to this file instead of only stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct TraceDoc {
    format_version: u32,
    scene: String,
    target: String,
    greedy: bool,
    success: bool,
    terminated: bool,
    total_reward: f64,
    step: Vec<TraceStep>,
}

#[derive(Serialize)]
struct TraceStep {
    t: usize,
    x: i32,
    y: i32,
    heading: u16,
    tilt: i8,
    action: String,
    reward: f64,
    value: f64,
    beta: [f64; 3],
    target_visible: bool,
    top: Vec<TopCell>,
}

#[derive(Serialize)]
struct TopCell {
    i: usize,
    j: usize,
    p: f64,
}

/// Highest-probability fused-attention cells, ties broken toward lower
/// flat index so dumps are deterministic.
fn top_cells(p_fused: &crate::tensor::Tensor, n_v: usize, k: usize) -> Vec<TopCell> {
    let mut order: Vec<usize> = (0..p_fused.len()).collect();
    order.sort_by(|&a, &b| {
        p_fused.data()[b]
            .partial_cmp(&p_fused.data()[a])
            .expect("probabilities are finite")
            .then(a.cmp(&b))
    });
    order
        .into_iter()
        .take(k)
        .map(|flat| TopCell {
            i: flat / n_v,
            j: flat % n_v,
            p: p_fused.data()[flat],
        })
        .collect()
}

fn trace_episode(
    scene: &Scene,
    task: &Task,
    outcome: &RolloutOutcome<'_>,
    greedy: bool,
) -> TraceDoc {
    let n_v = crate::observe::N_V;
    TraceDoc {
        format_version: TRACE_FORMAT_VERSION,
        scene: scene.id.clone(),
        target: task.target.name().to_string(),
        greedy,
        success: outcome.success,
        terminated: outcome.terminated,
        total_reward: outcome.total_reward(),
        step: outcome
            .records
            .iter()
            .enumerate()
            .map(|(idx, s)| TraceStep {
                t: idx + 1,
                x: s.pose.x,
                y: s.pose.y,
                heading: s.pose.heading_deg,
                tilt: s.pose.tilt_deg,
                action: s.record.action.name().to_string(),
                reward: s.record.reward,
                value: s.record.value,
                beta: s.record.bundle.beta,
                target_visible: s.target_visible(),
                top: top_cells(&s.record.bundle.p_fused, n_v, ROLLOUT_TOP_K),
            })
            .collect(),
    }
}

fn cmd_rollout(args: RolloutArgs) -> Result<()> {
    let config = args.config.resolve(&args.over)?;
    let seed = args.over.seed.unwrap_or(config.seed);
    let (corpus, task) = resolve_task(
        args.scene.as_ref(),
        args.target.as_deref(),
        &args.scenes,
        args.split.into(),
        seed,
    )?;
    let params = params_from(args.ckpt.as_ref(), &config)?;
    let scene = task.scene(&corpus);
    let cfg = RolloutConfig {
        max_steps: scene.room_type.eval_step_cap(),
        ..config.rollout()
    };
    let mut action_rng = seeding::rng_for(seed, "cli.rollout.actions");
    let mut mode = if args.greedy {
        ActionMode::Greedy
    } else {
        ActionMode::Sample(&mut action_rng)
    };
    let g = Graph::new();
    let vars = params.leaves(&g);
    let outcome = run_episode(&g, &vars, scene, task.target, &task.start, &cfg, &mut mode)?;
    let doc = trace_episode(scene, &task, &outcome, args.greedy);
    let text = toml::to_string_pretty(&doc).expect("trace serializes");
    print!("{text}");
    if let Some(path) = &args.out {
        write_text(path, &text)?;
    }
    Ok(())
}

// ── gradcheck ────────────────────────────────────────────────────────────

#[derive(Args)]
struct GradcheckArgs {
    /// Base seed for the model/input instances.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seeded instances to sweep.
    #[arg(long, default_value_t = 20)]
    instances: usize,
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<()> {
    let report = stack_gradcheck(args.instances, args.seed)?;
    println!(
        "max relative error {:.3e} over {} instances ({} parameter elements each)",
        report.max_rel_err, report.instances, report.elements
    );
    let pass = report.max_rel_err <= GRADCHECK_TOL;
    println!(
        "tolerance {GRADCHECK_TOL:.1e}: {}",
        if pass { "PASS" } else { "FAIL" }
    );
    if !pass {
        return fail(format!(
            "gradient check exceeded tolerance: {:.3e} > {GRADCHECK_TOL:.1e}",
            report.max_rel_err
        ));
    }
    Ok(())
}

// ── export-attn ──────────────────────────────────────────────────────────

#[derive(Args)]
struct ExportAttnArgs {
    /// Scene file to run in; omitted → a task sampled from the corpus.
    #[arg(long, value_name = "FILE")]
    scene: Option<PathBuf>,
    /// Target class name (requires --scene).
    #[arg(long, value_name = "CLASS", requires = "scene")]
    target: Option<String>,
    /// Checkpoint to drive the policy; omitted → fresh seeded parameters.
    #[arg(long, value_name = "FILE")]
    ckpt: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    scenes: SceneSourceArgs,
    #[command(flatten)]
    over: OverrideArgs,
    /// Corpus split to sample the task from (without --scene).
    #[arg(long, value_enum, default_value_t = SplitArg::Train)]
    split: SplitArg,
    /// Directory for the per-step graymaps and the trace document.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Serialize)]
struct AttnTraceDoc {
    format_version: u32,
    scene: String,
    target: String,
    n_v: usize,
    success: bool,
    step: Vec<AttnStep>,
}

#[derive(Serialize)]
struct AttnStep {
    t: usize,
    action: String,
    beta: [f64; 3],
    target_visible: bool,
    p_g: Vec<f64>,
    p_a: Vec<f64>,
    p_m: Vec<f64>,
    p_fused: Vec<f64>,
}

/// 8-bit binary graymap (P5), linearly scaled so the maximum probability
/// maps to 255.
fn pgm_bytes(n: usize, probs: &[f64]) -> Vec<u8> {
    let max = probs.iter().cloned().fold(0.0_f64, f64::max);
    let mut out = format!("P5\n{n} {n}\n255\n").into_bytes();
    out.extend(probs.iter().map(|&p| {
        if max > 0.0 {
            (p / max * 255.0).round() as u8
        } else {
            0
        }
    }));
    out
}

fn cmd_export_attn(args: ExportAttnArgs) -> Result<()> {
    let config = args.config.resolve(&args.over)?;
    let seed = args.over.seed.unwrap_or(config.seed);
    let (corpus, task) = resolve_task(
        args.scene.as_ref(),
        args.target.as_deref(),
        &args.scenes,
        args.split.into(),
        seed,
    )?;
    let params = params_from(args.ckpt.as_ref(), &config)?;
    let scene = task.scene(&corpus);
    let cfg = RolloutConfig {
        max_steps: scene.room_type.eval_step_cap(),
        ..config.rollout()
    };
    let g = Graph::new();
    let vars = params.leaves(&g);
    let outcome = run_episode(
        &g,
        &vars,
        scene,
        task.target,
        &task.start,
        &cfg,
        &mut ActionMode::Greedy,
    )?;

    std::fs::create_dir_all(&args.out)?;
    let n_v = crate::observe::N_V;
    let mut steps = Vec::with_capacity(outcome.records.len());
    for (idx, s) in outcome.records.iter().enumerate() {
        let t = idx + 1;
        let b = &s.record.bundle;
        for (tag, grid) in [
            ("p_g", &b.p_g),
            ("p_a", &b.p_a),
            ("p_m", &b.p_m),
            ("p_fused", &b.p_fused),
        ] {
            let path = args.out.join(format!("step_{t:03}_{tag}.pgm"));
            std::fs::write(&path, pgm_bytes(n_v, grid.data()))?;
        }
        steps.push(AttnStep {
            t,
            action: s.record.action.name().to_string(),
            beta: b.beta,
            target_visible: s.target_visible(),
            p_g: b.p_g.data().to_vec(),
            p_a: b.p_a.data().to_vec(),
            p_m: b.p_m.data().to_vec(),
            p_fused: b.p_fused.data().to_vec(),
        });
    }
    let doc = AttnTraceDoc {
        format_version: TRACE_FORMAT_VERSION,
        scene: scene.id.clone(),
        target: task.target.name().to_string(),
        n_v,
        success: outcome.success,
        step: steps,
    };
    write_text(
        &args.out.join("trace.toml"),
        &toml::to_string_pretty(&doc).expect("trace serializes"),
    )?;
    println!(
        "wrote {} steps x 4 graymaps and trace.toml to {}",
        outcome.records.len(),
        args.out.display()
    );
    Ok(())
}

// ── export-view ──────────────────────────────────────────────────────────

#[derive(Args)]
struct ExportViewArgs {
    /// Scene file to render in.
    #[arg(long, value_name = "FILE")]
    scene: PathBuf,
    #[arg(long, default_value_t = 0)]
    x: i32,
    #[arg(long, default_value_t = 0)]
    y: i32,
    /// Heading in degrees (multiple of 45).
    #[arg(long, default_value_t = 0)]
    heading: u16,
    /// Camera tilt in degrees (-30, 0, or 30).
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    tilt: i8,
    /// Write the dump to this file instead of only stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct ViewDoc {
    format_version: u32,
    scene: String,
    x: i32,
    y: i32,
    heading: u16,
    tilt: i8,
    n_v: usize,
    d_v: usize,
    bin: Vec<ViewBin>,
}

#[derive(Serialize)]
struct ViewBin {
    i: usize,
    j: usize,
    channels: Vec<f64>,
}

fn cmd_export_view(args: ExportViewArgs) -> Result<()> {
    let scene = load_scene(&args.scene)?;
    let pose = AgentPose::new(args.x, args.y, args.heading, args.tilt);
    if !pose.is_valid_in(&scene) {
        return fail(format!(
            "pose ({}, {}, heading {}, tilt {}) is not valid in scene {} \
             (cell must be free, heading a multiple of 45 below 360, tilt -30/0/30)",
            args.x, args.y, args.heading, args.tilt, scene.id
        ));
    }
    let map = render(&scene, &pose);
    let mut bins = Vec::with_capacity(map.n_v * map.n_v);
    for i in 0..map.n_v {
        for j in 0..map.n_v {
            bins.push(ViewBin {
                i,
                j,
                channels: map.bin(i, j).to_vec(),
            });
        }
    }
    let doc = ViewDoc {
        format_version: TRACE_FORMAT_VERSION,
        scene: scene.id.clone(),
        x: args.x,
        y: args.y,
        heading: args.heading,
        tilt: args.tilt,
        n_v: map.n_v,
        d_v: map.d_v,
        bin: bins,
    };
    let text = toml::to_string_pretty(&doc).expect("view serializes");
    print!("{text}");
    if let Some(path) = &args.out {
        write_text(path, &text)?;
    }
    Ok(())
}
