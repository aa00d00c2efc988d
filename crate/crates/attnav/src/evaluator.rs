//! Greedy evaluation: success/SPL metrics, fusion-weight statistics, and a
//! structured text report.
//!
//! [`evaluate`] runs a fixed number of greedy episodes per room type in a
//! split, with the task stream derived from the seed alone so repeated runs
//! score identical episodes. Metric functions are pure over
//! [`EpisodeResult`] slices, so they can be exercised on synthetic fixtures
//! independently of any rollout.

use serde::Serialize;
use thiserror::Error;

use crate::gridworld::{
    pose_distance, sample_task_in_room, shortest_path_len, Corpus, EnvError, RoomType, Split, Task,
};
use crate::policy::ModelParams;
use crate::rollout::{run_episode, ActionMode, RolloutConfig};
use crate::seeding;
use crate::tensor::{Graph, TensorError};

/// Episodes whose optimal path is at least this long form the hard subset.
pub const HARD_OPTIMAL_LEN: usize = 5;
/// Fusion-weight statistics are tabulated for steps 1..=this cap.
pub const BETA_STEP_CAP: usize = 37;
/// Version stamp carried by rendered reports.
pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no episodes to aggregate")]
    Empty,
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, EvalError>;

// ── Episode records ──────────────────────────────────────────────────────

/// Per-step evaluation trace: fusion weights, how much fused attention sat
/// on windows showing the target, and whether the target was visible.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalStep {
    /// Raw fusion weights (goal, action, memory); disabled cues read 0.
    pub beta: [f64; 3],
    /// Fused attention mass on target-visible windows.
    pub target_mass: f64,
    /// A target instance was visible somewhere in the frame.
    pub target_visible: bool,
}

/// One scored episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub task: Task,
    pub room_type: RoomType,
    /// Ended with a successful `Done`.
    pub success: bool,
    /// Actions taken, excluding the terminal `Done` when one was issued.
    pub path_length: usize,
    /// Minimum movement actions from the start to any success pose.
    pub optimal_length: usize,
    /// Per-step trace, in execution order (includes the `Done` step).
    pub steps: Vec<EvalStep>,
}

// ── Metrics ──────────────────────────────────────────────────────────────

/// One episode's contribution to SPL: success-weighted ratio of optimal to
/// realized path length. A trivially-optimal start (optimal length 0) with
/// a successful end scores 1.
fn spl_term(r: &EpisodeResult) -> f64 {
    if !r.success {
        return 0.0;
    }
    if r.optimal_length == 0 {
        return 1.0;
    }
    r.optimal_length as f64 / r.path_length.max(r.optimal_length) as f64
}

/// Success weighted by path length: `(1/N) Σ Sᵢ · Lᵢ / max(Pᵢ, Lᵢ)`.
/// Errors on an empty slice (the mean is undefined, never silently 0).
pub fn spl(results: &[EpisodeResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(results.iter().map(spl_term).sum::<f64>() / results.len() as f64)
}

/// Fraction of episodes ending in a successful `Done`. Errors on an empty
/// slice.
pub fn success_rate(results: &[EpisodeResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(results.iter().filter(|r| r.success).count() as f64 / results.len() as f64)
}

/// Episodes whose optimal path length is ≥ [`HARD_OPTIMAL_LEN`].
pub fn hard_subset(results: &[EpisodeResult]) -> Vec<EpisodeResult> {
    results
        .iter()
        .filter(|r| r.optimal_length >= HARD_OPTIMAL_LEN)
        .cloned()
        .collect()
}

/// Success/SPL over one pool of episodes plus its hard subset. Hard-subset
/// metrics are `None` (not 0) when the subset is empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScopeMetrics {
    pub episodes: usize,
    pub spl: f64,
    pub success: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spl_hard: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub success_hard: Option<f64>,
    pub hard_episodes: usize,
}

fn scope_metrics(results: &[EpisodeResult]) -> Result<ScopeMetrics> {
    let hard = hard_subset(results);
    Ok(ScopeMetrics {
        episodes: results.len(),
        spl: spl(results)?,
        success: success_rate(results)?,
        spl_hard: if hard.is_empty() {
            None
        } else {
            Some(spl(&hard)?)
        },
        success_hard: if hard.is_empty() {
            None
        } else {
            Some(success_rate(&hard)?)
        },
        hard_episodes: hard.len(),
    })
}

/// Overall metrics plus a per-room breakdown (rooms in canonical order,
/// only those present in the results).
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub overall: ScopeMetrics,
    pub per_room: Vec<(RoomType, ScopeMetrics)>,
}

/// Aggregates raw episode results into overall and per-room metrics.
pub fn aggregate(results: &[EpisodeResult]) -> Result<Metrics> {
    let overall = scope_metrics(results)?;
    let mut per_room = Vec::new();
    for room in RoomType::ALL {
        let pool: Vec<EpisodeResult> = results
            .iter()
            .filter(|r| r.room_type == room)
            .cloned()
            .collect();
        if !pool.is_empty() {
            per_room.push((room, scope_metrics(&pool)?));
        }
    }
    Ok(Metrics { overall, per_room })
}

// ── Fusion-weight statistics ─────────────────────────────────────────────

/// Mean fusion-weight shares at one step index across episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaRow {
    /// 1-based step index.
    pub t: usize,
    /// Episodes whose trace reaches step `t`.
    pub episodes: usize,
    /// Mean of `|βₓ| / Σ|βᵢ|` per cue (goal, action, memory); `None` when
    /// no episode reaches step `t`. An all-zero triple contributes equal
    /// thirds (no cue dominated).
    pub shares: Option<[f64; 3]>,
}

/// Per-step mean absolute fusion-weight shares for steps `1..=t_cap`.
pub fn beta_statistics(results: &[EpisodeResult], t_cap: usize) -> Vec<BetaRow> {
    (1..=t_cap)
        .map(|t| {
            let mut n = 0usize;
            let mut acc = [0.0f64; 3];
            for r in results {
                let Some(step) = r.steps.get(t - 1) else {
                    continue;
                };
                n += 1;
                let abs = step.beta.map(f64::abs);
                let total: f64 = abs.iter().sum();
                if total == 0.0 {
                    for a in &mut acc {
                        *a += 1.0 / 3.0;
                    }
                } else {
                    for (a, v) in acc.iter_mut().zip(abs) {
                        *a += v / total;
                    }
                }
            }
            BetaRow {
                t,
                episodes: n,
                shares: (n > 0).then(|| acc.map(|a| a / n as f64)),
            }
        })
        .collect()
}

/// Fraction of all evaluation steps where a target instance was visible.
/// Errors when there are no steps (the fraction is undefined).
pub fn target_detection_rate(results: &[EpisodeResult]) -> Result<f64> {
    let total: usize = results.iter().map(|r| r.steps.len()).sum();
    if total == 0 {
        return Err(EvalError::Empty);
    }
    let visible = results
        .iter()
        .flat_map(|r| &r.steps)
        .filter(|s| s.target_visible)
        .count();
    Ok(visible as f64 / total as f64)
}

// ── Evaluation driver ────────────────────────────────────────────────────

/// What to evaluate and how many episodes to score.
#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub split: Split,
    /// Episodes scored per room type present in the split.
    pub episodes_per_room: usize,
    /// Seeds the task stream (greedy rollouts add no randomness of their
    /// own, so this pins the whole evaluation).
    pub seed: u64,
    /// Fusion flags and adaptation knobs. `max_steps` is overridden with
    /// the per-room evaluation cap.
    pub rollout: RolloutConfig,
    /// Step range of the fusion-weight table.
    pub beta_step_cap: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            split: Split::Test,
            episodes_per_room: 50,
            seed: 0,
            rollout: RolloutConfig::default(),
            beta_step_cap: BETA_STEP_CAP,
        }
    }
}

/// Everything one evaluation produces: raw per-episode results plus the
/// aggregates the report prints.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub split: Split,
    pub episodes_per_room: usize,
    pub results: Vec<EpisodeResult>,
    pub metrics: Metrics,
    pub beta: Vec<BetaRow>,
    pub target_detection_rate: f64,
}

/// Scores `episodes_per_room` greedy episodes per room type in the split.
/// Tasks come from a seed-derived stream; repeated calls with equal options
/// and parameters produce identical results.
pub fn evaluate(params: &ModelParams, corpus: &Corpus, opts: &EvalOptions) -> Result<Evaluation> {
    if opts.episodes_per_room == 0 {
        return Err(EvalError::Empty);
    }
    let rooms = corpus.room_types_in_split(opts.split);
    if rooms.is_empty() {
        return Err(EvalError::Env(EnvError::EmptySplit(opts.split)));
    }
    let mut rng = seeding::rng_for(opts.seed, "eval.tasks");
    let mut results = Vec::with_capacity(rooms.len() * opts.episodes_per_room);
    for &room in &rooms {
        for _ in 0..opts.episodes_per_room {
            let task = sample_task_in_room(corpus, opts.split, room, &mut rng)?;
            results.push(score_episode(params, corpus, opts, room, task)?);
        }
    }
    let metrics = aggregate(&results)?;
    let beta = beta_statistics(&results, opts.beta_step_cap);
    let target_detection_rate = target_detection_rate(&results)?;
    Ok(Evaluation {
        split: opts.split,
        episodes_per_room: opts.episodes_per_room,
        results,
        metrics,
        beta,
        target_detection_rate,
    })
}

/// Runs one greedy episode on a throwaway tape and reduces it to an
/// [`EpisodeResult`], checking the path-length invariants.
fn score_episode(
    params: &ModelParams,
    corpus: &Corpus,
    opts: &EvalOptions,
    room: RoomType,
    task: Task,
) -> Result<EpisodeResult> {
    let scene = &corpus.scenes[task.scene_index];
    let cfg = RolloutConfig {
        max_steps: scene.room_type.eval_step_cap(),
        ..opts.rollout
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
    let done_actions = usize::from(outcome.terminated);
    let path_length = outcome.records.len() - done_actions;
    let optimal_length =
        shortest_path_len(scene, task.target, &task.start).expect("sampled tasks are solvable");
    if outcome.success {
        let reach = pose_distance(scene, &task.start, &outcome.final_pose)
            .expect("terminal pose was reached, so it is reachable");
        assert!(
            path_length >= reach,
            "realized path ({path_length}) shorter than the minimum to its own \
             terminal pose ({reach})"
        );
    }
    let steps = outcome
        .records
        .iter()
        .map(|s| EvalStep {
            beta: s.record.bundle.beta,
            target_mass: s.target_mass,
            target_visible: s.target_visible(),
        })
        .collect();
    let result = EpisodeResult {
        task,
        room_type: room,
        success: outcome.success,
        path_length,
        optimal_length,
        steps,
    };
    debug_assert!(spl_term(&result) <= 1.0 + 1e-12);
    Ok(result)
}

// ── Report ───────────────────────────────────────────────────────────────

#[derive(Serialize)]
struct ReportDoc {
    format_version: u32,
    split: String,
    episodes: usize,
    episodes_per_room: usize,
    headline: HeadlineSection,
    room: Vec<RoomSection>,
    beta_statistics: Vec<BetaRowSection>,
}

#[derive(Serialize)]
struct HeadlineSection {
    spl: f64,
    success: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    spl_hard: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    success_hard: Option<f64>,
    hard_episodes: usize,
    target_detection_rate: f64,
}

#[derive(Serialize)]
struct RoomSection {
    room: String,
    #[serde(flatten)]
    metrics: ScopeMetrics,
}

#[derive(Serialize)]
struct BetaRowSection {
    t: usize,
    episodes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    goal: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    action: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    memory: Option<f64>,
}

impl BetaRowSection {
    fn from_row(row: &BetaRow) -> Self {
        Self {
            t: row.t,
            episodes: row.episodes,
            goal: row.shares.map(|s| s[0]),
            action: row.shares.map(|s| s[1]),
            memory: row.shares.map(|s| s[2]),
        }
    }
}

#[derive(Serialize)]
struct BetaStatsDoc {
    format_version: u32,
    split: String,
    episodes: usize,
    episodes_per_room: usize,
    beta_statistics: Vec<BetaRowSection>,
}

/// Renders just the per-step fusion-weight table as a versioned TOML
/// document (the `beta-stats` artifact).
pub fn render_beta_stats(eval: &Evaluation) -> String {
    let doc = BetaStatsDoc {
        format_version: REPORT_FORMAT_VERSION,
        split: format!("{:?}", eval.split).to_lowercase(),
        episodes: eval.metrics.overall.episodes,
        episodes_per_room: eval.episodes_per_room,
        beta_statistics: eval.beta.iter().map(BetaRowSection::from_row).collect(),
    };
    toml::to_string_pretty(&doc).expect("beta table serialization cannot fail")
}

/// Renders an evaluation as a versioned TOML document: headline metrics,
/// a per-room table (SPL, success, then the hard-subset pair — missing
/// keys mark undefined hard metrics, never zeros), the per-step
/// fusion-weight table, and the target detection rate.
pub fn render_report(eval: &Evaluation) -> String {
    let o = &eval.metrics.overall;
    let doc = ReportDoc {
        format_version: REPORT_FORMAT_VERSION,
        split: format!("{:?}", eval.split).to_lowercase(),
        episodes: o.episodes,
        episodes_per_room: eval.episodes_per_room,
        headline: HeadlineSection {
            spl: o.spl,
            success: o.success,
            spl_hard: o.spl_hard,
            success_hard: o.success_hard,
            hard_episodes: o.hard_episodes,
            target_detection_rate: eval.target_detection_rate,
        },
        room: eval
            .metrics
            .per_room
            .iter()
            .map(|(room, m)| RoomSection {
                room: room.name().to_string(),
                metrics: m.clone(),
            })
            .collect(),
        beta_statistics: eval.beta.iter().map(BetaRowSection::from_row).collect(),
    };
    toml::to_string_pretty(&doc).expect("report serialization cannot fail")
}
