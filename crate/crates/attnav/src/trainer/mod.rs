//! Synchronous multi-worker advantage actor-critic.
//!
//! Each update round, every worker runs one full episode against the same
//! immutable parameter snapshot (sampling its task and actions from a
//! stream derived from the seed and its global episode index, so runs
//! replay bit-identically regardless of thread scheduling). The
//! coordinator averages the per-worker gradients in worker order and
//! applies one adaptive-moment step. Validation passes at a fixed cadence
//! drive model selection (best validation success) and optional early
//! stopping; non-finite rounds are skipped, and three consecutive skips
//! abort the run.

use std::collections::VecDeque;

use crate::gridworld::{sample_task, Corpus, EnvError, Split};
use crate::policy::{nav_loss, ModelParams};
use crate::rollout::{
    episode_parameter_gradients, run_episode, ActionMode, AdaptOutcome, RolloutConfig,
};
use crate::tensor::{Graph, Tensor, TensorError};

mod checkpoint;
pub mod config;
pub mod optim;

pub use checkpoint::{Checkpoint, CHECKPOINT_META_VERSION};
pub use config::{ablation_matrix, Ablation, TrainConfig, CONFIG_FORMAT_VERSION};
pub use optim::{sgd_step, Adam, AdamHyper};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("config error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("training aborted: {0}")]
    Aborted(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// Size of the trailing window behind the success moving average.
const SUCCESS_WINDOW: usize = 100;
/// Consecutive non-finite rounds tolerated before aborting.
const MAX_CONSECUTIVE_SKIPS: u32 = 3;

/// One structured log record per update round.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateRecord {
    /// 1-based round index.
    pub update: u64,
    /// Cumulative training episodes after this round.
    pub episodes: u64,
    /// Mean episode loss across this round's workers.
    pub mean_loss: f64,
    /// Mean undiscounted episode reward across workers.
    pub mean_reward: f64,
    /// Success moving average over the trailing 100 training episodes.
    pub success_ma: f64,
    /// Validation success, on rounds where a validation pass ran.
    pub val_success: Option<f64>,
    /// Round produced a non-finite loss or gradient; no update applied.
    pub skipped: bool,
}

impl UpdateRecord {
    /// One-line key=value rendering (the training-log record format).
    pub fn render_line(&self) -> String {
        let val = match self.val_success {
            Some(v) => format!(" val_success={v:.4}"),
            None => String::new(),
        };
        format!(
            "update={} episodes={} mean_loss={:.6} mean_reward={:.4} success_ma={:.4}{}{}",
            self.update,
            self.episodes,
            self.mean_loss,
            self.mean_reward,
            self.success_ma,
            val,
            if self.skipped { " skipped=true" } else { "" }
        )
    }
}

/// Everything a finished (or early-stopped) run hands back.
#[derive(Debug)]
pub struct TrainOutcome {
    /// Parameters after the last applied update.
    pub final_params: ModelParams,
    /// Parameters of the validation-best snapshot.
    pub best_params: ModelParams,
    pub best_val_success: f64,
    /// Optimizer state after the last applied update.
    pub adam: Adam,
    pub records: Vec<UpdateRecord>,
    pub episodes: u64,
    pub updates_applied: u64,
    pub adapt_applied: u64,
    pub adapt_skipped: u64,
    pub config_hash: u64,
    /// A validation pass reached the configured stop threshold.
    pub stopped_early: bool,
}

impl TrainOutcome {
    /// The checkpoint for the validation-best snapshot. Optimizer state is
    /// the final one (moments are not snapshotted per validation).
    pub fn best_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            params: self.best_params.clone(),
            adam: self.adam.clone(),
            episode: self.episodes,
            config_hash: self.config_hash,
        }
    }
}

struct WorkerResult {
    loss: f64,
    /// One gradient per parameter slot; `None` when the loss or any
    /// gradient came out non-finite.
    grads: Option<Vec<Tensor>>,
    reward: f64,
    success: bool,
    adapt: AdaptOutcome,
}

/// One worker's episode: sample a task, roll it out with sampled actions,
/// back up the episode loss. A non-finite value anywhere in the episode —
/// whether surfaced as an operation error or as a non-finite loss — yields
/// a skip result rather than an error; the coordinator decides whether the
/// run survives.
fn worker_episode(
    config: &TrainConfig,
    rollout: &RolloutConfig,
    corpus: &Corpus,
    params: &ModelParams,
    episode_index: u64,
) -> Result<WorkerResult> {
    match worker_episode_inner(config, rollout, corpus, params, episode_index) {
        Err(TrainError::Tensor(TensorError::NonFinite { .. })) => Ok(WorkerResult {
            loss: f64::NAN,
            grads: None,
            reward: f64::NAN,
            success: false,
            // No adaptation bookkeeping survives a poisoned episode.
            adapt: AdaptOutcome::Disabled,
        }),
        other => other,
    }
}

fn worker_episode_inner(
    config: &TrainConfig,
    rollout: &RolloutConfig,
    corpus: &Corpus,
    params: &ModelParams,
    episode_index: u64,
) -> Result<WorkerResult> {
    let mut rng = crate::seeding::rng_for_indexed(config.seed, "train.episode", episode_index);
    let task = sample_task(corpus, Split::Train, &mut rng)?;
    let scene = task.scene(corpus);
    let g = Graph::new();
    let vars = params.leaves(&g);
    let out = run_episode(
        &g,
        &vars,
        scene,
        task.target,
        &task.start,
        rollout,
        &mut ActionMode::Sample(&mut rng),
    )?;
    let loss_var = nav_loss(
        &out.steps,
        out.bootstrap_value,
        config.gamma,
        config.value_coef,
        config.entropy_coef,
    )?;
    let loss = loss_var.item()?;
    let grads = if loss.is_finite() {
        let grads = episode_parameter_gradients(&g, &vars, out.adapted.as_ref(), loss_var)?;
        if grads.iter().all(Tensor::all_finite) {
            Some(grads)
        } else {
            None
        }
    } else {
        None
    };
    Ok(WorkerResult {
        loss,
        grads,
        reward: out.total_reward(),
        success: out.success,
        adapt: out.adapt,
    })
}

/// Mean of per-worker gradients with a fixed reduction order: sum in
/// worker order, then scale by 1/n.
pub fn average_gradients(per_worker: &[Vec<Tensor>]) -> Result<Vec<Tensor>> {
    let n = per_worker.len();
    if n == 0 {
        return Err(TrainError::Config("no gradients to average".into()));
    }
    let mut acc = per_worker[0].clone();
    for worker in &per_worker[1..] {
        if worker.len() != acc.len() {
            return Err(TrainError::Config("gradient slot count mismatch".into()));
        }
        for (a, g) in acc.iter_mut().zip(worker) {
            a.add_scaled(g, 1.0)?;
        }
    }
    let scale = 1.0 / n as f64;
    for a in &mut acc {
        *a = a.map(|x| x * scale);
    }
    Ok(acc)
}

/// Greedy success rate over `config.eval_episodes` tasks from the
/// validation split (falling back to the train split when the corpus has
/// no validation scenes). The task stream restarts from the same derived
/// seed every call, so successive validations are comparable.
pub fn validation_success(
    params: &ModelParams,
    corpus: &Corpus,
    config: &TrainConfig,
) -> Result<f64> {
    let split = if corpus.indices_in_split(Split::Val).is_empty() {
        Split::Train
    } else {
        Split::Val
    };
    let mut rng = crate::seeding::rng_for(config.seed, "validation");
    let mut successes = 0usize;
    for _ in 0..config.eval_episodes {
        let task = sample_task(corpus, split, &mut rng)?;
        let scene = task.scene(corpus);
        let rollout = RolloutConfig {
            max_steps: scene.room_type.eval_step_cap(),
            ..config.rollout()
        };
        let g = Graph::new();
        let vars = params.leaves(&g);
        let out = run_episode(
            &g,
            &vars,
            scene,
            task.target,
            &task.start,
            &rollout,
            &mut ActionMode::Greedy,
        )?;
        if out.success {
            successes += 1;
        }
    }
    Ok(successes as f64 / config.eval_episodes.max(1) as f64)
}

/// Trains from a fresh seeded initialization.
pub fn train(config: &TrainConfig, corpus: &Corpus) -> Result<TrainOutcome> {
    train_observed(config, corpus, &mut |_| {})
}

/// [`train`] with a per-round observer (for streaming log output).
pub fn train_observed(
    config: &TrainConfig,
    corpus: &Corpus,
    observer: &mut dyn FnMut(&UpdateRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    let params = ModelParams::init(config.dims, config.seed);
    train_from_params(config, corpus, params, observer)
}

/// Training loop over caller-provided initial parameters (also the
/// injection point for fault tests).
pub fn train_from_params(
    config: &TrainConfig,
    corpus: &Corpus,
    mut params: ModelParams,
    observer: &mut dyn FnMut(&UpdateRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    if corpus.indices_in_split(Split::Train).is_empty() {
        return Err(EnvError::EmptySplit(Split::Train).into());
    }
    let config_hash = config.hash();
    let rollout = config.rollout();
    let mut adam = Adam::new(AdamHyper::with_lr(config.learning_rate), &params.named());

    let mut records: Vec<UpdateRecord> = Vec::new();
    let mut successes: VecDeque<bool> = VecDeque::with_capacity(SUCCESS_WINDOW);
    let mut episodes: u64 = 0;
    let mut round: u64 = 0;
    let mut updates_applied: u64 = 0;
    let mut adapt_applied: u64 = 0;
    let mut adapt_skipped: u64 = 0;
    let mut consecutive_skips: u32 = 0;
    let mut best_params = params.clone();
    let mut best_val = f64::NEG_INFINITY;
    let mut last_val_round: Option<u64> = None;
    let mut stopped_early = false;

    while episodes + config.workers as u64 <= config.total_episodes {
        round += 1;
        let base_index = episodes;
        let results: Vec<WorkerResult> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..config.workers)
                .map(|w| {
                    let params = &params;
                    let rollout = &rollout;
                    scope.spawn(move || {
                        worker_episode(config, rollout, corpus, params, base_index + w as u64)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("worker thread panicked"))
                .collect::<Result<Vec<_>>>()
        })?;
        episodes += config.workers as u64;

        for r in &results {
            if successes.len() == SUCCESS_WINDOW {
                successes.pop_front();
            }
            successes.push_back(r.success);
            match r.adapt {
                AdaptOutcome::Applied => adapt_applied += 1,
                AdaptOutcome::SkippedNonFinite => adapt_skipped += 1,
                AdaptOutcome::Disabled | AdaptOutcome::NotReached => {}
            }
        }
        let n = results.len() as f64;
        let mean_loss = results.iter().map(|r| r.loss).sum::<f64>() / n;
        let mean_reward = results.iter().map(|r| r.reward).sum::<f64>() / n;
        let success_ma =
            successes.iter().filter(|&&s| s).count() as f64 / successes.len().max(1) as f64;

        let mut per_worker: Vec<Vec<Tensor>> = Vec::with_capacity(results.len());
        let mut all_finite = true;
        for r in results {
            match r.grads {
                Some(g) => per_worker.push(g),
                None => {
                    all_finite = false;
                    break;
                }
            }
        }
        let skipped = !all_finite;
        if all_finite {
            let averaged = average_gradients(&per_worker)?;
            adam.apply(&mut params.named_mut(), &averaged)?;
            updates_applied += 1;
            consecutive_skips = 0;
        } else {
            consecutive_skips += 1;
            if consecutive_skips >= MAX_CONSECUTIVE_SKIPS {
                return Err(TrainError::Aborted(format!(
                    "{MAX_CONSECUTIVE_SKIPS} consecutive non-finite rounds \
                     (last at round {round}, episode {episodes})"
                )));
            }
        }

        let val_success = if config.eval_cadence_updates > 0
            && round.is_multiple_of(config.eval_cadence_updates)
        {
            let v = validation_success(&params, corpus, config)?;
            last_val_round = Some(round);
            if v > best_val {
                best_val = v;
                best_params = params.clone();
            }
            if config.stop_at_val_success.is_some_and(|s| v >= s) {
                stopped_early = true;
            }
            Some(v)
        } else {
            None
        };

        let record = UpdateRecord {
            update: round,
            episodes,
            mean_loss,
            mean_reward,
            success_ma,
            val_success,
            skipped,
        };
        observer(&record);
        records.push(record);
        if stopped_early {
            break;
        }
    }

    // Close with a validation pass unless the final round already ran one.
    if last_val_round != Some(round) {
        let v = validation_success(&params, corpus, config)?;
        if v > best_val {
            best_val = v;
            best_params = params.clone();
        }
    }

    Ok(TrainOutcome {
        final_params: params,
        best_params,
        best_val_success: best_val,
        adam,
        records,
        episodes,
        updates_applied,
        adapt_applied,
        adapt_skipped,
        config_hash,
        stopped_early,
    })
}
