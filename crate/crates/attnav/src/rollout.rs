//! Episode driver shared by training and evaluation.
//!
//! One episode = one tape: every policy step of the episode lands on the
//! same graph, so backing up from the episode loss propagates through the
//! recurrent state across all steps. Training samples actions and keeps
//! the tape for the gradient pass; evaluation picks greedily and drops the
//! tape — same code path, different action mode.
//!
//! Mid-episode adaptation: once the configured prefix length is reached,
//! the self-supervised interaction loss over the prefix's action
//! distributions is backed up and a single plain-gradient step produces
//! updated parameters that drive the remainder of the episode. The update
//! enters the tape as fresh leaves, so the outer loss does not
//! differentiate through the inner step (first-order semantics); callers
//! combine gradients from both parameter sets via
//! [`episode_parameter_gradients`].

use rand_chacha::ChaCha8Rng;

use crate::attention::FusionConfig;
use crate::gridworld::{step, AgentPose, ObjectClass, Scene};
use crate::observe::{render, target_embedding, target_visible_mask};
use crate::policy::{
    adapt, entropy_of, greedy_action, interaction_loss, log_prob_of, sample_action, ModelVars,
    PolicyState, StepRecord, TapeStep,
};
use crate::tensor::{Graph, Result, Tensor, Var};

/// How the driver turns an action distribution into an action.
pub enum ActionMode<'r> {
    /// Draw from π (training). The stream is caller-owned so runs are
    /// reproducible.
    Sample(&'r mut ChaCha8Rng),
    /// argmax π with lowest-ordinal tie-breaking (evaluation).
    Greedy,
}

/// Knobs the episode driver needs (a slice of the full training config).
#[derive(Debug, Clone, Copy)]
pub struct RolloutConfig {
    pub fusion: FusionConfig,
    /// Apply the inner adaptation step at the prefix boundary.
    pub use_adaptation: bool,
    /// Prefix length k̂ triggering adaptation.
    pub k_hat: usize,
    /// Plain-gradient step size of the inner update.
    pub inner_lr: f64,
    /// Entropy coefficient inside the interaction loss.
    pub entropy_coef_int: f64,
    /// Hard step cap; reaching it truncates (bootstrapped), it does not
    /// terminate.
    pub max_steps: usize,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            fusion: FusionConfig::default(),
            use_adaptation: false,
            k_hat: 6,
            inner_lr: 1e-2,
            entropy_coef_int: 0.01,
            max_steps: 30,
        }
    }
}

/// What happened to the in-episode adaptation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdaptOutcome {
    /// Adaptation switched off in the config.
    Disabled,
    /// Episode ended before the prefix boundary.
    NotReached,
    /// Inner step applied; the episode suffix ran on adapted parameters.
    Applied,
    /// Inner gradient was non-finite; the step was skipped and the
    /// original parameters stayed in charge (callers should log this).
    SkippedNonFinite,
}

/// Plain-value trace of one executed step.
#[derive(Debug, Clone)]
pub struct RolloutStep {
    /// Pose the observation was rendered from (before the action).
    pub pose: AgentPose,
    /// Pose after the action.
    pub pose_after: AgentPose,
    /// Action, log-prob, value, reward, entropy, attention snapshot.
    pub record: StepRecord,
    /// Per-window flag: a target instance is visible through that window.
    pub target_visible_bins: Vec<bool>,
    /// Fused attention mass on target-visible windows.
    pub target_mass: f64,
}

impl RolloutStep {
    /// Whether any target instance was visible from `pose`.
    pub fn target_visible(&self) -> bool {
        self.target_visible_bins.iter().any(|&b| b)
    }
}

/// Everything one episode leaves behind: tape handles for the loss pass
/// plus a plain-value trace for logging and metrics.
pub struct RolloutOutcome<'g> {
    /// Per-step tape handles, in execution order (feeds the episode loss).
    pub steps: Vec<TapeStep<'g>>,
    /// Per-step plain-value records, same order.
    pub records: Vec<RolloutStep>,
    /// Episode ended with a successful `Done`.
    pub success: bool,
    /// Episode ended by `Done` (false = truncated at the step cap).
    pub terminated: bool,
    /// Critic value at the post-truncation state (0 when terminated),
    /// read off a detached extra forward pass with the active parameters.
    pub bootstrap_value: f64,
    /// Pose after the final step.
    pub final_pose: AgentPose,
    /// Adaptation disposition.
    pub adapt: AdaptOutcome,
    /// Parameters the episode suffix ran on, when adaptation applied.
    pub adapted: Option<ModelVars<'g>>,
}

impl RolloutOutcome<'_> {
    /// Total undiscounted episode reward.
    pub fn total_reward(&self) -> f64 {
        self.records.iter().map(|r| r.record.reward).sum()
    }
}

/// Runs one episode of at most `cfg.max_steps` actions from `start`,
/// keeping every step on the tape `g`.
pub fn run_episode<'g>(
    g: &'g Graph,
    vars: &ModelVars<'g>,
    scene: &Scene,
    target: ObjectClass,
    start: &AgentPose,
    cfg: &RolloutConfig,
    mode: &mut ActionMode<'_>,
) -> Result<RolloutOutcome<'g>> {
    let d_m = vars.policy.lstm_w_hh.shape()[1];
    let mut state = crate::policy::initial_state(d_m).constants(g);
    let u_g = g.constant(target_embedding(target).u_g.clone());

    let mut active = *vars;
    let mut adapted: Option<ModelVars<'g>> = None;
    let mut adapt_outcome = if cfg.use_adaptation {
        AdaptOutcome::NotReached
    } else {
        AdaptOutcome::Disabled
    };

    let mut pose = *start;
    let mut steps: Vec<TapeStep<'g>> = Vec::new();
    let mut records: Vec<RolloutStep> = Vec::new();
    let mut pis: Vec<Var<'g>> = Vec::new();

    while steps.len() < cfg.max_steps {
        let observation = render(scene, &pose);
        let v = g.constant(observation.values().clone());
        let flow = crate::policy::policy_step(g, &active, v, u_g, &state, cfg.fusion)?;
        let pi = flow.pi.value();
        let action = match mode {
            ActionMode::Sample(rng) => sample_action(&pi, rng),
            ActionMode::Greedy => greedy_action(&pi),
        };
        let outcome = step(scene, target, &pose, action);
        let record = StepRecord::from_flow(&flow, action, outcome.reward)?;
        let visible_bins = target_visible_mask(scene, &pose, target);
        let target_mass = record
            .bundle
            .p_fused
            .data()
            .iter()
            .zip(&visible_bins)
            .filter(|(_, &vis)| vis)
            .map(|(&p, _)| p)
            .sum();
        steps.push(TapeStep {
            pi: flow.pi,
            log_prob: log_prob_of(flow.pi, action)?,
            value: flow.value,
            entropy: entropy_of(flow.pi)?,
            reward: outcome.reward,
        });
        pis.push(flow.pi);
        records.push(RolloutStep {
            pose,
            pose_after: outcome.pose,
            record,
            target_visible_bins: visible_bins,
            target_mass,
        });
        state = flow.state;
        pose = outcome.pose;

        if outcome.done {
            return Ok(RolloutOutcome {
                steps,
                records,
                success: outcome.success,
                terminated: true,
                bootstrap_value: 0.0,
                final_pose: pose,
                adapt: adapt_outcome,
                adapted,
            });
        }

        if cfg.use_adaptation && adapted.is_none() && steps.len() == cfg.k_hat {
            let inner = interaction_loss(&pis, cfg.k_hat, cfg.entropy_coef_int)?;
            match adapt(g, &active, inner, cfg.inner_lr)? {
                Some(next) => {
                    active = next;
                    adapted = Some(next);
                    adapt_outcome = AdaptOutcome::Applied;
                }
                None => adapt_outcome = AdaptOutcome::SkippedNonFinite,
            }
        }
    }

    // Truncated: one detached forward at the post-cap state provides the
    // bootstrap value (no gradient flows through it — only the number is
    // read off).
    let observation = render(scene, &pose);
    let v = g.constant(observation.values().clone());
    let flow = crate::policy::policy_step(g, &active, v, u_g, &state, cfg.fusion)?;
    Ok(RolloutOutcome {
        steps,
        records,
        success: false,
        terminated: false,
        bootstrap_value: flow.value.item()?,
        final_pose: pose,
        adapt: adapt_outcome,
        adapted,
    })
}

/// Gradients of `loss` w.r.t. the episode's parameters, one tensor per
/// parameter in [`ModelVars::ordered`] order. When the episode adapted,
/// the suffix steps deposited their gradients on the adapted leaves; the
/// first-order rule credits those to the original parameters one-for-one,
/// so both contributions are summed.
pub fn episode_parameter_gradients(
    g: &Graph,
    vars: &ModelVars<'_>,
    adapted: Option<&ModelVars<'_>>,
    loss: Var<'_>,
) -> Result<Vec<Tensor>> {
    let grads = g.backward(loss)?;
    let adapted_vars = adapted.map(|a| a.ordered());
    let mut out = Vec::with_capacity(17);
    for (slot, var) in vars.ordered().into_iter().enumerate() {
        let mut grad = grads.wrt(var);
        if let Some(adapted_vars) = &adapted_vars {
            grad.add_scaled(&grads.wrt(adapted_vars[slot]), 1.0)?;
        }
        out.push(grad);
    }
    Ok(out)
}

/// Evaluation-style state carry is internal to [`run_episode`]; this
/// re-export keeps the plain-value state type visible next to the driver.
pub type CarriedState = PolicyState;
