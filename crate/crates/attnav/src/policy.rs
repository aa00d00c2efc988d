//! Recurrent actor-critic over the attended embedding.
//!
//! Each step: attend over the feature grid, reduce every sub-window to
//! `d_p` channels, flatten, concatenate the target embedding and previous
//! action distribution, feed one LSTM cell, and read a 6-way action
//! distribution (actor) and a value (critic) off the hidden state. The
//! hidden state doubles as the memory cue and the action distribution as
//! the next step's action cue, so recurrence flows through attention too.
//!
//! Also here: the navigation loss (advantage actor-critic), a
//! self-supervised interaction loss on episode prefixes, and `adapt` — a
//! first-order inner gradient step executed mid-episode on the live tape.

use rand::Rng;

use crate::attention::{
    full_attention, AttentionBundle, AttentionDims, AttentionFlow, AttentionParams, AttentionVars,
    FusionConfig,
};
use crate::gridworld::Action;
use crate::tensor::{affine, concat, linear_rows, Graph, Result, Tensor, TensorError, Var};

/// Floor inside `ln` on probabilities (entropy and log-prob terms).
pub const PROB_EPS: f64 = 1e-12;

/// Dimensions of the full model: the attention stack plus the policy's
/// per-window reduction width and LSTM input width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub attn: AttentionDims,
    /// Channels each sub-window is reduced to before flattening.
    pub d_p: usize,
    /// LSTM input width (output of the input affine).
    pub d_in: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            attn: AttentionDims::default(),
            d_p: 16,
            d_in: 128,
        }
    }
}

impl ModelDims {
    /// Length of the flattened input to the input affine.
    pub fn concat_len(&self) -> usize {
        self.attn.n_v * self.attn.n_v * self.d_p + self.attn.d_g + self.attn.d_a
    }
}

/// Trainable policy parameters (the attention stack lives alongside in
/// [`ModelParams`]).
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub dims: ModelDims,
    pub reduce_w: Tensor, // [d_p, d_v]
    pub reduce_b: Tensor, // [d_p]
    pub input_w: Tensor,  // [d_in, n_v²·d_p + d_g + d_a]
    pub input_b: Tensor,  // [d_in]
    pub lstm_w_ih: Tensor, // [4·d_m, d_in]
    pub lstm_w_hh: Tensor, // [4·d_m, d_m]
    pub lstm_b: Tensor,    // [4·d_m]
    pub actor_w: Tensor,   // [6, d_m]
    pub actor_b: Tensor,   // [6]
    pub critic_w: Tensor,  // [1, d_m]
    pub critic_b: Tensor,  // [1]
}

impl PolicyParams {
    /// Fan-in uniform weights, zero biases with the forget gate opened
    /// (+1), and zero actor/critic heads so the starting policy is exactly
    /// uniform with value 0.
    pub fn init(dims: ModelDims, seed: u64) -> Self {
        let stream = |tag: &str| crate::seeding::rng_for(seed, tag);
        let d_m = dims.attn.d_m;
        let mut lstm_b = Tensor::zeros(&[4 * d_m]);
        for k in d_m..2 * d_m {
            lstm_b.data_mut()[k] = 1.0;
        }
        Self {
            reduce_w: crate::attention::fan_in_init(
                &mut stream("policy.reduce.W"),
                dims.d_p,
                dims.attn.d_v,
            ),
            reduce_b: Tensor::zeros(&[dims.d_p]),
            input_w: crate::attention::fan_in_init(
                &mut stream("policy.input.W"),
                dims.d_in,
                dims.concat_len(),
            ),
            input_b: Tensor::zeros(&[dims.d_in]),
            lstm_w_ih: crate::attention::fan_in_init(
                &mut stream("policy.lstm.W_ih"),
                4 * d_m,
                dims.d_in,
            ),
            lstm_w_hh: crate::attention::fan_in_init(
                &mut stream("policy.lstm.W_hh"),
                4 * d_m,
                d_m,
            ),
            lstm_b,
            actor_w: Tensor::zeros(&[Action::ALL.len(), d_m]),
            actor_b: Tensor::zeros(&[Action::ALL.len()]),
            critic_w: Tensor::zeros(&[1, d_m]),
            critic_b: Tensor::zeros(&[1]),
            dims,
        }
    }

    pub fn leaves<'g>(&self, g: &'g Graph) -> PolicyVars<'g> {
        PolicyVars {
            reduce_w: g.leaf(self.reduce_w.clone()),
            reduce_b: g.leaf(self.reduce_b.clone()),
            input_w: g.leaf(self.input_w.clone()),
            input_b: g.leaf(self.input_b.clone()),
            lstm_w_ih: g.leaf(self.lstm_w_ih.clone()),
            lstm_w_hh: g.leaf(self.lstm_w_hh.clone()),
            lstm_b: g.leaf(self.lstm_b.clone()),
            actor_w: g.leaf(self.actor_w.clone()),
            actor_b: g.leaf(self.actor_b.clone()),
            critic_w: g.leaf(self.critic_w.clone()),
            critic_b: g.leaf(self.critic_b.clone()),
        }
    }

    pub fn named(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("policy.reduce.W", &self.reduce_w),
            ("policy.reduce.b", &self.reduce_b),
            ("policy.input.W", &self.input_w),
            ("policy.input.b", &self.input_b),
            ("policy.lstm.W_ih", &self.lstm_w_ih),
            ("policy.lstm.W_hh", &self.lstm_w_hh),
            ("policy.lstm.b", &self.lstm_b),
            ("policy.actor.W", &self.actor_w),
            ("policy.actor.b", &self.actor_b),
            ("policy.critic.W", &self.critic_w),
            ("policy.critic.b", &self.critic_b),
        ]
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![
            ("policy.reduce.W", &mut self.reduce_w),
            ("policy.reduce.b", &mut self.reduce_b),
            ("policy.input.W", &mut self.input_w),
            ("policy.input.b", &mut self.input_b),
            ("policy.lstm.W_ih", &mut self.lstm_w_ih),
            ("policy.lstm.W_hh", &mut self.lstm_w_hh),
            ("policy.lstm.b", &mut self.lstm_b),
            ("policy.actor.W", &mut self.actor_w),
            ("policy.actor.b", &mut self.actor_b),
            ("policy.critic.W", &mut self.critic_w),
            ("policy.critic.b", &mut self.critic_b),
        ]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PolicyVars<'g> {
    pub reduce_w: Var<'g>,
    pub reduce_b: Var<'g>,
    pub input_w: Var<'g>,
    pub input_b: Var<'g>,
    pub lstm_w_ih: Var<'g>,
    pub lstm_w_hh: Var<'g>,
    pub lstm_b: Var<'g>,
    pub actor_w: Var<'g>,
    pub actor_b: Var<'g>,
    pub critic_w: Var<'g>,
    pub critic_b: Var<'g>,
}

impl<'g> PolicyVars<'g> {
    pub fn ordered(&self) -> [Var<'g>; 11] {
        [
            self.reduce_w,
            self.reduce_b,
            self.input_w,
            self.input_b,
            self.lstm_w_ih,
            self.lstm_w_hh,
            self.lstm_b,
            self.actor_w,
            self.actor_b,
            self.critic_w,
            self.critic_b,
        ]
    }
}

/// Attention + policy parameters: the complete trainable model θ.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub attn: AttentionParams,
    pub policy: PolicyParams,
}

impl ModelParams {
    pub fn init(dims: ModelDims, seed: u64) -> Self {
        Self {
            attn: AttentionParams::init(dims.attn, seed),
            policy: PolicyParams::init(dims, seed),
        }
    }

    pub fn dims(&self) -> ModelDims {
        self.policy.dims
    }

    pub fn leaves<'g>(&self, g: &'g Graph) -> ModelVars<'g> {
        ModelVars {
            attn: self.attn.leaves(g),
            policy: self.policy.leaves(g),
        }
    }

    /// Checkpoint/optimizer ordering: attention block then policy block.
    pub fn named(&self) -> Vec<(&'static str, &Tensor)> {
        let mut out = self.attn.named();
        out.extend(self.policy.named());
        out
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        let mut out = self.attn.named_mut();
        out.extend(self.policy.named_mut());
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ModelVars<'g> {
    pub attn: AttentionVars<'g>,
    pub policy: PolicyVars<'g>,
}

impl<'g> ModelVars<'g> {
    /// Same order as [`ModelParams::named`].
    pub fn ordered(&self) -> Vec<Var<'g>> {
        let mut out: Vec<Var<'g>> = self.attn.ordered().to_vec();
        out.extend(self.policy.ordered());
        out
    }

    /// Inverse of [`ModelVars::ordered`]: rebuilds the handle struct from
    /// 17 vars in canonical order.
    pub fn from_ordered(vars: &[Var<'g>]) -> Self {
        assert_eq!(vars.len(), 17, "expected 17 parameter slots");
        ModelVars {
            attn: AttentionVars {
                w_v: vars[0],
                w_g: vars[1],
                w_a: vars[2],
                w_m: vars[3],
                beta_w: vars[4],
                beta_b: vars[5],
            },
            policy: PolicyVars {
                reduce_w: vars[6],
                reduce_b: vars[7],
                input_w: vars[8],
                input_b: vars[9],
                lstm_w_ih: vars[10],
                lstm_w_hh: vars[11],
                lstm_b: vars[12],
                actor_w: vars[13],
                actor_b: vars[14],
                critic_w: vars[15],
                critic_b: vars[16],
            },
        }
    }
}

/// Recurrent carry between steps: LSTM state plus the previous action
/// distribution (h is the memory cue, u_a_prev the action cue).
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyState {
    pub h: Tensor,
    pub c: Tensor,
    pub u_a_prev: Tensor,
}

/// Fresh episode state: zero LSTM state, uniform previous-action
/// distribution.
pub fn initial_state(d_m: usize) -> PolicyState {
    let n = Action::ALL.len();
    PolicyState {
        h: Tensor::zeros(&[d_m]),
        c: Tensor::zeros(&[d_m]),
        u_a_prev: Tensor::vector(vec![1.0 / n as f64; n]),
    }
}

/// The recurrent carry as tape nodes.
#[derive(Debug, Clone, Copy)]
pub struct StateVars<'g> {
    pub h: Var<'g>,
    pub c: Var<'g>,
    pub u_a_prev: Var<'g>,
}

impl PolicyState {
    /// Enters the state onto a tape as non-differentiable constants (the
    /// episode-boundary carry is not a gradient path).
    pub fn constants<'g>(&self, g: &'g Graph) -> StateVars<'g> {
        StateVars {
            h: g.constant(self.h.clone()),
            c: g.constant(self.c.clone()),
            u_a_prev: g.constant(self.u_a_prev.clone()),
        }
    }

    pub fn snapshot(state: &StateVars<'_>) -> PolicyState {
        PolicyState {
            h: state.h.value(),
            c: state.c.value(),
            u_a_prev: state.u_a_prev.value(),
        }
    }
}

/// One fused LSTM cell step; gate layout along the 4·d_m axis is
/// input, forget, candidate, output.
pub fn lstm_step<'g>(
    w_ih: Var<'g>,
    w_hh: Var<'g>,
    b: Var<'g>,
    x: Var<'g>,
    h: Var<'g>,
    c: Var<'g>,
) -> Result<(Var<'g>, Var<'g>)> {
    let d_m = h.shape()[0];
    let gates = affine(w_ih, x, Some(b))?.add(affine(w_hh, h, None)?)?;
    let i = gates.slice(0, d_m)?.sigmoid();
    let f = gates.slice(d_m, d_m)?.sigmoid();
    let cand = gates.slice(2 * d_m, d_m)?.tanh();
    let o = gates.slice(3 * d_m, d_m)?.sigmoid();
    let c_new = f.mul(c)?.add(i.mul(cand)?)?;
    let h_new = o.mul(c_new.tanh())?;
    Ok((h_new, c_new))
}

/// Everything one forward step leaves on the tape.
#[derive(Debug, Clone, Copy)]
pub struct StepFlow<'g> {
    pub attention: AttentionFlow<'g>,
    /// 6-way action distribution π.
    pub pi: Var<'g>,
    /// Critic value V (scalar node).
    pub value: Var<'g>,
    /// Carry into the next step (u_a_prev = π).
    pub state: StateVars<'g>,
}

/// One policy step on the tape: attention → reduce → flatten+concat →
/// input affine → LSTM → actor softmax / critic value.
pub fn policy_step<'g>(
    g: &'g Graph,
    model: &ModelVars<'g>,
    v: Var<'g>,
    u_g: Var<'g>,
    state: &StateVars<'g>,
    fusion: FusionConfig,
) -> Result<StepFlow<'g>> {
    let attention = full_attention(g, &model.attn, v, u_g, state.u_a_prev, state.h, fusion)?;
    let windows = v.shape()[0];
    let d_p = model.policy.reduce_w.shape()[0];
    let reduced = linear_rows(
        model.policy.reduce_w,
        attention.v_hat,
        Some(model.policy.reduce_b),
    )?;
    let flat = reduced.reshape(vec![windows * d_p])?;
    let x = concat(&[flat, u_g, state.u_a_prev])?;
    let pre = affine(model.policy.input_w, x, Some(model.policy.input_b))?;
    let (h, c) = lstm_step(
        model.policy.lstm_w_ih,
        model.policy.lstm_w_hh,
        model.policy.lstm_b,
        pre,
        state.h,
        state.c,
    )?;
    let logits = affine(model.policy.actor_w, h, Some(model.policy.actor_b))?;
    let pi = logits.softmax()?;
    let value = affine(model.policy.critic_w, h, Some(model.policy.critic_b))?.gather(0)?;
    Ok(StepFlow {
        attention,
        pi,
        value,
        state: StateVars { h, c, u_a_prev: pi },
    })
}

/// Single plain-value forward pass (shared code path with training: it
/// builds a throwaway tape internally).
pub fn policy_forward(
    model: &ModelParams,
    v: &Tensor,
    u_g: &Tensor,
    state: &PolicyState,
    fusion: FusionConfig,
) -> Result<(Tensor, f64, PolicyState, AttentionBundle)> {
    let g = Graph::new();
    let vars = model.leaves(&g);
    let s = state.constants(&g);
    let flow = policy_step(&g, &vars, g.constant(v.clone()), g.constant(u_g.clone()), &s, fusion)?;
    Ok((
        flow.pi.value(),
        flow.value.item()?,
        PolicyState::snapshot(&flow.state),
        flow.attention.snapshot(),
    ))
}

/// log π(a) as a tape node (ε-floored for numeric safety).
pub fn log_prob_of<'g>(pi: Var<'g>, action: Action) -> Result<Var<'g>> {
    pi.gather(action.ordinal())?.scale_add(1.0, PROB_EPS).ln()
}

/// Entropy H(π) = −Σ π ln(π + ε) as a tape node.
pub fn entropy_of<'g>(pi: Var<'g>) -> Result<Var<'g>> {
    Ok(pi.mul(pi.scale_add(1.0, PROB_EPS).ln()?)?.sum().neg())
}

/// Per-step tape handles (plus the reward) the losses consume.
#[derive(Debug, Clone, Copy)]
pub struct TapeStep<'g> {
    pub pi: Var<'g>,
    pub log_prob: Var<'g>,
    pub value: Var<'g>,
    pub entropy: Var<'g>,
    pub reward: f64,
}

/// Discounted returns R_t from rewards and the value bootstrapped at
/// truncation (0 for a terminated episode).
pub fn discounted_returns(rewards: &[f64], bootstrap_value: f64, gamma: f64) -> Vec<f64> {
    let mut returns = vec![0.0; rewards.len()];
    let mut acc = bootstrap_value;
    for (t, &r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        returns[t] = acc;
    }
    returns
}

/// Advantage actor-critic episode loss:
/// Σ_t [ −A_t·log π(a_t) + value_coef·(R_t − V_t)² − entropy_coef·H(π_t) ]
/// with A_t = R_t − V_t held constant (no gradient from the policy term
/// into the critic). Returns and advantages are read off the current tape
/// values and baked in as coefficients.
pub fn nav_loss<'g>(
    steps: &[TapeStep<'g>],
    bootstrap_value: f64,
    gamma: f64,
    value_coef: f64,
    entropy_coef: f64,
) -> Result<Var<'g>> {
    if steps.is_empty() {
        return Err(TensorError::Contract {
            op: "nav_loss",
            msg: "trajectory must be non-empty".into(),
        });
    }
    let rewards: Vec<f64> = steps.iter().map(|s| s.reward).collect();
    let returns = discounted_returns(&rewards, bootstrap_value, gamma);
    let mut advantages = Vec::with_capacity(steps.len());
    for (step, &ret) in steps.iter().zip(&returns) {
        advantages.push(ret - step.value.item()?);
    }
    nav_loss_given(steps, &returns, &advantages, value_coef, entropy_coef)
}

/// The loss [`nav_loss`] assembles once its coefficients are fixed: the
/// returns R_t and advantage weights A_t enter as plain numbers, so this
/// is a genuinely differentiable function of the parameters (which makes
/// it the right target for finite-difference oracles).
pub fn nav_loss_given<'g>(
    steps: &[TapeStep<'g>],
    returns: &[f64],
    advantages: &[f64],
    value_coef: f64,
    entropy_coef: f64,
) -> Result<Var<'g>> {
    if steps.is_empty() || steps.len() != returns.len() || steps.len() != advantages.len() {
        return Err(TensorError::Contract {
            op: "nav_loss",
            msg: "trajectory, returns, and advantages must be non-empty and equal-length".into(),
        });
    }
    let mut loss: Option<Var<'g>> = None;
    for ((step, &ret), &advantage) in steps.iter().zip(returns).zip(advantages) {
        let policy_term = step.log_prob.scale(-advantage);
        let residual = step.value.scale_add(-1.0, ret); // R_t − V_t
        let value_term = residual.mul(residual)?.scale(value_coef);
        let entropy_term = step.entropy.scale(-entropy_coef);
        let term = policy_term.add(value_term)?.add(entropy_term)?;
        loss = Some(match loss {
            Some(acc) => acc.add(term)?,
            None => term,
        });
    }
    Ok(loss.expect("non-empty"))
}

/// Self-supervised prefix loss driving the in-episode adaptation:
/// L = (1/k̂)·[ Σ_{t≥2} ⟨π_t, π_{t−1}⟩ − c·Σ_t H(π_t) ].
/// Penalizes echoing the previous step's action distribution and rewards
/// decisive (low-entropy... raised-entropy) exploration; a length-1
/// prefix contributes only its entropy term.
pub fn interaction_loss<'g>(
    pis: &[Var<'g>],
    k_hat: usize,
    entropy_coef_int: f64,
) -> Result<Var<'g>> {
    if pis.is_empty() || k_hat == 0 {
        return Err(TensorError::Contract {
            op: "interaction_loss",
            msg: "prefix must be non-empty and k̂ ≥ 1".into(),
        });
    }
    let mut loss = entropy_of(pis[0])?.scale(-entropy_coef_int);
    for t in 1..pis.len() {
        let echo = pis[t].dot(pis[t - 1])?;
        let ent = entropy_of(pis[t])?.scale(-entropy_coef_int);
        loss = loss.add(echo)?.add(ent)?;
    }
    Ok(loss.scale(1.0 / k_hat as f64))
}

/// First-order inner update on the live tape: θ′ = θ − inner_lr·∇_θ L,
/// registered as fresh leaves so the episode suffix runs on θ′ while the
/// outer gradients do NOT differentiate through this step. Returns `None`
/// (and leaves θ in charge) when any inner gradient is non-finite.
pub fn adapt<'g>(
    g: &'g Graph,
    model: &ModelVars<'g>,
    inner_loss: Var<'g>,
    inner_lr: f64,
) -> Result<Option<ModelVars<'g>>> {
    let grads = g.backward(inner_loss)?;
    let mut updated: Vec<Tensor> = Vec::with_capacity(17);
    for var in model.ordered() {
        let grad = grads.wrt(var);
        if !grad.all_finite() {
            return Ok(None);
        }
        let mut value = var.value();
        value.add_scaled(&grad, -inner_lr)?;
        updated.push(value);
    }
    let mut fresh = updated.into_iter().map(|t| g.leaf(t));
    let mut next = |_: &str| fresh.next().expect("17 parameters");
    Ok(Some(ModelVars {
        attn: AttentionVars {
            w_v: next("attn.W_v"),
            w_g: next("attn.W_g"),
            w_a: next("attn.W_a"),
            w_m: next("attn.W_m"),
            beta_w: next("attn.beta.W"),
            beta_b: next("attn.beta.b"),
        },
        policy: PolicyVars {
            reduce_w: next("policy.reduce.W"),
            reduce_b: next("policy.reduce.b"),
            input_w: next("policy.input.W"),
            input_b: next("policy.input.b"),
            lstm_w_ih: next("policy.lstm.W_ih"),
            lstm_w_hh: next("policy.lstm.W_hh"),
            lstm_b: next("policy.lstm.b"),
            actor_w: next("policy.actor.W"),
            actor_b: next("policy.actor.b"),
            critic_w: next("policy.critic.W"),
            critic_b: next("policy.critic.b"),
        },
    }))
}

/// Draw from π by inverse CDF over the action ordinals.
pub fn sample_action(pi: &Tensor, rng: &mut impl Rng) -> Action {
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    for action in Action::ALL {
        cum += pi.data()[action.ordinal()];
        if u < cum {
            return action;
        }
    }
    Action::ALL[Action::ALL.len() - 1]
}

/// argmax π with lowest-ordinal tie-breaking; fully deterministic.
pub fn greedy_action(pi: &Tensor) -> Action {
    let mut best = Action::ALL[0];
    let mut best_p = pi.data()[0];
    for action in Action::ALL {
        let p = pi.data()[action.ordinal()];
        if p > best_p {
            best = action;
            best_p = p;
        }
    }
    best
}

/// Plain-value record of one executed step.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub action: Action,
    /// ln π(a) of the executed action (exact, from the plain π values).
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    pub entropy: f64,
    pub bundle: AttentionBundle,
}

impl StepRecord {
    pub fn from_flow(flow: &StepFlow<'_>, action: Action, reward: f64) -> Result<Self> {
        let pi = flow.pi.value();
        let entropy = -pi
            .data()
            .iter()
            .map(|&p| if p > 0.0 { p * p.ln() } else { 0.0 })
            .sum::<f64>();
        Ok(Self {
            action,
            log_prob: pi.data()[action.ordinal()].ln(),
            value: flow.value.item()?,
            reward,
            entropy,
            bundle: flow.attention.snapshot(),
        })
    }
}

// ── Full-stack gradient oracle ───────────────────────────────────────────

/// Aggregate outcome of [`stack_gradcheck`].
#[derive(Debug, Clone, Copy)]
pub struct StackGradcheck {
    /// Worst relative error between reverse-mode and central-difference
    /// gradients, over every parameter element of every instance.
    pub max_rel_err: f64,
    pub instances: usize,
    /// Parameter elements compared per instance.
    pub elements: usize,
}

/// Gradient oracle over the complete model: attention (all three cues plus
/// fusion), window reduction, the LSTM recurrence, and both heads, driven
/// for three steps so gradients flow through time. The differentiated
/// scalar is `Σ_t [ln π_t(a_t) + V_t]` — a fully differentiable function of
/// the parameters — and every element of all 17 parameter tensors is
/// perturbed. Inputs, parameters, and the scripted actions are drawn from
/// seeded streams, one fresh model per instance.
pub fn stack_gradcheck(instances: usize, base_seed: u64) -> Result<StackGradcheck> {
    use crate::tensor::grad_check_report;

    const STEPS: usize = 3;
    let dims = ModelDims {
        attn: AttentionDims {
            n_v: 7,
            d_v: 8,
            d_g: 8,
            d_a: Action::ALL.len(),
            d_m: 16,
            d: 16,
        },
        d_p: 1,
        d_in: 10,
    };
    let windows = dims.attn.n_v * dims.attn.n_v;

    let mut worst = StackGradcheck {
        max_rel_err: 0.0,
        instances,
        elements: 0,
    };
    for k in 0..instances {
        let seed = crate::seeding::derive_indexed(base_seed, "gradcheck.instance", k as u64);
        let params = ModelParams::init(dims, seed);
        let inputs: Vec<Tensor> = params.named().into_iter().map(|(_, t)| t.clone()).collect();

        let mut rng = crate::seeding::rng_for(seed, "gradcheck.inputs");
        let maps: Vec<Tensor> = (0..STEPS)
            .map(|_| {
                Tensor::new(
                    vec![windows, dims.attn.d_v],
                    (0..windows * dims.attn.d_v)
                        .map(|_| rng.gen_range(-1.0..1.0))
                        .collect(),
                )
                .expect("shape matches data")
            })
            .collect();
        let u_g = Tensor::vector((0..dims.attn.d_g).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let actions: Vec<Action> = (0..STEPS)
            .map(|_| Action::ALL[rng.gen_range(0..Action::ALL.len())])
            .collect();

        let d_m = dims.attn.d_m;
        let report = grad_check_report(
            |g, vars| scripted_trajectory_root(g, vars, d_m, &maps, &u_g, &actions),
            &inputs,
            1e-5,
        )?;
        worst.elements = report.elements;
        if report.max_rel_err > worst.max_rel_err {
            worst.max_rel_err = report.max_rel_err;
        }
    }
    Ok(worst)
}

/// `Σ_t [ln π_t(a_t) + V_t]` over a scripted action sequence with fixed
/// observations: the scalar [`stack_gradcheck`] differentiates.
fn scripted_trajectory_root<'g>(
    g: &'g Graph,
    vars: &[Var<'g>],
    d_m: usize,
    maps: &[Tensor],
    u_g: &Tensor,
    actions: &[Action],
) -> Result<Var<'g>> {
    let model = ModelVars::from_ordered(vars);
    let mut state = initial_state(d_m).constants(g);
    let u_g = g.constant(u_g.clone());
    let mut total = g.constant(Tensor::vector(vec![0.0]));
    for (map, &action) in maps.iter().zip(actions) {
        let v = g.constant(map.clone());
        let flow = policy_step(g, &model, v, u_g, &state, FusionConfig::default())?;
        let log_prob = log_prob_of(flow.pi, action)?;
        total = total.add(log_prob)?.add(flow.value)?;
        state = flow.state;
    }
    Ok(total)
}
