//! Spatial attention over the egocentric feature grid.
//!
//! Three cues — the target embedding, the previous action distribution,
//! and the previous recurrent state — each induce an attention
//! distribution over the `n_v × n_v` sub-windows via an ε-guarded cosine
//! potential and a softmax. A learned β head weighs the cues'
//! log-probabilities into one fused distribution, which rescales the
//! feature grid into the attended embedding fed to the policy.
//!
//! Everything here builds nodes on a [`Graph`] tape, so gradients flow to
//! all projections, to the β head, and through the recurrent inputs.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::{
    affine, concat, linear_rows, row_scale, Graph, Result, Tensor, TensorError, Var,
};

/// ε guard for cosine normalization: zero projections read as cosine 0.
pub const COSINE_EPS: f64 = 1e-8;
/// Floor added to probabilities before the fusion logarithm.
pub const FUSION_EPS: f64 = 1e-12;

/// Dimensions of the attention stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionDims {
    /// Feature grid side (the grid has `n_v²` sub-windows).
    pub n_v: usize,
    /// Channels per sub-window.
    pub d_v: usize,
    /// Target embedding length.
    pub d_g: usize,
    /// Action count (length of the previous-action distribution).
    pub d_a: usize,
    /// Recurrent state length.
    pub d_m: usize,
    /// Shared embedding space the cosines live in.
    pub d: usize,
}

impl Default for AttentionDims {
    fn default() -> Self {
        Self {
            n_v: 7,
            d_v: 32,
            d_g: 32,
            d_a: 6,
            d_m: 128,
            d: 64,
        }
    }
}

/// Trainable parameters: one projection into the shared space per input
/// kind, plus the β head read from the previous recurrent state.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub dims: AttentionDims,
    pub w_v: Tensor,    // [d, d_v]
    pub w_g: Tensor,    // [d, d_g]
    pub w_a: Tensor,    // [d, d_a]
    pub w_m: Tensor,    // [d, d_m]
    pub beta_w: Tensor, // [3, d_m]
    pub beta_b: Tensor, // [3]
}

/// Uniform ±1/√fan_in entries.
pub(crate) fn fan_in_init(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let bound = 1.0 / (cols as f64).sqrt();
    Tensor::new(
        vec![rows, cols],
        (0..rows * cols)
            .map(|_| rng.gen_range(-bound..bound))
            .collect(),
    )
    .expect("sized init")
}

impl AttentionParams {
    /// Fan-in uniform projections; β head starts as the constant (1,1,1)
    /// (zero weights, unit bias) so fusion begins as the plain product.
    pub fn init(dims: AttentionDims, seed: u64) -> Self {
        let stream = |tag: &str| crate::seeding::rng_for(seed, tag);
        Self {
            w_v: fan_in_init(&mut stream("attn.W_v"), dims.d, dims.d_v),
            w_g: fan_in_init(&mut stream("attn.W_g"), dims.d, dims.d_g),
            w_a: fan_in_init(&mut stream("attn.W_a"), dims.d, dims.d_a),
            w_m: fan_in_init(&mut stream("attn.W_m"), dims.d, dims.d_m),
            beta_w: Tensor::zeros(&[3, dims.d_m]),
            beta_b: Tensor::new(vec![3], vec![1.0; 3]).expect("sized"),
            dims,
        }
    }

    /// Registers every parameter as a differentiable leaf on `g`.
    pub fn leaves<'g>(&self, g: &'g Graph) -> AttentionVars<'g> {
        AttentionVars {
            w_v: g.leaf(self.w_v.clone()),
            w_g: g.leaf(self.w_g.clone()),
            w_a: g.leaf(self.w_a.clone()),
            w_m: g.leaf(self.w_m.clone()),
            beta_w: g.leaf(self.beta_w.clone()),
            beta_b: g.leaf(self.beta_b.clone()),
        }
    }

    /// Stable (name, tensor) listing, the checkpoint and optimizer order.
    pub fn named(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("attn.W_v", &self.w_v),
            ("attn.W_g", &self.w_g),
            ("attn.W_a", &self.w_a),
            ("attn.W_m", &self.w_m),
            ("attn.beta.W", &self.beta_w),
            ("attn.beta.b", &self.beta_b),
        ]
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![
            ("attn.W_v", &mut self.w_v),
            ("attn.W_g", &mut self.w_g),
            ("attn.W_a", &mut self.w_a),
            ("attn.W_m", &mut self.w_m),
            ("attn.beta.W", &mut self.beta_w),
            ("attn.beta.b", &mut self.beta_b),
        ]
    }
}

/// The parameters as live tape nodes for one rollout.
#[derive(Debug, Clone, Copy)]
pub struct AttentionVars<'g> {
    pub w_v: Var<'g>,
    pub w_g: Var<'g>,
    pub w_a: Var<'g>,
    pub w_m: Var<'g>,
    pub beta_w: Var<'g>,
    pub beta_b: Var<'g>,
}

impl<'g> AttentionVars<'g> {
    /// Same order as [`AttentionParams::named`].
    pub fn ordered(&self) -> [Var<'g>; 6] {
        [
            self.w_v,
            self.w_g,
            self.w_a,
            self.w_m,
            self.beta_w,
            self.beta_b,
        ]
    }
}

/// Which cues participate in fusion, and whether β is frozen at 1.
///
/// Disabling a cue removes its term from the fused log-sum entirely (its
/// distribution is still computed for inspection, with β reported as 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FusionConfig {
    pub use_target: bool,
    pub use_action: bool,
    pub use_memory: bool,
    /// Bypass the β head and fuse with constant weights (1, 1, 1).
    pub fixed_beta_one: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            use_target: true,
            use_action: true,
            use_memory: true,
            fixed_beta_one: false,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.use_target || self.use_action || self.use_memory) {
            return Err(TensorError::Contract {
                op: "fusion",
                msg: "at least one attention cue must stay enabled".into(),
            });
        }
        Ok(())
    }
}

/// Cosine potentials of every sub-window against one context vector:
/// φ(k) = ⟨W_v v_k / max(‖W_v v_k‖, ε), W_x u / max(‖W_x u‖, ε)⟩.
pub fn cosine_potential<'g>(w_v: Var<'g>, w_x: Var<'g>, v: Var<'g>, u: Var<'g>) -> Result<Var<'g>> {
    let embedded = window_embeddings(w_v, v)?;
    potentials_against(&embedded, w_x, u)
}

/// Normalized shared-space embeddings of all sub-windows (shared by the
/// three potentials so `W_v v_k` is projected once per step).
fn window_embeddings<'g>(w_v: Var<'g>, v: Var<'g>) -> Result<Vec<Var<'g>>> {
    let shape = v.shape();
    if shape.len() != 2 {
        return Err(TensorError::Contract {
            op: "cosine_potential",
            msg: format!("feature grid must be [windows, channels], got {shape:?}"),
        });
    }
    let d = w_v.shape()[0];
    let projected = linear_rows(w_v, v, None)?; // [windows, d]
    (0..shape[0])
        .map(|k| Ok(projected.slice(k * d, d)?.l2_normalized(COSINE_EPS)))
        .collect()
}

fn potentials_against<'g>(embedded: &[Var<'g>], w_x: Var<'g>, u: Var<'g>) -> Result<Var<'g>> {
    let context = affine(w_x, u, None)?.l2_normalized(COSINE_EPS);
    let phis = embedded
        .iter()
        .map(|e| e.dot(context))
        .collect::<Result<Vec<_>>>()?;
    concat(&phis)
}

/// Softmax of the flattened potentials (row-major sub-window order).
pub fn attention_distribution(phi: Var<'_>) -> Result<Var<'_>> {
    phi.softmax()
}

/// Raw affine β = W u_m_prev + b; sign unconstrained.
pub fn beta_weights<'g>(beta_w: Var<'g>, beta_b: Var<'g>, u_m_prev: Var<'g>) -> Result<Var<'g>> {
    affine(beta_w, u_m_prev, Some(beta_b))
}

/// Fuses cue distributions in log space: softmax(Σ_u β_u · ln(p_u + ε))
/// over the pairs that remain enabled.
pub fn fuse<'g>(parts: &[(Var<'g>, Var<'g>)]) -> Result<Var<'g>> {
    let mut logits: Option<Var<'g>> = None;
    for &(beta_u, p_u) in parts {
        let term = p_u.scale_add(1.0, FUSION_EPS).ln()?.mul_scalar(beta_u)?;
        logits = Some(match logits {
            Some(acc) => acc.add(term)?,
            None => term,
        });
    }
    let logits = logits.ok_or(TensorError::Contract {
        op: "fuse",
        msg: "fusion needs at least one (β, p) pair".into(),
    })?;
    logits.softmax()
}

/// Attended embedding: each sub-window's features scaled by its fused
/// probability, ĥv_k = p(k) · v_k.
pub fn attend<'g>(p_fused: Var<'g>, v: Var<'g>) -> Result<Var<'g>> {
    row_scale(v, p_fused)
}

/// All tape nodes produced by one attention pass.
#[derive(Debug, Clone, Copy)]
pub struct AttentionFlow<'g> {
    pub phi_g: Var<'g>,
    pub phi_a: Var<'g>,
    pub phi_m: Var<'g>,
    pub p_g: Var<'g>,
    pub p_a: Var<'g>,
    pub p_m: Var<'g>,
    /// Raw β node (head output, or the frozen constant); disabled cues are
    /// reported as 0 in [`AttentionFlow::snapshot`].
    pub beta: Var<'g>,
    pub p_fused: Var<'g>,
    pub v_hat: Var<'g>,
    fusion: FusionConfig,
}

/// Plain-value copy of a flow, for logging and step records.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionBundle {
    pub phi_g: Tensor,
    pub phi_a: Tensor,
    pub phi_m: Tensor,
    pub p_g: Tensor,
    pub p_a: Tensor,
    pub p_m: Tensor,
    /// (β_g, β_a, β_m); a disabled cue records 0.
    pub beta: [f64; 3],
    pub p_fused: Tensor,
    pub v_hat: Tensor,
}

impl AttentionFlow<'_> {
    pub fn snapshot(&self) -> AttentionBundle {
        let raw = self.beta.value();
        let gate = [
            self.fusion.use_target,
            self.fusion.use_action,
            self.fusion.use_memory,
        ];
        let mut beta = [0.0; 3];
        for (slot, (&on, &b)) in beta.iter_mut().zip(gate.iter().zip(raw.data())) {
            *slot = if on { b } else { 0.0 };
        }
        AttentionBundle {
            phi_g: self.phi_g.value(),
            phi_a: self.phi_a.value(),
            phi_m: self.phi_m.value(),
            p_g: self.p_g.value(),
            p_a: self.p_a.value(),
            p_m: self.p_m.value(),
            beta,
            p_fused: self.p_fused.value(),
            v_hat: self.v_hat.value(),
        }
    }
}

/// One full attention pass: three potentials and distributions, β, the
/// fused distribution, and the attended embedding.
pub fn full_attention<'g>(
    g: &'g Graph,
    params: &AttentionVars<'g>,
    v: Var<'g>,
    u_g: Var<'g>,
    u_a_prev: Var<'g>,
    u_m_prev: Var<'g>,
    fusion: FusionConfig,
) -> Result<AttentionFlow<'g>> {
    fusion.validate()?;
    let embedded = window_embeddings(params.w_v, v)?;
    let phi_g = potentials_against(&embedded, params.w_g, u_g)?;
    let phi_a = potentials_against(&embedded, params.w_a, u_a_prev)?;
    let phi_m = potentials_against(&embedded, params.w_m, u_m_prev)?;
    let p_g = attention_distribution(phi_g)?;
    let p_a = attention_distribution(phi_a)?;
    let p_m = attention_distribution(phi_m)?;
    let beta = if fusion.fixed_beta_one {
        g.constant(Tensor::new(vec![3], vec![1.0; 3])?)
    } else {
        beta_weights(params.beta_w, params.beta_b, u_m_prev)?
    };
    let mut parts = Vec::new();
    for (enabled, index, p) in [
        (fusion.use_target, 0, p_g),
        (fusion.use_action, 1, p_a),
        (fusion.use_memory, 2, p_m),
    ] {
        if enabled {
            parts.push((beta.gather(index)?, p));
        }
    }
    let p_fused = fuse(&parts)?;
    let v_hat = attend(p_fused, v)?;
    Ok(AttentionFlow {
        phi_g,
        phi_a,
        phi_m,
        p_g,
        p_a,
        p_m,
        beta,
        p_fused,
        v_hat,
        fusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::grad_check;
    use crate::testkit::{assert_close, seeded_rng, uniform_vec};
    use rand::Rng;

    fn tiny_dims() -> AttentionDims {
        AttentionDims {
            n_v: 2,
            d_v: 3,
            d_g: 4,
            d_a: 6,
            d_m: 5,
            d: 3,
        }
    }

    fn random_inputs(
        dims: AttentionDims,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> (Tensor, Tensor, Tensor, Tensor) {
        let n2 = dims.n_v * dims.n_v;
        let v = Tensor::new(vec![n2, dims.d_v], uniform_vec(rng, n2 * dims.d_v, 1.0)).unwrap();
        let u_g = Tensor::vector(uniform_vec(rng, dims.d_g, 1.0));
        // A valid simplex point for the previous-action distribution.
        let mut u_a = uniform_vec(rng, dims.d_a, 1.0);
        for x in &mut u_a {
            *x = x.abs() + 0.05;
        }
        let total: f64 = u_a.iter().sum();
        let u_a = Tensor::vector(u_a.into_iter().map(|x| x / total).collect());
        let u_m = Tensor::vector(uniform_vec(rng, dims.d_m, 1.0));
        (v, u_g, u_a, u_m)
    }

    #[test]
    fn cosine_potential_matches_hand_computed_cosines() {
        // Identity W_v / W_x on a 2×2 grid (4 windows, 2 channels) against
        // context u = (1, 0): φ(k) = cos(angle of window k's features).
        let g = Graph::new();
        let eye = g.constant(Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let v = g.constant(
            Tensor::new(
                vec![4, 2],
                vec![
                    2.0, 0.0, // aligned with u → 1
                    0.0, 3.0, // orthogonal → 0
                    -1.0, 0.0, // opposite → −1
                    1.0, 1.0, // 45° → 1/√2
                ],
            )
            .unwrap(),
        );
        let u = g.constant(Tensor::vector(vec![1.0, 0.0]));
        let phi = cosine_potential(eye, eye, v, u).unwrap().value();
        assert_close(phi.data()[0], 1.0, 1e-12);
        assert_close(phi.data()[1], 0.0, 1e-12);
        assert_close(phi.data()[2], -1.0, 1e-12);
        assert_close(phi.data()[3], 1.0 / 2f64.sqrt(), 1e-12);
    }

    #[test]
    fn zero_projection_reads_cosine_zero() {
        let g = Graph::new();
        let eye = g.constant(Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let v = g.constant(Tensor::new(vec![1, 2], vec![0.0, 0.0]).unwrap());
        let u = g.constant(Tensor::vector(vec![1.0, 0.0]));
        let phi = cosine_potential(eye, eye, v, u).unwrap();
        assert_eq!(phi.value().data(), &[0.0]);
    }

    #[test]
    fn constant_potentials_give_uniform_attention() {
        let g = Graph::new();
        let phi = g.constant(Tensor::vector(vec![0.7; 4]));
        let p = attention_distribution(phi).unwrap().value();
        for &x in p.data() {
            assert_close(x, 0.25, 1e-12);
        }
    }

    #[test]
    fn single_hot_potential_matches_closed_form() {
        // φ = (1, 0, 0, 0) → p_max = e/(e+3).
        let g = Graph::new();
        let phi = g.constant(Tensor::vector(vec![1.0, 0.0, 0.0, 0.0]));
        let p = attention_distribution(phi).unwrap().value();
        let e = std::f64::consts::E;
        assert_close(p.data()[0], e / (e + 3.0), 1e-12);
        // Softmax monotonicity: argmax p = argmax φ.
        let argmax = p
            .data()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, 0);
    }

    #[test]
    fn fuse_with_unit_betas_equals_normalized_product() {
        let mut rng = seeded_rng(42);
        for _ in 0..1000 {
            let g = Graph::new();
            let mut dists = Vec::new();
            for _ in 0..3 {
                let raw: Vec<f64> = (0..9).map(|_| rng.gen_range(0.01..1.0)).collect();
                let total: f64 = raw.iter().sum();
                dists.push(Tensor::vector(raw.into_iter().map(|x| x / total).collect()));
            }
            let one = g.constant(Tensor::scalar(1.0));
            let parts: Vec<_> = dists.iter().map(|d| (one, g.constant(d.clone()))).collect();
            let fused = fuse(&parts).unwrap().value();
            let product: Vec<f64> = (0..9)
                .map(|k| dists.iter().map(|d| d.data()[k]).product())
                .collect();
            let total: f64 = product.iter().sum();
            for (got, want) in fused.data().iter().zip(product) {
                assert_close(*got, want / total, 1e-9);
            }
        }
    }

    #[test]
    fn fuse_selects_and_degenerates_as_expected() {
        let g = Graph::new();
        let p_g = Tensor::vector(vec![0.5, 0.3, 0.15, 0.05]);
        let one = g.constant(Tensor::scalar(1.0));
        let zero = g.constant(Tensor::scalar(0.0));
        let pg = g.constant(p_g.clone());
        let pa = g.constant(Tensor::vector(vec![0.1, 0.2, 0.3, 0.4]));
        let pm = g.constant(Tensor::vector(vec![0.25; 4]));
        // β = (1,0,0) → selector for p_g.
        let fused = fuse(&[(one, pg), (zero, pa), (zero, pm)]).unwrap().value();
        for (got, want) in fused.data().iter().zip(p_g.data()) {
            assert_close(*got, *want, 1e-9);
        }
        // β = (0,0,0) → uniform.
        let flat = fuse(&[(zero, pg), (zero, pa), (zero, pm)]).unwrap().value();
        for &x in flat.data() {
            assert_close(x, 0.25, 1e-12);
        }
    }

    #[test]
    fn beta_head_is_affine_with_bias_passthrough() {
        let g = Graph::new();
        let w = g.leaf(Tensor::zeros(&[3, 4]));
        let b = g.leaf(Tensor::vector(vec![1.0, 1.0, 1.0]));
        let u = g.constant(Tensor::vector(vec![0.3, -2.0, 5.0, 0.7]));
        let beta = beta_weights(w, b, u).unwrap();
        assert_eq!(beta.value().data(), &[1.0, 1.0, 1.0]);

        // Linearity at zero bias: β(u + u') = β(u) + β(u').
        let g = Graph::new();
        let mut rng = seeded_rng(9);
        let w = g.leaf(Tensor::new(vec![3, 4], uniform_vec(&mut rng, 12, 1.0)).unwrap());
        let b = g.leaf(Tensor::zeros(&[3]));
        let ua = Tensor::vector(uniform_vec(&mut rng, 4, 2.0));
        let ub = Tensor::vector(uniform_vec(&mut rng, 4, 2.0));
        let sum = Tensor::vector(
            ua.data()
                .iter()
                .zip(ub.data())
                .map(|(x, y)| x + y)
                .collect(),
        );
        let lhs = beta_weights(w, b, g.constant(sum)).unwrap().value();
        let ra = beta_weights(w, b, g.constant(ua)).unwrap().value();
        let rb = beta_weights(w, b, g.constant(ub)).unwrap().value();
        for k in 0..3 {
            assert_close(lhs.data()[k], ra.data()[k] + rb.data()[k], 1e-12);
        }
    }

    #[test]
    fn attend_scales_rows_and_preserves_shape() {
        let g = Graph::new();
        let v = g.constant(Tensor::new(vec![4, 2], (1..=8).map(f64::from).collect()).unwrap());
        let uniform = g.constant(Tensor::vector(vec![0.25; 4]));
        let v_hat = attend(uniform, v).unwrap();
        assert_eq!(v_hat.shape(), vec![4, 2]);
        for (got, want) in v_hat.value().data().iter().zip(1..=8) {
            assert_close(*got, want as f64 / 4.0, 1e-12);
        }
        let onehot = g.constant(Tensor::vector(vec![0.0, 0.0, 1.0, 0.0]));
        let picked = attend(onehot, v).unwrap().value();
        assert_eq!(picked.data(), &[0.0, 0.0, 0.0, 0.0, 5.0, 6.0, 0.0, 0.0]);
    }

    #[test]
    fn attended_norm_is_bounded_by_largest_window() {
        let mut rng = seeded_rng(7);
        for _ in 0..200 {
            let g = Graph::new();
            let rows = rng.gen_range(2..6);
            let cols = rng.gen_range(1..5);
            let v = Tensor::new(vec![rows, cols], uniform_vec(&mut rng, rows * cols, 3.0)).unwrap();
            let logits = Tensor::vector(uniform_vec(&mut rng, rows, 2.0));
            let p = g.constant(logits).softmax().unwrap();
            let v_hat = attend(p, g.constant(v.clone())).unwrap().value();
            let row_norm = |t: &Tensor, r: usize| -> f64 {
                t.row(r).iter().map(|x| x * x).sum::<f64>().sqrt()
            };
            let total: f64 = (0..rows).map(|r| row_norm(&v_hat, r)).sum();
            let max_in = (0..rows).map(|r| row_norm(&v, r)).fold(0.0, f64::max);
            assert!(
                total <= max_in + 1e-12,
                "Σ‖v̂‖ = {total} exceeds max ‖v‖ = {max_in}"
            );
        }
    }

    #[test]
    fn zero_parameters_reach_the_uniform_fixpoint() {
        let dims = tiny_dims();
        let mut params = AttentionParams::init(dims, 3);
        for (_, t) in params.named_mut() {
            *t = Tensor::zeros(t.shape());
        }
        let mut rng = seeded_rng(1);
        let (v, u_g, u_a, u_m) = random_inputs(dims, &mut rng);
        let g = Graph::new();
        let vars = params.leaves(&g);
        let flow = full_attention(
            &g,
            &vars,
            g.constant(v.clone()),
            g.constant(u_g),
            g.constant(u_a),
            g.constant(u_m),
            FusionConfig::default(),
        )
        .unwrap();
        let n2 = (dims.n_v * dims.n_v) as f64;
        for p in [flow.p_g, flow.p_a, flow.p_m, flow.p_fused] {
            for &x in p.value().data() {
                assert_close(x, 1.0 / n2, 1e-12);
            }
        }
        for (got, want) in flow.v_hat.value().data().iter().zip(v.data()) {
            assert_close(*got, want / n2, 1e-12);
        }
    }

    #[test]
    fn bundle_invariants_hold_on_random_inputs() {
        let dims = tiny_dims();
        let mut rng = seeded_rng(20);
        let n2 = dims.n_v * dims.n_v;
        for trial in 0..1000 {
            let params = AttentionParams::init(dims, trial);
            let (v, u_g, u_a, u_m) = random_inputs(dims, &mut rng);
            let g = Graph::new();
            let vars = params.leaves(&g);
            let flow = full_attention(
                &g,
                &vars,
                g.constant(v.clone()),
                g.constant(u_g),
                g.constant(u_a),
                g.constant(u_m),
                FusionConfig::default(),
            )
            .unwrap();
            let bundle = flow.snapshot();
            for phi in [&bundle.phi_g, &bundle.phi_a, &bundle.phi_m] {
                assert!(phi
                    .data()
                    .iter()
                    .all(|x| (-1.0 - 1e-12..=1.0 + 1e-12).contains(x)));
            }
            for p in [&bundle.p_g, &bundle.p_a, &bundle.p_m, &bundle.p_fused] {
                assert!(p.data().iter().all(|&x| x >= 0.0));
                assert_close(p.data().iter().sum::<f64>(), 1.0, 1e-10);
            }
            // Bounded potentials squeeze each cue distribution: max/min ≤ e²
            // and entropy ≥ ln(n²) − 2.
            for p in [&bundle.p_g, &bundle.p_a, &bundle.p_m] {
                let max = p.data().iter().cloned().fold(0.0, f64::max);
                let min = p.data().iter().cloned().fold(1.0, f64::min);
                assert!(max / min <= (2.0f64).exp() + 1e-9);
                let entropy: f64 = -p.data().iter().map(|&x| x * x.ln()).sum::<f64>();
                assert!(entropy >= (n2 as f64).ln() - 2.0 - 1e-9);
            }
            // Attend is exact row scaling.
            for k in 0..n2 {
                let p = bundle.p_fused.data()[k];
                for c in 0..dims.d_v {
                    assert_eq!(bundle.v_hat.row(k)[c], p * v.row(k)[c]);
                }
            }
        }
    }

    #[test]
    fn permuting_windows_permutes_every_map() {
        let dims = tiny_dims();
        let params = AttentionParams::init(dims, 5);
        let mut rng = seeded_rng(30);
        let (v, u_g, u_a, u_m) = random_inputs(dims, &mut rng);
        let perm = [2usize, 0, 3, 1];
        let mut v_perm = Tensor::zeros(&[4, dims.d_v]);
        for (dst, &src) in perm.iter().enumerate() {
            for c in 0..dims.d_v {
                v_perm.data_mut()[dst * dims.d_v + c] = v.row(src)[c];
            }
        }
        let run = |vt: &Tensor| {
            let g = Graph::new();
            let vars = params.leaves(&g);
            full_attention(
                &g,
                &vars,
                g.constant(vt.clone()),
                g.constant(u_g.clone()),
                g.constant(u_a.clone()),
                g.constant(u_m.clone()),
                FusionConfig::default(),
            )
            .unwrap()
            .snapshot()
        };
        let base = run(&v);
        let swapped = run(&v_perm);
        for (k, &pk) in perm.iter().enumerate() {
            assert_close(swapped.p_fused.data()[k], base.p_fused.data()[pk], 1e-12);
            assert_close(swapped.phi_g.data()[k], base.phi_g.data()[pk], 1e-12);
            for c in 0..dims.d_v {
                assert_close(swapped.v_hat.row(k)[c], base.v_hat.row(pk)[c], 1e-12);
            }
        }
    }

    #[test]
    fn scaling_the_target_embedding_leaves_its_map_unchanged() {
        let dims = tiny_dims();
        let params = AttentionParams::init(dims, 8);
        let mut rng = seeded_rng(40);
        let (v, u_g, u_a, u_m) = random_inputs(dims, &mut rng);
        let scaled = Tensor::vector(u_g.data().iter().map(|x| 17.5 * x).collect());
        let run = |ug: &Tensor| {
            let g = Graph::new();
            let vars = params.leaves(&g);
            full_attention(
                &g,
                &vars,
                g.constant(v.clone()),
                g.constant(ug.clone()),
                g.constant(u_a.clone()),
                g.constant(u_m.clone()),
                FusionConfig::default(),
            )
            .unwrap()
            .snapshot()
        };
        let a = run(&u_g);
        let b = run(&scaled);
        for k in 0..4 {
            assert_close(b.phi_g.data()[k], a.phi_g.data()[k], 1e-12);
            assert_close(b.p_g.data()[k], a.p_g.data()[k], 1e-12);
        }
    }

    #[test]
    fn disabled_cues_drop_out_of_fusion_and_report_zero_beta() {
        let dims = tiny_dims();
        let params = AttentionParams::init(dims, 2);
        let mut rng = seeded_rng(50);
        let (v, u_g, u_a, u_m) = random_inputs(dims, &mut rng);
        let g = Graph::new();
        let vars = params.leaves(&g);
        let only_target = FusionConfig {
            use_action: false,
            use_memory: false,
            ..FusionConfig::default()
        };
        let flow = full_attention(
            &g,
            &vars,
            g.constant(v),
            g.constant(u_g),
            g.constant(u_a),
            g.constant(u_m),
            only_target,
        )
        .unwrap();
        let bundle = flow.snapshot();
        assert_eq!(bundle.beta[1], 0.0);
        assert_eq!(bundle.beta[2], 0.0);
        // With β_g = 1 at init, fusing only p_g reproduces p_g.
        for (got, want) in bundle.p_fused.data().iter().zip(bundle.p_g.data()) {
            assert_close(*got, *want, 1e-9);
        }
        let none = FusionConfig {
            use_target: false,
            use_action: false,
            use_memory: false,
            ..FusionConfig::default()
        };
        assert!(none.validate().is_err());
    }

    #[test]
    fn full_attention_gradients_match_finite_differences() {
        let dims = tiny_dims();
        let params = AttentionParams::init(dims, 11);
        let mut rng = seeded_rng(60);
        let (v, u_g, u_a, u_m) = random_inputs(dims, &mut rng);
        // Scalar probe: a fixed random functional of v̂ plus β-sensitive
        // fused log-mass, so every parameter matters.
        let probe = Tensor::vector(uniform_vec(&mut rng, 4 * dims.d_v, 1.0));
        let inputs: Vec<Tensor> = params.named().iter().map(|(_, t)| (*t).clone()).collect();
        let report = crate::tensor::grad_check_report(
            |g, leaves| {
                let vars = AttentionVars {
                    w_v: leaves[0],
                    w_g: leaves[1],
                    w_a: leaves[2],
                    w_m: leaves[3],
                    beta_w: leaves[4],
                    beta_b: leaves[5],
                };
                let flow = full_attention(
                    g,
                    &vars,
                    g.constant(v.clone()),
                    g.constant(u_g.clone()),
                    g.constant(u_a.clone()),
                    g.constant(u_m.clone()),
                    FusionConfig::default(),
                )?;
                let flat = flow.v_hat.reshape(vec![4 * dims.d_v])?;
                let weighted = flat.dot(g.constant(probe.clone()))?;
                let log_mass = flow.p_fused.scale_add(1.0, FUSION_EPS).ln()?.sum();
                weighted.add(log_mass.scale(0.1))
            },
            &inputs,
            1e-5,
        )
        .unwrap();
        assert!(
            report.max_rel_err <= 1e-4,
            "worst FD mismatch {} at input {} element {}",
            report.max_rel_err,
            report.worst_input,
            report.worst_element
        );
        // β head specifically must carry gradient (not just the projections).
        assert!(report.elements > 0);
    }

    #[test]
    fn grad_check_covers_the_beta_head_alone() {
        let dims = tiny_dims();
        let params = AttentionParams::init(dims, 13);
        let mut rng = seeded_rng(70);
        let (v, u_g, u_a, u_m) = random_inputs(dims, &mut rng);
        let fixed: Vec<Tensor> = vec![params.beta_w.clone(), params.beta_b.clone()];
        let err = grad_check(
            |g, leaves| {
                let vars = AttentionVars {
                    w_v: g.leaf(params.w_v.clone()),
                    w_g: g.leaf(params.w_g.clone()),
                    w_a: g.leaf(params.w_a.clone()),
                    w_m: g.leaf(params.w_m.clone()),
                    beta_w: leaves[0],
                    beta_b: leaves[1],
                };
                let flow = full_attention(
                    g,
                    &vars,
                    g.constant(v.clone()),
                    g.constant(u_g.clone()),
                    g.constant(u_a.clone()),
                    g.constant(u_m.clone()),
                    FusionConfig::default(),
                )?;
                // Entropy of the fused map depends on β through fusion.
                let logp = flow.p_fused.scale_add(1.0, FUSION_EPS).ln()?;
                flow.p_fused
                    .mul(logp)?
                    .sum()
                    .neg()
                    .add(flow.p_fused.gather(0)?)
            },
            &fixed,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-4, "β-head FD mismatch {err}");
    }
}
