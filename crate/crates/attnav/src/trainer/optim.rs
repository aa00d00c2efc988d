//! Parameter-update rules: adaptive-moment estimation for the outer loop
//! and plain gradient descent (the inner adaptation rule, also exposed for
//! tests).
//!
//! The adaptive-moment state is slot-aligned with the model's named
//! parameter list, and serializes into the same named-tensor container as
//! the parameters (`opt.adam.m.<name>`, `opt.adam.v.<name>`,
//! `opt.adam.step`).

use crate::tensor::{Tensor, TensorError};

use super::{Result, TrainError};

/// Adaptive-moment hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Adaptive-moment optimizer state over a fixed list of parameter slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub hyper: AdamHyper,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    /// Fresh state (zero moments) shaped like `params`.
    pub fn new(hyper: AdamHyper, params: &[(&'static str, &Tensor)]) -> Self {
        Self {
            hyper,
            step: 0,
            m: params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect(),
            v: params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update across all slots. `params` and `grads`
    /// must be slot-aligned with the state.
    pub fn apply(
        &mut self,
        params: &mut [(&'static str, &mut Tensor)],
        grads: &[Tensor],
    ) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(TrainError::Config(format!(
                "optimizer got {} slots / {} gradients for {} states",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for ((name, param), grad) in params.iter().zip(grads) {
            if param.shape() != grad.shape() {
                return Err(TensorError::Contract {
                    op: "optimizer_step",
                    msg: format!(
                        "gradient shape {:?} does not match parameter {name} {:?}",
                        grad.shape(),
                        param.shape()
                    ),
                }
                .into());
            }
            if !grad.all_finite() {
                return Err(TrainError::NonFinite(format!(
                    "gradient for {name} is non-finite"
                )));
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let h = self.hyper;
        let m_corr = 1.0 - h.beta1.powf(t);
        let v_corr = 1.0 - h.beta2.powf(t);
        for (slot, (_, param)) in params.iter_mut().enumerate() {
            let m = self.m[slot].data_mut();
            let v = self.v[slot].data_mut();
            let g = grads[slot].data();
            let theta = param.data_mut();
            for k in 0..g.len() {
                m[k] = h.beta1 * m[k] + (1.0 - h.beta1) * g[k];
                v[k] = h.beta2 * v[k] + (1.0 - h.beta2) * g[k] * g[k];
                let m_hat = m[k] / m_corr;
                let v_hat = v[k] / v_corr;
                theta[k] -= h.lr * m_hat / (v_hat.sqrt() + h.eps);
            }
        }
        Ok(())
    }

    /// Serializes the state next to the parameter names it is aligned to.
    pub fn named_state(&self, names: &[&'static str]) -> Vec<(String, Tensor)> {
        assert_eq!(names.len(), self.m.len(), "state/name slot mismatch");
        let mut out = Vec::with_capacity(2 * names.len() + 1);
        for (k, name) in names.iter().enumerate() {
            out.push((format!("opt.adam.m.{name}"), self.m[k].clone()));
        }
        for (k, name) in names.iter().enumerate() {
            out.push((format!("opt.adam.v.{name}"), self.v[k].clone()));
        }
        out.push(("opt.adam.step".to_string(), u64_tensor(self.step)));
        out
    }

    /// Rebuilds state from serialized entries (shape-checked per slot).
    pub fn restore(
        hyper: AdamHyper,
        params: &[(&'static str, &Tensor)],
        entries: &std::collections::HashMap<String, Tensor>,
    ) -> Result<Self> {
        let fetch = |key: String, like: &Tensor| -> Result<Tensor> {
            let t = entries
                .get(&key)
                .ok_or_else(|| TrainError::Checkpoint(format!("missing record {key}")))?;
            if t.shape() != like.shape() {
                return Err(TrainError::Checkpoint(format!(
                    "record {key} has shape {:?}, expected {:?}",
                    t.shape(),
                    like.shape()
                )));
            }
            Ok(t.clone())
        };
        let mut m = Vec::with_capacity(params.len());
        let mut v = Vec::with_capacity(params.len());
        for (name, like) in params {
            m.push(fetch(format!("opt.adam.m.{name}"), like)?);
            v.push(fetch(format!("opt.adam.v.{name}"), like)?);
        }
        let step = entries
            .get("opt.adam.step")
            .ok_or_else(|| TrainError::Checkpoint("missing record opt.adam.step".into()))
            .and_then(tensor_u64)?;
        Ok(Self { hyper, step, m, v })
    }
}

/// Plain gradient descent: θ ← θ − lr·g across all slots.
pub fn sgd_step(
    params: &mut [(&'static str, &mut Tensor)],
    grads: &[Tensor],
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(TrainError::Config(format!(
            "sgd got {} slots for {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for ((name, param), grad) in params.iter_mut().zip(grads) {
        if !grad.all_finite() {
            return Err(TrainError::NonFinite(format!(
                "gradient for {name} is non-finite"
            )));
        }
        param.add_scaled(grad, -lr)?;
    }
    Ok(())
}

/// Encodes a u64 exactly as eight byte-valued lanes (the container stores
/// 32-bit floats, which hold 0..=255 exactly).
pub fn u64_tensor(x: u64) -> Tensor {
    Tensor::vector(x.to_le_bytes().iter().map(|&b| b as f64).collect())
}

/// Decodes [`u64_tensor`].
pub fn tensor_u64(t: &Tensor) -> Result<u64> {
    if t.shape() != [8] {
        return Err(TrainError::Checkpoint(format!(
            "u64 record has shape {:?}, expected [8]",
            t.shape()
        )));
    }
    let mut bytes = [0u8; 8];
    for (k, &lane) in t.data().iter().enumerate() {
        if !(0.0..=255.0).contains(&lane) || lane.fract() != 0.0 {
            return Err(TrainError::Checkpoint(format!(
                "u64 record lane {k} holds {lane}, not a byte value"
            )));
        }
        bytes[k] = lane as u8;
    }
    Ok(u64::from_le_bytes(bytes))
}
