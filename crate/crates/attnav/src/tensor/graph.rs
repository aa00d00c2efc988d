//! Tape-based reverse-mode autodiff.
//!
//! A [`Graph`] owns a Wengert list of nodes. Forward ops push nodes and
//! return lightweight [`Var`] handles; [`Graph::backward`] seeds the root
//! with 1 and walks the tape once in reverse, accumulating vector-Jacobian
//! products into per-node gradient buffers. One graph spans one rollout:
//! recurrent state stays on the tape, so backprop through time needs no
//! extra machinery. A graph is single-threaded and never shared.

// Vector-Jacobian kernels read clearest with explicit row/column indices.
#![allow(clippy::needless_range_loop)]

use std::cell::RefCell;

use super::{contract, Result, Tensor, TensorError};

enum Op {
    /// Differentiable input (parameter or probe); gradient is collected.
    Leaf,
    /// Non-differentiable input; backward never propagates into it.
    Constant,
    Add(usize, usize),
    Sub(usize, usize),
    /// Elementwise product.
    Mul(usize, usize),
    /// Elementwise `k * x + c` with constant `k`, `c`.
    ScaleAdd {
        x: usize,
        k: f64,
    },
    /// `W x (+ b)` for matrix `W`, vector `x`.
    Affine {
        w: usize,
        x: usize,
        b: Option<usize>,
    },
    /// Per-row affine: `out[r, :] = W x[r, :] (+ b)` for matrix `x`.
    LinearRows {
        w: usize,
        x: usize,
        b: Option<usize>,
    },
    Dot(usize, usize),
    Sum(usize),
    Concat(Vec<usize>),
    Slice {
        x: usize,
        start: usize,
        len: usize,
    },
    Reshape {
        x: usize,
    },
    Sigmoid(usize),
    Tanh(usize),
    Ln(usize),
    /// Max-subtracted softmax over a vector.
    Softmax(usize),
    /// `x / max(‖x‖₂, eps)`.
    L2Normalize {
        x: usize,
        eps: f64,
    },
    /// Vector scaled by a scalar node.
    MulScalar {
        x: usize,
        s: usize,
    },
    /// Matrix rows scaled by the matching entries of a vector node.
    RowScale {
        x: usize,
        p: usize,
    },
    /// Single element of a vector, as a scalar node.
    Gather {
        x: usize,
        index: usize,
    },
}

struct Node {
    value: Tensor,
    needs_grad: bool,
    op: Op,
}

/// Append-only autodiff tape. See the module docs.
#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Graph`]. Copyable; ops live on this type.
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

/// Per-node gradient buffers produced by [`Graph::backward`].
///
/// Nodes the root does not reach keep a zero gradient of their value's
/// shape, so callers can always read a well-shaped buffer.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the root with respect to `v` (zeros if unreached).
    pub fn wrt(&self, v: Var<'_>) -> Tensor {
        match self.grads.get(v.id) {
            Some(Some(g)) => g.clone(),
            _ => Tensor::zeros(&v.shape()),
        }
    }

    /// Whether backward actually reached `v` with nonzero flow structure.
    pub fn reached(&self, v: Var<'_>) -> bool {
        matches!(self.grads.get(v.id), Some(Some(_)))
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn push(&self, value: Tensor, needs_grad: bool, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            needs_grad,
            op,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    /// Registers a differentiable input.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(value, true, Op::Leaf)
    }

    /// Registers a non-differentiable input.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, false, Op::Constant)
    }

    fn needs(&self, id: usize) -> bool {
        self.nodes.borrow()[id].needs_grad
    }

    fn value_of(&self, id: usize) -> Tensor {
        self.nodes.borrow()[id].value.clone()
    }

    /// Reverse pass from a scalar root. Returns one gradient buffer per
    /// node; unreached nodes read back as zeros.
    pub fn backward(&self, root: Var<'_>) -> Result<Gradients> {
        if !std::ptr::eq(self, root.graph) {
            return Err(contract("backward", "root belongs to a different graph"));
        }
        let nodes = self.nodes.borrow();
        if !nodes[root.id].value.is_scalar() {
            return Err(TensorError::NotScalar {
                op: "backward",
                shape: nodes[root.id].value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[root.id] = Some(Tensor::scalar(1.0));

        // Ids only ever reference earlier nodes, so one reverse sweep visits
        // every node after all of its consumers.
        for id in (0..=root.id).rev() {
            let node = &nodes[id];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[id].clone() else { continue };
            // Accumulates `delta` into the gradient slot of parent `pid`,
            // skipping parents that cannot need gradients.
            macro_rules! acc {
                ($pid:expr, $delta:expr) => {{
                    let pid: usize = $pid;
                    if nodes[pid].needs_grad {
                        let delta: Tensor = $delta;
                        match &mut grads[pid] {
                            Some(existing) => existing.add_scaled(&delta, 1.0)?,
                            slot => *slot = Some(delta),
                        }
                    }
                }};
            }
            match &node.op {
                Op::Leaf | Op::Constant => {}
                Op::Add(a, b) => {
                    acc!(*a, g.clone());
                    acc!(*b, g.clone());
                }
                Op::Sub(a, b) => {
                    acc!(*a, g.clone());
                    acc!(*b, g.map(|v| -v));
                }
                Op::Mul(a, b) => {
                    acc!(
                        *a,
                        g.zip_map("mul-bwd", &nodes[*b].value, |gv, bv| gv * bv)?
                    );
                    acc!(
                        *b,
                        g.zip_map("mul-bwd", &nodes[*a].value, |gv, av| gv * av)?
                    );
                }
                Op::ScaleAdd { x, k } => {
                    let k = *k;
                    acc!(*x, g.map(|v| k * v));
                }
                Op::Affine { w, x, b } => {
                    let wv = &nodes[*w].value;
                    let xv = &nodes[*x].value;
                    let (rows, cols) = (wv.shape()[0], wv.shape()[1]);
                    let gd = g.data();
                    if nodes[*w].needs_grad {
                        let mut dw = vec![0.0; rows * cols];
                        for r in 0..rows {
                            for c in 0..cols {
                                dw[r * cols + c] = gd[r] * xv.data()[c];
                            }
                        }
                        acc!(*w, Tensor::new(vec![rows, cols], dw)?);
                    }
                    if nodes[*x].needs_grad {
                        let mut dx = vec![0.0; cols];
                        for r in 0..rows {
                            let grow = gd[r];
                            let wrow = wv.row(r);
                            for c in 0..cols {
                                dx[c] += grow * wrow[c];
                            }
                        }
                        acc!(*x, Tensor::vector(dx));
                    }
                    if let Some(b) = b {
                        acc!(*b, g.clone());
                    }
                }
                Op::LinearRows { w, x, b } => {
                    let wv = &nodes[*w].value;
                    let xv = &nodes[*x].value;
                    let (out_dim, in_dim) = (wv.shape()[0], wv.shape()[1]);
                    let n_rows = xv.shape()[0];
                    if nodes[*w].needs_grad {
                        let mut dw = vec![0.0; out_dim * in_dim];
                        for r in 0..n_rows {
                            let grow = g.row(r);
                            let xrow = xv.row(r);
                            for o in 0..out_dim {
                                for i in 0..in_dim {
                                    dw[o * in_dim + i] += grow[o] * xrow[i];
                                }
                            }
                        }
                        acc!(*w, Tensor::new(vec![out_dim, in_dim], dw)?);
                    }
                    if nodes[*x].needs_grad {
                        let mut dx = vec![0.0; n_rows * in_dim];
                        for r in 0..n_rows {
                            let grow = g.row(r);
                            for o in 0..out_dim {
                                let wrow = wv.row(o);
                                for i in 0..in_dim {
                                    dx[r * in_dim + i] += grow[o] * wrow[i];
                                }
                            }
                        }
                        acc!(*x, Tensor::new(vec![n_rows, in_dim], dx)?);
                    }
                    if let Some(b) = b {
                        let mut db = vec![0.0; out_dim];
                        for r in 0..n_rows {
                            for (slot, &gv) in db.iter_mut().zip(g.row(r)) {
                                *slot += gv;
                            }
                        }
                        acc!(*b, Tensor::vector(db));
                    }
                }
                Op::Dot(a, b) => {
                    let gs = g.item()?;
                    acc!(*a, nodes[*b].value.map(|v| gs * v));
                    acc!(*b, nodes[*a].value.map(|v| gs * v));
                }
                Op::Sum(x) => {
                    let gs = g.item()?;
                    acc!(*x, nodes[*x].value.map(|_| gs));
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &pid in parts {
                        let len = nodes[pid].value.len();
                        let piece = g.data()[offset..offset + len].to_vec();
                        acc!(pid, Tensor::vector(piece));
                        offset += len;
                    }
                }
                Op::Slice { x, start, len } => {
                    let mut dx = Tensor::zeros(nodes[*x].value.shape());
                    dx.data_mut()[*start..*start + *len].copy_from_slice(g.data());
                    acc!(*x, dx);
                }
                Op::Reshape { x } => {
                    let shape = nodes[*x].value.shape().to_vec();
                    acc!(*x, Tensor::new(shape, g.data().to_vec())?);
                }
                Op::Sigmoid(x) => {
                    acc!(
                        *x,
                        g.zip_map("sigmoid-bwd", &node.value, |gv, y| gv * y * (1.0 - y))?
                    );
                }
                Op::Tanh(x) => {
                    acc!(
                        *x,
                        g.zip_map("tanh-bwd", &node.value, |gv, y| gv * (1.0 - y * y))?
                    );
                }
                Op::Ln(x) => {
                    acc!(*x, g.zip_map("ln-bwd", &nodes[*x].value, |gv, xv| gv / xv)?);
                }
                Op::Softmax(x) => {
                    // dx = y ⊙ (g − ⟨g, y⟩)
                    let y = &node.value;
                    let gy: f64 = g.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
                    acc!(*x, g.zip_map("softmax-bwd", y, |gv, yv| yv * (gv - gy))?);
                }
                Op::L2Normalize { x, eps } => {
                    let xv = &nodes[*x].value;
                    let norm = xv.l2_norm();
                    if norm > *eps {
                        // y = x/n ⇒ dx = (g − y⟨g,y⟩)/n
                        let y = &node.value;
                        let gy: f64 = g.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
                        acc!(
                            *x,
                            g.zip_map("l2norm-bwd", y, |gv, yv| (gv - gy * yv) / norm)?
                        );
                    } else {
                        // Below the guard the map is linear: y = x/eps.
                        let eps = *eps;
                        acc!(*x, g.map(|gv| gv / eps));
                    }
                }
                Op::MulScalar { x, s } => {
                    let sv = nodes[*s].value.item()?;
                    acc!(*x, g.map(|gv| gv * sv));
                    let gx: f64 = g
                        .data()
                        .iter()
                        .zip(nodes[*x].value.data())
                        .map(|(a, b)| a * b)
                        .sum();
                    acc!(*s, Tensor::scalar(gx));
                }
                Op::RowScale { x, p } => {
                    let xv = &nodes[*x].value;
                    let pv = &nodes[*p].value;
                    let n_rows = xv.shape()[0];
                    if nodes[*x].needs_grad {
                        let mut dx = Tensor::zeros(xv.shape());
                        for r in 0..n_rows {
                            let cols = xv.shape()[1];
                            for c in 0..cols {
                                dx.data_mut()[r * cols + c] = g.row(r)[c] * pv.data()[r];
                            }
                        }
                        acc!(*x, dx);
                    }
                    if nodes[*p].needs_grad {
                        let mut dp = vec![0.0; n_rows];
                        for (r, slot) in dp.iter_mut().enumerate() {
                            *slot = g.row(r).iter().zip(xv.row(r)).map(|(a, b)| a * b).sum();
                        }
                        acc!(*p, Tensor::vector(dp));
                    }
                }
                Op::Gather { x, index } => {
                    let mut dx = Tensor::zeros(nodes[*x].value.shape());
                    dx.data_mut()[*index] = g.item()?;
                    acc!(*x, dx);
                }
            }
        }
        drop(nodes);
        Ok(Gradients { grads })
    }
}

impl<'g> Var<'g> {
    pub fn value(&self) -> Tensor {
        self.graph.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn item(&self) -> Result<f64> {
        self.graph.nodes.borrow()[self.id].value.item()
    }

    fn same_graph(&self, other: Var<'g>, op: &'static str) -> Result<()> {
        if std::ptr::eq(self.graph, other.graph) {
            Ok(())
        } else {
            Err(contract(op, "operands come from different graphs"))
        }
    }

    fn unary(&self, value: Tensor, op: Op) -> Var<'g> {
        let needs = self.graph.needs(self.id);
        self.graph.push(value, needs, op)
    }

    fn binary(&self, other: Var<'g>, value: Tensor, op: Op) -> Var<'g> {
        let needs = self.graph.needs(self.id) || self.graph.needs(other.id);
        self.graph.push(value, needs, op)
    }

    pub fn add(&self, other: Var<'g>) -> Result<Var<'g>> {
        self.same_graph(other, "add")?;
        let value = self.value().zip_map("add", &other.value(), |a, b| a + b)?;
        Ok(self.binary(other, value, Op::Add(self.id, other.id)))
    }

    pub fn sub(&self, other: Var<'g>) -> Result<Var<'g>> {
        self.same_graph(other, "sub")?;
        let value = self.value().zip_map("sub", &other.value(), |a, b| a - b)?;
        Ok(self.binary(other, value, Op::Sub(self.id, other.id)))
    }

    pub fn mul(&self, other: Var<'g>) -> Result<Var<'g>> {
        self.same_graph(other, "mul")?;
        let value = self.value().zip_map("mul", &other.value(), |a, b| a * b)?;
        Ok(self.binary(other, value, Op::Mul(self.id, other.id)))
    }

    /// Elementwise `k * self + c` with constants.
    pub fn scale_add(&self, k: f64, c: f64) -> Var<'g> {
        let value = self.value().map(|v| k * v + c);
        self.unary(value, Op::ScaleAdd { x: self.id, k })
    }

    pub fn scale(&self, k: f64) -> Var<'g> {
        self.scale_add(k, 0.0)
    }

    pub fn neg(&self) -> Var<'g> {
        self.scale_add(-1.0, 0.0)
    }

    pub fn dot(&self, other: Var<'g>) -> Result<Var<'g>> {
        self.same_graph(other, "dot")?;
        let a = self.value();
        let b = other.value();
        if a.shape() != b.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "dot",
                expected: a.shape().to_vec(),
                got: b.shape().to_vec(),
            });
        }
        let v = a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum();
        Ok(self.binary(other, Tensor::scalar(v), Op::Dot(self.id, other.id)))
    }

    pub fn sum(&self) -> Var<'g> {
        let v = self.value().data().iter().sum();
        self.unary(Tensor::scalar(v), Op::Sum(self.id))
    }

    /// Contiguous sub-vector `[start, start + len)` of a vector node.
    pub fn slice(&self, start: usize, len: usize) -> Result<Var<'g>> {
        let v = self.value();
        if start + len > v.len() {
            return Err(contract(
                "slice",
                format!(
                    "range {start}..{} out of bounds for length {}",
                    start + len,
                    v.len()
                ),
            ));
        }
        let piece = v.data()[start..start + len].to_vec();
        Ok(self.unary(
            Tensor::vector(piece),
            Op::Slice {
                x: self.id,
                start,
                len,
            },
        ))
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Var<'g>> {
        let value = Tensor::new(shape, self.value().data().to_vec())?;
        Ok(self.unary(value, Op::Reshape { x: self.id }))
    }

    pub fn sigmoid(&self) -> Var<'g> {
        let value = self.value().map(|v| 1.0 / (1.0 + (-v).exp()));
        self.unary(value, Op::Sigmoid(self.id))
    }

    pub fn tanh(&self) -> Var<'g> {
        let value = self.value().map(f64::tanh);
        self.unary(value, Op::Tanh(self.id))
    }

    /// Natural log; every element must be strictly positive.
    pub fn ln(&self) -> Result<Var<'g>> {
        let v = self.value();
        if v.data().iter().any(|&x| x <= 0.0 || !x.is_finite()) {
            return Err(contract("ln", "input must be strictly positive and finite"));
        }
        Ok(self.unary(v.map(f64::ln), Op::Ln(self.id)))
    }

    /// Max-subtracted softmax over a vector node. Rejects non-finite input.
    pub fn softmax(&self) -> Result<Var<'g>> {
        let v = self.value();
        if !v.all_finite() {
            return Err(TensorError::NonFinite { op: "softmax" });
        }
        let max = v.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = v.data().iter().map(|&x| (x - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let probs = exps.into_iter().map(|e| e / total).collect();
        Ok(self.unary(Tensor::vector(probs), Op::Softmax(self.id)))
    }

    /// `x / max(‖x‖₂, eps)`; yields the zero vector for zero input.
    pub fn l2_normalized(&self, eps: f64) -> Var<'g> {
        let v = self.value();
        let denom = v.l2_norm().max(eps);
        let value = v.map(|x| x / denom);
        self.unary(value, Op::L2Normalize { x: self.id, eps })
    }

    /// This vector scaled by a scalar node.
    pub fn mul_scalar(&self, s: Var<'g>) -> Result<Var<'g>> {
        self.same_graph(s, "mul_scalar")?;
        let sv = s.item().map_err(|_| TensorError::NotScalar {
            op: "mul_scalar",
            shape: s.shape(),
        })?;
        let value = self.value().map(|v| v * sv);
        Ok(self.binary(
            s,
            value,
            Op::MulScalar {
                x: self.id,
                s: s.id,
            },
        ))
    }

    /// Element `index` of a vector node, as a scalar node.
    pub fn gather(&self, index: usize) -> Result<Var<'g>> {
        let v = self.value();
        if index >= v.len() {
            return Err(contract(
                "gather",
                format!("index {index} out of bounds for length {}", v.len()),
            ));
        }
        let value = Tensor::scalar(v.data()[index]);
        Ok(self.unary(value, Op::Gather { x: self.id, index }))
    }
}

/// `W x (+ b)`: matrix–vector product with optional bias.
///
/// `w` must be `[m, n]`, `x` a length-`n` vector, `b` (when given) a
/// length-`m` vector.
pub fn affine<'g>(w: Var<'g>, x: Var<'g>, b: Option<Var<'g>>) -> Result<Var<'g>> {
    w.same_graph(x, "affine")?;
    let wv = w.value();
    let xv = x.value();
    if wv.rank() != 2 || wv.shape()[1] != xv.len() || xv.rank() != 1 {
        return Err(TensorError::ShapeMismatch {
            op: "affine",
            expected: wv.shape().to_vec(),
            got: xv.shape().to_vec(),
        });
    }
    let (rows, cols) = (wv.shape()[0], wv.shape()[1]);
    let mut out = vec![0.0; rows];
    for r in 0..rows {
        let wrow = wv.row(r);
        let mut acc = 0.0;
        for c in 0..cols {
            acc += wrow[c] * xv.data()[c];
        }
        out[r] = acc;
    }
    if let Some(bv) = b {
        w.same_graph(bv, "affine")?;
        let bt = bv.value();
        if bt.len() != rows {
            return Err(TensorError::ShapeMismatch {
                op: "affine",
                expected: vec![rows],
                got: bt.shape().to_vec(),
            });
        }
        for (o, &bias) in out.iter_mut().zip(bt.data()) {
            *o += bias;
        }
    }
    let needs = w.graph.needs(w.id)
        || w.graph.needs(x.id)
        || b.map(|b| w.graph.needs(b.id)).unwrap_or(false);
    Ok(w.graph.push(
        Tensor::vector(out),
        needs,
        Op::Affine {
            w: w.id,
            x: x.id,
            b: b.map(|b| b.id),
        },
    ))
}

/// Applies `W row (+ b)` to every row of matrix `x`: `[R, n] → [R, m]`.
pub fn linear_rows<'g>(w: Var<'g>, x: Var<'g>, b: Option<Var<'g>>) -> Result<Var<'g>> {
    w.same_graph(x, "linear_rows")?;
    let wv = w.value();
    let xv = x.value();
    if wv.rank() != 2 || xv.rank() != 2 || wv.shape()[1] != xv.shape()[1] {
        return Err(TensorError::ShapeMismatch {
            op: "linear_rows",
            expected: wv.shape().to_vec(),
            got: xv.shape().to_vec(),
        });
    }
    let (out_dim, in_dim) = (wv.shape()[0], wv.shape()[1]);
    let n_rows = xv.shape()[0];
    let bias = match b {
        Some(bv) => {
            w.same_graph(bv, "linear_rows")?;
            let bt = bv.value();
            if bt.len() != out_dim {
                return Err(TensorError::ShapeMismatch {
                    op: "linear_rows",
                    expected: vec![out_dim],
                    got: bt.shape().to_vec(),
                });
            }
            Some(bt)
        }
        None => None,
    };
    let mut out = vec![0.0; n_rows * out_dim];
    for r in 0..n_rows {
        let xrow = xv.row(r);
        for o in 0..out_dim {
            let wrow = wv.row(o);
            let mut acc = 0.0;
            for i in 0..in_dim {
                acc += wrow[i] * xrow[i];
            }
            if let Some(bt) = &bias {
                acc += bt.data()[o];
            }
            out[r * out_dim + o] = acc;
        }
    }
    let needs = w.graph.needs(w.id)
        || w.graph.needs(x.id)
        || b.map(|b| w.graph.needs(b.id)).unwrap_or(false);
    Ok(w.graph.push(
        Tensor::new(vec![n_rows, out_dim], out)?,
        needs,
        Op::LinearRows {
            w: w.id,
            x: x.id,
            b: b.map(|b| b.id),
        },
    ))
}

/// Concatenates vector nodes into one vector node.
pub fn concat<'g>(parts: &[Var<'g>]) -> Result<Var<'g>> {
    let first = parts
        .first()
        .ok_or_else(|| contract("concat", "needs at least one input"))?;
    let mut data = Vec::new();
    let mut needs = false;
    for p in parts {
        first.same_graph(*p, "concat")?;
        data.extend_from_slice(p.value().data());
        needs |= first.graph.needs(p.id);
    }
    Ok(first.graph.push(
        Tensor::vector(data),
        needs,
        Op::Concat(parts.iter().map(|p| p.id).collect()),
    ))
}

/// Scales row `r` of matrix `x` by `p[r]`: the attended-feature product.
pub fn row_scale<'g>(x: Var<'g>, p: Var<'g>) -> Result<Var<'g>> {
    x.same_graph(p, "row_scale")?;
    let xv = x.value();
    let pv = p.value();
    if xv.rank() != 2 || pv.rank() != 1 || xv.shape()[0] != pv.len() {
        return Err(TensorError::ShapeMismatch {
            op: "row_scale",
            expected: xv.shape().to_vec(),
            got: pv.shape().to_vec(),
        });
    }
    let cols = xv.shape()[1];
    let mut out = vec![0.0; xv.len()];
    for r in 0..pv.len() {
        for c in 0..cols {
            out[r * cols + c] = xv.row(r)[c] * pv.data()[r];
        }
    }
    let needs = x.graph.needs(x.id) || x.graph.needs(p.id);
    Ok(x.graph.push(
        Tensor::new(xv.shape().to_vec(), out)?,
        needs,
        Op::RowScale { x: x.id, p: p.id },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::{assert_close, seeded_rng, uniform_vec};

    #[test]
    fn add_and_mul_values() {
        let g = Graph::new();
        let a = g.leaf(Tensor::vector(vec![1.0, 2.0]));
        let b = g.leaf(Tensor::vector(vec![3.0, 5.0]));
        let s = a.add(b).unwrap();
        let p = a.mul(b).unwrap();
        assert_eq!(s.value().data(), &[4.0, 7.0]);
        assert_eq!(p.value().data(), &[3.0, 10.0]);
    }

    #[test]
    fn backward_requires_scalar_root() {
        let g = Graph::new();
        let a = g.leaf(Tensor::vector(vec![1.0, 2.0]));
        let err = g.backward(a).unwrap_err();
        assert!(matches!(err, TensorError::NotScalar { .. }), "{err}");
    }

    #[test]
    fn unreached_leaf_reads_zero_gradient() {
        let g = Graph::new();
        let a = g.leaf(Tensor::vector(vec![1.0, 2.0]));
        let b = g.leaf(Tensor::vector(vec![4.0, 4.0]));
        let root = a.sum();
        let grads = g.backward(root).unwrap();
        assert!(!grads.reached(b));
        assert_eq!(grads.wrt(b).data(), &[0.0, 0.0]);
        assert_eq!(grads.wrt(a).data(), &[1.0, 1.0]);
    }

    #[test]
    fn constants_do_not_collect_gradients() {
        let g = Graph::new();
        let a = g.leaf(Tensor::vector(vec![1.0, 2.0]));
        let c = g.constant(Tensor::vector(vec![10.0, 20.0]));
        let root = a.mul(c).unwrap().sum();
        let grads = g.backward(root).unwrap();
        assert_eq!(grads.wrt(a).data(), &[10.0, 20.0]);
        assert!(!grads.reached(c));
    }

    #[test]
    fn mul_gradient_is_the_other_operand() {
        let g = Graph::new();
        let a = g.leaf(Tensor::vector(vec![2.0, -3.0]));
        let b = g.leaf(Tensor::vector(vec![5.0, 7.0]));
        let grads = g.backward(a.mul(b).unwrap().sum()).unwrap();
        assert_eq!(grads.wrt(a).data(), &[5.0, 7.0]);
        assert_eq!(grads.wrt(b).data(), &[2.0, -3.0]);
    }

    #[test]
    fn affine_matches_hand_product() {
        let g = Graph::new();
        let w = g.leaf(Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let x = g.leaf(Tensor::vector(vec![1.0, 0.0, -1.0]));
        let b = g.leaf(Tensor::vector(vec![0.5, -0.5]));
        let y = affine(w, x, Some(b)).unwrap();
        // rows: [1−3, 4−6] + [0.5, −0.5]
        assert_eq!(y.value().data(), &[-1.5, -2.5]);
    }

    #[test]
    fn affine_shape_error_names_both_shapes() {
        let g = Graph::new();
        let w = g.leaf(Tensor::matrix(2, 3, vec![0.0; 6]).unwrap());
        let x = g.leaf(Tensor::vector(vec![0.0; 4]));
        let err = affine(w, x, None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4]"), "got: {msg}");
    }

    #[test]
    fn softmax_is_normalized_and_shift_invariant() {
        let g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let y = x.softmax().unwrap().value();
        let sum: f64 = y.data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12, "softmax sums to {sum}");
        let shifted = g.leaf(Tensor::vector(vec![1001.0, 1002.0, 1003.0]));
        let ys = shifted.softmax().unwrap().value();
        for (a, b) in y.data().iter().zip(ys.data()) {
            assert_close(*a, *b, 1e-12);
        }
    }

    #[test]
    fn softmax_rejects_nan() {
        let g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1.0, f64::NAN]));
        assert!(matches!(
            x.softmax().unwrap_err(),
            TensorError::NonFinite { op: "softmax" }
        ));
    }

    #[test]
    fn l2_normalize_handles_zero_input() {
        let g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![0.0, 0.0, 0.0]));
        let y = x.l2_normalized(1e-8);
        assert_eq!(y.value().data(), &[0.0, 0.0, 0.0]);
        // Gradient through the eps branch is linear and finite.
        let grads = g.backward(y.sum()).unwrap();
        for v in grads.wrt(x).data() {
            assert!(v.is_finite());
        }
    }

    #[test]
    fn ln_rejects_nonpositive() {
        let g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1.0, 0.0]));
        assert!(x.ln().is_err());
    }

    #[test]
    fn mixing_graphs_is_an_error() {
        let g1 = Graph::new();
        let g2 = Graph::new();
        let a = g1.leaf(Tensor::scalar(1.0));
        let b = g2.leaf(Tensor::scalar(2.0));
        assert!(a.add(b).is_err());
    }

    #[test]
    fn slice_and_concat_round_trip_gradients() {
        let g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1.0, 2.0, 3.0, 4.0]));
        let lo = x.slice(0, 2).unwrap();
        let hi = x.slice(2, 2).unwrap();
        let back = concat(&[hi, lo]).unwrap();
        assert_eq!(back.value().data(), &[3.0, 4.0, 1.0, 2.0]);
        let w = g.constant(Tensor::vector(vec![10.0, 20.0, 30.0, 40.0]));
        let grads = g.backward(back.mul(w).unwrap().sum()).unwrap();
        // hi picked up weights 10,20 and lo picked up 30,40.
        assert_eq!(grads.wrt(x).data(), &[30.0, 40.0, 10.0, 20.0]);
    }

    /// Every op's analytic gradient agrees with central finite differences
    /// on a random composite expression exercising all primitives.
    #[test]
    fn composite_expression_matches_finite_differences() {
        let mut rng = seeded_rng(0x5eed_0001);
        for trial in 0..10 {
            let wv = Tensor::matrix(3, 4, uniform_vec(&mut rng, 12, 1.0)).unwrap();
            let xv = Tensor::vector(uniform_vec(&mut rng, 4, 1.0));
            let bv = Tensor::vector(uniform_vec(&mut rng, 3, 1.0));
            let mv = Tensor::matrix(3, 2, uniform_vec(&mut rng, 6, 1.0)).unwrap();

            let f = |inputs: &[Tensor]| -> f64 {
                let g = Graph::new();
                let w = g.leaf(inputs[0].clone());
                let x = g.leaf(inputs[1].clone());
                let b = g.leaf(inputs[2].clone());
                let m = g.leaf(inputs[3].clone());
                build_composite(&g, w, x, b, m).unwrap().item().unwrap()
            };

            let g = Graph::new();
            let w = g.leaf(wv.clone());
            let x = g.leaf(xv.clone());
            let b = g.leaf(bv.clone());
            let m = g.leaf(mv.clone());
            let root = build_composite(&g, w, x, b, m).unwrap();
            let grads = g.backward(root).unwrap();

            let inputs = [wv, xv, bv, mv];
            let analytic = [grads.wrt(w), grads.wrt(x), grads.wrt(b), grads.wrt(m)];
            let eps = 1e-5;
            for (i, input) in inputs.iter().enumerate() {
                for e in 0..input.len() {
                    let mut plus = inputs.clone();
                    plus[i].data_mut()[e] += eps;
                    let mut minus = inputs.clone();
                    minus[i].data_mut()[e] -= eps;
                    let numeric = (f(&plus) - f(&minus)) / (2.0 * eps);
                    let a = analytic[i].data()[e];
                    let rel = (a - numeric).abs() / 1.0_f64.max(a.abs()).max(numeric.abs());
                    assert!(
                        rel <= 1e-7,
                        "trial {trial} input {i} elem {e}: analytic {a} vs numeric {numeric} (rel {rel:.3e})"
                    );
                }
            }
        }
    }

    /// Touches every primitive at least once and ends in a scalar.
    fn build_composite<'g>(
        _g: &'g Graph,
        w: Var<'g>,
        x: Var<'g>,
        b: Var<'g>,
        m: Var<'g>,
    ) -> crate::tensor::Result<Var<'g>> {
        let y = affine(w, x, Some(b))?; // [3]
        let sm = y.softmax()?;
        let ent = sm.ln()?.dot(sm)?.neg(); // entropy of softmax
        let nrm = y.l2_normalized(1e-8);
        let rows = linear_rows(m.reshape(vec![2, 3])?, nrm.reshape(vec![1, 3])?, None)?; // [1, 2]
        let flat = rows.reshape(vec![2])?;
        let pick = flat.gather(1)?;
        let scaled = sm.mul_scalar(pick)?;
        let mat = concat(&[scaled, flat.slice(0, 1)?, x.slice(0, 2)?])?.reshape(vec![2, 3])?;
        let weights = mat.sigmoid().reshape(vec![6])?.slice(0, 2)?;
        let attended = row_scale(mat, weights.tanh().scale_add(0.5, 1.0))?;
        let total = attended.reshape(vec![6])?.sum();
        ent.add(total)?.sub(pick)?.mul(pick)?.dot(pick.scale(0.25))
    }

    #[test]
    fn replay_is_bit_identical() {
        let run = || {
            let g = Graph::new();
            let w = g.leaf(Tensor::matrix(2, 2, vec![0.3, -1.2, 0.7, 0.01]).unwrap());
            let x = g.leaf(Tensor::vector(vec![0.5, -0.25]));
            let y = affine(w, x, None).unwrap().softmax().unwrap();
            let root = y.ln().unwrap().dot(y).unwrap().neg();
            let grads = g.backward(root).unwrap();
            (root.item().unwrap(), grads.wrt(w).data().to_vec())
        };
        let (v1, g1) = run();
        let (v2, g2) = run();
        assert_eq!(v1.to_bits(), v2.to_bits());
        for (a, b) in g1.iter().zip(&g2) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
