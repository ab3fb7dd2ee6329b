//! Reverse-mode differentiation over a recorded tape.
//!
//! A [`Tape`] owns every intermediate value of one forward pass. Ops are
//! methods on [`Var`], a cheap handle into the tape. Calling
//! [`Tape::backward`] on a scalar accumulates gradients into every leaf
//! created with `requires_grad`; repeated calls accumulate until
//! [`Tape::zero_grad`].

use std::cell::{Ref, RefCell};

use crate::error::{Error, Result};
use crate::kernels::{self, ConvGeometry};
use crate::tensor::{Element, Tensor};

/// Probability floor inside the cross-entropy log.
pub const CROSS_ENTROPY_EPS: f64 = 1e-12;

#[derive(Debug)]
enum Op<F> {
    Leaf,
    Conv3d {
        x: usize,
        w: usize,
        b: usize,
        geom: ConvGeometry,
    },
    MaxPool3d {
        x: usize,
        argmax: Vec<usize>,
    },
    Relu(usize),
    Sigmoid(usize),
    Add(usize, usize),
    Mul(usize, usize),
    Scale(usize, F),
    Linear {
        x: usize,
        w: usize,
        b: usize,
    },
    Softmax(usize),
    CrossEntropy {
        probs: usize,
        targets: Vec<usize>,
    },
    Sum(usize),
    Reshape(usize),
    Concat(usize, usize),
}

#[derive(Debug)]
struct Node<F> {
    value: Tensor<F>,
    op: Op<F>,
    requires_grad: bool,
    grad: Option<Tensor<F>>,
}

/// Recording of one forward computation.
#[derive(Debug, Default)]
pub struct Tape<F> {
    nodes: RefCell<Vec<Node<F>>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy)]
pub struct Var<'t, F> {
    tape: &'t Tape<F>,
    id: usize,
}

impl<F: Element> Tape<F> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records an input. Gradients are only kept for `requires_grad` leaves.
    pub fn leaf(&self, value: Tensor<F>, requires_grad: bool) -> Var<'_, F> {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&self, value: Tensor<F>) -> Var<'_, F> {
        self.leaf(value, false)
    }

    pub fn param(&self, value: Tensor<F>) -> Var<'_, F> {
        self.leaf(value, true)
    }

    fn push(&self, value: Tensor<F>, op: Op<F>, requires_grad: bool) -> Var<'_, F> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn needs(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    /// Accumulated gradient of a leaf, if any has been computed.
    pub fn grad(&self, var: Var<'_, F>) -> Option<Tensor<F>> {
        self.nodes.borrow()[var.id].grad.clone()
    }

    pub fn zero_grad(&self) {
        for node in self.nodes.borrow_mut().iter_mut() {
            node.grad = None;
        }
    }

    /// Back-propagates from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_, F>) -> Result<()> {
        let mut leaf_grads: Vec<(usize, Tensor<F>)> = Vec::new();
        {
            let nodes = self.nodes.borrow();
            if nodes[loss.id].value.numel() != 1 {
                return Err(Error::InvalidArgument(format!(
                    "backward needs a scalar loss, got shape {:?}",
                    nodes[loss.id].value.shape()
                )));
            }
            let mut grads: Vec<Option<Tensor<F>>> = (0..=loss.id).map(|_| None).collect();
            grads[loss.id] = Some(Tensor::full(nodes[loss.id].value.shape(), F::ONE));

            for id in (0..=loss.id).rev() {
                let Some(g) = grads[id].take() else { continue };
                let node = &nodes[id];
                if !node.requires_grad {
                    continue;
                }
                for (input, contrib) in local_grads(&nodes, node, g.clone()) {
                    match &mut grads[input] {
                        Some(acc) => acc.add_assign(&contrib)?,
                        slot => *slot = Some(contrib),
                    }
                }
                if matches!(node.op, Op::Leaf) {
                    leaf_grads.push((id, g));
                }
            }
        }
        let mut nodes = self.nodes.borrow_mut();
        for (id, g) in leaf_grads {
            match &mut nodes[id].grad {
                Some(acc) => acc.add_assign(&g)?,
                slot => *slot = Some(g),
            }
        }
        Ok(())
    }
}

/// Vector-Jacobian products of one node, for inputs that require grad.
fn local_grads<F: Element>(nodes: &[Node<F>], node: &Node<F>, g: Tensor<F>) -> Vec<(usize, Tensor<F>)> {
    let val = |i: usize| &nodes[i].value;
    let wants = |i: usize| nodes[i].requires_grad;
    let mut out = Vec::new();
    match &node.op {
        Op::Leaf => {}
        Op::Conv3d { x, w, b, geom } => {
            if wants(*x) {
                let dx = kernels::conv3d_backward_input(geom, val(*w).data(), g.data());
                out.push((*x, Tensor::new(val(*x).shape().to_vec(), dx).unwrap()));
            }
            if wants(*w) || wants(*b) {
                let (dw, db) = kernels::conv3d_backward_params(geom, val(*x).data(), g.data());
                out.push((*w, Tensor::new(val(*w).shape().to_vec(), dw).unwrap()));
                out.push((*b, Tensor::new(val(*b).shape().to_vec(), db).unwrap()));
            }
        }
        Op::MaxPool3d { x, argmax } => {
            let mut dx = Tensor::zeros(val(*x).shape());
            let d = dx.data_mut();
            for (&src, &gv) in argmax.iter().zip(g.data()) {
                d[src] += gv;
            }
            out.push((*x, dx));
        }
        Op::Relu(x) => {
            let xs = val(*x).data();
            let d = g.data().iter().zip(xs).map(|(&gv, &xv)| if xv > F::ZERO { gv } else { F::ZERO });
            out.push((*x, Tensor::new(g.shape().to_vec(), d.collect()).unwrap()));
        }
        Op::Sigmoid(x) => {
            let ys = node.value.data();
            let d = g.data().iter().zip(ys).map(|(&gv, &y)| gv * y * (F::ONE - y));
            out.push((*x, Tensor::new(g.shape().to_vec(), d.collect()).unwrap()));
        }
        Op::Add(a, b) => {
            out.push((*a, g.clone()));
            out.push((*b, g));
        }
        Op::Mul(a, b) => {
            let da = g.data().iter().zip(val(*b).data()).map(|(&gv, &bv)| gv * bv);
            let db = g.data().iter().zip(val(*a).data()).map(|(&gv, &av)| gv * av);
            out.push((*a, Tensor::new(g.shape().to_vec(), da.collect()).unwrap()));
            out.push((*b, Tensor::new(g.shape().to_vec(), db.collect()).unwrap()));
        }
        Op::Scale(a, c) => out.push((*a, g.map(|v| v * *c))),
        Op::Linear { x, w, b } => {
            let (rows, features) = (val(*x).shape()[0], val(*x).shape()[1]);
            let outputs = val(*b).numel();
            let (dx, dw, db) =
                kernels::linear_backward(val(*x).data(), val(*w).data(), g.data(), rows, features, outputs);
            out.push((*x, Tensor::new(val(*x).shape().to_vec(), dx).unwrap()));
            out.push((*w, Tensor::new(val(*w).shape().to_vec(), dw).unwrap()));
            out.push((*b, Tensor::new(val(*b).shape().to_vec(), db).unwrap()));
        }
        Op::Softmax(x) => {
            let y = &node.value;
            let cols = y.shape()[1];
            let mut dx = Vec::with_capacity(y.numel());
            for (yr, gr) in y.data().chunks_exact(cols).zip(g.data().chunks_exact(cols)) {
                let inner: F = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                dx.extend(yr.iter().zip(gr).map(|(&yv, &gv)| yv * (gv - inner)));
            }
            out.push((*x, Tensor::new(y.shape().to_vec(), dx).unwrap()));
        }
        Op::CrossEntropy { probs, targets } => {
            let p = val(*probs);
            let cols = p.shape()[1];
            let scale = g.data()[0] / F::from_f64(targets.len() as f64);
            let eps = F::from_f64(CROSS_ENTROPY_EPS);
            let mut dp = Tensor::zeros(p.shape());
            for (n, &t) in targets.iter().enumerate() {
                let pv = p.data()[n * cols + t];
                if pv > eps {
                    dp.data_mut()[n * cols + t] = -scale / pv;
                }
            }
            out.push((*probs, dp));
        }
        Op::Sum(x) => {
            let gv = g.data()[0];
            out.push((*x, Tensor::full(val(*x).shape(), gv)));
        }
        Op::Reshape(x) => out.push((*x, g.reshape(val(*x).shape()).unwrap())),
        Op::Concat(a, b) => {
            let (ka, kb) = (val(*a).shape()[1], val(*b).shape()[1]);
            let mut da = Vec::new();
            let mut db = Vec::new();
            for row in g.data().chunks_exact(ka + kb) {
                da.extend_from_slice(&row[..ka]);
                db.extend_from_slice(&row[ka..]);
            }
            out.push((*a, Tensor::new(val(*a).shape().to_vec(), da).unwrap()));
            out.push((*b, Tensor::new(val(*b).shape().to_vec(), db).unwrap()));
        }
    }
    out.retain(|(i, _)| wants(*i));
    out
}

fn same_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(Error::shape(op, format!("{a:?} vs {b:?}")));
    }
    Ok(())
}

impl<'t, F: Element> Var<'t, F> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape<F> {
        self.tape
    }

    pub fn value(&self) -> Ref<'t, Tensor<F>> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.id].value)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    fn unary(&self, value: Tensor<F>, op: Op<F>) -> Var<'t, F> {
        let rg = self.tape.needs(&[self.id]);
        self.tape.push(value, op, rg)
    }

    /// Stride-1 3D cross-correlation plus bias.
    ///
    /// `self`: `N×C_in×T×H×W`, `weight`: `C_out×C_in×kT×kH×kW`, `bias`: `C_out`.
    pub fn conv3d(&self, weight: Var<'t, F>, bias: Var<'t, F>, padding: [usize; 3]) -> Result<Var<'t, F>> {
        let (xs, ws, bs) = (self.shape(), weight.shape(), bias.shape());
        if xs.len() != 5 || ws.len() != 5 {
            return Err(Error::shape(
                "conv3d",
                format!("input {xs:?} and weight {ws:?} must both be rank 5"),
            ));
        }
        if xs[1] != ws[1] {
            return Err(Error::shape(
                "conv3d",
                format!("input {xs:?} has {} channels but weight {ws:?} expects {}", xs[1], ws[1]),
            ));
        }
        if bs != [ws[0]] {
            return Err(Error::shape("conv3d", format!("bias {bs:?} for weight {ws:?}")));
        }
        if ws[2..].iter().any(|&k| k % 2 == 0) {
            return Err(Error::InvalidArgument(format!(
                "conv3d kernel extents must be odd, got {:?}",
                &ws[2..]
            )));
        }
        let geom = ConvGeometry {
            batch: xs[0],
            in_channels: xs[1],
            out_channels: ws[0],
            input: [xs[2], xs[3], xs[4]],
            kernel: [ws[2], ws[3], ws[4]],
            padding,
        };
        let [t, h, w] = geom.output();
        let data = {
            let (x, wt, b) = (self.value(), weight.value(), bias.value());
            kernels::conv3d_forward(&geom, x.data(), wt.data(), b.data())
        };
        let value = Tensor::new(vec![xs[0], ws[0], t, h, w], data)?;
        let rg = self.tape.needs(&[self.id, weight.id, bias.id]);
        Ok(self.tape.push(
            value,
            Op::Conv3d {
                x: self.id,
                w: weight.id,
                b: bias.id,
                geom,
            },
            rg,
        ))
    }

    /// Ceil-mode max pooling with window = stride = `pool` over `(T, H, W)`.
    pub fn maxpool3d(&self, pool: [usize; 3]) -> Result<Var<'t, F>> {
        if pool.contains(&0) {
            return Err(Error::InvalidArgument(format!("pool extents must be >= 1, got {pool:?}")));
        }
        let xs = self.shape();
        if xs.len() != 5 {
            return Err(Error::shape("maxpool3d", format!("input {xs:?} must be rank 5")));
        }
        let extents = [xs[2], xs[3], xs[4]];
        let (data, argmax) = kernels::maxpool3d_forward(&self.value().data(), xs[0] * xs[1], extents, pool);
        let shape = vec![
            xs[0],
            xs[1],
            kernels::pooled_extent(xs[2], pool[0]),
            kernels::pooled_extent(xs[3], pool[1]),
            kernels::pooled_extent(xs[4], pool[2]),
        ];
        Ok(self.unary(Tensor::new(shape, data)?, Op::MaxPool3d { x: self.id, argmax }))
    }

    pub fn relu(&self) -> Var<'t, F> {
        let v = self.value().map(|x| if x > F::ZERO { x } else { F::ZERO });
        self.unary(v, Op::Relu(self.id))
    }

    pub fn sigmoid(&self) -> Var<'t, F> {
        let v = self.value().map(|x| F::ONE / (F::ONE + (-x).exp()));
        self.unary(v, Op::Sigmoid(self.id))
    }

    pub fn add(&self, other: Var<'t, F>) -> Result<Var<'t, F>> {
        let v = {
            let (a, b) = (self.value(), other.value());
            same_shape("add", a.shape(), b.shape())?;
            let d = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
            Tensor::new(a.shape().to_vec(), d)?
        };
        let rg = self.tape.needs(&[self.id, other.id]);
        Ok(self.tape.push(v, Op::Add(self.id, other.id), rg))
    }

    /// Elementwise product.
    pub fn mul(&self, other: Var<'t, F>) -> Result<Var<'t, F>> {
        let v = {
            let (a, b) = (self.value(), other.value());
            same_shape("mul", a.shape(), b.shape())?;
            let d = a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect();
            Tensor::new(a.shape().to_vec(), d)?
        };
        let rg = self.tape.needs(&[self.id, other.id]);
        Ok(self.tape.push(v, Op::Mul(self.id, other.id), rg))
    }

    pub fn scale(&self, c: F) -> Var<'t, F> {
        let v = self.value().map(|x| x * c);
        self.unary(v, Op::Scale(self.id, c))
    }

    /// Affine map `N×F → N×K` with `weight: K×F`, `bias: K`.
    pub fn linear(&self, weight: Var<'t, F>, bias: Var<'t, F>) -> Result<Var<'t, F>> {
        let (xs, ws, bs) = (self.shape(), weight.shape(), bias.shape());
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] || bs != [ws[0]] {
            return Err(Error::shape(
                "linear",
                format!("input {xs:?}, weight {ws:?}, bias {bs:?}"),
            ));
        }
        let data = {
            let (x, w, b) = (self.value(), weight.value(), bias.value());
            kernels::linear_forward(x.data(), w.data(), b.data(), xs[0], xs[1])
        };
        let value = Tensor::new(vec![xs[0], ws[0]], data)?;
        let rg = self.tape.needs(&[self.id, weight.id, bias.id]);
        Ok(self.tape.push(
            value,
            Op::Linear {
                x: self.id,
                w: weight.id,
                b: bias.id,
            },
            rg,
        ))
    }

    /// Row-wise softmax of an `N×K` tensor, computed after max subtraction.
    pub fn softmax(&self) -> Result<Var<'t, F>> {
        let xs = self.shape();
        if xs.len() != 2 || xs[1] == 0 {
            return Err(Error::shape("softmax", format!("expected N×K with K >= 1, got {xs:?}")));
        }
        let v = {
            let x = self.value();
            Tensor::new(xs.clone(), softmax_rows(x.data(), xs[1]))?
        };
        Ok(self.unary(v, Op::Softmax(self.id)))
    }

    /// Mean over rows of `-ln(max(p[target], ε))`.
    pub fn cross_entropy(&self, targets: &[usize]) -> Result<Var<'t, F>> {
        let ps = self.shape();
        if ps.len() != 2 || ps[0] != targets.len() || ps[0] == 0 {
            return Err(Error::shape(
                "cross_entropy",
                format!("probs {ps:?} with {} targets", targets.len()),
            ));
        }
        if let Some((n, &t)) = targets.iter().enumerate().find(|(_, &t)| t >= ps[1]) {
            return Err(Error::InvalidArgument(format!(
                "target {t} at row {n} out of range for {} classes",
                ps[1]
            )));
        }
        let loss = {
            let p = self.value();
            let eps = F::from_f64(CROSS_ENTROPY_EPS);
            let total: F = targets
                .iter()
                .enumerate()
                .map(|(n, &t)| -p.data()[n * ps[1] + t].max(eps).ln())
                .sum();
            total / F::from_f64(targets.len() as f64)
        };
        Ok(self.unary(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                probs: self.id,
                targets: targets.to_vec(),
            },
        ))
    }

    pub fn sum(&self) -> Var<'t, F> {
        let s = self.value().data().iter().copied().sum();
        self.unary(Tensor::scalar(s), Op::Sum(self.id))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'t, F>> {
        let v = self.value().clone().reshape(shape)?;
        Ok(self.unary(v, Op::Reshape(self.id)))
    }

    /// Collapses all but the leading axis.
    pub fn flatten(&self) -> Result<Var<'t, F>> {
        let s = self.shape();
        let n = s.first().copied().unwrap_or(1);
        let rest = s.iter().skip(1).product();
        self.reshape(&[n, rest])
    }

    /// Concatenates two `N×K` tensors along the second axis.
    pub fn concat(&self, other: Var<'t, F>) -> Result<Var<'t, F>> {
        let (a, b) = (self.shape(), other.shape());
        if a.len() != 2 || b.len() != 2 || a[0] != b[0] {
            return Err(Error::shape("concat", format!("{a:?} vs {b:?}")));
        }
        let v = {
            let (av, bv) = (self.value(), other.value());
            let mut d = Vec::with_capacity(av.numel() + bv.numel());
            for n in 0..a[0] {
                d.extend_from_slice(av.row(n));
                d.extend_from_slice(bv.row(n));
            }
            Tensor::new(vec![a[0], a[1] + b[1]], d)?
        };
        let rg = self.tape.needs(&[self.id, other.id]);
        Ok(self.tape.push(v, Op::Concat(self.id, other.id), rg))
    }
}

/// Numerically stable row-wise softmax.
pub fn softmax_rows<F: Element>(data: &[F], cols: usize) -> Vec<F> {
    let mut out = Vec::with_capacity(data.len());
    for row in data.chunks_exact(cols) {
        let m = row.iter().copied().fold(row[0], F::max);
        let start = out.len();
        out.extend(row.iter().map(|&v| (v - m).exp()));
        let z: F = out[start..].iter().copied().sum();
        for v in &mut out[start..] {
            *v = *v / z;
        }
    }
    out
}
