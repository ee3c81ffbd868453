//! Tape-based reverse-mode automatic differentiation.
//!
//! Every differentiable operation is a method on [`Tape`] that evaluates
//! eagerly, stores its result as a new node and returns a [`Var`] handle.
//! [`Tape::backward`] replays the nodes in reverse insertion order, which is
//! a valid reverse topological order because a node can only reference
//! nodes created before it.

use crate::error::{Error, Result};
use crate::ops::activation::Activation;
use crate::ops::conv::ConvSpec;
use crate::ops::interp::LinearTable;
use crate::ops::{activation, combine, conv, interp, loss, norm, pool, reduce};
use crate::tensor::{Element, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) enum Op<T> {
    Leaf,
    Conv3d {
        x: Var,
        w: Var,
        b: Option<Var>,
        spec: ConvSpec,
    },
    MaxPool3d {
        x: Var,
        argmax: Vec<u32>,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        /// Normalized input, kept only in training mode.
        xhat: Option<Vec<T>>,
        mean: Vec<T>,
        inv_std: Vec<T>,
    },
    Activation {
        x: Var,
        kind: Activation,
    },
    Interp {
        x: Var,
        axis: usize,
        table: LinearTable<T>,
    },
    Add {
        a: Var,
        b: Var,
    },
    Concat {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        c: T,
    },
    Sum {
        x: Var,
    },
    Mean {
        x: Var,
    },
    MeanPerItem {
        x: Var,
    },
    WeightedBce {
        p: Var,
        y: Vec<T>,
        w_fg: T,
        w_bg: T,
    },
    GanBce {
        logits: Var,
        target: T,
    },
}

impl<T> Op<T> {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Conv3d { x, w, b, .. } => {
                let mut v = vec![*x, *w];
                v.extend(b.iter().copied());
                v
            }
            Op::BatchNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Op::Add { a, b } | Op::Concat { a, b } | Op::Mul { a, b } => vec![*a, *b],
            Op::MaxPool3d { x, .. }
            | Op::Activation { x, .. }
            | Op::Interp { x, .. }
            | Op::Scale { x, .. }
            | Op::Sum { x }
            | Op::Mean { x }
            | Op::MeanPerItem { x } => vec![*x],
            Op::WeightedBce { p, .. } => vec![*p],
            Op::GanBce { logits, .. } => vec![*logits],
        }
    }
}

pub(crate) struct Node<T> {
    pub(crate) value: Tensor<T>,
    pub(crate) op: Op<T>,
    pub(crate) requires_grad: bool,
}

/// Ordered record of executed operations.
///
/// A tape is confined to one execution context; kernels may fan out over
/// worker threads internally but the tape itself is never shared.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    /// Accumulated gradients of leaves, indexed like `nodes`.
    leaf_grads: Vec<Option<Tensor<T>>>,
}

impl<T: Element> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            leaf_grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf. Gradients are tracked iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        let rg = t.requires_grad();
        self.push(t, Op::Leaf, rg)
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.leaf(t.with_requires_grad(true))
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.leaf(t.with_requires_grad(false))
    }

    /// A constant copy of `v`'s value; gradients stop here.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.constant(t)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.leaf_grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn zero_grad(&mut self) {
        self.leaf_grads.iter_mut().for_each(|g| *g = None);
    }

    pub(crate) fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: value.with_requires_grad(requires_grad),
            op,
            requires_grad,
        });
        self.leaf_grads.push(None);
        Var(self.nodes.len() - 1)
    }

    /// Records a derived node; it tracks gradients iff any input does.
    pub(crate) fn push_op(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        let rg = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(value, op, rg)
    }

    /// Accumulates d(loss)/d(leaf) into every gradient-tracking leaf reachable
    /// from `loss`. Repeated calls add to the stored gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        if !self.requires_grad(loss) {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<T>>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                match &mut self.leaf_grads[i] {
                    Some(acc) => acc.data_mut().iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
                    slot => {
                        *slot = Some(Tensor::from_vec(node.value.shape(), g)?);
                    }
                }
                continue;
            }
            self.backward_node(i, &g, &mut grads)?;
        }
        Ok(())
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backward_node(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) -> Result<()> {
        let node = &self.nodes[i];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Conv3d { x, w, b, spec } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let geom = conv::Geometry::new(spec, xv.dims5()?)?;
                if self.wants(*x) {
                    let mut gx = vec![T::zero(); xv.len()];
                    conv::backward_input(&geom, g, wv.data(), &mut gx);
                    accumulate(grads, *x, gx);
                }
                if self.wants(*w) {
                    let mut gw = vec![T::zero(); wv.len()];
                    conv::backward_weight(&geom, g, xv.data(), &mut gw);
                    accumulate(grads, *w, gw);
                }
                if let Some(b) = b {
                    if self.wants(*b) {
                        accumulate(grads, *b, conv::backward_bias(&geom, g));
                    }
                }
            }
            Op::MaxPool3d { x, argmax } => {
                if self.wants(*x) {
                    let xv = self.value(*x);
                    accumulate(grads, *x, pool::backward(xv.shape(), out.shape(), argmax, g));
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                mean,
                inv_std,
            } => {
                let xv = self.value(*x);
                let gv = self.value(*gamma);
                let bg = norm::backward(xv, gv.data(), xhat.as_deref(), mean, inv_std, g, self.wants(*x));
                if let Some(gx) = bg.input {
                    accumulate(grads, *x, gx);
                }
                if self.wants(*gamma) {
                    accumulate(grads, *gamma, bg.gamma);
                }
                if self.wants(*beta) {
                    accumulate(grads, *beta, bg.beta);
                }
            }
            Op::Activation { x, kind } => {
                if self.wants(*x) {
                    let gx = activation::backward(*kind, self.value(*x).data(), out.data(), g);
                    accumulate(grads, *x, gx);
                }
            }
            Op::Interp { x, axis, table } => {
                if self.wants(*x) {
                    let xv = self.value(*x);
                    let (_, inner) = interp::outer_inner(xv.shape(), *axis);
                    let mut gx = vec![T::zero(); xv.len()];
                    table.apply_transpose(inner, g, &mut gx);
                    accumulate(grads, *x, gx);
                }
            }
            Op::Add { a, b } => {
                if self.wants(*a) {
                    accumulate(grads, *a, g.to_vec());
                }
                if self.wants(*b) {
                    accumulate(grads, *b, g.to_vec());
                }
            }
            Op::Concat { a, b } => {
                let (ga, gb) = combine::split_channels(self.value(*a).shape(), self.value(*b).shape(), g);
                if self.wants(*a) {
                    accumulate(grads, *a, ga);
                }
                if self.wants(*b) {
                    accumulate(grads, *b, gb);
                }
            }
            Op::Mul { a, b } => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                if self.wants(*a) {
                    accumulate(grads, *a, g.iter().zip(bv).map(|(&g, &b)| g * b).collect());
                }
                if self.wants(*b) {
                    accumulate(grads, *b, g.iter().zip(av).map(|(&g, &a)| g * a).collect());
                }
            }
            Op::Scale { x, c } => {
                if self.wants(*x) {
                    accumulate(grads, *x, g.iter().map(|&g| g * *c).collect());
                }
            }
            Op::Sum { x } => {
                if self.wants(*x) {
                    accumulate(grads, *x, vec![g[0]; self.value(*x).len()]);
                }
            }
            Op::Mean { x } => {
                if self.wants(*x) {
                    let n = self.value(*x).len();
                    accumulate(grads, *x, vec![g[0] / T::lit(n as f64); n]);
                }
            }
            Op::MeanPerItem { x } => {
                if self.wants(*x) {
                    let xv = self.value(*x);
                    accumulate(grads, *x, reduce::mean_per_item_backward(xv.shape(), g));
                }
            }
            Op::WeightedBce { p, y, w_fg, w_bg } => {
                if self.wants(*p) {
                    let gp = loss::weighted_bce_backward(self.value(*p).data(), y, *w_fg, *w_bg, g[0]);
                    accumulate(grads, *p, gp);
                }
            }
            Op::GanBce { logits, target } => {
                if self.wants(*logits) {
                    let gl = loss::gan_bce_backward(self.value(*logits).data(), *target, g[0]);
                    accumulate(grads, *logits, gl);
                }
            }
        }
        Ok(())
    }
}

fn accumulate<T: Element>(grads: &mut [Option<Vec<T>>], v: Var, g: Vec<T>) {
    match &mut grads[v.0] {
        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
        slot => *slot = Some(g),
    }
}

/// Result of a finite-difference gradient check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckReport {
    /// max over coordinates of |analytic − numeric| / max(1, |analytic|, |numeric|)
    pub max_rel_err: f64,
    pub coordinates: usize,
    pub passed: bool,
}

/// Compares reverse-mode gradients of a scalar function against central
/// differences over every coordinate of every input.
///
/// `f` receives the tape and one gradient-tracking leaf per input tensor.
pub fn gradcheck<F>(f: F, inputs: &[Tensor<f64>], h: f64, tol: f64) -> Result<GradcheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |inputs: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let v = tape.value(out);
        if v.len() != 1 {
            return Err(Error::Shape("gradcheck needs a scalar-valued function".into()));
        }
        Ok(v.data()[0])
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;

    let mut max_rel_err = 0.0f64;
    let mut coordinates = 0;
    let mut probe = inputs.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let zeros = Tensor::zeros(inputs[k].shape())?;
        let analytic = tape.grad(*var).unwrap_or(&zeros).data().to_vec();
        for j in 0..inputs[k].len() {
            let orig = inputs[k].data()[j];
            probe[k].data_mut()[j] = orig + h;
            let fp = eval(&probe)?;
            probe[k].data_mut()[j] = orig - h;
            let fm = eval(&probe)?;
            probe[k].data_mut()[j] = orig;
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic[j];
            if !numeric.is_finite() || !a.is_finite() {
                return Err(Error::NonFinite(format!(
                    "gradcheck input {k} coordinate {j}: analytic {a}, numeric {numeric}"
                )));
            }
            let rel = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            max_rel_err = max_rel_err.max(rel);
            coordinates += 1;
        }
    }
    Ok(GradcheckReport {
        max_rel_err,
        coordinates,
        passed: max_rel_err < tol,
    })
}
