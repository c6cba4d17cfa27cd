//! Tape-based reverse-mode differentiation over dense tensors.
//!
//! Every primitive appends one node holding its output value and the
//! handles of its inputs. [`Tape::backward`] walks the nodes in reverse
//! order, so the tape is a topological order by construction.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Linear { x: Var, w: Var, b: Var },
    LeakyRelu { x: Var, slope: f64 },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    AddScalar { x: Var },
    Scale { x: Var, c: f64 },
    Square { x: Var },
    Mean { x: Var },
    Sum { x: Var },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `v`, zero-filled when `v` does not influence the output.
    pub fn wrt(&self, v: Var) -> Tensor {
        match self.get(v) {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every recorded node. Handles from before the clear are invalid.
    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records a differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push_unchecked(value, Op::Leaf, true)
    }

    /// Records an input that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_unchecked(value, Op::Leaf, false)
    }

    /// Copies the value of `v` into a new constant, cutting gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    fn push_unchecked(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name.to_string()));
        }
        let requires_grad = inputs.iter().any(|&v| self.nodes[v.0].requires_grad);
        Ok(self.push_unchecked(value, op, requires_grad))
    }

    fn expect_same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::Shape {
                op,
                expected: sa.to_vec(),
                actual: sb.to_vec(),
            });
        }
        Ok(())
    }

    /// `x · wᵀ + b` with `x: [n, in]`, `w: [out, in]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.shape().len() != 2 || wv.shape().len() != 2 || xv.cols() != wv.cols() {
            return Err(Error::Shape {
                op: "linear",
                expected: vec![xv.rows(), wv.cols()],
                actual: xv.shape().to_vec(),
            });
        }
        if bv.len() != wv.rows() {
            return Err(Error::Shape {
                op: "linear bias",
                expected: vec![wv.rows()],
                actual: bv.shape().to_vec(),
            });
        }
        let out = xv.affine(wv, bv);
        self.push("linear", out, Op::Linear { x, w, b }, &[x, w, b])
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        let out = self.value(x).leaky_relu(slope);
        self.push("leaky_relu", out, Op::LeakyRelu { x, slope }, &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.expect_same_shape("add", a, b)?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x + y);
        self.push("add", out, Op::Add { a, b }, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.expect_same_shape("sub", a, b)?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x - y);
        self.push("sub", out, Op::Sub { a, b }, &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.expect_same_shape("mul", a, b)?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x * y);
        self.push("mul", out, Op::Mul { a, b }, &[a, b])
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Result<Var> {
        let out = self.value(x).map(|v| v + c);
        self.push("add_scalar", out, Op::AddScalar { x }, &[x])
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let out = self.value(x).map(|v| v * c);
        self.push("scale", out, Op::Scale { x, c }, &[x])
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| v * v);
        self.push("square", out, Op::Square { x }, &[x])
    }

    /// Mean over all elements, producing a scalar.
    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.is_empty() {
            return Err(Error::Usage("mean of an empty tensor".into()));
        }
        let out = Tensor::scalar(xv.mean());
        self.push("mean", out, Op::Mean { x }, &[x])
    }

    /// Sum over all elements, producing a scalar.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(x).data().iter().sum());
        self.push("sum", out, Op::Sum { x }, &[x])
    }

    /// Reverse accumulation from a scalar `output`.
    ///
    /// The tape itself is left untouched, so several backward passes may be
    /// run against the same recording.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if !self.value(output).is_scalar() {
            return Err(Error::Usage(format!(
                "backward requires a scalar output, got shape {:?}",
                self.value(output).shape()
            )));
        }
        let n = output.0 + 1;
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Tensor::full(self.value(output).shape(), 1.0));

        for i in (0..n).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            match node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::Linear { x, w, b } => {
                    if self.requires_grad(x) {
                        let dx = g.matmul(self.value(w));
                        accumulate(&mut grads, x, dx);
                    }
                    if self.requires_grad(w) {
                        let dw = g.t_matmul(self.value(x));
                        accumulate(&mut grads, w, dw);
                    }
                    if self.requires_grad(b) {
                        let mut db = g.sum_rows();
                        db = Tensor::new(self.value(b).shape().to_vec(), db.into_data())?;
                        accumulate(&mut grads, b, db);
                    }
                }
                Op::LeakyRelu { x, slope } => {
                    let xv = self.value(x);
                    let dx = zip_map(&g, xv, |gv, v| if v > 0.0 { gv } else { slope * gv });
                    accumulate(&mut grads, x, dx);
                }
                Op::Add { a, b } => {
                    if self.requires_grad(a) {
                        accumulate(&mut grads, a, g.clone());
                    }
                    if self.requires_grad(b) {
                        accumulate(&mut grads, b, g);
                    }
                }
                Op::Sub { a, b } => {
                    if self.requires_grad(a) {
                        accumulate(&mut grads, a, g.clone());
                    }
                    if self.requires_grad(b) {
                        accumulate(&mut grads, b, g.map(|v| -v));
                    }
                }
                Op::Mul { a, b } => {
                    if self.requires_grad(a) {
                        accumulate(&mut grads, a, zip_map(&g, self.value(b), |gv, bv| gv * bv));
                    }
                    if self.requires_grad(b) {
                        accumulate(&mut grads, b, zip_map(&g, self.value(a), |gv, av| gv * av));
                    }
                }
                Op::AddScalar { x } => accumulate(&mut grads, x, g),
                Op::Scale { x, c } => accumulate(&mut grads, x, g.map(|v| v * c)),
                Op::Square { x } => {
                    let dx = zip_map(&g, self.value(x), |gv, v| 2.0 * v * gv);
                    accumulate(&mut grads, x, dx);
                }
                Op::Mean { x } => {
                    let xv = self.value(x);
                    let share = g.item() / xv.len() as f64;
                    accumulate(&mut grads, x, Tensor::full(xv.shape(), share));
                }
                Op::Sum { x } => {
                    let shape = self.value(x).shape().to_vec();
                    accumulate(&mut grads, x, Tensor::full(&shape, g.item()));
                }
            }
        }

        // Only leaves keep their gradients; intermediate buffers were taken above.
        let shapes = self
            .nodes
            .iter()
            .map(|n| n.value.shape().to_vec())
            .collect();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Some(g) = &grads[i] {
                if !g.is_finite() {
                    return Err(Error::NonFinite(format!("gradient of node {i}")));
                }
            }
            if !matches!(node.op, Op::Leaf) {
                grads[i] = None;
            }
        }
        Ok(Gradients { grads, shapes })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (e, x) in existing.data_mut().iter_mut().zip(g.data()) {
                *e += x;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::new(a.shape().to_vec(), data).expect("zip_map on equal shapes")
}
