//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation of one forward pass as a node holding
//! its output value, its parent handles and a backward closure. Nodes are
//! appended in evaluation order, so parents always precede children and a
//! single reverse sweep visits each node once.
//!
//! Complex values follow the "independent real and imaginary parts"
//! convention: the gradient of a real loss `L` with respect to a complex
//! `z = x + iy` is stored as `∂L/∂x + i ∂L/∂y`. Under this convention a
//! product `w = a·b` back-propagates `ḡ·conj(b)` to `a`, and a unitary
//! transform back-propagates through its conjugate transpose.

use num_complex::Complex64;

use crate::error::{contract, Error, Result};
use crate::fft::{self, Direction, Norm};
use crate::tensor::{numel, Dtype, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Values visible to a backward closure.
pub struct BackwardCtx<'a> {
    /// Gradient flowing into the node's output.
    pub grad: &'a Tensor,
    /// Parent values in the order they were registered.
    pub inputs: Vec<&'a Tensor>,
    /// The node's own forward value.
    pub output: &'a Tensor,
}

/// Maps an output gradient to one optional gradient per parent.
pub type BackwardFn = Box<dyn Fn(&BackwardCtx<'_>) -> Result<Vec<Option<Tensor>>> + Send>;

struct Node {
    value: Tensor,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
}

/// Recorded computation for one forward pass.
pub struct Tape {
    nodes: Vec<Node>,
    record: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar loss with respect to every node that required one.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            record: true,
        }
    }

    /// A tape that never stores backward closures. Forward values are
    /// identical to a recording tape.
    pub fn inference() -> Self {
        Self {
            nodes: Vec::new(),
            record: false,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.record
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A differentiable leaf (parameter or input under study).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        let requires_grad = self.record;
        self.push(value, Vec::new(), None, requires_grad)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Vec::new(), None, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(
        &mut self,
        value: Tensor,
        parents: Vec<usize>,
        backward: Option<BackwardFn>,
        requires_grad: bool,
    ) -> Var {
        self.nodes.push(Node {
            value,
            parents,
            backward,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Record a node computed outside the tape. `backward` is kept only when
    /// at least one parent requires a gradient.
    pub fn custom(&mut self, value: Tensor, parents: &[Var], backward: BackwardFn) -> Var {
        let requires_grad = self.record && parents.iter().any(|p| self.nodes[p.0].requires_grad);
        let parents: Vec<usize> = parents.iter().map(|p| p.0).collect();
        if requires_grad {
            self.push(value, parents, Some(backward), true)
        } else {
            self.push(value, parents, None, false)
        }
    }

    /// Reverse sweep from a real scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = &self.nodes[loss.0].value;
        if lv.dtype() != Dtype::Real || lv.len() != 1 {
            return Err(contract(format!(
                "backward needs a real scalar loss, got {:?} {:?}",
                lv.dtype(),
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            let Some(backward) = node.backward.as_ref() else {
                continue;
            };
            let Some(g) = grads[i].take() else {
                continue;
            };
            let ctx = BackwardCtx {
                grad: &g,
                inputs: node.parents.iter().map(|&p| &self.nodes[p].value).collect(),
                output: &node.value,
            };
            let parent_grads = backward(&ctx)?;
            if parent_grads.len() != node.parents.len() {
                return Err(contract("backward returned wrong number of gradients"));
            }
            for (&p, pg) in node.parents.iter().zip(parent_grads) {
                let Some(pg) = pg else { continue };
                if !self.nodes[p].requires_grad {
                    continue;
                }
                if pg.shape() != self.nodes[p].value.shape() {
                    return Err(Error::ShapeMismatch {
                        op: "backward",
                        lhs: pg.shape().to_vec(),
                        rhs: self.nodes[p].value.shape().to_vec(),
                    });
                }
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&pg)?,
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        // leaves carry no backward closure, so their accumulated gradients survive the sweep
        Ok(Gradients { grads })
    }
}

fn same_shape(tape: &Tape, a: Var, b: Var, op: &'static str) -> Result<()> {
    if tape.shape(a) != tape.shape(b) {
        return Err(Error::ShapeMismatch {
            op,
            lhs: tape.shape(a).to_vec(),
            rhs: tape.shape(b).to_vec(),
        });
    }
    Ok(())
}

/// Activation functions available to layers and the density network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    None,
    Relu,
    Gelu,
    Silu,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

pub fn silu_scalar(x: f64) -> f64 {
    x * sigmoid(x)
}

fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

impl Activation {
    pub fn apply_scalar(self, x: f64) -> f64 {
        match self {
            Activation::None => x,
            Activation::Relu => x.max(0.0),
            Activation::Gelu => gelu_scalar(x),
            Activation::Silu => silu_scalar(x),
        }
    }

    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::None => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Gelu => gelu_grad(x),
            Activation::Silu => silu_grad(x),
        }
    }
}

impl Tape {
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, a, b, "add")?;
        let out = self.value(a).add(self.value(b))?;
        Ok(self.custom(
            out,
            &[a, b],
            Box::new(|ctx| Ok(vec![Some(ctx.grad.clone()), Some(ctx.grad.clone())])),
        ))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, a, b, "sub")?;
        let out = self.value(a).sub(self.value(b))?;
        Ok(self.custom(
            out,
            &[a, b],
            Box::new(|ctx| Ok(vec![Some(ctx.grad.clone()), Some(ctx.grad.scale(-1.0))])),
        ))
    }

    /// Elementwise product of two tensors of the same dtype.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, a, b, "mul")?;
        let out = self.value(a).mul(self.value(b))?;
        Ok(self.custom(
            out,
            &[a, b],
            Box::new(|ctx| {
                let ga = ctx.grad.mul(&ctx.inputs[1].conj())?;
                let gb = ctx.grad.mul(&ctx.inputs[0].conj())?;
                Ok(vec![Some(ga), Some(gb)])
            }),
        ))
    }

    /// Elementwise complex product; both operands must be complex.
    pub fn complex_mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).dtype() != Dtype::Complex || self.value(b).dtype() != Dtype::Complex {
            return Err(Error::Dtype {
                op: "complex_mul",
                expected: "complex",
            });
        }
        self.mul(a, b)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.value(a).scale(c);
        Ok(self.custom(out, &[a], Box::new(move |ctx| Ok(vec![Some(ctx.grad.scale(c))]))))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.value(a).map_real(|x| x + c)?;
        Ok(self.custom(out, &[a], Box::new(|ctx| Ok(vec![Some(ctx.grad.clone())]))))
    }

    /// Square root of a nonnegative real tensor.
    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).as_real()?;
        if let Some(bad) = v.iter().find(|x| **x < 0.0 || x.is_nan()) {
            return Err(Error::Domain {
                op: "sqrt",
                msg: format!("negative input {bad}"),
            });
        }
        let out = self.value(a).map_real(f64::sqrt)?;
        Ok(self.custom(
            out,
            &[a],
            Box::new(|ctx| {
                let y = ctx.output.as_real()?;
                let g = ctx.grad.as_real()?;
                let d = g.iter().zip(y).map(|(g, y)| g / (2.0 * y)).collect();
                Ok(vec![Some(Tensor::real(ctx.output.shape(), d)?)])
            }),
        ))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map_real(f64::exp)?;
        Ok(self.custom(
            out,
            &[a],
            Box::new(|ctx| Ok(vec![Some(ctx.grad.mul(ctx.output)?)])),
        ))
    }

    pub fn activation(&mut self, a: Var, act: Activation) -> Result<Var> {
        if act == Activation::None {
            return Ok(a);
        }
        let out = self.value(a).map_real(|x| act.apply_scalar(x))?;
        Ok(self.custom(
            out,
            &[a],
            Box::new(move |ctx| {
                let x = ctx.inputs[0].as_real()?;
                let g = ctx.grad.as_real()?;
                let d = g.iter().zip(x).map(|(g, &x)| g * act.derivative(x)).collect();
                Ok(vec![Some(Tensor::real(ctx.output.shape(), d)?)])
            }),
        ))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.activation(a, Activation::Relu)
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        self.activation(a, Activation::Gelu)
    }

    pub fn silu(&mut self, a: Var) -> Result<Var> {
        self.activation(a, Activation::Silu)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).reshape(shape)?;
        let orig = self.shape(a).to_vec();
        Ok(self.custom(
            out,
            &[a],
            Box::new(move |ctx| Ok(vec![Some(ctx.grad.reshape(&orig)?)])),
        ))
    }

    /// Sum of all entries of a real tensor, as a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).sum_real()?;
        let shape = self.shape(a).to_vec();
        Ok(self.custom(
            Tensor::scalar(s),
            &[a],
            Box::new(move |ctx| Ok(vec![Some(Tensor::full(&shape, ctx.grad.item()?))])),
        ))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len();
        if n == 0 {
            return Err(contract("mean of empty tensor"));
        }
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Real matrix product `a @ b` with `a: (..., m, k)` and `b: (k, n)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() < 2 || sb.len() != 2 || sa[sa.len() - 1] != sb[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: sa,
                rhs: sb,
            });
        }
        let k = sb[0];
        let n = sb[1];
        let rows = numel(&sa) / k;
        let av = self.value(a).as_real()?;
        let bv = self.value(b).as_real()?;
        let mut out = vec![0.0; rows * n];
        for r in 0..rows {
            let orow = &mut out[r * n..(r + 1) * n];
            for (kk, &x) in av[r * k..(r + 1) * k].iter().enumerate() {
                if x != 0.0 {
                    for (o, &w) in orow.iter_mut().zip(&bv[kk * n..(kk + 1) * n]) {
                        *o += x * w;
                    }
                }
            }
        }
        let mut oshape = sa.clone();
        *oshape.last_mut().unwrap() = n;
        let out = Tensor::real(&oshape, out)?;
        Ok(self.custom(
            out,
            &[a, b],
            Box::new(move |ctx| {
                let g = ctx.grad.as_real()?;
                let av = ctx.inputs[0].as_real()?;
                let bv = ctx.inputs[1].as_real()?;
                let mut ga = vec![0.0; rows * k];
                let mut gb = vec![0.0; k * n];
                for r in 0..rows {
                    let grow = &g[r * n..(r + 1) * n];
                    for kk in 0..k {
                        let brow = &bv[kk * n..(kk + 1) * n];
                        ga[r * k + kk] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                        let x = av[r * k + kk];
                        for (gbv, gv) in gb[kk * n..(kk + 1) * n].iter_mut().zip(grow) {
                            *gbv += x * gv;
                        }
                    }
                }
                Ok(vec![
                    Some(Tensor::real(ctx.inputs[0].shape(), ga)?),
                    Some(Tensor::real(ctx.inputs[1].shape(), gb)?),
                ])
            }),
        ))
    }

    /// Pointwise channel map: `x: (B, Cin, S...)`, `w: (Cout, Cin)`,
    /// optional `bias: (Cout)`, giving `(B, Cout, S...)`.
    pub fn channel_linear(&mut self, x: Var, w: Var, bias: Option<Var>) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        if sx.len() < 2 || sw.len() != 2 || sw[1] != sx[1] {
            return Err(Error::ShapeMismatch {
                op: "channel_linear",
                lhs: sx,
                rhs: sw,
            });
        }
        let (batch, cin, cout) = (sx[0], sx[1], sw[0]);
        if let Some(b) = bias {
            if self.shape(b) != [cout] {
                return Err(Error::ShapeMismatch {
                    op: "channel_linear bias",
                    lhs: self.shape(b).to_vec(),
                    rhs: vec![cout],
                });
            }
        }
        let s: usize = sx[2..].iter().product();
        let xv = self.value(x).as_real()?;
        let wv = self.value(w).as_real()?;
        let bv = match bias {
            Some(b) => Some(self.value(b).as_real()?),
            None => None,
        };
        let mut out = vec![0.0; batch * cout * s];
        for b in 0..batch {
            for co in 0..cout {
                let orow = &mut out[(b * cout + co) * s..(b * cout + co + 1) * s];
                if let Some(bv) = bv {
                    orow.iter_mut().for_each(|o| *o = bv[co]);
                }
                for ci in 0..cin {
                    let wc = wv[co * cin + ci];
                    if wc == 0.0 {
                        continue;
                    }
                    let xrow = &xv[(b * cin + ci) * s..(b * cin + ci + 1) * s];
                    for (o, xv) in orow.iter_mut().zip(xrow) {
                        *o += wc * xv;
                    }
                }
            }
        }
        let mut oshape = sx.clone();
        oshape[1] = cout;
        let out = Tensor::real(&oshape, out)?;
        let mut parents = vec![x, w];
        parents.extend(bias);
        let has_bias = bias.is_some();
        Ok(self.custom(
            out,
            &parents,
            Box::new(move |ctx| {
                let g = ctx.grad.as_real()?;
                let xv = ctx.inputs[0].as_real()?;
                let wv = ctx.inputs[1].as_real()?;
                let mut gx = vec![0.0; batch * cin * s];
                let mut gw = vec![0.0; cout * cin];
                let mut gb = vec![0.0; cout];
                for b in 0..batch {
                    for co in 0..cout {
                        let grow = &g[(b * cout + co) * s..(b * cout + co + 1) * s];
                        gb[co] += grow.iter().sum::<f64>();
                        for ci in 0..cin {
                            let xrow = &xv[(b * cin + ci) * s..(b * cin + ci + 1) * s];
                            gw[co * cin + ci] += grow.iter().zip(xrow).map(|(a, b)| a * b).sum::<f64>();
                            let wc = wv[co * cin + ci];
                            let gxrow = &mut gx[(b * cin + ci) * s..(b * cin + ci + 1) * s];
                            for (o, gv) in gxrow.iter_mut().zip(grow) {
                                *o += wc * gv;
                            }
                        }
                    }
                }
                let mut res = vec![
                    Some(Tensor::real(ctx.inputs[0].shape(), gx)?),
                    Some(Tensor::real(&[cout, cin], gw)?),
                ];
                if has_bias {
                    res.push(Some(Tensor::real(&[cout], gb)?));
                }
                Ok(res)
            }),
        ))
    }

    pub fn to_complex(&mut self, a: Var) -> Result<Var> {
        if self.value(a).dtype() != Dtype::Real {
            return Err(Error::Dtype {
                op: "to_complex",
                expected: "real",
            });
        }
        let out = self.value(a).to_complex();
        Ok(self.custom(out, &[a], Box::new(|ctx| Ok(vec![Some(ctx.grad.real_part()?)]))))
    }

    pub fn real_part(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).real_part()?;
        Ok(self.custom(out, &[a], Box::new(|ctx| Ok(vec![Some(ctx.grad.to_complex())]))))
    }

    /// Unitary FFT along `axes`.
    pub fn fft(&mut self, a: Var, axes: &[usize]) -> Result<Var> {
        self.transform(a, axes, Direction::Forward)
    }

    /// Unitary inverse FFT along `axes`.
    pub fn ifft(&mut self, a: Var, axes: &[usize]) -> Result<Var> {
        self.transform(a, axes, Direction::Inverse)
    }

    fn transform(&mut self, a: Var, axes: &[usize], dir: Direction) -> Result<Var> {
        let out = fft::transform_axes(self.value(a), axes, dir, Norm::Unitary)?;
        let axes = axes.to_vec();
        let adjoint = match dir {
            Direction::Forward => Direction::Inverse,
            Direction::Inverse => Direction::Forward,
        };
        Ok(self.custom(
            out,
            &[a],
            Box::new(move |ctx| {
                Ok(vec![Some(fft::transform_axes(
                    ctx.grad,
                    &axes,
                    adjoint,
                    Norm::Unitary,
                )?)])
            }),
        ))
    }

    /// Softmax along `axis` of `a / temperature`.
    pub fn softmax(&mut self, a: Var, axis: usize, temperature: f64) -> Result<Var> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::Domain {
                op: "softmax",
                msg: format!("temperature must be positive and finite, got {temperature}"),
            });
        }
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(contract(format!("softmax axis {axis} out of range for {shape:?}")));
        }
        let out = softmax_values(self.value(a).as_real()?, &shape, axis, temperature);
        let out = Tensor::real(&shape, out)?;
        Ok(self.custom(
            out,
            &[a],
            Box::new(move |ctx| {
                let y = ctx.output.as_real()?;
                let g = ctx.grad.as_real()?;
                let (outer, len, inner) = split_axis(&shape, axis);
                let mut gx = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |m: usize| (o * len + m) * inner + i;
                        let dot: f64 = (0..len).map(|m| g[idx(m)] * y[idx(m)]).sum();
                        for m in 0..len {
                            gx[idx(m)] = y[idx(m)] * (g[idx(m)] - dot) / temperature;
                        }
                    }
                }
                Ok(vec![Some(Tensor::real(&shape, gx)?)])
            }),
        ))
    }

    /// Concatenate real tensors along `axis`.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() {
            return Err(contract("concat of nothing"));
        }
        let first = self.shape(parts[0]).to_vec();
        let mut sizes = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            let ok = s.len() == first.len()
                && s.iter()
                    .zip(&first)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !ok || axis >= s.len() {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: first,
                    rhs: s.to_vec(),
                });
            }
            sizes.push(s[axis]);
        }
        let total: usize = sizes.iter().sum();
        let mut oshape = first.clone();
        oshape[axis] = total;
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(numel(&oshape));
        for o in 0..outer {
            for (&p, &sz) in parts.iter().zip(&sizes) {
                let v = self.value(p).as_real()?;
                out.extend_from_slice(&v[o * sz * inner..(o + 1) * sz * inner]);
            }
        }
        let out = Tensor::real(&oshape, out)?;
        Ok(self.custom(
            out,
            parts,
            Box::new(move |ctx| {
                let g = ctx.grad.as_real()?;
                let mut res = Vec::with_capacity(sizes.len());
                let mut offset = 0;
                for (pi, &sz) in sizes.iter().enumerate() {
                    let mut gp = Vec::with_capacity(outer * sz * inner);
                    for o in 0..outer {
                        let start = (o * total + offset) * inner;
                        gp.extend_from_slice(&g[start..start + sz * inner]);
                    }
                    offset += sz;
                    res.push(Some(Tensor::real(ctx.inputs[pi].shape(), gp)?));
                }
                Ok(res)
            }),
        ))
    }

    /// Per-sample squared norm of a real `(B, ...)` tensor, giving `(B)`.
    pub fn batch_sq_norm(&mut self, a: Var) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if shape.is_empty() {
            return Err(contract("batch_sq_norm needs a batch axis"));
        }
        let b = shape[0];
        let per = numel(&shape[1..]);
        let v = self.value(a).as_real()?;
        let out: Vec<f64> = (0..b)
            .map(|i| v[i * per..(i + 1) * per].iter().map(|x| x * x).sum())
            .collect();
        let out = Tensor::real(&[b], out)?;
        Ok(self.custom(
            out,
            &[a],
            Box::new(move |ctx| {
                let g = ctx.grad.as_real()?;
                let x = ctx.inputs[0].as_real()?;
                let d = x
                    .iter()
                    .enumerate()
                    .map(|(j, xv)| 2.0 * xv * g[j / per])
                    .collect();
                Ok(vec![Some(Tensor::real(&shape, d)?)])
            }),
        ))
    }

    /// Multiply every entry of `x` by the real scalar node `s`.
    pub fn mul_scalar_var(&mut self, x: Var, s: Var) -> Result<Var> {
        let sv = self.value(s).item()?;
        let out = self.value(x).scale(sv);
        Ok(self.custom(
            out,
            &[x, s],
            Box::new(|ctx| {
                let sv = ctx.inputs[1].item()?;
                let gs = ctx
                    .grad
                    .as_real()?
                    .iter()
                    .zip(ctx.inputs[0].as_real()?)
                    .map(|(g, x)| g * x)
                    .sum();
                Ok(vec![Some(ctx.grad.scale(sv)), Some(Tensor::real(ctx.inputs[1].shape(), vec![gs])?)])
            }),
        ))
    }

    /// Periodic convolution along the last axis:
    /// `y[i] = Σ_j taps[j] · x[(i − j + r) mod N]` with `r = taps.len() / 2`.
    pub fn periodic_conv(&mut self, x: Var, taps: &[f64]) -> Result<Var> {
        if taps.len() % 2 == 0 {
            return Err(contract("stencil must have odd length"));
        }
        let shape = self.shape(x).to_vec();
        let n = *shape.last().ok_or_else(|| contract("stencil on scalar"))?;
        let taps = taps.to_vec();
        let out = stencil_apply(self.value(x).as_real()?, n, &taps, false);
        let out = Tensor::real(&shape, out)?;
        Ok(self.custom(
            out,
            &[x],
            Box::new(move |ctx| {
                let g = stencil_apply(ctx.grad.as_real()?, n, &taps, true);
                Ok(vec![Some(Tensor::real(&shape, g)?)])
            }),
        ))
    }
}

fn stencil_apply(x: &[f64], n: usize, taps: &[f64], adjoint: bool) -> Vec<f64> {
    let r = (taps.len() / 2) as isize;
    let ni = n as isize;
    let mut out = vec![0.0; x.len()];
    for (line_out, line) in out.chunks_exact_mut(n).zip(x.chunks_exact(n)) {
        for (i, o) in line_out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, &t) in taps.iter().enumerate() {
                let off = j as isize - r;
                let idx = if adjoint { i as isize + off } else { i as isize - off };
                acc += t * line[idx.rem_euclid(ni) as usize];
            }
            *o = acc;
        }
    }
    out
}

pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    (
        shape[..axis].iter().product(),
        shape[axis],
        shape[axis + 1..].iter().product(),
    )
}

/// Numerically stable softmax of `x / temperature` along `axis`.
pub fn softmax_values(x: &[f64], shape: &[usize], axis: usize, temperature: f64) -> Vec<f64> {
    let (outer, len, inner) = split_axis(shape, axis);
    let mut out = vec![0.0; x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |m: usize| (o * len + m) * inner + i;
            let max = (0..len).map(|m| x[idx(m)]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for m in 0..len {
                let e = ((x[idx(m)] - max) / temperature).exp();
                out[idx(m)] = e;
                total += e;
            }
            for m in 0..len {
                out[idx(m)] /= total;
            }
        }
    }
    out
}

/// Complex constant helper used in tests and oracles.
pub fn cplx(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_real(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
    }

    fn rand_complex(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..numel(shape))
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        Tensor::complex(shape, v).unwrap()
    }

    /// Central-difference check of every real and imaginary component of
    /// `inputs` against the tape gradient of `f`.
    fn check_grad(inputs: &[Tensor], f: impl Fn(&mut Tape, &[Var]) -> Result<Var>) -> f64 {
        let eval = |vals: &[Tensor]| {
            let mut tape = Tape::inference();
            let vars: Vec<Var> = vals.iter().map(|t| tape.leaf(t.clone())).collect();
            let out = f(&mut tape, &vars).unwrap();
            tape.value(out).item().unwrap()
        };
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = f(&mut tape, &vars).unwrap();
        let grads = tape.backward(loss).unwrap();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for (idx, t) in inputs.iter().enumerate() {
            let g = grads.get(vars[idx]).cloned().unwrap_or(Tensor::zeros(t.shape(), t.dtype()));
            for j in 0..t.len() {
                let parts: &[Complex64] = if t.dtype() == Dtype::Complex {
                    &[Complex64 { re: 1.0, im: 0.0 }, Complex64 { re: 0.0, im: 1.0 }]
                } else {
                    &[Complex64 { re: 1.0, im: 0.0 }]
                };
                for dir in parts {
                    let bump = |s: f64| {
                        let mut vals = inputs.to_vec();
                        match vals[idx].dtype() {
                            Dtype::Real => vals[idx].as_real_mut().unwrap()[j] += s,
                            Dtype::Complex => vals[idx].as_complex_mut().unwrap()[j] += dir * s,
                        }
                        eval(&vals)
                    };
                    let fd = (bump(h) - bump(-h)) / (2.0 * h);
                    let an = match g.dtype() {
                        Dtype::Real => g.as_real().unwrap()[j],
                        Dtype::Complex => {
                            let z = g.as_complex().unwrap()[j];
                            if dir.im != 0.0 {
                                z.im
                            } else {
                                z.re
                            }
                        }
                    };
                    let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1.0);
                    worst = worst.max(err);
                }
            }
        }
        worst
    }

    /// Σ|v|², built only from differentiable ops.
    fn sum_sq(tape: &mut Tape, v: Var) -> Result<Var> {
        if tape.value(v).dtype() == Dtype::Real {
            let sq = tape.mul(v, v)?;
            return tape.sum(sq);
        }
        let n = tape.value(v).len();
        let shape = tape.shape(v).to_vec();
        let minus_i = tape.constant(Tensor::complex(&shape, vec![cplx(0.0, -1.0); n])?);
        let re = tape.real_part(v)?;
        let rot = tape.complex_mul(v, minus_i)?;
        let im = tape.real_part(rot)?;
        let a = tape.mul(re, re)?;
        let b = tape.mul(im, im)?;
        let s = tape.add(a, b)?;
        tape.sum(s)
    }

    #[test]
    fn quadratic_gradient_is_exact() {
        let x = rand_real(&[16], 1);
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let l = sum_sq(&mut tape, xv).unwrap();
        let g = tape.backward(l).unwrap();
        assert_eq!(g.get(xv).unwrap(), &x.scale(2.0));
    }

    #[test]
    fn loss_must_be_scalar() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::ones(&[3]));
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn fft_energy_gradient_is_twice_input() {
        let x = rand_real(&[16], 2);
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let xc = tape.to_complex(xv).unwrap();
        let y = tape.fft(xc, &[0]).unwrap();
        let l = sum_sq(&mut tape, y).unwrap();
        assert!((tape.value(l).item().unwrap() - x.norm_sq()).abs() < 1e-12);
        let g = tape.backward(l).unwrap();
        let diff = g.get(xv).unwrap().max_abs_diff(&x.scale(2.0)).unwrap();
        assert!(diff < 1e-12, "{diff}");
        let fd = check_grad(&[x], |t, v| {
            let c = t.to_complex(v[0])?;
            let y = t.fft(c, &[0])?;
            sum_sq(t, y)
        });
        assert!(fd < 1e-5, "{fd}");
    }

    #[test]
    fn elementwise_values() {
        let mut tape = Tape::new();
        let z = tape.leaf(Tensor::scalar(0.0));
        let g = tape.gelu(z).unwrap();
        assert_eq!(tape.value(g).item().unwrap(), 0.0);
        let q = tape.leaf(Tensor::full(&[4], 0.25));
        let s = tape.sqrt(q).unwrap();
        assert_eq!(tape.value(s), &Tensor::full(&[4], 0.5));
        let a = tape.leaf(Tensor::complex(&[1], vec![cplx(1.0, 1.0)]).unwrap());
        let b = tape.leaf(Tensor::complex(&[1], vec![cplx(1.0, -1.0)]).unwrap());
        let p = tape.complex_mul(a, b).unwrap();
        assert_eq!(tape.value(p).as_complex().unwrap()[0], cplx(2.0, 0.0));
        let neg = tape.leaf(Tensor::full(&[2], -1.0));
        assert!(matches!(tape.sqrt(neg), Err(Error::Domain { .. })));
        let x = tape.leaf(Tensor::ones(&[3]));
        let y = tape.leaf(Tensor::ones(&[4]));
        assert!(matches!(tape.add(x, y), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn elementwise_gradients_match_finite_differences() {
        let x = rand_real(&[2, 3, 4], 3);
        let y = rand_real(&[2, 3, 4], 4);
        let pos = x.map_real(|v| v.abs() + 0.5).unwrap();
        type Unary = fn(&mut Tape, Var) -> Result<Var>;
        let unary: Vec<(&str, Unary)> = vec![
            ("exp", |t, v| t.exp(v)),
            ("gelu", |t, v| t.gelu(v)),
            ("silu", |t, v| t.silu(v)),
            ("relu", |t, v| t.relu(v)),
            ("scale", |t, v| t.scale(v, 1.7)),
            ("add_scalar", |t, v| t.add_scalar(v, 0.3)),
            ("reshape", |t, v| t.reshape(v, &[6, 4])),
            ("softmax", |t, v| t.softmax(v, 1, 0.7)),
            ("stencil", |t, v| t.periodic_conv(v, &[0.5, 0.0, -0.5])),
            ("batch_sq_norm", |t, v| t.batch_sq_norm(v)),
            ("mean", |t, v| t.mean(v)),
        ];
        for (name, op) in unary {
            let err = check_grad(&[x.clone()], |t, v| {
                let o = op(t, v[0])?;
                let w = t.constant(rand_real(t.shape(o), 99));
                let m = t.mul(o, w)?;
                t.sum(m)
            });
            assert!(err < 1e-5, "{name}: {err}");
        }
        let err = check_grad(&[pos], |t, v| {
            let o = t.sqrt(v[0])?;
            sum_sq(t, o)
        });
        assert!(err < 1e-5, "sqrt {err}");
        type Binary = fn(&mut Tape, Var, Var) -> Result<Var>;
        let binary: Vec<(&str, Binary)> = vec![
            ("add", |t, a, b| t.add(a, b)),
            ("sub", |t, a, b| t.sub(a, b)),
            ("mul", |t, a, b| t.mul(a, b)),
            ("concat", |t, a, b| t.concat(&[a, b], 1)),
        ];
        for (name, op) in binary {
            let err = check_grad(&[x.clone(), y.clone()], |t, v| {
                let o = op(t, v[0], v[1])?;
                let w = t.constant(rand_real(t.shape(o), 98));
                let m = t.mul(o, w)?;
                t.sum(m)
            });
            assert!(err < 1e-5, "{name}: {err}");
        }
    }

    #[test]
    fn linear_algebra_gradients() {
        let a = rand_real(&[2, 3, 5], 5);
        let b = rand_real(&[5, 4], 6);
        let err = check_grad(&[a.clone(), b], |t, v| {
            let o = t.matmul(v[0], v[1])?;
            let w = t.constant(rand_real(t.shape(o), 7));
            let m = t.mul(o, w)?;
            t.sum(m)
        });
        assert!(err < 1e-5, "matmul {err}");
        let w = rand_real(&[4, 3], 8);
        let bias = rand_real(&[4], 9);
        let x = rand_real(&[2, 3, 6], 10);
        let err = check_grad(&[x, w, bias], |t, v| {
            let o = t.channel_linear(v[0], v[1], Some(v[2]))?;
            let w = t.constant(rand_real(t.shape(o), 11));
            let m = t.mul(o, w)?;
            t.sum(m)
        });
        assert!(err < 1e-5, "channel_linear {err}");
        let s = Tensor::scalar(0.8);
        let err = check_grad(&[a, s], |t, v| {
            let o = t.mul_scalar_var(v[0], v[1])?;
            sum_sq(t, o)
        });
        assert!(err < 1e-5, "mul_scalar_var {err}");
    }

    #[test]
    fn complex_gradients() {
        let a = rand_complex(&[2, 8], 12);
        let b = rand_complex(&[2, 8], 13);
        let err = check_grad(&[a.clone(), b], |t, v| {
            let p = t.complex_mul(v[0], v[1])?;
            let f = t.ifft(p, &[1])?;
            let r = t.real_part(f)?;
            let w = t.constant(rand_real(&[2, 8], 14));
            let m = t.mul(r, w)?;
            t.sum(m)
        });
        assert!(err < 1e-5, "complex chain {err}");
        let err = check_grad(&[a], |t, v| {
            let f = t.fft(v[0], &[0, 1])?;
            sum_sq(t, f)
        });
        assert!(err < 1e-5, "2d fft {err}");
    }

    #[test]
    fn stencil_matches_direct_application() {
        let mut tape = Tape::new();
        let f = tape.leaf(Tensor::real(&[1, 1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let d1 = tape.periodic_conv(f, &[0.5, 0.0, -0.5]).unwrap();
        // y[1] = 0.5 f[2] - 0.5 f[0]
        assert_eq!(tape.value(d1).as_real().unwrap()[1], 1.0);
        let c = tape.leaf(Tensor::full(&[1, 1, 8], 3.25));
        let d2 = tape.periodic_conv(c, &[-0.5, 1.0, -0.5]).unwrap();
        assert!(tape.value(d2).as_real().unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn inference_tape_records_no_gradients() {
        let mut tape = Tape::inference();
        let x = tape.leaf(Tensor::ones(&[2]));
        let y = tape.mul(x, x).unwrap();
        let s = tape.sum(y).unwrap();
        let g = tape.backward(s).unwrap();
        assert!(g.get(x).is_none());
    }
}
