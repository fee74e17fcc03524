use std::cell::RefCell;
use std::rc::Rc;

use super::array::{gemm, split_axis, Tensor};
use super::TensorError;

/// Added under the square root of `l2_normalize` so an all-zero row maps to zero.
const NORM_EPS_SQ: f64 = 1e-24;

#[derive(Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    ScalarMul(usize, f64),
    MatMul(usize, usize),
    Conv1d {
        x: usize,
        w: usize,
        b: Option<usize>,
        stride: usize,
        padding: usize,
    },
    Relu(usize),
    L2Normalize {
        x: usize,
        axis: usize,
    },
    Log(usize),
    Exp(usize),
    Sum {
        x: usize,
        axis: Option<usize>,
    },
    Mean {
        x: usize,
        axis: Option<usize>,
    },
    Max {
        x: usize,
        argmax: Vec<usize>,
    },
    LogSumExp {
        x: usize,
        axis: usize,
    },
    Concat {
        parts: Vec<usize>,
        axis: usize,
    },
    Transpose(usize),
    GatherRows {
        x: usize,
        rows: Vec<usize>,
    },
    AddBias {
        x: usize,
        b: usize,
    },
    Reshape(usize),
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Records primitive applications in creation order for reverse-mode
/// differentiation. Node ids are assigned monotonically, so creation order is
/// already a topological order.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.value().shape())
    }
}

/// Gradients produced by [`Tape::backward`], indexed by node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var<'_>) -> Option<&Tensor> {
        self.grads.get(v.id).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var<'_>) -> Option<Tensor> {
        self.grads.get_mut(v.id).and_then(Option::take)
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn check_axis(op: &'static str, t: &Tensor, axis: usize) -> Result<(), TensorError> {
    if axis >= t.rank() {
        return Err(TensorError::InvalidAxis {
            op,
            axis,
            rank: t.rank(),
        });
    }
    Ok(())
}

fn removed_axis(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut s = shape.to_vec();
    s.remove(axis);
    s
}

/// Output shape of an elementwise binary op; scalars broadcast.
fn binary_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Vec<usize>, TensorError> {
    if a.shape() == b.shape() {
        Ok(a.shape().to_vec())
    } else if b.numel() == 1 {
        Ok(a.shape().to_vec())
    } else if a.numel() == 1 {
        Ok(b.shape().to_vec())
    } else {
        Err(mismatch(op, a, b))
    }
}

fn binary_map(a: &Tensor, b: &Tensor, shape: Vec<usize>, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let n: usize = shape.iter().product();
    let (da, db) = (a.data(), b.data());
    let sa = if da.len() == 1 { 0 } else { 1 };
    let sb = if db.len() == 1 { 0 } else { 1 };
    let data = (0..n).map(|i| f(da[i * sa], db[i * sb])).collect();
    Tensor::new(&shape, data).expect("binary output shape")
}

/// Reduces an upstream gradient to the operand's shape (sums over a
/// broadcast scalar).
fn unbroadcast(g: &Tensor, target: &Tensor) -> Tensor {
    if g.shape() == target.shape() {
        g.clone()
    } else {
        let s: f64 = g.data().iter().sum();
        Tensor::full(target.shape(), s)
    }
}

fn conv_out_len(len: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = len + 2 * padding;
    if padded < kernel || stride == 0 {
        None
    } else {
        Some((padded - kernel) / stride + 1)
    }
}

/// Unfolds one batch item `(cin, len)` into columns `(cin·k, lout)`.
fn im2col(
    x: &[f64],
    cin: usize,
    len: usize,
    k: usize,
    stride: usize,
    padding: usize,
    lout: usize,
    cols: &mut [f64],
) {
    for ci in 0..cin {
        let xrow = &x[ci * len..(ci + 1) * len];
        for kk in 0..k {
            let crow = &mut cols[(ci * k + kk) * lout..(ci * k + kk + 1) * lout];
            for (l, c) in crow.iter_mut().enumerate() {
                let pos = (l * stride + kk) as isize - padding as isize;
                *c = if pos >= 0 && (pos as usize) < len {
                    xrow[pos as usize]
                } else {
                    0.0
                };
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn col2im_add(
    cols: &[f64],
    cin: usize,
    len: usize,
    k: usize,
    stride: usize,
    padding: usize,
    lout: usize,
    gx: &mut [f64],
) {
    for ci in 0..cin {
        let grow = &mut gx[ci * len..(ci + 1) * len];
        for kk in 0..k {
            let crow = &cols[(ci * k + kk) * lout..(ci * k + kk + 1) * lout];
            for (l, c) in crow.iter().enumerate() {
                let pos = (l * stride + kk) as isize - padding as isize;
                if pos >= 0 && (pos as usize) < len {
                    grow[pos as usize] += c;
                }
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// A differentiable leaf.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    pub fn var(&self, value: Tensor, requires_grad: bool) -> Var<'_> {
        self.push(value, Op::Leaf, requires_grad)
    }

    fn value_of(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn rg(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Concatenates equally shaped (except along `axis`) tensors.
    pub fn concat<'t>(&'t self, parts: &[Var<'t>], axis: usize) -> Result<Var<'t>, TensorError> {
        let first = parts.first().ok_or(TensorError::InvalidArgument(
            "concat of zero tensors".into(),
        ))?;
        let base = first.value();
        check_axis("concat", &base, axis)?;
        let vals: Vec<Rc<Tensor>> = parts.iter().map(|p| p.value()).collect();
        let mut extent = 0;
        for v in &vals {
            if v.rank() != base.rank()
                || v.shape()
                    .iter()
                    .enumerate()
                    .any(|(i, &d)| i != axis && d != base.shape()[i])
            {
                return Err(mismatch("concat", &base, v));
            }
            extent += v.shape()[axis];
        }
        let mut shape = base.shape().to_vec();
        shape[axis] = extent;
        let (outer, _, inner) = split_axis(&shape, axis);
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for v in &vals {
                let chunk = v.shape()[axis] * inner;
                data.extend_from_slice(&v.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let rg = parts.iter().any(|p| self.rg(p.id));
        Ok(self.push(
            Tensor::new(&shape, data)?,
            Op::Concat {
                parts: parts.iter().map(|p| p.id).collect(),
                axis,
            },
            rg,
        ))
    }

    /// Reverse sweep from a scalar `loss`. Gradients accumulate over fan-out.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients, TensorError> {
        let nodes = self.nodes.borrow();
        let lv = &nodes[loss.id].value;
        if lv.numel() != 1 {
            return Err(TensorError::NonScalarLoss {
                shape: lv.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[loss.id] = Some(Tensor::full(lv.shape(), 1.0));

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let y = &node.value;
            let mut send = |pid: usize, pg: Tensor| {
                if !nodes[pid].requires_grad {
                    return;
                }
                match &mut grads[pid] {
                    Some(acc) => acc.add_assign(&pg),
                    slot @ None => *slot = Some(pg),
                }
            };
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    send(*a, unbroadcast(&g, &nodes[*a].value));
                    send(*b, unbroadcast(&g, &nodes[*b].value));
                }
                Op::Sub(a, b) => {
                    send(*a, unbroadcast(&g, &nodes[*a].value));
                    send(*b, unbroadcast(&g.map(|v| -v), &nodes[*b].value));
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&nodes[*a].value, &nodes[*b].value);
                    if nodes[*a].requires_grad {
                        let ga = binary_map(&g, vb, g.shape().to_vec(), |x, y| x * y);
                        send(*a, unbroadcast(&ga, va));
                    }
                    if nodes[*b].requires_grad {
                        let gb = binary_map(&g, va, g.shape().to_vec(), |x, y| x * y);
                        send(*b, unbroadcast(&gb, vb));
                    }
                }
                Op::ScalarMul(a, c) => send(*a, g.map(|v| v * c)),
                Op::MatMul(a, b) => {
                    let (va, vb) = (&nodes[*a].value, &nodes[*b].value);
                    let (n, k, m) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
                    if nodes[*a].requires_grad {
                        // ga = g · bᵀ
                        let mut ga = vec![0.0; n * k];
                        gemm(n, m, k, g.data(), (m, 1), vb.data(), (1, m), 0.0, &mut ga, (k, 1));
                        send(*a, Tensor::new(&[n, k], ga)?);
                    }
                    if nodes[*b].requires_grad {
                        // gb = aᵀ · g
                        let mut gb = vec![0.0; k * m];
                        gemm(k, n, m, va.data(), (1, k), g.data(), (m, 1), 0.0, &mut gb, (m, 1));
                        send(*b, Tensor::new(&[k, m], gb)?);
                    }
                }
                Op::Conv1d {
                    x,
                    w,
                    b,
                    stride,
                    padding,
                } => {
                    let (vx, vw) = (&nodes[*x].value, &nodes[*w].value);
                    let (bsz, cin, len) = (vx.shape()[0], vx.shape()[1], vx.shape()[2]);
                    let (cout, k) = (vw.shape()[0], vw.shape()[2]);
                    let lout = y.shape()[2];
                    let ck = cin * k;
                    let want_x = nodes[*x].requires_grad;
                    let want_w = nodes[*w].requires_grad;
                    let mut gw = vec![0.0; cout * ck];
                    let mut gx = vec![0.0; if want_x { vx.numel() } else { 0 }];
                    let mut cols = vec![0.0; ck * lout];
                    let mut gcols = vec![0.0; ck * lout];
                    for bi in 0..bsz {
                        let gb = &g.data()[bi * cout * lout..(bi + 1) * cout * lout];
                        if want_w {
                            let xb = &vx.data()[bi * cin * len..(bi + 1) * cin * len];
                            im2col(xb, cin, len, k, *stride, *padding, lout, &mut cols);
                            // gw += g_b · colsᵀ
                            gemm(cout, lout, ck, gb, (lout, 1), &cols, (1, lout), 1.0, &mut gw, (ck, 1));
                        }
                        if want_x {
                            // gcols = wᵀ · g_b
                            gemm(ck, cout, lout, vw.data(), (1, ck), gb, (lout, 1), 0.0, &mut gcols, (lout, 1));
                            let gxb = &mut gx[bi * cin * len..(bi + 1) * cin * len];
                            col2im_add(&gcols, cin, len, k, *stride, *padding, lout, gxb);
                        }
                    }
                    if want_x {
                        send(*x, Tensor::new(vx.shape(), gx)?);
                    }
                    if want_w {
                        send(*w, Tensor::new(vw.shape(), gw)?);
                    }
                    if let Some(b) = b {
                        let mut gbias = vec![0.0; cout];
                        for bi in 0..bsz {
                            for (o, gbo) in gbias.iter_mut().enumerate() {
                                let off = (bi * cout + o) * lout;
                                *gbo += g.data()[off..off + lout].iter().sum::<f64>();
                            }
                        }
                        send(*b, Tensor::new(&[cout], gbias)?);
                    }
                }
                Op::Relu(a) => {
                    let va = &nodes[*a].value;
                    send(*a, binary_map(&g, va, g.shape().to_vec(), |gv, xv| if xv > 0.0 { gv } else { 0.0 }));
                }
                Op::L2Normalize { x, axis } => {
                    let vx = &nodes[*x].value;
                    let (outer, dim, inner) = split_axis(vx.shape(), *axis);
                    let mut gx = vec![0.0; vx.numel()];
                    let (xd, gd) = (vx.data(), g.data());
                    for o in 0..outer {
                        for i in 0..inner {
                            let idx = |d: usize| (o * dim + d) * inner + i;
                            let ss: f64 = (0..dim).map(|d| xd[idx(d)] * xd[idx(d)]).sum();
                            let n = (ss + NORM_EPS_SQ).sqrt();
                            let gdotx: f64 = (0..dim).map(|d| gd[idx(d)] * xd[idx(d)]).sum();
                            for d in 0..dim {
                                gx[idx(d)] = gd[idx(d)] / n - xd[idx(d)] * gdotx / (n * n * n);
                            }
                        }
                    }
                    send(*x, Tensor::new(vx.shape(), gx)?);
                }
                Op::Log(a) => {
                    let va = &nodes[*a].value;
                    send(*a, binary_map(&g, va, g.shape().to_vec(), |gv, xv| gv / xv));
                }
                Op::Exp(a) => send(*a, binary_map(&g, y, g.shape().to_vec(), |gv, yv| gv * yv)),
                Op::Sum { x, axis } | Op::Mean { x, axis } => {
                    let vx = &nodes[*x].value;
                    let is_mean = matches!(node.op, Op::Mean { .. });
                    let gx = match axis {
                        None => {
                            let scale = if is_mean { 1.0 / vx.numel() as f64 } else { 1.0 };
                            Tensor::full(vx.shape(), g.data()[0] * scale)
                        }
                        Some(axis) => {
                            let (outer, dim, inner) = split_axis(vx.shape(), *axis);
                            let scale = if is_mean { 1.0 / dim as f64 } else { 1.0 };
                            let mut gx = vec![0.0; vx.numel()];
                            for o in 0..outer {
                                for d in 0..dim {
                                    for i in 0..inner {
                                        gx[(o * dim + d) * inner + i] = g.data()[o * inner + i] * scale;
                                    }
                                }
                            }
                            Tensor::new(vx.shape(), gx)?
                        }
                    };
                    send(*x, gx);
                }
                Op::Max { x, argmax } => {
                    let vx = &nodes[*x].value;
                    let mut gx = vec![0.0; vx.numel()];
                    for (gv, &src) in g.data().iter().zip(argmax) {
                        gx[src] += gv;
                    }
                    send(*x, Tensor::new(vx.shape(), gx)?);
                }
                Op::LogSumExp { x, axis } => {
                    let vx = &nodes[*x].value;
                    let (outer, dim, inner) = split_axis(vx.shape(), *axis);
                    let mut gx = vec![0.0; vx.numel()];
                    for o in 0..outer {
                        for i in 0..inner {
                            let yv = y.data()[o * inner + i];
                            let gv = g.data()[o * inner + i];
                            if yv == f64::NEG_INFINITY {
                                continue;
                            }
                            for d in 0..dim {
                                let j = (o * dim + d) * inner + i;
                                gx[j] = gv * (vx.data()[j] - yv).exp();
                            }
                        }
                    }
                    send(*x, Tensor::new(vx.shape(), gx)?);
                }
                Op::Concat { parts, axis } => {
                    let (outer, _, inner) = split_axis(y.shape(), *axis);
                    let total = y.shape()[*axis] * inner;
                    let mut offset = 0;
                    for &p in parts {
                        let vp = &nodes[p].value;
                        let chunk = vp.shape()[*axis] * inner;
                        if nodes[p].requires_grad {
                            let mut gp = Vec::with_capacity(vp.numel());
                            for o in 0..outer {
                                let start = o * total + offset;
                                gp.extend_from_slice(&g.data()[start..start + chunk]);
                            }
                            send(p, Tensor::new(vp.shape(), gp)?);
                        }
                        offset += chunk;
                    }
                }
                Op::Transpose(a) => {
                    let (r, c) = (g.shape()[0], g.shape()[1]);
                    let mut ga = vec![0.0; r * c];
                    for i in 0..r {
                        for j in 0..c {
                            ga[j * r + i] = g.data()[i * c + j];
                        }
                    }
                    send(*a, Tensor::new(&[c, r], ga)?);
                }
                Op::GatherRows { x, rows } => {
                    let vx = &nodes[*x].value;
                    let c = vx.shape()[1];
                    let mut gx = vec![0.0; vx.numel()];
                    for (k, &r) in rows.iter().enumerate() {
                        for j in 0..c {
                            gx[r * c + j] += g.data()[k * c + j];
                        }
                    }
                    send(*x, Tensor::new(vx.shape(), gx)?);
                }
                Op::AddBias { x, b } => {
                    let vb = &nodes[*b].value;
                    let c = vb.numel();
                    if nodes[*b].requires_grad {
                        let mut gb = vec![0.0; c];
                        for chunk in g.data().chunks(c) {
                            for (acc, v) in gb.iter_mut().zip(chunk) {
                                *acc += v;
                            }
                        }
                        send(*b, Tensor::new(vb.shape(), gb)?);
                    }
                    send(*x, g.clone());
                }
                Op::Reshape(a) => {
                    let va = &nodes[*a].value;
                    send(*a, g.clone().reshaped(va.shape())?);
                }
            }
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    /// Value of a one-element node.
    pub fn item(&self) -> Result<f64, TensorError> {
        self.value().item()
    }

    fn unary(&self, value: Tensor, op: Op) -> Var<'t> {
        self.tape.push(value, op, self.tape.rg(self.id))
    }

    fn binary(&self, other: Var<'t>, value: Tensor, op: Op) -> Var<'t> {
        let rg = self.tape.rg(self.id) || self.tape.rg(other.id);
        self.tape.push(value, op, rg)
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>, TensorError> {
        let (a, b) = (self.value(), other.value());
        let shape = binary_shape("add", &a, &b)?;
        Ok(self.binary(other, binary_map(&a, &b, shape, |x, y| x + y), Op::Add(self.id, other.id)))
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>, TensorError> {
        let (a, b) = (self.value(), other.value());
        let shape = binary_shape("sub", &a, &b)?;
        Ok(self.binary(other, binary_map(&a, &b, shape, |x, y| x - y), Op::Sub(self.id, other.id)))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>, TensorError> {
        let (a, b) = (self.value(), other.value());
        let shape = binary_shape("mul", &a, &b)?;
        Ok(self.binary(other, binary_map(&a, &b, shape, |x, y| x * y), Op::Mul(self.id, other.id)))
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        let v = self.value().map(|x| x * c);
        self.unary(v, Op::ScalarMul(self.id, c))
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>, TensorError> {
        let (a, b) = (self.value(), other.value());
        if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
            return Err(mismatch("matmul", &a, &b));
        }
        let (n, k, m) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let mut c = vec![0.0; n * m];
        gemm(n, k, m, a.data(), (k, 1), b.data(), (m, 1), 0.0, &mut c, (m, 1));
        Ok(self.binary(other, Tensor::new(&[n, m], c)?, Op::MatMul(self.id, other.id)))
    }

    /// 1-D convolution (cross-correlation) of `(B, Cin, L)` with a
    /// `(Cout, Cin, K)` kernel and optional `(Cout)` bias, zero padded.
    pub fn conv1d(
        self,
        w: Var<'t>,
        b: Option<Var<'t>>,
        stride: usize,
        padding: usize,
    ) -> Result<Var<'t>, TensorError> {
        let (vx, vw) = (self.value(), w.value());
        if vx.rank() != 3 || vw.rank() != 3 || vx.shape()[1] != vw.shape()[1] {
            return Err(mismatch("conv1d", &vx, &vw));
        }
        let (bsz, cin, len) = (vx.shape()[0], vx.shape()[1], vx.shape()[2]);
        let (cout, k) = (vw.shape()[0], vw.shape()[2]);
        let lout = conv_out_len(len, k, stride, padding).ok_or_else(|| mismatch("conv1d", &vx, &vw))?;
        let bias = match b {
            Some(b) => {
                let vb = b.value();
                if vb.shape() != [cout] {
                    return Err(mismatch("conv1d bias", &vw, &vb));
                }
                Some(vb)
            }
            None => None,
        };
        let ck = cin * k;
        let mut out = vec![0.0; bsz * cout * lout];
        let mut cols = vec![0.0; ck * lout];
        for bi in 0..bsz {
            let xb = &vx.data()[bi * cin * len..(bi + 1) * cin * len];
            im2col(xb, cin, len, k, stride, padding, lout, &mut cols);
            let ob = &mut out[bi * cout * lout..(bi + 1) * cout * lout];
            if let Some(vb) = &bias {
                for (o, row) in ob.chunks_mut(lout).enumerate() {
                    row.fill(vb.data()[o]);
                }
            }
            gemm(cout, ck, lout, vw.data(), (ck, 1), &cols, (lout, 1), 1.0, ob, (lout, 1));
        }
        let rg = self.tape.rg(self.id) || self.tape.rg(w.id) || b.is_some_and(|b| self.tape.rg(b.id));
        Ok(self.tape.push(
            Tensor::new(&[bsz, cout, lout], out)?,
            Op::Conv1d {
                x: self.id,
                w: w.id,
                b: b.map(|b| b.id),
                stride,
                padding,
            },
            rg,
        ))
    }

    pub fn relu(self) -> Var<'t> {
        let v = self.value().map(|x| if x > 0.0 { x } else { 0.0 });
        self.unary(v, Op::Relu(self.id))
    }

    /// Divides each slice along `axis` by its Euclidean norm.
    pub fn l2_normalize(self, axis: usize) -> Result<Var<'t>, TensorError> {
        let vx = self.value();
        check_axis("l2_normalize", &vx, axis)?;
        let (outer, dim, inner) = split_axis(vx.shape(), axis);
        let mut out = vec![0.0; vx.numel()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |d: usize| (o * dim + d) * inner + i;
                let ss: f64 = (0..dim).map(|d| vx.data()[idx(d)].powi(2)).sum();
                let n = (ss + NORM_EPS_SQ).sqrt();
                for d in 0..dim {
                    out[idx(d)] = vx.data()[idx(d)] / n;
                }
            }
        }
        Ok(self.unary(Tensor::new(vx.shape(), out)?, Op::L2Normalize { x: self.id, axis }))
    }

    pub fn log(self) -> Var<'t> {
        let v = self.value().map(f64::ln);
        self.unary(v, Op::Log(self.id))
    }

    pub fn exp(self) -> Var<'t> {
        let v = self.value().map(f64::exp);
        self.unary(v, Op::Exp(self.id))
    }

    /// Sum of all elements (rank-0 result).
    pub fn sum(self) -> Var<'t> {
        let s: f64 = self.value().data().iter().sum();
        self.unary(Tensor::scalar(s), Op::Sum { x: self.id, axis: None })
    }

    pub fn mean(self) -> Var<'t> {
        let v = self.value();
        let s: f64 = v.data().iter().sum::<f64>() / v.numel() as f64;
        self.unary(Tensor::scalar(s), Op::Mean { x: self.id, axis: None })
    }

    fn reduce_axis(&self, op: &'static str, axis: usize, f: impl Fn(&[f64]) -> f64) -> Result<Tensor, TensorError> {
        let vx = self.value();
        check_axis(op, &vx, axis)?;
        let (outer, dim, inner) = split_axis(vx.shape(), axis);
        let mut out = Vec::with_capacity(outer * inner);
        let mut buf = vec![0.0; dim];
        for o in 0..outer {
            for i in 0..inner {
                for (d, b) in buf.iter_mut().enumerate() {
                    *b = vx.data()[(o * dim + d) * inner + i];
                }
                out.push(f(&buf));
            }
        }
        Tensor::new(&removed_axis(vx.shape(), axis), out)
    }

    pub fn sum_axis(self, axis: usize) -> Result<Var<'t>, TensorError> {
        let v = self.reduce_axis("sum", axis, |s| s.iter().sum())?;
        Ok(self.unary(v, Op::Sum { x: self.id, axis: Some(axis) }))
    }

    pub fn mean_axis(self, axis: usize) -> Result<Var<'t>, TensorError> {
        let v = self.reduce_axis("mean", axis, |s| s.iter().sum::<f64>() / s.len() as f64)?;
        Ok(self.unary(v, Op::Mean { x: self.id, axis: Some(axis) }))
    }

    /// Maximum along `axis`. The subgradient goes to the first maximal entry.
    pub fn max_axis(self, axis: usize) -> Result<Var<'t>, TensorError> {
        let vx = self.value();
        check_axis("max", &vx, axis)?;
        let (outer, dim, inner) = split_axis(vx.shape(), axis);
        let mut out = Vec::with_capacity(outer * inner);
        let mut argmax = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let mut best = (o * dim) * inner + i;
                for d in 1..dim {
                    let j = (o * dim + d) * inner + i;
                    if vx.data()[j] > vx.data()[best] {
                        best = j;
                    }
                }
                out.push(vx.data()[best]);
                argmax.push(best);
            }
        }
        let v = Tensor::new(&removed_axis(vx.shape(), axis), out)?;
        Ok(self.unary(v, Op::Max { x: self.id, argmax }))
    }

    /// `log Σ exp` along `axis`, evaluated with max subtraction.
    /// Entries equal to `-inf` are treated as masked out.
    pub fn logsumexp(self, axis: usize) -> Result<Var<'t>, TensorError> {
        let v = self.reduce_axis("logsumexp", axis, |s| {
            let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if m == f64::NEG_INFINITY {
                return m;
            }
            m + s.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
        })?;
        Ok(self.unary(v, Op::LogSumExp { x: self.id, axis }))
    }

    /// Matrix transpose.
    pub fn transpose(self) -> Result<Var<'t>, TensorError> {
        let v = self.value();
        if v.rank() != 2 {
            return Err(TensorError::InvalidAxis {
                op: "transpose",
                axis: 1,
                rank: v.rank(),
            });
        }
        let (r, c) = (v.shape()[0], v.shape()[1]);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = v.data()[i * c + j];
            }
        }
        Ok(self.unary(Tensor::new(&[c, r], out)?, Op::Transpose(self.id)))
    }

    /// Selects rows of a matrix (repeats allowed).
    pub fn gather_rows(self, rows: &[usize]) -> Result<Var<'t>, TensorError> {
        let v = self.value();
        if v.rank() != 2 {
            return Err(TensorError::InvalidAxis {
                op: "gather_rows",
                axis: 0,
                rank: v.rank(),
            });
        }
        let (r, c) = (v.shape()[0], v.shape()[1]);
        let mut out = Vec::with_capacity(rows.len() * c);
        for &i in rows {
            if i >= r {
                return Err(TensorError::InvalidArgument(format!(
                    "gather_rows index {i} out of {r} rows"
                )));
            }
            out.extend_from_slice(v.row(i));
        }
        Ok(self.unary(
            Tensor::new(&[rows.len(), c], out)?,
            Op::GatherRows {
                x: self.id,
                rows: rows.to_vec(),
            },
        ))
    }

    /// Adds a vector along the last axis (affine-layer bias).
    pub fn add_bias(self, b: Var<'t>) -> Result<Var<'t>, TensorError> {
        let (vx, vb) = (self.value(), b.value());
        let c = *vx.shape().last().unwrap_or(&1);
        if vb.rank() != 1 || vb.numel() != c {
            return Err(mismatch("add_bias", &vx, &vb));
        }
        let data = vx
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x + vb.data()[i % c])
            .collect();
        Ok(self.binary(b, Tensor::new(vx.shape(), data)?, Op::AddBias { x: self.id, b: b.id }))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>, TensorError> {
        let v = (*self.value()).clone().reshaped(shape)?;
        Ok(self.unary(v, Op::Reshape(self.id)))
    }
}
