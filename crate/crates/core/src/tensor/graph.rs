//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Nodes are appended in evaluation order, so the node list is already a
//! topological order and the backward sweep is a reverse scan of it.

use super::{dot, norm, Tensor, COSINE_EPS};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Relu(Var),
    Scale(Var, f64),
    Square(Var),
    Sum(Var),
    LogSoftmaxRows(Var),
    RowCosine(Var, Var),
    Gather(Var, Vec<usize>),
    Reshape(Var),
    Conv2d { input: Var, filters: Var, k: usize },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records a forward computation for one backward pass.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root w.r.t. every node that depends on a parameter.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `None` for constants and nodes the root does not depend on.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let needs_grad = match &op {
            Op::Leaf => false,
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRow(a, b)
            | Op::MulRow(a, b)
            | Op::RowCosine(a, b) => self.nodes[a.0].needs_grad || self.nodes[b.0].needs_grad,
            Op::Conv2d { input, filters, .. } => self.nodes[input.0].needs_grad || self.nodes[filters.0].needs_grad,
            Op::Relu(a)
            | Op::Scale(a, _)
            | Op::Square(a)
            | Op::Sum(a)
            | Op::LogSoftmaxRows(a)
            | Op::Gather(a, _)
            | Op::Reshape(a) => self.nodes[a.0].needs_grad,
        };
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// A trainable leaf: receives a gradient in [`Graph::backward`].
    pub fn param(&mut self, value: Tensor) -> Var {
        let v = self.push(value, Op::Leaf);
        self.nodes[v.0].needs_grad = true;
        v
    }

    /// A non-trainable leaf.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).sub(self.value(b))?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).mul(self.value(b))?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    fn check_row(&self, op: &'static str, a: Var, row: Var) -> Result<(usize, usize)> {
        let (sa, sr) = (self.shape(a), self.shape(row));
        if sa.len() != 2 || sr.len() != 2 || sr[0] != 1 || sr[1] != sa[1] {
            return Err(Error::shape(op, sa, sr));
        }
        Ok((sa[0], sa[1]))
    }

    /// `a + row` with a `1 x n` row broadcast over the rows of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (_, n) = self.check_row("add_row", a, row)?;
        let r = self.value(row).data().to_vec();
        let mut out = self.value(a).clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += r[i % n];
        }
        Ok(self.push(out, Op::AddRow(a, row)))
    }

    /// `a ⊙ row` with a `1 x n` row broadcast over the rows of `a`.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (_, n) = self.check_row("mul_row", a, row)?;
        let r = self.value(row).data().to_vec();
        let mut out = self.value(a).clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v *= r[i % n];
        }
        Ok(self.push(out, Op::MulRow(a, row)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).relu();
        self.push(out, Op::Relu(a))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).scale(s);
        self.push(out, Op::Scale(a, s))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v * v);
        self.push(out, Op::Square(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).log_softmax_rows()?;
        Ok(self.push(out, Op::LogSoftmaxRows(a)))
    }

    /// Cosine similarity of matching rows, as an `N x 1` column.
    pub fn row_cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() || ta.shape().len() != 2 {
            return Err(Error::shape("row_cosine", ta.shape(), tb.shape()));
        }
        let rows = ta.rows();
        let out: Vec<f64> = (0..rows)
            .map(|r| {
                let (p, q) = (ta.row_slice(r), tb.row_slice(r));
                dot(p, q) / (norm(p).max(COSINE_EPS) * norm(q).max(COSINE_EPS))
            })
            .collect();
        let out = Tensor::new(&[rows, 1], out)?;
        Ok(self.push(out, Op::RowCosine(a, b)))
    }

    /// Stacks the rows `a[indices[0]], a[indices[1]], ...`.
    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let t = self.value(a);
        let rows = t.rows();
        if indices.is_empty() {
            return Err(Error::invalid("gather_rows", "no indices"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::invalid(
                "gather_rows",
                format!("row {bad} out of range for {rows} rows"),
            ));
        }
        let c = t.cols();
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            data.extend_from_slice(t.row_slice(i));
        }
        let out = Tensor::new(&[indices.len(), c], data)?;
        Ok(self.push(out, Op::Gather(a, indices.to_vec())))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).reshape(shape)?;
        Ok(self.push(out, Op::Reshape(a)))
    }

    /// Stride-1 same-padded convolution of an `h x w x c_in` input with a
    /// `k x k x c_in x c_out` filter bank (odd `k`).
    pub fn conv2d(&mut self, input: Var, filters: Var) -> Result<Var> {
        let out = conv2d_same(self.value(input), self.value(filters))?;
        let k = self.shape(filters)[0];
        Ok(self.push(out, Op::Conv2d { input, filters, k }))
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let root_value = self.value(root);
        if !root_value.is_scalar() {
            return Err(Error::NonScalarRoot(root_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::full(root_value.shape(), 1.0));

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }

        for (node, g) in self.nodes.iter().zip(grads.iter_mut()) {
            if !matches!(node.op, Op::Leaf) || !node.needs_grad {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.nodes[a.0].needs_grad {
                    self.accumulate(grads, *a, g.matmul_nt(tb));
                }
                if self.nodes[b.0].needs_grad {
                    self.accumulate(grads, *b, ta.matmul_tn(g));
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.nodes[a.0].needs_grad {
                    self.accumulate(grads, *a, g.mul(tb).expect("shapes checked in forward"));
                }
                if self.nodes[b.0].needs_grad {
                    self.accumulate(grads, *b, g.mul(ta).expect("shapes checked in forward"));
                }
            }
            Op::AddRow(a, row) => {
                self.accumulate(grads, *a, g.clone());
                if self.nodes[row.0].needs_grad {
                    self.accumulate(grads, *row, column_sums(g));
                }
            }
            Op::MulRow(a, row) => {
                let (ta, tr) = (self.value(*a), self.value(*row));
                let n = tr.len();
                if self.nodes[a.0].needs_grad {
                    let mut ga = g.clone();
                    for (i, v) in ga.data_mut().iter_mut().enumerate() {
                        *v *= tr.data()[i % n];
                    }
                    self.accumulate(grads, *a, ga);
                }
                if self.nodes[row.0].needs_grad {
                    let mut gr = vec![0.0; n];
                    for (i, (gv, av)) in g.data().iter().zip(ta.data()).enumerate() {
                        gr[i % n] += gv * av;
                    }
                    self.accumulate(grads, *row, Tensor::row(&gr));
                }
            }
            Op::Relu(a) => {
                let ta = self.value(*a);
                let mut ga = g.clone();
                for (v, &x) in ga.data_mut().iter_mut().zip(ta.data()) {
                    if x <= 0.0 {
                        *v = 0.0;
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::Scale(a, s) => self.accumulate(grads, *a, g.scale(*s)),
            Op::Square(a) => {
                let ta = self.value(*a);
                let mut ga = g.clone();
                for (v, &x) in ga.data_mut().iter_mut().zip(ta.data()) {
                    *v *= 2.0 * x;
                }
                self.accumulate(grads, *a, ga);
            }
            Op::Sum(a) => {
                let shape = self.shape(*a).to_vec();
                self.accumulate(grads, *a, Tensor::full(&shape, g.item()));
            }
            Op::LogSoftmaxRows(a) => {
                // d/dz of (z - lse(z)): g - softmax(z) * sum(g)
                let out = &node.value;
                let c = out.cols();
                let mut ga = g.clone();
                for r in 0..out.rows() {
                    let gs: f64 = g.row_slice(r).iter().sum();
                    let row = &mut ga.data_mut()[r * c..(r + 1) * c];
                    for (j, v) in row.iter_mut().enumerate() {
                        *v -= out.data()[r * c + j].exp() * gs;
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::RowCosine(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let c = ta.cols();
                let mut ga = vec![0.0; ta.len()];
                let mut gb = vec![0.0; tb.len()];
                for r in 0..ta.rows() {
                    let (p, q) = (ta.row_slice(r), tb.row_slice(r));
                    let (np, nq) = (norm(p), norm(q));
                    let (fp, fq) = (np.max(COSINE_EPS), nq.max(COSINE_EPS));
                    let cos = node.value.data()[r];
                    let gr = g.data()[r];
                    for j in 0..c {
                        let mut dp = q[j] / (fp * fq);
                        if np > COSINE_EPS {
                            dp -= cos * p[j] / (np * np);
                        }
                        let mut dq = p[j] / (fp * fq);
                        if nq > COSINE_EPS {
                            dq -= cos * q[j] / (nq * nq);
                        }
                        ga[r * c + j] = gr * dp;
                        gb[r * c + j] = gr * dq;
                    }
                }
                let shape = ta.shape().to_vec();
                self.accumulate(
                    grads,
                    *a,
                    Tensor {
                        shape: shape.clone(),
                        data: ga,
                    },
                );
                self.accumulate(grads, *b, Tensor { shape, data: gb });
            }
            Op::Gather(a, indices) => {
                let ta = self.value(*a);
                let c = ta.cols();
                let mut ga = Tensor::zeros(ta.shape());
                for (k, &i) in indices.iter().enumerate() {
                    let src = g.row_slice(k);
                    for (d, s) in ga.data_mut()[i * c..(i + 1) * c].iter_mut().zip(src) {
                        *d += s;
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::Reshape(a) => {
                let shape = self.shape(*a).to_vec();
                self.accumulate(grads, *a, g.reshape(&shape).expect("same length"));
            }
            Op::Conv2d { input, filters, k } => {
                let (gx, gw) = conv2d_same_backward(self.value(*input), self.value(*filters), g, *k);
                self.accumulate(grads, *input, gx);
                self.accumulate(grads, *filters, gw);
            }
        }
    }
}

fn column_sums(g: &Tensor) -> Tensor {
    let c = g.cols();
    let mut out = vec![0.0; c];
    for (i, v) in g.data().iter().enumerate() {
        out[i % c] += v;
    }
    Tensor::row(&out)
}

fn conv_dims(x: &Tensor, w: &Tensor) -> Result<(usize, usize, usize, usize, usize)> {
    let (xs, ws) = (x.shape(), w.shape());
    if xs.len() != 3 || ws.len() != 4 || ws[0] != ws[1] || ws[2] != xs[2] {
        return Err(Error::shape("conv2d", xs, ws));
    }
    if ws[0] % 2 == 0 {
        return Err(Error::invalid(
            "conv2d",
            format!("same padding needs odd support, got k = {}", ws[0]),
        ));
    }
    Ok((xs[0], xs[1], xs[2], ws[3], ws[0]))
}

/// Stride-1 same-padded convolution (cross-correlation, the deep-learning
/// convention): `y[i,j,o] = Σ x[i+di-p, j+dj-p, c] · w[di,dj,c,o]`.
pub fn conv2d_same(x: &Tensor, w: &Tensor) -> Result<Tensor> {
    let (h, wd, cin, cout, k) = conv_dims(x, w)?;
    let pad = k / 2;
    let (xd, wdat) = (x.data(), w.data());
    let mut out = vec![0.0; h * wd * cout];
    for i in 0..h {
        for j in 0..wd {
            let o_base = (i * wd + j) * cout;
            for di in 0..k {
                let Some(si) = (i + di).checked_sub(pad).filter(|&s| s < h) else {
                    continue;
                };
                for dj in 0..k {
                    let Some(sj) = (j + dj).checked_sub(pad).filter(|&s| s < wd) else {
                        continue;
                    };
                    let x_base = (si * wd + sj) * cin;
                    for c in 0..cin {
                        let xv = xd[x_base + c];
                        let w_base = ((di * k + dj) * cin + c) * cout;
                        for o in 0..cout {
                            out[o_base + o] += xv * wdat[w_base + o];
                        }
                    }
                }
            }
        }
    }
    Tensor::new(&[h, wd, cout], out)
}

fn conv2d_same_backward(x: &Tensor, w: &Tensor, g: &Tensor, k: usize) -> (Tensor, Tensor) {
    let (h, wd, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let cout = w.shape()[3];
    let pad = k / 2;
    let mut gx = Tensor::zeros(x.shape());
    let mut gw = Tensor::zeros(w.shape());
    for i in 0..h {
        for j in 0..wd {
            let o_base = (i * wd + j) * cout;
            for di in 0..k {
                let Some(si) = (i + di).checked_sub(pad).filter(|&s| s < h) else {
                    continue;
                };
                for dj in 0..k {
                    let Some(sj) = (j + dj).checked_sub(pad).filter(|&s| s < wd) else {
                        continue;
                    };
                    let x_base = (si * wd + sj) * cin;
                    for c in 0..cin {
                        let w_base = ((di * k + dj) * cin + c) * cout;
                        let xv = x.data()[x_base + c];
                        let mut acc = 0.0;
                        for o in 0..cout {
                            let go = g.data()[o_base + o];
                            acc += go * w.data()[w_base + o];
                            gw.data_mut()[w_base + o] += go * xv;
                        }
                        gx.data_mut()[x_base + c] += acc;
                    }
                }
            }
        }
    }
    (gx, gw)
}
