//! Tensor-level reverse-mode tape.
//!
//! Nodes are appended in evaluation order, so the node list is already a
//! topological order; the backward pass walks it once in reverse.

use super::kernels;
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Op<T> {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Silu(Var),
    Conv2d { x: Var, w: Var, b: Var, k: usize },
    Linear { x: Var, w: Var, b: Var },
    InstanceNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, rstd: Vec<T> },
    ChannelNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, rstd: Vec<T> },
    ScaleShift { h: Var, ss: Var },
    AvgPool2(Var),
    Upsample2(Var),
    Concat(Var, Var),
    Matmul(Var, Var),
    Transpose(Var),
    SoftmaxRows(Var),
    Reshape(Var),
    SliceRows { x: Var, start: usize },
    MseLoss { x: Var, target: Vec<T> },
    Dot { x: Var, weights: Vec<T> },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of a node, or `None` when the node does not depend on any
    /// gradient-requiring leaf.
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn accumulate<T: Real>(slot: &mut Option<Vec<T>>, g: Vec<T>) {
    match slot {
        Some(acc) => {
            for (a, b) in acc.iter_mut().zip(g) {
                *a = *a + b;
            }
        }
        None => *slot = Some(g),
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives a gradient.
    pub fn var(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf treated as a constant.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Autodiff(format!(
                "{what}: shape {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let va = &self.value(a).data;
        let vb = &self.value(b).data;
        let data = va.iter().zip(vb).map(|(x, y)| *x + *y).collect();
        let t = Tensor::new(self.shape(a), data);
        Ok(self.push(t, Op::Add(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let va = &self.value(a).data;
        let vb = &self.value(b).data;
        let data = va.iter().zip(vb).map(|(x, y)| *x * *y).collect();
        let t = Tensor::new(self.shape(a), data);
        Ok(self.push(t, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let v = self.value(a);
        let t = Tensor::new(&v.shape, v.data.iter().map(|x| *x * s).collect());
        self.push(t, Op::Scale(a, s), &[a])
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let t = Tensor::new(&v.shape, v.data.iter().map(|&x| x * kernels::sigmoid(x)).collect());
        self.push(t, Op::Silu(a), &[a])
    }

    /// Same-padded stride-1 convolution. `x: [Cin, H, W]`,
    /// `w: [Cout, Cin, k, k]`, `b: [Cout]`, odd `k`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 3 || ws.len() != 4 || ws[2] != ws[3] || ws[2] % 2 == 0 || ws[1] != xs[0] {
            return Err(Error::Autodiff(format!("conv2d: input {xs:?} with kernel {ws:?}")));
        }
        if self.shape(b) != [ws[0]] {
            return Err(Error::Autodiff(format!("conv2d: bias {:?} for {} outputs", self.shape(b), ws[0])));
        }
        let k = ws[2];
        let out = kernels::conv2d_forward(
            &self.value(x).data,
            (xs[0], xs[1], xs[2]),
            &self.value(w).data,
            &self.value(b).data,
            ws[0],
            k,
        );
        let t = Tensor::new(&[ws[0], xs[1], xs[2]], out);
        Ok(self.push(t, Op::Conv2d { x, w, b, k }, &[x, w, b]))
    }

    /// `y = W x + b` with `x: [Din]`, `W: [Dout, Din]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 1 || ws.len() != 2 || ws[1] != xs[0] || self.shape(b) != [ws[0]] {
            return Err(Error::Autodiff(format!("linear: input {xs:?} with weight {ws:?}")));
        }
        let mut y = self.value(b).data.clone();
        T::gemm(
            ws[0],
            ws[1],
            1,
            T::one(),
            &self.value(w).data,
            (ws[1] as isize, 1),
            &self.value(x).data,
            (1, 1),
            T::one(),
            &mut y,
            (1, 1),
        );
        let t = Tensor::new(&[ws[0]], y);
        Ok(self.push(t, Op::Linear { x, w, b }, &[x, w, b]))
    }

    /// Per-channel normalization over the spatial extent with affine
    /// parameters `gamma, beta: [C]`.
    pub fn instance_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 || self.shape(gamma) != [xs[0]] || self.shape(beta) != [xs[0]] {
            return Err(Error::Autodiff(format!("instance_norm: input {xs:?}")));
        }
        let (y, xhat, rstd) = kernels::instance_norm_forward(
            &self.value(x).data,
            xs[0],
            xs[1] * xs[2],
            &self.value(gamma).data,
            &self.value(beta).data,
        );
        let t = Tensor::new(&xs, y);
        Ok(self.push(t, Op::InstanceNorm { x, gamma, beta, xhat, rstd }, &[x, gamma, beta]))
    }

    /// Normalization across channels at each pixel of a `[C, H, W]` input,
    /// with affine parameters `gamma, beta: [C]`.
    pub fn channel_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 || self.shape(gamma) != [xs[0]] || self.shape(beta) != [xs[0]] {
            return Err(Error::Autodiff(format!("channel_norm: input {xs:?}")));
        }
        let (y, xhat, rstd) = kernels::channel_norm_forward(
            &self.value(x).data,
            xs[0],
            xs[1] * xs[2],
            &self.value(gamma).data,
            &self.value(beta).data,
        );
        let t = Tensor::new(&xs, y);
        Ok(self.push(t, Op::ChannelNorm { x, gamma, beta, xhat, rstd }, &[x, gamma, beta]))
    }

    /// `h·(1 + scale_c) + shift_c` with `ss = [scale; shift]` of length `2C`.
    pub fn scale_shift(&mut self, h: Var, ss: Var) -> Result<Var> {
        let hs = self.shape(h).to_vec();
        if hs.len() != 3 || self.shape(ss) != [2 * hs[0]] {
            return Err(Error::Autodiff(format!(
                "scale_shift: features {hs:?} with modulation {:?}",
                self.shape(ss)
            )));
        }
        let c = hs[0];
        let plane = hs[1] * hs[2];
        let hv = &self.value(h).data;
        let sv = &self.value(ss).data;
        let mut y = Vec::with_capacity(hv.len());
        for ch in 0..c {
            let s = T::one() + sv[ch];
            let b = sv[c + ch];
            y.extend(hv[ch * plane..(ch + 1) * plane].iter().map(|&v| v * s + b));
        }
        let t = Tensor::new(&hs, y);
        Ok(self.push(t, Op::ScaleShift { h, ss }, &[h, ss]))
    }

    pub fn avg_pool2(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 || xs[1] % 2 != 0 || xs[2] % 2 != 0 {
            return Err(Error::Autodiff(format!("avg_pool2: input {xs:?}")));
        }
        let y = kernels::avg_pool2(&self.value(x).data, xs[0], xs[1], xs[2]);
        let t = Tensor::new(&[xs[0], xs[1] / 2, xs[2] / 2], y);
        Ok(self.push(t, Op::AvgPool2(x), &[x]))
    }

    pub fn upsample2(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 {
            return Err(Error::Autodiff(format!("upsample2: input {xs:?}")));
        }
        let y = kernels::upsample2(&self.value(x).data, xs[0], xs[1], xs[2]);
        let t = Tensor::new(&[xs[0], 2 * xs[1], 2 * xs[2]], y);
        Ok(self.push(t, Op::Upsample2(x), &[x]))
    }

    /// Concatenation along the leading (channel) axis.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() != sb.len() || sa[1..] != sb[1..] {
            return Err(Error::Autodiff(format!("concat: {sa:?} with {sb:?}")));
        }
        let mut data = self.value(a).data.clone();
        data.extend_from_slice(&self.value(b).data);
        let mut shape = sa.clone();
        shape[0] += sb[0];
        let t = Tensor::new(&shape, data);
        Ok(self.push(t, Op::Concat(a, b), &[a, b]))
    }

    /// `[m, k] × [k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Autodiff(format!("matmul: {sa:?} with {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut c = vec![T::zero(); m * n];
        T::gemm(
            m,
            k,
            n,
            T::one(),
            &self.value(a).data,
            (k as isize, 1),
            &self.value(b).data,
            (n as isize, 1),
            T::zero(),
            &mut c,
            (n as isize, 1),
        );
        let t = Tensor::new(&[m, n], c);
        Ok(self.push(t, Op::Matmul(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() != 2 {
            return Err(Error::Autodiff(format!("transpose: {s:?}")));
        }
        let y = kernels::transpose(&self.value(a).data, s[0], s[1]);
        let t = Tensor::new(&[s[1], s[0]], y);
        Ok(self.push(t, Op::Transpose(a), &[a]))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() != 2 {
            return Err(Error::Autodiff(format!("softmax_rows: {s:?}")));
        }
        let y = kernels::softmax_rows(&self.value(a).data, s[0], s[1]);
        let t = Tensor::new(&s, y);
        Ok(self.push(t, Op::SoftmaxRows(a), &[a]))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(a).len() {
            return Err(Error::Autodiff(format!(
                "reshape: {:?} into {shape:?}",
                self.shape(a)
            )));
        }
        let t = Tensor::new(shape, self.value(a).data.clone());
        Ok(self.push(t, Op::Reshape(a), &[a]))
    }

    /// Rows `start..start + len` of a 2-D tensor.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() != 2 || start + len > s[0] {
            return Err(Error::Autodiff(format!("slice_rows: {start}+{len} of {s:?}")));
        }
        let data = self.value(a).data[start * s[1]..(start + len) * s[1]].to_vec();
        let t = Tensor::new(&[len, s[1]], data);
        Ok(self.push(t, Op::SliceRows { x: a, start }, &[a]))
    }

    /// Mean squared difference to a constant target, as a scalar node.
    pub fn mse_loss(&mut self, x: Var, target: &[T]) -> Result<Var> {
        let v = &self.value(x).data;
        if v.len() != target.len() {
            return Err(Error::Autodiff(format!(
                "mse_loss: {} predictions for {} targets",
                v.len(),
                target.len()
            )));
        }
        let n = T::of(v.len() as f64);
        let loss = v
            .iter()
            .zip(target)
            .map(|(a, b)| (*a - *b) * (*a - *b))
            .sum::<T>()
            / n;
        let t = Tensor::scalar(loss);
        Ok(self.push(t, Op::MseLoss { x, target: target.to_vec() }, &[x]))
    }

    /// `Σ weights ⊙ x`, as a scalar node.
    pub fn dot(&mut self, x: Var, weights: &[T]) -> Result<Var> {
        let v = &self.value(x).data;
        if v.len() != weights.len() {
            return Err(Error::Autodiff("dot: length mismatch".into()));
        }
        let s = v.iter().zip(weights).map(|(a, b)| *a * *b).sum::<T>();
        let t = Tensor::scalar(s);
        Ok(self.push(t, Op::Dot { x, weights: weights.to_vec() }, &[x]))
    }

    /// Back-propagates from a scalar output node.
    pub fn backward(&self, output: Var) -> Result<Gradients<T>> {
        if output.0 >= self.nodes.len() {
            return Err(Error::Autodiff("backward called before forward".into()));
        }
        if self.value(output).len() != 1 {
            return Err(Error::Autodiff(format!(
                "backward needs a scalar output, got shape {:?}",
                self.shape(output)
            )));
        }
        self.backward_with(output, vec![T::one()])
    }

    /// Back-propagates a vector-Jacobian product seeded with `seed` at
    /// `output`.
    pub fn backward_with(&self, output: Var, seed: Vec<T>) -> Result<Gradients<T>> {
        if output.0 >= self.nodes.len() {
            return Err(Error::Autodiff("backward called before forward".into()));
        }
        if seed.len() != self.value(output).len() {
            return Err(Error::Autodiff(format!(
                "seed gradient has {} entries for output of {}",
                seed.len(),
                self.value(output).len()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(seed);
        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if self.wants(*a) {
                    accumulate(&mut grads[a.0], g.to_vec());
                }
                if self.wants(*b) {
                    accumulate(&mut grads[b.0], g.to_vec());
                }
            }
            Op::Mul(a, b) => {
                let va = &self.value(*a).data;
                let vb = &self.value(*b).data;
                if self.wants(*a) {
                    accumulate(&mut grads[a.0], g.iter().zip(vb).map(|(g, y)| *g * *y).collect());
                }
                if self.wants(*b) {
                    accumulate(&mut grads[b.0], g.iter().zip(va).map(|(g, x)| *g * *x).collect());
                }
            }
            Op::Scale(a, s) => {
                accumulate(&mut grads[a.0], g.iter().map(|g| *g * *s).collect());
            }
            Op::Silu(a) => {
                let x = &self.value(*a).data;
                let d = g
                    .iter()
                    .zip(x)
                    .map(|(g, &x)| {
                        let s = kernels::sigmoid(x);
                        *g * s * (T::one() + x * (T::one() - s))
                    })
                    .collect();
                accumulate(&mut grads[a.0], d);
            }
            Op::Conv2d { x, w, b, k } => {
                let xs = self.shape(*x);
                let cout = self.shape(*w)[0];
                let (dx, dw, db) = kernels::conv2d_backward(
                    &self.value(*x).data,
                    (xs[0], xs[1], xs[2]),
                    &self.value(*w).data,
                    cout,
                    *k,
                    g,
                    self.wants(*x),
                    self.wants(*w),
                );
                if let Some(dx) = dx {
                    accumulate(&mut grads[x.0], dx);
                }
                if let Some(dw) = dw {
                    accumulate(&mut grads[w.0], dw);
                }
                if self.wants(*b) {
                    accumulate(&mut grads[b.0], db);
                }
            }
            Op::Linear { x, w, b } => {
                let ws = self.shape(*w);
                let (dout, din) = (ws[0], ws[1]);
                if self.wants(*x) {
                    let mut dx = vec![T::zero(); din];
                    T::gemm(
                        din,
                        dout,
                        1,
                        T::one(),
                        &self.value(*w).data,
                        (1, din as isize),
                        g,
                        (1, 1),
                        T::zero(),
                        &mut dx,
                        (1, 1),
                    );
                    accumulate(&mut grads[x.0], dx);
                }
                if self.wants(*w) {
                    let xv = &self.value(*x).data;
                    let mut dw = Vec::with_capacity(dout * din);
                    for gi in g {
                        dw.extend(xv.iter().map(|xj| *gi * *xj));
                    }
                    accumulate(&mut grads[w.0], dw);
                }
                if self.wants(*b) {
                    accumulate(&mut grads[b.0], g.to_vec());
                }
            }
            Op::InstanceNorm { x, gamma, beta, xhat, rstd } => {
                let xs = self.shape(*x);
                let (c, plane) = (xs[0], xs[1] * xs[2]);
                let gv = &self.value(*gamma).data;
                let (dx, dgamma, dbeta) = kernels::instance_norm_backward(g, xhat, rstd, gv, c, plane);
                if self.wants(*x) {
                    accumulate(&mut grads[x.0], dx);
                }
                if self.wants(*gamma) {
                    accumulate(&mut grads[gamma.0], dgamma);
                }
                if self.wants(*beta) {
                    accumulate(&mut grads[beta.0], dbeta);
                }
            }
            Op::ChannelNorm { x, gamma, beta, xhat, rstd } => {
                let xs = self.shape(*x);
                let (c, plane) = (xs[0], xs[1] * xs[2]);
                let gv = &self.value(*gamma).data;
                let (dx, dgamma, dbeta) = kernels::channel_norm_backward(g, xhat, rstd, gv, c, plane);
                if self.wants(*x) {
                    accumulate(&mut grads[x.0], dx);
                }
                if self.wants(*gamma) {
                    accumulate(&mut grads[gamma.0], dgamma);
                }
                if self.wants(*beta) {
                    accumulate(&mut grads[beta.0], dbeta);
                }
            }
            Op::ScaleShift { h, ss } => {
                let hs = self.shape(*h);
                let c = hs[0];
                let plane = hs[1] * hs[2];
                let hv = &self.value(*h).data;
                let sv = &self.value(*ss).data;
                if self.wants(*h) {
                    let mut dh = Vec::with_capacity(hv.len());
                    for ch in 0..c {
                        let s = T::one() + sv[ch];
                        dh.extend(g[ch * plane..(ch + 1) * plane].iter().map(|&g| g * s));
                    }
                    accumulate(&mut grads[h.0], dh);
                }
                if self.wants(*ss) {
                    let mut dss = vec![T::zero(); 2 * c];
                    for ch in 0..c {
                        let gs = &g[ch * plane..(ch + 1) * plane];
                        let hp = &hv[ch * plane..(ch + 1) * plane];
                        dss[ch] = gs.iter().zip(hp).map(|(g, h)| *g * *h).sum();
                        dss[c + ch] = gs.iter().copied().sum();
                    }
                    accumulate(&mut grads[ss.0], dss);
                }
            }
            Op::AvgPool2(x) => {
                let xs = self.shape(*x);
                accumulate(&mut grads[x.0], kernels::avg_pool2_backward(g, xs[0], xs[1], xs[2]));
            }
            Op::Upsample2(x) => {
                let xs = self.shape(*x);
                accumulate(&mut grads[x.0], kernels::upsample2_backward(g, xs[0], xs[1], xs[2]));
            }
            Op::Concat(a, b) => {
                let na = self.value(*a).len();
                if self.wants(*a) {
                    accumulate(&mut grads[a.0], g[..na].to_vec());
                }
                if self.wants(*b) {
                    accumulate(&mut grads[b.0], g[na..].to_vec());
                }
            }
            Op::Matmul(a, b) => {
                let sa = self.shape(*a);
                let sb = self.shape(*b);
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if self.wants(*a) {
                    // dA = G Bᵀ
                    let mut da = vec![T::zero(); m * k];
                    T::gemm(
                        m,
                        n,
                        k,
                        T::one(),
                        g,
                        (n as isize, 1),
                        &self.value(*b).data,
                        (1, n as isize),
                        T::zero(),
                        &mut da,
                        (k as isize, 1),
                    );
                    accumulate(&mut grads[a.0], da);
                }
                if self.wants(*b) {
                    // dB = Aᵀ G
                    let mut db = vec![T::zero(); k * n];
                    T::gemm(
                        k,
                        m,
                        n,
                        T::one(),
                        &self.value(*a).data,
                        (1, k as isize),
                        g,
                        (n as isize, 1),
                        T::zero(),
                        &mut db,
                        (n as isize, 1),
                    );
                    accumulate(&mut grads[b.0], db);
                }
            }
            Op::Transpose(a) => {
                let s = self.shape(*a);
                accumulate(&mut grads[a.0], kernels::transpose(g, s[1], s[0]));
            }
            Op::SoftmaxRows(a) => {
                let s = self.shape(*a);
                let y = &node.value.data;
                let mut dx = vec![T::zero(); y.len()];
                for r in 0..s[0] {
                    let row = r * s[1]..(r + 1) * s[1];
                    let dot: T = g[row.clone()].iter().zip(&y[row.clone()]).map(|(g, y)| *g * *y).sum();
                    for j in row {
                        dx[j] = y[j] * (g[j] - dot);
                    }
                }
                accumulate(&mut grads[a.0], dx);
            }
            Op::Reshape(a) => accumulate(&mut grads[a.0], g.to_vec()),
            Op::SliceRows { x, start } => {
                let s = self.shape(*x);
                let mut dx = vec![T::zero(); s[0] * s[1]];
                dx[start * s[1]..start * s[1] + g.len()].copy_from_slice(g);
                accumulate(&mut grads[x.0], dx);
            }
            Op::MseLoss { x, target } => {
                let v = &self.value(*x).data;
                let scale = T::of(2.0) * g[0] / T::of(v.len() as f64);
                accumulate(
                    &mut grads[x.0],
                    v.iter().zip(target).map(|(a, b)| (*a - *b) * scale).collect(),
                );
            }
            Op::Dot { x, weights } => {
                accumulate(&mut grads[x.0], weights.iter().map(|w| *w * g[0]).collect());
            }
        }
    }
}
