//! Three-level residual U-Net noise predictor with time conditioning and
//! bottleneck self-attention.

use crate::autodiff::{Real, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;

use super::params::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UNetConfig {
    pub in_channels: usize,
    /// Channel width of the top level; deeper levels use 2× and 4×.
    pub base_width: usize,
    pub time_dim: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self {
            in_channels: 2,
            base_width: 16,
            time_dim: 64,
        }
    }
}

impl UNetConfig {
    pub fn widths(&self) -> [usize; 3] {
        [self.base_width, 2 * self.base_width, 4 * self.base_width]
    }

    fn cond_dim(&self) -> usize {
        2 * self.time_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.base_width == 0 || self.time_dim < 2 || self.time_dim % 2 != 0 {
            return Err(Error::Config(format!("invalid network configuration {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct Linear {
    w: usize,
    b: usize,
}

#[derive(Clone, Copy, Debug)]
struct Conv {
    w: usize,
    b: usize,
}

#[derive(Clone, Copy, Debug)]
struct Norm {
    gamma: usize,
    beta: usize,
}

#[derive(Clone, Copy, Debug)]
struct ResBlock {
    norm1: Norm,
    conv1: Conv,
    cond: Linear,
    norm2: Norm,
    conv2: Conv,
    skip: Option<Conv>,
}

#[derive(Clone, Copy, Debug)]
struct Attention {
    norm: Norm,
    query: usize,
    key: usize,
    value: usize,
    out: Linear,
}

#[derive(Clone, Debug)]
struct Layout {
    time1: Linear,
    time2: Linear,
    conv_in: Conv,
    down0: [ResBlock; 2],
    down1: [ResBlock; 2],
    mid0: ResBlock,
    attn: Attention,
    mid1: ResBlock,
    up1: [ResBlock; 2],
    up0: [ResBlock; 2],
    conv_out: Conv,
}

struct Builder<'a, T> {
    store: ParamStore<T>,
    rng: &'a mut Rng,
}

impl<T: Real> Builder<'_, T> {
    fn normal(&mut self, name: &str, shape: &[usize], std: f64) -> usize {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| T::of(self.rng.normal() * std)).collect();
        self.store.push(name, Tensor::new(shape, data))
    }

    fn filled(&mut self, name: &str, shape: &[usize], v: f64) -> usize {
        let n: usize = shape.iter().product();
        self.store.push(name, Tensor::new(shape, vec![T::of(v); n]))
    }

    fn linear(&mut self, name: &str, din: usize, dout: usize) -> Linear {
        Linear {
            w: self.normal(&format!("{name}.weight"), &[dout, din], (1.0 / din as f64).sqrt()),
            b: self.filled(&format!("{name}.bias"), &[dout], 0.0),
        }
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, zero: bool) -> Conv {
        let shape = [cout, cin, k, k];
        let w = if zero {
            self.filled(&format!("{name}.weight"), &shape, 0.0)
        } else {
            self.normal(&format!("{name}.weight"), &shape, (1.0 / (cin * k * k) as f64).sqrt())
        };
        Conv {
            w,
            b: self.filled(&format!("{name}.bias"), &[cout], 0.0),
        }
    }

    fn norm(&mut self, name: &str, c: usize) -> Norm {
        Norm {
            gamma: self.filled(&format!("{name}.gamma"), &[c], 1.0),
            beta: self.filled(&format!("{name}.beta"), &[c], 0.0),
        }
    }

    fn matrix(&mut self, name: &str, c: usize) -> usize {
        self.normal(name, &[c, c], (1.0 / c as f64).sqrt())
    }

    fn res(&mut self, name: &str, cin: usize, cout: usize, cond: usize) -> ResBlock {
        ResBlock {
            norm1: self.norm(&format!("{name}.norm1"), cin),
            conv1: self.conv(&format!("{name}.conv1"), cin, cout, 3, false),
            cond: self.linear(&format!("{name}.cond"), cond, 2 * cout),
            norm2: self.norm(&format!("{name}.norm2"), cout),
            conv2: self.conv(&format!("{name}.conv2"), cout, cout, 3, false),
            skip: (cin != cout).then(|| self.conv(&format!("{name}.skip"), cin, cout, 1, false)),
        }
    }
}

fn build_layout<T: Real>(cfg: &UNetConfig, b: &mut Builder<'_, T>) -> Layout {
    let [w0, w1, w2] = cfg.widths();
    let cd = cfg.cond_dim();
    Layout {
        time1: b.linear("time.fc1", cfg.time_dim, cd),
        time2: b.linear("time.fc2", cd, cd),
        conv_in: b.conv("conv_in", cfg.in_channels, w0, 3, false),
        down0: [b.res("down0.res0", w0, w0, cd), b.res("down0.res1", w0, w0, cd)],
        down1: [b.res("down1.res0", w0, w1, cd), b.res("down1.res1", w1, w1, cd)],
        mid0: b.res("mid.res0", w1, w2, cd),
        attn: Attention {
            norm: b.norm("mid.attn.norm", w2),
            query: b.matrix("mid.attn.query", w2),
            key: b.matrix("mid.attn.key", w2),
            value: b.matrix("mid.attn.value", w2),
            out: b.linear("mid.attn.out", w2, w2),
        },
        mid1: b.res("mid.res1", w2, w2, cd),
        up1: [b.res("up1.res0", w2 + w1, w1, cd), b.res("up1.res1", w1, w1, cd)],
        up0: [b.res("up0.res0", w1 + w0, w0, cd), b.res("up0.res1", w0, w0, cd)],
        conv_out: b.conv("conv_out", w0, cfg.in_channels, 3, true),
    }
}

/// Sinusoidal embedding of an integer time step.
pub fn time_embedding(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut e = vec![0.0; dim];
    for i in 0..half {
        let freq = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
        let a = t as f64 * freq;
        e[i] = a.sin();
        e[half + i] = a.cos();
    }
    e
}

/// ε-prediction network.
#[derive(Clone, Debug)]
pub struct TinyUNet<T> {
    config: UNetConfig,
    layout: Layout,
    params: ParamStore<T>,
}

/// Tape handles produced by one forward pass.
pub struct ForwardPass {
    pub output: Var,
    pub params: Vec<Var>,
}

impl<T: Real> TinyUNet<T> {
    /// Random initialization with a zeroed output convolution.
    pub fn new(config: UNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::new(seed, 0x0E7);
        let mut b = Builder {
            store: ParamStore::new(),
            rng: &mut rng,
        };
        let layout = build_layout(&config, &mut b);
        Ok(Self {
            config,
            layout,
            params: b.store,
        })
    }

    pub fn config(&self) -> &UNetConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.count()
    }

    /// Replaces every parameter, checking each tensor's shape against the
    /// layer it is loaded into.
    pub fn load_store(&mut self, store: ParamStore<T>) -> Result<()> {
        self.params.check_compatible(&store)?;
        self.params = store;
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> TinyUNet<U> {
        TinyUNet {
            config: self.config,
            layout: self.layout.clone(),
            params: self.params.cast(),
        }
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        if shape.len() != 3 || shape[0] != self.config.in_channels || shape[1] % 4 != 0 || shape[2] % 4 != 0 || shape[1] == 0 || shape[2] == 0 {
            return Err(Error::Dimension(format!(
                "network input must be [{}, H, W] with H, W positive multiples of 4, got {shape:?}",
                self.config.in_channels
            )));
        }
        Ok(())
    }

    /// Records a forward pass on `tape`. Parameters become gradient leaves
    /// when `trainable` is set and constants otherwise.
    pub fn forward(&self, tape: &mut Tape<T>, x: Var, t: usize, trainable: bool) -> Result<ForwardPass> {
        self.check_input(tape.shape(x))?;
        let params: Vec<Var> = self
            .params
            .tensors()
            .iter()
            .map(|p| if trainable { tape.var(p.clone()) } else { tape.constant(p.clone()) })
            .collect();
        let p = |i: usize| params[i];
        let l = &self.layout;

        let temb = tape.constant(Tensor::from_f64(&[self.config.time_dim], &time_embedding(t, self.config.time_dim)));
        let h = tape.linear(temb, p(l.time1.w), p(l.time1.b))?;
        let h = tape.silu(h);
        let cond = tape.linear(h, p(l.time2.w), p(l.time2.b))?;
        let cond = tape.silu(cond);

        let h = tape.conv2d(x, p(l.conv_in.w), p(l.conv_in.b))?;
        let h = self.res_block(tape, &p, &l.down0[0], h, cond)?;
        let s0 = self.res_block(tape, &p, &l.down0[1], h, cond)?;
        let h = tape.avg_pool2(s0)?;
        let h = self.res_block(tape, &p, &l.down1[0], h, cond)?;
        let s1 = self.res_block(tape, &p, &l.down1[1], h, cond)?;
        let h = tape.avg_pool2(s1)?;
        let h = self.res_block(tape, &p, &l.mid0, h, cond)?;
        let h = self.attention(tape, &p, &l.attn, h)?;
        let h = self.res_block(tape, &p, &l.mid1, h, cond)?;
        let h = tape.upsample2(h)?;
        let h = tape.concat(h, s1)?;
        let h = self.res_block(tape, &p, &l.up1[0], h, cond)?;
        let h = self.res_block(tape, &p, &l.up1[1], h, cond)?;
        let h = tape.upsample2(h)?;
        let h = tape.concat(h, s0)?;
        let h = self.res_block(tape, &p, &l.up0[0], h, cond)?;
        let h = self.res_block(tape, &p, &l.up0[1], h, cond)?;
        let h = tape.silu(h);
        let output = tape.conv2d(h, p(l.conv_out.w), p(l.conv_out.b))?;
        Ok(ForwardPass { output, params })
    }

    fn res_block(&self, tape: &mut Tape<T>, p: &impl Fn(usize) -> Var, b: &ResBlock, x: Var, cond: Var) -> Result<Var> {
        let h = tape.channel_norm(x, p(b.norm1.gamma), p(b.norm1.beta))?;
        let h = tape.silu(h);
        let h = tape.conv2d(h, p(b.conv1.w), p(b.conv1.b))?;
        let h = tape.channel_norm(h, p(b.norm2.gamma), p(b.norm2.beta))?;
        let ss = tape.linear(cond, p(b.cond.w), p(b.cond.b))?;
        let h = tape.scale_shift(h, ss)?;
        let h = tape.silu(h);
        let h = tape.conv2d(h, p(b.conv2.w), p(b.conv2.b))?;
        let skip = match b.skip {
            Some(c) => tape.conv2d(x, p(c.w), p(c.b))?,
            None => x,
        };
        tape.add(h, skip)
    }

    fn attention(&self, tape: &mut Tape<T>, p: &impl Fn(usize) -> Var, a: &Attention, x: Var) -> Result<Var> {
        let shape = tape.shape(x).to_vec();
        let (c, n) = (shape[0], shape[1] * shape[2]);
        let h = tape.channel_norm(x, p(a.norm.gamma), p(a.norm.beta))?;
        let h = tape.reshape(h, &[c, n])?;
        let tokens = tape.transpose(h)?;
        let q = tape.matmul(tokens, p(a.query))?;
        let k = tape.matmul(tokens, p(a.key))?;
        let v = tape.matmul(tokens, p(a.value))?;
        let kt = tape.transpose(k)?;
        let scores = tape.matmul(q, kt)?;
        let scores = tape.scale(scores, T::of(1.0 / (c as f64).sqrt()));
        let weights = tape.softmax_rows(scores)?;
        let mixed = tape.matmul(weights, v)?;
        let out_w = tape.transpose(p(a.out.w))?;
        let projected = tape.matmul(mixed, out_w)?;
        let bias = tape.reshape(p(a.out.b), &[1, c])?;
        let projected = self.add_row(tape, projected, bias, n)?;
        let back = tape.transpose(projected)?;
        let back = tape.reshape(back, &shape)?;
        tape.add(back, x)
    }

    /// Adds a `[1, C]` row to every row of an `[N, C]` matrix.
    fn add_row(&self, tape: &mut Tape<T>, m: Var, row: Var, n: usize) -> Result<Var> {
        let ones = tape.constant(Tensor::new(&[n, 1], vec![T::one(); n]));
        let tiled = tape.matmul(ones, row)?;
        tape.add(m, tiled)
    }

    /// Noise prediction for a flat `[C, H, W]` input.
    pub fn predict(&self, x: &[f64], height: usize, width: usize, t: usize) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let shape = [self.config.in_channels, height, width];
        if x.len() != shape.iter().product::<usize>() {
            return Err(Error::Dimension(format!("input of {} values for shape {shape:?}", x.len())));
        }
        let xv = tape.constant(Tensor::from_f64(&shape, x));
        let out = self.forward(&mut tape, xv, t, false)?.output;
        Ok(tape.value(out).to_f64())
    }

    /// Noise prediction and the vector-Jacobian product `(∂ε̂/∂x)ᵀ·seed`.
    pub fn predict_with_vjp(
        &self,
        x: &[f64],
        height: usize,
        width: usize,
        t: usize,
        seed: impl FnOnce(&[f64]) -> Vec<f64>,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut tape = Tape::new();
        let shape = [self.config.in_channels, height, width];
        if x.len() != shape.iter().product::<usize>() {
            return Err(Error::Dimension(format!("input of {} values for shape {shape:?}", x.len())));
        }
        let xv = tape.var(Tensor::from_f64(&shape, x));
        let out = self.forward(&mut tape, xv, t, false)?.output;
        let eps = tape.value(out).to_f64();
        let s = seed(&eps);
        let grads = tape.backward_with(out, s.iter().map(|&v| T::of(v)).collect())?;
        let gx = grads
            .get(xv)
            .map(|g| g.iter().map(|v| v.f64()).collect())
            .unwrap_or_else(|| vec![0.0; x.len()]);
        Ok((eps, gx))
    }
}
