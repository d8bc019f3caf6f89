//! Finite-difference gradient checks for tape primitives and the network.
//!
//! Analytic gradients at 64-bit are compared against central differences of
//! the same 64-bit computation. At 32-bit the analytic gradient is compared
//! against central differences of the 64-bit computation, which isolates the
//! reduced-precision implementation from finite-difference noise.

use ptycho_core::autodiff::{numeric_gradient, relative_error, Real, Tape, Tensor, Var};
use ptycho_core::denoiser::{TinyUNet, UNetConfig};
use ptycho_core::Rng;

pub const TOL_F64: f64 = 1e-7;
pub const TOL_F32: f64 = 1e-4;

pub struct OpCase {
    pub name: &'static str,
    pub build64: fn(&mut Tape<f64>, &[Var]) -> Var,
    pub build32: fn(&mut Tape<f32>, &[Var]) -> Var,
    pub shapes: Vec<Vec<usize>>,
}

macro_rules! op_case {
    ($name:literal, [$($shape:expr),+], |$tape:ident, $v:ident| $body:expr) => {{
        fn build<T: Real>($tape: &mut Tape<T>, $v: &[Var]) -> Var {
            $body
        }
        OpCase {
            name: $name,
            build64: build::<f64>,
            build32: build::<f32>,
            shapes: vec![$($shape.to_vec()),+],
        }
    }};
}

pub fn all_ops() -> Vec<OpCase> {
    vec![
        op_case!("add", [[3, 4], [3, 4]], |t, v| t.add(v[0], v[1]).unwrap()),
        op_case!("mul", [[3, 4], [3, 4]], |t, v| t.mul(v[0], v[1]).unwrap()),
        op_case!("scale", [[5]], |t, v| t.scale(v[0], T::of(-1.7))),
        op_case!("silu", [[2, 3, 3]], |t, v| t.silu(v[0])),
        op_case!("conv3x3", [[2, 5, 4], [3, 2, 3, 3], [3]], |t, v| t.conv2d(v[0], v[1], v[2]).unwrap()),
        op_case!("conv1x1", [[3, 4, 4], [2, 3, 1, 1], [2]], |t, v| t.conv2d(v[0], v[1], v[2]).unwrap()),
        op_case!("linear", [[6], [4, 6], [4]], |t, v| t.linear(v[0], v[1], v[2]).unwrap()),
        op_case!("instance_norm", [[3, 4, 4], [3], [3]], |t, v| t.instance_norm(v[0], v[1], v[2]).unwrap()),
        op_case!("channel_norm", [[5, 3, 3], [5], [5]], |t, v| t.channel_norm(v[0], v[1], v[2]).unwrap()),
        op_case!("scale_shift", [[2, 3, 3], [4]], |t, v| t.scale_shift(v[0], v[1]).unwrap()),
        op_case!("avg_pool2", [[2, 4, 6]], |t, v| t.avg_pool2(v[0]).unwrap()),
        op_case!("upsample2", [[2, 3, 2]], |t, v| t.upsample2(v[0]).unwrap()),
        op_case!("concat", [[2, 3, 3], [1, 3, 3]], |t, v| t.concat(v[0], v[1]).unwrap()),
        op_case!("matmul", [[3, 4], [4, 2]], |t, v| t.matmul(v[0], v[1]).unwrap()),
        op_case!("transpose", [[3, 5]], |t, v| t.transpose(v[0]).unwrap()),
        op_case!("softmax_rows", [[3, 5]], |t, v| t.softmax_rows(v[0]).unwrap()),
        op_case!("reshape", [[2, 3, 4]], |t, v| {
            let r = t.reshape(v[0], &[6, 4]).unwrap();
            let s = t.silu(r);
            t.transpose(s).unwrap()
        }),
        op_case!("slice_rows", [[5, 3]], |t, v| t.slice_rows(v[0], 1, 3).unwrap()),
        op_case!("mse_loss", [[2, 5]], |t, v| t.mse_loss(v[0], &[T::of(0.3); 10]).unwrap()),
        op_case!("shared_input", [[4, 4]], |t, v| {
            let a = t.mul(v[0], v[0]).unwrap();
            let b = t.matmul(a, v[0]).unwrap();
            t.add(b, v[0]).unwrap()
        }),
    ]
}

/// Scalar `Σ w ⊙ op(inputs)` for fixed random weights `w`.
fn scalar<T: Real>(
    build: fn(&mut Tape<T>, &[Var]) -> Var,
    shapes: &[Vec<usize>],
    inputs: &[Vec<f64>],
) -> (Tape<T>, Vec<Var>, Var) {
    let mut tape = Tape::new();
    let vars: Vec<Var> = shapes
        .iter()
        .zip(inputs)
        .map(|(s, x)| tape.var(Tensor::from_f64(s, x)))
        .collect();
    let out = build(&mut tape, &vars);
    let n = tape.value(out).len();
    let mut rng = Rng::new(5, 9);
    let w: Vec<T> = (0..n).map(|_| T::of(rng.normal())).collect();
    let loss = tape.dot(out, &w).unwrap();
    (tape, vars, loss)
}

/// Worst relative errors `(64-bit, 32-bit)` over the op's inputs.
pub fn op_errors(case: &OpCase) -> (f64, f64) {
    let shapes = &case.shapes;
    let mut rng = Rng::new(shapes.len() as u64 * 31 + shapes[0].iter().sum::<usize>() as u64, 1);
    let inputs: Vec<Vec<f64>> = shapes
        .iter()
        .map(|s| rng.normals(s.iter().product()).iter().map(|v| 0.8 * v).collect())
        .collect();
    let eval = |k: usize, x: &[f64]| {
        let mut ins = inputs.clone();
        ins[k] = x.to_vec();
        let (tape, _, loss) = scalar::<f64>(case.build64, shapes, &ins);
        tape.value(loss).data[0]
    };
    let (tape64, vars64, loss64) = scalar::<f64>(case.build64, shapes, &inputs);
    let g64 = tape64.backward(loss64).unwrap();
    let (tape32, vars32, loss32) = scalar::<f32>(case.build32, shapes, &inputs);
    let g32 = tape32.backward(loss32).unwrap();
    let (mut e64, mut e32) = (0.0f64, 0.0f64);
    for k in 0..shapes.len() {
        let numeric = numeric_gradient(&inputs[k], 1e-5, |x| eval(k, x));
        let a64 = g64.get(vars64[k]).expect("input gradient").to_vec();
        e64 = e64.max(relative_error(&a64, &numeric, 1e-8));
        let a32: Vec<f64> = g32.get(vars32[k]).expect("input gradient").iter().map(|v| v.f64()).collect();
        e32 = e32.max(relative_error(&a32, &numeric, 1e-8));
    }
    (e64, e32)
}

pub fn small_config() -> UNetConfig {
    UNetConfig {
        in_channels: 2,
        base_width: 4,
        time_dim: 8,
    }
}

/// Network with every parameter randomized so no gradient path is
/// trivially zero.
pub fn randomized_net(seed: u64) -> TinyUNet<f64> {
    let mut net = TinyUNet::<f64>::new(small_config(), seed).unwrap();
    let mut rng = Rng::new(seed, 77);
    for t in net.params_mut().tensors_mut() {
        let fan = (t.data.len() as f64).sqrt().max(1.0);
        for v in t.data.iter_mut() {
            *v += 0.5 * rng.normal() / fan.sqrt();
        }
    }
    net
}

fn net_loss<T: Real>(net: &TinyUNet<T>, x: &[f64], t: usize, w: &[f64]) -> f64 {
    net.predict(x, 8, 8, t).unwrap().iter().zip(w).map(|(a, b)| a * b).sum()
}

/// Input gradient and every parameter gradient of `Σ w ⊙ ε̂(x, t)`.
pub fn network_gradients<T: Real>(net: &TinyUNet<T>, x: &[f64], t: usize, w: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut tape = Tape::new();
    let xv = tape.var(Tensor::from_f64(&[2, 8, 8], x));
    let pass = net.forward(&mut tape, xv, t, true).unwrap();
    let wt: Vec<T> = w.iter().map(|&v| T::of(v)).collect();
    let loss = tape.dot(pass.output, &wt).unwrap();
    let g = tape.backward(loss).unwrap();
    let gx = g.get(xv).unwrap().iter().map(|v| v.f64()).collect();
    let gp = pass
        .params
        .iter()
        .map(|&p| g.get(p).unwrap().iter().map(|v| v.f64()).collect())
        .collect();
    (gx, gp)
}

/// Relative errors `(input, parameters)` of the network gradient at
/// precision `T`; parameters are probed at one random entry per tensor.
pub fn network_errors<T: Real>() -> (f64, f64) {
    let net = randomized_net(4);
    let low = net.cast::<T>();
    let mut rng = Rng::new(8, 0);
    let x = rng.normals(128);
    let w = rng.normals(128);
    let t = 37;
    let (gx, gp) = network_gradients(&low, &x, t, &w);

    let numeric_x = numeric_gradient(&x, 1e-5, |xp| net_loss(&net, xp, t, &w));
    let ex = relative_error(&gx, &numeric_x, 1e-8);

    let mut analytic_entries = Vec::new();
    let mut numeric_entries = Vec::new();
    for (k, grads) in gp.iter().enumerate() {
        let j = rng.below(grads.len());
        let mut probe = net.clone();
        let orig = probe.params().tensors()[k].data[j];
        let h = 1e-5;
        probe.params_mut().tensors_mut()[k].data[j] = orig + h;
        let up = net_loss(&probe, &x, t, &w);
        probe.params_mut().tensors_mut()[k].data[j] = orig - h;
        let down = net_loss(&probe, &x, t, &w);
        analytic_entries.push(grads[j]);
        numeric_entries.push((up - down) / (2.0 * h));
    }
    (ex, relative_error(&analytic_entries, &numeric_entries, 1e-8))
}
