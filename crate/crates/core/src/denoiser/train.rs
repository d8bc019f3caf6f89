//! Noise-prediction training with Adam.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::autodiff::{Real, Tape, Tensor};
use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};
use crate::field::TwoChannelImage;
use crate::rng::Rng;

use super::augment::{augment, AugmentationPolicy};
use super::params::{decode_params, encode_params, ParamStore};
use super::unet::TinyUNet;

/// Base of the per-step random streams; step `k` draws from stream `base + k`.
const STEP_STREAM_BASE: u64 = 0x7EA1_0000_0000;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Zero disables periodic checkpoints.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 5000,
            batch: 8,
            learning_rate: 3e-4,
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::Config("batch must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: ParamStore<T>,
    v: ParamStore<T>,
}

impl<T: Real> Adam<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn update(&mut self, params: &mut ParamStore<T>, grads: &[Vec<T>], lr: f64) {
        self.step += 1;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        let step_size = T::of(lr * c2.sqrt() / c1);
        let eps = T::of(self.eps * c2.sqrt());
        for (((p, m), v), g) in params
            .tensors_mut()
            .iter_mut()
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
            .zip(grads)
        {
            for (((pi, mi), vi), gi) in p.data.iter_mut().zip(&mut m.data).zip(&mut v.data).zip(g) {
                *mi = b1 * *mi + (T::one() - b1) * *gi;
                *vi = b2 * *vi + (T::one() - b2) * *gi * *gi;
                *pi = *pi - step_size * *mi / (vi.sqrt() + eps);
            }
        }
    }
}

/// Per-step training statistics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub wall_time: f64,
}

pub fn log_csv(records: &[StepRecord]) -> String {
    let mut s = String::from("step,loss,wall_time\n");
    for r in records {
        let _ = writeln!(s, "{},{:e},{:.3}", r.step, r.loss, r.wall_time);
    }
    s
}

/// Noised inputs and targets for one item.
struct Sample {
    t: usize,
    noisy: Vec<f64>,
    noise: Vec<f64>,
}

fn draw_sample(x0: &TwoChannelImage, schedule: &NoiseSchedule, rng: &mut Rng) -> Sample {
    let t = 1 + rng.below(schedule.steps());
    let flat = x0.to_flat();
    let noise = rng.normals(flat.len());
    let ab = schedule.alpha_bar(t);
    let noisy = flat
        .iter()
        .zip(&noise)
        .map(|(x, e)| ab.sqrt() * x + (1.0 - ab).sqrt() * e)
        .collect();
    Sample { t, noisy, noise }
}

/// Mean per-element squared error of the prediction and its parameter
/// gradient for one item.
fn item_loss_grad<T: Real>(net: &TinyUNet<T>, s: &Sample, h: usize, w: usize) -> Result<(f64, Vec<Vec<T>>)> {
    let mut tape = Tape::new();
    let shape = [net.config().in_channels, h, w];
    let x = tape.constant(Tensor::from_f64(&shape, &s.noisy));
    let pass = net.forward(&mut tape, x, s.t, true)?;
    let target: Vec<T> = s.noise.iter().map(|&v| T::of(v)).collect();
    let loss = tape.mse_loss(pass.output, &target)?;
    let mut grads = tape.backward(loss)?;
    let per_param = pass
        .params
        .iter()
        .zip(net.params().tensors())
        .map(|(v, p)| grads.take(*v).unwrap_or_else(|| vec![T::zero(); p.len()]))
        .collect();
    Ok((tape.value(loss).data[0].f64(), per_param))
}

/// One optimizer step on a batch of clean images. Items are processed in
/// order and their gradients summed in that order.
pub fn train_step<T: Real>(
    net: &mut TinyUNet<T>,
    batch: &[TwoChannelImage],
    schedule: &NoiseSchedule,
    rng: &mut Rng,
    adam: &mut Adam<T>,
    lr: f64,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Config("empty training batch".into()));
    }
    let samples: Vec<Sample> = batch.iter().map(|x| draw_sample(x, schedule, rng)).collect();
    let mut total: Option<Vec<Vec<T>>> = None;
    let mut loss = 0.0;
    for (x0, s) in batch.iter().zip(&samples) {
        let (h, w) = x0.shape();
        let (l, g) = item_loss_grad(net, s, h, w)?;
        loss += l;
        match &mut total {
            None => total = Some(g),
            Some(acc) => {
                for (a, b) in acc.iter_mut().zip(g) {
                    for (ai, bi) in a.iter_mut().zip(b) {
                        *ai = *ai + bi;
                    }
                }
            }
        }
    }
    let n = batch.len() as f64;
    let loss = loss / n;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            step: adam.step as usize,
        });
    }
    let mut grads = total.expect("non-empty batch");
    let inv = T::of(1.0 / n);
    for g in &mut grads {
        g.iter_mut().for_each(|v| *v = *v * inv);
    }
    adam.update(net.params_mut(), &grads, lr);
    Ok(loss)
}

/// Mean noise-prediction loss over a fixed set of images, with `t` and
/// noise drawn from `seed`.
pub fn validation_loss<T: Real>(net: &TinyUNet<T>, images: &[TwoChannelImage], schedule: &NoiseSchedule, seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed, 0x7A1D);
    let mut total = 0.0;
    for x0 in images {
        let s = draw_sample(x0, schedule, &mut rng);
        let (h, w) = x0.shape();
        let eps = net.predict(&s.noisy, h, w, s.t)?;
        total += eps.iter().zip(&s.noise).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / eps.len() as f64;
    }
    Ok(total / images.len().max(1) as f64)
}

/// Full training state, enough to resume bit-exactly.
#[derive(Clone, Debug)]
pub struct Trainer<T> {
    pub net: TinyUNet<T>,
    pub adam: Adam<T>,
    pub log: Vec<StepRecord>,
}

impl<T: Real> Trainer<T> {
    pub fn new(net: TinyUNet<T>) -> Self {
        let adam = Adam::new(net.params());
        Self {
            net,
            adam,
            log: Vec::new(),
        }
    }

    /// Number of optimizer steps taken so far.
    pub fn step(&self) -> usize {
        self.adam.step as usize
    }

    /// Builds the batch for step `k` from its own random stream.
    pub fn batch_for_step(
        sources: &[TwoChannelImage],
        policy: &AugmentationPolicy,
        cfg: &TrainConfig,
        k: usize,
    ) -> Result<(Vec<TwoChannelImage>, Rng)> {
        let mut rng = Rng::new(cfg.seed, STEP_STREAM_BASE + k as u64);
        let batch = (0..cfg.batch)
            .map(|_| {
                let src = &sources[rng.below(sources.len())];
                augment(src, policy, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((batch, rng))
    }

    /// Trains until `cfg.steps` total steps, invoking `on_step` after each.
    pub fn run(
        &mut self,
        sources: &[TwoChannelImage],
        policy: &AugmentationPolicy,
        schedule: &NoiseSchedule,
        cfg: &TrainConfig,
        mut on_step: impl FnMut(&Self) -> Result<()>,
    ) -> Result<()> {
        cfg.validate()?;
        if sources.is_empty() {
            return Err(Error::Config("no training images".into()));
        }
        let start = Instant::now();
        while self.step() < cfg.steps {
            let k = self.step();
            let (batch, mut rng) = Self::batch_for_step(sources, policy, cfg, k)?;
            let loss = train_step(&mut self.net, &batch, schedule, &mut rng, &mut self.adam, cfg.learning_rate)
                .map_err(|e| match e {
                    Error::NonFiniteLoss { .. } => Error::NonFiniteLoss { step: k },
                    other => other,
                })?;
            self.log.push(StepRecord {
                step: k,
                loss,
                wall_time: start.elapsed().as_secs_f64(),
            });
            if k % 100 == 0 {
                log::info!("step {k}: loss {loss:.5}");
            }
            on_step(self)?;
        }
        Ok(())
    }

    pub fn encode_checkpoint(&self) -> Vec<u8> {
        let mut store = self.net.params().clone();
        for (prefix, s) in [("adam.m.", &self.adam.m), ("adam.v.", &self.adam.v)] {
            for (n, t) in s.names().iter().zip(s.tensors()) {
                store.push(&format!("{prefix}{n}"), t.clone());
            }
        }
        encode_params(self.net.config(), self.adam.step, &store)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode_checkpoint()).map_err(|e| Error::io(path, e))
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let file = decode_params(&bytes)?;
        let mut net = TinyUNet::<T>::new(file.config, 0)?;
        let n = net.params().len();
        if file.store.len() != 3 * n {
            return Err(Error::Format {
                offset: 0,
                msg: format!("checkpoint holds {} tensors, expected {}", file.store.len(), 3 * n),
            });
        }
        let split = |range: std::ops::Range<usize>, prefix: &str| {
            let mut s = ParamStore::new();
            for i in range {
                let name = file.store.names()[i].strip_prefix(prefix).unwrap_or(&file.store.names()[i]);
                s.push(name, file.store.tensors()[i].cast::<T>());
            }
            s
        };
        let params = split(0..n, "");
        let m = split(n..2 * n, "adam.m.");
        let v = split(2 * n..3 * n, "adam.v.");
        net.params().check_compatible(&m)?;
        net.params().check_compatible(&v)?;
        net.load_store(params)?;
        let mut adam = Adam::new(net.params());
        adam.m = m;
        adam.v = v;
        adam.step = file.step;
        Ok(Self {
            net,
            adam,
            log: Vec::new(),
        })
    }
}
