use ptycho_core::denoiser::{
    augment, decode_params, encode_params, load_params, load_params_into, save_params, train_step, Adam,
    AugmentationPolicy, TinyUNet, TrainConfig, Trainer, UNetConfig,
};
use ptycho_core::diffusion::make_schedule;
use ptycho_core::field::{to_two_channel, TwoChannelImage};
use ptycho_core::model::{make_phantom, PhantomParams};
use ptycho_core::{Error, Rng};

fn small(width: usize) -> UNetConfig {
    UNetConfig {
        in_channels: 2,
        base_width: width,
        time_dim: 8,
    }
}

fn phantoms(count: usize, n: usize, first_seed: u64) -> Vec<TwoChannelImage> {
    (0..count)
        .map(|i| to_two_channel(&make_phantom(n, first_seed + i as u64, &PhantomParams::default()).unwrap().object).0)
        .collect()
}

/// Layer-by-layer count for widths 16/32/64, a 64-wide time embedding
/// expanded to 128 for conditioning, and a two-channel image.
fn expected_parameter_count() -> usize {
    let (w0, w1, w2, td, cd) = (16, 32, 64, 64, 128);
    let linear = |i: usize, o: usize| i * o + o;
    let conv = |i: usize, o: usize, k: usize| o * i * k * k + o;
    let norm = |c: usize| 2 * c;
    let res = |i: usize, o: usize| {
        norm(i) + conv(i, o, 3) + linear(cd, 2 * o) + norm(o) + conv(o, o, 3) + if i != o { conv(i, o, 1) } else { 0 }
    };
    let embedding = linear(td, cd) + linear(cd, cd);
    let encoder = conv(2, w0, 3) + 2 * res(w0, w0) + res(w0, w1) + res(w1, w1);
    let bottleneck = res(w1, w2) + norm(w2) + 3 * w2 * w2 + linear(w2, w2) + res(w2, w2);
    let decoder = res(w2 + w1, w1) + res(w1, w1) + res(w1 + w0, w0) + res(w0, w0) + conv(w0, 2, 3);
    embedding + encoder + bottleneck + decoder
}

#[test]
fn default_network_size() {
    let net = TinyUNet::<f32>::new(UNetConfig::default(), 0).unwrap();
    assert_eq!(net.parameter_count(), expected_parameter_count());
}

#[test]
fn saved_parameters_reproduce_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.ptyp");
    let mut net = TinyUNet::<f64>::new(small(4), 3).unwrap();
    let mut rng = Rng::new(3, 1);
    for t in net.params_mut().tensors_mut() {
        t.data.iter_mut().for_each(|v| *v += 0.1 * rng.normal());
    }
    save_params(&net, &path).unwrap();
    let back: TinyUNet<f64> = load_params(&path).unwrap();
    let x = rng.normals(2 * 8 * 8);
    assert_eq!(net.predict(&x, 8, 8, 9).unwrap(), back.predict(&x, 8, 8, 9).unwrap());
}

#[test]
fn truncated_container_is_a_format_error() {
    let net = TinyUNet::<f64>::new(small(4), 0).unwrap();
    let bytes = encode_params(net.config(), 0, net.params());
    for cut in [3, 10, bytes.len() / 2, bytes.len() - 1] {
        assert!(matches!(decode_params(&bytes[..cut]), Err(Error::Format { .. })), "cut at {cut}");
    }
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(matches!(decode_params(&extra), Err(Error::Format { .. })));
}

#[test]
fn loading_into_a_different_width_names_the_layer() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.ptyp");
    save_params(&TinyUNet::<f64>::new(small(8), 0).unwrap(), &path).unwrap();
    let mut narrow = TinyUNet::<f64>::new(small(4), 0).unwrap();
    match load_params_into(&mut narrow, &path) {
        Err(Error::LayerShape { layer, expected, found }) => {
            assert!(!layer.is_empty());
            assert_ne!(expected, found);
            assert!(Error::LayerShape { layer: layer.clone(), expected, found }.to_string().contains(&layer));
        }
        other => panic!("expected a layer shape error, got {other:?}"),
    }
}

#[test]
fn zero_initialized_output_gives_unit_initial_loss() {
    let schedule = make_schedule(50, 1e-3, 0.05).unwrap();
    let mut net = TinyUNet::<f64>::new(small(4), 0).unwrap();
    let mut adam = Adam::new(net.params());
    let batch = phantoms(8, 16, 100);
    let mut rng = Rng::new(0, 0);
    let loss = train_step(&mut net, &batch, &schedule, &mut rng, &mut adam, 1e-3).unwrap();
    // Mean of ε² over 8·2·16·16 standard normal draws.
    assert!((loss - 1.0).abs() < 0.05, "initial loss {loss}");
}

#[test]
fn augmentation_keeps_channels_in_range() {
    let src = phantoms(1, 32, 7).remove(0);
    let policy = AugmentationPolicy::new(16);
    let mut rng = Rng::new(5, 0);
    for _ in 0..10_000 {
        let out = augment(&src, &policy, &mut rng).unwrap();
        assert_eq!(out.shape(), (16, 16));
        assert!(out.to_flat().iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}

fn short_config(steps: usize) -> TrainConfig {
    TrainConfig {
        steps,
        batch: 2,
        learning_rate: 2e-3,
        seed: 11,
        checkpoint_every: 0,
    }
}

#[test]
fn training_is_deterministic_in_the_seed() {
    let schedule = make_schedule(50, 1e-3, 0.05).unwrap();
    let sources = phantoms(4, 16, 200);
    let policy = AugmentationPolicy::new(8);
    let run = || {
        let mut tr = Trainer::new(TinyUNet::<f32>::new(small(4), 1).unwrap());
        tr.run(&sources, &policy, &schedule, &short_config(6), |_| Ok(())).unwrap();
        tr.log.iter().map(|r| r.loss).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn resuming_from_a_checkpoint_matches_an_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("ckpt");
    let schedule = make_schedule(50, 1e-3, 0.05).unwrap();
    let sources = phantoms(4, 16, 300);
    let policy = AugmentationPolicy::new(8);

    let mut full = Trainer::new(TinyUNet::<f32>::new(small(4), 2).unwrap());
    full.run(&sources, &policy, &schedule, &short_config(8), |_| Ok(())).unwrap();

    let mut first = Trainer::new(TinyUNet::<f32>::new(small(4), 2).unwrap());
    first.run(&sources, &policy, &schedule, &short_config(3), |_| Ok(())).unwrap();
    first.save_checkpoint(&ckpt).unwrap();
    let mut resumed = Trainer::<f32>::load_checkpoint(&ckpt).unwrap();
    assert_eq!(resumed.step(), 3);
    resumed.run(&sources, &policy, &schedule, &short_config(8), |_| Ok(())).unwrap();

    let tail: Vec<f64> = full.log[3..].iter().map(|r| r.loss).collect();
    let again: Vec<f64> = resumed.log.iter().map(|r| r.loss).collect();
    assert_eq!(tail, again);
    assert_eq!(full.net.params().tensors(), resumed.net.params().tensors());
}

#[test]
fn short_training_reduces_the_loss() {
    let schedule = make_schedule(100, 5e-4, 0.1).unwrap();
    let sources = phantoms(16, 32, 400);
    let policy = AugmentationPolicy::new(16);
    let cfg = TrainConfig {
        steps: 2000,
        batch: 2,
        learning_rate: 1e-3,
        seed: 3,
        checkpoint_every: 0,
    };
    let mut tr = Trainer::new(TinyUNet::<f32>::new(small(4), 4).unwrap());
    tr.run(&sources, &policy, &schedule, &cfg, |_| Ok(())).unwrap();
    let mean = |r: &[ptycho_core::denoiser::StepRecord]| r.iter().map(|x| x.loss).sum::<f64>() / r.len() as f64;
    let start = mean(&tr.log[..50]);
    let end = mean(&tr.log[tr.log.len() - 200..]);
    assert!(end < 0.5 * start, "loss {start} → {end}");
}
