use criterion::{criterion_group, criterion_main, Criterion};
use ptycho_bench::{desk_scan, random_field};
use ptycho_core::denoiser::{TinyUNet, UNetConfig};
use ptycho_core::fft::fft2;
use ptycho_core::model::forward_amplitudes;
use ptycho_core::Rng;
use std::hint::black_box;

fn fft(c: &mut Criterion) {
    for n in [16, 64] {
        let x = random_field(n, 0);
        c.bench_function(&format!("fft2_{n}"), |b| b.iter(|| fft2(black_box(&x)).unwrap()));
    }
}

fn forward_model(c: &mut Criterion) {
    let (f, probe, grid) = desk_scan(0.5);
    c.bench_function("forward_amplitudes_64_ov50", |b| {
        b.iter(|| forward_amplitudes(black_box(&f), &probe, &grid).unwrap())
    });
}

fn unet(c: &mut Criterion) {
    let net = TinyUNet::<f32>::new(UNetConfig::default(), 0).unwrap();
    let x = Rng::new(2, 0).normals(2 * 64 * 64);
    let mut group = c.benchmark_group("unet");
    group.sample_size(10);
    group.bench_function("predict_64", |b| b.iter(|| net.predict(black_box(&x), 64, 64, 100).unwrap()));
    group.bench_function("predict_with_vjp_64", |b| {
        b.iter(|| net.predict_with_vjp(black_box(&x), 64, 64, 100, |e| e.to_vec()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, fft, forward_model, unet);
criterion_main!(benches);
