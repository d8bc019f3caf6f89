//! End-to-end acceptance suite. Every criterion prints one PASS/FAIL line;
//! the test fails if any criterion does.

mod common;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use ptycho_core::autodiff::{numeric_gradient, relative_error};
use ptycho_core::diffusion::{make_schedule, sample, GaussianMixtureScore, StateShape};
use ptycho_core::fft::{fft2, ifft2};
use ptycho_core::field::{from_two_channel, TwoChannelImage};
use ptycho_core::guided::{
    guided_sample, l1_fidelity_grad_x0, l1_fidelity_value, reconstruct, GradientMode, GuidanceConfig, L2Linear,
    StepRule,
};
use ptycho_core::harness::{
    cmd_sweep, ExperimentConfig, Layout, MethodKind, RunOptions, SweepSummary, GENERALIZATION_FILE, TABLE_FILE,
};
use ptycho_core::metrics::{nrmse_phase_aligned, ssim_magnitude, ssim_real};
use ptycho_core::model::{
    adjoint_add, apply, forward_amplitudes, grid_for_overlap, make_phantom, make_probe, measure, MeasurementSet,
    PhantomParams, Probe, ScanGrid,
};
use ptycho_core::solvers::{solve, Method, SolverConfig};
use ptycho_core::{ComplexField, Rng};

use common::gradcheck::{all_ops, network_errors, op_errors, TOL_F32, TOL_F64};
use common::{max_diff, naive_dft, random_field, reference_ssim};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fft_oracle() -> Outcome {
    let mut rng = Rng::new(1, 0);
    let (mut dft, mut norm, mut inv) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..100 {
        let n = if k % 2 == 0 { 4 } else { 8 };
        let x = random_field(n, n, &mut rng);
        let y = fft2(&x).map_err(|e| e.to_string())?;
        dft = dft.max(max_diff(&y, &naive_dft(&x)));
        norm = norm.max((y.norm() - x.norm()).abs() / x.norm());
        inv = inv.max(max_diff(&ifft2(&y).map_err(|e| e.to_string())?, &x));
    }
    check(
        dft < 1e-12 && norm < 1e-12 && inv < 1e-12,
        format!("max |FFT − DFT| {dft:.1e}, norm defect {norm:.1e}, inverse defect {inv:.1e}"),
    )
}

fn adjoint_suite() -> Outcome {
    let mut rng = Rng::new(2, 0);
    let (n, w) = (64, 16);
    let grid = grid_for_overlap(n, w, 0.5).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let probe = Probe::new(random_field(w, w, &mut rng)).map_err(|e| e.to_string())?;
        let f = random_field(n, n, &mut rng);
        let g = random_field(w, w, &mut rng);
        let pos = grid.positions[rng.below(grid.len())];
        let lhs = apply(&f, &probe, pos).map_err(|e| e.to_string())?.inner(&g);
        let mut back = ComplexField::zeros(n, n);
        adjoint_add(&mut back, &g, &probe, pos).map_err(|e| e.to_string())?;
        let rhs = f.inner(&back);
        worst = worst.max((lhs - rhs).norm() / lhs.norm().max(1.0));
    }
    check(worst < 1e-10, format!("worst |⟨Af, g⟩ − ⟨f, Aᴴg⟩| {worst:.1e} over 100 triples"))
}

fn autodiff_exactness() -> Outcome {
    let mut failures = Vec::new();
    let (mut w64, mut w32) = (0.0f64, 0.0f64);
    let ops = all_ops();
    for case in &ops {
        let (e64, e32) = op_errors(case);
        w64 = w64.max(e64);
        w32 = w32.max(e32);
        if e64 > TOL_F64 || e32 > TOL_F32 {
            failures.push(case.name);
        }
    }
    let (x64, p64) = network_errors::<f64>();
    let (x32, p32) = network_errors::<f32>();
    if x64.max(p64) > TOL_F64 {
        failures.push("network (64-bit)");
    }
    if x32.max(p32) > TOL_F32 {
        failures.push("network (32-bit)");
    }
    check(
        failures.is_empty(),
        format!(
            "{} ops worst {w64:.1e} (64-bit) / {w32:.1e} (32-bit); network input {x64:.1e}/{x32:.1e}, params {p64:.1e}/{p32:.1e}; failing: {failures:?}",
            ops.len()
        ),
    )
}

fn small_grid(positions: Vec<(usize, usize)>) -> ScanGrid {
    ScanGrid {
        positions,
        probe_width: 2,
        object_size: 4,
        nominal_overlap: 0.0,
        achieved_overlap: 0.0,
    }
}

fn random_image(n: usize, rng: &mut Rng) -> TwoChannelImage {
    let amp = (0..n * n).map(|_| rng.uniform_range(-0.6, 0.9)).collect();
    let phase = (0..n * n).map(|_| rng.uniform_range(-0.8, 0.8)).collect();
    TwoChannelImage::new(n, n, amp, phase).unwrap()
}

fn l1_guidance_gradient() -> Outcome {
    let mut worst = 0.0f64;
    let mut consistent_value = 0.0f64;
    let mut consistent_grad = 0.0f64;
    for seed in 0..10 {
        let mut rng = Rng::new(seed, 4);
        let probe = Probe::new(ComplexField::from_fn(2, 2, |_, _| {
            Complex64::new(rng.uniform_range(0.3, 1.0), 0.3 * rng.normal())
        }))
        .unwrap();
        let grid = small_grid(vec![(0, 0), (0, 2), (2, 0), (2, 2), (1, 1)]);
        let data_obj = random_image(4, &mut rng);
        let amps = forward_amplitudes(&from_two_channel(&data_obj), &probe, &grid).unwrap();
        let meas = measure(&amps, &grid, 1.0, 0, true).unwrap();

        let img = random_image(4, &mut rng);
        let analytic = l1_fidelity_grad_x0(&img, &meas, &probe).unwrap().to_flat();
        let numeric = numeric_gradient(&img.to_flat(), 1e-7, |x| {
            l1_fidelity_value(&TwoChannelImage::from_flat(4, 4, x).unwrap(), &meas, &probe).unwrap()
        });
        worst = worst.max(relative_error(&analytic, &numeric, 1e-12));

        consistent_value = consistent_value.max(l1_fidelity_value(&data_obj, &meas, &probe).unwrap());
        let g = l1_fidelity_grad_x0(&data_obj, &meas, &probe).unwrap().to_flat();
        consistent_grad = consistent_grad.max(g.iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    check(
        worst < 1e-5 && consistent_value < 1e-12 && consistent_grad < 1e-9,
        format!(
            "worst relative FD error {worst:.1e}; at consistent data value {consistent_value:.1e}, gradient {consistent_grad:.1e}"
        ),
    )
}

fn mean_of(samples: &[Vec<f64>]) -> Vec<f64> {
    let d = samples[0].len();
    let mut m = vec![0.0; d];
    for s in samples {
        for (a, v) in m.iter_mut().zip(s) {
            *a += v / samples.len() as f64;
        }
    }
    m
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    num / b.iter().map(|y| y * y).sum::<f64>().sqrt()
}

fn conjugate_gaussian() -> Outcome {
    let schedule = make_schedule(1000, 1e-4, 0.02).map_err(|e| e.to_string())?;
    let mu = vec![1.5, -1.0, 0.5, 2.0, -2.0, 1.0, 0.0, -1.5];
    let sigma0 = 1.0;
    let d = mu.len();
    let prior = GaussianMixtureScore::single(mu.clone(), sigma0, schedule.clone()).map_err(|e| e.to_string())?;

    // Unconditional chains.
    let chains = 1000;
    let mut rng = Rng::new(50, 0);
    let draws: Vec<Vec<f64>> = (0..chains)
        .map(|_| sample(&prior, StateShape::flat(d), &schedule, &mut rng))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let m = mean_of(&draws);
    let var = draws
        .iter()
        .flat_map(|s| s.iter().zip(&m).map(|(v, c)| (v - c).powi(2)))
        .sum::<f64>()
        / (chains * d - 1) as f64;
    let mean_err = rel(&m, &mu);
    let var_err = (var - sigma0 * sigma0).abs() / (sigma0 * sigma0);

    // Guided chains with y = x₀ + n, n ~ N(0, σ² I).
    let noise_var = 0.25;
    let y = vec![2.5, 0.0, -1.0, 1.5, -1.0, 2.0, 1.0, -2.5];
    let post: Vec<f64> = mu
        .iter()
        .zip(&y)
        .map(|(m, y)| (noise_var * m + sigma0 * sigma0 * y) / (noise_var + sigma0 * sigma0))
        .collect();
    let fidelity = L2Linear { y };
    let samples: Vec<Vec<f64>> = (0..200)
        .map(|k| {
            let cfg = GuidanceConfig {
                zeta0: 1.0,
                travel_depth: 0,
                travel_stride: 1,
                mode: GradientMode::Full,
                step_rule: StepRule::GaussianLikelihood { noise_var, prior_var: sigma0 * sigma0 },
                precondition: false,
                seed: 1000 + k,
            };
            reconstruct(StateShape::flat(d), &prior, &schedule, &fidelity, &cfg).map(|r| r.state)
        })
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let post_err = rel(&mean_of(&samples), &post);
    check(
        post_err < 0.10 && mean_err < 0.05 && var_err < 0.10,
        format!(
            "posterior mean error {:.1}% (200 chains); prior mean error {:.1}%, variance error {:.1}% ({chains} chains)",
            100.0 * post_err,
            100.0 * mean_err,
            100.0 * var_err
        ),
    )
}

fn algorithm_conformance() -> Outcome {
    let schedule = make_schedule(50, 1e-3, 0.2).map_err(|e| e.to_string())?;
    let prior = GaussianMixtureScore::new(
        vec![vec![0.5, -0.5, 0.0, 1.0], vec![-1.0, 0.5, 1.0, 0.0]],
        vec![0.3, 0.7],
        0.5,
        schedule.clone(),
    )
    .map_err(|e| e.to_string())?;
    let fidelity = L2Linear { y: vec![1.0, 0.0, -1.0, 0.5] };
    let shape = StateShape::flat(4);
    let base = GuidanceConfig {
        zeta0: 0.3,
        travel_depth: 0,
        travel_stride: 1,
        seed: 7,
        ..GuidanceConfig::default()
    };
    let mut bitwise = true;
    for seed in 0..5 {
        let cfg = GuidanceConfig { seed, ..base.clone() };
        let a = reconstruct(shape, &prior, &schedule, &fidelity, &cfg).map_err(|e| e.to_string())?;
        let b = guided_sample(shape, &prior, &schedule, &fidelity, &cfg).map_err(|e| e.to_string())?;
        bitwise &= a.state == b.state && a.trace == b.trace;
    }
    let n = schedule.steps();
    let mut counts_ok = true;
    let mut summary = Vec::new();
    for j in [1, 3, 10] {
        let cfg = GuidanceConfig {
            travel_depth: j,
            ..base.clone()
        };
        let rec = reconstruct(shape, &prior, &schedule, &fidelity, &cfg).map_err(|e| e.to_string())?;
        let eligible = (0..n).filter(|&s| s + j < n).count();
        let inner = rec.trace.iter().filter(|e| e.travel).count();
        counts_ok &= rec.counts.travels == eligible && rec.counts.inner == j * eligible && inner == j * eligible;
        summary.push(format!("j={j}: {inner} inner over {eligible} eligible"));
    }
    check(
        bitwise && counts_ok,
        format!("j = 0 bitwise equal to plain guided sampling: {bitwise}; {}", summary.join(", ")),
    )
}

fn noiseless_instance(seed: u64) -> (ComplexField, Probe, MeasurementSet) {
    let phantom = make_phantom(64, seed, &PhantomParams::default()).unwrap().object;
    let probe = make_probe(16, 0.35, 0.2).unwrap();
    let grid = grid_for_overlap(64, 16, 0.75).unwrap();
    let amps = forward_amplitudes(&phantom, &probe, &grid).unwrap();
    let meas = measure(&amps, &grid, 1e5, seed, true).unwrap();
    (phantom, probe, meas)
}

fn baseline_convergence() -> Outcome {
    let cfg = SolverConfig::default();
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for seed in [7, 8] {
        let (truth, probe, meas) = noiseless_instance(seed);
        for method in [Method::Rpie, Method::Awf] {
            let trace = solve(method, &meas, &probe, &cfg).map_err(|e| e.to_string())?;
            let (e, _) = nrmse_phase_aligned(&trace.object, &truth).map_err(|e| e.to_string())?;
            worst = worst.max(e);
            parts.push(format!("{method:?}#{seed} {e:.4} ({} it)", trace.fidelity.len()));
        }
    }
    check(worst < 0.05, format!("NRMSE {}", parts.join(", ")))
}

fn group_mean(s: &SweepSummary, method: MethodKind, layout: Layout, overlap: f64) -> f64 {
    let rows = s.eval.rows_for(method, layout, overlap);
    rows.iter().map(|r| r.nrmse).sum::<f64>() / rows.len() as f64
}

fn overlap_trend(s: &SweepSummary) -> Outcome {
    let means: Vec<f64> = [0.25, 0.5, 0.75]
        .iter()
        .map(|&o| group_mean(s, MethodKind::Rpie, Layout::Raster, o))
        .collect();
    check(
        means[0] > means[1] && means[1] > means[2],
        format!("rPIE mean NRMSE 25% {:.4} > 50% {:.4} > 75% {:.4}", means[0], means[1], means[2]),
    )
}

fn low_overlap_advantage(s: &SweepSummary) -> Outcome {
    let rpie = s.eval.rows_for(MethodKind::Rpie, Layout::Raster, 0.25);
    let diff = s.eval.rows_for(MethodKind::Diffusion, Layout::Raster, 0.25);
    let mut wins = 0;
    let mut pairs = Vec::new();
    for d in &diff {
        let r = rpie.iter().find(|r| r.phantom == d.phantom).ok_or("unpaired phantom")?;
        if d.nrmse < r.nrmse {
            wins += 1;
        }
        pairs.push(format!("{:.3}/{:.3}", d.nrmse, r.nrmse));
    }
    check(
        wins >= 8 && diff.len() == 10,
        format!("diffusion beats rPIE at 25% on {wins}/{} phantoms (diffusion/rPIE: {})", diff.len(), pairs.join(" ")),
    )
}

fn position_generalization(s: &SweepSummary) -> Outcome {
    let raster = group_mean(s, MethodKind::Diffusion, Layout::Raster, 0.25);
    let jitter = group_mean(s, MethodKind::Diffusion, Layout::Jitter, 0.25);
    let r = (jitter - raster).abs() / raster;
    check(
        r < 0.10 && s.train.as_ref().is_some_and(|t| t.resumed_from.is_none()),
        format!("diffusion mean NRMSE raster {raster:.4}, jitter {jitter:.4} ({:.1}% apart)", 100.0 * r),
    )
}

fn metric_correctness() -> Outcome {
    let mut rng = Rng::new(11, 0);
    let mut beaten = 0;
    for _ in 0..100 {
        let f = random_field(12, 12, &mut rng);
        let est = ComplexField::from_fn(12, 12, |r, c| {
            f[(r, c)] * Complex64::from_polar(1.0, 2.0) + Complex64::new(0.3 * rng.normal(), 0.3 * rng.normal())
        });
        let (aligned, _) = nrmse_phase_aligned(&est, &f).map_err(|e| e.to_string())?;
        let grid_best = (0..3600)
            .map(|k| {
                let c = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / 3600.0);
                let err: f64 = est.data().iter().zip(f.data()).map(|(e, r)| (c * e - r).norm_sqr()).sum();
                err.sqrt() / f.norm()
            })
            .fold(f64::INFINITY, f64::min);
        if aligned <= grid_best + 1e-12 {
            beaten += 1;
        }
    }
    let mut ssim_diff = 0.0f64;
    for _ in 0..10 {
        let a = random_field(24, 24, &mut rng);
        let b = ComplexField::from_fn(24, 24, |r, c| a[(r, c)] + Complex64::new(0.5 * rng.normal(), 0.0));
        let amp = a.amplitude();
        let range = amp.iter().copied().fold(f64::MIN, f64::max) - amp.iter().copied().fold(f64::MAX, f64::min);
        let ours = ssim_magnitude(&b, &a).map_err(|e| e.to_string())?;
        ssim_diff = ssim_diff.max((ours - reference_ssim(&b.amplitude(), &amp, 24, 24, range)).abs());
    }
    let (p, q) = (0.7, 0.2);
    let c1 = 0.01f64.powi(2);
    let constant = ssim_real(&[p; 256], &[q; 256], 16, 16, 1.0).map_err(|e| e.to_string())?;
    let closed = (2.0 * p * q + c1) / (p * p + q * q + c1);
    let const_diff = (constant - closed).abs();
    check(
        beaten == 100 && ssim_diff < 1e-6 && const_diff < 1e-12,
        format!(
            "alignment no worse than grid search on {beaten}/100 pairs; SSIM vs reference {ssim_diff:.1e}; constant-image defect {const_diff:.1e}"
        ),
    )
}

fn small_sweep_config(dir: &Path) -> ExperimentConfig {
    ExperimentConfig {
        output_dir: dir.to_path_buf(),
        object_size: 32,
        probe_width: 8,
        phantom_count: 2,
        train_images: 8,
        solver_iterations: 100,
        net_width: 4,
        time_dim: 8,
        train_steps: 40,
        train_batch: 2,
        train_patch: 16,
        checkpoint_every: 20,
        schedule_steps: 20,
        travel_depth: 2,
        travel_stride: 4,
        ..ExperimentConfig::default()
    }
}

fn report_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .filter(|(name, _)| name.ends_with(".csv"))
        .collect();
    out.sort();
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let opts = RunOptions { force: true, jobs: 1 };
    let a_dir = tmp.path().join("a");
    let b_dir = tmp.path().join("b");
    cmd_sweep(&small_sweep_config(&a_dir), &opts).map_err(|e| e.to_string())?;
    cmd_sweep(&small_sweep_config(&b_dir), &opts).map_err(|e| e.to_string())?;
    let a = report_bytes(&a_dir.join("reports"));
    let b = report_bytes(&b_dir.join("reports"));
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    check(
        a == b && names.contains(&TABLE_FILE) && names.contains(&GENERALIZATION_FILE),
        format!("two sweeps produced identical reports {names:?}"),
    )
}

fn run(results: &mut Vec<bool>, id: usize, name: &str, f: impl FnOnce() -> Outcome) {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into());
        Err(msg)
    });
    let secs = start.elapsed().as_secs_f64();
    match &outcome {
        Ok(d) => println!("PASS [{id:2}] {name}: {d} ({secs:.0}s)"),
        Err(d) => println!("FAIL [{id:2}] {name}: {d} ({secs:.0}s)"),
    }
    results.push(outcome.is_ok());
}

#[test]
fn acceptance() {
    let mut results = Vec::new();
    run(&mut results, 1, "FFT oracle", fft_oracle);
    run(&mut results, 2, "forward-operator adjoint", adjoint_suite);
    run(&mut results, 3, "autodiff exactness", autodiff_exactness);
    run(&mut results, 4, "l1 guidance gradient", l1_guidance_gradient);
    run(&mut results, 5, "conjugate Gaussian sampler", conjugate_gaussian);
    run(&mut results, 6, "time-travel sampler conformance", algorithm_conformance);
    run(&mut results, 7, "baseline convergence", baseline_convergence);

    let tmp = tempfile::tempdir().expect("temporary directory");
    let cfg = ExperimentConfig {
        output_dir: tmp.path().join("sweep"),
        ..ExperimentConfig::default()
    };
    let start = Instant::now();
    let sweep = cmd_sweep(&cfg, &RunOptions { force: true, jobs: 1 });
    println!("full sweep finished in {:.0}s", start.elapsed().as_secs_f64());
    match &sweep {
        Ok(s) => {
            print!("{}", s.table_csv);
            print!("{}", s.generalization_csv);
        }
        Err(e) => println!("sweep failed: {e}"),
    }
    let from_sweep = |f: fn(&SweepSummary) -> Outcome| -> Outcome {
        match &sweep {
            Ok(s) => f(s),
            Err(e) => Err(format!("sweep failed: {e}")),
        }
    };
    run(&mut results, 8, "rPIE overlap trend", || from_sweep(overlap_trend));
    run(&mut results, 9, "low-overlap diffusion advantage", || from_sweep(low_overlap_advantage));
    run(&mut results, 10, "scan-position generalization", || from_sweep(position_generalization));
    run(&mut results, 11, "metric correctness", metric_correctness);
    run(&mut results, 12, "sweep determinism", determinism);

    let passed = results.iter().filter(|&&ok| ok).count();
    println!("{passed}/{} acceptance criteria passed", results.len());
    assert_eq!(passed, results.len(), "acceptance criteria failed");
}
