mod common;

use common::gradcheck::{all_ops, network_errors, network_gradients, op_errors, randomized_net, TOL_F32, TOL_F64};
use ptycho_core::autodiff::{relative_error, Tape, Tensor};
use ptycho_core::denoiser::{TinyUNet, UNetConfig};
use ptycho_core::Rng;

#[test]
fn every_primitive_matches_finite_differences() {
    let mut failures = Vec::new();
    for case in all_ops() {
        let (e64, e32) = op_errors(&case);
        if e64 > TOL_F64 || e32 > TOL_F32 {
            failures.push(format!("{}: {e64:e} / {e32:e}", case.name));
        }
    }
    assert!(failures.is_empty(), "{failures:?}");
}

#[test]
fn network_gradients_at_64_bit() {
    let (ex, ep) = network_errors::<f64>();
    assert!(ex <= TOL_F64, "input gradient relative error {ex:e}");
    assert!(ep <= TOL_F64, "parameter gradient relative error {ep:e}");
}

#[test]
fn network_gradients_at_32_bit() {
    let (ex, ep) = network_errors::<f32>();
    assert!(ex <= TOL_F32, "input gradient relative error {ex:e}");
    assert!(ep <= TOL_F32, "parameter gradient relative error {ep:e}");
}

#[test]
fn vector_jacobian_product_matches_tape_input_gradient() {
    let net = randomized_net(2);
    let mut rng = Rng::new(3, 0);
    let x = rng.normals(128);
    let w = rng.normals(128);
    let (_, jtw) = net.predict_with_vjp(&x, 8, 8, 12, |_| w.clone()).unwrap();
    let (gx, _) = network_gradients(&net, &x, 12, &w);
    assert!(relative_error(&jtw, &gx, 1e-12) < 1e-12);
}

#[test]
fn fresh_network_predicts_zero_noise() {
    let net = TinyUNet::<f64>::new(UNetConfig::default(), 0).unwrap();
    let x = Rng::new(1, 0).normals(2 * 16 * 16);
    assert!(net.predict(&x, 16, 16, 500).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn backward_rejects_nodes_from_elsewhere() {
    let tape = Tape::<f64>::new();
    let mut other = Tape::<f64>::new();
    let a = other.var(Tensor::scalar(1.0));
    let b = other.scale(a, 2.0);
    assert!(tape.backward(b).is_err());
}
