//! Forward passes against independent loop implementations.

mod common;

use common::*;

fn check(name: &str, worst: f64) {
    assert!(worst < ORACLE_TOLERANCE, "{name}: max deviation {worst:e}");
}

#[test]
fn conv2d_matches_loops() {
    check("conv2d", conv_cases(100, ORACLE_CASES * 2));
}

#[test]
fn pooling_matches_loops() {
    check("pooling", pool_cases(101, ORACLE_CASES));
}

#[test]
fn dense_matches_loops() {
    check("dense", dense_cases(102, ORACLE_CASES));
}

#[test]
fn softmax_matches_formula() {
    check("softmax", softmax_cases(103, ORACLE_CASES));
}

#[test]
fn se_matches_loops() {
    check("se", se_cases(104, ORACLE_CASES));
}

#[test]
fn sk_matches_loops() {
    check("sk", sk_cases(105, ORACLE_CASES));
}

#[test]
fn eca_matches_loops() {
    check("eca", eca_cases(106, ORACLE_CASES));
}

#[test]
fn sge_matches_loops() {
    check("sge", sge_cases(107, ORACLE_CASES));
}

#[test]
fn sge_constant_input_is_half_gated() {
    // Zero spatial variance: the normalised map is 0, so every gate is sigmoid(bias) = 0.5.
    let xs = [1, 4, 3, 3];
    let mut store = siamese::nn::ParamStore::<f64>::new();
    let cfg = siamese::attention::AttentionConfig::of_kind("sge");
    let block = siamese::attention::AttentionRegistry::<f64>::builtin()
        .build(&cfg, 4, "att", &mut store)
        .unwrap()
        .unwrap();
    let x = vec![0.7; 36];
    let mut s = siamese::nn::Session::new(&mut store, siamese::nn::Mode::Eval, false);
    let xv = s.input(siamese::Tensor::new(xs.to_vec(), x).unwrap());
    let y = block.forward(&mut s, xv).unwrap();
    assert!(s.tape.value(y).data().iter().all(|v| (v - 0.35).abs() < 1e-12));
}
