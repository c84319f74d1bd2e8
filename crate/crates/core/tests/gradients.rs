mod common;

use common::{prompt_gradient_max_rel_error, reference_logits, rng, scrambled_model, tiny_config, random_tokens};
use cplm::model::forward_logits;

#[test]
fn forward_matches_reference_implementation() {
    let cfg = tiny_config(16, 8, 1, 2, 12, 5);
    let model = scrambled_model(&cfg, 0.2);
    let tokens = random_tokens(&mut rng(6), 12, 16);
    let got = forward_logits(&model, &tokens, None).unwrap();
    let want = reference_logits(&model, None, &tokens);
    let mut worst = 0.0f64;
    for (t, row) in want.iter().enumerate() {
        for (c, &w) in row.iter().enumerate() {
            worst = worst.max((got.get(t, c) as f64 - w).abs());
        }
    }
    assert!(worst < 1e-5, "max abs logit diff {worst}");
}

#[test]
fn prompted_forward_matches_reference_implementation() {
    let cfg = tiny_config(32, 16, 2, 2, 16, 7);
    let model = scrambled_model(&cfg, 0.2);
    let mut r = rng(8);
    let prompt = common::gaussian(&mut r, 3, 16, 0.5);
    let tokens = random_tokens(&mut r, 9, 32);
    let got = forward_logits(&model, &tokens, Some(&prompt)).unwrap();
    let want = reference_logits(&model, Some(&common::rows_f64(&prompt)), &tokens);
    assert_eq!(got.rows(), 9);
    for (t, row) in want.iter().enumerate() {
        for (c, &w) in row.iter().enumerate() {
            assert!((got.get(t, c) as f64 - w).abs() < 1e-4, "({t},{c})");
        }
    }
}

#[test]
fn prompt_gradient_matches_finite_differences() {
    let err = prompt_gradient_max_rel_error(200);
    assert!(err < 1e-3, "max relative error {err}");
}
