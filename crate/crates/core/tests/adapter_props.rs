//! Property tests for the adapter: identity at zero, shape
//! preservation, and gradient fidelity across random configurations.

use medcap_core::adapter::{adapter_forward, grad_check, init_adapter};
use medcap_core::matrix::Matrix;
use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(-1.0..=1.0)).collect(),
    )
    .unwrap()
}

proptest! {
    #[test]
    fn fresh_adapter_is_identity(d in 2usize..12, seed in 0u64..500, n in 1usize..5) {
        let r = 1 + seed as usize % (d - 1);
        let params = init_adapter(d, r, 0.2, seed).unwrap();
        let f = random_matrix(n, d, seed ^ 0xF00D);
        prop_assert_eq!(adapter_forward(&f, &params).unwrap(), f);
    }

    #[test]
    fn zero_alpha_is_identity_even_when_trained(d in 2usize..12, seed in 0u64..500) {
        let r = 1 + seed as usize % (d - 1);
        let mut params = init_adapter(d, r, 0.0, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xBEEF);
        for v in params.w_up.data_mut() {
            *v = rng.gen_range(-1.0..=1.0);
        }
        let f = random_matrix(2, d, seed ^ 0xCAFE);
        prop_assert_eq!(adapter_forward(&f, &params).unwrap(), f);
    }

    #[test]
    fn output_shape_matches_input(n in 1usize..6, d in 3usize..10, seed in 0u64..100) {
        let r = 1 + seed as usize % (d - 1);
        let mut params = init_adapter(d, r, 0.2, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD00F);
        for v in params.w_up.data_mut() {
            *v = rng.gen_range(-0.5..=0.5);
        }
        let f = random_matrix(n, d, seed);
        let out = adapter_forward(&f, &params).unwrap();
        prop_assert_eq!((out.rows(), out.cols()), (n, d));
        prop_assert!(out.all_finite());
    }
}

#[test]
fn gradients_hold_across_one_hundred_random_configurations() {
    let mut rng = ChaCha8Rng::seed_from_u64(20240917);
    for case in 0..100u64 {
        let d = rng.gen_range(2..12);
        let r = rng.gen_range(1..d);
        let alpha = rng.gen_range(0.05..0.5);
        let mut params = init_adapter(d, r, alpha, case).unwrap();
        for v in params.w_up.data_mut() {
            *v = rng.gen_range(-0.5..=0.5);
        }
        for v in params.ln_bias.iter_mut() {
            *v = rng.gen_range(-0.2..=0.2);
        }
        let n = rng.gen_range(1..4);
        let err = grad_check(&params, n, case ^ 0x9E3779B9);
        assert!(
            err <= 1e-5,
            "config {case} (d={d}, r={r}, alpha={alpha:.3}, n={n}): error {err}"
        );
    }
}
