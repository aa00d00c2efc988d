//! Shared helpers for unit and integration tests: seeded RNG construction
//! and tolerance assertions with value-bearing failure messages.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` uniform samples from `[-scale, scale]`.
pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

#[track_caller]
pub fn assert_close(a: f64, b: f64, tol: f64) {
    assert!(
        (a - b).abs() <= tol,
        "values differ: {a} vs {b} (|Δ| = {:.3e}, tol {tol:.1e})",
        (a - b).abs()
    );
}
