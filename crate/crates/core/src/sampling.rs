//! Reproducible random streams and quasi-uniform sphere directions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

/// Independent generator for item `stream` of a run seeded with `seed`.
/// ChaCha is counter based, so item `k` does not depend on how many other
/// items were drawn or in which order they ran.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const PRIMES: [u64; 24] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut out = 0.0;
    let mut f = inv;
    while i > 0 {
        out += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    out
}

/// `n` unit vectors in `ℝ^d` spread over the sphere deterministically.
///
/// `d = 1` alternates `±1`, `d = 2` uses equally spaced angles, and higher
/// dimensions map Halton points through the normal quantile function.
pub fn sphere_directions(d: usize, n: usize) -> Vec<Vec<f64>> {
    match d {
        0 => Vec::new(),
        1 => (0..n).map(|k| vec![if k % 2 == 0 { 1.0 } else { -1.0 }]).collect(),
        2 => (0..n)
            .map(|k| {
                let th = std::f64::consts::TAU * k as f64 / n as f64;
                vec![th.cos(), th.sin()]
            })
            .collect(),
        _ => {
            assert!(d <= PRIMES.len(), "sphere_directions supports up to {} dimensions", PRIMES.len());
            let normal = Normal::new(0.0, 1.0).expect("standard normal");
            (0..n as u64)
                .map(|k| {
                    let v: Vec<f64> = PRIMES[..d]
                        .iter()
                        .map(|&p| normal.inverse_cdf(radical_inverse(k + 1, p)))
                        .collect();
                    let r = crate::linalg::norm(&v);
                    v.into_iter().map(|c| c / r).collect()
                })
                .collect()
        }
    }
}
