//! Counter-based random streams.
//!
//! Every Monte Carlo draw is generated from its own ChaCha8 stream keyed by
//! `(seed, index)`, so results never depend on how work is split across
//! threads. Nested experiments derive child seeds with [`derive_seed`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Child seed for a path of indices below `seed`.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &i| splitmix64(acc ^ splitmix64(i.wrapping_add(0xA5A5_A5A5))))
}

/// The stream for draw `index` under `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Fills `out` with i.i.d. standard normals from stream `(seed, index)`.
pub fn fill_normals(seed: u64, index: u64, out: &mut [f64]) {
    let mut rng = stream(seed, index);
    for v in out.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}
