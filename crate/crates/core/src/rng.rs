//! Seeding. Every random stream in the crate is a ChaCha20 generator keyed
//! from a 64-bit seed; sub-streams are derived with a SplitMix64 mix so that
//! replication `k` of a sweep uses `derive_seed(master, k)`.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

pub type SimRng = ChaCha20Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of sub-stream `k` under `master`.
pub fn derive_seed(master: u64, k: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(k.wrapping_mul(0xD1B5_4A32_D192_ED03)))
}

pub fn standard_normal_vector<R: Rng + ?Sized>(rng: &mut R, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample::<f64, _>(StandardNormal))
}
