//! Counter-based random streams.
//!
//! Every draw in the simulator comes from a fresh ChaCha stream whose seed is
//! a hash of `(seed, purpose, subject, counter)`. Streams never share state,
//! so evaluation order and parallelism cannot change results, and adding a
//! link or a UE does not perturb the draws of any other link.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Distinct purposes never collide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Blockage = 1,
    Paths = 2,
    Perturbation = 3,
    Synthetic = 4,
    Fuzz = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes the key tuple into a 32-byte ChaCha seed.
fn key_bytes(seed: u64, purpose: Purpose, subject: u64, counter: u64) -> [u8; 32] {
    let mut state = splitmix64(seed);
    let mut out = [0u8; 32];
    for (i, word) in [purpose as u64, subject, counter, 0x5EED]
        .into_iter()
        .enumerate()
    {
        state = splitmix64(state ^ word.rotate_left(17 * i as u32 + 1));
        out[i * 8..(i + 1) * 8].copy_from_slice(&state.to_le_bytes());
    }
    out
}

/// Returns the stream for `(seed, purpose, subject, counter)`.
pub fn stream(seed: u64, purpose: Purpose, subject: u64, counter: u64) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(key_bytes(seed, purpose, subject, counter))
}
