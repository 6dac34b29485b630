//! Seed discipline: every random consumer gets its own named substream
//! derived from the single root seed. Streams are independent of worker
//! scheduling, which is what makes training bit-reproducible across
//! `--workers` settings.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a substream from the root seed, a role label, and a list of ids
/// (node id, epoch, trace index, ...).
pub fn substream(root: u64, role: &str, ids: &[u64]) -> ChaCha8Rng {
    let mut state = root;
    splitmix64(&mut state);
    for &b in role.as_bytes() {
        state ^= b as u64;
        splitmix64(&mut state);
    }
    for &id in ids {
        state ^= id;
        splitmix64(&mut state);
    }
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}
