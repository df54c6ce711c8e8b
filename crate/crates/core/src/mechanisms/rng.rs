use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Generator used for every release.
pub type ReleaseRng = ChaCha20Rng;

/// Independent stream `stream` of the generator seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ReleaseRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
