use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent, reproducible substream `stream` of the generator keyed by `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream-id offsets so different samplers sharing one seed never collide.
pub(crate) mod streams {
    pub const GAUSSIAN_PROCESS: u64 = 0x1000_0000;
    pub const INJECTION: u64 = 0x2000_0000;
    pub const JITTER: u64 = 0x3000_0000;
    pub const SINGLE_DRAW: u64 = 0x4000_0000;
}
