use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Seeded, platform-independent random stream.
///
/// Backed by ChaCha8 (a counter-based stream cipher). The 64-bit seed is
/// expanded to the 256-bit key with `SeedableRng::seed_from_u64` (a PCG32
/// expansion with multiplier `6364136223846793005` and increment
/// `11634580027462260723`). Child streams reuse the parent key and select
/// ChaCha stream `index`, so each child has its own 2^64-block counter
/// space and distinct indices never overlap.
///
/// Uniform reals use the top 53 bits of one 64-bit draw; Gaussian draws use
/// the ziggurat sampler from `rand_distr`.
#[derive(Clone, Debug)]
pub struct Prng {
    seed: u64,
    rng: ChaCha8Rng,
}

impl Prng {
    pub fn new(seed: u64) -> Self {
        Prng {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent child stream `index` of master `seed`.
    pub fn derive(seed: u64, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        Prng { seed, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`; returns `lo` when the range is empty.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    /// Uniform integer in the inclusive range `[lo, hi]`.
    pub fn uniform_int(&mut self, lo: i64, hi: i64) -> i64 {
        assert!(lo <= hi, "empty integer range {lo}..={hi}");
        let span = (hi - lo) as u64 + 1;
        lo + (self.next_u64() % span) as i64
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Fisher-Yates shuffle driven by this stream.
    pub fn shuffle<V>(&mut self, items: &mut [V]) {
        for i in (1..items.len()).rev() {
            let j = self.uniform_int(0, i as i64) as usize;
            items.swap(i, j);
        }
    }
}
