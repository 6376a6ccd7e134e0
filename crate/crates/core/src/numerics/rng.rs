use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeded random stream. The same seed always yields the same sequence of
/// initializations and dropout masks; `counter` tracks draws for diagnostics.
#[derive(Clone, Debug)]
pub struct RngState {
    seed: u64,
    counter: u64,
    rng: ChaCha8Rng,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            counter: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        self.counter += 1;
        self.rng.gen::<f64>()
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.counter += 1;
        self.rng.gen_range(0..n)
    }

    /// Independent child stream, e.g. one per epoch.
    pub fn fork(&mut self) -> RngState {
        self.counter += 1;
        RngState::new(self.rng.gen())
    }
}
