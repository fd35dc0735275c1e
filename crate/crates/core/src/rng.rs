//! Reproducible random streams.
//!
//! Every trial gets its own Xoshiro256++ generator whose seed is a SplitMix64
//! hash of `(master seed, namespace, trial index)`. Streams are therefore
//! defined without coordination between workers, and a run is a pure function
//! of the master seed regardless of how trials are scheduled.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;

pub type TrialRng = Xoshiro256PlusPlus;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit id of a textual namespace (FNV-1a).
pub fn namespace_id(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// A family of independent streams keyed by trial index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Streams {
    master: u64,
    namespace: u64,
}

impl Streams {
    pub fn new(master: u64, namespace: &str) -> Self {
        Self {
            master,
            namespace: namespace_id(namespace),
        }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn namespace(&self) -> u64 {
        self.namespace
    }

    /// Derived family, e.g. one per rung of a horizon ladder.
    pub fn child(&self, name: &str) -> Self {
        Self {
            master: self.master,
            namespace: splitmix(self.namespace ^ namespace_id(name)),
        }
    }

    /// 64-bit stream id of trial `index`.
    pub fn stream_id(&self, index: u64) -> u64 {
        splitmix(splitmix(self.master ^ splitmix(self.namespace)) ^ index)
    }

    pub fn rng(&self, index: u64) -> TrialRng {
        let mut state = self.stream_id(index);
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            state = splitmix(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        TrialRng::from_seed(seed)
    }

    /// Runs `f` once per trial in parallel and returns results in trial
    /// order, so downstream reductions are independent of scheduling.
    pub fn run<T, F>(&self, trials: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize, &mut TrialRng) -> T + Sync + Send,
    {
        (0..trials)
            .into_par_iter()
            .map(|i| {
                let mut rng = self.rng(i as u64);
                f(i, &mut rng)
            })
            .collect()
    }

    /// Fallible variant of [`Streams::run`]; the error of the lowest failing
    /// trial index is returned.
    pub fn try_run<T, E, F>(&self, trials: usize, f: F) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send,
        F: Fn(usize, &mut TrialRng) -> Result<T, E> + Sync + Send,
    {
        (0..trials)
            .into_par_iter()
            .map(|i| {
                let mut rng = self.rng(i as u64);
                f(i, &mut rng)
            })
            .collect()
    }
}

/// Uniform draw on the open interval (0, 1) from 53 random bits.
#[inline]
pub fn open01<R: rand::RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}
