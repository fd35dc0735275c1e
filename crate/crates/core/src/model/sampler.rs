//! Constant-time step sampling with alias tables.

use rand::RngCore;

use super::{RwisModel, Site};

/// Walker alias table; one `u64` draw per sample (32-bit column index and a
/// 32-bit acceptance coin).
#[derive(Debug, Clone)]
pub struct AliasTable {
    threshold: Vec<u64>,
    alias: Vec<u32>,
}

impl AliasTable {
    /// `weights` need not be normalised but must have a positive sum.
    pub fn new(weights: &[f64]) -> Self {
        let n = weights.len();
        assert!(n > 0 && n < u32::MAX as usize, "alias table size out of range");
        let total: f64 = weights.iter().sum();
        assert!(total > 0.0, "alias table needs positive mass");
        let mut scaled: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut threshold = vec![1u64 << 32; n];
        let mut alias: Vec<u32> = (0..n as u32).collect();
        let (mut small, mut large): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| scaled[i] < 1.0);
        while let (Some(s), Some(&l)) = (small.pop(), large.last()) {
            threshold[s] = (scaled[s] * 4_294_967_296.0) as u64;
            alias[s] = l as u32;
            scaled[l] -= 1.0 - scaled[s];
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        Self { threshold, alias }
    }

    pub fn len(&self) -> usize {
        self.alias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alias.is_empty()
    }

    #[inline]
    pub fn sample_bits(&self, bits: u64) -> usize {
        let col = (((bits >> 32) * self.alias.len() as u64) >> 32) as usize;
        if (bits & 0xFFFF_FFFF) < self.threshold[col] {
            col
        } else {
            self.alias[col] as usize
        }
    }

    #[inline]
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> usize {
        self.sample_bits(rng.next_u64())
    }
}

/// Per-incoming-state sampler of `(displacement, outgoing state)`.
#[derive(Debug, Clone)]
pub struct StepSampler {
    tables: Vec<AliasTable>,
    outcomes: Vec<Vec<(Site, usize)>>,
}

impl StepSampler {
    pub fn new(model: &RwisModel) -> Self {
        let m = model.states();
        let mut tables = Vec::with_capacity(m);
        let mut outcomes = Vec::with_capacity(m);
        for u in 0..m {
            let mut w = Vec::new();
            let mut o = Vec::new();
            for j in model.jumps() {
                for v in 0..m {
                    let p = j.matrix[(u, v)];
                    if p > 0.0 {
                        w.push(p);
                        o.push((j.x, v));
                    }
                }
            }
            tables.push(AliasTable::new(&w));
            outcomes.push(o);
        }
        Self { tables, outcomes }
    }

    #[inline]
    pub fn step<R: RngCore + ?Sized>(&self, state: usize, rng: &mut R) -> (Site, usize) {
        self.outcomes[state][self.tables[state].sample(rng)]
    }

    /// Position and state after `n` embedded steps.
    pub fn walk<R: RngCore + ?Sized>(&self, mut state: usize, n: u64, rng: &mut R) -> (Site, usize) {
        let mut pos = [0i64; 2];
        for _ in 0..n {
            let (x, v) = self.step(state, rng);
            pos[0] += x[0];
            pos[1] += x[1];
            state = v;
        }
        (pos, state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;
    use crate::model::{directional2d, persistent1d};
    use crate::rng::Streams;
    use proptest::prelude::*;

    #[test]
    fn alias_frequencies() {
        let w = [0.1, 0.2, 0.3, 0.4];
        let t = AliasTable::new(&w);
        let mut rng = Streams::new(3, "alias").rng(0);
        let n = 400_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[t.sample(&mut rng)] += 1;
        }
        for (c, p) in counts.iter().zip(w) {
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((*c as f64 / n as f64 - p).abs() < 4.0 * se);
        }
    }

    proptest! {
        #[test]
        fn alias_table_reproduces_weights(w in prop::collection::vec(0.0f64..5.0, 1..12)) {
            prop_assume!(w.iter().sum::<f64>() > 1e-3);
            let t = AliasTable::new(&w);
            let total: f64 = w.iter().sum();
            // Exact probability of each outcome from the table structure.
            let n = t.len() as f64;
            let mut mass = vec![0.0; w.len()];
            for col in 0..t.len() {
                let keep = t.threshold[col] as f64 / 4_294_967_296.0;
                mass[col] += keep / n;
                mass[t.alias[col] as usize] += (1.0 - keep) / n;
            }
            for (m, wi) in mass.iter().zip(&w) {
                prop_assert!((m - wi / total).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn mean_step_matches_drift_operator() {
        let model = directional2d();
        let ms = model.moments().unwrap();
        let s = StepSampler::new(&model);
        let mut rng = Streams::new(5, "step").rng(0);
        let n = 200_000;
        let mut sum = [0.0f64; 2];
        let mut sq = [0.0f64; 2];
        for _ in 0..n {
            // State drawn from ρ (uniform here) so the mean is (ρ, M_l𝟙).
            let u = (rng.next_u64() % 4) as usize;
            let (x, _) = s.step(u, &mut rng);
            for l in 0..2 {
                sum[l] += x[l] as f64;
                sq[l] += (x[l] * x[l]) as f64;
            }
        }
        for (l, expected) in ms.drift().iter().enumerate() {
            let mean = sum[l] / n as f64;
            let se = ((sq[l] / n as f64 - mean * mean) / n as f64).sqrt();
            assert!((mean - expected).abs() < 3.0 * se, "coordinate {l}: {mean} vs {expected}");
        }
    }

    #[test]
    fn persistent_walk_keeps_direction() {
        let s = StepSampler::new(&persistent1d(0.7).unwrap());
        let mut rng = Streams::new(1, "p").rng(0);
        for _ in 0..1000 {
            let (x, v) = s.step(0, &mut rng);
            assert_eq!((x[0] == 1), (v == 0));
        }
    }
}
