//! Reproducible zero-mean masking noise.
//!
//! Every draw is a pure function of `(master seed, purpose, node, k, trial)`:
//! the master seed fixes one ChaCha8 key per purpose, `(trial, node)` selects
//! the ChaCha stream and `k` seeks to a private region of that stream. Draws
//! never depend on evaluation order or thread count.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::Result;
use crate::model::{NodeId, NoiseDistribution, NoiseSchedule};

/// Words reserved per `k` inside one stream. Generous so that variable-length
/// samplers (ziggurat rejection) can never spill into the next step's region.
const WORDS_PER_STEP_SHIFT: u32 = 12;
const MAX_STEP: u64 = 1 << 56;

/// Independent families of draws sharing one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    /// Protocol masking noise.
    Mask = 0,
    /// Poisson clock inter-tick gaps.
    Clock = 1,
    /// Anything else a harness needs (random configs, oracle inputs).
    Aux = 2,
}

#[derive(Debug, Clone)]
pub struct NoiseSource {
    master_seed: u64,
    keys: [[u8; 32]; 3],
}

impl NoiseSource {
    pub fn new(master_seed: u64) -> Self {
        let mut root = ChaCha8Rng::seed_from_u64(master_seed);
        let mut keys = [[0u8; 32]; 3];
        for key in &mut keys {
            root.fill_bytes(key);
        }
        Self { master_seed, keys }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Generator positioned at the start of the `(purpose, node, k, trial)`
    /// region.
    pub fn stream(&self, purpose: Purpose, node: u32, k: u64, trial: u32) -> ChaCha8Rng {
        assert!(k < MAX_STEP, "step index {k} exceeds the stream layout");
        let mut rng = ChaCha8Rng::from_seed(self.keys[purpose as usize]);
        rng.set_stream((u64::from(trial) << 32) | u64::from(node));
        rng.set_word_pos(u128::from(k) << WORDS_PER_STEP_SHIFT);
        rng
    }

    /// Uniform draw on the open interval (0, 1).
    pub fn uniform(&self, purpose: Purpose, node: u32, k: u64, trial: u32) -> f64 {
        open_unit(self.stream(purpose, node, k, trial).next_u64())
    }

    /// Zero-mean sample with magnitude `v`: Laplace scale, or standard
    /// deviation for the other two kinds. `v == 0` yields exactly 0.
    pub fn sample(
        &self,
        dist: NoiseDistribution,
        v: f64,
        node: NodeId,
        k: u64,
        trial: u32,
    ) -> f64 {
        self.sample_for(Purpose::Mask, dist, v, node.0, k, trial)
    }

    /// [`NoiseSource::sample`] drawn from an arbitrary purpose's streams.
    pub fn sample_for(
        &self,
        purpose: Purpose,
        dist: NoiseDistribution,
        v: f64,
        node: u32,
        k: u64,
        trial: u32,
    ) -> f64 {
        if v == 0.0 {
            return 0.0;
        }
        let mut rng = self.stream(purpose, node, k, trial);
        match dist {
            NoiseDistribution::Laplace => laplace_from_uniform(open_unit(rng.next_u64()), v),
            NoiseDistribution::Gaussian => {
                let z: f64 = rng.sample(StandardNormal);
                v * z
            }
            NoiseDistribution::UniformSymmetric => {
                let u = open_unit(rng.next_u64());
                (2.0 * u - 1.0) * v * 3f64.sqrt()
            }
        }
    }

    /// Exponential gap with rate `rate` for the `tick`-th tick of `node`.
    pub fn exp_gap(&self, rate: f64, node: NodeId, tick: u64, trial: u32) -> f64 {
        let mut rng = self.stream(Purpose::Clock, node.0, tick, trial);
        let e: f64 = rng.sample(Exp1);
        e / rate
    }
}

/// 53-bit uniform strictly inside (0, 1).
fn open_unit(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Inverse CDF of Laplace(0, b) at `u` in (0, 1).
fn laplace_from_uniform(u: f64, b: f64) -> f64 {
    let centered = u - 0.5;
    -b * centered.signum() * (1.0 - 2.0 * centered.abs()).ln()
}

/// Masking noise `beta_i(k)` for `node` at step `k` of `trial`.
///
/// `offset` shifts the schedule index (see [`crate::model::ProtocolConfig::schedule_offset`]);
/// the stream position stays at `k`.
pub fn sample_beta(
    src: &NoiseSource,
    node: NodeId,
    k: u64,
    trial: u32,
    schedule: &NoiseSchedule,
    dist: NoiseDistribution,
    offset: u64,
) -> Result<f64> {
    let v = schedule.magnitude(k + offset)?;
    Ok(src.sample(dist, v, node, k, trial))
}
