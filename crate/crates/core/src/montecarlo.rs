//! Monte Carlo estimates of expected distortion and its variance.
//!
//! Sample `i` is drawn from ChaCha20 stream `i / CHUNK` of the run's seed,
//! so a run split into chunks (serially or across threads) visits exactly
//! the same variates, and chunk results merged in index order reproduce the
//! serial totals bit for bit.

use alloc::vec::Vec;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::continuous_alloc::ContinuousSolution;
use crate::discrete_alloc::{realized_distortions, Allocation};
use crate::error::{invalid, Error, Result};
use crate::fading::{ContinuousFading, DiscreteFading};

/// Samples per random stream.
pub const CHUNK: u64 = 65_536;

/// Rejection attempts per tabulated draw before giving up.
const MAX_REJECTIONS: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEstimate {
    pub mean: f64,
    /// `sample_std / sqrt(samples)`.
    pub std_error: f64,
    /// Unbiased sample variance of the realized distortion.
    pub var_estimate: f64,
    pub samples: u64,
    pub seed: u64,
}

/// Running count, mean, and sum of squared deviations.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Accumulator {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Combines two disjoint sample sets; order matters only in the last bits,
    /// so callers merge in chunk order.
    pub fn merge(&mut self, other: &Accumulator) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        let wb = other.count as f64 / n;
        self.mean += delta * wb;
        self.m2 += other.m2 + delta * delta * self.count as f64 * wb;
        self.count += other.count;
    }

    pub fn finish(&self, seed: u64) -> SimEstimate {
        let var = if self.count > 1 { self.m2 / (self.count - 1) as f64 } else { 0.0 };
        SimEstimate {
            mean: self.mean,
            std_error: libm::sqrt(var / self.count.max(1) as f64),
            var_estimate: var,
            samples: self.count,
            seed,
        }
    }
}

/// What is being simulated: a fading law plus the realized distortion it
/// induces under a fixed allocation.
#[derive(Debug, Clone)]
pub enum SimModel<'a> {
    /// Discrete states drawn from their pmf.
    Discrete { cumulative_probs: Vec<f64>, distortions: Vec<f64> },
    /// Continuous gains quantized down to a discrete allocation's levels.
    Quantized { fading: &'a ContinuousFading, levels: &'a DiscreteFading, distortions: Vec<f64> },
    /// Continuous gains under the continuous optimum.
    Continuous { fading: &'a ContinuousFading, solution: &'a ContinuousSolution },
}

impl<'a> SimModel<'a> {
    pub fn discrete(fading: &DiscreteFading, alloc: &Allocation, b: f64) -> Result<Self> {
        let distortions = realized_distortions(fading, alloc, b)?;
        let mut acc = 0.0;
        let mut cumulative_probs: Vec<f64> = (0..=fading.len())
            .map(|k| {
                acc += fading.prob(k);
                acc
            })
            .collect();
        if let Some(last) = cumulative_probs.last_mut() {
            *last = 1.0;
        }
        Ok(Self::Discrete { cumulative_probs, distortions })
    }

    pub fn quantized(
        fading: &'a ContinuousFading,
        levels: &'a DiscreteFading,
        alloc: &Allocation,
        b: f64,
    ) -> Result<Self> {
        let distortions = realized_distortions(levels, alloc, b)?;
        Ok(Self::Quantized { fading, levels, distortions })
    }

    pub fn continuous(fading: &'a ContinuousFading, solution: &'a ContinuousSolution) -> Self {
        Self::Continuous { fading, solution }
    }

    fn draw(&self, rng: &mut ChaCha20Rng) -> Result<f64> {
        Ok(match self {
            Self::Discrete { cumulative_probs, distortions } => {
                let u = uniform(rng);
                let k = cumulative_probs.partition_point(|&c| c <= u).min(distortions.len() - 1);
                distortions[k]
            }
            Self::Quantized { fading, levels, distortions } => distortions[levels.quantize(sample_gain(fading, rng)?)],
            Self::Continuous { fading, solution } => solution.realized_distortion(sample_gain(fading, rng)?),
        })
    }
}

/// Uniform on `[0, 1)` with 53 random bits.
fn uniform(rng: &mut ChaCha20Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn exponential(rng: &mut ChaCha20Rng, mean: f64) -> f64 {
    -mean * libm::log(1.0 - uniform(rng))
}

/// One gain from the law: inverse cdf (Rayleigh), a sum of exponentials
/// (Erlang), or rejection under the density's maximum (tabulated).
pub fn sample_gain(fading: &ContinuousFading, rng: &mut ChaCha20Rng) -> Result<f64> {
    match fading {
        ContinuousFading::Rayleigh { mean_gain } => Ok(exponential(rng, *mean_gain)),
        ContinuousFading::Erlang { diversity, mean_gain } => {
            let m = mean_gain / *diversity as f64;
            Ok((0..*diversity).map(|_| exponential(rng, m)).sum())
        }
        ContinuousFading::Tabulated(t) => {
            let (lo, hi, top) = (t.lower(), t.upper(), t.max_density());
            for _ in 0..MAX_REJECTIONS {
                let x = lo + (hi - lo) * uniform(rng);
                if uniform(rng) * top < t.pdf(x) {
                    return Ok(x);
                }
            }
            Err(Error::Numerical("tabulated rejection sampler made no progress".into()))
        }
    }
}

pub fn chunk_count(samples: u64) -> u64 {
    samples.div_ceil(CHUNK)
}

/// Runs chunk `index` of a `samples`-long run.
pub fn simulate_chunk(model: &SimModel<'_>, samples: u64, seed: u64, index: u64) -> Result<Accumulator> {
    let start = index * CHUNK;
    let len = samples.saturating_sub(start).min(CHUNK);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let mut acc = Accumulator::default();
    for _ in 0..len {
        acc.push(model.draw(&mut rng)?);
    }
    Ok(acc)
}

/// Merges per-chunk results in index order.
pub fn merge_chunks(chunks: &[Accumulator], seed: u64) -> SimEstimate {
    let mut total = Accumulator::default();
    for c in chunks {
        total.merge(c);
    }
    total.finish(seed)
}

pub fn simulate(model: &SimModel<'_>, samples: u64, seed: u64) -> Result<SimEstimate> {
    if samples == 0 {
        return Err(invalid("samples", "must be >= 1"));
    }
    let chunks =
        (0..chunk_count(samples)).map(|k| simulate_chunk(model, samples, seed, k)).collect::<Result<Vec<_>>>()?;
    Ok(merge_chunks(&chunks, seed))
}
