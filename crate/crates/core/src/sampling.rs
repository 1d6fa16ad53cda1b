//! Reproducible random variates for the samplers.
//!
//! Every trajectory owns one [`RngStream`]: a ChaCha8 generator keyed by the
//! run seed with the trajectory index as its stream id. ChaCha is counter
//! based, so stream `k` produces the same sequence no matter which thread
//! runs it or in which order trajectories are scheduled.
//!
//! Each call that consumes randomness bumps a draw counter. The counter is
//! what the performance comparisons report as "random number generations".

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma, Normal, Open01, Poisson};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("discrete distribution needs a positive total weight")]
    ZeroWeights,
}

#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
    seed: u64,
    stream_id: u64,
    draws: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream {
            rng,
            seed,
            stream_id,
            draws: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Number of variates drawn so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.draws += 1;
        self.rng.sample(Open01)
    }

    /// Exponential variate with the given mean; always strictly positive.
    pub fn exponential(&mut self, mean: f64) -> f64 {
        debug_assert!(mean > 0.0);
        self.draws += 1;
        let u: f64 = self.rng.sample(Open01);
        -mean * u.ln()
    }

    /// Gamma variate with integer shape and the given scale. Shape 1 is drawn
    /// as an exponential.
    pub fn gamma(&mut self, shape: u64, scale: f64) -> f64 {
        debug_assert!(shape >= 1 && scale > 0.0);
        if shape == 1 {
            return self.exponential(scale);
        }
        self.draws += 1;
        let v = Gamma::new(shape as f64, scale)
            .expect("gamma parameters are positive")
            .sample(&mut self.rng);
        if v > 0.0 {
            v
        } else {
            f64::MIN_POSITIVE
        }
    }

    /// Poisson variate; a zero mean returns 0 without consuming randomness.
    pub fn poisson(&mut self, mean: f64) -> u64 {
        debug_assert!(mean >= 0.0);
        if !(mean > 0.0) {
            return 0;
        }
        self.draws += 1;
        let v: f64 = Poisson::new(mean)
            .expect("poisson mean is finite and positive")
            .sample(&mut self.rng);
        v as u64
    }

    /// Binomial variate; degenerate cases return without consuming randomness.
    pub fn binomial(&mut self, n: u64, prob: f64) -> u64 {
        if n == 0 || prob <= 0.0 {
            return 0;
        }
        if prob >= 1.0 {
            return n;
        }
        self.draws += 1;
        Binomial::new(n, prob)
            .expect("binomial probability lies in [0, 1]")
            .sample(&mut self.rng)
    }

    /// Normal variate; a zero standard deviation returns `mean` exactly.
    pub fn normal(&mut self, mean: f64, stddev: f64) -> f64 {
        if stddev == 0.0 {
            return mean;
        }
        self.draws += 1;
        Normal::new(mean, stddev)
            .expect("standard deviation is finite and nonnegative")
            .sample(&mut self.rng)
    }

    /// Index `j` drawn with probability `weights[j] / sum(weights)`.
    pub fn discrete(&mut self, weights: &[f64]) -> Result<usize, SamplingError> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(SamplingError::ZeroWeights);
        }
        Ok(self.discrete_with_total(weights, total))
    }

    /// Same as [`RngStream::discrete`] with a precomputed positive total.
    pub fn discrete_with_total(&mut self, weights: &[f64], total: f64) -> usize {
        let target = self.uniform() * total;
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (j, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                acc += w;
                last_positive = j;
                if target < acc {
                    return j;
                }
            }
        }
        // rounding left `target` at or above the running sum
        last_positive
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(xs: impl Iterator<Item = f64>) -> (f64, f64) {
        let v: Vec<f64> = xs.collect();
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, var)
    }

    #[test]
    fn same_seed_and_stream_is_reproducible() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        for _ in 0..100 {
            assert_eq!(a.exponential(1.0).to_bits(), b.exponential(1.0).to_bits());
            assert_eq!(a.poisson(12.5), b.poisson(12.5));
        }
        let mut c = RngStream::new(7, 4);
        assert_ne!(RngStream::new(7, 3).uniform(), c.uniform());
    }

    #[test]
    fn exponential_mean() {
        let mut rng = RngStream::new(1, 0);
        let (m, _) = mean_var((0..1_000_000).map(|_| rng.exponential(1.0)));
        assert!((m - 1.0).abs() < 0.01, "{m}");
        assert!((0..10_000).all(|_| rng.exponential(0.5) > 0.0));
    }

    #[test]
    fn gamma_mean() {
        let mut rng = RngStream::new(2, 0);
        let (m, _) = mean_var((0..1_000_000).map(|_| rng.gamma(5, 2.0)));
        assert!((m - 10.0).abs() < 0.1, "{m}");
        assert!((0..10_000).all(|_| rng.gamma(3, 0.01) > 0.0));
    }

    #[test]
    fn poisson_moments() {
        let mut rng = RngStream::new(3, 0);
        assert_eq!(rng.poisson(0.0), 0);
        assert_eq!(rng.draws(), 0);
        let (m, v) = mean_var((0..1_000_000).map(|_| rng.poisson(100.0) as f64));
        assert!((m - 100.0).abs() < 0.5, "{m}");
        assert!((v - 100.0).abs() < 2.0, "{v}");
        let zeros = (0..1_000_000).filter(|_| rng.poisson(0.1) == 0).count();
        let p0 = zeros as f64 / 1e6;
        assert!((p0 - (-0.1f64).exp()).abs() < 0.002, "{p0}");
    }

    #[test]
    fn binomial_edges_and_mean() {
        let mut rng = RngStream::new(4, 0);
        assert_eq!(rng.binomial(10, 1.0), 10);
        assert_eq!(rng.binomial(0, 0.4), 0);
        assert_eq!(rng.binomial(10, 0.0), 0);
        let (m, _) = mean_var((0..1_000_000).map(|_| rng.binomial(100, 0.3) as f64));
        assert!((m - 30.0).abs() < 0.2, "{m}");
    }

    #[test]
    fn normal_moments() {
        let mut rng = RngStream::new(5, 0);
        assert_eq!(rng.normal(7.0, 0.0), 7.0);
        let (m, v) = mean_var((0..1_000_000).map(|_| rng.normal(0.0, 1.0)));
        assert!(m.abs() < 0.005, "{m}");
        assert!((v.sqrt() - 1.0).abs() < 0.01, "{v}");
        assert!(rng.normal(350.0, 35.0).is_finite());
    }

    #[test]
    fn discrete_frequencies() {
        let mut rng = RngStream::new(6, 0);
        assert!((0..1000).all(|_| rng.discrete(&[1.0, 0.0, 0.0]).unwrap() == 0));
        assert_eq!(rng.discrete(&[0.0, 0.0]), Err(SamplingError::ZeroWeights));
        let n = 1_000_000;
        let half = (0..n).filter(|_| rng.discrete(&[1.0, 1.0]).unwrap() == 0).count();
        assert!((half as f64 / n as f64 - 0.5).abs() < 0.005);
        let first = (0..n).filter(|_| rng.discrete(&[3.0, 1.0]).unwrap() == 0).count();
        assert!((first as f64 / n as f64 - 0.75).abs() < 0.005);
    }
}
