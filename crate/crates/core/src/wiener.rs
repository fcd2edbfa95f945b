//! Seeded q-dimensional Brownian increments on a uniform time grid.
//!
//! Stream derivation: a path with base seed `s` and path index `p` draws from
//! `ChaCha20Rng::seed_from_u64(s)` switched to stream `p`. Increments are drawn
//! step-major (all q components of step 0, then step 1, ...), so the value at
//! (p, j, i) depends only on (s, p, j, i) and paths can be generated on any
//! worker in any order.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath {
    q: usize,
    steps: usize,
    horizon: f64,
    increments: Vec<f64>,
    seed: u64,
    stream: u64,
    level: u32,
}

impl WienerPath {
    /// Path index 0 of the given seed.
    pub fn sample(seed: u64, q: usize, steps: usize, horizon: f64) -> Result<Self> {
        Self::sample_stream(seed, 0, q, steps, horizon)
    }

    pub fn sample_stream(
        seed: u64,
        stream: u64,
        q: usize,
        steps: usize,
        horizon: f64,
    ) -> Result<Self> {
        validate(q, steps, horizon)?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let sqrt_k = (horizon / steps as f64).sqrt();
        let increments = (0..q * steps)
            .map(|_| sqrt_k * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(WienerPath {
            q,
            steps,
            horizon,
            increments,
            seed,
            stream,
            level: 0,
        })
    }

    /// Path with all increments zero (deterministic runs).
    pub fn zero(q: usize, steps: usize, horizon: f64) -> Result<Self> {
        validate(q, steps, horizon)?;
        Ok(WienerPath {
            q,
            steps,
            horizon,
            increments: vec![0.0; q * steps],
            seed: 0,
            stream: 0,
            level: 0,
        })
    }

    /// Path from explicit increments, laid out step-major.
    pub fn from_increments(q: usize, horizon: f64, increments: Vec<f64>) -> Result<Self> {
        if q == 0 || !increments.len().is_multiple_of(q) {
            return Err(Error::InvalidArgument(
                "increment count must be a positive multiple of q".into(),
            ));
        }
        let steps = increments.len() / q;
        validate(q, steps, horizon)?;
        if let Some(i) = increments.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                what: "Wiener increment",
                index: i,
            });
        }
        Ok(WienerPath {
            q,
            steps,
            horizon,
            increments,
            seed: 0,
            stream: 0,
            level: 0,
        })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Step size k = T / J.
    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, j: usize) -> f64 {
        self.horizon * j as f64 / self.steps as f64
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Number of coarsening halvings applied since sampling.
    pub fn level(&self) -> u32 {
        self.level
    }

    /// The q increments of step j.
    pub fn increment(&self, j: usize) -> &[f64] {
        &self.increments[j * self.q..(j + 1) * self.q]
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// W(t_j), with W(t_0) = 0.
    pub fn value_at(&self, j: usize) -> Vec<f64> {
        let mut w = vec![0.0; self.q];
        for s in 0..j {
            for (wi, di) in w.iter_mut().zip(self.increment(s)) {
                *wi += di;
            }
        }
        w
    }

    /// Sum consecutive blocks of `factor` increments.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !factor.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "coarsening factor must be a power of two, got {factor}"
            )));
        }
        if !self.steps.is_multiple_of(factor) {
            return Err(Error::InvalidArgument(format!(
                "coarsening factor {factor} does not divide {} steps",
                self.steps
            )));
        }
        let steps = self.steps / factor;
        let mut increments = vec![0.0; steps * self.q];
        for j in 0..steps {
            for s in j * factor..(j + 1) * factor {
                for i in 0..self.q {
                    increments[j * self.q + i] += self.increments[s * self.q + i];
                }
            }
        }
        Ok(WienerPath {
            q: self.q,
            steps,
            horizon: self.horizon,
            increments,
            seed: self.seed,
            stream: self.stream,
            level: self.level + factor.trailing_zeros(),
        })
    }

    /// CSV with columns step, t, dW_1..dW_q.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut s = String::from("step,t");
        for i in 1..=self.q {
            s.push_str(&format!(",dW_{i}"));
        }
        s.push('\n');
        for j in 0..self.steps {
            s.push_str(&format!("{j},{:.16e}", self.time(j)));
            for d in self.increment(j) {
                s.push_str(&format!(",{d:.16e}"));
            }
            s.push('\n');
        }
        out.write_all(s.as_bytes())?;
        Ok(())
    }
}

fn validate(q: usize, steps: usize, horizon: f64) -> Result<()> {
    if q == 0 {
        return Err(Error::InvalidArgument(
            "noise dimension q must be at least 1".into(),
        ));
    }
    if steps == 0 {
        return Err(Error::InvalidArgument(
            "step count must be at least 1".into(),
        ));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_by_seed_and_stream() {
        let a = WienerPath::sample(7, 2, 50, 1.0).unwrap();
        let b = WienerPath::sample(7, 2, 50, 1.0).unwrap();
        assert_eq!(a, b);
        let c = WienerPath::sample_stream(7, 1, 2, 50, 1.0).unwrap();
        assert_ne!(a.increments(), c.increments());
    }

    #[test]
    fn coarsen_examples() {
        let p = WienerPath::sample(3, 1, 4, 1.0).unwrap();
        assert_eq!(p.coarsen(1).unwrap().increments(), p.increments());
        let c = p.coarsen(2).unwrap();
        assert_eq!(c.increment(0)[0], p.increment(0)[0] + p.increment(1)[0]);
        assert_eq!(c.level(), 1);
        let p = WienerPath::sample(3, 2, 16, 1.0).unwrap();
        let twice = p.coarsen(2).unwrap().coarsen(2).unwrap();
        let once = p.coarsen(4).unwrap();
        for (a, b) in twice.increments().iter().zip(once.increments()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn coarsen_rejects_bad_factor() {
        let p = WienerPath::sample(3, 1, 6, 1.0).unwrap();
        assert!(p.coarsen(4).is_err());
        assert!(p.coarsen(3).is_err());
        assert!(p.coarsen(0).is_err());
    }

    #[test]
    fn value_starts_at_zero() {
        let p = WienerPath::sample(1, 3, 10, 2.0).unwrap();
        assert_eq!(p.value_at(0), vec![0.0; 3]);
        assert_eq!(p.dt(), 0.2);
    }

    #[test]
    fn invalid_arguments() {
        assert!(WienerPath::sample(0, 0, 10, 1.0).is_err());
        assert!(WienerPath::sample(0, 1, 0, 1.0).is_err());
        assert!(WienerPath::sample(0, 1, 10, 0.0).is_err());
    }
}
