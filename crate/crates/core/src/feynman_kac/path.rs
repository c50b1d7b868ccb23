use rand_distr::{Distribution, StandardNormal};

use crate::error::{ensure_positive, invalid, Result};
use crate::rng;

/// Discretized Brownian path `B_0 = 0, B_{n+1} = B_n + ΔB_n` with
/// `ΔB_n ~ N(0, dt·I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    dt: f64,
    steps: usize,
    dim: usize,
    seed: u64,
    increments: Vec<f64>,
}

/// Number of steps covering `horizon`, at least one.
pub fn step_count(horizon: f64, dt: f64) -> usize {
    ((horizon / dt).round() as usize).max(1)
}

/// Largest step allowed for a field that decorrelates over `correlation_length`.
pub fn max_stable_dt(correlation_length: f64) -> f64 {
    correlation_length.powi(2).min(1.0) / 10.0
}

/// Path on the rescaled horizon `[0, t/ε²]`.
pub fn simulate_path(t: f64, eps: f64, dt: f64, dim: usize, seed: u64) -> Result<BrownianPath> {
    ensure_positive("t", t)?;
    ensure_positive("eps", eps)?;
    ensure_positive("dt", dt)?;
    BrownianPath::generate(step_count(t / (eps * eps), dt), dt, dim, seed)
}

impl BrownianPath {
    pub fn generate(steps: usize, dt: f64, dim: usize, seed: u64) -> Result<Self> {
        ensure_positive("dt", dt)?;
        if dim == 0 || steps == 0 {
            return Err(invalid("path", "need at least one step and one coordinate"));
        }
        let mut g = rng::stream(&[seed, rng::tag::PATH]);
        let sd = dt.sqrt();
        let increments = (0..steps * dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut g);
                sd * z
            })
            .collect();
        Ok(Self { dt, steps, dim, seed, increments })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn horizon(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    pub fn increment(&self, n: usize) -> &[f64] {
        &self.increments[n * self.dim..(n + 1) * self.dim]
    }

    pub fn endpoint(&self) -> Vec<f64> {
        let mut b = vec![0.0; self.dim];
        for inc in self.increments.chunks_exact(self.dim) {
            b.iter_mut().zip(inc).for_each(|(a, d)| *a += d);
        }
        b
    }

    /// Positions `B_0, …, B_steps`, flattened.
    pub fn positions(&self) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; (self.steps + 1) * d];
        for n in 0..self.steps {
            for k in 0..d {
                out[(n + 1) * d + k] = out[n * d + k] + self.increments[n * d + k];
            }
        }
        out
    }

    /// The same path observed every `factor` steps.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.steps % factor != 0 {
            return Err(invalid("factor", "must divide the number of steps"));
        }
        let d = self.dim;
        let steps = self.steps / factor;
        let mut inc = vec![0.0; steps * d];
        for n in 0..self.steps {
            for k in 0..d {
                inc[(n / factor) * d + k] += self.increments[n * d + k];
            }
        }
        Ok(Self { dt: self.dt * factor as f64, steps, dim: d, seed: self.seed, increments: inc })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizon_and_reproducibility() {
        let p = simulate_path(1.0, 0.3, 0.05, 3, 9).unwrap();
        assert!((p.horizon() - 1.0 / 0.09).abs() <= p.dt());
        assert_eq!(p, simulate_path(1.0, 0.3, 0.05, 3, 9).unwrap());
        assert_ne!(p, simulate_path(1.0, 0.3, 0.05, 3, 10).unwrap());
        assert!(simulate_path(0.0, 0.3, 0.05, 3, 9).is_err());
        assert!(simulate_path(1.0, -0.3, 0.05, 3, 9).is_err());
        assert!(simulate_path(1.0, 0.3, 0.0, 3, 9).is_err());
    }

    #[test]
    fn endpoint_variance_is_horizon() {
        let n = 10_000;
        let (t, eps) = (1.0, 0.5);
        let mut s2 = vec![0.0; n];
        for (i, v) in s2.iter_mut().enumerate() {
            *v = simulate_path(t, eps, 0.1, 3, rng::mix(&[1, i as u64])).unwrap().endpoint()[0].powi(2);
        }
        let m = s2.iter().sum::<f64>() / n as f64;
        let sd = (s2.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n as f64 - 1.0) / n as f64).sqrt();
        assert!((m - t / (eps * eps)).abs() < 4.0 * sd);
    }

    #[test]
    fn coarsening_preserves_positions() {
        let p = BrownianPath::generate(12, 0.01, 2, 4).unwrap();
        let c = p.coarsen(3).unwrap();
        let (fine, coarse) = (p.positions(), c.positions());
        for n in 0..=4 {
            for k in 0..2 {
                assert!((coarse[n * 2 + k] - fine[3 * n * 2 + k]).abs() < 1e-15);
            }
        }
        assert!(p.coarsen(5).is_err());
    }
}
