use num_complex::Complex64;

/// z-value of a two-sided 95% interval.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Streaming accumulator for complex Monte Carlo samples.
///
/// `m2` is the sum of `|z − mean|²`, so the variance is that of the complex
/// modulus error and `ci` bounds `|mean − E z|` at 95% under a normal
/// approximation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MCEstimate {
    count: u64,
    mean: Complex64,
    m2: f64,
}

impl MCEstimate {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_samples<I: IntoIterator<Item = Complex64>>(samples: I) -> Self {
        let mut e = Self::new();
        for z in samples {
            e.push(z);
        }
        e
    }

    pub fn from_real<I: IntoIterator<Item = f64>>(samples: I) -> Self {
        Self::from_samples(samples.into_iter().map(|x| Complex64::new(x, 0.0)))
    }

    pub fn push(&mut self, z: Complex64) {
        self.count += 1;
        let delta = z - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += (delta.conj() * (z - self.mean)).re;
    }

    /// Pooled estimate of two disjoint sample sets.
    pub fn merge(&self, other: &Self) -> Self {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let n = self.count + other.count;
        let (na, nb) = (self.count as f64, other.count as f64);
        let delta = other.mean - self.mean;
        Self {
            count: n,
            mean: self.mean + delta * (nb / n as f64),
            m2: self.m2 + other.m2 + delta.norm_sqr() * na * nb / n as f64,
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> Complex64 {
        self.mean
    }

    /// Unbiased sample variance of the samples (0 for fewer than two).
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2.max(0.0) / (self.count - 1) as f64
        }
    }

    pub fn std_err(&self) -> f64 {
        if self.count < 2 {
            f64::INFINITY
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }

    /// 95% half-width; infinite when fewer than two samples were seen.
    pub fn ci(&self) -> f64 {
        Z95 * self.std_err()
    }
}
