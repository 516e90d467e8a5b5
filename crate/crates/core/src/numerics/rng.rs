use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::special::log_gamma;
use crate::error::{Error, Result};

/// Seeded, platform-independent random stream (ChaCha8).
#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    inner: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream for a sub-task (e.g. one region), derived from this seed.
    pub fn derive(&self, stream: u64) -> RngState {
        let mixed = splitmix64(self.seed ^ splitmix64(stream.wrapping_add(0x9E37_79B9_7F4A_7C15)));
        RngState::new(mixed)
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.gen::<u64>()
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal draw via the Box–Muller transform.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn sample_gaussian(rng: &mut RngState, mean: f64, std_dev: f64, n: usize) -> Result<Vec<f64>> {
    if !(std_dev > 0.0) {
        return Err(Error::Domain(format!("gaussian std must be > 0, got {std_dev}")));
    }
    Ok((0..n).map(|_| mean + std_dev * rng.standard_normal()).collect())
}

/// Exact Poisson draw: Knuth's product method below λ = 30, Hörmann's
/// transformed rejection (PTRS) above.
pub fn sample_poisson(rng: &mut RngState, lambda: f64) -> Result<u64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!("poisson rate must be > 0, got {lambda}")));
    }
    if lambda < 30.0 {
        let limit = (-lambda).exp();
        let mut k = 0u64;
        let mut p = rng.next_f64();
        while p > limit {
            k += 1;
            p *= rng.next_f64();
        }
        return Ok(k);
    }
    let slam = lambda.sqrt();
    let loglam = lambda.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.next_f64() - 0.5;
        let v = rng.next_f64();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return Ok(k as u64);
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -lambda + k * loglam - log_gamma(k + 1.0)?;
        if lhs <= rhs {
            return Ok(k as u64);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = RngState::new(42);
        let mut b = RngState::new(42);
        assert_eq!(
            sample_gaussian(&mut a, 0.0, 1.0, 50).unwrap(),
            sample_gaussian(&mut b, 0.0, 1.0, 50).unwrap()
        );
        let pa: Vec<u64> = (0..50).map(|_| sample_poisson(&mut a, 3.0).unwrap()).collect();
        let pb: Vec<u64> = (0..50).map(|_| sample_poisson(&mut b, 3.0).unwrap()).collect();
        assert_eq!(pa, pb);
    }

    #[test]
    fn degenerate_width_collapses_to_mean() {
        let mut rng = RngState::new(1);
        for x in sample_gaussian(&mut rng, 3.5, 1e-12, 3).unwrap() {
            assert!((x - 3.5).abs() < 1e-9);
        }
        assert!(sample_gaussian(&mut rng, 0.0, 0.0, 3).is_err());
        assert!(sample_gaussian(&mut rng, 0.0, -1.0, 3).is_err());
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = RngState::new(7);
        let xs = sample_gaussian(&mut rng, 0.0, 1.0, 100_000).unwrap();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.03, "var {var}");
    }

    #[test]
    fn poisson_small_rate() {
        let mut rng = RngState::new(3);
        for _ in 0..1000 {
            assert_eq!(sample_poisson(&mut rng, 1e-9).unwrap(), 0);
        }
        assert!(sample_poisson(&mut rng, 0.0).is_err());
    }

    #[test]
    fn poisson_moments_and_zero_mass() {
        let mut rng = RngState::new(9);
        let n = 100_000;
        let draws: Vec<u64> = (0..n).map(|_| sample_poisson(&mut rng, 4.0).unwrap()).collect();
        let mean = draws.iter().sum::<u64>() as f64 / n as f64;
        let p0 = draws.iter().filter(|&&k| k == 0).count() as f64 / n as f64;
        assert!((mean - 4.0).abs() < 0.05, "mean {mean}");
        assert!((p0 - (-4.0f64).exp()).abs() < 0.005, "p0 {p0}");
    }

    #[test]
    fn poisson_large_rate_uses_rejection_branch() {
        let mut rng = RngState::new(10);
        let n = 50_000;
        let lam = 80.0;
        let draws: Vec<f64> = (0..n).map(|_| sample_poisson(&mut rng, lam).unwrap() as f64).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        // standard errors: sqrt(80/5e4) ≈ 0.04 for the mean
        assert!((mean - lam).abs() < 0.2, "mean {mean}");
        assert!((var - lam).abs() < 2.5, "var {var}");
    }

    #[test]
    fn derived_streams_differ() {
        let base = RngState::new(1);
        let mut a = base.derive(0);
        let mut b = base.derive(1);
        assert_ne!(a.next_u64(), b.next_u64());
        assert_eq!(base.derive(4).seed(), base.derive(4).seed());
    }
}
