//! AWGN multiple-access channel and energy bookkeeping.
//!
//! The noise variance is fixed to one and the operating point is moved with
//! the per-symbol energy, so `Eb/N0 = N·Es / (2B)`.

use crate::cs::CsFloat;
use crate::error::{CcsError, Result};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// Total channel uses N.
    pub n_total: usize,
    pub slots: usize,
    pub b: usize,
    pub es: f64,
    pub sigma2: f64,
}

impl ChannelConfig {
    pub fn new(n_total: usize, slots: usize, b: usize, es: f64) -> Result<Self> {
        let c = ChannelConfig { n_total, slots, b, es, sigma2: 1.0 };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.slots == 0 || !self.n_total.is_multiple_of(self.slots) {
            return Err(CcsError::Domain(format!("N={} is not divisible by n={}", self.n_total, self.slots)));
        }
        if !(self.es >= 0.0) || !(self.sigma2 > 0.0) {
            return Err(CcsError::Domain(format!("need Es >= 0 and sigma2 > 0, got {} and {}", self.es, self.sigma2)));
        }
        Ok(())
    }

    pub fn rows_per_slot(&self) -> usize {
        self.n_total / self.slots
    }

    pub fn ebn0_db(&self) -> Result<f64> {
        ebn0_db(self.es, self.n_total, self.b)
    }
}

/// `x + z` with `z` i.i.d. `N(0, sigma2)`.
pub fn awgn_observe<T: CsFloat, R: Rng + ?Sized>(x: &[T], sigma2: f64, rng: &mut R) -> Vec<T> {
    assert!(sigma2 >= 0.0, "negative noise variance {sigma2}");
    if sigma2 == 0.0 {
        return x.to_vec();
    }
    let normal = Normal::new(0.0, sigma2.sqrt()).expect("finite sigma");
    x.iter().map(|&v| v + T::from_f64(normal.sample(rng)).unwrap()).collect()
}

fn check_positive(n: usize, b: usize) -> Result<()> {
    if n == 0 || b == 0 {
        return Err(CcsError::Domain(format!("N={n} and B={b} must be positive")));
    }
    Ok(())
}

pub fn ebn0_db(es: f64, n: usize, b: usize) -> Result<f64> {
    check_positive(n, b)?;
    if !(es > 0.0) {
        return Err(CcsError::Domain(format!("Es={es} must be positive")));
    }
    Ok(10.0 * (n as f64 * es / (2.0 * b as f64)).log10())
}

pub fn es_for_ebn0(ebn0_db: f64, n: usize, b: usize) -> Result<f64> {
    check_positive(n, b)?;
    if !ebn0_db.is_finite() {
        return Err(CcsError::Domain(format!("Eb/N0={ebn0_db} dB is not finite")));
    }
    Ok(10f64.powf(ebn0_db / 10.0) * 2.0 * b as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn noiseless_and_deterministic() {
        let x = vec![1.0f64, -2.0, 3.5];
        assert_eq!(awgn_observe(&x, 0.0, &mut seeded(1)), x);
        assert_eq!(awgn_observe(&x, 1.0, &mut seeded(2)), awgn_observe(&x, 1.0, &mut seeded(2)));
        assert_ne!(awgn_observe(&x, 1.0, &mut seeded(2)), x);
    }

    #[test]
    fn noise_variance() {
        let y = awgn_observe(&vec![0.0f64; 100_000], 1.0, &mut seeded(3));
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (y.len() - 1) as f64;
        assert!((var - 1.0).abs() < 0.03, "{var}");
    }

    #[test]
    fn energy_conversions() {
        assert!((ebn0_db(1.0, 22517, 75).unwrap() - 21.764).abs() < 1e-3);
        assert!((es_for_ebn0(0.0, 22517, 75).unwrap() - 150.0 / 22517.0).abs() < 1e-15);
        for es in [1e-4, 0.3, 1.0, 17.0] {
            let back = es_for_ebn0(ebn0_db(es, 1800, 40).unwrap(), 1800, 40).unwrap();
            assert!((back - es).abs() <= 1e-12 * es);
        }
        assert!(ebn0_db(1.0, 0, 75).is_err());
        assert!(ebn0_db(0.0, 10, 75).is_err());
        assert!(es_for_ebn0(1.0, 10, 0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(ChannelConfig::new(22517, 11, 75, 1.0).is_ok());
        assert_eq!(ChannelConfig::new(1800, 6, 40, 1.0).unwrap().rows_per_slot(), 300);
        assert!(ChannelConfig::new(100, 7, 40, 1.0).is_err());
        assert!(ChannelConfig::new(100, 5, 40, -1.0).is_err());
    }
}
