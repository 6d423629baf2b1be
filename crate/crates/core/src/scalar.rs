use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, One, ToPrimitive};
use std::fmt::Debug;

/// Numeric type usable by the combinatorial and closed-form routines.
///
/// Everything those routines need beyond field arithmetic is an exact power of
/// two, which is why rationals qualify alongside the IEEE types.
pub trait Scalar: Num + Clone + PartialOrd + Debug + FromPrimitive + ToPrimitive + Send + Sync + 'static {
    /// `2^exp`, exact for rationals.
    fn pow2(exp: i64) -> Self;

    fn from_u64_lossy(v: u64) -> Self {
        Self::from_u64(v).expect("integer representable")
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn pow2(exp: i64) -> Self {
        (exp.clamp(i32::MIN as i64, i32::MAX as i64) as f64).exp2()
    }
}

impl Scalar for f32 {
    fn pow2(exp: i64) -> Self {
        (exp.clamp(-1000, 1000) as f32).exp2()
    }
}

impl Scalar for BigRational {
    fn pow2(exp: i64) -> Self {
        let mag = BigInt::one() << exp.unsigned_abs() as usize;
        if exp >= 0 {
            BigRational::from_integer(mag)
        } else {
            BigRational::new(BigInt::one(), mag)
        }
    }

    fn to_f64_lossy(&self) -> f64 {
        // BigRational::to_f64 handles huge numerators/denominators gracefully.
        self.to_f64().unwrap_or(f64::NAN)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pow2_agrees_across_types() {
        for e in [-70i64, -3, 0, 5, 62] {
            let r = BigRational::pow2(e);
            assert_eq!(r.to_f64_lossy(), f64::pow2(e));
        }
        assert_eq!(f32::pow2(-2), 0.25);
        assert_eq!(BigRational::pow2(-3), BigRational::new(1.into(), 8.into()));
    }
}
