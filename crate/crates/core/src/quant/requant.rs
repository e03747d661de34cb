use serde::{Deserialize, Serialize};

use super::QuantError;

/// Required relative accuracy of `multiplier / 2^shift`.
pub const REQUANT_TOLERANCE: f64 = 1.0 / 32768.0;

/// Multipliers are normalized into `[2^15, 2^16)` before trailing zero bits
/// are stripped, so `accumulator * multiplier` stays below 2^47 and is exact
/// in both `i64` and `f64`.
const MULTIPLIER_BITS: i32 = 16;
const MAX_SHIFT: i32 = 62;

/// Rounds half away from zero.
pub fn round_half_away(v: f64) -> f64 {
    libm::round(v)
}

/// Fixed-point approximation `multiplier / 2^shift` of a positive scale ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Requant {
    pub multiplier: i32,
    pub shift: u32,
}

impl Requant {
    pub const IDENTITY: Requant = Requant {
        multiplier: 1,
        shift: 0,
    };

    pub fn from_ratio(ratio: f64) -> Result<Self, QuantError> {
        if !(ratio > 0.0 && ratio.is_finite()) {
            return Err(QuantError::RequantRange { ratio });
        }
        let (_, exp) = libm::frexp(ratio);
        let mut shift = MULTIPLIER_BITS - exp;
        let mut m = round_half_away(libm::ldexp(ratio, shift)) as i64;
        if m == 1 << MULTIPLIER_BITS {
            m >>= 1;
            shift -= 1;
        }
        if !(0..=MAX_SHIFT).contains(&shift) {
            return Err(QuantError::RequantRange { ratio });
        }
        while m % 2 == 0 && shift > 0 {
            m /= 2;
            shift -= 1;
        }
        let rq = Requant {
            multiplier: m as i32,
            shift: shift as u32,
        };
        if rq.relative_error(ratio) >= REQUANT_TOLERANCE {
            return Err(QuantError::RequantRange { ratio });
        }
        Ok(rq)
    }

    pub fn ratio(&self) -> f64 {
        libm::ldexp(self.multiplier as f64, -(self.shift as i32))
    }

    pub fn relative_error(&self, ratio: f64) -> f64 {
        libm::fabs(self.ratio() / ratio - 1.0)
    }

    /// `round_half_away(acc * multiplier / 2^shift)` in integer arithmetic.
    pub fn apply(&self, acc: i64) -> i64 {
        let p = acc * self.multiplier as i64;
        if self.shift == 0 {
            return p;
        }
        let half = 1i64 << (self.shift - 1);
        if p >= 0 {
            (p + half) >> self.shift
        } else {
            -((-p + half) >> self.shift)
        }
    }

    /// Real-valued counterpart of [`Requant::apply`] used by the
    /// fake-quantized forward pass; identical for `|acc| < 2^31`.
    pub fn apply_real(&self, acc: f64) -> f64 {
        round_half_away(libm::ldexp(
            acc * self.multiplier as f64,
            -(self.shift as i32),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_ratios() {
        assert_eq!(
            Requant::from_ratio(1.0).unwrap(),
            Requant {
                multiplier: 1,
                shift: 0
            }
        );
        let half = Requant::from_ratio(0.5).unwrap();
        assert_eq!(
            half,
            Requant {
                multiplier: 1,
                shift: 1
            }
        );
        assert_eq!(half.ratio(), 0.5);
        assert_eq!(
            Requant::from_ratio(3.0).unwrap(),
            Requant {
                multiplier: 3,
                shift: 0
            }
        );
    }

    #[test]
    fn out_of_range_ratios() {
        assert!(Requant::from_ratio(0.0).is_err());
        assert!(Requant::from_ratio(-1.0).is_err());
        assert!(Requant::from_ratio(70000.5).is_err());
        assert!(Requant::from_ratio(1e-30).is_err());
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        let half = Requant {
            multiplier: 1,
            shift: 1,
        };
        assert_eq!(half.apply(3), 2);
        assert_eq!(half.apply(-3), -2);
        assert_eq!(half.apply(1), 1);
        assert_eq!(half.apply(-1), -1);
        assert_eq!(half.apply(2), 1);
        assert_eq!(half.apply_real(-3.0), -2.0);
    }

    proptest! {
        #[test]
        fn approximation_bound(ratio in 1e-9f64..60000.0) {
            let rq = Requant::from_ratio(ratio).unwrap();
            prop_assert!(rq.relative_error(ratio) < REQUANT_TOLERANCE);
            prop_assert!(rq.multiplier > 0 && rq.multiplier < 1 << 16);
        }

        #[test]
        fn integer_and_real_paths_agree(ratio in 1e-6f64..100.0, acc in -(1i64 << 30)..(1i64 << 30)) {
            let rq = Requant::from_ratio(ratio).unwrap();
            prop_assert_eq!(rq.apply(acc) as f64, rq.apply_real(acc as f64));
        }
    }
}
