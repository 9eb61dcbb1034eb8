//! Exact non-negative dyadic rationals `a / 2^k`.
//!
//! The numerator type is a parameter: machine integers are fast and
//! overflow-checked, [`BigUint`] never overflows. The crate root fixes the
//! default choice as [`crate::Dyadic`].

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Sub};

use num_bigint::BigUint;
use num_traits::{CheckedAdd, CheckedSub, One, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Unsigned integer usable as a dyadic numerator.
pub trait Numerator: Clone + Ord + fmt::Debug + fmt::Display + Zero + One + CheckedAdd + CheckedSub {
    fn trailing_zeros(&self) -> Option<u64>;
    fn checked_shl(&self, bits: u32) -> Option<Self>;
    fn shr(&self, bits: u32) -> Self;
    fn from_u64(v: u64) -> Self;
    fn from_u128(v: u128) -> Option<Self>;
    fn to_u128(&self) -> Option<u128>;
}

macro_rules! primitive_numerator {
    ($($t:ty),*) => {$(
        impl Numerator for $t {
            fn trailing_zeros(&self) -> Option<u64> {
                (*self != 0).then(|| <$t>::trailing_zeros(*self) as u64)
            }
            fn checked_shl(&self, bits: u32) -> Option<Self> {
                if *self == 0 {
                    return Some(0);
                }
                if bits >= <$t>::BITS || <$t>::leading_zeros(*self) < bits {
                    return None;
                }
                Some(*self << bits)
            }
            fn shr(&self, bits: u32) -> Self {
                if bits >= <$t>::BITS { 0 } else { *self >> bits }
            }
            fn from_u64(v: u64) -> Self {
                <$t>::try_from(v).expect("numerator conversion")
            }
            fn from_u128(v: u128) -> Option<Self> {
                <$t>::try_from(v).ok()
            }
            fn to_u128(&self) -> Option<u128> {
                Some(*self as u128)
            }
        }
    )*};
}

primitive_numerator!(u64, u128);

impl Numerator for BigUint {
    fn trailing_zeros(&self) -> Option<u64> {
        BigUint::trailing_zeros(self)
    }
    fn checked_shl(&self, bits: u32) -> Option<Self> {
        Some(self << bits)
    }
    fn shr(&self, bits: u32) -> Self {
        self >> bits
    }
    fn from_u64(v: u64) -> Self {
        BigUint::from(v)
    }
    fn from_u128(v: u128) -> Option<Self> {
        Some(BigUint::from(v))
    }
    fn to_u128(&self) -> Option<u128> {
        ToPrimitive::to_u128(self)
    }
}

/// `num / 2^exp` in lowest terms: the numerator is odd, or it is zero and
/// the exponent is zero.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct DyadicRational<N> {
    num: N,
    exp: u32,
}

impl<N: Numerator> DyadicRational<N> {
    pub fn new(num: N, exp: u32) -> Self {
        let mut d = Self { num, exp };
        d.normalize();
        d
    }

    pub fn zero() -> Self {
        Self { num: N::zero(), exp: 0 }
    }

    pub fn one() -> Self {
        Self { num: N::one(), exp: 0 }
    }

    /// `2^{-k}`.
    pub fn pow2_neg(k: u32) -> Self {
        Self { num: N::one(), exp: k }
    }

    /// `count / 2^k`.
    pub fn ratio(count: u64, k: u32) -> Self {
        Self::new(N::from_u64(count), k)
    }

    pub fn numerator(&self) -> &N {
        &self.num
    }

    pub fn exponent(&self) -> u32 {
        self.exp
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    fn normalize(&mut self) {
        match self.num.trailing_zeros() {
            None => self.exp = 0,
            Some(tz) => {
                let shift = tz.min(self.exp as u64) as u32;
                if shift > 0 {
                    self.num = self.num.shr(shift);
                    self.exp -= shift;
                }
            }
        }
    }

    /// Both numerators rescaled to the larger exponent.
    fn aligned(&self, other: &Self) -> Option<(N, N, u32)> {
        let exp = self.exp.max(other.exp);
        let a = self.num.checked_shl(exp - self.exp)?;
        let b = other.num.checked_shl(exp - other.exp)?;
        Some((a, b, exp))
    }

    pub fn checked_add(&self, other: &Self) -> Option<Self> {
        let (a, b, exp) = self.aligned(other)?;
        Some(Self::new(a.checked_add(&b)?, exp))
    }

    /// `None` on overflow or when the result would be negative.
    pub fn checked_sub(&self, other: &Self) -> Option<Self> {
        let (a, b, exp) = self.aligned(other)?;
        Some(Self::new(a.checked_sub(&b)?, exp))
    }

    /// `max(self - other, 0)`.
    pub fn saturating_sub(&self, other: &Self) -> Self {
        if self <= other {
            Self::zero()
        } else {
            self.checked_sub(other).expect("dyadic overflow")
        }
    }

    /// Multiplies by `2^k`.
    pub fn mul_pow2(&self, k: u32) -> Self {
        let reduce = k.min(self.exp);
        let num = self.num.checked_shl(k - reduce).expect("dyadic overflow");
        Self::new(num, self.exp - reduce)
    }

    /// Multiplies by `2^{-k}`.
    pub fn div_pow2(&self, k: u32) -> Self {
        Self::new(self.num.clone(), self.exp.checked_add(k).expect("dyadic exponent overflow"))
    }

    /// Lossy conversion, for display only.
    pub fn to_f64(&self) -> f64 {
        let num = self.num.to_u128().map(|v| v as f64).unwrap_or(f64::INFINITY);
        num / 2f64.powi(self.exp as i32)
    }
}

impl<N: Numerator> Ord for DyadicRational<N> {
    fn cmp(&self, other: &Self) -> Ordering {
        match self.aligned(other) {
            Some((a, b, _)) => a.cmp(&b),
            // Alignment overflowed the numerator type; compare in big integers.
            None => {
                let widen = |d: &Self| BigUint::from(d.num.to_u128().expect("numerator wider than 128 bits"));
                let exp = self.exp.max(other.exp);
                (widen(self) << (exp - self.exp)).cmp(&(widen(other) << (exp - other.exp)))
            }
        }
    }
}

impl<N: Numerator> PartialOrd for DyadicRational<N> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<N: Numerator> Add for DyadicRational<N> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.checked_add(&rhs).expect("dyadic overflow")
    }
}

impl<'a, N: Numerator> Add<&'a DyadicRational<N>> for &'a DyadicRational<N> {
    type Output = DyadicRational<N>;
    fn add(self, rhs: Self) -> DyadicRational<N> {
        self.checked_add(rhs).expect("dyadic overflow")
    }
}

impl<N: Numerator> Sub for DyadicRational<N> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.checked_sub(&rhs).expect("dyadic subtraction underflow")
    }
}

impl<N: Numerator> std::iter::Sum for DyadicRational<N> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::zero(), |acc, d| acc + d)
    }
}

impl<N: Numerator> fmt::Display for DyadicRational<N> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exp == 0 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/2^{}", self.num, self.exp)
        }
    }
}

impl<N: Numerator> fmt::Debug for DyadicRational<N> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Serialize, Deserialize)]
struct DyadicRepr {
    num: u128,
    exp: u32,
}

impl<N: Numerator> Serialize for DyadicRational<N> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::Error as _;
        let num = self
            .num
            .to_u128()
            .ok_or_else(|| S::Error::custom("dyadic numerator exceeds 128 bits"))?;
        DyadicRepr { num, exp: self.exp }.serialize(serializer)
    }
}

impl<'de, N: Numerator> Deserialize<'de> for DyadicRational<N> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = DyadicRepr::deserialize(deserializer)?;
        let num = N::from_u128(repr.num).ok_or_else(|| D::Error::custom("numerator out of range"))?;
        Ok(Self::new(num, repr.exp))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type D = DyadicRational<u64>;
    type B = DyadicRational<BigUint>;

    #[test]
    fn canonical_form() {
        let d = D::new(12, 5);
        assert_eq!((*d.numerator(), d.exponent()), (3, 3));
        let z = D::new(0, 9);
        assert_eq!(z, D::zero());
        assert_eq!(D::new(8, 2), D::new(2, 0));
    }

    #[test]
    fn exact_sums() {
        let quarter = D::pow2_neg(2);
        assert_eq!(quarter.clone() + quarter.clone(), D::pow2_neg(1));
        assert_eq!(D::one() - D::pow2_neg(3), D::new(7, 3));
        let total: D = (1..=10).map(D::pow2_neg).sum();
        assert_eq!(total, D::new(1023, 10));
        assert!(D::pow2_neg(3).checked_sub(&D::pow2_neg(2)).is_none());
    }

    #[test]
    fn overflow_is_reported_not_wrapped() {
        let tiny = D::pow2_neg(63);
        let one = D::one();
        assert!(tiny.checked_add(&one).is_some());
        let tinier = D::pow2_neg(64);
        assert!(tinier.checked_add(&one).is_none());
        // the same sum is fine with a big numerator
        let big = B::pow2_neg(200) + B::one();
        assert_eq!(big.exponent(), 200);
    }

    #[test]
    fn ordering_matches_value() {
        assert!(D::new(3, 3) < D::pow2_neg(1));
        assert!(D::new(5, 3) > D::pow2_neg(1));
        assert!(B::pow2_neg(300) < B::pow2_neg(299));
        assert_eq!(D::pow2_neg(4).mul_pow2(4), D::one());
        assert_eq!(D::one().div_pow2(3), D::pow2_neg(3));
    }

    #[test]
    fn json_shape() {
        let json = serde_json::to_string(&B::new(BigUint::from(3u8), 4)).unwrap();
        assert_eq!(json, r#"{"num":3,"exp":4}"#);
        let back: B = serde_json::from_str(r#"{"num":6,"exp":5}"#).unwrap();
        assert_eq!(back, B::new(BigUint::from(3u8), 4));
    }
}
