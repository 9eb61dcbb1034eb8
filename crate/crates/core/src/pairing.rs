//! Cantor pairing `⟨a, b⟩ = (a+b)(a+b+1)/2 + b`, on machine words and on
//! arbitrary-precision codes.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

pub fn pair(a: u64, b: u64) -> Option<u64> {
    let w = a.checked_add(b)?;
    let tri = (w as u128 * (w as u128 + 1)) / 2;
    u64::try_from(tri + b as u128).ok()
}

pub fn unpair(s: u64) -> (u64, u64) {
    let w = (((8 * s as u128 + 1).isqrt() - 1) / 2) as u64;
    let t = s - (w as u128 * (w as u128 + 1) / 2) as u64;
    (w - t, t)
}

pub fn pair_big(a: &BigUint, b: &BigUint) -> BigUint {
    let w = a + b;
    ((&w * (&w + 1u32)) >> 1u32) + b
}

pub fn unpair_big(s: &BigUint) -> (BigUint, BigUint) {
    if let Some(small) = s.to_u64() {
        let (a, b) = unpair(small);
        return (a.into(), b.into());
    }
    let w: BigUint = ((s * 8u32 + BigUint::one()).sqrt() - BigUint::one()) >> 1u32;
    let t = s - ((&w * (&w + 1u32)) >> 1u32);
    (w - &t, t)
}

/// Finite sets of naturals coded by the binary expansion of their code.
pub fn set_code(members: impl IntoIterator<Item = u64>) -> BigUint {
    let mut code = BigUint::zero();
    for k in members {
        code.set_bit(k, true);
    }
    code
}

pub fn set_decode(code: &BigUint) -> Vec<u64> {
    (0..code.bits()).filter(|&k| code.bit(k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_values() {
        let expected = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 0)];
        for (s, &(a, b)) in expected.iter().enumerate() {
            assert_eq!(unpair(s as u64), (a, b));
            assert_eq!(pair(a, b), Some(s as u64));
        }
    }

    proptest! {
        #[test]
        fn roundtrip(a in 0u64..1 << 31, b in 0u64..1 << 31) {
            prop_assert_eq!(unpair(pair(a, b).unwrap()), (a, b));
        }

        #[test]
        fn big_roundtrip(a in prop::collection::vec(any::<u32>(), 0..5), b in prop::collection::vec(any::<u32>(), 0..5)) {
            let (a, b) = (BigUint::new(a), BigUint::new(b));
            prop_assert_eq!(unpair_big(&pair_big(&a, &b)), (a, b));
        }

        #[test]
        fn set_roundtrip(members in prop::collection::btree_set(0u64..200, 0..10)) {
            let v: Vec<u64> = members.iter().copied().collect();
            prop_assert_eq!(set_decode(&set_code(v.clone())), v);
        }
    }
}
