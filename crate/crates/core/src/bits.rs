//! Finite binary strings, interleaving joins and the length-lexicographic
//! coding of `2^{<ω}`.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigUint;
use num_traits::One;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use smallvec::SmallVec;

use crate::error::{Error, Result};

const WORD: usize = 64;

/// A finite binary string.
///
/// Bits are packed least-significant first; bit `k` lives in word `k / 64`.
/// Storage past `len` is always zero so that derived equality and hashing
/// are structural.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitString {
    len: usize,
    words: SmallVec<[u64; 4]>,
}

impl BitString {
    /// The empty string λ.
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn zeros(len: usize) -> Self {
        let mut words = SmallVec::new();
        words.resize(len.div_ceil(WORD), 0);
        Self { len, words }
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut s = Self::empty();
        for b in bits {
            s.push(b);
        }
        s
    }

    /// Parses a string of `0`/`1` characters. `""` and `"λ"` both denote λ.
    pub fn parse(text: &str) -> Result<Self> {
        if text == "λ" {
            return Ok(Self::empty());
        }
        let mut s = Self::empty();
        for c in text.chars() {
            match c {
                '0' => s.push(false),
                '1' => s.push(true),
                other => return Err(Error::Parse(format!("invalid bit {other:?} in {text:?}"))),
            }
        }
        Ok(s)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Bit at position `k`. Panics when out of range.
    #[inline]
    pub fn get(&self, k: usize) -> bool {
        assert!(k < self.len, "bit {k} out of range for length {}", self.len);
        (self.words[k / WORD] >> (k % WORD)) & 1 == 1
    }

    #[inline]
    pub fn bit(&self, k: usize) -> Option<bool> {
        (k < self.len).then(|| self.get(k))
    }

    #[inline]
    pub fn set(&mut self, k: usize, b: bool) {
        assert!(k < self.len, "bit {k} out of range for length {}", self.len);
        let mask = 1u64 << (k % WORD);
        if b {
            self.words[k / WORD] |= mask;
        } else {
            self.words[k / WORD] &= !mask;
        }
    }

    pub fn push(&mut self, b: bool) {
        if self.len.is_multiple_of(WORD) {
            self.words.push(0);
        }
        self.len += 1;
        if b {
            let k = self.len - 1;
            self.words[k / WORD] |= 1 << (k % WORD);
        }
    }

    /// Appends zeros until the length is at least `len`.
    pub fn pad_to(&mut self, len: usize) {
        if len > self.len {
            self.len = len;
            self.words.resize(len.div_ceil(WORD), 0);
        }
    }

    /// The leftmost extension of `self` of length `len` (or `self` if it is
    /// already at least that long).
    pub fn padded(&self, len: usize) -> Self {
        let mut s = self.clone();
        s.pad_to(len);
        s
    }

    /// Cuts the string down to at most `len` bits.
    pub fn truncate(&mut self, len: usize) {
        if len >= self.len {
            return;
        }
        self.len = len;
        self.words.truncate(len.div_ceil(WORD));
        if !len.is_multiple_of(WORD) {
            let last = self.words.len() - 1;
            self.words[last] &= (1u64 << (len % WORD)) - 1;
        }
    }

    /// `self ↾ len`.
    pub fn prefix(&self, len: usize) -> Self {
        let mut s = self.clone();
        s.truncate(len);
        s
    }

    pub fn concat(&self, other: &BitString) -> Self {
        let mut s = self.clone();
        for b in other.iter() {
            s.push(b);
        }
        s
    }

    pub fn with_bit(&self, b: bool) -> Self {
        let mut s = self.clone();
        s.push(b);
        s
    }

    /// `self ⪯ other`.
    pub fn is_prefix_of(&self, other: &BitString) -> bool {
        if self.len > other.len {
            return false;
        }
        let full = self.len / WORD;
        if self.words[..full] != other.words[..full] {
            return false;
        }
        let rest = self.len % WORD;
        if rest == 0 {
            return true;
        }
        let mask = (1u64 << rest) - 1;
        self.words[full] == other.words[full] & mask
    }

    pub fn is_proper_prefix_of(&self, other: &BitString) -> bool {
        self.len < other.len && self.is_prefix_of(other)
    }

    pub fn compatible(&self, other: &BitString) -> bool {
        self.is_prefix_of(other) || other.is_prefix_of(self)
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = bool> + ExactSizeIterator + '_ {
        (0..self.len).map(move |k| self.get(k))
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Length-lexicographic rank: λ ↦ 0, `0` ↦ 1, `1` ↦ 2, `00` ↦ 3, …
    pub fn rank(&self) -> BigUint {
        if let Some(code) = self.rank_u64() {
            return BigUint::from(code);
        }
        // 2^len + binary(σ) - 1
        let mut value = BigUint::one() << self.len;
        for (k, b) in self.iter().enumerate() {
            if b {
                value.set_bit((self.len - 1 - k) as u64, true);
            }
        }
        value - 1u32
    }

    /// [`rank`](Self::rank) when it fits in a `u64`.
    pub fn rank_u64(&self) -> Option<u64> {
        if self.len > 62 {
            return None;
        }
        let value = self.iter().fold(0u64, |acc, b| (acc << 1) | b as u64);
        Some(((1u64 << self.len) | value) - 1)
    }

    /// Inverse of [`rank`](Self::rank).
    pub fn unrank(code: u64) -> Self {
        let shifted = code + 1;
        let len = (u64::BITS - 1 - shifted.leading_zeros()) as usize;
        Self::from_bits((0..len).rev().map(|k| (shifted >> k) & 1 == 1))
    }

    pub fn unrank_big(code: &BigUint) -> Self {
        let shifted = code + 1u32;
        let len = (shifted.bits() - 1) as usize;
        Self::from_bits((0..len).rev().map(|k| shifted.bit(k as u64)))
    }

    /// All strings of length `len` in lexicographic order.
    pub fn all_of_length(len: usize) -> impl Iterator<Item = BitString> {
        assert!(len < 64, "enumeration of 2^{len} strings requested");
        (0..1u64 << len).map(move |v| Self::from_bits((0..len).rev().map(|k| (v >> k) & 1 == 1)))
    }

    /// All extensions of `self` of exactly `len` bits, lexicographically.
    pub fn extensions_of_length(&self, len: usize) -> impl Iterator<Item = BitString> + '_ {
        let extra = len.saturating_sub(self.len);
        let count = if len < self.len { 0 } else { 1u64 << extra };
        (0..count).map(move |v| {
            let mut s = self.clone();
            for k in (0..extra).rev() {
                s.push((v >> k) & 1 == 1);
            }
            s
        })
    }

    /// All extensions of `self` of length at most `max_len`, in
    /// length-lexicographic order (`self` first).
    pub fn extensions_up_to(&self, max_len: usize) -> impl Iterator<Item = BitString> + '_ {
        (self.len..=max_len).flat_map(move |l| self.extensions_of_length(l))
    }

    fn words_rev_cmp(&self, other: &BitString) -> Ordering {
        for (a, b) in self.words.iter().zip(other.words.iter()) {
            match a.reverse_bits().cmp(&b.reverse_bits()) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        Ordering::Equal
    }
}

/// `σ ⊕ τ`: `σ` on even positions, `τ` on odd positions.
pub fn join(left: &BitString, right: &BitString) -> Result<BitString> {
    if left.len() != right.len() {
        return Err(Error::LengthMismatch { left: left.len(), right: right.len() });
    }
    Ok(interleave(left, right))
}

/// Interleaves two equal-length strings without the length check.
pub(crate) fn interleave(left: &BitString, right: &BitString) -> BitString {
    debug_assert_eq!(left.len(), right.len());
    let mut out = BitString::zeros(2 * left.len());
    for k in 0..left.len() {
        if left.get(k) {
            out.set(2 * k, true);
        }
        if right.get(k) {
            out.set(2 * k + 1, true);
        }
    }
    out
}

/// Splits a string into its even-position and odd-position halves
/// (the odd half is one shorter when the length is odd).
pub fn unjoin(s: &BitString) -> (BitString, BitString) {
    let left = BitString::from_bits((0..s.len()).step_by(2).map(|k| s.get(k)));
    let right = BitString::from_bits((1..s.len()).step_by(2).map(|k| s.get(k)));
    (left, right)
}

/// Length-lexicographic order, which agrees with [`BitString::rank`].
impl Ord for BitString {
    fn cmp(&self, other: &Self) -> Ordering {
        self.len.cmp(&other.len).then_with(|| self.words_rev_cmp(other))
    }
}

impl PartialOrd for BitString {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("λ");
        }
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "\"{self}\"")
    }
}

impl std::str::FromStr for BitString {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

#[derive(Serialize)]
struct BitStringRepr {
    len: usize,
    bits: String,
}

impl Serialize for BitString {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let bits: String = self.iter().map(|b| if b { '1' } else { '0' }).collect();
        BitStringRepr { len: self.len, bits }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Plain(String),
            Sized { len: usize, bits: String },
        }
        match Repr::deserialize(deserializer)? {
            Repr::Plain(bits) => BitString::parse(&bits).map_err(D::Error::custom),
            Repr::Sized { len, bits } => {
                let s = BitString::parse(&bits).map_err(D::Error::custom)?;
                if s.len() != len {
                    return Err(D::Error::custom(format!(
                        "bit string declares len {len} but has {} bits",
                        s.len()
                    )));
                }
                Ok(s)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(s: &str) -> BitString {
        BitString::parse(s).unwrap()
    }

    #[test]
    fn join_examples() {
        assert_eq!(join(&b(""), &b("")).unwrap(), b(""));
        assert_eq!(join(&b("01"), &b("10")).unwrap(), b("0110"));
        assert_eq!(join(&b("111"), &b("000")).unwrap(), b("101010"));
        assert!(matches!(join(&b("1"), &b("")), Err(Error::LengthMismatch { left: 1, right: 0 })));
    }

    #[test]
    fn rank_examples() {
        assert_eq!(b("").rank_u64(), Some(0));
        assert_eq!(b("0").rank_u64(), Some(1));
        assert_eq!(b("1").rank_u64(), Some(2));
        assert_eq!(b("00").rank_u64(), Some(3));
        assert_eq!(b("111").rank_u64(), Some(14));
        assert_eq!(BitString::unrank(6), b("11"));
    }

    #[test]
    fn rank_roundtrip_below_2_16() {
        let mut prev: Option<BitString> = None;
        for code in 0..(1u64 << 16) {
            let s = BitString::unrank(code);
            assert_eq!(s.rank_u64(), Some(code));
            if let Some(p) = prev {
                assert!(p < s, "order disagrees with rank at {code}");
            }
            prev = Some(s);
        }
    }

    #[test]
    fn long_strings_rank_through_bigint() {
        let long = BitString::from_bits((0..200).map(|k| k % 3 == 0));
        let code = long.rank();
        assert_eq!(BitString::unrank_big(&code), long);
        assert_eq!(long.rank_u64(), None);
    }

    #[test]
    fn prefix_relations_across_words() {
        let s = BitString::from_bits((0..150).map(|k| k % 5 == 1));
        for l in 0..=150 {
            assert!(s.prefix(l).is_prefix_of(&s));
        }
        let mut t = s.clone();
        t.set(70, !t.get(70));
        assert!(!s.prefix(71).is_prefix_of(&t));
        assert!(s.prefix(70).is_prefix_of(&t));
        assert!(!s.compatible(&t));
    }

    #[test]
    fn padding_and_truncation_keep_storage_clean() {
        let mut s = b("1011");
        s.truncate(2);
        s.pad_to(4);
        assert_eq!(s, b("1000"));
        let mut long = BitString::from_bits(std::iter::repeat_n(true, 130));
        long.truncate(65);
        long.pad_to(130);
        assert_eq!(long.count_ones(), 65);
    }

    #[test]
    fn json_form() {
        let json = serde_json::to_string(&b("0101")).unwrap();
        assert_eq!(json, r#"{"len":4,"bits":"0101"}"#);
        assert!(serde_json::from_str::<BitString>(r#"{"len":3,"bits":"01"}"#).is_err());
        assert_eq!(serde_json::from_str::<BitString>(r#""011""#).unwrap(), b("011"));
    }

    proptest! {
        #[test]
        fn join_then_unjoin(bits in prop::collection::vec((any::<bool>(), any::<bool>()), 0..80)) {
            let l = BitString::from_bits(bits.iter().map(|p| p.0));
            let r = BitString::from_bits(bits.iter().map(|p| p.1));
            let j = join(&l, &r).unwrap();
            prop_assert_eq!(j.len(), 2 * l.len());
            for n in 0..l.len() {
                prop_assert_eq!(j.get(2 * n), l.get(n));
                prop_assert_eq!(j.get(2 * n + 1), r.get(n));
            }
            prop_assert_eq!(unjoin(&j), (l, r));
        }

        #[test]
        fn order_is_length_then_lex(a in prop::collection::vec(any::<bool>(), 0..70),
                                    c in prop::collection::vec(any::<bool>(), 0..70)) {
            let (x, y) = (BitString::from_bits(a.clone()), BitString::from_bits(c.clone()));
            let expected = a.len().cmp(&c.len()).then_with(|| a.cmp(&c));
            prop_assert_eq!(x.cmp(&y), expected);
        }
    }
}
