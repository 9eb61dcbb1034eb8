//! Kumabe–Slaman forcing over finitely presented protected paths.
//!
//! A condition is a finite use-monotone functional `Φ` together with a finite
//! set of ultimately periodic paths. `q ≤ p` when `q` adds only axioms whose
//! uses are longer than every use of `p` and are not initial segments of any
//! path protected by `p`. The valuation codes `Φ` as a concatenation of axiom
//! blocks `1^{|σ|} 0 σ 1^x 0 y` in axiom order.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::family::EnumeratedFamily;
use crate::forcing::{ForcingNotion, ProductFactor};
use crate::functional::{Axiom, FiniteFunctional};
use crate::pairing::{pair, pair_big, set_code, set_decode, unpair, unpair_big};

/// Upper bound on candidate extensions examined by one bounded decision.
pub const SEARCH_CAP: usize = 1 << 18;
/// Uses tried for each block shape (valuation length, use length, input,
/// base) in a bounded decision, unless the shape leaves at most
/// `EXHAUSTIVE_FREE_BITS` bits of the use free, in which case all are tried.
pub const USES_PER_SHAPE: usize = 2;
pub const EXHAUSTIVE_FREE_BITS: usize = 4;

/// `head` followed by `period` repeated forever.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "PathRepr", into = "PathRepr")]
pub struct UltimatelyPeriodic {
    head: BitString,
    period: BitString,
}

#[derive(Serialize, Deserialize)]
struct PathRepr {
    head: BitString,
    period: BitString,
}

impl TryFrom<PathRepr> for UltimatelyPeriodic {
    type Error = Error;
    fn try_from(r: PathRepr) -> Result<Self> {
        Self::new(r.head, r.period)
    }
}

impl From<UltimatelyPeriodic> for PathRepr {
    fn from(p: UltimatelyPeriodic) -> Self {
        PathRepr { head: p.head, period: p.period }
    }
}

impl UltimatelyPeriodic {
    pub fn new(head: BitString, period: BitString) -> Result<Self> {
        if period.is_empty() {
            return Err(Error::MalformedCondition("empty period".into()));
        }
        Ok(Self { head, period })
    }

    pub fn constant(bit: bool) -> Self {
        Self { head: BitString::empty(), period: BitString::from_bits([bit]) }
    }

    pub fn head(&self) -> &BitString {
        &self.head
    }

    pub fn period(&self) -> &BitString {
        &self.period
    }

    pub fn bit_at(&self, n: usize) -> bool {
        if n < self.head.len() {
            self.head.get(n)
        } else {
            self.period.get((n - self.head.len()) % self.period.len())
        }
    }

    pub fn prefix(&self, len: usize) -> BitString {
        BitString::from_bits((0..len).map(|n| self.bit_at(n)))
    }

    /// `σ ⪯ path`.
    pub fn has_prefix(&self, sigma: &BitString) -> bool {
        sigma.iter().enumerate().all(|(n, b)| self.bit_at(n) == b)
    }

    /// Position in the canonical enumeration `k ↦ (unrank h, unrank (q+1))`
    /// with `⟨h, q⟩ = k`.
    pub fn index(&self) -> u64 {
        let h = self.head.rank_u64().expect("short head");
        let q = self.period.rank_u64().expect("short period") - 1;
        pair(h, q).expect("path index fits a word")
    }

    pub fn from_index(k: u64) -> Self {
        let (h, q) = unpair(k);
        Self { head: BitString::unrank(h), period: BitString::unrank(q + 1) }
    }
}

/// A condition `(Φ, X⃗)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ConditionRepr", into = "ConditionRepr")]
pub struct KSCondition {
    functional: FiniteFunctional,
    protected: BTreeSet<UltimatelyPeriodic>,
}

#[derive(Serialize, Deserialize)]
struct ConditionRepr {
    functional: FiniteFunctional,
    protected: Vec<UltimatelyPeriodic>,
}

impl TryFrom<ConditionRepr> for KSCondition {
    type Error = Error;
    fn try_from(r: ConditionRepr) -> Result<Self> {
        Self::new(r.functional, r.protected)
    }
}

impl From<KSCondition> for ConditionRepr {
    fn from(c: KSCondition) -> Self {
        ConditionRepr { functional: c.functional, protected: c.protected.into_iter().collect() }
    }
}

impl KSCondition {
    pub fn new<I: IntoIterator<Item = UltimatelyPeriodic>>(functional: FiniteFunctional, protected: I) -> Result<Self> {
        if !functional.is_use_monotone() {
            return Err(Error::MalformedCondition("functional is not use-monotone".into()));
        }
        Ok(Self { functional, protected: protected.into_iter().collect() })
    }

    pub fn empty() -> Self {
        Self { functional: FiniteFunctional::empty(), protected: BTreeSet::new() }
    }

    pub fn functional(&self) -> &FiniteFunctional {
        &self.functional
    }

    pub fn protected(&self) -> &BTreeSet<UltimatelyPeriodic> {
        &self.protected
    }

    /// The same condition with more protected paths; an extension of `self`.
    pub fn protecting<I: IntoIterator<Item = UltimatelyPeriodic>>(&self, paths: I) -> Self {
        let mut q = self.clone();
        q.protected.extend(paths);
        q
    }

    fn max_use_len(&self) -> Option<usize> {
        self.functional.max_use_len()
    }

    fn is_protected_prefix(&self, sigma: &BitString) -> bool {
        self.protected.iter().any(|x| x.has_prefix(sigma))
    }

    /// Whether `a` may be added below `self` under both extension clauses.
    fn admits(&self, a: &Axiom) -> bool {
        self.max_use_len().is_none_or(|m| a.use_.len() > m) && !self.is_protected_prefix(&a.use_)
    }

    /// Adds one axiom, checking both extension clauses and use-monotonicity.
    pub fn with_axiom(&self, a: Axiom) -> Result<Self> {
        if !self.admits(&a) {
            return Err(Error::MalformedCondition(format!(
                "axiom ⟨{},{},{}⟩ violates an extension clause",
                a.use_, a.input, a.output as u8
            )));
        }
        let functional = self.functional.with_axiom(a).map_err(|e| Error::MalformedCondition(e.to_string()))?;
        Self::new(functional, self.protected.iter().cloned())
    }
}

/// `q ≤ p`.
pub fn ks_leq(q: &KSCondition, p: &KSCondition) -> bool {
    p.functional.is_subset(&q.functional)
        && p.protected.is_subset(&q.protected)
        && q.functional.difference(&p.functional).all(|a| p.admits(a))
}

pub fn axiom_block(a: &Axiom) -> BitString {
    let mut out = BitString::empty();
    for _ in 0..a.use_.len() {
        out.push(true);
    }
    out.push(false);
    out = out.concat(&a.use_);
    for _ in 0..a.input {
        out.push(true);
    }
    out.push(false);
    out.push(a.output);
    out
}

fn block_len(use_len: usize, input: u64) -> usize {
    2 * use_len + input as usize + 3
}

pub fn ks_valuation(p: &KSCondition) -> BitString {
    let mut out = BitString::empty();
    for a in p.functional.axioms() {
        out = out.concat(&axiom_block(a));
    }
    out
}

/// Parses a concatenation of axiom blocks.
pub fn decode_blocks(v: &BitString) -> Option<Vec<Axiom>> {
    let mut out = Vec::new();
    let mut k = 0;
    let n = v.len();
    let unary = |k: &mut usize| -> Option<usize> {
        let start = *k;
        while *k < n && v.get(*k) {
            *k += 1;
        }
        if *k >= n {
            return None;
        }
        *k += 1;
        Some(*k - 1 - start)
    };
    while k < n {
        let len = unary(&mut k)?;
        if k + len > n {
            return None;
        }
        let use_ = BitString::from_bits((k..k + len).map(|i| v.get(i)));
        k += len;
        let x = unary(&mut k)?;
        let y = v.bit(k)?;
        k += 1;
        out.push(Axiom::new(use_, x as u64, y));
    }
    Some(out)
}

/// The valuation code of `p` paired with the finite set of indices of its
/// protected paths.
pub fn ks_code(p: &KSCondition) -> BigUint {
    let paths = set_code(p.protected.iter().map(UltimatelyPeriodic::index));
    pair_big(&ks_valuation(p).rank(), &paths)
}

pub fn ks_decode(code: &BigUint) -> Option<KSCondition> {
    let (a, b) = unpair_big(code);
    let v = BitString::unrank_big(&a);
    let axioms = decode_blocks(&v)?;
    let functional = FiniteFunctional::new(axioms).ok()?;
    let p = KSCondition::new(functional, set_decode(&b).into_iter().map(UltimatelyPeriodic::from_index)).ok()?;
    (ks_valuation(&p) == v).then_some(p)
}

/// Where the next spine axiom attaches: the least use carrying the largest
/// input, and that input plus one.
fn spine(p: &KSCondition) -> Result<(BitString, u64)> {
    let Some(x_max) = p.functional.max_input() else {
        return Ok((BitString::empty(), 0));
    };
    let base = p
        .functional
        .axioms()
        .filter(|a| a.input == x_max)
        .map(|a| a.use_.clone())
        .min()
        .expect("an axiom carries the largest input");
    let below: BTreeSet<u64> = p
        .functional
        .axioms()
        .filter(|a| a.use_.is_prefix_of(&base))
        .map(|a| a.input)
        .collect();
    if below.len() as u64 != x_max + 1 {
        return Err(Error::PaddingObstruction(format!(
            "no axiom chain below {base} covers inputs 0..={x_max}"
        )));
    }
    Ok((base, x_max + 1))
}

/// Lexicographically least extension of `base` of length `len` that is not
/// an initial segment of a protected path.
fn least_free_use(p: &KSCondition, base: &BitString, len: usize) -> Option<BitString> {
    let free = len.checked_sub(base.len())?;
    // each protected path blocks at most one string of this length
    let tries = (p.protected.len() as u64 + 1).min(if free >= 64 { u64::MAX } else { 1u64 << free });
    (0..tries).find_map(|c| {
        let mut s = base.padded(len);
        for k in 0..free.min(64) {
            if c >> k & 1 == 1 {
                s.set(len - 1 - k, true);
            }
        }
        (!p.is_protected_prefix(&s)).then_some(s)
    })
}

/// Shortest admissible use length for the next spine axiom.
fn least_spine_len(p: &KSCondition, base: &BitString) -> usize {
    let mut len = p.max_use_len().map_or(0, |m| m + 1).max(base.len());
    while least_free_use(p, base, len).is_none() {
        len += 1;
    }
    len
}

fn add_spine(p: &KSCondition, use_len: usize) -> Result<KSCondition> {
    let (base, x) = spine(p)?;
    let use_ = least_free_use(p, &base, use_len).expect("admissible length");
    let mut q = p.clone();
    q.functional = q.functional.with_axiom(Axiom::new(use_, x, false))?;
    debug_assert!(q.functional.is_use_monotone());
    Ok(q)
}

/// Extends along the spine until the valuation has length at least `n`.
pub fn ks_pad(p: &KSCondition, n: usize) -> Result<KSCondition> {
    let mut q = p.clone();
    let mut len = ks_valuation(&q).len();
    while len < n {
        let (base, x) = spine(&q)?;
        let l = least_spine_len(&q, &base);
        // later axioms must avoid the paths p protects; q protects the same set
        q = add_spine(&q, l)?;
        len += block_len(l, x);
    }
    Ok(q)
}

/// One new axiom whose block has length exactly `need`, trying inputs in
/// ascending order.
fn exact_single(p: &KSCondition, need: usize) -> Option<KSCondition> {
    let min_use = p.max_use_len().map_or(0, |m| m + 1);
    for (x, bases) in bases(p) {
        let Some(rest) = need.checked_sub(x as usize + 3) else { break };
        if rest % 2 != 0 || rest / 2 < min_use {
            continue;
        }
        let l = rest / 2;
        for (base, forbidden) in &bases {
            if base.len() > l {
                continue;
            }
            let mut uses = Vec::new();
            admissible_uses(p, base, l, forbidden, 1, &mut uses);
            if let Some(u) = uses.pop() {
                return p.with_axiom(Axiom::new(u, x, false)).ok();
            }
        }
    }
    None
}

/// Extends to a valuation of length exactly `n`: shortest spine axioms while
/// at least two more fit, then one axiom of the exact remaining length, so
/// that uses stay short. `None` when `n` is not reached this way.
pub fn ks_pad_exact(p: &KSCondition, n: usize) -> Option<KSCondition> {
    let mut q = p.clone();
    let mut c = ks_valuation(p).len();
    let mut retries = 0;
    loop {
        let need = n.checked_sub(c)?;
        if need == 0 {
            return Some(q);
        }
        let (base, x) = spine(&q).ok()?;
        let l = least_spine_len(&q, &base);
        let next = block_len(l, x);
        if need < 2 * next + 5 {
            if let Some(r) = exact_single(&q, need) {
                debug_assert_eq!(ks_valuation(&r).len(), n);
                return Some(r);
            }
            retries += 1;
            if retries > 3 {
                return None;
            }
        }
        q = add_spine(&q, l).ok()?;
        c += next;
    }
}

/// Leaves of length `len` below `base` in lexicographic order, skipping
/// subtrees rooted at `forbidden` strings and protected initial segments.
fn admissible_uses(
    p: &KSCondition,
    base: &BitString,
    len: usize,
    forbidden: &BTreeSet<BitString>,
    limit: usize,
    out: &mut Vec<BitString>,
) {
    if out.len() >= limit || forbidden.contains(base) {
        return;
    }
    if base.len() == len {
        if !p.is_protected_prefix(base) {
            out.push(base.clone());
        }
        return;
    }
    for b in [false, true] {
        admissible_uses(p, &base.with_bit(b), len, forbidden, limit, out);
    }
}

/// For each input a new axiom may carry, the uses it may extend with the
/// uses it must not pass through: input 0 starts a fresh branch; input `x+1`
/// extends a use carrying `x`.
fn bases(p: &KSCondition) -> BTreeMap<u64, Vec<(BitString, BTreeSet<BitString>)>> {
    let mut bases: BTreeMap<u64, Vec<(BitString, BTreeSet<BitString>)>> = BTreeMap::new();
    let all_uses: BTreeSet<BitString> = p.functional.axioms().map(|a| a.use_.clone()).collect();
    bases.entry(0).or_default().push((BitString::empty(), all_uses.clone()));
    for a in p.functional.axioms() {
        let above: BTreeSet<BitString> =
            all_uses.iter().filter(|u| a.use_.is_proper_prefix_of(u)).cloned().collect();
        let entry = bases.entry(a.input + 1).or_default();
        if !entry.iter().any(|(b, _)| b == &a.use_) {
            entry.push((a.use_.clone(), above));
        }
    }
    for v in bases.values_mut() {
        v.sort();
    }
    bases
}

/// Calls `f` on single-axiom extensions of `p` (the new axiom and the
/// extended valuation) with valuation length at most `max_len`, in
/// (valuation length, lexicographic) order, taking at most `per_shape` uses
/// for each block shape with many free bits and at most `limit` candidates
/// overall.
fn walk_single_axiom<T>(
    p: &KSCondition,
    max_len: usize,
    per_shape: usize,
    limit: usize,
    mut f: impl FnMut(&Axiom, &BitString) -> Option<T>,
) -> Option<T> {
    let v = ks_valuation(p);
    let c = v.len();
    let min_use = p.max_use_len().map_or(0, |m| m + 1);
    let top = p.functional.max_input().map_or(0, |m| m + 1);
    let bases = bases(p);
    let mut seen = 0usize;
    for total in c + block_len(min_use, 0)..=max_len {
        let block = total - c;
        for l in min_use..=block.saturating_sub(3) / 2 {
            let x = (block - 3 - 2 * l) as u64;
            if x > top {
                continue;
            }
            for (base, forbidden) in bases.get(&x).into_iter().flatten() {
                if base.len() > l {
                    continue;
                }
                let shape = if l - base.len() <= EXHAUSTIVE_FREE_BITS { usize::MAX } else { per_shape };
                let mut uses = Vec::new();
                admissible_uses(p, base, l, forbidden, shape.min(limit - seen), &mut uses);
                for u in uses {
                    for y in [false, true] {
                        if seen >= limit {
                            return None;
                        }
                        seen += 1;
                        let a = Axiom::new(u.clone(), x, y);
                        if let Some(t) = f(&a, &v.concat(&axiom_block(&a))) {
                            return Some(t);
                        }
                    }
                }
            }
        }
    }
    None
}

/// Single-axiom extensions of `p` with valuation length at most `max_len`,
/// in (valuation length, lexicographic) order, at most `limit` of them.
pub fn single_axiom_extensions(p: &KSCondition, max_len: usize, limit: usize) -> Vec<KSCondition> {
    let mut out = Vec::new();
    walk_single_axiom(p, max_len, usize::MAX, limit, |a, _| {
        out.push(p.with_axiom(a.clone()).expect("admissible axiom"));
        None::<()>
    });
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct KumabeSlaman;

impl ForcingNotion for KumabeSlaman {
    type Condition = KSCondition;

    fn name(&self) -> &'static str {
        "ks"
    }

    fn root(&self) -> KSCondition {
        KSCondition::empty()
    }

    fn leq(&self, q: &KSCondition, p: &KSCondition) -> bool {
        ks_leq(q, p)
    }

    fn valuation(&self, p: &KSCondition) -> BitString {
        ks_valuation(p)
    }

    fn pad(&self, p: &KSCondition, n: usize) -> Result<KSCondition> {
        ks_pad(p, n)
    }

    fn code(&self, p: &KSCondition) -> BigUint {
        ks_code(p)
    }

    fn decode(&self, code: &BigUint) -> Option<KSCondition> {
        ks_decode(code)
    }

    /// Examines single-axiom extensions in (valuation length, lex) order,
    /// `USES_PER_SHAPE` uses per block shape and `SEARCH_CAP` in all.
    fn search_positive(
        &self,
        p: &KSCondition,
        e: u64,
        x: u64,
        family: &dyn EnumeratedFamily,
        budget: u64,
    ) -> Option<KSCondition> {
        if !family.may_output(e, x, budget, true) {
            return None;
        }
        let max_len = usize::try_from(budget).unwrap_or(usize::MAX);
        walk_single_axiom(p, max_len, USES_PER_SHAPE, SEARCH_CAP, |a, v| {
            (family.eval_at(e, v, x, budget) == Some(true)).then(|| a.clone())
        })
        .map(|a| p.with_axiom(a).expect("admissible axiom"))
    }
}

impl ProductFactor for KumabeSlaman {
    fn search_positive_joined(
        &self,
        left: &BitString,
        p: &KSCondition,
        e: u64,
        x: u64,
        family: &dyn EnumeratedFamily,
        budget: u64,
    ) -> Option<(BitString, KSCondition)> {
        if !family.may_output(e, x, budget, true) {
            return None;
        }
        let max_len = usize::try_from(budget).unwrap_or(usize::MAX);
        walk_single_axiom(p, max_len, USES_PER_SHAPE, SEARCH_CAP, |a, v| {
            let w = family.least_witness(e, left, v, x, v.len(), budget, Some(true))?;
            debug_assert_eq!(&w.right, v);
            Some((w.left, a.clone()))
        })
        .map(|(left, a)| (left, p.with_axiom(a).expect("admissible axiom")))
    }

    fn pad_exact(&self, p: &KSCondition, n: usize) -> Option<KSCondition> {
        ks_pad_exact(p, n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{Entry, Registry, CONSTANT_ONE, DIVERGENT, IDENTITY_EVEN};
    use crate::forcing::{forces_sigma1, one_decide, Product};
    use proptest::prelude::*;

    fn b(s: &str) -> BitString {
        BitString::parse(s).unwrap()
    }

    fn ax(u: &str, x: u64, y: bool) -> Axiom {
        Axiom::new(b(u), x, y)
    }

    fn cond(axioms: &[Axiom], protected: &[UltimatelyPeriodic]) -> KSCondition {
        KSCondition::new(FiniteFunctional::new(axioms.to_vec()).unwrap(), protected.to_vec()).unwrap()
    }

    #[test]
    fn paths() {
        let x = UltimatelyPeriodic::new(b("1"), b("01")).unwrap();
        assert_eq!(x.prefix(6), b("101010"));
        assert!(x.has_prefix(&b("1010")) && !x.has_prefix(&b("11")));
        assert!(UltimatelyPeriodic::new(b("1"), BitString::empty()).is_err());
        for k in 0..200 {
            assert_eq!(UltimatelyPeriodic::from_index(k).index(), k);
        }
    }

    #[test]
    fn blocks() {
        assert_eq!(axiom_block(&ax("", 0, true)), b("001"));
        assert_eq!(axiom_block(&ax("01", 2, false)), b("110011100"));
        let p = cond(&[ax("0", 0, true), ax("01", 1, false)], &[]);
        let v = ks_valuation(&p);
        assert_eq!(v, b("10001").concat(&b("11001100")));
        assert_eq!(decode_blocks(&v).unwrap(), p.functional().axioms().cloned().collect::<Vec<_>>());
        assert!(decode_blocks(&b("111")).is_none());
        assert!(KSCondition::new(FiniteFunctional::new(vec![ax("0", 1, true)]).unwrap(), []).is_err());
    }

    #[test]
    fn extension_clauses() {
        let zeros = UltimatelyPeriodic::constant(false);
        let p = cond(&[ax("1", 0, true)], std::slice::from_ref(&zeros));
        assert!(ks_leq(&p, &p));
        let q = p.with_axiom(ax("11", 1, false)).unwrap();
        assert!(ks_leq(&q, &p) && !ks_leq(&p, &q));
        // clause (a): same-length use
        let bad = cond(&[ax("1", 0, true), ax("0", 0, false)], std::slice::from_ref(&zeros));
        assert!(!ks_leq(&bad, &p));
        assert!(p.with_axiom(ax("0", 0, false)).is_err());
        // clause (b): prefix of the protected path
        let bad = cond(&[ax("1", 0, true), ax("00", 0, false)], std::slice::from_ref(&zeros));
        assert!(!ks_leq(&bad, &p));
        assert!(p.with_axiom(ax("00", 0, false)).is_err());
        // dropping a protected path is not an extension
        let bare = cond(&[ax("1", 0, true)], &[]);
        assert!(ks_leq(&p, &bare) && !ks_leq(&bare, &p));
    }

    #[test]
    fn padding_examples() {
        let q = ks_pad(&KSCondition::empty(), 1).unwrap();
        assert_eq!(q.functional().len(), 1);
        assert_eq!(ks_valuation(&q), b("000"));

        let zeros = UltimatelyPeriodic::constant(false);
        let p = KSCondition::empty().protecting([zeros.clone()]);
        let q = ks_pad(&p, 200).unwrap();
        assert!(ks_valuation(&q).len() >= 200);
        assert!(ks_leq(&q, &p));
        for a in q.functional().axioms() {
            assert!(a.use_.count_ones() > 0, "all-zero use {}", a.use_);
        }

        // one fresh input-0 block is odd, from 5; two of them are even, from 5+7
        for n in 0..80 {
            let reachable = n == 0 || (n % 2 == 1 && n >= 5) || (n % 2 == 0 && n >= 12);
            let q = ks_pad_exact(&p, n);
            assert_eq!(q.is_some(), reachable, "n={n}");
            if let Some(q) = q {
                assert_eq!(ks_valuation(&q).len(), n);
                assert!(ks_leq(&q, &p));
            }
        }
    }

    #[test]
    fn codes() {
        let p = cond(&[ax("0", 0, true), ax("01", 1, false)], &[UltimatelyPeriodic::constant(true)]);
        let code = ks_code(&p);
        assert_eq!(ks_decode(&code), Some(p));
        assert_eq!(ks_code(&KSCondition::empty()), BigUint::from(0u32));
        let decoded: Vec<_> = (0u32..2000).filter_map(|c| ks_decode(&BigUint::from(c))).collect();
        assert!(decoded.len() > 10);
        for p in decoded {
            assert_eq!(ks_decode(&ks_code(&p)).as_ref(), Some(&p));
        }
    }

    #[test]
    fn serde_roundtrip() {
        let p = cond(&[ax("0", 0, true)], &[UltimatelyPeriodic::new(b("1"), b("01")).unwrap()]);
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<KSCondition>(&s).unwrap(), p);
        let bad = r#"{"functional":[{"use":"0","input":1,"output":1}],"protected":[]}"#;
        assert!(serde_json::from_str::<KSCondition>(bad).is_err());
    }

    #[test]
    fn single_axiom_candidates_are_ordered_extensions() {
        let p = cond(&[ax("0", 0, true), ax("01", 1, false)], &[UltimatelyPeriodic::constant(true)]);
        let c = ks_valuation(&p).len();
        let all = single_axiom_extensions(&p, c + 14, usize::MAX);
        assert!(!all.is_empty());
        let mut last: Option<BitString> = None;
        for q in &all {
            assert!(ks_leq(q, &p));
            assert_eq!(q.functional().len(), p.functional().len() + 1);
            let v = ks_valuation(q);
            assert!(last.as_ref().is_none_or(|l| l < &v), "order");
            last = Some(v);
        }
        // brute force: every admissible single axiom within the length bound
        let mut expected = 0;
        for l in 3..=5usize {
            for u in BitString::all_of_length(l) {
                for x in 0..4u64 {
                    for y in [false, true] {
                        if c + block_len(l, x) <= c + 14 && p.with_axiom(Axiom::new(u.clone(), x, y)).is_ok() {
                            expected += 1;
                        }
                    }
                }
            }
        }
        assert_eq!(all.len(), expected);
    }

    #[test]
    fn decide_examples() {
        let r = Registry::default();
        let p = KSCondition::empty();
        assert_eq!(one_decide(&KumabeSlaman, &p, DIVERGENT, 0, &r, 64), (p.clone(), false));
        assert_eq!(one_decide(&KumabeSlaman, &p, CONSTANT_ONE, 0, &r, 64), (p.clone(), true));
        let (q, t) = one_decide(&KumabeSlaman, &p, IDENTITY_EVEN, 2, &r, 64);
        assert!(t && ks_leq(&q, &p));
        assert!(ks_valuation(&q).get(4));
    }

    #[test]
    fn lookup_table_keyed_on_a_block() {
        let p = cond(&[ax("1", 0, false)], &[UltimatelyPeriodic::constant(false)]);
        let target = p.with_axiom(ax("110", 1, true)).unwrap();
        let key = ks_valuation(&target);
        let r = Registry::default().with_table(FiniteFunctional::new(vec![Axiom::new(key.clone(), 3, true)]).unwrap());
        let e = r.entries().len() as u64 - 1;
        assert!(matches!(r.entry(e), Entry::Table { .. }));
        let (q, t) = one_decide(&KumabeSlaman, &p, e, 3, &r, 64);
        assert!(t);
        assert_eq!(q, target);
        assert_eq!(q.functional().difference(p.functional()).count(), 1);
        assert_eq!(crate::family::eval_family(&r, e, &ks_valuation(&q), 3, 64), Some(true));
    }

    #[test]
    fn product_with_ks() {
        let r = Registry::default();
        let pk = Product::new(KumabeSlaman);
        let root = pk.root();
        let p = pk.pad(&root, 10).unwrap();
        assert_eq!(p.left.len(), ks_valuation(&p.right).len());
        let x = p.left.len() as u64 + 1;
        assert!(!forces_sigma1(&pk, &p, IDENTITY_EVEN, x, &r, 64));
        let (q, t) = one_decide(&pk, &p, IDENTITY_EVEN, x, &r, 64);
        assert!(t && pk.leq(&q, &p));
        assert!(forces_sigma1(&pk, &q, IDENTITY_EVEN, x, &r, 64));
        assert!(q.left.get(x as usize));
        assert_eq!(q.left.len(), ks_valuation(&q.right).len());
    }

    #[derive(Clone, Debug)]
    enum Op {
        Protect(u64),
        Axiom(usize),
        Pad(usize),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (0u64..60).prop_map(Op::Protect),
            (0usize..40).prop_map(Op::Axiom),
            (0usize..40).prop_map(Op::Pad),
        ]
    }

    fn apply(p: &KSCondition, ops: &[Op]) -> KSCondition {
        let mut q = p.clone();
        for o in ops {
            q = match o {
                Op::Protect(k) => q.protecting([UltimatelyPeriodic::from_index(*k)]),
                Op::Axiom(i) => {
                    let len = ks_valuation(&q).len() + 16;
                    let c = single_axiom_extensions(&q, len, i + 1);
                    c.get(*i).or(c.last()).cloned().unwrap_or(q)
                }
                Op::Pad(n) => ks_pad(&q, ks_valuation(&q).len() + n).unwrap(),
            };
        }
        q
    }

    fn generated() -> impl Strategy<Value = KSCondition> {
        prop::collection::vec(op(), 0..6).prop_map(|ops| apply(&KSCondition::empty(), &ops))
    }

    fn clauses_hold(q: &KSCondition, p: &KSCondition) -> bool {
        q.functional().is_use_monotone()
            && q.functional().difference(p.functional()).all(|a| {
                p.functional().axioms().all(|old| a.use_.len() > old.use_.len())
                    && p.protected().iter().all(|x| !x.has_prefix(&a.use_))
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn order_laws(p in generated(), o1 in prop::collection::vec(op(), 0..4), o2 in prop::collection::vec(op(), 0..4), other in generated()) {
            let q = apply(&p, &o1);
            let r = apply(&q, &o2);
            prop_assert!(ks_leq(&p, &p));
            prop_assert!(ks_leq(&q, &p) && ks_leq(&r, &q) && ks_leq(&r, &p));
            for (x, y) in [(&p, &q), (&q, &r), (&p, &other), (&other, &q)] {
                if ks_leq(x, y) && ks_leq(y, x) {
                    prop_assert_eq!(ks_code(x), ks_code(y));
                }
                if ks_leq(x, y) {
                    prop_assert!(ks_valuation(y).is_prefix_of(&ks_valuation(x)));
                    prop_assert!(clauses_hold(x, y));
                }
            }
            prop_assert_eq!(ks_decode(&ks_code(&r)), Some(r.clone()));
        }

        #[test]
        fn padding_preserves_invariants(p in generated(), n in 0usize..64) {
            let q = ks_pad(&p, 64).unwrap();
            prop_assert!(ks_valuation(&q).len() >= 64);
            prop_assert!(ks_leq(&q, &p) && clauses_hold(&q, &p));
            let target = ks_valuation(&q).len() + n;
            if let Some(exact) = ks_pad_exact(&q, target) {
                prop_assert_eq!(ks_valuation(&exact).len(), target);
                prop_assert!(ks_leq(&exact, &q) && clauses_hold(&exact, &q));
            } else {
                prop_assert!(n < 2 * ks_valuation(&q).len());
            }
        }
    }
}
