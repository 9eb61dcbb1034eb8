//! Enumerated families of functionals with stage-bounded evaluation, the
//! default hand-built registry, and the prefix-combining functional.
//!
//! A stage bound `s` admits exactly the axioms enumerated by stage `s`, and
//! every such axiom has `|use| ≤ s` and `input ≤ s`.

use serde::{Deserialize, Serialize};

use crate::bits::{interleave, BitString};
use crate::cylinder::{Cube, CubeSet};
use crate::error::{Error, Result};
use crate::functional::{bit_as_int, Axiom, FiniteFunctional};

/// Least equal-length extension pair on which a functional converges.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub left: BitString,
    pub right: BitString,
    #[serde(with = "bit_as_int")]
    pub value: bool,
}

pub trait EnumeratedFamily: Sync {
    /// Axioms of `Φ_e` enumerated by `stage`. Monotone in `stage`.
    fn axioms_at(&self, e: u64, stage: u64) -> FiniteFunctional;

    fn eval_at(&self, e: u64, oracle: &BitString, x: u64, stage: u64) -> Option<bool> {
        self.axioms_at(e, stage).eval(oracle, x)
    }

    /// Least pair `(σ, τ)` in (length, lex σ, lex τ) order with `σ ⪰ left`,
    /// `τ ⪰ right`, `|σ| = |τ| ≤ max_len` and `Φ_e^{σ⊕τ}(x)` convergent at
    /// `stage`, to `want` when given.
    #[allow(clippy::too_many_arguments)]
    fn least_witness(
        &self,
        e: u64,
        left: &BitString,
        right: &BitString,
        x: u64,
        max_len: usize,
        stage: u64,
        want: Option<bool>,
    ) -> Option<Witness> {
        least_witness_in(self.axioms_at(e, stage).axioms(), left, right, x, max_len, want)
    }

    /// Whether any axiom for input `x` can be enumerated by `stage`.
    fn may_converge(&self, e: u64, x: u64, stage: u64) -> bool {
        self.axioms_at(e, stage).axioms().any(|a| a.input == x)
    }

    /// Whether an axiom for input `x` with output `y` can be enumerated by `stage`.
    fn may_output(&self, e: u64, x: u64, stage: u64, y: bool) -> bool {
        self.axioms_at(e, stage).axioms().any(|a| a.input == x && a.output == y)
    }

    /// The strings `υ` with `|υ| = |left|` on which `Φ_e(left ⊕ υ)` at `stage`
    /// outputs `ρ(x)` for every `x < |ρ|`, as cubes over the positions of `υ`.
    fn accept_cubes(&self, e: u64, left: &BitString, rho: &BitString, stage: u64) -> CubeSet {
        accept_cubes_in(self.axioms_at(e, stage).axioms(), left, rho)
    }
}

/// `eval(axioms_at(e, budget), oracle, x)`.
pub fn eval_family<F: EnumeratedFamily + ?Sized>(
    family: &F,
    e: u64,
    oracle: &BitString,
    x: u64,
    budget: u64,
) -> Option<bool> {
    family.eval_at(e, oracle, x, budget)
}

/// Splits `right = 0^e 1 υ` into `(e, υ)`.
pub fn decode_index(right: &BitString) -> Option<(u64, BitString)> {
    let e = right.iter().position(|b| b)?;
    let rest = BitString::from_bits(right.iter().skip(e + 1));
    Some((e as u64, rest))
}

/// `Φ(left ⊕ 0^e 1 υ)(x) = Φ_e(left↾m ⊕ υ↾m)(x)` with
/// `m = min(|left| − (e+1), |υ|)`, clamped at zero.
pub fn eval_combined<F: EnumeratedFamily + ?Sized>(
    family: &F,
    left: &BitString,
    right: &BitString,
    x: u64,
    budget: u64,
) -> Result<Option<bool>> {
    if left.len() != right.len() {
        return Err(Error::LengthMismatch { left: left.len(), right: right.len() });
    }
    let Some((e, rest)) = decode_index(right) else { return Ok(None) };
    let m = left.len().saturating_sub(e as usize + 1).min(rest.len());
    let oracle = interleave(&left.prefix(m), &rest.prefix(m));
    Ok(family.eval_at(e, &oracle, x, budget))
}

/// Generic least-witness search over an explicit axiom list.
///
/// Each axiom fixes some bits of `σ` (even use positions) and `τ` (odd use
/// positions); unfixed bits are taken as 0, which is lexicographically least.
pub fn least_witness_in<'a, I: IntoIterator<Item = &'a Axiom>>(
    axioms: I,
    left: &BitString,
    right: &BitString,
    x: u64,
    max_len: usize,
    want: Option<bool>,
) -> Option<Witness> {
    let base = left.len().max(right.len());
    let mut candidates: Vec<(&Axiom, usize)> = Vec::new();
    for a in axioms {
        if a.input != x || want.is_some_and(|y| y != a.output) || !use_compatible(&a.use_, left, right) {
            continue;
        }
        let n = base.max(a.use_.len().div_ceil(2));
        if n <= max_len {
            candidates.push((a, n));
        }
    }
    let n = candidates.iter().map(|&(_, n)| n).min()?;
    candidates.retain(|&(_, k)| k == n);

    let forced = |a: &Axiom, parity: usize, base: &BitString| {
        let mut s = base.padded(n);
        for k in (parity..a.use_.len()).step_by(2) {
            s.set(k / 2, a.use_.get(k));
        }
        s
    };
    let sigma = candidates.iter().map(|(a, _)| forced(a, 0, left)).min()?;
    let (tau, value) = candidates
        .iter()
        .filter(|(a, _)| (0..a.use_.len()).step_by(2).all(|k| sigma.get(k / 2) == a.use_.get(k)))
        .map(|(a, _)| (forced(a, 1, right), a.output))
        .min()?;
    Some(Witness { left: sigma, right: tau, value })
}

/// [`EnumeratedFamily::accept_cubes`] over an explicit axiom list.
pub fn accept_cubes_in<'a, I: IntoIterator<Item = &'a Axiom>>(axioms: I, left: &BitString, rho: &BitString) -> CubeSet {
    let k = left.len();
    let axioms: Vec<&Axiom> = axioms.into_iter().filter(|a| a.use_.len() <= 2 * k).collect();
    let mut acc = CubeSet::full();
    for (x, y) in rho.iter().enumerate() {
        let hits = axioms
            .iter()
            .filter(|a| a.input == x as u64 && a.output == y)
            .filter(|a| (0..a.use_.len()).step_by(2).all(|p| a.use_.get(p) == left.get(p / 2)))
            .map(|a| {
                let odd = (1..a.use_.len()).step_by(2).map(|p| a.use_.get(p));
                Cube::cylinder(&BitString::from_bits(odd))
            });
        acc = acc.intersect(&CubeSet::from_cubes(hits));
        if acc.is_empty() {
            break;
        }
    }
    acc
}

fn use_compatible(use_: &BitString, left: &BitString, right: &BitString) -> bool {
    use_.iter().enumerate().all(|(k, b)| {
        let side = if k % 2 == 0 { left } else { right };
        side.bit(k / 2).is_none_or(|c| c == b)
    })
}

/// One registry entry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Entry {
    /// `Φ(X ⊕ Y)(x) = X(x)`: oracle bit `2x`, use `2x+1`.
    IdentityEven,
    /// `Φ(X ⊕ Y)(x) = Y(x)`: oracle bit `2x+1`, use `2x+2`.
    IdentityOdd,
    /// Constant output on the empty use.
    Constant {
        #[serde(with = "bit_as_int")]
        value: bool,
    },
    /// Parity of the oracle prefix of length `x+1`.
    Parity,
    Divergent,
    /// Oracle bit `8x+7`, use `8(x+1)`.
    LargeUse,
    /// A fixed axiom set, each axiom enumerated once its use and input fit the stage.
    Table { axioms: FiniteFunctional },
    /// The inner entry enumerated `delay` stages late.
    Delayed { delay: u64, inner: Box<Entry> },
}

impl Entry {
    /// Use length for input `x` of entries converging on every long enough oracle.
    fn total_use(&self, x: u64) -> Option<u64> {
        match self {
            Entry::IdentityEven => Some(2 * x + 1),
            Entry::IdentityOdd => Some(2 * x + 2),
            Entry::Constant { .. } => Some(0),
            Entry::Parity => Some(x + 1),
            Entry::LargeUse => Some(8 * (x + 1)),
            _ => None,
        }
    }

    fn total_output(&self, oracle: &BitString, x: u64) -> bool {
        match self {
            Entry::IdentityEven => oracle.get(2 * x as usize),
            Entry::IdentityOdd => oracle.get(2 * x as usize + 1),
            Entry::Constant { value } => *value,
            Entry::Parity => oracle.iter().take(x as usize + 1).filter(|&b| b).count() % 2 == 1,
            Entry::LargeUse => oracle.get(8 * x as usize + 7),
            _ => unreachable!("not a total entry"),
        }
    }

    /// Materializes the axioms; exponential in `stage` for oracle-reading entries.
    pub fn axioms_at(&self, stage: u64) -> FiniteFunctional {
        match self {
            Entry::Divergent => FiniteFunctional::empty(),
            Entry::Table { axioms } => FiniteFunctional::from_trusted(
                axioms
                    .axioms()
                    .filter(|a| a.use_.len() as u64 <= stage && a.input <= stage)
                    .cloned()
                    .collect(),
            ),
            Entry::Delayed { delay, inner } => match stage.checked_sub(*delay) {
                Some(s) => inner.axioms_at(s),
                None => FiniteFunctional::empty(),
            },
            _ => {
                let mut out = std::collections::BTreeSet::new();
                for x in 0..=stage {
                    let u = self.total_use(x).expect("total entry");
                    if u > stage {
                        continue;
                    }
                    for sigma in BitString::all_of_length(u as usize) {
                        let y = self.total_output(&sigma, x);
                        out.insert(Axiom::new(sigma, x, y));
                    }
                }
                FiniteFunctional::from_trusted(out)
            }
        }
    }

    pub fn eval_at(&self, oracle: &BitString, x: u64, stage: u64) -> Option<bool> {
        match self {
            Entry::Divergent => None,
            Entry::Table { axioms } => axioms
                .axioms()
                .take_while(|a| a.use_.len() as u64 <= stage)
                .find(|a| a.input == x && x <= stage && a.use_.is_prefix_of(oracle))
                .map(|a| a.output),
            Entry::Delayed { delay, inner } => inner.eval_at(oracle, x, stage.checked_sub(*delay)?),
            _ => {
                let u = self.total_use(x)?;
                (x <= stage && u <= stage && u <= oracle.len() as u64).then(|| self.total_output(oracle, x))
            }
        }
    }

    pub fn may_converge(&self, x: u64, stage: u64) -> bool {
        match self {
            Entry::Divergent => false,
            Entry::Table { axioms } => {
                x <= stage && axioms.axioms().any(|a| a.input == x && a.use_.len() as u64 <= stage)
            }
            Entry::Delayed { delay, inner } => stage.checked_sub(*delay).is_some_and(|s| inner.may_converge(x, s)),
            _ => x <= stage && self.total_use(x).is_some_and(|u| u <= stage),
        }
    }

    pub fn may_output(&self, x: u64, stage: u64, y: bool) -> bool {
        match self {
            Entry::Constant { value } => *value == y && self.may_converge(x, stage),
            Entry::Table { axioms } => {
                x <= stage
                    && axioms.axioms().any(|a| a.input == x && a.output == y && a.use_.len() as u64 <= stage)
            }
            Entry::Delayed { delay, inner } => stage.checked_sub(*delay).is_some_and(|s| inner.may_output(x, s, y)),
            _ => self.may_converge(x, stage),
        }
    }

    pub fn accept_cubes(&self, left: &BitString, rho: &BitString, stage: u64) -> CubeSet {
        if rho.is_empty() {
            return CubeSet::full();
        }
        match self {
            Entry::Divergent => CubeSet::empty(),
            Entry::Table { .. } => accept_cubes_in(self.axioms_at(stage).axioms(), left, rho),
            Entry::Delayed { delay, inner } => match stage.checked_sub(*delay) {
                Some(s) => inner.accept_cubes(left, rho, s),
                None => CubeSet::empty(),
            },
            _ => {
                let n = rho.len() as u64;
                let max_use = stage.min(2 * left.len() as u64);
                if n - 1 > stage || (0..n).any(|x| self.total_use(x).is_none_or(|u| u > max_use)) {
                    return CubeSet::empty();
                }
                // oracle positions pinned by the outputs ρ(0), …, ρ(n−1)
                let pinned: Vec<(usize, bool)> = match self {
                    Entry::Constant { value } => {
                        if rho.iter().any(|b| b != *value) {
                            return CubeSet::empty();
                        }
                        Vec::new()
                    }
                    Entry::IdentityEven => rho.iter().enumerate().map(|(x, b)| (2 * x, b)).collect(),
                    Entry::IdentityOdd => rho.iter().enumerate().map(|(x, b)| (2 * x + 1, b)).collect(),
                    Entry::LargeUse => rho.iter().enumerate().map(|(x, b)| (8 * x + 7, b)).collect(),
                    Entry::Parity => (0..rho.len())
                        .map(|p| (p, rho.get(p) ^ (p > 0 && rho.get(p - 1))))
                        .collect(),
                    _ => unreachable!("not a total entry"),
                };
                let mut cube = Cube::full();
                for (p, b) in pinned {
                    if p % 2 == 0 {
                        if left.get(p / 2) != b {
                            return CubeSet::empty();
                        }
                    } else {
                        cube = cube.with(p / 2, b).expect("distinct positions");
                    }
                }
                CubeSet::from_cubes([cube])
            }
        }
    }

    pub fn least_witness(
        &self,
        left: &BitString,
        right: &BitString,
        x: u64,
        max_len: usize,
        stage: u64,
        want: Option<bool>,
    ) -> Option<Witness> {
        match self {
            Entry::Divergent => None,
            Entry::Table { .. } => least_witness_in(self.axioms_at(stage).axioms(), left, right, x, max_len, want),
            Entry::Delayed { delay, inner } => {
                inner.least_witness(left, right, x, max_len, stage.checked_sub(*delay)?, want)
            }
            _ => {
                if !self.may_converge(x, stage) {
                    return None;
                }
                let u = self.total_use(x)?;
                let n = left.len().max(right.len()).max(u.div_ceil(2) as usize);
                if n > max_len {
                    return None;
                }
                let (mut sigma, mut tau) = (left.padded(n), right.padded(n));
                let value = self.total_output(&interleave(&sigma, &tau), x);
                if let Some(y) = want.filter(|&y| y != value) {
                    // flip the rightmost free oracle bit the output depends on,
                    // preferring the right side so the left stays least
                    let positions: Vec<usize> = match self {
                        Entry::IdentityEven => vec![2 * x as usize],
                        Entry::IdentityOdd => vec![2 * x as usize + 1],
                        Entry::LargeUse => vec![8 * x as usize + 7],
                        Entry::Parity => (0..=x as usize).collect(),
                        _ => Vec::new(),
                    };
                    let free = |k: &usize| {
                        if k.is_multiple_of(2) {
                            k / 2 >= left.len()
                        } else {
                            k / 2 >= right.len()
                        }
                    };
                    let k = positions
                        .iter()
                        .rev()
                        .find(|&k| k % 2 == 1 && free(k))
                        .or_else(|| positions.iter().rev().find(|&k| k % 2 == 0 && free(k)))?;
                    if k % 2 == 0 {
                        sigma.set(k / 2, true);
                    } else {
                        tau.set(k / 2, true);
                    }
                    debug_assert_eq!(self.total_output(&interleave(&sigma, &tau), x), y);
                    return Some(Witness { left: sigma, right: tau, value: y });
                }
                Some(Witness { left: sigma, right: tau, value })
            }
        }
    }
}

/// A finite list of entries, padded to every index by the divergent functional.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<EntryRepr>", into = "Vec<Entry>")]
pub struct Registry {
    entries: Vec<Entry>,
}

/// Registry files accept either a tagged entry or a bare list of axioms.
#[derive(Deserialize)]
#[serde(untagged)]
enum EntryRepr {
    Axioms(FiniteFunctional),
    Tagged(Entry),
}

impl TryFrom<Vec<EntryRepr>> for Registry {
    type Error = Error;
    fn try_from(v: Vec<EntryRepr>) -> Result<Self> {
        let entries = v
            .into_iter()
            .map(|r| match r {
                EntryRepr::Axioms(axioms) => Entry::Table { axioms },
                EntryRepr::Tagged(e) => e,
            })
            .collect();
        Ok(Self { entries })
    }
}

impl From<Registry> for Vec<Entry> {
    fn from(r: Registry) -> Self {
        r.entries
    }
}

pub const IDENTITY_EVEN: u64 = 0;
pub const IDENTITY_ODD: u64 = 1;
pub const CONSTANT_ZERO: u64 = 2;
pub const CONSTANT_ONE: u64 = 3;
pub const PARITY: u64 = 4;
pub const DIVERGENT: u64 = 5;
pub const LARGE_USE: u64 = 6;
pub const TABLE: u64 = 7;

impl Default for Registry {
    fn default() -> Self {
        let table = FiniteFunctional::new([
            Axiom::new(BitString::parse("01").unwrap(), 0, true),
            Axiom::new(BitString::parse("10").unwrap(), 0, false),
        ])
        .expect("single-valued");
        Self::new(vec![
            Entry::IdentityEven,
            Entry::IdentityOdd,
            Entry::Constant { value: false },
            Entry::Constant { value: true },
            Entry::Parity,
            Entry::Divergent,
            Entry::LargeUse,
            Entry::Table { axioms: table },
        ])
    }
}

impl Registry {
    pub fn new(entries: Vec<Entry>) -> Self {
        Self { entries }
    }

    /// A registry in which every index diverges.
    pub fn divergent() -> Self {
        Self::new(Vec::new())
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn entry(&self, e: u64) -> &Entry {
        usize::try_from(e).ok().and_then(|k| self.entries.get(k)).unwrap_or(&Entry::Divergent)
    }

    /// Replaces the lookup-table entry, appending one if absent.
    pub fn with_table(mut self, axioms: FiniteFunctional) -> Self {
        let k = TABLE as usize;
        if self.entries.len() <= k {
            self.entries.resize(k + 1, Entry::Divergent);
        }
        self.entries[k] = Entry::Table { axioms };
        self
    }

    /// Every entry enumerated `delay` stages late: negative answers given
    /// below the delay turn positive above it.
    pub fn delayed(&self, delay: u64) -> Self {
        Self::new(
            self.entries
                .iter()
                .map(|e| Entry::Delayed { delay, inner: Box::new(e.clone()) })
                .collect(),
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl EnumeratedFamily for Registry {
    fn axioms_at(&self, e: u64, stage: u64) -> FiniteFunctional {
        self.entry(e).axioms_at(stage)
    }

    fn eval_at(&self, e: u64, oracle: &BitString, x: u64, stage: u64) -> Option<bool> {
        self.entry(e).eval_at(oracle, x, stage)
    }

    fn least_witness(
        &self,
        e: u64,
        left: &BitString,
        right: &BitString,
        x: u64,
        max_len: usize,
        stage: u64,
        want: Option<bool>,
    ) -> Option<Witness> {
        self.entry(e).least_witness(left, right, x, max_len, stage, want)
    }

    fn may_converge(&self, e: u64, x: u64, stage: u64) -> bool {
        self.entry(e).may_converge(x, stage)
    }

    fn may_output(&self, e: u64, x: u64, stage: u64, y: bool) -> bool {
        self.entry(e).may_output(x, stage, y)
    }

    fn accept_cubes(&self, e: u64, left: &BitString, rho: &BitString, stage: u64) -> CubeSet {
        self.entry(e).accept_cubes(left, rho, stage)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(s: &str) -> BitString {
        BitString::parse(s).unwrap()
    }

    /// Evaluation through the materialized axiom set only.
    struct Materialized<'a>(&'a Registry);

    impl EnumeratedFamily for Materialized<'_> {
        fn axioms_at(&self, e: u64, stage: u64) -> FiniteFunctional {
            self.0.axioms_at(e, stage)
        }
    }

    #[test]
    fn identity_examples() {
        let r = Registry::default();
        assert_eq!(eval_family(&r, IDENTITY_EVEN, &b("10"), 0, 4), Some(true));
        assert_eq!(eval_family(&r, IDENTITY_EVEN, &b("0110"), 1, 4), Some(true));
        for e in 0..10 {
            if !matches!(r.entry(e), Entry::Constant { .. }) {
                assert_eq!(eval_family(&r, e, &b("0110"), 0, 0), None, "e={e}");
            }
        }
    }

    #[test]
    fn combined_routing() {
        let r = Registry::default();
        let left = b("1011");
        assert_eq!(eval_combined(&r, &left, &b("0000"), 0, 8).unwrap(), None);
        // right = 1υ routes to e = 0 on left↾3 ⊕ υ
        assert_eq!(eval_combined(&r, &left, &b("1000"), 0, 8).unwrap(), Some(true));
        // right = 01υ routes to e = 1, which reads υ(0)
        assert_eq!(eval_combined(&r, &left, &b("0110"), 0, 8).unwrap(), Some(true));
        assert_eq!(eval_combined(&r, &left, &b("0100"), 0, 8).unwrap(), Some(false));
        assert!(matches!(eval_combined(&r, &left, &b("01"), 0, 8), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn family_contract_holds_for_default_registry() {
        let r = Registry::default();
        for e in 0..9 {
            let mut prev = FiniteFunctional::empty();
            for s in 0..10 {
                let cur = r.axioms_at(e, s);
                assert!(prev.is_subset(&cur), "e={e} s={s}");
                assert!(cur.axioms().all(|a| a.use_.len() as u64 <= s && a.input <= s));
                prev = cur;
            }
        }
    }

    #[test]
    fn closed_form_eval_matches_materialized_axioms() {
        let r = Registry::default();
        let m = Materialized(&r);
        for e in 0..9 {
            for s in 0..9 {
                for len in 0..=8 {
                    for oracle in BitString::all_of_length(len) {
                        for x in 0..5 {
                            assert_eq!(r.eval_at(e, &oracle, x, s), m.eval_at(e, &oracle, x, s));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn combined_matches_truncated_join_exhaustively() {
        let r = Registry::default();
        for len in 0..=8 {
            for left in BitString::all_of_length(len) {
                for right in BitString::all_of_length(len) {
                    let Some(e) = right.iter().position(|b| b) else {
                        assert_eq!(eval_combined(&r, &left, &right, 0, 16).unwrap(), None);
                        continue;
                    };
                    let m = len - e - 1;
                    let mut oracle = Vec::new();
                    for (k, y) in right.iter().skip(e + 1).take(m).enumerate() {
                        oracle.push(left.get(k));
                        oracle.push(y);
                    }
                    let oracle = BitString::from_bits(oracle);
                    for x in 0..3 {
                        assert_eq!(
                            eval_combined(&r, &left, &right, x, 16).unwrap(),
                            eval_family(&r, e as u64, &oracle, x, 16)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn registry_json_roundtrip_and_bare_axiom_lists() {
        let r = Registry::default().delayed(3);
        let back = Registry::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        let text = r#"[[{"use":"0","input":0,"output":1}], {"kind":"parity"}]"#;
        let parsed = Registry::from_json(text).unwrap();
        assert_eq!(parsed.eval_at(0, &b("01"), 0, 4), Some(true));
        assert_eq!(parsed.eval_at(1, &b("11"), 1, 4), Some(false));
        assert!(Registry::from_json(r#"[[{"use":"0","input":0,"output":1},{"use":"01","input":0,"output":0}]]"#).is_err());
    }

    #[test]
    fn delayed_entries_shift_stages() {
        let r = Registry::default().delayed(5);
        assert_eq!(r.eval_at(CONSTANT_ONE, &b(""), 0, 4), None);
        assert_eq!(r.eval_at(CONSTANT_ONE, &b(""), 0, 5), Some(true));
    }

    fn small_oracle() -> impl Strategy<Value = BitString> {
        prop::collection::vec(any::<bool>(), 0..10).prop_map(BitString::from_bits)
    }

    proptest! {
        #[test]
        fn evaluation_persists(e in 0u64..9, o in small_oracle(), ext in small_oracle(), x in 0u64..4, s in 0u64..12, ds in 0u64..6) {
            let r = Registry::default();
            if let Some(y) = eval_family(&r, e, &o, x, s) {
                prop_assert_eq!(eval_family(&r, e, &o.concat(&ext), x, s + ds), Some(y));
            }
        }

        #[test]
        fn closed_form_witness_matches_generic_search(
            e in 0u64..9, l in small_oracle(), r0 in small_oracle(), x in 0u64..4, stage in 0u64..10, max_len in 0usize..12,
            want in prop::option::of(any::<bool>()),
        ) {
            let r = Registry::default();
            let m = Materialized(&r);
            prop_assert_eq!(
                r.least_witness(e, &l, &r0, x, max_len, stage, want),
                m.least_witness(e, &l, &r0, x, max_len, stage, want)
            );
            prop_assert_eq!(r.may_converge(e, x, stage), m.may_converge(e, x, stage));
            for y in [false, true] {
                prop_assert_eq!(r.may_output(e, x, stage, y), m.may_output(e, x, stage, y));
            }
        }

        #[test]
        fn closed_form_accept_sets_match_axioms(
            e in 0u64..9, left in prop::collection::vec(any::<bool>(), 0..6), rho in prop::collection::vec(any::<bool>(), 0..4), stage in 0u64..12,
        ) {
            let r = Registry::default();
            let left = BitString::from_bits(left);
            let rho = BitString::from_bits(rho);
            let closed = r.accept_cubes(e, &left, &rho, stage);
            prop_assert_eq!(closed.measure::<u64>(), Materialized(&r).accept_cubes(e, &left, &rho, stage).measure());
            for y in BitString::all_of_length(left.len()) {
                let oracle = interleave(&left, &y);
                let accepted = rho.iter().enumerate().all(|(x, b)| eval_family(&r, e, &oracle, x as u64, stage) == Some(b));
                prop_assert_eq!(closed.contains(&y), accepted);
            }
        }
    }
}
