//! Finite Turing functionals presented as sets of axioms `⟨σ, x, y⟩`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};

/// `⟨σ, x, y⟩`: with oracle prefix `σ`, on input `x`, output `y`.
///
/// The derived order is by use (length-lexicographic), then input, then
/// output, which is the serialization order of valuation blocks.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Axiom {
    #[serde(rename = "use")]
    pub use_: BitString,
    pub input: u64,
    #[serde(with = "bit_as_int")]
    pub output: bool,
}

impl Axiom {
    pub fn new(use_: BitString, input: u64, output: bool) -> Self {
        Self { use_, input, output }
    }

    pub fn parse(use_: &str, input: u64, output: u8) -> Result<Self> {
        if output > 1 {
            return Err(Error::MalformedFunctional(format!("output {output} is not a bit")));
        }
        Ok(Self::new(BitString::parse(use_)?, input, output == 1))
    }
}

pub(crate) mod bit_as_int {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(*b as u8)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        use serde::de::Error as _;
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(D::Error::custom(format!("expected a bit, got {other}"))),
        }
    }
}

/// A finite, single-valued set of axioms.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Axiom>", into = "Vec<Axiom>")]
pub struct FiniteFunctional {
    axioms: BTreeSet<Axiom>,
}

impl FiniteFunctional {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a functional, rejecting axiom sets that are not single-valued.
    pub fn new<I: IntoIterator<Item = Axiom>>(axioms: I) -> Result<Self> {
        let f = Self { axioms: axioms.into_iter().collect() };
        f.check_single_valued()?;
        Ok(f)
    }

    pub(crate) fn from_trusted(axioms: BTreeSet<Axiom>) -> Self {
        debug_assert!(Self { axioms: axioms.clone() }.check_single_valued().is_ok());
        Self { axioms }
    }

    pub fn axioms(&self) -> impl Iterator<Item = &Axiom> {
        self.axioms.iter()
    }

    pub fn len(&self) -> usize {
        self.axioms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.axioms.is_empty()
    }

    pub fn contains(&self, axiom: &Axiom) -> bool {
        self.axioms.contains(axiom)
    }

    pub fn is_subset(&self, other: &FiniteFunctional) -> bool {
        self.axioms.is_subset(&other.axioms)
    }

    /// Axioms of `self` not in `base`.
    pub fn difference<'a>(&'a self, base: &'a FiniteFunctional) -> impl Iterator<Item = &'a Axiom> {
        self.axioms.difference(&base.axioms)
    }

    /// Adds an axiom, re-checking single-valuedness.
    pub fn with_axiom(&self, axiom: Axiom) -> Result<Self> {
        let mut axioms = self.axioms.clone();
        axioms.insert(axiom);
        Self::new(axioms)
    }

    pub fn max_use_len(&self) -> Option<usize> {
        self.axioms.iter().map(|a| a.use_.len()).max()
    }

    pub fn max_input(&self) -> Option<u64> {
        self.axioms.iter().map(|a| a.input).max()
    }

    pub fn check_single_valued(&self) -> Result<()> {
        let mut by_input: BTreeMap<u64, Vec<&Axiom>> = BTreeMap::new();
        for a in &self.axioms {
            by_input.entry(a.input).or_default().push(a);
        }
        for group in by_input.values() {
            for (k, a) in group.iter().enumerate() {
                for b in &group[k + 1..] {
                    if a.output != b.output && a.use_.compatible(&b.use_) {
                        return Err(Error::MalformedFunctional(format!(
                            "axioms ⟨{},{},{}⟩ and ⟨{},{},{}⟩ disagree on comparable uses",
                            a.use_, a.input, a.output as u8, b.use_, b.input, b.output as u8
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// `Φ^oracle(x)`: the output of any axiom for `x` whose use is a prefix of
    /// the oracle, `None` when there is none.
    pub fn eval(&self, oracle: &BitString, x: u64) -> Option<bool> {
        self.axioms
            .iter()
            .take_while(|a| a.use_.len() <= oracle.len())
            .find(|a| a.input == x && a.use_.is_prefix_of(oracle))
            .map(|a| a.output)
    }

    /// Both use-monotonicity clauses:
    /// (1) a use strictly below another carries a smaller input;
    /// (2) every input below an axiom's input is computed on a use below it.
    pub fn is_use_monotone(&self) -> bool {
        let mut inputs_by_use: BTreeMap<&BitString, BTreeSet<u64>> = BTreeMap::new();
        for a in &self.axioms {
            inputs_by_use.entry(&a.use_).or_default().insert(a.input);
        }
        for a in &self.axioms {
            let mut below: BTreeSet<u64> = BTreeSet::new();
            for l in 0..=a.use_.len() {
                let p = a.use_.prefix(l);
                if let Some(inputs) = inputs_by_use.get(&p) {
                    if l < a.use_.len() && inputs.iter().any(|&x| x >= a.input) {
                        return false;
                    }
                    below.extend(inputs.iter().copied().filter(|&x| x < a.input));
                }
            }
            if below.len() as u64 != a.input {
                return false;
            }
        }
        true
    }
}

impl TryFrom<Vec<Axiom>> for FiniteFunctional {
    type Error = Error;
    fn try_from(v: Vec<Axiom>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<FiniteFunctional> for Vec<Axiom> {
    fn from(f: FiniteFunctional) -> Self {
        f.axioms.into_iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn f(axioms: &[(&str, u64, u8)]) -> FiniteFunctional {
        FiniteFunctional::new(axioms.iter().map(|&(u, x, y)| Axiom::parse(u, x, y).unwrap())).unwrap()
    }

    fn b(s: &str) -> BitString {
        BitString::parse(s).unwrap()
    }

    #[test]
    fn eval_examples() {
        assert_eq!(FiniteFunctional::empty().eval(&b("0101"), 3), None);
        let phi = f(&[("0", 0, 1)]);
        assert_eq!(phi.eval(&b("01"), 0), Some(true));
        assert_eq!(phi.eval(&b("1"), 0), None);
        assert_eq!(phi.eval(&b(""), 0), None);
    }

    #[test]
    fn single_valuedness_is_enforced() {
        let bad = FiniteFunctional::new([Axiom::parse("0", 0, 1).unwrap(), Axiom::parse("01", 0, 0).unwrap()]);
        assert!(matches!(bad, Err(Error::MalformedFunctional(_))));
        // incomparable uses may disagree
        assert!(FiniteFunctional::new([Axiom::parse("0", 0, 1).unwrap(), Axiom::parse("1", 0, 0).unwrap()]).is_ok());
    }

    #[test]
    fn use_monotone_examples() {
        assert!(FiniteFunctional::empty().is_use_monotone());
        assert!(f(&[("0", 0, 1), ("00", 1, 0)]).is_use_monotone());
        assert!(!f(&[("0", 1, 1), ("01", 0, 0)]).is_use_monotone());
        assert!(!f(&[("00", 1, 0)]).is_use_monotone());
        // equal uses may carry several inputs
        assert!(f(&[("1", 0, 0), ("1", 1, 1)]).is_use_monotone());
    }

    /// Literal pairwise reading of the two clauses.
    fn use_monotone_oracle(axioms: &[Axiom]) -> bool {
        let clause1 = axioms.iter().all(|a| {
            axioms
                .iter()
                .all(|b| !b.use_.is_proper_prefix_of(&a.use_) || b.input < a.input)
        });
        let clause2 = axioms.iter().all(|a| {
            (0..a.input).all(|x| axioms.iter().any(|b| b.input == x && b.use_.is_prefix_of(&a.use_)))
        });
        clause1 && clause2
    }

    #[test]
    fn use_monotone_agrees_with_pairwise_oracle_exhaustively() {
        let uses = ["", "0", "1", "00", "01", "11"];
        let universe: Vec<Axiom> = uses
            .iter()
            .flat_map(|u| (0..3).map(move |x| Axiom::parse(u, x, (x % 2) as u8).unwrap()))
            .collect();
        let n = universe.len();
        let mut checked = 0usize;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() > 8 {
                continue;
            }
            let chosen: Vec<Axiom> = (0..n).filter(|k| mask >> k & 1 == 1).map(|k| universe[k].clone()).collect();
            let Ok(phi) = FiniteFunctional::new(chosen.clone()) else { continue };
            assert_eq!(phi.is_use_monotone(), use_monotone_oracle(&chosen), "{chosen:?}");
            checked += 1;
        }
        assert!(checked > 100_000);
    }

    proptest! {
        #[test]
        fn evaluation_persists_under_extension(
            axioms in prop::collection::vec((prop::collection::vec(any::<bool>(), 0..4), 0u64..3, any::<bool>()), 0..8),
            oracle in prop::collection::vec(any::<bool>(), 0..6),
            tail in prop::collection::vec(any::<bool>(), 0..4),
            x in 0u64..3,
        ) {
            let axioms: Vec<Axiom> = axioms.into_iter().map(|(u, x, y)| Axiom::new(BitString::from_bits(u), x, y)).collect();
            let Ok(phi) = FiniteFunctional::new(axioms) else { return Ok(()) };
            let o = BitString::from_bits(oracle);
            if let Some(y) = phi.eval(&o, x) {
                let ext = o.concat(&BitString::from_bits(tail));
                prop_assert_eq!(phi.eval(&ext, x), Some(y));
            }
        }
    }
}
