//! Cohen forcing: conditions are strings, extension is `⪰`, and the
//! valuation is the identity.

use num_bigint::BigUint;

use crate::bits::{interleave, unjoin, BitString};
use crate::error::Result;
use crate::family::EnumeratedFamily;
use crate::forcing::{ForcingNotion, ProductFactor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Cohen;

impl ForcingNotion for Cohen {
    type Condition = BitString;

    fn name(&self) -> &'static str {
        "cohen"
    }

    fn root(&self) -> BitString {
        BitString::empty()
    }

    fn leq(&self, q: &BitString, p: &BitString) -> bool {
        p.is_prefix_of(q)
    }

    fn valuation(&self, p: &BitString) -> BitString {
        p.clone()
    }

    fn pad(&self, p: &BitString, n: usize) -> Result<BitString> {
        Ok(p.padded(n.max(p.len())))
    }

    fn code(&self, p: &BitString) -> BigUint {
        p.rank()
    }

    fn decode(&self, code: &BigUint) -> Option<BitString> {
        Some(BitString::unrank_big(code))
    }

    /// Reads `p` as `σ ⊕ τ` and re-joins the least pair from the convergence
    /// search that outputs 1, so `|q| ≤ budget` is even.
    fn search_positive(
        &self,
        p: &BitString,
        e: u64,
        x: u64,
        family: &dyn EnumeratedFamily,
        budget: u64,
    ) -> Option<BitString> {
        if !family.may_output(e, x, budget, true) {
            return None;
        }
        let (left, right) = unjoin(p);
        let max_len = usize::try_from(budget / 2).unwrap_or(usize::MAX);
        let w = family.least_witness(e, &left, &right, x, max_len, budget, Some(true))?;
        Some(interleave(&w.left, &w.right))
    }
}

impl ProductFactor for Cohen {
    fn search_positive_joined(
        &self,
        left: &BitString,
        p: &BitString,
        e: u64,
        x: u64,
        family: &dyn EnumeratedFamily,
        budget: u64,
    ) -> Option<(BitString, BitString)> {
        let max_len = usize::try_from(budget).unwrap_or(usize::MAX);
        let w = family.least_witness(e, left, p, x, max_len, budget, Some(true))?;
        Some((w.left, w.right))
    }

    fn pad_exact(&self, p: &BitString, n: usize) -> Option<BitString> {
        (n >= p.len()).then(|| p.padded(n))
    }
}
