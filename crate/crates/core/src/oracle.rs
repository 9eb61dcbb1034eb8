//! Budget-bounded answers to the convergence questions the constructions
//! put to the halting problem. Positive answers are sound; negative answers
//! hold only up to the budget.

use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::family::{EnumeratedFamily, Witness};

/// Is there `σ ⪰ left`, `τ ⪰ right`, `|σ| = |τ|`, with `Φ_e^{σ⊕τ}(x)↓`?
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvQuery {
    pub e: u64,
    pub left: BitString,
    pub right: BitString,
    pub x: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Converge(Witness),
    NoWithinBound,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub outcome: Outcome,
    pub budget: u64,
}

impl Verdict {
    pub fn witness(&self) -> Option<&Witness> {
        match &self.outcome {
            Outcome::Converge(w) => Some(w),
            Outcome::NoWithinBound => None,
        }
    }

    pub fn converged(&self) -> bool {
        self.witness().is_some()
    }
}

/// Searches equal-length extension pairs of length at most `budget`,
/// evaluating with stage bound `budget`, and returns the least convergent
/// pair in (length, lex left, lex right) order.
///
/// When the bases are already longer than `budget` no pair fits and the
/// answer is `NoWithinBound`.
pub fn decide_conv<F: EnumeratedFamily + ?Sized>(q: &ConvQuery, family: &F, budget: u64) -> Verdict {
    let max_len = usize::try_from(budget).unwrap_or(usize::MAX);
    let outcome = match family.least_witness(q.e, &q.left, &q.right, q.x, max_len, budget, None) {
        Some(w) => Outcome::Converge(w),
        None => Outcome::NoWithinBound,
    };
    Verdict { outcome, budget }
}

/// `decide_conv` at each budget of a strictly ascending list.
pub fn verdict_refinement<F: EnumeratedFamily + ?Sized>(q: &ConvQuery, family: &F, budgets: &[u64]) -> Vec<Verdict> {
    debug_assert!(budgets.windows(2).all(|w| w[0] < w[1]));
    budgets.iter().map(|&b| decide_conv(q, family, b)).collect()
}
