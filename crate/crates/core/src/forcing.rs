//! Notions of forcing `(P, ≤, V)`, products with Cohen forcing, forcing of
//! the sentences `Φ_e(Ġ)(x)↓ = 1`, bounded 1-decidability, filter chains and
//! dense families.

use std::collections::BTreeMap;
use std::fmt::Debug;

use num_bigint::BigUint;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bits::{interleave, BitString};
use crate::error::{Error, Result};
use crate::family::EnumeratedFamily;
use crate::pairing::{pair_big, unpair_big};

pub trait ForcingNotion: Sync {
    type Condition: Clone + Debug + PartialEq + Eq + Serialize + DeserializeOwned + Send + Sync;

    fn name(&self) -> &'static str;

    /// The weakest condition; its valuation is empty.
    fn root(&self) -> Self::Condition;

    /// `q ≤ p`: `q` extends `p`.
    fn leq(&self, q: &Self::Condition, p: &Self::Condition) -> bool;

    fn valuation(&self, p: &Self::Condition) -> BitString;

    /// Some `q ≤ p` with `|V(q)| ≥ n`.
    fn pad(&self, p: &Self::Condition, n: usize) -> Result<Self::Condition>;

    fn code(&self, p: &Self::Condition) -> BigUint;

    /// Inverse of `code`; `None` for codes naming no condition.
    fn decode(&self, code: &BigUint) -> Option<Self::Condition>;

    /// The first `q ≤ p` in the notion's search order with `|V(q)| ≤ budget`
    /// whose valuation makes `Φ_e(x)` converge to 1 at stage `budget`.
    /// Callers check `p` itself first (see `positive_extension`).
    fn search_positive(
        &self,
        p: &Self::Condition,
        e: u64,
        x: u64,
        family: &dyn EnumeratedFamily,
        budget: u64,
    ) -> Option<Self::Condition>;
}

/// Notions that can be paired with Cohen forcing on the left.
pub trait ProductFactor: ForcingNotion {
    /// Least `(σ', q) ≤ (left, p)` with `|σ'| = |V(q)| ≤ budget` and
    /// `Φ_e(σ' ⊕ V(q))(x)↓ = 1` at stage `budget`. Requires `|left| = |V(p)|`.
    #[allow(clippy::too_many_arguments)]
    fn search_positive_joined(
        &self,
        left: &BitString,
        p: &Self::Condition,
        e: u64,
        x: u64,
        family: &dyn EnumeratedFamily,
        budget: u64,
    ) -> Option<(BitString, Self::Condition)>;

    /// Some `q ≤ p` with `|V(q)| = n` exactly, when that length is reachable.
    fn pad_exact(&self, p: &Self::Condition, n: usize) -> Option<Self::Condition>;
}

/// A condition `(σ, p)` of `C × P` with `|σ| = |V(p)|`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductCondition<C> {
    pub left: BitString,
    pub right: C,
}

#[derive(Clone, Debug, Default)]
pub struct Product<N> {
    pub factor: N,
}

impl<N: ProductFactor> Product<N> {
    pub fn new(factor: N) -> Self {
        Self { factor }
    }

    pub fn pair(&self, left: BitString, right: N::Condition) -> Result<ProductCondition<N::Condition>> {
        let valuation = self.factor.valuation(&right).len();
        if left.len() != valuation {
            return Err(Error::InvalidPair { sigma: left.len(), valuation });
        }
        Ok(ProductCondition { left, right })
    }
}

impl<N: ProductFactor> ForcingNotion for Product<N> {
    type Condition = ProductCondition<N::Condition>;

    fn name(&self) -> &'static str {
        self.factor.name()
    }

    fn root(&self) -> Self::Condition {
        ProductCondition { left: BitString::empty(), right: self.factor.root() }
    }

    fn leq(&self, q: &Self::Condition, p: &Self::Condition) -> bool {
        p.left.is_prefix_of(&q.left) && self.factor.leq(&q.right, &p.right)
    }

    fn valuation(&self, p: &Self::Condition) -> BitString {
        interleave(&p.left, &self.factor.valuation(&p.right))
    }

    fn pad(&self, p: &Self::Condition, n: usize) -> Result<Self::Condition> {
        let right = self.factor.pad(&p.right, n.div_ceil(2).max(p.left.len()))?;
        let left = p.left.padded(self.factor.valuation(&right).len());
        Ok(ProductCondition { left, right })
    }

    fn code(&self, p: &Self::Condition) -> BigUint {
        pair_big(&p.left.rank(), &self.factor.code(&p.right))
    }

    fn decode(&self, code: &BigUint) -> Option<Self::Condition> {
        let (a, b) = unpair_big(code);
        let right = self.factor.decode(&b)?;
        self.pair(BitString::unrank_big(&a), right).ok()
    }

    fn search_positive(
        &self,
        p: &Self::Condition,
        e: u64,
        x: u64,
        family: &dyn EnumeratedFamily,
        budget: u64,
    ) -> Option<Self::Condition> {
        let (left, right) = self.factor.search_positive_joined(&p.left, &p.right, e, x, family, budget)?;
        Some(ProductCondition { left, right })
    }
}

/// `p ⊩ Φ_e(Ġ)(x)↓ = 1`: the valuation already computes 1 at `budget`.
pub fn forces_sigma1<N: ForcingNotion + ?Sized>(
    notion: &N,
    p: &N::Condition,
    e: u64,
    x: u64,
    family: &dyn EnumeratedFamily,
    budget: u64,
) -> bool {
    family.eval_at(e, &notion.valuation(p), x, budget) == Some(true)
}

/// `p` itself when it already forces the sentence, else the notion's search.
fn positive_extension<N: ForcingNotion + ?Sized>(
    notion: &N,
    p: &N::Condition,
    e: u64,
    x: u64,
    family: &dyn EnumeratedFamily,
    budget: u64,
) -> Option<N::Condition> {
    if forces_sigma1(notion, p, e, x, family, budget) {
        return Some(p.clone());
    }
    notion.search_positive(p, e, x, family, budget)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NegationVerdict<C> {
    /// An extension forcing the positive sentence.
    Refuted { witness: C },
    /// No extension within the budget forces it; provisional.
    ForcedAtBudget { budget: u64 },
}

impl<C> NegationVerdict<C> {
    pub fn is_forced(&self) -> bool {
        matches!(self, NegationVerdict::ForcedAtBudget { .. })
    }
}

pub fn forces_negation<N: ForcingNotion + ?Sized>(
    notion: &N,
    p: &N::Condition,
    e: u64,
    x: u64,
    family: &dyn EnumeratedFamily,
    budget: u64,
) -> NegationVerdict<N::Condition> {
    match positive_extension(notion, p, e, x, family, budget) {
        Some(witness) => NegationVerdict::Refuted { witness },
        None => NegationVerdict::ForcedAtBudget { budget },
    }
}

/// `(q, 1)` with `q ⊩ Φ_e(Ġ)(x)↓ = 1`, or `(p, 0)` when no extension within
/// the budget forces it.
pub fn one_decide<N: ForcingNotion + ?Sized>(
    notion: &N,
    p: &N::Condition,
    e: u64,
    x: u64,
    family: &dyn EnumeratedFamily,
    budget: u64,
) -> (N::Condition, bool) {
    match positive_extension(notion, p, e, x, family, budget) {
        Some(q) => (q, true),
        None => (p.clone(), false),
    }
}

/// A finite descending chain `p₀ ≥ p₁ ≥ … ≥ p_k`; `met[i]` is the index of a
/// chain element lying below a member of the `i`-th dense set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterChain<C> {
    pub chain: Vec<C>,
    pub met: Vec<usize>,
}

impl<C> FilterChain<C> {
    pub fn last(&self) -> Option<&C> {
        self.chain.last()
    }

    pub fn is_descending<N: ForcingNotion<Condition = C> + ?Sized>(&self, notion: &N) -> bool {
        self.chain.windows(2).all(|w| {
            notion.leq(&w[1], &w[0]) && notion.valuation(&w[0]).is_prefix_of(&notion.valuation(&w[1]))
        })
    }
}

pub type Extender<'a, C> = Box<dyn Fn(&C) -> Result<C> + 'a>;

/// A dense set presented by membership and an effective density procedure.
pub struct DenseSet<'a, C> {
    pub contains: Box<dyn Fn(&C) -> bool + 'a>,
    pub extend: Extender<'a, C>,
}

/// Meets each dense set in order, one per step, keeping `|V(p_k)| ≥ k`, and
/// pads until the chain reaches `p_budget`.
pub fn build_filter_chain<N: ForcingNotion + ?Sized>(
    notion: &N,
    dense: &[DenseSet<'_, N::Condition>],
    budget: usize,
) -> Result<FilterChain<N::Condition>> {
    let mut chain = vec![notion.root()];
    let mut met = Vec::with_capacity(dense.len());
    loop {
        let k = chain.len();
        if met.len() == dense.len() && k > budget {
            break;
        }
        let p = chain.last().expect("nonempty");
        let mut q = p.clone();
        if let Some(d) = dense.get(met.len()) {
            q = (d.extend)(p)?;
            if !notion.leq(&q, p) {
                return Err(Error::DensityFailure(format!("dense set {} returned a non-extension", met.len())));
            }
            if !(d.contains)(&q) {
                return Err(Error::DensityFailure(format!("dense set {} returned a non-member", met.len())));
            }
            met.push(k);
        }
        if notion.valuation(&q).len() < k {
            let padded = notion.pad(&q, k)?;
            if !notion.leq(&padded, &q) || notion.valuation(&padded).len() < k {
                return Err(Error::DensityFailure(format!("padding to length {k} failed")));
            }
            q = padded;
        }
        chain.push(q);
    }
    Ok(FilterChain { chain, met })
}

pub(crate) mod big_decimal {
    use num_bigint::BigUint;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(n: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&n.to_str_radix(10))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        use serde::de::Error as _;
        let text = String::deserialize(d)?;
        BigUint::parse_bytes(text.as_bytes(), 10).ok_or_else(|| D::Error::custom(format!("bad code {text:?}")))
    }
}

/// One member of `D_e`: a condition code and the stage that added it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseMember {
    #[serde(with = "big_decimal")]
    pub code: BigUint,
    pub stage: u64,
}

/// Finite approximations `D_{e,s}`, monotone in `s`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseFamily {
    sets: BTreeMap<u64, Vec<DenseMember>>,
}

impl DenseFamily {
    pub fn insert(&mut self, e: u64, stage: u64, code: BigUint) {
        self.sets.entry(e).or_default().push(DenseMember { code, stage });
    }

    /// Members of `D_{e,s}`: those added before stage `s`.
    pub fn members(&self, e: u64, s: u64) -> impl Iterator<Item = &DenseMember> {
        self.sets.get(&e).into_iter().flatten().filter(move |m| m.stage < s)
    }

    pub fn all(&self, e: u64) -> &[DenseMember] {
        self.sets.get(&e).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn indices(&self) -> impl Iterator<Item = u64> + '_ {
        self.sets.keys().copied()
    }

    /// The finite set `D_{e,s}` as a dense-set presentation whose density
    /// procedure returns the least-coded member below its argument.
    pub fn dense_set<'a, N: ForcingNotion>(&'a self, notion: &'a N, e: u64, s: u64) -> DenseSet<'a, N::Condition> {
        let members: Vec<N::Condition> = {
            let mut v: Vec<&DenseMember> = self.members(e, s).collect();
            v.sort_by(|a, b| a.code.cmp(&b.code));
            v.into_iter().filter_map(|m| notion.decode(&m.code)).collect()
        };
        let members = std::rc::Rc::new(members);
        let m2 = members.clone();
        DenseSet {
            contains: Box::new(move |p| members.iter().any(|m| m == p)),
            extend: Box::new(move |p| {
                m2.iter().find(|m| notion.leq(m, p)).cloned().ok_or_else(|| {
                    Error::DensityFailure(format!("no member of D_{e},{s} extends the current condition"))
                })
            }),
        }
    }
}
