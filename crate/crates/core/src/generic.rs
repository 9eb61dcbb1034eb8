//! Stage constructions of a perfect tree `T`, a set `B` and dense sets
//! `D_e` such that `Φ_e(S ⊕ G) ≠ B` whenever `S ∈ [T]` and `G` meets `D_e`.
//!
//! Stage `s = ⟨e, t⟩` splits every maximal node of `T`, pairs each new node
//! `σ_i` with each condition `τ_j` coded below `s`, and settles one fresh
//! witness `x_{i,j}` per pair. [`CohenRule`] settles pairs with
//! [`decide_conv`]; [`ProductRule`] with [`one_decide`] on `C × P`.
//!
//! The build starts at stage 1 with `T_1 = {λ}`; stage `⟨0,0⟩ = 0` has no
//! conditions below it.

use std::collections::BTreeMap;
use std::fmt::Debug;

use num_bigint::BigUint;
use rangemap::{RangeInclusiveMap, RangeInclusiveSet};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bits::{join, BitString};
use crate::error::{Error, Result};
use crate::family::EnumeratedFamily;
use crate::forcing::{forces_sigma1, one_decide, DenseFamily, Product, ProductFactor};
use crate::oracle::{decide_conv, ConvQuery, Outcome};
use crate::pairing::unpair;

pub const DEFAULT_BUDGET: u64 = 128;
pub const DEFAULT_STAGE_BOUND: u64 = 40;
/// Stages with at most this many pairs keep every pair record.
pub const DEFAULT_RETAIN_LIMIT: u64 = 4096;
/// Exact padding is searched on `[n, 2n + PAD_SLACK)`; a Kumabe–Slaman
/// extension must add a use longer than every existing one, so the next
/// reachable length can lie about `n / 2` past `n`.
const PAD_SLACK: usize = 256;

fn pad_range(n: usize) -> std::ops::Range<usize> {
    n..2 * n + PAD_SLACK
}

/// Which pairs put their witness into `B`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// Case (1) with value 0.
    ConvergeZero,
    /// Case (2).
    StrictDivergence,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum Case {
    /// Case (1): the pair computes `value` at `x`.
    Conv { value: bool },
    /// Case (2): no extension within the budget computes (the forced value at) `x`.
    StrDiv,
}

impl Polarity {
    pub fn adds(self, case: Case) -> bool {
        matches!(
            (self, case),
            (Polarity::ConvergeZero, Case::Conv { value: false }) | (Polarity::StrictDivergence, Case::StrDiv)
        )
    }
}

/// How one construction settles a pair `(σ_{i,j-1}, τ_{j,i-1})`.
pub trait StageRule: Sync {
    type Right: Clone + Debug + PartialEq + Serialize + DeserializeOwned + Send + Sync;

    fn name(&self) -> &'static str;

    fn polarity(&self) -> Polarity;

    /// The conditions coded below `s`, in code order.
    fn initial_rights(&self, s: u64) -> Vec<Self::Right>;

    /// `|τ|` or `|V(p)|`.
    fn right_len(&self, r: &Self::Right) -> usize;

    /// Whether the pair can end in case (1) at this budget.
    fn may_act(&self, family: &dyn EnumeratedFamily, e: u64, x: u64, budget: u64) -> bool;

    /// The least common length `n ≥ sigma_len` reachable from `r`, with `r`
    /// extended to it; `None` when `r` already has length at least `sigma_len`.
    fn equalize(&self, r: &Self::Right, sigma_len: usize) -> Result<Option<(usize, Self::Right)>>;

    fn step(
        &self,
        family: &dyn EnumeratedFamily,
        e: u64,
        x: u64,
        sigma: &BitString,
        r: &Self::Right,
        budget: u64,
    ) -> Result<(BitString, Self::Right, Case)>;

    fn pad_exact(&self, r: &Self::Right, len: usize) -> Option<Self::Right>;

    fn code(&self, r: &Self::Right) -> BigUint;

    fn decode(&self, code: &BigUint) -> Option<Self::Right>;

    /// `q` extends `p`.
    fn extends(&self, q: &Self::Right, p: &Self::Right) -> bool;

    /// Re-evaluates a case (1) record.
    #[allow(clippy::too_many_arguments)]
    fn replay(
        &self,
        family: &dyn EnumeratedFamily,
        e: u64,
        x: u64,
        sigma: &BitString,
        r: &Self::Right,
        value: bool,
        budget: u64,
    ) -> bool;

    /// Whether a case (2) record reaches case (1) at `budget`.
    fn recheck(
        &self,
        family: &dyn EnumeratedFamily,
        e: u64,
        x: u64,
        sigma: &BitString,
        r: &Self::Right,
        budget: u64,
    ) -> bool;

    /// Conditions that `D_e` must extend for a density check at `depth`.
    fn density_targets(&self, depth: u64) -> Vec<(BigUint, Self::Right)>;
}

/// Strings on both sides, settled by bounded convergence queries.
#[derive(Clone, Copy, Debug, Default)]
pub struct CohenRule;

impl StageRule for CohenRule {
    type Right = BitString;

    fn name(&self) -> &'static str {
        "cohen"
    }

    fn polarity(&self) -> Polarity {
        Polarity::ConvergeZero
    }

    fn initial_rights(&self, s: u64) -> Vec<BitString> {
        (0..s).map(BitString::unrank).collect()
    }

    fn right_len(&self, r: &BitString) -> usize {
        r.len()
    }

    fn may_act(&self, family: &dyn EnumeratedFamily, e: u64, x: u64, budget: u64) -> bool {
        family.may_converge(e, x, budget)
    }

    fn equalize(&self, r: &BitString, sigma_len: usize) -> Result<Option<(usize, BitString)>> {
        Ok((r.len() < sigma_len).then(|| (sigma_len, r.padded(sigma_len))))
    }

    fn step(
        &self,
        family: &dyn EnumeratedFamily,
        e: u64,
        x: u64,
        sigma: &BitString,
        r: &BitString,
        budget: u64,
    ) -> Result<(BitString, BitString, Case)> {
        let q = ConvQuery { e, left: sigma.clone(), right: r.clone(), x };
        Ok(match decide_conv(&q, family, budget).outcome {
            Outcome::Converge(w) => (w.left, w.right, Case::Conv { value: w.value }),
            Outcome::NoWithinBound => {
                let n = sigma.len().max(r.len());
                (sigma.padded(n), r.padded(n), Case::StrDiv)
            }
        })
    }

    fn pad_exact(&self, r: &BitString, len: usize) -> Option<BitString> {
        (len >= r.len()).then(|| r.padded(len))
    }

    fn code(&self, r: &BitString) -> BigUint {
        r.rank()
    }

    fn decode(&self, code: &BigUint) -> Option<BitString> {
        Some(BitString::unrank_big(code))
    }

    fn extends(&self, q: &BitString, p: &BitString) -> bool {
        p.is_prefix_of(q)
    }

    fn replay(
        &self,
        family: &dyn EnumeratedFamily,
        e: u64,
        x: u64,
        sigma: &BitString,
        r: &BitString,
        value: bool,
        budget: u64,
    ) -> bool {
        join(sigma, r).is_ok_and(|g| family.eval_at(e, &g, x, budget) == Some(value))
    }

    fn recheck(
        &self,
        family: &dyn EnumeratedFamily,
        e: u64,
        x: u64,
        sigma: &BitString,
        r: &BitString,
        budget: u64,
    ) -> bool {
        let q = ConvQuery { e, left: sigma.clone(), right: r.clone(), x };
        decide_conv(&q, family, budget).converged()
    }

    fn density_targets(&self, depth: u64) -> Vec<(BigUint, BitString)> {
        (0..=depth as usize)
            .flat_map(BitString::all_of_length)
            .map(|s| (s.rank(), s))
            .collect()
    }
}

/// `C × P` conditions, settled by 1-decidability of `Φ_e(Ġ)(x)↓ = 1`.
#[derive(Clone, Debug, Default)]
pub struct ProductRule<N> {
    pub product: Product<N>,
}

impl<N: ProductFactor> ProductRule<N> {
    pub fn new(factor: N) -> Self {
        Self { product: Product::new(factor) }
    }

    fn exact(&self, r: &N::Condition, from: usize) -> Result<(usize, N::Condition)> {
        pad_range(from)
            .find_map(|n| self.product.factor.pad_exact(r, n).map(|q| (n, q)))
            .ok_or_else(|| Error::DensityFailure(format!("no exact padding of length between {from} and {}", 2 * from + PAD_SLACK)))
    }
}

impl<N: ProductFactor> StageRule for ProductRule<N> {
    type Right = N::Condition;

    fn name(&self) -> &'static str {
        self.product.factor.name()
    }

    fn polarity(&self) -> Polarity {
        Polarity::StrictDivergence
    }

    fn initial_rights(&self, s: u64) -> Vec<N::Condition> {
        (0..s).filter_map(|c| self.product.factor.decode(&BigUint::from(c))).collect()
    }

    fn right_len(&self, r: &N::Condition) -> usize {
        self.product.factor.valuation(r).len()
    }

    fn may_act(&self, family: &dyn EnumeratedFamily, e: u64, x: u64, budget: u64) -> bool {
        family.may_output(e, x, budget, true)
    }

    fn equalize(&self, r: &N::Condition, sigma_len: usize) -> Result<Option<(usize, N::Condition)>> {
        if self.right_len(r) >= sigma_len {
            return Ok(None);
        }
        self.exact(r, sigma_len).map(Some)
    }

    fn step(
        &self,
        family: &dyn EnumeratedFamily,
        e: u64,
        x: u64,
        sigma: &BitString,
        r: &N::Condition,
        budget: u64,
    ) -> Result<(BitString, N::Condition, Case)> {
        let (n, right) = match self.equalize(r, sigma.len())? {
            Some(padded) => padded,
            None => (self.right_len(r), r.clone()),
        };
        let p = self.product.pair(sigma.padded(n), right)?;
        let (q, t) = one_decide(&self.product, &p, e, x, family, budget);
        let case = if t { Case::Conv { value: true } } else { Case::StrDiv };
        Ok((q.left, q.right, case))
    }

    fn pad_exact(&self, r: &N::Condition, len: usize) -> Option<N::Condition> {
        self.product.factor.pad_exact(r, len)
    }

    fn code(&self, r: &N::Condition) -> BigUint {
        self.product.factor.code(r)
    }

    fn decode(&self, code: &BigUint) -> Option<N::Condition> {
        self.product.factor.decode(code)
    }

    fn extends(&self, q: &N::Condition, p: &N::Condition) -> bool {
        self.product.factor.leq(q, p)
    }

    fn replay(
        &self,
        family: &dyn EnumeratedFamily,
        e: u64,
        x: u64,
        sigma: &BitString,
        r: &N::Condition,
        value: bool,
        budget: u64,
    ) -> bool {
        value
            && self
                .product
                .pair(sigma.clone(), r.clone())
                .is_ok_and(|p| forces_sigma1(&self.product, &p, e, x, family, budget))
    }

    fn recheck(
        &self,
        family: &dyn EnumeratedFamily,
        e: u64,
        x: u64,
        sigma: &BitString,
        r: &N::Condition,
        budget: u64,
    ) -> bool {
        self.product
            .pair(sigma.clone(), r.clone())
            .is_ok_and(|p| one_decide(&self.product, &p, e, x, family, budget).1)
    }

    fn density_targets(&self, depth: u64) -> Vec<(BigUint, N::Condition)> {
        (0..=depth)
            .filter_map(|c| {
                let c = BigUint::from(c);
                self.product.factor.decode(&c).map(|p| (c, p))
            })
            .collect()
    }
}

/// One level of the tree: the common length of its maximal nodes, and the
/// nodes that are not their parent followed by the split bit and zeros.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Level {
    pub len: usize,
    pub exceptions: BTreeMap<u64, BitString>,
}

/// The tree `T`, kept as its maximal nodes level by level; node `i` of
/// level `k` extends node `i / 2` of level `k − 1` by split bit `i mod 2`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeafStore {
    levels: Vec<Level>,
}

impl Default for LeafStore {
    fn default() -> Self {
        Self { levels: vec![Level::default()] }
    }
}

impl LeafStore {
    /// Number of completed splits.
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn leaf_count(&self, level: usize) -> u64 {
        1u64 << level
    }

    pub fn leaf_len(&self, level: usize) -> usize {
        self.levels[level].len
    }

    fn suffix(&self, level: usize, i: u64, parent_len: usize) -> BitString {
        match self.levels[level].exceptions.get(&i) {
            Some(s) => s.clone(),
            None => {
                let mut s = BitString::from_bits([i & 1 == 1]);
                s.pad_to(self.levels[level].len - parent_len);
                s
            }
        }
    }

    /// Maximal node `i` of `level`.
    pub fn leaf(&self, level: usize, i: u64) -> BitString {
        let mut out = BitString::empty();
        for l in 1..=level {
            let idx = i >> (level - l);
            let parent_len = out.len();
            out = out.concat(&self.suffix(l, idx, parent_len));
        }
        out
    }

    /// The children of `node` (maximal node `i` of `level`) on `level + 1`.
    pub fn children(&self, level: usize, i: u64, node: &BitString) -> [BitString; 2] {
        [0, 1].map(|b| node.concat(&self.suffix(level + 1, 2 * i + b, node.len())))
    }

    /// All maximal nodes of the last level, in order.
    pub fn leaves(&self) -> Vec<BitString> {
        self.leaves_at(self.depth())
    }

    /// The maximal nodes of `level`, in order.
    pub fn leaves_at(&self, level: usize) -> Vec<BitString> {
        let mut cur = vec![BitString::empty()];
        for level in 0..level.min(self.depth()) {
            cur = cur
                .iter()
                .enumerate()
                .flat_map(|(i, node)| self.children(level, i as u64, node))
                .collect();
        }
        cur
    }

    /// Appends a level given its maximal nodes in order: node `k` must
    /// extend node `k / 2` of the current last level, siblings must be
    /// incomparable and all nodes must share one length.
    pub fn push_level(&mut self, leaves: &[BitString]) -> Result<()> {
        let depth = self.depth();
        if leaves.len() as u64 != self.leaf_count(depth + 1) {
            return Err(Error::MalformedTree(format!("level {} needs {} nodes", depth + 1, self.leaf_count(depth + 1))));
        }
        let len = leaves[0].len();
        let parents = self.leaves();
        let mut level = Level { len, exceptions: BTreeMap::new() };
        for (k, leaf) in leaves.iter().enumerate() {
            let parent = &parents[k / 2];
            if leaf.len() != len || !parent.is_proper_prefix_of(leaf) {
                return Err(Error::MalformedTree(format!("node {k} of level {} does not extend its parent", depth + 1)));
            }
            if k % 2 == 1 && leaves[k - 1].compatible(leaf) {
                return Err(Error::MalformedTree(format!("siblings {} and {k} are comparable", k - 1)));
            }
            let suffix = BitString::from_bits(leaf.iter().skip(parent.len()));
            let mut default = BitString::from_bits([k % 2 == 1]);
            default.pad_to(len - parent.len());
            if suffix != default {
                level.exceptions.insert(k as u64, suffix);
            }
        }
        self.levels.push(level);
        Ok(())
    }

    /// Whether `sigma` lies in the tree.
    pub fn contains(&self, sigma: &BitString) -> bool {
        let mut node = BitString::empty();
        let mut i = 0u64;
        for level in 0..self.depth() {
            if sigma.len() <= node.len() {
                break;
            }
            let kids = self.children(level, i, &node);
            let Some(b) = (0..2).find(|&b| kids[b].compatible(sigma)) else {
                return false;
            };
            node = kids[b].clone();
            i = 2 * i + b as u64;
        }
        sigma.len() <= node.len() && sigma.is_prefix_of(&node)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound(serialize = "R: Serialize", deserialize = "R: DeserializeOwned"))]
pub struct PairRecord<R> {
    pub i: u64,
    pub j: u64,
    pub x: u64,
    pub sigma: BitString,
    pub right: R,
    #[serde(flatten)]
    pub case: Case,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseCounts {
    pub conv_zero: u64,
    pub conv_one: u64,
    pub strdiv: u64,
}

impl CaseCounts {
    fn add(&mut self, case: Case) {
        match case {
            Case::Conv { value: false } => self.conv_zero += 1,
            Case::Conv { value: true } => self.conv_one += 1,
            Case::StrDiv => self.strdiv += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.conv_zero + self.conv_one + self.strdiv
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageHeader {
    pub stage: u64,
    pub e: u64,
    pub t: u64,
    /// Number of new nodes `σ_i`.
    pub n: u64,
    /// Number of conditions `τ_j`.
    pub m: u64,
    pub budget: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound(serialize = "R: Serialize", deserialize = "R: DeserializeOwned"))]
pub struct StageRecord<R> {
    #[serde(flatten)]
    pub header: StageHeader,
    /// Common length of the new maximal nodes and of the new `D_e` members.
    pub length: usize,
    pub counts: CaseCounts,
    /// Whether `records` holds every pair; otherwise only case (1) pairs.
    pub complete: bool,
    pub records: Vec<PairRecord<R>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound(serialize = "R: Serialize", deserialize = "R: DeserializeOwned"))]
pub struct GenericBuildState<R> {
    pub notion: String,
    pub polarity: Polarity,
    /// The next stage to run.
    pub stage: u64,
    pub stage_bound: u64,
    pub retain_limit: u64,
    pub tree: LeafStore,
    pub bset: RangeInclusiveSet<u64>,
    /// Every witness ever allocated, with its allocation stage.
    pub allocations: RangeInclusiveMap<u64, u64>,
    pub dense: DenseFamily,
    pub trace: Vec<StageRecord<R>>,
}

impl<R> GenericBuildState<R> {
    pub fn new<Rl: StageRule<Right = R>>(rule: &Rl) -> Self {
        Self {
            notion: rule.name().to_string(),
            polarity: rule.polarity(),
            stage: 1,
            stage_bound: DEFAULT_STAGE_BOUND,
            retain_limit: DEFAULT_RETAIN_LIMIT,
            tree: LeafStore::default(),
            bset: RangeInclusiveSet::new(),
            allocations: RangeInclusiveMap::new(),
            dense: DenseFamily::default(),
            trace: Vec::new(),
        }
    }

    pub fn in_b(&self, x: u64) -> bool {
        self.bset.contains(&x)
    }

    pub fn b_len(&self) -> u64 {
        self.bset.iter().map(|r| r.end() - r.start() + 1).sum()
    }

    /// Every allocated witness exceeds its allocation stage; pairwise
    /// distinctness is structural in the allocation map.
    pub fn allocations_fresh(&self) -> bool {
        self.allocations.iter().all(|(r, &s)| *r.start() > s)
            && self.bset.iter().all(|r| self.allocations.gaps(r).next().is_none())
    }

    pub fn executed_stages(&self) -> impl Iterator<Item = &StageHeader> {
        self.trace.iter().map(|r| &r.header)
    }
}

/// Callbacks during a stage; `b` is `B` as updated through the current pair.
pub trait StageObserver<R> {
    /// Whether pair records with this witness must be materialized.
    fn needs_detail(&self, _e: u64, _x: u64) -> bool {
        false
    }

    fn pair(&mut self, _h: &StageHeader, _rec: &PairRecord<R>, _b: &RangeInclusiveSet<u64>) {}

    /// A case (2) pair whose strings were not materialized.
    fn quiet_pair(&mut self, _h: &StageHeader, _i: u64, _j: u64, _x: u64, _b: &RangeInclusiveSet<u64>) {}

    fn end_stage(&mut self, _h: &StageHeader, _tree: &LeafStore) {}
}

impl<R> StageObserver<R> for () {}

fn bits(s: u64) -> usize {
    (u64::BITS - s.leading_zeros()) as usize
}

struct Allocator {
    base: u64,
    last: Option<u64>,
    fast: bool,
}

impl Allocator {
    fn next(&mut self, k: u64, allocations: &RangeInclusiveMap<u64, u64>) -> u64 {
        let mut x = self.base + k;
        if !self.fast {
            if let Some(l) = self.last {
                x = x.max(l + 1);
            }
            while allocations.contains_key(&x) {
                x += 1;
            }
        }
        self.last = Some(x);
        x
    }
}

/// Runs stage `s` of the construction selected by `rule`.
pub fn run_stage<Rl: StageRule>(
    state: &mut GenericBuildState<Rl::Right>,
    rule: &Rl,
    s: u64,
    family: &dyn EnumeratedFamily,
    budget: u64,
    obs: &mut dyn StageObserver<Rl::Right>,
) -> Result<()> {
    if s != state.stage {
        return Err(Error::StageOrder { expected: state.stage, got: s });
    }
    let overflow = || Error::PairingOverflow { stage: s as usize, bound: state.stage_bound as usize };
    if s > state.stage_bound || s >= 62 {
        return Err(overflow());
    }
    let (e, t) = unpair(s);
    let level = (s - 1) as usize;
    debug_assert_eq!(state.tree.depth(), level);
    let n = 2u64 << level;
    let mut rights = rule.initial_rights(s);
    let m = rights.len() as u64;
    let total = n.checked_mul(m).ok_or_else(overflow)?;
    let base = s.checked_mul(total).and_then(|v| v.checked_add(s + 1)).ok_or_else(overflow)?;
    base.checked_add(total).ok_or_else(overflow)?;
    let fast = total == 0 || !state.allocations.overlaps(&(base..=base + total - 1));
    let mut alloc = Allocator { base, last: None, fast };
    let mut fresh: Vec<u64> = Vec::new();

    let h = StageHeader { stage: s, e, t, n, m, budget };
    let retain = total <= state.retain_limit;
    let mut records = Vec::new();
    let mut counts = CaseCounts::default();
    let polarity = rule.polarity();
    let mut right_lens: Vec<usize> = rights.iter().map(|r| rule.right_len(r)).collect();
    let old_len = state.tree.leaf_len(level);
    let mut max_sigma = old_len + 1;
    let mut explicit: BTreeMap<u64, BitString> = BTreeMap::new();
    let mut xs = vec![0u64; m as usize];

    for i in 0..n {
        for (j, slot) in xs.iter_mut().enumerate() {
            *slot = alloc.next(i * m + j as u64, &state.allocations);
            if !fast {
                fresh.push(*slot);
            }
        }
        let quiet = !retain && xs.iter().all(|&x| !rule.may_act(family, e, x, budget) && !obs.needs_detail(e, x));
        if quiet {
            let mut len = old_len + 1;
            for (j, &x) in xs.iter().enumerate() {
                if let Some((l, r)) = rule.equalize(&rights[j], len)? {
                    rights[j] = r;
                    right_lens[j] = l;
                }
                len = len.max(right_lens[j]);
                counts.add(Case::StrDiv);
                if polarity.adds(Case::StrDiv) {
                    state.bset.insert(x..=x);
                }
                obs.quiet_pair(&h, i, j as u64, x, &state.bset);
            }
            max_sigma = max_sigma.max(len);
            continue;
        }
        let mut sigma = state.tree.leaf(level, i >> 1).with_bit(i & 1 == 1);
        for (j, &x) in xs.iter().enumerate() {
            let (sig, r, case) = rule.step(family, e, x, &sigma, &rights[j], budget)?;
            debug_assert_eq!(sig.len(), rule.right_len(&r));
            right_lens[j] = sig.len();
            sigma = sig;
            rights[j] = r;
            counts.add(case);
            if polarity.adds(case) {
                state.bset.insert(x..=x);
            }
            let rec = PairRecord { i, j: j as u64, x, sigma: sigma.clone(), right: rights[j].clone(), case };
            obs.pair(&h, &rec, &state.bset);
            if retain || matches!(case, Case::Conv { .. }) {
                records.push(rec);
            }
        }
        max_sigma = max_sigma.max(sigma.len());
        explicit.insert(i, sigma);
    }

    let natural = max_sigma.max(right_lens.iter().copied().max().unwrap_or(0)) + bits(s) + 1;
    let (length, finals) = pad_range(natural)
        .find_map(|l| {
            let f: Option<Vec<_>> = rights.iter().map(|r| rule.pad_exact(r, l)).collect();
            f.map(|f| (l, f))
        })
        .ok_or_else(|| Error::DensityFailure(format!("stage {s}: no common length near {natural}")))?;
    for p in &finals {
        state.dense.insert(e, s, rule.code(p));
    }

    let mut exceptions = BTreeMap::new();
    for (i, sigma) in explicit {
        let full = sigma.padded(length);
        let mut default = full.prefix(old_len).with_bit(i & 1 == 1);
        default.pad_to(length);
        if full != default {
            exceptions.insert(i, BitString::from_bits(full.iter().skip(old_len)));
        }
    }
    state.tree.levels.push(Level { len: length, exceptions });
    if fast {
        if total > 0 {
            state.allocations.insert(base..=base + total - 1, s);
        }
    } else {
        for x in fresh {
            state.allocations.insert(x..=x, s);
        }
    }
    state.trace.push(StageRecord { header: h, length, counts, complete: retain, records });
    obs.end_stage(&h, &state.tree);
    state.stage += 1;
    Ok(())
}

/// One stage of the string construction.
pub fn run_generic_stage(
    state: &mut GenericBuildState<BitString>,
    s: u64,
    family: &dyn EnumeratedFamily,
    budget: u64,
) -> Result<()> {
    run_stage(state, &CohenRule, s, family, budget, &mut ())
}

/// One stage of the product construction over `notion`.
pub fn run_product_stage<N: ProductFactor + Clone>(
    state: &mut GenericBuildState<N::Condition>,
    notion: &N,
    s: u64,
    family: &dyn EnumeratedFamily,
    budget: u64,
) -> Result<()> {
    run_stage(state, &ProductRule::new(notion.clone()), s, family, budget, &mut ())
}

/// Runs stages `1..=stages` from scratch.
pub fn build<Rl: StageRule>(
    rule: &Rl,
    family: &dyn EnumeratedFamily,
    stages: u64,
    budget: u64,
    obs: &mut dyn StageObserver<Rl::Right>,
) -> Result<GenericBuildState<Rl::Right>> {
    let mut state = GenericBuildState::new(rule);
    state.stage_bound = state.stage_bound.max(stages);
    for s in 1..=stages {
        run_stage(&mut state, rule, s, family, budget, obs)?;
    }
    Ok(state)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequirementReport {
    pub case1: u64,
    pub case1_failures: u64,
    pub case2: u64,
    pub stable: u64,
    pub flipped: u64,
    pub polarity_failures: u64,
    /// Pairs without a retained record, not replayed.
    pub unreplayed: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRef {
    pub stage: u64,
    pub e: u64,
    pub i: u64,
    pub j: u64,
    pub x: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    #[serde(flatten)]
    pub pair: PairRef,
    pub detail: String,
}

/// Cap on individually listed flips.
pub const FLIP_LIST_LIMIT: usize = 1000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub budget: u64,
    pub recheck_budget: u64,
    pub requirements: BTreeMap<u64, RequirementReport>,
    pub failures: Vec<Failure>,
    pub flips: Vec<PairRef>,
}

impl CertificateReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn total(&self) -> RequirementReport {
        let mut t = RequirementReport::default();
        for r in self.requirements.values() {
            t.case1 += r.case1;
            t.case1_failures += r.case1_failures;
            t.case2 += r.case2;
            t.stable += r.stable;
            t.flipped += r.flipped;
            t.polarity_failures += r.polarity_failures;
            t.unreplayed += r.unreplayed;
        }
        t
    }
}

/// Checks pairs as they are produced, or as they are replayed from a trace.
pub struct Verifier<'a, Rl: StageRule> {
    rule: &'a Rl,
    family: &'a dyn EnumeratedFamily,
    report: CertificateReport,
}

impl<'a, Rl: StageRule> Verifier<'a, Rl> {
    pub fn new(rule: &'a Rl, family: &'a dyn EnumeratedFamily, budget: u64, recheck_budget: u64) -> Self {
        let report = CertificateReport {
            budget,
            recheck_budget,
            requirements: BTreeMap::new(),
            failures: Vec::new(),
            flips: Vec::new(),
        };
        Self { rule, family, report }
    }

    pub fn finish(self) -> CertificateReport {
        self.report
    }

    fn fail(&mut self, pair: PairRef, detail: String) {
        self.report.failures.push(Failure { pair, detail });
    }

    fn check(&mut self, h: &StageHeader, rec: &PairRecord<Rl::Right>, in_b: bool) {
        let pair = PairRef { stage: h.stage, e: h.e, i: rec.i, j: rec.j, x: rec.x };
        if rec.sigma.len() != self.rule.right_len(&rec.right) {
            self.fail(pair.clone(), "unequal lengths".into());
        }
        let expected_in_b = self.rule.polarity().adds(rec.case);
        let req = self.report.requirements.entry(h.e).or_default();
        if in_b != expected_in_b {
            req.polarity_failures += 1;
            self.fail(pair.clone(), format!("B({}) = {} against {:?}", rec.x, in_b as u8, rec.case));
        }
        match rec.case {
            Case::Conv { value } => {
                let req = self.report.requirements.entry(h.e).or_default();
                req.case1 += 1;
                if !self.rule.replay(self.family, h.e, rec.x, &rec.sigma, &rec.right, value, h.budget) {
                    req.case1_failures += 1;
                    self.fail(pair, format!("replay does not reproduce value {}", value as u8));
                }
            }
            Case::StrDiv => {
                let flipped = self.rule.recheck(
                    self.family,
                    h.e,
                    rec.x,
                    &rec.sigma,
                    &rec.right,
                    self.report.recheck_budget,
                );
                self.case2(pair, flipped);
            }
        }
    }

    fn case2(&mut self, pair: PairRef, flipped: bool) {
        let req = self.report.requirements.entry(pair.e).or_default();
        req.case2 += 1;
        if flipped {
            req.flipped += 1;
            if self.report.flips.len() < FLIP_LIST_LIMIT {
                self.report.flips.push(pair);
            }
        } else {
            req.stable += 1;
        }
    }

    /// Replays the retained records of a finished build against its final `B`.
    pub fn replay_state(&mut self, state: &GenericBuildState<Rl::Right>) {
        for st in &state.trace {
            for rec in &st.records {
                self.check(&st.header, rec, state.in_b(rec.x));
            }
            let replayed = st.records.len() as u64;
            self.report.requirements.entry(st.header.e).or_default().unreplayed += st.counts.total() - replayed;
        }
    }
}

impl<Rl: StageRule> StageObserver<Rl::Right> for Verifier<'_, Rl> {
    fn needs_detail(&self, e: u64, x: u64) -> bool {
        self.rule.may_act(self.family, e, x, self.report.recheck_budget)
    }

    fn pair(&mut self, h: &StageHeader, rec: &PairRecord<Rl::Right>, b: &RangeInclusiveSet<u64>) {
        self.check(h, rec, b.contains(&rec.x));
    }

    fn quiet_pair(&mut self, h: &StageHeader, i: u64, j: u64, x: u64, b: &RangeInclusiveSet<u64>) {
        let pair = PairRef { stage: h.stage, e: h.e, i, j, x };
        if b.contains(&x) != self.rule.polarity().adds(Case::StrDiv) {
            self.report.requirements.entry(h.e).or_default().polarity_failures += 1;
            self.fail(pair.clone(), format!("B({x}) against a case (2) pair"));
        }
        // nothing can converge at the recheck budget, so the verdict is stable
        self.case2(pair, false);
    }
}

/// Replays every retained record of `state`: case (1) records are
/// re-evaluated and checked against `B`; case (2) records are re-decided at
/// `recheck_budget`.
pub fn verify_requirements<Rl: StageRule>(
    rule: &Rl,
    state: &GenericBuildState<Rl::Right>,
    family: &dyn EnumeratedFamily,
    budget: u64,
    recheck_budget: u64,
) -> CertificateReport {
    let mut v = Verifier::new(rule, family, budget, recheck_budget);
    v.replay_state(state);
    v.finish()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeShapeReport {
    pub levels: usize,
    pub leaves: u64,
    pub failures: Vec<String>,
}

impl TreeShapeReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Materializes every level and checks that each maximal node has exactly
/// two incomparable extensions on the next level, all of one length.
pub fn check_tree_shape(tree: &LeafStore) -> TreeShapeReport {
    let mut failures = Vec::new();
    fn walk(tree: &LeafStore, level: usize, i: u64, node: &BitString, failures: &mut Vec<String>) {
        if level == tree.depth() {
            return;
        }
        let len = tree.leaf_len(level + 1);
        let kids = tree.children(level, i, node);
        for (b, k) in kids.iter().enumerate() {
            if k.len() != len || !node.is_proper_prefix_of(k) {
                failures.push(format!("level {}: node {} is not a proper extension of length {len}", level + 1, 2 * i + b as u64));
            }
        }
        if kids[0].compatible(&kids[1]) {
            failures.push(format!("level {}: children of {i} are comparable", level + 1));
        }
        if failures.len() < 100 {
            for (b, k) in kids.iter().enumerate() {
                walk(tree, level + 1, 2 * i + b as u64, k, failures);
            }
        }
    }
    walk(tree, 0, 0, &BitString::empty(), &mut failures);
    TreeShapeReport { levels: tree.depth(), leaves: tree.leaf_count(tree.depth()), failures }
}

/// Every target condition up to `depth` has an extension among the members
/// of `D_e`.
pub fn check_density<Rl: StageRule>(
    rule: &Rl,
    state: &GenericBuildState<Rl::Right>,
    e: u64,
    depth: u64,
) -> Result<bool> {
    let targets = rule.density_targets(depth);
    let max_code = targets.iter().map(|(c, _)| c.clone()).max().unwrap_or_default();
    let covered = state.executed_stages().any(|h| h.e == e && BigUint::from(h.stage) > max_code);
    if !covered {
        return Err(Error::InsufficientStages(format!(
            "no executed stage ⟨{e},t⟩ exceeds condition code {max_code}"
        )));
    }
    let members: Vec<Rl::Right> = state.dense.all(e).iter().filter_map(|m| rule.decode(&m.code)).collect();
    Ok(targets.iter().all(|(_, p)| members.iter().any(|q| rule.extends(q, p))))
}

/// Follows `director` at each split from the root to a maximal node; missing
/// director bits count as 0.
pub fn select_path<I: IntoIterator<Item = bool>>(tree: &LeafStore, director: I) -> BitString {
    let mut d = director.into_iter();
    let i = (0..tree.depth()).fold(0u64, |i, _| 2 * i + d.next().unwrap_or(false) as u64);
    tree.leaf(tree.depth(), i)
}
