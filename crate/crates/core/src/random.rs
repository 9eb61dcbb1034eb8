//! Perfect trees none of whose paths joins a random set above a target `A`.
//!
//! For a combined functional `Φ(X ⊕ 0^e 1 Y) = Φ_e(X ⊕ Y)` the measure
//! `m(τ, ρ) = μ{X : Φ(τ ⊕ X)[2|τ|] ⪰ ρ}` is computed exactly. Stage `s`
//! first finds `n_s` and extensions `σ_i^*` above which `m(·, A↾n_s)` stays
//! below `2^{−2(s+1)}`, then pushes every node close to the supremum of
//! `m(·, A↾n_t)` for each `t ≤ s`, then splits. Suprema over all extensions
//! are out of reach, so they are estimated over extensions within a fixed
//! radius; certificates report whether the resulting test `U_{i,j}` still
//! respects its measure bound.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::cylinder::CubeSet;
use crate::error::{Error, Result};
use crate::family::EnumeratedFamily;
use crate::generic::LeafStore;
use crate::Dyadic;

pub const DEFAULT_SUP_RADIUS: usize = 8;
pub const DEFAULT_N_MAX: u64 = 32;
pub const DEFAULT_SEED: u64 = 1;

/// A total 0/1 stream standing in for the target set `A`.
pub trait TargetPrefix {
    fn bit_at(&self, n: u64) -> bool;

    fn prefix(&self, n: u64) -> BitString {
        BitString::from_bits((0..n).map(|k| self.bit_at(k)))
    }
}

/// Bits of a 64-bit linear congruential generator: bit `n` is the top bit
/// of the state after `n + 1` steps from `seed`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lcg {
    pub seed: u64,
}

impl Lcg {
    const MUL: u64 = 6364136223846793005;
    const INC: u64 = 1442695040888963407;

    fn states(&self) -> impl Iterator<Item = u64> {
        std::iter::successors(Some(self.seed), |x| Some(x.wrapping_mul(Self::MUL).wrapping_add(Self::INC))).skip(1)
    }
}

impl TargetPrefix for Lcg {
    fn bit_at(&self, n: u64) -> bool {
        self.states().nth(n as usize).expect("infinite stream") >> 63 == 1
    }

    fn prefix(&self, n: u64) -> BitString {
        BitString::from_bits(self.states().take(n as usize).map(|x| x >> 63 == 1))
    }
}

/// A fixed prefix, continued by zeros.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fixed(pub BitString);

impl TargetPrefix for Fixed {
    fn bit_at(&self, n: u64) -> bool {
        usize::try_from(n).ok().and_then(|k| self.0.bit(k)).unwrap_or(false)
    }
}

/// The strings `υ` with `|υ| = |τ|` such that `Φ(τ ⊕ υ)[2|τ|] ⪰ ρ`.
pub fn accept_set<F: EnumeratedFamily + ?Sized>(tau: &BitString, rho: &BitString, family: &F) -> CubeSet {
    if rho.is_empty() {
        return CubeSet::full();
    }
    let l = tau.len();
    let mut out = CubeSet::empty();
    for e in 0..l {
        let cubes = family.accept_cubes(e as u64, &tau.prefix(l - e - 1), rho, 2 * l as u64);
        let mut route = BitString::zeros(e);
        route.push(true);
        out = out.union(&cubes.after(&route));
    }
    out
}

/// `m(τ, ρ)`, exactly.
pub fn m_measure<F: EnumeratedFamily + ?Sized>(tau: &BitString, rho: &BitString, family: &F) -> Dyadic {
    if rho.is_empty() {
        return Dyadic::one();
    }
    let l = tau.len();
    (0..l)
        .map(|e| {
            let cubes = family.accept_cubes(e as u64, &tau.prefix(l - e - 1), rho, 2 * l as u64);
            cubes.measure::<num_bigint::BigUint>().div_pow2(e as u32 + 1)
        })
        .sum()
}

/// Memoized `m` over one neighbourhood.
struct Measurer<'a, F: ?Sized> {
    family: &'a F,
    memo: HashMap<(BitString, BitString), Dyadic>,
}

impl<'a, F: EnumeratedFamily + ?Sized> Measurer<'a, F> {
    fn new(family: &'a F) -> Self {
        Self { family, memo: HashMap::new() }
    }

    fn m(&mut self, tau: &BitString, rho: &BitString) -> Dyadic {
        if let Some(v) = self.memo.get(&(tau.clone(), rho.clone())) {
            return v.clone();
        }
        let v = m_measure(tau, rho, self.family);
        self.memo.insert((tau.clone(), rho.clone()), v.clone());
        v
    }

    fn sup(&mut self, sigma: &BitString, rho: &BitString, radius: usize) -> Dyadic {
        sigma
            .extensions_up_to(sigma.len() + radius)
            .map(|t| self.m(&t, rho))
            .max()
            .expect("σ itself is a candidate")
    }

    fn stays_below(&mut self, sigma: &BitString, rho: &BitString, radius: usize, q: &Dyadic) -> bool {
        sigma.extensions_up_to(sigma.len() + radius).all(|t| self.m(&t, rho) < *q)
    }

    fn least_reaching(&mut self, sigma: &BitString, rho: &BitString, radius: usize, level: &Dyadic) -> Option<BitString> {
        sigma.extensions_up_to(sigma.len() + radius).find(|t| self.m(t, rho) >= *level)
    }

    /// Least `σ′ ⪰ σ` within `radius` all of whose extensions within
    /// `radius` have `m(·, ρ) < q`.
    fn least_certified(&mut self, sigma: &BitString, rho: &BitString, radius: usize, q: &Dyadic) -> Option<BitString> {
        // a candidate above a node with m ≥ q cannot certify
        let mut hopeless: HashSet<BitString> = HashSet::new();
        for cand in sigma.extensions_up_to(sigma.len() + radius) {
            if cand.len() > sigma.len() && hopeless.contains(&cand.prefix(cand.len() - 1)) {
                hopeless.insert(cand);
                continue;
            }
            if self.m(&cand, rho) >= *q {
                hopeless.insert(cand);
                continue;
            }
            if self.stays_below(&cand, rho, radius, q) {
                return Some(cand);
            }
        }
        None
    }
}

/// Largest `m(τ, ρ)` over `τ ⪰ σ` with `|τ| ≤ |σ| + radius`.
pub fn sup_estimate<F: EnumeratedFamily + ?Sized>(sigma: &BitString, rho: &BitString, family: &F, radius: usize) -> Dyadic {
    Measurer::new(family).sup(sigma, rho, radius)
}

/// Least `n ≤ n_max`, and for it the least `σ′ ⪰ σ` within `radius`, such that
/// no extension of `σ′` within `radius` has `m(·, A↾n) ≥ q`.
pub fn find_nondensity<F: EnumeratedFamily + ?Sized, A: TargetPrefix + ?Sized>(
    q: &Dyadic,
    sigma: &BitString,
    target: &A,
    family: &F,
    n_max: u64,
    radius: usize,
) -> Result<(u64, BitString)> {
    let mut meas = Measurer::new(family);
    (0..=n_max)
        .find_map(|n| meas.least_certified(sigma, &target.prefix(n), radius, q).map(|s| (n, s)))
        .ok_or_else(|| Error::SearchExhausted {
            stage: None,
            node: None,
            step: None,
            detail: format!("no n ≤ {n_max} certifies an extension of {sigma} within radius {radius}"),
        })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainStep {
    pub t: u64,
    pub n: u64,
    pub sigma: BitString,
    pub measure: Dyadic,
    /// Estimated supremum above the previous link.
    pub sup: Dyadic,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub i: u64,
    pub sigma: BitString,
    pub star: BitString,
    pub star_sup: Dyadic,
    pub chain: Vec<ChainStep>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomStageRecord {
    pub stage: u64,
    pub n: u64,
    pub threshold: Dyadic,
    pub slack: Dyadic,
    pub length: usize,
    pub nodes: Vec<NodeRecord>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomBuildState {
    pub sup_radius: usize,
    pub n_max: u64,
    pub tree: LeafStore,
    pub nseq: Vec<u64>,
    pub trace: Vec<RandomStageRecord>,
}

impl RandomBuildState {
    pub fn new(sup_radius: usize, n_max: u64) -> Self {
        Self { sup_radius, n_max, tree: LeafStore::default(), nseq: Vec::new(), trace: Vec::new() }
    }

    /// Stages completed so far; also the next stage to run.
    pub fn stage(&self) -> u64 {
        self.nseq.len() as u64
    }
}

/// Runs stage `s`, building `T_{s+1}` and `n_s`.
pub fn run_random_stage<F: EnumeratedFamily + ?Sized, A: TargetPrefix + ?Sized>(
    state: &mut RandomBuildState,
    s: u64,
    target: &A,
    family: &F,
) -> Result<()> {
    if s != state.stage() {
        return Err(Error::StageOrder { expected: state.stage(), got: s });
    }
    let radius = state.sup_radius;
    let threshold = Dyadic::pow2_neg(2 * (s as u32 + 1));
    let slack = Dyadic::pow2_neg(2 * (s as u32 + 2));
    let nodes = state.tree.leaves();
    let exhausted = |node: usize, step: Option<u64>, detail: String| Error::SearchExhausted {
        stage: Some(s),
        node: Some(node as u64),
        step,
        detail,
    };

    // non-density is inherited by longer prefixes of A, so the least n that
    // works for every node is the largest of the per-node least ones
    let mut n = 0;
    for (i, sigma) in nodes.iter().enumerate() {
        let mut meas = Measurer::new(family);
        while meas.least_certified(sigma, &target.prefix(n), radius, &threshold).is_none() {
            n += 1;
            if n > state.n_max {
                return Err(exhausted(i, None, format!("no n ≤ {} certifies within radius {radius}", state.n_max)));
            }
        }
    }
    let rho_s = target.prefix(n);

    let mut records = Vec::with_capacity(nodes.len());
    for (i, sigma) in nodes.iter().enumerate() {
        let mut meas = Measurer::new(family);
        let star = meas
            .least_certified(sigma, &rho_s, radius, &threshold)
            .ok_or_else(|| exhausted(i, None, format!("n = {n} does not certify")))?;
        let star_sup = meas.sup(&star, &rho_s, radius);
        let mut prev = star.clone();
        let mut chain = Vec::with_capacity(s as usize + 1);
        for t in 0..=s {
            let n_t = state.nseq.get(t as usize).copied().unwrap_or(n);
            let rho = target.prefix(n_t);
            let sup = meas.sup(&prev, &rho, radius);
            let level = sup.saturating_sub(&slack);
            let next = meas
                .least_reaching(&prev, &rho, radius, &level)
                .ok_or_else(|| exhausted(i, Some(t), "supremum not attained".into()))?;
            let measure = meas.m(&next, &rho);
            chain.push(ChainStep { t, n: n_t, sigma: next.clone(), measure, sup });
            prev = next;
        }
        records.push(NodeRecord { i: i as u64, sigma: sigma.clone(), star, star_sup, chain });
    }

    // equal lengths: padding extends each σ_{i,s}, which keeps every bound
    let len = records.iter().map(|r| r.chain.last().expect("nonempty chain").sigma.len()).max().unwrap_or(0);
    let leaves: Vec<BitString> = records
        .iter()
        .flat_map(|r| {
            let top = r.chain.last().expect("nonempty chain").sigma.padded(len);
            [top.with_bit(false), top.with_bit(true)]
        })
        .collect();
    state.tree.push_level(&leaves)?;
    state.nseq.push(n);
    state.trace.push(RandomStageRecord { stage: s, n, threshold, slack, length: len + 1, nodes: records });
    Ok(())
}

/// Runs stages `0..stages` from scratch.
pub fn build_random<F: EnumeratedFamily + ?Sized, A: TargetPrefix + ?Sized>(
    target: &A,
    family: &F,
    stages: u64,
    sup_radius: usize,
    n_max: u64,
) -> Result<RandomBuildState> {
    let mut state = RandomBuildState::new(sup_radius, n_max);
    for s in 0..stages {
        run_random_stage(&mut state, s, target, family)?;
    }
    Ok(state)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeMeasure {
    pub node: u64,
    pub measure: Dyadic,
}

/// Exact measure of `U_{i,j}` against its bound.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCertificate {
    pub i: u64,
    pub j: u64,
    pub n: u64,
    /// `μ(U_{i,j})`: the union over the maximal nodes of `T_{i+j+1}`.
    pub measure: Dyadic,
    /// `Σ m(σ, A↾n_i)` over the same nodes.
    pub sum: Dyadic,
    pub bound: Dyadic,
    pub pass: bool,
    pub union_le_sum: bool,
    /// Largest `m(σ) − m(τ)` for `σ` maximal in `T_{i+j+1}` above `τ`
    /// maximal in `T_{i+j}`; absent for `j = 0`.
    pub max_increase: Option<Dyadic>,
    pub increase_bound: Option<Dyadic>,
    pub generators: CubeSet,
    pub contributions: Vec<NodeMeasure>,
}

/// Certifies `μ(U_{i,j}) ≤ Σ_{k≤j} 2^{−(i+k+1)}` on the built tree.
pub fn test_measure<F: EnumeratedFamily + ?Sized, A: TargetPrefix + ?Sized>(
    state: &RandomBuildState,
    i: u64,
    j: u64,
    target: &A,
    family: &F,
) -> Result<TestCertificate> {
    let level = (i + j + 1) as usize;
    if level > state.tree.depth() {
        return Err(Error::InsufficientStages(format!(
            "U_{{{i},{j}}} needs T_{level} but the tree has {} levels",
            state.tree.depth()
        )));
    }
    let n = state.nseq[i as usize];
    let rho = target.prefix(n);
    let mut meas = Measurer::new(family);
    let mut union = CubeSet::empty();
    let mut sum = Dyadic::zero();
    let mut contributions = Vec::new();
    let mut max_increase: Option<Dyadic> = None;
    let parents = (j > 0).then(|| state.tree.leaves_at(level - 1));
    for (k, sigma) in state.tree.leaves_at(level).iter().enumerate() {
        let set = accept_set(sigma, &rho, family);
        let m = meas.m(sigma, &rho);
        debug_assert_eq!(set.measure::<num_bigint::BigUint>(), m);
        union = union.union(&set);
        sum = &sum + &m;
        if let Some(parents) = &parents {
            let inc = m.saturating_sub(&meas.m(&parents[k / 2], &rho));
            if max_increase.as_ref().is_none_or(|best| inc > *best) {
                max_increase = Some(inc);
            }
        }
        if !m.is_zero() {
            contributions.push(NodeMeasure { node: k as u64, measure: m });
        }
    }
    let measure: Dyadic = union.measure();
    let bound: Dyadic = (0..=j).map(|k| Dyadic::pow2_neg((i + k + 1) as u32)).sum();
    Ok(TestCertificate {
        i,
        j,
        n,
        pass: measure <= bound,
        union_le_sum: measure <= sum,
        measure,
        sum,
        bound,
        increase_bound: (j > 0).then(|| Dyadic::pow2_neg(2 * (i + j + 1) as u32)),
        max_increase,
        generators: union,
        contributions,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertificateFailure {
    pub i: u64,
    pub j: u64,
    pub measure: Dyadic,
    pub bound: Dyadic,
    /// The maximal node contributing most, with its `m` value.
    pub worst: Option<NodeMeasure>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertifyReport {
    pub certificates: Vec<TestCertificate>,
    /// Pairs `(i, j)` asked for whose tree level has not been built.
    pub skipped: Vec<(u64, u64)>,
    pub failures: Vec<CertificateFailure>,
}

impl CertifyReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.certificates.iter().all(|c| c.pass && c.union_le_sum)
    }
}

/// Certificates for every `i ≤ i_max`, `j ≤ j_max` with `T_{i+j+1}` built.
pub fn certify_all<F: EnumeratedFamily + ?Sized, A: TargetPrefix + ?Sized>(
    state: &RandomBuildState,
    i_max: u64,
    j_max: u64,
    target: &A,
    family: &F,
) -> Result<CertifyReport> {
    let mut report = CertifyReport { certificates: Vec::new(), skipped: Vec::new(), failures: Vec::new() };
    for i in 0..=i_max {
        for j in 0..=j_max {
            if (i + j + 1) as usize > state.tree.depth() {
                report.skipped.push((i, j));
                continue;
            }
            let cert = test_measure(state, i, j, target, family)?;
            if !cert.pass {
                report.failures.push(CertificateFailure {
                    i,
                    j,
                    measure: cert.measure.clone(),
                    bound: cert.bound.clone(),
                    worst: cert.contributions.iter().max_by(|a, b| a.measure.cmp(&b.measure)).cloned(),
                });
            }
            report.certificates.push(cert);
        }
    }
    Ok(report)
}
