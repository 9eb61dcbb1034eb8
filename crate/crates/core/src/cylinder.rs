//! Clopen subsets of Cantor space: finite unions of basic cylinders, and
//! finite unions of cubes (sets fixing finitely many, not necessarily
//! consecutive, bits).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bits::BitString;
use crate::dyadic::{DyadicRational, Numerator};

/// A finite union of basic cylinders `[σ]`, kept prefix-free.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CylinderSet {
    generators: BTreeSet<BitString>,
}

impl CylinderSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_generators<I: IntoIterator<Item = BitString>>(gens: I) -> Self {
        let mut set = Self::new();
        for g in gens {
            set.insert(g);
        }
        set
    }

    /// Adds `[σ]`, dropping any generator it absorbs. A no-op when `[σ]` is
    /// already covered.
    pub fn insert(&mut self, sigma: BitString) {
        if self.covers(&sigma) {
            return;
        }
        self.generators.retain(|g| !sigma.is_prefix_of(g));
        self.generators.insert(sigma);
    }

    /// Whether `[σ]` lies inside the set.
    pub fn covers(&self, sigma: &BitString) -> bool {
        (0..=sigma.len()).any(|l| self.generators.contains(&sigma.prefix(l)))
    }

    pub fn union(&self, other: &CylinderSet) -> CylinderSet {
        let mut out = self.clone();
        for g in &other.generators {
            out.insert(g.clone());
        }
        out
    }

    pub fn generators(&self) -> impl Iterator<Item = &BitString> {
        self.generators.iter()
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    /// Exact uniform measure: `Σ 2^{-|σ|}` over the prefix-free generators.
    pub fn measure<N: Numerator>(&self) -> DyadicRational<N> {
        self.generators.iter().map(|g| DyadicRational::pow2_neg(g.len() as u32)).sum()
    }
}

/// The set of sequences taking prescribed values at finitely many positions.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cube {
    fixed: BTreeMap<usize, bool>,
}

impl Cube {
    /// All of Cantor space.
    pub fn full() -> Self {
        Self::default()
    }

    /// The basic cylinder `[σ]`.
    pub fn cylinder(sigma: &BitString) -> Self {
        Self { fixed: sigma.iter().enumerate().collect() }
    }

    /// Fixes position `k` to `b`; `None` when the cube already fixes it to `!b`.
    pub fn with(mut self, k: usize, b: bool) -> Option<Self> {
        match self.fixed.insert(k, b) {
            Some(old) if old != b => None,
            _ => Some(self),
        }
    }

    pub fn fixed(&self) -> impl Iterator<Item = (usize, bool)> + '_ {
        self.fixed.iter().map(|(&k, &b)| (k, b))
    }

    pub fn intersect(&self, other: &Cube) -> Option<Cube> {
        other.fixed().try_fold(self.clone(), |c, (k, b)| c.with(k, b))
    }

    /// `prefix` followed by a sequence of this cube.
    pub fn after(&self, prefix: &BitString) -> Cube {
        let mut fixed: BTreeMap<usize, bool> = prefix.iter().enumerate().collect();
        fixed.extend(self.fixed().map(|(k, b)| (k + prefix.len(), b)));
        Cube { fixed }
    }

    /// Whether every sequence extending `s` lies in the cube; `s` must reach
    /// past the last fixed position for this to be decided by membership.
    pub fn contains(&self, s: &BitString) -> bool {
        self.fixed().all(|(k, b)| s.bit(k) == Some(b))
    }

    pub fn measure<N: Numerator>(&self) -> DyadicRational<N> {
        DyadicRational::pow2_neg(self.fixed.len() as u32)
    }

    fn parse(text: &str) -> Option<Self> {
        let mut fixed = BTreeMap::new();
        for (k, c) in text.chars().enumerate() {
            match c {
                '0' => fixed.insert(k, false),
                '1' => fixed.insert(k, true),
                '*' => None,
                _ => return None,
            };
        }
        Some(Self { fixed })
    }
}

/// Written as a pattern over `0`, `1`, `*`, ending at the last fixed bit.
impl fmt::Display for Cube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let end = self.fixed.keys().next_back().map_or(0, |k| k + 1);
        for k in 0..end {
            let c = match self.fixed.get(&k) {
                Some(true) => '1',
                Some(false) => '0',
                None => '*',
            };
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl Serialize for Cube {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Cube {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Cube::parse(&text).ok_or_else(|| serde::de::Error::custom(format!("bad cube pattern {text:?}")))
    }
}

/// A finite union of cubes.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CubeSet {
    cubes: BTreeSet<Cube>,
}

impl CubeSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn full() -> Self {
        Self::from_cubes([Cube::full()])
    }

    pub fn from_cubes<I: IntoIterator<Item = Cube>>(cubes: I) -> Self {
        let mut set = Self::empty();
        for c in cubes {
            set.insert(c);
        }
        set
    }

    pub fn insert(&mut self, cube: Cube) {
        if self.cubes.contains(&Cube::full()) {
            return;
        }
        if cube.fixed.is_empty() {
            self.cubes.clear();
        }
        self.cubes.insert(cube);
    }

    pub fn cubes(&self) -> impl Iterator<Item = &Cube> {
        self.cubes.iter()
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn union(&self, other: &CubeSet) -> CubeSet {
        let mut out = self.clone();
        for c in &other.cubes {
            out.insert(c.clone());
        }
        out
    }

    pub fn intersect(&self, other: &CubeSet) -> CubeSet {
        Self::from_cubes(self.cubes.iter().flat_map(|a| other.cubes.iter().filter_map(|b| a.intersect(b))))
    }

    pub fn after(&self, prefix: &BitString) -> CubeSet {
        Self::from_cubes(self.cubes.iter().map(|c| c.after(prefix)))
    }

    pub fn contains(&self, s: &BitString) -> bool {
        self.cubes.iter().any(|c| c.contains(s))
    }

    /// Exact measure of the union, by splitting on the least fixed position.
    pub fn measure<N: Numerator>(&self) -> DyadicRational<N> {
        fn go<N: Numerator>(cubes: Vec<BTreeMap<usize, bool>>) -> DyadicRational<N> {
            if cubes.is_empty() {
                return DyadicRational::zero();
            }
            if cubes.iter().any(BTreeMap::is_empty) {
                return DyadicRational::one();
            }
            if cubes.len() == 1 {
                return DyadicRational::pow2_neg(cubes[0].len() as u32);
            }
            let k = cubes.iter().filter_map(|c| c.keys().next()).min().copied().expect("nonempty cubes");
            let half = |b: bool| {
                let mut side: Vec<_> = cubes
                    .iter()
                    .filter(|c| c.get(&k).is_none_or(|&v| v == b))
                    .map(|c| {
                        let mut c = c.clone();
                        c.remove(&k);
                        c
                    })
                    .collect();
                side.sort();
                side.dedup();
                go::<N>(side)
            };
            (half(false) + half(true)).div_pow2(1)
        }
        go(self.cubes.iter().map(|c| c.fixed.clone()).collect())
    }

    /// `Σ` of the cube measures; at least [`CubeSet::measure`].
    pub fn measure_sum<N: Numerator>(&self) -> DyadicRational<N> {
        self.cubes.iter().map(Cube::measure).sum()
    }
}
