//! Finite-stage versions of oracle constructions over notions of forcing.
//!
//! The crate builds perfect trees by stages against an enumerated family of
//! Turing functionals, diagonalizing either over dense sets of a notion of
//! forcing ([`generic`]) or over a Solovay-style test ([`random`]). Every
//! measure is an exact dyadic rational and every construction step leaves a
//! record that can be re-checked independently.

pub mod bits;
pub mod cohen;
pub mod cylinder;
pub mod dyadic;
pub mod error;
pub mod family;
pub mod forcing;
pub mod functional;
pub mod generic;
pub mod ks;
pub mod oracle;
pub mod pairing;
pub mod random;

pub use bits::{join, BitString};
pub use cylinder::{Cube, CubeSet, CylinderSet};
pub use error::{Error, Result};
pub use family::{eval_combined, eval_family, EnumeratedFamily, Entry, Registry, Witness};
pub use functional::{Axiom, FiniteFunctional};
pub use generic::{
    build, check_density, check_tree_shape, run_generic_stage, run_product_stage, select_path, verify_requirements,
    CohenRule, GenericBuildState, ProductRule, StageRule,
};
pub use ks::{KSCondition, KumabeSlaman, UltimatelyPeriodic};
pub use oracle::{decide_conv, verdict_refinement, ConvQuery, Outcome, Verdict};

/// Exact dyadic with an unbounded numerator; the default measure type.
pub type Dyadic = dyadic::DyadicRational<num_bigint::BigUint>;
/// Dyadic with a machine numerator; arithmetic panics on overflow.
pub type Dyadic64 = dyadic::DyadicRational<u64>;
pub type Dyadic128 = dyadic::DyadicRational<u128>;
