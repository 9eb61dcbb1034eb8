use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: left has {left} bits, right has {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("malformed functional: {0}")]
    MalformedFunctional(String),

    #[error("malformed condition: {0}")]
    MalformedCondition(String),

    #[error("invalid product condition: |σ| = {sigma} but |V(p)| = {valuation}")]
    InvalidPair { sigma: usize, valuation: usize },

    #[error("padding obstruction: {0}")]
    PaddingObstruction(String),

    #[error("malformed tree: {0}")]
    MalformedTree(String),

    #[error("density failure: {0}")]
    DensityFailure(String),

    #[error("stage {stage} is beyond the configured bound of {bound} stages")]
    PairingOverflow { stage: usize, bound: usize },

    #[error("stage {got} requested but the build is at stage {expected}")]
    StageOrder { expected: u64, got: u64 },

    #[error("insufficient stages: {0}")]
    InsufficientStages(String),

    #[error("search exhausted{}: {detail}", site(*.stage, *.node, *.step))]
    SearchExhausted { stage: Option<u64>, node: Option<u64>, step: Option<u64>, detail: String },

    #[error("dyadic arithmetic: {0}")]
    Arithmetic(&'static str),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn site(stage: Option<u64>, node: Option<u64>, step: Option<u64>) -> String {
    let parts: Vec<String> = [("stage", stage), ("node", node), ("step", step)]
        .into_iter()
        .filter_map(|(name, v)| v.map(|v| format!("{name} {v}")))
        .collect();
    if parts.is_empty() {
        String::new()
    } else {
        format!(" at {}", parts.join(", "))
    }
}
