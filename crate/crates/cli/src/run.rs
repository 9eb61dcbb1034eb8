//! Command execution and artifact layout.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use forcing_stages::cohen::Cohen;
use forcing_stages::generic::{
    build, check_tree_shape, CaseCounts, CertificateReport, CohenRule, GenericBuildState, ProductRule,
    RequirementReport, StageRule, TreeShapeReport, Verifier,
};
use forcing_stages::random::{build_random, certify_all, CertifyReport, Lcg, RandomBuildState};
use forcing_stages::{Error, KumabeSlaman, Registry};
use serde::Serialize;

use crate::{CommandName, Construction, Notion, RunArgs};

/// Bumped whenever the layout of an artifact changes.
pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_TWO_PHASE_DELAY: u64 = 40;

#[derive(Debug)]
pub enum RunError {
    Config(String),
    Io { path: PathBuf, source: io::Error },
    Core(Error),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) | RunError::Io { .. } => 2,
            RunError::Core(Error::SearchExhausted { .. }) => 3,
            RunError::Core(Error::DensityFailure(_) | Error::PaddingObstruction(_) | Error::MalformedTree(_)) => 1,
            RunError::Core(_) => 2,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(msg) => write!(f, "{msg}"),
            RunError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            RunError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Core(e)
    }
}

pub struct Outcome {
    pub passed: bool,
    pub summary: String,
}

/// The settings that determine an artifact; the output path does not.
#[derive(Serialize)]
struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    notion: Option<Notion>,
    #[serde(skip_serializing_if = "Option::is_none")]
    construction: Option<Construction>,
    stages: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_budget: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    recheck_budget: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sup_radius: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_max: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    registry: String,
}

#[derive(Serialize)]
struct Artifact<'a, T> {
    schema_version: u32,
    command: CommandName,
    config: &'a RunConfig,
    registry: &'a Registry,
    passed: bool,
    #[serde(flatten)]
    body: T,
}

#[derive(Serialize)]
struct BuildSummary {
    notion: &'static str,
    stages: u64,
    leaf_length: usize,
    b_size: u64,
    counts: CaseCounts,
}

#[derive(Serialize)]
struct BuildBody<'a, R> {
    summary: BuildSummary,
    tree_shape: TreeShapeReport,
    state: &'a GenericBuildState<R>,
}

#[derive(Serialize)]
struct VerifyBody {
    totals: RequirementReport,
    tree_shape: TreeShapeReport,
    report: CertificateReport,
}

#[derive(Serialize)]
struct RandomSummary {
    stages: u64,
    nseq: Vec<u64>,
    leaf_length: usize,
}

#[derive(Serialize)]
struct RandomBody<'a> {
    summary: RandomSummary,
    tree_shape: TreeShapeReport,
    state: &'a RandomBuildState,
}

#[derive(Serialize)]
struct CertifyBody {
    nseq: Vec<u64>,
    report: CertifyReport,
}

fn load_registry(spec: &str) -> Result<Registry, RunError> {
    match spec {
        "default" => return Ok(Registry::default()),
        "divergent" => return Ok(Registry::divergent()),
        "two-phase" => return Ok(Registry::default().delayed(DEFAULT_TWO_PHASE_DELAY)),
        _ => {}
    }
    if let Some(d) = spec.strip_prefix("two-phase:") {
        let delay = d.parse().map_err(|_| RunError::Config(format!("bad two-phase delay {d:?}")))?;
        return Ok(Registry::default().delayed(delay));
    }
    let path = PathBuf::from(spec);
    let text = fs::read_to_string(&path).map_err(|source| RunError::Io { path, source })?;
    Ok(Registry::from_json(&text)?)
}

fn write_artifact<T: Serialize>(args: &RunArgs, artifact: &T) -> Result<(), RunError> {
    let mut text = serde_json::to_string_pretty(artifact).map_err(Error::from)?;
    text.push('\n');
    match &args.output {
        Some(path) => fs::write(path, text).map_err(|source| RunError::Io { path: path.clone(), source }),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|source| RunError::Io { path: PathBuf::from("<stdout>"), source }),
    }
}

fn totals<R>(state: &GenericBuildState<R>) -> CaseCounts {
    let mut c = CaseCounts::default();
    for rec in &state.trace {
        c.conv_zero += rec.counts.conv_zero;
        c.conv_one += rec.counts.conv_one;
        c.strdiv += rec.counts.strdiv;
    }
    c
}

pub fn run(command: CommandName, args: &RunArgs) -> Result<Outcome, RunError> {
    let registry = load_registry(&args.registry)?;
    let random = matches!(command, CommandName::BuildRandom | CommandName::Certify);
    let stages = args.stages.unwrap_or(if random { 7 } else { 8 });
    let recheck = match args.recheck_budget {
        Some(r) => r,
        None => args
            .oracle_budget
            .checked_mul(2)
            .ok_or_else(|| RunError::Config("oracle budget too large".into()))?,
    };
    let product_notion = match command {
        CommandName::BuildProduct => Some(args.notion),
        CommandName::Verify if args.construction == Construction::Product => Some(args.notion),
        _ => None,
    };
    let config = RunConfig {
        notion: product_notion,
        construction: (command == CommandName::Verify).then_some(args.construction),
        stages,
        oracle_budget: (!random).then_some(args.oracle_budget),
        recheck_budget: (command == CommandName::Verify).then_some(recheck),
        sup_radius: random.then_some(args.sup_radius),
        n_max: random.then_some(args.n_max),
        seed: random.then_some(args.seed),
        registry: args.registry.clone(),
    };
    let ctx = Ctx { command, args, config: &config, registry: &registry, stages };
    match command {
        CommandName::BuildGeneric => ctx.build(&CohenRule),
        CommandName::BuildProduct => match args.notion {
            Notion::Cohen => ctx.build(&ProductRule::new(Cohen)),
            Notion::Ks => ctx.build(&ProductRule::new(KumabeSlaman)),
        },
        CommandName::Verify => match product_notion {
            None => ctx.verify(&CohenRule, recheck),
            Some(Notion::Cohen) => ctx.verify(&ProductRule::new(Cohen), recheck),
            Some(Notion::Ks) => ctx.verify(&ProductRule::new(KumabeSlaman), recheck),
        },
        CommandName::BuildRandom => ctx.build_random(),
        CommandName::Certify => ctx.certify(),
    }
}

struct Ctx<'a> {
    command: CommandName,
    args: &'a RunArgs,
    config: &'a RunConfig,
    registry: &'a Registry,
    stages: u64,
}

impl Ctx<'_> {
    fn emit<T: Serialize>(&self, passed: bool, body: T) -> Result<(), RunError> {
        let artifact = Artifact {
            schema_version: SCHEMA_VERSION,
            command: self.command,
            config: self.config,
            registry: self.registry,
            passed,
            body,
        };
        write_artifact(self.args, &artifact)
    }

    fn build<Rl: StageRule>(&self, rule: &Rl) -> Result<Outcome, RunError> {
        let state = build(rule, self.registry, self.stages, self.args.oracle_budget, &mut ())?;
        let tree_shape = check_tree_shape(&state.tree);
        let passed = tree_shape.passed();
        let summary = BuildSummary {
            notion: rule.name(),
            stages: self.stages,
            leaf_length: state.tree.leaf_len(state.tree.depth()),
            b_size: state.b_len(),
            counts: totals(&state),
        };
        let line = format!(
            "{}{}: {} stages over {}, leaf length {}, |B| = {}, tree {}",
            if self.command == CommandName::BuildProduct { "product " } else { "" },
            rule.name(),
            self.stages,
            self.args.registry,
            summary.leaf_length,
            summary.b_size,
            if passed { "ok" } else { "malformed" }
        );
        self.emit(passed, BuildBody { summary, tree_shape, state: &state })?;
        Ok(Outcome { passed, summary: line })
    }

    fn verify<Rl: StageRule>(&self, rule: &Rl, recheck: u64) -> Result<Outcome, RunError> {
        let mut verifier = Verifier::new(rule, self.registry, self.args.oracle_budget, recheck);
        let state = build(rule, self.registry, self.stages, self.args.oracle_budget, &mut verifier)?;
        let report = verifier.finish();
        let tree_shape = check_tree_shape(&state.tree);
        let passed = report.passed() && tree_shape.passed();
        let totals = report.total();
        let line = format!(
            "verify {} {}: {} case (1) pairs, {} failures; {} case (2) pairs, {} flips at budget {recheck}; tree {}",
            if self.config.construction == Some(Construction::Product) { "product" } else { "generic" },
            rule.name(),
            totals.case1,
            report.failures.len(),
            totals.case2,
            totals.flipped,
            if tree_shape.passed() { "ok" } else { "malformed" }
        );
        self.emit(passed, VerifyBody { totals, tree_shape, report })?;
        Ok(Outcome { passed, summary: line })
    }

    fn random_state(&self) -> Result<RandomBuildState, RunError> {
        let target = Lcg { seed: self.args.seed };
        Ok(build_random(&target, self.registry, self.stages, self.args.sup_radius, self.args.n_max)?)
    }

    fn build_random(&self) -> Result<Outcome, RunError> {
        let state = self.random_state()?;
        let tree_shape = check_tree_shape(&state.tree);
        let passed = tree_shape.passed();
        let summary = RandomSummary {
            stages: self.stages,
            nseq: state.nseq.clone(),
            leaf_length: state.tree.leaf_len(state.tree.depth()),
        };
        let line = format!("random: {} stages, n = {:?}, leaf length {}", self.stages, summary.nseq, summary.leaf_length);
        self.emit(passed, RandomBody { summary, tree_shape, state: &state })?;
        Ok(Outcome { passed, summary: line })
    }

    fn certify(&self) -> Result<Outcome, RunError> {
        let state = self.random_state()?;
        let top = self.stages.saturating_sub(1);
        let report = certify_all(&state, top, top, &Lcg { seed: self.args.seed }, self.registry)?;
        let passed = report.passed();
        let mut line = format!(
            "certify: {} certificates, {} failures",
            report.certificates.len(),
            report.failures.len()
        );
        if let Some(f) = report.failures.first() {
            line += &format!(
                "; first: U_{{{},{}}} has measure {} > {}, radius {} too small",
                f.i, f.j, f.measure, f.bound, self.args.sup_radius
            );
        }
        self.emit(passed, CertifyBody { nseq: state.nseq.clone(), report })?;
        Ok(Outcome { passed, summary: line })
    }
}
