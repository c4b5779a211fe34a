//! Scenario loading and suite execution behind the `oplab` binary.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use oplab::algebra::{BlockAlgebra, Operator};
use oplab::matcore::{Matrix, C64};
use oplab::nclp::PIndex;
use oplab::report::{CheckRecord, Report};
use oplab::suites::{self, SuiteContext};

pub const SCENARIO_VERSION: u32 = 1;

/// The scenario used when `--scenario` is not given.
pub const DEFAULT_SCENARIO: &str = include_str!("../scenarios/default.json");
pub const SCENARIO_SCHEMA: &str = include_str!("../schemas/scenario.schema.json");
pub const REPORT_SCHEMA: &str = include_str!("../schemas/report.schema.json");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("malformed scenario at `{path}`: {message}")]
    Scenario { path: String, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("suite {suite} failed: {source}")]
    Suite { suite: String, source: oplab::LabError },
    #[error("cannot write report: {0}")]
    Write(std::io::Error),
}

/// One block of a matrix given by its real and optional imaginary rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSpec {
    pub re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<Vec<f64>>>,
}

impl MatrixSpec {
    fn to_matrix(&self) -> Result<Matrix, String> {
        let n = self.re.len();
        if self.re.iter().any(|row| row.len() != n) {
            return Err(format!("real part must be square, got {n} rows of lengths {:?}", lens(&self.re)));
        }
        if let Some(im) = &self.im {
            if im.len() != n || im.iter().any(|row| row.len() != n) {
                return Err(format!("imaginary part must be {n}x{n}, got lengths {:?}", lens(im)));
            }
        }
        Ok(Matrix::from_fn(n, n, |i, j| {
            C64::new(self.re[i][j], self.im.as_ref().map_or(0.0, |im| im[i][j]))
        }))
    }
}

fn lens(rows: &[Vec<f64>]) -> Vec<usize> {
    rows.iter().map(Vec::len).collect()
}

fn operator(blocks: &[MatrixSpec]) -> Result<Operator, String> {
    Ok(Operator::new(blocks.iter().map(MatrixSpec::to_matrix).collect::<Result<_, _>>()?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Indices {
    #[serde(default)]
    pub p: Vec<PIndex>,
    #[serde(default)]
    pub lambda: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Suite names, or `"all"`.
    #[serde(default)]
    pub suites: Vec<String>,
    #[serde(default)]
    pub algebra: Option<BlockAlgebra>,
    /// One matrix per block of `algebra`.
    #[serde(default)]
    pub hamiltonian: Option<Vec<MatrixSpec>>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub perturbations: Vec<Vec<MatrixSpec>>,
    #[serde(default)]
    pub indices: Option<Indices>,
    /// Per-check tolerance overrides, before `--tol-scale`.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    /// Caps the number of random instances per check.
    #[serde(default)]
    pub trials: Option<usize>,
}

fn scenario_error(path: &str, message: impl Into<String>) -> CliError {
    CliError::Scenario { path: path.into(), message: message.into() }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            scenario_error(&path, e.into_inner().to_string())
        })?;
        if scenario.version != SCENARIO_VERSION {
            return Err(scenario_error(
                "version",
                format!("unsupported version {}, expected {SCENARIO_VERSION}", scenario.version),
            ));
        }
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Scenario, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| CliError::Read { path: path.display().to_string(), source })?;
        Scenario::parse(&text)
    }

    pub fn default_bundled() -> Scenario {
        Scenario::parse(DEFAULT_SCENARIO).expect("bundled scenario is valid")
    }

    /// Builds the suite context; `seed` is the resolved seed (flag or scenario).
    pub fn context(&self, seed: u64, tol_scale: f64) -> Result<SuiteContext, CliError> {
        let mut ctx = SuiteContext::new(seed);
        ctx.tol_scale = tol_scale;
        ctx.trials = self.trials;
        ctx.algebra = self.algebra.clone();
        ctx.beta = self.beta;
        if let Some(h) = &self.hamiltonian {
            if self.algebra.is_none() {
                return Err(scenario_error("hamiltonian", "a hamiltonian needs an algebra"));
            }
            let h = operator(h).map_err(|m| scenario_error("hamiltonian", m))?;
            if !h.is_hermitian(1e-12) {
                return Err(scenario_error("hamiltonian", "the hamiltonian must be hermitian"));
            }
            ctx.hamiltonian = Some(h);
        }
        if !self.perturbations.is_empty() && self.algebra.is_none() {
            return Err(scenario_error("perturbations", "perturbations need an algebra"));
        }
        for (i, q) in self.perturbations.iter().enumerate() {
            ctx.perturbations.push(operator(q).map_err(|m| scenario_error(&format!("perturbations[{i}]"), m))?);
        }
        if let Some(beta) = self.beta {
            if !(beta.is_finite() && beta != 0.0) {
                return Err(scenario_error("beta", format!("beta must be finite and non-zero, got {beta}")));
            }
        }
        if let Some(ind) = &self.indices {
            if !ind.p.is_empty() {
                ctx.p_values = ind.p.clone();
            }
            if !ind.lambda.is_empty() {
                if let Some(bad) = ind.lambda.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
                    return Err(scenario_error("indices.lambda", format!("lambda must be positive and finite, got {bad}")));
                }
                ctx.lambdas = ind.lambda.clone();
            }
        }
        for (key, tol) in &self.tolerances {
            if !(*tol > 0.0 && tol.is_finite()) {
                return Err(scenario_error(&format!("tolerances.{key}"), format!("tolerance must be positive, got {tol}")));
            }
        }
        ctx.tolerances = self.tolerances.clone();
        ctx.validate().map_err(|e| scenario_error("", e.to_string()))?;
        Ok(ctx)
    }
}

/// Expands `all` and rejects unknown names, keeping first occurrences in order.
pub fn resolve_suites(names: &[String]) -> Result<Vec<&'static str>, CliError> {
    let mut out: Vec<&'static str> = Vec::new();
    for name in names {
        let expanded: Vec<&'static str> = if name == "all" {
            suites::SUITES.to_vec()
        } else {
            match suites::SUITES.iter().find(|s| **s == name) {
                Some(s) => vec![*s],
                None => {
                    return Err(CliError::Usage(format!(
                        "unknown suite '{name}'; known suites: all, {}",
                        suites::SUITES.join(", ")
                    )))
                }
            }
        };
        for s in expanded {
            if !out.contains(&s) {
                out.push(s);
            }
        }
    }
    Ok(out)
}

pub struct RunOptions {
    pub suites: Vec<String>,
    pub seed: Option<u64>,
    pub tol_scale: f64,
    pub parallel: bool,
}

/// Runs the selected suites; suites given on the command line replace the
/// scenario's list.
pub fn run(scenario: &Scenario, opts: &RunOptions) -> Result<Report, CliError> {
    let names = if opts.suites.is_empty() { &scenario.suites } else { &opts.suites };
    let selected = resolve_suites(names)?;
    let seed = opts.seed.or(scenario.seed);
    if let Some(s) = selected.iter().find(|s| suites::is_randomized(s)) {
        if seed.is_none() {
            return Err(CliError::Usage(format!(
                "suite '{s}' is randomized and needs a seed (scenario field `seed` or --seed)"
            )));
        }
    }
    if !(opts.tol_scale > 0.0 && opts.tol_scale.is_finite()) {
        return Err(CliError::Usage(format!("--tol-scale must be positive, got {}", opts.tol_scale)));
    }
    let ctx = scenario.context(seed.unwrap_or(0), opts.tol_scale)?;
    let run_one = |name: &&'static str| {
        suites::run_suite(name, &ctx).map_err(|source| CliError::Suite { suite: name.to_string(), source })
    };
    let per_suite: Vec<Vec<CheckRecord>> = if opts.parallel {
        selected.par_iter().map(run_one).collect::<Result<_, _>>()?
    } else {
        selected.iter().map(run_one).collect::<Result<_, _>>()?
    };
    Ok(Report::new(per_suite.into_iter().flatten().collect(), seed))
}
