//! Run identity and the JSON manifest written next to every result.

use odometer::analysis::ClusterStats;
use odometer::prf::MAX_RUN;
use odometer::solver::{SolveOptions, SolveReport};
use odometer::stacks::{default_lambda, ModelKind, RotorSequence};
use odometer::{IdlaStack, Key, LowDiscrepancyStack, PeriodicStack, StackModel};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MAX_MOMENTS: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum SpecError {
    #[error("N must be positive")]
    ZeroChips,
    #[error("key must be 64 hexadecimal characters, got {0:?}")]
    BadKey(String),
    #[error("run index must lie in 1..={MAX_RUN}, got {0}")]
    BadRun(u32),
    #[error("lambda must be a nonnegative real, got {0}")]
    BadLambda(f64),
    #[error("rotor model needs a rotor sequence")]
    MissingSequence,
    #[error("growth factor must exceed 1, got {0}")]
    BadFactor(f64),
    #[error("crossover must be positive and cutoff pad nonnegative")]
    BadApprox,
    #[error("moments must be at most {MAX_MOMENTS}, got {0}")]
    BadMoments(usize),
    #[error("cannot parse N list entry {0:?}")]
    BadNList(String),
}

/// Everything that determines a run's output cluster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub model: ModelKind,
    #[serde(rename = "N")]
    pub n: u64,
    /// Rotor sequence of the periodic model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<RotorSequence>,
    /// Experiment key of the random models, as 64 hex characters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    /// Run index `a`.
    pub run: u32,
    pub lambda: f64,
    pub options: SolveOptions,
    /// Use the step-by-step simulator instead of the fast solver.
    pub oracle: bool,
    /// Number of boundary moments recorded.
    pub moments: usize,
}

impl RunSpec {
    /// A spec with default options; `lambda` follows the size-based default.
    pub fn new(model: ModelKind, n: u64) -> Self {
        RunSpec {
            model,
            n,
            seq: (model == ModelKind::Rotor).then_some(RotorSequence::CLASSIC),
            key: (model != ModelKind::Rotor).then(|| "0".repeat(64)),
            run: 1,
            lambda: if model == ModelKind::Idla { default_lambda(n) } else { 0.0 },
            options: SolveOptions { verify: false, ..SolveOptions::default() },
            oracle: false,
            moments: MAX_MOMENTS,
        }
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.n == 0 {
            return Err(SpecError::ZeroChips);
        }
        match self.model {
            ModelKind::Rotor => {
                if self.seq.is_none() {
                    return Err(SpecError::MissingSequence);
                }
            }
            ModelKind::Idla | ModelKind::Lds => {
                self.parsed_key()?;
                if self.run == 0 || self.run > MAX_RUN {
                    return Err(SpecError::BadRun(self.run));
                }
            }
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(SpecError::BadLambda(self.lambda));
        }
        let o = &self.options;
        if !(o.factor.is_finite() && o.factor > 1.0) {
            return Err(SpecError::BadFactor(o.factor));
        }
        let a = &o.approx;
        if !(a.crossover.is_finite() && a.crossover > 0.0 && a.cutoff_pad.is_finite() && a.cutoff_pad >= 0.0) {
            return Err(SpecError::BadApprox);
        }
        if self.moments > MAX_MOMENTS {
            return Err(SpecError::BadMoments(self.moments));
        }
        Ok(())
    }

    fn parsed_key(&self) -> Result<Key, SpecError> {
        let hex = self.key.as_deref().unwrap_or("");
        Key::from_hex(hex).ok_or_else(|| SpecError::BadKey(hex.to_string()))
    }

    /// The stack source for this run. Call [`RunSpec::validate`] first.
    pub fn stacks(&self) -> StackModel {
        match self.model {
            ModelKind::Rotor => StackModel::Periodic(PeriodicStack::new(self.seq.expect("validated"))),
            ModelKind::Idla => StackModel::Idla(IdlaStack::new(self.parsed_key().expect("validated"), self.run, self.lambda)),
            ModelKind::Lds => {
                StackModel::LowDiscrepancy(LowDiscrepancyStack::new(self.parsed_key().expect("validated"), self.run))
            }
        }
    }

    /// Centre used for the recentred radius difference.
    pub fn center(&self) -> (f64, f64) {
        match (self.model, self.seq) {
            (ModelKind::Rotor, Some(seq)) => seq.putative_center(),
            _ => (0.0, 0.0),
        }
    }

    /// Short key label for tables: the first 16 hex digits, `-` for rotor runs.
    pub fn key_id(&self) -> String {
        match (&self.model, &self.key) {
            (ModelKind::Rotor, _) | (_, None) => "-".to_string(),
            (_, Some(k)) => k.chars().take(16).collect::<String>().to_ascii_lowercase(),
        }
    }

    pub fn seq_label(&self) -> String {
        match (&self.model, &self.seq) {
            (ModelKind::Rotor, Some(s)) => s.to_string(),
            _ => "-".to_string(),
        }
    }

    /// File stem shared by all outputs of this run.
    pub fn stem(&self) -> String {
        match self.model {
            ModelKind::Rotor => format!("rotor_{}_N{}", self.seq_label(), self.n),
            m => format!("{m}_{}_N{}_a{}", &self.key_id()[..8.min(self.key_id().len())], self.n, self.run),
        }
    }
}

/// Radii of the final cluster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiiSummary {
    pub r_in: f64,
    pub r_out: f64,
    pub diff: f64,
    pub diff_prime: f64,
}

impl From<&ClusterStats> for RadiiSummary {
    fn from(s: &ClusterStats) -> Self {
        RadiiSummary { r_in: s.r_in, r_out: s.r_out, diff: s.diff, diff_prime: s.diff_prime }
    }
}

/// What a run was and what it produced. Replaying `spec` with the same
/// software version reproduces the cluster bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub spec: RunSpec,
    pub runtime_ms: f64,
    pub report: SolveReport,
    pub radii: RadiiSummary,
}

/// Parses a comma-separated list of sizes; entries are integers or `2^k`.
pub fn parse_n_list(s: &str) -> Result<Vec<u64>, SpecError> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            let bad = || SpecError::BadNList(t.to_string());
            let n = match t.split_once('^') {
                Some(("2", k)) => {
                    let k: u32 = k.parse().map_err(|_| bad())?;
                    1u64.checked_shl(k).filter(|_| k < 63).ok_or_else(bad)?
                }
                Some(_) => return Err(bad()),
                None => t.parse::<u64>().map_err(|_| bad())?,
            };
            if n == 0 {
                Err(SpecError::ZeroChips)
            } else {
                Ok(n)
            }
        })
        .collect()
}
