//! Single runs and parallel sweeps.

use std::time::Instant;

use odometer::analysis::ClusterStats;
use odometer::engine::{add_fields, oracle_simulate, point_mass, stack_laplacian, verify_odometer, Odometer, Outcome};
use odometer::potential::{approx_odometer, table_radius_for, KernelTable};
use odometer::solver::{odometer_error, solve, SolveError, SolveReport};
use odometer::{RotorStacks, Verdict};
use rayon::prelude::*;
use thiserror::Error;

use crate::records::{aggregate, MomentRecord, RunRecord, TableRow};
use crate::snapshot::{Snapshot, SnapshotError};
use crate::spec::{RadiiSummary, RunManifest, RunSpec, SpecError, VERSION};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("odometer failed verification: {0}")]
    Verification(Verdict),
    #[error("initial configuration is negative at {0}")]
    NegativeInput(odometer::Site),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

impl From<SolveError> for RunError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::Verification(v) => RunError::Verification(v),
            SolveError::NegativeInput(s) => RunError::NegativeInput(s),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub spec: RunSpec,
    pub outcome: Outcome,
    pub u1: Odometer,
    pub report: SolveReport,
    pub stats: ClusterStats,
    pub runtime_ms: f64,
}

impl RunOutput {
    pub fn record(&self) -> RunRecord {
        let s = &self.spec;
        RunRecord {
            model: s.model,
            seq: s.seq_label(),
            n: s.n,
            a: s.run,
            key_id: s.key_id(),
            lambda: s.lambda,
            r_in: self.stats.r_in,
            r_out: self.stats.r_out,
            diff: self.stats.diff,
            diff_prime: self.stats.diff_prime,
            abs_err_u1: self.report.abs_err_u1,
            max_err_u1: self.report.max_err_u1,
            highest_hill: self.report.highest_hill,
            deepest_hole: self.report.deepest_hole,
            runtime_ms: self.runtime_ms,
        }
    }

    pub fn moment_records(&self) -> Vec<MomentRecord> {
        self.stats
            .moments
            .iter()
            .enumerate()
            .map(|(i, &(re, im))| MomentRecord { n: self.spec.n, a: self.spec.run, m: i as u32 + 1, re, im })
            .collect()
    }

    pub fn manifest(&self) -> RunManifest {
        RunManifest {
            version: VERSION.to_string(),
            spec: self.spec.clone(),
            runtime_ms: self.runtime_ms,
            report: self.report.clone(),
            radii: RadiiSummary::from(&self.stats),
        }
    }

    pub fn snapshot(&self) -> Result<Snapshot, SnapshotError> {
        Snapshot::from_outcome(&self.outcome)
    }
}

/// A kernel table large enough for every spec in `specs`.
pub fn table_for<'a>(specs: impl IntoIterator<Item = &'a RunSpec>) -> KernelTable {
    let r = specs.into_iter().map(|s| table_radius_for(s.n, &s.options.approx)).max().unwrap_or(1);
    KernelTable::new(r)
}

/// The approximate odometer of a spec.
pub fn approx_for(spec: &RunSpec, table: &KernelTable) -> Odometer {
    approx_odometer(spec.n, table, &spec.options.approx)
}

/// Runs one spec with the fast solver, or with the step-by-step simulator
/// if `spec.oracle` is set. `table` must cover the spec's kernel radius.
pub fn execute(spec: &RunSpec, table: &KernelTable) -> Result<RunOutput, RunError> {
    spec.validate()?;
    let start = Instant::now();
    let mut stacks = spec.stacks();
    let sigma0 = point_mass(spec.n);
    let t = Instant::now();
    let u1 = approx_for(spec, table);
    let approx_ns = t.elapsed().as_nanos() as u64;

    let (outcome, report) = if spec.oracle {
        stacks.prepare(&u1);
        let sigma1 = add_fields(&sigma0, &stack_laplacian(&u1, &mut stacks));
        let outcome = oracle_simulate(&mut stacks, &sigma0);
        let (abs, max) = odometer_error(&u1, &outcome.odometer);
        let report = SolveReport {
            chips: spec.n,
            abs_err_u1: abs,
            max_err_u1: max,
            highest_hill: sigma1.data().iter().copied().max().unwrap_or(0),
            deepest_hole: sigma1.data().iter().copied().min().unwrap_or(0),
            ..SolveReport::default()
        };
        if spec.options.verify {
            let v = verify_odometer(&outcome.odometer, &sigma0, &mut stacks);
            if !v.is_ok() {
                return Err(RunError::Verification(v));
            }
        }
        (outcome, report)
    } else {
        let clock = move || start.elapsed().as_nanos() as u64;
        let mut sol = solve(&mut stacks, &sigma0, &u1, &spec.options, Some(&clock))?;
        sol.report.phase_ns[0] = approx_ns;
        (sol.outcome, sol.report)
    };
    let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    let stats = ClusterStats::of(&outcome, spec.n, spec.center(), spec.moments);
    Ok(RunOutput { spec: spec.clone(), outcome, u1, report, stats, runtime_ms })
}

/// The configuration right after applying `u1`: chips `σ1`, the odometer
/// `u1` and the rotors on top of the stacks.
pub fn phase1_snapshot(spec: &RunSpec, table: &KernelTable) -> Result<Snapshot, RunError> {
    spec.validate()?;
    let mut stacks = spec.stacks();
    let u1 = approx_for(spec, table);
    stacks.prepare(&u1);
    let sigma1 = add_fields(&point_mass(spec.n), &stack_laplacian(&u1, &mut stacks));
    Ok(Snapshot::capture(&sigma1, &u1, |s| stacks.rotor(s, u1.get(s) as u64))?)
}

#[derive(Clone, Debug, Default)]
pub struct SweepOutput {
    pub runs: Vec<RunRecord>,
    pub moments: Vec<MomentRecord>,
    pub table: Vec<TableRow>,
}

/// Runs every spec with run indices `1..=trials` (a single run for the
/// deterministic rotor model) on `jobs` threads, `0` meaning all cores.
/// Rows come out in spec order, then by run index.
pub fn sweep(specs: &[RunSpec], trials: u32, jobs: usize) -> Result<SweepOutput, RunError> {
    for s in specs {
        s.validate()?;
    }
    let table = table_for(specs);
    let mut work: Vec<RunSpec> = Vec::new();
    for s in specs {
        let count = if s.model == odometer::ModelKind::Rotor { 1 } else { trials };
        for a in 1..=count {
            work.push(RunSpec { run: a, ..s.clone() });
        }
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| RunError::Pool(e.to_string()))?;
    let results: Vec<(RunRecord, Vec<MomentRecord>)> = pool.install(|| {
        work.par_iter()
            .map(|s| execute(s, &table).map(|o| (o.record(), o.moment_records())))
            .collect::<Result<_, _>>()
    })?;
    let mut out = SweepOutput::default();
    for (r, m) in results {
        out.runs.push(r);
        out.moments.extend(m);
    }
    out.table = aggregate(&out.runs);
    Ok(out)
}
