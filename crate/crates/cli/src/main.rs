use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use odometer::engine::{point_mass, verify_odometer};
use odometer::potential::{KernelTable, Rounding};
use odometer::stacks::{default_lambda, ModelKind, RotorSequence, RotorStacks};
use odometer_cli::records::{read_csv, write_csv};
use odometer_cli::run::{approx_for, table_for};
use odometer_cli::{
    aggregate, execute, parse_n_list, phase1_snapshot, render, sweep, RenderMode, RunError, RunManifest, RunOutput,
    RunRecord, RunSpec, Snapshot, SnapshotError, SpecError,
};

#[derive(Parser)]
#[command(name = "odometer", version, about = "Exact abelian-stack growth clusters on Z²")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute one cluster and write its manifest, records, snapshot and pictures.
    Simulate(SimulateArgs),
    /// Run many sizes and trials in parallel and write runs, moments and a summary table.
    Sweep(SweepArgs),
    /// Draw a snapshot as a PPM picture.
    Render(RenderArgs),
    /// Check a snapshot's odometer against the run it claims to come from.
    Verify(VerifyArgs),
    /// Recompute a run from its manifest.
    Replay(ReplayArgs),
    /// Summarise a runs CSV into a per-size table.
    Aggregate(AggregateArgs),
    /// Write the exact potential kernel table.
    Kernel(KernelArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Rotor,
    Idla,
    Lds,
}

impl From<Model> for ModelKind {
    fn from(m: Model) -> Self {
        match m {
            Model::Rotor => ModelKind::Rotor,
            Model::Idla => ModelKind::Idla,
            Model::Lds => ModelKind::Lds,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RoundingArg {
    Floor,
    Nearest,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "rotor")]
    model: Model,
    /// Rotor sequence of the periodic model, four letters such as NWSE.
    #[arg(long, value_parser = parse_seq)]
    seq: Option<RotorSequence>,
    /// Experiment key for the random models, 64 hex characters.
    #[arg(long)]
    key: Option<String>,
    /// Frontier parameter of the IDLA stacks; defaults by size.
    #[arg(long)]
    lambda: Option<f64>,
    /// Growth factor between grid periods.
    #[arg(long, default_value_t = 1.9)]
    factor: f64,
    /// Norm above which the kernel expansion replaces the exact table.
    #[arg(long, default_value_t = 100.0)]
    crossover: f64,
    /// Extra radius beyond the disk where the approximation is kept.
    #[arg(long, default_value_t = 0.0)]
    pad: f64,
    #[arg(long, value_enum, default_value = "floor")]
    rounding: RoundingArg,
    /// Boundary moments to record.
    #[arg(long, default_value_t = 100)]
    moments: usize,
    /// Use the step-by-step simulator.
    #[arg(long)]
    oracle: bool,
    /// Check the final odometer.
    #[arg(long)]
    verify: bool,
}

impl ModelArgs {
    fn spec(&self, n: u64, run: u32) -> RunSpec {
        let model = ModelKind::from(self.model);
        let mut s = RunSpec::new(model, n);
        if let Some(seq) = self.seq {
            s.seq = Some(seq);
        }
        if self.key.is_some() {
            s.key = self.key.clone();
        }
        s.run = run;
        s.lambda = match (model, self.lambda) {
            (_, Some(l)) => l,
            (ModelKind::Idla, None) => default_lambda(n),
            _ => 0.0,
        };
        s.options.factor = self.factor;
        s.options.approx.crossover = self.crossover;
        s.options.approx.cutoff_pad = self.pad;
        s.options.approx.rounding = match self.rounding {
            RoundingArg::Floor => Rounding::Floor,
            RoundingArg::Nearest => Rounding::Nearest,
        };
        s.options.verify = self.verify;
        s.oracle = self.oracle;
        s.moments = self.moments;
        s
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long = "n", short = 'n')]
    n: u64,
    #[command(flatten)]
    model: ModelArgs,
    /// Run index a.
    #[arg(long, default_value_t = 1)]
    run: u32,
    /// Output directory; defaults to $ODOMETER_OUT, then the current directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write a picture in this mode (repeatable).
    #[arg(long, value_enum)]
    render: Vec<RenderMode>,
    /// Pixels per site in pictures.
    #[arg(long, default_value_t = 1)]
    scale: u32,
    /// Also write the configuration right after applying the approximate odometer.
    #[arg(long)]
    phase1: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated sizes, e.g. "2^10,2^12,5000".
    #[arg(long)]
    n_list: String,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 1)]
    trials: u32,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    snapshot: PathBuf,
    #[arg(long, value_enum, default_value = "rotors")]
    mode: RenderMode,
    /// Manifest of the run; needed for odo-diff.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output PPM file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    scale: u32,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    snapshot: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AggregateArgs {
    #[arg(long)]
    runs: PathBuf,
    /// Output CSV; defaults to table.csv next to the runs file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long)]
    radius: u32,
    /// Output CSV; standard output if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A verification failure, reported with exit status 3.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct Mismatch(String);

fn parse_seq(s: &str) -> Result<RotorSequence, String> {
    s.parse().map_err(|_| format!("{s:?} is not a permutation of N, E, S, W"))
}

/// Bad arguments that clap cannot catch, reported with exit status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct Usage(&'static str);

fn out_dir(out: Option<PathBuf>) -> Result<PathBuf> {
    let dir = out.or_else(|| std::env::var_os("ODOMETER_OUT").map(PathBuf::from)).unwrap_or_else(|| ".".into());
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_json<T: serde::Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, v)?;
    writeln!(w)?;
    Ok(())
}

fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let m: RunManifest = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    m.spec.validate()?;
    Ok(m)
}

fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Snapshot::from_bytes(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn mode_name(m: RenderMode) -> &'static str {
    match m {
        RenderMode::Rotors => "rotors",
        RenderMode::Chips => "chips",
        RenderMode::OdoDiff => "odo-diff",
    }
}

fn write_outputs(dir: &Path, out: &RunOutput, modes: &[RenderMode], scale: u32) -> Result<PathBuf> {
    let stem = out.spec.stem();
    let path = |ext: &str| dir.join(format!("{stem}.{ext}"));
    write_json(&path("json"), &out.manifest())?;
    write_csv(&path("csv"), &[out.record()])?;
    write_csv(&path("moments.csv"), &out.moment_records())?;
    let snap = out.snapshot()?;
    fs::write(path("snap"), snap.to_bytes())?;
    for &m in modes {
        fs::write(path(&format!("{}.ppm", mode_name(m))), render(&snap, m, Some(&out.u1), scale).to_ppm())?;
    }
    Ok(path("json"))
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let spec = a.model.spec(a.n, a.run);
    spec.validate()?;
    let dir = out_dir(a.out)?;
    let table = table_for([&spec]);
    if a.phase1 {
        let snap = phase1_snapshot(&spec, &table)?;
        fs::write(dir.join(format!("{}.phase1.snap", spec.stem())), snap.to_bytes())?;
        for &m in &a.render {
            if m != RenderMode::OdoDiff {
                let img = render(&snap, m, None, a.scale);
                fs::write(dir.join(format!("{}.phase1.{}.ppm", spec.stem(), mode_name(m))), img.to_ppm())?;
            }
        }
    }
    let out = execute(&spec, &table)?;
    let manifest = write_outputs(&dir, &out, &a.render, a.scale)?;
    let r = out.record();
    println!(
        "{} N={} diff={:.4} diff'={:.4} hill={} hole={} ops={} runtime={:.1}ms -> {}",
        spec.model,
        spec.n,
        r.diff,
        r.diff_prime,
        r.highest_hill,
        r.deepest_hole,
        out.report.fires + out.report.unfires + out.report.cycle_unfires,
        r.runtime_ms,
        manifest.display()
    );
    Ok(())
}

fn run_sweep(a: SweepArgs) -> Result<()> {
    let ns = parse_n_list(&a.n_list)?;
    let specs: Vec<RunSpec> = ns.iter().map(|&n| a.model.spec(n, 1)).collect();
    let dir = out_dir(a.out)?;
    let out = sweep(&specs, a.trials, a.jobs)?;
    write_csv(&dir.join("runs.csv"), &out.runs)?;
    write_csv(&dir.join("moments.csv"), &out.moments)?;
    write_csv(&dir.join("table.csv"), &out.table)?;
    for t in &out.table {
        println!(
            "{} N={} trials={} diff={:.4}±{:.4} diff'={:.4}±{:.4} hill={} hole={}",
            t.model, t.n, t.trials, t.diff_mean, t.diff_sd, t.diff_prime_mean, t.diff_prime_sd, t.highest_hill, t.deepest_hole
        );
    }
    Ok(())
}

fn run_render(a: RenderArgs) -> Result<()> {
    let snap = read_snapshot(&a.snapshot)?;
    let u1 = match (&a.manifest, a.mode) {
        (Some(p), _) => {
            let m = read_manifest(p)?;
            Some(approx_for(&m.spec, &table_for([&m.spec])))
        }
        (None, RenderMode::OdoDiff) => return Err(Usage("odo-diff mode needs --manifest").into()),
        (None, _) => None,
    };
    let img = render(&snap, a.mode, u1.as_ref(), a.scale);
    fs::write(&a.out, img.to_ppm()).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

fn run_verify(a: VerifyArgs) -> Result<()> {
    let m = read_manifest(&a.manifest)?;
    let snap = read_snapshot(&a.snapshot)?;
    let spec = &m.spec;
    if snap.chips() != spec.n as i64 {
        return Err(Mismatch(format!("snapshot holds {} chips, manifest says {}", snap.chips(), spec.n)).into());
    }
    let mut stacks = spec.stacks();
    stacks.prepare(&approx_for(spec, &table_for([spec])));
    let u = snap.odometer();
    let verdict = verify_odometer(&u, &point_mass(spec.n), &mut stacks);
    if !verdict.is_ok() {
        return Err(Mismatch(format!("not the odometer: {verdict}")).into());
    }
    let sigma = odometer::engine::add_fields(&point_mass(spec.n), &odometer::engine::stack_laplacian(&u, &mut stacks));
    for s in snap.sites() {
        if sigma.get(s) != i64::from(snap.sigma_at(s)) {
            return Err(Mismatch(format!("chip count at {s} disagrees with the odometer")).into());
        }
        if snap.odo_at(s) > 0 && snap.top_at(s) != Some(stacks.rotor(s, u64::from(snap.odo_at(s)))) {
            return Err(Mismatch(format!("top rotor at {s} disagrees with the odometer")).into());
        }
    }
    println!("ok: {} N={} odometer verified", spec.model, spec.n);
    Ok(())
}

fn run_replay(a: ReplayArgs) -> Result<()> {
    let m = read_manifest(&a.manifest)?;
    let dir = out_dir(a.out)?;
    let out = execute(&m.spec, &table_for([&m.spec]))?;
    write_outputs(&dir, &out, &[], 1)?;
    if out.manifest().radii != m.radii {
        return Err(Mismatch("replayed radii differ from the manifest".into()).into());
    }
    println!("replayed {} into {}", m.spec.stem(), dir.display());
    Ok(())
}

fn run_aggregate(a: AggregateArgs) -> Result<()> {
    let runs: Vec<RunRecord> = read_csv(&a.runs).with_context(|| format!("reading {}", a.runs.display()))?;
    let out = a.out.unwrap_or_else(|| a.runs.with_file_name("table.csv"));
    write_csv(&out, &aggregate(&runs))?;
    Ok(())
}

fn run_kernel(a: KernelArgs) -> Result<()> {
    let table = KernelTable::new(a.radius);
    let sink: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["x", "y", "p_num", "p_den", "q_num", "q_den"])?;
    for (x, y, v, _) in table.rows() {
        w.write_record([
            x.to_string(),
            y.to_string(),
            v.p.numer().to_string(),
            v.p.denom().to_string(),
            v.q.numer().to_string(),
            v.q.denom().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<Mismatch>() {
            return 3;
        }
        if let Some(r) = cause.downcast_ref::<RunError>() {
            return match r {
                RunError::Verification(_) => 3,
                RunError::Spec(_) | RunError::Snapshot(_) | RunError::NegativeInput(_) => 2,
                RunError::Pool(_) => 1,
            };
        }
        if let Some(s) = cause.downcast_ref::<SnapshotError>() {
            return if matches!(s, SnapshotError::Io(_)) { 1 } else { 2 };
        }
        if cause.is::<SpecError>() || cause.is::<Usage>() || cause.is::<serde_json::Error>() || cause.is::<csv::Error>() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Simulate(a) => simulate(a),
        Cmd::Sweep(a) => run_sweep(a),
        Cmd::Render(a) => run_render(a),
        Cmd::Verify(a) => run_verify(a),
        Cmd::Replay(a) => run_replay(a),
        Cmd::Aggregate(a) => run_aggregate(a),
        Cmd::Kernel(a) => run_kernel(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
