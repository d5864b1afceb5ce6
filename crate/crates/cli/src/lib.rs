//! File formats, run orchestration and sweeps on top of the `odometer`
//! core crate.

pub mod records;
pub mod render;
pub mod run;
pub mod snapshot;
pub mod spec;

pub use records::{aggregate, MomentRecord, RunRecord, TableRow};
pub use render::{render, Image, RenderMode};
pub use run::{execute, phase1_snapshot, sweep, RunError, RunOutput, SweepOutput};
pub use snapshot::{Snapshot, SnapshotError};
pub use spec::{parse_n_list, RunManifest, RunSpec, SpecError};
