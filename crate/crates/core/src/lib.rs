//! Exact odometers for abelian-stack growth models on the square lattice.
//!
//! Chips start stacked at the origin; every site holding two or more chips
//! sends one to a neighbour chosen by the next rotor in its stack. The
//! final configuration is determined by the *odometer* `u(x)`, the number
//! of firings at each site. This crate computes it in three phases:
//! an analytic approximation `u1`, multiscale annihilation of hills and
//! holes, and removal of rotor cycles.
//!
//! The crate is `no_std` (with `alloc`); IO lives in the companion CLI.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod analysis;
pub mod engine;
pub mod graph;
pub mod lattice;
pub mod potential;
pub mod solver;
pub mod prf;
pub mod stacks;

pub use engine::{oracle_simulate, verify_odometer, Config, Outcome, Verdict};
pub use lattice::{Direction, Field, IntField, Site};
pub use prf::{Key, Prf};
pub use stacks::{IdlaStack, LowDiscrepancyStack, ModelKind, PeriodicStack, RotorSequence, RotorStacks, StackModel};
