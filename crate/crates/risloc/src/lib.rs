//! Localization-optimal phase-profile design for a reflective RIS operating
//! in the near field.
//!
//! A single-antenna base station illuminates a reflective RIS whose `M`
//! phase-controlled elements redirect the signal to a user at an unknown
//! position; the line of sight is blocked. This crate evaluates how well
//! that position can be estimated (Fisher information and the position
//! error bound), finds the beam-power allocation that minimizes the bound
//! via a small semidefinite program, converts the result into feasible
//! unit-modulus, time-shared phase profiles, and benchmarks everything
//! against random-phase and directional-codebook baselines.
//!
//! The library is the primary interface; each major capability has a
//! runnable example:
//!
//! ```text
//! cargo run --release --example peb_of_random_profiles
//! cargo run --release --example optimal_allocation
//! cargo run --release --example beam_cuts
//! cargo run --release --example distance_sweep
//! cargo run --release --example time_sharing
//! cargo run --release --example directional_vs_random
//! ```
//!
//! A thin `risloc` binary exposes the same flows as `sweep`, `beams`,
//! `optimize`, and `baseline` subcommands for scripted use.

pub mod array;
pub mod baselines;
pub mod config;
pub mod design;
pub mod error;
pub mod fim;
pub mod geometry;
pub mod profiles;
pub mod report;
mod sdp;
pub mod sweep;

pub use error::{Error, Result};
