//! Design-space exploration for single-phase, multi-split fluid cooling loops.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`enumeration`] and [`spatial`] produce candidate architectures, each a
//!    rooted tree ([`ConfigGraph`]) with the tank at the root.
//! 2. [`thermal`] expands a tree into a lumped-capacitance physics graph and
//!    assembles its bilinear state equation.
//! 3. [`oloc`] transcribes the variable-horizon flow control problem into a
//!    nonlinear program and solves it with the interior-point method in [`nlp`],
//!    yielding the thermal endurance of the architecture.
//! 4. [`harness`] fans the population out over a worker pool, ranks the results
//!    and writes flat-file reports.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod enumeration;
pub mod error;
pub mod harness;
pub mod nlp;
pub mod oloc;
pub mod spatial;
pub mod thermal;

pub use config::{ConfigGraph, FlowMap};
pub use error::{Error, Result};
