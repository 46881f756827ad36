//! Desk-scale numerical kernels for directional strip attention, chain-graph
//! frame reasoning, text-audio condition fusion, and diffusion training
//! objectives, together with the verification machinery that proves their
//! properties: literal-loop oracles, central finite-difference gradient
//! checks, impulse-response probes, and a FLOP-model benchmark harness.
//!
//! All verification paths run in `f64`. The `parallel` feature (on by
//! default) enables rayon data parallelism over independent inputs and
//! cases; results are identical to serial execution because work items are
//! independent and reductions run in index order.

pub mod attention;
pub mod bench;
pub mod condition_fusion;
pub mod diffusion;
pub(crate) mod par;
pub mod temporal_graph;
pub mod tensor;
pub mod tsr1;
pub mod verify;

/// Seed used by every randomized suite unless the caller overrides it.
pub const DEFAULT_SEED: u64 = 42;
