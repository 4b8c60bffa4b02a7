//! Labeled multi-stage graphs, the polynomial sigma-path decision kernel,
//! SAT reductions into the restricted graph class, instance generators,
//! and a differential-testing harness that checks the kernel against
//! exhaustive oracles.

pub mod format;
pub mod generators;
pub mod graph;
pub mod harness;
pub mod kernel;
pub mod oracle;
pub mod reduction;
