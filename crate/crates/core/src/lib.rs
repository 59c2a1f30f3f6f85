//! Core library for spec-anvil: a specification-first automated program
//! repair pipeline for a bundled corpus of reproducible defects.
//!
//! The flow, end to end: a defect is checked out from the [`harness`]
//! corpus, agents ([`agents`]) write a behavioral spec ([`gherkin`]) and
//! bind its steps to runnable commands ([`runtime`]), the spec is
//! quality-gated against the buggy and fixed trees ([`rqa`]), a fixer
//! patch is produced and adjudicated ([`pipeline`]), and campaign results
//! are aggregated into report tables ([`metrics`]).

pub mod agents;
pub mod exec;
pub mod gherkin;
pub mod harness;
pub mod metrics;
pub mod pipeline;
pub mod rqa;
pub mod runtime;
#[cfg(test)]
pub(crate) mod test_support;
