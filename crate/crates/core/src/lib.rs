//! Interpretable patient group definitions learned from a small set of
//! positive examples.
//!
//! The pipeline reduces every patient trace to a set of distinct activities
//! and codes, mines frequent activity itemsets over the example patients,
//! keeps the single longest pattern, attaches the codes that co-occur with
//! it, and then scores the whole population by how many definition items
//! each patient is missing. Cut-offs on those scores are calibrated from a
//! held-out part of the example set only.
//!
//! This crate is `no_std` and needs only `alloc`. File formats, the
//! synthetic generator, the CLI and the HTTP service live in the `cohortdef`
//! crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod bits;
pub mod calibration;
mod error;
pub mod eval;
pub mod eventlog;
pub mod groupdef;
pub mod mining;
pub mod scoring;
mod threshold;

pub use calibration::{
    calibrate, elbow, lee_liu, pareto_frontier, sweep, Calibrated, CalibrationResult, Elbow,
    Method, SweepPoint,
};
pub use error::{Error, Result};
pub use eval::{draw_sample, evaluate, spearman, EvalReport, SamplePlan};
pub use eventlog::{
    ActivityId, CodeId, Event, EventLog, EventLogBuilder, EventRecord, PatientProjection,
    Timestamp, Trace,
};
pub use groupdef::{
    build_definition, dbc_support, relax_activities, relax_dbcs, select_dbcs, select_pattern,
    GroupDefinition, Provenance, RelaxSchedule, RelaxationStep,
};
pub use mining::{
    brute_force_mine, fp_growth, longest_frequent, support_of, FrequentPattern, MiningResult,
};
pub use scoring::{classify, score_patient, score_population, DefinitionIndex, PatientScore};
pub use threshold::Threshold;

/// Version string recorded in definition provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
