//! Stable school seating across two enrollment rounds.
//!
//! The library models a school-choice market with strict, possibly truncated
//! preference lists on both sides, and provides:
//!
//! - capacitated deferred acceptance from either proposing side ([`da`]),
//! - re-allocation mechanisms that restore stability after the market grows
//!   on the school side or the student side while moving as few already
//!   seated students as possible ([`realloc`]),
//! - exhaustive search oracles for small markets that certify the mechanisms
//!   and solve the associated optimization problems exactly ([`oracle`]),
//! - reductions from set cover that generate hard instances of those
//!   optimization problems ([`gadgets`]),
//! - a canonical JSON interchange format, a seeded instance generator, and a
//!   command line interface around all of the above.

pub mod cli;
pub mod da;
pub mod error;
pub mod gadgets;
pub mod generate;
pub mod io;
pub mod model;
pub mod oracle;
pub mod realloc;
mod report;

pub use error::{CertificationFailure, Error, MatchingViolation, Result};
pub use model::{
    find_blocking_pairs, is_stable, join, meet, moved_set, prefers, rank_of, validate_matching,
    BlockingKind, BlockingPair, Instance, Matching, ReallocationResult, School, SchoolId, Student,
    StudentId, TraceMove, ValidationReport, Violation, UNMATCHED_TOKEN,
};
