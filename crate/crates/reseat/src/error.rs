//! Error type shared by the whole crate.

use std::collections::BTreeSet;
use std::fmt;

use crate::model::{BlockingPair, SchoolId, StudentId, ValidationReport};

pub type Result<T> = std::result::Result<T, Error>;

/// How a matching fails the basic matching invariants for an instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MatchingViolation {
    /// A student of the instance has no entry in the matching.
    MissingEntry(StudentId),
    /// The matching mentions a student the instance does not have.
    ForeignStudent(StudentId),
    /// An assignment points at a school the instance does not have.
    ForeignSchool { student: StudentId, school: SchoolId },
    /// Student and school are matched but at least one side does not list the other.
    Unacceptable { student: StudentId, school: SchoolId },
    /// More students assigned to a school than it has seats.
    OverCapacity {
        school: SchoolId,
        capacity: u32,
        assigned: usize,
    },
}

impl fmt::Display for MatchingViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatchingViolation::MissingEntry(s) => {
                write!(f, "student `{s}` has no entry")
            }
            MatchingViolation::ForeignStudent(s) => {
                write!(f, "student `{s}` is not in the instance")
            }
            MatchingViolation::ForeignSchool { student, school } => {
                write!(f, "student `{student}` is assigned to unknown school `{school}`")
            }
            MatchingViolation::Unacceptable { student, school } => {
                write!(
                    f,
                    "student `{student}` and school `{school}` are matched but do not both list each other"
                )
            }
            MatchingViolation::OverCapacity {
                school,
                capacity,
                assigned,
            } => {
                write!(f, "school `{school}` holds {assigned} students but has capacity {capacity}")
            }
        }
    }
}

/// Why a mechanism's own output failed its final certification.
///
/// These indicate a bug in the mechanism (or a violated theory claim), never bad
/// user input, and map to a dedicated process exit code in the CLI.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CertificationFailure {
    Blocking(BlockingPair),
    Capacity {
        school: SchoolId,
        capacity: u32,
        assigned: usize,
    },
    MovedSet {
        expected: BTreeSet<StudentId>,
        actual: BTreeSet<StudentId>,
    },
    Invariant(String),
}

impl fmt::Display for CertificationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CertificationFailure::Blocking(p) => write!(f, "blocking pair {p}"),
            CertificationFailure::Capacity {
                school,
                capacity,
                assigned,
            } => write!(f, "school `{school}` over capacity ({assigned} > {capacity})"),
            CertificationFailure::MovedSet { expected, actual } => {
                write!(
                    f,
                    "moved set mismatch: expected {{{}}}, got {{{}}}",
                    join_ids(expected),
                    join_ids(actual)
                )
            }
            CertificationFailure::Invariant(msg) => f.write_str(msg),
        }
    }
}

fn join_ids(ids: &BTreeSet<StudentId>) -> String {
    let mut out = String::new();
    for (i, id) in ids.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(id.as_str());
    }
    out
}

fn opt_school(x: &Option<SchoolId>) -> String {
    match x {
        Some(h) => format!("`{h}`"),
        None => "the acceptability cut".to_owned(),
    }
}

fn opt_student(x: &Option<StudentId>) -> String {
    match x {
        Some(s) => format!("`{s}`"),
        None => "the acceptability cut".to_owned(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("invalid instance:\n{0}")]
    InvalidInstance(ValidationReport),
    #[error("unknown student `{0}`")]
    UnknownStudent(StudentId),
    #[error("unknown school `{0}`")]
    UnknownSchool(SchoolId),
    #[error("student `{0}` present in the old matching is missing from the new one")]
    DroppedParticipant(StudentId),
    #[error("invalid matching: {0}")]
    InvalidMatching(MatchingViolation),
    #[error("input matching is not stable: blocking pair {0}")]
    UnstableInput(BlockingPair),
    #[error("certification failed: {0}")]
    Certification(CertificationFailure),
    #[error("updated list for student `{student}` reorders `{first}` relative to {}", opt_school(.second))]
    StudentListOrder {
        student: StudentId,
        first: SchoolId,
        second: Option<SchoolId>,
    },
    #[error("updated list for school `{school}` reorders `{first}` relative to {}", opt_student(.second))]
    SchoolListOrder {
        school: SchoolId,
        first: StudentId,
        second: Option<StudentId>,
    },
    #[error("capacity of `{school}` is {capacity}; cannot decrease by {by}")]
    CapacityUnderflow {
        school: SchoolId,
        capacity: u32,
        by: u32,
    },
    #[error("participant id `{0}` already taken")]
    DuplicateParticipant(String),
    #[error("{what}: {actual} exceeds the oracle bound of {limit}")]
    BoundExceeded {
        what: &'static str,
        actual: usize,
        limit: usize,
    },
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
