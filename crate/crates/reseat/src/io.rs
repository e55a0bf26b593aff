//! Canonical file formats.
//!
//! Every document is JSON with a fixed key order, two-space indentation, and
//! a trailing newline. Participant collections serialize sorted by id;
//! preference lists and set-cover documents keep their declared order, which
//! is data. Parsing is strict: unknown fields, duplicate entries, and the
//! reserved unmatched token in an id position are rejected, so serializing a
//! parsed canonical document reproduces it byte for byte.

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gadgets::SetCoverInstance;
use crate::model::{Instance, Matching, School, SchoolId, Student, StudentId, UNMATCHED_TOKEN};
use crate::oracle::WeightFunction;
use crate::realloc::{SchoolDelta, StudentDelta};

pub(crate) fn canonical<T: Serialize>(value: &T) -> String {
    let mut out = serde_json::to_string_pretty(value).expect("document serialization is infallible");
    out.push('\n');
    out
}

fn syntax(e: serde_json::Error) -> Error {
    Error::Parse(e.to_string())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct InstanceDoc {
    schools: Vec<School>,
    students: Vec<Student>,
}

pub(crate) fn instance_doc(inst: &Instance) -> InstanceDoc {
    let mut schools = inst.schools.clone();
    schools.sort_by(|a, b| a.id.cmp(&b.id));
    let mut students = inst.students.clone();
    students.sort_by(|a, b| a.id.cmp(&b.id));
    InstanceDoc { schools, students }
}

impl InstanceDoc {
    pub(crate) fn school_count(&self) -> usize {
        self.schools.len()
    }

    pub(crate) fn student_count(&self) -> usize {
        self.students.len()
    }
}

/// Renders an instance in canonical form.
pub fn serialize_instance(inst: &Instance) -> String {
    canonical(&instance_doc(inst))
}

/// Parses and validates an instance document.
pub fn parse_instance(text: &str) -> Result<Instance> {
    let doc: InstanceDoc = serde_json::from_str(text).map_err(syntax)?;
    let inst = Instance {
        students: doc.students,
        schools: doc.schools,
    };
    let report = inst.validate();
    if !report.is_ok() {
        return Err(Error::InvalidInstance(report));
    }
    Ok(inst)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct MatchingDoc {
    assignment: Vec<AssignmentDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AssignmentDoc {
    student: String,
    school: String,
}

impl MatchingDoc {
    pub(crate) fn lines(&self) -> impl Iterator<Item = String> + '_ {
        self.assignment
            .iter()
            .map(|a| format!("{} -> {}", a.student, a.school))
    }
}

pub(crate) fn matching_doc(m: &Matching) -> MatchingDoc {
    MatchingDoc {
        assignment: m
            .iter()
            .map(|(s, h)| AssignmentDoc {
                student: s.to_string(),
                school: h.map_or_else(|| UNMATCHED_TOKEN.to_owned(), ToString::to_string),
            })
            .collect(),
    }
}

/// Renders a matching in canonical form; unmatched students get the
/// reserved token in the school position.
pub fn serialize_matching(m: &Matching) -> String {
    canonical(&matching_doc(m))
}

/// Parses a matching document. Validation against an instance happens where
/// the matching is used.
pub fn parse_matching(text: &str) -> Result<Matching> {
    let doc: MatchingDoc = serde_json::from_str(text).map_err(syntax)?;
    let mut m = Matching::default();
    for a in doc.assignment {
        if a.student == UNMATCHED_TOKEN {
            return Err(Error::Parse(format!(
                "`{UNMATCHED_TOKEN}` is reserved and cannot name a student"
            )));
        }
        let student = StudentId::new(a.student);
        if m.contains_student(&student) {
            return Err(Error::DuplicateParticipant(student.0));
        }
        let school = if a.school == UNMATCHED_TOKEN {
            None
        } else {
            Some(SchoolId::new(a.school))
        };
        m.set(student, school);
    }
    Ok(m)
}

/// A market change of either kind, as stored in delta files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Delta {
    #[serde(rename = "SCHOOL_DELTA")]
    Schools(SchoolDelta),
    #[serde(rename = "STUDENT_DELTA")]
    Students(StudentDelta),
}

pub(crate) fn delta_doc(delta: &Delta) -> Delta {
    let mut delta = delta.clone();
    match &mut delta {
        Delta::Schools(d) => d.new_schools.sort_by(|a, b| a.id.cmp(&b.id)),
        Delta::Students(d) => d.new_students.sort_by(|a, b| a.id.cmp(&b.id)),
    }
    delta
}

/// Renders a delta in canonical form, tagged with its kind.
pub fn serialize_delta(delta: &Delta) -> String {
    canonical(&delta_doc(delta))
}

/// Parses a delta document of either kind. Validation against the round-1
/// instance happens when the delta is applied.
pub fn parse_delta(text: &str) -> Result<Delta> {
    serde_json::from_str(text).map_err(syntax)
}

/// Renders a set-cover instance in canonical form. Element and set order is
/// preserved exactly.
pub fn serialize_cover(sc: &SetCoverInstance) -> String {
    canonical(sc)
}

/// Parses and validates a set-cover document.
pub fn parse_cover(text: &str) -> Result<SetCoverInstance> {
    let sc: SetCoverInstance = serde_json::from_str(text).map_err(syntax)?;
    sc.validate()?;
    Ok(sc)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct WeightsDoc {
    weights: Vec<WeightEntryDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightEntryDoc {
    school: String,
    student: String,
    weight: String,
}

pub(crate) fn weights_doc(w: &WeightFunction) -> WeightsDoc {
    WeightsDoc {
        weights: w
            .weights
            .iter()
            .map(|((h, s), v)| WeightEntryDoc {
                school: h.to_string(),
                student: s.to_string(),
                weight: v.to_string(),
            })
            .collect(),
    }
}

/// Renders edge weights in canonical form: one entry per weighted pair,
/// sorted by school then student, weights as reduced rationals.
pub fn serialize_weights(w: &WeightFunction) -> String {
    canonical(&weights_doc(w))
}

/// Parses a weights document. Pair validity against an instance is checked
/// where the weights are used.
pub fn parse_weights(text: &str) -> Result<WeightFunction> {
    let doc: WeightsDoc = serde_json::from_str(text).map_err(syntax)?;
    let mut out = WeightFunction::default();
    for e in doc.weights {
        let value: Rational64 = e.weight.parse().map_err(|_| {
            Error::Parse(format!(
                "bad weight `{}` for (`{}`, `{}`)",
                e.weight, e.school, e.student
            ))
        })?;
        let key = (SchoolId::new(e.school), StudentId::new(e.student));
        if out.weights.contains_key(&key) {
            return Err(Error::Parse(format!(
                "duplicate weight entry for (`{}`, `{}`)",
                key.0, key.1
            )));
        }
        out.weights.insert(key, value);
    }
    Ok(out)
}
