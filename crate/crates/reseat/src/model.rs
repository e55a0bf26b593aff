//! Core data model: participants, instances, matchings, stability.
//!
//! Preference lists are strict and may be truncated. Every list entry must
//! refer to a participant of the instance and appear at most once. A student
//! and a school are mutually acceptable when each lists the other; only such
//! pairs can ever be matched or block.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{CertificationFailure, Error, MatchingViolation, Result};

/// Reserved token that denotes "unmatched" in serialized matchings.
/// No participant may use it as an id.
pub const UNMATCHED_TOKEN: &str = "-";

macro_rules! id_type {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }
    };
}

id_type!(
    /// Identifier of a student.
    StudentId
);
id_type!(
    /// Identifier of a school.
    SchoolId
);

/// A student and her strict, possibly truncated list of acceptable schools.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Student {
    pub id: StudentId,
    pub prefs: Vec<SchoolId>,
}

impl Student {
    pub fn new(id: impl Into<StudentId>, prefs: impl IntoIterator<Item = impl Into<SchoolId>>) -> Self {
        Student {
            id: id.into(),
            prefs: prefs.into_iter().map(Into::into).collect(),
        }
    }
}

/// A school with a seat capacity and a strict, possibly truncated list of
/// acceptable students.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct School {
    pub id: SchoolId,
    pub capacity: u32,
    pub prefs: Vec<StudentId>,
}

impl School {
    pub fn new(
        id: impl Into<SchoolId>,
        capacity: u32,
        prefs: impl IntoIterator<Item = impl Into<StudentId>>,
    ) -> Self {
        School {
            id: id.into(),
            capacity,
            prefs: prefs.into_iter().map(Into::into).collect(),
        }
    }
}

/// A full market: all students and schools of one enrollment round.
///
/// Construction never fails, so malformed data stays representable for
/// [`Instance::validate`] to report on. Everything that computes on an
/// instance validates it first.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Instance {
    pub students: Vec<Student>,
    pub schools: Vec<School>,
}

/// One problem found by instance validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DuplicateStudent(StudentId),
    DuplicateSchool(SchoolId),
    ReservedId(String),
    /// A student's list names a school the instance does not have.
    UnknownSchoolInPrefs { student: StudentId, school: SchoolId },
    /// A school's list names a student the instance does not have.
    UnknownStudentInPrefs { school: SchoolId, student: StudentId },
    RepeatedSchoolInPrefs { student: StudentId, school: SchoolId },
    RepeatedStudentInPrefs { school: SchoolId, student: StudentId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateStudent(s) => write!(f, "duplicate student id `{s}`"),
            Violation::DuplicateSchool(h) => write!(f, "duplicate school id `{h}`"),
            Violation::ReservedId(id) => write!(f, "id `{id}` is reserved"),
            Violation::UnknownSchoolInPrefs { student, school } => {
                write!(f, "student `{student}` lists unknown school `{school}`")
            }
            Violation::UnknownStudentInPrefs { school, student } => {
                write!(f, "school `{school}` lists unknown student `{student}`")
            }
            Violation::RepeatedSchoolInPrefs { student, school } => {
                write!(f, "student `{student}` lists school `{school}` more than once")
            }
            Violation::RepeatedStudentInPrefs { school, student } => {
                write!(f, "school `{school}` lists student `{student}` more than once")
            }
        }
    }
}

/// Outcome of validating an instance. Empty means well formed.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            write!(f, "  - {v}")?;
        }
        Ok(())
    }
}

impl Instance {
    pub fn new(students: Vec<Student>, schools: Vec<School>) -> Self {
        Instance { students, schools }
    }

    pub fn student(&self, id: &StudentId) -> Option<&Student> {
        self.students.iter().find(|s| &s.id == id)
    }

    pub fn school(&self, id: &SchoolId) -> Option<&School> {
        self.schools.iter().find(|h| &h.id == id)
    }

    /// Checks well-formedness: unique ids, no reserved ids, every preference
    /// entry resolvable and listed at most once.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();

        let mut student_ids = BTreeSet::new();
        for s in &self.students {
            if s.id.as_str() == UNMATCHED_TOKEN {
                violations.push(Violation::ReservedId(s.id.0.clone()));
            }
            if !student_ids.insert(&s.id) {
                violations.push(Violation::DuplicateStudent(s.id.clone()));
            }
        }
        let mut school_ids = BTreeSet::new();
        for h in &self.schools {
            if h.id.as_str() == UNMATCHED_TOKEN {
                violations.push(Violation::ReservedId(h.id.0.clone()));
            }
            if !school_ids.insert(&h.id) {
                violations.push(Violation::DuplicateSchool(h.id.clone()));
            }
        }

        for s in &self.students {
            let mut seen = BTreeSet::new();
            for h in &s.prefs {
                if !school_ids.contains(h) {
                    violations.push(Violation::UnknownSchoolInPrefs {
                        student: s.id.clone(),
                        school: h.clone(),
                    });
                }
                if !seen.insert(h) {
                    violations.push(Violation::RepeatedSchoolInPrefs {
                        student: s.id.clone(),
                        school: h.clone(),
                    });
                }
            }
        }
        for h in &self.schools {
            let mut seen = BTreeSet::new();
            for s in &h.prefs {
                if !student_ids.contains(s) {
                    violations.push(Violation::UnknownStudentInPrefs {
                        school: h.id.clone(),
                        student: s.clone(),
                    });
                }
                if !seen.insert(s) {
                    violations.push(Violation::RepeatedStudentInPrefs {
                        school: h.id.clone(),
                        student: s.clone(),
                    });
                }
            }
        }

        ValidationReport { violations }
    }

    pub(crate) fn indexed(&self) -> Result<Indexed<'_>> {
        let report = self.validate();
        if !report.is_ok() {
            return Err(Error::InvalidInstance(report));
        }
        Ok(Indexed::new(self))
    }
}

/// Validated view of an instance with id lookups and rank tables.
/// Only built through [`Instance::indexed`], so uniqueness holds.
pub(crate) struct Indexed<'a> {
    pub students: BTreeMap<&'a StudentId, &'a Student>,
    pub schools: BTreeMap<&'a SchoolId, &'a School>,
    student_rank: BTreeMap<&'a StudentId, BTreeMap<&'a SchoolId, usize>>,
    school_rank: BTreeMap<&'a SchoolId, BTreeMap<&'a StudentId, usize>>,
}

impl<'a> Indexed<'a> {
    fn new(instance: &'a Instance) -> Self {
        let students: BTreeMap<_, _> = instance.students.iter().map(|s| (&s.id, s)).collect();
        let schools: BTreeMap<_, _> = instance.schools.iter().map(|h| (&h.id, h)).collect();
        let student_rank = instance
            .students
            .iter()
            .map(|s| {
                let ranks = s.prefs.iter().enumerate().map(|(i, h)| (h, i)).collect();
                (&s.id, ranks)
            })
            .collect();
        let school_rank = instance
            .schools
            .iter()
            .map(|h| {
                let ranks = h.prefs.iter().enumerate().map(|(i, s)| (s, i)).collect();
                (&h.id, ranks)
            })
            .collect();
        Indexed {
            students,
            schools,
            student_rank,
            school_rank,
        }
    }

    pub fn student(&self, id: &StudentId) -> Result<&'a Student> {
        self.students
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownStudent(id.clone()))
    }

    pub fn school(&self, id: &SchoolId) -> Result<&'a School> {
        self.schools
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownSchool(id.clone()))
    }

    /// Rank of `school` for `student`: listed entries get their index, being
    /// unmatched ranks right after the list, unlisted schools after that.
    pub fn student_rank(&self, student: &StudentId, school: Option<&SchoolId>) -> usize {
        let ranks = &self.student_rank[student];
        let len = self.students[student].prefs.len();
        match school {
            Some(h) => ranks.get(h).copied().unwrap_or(len + 1),
            None => len,
        }
    }

    pub fn school_rank(&self, school: &SchoolId, student: Option<&StudentId>) -> usize {
        let ranks = &self.school_rank[school];
        let len = self.schools[school].prefs.len();
        match student {
            Some(s) => ranks.get(s).copied().unwrap_or(len + 1),
            None => len,
        }
    }

    /// Strict preference of `student` for `a` over `b` (`None` = unmatched).
    pub fn student_prefers(&self, student: &StudentId, a: Option<&SchoolId>, b: Option<&SchoolId>) -> bool {
        self.student_rank(student, a) < self.student_rank(student, b)
    }

    pub fn school_prefers(&self, school: &SchoolId, a: Option<&StudentId>, b: Option<&StudentId>) -> bool {
        self.school_rank(school, a) < self.school_rank(school, b)
    }

    pub fn student_lists(&self, student: &StudentId, school: &SchoolId) -> bool {
        self.student_rank[student].contains_key(school)
    }

    pub fn school_lists(&self, school: &SchoolId, student: &StudentId) -> bool {
        self.school_rank[school].contains_key(student)
    }

    pub fn mutual(&self, student: &StudentId, school: &SchoolId) -> bool {
        self.student_lists(student, school) && self.school_lists(school, student)
    }
}

/// Position of `item` in a truncated strict list: listed entries get their
/// index, `None` (unmatched) ranks right after the list, anything unlisted
/// after that. Lower is better.
pub fn rank_of<T: Eq>(list: &[T], item: Option<&T>) -> usize {
    match item {
        Some(x) => list.iter().position(|y| y == x).unwrap_or(list.len() + 1),
        None => list.len(),
    }
}

/// Strict preference for `a` over `b` under a truncated list. Any listed
/// option beats being unmatched, being unmatched beats anything unlisted,
/// and two unlisted options are not comparable (both orders return false).
pub fn prefers<T: Eq>(list: &[T], a: Option<&T>, b: Option<&T>) -> bool {
    rank_of(list, a) < rank_of(list, b)
}

/// An assignment of every student to at most one school.
///
/// Iteration and serialization order is always ascending student id.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct Matching {
    assignments: BTreeMap<StudentId, Option<SchoolId>>,
}

impl Matching {
    pub fn new() -> Self {
        Matching::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (StudentId, Option<SchoolId>)>) -> Self {
        Matching {
            assignments: pairs.into_iter().collect(),
        }
    }

    pub fn set(&mut self, student: StudentId, school: Option<SchoolId>) {
        self.assignments.insert(student, school);
    }

    pub fn remove(&mut self, student: &StudentId) -> Option<Option<SchoolId>> {
        self.assignments.remove(student)
    }

    /// Assignment of `student`: `None` if absent, `Some(None)` if unmatched.
    pub fn entry(&self, student: &StudentId) -> Option<Option<&SchoolId>> {
        self.assignments.get(student).map(Option::as_ref)
    }

    pub fn school_of(&self, student: &StudentId) -> Option<&SchoolId> {
        self.assignments.get(student).and_then(Option::as_ref)
    }

    pub fn contains_student(&self, student: &StudentId) -> bool {
        self.assignments.contains_key(student)
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StudentId, Option<&SchoolId>)> {
        self.assignments.iter().map(|(s, h)| (s, h.as_ref()))
    }

    pub fn students(&self) -> impl Iterator<Item = &StudentId> {
        self.assignments.keys()
    }

    /// Students assigned to `school`, ascending by id.
    pub fn assigned_to(&self, school: &SchoolId) -> Vec<&StudentId> {
        self.assignments
            .iter()
            .filter(|(_, h)| h.as_ref() == Some(school))
            .map(|(s, _)| s)
            .collect()
    }

    pub fn occupancy(&self, school: &SchoolId) -> usize {
        self.assignments
            .values()
            .filter(|h| h.as_ref() == Some(school))
            .count()
    }
}

impl FromIterator<(StudentId, Option<SchoolId>)> for Matching {
    fn from_iter<I: IntoIterator<Item = (StudentId, Option<SchoolId>)>>(iter: I) -> Self {
        Matching::from_pairs(iter)
    }
}

/// Checks that `m` is a matching of `instance`: one entry per student, no
/// foreign participants, every assignment mutually acceptable, no school
/// over capacity. Returns the first violation found.
pub fn validate_matching(instance: &Instance, m: &Matching) -> Result<()> {
    let idx = instance.indexed()?;
    validate_matching_indexed(&idx, m)
}

pub(crate) fn validate_matching_indexed(idx: &Indexed<'_>, m: &Matching) -> Result<()> {
    for id in idx.students.keys() {
        if !m.contains_student(id) {
            return Err(Error::InvalidMatching(MatchingViolation::MissingEntry((*id).clone())));
        }
    }
    for (s, h) in m.iter() {
        if !idx.students.contains_key(s) {
            return Err(Error::InvalidMatching(MatchingViolation::ForeignStudent(s.clone())));
        }
        if let Some(h) = h {
            if !idx.schools.contains_key(h) {
                return Err(Error::InvalidMatching(MatchingViolation::ForeignSchool {
                    student: s.clone(),
                    school: h.clone(),
                }));
            }
            if !idx.mutual(s, h) {
                return Err(Error::InvalidMatching(MatchingViolation::Unacceptable {
                    student: s.clone(),
                    school: h.clone(),
                }));
            }
        }
    }
    for (h, school) in &idx.schools {
        let assigned = m.occupancy(h);
        if assigned > school.capacity as usize {
            return Err(Error::InvalidMatching(MatchingViolation::OverCapacity {
                school: (*h).clone(),
                capacity: school.capacity,
                assigned,
            }));
        }
    }
    Ok(())
}

/// Why a student-school pair blocks a matching.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum BlockingKind {
    /// The school has a free seat for the student.
    Underfilled,
    /// The school is full but ranks the student above this current admit.
    Displaces(StudentId),
}

/// A mutually acceptable pair where the student prefers the school to her
/// assignment and the school has room or a worse admit.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct BlockingPair {
    pub student: StudentId,
    pub school: SchoolId,
    pub kind: BlockingKind,
}

impl fmt::Display for BlockingPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(`{}`, `{}`)", self.student, self.school)?;
        match &self.kind {
            BlockingKind::Underfilled => f.write_str(" via a free seat"),
            BlockingKind::Displaces(s) => write!(f, " displacing `{s}`"),
        }
    }
}

/// All blocking pairs of `m`, ascending by (student, school). Errors if `m`
/// is not a valid matching of `instance`.
pub fn find_blocking_pairs(instance: &Instance, m: &Matching) -> Result<Vec<BlockingPair>> {
    let idx = instance.indexed()?;
    validate_matching_indexed(&idx, m)?;
    Ok(find_blocking_pairs_indexed(&idx, m))
}

pub(crate) fn find_blocking_pairs_indexed(idx: &Indexed<'_>, m: &Matching) -> Vec<BlockingPair> {
    let mut pairs = Vec::new();
    for (&sid, student) in &idx.students {
        let current = m.school_of(sid);
        for h in &student.prefs {
            // prefs are scanned in order, so everything at or below `current` cannot block
            if Some(h) == current {
                break;
            }
            if !idx.school_lists(h, sid) {
                continue;
            }
            let school = idx.schools[h];
            let roster = m.assigned_to(h);
            if roster.len() < school.capacity as usize {
                pairs.push(BlockingPair {
                    student: sid.clone(),
                    school: h.clone(),
                    kind: BlockingKind::Underfilled,
                });
            } else if school.capacity > 0 {
                let worst = roster
                    .iter()
                    .copied()
                    .max_by_key(|&s| idx.school_rank(h, Some(s)))
                    .expect("full roster with positive capacity is nonempty");
                if idx.school_prefers(h, Some(sid), Some(worst)) {
                    pairs.push(BlockingPair {
                        student: sid.clone(),
                        school: h.clone(),
                        kind: BlockingKind::Displaces(worst.clone()),
                    });
                }
            }
        }
    }
    pairs.sort();
    pairs
}

/// True when `m` is a valid matching of `instance` with no blocking pair.
pub fn is_stable(instance: &Instance, m: &Matching) -> Result<bool> {
    Ok(find_blocking_pairs(instance, m)?.is_empty())
}

/// Students whose school changed or who lost their seat between `old` and
/// `new`. Newly admitted students (`None` to a school) and students absent
/// from `old` do not count. Errors if a student of `old` is missing in `new`.
pub fn moved_set(old: &Matching, new: &Matching) -> Result<BTreeSet<StudentId>> {
    let mut moved = BTreeSet::new();
    for (s, old_school) in old.iter() {
        let Some(new_school) = new.entry(s) else {
            return Err(Error::DroppedParticipant(s.clone()));
        };
        match (old_school, new_school) {
            (Some(a), Some(b)) if a != b => {
                moved.insert(s.clone());
            }
            (Some(_), None) => {
                moved.insert(s.clone());
            }
            _ => {}
        }
    }
    Ok(moved)
}

/// Pointwise student-optimal combination of two stable matchings: each
/// student takes the assignment she prefers. The result is certified to be a
/// valid stable matching before it is returned.
pub fn meet(instance: &Instance, m1: &Matching, m2: &Matching) -> Result<Matching> {
    combine(instance, m1, m2, true)
}

/// Pointwise student-pessimal combination of two stable matchings. Dual of
/// [`meet`].
pub fn join(instance: &Instance, m1: &Matching, m2: &Matching) -> Result<Matching> {
    combine(instance, m1, m2, false)
}

fn combine(instance: &Instance, m1: &Matching, m2: &Matching, better: bool) -> Result<Matching> {
    let idx = instance.indexed()?;
    for m in [m1, m2] {
        validate_matching_indexed(&idx, m)?;
        if let Some(p) = find_blocking_pairs_indexed(&idx, m).into_iter().next() {
            return Err(Error::UnstableInput(p));
        }
    }

    let mut out = Matching::new();
    for &sid in idx.students.keys() {
        let a = m1.school_of(sid);
        let b = m2.school_of(sid);
        let pick = if idx.student_prefers(sid, a, b) == better {
            a
        } else {
            b
        };
        out.set(sid.clone(), pick.cloned());
    }

    // lattice theory says this is a stable matching; certify rather than trust
    for (h, school) in &idx.schools {
        let assigned = out.occupancy(h);
        if assigned > school.capacity as usize {
            return Err(Error::Certification(CertificationFailure::Capacity {
                school: (*h).clone(),
                capacity: school.capacity,
                assigned,
            }));
        }
    }
    if let Some(p) = find_blocking_pairs_indexed(&idx, &out).into_iter().next() {
        return Err(Error::Certification(CertificationFailure::Blocking(p)));
    }
    Ok(out)
}

/// One assignment event in a mechanism run: `student` takes the seat `to`
/// (or leaves the market when `to` is `None` at the end of a run), having
/// last held `from`, bumping `displaced` out if the seat was contested.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceMove {
    pub student: StudentId,
    pub from: Option<SchoolId>,
    pub to: Option<SchoolId>,
    pub displaced: Option<StudentId>,
}

/// Output of a re-allocation mechanism: the new matching, which previously
/// seated students ended up elsewhere, and the assignment trace that led
/// there.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReallocationResult {
    pub matching: Matching,
    pub moved: BTreeSet<StudentId>,
    pub realloc_count: usize,
    pub trace: Vec<TraceMove>,
}
