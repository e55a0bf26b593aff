//! Re-seating when the market grows on the student side.
//!
//! Between rounds, new students may arrive, schools may close, and seats may
//! disappear. Incumbents can only lose from such a change, so the mechanism
//! works like a resumed admission run: every unseated student with a live
//! claim is placed at the best school where she has one, bumping the
//! school's worst admit if it is full, until no claims remain. Incumbents
//! are bumped only when every stable outcome bumps them, and when the
//! round-one matching came from student-proposing deferred acceptance the
//! final matching equals what a single fresh run over both rounds would
//! produce, which is what makes honest lists optimal for students.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::da::{self, DaConfig, Side};
use crate::error::{CertificationFailure, Error, Result};
use crate::model::{
    find_blocking_pairs_indexed, moved_set, prefers, validate_matching_indexed, Indexed, Instance,
    Matching, ReallocationResult, School, SchoolId, Student, StudentId, TraceMove,
};

use super::{certify_round1, certify_stable, check_order_preserved, require_stable};

/// The changes a market can undergo between rounds on the student side.
///
/// `updated_school_prefs` replaces a school's list wholesale so it can slot
/// new students in anywhere, but the relative order of the students it
/// already ranked, including which of them it listed at all, must not
/// change.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudentDelta {
    pub new_students: Vec<Student>,
    pub removed_schools: BTreeSet<SchoolId>,
    pub capacity_decreases: BTreeMap<SchoolId, u32>,
    pub updated_school_prefs: BTreeMap<SchoolId, Vec<StudentId>>,
}

impl StudentDelta {
    pub fn is_empty(&self) -> bool {
        self.new_students.is_empty()
            && self.removed_schools.is_empty()
            && self.capacity_decreases.is_empty()
            && self.updated_school_prefs.is_empty()
    }
}

/// Builds the round-two market from the round-one market and a delta.
///
/// Closed schools disappear from the school roster and from every student's
/// list. Updated school lists are checked for order preservation against the
/// round-one lists, and capacity cuts may not go below zero.
pub fn apply_student_delta(round1: &Instance, delta: &StudentDelta) -> Result<Instance> {
    let idx = round1.indexed()?;
    let student_ids: BTreeSet<&StudentId> = idx.students.keys().copied().collect();

    for s in &delta.new_students {
        if student_ids.contains(&s.id) {
            return Err(Error::DuplicateParticipant(s.id.to_string()));
        }
    }
    for h in &delta.removed_schools {
        idx.school(h)?;
    }
    for (h, cut) in &delta.capacity_decreases {
        let school = idx.school(h)?;
        if delta.removed_schools.contains(h) {
            return Err(Error::BadConfig(format!(
                "school `{h}` is both removed and shrunk"
            )));
        }
        if *cut == 0 {
            return Err(Error::BadConfig(format!(
                "capacity decrease for `{h}` must be positive"
            )));
        }
        if *cut > school.capacity {
            return Err(Error::CapacityUnderflow {
                school: h.clone(),
                capacity: school.capacity,
                by: *cut,
            });
        }
    }
    for (h, new_list) in &delta.updated_school_prefs {
        let school = idx.school(h)?;
        if delta.removed_schools.contains(h) {
            return Err(Error::BadConfig(format!(
                "school `{h}` is both removed and given an updated list"
            )));
        }
        check_order_preserved(&school.prefs, new_list, |s| student_ids.contains(s)).map_err(
            |(first, second)| Error::SchoolListOrder {
                school: h.clone(),
                first,
                second,
            },
        )?;
    }

    let mut out = round1.clone();
    for (h, new_list) in &delta.updated_school_prefs {
        let school = out
            .schools
            .iter_mut()
            .find(|x| &x.id == h)
            .expect("key checked against the round-one roster");
        school.prefs = new_list.clone();
    }
    out.students.extend(delta.new_students.iter().cloned());
    for school in &mut out.schools {
        if let Some(cut) = delta.capacity_decreases.get(&school.id) {
            school.capacity -= cut;
        }
    }
    out.schools.retain(|h| !delta.removed_schools.contains(&h.id));
    for student in &mut out.students {
        student.prefs.retain(|h| !delta.removed_schools.contains(h));
    }

    let report = out.validate();
    if !report.is_ok() {
        return Err(Error::InvalidInstance(report));
    }
    Ok(out)
}

/// The admitted student `school` ranks last under `m`, if any seat is taken.
pub fn worst_student_accepted(
    inst: &Instance,
    m: &Matching,
    school: &SchoolId,
) -> Result<Option<StudentId>> {
    let idx = inst.indexed()?;
    validate_matching_indexed(&idx, m)?;
    idx.school(school)?;
    Ok(worst_idx(&idx, m, school))
}

fn worst_idx(idx: &Indexed<'_>, m: &Matching, school: &SchoolId) -> Option<StudentId> {
    m.assigned_to(school)
        .into_iter()
        .max_by_key(|&s| idx.school_rank(school, Some(s)))
        .cloned()
}

/// The best school on `student`'s list where she has a live claim under `m`:
/// an open seat, or a held seat whose holder the school likes less.
fn best_blocking_school(idx: &Indexed<'_>, m: &Matching, student: &StudentId) -> Option<SchoolId> {
    for h in &idx.students[student].prefs {
        if !idx.school_lists(h, student) {
            continue;
        }
        if !idx.student_prefers(student, Some(h), m.school_of(student)) {
            continue;
        }
        let cap = idx.schools[h].capacity as usize;
        let occ = m.occupancy(h);
        if occ < cap {
            return Some(h.clone());
        }
        if cap > 0 {
            let worst = worst_idx(idx, m, h).expect("full school holds someone");
            if idx.school_prefers(h, Some(student), Some(&worst)) {
                return Some(h.clone());
            }
        }
    }
    None
}

/// Minimum stable re-seating after student-side growth.
///
/// `m` must be a stable matching on `round1`; the round-two market is built
/// from `round1` and `delta`. Students at closed schools lose their seats,
/// shrunken schools shed their worst admits, and new students start out
/// unseated. Then the lowest-id unseated student with a live claim is placed
/// at the best school where she has one, bumping that school's worst admit
/// if it is full; the bumped student rejoins the unseated pool. This repeats
/// until no unseated student has a claim.
///
/// The returned matching is certified stable, the moved set is measured
/// against `m` (losing a seat without regaining one counts as a move), and
/// every placement is recorded in the trace with the seat the student last
/// held and whoever she bumped.
pub fn min_realloc_students(
    round1: &Instance,
    m: &Matching,
    delta: &StudentDelta,
) -> Result<ReallocationResult> {
    run_students(round1, m, delta, |_| 0)
}

/// Same mechanism as [`min_realloc_students`] but each step places a
/// uniformly random claimant instead of the lowest-id one. The final
/// matching does not depend on this order; only the trace does.
pub fn min_realloc_students_randomized(
    round1: &Instance,
    m: &Matching,
    delta: &StudentDelta,
    seed: u64,
) -> Result<ReallocationResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    run_students(round1, m, delta, move |n| rng.gen_range(0..n))
}

fn run_students(
    round1: &Instance,
    m: &Matching,
    delta: &StudentDelta,
    mut choose: impl FnMut(usize) -> usize,
) -> Result<ReallocationResult> {
    require_stable(round1, m)?;
    let inst2 = apply_student_delta(round1, delta)?;
    let idx = inst2.indexed()?;

    // project the old matching onto the new market; the seat a student last
    // held feeds the trace even if the school itself is gone
    let mut cur = Matching::new();
    let mut last_held: BTreeMap<StudentId, Option<SchoolId>> = BTreeMap::new();
    for &sid in idx.students.keys() {
        let old_seat = m.entry(sid).map(|seat| seat.cloned()).unwrap_or(None);
        let keeps = old_seat
            .as_ref()
            .is_some_and(|h| idx.schools.contains_key(h));
        cur.set(sid.clone(), if keeps { old_seat.clone() } else { None });
        last_held.insert(sid.clone(), old_seat);
    }
    for (&h, school) in &idx.schools {
        let cap = school.capacity as usize;
        while cur.occupancy(h) > cap {
            let worst = worst_idx(&idx, &cur, h).expect("over-full school holds someone");
            cur.set(worst, None);
        }
    }

    let mut trace = Vec::new();
    loop {
        let mut claims: Vec<(StudentId, SchoolId)> = Vec::new();
        for &sid in idx.students.keys() {
            if cur.school_of(sid).is_some() {
                continue;
            }
            if let Some(h) = best_blocking_school(&idx, &cur, sid) {
                claims.push((sid.clone(), h));
            }
        }
        if claims.is_empty() {
            break;
        }
        let (s, h) = claims.swap_remove(choose(claims.len()));
        let cap = idx.schools[&h].capacity as usize;
        let displaced = if cur.occupancy(&h) == cap {
            let worst = worst_idx(&idx, &cur, &h).expect("full school holds someone");
            cur.set(worst.clone(), None);
            Some(worst)
        } else {
            None
        };
        let from = last_held.get(&s).cloned().flatten();
        cur.set(s.clone(), Some(h.clone()));
        last_held.insert(s.clone(), Some(h.clone()));
        trace.push(TraceMove {
            student: s,
            from,
            to: Some(h),
            displaced,
        });
    }

    certify_stable(&inst2, &cur)?;
    let moved = moved_set(m, &cur)?;
    Ok(ReallocationResult {
        realloc_count: moved.len(),
        matching: cur,
        moved,
        trace,
    })
}

/// The best school on `student`'s list that holds, under `m_prime`, an
/// unmoved admit it likes less than her. Seats handed out by the exchange
/// operation must not leave her worse than this school, or she would have a
/// claim against it.
pub fn safety(
    inst: &Instance,
    m_prime: &Matching,
    moved: &BTreeSet<StudentId>,
    student: &StudentId,
) -> Result<Option<SchoolId>> {
    let idx = inst.indexed()?;
    validate_matching_indexed(&idx, m_prime)?;
    idx.student(student)?;
    Ok(safety_idx(&idx, m_prime, moved, student))
}

fn safety_idx(
    idx: &Indexed<'_>,
    m_prime: &Matching,
    moved: &BTreeSet<StudentId>,
    student: &StudentId,
) -> Option<SchoolId> {
    for h in &idx.students[student].prefs {
        if !idx.school_lists(h, student) {
            continue;
        }
        let outranked_incumbent = m_prime
            .assigned_to(h)
            .into_iter()
            .any(|k| !moved.contains(k) && idx.school_prefers(h, Some(student), Some(k)));
        if outranked_incumbent {
            return Some(h.clone());
        }
    }
    None
}

/// Exchanges the outcome of [`min_realloc_students`] for another minimum
/// stable re-seating over the same moved set.
///
/// `m` is the round-one matching the moved set was measured against,
/// `m_prime` the mechanism's output on `inst2`, and `moved` its moved set.
/// The moved students are re-matched among themselves over the seats they
/// collectively occupy, with each student's list cut at her [`safety`], by
/// deferred acceptance from the given side; every moved student then takes
/// the worse of her two seats. The result is certified stable and certified
/// to move exactly the same set.
pub fn alternate_min_realloc_students(
    inst2: &Instance,
    m: &Matching,
    m_prime: &Matching,
    moved: &BTreeSet<StudentId>,
    side: Side,
) -> Result<ReallocationResult> {
    let idx = inst2.indexed()?;
    validate_matching_indexed(&idx, m_prime)?;
    if let Some(p) = find_blocking_pairs_indexed(&idx, m_prime).into_iter().next() {
        return Err(Error::UnstableInput(p));
    }
    for s in m.students() {
        idx.student(s)?;
    }
    let derived = moved_set(m, m_prime)?;
    if &derived != moved {
        return Err(Error::BadConfig(
            "moved set does not match the given matchings".to_owned(),
        ));
    }

    let mut r_students = Vec::new();
    for sid in moved {
        let student = idx.student(sid)?;
        let mut prefs = student.prefs.clone();
        if let Some(hs) = safety_idx(&idx, m_prime, moved, sid) {
            prefs = da::truncate_after(&prefs, &hs).expect("safety is on the list");
        }
        r_students.push(Student::new(sid.clone(), prefs));
    }
    let mut r_schools = Vec::new();
    for (&h, school) in &idx.schools {
        let cap = m_prime
            .assigned_to(h)
            .iter()
            .filter(|s| moved.contains(**s))
            .count() as u32;
        let mut prefs = school.prefs.clone();
        prefs.retain(|s| moved.contains(s));
        r_schools.push(School::new(h.clone(), cap, prefs));
    }
    let restricted = Instance::new(r_students, r_schools);
    let config = match side {
        Side::Students => DaConfig::students(),
        Side::Schools => DaConfig::schools(),
    };
    let dagger = da::deferred_acceptance(&restricted, &config)?;

    let mut out = Matching::new();
    for (&sid, student) in &idx.students {
        let pick = if moved.contains(sid) {
            let a = dagger.school_of(sid);
            let b = m_prime.school_of(sid);
            // the worse of her two seats (unseated counts as worst)
            if prefers(&student.prefs, a, b) {
                b
            } else {
                a
            }
        } else {
            m_prime.school_of(sid)
        };
        out.set(sid.clone(), pick.cloned());
    }

    certify_stable(inst2, &out)?;
    let out_moved = moved_set(m, &out)?;
    if &out_moved != moved {
        return Err(Error::Certification(CertificationFailure::MovedSet {
            expected: moved.clone(),
            actual: out_moved,
        }));
    }
    Ok(ReallocationResult {
        matching: out,
        moved: moved.clone(),
        realloc_count: moved.len(),
        trace: Vec::new(),
    })
}

/// The three interchangeable ways a market can grow on the student side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StudentChangeForm {
    AddStudents,
    RemoveSchool,
    DecreaseCapacity,
}

impl StudentChangeForm {
    /// The form [`reduce_student_change`] rewrites this one into.
    pub fn next(self) -> Self {
        match self {
            StudentChangeForm::AddStudents => StudentChangeForm::RemoveSchool,
            StudentChangeForm::RemoveSchool => StudentChangeForm::DecreaseCapacity,
            StudentChangeForm::DecreaseCapacity => StudentChangeForm::AddStudents,
        }
    }
}

/// A complete student-side change: the round-one market, the stable matching
/// found on it, and the delta taking it to round two.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StudentScenario {
    pub round1: Instance,
    pub matching: Matching,
    pub delta: StudentDelta,
}

/// A scenario rewritten into the next change form, plus the bookkeeping to
/// read results back in terms of the original participants.
///
/// `helper_students` and `helper_schools` are invented placeholders whose
/// seats are artifacts. `parked_students` are original arrivals that the
/// encoding seats early at a helper school: their final seats are real, but
/// the move away from the helper seat is an artifact and is not a real
/// re-allocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReducedStudentScenario {
    pub form: StudentChangeForm,
    pub scenario: StudentScenario,
    pub helper_students: BTreeSet<StudentId>,
    pub helper_schools: BTreeSet<SchoolId>,
    pub parked_students: BTreeSet<StudentId>,
}

impl ReducedStudentScenario {
    /// Moves of real students: the moved set with helper and parked students
    /// stripped.
    pub fn real_moved(&self, moved: &BTreeSet<StudentId>) -> BTreeSet<StudentId> {
        moved
            .iter()
            .filter(|s| !self.helper_students.contains(*s) && !self.parked_students.contains(*s))
            .cloned()
            .collect()
    }

    /// The matching with helper students stripped. Parked students keep
    /// their entries: where they end up is real data.
    pub fn real_matching(&self, m: &Matching) -> Matching {
        Matching::from_pairs(m.iter().filter_map(|(s, h)| {
            if self.helper_students.contains(s) {
                None
            } else {
                Some((s.clone(), h.cloned()))
            }
        }))
    }
}

fn expect_pure(ok: bool, form: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::BadConfig(format!(
            "delta is not in pure {form} form"
        )))
    }
}

/// Rewrites a student-side scenario into the next equivalent change form
/// (arrivals become a school closure, a closure becomes capacity cuts,
/// capacity cuts become arrivals).
///
/// The input delta must be pure in the named `form`: arrivals may carry
/// updated school lists (that is how schools rank the newcomers), the other
/// two forms consist of exactly their one field. The rewritten scenario
/// behaves identically on real participants; its round-one matching is
/// certified stable before it is returned.
pub fn reduce_student_change(
    form: StudentChangeForm,
    scenario: &StudentScenario,
) -> Result<ReducedStudentScenario> {
    // validates the round-one market, the matching, and the delta
    require_stable(&scenario.round1, &scenario.matching)?;
    apply_student_delta(&scenario.round1, &scenario.delta)?;
    let d = &scenario.delta;

    let reduced = match form {
        StudentChangeForm::AddStudents => {
            expect_pure(
                d.removed_schools.is_empty() && d.capacity_decreases.is_empty(),
                "arrival",
            )?;
            if d.new_students.is_empty() {
                return Ok(ReducedStudentScenario {
                    form: StudentChangeForm::RemoveSchool,
                    scenario: StudentScenario {
                        round1: scenario.round1.clone(),
                        matching: scenario.matching.clone(),
                        delta: StudentDelta::default(),
                    },
                    helper_students: BTreeSet::new(),
                    helper_schools: BTreeSet::new(),
                    parked_students: BTreeSet::new(),
                });
            }
            // the arrivals become round-one students parked at a holding
            // school they all rank first; closing it in round two releases
            // them into the market. Schools already rank them, so their
            // round-two lists move to round one.
            let holding = SchoolId::new("hd");
            if scenario.round1.schools.iter().any(|h| h.id == holding) {
                return Err(Error::DuplicateParticipant(holding.to_string()));
            }
            let mut round1 = scenario.round1.clone();
            let mut matching = scenario.matching.clone();
            for (h, list) in &d.updated_school_prefs {
                let school = round1
                    .schools
                    .iter_mut()
                    .find(|x| &x.id == h)
                    .expect("delta was validated");
                school.prefs = list.clone();
            }
            let mut parked = BTreeSet::new();
            for s in &d.new_students {
                let mut list = vec![holding.clone()];
                list.extend(s.prefs.iter().cloned());
                round1.students.push(Student::new(s.id.clone(), list));
                matching.set(s.id.clone(), Some(holding.clone()));
                parked.insert(s.id.clone());
            }
            round1.schools.push(School::new(
                holding.clone(),
                d.new_students.len() as u32,
                d.new_students.iter().map(|s| s.id.clone()),
            ));
            ReducedStudentScenario {
                form: StudentChangeForm::RemoveSchool,
                scenario: StudentScenario {
                    round1,
                    matching,
                    delta: StudentDelta {
                        removed_schools: BTreeSet::from([holding.clone()]),
                        ..StudentDelta::default()
                    },
                },
                helper_students: BTreeSet::new(),
                helper_schools: BTreeSet::from([holding]),
                parked_students: parked,
            }
        }
        StudentChangeForm::RemoveSchool => {
            expect_pure(
                d.new_students.is_empty()
                    && d.capacity_decreases.is_empty()
                    && d.updated_school_prefs.is_empty(),
                "closure",
            )?;
            // closing a school is cutting all of its seats; the emptied
            // school stays in the market but can hold and attract nobody
            let mut cuts = BTreeMap::new();
            for h in &d.removed_schools {
                let school = scenario
                    .round1
                    .schools
                    .iter()
                    .find(|x| &x.id == h)
                    .expect("delta was validated");
                if school.capacity > 0 {
                    cuts.insert(h.clone(), school.capacity);
                }
            }
            ReducedStudentScenario {
                form: StudentChangeForm::DecreaseCapacity,
                scenario: StudentScenario {
                    round1: scenario.round1.clone(),
                    matching: scenario.matching.clone(),
                    delta: StudentDelta {
                        capacity_decreases: cuts,
                        ..StudentDelta::default()
                    },
                },
                helper_students: BTreeSet::new(),
                helper_schools: BTreeSet::new(),
                parked_students: BTreeSet::new(),
            }
        }
        StudentChangeForm::DecreaseCapacity => {
            expect_pure(
                d.new_students.is_empty()
                    && d.removed_schools.is_empty()
                    && d.updated_school_prefs.is_empty(),
                "capacity-cut",
            )?;
            // each lost seat becomes an arriving student the school wants
            // most and who wants only that school: she squats the seat,
            // displacing its worst admit exactly as the cut would
            let taken: BTreeSet<&str> = scenario
                .round1
                .students
                .iter()
                .map(|s| s.id.as_str())
                .collect();
            let mut new_students = Vec::new();
            let mut updated = BTreeMap::new();
            let mut helpers = BTreeSet::new();
            let mut n = 0;
            for (h, cut) in &d.capacity_decreases {
                let school = scenario
                    .round1
                    .schools
                    .iter()
                    .find(|x| &x.id == h)
                    .expect("delta was validated");
                let mut front = Vec::new();
                for _ in 0..*cut {
                    n += 1;
                    let id = StudentId::new(format!("f{n}"));
                    if taken.contains(id.as_str()) {
                        return Err(Error::DuplicateParticipant(id.to_string()));
                    }
                    new_students.push(Student::new(id.clone(), [h.clone()]));
                    front.push(id.clone());
                    helpers.insert(id);
                }
                updated.insert(
                    h.clone(),
                    front.into_iter().chain(school.prefs.iter().cloned()).collect(),
                );
            }
            ReducedStudentScenario {
                form: StudentChangeForm::AddStudents,
                scenario: StudentScenario {
                    round1: scenario.round1.clone(),
                    matching: scenario.matching.clone(),
                    delta: StudentDelta {
                        new_students,
                        updated_school_prefs: updated,
                        ..StudentDelta::default()
                    },
                },
                helper_students: helpers,
                helper_schools: BTreeSet::new(),
                parked_students: BTreeSet::new(),
            }
        }
    };

    certify_round1(&reduced.scenario.round1, &reduced.scenario.matching)?;
    apply_student_delta(&reduced.scenario.round1, &reduced.scenario.delta)?;
    Ok(reduced)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::da::{school_proposing_da, student_proposing_da};
    use crate::model::is_stable;
    use crate::oracle::{brute_min_realloc, OracleBounds};

    fn sid(s: &str) -> StudentId {
        StudentId::from(s)
    }

    fn hid(s: &str) -> SchoolId {
        SchoolId::from(s)
    }

    /// Three single-seat schools; student C arrives in round two and every
    /// school slots her into its list.
    fn late_arrival() -> (Instance, StudentDelta) {
        let round1 = Instance::new(
            vec![
                Student::new("A", ["2", "1", "3"]),
                Student::new("B", ["1", "2", "3"]),
            ],
            vec![
                School::new("1", 1, ["A", "B"]),
                School::new("2", 1, ["B", "A"]),
                School::new("3", 1, ["A", "B"]),
            ],
        );
        let delta = StudentDelta {
            new_students: vec![Student::new("C", ["3", "1", "2"])],
            updated_school_prefs: BTreeMap::from([
                (hid("1"), vec![sid("A"), sid("B"), sid("C")]),
                (hid("2"), vec![sid("B"), sid("A"), sid("C")]),
                (hid("3"), vec![sid("C"), sid("A"), sid("B")]),
            ]),
            ..StudentDelta::default()
        };
        (round1, delta)
    }

    #[test]
    fn arrival_takes_the_open_seat_and_nobody_moves() {
        let (round1, delta) = late_arrival();
        // start from the school-optimal matching, which holds A at 1 and B
        // at 2 even though each would rather have the other seat
        let m = school_proposing_da(&round1).unwrap();
        assert_eq!(m.school_of(&sid("A")), Some(&hid("1")));
        assert_eq!(m.school_of(&sid("B")), Some(&hid("2")));

        let out = min_realloc_students(&round1, &m, &delta).unwrap();
        assert_eq!(out.matching.school_of(&sid("A")), Some(&hid("1")));
        assert_eq!(out.matching.school_of(&sid("B")), Some(&hid("2")));
        assert_eq!(out.matching.school_of(&sid("C")), Some(&hid("3")));
        assert!(out.moved.is_empty());
        assert_eq!(out.realloc_count, 0);
        assert_eq!(
            out.trace,
            vec![TraceMove {
                student: sid("C"),
                from: None,
                to: Some(hid("3")),
                displaced: None,
            }]
        );

        // a fresh full run would instead swap A and B for no stability gain
        let inst2 = apply_student_delta(&round1, &delta).unwrap();
        let scratch = student_proposing_da(&inst2).unwrap();
        assert_eq!(scratch.school_of(&sid("A")), Some(&hid("2")));
        assert_eq!(scratch.school_of(&sid("B")), Some(&hid("1")));
        assert_eq!(moved_set(&m, &scratch).unwrap().len(), 2);
    }

    #[test]
    fn resuming_a_student_optimal_matching_equals_a_fresh_run() {
        let (round1, delta) = late_arrival();
        let m = student_proposing_da(&round1).unwrap();
        let out = min_realloc_students(&round1, &m, &delta).unwrap();
        let inst2 = apply_student_delta(&round1, &delta).unwrap();
        assert_eq!(out.matching, student_proposing_da(&inst2).unwrap());
    }

    #[test]
    fn arrival_bumps_the_worst_admit_when_full() {
        let round1 = Instance::new(
            vec![
                Student::new("A", ["1", "2"]),
                Student::new("B", ["1", "2"]),
            ],
            vec![
                School::new("1", 2, ["C", "A", "B"]),
                School::new("2", 1, ["A", "B", "C"]),
            ],
        );
        // round-one lists may already rank a student who arrives later; she
        // simply is not present yet
        let round1 = {
            let mut r = round1;
            for h in &mut r.schools {
                h.prefs.retain(|s| s != &sid("C"));
            }
            r
        };
        let m = student_proposing_da(&round1).unwrap();
        assert_eq!(m.school_of(&sid("A")), Some(&hid("1")));
        assert_eq!(m.school_of(&sid("B")), Some(&hid("1")));

        let delta = StudentDelta {
            new_students: vec![Student::new("C", ["1"])],
            updated_school_prefs: BTreeMap::from([
                (hid("1"), vec![sid("C"), sid("A"), sid("B")]),
                (hid("2"), vec![sid("A"), sid("B"), sid("C")]),
            ]),
            ..StudentDelta::default()
        };
        let out = min_realloc_students(&round1, &m, &delta).unwrap();
        // C bumps B, the worst admit at school 1; B lands at 2
        assert_eq!(out.matching.school_of(&sid("C")), Some(&hid("1")));
        assert_eq!(out.matching.school_of(&sid("A")), Some(&hid("1")));
        assert_eq!(out.matching.school_of(&sid("B")), Some(&hid("2")));
        assert_eq!(out.moved, BTreeSet::from([sid("B")]));
        assert_eq!(
            out.trace,
            vec![
                TraceMove {
                    student: sid("C"),
                    from: None,
                    to: Some(hid("1")),
                    displaced: Some(sid("B")),
                },
                TraceMove {
                    student: sid("B"),
                    from: Some(hid("1")),
                    to: Some(hid("2")),
                    displaced: None,
                },
            ]
        );
    }

    #[test]
    fn closed_school_scatters_its_students() {
        let round1 = Instance::new(
            vec![
                Student::new("A", ["1", "2"]),
                Student::new("B", ["2", "1"]),
            ],
            vec![
                School::new("1", 1, ["A", "B"]),
                School::new("2", 2, ["B", "A"]),
            ],
        );
        let m = student_proposing_da(&round1).unwrap();
        assert_eq!(m.school_of(&sid("A")), Some(&hid("1")));

        let delta = StudentDelta {
            removed_schools: BTreeSet::from([hid("1")]),
            ..StudentDelta::default()
        };
        let out = min_realloc_students(&round1, &m, &delta).unwrap();
        assert_eq!(out.matching.school_of(&sid("A")), Some(&hid("2")));
        assert_eq!(out.moved, BTreeSet::from([sid("A")]));
        // her trace records the vanished school as the seat she came from
        assert_eq!(
            out.trace,
            vec![TraceMove {
                student: sid("A"),
                from: Some(hid("1")),
                to: Some(hid("2")),
                displaced: None,
            }]
        );
    }

    #[test]
    fn capacity_cut_sheds_the_worst_admits() {
        let round1 = Instance::new(
            vec![
                Student::new("A", ["1", "2"]),
                Student::new("B", ["1", "2"]),
                Student::new("C", ["1", "2"]),
            ],
            vec![
                School::new("1", 3, ["A", "B", "C"]),
                School::new("2", 2, ["A", "B", "C"]),
            ],
        );
        let m = student_proposing_da(&round1).unwrap();
        let delta = StudentDelta {
            capacity_decreases: BTreeMap::from([(hid("1"), 2)]),
            ..StudentDelta::default()
        };
        let out = min_realloc_students(&round1, &m, &delta).unwrap();
        // the school keeps its favorite A; B and C fall through to school 2
        assert_eq!(out.matching.school_of(&sid("A")), Some(&hid("1")));
        assert_eq!(out.matching.school_of(&sid("B")), Some(&hid("2")));
        assert_eq!(out.matching.school_of(&sid("C")), Some(&hid("2")));
        assert_eq!(out.moved, BTreeSet::from([sid("B"), sid("C")]));
        assert_eq!(out.realloc_count, 2);
    }

    #[test]
    fn losing_every_seat_still_counts_as_moved() {
        let round1 = Instance::new(
            vec![Student::new("A", ["1"])],
            vec![School::new("1", 1, ["A"])],
        );
        let m = student_proposing_da(&round1).unwrap();
        let delta = StudentDelta {
            capacity_decreases: BTreeMap::from([(hid("1"), 1)]),
            ..StudentDelta::default()
        };
        let out = min_realloc_students(&round1, &m, &delta).unwrap();
        assert_eq!(out.matching.school_of(&sid("A")), None);
        assert_eq!(out.moved, BTreeSet::from([sid("A")]));
        assert!(out.trace.is_empty());
    }

    #[test]
    fn delta_validation_rejects_malformed_changes() {
        let (round1, _) = late_arrival();
        let delta = StudentDelta {
            new_students: vec![Student::new("A", ["1"])],
            ..StudentDelta::default()
        };
        assert!(matches!(
            apply_student_delta(&round1, &delta),
            Err(Error::DuplicateParticipant(_))
        ));

        let delta = StudentDelta {
            capacity_decreases: BTreeMap::from([(hid("1"), 2)]),
            ..StudentDelta::default()
        };
        assert!(matches!(
            apply_student_delta(&round1, &delta),
            Err(Error::CapacityUnderflow { .. })
        ));

        let delta = StudentDelta {
            removed_schools: BTreeSet::from([hid("1")]),
            capacity_decreases: BTreeMap::from([(hid("1"), 1)]),
            ..StudentDelta::default()
        };
        assert!(matches!(
            apply_student_delta(&round1, &delta),
            Err(Error::BadConfig(_))
        ));

        // school 1 ranks (A, B); reversing them is not allowed
        let delta = StudentDelta {
            updated_school_prefs: BTreeMap::from([(hid("1"), vec![sid("B"), sid("A")])]),
            ..StudentDelta::default()
        };
        match apply_student_delta(&round1, &delta) {
            Err(Error::SchoolListOrder { school, first, second }) => {
                assert_eq!(school, hid("1"));
                assert_eq!(first, sid("B"));
                assert_eq!(second, Some(sid("A")));
            }
            other => panic!("expected a list-order error, got {other:?}"),
        }
    }

    /// Seeded random market with a random student-side delta.
    fn random_scenario(seed: u64) -> (Instance, Matching, StudentDelta) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_students = rng.gen_range(1..=4);
        let n_schools = rng.gen_range(1..=3);
        let student_ids: Vec<String> = (0..n_students).map(|i| format!("s{i}")).collect();
        let school_ids: Vec<String> = (0..n_schools).map(|i| format!("h{i}")).collect();

        let students: Vec<Student> = student_ids
            .iter()
            .map(|s| {
                let mut prefs = school_ids.clone();
                for i in (1..prefs.len()).rev() {
                    prefs.swap(i, rng.gen_range(0..=i));
                }
                prefs.truncate(rng.gen_range(0..=prefs.len()));
                Student::new(s.clone(), prefs)
            })
            .collect();
        let schools: Vec<School> = school_ids
            .iter()
            .map(|h| {
                let mut prefs = student_ids.clone();
                for i in (1..prefs.len()).rev() {
                    prefs.swap(i, rng.gen_range(0..=i));
                }
                prefs.truncate(rng.gen_range(0..=prefs.len()));
                School::new(h.clone(), rng.gen_range(0..=2), prefs)
            })
            .collect();
        let round1 = Instance::new(students, schools);
        let m = if seed.is_multiple_of(2) {
            student_proposing_da(&round1).unwrap()
        } else {
            school_proposing_da(&round1).unwrap()
        };

        let mut delta = StudentDelta::default();
        if rng.gen_bool(0.6) {
            let n_new = rng.gen_range(1..=2);
            for k in 0..n_new {
                let mut prefs = school_ids.clone();
                for i in (1..prefs.len()).rev() {
                    prefs.swap(i, rng.gen_range(0..=i));
                }
                prefs.truncate(rng.gen_range(0..=prefs.len()));
                delta.new_students.push(Student::new(format!("snew{k}"), prefs));
            }
            // each school slots each newcomer in somewhere, or skips her
            for h in &round1.schools {
                let mut list = h.prefs.clone();
                for s in &delta.new_students {
                    if rng.gen_bool(0.7) {
                        let pos = rng.gen_range(0..=list.len());
                        list.insert(pos, s.id.clone());
                    }
                }
                if list != h.prefs {
                    delta.updated_school_prefs.insert(h.id.clone(), list);
                }
            }
        }
        for h in &round1.schools {
            if h.capacity > 0 && rng.gen_bool(0.25) {
                delta
                    .capacity_decreases
                    .insert(h.id.clone(), rng.gen_range(1..=h.capacity));
            }
        }
        if rng.gen_bool(0.2) && n_schools > 1 {
            let victim = hid(&school_ids[rng.gen_range(0..n_schools)]);
            delta.capacity_decreases.remove(&victim);
            delta.updated_school_prefs.remove(&victim);
            delta.removed_schools.insert(victim);
        }
        (round1, m, delta)
    }

    #[test]
    fn matches_the_search_oracle_on_random_markets() {
        let bounds = OracleBounds::new(8, 6);
        for seed in 0..120 {
            let (round1, m, delta) = random_scenario(seed);
            let out = min_realloc_students(&round1, &m, &delta).unwrap();
            let inst2 = apply_student_delta(&round1, &delta).unwrap();
            let oracle = brute_min_realloc(&inst2, &m, &bounds).unwrap();

            assert_eq!(out.realloc_count, oracle.count, "seed {seed}");
            assert_eq!(out.moved, oracle.moved, "seed {seed}");
            assert!(oracle.minima.contains(&out.matching), "seed {seed}");

            // the mechanism lands at the student-best end of the minimum
            // set: no minimum gives any student a strictly better seat
            let idx = inst2.indexed().unwrap();
            for alt in &oracle.minima {
                for &s in idx.students.keys() {
                    assert!(
                        !idx.student_prefers(s, alt.school_of(s), out.matching.school_of(s)),
                        "seed {seed}: a minimum beat the mechanism for {s}"
                    );
                }
            }

            // total placements stay within (newcomers + moved) times schools
            let newcomers = inst2
                .students
                .iter()
                .filter(|s| !m.contains_student(&s.id))
                .count();
            assert!(
                out.trace.len() <= (newcomers + out.moved.len()) * inst2.schools.len().max(1),
                "seed {seed}"
            );
        }
    }

    #[test]
    fn final_matching_ignores_processing_order() {
        for seed in 0..40 {
            let (round1, m, delta) = random_scenario(seed);
            let base = min_realloc_students(&round1, &m, &delta).unwrap();
            for shuffle_seed in 0..5 {
                let alt =
                    min_realloc_students_randomized(&round1, &m, &delta, shuffle_seed).unwrap();
                assert_eq!(base.matching, alt.matching, "seed {seed}/{shuffle_seed}");
                assert_eq!(base.moved, alt.moved, "seed {seed}/{shuffle_seed}");
            }
        }
    }

    #[test]
    fn resumed_runs_track_fresh_runs_whenever_round_one_was_student_optimal() {
        for seed in 0..120 {
            let (round1, _, delta) = random_scenario(seed);
            let m = student_proposing_da(&round1).unwrap();
            let out = min_realloc_students(&round1, &m, &delta).unwrap();
            let inst2 = apply_student_delta(&round1, &delta).unwrap();
            assert_eq!(
                out.matching,
                student_proposing_da(&inst2).unwrap(),
                "seed {seed}"
            );
        }
    }

    #[test]
    fn exchange_visits_other_minima_without_changing_the_moved_set() {
        let bounds = OracleBounds::new(8, 6);
        for seed in 0..120 {
            let (round1, m, delta) = random_scenario(seed);
            let out = min_realloc_students(&round1, &m, &delta).unwrap();
            let inst2 = apply_student_delta(&round1, &delta).unwrap();
            let oracle = brute_min_realloc(&inst2, &m, &bounds).unwrap();

            for side in [Side::Students, Side::Schools] {
                let alt = alternate_min_realloc_students(
                    &inst2,
                    &m,
                    &out.matching,
                    &out.moved,
                    side,
                )
                .unwrap();
                assert_eq!(alt.moved, out.moved, "seed {seed}");
                assert!(
                    oracle.minima.contains(&alt.matching),
                    "seed {seed} {side:?}: exchange left the minimum set"
                );
                assert!(is_stable(&inst2, &alt.matching).unwrap());
            }
        }
    }

    #[test]
    fn worst_admit_and_safety_read_the_current_rosters() {
        let (round1, delta) = late_arrival();
        let m = school_proposing_da(&round1).unwrap();
        let inst2 = apply_student_delta(&round1, &delta).unwrap();
        let out = min_realloc_students(&round1, &m, &delta).unwrap();

        assert_eq!(
            worst_student_accepted(&inst2, &out.matching, &hid("1")).unwrap(),
            Some(sid("A"))
        );
        assert_eq!(
            worst_student_accepted(&inst2, &out.matching, &hid("3")).unwrap(),
            Some(sid("C"))
        );

        // every seat here is held by someone its school ranks at the top, so
        // nobody outranks an incumbent anywhere
        for s in ["A", "B", "C"] {
            assert_eq!(
                safety(&inst2, &out.matching, &out.moved, &sid(s)).unwrap(),
                None
            );
        }
    }

    #[test]
    fn safety_is_the_best_school_holding_an_outranked_unmoved_admit() {
        let inst = Instance::new(
            vec![
                Student::new("s", ["X", "Y"]),
                Student::new("k", ["X"]),
                Student::new("t", ["Y"]),
            ],
            vec![
                School::new("X", 1, ["s", "k"]),
                School::new("Y", 1, ["t", "s"]),
            ],
        );
        // k holds X although X would rather have s; t holds Y and outranks s
        let m = Matching::from_pairs([
            (sid("s"), None),
            (sid("k"), Some(hid("X"))),
            (sid("t"), Some(hid("Y"))),
        ]);
        let moved = BTreeSet::from([sid("s")]);
        assert_eq!(safety(&inst, &m, &moved, &sid("s")).unwrap(), Some(hid("X")));
        // once k counts as moved too, no unmoved admit is outranked by s
        let both = BTreeSet::from([sid("s"), sid("k")]);
        assert_eq!(safety(&inst, &m, &both, &sid("s")).unwrap(), None);
    }

    #[test]
    fn rewrites_cycle_through_all_three_forms() {
        let scenarios: Vec<(StudentChangeForm, StudentScenario)> = (0..60)
            .filter_map(|seed| {
                let (round1, m, delta) = random_scenario(seed);
                let (form, delta) = match seed % 3 {
                    0 if !delta.new_students.is_empty() => (
                        StudentChangeForm::AddStudents,
                        StudentDelta {
                            new_students: delta.new_students,
                            updated_school_prefs: delta.updated_school_prefs,
                            ..StudentDelta::default()
                        },
                    ),
                    1 if !delta.removed_schools.is_empty() => (
                        StudentChangeForm::RemoveSchool,
                        StudentDelta {
                            removed_schools: delta.removed_schools,
                            ..StudentDelta::default()
                        },
                    ),
                    2 if !delta.capacity_decreases.is_empty() => (
                        StudentChangeForm::DecreaseCapacity,
                        StudentDelta {
                            capacity_decreases: delta.capacity_decreases,
                            ..StudentDelta::default()
                        },
                    ),
                    _ => return None,
                };
                Some((form, StudentScenario { round1, matching: m, delta }))
            })
            .collect();
        assert!(scenarios.len() >= 10, "want a real sample of scenarios");

        for (form, scenario) in scenarios {
            let base =
                min_realloc_students(&scenario.round1, &scenario.matching, &scenario.delta)
                    .unwrap();
            let base_real = base.matching.clone();

            let mut form = form;
            let mut current = scenario;
            let mut helpers: BTreeSet<StudentId> = BTreeSet::new();
            let mut parked: BTreeSet<StudentId> = BTreeSet::new();
            for _ in 0..3 {
                let red = reduce_student_change(form, &current).unwrap();
                assert_eq!(red.form, form.next());
                let out = min_realloc_students(
                    &red.scenario.round1,
                    &red.scenario.matching,
                    &red.scenario.delta,
                )
                .unwrap();
                helpers.extend(red.helper_students.iter().cloned());
                parked.extend(red.parked_students.iter().cloned());

                let real_moved: BTreeSet<StudentId> = out
                    .moved
                    .iter()
                    .filter(|s| !helpers.contains(*s) && !parked.contains(*s))
                    .cloned()
                    .collect();
                assert_eq!(real_moved, base.moved, "form {form:?}");
                let real = Matching::from_pairs(out.matching.iter().filter_map(|(s, h)| {
                    if helpers.contains(s) {
                        None
                    } else {
                        Some((s.clone(), h.cloned()))
                    }
                }));
                assert_eq!(real, base_real, "form {form:?}");

                form = red.form;
                current = red.scenario;
            }
        }
    }
}
