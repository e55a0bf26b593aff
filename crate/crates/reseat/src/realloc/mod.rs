//! Re-allocation mechanisms for a market that changes between two
//! enrollment rounds.
//!
//! [`schools`] handles growth on the school side: new schools open, existing
//! schools gain seats, some students withdraw. Freed seats are filled by
//! moving a seated student only when every stable outcome moves her.
//! [`students`] handles growth on the student side: new students arrive,
//! schools close or shed seats. Newcomers claim seats and incumbents are
//! bumped only when unavoidable.
//!
//! Both mechanisms certify their own output before returning it, so a bug
//! surfaces as [`Error::Certification`] rather than a silently wrong
//! matching. Both also come with an exchange operation that turns the
//! mechanism's extreme outcome into the other minimum re-allocations, and
//! with rewrites between the three equivalent ways of expressing each kind
//! of market change.

pub mod schools;
pub mod students;

pub use schools::{
    alternate_min_realloc_schools, apply_school_delta, barrier, bs_preferring,
    min_realloc_schools, min_realloc_schools_randomized, preferring_students,
    reduce_school_change, ReducedSchoolScenario, SchoolChangeForm, SchoolDelta, SchoolScenario,
};
pub use students::{
    alternate_min_realloc_students, apply_student_delta, min_realloc_students,
    min_realloc_students_randomized, reduce_student_change, safety, worst_student_accepted,
    ReducedStudentScenario, StudentChangeForm, StudentDelta, StudentScenario,
};

use crate::error::{CertificationFailure, Error, Result};
use crate::model::{find_blocking_pairs, validate_matching, Instance, Matching};

/// Rejects an input matching that is invalid or unstable on `inst`.
pub(crate) fn require_stable(inst: &Instance, m: &Matching) -> Result<()> {
    validate_matching(inst, m)?;
    if let Some(p) = find_blocking_pairs(inst, m)?.into_iter().next() {
        return Err(Error::UnstableInput(p));
    }
    Ok(())
}

/// Checks a matching this module produced itself. Failures here are bugs,
/// not bad input, and come back as certification errors.
pub(crate) fn certify_stable(inst: &Instance, m: &Matching) -> Result<()> {
    validate_matching(inst, m)
        .map_err(|e| Error::Certification(CertificationFailure::Invariant(e.to_string())))?;
    if let Some(p) = find_blocking_pairs(inst, m)?.into_iter().next() {
        return Err(Error::Certification(CertificationFailure::Blocking(p)));
    }
    Ok(())
}

/// Like [`certify_stable`] but for the transformed round-one market built by
/// a change-form rewrite, which must leave the given matching stable.
pub(crate) fn certify_round1(inst: &Instance, m: &Matching) -> Result<()> {
    require_stable(inst, m).map_err(|e| {
        Error::Certification(CertificationFailure::Invariant(format!(
            "rewritten round-one market broke its matching: {e}"
        )))
    })
}

/// Checks that `updated` keeps the relative order of the old entries,
/// treating the end of the old list as one more position (the acceptability
/// cut): every old entry must stay, in order, and nothing past the old cut
/// may resurface. Entries for which `is_old` is false are new and may sit
/// anywhere. On failure returns the offending entry and what it was
/// reordered against (`None` for the cut itself).
pub(crate) fn check_order_preserved<T: Eq + Clone>(
    old: &[T],
    updated: &[T],
    is_old: impl Fn(&T) -> bool,
) -> std::result::Result<(), (T, Option<T>)> {
    let mut i = 0;
    for x in updated.iter().filter(|x| is_old(x)) {
        match old.get(i) {
            Some(y) if x == y => i += 1,
            Some(y) => return Err((x.clone(), Some(y.clone()))),
            None => return Err((x.clone(), None)),
        }
    }
    if i < old.len() {
        return Err((old[i].clone(), None));
    }
    Ok(())
}
