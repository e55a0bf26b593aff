//! Capacitated deferred acceptance from either proposing side.
//!
//! Proposals are processed lowest id first, which pins down the run (though
//! not the outcome, which is the usual side-optimal stable matching and does
//! not depend on processing order). Schools hold their provisionally best
//! admits and bump the worst one when a better proposal arrives.

use std::collections::{BTreeMap, VecDeque};

use crate::error::{CertificationFailure, Error, Result};
use crate::model::{
    find_blocking_pairs_indexed, validate_matching_indexed, Indexed, Instance, Matching, SchoolId,
    StudentId,
};

/// Which side proposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Side {
    #[default]
    Students,
    Schools,
}

/// Optional per-participant truncations applied before the run.
///
/// A barrier on a school cuts its list right after the named student; a
/// safety on a student cuts her list right after the named school. The named
/// participant stays acceptable, everything ranked below it is dropped.
#[derive(Debug, Clone, Default)]
pub struct DaConfig {
    pub proposing_side: Side,
    pub barriers: BTreeMap<SchoolId, StudentId>,
    pub safeties: BTreeMap<StudentId, SchoolId>,
}

impl DaConfig {
    pub fn students() -> Self {
        DaConfig {
            proposing_side: Side::Students,
            ..DaConfig::default()
        }
    }

    pub fn schools() -> Self {
        DaConfig {
            proposing_side: Side::Schools,
            ..DaConfig::default()
        }
    }
}

/// Truncates `list` right after `keep`, inclusive. `None` if absent.
pub(crate) fn truncate_after<T: Eq + Clone>(list: &[T], keep: &T) -> Option<Vec<T>> {
    let pos = list.iter().position(|x| x == keep)?;
    Some(list[..=pos].to_vec())
}

/// Student-proposing deferred acceptance. Returns the student-optimal stable
/// matching of `instance`.
pub fn student_proposing_da(instance: &Instance) -> Result<Matching> {
    deferred_acceptance(instance, &DaConfig::students())
}

/// School-proposing deferred acceptance. Returns the school-optimal stable
/// matching of `instance`.
pub fn school_proposing_da(instance: &Instance) -> Result<Matching> {
    deferred_acceptance(instance, &DaConfig::schools())
}

/// Deferred acceptance under `config`. The output is certified stable for
/// the (possibly truncated) instance the run actually used before it is
/// returned.
pub fn deferred_acceptance(instance: &Instance, config: &DaConfig) -> Result<Matching> {
    let truncated = apply_truncations(instance, config)?;
    let idx = truncated.indexed()?;

    let m = match config.proposing_side {
        Side::Students => run_student_proposing(&idx),
        Side::Schools => run_school_proposing(&idx),
    };

    validate_matching_indexed(&idx, &m)
        .map_err(|e| Error::Certification(CertificationFailure::Invariant(e.to_string())))?;
    if let Some(p) = find_blocking_pairs_indexed(&idx, &m).into_iter().next() {
        return Err(Error::Certification(CertificationFailure::Blocking(p)));
    }
    Ok(m)
}

fn apply_truncations(instance: &Instance, config: &DaConfig) -> Result<Instance> {
    let mut out = instance.clone();
    for (hid, keep) in &config.barriers {
        let school = out
            .schools
            .iter_mut()
            .find(|h| &h.id == hid)
            .ok_or_else(|| Error::UnknownSchool(hid.clone()))?;
        school.prefs = truncate_after(&school.prefs, keep).ok_or_else(|| {
            Error::BadConfig(format!("barrier student `{keep}` is not on the list of `{hid}`"))
        })?;
    }
    for (sid, keep) in &config.safeties {
        let student = out
            .students
            .iter_mut()
            .find(|s| &s.id == sid)
            .ok_or_else(|| Error::UnknownStudent(sid.clone()))?;
        student.prefs = truncate_after(&student.prefs, keep).ok_or_else(|| {
            Error::BadConfig(format!("safety school `{keep}` is not on the list of `{sid}`"))
        })?;
    }
    Ok(out)
}

fn run_student_proposing(idx: &Indexed<'_>) -> Matching {
    // next pref index each student will propose to
    let mut next: BTreeMap<&StudentId, usize> = BTreeMap::new();
    let mut held: BTreeMap<&SchoolId, Vec<&StudentId>> = BTreeMap::new();
    let mut queue: VecDeque<&StudentId> = idx.students.keys().copied().collect();

    while let Some(s) = queue.pop_front() {
        let prefs = &idx.students[s].prefs;
        let i = next.entry(s).or_insert(0);
        while *i < prefs.len() {
            let h = &prefs[*i];
            *i += 1;
            if !idx.school_lists(h, s) {
                continue;
            }
            let cap = idx.schools[h].capacity as usize;
            if cap == 0 {
                continue;
            }
            let roster = held.entry(h).or_default();
            if roster.len() < cap {
                roster.push(s);
                break;
            }
            let (worst_pos, worst) = roster
                .iter()
                .copied()
                .enumerate()
                .max_by_key(|&(_, r)| idx.school_rank(h, Some(r)))
                .expect("full roster is nonempty");
            if idx.school_prefers(h, Some(s), Some(worst)) {
                roster[worst_pos] = s;
                // bumped student resumes from her next choice
                queue.push_back(worst);
                break;
            }
        }
    }

    collect(idx, &held)
}

fn run_school_proposing(idx: &Indexed<'_>) -> Matching {
    // next pref index each school will propose from; a school proposes down
    // its list until every seat holds someone or the list runs out
    let mut next: BTreeMap<&SchoolId, usize> = BTreeMap::new();
    // student -> school currently held
    let mut engaged: BTreeMap<&StudentId, &SchoolId> = BTreeMap::new();
    let mut queue: VecDeque<&SchoolId> = idx.schools.keys().copied().collect();

    while let Some(h) = queue.pop_front() {
        let school = idx.schools[h];
        let cap = school.capacity as usize;
        loop {
            let seats_filled = engaged.values().filter(|x| **x == h).count();
            if seats_filled >= cap {
                break;
            }
            let i = next.entry(h).or_insert(0);
            if *i >= school.prefs.len() {
                break;
            }
            let s = &school.prefs[*i];
            *i += 1;
            if !idx.student_lists(s, h) {
                continue;
            }
            let current = engaged.get(s).copied();
            match current {
                None => {
                    engaged.insert(s, h);
                }
                Some(cur) if idx.student_prefers(s, Some(h), Some(cur)) => {
                    engaged.insert(s, h);
                    // the jilted school proposes further down its list
                    queue.push_back(cur);
                }
                Some(_) => {}
            }
        }
    }

    let mut by_school: BTreeMap<&SchoolId, Vec<&StudentId>> = BTreeMap::new();
    for (&s, &h) in &engaged {
        by_school.entry(h).or_default().push(s);
    }
    collect(idx, &by_school)
}

fn collect(idx: &Indexed<'_>, held: &BTreeMap<&SchoolId, Vec<&StudentId>>) -> Matching {
    let mut m = Matching::new();
    for id in idx.students.keys() {
        m.set((*id).clone(), None);
    }
    for (h, roster) in held {
        for s in roster {
            m.set((*s).clone(), Some((*h).clone()));
        }
    }
    m
}
