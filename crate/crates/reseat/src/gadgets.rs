//! Markets whose optima count set covers.
//!
//! Each exact objective in [`crate::oracle`] (`solve_p1` through `solve_p5`)
//! is tied to minimum set cover by a purpose-built market: the objective's
//! optimum on that market equals the minimum cover size, and the solved
//! matching decodes back into a minimum cover via [`extract_cover`].
//! [`brute_set_cover`] is the independent check on both ends.
//!
//! All five constructions share one skeleton. Every set gets a school (ids
//! `h1`, `h2`, ..) ranking a dedicated gate student first and the set's
//! elements after her in declared order; element students keep their
//! universe ids and rank the schools whose sets contain them by ascending
//! set index. A school holding any element while its gate student sits
//! elsewhere is blocked by her, so opening a school costs its gate, and the
//! cheapest way to seat every element opens exactly a minimum cover.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::error::{CertificationFailure, Error, Result};
use crate::model::{Instance, Matching, School, SchoolId, Student, StudentId, UNMATCHED_TOKEN};
use crate::oracle::WeightFunction;
use crate::realloc::{apply_school_delta, apply_student_delta, SchoolDelta, StudentDelta};

/// Most sets [`brute_set_cover`] will search over.
pub const MAX_COVER_SETS: usize = 20;

// coverage is tracked in a u128 during the exhaustive search
const MAX_COVER_ELEMENTS: usize = 128;

/// An instance of set cover: an ordered universe and an ordered family of
/// subsets of it.
///
/// Order is data. The market constructions read preference lists straight
/// off it, so reordering elements or sets produces a different (equivalent)
/// market.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetCoverInstance {
    pub universe: Vec<String>,
    pub sets: Vec<Vec<String>>,
}

impl SetCoverInstance {
    pub fn new(
        universe: impl IntoIterator<Item = impl Into<String>>,
        sets: impl IntoIterator<Item = impl IntoIterator<Item = impl Into<String>>>,
    ) -> Self {
        SetCoverInstance {
            universe: universe.into_iter().map(Into::into).collect(),
            sets: sets
                .into_iter()
                .map(|s| s.into_iter().map(Into::into).collect())
                .collect(),
        }
    }

    /// Duplicate elements, set entries outside the universe, repeats within
    /// a set, and the reserved unmatched token are all malformed. Sets that
    /// fail to cover the universe are legal here; [`brute_set_cover`]
    /// reports those as infeasible.
    pub fn validate(&self) -> Result<()> {
        let mut elements = BTreeSet::new();
        for e in &self.universe {
            if e == UNMATCHED_TOKEN {
                return Err(Error::BadConfig(format!("element id `{e}` is reserved")));
            }
            if !elements.insert(e.as_str()) {
                return Err(Error::BadConfig(format!(
                    "duplicate element `{e}` in the universe"
                )));
            }
        }
        for (i, set) in self.sets.iter().enumerate() {
            let mut seen = BTreeSet::new();
            for e in set {
                if !elements.contains(e.as_str()) {
                    return Err(Error::BadConfig(format!(
                        "set {i} lists `{e}`, which is not in the universe"
                    )));
                }
                if !seen.insert(e.as_str()) {
                    return Err(Error::BadConfig(format!("set {i} lists `{e}` twice")));
                }
            }
        }
        Ok(())
    }
}

/// Exhaustive minimum set cover: the smallest selection of set indices whose
/// union is the universe, lexicographically least among the smallest.
///
/// Errors when even the full family misses an element.
pub fn brute_set_cover(sc: &SetCoverInstance) -> Result<(usize, BTreeSet<usize>)> {
    sc.validate()?;
    let q = sc.sets.len();
    if q > MAX_COVER_SETS {
        return Err(Error::BoundExceeded {
            what: "sets in the cover instance",
            actual: q,
            limit: MAX_COVER_SETS,
        });
    }
    if sc.universe.len() > MAX_COVER_ELEMENTS {
        return Err(Error::BoundExceeded {
            what: "elements in the universe",
            actual: sc.universe.len(),
            limit: MAX_COVER_ELEMENTS,
        });
    }

    let slot: BTreeMap<&str, usize> = sc
        .universe
        .iter()
        .enumerate()
        .map(|(i, e)| (e.as_str(), i))
        .collect();
    let full = sc
        .universe
        .iter()
        .enumerate()
        .fold(0u128, |acc, (i, _)| acc | 1u128 << i);
    let masks: Vec<u128> = sc
        .sets
        .iter()
        .map(|set| set.iter().fold(0u128, |acc, e| acc | 1u128 << slot[e.as_str()]))
        .collect();

    let mut best: Option<(usize, Vec<usize>)> = None;
    for pick in 0u32..1 << q {
        let mut covered = 0u128;
        let mut chosen = Vec::new();
        for (i, mask) in masks.iter().enumerate() {
            if pick >> i & 1 == 1 {
                covered |= mask;
                chosen.push(i);
            }
        }
        if covered == full {
            let cand = (chosen.len(), chosen);
            if best.as_ref().is_none_or(|b| cand < *b) {
                best = Some(cand);
            }
        }
    }
    match best {
        Some((size, chosen)) => Ok((size, chosen.into_iter().collect())),
        None => Err(Error::Infeasible(
            "the sets do not cover the universe".to_owned(),
        )),
    }
}

fn set_school_id(i: usize) -> SchoolId {
    SchoolId::new(format!("h{}", i + 1))
}

fn pool_school_id() -> SchoolId {
    SchoolId::new("h0")
}

fn gate_student_id(i: usize) -> StudentId {
    StudentId::new(format!("n{}", i + 1))
}

fn parked_student_id(i: usize) -> StudentId {
    StudentId::new(format!("w{}", i + 1))
}

fn element_id(e: &str) -> StudentId {
    StudentId::new(e)
}

// universe ids verbatim, containing schools by ascending set index
fn element_students(sc: &SetCoverInstance) -> Vec<Student> {
    sc.universe
        .iter()
        .map(|e| Student {
            id: element_id(e),
            prefs: sc
                .sets
                .iter()
                .enumerate()
                .filter(|(_, set)| set.iter().any(|x| x == e))
                .map(|(i, _)| set_school_id(i))
                .collect(),
        })
        .collect()
}

fn members(set: &[String]) -> Vec<StudentId> {
    set.iter().map(|e| element_id(e)).collect()
}

// generated student ids must not already name an element
fn reserve_ids(sc: &SetCoverInstance, generated: impl Iterator<Item = StudentId>) -> Result<()> {
    let taken: BTreeSet<&str> = sc.universe.iter().map(String::as_str).collect();
    for id in generated {
        if taken.contains(id.as_str()) {
            return Err(Error::DuplicateParticipant(id.0));
        }
    }
    Ok(())
}

/// A two-round market for the frozen-seat extension objectives: the opening
/// round's instance and matching plus the arrivals that define round 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtensionGadget {
    pub round1: Instance,
    pub matching: Matching,
    pub delta: StudentDelta,
}

impl ExtensionGadget {
    /// The round-2 instance: `delta` applied to `round1`.
    pub fn round2(&self) -> Result<Instance> {
        apply_student_delta(&self.round1, &self.delta)
    }
}

/// A two-round market for the move-allowed extension objective.
///
/// `delta` is empty by construction: nothing arrives or changes in round 2,
/// the solver itself chooses where capacity grows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReallocGadget {
    pub round1: Instance,
    pub matching: Matching,
    pub delta: SchoolDelta,
}

impl ReallocGadget {
    /// The round-2 instance: `delta` applied to `round1`.
    pub fn round2(&self) -> Result<Instance> {
        apply_school_delta(&self.round1, &self.delta)
    }
}

/// A single-round market with edge weights for the capacity-choosing
/// max-weight objective.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightGadget {
    pub instance: Instance,
    pub weights: WeightFunction,
}

/// Market tying the max-leftovers-then-fewest-arrivals optimum to minimum
/// set cover.
///
/// Element students wait unmatched after round 1 (every school opens with
/// capacity zero); one gate student per set arrives in round 2 wanting only
/// her set's school. Seating an element at school `i` forces gate `i` in as
/// well, so an optimum seats every element while admitting gates for exactly
/// a minimum cover; which gates got in is the cover.
pub fn gadget_p1(sc: &SetCoverInstance) -> Result<ExtensionGadget> {
    sc.validate()?;
    let q = sc.sets.len();
    reserve_ids(sc, (0..q).map(gate_student_id))?;

    let round1 = Instance {
        students: element_students(sc),
        schools: sc
            .sets
            .iter()
            .enumerate()
            .map(|(i, set)| School {
                id: set_school_id(i),
                capacity: 0,
                prefs: members(set),
            })
            .collect(),
    };
    let matching = Matching::from_pairs(sc.universe.iter().map(|e| (element_id(e), None)));
    let delta = StudentDelta {
        new_students: (0..q)
            .map(|i| Student {
                id: gate_student_id(i),
                prefs: vec![set_school_id(i)],
            })
            .collect(),
        updated_school_prefs: sc
            .sets
            .iter()
            .enumerate()
            .map(|(i, set)| {
                let mut prefs = vec![gate_student_id(i)];
                prefs.extend(members(set));
                (set_school_id(i), prefs)
            })
            .collect(),
        ..StudentDelta::default()
    };

    let gadget = ExtensionGadget {
        round1,
        matching,
        delta,
    };
    crate::realloc::require_stable(&gadget.round1, &gadget.matching)?;
    gadget.round2()?;
    Ok(gadget)
}

/// Role-swapped [`gadget_p1`] for the max-arrivals-then-fewest-leftovers
/// optimum: the gates wait unmatched from round 1 and the elements arrive in
/// round 2. The decode is unchanged, admitted gates are the cover.
pub fn gadget_p2(sc: &SetCoverInstance) -> Result<ExtensionGadget> {
    sc.validate()?;
    let q = sc.sets.len();
    reserve_ids(sc, (0..q).map(gate_student_id))?;

    let round1 = Instance {
        students: (0..q)
            .map(|i| Student {
                id: gate_student_id(i),
                prefs: vec![set_school_id(i)],
            })
            .collect(),
        schools: (0..q)
            .map(|i| School {
                id: set_school_id(i),
                capacity: 0,
                prefs: vec![gate_student_id(i)],
            })
            .collect(),
    };
    let matching = Matching::from_pairs((0..q).map(|i| (gate_student_id(i), None)));
    let delta = StudentDelta {
        new_students: element_students(sc),
        updated_school_prefs: sc
            .sets
            .iter()
            .enumerate()
            .map(|(i, set)| {
                let mut prefs = vec![gate_student_id(i)];
                prefs.extend(members(set));
                (set_school_id(i), prefs)
            })
            .collect(),
        ..StudentDelta::default()
    };

    let gadget = ExtensionGadget {
        round1,
        matching,
        delta,
    };
    crate::realloc::require_stable(&gadget.round1, &gadget.matching)?;
    gadget.round2()?;
    Ok(gadget)
}

/// The [`gadget_p1`] market packaged with an admission budget `k`: a cover
/// of size `k` exists exactly when some stable extension admitting at most
/// `k` arrivals seats every element student.
pub fn gadget_p3(sc: &SetCoverInstance, k: usize) -> Result<(ExtensionGadget, usize)> {
    Ok((gadget_p1(sc)?, k))
}

/// Market tying the max-leftovers-then-fewest-moves optimum to minimum set
/// cover.
///
/// One parked student per set starts on the pool school `h0` (capacity = set
/// count) but prefers her set's school; element students wait unmatched.
/// Seating an element at school `i` pulls parked student `i` off the pool,
/// costing one move, so the fewest moves that seat every element buy exactly
/// a minimum cover; which parked students moved is the cover.
pub fn gadget_p4(sc: &SetCoverInstance) -> Result<ReallocGadget> {
    sc.validate()?;
    let q = sc.sets.len();
    reserve_ids(sc, (0..q).map(parked_student_id))?;

    let mut students: Vec<Student> = (0..q)
        .map(|i| Student {
            id: parked_student_id(i),
            prefs: vec![set_school_id(i), pool_school_id()],
        })
        .collect();
    students.extend(element_students(sc));

    let mut schools: Vec<School> = sc
        .sets
        .iter()
        .enumerate()
        .map(|(i, set)| {
            let mut prefs = vec![parked_student_id(i)];
            prefs.extend(members(set));
            School {
                id: set_school_id(i),
                capacity: 0,
                prefs,
            }
        })
        .collect();
    schools.push(School {
        id: pool_school_id(),
        capacity: q as u32,
        prefs: (0..q).map(parked_student_id).collect(),
    });

    let matching = Matching::from_pairs(
        (0..q)
            .map(|i| (parked_student_id(i), Some(pool_school_id())))
            .chain(sc.universe.iter().map(|e| (element_id(e), None))),
    );

    let gadget = ReallocGadget {
        round1: Instance { students, schools },
        matching,
        delta: SchoolDelta::default(),
    };
    crate::realloc::require_stable(&gadget.round1, &gadget.matching)?;
    gadget.round2()?;
    Ok(gadget)
}

/// Market tying the capacity-choosing max-weight optimum to minimum set
/// cover.
///
/// Every gate is worth 1 on the pool school `h0` and 0 on her set's school;
/// every element is worth 2 at each school containing it. Seating every
/// element (always worth it) drags gates off the pool, one per opened
/// school, so the best weight is 2 per element plus 1 per unopened set; the
/// schools holding elements are a minimum cover.
pub fn gadget_p5(sc: &SetCoverInstance) -> Result<WeightGadget> {
    sc.validate()?;
    let q = sc.sets.len();
    reserve_ids(sc, (0..q).map(gate_student_id))?;

    let mut students: Vec<Student> = (0..q)
        .map(|i| Student {
            id: gate_student_id(i),
            prefs: vec![set_school_id(i), pool_school_id()],
        })
        .collect();
    students.extend(element_students(sc));

    let mut schools: Vec<School> = sc
        .sets
        .iter()
        .enumerate()
        .map(|(i, set)| {
            let mut prefs = vec![gate_student_id(i)];
            prefs.extend(members(set));
            School {
                id: set_school_id(i),
                capacity: 0,
                prefs,
            }
        })
        .collect();
    schools.push(School {
        id: pool_school_id(),
        capacity: 0,
        prefs: (0..q).map(gate_student_id).collect(),
    });

    let instance = Instance { students, schools };
    let report = instance.validate();
    if !report.is_ok() {
        return Err(Error::InvalidInstance(report));
    }

    let mut weights = WeightFunction::default();
    for i in 0..q {
        weights.set(pool_school_id(), gate_student_id(i), Rational64::from_integer(1));
        weights.set(set_school_id(i), gate_student_id(i), Rational64::from_integer(0));
        for e in &sc.sets[i] {
            weights.set(set_school_id(i), element_id(e), Rational64::from_integer(2));
        }
    }

    Ok(WeightGadget { instance, weights })
}

/// Which objective a gadget was built for; selects the decode rule in
/// [`extract_cover`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HardProblem {
    P1,
    P2,
    P3,
    P4,
    P5,
}

/// Reads a minimum set cover off a solved gadget matching and certifies it:
/// the selection must cover the universe and match the exhaustive optimum's
/// size.
///
/// P1/P2/P3 read the admitted gate students, P4 the parked students pulled
/// onto their set schools, P5 the schools holding element students. A
/// matching that is not an optimum of its gadget fails certification.
pub fn extract_cover(
    problem: HardProblem,
    sc: &SetCoverInstance,
    witness: &Matching,
) -> Result<BTreeSet<usize>> {
    sc.validate()?;
    let q = sc.sets.len();
    let picked: BTreeSet<usize> = match problem {
        HardProblem::P1 | HardProblem::P2 | HardProblem::P3 => (0..q)
            .filter(|&i| witness.school_of(&gate_student_id(i)).is_some())
            .collect(),
        HardProblem::P4 => (0..q)
            .filter(|&i| witness.school_of(&parked_student_id(i)) == Some(&set_school_id(i)))
            .collect(),
        HardProblem::P5 => {
            let index: BTreeMap<SchoolId, usize> = (0..q).map(|i| (set_school_id(i), i)).collect();
            sc.universe
                .iter()
                .filter_map(|e| witness.school_of(&element_id(e)))
                .filter_map(|h| index.get(h).copied())
                .collect()
        }
    };

    let mut covered: BTreeSet<&str> = BTreeSet::new();
    for &i in &picked {
        covered.extend(sc.sets[i].iter().map(String::as_str));
    }
    if let Some(missing) = sc.universe.iter().find(|e| !covered.contains(e.as_str())) {
        return Err(Error::Certification(CertificationFailure::Invariant(
            format!("decoded set selection misses element `{missing}`"),
        )));
    }
    let (optimum, _) = brute_set_cover(sc)?;
    if picked.len() != optimum {
        return Err(Error::Certification(CertificationFailure::Invariant(
            format!(
                "decoded cover has {} sets; the optimum is {optimum}",
                picked.len()
            ),
        )));
    }
    Ok(picked)
}
