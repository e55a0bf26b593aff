//! Seeded pseudo-random markets and deltas.
//!
//! Identical configuration, identical output, down to the byte. The
//! generator draws in one fixed order (student lists, then schools, then the
//! delta), so adding draws anywhere would change every instance after it;
//! extend at the end only.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::Delta;
use crate::model::{Instance, School, SchoolId, Student, StudentId};
use crate::realloc::{SchoolDelta, StudentDelta};

/// What to generate. Capacities and list lengths are drawn uniformly from
/// the inclusive ranges; list lengths additionally cap at the partner count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n_students: usize,
    pub n_schools: usize,
    pub cap_min: u32,
    pub cap_max: u32,
    pub list_min: usize,
    pub list_max: usize,
    pub delta: Option<DeltaShape>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 0,
            n_students: 4,
            n_schools: 3,
            cap_min: 1,
            cap_max: 2,
            list_min: 0,
            list_max: 3,
            delta: None,
        }
    }
}

/// Rough size of the delta to generate alongside the instance. Counts are
/// clamped to what the market can support (you cannot remove five students
/// from a market of three), so every generated delta applies cleanly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeltaShape {
    Schools {
        new_schools: usize,
        capacity_increases: usize,
        removed_students: usize,
    },
    Students {
        new_students: usize,
        removed_schools: usize,
        capacity_decreases: usize,
    },
}

impl GeneratorConfig {
    fn check(&self) -> Result<()> {
        if self.cap_min > self.cap_max {
            return Err(Error::Infeasible(format!(
                "capacity range {}..={} is empty",
                self.cap_min, self.cap_max
            )));
        }
        if self.list_min > self.list_max {
            return Err(Error::Infeasible(format!(
                "list length range {}..={} is empty",
                self.list_min, self.list_max
            )));
        }
        if self.n_students > 0 && self.list_min > self.n_schools {
            return Err(Error::Infeasible(format!(
                "students cannot list {} of {} schools",
                self.list_min, self.n_schools
            )));
        }
        if self.n_schools > 0 && self.list_min > self.n_students {
            return Err(Error::Infeasible(format!(
                "schools cannot list {} of {} students",
                self.list_min, self.n_students
            )));
        }
        Ok(())
    }
}

// uniform-length prefix of a shuffled copy; length capped by the pool
fn draw_list<T: Clone>(rng: &mut ChaCha8Rng, pool: &[T], min: usize, max: usize) -> Vec<T> {
    let hi = max.min(pool.len());
    let lo = min.min(hi);
    let len = rng.gen_range(lo..=hi);
    let mut pool = pool.to_vec();
    for i in 0..len {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(len);
    pool
}

fn pick_distinct<T: Clone>(rng: &mut ChaCha8Rng, pool: &[T], count: usize) -> Vec<T> {
    draw_list(rng, pool, count.min(pool.len()), count)
}

/// Draws an instance, and a delta when the config asks for one. Ids are
/// `s1..` for students and `h1..` for schools; delta additions continue the
/// numbering.
pub fn generate(cfg: &GeneratorConfig) -> Result<(Instance, Option<Delta>)> {
    cfg.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let student_ids: Vec<StudentId> = (1..=cfg.n_students)
        .map(|i| StudentId::new(format!("s{i}")))
        .collect();
    let school_ids: Vec<SchoolId> = (1..=cfg.n_schools)
        .map(|i| SchoolId::new(format!("h{i}")))
        .collect();

    let students: Vec<Student> = student_ids
        .iter()
        .map(|id| Student {
            id: id.clone(),
            prefs: draw_list(&mut rng, &school_ids, cfg.list_min, cfg.list_max),
        })
        .collect();
    let schools: Vec<School> = school_ids
        .iter()
        .map(|id| School {
            id: id.clone(),
            capacity: rng.gen_range(cfg.cap_min..=cfg.cap_max),
            prefs: draw_list(&mut rng, &student_ids, cfg.list_min, cfg.list_max),
        })
        .collect();
    let instance = Instance { students, schools };

    let delta = match &cfg.delta {
        None => None,
        Some(DeltaShape::Schools {
            new_schools,
            capacity_increases,
            removed_students,
        }) => Some(Delta::Schools(draw_school_delta(
            &mut rng,
            cfg,
            &instance,
            *new_schools,
            *capacity_increases,
            *removed_students,
        ))),
        Some(DeltaShape::Students {
            new_students,
            removed_schools,
            capacity_decreases,
        }) => Some(Delta::Students(draw_student_delta(
            &mut rng,
            cfg,
            &instance,
            *new_students,
            *removed_schools,
            *capacity_decreases,
        ))),
    };
    Ok((instance, delta))
}

fn draw_school_delta(
    rng: &mut ChaCha8Rng,
    cfg: &GeneratorConfig,
    base: &Instance,
    new_schools: usize,
    capacity_increases: usize,
    removed_students: usize,
) -> SchoolDelta {
    let mut delta = SchoolDelta::default();

    let all_students: Vec<StudentId> = base.students.iter().map(|s| s.id.clone()).collect();
    delta.removed_students = pick_distinct(rng, &all_students, removed_students)
        .into_iter()
        .collect();

    let all_schools: Vec<SchoolId> = base.schools.iter().map(|h| h.id.clone()).collect();
    for h in pick_distinct(rng, &all_schools, capacity_increases) {
        delta.capacity_increases.insert(h, rng.gen_range(1..=2));
    }

    // new schools list survivors only; removed students take their stale
    // lists with them
    let survivors: Vec<StudentId> = all_students
        .iter()
        .filter(|s| !delta.removed_students.contains(*s))
        .cloned()
        .collect();
    for k in 0..new_schools {
        delta.new_schools.push(School {
            id: SchoolId::new(format!("h{}", cfg.n_schools + k + 1)),
            capacity: rng.gen_range(cfg.cap_min..=cfg.cap_max),
            prefs: draw_list(rng, &survivors, cfg.list_min, cfg.list_max),
        });
    }

    // each surviving student slots each new school somewhere, or skips it;
    // insertion keeps her old order, so the delta applies cleanly
    let mut updated: BTreeMap<StudentId, Vec<SchoolId>> = BTreeMap::new();
    for ns in &delta.new_schools {
        for s in &base.students {
            if delta.removed_students.contains(&s.id) || !rng.gen_bool(0.5) {
                continue;
            }
            let list = updated
                .entry(s.id.clone())
                .or_insert_with(|| s.prefs.clone());
            let pos = rng.gen_range(0..=list.len());
            list.insert(pos, ns.id.clone());
        }
    }
    delta.updated_student_prefs = updated;
    delta
}

fn draw_student_delta(
    rng: &mut ChaCha8Rng,
    cfg: &GeneratorConfig,
    base: &Instance,
    new_students: usize,
    removed_schools: usize,
    capacity_decreases: usize,
) -> StudentDelta {
    let mut delta = StudentDelta::default();

    let all_schools: Vec<SchoolId> = base.schools.iter().map(|h| h.id.clone()).collect();
    delta.removed_schools = pick_distinct(rng, &all_schools, removed_schools)
        .into_iter()
        .collect();

    // cuts stay within the school's capacity and off removed schools
    let cuttable: Vec<&School> = base
        .schools
        .iter()
        .filter(|h| h.capacity > 0 && !delta.removed_schools.contains(&h.id))
        .collect();
    let picked = pick_distinct(rng, &cuttable, capacity_decreases);
    for h in picked {
        delta
            .capacity_decreases
            .insert(h.id.clone(), rng.gen_range(1..=h.capacity));
    }

    let survivors: Vec<SchoolId> = all_schools
        .iter()
        .filter(|h| !delta.removed_schools.contains(*h))
        .cloned()
        .collect();
    for k in 0..new_students {
        delta.new_students.push(Student {
            id: StudentId::new(format!("s{}", cfg.n_students + k + 1)),
            prefs: draw_list(rng, &survivors, cfg.list_min, cfg.list_max),
        });
    }

    let mut updated: BTreeMap<SchoolId, Vec<StudentId>> = BTreeMap::new();
    for ns in &delta.new_students {
        for h in &base.schools {
            if delta.removed_schools.contains(&h.id) || !rng.gen_bool(0.5) {
                continue;
            }
            let list = updated
                .entry(h.id.clone())
                .or_insert_with(|| h.prefs.clone());
            let pos = rng.gen_range(0..=list.len());
            list.insert(pos, ns.id.clone());
        }
    }
    delta.updated_school_prefs = updated;
    delta
}
