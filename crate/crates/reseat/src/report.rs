//! Versioned report documents printed by the command line.
//!
//! Every report renders two ways: a canonical JSON document carrying
//! `format_version`, and a human text form. Both are byte-deterministic for
//! identical inputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::io::{self, Delta, InstanceDoc, MatchingDoc, WeightsDoc};
use crate::model::{BlockingKind, BlockingPair, TraceMove, UNMATCHED_TOKEN};

pub(crate) const FORMAT_VERSION: u32 = 1;

#[derive(Serialize)]
struct Versioned<T: Serialize> {
    format_version: u32,
    #[serde(flatten)]
    body: T,
}

#[derive(Serialize)]
pub(crate) struct BlockingPairDoc {
    student: String,
    school: String,
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    displaced: Option<String>,
}

impl From<&BlockingPair> for BlockingPairDoc {
    fn from(p: &BlockingPair) -> Self {
        let (kind, displaced) = match &p.kind {
            BlockingKind::Underfilled => ("FREE_SEAT", None),
            BlockingKind::Displaces(s) => ("DISPLACES", Some(s.to_string())),
        };
        BlockingPairDoc {
            student: p.student.to_string(),
            school: p.school.to_string(),
            kind: kind.to_owned(),
            displaced,
        }
    }
}

impl BlockingPairDoc {
    fn line(&self) -> String {
        match &self.displaced {
            None => format!("{} wants {} (free seat)", self.student, self.school),
            Some(d) => format!("{} wants {} (displaces {})", self.student, self.school, d),
        }
    }
}

#[derive(Serialize)]
pub(crate) struct TraceMoveDoc {
    student: String,
    from: String,
    to: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    displaced: Option<String>,
}

impl From<&TraceMove> for TraceMoveDoc {
    fn from(t: &TraceMove) -> Self {
        let seat = |h: &Option<crate::model::SchoolId>| {
            h.as_ref()
                .map_or_else(|| UNMATCHED_TOKEN.to_owned(), ToString::to_string)
        };
        TraceMoveDoc {
            student: t.student.to_string(),
            from: seat(&t.from),
            to: seat(&t.to),
            displaced: t.displaced.as_ref().map(ToString::to_string),
        }
    }
}

impl TraceMoveDoc {
    fn line(&self) -> String {
        let mut s = format!("{}: {} -> {}", self.student, self.from, self.to);
        if let Some(d) = &self.displaced {
            let _ = write!(s, " (displacing {d})");
        }
        s
    }
}

/// One CLI invocation produces exactly one report.
#[derive(Serialize)]
#[serde(tag = "report")]
pub(crate) enum Report {
    #[serde(rename = "validate")]
    Validate { ok: bool, violations: Vec<String> },
    #[serde(rename = "solve")]
    Solve {
        side: String,
        matching: MatchingDoc,
    },
    #[serde(rename = "check")]
    Check {
        stable: bool,
        blocking_pairs: Vec<BlockingPairDoc>,
    },
    #[serde(rename = "realloc")]
    Realloc {
        setting: String,
        realloc_count: usize,
        moved: Vec<String>,
        matching: MatchingDoc,
        trace: Vec<TraceMoveDoc>,
    },
    #[serde(rename = "alternates")]
    Alternates {
        setting: String,
        side: String,
        realloc_count: usize,
        moved: Vec<String>,
        matching: MatchingDoc,
        trace: Vec<TraceMoveDoc>,
    },
    #[serde(rename = "oracle.min-realloc")]
    MinRealloc {
        realloc_count: usize,
        moved: Vec<String>,
        minima: Vec<MatchingDoc>,
    },
    #[serde(rename = "oracle.enumerate")]
    Enumerate { matchings: Vec<MatchingDoc> },
    #[serde(rename = "oracle.extension")]
    Extension {
        problem: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        budget: Option<usize>,
        leftover_matched: usize,
        arrivals_matched: usize,
        witness: MatchingDoc,
    },
    #[serde(rename = "oracle.realloc")]
    OracleRealloc {
        problem: String,
        leftover_matched: usize,
        realloc_count: usize,
        witness: MatchingDoc,
    },
    #[serde(rename = "oracle.weight")]
    Weight {
        problem: String,
        max_weight: String,
        capacities: BTreeMap<String, u32>,
        witness: MatchingDoc,
    },
    #[serde(rename = "gadget")]
    Gadget {
        problem: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        budget: Option<usize>,
        instance: InstanceDoc,
        #[serde(skip_serializing_if = "Option::is_none")]
        matching: Option<MatchingDoc>,
        #[serde(skip_serializing_if = "Option::is_none")]
        delta: Option<Delta>,
        #[serde(skip_serializing_if = "Option::is_none")]
        weights: Option<WeightsDoc>,
    },
    #[serde(rename = "generate")]
    Generate {
        seed: u64,
        instance: InstanceDoc,
        #[serde(skip_serializing_if = "Option::is_none")]
        delta: Option<Delta>,
    },
}

fn braced(ids: &[String]) -> String {
    format!("{{{}}}", ids.join(", "))
}

fn push_matching(out: &mut String, header: &str, m: &MatchingDoc) {
    out.push_str(header);
    out.push('\n');
    for line in m.lines() {
        let _ = writeln!(out, "  {line}");
    }
}

impl Report {
    pub(crate) fn json(&self) -> String {
        io::canonical(&Versioned {
            format_version: FORMAT_VERSION,
            body: self,
        })
    }

    pub(crate) fn human(&self) -> String {
        let mut out = String::new();
        match self {
            Report::Validate { ok, violations } => {
                if *ok {
                    out.push_str("instance ok\n");
                } else {
                    out.push_str("invalid instance:\n");
                    for v in violations {
                        let _ = writeln!(out, "  - {v}");
                    }
                }
            }
            Report::Solve { side, matching } => {
                let label = match side.as_str() {
                    "students" => "student",
                    _ => "school",
                };
                push_matching(
                    &mut out,
                    &format!("{label}-proposing deferred acceptance:"),
                    matching,
                );
            }
            Report::Check {
                stable,
                blocking_pairs,
            } => {
                if *stable {
                    out.push_str("stable, 0 blocking pairs\n");
                } else {
                    let _ = writeln!(
                        out,
                        "unstable, {} blocking pair{}:",
                        blocking_pairs.len(),
                        if blocking_pairs.len() == 1 { "" } else { "s" }
                    );
                    for p in blocking_pairs {
                        let _ = writeln!(out, "  {}", p.line());
                    }
                }
            }
            Report::Realloc {
                setting,
                realloc_count,
                moved,
                matching,
                trace,
            } => {
                let _ = writeln!(out, "setting: {setting}");
                let _ = writeln!(out, "re-allocation count: {realloc_count}");
                let _ = writeln!(out, "moved: {}", braced(moved));
                push_matching(&mut out, "matching:", matching);
                out.push_str("trace:\n");
                for t in trace {
                    let _ = writeln!(out, "  {}", t.line());
                }
            }
            Report::Alternates {
                setting,
                side,
                realloc_count,
                moved,
                matching,
                trace,
            } => {
                let _ = writeln!(out, "setting: {setting}");
                let _ = writeln!(out, "side: {side}");
                let _ = writeln!(out, "re-allocation count: {realloc_count}");
                let _ = writeln!(out, "moved: {}", braced(moved));
                push_matching(&mut out, "matching:", matching);
                out.push_str("trace:\n");
                for t in trace {
                    let _ = writeln!(out, "  {}", t.line());
                }
            }
            Report::MinRealloc {
                realloc_count,
                moved,
                minima,
            } => {
                let _ = writeln!(out, "minimum re-allocation count: {realloc_count}");
                let _ = writeln!(out, "moved: {}", braced(moved));
                let _ = writeln!(out, "minima: {}", minima.len());
                for (i, m) in minima.iter().enumerate() {
                    push_matching(&mut out, &format!("minimum {}:", i + 1), m);
                }
            }
            Report::Enumerate { matchings } => {
                let _ = writeln!(out, "stable matchings: {}", matchings.len());
                for (i, m) in matchings.iter().enumerate() {
                    push_matching(&mut out, &format!("matching {}:", i + 1), m);
                }
            }
            Report::Extension {
                problem,
                budget,
                leftover_matched,
                arrivals_matched,
                witness,
            } => {
                let _ = writeln!(out, "problem: {problem}");
                if let Some(k) = budget {
                    let _ = writeln!(out, "budget: {k}");
                }
                let _ = writeln!(out, "leftover students matched: {leftover_matched}");
                let _ = writeln!(out, "arriving students matched: {arrivals_matched}");
                push_matching(&mut out, "witness:", witness);
            }
            Report::OracleRealloc {
                problem,
                leftover_matched,
                realloc_count,
                witness,
            } => {
                let _ = writeln!(out, "problem: {problem}");
                let _ = writeln!(out, "leftover students matched: {leftover_matched}");
                let _ = writeln!(out, "re-allocation count: {realloc_count}");
                push_matching(&mut out, "witness:", witness);
            }
            Report::Weight {
                problem,
                max_weight,
                capacities,
                witness,
            } => {
                let _ = writeln!(out, "problem: {problem}");
                let _ = writeln!(out, "maximum weight: {max_weight}");
                out.push_str("capacities:\n");
                for (h, q) in capacities {
                    let _ = writeln!(out, "  {h}: {q}");
                }
                push_matching(&mut out, "witness:", witness);
            }
            Report::Gadget {
                problem,
                budget,
                instance,
                matching,
                delta,
                weights,
            } => {
                let _ = writeln!(out, "problem: {problem}");
                if let Some(k) = budget {
                    let _ = writeln!(out, "budget: {k}");
                }
                let _ = writeln!(out, "schools: {}", instance.school_count());
                let _ = writeln!(out, "students: {}", instance.student_count());
                let mut docs = vec!["instance"];
                if matching.is_some() {
                    docs.push("matching");
                }
                if delta.is_some() {
                    docs.push("delta");
                }
                if weights.is_some() {
                    docs.push("weights");
                }
                let _ = writeln!(out, "documents: {}", docs.join(", "));
                out.push_str("(--format json or --out-dir captures them)\n");
            }
            Report::Generate {
                seed,
                instance,
                delta,
            } => {
                let _ = writeln!(out, "seed: {seed}");
                let _ = writeln!(out, "schools: {}", instance.school_count());
                let _ = writeln!(out, "students: {}", instance.student_count());
                let docs = if delta.is_some() {
                    "instance, delta"
                } else {
                    "instance"
                };
                let _ = writeln!(out, "documents: {docs}");
                out.push_str("(--format json or --out-dir captures them)\n");
            }
        }
        out
    }
}
