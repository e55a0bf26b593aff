//! Command-line driver.
//!
//! Every subcommand reads canonical JSON documents, runs one library call,
//! and prints one report (`--format human` or `json`). Any matching a
//! mechanism or oracle produces is re-certified stable here before it is
//! printed; a failure of that check is a bug, not bad input, and gets its
//! own exit code.
//!
//! Exit codes: 0 success, 1 invalid input or an unstable `check`, 2
//! infeasible problem or oracle bound exceeded, 3 internal certification
//! failure, 64 usage error.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::da;
use crate::error::{CertificationFailure, Error, Result};
use crate::gadgets;
use crate::generate::{self, DeltaShape, GeneratorConfig};
use crate::io::{self, Delta};
use crate::model::{find_blocking_pairs, validate_matching, Instance, Matching, SchoolId};
use crate::oracle::{self, OracleBounds};
use crate::realloc::{self, SchoolDelta, StudentDelta};
use crate::report::Report;

#[derive(Parser)]
#[command(name = "reseat", version, about = "Stable school seating across enrollment rounds")]
struct Cli {
    /// Report rendering.
    #[arg(long, value_enum, default_value_t = Format::Human, global = true)]
    format: Format,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Human,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Students,
    Schools,
}

impl SideArg {
    fn side(self) -> da::Side {
        match self {
            SideArg::Students => da::Side::Students,
            SideArg::Schools => da::Side::Schools,
        }
    }

    fn name(self) -> &'static str {
        match self {
            SideArg::Students => "students",
            SideArg::Schools => "schools",
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate an instance file.
    Validate { instance: PathBuf },
    /// Run deferred acceptance and print the matching.
    Solve {
        instance: PathBuf,
        /// Proposing side.
        #[arg(long, value_enum)]
        side: SideArg,
    },
    /// Report whether a matching is stable, listing blocking pairs.
    Check {
        instance: PathBuf,
        matching: PathBuf,
    },
    /// Restore stability after a market change, moving as few seated
    /// students as possible.
    #[command(subcommand)]
    Realloc(SettingCmd),
    /// Rebuild a minimum re-allocation by restricted deferred acceptance
    /// from a chosen proposing side.
    #[command(subcommand)]
    Alternates(AlternatesCmd),
    /// Exhaustive-search oracles for small markets.
    #[command(subcommand)]
    Oracle(OracleCmd),
    /// Build hard market instances from a set-cover instance.
    #[command(subcommand)]
    Gadget(GadgetCmd),
    /// Generate a seeded pseudo-random instance, optionally with a delta.
    Generate(GenerateArgs),
}

#[derive(Subcommand)]
enum SettingCmd {
    /// The school side changed: new schools, more seats, withdrawn students.
    Schools {
        instance: PathBuf,
        delta: PathBuf,
        matching: PathBuf,
    },
    /// The student side changed: new students, fewer seats, closed schools.
    Students {
        instance: PathBuf,
        delta: PathBuf,
        matching: PathBuf,
    },
}

#[derive(Subcommand)]
enum AlternatesCmd {
    /// The school side changed: new schools, more seats, withdrawn students.
    Schools {
        instance: PathBuf,
        delta: PathBuf,
        matching: PathBuf,
        /// Proposing side of the restricted run.
        #[arg(long, value_enum)]
        side: SideArg,
    },
    /// The student side changed: new students, fewer seats, closed schools.
    Students {
        instance: PathBuf,
        delta: PathBuf,
        matching: PathBuf,
        /// Proposing side of the restricted run.
        #[arg(long, value_enum)]
        side: SideArg,
    },
}

#[derive(Subcommand)]
enum OracleCmd {
    /// Minimum re-allocation over all stable matchings, with every minimum.
    MinRealloc {
        instance: PathBuf,
        delta: PathBuf,
        matching: PathBuf,
    },
    /// Every stable matching of an instance.
    Enumerate { instance: PathBuf },
    /// Seat the most leftover students, then the fewest arrivals.
    P1 {
        instance: PathBuf,
        delta: PathBuf,
        matching: PathBuf,
    },
    /// Seat the most arrivals, then the fewest leftover students.
    P2 {
        instance: PathBuf,
        delta: PathBuf,
        matching: PathBuf,
    },
    /// Seat the most leftover students admitting at most --budget arrivals.
    P3 {
        instance: PathBuf,
        delta: PathBuf,
        matching: PathBuf,
        #[arg(long)]
        budget: usize,
    },
    /// Seat the most leftover students, then move the fewest seated ones,
    /// seats growing to fit.
    P4 {
        instance: PathBuf,
        delta: PathBuf,
        matching: PathBuf,
    },
    /// Choose capacities maximizing the total weight of a stable matching.
    P5 {
        instance: PathBuf,
        weights: PathBuf,
    },
}

#[derive(Subcommand)]
enum GadgetCmd {
    P1 {
        cover: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    P2 {
        cover: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    P3 {
        cover: PathBuf,
        /// Admission budget to pair with the market.
        #[arg(long)]
        budget: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    P4 {
        cover: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    P5 {
        cover: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Args)]
struct OutArgs {
    /// Also write the documents as canonical files into this directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// File name stem for --out-dir.
    #[arg(long, default_value = "out")]
    stem: String,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    students: usize,
    #[arg(long, default_value_t = 3)]
    schools: usize,
    #[arg(long, default_value_t = 1)]
    cap_min: u32,
    #[arg(long, default_value_t = 2)]
    cap_max: u32,
    #[arg(long, default_value_t = 0)]
    list_min: usize,
    #[arg(long, default_value_t = 3)]
    list_max: usize,
    /// Also generate a market change on this side.
    #[arg(long, value_enum)]
    delta: Option<SideArg>,
    /// New participants in the delta.
    #[arg(long, default_value_t = 1)]
    new: usize,
    /// Capacity changes in the delta.
    #[arg(long, default_value_t = 1)]
    resized: usize,
    /// Participants removed by the delta.
    #[arg(long, default_value_t = 0)]
    removed: usize,
    #[command(flatten)]
    out: OutArgs,
}

/// Parses `argv` and runs one subcommand, writing the report to `out` and
/// diagnostics to `err`. Returns the process exit code.
pub fn run<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{rendered}");
                    0
                }
                _ => {
                    let _ = write!(err, "{rendered}");
                    64
                }
            };
        }
    };
    match dispatch(&cli.cmd) {
        Ok((report, exit)) => {
            let text = match cli.format {
                Format::Human => report.human(),
                Format::Json => report.json(),
            };
            let _ = write!(out, "{text}");
            exit
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            match e {
                Error::Infeasible(_) | Error::BoundExceeded { .. } => 2,
                Error::Certification(_) => 3,
                _ => 1,
            }
        }
    }
}

fn load(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn load_instance(path: &Path) -> Result<Instance> {
    io::parse_instance(&load(path)?)
}

fn load_matching(path: &Path) -> Result<Matching> {
    io::parse_matching(&load(path)?)
}

fn load_delta(path: &Path) -> Result<Delta> {
    io::parse_delta(&load(path)?)
}

fn school_delta(delta: Delta) -> Result<SchoolDelta> {
    match delta {
        Delta::Schools(d) => Ok(d),
        Delta::Students(_) => Err(Error::BadConfig(
            "delta file holds a STUDENT_DELTA; this command needs a SCHOOL_DELTA".into(),
        )),
    }
}

fn student_delta(delta: Delta) -> Result<StudentDelta> {
    match delta {
        Delta::Students(d) => Ok(d),
        Delta::Schools(_) => Err(Error::BadConfig(
            "delta file holds a SCHOOL_DELTA; this command needs a STUDENT_DELTA".into(),
        )),
    }
}

// outputs are re-certified against the market they claim to solve; a
// violation here is an internal bug, so it maps to exit 3
fn certify(inst: &Instance, m: &Matching) -> Result<()> {
    if let Err(e) = validate_matching(inst, m) {
        return Err(Error::Certification(CertificationFailure::Invariant(
            e.to_string(),
        )));
    }
    if let Some(p) = find_blocking_pairs(inst, m)?.into_iter().next() {
        return Err(Error::Certification(CertificationFailure::Blocking(p)));
    }
    Ok(())
}

// the extension problems grow a school's seats to fit its admits; the final
// capacity the witness is judged against is max(original, occupancy)
fn grow_to_fit(inst: &Instance, m: &Matching) -> Instance {
    let mut out = inst.clone();
    for h in &mut out.schools {
        let occ = m.iter().filter(|(_, seat)| *seat == Some(&h.id)).count() as u32;
        h.capacity = h.capacity.max(occ);
    }
    out
}

fn with_capacities(inst: &Instance, caps: &BTreeMap<SchoolId, u32>) -> Instance {
    let mut out = inst.clone();
    for h in &mut out.schools {
        h.capacity = caps.get(&h.id).copied().unwrap_or(0);
    }
    out
}

fn write_doc(dir: &Path, stem: &str, kind: &str, body: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(format!("{stem}.{kind}.json"));
    std::fs::write(&path, body).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn moved_list(moved: &std::collections::BTreeSet<crate::model::StudentId>) -> Vec<String> {
    moved.iter().map(ToString::to_string).collect()
}

fn dispatch(cmd: &Cmd) -> Result<(Report, i32)> {
    match cmd {
        Cmd::Validate { instance } => {
            let text = load(instance)?;
            match io::parse_instance(&text) {
                Ok(_) => Ok((
                    Report::Validate {
                        ok: true,
                        violations: vec![],
                    },
                    0,
                )),
                Err(Error::InvalidInstance(report)) => Ok((
                    Report::Validate {
                        ok: false,
                        violations: report.violations.iter().map(ToString::to_string).collect(),
                    },
                    1,
                )),
                Err(e) => Err(e),
            }
        }
        Cmd::Solve { instance, side } => {
            let inst = load_instance(instance)?;
            let m = match side.side() {
                da::Side::Students => da::student_proposing_da(&inst)?,
                da::Side::Schools => da::school_proposing_da(&inst)?,
            };
            certify(&inst, &m)?;
            Ok((
                Report::Solve {
                    side: side.name().to_owned(),
                    matching: io::matching_doc(&m),
                },
                0,
            ))
        }
        Cmd::Check { instance, matching } => {
            let inst = load_instance(instance)?;
            let m = load_matching(matching)?;
            validate_matching(&inst, &m)?;
            let pairs = find_blocking_pairs(&inst, &m)?;
            let stable = pairs.is_empty();
            Ok((
                Report::Check {
                    stable,
                    blocking_pairs: pairs.iter().map(Into::into).collect(),
                },
                if stable { 0 } else { 1 },
            ))
        }
        Cmd::Realloc(setting) => {
            let (result, inst2, name) = match setting {
                SettingCmd::Schools {
                    instance,
                    delta,
                    matching,
                } => {
                    let inst = load_instance(instance)?;
                    let d = school_delta(load_delta(delta)?)?;
                    let m = load_matching(matching)?;
                    let result = realloc::min_realloc_schools(&inst, &m, &d)?;
                    (result, realloc::apply_school_delta(&inst, &d)?, "schools")
                }
                SettingCmd::Students {
                    instance,
                    delta,
                    matching,
                } => {
                    let inst = load_instance(instance)?;
                    let d = student_delta(load_delta(delta)?)?;
                    let m = load_matching(matching)?;
                    let result = realloc::min_realloc_students(&inst, &m, &d)?;
                    (result, realloc::apply_student_delta(&inst, &d)?, "students")
                }
            };
            certify(&inst2, &result.matching)?;
            Ok((
                Report::Realloc {
                    setting: name.to_owned(),
                    realloc_count: result.realloc_count,
                    moved: moved_list(&result.moved),
                    matching: io::matching_doc(&result.matching),
                    trace: result.trace.iter().map(Into::into).collect(),
                },
                0,
            ))
        }
        Cmd::Alternates(setting) => {
            let (alt, inst2, name, side) = match setting {
                AlternatesCmd::Schools {
                    instance,
                    delta,
                    matching,
                    side,
                } => {
                    let inst = load_instance(instance)?;
                    let d = school_delta(load_delta(delta)?)?;
                    let m = load_matching(matching)?;
                    let first = realloc::min_realloc_schools(&inst, &m, &d)?;
                    let inst2 = realloc::apply_school_delta(&inst, &d)?;
                    let alt = realloc::alternate_min_realloc_schools(
                        &inst2,
                        &m,
                        &first.matching,
                        &first.moved,
                        side.side(),
                    )?;
                    (alt, inst2, "schools", *side)
                }
                AlternatesCmd::Students {
                    instance,
                    delta,
                    matching,
                    side,
                } => {
                    let inst = load_instance(instance)?;
                    let d = student_delta(load_delta(delta)?)?;
                    let m = load_matching(matching)?;
                    let first = realloc::min_realloc_students(&inst, &m, &d)?;
                    let inst2 = realloc::apply_student_delta(&inst, &d)?;
                    let alt = realloc::alternate_min_realloc_students(
                        &inst2,
                        &m,
                        &first.matching,
                        &first.moved,
                        side.side(),
                    )?;
                    (alt, inst2, "students", *side)
                }
            };
            certify(&inst2, &alt.matching)?;
            Ok((
                Report::Alternates {
                    setting: name.to_owned(),
                    side: side.name().to_owned(),
                    realloc_count: alt.realloc_count,
                    moved: moved_list(&alt.moved),
                    matching: io::matching_doc(&alt.matching),
                    trace: alt.trace.iter().map(Into::into).collect(),
                },
                0,
            ))
        }
        Cmd::Oracle(problem) => oracle_cmd(problem),
        Cmd::Gadget(problem) => gadget_cmd(problem),
        Cmd::Generate(args) => generate_cmd(args),
    }
}

fn apply_either(inst: &Instance, delta: Delta) -> Result<Instance> {
    match delta {
        Delta::Schools(d) => realloc::apply_school_delta(inst, &d),
        Delta::Students(d) => realloc::apply_student_delta(inst, &d),
    }
}

fn oracle_cmd(cmd: &OracleCmd) -> Result<(Report, i32)> {
    let bounds = OracleBounds::from_env()?;
    match cmd {
        OracleCmd::MinRealloc {
            instance,
            delta,
            matching,
        } => {
            let inst = load_instance(instance)?;
            let inst2 = apply_either(&inst, load_delta(delta)?)?;
            let m = load_matching(matching)?;
            let solution = oracle::brute_min_realloc(&inst2, &m, &bounds)?;
            for minimum in &solution.minima {
                certify(&inst2, minimum)?;
            }
            Ok((
                Report::MinRealloc {
                    realloc_count: solution.count,
                    moved: moved_list(&solution.moved),
                    minima: solution.minima.iter().map(io::matching_doc).collect(),
                },
                0,
            ))
        }
        OracleCmd::Enumerate { instance } => {
            let inst = load_instance(instance)?;
            let all = oracle::enumerate_stable_matchings(&inst, &bounds)?;
            for m in &all {
                certify(&inst, m)?;
            }
            Ok((
                Report::Enumerate {
                    matchings: all.iter().map(io::matching_doc).collect(),
                },
                0,
            ))
        }
        OracleCmd::P1 {
            instance,
            delta,
            matching,
        }
        | OracleCmd::P2 {
            instance,
            delta,
            matching,
        } => {
            let problem = if matches!(cmd, OracleCmd::P1 { .. }) {
                "P1"
            } else {
                "P2"
            };
            let inst = load_instance(instance)?;
            let d = student_delta(load_delta(delta)?)?;
            let inst2 = realloc::apply_student_delta(&inst, &d)?;
            let m = load_matching(matching)?;
            let solution = if problem == "P1" {
                oracle::solve_p1(&inst2, &m, &bounds)?
            } else {
                oracle::solve_p2(&inst2, &m, &bounds)?
            };
            certify(&grow_to_fit(&inst2, &solution.witness), &solution.witness)?;
            Ok((
                Report::Extension {
                    problem: problem.to_owned(),
                    budget: None,
                    leftover_matched: solution.l_matched,
                    arrivals_matched: solution.n_matched,
                    witness: io::matching_doc(&solution.witness),
                },
                0,
            ))
        }
        OracleCmd::P3 {
            instance,
            delta,
            matching,
            budget,
        } => {
            let inst = load_instance(instance)?;
            let d = student_delta(load_delta(delta)?)?;
            let inst2 = realloc::apply_student_delta(&inst, &d)?;
            let m = load_matching(matching)?;
            let solution = oracle::solve_p3(&inst2, &m, *budget, &bounds)?;
            certify(&grow_to_fit(&inst2, &solution.witness), &solution.witness)?;
            Ok((
                Report::Extension {
                    problem: "P3".to_owned(),
                    budget: Some(*budget),
                    leftover_matched: solution.l_matched,
                    arrivals_matched: solution.n_matched,
                    witness: io::matching_doc(&solution.witness),
                },
                0,
            ))
        }
        OracleCmd::P4 {
            instance,
            delta,
            matching,
        } => {
            let inst = load_instance(instance)?;
            let d = school_delta(load_delta(delta)?)?;
            let inst2 = realloc::apply_school_delta(&inst, &d)?;
            let m = load_matching(matching)?;
            let solution = oracle::solve_p4(&inst2, &m, &bounds)?;
            certify(&grow_to_fit(&inst2, &solution.witness), &solution.witness)?;
            Ok((
                Report::OracleRealloc {
                    problem: "P4".to_owned(),
                    leftover_matched: solution.l_matched,
                    realloc_count: solution.realloc_count,
                    witness: io::matching_doc(&solution.witness),
                },
                0,
            ))
        }
        OracleCmd::P5 { instance, weights } => {
            let inst = load_instance(instance)?;
            let w = io::parse_weights(&load(weights)?)?;
            let solution = oracle::solve_p5(&inst, &w, &bounds)?;
            certify(&with_capacities(&inst, &solution.capacities), &solution.witness)?;
            Ok((
                Report::Weight {
                    problem: "P5".to_owned(),
                    max_weight: solution.max_weight.to_string(),
                    capacities: solution
                        .capacities
                        .iter()
                        .map(|(h, q)| (h.to_string(), *q))
                        .collect(),
                    witness: io::matching_doc(&solution.witness),
                },
                0,
            ))
        }
    }
}

fn gadget_cmd(cmd: &GadgetCmd) -> Result<(Report, i32)> {
    match cmd {
        GadgetCmd::P1 { cover, out } | GadgetCmd::P2 { cover, out } => {
            let problem = if matches!(cmd, GadgetCmd::P1 { .. }) {
                "P1"
            } else {
                "P2"
            };
            let sc = io::parse_cover(&load(cover)?)?;
            let g = if problem == "P1" {
                gadgets::gadget_p1(&sc)?
            } else {
                gadgets::gadget_p2(&sc)?
            };
            extension_gadget_report(problem, None, &g, out)
        }
        GadgetCmd::P3 { cover, budget, out } => {
            let sc = io::parse_cover(&load(cover)?)?;
            let (g, k) = gadgets::gadget_p3(&sc, *budget)?;
            extension_gadget_report("P3", Some(k), &g, out)
        }
        GadgetCmd::P4 { cover, out } => {
            let sc = io::parse_cover(&load(cover)?)?;
            let g = gadgets::gadget_p4(&sc)?;
            let delta = Delta::Schools(g.delta.clone());
            if let Some(dir) = &out.out_dir {
                write_doc(dir, &out.stem, "instance", &io::serialize_instance(&g.round1))?;
                write_doc(dir, &out.stem, "delta", &io::serialize_delta(&delta))?;
                write_doc(dir, &out.stem, "matching", &io::serialize_matching(&g.matching))?;
            }
            Ok((
                Report::Gadget {
                    problem: "P4".to_owned(),
                    budget: None,
                    instance: io::instance_doc(&g.round1),
                    matching: Some(io::matching_doc(&g.matching)),
                    delta: Some(io::delta_doc(&delta)),
                    weights: None,
                },
                0,
            ))
        }
        GadgetCmd::P5 { cover, out } => {
            let sc = io::parse_cover(&load(cover)?)?;
            let g = gadgets::gadget_p5(&sc)?;
            if let Some(dir) = &out.out_dir {
                write_doc(dir, &out.stem, "instance", &io::serialize_instance(&g.instance))?;
                write_doc(dir, &out.stem, "weights", &io::serialize_weights(&g.weights))?;
            }
            Ok((
                Report::Gadget {
                    problem: "P5".to_owned(),
                    budget: None,
                    instance: io::instance_doc(&g.instance),
                    matching: None,
                    delta: None,
                    weights: Some(io::weights_doc(&g.weights)),
                },
                0,
            ))
        }
    }
}

fn extension_gadget_report(
    problem: &str,
    budget: Option<usize>,
    g: &gadgets::ExtensionGadget,
    out: &OutArgs,
) -> Result<(Report, i32)> {
    let delta = Delta::Students(g.delta.clone());
    if let Some(dir) = &out.out_dir {
        write_doc(dir, &out.stem, "instance", &io::serialize_instance(&g.round1))?;
        write_doc(dir, &out.stem, "delta", &io::serialize_delta(&delta))?;
        write_doc(dir, &out.stem, "matching", &io::serialize_matching(&g.matching))?;
    }
    Ok((
        Report::Gadget {
            problem: problem.to_owned(),
            budget,
            instance: io::instance_doc(&g.round1),
            matching: Some(io::matching_doc(&g.matching)),
            delta: Some(io::delta_doc(&delta)),
            weights: None,
        },
        0,
    ))
}

fn generate_cmd(args: &GenerateArgs) -> Result<(Report, i32)> {
    let delta_shape = args.delta.map(|side| match side {
        SideArg::Schools => DeltaShape::Schools {
            new_schools: args.new,
            capacity_increases: args.resized,
            removed_students: args.removed,
        },
        SideArg::Students => DeltaShape::Students {
            new_students: args.new,
            removed_schools: args.removed,
            capacity_decreases: args.resized,
        },
    });
    let cfg = GeneratorConfig {
        seed: args.seed,
        n_students: args.students,
        n_schools: args.schools,
        cap_min: args.cap_min,
        cap_max: args.cap_max,
        list_min: args.list_min,
        list_max: args.list_max,
        delta: delta_shape,
    };
    let (inst, delta) = generate::generate(&cfg)?;
    if let Some(dir) = &args.out.out_dir {
        write_doc(dir, &args.out.stem, "instance", &io::serialize_instance(&inst))?;
        if let Some(d) = &delta {
            write_doc(dir, &args.out.stem, "delta", &io::serialize_delta(d))?;
        }
    }
    Ok((
        Report::Generate {
            seed: args.seed,
            instance: io::instance_doc(&inst),
            delta: delta.as_ref().map(io::delta_doc),
        },
        0,
    ))
}
