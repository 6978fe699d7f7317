//! Finite-trace LTL evaluation for the globally/next fragment, plus the
//! builtin property suite checked against every simulation trace.
//!
//! Semantics: `G p` holds iff `p` holds at every index. `X p` evaluated at
//! the final index is vacuously true and counted in the report, so truncation
//! artifacts are visible instead of silent. Evaluation is eager (both sides
//! of every connective), which makes the vacuity count independent of
//! short-circuit order. Builtin formulas push negation inside `X` so a
//! truncated trace can never fail an obligation that ends beyond it.
//!
//! Atoms are named; parametric atoms carry a task index suffix
//! (`pc_in_task_3`, `ar_bit_2`). The per-task expansions below always range
//! over the full 16-bit availability word: atoms for tasks a layout does not
//! declare are constantly false, which leaves their conjuncts vacuous.

use std::fmt;

use thiserror::Error;

use crate::trace::{TraceMeta, TraceRecord};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Formula {
    Atom(String),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Next(Box<Formula>),
    Globally(Box<Formula>),
}

pub fn atom(name: impl Into<String>) -> Formula {
    Formula::Atom(name.into())
}

pub fn not(f: Formula) -> Formula {
    Formula::Not(Box::new(f))
}

pub fn and(a: Formula, b: Formula) -> Formula {
    Formula::And(Box::new(a), Box::new(b))
}

pub fn or(a: Formula, b: Formula) -> Formula {
    Formula::Or(Box::new(a), Box::new(b))
}

pub fn implies(a: Formula, b: Formula) -> Formula {
    Formula::Implies(Box::new(a), Box::new(b))
}

pub fn next(f: Formula) -> Formula {
    Formula::Next(Box::new(f))
}

pub fn globally(f: Formula) -> Formula {
    Formula::Globally(Box::new(f))
}

/// Conjunction of an iterator of formulas; empty folds to `true`-ish atom.
pub fn all_of(mut items: impl Iterator<Item = Formula>) -> Formula {
    let first = items.next().expect("conjunction over empty iterator");
    items.fold(first, and)
}

pub fn any_of(mut items: impl Iterator<Item = Formula>) -> Formula {
    let first = items.next().expect("disjunction over empty iterator");
    items.fold(first, or)
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Atom(a) => write!(f, "{a}"),
            Formula::Not(p) => write!(f, "!{p}"),
            Formula::And(a, b) => write!(f, "({a} & {b})"),
            Formula::Or(a, b) => write!(f, "({a} | {b})"),
            Formula::Implies(a, b) => write!(f, "({a} -> {b})"),
            Formula::Next(p) => write!(f, "X{p}"),
            Formula::Globally(p) => write!(f, "G{p}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckError {
    #[error("unknown atom `{0}`")]
    UnknownAtom(String),
    #[error("cannot check an empty trace")]
    EmptyTrace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
}

/// Result of checking one formula over one trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckReport {
    pub id: String,
    pub verdict: Verdict,
    pub first_fail_index: Option<usize>,
    pub vacuous_tail_count: u32,
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.verdict {
            Verdict::Pass => write!(f, "{} pass - {}", self.id, self.vacuous_tail_count),
            Verdict::Fail => write!(
                f,
                "{} fail {} {}",
                self.id,
                self.first_fail_index.unwrap_or(0),
                self.vacuous_tail_count
            ),
        }
    }
}

/// Atom with its name resolved; the evaluator works on these so a check over
/// a long trace never re-parses atom names.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Atom {
    WEn,
    REn,
    Irq,
    Trigger,
    ViolationIm,
    ViolationPair,
    PcInSw,
    PcInTr,
    PcEqSwExit,
    DaddrInDpair,
    DaddrInPmem,
    ArEnFull,
    LatchedValid,
    LatchedRevoked,
    PcInTask(u8),
    TaskIdEq(u8),
    LatchedEq(u8),
    ArBit(u8),
}

fn resolve_atom(name: &str) -> Result<Atom, CheckError> {
    let task_suffix = |prefix: &str| -> Option<u8> {
        name.strip_prefix(prefix).and_then(|s| s.parse().ok())
    };
    Ok(match name {
        "w_en" => Atom::WEn,
        "r_en" => Atom::REn,
        "irq" => Atom::Irq,
        "trigger" => Atom::Trigger,
        "violation_im" => Atom::ViolationIm,
        "violation_pair" => Atom::ViolationPair,
        "pc_in_sw" => Atom::PcInSw,
        "pc_in_tr" => Atom::PcInTr,
        "pc_eq_sw_exit" => Atom::PcEqSwExit,
        "daddr_in_dpair" => Atom::DaddrInDpair,
        "daddr_in_pmem" => Atom::DaddrInPmem,
        "ar_en_full" => Atom::ArEnFull,
        "latched_valid" => Atom::LatchedValid,
        "latched_revoked" => Atom::LatchedRevoked,
        _ => {
            if let Some(i) = task_suffix("pc_in_task_") {
                Atom::PcInTask(i)
            } else if let Some(i) = task_suffix("task_id_eq_") {
                Atom::TaskIdEq(i)
            } else if let Some(i) = task_suffix("latched_eq_") {
                Atom::LatchedEq(i)
            } else if let Some(i) = task_suffix("ar_bit_") {
                Atom::ArBit(i)
            } else {
                return Err(CheckError::UnknownAtom(name.to_string()));
            }
        }
    })
}

fn eval_atom(atom: Atom, rec: &TraceRecord, meta: &TraceMeta) -> bool {
    match atom {
        Atom::WEn => rec.w_en,
        Atom::REn => rec.r_en,
        Atom::Irq => rec.irq,
        Atom::Trigger => rec.trigger,
        Atom::ViolationIm => rec.violation_im,
        Atom::ViolationPair => rec.violation_pair,
        Atom::PcInSw => meta.sw.contains(rec.pc),
        Atom::PcInTr => meta.tr.contains(rec.pc),
        Atom::PcEqSwExit => rec.pc == meta.sw_exit,
        Atom::DaddrInDpair => meta.d_pair.contains(rec.d_addr),
        Atom::DaddrInPmem => meta.pmem.contains(rec.d_addr),
        Atom::ArEnFull => rec.ar_en == meta.ar_all_set(),
        Atom::LatchedValid => rec.latched_task.is_some(),
        Atom::LatchedRevoked => match rec.latched_task {
            Some(i) => rec.ar_en & (1u16 << i) == 0,
            None => false,
        },
        Atom::PcInTask(i) => meta
            .bounds
            .get(usize::from(i))
            .map(|(lo, hi)| *lo <= rec.pc && rec.pc <= *hi)
            .unwrap_or(false),
        Atom::TaskIdEq(i) => rec.task_id == Some(i),
        Atom::LatchedEq(i) => rec.latched_task == Some(i),
        Atom::ArBit(i) => i < 16 && rec.ar_en & (1u16 << i) != 0,
    }
}

/// Formula with resolved atoms, the form the evaluator runs on.
#[derive(Debug, Clone)]
enum Resolved {
    Atom(Atom),
    Not(Box<Resolved>),
    And(Box<Resolved>, Box<Resolved>),
    Or(Box<Resolved>, Box<Resolved>),
    Implies(Box<Resolved>, Box<Resolved>),
    Next(Box<Resolved>),
    Globally(Box<Resolved>),
}

fn resolve(f: &Formula) -> Result<Resolved, CheckError> {
    Ok(match f {
        Formula::Atom(a) => Resolved::Atom(resolve_atom(a)?),
        Formula::Not(p) => Resolved::Not(Box::new(resolve(p)?)),
        Formula::And(a, b) => Resolved::And(Box::new(resolve(a)?), Box::new(resolve(b)?)),
        Formula::Or(a, b) => Resolved::Or(Box::new(resolve(a)?), Box::new(resolve(b)?)),
        Formula::Implies(a, b) => Resolved::Implies(Box::new(resolve(a)?), Box::new(resolve(b)?)),
        Formula::Next(p) => Resolved::Next(Box::new(resolve(p)?)),
        Formula::Globally(p) => Resolved::Globally(Box::new(resolve(p)?)),
    })
}

fn eval_resolved(
    f: &Resolved,
    recs: &[TraceRecord],
    i: usize,
    meta: &TraceMeta,
    vacuous: &mut u32,
) -> bool {
    match f {
        Resolved::Atom(a) => eval_atom(*a, &recs[i], meta),
        Resolved::Not(p) => !eval_resolved(p, recs, i, meta, vacuous),
        Resolved::And(a, b) => {
            let x = eval_resolved(a, recs, i, meta, vacuous);
            let y = eval_resolved(b, recs, i, meta, vacuous);
            x && y
        }
        Resolved::Or(a, b) => {
            let x = eval_resolved(a, recs, i, meta, vacuous);
            let y = eval_resolved(b, recs, i, meta, vacuous);
            x || y
        }
        Resolved::Implies(a, b) => {
            let x = eval_resolved(a, recs, i, meta, vacuous);
            let y = eval_resolved(b, recs, i, meta, vacuous);
            !x || y
        }
        Resolved::Next(p) => {
            if i + 1 < recs.len() {
                eval_resolved(p, recs, i + 1, meta, vacuous)
            } else {
                *vacuous += 1;
                true
            }
        }
        Resolved::Globally(p) => {
            let mut ok = true;
            for j in i..recs.len() {
                ok &= eval_resolved(p, recs, j, meta, vacuous);
            }
            ok
        }
    }
}

#[cfg(test)]
fn eval(
    f: &Formula,
    recs: &[TraceRecord],
    i: usize,
    meta: &TraceMeta,
    vacuous: &mut u32,
) -> Result<bool, CheckError> {
    Ok(eval_resolved(&resolve(f)?, recs, i, meta, vacuous))
}

/// Checks one formula over a trace. A top-level `G` reports the smallest
/// violating index; any other root is evaluated at index 0.
pub fn check(
    id: &str,
    formula: &Formula,
    records: &[TraceRecord],
    meta: &TraceMeta,
) -> Result<CheckReport, CheckError> {
    if records.is_empty() {
        return Err(CheckError::EmptyTrace);
    }
    let resolved = resolve(formula)?;
    let mut vacuous = 0u32;
    let (verdict, first_fail_index) = match &resolved {
        Resolved::Globally(body) => {
            let mut fail = None;
            for i in 0..records.len() {
                if !eval_resolved(body, records, i, meta, &mut vacuous) && fail.is_none() {
                    fail = Some(i);
                }
            }
            (if fail.is_none() { Verdict::Pass } else { Verdict::Fail }, fail)
        }
        other => {
            if eval_resolved(other, records, 0, meta, &mut vacuous) {
                (Verdict::Pass, None)
            } else {
                (Verdict::Fail, Some(0))
            }
        }
    };
    Ok(CheckReport {
        id: id.to_string(),
        verdict,
        first_fail_index,
        vacuous_tail_count: vacuous,
    })
}

/// Identifiers of the builtin properties, as accepted by `check --props`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PropId {
    Eq1,
    Eq2,
    Eq3,
    Eq4,
    Eq5,
    Eq6,
    Eq7,
    Eq8,
    Eq9,
    Def1a,
    Def1b,
    Def2,
}

pub const ALL_PROPS: [PropId; 12] = [
    PropId::Eq1,
    PropId::Eq2,
    PropId::Eq3,
    PropId::Eq4,
    PropId::Eq5,
    PropId::Eq6,
    PropId::Eq7,
    PropId::Eq8,
    PropId::Eq9,
    PropId::Def1a,
    PropId::Def1b,
    PropId::Def2,
];

impl PropId {
    pub fn name(&self) -> &'static str {
        match self {
            PropId::Eq1 => "eq1",
            PropId::Eq2 => "eq2",
            PropId::Eq3 => "eq3",
            PropId::Eq4 => "eq4",
            PropId::Eq5 => "eq5",
            PropId::Eq6 => "eq6",
            PropId::Eq7 => "eq7",
            PropId::Eq8 => "eq8",
            PropId::Eq9 => "eq9",
            PropId::Def1a => "def1a",
            PropId::Def1b => "def1b",
            PropId::Def2 => "def2",
        }
    }

    pub fn from_name(s: &str) -> Option<PropId> {
        ALL_PROPS.iter().copied().find(|p| p.name() == s)
    }

    pub fn title(&self) -> &'static str {
        match self {
            PropId::Eq1 => "task tracking matches the bounds table",
            PropId::Eq2 => "protected-data access outside trusted software flags a violation",
            PropId::Eq3 => "program-memory write outside trusted software flags a violation",
            PropId::Eq4 => "access violation raises the trigger next cycle",
            PropId::Eq5 => "integrity-monitor violation raises the trigger next cycle",
            PropId::Eq6 => "accepted interrupt clears the trigger next cycle",
            PropId::Eq7 => "trigger revokes the latched task next cycle",
            PropId::Eq8 => "revoked-task execution raises the trigger next cycle",
            PropId::Eq9 => "updater exit restores full availability next cycle",
            PropId::Def1a => "post-violation availability: every violation triggers",
            PropId::Def1b => "post-violation availability: the violator leaves the region",
            PropId::Def2 => "post-violation integrity: only available tasks run untriggerable",
        }
    }
}

/// A builtin property: its formula plus the antecedent used to measure how
/// often a trace actually exercises it.
#[derive(Debug, Clone)]
pub struct BuiltinProp {
    pub id: PropId,
    pub formula: Formula,
    pub antecedent: Formula,
}

const EXPANSION_WIDTH: u8 = 16;

fn tasks() -> impl Iterator<Item = u8> {
    0..EXPANSION_WIDTH
}

/// The twelve builtin properties: the task-tracking axiom expanded per task,
/// the eight monitor obligations, and the three top-level guarantees.
pub fn builtin_suite() -> Vec<BuiltinProp> {
    let mut suite = Vec::new();

    // eq1: pc inside task i's bounds iff the tracked id equals i.
    suite.push(BuiltinProp {
        id: PropId::Eq1,
        formula: globally(all_of(tasks().map(|i| {
            and(
                implies(atom(format!("pc_in_task_{i}")), atom(format!("task_id_eq_{i}"))),
                implies(atom(format!("task_id_eq_{i}")), atom(format!("pc_in_task_{i}"))),
            )
        }))),
        antecedent: atom("pc_in_tr"),
    });

    // eq2: read or write touching the protected data region from outside
    // trusted software must be flagged.
    let eq2_ante = and(
        or(atom("r_en"), atom("w_en")),
        and(atom("daddr_in_dpair"), not(atom("pc_in_sw"))),
    );
    suite.push(BuiltinProp {
        id: PropId::Eq2,
        formula: globally(implies(eq2_ante.clone(), atom("violation_pair"))),
        antecedent: eq2_ante,
    });

    // eq3: program-memory write from outside trusted software must be flagged.
    let eq3_ante = and(atom("w_en"), and(atom("daddr_in_pmem"), not(atom("pc_in_sw"))));
    suite.push(BuiltinProp {
        id: PropId::Eq3,
        formula: globally(implies(eq3_ante.clone(), atom("violation_pair"))),
        antecedent: eq3_ante,
    });

    // eq4 / eq5: violations raise the trigger in the next state.
    suite.push(BuiltinProp {
        id: PropId::Eq4,
        formula: globally(implies(atom("violation_pair"), next(atom("trigger")))),
        antecedent: atom("violation_pair"),
    });
    suite.push(BuiltinProp {
        id: PropId::Eq5,
        formula: globally(implies(atom("violation_im"), next(atom("trigger")))),
        antecedent: atom("violation_im"),
    });

    // eq6: trigger accepted by the MCU clears in the next state.
    let eq6_ante = and(atom("trigger"), atom("irq"));
    suite.push(BuiltinProp {
        id: PropId::Eq6,
        formula: globally(implies(eq6_ante.clone(), next(not(atom("trigger"))))),
        antecedent: eq6_ante,
    });

    // eq7: while the trigger is up, the latched violator's bit is cleared in
    // the next state. The latch carries the executing-task witness across the
    // interrupt, so the antecedent is the latch rather than the live pc.
    let eq7_ante = and(atom("trigger"), atom("latched_valid"));
    suite.push(BuiltinProp {
        id: PropId::Eq7,
        formula: globally(implies(eq7_ante.clone(), next(atom("latched_revoked")))),
        antecedent: eq7_ante,
    });

    // eq8: executing a task whose availability bit is clear raises the
    // trigger in the next state.
    suite.push(BuiltinProp {
        id: PropId::Eq8,
        formula: globally(all_of(tasks().map(|i| {
            implies(
                and(
                    atom("pc_in_tr"),
                    and(atom(format!("task_id_eq_{i}")), not(atom(format!("ar_bit_{i}")))),
                ),
                next(atom("trigger")),
            )
        }))),
        antecedent: any_of(
            tasks().map(|i| and(atom(format!("task_id_eq_{i}")), not(atom(format!("ar_bit_{i}"))))),
        ),
    });

    // eq9: retiring the updater exit restores the full availability word.
    suite.push(BuiltinProp {
        id: PropId::Eq9,
        formula: globally(implies(atom("pc_eq_sw_exit"), next(atom("ar_en_full")))),
        antecedent: atom("pc_eq_sw_exit"),
    });

    // def1a: any violation, of either kind, triggers next cycle.
    let def1a_ante = or(atom("violation_pair"), atom("violation_im"));
    suite.push(BuiltinProp {
        id: PropId::Def1a,
        formula: globally(implies(def1a_ante.clone(), next(atom("trigger")))),
        antecedent: def1a_ante,
    });

    // def1b: per task, a trigger attributed to task i removes it from the
    // availability region in the next state.
    suite.push(BuiltinProp {
        id: PropId::Def1b,
        formula: globally(all_of(tasks().map(|i| {
            implies(
                and(atom("trigger"), atom(format!("latched_eq_{i}"))),
                next(not(atom(format!("ar_bit_{i}")))),
            )
        }))),
        antecedent: and(atom("trigger"), atom("latched_valid")),
    });

    // def2: an executing task is either in the availability region or the
    // trigger rises next cycle.
    suite.push(BuiltinProp {
        id: PropId::Def2,
        formula: globally(all_of(tasks().map(|i| {
            implies(
                and(atom("pc_in_tr"), atom(format!("task_id_eq_{i}"))),
                or(atom(format!("ar_bit_{i}")), next(atom("trigger"))),
            )
        }))),
        antecedent: atom("pc_in_tr"),
    });

    suite
}

/// Number of records at which a property's antecedent holds: how often the
/// trace genuinely exercises it.
pub fn antecedent_hits(
    prop: &BuiltinProp,
    records: &[TraceRecord],
    meta: &TraceMeta,
) -> Result<u64, CheckError> {
    let resolved = resolve(&prop.antecedent)?;
    let mut hits = 0;
    let mut vac = 0u32;
    for i in 0..records.len() {
        if eval_resolved(&resolved, records, i, meta, &mut vac) {
            hits += 1;
        }
    }
    Ok(hits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{Interval, Region};
    use crate::machine::InstrClass;
    use crate::pair::{ArState, TriggerState};
    use proptest::prelude::*;

    fn meta() -> TraceMeta {
        TraceMeta {
            pmem: Interval::new(0x8000, 0xBFFF),
            tr: Interval::new(0x8100, 0x9FFF),
            rtos: Interval::new(0x8000, 0x80FF),
            sw: Interval::new(0xA000, 0xA3FF),
            d: Interval::new(0x0100, 0x28FF),
            d_pair: Interval::new(0x2900, 0x29FF),
            sw_exit: 0xA0FC,
            n_tasks: 2,
            bounds: vec![(0x8100, 0x82FF), (0x8300, 0x84FF)],
        }
    }

    fn blank(cycle: u64) -> TraceRecord {
        TraceRecord {
            cycle,
            pc: 0x8100,
            region: Region::Tr,
            task_id: Some(0),
            latched_task: None,
            instr_class: InstrClass::Plain,
            w_en: false,
            r_en: false,
            d_addr: 0,
            irq: false,
            violation_im: false,
            violation_pair: false,
            trigger: false,
            ar_en: 0x0003,
            trigger_state: TriggerState::Exec,
            ar_state: ArState::Exec,
        }
    }

    #[test]
    fn globally_true_atom_passes() {
        // `ar_bit_0` is set in every blank record.
        let recs: Vec<_> = (0..4).map(blank).collect();
        let rep = check("t", &globally(atom("ar_bit_0")), &recs, &meta()).unwrap();
        assert_eq!(rep.verdict, Verdict::Pass);
        assert_eq!(rep.vacuous_tail_count, 0);
    }

    #[test]
    fn eq5_fails_on_hand_built_counterexample() {
        // violation_im at index 0 but no trigger at index 1.
        let mut r0 = blank(0);
        r0.violation_im = true;
        let recs = vec![r0, blank(1), blank(2)];
        let suite = builtin_suite();
        let eq5 = suite.iter().find(|p| p.id == PropId::Eq5).unwrap();
        let rep = check("eq5", &eq5.formula, &recs, &meta()).unwrap();
        assert_eq!(rep.verdict, Verdict::Fail);
        assert_eq!(rep.first_fail_index, Some(0));
    }

    #[test]
    fn next_at_final_index_is_vacuous() {
        let recs = vec![blank(0)];
        let f = globally(implies(atom("w_en"), next(atom("trigger"))));
        let rep = check("t", &f, &recs, &meta()).unwrap();
        assert_eq!(rep.verdict, Verdict::Pass);
        assert_eq!(rep.vacuous_tail_count, 1);
    }

    #[test]
    fn unknown_atom_is_an_error() {
        let recs = vec![blank(0)];
        let err = check("t", &globally(atom("no_such_signal")), &recs, &meta()).unwrap_err();
        assert_eq!(err, CheckError::UnknownAtom("no_such_signal".into()));
    }

    #[test]
    fn suite_has_twelve_properties() {
        let suite = builtin_suite();
        assert_eq!(suite.len(), 12);
        let mut ids: Vec<_> = suite.iter().map(|p| p.id).collect();
        ids.dedup();
        assert_eq!(ids.len(), 12);
    }

    #[test]
    fn eq8_references_availability_bits() {
        // A revoked task id with the trigger absent next cycle must fail eq8.
        let mut r0 = blank(0);
        r0.pc = 0x8300;
        r0.task_id = Some(1);
        r0.ar_en = 0x0001; // bit 1 clear
        let recs = vec![r0, blank(1)];
        let suite = builtin_suite();
        let eq8 = suite.iter().find(|p| p.id == PropId::Eq8).unwrap();
        let rep = check("eq8", &eq8.formula, &recs, &meta()).unwrap();
        assert_eq!(rep.verdict, Verdict::Fail);
        assert_eq!(rep.first_fail_index, Some(0));
    }

    #[test]
    fn def2_accepts_available_task() {
        let recs: Vec<_> = (0..8).map(blank).collect();
        let suite = builtin_suite();
        let def2 = suite.iter().find(|p| p.id == PropId::Def2).unwrap();
        let rep = check("def2", &def2.formula, &recs, &meta()).unwrap();
        assert_eq!(rep.verdict, Verdict::Pass);
    }

    #[test]
    fn check_is_deterministic() {
        let mut r0 = blank(0);
        r0.violation_pair = true;
        let recs = vec![r0, blank(1), blank(2)];
        let suite = builtin_suite();
        for p in &suite {
            let a = check(p.id.name(), &p.formula, &recs, &meta()).unwrap();
            let b = check(p.id.name(), &p.formula, &recs, &meta()).unwrap();
            assert_eq!(a, b);
        }
    }

    fn arb_record(cycle: u64) -> impl Strategy<Value = TraceRecord> {
        (
            any::<bool>(),
            any::<bool>(),
            any::<bool>(),
            any::<bool>(),
            any::<bool>(),
            0u16..4,
            prop_oneof![Just(0x8100u16), Just(0x8300), Just(0xA000), Just(0x8004)],
        )
            .prop_map(move |(w, r, vi, vp, trig, ar, pc)| {
                let mut rec = blank(cycle);
                rec.w_en = w;
                rec.r_en = r;
                rec.violation_im = vi;
                rec.violation_pair = vp;
                rec.trigger = trig;
                rec.ar_en = ar;
                rec.pc = pc;
                rec.task_id = meta().task_of(pc);
                rec
            })
    }

    proptest! {
        /// The reported first failure index equals a direct per-index scan of
        /// the body.
        #[test]
        fn first_fail_index_matches_scan(recs in proptest::collection::vec(arb_record(0), 1..24)) {
            let recs: Vec<TraceRecord> = recs.into_iter().enumerate().map(|(i, mut r)| { r.cycle = i as u64; r }).collect();
            let m = meta();
            let body = implies(atom("violation_im"), next(atom("trigger")));
            let rep = check("t", &globally(body.clone()), &recs, &m).unwrap();
            let mut expected = None;
            for i in 0..recs.len() {
                let mut vac = 0;
                if !eval(&body, &recs, i, &m, &mut vac).unwrap() {
                    expected = Some(i);
                    break;
                }
            }
            prop_assert_eq!(rep.first_fail_index, expected);
            prop_assert_eq!(rep.verdict == Verdict::Pass, expected.is_none());
        }
    }
}
