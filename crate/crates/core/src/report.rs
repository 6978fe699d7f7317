//! Run reports: everything a scenario run claims, recomputed from its trace.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::layout::{DPairAccounting, MemoryLayout};
use crate::ltl::{self, CheckReport, PropId, Verdict};
use crate::machine::InstrClass;
use crate::rtos::SchedulerConfig;
use crate::scenario::Expected;
use crate::trace::{TraceMeta, TraceRecord};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UpdateOutcome {
    Applied { task: u8 },
    AuthFailed { task: u8 },
    Rejected { task: u8, reason: String },
}

impl fmt::Display for UpdateOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UpdateOutcome::Applied { task } => write!(f, "applied to task {task}"),
            UpdateOutcome::AuthFailed { task } => write!(f, "authentication failed for task {task}"),
            UpdateOutcome::Rejected { task, reason } => write!(f, "rejected for task {task}: {reason}"),
        }
    }
}

/// One availability check: after a trigger, every surviving task must finish
/// a job within twice its slice times the number of ready tasks.
#[derive(Debug, Clone)]
pub struct AvailabilityWindow {
    pub trigger_cycle: u64,
    pub window: u64,
    /// First in-window job-completion cycle per surviving task.
    pub per_task: BTreeMap<u8, Option<u64>>,
    pub satisfied: bool,
}

/// Post-revocation execution accounting for the integrity guarantee.
#[derive(Debug, Clone, Default)]
pub struct PostRevocationStats {
    pub per_task_instructions: BTreeMap<u8, u64>,
    pub total: u64,
    pub max_streak: u64,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub scenario: String,
    pub cycles: u64,
    pub jobs_total: BTreeMap<u8, u64>,
    pub jobs_before_first_trigger: BTreeMap<u8, u64>,
    pub jobs_after_last_trigger: BTreeMap<u8, u64>,
    pub trigger_cycles: Vec<u64>,
    pub revocations: Vec<(u64, u8)>,
    pub reinstates: Vec<u64>,
    pub resets: Vec<u64>,
    pub update_outcomes: Vec<(u64, UpdateOutcome)>,
    pub revoked_final: Vec<u8>,
    pub post_revocation: PostRevocationStats,
    pub availability: Vec<AvailabilityWindow>,
    pub formula_verdicts: Vec<CheckReport>,
    pub formulas_all_pass: bool,
    /// Antecedent hits per builtin property: how often the trace exercised it.
    pub coverage: BTreeMap<PropId, u64>,
    pub accounting: DPairAccounting,
    pub expected_mismatches: Vec<String>,
}

impl RunReport {
    pub fn expected_ok(&self) -> bool {
        self.expected_mismatches.is_empty()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn build(
        scenario: &str,
        records: &[TraceRecord],
        meta: &TraceMeta,
        layout: &MemoryLayout,
        sched: &SchedulerConfig,
        expected: &Expected,
        revocations: &[(u64, u8)],
        reinstates: &[u64],
        resets: &[u64],
        update_outcomes: &[(u64, UpdateOutcome)],
        counter_owner: &BTreeMap<u16, u8>,
    ) -> RunReport {
        let n = layout.n_tasks;

        // Job completions: committed stores to a task's counter word.
        let job_events: Vec<(u64, u8)> = records
            .iter()
            .filter(|r| r.instr_class == InstrClass::Store && r.w_en)
            .filter_map(|r| counter_owner.get(&r.d_addr).map(|t| (r.cycle, *t)))
            .collect();

        // Trigger rising edges.
        let mut trigger_cycles = Vec::new();
        let mut prev = false;
        for r in records {
            if r.trigger && !prev {
                trigger_cycles.push(r.cycle);
            }
            prev = r.trigger;
        }

        let count_jobs = |pred: &dyn Fn(u64) -> bool| -> BTreeMap<u8, u64> {
            let mut m: BTreeMap<u8, u64> = (0..n).map(|t| (t, 0)).collect();
            for (cycle, task) in &job_events {
                if pred(*cycle) {
                    *m.entry(*task).or_default() += 1;
                }
            }
            m
        };
        let jobs_total = count_jobs(&|_| true);
        let first_trigger = trigger_cycles.first().copied();
        let last_trigger = trigger_cycles.last().copied();
        let jobs_before_first_trigger =
            count_jobs(&|c| first_trigger.is_none_or(|t| c < t));
        let jobs_after_last_trigger = count_jobs(&|c| last_trigger.is_some_and(|t| c > t));

        // Availability: for each trigger, the set revoked shortly after it
        // (the revoke lands within a few cycles) defines the survivors.
        let mut availability = Vec::new();
        for &tc in &trigger_cycles {
            let revoked_now: BTreeSet<u8> = revocations
                .iter()
                .filter(|(c, _)| *c <= tc + 8)
                .map(|(_, t)| *t)
                .collect();
            let ready = u64::from(n) - revoked_now.len() as u64;
            let window = 2 * u64::from(sched.time_slice) * ready.max(1);
            let mut per_task = BTreeMap::new();
            for t in 0..n {
                if revoked_now.contains(&t) {
                    continue;
                }
                let first = job_events
                    .iter()
                    .find(|(c, task)| *task == t && *c > tc && *c <= tc + window)
                    .map(|(c, _)| *c);
                per_task.insert(t, first);
            }
            let satisfied = per_task.values().all(|v| v.is_some());
            availability.push(AvailabilityWindow { trigger_cycle: tc, window, per_task, satisfied });
        }

        // Post-revocation execution: task-bounds records whose availability
        // bit is clear at that cycle, with streak lengths over adjacent rows.
        let mut post = PostRevocationStats::default();
        let mut streak = 0u64;
        for r in records {
            let revoked_exec = match r.task_id {
                Some(t) => {
                    !matches!(r.instr_class, InstrClass::InterruptEntry | InstrClass::Halted)
                        && r.ar_en & (1u16 << t) == 0
                }
                None => false,
            };
            if revoked_exec {
                let t = r.task_id.unwrap();
                *post.per_task_instructions.entry(t).or_default() += 1;
                post.total += 1;
                streak += 1;
                post.max_streak = post.max_streak.max(streak);
            } else {
                streak = 0;
            }
        }

        let revoked_final: Vec<u8> = match records.last() {
            Some(last) => (0..n).filter(|t| last.ar_en & (1u16 << t) == 0).collect(),
            None => Vec::new(),
        };

        let mut formula_verdicts = Vec::new();
        let mut coverage = BTreeMap::new();
        if !records.is_empty() {
            for prop in ltl::builtin_suite() {
                let rep = ltl::check(prop.id.name(), &prop.formula, records, meta)
                    .expect("builtin formulas use known atoms");
                formula_verdicts.push(rep);
                let hits = ltl::antecedent_hits(&prop, records, meta).unwrap_or(0);
                coverage.insert(prop.id, hits);
            }
        }
        let formulas_all_pass = formula_verdicts.iter().all(|r| r.verdict == Verdict::Pass);

        // Expected-outcome validation.
        let mut mismatches = Vec::new();
        let revoked_ever: BTreeSet<u8> = revocations.iter().map(|(_, t)| *t).collect();
        let want_ever: BTreeSet<u8> = expected.revoked_ever.iter().copied().collect();
        if revoked_ever != want_ever {
            mismatches.push(format!("revoked tasks {revoked_ever:?}, expected {want_ever:?}"));
        }
        let want_final: Vec<u8> = {
            let mut v = expected.revoked_final.clone();
            v.sort_unstable();
            v
        };
        if revoked_final != want_final {
            mismatches.push(format!("finally revoked {revoked_final:?}, expected {want_final:?}"));
        }
        if reinstates.len() != expected.reinstates {
            mismatches.push(format!(
                "{} reinstate events, expected {}",
                reinstates.len(),
                expected.reinstates
            ));
        }
        if resets.len() != expected.resets {
            mismatches.push(format!("{} resets, expected {}", resets.len(), expected.resets));
        }

        RunReport {
            scenario: scenario.to_string(),
            cycles: records.len() as u64,
            jobs_total,
            jobs_before_first_trigger,
            jobs_after_last_trigger,
            trigger_cycles,
            revocations: revocations.to_vec(),
            reinstates: reinstates.to_vec(),
            resets: resets.to_vec(),
            update_outcomes: update_outcomes.to_vec(),
            revoked_final,
            post_revocation: post,
            availability,
            formula_verdicts,
            formulas_all_pass,
            coverage,
            accounting: layout.accounting(),
            expected_mismatches: mismatches,
        }
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario {} ({} cycles)", self.scenario, self.cycles)?;
        writeln!(f, "triggers: {:?}", self.trigger_cycles)?;
        writeln!(f, "revocations (cycle, task): {:?}", self.revocations)?;
        writeln!(f, "reinstates: {:?}  resets: {:?}", self.reinstates, self.resets)?;
        for (cycle, outcome) in &self.update_outcomes {
            writeln!(f, "update @{cycle}: {outcome}")?;
        }
        writeln!(f, "finally revoked: {:?}", self.revoked_final)?;
        writeln!(f, "jobs total: {:?}", self.jobs_total)?;
        writeln!(
            f,
            "jobs before first trigger: {:?}  after last trigger: {:?}",
            self.jobs_before_first_trigger, self.jobs_after_last_trigger
        )?;
        writeln!(
            f,
            "post-revocation execution: total {} instr, longest streak {}",
            self.post_revocation.total, self.post_revocation.max_streak
        )?;
        for w in &self.availability {
            writeln!(
                f,
                "availability after trigger @{}: window {} cycles, satisfied: {}",
                w.trigger_cycle, w.window, w.satisfied
            )?;
        }
        writeln!(f, "properties:")?;
        for v in &self.formula_verdicts {
            writeln!(f, "  {v}")?;
        }
        writeln!(f, "property exercise counts (antecedent hits):")?;
        for (id, hits) in &self.coverage {
            writeln!(f, "  {} {}", id.name(), hits)?;
        }
        writeln!(f, "{}", self.accounting)?;
        if self.expected_ok() {
            write!(f, "expected outcomes: ok")
        } else {
            writeln!(f, "expected outcomes: MISMATCH")?;
            for m in &self.expected_mismatches {
                writeln!(f, "  {m}")?;
            }
            Ok(())
        }
    }
}
