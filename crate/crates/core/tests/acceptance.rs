//! Acceptance suite: one test per shipped guarantee, each printing a
//! criterion line on success.

use std::collections::BTreeSet;
use std::sync::OnceLock;
use std::time::Instant;

use pair_sim::fsm_check::{fsm_verify, fsm_verify_with};
use pair_sim::ltl::{self, PropId, Verdict};
use pair_sim::machine::InstrClass;
use pair_sim::pair::{MonitorFault, ALL_FAULTS};
use pair_sim::scenario::{self, Scenario};
use pair_sim::sim::{run_scenario, run_scenario_with, RunOptions, ScenarioRun};
use pair_sim::trace;

fn runs() -> &'static Vec<ScenarioRun> {
    static RUNS: OnceLock<Vec<ScenarioRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        scenario::catalog()
            .iter()
            .map(|s| run_scenario(s).unwrap_or_else(|e| panic!("{}: {e}", s.name)))
            .collect()
    })
}

fn run_named(name: &str) -> &'static ScenarioRun {
    runs()
        .iter()
        .find(|r| r.scenario_name == name)
        .unwrap_or_else(|| panic!("scenario {name} missing"))
}

fn catalog_by_name(name: &str) -> Scenario {
    scenario::find(name).unwrap()
}

#[test]
fn c01_fsm_exhaustive_verification() {
    let start = Instant::now();
    let report = fsm_verify();
    let elapsed = start.elapsed();
    assert_eq!(report.trigger_edges, 64);
    assert_eq!(report.ar_edges, 24);
    assert!(report.clean(), "{report}");
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!(
        "criterion 1 PASS: fsm verification clean over {} edges in {elapsed:?}",
        report.trigger_edges + report.ar_edges
    );
}

#[test]
fn c02_builtin_formulas_pass_on_every_scenario() {
    let all = runs();
    assert!(all.len() >= 10, "catalog has {} scenarios", all.len());
    assert_eq!(ltl::builtin_suite().len(), 12);
    for run in all.iter() {
        assert!(
            run.records.len() >= 10_000,
            "{} ran only {} cycles",
            run.scenario_name,
            run.records.len()
        );
        for verdict in &run.report.formula_verdicts {
            assert_eq!(
                verdict.verdict,
                Verdict::Pass,
                "{}: formula {} failed at {:?}",
                run.scenario_name,
                verdict.id,
                verdict.first_fail_index
            );
        }
        assert_eq!(run.report.formula_verdicts.len(), 12, "{}", run.scenario_name);
    }
    // Every per-cycle obligation is genuinely exercised somewhere.
    for id in [
        PropId::Eq2,
        PropId::Eq3,
        PropId::Eq4,
        PropId::Eq5,
        PropId::Eq6,
        PropId::Eq7,
        PropId::Eq8,
        PropId::Eq9,
    ] {
        let exercised: Vec<&str> = all
            .iter()
            .filter(|r| r.report.coverage.get(&id).copied().unwrap_or(0) > 0)
            .map(|r| r.scenario_name.as_str())
            .collect();
        assert!(!exercised.is_empty(), "{} never exercised", id.name());
    }
    println!(
        "criterion 2 PASS: 12 builtin formulas pass on {} scenarios (>= 10^4 cycles each), all obligations exercised",
        all.len()
    );
}

#[test]
fn c03_post_violation_availability() {
    let mut checked = 0;
    for run in runs().iter().filter(|r| !r.report.trigger_cycles.is_empty()) {
        assert!(run.meta.n_tasks >= 2, "{}", run.scenario_name);
        for w in &run.report.availability {
            assert!(
                w.satisfied,
                "{}: window after trigger @{} unsatisfied: {:?}",
                run.scenario_name, w.trigger_cycle, w.per_task
            );
            checked += 1;
        }
    }
    assert!(checked > 0);
    println!(
        "criterion 3 PASS: every surviving task completed a job inside {checked} post-trigger windows"
    );
}

#[test]
fn c04_post_violation_integrity() {
    // Globally: a revoked task never strings two instructions together, and
    // every revoked-task instruction is immediately followed by the interrupt.
    for run in runs().iter() {
        let stats = &run.report.post_revocation;
        assert!(
            stats.max_streak <= 1,
            "{}: revoked task ran {} consecutive instructions",
            run.scenario_name,
            stats.max_streak
        );
        for (i, r) in run.records.iter().enumerate() {
            let revoked_exec = r
                .task_id
                .map(|t| {
                    r.ar_en & (1 << t) == 0
                        && !matches!(r.instr_class, InstrClass::InterruptEntry | InstrClass::Halted)
                })
                .unwrap_or(false);
            if revoked_exec {
                let next = run.records.get(i + 1);
                assert!(
                    next.map(|n| n.instr_class == InstrClass::InterruptEntry).unwrap_or(true),
                    "{}: revoked-task instruction at cycle {} not followed by interrupt entry",
                    run.scenario_name,
                    r.cycle
                );
            }
        }
    }
    let reentry = run_named("reentry_malicious_scheduler");
    let stats = &reentry.report.post_revocation;
    assert_eq!(stats.total, 100, "one instruction per re-entry attempt");
    assert!(stats.total <= 100);
    println!(
        "criterion 4 PASS: revoked tasks execute at most 1 instruction per attempt; 100 attempts cost {} instructions",
        stats.total
    );
}

#[test]
fn c05_write_squash_byte_compare() {
    for name in ["pmem_write", "dpair_write"] {
        let run = run_named(name);
        assert_eq!(
            run.pmem_before, run.pmem_after,
            "{name}: program memory changed without a trusted update"
        );
        let diffs: Vec<usize> = run
            .dpair_before
            .iter()
            .zip(&run.dpair_after)
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(i, _)| i)
            .collect();
        for off in &diffs {
            assert!(
                run.status_block_offsets.contains(off),
                "{name}: protected byte at offset {off} changed outside the hardware status block"
            );
        }
    }
    println!("criterion 5 PASS: squashed writes left program memory and protected data bit-identical");
}

#[test]
fn c06_update_flow_timing() {
    let run = run_named("update_and_reinstate");
    let all_set = run.meta.ar_all_set();
    // Exact next-cycle timing at the updater exit.
    let exit_rows: Vec<usize> = run
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.pc == run.meta.sw_exit && r.instr_class != InstrClass::InterruptEntry)
        .map(|(i, _)| i)
        .collect();
    assert_eq!(exit_rows.len(), 1, "updater exit retires exactly once");
    let at = exit_rows[0];
    assert_ne!(run.records[at].ar_en, all_set, "task 1 still revoked at the exit");
    assert_eq!(
        run.records[at + 1].ar_en, all_set,
        "availability restored on the cycle immediately after the updater exit"
    );
    // The reinstated task completes at least one job, with no further triggers.
    let reinstate_cycle = run.records[at + 1].cycle;
    let jobs_after = run
        .records
        .iter()
        .filter(|r| {
            r.cycle > reinstate_cycle
                && r.instr_class == InstrClass::Store
                && r.task_id == Some(1)
        })
        .count();
    assert!(jobs_after >= 1, "reinstated task completed {jobs_after} jobs");
    assert!(
        run.records.iter().all(|r| !(r.cycle > reinstate_cycle && r.trigger)),
        "no trigger after reinstatement"
    );

    let wrong = run_named("update_wrong_token");
    assert!(wrong.report.reinstates.is_empty());
    assert!(!wrong.records.iter().any(|r| r.pc == wrong.meta.sw_exit
        && r.instr_class != InstrClass::InterruptEntry));
    let revoke_cycle = wrong.report.revocations[0].0;
    let post_revoke_ar: BTreeSet<u16> = wrong
        .records
        .iter()
        .filter(|r| r.cycle > revoke_cycle)
        .map(|r| r.ar_en)
        .collect();
    assert_eq!(post_revoke_ar.len(), 1, "availability untouched by the rejected update");
    assert_eq!(wrong.report.revoked_final, vec![1]);
    println!("criterion 6 PASS: reinstate lands exactly one cycle after the updater exit; bad token changes nothing");
}

#[test]
fn c07_mutation_sensitivity() {
    // Each seeded fault pairs with the scenario that exercises its edge.
    let scenario_for = |fault: MonitorFault| -> &'static str {
        match fault {
            MonitorFault::DropAccessTrigger => "dpair_write",
            MonitorFault::DropImTrigger => "rop_return_corruption",
            MonitorFault::StuckTrigger => "dpair_write",
            MonitorFault::SkipRevoke => "dpair_write",
            MonitorFault::DropReentryTrigger => "reentry_malicious_scheduler",
            MonitorFault::SkipReinstate => "update_and_reinstate",
        }
    };
    for fault in ALL_FAULTS {
        let fsm_detects = !fsm_verify_with(Some(fault)).clean();
        let spec = catalog_by_name(scenario_for(fault));
        let run = run_scenario_with(
            &spec,
            &RunOptions { cycles: None, monitor_fault: Some(fault) },
        )
        .unwrap();
        let failed: Vec<String> = run
            .report
            .formula_verdicts
            .iter()
            .filter(|v| v.verdict == Verdict::Fail)
            .map(|v| v.id.clone())
            .collect();
        let trace_detects = !failed.is_empty();
        assert!(
            fsm_detects || trace_detects,
            "fault {fault:?} undetected by either route"
        );
        assert!(fsm_detects, "fault {fault:?} must flip at least one fsm edge");
        assert!(
            trace_detects,
            "fault {fault:?} produced no failing formula on {}",
            spec.name
        );
        println!(
            "  fault {fault:?}: fsm mismatch + formulas {failed:?} on {}",
            spec.name
        );
    }
    println!("criterion 7 PASS: all 6 seeded monitor faults detected by fsm verification and by trace formulas");
}

#[test]
fn c08_benign_soundness() {
    let run = run_named("benign_multitask");
    assert_eq!(run.records.len(), 100_000);
    let all_set = run.meta.ar_all_set();
    for r in &run.records {
        assert!(!r.violation_im, "cycle {}", r.cycle);
        assert!(!r.violation_pair, "cycle {}", r.cycle);
        assert!(!r.trigger, "cycle {}", r.cycle);
        assert_eq!(r.ar_en, all_set, "cycle {}", r.cycle);
    }
    println!("criterion 8 PASS: 10^5 benign cycles with zero violations and full availability");
}

#[test]
fn c09_protected_data_accounting() {
    let run = run_named("benign_multitask");
    let acc = run.report.accounting;
    assert_eq!(acc.n_tasks, 3);
    assert_eq!(acc.n_field_bytes(), 2);
    assert_eq!(acc.bounds_table_bytes(), 12);
    assert_eq!(acc.key_bytes(), 16);
    assert_eq!(acc.status_block_bytes(), 4);
    assert_eq!(acc.total_bytes(), 34);
    assert_eq!(acc.published_formula_bytes(), 8);
    // The breakdown matches the provisioned block byte-for-byte.
    assert_eq!(
        pair_sim::layout::MemoryLayout::d_pair_bytes(3),
        acc.total_bytes()
    );
    let text = acc.to_string();
    assert!(text.contains("published figure"));
    assert!(text.contains("2 + 2*N"));
    println!(
        "criterion 9 PASS: accounting reports {} bytes against the published {}-byte figure",
        acc.total_bytes(),
        acc.published_formula_bytes()
    );
}

#[test]
fn c10_deterministic_reruns() {
    for spec in scenario::catalog() {
        let first = run_named(&spec.name);
        let again = run_scenario(&spec).unwrap();
        let a = trace::to_csv_string(&first.meta, &first.records);
        let b = trace::to_csv_string(&again.meta, &again.records);
        assert_eq!(a, b, "{}: reruns differ", spec.name);
    }
    println!("criterion 10 PASS: every scenario reruns to a byte-identical trace file");
}

#[test]
fn suite_invariant_trusted_software_never_violates() {
    for run in runs().iter() {
        for r in &run.records {
            if r.violation_im || r.violation_pair {
                assert!(
                    !run.meta.sw.contains(r.pc),
                    "{}: violation attributed to trusted software at cycle {}",
                    run.scenario_name,
                    r.cycle
                );
            }
        }
    }
}

#[test]
fn suite_invariant_expected_outcomes_hold() {
    for run in runs().iter() {
        assert!(
            run.report.expected_ok(),
            "{}: {:?}",
            run.scenario_name,
            run.report.expected_mismatches
        );
    }
}

#[test]
fn suite_invariant_revocations_match_trace() {
    for run in runs().iter() {
        let from_trace: Vec<u64> = run
            .records
            .iter()
            .filter(|r| r.ar_state == pair_sim::pair::ArState::Revoke)
            .map(|r| r.cycle)
            .collect();
        let from_report: Vec<u64> = run.report.revocations.iter().map(|(c, _)| *c).collect();
        assert_eq!(from_trace, from_report, "{}", run.scenario_name);
    }
}

#[test]
fn suite_invariant_no_nonviolating_task_revoked() {
    // A task is only ever revoked after producing (or being latched for) a
    // violation; cross-check the latched id at each revocation against the
    // violation that preceded it.
    for run in runs().iter() {
        for (cycle, task) in &run.report.revocations {
            let idx = *cycle as usize;
            let window = &run.records[idx.saturating_sub(4)..idx];
            assert!(
                window.iter().any(|r| r.violation_im || r.violation_pair
                    || r.task_id.map(|t| r.ar_en & (1 << t) == 0).unwrap_or(false)),
                "{}: revocation of task {task} at cycle {cycle} without a preceding violation",
                run.scenario_name
            );
        }
    }
}
