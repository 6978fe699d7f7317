//! Command-line front end: scenario runs, trace checking, exhaustive FSM
//! verification, layout accounting and asset emission.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pair_sim::fsm_check;
use pair_sim::layout;
use pair_sim::ltl::{self, PropId, Verdict};
use pair_sim::scenario;
use pair_sim::sim::Simulation;
use pair_sim::trace;

#[derive(Parser)]
#[command(name = "pair-sim", about = "MCU simulator with an availability/integrity monitor")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a catalog scenario against a program and layout.
    Run {
        #[arg(long)]
        program: PathBuf,
        #[arg(long)]
        layout: PathBuf,
        #[arg(long)]
        scenario: String,
        /// Override the scenario's cycle budget.
        #[arg(long)]
        cycles: Option<u64>,
        /// Write the trace CSV here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the run report here (otherwise printed to stdout).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Check builtin properties against a trace CSV.
    Check {
        #[arg(long)]
        trace: PathBuf,
        /// `all` or a comma-separated list of property ids (eq1..eq9, def1a, def1b, def2).
        #[arg(long, default_value = "all")]
        props: String,
    },
    /// Exhaustively verify the monitor state machines.
    FsmVerify,
    /// List the scenario catalog.
    ListScenarios,
    /// Print the protected-data accounting for a layout.
    Accounting {
        #[arg(long)]
        layout: PathBuf,
    },
    /// Write every catalog scenario's program and layout under a directory.
    EmitAssets {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn run_cmd(
    program: &Path,
    layout_path: &Path,
    scenario_name: &str,
    cycles: Option<u64>,
    trace_out: Option<&Path>,
    report_out: Option<&Path>,
) -> Result<ExitCode, String> {
    let spec = scenario::find(scenario_name)
        .ok_or_else(|| format!("unknown scenario `{scenario_name}` (see list-scenarios)"))?;
    let program_text = read(program)?;
    let layout_text = read(layout_path)?;
    let mut sim = Simulation::from_sources(&spec, &program_text, &layout_text, None)
        .map_err(|e| e.to_string())?;
    let budget = cycles.unwrap_or(spec.run_cycles);
    sim.run(budget).map_err(|e| e.to_string())?;
    let run = sim.finish();

    if let Some(path) = trace_out {
        let csv = trace::to_csv_string(&run.meta, &run.records);
        std::fs::write(path, csv).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    let report_text = run.report.to_string();
    match report_out {
        Some(path) => std::fs::write(path, &report_text).map_err(|e| format!("{}: {e}", path.display()))?,
        None => println!("{report_text}"),
    }
    let ok = run.report.expected_ok() && run.report.formulas_all_pass;
    if !ok {
        eprintln!("run completed with failed expectations or properties");
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn check_cmd(trace_path: &Path, props: &str) -> Result<ExitCode, String> {
    let text = read(trace_path)?;
    let (meta, records) = trace::from_csv_str(&text).map_err(|e| e.to_string())?;
    let selected: BTreeSet<PropId> = if props.trim() == "all" {
        ltl::ALL_PROPS.iter().copied().collect()
    } else {
        let mut set = BTreeSet::new();
        for tok in props.split(',') {
            let tok = tok.trim();
            // `eqA..eqB` selects the inclusive range of numbered properties.
            if let Some((lo, hi)) = tok.split_once("..") {
                let bounds: Option<(u8, u8)> = lo
                    .strip_prefix("eq")
                    .and_then(|s| s.parse().ok())
                    .zip(hi.strip_prefix("eq").and_then(|s| s.parse().ok()));
                let (a, b) = bounds.ok_or_else(|| format!("bad property range `{tok}`"))?;
                for n in a..=b {
                    let id = PropId::from_name(&format!("eq{n}"))
                        .ok_or_else(|| format!("no property `eq{n}` in `{tok}`"))?;
                    set.insert(id);
                }
                continue;
            }
            let id = PropId::from_name(tok).ok_or_else(|| format!("unknown property `{tok}`"))?;
            set.insert(id);
        }
        set
    };
    let mut all_pass = true;
    for prop in ltl::builtin_suite() {
        if !selected.contains(&prop.id) {
            continue;
        }
        let rep = ltl::check(prop.id.name(), &prop.formula, &records, &meta)
            .map_err(|e| e.to_string())?;
        println!("{rep}");
        all_pass &= rep.verdict == Verdict::Pass;
    }
    println!(
        "# {} of {} selected properties checked over {} records",
        selected.len(),
        ltl::ALL_PROPS.len(),
        records.len()
    );
    Ok(if all_pass { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn fsm_verify_cmd() -> ExitCode {
    let report = fsm_check::fsm_verify();
    println!("{report}");
    if report.clean() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn list_cmd() {
    for s in scenario::catalog() {
        println!("{:28} {:7} cycles  {}", s.name, s.run_cycles, s.description);
    }
}

fn accounting_cmd(path: &Path) -> Result<ExitCode, String> {
    let text = read(path)?;
    let l = layout::parse_config(&text).map_err(|e| e.to_string())?;
    l.validate()
        .map_err(|errs| errs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))?;
    println!("{}", l.accounting());
    Ok(ExitCode::SUCCESS)
}

fn emit_assets_cmd(dir: &Path) -> Result<ExitCode, String> {
    for s in scenario::catalog() {
        let sub = dir.join(&s.name);
        std::fs::create_dir_all(&sub).map_err(|e| format!("{}: {e}", sub.display()))?;
        std::fs::write(sub.join("program.asm"), &s.program_text)
            .map_err(|e| e.to_string())?;
        std::fs::write(sub.join("layout.cfg"), &s.layout_text)
            .map_err(|e| e.to_string())?;
        println!("wrote {}", sub.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { program, layout, scenario, cycles, trace, report } => run_cmd(
            program,
            layout,
            scenario,
            *cycles,
            trace.as_deref(),
            report.as_deref(),
        ),
        Command::Check { trace, props } => check_cmd(trace, props),
        Command::FsmVerify => Ok(fsm_verify_cmd()),
        Command::ListScenarios => {
            list_cmd();
            Ok(ExitCode::SUCCESS)
        }
        Command::Accounting { layout } => accounting_cmd(layout),
        Command::EmitAssets { dir } => emit_assets_cmd(dir),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
