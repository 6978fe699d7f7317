//! Per-cycle trace records and their CSV form.
//!
//! A trace file starts with one `#`-prefixed metadata line carrying the
//! layout facts the property checker needs (regions, task bounds, the updater
//! exit), followed by a fixed header and one row per cycle. Hex fields are
//! zero-padded to four digits, booleans are `0`/`1`, and absent task ids are
//! `-`. Monitor fields hold the registered values driving the wires during
//! that cycle; pc, access and violation fields describe the operation retired
//! in it.

use std::fmt::Write as _;

use thiserror::Error;

use crate::layout::{Interval, MemoryLayout, Region};
use crate::machine::InstrClass;
use crate::pair::{ArState, TriggerState};

pub const CSV_HEADER: &str = "cycle,pc,region,task_id,latched_task,instr_class,w_en,r_en,d_addr,irq,violation_im,violation_pair,trigger,ar_en_hex,trigger_state,ar_state";

/// One cycle of the composed simulation, the unit of property checking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRecord {
    pub cycle: u64,
    pub pc: u16,
    pub region: Region,
    pub task_id: Option<u8>,
    pub latched_task: Option<u8>,
    pub instr_class: InstrClass,
    pub w_en: bool,
    pub r_en: bool,
    pub d_addr: u16,
    pub irq: bool,
    pub violation_im: bool,
    pub violation_pair: bool,
    pub trigger: bool,
    pub ar_en: u16,
    pub trigger_state: TriggerState,
    pub ar_state: ArState,
}

/// Layout facts embedded in a trace file so a trace is checkable on its own.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceMeta {
    pub pmem: Interval,
    pub tr: Interval,
    pub rtos: Interval,
    pub sw: Interval,
    pub d: Interval,
    pub d_pair: Interval,
    pub sw_exit: u16,
    pub n_tasks: u8,
    pub bounds: Vec<(u16, u16)>,
}

impl TraceMeta {
    pub fn from_layout(layout: &MemoryLayout) -> Self {
        Self {
            pmem: layout.pmem,
            tr: layout.tr,
            rtos: layout.rtos,
            sw: layout.sw,
            d: layout.d,
            d_pair: layout.d_pair,
            sw_exit: layout.sw_exit,
            n_tasks: layout.n_tasks,
            bounds: layout.task_bounds.iter().map(|b| (b.t_min, b.t_max)).collect(),
        }
    }

    /// Brute-force task lookup over the bounds table.
    pub fn task_of(&self, pc: u16) -> Option<u8> {
        self.bounds
            .iter()
            .position(|(lo, hi)| *lo <= pc && pc <= *hi)
            .map(|i| i as u8)
    }

    /// The all-available value of the availability word.
    pub fn ar_all_set(&self) -> u16 {
        (((1u32 << self.n_tasks) - 1) & 0xFFFF) as u16
    }

    fn header_line(&self) -> String {
        let mut s = String::from("# pair-trace v1");
        let iv = |name: &str, i: Interval| format!(" {name}={:04x}..{:04x}", i.start, i.end);
        s.push_str(&iv("pmem", self.pmem));
        s.push_str(&iv("tr", self.tr));
        s.push_str(&iv("rtos", self.rtos));
        s.push_str(&iv("sw", self.sw));
        s.push_str(&iv("d", self.d));
        s.push_str(&iv("dpair", self.d_pair));
        let _ = write!(s, " sw_exit={:04x}", self.sw_exit);
        let _ = write!(s, " ntasks={}", self.n_tasks);
        for (i, (lo, hi)) in self.bounds.iter().enumerate() {
            let _ = write!(s, " task{i}={lo:04x}..{hi:04x}");
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("trace line {line}: {msg}")]
pub struct TraceParseError {
    pub line: usize,
    pub msg: String,
}

fn opt_task(v: Option<u8>) -> String {
    match v {
        Some(i) => i.to_string(),
        None => "-".to_string(),
    }
}

fn fmt_record(r: &TraceRecord) -> String {
    format!(
        "{},{:04x},{},{},{},{},{},{},{:04x},{},{},{},{},{:04x},{},{}",
        r.cycle,
        r.pc,
        r.region.token(),
        opt_task(r.task_id),
        opt_task(r.latched_task),
        r.instr_class.token(),
        u8::from(r.w_en),
        u8::from(r.r_en),
        r.d_addr,
        u8::from(r.irq),
        u8::from(r.violation_im),
        u8::from(r.violation_pair),
        u8::from(r.trigger),
        r.ar_en,
        r.trigger_state.token(),
        r.ar_state.token(),
    )
}

/// Serializes metadata plus records into the trace CSV format.
pub fn to_csv_string(meta: &TraceMeta, records: &[TraceRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 64 + 256);
    out.push_str(&meta.header_line());
    out.push('\n');
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&fmt_record(r));
        out.push('\n');
    }
    out
}

fn parse_hex4(s: &str, line: usize) -> Result<u16, TraceParseError> {
    u16::from_str_radix(s, 16).map_err(|_| TraceParseError {
        line,
        msg: format!("bad hex field `{s}`"),
    })
}

fn parse_bool(s: &str, line: usize) -> Result<bool, TraceParseError> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(TraceParseError { line, msg: format!("bad boolean `{s}`") }),
    }
}

fn parse_opt_task(s: &str, line: usize) -> Result<Option<u8>, TraceParseError> {
    if s == "-" {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| TraceParseError {
        line,
        msg: format!("bad task id `{s}`"),
    })
}

fn parse_meta(line: &str) -> Result<TraceMeta, TraceParseError> {
    let err = |msg: String| TraceParseError { line: 1, msg };
    let mut pairs = std::collections::BTreeMap::new();
    for tok in line.trim_start_matches('#').split_whitespace() {
        if let Some((k, v)) = tok.split_once('=') {
            pairs.insert(k.to_string(), v.to_string());
        }
    }
    let iv = |k: &str| -> Result<Interval, TraceParseError> {
        let v = pairs.get(k).ok_or_else(|| err(format!("missing `{k}`")))?;
        let (a, b) = v.split_once("..").ok_or_else(|| err(format!("bad interval `{v}`")))?;
        Ok(Interval::new(parse_hex4(a, 1)?, parse_hex4(b, 1)?))
    };
    let n_tasks: u8 = pairs
        .get("ntasks")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| err("missing `ntasks`".into()))?;
    let mut bounds = Vec::new();
    for i in 0..n_tasks {
        let v = iv(&format!("task{i}"))?;
        bounds.push((v.start, v.end));
    }
    Ok(TraceMeta {
        pmem: iv("pmem")?,
        tr: iv("tr")?,
        rtos: iv("rtos")?,
        sw: iv("sw")?,
        d: iv("d")?,
        d_pair: iv("dpair")?,
        sw_exit: pairs
            .get("sw_exit")
            .ok_or_else(|| err("missing `sw_exit`".into()))
            .and_then(|v| parse_hex4(v, 1))?,
        n_tasks,
        bounds,
    })
}

/// Parses a trace CSV produced by [`to_csv_string`].
pub fn from_csv_str(text: &str) -> Result<(TraceMeta, Vec<TraceRecord>), TraceParseError> {
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or(TraceParseError { line: 1, msg: "empty trace".into() })?;
    if !first.starts_with('#') {
        return Err(TraceParseError {
            line: 1,
            msg: "missing metadata line (expected `# pair-trace v1 ...`)".into(),
        });
    }
    let meta = parse_meta(first)?;
    let (_, header) = lines.next().ok_or(TraceParseError { line: 2, msg: "missing header".into() })?;
    if header != CSV_HEADER {
        return Err(TraceParseError { line: 2, msg: "unexpected column header".into() });
    }
    let mut records = Vec::new();
    for (idx, row) in lines {
        let line = idx + 1;
        if row.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = row.split(',').collect();
        if f.len() != 16 {
            return Err(TraceParseError { line, msg: format!("expected 16 fields, got {}", f.len()) });
        }
        let err = |msg: String| TraceParseError { line, msg };
        records.push(TraceRecord {
            cycle: f[0].parse().map_err(|_| err(format!("bad cycle `{}`", f[0])))?,
            pc: parse_hex4(f[1], line)?,
            region: Region::from_token(f[2]).ok_or_else(|| err(format!("bad region `{}`", f[2])))?,
            task_id: parse_opt_task(f[3], line)?,
            latched_task: parse_opt_task(f[4], line)?,
            instr_class: InstrClass::from_token(f[5])
                .ok_or_else(|| err(format!("bad instruction class `{}`", f[5])))?,
            w_en: parse_bool(f[6], line)?,
            r_en: parse_bool(f[7], line)?,
            d_addr: parse_hex4(f[8], line)?,
            irq: parse_bool(f[9], line)?,
            violation_im: parse_bool(f[10], line)?,
            violation_pair: parse_bool(f[11], line)?,
            trigger: parse_bool(f[12], line)?,
            ar_en: parse_hex4(f[13], line)?,
            trigger_state: TriggerState::from_token(f[14])
                .ok_or_else(|| err(format!("bad trigger state `{}`", f[14])))?,
            ar_state: ArState::from_token(f[15])
                .ok_or_else(|| err(format!("bad ar state `{}`", f[15])))?,
        });
    }
    Ok((meta, records))
}
