//! Memory map model: region classification, per-task bounds, and the byte
//! accounting for the protected data block that backs the monitor.

use std::fmt;

use thiserror::Error;

/// Inclusive byte-address interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interval {
    pub start: u16,
    pub end: u16,
}

impl Interval {
    pub fn new(start: u16, end: u16) -> Self {
        assert!(start <= end, "empty interval {start:#06x}..{end:#06x}");
        Self { start, end }
    }

    pub fn contains(&self, addr: u16) -> bool {
        self.start <= addr && addr <= self.end
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn byte_len(&self) -> u32 {
        u32::from(self.end) - u32::from(self.start) + 1
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04x}..{:04x}", self.start, self.end)
    }
}

/// Region tag; classification is total over the 16-bit address space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Tr,
    Rtos,
    Sw,
    D,
    DPair,
    Unmapped,
}

impl Region {
    pub fn token(&self) -> &'static str {
        match self {
            Region::Tr => "TR",
            Region::Rtos => "RTOS",
            Region::Sw => "SW",
            Region::D => "D",
            Region::DPair => "D_PAIR",
            Region::Unmapped => "UNMAPPED",
        }
    }

    pub fn from_token(s: &str) -> Option<Region> {
        Some(match s {
            "TR" => Region::Tr,
            "RTOS" => Region::Rtos,
            "SW" => Region::Sw,
            "D" => Region::D,
            "D_PAIR" => Region::DPair,
            "UNMAPPED" => Region::Unmapped,
            _ => return None,
        })
    }
}

/// Program-memory bounds of one task, inclusive at both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskBounds {
    pub t_min: u16,
    pub t_max: u16,
}

impl TaskBounds {
    pub fn contains(&self, pc: u16) -> bool {
        self.t_min <= pc && pc <= self.t_max
    }

    pub fn as_interval(&self) -> Interval {
        Interval::new(self.t_min, self.t_max)
    }
}

impl fmt::Display for TaskBounds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04x}..{:04x}", self.t_min, self.t_max)
    }
}

/// Maximum task count; availability bits must fit one 16-bit word.
pub const MAX_TASKS: u8 = 16;

/// Full memory map: address ranges, the five named regions, task bounds, the
/// trusted-software entry/exit points and the update key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryLayout {
    pub pmem: Interval,
    pub dmem: Interval,
    pub tr: Interval,
    pub rtos: Interval,
    pub sw: Interval,
    pub d: Interval,
    pub d_pair: Interval,
    pub sw_exit: u16,
    pub trampoline_entry: u16,
    pub updater_entry: u16,
    pub n_tasks: u8,
    pub task_bounds: Vec<TaskBounds>,
    pub key: [u8; 16],
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("regions {0} and {1} overlap")]
    OverlappingRegions(&'static str, &'static str),
    #[error("region {region} ({interval}) not inside {parent}")]
    RegionOutsideParent {
        region: &'static str,
        parent: &'static str,
        interval: Interval,
    },
    #[error("task {task} bounds {bounds} outside the task region")]
    BoundsOutsideTr { task: u8, bounds: TaskBounds },
    #[error("task {task} bounds reversed ({bounds})")]
    ReversedBounds { task: u8, bounds: TaskBounds },
    #[error("task {a} and task {b} bounds overlap")]
    TaskBoundsOverlap { a: u8, b: u8 },
    #[error("{which} ({addr:04x}) outside the trusted software region")]
    ExitOutsideSw { which: &'static str, addr: u16 },
    #[error("{n} tasks exceed the {MAX_TASKS}-bit availability word")]
    TooManyTasks { n: usize },
    #[error("at least one task is required")]
    NoTasks,
    #[error("bounds table holds {given} entries for {n} tasks")]
    BoundsCountMismatch { given: usize, n: u8 },
    #[error("protected data region holds {have} bytes, needs {need}")]
    DPairTooSmall { need: u32, have: u32 },
}

impl MemoryLayout {
    /// Maps an address to the unique region containing it.
    pub fn classify(&self, addr: u16) -> Region {
        if self.tr.contains(addr) {
            Region::Tr
        } else if self.rtos.contains(addr) {
            Region::Rtos
        } else if self.sw.contains(addr) {
            Region::Sw
        } else if self.d_pair.contains(addr) {
            Region::DPair
        } else if self.d.contains(addr) {
            Region::D
        } else {
            Region::Unmapped
        }
    }

    /// Identifies the task whose bounds contain `pc`, inclusive at both ends.
    pub fn task_of(&self, pc: u16) -> Option<u8> {
        self.task_bounds
            .iter()
            .position(|b| b.contains(pc))
            .map(|i| i as u8)
    }

    /// Checks every structural invariant; all violations are reported, not
    /// just the first.
    pub fn validate(&self) -> Result<(), Vec<ValidationError>> {
        let mut errs = Vec::new();
        let named: [(&'static str, Interval); 5] = [
            ("tr", self.tr),
            ("rtos", self.rtos),
            ("sw", self.sw),
            ("d", self.d),
            ("dpair", self.d_pair),
        ];
        for i in 0..named.len() {
            for j in i + 1..named.len() {
                if named[i].1.overlaps(&named[j].1) {
                    errs.push(ValidationError::OverlappingRegions(named[i].0, named[j].0));
                }
            }
        }
        for (name, iv) in &named[..3] {
            if !(self.pmem.contains(iv.start) && self.pmem.contains(iv.end)) {
                errs.push(ValidationError::RegionOutsideParent {
                    region: name,
                    parent: "pmem",
                    interval: *iv,
                });
            }
        }
        for (name, iv) in &named[3..] {
            if !(self.dmem.contains(iv.start) && self.dmem.contains(iv.end)) {
                errs.push(ValidationError::RegionOutsideParent {
                    region: name,
                    parent: "dmem",
                    interval: *iv,
                });
            }
        }
        if self.n_tasks == 0 {
            errs.push(ValidationError::NoTasks);
        }
        if usize::from(self.n_tasks) > usize::from(MAX_TASKS) {
            errs.push(ValidationError::TooManyTasks {
                n: usize::from(self.n_tasks),
            });
        }
        if self.task_bounds.len() != usize::from(self.n_tasks) {
            errs.push(ValidationError::BoundsCountMismatch {
                given: self.task_bounds.len(),
                n: self.n_tasks,
            });
        }
        for (i, b) in self.task_bounds.iter().enumerate() {
            let task = i as u8;
            if b.t_min > b.t_max {
                errs.push(ValidationError::ReversedBounds { task, bounds: *b });
                continue;
            }
            if !(self.tr.contains(b.t_min) && self.tr.contains(b.t_max)) {
                errs.push(ValidationError::BoundsOutsideTr { task, bounds: *b });
            }
        }
        for i in 0..self.task_bounds.len() {
            for j in i + 1..self.task_bounds.len() {
                let (a, b) = (self.task_bounds[i], self.task_bounds[j]);
                if a.t_min <= a.t_max
                    && b.t_min <= b.t_max
                    && a.as_interval().overlaps(&b.as_interval())
                {
                    errs.push(ValidationError::TaskBoundsOverlap {
                        a: i as u8,
                        b: j as u8,
                    });
                }
            }
        }
        for (which, addr) in [
            ("sw_exit", self.sw_exit),
            ("trampoline_entry", self.trampoline_entry),
            ("updater_entry", self.updater_entry),
        ] {
            if !self.sw.contains(addr) {
                errs.push(ValidationError::ExitOutsideSw { which, addr });
            }
        }
        let need = Self::d_pair_bytes(self.n_tasks);
        if self.d_pair.byte_len() < need {
            errs.push(ValidationError::DPairTooSmall {
                need,
                have: self.d_pair.byte_len(),
            });
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }

    // Protected data block layout, offsets from d_pair.start:
    //   0          task count (2 bytes)
    //   2          bounds table (t_min, t_max words per task, 4*N bytes)
    //   2 + 4N     update key (16 bytes)
    //   18 + 4N    status block: latched task id (2), saved resume pc (2)
    pub fn d_pair_bytes(n_tasks: u8) -> u32 {
        22 + 4 * u32::from(n_tasks)
    }

    pub fn dpair_n_addr(&self) -> u16 {
        self.d_pair.start
    }

    pub fn dpair_bounds_addr(&self) -> u16 {
        self.d_pair.start + 2
    }

    pub fn dpair_key_addr(&self) -> u16 {
        self.d_pair.start + 2 + 4 * u16::from(self.n_tasks)
    }

    pub fn dpair_latched_addr(&self) -> u16 {
        self.d_pair.start + 18 + 4 * u16::from(self.n_tasks)
    }

    pub fn dpair_saved_pc_addr(&self) -> u16 {
        self.d_pair.start + 20 + 4 * u16::from(self.n_tasks)
    }

    pub fn accounting(&self) -> DPairAccounting {
        DPairAccounting {
            n_tasks: self.n_tasks,
        }
    }
}

/// Byte breakdown of the protected data block, alongside the published
/// `2 + 2*N` figure for the same block. The two disagree because the
/// published figure cannot cover both ends of every bounds pair at two bytes
/// each; both numbers are reported rather than reconciled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DPairAccounting {
    pub n_tasks: u8,
}

impl DPairAccounting {
    pub fn n_field_bytes(&self) -> u32 {
        2
    }

    pub fn bounds_table_bytes(&self) -> u32 {
        4 * u32::from(self.n_tasks)
    }

    pub fn key_bytes(&self) -> u32 {
        16
    }

    pub fn status_block_bytes(&self) -> u32 {
        4
    }

    pub fn total_bytes(&self) -> u32 {
        self.n_field_bytes() + self.bounds_table_bytes() + self.key_bytes() + self.status_block_bytes()
    }

    pub fn published_formula_bytes(&self) -> u32 {
        2 + 2 * u32::from(self.n_tasks)
    }
}

impl fmt::Display for DPairAccounting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "protected data block, N = {}", self.n_tasks)?;
        writeln!(f, "  task count field : {:>3} bytes", self.n_field_bytes())?;
        writeln!(f, "  bounds table     : {:>3} bytes", self.bounds_table_bytes())?;
        writeln!(f, "  update key       : {:>3} bytes", self.key_bytes())?;
        writeln!(f, "  status block     : {:>3} bytes", self.status_block_bytes())?;
        writeln!(f, "  total            : {:>3} bytes", self.total_bytes())?;
        write!(
            f,
            "  published figure : {:>3} bytes (2 + 2*N; excludes key, status block and half of each bounds pair)",
            self.published_formula_bytes()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("layout config line {line}: {msg}")]
pub struct LayoutParseError {
    pub line: usize,
    pub msg: String,
}

fn parse_hex16(s: &str) -> Option<u16> {
    let s = s.trim();
    if let Some(hex) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        u16::from_str_radix(hex, 16).ok()
    } else {
        s.parse().ok()
    }
}

fn parse_interval(s: &str) -> Option<Interval> {
    let (a, b) = s.split_once("..")?;
    let (start, end) = (parse_hex16(a)?, parse_hex16(b)?);
    if start <= end {
        Some(Interval::new(start, end))
    } else {
        None
    }
}

fn parse_key_hex(s: &str) -> Option<[u8; 16]> {
    let s = s.trim();
    if s.len() != 32 || !s.chars().all(|c| c.is_ascii_hexdigit()) {
        return None;
    }
    let mut out = [0u8; 16];
    for (i, byte) in out.iter_mut().enumerate() {
        *byte = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).ok()?;
    }
    Some(out)
}

/// Parses the line-oriented `key = value` layout config format.
pub fn parse_config(text: &str) -> Result<MemoryLayout, LayoutParseError> {
    let mut intervals: std::collections::BTreeMap<String, Interval> = Default::default();
    let mut addrs: std::collections::BTreeMap<String, u16> = Default::default();
    let mut n_tasks: Option<u8> = None;
    let mut key: Option<[u8; 16]> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (name, value) = line.split_once('=').ok_or_else(|| LayoutParseError {
            line: line_no,
            msg: format!("expected `name = value`, got `{line}`"),
        })?;
        let name = name.trim();
        let value = value.trim();
        let err = |msg: String| LayoutParseError { line: line_no, msg };
        match name {
            "pmem" | "dmem" | "tr" | "rtos" | "sw" | "d" | "dpair" => {
                let iv = parse_interval(value)
                    .ok_or_else(|| err(format!("bad interval `{value}` for {name}")))?;
                intervals.insert(name.to_string(), iv);
            }
            "sw_exit" | "trampoline_entry" | "updater_entry" => {
                let a = parse_hex16(value)
                    .ok_or_else(|| err(format!("bad address `{value}` for {name}")))?;
                addrs.insert(name.to_string(), a);
            }
            "ntasks" => {
                let n: u8 = value
                    .parse()
                    .map_err(|_| err(format!("bad task count `{value}`")))?;
                n_tasks = Some(n);
            }
            "key" => {
                key = Some(
                    parse_key_hex(value)
                        .ok_or_else(|| err("key must be 32 hex characters".into()))?,
                );
            }
            _ if name.starts_with("task") => {
                let idx: u8 = name[4..]
                    .parse()
                    .map_err(|_| err(format!("bad task key `{name}`")))?;
                let iv = parse_interval(value)
                    .ok_or_else(|| err(format!("bad interval `{value}` for {name}")))?;
                intervals.insert(format!("task{idx}"), iv);
            }
            _ => return Err(err(format!("unknown key `{name}`"))),
        }
    }

    let missing = |what: &str| LayoutParseError {
        line: 0,
        msg: format!("missing `{what}`"),
    };
    let iv = |k: &str| intervals.get(k).copied().ok_or_else(|| missing(k));
    let addr = |k: &str| addrs.get(k).copied().ok_or_else(|| missing(k));
    let n = n_tasks.ok_or_else(|| missing("ntasks"))?;
    let mut task_bounds = Vec::with_capacity(usize::from(n));
    for i in 0..n {
        let b = iv(&format!("task{i}"))?;
        task_bounds.push(TaskBounds {
            t_min: b.start,
            t_max: b.end,
        });
    }
    Ok(MemoryLayout {
        pmem: iv("pmem")?,
        dmem: iv("dmem")?,
        tr: iv("tr")?,
        rtos: iv("rtos")?,
        sw: iv("sw")?,
        d: iv("d")?,
        d_pair: iv("dpair")?,
        sw_exit: addr("sw_exit")?,
        trampoline_entry: addr("trampoline_entry")?,
        updater_entry: addr("updater_entry")?,
        n_tasks: n,
        task_bounds,
        key: key.ok_or_else(|| missing("key"))?,
    })
}

/// Renders a layout back into the config format accepted by [`parse_config`].
pub fn to_config_string(layout: &MemoryLayout) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    };
    let ivs = |iv: Interval| format!("0x{:04X}..0x{:04X}", iv.start, iv.end);
    kv("pmem", ivs(layout.pmem));
    kv("dmem", ivs(layout.dmem));
    kv("tr", ivs(layout.tr));
    kv("rtos", ivs(layout.rtos));
    kv("sw", ivs(layout.sw));
    kv("d", ivs(layout.d));
    kv("dpair", ivs(layout.d_pair));
    kv("sw_exit", format!("0x{:04X}", layout.sw_exit));
    kv("trampoline_entry", format!("0x{:04X}", layout.trampoline_entry));
    kv("updater_entry", format!("0x{:04X}", layout.updater_entry));
    kv("ntasks", layout.n_tasks.to_string());
    for (i, b) in layout.task_bounds.iter().enumerate() {
        kv(&format!("task{i}"), format!("0x{:04X}..0x{:04X}", b.t_min, b.t_max));
    }
    let key_hex: String = layout.key.iter().map(|b| format!("{b:02x}")).collect();
    kv("key", key_hex);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn test_layout(n: u8) -> MemoryLayout {
        let mut bounds = Vec::new();
        for i in 0..n {
            let min = 0x8100 + 0x0200 * u16::from(i);
            bounds.push(TaskBounds {
                t_min: min,
                t_max: min + 0x01FF,
            });
        }
        MemoryLayout {
            pmem: Interval::new(0x8000, 0xBFFF),
            dmem: Interval::new(0x0000, 0x2FFF),
            tr: Interval::new(0x8100, 0x9FFF),
            rtos: Interval::new(0x8000, 0x80FF),
            sw: Interval::new(0xA000, 0xA3FF),
            d: Interval::new(0x0100, 0x28FF),
            d_pair: Interval::new(0x2900, 0x29FF),
            sw_exit: 0xA1FC,
            trampoline_entry: 0xA000,
            updater_entry: 0xA040,
            n_tasks: n,
            task_bounds: bounds,
            key: *b"0123456789abcdef",
        }
    }

    #[test]
    fn classify_named_regions() {
        let l = test_layout(2);
        assert_eq!(l.classify(l.tr.start), Region::Tr);
        assert_eq!(l.classify(l.d_pair.start), Region::DPair);
        assert_eq!(l.classify(l.rtos.start), Region::Rtos);
        assert_eq!(l.classify(l.sw.end), Region::Sw);
        assert_eq!(l.classify(0x3000), Region::Unmapped);
    }

    #[test]
    fn classify_is_total_and_unique() {
        // Every address must land in exactly one region; sweep the full space
        // and recheck each tag against the raw interval definitions.
        let l = test_layout(3);
        for addr in 0..=u16::MAX {
            let tag = l.classify(addr);
            let memberships = [
                (l.tr.contains(addr), Region::Tr),
                (l.rtos.contains(addr), Region::Rtos),
                (l.sw.contains(addr), Region::Sw),
                (l.d_pair.contains(addr), Region::DPair),
                (l.d.contains(addr), Region::D),
            ];
            let hits: Vec<Region> = memberships
                .iter()
                .filter(|(inside, _)| *inside)
                .map(|(_, r)| *r)
                .collect();
            match hits.as_slice() {
                [] => assert_eq!(tag, Region::Unmapped, "addr {addr:04x}"),
                [only] => assert_eq!(tag, *only, "addr {addr:04x}"),
                _ => panic!("address {addr:04x} in more than one region"),
            }
        }
    }

    #[test]
    fn task_of_inclusive_bounds() {
        let l = test_layout(2);
        assert_eq!(l.task_of(l.task_bounds[0].t_min), Some(0));
        assert_eq!(l.task_of(l.task_bounds[0].t_max), Some(0));
        assert_eq!(l.task_of(l.rtos.start), None);
    }

    #[test]
    fn task_of_matches_exhaustive_scan() {
        let l = test_layout(4);
        for pc in l.pmem.start..=l.pmem.end {
            let expected = (0..l.n_tasks)
                .find(|&i| {
                    let b = l.task_bounds[usize::from(i)];
                    pc >= b.t_min && pc <= b.t_max
                });
            assert_eq!(l.task_of(pc), expected, "pc {pc:04x}");
        }
    }

    #[test]
    fn task_of_implies_tr() {
        let l = test_layout(3);
        for pc in 0..=u16::MAX {
            if l.task_of(pc).is_some() {
                assert_eq!(l.classify(pc), Region::Tr, "pc {pc:04x}");
            }
        }
    }

    #[test]
    fn validate_accepts_good_layout() {
        assert!(test_layout(3).validate().is_ok());
    }

    #[test]
    fn validate_rejects_overlapping_tasks() {
        let mut l = test_layout(2);
        l.task_bounds[1] = TaskBounds {
            t_min: l.task_bounds[0].t_max,
            t_max: l.task_bounds[0].t_max + 0x100,
        };
        let errs = l.validate().unwrap_err();
        assert!(errs
            .iter()
            .any(|e| matches!(e, ValidationError::TaskBoundsOverlap { a: 0, b: 1 })));
    }

    #[test]
    fn validate_rejects_exit_outside_sw() {
        let mut l = test_layout(2);
        l.sw_exit = l.rtos.start;
        let errs = l.validate().unwrap_err();
        assert!(errs
            .iter()
            .any(|e| matches!(e, ValidationError::ExitOutsideSw { which: "sw_exit", .. })));
    }

    #[test]
    fn validate_rejects_too_many_tasks() {
        let mut l = test_layout(2);
        l.n_tasks = 17;
        let errs = l.validate().unwrap_err();
        assert!(errs
            .iter()
            .any(|e| matches!(e, ValidationError::TooManyTasks { n: 17 })));
    }

    #[test]
    fn validate_requires_at_least_one_task() {
        let mut l = test_layout(1);
        l.n_tasks = 0;
        l.task_bounds.clear();
        let errs = l.validate().unwrap_err();
        assert!(errs.iter().any(|e| matches!(e, ValidationError::NoTasks)));
    }

    #[test]
    fn accounting_breakdown() {
        let two = test_layout(2).accounting();
        assert_eq!(two.total_bytes(), 30);
        assert_eq!(two.published_formula_bytes(), 6);
        let one = test_layout(1).accounting();
        assert_eq!(one.total_bytes(), 26);
        assert_eq!(one.published_formula_bytes(), 4);
    }

    #[test]
    fn accounting_matches_block_offsets() {
        let l = test_layout(3);
        let end = l.dpair_saved_pc_addr() + 2;
        assert_eq!(
            u32::from(end - l.d_pair.start),
            MemoryLayout::d_pair_bytes(3)
        );
        assert_eq!(MemoryLayout::d_pair_bytes(3), l.accounting().total_bytes());
    }

    #[test]
    fn config_round_trip() {
        let l = test_layout(3);
        let text = to_config_string(&l);
        let back = parse_config(&text).unwrap();
        assert_eq!(l, back);
    }

    #[test]
    fn config_rejects_unknown_key() {
        let err = parse_config("bogus = 0x1000\n").unwrap_err();
        assert!(err.msg.contains("unknown key"));
    }
}
