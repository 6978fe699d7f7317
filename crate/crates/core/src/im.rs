//! Integrity monitor instantiation: per-task shadow stacks, per-task
//! indirect-branch tables, and inter-task stack-write isolation.
//!
//! All checks are task-aware: operations retired outside any task's bounds
//! bypass the monitor entirely. Violations are reported as a boolean, never
//! as an error; a full shadow stack fails closed.

use std::collections::{BTreeMap, BTreeSet};

/// Stack region of one task. `base` is the initial stack pointer, the stack
/// grows down toward `limit`; both ends are inside the region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StackRegion {
    pub base: u16,
    pub limit: u16,
}

impl StackRegion {
    pub fn contains(&self, addr: u16) -> bool {
        self.limit <= addr && addr <= self.base
    }
}

/// Protected copies of outstanding return addresses, innermost last.
#[derive(Debug, Clone)]
pub struct ShadowStack {
    entries: Vec<u16>,
    capacity: usize,
}

impl ShadowStack {
    fn new(capacity: usize) -> Self {
        Self { entries: Vec::new(), capacity }
    }

    pub fn depth(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[u16] {
        &self.entries
    }
}

/// Per-site sets of valid indirect branch targets.
pub type IndirectBranchTable = BTreeMap<u16, BTreeSet<u16>>;

#[derive(Debug, Clone)]
pub struct ImConfig {
    pub shadow_capacity: usize,
}

impl Default for ImConfig {
    fn default() -> Self {
        Self { shadow_capacity: 32 }
    }
}

#[derive(Debug, Clone)]
struct TaskIm {
    shadow: ShadowStack,
    ibt: IndirectBranchTable,
    stack: StackRegion,
}

/// State of the integrity monitor: one shadow stack, branch table and stack
/// region per task.
#[derive(Debug, Clone)]
pub struct ImState {
    tasks: Vec<TaskIm>,
    capacity: usize,
}

impl ImState {
    pub fn new(
        n_tasks: u8,
        config: &ImConfig,
        ibts: &BTreeMap<u8, IndirectBranchTable>,
        stacks: &BTreeMap<u8, StackRegion>,
    ) -> Self {
        let tasks = (0..n_tasks)
            .map(|i| TaskIm {
                shadow: ShadowStack::new(config.shadow_capacity),
                ibt: ibts.get(&i).cloned().unwrap_or_default(),
                stack: stacks.get(&i).copied().unwrap_or(StackRegion { base: 0, limit: 0 }),
            })
            .collect();
        Self { tasks, capacity: config.shadow_capacity }
    }

    /// Records a call. Violation iff the shadow stack would overflow.
    pub fn im_call(&mut self, task: u8, ret_addr: u16) -> bool {
        let shadow = &mut self.tasks[usize::from(task)].shadow;
        if shadow.entries.len() >= shadow.capacity {
            return true;
        }
        shadow.entries.push(ret_addr);
        false
    }

    /// Checks a return. Violation iff the shadow stack is empty or the popped
    /// protected copy differs from the address actually jumped to.
    pub fn im_ret(&mut self, task: u8, actual_target: u16) -> bool {
        let shadow = &mut self.tasks[usize::from(task)].shadow;
        match shadow.entries.pop() {
            Some(expected) => expected != actual_target,
            None => true,
        }
    }

    /// Checks an indirect branch. Closed world: an undeclared site is a
    /// violation, as is any target outside the site's declared set.
    pub fn im_branch(&self, task: u8, site: u16, target: u16) -> bool {
        match self.tasks[usize::from(task)].ibt.get(&site) {
            Some(targets) => !targets.contains(&target),
            None => true,
        }
    }

    /// Checks a data access. Violation iff it is a write landing inside some
    /// other task's stack region; reads are unrestricted.
    pub fn im_data(&self, task: u8, w_en: bool, d_addr: u16) -> bool {
        if !w_en {
            return false;
        }
        self.tasks
            .iter()
            .enumerate()
            .any(|(j, t)| j != usize::from(task) && t.stack.contains(d_addr))
    }

    pub fn shadow_depth(&self, task: u8) -> usize {
        self.tasks[usize::from(task)].shadow.depth()
    }

    pub fn shadow_entries(&self, task: u8) -> &[u16] {
        self.tasks[usize::from(task)].shadow.entries()
    }

    /// Clears one task's shadow stack (kill or fresh restart).
    pub fn reset_task(&mut self, task: u8) {
        let cap = self.capacity;
        self.tasks[usize::from(task)].shadow = ShadowStack::new(cap);
    }

    pub fn reset_all(&mut self) {
        for i in 0..self.tasks.len() {
            self.reset_task(i as u8);
        }
    }

    /// Adds a target to a site's declared set (test support: a post-hoc
    /// declaration must flip the branch verdict).
    pub fn declare_target(&mut self, task: u8, site: u16, target: u16) {
        self.tasks[usize::from(task)]
            .ibt
            .entry(site)
            .or_default()
            .insert(target);
    }
}
