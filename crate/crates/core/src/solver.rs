//! Exact 0/1 branch-and-bound with bounds propagation.
//!
//! Every constraint is normalized to `sum c_i x_i <= rhs`. For each row we
//! track its minimum activity over the current partial assignment, which
//! both detects conflicts and forces free variables whose coefficient
//! exceeds the remaining slack. The objective participates as one more row
//! whose right-hand side tightens to `incumbent - 1` (scaled integers), so a
//! later leaf is accepted only if it is strictly better and the first
//! optimum found in search order wins ties.
//!
//! Search is depth-first, branching on the lowest-id free variable (or the
//! lowest-id auxiliary one first, see [`BranchOrder`]) and trying its hint
//! before the complement, or 0 first when the variable has no hint.

use std::time::{Duration, Instant};

use num_rational::Ratio;

use crate::encoder::{Family, IlpProblem, LinearConstraint, Relation, Sense, VarKind};
use crate::error::{CfxError, Result};

pub const DEFAULT_NODE_CAP: u64 = 10_000_000;

/// Order in which free variables are branched on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BranchOrder {
    /// Lowest variable id first.
    #[default]
    Ascending,
    /// Auxiliary variables (ids past the decision variables) first, each
    /// block in ascending id order.
    AuxiliaryFirst,
    /// `AuxiliaryFirst` when the problem has term selectors, whose choice
    /// fixes whole paths at once; `Ascending` otherwise.
    Auto,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SolverConfig {
    pub node_cap: u64,
    pub time_limit: Option<Duration>,
    pub branching: BranchOrder,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { node_cap: DEFAULT_NODE_CAP, time_limit: None, branching: BranchOrder::Ascending }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    /// Node or time cap hit; the assignment, if any, is the best found.
    CapExceeded,
}

/// Deterministic counters; no timings, so results are reproducible.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SolveStats {
    pub nodes: u64,
    pub incumbents: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Solution {
    pub status: SolveStatus,
    pub assignment: Option<Vec<bool>>,
    /// Objective numerator over `denominator`.
    pub objective: i64,
    pub denominator: i64,
    pub stats: SolveStats,
}

impl Solution {
    pub fn objective_value(&self) -> Ratio<i64> {
        Ratio::new(self.objective, self.denominator)
    }

    /// The optimal assignment, or the matching error.
    pub fn into_optimal(self) -> Result<(Vec<bool>, Ratio<i64>, SolveStats)> {
        match self.status {
            SolveStatus::Optimal => {
                let value = self.objective_value();
                Ok((self.assignment.expect("optimal solutions carry an assignment"), value, self.stats))
            }
            SolveStatus::Infeasible => Err(CfxError::Infeasible),
            SolveStatus::CapExceeded => Err(CfxError::CapExceeded(format!(
                "search stopped after {} nodes without proving optimality",
                self.stats.nodes
            ))),
        }
    }
}

struct Row {
    vars: Vec<u32>,
    coeffs: Vec<i64>,
    rhs: i64,
    min_act: i64,
    max_abs: i64,
}

const FREE: i8 = -1;

struct Search<'a> {
    rows: Vec<Row>,
    /// (row, coefficient) occurrences per variable.
    occurs: Vec<Vec<(u32, i64)>>,
    value: Vec<i8>,
    trail: Vec<u32>,
    queue: Vec<u32>,
    queued: Vec<bool>,
    hints: &'a [Option<bool>],
    obj_row: Option<usize>,
    /// Sign applied to the objective so that search always minimizes.
    obj_sign: i64,
    obj_constant: i64,
}

impl<'a> Search<'a> {
    fn new(problem: &'a IlpProblem) -> Self {
        let n = problem.num_vars();
        let mut rows = Vec::new();
        let mut push = |coeffs: &[(usize, i64)], rhs: i64, negate: bool| {
            let s = if negate { -1 } else { 1 };
            let vars: Vec<u32> = coeffs.iter().map(|&(v, _)| v as u32).collect();
            let cs: Vec<i64> = coeffs.iter().map(|&(_, c)| c * s).collect();
            rows.push(Row {
                min_act: cs.iter().filter(|c| **c < 0).sum(),
                max_abs: cs.iter().map(|c| c.abs()).max().unwrap_or(0),
                vars,
                coeffs: cs,
                rhs: rhs * s,
            });
        };
        for c in problem.constraints() {
            match c.relation {
                Relation::Le => push(&c.coeffs, c.rhs, false),
                Relation::Ge => push(&c.coeffs, c.rhs, true),
                Relation::Eq => {
                    push(&c.coeffs, c.rhs, false);
                    push(&c.coeffs, c.rhs, true);
                }
            }
        }
        let obj = problem.objective();
        let obj_sign = match problem.sense() {
            Sense::Minimize => 1,
            Sense::Maximize => -1,
        };
        let obj_row = if obj.coeffs.is_empty() {
            None
        } else {
            let coeffs: Vec<(usize, i64)> = obj.coeffs.iter().map(|&(v, c)| (v, c * obj_sign)).collect();
            push(&coeffs, i64::MAX / 4, false);
            Some(rows.len() - 1)
        };
        let mut occurs = vec![Vec::new(); n];
        for (r, row) in rows.iter().enumerate() {
            for (&v, &c) in row.vars.iter().zip(&row.coeffs) {
                occurs[v as usize].push((r as u32, c));
            }
        }
        let queued = vec![false; rows.len()];
        Search {
            rows,
            occurs,
            value: vec![FREE; n],
            trail: Vec::new(),
            queue: Vec::new(),
            queued,
            hints: problem.hints(),
            obj_row,
            obj_sign,
            obj_constant: obj.constant * obj_sign,
        }
    }

    fn assign(&mut self, var: usize, val: bool) {
        debug_assert_eq!(self.value[var], FREE);
        self.value[var] = val as i8;
        self.trail.push(var as u32);
        for &(r, c) in &self.occurs[var] {
            // min_act already counts negative coefficients as taken
            let delta = match (val, c > 0) {
                (true, true) => c,
                (false, false) => -c,
                _ => continue,
            };
            self.rows[r as usize].min_act += delta;
            if !self.queued[r as usize] {
                self.queued[r as usize] = true;
                self.queue.push(r);
            }
        }
    }

    fn undo_to(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let var = self.trail.pop().unwrap() as usize;
            let val = self.value[var] == 1;
            self.value[var] = FREE;
            for &(r, c) in &self.occurs[var] {
                let delta = match (val, c > 0) {
                    (true, true) => c,
                    (false, false) => -c,
                    _ => continue,
                };
                self.rows[r as usize].min_act -= delta;
            }
        }
    }

    fn clear_queue(&mut self) {
        for r in self.queue.drain(..) {
            self.queued[r as usize] = false;
        }
    }

    /// Run to fixpoint; false on conflict.
    fn propagate(&mut self) -> bool {
        if let Some(o) = self.obj_row {
            if !self.queued[o] {
                self.queued[o] = true;
                self.queue.push(o as u32);
            }
        }
        while let Some(r) = self.queue.pop() {
            let r = r as usize;
            self.queued[r] = false;
            let slack = self.rows[r].rhs - self.rows[r].min_act;
            if slack < 0 {
                self.clear_queue();
                return false;
            }
            if self.rows[r].max_abs <= slack {
                continue;
            }
            let mut forced = Vec::new();
            {
                let row = &self.rows[r];
                for (&v, &c) in row.vars.iter().zip(&row.coeffs) {
                    if self.value[v as usize] == FREE && c.abs() > slack {
                        forced.push((v as usize, c < 0));
                    }
                }
            }
            for (v, val) in forced {
                if self.value[v] == FREE {
                    self.assign(v, val);
                }
            }
        }
        true
    }

    fn all_rows_hold(&self) -> bool {
        self.rows.iter().all(|r| r.min_act <= r.rhs)
    }
}

/// Solve to proven optimality, or stop at the node/time cap.
pub fn solve(problem: &IlpProblem, config: &SolverConfig) -> Solution {
    let deadline = config.time_limit.map(|d| Instant::now() + d);
    let denominator = problem.objective().denominator;
    let mut stats = SolveStats::default();
    let infeasible = |stats| Solution { status: SolveStatus::Infeasible, assignment: None, objective: 0, denominator, stats };
    if problem.is_trivially_infeasible() {
        return infeasible(stats);
    }

    let mut s = Search::new(problem);
    for (&v, &b) in problem.fixed() {
        s.assign(v, b);
    }
    // the first propagation must look at every row, not only touched ones
    for r in 0..s.rows.len() {
        if !s.queued[r] {
            s.queued[r] = true;
            s.queue.push(r as u32);
        }
    }
    if !s.propagate() {
        return infeasible(stats);
    }

    let n = problem.num_vars();
    let branching = match config.branching {
        BranchOrder::Auto if problem.variables().iter().any(|v| matches!(v.kind, VarKind::TermDelta { .. })) => {
            BranchOrder::AuxiliaryFirst
        }
        BranchOrder::Auto => BranchOrder::Ascending,
        b => b,
    };
    let order: Vec<usize> = match branching {
        BranchOrder::Ascending | BranchOrder::Auto => (0..n).collect(),
        BranchOrder::AuxiliaryFirst => (problem.decision_vars().end..n).chain(problem.decision_vars()).collect(),
    };
    let mut best: Option<(Vec<bool>, i64)> = None;
    // (position in `order`, trail mark, second value still to try)
    let mut stack: Vec<(usize, usize, Option<bool>)> = Vec::new();
    let mut next_free = 0usize;
    let mut capped = false;

    'search: loop {
        // descend: the current partial assignment is propagated and conflict-free
        while next_free < n && s.value[order[next_free]] != FREE {
            next_free += 1;
        }
        if next_free == n {
            debug_assert!(s.all_rows_hold());
            let assignment: Vec<bool> = s.value.iter().map(|&v| v == 1).collect();
            let scaled = problem.objective().scaled_value(&assignment);
            stats.incumbents += 1;
            if let Some(o) = s.obj_row {
                s.rows[o].rhs = scaled * s.obj_sign - s.obj_constant - 1;
            }
            best = Some((assignment, scaled));
            if s.obj_row.is_none() {
                // pure feasibility: the first solution is optimal
                break 'search;
            }
        } else {
            stats.nodes += 1;
            if stats.nodes > config.node_cap || (stats.nodes % 1024 == 0 && deadline.is_some_and(|d| Instant::now() >= d)) {
                capped = true;
                break 'search;
            }
            let var = order[next_free];
            let first = s.hints[var].unwrap_or(false);
            let mark = s.trail.len();
            stack.push((next_free, mark, Some(!first)));
            s.assign(var, first);
            if s.propagate() {
                continue 'search;
            }
        }
        // backtrack to the deepest decision with an untried value
        loop {
            let Some(top) = stack.last_mut() else {
                break 'search;
            };
            let (pos, mark, second) = *top;
            s.undo_to(mark);
            next_free = pos;
            match second {
                Some(val) => {
                    top.2 = None;
                    s.assign(order[pos], val);
                    if s.propagate() {
                        continue 'search;
                    }
                }
                None => {
                    stack.pop();
                }
            }
        }
    }

    let status = if capped { SolveStatus::CapExceeded } else if best.is_some() { SolveStatus::Optimal } else { SolveStatus::Infeasible };
    match best {
        Some((assignment, objective)) => Solution { status, assignment: Some(assignment), objective, denominator, stats },
        None => Solution { status, assignment: None, objective: 0, denominator, stats },
    }
}

/// Cut excluding one assignment of the decision variables:
/// `sum_{a_v = 0} x_v - sum_{a_v = 1} x_v >= 1 - |{v : a_v = 1}|`.
pub fn no_good(problem: &IlpProblem, assignment: &[bool]) -> LinearConstraint {
    let mut ones = 0;
    let coeffs = problem
        .decision_vars()
        .map(|v| {
            if assignment[v] {
                ones += 1;
                (v, -1)
            } else {
                (v, 1)
            }
        })
        .collect();
    LinearConstraint { coeffs, relation: Relation::Ge, rhs: 1 - ones, family: Family::NoGood }
}

/// Up to `k` best solutions with pairwise distinct decision-variable
/// assignments, in non-decreasing objective order (non-increasing when
/// maximizing). The returned status is that of the last solve.
pub fn enumerate_topk(problem: &IlpProblem, k: usize, config: &SolverConfig) -> (Vec<Solution>, SolveStatus) {
    assert!(k >= 1, "k must be positive");
    let mut work = problem.clone();
    let mut out = Vec::new();
    let mut status = SolveStatus::Infeasible;
    while out.len() < k {
        let sol = solve(&work, config);
        status = sol.status;
        if sol.status != SolveStatus::Optimal {
            break;
        }
        if work.decision_vars().is_empty() {
            out.push(sol);
            break;
        }
        work.push_constraint(no_good(&work, sol.assignment.as_ref().unwrap()));
        out.push(sol);
    }
    if out.len() == k || (status == SolveStatus::Infeasible && !out.is_empty()) {
        status = SolveStatus::Optimal;
    }
    (out, status)
}
