//! A small conflict-driven clause-learning SAT solver.
//!
//! The solver is incremental: clauses may be added between calls to
//! [`Solver::solve`], and each call may carry a list of assumption literals
//! that hold only for that call. Resource budgets (conflicts, wall-clock
//! deadline, external interrupt flag) turn an undecided search into
//! [`SolveStatus::Unknown`] instead of running unbounded.
//!
//! The engine follows the usual MiniSat layout: two watched literals,
//! VSIDS branching with phase saving, first-UIP learning with local
//! minimisation, Luby restarts and activity-based learnt clause deletion.

use std::fmt;
use std::ops::Not;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Instant;

mod heap;

use heap::VarHeap;

/// Propositional variable, numbered from 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub u32);

impl Var {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn pos(self) -> Lit {
        Lit::new(self, true)
    }

    pub fn neg(self) -> Lit {
        Lit::new(self, false)
    }
}

/// A literal: a variable with a polarity.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Lit(u32);

impl Lit {
    pub fn new(var: Var, positive: bool) -> Lit {
        Lit(var.0 << 1 | (!positive) as u32)
    }

    pub fn var(self) -> Var {
        Var(self.0 >> 1)
    }

    pub fn is_positive(self) -> bool {
        self.0 & 1 == 0
    }

    fn code(self) -> usize {
        self.0 as usize
    }

    /// DIMACS integer encoding (1-based, negative for negated literals).
    pub fn to_dimacs(self) -> i64 {
        let v = self.var().0 as i64 + 1;
        if self.is_positive() {
            v
        } else {
            -v
        }
    }

    pub fn from_dimacs(x: i64) -> Lit {
        assert!(x != 0, "0 is not a DIMACS literal");
        Lit::new(Var((x.unsigned_abs() - 1) as u32), x > 0)
    }
}

impl Not for Lit {
    type Output = Lit;
    fn not(self) -> Lit {
        Lit(self.0 ^ 1)
    }
}

impl fmt::Debug for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_dimacs())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Sat,
    Unsat,
    /// The budget ran out before the search was decided.
    Unknown,
}

/// Resource limits for one `solve` call. All limits are optional.
#[derive(Clone, Debug, Default)]
pub struct Budget {
    pub conflicts: Option<u64>,
    pub deadline: Option<Instant>,
    pub interrupt: Option<Arc<AtomicBool>>,
}

impl Budget {
    pub fn unlimited() -> Budget {
        Budget::default()
    }

    pub fn conflicts(n: u64) -> Budget {
        Budget {
            conflicts: Some(n),
            ..Budget::default()
        }
    }

    pub fn with_deadline(mut self, deadline: Instant) -> Budget {
        self.deadline = Some(deadline);
        self
    }
}

#[derive(Clone, Debug, Default)]
pub struct Stats {
    pub solves: u64,
    pub conflicts: u64,
    pub decisions: u64,
    pub propagations: u64,
    pub restarts: u64,
}

const UNDEF: i8 = 0;
const TRUE: i8 = 1;
const FALSE: i8 = -1;

type ClauseRef = u32;

struct Clause {
    lits: Vec<Lit>,
    learnt: bool,
    deleted: bool,
    activity: f64,
    lbd: u32,
}

#[derive(Clone, Copy)]
struct Watcher {
    cref: ClauseRef,
    blocker: Lit,
}

pub struct Solver {
    clauses: Vec<Clause>,
    learnts: Vec<ClauseRef>,
    watches: Vec<Vec<Watcher>>,
    assigns: Vec<i8>,
    level: Vec<u32>,
    reason: Vec<Option<ClauseRef>>,
    polarity: Vec<bool>,
    activity: Vec<f64>,
    seen: Vec<bool>,
    heap: VarHeap,
    trail: Vec<Lit>,
    trail_lim: Vec<usize>,
    qhead: usize,
    var_inc: f64,
    cla_inc: f64,
    ok: bool,
    model: Vec<bool>,
    max_learnts: f64,
    stats: Stats,
}

impl Default for Solver {
    fn default() -> Self {
        Solver::new()
    }
}

impl Solver {
    pub fn new() -> Solver {
        Solver {
            clauses: Vec::new(),
            learnts: Vec::new(),
            watches: Vec::new(),
            assigns: Vec::new(),
            level: Vec::new(),
            reason: Vec::new(),
            polarity: Vec::new(),
            activity: Vec::new(),
            seen: Vec::new(),
            heap: VarHeap::default(),
            trail: Vec::new(),
            trail_lim: Vec::new(),
            qhead: 0,
            var_inc: 1.0,
            cla_inc: 1.0,
            ok: true,
            model: Vec::new(),
            max_learnts: 0.0,
            stats: Stats::default(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.assigns.len()
    }

    pub fn stats(&self) -> &Stats {
        &self.stats
    }

    pub fn new_var(&mut self) -> Var {
        let v = Var(self.assigns.len() as u32);
        self.assigns.push(UNDEF);
        self.level.push(0);
        self.reason.push(None);
        self.polarity.push(false);
        self.activity.push(0.0);
        self.seen.push(false);
        self.watches.push(Vec::new());
        self.watches.push(Vec::new());
        self.heap.grow(v.index() + 1);
        self.heap.insert(v.index(), &self.activity);
        v
    }

    /// Makes sure variables `0..n` exist.
    pub fn ensure_vars(&mut self, n: usize) {
        while self.assigns.len() < n {
            self.new_var();
        }
    }

    /// False once the clause set is known to be unsatisfiable without assumptions.
    pub fn is_ok(&self) -> bool {
        self.ok
    }

    fn value(&self, l: Lit) -> i8 {
        let a = self.assigns[l.var().index()];
        if l.is_positive() {
            a
        } else {
            -a
        }
    }

    fn decision_level(&self) -> u32 {
        self.trail_lim.len() as u32
    }

    /// Adds a permanent clause. Returns false if the solver became trivially
    /// unsatisfiable.
    pub fn add_clause(&mut self, lits: &[Lit]) -> bool {
        if !self.ok {
            return false;
        }
        self.cancel_until(0);
        if let Some(max) = lits.iter().map(|l| l.var().index()).max() {
            self.ensure_vars(max + 1);
        }
        let mut c: Vec<Lit> = lits.to_vec();
        c.sort();
        c.dedup();
        let mut out = Vec::with_capacity(c.len());
        for (i, &l) in c.iter().enumerate() {
            if i + 1 < c.len() && c[i + 1] == !l {
                return true; // tautology
            }
            match self.value(l) {
                TRUE => return true,
                FALSE => {}
                _ => out.push(l),
            }
        }
        match out.len() {
            0 => {
                self.ok = false;
                false
            }
            1 => {
                self.enqueue(out[0], None);
                if self.propagate().is_some() {
                    self.ok = false;
                }
                self.ok
            }
            _ => {
                let cref = self.alloc_clause(out, false, 0);
                self.attach(cref);
                true
            }
        }
    }

    fn alloc_clause(&mut self, lits: Vec<Lit>, learnt: bool, lbd: u32) -> ClauseRef {
        let cref = self.clauses.len() as ClauseRef;
        self.clauses.push(Clause {
            lits,
            learnt,
            deleted: false,
            activity: 0.0,
            lbd,
        });
        cref
    }

    fn attach(&mut self, cref: ClauseRef) {
        let c = &self.clauses[cref as usize];
        let (a, b) = (c.lits[0], c.lits[1]);
        self.watches[a.code()].push(Watcher { cref, blocker: b });
        self.watches[b.code()].push(Watcher { cref, blocker: a });
    }

    fn enqueue(&mut self, l: Lit, reason: Option<ClauseRef>) {
        let v = l.var().index();
        debug_assert_eq!(self.assigns[v], UNDEF);
        self.assigns[v] = if l.is_positive() { TRUE } else { FALSE };
        self.level[v] = self.decision_level();
        self.reason[v] = reason;
        self.trail.push(l);
    }

    fn propagate(&mut self) -> Option<ClauseRef> {
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            self.stats.propagations += 1;
            let false_lit = !p;
            let mut ws = std::mem::take(&mut self.watches[false_lit.code()]);
            let mut i = 0;
            let mut j = 0;
            let mut conflict = None;
            while i < ws.len() {
                let w = ws[i];
                i += 1;
                if self.value(w.blocker) == TRUE {
                    ws[j] = w;
                    j += 1;
                    continue;
                }
                let cref = w.cref;
                if self.clauses[cref as usize].deleted {
                    continue;
                }
                {
                    let lits = &mut self.clauses[cref as usize].lits;
                    if lits[0] == false_lit {
                        lits.swap(0, 1);
                    }
                }
                let first = self.clauses[cref as usize].lits[0];
                if first != w.blocker && self.value(first) == TRUE {
                    ws[j] = Watcher {
                        cref,
                        blocker: first,
                    };
                    j += 1;
                    continue;
                }
                // look for a new literal to watch
                let len = self.clauses[cref as usize].lits.len();
                let mut found = false;
                for k in 2..len {
                    let l = self.clauses[cref as usize].lits[k];
                    if self.value(l) != FALSE {
                        let lits = &mut self.clauses[cref as usize].lits;
                        lits.swap(1, k);
                        self.watches[l.code()].push(Watcher {
                            cref,
                            blocker: first,
                        });
                        found = true;
                        break;
                    }
                }
                if found {
                    continue;
                }
                ws[j] = Watcher {
                    cref,
                    blocker: first,
                };
                j += 1;
                if self.value(first) == FALSE {
                    conflict = Some(cref);
                    while i < ws.len() {
                        ws[j] = ws[i];
                        j += 1;
                        i += 1;
                    }
                } else {
                    self.enqueue(first, Some(cref));
                }
            }
            ws.truncate(j);
            // watches for false_lit may have been appended to while we held the list
            let appended = std::mem::take(&mut self.watches[false_lit.code()]);
            ws.extend(appended);
            self.watches[false_lit.code()] = ws;
            if conflict.is_some() {
                self.qhead = self.trail.len();
                return conflict;
            }
        }
        None
    }

    fn cancel_until(&mut self, lvl: u32) {
        if self.decision_level() <= lvl {
            return;
        }
        let lim = self.trail_lim[lvl as usize];
        for idx in (lim..self.trail.len()).rev() {
            let l = self.trail[idx];
            let v = l.var().index();
            self.assigns[v] = UNDEF;
            self.reason[v] = None;
            self.polarity[v] = l.is_positive();
            if !self.heap.contains(v) {
                self.heap.insert(v, &self.activity);
            }
        }
        self.trail.truncate(lim);
        self.trail_lim.truncate(lvl as usize);
        self.qhead = self.trail.len();
    }

    fn bump_var(&mut self, v: usize) {
        self.activity[v] += self.var_inc;
        if self.activity[v] > 1e100 {
            for a in self.activity.iter_mut() {
                *a *= 1e-100;
            }
            self.var_inc *= 1e-100;
        }
        if self.heap.contains(v) {
            self.heap.decrease(v, &self.activity);
        }
    }

    fn bump_clause(&mut self, cref: ClauseRef) {
        let c = &mut self.clauses[cref as usize];
        if !c.learnt {
            return;
        }
        c.activity += self.cla_inc;
        if c.activity > 1e20 {
            for &r in &self.learnts {
                self.clauses[r as usize].activity *= 1e-20;
            }
            self.cla_inc *= 1e-20;
        }
    }

    fn analyze(&mut self, mut confl: ClauseRef) -> (Vec<Lit>, u32) {
        let mut learnt = vec![Lit(0)];
        let mut path_c = 0usize;
        let mut p: Option<Lit> = None;
        let mut idx = self.trail.len();
        let cur = self.decision_level();
        loop {
            self.bump_clause(confl);
            let start = if p.is_some() { 1 } else { 0 };
            let n = self.clauses[confl as usize].lits.len();
            for k in start..n {
                let q = self.clauses[confl as usize].lits[k];
                let v = q.var().index();
                if !self.seen[v] && self.level[v] > 0 {
                    self.seen[v] = true;
                    self.bump_var(v);
                    if self.level[v] >= cur {
                        path_c += 1;
                    } else {
                        learnt.push(q);
                    }
                }
            }
            loop {
                idx -= 1;
                if self.seen[self.trail[idx].var().index()] {
                    break;
                }
            }
            let pl = self.trail[idx];
            p = Some(pl);
            self.seen[pl.var().index()] = false;
            path_c -= 1;
            if path_c == 0 {
                break;
            }
            confl = self.reason[pl.var().index()].expect("implied literal without reason");
        }
        learnt[0] = !p.unwrap();

        // local minimisation: drop literals implied by other learnt literals
        let original: Vec<Lit> = learnt.clone();
        let mut kept = vec![learnt[0]];
        for &l in &learnt[1..] {
            let v = l.var().index();
            let redundant = match self.reason[v] {
                None => false,
                Some(r) => self.clauses[r as usize].lits[1..].iter().all(|q| {
                    let qv = q.var().index();
                    self.seen[qv] || self.level[qv] == 0
                }),
            };
            if !redundant {
                kept.push(l);
            }
        }
        for l in &original {
            self.seen[l.var().index()] = false;
        }
        let mut learnt = kept;

        let bt = if learnt.len() == 1 {
            0
        } else {
            let mut max_i = 1;
            for k in 2..learnt.len() {
                if self.level[learnt[k].var().index()] > self.level[learnt[max_i].var().index()] {
                    max_i = k;
                }
            }
            learnt.swap(1, max_i);
            self.level[learnt[1].var().index()]
        };
        (learnt, bt)
    }

    fn lbd(&self, lits: &[Lit]) -> u32 {
        let mut levels: Vec<u32> = lits.iter().map(|l| self.level[l.var().index()]).collect();
        levels.sort_unstable();
        levels.dedup();
        levels.len() as u32
    }

    fn reduce_db(&mut self) {
        let mut cands: Vec<ClauseRef> = self
            .learnts
            .iter()
            .copied()
            .filter(|&r| !self.clauses[r as usize].deleted)
            .collect();
        cands.sort_by(|&a, &b| {
            let ca = &self.clauses[a as usize];
            let cb = &self.clauses[b as usize];
            cb.lbd
                .cmp(&ca.lbd)
                .then(ca.activity.partial_cmp(&cb.activity).unwrap())
        });
        let half = cands.len() / 2;
        let mut removed = 0;
        for &r in &cands {
            if removed >= half {
                break;
            }
            let c = &self.clauses[r as usize];
            if c.lits.len() <= 2 || c.lbd <= 2 {
                continue;
            }
            let first = c.lits[0];
            let locked = self.value(first) == TRUE && self.reason[first.var().index()] == Some(r);
            if locked {
                continue;
            }
            self.clauses[r as usize].deleted = true;
            self.clauses[r as usize].lits.shrink_to_fit();
            removed += 1;
        }
        self.learnts.retain(|&r| !self.clauses[r as usize].deleted);
        for ws in self.watches.iter_mut() {
            let clauses = &self.clauses;
            ws.retain(|w| !clauses[w.cref as usize].deleted);
        }
    }

    fn pick_branch(&mut self) -> Option<Lit> {
        while let Some(v) = self.heap.pop(&self.activity) {
            if self.assigns[v] == UNDEF {
                return Some(Lit::new(Var(v as u32), self.polarity[v]));
            }
        }
        None
    }

    fn luby(y: f64, mut x: u64) -> f64 {
        let mut size = 1u64;
        let mut seq = 0u32;
        while size < x + 1 {
            seq += 1;
            size = 2 * size + 1;
        }
        while size - 1 != x {
            size = (size - 1) >> 1;
            seq -= 1;
            x %= size;
        }
        y.powi(seq as i32)
    }

    fn out_of_budget(&self, budget: &Budget, conflicts_at_start: u64) -> bool {
        if let Some(n) = budget.conflicts {
            if self.stats.conflicts - conflicts_at_start >= n {
                return true;
            }
        }
        if let Some(flag) = &budget.interrupt {
            if flag.load(Ordering::Relaxed) {
                return true;
            }
        }
        if let Some(d) = budget.deadline {
            if Instant::now() >= d {
                return true;
            }
        }
        false
    }

    /// Solves without assumptions or limits.
    pub fn solve(&mut self) -> SolveStatus {
        self.solve_with(&[], &Budget::unlimited())
    }

    pub fn solve_with(&mut self, assumptions: &[Lit], budget: &Budget) -> SolveStatus {
        self.stats.solves += 1;
        self.model.clear();
        if !self.ok {
            return SolveStatus::Unsat;
        }
        if let Some(max) = assumptions.iter().map(|l| l.var().index()).max() {
            self.ensure_vars(max + 1);
        }
        self.cancel_until(0);
        if self.propagate().is_some() {
            self.ok = false;
            return SolveStatus::Unsat;
        }
        let start_conflicts = self.stats.conflicts;
        self.max_learnts = (self.clauses.len() as f64 / 3.0).max(2000.0);
        let mut restart_no = 0u64;
        loop {
            let limit = (Self::luby(2.0, restart_no) * 100.0) as u64;
            let st = self.search(limit, assumptions, budget, start_conflicts);
            match st {
                Some(s) => {
                    self.cancel_until(0);
                    return s;
                }
                None => {
                    restart_no += 1;
                    self.stats.restarts += 1;
                    self.max_learnts *= 1.05;
                }
            }
        }
    }

    fn search(
        &mut self,
        conflict_limit: u64,
        assumptions: &[Lit],
        budget: &Budget,
        start_conflicts: u64,
    ) -> Option<SolveStatus> {
        let mut local_conflicts = 0u64;
        loop {
            if let Some(confl) = self.propagate() {
                self.stats.conflicts += 1;
                local_conflicts += 1;
                if self.decision_level() == 0 {
                    self.ok = false;
                    return Some(SolveStatus::Unsat);
                }
                let (learnt, bt) = self.analyze(confl);
                self.cancel_until(bt);
                if learnt.len() == 1 {
                    self.enqueue(learnt[0], None);
                } else {
                    let lbd = self.lbd(&learnt);
                    let first = learnt[0];
                    let cref = self.alloc_clause(learnt, true, lbd);
                    self.attach(cref);
                    self.learnts.push(cref);
                    self.bump_clause(cref);
                    self.enqueue(first, Some(cref));
                }
                self.var_inc /= 0.95;
                self.cla_inc /= 0.999;
                if self.out_of_budget(budget, start_conflicts) {
                    return Some(SolveStatus::Unknown);
                }
            } else {
                if local_conflicts >= conflict_limit {
                    self.cancel_until(0);
                    return None;
                }
                if self.learnts.len() as f64 - self.trail.len() as f64 >= self.max_learnts {
                    self.reduce_db();
                }
                let mut next = None;
                while (self.decision_level() as usize) < assumptions.len() {
                    let a = assumptions[self.decision_level() as usize];
                    match self.value(a) {
                        TRUE => self.trail_lim.push(self.trail.len()),
                        FALSE => return Some(SolveStatus::Unsat),
                        _ => {
                            next = Some(a);
                            break;
                        }
                    }
                }
                let dec = match next {
                    Some(a) => a,
                    None => {
                        if self.stats.decisions % 1024 == 0
                            && self.out_of_budget(budget, start_conflicts)
                        {
                            return Some(SolveStatus::Unknown);
                        }
                        match self.pick_branch() {
                            Some(l) => l,
                            None => {
                                self.model = self.assigns.iter().map(|&a| a == TRUE).collect();
                                return Some(SolveStatus::Sat);
                            }
                        }
                    }
                };
                self.stats.decisions += 1;
                self.trail_lim.push(self.trail.len());
                self.enqueue(dec, None);
            }
        }
    }

    /// Model of the last satisfiable call (empty otherwise).
    pub fn model(&self) -> &[bool] {
        &self.model
    }

    pub fn model_value(&self, l: Lit) -> bool {
        let v = self.model.get(l.var().index()).copied().unwrap_or(false);
        v == l.is_positive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lit(x: i64) -> Lit {
        Lit::from_dimacs(x)
    }

    #[test]
    fn contradiction_is_unsat() {
        let mut s = Solver::new();
        s.add_clause(&[lit(1)]);
        s.add_clause(&[lit(-1)]);
        assert_eq!(s.solve(), SolveStatus::Unsat);
    }

    #[test]
    fn assumption_forces_other_literal() {
        let mut s = Solver::new();
        s.add_clause(&[lit(1), lit(2)]);
        assert_eq!(
            s.solve_with(&[lit(-1)], &Budget::unlimited()),
            SolveStatus::Sat
        );
        assert!(s.model_value(lit(2)));
        assert!(!s.model_value(lit(1)));
        // assumptions do not stick
        assert_eq!(
            s.solve_with(&[lit(-2)], &Budget::unlimited()),
            SolveStatus::Sat
        );
        assert!(s.model_value(lit(1)));
    }

    #[test]
    fn failing_assumption_leaves_solver_usable() {
        let mut s = Solver::new();
        s.add_clause(&[lit(1)]);
        assert_eq!(
            s.solve_with(&[lit(-1)], &Budget::unlimited()),
            SolveStatus::Unsat
        );
        assert!(s.is_ok());
        assert_eq!(s.solve(), SolveStatus::Sat);
    }

    #[test]
    fn pigeonhole_is_unsat() {
        // 5 pigeons, 4 holes
        let p = 5;
        let h = 4;
        let v = |i: usize, j: usize| lit((i * h + j + 1) as i64);
        let mut s = Solver::new();
        for i in 0..p {
            let c: Vec<Lit> = (0..h).map(|j| v(i, j)).collect();
            s.add_clause(&c);
        }
        for j in 0..h {
            for a in 0..p {
                for b in a + 1..p {
                    s.add_clause(&[!v(a, j), !v(b, j)]);
                }
            }
        }
        assert_eq!(s.solve(), SolveStatus::Unsat);
    }

    #[test]
    fn conflict_budget_yields_unknown() {
        let p = 9;
        let h = 8;
        let v = |i: usize, j: usize| lit((i * h + j + 1) as i64);
        let mut s = Solver::new();
        for i in 0..p {
            let c: Vec<Lit> = (0..h).map(|j| v(i, j)).collect();
            s.add_clause(&c);
        }
        for j in 0..h {
            for a in 0..p {
                for b in a + 1..p {
                    s.add_clause(&[!v(a, j), !v(b, j)]);
                }
            }
        }
        assert_eq!(
            s.solve_with(&[], &Budget::conflicts(10)),
            SolveStatus::Unknown
        );
    }

    #[test]
    fn luby_sequence() {
        let seq: Vec<f64> = (0..9).map(|i| Solver::luby(2.0, i)).collect();
        assert_eq!(seq, vec![1.0, 1.0, 2.0, 1.0, 1.0, 2.0, 4.0, 1.0, 1.0]);
    }
}
