//! Propositional encoding: a clause store wrapped around the CDCL solver,
//! Tseitin gate helpers with constant folding, and half-cycle unrolling.

mod unroll;

use std::collections::HashMap;
use std::fmt::Write as _;

use latchlock_sat::Solver;
pub use latchlock_sat::{Budget, Lit, SolveStatus, Var};

pub use unroll::{build_miter, InitLits, Miter, Unroller};

use crate::netlist::CellKind;

/// Outcome of one solver call.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveResult {
    Sat,
    Unsat,
    /// The conflict or time budget ran out.
    Unknown,
}

/// An incremental CNF problem: solver plus a retained copy of every clause
/// for model self-checks and DIMACS export.
pub struct CnfProblem {
    solver: Solver,
    clauses: Vec<Vec<Lit>>,
    names: HashMap<String, Var>,
    var_names: Vec<Option<String>>,
    t: Lit,
}

impl Default for CnfProblem {
    fn default() -> Self {
        Self::new()
    }
}

impl CnfProblem {
    pub fn new() -> CnfProblem {
        let mut p = CnfProblem {
            solver: Solver::new(),
            clauses: Vec::new(),
            names: HashMap::new(),
            var_names: Vec::new(),
            t: Lit::new(Var(0), true),
        };
        let v = p.new_var();
        p.t = v.pos();
        p.solver.add_clause(&[p.t]);
        p.clauses.push(vec![p.t]);
        p
    }

    pub fn new_var(&mut self) -> Var {
        self.var_names.push(None);
        self.solver.new_var()
    }

    pub fn new_lit(&mut self) -> Lit {
        self.new_var().pos()
    }

    /// Fresh variable registered under `name`. Names are unique.
    pub fn named_var(&mut self, name: impl Into<String>) -> Var {
        let name = name.into();
        assert!(
            !self.names.contains_key(&name),
            "variable name `{name}` reused"
        );
        let v = self.new_var();
        self.var_names[v.index()] = Some(name.clone());
        self.names.insert(name, v);
        v
    }

    pub fn var_by_name(&self, name: &str) -> Option<Var> {
        self.names.get(name).copied()
    }

    pub fn name_of(&self, v: Var) -> Option<&str> {
        self.var_names.get(v.index()).and_then(|n| n.as_deref())
    }

    pub fn num_vars(&self) -> usize {
        self.var_names.len()
    }

    pub fn num_clauses(&self) -> usize {
        self.clauses.len()
    }

    pub fn constant(&self, b: bool) -> Lit {
        if b {
            self.t
        } else {
            !self.t
        }
    }

    /// `Some(b)` when `l` is the constant `b`.
    pub fn as_const(&self, l: Lit) -> Option<bool> {
        if l == self.t {
            Some(true)
        } else if l == !self.t {
            Some(false)
        } else {
            None
        }
    }

    pub fn add_clause(&mut self, lits: &[Lit]) {
        if lits.iter().any(|&l| l == self.t) {
            return;
        }
        let lits: Vec<Lit> = lits.iter().copied().filter(|&l| l != !self.t).collect();
        self.solver.add_clause(&lits);
        self.clauses.push(lits);
    }

    pub fn and(&mut self, ins: &[Lit]) -> Lit {
        let mut v: Vec<Lit> = Vec::with_capacity(ins.len());
        for &l in ins {
            match self.as_const(l) {
                Some(true) => continue,
                Some(false) => return self.constant(false),
                None => {
                    if v.contains(&!l) {
                        return self.constant(false);
                    }
                    if !v.contains(&l) {
                        v.push(l);
                    }
                }
            }
        }
        match v.len() {
            0 => self.constant(true),
            1 => v[0],
            _ => {
                let o = self.new_lit();
                for &l in &v {
                    self.add_clause(&[!o, l]);
                }
                let mut big: Vec<Lit> = v.iter().map(|&l| !l).collect();
                big.push(o);
                self.add_clause(&big);
                o
            }
        }
    }

    pub fn or(&mut self, ins: &[Lit]) -> Lit {
        let neg: Vec<Lit> = ins.iter().map(|&l| !l).collect();
        !self.and(&neg)
    }

    pub fn xor2(&mut self, a: Lit, b: Lit) -> Lit {
        match (self.as_const(a), self.as_const(b)) {
            (Some(x), _) => return if x { !b } else { b },
            (_, Some(y)) => return if y { !a } else { a },
            _ => {}
        }
        if a == b {
            return self.constant(false);
        }
        if a == !b {
            return self.constant(true);
        }
        let o = self.new_lit();
        self.add_clause(&[!o, a, b]);
        self.add_clause(&[!o, !a, !b]);
        self.add_clause(&[o, !a, b]);
        self.add_clause(&[o, a, !b]);
        o
    }

    pub fn xor(&mut self, ins: &[Lit]) -> Lit {
        let mut acc = self.constant(false);
        for &l in ins {
            acc = self.xor2(acc, l);
        }
        acc
    }

    /// `sel ? b : a`.
    pub fn mux(&mut self, sel: Lit, a: Lit, b: Lit) -> Lit {
        match self.as_const(sel) {
            Some(true) => return b,
            Some(false) => return a,
            None => {}
        }
        if a == b {
            return a;
        }
        match (self.as_const(a), self.as_const(b)) {
            (Some(false), _) => return self.and(&[sel, b]),
            (Some(true), _) => return self.or(&[!sel, b]),
            (_, Some(false)) => return self.and(&[!sel, a]),
            (_, Some(true)) => return self.or(&[sel, a]),
            _ => {}
        }
        let o = self.new_lit();
        self.add_clause(&[!sel, !b, o]);
        self.add_clause(&[!sel, b, !o]);
        self.add_clause(&[sel, !a, o]);
        self.add_clause(&[sel, a, !o]);
        // redundant but helps propagation
        self.add_clause(&[!a, !b, o]);
        self.add_clause(&[a, b, !o]);
        o
    }

    /// Forces `a == b`.
    pub fn equate(&mut self, a: Lit, b: Lit) {
        if a == b {
            return;
        }
        self.add_clause(&[!a, b]);
        self.add_clause(&[a, !b]);
    }

    /// Output literal of a combinational cell.
    pub fn gate(&mut self, kind: CellKind, ins: &[Lit]) -> Lit {
        match kind {
            CellKind::And => self.and(ins),
            CellKind::Nand => !self.and(ins),
            CellKind::Or => self.or(ins),
            CellKind::Nor => !self.or(ins),
            CellKind::Xor => self.xor(ins),
            CellKind::Xnor => !self.xor(ins),
            CellKind::Not => !ins[0],
            CellKind::Buf => ins[0],
            CellKind::Mux => self.mux(ins[0], ins[1], ins[2]),
            CellKind::Const0 => self.constant(false),
            CellKind::Const1 => self.constant(true),
            other => panic!("{other} is not combinational"),
        }
    }

    /// Literal that is true iff at least `k` of `ins` are true
    /// (sequential counter).
    pub fn at_least(&mut self, ins: &[Lit], k: usize) -> Lit {
        if k == 0 {
            return self.constant(true);
        }
        // s[j] = at least j+1 of the prefix are true
        let mut s: Vec<Lit> = vec![self.constant(false); k];
        for &x in ins {
            let mut next = s.clone();
            for j in 0..k {
                let carry = if j == 0 {
                    x
                } else {
                    let prev = s[j - 1];
                    self.and(&[prev, x])
                };
                next[j] = self.or(&[s[j], carry]);
            }
            s = next;
        }
        s[k - 1]
    }

    /// Unsigned binary count of true literals, least significant bit first.
    pub fn popcount(&mut self, ins: &[Lit]) -> Vec<Lit> {
        let mut acc: Vec<Lit> = Vec::new();
        for &x in ins {
            let mut carry = x;
            for bit in acc.iter_mut() {
                let s = self.xor2(*bit, carry);
                carry = self.and(&[*bit, carry]);
                *bit = s;
            }
            if self.as_const(carry) != Some(false) {
                acc.push(carry);
            }
        }
        acc
    }

    /// Literal that is true iff the two little-endian numbers differ.
    pub fn words_differ(&mut self, a: &[Lit], b: &[Lit]) -> Lit {
        let f = self.constant(false);
        let w = a.len().max(b.len());
        let diffs: Vec<Lit> = (0..w)
            .map(|i| {
                let x = a.get(i).copied().unwrap_or(f);
                let y = b.get(i).copied().unwrap_or(f);
                self.xor2(x, y)
            })
            .collect();
        self.or(&diffs)
    }

    pub fn solve(&mut self, assumptions: &[Lit], budget: &Budget) -> SolveResult {
        let assumptions: Vec<Lit> = assumptions
            .iter()
            .copied()
            .filter(|&l| l != self.t)
            .collect();
        if assumptions.contains(&!self.t) {
            return SolveResult::Unsat;
        }
        match self.solver.solve_with(&assumptions, budget) {
            SolveStatus::Sat => {
                self.check_model(&assumptions);
                SolveResult::Sat
            }
            SolveStatus::Unsat => SolveResult::Unsat,
            SolveStatus::Unknown => SolveResult::Unknown,
        }
    }

    pub fn solve_unlimited(&mut self, assumptions: &[Lit]) -> SolveResult {
        self.solve(assumptions, &Budget::unlimited())
    }

    fn check_model(&self, assumptions: &[Lit]) {
        for c in &self.clauses {
            assert!(
                c.iter().any(|&l| self.solver.model_value(l)),
                "solver returned a model violating clause {c:?}"
            );
        }
        for &a in assumptions {
            assert!(
                self.solver.model_value(a),
                "model violates assumption {a:?}"
            );
        }
    }

    /// Value of `l` in the last satisfying model.
    pub fn value(&self, l: Lit) -> bool {
        self.solver.model_value(l)
    }

    pub fn values(&self, ls: &[Lit]) -> Vec<bool> {
        ls.iter().map(|&l| self.value(l)).collect()
    }

    pub fn stats(&self) -> &latchlock_sat::Stats {
        self.solver.stats()
    }

    pub fn to_dimacs(&self) -> String {
        let mut s = String::new();
        let mut named: Vec<(&String, &Var)> = self.names.iter().collect();
        named.sort_by_key(|(_, v)| v.index());
        for (name, v) in named {
            writeln!(s, "c {} {}", v.index() + 1, name).unwrap();
        }
        writeln!(s, "p cnf {} {}", self.num_vars(), self.clauses.len()).unwrap();
        for c in &self.clauses {
            for l in c {
                write!(s, "{} ", l.to_dimacs()).unwrap();
            }
            s.push_str("0\n");
        }
        s
    }
}
