//! Oracle-guided key recovery. The sequential attack keeps one contiguous
//! oracle session: every distinguishing sequence extends the trace seen so
//! far, so the oracle's state is never assumed to be reset between queries.

mod comb;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnf::{build_miter, Budget, CnfProblem, InitLits, Lit, SolveResult, Unroller};
use crate::constraints::{generate, KeyConstraintSet};
use crate::equivalence::{build_counters, build_inequivalence_circuit, Counters};
use crate::netlist::{KeyVector, Netlist};
use crate::sim::{CycleInput, CycleOutput, OracleSession, SimError, Simulator};
use crate::timing::{ClockSpec, DelayModel, PathOptions};

pub use comb::{run_combinational_attack, scan_width, CombAttackResult, CombOracle};

/// Power-up value per state element name.
pub type StateMap = BTreeMap<String, bool>;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("oracle failed: {0}")]
    Oracle(#[from] SimError),
    #[error("self-check failed: {0}")]
    SelfCheck(String),
    #[error("solver budget exhausted")]
    Budget,
}

/// Anything answering contiguous query extensions like a stateful chip.
pub trait Oracle {
    fn query(&mut self, ext: &[CycleInput]) -> Result<Vec<CycleOutput>, SimError>;
}

impl Oracle for OracleSession {
    fn query(&mut self, ext: &[CycleInput]) -> Result<Vec<CycleOutput>, SimError> {
        OracleSession::query(self, ext)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttackBudget {
    pub wall: Duration,
    /// Conflict limit of a solver call at one cycle of extension; doubles
    /// with each further cycle.
    pub conflicts: u64,
    /// Longest extension beyond the trace, in half-cycles.
    pub max_depth: usize,
    pub max_iterations: usize,
}

impl Default for AttackBudget {
    fn default() -> Self {
        AttackBudget {
            wall: Duration::from_secs(60),
            conflicts: 50_000,
            max_depth: 16,
            max_iterations: 10_000,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Iteration {
    /// Cycles in the distinguishing sequence.
    pub dis_cycles: usize,
    /// Trace length after the oracle answered.
    pub trace_cycles: usize,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct AttackStats {
    pub dis_count: usize,
    /// Half-cycles unrolled when the attack stopped.
    pub final_depth: usize,
    pub solver_calls: usize,
    pub solver_time: Duration,
    pub wall_time: Duration,
    pub iterations: Vec<Iteration>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AttackStatus {
    Solved {
        key: KeyVector,
        initial_state: StateMap,
    },
    /// The budget ran out; carries the last pair of surviving keys that
    /// still differ, when one was seen.
    Timeout {
        witness: Option<(KeyVector, KeyVector)>,
    },
    /// No key satisfies the loop and timing constraints.
    Infeasible,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttackResult {
    pub status: AttackStatus,
    pub stats: AttackStats,
    /// Every cycle sent to the oracle, in order, with its answer.
    pub trace: Vec<(CycleInput, CycleOutput)>,
}

/// A distinguishing extension of the current trace, with the two key and
/// power-up pairs that disagree on it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dis {
    pub cycles: Vec<CycleInput>,
    pub keys: [KeyVector; 2],
    pub inits: [StateMap; 2],
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DisSearch {
    Found(Dis),
    /// No extension of the current length distinguishes surviving keys.
    None,
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Termination {
    Terminated,
    /// Two inequivalent keys still agree with the trace.
    Witness(KeyVector, KeyVector),
    Unknown,
}

struct FreeCycle {
    inputs: Vec<Lit>,
    reset: Lit,
}

/// The incremental miter: two key copies, each with its own power-up state,
/// both constrained by the key constraints and by the whole trace, followed
/// by free extension cycles whose outputs are compared.
pub struct AttackSession<'a> {
    n: &'a Netlist,
    p: CnfProblem,
    k: [Vec<Lit>; 2],
    init: [InitLits; 2],
    u: [Unroller; 2],
    ineq: Lit,
    trace: Vec<(CycleInput, CycleOutput)>,
    free: Vec<FreeCycle>,
    free_diffs: Vec<Lit>,
    pub solver_calls: usize,
    pub solver_time: Duration,
}

impl<'a> AttackSession<'a> {
    pub fn new(
        n: &'a Netlist,
        constraints: &KeyConstraintSet,
        counters: &Counters,
    ) -> AttackSession<'a> {
        let mut p = CnfProblem::new();
        let k: [Vec<Lit>; 2] = [0, 1].map(|c| {
            (0..n.num_key_bits())
                .map(|i| p.named_var(format!("k{c}[{i}]")).pos())
                .collect()
        });
        for key in &k {
            constraints.assert_all(&mut p, n, key);
        }
        let ineq = build_inequivalence_circuit(&mut p, n, counters, &k[0], &k[1]);
        let init = [
            InitLits::fresh(&mut p, n, "a:"),
            InitLits::fresh(&mut p, n, "b:"),
        ];
        let u = [
            Unroller::new(n, k[0].clone(), &init[0]),
            Unroller::new(n, k[1].clone(), &init[1]),
        ];
        AttackSession {
            n,
            p,
            k,
            init,
            u,
            ineq,
            trace: Vec::new(),
            free: Vec::new(),
            free_diffs: Vec::new(),
            solver_calls: 0,
            solver_time: Duration::ZERO,
        }
    }

    pub fn trace(&self) -> &[(CycleInput, CycleOutput)] {
        &self.trace
    }

    /// Half-cycles unrolled: the trace plus the free extension.
    pub fn depth(&self) -> usize {
        self.u[0].num_frames()
    }

    /// Half-cycles of free extension beyond the trace.
    pub fn extension(&self) -> usize {
        2 * self.free.len()
    }

    /// Appends one free clock cycle to the extension.
    pub fn extend(&mut self) {
        let n = self.n;
        let c = self.trace.len() + self.free.len();
        let inputs: Vec<Lit> = n
            .inputs()
            .iter()
            .map(|&i| self.p.named_var(format!("in:{}@{c}", n.net_name(i))).pos())
            .collect();
        let reset = if c == 0 {
            self.p.constant(true)
        } else {
            self.p.named_var(format!("reset@{c}")).pos()
        };
        for _ in 0..2 {
            for u in &mut self.u {
                u.push_frame(&mut self.p, n, &inputs, reset);
            }
            let f = self.depth() - 1;
            let (oa, ob) = (self.u[0].outputs(n, f), self.u[1].outputs(n, f));
            let d = self.p.words_differ(&oa, &ob);
            self.free_diffs.push(d);
        }
        self.free.push(FreeCycle { inputs, reset });
    }

    fn solve(&mut self, assumptions: &[Lit], budget: &Budget) -> SolveResult {
        let t = Instant::now();
        let r = self.p.solve(assumptions, budget);
        self.solver_calls += 1;
        self.solver_time += t.elapsed();
        r
    }

    fn model_key(&self, c: usize) -> KeyVector {
        KeyVector(self.p.values(&self.k[c]))
    }

    fn model_init(&self, c: usize) -> StateMap {
        let i = &self.init[c];
        i.cells
            .iter()
            .zip(&i.lits)
            .map(|(&cell, &l)| (self.n.cell(cell).name.clone(), self.p.value(l)))
            .collect()
    }

    /// Looks for inputs over the current extension on which two inequivalent
    /// surviving keys disagree.
    pub fn find_dis(&mut self, budget: &Budget) -> DisSearch {
        if self.free.is_empty() {
            return DisSearch::None;
        }
        let diffs = self.free_diffs.clone();
        let any = self.p.or(&diffs);
        match self.solve(&[self.ineq, any], budget) {
            SolveResult::Unsat => DisSearch::None,
            SolveResult::Unknown => DisSearch::Unknown,
            SolveResult::Sat => {
                let cycles = self
                    .free
                    .iter()
                    .map(|fc| CycleInput {
                        inputs: self.p.values(&fc.inputs),
                        reset: self.p.value(fc.reset),
                    })
                    .collect();
                DisSearch::Found(Dis {
                    cycles,
                    keys: [self.model_key(0), self.model_key(1)],
                    inits: [self.model_init(0), self.model_init(1)],
                })
            }
        }
    }

    /// Fixes the next `cycles.len()` cycles to the queried inputs and both
    /// copies' outputs to the oracle's answers. Free cycles beyond the
    /// queried ones stay free.
    pub fn add_io_constraint(&mut self, cycles: &[CycleInput], outputs: &[CycleOutput]) {
        assert_eq!(cycles.len(), outputs.len());
        let n = self.n;
        while self.free.len() < cycles.len() {
            self.extend();
        }
        let fixed: Vec<FreeCycle> = self.free.drain(..cycles.len()).collect();
        self.free_diffs.drain(..2 * cycles.len());
        for ((fc, ci), co) in fixed.iter().zip(cycles).zip(outputs) {
            for (&l, &b) in fc.inputs.iter().zip(&ci.inputs) {
                self.p.add_clause(&[if b { l } else { !l }]);
            }
            self.p
                .add_clause(&[if ci.reset { fc.reset } else { !fc.reset }]);
            let f = 2 * self.trace.len();
            for (half, want) in [&co.high, &co.low].into_iter().enumerate() {
                for u in &self.u {
                    for (&l, &b) in u.outputs(n, f + half).iter().zip(want.iter()) {
                        self.p.add_clause(&[if b { l } else { !l }]);
                    }
                }
            }
            self.trace.push((ci.clone(), co.clone()));
        }
    }

    /// Whether two inequivalent keys, each with some power-up state, still
    /// both reproduce the trace.
    pub fn termination_check(&mut self, budget: &Budget) -> Termination {
        match self.solve(&[self.ineq], budget) {
            SolveResult::Unsat => Termination::Terminated,
            SolveResult::Unknown => Termination::Unknown,
            SolveResult::Sat => Termination::Witness(self.model_key(0), self.model_key(1)),
        }
    }

    /// A key and power-up state reproducing the trace, if any survives.
    pub fn surviving(&mut self, budget: &Budget) -> Option<(KeyVector, StateMap)> {
        match self.solve(&[], budget) {
            SolveResult::Sat => Some((self.model_key(0), self.model_init(0))),
            _ => None,
        }
    }

    /// Whether `key` (with some power-up state) still reproduces the trace.
    pub fn key_survives(&mut self, key: &KeyVector) -> bool {
        let a: Vec<Lit> = self.k[0]
            .iter()
            .zip(&key.0)
            .map(|(&l, &b)| if b { l } else { !l })
            .collect();
        self.solve(&a, &Budget::unlimited()) == SolveResult::Sat
    }
}

/// Runs `cycles` from the power-up state `init` under `key`.
pub fn simulate_from(
    n: &Netlist,
    key: &KeyVector,
    init: &StateMap,
    cycles: &[CycleInput],
) -> Result<Vec<CycleOutput>, SimError> {
    let mut sim = Simulator::new(n, key)?;
    sim.set_initial(0, init);
    cycles.iter().map(|c| sim.cycle(c)).collect()
}

fn check_dis(n: &Netlist, trace: &[(CycleInput, CycleOutput)], d: &Dis) -> Result<(), AttackError> {
    let mut cycles: Vec<CycleInput> = trace.iter().map(|(c, _)| c.clone()).collect();
    cycles.extend(d.cycles.iter().cloned());
    let outs: Vec<Vec<CycleOutput>> = (0..2)
        .map(|c| simulate_from(n, &d.keys[c], &d.inits[c], &cycles))
        .collect::<Result<_, _>>()
        .map_err(|e| AttackError::SelfCheck(format!("replaying a DIS: {e}")))?;
    for c in 0..2 {
        if outs[c][..trace.len()]
            .iter()
            .zip(trace)
            .any(|(o, (_, want))| o != want)
        {
            return Err(AttackError::SelfCheck(format!(
                "model key {c} does not reproduce the trace"
            )));
        }
    }
    if outs[0][trace.len()..] == outs[1][trace.len()..] {
        return Err(AttackError::SelfCheck(
            "DIS does not separate its model keys in simulation".into(),
        ));
    }
    Ok(())
}

/// The sequential attack: find a DIS, query it as a continuation of the
/// oracle session, add the answer, and repeat until no two inequivalent
/// surviving keys can be told apart within `max_depth` half-cycles of any
/// extension. The extension grows by one clock cycle per failed search.
pub fn run_attack(
    locked: &Netlist,
    dm: &DelayModel,
    clk: ClockSpec,
    oracle: &mut dyn Oracle,
    budget: &AttackBudget,
) -> Result<AttackResult, AttackError> {
    run_attack_observed(locked, dm, clk, oracle, budget, &mut |_, _| {})
}

/// [`run_attack`] with a hook called after every accepted DIS, once the
/// oracle's answer is part of the session.
pub fn run_attack_observed(
    locked: &Netlist,
    dm: &DelayModel,
    clk: ClockSpec,
    oracle: &mut dyn Oracle,
    budget: &AttackBudget,
    observe: &mut dyn FnMut(&mut AttackSession, &Dis),
) -> Result<AttackResult, AttackError> {
    let start = Instant::now();
    let deadline = start + budget.wall;
    let mut stats = AttackStats::default();
    let constraints = generate(locked, dm, clk, PathOptions::default());
    let counters = build_counters(locked, PathOptions::default());
    let mut s = AttackSession::new(locked, &constraints, &counters);
    let finish = |s: &AttackSession, mut stats: AttackStats, status: AttackStatus| {
        stats.final_depth = s.depth();
        stats.solver_calls = s.solver_calls;
        stats.solver_time = s.solver_time;
        stats.wall_time = start.elapsed();
        AttackResult {
            status,
            stats,
            trace: s.trace().to_vec(),
        }
    };
    let call_budget = |free_cycles: usize| Budget {
        conflicts: Some(
            budget
                .conflicts
                .saturating_mul(1 << free_cycles.saturating_sub(1).min(16)),
        ),
        deadline: Some(deadline),
        interrupt: None,
    };
    if locked.num_key_bits() == 0 {
        return Ok(finish(
            &s,
            stats,
            AttackStatus::Solved {
                key: KeyVector(Vec::new()),
                initial_state: StateMap::new(),
            },
        ));
    }
    match s.termination_check(&call_budget(1)) {
        Termination::Unknown => {
            return Ok(finish(&s, stats, AttackStatus::Timeout { witness: None }))
        }
        Termination::Terminated if s.surviving(&call_budget(1)).is_none() => {
            return Ok(finish(&s, stats, AttackStatus::Infeasible));
        }
        _ => {}
    }
    let mut witness = None;
    loop {
        if Instant::now() >= deadline || stats.dis_count >= budget.max_iterations {
            return Ok(finish(&s, stats, AttackStatus::Timeout { witness }));
        }
        if s.extension() == 0 {
            s.extend();
        }
        match s.find_dis(&call_budget(s.extension() / 2)) {
            DisSearch::Unknown => return Ok(finish(&s, stats, AttackStatus::Timeout { witness })),
            DisSearch::None => {
                if s.extension() + 2 > budget.max_depth {
                    break;
                }
                s.extend();
            }
            DisSearch::Found(d) => {
                check_dis(locked, s.trace(), &d)?;
                let answer = oracle.query(&d.cycles)?;
                s.add_io_constraint(&d.cycles, &answer);
                observe(&mut s, &d);
                stats.dis_count += 1;
                stats.iterations.push(Iteration {
                    dis_cycles: d.cycles.len(),
                    trace_cycles: s.trace().len(),
                });
                match s.termination_check(&call_budget(1)) {
                    Termination::Terminated => break,
                    Termination::Witness(a, b) => witness = Some((a, b)),
                    Termination::Unknown => {
                        return Ok(finish(&s, stats, AttackStatus::Timeout { witness }))
                    }
                }
            }
        }
    }
    let Some((key, init)) = s.surviving(&Budget {
        deadline: None,
        ..call_budget(1)
    }) else {
        return Err(AttackError::SelfCheck("no key reproduces the trace".into()));
    };
    if !constraints.satisfied(locked, &key) {
        return Err(AttackError::SelfCheck(format!(
            "recovered key {key} violates the key constraints"
        )));
    }
    let cycles: Vec<CycleInput> = s.trace().iter().map(|(c, _)| c.clone()).collect();
    let replay = simulate_from(locked, &key, &init, &cycles)
        .map_err(|e| AttackError::SelfCheck(e.to_string()))?;
    if replay.iter().zip(s.trace()).any(|(o, (_, want))| o != want) {
        return Err(AttackError::SelfCheck(format!(
            "recovered key {key} does not reproduce the trace"
        )));
    }
    Ok(finish(
        &s,
        stats,
        AttackStatus::Solved {
            key,
            initial_state: init,
        },
    ))
}

/// Bounded check that `candidate`, started from `init`, matches
/// `correct_key` started from the same state on every input and reset
/// sequence of `depth` half-cycles (reset held in the first cycle).
/// Returns the distinguishing cycles on failure.
pub fn validate_key(
    locked: &Netlist,
    correct_key: &KeyVector,
    candidate: &KeyVector,
    init: &StateMap,
    depth: usize,
) -> Result<(), Vec<CycleInput>> {
    let mut m = build_miter(locked, depth);
    for (l, key) in [(m.k0.clone(), correct_key), (m.k1.clone(), candidate)] {
        for (&x, &b) in l.iter().zip(&key.0) {
            m.p.add_clause(&[if b { x } else { !x }]);
        }
    }
    for (&c, &l) in m.init.cells.iter().zip(&m.init.lits.clone()) {
        if let Some(&b) = init.get(&locked.cell(c).name) {
            m.p.add_clause(&[if b { l } else { !l }]);
        }
    }
    let any = m.any_diff();
    if m.p.solve_unlimited(&[any]) != SolveResult::Sat {
        return Ok(());
    }
    Err(m
        .inputs
        .iter()
        .zip(&m.resets)
        .map(|(ins, &r)| CycleInput {
            inputs: m.p.values(ins),
            reset: m.p.value(r),
        })
        .collect())
}
