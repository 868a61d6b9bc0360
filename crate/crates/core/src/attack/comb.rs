//! The classic distinguishing-input loop for circuits whose state is fully
//! exposed through scan: state outputs act as extra inputs and state data
//! pins as extra outputs.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::AttackError;
use crate::cnf::{Budget, CnfProblem, Lit, SolveResult};
use crate::netlist::{KeyVector, Netlist};

/// Combinational oracle: primary inputs then state values in, primary
/// outputs then next-state data values out.
pub trait CombOracle {
    fn eval(&mut self, inputs: &[bool]) -> Vec<bool>;
}

impl<F: FnMut(&[bool]) -> Vec<bool>> CombOracle for F {
    fn eval(&mut self, inputs: &[bool]) -> Vec<bool> {
        self(inputs)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CombAttackResult {
    pub key: KeyVector,
    pub queries: usize,
    pub wall_time: Duration,
}

/// Width of the scan view: (inputs, outputs).
pub fn scan_width(n: &Netlist) -> (usize, usize) {
    let s = n.sequential_cells().len();
    (n.inputs().len() + s, n.outputs().len() + s)
}

/// One combinational copy: scan-view output literals for the given scan-view
/// input literals and key literals.
fn encode(p: &mut CnfProblem, n: &Netlist, ins: &[Lit], key: &[Lit]) -> Vec<Lit> {
    let mut v = vec![p.constant(false); n.num_nets()];
    let seq = n.sequential_cells();
    for (&x, &l) in n.inputs().iter().zip(ins) {
        v[x.index()] = l;
    }
    for (&x, &l) in n.key_inputs().iter().zip(key) {
        v[x.index()] = l;
    }
    for (&c, &l) in seq.iter().zip(&ins[n.inputs().len()..]) {
        v[n.cell(c).output.index()] = l;
    }
    for c in n.topo_order(&|_| false).expect("valid netlist") {
        let cell = n.cell(c);
        if cell.kind.is_combinational() {
            let xs: Vec<Lit> = cell.inputs.iter().map(|i| v[i.index()]).collect();
            v[cell.output.index()] = p.gate(cell.kind, &xs);
        }
    }
    let mut out: Vec<Lit> = n.outputs().iter().map(|o| v[o.index()]).collect();
    out.extend(seq.iter().map(|&c| v[n.cell(c).inputs[0].index()]));
    out
}

/// Queries distinguishing inputs until no two surviving keys disagree on
/// any input, then returns a surviving key.
pub fn run_combinational_attack(
    n: &Netlist,
    oracle: &mut dyn CombOracle,
    budget: &Budget,
) -> Result<CombAttackResult, AttackError> {
    let start = Instant::now();
    let mut p = CnfProblem::new();
    let kb = n.num_key_bits();
    let k0: Vec<Lit> = (0..kb).map(|_| p.new_lit()).collect();
    let k1: Vec<Lit> = (0..kb).map(|_| p.new_lit()).collect();
    let (wi, _) = scan_width(n);
    let x: Vec<Lit> = (0..wi).map(|_| p.new_lit()).collect();
    let o0 = encode(&mut p, n, &x, &k0);
    let o1 = encode(&mut p, n, &x, &k1);
    let diff = p.words_differ(&o0, &o1);
    let mut queries = 0;
    loop {
        match p.solve(&[diff], budget) {
            SolveResult::Unknown => return Err(AttackError::Budget),
            SolveResult::Unsat => break,
            SolveResult::Sat => {
                let dip = p.values(&x);
                let want = oracle.eval(&dip);
                queries += 1;
                let fixed: Vec<Lit> = dip.iter().map(|&b| p.constant(b)).collect();
                for k in [&k0, &k1] {
                    let o = encode(&mut p, n, &fixed, k);
                    for (&l, &b) in o.iter().zip(&want) {
                        p.add_clause(&[if b { l } else { !l }]);
                    }
                }
            }
        }
    }
    match p.solve(&[], budget) {
        SolveResult::Sat => Ok(CombAttackResult {
            key: KeyVector(p.values(&k0)),
            queries,
            wall_time: start.elapsed(),
        }),
        SolveResult::Unknown => Err(AttackError::Budget),
        SolveResult::Unsat => Err(AttackError::SelfCheck(
            "the oracle's answers exclude every key".into(),
        )),
    }
}
