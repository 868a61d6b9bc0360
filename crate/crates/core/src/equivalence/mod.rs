//! Key equivalence: two keys are treated as the same functionality when
//! every latch path sees the same number of phase changes (or is cut by a
//! logic decoy under both) and every fan-in cone computes the same function.

pub mod census;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::cnf::{CnfProblem, Lit, SolveResult};
use crate::constraints::{latch_bits, PhaseEncoder};
use crate::netlist::{CellId, CellKind, KeyVector, LatchMode, NetId, Netlist};
use crate::sim::latch_mode;
use crate::timing::paths::{cycle_transitions, resolve_path, transitions};
use crate::timing::{enumerate_paths, Anchor, AnchorKind, DelayModel, LatchCycle, PathOptions, Ph};

/// Phase-change counter for one anchored path.
#[derive(Clone, Debug, Serialize)]
pub struct PathDelayCounter {
    pub id: usize,
    pub source: Anchor,
    #[serde(serialize_with = "ser_cells")]
    pub latches: Vec<CellId>,
    pub sink: Anchor,
}

fn ser_cells<S: serde::Serializer>(v: &[CellId], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|c| c.0))
}

/// A point whose combinational fan-in is compared between keys.
#[derive(Clone, Debug, Serialize)]
pub struct ConePoint {
    pub name: String,
    #[serde(skip)]
    pub net: NetId,
    /// The keyed latch this point feeds, if any.
    #[serde(skip)]
    pub latch: Option<CellId>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Counters {
    pub paths: Vec<PathDelayCounter>,
    #[serde(skip)]
    pub cycles: Vec<LatchCycle>,
    pub points: Vec<ConePoint>,
    pub truncated: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum PathVerdict {
    Broken,
    Count(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Witness {
    Path(usize),
    Cycle(usize),
    Cone(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum EquivalenceVerdict {
    Equivalent,
    Inequivalent(Witness),
}

/// Counters for every anchored latch path (output sinks in both phases),
/// every latch cycle, and the cone points.
pub fn build_counters(n: &Netlist, opts: PathOptions) -> Counters {
    let set = enumerate_paths(
        n,
        &DelayModel::default(),
        PathOptions {
            dual_output_anchors: true,
            ..opts
        },
    );
    let mut seen = std::collections::HashSet::new();
    let mut paths = Vec::new();
    for p in &set.paths {
        // every suffix too: a latch whose whole fan-in is cut still shows
        // its stored value, and the suffix is the only path that sees it
        for i in 0..p.latches.len() {
            if !seen.insert((p.latches[i..].to_vec(), p.sink.phase)) {
                continue;
            }
            let source = if i == 0 {
                p.source.clone()
            } else {
                Anchor {
                    kind: AnchorKind::Latch,
                    name: n.cell(p.latches[i]).name.clone(),
                    phase: Ph::Pos,
                }
            };
            paths.push(PathDelayCounter {
                id: paths.len(),
                source,
                latches: p.latches[i..].to_vec(),
                sink: p.sink.clone(),
            });
        }
    }
    let mut points: Vec<ConePoint> = n
        .outputs()
        .iter()
        .enumerate()
        .map(|(i, &o)| ConePoint {
            name: format!("output {}#{i}", n.net_name(o)),
            net: o,
            latch: None,
        })
        .collect();
    for c in n.cell_ids() {
        let cell = n.cell(c);
        if cell.kind.is_sequential() {
            points.push(ConePoint {
                name: format!("{} {}", cell.kind, cell.name),
                net: cell.inputs[0],
                latch: (cell.kind == CellKind::Klatch).then_some(c),
            });
        }
    }
    Counters {
        paths,
        cycles: set.cycles,
        points,
        truncated: set.truncated,
    }
}

fn as_path(c: &PathDelayCounter) -> crate::timing::LatchPath {
    crate::timing::LatchPath {
        source: c.source.clone(),
        latches: c.latches.clone(),
        sink: c.sink.clone(),
        segs: vec![0; c.latches.len() + 1],
    }
}

pub fn path_verdict(n: &Netlist, key: &KeyVector, c: &PathDelayCounter) -> PathVerdict {
    match resolve_path(n, key, &as_path(c)) {
        Some(ph) => PathVerdict::Count(transitions(&ph)),
        None => PathVerdict::Broken,
    }
}

pub fn cycle_verdict(n: &Netlist, key: &KeyVector, c: &LatchCycle) -> PathVerdict {
    match cycle_transitions(n, key, c) {
        Some(t) => PathVerdict::Count(t),
        None => PathVerdict::Broken,
    }
}

/// Path and cycle verdicts of one key, in counter order.
pub fn signature(n: &Netlist, counters: &Counters, key: &KeyVector) -> Vec<PathVerdict> {
    counters
        .paths
        .iter()
        .map(|c| path_verdict(n, key, c))
        .chain(counters.cycles.iter().map(|c| cycle_verdict(n, key, c)))
        .collect()
}

/// Combinational value of every net with all state elements cut open.
/// State outputs are the shared `leaves`; keyed latches in logic-decoy mode
/// read as 0.
fn cone_values(p: &mut CnfProblem, n: &Netlist, key: &[Lit], leaves: &[Option<Lit>]) -> Vec<Lit> {
    let f = p.constant(false);
    let mut v = vec![f; n.num_nets()];
    for (i, l) in leaves.iter().enumerate() {
        if let Some(l) = l {
            v[i] = *l;
        }
    }
    for (i, &k) in n.key_inputs().iter().enumerate() {
        v[k.index()] = key[i];
    }
    let order = n.topo_order(&|_| false).expect("valid netlist");
    for c in order {
        let cell = n.cell(c);
        let out = cell.output.index();
        v[out] = match cell.kind {
            CellKind::Klatch => {
                let (a, b) = latch_bits(n, key, p, c);
                let live = p.or(&[a, b]);
                p.and(&[leaves[out].unwrap(), live])
            }
            k if k.is_sequential() => leaves[out].unwrap(),
            k => {
                let ins: Vec<Lit> = cell.inputs.iter().map(|i| v[i.index()]).collect();
                p.gate(k, &ins)
            }
        };
    }
    v
}

fn fresh_leaves(p: &mut CnfProblem, n: &Netlist) -> Vec<Option<Lit>> {
    let mut leaves = vec![None; n.num_nets()];
    for &i in n.inputs().iter().chain(n.reset().iter()) {
        leaves[i.index()] = Some(p.new_lit());
    }
    for c in n.sequential_cells() {
        leaves[n.cell(c).output.index()] = Some(p.new_lit());
    }
    leaves
}

/// Per cone point: a literal true iff the two keys give the point different
/// functions under the shared leaf assignment.
fn cone_diffs(
    p: &mut CnfProblem,
    n: &Netlist,
    counters: &Counters,
    k0: &[Lit],
    k1: &[Lit],
) -> Vec<Lit> {
    let leaves = fresh_leaves(p, n);
    let va = cone_values(p, n, k0, &leaves);
    let vb = cone_values(p, n, k1, &leaves);
    counters
        .points
        .iter()
        .map(|pt| {
            let d = p.xor2(va[pt.net.index()], vb[pt.net.index()]);
            match pt.latch {
                Some(c) => {
                    let (a0, b0) = latch_bits(n, k0, p, c);
                    let (a1, b1) = latch_bits(n, k1, p, c);
                    // the data pin of a latch cut under both keys is dead
                    let live = p.or(&[a0, b0, a1, b1]);
                    p.and(&[d, live])
                }
                None => d,
            }
        })
        .collect()
}

/// Decides whether two keys fall into the same functionality class.
pub fn keys_equivalent(
    n: &Netlist,
    counters: &Counters,
    ka: &KeyVector,
    kb: &KeyVector,
) -> EquivalenceVerdict {
    for (i, c) in counters.paths.iter().enumerate() {
        if path_verdict(n, ka, c) != path_verdict(n, kb, c) {
            return EquivalenceVerdict::Inequivalent(Witness::Path(i));
        }
    }
    for (i, c) in counters.cycles.iter().enumerate() {
        if cycle_verdict(n, ka, c) != cycle_verdict(n, kb, c) {
            return EquivalenceVerdict::Inequivalent(Witness::Cycle(i));
        }
    }
    let mut p = CnfProblem::new();
    let k0: Vec<Lit> = ka.0.iter().map(|&b| p.constant(b)).collect();
    let k1: Vec<Lit> = kb.0.iter().map(|&b| p.constant(b)).collect();
    let diffs = cone_diffs(&mut p, n, counters, &k0, &k1);
    for (pt, d) in counters.points.iter().zip(diffs) {
        if p.as_const(d) == Some(false) {
            continue;
        }
        if p.solve_unlimited(&[d]) == SolveResult::Sat {
            return EquivalenceVerdict::Inequivalent(Witness::Cone(pt.name.clone()));
        }
    }
    EquivalenceVerdict::Equivalent
}

/// Transition count of a path as a little-endian number plus a broken flag.
fn encode_path(
    p: &mut CnfProblem,
    n: &Netlist,
    key: &[Lit],
    enc: &mut PhaseEncoder,
    c: &PathDelayCounter,
) -> (Lit, Vec<Lit>) {
    let mut changes = Vec::with_capacity(c.latches.len() + 1);
    let mut prev = p.constant(true);
    let mut brk = p.constant(false);
    for i in 1..=c.latches.len() {
        let (b, pos) = enc.prefix(p, n, key, &c.latches[..i]);
        changes.push(p.xor2(prev, pos));
        prev = pos;
        brk = b;
    }
    let sink = p.constant(c.sink.phase == Ph::Pos);
    changes.push(p.xor2(prev, sink));
    let count = p.popcount(&changes);
    (brk, count)
}

/// Circular transition count: one lap to settle the phase carried into
/// leading clear latches, a second lap to count.
fn encode_cycle(p: &mut CnfProblem, n: &Netlist, key: &[Lit], c: &LatchCycle) -> (Lit, Vec<Lit>) {
    let bits: Vec<(Lit, Lit)> = c
        .latches
        .iter()
        .map(|&l| latch_bits(n, key, p, l))
        .collect();
    let decoys: Vec<Lit> = bits.iter().map(|&(a, b)| p.and(&[!a, !b])).collect();
    let brk = p.or(&decoys);
    let mut pos = p.constant(true);
    let step = |p: &mut CnfProblem, pos: Lit, (a, b): (Lit, Lit)| {
        let clear = p.and(&[a, b]);
        p.mux(clear, b, pos)
    };
    for &ab in &bits {
        pos = step(p, pos, ab);
    }
    let mut changes = Vec::new();
    for &ab in &bits {
        let next = step(p, pos, ab);
        changes.push(p.xor2(pos, next));
        pos = next;
    }
    let count = p.popcount(&changes);
    (brk, count)
}

fn verdicts_differ(
    p: &mut CnfProblem,
    (ba, ca): (Lit, Vec<Lit>),
    (bb, cb): (Lit, Vec<Lit>),
) -> Lit {
    let one_broken = p.xor2(ba, bb);
    let counts = p.words_differ(&ca, &cb);
    let live_differ = p.and(&[!ba, !bb, counts]);
    p.or(&[one_broken, live_differ])
}

/// A literal true iff the keys on `k0` and `k1` are inequivalent.
pub fn build_inequivalence_circuit(
    p: &mut CnfProblem,
    n: &Netlist,
    counters: &Counters,
    k0: &[Lit],
    k1: &[Lit],
) -> Lit {
    let mut any = Vec::new();
    let (mut ea, mut eb) = (PhaseEncoder::new(), PhaseEncoder::new());
    for c in &counters.paths {
        let a = encode_path(p, n, k0, &mut ea, c);
        let b = encode_path(p, n, k1, &mut eb, c);
        any.push(verdicts_differ(p, a, b));
    }
    for c in &counters.cycles {
        let a = encode_cycle(p, n, k0, c);
        let b = encode_cycle(p, n, k1, c);
        any.push(verdicts_differ(p, a, b));
    }
    any.extend(cone_diffs(p, n, counters, k0, k1));
    p.or(&any)
}

/// Leaf assignment (state outputs and inputs by net name) under which the
/// cone at `point` differs between the keys.
pub fn cone_witness(
    n: &Netlist,
    counters: &Counters,
    ka: &KeyVector,
    kb: &KeyVector,
    point: &str,
) -> Option<BTreeMap<String, bool>> {
    let idx = counters.points.iter().position(|p| p.name == point)?;
    let mut p = CnfProblem::new();
    let k0: Vec<Lit> = ka.0.iter().map(|&b| p.constant(b)).collect();
    let k1: Vec<Lit> = kb.0.iter().map(|&b| p.constant(b)).collect();
    let leaves = fresh_leaves(&mut p, n);
    let va = cone_values(&mut p, n, &k0, &leaves);
    let vb = cone_values(&mut p, n, &k1, &leaves);
    let net = counters.points[idx].net.index();
    let d = p.xor2(va[net], vb[net]);
    if p.solve_unlimited(&[d]) != SolveResult::Sat {
        return None;
    }
    Some(
        leaves
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.map(|l| (n.net_name(NetId(i as u32)).to_string(), p.value(l))))
            .collect(),
    )
}

/// Direct evaluation of a net with state elements cut open and driven from
/// `leaves`; logic-decoy latches read as 0.
pub fn eval_cone(
    n: &Netlist,
    key: &KeyVector,
    leaves: &BTreeMap<String, bool>,
    net: NetId,
) -> bool {
    let mut v = vec![false; n.num_nets()];
    for (name, &b) in leaves {
        if let Some(id) = n.net_id(name) {
            v[id.index()] = b;
        }
    }
    for (i, &k) in n.key_inputs().iter().enumerate() {
        v[k.index()] = key.bit(i);
    }
    for c in n.topo_order(&|_| false).expect("valid netlist") {
        let cell = n.cell(c);
        let out = cell.output.index();
        if cell.kind.is_sequential() {
            if is_logic_decoy(n, key, c) {
                v[out] = false;
            }
            continue;
        }
        let ins: Vec<bool> = cell.inputs.iter().map(|i| v[i.index()]).collect();
        v[out] = cell.kind.eval(&ins);
    }
    v[net.index()]
}

/// Re-checks a witness without the solver-side counters: paths and cycles
/// by their phase strings, cones by a concrete leaf assignment evaluated
/// gate by gate.
pub fn verify_witness(
    n: &Netlist,
    counters: &Counters,
    ka: &KeyVector,
    kb: &KeyVector,
    w: &Witness,
) -> bool {
    match w {
        Witness::Path(i) => {
            path_verdict(n, ka, &counters.paths[*i]) != path_verdict(n, kb, &counters.paths[*i])
        }
        Witness::Cycle(i) => {
            cycle_verdict(n, ka, &counters.cycles[*i]) != cycle_verdict(n, kb, &counters.cycles[*i])
        }
        Witness::Cone(name) => {
            let Some(pt) = counters.points.iter().find(|p| &p.name == name) else {
                return false;
            };
            let Some(leaves) = cone_witness(n, counters, ka, kb, name) else {
                return false;
            };
            eval_cone(n, ka, &leaves, pt.net) != eval_cone(n, kb, &leaves, pt.net)
        }
    }
}

/// Groups keys into classes by pairwise verdicts against a representative.
pub fn classify(n: &Netlist, counters: &Counters, keys: &[KeyVector]) -> Vec<usize> {
    let mut reps: Vec<(Vec<PathVerdict>, usize)> = Vec::new();
    let mut class = Vec::with_capacity(keys.len());
    for (i, k) in keys.iter().enumerate() {
        let sig = signature(n, counters, k);
        let found = reps.iter().position(|(s, r)| {
            *s == sig
                && keys_equivalent(n, counters, &keys[*r], k) == EquivalenceVerdict::Equivalent
        });
        match found {
            Some(c) => class.push(c),
            None => {
                class.push(reps.len());
                reps.push((sig, i));
            }
        }
    }
    class
}

/// Whether a latch under `key` is cut to a constant.
pub fn is_logic_decoy(n: &Netlist, key: &KeyVector, c: CellId) -> bool {
    latch_mode(n, key, c) == Some(LatchMode::LogicDecoy)
}
