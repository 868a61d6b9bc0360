//! Latch-level paths: chains of latches between fixed anchors, and latch
//! cycles, each with the combinational delay of every segment.

use std::collections::BTreeMap;

use serde::Serialize;

use super::delay::DelayModel;
use crate::netlist::{CellId, CellKind, KeyVector, LatchMode, NetId, Netlist};
use crate::sim::latch_mode;

/// Clock phase a path element is tied to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Ph {
    Pos,
    Neg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum AnchorKind {
    Input,
    Reset,
    FlipFlop,
    Output,
    /// A path starting at a latch's stored value.
    Latch,
}

/// A path end in the unmodified part of the design.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Anchor {
    pub kind: AnchorKind,
    pub name: String,
    pub phase: Ph,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LatchPath {
    pub source: Anchor,
    #[serde(serialize_with = "ser_cells")]
    pub latches: Vec<CellId>,
    pub sink: Anchor,
    /// `segs[i]` is the delay from element `i` to element `i + 1`, counting
    /// the launching element's own delay; elements are
    /// `[source, latches.., sink]`.
    pub segs: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LatchCycle {
    #[serde(serialize_with = "ser_cells")]
    pub latches: Vec<CellId>,
    /// `segs[i]` runs from `latches[i]` to `latches[(i + 1) % len]`.
    pub segs: Vec<u64>,
}

fn ser_cells<S: serde::Serializer>(v: &[CellId], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|c| c.0))
}

#[derive(Clone, Debug, Default)]
pub struct PathSet {
    pub paths: Vec<LatchPath>,
    pub cycles: Vec<LatchCycle>,
    /// Source-to-sink connections that pass through no latch.
    pub direct: Vec<(Anchor, Anchor)>,
    /// Set when the enumeration stopped at the cap.
    pub truncated: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct PathOptions {
    pub cap: usize,
    /// Emit two sink anchors per primary output, one per phase, instead of a
    /// single negative-phase one.
    pub dual_output_anchors: bool,
}

impl Default for PathOptions {
    fn default() -> Self {
        PathOptions {
            cap: 1_000_000,
            dual_output_anchors: false,
        }
    }
}

/// Where a combinational route ends.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub(crate) enum Target {
    Seq(CellId),
    Output(usize),
}

/// Longest combinational delay from every net to every reachable endpoint
/// (sequential data pin or primary output).
pub(crate) struct Reach {
    pub per_net: Vec<BTreeMap<Target, u64>>,
}

impl Reach {
    pub fn new(n: &Netlist, dm: &DelayModel) -> Reach {
        let mut per_net: Vec<BTreeMap<Target, u64>> = vec![BTreeMap::new(); n.num_nets()];
        let order = n.topo_order(&|_| false).expect("valid netlist");
        let mut out_index: BTreeMap<NetId, Vec<usize>> = BTreeMap::new();
        for (i, &o) in n.outputs().iter().enumerate() {
            out_index.entry(o).or_default().push(i);
        }
        let seed = |net: NetId, m: &mut BTreeMap<Target, u64>| {
            for &r in n.readers(net) {
                if n.cell(r).kind.is_sequential() {
                    m.insert(Target::Seq(r), 0);
                }
            }
            if let Some(is) = out_index.get(&net) {
                for &i in is {
                    m.insert(Target::Output(i), 0);
                }
            }
        };
        // reverse topological: every reader is finished first
        for &c in order.iter().rev() {
            let cell = n.cell(c);
            if !cell.kind.is_combinational() {
                continue;
            }
            let mut m = BTreeMap::new();
            seed(cell.output, &mut m);
            for &r in n.readers(cell.output) {
                let rc = n.cell(r);
                if rc.kind.is_combinational() {
                    let d = dm.cell_delay(n, r);
                    for (&t, &x) in &per_net[rc.output.index()] {
                        let e = m.entry(t).or_insert(0);
                        *e = (*e).max(x + d);
                    }
                }
            }
            per_net[cell.output.index()] = m;
        }
        // nets driven by ports or sequential cells
        for net in (0..n.num_nets()).map(|i| NetId(i as u32)) {
            if matches!(n.driver(net), Some(crate::netlist::Driver::Cell(c)) if n.cell(c).kind.is_combinational())
            {
                continue;
            }
            let mut m = BTreeMap::new();
            seed(net, &mut m);
            for &r in n.readers(net) {
                let rc = n.cell(r);
                if rc.kind.is_combinational() {
                    let d = dm.cell_delay(n, r);
                    for (&t, &x) in &per_net[rc.output.index()] {
                        let e = m.entry(t).or_insert(0);
                        *e = (*e).max(x + d);
                    }
                }
            }
            per_net[net.index()] = m;
        }
        Reach { per_net }
    }
}

/// Latch-level graph of a netlist.
pub struct LatchGraph {
    pub sources: Vec<(Anchor, NetId)>,
    pub latches: Vec<CellId>,
    /// Per source: (target, delay).
    source_edges: Vec<Vec<(Target, u64)>>,
    /// Per latch (index into `latches`): (target, delay), delay counting the latch itself.
    latch_edges: Vec<Vec<(Target, u64)>>,
    latch_index: BTreeMap<CellId, usize>,
}

impl LatchGraph {
    pub fn new(n: &Netlist, dm: &DelayModel) -> LatchGraph {
        let reach = Reach::new(n, dm);
        let mut sources = Vec::new();
        for &i in n.inputs() {
            sources.push((anchor(AnchorKind::Input, n.net_name(i), Ph::Pos), i));
        }
        if let Some(r) = n.reset() {
            sources.push((anchor(AnchorKind::Reset, n.net_name(r), Ph::Pos), r));
        }
        for c in n.flip_flops() {
            let cell = n.cell(c);
            sources.push((
                anchor(AnchorKind::FlipFlop, &cell.name, Ph::Pos),
                cell.output,
            ));
        }
        let latches: Vec<CellId> = n
            .cell_ids()
            .filter(|&c| n.cell(c).kind.is_latch())
            .collect();
        let edges_of = |net: NetId, own: u64| -> Vec<(Target, u64)> {
            reach.per_net[net.index()]
                .iter()
                .map(|(&t, &d)| (t, d + own))
                .collect()
        };
        let source_edges = sources.iter().map(|(_, net)| edges_of(*net, 0)).collect();
        let latch_edges = latches
            .iter()
            .map(|&c| edges_of(n.cell(c).output, dm.cell_delay(n, c)))
            .collect();
        let latch_index = latches.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        LatchGraph {
            sources,
            latches,
            source_edges,
            latch_edges,
            latch_index,
        }
    }

    fn is_latch(&self, n: &Netlist, t: Target) -> Option<usize> {
        match t {
            Target::Seq(c) if n.cell(c).kind.is_latch() => self.latch_index.get(&c).copied(),
            _ => None,
        }
    }

    fn sinks(&self, n: &Netlist, t: Target, dual: bool) -> Vec<Anchor> {
        match t {
            Target::Seq(c) if n.cell(c).kind == CellKind::Dff => {
                vec![anchor(AnchorKind::FlipFlop, &n.cell(c).name, Ph::Neg)]
            }
            Target::Output(i) => {
                let name = n.net_name(n.outputs()[i]);
                let name = format!("{name}#{i}");
                if dual {
                    vec![
                        anchor(AnchorKind::Output, &name, Ph::Pos),
                        anchor(AnchorKind::Output, &name, Ph::Neg),
                    ]
                } else {
                    vec![anchor(AnchorKind::Output, &name, Ph::Neg)]
                }
            }
            _ => Vec::new(),
        }
    }

    /// Largest delay of any edge from a source or latch.
    pub fn max_edge_delay(&self) -> u64 {
        self.source_edges
            .iter()
            .chain(&self.latch_edges)
            .flatten()
            .map(|&(_, d)| d)
            .max()
            .unwrap_or(0)
    }

    /// Latch successors of latch `i` with segment delays.
    pub fn latch_successors(&self, n: &Netlist, i: usize) -> Vec<(usize, u64)> {
        self.latch_edges[i]
            .iter()
            .filter_map(|&(t, d)| self.is_latch(n, t).map(|j| (j, d)))
            .collect()
    }

    /// Every anchored path through at least one latch, plus every simple
    /// latch cycle, in a deterministic order.
    pub fn enumerate(&self, n: &Netlist, opts: PathOptions) -> PathSet {
        let mut set = PathSet::default();
        let mut budget = opts.cap;
        for (si, (src, _)) in self.sources.iter().enumerate() {
            for &(t, d) in &self.source_edges[si] {
                let Some(li) = self.is_latch(n, t) else {
                    for sink in self.sinks(n, t, opts.dual_output_anchors) {
                        set.direct.push((src.clone(), sink));
                    }
                    continue;
                };
                let mut stack = vec![li];
                let mut segs = vec![d];
                let mut on = vec![false; self.latches.len()];
                on[li] = true;
                if !self.extend(
                    n,
                    src,
                    &mut stack,
                    &mut segs,
                    &mut on,
                    &mut set,
                    &mut budget,
                    opts.dual_output_anchors,
                ) {
                    set.truncated = true;
                    return set;
                }
            }
        }
        set.truncated |= !self.cycles(n, &mut set, &mut budget);
        set
    }

    #[allow(clippy::too_many_arguments)]
    fn extend(
        &self,
        n: &Netlist,
        src: &Anchor,
        stack: &mut Vec<usize>,
        segs: &mut Vec<u64>,
        on: &mut Vec<bool>,
        set: &mut PathSet,
        budget: &mut usize,
        dual: bool,
    ) -> bool {
        let last = *stack.last().unwrap();
        for &(t, d) in &self.latch_edges[last] {
            if let Some(j) = self.is_latch(n, t) {
                if on[j] {
                    continue;
                }
                stack.push(j);
                segs.push(d);
                on[j] = true;
                let ok = self.extend(n, src, stack, segs, on, set, budget, dual);
                on[j] = false;
                segs.pop();
                stack.pop();
                if !ok {
                    return false;
                }
            } else {
                for sink in self.sinks(n, t, dual) {
                    if *budget == 0 {
                        return false;
                    }
                    *budget -= 1;
                    let mut s = segs.clone();
                    s.push(d);
                    set.paths.push(LatchPath {
                        source: src.clone(),
                        latches: stack.iter().map(|&i| self.latches[i]).collect(),
                        sink,
                        segs: s,
                    });
                }
            }
        }
        true
    }

    /// Johnson's elementary-circuit enumeration on the latch graph.
    fn cycles(&self, n: &Netlist, set: &mut PathSet, budget: &mut usize) -> bool {
        let m = self.latches.len();
        let succ: Vec<Vec<(usize, u64)>> = (0..m).map(|i| self.latch_successors(n, i)).collect();
        for s in 0..m {
            // restrict to nodes >= s
            let mut blocked = vec![false; m];
            let mut bmap: Vec<Vec<usize>> = vec![Vec::new(); m];
            let mut path: Vec<usize> = vec![s];
            let mut segs: Vec<u64> = Vec::new();
            // iterative version of the classic recursion
            struct Frame {
                v: usize,
                next: usize,
                found: bool,
            }
            let mut frames = vec![Frame {
                v: s,
                next: 0,
                found: false,
            }];
            blocked[s] = true;
            while let Some(top) = frames.last_mut() {
                let v = top.v;
                if top.next < succ[v].len() {
                    let (w, d) = succ[v][top.next];
                    top.next += 1;
                    if w < s {
                        continue;
                    }
                    if w == s {
                        if *budget == 0 {
                            return false;
                        }
                        *budget -= 1;
                        let mut sg = segs.clone();
                        sg.push(d);
                        set.cycles.push(LatchCycle {
                            latches: path.iter().map(|&i| self.latches[i]).collect(),
                            segs: sg,
                        });
                        top.found = true;
                    } else if !blocked[w] {
                        blocked[w] = true;
                        path.push(w);
                        segs.push(d);
                        frames.push(Frame {
                            v: w,
                            next: 0,
                            found: false,
                        });
                    }
                } else {
                    let f = frames.pop().unwrap();
                    if f.found {
                        unblock(f.v, &mut blocked, &mut bmap);
                    } else {
                        for &(w, _) in &succ[f.v] {
                            if w >= s && !bmap[w].contains(&f.v) {
                                bmap[w].push(f.v);
                            }
                        }
                    }
                    path.pop();
                    if !frames.is_empty() {
                        segs.pop();
                    }
                    if let Some(parent) = frames.last_mut() {
                        parent.found |= f.found;
                    }
                }
            }
        }
        true
    }
}

fn unblock(u: usize, blocked: &mut [bool], bmap: &mut [Vec<usize>]) {
    let mut stack = vec![u];
    while let Some(x) = stack.pop() {
        if !blocked[x] {
            continue;
        }
        blocked[x] = false;
        stack.extend(std::mem::take(&mut bmap[x]));
    }
}

fn anchor(kind: AnchorKind, name: &str, phase: Ph) -> Anchor {
    Anchor {
        kind,
        name: name.to_string(),
        phase,
    }
}

/// Convenience wrapper: build the latch graph and enumerate.
pub fn enumerate_paths(n: &Netlist, dm: &DelayModel, opts: PathOptions) -> PathSet {
    LatchGraph::new(n, dm).enumerate(n, opts)
}

/// Resolved phase string of an anchored path under `key`:
/// `[source, latches.., sink]`, clear latches taking the upstream phase.
/// `None` when a logic-decoy latch breaks the path.
pub fn resolve_path(n: &Netlist, key: &KeyVector, p: &LatchPath) -> Option<Vec<Ph>> {
    let mut out = Vec::with_capacity(p.latches.len() + 2);
    out.push(p.source.phase);
    for &c in &p.latches {
        let prev = *out.last().unwrap();
        out.push(match latch_mode(n, key, c)? {
            LatchMode::LogicDecoy => return None,
            LatchMode::PosPhase => Ph::Pos,
            LatchMode::NegPhase => Ph::Neg,
            LatchMode::Clear => prev,
        });
    }
    out.push(p.sink.phase);
    Some(out)
}

pub fn transitions(phases: &[Ph]) -> usize {
    phases.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Resolved verdict of a latch cycle: `None` if broken by a logic decoy,
/// otherwise the number of phase changes around the loop (0 when every
/// latch is clear or all share a phase).
pub fn cycle_transitions(n: &Netlist, key: &KeyVector, c: &LatchCycle) -> Option<usize> {
    let modes: Vec<LatchMode> = c
        .latches
        .iter()
        .map(|&l| latch_mode(n, key, l).unwrap())
        .collect();
    if modes.contains(&LatchMode::LogicDecoy) {
        return None;
    }
    let Some(start) = modes.iter().position(|&m| m != LatchMode::Clear) else {
        return Some(0);
    };
    let m = modes.len();
    let mut phases = Vec::with_capacity(m + 1);
    let mut cur = Ph::Pos;
    for k in 0..=m {
        let i = (start + k) % m;
        cur = match modes[i] {
            LatchMode::PosPhase => Ph::Pos,
            LatchMode::NegPhase => Ph::Neg,
            _ => cur,
        };
        phases.push(cur);
    }
    Some(transitions(&phases))
}
