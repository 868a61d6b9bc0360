//! Key-space constraints an attacker can derive from structure alone: a
//! key must not close a transparent loop and must not squeeze a long delay
//! span into too few clock phases.

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::cnf::{CnfProblem, Lit};
use crate::netlist::{CellId, CellKind, KeyVector, Netlist};
use crate::sim::latch_mode;
use crate::timing::{
    enumerate_paths, enumerate_windows_in, window_ok, ClockSpec, DelayModel, LatchPathWindow,
    PathOptions, PathSet, Ph,
};

#[derive(Debug, Error)]
pub enum ConstraintError {
    #[error("{bits} key bits exceeds the counting limit of {limit}; raise the limit or count a smaller lock")]
    TooManyBits { bits: usize, limit: usize },
    #[error("path enumeration stopped after {cap} items")]
    Truncated { cap: usize },
}

/// A latch cycle: no key may make all of it transparent in the same phase.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LoopConstraint {
    pub id: usize,
    #[serde(serialize_with = "ser_cells")]
    pub latches: Vec<CellId>,
}

fn ser_cells<S: serde::Serializer>(v: &[CellId], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|c| c.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Provenance {
    Cycle(usize),
    Window(usize),
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct KeyConstraintSet {
    pub loops: Vec<LoopConstraint>,
    pub windows: Vec<LatchPathWindow>,
    /// Enumeration hit its cap; the set is then incomplete.
    pub truncated: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct KeyCounts {
    pub bits: usize,
    pub loop_only: u64,
    pub timing_only: u64,
    pub intersection: u64,
}

pub fn gen_loop_constraints(n: &Netlist, opts: PathOptions) -> KeyConstraintSet {
    let set = enumerate_paths(n, &DelayModel::default(), opts);
    from_paths(&set, None)
}

pub fn gen_timing_constraints(
    n: &Netlist,
    dm: &DelayModel,
    clk: ClockSpec,
    opts: PathOptions,
) -> KeyConstraintSet {
    let set = enumerate_paths(n, dm, opts);
    let mut out = from_paths(&set, Some(clk.period));
    out.loops.clear();
    out
}

/// Both families from one path enumeration.
pub fn generate(
    n: &Netlist,
    dm: &DelayModel,
    clk: ClockSpec,
    opts: PathOptions,
) -> KeyConstraintSet {
    from_paths(&enumerate_paths(n, dm, opts), Some(clk.period))
}

fn from_paths(set: &PathSet, period: Option<u64>) -> KeyConstraintSet {
    KeyConstraintSet {
        loops: set
            .cycles
            .iter()
            .enumerate()
            .map(|(id, c)| LoopConstraint {
                id,
                latches: c.latches.clone(),
            })
            .collect(),
        windows: period
            .map(|t| enumerate_windows_in(set, t))
            .unwrap_or_default(),
        truncated: set.truncated,
    }
}

/// Key literals of one latch, or the fixed values of a keyless latch.
pub(crate) fn latch_bits(n: &Netlist, key: &[Lit], p: &CnfProblem, c: CellId) -> (Lit, Lit) {
    let cell = n.cell(c);
    match cell.kind {
        CellKind::Klatch => {
            let [a, b] = cell.key.expect("keyed latch");
            (key[a], key[b])
        }
        CellKind::LatchP => (p.constant(false), p.constant(true)),
        CellKind::LatchN => (p.constant(true), p.constant(false)),
        k => panic!("{k} is not a latch"),
    }
}

impl KeyConstraintSet {
    pub fn merge(mut self, other: KeyConstraintSet) -> KeyConstraintSet {
        let base = self.loops.len();
        self.loops.extend(other.loops.into_iter().map(|mut l| {
            l.id += base;
            l
        }));
        self.windows.extend(other.windows);
        self.truncated |= other.truncated;
        self
    }

    pub fn is_empty(&self) -> bool {
        self.loops.is_empty() && self.windows.is_empty()
    }

    pub fn check_complete(&self, cap: usize) -> Result<(), ConstraintError> {
        if self.truncated {
            Err(ConstraintError::Truncated { cap })
        } else {
            Ok(())
        }
    }

    pub fn loops_ok(&self, n: &Netlist, key: &KeyVector) -> bool {
        self.loops.iter().all(|l| {
            let modes: Vec<_> = l
                .latches
                .iter()
                .map(|&c| latch_mode(n, key, c).unwrap())
                .collect();
            modes.iter().any(|m| !m.transparent_high())
                && modes.iter().any(|m| !m.transparent_low())
        })
    }

    pub fn timing_ok(&self, n: &Netlist, key: &KeyVector) -> bool {
        self.windows.iter().all(|w| window_ok(n, key, w))
    }

    pub fn satisfied(&self, n: &Netlist, key: &KeyVector) -> bool {
        self.loops_ok(n, key) && self.timing_ok(n, key)
    }

    /// One literal per loop constraint, true iff it holds.
    pub fn encode_loops(
        &self,
        p: &mut CnfProblem,
        n: &Netlist,
        key: &[Lit],
    ) -> Vec<(Provenance, Lit)> {
        self.loops
            .iter()
            .map(|l| {
                let bits: Vec<(Lit, Lit)> = l
                    .latches
                    .iter()
                    .map(|&c| latch_bits(n, key, p, c))
                    .collect();
                let opaque_high: Vec<Lit> = bits.iter().map(|&(_, b)| !b).collect();
                let opaque_low: Vec<Lit> = bits.iter().map(|&(a, _)| !a).collect();
                let h = p.or(&opaque_high);
                let lo = p.or(&opaque_low);
                (Provenance::Cycle(l.id), p.and(&[h, lo]))
            })
            .collect()
    }

    /// One literal per window, true iff it holds.
    pub fn encode_timing(
        &self,
        p: &mut CnfProblem,
        n: &Netlist,
        key: &[Lit],
    ) -> Vec<(Provenance, Lit)> {
        let mut enc = PhaseEncoder {
            memo: HashMap::new(),
        };
        self.windows
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let (brk, mut pos) = enc.prefix(p, n, key, &w.prefix);
                let mut escape = vec![brk];
                let mut changes = Vec::new();
                for &c in &w.span {
                    let (a, b) = latch_bits(n, key, p, c);
                    escape.push(p.and(&[!a, !b]));
                    let clear = p.and(&[a, b]);
                    let next = p.mux(clear, b, pos);
                    changes.push(p.xor2(pos, next));
                    pos = next;
                }
                if w.reaches_sink {
                    let sink = p.constant(w.sink_phase == Ph::Pos);
                    changes.push(p.xor2(pos, sink));
                }
                escape.push(p.at_least(&changes, w.required as usize));
                (Provenance::Window(i), p.or(&escape))
            })
            .collect()
    }

    /// Adds every constraint as a hard clause.
    pub fn assert_all(&self, p: &mut CnfProblem, n: &Netlist, key: &[Lit]) {
        for (_, l) in self
            .encode_loops(p, n, key)
            .into_iter()
            .chain(self.encode_timing(p, n, key))
        {
            p.add_clause(&[l]);
        }
    }
}

/// Shares the resolved phase of common path prefixes between windows.
pub(crate) struct PhaseEncoder {
    memo: HashMap<Vec<CellId>, (Lit, Lit)>,
}

impl PhaseEncoder {
    pub(crate) fn new() -> Self {
        PhaseEncoder {
            memo: HashMap::new(),
        }
    }

    /// `(broken, positive)` after the prefix, starting from a positive source.
    pub(crate) fn prefix(
        &mut self,
        p: &mut CnfProblem,
        n: &Netlist,
        key: &[Lit],
        prefix: &[CellId],
    ) -> (Lit, Lit) {
        if prefix.is_empty() {
            return (p.constant(false), p.constant(true));
        }
        if let Some(&v) = self.memo.get(prefix) {
            return v;
        }
        let (brk, pos) = self.prefix(p, n, key, &prefix[..prefix.len() - 1]);
        let (a, b) = latch_bits(n, key, p, *prefix.last().unwrap());
        let dec = p.and(&[!a, !b]);
        let brk2 = p.or(&[brk, dec]);
        let clear = p.and(&[a, b]);
        let pos2 = p.mux(clear, b, pos);
        self.memo.insert(prefix.to_vec(), (brk2, pos2));
        (brk2, pos2)
    }
}

/// Key-independent check straight from the definitions: no phase may see a
/// transparent loop.
pub fn direct_loop_ok(n: &Netlist, key: &KeyVector) -> bool {
    let mode = |c: CellId| latch_mode(n, key, c);
    let high = n
        .topo_order(&|c| mode(c).is_some_and(|m| m.transparent_high()))
        .is_ok();
    let low = n
        .topo_order(&|c| mode(c).is_some_and(|m| m.transparent_low()))
        .is_ok();
    high && low
}

/// Exact counts of keys passing each family, 64 keys per evaluation.
pub fn count_valid_keys(
    n: &Netlist,
    set: &KeyConstraintSet,
    limit: usize,
) -> Result<KeyCounts, ConstraintError> {
    let bits = n.num_key_bits();
    if bits > limit || bits > 40 {
        return Err(ConstraintError::TooManyBits { bits, limit });
    }
    let total: u64 = 1 << bits;
    let lane_bits = bits.min(6);
    let mut counts = KeyCounts {
        bits,
        loop_only: 0,
        timing_only: 0,
        intersection: 0,
    };
    let mut eval = SliceEval::new(n, set);
    let mut base = 0u64;
    while base < total {
        // key index = base + lane; string bit i carries index bit (bits-1-i)
        let words: Vec<u64> = (0..bits)
            .map(|i| {
                let pos = bits - 1 - i;
                if pos < lane_bits {
                    LANE_PATTERNS[pos]
                } else if base >> pos & 1 == 1 {
                    !0
                } else {
                    0
                }
            })
            .collect();
        let live = if lane_bits < 6 {
            (1u64 << (1 << lane_bits)) - 1
        } else {
            !0
        };
        let (lp, tm) = eval.eval(&words);
        counts.loop_only += (lp & live).count_ones() as u64;
        counts.timing_only += (tm & live).count_ones() as u64;
        counts.intersection += (lp & tm & live).count_ones() as u64;
        base += 64;
    }
    Ok(counts)
}

const LANE_PATTERNS: [u64; 6] = [
    0xAAAA_AAAA_AAAA_AAAA,
    0xCCCC_CCCC_CCCC_CCCC,
    0xF0F0_F0F0_F0F0_F0F0,
    0xFF00_FF00_FF00_FF00,
    0xFFFF_0000_FFFF_0000,
    0xFFFF_FFFF_0000_0000,
];

/// Bit-parallel evaluation of a constraint set.
struct SliceEval<'a> {
    n: &'a Netlist,
    set: &'a KeyConstraintSet,
    memo: HashMap<Vec<CellId>, (u64, u64)>,
}

impl<'a> SliceEval<'a> {
    fn new(n: &'a Netlist, set: &'a KeyConstraintSet) -> Self {
        SliceEval {
            n,
            set,
            memo: HashMap::new(),
        }
    }

    fn bits(&self, words: &[u64], c: CellId) -> (u64, u64) {
        let cell = self.n.cell(c);
        match cell.kind {
            CellKind::Klatch => {
                let [a, b] = cell.key.unwrap();
                (words[a], words[b])
            }
            CellKind::LatchP => (0, !0),
            _ => (!0, 0),
        }
    }

    fn prefix(&mut self, words: &[u64], prefix: &[CellId]) -> (u64, u64) {
        if prefix.is_empty() {
            return (0, !0);
        }
        if let Some(&v) = self.memo.get(prefix) {
            return v;
        }
        let (brk, pos) = self.prefix(words, &prefix[..prefix.len() - 1]);
        let (a, b) = self.bits(words, *prefix.last().unwrap());
        let clear = a & b;
        let v = (brk | (!a & !b), (clear & pos) | (!clear & b));
        self.memo.insert(prefix.to_vec(), v);
        v
    }

    fn eval(&mut self, words: &[u64]) -> (u64, u64) {
        self.memo.clear();
        let mut lp = !0u64;
        for l in &self.set.loops {
            let (mut h, mut lo) = (0u64, 0u64);
            for &c in &l.latches {
                let (a, b) = self.bits(words, c);
                h |= !b;
                lo |= !a;
            }
            lp &= h & lo;
        }
        let mut tm = !0u64;
        for w in &self.set.windows {
            let (brk, mut pos) = self.prefix(words, &w.prefix);
            let mut escape = brk;
            let (mut one, mut two) = (0u64, 0u64);
            let mut change = |x: u64| {
                two |= one & x;
                one |= x;
            };
            for &c in &w.span {
                let (a, b) = self.bits(words, c);
                escape |= !a & !b;
                let clear = a & b;
                let next = (clear & pos) | (!clear & b);
                change(pos ^ next);
                pos = next;
            }
            if w.reaches_sink {
                let sink = if w.sink_phase == Ph::Pos { !0 } else { 0 };
                change(pos ^ sink);
            }
            let need = if w.required >= 2 { two } else { one };
            tm &= escape | need;
        }
        (lp, tm)
    }
}
