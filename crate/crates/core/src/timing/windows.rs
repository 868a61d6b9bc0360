//! Delay windows along latch paths. A span of path delay longer than the
//! period must contain a phase change; a span longer than one and a half
//! periods must contain two.

use std::collections::HashSet;

use serde::Serialize;

use super::paths::{LatchPath, PathSet, Ph};
use crate::netlist::{CellId, KeyVector, LatchMode, Netlist};
use crate::sim::latch_mode;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LatchPathWindow {
    /// Index of the first path (in enumeration order) that produced it.
    pub path: usize,
    /// Latches from the path start up to and including the window's first
    /// element. Empty when the window starts at the source anchor. The
    /// phase entering the window is resolved from this prefix.
    #[serde(serialize_with = "ser_cells")]
    pub prefix: Vec<CellId>,
    /// Latches after the first element, up to the element that crosses the
    /// window end.
    #[serde(serialize_with = "ser_cells")]
    pub span: Vec<CellId>,
    /// The crossing element is the path's sink anchor.
    pub reaches_sink: bool,
    pub sink_phase: Ph,
    /// Delay offsets of the window on the path's cumulative axis.
    pub start: u64,
    pub end: u64,
    pub required: u8,
}

fn ser_cells<S: serde::Serializer>(v: &[CellId], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|c| c.0))
}

impl LatchPathWindow {
    /// Every latch whose position falls in the window.
    pub fn latches(&self) -> Vec<CellId> {
        self.prefix
            .last()
            .into_iter()
            .chain(&self.span)
            .copied()
            .collect()
    }
}

/// Cumulative delay position of every element `[source, latches.., sink]`.
pub fn positions(p: &LatchPath) -> Vec<u64> {
    let mut pos = vec![0u64];
    for &s in &p.segs {
        pos.push(pos.last().unwrap() + s);
    }
    pos
}

/// Windows of one path: for each start element, the shortest element run
/// whose delay exceeds the period (one change required) and the shortest
/// one exceeding one and a half periods (two required).
pub fn path_windows(p: &LatchPath, period: u64, index: usize) -> Vec<LatchPathWindow> {
    let pos = positions(p);
    let m = pos.len();
    let mut out = Vec::new();
    for (req, len2) in [(1u8, 2 * period), (2u8, 3 * period)] {
        // first element beyond the window end, per start element
        let ends: Vec<Option<usize>> = (0..m)
            .map(|i| (i + 1..m).find(|&j| 2 * (pos[j] - pos[i]) > len2))
            .collect();
        for i in 0..m - 1 {
            let Some(j) = ends[i] else { continue };
            // a later start reaching the same element is the stronger window
            if ends[i + 1] == Some(j) {
                continue;
            }
            let reaches_sink = j == m - 1;
            let last_latch = if reaches_sink { j - 1 } else { j };
            out.push(LatchPathWindow {
                path: index,
                prefix: p.latches[..i].to_vec(),
                span: p.latches[i..last_latch].to_vec(),
                reaches_sink,
                sink_phase: p.sink.phase,
                start: pos[i],
                end: pos[i] + len2 / 2,
                required: req,
            });
        }
    }
    out
}

/// All distinct windows over an enumerated path set.
pub fn enumerate_windows_in(set: &PathSet, period: u64) -> Vec<LatchPathWindow> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (k, p) in set.paths.iter().enumerate() {
        for w in path_windows(p, period, k) {
            let key = (
                w.prefix.clone(),
                w.span.clone(),
                w.reaches_sink,
                w.sink_phase,
                w.required,
            );
            if seen.insert(key) {
                out.push(w);
            }
        }
    }
    out
}

/// Resolved phase after a run of latches starting from a positive source.
/// `None` once a logic decoy cuts the signal.
pub fn resolve_prefix(n: &Netlist, key: &KeyVector, prefix: &[CellId]) -> Option<Ph> {
    let mut ph = Ph::Pos;
    for &c in prefix {
        ph = match latch_mode(n, key, c)? {
            LatchMode::LogicDecoy => return None,
            LatchMode::PosPhase => Ph::Pos,
            LatchMode::NegPhase => Ph::Neg,
            LatchMode::Clear => ph,
        };
    }
    Some(ph)
}

/// Whether `key` satisfies the window.
pub fn window_ok(n: &Netlist, key: &KeyVector, w: &LatchPathWindow) -> bool {
    let Some(mut ph) = resolve_prefix(n, key, &w.prefix) else {
        return true;
    };
    let mut changes = 0u8;
    for &c in &w.span {
        let next = match latch_mode(n, key, c).expect("latch") {
            LatchMode::LogicDecoy => return true,
            LatchMode::PosPhase => Ph::Pos,
            LatchMode::NegPhase => Ph::Neg,
            LatchMode::Clear => ph,
        };
        changes += (next != ph) as u8;
        ph = next;
    }
    if w.reaches_sink {
        changes += (w.sink_phase != ph) as u8;
    }
    changes >= w.required
}

/// First violated window under `key`, if any.
pub fn first_violation<'a>(
    n: &Netlist,
    key: &KeyVector,
    ws: &'a [LatchPathWindow],
) -> Option<&'a LatchPathWindow> {
    ws.iter().find(|w| !window_ok(n, key, w))
}

/// Direct check of one path against the window rule, pair by pair: any two
/// elements more than a period apart (one and a half periods) need one
/// (two) phase changes between them, unless a logic decoy at or before the
/// later one cuts the signal.
pub fn path_timing_ok(n: &Netlist, key: &KeyVector, p: &LatchPath, period: u64) -> bool {
    let pos = positions(p);
    let mut ph: Vec<Option<Ph>> = vec![Some(p.source.phase)];
    for &c in &p.latches {
        let prev = *ph.last().unwrap();
        ph.push(match latch_mode(n, key, c).expect("latch") {
            LatchMode::LogicDecoy => None,
            LatchMode::PosPhase => prev.map(|_| Ph::Pos),
            LatchMode::NegPhase => prev.map(|_| Ph::Neg),
            LatchMode::Clear => prev,
        });
    }
    ph.push(ph.last().unwrap().map(|_| p.sink.phase));
    for i in 0..pos.len() {
        for j in i + 1..pos.len() {
            let d = 2 * (pos[j] - pos[i]);
            let need = if d > 3 * period {
                2
            } else if d > 2 * period {
                1
            } else {
                continue;
            };
            if ph[i..=j].iter().any(|x| x.is_none()) {
                continue;
            }
            if ph[i..=j].windows(2).filter(|w| w[0] != w[1]).count() < need {
                return false;
            }
        }
    }
    true
}
