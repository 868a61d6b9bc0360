//! Static timing: per-cell delays, arrival and slack under a key, latch
//! path enumeration and the delay windows derived from it.

mod delay;
pub mod paths;
pub mod windows;

use serde::Serialize;
use thiserror::Error;

pub use delay::{ClockSpec, DelayError, DelayModel, DEFAULT_GATE_PS, DEFAULT_LATCH_PS};
pub use paths::{
    cycle_transitions, enumerate_paths, resolve_path, transitions, Anchor, AnchorKind, LatchCycle,
    LatchGraph, LatchPath, PathOptions, PathSet, Ph,
};
pub use windows::{enumerate_windows_in, first_violation, window_ok, LatchPathWindow};

use crate::netlist::{CellId, CellKind, CycleReport, KeyVector, LatchMode, NetId, Netlist};
use crate::sim::latch_mode;

#[derive(Debug, Error)]
pub enum TimingError {
    #[error("key has {got} bits, netlist needs {want}")]
    KeyLength { got: usize, want: usize },
    #[error("{0}")]
    Cycle(CycleReport),
    #[error("path enumeration stopped after {cap} items")]
    Truncated { cap: usize },
}

/// How a cell behaves for timing under a given key.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Role {
    Logic,
    /// Launches its own phase and captures its input.
    Phase(Ph),
    /// A buffer with the latch delay.
    Clear,
    /// Constant output.
    Dead,
    FlipFlop,
}

fn role(n: &Netlist, key: &KeyVector, c: CellId) -> Role {
    let k = n.cell(c).kind;
    if k == CellKind::Dff {
        return Role::FlipFlop;
    }
    if !k.is_latch() {
        return if matches!(k, CellKind::Const0 | CellKind::Const1) {
            Role::Dead
        } else {
            Role::Logic
        };
    }
    match latch_mode(n, key, c).expect("latch") {
        LatchMode::LogicDecoy => Role::Dead,
        LatchMode::PosPhase => Role::Phase(Ph::Pos),
        LatchMode::NegPhase => Role::Phase(Ph::Neg),
        LatchMode::Clear => Role::Clear,
    }
}

/// Time available from a launch in one phase to a capture in another:
/// half a period per phase the signal lives through.
pub fn budget(period: u64, launch: Ph, capture: Ph) -> i64 {
    let half = period as i64 / 2;
    if launch == capture {
        half
    } else {
        2 * half
    }
}

/// Per-net timing under one key. Arrivals and requirements are kept per
/// launching phase; `slack` is the worst over both.
#[derive(Clone, Debug, Serialize)]
pub struct TimingReport {
    pub period: u64,
    pub arrival: Vec<Option<u64>>,
    pub slack: Vec<Option<i64>>,
    pub worst_slack: Option<i64>,
    pub worst_net: Option<String>,
}

impl TimingReport {
    pub fn slack_of(&self, n: &Netlist, name: &str) -> Option<i64> {
        self.slack[n.net_id(name)?.index()]
    }

    pub fn meets_timing(&self) -> bool {
        self.worst_slack.map_or(true, |s| s >= 0)
    }
}

const PH: [Ph; 2] = [Ph::Pos, Ph::Neg];

fn pi(p: Ph) -> usize {
    match p {
        Ph::Pos => 0,
        Ph::Neg => 1,
    }
}

/// Longest-path arrival times from every launching point and the slack of
/// every net against the phase budget of the endpoints it reaches.
pub fn arrival_and_slack(
    n: &Netlist,
    dm: &DelayModel,
    clk: ClockSpec,
    key: &KeyVector,
) -> Result<TimingReport, TimingError> {
    if key.len() != n.num_key_bits() {
        return Err(TimingError::KeyLength {
            got: key.len(),
            want: n.num_key_bits(),
        });
    }
    let roles: Vec<Role> = n.cell_ids().map(|c| role(n, key, c)).collect();
    let order = n
        .topo_order(&|c| roles[c.index()] == Role::Clear)
        .map_err(TimingError::Cycle)?;
    let nn = n.num_nets();
    let mut arr: Vec<[Option<u64>; 2]> = vec![[None; 2]; nn];
    for &i in n.inputs().iter().chain(n.reset().iter()) {
        arr[i.index()][0] = Some(0);
    }
    for &c in &order {
        let cell = n.cell(c);
        let out = cell.output.index();
        let d = dm.cell_delay(n, c);
        match roles[c.index()] {
            Role::FlipFlop => arr[out] = [Some(0), None],
            Role::Phase(p) => {
                arr[out] = [None; 2];
                arr[out][pi(p)] = Some(d);
            }
            Role::Dead => arr[out] = [None; 2],
            Role::Logic | Role::Clear => {
                let mut a = [None; 2];
                for &i in &cell.inputs {
                    for k in 0..2 {
                        if let Some(x) = arr[i.index()][k] {
                            a[k] = Some(a[k].map_or(x + d, |y: u64| y.max(x + d)));
                        }
                    }
                }
                arr[out] = a;
            }
        }
    }
    // required times per launch phase, filled in reverse order
    let mut req: Vec<[Option<i64>; 2]> = vec![[None; 2]; nn];
    let tighten = |slot: &mut [Option<i64>; 2], k: usize, v: i64| {
        slot[k] = Some(slot[k].map_or(v, |y| y.min(v)));
    };
    for &o in n.outputs() {
        for p in PH {
            tighten(&mut req[o.index()], pi(p), budget(clk.period, p, Ph::Neg));
        }
    }
    // capture requirements first: opaque cells lead the order, so a reverse
    // sweep would reach them last
    for &c in &order {
        let cell = n.cell(c);
        let cap = match roles[c.index()] {
            Role::FlipFlop => Ph::Neg,
            Role::Phase(p) => p,
            _ => continue,
        };
        for p in PH {
            tighten(
                &mut req[cell.inputs[0].index()],
                pi(p),
                budget(clk.period, p, cap),
            );
        }
    }
    for &c in order.iter().rev() {
        let cell = n.cell(c);
        if !matches!(roles[c.index()], Role::Logic | Role::Clear) {
            continue;
        }
        let out = req[cell.output.index()];
        let d = dm.cell_delay(n, c) as i64;
        for &i in &cell.inputs {
            for k in 0..2 {
                if let Some(r) = out[k] {
                    tighten(&mut req[i.index()], k, r - d);
                }
            }
        }
    }
    let mut slack = vec![None; nn];
    let mut arrival = vec![None; nn];
    let mut worst: Option<(i64, usize)> = None;
    for net in 0..nn {
        arrival[net] = arr[net].iter().flatten().max().copied();
        let s = (0..2)
            .filter_map(|k| Some(req[net][k]? - arr[net][k]? as i64))
            .min();
        slack[net] = s;
        if let Some(s) = s {
            if worst.map_or(true, |(w, _)| s < w) {
                worst = Some((s, net));
            }
        }
    }
    Ok(TimingReport {
        period: clk.period,
        arrival,
        slack,
        worst_slack: worst.map(|w| w.0),
        worst_net: worst.map(|w| n.net_name(NetId(w.1 as u32)).to_string()),
    })
}

/// Every distinct delay window over the latch paths of `n`.
pub fn enumerate_windows(
    n: &Netlist,
    dm: &DelayModel,
    clk: ClockSpec,
    opts: PathOptions,
) -> Result<Vec<LatchPathWindow>, TimingError> {
    let set = enumerate_paths(n, dm, opts);
    if set.truncated {
        return Err(TimingError::Truncated { cap: opts.cap });
    }
    Ok(enumerate_windows_in(&set, clk.period))
}

/// Longest combinational run between any two sequential elements or ports.
pub fn longest_segment(n: &Netlist, dm: &DelayModel) -> u64 {
    let g = LatchGraph::new(n, dm);
    g.max_edge_delay()
}

/// A period comfortably above the longest segment, used when none is given.
pub fn default_period(n: &Netlist, dm: &DelayModel) -> u64 {
    let base = longest_segment(n, dm).max(1);
    (base * 3).div_ceil(2) + 4 * dm.d_latch
}

#[cfg(test)]
mod tests;
