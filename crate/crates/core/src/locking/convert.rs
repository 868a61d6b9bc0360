//! Flip-flop to keyed master/slave conversion and backward moves of the
//! master latches.

use std::collections::VecDeque;

use super::check::{legality, transition_profile};
use super::{LatchOrigin, LatchRecord, LockError, Work};
use crate::netlist::{CellId, CellKind, LatchMode, Netlist};
use crate::timing::{ClockSpec, DelayModel};

pub const NOT_RESET: &str = "__ll_nrst";

pub const MASTER_PREFIX: &str = "__ll_m_";

pub fn master_name(ff: &str) -> String {
    format!("{MASTER_PREFIX}{ff}")
}

#[derive(Clone, Debug)]
pub struct Converted {
    pub work: Work,
    /// Latches beyond two per flip-flop, added by retiming.
    pub extra_latches: usize,
    pub moves: usize,
}

/// Replaces each flip-flop `q = DFF(d)` by `__ll_m_q = KLATCH(d)` (negative
/// under the correct key) feeding `q = KLATCH(__ll_m_q)` (positive). With a
/// reset port the master's data is gated by the inverted reset so the pair
/// keeps the synchronous reset. Then up to `allowance` extra latches are
/// spent on backward moves of masters across single-reader gates; a move
/// is kept only if correct-key timing stays legal and every path keeps
/// its phase-change count.
pub fn convert_to_latches(
    n: &Netlist,
    group: &[CellId],
    allowance: usize,
    dm: &DelayModel,
    clk: ClockSpec,
) -> Result<Converted, LockError> {
    let mut w = Work::new(n);
    if n.reset().is_some() && !group.is_empty() {
        w.b.add_cell(CellKind::Not, NOT_RESET, [n.net_name(n.reset().unwrap())]);
    }
    let mut masters = VecDeque::new();
    for &c in group {
        let cell = n.cell(c);
        if cell.kind != CellKind::Dff {
            return Err(LockError::stage(
                "convert",
                format!("`{}` is not a flip-flop", cell.name),
            ));
        }
        let q = cell.name.clone();
        let mut d = n.net_name(cell.inputs[0]).to_string();
        w.b.remove_cell(&q);
        if n.reset().is_some() {
            let gated = format!("__ll_rd_{q}");
            w.b.add_cell(CellKind::And, &gated, [d.as_str(), NOT_RESET]);
            d = gated;
        }
        let m = master_name(&q);
        let rec = |name: &str, mode| LatchRecord {
            name: name.to_string(),
            mode,
            origin: LatchOrigin::Converted,
            source_ff: Some(q.clone()),
            retimed: false,
        };
        w.add_latch(&d, rec(&m, LatchMode::NegPhase));
        w.add_latch(&m, rec(&q, LatchMode::PosPhase));
        masters.push_back((m, q));
    }
    let mut out = Converted {
        work: w,
        extra_latches: 0,
        moves: 0,
    };
    if allowance == 0 || n.reset().is_none() {
        return Ok(out);
    }

    let base = out.work.netlist()?;
    let reference = transition_profile(&base, &out.work.key_for(&base));
    let mut fresh = 0usize;
    let mut attempts = 0;
    while let Some((m, q)) = masters.pop_front() {
        attempts += 1;
        if attempts > 256 {
            break;
        }
        let cur = out.work.netlist()?;
        let Some(mc) = cur.cell_by_name(&m) else {
            continue;
        };
        let x = cur.cell(mc).inputs[0];
        let Some(g) = cur.driver_cell(x) else {
            continue;
        };
        let gc = cur.cell(g);
        let cost = gc.inputs.len().saturating_sub(1);
        if !gc.kind.is_combinational()
            || gc.inputs.is_empty()
            || cur.readers(x).len() != 1
            || cur.is_output(x)
            || out.extra_latches + cost > allowance
        {
            continue;
        }
        let mut trial = out.work.clone();
        trial.remove_latch(&m);
        let gname = gc.name.clone();
        trial.b.rename_cell_output(&gname, &m);
        let mut copies = Vec::new();
        for &y in &gc.inputs {
            let name = format!("__ll_r{}", fresh + copies.len());
            trial.add_latch(
                cur.net_name(y),
                LatchRecord {
                    name: name.clone(),
                    mode: LatchMode::NegPhase,
                    origin: LatchOrigin::Converted,
                    source_ff: Some(q.clone()),
                    retimed: true,
                },
            );
            copies.push(name);
        }
        trial.b.rewire_cell(&m, copies.clone());
        let Ok(tn) = trial.netlist() else { continue };
        let key = trial.key_for(&tn);
        if legality(&tn, &key, dm, clk).is_err() || transition_profile(&tn, &key) != reference {
            continue;
        }
        fresh += copies.len();
        out.work = trial;
        out.extra_latches += cost;
        out.moves += 1;
        masters.extend(copies.into_iter().map(|c| (c, q.clone())));
    }
    Ok(out)
}
