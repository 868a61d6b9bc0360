//! Delay decoys (clear-mode latches in series on nets with spare slack)
//! and logic decoys (reset-held latches whose cone is XOR-merged into an
//! existing net).

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use super::check::legality;
use super::{LatchOrigin, LatchRecord, LockError, Work};
use crate::netlist::{CellKind, ConeDirection, LatchMode, NetId, Netlist};
use crate::rng;
use crate::timing::{arrival_and_slack, ClockSpec, DelayModel};

fn converted_latches(w: &Work, n: &Netlist) -> Vec<crate::netlist::CellId> {
    w.latches()
        .iter()
        .filter(|r| r.origin == LatchOrigin::Converted)
        .filter_map(|r| n.cell_by_name(&r.name))
        .collect()
}

/// Nets in the fan-in and fan-out cones of the converted latches.
fn group_cone_nets(w: &Work, n: &Netlist) -> Vec<NetId> {
    let lat = converted_latches(w, n);
    let ins: Vec<NetId> = lat.iter().map(|&c| n.cell(c).inputs[0]).collect();
    let outs: Vec<NetId> = lat.iter().map(|&c| n.cell(c).output).collect();
    let mut cells: BTreeSet<_> = n.cone(&ins, ConeDirection::Fanin).into_iter().collect();
    cells.extend(n.cone(&outs, ConeDirection::Fanout));
    cells.into_iter().map(|c| n.cell(c).output).collect()
}

/// Puts `count` clear-mode latches in series on distinct nets whose
/// correct-key slack exceeds the latch delay. All or nothing: on failure
/// `work` is untouched and the error reports how many fit.
pub fn insert_delay_decoys(
    w: &mut Work,
    count: usize,
    dm: &DelayModel,
    clk: ClockSpec,
    seed: u64,
) -> Result<usize, LockError> {
    if count == 0 {
        return Ok(0);
    }
    let n = w.netlist()?;
    let key = w.key_for(&n);
    let rep =
        arrival_and_slack(&n, dm, clk, &key).map_err(|e| LockError::stage("delay decoys", e))?;
    let mut sites: Vec<NetId> = group_cone_nets(w, &n)
        .into_iter()
        .filter(|&x| !n.is_output(x) && !n.readers(x).is_empty())
        .filter(|&x| rep.slack[x.index()].is_some_and(|s| s > dm.d_latch as i64))
        .collect();
    if sites.len() < count {
        return Err(LockError::InsufficientSlack {
            requested: count,
            available: sites.len(),
        });
    }
    sites.shuffle(&mut rng::stream(seed, "delay-decoys"));
    let mut trial = w.clone();
    let base = trial
        .latches()
        .iter()
        .filter(|r| r.origin == LatchOrigin::DelayDecoy)
        .count();
    let mut placed = 0;
    for x in sites {
        if placed == count {
            break;
        }
        let name = format!("__ll_d{}", base + placed);
        let mut t = trial.clone();
        let net = n.net_name(x).to_string();
        t.add_latch(
            &net,
            LatchRecord {
                name: name.clone(),
                mode: LatchMode::Clear,
                origin: LatchOrigin::DelayDecoy,
                source_ff: None,
                retimed: false,
            },
        );
        t.b.redirect_readers(&net, &name, &[name.as_str()]);
        let Ok(tn) = t.netlist() else { continue };
        if legality(&tn, &t.key_for(&tn), dm, clk).is_ok() {
            trial = t;
            placed += 1;
        }
    }
    if placed < count {
        return Err(LockError::InsufficientSlack {
            requested: count,
            available: placed,
        });
    }
    *w = trial;
    Ok(placed)
}

const CONE_GATES: [CellKind; 4] = [CellKind::And, CellKind::Or, CellKind::Xor, CellKind::Nand];

/// Adds up to `count` logic decoys. Each is a reset-held latch fed by a
/// random 2 to 4 input cone over converted latch outputs; its output is
/// folded into an existing net `t` as `t = XOR(t_old, decoy)`. Returns the
/// number placed while keeping correct-key timing legal.
pub fn insert_logic_decoys(
    w: &mut Work,
    count: usize,
    dm: &DelayModel,
    clk: ClockSpec,
    seed: u64,
) -> Result<usize, LockError> {
    if count == 0 {
        return Ok(0);
    }
    let n = w.netlist()?;
    let drivers: Vec<String> = converted_latches(w, &n)
        .iter()
        .map(|&c| n.cell(c).name.clone())
        .collect();
    if drivers.is_empty() {
        return Err(LockError::NoDecoyDrivers);
    }
    let outs: Vec<NetId> = converted_latches(w, &n)
        .iter()
        .map(|&c| n.cell(c).output)
        .collect();
    let mut targets: Vec<String> = n
        .cone(&outs, ConeDirection::Fanout)
        .into_iter()
        .filter(|&c| n.cell(c).kind.is_combinational() && !n.cell(c).name.starts_with("__ll_"))
        .map(|c| n.cell(c).name.clone())
        .collect();
    let mut r = rng::stream(seed, "logic-decoys");
    targets.shuffle(&mut r);
    // fall back to any original gate when the group drives little logic
    let mut rest: Vec<String> = n
        .cells()
        .iter()
        .filter(|c| {
            c.kind.is_combinational() && !c.name.starts_with("__ll_") && !targets.contains(&c.name)
        })
        .map(|c| c.name.clone())
        .collect();
    rest.shuffle(&mut r);
    targets.extend(rest);
    let base = w
        .latches()
        .iter()
        .filter(|r| r.origin == LatchOrigin::LogicDecoy)
        .count();
    let mut placed = 0;
    for t in targets {
        if placed == count {
            break;
        }
        let i = base + placed;
        let mut trial = w.clone();
        let width = r.gen_range(2..=4);
        let mut level: Vec<String> = if drivers.len() >= width {
            drivers.choose_multiple(&mut r, width).cloned().collect()
        } else {
            (0..width)
                .map(|_| drivers.choose(&mut r).unwrap().clone())
                .collect()
        };
        let mut g = 0;
        while level.len() > 1 {
            let mut next = Vec::new();
            for pair in level.chunks(2) {
                if pair.len() == 1 {
                    next.push(pair[0].clone());
                    continue;
                }
                let name = format!("__ll_c{i}_{g}");
                g += 1;
                trial
                    .b
                    .add_cell(*CONE_GATES.choose(&mut r).unwrap(), &name, pair);
                next.push(name);
            }
            level = next;
        }
        let latch = format!("__ll_x{i}");
        trial.add_latch(
            &level[0],
            LatchRecord {
                name: latch.clone(),
                mode: LatchMode::LogicDecoy,
                origin: LatchOrigin::LogicDecoy,
                source_ff: None,
                retimed: false,
            },
        );
        let old = format!("__ll_t{i}");
        trial.b.rename_cell_output(&t, &old);
        trial
            .b
            .add_cell(CellKind::Xor, &t, [old.as_str(), latch.as_str()]);
        let Ok(tn) = trial.netlist() else { continue };
        if legality(&tn, &trial.key_for(&tn), dm, clk).is_ok() {
            *w = trial;
            placed += 1;
        }
    }
    Ok(placed)
}
