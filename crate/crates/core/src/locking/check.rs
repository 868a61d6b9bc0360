//! Postconditions shared by the pipeline stages and the test suites.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use super::{LatchManifest, LatchOrigin};
use crate::cnf::{CnfProblem, InitLits, Lit, SolveResult, Unroller};
use crate::constraints::{direct_loop_ok, gen_timing_constraints};
use crate::netlist::{CellKind, KeyVector, LatchMode, Netlist};
use crate::rng;
use crate::sim::Simulator;
use crate::timing::{
    arrival_and_slack, cycle_transitions, enumerate_paths, resolve_path, transitions, ClockSpec,
    DelayModel, PathOptions,
};

/// Phase-change counts per (source, sink) pair of unbroken anchored paths
/// (latch-free connections included),
/// plus the counts of unbroken latch cycles under the key `@cycle`.
pub type TransitionProfile = BTreeMap<(String, String), BTreeSet<usize>>;

///
/// Latches that are always transparent under `key` are read as buffers
/// first, so a delay decoy never changes which walks count as paths.
pub fn transition_profile(n: &Netlist, key: &KeyVector) -> TransitionProfile {
    let bypassed = bypass_clear_latches(n, key);
    let n = &bypassed;
    let set = enumerate_paths(n, &DelayModel::default(), PathOptions::default());
    let mut out = TransitionProfile::new();
    for p in &set.paths {
        if let Some(ph) = resolve_path(n, key, p) {
            out.entry((p.source.name.clone(), p.sink.name.clone()))
                .or_default()
                .insert(transitions(&ph));
        }
    }
    for (src, sink) in &set.direct {
        out.entry((src.name.clone(), sink.name.clone()))
            .or_default()
            .insert(transitions(&[src.phase, sink.phase]));
    }
    for c in &set.cycles {
        if let Some(t) = cycle_transitions(n, key, c) {
            out.entry(("@cycle".into(), String::new()))
                .or_default()
                .insert(t);
        }
    }
    out
}

fn bypass_clear_latches(n: &Netlist, key: &KeyVector) -> Netlist {
    let clear: Vec<_> = n
        .klatches()
        .into_iter()
        .filter(|&c| key.mode_of(n, c) == Some(LatchMode::Clear))
        .collect();
    if clear.is_empty() {
        return n.clone();
    }
    let mut b = n.to_builder();
    for c in clear {
        let cell = n.cell(c);
        b.remove_cell(&cell.name)
            .add_cell(CellKind::Buf, &cell.name, [n.net_name(cell.inputs[0])]);
    }
    b.build()
        .expect("bypassing a latch keeps the netlist well formed")
}

/// Correct-key legality: no transparent loop, setup met everywhere, and
/// every delay window holds enough phase changes.
pub fn legality(
    n: &Netlist,
    key: &KeyVector,
    dm: &DelayModel,
    clk: ClockSpec,
) -> Result<(), String> {
    if !direct_loop_ok(n, key) {
        return Err("transparent combinational loop".into());
    }
    let rep = arrival_and_slack(n, dm, clk, key).map_err(|e| e.to_string())?;
    if !rep.meets_timing() {
        return Err(format!(
            "negative slack {} at `{}`",
            rep.worst_slack.unwrap_or(0),
            rep.worst_net.unwrap_or_default()
        ));
    }
    let set = gen_timing_constraints(n, dm, clk, PathOptions::default());
    if set.truncated {
        return Err("path enumeration truncated".into());
    }
    if !set.timing_ok(n, key) {
        return Err("a delay window lacks its phase changes".into());
    }
    Ok(())
}

/// Element of the original netlist whose power-up value a locked element
/// takes: a split master mirrors its flip-flop; everything else keeps its name.
pub fn init_source<'a>(m: &'a LatchManifest, name: &'a str) -> &'a str {
    match m.record(name) {
        Some(r) if r.origin == LatchOrigin::Converted && !r.retimed => {
            r.source_ff.as_deref().unwrap_or(name)
        }
        _ => name,
    }
}

fn state_words(sim: &Simulator, seeds: &[u64], map: impl Fn(&str) -> String) -> Vec<u64> {
    sim.state_names()
        .iter()
        .map(|name| {
            let src = map(name);
            seeds
                .iter()
                .enumerate()
                .fold(0u64, |w, (l, &s)| w | (rng::init_bit(s, &src) as u64) << l)
        })
        .collect()
}

/// Output disagreements found by [`count_mismatches`].
#[derive(Clone, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct Mismatches {
    /// Differing output bits summed over lanes and half-cycles.
    pub count: u64,
    pub first: Option<String>,
}

/// Runs original and locked (under `key`) side by side on 64 lanes of
/// random stimulus with matching power-up states and counts differing
/// output bits in every half-cycle from `compare_from` on. Without a
/// manifest, split masters are recognised by name and comparison starts
/// after the first cycle.
pub fn count_mismatches(
    original: &Netlist,
    locked: &Netlist,
    key: &KeyVector,
    manifest: Option<&LatchManifest>,
    cycles: usize,
    seed: u64,
) -> Result<Mismatches, String> {
    let mut a = Simulator::new(original, &KeyVector::zeros(original.num_key_bits()))
        .map_err(|e| e.to_string())?;
    let mut b = Simulator::new(locked, key).map_err(|e| e.to_string())?;
    if original.inputs().len() != locked.inputs().len()
        || original.outputs().len() != locked.outputs().len()
    {
        return Err("the two netlists have different ports".into());
    }
    let seeds: Vec<u64> = (0..64)
        .map(|l| rng::derive(seed, &format!("lane{l}")))
        .collect();
    let wa = state_words(&a, &seeds, |s| s.to_string());
    let wb = state_words(&b, &seeds, |s| match manifest {
        Some(m) => init_source(m, s).to_string(),
        None => s
            .strip_prefix(super::convert::MASTER_PREFIX)
            .unwrap_or(s)
            .to_string(),
    });
    a.set_state_words(&wa);
    b.set_state_words(&wb);
    let mut r = rng::stream(seed, "stimulus");
    let from = manifest.map_or(1, |m| m.compare_from_cycle());
    let mut out = Mismatches::default();
    for c in 0..cycles {
        let ins: Vec<u64> = (0..original.inputs().len()).map(|_| r.gen()).collect();
        // reset in cycle 0 on every lane, then on roughly one cycle in 32
        let rst = if c == 0 {
            !0
        } else {
            (0..5).fold(!0u64, |w, _| w & r.gen::<u64>())
        };
        for half in 0..2 {
            let oa = a.step_words(&ins, rst).map_err(|e| e.to_string())?;
            let ob = b.step_words(&ins, rst).map_err(|e| e.to_string())?;
            if c < from {
                continue;
            }
            for (i, (x, y)) in oa.iter().zip(&ob).enumerate() {
                if x != y {
                    out.count += (x ^ y).count_ones() as u64;
                    if out.first.is_none() {
                        let lane = (x ^ y).trailing_zeros();
                        out.first = Some(format!(
                            "output `{}` differs in cycle {c} ({}), lane {lane}",
                            original.net_name(original.outputs()[i]),
                            if half == 0 { "high" } else { "low" }
                        ));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// [`count_mismatches`] as a pass/fail check reporting the first difference.
pub fn check_correct_key(
    original: &Netlist,
    locked: &Netlist,
    key: &KeyVector,
    manifest: &LatchManifest,
    cycles: usize,
    seed: u64,
) -> Result<(), String> {
    let m = count_mismatches(original, locked, key, Some(manifest), cycles, seed)?;
    match m.first {
        None => Ok(()),
        Some(msg) => Err(msg),
    }
}

/// Removes every logic decoy with its cone and merge gate and turns every
/// delay decoy into a buffer, leaving only the converted latches keyed.
pub fn strip_decoys(locked: &Netlist, m: &LatchManifest) -> Netlist {
    let mut b = locked.to_builder();
    let key_pins = |name: &str| -> Vec<String> {
        let c = locked.cell(locked.cell_by_name(name).expect("manifest latch"));
        c.key
            .map(|ks| {
                ks.iter()
                    .map(|&k| locked.net_name(locked.key_inputs()[k]).to_string())
                    .collect()
            })
            .unwrap_or_default()
    };
    for r in &m.latches {
        match r.origin {
            LatchOrigin::Converted => {}
            LatchOrigin::DelayDecoy => {
                let c = locked.cell(locked.cell_by_name(&r.name).unwrap());
                let d = locked.net_name(c.inputs[0]).to_string();
                b.remove_cell(&r.name).add_cell(CellKind::Buf, &r.name, [d]);
                for k in key_pins(&r.name) {
                    b.remove_key(&k);
                }
            }
            LatchOrigin::LogicDecoy => {
                let i = r.name.trim_start_matches("__ll_x");
                for k in key_pins(&r.name) {
                    b.remove_key(&k);
                }
                b.remove_cell(&r.name);
                let cone = format!("__ll_c{i}_");
                for c in locked.cells().iter().filter(|c| c.name.starts_with(&cone)) {
                    b.remove_cell(&c.name);
                }
                // the merge gate reads the renamed original and the decoy
                let old = format!("__ll_t{i}");
                let merge = locked
                    .cells()
                    .iter()
                    .find(|c| {
                        c.kind == CellKind::Xor
                            && c.inputs.iter().any(|&x| locked.net_name(x) == old)
                    })
                    .expect("merge gate");
                let t = merge.name.clone();
                b.remove_cell(&t).rename_cell_output(&old, &t);
            }
        }
    }
    b.build().expect("stripping keeps the netlist well formed")
}

/// Bounded equivalence of `locked` under `key` against `original` over
/// `frames` half-cycles, for every input and reset sequence (reset held in
/// cycle 0) and every power-up state consistent with `init_source`.
/// Returns a distinguishing input sequence if one exists.
pub fn bmc_equivalent(
    original: &Netlist,
    locked: &Netlist,
    key: &KeyVector,
    m: &LatchManifest,
    frames: usize,
) -> Option<Vec<Vec<bool>>> {
    let mut p = CnfProblem::new();
    let ia = InitLits::fresh(&mut p, original, "a:");
    let cells = locked.sequential_cells();
    let lits = cells
        .iter()
        .map(|&c| {
            let name = &locked.cell(c).name;
            let src = init_source(m, name);
            match original.cell_by_name(src).and_then(|oc| ia.get(oc)) {
                Some(l) => l,
                None => p.new_lit(),
            }
        })
        .collect();
    let ib = InitLits { cells, lits };
    let ka: Vec<Lit> = Vec::new();
    let kb: Vec<Lit> = key.0.iter().map(|&b| p.constant(b)).collect();
    let mut ua = Unroller::new(original, ka, &ia);
    let mut ub = Unroller::new(locked, kb, &ib);
    let from = 2 * m.compare_from_cycle();
    let mut diffs = Vec::new();
    let mut ins_all = Vec::new();
    for f in 0..frames.div_ceil(2) * 2 {
        if f % 2 == 0 {
            let ins: Vec<Lit> = original.inputs().iter().map(|_| p.new_lit()).collect();
            let rst = if f == 0 {
                p.constant(true)
            } else {
                p.new_lit()
            };
            ins_all.push((ins, rst));
        }
        let (ins, rst) = ins_all.last().unwrap().clone();
        ua.push_frame(&mut p, original, &ins, rst);
        ub.push_frame(&mut p, locked, &ins, rst);
        if f >= from {
            let oa = ua.outputs(original, f);
            let ob = ub.outputs(locked, f);
            for (x, y) in oa.into_iter().zip(ob) {
                diffs.push(p.xor2(x, y));
            }
        }
    }
    let any = p.or(&diffs);
    if p.solve_unlimited(&[any]) != SolveResult::Sat {
        return None;
    }
    Some(
        ins_all
            .iter()
            .map(|(ins, rst)| {
                let mut v = p.values(ins);
                v.push(p.value(*rst));
                v
            })
            .collect(),
    )
}
