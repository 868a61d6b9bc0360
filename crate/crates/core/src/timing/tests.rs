use std::collections::{BTreeMap, BTreeSet};

use super::*;
use crate::netlist::parse_bench;

fn dffs_with_not() -> Netlist {
    parse_bench("INPUT(a)\nOUTPUT(z)\nq = DFF(a)\nx = NOT(q)\nz = DFF(x)\n").unwrap()
}

#[test]
fn not_between_flip_flops_has_990_slack() {
    let n = dffs_with_not();
    let r = arrival_and_slack(
        &n,
        &DelayModel::default(),
        ClockSpec::new(1000),
        &KeyVector::default(),
    )
    .unwrap();
    assert_eq!(r.slack_of(&n, "x"), Some(990));
    assert_eq!(r.arrival[n.net_id("x").unwrap().index()], Some(10));
}

#[test]
fn clear_latch_costs_its_delay() {
    let n = parse_bench(
        "INPUT(a)\nKEYINPUT(k0)\nKEYINPUT(k1)\nOUTPUT(z)\nq = DFF(a)\nx = NOT(q)\nl = KLATCH(x, k0, k1)\nz = DFF(l)\n",
    )
    .unwrap();
    let r = arrival_and_slack(
        &n,
        &DelayModel::default(),
        ClockSpec::new(1000),
        &"11".parse().unwrap(),
    )
    .unwrap();
    assert_eq!(r.slack_of(&n, "x"), Some(970));
    assert_eq!(r.slack_of(&n, "l"), Some(970));
    // a logic decoy leaves nothing to time downstream
    let r = arrival_and_slack(
        &n,
        &DelayModel::default(),
        ClockSpec::new(1000),
        &"00".parse().unwrap(),
    )
    .unwrap();
    assert_eq!(r.slack_of(&n, "l"), None);
}

#[test]
fn key_length_is_checked() {
    let n = dffs_with_not();
    assert!(matches!(
        arrival_and_slack(
            &n,
            &DelayModel::default(),
            ClockSpec::new(10),
            &"1".parse().unwrap()
        ),
        Err(TimingError::KeyLength { .. })
    ));
}

#[test]
fn delay_file_round_trip() {
    let dm = DelayModel::from_json(
        r#"{"period_ps": 500, "default": {"AND": 7, "LATCH": 15}, "cells": {"x": 3}}"#,
    )
    .unwrap();
    assert_eq!(dm.period, Some(500));
    assert_eq!(dm.d_latch, 15);
    let back = DelayModel::from_json(&dm.to_json()).unwrap();
    assert_eq!(back, dm);
    let n = dffs_with_not();
    let x = n.cell_by_name("x").unwrap();
    assert_eq!(dm.cell_delay(&n, x), 3);
    assert!(DelayModel::from_json(r#"{"default": {"FOO": 1}}"#).is_err());
    assert!(DelayModel::from_json(r#"{"default": {"LATCH": 0}}"#).is_err());
}

use crate::corpus::s27_split as locked_s27;

/// Independent slack: walk every launch-to-capture path explicitly.
fn brute_slack(n: &Netlist, dm: &DelayModel, period: u64, key: &KeyVector) -> Vec<Option<i64>> {
    let role = |c: CellId| super::role(n, key, c);
    let mut best: Vec<Option<i64>> = vec![None; n.num_nets()];
    let mut launches: Vec<(NetId, Ph, u64)> = n.inputs().iter().map(|&i| (i, Ph::Pos, 0)).collect();
    for c in n.cell_ids() {
        match role(c) {
            Role::FlipFlop => launches.push((n.cell(c).output, Ph::Pos, 0)),
            Role::Phase(p) => launches.push((n.cell(c).output, p, dm.cell_delay(n, c))),
            _ => {}
        }
    }
    fn walk(
        n: &Netlist,
        dm: &DelayModel,
        period: u64,
        role: &dyn Fn(CellId) -> Role,
        launch: Ph,
        net: NetId,
        t: u64,
        trail: &mut Vec<NetId>,
        best: &mut Vec<Option<i64>>,
    ) {
        trail.push(net);
        let finish = |cap: Ph, trail: &Vec<NetId>, best: &mut Vec<Option<i64>>| {
            let s = budget(period, launch, cap) - t as i64;
            for &x in trail {
                let b = &mut best[x.index()];
                *b = Some(b.map_or(s, |y| y.min(s)));
            }
        };
        if n.is_output(net) {
            finish(Ph::Neg, trail, best);
        }
        for &r in n.readers(net) {
            match role(r) {
                Role::FlipFlop => finish(Ph::Neg, trail, best),
                Role::Phase(p) => finish(p, trail, best),
                Role::Dead => {}
                Role::Logic | Role::Clear => {
                    let o = n.cell(r).output;
                    assert!(!trail.contains(&o), "cycle");
                    walk(
                        n,
                        dm,
                        period,
                        role,
                        launch,
                        o,
                        t + dm.cell_delay(n, r),
                        trail,
                        best,
                    );
                }
            }
        }
        trail.pop();
    }
    for (net, ph, t) in launches {
        walk(n, dm, period, &role, ph, net, t, &mut Vec::new(), &mut best);
    }
    best
}

#[test]
fn slack_matches_path_enumeration_on_locked_s27() {
    let n = locked_s27();
    let mut dm = DelayModel::default();
    dm.set_kind(CellKind::Nor, 13);
    dm.set_cell("G9", 31);
    let mut checked = 0;
    for k in 0..64 {
        let key = KeyVector::from_index(k, 6);
        let Ok(r) = arrival_and_slack(&n, &dm, ClockSpec::new(200), &key) else {
            continue;
        };
        assert_eq!(r.slack, brute_slack(&n, &dm, 200, &key), "key {key}");
        checked += 1;
    }
    assert!(checked >= 48, "{checked}");
    let r = arrival_and_slack(&n, &dm, ClockSpec::new(200), &"100111".parse().unwrap()).unwrap();
    assert!(r.meets_timing());
}

#[test]
fn clear_loop_is_a_timing_error() {
    let n = locked_s27();
    // both halves clear: G5 -> G11 -> G10 -> m5 -> G5 is one transparent loop
    let r = arrival_and_slack(
        &n,
        &DelayModel::default(),
        ClockSpec::new(200),
        &"111111".parse().unwrap(),
    );
    assert!(matches!(r, Err(TimingError::Cycle(_))));
}

fn latch_chain(gap: u64) -> (Netlist, DelayModel) {
    let n = parse_bench(
        "INPUT(a)\nKEYINPUT(k0)\nKEYINPUT(k1)\nKEYINPUT(k2)\nKEYINPUT(k3)\nOUTPUT(z)\n\
         l1 = KLATCH(a, k0, k1)\nx = BUF(l1)\nl2 = KLATCH(x, k2, k3)\nz = BUF(l2)\n",
    )
    .unwrap();
    let mut dm = DelayModel::default();
    dm.d_latch = 1;
    dm.set_cell("x", gap - 1);
    dm.set_cell("z", 1);
    (n, dm)
}

#[test]
fn short_path_has_no_windows() {
    let n = parse_bench(
        "INPUT(a)\nKEYINPUT(k0)\nKEYINPUT(k1)\nOUTPUT(z)\nl = KLATCH(a, k0, k1)\nz = NOT(l)\n",
    )
    .unwrap();
    let ws = enumerate_windows(
        &n,
        &DelayModel::default(),
        ClockSpec::new(1000),
        PathOptions::default(),
    )
    .unwrap();
    assert!(ws.is_empty());
}

#[test]
fn latches_further_apart_than_a_period_share_a_window() {
    let (n, dm) = latch_chain(120);
    let ws = enumerate_windows(&n, &dm, ClockSpec::new(100), PathOptions::default()).unwrap();
    let l1 = n.cell_by_name("l1").unwrap();
    let l2 = n.cell_by_name("l2").unwrap();
    let ones: Vec<_> = ws.iter().filter(|w| w.required == 1).collect();
    assert_eq!(ones.len(), 1, "{ws:?}");
    assert_eq!(ones[0].latches(), vec![l1, l2]);
    assert!(ws.iter().all(|w| w.required != 2));
    // same phase on both ends of the long gap is excluded, a change is not
    for (key, ok) in [
        ("0101", false),
        ("1010", false),
        ("0110", true),
        ("1001", true),
        ("0001", true),
    ] {
        assert_eq!(
            first_violation(&n, &key.parse().unwrap(), &ws).is_none(),
            ok,
            "{key}"
        );
    }
}

#[test]
fn window_check_matches_pairwise_recomputation() {
    let n = locked_s27();
    let dm = DelayModel::default();
    let set = enumerate_paths(&n, &dm, PathOptions::default());
    assert!(!set.truncated);
    for period in [30, 45, 60, 80, 200] {
        let ws = enumerate_windows_in(&set, period);
        let mut rejected = 0;
        for k in 0..64 {
            let key = KeyVector::from_index(k, 6);
            let got = first_violation(&n, &key, &ws).is_none();
            assert_eq!(
                got,
                set.paths
                    .iter()
                    .all(|p| windows::path_timing_ok(&n, &key, p, period)),
                "T={period} key {key}"
            );
            rejected += !got as usize;
        }
        if period == 200 {
            assert_eq!(rejected, 0);
        }
        if period == 45 {
            assert!(rejected > 0);
        }
    }
}

#[test]
fn johnson_cycles_match_brute_force() {
    let n = parse_bench(
        "INPUT(a)\nOUTPUT(z)\nKEYINPUT(k0)\nKEYINPUT(k1)\nKEYINPUT(k2)\nKEYINPUT(k3)\nKEYINPUT(k4)\nKEYINPUT(k5)\nKEYINPUT(k6)\nKEYINPUT(k7)\n\
         x = XOR(a, c)\nl4 = KLATCH(c, k6, k7)\nb1 = AND(x, l4)\nl1 = KLATCH(b1, k0, k1)\nl2 = KLATCH(l1, k2, k3)\n\
         y = OR(l1, l2)\nl3 = KLATCH(y, k4, k5)\nc = NOT(l3)\ns = LATCH_P(l2)\nz = AND(s, l3)\n",
    )
    .unwrap();
    let dm = DelayModel::default();
    let g = LatchGraph::new(&n, &dm);
    let set = g.enumerate(&n, PathOptions::default());
    let got: BTreeSet<Vec<CellId>> = set
        .cycles
        .iter()
        .map(|c| {
            let m = c
                .latches
                .iter()
                .enumerate()
                .min_by_key(|(_, &l)| l)
                .unwrap()
                .0;
            c.latches[m..]
                .iter()
                .chain(&c.latches[..m])
                .copied()
                .collect()
        })
        .collect();
    // brute force: every simple cycle starting from its smallest latch
    let succ: BTreeMap<usize, Vec<usize>> = (0..g.latches.len())
        .map(|i| {
            (
                i,
                g.latch_successors(&n, i).into_iter().map(|x| x.0).collect(),
            )
        })
        .collect();
    let mut want = BTreeSet::new();
    fn dfs(
        s: usize,
        v: usize,
        succ: &BTreeMap<usize, Vec<usize>>,
        path: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        for &w in &succ[&v] {
            if w == s {
                out.push(path.clone());
            } else if w > s && !path.contains(&w) {
                path.push(w);
                dfs(s, w, succ, path, out);
                path.pop();
            }
        }
    }
    for s in 0..g.latches.len() {
        let mut out = Vec::new();
        dfs(s, s, &succ, &mut vec![s], &mut out);
        for c in out {
            want.insert(c.iter().map(|&i| g.latches[i]).collect::<Vec<_>>());
        }
    }
    assert_eq!(want.len(), 4, "{want:?}");
    assert_eq!(got, want);
    for c in &set.cycles {
        assert_eq!(c.segs.len(), c.latches.len());
    }
}

#[test]
fn cap_reports_truncation() {
    let n = locked_s27();
    let dm = DelayModel::default();
    let full = enumerate_paths(&n, &dm, PathOptions::default());
    assert!(full.paths.len() > 3);
    let cut = enumerate_paths(
        &n,
        &dm,
        PathOptions {
            cap: 3,
            dual_output_anchors: false,
        },
    );
    assert!(cut.truncated);
    assert!(matches!(
        enumerate_windows(
            &n,
            &dm,
            ClockSpec::new(50),
            PathOptions {
                cap: 3,
                dual_output_anchors: false
            }
        ),
        Err(TimingError::Truncated { cap: 3 })
    ));
}

#[test]
fn path_segments_add_up() {
    let n = locked_s27();
    let set = enumerate_paths(&n, &DelayModel::default(), PathOptions::default());
    for p in &set.paths {
        assert_eq!(p.segs.len(), p.latches.len() + 1);
        assert!(!p.latches.is_empty());
        assert_eq!(p.source.phase, Ph::Pos);
        assert_eq!(p.sink.phase, Ph::Neg);
    }
    // G7 -> G12r -> G12 decoy -> G13 -> G7: 10 + 20 + 10
    let via_decoy = set
        .paths
        .iter()
        .find(|p| p.source.name == "G7" && p.sink.name == "G7" && p.latches.len() == 1)
        .unwrap();
    assert_eq!(via_decoy.segs, vec![10, 20 + 10]);
}

#[test]
fn resolution_helpers() {
    let n = locked_s27();
    let set = enumerate_paths(
        &n,
        &DelayModel::default(),
        PathOptions {
            cap: 1000,
            dual_output_anchors: true,
        },
    );
    assert!(set
        .paths
        .iter()
        .any(|p| p.sink.kind == AnchorKind::Output && p.sink.phase == Ph::Pos));
    let key: KeyVector = "100111".parse().unwrap();
    let cyc = &set.cycles[0];
    assert_eq!(paths::cycle_transitions(&n, &key, cyc), Some(2));
    assert_eq!(
        paths::cycle_transitions(&n, &"001111".parse().unwrap(), cyc),
        None
    );
    let p = set.paths.iter().find(|p| p.latches.len() == 2).unwrap();
    let ph = paths::resolve_path(&n, &key, p).unwrap();
    assert_eq!(
        paths::transitions(&ph),
        if p.sink.phase == Ph::Neg { 3 } else { 2 }
    );
}

#[test]
fn default_period_leaves_correct_key_legal() {
    let n = locked_s27();
    let dm = DelayModel::default();
    let t = default_period(&n, &dm);
    let r = arrival_and_slack(&n, &dm, ClockSpec::new(t), &"100111".parse().unwrap()).unwrap();
    assert!(r.meets_timing());
    let ws = enumerate_windows(&n, &dm, ClockSpec::new(t), PathOptions::default()).unwrap();
    assert!(first_violation(&n, &"100111".parse().unwrap(), &ws).is_none());
}
