use super::*;
use crate::corpus;
use crate::netlist::CellId;
use crate::netlist::{parse_bench, write_bench};
use crate::sim::Simulator;
use crate::timing::default_period;

fn clk(n: &Netlist) -> ClockSpec {
    ClockSpec::new(default_period(n, &DelayModel::default()))
}

fn cfg(bits: usize, seed: u64) -> LockConfig {
    LockConfig {
        key_bits: bits,
        seed,
        ..LockConfig::default()
    }
}

#[test]
fn ring_wins_over_isolated_flip_flops() {
    let n = corpus::toy_ring();
    let dm = DelayModel::default();
    let g = select_ff_group(&n, 4, &cfg(8, 1), &dm).unwrap();
    let names: Vec<&str> = g.iter().map(|&c| n.cell(c).name.as_str()).collect();
    assert_eq!(names, ["r0", "r1", "r2", "r3"]);
    // oracle: every 4-subset scored directly
    let w = ff_weights(&n);
    let f = w.len();
    let mut best = ((0, i64::MIN), Vec::new());
    for m in 0u32..1 << f {
        if m.count_ones() != 4 {
            continue;
        }
        let sub: Vec<usize> = (0..f).filter(|&i| m >> i & 1 == 1).collect();
        let (int, ext) = group_score(&w, &sub);
        let s = (int, -(ext as i64));
        if s > best.0 {
            best = (s, sub);
        }
    }
    let ffs = n.flip_flops();
    let want: Vec<CellId> = best.1.iter().map(|&i| ffs[i]).collect();
    assert_eq!(g, want);
}

#[test]
fn selection_is_repeatable_and_takes_all_when_forced() {
    let n = corpus::s298_class();
    let dm = DelayModel::default();
    let c = LockConfig {
        group_samples: 1,
        seed: 9,
        ..cfg(8, 9)
    };
    assert_eq!(
        select_ff_group(&n, 3, &c, &dm).unwrap(),
        select_ff_group(&n, 3, &c, &dm).unwrap()
    );
    let s27 = corpus::s27();
    assert_eq!(select_ff_group(&s27, 3, &c, &dm).unwrap(), s27.flip_flops());
    assert!(matches!(
        select_ff_group(&s27, 4, &c, &dm),
        Err(LockError::TooFewFlipFlops { need: 4, have: 3 })
    ));
}

#[test]
fn one_flip_flop_becomes_an_adjacent_pair() {
    let n = parse_bench("INPUT(a)\nOUTPUT(q)\nq = DFF(x)\nx = XOR(a, q)\n").unwrap();
    let ff = n.flip_flops();
    let conv = convert_to_latches(&n, &ff, 0, &DelayModel::default(), clk(&n)).unwrap();
    let out = conv.work.netlist().unwrap();
    let key = conv.work.key_for(&out);
    let m = out.cell(out.cell_by_name("__ll_m_q").unwrap());
    let s = out.cell(out.cell_by_name("q").unwrap());
    assert_eq!(s.inputs[0], m.output);
    assert_eq!(
        key.mode_of(&out, out.cell_by_name("__ll_m_q").unwrap()),
        Some(LatchMode::NegPhase)
    );
    assert_eq!(
        key.mode_of(&out, out.cell_by_name("q").unwrap()),
        Some(LatchMode::PosPhase)
    );
    assert_eq!(conv.moves, 0);
}

#[test]
fn locking_is_deterministic() {
    let n = corpus::s27();
    let dm = DelayModel::default();
    let a = lock(&n, &cfg(8, 7), &dm, clk(&n)).unwrap();
    let b = lock(&n, &cfg(8, 7), &dm, clk(&n)).unwrap();
    assert_eq!(write_bench(&a.locked), write_bench(&b.locked));
    assert_eq!(a.correct_key, b.correct_key);
    assert_eq!(a.manifest, b.manifest);
}

#[test]
fn too_few_key_bits_is_infeasible() {
    let n = parse_bench("INPUT(a)\nOUTPUT(q)\nq = DFF(a)\n").unwrap();
    let e = lock(&n, &cfg(2, 0), &DelayModel::default(), clk(&n)).unwrap_err();
    assert!(
        matches!(
            e,
            LockError::TooFewKeyBits {
                key_bits: 2,
                latches: 1
            }
        ),
        "{e}"
    );
    assert!(matches!(
        Budget::new(&cfg(5, 0)),
        Err(LockError::OddKeyBits(5))
    ));
}

#[test]
fn manifest_decodes_the_correct_key() {
    for n in corpus::desk_corpus() {
        for bits in [4, 8, 16] {
            let r = lock(&n, &cfg(bits, 3), &DelayModel::default(), clk(&n))
                .unwrap_or_else(|e| panic!("{} {bits}: {e}", n.name()));
            assert_eq!(r.locked.num_key_bits(), bits);
            assert_eq!(r.locked.klatches().len() * 2, bits);
            for rec in &r.manifest.latches {
                let c = r.locked.cell_by_name(&rec.name).unwrap();
                assert_eq!(
                    r.correct_key.mode_of(&r.locked, c),
                    Some(rec.mode),
                    "{}",
                    rec.name
                );
            }
        }
    }
}

#[test]
fn zero_decoys_leave_the_netlist_alone() {
    let n = corpus::toy_acc();
    let conv =
        convert_to_latches(&n, &n.flip_flops()[..1], 0, &DelayModel::default(), clk(&n)).unwrap();
    let mut w = conv.work.clone();
    assert_eq!(
        insert_delay_decoys(&mut w, 0, &DelayModel::default(), clk(&n), 1).unwrap(),
        0
    );
    assert_eq!(
        insert_logic_decoys(&mut w, 0, &DelayModel::default(), clk(&n), 1).unwrap(),
        0
    );
    assert_eq!(
        write_bench(&w.netlist().unwrap()),
        write_bench(&conv.work.netlist().unwrap())
    );
}

#[test]
fn delay_decoys_sit_on_slack_and_bound_the_critical_path() {
    let n = corpus::s298_class();
    let dm = DelayModel::default();
    let c = clk(&n);
    let group = select_ff_group(&n, 3, &cfg(16, 2), &dm).unwrap();
    let conv = convert_to_latches(&n, &group, 0, &dm, c).unwrap();
    let before = conv.work.netlist().unwrap();
    let kb = conv.work.key_for(&before);
    let rep = arrival_and_slack(&before, &dm, c, &kb).unwrap();
    let mut w = conv.work.clone();
    let k = insert_delay_decoys(&mut w, 3, &dm, c, 5).unwrap();
    assert_eq!(k, 3);
    let after = w.netlist().unwrap();
    let ka = w.key_for(&after);
    for r in w
        .latches()
        .iter()
        .filter(|r| r.origin == LatchOrigin::DelayDecoy)
    {
        let cell = after.cell(after.cell_by_name(&r.name).unwrap());
        let site = after.net_name(cell.inputs[0]);
        assert!(
            rep.slack_of(&before, site).unwrap() > dm.d_latch as i64,
            "{site}"
        );
    }
    let crit = |x: &Netlist, k: &KeyVector| {
        arrival_and_slack(x, &dm, c, k)
            .unwrap()
            .arrival
            .iter()
            .flatten()
            .copied()
            .max()
            .unwrap()
    };
    assert!(crit(&after, &ka) <= crit(&before, &kb) + 3 * dm.d_latch);
    legality(&after, &ka, &dm, c).unwrap();
}

#[test]
fn insufficient_slack_reports_what_fits() {
    let n = parse_bench("INPUT(a)\nOUTPUT(z)\nq = DFF(x)\nx = XOR(a, q)\nz = BUF(q)\n").unwrap();
    let mut dm = DelayModel::default();
    dm.set_cell("x", 100);
    // period leaves slack below the latch delay everywhere in the cone
    let c = ClockSpec::new(110);
    let conv = convert_to_latches(&n, &n.flip_flops(), 0, &dm, c).unwrap();
    let mut w = conv.work.clone();
    let e = insert_delay_decoys(&mut w, 2, &dm, c, 0).unwrap_err();
    assert!(
        matches!(e, LockError::InsufficientSlack { requested: 2, .. }),
        "{e}"
    );
}

/// Value of `net` after each half-cycle of a fixed random run.
fn trace_net(n: &Netlist, key: &KeyVector, net: &str, inits: &BTreeMap<String, bool>) -> Vec<bool> {
    let mut sim = Simulator::new(n, key).unwrap();
    sim.set_initial(0, inits);
    let id = n.net_id(net).unwrap();
    let mut r = crate::rng::stream(1, "trace");
    let mut out = Vec::new();
    for c in 0..40 {
        let ins: Vec<bool> = (0..n.inputs().len())
            .map(|_| rand::Rng::gen(&mut r))
            .collect();
        for _ in 0..2 {
            sim.step(&ins, c == 0).unwrap();
            out.push(sim.value(id));
        }
    }
    out
}

#[test]
fn logic_decoy_is_invisible_at_zero_and_inverts_at_one() {
    let n = corpus::toy_acc();
    let dm = DelayModel::default();
    let c = clk(&n);
    let conv = convert_to_latches(&n, &n.flip_flops(), 0, &dm, c).unwrap();
    let mut w = conv.work.clone();
    assert_eq!(insert_logic_decoys(&mut w, 1, &dm, c, 4).unwrap(), 1);
    let base = conv.work.netlist().unwrap();
    let kb = conv.work.key_for(&base);
    let out = w.netlist().unwrap();
    let key = w.key_for(&out);
    let merge = out
        .cells()
        .iter()
        .find(|x| x.inputs.iter().any(|&i| out.net_name(i) == "__ll_x0"))
        .unwrap();
    let t = merge.name.clone();
    let inits = BTreeMap::new();
    assert_eq!(
        trace_net(&out, &key, &t, &inits),
        trace_net(&base, &kb, &t, &inits)
    );
    // with the decoy's output forced to the cone value (clear mode seen
    // combinationally) the merged net flips exactly where the cone is 1
    let x = out.cell_by_name("__ll_x0").unwrap();
    let cone = out.cell(x).inputs[0];
    let tn = out.net_id(&t).unwrap();
    let tb = base.net_id(&t).unwrap();
    let mut r = crate::rng::stream(3, "leaves");
    let mut flips = 0;
    for _ in 0..200 {
        let mut leaves: BTreeMap<String, bool> = BTreeMap::new();
        for name in n.inputs().iter().map(|&i| n.net_name(i)).chain(
            base.sequential_cells()
                .iter()
                .map(|&c| base.cell(c).name.as_str()),
        ) {
            leaves.insert(name.to_string(), rand::Rng::gen(&mut r));
        }
        let want = crate::equivalence::eval_cone(&base, &kb, &leaves, tb);
        assert_eq!(crate::equivalence::eval_cone(&out, &key, &leaves, tn), want);
        let cv = crate::equivalence::eval_cone(&out, &key, &leaves, cone);
        leaves.insert("__ll_x0".into(), cv);
        let mut clear = key.clone();
        let [k0, k1] = out.cell(x).key.unwrap();
        clear.set(k0, true);
        clear.set(k1, true);
        assert_eq!(
            crate::equivalence::eval_cone(&out, &clear, &leaves, tn),
            want ^ cv
        );
        flips += cv as usize;
    }
    assert!(flips > 0);
}

#[test]
fn correct_key_matches_original_exhaustively_on_toys() {
    for n in corpus::toys() {
        for bits in [4, 8] {
            let r = lock(&n, &cfg(bits, 11), &DelayModel::default(), clk(&n)).unwrap();
            assert_eq!(
                bmc_equivalent(&n, &r.locked, &r.correct_key, &r.manifest, 16),
                None,
                "{} {bits}",
                n.name()
            );
        }
    }
}

#[test]
fn bmc_finds_a_wrong_key() {
    let n = corpus::toy_counter();
    let r = lock(&n, &cfg(4, 0), &DelayModel::default(), clk(&n)).unwrap();
    let mut bad = r.correct_key.clone();
    bad.set(0, !bad.bit(0));
    bad.set(1, !bad.bit(1));
    assert!(bmc_equivalent(&n, &r.locked, &bad, &r.manifest, 16).is_some());
}

#[test]
fn stripping_decoys_recovers_the_converted_netlist() {
    let n = corpus::s27();
    let dm = DelayModel::default();
    let r = lock(&n, &cfg(16, 5), &dm, clk(&n)).unwrap();
    assert!(r.stats.delay_decoys + r.stats.logic_decoys > 0);
    let stripped = strip_decoys(&r.locked, &r.manifest);
    let group: Vec<CellId> = r
        .manifest
        .group
        .iter()
        .map(|g| n.cell_by_name(g).unwrap())
        .collect();
    let conv = convert_to_latches(&n, &group, 0, &dm, clk(&n)).unwrap();
    let base = conv.work.netlist().unwrap();
    let kb = conv.work.key_for(&base);
    let ks = KeyVector(
        stripped
            .key_inputs()
            .iter()
            .map(|&k| {
                r.correct_key.bit(
                    r.locked
                        .key_inputs()
                        .iter()
                        .position(|&x| r.locked.net_name(x) == stripped.net_name(k))
                        .unwrap(),
                )
            })
            .collect(),
    );
    let inits = BTreeMap::new();
    for i in 0..base.num_nets() {
        let name = base.net_name(crate::netlist::NetId(i as u32)).to_string();
        if base.driver(crate::netlist::NetId(i as u32)).is_none() || name.starts_with("__ll_k") {
            continue;
        }
        assert_eq!(
            trace_net(&stripped, &ks, &name, &inits),
            trace_net(&base, &kb, &name, &inits),
            "net {name}"
        );
    }
}

#[test]
fn retiming_keeps_every_phase_count() {
    let n = corpus::s344_class();
    let dm = DelayModel::default();
    let c = clk(&n);
    let group = select_ff_group(&n, 2, &cfg(16, 1), &dm).unwrap();
    let plain = convert_to_latches(&n, &group, 0, &dm, c).unwrap();
    let moved = convert_to_latches(&n, &group, 4, &dm, c).unwrap();
    assert!(moved.moves > 0, "no retiming move accepted");
    let (pn, mn) = (plain.work.netlist().unwrap(), moved.work.netlist().unwrap());
    assert_eq!(
        transition_profile(&pn, &plain.work.key_for(&pn)),
        transition_profile(&mn, &moved.work.key_for(&mn))
    );
}

#[test]
fn locked_corpus_passes_the_simulation_check() {
    let dm = DelayModel::default();
    for n in corpus::desk_corpus() {
        let r = lock(
            &n,
            &LockConfig {
                check_cycles: 0,
                ..cfg(8, 21)
            },
            &dm,
            clk(&n),
        )
        .unwrap_or_else(|e| panic!("{}: {e}", n.name()));
        check_correct_key(&n, &r.locked, &r.correct_key, &r.manifest, 300, 99).unwrap();
    }
}
