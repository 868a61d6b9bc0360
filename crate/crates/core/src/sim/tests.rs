use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::netlist::parse_bench;

fn one_latch() -> Netlist {
    parse_bench(
        "INPUT(d)\nRESET(r)\nKEYINPUT(k0)\nKEYINPUT(k1)\nOUTPUT(q)\nq = KLATCH(d, k0, k1)\n",
    )
    .unwrap()
}

fn key(s: &str) -> KeyVector {
    s.parse().unwrap()
}

/// Two-frame run from a known held value; returns (high out, low out).
fn latch_run(mode: &str, held: bool, d_high: bool, d_low: bool, reset: bool) -> (bool, bool) {
    let n = one_latch();
    let mut sim = Simulator::new(&n, &key(mode)).unwrap();
    sim.set_initial(0, &BTreeMap::from([("q".to_string(), held)]));
    let h = sim.step(&[d_high], reset).unwrap()[0];
    let l = sim.step(&[d_low], reset).unwrap()[0];
    (h, l)
}

#[test]
fn control_table_rows() {
    for held in [false, true] {
        for d in [false, true] {
            for r in [false, true] {
                // 00: held in reset, constant 0
                assert_eq!(latch_run("00", held, d, d, r), (false, false));
                // 11: always transparent
                assert_eq!(latch_run("11", held, d, !d, r), (d, !d));
                // 01: transparent in high, holds the high value through low
                assert_eq!(latch_run("01", held, d, !d, r), (d, d));
                // 10: holds during high, transparent in low
                assert_eq!(latch_run("10", held, d, !d, r), (held, !d));
            }
        }
    }
}

fn dff_ref() -> Netlist {
    parse_bench("INPUT(d)\nOUTPUT(q)\nq = DFF(d)\n").unwrap()
}

fn pair(first: &str, second: &str) -> (Netlist, KeyVector) {
    let n = parse_bench(
        "INPUT(d)\nKEYINPUT(a0)\nKEYINPUT(a1)\nKEYINPUT(b0)\nKEYINPUT(b1)\nOUTPUT(q)\n\
         m = KLATCH(d, a0, a1)\nq = KLATCH(m, b0, b1)\n",
    )
    .unwrap();
    (n, key(&format!("{first}{second}")))
}

fn run_cycles(sim: &mut Simulator, cycles: &[CycleInput]) -> Vec<bool> {
    cycles
        .iter()
        .flat_map(|c| {
            let o = sim.cycle(c).unwrap();
            [o.high[0], o.low[0]]
        })
        .collect()
}

fn stimulus(bits: u32, len: usize) -> Vec<CycleInput> {
    (0..len)
        .map(|c| CycleInput {
            inputs: vec![bits >> c & 1 == 1],
            reset: c == 0,
        })
        .collect()
}

#[test]
fn neg_pos_pair_matches_flip_flop() {
    let (n, k) = pair("10", "01");
    for init in [false, true] {
        for bits in 0..1u32 << 10 {
            let cycles = stimulus(bits, 10);
            let mut a = Simulator::new(&n, &k).unwrap();
            a.set_initial(0, &BTreeMap::from([("m".into(), init), ("q".into(), init)]));
            let mut b = Simulator::new(&dff_ref(), &KeyVector::default()).unwrap();
            b.set_initial(0, &BTreeMap::from([("q".into(), init)]));
            assert_eq!(run_cycles(&mut a, &cycles), run_cycles(&mut b, &cycles));
        }
    }
}

#[test]
fn pos_neg_pair_captures_on_falling_edge() {
    let (n, k) = pair("01", "10");
    for bits in 0..1u32 << 10 {
        let cycles = stimulus(bits, 10);
        let mut a = Simulator::new(&n, &k).unwrap();
        a.set_initial(
            0,
            &BTreeMap::from([("m".into(), false), ("q".into(), false)]),
        );
        let out = run_cycles(&mut a, &cycles);
        for c in 0..10 {
            let prev = if c == 0 {
                false
            } else {
                bits >> (c - 1) & 1 == 1
            };
            let cur = bits >> c & 1 == 1;
            // one cycle of delay seen from the high phase, none from the low phase
            assert_eq!(out[2 * c], prev);
            assert_eq!(out[2 * c + 1], cur);
        }
    }
}

#[test]
fn transparent_self_loop_oscillates() {
    let n = parse_bench(
        "INPUT(a)\nKEYINPUT(k0)\nKEYINPUT(k1)\nOUTPUT(q)\np = XOR(a, q)\nq = KLATCH(p, k0, k1)\n",
    )
    .unwrap();
    let mut sim = Simulator::new(&n, &key("11")).unwrap();
    let err = sim.step(&[true], true).unwrap_err();
    match err {
        SimError::Oscillation { report, .. } => assert!(report.cells.contains(&"q".to_string())),
        e => panic!("{e}"),
    }
    // positive phase is fine in low, loops in high
    let mut sim = Simulator::new(&n, &key("01")).unwrap();
    assert!(sim.step(&[true], true).is_err());
    let mut sim = Simulator::new(&n, &key("00")).unwrap();
    assert!(sim.step(&[true], true).is_ok());
}

#[test]
fn reset_clears_flip_flops_after_the_reset_cycle() {
    let n = parse_bench("INPUT(d)\nRESET(r)\nOUTPUT(q)\nq = DFF(d)\n").unwrap();
    let mut sim = Simulator::new(&n, &KeyVector::default()).unwrap();
    sim.set_initial(0, &BTreeMap::from([("q".into(), true)]));
    let first = sim
        .cycle(&CycleInput {
            inputs: vec![true],
            reset: true,
        })
        .unwrap();
    assert_eq!(first.high, vec![true]);
    let second = sim
        .cycle(&CycleInput {
            inputs: vec![true],
            reset: false,
        })
        .unwrap();
    assert_eq!(second.high, vec![false]);
    let third = sim
        .cycle(&CycleInput {
            inputs: vec![false],
            reset: false,
        })
        .unwrap();
    assert_eq!(third.high, vec![true]);
}

fn shift3() -> Netlist {
    parse_bench("INPUT(d)\nOUTPUT(c)\na = DFF(d)\nb = DFF(a)\nc = DFF(b)\n").unwrap()
}

#[test]
fn random_state_is_flushed_after_exhaustive_flush_depth() {
    let n = shift3();
    let cycles = stimulus(0b1011_0110_1, 9);
    // oracle: sweep all 8 power-up states, find the first cycle from which
    // every state gives the same outputs
    let runs: Vec<Vec<bool>> = (0..8u32)
        .map(|s| {
            let mut sim = Simulator::new(&n, &KeyVector::default()).unwrap();
            let init = BTreeMap::from([
                ("a".to_string(), s & 1 == 1),
                ("b".to_string(), s & 2 == 2),
                ("c".to_string(), s & 4 == 4),
            ]);
            sim.set_initial(0, &init);
            run_cycles(&mut sim, &cycles)
        })
        .collect();
    let flush = (0..9)
        .find(|&c| runs.iter().all(|r| r[2 * c..] == runs[0][2 * c..]))
        .unwrap();
    assert_eq!(flush, 3);
    let trace = Trace::from_cycles(&cycles, 1);
    let a = simulate(&n, &KeyVector::default(), &trace).unwrap();
    let b = simulate(
        &n,
        &KeyVector::default(),
        &Trace {
            state_seed: 99,
            ..trace
        },
    )
    .unwrap();
    assert_eq!(a.steps[2 * flush..], b.steps[2 * flush..]);
}

#[test]
fn oracle_session_contract() {
    let n = shift3();
    let cycles = stimulus(0b1100_1010, 8);
    let mut one = OracleSession::new(&n, &KeyVector::default(), 5).unwrap();
    assert!(one.query(&[]).unwrap().is_empty());
    let whole = one.query(&cycles).unwrap();
    let mut two = OracleSession::new(&n, &KeyVector::default(), 5).unwrap();
    let mut split = two.query(&cycles[..3]).unwrap();
    split.extend(two.query(&cycles[3..]).unwrap());
    assert_eq!(whole, split);
    let sim = simulate(&n, &KeyVector::default(), &Trace::from_cycles(&cycles, 5)).unwrap();
    for (c, o) in whole.iter().enumerate() {
        assert_eq!(o.high, sim.steps[2 * c].outputs);
        assert_eq!(o.low, sim.steps[2 * c + 1].outputs);
    }
    let mut fresh = OracleSession::new(&n, &KeyVector::default(), 5).unwrap();
    let no_reset = [CycleInput {
        inputs: vec![true],
        reset: false,
    }];
    assert!(matches!(
        fresh.query(&no_reset),
        Err(SimError::NotInitialized)
    ));
}

#[test]
fn trace_json_round_trip() {
    let n = shift3();
    let t = simulate(
        &n,
        &KeyVector::default(),
        &Trace::from_cycles(&stimulus(5, 3), 2),
    )
    .unwrap();
    let back = Trace::from_json(&t.to_json()).unwrap();
    assert_eq!(back, t);
    assert!(t.to_json().contains("\"phase\": \"H\""));
}

#[test]
fn trace_invariants_enforced() {
    let mut t = Trace::from_cycles(&stimulus(1, 2), 0);
    t.steps[1].inputs[0] = !t.steps[1].inputs[0];
    assert!(matches!(t.check(1), Err(TraceError::MidCycleChange(1))));
    let mut t = Trace::from_cycles(&stimulus(1, 2), 0);
    t.steps[0].reset = false;
    t.steps[1].reset = false;
    assert!(matches!(t.check(1), Err(TraceError::NoInitialReset)));
}

proptest! {
    #[test]
    fn lanes_match_scalar_runs(seed in any::<u64>(), modes in prop::collection::vec(0u8..4, 2)) {
        let n = parse_bench(
            "INPUT(a)\nINPUT(b)\nRESET(r)\nKEYINPUT(k0)\nKEYINPUT(k1)\nKEYINPUT(k2)\nKEYINPUT(k3)\nOUTPUT(y)\nOUTPUT(z)\n\
             x = NAND(a, z)\nl1 = KLATCH(x, k0, k1)\nf = DFF(l1)\ng = XOR(f, b)\nz = KLATCH(g, k2, k3)\ny = OR(l1, z)\n",
        ).unwrap();
        let k = KeyVector(modes.iter().flat_map(|m| [m & 2 != 0, m & 1 != 0]).collect());
        let Ok(mut wide) = Simulator::new(&n, &k) else { unreachable!() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lanes: Vec<Vec<CycleInput>> = (0..64).map(|_| random_cycles(&mut rng, 2, 6)).collect();
        let lane_seeds: Vec<u64> = (0..64).map(|l| seed ^ l).collect();
        wide.set_initial_lanes(&lane_seeds, &BTreeMap::new());
        let mut wide_out = Vec::new();
        let mut failed = false;
        for c in 0..6 {
            for _ in 0..2 {
                let ins: Vec<u64> = (0..2).map(|i| (0..64).fold(0u64, |w, l| w | (lanes[l][c].inputs[i] as u64) << l)).collect();
                let reset = if c == 0 { !0 } else { 0 };
                match wide.step_words(&ins, reset) {
                    Ok(o) => wide_out.push(o),
                    Err(_) => { failed = true; break; }
                }
            }
        }
        for l in [0usize, 17, 63] {
            let mut s = Simulator::new(&n, &k).unwrap();
            s.set_initial(lane_seeds[l], &BTreeMap::new());
            let mut frame = 0;
            for c in 0..6 {
                for _ in 0..2 {
                    match s.step(&lanes[l][c].inputs, c == 0) {
                        Ok(o) => {
                            prop_assert!(!failed);
                            for (j, &b) in o.iter().enumerate() {
                                prop_assert_eq!(wide_out[frame][j] >> l & 1 == 1, b);
                            }
                        }
                        Err(_) => { prop_assert!(failed); }
                    }
                    frame += 1;
                    if failed { break; }
                }
                if failed { break; }
            }
        }
    }

    #[test]
    fn logic_decoy_output_is_always_zero(bits in prop::collection::vec(any::<bool>(), 1..20), seed in any::<u64>()) {
        let n = one_latch();
        let cycles: Vec<CycleInput> = bits.iter().enumerate().map(|(i, &b)| CycleInput { inputs: vec![b], reset: i == 0 }).collect();
        let t = simulate(&n, &key("00"), &Trace::from_cycles(&cycles, seed)).unwrap();
        prop_assert!(t.steps.iter().all(|s| !s.outputs[0]));
    }

    #[test]
    fn simulation_is_deterministic(seed in any::<u64>()) {
        let n = crate::corpus::s27();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = Trace::from_cycles(&random_cycles(&mut rng, 4, 20), seed);
        let a = simulate(&n, &KeyVector::default(), &t).unwrap();
        let b = simulate(&n, &KeyVector::default(), &t).unwrap();
        prop_assert_eq!(a, b);
    }
}
