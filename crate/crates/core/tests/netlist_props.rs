use latchlock::corpus;
use latchlock::netlist::{parse_bench, write_bench, CellKind, Netlist};
use proptest::prelude::*;

/// A random well-formed netlist: gates read only earlier signals, flip-flops
/// and keyed latches read any gate, so every loop goes through storage.
fn arb_bench() -> impl Strategy<Value = String> {
    (1usize..4, 0usize..4, 0usize..3, 1usize..14, any::<u64>()).prop_map(
        |(ins, ffs, latches, gates, seed)| {
            use rand::{Rng, SeedableRng};
            let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut s = String::new();
            let mut sig: Vec<String> = Vec::new();
            for i in 0..ins {
                s += &format!("INPUT(i{i})\n");
                sig.push(format!("i{i}"));
            }
            if r.gen_bool(0.5) {
                s += "RESET(rst)\n";
            }
            for k in 0..2 * latches {
                s += &format!("KEYINPUT(k{k})\n");
            }
            sig.extend((0..ffs).map(|f| format!("f{f}")));
            sig.extend((0..latches).map(|l| format!("l{l}")));
            let mut body = String::new();
            for g in 0..gates {
                let pick = |r: &mut rand_chacha::ChaCha8Rng| sig[r.gen_range(0..sig.len())].clone();
                let (kind, arity) = match r.gen_range(0..8) {
                    0 => ("AND", 2),
                    1 => ("OR", 2),
                    2 => ("XOR", 2),
                    3 => ("NAND", 3),
                    4 => ("NOR", 2),
                    5 => ("NOT", 1),
                    6 => ("BUF", 1),
                    _ => ("MUX", 3),
                };
                let args: Vec<String> = (0..arity).map(|_| pick(&mut r)).collect();
                body += &format!("g{g} = {kind}({})\n", args.join(", "));
                sig.push(format!("g{g}"));
            }
            let gate = |r: &mut rand_chacha::ChaCha8Rng| format!("g{}", r.gen_range(0..gates));
            for f in 0..ffs {
                body += &format!("f{f} = DFF({})\n", gate(&mut r));
            }
            for l in 0..latches {
                body += &format!(
                    "l{l} = KLATCH({}, k{}, k{})\n",
                    gate(&mut r),
                    2 * l,
                    2 * l + 1
                );
            }
            s += &format!("OUTPUT(g{})\n", gates - 1);
            let extra = gate(&mut r);
            if r.gen_bool(0.5) && extra != format!("g{}", gates - 1) {
                s += &format!("OUTPUT({extra})\n");
            }
            s + &body
        },
    )
}

type Shape = (
    Vec<String>,
    Vec<String>,
    Vec<String>,
    Option<String>,
    Vec<(String, CellKind, Vec<String>, Option<[usize; 2]>)>,
);

fn shape(n: &Netlist) -> Shape {
    let names = |v: &[latchlock::netlist::NetId]| {
        v.iter()
            .map(|&x| n.net_name(x).to_string())
            .collect::<Vec<_>>()
    };
    let cells = n
        .cells()
        .iter()
        .map(|c| {
            (
                c.name.clone(),
                c.kind,
                c.inputs
                    .iter()
                    .map(|&i| n.net_name(i).to_string())
                    .collect(),
                c.key,
            )
        })
        .collect();
    (
        names(n.inputs()),
        names(n.outputs()),
        names(n.key_inputs()),
        n.reset().map(|r| n.net_name(r).to_string()),
        cells,
    )
}

fn replay_respects_order(n: &Netlist, transparent: &dyn Fn(latchlock::netlist::CellId) -> bool) {
    let order = n.topo_order(transparent).expect("acyclic through storage");
    assert_eq!(order.len(), n.cells().len());
    let mut pos = vec![usize::MAX; n.cells().len()];
    for (i, c) in order.iter().enumerate() {
        pos[c.index()] = i;
    }
    for c in n.cell_ids() {
        let cell = n.cell(c);
        if !(cell.kind.is_combinational() || transparent(c)) {
            continue;
        }
        for &i in &cell.inputs {
            if let Some(d) = n.driver_cell(i) {
                let dk = n.cell(d).kind;
                if dk.is_combinational() || transparent(d) {
                    assert!(
                        pos[d.index()] < pos[c.index()],
                        "{} before {}",
                        n.cell(d).name,
                        cell.name
                    );
                }
            }
        }
    }
}

proptest! {
    #[test]
    fn round_trip_preserves_structure(src in arb_bench()) {
        let n = parse_bench(&src).unwrap();
        prop_assert!(n.validate().is_empty());
        let text = write_bench(&n);
        let back = parse_bench(&text).unwrap();
        prop_assert_eq!(shape(&back), shape(&n));
        prop_assert_eq!(write_bench(&back), text);
    }

    #[test]
    fn topo_order_puts_cells_after_their_live_predecessors(src in arb_bench()) {
        let n = parse_bench(&src).unwrap();
        replay_respects_order(&n, &|_| false);
    }

    #[test]
    fn fault_injection_is_always_diagnosed(src in arb_bench(), pick in any::<prop::sample::Index>(), fault in 0u8..3) {
        let n = parse_bench(&src).unwrap();
        let gates: Vec<_> = n.cells().iter().filter(|c| c.kind.is_combinational()).collect();
        let victim = pick.get(&gates);
        let first_in = n.net_name(n.inputs()[0]).to_string();
        let mut b = n.to_builder();
        match fault {
            // dropped driver: the victim's readers or output port lose their source
            0 => {
                b.remove_cell(&victim.name);
                if n.readers(victim.output).is_empty() && !n.is_output(victim.output) {
                    b.add_output(&victim.name);
                }
            }
            // duplicated driver
            1 => {
                b.add_cell(CellKind::Buf, &victim.name, [first_in.as_str()]);
            }
            // bad arity
            _ => {
                let too_many: Vec<String> = std::iter::repeat(first_in.clone()).take(4).collect();
                b.rewire_cell(&victim.name, if victim.kind == CellKind::Not || victim.kind == CellKind::Buf { too_many } else { vec![first_in.clone()] });
            }
        }
        let broken = b.build_unchecked().unwrap();
        prop_assert!(!broken.validate().is_empty(), "fault {} on {} undiagnosed", fault, victim.name);
    }
}

#[test]
fn corpus_round_trips() {
    for n in corpus::desk_corpus()
        .into_iter()
        .chain([corpus::toy_one_klatch()])
    {
        let text = write_bench(&n);
        let back = parse_bench(&text).unwrap();
        assert_eq!(shape(&back), shape(&n), "{}", n.name());
        assert_eq!(write_bench(&back), text, "{}", n.name());
    }
}
