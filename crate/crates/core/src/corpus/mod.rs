//! Built-in benchmark circuits.

use crate::netlist::{parse_bench_named, Netlist};

const S27: &str = include_str!("s27.bench");

/// ISCAS'89 s27: 4 inputs, 1 output, 3 flip-flops, 10 gates.
pub fn s27() -> Netlist {
    parse_bench_named(S27, "s27").expect("built-in s27 is valid")
}

/// s27 with flip-flop `G5` split into a keyed master/slave latch pair and a
/// keyed latch on `G12`. The correct key `100111` makes the pair
/// negative/positive and the extra latch clear.
pub fn s27_split() -> Netlist {
    parse_bench_named(
        "INPUT(G0)\nINPUT(G1)\nINPUT(G2)\nINPUT(G3)\nOUTPUT(G17)\n\
         KEYINPUT(k0)\nKEYINPUT(k1)\nKEYINPUT(k2)\nKEYINPUT(k3)\nKEYINPUT(k4)\nKEYINPUT(k5)\n\
         m5 = KLATCH(G10, k0, k1)\nG5 = KLATCH(m5, k2, k3)\nG6 = DFF(G11)\nG7 = DFF(G13)\n\
         G14 = NOT(G0)\nG17 = NOT(G11)\nG8 = AND(G14, G6)\nG15 = OR(G12, G8)\nG16 = OR(G3, G8)\n\
         G9 = NAND(G16, G15)\nG10 = NOR(G14, G11)\nG11 = NOR(G5, G9)\nG12r = NOR(G1, G7)\n\
         G12 = KLATCH(G12r, k4, k5)\nG13 = NOR(G2, G12)\n",
        "s27_split",
    )
    .expect("built-in netlist is valid")
}

/// A flip-flop behind one keyed latch, already locked with two key bits.
/// The correct key `11` leaves the latch clear.
pub fn toy_one_klatch() -> Netlist {
    parse_bench_named(
        "INPUT(a)\nINPUT(b)\nKEYINPUT(keyinput0)\nKEYINPUT(keyinput1)\nOUTPUT(y)\n\
         q = DFF(d)\nd = XOR(a, q)\nl = KLATCH(q, keyinput0, keyinput1)\ny = XOR(l, b)\n",
        "toy_one_klatch",
    )
    .expect("built-in netlist is valid")
}

/// Two-bit counter with enable, synchronous reset and a carry output.
pub fn toy_counter() -> Netlist {
    parse_bench_named(
        "INPUT(en)\nRESET(rst)\nOUTPUT(c0)\nOUTPUT(cy)\n\
         c0 = DFF(n0)\nc1 = DFF(n1)\nn0 = XOR(c0, en)\nt = AND(c0, en)\nn1 = XOR(c1, t)\ncy = AND(t, c1)\n",
        "toy_counter",
    )
    .expect("built-in netlist is valid")
}

/// Three-stage shift register with XOR feedback and a data input.
pub fn toy_shift() -> Netlist {
    parse_bench_named(
        "INPUT(d)\nINPUT(m)\nRESET(rst)\nOUTPUT(o)\nOUTPUT(p)\n\
         s0 = DFF(f)\ns1 = DFF(s0)\ns2 = DFF(x1)\nfb = XOR(s2, s1)\nf = XOR(d, fb)\n\
         x1 = MUX(m, s1, s0)\no = BUF(s2)\np = NAND(s0, s2)\n",
        "toy_shift",
    )
    .expect("built-in netlist is valid")
}

/// A 4-flip-flop ring plus four flip-flops that only talk to ports.
pub fn toy_ring() -> Netlist {
    parse_bench_named(
        "INPUT(a)\nINPUT(b)\nRESET(rst)\nOUTPUT(y)\nOUTPUT(z)\n\
         r0 = DFF(g0)\nr1 = DFF(g1)\nr2 = DFF(g2)\nr3 = DFF(g3)\n\
         g0 = XOR(r3, a)\ng1 = AND(r0, b)\ng2 = OR(r1, r0)\ng3 = NAND(r2, r1)\n\
         i0 = DFF(a)\ni1 = DFF(b)\nh = AND(a, b)\ni2 = DFF(h)\nk = OR(a, b)\ni3 = DFF(k)\n\
         y = XOR(r3, i0)\nw = AND(i1, i2)\nz = OR(w, i3)\n",
        "toy_ring",
    )
    .expect("built-in netlist is valid")
}

/// Serial accumulator: a 3-bit register adding a serial input bit.
pub fn toy_acc() -> Netlist {
    parse_bench_named(
        "INPUT(x)\nINPUT(clr)\nRESET(rst)\nOUTPUT(q2)\nOUTPUT(par)\n\
         q0 = DFF(d0)\nq1 = DFF(d1)\nq2 = DFF(d2)\nnclr = NOT(clr)\n\
         s0 = XOR(q0, x)\nc0 = AND(q0, x)\ns1 = XOR(q1, c0)\nc1 = AND(q1, c0)\ns2 = XOR(q2, c1)\n\
         d0 = AND(s0, nclr)\nd1 = AND(s1, nclr)\nd2 = AND(s2, nclr)\npar = XOR(q0, q1)\n",
        "toy_acc",
    )
    .expect("built-in netlist is valid")
}

/// Shape of a synthetic benchmark-class circuit.
#[derive(Clone, Copy, Debug)]
pub struct SynthSpec {
    pub inputs: usize,
    pub outputs: usize,
    pub flip_flops: usize,
    pub gates: usize,
    /// Flip-flops per loosely coupled cluster.
    pub cluster: usize,
    pub max_depth: usize,
    pub reset: bool,
    pub seed: u64,
}

/// Random clustered sequential circuit with the given shape. Gates draw
/// mostly from their own cluster's state and gates plus the inputs, so the
/// flip-flop graph has community structure like real control logic.
pub fn synth(name: &str, s: SynthSpec) -> Netlist {
    use rand::seq::SliceRandom;
    use rand::Rng;

    use crate::netlist::{CellKind, NetlistBuilder};

    let mut r = crate::rng::stream(s.seed, name);
    let mut b = NetlistBuilder::new(name);
    let ins: Vec<String> = (0..s.inputs).map(|i| format!("I{i}")).collect();
    for i in &ins {
        b.add_input(i);
    }
    if s.reset {
        b.set_reset("rst");
    }
    let clusters = s.flip_flops.div_ceil(s.cluster.max(1)).max(1);
    let ffs: Vec<String> = (0..s.flip_flops).map(|i| format!("F{i}")).collect();
    // (name, level, cluster)
    let mut pool: Vec<(String, usize, usize)> = ffs
        .iter()
        .enumerate()
        .map(|(i, f)| (f.clone(), 0, i % clusters))
        .collect();
    let mut gates: Vec<(String, usize, usize)> = Vec::new();
    let kinds = [
        CellKind::And,
        CellKind::Or,
        CellKind::Nand,
        CellKind::Nor,
        CellKind::Xor,
        CellKind::Not,
    ];
    for g in 0..s.gates {
        let cl = g % clusters;
        let kind = *kinds.choose(&mut r).unwrap();
        let arity = if kind == CellKind::Not { 1 } else { 2 };
        let mut picked: Vec<(String, usize)> = Vec::new();
        for k in 0..arity {
            // the first gates each read one flip-flop so no state is dead
            let pick = if k == 0 && g < s.flip_flops {
                (ffs[g].clone(), 0)
            } else if r.gen_bool(0.2) {
                (ins.choose(&mut r).unwrap().clone(), 0)
            } else {
                let local: Vec<&(String, usize, usize)> = pool
                    .iter()
                    .filter(|(_, lv, c)| *lv < s.max_depth && (*c == cl || r.gen_bool(0.08)))
                    .collect();
                // lean towards recent nets so the logic gains depth
                let k = local.len();
                let idx = if k > 6 && r.gen_bool(0.6) {
                    r.gen_range(k - 6..k)
                } else {
                    r.gen_range(0..k.max(1))
                };
                match local.get(idx) {
                    Some((n, lv, _)) => (n.clone(), *lv),
                    None => (ins.choose(&mut r).unwrap().clone(), 0),
                }
            };
            if !picked.iter().any(|(p, _)| p == &pick.0) {
                picked.push(pick);
            }
        }
        let kind = if picked.len() == 1 && arity == 2 {
            CellKind::Not
        } else {
            kind
        };
        let lv = picked.iter().map(|p| p.1).max().unwrap_or(0) + 1;
        let name = format!("N{g}");
        b.add_cell(kind, &name, picked.iter().map(|p| p.0.as_str()));
        pool.push((name.clone(), lv, cl));
        gates.push((name, lv, cl));
    }
    for (i, f) in ffs.iter().enumerate() {
        let cl = i % clusters;
        let own: Vec<&(String, usize, usize)> = gates.iter().filter(|g| g.2 == cl).collect();
        let src = &own[own.len() - 1 - (i / clusters) % own.len()].0;
        b.add_cell(CellKind::Dff, f, [src.as_str()]);
    }
    let mut outs: Vec<&String> = gates.iter().rev().map(|g| &g.0).collect();
    outs.truncate(s.outputs * 3);
    outs.shuffle(&mut r);
    for o in outs.into_iter().take(s.outputs) {
        b.add_output(o);
    }
    b.build().expect("generated netlist is valid")
}

/// s298-class: 3 inputs, 6 outputs, 14 flip-flops, 119 gates.
pub fn s298_class() -> Netlist {
    synth(
        "s298c",
        SynthSpec {
            inputs: 3,
            outputs: 6,
            flip_flops: 14,
            gates: 119,
            cluster: 4,
            max_depth: 7,
            reset: false,
            seed: 298,
        },
    )
}

/// s344-class: 9 inputs, 11 outputs, 15 flip-flops, 160 gates, with a
/// synchronous reset port.
pub fn s344_class() -> Netlist {
    synth(
        "s344c",
        SynthSpec {
            inputs: 9,
            outputs: 11,
            flip_flops: 15,
            gates: 160,
            cluster: 5,
            max_depth: 8,
            reset: true,
            seed: 344,
        },
    )
}

/// s1196-class: 14 inputs, 14 outputs, 18 flip-flops, 529 gates.
pub fn s1196_class() -> Netlist {
    synth(
        "s1196c",
        SynthSpec {
            inputs: 14,
            outputs: 14,
            flip_flops: 18,
            gates: 529,
            cluster: 6,
            max_depth: 10,
            reset: false,
            seed: 1196,
        },
    )
}

/// Small circuits (at most 12 inputs) used for exhaustive checks.
pub fn toys() -> Vec<Netlist> {
    vec![toy_counter(), toy_shift(), toy_ring(), toy_acc()]
}

/// Every built-in circuit that can be locked: the toys, s27 and the
/// synthetic benchmark-class circuits.
pub fn desk_corpus() -> Vec<Netlist> {
    let mut v = toys();
    v.extend([s27(), s298_class(), s344_class(), s1196_class()]);
    v
}
