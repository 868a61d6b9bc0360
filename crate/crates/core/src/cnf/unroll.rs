use crate::netlist::{CellId, CellKind, NetId, Netlist};

use super::{CnfProblem, Lit};

/// Power-up literals for every sequential cell, in netlist order.
#[derive(Clone, Debug)]
pub struct InitLits {
    pub cells: Vec<CellId>,
    pub lits: Vec<Lit>,
}

impl InitLits {
    /// Fresh named variables `<prefix>init:<cell>`.
    pub fn fresh(p: &mut CnfProblem, n: &Netlist, prefix: &str) -> InitLits {
        let cells = n.sequential_cells();
        let lits = cells
            .iter()
            .map(|&c| {
                p.named_var(format!("{prefix}init:{}", n.cell(c).name))
                    .pos()
            })
            .collect();
        InitLits { cells, lits }
    }

    pub fn get(&self, c: CellId) -> Option<Lit> {
        self.cells
            .iter()
            .position(|&x| x == c)
            .map(|i| self.lits[i])
    }
}

/// One copy of a netlist unrolled over half-cycle frames.
#[derive(Clone, Debug)]
pub struct Unroller {
    key: Vec<Lit>,
    /// Per cell: init literal (sequential cells only).
    init: Vec<Option<Lit>>,
    comb_order: Vec<CellId>,
    frames: Vec<Vec<Lit>>,
    resets: Vec<Lit>,
    /// Per latch: literal for "key selects the logic-decoy mode".
    decoy: Vec<Option<Lit>>,
}

impl Unroller {
    /// `key` has one literal per KEYINPUT (constants allowed).
    pub fn new(n: &Netlist, key: Vec<Lit>, init: &InitLits) -> Unroller {
        assert_eq!(key.len(), n.num_key_bits());
        let mut per_cell = vec![None; n.cells().len()];
        for (&c, &l) in init.cells.iter().zip(&init.lits) {
            per_cell[c.index()] = Some(l);
        }
        let comb_order = n
            .topo_order(&|_| false)
            .expect("opaque sequential cells leave no cycles in a valid netlist")
            .into_iter()
            .filter(|&c| n.cell(c).kind.is_combinational())
            .collect();
        Unroller {
            key,
            init: per_cell,
            comb_order,
            frames: Vec::new(),
            resets: Vec::new(),
            decoy: vec![None; n.cells().len()],
        }
    }

    pub fn key(&self) -> &[Lit] {
        &self.key
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn net(&self, frame: usize, net: NetId) -> Lit {
        self.frames[frame][net.index()]
    }

    pub fn outputs(&self, n: &Netlist, frame: usize) -> Vec<Lit> {
        n.outputs().iter().map(|&o| self.net(frame, o)).collect()
    }

    /// Encodes the next frame. `inputs` and `reset` must be the same
    /// literals for both frames of a clock cycle.
    pub fn push_frame(&mut self, p: &mut CnfProblem, n: &Netlist, inputs: &[Lit], reset: Lit) {
        assert_eq!(inputs.len(), n.inputs().len());
        let f = self.frames.len();
        let high = f % 2 == 0;
        if high {
            self.resets.push(reset);
        }
        let unset = p.constant(false);
        let mut v = vec![unset; n.num_nets()];
        for (&net, &l) in n.inputs().iter().zip(inputs) {
            v[net.index()] = l;
        }
        if let Some(r) = n.reset() {
            v[r.index()] = reset;
        }
        for (&net, &l) in n.key_inputs().iter().zip(&self.key) {
            v[net.index()] = l;
        }
        // sequential outputs first; transparent latches get a placeholder
        // that is tied to the data pin once the logic is built
        let mut pending: Vec<(CellId, Lit, Lit, Lit)> = Vec::new();
        for c in n.sequential_cells() {
            let cell = n.cell(c);
            let prev = if f == 0 {
                self.init[c.index()].expect("init literal")
            } else {
                self.frames[f - 1][cell.output.index()]
            };
            let out = match cell.kind {
                CellKind::Dff => {
                    if f == 0 || !high {
                        prev
                    } else {
                        let d = self.frames[f - 1][cell.inputs[0].index()];
                        match n.reset() {
                            Some(_) => {
                                let r = self.resets[f / 2 - 1];
                                p.and(&[!r, d])
                            }
                            None => d,
                        }
                    }
                }
                _ => {
                    let (k0, k1) = self.mode_lits(p, n, c);
                    let transp = if high { k1 } else { k0 };
                    let decoy = match self.decoy[c.index()] {
                        Some(l) => l,
                        None => {
                            let l = p.and(&[!k0, !k1]);
                            self.decoy[c.index()] = Some(l);
                            l
                        }
                    };
                    match (p.as_const(decoy), p.as_const(transp)) {
                        (Some(true), _) => p.constant(false),
                        (Some(false), Some(false)) => prev,
                        _ => {
                            let o = p.new_lit();
                            pending.push((c, o, transp, decoy));
                            o
                        }
                    }
                }
            };
            v[cell.output.index()] = out;
        }
        for &c in &self.comb_order {
            let cell = n.cell(c);
            let ins: Vec<Lit> = cell.inputs.iter().map(|i| v[i.index()]).collect();
            v[cell.output.index()] = p.gate(cell.kind, &ins);
        }
        for (c, o, transp, decoy) in pending {
            let cell = n.cell(c);
            let d = v[cell.inputs[0].index()];
            let prev = if f == 0 {
                self.init[c.index()].unwrap()
            } else {
                self.frames[f - 1][cell.output.index()]
            };
            let passed = p.mux(transp, prev, d);
            let val = p.and(&[!decoy, passed]);
            p.equate(o, val);
        }
        self.frames.push(v);
    }

    fn mode_lits(&self, p: &CnfProblem, n: &Netlist, c: CellId) -> (Lit, Lit) {
        let cell = n.cell(c);
        match cell.kind {
            CellKind::Klatch => {
                let [a, b] = cell.key.unwrap();
                (self.key[a], self.key[b])
            }
            CellKind::LatchP => (p.constant(false), p.constant(true)),
            CellKind::LatchN => (p.constant(true), p.constant(false)),
            _ => unreachable!(),
        }
    }
}

/// Two copies with separate keys sharing inputs, reset and power-up state.
pub struct Miter {
    pub p: CnfProblem,
    pub k0: Vec<Lit>,
    pub k1: Vec<Lit>,
    pub init: InitLits,
    pub a: Unroller,
    pub b: Unroller,
    /// Input literals per clock cycle.
    pub inputs: Vec<Vec<Lit>>,
    /// Reset literal per clock cycle; cycle 0 is constant true.
    pub resets: Vec<Lit>,
    /// Per frame: true iff some output differs.
    pub diffs: Vec<Lit>,
}

impl Miter {
    /// Adds one clock cycle (two frames) with fresh inputs and reset.
    pub fn push_cycle(&mut self, n: &Netlist) {
        let c = self.inputs.len();
        let ins: Vec<Lit> = n
            .inputs()
            .iter()
            .map(|&i| self.p.named_var(format!("in:{}@{c}", n.net_name(i))).pos())
            .collect();
        let reset = if c == 0 {
            self.p.constant(true)
        } else {
            self.p.named_var(format!("reset@{c}")).pos()
        };
        for _ in 0..2 {
            self.a.push_frame(&mut self.p, n, &ins, reset);
            self.b.push_frame(&mut self.p, n, &ins, reset);
            let f = self.a.num_frames() - 1;
            let oa = self.a.outputs(n, f);
            let ob = self.b.outputs(n, f);
            let xs: Vec<Lit> = oa
                .iter()
                .zip(&ob)
                .map(|(&x, &y)| self.p.xor2(x, y))
                .collect();
            let d = self.p.or(&xs);
            self.diffs.push(d);
        }
        self.inputs.push(ins);
        self.resets.push(reset);
    }

    /// Literal true iff some output differs in any frame so far.
    pub fn any_diff(&mut self) -> Lit {
        let ds = self.diffs.clone();
        self.p.or(&ds)
    }
}

/// Builds the miter over `frames` half-cycles (rounded up to whole cycles).
pub fn build_miter(n: &Netlist, frames: usize) -> Miter {
    let mut p = CnfProblem::new();
    let k0: Vec<Lit> = (0..n.num_key_bits())
        .map(|i| p.named_var(format!("k0[{i}]")).pos())
        .collect();
    let k1: Vec<Lit> = (0..n.num_key_bits())
        .map(|i| p.named_var(format!("k1[{i}]")).pos())
        .collect();
    let init = InitLits::fresh(&mut p, n, "");
    let a = Unroller::new(n, k0.clone(), &init);
    let b = Unroller::new(n, k1.clone(), &init);
    let mut m = Miter {
        p,
        k0,
        k1,
        init,
        a,
        b,
        inputs: Vec::new(),
        resets: Vec::new(),
        diffs: Vec::new(),
    };
    for _ in 0..frames.div_ceil(2).max(1) {
        m.push_cycle(n);
    }
    m
}
