//! Gate-level sequential netlists with keyed latch primitives.
//!
//! A [`Netlist`] is immutable once built. Passes that change a design go
//! through [`NetlistBuilder`], usually seeded from an existing netlist with
//! [`Netlist::to_builder`].

mod bench;
mod graph;
mod key;
mod validate;

use std::collections::HashMap;
use std::fmt;

pub use bench::{parse_bench, parse_bench_named, write_bench};
pub use graph::{ConeDirection, CycleReport};
pub use key::{KeyFile, KeyVector, LatchMode};
pub use validate::Diagnostic;

use thiserror::Error;

/// Prefix reserved for names generated by passes.
pub const GENERATED_PREFIX: &str = "__ll_";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NetId(pub u32);

impl NetId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellId(pub u32);

impl CellId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CellKind {
    And,
    Nand,
    Or,
    Nor,
    Xor,
    Xnor,
    Not,
    Buf,
    /// `MUX(sel, a, b)` selects `a` when `sel` is 0 and `b` when it is 1.
    Mux,
    Const0,
    Const1,
    Dff,
    Klatch,
    LatchP,
    LatchN,
}

impl CellKind {
    pub const ALL: [CellKind; 15] = [
        CellKind::And,
        CellKind::Nand,
        CellKind::Or,
        CellKind::Nor,
        CellKind::Xor,
        CellKind::Xnor,
        CellKind::Not,
        CellKind::Buf,
        CellKind::Mux,
        CellKind::Const0,
        CellKind::Const1,
        CellKind::Dff,
        CellKind::Klatch,
        CellKind::LatchP,
        CellKind::LatchN,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CellKind::And => "AND",
            CellKind::Nand => "NAND",
            CellKind::Or => "OR",
            CellKind::Nor => "NOR",
            CellKind::Xor => "XOR",
            CellKind::Xnor => "XNOR",
            CellKind::Not => "NOT",
            CellKind::Buf => "BUF",
            CellKind::Mux => "MUX",
            CellKind::Const0 => "CONST0",
            CellKind::Const1 => "CONST1",
            CellKind::Dff => "DFF",
            CellKind::Klatch => "KLATCH",
            CellKind::LatchP => "LATCH_P",
            CellKind::LatchN => "LATCH_N",
        }
    }

    pub fn from_name(s: &str) -> Option<CellKind> {
        let up = s.to_ascii_uppercase();
        let up = match up.as_str() {
            "BUFF" => "BUF",
            "INV" => "NOT",
            other => other,
        };
        CellKind::ALL.iter().copied().find(|k| k.name() == up)
    }

    /// `(min, max)` number of data inputs written in BENCH syntax. KLATCH
    /// counts its two key references.
    pub fn arity(self) -> (usize, usize) {
        match self {
            CellKind::And | CellKind::Nand | CellKind::Or | CellKind::Nor => (2, usize::MAX),
            CellKind::Xor | CellKind::Xnor => (2, usize::MAX),
            CellKind::Not | CellKind::Buf => (1, 1),
            CellKind::Mux => (3, 3),
            CellKind::Const0 | CellKind::Const1 => (0, 0),
            CellKind::Dff | CellKind::LatchP | CellKind::LatchN => (1, 1),
            CellKind::Klatch => (3, 3),
        }
    }

    pub fn is_sequential(self) -> bool {
        matches!(
            self,
            CellKind::Dff | CellKind::Klatch | CellKind::LatchP | CellKind::LatchN
        )
    }

    pub fn is_latch(self) -> bool {
        matches!(self, CellKind::Klatch | CellKind::LatchP | CellKind::LatchN)
    }

    pub fn is_combinational(self) -> bool {
        !self.is_sequential()
    }

    /// Evaluates a combinational kind.
    pub fn eval(self, ins: &[bool]) -> bool {
        match self {
            CellKind::And => ins.iter().all(|&x| x),
            CellKind::Nand => !ins.iter().all(|&x| x),
            CellKind::Or => ins.iter().any(|&x| x),
            CellKind::Nor => !ins.iter().any(|&x| x),
            CellKind::Xor => ins.iter().fold(false, |a, &x| a ^ x),
            CellKind::Xnor => !ins.iter().fold(false, |a, &x| a ^ x),
            CellKind::Not => !ins[0],
            CellKind::Buf => ins[0],
            CellKind::Mux => {
                if ins[0] {
                    ins[2]
                } else {
                    ins[1]
                }
            }
            CellKind::Const0 => false,
            CellKind::Const1 => true,
            _ => panic!("{} is not combinational", self.name()),
        }
    }

    /// Bit-parallel evaluation, 64 patterns per word.
    pub fn eval_word(self, ins: &[u64]) -> u64 {
        match self {
            CellKind::And => ins.iter().fold(!0, |a, &x| a & x),
            CellKind::Nand => !ins.iter().fold(!0, |a, &x| a & x),
            CellKind::Or => ins.iter().fold(0, |a, &x| a | x),
            CellKind::Nor => !ins.iter().fold(0, |a, &x| a | x),
            CellKind::Xor => ins.iter().fold(0, |a, &x| a ^ x),
            CellKind::Xnor => !ins.iter().fold(0, |a, &x| a ^ x),
            CellKind::Not => !ins[0],
            CellKind::Buf => ins[0],
            CellKind::Mux => (ins[0] & ins[2]) | (!ins[0] & ins[1]),
            CellKind::Const0 => 0,
            CellKind::Const1 => !0,
            _ => panic!("{} is not combinational", self.name()),
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cell {
    /// Cell name; always equal to the name of the output net.
    pub name: String,
    pub kind: CellKind,
    /// Data inputs. A KLATCH has exactly one (its data pin); its key pins
    /// are in `key`.
    pub inputs: Vec<NetId>,
    pub output: NetId,
    /// KLATCH key-bit indices `(k0, k1)` into [`Netlist::key_inputs`].
    pub key: Option<[usize; 2]>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Driver {
    Input(usize),
    Key(usize),
    Reset,
    Cell(CellId),
}

#[derive(Clone, Debug)]
pub struct Netlist {
    name: String,
    nets: Vec<String>,
    net_ids: HashMap<String, NetId>,
    inputs: Vec<NetId>,
    outputs: Vec<NetId>,
    key_inputs: Vec<NetId>,
    reset: Option<NetId>,
    cells: Vec<Cell>,
    drivers: Vec<Option<Driver>>,
    readers: Vec<Vec<CellId>>,
}

#[derive(Debug, Error)]
pub enum NetlistError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("{}{diag}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Invalid {
        line: Option<usize>,
        diag: Diagnostic,
    },
    #[error("unknown net `{0}`")]
    UnknownNet(String),
}

impl Netlist {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_nets(&self) -> usize {
        self.nets.len()
    }

    pub fn net_name(&self, n: NetId) -> &str {
        &self.nets[n.index()]
    }

    pub fn net_id(&self, name: &str) -> Option<NetId> {
        self.net_ids.get(name).copied()
    }

    pub fn inputs(&self) -> &[NetId] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[NetId] {
        &self.outputs
    }

    pub fn key_inputs(&self) -> &[NetId] {
        &self.key_inputs
    }

    pub fn reset(&self) -> Option<NetId> {
        self.reset
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cell(&self, c: CellId) -> &Cell {
        &self.cells[c.index()]
    }

    pub fn cell_ids(&self) -> impl Iterator<Item = CellId> + '_ {
        (0..self.cells.len()).map(|i| CellId(i as u32))
    }

    pub fn cell_by_name(&self, name: &str) -> Option<CellId> {
        let n = self.net_id(name)?;
        match self.driver(n) {
            Some(Driver::Cell(c)) => Some(c),
            _ => None,
        }
    }

    pub fn driver(&self, n: NetId) -> Option<Driver> {
        self.drivers[n.index()]
    }

    /// Cell driving net `n`, if the driver is a cell.
    pub fn driver_cell(&self, n: NetId) -> Option<CellId> {
        match self.drivers[n.index()] {
            Some(Driver::Cell(c)) => Some(c),
            _ => None,
        }
    }

    /// Cells reading net `n` on a data pin.
    pub fn readers(&self, n: NetId) -> &[CellId] {
        &self.readers[n.index()]
    }

    pub fn is_output(&self, n: NetId) -> bool {
        self.outputs.contains(&n)
    }

    /// All sequential cells in netlist order.
    pub fn sequential_cells(&self) -> Vec<CellId> {
        self.cell_ids()
            .filter(|&c| self.cell(c).kind.is_sequential())
            .collect()
    }

    pub fn cells_of_kind(&self, kind: CellKind) -> Vec<CellId> {
        self.cell_ids()
            .filter(|&c| self.cell(c).kind == kind)
            .collect()
    }

    pub fn klatches(&self) -> Vec<CellId> {
        self.cells_of_kind(CellKind::Klatch)
    }

    pub fn flip_flops(&self) -> Vec<CellId> {
        self.cells_of_kind(CellKind::Dff)
    }

    pub fn num_key_bits(&self) -> usize {
        self.key_inputs.len()
    }

    /// Rebuilds the netlist through a builder, preserving statement order.
    pub fn to_builder(&self) -> NetlistBuilder {
        let mut b = NetlistBuilder::new(&self.name);
        for &i in &self.inputs {
            b.add_input(self.net_name(i));
        }
        if let Some(r) = self.reset {
            b.set_reset(self.net_name(r));
        }
        for &k in &self.key_inputs {
            b.add_key(self.net_name(k));
        }
        for &o in &self.outputs {
            b.add_output(self.net_name(o));
        }
        for c in &self.cells {
            let mut ins: Vec<String> = c
                .inputs
                .iter()
                .map(|&n| self.net_name(n).to_string())
                .collect();
            if let Some([k0, k1]) = c.key {
                ins.push(self.net_name(self.key_inputs[k0]).to_string());
                ins.push(self.net_name(self.key_inputs[k1]).to_string());
            }
            b.add_cell(c.kind, &c.name, ins);
        }
        b
    }

    /// Runs every structural check; empty iff the netlist is well formed.
    pub fn validate(&self) -> Vec<Diagnostic> {
        validate::validate(self)
    }
}

#[derive(Clone, Debug)]
struct CellSpec {
    kind: CellKind,
    output: String,
    inputs: Vec<String>,
    line: Option<usize>,
}

/// Incremental constructor for netlists; names are resolved at `build` time.
#[derive(Clone, Debug)]
pub struct NetlistBuilder {
    name: String,
    inputs: Vec<String>,
    outputs: Vec<String>,
    keys: Vec<String>,
    reset: Option<String>,
    cells: Vec<CellSpec>,
    line: Option<usize>,
}

impl NetlistBuilder {
    pub fn new(name: &str) -> NetlistBuilder {
        NetlistBuilder {
            name: name.to_string(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            keys: Vec::new(),
            reset: None,
            cells: Vec::new(),
            line: None,
        }
    }

    pub fn set_name(&mut self, name: &str) -> &mut Self {
        self.name = name.to_string();
        self
    }

    pub(crate) fn at_line(&mut self, line: usize) -> &mut Self {
        self.line = Some(line);
        self
    }

    pub fn add_input(&mut self, name: &str) -> &mut Self {
        self.inputs.push(name.to_string());
        self
    }

    pub fn add_output(&mut self, name: &str) -> &mut Self {
        self.outputs.push(name.to_string());
        self
    }

    pub fn add_key(&mut self, name: &str) -> &mut Self {
        self.keys.push(name.to_string());
        self
    }

    pub fn set_reset(&mut self, name: &str) -> &mut Self {
        self.reset = Some(name.to_string());
        self
    }

    /// Adds `output = KIND(inputs...)`. For KLATCH the inputs are
    /// `[data, key0, key1]` with key pins naming KEYINPUT nets.
    pub fn add_cell<S: AsRef<str>>(
        &mut self,
        kind: CellKind,
        output: &str,
        inputs: impl IntoIterator<Item = S>,
    ) -> &mut Self {
        self.cells.push(CellSpec {
            kind,
            output: output.to_string(),
            inputs: inputs.into_iter().map(|s| s.as_ref().to_string()).collect(),
            line: self.line,
        });
        self
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn has_output(&self, name: &str) -> bool {
        self.outputs.iter().any(|o| o == name)
    }

    pub fn key_names(&self) -> &[String] {
        &self.keys
    }

    /// Removes every cell whose output is `name`.
    pub fn remove_cell(&mut self, name: &str) -> &mut Self {
        self.cells.retain(|c| c.output != name);
        self
    }

    /// Replaces the inputs of the cell driving `output`.
    pub fn rewire_cell(&mut self, output: &str, inputs: Vec<String>) -> &mut Self {
        for c in self.cells.iter_mut().filter(|c| c.output == output) {
            c.inputs = inputs.clone();
        }
        self
    }

    /// Renames the output net of the cell driving `old` and leaves readers alone.
    pub fn rename_cell_output(&mut self, old: &str, new: &str) -> &mut Self {
        for c in self.cells.iter_mut().filter(|c| c.output == old) {
            c.output = new.to_string();
        }
        self
    }

    /// Rewrites every data-pin reference to `from` into `to`, except in the
    /// cells listed in `except`.
    pub fn redirect_readers(&mut self, from: &str, to: &str, except: &[&str]) -> &mut Self {
        for c in self.cells.iter_mut() {
            if except.contains(&c.output.as_str()) {
                continue;
            }
            let data_pins = if c.kind == CellKind::Klatch {
                1.min(c.inputs.len())
            } else {
                c.inputs.len()
            };
            for i in c.inputs[..data_pins].iter_mut() {
                if i == from {
                    *i = to.to_string();
                }
            }
        }
        for o in self.outputs.iter_mut() {
            if o == from {
                *o = to.to_string();
            }
        }
        self
    }

    pub fn remove_key(&mut self, name: &str) -> &mut Self {
        self.keys.retain(|k| k != name);
        self
    }

    /// Replaces the key list by the new names of `order` (old, new) and
    /// renames every KLATCH key pin accordingly. Keys not listed are dropped.
    pub fn reassign_keys(&mut self, order: &[(String, String)]) -> &mut Self {
        let map: HashMap<&str, &str> = order
            .iter()
            .map(|(a, b)| (a.as_str(), b.as_str()))
            .collect();
        for c in self.cells.iter_mut().filter(|c| c.kind == CellKind::Klatch) {
            for pin in c.inputs.iter_mut().skip(1) {
                if let Some(new) = map.get(pin.as_str()) {
                    *pin = new.to_string();
                }
            }
        }
        self.keys = order.iter().map(|(_, b)| b.clone()).collect();
        self
    }

    /// Builds and validates.
    pub fn build(&self) -> Result<Netlist, NetlistError> {
        let n = self.build_unchecked()?;
        let diags = n.validate();
        if let Some(d) = diags.into_iter().next() {
            let line = d.cell_name().and_then(|c| {
                self.cells
                    .iter()
                    .find(|s| s.output == c)
                    .and_then(|s| s.line)
            });
            return Err(NetlistError::Invalid { line, diag: d });
        }
        Ok(n)
    }

    /// Builds without structural validation. Names used but never declared
    /// still get net ids (left undriven), so `validate` can report them.
    pub fn build_unchecked(&self) -> Result<Netlist, NetlistError> {
        let mut nets: Vec<String> = Vec::new();
        let mut net_ids: HashMap<String, NetId> = HashMap::new();
        let mut intern = |s: &str| -> NetId {
            if let Some(&id) = net_ids.get(s) {
                return id;
            }
            let id = NetId(nets.len() as u32);
            nets.push(s.to_string());
            net_ids.insert(s.to_string(), id);
            id
        };
        let inputs: Vec<NetId> = self.inputs.iter().map(|s| intern(s)).collect();
        let reset = self.reset.as_deref().map(&mut intern);
        let key_inputs: Vec<NetId> = self.keys.iter().map(|s| intern(s)).collect();
        let mut cells = Vec::with_capacity(self.cells.len());
        for spec in &self.cells {
            let output = intern(&spec.output);
            let (inputs, key) = if spec.kind == CellKind::Klatch && spec.inputs.len() == 3 {
                let d = intern(&spec.inputs[0]);
                let mut idx = [usize::MAX; 2];
                for (j, kname) in spec.inputs[1..].iter().enumerate() {
                    idx[j] = self
                        .keys
                        .iter()
                        .position(|k| k == kname)
                        .unwrap_or(usize::MAX);
                    intern(kname);
                }
                (vec![d], Some(idx))
            } else {
                (spec.inputs.iter().map(|s| intern(s)).collect(), None)
            };
            cells.push(Cell {
                name: spec.output.clone(),
                kind: spec.kind,
                inputs,
                output,
                key,
            });
        }
        let outputs: Vec<NetId> = self.outputs.iter().map(|s| intern(s)).collect();

        let mut drivers = vec![None; nets.len()];
        for (i, &n) in inputs.iter().enumerate() {
            drivers[n.index()].get_or_insert(Driver::Input(i));
        }
        if let Some(r) = reset {
            drivers[r.index()].get_or_insert(Driver::Reset);
        }
        for (i, &n) in key_inputs.iter().enumerate() {
            drivers[n.index()].get_or_insert(Driver::Key(i));
        }
        let mut readers = vec![Vec::new(); nets.len()];
        for (i, c) in cells.iter().enumerate() {
            drivers[c.output.index()].get_or_insert(Driver::Cell(CellId(i as u32)));
            for &n in &c.inputs {
                if !readers[n.index()].contains(&CellId(i as u32)) {
                    readers[n.index()].push(CellId(i as u32));
                }
            }
        }
        Ok(Netlist {
            name: self.name.clone(),
            nets,
            net_ids,
            inputs,
            outputs,
            key_inputs,
            reset,
            cells,
            drivers,
            readers,
        })
    }
}

/// Counts used by `stats`-style reports.
#[derive(Clone, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct NetlistStats {
    pub name: String,
    pub inputs: usize,
    pub outputs: usize,
    pub key_bits: usize,
    pub has_reset: bool,
    pub cells: usize,
    pub combinational: usize,
    pub flip_flops: usize,
    pub klatches: usize,
    pub fixed_latches: usize,
}

impl Netlist {
    pub fn stats(&self) -> NetlistStats {
        let count = |k: CellKind| self.cells.iter().filter(|c| c.kind == k).count();
        NetlistStats {
            name: self.name.clone(),
            inputs: self.inputs.len(),
            outputs: self.outputs.len(),
            key_bits: self.key_inputs.len(),
            has_reset: self.reset.is_some(),
            cells: self.cells.len(),
            combinational: self
                .cells
                .iter()
                .filter(|c| c.kind.is_combinational())
                .count(),
            flip_flops: count(CellKind::Dff),
            klatches: count(CellKind::Klatch),
            fixed_latches: count(CellKind::LatchP) + count(CellKind::LatchN),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_round_trip() {
        for k in CellKind::ALL {
            assert_eq!(CellKind::from_name(k.name()), Some(k));
        }
        assert_eq!(CellKind::from_name("buff"), Some(CellKind::Buf));
        assert_eq!(CellKind::from_name("FOO"), None);
    }

    #[test]
    fn word_eval_matches_scalar() {
        for k in CellKind::ALL.iter().filter(|k| k.is_combinational()) {
            let (lo, _) = k.arity();
            let n = lo.max(if *k == CellKind::Mux { 3 } else { lo });
            for m in 0..(1u32 << n) {
                let ins: Vec<bool> = (0..n).map(|i| m >> i & 1 == 1).collect();
                let words: Vec<u64> = ins.iter().map(|&b| if b { !0 } else { 0 }).collect();
                assert_eq!(k.eval_word(&words) & 1 == 1, k.eval(&ins), "{k} {m}");
            }
        }
    }

    #[test]
    fn mux_selects_b_on_one() {
        assert!(!CellKind::Mux.eval(&[true, true, false]));
        assert!(CellKind::Mux.eval(&[false, true, false]));
    }
}
