//! Two-phase functional simulation.
//!
//! Time advances in half-cycle frames. Frame `f` is the clock-high phase when
//! `f` is even, so clock cycle `c` covers frames `2c` and `2c + 1`. Inputs and
//! reset are held for a whole cycle. Flip-flops capture at the low-to-high
//! boundary (reset is synchronous); latches follow their mode.
//!
//! The engine is bit-parallel: each net carries a `u64` whose bits are 64
//! independent simulation lanes sharing the key.

mod trace;

use std::collections::BTreeMap;

use rand::Rng;
use thiserror::Error;

pub use trace::{
    bit_string, bits_to_string, string_to_bits, CycleInput, CycleOutput, Phase, Step, Trace,
    TraceError,
};

use crate::netlist::{CellKind, CycleReport, KeyVector, LatchMode, Netlist};
use crate::rng;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("key has {got} bits but the netlist has {want} key inputs")]
    KeyLength { want: usize, got: usize },
    #[error("expected {want} input bits, got {got}")]
    InputWidth { want: usize, got: usize },
    #[error("oscillation in {phase} phase: {report}")]
    Oscillation { phase: Phase, report: CycleReport },
    #[error("oracle session not initialized: the first queried cycle must assert reset")]
    NotInitialized,
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Clone, Debug)]
struct Op {
    kind: CellKind,
    ins: Vec<u32>,
    out: u32,
    /// Effective mode for latches (fixed-phase latches included).
    mode: Option<LatchMode>,
}

/// A netlist compiled for one key.
#[derive(Clone, Debug)]
pub struct Simulator {
    ops: Vec<Op>,
    names: Vec<String>,
    order: [Result<Vec<u32>, CycleReport>; 2],
    inputs: Vec<u32>,
    outputs: Vec<u32>,
    keys: Vec<(u32, bool)>,
    reset: Option<u32>,
    values: Vec<u64>,
    held: Vec<u64>,
    dff_next: Vec<u64>,
    frame: usize,
}

/// Mode a latch cell behaves in under `key`; `None` for non-latches.
pub fn latch_mode(n: &Netlist, key: &KeyVector, c: crate::netlist::CellId) -> Option<LatchMode> {
    match n.cell(c).kind {
        CellKind::Klatch => key.mode_of(n, c),
        CellKind::LatchP => Some(LatchMode::PosPhase),
        CellKind::LatchN => Some(LatchMode::NegPhase),
        _ => None,
    }
}

impl Simulator {
    pub fn new(n: &Netlist, key: &KeyVector) -> Result<Simulator, SimError> {
        if key.len() != n.num_key_bits() {
            return Err(SimError::KeyLength {
                want: n.num_key_bits(),
                got: key.len(),
            });
        }
        let ops: Vec<Op> = n
            .cell_ids()
            .map(|c| {
                let cell = n.cell(c);
                Op {
                    kind: cell.kind,
                    ins: cell.inputs.iter().map(|i| i.0).collect(),
                    out: cell.output.0,
                    mode: latch_mode(n, key, c),
                }
            })
            .collect();
        let order_for = |high: bool| {
            n.topo_order(&|c| match ops[c.index()].mode {
                Some(m) => {
                    if high {
                        m.transparent_high()
                    } else {
                        m.transparent_low()
                    }
                }
                None => false,
            })
            .map(|o| o.into_iter().map(|c| c.0).collect())
        };
        let order = [order_for(true), order_for(false)];
        let keys = n
            .key_inputs()
            .iter()
            .enumerate()
            .map(|(i, k)| (k.0, key.bit(i)))
            .collect();
        Ok(Simulator {
            names: n.cells().iter().map(|c| c.name.clone()).collect(),
            order,
            inputs: n.inputs().iter().map(|i| i.0).collect(),
            outputs: n.outputs().iter().map(|i| i.0).collect(),
            keys,
            reset: n.reset().map(|r| r.0),
            values: vec![0; n.num_nets()],
            held: vec![0; ops.len()],
            dff_next: vec![0; ops.len()],
            ops,
            frame: 0,
        })
    }

    pub fn num_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn num_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn frame(&self) -> usize {
        self.frame
    }

    /// Sets the power-up state: lane `l` draws every element from
    /// `seeds[l]` (lanes past the end reuse the last seed), then `overrides`
    /// pins named elements in all lanes.
    pub fn set_initial_lanes(&mut self, seeds: &[u64], overrides: &BTreeMap<String, bool>) {
        for (i, op) in self.ops.iter().enumerate() {
            if op.kind.is_combinational() {
                continue;
            }
            let name = &self.names[i];
            let word = match overrides.get(name) {
                Some(&b) => splat(b),
                None => {
                    let mut w = 0u64;
                    for lane in 0..64 {
                        let s = seeds[lane.min(seeds.len() - 1)];
                        w |= (rng::init_bit(s, name) as u64) << lane;
                    }
                    w
                }
            };
            self.held[i] = word;
        }
        self.frame = 0;
    }

    pub fn set_initial(&mut self, seed: u64, overrides: &BTreeMap<String, bool>) {
        self.set_initial_lanes(&[seed], overrides);
    }

    /// Names of the state elements, in the order `set_state_words` expects.
    pub fn state_names(&self) -> Vec<&str> {
        self.ops
            .iter()
            .enumerate()
            .filter(|(_, op)| op.kind.is_sequential())
            .map(|(i, _)| self.names[i].as_str())
            .collect()
    }

    /// Sets the stored value of every state element lane by lane and
    /// rewinds to frame 0.
    pub fn set_state_words(&mut self, words: &[u64]) {
        let idx: Vec<usize> = (0..self.ops.len())
            .filter(|&i| self.ops[i].kind.is_sequential())
            .collect();
        assert_eq!(idx.len(), words.len(), "one word per state element");
        for (&i, &w) in idx.iter().zip(words) {
            self.held[i] = w;
        }
        self.frame = 0;
    }

    /// Lane-0 value of `net` after the last step.
    pub fn value(&self, net: crate::netlist::NetId) -> bool {
        self.values[net.index()] & 1 == 1
    }

    /// Stored value of every state element in lane 0.
    pub fn state(&self) -> BTreeMap<String, bool> {
        self.ops
            .iter()
            .enumerate()
            .filter(|(_, op)| op.kind.is_sequential())
            .map(|(i, _)| (self.names[i].clone(), self.held[i] & 1 == 1))
            .collect()
    }

    /// Advances one half-cycle frame on all lanes and returns the output words.
    pub fn step_words(&mut self, inputs: &[u64], reset: u64) -> Result<Vec<u64>, SimError> {
        if inputs.len() != self.inputs.len() {
            return Err(SimError::InputWidth {
                want: self.inputs.len(),
                got: inputs.len(),
            });
        }
        let high = self.frame % 2 == 0;
        let order = match &self.order[if high { 0 } else { 1 }] {
            Ok(o) => o,
            Err(report) => {
                return Err(SimError::Oscillation {
                    phase: if high { Phase::High } else { Phase::Low },
                    report: report.clone(),
                })
            }
        };
        if high && self.frame > 0 {
            for (i, op) in self.ops.iter().enumerate() {
                if op.kind == CellKind::Dff {
                    self.held[i] = self.dff_next[i];
                }
            }
        }
        for (&net, &w) in self.inputs.iter().zip(inputs) {
            self.values[net as usize] = w;
        }
        // without a reset port the reset bit of the stimulus is ignored
        let reset = if let Some(r) = self.reset {
            self.values[r as usize] = reset;
            reset
        } else {
            0
        };
        for &(net, b) in &self.keys {
            self.values[net as usize] = splat(b);
        }
        let mut buf: Vec<u64> = Vec::with_capacity(4);
        for &c in order {
            let c = c as usize;
            let op = &self.ops[c];
            let v = match op.kind {
                CellKind::Dff => self.held[c],
                k if k.is_latch() => {
                    let m = op.mode.expect("latch mode");
                    let transparent = if high {
                        m.transparent_high()
                    } else {
                        m.transparent_low()
                    };
                    if m == LatchMode::LogicDecoy {
                        0
                    } else if transparent {
                        let d = self.values[op.ins[0] as usize];
                        self.held[c] = d;
                        d
                    } else {
                        self.held[c]
                    }
                }
                k => {
                    buf.clear();
                    buf.extend(op.ins.iter().map(|&i| self.values[i as usize]));
                    k.eval_word(&buf)
                }
            };
            self.values[op.out as usize] = v;
        }
        if !high {
            for (i, op) in self.ops.iter().enumerate() {
                if op.kind == CellKind::Dff {
                    self.dff_next[i] = !reset & self.values[op.ins[0] as usize];
                }
            }
        }
        self.frame += 1;
        Ok(self
            .outputs
            .iter()
            .map(|&o| self.values[o as usize])
            .collect())
    }

    /// Single-lane convenience wrapper around [`Simulator::step_words`].
    pub fn step(&mut self, inputs: &[bool], reset: bool) -> Result<Vec<bool>, SimError> {
        let words: Vec<u64> = inputs.iter().map(|&b| splat(b)).collect();
        Ok(self
            .step_words(&words, splat(reset))?
            .into_iter()
            .map(|w| w & 1 == 1)
            .collect())
    }

    /// Runs one full clock cycle and returns (high, low) outputs.
    pub fn cycle(&mut self, c: &CycleInput) -> Result<CycleOutput, SimError> {
        debug_assert_eq!(self.frame % 2, 0);
        let high = self.step(&c.inputs, c.reset)?;
        let low = self.step(&c.inputs, c.reset)?;
        Ok(CycleOutput { high, low })
    }
}

fn splat(b: bool) -> u64 {
    if b {
        !0
    } else {
        0
    }
}

/// Fills in the outputs of `trace`.
pub fn simulate(n: &Netlist, key: &KeyVector, trace: &Trace) -> Result<Trace, SimError> {
    trace.check(n.inputs().len())?;
    let mut sim = Simulator::new(n, key)?;
    sim.set_initial(trace.state_seed, &trace.initial_state);
    let mut out = trace.clone();
    for step in out.steps.iter_mut() {
        step.outputs = sim.step(&step.inputs, step.reset)?;
    }
    Ok(out)
}

/// Random stimulus: reset asserted in the first cycle only.
pub fn random_cycles(rng: &mut impl Rng, num_inputs: usize, cycles: usize) -> Vec<CycleInput> {
    (0..cycles)
        .map(|c| CycleInput {
            inputs: (0..num_inputs).map(|_| rng.gen()).collect(),
            reset: c == 0,
        })
        .collect()
}

/// A stateful oracle: the correctly keyed circuit, queried one contiguous
/// sequence at a time. The clock is paused after the low phase of the last
/// cycle of each query.
#[derive(Clone, Debug)]
pub struct OracleSession {
    sim: Simulator,
    started: bool,
    queries: usize,
}

impl OracleSession {
    pub fn new(n: &Netlist, key: &KeyVector, state_seed: u64) -> Result<OracleSession, SimError> {
        let mut sim = Simulator::new(n, key)?;
        sim.set_initial(state_seed, &BTreeMap::new());
        Ok(OracleSession {
            sim,
            started: false,
            queries: 0,
        })
    }

    pub fn cycles(&self) -> usize {
        self.sim.frame() / 2
    }

    pub fn queries(&self) -> usize {
        self.queries
    }

    pub fn query(&mut self, ext: &[CycleInput]) -> Result<Vec<CycleOutput>, SimError> {
        if ext.is_empty() {
            return Ok(Vec::new());
        }
        if !self.started && !ext[0].reset {
            return Err(SimError::NotInitialized);
        }
        self.started = true;
        self.queries += 1;
        ext.iter().map(|c| self.sim.cycle(c)).collect()
    }
}

#[cfg(test)]
mod tests;
