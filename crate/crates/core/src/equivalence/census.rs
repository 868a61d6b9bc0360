//! Behavioural ground truth at toy scale: two keys behave alike when every
//! shared initial state and every input sequence up to a depth gives the
//! same outputs in every half-cycle.

use std::collections::HashMap;
use std::hash::{DefaultHasher, Hash, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::netlist::{KeyVector, Netlist};
use crate::sim::{CycleInput, Simulator};

#[derive(Clone, Copy, Debug)]
pub struct CensusSpec {
    /// Clock cycles per sequence (two half-cycles each).
    pub cycles: usize,
    /// All initial states are tried when there are at most this many state
    /// elements; otherwise `2^max_state_bits` random ones.
    pub max_state_bits: usize,
    /// Sequences are exhaustive up to this many stimulus bits, sampled above.
    pub max_sequence_bits: usize,
    pub seed: u64,
}

impl Default for CensusSpec {
    fn default() -> Self {
        CensusSpec {
            cycles: 4,
            max_state_bits: 6,
            max_sequence_bits: 16,
            seed: 0,
        }
    }
}

/// One initial state plus one input sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stimulus {
    /// Stored value per state element, in simulator order.
    pub state: Vec<bool>,
    pub cycles: Vec<CycleInput>,
}

struct Plan {
    states: Vec<Vec<bool>>,
    sequences: Vec<Vec<CycleInput>>,
}

fn plan(n: &Netlist, spec: &CensusSpec) -> Plan {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let s = n.sequential_cells().len();
    let states: Vec<Vec<bool>> = if s <= spec.max_state_bits {
        (0..1u64 << s)
            .map(|m| (0..s).map(|i| m >> i & 1 == 1).collect())
            .collect()
    } else {
        (0..1u64 << spec.max_state_bits)
            .map(|_| (0..s).map(|_| rng.gen()).collect())
            .collect()
    };
    let ni = n.inputs().len();
    let w = ni + n.reset().is_some() as usize;
    let bits = w * spec.cycles;
    let decode = |m: u64| -> Vec<CycleInput> {
        (0..spec.cycles)
            .map(|c| {
                let base = c * w;
                CycleInput {
                    inputs: (0..ni).map(|i| m >> (base + i) & 1 == 1).collect(),
                    reset: w > ni && m >> (base + ni) & 1 == 1,
                }
            })
            .collect()
    };
    let sequences = if bits <= spec.max_sequence_bits {
        (0..1u64 << bits).map(decode).collect()
    } else {
        (0..1u64 << spec.max_sequence_bits)
            .map(|_| decode(rng.gen::<u64>() & ((1u64 << bits.min(63)) - 1)))
            .collect()
    };
    Plan { states, sequences }
}

/// Runs every (state, sequence) pair 64 at a time and feeds each output
/// word to `sink`. `None` if the key makes the circuit oscillate.
fn run(
    n: &Netlist,
    key: &KeyVector,
    plan: &Plan,
    mut sink: impl FnMut(usize, &[u64]) -> bool,
) -> Option<()> {
    let mut sim = Simulator::new(n, key).ok()?;
    let total = plan.states.len() * plan.sequences.len();
    let ns = plan.states.first().map_or(0, |s| s.len());
    let cycles = plan.sequences.first().map_or(0, |s| s.len());
    let ni = n.inputs().len();
    let mut base = 0;
    while base < total {
        let lanes = (total - base).min(64);
        let combo = |l: usize| {
            (
                (base + l) / plan.sequences.len(),
                (base + l) % plan.sequences.len(),
            )
        };
        let mut words = vec![0u64; ns];
        for l in 0..lanes {
            let (si, _) = combo(l);
            for (e, &b) in plan.states[si].iter().enumerate() {
                words[e] |= (b as u64) << l;
            }
        }
        sim.set_state_words(&words);
        for c in 0..cycles {
            let mut ins = vec![0u64; ni];
            let mut rst = 0u64;
            for l in 0..lanes {
                let (_, qi) = combo(l);
                let cy = &plan.sequences[qi][c];
                for (i, &b) in cy.inputs.iter().enumerate() {
                    ins[i] |= (b as u64) << l;
                }
                rst |= (cy.reset as u64) << l;
            }
            for _ in 0..2 {
                let out = sim.step_words(&ins, rst).ok()?;
                let mask = if lanes == 64 { !0 } else { (1u64 << lanes) - 1 };
                let masked: Vec<u64> = out.iter().map(|w| w & mask).collect();
                if !sink(base, &masked) {
                    return Some(());
                }
            }
        }
        base += 64;
    }
    Some(())
}

/// A 128-bit digest of the key's complete behaviour, or `None` when it
/// oscillates.
pub fn behavior_digest(n: &Netlist, key: &KeyVector, spec: &CensusSpec) -> Option<u128> {
    let plan = plan(n, spec);
    let mut h0 = DefaultHasher::new();
    let mut h1 = DefaultHasher::new();
    1u8.hash(&mut h1);
    run(n, key, &plan, |_, w| {
        w.hash(&mut h0);
        w.hash(&mut h1);
        true
    })?;
    Some((h0.finish() as u128) << 64 | h1.finish() as u128)
}

/// Behaviour class per key; oscillating keys get `None`.
pub fn behavior_classes(n: &Netlist, keys: &[KeyVector], spec: &CensusSpec) -> Vec<Option<usize>> {
    let mut ids: HashMap<u128, usize> = HashMap::new();
    keys.iter()
        .map(|k| {
            let d = behavior_digest(n, k, spec)?;
            let next = ids.len();
            Some(*ids.entry(d).or_insert(next))
        })
        .collect()
}

/// A stimulus on which the two keys produce different outputs.
pub fn distinguishing_stimulus(
    n: &Netlist,
    ka: &KeyVector,
    kb: &KeyVector,
    spec: &CensusSpec,
) -> Option<Stimulus> {
    let plan = plan(n, spec);
    let mut trace_a: Vec<(usize, Vec<u64>)> = Vec::new();
    run(n, ka, &plan, |b, w| {
        trace_a.push((b, w.to_vec()));
        true
    })?;
    let mut at = 0;
    let mut found: Option<(usize, usize)> = None;
    run(n, kb, &plan, |b, w| {
        let (_, wa) = &trace_a[at];
        at += 1;
        let diff = wa.iter().zip(w).fold(0u64, |acc, (x, y)| acc | (x ^ y));
        if diff != 0 {
            found = Some((b, diff.trailing_zeros() as usize));
            return false;
        }
        true
    })?;
    let (b, lane) = found?;
    let idx = b + lane;
    let (si, qi) = (idx / plan.sequences.len(), idx % plan.sequences.len());
    Some(Stimulus {
        state: plan.states[si].clone(),
        cycles: plan.sequences[qi].clone(),
    })
}

/// Outputs per half-cycle of one stimulus under `key`, single lane.
pub fn replay(n: &Netlist, key: &KeyVector, stim: &Stimulus) -> Option<Vec<Vec<bool>>> {
    let mut sim = Simulator::new(n, key).ok()?;
    let words: Vec<u64> = stim.state.iter().map(|&b| if b { !0 } else { 0 }).collect();
    sim.set_state_words(&words);
    let mut out = Vec::new();
    for c in &stim.cycles {
        let o = sim.cycle(c).ok()?;
        out.push(o.high);
        out.push(o.low);
    }
    Some(out)
}
