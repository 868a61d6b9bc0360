use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    High,
    Low,
}

impl Phase {
    pub fn of_frame(f: usize) -> Phase {
        if f % 2 == 0 {
            Phase::High
        } else {
            Phase::Low
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::High => "high",
            Phase::Low => "low",
        })
    }
}

/// One half-cycle of stimulus and response.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Step {
    pub phase: Phase,
    pub reset: bool,
    pub inputs: Vec<bool>,
    pub outputs: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleInput {
    #[serde(with = "bit_string")]
    pub inputs: Vec<bool>,
    pub reset: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleOutput {
    #[serde(with = "bit_string")]
    pub high: Vec<bool>,
    #[serde(with = "bit_string")]
    pub low: Vec<bool>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("step {0}: expected phase {1}")]
    Phase(usize, Phase),
    #[error("step 0 must assert reset")]
    NoInitialReset,
    #[error("step {0}: inputs and reset may only change at the start of a clock cycle")]
    MidCycleChange(usize),
    #[error("step {step}: expected {want} input bits, got {got}")]
    Width {
        step: usize,
        want: usize,
        got: usize,
    },
    #[error("bad trace JSON: {0}")]
    Json(String),
}

/// A half-cycle stimulus/response sequence plus the power-up state source.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    pub steps: Vec<Step>,
    pub state_seed: u64,
    /// Elements pinned at power-up; the rest come from `state_seed`.
    pub initial_state: BTreeMap<String, bool>,
}

impl Trace {
    pub fn from_cycles(cycles: &[CycleInput], state_seed: u64) -> Trace {
        let steps = cycles
            .iter()
            .flat_map(|c| {
                [Phase::High, Phase::Low].map(|phase| Step {
                    phase,
                    reset: c.reset,
                    inputs: c.inputs.clone(),
                    outputs: Vec::new(),
                })
            })
            .collect();
        Trace {
            steps,
            state_seed,
            initial_state: BTreeMap::new(),
        }
    }

    pub fn check(&self, num_inputs: usize) -> Result<(), TraceError> {
        for (i, s) in self.steps.iter().enumerate() {
            let want = Phase::of_frame(i);
            if s.phase != want {
                return Err(TraceError::Phase(i, want));
            }
            if s.inputs.len() != num_inputs {
                return Err(TraceError::Width {
                    step: i,
                    want: num_inputs,
                    got: s.inputs.len(),
                });
            }
            if i % 2 == 1 {
                let prev = &self.steps[i - 1];
                if prev.inputs != s.inputs || prev.reset != s.reset {
                    return Err(TraceError::MidCycleChange(i));
                }
            }
        }
        if let Some(first) = self.steps.first() {
            if !first.reset {
                return Err(TraceError::NoInitialReset);
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let raw = RawTrace {
            steps: self
                .steps
                .iter()
                .map(|s| RawStep {
                    phase: match s.phase {
                        Phase::High => "H".into(),
                        Phase::Low => "L".into(),
                    },
                    reset: s.reset as u8,
                    inputs: bits_to_string(&s.inputs),
                    outputs: bits_to_string(&s.outputs),
                })
                .collect(),
            state_seed: self.state_seed,
            initial_state: self
                .initial_state
                .iter()
                .map(|(k, &v)| (k.clone(), v as u8))
                .collect(),
        };
        serde_json::to_string_pretty(&raw).expect("trace serializes")
    }

    pub fn from_json(text: &str) -> Result<Trace, TraceError> {
        let raw: RawTrace =
            serde_json::from_str(text).map_err(|e| TraceError::Json(e.to_string()))?;
        let bad = |m: String| TraceError::Json(m);
        let mut steps = Vec::with_capacity(raw.steps.len());
        for (i, s) in raw.steps.into_iter().enumerate() {
            let phase = match s.phase.as_str() {
                "H" | "h" => Phase::High,
                "L" | "l" => Phase::Low,
                other => return Err(bad(format!("step {i}: phase `{other}` is not H or L"))),
            };
            steps.push(Step {
                phase,
                reset: s.reset != 0,
                inputs: string_to_bits(&s.inputs)
                    .ok_or_else(|| bad(format!("step {i}: bad input bits")))?,
                outputs: string_to_bits(&s.outputs)
                    .ok_or_else(|| bad(format!("step {i}: bad output bits")))?,
            });
        }
        Ok(Trace {
            steps,
            state_seed: raw.state_seed,
            initial_state: raw
                .initial_state
                .into_iter()
                .map(|(k, v)| (k, v != 0))
                .collect(),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct RawStep {
    phase: String,
    reset: u8,
    #[serde(rename = "in")]
    inputs: String,
    #[serde(rename = "out", default)]
    outputs: String,
}

#[derive(Serialize, Deserialize)]
struct RawTrace {
    steps: Vec<RawStep>,
    #[serde(default)]
    state_seed: u64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    initial_state: BTreeMap<String, u8>,
}

pub fn bits_to_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

pub fn string_to_bits(s: &str) -> Option<Vec<bool>> {
    s.chars()
        .map(|c| match c {
            '0' => Some(false),
            '1' => Some(true),
            _ => None,
        })
        .collect()
}

/// Serde adapter writing bit vectors as `0`/`1` strings.
pub mod bit_string {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bits: &[bool], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::bits_to_string(bits))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<bool>, D::Error> {
        let s = String::deserialize(d)?;
        super::string_to_bits(&s)
            .ok_or_else(|| D::Error::custom(format!("not a bit string: `{s}`")))
    }
}
