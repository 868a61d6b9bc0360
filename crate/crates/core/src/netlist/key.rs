use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{CellId, CellKind, Netlist};

/// Behaviour selected by the two key bits of a keyed latch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LatchMode {
    /// `00`: held in reset, output constant 0.
    LogicDecoy,
    /// `01`: transparent while the clock is high.
    PosPhase,
    /// `10`: transparent while the clock is low.
    NegPhase,
    /// `11`: always transparent.
    Clear,
}

impl LatchMode {
    pub const ALL: [LatchMode; 4] = [
        LatchMode::LogicDecoy,
        LatchMode::PosPhase,
        LatchMode::NegPhase,
        LatchMode::Clear,
    ];

    pub fn from_bits(k0: bool, k1: bool) -> LatchMode {
        match (k0, k1) {
            (false, false) => LatchMode::LogicDecoy,
            (false, true) => LatchMode::PosPhase,
            (true, false) => LatchMode::NegPhase,
            (true, true) => LatchMode::Clear,
        }
    }

    pub fn bits(self) -> (bool, bool) {
        match self {
            LatchMode::LogicDecoy => (false, false),
            LatchMode::PosPhase => (false, true),
            LatchMode::NegPhase => (true, false),
            LatchMode::Clear => (true, true),
        }
    }

    pub fn transparent_high(self) -> bool {
        self.bits().1
    }

    pub fn transparent_low(self) -> bool {
        self.bits().0
    }

    pub fn code(self) -> &'static str {
        match self {
            LatchMode::LogicDecoy => "00",
            LatchMode::PosPhase => "01",
            LatchMode::NegPhase => "10",
            LatchMode::Clear => "11",
        }
    }
}

impl fmt::Display for LatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LatchMode::LogicDecoy => "logic-decoy",
            LatchMode::PosPhase => "positive",
            LatchMode::NegPhase => "negative",
            LatchMode::Clear => "clear",
        };
        f.write_str(s)
    }
}

/// Assignment to every KEYINPUT, in declaration order.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct KeyVector(pub Vec<bool>);

impl From<KeyVector> for String {
    fn from(k: KeyVector) -> String {
        k.to_string()
    }
}

impl TryFrom<String> for KeyVector {
    type Error = KeyParseError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Debug, thiserror::Error)]
#[error("key string may only contain 0 and 1, found `{0}`")]
pub struct KeyParseError(pub char);

impl KeyVector {
    pub fn zeros(len: usize) -> KeyVector {
        KeyVector(vec![false; len])
    }

    /// The `index`-th key in counting order; bit 0 of the vector is the most
    /// significant bit. `len` must be at most 64.
    pub fn from_index(index: u64, len: usize) -> KeyVector {
        assert!(len <= 64);
        KeyVector((0..len).map(|i| index >> (len - 1 - i) & 1 == 1).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bit(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn set(&mut self, i: usize, v: bool) {
        self.0[i] = v;
    }

    /// Mode of keyed latch `c` under this key; `None` for other cells.
    pub fn mode_of(&self, n: &Netlist, c: CellId) -> Option<LatchMode> {
        let cell = n.cell(c);
        if cell.kind != CellKind::Klatch {
            return None;
        }
        let [k0, k1] = cell.key?;
        Some(LatchMode::from_bits(self.0[k0], self.0[k1]))
    }
}

impl fmt::Display for KeyVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for KeyVector {
    type Err = KeyParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(KeyParseError(other)),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(KeyVector)
    }
}

/// On-disk key: the bit string plus the per-latch bit pairs for reading.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyFile {
    pub key: String,
    #[serde(default)]
    pub latches: BTreeMap<String, [u8; 2]>,
}

impl KeyFile {
    pub fn new(n: &Netlist, key: &KeyVector) -> KeyFile {
        let latches = n
            .klatches()
            .into_iter()
            .map(|c| {
                let [k0, k1] = n.cell(c).key.unwrap();
                (
                    n.cell(c).name.clone(),
                    [key.bit(k0) as u8, key.bit(k1) as u8],
                )
            })
            .collect();
        KeyFile {
            key: key.to_string(),
            latches,
        }
    }

    pub fn key_vector(&self) -> Result<KeyVector, KeyParseError> {
        self.key.parse()
    }
}
