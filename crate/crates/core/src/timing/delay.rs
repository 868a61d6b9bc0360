use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netlist::{CellId, CellKind, Netlist};

pub const DEFAULT_GATE_PS: u64 = 10;
pub const DEFAULT_LATCH_PS: u64 = 20;

/// Per-cell propagation delays in picoseconds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DelayModel {
    per_kind: HashMap<CellKind, u64>,
    /// Feed-through delay of any latch.
    pub d_latch: u64,
    overrides: HashMap<String, u64>,
    /// Clock period carried by an annotation file, if any.
    pub period: Option<u64>,
}

impl Default for DelayModel {
    fn default() -> Self {
        DelayModel {
            per_kind: HashMap::new(),
            d_latch: DEFAULT_LATCH_PS,
            overrides: HashMap::new(),
            period: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum DelayError {
    #[error("bad delay file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown cell kind `{0}` in delay file")]
    Kind(String),
    #[error("latch delay must be positive")]
    ZeroLatch,
    #[error("clock period must be positive")]
    ZeroPeriod,
}

#[derive(Serialize, Deserialize, Default)]
struct RawDelays {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    period_ps: Option<u64>,
    #[serde(default)]
    default: BTreeMap<String, u64>,
    #[serde(default)]
    cells: BTreeMap<String, u64>,
}

impl DelayModel {
    /// Parses `{"period_ps": N, "default": {"AND": d, "LATCH": d}, "cells": {"x": d}}`.
    /// `LATCH` (or any latch kind name) sets the latch feed-through delay.
    pub fn from_json(text: &str) -> Result<DelayModel, DelayError> {
        let raw: RawDelays = serde_json::from_str(text)?;
        let mut dm = DelayModel::default();
        for (k, d) in raw.default {
            let up = k.to_ascii_uppercase();
            if up == "LATCH" {
                dm.d_latch = d;
                continue;
            }
            let kind = CellKind::from_name(&up).ok_or(DelayError::Kind(k))?;
            if kind.is_latch() {
                dm.d_latch = d;
            } else {
                dm.per_kind.insert(kind, d);
            }
        }
        if dm.d_latch == 0 {
            return Err(DelayError::ZeroLatch);
        }
        if raw.period_ps == Some(0) {
            return Err(DelayError::ZeroPeriod);
        }
        dm.overrides = raw.cells.into_iter().collect();
        dm.period = raw.period_ps;
        Ok(dm)
    }

    pub fn to_json(&self) -> String {
        let mut default: BTreeMap<String, u64> = self
            .per_kind
            .iter()
            .map(|(k, &d)| (k.name().to_string(), d))
            .collect();
        default.insert("LATCH".into(), self.d_latch);
        let raw = RawDelays {
            period_ps: self.period,
            default,
            cells: self
                .overrides
                .iter()
                .map(|(k, &v)| (k.clone(), v))
                .collect(),
        };
        serde_json::to_string_pretty(&raw).unwrap()
    }

    /// Every gate and latch costs one unit.
    pub fn unit() -> DelayModel {
        let mut dm = DelayModel {
            d_latch: 1,
            ..DelayModel::default()
        };
        for k in [
            CellKind::And,
            CellKind::Nand,
            CellKind::Or,
            CellKind::Nor,
            CellKind::Xor,
            CellKind::Xnor,
            CellKind::Not,
            CellKind::Buf,
            CellKind::Mux,
        ] {
            dm.set_kind(k, 1);
        }
        dm
    }

    pub fn set_kind(&mut self, kind: CellKind, d: u64) {
        self.per_kind.insert(kind, d);
    }

    pub fn set_cell(&mut self, name: &str, d: u64) {
        self.overrides.insert(name.to_string(), d);
    }

    /// Delay from the data input to the output of `c`. Flip-flops launch at
    /// the clock edge and contribute nothing.
    pub fn cell_delay(&self, n: &Netlist, c: CellId) -> u64 {
        let cell = n.cell(c);
        if let Some(&d) = self.overrides.get(&cell.name) {
            return d;
        }
        match cell.kind {
            CellKind::Dff => 0,
            CellKind::Const0 | CellKind::Const1 => 0,
            k if k.is_latch() => self.d_latch,
            k => self.per_kind.get(&k).copied().unwrap_or(DEFAULT_GATE_PS),
        }
    }
}

/// The clock period bound used by timing checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClockSpec {
    pub period: u64,
}

impl ClockSpec {
    pub fn new(period: u64) -> ClockSpec {
        assert!(period > 0, "clock period must be positive");
        ClockSpec { period }
    }
}
