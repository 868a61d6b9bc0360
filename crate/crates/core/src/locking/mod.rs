//! Lock insertion: pick a group of flip-flops, split each into a keyed
//! master/slave latch pair, add clear-mode delay decoys and logic decoys,
//! then number the key bits and emit the correct key.

mod check;
mod convert;
mod decoys;
mod select;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netlist::{CellKind, KeyVector, LatchMode, Netlist, NetlistBuilder, NetlistError};
use crate::timing::{arrival_and_slack, ClockSpec, DelayModel};

pub use check::{
    bmc_equivalent, check_correct_key, count_mismatches, init_source, legality, strip_decoys,
    transition_profile, Mismatches, TransitionProfile,
};
pub use convert::{convert_to_latches, Converted};
pub use decoys::{insert_delay_decoys, insert_logic_decoys};
pub use select::{ff_weights, group_score, select_ff_group};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LockConfig {
    pub key_bits: usize,
    /// Target decoy latches per converted latch.
    pub decoy_ratio: f64,
    pub seed: u64,
    /// Community-finding restarts whose groups are scored.
    pub group_samples: usize,
    /// Allow backward moves of master latches (needs a reset port).
    pub retime: bool,
    /// Clock cycles of the correct-key simulation check run by `lock`.
    pub check_cycles: usize,
}

impl Default for LockConfig {
    fn default() -> Self {
        LockConfig {
            key_bits: 8,
            decoy_ratio: 0.5,
            seed: 0,
            group_samples: 8,
            retime: true,
            check_cycles: 200,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatchOrigin {
    Converted,
    DelayDecoy,
    LogicDecoy,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatchRecord {
    pub name: String,
    pub mode: LatchMode,
    pub origin: LatchOrigin,
    /// Flip-flop a converted latch came from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_ff: Option<String>,
    /// Created by a retiming move rather than by the split itself.
    #[serde(default)]
    pub retimed: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProxyStats {
    pub gates_before: usize,
    pub gates_after: usize,
    pub gate_delta: i64,
    /// Longest correct-key arrival in unit delays.
    pub critical_before: u64,
    pub critical_after: u64,
    pub critical_delta: i64,
    pub converted_latches: usize,
    pub delay_decoys: usize,
    pub logic_decoys: usize,
    /// Achieved decoys per converted latch.
    pub decoy_ratio: f64,
    pub retime_moves: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatchManifest {
    pub group: Vec<String>,
    pub period: u64,
    pub latches: Vec<LatchRecord>,
}

impl LatchManifest {
    /// Key implied by the recorded modes, two bits per latch in order.
    pub fn key(&self) -> KeyVector {
        KeyVector(
            self.latches
                .iter()
                .flat_map(|r| {
                    let (a, b) = r.mode.bits();
                    [a, b]
                })
                .collect(),
        )
    }

    pub fn record(&self, name: &str) -> Option<&LatchRecord> {
        self.latches.iter().find(|r| r.name == name)
    }

    pub fn any_retimed(&self) -> bool {
        self.latches.iter().any(|r| r.retimed)
    }

    /// First clock cycle whose outputs must match the original: retimed
    /// latches have no power-up counterpart, so the reset cycle is skipped.
    pub fn compare_from_cycle(&self) -> usize {
        self.any_retimed() as usize
    }
}

#[derive(Clone, Debug)]
pub struct LockResult {
    pub locked: Netlist,
    pub correct_key: KeyVector,
    pub manifest: LatchManifest,
    pub stats: ProxyStats,
}

#[derive(Debug, Error)]
pub enum LockError {
    #[error("key length must be even, got {0}")]
    OddKeyBits(usize),
    #[error("{key_bits} key bits give {latches} latch(es); a converted flip-flop needs 2")]
    TooFewKeyBits { key_bits: usize, latches: usize },
    #[error("need {need} flip-flops, netlist has {have}")]
    TooFewFlipFlops { need: usize, have: usize },
    #[error("netlist already has {0} key inputs")]
    AlreadyLocked(usize),
    #[error("only {available} nets have slack above the latch delay, {requested} requested")]
    InsufficientSlack { requested: usize, available: usize },
    #[error("no latches to drive decoy cones")]
    NoDecoyDrivers,
    #[error("{stage}: {msg}")]
    Stage { stage: &'static str, msg: String },
    #[error(transparent)]
    Netlist(#[from] NetlistError),
}

impl LockError {
    fn stage(stage: &'static str, msg: impl ToString) -> LockError {
        LockError::Stage {
            stage,
            msg: msg.to_string(),
        }
    }
}

/// Netlist under construction plus the latches added so far. Every new
/// latch gets two private key inputs; they are renumbered at the end.
#[derive(Clone, Debug)]
pub struct Work {
    pub(crate) b: NetlistBuilder,
    pub(crate) latches: Vec<LatchRecord>,
}

impl Work {
    pub fn new(n: &Netlist) -> Work {
        Work {
            b: n.to_builder(),
            latches: Vec::new(),
        }
    }

    fn key_names(latch: &str) -> [String; 2] {
        [format!("__ll_k_{latch}_0"), format!("__ll_k_{latch}_1")]
    }

    pub(crate) fn add_latch(&mut self, data: &str, rec: LatchRecord) {
        let [k0, k1] = Work::key_names(&rec.name);
        self.b.add_key(&k0).add_key(&k1);
        self.b.add_cell(
            CellKind::Klatch,
            &rec.name,
            [data, k0.as_str(), k1.as_str()],
        );
        self.latches.push(rec);
    }

    pub(crate) fn remove_latch(&mut self, name: &str) {
        let [k0, k1] = Work::key_names(name);
        self.b.remove_cell(name).remove_key(&k0).remove_key(&k1);
        self.latches.retain(|r| r.name != name);
    }

    pub fn netlist(&self) -> Result<Netlist, NetlistError> {
        self.b.build()
    }

    /// Correct key for `n`, which must be built from this work.
    pub fn key_for(&self, n: &Netlist) -> KeyVector {
        let modes: HashMap<String, (bool, bool)> = self
            .latches
            .iter()
            .map(|r| (r.name.clone(), r.mode.bits()))
            .collect();
        KeyVector(
            n.key_inputs()
                .iter()
                .map(|&k| {
                    let name = n.net_name(k);
                    let rest = name.strip_prefix("__ll_k_").expect("private key name");
                    let (latch, bit) = rest.rsplit_once('_').expect("key suffix");
                    let (a, b) = modes[latch];
                    if bit == "0" {
                        a
                    } else {
                        b
                    }
                })
                .collect(),
        )
    }

    pub fn latches(&self) -> &[LatchRecord] {
        &self.latches
    }

    /// Renumbers keys in latch creation order and builds the final netlist.
    fn finish(mut self) -> Result<(Netlist, Vec<LatchRecord>), NetlistError> {
        let taken = self.b.build_unchecked()?;
        let mut prefix = String::from("keyinput");
        while (0..2 * self.latches.len()).any(|i| taken.net_id(&format!("{prefix}{i}")).is_some()) {
            prefix.insert(0, '_');
        }
        let order: Vec<(String, String)> = self
            .latches
            .iter()
            .flat_map(|r| Work::key_names(&r.name))
            .enumerate()
            .map(|(i, old)| (old, format!("{prefix}{i}")))
            .collect();
        self.b.reassign_keys(&order);
        Ok((self.b.build()?, self.latches))
    }
}

/// Latches, converted flip-flops and decoys implied by the config.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Budget {
    pub latches: usize,
    pub flip_flops: usize,
    pub decoys: usize,
}

impl Budget {
    pub fn new(cfg: &LockConfig) -> Result<Budget, LockError> {
        if cfg.key_bits % 2 == 1 {
            return Err(LockError::OddKeyBits(cfg.key_bits));
        }
        let latches = cfg.key_bits / 2;
        if latches < 2 {
            return Err(LockError::TooFewKeyBits {
                key_bits: cfg.key_bits,
                latches,
            });
        }
        let real = latches as f64 / (1.0 + cfg.decoy_ratio.max(0.0));
        let flip_flops = ((real / 2.0).round() as usize).clamp(1, latches / 2);
        Ok(Budget {
            latches,
            flip_flops,
            decoys: latches - 2 * flip_flops,
        })
    }

    /// Caps the converted flip-flops at what the netlist has; the rest of
    /// the latch budget goes to decoys.
    pub fn fit(self, available: usize) -> Result<Budget, LockError> {
        if available == 0 {
            return Err(LockError::TooFewFlipFlops { need: 1, have: 0 });
        }
        let flip_flops = self.flip_flops.min(available);
        Ok(Budget {
            flip_flops,
            decoys: self.latches - 2 * flip_flops,
            ..self
        })
    }
}

fn unit_critical(n: &Netlist, key: &KeyVector) -> u64 {
    let dm = DelayModel::unit();
    let clk = ClockSpec::new(crate::timing::default_period(n, &dm));
    arrival_and_slack(n, &dm, clk, key)
        .map(|r| r.arrival.iter().flatten().copied().max().unwrap_or(0))
        .unwrap_or(0)
}

/// The whole pipeline: select, convert (with retiming), decoys, key
/// numbering, then legality and a correct-key simulation check.
pub fn lock(
    n: &Netlist,
    cfg: &LockConfig,
    dm: &DelayModel,
    clk: ClockSpec,
) -> Result<LockResult, LockError> {
    if n.num_key_bits() > 0 {
        return Err(LockError::AlreadyLocked(n.num_key_bits()));
    }
    let budget = Budget::new(cfg)?.fit(n.flip_flops().len())?;
    let group = select_ff_group(n, budget.flip_flops, cfg, dm)?;
    let retime_allowance = if cfg.retime && n.reset().is_some() {
        budget.decoys / 2
    } else {
        0
    };
    let conv = convert_to_latches(n, &group, retime_allowance, dm, clk)?;
    let spare = budget.decoys - conv.extra_latches;
    let delay_want = spare / 2;
    let mut work = conv.work;
    let mut delay_done = delay_want;
    loop {
        match insert_delay_decoys(&mut work, delay_done, dm, clk, cfg.seed) {
            Ok(k) => {
                delay_done = k;
                break;
            }
            Err(LockError::InsufficientSlack { available, .. }) if available < delay_done => {
                delay_done = available
            }
            Err(e) => return Err(e),
        }
    }
    let logic_want = spare - delay_done;
    let logic_done = insert_logic_decoys(&mut work, logic_want, dm, clk, cfg.seed)?;
    if logic_done < logic_want {
        return Err(LockError::stage(
            "logic decoys",
            format!("placed {logic_done} of {logic_want} without breaking timing"),
        ));
    }
    let (locked, latches) = work.finish()?;
    let manifest = LatchManifest {
        group: group.iter().map(|&c| n.cell(c).name.clone()).collect(),
        period: clk.period,
        latches,
    };
    let correct_key = manifest.key();
    debug_assert_eq!(locked.num_key_bits(), cfg.key_bits);

    legality(&locked, &correct_key, dm, clk).map_err(|m| LockError::stage("timing", m))?;
    if cfg.check_cycles > 0 {
        check_correct_key(
            n,
            &locked,
            &correct_key,
            &manifest,
            cfg.check_cycles,
            cfg.seed,
        )
        .map_err(|m| LockError::stage("simulation check", m))?;
    }

    let count = |o: LatchOrigin| manifest.latches.iter().filter(|r| r.origin == o).count();
    let (conv_n, dd, ld) = (
        count(LatchOrigin::Converted),
        count(LatchOrigin::DelayDecoy),
        count(LatchOrigin::LogicDecoy),
    );
    let gates = |x: &Netlist| {
        x.cells()
            .iter()
            .filter(|c| c.kind.is_combinational())
            .count()
    };
    let (gb, ga) = (gates(n), gates(&locked));
    let (cb, ca) = (
        unit_critical(n, &KeyVector::zeros(0)),
        unit_critical(&locked, &correct_key),
    );
    let stats = ProxyStats {
        gates_before: gb,
        gates_after: ga,
        gate_delta: ga as i64 - gb as i64,
        critical_before: cb,
        critical_after: ca,
        critical_delta: ca as i64 - cb as i64,
        converted_latches: conv_n,
        delay_decoys: dd,
        logic_decoys: ld,
        decoy_ratio: (dd + ld) as f64 / conv_n.max(1) as f64,
        retime_moves: conv.moves,
    };
    Ok(LockResult {
        locked,
        correct_key,
        manifest,
        stats,
    })
}

/// Modes by latch name, for reports.
pub fn modes_by_name(m: &LatchManifest) -> BTreeMap<String, LatchMode> {
    m.latches.iter().map(|r| (r.name.clone(), r.mode)).collect()
}

#[cfg(test)]
mod tests;
