//! Flip-flop group selection by label propagation on the flip-flop graph.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;

use super::{LockConfig, LockError};
use crate::netlist::{CellId, KeyVector, Netlist};
use crate::rng;
use crate::timing::{arrival_and_slack, default_period, ClockSpec, DelayModel};

const PATH_CAP: u32 = 16;

/// `w[i][j]`: distinct combinational paths from flip-flop `i`'s output to
/// flip-flop `j`'s data pin, capped at 16. Indices follow `flip_flops()`.
pub fn ff_weights(n: &Netlist) -> Vec<Vec<u32>> {
    let ffs = n.flip_flops();
    let order = n.topo_order(&|_| false).expect("valid netlist");
    let mut w = vec![vec![0u32; ffs.len()]; ffs.len()];
    for (i, &src) in ffs.iter().enumerate() {
        let mut cnt = vec![0u32; n.num_nets()];
        cnt[n.cell(src).output.index()] = 1;
        for &c in &order {
            let cell = n.cell(c);
            if !cell.kind.is_combinational() {
                continue;
            }
            let s: u32 = cell.inputs.iter().map(|x| cnt[x.index()]).sum();
            cnt[cell.output.index()] = s.min(PATH_CAP);
        }
        for (j, &dst) in ffs.iter().enumerate() {
            w[i][j] = cnt[n.cell(dst).inputs[0].index()];
        }
    }
    w
}

/// (internal weight, boundary weight) of a group of flip-flop indices.
pub fn group_score(w: &[Vec<u32>], group: &[usize]) -> (u64, u64) {
    let inside: BTreeSet<usize> = group.iter().copied().collect();
    let (mut internal, mut external) = (0u64, 0u64);
    for i in 0..w.len() {
        for j in 0..w.len() {
            if i == j {
                continue;
            }
            match (inside.contains(&i), inside.contains(&j)) {
                (true, true) => internal += w[i][j] as u64,
                (true, false) | (false, true) => external += w[i][j] as u64,
                _ => {}
            }
        }
    }
    (internal, external)
}

fn symmetric(w: &[Vec<u32>]) -> Vec<Vec<u64>> {
    let f = w.len();
    (0..f)
        .map(|i| {
            (0..f)
                .map(|j| {
                    if i == j {
                        0
                    } else {
                        (w[i][j] + w[j][i]) as u64
                    }
                })
                .collect()
        })
        .collect()
}

fn propagate_labels(u: &[Vec<u64>], rng: &mut impl Rng) -> Vec<usize> {
    let f = u.len();
    let mut labels: Vec<usize> = (0..f).collect();
    let mut order: Vec<usize> = (0..f).collect();
    for _ in 0..50 {
        order.shuffle(rng);
        let mut changed = false;
        for &i in &order {
            let mut tally: BTreeMap<usize, u64> = BTreeMap::new();
            for j in 0..f {
                if u[i][j] > 0 {
                    *tally.entry(labels[j]).or_default() += u[i][j];
                }
            }
            let Some(&best) = tally.values().max() else {
                continue;
            };
            let top: Vec<usize> = tally
                .iter()
                .filter(|(_, &v)| v == best)
                .map(|(&l, _)| l)
                .collect();
            if top.contains(&labels[i]) {
                continue;
            }
            labels[i] = *top.choose(rng).unwrap();
            changed = true;
        }
        if !changed {
            break;
        }
    }
    labels
}

/// Grows a group of `size` from a community, strongest member first,
/// preferring community members and then the tightest link to the group.
fn grow(u: &[Vec<u64>], community: &[usize], size: usize) -> Vec<usize> {
    let f = u.len();
    let inside: BTreeSet<usize> = community.iter().copied().collect();
    let degree_in = |i: usize| community.iter().map(|&j| u[i][j]).sum::<u64>();
    let start = *community
        .iter()
        .max_by_key(|&&i| (degree_in(i), std::cmp::Reverse(i)))
        .unwrap();
    let mut group = vec![start];
    while group.len() < size {
        let next = (0..f)
            .filter(|i| !group.contains(i))
            .max_by_key(|&i| {
                let link: u64 = group.iter().map(|&g| u[i][g]).sum();
                let total: u64 = u[i].iter().sum();
                (
                    inside.contains(&i),
                    link,
                    std::cmp::Reverse(total - link),
                    std::cmp::Reverse(i),
                )
            })
            .unwrap();
        group.push(next);
    }
    group.sort();
    group
}

/// An interconnected group of `size` flip-flops: candidates come from
/// `group_samples` label-propagation runs; the most internal path weight
/// wins, then the least boundary weight, then the lowest total fan-in
/// arrival.
pub fn select_ff_group(
    n: &Netlist,
    size: usize,
    cfg: &LockConfig,
    dm: &DelayModel,
) -> Result<Vec<CellId>, LockError> {
    let ffs = n.flip_flops();
    if size > ffs.len() || size == 0 {
        return Err(LockError::TooFewFlipFlops {
            need: size.max(1),
            have: ffs.len(),
        });
    }
    if size == ffs.len() {
        return Ok(ffs);
    }
    let w = ff_weights(n);
    let u = symmetric(&w);
    let mut candidates: BTreeSet<Vec<usize>> = BTreeSet::new();
    for s in 0..cfg.group_samples.max(1) {
        let mut r = rng::stream(cfg.seed, &format!("select/{s}"));
        let labels = propagate_labels(&u, &mut r);
        let mut comms: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &l) in labels.iter().enumerate() {
            comms.entry(l).or_default().push(i);
        }
        for c in comms.values() {
            candidates.insert(grow(&u, c, size));
        }
    }
    let clk = ClockSpec::new(default_period(n, dm));
    let arrival = arrival_and_slack(n, dm, clk, &KeyVector::zeros(n.num_key_bits()))
        .map(|r| r.arrival)
        .unwrap_or_default();
    let fanin_delay = |g: &Vec<usize>| -> u64 {
        g.iter()
            .map(|&i| {
                arrival
                    .get(n.cell(ffs[i]).inputs[0].index())
                    .copied()
                    .flatten()
                    .unwrap_or(0)
            })
            .sum()
    };
    let best = candidates
        .iter()
        .min_by_key(|g| {
            let (int, ext) = group_score(&w, g);
            (std::cmp::Reverse(int), ext, fanin_delay(g), (*g).clone())
        })
        .expect("at least one candidate");
    Ok(best.iter().map(|&i| ffs[i]).collect())
}
