use std::collections::HashMap;
use std::fmt;

use super::{CellId, CellKind, Netlist};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Diagnostic {
    MultipleDrivers {
        net: String,
        drivers: Vec<String>,
    },
    Undriven {
        net: String,
    },
    Arity {
        cell: String,
        kind: CellKind,
        got: usize,
    },
    BadKeyReference {
        cell: String,
        detail: String,
    },
    BadIdentifier {
        name: String,
    },
    DuplicateDeclaration {
        name: String,
    },
    CombinationalCycle {
        nets: Vec<String>,
    },
}

impl Diagnostic {
    /// Name of the offending cell, when the diagnostic is about one cell.
    pub fn cell_name(&self) -> Option<&str> {
        match self {
            Diagnostic::Arity { cell, .. } | Diagnostic::BadKeyReference { cell, .. } => Some(cell),
            Diagnostic::MultipleDrivers { net, .. } => Some(net),
            Diagnostic::CombinationalCycle { nets } => nets.first().map(|s| s.as_str()),
            _ => None,
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::MultipleDrivers { net, drivers } => {
                write!(
                    f,
                    "net `{net}` has {} drivers: {}",
                    drivers.len(),
                    drivers.join(", ")
                )
            }
            Diagnostic::Undriven { net } => write!(f, "net `{net}` is used but never driven"),
            Diagnostic::Arity { cell, kind, got } => {
                let (lo, hi) = kind.arity();
                let want = if lo == hi {
                    format!("{lo}")
                } else {
                    format!("at least {lo}")
                };
                write!(f, "cell `{cell}`: {kind} takes {want} inputs, got {got}")
            }
            Diagnostic::BadKeyReference { cell, detail } => {
                write!(f, "cell `{cell}`: bad key reference: {detail}")
            }
            Diagnostic::BadIdentifier { name } => write!(f, "`{name}` is not a valid identifier"),
            Diagnostic::DuplicateDeclaration { name } => {
                write!(f, "`{name}` declared more than once")
            }
            Diagnostic::CombinationalCycle { nets } => {
                write!(f, "combinational cycle through nets: {}", nets.join(" -> "))
            }
        }
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    // leading digits are tolerated so public ISCAS files with numeric net names load
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

pub(super) fn validate(n: &Netlist) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    for name in &n.nets {
        if !is_identifier(name) {
            out.push(Diagnostic::BadIdentifier { name: name.clone() });
        }
    }

    let mut seen_out: HashMap<&str, usize> = HashMap::new();
    for &p in &n.outputs {
        *seen_out.entry(n.net_name(p)).or_default() += 1;
    }
    let mut dup: Vec<&str> = seen_out
        .iter()
        .filter(|(_, &c)| c > 1)
        .map(|(&k, _)| k)
        .collect();
    dup.sort();
    for d in dup {
        out.push(Diagnostic::DuplicateDeclaration {
            name: d.to_string(),
        });
    }

    // drivers recomputed from scratch
    let mut drivers: Vec<Vec<String>> = vec![Vec::new(); n.nets.len()];
    for &i in &n.inputs {
        drivers[i.index()].push("INPUT".into());
    }
    if let Some(r) = n.reset {
        drivers[r.index()].push("RESET".into());
    }
    for &k in &n.key_inputs {
        drivers[k.index()].push("KEYINPUT".into());
    }
    for c in &n.cells {
        drivers[c.output.index()].push(format!("{}({})", c.kind, c.name));
    }
    for (i, d) in drivers.iter().enumerate() {
        if d.len() > 1 {
            out.push(Diagnostic::MultipleDrivers {
                net: n.nets[i].clone(),
                drivers: d.clone(),
            });
        }
    }
    for (i, d) in drivers.iter().enumerate() {
        if d.is_empty() {
            out.push(Diagnostic::Undriven {
                net: n.nets[i].clone(),
            });
        }
    }

    for c in &n.cells {
        let got = c.inputs.len() + if c.key.is_some() { 2 } else { 0 };
        let (lo, hi) = c.kind.arity();
        let arity_ok = if c.kind == CellKind::Klatch {
            c.key.is_some() && c.inputs.len() == 1
        } else {
            got >= lo && got <= hi
        };
        if !arity_ok {
            out.push(Diagnostic::Arity {
                cell: c.name.clone(),
                kind: c.kind,
                got,
            });
        }
        if let Some([k0, k1]) = c.key {
            if k0 >= n.key_inputs.len() || k1 >= n.key_inputs.len() {
                out.push(Diagnostic::BadKeyReference {
                    cell: c.name.clone(),
                    detail: "key pin does not name a KEYINPUT".into(),
                });
            } else if k0 == k1 {
                out.push(Diagnostic::BadKeyReference {
                    cell: c.name.clone(),
                    detail: "both key pins use the same key bit".into(),
                });
            }
        }
    }

    for cyc in combinational_cycles(n) {
        out.push(Diagnostic::CombinationalCycle {
            nets: cyc.iter().map(|&c| n.cell(c).name.clone()).collect(),
        });
    }
    out
}

/// One concrete cycle per strongly connected component of the graph made of
/// combinational cells only.
fn combinational_cycles(n: &Netlist) -> Vec<Vec<CellId>> {
    let num = n.cells.len();
    let succ = |c: usize| -> Vec<usize> {
        let cell = &n.cells[c];
        if !cell.kind.is_combinational() {
            return Vec::new();
        }
        let mut v: Vec<usize> = n.readers[cell.output.index()]
            .iter()
            .map(|r| r.index())
            .filter(|&r| n.cells[r].kind.is_combinational())
            .collect();
        v.sort_unstable();
        v
    };
    let sccs = tarjan(num, &succ);
    let mut cycles = Vec::new();
    for comp in sccs {
        let is_cycle = comp.len() > 1 || succ(comp[0]).contains(&comp[0]);
        if !is_cycle {
            continue;
        }
        // walk inside the component until a node repeats
        let in_comp: std::collections::HashSet<usize> = comp.iter().copied().collect();
        let start = *comp.iter().min().unwrap();
        let mut path = vec![start];
        let mut pos: HashMap<usize, usize> = HashMap::from([(start, 0)]);
        let mut cur = start;
        loop {
            let next = succ(cur).into_iter().find(|s| in_comp.contains(s)).unwrap();
            if let Some(&p) = pos.get(&next) {
                cycles.push(path[p..].iter().map(|&c| CellId(c as u32)).collect());
                break;
            }
            pos.insert(next, path.len());
            path.push(next);
            cur = next;
        }
    }
    cycles
}

pub(crate) fn tarjan(num: usize, succ: &dyn Fn(usize) -> Vec<usize>) -> Vec<Vec<usize>> {
    // iterative Tarjan
    let mut index = vec![usize::MAX; num];
    let mut low = vec![0; num];
    let mut on_stack = vec![false; num];
    let mut stack = Vec::new();
    let mut out = Vec::new();
    let mut counter = 0;
    for root in 0..num {
        if index[root] != usize::MAX {
            continue;
        }
        let mut call: Vec<(usize, Vec<usize>, usize)> = vec![(root, succ(root), 0)];
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some((v, succs, i)) = call.last_mut() {
            let v = *v;
            if *i < succs.len() {
                let w = succs[*i];
                *i += 1;
                if index[w] == usize::MAX {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, succ(w), 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some((p, _, _)) = call.last() {
                    low[*p] = low[*p].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    out.push(comp);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use crate::netlist::{CellKind, NetlistBuilder};

    use super::*;

    fn base() -> NetlistBuilder {
        let mut b = NetlistBuilder::new("t");
        b.add_input("a").add_output("y");
        b
    }

    #[test]
    fn two_drivers_reported_once() {
        let mut b = base();
        b.add_cell(CellKind::Not, "x", ["a"]);
        b.add_cell(CellKind::Buf, "x", ["a"]);
        b.add_cell(CellKind::Buf, "y", ["x"]);
        let d = b.build_unchecked().unwrap().validate();
        assert_eq!(d.len(), 1);
        assert!(matches!(&d[0], Diagnostic::MultipleDrivers { net, .. } if net == "x"));
    }

    #[test]
    fn two_gate_loop_is_reported_with_its_nets() {
        let mut b = base();
        b.add_cell(CellKind::And, "p", ["a", "q"]);
        b.add_cell(CellKind::Not, "q", ["p"]);
        b.add_cell(CellKind::Buf, "y", ["q"]);
        let d = b.build_unchecked().unwrap().validate();
        assert_eq!(
            d,
            vec![Diagnostic::CombinationalCycle {
                nets: vec!["p".into(), "q".into()]
            }]
        );
    }

    #[test]
    fn latch_broken_loop_is_fine() {
        let mut b = base();
        b.add_key("k0").add_key("k1");
        b.add_cell(CellKind::And, "p", ["a", "q"]);
        b.add_cell(CellKind::Klatch, "q", ["p", "k0", "k1"]);
        b.add_cell(CellKind::Buf, "y", ["q"]);
        assert!(b.build_unchecked().unwrap().validate().is_empty());
    }

    #[test]
    fn undriven_and_bad_key() {
        let mut b = base();
        b.add_key("k0");
        b.add_cell(CellKind::Klatch, "y", ["zz", "k0", "nokey"]);
        let d = b.build_unchecked().unwrap().validate();
        assert!(d
            .iter()
            .any(|x| matches!(x, Diagnostic::Undriven { net } if net == "zz")));
        assert!(d
            .iter()
            .any(|x| matches!(x, Diagnostic::BadKeyReference { .. })));
    }

    #[test]
    fn bad_arity() {
        let mut b = base();
        b.add_cell(CellKind::Not, "y", ["a", "a"]);
        let d = b.build_unchecked().unwrap().validate();
        assert!(matches!(&d[0], Diagnostic::Arity { got: 2, .. }));
    }
}
