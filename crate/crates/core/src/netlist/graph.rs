use std::collections::VecDeque;
use std::fmt;

use super::validate::tarjan;
use super::{CellId, NetId, Netlist};

/// A loop of cells that cannot be ordered because every element in it is
/// transparent at the same time.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CycleReport {
    pub cells: Vec<String>,
}

impl fmt::Display for CycleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "transparent loop through {}", self.cells.join(" -> "))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConeDirection {
    Fanin,
    Fanout,
}

impl Netlist {
    /// Evaluation order for all cells given which sequential cells are
    /// currently transparent. Combinational cells always propagate; an opaque
    /// sequential cell only exposes its stored value and so breaks ordering.
    pub fn topo_order(
        &self,
        transparent: &dyn Fn(CellId) -> bool,
    ) -> Result<Vec<CellId>, CycleReport> {
        let num = self.cells.len();
        let passes = |c: usize| {
            let k = self.cells[c].kind;
            k.is_combinational() || transparent(CellId(c as u32))
        };
        let pass: Vec<bool> = (0..num).map(passes).collect();
        let mut indeg = vec![0usize; num];
        // an opaque cell only exposes stored state, so it has no ordering
        // dependency on its own inputs
        for c in (0..num).filter(|&c| pass[c]) {
            for &i in &self.cells[c].inputs {
                if let Some(d) = self.driver_cell(i) {
                    if pass[d.index()] {
                        indeg[c] += 1;
                    }
                }
            }
        }
        // stored values are visible before any logic is evaluated
        let mut queue: VecDeque<usize> = (0..num)
            .filter(|&c| !pass[c])
            .chain((0..num).filter(|&c| pass[c] && indeg[c] == 0))
            .collect();
        let mut order = Vec::with_capacity(num);
        while let Some(c) = queue.pop_front() {
            order.push(CellId(c as u32));
            if !pass[c] {
                continue;
            }
            for &r in self.readers(self.cells[c].output) {
                let r = r.index();
                if !pass[r] {
                    continue;
                }
                let mult = self.cells[r]
                    .inputs
                    .iter()
                    .filter(|&&i| i == self.cells[c].output)
                    .count();
                indeg[r] -= mult;
                if indeg[r] == 0 {
                    queue.push_back(r);
                }
            }
        }
        if order.len() == num {
            return Ok(order);
        }
        // report one cycle among the leftovers
        let left: Vec<bool> = (0..num).map(|c| indeg[c] > 0).collect();
        let succ = |c: usize| -> Vec<usize> {
            if !left[c] || !pass[c] {
                return Vec::new();
            }
            self.readers(self.cells[c].output)
                .iter()
                .map(|r| r.index())
                .filter(|&r| left[r])
                .collect()
        };
        let comp = tarjan(num, &succ)
            .into_iter()
            .find(|s| s.len() > 1 || succ(s[0]).contains(&s[0]))
            .expect("unordered cells imply a cycle");
        Err(CycleReport {
            cells: comp.iter().map(|&c| self.cells[c].name.clone()).collect(),
        })
    }

    /// Cells reachable from `start` through combinational logic. Sequential
    /// cells met on the way are included but not crossed.
    pub fn cone(&self, start: &[NetId], dir: ConeDirection) -> Vec<CellId> {
        let mut seen = vec![false; self.cells.len()];
        let mut stack: Vec<CellId> = Vec::new();
        let push_net = |n: NetId, stack: &mut Vec<CellId>| match dir {
            ConeDirection::Fanin => stack.extend(self.driver_cell(n)),
            ConeDirection::Fanout => stack.extend_from_slice(self.readers(n)),
        };
        for &n in start {
            push_net(n, &mut stack);
        }
        let mut out = Vec::new();
        while let Some(c) = stack.pop() {
            if std::mem::replace(&mut seen[c.index()], true) {
                continue;
            }
            out.push(c);
            let cell = self.cell(c);
            if cell.kind.is_sequential() {
                continue;
            }
            match dir {
                ConeDirection::Fanin => {
                    for &i in &cell.inputs {
                        push_net(i, &mut stack);
                    }
                }
                ConeDirection::Fanout => push_net(cell.output, &mut stack),
            }
        }
        out.sort();
        out
    }
}

#[cfg(test)]
mod tests {
    use crate::netlist::{parse_bench, CellKind};

    use super::*;

    #[test]
    fn order_respects_drivers() {
        let n =
            parse_bench("INPUT(a)\nOUTPUT(y)\ny = NOT(m)\nm = AND(a, q)\nq = DFF(y)\n").unwrap();
        let order = n.topo_order(&|_| false).unwrap();
        let pos = |s: &str| order.iter().position(|&c| n.cell(c).name == s).unwrap();
        assert!(pos("m") < pos("y"));
    }

    #[test]
    fn transparent_loop_is_reported() {
        let n = parse_bench(
            "INPUT(a)\nKEYINPUT(k0)\nKEYINPUT(k1)\nOUTPUT(q)\np = AND(a, q)\nq = KLATCH(p, k0, k1)\n",
        )
        .unwrap();
        assert!(n.topo_order(&|_| false).is_ok());
        let err = n.topo_order(&|_| true).unwrap_err();
        assert_eq!(err.cells, vec!["p".to_string(), "q".to_string()]);
    }

    #[test]
    fn cone_stops_at_state() {
        let n =
            parse_bench("INPUT(a)\nOUTPUT(y)\nx = NOT(a)\nq = DFF(x)\nz = BUF(q)\ny = AND(z, x)\n")
                .unwrap();
        let y = n.net_id("y").unwrap();
        let names: Vec<&str> = n
            .cone(&[y], ConeDirection::Fanin)
            .into_iter()
            .map(|c| n.cell(c).name.as_str())
            .collect();
        assert_eq!(names, vec!["x", "q", "z", "y"]);
        let a = n.net_id("a").unwrap();
        let fo = n.cone(&[a], ConeDirection::Fanout);
        assert!(fo.iter().any(|&c| n.cell(c).kind == CellKind::Dff));
        assert!(!fo.iter().any(|&c| n.cell(c).name == "z"));
    }
}
