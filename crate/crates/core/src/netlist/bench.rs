//! Extended ISCAS BENCH reader and writer.
//!
//! ```text
//! INPUT(a)            OUTPUT(y)           KEYINPUT(k0)        RESET(rst)
//! y = NAND(a, b)      q = DFF(d)          l = KLATCH(d, k0, k1)
//! ```

use std::fmt::Write as _;

use super::validate::is_identifier;
use super::{CellKind, Netlist, NetlistBuilder, NetlistError};

const NAME_TAG: &str = "# netlist ";

pub fn parse_bench(text: &str) -> Result<Netlist, NetlistError> {
    parse_bench_named(text, "top")
}

/// Parses `text`; `default_name` is used unless the file carries a
/// `# netlist <name>` header.
pub fn parse_bench_named(text: &str, default_name: &str) -> Result<Netlist, NetlistError> {
    let mut b = NetlistBuilder::new(default_name);
    let mut have_reset = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if let Some(name) = raw.trim().strip_prefix(NAME_TAG) {
            if idx == 0 {
                b.set_name(name.trim());
                continue;
            }
        }
        let content = raw.split('#').next().unwrap().trim();
        if content.is_empty() {
            continue;
        }
        let err = |msg: String| NetlistError::Syntax { line, msg };
        if let Some(eq) = content.find('=') {
            let lhs = content[..eq].trim();
            let rhs = content[eq + 1..].trim();
            if !is_identifier(lhs) {
                return Err(err(format!("`{lhs}` is not a valid net name")));
            }
            let (kind_s, args) = split_call(rhs)
                .ok_or_else(|| err(format!("expected KIND(...) after `=`, got `{rhs}`")))?;
            let kind = CellKind::from_name(kind_s)
                .ok_or_else(|| err(format!("unknown cell kind `{kind_s}`")))?;
            let (lo, hi) = kind.arity();
            if args.len() < lo || args.len() > hi {
                let want = if lo == hi {
                    format!("{lo}")
                } else {
                    format!("at least {lo}")
                };
                return Err(err(format!(
                    "arity mismatch: {kind} takes {want} inputs, got {}",
                    args.len()
                )));
            }
            for a in &args {
                if !is_identifier(a) {
                    return Err(err(format!("`{a}` is not a valid net name")));
                }
            }
            b.at_line(line).add_cell(kind, lhs, args);
        } else {
            let (dir, args) =
                split_call(content).ok_or_else(|| err(format!("cannot parse `{content}`")))?;
            if args.len() != 1 || !is_identifier(args[0]) {
                return Err(err(format!("{dir} takes exactly one net name")));
            }
            let name = args[0];
            match dir.to_ascii_uppercase().as_str() {
                "INPUT" => {
                    b.add_input(name);
                }
                "OUTPUT" => {
                    b.add_output(name);
                }
                "KEYINPUT" => {
                    b.add_key(name);
                }
                "RESET" => {
                    if have_reset {
                        return Err(err("only one RESET net is supported".into()));
                    }
                    have_reset = true;
                    b.set_reset(name);
                }
                "CLOCK" => {
                    return Err(err(
                        "explicit clocks are not supported; netlists use one implicit clock".into(),
                    ))
                }
                other => return Err(err(format!("unknown directive `{other}`"))),
            }
        }
    }
    b.build()
}

fn split_call(s: &str) -> Option<(&str, Vec<&str>)> {
    let open = s.find('(')?;
    if !s.ends_with(')') {
        return None;
    }
    let head = s[..open].trim();
    let body = s[open + 1..s.len() - 1].trim();
    let args = if body.is_empty() {
        Vec::new()
    } else {
        body.split(',').map(|a| a.trim()).collect()
    };
    Some((head, args))
}

pub fn write_bench(n: &Netlist) -> String {
    let mut s = String::new();
    writeln!(s, "{NAME_TAG}{}", n.name()).unwrap();
    for &i in n.inputs() {
        writeln!(s, "INPUT({})", n.net_name(i)).unwrap();
    }
    if let Some(r) = n.reset() {
        writeln!(s, "RESET({})", n.net_name(r)).unwrap();
    }
    for &k in n.key_inputs() {
        writeln!(s, "KEYINPUT({})", n.net_name(k)).unwrap();
    }
    for &o in n.outputs() {
        writeln!(s, "OUTPUT({})", n.net_name(o)).unwrap();
    }
    s.push('\n');
    for c in n.cells() {
        let mut args: Vec<&str> = c.inputs.iter().map(|&i| n.net_name(i)).collect();
        if let Some([k0, k1]) = c.key {
            args.push(n.net_name(n.key_inputs()[k0]));
            args.push(n.net_name(n.key_inputs()[k1]));
        }
        writeln!(s, "{} = {}({})", c.name, c.kind, args.join(", ")).unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;

    #[test]
    fn minimal_not() {
        let n = parse_bench("INPUT(a)\nOUTPUT(y)\ny = NOT(a)").unwrap();
        assert_eq!(n.inputs().len(), 1);
        assert_eq!(n.outputs().len(), 1);
        assert_eq!(n.cells().len(), 1);
        let again = parse_bench(&write_bench(&n)).unwrap();
        assert_eq!(again.cells(), n.cells());
        assert_eq!(again.inputs(), n.inputs());
    }

    #[test]
    fn arity_error_has_line() {
        let e = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = NOT(a, b)").unwrap_err();
        match e {
            NetlistError::Syntax { line, msg } => {
                assert_eq!(line, 4);
                assert!(msg.contains("arity"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn s27_counts() {
        let n = corpus::s27();
        let st = n.stats();
        assert_eq!(
            (st.inputs, st.outputs, st.flip_flops, st.combinational),
            (4, 1, 3, 10)
        );
        assert!(n.validate().is_empty());
    }

    #[test]
    fn s27_write_is_idempotent() {
        let once = write_bench(&corpus::s27());
        let twice = write_bench(&parse_bench(&once).unwrap());
        assert_eq!(once, twice);
    }

    #[test]
    fn klatch_line_emitted() {
        let n =
            parse_bench("INPUT(d)\nKEYINPUT(k0)\nKEYINPUT(k1)\nOUTPUT(q)\nq = KLATCH(d, k0, k1)\n")
                .unwrap();
        assert!(write_bench(&n).contains("q = KLATCH(d, k0, k1)"));
        assert_eq!(n.cells()[0].key, Some([0, 1]));
    }

    #[test]
    fn duplicate_driver_rejected_with_line() {
        let e = parse_bench("INPUT(a)\nOUTPUT(y)\ny = NOT(a)\ny = BUF(a)\n").unwrap_err();
        assert!(
            matches!(e, NetlistError::Invalid { line: Some(3), .. }),
            "{e}"
        );
    }

    #[test]
    fn undeclared_net_rejected() {
        let e = parse_bench("INPUT(a)\nOUTPUT(y)\ny = AND(a, ghost)\n").unwrap_err();
        assert!(e.to_string().contains("ghost"));
    }

    #[test]
    fn combinational_cycle_rejected() {
        let e = parse_bench("INPUT(a)\nOUTPUT(y)\np = AND(a, y)\ny = NOT(p)\n").unwrap_err();
        assert!(e.to_string().contains("cycle"), "{e}");
    }

    #[test]
    fn clock_directive_rejected() {
        assert!(parse_bench("CLOCK(clk2)\n").is_err());
    }

    #[test]
    fn header_sets_name() {
        let n = parse_bench("# netlist foo\nINPUT(a)\nOUTPUT(a)\n").unwrap();
        assert_eq!(n.name(), "foo");
    }
}
