//! CPLEX-style LP text format.
//!
//! Model constants travel in `\ key: value` comment lines at the top. Every
//! variable is listed in the `Bounds` section in model order, which lets a
//! parsed model reproduce the original variable order exactly. Long rows are
//! wrapped; continuation lines never contain `:`.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::Error;
use crate::objective::{NormBounds, Range};

use super::{Constraint, MilpModel, ModelMeta, Sense, Var, VarKind};

const WRAP: usize = 200;

fn push_terms(out: &mut String, line_start: &mut usize, head: &str, terms: &[(usize, f64)], vars: &[Var]) {
    out.push_str(head);
    for &(i, c) in terms {
        let term = if c < 0.0 {
            format!(" - {} {}", -c, vars[i].name)
        } else {
            format!(" + {} {}", c, vars[i].name)
        };
        if out.len() - *line_start + term.len() > WRAP {
            out.push('\n');
            *line_start = out.len();
        }
        out.push_str(&term);
    }
}

/// Writes `m` as LP text.
pub fn export_lp(m: &MilpModel) -> String {
    let mut out = String::new();
    let meta = &m.meta;
    let _ = writeln!(out, "\\ hubsched continuous-time model");
    let _ = writeln!(out, "\\ omega_time: {}", meta.omega_time);
    let _ = writeln!(out, "\\ omega_rel: {}", meta.omega_rel);
    let _ = writeln!(out, "\\ omega_tol: {}", meta.omega);
    let _ = writeln!(out, "\\ deadline: {}", meta.deadline);
    let _ = writeln!(out, "\\ objective_offset: {}", m.objective_offset);
    for chunk in meta.events.chunks(16) {
        let _ = writeln!(out, "\\ events: {}", chunk.join(" "));
    }
    if let Some(b) = &meta.bounds {
        let _ = writeln!(
            out,
            "\\ bounds: {} {} {} {} {} {}",
            b.latency.min, b.latency.max, b.energy.min, b.energy.max, b.reliability.min, b.reliability.max
        );
    }

    out.push_str("Minimize\n");
    let mut ls = out.len();
    if m.objective.is_empty() && !m.vars.is_empty() {
        let _ = write!(out, " obj: 0 {}", m.vars[0].name);
    } else {
        push_terms(&mut out, &mut ls, " obj:", &m.objective, &m.vars);
    }
    out.push_str("\nSubject To\n");
    for c in &m.constraints {
        ls = out.len();
        push_terms(&mut out, &mut ls, &format!(" {}:", c.name), &c.terms, &m.vars);
        let _ = writeln!(out, " {} {}", c.sense.symbol(), c.rhs);
    }

    out.push_str("Bounds\n");
    for v in &m.vars {
        let _ = match (v.lb.is_finite(), v.ub.is_finite()) {
            (true, true) => writeln!(out, " {} <= {} <= {}", v.lb, v.name, v.ub),
            (true, false) => writeln!(out, " {} >= {}", v.name, v.lb),
            (false, true) => writeln!(out, " -inf <= {} <= {}", v.name, v.ub),
            (false, false) => writeln!(out, " {} free", v.name),
        };
    }
    let bins: Vec<&str> = m
        .vars
        .iter()
        .filter(|v| v.kind == VarKind::Binary)
        .map(|v| v.name.as_str())
        .collect();
    if !bins.is_empty() {
        out.push_str("Binaries\n");
        for chunk in bins.chunks(8) {
            let _ = writeln!(out, " {}", chunk.join(" "));
        }
    }
    out.push_str("End\n");
    out
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Header,
    Objective,
    Rows,
    Bounds,
    Binaries,
    End,
}

fn is_number(tok: &str) -> bool {
    let t = tok.trim_start_matches(['+', '-']);
    t.starts_with(|c: char| c.is_ascii_digit() || c == '.')
        || t.eq_ignore_ascii_case("inf")
        || t.eq_ignore_ascii_case("infinity")
}

fn number(tok: &str, line: usize) -> Result<f64, Error> {
    let t = tok.to_ascii_lowercase();
    let v = match t.as_str() {
        "inf" | "+inf" | "infinity" | "+infinity" => f64::INFINITY,
        "-inf" | "-infinity" => f64::NEG_INFINITY,
        _ => t.parse().map_err(|_| Error::MalformedLp {
            line,
            msg: format!("bad number {tok:?}"),
        })?,
    };
    Ok(v)
}

fn sense(tok: &str) -> Option<Sense> {
    match tok {
        "<=" | "=<" | "<" => Some(Sense::Le),
        ">=" | "=>" | ">" => Some(Sense::Ge),
        "=" => Some(Sense::Eq),
        _ => None,
    }
}

/// Splits operators glued to operands, e.g. `<=3` or `+2`.
fn tokens(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    for raw in s.split_whitespace() {
        let mut rest = raw;
        while !rest.is_empty() {
            let op = ["<=", ">=", "=<", "=>", "<", ">", "="]
                .iter()
                .find(|op| rest.starts_with(**op));
            if let Some(op) = op {
                out.push(op.to_string());
                rest = &rest[op.len()..];
                continue;
            }
            if (rest.starts_with('+') || rest.starts_with('-')) && rest.len() > 1 && !is_number(rest) {
                out.push(rest[..1].to_string());
                rest = &rest[1..];
                continue;
            }
            let end = rest.find(['<', '>', '=']).unwrap_or(rest.len());
            out.push(rest[..end].to_string());
            rest = &rest[end..];
        }
    }
    out
}

fn push(terms: &mut Vec<(String, f64)>, name: &str, c: f64) {
    match terms.iter_mut().find(|(n, _)| n == name) {
        Some((_, acc)) => *acc += c,
        None => terms.push((name.to_string(), c)),
    }
}

/// Parses `± c name ± c name ... [± constant]` into terms and a constant.
fn linear(toks: &[String], line: usize) -> Result<(Vec<(String, f64)>, f64), Error> {
    let mut terms: Vec<(String, f64)> = Vec::new();
    let mut constant = 0.0;
    let mut sign = 1.0;
    let mut coef: Option<f64> = None;
    for t in toks {
        match t.as_str() {
            "+" => {}
            "-" => sign = -sign,
            _ if is_number(t) => {
                if let Some(c) = coef {
                    constant += sign * c;
                    sign = 1.0;
                }
                match number(t, line) {
                    Ok(v) => coef = Some(v),
                    Err(e) => {
                        // a coefficient glued to its variable, as in `3y`
                        let split = (1..t.len())
                            .rev()
                            .find(|&k| t.is_char_boundary(k) && t[..k].parse::<f64>().is_ok())
                            .ok_or(e)?;
                        let c = sign * t[..split].parse::<f64>().expect("checked");
                        push(&mut terms, &t[split..], c);
                        sign = 1.0;
                    }
                }
            }
            name => {
                push(&mut terms, name, sign * coef.take().unwrap_or(1.0));
                sign = 1.0;
            }
        }
    }
    if let Some(c) = coef {
        constant += sign * c;
    }
    Ok((terms, constant))
}

struct RawRow {
    name: String,
    line: usize,
    text: String,
}

/// Parses LP text produced by [`export_lp`] (and the common subset of the
/// format around it). Variables listed in `Bounds` keep that order; others
/// follow in order of first appearance.
pub fn parse_lp(text: &str) -> Result<MilpModel, Error> {
    let mut meta = ModelMeta::default();
    let mut offset = 0.0;
    let mut section = Section::Header;
    let mut obj_text = String::new();
    let mut obj_line = 0;
    let mut rows: Vec<RawRow> = Vec::new();
    let mut bounds: Vec<(usize, String)> = Vec::new();
    let mut binaries: Vec<(usize, String)> = Vec::new();

    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let trimmed = raw.trim();
        if let Some(c) = trimmed.strip_prefix('\\') {
            if let Some((k, v)) = c.trim().split_once(':') {
                let num = || number(v.trim(), line);
                match k.trim() {
                    "omega_time" => meta.omega_time = num()?,
                    "omega_rel" => meta.omega_rel = num()?,
                    "omega_tol" => meta.omega = num()?,
                    "deadline" => meta.deadline = num()?,
                    "objective_offset" => offset = num()?,
                    "events" => meta.events.extend(v.split_whitespace().map(String::from)),
                    "bounds" => {
                        let f = v
                            .split_whitespace()
                            .map(|t| number(t, line))
                            .collect::<Result<Vec<_>, _>>()?;
                        if f.len() != 6 {
                            return Err(Error::MalformedLp {
                                line,
                                msg: "bounds header needs six values".into(),
                            });
                        }
                        meta.bounds = Some(NormBounds {
                            latency: Range { min: f[0], max: f[1] },
                            energy: Range { min: f[2], max: f[3] },
                            reliability: Range { min: f[4], max: f[5] },
                        });
                    }
                    _ => {}
                }
            }
            continue;
        }
        if trimmed.is_empty() {
            continue;
        }
        let lower = trimmed.to_ascii_lowercase();
        let next = match lower.as_str() {
            "minimize" | "minimise" | "min" => Some(Section::Objective),
            "maximize" | "maximise" | "max" => {
                return Err(Error::MalformedLp {
                    line,
                    msg: "only minimization is supported".into(),
                })
            }
            "subject to" | "such that" | "st" | "s.t." => Some(Section::Rows),
            "bounds" | "bound" => Some(Section::Bounds),
            "binaries" | "binary" | "bin" => Some(Section::Binaries),
            "general" | "generals" | "gen" | "semi-continuous" | "sos" => {
                return Err(Error::MalformedLp {
                    line,
                    msg: format!("unsupported section {trimmed:?}"),
                })
            }
            "end" => Some(Section::End),
            _ => None,
        };
        if let Some(s) = next {
            section = s;
            continue;
        }
        match section {
            Section::Header => {
                return Err(Error::MalformedLp {
                    line,
                    msg: "content before Minimize".into(),
                })
            }
            Section::Objective => {
                let body = match trimmed.split_once(':') {
                    Some((_, b)) => b,
                    None => trimmed,
                };
                if obj_text.is_empty() {
                    obj_line = line;
                }
                obj_text.push(' ');
                obj_text.push_str(body);
            }
            Section::Rows => match trimmed.split_once(':') {
                Some((name, body)) => rows.push(RawRow {
                    name: name.trim().to_string(),
                    line,
                    text: body.to_string(),
                }),
                None => {
                    let r = rows.last_mut().ok_or_else(|| Error::MalformedLp {
                        line,
                        msg: "unnamed row".into(),
                    })?;
                    r.text.push(' ');
                    r.text.push_str(trimmed);
                }
            },
            Section::Bounds => bounds.push((line, trimmed.to_string())),
            Section::Binaries => binaries.extend(trimmed.split_whitespace().map(|n| (line, n.to_string()))),
            Section::End => {
                return Err(Error::MalformedLp {
                    line,
                    msg: "content after End".into(),
                })
            }
        }
    }
    if section != Section::End {
        return Err(Error::MalformedLp {
            line: text.lines().count(),
            msg: "missing End".into(),
        });
    }

    // variable bounds in listing order
    let mut order: Vec<String> = Vec::new();
    let mut info: HashMap<String, (f64, f64)> = HashMap::new();
    for (line, b) in &bounds {
        let line = *line;
        let t = tokens(b);
        let bad = || Error::MalformedLp {
            line,
            msg: format!("bad bound {b:?}"),
        };
        let (name, lb, ub) = match t.as_slice() {
            [lo, s1, n, s2, hi] if sense(s1) == Some(Sense::Le) && sense(s2) == Some(Sense::Le) => {
                (n.clone(), number(lo, line)?, number(hi, line)?)
            }
            [n, f] if f.eq_ignore_ascii_case("free") => (n.clone(), f64::NEG_INFINITY, f64::INFINITY),
            [a, s, c] => {
                let (n, v, s) = if is_number(a) {
                    // `v <= x` reads as `x >= v`
                    let flipped = match sense(s).ok_or_else(bad)? {
                        Sense::Le => Sense::Ge,
                        Sense::Ge => Sense::Le,
                        Sense::Eq => Sense::Eq,
                    };
                    (c.clone(), number(a, line)?, flipped)
                } else {
                    (a.clone(), number(c, line)?, sense(s).ok_or_else(bad)?)
                };
                let (lb, ub) = info.get(&n).copied().unwrap_or((0.0, f64::INFINITY));
                match s {
                    Sense::Le => (n, lb, v),
                    Sense::Ge => (n, v, ub),
                    Sense::Eq => (n, v, v),
                }
            }
            _ => return Err(bad()),
        };
        if !info.contains_key(&name) {
            order.push(name.clone());
        }
        info.insert(name, (lb, ub));
    }

    let mut index: HashMap<String, usize> = order.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
    let mut intern = |name: &str, order: &mut Vec<String>| -> usize {
        if let Some(&i) = index.get(name) {
            return i;
        }
        order.push(name.to_string());
        index.insert(name.to_string(), order.len() - 1);
        order.len() - 1
    };

    let (obj_terms, obj_const) = linear(&tokens(&obj_text), obj_line)?;
    let mut objective = Vec::new();
    for (n, c) in obj_terms {
        let i = intern(&n, &mut order);
        if c != 0.0 {
            objective.push((i, c));
        }
    }

    let mut constraints = Vec::with_capacity(rows.len());
    for r in rows {
        let t = tokens(&r.text);
        let pos = t.iter().position(|x| sense(x).is_some()).ok_or_else(|| Error::MalformedLp {
            line: r.line,
            msg: format!("row {} has no relation", r.name),
        })?;
        let (lhs, c) = linear(&t[..pos], r.line)?;
        let (rhs_terms, rhs) = linear(&t[pos + 1..], r.line)?;
        if !rhs_terms.is_empty() {
            return Err(Error::MalformedLp {
                line: r.line,
                msg: format!("row {} has variables on the right-hand side", r.name),
            });
        }
        let family = r.name.chars().next().ok_or_else(|| Error::MalformedLp {
            line: r.line,
            msg: "empty row name".into(),
        })?;
        let terms = lhs
            .into_iter()
            .map(|(n, c)| (intern(&n, &mut order), c))
            .collect();
        constraints.push(Constraint {
            name: r.name,
            family,
            terms,
            sense: sense(&t[pos]).expect("checked above"),
            rhs: rhs - c,
        });
    }

    let mut is_bin = vec![false; order.len()];
    for (line, n) in &binaries {
        let i = index.get(n.as_str()).copied().ok_or_else(|| Error::MalformedLp {
            line: *line,
            msg: format!("binary {n} does not appear in the model"),
        })?;
        is_bin[i] = true;
    }
    let vars = order
        .into_iter()
        .zip(is_bin)
        .map(|(name, bin)| {
            let (lb, ub) = info
                .get(&name)
                .copied()
                .unwrap_or(if bin { (0.0, 1.0) } else { (0.0, f64::INFINITY) });
            Var {
                name,
                kind: if bin { VarKind::Binary } else { VarKind::Continuous },
                lb,
                ub,
            }
        })
        .collect();

    Ok(MilpModel {
        vars,
        constraints,
        objective,
        objective_offset: offset + obj_const,
        meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::build_model;
    use crate::objective::Problem;
    use crate::workload::fixtures;

    #[test]
    fn duplication_round_trip() {
        let p = Problem::from_instance(&fixtures::duplication_example().to_instance().unwrap()).unwrap();
        let m = build_model(&p);
        let text = export_lp(&m);
        let back = parse_lp(&text).unwrap();
        assert_eq!(back, m);
        for l in text.lines().filter(|l| !l.starts_with('\\')) {
            assert!(l.len() <= WRAP + 64, "{l}");
        }
    }

    #[test]
    fn generic_forms() {
        let text = "Minimize\n obj: 2 x + 3y - 1.5\nSubject To\n c1: x + y >= 1\n c2: -x\n  + 0.5 y<=4\nBounds\n x <= 10\n -5 <= y <= 5\nBinaries\nEnd\n";
        let m = parse_lp(text).unwrap();
        assert_eq!(m.vars[0].name, "x");
        assert_eq!((m.vars[0].lb, m.vars[0].ub), (0.0, 10.0));
        assert_eq!((m.vars[1].lb, m.vars[1].ub), (-5.0, 5.0));
        assert_eq!(m.objective, vec![(0, 2.0), (1, 3.0)]);
        assert_eq!(m.objective_offset, -1.5);
        assert_eq!(m.constraints[0].sense, Sense::Ge);
        // a continuation line without ':' belongs to the previous row
        assert_eq!(m.constraints[1].rhs, 4.0);
        assert_eq!(m.constraints[1].terms, vec![(0, -1.0), (1, 0.5)]);
        assert_eq!(m.constraints[1].family, 'c');
    }

    #[test]
    fn malformed_inputs() {
        for bad in [
            "Minimize\n obj: x\nSubject To\n c1: x + y\nEnd\n",
            "Minimize\n obj: x\nSubject To\n c1: x <= 1\n",
            "x + y\nMinimize\nEnd\n",
            "Minimize\n obj: x\nBounds\n x ~ 3\nEnd\n",
            "Minimize\n obj: x\nBinaries\n q\nEnd\n",
        ] {
            assert!(matches!(parse_lp(bad), Err(Error::MalformedLp { .. })), "{bad}");
        }
    }
}
