//! Text format for spaces.
//!
//! ```text
//! space <n>
//! dist                 | edges
//! <n rows of n reals>  | <i j length> per line
//! measure <n reals>    (optional)
//! ```
//!
//! Blank lines and `#` comments are ignored. Writers emit 17 significant
//! digits so values round-trip exactly.

use std::fmt::Write as _;
use std::path::Path;

use super::{FiniteSpace, Graph, Result, SpaceError};
use crate::util::fmt_g17;

fn perr(line: usize, msg: impl Into<String>) -> SpaceError {
    SpaceError::Parse { line, msg: msg.into() }
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>().map_err(|_| perr(line, format!("not a number: {tok:?}")))
}

/// Parses the space text format.
pub fn parse_space(text: &str) -> Result<FiniteSpace> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
        .peekable();

    let (ln, header) = lines.next().ok_or_else(|| perr(0, "empty input"))?;
    let mut toks = header.split_whitespace();
    if toks.next() != Some("space") {
        return Err(perr(ln, "expected header `space <n>`"));
    }
    let n: usize = toks
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| perr(ln, "expected point count after `space`"))?;

    let (ln, kind) = lines.next().ok_or_else(|| perr(ln, "missing `dist` or `edges` section"))?;
    let mut dist: Option<Vec<Vec<f64>>> = None;
    let mut edges: Option<Vec<(usize, usize, f64)>> = None;
    match kind {
        "dist" => {
            let mut rows = Vec::with_capacity(n);
            for _ in 0..n {
                let (ln, row) = lines.next().ok_or_else(|| perr(ln, "distance matrix truncated"))?;
                let vals = row.split_whitespace().map(|t| parse_f64(t, ln)).collect::<Result<Vec<_>>>()?;
                if vals.len() != n {
                    return Err(perr(ln, format!("expected {n} distances, found {}", vals.len())));
                }
                rows.push(vals);
            }
            dist = Some(rows);
        }
        "edges" => {
            let mut list = Vec::new();
            while let Some(&(ln, row)) = lines.peek() {
                if row.starts_with("measure") {
                    break;
                }
                lines.next();
                let toks: Vec<&str> = row.split_whitespace().collect();
                if toks.len() != 3 {
                    return Err(perr(ln, "expected `i j length`"));
                }
                let i = toks[0].parse().map_err(|_| perr(ln, "bad vertex index"))?;
                let j = toks[1].parse().map_err(|_| perr(ln, "bad vertex index"))?;
                list.push((i, j, parse_f64(toks[2], ln)?));
            }
            edges = Some(list);
        }
        other => return Err(perr(ln, format!("expected `dist` or `edges`, found {other:?}"))),
    }

    let mut measure = None;
    if let Some((ln, row)) = lines.next() {
        let mut toks = row.split_whitespace();
        if toks.next() != Some("measure") {
            return Err(perr(ln, "expected `measure` line or end of input"));
        }
        let mut vals = toks.map(|t| parse_f64(t, ln)).collect::<Result<Vec<_>>>()?;
        let mut last = ln;
        while vals.len() < n {
            let (ln, row) = lines.next().ok_or_else(|| perr(last, "measure truncated"))?;
            for t in row.split_whitespace() {
                vals.push(parse_f64(t, ln)?);
            }
            last = ln;
        }
        if vals.len() != n {
            return Err(perr(last, format!("expected {n} measure values, found {}", vals.len())));
        }
        measure = Some(vals);
    }
    if let Some((ln, _)) = lines.next() {
        return Err(perr(ln, "trailing content"));
    }

    match (dist, edges) {
        (Some(d), _) => FiniteSpace::new(d, measure.unwrap_or_else(|| vec![1.0; n])),
        (_, Some(e)) => FiniteSpace::from_graph_with_measure(&Graph::new(n, e)?, measure),
        _ => unreachable!("one section is always parsed"),
    }
}

pub fn read_space(path: impl AsRef<Path>) -> Result<FiniteSpace> {
    parse_space(&std::fs::read_to_string(path)?)
}

/// Writes a space as a full distance matrix.
pub fn write_space_dist(space: &FiniteSpace) -> String {
    let n = space.len();
    let mut out = format!("space {n}\ndist\n");
    for x in 0..n {
        let row: Vec<String> = space.row(x).iter().map(|&d| fmt_g17(d)).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    push_measure(&mut out, space.measure());
    out
}

/// Writes a graph in edge-list form, with an optional measure.
pub fn write_space_edges(g: &Graph, measure: Option<&[f64]>) -> String {
    let mut out = format!("space {}\nedges\n", g.n());
    for &(u, v, len) in g.edges() {
        let _ = writeln!(out, "{u} {v} {}", fmt_g17(len));
    }
    if let Some(m) = measure {
        push_measure(&mut out, m);
    }
    out
}

fn push_measure(out: &mut String, m: &[f64]) {
    if m.iter().all(|&w| w == 1.0) {
        return;
    }
    out.push_str("measure");
    for &w in m {
        out.push(' ');
        out.push_str(&fmt_g17(w));
    }
    out.push('\n');
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_edge_form_with_measure() {
        let s = parse_space("space 3\nedges\n0 1 1\n1 2 2.5\nmeasure 1 2 3\n").unwrap();
        assert_eq!(s.d(0, 2), 3.5);
        assert_eq!(s.measure(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn parses_dist_form_with_comments() {
        let s = parse_space("# two points\nspace 2\ndist\n0 0.5\n0.5 0 # row 2\n").unwrap();
        assert_eq!(s.d(1, 0), 0.5);
        assert_eq!(s.measure(), &[1.0, 1.0]);
    }

    #[test]
    fn dist_writer_round_trips_exactly() {
        let s = FiniteSpace::new(
            vec![vec![0.0, 0.1, 0.3], vec![0.1, 0.0, 0.2], vec![0.3, 0.2, 0.0]],
            vec![1.0 / 3.0, 2.0, 1.0],
        )
        .unwrap();
        let back = parse_space(&write_space_dist(&s)).unwrap();
        for x in 0..3 {
            assert_eq!(back.row(x), s.row(x));
        }
        assert_eq!(back.measure(), s.measure());
    }

    #[test]
    fn reports_bad_lines() {
        assert!(matches!(parse_space("space 2\ndist\n0 1\n1\n"), Err(SpaceError::Parse { line: 4, .. })));
        assert!(parse_space("spaces 2\n").is_err());
        assert!(parse_space("space 2\nedges\n0 1\n").is_err());
        assert!(matches!(
            parse_space("space 3\nedges\n0 1 1\n"),
            Err(SpaceError::DisconnectedGraph { unreachable: 2 })
        ));
    }
}
