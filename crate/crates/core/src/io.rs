//! Plain-text instance formats.
//!
//! Chains are a matrix block preceded by `# key=value` headers; problems
//! add `[meta]`, `[P]`, `[A:x]`, `[b:x]` sections (states 1-based);
//! reward processes mirror the chain format plus a `# gamma=` header and
//! an `[r]` section. Floats are written in the shortest form that parses
//! back to the identical bits, so writer and parser round-trip exactly.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::chain::FiniteChain;
use crate::error::{Error, Result};
use crate::problem::{build_problem, LsaProblem};
use crate::td::Mrp;

fn parse_err(line: usize, col: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        col,
        msg: msg.into(),
    }
}

fn parse_f64(token: &str, line: usize, col: usize) -> Result<f64> {
    token
        .parse::<f64>()
        .map_err(|_| parse_err(line, col, format!("expected a number, got '{token}'")))
}

/// Token with its 1-based column.
fn tokens(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut col = 1;
    for piece in line.split_whitespace() {
        // Column of this piece within the original line.
        let start = line[col - 1..]
            .find(piece)
            .map(|off| col + off)
            .unwrap_or(col);
        out.push((start, piece));
        col = start + piece.len();
    }
    out
}

fn parse_row(line: &str, lineno: usize) -> Result<Vec<f64>> {
    tokens(line)
        .into_iter()
        .map(|(col, tok)| parse_f64(tok, lineno, col))
        .collect()
}

fn header_kv(line: &str) -> Option<(&str, &str)> {
    let body = line.strip_prefix('#')?.trim();
    let (k, v) = body.split_once('=')?;
    Some((k.trim(), v.trim()))
}

/// Parse a chain specification.
pub fn parse_chain(text: &str) -> Result<FiniteChain> {
    let mut label = None;
    let mut declared_n = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim_end();
        if line.trim().is_empty() {
            continue;
        }
        if line.trim_start().starts_with('#') {
            if let Some((k, v)) = header_kv(line.trim_start()) {
                match k {
                    "n" => {
                        declared_n = Some(v.parse::<usize>().map_err(|_| {
                            parse_err(lineno, 1, format!("bad state count '{v}'"))
                        })?);
                    }
                    "label" => label = Some(v.to_string()),
                    _ => {}
                }
            }
            continue;
        }
        rows.push(parse_row(line, lineno)?);
    }
    if rows.is_empty() {
        return Err(parse_err(1, 1, "no matrix rows found"));
    }
    let n = rows.len();
    if let Some(dn) = declared_n {
        if dn != n {
            return Err(parse_err(
                1,
                1,
                format!("header declares n={dn} but found {n} rows"),
            ));
        }
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(parse_err(
                i + 1,
                1,
                format!("row has {} entries, expected {n}", row.len()),
            ));
        }
    }
    let kernel = DMatrix::from_fn(n, n, |x, y| rows[x][y]);
    let chain = FiniteChain::new(kernel)?;
    Ok(match label {
        Some(l) => chain.with_label(l),
        None => chain,
    })
}

/// Serialize a chain specification.
pub fn write_chain(chain: &FiniteChain) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# n={}", chain.n);
    if let Some(label) = &chain.label {
        let _ = writeln!(out, "# label={label}");
    }
    for x in 0..chain.n {
        let row: Vec<String> = (0..chain.n)
            .map(|y| format!("{}", chain.kernel[(x, y)]))
            .collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

#[derive(Debug, PartialEq, Eq)]
enum ProblemSection {
    Meta,
    Kernel,
    AMap(usize),
    BMap(usize),
}

fn parse_section_header(line: &str, lineno: usize) -> Result<Option<ProblemSection>> {
    let trimmed = line.trim();
    if !trimmed.starts_with('[') {
        return Ok(None);
    }
    let inner = trimmed
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| parse_err(lineno, 1, "unterminated section header"))?;
    let section = match inner {
        "meta" => ProblemSection::Meta,
        "P" => ProblemSection::Kernel,
        other => {
            let (kind, idx) = other
                .split_once(':')
                .ok_or_else(|| parse_err(lineno, 1, format!("unknown section '{other}'")))?;
            let state: usize = idx
                .parse()
                .map_err(|_| parse_err(lineno, 1, format!("bad state index '{idx}'")))?;
            if state == 0 {
                return Err(parse_err(lineno, 1, "states are numbered from 1"));
            }
            match kind {
                "A" => ProblemSection::AMap(state - 1),
                "b" => ProblemSection::BMap(state - 1),
                _ => return Err(parse_err(lineno, 1, format!("unknown section '{other}'"))),
            }
        }
    };
    Ok(Some(section))
}

/// Parse a problem specification into its chain and instance.
///
/// The stored maps are used as-is (no renormalization on load).
pub fn parse_problem(text: &str) -> Result<(FiniteChain, LsaProblem)> {
    let mut section: Option<ProblemSection> = None;
    let mut n: Option<usize> = None;
    let mut d: Option<usize> = None;
    let mut label: Option<String> = None;
    let mut kernel_rows: Vec<Vec<f64>> = Vec::new();
    let mut a_rows: Vec<(usize, Vec<Vec<f64>>)> = Vec::new();
    let mut b_rows: Vec<(usize, Vec<f64>)> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim_end();
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        if let Some(s) = parse_section_header(line, lineno)? {
            match &s {
                ProblemSection::AMap(x) => a_rows.push((*x, Vec::new())),
                ProblemSection::BMap(x) => b_rows.push((*x, Vec::new())),
                _ => {}
            }
            section = Some(s);
            continue;
        }
        match &section {
            None => return Err(parse_err(lineno, 1, "content before any section header")),
            Some(ProblemSection::Meta) => {
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| parse_err(lineno, 1, "expected key=value"))?;
                match k.trim() {
                    "n" => {
                        n = Some(v.trim().parse().map_err(|_| {
                            parse_err(lineno, 1, format!("bad state count '{v}'"))
                        })?)
                    }
                    "d" => {
                        d = Some(v.trim().parse().map_err(|_| {
                            parse_err(lineno, 1, format!("bad dimension '{v}'"))
                        })?)
                    }
                    "label" => label = Some(v.trim().to_string()),
                    other => {
                        return Err(parse_err(lineno, 1, format!("unknown meta key '{other}'")))
                    }
                }
            }
            Some(ProblemSection::Kernel) => kernel_rows.push(parse_row(line, lineno)?),
            Some(ProblemSection::AMap(_)) => {
                a_rows
                    .last_mut()
                    .expect("section push preceded rows")
                    .1
                    .push(parse_row(line, lineno)?);
            }
            Some(ProblemSection::BMap(_)) => {
                let row = parse_row(line, lineno)?;
                b_rows
                    .last_mut()
                    .expect("section push preceded rows")
                    .1
                    .extend(row);
            }
        }
    }

    let n = n.ok_or_else(|| parse_err(1, 1, "missing meta key n"))?;
    let d = d.ok_or_else(|| parse_err(1, 1, "missing meta key d"))?;
    if kernel_rows.len() != n || kernel_rows.iter().any(|r| r.len() != n) {
        return Err(parse_err(1, 1, format!("[P] must hold an {n}x{n} matrix")));
    }
    let kernel = DMatrix::from_fn(n, n, |x, y| kernel_rows[x][y]);
    let chain = FiniteChain::new(kernel)?;

    let mut a_maps = vec![None; n];
    for (x, rows) in a_rows {
        if x >= n {
            return Err(parse_err(1, 1, format!("A section for state {} > n", x + 1)));
        }
        if rows.len() != d || rows.iter().any(|r| r.len() != d) {
            return Err(parse_err(
                1,
                1,
                format!("[A:{}] must hold a {d}x{d} matrix", x + 1),
            ));
        }
        a_maps[x] = Some(DMatrix::from_fn(d, d, |i, j| rows[i][j]));
    }
    let mut b_maps = vec![None; n];
    for (x, vals) in b_rows {
        if x >= n {
            return Err(parse_err(1, 1, format!("b section for state {} > n", x + 1)));
        }
        if vals.len() != d {
            return Err(parse_err(
                1,
                1,
                format!("[b:{}] must hold {d} entries", x + 1),
            ));
        }
        b_maps[x] = Some(DVector::from_vec(vals));
    }
    let a_maps: Vec<DMatrix<f64>> = a_maps
        .into_iter()
        .enumerate()
        .map(|(x, m)| m.ok_or_else(|| parse_err(1, 1, format!("missing [A:{}]", x + 1))))
        .collect::<Result<_>>()?;
    let b_maps: Vec<DVector<f64>> = b_maps
        .into_iter()
        .enumerate()
        .map(|(x, v)| v.ok_or_else(|| parse_err(1, 1, format!("missing [b:{}]", x + 1))))
        .collect::<Result<_>>()?;

    let problem = build_problem(&chain, a_maps, b_maps, false)?;
    let chain = match &label {
        Some(l) => chain.clone().with_label(l.clone()),
        None => chain,
    };
    let problem = match label {
        Some(l) => problem.with_label(l),
        None => problem,
    };
    Ok((chain, problem))
}

/// Serialize a problem specification.
pub fn write_problem(chain: &FiniteChain, problem: &LsaProblem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "[meta]");
    let _ = writeln!(out, "n={}", problem.n);
    let _ = writeln!(out, "d={}", problem.d);
    if let Some(label) = problem.label.as_ref().or(chain.label.as_ref()) {
        let _ = writeln!(out, "label={label}");
    }
    let _ = writeln!(out, "[P]");
    for x in 0..chain.n {
        let row: Vec<String> = (0..chain.n)
            .map(|y| format!("{}", chain.kernel[(x, y)]))
            .collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    for (x, a) in problem.a_maps.iter().enumerate() {
        let _ = writeln!(out, "[A:{}]", x + 1);
        for i in 0..problem.d {
            let row: Vec<String> = (0..problem.d).map(|j| format!("{}", a[(i, j)])).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
    }
    for (x, b) in problem.b_maps.iter().enumerate() {
        let _ = writeln!(out, "[b:{}]", x + 1);
        let row: Vec<String> = b.iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

/// Parse a reward-process specification.
pub fn parse_mrp(text: &str) -> Result<Mrp> {
    let mut label = None;
    let mut gamma = None;
    let mut declared_n = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rewards: Vec<f64> = Vec::new();
    let mut in_rewards = false;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim_end();
        if line.trim().is_empty() {
            continue;
        }
        let trimmed = line.trim_start();
        if trimmed.starts_with('#') {
            if let Some((k, v)) = header_kv(trimmed) {
                match k {
                    "n" => {
                        declared_n = Some(v.parse::<usize>().map_err(|_| {
                            parse_err(lineno, 1, format!("bad state count '{v}'"))
                        })?)
                    }
                    "gamma" => gamma = Some(parse_f64(v, lineno, 1)?),
                    "label" => label = Some(v.to_string()),
                    _ => {}
                }
            }
            continue;
        }
        if trimmed == "[r]" {
            in_rewards = true;
            continue;
        }
        if in_rewards {
            rewards.extend(parse_row(line, lineno)?);
        } else {
            rows.push(parse_row(line, lineno)?);
        }
    }
    let gamma = gamma.ok_or_else(|| parse_err(1, 1, "missing '# gamma=' header"))?;
    if rows.is_empty() {
        return Err(parse_err(1, 1, "no matrix rows found"));
    }
    let n = rows.len();
    if let Some(dn) = declared_n {
        if dn != n {
            return Err(parse_err(
                1,
                1,
                format!("header declares n={dn} but found {n} rows"),
            ));
        }
    }
    if rewards.len() != n {
        return Err(parse_err(
            1,
            1,
            format!("[r] holds {} entries for {n} states", rewards.len()),
        ));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(parse_err(
                i + 1,
                1,
                format!("row has {} entries, expected {n}", row.len()),
            ));
        }
    }
    let kernel = DMatrix::from_fn(n, n, |x, y| rows[x][y]);
    let mrp = Mrp::new(kernel, DVector::from_vec(rewards), gamma)?;
    Ok(match label {
        Some(l) => mrp.with_label(l),
        None => mrp,
    })
}

/// Serialize a reward-process specification.
pub fn write_mrp(mrp: &Mrp) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# n={}", mrp.n_states);
    if let Some(label) = &mrp.label {
        let _ = writeln!(out, "# label={label}");
    }
    let _ = writeln!(out, "# gamma={}", mrp.gamma);
    for x in 0..mrp.n_states {
        let row: Vec<String> = (0..mrp.n_states)
            .map(|y| format!("{}", mrp.kernel[(x, y)]))
            .collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    let _ = writeln!(out, "[r]");
    let row: Vec<String> = mrp.rewards.iter().map(|v| format!("{v}")).collect();
    let _ = writeln!(out, "{}", row.join(" "));
    out
}

/// Read and parse a chain file.
pub fn read_chain(path: &Path) -> Result<FiniteChain> {
    parse_chain(&std::fs::read_to_string(path)?)
}

/// Read and parse a problem file.
pub fn read_problem(path: &Path) -> Result<(FiniteChain, LsaProblem)> {
    parse_problem(&std::fs::read_to_string(path)?)
}

/// Read and parse a reward-process file.
pub fn read_mrp(path: &Path) -> Result<Mrp> {
    parse_mrp(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::random_problem;
    use crate::td::problematic_mrp;

    #[test]
    fn chain_round_trip_is_bit_exact() {
        let chain = crate::chain::random_ergodic_chain(5, 3)
            .unwrap()
            .with_label("round-trip");
        let text = write_chain(&chain);
        let back = parse_chain(&text).unwrap();
        assert_eq!(back.kernel, chain.kernel);
        assert_eq!(back.label.as_deref(), Some("round-trip"));
    }

    #[test]
    fn problem_round_trip_is_bit_exact() {
        let (chain, problem) = random_problem(4, 3, 9).unwrap();
        let text = write_problem(&chain, &problem);
        let (chain2, problem2) = parse_problem(&text).unwrap();
        assert_eq!(chain2.kernel, chain.kernel);
        for x in 0..4 {
            assert_eq!(problem2.a_maps[x], problem.a_maps[x]);
            assert_eq!(problem2.b_maps[x], problem.b_maps[x]);
        }
        // Writing the parsed instance reproduces the file byte for byte.
        assert_eq!(write_problem(&chain2, &problem2), text);
        // Derived quantities recompute to working precision (the stored
        // maps are post-normalization, so the mean is re-accumulated).
        assert!((problem2.theta_star - &problem.theta_star).norm() < 1e-10);
    }

    #[test]
    fn mrp_round_trip_is_bit_exact() {
        let mrp = problematic_mrp();
        let text = write_mrp(&mrp);
        let back = parse_mrp(&text).unwrap();
        assert_eq!(back.kernel, mrp.kernel);
        assert_eq!(back.rewards, mrp.rewards);
        assert_eq!(back.gamma, mrp.gamma);
        assert_eq!(back.label.as_deref(), Some("problematic"));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let bad = "# n=2\n0.5 0.5\n0.5 oops\n";
        match parse_chain(bad) {
            Err(Error::Parse { line, col, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(col, 5);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn declared_n_mismatch_is_reported() {
        let bad = "# n=3\n0.5 0.5\n0.5 0.5\n";
        assert!(matches!(parse_chain(bad), Err(Error::Parse { .. })));
    }

    #[test]
    fn problem_missing_section_is_reported() {
        let text = "[meta]\nn=2\nd=1\n[P]\n0.5 0.5\n0.5 0.5\n[A:1]\n-1\n[b:1]\n1\n[b:2]\n0\n";
        let err = parse_problem(text).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
    }

    #[test]
    fn seventeen_digit_literals_survive() {
        let text = "# n=2\n0.1234567890123456 0.8765432109876544\n0.5 0.5\n";
        let chain = parse_chain(text).unwrap();
        let back = write_chain(&chain);
        let again = parse_chain(&back).unwrap();
        assert_eq!(chain.kernel, again.kernel);
    }
}
