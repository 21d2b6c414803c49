//! Line-oriented text serialization of [`MilpInstance`].
//!
//! Field order (one record per line, whitespace separated):
//!
//! ```text
//! tgmilp 1
//! name <identifier>
//! vars <n>
//! cons <m>
//! objective <c_0> ... <c_{n-1}>
//! lower <l_0> ... <l_{n-1}>
//! upper <u_0> ... <u_{n-1}>
//! integer <0|1> ... (n flags)
//! row <LE|GE|EQ> <rhs> <nnz> <col> <value> ...   (m lines, in row order)
//! end
//! ```
//!
//! Reals are written with 17 significant digits (`{:.16e}`), which makes the
//! round trip bit-exact for every finite `f64`. Infinities use `+inf`/`-inf`.

use super::{Entry, MilpInstance, RowSense};
use std::fmt::Write as _;

const MAGIC: &str = "tgmilp";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NativeError {
    #[error("MALFORMED_LINE at line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("UNEXPECTED_EOF: missing `{0}` record")]
    UnexpectedEof(&'static str),
}

/// Formats one real with 17 significant digits.
pub fn format_real(v: f64) -> String {
    if v == f64::INFINITY {
        "+inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{v:.16e}")
    }
}

pub fn parse_real(tok: &str) -> Option<f64> {
    match tok {
        "+inf" | "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => tok.parse::<f64>().ok().filter(|v| !v.is_nan()),
    }
}

pub fn write_native(inst: &MilpInstance) -> String {
    let mut out = String::new();
    let reals = |xs: &[f64]| {
        xs.iter()
            .map(|&v| format_real(v))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let _ = writeln!(out, "{MAGIC} {VERSION}");
    let _ = writeln!(out, "name {}", inst.name);
    let _ = writeln!(out, "vars {}", inst.num_vars);
    let _ = writeln!(out, "cons {}", inst.num_cons);
    let _ = writeln!(out, "objective {}", reals(&inst.objective));
    let _ = writeln!(out, "lower {}", reals(&inst.lower_bounds));
    let _ = writeln!(out, "upper {}", reals(&inst.upper_bounds));
    let flags: Vec<&str> = inst
        .is_integer
        .iter()
        .map(|&b| if b { "1" } else { "0" })
        .collect();
    let _ = writeln!(out, "integer {}", flags.join(" "));
    for (r, row) in inst.rows() {
        let _ = write!(
            out,
            "row {} {} {}",
            inst.row_senses[r].as_str(),
            format_real(inst.rhs[r]),
            row.len()
        );
        for e in row {
            let _ = write!(out, " {} {}", e.col, format_real(e.value));
        }
        out.push('\n');
    }
    out.push_str("end\n");
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    /// Next non-blank line split into tokens, with its 1-based number.
    fn next_record(&mut self, what: &'static str) -> Result<(usize, Vec<&'a str>), NativeError> {
        for (i, line) in self.inner.by_ref() {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if !toks.is_empty() {
                return Ok((i + 1, toks));
            }
        }
        Err(NativeError::UnexpectedEof(what))
    }
}

fn malformed(line: usize, msg: impl Into<String>) -> NativeError {
    NativeError::Malformed {
        line,
        msg: msg.into(),
    }
}

fn expect_key<'a>(
    lines: &mut Lines<'a>,
    key: &'static str,
) -> Result<(usize, Vec<&'a str>), NativeError> {
    let (ln, toks) = lines.next_record(key)?;
    if toks[0] != key {
        return Err(malformed(
            ln,
            format!("expected `{key}`, found `{}`", toks[0]),
        ));
    }
    Ok((ln, toks[1..].to_vec()))
}

fn parse_count(ln: usize, toks: &[&str]) -> Result<usize, NativeError> {
    match toks {
        [t] => t
            .parse()
            .map_err(|_| malformed(ln, format!("bad count `{t}`"))),
        _ => Err(malformed(ln, "expected a single count")),
    }
}

fn parse_reals(ln: usize, toks: &[&str], n: usize) -> Result<Vec<f64>, NativeError> {
    if toks.len() != n {
        return Err(malformed(
            ln,
            format!("expected {n} values, found {}", toks.len()),
        ));
    }
    toks.iter()
        .map(|t| parse_real(t).ok_or_else(|| malformed(ln, format!("bad real `{t}`"))))
        .collect()
}

pub fn read_native(text: &str) -> Result<MilpInstance, NativeError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (ln, header) = lines.next_record(MAGIC)?;
    if header != [MAGIC, "1"] {
        return Err(malformed(ln, "expected header `tgmilp 1`"));
    }
    let (ln, name) = expect_key(&mut lines, "name")?;
    if name.len() != 1 {
        return Err(malformed(ln, "name must be one token"));
    }
    let name = name[0].to_string();
    let (ln, t) = expect_key(&mut lines, "vars")?;
    let n = parse_count(ln, &t)?;
    let (ln, t) = expect_key(&mut lines, "cons")?;
    let m = parse_count(ln, &t)?;
    let (ln, t) = expect_key(&mut lines, "objective")?;
    let objective = parse_reals(ln, &t, n)?;
    let (ln, t) = expect_key(&mut lines, "lower")?;
    let lower_bounds = parse_reals(ln, &t, n)?;
    let (ln, t) = expect_key(&mut lines, "upper")?;
    let upper_bounds = parse_reals(ln, &t, n)?;
    let (ln, t) = expect_key(&mut lines, "integer")?;
    if t.len() != n {
        return Err(malformed(ln, format!("expected {n} integer flags")));
    }
    let is_integer = t
        .iter()
        .map(|f| match *f {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(malformed(ln, format!("bad flag `{other}`"))),
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut inst = MilpInstance {
        name,
        num_vars: n,
        num_cons: 0,
        objective,
        constraint_matrix: Vec::new(),
        row_senses: Vec::with_capacity(m),
        rhs: Vec::with_capacity(m),
        lower_bounds,
        upper_bounds,
        is_integer,
    };
    for r in 0..m {
        let (ln, t) = expect_key(&mut lines, "row")?;
        if t.len() < 3 {
            return Err(malformed(ln, "row needs sense, rhs and nnz"));
        }
        let sense = match t[0] {
            "LE" => RowSense::Le,
            "GE" => RowSense::Ge,
            "EQ" => RowSense::Eq,
            other => return Err(malformed(ln, format!("bad sense `{other}`"))),
        };
        let rhs = parse_real(t[1]).ok_or_else(|| malformed(ln, "bad rhs"))?;
        let nnz: usize = t[2].parse().map_err(|_| malformed(ln, "bad nnz"))?;
        if t.len() != 3 + 2 * nnz {
            return Err(malformed(ln, format!("expected {nnz} (col, value) pairs")));
        }
        for k in 0..nnz {
            let col: usize = t[3 + 2 * k]
                .parse()
                .map_err(|_| malformed(ln, "bad column index"))?;
            let value = parse_real(t[4 + 2 * k]).ok_or_else(|| malformed(ln, "bad coefficient"))?;
            inst.constraint_matrix.push(Entry { row: r, col, value });
        }
        inst.row_senses.push(sense);
        inst.rhs.push(rhs);
        inst.num_cons += 1;
    }
    let (ln, t) = lines.next_record("end")?;
    if t != ["end"] {
        return Err(malformed(ln, "expected `end`"));
    }
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinities_use_literals() {
        let mut inst = MilpInstance::new("inf", 1);
        inst.lower_bounds[0] = f64::NEG_INFINITY;
        inst.add_row(&[(0, 0.1)], RowSense::Ge, 1.0 / 3.0);
        let text = write_native(&inst);
        assert!(text.contains("lower -inf"));
        assert!(text.contains("upper +inf"));
        let back = read_native(&text).unwrap();
        assert_eq!(back, inst);
        assert_eq!(back.rhs[0].to_bits(), (1.0f64 / 3.0).to_bits());
    }

    #[test]
    fn truncated_input_is_an_error() {
        let inst = MilpInstance::new("t", 1);
        let text = write_native(&inst);
        let cut = text.replace("end\n", "");
        assert_eq!(read_native(&cut), Err(NativeError::UnexpectedEof("end")));
    }

    #[test]
    fn bad_line_reports_number() {
        let text = "tgmilp 1\nname x\nvars two\n";
        match read_native(text) {
            Err(NativeError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
