//! Free-format MPS reader for the subset the solver understands.
//!
//! Supported sections: `NAME`, `ROWS`, `COLUMNS` (with `'MARKER'`
//! `'INTORG'`/`'INTEND'` pairs), `RHS`, `BOUNDS` and `ENDATA`. Bound keys
//! `LO UP FX BV MI PL FR`. Anything else (`RANGES`, `SOS`, ...) is rejected
//! rather than mis-read.
//!
//! Integer columns declared between markers default to `[0, 1]` unless a
//! `BOUNDS` record changes their upper bound.

use super::{Entry, MilpInstance, RowSense};
use std::collections::{HashMap, HashSet};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MpsError {
    #[error("UNSUPPORTED_SECTION({0})")]
    UnsupportedSection(String),
    #[error("MALFORMED_LINE({line}): {msg}")]
    MalformedLine { line: usize, msg: String },
    #[error("DUPLICATE_ENTRY({line}): {what}")]
    DuplicateEntry { line: usize, what: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Start,
    Name,
    Rows,
    Columns,
    Rhs,
    Bounds,
    End,
}

fn malformed(line: usize, msg: impl Into<String>) -> MpsError {
    MpsError::MalformedLine {
        line,
        msg: msg.into(),
    }
}

fn number(line: usize, tok: &str) -> Result<f64, MpsError> {
    match tok.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" | "1e30" | "1e+30" => Ok(f64::INFINITY),
        "-inf" | "-infinity" | "-1e30" | "-1e+30" => Ok(f64::NEG_INFINITY),
        _ => tok
            .parse::<f64>()
            .ok()
            .filter(|v| !v.is_nan())
            .ok_or_else(|| malformed(line, format!("expected a number, found `{tok}`"))),
    }
}

struct Builder {
    name: String,
    objective_row: Option<String>,
    free_rows: HashSet<String>,
    row_index: HashMap<String, usize>,
    senses: Vec<RowSense>,
    col_index: HashMap<String, usize>,
    objective: Vec<f64>,
    entries: Vec<Entry>,
    seen_entries: HashSet<(usize, usize)>,
    is_integer: Vec<bool>,
    rhs: Vec<Option<f64>>,
    lower: Vec<Option<f64>>,
    upper: Vec<Option<f64>>,
    in_integer_block: bool,
    last_column: Option<usize>,
}

impl Builder {
    fn new() -> Self {
        Self {
            name: String::from("unnamed"),
            objective_row: None,
            free_rows: HashSet::new(),
            row_index: HashMap::new(),
            senses: Vec::new(),
            col_index: HashMap::new(),
            objective: Vec::new(),
            entries: Vec::new(),
            seen_entries: HashSet::new(),
            is_integer: Vec::new(),
            rhs: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
            in_integer_block: false,
            last_column: None,
        }
    }

    fn row(&mut self, ln: usize, toks: &[&str]) -> Result<(), MpsError> {
        let [kind, name] = toks else {
            return Err(malformed(ln, "ROWS record needs a type and a name"));
        };
        let name = name.to_string();
        if self.row_index.contains_key(&name)
            || self.objective_row.as_ref() == Some(&name)
            || self.free_rows.contains(&name)
        {
            return Err(MpsError::DuplicateEntry {
                line: ln,
                what: format!("row `{name}`"),
            });
        }
        let sense = match *kind {
            "N" => {
                if self.objective_row.is_none() {
                    self.objective_row = Some(name);
                } else {
                    self.free_rows.insert(name);
                }
                return Ok(());
            }
            "L" => RowSense::Le,
            "G" => RowSense::Ge,
            "E" => RowSense::Eq,
            other => return Err(malformed(ln, format!("unknown row type `{other}`"))),
        };
        self.row_index.insert(name, self.senses.len());
        self.senses.push(sense);
        self.rhs.push(None);
        Ok(())
    }

    fn column(&mut self, ln: usize, toks: &[&str]) -> Result<(), MpsError> {
        if toks.len() == 3 && toks[1].trim_matches('\'') == "MARKER" {
            match toks[2].trim_matches('\'') {
                "INTORG" => self.in_integer_block = true,
                "INTEND" => self.in_integer_block = false,
                other => return Err(malformed(ln, format!("unknown marker `{other}`"))),
            }
            return Ok(());
        }
        if toks.len() != 3 && toks.len() != 5 {
            return Err(malformed(
                ln,
                "COLUMNS record needs a column and 1 or 2 (row, value) pairs",
            ));
        }
        let col_name = toks[0];
        let col = match self.col_index.get(col_name) {
            Some(&c) if self.last_column == Some(c) => c,
            Some(_) => {
                return Err(MpsError::DuplicateEntry {
                    line: ln,
                    what: format!("column `{col_name}` appears in two separate blocks"),
                })
            }
            None => {
                let c = self.objective.len();
                self.col_index.insert(col_name.to_string(), c);
                self.objective.push(0.0);
                self.is_integer.push(self.in_integer_block);
                self.lower.push(None);
                self.upper.push(None);
                c
            }
        };
        self.last_column = Some(col);
        for pair in toks[1..].chunks(2) {
            let row_name = pair[0];
            let value = number(ln, pair[1])?;
            if self.objective_row.as_deref() == Some(row_name) {
                if !self.seen_entries.insert((usize::MAX, col)) {
                    return Err(MpsError::DuplicateEntry {
                        line: ln,
                        what: format!("objective coefficient of `{col_name}`"),
                    });
                }
                self.objective[col] = value;
            } else if self.free_rows.contains(row_name) {
                continue;
            } else {
                let &row = self
                    .row_index
                    .get(row_name)
                    .ok_or_else(|| malformed(ln, format!("unknown row `{row_name}`")))?;
                if !self.seen_entries.insert((row, col)) {
                    return Err(MpsError::DuplicateEntry {
                        line: ln,
                        what: format!("entry ({row_name}, {col_name})"),
                    });
                }
                if value != 0.0 {
                    self.entries.push(Entry { row, col, value });
                }
            }
        }
        Ok(())
    }

    fn rhs(&mut self, ln: usize, toks: &[&str]) -> Result<(), MpsError> {
        // An odd token count means a leading set name.
        let pairs = if toks.len() % 2 == 1 {
            &toks[1..]
        } else {
            toks
        };
        if pairs.is_empty() || pairs.len() > 4 {
            return Err(malformed(ln, "RHS record needs 1 or 2 (row, value) pairs"));
        }
        for pair in pairs.chunks(2) {
            let value = number(ln, pair[1])?;
            if self.objective_row.as_deref() == Some(pair[0]) || self.free_rows.contains(pair[0]) {
                continue;
            }
            let &row = self
                .row_index
                .get(pair[0])
                .ok_or_else(|| malformed(ln, format!("unknown row `{}`", pair[0])))?;
            if self.rhs[row].replace(value).is_some() {
                return Err(MpsError::DuplicateEntry {
                    line: ln,
                    what: format!("rhs of `{}`", pair[0]),
                });
            }
        }
        Ok(())
    }

    fn bound(&mut self, ln: usize, toks: &[&str]) -> Result<(), MpsError> {
        if toks.len() < 2 {
            return Err(malformed(ln, "BOUNDS record too short"));
        }
        let kind = toks[0];
        let needs_value = matches!(kind, "LO" | "UP" | "FX");
        let (col_name, value) = if needs_value {
            match toks.len() {
                4 => (toks[2], Some(number(ln, toks[3])?)),
                3 => (toks[1], Some(number(ln, toks[2])?)),
                _ => {
                    return Err(malformed(
                        ln,
                        format!("{kind} bound needs a column and a value"),
                    ))
                }
            }
        } else {
            match toks.len() {
                2 => (toks[1], None),
                3 if self.col_index.contains_key(toks[1]) && toks[2].parse::<f64>().is_ok() => {
                    (toks[1], None)
                }
                3 | 4 => (toks[2], None),
                _ => return Err(malformed(ln, format!("bad {kind} bound record"))),
            }
        };
        let &col = self
            .col_index
            .get(col_name)
            .ok_or_else(|| malformed(ln, format!("unknown column `{col_name}`")))?;
        match (kind, value) {
            ("LO", Some(v)) => self.lower[col] = Some(v),
            ("UP", Some(v)) => {
                if v < 0.0 && self.lower[col].is_none() {
                    self.lower[col] = Some(f64::NEG_INFINITY);
                }
                self.upper[col] = Some(v);
            }
            ("FX", Some(v)) => {
                self.lower[col] = Some(v);
                self.upper[col] = Some(v);
            }
            ("BV", _) => {
                self.is_integer[col] = true;
                self.lower[col] = Some(0.0);
                self.upper[col] = Some(1.0);
            }
            ("MI", _) => self.lower[col] = Some(f64::NEG_INFINITY),
            ("PL", _) => self.upper[col] = Some(f64::INFINITY),
            ("FR", _) => {
                self.lower[col] = Some(f64::NEG_INFINITY);
                self.upper[col] = Some(f64::INFINITY);
            }
            (other, _) => return Err(malformed(ln, format!("unsupported bound type `{other}`"))),
        }
        Ok(())
    }

    fn finish(self) -> MilpInstance {
        let n = self.objective.len();
        let lower_bounds = self.lower.iter().map(|l| l.unwrap_or(0.0)).collect();
        let upper_bounds = (0..n)
            .map(|j| match self.upper[j] {
                Some(u) => u,
                None if self.is_integer[j] => 1.0,
                None => f64::INFINITY,
            })
            .collect();
        let mut entries = self.entries;
        entries.sort_by(|a, b| (a.row, a.col).cmp(&(b.row, b.col)));
        MilpInstance {
            name: self.name,
            num_vars: n,
            num_cons: self.senses.len(),
            objective: self.objective,
            constraint_matrix: entries,
            row_senses: self.senses,
            rhs: self.rhs.into_iter().map(|b| b.unwrap_or(0.0)).collect(),
            lower_bounds,
            upper_bounds,
            is_integer: self.is_integer,
        }
    }
}

/// Parses a free-format MPS document.
pub fn parse_mps(text: &str) -> Result<MilpInstance, MpsError> {
    let mut b = Builder::new();
    let mut section = Section::Start;
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('*') {
            continue;
        }
        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        let is_header = !raw.starts_with(char::is_whitespace);
        if is_header {
            section = match toks[0] {
                "NAME" => {
                    if let Some(name) = toks.get(1) {
                        b.name = name.to_string();
                    }
                    Section::Name
                }
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" if toks.len() == 1 => Section::Rhs,
                "BOUNDS" => Section::Bounds,
                "ENDATA" => Section::End,
                "RANGES" | "SOS" | "OBJSENSE" | "QUADOBJ" | "QMATRIX" | "QSECTION"
                | "INDICATORS" | "CSECTION" | "GENERAL" => {
                    return Err(MpsError::UnsupportedSection(toks[0].to_string()))
                }
                other if other.chars().all(|c| c.is_ascii_uppercase()) && toks.len() == 1 => {
                    return Err(MpsError::UnsupportedSection(other.to_string()))
                }
                _ => {
                    // Some writers do not indent data lines; treat as data.
                    parse_data(&mut b, section, ln, &toks)?;
                    section
                }
            };
            if section == Section::End {
                break;
            }
            continue;
        }
        parse_data(&mut b, section, ln, &toks)?;
    }
    if section != Section::End {
        return Err(malformed(text.lines().count(), "missing ENDATA"));
    }
    if b.objective_row.is_none() {
        return Err(malformed(0, "no objective (N) row"));
    }
    Ok(b.finish())
}

fn parse_data(b: &mut Builder, section: Section, ln: usize, toks: &[&str]) -> Result<(), MpsError> {
    match section {
        Section::Rows => b.row(ln, toks),
        Section::Columns => b.column(ln, toks),
        Section::Rhs => b.rhs(ln, toks),
        Section::Bounds => b.bound(ln, toks),
        Section::Start | Section::Name | Section::End => {
            Err(malformed(ln, "data line outside of a section"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = "\
NAME          TINY
ROWS
 N  obj
 L  c1
COLUMNS
    MARKER                 'MARKER'                 'INTORG'
    x1        obj       -3   c1        2
    x2        obj       -4   c1        3
    MARKER                 'MARKER'                 'INTEND'
RHS
    RHS       c1        4
ENDATA
";

    #[test]
    fn markers_default_to_binary() {
        let inst = parse_mps(TINY).unwrap();
        assert_eq!(inst.name, "TINY");
        assert_eq!(inst.num_vars, 2);
        assert_eq!(inst.is_integer, vec![true, true]);
        assert_eq!(inst.upper_bounds, vec![1.0, 1.0]);
        assert_eq!(inst.lower_bounds, vec![0.0, 0.0]);
        assert_eq!(inst.objective, vec![-3.0, -4.0]);
        assert_eq!(inst.rhs, vec![4.0]);
    }

    #[test]
    fn ranges_rejected() {
        let text = TINY.replace("ENDATA", "RANGES\n    RNG c1 2\nENDATA");
        assert_eq!(
            parse_mps(&text),
            Err(MpsError::UnsupportedSection("RANGES".into()))
        );
    }

    #[test]
    fn bounds_override_integer_default() {
        let text = TINY.replace("ENDATA", "BOUNDS\n UP BND x1 5\n MI BND x2\nENDATA");
        let inst = parse_mps(&text).unwrap();
        assert_eq!(inst.upper_bounds[0], 5.0);
        assert_eq!(inst.lower_bounds[1], f64::NEG_INFINITY);
        assert_eq!(inst.upper_bounds[1], 1.0);
    }

    #[test]
    fn malformed_line_carries_number() {
        let text = TINY.replace("x2        obj       -4", "x2        obj       four");
        match parse_mps(&text) {
            Err(MpsError::MalformedLine { line, .. }) => assert_eq!(line, 8),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_row_and_entry() {
        let text = TINY.replace(" L  c1\n", " L  c1\n G  c1\n");
        assert!(matches!(
            parse_mps(&text),
            Err(MpsError::DuplicateEntry { line: 5, .. })
        ));
        let text = TINY.replace(
            "x2        obj       -4   c1        3",
            "x1        c1        3",
        );
        assert!(matches!(
            parse_mps(&text),
            Err(MpsError::DuplicateEntry { .. })
        ));
    }

    #[test]
    fn continuous_defaults() {
        let text = TINY
            .replace(
                "    MARKER                 'MARKER'                 'INTORG'\n",
                "",
            )
            .replace(
                "    MARKER                 'MARKER'                 'INTEND'\n",
                "",
            );
        let inst = parse_mps(&text).unwrap();
        assert_eq!(inst.is_integer, vec![false, false]);
        assert_eq!(inst.upper_bounds, vec![f64::INFINITY; 2]);
    }
}
