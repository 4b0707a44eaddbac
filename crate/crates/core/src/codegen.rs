//! Emits a standalone Python 3 script that replays a session's committed
//! actions against the original CSV file.
//!
//! The script keeps rows in a dict keyed by their position in the original
//! file, so every row reference is translated once, here, from the
//! version-local index it had when the action was committed.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::repair::{apply_action_with, RepairAction, WranglerRegistry};
use crate::session::Session;
use crate::table::{CellRef, CellValue, ColumnKind, CsvOptions, Table};

pub const LANGUAGE_TAG: &str = "python3";
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptArtifact {
    pub source_text: String,
    pub language_tag: String,
    pub input_ref: String,
    pub action_count: usize,
    /// False when some action could only be emitted as a TODO block.
    pub verifiable: bool,
    /// Positions (in commit order) of actions emitted as TODO blocks.
    #[serde(default)]
    pub unsupported: Vec<usize>,
}

impl ScriptArtifact {
    /// Fails with `UnsupportedAction` unless every action was translated.
    pub fn require_verifiable(&self) -> Result<&Self> {
        match self.unsupported.first() {
            None => Ok(self),
            Some(i) => Err(Error::UnsupportedAction(format!(
                "action {i} uses a custom wrangler without a code template"
            ))),
        }
    }
}

pub fn generate_script(session: &Session) -> Result<ScriptArtifact> {
    let actions: Vec<RepairAction> = session.undo_stack().iter().map(|e| e.action.clone()).collect();
    generate(
        session.original(),
        session.csv_options(),
        &actions,
        &session.extensions().wranglers,
    )
}

/// Script for `actions` applied in order to `original`, which must be the
/// typed table as loaded from the input file.
pub fn generate(
    original: &Table,
    csv_options: &CsvOptions,
    actions: &[RepairAction],
    wranglers: &WranglerRegistry,
) -> Result<ScriptArtifact> {
    let input_ref = if original.name().is_empty() {
        "input.csv".to_string()
    } else {
        original.name().to_string()
    };
    let mut src = String::new();
    header(&mut src, original, csv_options, &input_ref, actions.len());

    // positions in the original file of the current table's rows
    let mut origin: Vec<usize> = (0..original.row_count()).collect();
    let mut table = original.clone();
    let mut unsupported = Vec::new();

    for (i, action) in actions.iter().enumerate() {
        let result = apply_action_with(&table, action, &[], wranglers).map_err(|e| match e {
            Error::InSpec { .. } => e,
            e => Error::InvalidAction(format!("action {i} does not replay: {e}")),
        })?;
        let _ = writeln!(src, "\n# step {}: {}", i + 1, action.tag());
        match action {
            RepairAction::ImputeGroupMean { cells, .. } | RepairAction::ImputeColumnMean { cells } => {
                for (column, rows) in by_column(cells, &origin) {
                    let cell = CellRef::new(cells.iter().find(|c| c.column == column).unwrap().row, &column);
                    let value = result.new_table.cell(&cell).and_then(CellValue::as_number).unwrap_or(f64::NAN);
                    let _ = writeln!(
                        src,
                        "for r in {}:\n    rows[r][COL[{}]] = {}",
                        tuple(&rows),
                        py_str(&column),
                        py_float(value)
                    );
                }
            }
            RepairAction::ConvertCells { cells } => {
                for (column, rows) in by_column(cells, &origin) {
                    let _ = writeln!(
                        src,
                        "c = COL[{}]\nfor r in {}:\n    rows[r][c] = convert_numeric(rows[r][c])",
                        py_str(&column),
                        tuple(&rows)
                    );
                }
            }
            RepairAction::MergeGroups {
                column,
                source_key,
                dest_key,
            } => {
                let _ = writeln!(
                    src,
                    "c = COL[{}]\nfor row in rows.values():\n    if row[c] == {}:\n        row[c] = {}",
                    py_str(column),
                    py_str(source_key),
                    py_str(dest_key)
                );
            }
            RepairAction::RemoveRows { rows } => {
                let orig: Vec<usize> = rows.iter().map(|&r| origin[r]).collect();
                let _ = writeln!(src, "for r in {}:\n    del rows[r]", tuple(&orig));
                let mut k = 0;
                origin.retain(|_| {
                    k += 1;
                    rows.binary_search(&(k - 1)).is_err()
                });
            }
            RepairAction::Custom { wrangler, cells } => {
                let template = wranglers.get(wrangler).and_then(|w| w.python_template());
                match template {
                    Some(expr) => {
                        let _ = writeln!(src, "def wrangler_{}(value):\n    return {}", i + 1, expr);
                        for (column, rows) in by_column(cells, &origin) {
                            let _ = writeln!(
                                src,
                                "c = COL[{}]\nfor r in {}:\n    rows[r][c] = wrangler_{}(rows[r][c])",
                                py_str(&column),
                                tuple(&rows),
                                i + 1
                            );
                        }
                    }
                    None => {
                        unsupported.push(i);
                        let params = serde_json::to_string(action).expect("actions serialize");
                        let _ = writeln!(
                            src,
                            "# TODO: custom wrangler {wrangler:?} has no code template; apply it by hand.\n\
                             # The output of this script will differ from the session until then.\n\
                             # parameters: {params}"
                        );
                    }
                }
            }
        }
        table = result.new_table;
    }

    src.push_str("\nsave(OUTPUT, header, rows)\n");
    Ok(ScriptArtifact {
        source_text: src,
        language_tag: LANGUAGE_TAG.to_string(),
        input_ref,
        action_count: actions.len(),
        verifiable: unsupported.is_empty(),
        unsupported,
    })
}

/// Original row positions per column, columns in first-seen order.
fn by_column(cells: &[CellRef], origin: &[usize]) -> Vec<(String, Vec<usize>)> {
    let mut out: Vec<(String, Vec<usize>)> = Vec::new();
    let mut slot: BTreeMap<&str, usize> = BTreeMap::new();
    for c in cells {
        let i = *slot.entry(&c.column).or_insert_with(|| {
            out.push((c.column.clone(), Vec::new()));
            out.len() - 1
        });
        out[i].1.push(origin[c.row]);
    }
    out
}

fn py_str(s: &str) -> String {
    // JSON string literals are valid Python string literals
    serde_json::to_string(s).expect("strings serialize")
}

fn py_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else {
        "float(\"nan\")".to_string()
    }
}

fn tuple(items: &[usize]) -> String {
    let body: Vec<String> = items.iter().map(usize::to_string).collect();
    if body.len() == 1 {
        format!("({},)", body[0])
    } else {
        format!("({})", body.join(", "))
    }
}

fn header(src: &mut String, original: &Table, options: &CsvOptions, input_ref: &str, actions: usize) {
    let numeric: Vec<String> = original
        .kinds()
        .into_iter()
        .filter(|(_, k)| *k == ColumnKind::Numeric)
        .map(|(n, _)| py_str(&n))
        .collect();
    let nulls: Vec<String> = options.null_tokens.iter().map(|t| py_str(t)).collect();
    let stem = input_ref.strip_suffix(".csv").unwrap_or(input_ref);
    let _ = write!(
        src,
        r#"#!/usr/bin/env python3
# Replays a recorded wrangling session on its input file.
# input: {input_ref}
# input sha256: {fingerprint}
# engine: wrangle {ENGINE_VERSION}
# actions: {actions}
#
# usage: python3 script.py [INPUT] [OUTPUT]
import csv
import math
import re
import sys

INPUT = sys.argv[1] if len(sys.argv) > 1 else {input_lit}
OUTPUT = sys.argv[2] if len(sys.argv) > 2 else {output_lit}
DELIMITER = {delim}
HAS_HEADER = {has_header}
NULL_TOKENS = {{{nulls}}}
NUMERIC_COLUMNS = {{{numeric}}}

_NUMBER = re.compile(r"[+-]?(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)(?:[eE][+-]?[0-9]+)?")
_CONVERTIBLE = re.compile(r"[$€£]?([+-]?)([0-9]{{1,3}}(?:,[0-9]{{3}})+|[0-9]+)(\.[0-9]+)?([kKmMbB]?)")
_SUFFIX = {{"": 1.0, "k": 1e3, "m": 1e6, "b": 1e9}}


def parse_number(text):
    if not _NUMBER.fullmatch(text):
        return None
    value = float(text)
    return value if math.isfinite(value) else None


def convert_numeric(value):
    if not isinstance(value, str):
        raise ValueError("not convertible: %r" % (value,))
    m = _CONVERTIBLE.fullmatch(value.strip())
    if not m:
        raise ValueError("not convertible: %r" % (value,))
    sign, digits, frac, suffix = m.groups()
    number = float(sign + digits.replace(",", "") + (frac or "")) * _SUFFIX[suffix.lower()]
    if not math.isfinite(number):
        raise ValueError("not convertible: %r" % (value,))
    return number


def format_number(v):
    if v == int(v) and abs(v) < 1e15:
        return "-0" if v == 0 and math.copysign(1.0, v) < 0 else str(int(v))
    return repr(v)


def render(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return format_number(value)
    if (value == "" or DELIMITER in value or any(c in value for c in "\"\r\n")
            or value in NULL_TOKENS):
        return '"' + value.replace('"', '""') + '"'
    return value


def load(path):
    with open(path, newline="", encoding="utf-8-sig") as f:
        records = [r if r else [""] for r in csv.reader(f, delimiter=DELIMITER)]
    if HAS_HEADER:
        header = records.pop(0)
    else:
        header = ["column_%d" % (i + 1) for i in range(len(records[0]))]
    rows = {{}}
    for i, record in enumerate(records):
        row = []
        for name, text in zip(header, record):
            if text == "" or text in NULL_TOKENS:
                row.append(None)
            elif name in NUMERIC_COLUMNS:
                number = parse_number(text)
                row.append(text if number is None else number)
            else:
                row.append(text)
        rows[i] = row
    return header, rows


def save(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as f:
        if HAS_HEADER:
            f.write(DELIMITER.join(render(h) if h == "" or DELIMITER in h or any(c in h for c in "\"\r\n") else h
                                   for h in header) + "\n")
        for row in rows.values():
            f.write(DELIMITER.join(render(v) for v in row) + "\n")


header, rows = load(INPUT)
COL = {{name: i for i, name in enumerate(header)}}
"#,
        fingerprint = original.fingerprint(),
        input_lit = py_str(input_ref),
        output_lit = py_str(&format!("{stem}.wrangled.csv")),
        delim = py_str(&options.delimiter.to_string()),
        has_header = if options.has_header { "True" } else { "False" },
        nulls = nulls.join(", "),
        numeric = numeric.join(", "),
    );
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anomaly::DetectorConfig;
    use crate::groups::GroupSpec;
    use crate::session::{Extensions, Session};

    fn session(csv: &str) -> Session {
        Session::from_csv(
            csv.as_bytes(),
            "data.csv",
            CsvOptions::default(),
            DetectorConfig::default(),
            Some(vec![GroupSpec::new("c", "v", 1)]),
            Extensions::default(),
        )
        .unwrap()
    }

    #[test]
    fn empty_session_is_load_and_save() {
        let s = session("c,v\na,1\nb,2\n");
        let a = generate_script(&s).unwrap();
        assert_eq!(a.action_count, 0);
        assert!(a.verifiable);
        assert_eq!(a.input_ref, "data.csv");
        assert!(a.source_text.contains(&s.original().fingerprint()));
        assert!(!a.source_text.contains("# step"));
        assert!(a.source_text.trim_end().ends_with("save(OUTPUT, header, rows)"));
    }

    #[test]
    fn removed_rows_are_translated_to_original_positions() {
        let mut s = session("c,v\na,1\nb,2\nc,3\nd,4\n");
        s.commit(RepairAction::RemoveRows { rows: vec![0] }).unwrap();
        s.commit(RepairAction::RemoveRows { rows: vec![1] }).unwrap();
        s.commit(RepairAction::ImputeColumnMean {
            cells: vec![CellRef::new(1, "v")],
        })
        .unwrap();
        let src = generate_script(&s).unwrap().source_text;
        assert!(src.contains("for r in (0,):\n    del rows[r]"));
        // version-local row 1 is original row 2 after both removals
        assert!(src.contains("for r in (2,):\n    del rows[r]"));
        assert!(src.contains("for r in (3,):\n    rows[r][COL[\"v\"]] = 3.0"));
    }

    #[test]
    fn deterministic() {
        let mut s = session("c,v\na,1\na,\nb,12k\nb,3\n");
        s.commit(RepairAction::ConvertCells {
            cells: vec![CellRef::new(2, "v")],
        })
        .unwrap();
        let a = generate_script(&s).unwrap();
        let b = generate_script(&s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn custom_without_template_is_flagged() {
        struct Abs;
        impl crate::repair::Wrangler for Abs {
            fn id(&self) -> &str {
                "abs"
            }
            fn anomaly_id(&self) -> &str {
                "neg"
            }
            fn transform(&self, cell: &CellValue) -> std::result::Result<CellValue, String> {
                cell.as_number().map(|v| CellValue::Number(v.abs())).ok_or("not a number".into())
            }
        }
        let mut ext = Extensions::default();
        ext.wranglers.register(std::sync::Arc::new(Abs));
        let mut s = Session::from_csv(
            b"c,v\na,-1\na,2\n",
            "d.csv",
            CsvOptions::default(),
            DetectorConfig::default(),
            None,
            ext,
        )
        .unwrap();
        s.commit(RepairAction::Custom {
            wrangler: "abs".into(),
            cells: vec![CellRef::new(0, "v")],
        })
        .unwrap();
        let a = generate_script(&s).unwrap();
        assert!(!a.verifiable);
        assert_eq!(a.unsupported, [0]);
        assert!(a.source_text.contains("# TODO"));
        assert_eq!(a.require_verifiable().unwrap_err().code(), "UNSUPPORTED_ACTION");
    }

    #[test]
    fn literals() {
        assert_eq!(tuple(&[3]), "(3,)");
        assert_eq!(tuple(&[1, 2]), "(1, 2)");
        assert_eq!(py_str("a\"b\n"), "\"a\\\"b\\n\"");
        assert_eq!(py_float(0.1 + 0.2), "0.30000000000000004");
    }
}
