//! Columnar tables with versioning and cell-level addressing.
//!
//! Tables are immutable values. Columns are reference counted so a new
//! version only copies the columns an action actually touched.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const DEFAULT_NULL_TOKENS: [&str; 5] = ["", "NA", "N/A", "null", "NULL"];
pub const DEFAULT_NUMERIC_MAJORITY: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CellValue {
    Missing,
    Number(f64),
    Text(String),
}

impl CellValue {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            CellValue::Number(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            CellValue::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, CellValue::Missing)
    }

    /// Bitwise identity, used where "equal" must also distinguish `-0.0`.
    pub fn bit_eq(&self, other: &CellValue) -> bool {
        match (self, other) {
            (CellValue::Number(a), CellValue::Number(b)) => a.to_bits() == b.to_bits(),
            (a, b) => a == b,
        }
    }
}

impl fmt::Display for CellValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellValue::Missing => Ok(()),
            CellValue::Number(v) => f.write_str(&format_number(*v)),
            CellValue::Text(s) => f.write_str(s),
        }
    }
}

/// Shortest decimal form that parses back to the same `f64`.
pub fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        if v == 0.0 && v.is_sign_negative() {
            return "-0".to_string();
        }
        format!("{}", v as i64)
    } else {
        format!("{v:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

impl ColumnKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ColumnKind::Numeric => "numeric",
            ColumnKind::Categorical => "categorical",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    pub cells: Vec<CellValue>,
}

impl Column {
    pub fn new(name: impl Into<String>, kind: ColumnKind, cells: Vec<CellValue>) -> Self {
        Column {
            name: name.into(),
            kind,
            cells,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellRef {
    pub row: usize,
    pub column: String,
}

impl CellRef {
    pub fn new(row: usize, column: impl Into<String>) -> Self {
        CellRef {
            row,
            column: column.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    name: String,
    version: u64,
    columns: Vec<Arc<Column>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: Vec<Column>) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::MalformedCsv {
                    row: 0,
                    reason: format!("duplicate column name {:?}", c.name),
                });
            }
        }
        if let Some(first) = columns.first() {
            let n = first.cells.len();
            if let Some(bad) = columns.iter().find(|c| c.cells.len() != n) {
                return Err(Error::MalformedCsv {
                    row: 0,
                    reason: format!(
                        "column {:?} has {} cells, expected {n}",
                        bad.name,
                        bad.cells.len()
                    ),
                });
            }
        }
        Ok(Table {
            name: name.into(),
            version: 0,
            columns: columns.into_iter().map(Arc::new).collect(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub(crate) fn with_version(mut self, version: u64) -> Self {
        self.version = version;
        self
    }

    pub fn row_count(&self) -> usize {
        self.columns.first().map_or(0, |c| c.cells.len())
    }

    pub fn columns(&self) -> impl ExactSizeIterator<Item = &Column> {
        self.columns.iter().map(|c| c.as_ref())
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.as_ref())
            .ok_or_else(|| Error::ColumnNotFound(name.to_string()))
    }

    pub fn column_of_kind(&self, name: &str, kind: ColumnKind) -> Result<&Column> {
        let col = self.column(name)?;
        if col.kind != kind {
            return Err(Error::KindMismatch {
                column: name.to_string(),
                expected: kind.as_str(),
                found: col.kind.as_str(),
            });
        }
        Ok(col)
    }

    pub(crate) fn column_mut(&mut self, idx: usize) -> &mut Column {
        Arc::make_mut(&mut self.columns[idx])
    }

    pub fn cell(&self, cell: &CellRef) -> Option<&CellValue> {
        self.column(&cell.column).ok()?.cells.get(cell.row)
    }

    pub fn row(&self, row: usize) -> Vec<CellValue> {
        self.columns.iter().map(|c| c.cells[row].clone()).collect()
    }

    pub fn kinds(&self) -> Vec<(String, ColumnKind)> {
        self.columns
            .iter()
            .map(|c| (c.name.clone(), c.kind))
            .collect()
    }

    /// Re-types cells to match the given schema, the way [`infer_kinds`]
    /// would have if it had chosen those kinds.
    pub fn coerce_kinds(&self, kinds: &[(String, ColumnKind)]) -> Result<Table> {
        let mut out = self.clone();
        for (name, kind) in kinds {
            let idx = out
                .column_index(name)
                .ok_or_else(|| Error::ColumnNotFound(name.clone()))?;
            let col = out.column_mut(idx);
            col.kind = *kind;
            for cell in col.cells.iter_mut() {
                retype_cell(cell, *kind);
            }
        }
        Ok(out)
    }

    /// SHA-256 over the canonical CSV rendering plus the column kinds.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for c in &self.columns {
            hasher.update(c.kind.as_str().as_bytes());
            hasher.update([0u8]);
        }
        hasher.update(serialize_csv(self, &CsvOptions::default()).as_bytes());
        hex(&hasher.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn retype_cell(cell: &mut CellValue, kind: ColumnKind) {
    match (kind, &*cell) {
        (ColumnKind::Numeric, CellValue::Text(s)) => {
            if let Some(v) = parse_numeric_cell(s) {
                *cell = CellValue::Number(v);
            }
        }
        (ColumnKind::Categorical, CellValue::Number(v)) => {
            *cell = CellValue::Text(format_number(*v));
        }
        _ => {}
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvOptions {
    pub delimiter: char,
    pub null_tokens: Vec<String>,
    pub has_header: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            delimiter: ',',
            null_tokens: DEFAULT_NULL_TOKENS.iter().map(|s| s.to_string()).collect(),
            has_header: true,
        }
    }
}

struct Field {
    text: String,
    quoted: bool,
}

/// Splits RFC 4180 records. Returns the record index of any unterminated quote.
fn split_records(input: &str, delimiter: char) -> Result<Vec<Vec<Field>>> {
    let mut records = Vec::new();
    let mut record = Vec::new();
    let mut field = String::new();
    let mut quoted = false;
    let mut in_quotes = false;
    let mut chars = input.chars().peekable();
    let mut at_field_start = true;

    while let Some(c) = chars.next() {
        if in_quotes {
            if c == '"' {
                if chars.peek() == Some(&'"') {
                    chars.next();
                    field.push('"');
                } else {
                    in_quotes = false;
                }
            } else {
                field.push(c);
            }
            continue;
        }
        match c {
            '"' if at_field_start => {
                in_quotes = true;
                quoted = true;
                at_field_start = false;
            }
            '"' if quoted => {
                return Err(Error::MalformedCsv {
                    row: records.len(),
                    reason: "unexpected quote after closing quote".into(),
                });
            }
            c if c == delimiter => {
                record.push(Field {
                    text: std::mem::take(&mut field),
                    quoted,
                });
                quoted = false;
                at_field_start = true;
            }
            '\r' | '\n' => {
                if c == '\r' && chars.peek() == Some(&'\n') {
                    chars.next();
                }
                record.push(Field {
                    text: std::mem::take(&mut field),
                    quoted,
                });
                records.push(std::mem::take(&mut record));
                quoted = false;
                at_field_start = true;
            }
            c => {
                if quoted {
                    return Err(Error::MalformedCsv {
                        row: records.len(),
                        reason: "text after closing quote".into(),
                    });
                }
                field.push(c);
                at_field_start = false;
            }
        }
    }
    if in_quotes {
        return Err(Error::MalformedCsv {
            row: records.len(),
            reason: "unterminated quoted field".into(),
        });
    }
    // a trailing newline does not open a new record
    if !at_field_start || quoted || !record.is_empty() {
        record.push(Field {
            text: field,
            quoted,
        });
        records.push(record);
    }
    Ok(records)
}

/// Parses CSV bytes into an untyped table: every cell is `Text` or `Missing`.
///
/// Unquoted fields equal to a null token become `Missing`; quoted fields are
/// always kept as text.
pub fn load_csv(bytes: &[u8], options: &CsvOptions) -> Result<Table> {
    let bytes = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes);
    let input = std::str::from_utf8(bytes).map_err(|e| Error::MalformedCsv {
        row: 0,
        reason: format!("invalid utf-8: {e}"),
    })?;
    let records = split_records(input, options.delimiter)?;
    let mut records = records.into_iter();

    let (names, first_data_row): (Vec<String>, usize) = if options.has_header {
        let header = records.next().ok_or(Error::EmptyInput)?;
        (header.into_iter().map(|f| f.text).collect(), 1)
    } else {
        (Vec::new(), 0)
    };
    let records: Vec<Vec<Field>> = records.collect();
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let names = if options.has_header {
        names
    } else {
        (1..=records[0].len()).map(|i| format!("column_{i}")).collect()
    };

    let width = names.len();
    let mut cells: Vec<Vec<CellValue>> = (0..width)
        .map(|_| Vec::with_capacity(records.len()))
        .collect();
    for (i, record) in records.into_iter().enumerate() {
        if record.len() != width {
            return Err(Error::MalformedCsv {
                row: i + first_data_row,
                reason: format!("expected {width} fields, found {}", record.len()),
            });
        }
        for (col, field) in cells.iter_mut().zip(record) {
            let missing = !field.quoted && options.null_tokens.contains(&field.text);
            col.push(if missing {
                CellValue::Missing
            } else {
                CellValue::Text(field.text)
            });
        }
    }
    let columns = names
        .into_iter()
        .zip(cells)
        .map(|(name, cells)| Column::new(name, ColumnKind::Categorical, cells))
        .collect();
    Table::new("", columns)
}

fn needs_quotes(text: &str, options: &CsvOptions) -> bool {
    text.is_empty()
        || text.contains(options.delimiter)
        || text.contains(['"', '\r', '\n'])
        || options.null_tokens.iter().any(|t| t == text)
}

pub fn serialize_csv(table: &Table, options: &CsvOptions) -> String {
    let mut out = String::new();
    let delim = options.delimiter;
    let push_text = |out: &mut String, text: &str| {
        if needs_quotes(text, options) {
            out.push('"');
            out.push_str(&text.replace('"', "\"\""));
            out.push('"');
        } else {
            out.push_str(text);
        }
    };
    if options.has_header {
        for (i, c) in table.columns().enumerate() {
            if i > 0 {
                out.push(delim);
            }
            if c.name.is_empty() || c.name.contains(delim) || c.name.contains(['"', '\r', '\n']) {
                push_text(&mut out, &c.name);
            } else {
                out.push_str(&c.name);
            }
        }
        out.push('\n');
    }
    for row in 0..table.row_count() {
        for (i, c) in table.columns().enumerate() {
            if i > 0 {
                out.push(delim);
            }
            match &c.cells[row] {
                CellValue::Missing => {}
                CellValue::Number(v) => out.push_str(&format_number(*v)),
                CellValue::Text(s) => push_text(&mut out, s),
            }
        }
        out.push('\n');
    }
    out
}

/// Strict numeric parse: optional sign, digits with at most one decimal
/// point, optional exponent. No whitespace, separators or suffixes.
pub fn parse_numeric_cell(text: &str) -> Option<f64> {
    let b = text.as_bytes();
    let mut i = 0;
    if matches!(b.first(), Some(b'+' | b'-')) {
        i += 1;
    }
    let int_start = i;
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    let mut digits = i - int_start;
    if i < b.len() && b[i] == b'.' {
        i += 1;
        let frac_start = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        digits += i - frac_start;
    }
    if digits == 0 {
        return None;
    }
    if i < b.len() && matches!(b[i], b'e' | b'E') {
        i += 1;
        if i < b.len() && matches!(b[i], b'+' | b'-') {
            i += 1;
        }
        let exp_start = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        if i == exp_start {
            return None;
        }
    }
    if i != b.len() {
        return None;
    }
    text.parse::<f64>().ok().filter(|v| v.is_finite())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferOptions {
    pub numeric_majority: f64,
    pub null_tokens: Vec<String>,
}

impl Default for InferOptions {
    fn default() -> Self {
        InferOptions {
            numeric_majority: DEFAULT_NUMERIC_MAJORITY,
            null_tokens: DEFAULT_NULL_TOKENS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Assigns column kinds by numeric majority using the default null tokens.
pub fn infer_kinds(table: &Table, numeric_majority: f64) -> Table {
    infer_kinds_with(
        table,
        &InferOptions {
            numeric_majority,
            ..InferOptions::default()
        },
    )
}

pub fn infer_kinds_with(table: &Table, options: &InferOptions) -> Table {
    let mut out = table.clone();
    for idx in 0..out.columns.len() {
        let col = out.column_mut(idx);
        for cell in col.cells.iter_mut() {
            if let CellValue::Text(s) = cell {
                if s.is_empty() || options.null_tokens.iter().any(|t| t == s) {
                    *cell = CellValue::Missing;
                }
            }
        }
        let mut present = 0usize;
        let mut numeric = 0usize;
        for cell in &col.cells {
            match cell {
                CellValue::Missing => {}
                CellValue::Number(_) => {
                    present += 1;
                    numeric += 1;
                }
                CellValue::Text(s) => {
                    present += 1;
                    if parse_numeric_cell(s).is_some() {
                        numeric += 1;
                    }
                }
            }
        }
        let kind = if present > 0 && numeric as f64 / present as f64 >= options.numeric_majority {
            ColumnKind::Numeric
        } else {
            ColumnKind::Categorical
        };
        col.kind = kind;
        for cell in col.cells.iter_mut() {
            retype_cell(cell, kind);
        }
    }
    out
}

/// Structural equality with an absolute tolerance on numeric cells.
pub fn table_equals(a: &Table, b: &Table, tol: f64) -> bool {
    if a.columns.len() != b.columns.len() || a.row_count() != b.row_count() {
        return false;
    }
    a.columns().zip(b.columns()).all(|(x, y)| {
        x.name == y.name
            && x.kind == y.kind
            && x.cells.iter().zip(&y.cells).all(|(p, q)| match (p, q) {
                (CellValue::Number(u), CellValue::Number(v)) => {
                    u.to_bits() == v.to_bits() || (u - v).abs() <= tol
                }
                (p, q) => p == q,
            })
    })
}
