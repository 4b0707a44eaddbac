//! Subgroup enumeration: one categorical column sliced by value, projected
//! onto one numeric target column.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{CellValue, ColumnKind, Table};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupSpec {
    pub group_by: String,
    pub target: String,
    #[serde(default = "default_min_support")]
    pub min_support: usize,
}

fn default_min_support() -> usize {
    1
}

impl GroupSpec {
    pub fn new(group_by: impl Into<String>, target: impl Into<String>, min_support: usize) -> Self {
        GroupSpec {
            group_by: group_by.into(),
            target: target.into(),
            min_support,
        }
    }

    pub fn validate(&self, table: &Table) -> Result<()> {
        if self.group_by == self.target {
            return Err(Error::InvalidSpec(format!(
                "group_by and target are both {:?}",
                self.group_by
            )));
        }
        if self.min_support == 0 {
            return Err(Error::InvalidSpec("min_support must be at least 1".into()));
        }
        table.column_of_kind(&self.group_by, ColumnKind::Categorical)?;
        table.column_of_kind(&self.target, ColumnKind::Numeric)?;
        Ok(())
    }
}

impl fmt::Display for GroupSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} by {}", self.target, self.group_by)
    }
}

/// A group key. `Missing` is the sentinel for rows whose group-by cell is
/// missing and sorts after every value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroupKey {
    Value(String),
    Missing,
}

impl GroupKey {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            GroupKey::Value(s) => Some(s),
            GroupKey::Missing => None,
        }
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupKey::Value(s) => f.write_str(s),
            GroupKey::Missing => f.write_str("<missing>"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupId {
    pub group_by: String,
    pub target: String,
    pub key: GroupKey,
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={} [{}]", self.group_by, self.key, self.target)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub spec: GroupSpec,
    pub key: GroupKey,
    pub rows: Vec<usize>,
    pub version: u64,
}

impl Group {
    pub fn id(&self) -> GroupId {
        GroupId {
            group_by: self.spec.group_by.clone(),
            target: self.spec.target.clone(),
            key: self.key.clone(),
        }
    }

    pub fn contains(&self, row: usize) -> bool {
        self.rows.binary_search(&row).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grouping {
    pub groups: Vec<Group>,
    /// Rows belonging to groups below `min_support`.
    pub excluded_rows: usize,
}

pub fn enumerate_groups(table: &Table, spec: &GroupSpec) -> Result<Grouping> {
    spec.validate(table)?;
    let by = table.column(&spec.group_by)?;
    let mut buckets: HashMap<&str, Vec<usize>> = HashMap::new();
    let mut missing = Vec::new();
    for (row, cell) in by.cells.iter().enumerate() {
        match cell {
            CellValue::Missing => missing.push(row),
            CellValue::Text(s) => buckets.entry(s.as_str()).or_default().push(row),
            // categorical columns hold text only; numbers here are rendered
            CellValue::Number(_) => unreachable!("number cell in categorical column"),
        }
    }
    let mut keyed: Vec<(GroupKey, Vec<usize>)> = buckets
        .into_iter()
        .map(|(k, rows)| (GroupKey::Value(k.to_string()), rows))
        .collect();
    keyed.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    if !missing.is_empty() {
        keyed.push((GroupKey::Missing, missing));
    }

    let mut excluded_rows = 0;
    let groups = keyed
        .into_iter()
        .filter_map(|(key, rows)| {
            if rows.len() < spec.min_support {
                excluded_rows += rows.len();
                return None;
            }
            Some(Group {
                spec: spec.clone(),
                key,
                rows,
                version: table.version(),
            })
        })
        .collect();
    Ok(Grouping {
        groups,
        excluded_rows,
    })
}

/// Every categorical column crossed with the requested (or all) numeric columns.
pub fn enumerate_all_specs(
    table: &Table,
    targets: Option<&[String]>,
    min_support: usize,
) -> Result<Vec<GroupSpec>> {
    let categorical: Vec<&str> = table
        .columns()
        .filter(|c| c.kind == ColumnKind::Categorical)
        .map(|c| c.name.as_str())
        .collect();
    let numeric: Vec<String> = match targets {
        Some(ts) => {
            for t in ts {
                table.column_of_kind(t, ColumnKind::Numeric)?;
            }
            ts.to_vec()
        }
        None => table
            .columns()
            .filter(|c| c.kind == ColumnKind::Numeric)
            .map(|c| c.name.clone())
            .collect(),
    };
    if categorical.is_empty() {
        return Err(Error::NoCategoricalColumns);
    }
    if numeric.is_empty() {
        return Err(Error::NoNumericColumns);
    }
    Ok(categorical
        .iter()
        .flat_map(|g| {
            numeric
                .iter()
                .map(move |t| GroupSpec::new(*g, t.clone(), min_support))
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub count: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub missing_count: usize,
    pub mismatch_count: usize,
}

/// Population mean and standard deviation over the numeric cells only.
pub(crate) fn mean_std(values: impl Iterator<Item = f64> + Clone) -> Option<(f64, f64)> {
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n == 0 {
        return None;
    }
    let mean = sum / n as f64;
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    Some((mean, (ss / n as f64).sqrt()))
}

pub fn group_stats(table: &Table, group: &Group) -> Result<GroupStats> {
    if group.version != table.version() {
        return Err(Error::StaleGroup {
            group: group.version,
            table: table.version(),
        });
    }
    let target = table.column(&group.spec.target)?;
    Ok(stats_for_rows(&target.cells, &group.rows))
}

pub(crate) fn stats_for_rows(cells: &[CellValue], rows: &[usize]) -> GroupStats {
    let mut missing_count = 0;
    let mut mismatch_count = 0;
    for &r in rows {
        match cells[r] {
            CellValue::Missing => missing_count += 1,
            CellValue::Text(_) => mismatch_count += 1,
            CellValue::Number(_) => {}
        }
    }
    let numbers = rows.iter().filter_map(|&r| cells[r].as_number());
    let ms = mean_std(numbers);
    GroupStats {
        count: rows.len(),
        mean: ms.map(|m| m.0),
        std: ms.map(|m| m.1),
        missing_count,
        mismatch_count,
    }
}
