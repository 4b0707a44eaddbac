//! Repair actions: suggestion, application, and exact inverses.

mod convert;
mod similarity;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::anomaly::{AnomalyRecord, AnomalyType};
use crate::error::{Error, Result};
use crate::groups::{mean_std, stats_for_rows, Group, GroupId, GroupKey, GroupStats};
use crate::table::{CellRef, CellValue, ColumnKind, Table};

pub use convert::convert_numeric_string;
pub use similarity::{key_similarity, suggest_merge_target, DefaultSimilarity, Similarity, DEFAULT_MIN_SIMILARITY};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum RepairAction {
    ImputeGroupMean { cells: Vec<CellRef>, group: GroupId },
    ImputeColumnMean { cells: Vec<CellRef> },
    RemoveRows { rows: Vec<usize> },
    ConvertCells { cells: Vec<CellRef> },
    MergeGroups {
        column: String,
        source_key: String,
        dest_key: String,
    },
    /// A registered [`Wrangler`] applied cell by cell.
    Custom { wrangler: String, cells: Vec<CellRef> },
}

impl RepairAction {
    pub fn tag(&self) -> &'static str {
        match self {
            RepairAction::ImputeGroupMean { .. } => "impute_group_mean",
            RepairAction::ImputeColumnMean { .. } => "impute_column_mean",
            RepairAction::RemoveRows { .. } => "remove_rows",
            RepairAction::ConvertCells { .. } => "convert_cells",
            RepairAction::MergeGroups { .. } => "merge_groups",
            RepairAction::Custom { .. } => "custom",
        }
    }

    /// Sorts and de-duplicates cell and row lists.
    pub fn normalized(mut self) -> Self {
        match &mut self {
            RepairAction::ImputeGroupMean { cells, .. }
            | RepairAction::ImputeColumnMean { cells }
            | RepairAction::ConvertCells { cells }
            | RepairAction::Custom { cells, .. } => {
                cells.sort();
                cells.dedup();
            }
            RepairAction::RemoveRows { rows } => {
                rows.sort_unstable();
                rows.dedup();
            }
            RepairAction::MergeGroups { .. } => {}
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let sorted_cells = |cells: &[CellRef]| {
            if cells.is_empty() {
                return Err(Error::InvalidAction(format!("{}: empty cell list", self.tag())));
            }
            if cells.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidAction(format!(
                    "{}: cells must be sorted and unique",
                    self.tag()
                )));
            }
            Ok(())
        };
        match self {
            RepairAction::ImputeGroupMean { cells, .. }
            | RepairAction::ImputeColumnMean { cells }
            | RepairAction::ConvertCells { cells }
            | RepairAction::Custom { cells, .. } => sorted_cells(cells),
            RepairAction::RemoveRows { rows } => {
                if rows.is_empty() {
                    return Err(Error::InvalidAction("remove_rows: empty row list".into()));
                }
                if rows.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidAction(
                        "remove_rows: rows must be sorted and unique".into(),
                    ));
                }
                Ok(())
            }
            RepairAction::MergeGroups {
                source_key,
                dest_key,
                ..
            } => {
                if source_key == dest_key {
                    return Err(Error::InvalidAction(
                        "merge_groups: source and destination keys are equal".into(),
                    ));
                }
                Ok(())
            }
        }
    }
}

/// What undoing an action needs: prior cell values, or full removed rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InverseRecord {
    CellRestores { cells: Vec<(CellRef, CellValue)> },
    /// `(index in the prior table, row values)`, ascending by index.
    RowReinserts { rows: Vec<(usize, Vec<CellValue>)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupShift {
    pub group: GroupId,
    pub before: f64,
    pub after: f64,
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ActionDiff {
    pub cells_changed: usize,
    pub rows_removed: usize,
    pub affected_groups: Vec<GroupId>,
    /// One entry per supplied group whose mean is defined before and after.
    pub mean_shift_per_group: Vec<GroupShift>,
}

#[derive(Debug, Clone)]
pub struct ActionResult {
    pub new_table: Table,
    pub inverse: InverseRecord,
    pub diff: ActionDiff,
}

/// A user-registered repair for custom anomaly types.
pub trait Wrangler: Send + Sync {
    fn id(&self) -> &str;
    /// The custom anomaly id this wrangler is offered for.
    fn anomaly_id(&self) -> &str;
    fn transform(&self, cell: &CellValue) -> std::result::Result<CellValue, String>;
    /// Python expression over `value` used by script generation.
    fn python_template(&self) -> Option<String> {
        None
    }
}

#[derive(Clone, Default)]
pub struct WranglerRegistry {
    wranglers: BTreeMap<String, Arc<dyn Wrangler>>,
}

impl std::fmt::Debug for WranglerRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.wranglers.keys()).finish()
    }
}

impl WranglerRegistry {
    pub fn register(&mut self, wrangler: Arc<dyn Wrangler>) {
        self.wranglers.insert(wrangler.id().to_string(), wrangler);
    }

    pub fn get(&self, id: &str) -> Option<&Arc<dyn Wrangler>> {
        self.wranglers.get(id)
    }

    pub fn for_anomaly<'a>(&'a self, anomaly_id: &'a str) -> impl Iterator<Item = &'a Arc<dyn Wrangler>> {
        self.wranglers.values().filter(move |w| w.anomaly_id() == anomaly_id)
    }
}

pub struct RepairOptions<'a> {
    pub min_similarity: f64,
    pub similarity: &'a dyn Similarity,
    pub wranglers: &'a WranglerRegistry,
}

impl Default for RepairOptions<'static> {
    fn default() -> Self {
        static EMPTY: std::sync::OnceLock<WranglerRegistry> = std::sync::OnceLock::new();
        RepairOptions {
            min_similarity: DEFAULT_MIN_SIMILARITY,
            similarity: &DefaultSimilarity,
            wranglers: EMPTY.get_or_init(WranglerRegistry::default),
        }
    }
}

fn check_record(record: &AnomalyRecord, table: &Table) -> Result<()> {
    let by = table
        .column(&record.group.group_by)
        .map_err(|_| Error::StaleRecord(format!("no column {:?}", record.group.group_by)))?;
    for c in &record.cells {
        if c.column != record.group.target {
            return Err(Error::StaleRecord(format!("cell {c:?} is outside the target column")));
        }
        let Some(cell) = table.cell(c) else {
            return Err(Error::StaleRecord(format!("cell {c:?} does not exist")));
        };
        let still_anomalous = match record.kind {
            AnomalyType::MissingValue => cell.is_missing(),
            AnomalyType::TypeMismatch => matches!(cell, CellValue::Text(_)),
            AnomalyType::Outlier => matches!(cell, CellValue::Number(_)),
            _ => true,
        };
        if !still_anomalous {
            return Err(Error::StaleRecord(format!("cell {c:?} no longer matches {}", record.kind)));
        }
        if !key_matches(&by.cells[c.row], &record.group.key) {
            return Err(Error::StaleRecord(format!("row {} left group {}", c.row, record.group)));
        }
    }
    Ok(())
}

fn key_matches(cell: &CellValue, key: &GroupKey) -> bool {
    match (cell, key) {
        (CellValue::Missing, GroupKey::Missing) => true,
        (CellValue::Text(s), GroupKey::Value(k)) => s == k,
        _ => false,
    }
}

/// Ranked candidate repairs for one anomaly. `groups` are the current groups
/// of the record's spec.
pub fn suggest_repairs(
    record: &AnomalyRecord,
    table: &Table,
    groups: &[Group],
    options: &RepairOptions<'_>,
) -> Result<Vec<RepairAction>> {
    check_record(record, table)?;
    let cells = || {
        let mut c = record.cells.clone();
        c.sort();
        c.dedup();
        c
    };
    let rows = || {
        let mut r = record.rows();
        r.sort_unstable();
        r.dedup();
        r
    };
    let group_mean = || RepairAction::ImputeGroupMean {
        cells: cells(),
        group: record.group.clone(),
    };
    let column_mean = || RepairAction::ImputeColumnMean { cells: cells() };
    let remove = || RepairAction::RemoveRows { rows: rows() };

    Ok(match &record.kind {
        AnomalyType::MissingValue => vec![group_mean(), column_mean(), remove()],
        AnomalyType::Outlier => vec![remove(), group_mean(), column_mean()],
        AnomalyType::TypeMismatch => {
            let convertible = record.cells.iter().all(|c| {
                table
                    .cell(c)
                    .and_then(CellValue::as_text)
                    .and_then(convert_numeric_string)
                    .is_some()
            });
            let mut out = Vec::new();
            if convertible {
                out.push(RepairAction::ConvertCells { cells: cells() });
            }
            out.push(remove());
            out
        }
        AnomalyType::IncompleteGroup => {
            let small = groups
                .iter()
                .find(|g| g.id() == record.group)
                .ok_or_else(|| Error::StaleRecord(format!("group {} no longer exists", record.group)))?;
            let others: Vec<Group> = groups
                .iter()
                .filter(|g| g.key != small.key && g.key != GroupKey::Missing)
                .cloned()
                .collect();
            let mut out = Vec::new();
            if let (Some(dest), GroupKey::Value(source)) = (
                suggest_merge_target(small, &others, options.min_similarity, options.similarity),
                &small.key,
            ) {
                out.push(RepairAction::MergeGroups {
                    column: record.group.group_by.clone(),
                    source_key: source.clone(),
                    dest_key: dest.key.as_str().unwrap_or_default().to_string(),
                });
            }
            if small.rows.len() < table.row_count() {
                out.push(RepairAction::RemoveRows {
                    rows: small.rows.clone(),
                });
            }
            if out.is_empty() {
                return Err(Error::NoSuggestion(format!(
                    "group {} has no merge candidate and holds every row",
                    record.group
                )));
            }
            out
        }
        AnomalyType::Custom(id) => {
            let mut out = vec![remove()];
            out.extend(options.wranglers.for_anomaly(id).map(|w| RepairAction::Custom {
                wrangler: w.id().to_string(),
                cells: cells(),
            }));
            out
        }
    })
}

fn column_idx(table: &Table, name: &str) -> Result<usize> {
    table
        .column_index(name)
        .ok_or_else(|| Error::StaleAction(format!("no column {name:?}")))
}

fn check_cells(table: &Table, cells: &[CellRef]) -> Result<()> {
    for c in cells {
        column_idx(table, &c.column)?;
        if c.row >= table.row_count() {
            return Err(Error::StaleAction(format!(
                "row {} out of range ({} rows)",
                c.row,
                table.row_count()
            )));
        }
    }
    Ok(())
}

/// Writes new values into cells, returning the prior values.
fn write_cells(table: &mut Table, writes: Vec<(CellRef, CellValue)>) -> Result<Vec<(CellRef, CellValue)>> {
    let mut prior = Vec::with_capacity(writes.len());
    for (cref, value) in writes {
        let idx = column_idx(table, &cref.column)?;
        let col = table.column_mut(idx);
        let old = std::mem::replace(&mut col.cells[cref.row], value);
        prior.push((cref, old));
    }
    Ok(prior)
}

fn numeric_column(table: &Table, name: &str) -> Result<usize> {
    let idx = column_idx(table, name)?;
    let col = table.columns().nth(idx).expect("index from lookup");
    if col.kind != ColumnKind::Numeric {
        return Err(Error::KindMismatch {
            column: name.to_string(),
            expected: ColumnKind::Numeric.as_str(),
            found: col.kind.as_str(),
        });
    }
    Ok(idx)
}

fn group_rows(table: &Table, id: &GroupId) -> Result<Vec<usize>> {
    let by = table
        .column(&id.group_by)
        .map_err(|_| Error::StaleAction(format!("no column {:?}", id.group_by)))?;
    Ok(by
        .cells
        .iter()
        .enumerate()
        .filter(|(_, c)| key_matches(c, &id.key))
        .map(|(r, _)| r)
        .collect())
}

/// The value an imputation would write, computed on the current table.
pub fn imputation_value(table: &Table, action: &RepairAction, column: &str) -> Result<f64> {
    let cells = &table.column(column)?.cells;
    match action {
        RepairAction::ImputeGroupMean { group, .. } => {
            let rows = group_rows(table, group)?;
            mean_std(rows.iter().filter_map(|&r| cells[r].as_number()))
                .map(|(m, _)| m)
                .ok_or_else(|| Error::EmptyMeanBasis(group.to_string()))
        }
        RepairAction::ImputeColumnMean { .. } => mean_std(cells.iter().filter_map(CellValue::as_number))
            .map(|(m, _)| m)
            .ok_or_else(|| Error::EmptyMeanBasis(format!("column {column:?}"))),
        _ => Err(Error::InvalidAction(format!("{} is not an imputation", action.tag()))),
    }
}

pub fn apply_action(table: &Table, action: &RepairAction, groups: &[Group]) -> Result<ActionResult> {
    apply_action_with(table, action, groups, &WranglerRegistry::default())
}

/// Applies an action to a copy of `table`, producing the next version, the
/// inverse, and a diff over `groups`.
pub fn apply_action_with(
    table: &Table,
    action: &RepairAction,
    groups: &[Group],
    wranglers: &WranglerRegistry,
) -> Result<ActionResult> {
    action.validate()?;
    let mut next = table.clone();
    let mut rows_removed = 0;
    let inverse = match action {
        RepairAction::ImputeGroupMean { cells, group } => {
            check_cells(table, cells)?;
            if let Some(c) = cells.iter().find(|c| c.column != group.target) {
                return Err(Error::StaleAction(format!("cell {c:?} is outside {}", group)));
            }
            numeric_column(table, &group.target)?;
            let rows = group_rows(table, group)?;
            if let Some(c) = cells.iter().find(|c| rows.binary_search(&c.row).is_err()) {
                return Err(Error::StaleAction(format!("row {} is not in group {}", c.row, group)));
            }
            let mean = imputation_value(table, action, &group.target)?;
            let writes = cells.iter().map(|c| (c.clone(), CellValue::Number(mean))).collect();
            InverseRecord::CellRestores {
                cells: write_cells(&mut next, writes)?,
            }
        }
        RepairAction::ImputeColumnMean { cells } => {
            check_cells(table, cells)?;
            let mut means: HashMap<&str, f64> = HashMap::new();
            for c in cells {
                if !means.contains_key(c.column.as_str()) {
                    numeric_column(table, &c.column)?;
                    means.insert(&c.column, imputation_value(table, action, &c.column)?);
                }
            }
            let writes = cells
                .iter()
                .map(|c| (c.clone(), CellValue::Number(means[c.column.as_str()])))
                .collect();
            InverseRecord::CellRestores {
                cells: write_cells(&mut next, writes)?,
            }
        }
        RepairAction::ConvertCells { cells } => {
            check_cells(table, cells)?;
            let mut writes = Vec::with_capacity(cells.len());
            for c in cells {
                numeric_column(table, &c.column)?;
                let cell = table.cell(c).expect("checked above");
                let converted = cell.as_text().and_then(convert_numeric_string);
                match converted {
                    Some(v) => writes.push((c.clone(), CellValue::Number(v))),
                    None => {
                        return Err(Error::NotConvertible {
                            row: c.row,
                            column: c.column.clone(),
                            text: cell.to_string(),
                        })
                    }
                }
            }
            InverseRecord::CellRestores {
                cells: write_cells(&mut next, writes)?,
            }
        }
        RepairAction::MergeGroups {
            column,
            source_key,
            dest_key,
        } => {
            let idx = column_idx(table, column)?;
            let col = table.columns().nth(idx).expect("index from lookup");
            if col.kind != ColumnKind::Categorical {
                return Err(Error::KindMismatch {
                    column: column.clone(),
                    expected: ColumnKind::Categorical.as_str(),
                    found: col.kind.as_str(),
                });
            }
            let writes: Vec<(CellRef, CellValue)> = col
                .cells
                .iter()
                .enumerate()
                .filter(|(_, c)| c.as_text() == Some(source_key.as_str()))
                .map(|(r, _)| (CellRef::new(r, column.clone()), CellValue::Text(dest_key.clone())))
                .collect();
            InverseRecord::CellRestores {
                cells: write_cells(&mut next, writes)?,
            }
        }
        RepairAction::RemoveRows { rows } => {
            if let Some(&r) = rows.iter().find(|&&r| r >= table.row_count()) {
                return Err(Error::StaleAction(format!(
                    "row {r} out of range ({} rows)",
                    table.row_count()
                )));
            }
            let snapshots = rows.iter().map(|&r| (r, table.row(r))).collect();
            let mut keep = vec![true; table.row_count()];
            for &r in rows {
                keep[r] = false;
            }
            let width = next.columns().len();
            for idx in 0..width {
                let col = next.column_mut(idx);
                let mut i = 0;
                col.cells.retain(|_| {
                    i += 1;
                    keep[i - 1]
                });
            }
            rows_removed = rows.len();
            InverseRecord::RowReinserts { rows: snapshots }
        }
        RepairAction::Custom { wrangler, cells } => {
            check_cells(table, cells)?;
            let w = wranglers
                .get(wrangler)
                .ok_or_else(|| Error::UnknownWrangler(wrangler.clone()))?;
            let mut writes = Vec::with_capacity(cells.len());
            for c in cells {
                let cell = table.cell(c).expect("checked above");
                let value = w.transform(cell).map_err(|reason| Error::Wrangler {
                    id: wrangler.clone(),
                    reason,
                })?;
                if matches!(value, CellValue::Number(v) if !v.is_finite()) {
                    return Err(Error::Wrangler {
                        id: wrangler.clone(),
                        reason: "produced a non-finite number".into(),
                    });
                }
                writes.push((c.clone(), value));
            }
            InverseRecord::CellRestores {
                cells: write_cells(&mut next, writes)?,
            }
        }
    };
    let next = next.with_version(table.version() + 1);
    let cells_changed = match &inverse {
        InverseRecord::CellRestores { cells } => cells
            .iter()
            .filter(|(c, old)| !next.cell(c).is_some_and(|new| new.bit_eq(old)))
            .count(),
        InverseRecord::RowReinserts { .. } => 0,
    };
    let (affected_groups, mean_shift_per_group) = group_effects(table, &next, groups);
    Ok(ActionResult {
        new_table: next,
        inverse,
        diff: ActionDiff {
            cells_changed,
            rows_removed,
            affected_groups,
            mean_shift_per_group,
        },
    })
}

/// Compares each group's stats before and after, matching groups by key.
fn group_effects(before: &Table, after: &Table, groups: &[Group]) -> (Vec<GroupId>, Vec<GroupShift>) {
    let mut by_column: HashMap<&str, HashMap<GroupKey, Vec<usize>>> = HashMap::new();
    for g in groups.iter().filter(|g| g.version == before.version()) {
        by_column.entry(g.spec.group_by.as_str()).or_insert_with(|| {
            let mut map: HashMap<GroupKey, Vec<usize>> = HashMap::new();
            if let Ok(col) = after.column(&g.spec.group_by) {
                for (r, c) in col.cells.iter().enumerate() {
                    let key = match c {
                        CellValue::Text(s) => GroupKey::Value(s.clone()),
                        _ => GroupKey::Missing,
                    };
                    map.entry(key).or_default().push(r);
                }
            }
            map
        });
    }
    let same = |a: &GroupStats, b: &GroupStats| {
        a.count == b.count
            && a.missing_count == b.missing_count
            && a.mismatch_count == b.mismatch_count
            && a.mean.map(f64::to_bits) == b.mean.map(f64::to_bits)
            && a.std.map(f64::to_bits) == b.std.map(f64::to_bits)
    };
    let mut affected = BTreeSet::new();
    let mut shifts = Vec::new();
    for g in groups.iter().filter(|g| g.version == before.version()) {
        let (Ok(old_cells), Ok(new_cells)) = (before.column(&g.spec.target), after.column(&g.spec.target)) else {
            continue;
        };
        let old = stats_for_rows(&old_cells.cells, &g.rows);
        let new_rows = by_column[g.spec.group_by.as_str()].get(&g.key);
        let new = stats_for_rows(&new_cells.cells, new_rows.map_or(&[][..], |r| r.as_slice()));
        if !same(&old, &new) {
            affected.insert(g.id());
        }
        if let (Some(b), Some(a)) = (old.mean, new.mean) {
            shifts.push(GroupShift {
                group: g.id(),
                before: b,
                after: a,
                shift: a - b,
            });
        }
    }
    (affected.into_iter().collect(), shifts)
}

/// Restores the prior version from an inverse record.
pub fn apply_inverse(table: &Table, inverse: &InverseRecord) -> Result<Table> {
    let mut prev = table.clone();
    match inverse {
        InverseRecord::CellRestores { cells } => {
            for (cref, old) in cells.iter().rev() {
                if cref.row >= prev.row_count() {
                    return Err(Error::StaleAction(format!("cannot restore row {}", cref.row)));
                }
                let idx = column_idx(&prev, &cref.column)?;
                prev.column_mut(idx).cells[cref.row] = old.clone();
            }
        }
        InverseRecord::RowReinserts { rows } => {
            let width = prev.columns().len();
            if rows.iter().any(|(_, vals)| vals.len() != width) {
                return Err(Error::StaleAction("row snapshot width mismatch".into()));
            }
            let total = prev.row_count() + rows.len();
            for idx in 0..width {
                let col = prev.column_mut(idx);
                let mut kept = std::mem::take(&mut col.cells).into_iter();
                let mut restored = Vec::with_capacity(total);
                let mut pending = rows.iter().peekable();
                for pos in 0..total {
                    match pending.peek() {
                        Some((at, vals)) if *at == pos => {
                            restored.push(vals[idx].clone());
                            pending.next();
                        }
                        _ => restored.push(kept.next().ok_or_else(|| {
                            Error::StaleAction("row snapshot index out of range".into())
                        })?),
                    }
                }
                col.cells = restored;
            }
        }
    }
    Ok(prev.with_version(table.version().saturating_sub(1)))
}
