//! Read-side views: group ranking, attribute summaries and chart payloads.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::anomaly::{AnomalyIndex, AnomalyRecord, AnomalyType};
use crate::error::{Error, Result};
use crate::groups::{enumerate_groups, GroupId, GroupKey, GroupSpec};
use crate::table::{CellRef, CellValue, Table};

pub const CHART_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedGroup {
    pub group: GroupId,
    pub total_anomalies: usize,
    pub per_type: BTreeMap<AnomalyType, usize>,
    pub dominant_type: AnomalyType,
}

/// Highest count wins; ties go to the earliest type in the fixed order.
pub fn dominant_type(per_type: &BTreeMap<AnomalyType, usize>) -> Option<AnomalyType> {
    per_type
        .iter()
        .filter(|(_, &n)| n > 0)
        .fold(None, |best: Option<(&AnomalyType, usize)>, (t, &n)| match best {
            Some((_, bn)) if bn >= n => best,
            _ => Some((t, n)),
        })
        .map(|(t, _)| t.clone())
}

/// Top-k groups by anomaly count, ties by ascending group id. Groups
/// without anomalies never appear.
pub fn rank_groups(index: &AnomalyIndex, k: usize) -> Vec<RankedGroup> {
    let mut ranked: Vec<RankedGroup> = index
        .counts
        .iter()
        .filter_map(|(g, per_type)| {
            let total: usize = per_type.values().sum();
            Some(RankedGroup {
                group: g.clone(),
                total_anomalies: total,
                per_type: per_type.clone(),
                dominant_type: dominant_type(per_type)?,
            })
        })
        .filter(|r| r.total_anomalies > 0)
        .collect();
    ranked.sort_by(|a, b| {
        b.total_anomalies
            .cmp(&a.total_anomalies)
            .then_with(|| a.group.cmp(&b.group))
    });
    ranked.truncate(k);
    ranked
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSummary {
    pub column: String,
    pub per_type_counts: BTreeMap<AnomalyType, usize>,
    /// Count divided by the column's cell count.
    pub per_type_frequency: BTreeMap<AnomalyType, f64>,
    pub score: f64,
}

/// Per-column anomaly tallies, most anomalous first.
///
/// A cell flagged under several specs counts once per type; incomplete
/// groups count once per (group-by column, key) toward the group-by column.
pub fn attribute_summary(table: &Table, records: &[AnomalyRecord]) -> Vec<AttributeSummary> {
    let mut seen_cells: HashSet<(&CellRef, &AnomalyType)> = HashSet::new();
    let mut seen_groups: HashSet<(&str, &GroupKey, &AnomalyType)> = HashSet::new();
    let mut counts: BTreeMap<String, BTreeMap<AnomalyType, usize>> = BTreeMap::new();
    for r in records {
        if r.cells.is_empty() {
            if seen_groups.insert((r.group.group_by.as_str(), &r.group.key, &r.kind)) {
                *counts
                    .entry(r.group.group_by.clone())
                    .or_default()
                    .entry(r.kind.clone())
                    .or_insert(0) += 1;
            }
            continue;
        }
        for c in &r.cells {
            if seen_cells.insert((c, &r.kind)) {
                *counts
                    .entry(c.column.clone())
                    .or_default()
                    .entry(r.kind.clone())
                    .or_insert(0) += 1;
            }
        }
    }
    let rows = table.row_count();
    let mut out: Vec<AttributeSummary> = counts
        .into_iter()
        .map(|(column, per_type_counts)| {
            let per_type_frequency = per_type_counts
                .iter()
                .map(|(t, &n)| (t.clone(), if rows == 0 { 0.0 } else { n as f64 / rows as f64 }))
                .collect();
            let score = per_type_counts.values().sum::<usize>() as f64;
            AttributeSummary {
                column,
                per_type_counts,
                per_type_frequency,
                score,
            }
        })
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.column.cmp(&b.column)));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartKind {
    StackedHistogram,
    Scatter,
    Line,
    Heatmap,
}

impl FromStr for ChartKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "stacked_histogram" | "histogram" => ChartKind::StackedHistogram,
            "scatter" => ChartKind::Scatter,
            "line" => ChartKind::Line,
            "heatmap" => ChartKind::Heatmap,
            other => return Err(Error::UnsupportedKind(other.to_string())),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorMode {
    GroupName,
    ErrorType,
}

impl FromStr for ColorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "group_name" => ColorMode::GroupName,
            "error_type" => ColorMode::ErrorType,
            other => return Err(Error::UnsupportedKind(other.to_string())),
        })
    }
}

/// What a chart segment is colored by.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum SegmentKey {
    Group(GroupKey),
    Type(AnomalyType),
    NoError,
    /// Rows whose group fell below the minimum support.
    Excluded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub key: SegmentKey,
    pub count: usize,
    pub color_class: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub total: usize,
    pub segments: Vec<Segment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub row: usize,
    pub value: f64,
    pub group: Option<GroupKey>,
    pub color_class: u32,
    pub anomalies: Vec<AnomalyType>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub key: SegmentKey,
    pub color_class: u32,
    /// `(row, value)` in row order.
    pub points: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapRow {
    pub key: SegmentKey,
    pub counts: Vec<usize>,
    /// Intensity class per cell: 0 for empty, 1..=4 by share of the maximum.
    pub intensity: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupInfo {
    pub key: GroupKey,
    pub rows: usize,
    pub color_class: u32,
    pub dominant_type: Option<AnomalyType>,
    pub types: BTreeMap<AnomalyType, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyMark {
    pub cell: CellRef,
    #[serde(rename = "type")]
    pub kind: AnomalyType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegendEntry {
    pub key: SegmentKey,
    pub color_class: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartPayload {
    pub schema_version: u32,
    pub chart_kind: ChartKind,
    pub mode: ColorMode,
    pub spec: GroupSpec,
    pub table_version: u64,
    pub groups: Vec<GroupInfo>,
    pub legend: Vec<LegendEntry>,
    pub bin_edges: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<Vec<Bin>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Point>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series: Option<Vec<Series>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heatmap: Option<Vec<HeatmapRow>>,
    pub anomaly_marks: Vec<AnomalyMark>,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Freedman-Diaconis bin edges, clamped to 5..=50 bins, 10 bins when the
/// IQR is zero. Empty when there are no values.
pub fn bin_edges(values: &[f64]) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (mut lo, mut hi) = (sorted[0], sorted[sorted.len() - 1]);
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let bins = if iqr > 0.0 {
        let width = 2.0 * iqr / (sorted.len() as f64).cbrt();
        ((hi - lo) / width).ceil().clamp(5.0, 50.0) as usize
    } else {
        10
    };
    let step = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|i| lo + step * i as f64).collect();
    edges.push(hi);
    edges
}

/// Bin index for `v`: bins are half-open except the last, which is closed.
fn bin_of(edges: &[f64], v: f64) -> usize {
    let interior = &edges[1..edges.len() - 1];
    interior.partition_point(|&e| e <= v)
}

struct Classes {
    by_key: HashMap<SegmentKey, u32>,
    order: Vec<SegmentKey>,
}

impl Classes {
    fn new(keys: impl IntoIterator<Item = SegmentKey>) -> Self {
        let order: Vec<SegmentKey> = keys.into_iter().collect();
        let by_key = order.iter().enumerate().map(|(i, k)| (k.clone(), i as u32)).collect();
        Classes { by_key, order }
    }

    fn of(&self, key: &SegmentKey) -> u32 {
        self.by_key[key]
    }

    fn legend(&self) -> Vec<LegendEntry> {
        self.order
            .iter()
            .map(|k| LegendEntry {
                key: k.clone(),
                color_class: self.of(k),
            })
            .collect()
    }
}

/// Color classes for error-type mode: `no_error` is 0, built-in types 1..=4,
/// then custom ids ascending, then the excluded bucket.
fn error_type_classes(records: &[AnomalyRecord]) -> Classes {
    let customs: BTreeSet<AnomalyType> = records
        .iter()
        .filter(|r| matches!(r.kind, AnomalyType::Custom(_)))
        .map(|r| r.kind.clone())
        .collect();
    Classes::new(
        std::iter::once(SegmentKey::NoError)
            .chain(AnomalyType::builtin().into_iter().map(SegmentKey::Type))
            .chain(customs.into_iter().map(SegmentKey::Type))
            .chain(std::iter::once(SegmentKey::Excluded)),
    )
}

pub fn chart_payload(
    table: &Table,
    spec: &GroupSpec,
    kind: ChartKind,
    mode: ColorMode,
    records: &[AnomalyRecord],
) -> Result<ChartPayload> {
    let grouping = enumerate_groups(table, spec)?;
    let target = &table.column(&spec.target)?.cells;
    let spec_records: Vec<&AnomalyRecord> = records
        .iter()
        .filter(|r| r.group.group_by == spec.group_by && r.group.target == spec.target)
        .collect();

    let mut per_group: HashMap<&GroupKey, BTreeMap<AnomalyType, usize>> = HashMap::new();
    for r in &spec_records {
        *per_group.entry(&r.group.key).or_default().entry(r.kind.clone()).or_insert(0) += 1;
    }

    let classes = match mode {
        ColorMode::GroupName => Classes::new(
            grouping
                .groups
                .iter()
                .map(|g| SegmentKey::Group(g.key.clone()))
                .chain(std::iter::once(SegmentKey::Excluded)),
        ),
        ColorMode::ErrorType => error_type_classes(records),
    };

    let groups: Vec<GroupInfo> = grouping
        .groups
        .iter()
        .map(|g| {
            let types = per_group.get(&g.key).cloned().unwrap_or_default();
            let dominant = dominant_type(&types);
            let key = match mode {
                ColorMode::GroupName => SegmentKey::Group(g.key.clone()),
                ColorMode::ErrorType => dominant.clone().map_or(SegmentKey::NoError, SegmentKey::Type),
            };
            GroupInfo {
                key: g.key.clone(),
                rows: g.rows.len(),
                color_class: classes.of(&key),
                dominant_type: dominant,
                types,
            }
        })
        .collect();

    // segment key of each row, None for rows outside every group
    let mut row_group: Vec<Option<usize>> = vec![None; table.row_count()];
    for (gi, g) in grouping.groups.iter().enumerate() {
        for &r in &g.rows {
            row_group[r] = Some(gi);
        }
    }
    let group_segments: Vec<SegmentKey> = groups
        .iter()
        .map(|g| match mode {
            ColorMode::GroupName => SegmentKey::Group(g.key.clone()),
            ColorMode::ErrorType => g.dominant_type.clone().map_or(SegmentKey::NoError, SegmentKey::Type),
        })
        .collect();
    let segment_of = |row: usize| -> SegmentKey {
        row_group[row].map_or(SegmentKey::Excluded, |gi| group_segments[gi].clone())
    };

    let numbers: Vec<(usize, f64)> = target
        .iter()
        .enumerate()
        .filter_map(|(r, c)| c.as_number().map(|v| (r, v)))
        .collect();
    let values: Vec<f64> = numbers.iter().map(|&(_, v)| v).collect();
    let edges = bin_edges(&values);

    let mut cell_types: HashMap<usize, Vec<AnomalyType>> = HashMap::new();
    let mut anomaly_marks = Vec::new();
    for r in &spec_records {
        for c in &r.cells {
            cell_types.entry(c.row).or_default().push(r.kind.clone());
            anomaly_marks.push(AnomalyMark {
                cell: c.clone(),
                kind: r.kind.clone(),
            });
        }
    }

    let mut payload = ChartPayload {
        schema_version: CHART_SCHEMA_VERSION,
        chart_kind: kind,
        mode,
        spec: spec.clone(),
        table_version: table.version(),
        groups,
        legend: classes.legend(),
        bin_edges: edges.clone(),
        bins: None,
        points: None,
        series: None,
        heatmap: None,
        anomaly_marks,
    };

    match kind {
        ChartKind::StackedHistogram => {
            let nbins = edges.len().saturating_sub(1);
            let mut counts: Vec<BTreeMap<SegmentKey, usize>> = vec![BTreeMap::new(); nbins];
            for &(row, v) in &numbers {
                *counts[bin_of(&edges, v)].entry(segment_of(row)).or_insert(0) += 1;
            }
            payload.bins = Some(
                counts
                    .into_iter()
                    .enumerate()
                    .map(|(i, segs)| {
                        let mut segments: Vec<Segment> = segs
                            .into_iter()
                            .map(|(key, count)| Segment {
                                color_class: classes.of(&key),
                                key,
                                count,
                            })
                            .collect();
                        segments.sort_by_key(|s| s.color_class);
                        Bin {
                            lo: edges[i],
                            hi: edges[i + 1],
                            total: segments.iter().map(|s| s.count).sum(),
                            segments,
                        }
                    })
                    .collect(),
            );
        }
        ChartKind::Scatter => {
            payload.points = Some(
                numbers
                    .iter()
                    .map(|&(row, value)| Point {
                        row,
                        value,
                        group: row_group[row].map(|gi| grouping.groups[gi].key.clone()),
                        color_class: classes.of(&segment_of(row)),
                        anomalies: cell_types.get(&row).cloned().unwrap_or_default(),
                    })
                    .collect(),
            );
        }
        ChartKind::Line => {
            payload.series = Some(
                grouping
                    .groups
                    .iter()
                    .map(|g| {
                        let key = segment_of(g.rows[0]);
                        Series {
                            color_class: classes.of(&key),
                            key: SegmentKey::Group(g.key.clone()),
                            points: g
                                .rows
                                .iter()
                                .filter_map(|&r| target[r].as_number().map(|v| (r, v)))
                                .collect(),
                        }
                    })
                    .collect(),
            );
        }
        ChartKind::Heatmap => {
            let nbins = edges.len().saturating_sub(1);
            let mut rows: Vec<(SegmentKey, Vec<usize>)> = grouping
                .groups
                .iter()
                .map(|g| (SegmentKey::Group(g.key.clone()), vec![0; nbins]))
                .collect();
            let mut excluded = vec![0; nbins];
            for &(row, v) in &numbers {
                let b = bin_of(&edges, v);
                match row_group[row] {
                    Some(gi) => rows[gi].1[b] += 1,
                    None => excluded[b] += 1,
                }
            }
            if excluded.iter().any(|&n| n > 0) {
                rows.push((SegmentKey::Excluded, excluded));
            }
            let max = rows.iter().flat_map(|(_, c)| c.iter().copied()).max().unwrap_or(0);
            payload.heatmap = Some(
                rows.into_iter()
                    .map(|(key, counts)| HeatmapRow {
                        intensity: counts
                            .iter()
                            .map(|&n| if n == 0 { 0 } else { (1 + 4 * n / (max + 1)) as u32 })
                            .collect(),
                        key,
                        counts,
                    })
                    .collect(),
            );
        }
    }
    Ok(payload)
}

/// Number of `Number` cells in the target column, for conservation checks.
pub fn numeric_cell_count(table: &Table, column: &str) -> Result<usize> {
    Ok(table
        .column(column)?
        .cells
        .iter()
        .filter(|c| matches!(c, CellValue::Number(_)))
        .count())
}
