//! Anomaly detection over subgroups and the type/group indexes.

pub mod rule;

mod index;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::groups::{enumerate_groups, stats_for_rows, mean_std, Group, GroupId, GroupSpec, GroupStats};
use crate::table::{CellRef, CellValue, ColumnKind, Table};

pub use index::AnomalyIndex;
pub use rule::{eval_rule, parse_rule, RuleError, RuleExpr};

/// Anomaly type tag. The derived order is the fixed tie-break order used
/// throughout: missing, outlier, mismatch, incomplete, then custom ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AnomalyType {
    MissingValue,
    Outlier,
    TypeMismatch,
    IncompleteGroup,
    Custom(String),
}

impl AnomalyType {
    pub fn builtin() -> [AnomalyType; 4] {
        [
            AnomalyType::MissingValue,
            AnomalyType::Outlier,
            AnomalyType::TypeMismatch,
            AnomalyType::IncompleteGroup,
        ]
    }
}

pub fn is_valid_custom_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

impl fmt::Display for AnomalyType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnomalyType::MissingValue => f.write_str("missing_value"),
            AnomalyType::Outlier => f.write_str("outlier"),
            AnomalyType::TypeMismatch => f.write_str("type_mismatch"),
            AnomalyType::IncompleteGroup => f.write_str("incomplete_group"),
            AnomalyType::Custom(id) => write!(f, "custom:{id}"),
        }
    }
}

impl FromStr for AnomalyType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "missing_value" => AnomalyType::MissingValue,
            "outlier" => AnomalyType::Outlier,
            "type_mismatch" => AnomalyType::TypeMismatch,
            "incomplete_group" => AnomalyType::IncompleteGroup,
            other => match other.strip_prefix("custom:") {
                Some(id) if is_valid_custom_id(id) => AnomalyType::Custom(id.to_string()),
                _ => return Err(format!("unknown anomaly type {other:?}")),
            },
        })
    }
}

impl Serialize for AnomalyType {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AnomalyType {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyRecord {
    #[serde(rename = "type")]
    pub kind: AnomalyType,
    pub group: GroupId,
    /// Empty for group-level records.
    pub cells: Vec<CellRef>,
    /// Outlier: `deviation`, `value`, `mean`, `std`, `sigma`.
    /// Incomplete group: `count`, `threshold`.
    #[serde(default)]
    pub detail: BTreeMap<String, f64>,
}

impl AnomalyRecord {
    fn cell(kind: AnomalyType, group: &Group, row: usize) -> Self {
        AnomalyRecord {
            kind,
            group: group.id(),
            cells: vec![CellRef::new(row, group.spec.target.clone())],
            detail: BTreeMap::new(),
        }
    }

    pub fn rows(&self) -> Vec<usize> {
        self.cells.iter().map(|c| c.row).collect()
    }

    fn sort_key(&self) -> (usize, &AnomalyType) {
        (self.cells.first().map_or(usize::MAX, |c| c.row), &self.kind)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CustomRule {
    pub id: String,
    pub rule: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub outlier_sigma: f64,
    pub incomplete_threshold: usize,
    pub numeric_majority: f64,
    pub top_k: usize,
    pub merge_min_similarity: f64,
    pub custom_rules: Vec<CustomRule>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            outlier_sigma: 2.0,
            incomplete_threshold: 2,
            numeric_majority: 0.5,
            top_k: 3,
            merge_min_similarity: 0.6,
            custom_rules: Vec::new(),
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.outlier_sigma > 0.0 && self.outlier_sigma.is_finite()) {
            return bad("outlier_sigma must be positive");
        }
        if self.incomplete_threshold == 0 {
            return bad("incomplete_threshold must be at least 1");
        }
        if !(self.numeric_majority > 0.0 && self.numeric_majority <= 1.0) {
            return bad("numeric_majority must lie in (0, 1]");
        }
        if self.top_k == 0 {
            return bad("top_k must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.merge_min_similarity) {
            return bad("merge_min_similarity must lie in [0, 1]");
        }
        let mut seen = HashSet::new();
        for r in &self.custom_rules {
            if !is_valid_custom_id(&r.id) {
                return Err(Error::InvalidConfig(format!("invalid custom rule id {:?}", r.id)));
            }
            if !seen.insert(r.id.as_str()) {
                return Err(Error::InvalidConfig(format!("duplicate custom rule id {:?}", r.id)));
            }
        }
        Ok(())
    }

    /// Parses every custom rule into a detector.
    pub fn compile_rules(&self) -> Result<Vec<Arc<dyn CellDetector>>> {
        self.validate()?;
        self.custom_rules
            .iter()
            .map(|r| {
                let expr = parse_rule(&r.rule)?;
                Ok(Arc::new(RuleDetector {
                    id: r.id.clone(),
                    expr,
                }) as Arc<dyn CellDetector>)
            })
            .collect()
    }
}

/// In-process custom detector: flags a target cell given its group's stats.
pub trait CellDetector: Send + Sync {
    fn id(&self) -> &str;
    fn flag(&self, cell: &CellValue, stats: &GroupStats) -> bool;
}

#[derive(Debug, Clone)]
pub struct RuleDetector {
    pub id: String,
    pub expr: RuleExpr,
}

impl CellDetector for RuleDetector {
    fn id(&self) -> &str {
        &self.id
    }

    fn flag(&self, cell: &CellValue, stats: &GroupStats) -> bool {
        eval_rule(&self.expr, cell, stats)
    }
}

fn check_version(table: &Table, group: &Group) -> Result<()> {
    if group.version != table.version() {
        return Err(Error::StaleGroup {
            group: group.version,
            table: table.version(),
        });
    }
    Ok(())
}

pub fn detect_missing(table: &Table, group: &Group) -> Result<Vec<AnomalyRecord>> {
    check_version(table, group)?;
    let cells = &table.column(&group.spec.target)?.cells;
    Ok(group
        .rows
        .iter()
        .filter(|&&r| cells[r].is_missing())
        .map(|&r| AnomalyRecord::cell(AnomalyType::MissingValue, group, r))
        .collect())
}

/// Column-wide σ-band: `(row, deviation in σ units, value)` for every flagged cell.
#[derive(Debug, Clone)]
struct OutlierScan {
    mean: f64,
    std: f64,
    flagged: Vec<(usize, f64, f64)>,
}

fn scan_outliers(cells: &[CellValue], sigma: f64) -> OutlierScan {
    let numbers = cells.iter().filter_map(CellValue::as_number);
    let Some((mean, std)) = mean_std(numbers) else {
        return OutlierScan {
            mean: f64::NAN,
            std: 0.0,
            flagged: Vec::new(),
        };
    };
    let mut flagged = Vec::new();
    if std > 0.0 {
        let band = sigma * std;
        for (row, cell) in cells.iter().enumerate() {
            if let CellValue::Number(v) = cell {
                let dev = (v - mean).abs();
                if dev > band {
                    flagged.push((row, dev / std, *v));
                }
            }
        }
    }
    OutlierScan { mean, std, flagged }
}

fn row_owner(groups: &[Group], row_count: usize) -> Vec<Option<usize>> {
    let mut owner = vec![None; row_count];
    for (gi, g) in groups.iter().enumerate() {
        for &r in &g.rows {
            if r < row_count {
                owner[r] = Some(gi);
            }
        }
    }
    owner
}

fn outlier_records(scan: &OutlierScan, groups: &[Group], owner: &[Option<usize>], sigma: f64) -> Vec<AnomalyRecord> {
    scan.flagged
        .iter()
        .filter_map(|&(row, dev, value)| {
            let g = &groups[owner[row]?];
            let mut rec = AnomalyRecord::cell(AnomalyType::Outlier, g, row);
            rec.detail = BTreeMap::from([
                ("deviation".to_string(), dev),
                ("value".to_string(), value),
                ("mean".to_string(), scan.mean),
                ("std".to_string(), scan.std),
                ("sigma".to_string(), sigma),
            ]);
            Some(rec)
        })
        .collect()
}

/// Flags cells outside `mean ± sigma·std` of the pooled column (population
/// std), attributing each to the group that owns its row.
pub fn detect_outliers(
    table: &Table,
    column: &str,
    groups: &[Group],
    sigma: f64,
) -> Result<Vec<AnomalyRecord>> {
    // also rejects NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(sigma > 0.0) {
        return Err(Error::InvalidConfig("sigma must be positive".into()));
    }
    let col = table.column_of_kind(column, ColumnKind::Numeric)?;
    for g in groups {
        check_version(table, g)?;
    }
    let scan = scan_outliers(&col.cells, sigma);
    let owner = row_owner(groups, table.row_count());
    Ok(outlier_records(&scan, groups, &owner, sigma))
}

pub fn detect_type_mismatch(table: &Table, column: &str, groups: &[Group]) -> Result<Vec<AnomalyRecord>> {
    let col = table.column_of_kind(column, ColumnKind::Numeric)?;
    for g in groups {
        check_version(table, g)?;
    }
    let owner = row_owner(groups, table.row_count());
    Ok(col
        .cells
        .iter()
        .enumerate()
        .filter(|(_, c)| matches!(c, CellValue::Text(_)))
        .filter_map(|(row, _)| {
            owner[row].map(|gi| AnomalyRecord::cell(AnomalyType::TypeMismatch, &groups[gi], row))
        })
        .collect())
}

pub fn detect_incomplete(groups: &[Group], threshold: usize) -> Vec<AnomalyRecord> {
    groups
        .iter()
        .filter(|g| g.rows.len() < threshold)
        .map(|g| AnomalyRecord {
            kind: AnomalyType::IncompleteGroup,
            group: g.id(),
            cells: Vec::new(),
            detail: BTreeMap::from([
                ("count".to_string(), g.rows.len() as f64),
                ("threshold".to_string(), threshold as f64),
            ]),
        })
        .collect()
}

/// Runs one custom detector over every target cell of every group.
pub fn detect_custom(
    table: &Table,
    groups: &[Group],
    detector: &dyn CellDetector,
) -> Result<Vec<AnomalyRecord>> {
    let mut out = Vec::new();
    for g in groups {
        check_version(table, g)?;
        let cells = &table.column(&g.spec.target)?.cells;
        let stats = stats_for_rows(cells, &g.rows);
        for &r in &g.rows {
            if detector.flag(&cells[r], &stats) {
                out.push(AnomalyRecord::cell(
                    AnomalyType::Custom(detector.id().to_string()),
                    g,
                    r,
                ));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct Detection {
    pub records: Vec<AnomalyRecord>,
    pub index: AnomalyIndex,
}

impl Detection {
    pub fn counts_by_type(&self) -> BTreeMap<AnomalyType, usize> {
        let mut out = BTreeMap::new();
        for r in &self.records {
            *out.entry(r.kind.clone()).or_insert(0) += 1;
        }
        out
    }
}

pub fn run_detectors(table: &Table, specs: &[GroupSpec], config: &DetectorConfig) -> Result<Detection> {
    run_detectors_with(table, specs, config, &[])
}

/// Runs the four built-in detectors, every configured rule and every extra
/// in-process detector over each spec's groups.
///
/// Record order: spec order, then group key, then row (group-level records
/// last within their group), then type order.
pub fn run_detectors_with(
    table: &Table,
    specs: &[GroupSpec],
    config: &DetectorConfig,
    extra: &[Arc<dyn CellDetector>],
) -> Result<Detection> {
    let mut detectors = config.compile_rules()?;
    detectors.extend(extra.iter().cloned());
    {
        let mut ids: Vec<&str> = detectors.iter().map(|d| d.id()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig(format!("duplicate detector id {:?}", w[0])));
        }
        if let Some(bad) = ids.iter().find(|id| !is_valid_custom_id(id)) {
            return Err(Error::InvalidConfig(format!("invalid detector id {bad:?}")));
        }
    }

    let mut scans: HashMap<&str, OutlierScan> = HashMap::new();
    let mut records = Vec::new();
    for spec in specs {
        let grouping = enumerate_groups(table, spec).map_err(|e| e.in_spec(spec))?;
        let groups = &grouping.groups;
        let target = &table.column(&spec.target)?.cells;
        let scan = scans
            .entry(spec.target.as_str())
            .or_insert_with(|| scan_outliers(target, config.outlier_sigma));
        let owner = row_owner(groups, table.row_count());

        let mut per_group: Vec<Vec<AnomalyRecord>> = vec![Vec::new(); groups.len()];
        for g in groups {
            check_version(table, g).map_err(|e| e.in_spec(spec))?;
        }
        for (gi, g) in groups.iter().enumerate() {
            for &r in &g.rows {
                match target[r] {
                    CellValue::Missing => per_group[gi].push(AnomalyRecord::cell(AnomalyType::MissingValue, g, r)),
                    CellValue::Text(_) => per_group[gi].push(AnomalyRecord::cell(AnomalyType::TypeMismatch, g, r)),
                    CellValue::Number(_) => {}
                }
            }
        }
        for rec in outlier_records(scan, groups, &owner, config.outlier_sigma) {
            let gi = owner[rec.cells[0].row].expect("attributed outlier has an owner");
            per_group[gi].push(rec);
        }
        for (gi, g) in groups.iter().enumerate() {
            per_group[gi].extend(detect_incomplete(std::slice::from_ref(g), config.incomplete_threshold));
        }
        for d in &detectors {
            for rec in detect_custom(table, groups, d.as_ref()).map_err(|e| e.in_spec(spec))? {
                let gi = owner[rec.cells[0].row].expect("custom record row is grouped");
                per_group[gi].push(rec);
            }
        }
        for mut recs in per_group {
            recs.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
            records.extend(recs);
        }
    }
    let index = AnomalyIndex::build(&records);
    Ok(Detection { records, index })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::GroupKey;
    use crate::table::{infer_kinds, load_csv, CsvOptions};

    fn table(csv: &str) -> Table {
        infer_kinds(&load_csv(csv.as_bytes(), &CsvOptions::default()).unwrap(), 0.5)
    }

    fn groups(t: &Table, by: &str, target: &str) -> Vec<Group> {
        enumerate_groups(t, &GroupSpec::new(by, target, 1)).unwrap().groups
    }

    #[test]
    fn type_tag_round_trip_and_order() {
        for t in [
            AnomalyType::MissingValue,
            AnomalyType::Outlier,
            AnomalyType::TypeMismatch,
            AnomalyType::IncompleteGroup,
            AnomalyType::Custom("neg-1".into()),
        ] {
            assert_eq!(t.to_string().parse::<AnomalyType>().unwrap(), t);
        }
        assert!(AnomalyType::IncompleteGroup < AnomalyType::Custom("a".into()));
        assert!(AnomalyType::Custom("a".into()) < AnomalyType::Custom("b".into()));
        assert!("custom:".parse::<AnomalyType>().is_err());
        assert!("custom:a b".parse::<AnomalyType>().is_err());
    }

    #[test]
    fn missing_per_group() {
        let t = table("c,v\na,1\na,\nb,2\n");
        let gs = groups(&t, "c", "v");
        assert_eq!(detect_missing(&t, &gs[0]).unwrap().len(), 1);
        assert!(detect_missing(&t, &gs[1]).unwrap().is_empty());
    }

    #[test]
    fn outlier_band_example() {
        let mut csv = String::from("c,v\n");
        for _ in 0..9 {
            csv.push_str("a,0\n");
        }
        csv.push_str("b,100\n");
        let t = table(&csv);
        let gs = groups(&t, "c", "v");
        let recs = detect_outliers(&t, "v", &gs, 2.0).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].cells[0].row, 9);
        assert_eq!(recs[0].group.key, GroupKey::Value("b".into()));
        assert_eq!(recs[0].detail["mean"], 10.0);
        assert_eq!(recs[0].detail["std"], 30.0);
        assert_eq!(recs[0].detail["deviation"], 3.0);
    }

    #[test]
    fn zero_variance_has_no_outliers() {
        let t = table("c,v\na,4\nb,4\nb,4\n");
        assert!(detect_outliers(&t, "v", &groups(&t, "c", "v"), 2.0).unwrap().is_empty());
    }

    #[test]
    fn mismatch_requires_numeric_column() {
        let t = table("c,v\na,1\na,12k\nb,2\n");
        let gs = groups(&t, "c", "v");
        let recs = detect_type_mismatch(&t, "v", &gs).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].cells[0], CellRef::new(1, "v"));
        assert!(matches!(
            detect_type_mismatch(&t, "c", &gs),
            Err(Error::KindMismatch { .. })
        ));
    }

    #[test]
    fn incomplete_is_strict() {
        let t = table("c,v\na,1\nb,2\nb,3\n");
        let recs = detect_incomplete(&groups(&t, "c", "v"), 2);
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].group.key, GroupKey::Value("a".into()));
        assert!(recs[0].cells.is_empty());
        assert_eq!(recs[0].detail["count"], 1.0);
    }

    #[test]
    fn custom_rule_against_group_mean() {
        let t = table("c,v\na,1\na,2\na,3\n");
        let d = RuleDetector {
            id: "hi".into(),
            expr: parse_rule("value > group_mean").unwrap(),
        };
        let recs = detect_custom(&t, &groups(&t, "c", "v"), &d).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].cells[0].row, 2);
        assert_eq!(recs[0].kind, AnomalyType::Custom("hi".into()));
    }

    #[test]
    fn run_orders_records() {
        let t = table("c,v\nb,\na,12k\na,1\nb,2\nz,3\n");
        let cfg = DetectorConfig {
            custom_rules: vec![CustomRule {
                id: "pos".into(),
                rule: "value > 0".into(),
            }],
            ..DetectorConfig::default()
        };
        let det = run_detectors(&t, &[GroupSpec::new("c", "v", 1)], &cfg).unwrap();
        let summary: Vec<(String, Option<usize>, String)> = det
            .records
            .iter()
            .map(|r| (r.group.key.to_string(), r.cells.first().map(|c| c.row), r.kind.to_string()))
            .collect();
        let expect = |k: &str, r: Option<usize>, t: &str| (k.to_string(), r, t.to_string());
        assert_eq!(
            summary,
            vec![
                expect("a", Some(1), "type_mismatch"),
                expect("a", Some(2), "custom:pos"),
                expect("b", Some(0), "missing_value"),
                expect("b", Some(3), "custom:pos"),
                expect("z", Some(4), "custom:pos"),
                expect("z", None, "incomplete_group"),
            ]
        );
    }

    #[test]
    fn empty_specs_and_bad_config() {
        let t = table("c,v\na,1\n");
        let det = run_detectors(&t, &[], &DetectorConfig::default()).unwrap();
        assert!(det.records.is_empty());
        assert!(det.index.is_empty());
        let cfg = DetectorConfig {
            custom_rules: vec![CustomRule {
                id: "bad id".into(),
                rule: "value < 0".into(),
            }],
            ..DetectorConfig::default()
        };
        assert!(matches!(run_detectors(&t, &[], &cfg), Err(Error::InvalidConfig(_))));
        let cfg = DetectorConfig {
            custom_rules: vec![CustomRule {
                id: "ok".into(),
                rule: "value <".into(),
            }],
            ..DetectorConfig::default()
        };
        assert!(matches!(run_detectors(&t, &[], &cfg), Err(Error::Rule(_))));
    }

    #[test]
    fn spec_errors_carry_the_spec() {
        let t = table("c,v\na,1\n");
        let err = run_detectors(&t, &[GroupSpec::new("c", "nope", 1)], &DetectorConfig::default())
            .unwrap_err();
        assert!(matches!(err, Error::InSpec { .. }));
        assert_eq!(err.code(), "COLUMN_NOT_FOUND");
    }
}
