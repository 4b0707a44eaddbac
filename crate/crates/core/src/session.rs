//! The mutable wrangling session: current version, linear undo/redo history
//! and anomaly state that always matches the current version.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::anomaly::{run_detectors_with, AnomalyRecord, AnomalyType, CellDetector, Detection, DetectorConfig};
use crate::error::{Error, Result};
use crate::groups::{enumerate_all_specs, enumerate_groups, Group, GroupSpec};
use crate::repair::{
    apply_action_with, apply_inverse, suggest_repairs, ActionDiff, DefaultSimilarity, InverseRecord, RepairAction,
    RepairOptions, Similarity, WranglerRegistry,
};
use crate::table::{infer_kinds_with, load_csv, CsvOptions, InferOptions, Table};

/// In-process plugins attached to a session. Not part of the export.
#[derive(Clone)]
pub struct Extensions {
    pub detectors: Vec<Arc<dyn CellDetector>>,
    pub wranglers: WranglerRegistry,
    pub similarity: Arc<dyn Similarity>,
}

impl Default for Extensions {
    fn default() -> Self {
        Extensions {
            detectors: Vec::new(),
            wranglers: WranglerRegistry::default(),
            similarity: Arc::new(DefaultSimilarity),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActionEntry {
    pub action: RepairAction,
    pub inverse: InverseRecord,
    pub pre_version: u64,
    pub post_version: u64,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
    pub diff: ActionDiff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preview {
    pub diff: ActionDiff,
    pub anomalies_before: BTreeMap<AnomalyType, usize>,
    pub anomalies_after: BTreeMap<AnomalyType, usize>,
}

/// Everything needed to rebuild a session from its original CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionExport {
    pub format_version: u32,
    /// [`Table::fingerprint`] of the typed original table.
    pub dataset_fingerprint: String,
    pub dataset_name: String,
    pub csv_options: CsvOptions,
    pub config: DetectorConfig,
    pub specs: Vec<GroupSpec>,
    pub actions: Vec<RepairAction>,
}

pub struct Session {
    id: String,
    original: Table,
    table: Table,
    csv_options: CsvOptions,
    config: DetectorConfig,
    specs: Vec<GroupSpec>,
    undo_stack: Vec<ActionEntry>,
    redo_stack: Vec<ActionEntry>,
    detection: Detection,
    groups: Vec<Vec<Group>>,
    extensions: Extensions,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("id", &self.id)
            .field("version", &self.table.version())
            .field("undo", &self.undo_stack.len())
            .field("redo", &self.redo_stack.len())
            .finish()
    }
}

fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

struct Snapshot {
    detection: Detection,
    groups: Vec<Vec<Group>>,
}

fn analyze(table: &Table, specs: &[GroupSpec], config: &DetectorConfig, ext: &Extensions) -> Result<Snapshot> {
    let detection = run_detectors_with(table, specs, config, &ext.detectors)?;
    let groups = specs
        .iter()
        .map(|s| enumerate_groups(table, s).map(|g| g.groups).map_err(|e| e.in_spec(s)))
        .collect::<Result<_>>()?;
    Ok(Snapshot { detection, groups })
}

/// Loads and types a CSV the way sessions do.
pub fn load_typed(bytes: &[u8], csv_options: &CsvOptions, config: &DetectorConfig) -> Result<Table> {
    let raw = load_csv(bytes, csv_options)?;
    Ok(infer_kinds_with(
        &raw,
        &InferOptions {
            numeric_majority: config.numeric_majority,
            null_tokens: csv_options.null_tokens.clone(),
        },
    ))
}

impl Session {
    pub fn create(table: Table, config: DetectorConfig, specs: Vec<GroupSpec>) -> Result<Session> {
        Session::create_with(table, config, specs, CsvOptions::default(), Extensions::default())
    }

    pub fn create_with(
        table: Table,
        config: DetectorConfig,
        specs: Vec<GroupSpec>,
        csv_options: CsvOptions,
        extensions: Extensions,
    ) -> Result<Session> {
        config.validate()?;
        for s in &specs {
            s.validate(&table).map_err(|e| e.in_spec(s))?;
        }
        let table = table.with_version(0);
        let snap = analyze(&table, &specs, &config, &extensions)?;
        Ok(Session {
            id: uuid::Uuid::new_v4().to_string(),
            original: table.clone(),
            table,
            csv_options,
            config,
            specs,
            undo_stack: Vec::new(),
            redo_stack: Vec::new(),
            detection: snap.detection,
            groups: snap.groups,
            extensions,
        })
    }

    /// Loads a CSV and opens a session. Without explicit specs every
    /// categorical column is crossed with every numeric column.
    pub fn from_csv(
        bytes: &[u8],
        name: &str,
        csv_options: CsvOptions,
        config: DetectorConfig,
        specs: Option<Vec<GroupSpec>>,
        extensions: Extensions,
    ) -> Result<Session> {
        config.validate()?;
        let mut table = load_typed(bytes, &csv_options, &config)?;
        table.set_name(name);
        let specs = match specs {
            Some(s) => s,
            None => enumerate_all_specs(&table, None, 1)?,
        };
        Session::create_with(table, config, specs, csv_options, extensions)
    }

    /// Rebuilds a session by replaying an export against its original CSV.
    pub fn replay(bytes: &[u8], export: &SessionExport, extensions: Extensions) -> Result<Session> {
        let mut table = load_typed(bytes, &export.csv_options, &export.config)?;
        table.set_name(&export.dataset_name);
        let found = table.fingerprint();
        if found != export.dataset_fingerprint {
            return Err(Error::FingerprintMismatch {
                expected: export.dataset_fingerprint.clone(),
                found,
            });
        }
        let mut session = Session::create_with(
            table,
            export.config.clone(),
            export.specs.clone(),
            export.csv_options.clone(),
            extensions,
        )?;
        for action in &export.actions {
            session.commit(action.clone())?;
        }
        Ok(session)
    }

    pub fn export(&self) -> SessionExport {
        SessionExport {
            format_version: 1,
            dataset_fingerprint: self.original.fingerprint(),
            dataset_name: self.original.name().to_string(),
            csv_options: self.csv_options.clone(),
            config: self.config.clone(),
            specs: self.specs.clone(),
            actions: self.undo_stack.iter().map(|e| e.action.clone()).collect(),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn table(&self) -> &Table {
        &self.table
    }

    pub fn original(&self) -> &Table {
        &self.original
    }

    pub fn version(&self) -> u64 {
        self.table.version()
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn csv_options(&self) -> &CsvOptions {
        &self.csv_options
    }

    pub fn specs(&self) -> &[GroupSpec] {
        &self.specs
    }

    pub fn extensions(&self) -> &Extensions {
        &self.extensions
    }

    pub fn undo_stack(&self) -> &[ActionEntry] {
        &self.undo_stack
    }

    pub fn redo_stack(&self) -> &[ActionEntry] {
        &self.redo_stack
    }

    pub fn detection(&self) -> &Detection {
        &self.detection
    }

    pub fn records(&self) -> &[AnomalyRecord] {
        &self.detection.records
    }

    /// Current groups of a spec, if the spec belongs to this session.
    pub fn groups_for(&self, group_by: &str, target: &str) -> Option<&[Group]> {
        self.specs
            .iter()
            .position(|s| s.group_by == group_by && s.target == target)
            .map(|i| self.groups[i].as_slice())
    }

    fn all_groups(&self) -> Vec<Group> {
        self.groups.iter().flatten().cloned().collect()
    }

    pub fn suggest(&self, record: &AnomalyRecord) -> Result<Vec<RepairAction>> {
        self.suggest_with(record, self.extensions.similarity.as_ref())
    }

    /// Like [`Session::suggest`] with a one-off similarity backend.
    pub fn suggest_with(&self, record: &AnomalyRecord, similarity: &dyn Similarity) -> Result<Vec<RepairAction>> {
        let groups = self
            .groups_for(&record.group.group_by, &record.group.target)
            .ok_or_else(|| Error::StaleRecord(format!("no spec for group {}", record.group)))?;
        let options = RepairOptions {
            min_similarity: self.config.merge_min_similarity,
            similarity,
            wranglers: &self.extensions.wranglers,
        };
        suggest_repairs(record, &self.table, groups, &options)
    }

    pub fn preview(&self, action: &RepairAction) -> Result<Preview> {
        let action = action.clone().normalized();
        let result = apply_action_with(&self.table, &action, &self.all_groups(), &self.extensions.wranglers)?;
        let after = run_detectors_with(&result.new_table, &self.specs, &self.config, &self.extensions.detectors)?;
        Ok(Preview {
            diff: result.diff,
            anomalies_before: self.detection.counts_by_type(),
            anomalies_after: after.counts_by_type(),
        })
    }

    /// Applies an action as the next version. Clears the redo stack. The
    /// session is unchanged when the action fails.
    pub fn commit(&mut self, action: RepairAction) -> Result<&ActionEntry> {
        let action = action.normalized();
        let result = apply_action_with(&self.table, &action, &self.all_groups(), &self.extensions.wranglers)?;
        let snap = analyze(&result.new_table, &self.specs, &self.config, &self.extensions)?;
        let entry = ActionEntry {
            action,
            inverse: result.inverse,
            pre_version: self.table.version(),
            post_version: result.new_table.version(),
            timestamp: now_millis(),
            diff: result.diff,
        };
        self.table = result.new_table;
        self.detection = snap.detection;
        self.groups = snap.groups;
        self.redo_stack.clear();
        self.undo_stack.push(entry);
        Ok(self.undo_stack.last().expect("just pushed"))
    }

    pub fn undo(&mut self) -> Result<&ActionEntry> {
        let entry = self.undo_stack.last().ok_or(Error::NothingToUndo)?;
        let prev = apply_inverse(&self.table, &entry.inverse)?.with_version(entry.pre_version);
        let snap = analyze(&prev, &self.specs, &self.config, &self.extensions)?;
        let entry = self.undo_stack.pop().expect("checked non-empty");
        self.table = prev;
        self.detection = snap.detection;
        self.groups = snap.groups;
        self.redo_stack.push(entry);
        Ok(self.redo_stack.last().expect("just pushed"))
    }

    pub fn redo(&mut self) -> Result<&ActionEntry> {
        let entry = self.redo_stack.last().ok_or(Error::NothingToRedo)?;
        let result = apply_action_with(&self.table, &entry.action, &self.all_groups(), &self.extensions.wranglers)?;
        let snap = analyze(&result.new_table, &self.specs, &self.config, &self.extensions)?;
        let mut entry = self.redo_stack.pop().expect("checked non-empty");
        entry.inverse = result.inverse;
        entry.diff = result.diff;
        entry.timestamp = now_millis();
        self.table = result.new_table;
        self.detection = snap.detection;
        self.groups = snap.groups;
        self.undo_stack.push(entry);
        Ok(self.undo_stack.last().expect("just pushed"))
    }
}
