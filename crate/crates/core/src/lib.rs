//! Subgroup anomaly detection and interactive repair for tabular data.
//!
//! The pipeline: load a CSV into a [`Table`], enumerate categorical groups
//! over numeric targets, detect anomalies per group, suggest and apply
//! repairs inside an undoable [`Session`], render chart payloads, and emit a
//! standalone Python script that replays the session.

pub mod anomaly;
pub mod codegen;
pub mod error;
pub mod groups;
pub mod insight;
pub mod recipe;
pub mod repair;
pub mod report;
pub mod server;
pub mod session;
pub mod table;

pub use anomaly::{
    run_detectors, AnomalyIndex, AnomalyRecord, AnomalyType, CellDetector, CustomRule, Detection,
    DetectorConfig,
};
pub use error::{Error, Result};
pub use groups::{enumerate_all_specs, enumerate_groups, Group, GroupId, GroupKey, GroupSpec, GroupStats};
pub use repair::{apply_action, ActionDiff, InverseRecord, RepairAction, Wrangler, WranglerRegistry};
pub use session::{Session, SessionExport};
pub use table::{infer_kinds, load_csv, serialize_csv, table_equals, CellRef, CellValue, Column, ColumnKind, CsvOptions, Table};
