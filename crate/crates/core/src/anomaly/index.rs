use std::collections::{BTreeMap, BTreeSet};

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use super::{AnomalyRecord, AnomalyType};
use crate::groups::GroupId;

/// The two retrieval indexes (type to groups, group to types) plus
/// per-group counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnomalyIndex {
    pub by_type: BTreeMap<AnomalyType, BTreeSet<GroupId>>,
    pub by_group: BTreeMap<GroupId, BTreeSet<AnomalyType>>,
    pub counts: BTreeMap<GroupId, BTreeMap<AnomalyType, usize>>,
}

impl AnomalyIndex {
    pub fn build(records: &[AnomalyRecord]) -> Self {
        let mut idx = AnomalyIndex::default();
        for r in records {
            idx.by_type
                .entry(r.kind.clone())
                .or_default()
                .insert(r.group.clone());
            idx.by_group
                .entry(r.group.clone())
                .or_default()
                .insert(r.kind.clone());
            *idx.counts
                .entry(r.group.clone())
                .or_default()
                .entry(r.kind.clone())
                .or_insert(0) += 1;
        }
        idx
    }

    pub fn is_empty(&self) -> bool {
        self.by_group.is_empty()
    }

    pub fn groups_with(&self, kind: &AnomalyType) -> impl Iterator<Item = &GroupId> {
        self.by_type.get(kind).into_iter().flatten()
    }

    pub fn types_of(&self, group: &GroupId) -> impl Iterator<Item = &AnomalyType> {
        self.by_group.get(group).into_iter().flatten()
    }

    pub fn total(&self, group: &GroupId) -> usize {
        self.counts.get(group).map_or(0, |m| m.values().sum())
    }
}

#[derive(Serialize)]
struct GroupEntry<'a> {
    group: &'a GroupId,
    types: &'a BTreeSet<AnomalyType>,
    counts: &'a BTreeMap<AnomalyType, usize>,
}

impl Serialize for AnomalyIndex {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let groups: Vec<GroupEntry> = self
            .by_group
            .iter()
            .map(|(g, types)| GroupEntry {
                group: g,
                types,
                counts: &self.counts[g],
            })
            .collect();
        let mut st = s.serialize_struct("AnomalyIndex", 2)?;
        st.serialize_field("by_type", &self.by_type)?;
        st.serialize_field("by_group", &groups)?;
        st.end()
    }
}
