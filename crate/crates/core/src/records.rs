//! In-memory prediction logs grouped by stage.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::prediction::PredictionRecord;

/// Prediction records keyed by stage name, then question id.
///
/// `(qid, stage)` pairs are unique. Iteration order is lexicographic in both
/// keys, which keeps every downstream computation independent of the order
/// records were read in.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionLog {
    stages: BTreeMap<String, BTreeMap<String, PredictionRecord>>,
}

impl PredictionLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: impl IntoIterator<Item = PredictionRecord>) -> Result<Self> {
        let mut log = Self::new();
        for r in records {
            log.insert(r)?;
        }
        Ok(log)
    }

    pub fn insert(&mut self, record: PredictionRecord) -> Result<()> {
        if record.qid.is_empty() {
            return Err(Error::invalid("record has an empty qid"));
        }
        let stage = self.stages.entry(record.stage.clone()).or_default();
        if stage.contains_key(&record.qid) {
            return Err(Error::DuplicateRecord {
                qid: record.qid,
                stage: record.stage,
            });
        }
        stage.insert(record.qid.clone(), record);
        Ok(())
    }

    pub fn stage(&self, name: &str) -> Option<&BTreeMap<String, PredictionRecord>> {
        self.stages.get(name)
    }

    pub fn get(&self, stage: &str, qid: &str) -> Option<&PredictionRecord> {
        self.stages.get(stage).and_then(|s| s.get(qid))
    }

    pub fn stage_names(&self) -> impl Iterator<Item = &str> {
        self.stages.keys().map(String::as_str)
    }

    /// All records, ordered by stage name then qid.
    pub fn records(&self) -> impl Iterator<Item = &PredictionRecord> {
        self.stages.values().flat_map(|s| s.values())
    }

    pub fn len(&self) -> usize {
        self.stages.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
