//! Per-patient discrepancy scores against a definition and the cut-off rule
//! that turns them into group membership.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::eventlog::{Event, EventLog, PatientProjection};
use crate::groupdef::GroupDefinition;

/// Number of definition activities (`activity_score`) and definition codes
/// (`dbc_score`) a patient is missing. Zero on both is a perfect match.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientScore {
    pub patient_id: String,
    pub activity_score: u32,
    pub dbc_score: u32,
}

impl PatientScore {
    pub fn within(&self, alpha_f: u32, alpha_d: u32) -> bool {
        self.activity_score <= alpha_f && self.dbc_score <= alpha_d
    }
}

const NONE: u32 = u32::MAX;

/// A definition resolved against one log's alphabets. Definition labels
/// absent from the log still count toward `|F|` and `|D|`; no patient can
/// match them.
#[derive(Debug, Clone)]
pub struct DefinitionIndex {
    activity_slot: Vec<u32>,
    dbc_slot: Vec<u32>,
    pattern_len: u32,
    dbcs_len: u32,
}

impl DefinitionIndex {
    pub fn new(log: &EventLog, def: &GroupDefinition) -> Self {
        let mut pattern = def.pattern.clone();
        pattern.sort_unstable();
        pattern.dedup();
        let mut dbcs = def.dbcs.clone();
        dbcs.sort_unstable();
        dbcs.dedup();

        let mut activity_slot = vec![NONE; log.activity_alphabet().len()];
        for (slot, label) in pattern.iter().enumerate() {
            if let Some(id) = log.activity_id(label) {
                activity_slot[id.0 as usize] = slot as u32;
            }
        }
        let mut dbc_slot = vec![NONE; log.dbc_alphabet().len()];
        for (slot, label) in dbcs.iter().enumerate() {
            if let Some(id) = log.dbc_id(label) {
                dbc_slot[id.0 as usize] = slot as u32;
            }
        }
        DefinitionIndex {
            activity_slot,
            dbc_slot,
            pattern_len: pattern.len() as u32,
            dbcs_len: dbcs.len() as u32,
        }
    }

    pub fn pattern_len(&self) -> u32 {
        self.pattern_len
    }

    pub fn dbcs_len(&self) -> u32 {
        self.dbcs_len
    }

    fn slot(table: &[u32], id: u32) -> Option<usize> {
        match table.get(id as usize) {
            Some(&s) if s != NONE => Some(s as usize),
            _ => None,
        }
    }

    pub fn score(&self, proj: &PatientProjection) -> PatientScore {
        let found_a = proj
            .activities()
            .iter()
            .filter(|a| Self::slot(&self.activity_slot, a.0).is_some())
            .count() as u32;
        let found_d = proj
            .dbcs()
            .iter()
            .filter(|d| Self::slot(&self.dbc_slot, d.0).is_some())
            .count() as u32;
        PatientScore {
            patient_id: proj.patient_id().into(),
            activity_score: self.pattern_len - found_a,
            dbc_score: self.dbcs_len - found_d,
        }
    }

    /// Scores a raw event sequence using caller-provided scratch space.
    fn score_events(&self, events: &[Event], seen_a: &mut [bool], seen_d: &mut [bool]) -> (u32, u32) {
        seen_a.iter_mut().for_each(|s| *s = false);
        seen_d.iter_mut().for_each(|s| *s = false);
        let (mut found_a, mut found_d) = (0u32, 0u32);
        for e in events {
            if let Some(s) = Self::slot(&self.activity_slot, e.activity.0) {
                if !seen_a[s] {
                    seen_a[s] = true;
                    found_a += 1;
                }
            }
            if let Some(s) = Self::slot(&self.dbc_slot, e.dbc.0) {
                if !seen_d[s] {
                    seen_d[s] = true;
                    found_d += 1;
                }
            }
        }
        (self.pattern_len - found_a, self.dbcs_len - found_d)
    }
}

/// `activity_score = |F| - |A_p ∩ F|`, `dbc_score = |D| - |D_p ∩ D|`.
///
/// Codes count by plain presence in the patient's code set; co-occurrence
/// with pattern activities only matters when the code set is built.
pub fn score_patient(log: &EventLog, proj: &PatientProjection, def: &GroupDefinition) -> PatientScore {
    DefinitionIndex::new(log, def).score(proj)
}

/// One score per patient, in patient id order.
pub fn score_population(log: &EventLog, def: &GroupDefinition) -> Result<Vec<PatientScore>> {
    def.validate()?;
    let index = DefinitionIndex::new(log, def);
    let mut seen_a = vec![false; index.pattern_len as usize];
    let mut seen_d = vec![false; index.dbcs_len as usize];
    Ok(log
        .traces()
        .iter()
        .map(|t| {
            let (activity_score, dbc_score) = index.score_events(t.events(), &mut seen_a, &mut seen_d);
            PatientScore {
                patient_id: t.patient_id().into(),
                activity_score,
                dbc_score,
            }
        })
        .collect())
}

/// Patients whose scores are within both cut-offs, sorted by id.
pub fn classify(scores: &[PatientScore], alpha_f: u32, alpha_d: u32) -> Vec<String> {
    let mut members: Vec<String> = scores
        .iter()
        .filter(|s| s.within(alpha_f, alpha_d))
        .map(|s| s.patient_id.clone())
        .collect();
    members.sort_unstable();
    members.dedup();
    members
}
