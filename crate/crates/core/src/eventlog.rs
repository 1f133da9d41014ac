//! Event logs, per-patient traces and the set projections every algorithm
//! downstream consumes.
//!
//! Labels are interned: activity and code ids index the log's sorted
//! alphabets, so ordering ids is the same as ordering labels.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use hashbrown::HashMap;

use crate::error::{Error, Result};

pub type Timestamp = chrono::NaiveDateTime;

/// Index into [`EventLog::activity_alphabet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActivityId(pub u32);

/// Index into [`EventLog::dbc_alphabet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub activity: ActivityId,
    pub dbc: CodeId,
    pub timestamp: Timestamp,
}

/// One patient's events in non-decreasing timestamp order. Events with equal
/// timestamps keep their input order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    patient_id: String,
    events: Vec<Event>,
}

impl Trace {
    pub fn patient_id(&self) -> &str {
        &self.patient_id
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }
}

/// A labelled view of one event, as it appears in the CSV form of a log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventRecord<'a> {
    pub patient_id: &'a str,
    pub activity: &'a str,
    pub dbc: &'a str,
    pub timestamp: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventLog {
    traces: Vec<Trace>,
    activities: Vec<String>,
    dbcs: Vec<String>,
}

impl EventLog {
    /// Traces sorted by patient id.
    pub fn traces(&self) -> &[Trace] {
        &self.traces
    }

    pub fn trace(&self, patient_id: &str) -> Option<&Trace> {
        self.traces
            .binary_search_by(|t| t.patient_id.as_str().cmp(patient_id))
            .ok()
            .map(|i| &self.traces[i])
    }

    pub fn contains_patient(&self, patient_id: &str) -> bool {
        self.trace(patient_id).is_some()
    }

    pub fn patient_ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.traces.iter().map(|t| t.patient_id.as_str())
    }

    pub fn num_patients(&self) -> usize {
        self.traces.len()
    }

    pub fn num_events(&self) -> usize {
        self.traces.iter().map(|t| t.events.len()).sum()
    }

    pub fn activity_alphabet(&self) -> &[String] {
        &self.activities
    }

    pub fn dbc_alphabet(&self) -> &[String] {
        &self.dbcs
    }

    pub fn activity_label(&self, id: ActivityId) -> &str {
        &self.activities[id.0 as usize]
    }

    pub fn dbc_label(&self, id: CodeId) -> &str {
        &self.dbcs[id.0 as usize]
    }

    pub fn activity_id(&self, label: &str) -> Option<ActivityId> {
        self.activities
            .binary_search_by(|a| a.as_str().cmp(label))
            .ok()
            .map(|i| ActivityId(i as u32))
    }

    pub fn dbc_id(&self, label: &str) -> Option<CodeId> {
        self.dbcs
            .binary_search_by(|d| d.as_str().cmp(label))
            .ok()
            .map(|i| CodeId(i as u32))
    }

    pub fn project(&self, patient_id: &str) -> Result<PatientProjection> {
        self.trace(patient_id)
            .map(PatientProjection::of_trace)
            .ok_or_else(|| Error::UnknownPatient(patient_id.to_string()))
    }

    /// One projection per patient, ordered by patient id.
    pub fn project_all(&self) -> Vec<PatientProjection> {
        self.traces.iter().map(PatientProjection::of_trace).collect()
    }

    /// Projections for the given patients, in the order given.
    pub fn project_many<I, S>(&self, patient_ids: I) -> Result<Vec<PatientProjection>>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        patient_ids.into_iter().map(|p| self.project(p.as_ref())).collect()
    }

    /// All events in trace order, with labels resolved.
    pub fn records(&self) -> impl Iterator<Item = EventRecord<'_>> + '_ {
        self.traces.iter().flat_map(move |t| {
            t.events.iter().map(move |e| EventRecord {
                patient_id: &t.patient_id,
                activity: self.activity_label(e.activity),
                dbc: self.dbc_label(e.dbc),
                timestamp: e.timestamp,
            })
        })
    }

    /// Rebuilds the log from the events accepted by `keep`. Patients and
    /// labels left without events disappear from the result.
    pub fn filter_events<F>(&self, mut keep: F) -> Result<EventLog>
    where
        F: FnMut(&EventRecord<'_>) -> bool,
    {
        let mut builder = EventLogBuilder::new();
        for record in self.records() {
            if keep(&record) {
                builder.push(
                    record.patient_id,
                    record.activity,
                    record.dbc,
                    record.timestamp,
                )?;
            }
        }
        builder.build()
    }
}

#[derive(Clone, Copy)]
struct Row {
    patient: u32,
    activity: u32,
    dbc: u32,
    timestamp: Timestamp,
}

#[derive(Default)]
struct Interner {
    ids: HashMap<String, u32>,
    labels: Vec<String>,
}

impl Interner {
    fn intern(&mut self, label: &str) -> u32 {
        if let Some(&id) = self.ids.get(label) {
            return id;
        }
        let id = self.labels.len() as u32;
        self.ids.insert(label.to_string(), id);
        self.labels.push(label.to_string());
        id
    }

    /// Sorted labels plus the old-id to new-id map.
    fn into_sorted(self) -> (Vec<String>, Vec<u32>) {
        let mut order: Vec<u32> = (0..self.labels.len() as u32).collect();
        order.sort_unstable_by(|&a, &b| self.labels[a as usize].cmp(&self.labels[b as usize]));
        let mut remap = alloc::vec![0u32; order.len()];
        for (new, &old) in order.iter().enumerate() {
            remap[old as usize] = new as u32;
        }
        let mut labels = self.labels;
        let sorted = order
            .iter()
            .map(|&old| core::mem::take(&mut labels[old as usize]))
            .collect();
        (sorted, remap)
    }
}

/// Accumulates events in any order and produces a validated [`EventLog`].
#[derive(Default)]
pub struct EventLogBuilder {
    patients: Interner,
    activities: Interner,
    dbcs: Interner,
    rows: Vec<Row>,
}

impl EventLogBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(events: usize) -> Self {
        EventLogBuilder {
            rows: Vec::with_capacity(events),
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Adds one event. Labels are trimmed; empty labels are rejected with the
    /// 1-based index of the offending record.
    pub fn push(
        &mut self,
        patient_id: &str,
        activity: &str,
        dbc: &str,
        timestamp: Timestamp,
    ) -> Result<()> {
        let line = self.rows.len() as u64 + 1;
        let field = |name: &str, value: &str| -> Result<()> {
            if value.trim().is_empty() {
                Err(Error::InvalidRecord {
                    line,
                    reason: format!("empty {name}"),
                })
            } else {
                Ok(())
            }
        };
        field("patient_id", patient_id)?;
        field("activity", activity)?;
        field("dbc", dbc)?;
        let row = Row {
            patient: self.patients.intern(patient_id.trim()),
            activity: self.activities.intern(activity.trim()),
            dbc: self.dbcs.intern(dbc.trim()),
            timestamp,
        };
        self.rows.push(row);
        Ok(())
    }

    pub fn build(self) -> Result<EventLog> {
        if self.rows.is_empty() {
            return Err(Error::EmptyLog);
        }
        let (patients, patient_map) = self.patients.into_sorted();
        let (activities, activity_map) = self.activities.into_sorted();
        let (dbcs, dbc_map) = self.dbcs.into_sorted();

        let mut counts = alloc::vec![0usize; patients.len()];
        for row in &self.rows {
            counts[patient_map[row.patient as usize] as usize] += 1;
        }
        let mut buckets: Vec<Vec<Event>> = counts.iter().map(|&c| Vec::with_capacity(c)).collect();
        for row in &self.rows {
            buckets[patient_map[row.patient as usize] as usize].push(Event {
                activity: ActivityId(activity_map[row.activity as usize]),
                dbc: CodeId(dbc_map[row.dbc as usize]),
                timestamp: row.timestamp,
            });
        }
        drop(self.rows);

        let traces = patients
            .into_iter()
            .zip(buckets)
            .map(|(patient_id, mut events)| {
                events.sort_by_key(|e| e.timestamp);
                Trace { patient_id, events }
            })
            .collect();
        Ok(EventLog {
            traces,
            activities,
            dbcs,
        })
    }
}

/// The distinct activities (A_p), distinct codes (D_p) and distinct
/// (activity, code) pairs seen within single events of one patient.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatientProjection {
    patient_id: String,
    activities: Vec<ActivityId>,
    dbcs: Vec<CodeId>,
    cooccurrence: Vec<(ActivityId, CodeId)>,
}

impl PatientProjection {
    pub fn of_trace(trace: &Trace) -> Self {
        Self::from_pairs(
            trace.patient_id.clone(),
            trace.events.iter().map(|e| (e.activity, e.dbc)),
        )
    }

    /// Builds a projection from the (activity, code) pairs of its events.
    pub fn from_pairs<I>(patient_id: impl Into<String>, pairs: I) -> Self
    where
        I: IntoIterator<Item = (ActivityId, CodeId)>,
    {
        let mut cooccurrence: Vec<(ActivityId, CodeId)> = pairs.into_iter().collect();
        cooccurrence.sort_unstable();
        cooccurrence.dedup();
        let mut activities: Vec<ActivityId> = cooccurrence.iter().map(|p| p.0).collect();
        activities.sort_unstable();
        activities.dedup();
        let mut dbcs: Vec<CodeId> = cooccurrence.iter().map(|p| p.1).collect();
        dbcs.sort_unstable();
        dbcs.dedup();
        PatientProjection {
            patient_id: patient_id.into(),
            activities,
            dbcs,
            cooccurrence,
        }
    }

    pub fn patient_id(&self) -> &str {
        &self.patient_id
    }

    /// Sorted, distinct.
    pub fn activities(&self) -> &[ActivityId] {
        &self.activities
    }

    /// Sorted, distinct.
    pub fn dbcs(&self) -> &[CodeId] {
        &self.dbcs
    }

    /// Sorted, distinct.
    pub fn cooccurrence(&self) -> &[(ActivityId, CodeId)] {
        &self.cooccurrence
    }

    pub fn has_activity(&self, activity: ActivityId) -> bool {
        self.activities.binary_search(&activity).is_ok()
    }

    pub fn has_dbc(&self, dbc: CodeId) -> bool {
        self.dbcs.binary_search(&dbc).is_ok()
    }

    pub fn contains_all(&self, items: &[ActivityId]) -> bool {
        items.iter().all(|&a| self.has_activity(a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use chrono::NaiveDate;

    fn ts(day: u32) -> Timestamp {
        NaiveDate::from_ymd_opt(2017, 1, day)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap()
    }

    /// Table 1 of the worked example: five events over three patients.
    fn snippet() -> EventLog {
        let mut b = EventLogBuilder::new();
        b.push("Patient1", "Action1", "DBC1", ts(1)).unwrap();
        b.push("Patient2", "Action2", "DBC2", ts(1)).unwrap();
        b.push("Patient3", "Action1", "DBC1", ts(3)).unwrap();
        b.push("Patient1", "Action1", "DBC1", ts(2)).unwrap();
        b.push("Patient2", "Action5", "DBC5", ts(2)).unwrap();
        b.build().unwrap()
    }

    #[test]
    fn snippet_alphabets_and_patients() {
        let log = snippet();
        assert_eq!(log.num_patients(), 3);
        assert_eq!(log.activity_alphabet(), ["Action1", "Action2", "Action5"]);
        assert_eq!(log.dbc_alphabet(), ["DBC1", "DBC2", "DBC5"]);
        let ids: Vec<_> = log.project_all().iter().map(|p| p.patient_id().to_string()).collect();
        assert_eq!(ids, ["Patient1", "Patient2", "Patient3"]);
    }

    #[test]
    fn snippet_patient1_projection() {
        let log = snippet();
        let p = log.project("Patient1").unwrap();
        let a1 = log.activity_id("Action1").unwrap();
        let d1 = log.dbc_id("DBC1").unwrap();
        assert_eq!(p.activities(), [a1]);
        assert_eq!(p.dbcs(), [d1]);
        assert_eq!(log.trace("Patient1").unwrap().events().len(), 2);
    }

    #[test]
    fn projection_deduplicates() {
        let (a1, a2, d1) = (ActivityId(0), ActivityId(1), CodeId(0));
        let p = PatientProjection::from_pairs("p", vec![(a1, d1), (a1, d1), (a2, d1)]);
        assert_eq!(p.activities(), [a1, a2]);
        assert_eq!(p.dbcs(), [d1]);
        assert_eq!(p.cooccurrence(), [(a1, d1), (a2, d1)]);
    }

    #[test]
    fn out_of_order_events_are_sorted_and_ties_stable() {
        let mut b = EventLogBuilder::new();
        b.push("p1", "late", "d", ts(9)).unwrap();
        b.push("p1", "tie-a", "d", ts(2)).unwrap();
        b.push("p1", "early", "d", ts(1)).unwrap();
        b.push("p1", "tie-b", "d", ts(2)).unwrap();
        let log = b.build().unwrap();
        let labels: Vec<_> = log.records().map(|r| r.activity).collect();
        assert_eq!(labels, ["early", "tie-a", "tie-b", "late"]);
    }

    #[test]
    fn labels_are_trimmed_and_case_sensitive() {
        let mut b = EventLogBuilder::new();
        b.push(" p1 ", " A ", "d", ts(1)).unwrap();
        b.push("p1", "a", "d", ts(1)).unwrap();
        let log = b.build().unwrap();
        assert_eq!(log.activity_alphabet(), ["A", "a"]);
        assert_eq!(log.num_patients(), 1);
    }

    #[test]
    fn rejects_empty_fields_and_empty_logs() {
        let mut b = EventLogBuilder::new();
        b.push("p1", "a", "d", ts(1)).unwrap();
        let err = b.push("p1", "  ", "d", ts(1)).unwrap_err();
        assert_eq!(
            err,
            Error::InvalidRecord {
                line: 2,
                reason: "empty activity".into()
            }
        );
        assert_eq!(EventLogBuilder::new().build().unwrap_err(), Error::EmptyLog);
    }

    #[test]
    fn unknown_patient_is_not_found() {
        assert_eq!(
            snippet().project("nobody").unwrap_err(),
            Error::UnknownPatient("nobody".into())
        );
    }

    #[test]
    fn filter_prunes_alphabets() {
        let log = snippet();
        let day1 = log.filter_events(|r| r.timestamp == ts(1)).unwrap();
        assert_eq!(day1.num_patients(), 2);
        assert_eq!(day1.activity_alphabet(), ["Action1", "Action2"]);
    }
}
