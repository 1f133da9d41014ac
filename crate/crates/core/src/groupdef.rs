//! Group definitions: the longest frequent activity pattern, the codes that
//! co-occur with it, and the stepwise threshold relaxation an expert drives.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eventlog::{ActivityId, CodeId, EventLog, PatientProjection};
use crate::mining::{longest_frequent, MiningResult};
use crate::threshold::{snap, Threshold};

/// Where a definition came from. Kept alongside the definition so an
/// approved definition can be audited and reproduced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub train_ids: Vec<String>,
    #[serde(default)]
    pub holdout_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<String>,
    /// Recall was estimated on patients that also built the definition.
    #[serde(default)]
    pub optimistic_recall: bool,
    #[serde(default)]
    pub degenerate_curve: bool,
}

impl Provenance {
    pub fn for_sample(train_ids: Vec<String>) -> Self {
        Provenance {
            tool: "cohortdef".into(),
            version: crate::VERSION.into(),
            train_ids,
            ..Provenance::default()
        }
    }
}

/// The learned artifact: pattern `F`, code set `D`, the thresholds that
/// produced them and the integer cut-offs used for classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDefinition {
    pub pattern: Vec<String>,
    pub dbcs: Vec<String>,
    pub phi_a: f64,
    pub phi_d: f64,
    pub alpha_f: u32,
    pub alpha_d: u32,
    #[serde(default)]
    pub provenance: Provenance,
}

impl GroupDefinition {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidDefinition(msg.into()));
        if self.pattern.is_empty() {
            return fail("pattern is empty");
        }
        Threshold::new(self.phi_a)?;
        Threshold::new(self.phi_d)?;
        if self.alpha_f as usize > self.pattern.len() {
            return fail("alpha_f exceeds the pattern size");
        }
        if self.alpha_d as usize > self.dbcs.len() {
            return fail("alpha_d exceeds the code set size");
        }
        Ok(())
    }
}

/// Items of the first pattern in mining order: the longest, ties broken by
/// support and then by the lexicographically smallest item list.
pub fn select_pattern(result: &MiningResult) -> Result<Vec<ActivityId>> {
    result
        .patterns
        .first()
        .map(|p| p.items().to_vec())
        .ok_or(Error::EmptyPattern(result.threshold))
}

fn cooccurs(p: &PatientProjection, code: CodeId, pattern: &[ActivityId]) -> bool {
    p.cooccurrence()
        .iter()
        .any(|&(a, d)| d == code && pattern.binary_search(&a).is_ok())
}

/// Patients with at least one event carrying `code` together with an
/// activity of `pattern`. `pattern` must be sorted.
pub fn dbc_support_count(code: CodeId, pattern: &[ActivityId], sample: &[PatientProjection]) -> usize {
    sample.iter().filter(|p| cooccurs(p, code, pattern)).count()
}

pub fn dbc_support(code: CodeId, pattern: &[ActivityId], sample: &[PatientProjection]) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let pattern = sorted(pattern);
    Ok(dbc_support_count(code, &pattern, sample) as f64 / sample.len() as f64)
}

fn sorted<T: Ord + Copy>(items: &[T]) -> Vec<T> {
    let mut v = items.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// Co-occurrence counts for every code any sample patient carries.
fn code_supports(pattern: &[ActivityId], sample: &[PatientProjection]) -> Vec<(CodeId, usize)> {
    let pattern = sorted(pattern);
    let mut hits: Vec<CodeId> = Vec::new();
    for p in sample {
        let mut mine: Vec<CodeId> = p
            .cooccurrence()
            .iter()
            .filter(|(a, _)| pattern.binary_search(a).is_ok())
            .map(|&(_, d)| d)
            .collect();
        mine.sort_unstable();
        mine.dedup();
        hits.extend(mine);
    }
    hits.sort_unstable();
    let mut counts: Vec<(CodeId, usize)> = Vec::new();
    for d in hits {
        match counts.last_mut() {
            Some((last, c)) if *last == d => *c += 1,
            _ => counts.push((d, 1)),
        }
    }
    counts
}

/// Codes whose co-occurrence support with `pattern` reaches `phi_d`.
pub fn select_dbcs(pattern: &[ActivityId], sample: &[PatientProjection], phi_d: f64) -> Result<Vec<CodeId>> {
    let threshold = Threshold::new(phi_d)?;
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(code_supports(pattern, sample)
        .into_iter()
        .filter(|&(_, c)| threshold.admits(c, sample.len()))
        .map(|(d, _)| d)
        .collect())
}

/// Threshold schedule `start, start - step, start - 2*step, ...` down to
/// `floor` (inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxSchedule {
    pub start: f64,
    pub step: f64,
    pub floor: f64,
}

impl Default for RelaxSchedule {
    fn default() -> Self {
        RelaxSchedule {
            start: 1.0,
            step: 0.05,
            floor: 0.05,
        }
    }
}

impl RelaxSchedule {
    pub fn with_step(step: f64) -> Self {
        RelaxSchedule {
            step,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step < 1.0) {
            return Err(Error::InvalidStep(self.step));
        }
        Threshold::new(self.start)?;
        Threshold::new(self.floor)?;
        Ok(())
    }

    /// The `index`-th threshold, or `None` past the floor.
    pub fn threshold(&self, index: usize) -> Option<f64> {
        let t = snap(self.start - index as f64 * self.step);
        (t >= snap(self.floor) && t > 0.0).then_some(t)
    }

    pub fn thresholds(&self) -> impl Iterator<Item = f64> + '_ {
        (0..).map_while(move |i| self.threshold(i))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxationStep<T> {
    pub threshold: f64,
    /// Items admitted at this threshold that were not selected before.
    pub added_items: Vec<T>,
    pub current_selection: Vec<T>,
}

impl<T: Copy + Ord> RelaxationStep<T> {
    fn between(threshold: f64, previous: &[T], current: Vec<T>) -> Self {
        let added_items = current
            .iter()
            .copied()
            .filter(|x| previous.binary_search(x).is_err())
            .collect();
        RelaxationStep {
            threshold,
            added_items,
            current_selection: current,
        }
    }

    pub fn map<U, F: FnMut(T) -> U>(&self, mut f: F) -> RelaxationStep<U> {
        RelaxationStep {
            threshold: self.threshold,
            added_items: self.added_items.iter().map(|&x| f(x)).collect(),
            current_selection: self.current_selection.iter().map(|&x| f(x)).collect(),
        }
    }
}

/// The pattern selection at `threshold` that keeps everything already
/// selected: the longest frequent pattern containing `previous`, or
/// `previous` itself when nothing extends it.
pub fn extend_pattern(
    sample: &[PatientProjection],
    threshold: f64,
    previous: &[ActivityId],
) -> Result<Vec<ActivityId>> {
    Ok(longest_frequent(sample, threshold, previous)?
        .map(|p| p.items().to_vec())
        .unwrap_or_else(|| previous.to_vec()))
}

/// Lazily evaluated activity relaxation. Each step holds the pattern the
/// expert would accept at that threshold. A selection never drops items
/// accepted at a stricter threshold.
pub struct ActivityRelaxation<'a> {
    sample: &'a [PatientProjection],
    schedule: RelaxSchedule,
    index: usize,
    selection: Vec<ActivityId>,
}

impl Iterator for ActivityRelaxation<'_> {
    type Item = RelaxationStep<ActivityId>;

    fn next(&mut self) -> Option<Self::Item> {
        let threshold = self.schedule.threshold(self.index)?;
        self.index += 1;
        let current = extend_pattern(self.sample, threshold, &self.selection).ok()?;
        let step = RelaxationStep::between(threshold, &self.selection, current.clone());
        self.selection = current;
        Some(step)
    }
}

pub fn relax_activities(
    sample: &[PatientProjection],
    schedule: RelaxSchedule,
) -> Result<ActivityRelaxation<'_>> {
    schedule.validate()?;
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(ActivityRelaxation {
        sample,
        schedule,
        index: 0,
        selection: Vec::new(),
    })
}

/// Lazily evaluated code relaxation for a fixed activity pattern.
pub struct DbcRelaxation {
    supports: Vec<(CodeId, usize)>,
    sample_size: usize,
    schedule: RelaxSchedule,
    index: usize,
    selection: Vec<CodeId>,
}

impl Iterator for DbcRelaxation {
    type Item = RelaxationStep<CodeId>;

    fn next(&mut self) -> Option<Self::Item> {
        let threshold = self.schedule.threshold(self.index)?;
        self.index += 1;
        let t = Threshold::new(threshold).ok()?;
        let current: Vec<CodeId> = self
            .supports
            .iter()
            .filter(|&&(_, c)| t.admits(c, self.sample_size))
            .map(|&(d, _)| d)
            .collect();
        let step = RelaxationStep::between(threshold, &self.selection, current.clone());
        self.selection = current;
        Some(step)
    }
}

pub fn relax_dbcs(
    pattern: &[ActivityId],
    sample: &[PatientProjection],
    schedule: RelaxSchedule,
) -> Result<DbcRelaxation> {
    schedule.validate()?;
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(DbcRelaxation {
        supports: code_supports(pattern, sample),
        sample_size: sample.len(),
        schedule,
        index: 0,
        selection: Vec::new(),
    })
}

/// Mines `sample`, keeps the longest frequent pattern and the codes
/// co-occurring with it. Cut-offs are left at 0 until calibration.
pub fn build_definition(
    log: &EventLog,
    sample: &[PatientProjection],
    phi_a: f64,
    phi_d: f64,
) -> Result<GroupDefinition> {
    Threshold::new(phi_d)?;
    let pattern = longest_frequent(sample, phi_a, &[])?
        .ok_or(Error::EmptyPattern(phi_a))?
        .items()
        .to_vec();
    let dbcs = select_dbcs(&pattern, sample, phi_d)?;
    Ok(definition_from_ids(log, sample, &pattern, &dbcs, phi_a, phi_d))
}

pub fn definition_from_ids(
    log: &EventLog,
    sample: &[PatientProjection],
    pattern: &[ActivityId],
    dbcs: &[CodeId],
    phi_a: f64,
    phi_d: f64,
) -> GroupDefinition {
    let mut train_ids: Vec<String> = sample.iter().map(|p| p.patient_id().into()).collect();
    train_ids.sort_unstable();
    GroupDefinition {
        pattern: sorted(pattern).iter().map(|&a| log.activity_label(a).into()).collect(),
        dbcs: sorted(dbcs).iter().map(|&d| log.dbc_label(d).into()).collect(),
        phi_a,
        phi_d,
        alpha_f: 0,
        alpha_d: 0,
        provenance: Provenance::for_sample(train_ids),
    }
}
