//! Synthetic event logs with planted patient groups.
//!
//! Every patient receives background events whose activities and codes are
//! Zipf distributed. Members of a planted group additionally exhibit each of
//! the group's signature activities independently with probability `q`; a
//! signature event carries the group code with probability `r`. Non-members
//! pick up each signature activity with the (small) leak probability.

use std::collections::BTreeSet;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use cohortdef_core::{EventLog, EventLogBuilder};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, Zipf};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::Manifest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedGroup {
    pub name: String,
    pub size: usize,
    pub signature_activities: usize,
    /// Probability a member exhibits each signature activity.
    pub emission_prob: f64,
    /// Probability a signature event carries the group code.
    pub signature_dbc_prob: f64,
    /// Probability a non-member exhibits each signature activity.
    pub leak_prob: f64,
}

impl Default for PlantedGroup {
    fn default() -> Self {
        PlantedGroup {
            name: "planted".into(),
            size: 500,
            signature_activities: 6,
            emission_prob: 0.9,
            signature_dbc_prob: 0.9,
            leak_prob: 0.02,
        }
    }
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2017, 1, 1).unwrap()
}

fn default_span() -> u32 {
    365
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub population: usize,
    pub background_activities: usize,
    pub background_dbcs: usize,
    pub groups: Vec<PlantedGroup>,
    /// Mean number of background events per patient.
    pub events_per_patient: f64,
    pub zipf_exponent: f64,
    pub seed: u64,
    /// Timestamps fall uniformly in `[start, start + span_days)`.
    #[serde(default = "default_start")]
    pub start: NaiveDate,
    #[serde(default = "default_span")]
    pub span_days: u32,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            population: 10_000,
            background_activities: 200,
            background_dbcs: 100,
            groups: vec![PlantedGroup::default()],
            events_per_patient: 20.0,
            zipf_exponent: 1.0,
            seed: 0,
            start: default_start(),
            span_days: default_span(),
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Input(format!("invalid generator spec: {m}")));
        if self.population == 0 || self.background_activities == 0 || self.background_dbcs == 0 {
            return bad("population and alphabet sizes must be positive".into());
        }
        if !(self.events_per_patient > 0.0 && self.events_per_patient.is_finite()) {
            return bad("events_per_patient must be positive".into());
        }
        if !(self.zipf_exponent > 0.0 && self.zipf_exponent.is_finite()) {
            return bad("zipf_exponent must be positive".into());
        }
        if self.span_days == 0 {
            return bad("span_days must be positive".into());
        }
        let mut names = BTreeSet::new();
        for g in &self.groups {
            if !names.insert(g.name.as_str()) {
                return bad(format!("duplicate group `{}`", g.name));
            }
            if g.name.trim().is_empty() || g.name.contains(',') {
                return bad("group names must be non-empty and comma-free".into());
            }
            if g.size < 2 {
                return bad(format!("group `{}` needs at least 2 members", g.name));
            }
            if g.signature_activities == 0 {
                return bad(format!("group `{}` needs signature activities", g.name));
            }
            for p in [g.emission_prob, g.signature_dbc_prob, g.leak_prob] {
                if !(0.0..=1.0).contains(&p) {
                    return bad(format!("group `{}` has a probability outside [0, 1]", g.name));
                }
            }
        }
        let total: usize = self.groups.iter().map(|g| g.size).sum();
        if total > self.population {
            return bad(format!("group sizes sum to {total} > population {}", self.population));
        }
        Ok(())
    }

    pub fn patient_id(&self, index: usize) -> String {
        let width = self.population.to_string().len().max(5);
        format!("P{index:0width$}")
    }
}

pub fn activity_label(rank: usize) -> String {
    format!("act_{rank:04}")
}

pub fn dbc_label(rank: usize) -> String {
    format!("dbc_{rank:04}")
}

pub fn signature_label(group: &str, j: usize) -> String {
    format!("sig_{group}_{j}")
}

pub fn group_code(group: &str) -> String {
    format!("grp_{group}")
}

/// Declared-versus-emitted alphabet bookkeeping for one generated log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub population: usize,
    pub events: usize,
    pub declared_activities: usize,
    pub emitted_activities: usize,
    pub declared_dbcs: usize,
    pub emitted_dbcs: usize,
    /// Declared labels no event used; they are absent from the log.
    pub pruned_activities: Vec<String>,
    pub pruned_dbcs: Vec<String>,
    pub group_sizes: Vec<(String, usize)>,
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub log: EventLog,
    pub manifests: Vec<Manifest>,
    pub report: GenerationReport,
}

struct Labels {
    activities: Vec<String>,
    dbcs: Vec<String>,
    signatures: Vec<Vec<String>>,
    group_codes: Vec<String>,
}

impl Labels {
    fn new(spec: &GeneratorSpec) -> Self {
        Labels {
            activities: (0..spec.background_activities).map(activity_label).collect(),
            dbcs: (0..spec.background_dbcs).map(dbc_label).collect(),
            signatures: spec
                .groups
                .iter()
                .map(|g| (1..=g.signature_activities).map(|j| signature_label(&g.name, j)).collect())
                .collect(),
            group_codes: spec.groups.iter().map(|g| group_code(&g.name)).collect(),
        }
    }

    fn declared_activities(&self) -> impl Iterator<Item = &String> {
        self.activities.iter().chain(self.signatures.iter().flatten())
    }

    fn declared_dbcs(&self) -> impl Iterator<Item = &String> {
        self.dbcs.iter().chain(&self.group_codes)
    }
}

/// Deterministic for a fixed spec (including its seed).
pub fn generate(spec: &GeneratorSpec) -> Result<Generated> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let labels = Labels::new(spec);

    let mut order: Vec<usize> = (0..spec.population).collect();
    order.shuffle(&mut rng);
    let mut membership: Vec<Option<usize>> = vec![None; spec.population];
    let mut manifests = Vec::with_capacity(spec.groups.len());
    let mut offset = 0;
    for (gi, g) in spec.groups.iter().enumerate() {
        let mut members: Vec<String> = order[offset..offset + g.size]
            .iter()
            .map(|&p| {
                membership[p] = Some(gi);
                spec.patient_id(p)
            })
            .collect();
        members.sort();
        manifests.push(Manifest {
            group_name: g.name.clone(),
            members,
        });
        offset += g.size;
    }

    let zipf_a = Zipf::new(spec.background_activities as f64, spec.zipf_exponent)
        .map_err(|e| Error::Input(format!("zipf: {e}")))?;
    let zipf_d = Zipf::new(spec.background_dbcs as f64, spec.zipf_exponent)
        .map_err(|e| Error::Input(format!("zipf: {e}")))?;
    let poisson =
        Poisson::new(spec.events_per_patient).map_err(|e| Error::Input(format!("poisson: {e}")))?;
    let start: NaiveDateTime = spec.start.and_hms_opt(0, 0, 0).unwrap();
    let span_secs = spec.span_days as i64 * 86_400;

    let expected = spec.population as f64 * (spec.events_per_patient + 1.0);
    let mut builder = EventLogBuilder::with_capacity(expected as usize);
    for (p, member_of) in membership.iter().enumerate() {
        let id = spec.patient_id(p);
        let stamp = |rng: &mut ChaCha8Rng| start + Duration::seconds(rng.random_range(0..span_secs));
        let background = (poisson.sample(&mut rng) as usize).max(1);
        for _ in 0..background {
            let a = zipf_a.sample(&mut rng) as usize - 1;
            let d = zipf_d.sample(&mut rng) as usize - 1;
            let t = stamp(&mut rng);
            builder.push(&id, &labels.activities[a], &labels.dbcs[d], t)?;
        }
        for (gi, g) in spec.groups.iter().enumerate() {
            let prob = if *member_of == Some(gi) {
                g.emission_prob
            } else {
                g.leak_prob
            };
            for sig in &labels.signatures[gi] {
                if rng.random_bool(prob) {
                    let code = if rng.random_bool(g.signature_dbc_prob) {
                        &labels.group_codes[gi]
                    } else {
                        &labels.dbcs[zipf_d.sample(&mut rng) as usize - 1]
                    };
                    let t = stamp(&mut rng);
                    builder.push(&id, sig, code, t)?;
                }
            }
        }
    }
    let log = builder.build()?;

    let pruned = |declared: Vec<&String>, present: &[String]| -> Vec<String> {
        declared
            .into_iter()
            .filter(|l| present.binary_search(l).is_err())
            .cloned()
            .collect()
    };
    let pruned_activities = pruned(labels.declared_activities().collect(), log.activity_alphabet());
    let pruned_dbcs = pruned(labels.declared_dbcs().collect(), log.dbc_alphabet());
    let report = GenerationReport {
        population: spec.population,
        events: log.num_events(),
        declared_activities: labels.declared_activities().count(),
        emitted_activities: log.activity_alphabet().len(),
        declared_dbcs: labels.declared_dbcs().count(),
        emitted_dbcs: log.dbc_alphabet().len(),
        pruned_activities,
        pruned_dbcs,
        group_sizes: spec.groups.iter().map(|g| (g.name.clone(), g.size)).collect(),
    };
    Ok(Generated {
        log,
        manifests,
        report,
    })
}

/// Analytic expectations for one planted group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupExpectation {
    pub name: String,
    pub size: usize,
    /// Entry `m - 1`: expected support among members of any `m` signature
    /// activities, `q^m`.
    pub member_itemset_support: Vec<f64>,
    /// Same among non-members, `leak^m`.
    pub nonmember_itemset_support: Vec<f64>,
    /// Expected fraction of members with at least one signature event
    /// carrying the group code, `1 - (1 - q r)^k`.
    pub member_code_cooccurrence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedStats {
    pub population: usize,
    pub expected_background_events: f64,
    pub expected_signature_events: f64,
    pub expected_events: f64,
    pub groups: Vec<GroupExpectation>,
}

impl ExpectedStats {
    pub fn group(&self, name: &str) -> Option<&GroupExpectation> {
        self.groups.iter().find(|g| g.name == name)
    }
}

pub fn describe(spec: &GeneratorSpec) -> Result<ExpectedStats> {
    spec.validate()?;
    let lambda = spec.events_per_patient;
    // Background counts are Poisson(lambda) raised to at least 1.
    let background = spec.population as f64 * (lambda + (-lambda).exp());
    let mut signature = 0.0;
    let groups = spec
        .groups
        .iter()
        .map(|g| {
            let k = g.signature_activities;
            let outsiders = (spec.population - g.size) as f64;
            signature += k as f64 * (g.size as f64 * g.emission_prob + outsiders * g.leak_prob);
            GroupExpectation {
                name: g.name.clone(),
                size: g.size,
                member_itemset_support: (1..=k).map(|m| g.emission_prob.powi(m as i32)).collect(),
                nonmember_itemset_support: (1..=k).map(|m| g.leak_prob.powi(m as i32)).collect(),
                member_code_cooccurrence: 1.0
                    - (1.0 - g.emission_prob * g.signature_dbc_prob).powi(k as i32),
            }
        })
        .collect();
    Ok(ExpectedStats {
        population: spec.population,
        expected_background_events: background,
        expected_signature_events: signature,
        expected_events: background + signature,
        groups,
    })
}
