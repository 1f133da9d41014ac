//! End-to-end runs: sample, define, calibrate, classify, evaluate.
//!
//! Each stage is also exposed on its own so the CLI subcommands and the
//! chained `pipeline` command share one implementation and write the same
//! bytes.

use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDateTime;
use cohortdef_core::calibration::sweep;
use cohortdef_core::{
    build_definition, calibrate, classify, draw_sample, evaluate, score_population, spearman,
    Calibrated, CalibrationResult, EvalReport, EventLog, GroupDefinition, Method, PatientScore,
    SamplePlan,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{self, Manifest};

pub const SAMPLE_FILE: &str = "sample.json";
pub const DEFINITION_FILE: &str = "definition.json";
pub const CALIBRATION_FILE: &str = "calibration.json";
pub const SCORES_FILE: &str = "scores.csv";
pub const GROUP_FILE: &str = "group.txt";
pub const EVALUATION_FILE: &str = "evaluation.json";
pub const SCATTER_FILE: &str = "recall_scatter.csv";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub phi_a: f64,
    pub phi_d: f64,
    pub sample_size: usize,
    pub split: f64,
    /// Relaxation step for interactive sessions and `relax`.
    pub step: f64,
    pub method: Method,
    pub seed: u64,
    /// F-measure weight.
    pub n: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            phi_a: 0.8,
            phi_d: 0.8,
            sample_size: 30,
            split: 0.5,
            step: 0.05,
            method: Method::Elbow,
            seed: 0,
            n: 1.0,
        }
    }
}

/// Draws the expert sample from `truth` and builds an uncalibrated
/// definition from its training half. The holdout and seed are recorded in
/// the provenance so calibration can run from the definition file alone.
pub fn define(log: &EventLog, truth: &[String], cfg: &RunConfig) -> Result<(SamplePlan, GroupDefinition)> {
    let plan = draw_sample(truth, cfg.sample_size, cfg.split, cfg.seed)?;
    let mut def = define_from_ids(log, &plan.train, &plan.holdout, cfg)?;
    def.provenance.seed = Some(cfg.seed);
    Ok((plan, def))
}

pub fn define_from_ids(
    log: &EventLog,
    train: &[String],
    holdout: &[String],
    cfg: &RunConfig,
) -> Result<GroupDefinition> {
    let sample = log.project_many(train)?;
    let mut def = build_definition(log, &sample, cfg.phi_a, cfg.phi_d)?;
    let mut holdout = holdout.to_vec();
    holdout.sort_unstable();
    holdout.dedup();
    def.provenance.holdout_ids = holdout;
    Ok(def)
}

/// Calibrates on `holdout`, or on the holdout recorded in the definition.
pub fn calibrate_definition(
    log: &EventLog,
    def: &GroupDefinition,
    holdout: Option<&[String]>,
    method: Method,
) -> Result<Calibrated> {
    let holdout = holdout.unwrap_or(&def.provenance.holdout_ids);
    if holdout.is_empty() {
        return Err(Error::Input(
            "no holdout patients: pass a holdout list or a definition that records one".into(),
        ));
    }
    Ok(calibrate(log, def, holdout, method)?)
}

/// Scores and the members within the definition's cut-offs.
pub fn classify_definition(log: &EventLog, def: &GroupDefinition) -> Result<(Vec<PatientScore>, Vec<String>)> {
    let scores = score_population(log, def)?;
    let members = classify(&scores, def.alpha_f, def.alpha_d);
    Ok((scores, members))
}

/// One grid cell with both the holdout estimate and the recall against the
/// full truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScatterPoint {
    pub alpha_f: u32,
    pub alpha_d: u32,
    pub group_size: usize,
    pub recall_bar: f64,
    pub true_recall: f64,
}

pub fn recall_scatter(
    scores: &[PatientScore],
    holdout: &[String],
    truth: &[String],
    max_f: u32,
    max_d: u32,
) -> Result<Vec<ScatterPoint>> {
    let estimated = sweep(scores, holdout, max_f, max_d)?;
    let actual = sweep(scores, truth, max_f, max_d)?;
    Ok(estimated
        .iter()
        .zip(&actual)
        .map(|(e, a)| ScatterPoint {
            alpha_f: e.alpha_f,
            alpha_d: e.alpha_d,
            group_size: e.group_size,
            recall_bar: e.recall_bar(),
            true_recall: a.recall_bar(),
        })
        .collect())
}

/// Spearman rho between the estimate and the true recall over the grid, or
/// `None` when either column is constant.
pub fn recall_validity(scatter: &[ScatterPoint]) -> Option<f64> {
    let xs: Vec<f64> = scatter.iter().map(|p| p.recall_bar).collect();
    let ys: Vec<f64> = scatter.iter().map(|p| p.true_recall).collect();
    spearman(&xs, &ys).ok()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineRun {
    pub plan: SamplePlan,
    pub definition: GroupDefinition,
    pub calibration: CalibrationResult,
    #[serde(skip)]
    pub scores: Vec<PatientScore>,
    pub members: Vec<String>,
    pub report: EvalReport,
    pub scatter: Vec<ScatterPoint>,
    pub recall_validity: Option<f64>,
}

impl PipelineRun {
    pub fn degenerate(&self) -> bool {
        self.definition.provenance.degenerate_curve
    }
}

pub fn run(log: &EventLog, truth: &[String], cfg: &RunConfig) -> Result<PipelineRun> {
    let (plan, def) = define(log, truth, cfg)?;
    let Calibrated { result, definition } = calibrate_definition(log, &def, None, cfg.method)?;
    let (scores, members) = classify_definition(log, &definition)?;
    let report = evaluate(&members, truth, cfg.n)?;
    let scatter = recall_scatter(
        &scores,
        &plan.holdout,
        truth,
        definition.pattern.len() as u32,
        definition.dbcs.len() as u32,
    )?;
    let recall_validity = recall_validity(&scatter);
    Ok(PipelineRun {
        plan,
        definition,
        calibration: result,
        scores,
        members,
        report,
        scatter,
        recall_validity,
    })
}

pub fn write_members(path: impl AsRef<Path>, members: &[String]) -> Result<()> {
    let mut text = String::new();
    for m in members {
        text.push_str(m);
        text.push('\n');
    }
    io::write_text(path, &text)
}

pub fn write_scores_path(path: impl AsRef<Path>, scores: &[PatientScore], def: &GroupDefinition) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    io::write_scores(std::io::BufWriter::new(file), scores, def.alpha_f, def.alpha_d)
}

pub fn write_scatter(path: impl AsRef<Path>, scatter: &[ScatterPoint]) -> Result<()> {
    let mut text = String::from("alpha_f,alpha_d,group_size,recall_bar,true_recall\n");
    for p in scatter {
        let _ = writeln!(
            text,
            "{},{},{},{},{}",
            p.alpha_f, p.alpha_d, p.group_size, p.recall_bar, p.true_recall
        );
    }
    io::write_text(path, &text)
}

/// Writes every artifact of a run into `dir`, creating it if needed.
pub fn write_artifacts(dir: impl AsRef<Path>, run: &PipelineRun) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    io::write_json(dir.join(SAMPLE_FILE), &run.plan)?;
    io::write_json(dir.join(DEFINITION_FILE), &run.definition)?;
    io::write_json(dir.join(CALIBRATION_FILE), &run.calibration)?;
    write_scores_path(dir.join(SCORES_FILE), &run.scores, &run.definition)?;
    write_members(dir.join(GROUP_FILE), &run.members)?;
    io::write_json(dir.join(EVALUATION_FILE), &run.report)?;
    write_scatter(dir.join(SCATTER_FILE), &run.scatter)
}

/// A time window `[from, to)` with the groups known in it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Period {
    pub label: String,
    pub from: NaiveDateTime,
    pub to: NaiveDateTime,
    pub manifests: Vec<Manifest>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodReport {
    pub period: String,
    pub group: String,
    pub seed: u64,
    pub pattern_len: usize,
    pub dbcs_len: usize,
    pub alpha_f: u32,
    pub alpha_d: u32,
    pub report: EvalReport,
}

/// Runs the pipeline per period and group. Every run draws its own sample;
/// run `i` (periods outer, groups inner) uses seed `cfg.seed + i`.
pub fn yearly_report(log: &EventLog, periods: &[Period], cfg: &RunConfig) -> Result<Vec<PeriodReport>> {
    let mut out = Vec::new();
    let mut index = 0u64;
    for period in periods {
        if period.from >= period.to {
            return Err(Error::Input(format!("period `{}` is empty", period.label)));
        }
        let window = log.filter_events(|e| e.timestamp >= period.from && e.timestamp < period.to)?;
        for manifest in &period.manifests {
            let truth: Vec<String> = manifest
                .members
                .iter()
                .filter(|m| window.contains_patient(m))
                .cloned()
                .collect();
            if truth.is_empty() {
                return Err(Error::Input(format!(
                    "group `{}` has no members in period `{}`",
                    manifest.group_name, period.label
                )));
            }
            let run_cfg = RunConfig {
                seed: cfg.seed.wrapping_add(index),
                ..*cfg
            };
            index += 1;
            let r = run(&window, &truth, &run_cfg)?;
            out.push(PeriodReport {
                period: period.label.clone(),
                group: manifest.group_name.clone(),
                seed: run_cfg.seed,
                pattern_len: r.definition.pattern.len(),
                dbcs_len: r.definition.dbcs.len(),
                alpha_f: r.definition.alpha_f,
                alpha_d: r.definition.alpha_d,
                report: r.report,
            });
        }
    }
    Ok(out)
}

/// Aligned plain-text comparison table.
pub fn render_table(rows: &[PeriodReport]) -> String {
    let header = ["period", "group", "|F|", "|D|", "cutoffs", "|G|", "precision", "recall", "F"];
    let body: Vec<[String; 9]> = rows
        .iter()
        .map(|r| {
            [
                r.period.clone(),
                r.group.clone(),
                r.pattern_len.to_string(),
                r.dbcs_len.to_string(),
                format!("{},{}", r.alpha_f, r.alpha_d),
                r.report.group_size.to_string(),
                format!("{:.3}", r.report.precision),
                format!("{:.3}", r.report.recall),
                format!("{:.3}", r.report.f_measure),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut text = String::new();
    let mut line = |cells: &[&str]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(widths)
            .enumerate()
            .map(|(i, (c, w))| if i < 2 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        text.push_str(parts.join("  ").trim_end());
        text.push('\n');
    };
    line(&header);
    for row in &body {
        let cells: Vec<&str> = row.iter().map(String::as_str).collect();
        line(&cells);
    }
    text
}
