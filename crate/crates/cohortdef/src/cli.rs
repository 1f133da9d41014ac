//! Command-line interface. Every subcommand writes plain JSON/CSV artifacts
//! into the output directory and prints a one-line summary.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use cohortdef_core::{fp_growth, relax_activities, relax_dbcs, EventLog, Method, RelaxSchedule, RelaxationStep};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{self, Manifest};
use crate::pipeline::{self, Period, RunConfig};
use crate::service::{self, AppState, LoadedLog};
use crate::synth::{self, GeneratorSpec};

pub const OUT_ENV: &str = "COHORT_OUT";

#[derive(Debug, Parser)]
#[command(name = "cohortdef", version, about = "Learn interpretable patient group definitions from a few examples")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic event log with planted groups.
    Synth(SynthArgs),
    /// List the frequent activity patterns of the training sample.
    Mine(SampleArgs),
    /// Build an uncalibrated group definition.
    Define(SampleArgs),
    /// Show the stepwise relaxation of both thresholds.
    Relax(SampleArgs),
    /// Choose cut-offs on the holdout sample.
    Calibrate(CalibrateArgs),
    /// Score the population and list the selected group.
    Classify(ClassifyArgs),
    /// Compare a predicted group with the ground truth.
    Evaluate(EvaluateArgs),
    /// Sample, define, calibrate, classify and evaluate in one go.
    Pipeline(SampleArgs),
    /// Run the pipeline per time period and group.
    Report(ReportArgs),
    /// Start the local HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct OutArg {
    /// Output directory.
    #[arg(long, env = OUT_ENV, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator spec (JSON or TOML). Defaults to the desk-scale spec.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Overrides the spec's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long, default_value_t = 0.8)]
    pub phi_a: f64,
    #[arg(long, default_value_t = 0.8)]
    pub phi_d: f64,
    #[arg(long, default_value_t = 30)]
    pub sample_size: usize,
    #[arg(long, default_value_t = 0.5)]
    pub split: f64,
    #[arg(long, default_value_t = 0.05)]
    pub step: f64,
    #[arg(long, default_value_t = Method::Elbow)]
    pub method: Method,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// F-measure weight.
    #[arg(long, default_value_t = 1.0)]
    pub n: f64,
}

impl ConfigArgs {
    pub fn config(&self) -> RunConfig {
        RunConfig {
            phi_a: self.phi_a,
            phi_d: self.phi_d,
            sample_size: self.sample_size,
            split: self.split,
            step: self.step,
            method: self.method,
            seed: self.seed,
            n: self.n,
        }
    }
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub log: PathBuf,
    /// Ground-truth manifest to draw the sample from.
    #[arg(long, required_unless_present = "train", conflicts_with = "train")]
    pub manifest: Option<PathBuf>,
    /// Explicit training ids instead of a drawn sample.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Explicit holdout ids, used with `--train`.
    #[arg(long, requires = "train")]
    pub holdout: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub definition: PathBuf,
    /// Holdout ids; defaults to those recorded in the definition.
    #[arg(long)]
    pub holdout: Option<PathBuf>,
    #[arg(long, default_value_t = Method::Elbow)]
    pub method: Method,
    /// Cut-offs for `--method manual`.
    #[arg(long, required_if_eq("method", "manual"))]
    pub alpha_f: Option<u32>,
    #[arg(long, required_if_eq("method", "manual"))]
    pub alpha_d: Option<u32>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub definition: PathBuf,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Predicted ids (one per line, JSON array or manifest).
    #[arg(long)]
    pub predicted: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub n: f64,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub log: PathBuf,
    /// JSON or TOML file with a `periods` list.
    #[arg(long)]
    pub periods: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Event log to serve; its id is the file stem.
    #[arg(long)]
    pub log: Vec<PathBuf>,
    /// Manifests; attached to every served log.
    #[arg(long)]
    pub manifest: Vec<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Directory with the web UI's static files.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
}

/// Parses a JSON or TOML file, chosen by extension.
pub fn read_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
    } else {
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }
}

fn out_dir(out: &OutArg) -> Result<&Path> {
    std::fs::create_dir_all(&out.out).map_err(|e| Error::io(&out.out, e))?;
    Ok(&out.out)
}

pub fn manifest_file(group: &str) -> String {
    format!("manifest_{group}.json")
}

fn synth(args: &SynthArgs) -> Result<String> {
    let mut spec: GeneratorSpec = match &args.spec {
        Some(p) => read_config(p)?,
        None => GeneratorSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let expected = synth::describe(&spec)?;
    let generated = synth::generate(&spec)?;
    let dir = out_dir(&args.out)?;
    io::write_log_path(dir.join("log.csv"), &generated.log)?;
    for m in &generated.manifests {
        io::write_json(dir.join(manifest_file(&m.group_name)), m)?;
    }
    io::write_json(dir.join("generation.json"), &generated.report)?;
    io::write_json(dir.join("expected.json"), &expected)?;
    Ok(format!(
        "{} patients, {} events, {} group(s) -> {}",
        generated.report.population,
        generated.report.events,
        generated.manifests.len(),
        dir.display()
    ))
}

/// The training and holdout ids for a sample-based command, plus the plan
/// when it was drawn from a manifest.
struct Sample {
    train: Vec<String>,
    holdout: Vec<String>,
    truth: Option<Vec<String>>,
}

fn sample(args: &SampleArgs) -> Result<Sample> {
    match (&args.manifest, &args.train) {
        (Some(m), _) => {
            let manifest: Manifest = io::read_json(m)?;
            let plan = cohortdef_core::draw_sample(
                &manifest.members,
                args.config.sample_size,
                args.config.split,
                args.config.seed,
            )?;
            Ok(Sample {
                train: plan.train,
                holdout: plan.holdout,
                truth: Some(manifest.members),
            })
        }
        (None, Some(t)) => Ok(Sample {
            train: io::read_id_list(t)?,
            holdout: match &args.holdout {
                Some(h) => io::read_id_list(h)?,
                None => Vec::new(),
            },
            truth: None,
        }),
        (None, None) => Err(Error::Input("pass --manifest or --train".into())),
    }
}

#[derive(Serialize)]
struct Relaxation {
    activities: Vec<RelaxationStep<String>>,
    dbcs: Vec<RelaxationStep<String>>,
}

fn mine(args: &SampleArgs, log: &EventLog) -> Result<String> {
    let s = sample(args)?;
    let train = log.project_many(&s.train)?;
    let result = fp_growth(&train, args.config.phi_a)?;
    let dir = out_dir(&args.out)?;
    io::write_json(dir.join("patterns.json"), &result.labelled(log))?;
    Ok(format!("{} frequent patterns at {}", result.patterns.len(), args.config.phi_a))
}

fn relax(args: &SampleArgs, log: &EventLog) -> Result<String> {
    let s = sample(args)?;
    let train = log.project_many(&s.train)?;
    let schedule = RelaxSchedule::with_step(args.config.step);
    let steps: Vec<_> = relax_activities(&train, schedule)?.collect();
    let last = steps.last().map(|s| s.current_selection.clone()).unwrap_or_default();
    let dbc_steps: Vec<_> = relax_dbcs(&last, &train, schedule)?.collect();
    let relaxation = Relaxation {
        activities: steps.iter().map(|s| s.map(|a| log.activity_label(a).to_string())).collect(),
        dbcs: dbc_steps.iter().map(|s| s.map(|d| log.dbc_label(d).to_string())).collect(),
    };
    let dir = out_dir(&args.out)?;
    io::write_json(dir.join("relaxation.json"), &relaxation)?;
    Ok(format!("{} activity steps, {} code steps", relaxation.activities.len(), relaxation.dbcs.len()))
}

fn define(args: &SampleArgs, log: &EventLog) -> Result<String> {
    let cfg = args.config.config();
    let dir = out_dir(&args.out)?;
    let def = match &args.manifest {
        Some(m) => {
            let manifest: Manifest = io::read_json(m)?;
            let (plan, def) = pipeline::define(log, &manifest.members, &cfg)?;
            io::write_json(dir.join(pipeline::SAMPLE_FILE), &plan)?;
            def
        }
        None => {
            let s = sample(args)?;
            pipeline::define_from_ids(log, &s.train, &s.holdout, &cfg)?
        }
    };
    io::write_json(dir.join(pipeline::DEFINITION_FILE), &def)?;
    Ok(format!("|F| = {}, |D| = {}", def.pattern.len(), def.dbcs.len()))
}

fn calibrate(args: &CalibrateArgs, log: &EventLog) -> Result<String> {
    let def: cohortdef_core::GroupDefinition = io::read_json(&args.definition)?;
    let holdout = args.holdout.as_ref().map(io::read_id_list).transpose()?;
    let method = if args.method == Method::Manual {
        Method::Elbow
    } else {
        args.method
    };
    let mut calibrated = pipeline::calibrate_definition(log, &def, holdout.as_deref(), method)?;
    if args.method == Method::Manual {
        let (af, ad) = (args.alpha_f.unwrap_or(0), args.alpha_d.unwrap_or(0));
        calibrated
            .result
            .choose_manual(af, ad)
            .ok_or_else(|| Error::Input(format!("({af}, {ad}) is outside the cut-off grid")))?;
        let holdout = holdout.unwrap_or_else(|| def.provenance.holdout_ids.clone());
        let mut base = def.clone();
        base.provenance.train_ids.sort_unstable();
        calibrated.definition = calibrated.result.apply(&base, &holdout);
    }
    let dir = out_dir(&args.out)?;
    io::write_json(dir.join(pipeline::CALIBRATION_FILE), &calibrated.result)?;
    io::write_json(dir.join(pipeline::DEFINITION_FILE), &calibrated.definition)?;
    let d = &calibrated.definition;
    if d.provenance.degenerate_curve {
        return Err(Error::Degenerate {
            alpha_f: d.alpha_f,
            alpha_d: d.alpha_d,
        });
    }
    Ok(format!(
        "cut-offs ({}, {}), |G| = {}, recall_bar = {:.3}",
        d.alpha_f,
        d.alpha_d,
        calibrated.result.chosen.group_size,
        calibrated.result.chosen.recall_bar()
    ))
}

fn classify(args: &ClassifyArgs, log: &EventLog) -> Result<String> {
    let def: cohortdef_core::GroupDefinition = io::read_json(&args.definition)?;
    let (scores, members) = pipeline::classify_definition(log, &def)?;
    let dir = out_dir(&args.out)?;
    pipeline::write_scores_path(dir.join(pipeline::SCORES_FILE), &scores, &def)?;
    pipeline::write_members(dir.join(pipeline::GROUP_FILE), &members)?;
    Ok(format!("|G| = {} of {} patients", members.len(), scores.len()))
}

fn evaluate(args: &EvaluateArgs) -> Result<String> {
    let predicted = io::read_id_list(&args.predicted)?;
    let truth = io::read_id_list(&args.manifest)?;
    let report = cohortdef_core::evaluate(&predicted, &truth, args.n)?;
    let dir = out_dir(&args.out)?;
    io::write_json(dir.join(pipeline::EVALUATION_FILE), &report)?;
    Ok(format!(
        "precision {:.3}, recall {:.3}, F{} {:.3}",
        report.precision, report.recall, args.n, report.f_measure
    ))
}

fn run_pipeline(args: &SampleArgs, log: &EventLog) -> Result<String> {
    let truth = sample(args)?
        .truth
        .ok_or_else(|| Error::Input("pipeline needs --manifest for the ground truth".into()))?;
    let run = pipeline::run(log, &truth, &args.config.config())?;
    pipeline::write_artifacts(out_dir(&args.out)?, &run)?;
    if run.degenerate() {
        return Err(Error::Degenerate {
            alpha_f: run.definition.alpha_f,
            alpha_d: run.definition.alpha_d,
        });
    }
    Ok(format!(
        "|F| = {}, |D| = {}, cut-offs ({}, {}), |G| = {}, F{} = {:.3}",
        run.definition.pattern.len(),
        run.definition.dbcs.len(),
        run.definition.alpha_f,
        run.definition.alpha_d,
        run.report.group_size,
        run.report.n,
        run.report.f_measure
    ))
}

#[derive(Deserialize)]
struct PeriodsFile {
    periods: Vec<PeriodEntry>,
}

#[derive(Deserialize)]
struct PeriodEntry {
    label: String,
    from: chrono::NaiveDateTime,
    to: chrono::NaiveDateTime,
    manifests: Vec<ManifestRef>,
}

/// A manifest given inline or as a path relative to the periods file.
#[derive(Deserialize)]
#[serde(untagged)]
enum ManifestRef {
    Path(PathBuf),
    Inline(Manifest),
}

fn load_periods(path: &Path) -> Result<Vec<Period>> {
    let file: PeriodsFile = read_config(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    file.periods
        .into_iter()
        .map(|e| {
            let manifests = e
                .manifests
                .into_iter()
                .map(|m| match m {
                    ManifestRef::Inline(m) => Ok(m),
                    ManifestRef::Path(p) => io::read_json(base.join(p)),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Period {
                label: e.label,
                from: e.from,
                to: e.to,
                manifests,
            })
        })
        .collect()
}

fn report(args: &ReportArgs, log: &EventLog) -> Result<String> {
    let periods = load_periods(&args.periods)?;
    let rows = pipeline::yearly_report(log, &periods, &args.config.config())?;
    let table = pipeline::render_table(&rows);
    let dir = out_dir(&args.out)?;
    io::write_json(dir.join("report.json"), &rows)?;
    io::write_text(dir.join("report.txt"), &table)?;
    Ok(table.trim_end().to_string())
}

fn serve(args: &ServeArgs) -> Result<String> {
    if args.log.is_empty() {
        return Err(Error::Input("pass at least one --log".into()));
    }
    let manifests = args
        .manifest
        .iter()
        .map(io::read_json::<Manifest>)
        .collect::<Result<Vec<_>>>()?;
    let mut logs = HashMap::new();
    for path in &args.log {
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "log".into());
        let log = io::load_log_path(path)?;
        eprintln!("loaded `{id}`: {} patients, {} events", log.num_patients(), log.num_events());
        logs.insert(
            id,
            LoadedLog {
                log,
                manifests: manifests.clone(),
            },
        );
    }
    let state = Arc::new(AppState::new(logs, args.ui_dir.clone()));
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io("<runtime>", e))?;
    runtime
        .block_on(service::serve(state, args.addr))
        .map_err(|e| Error::io(args.addr.to_string(), e))?;
    Ok("stopped".into())
}

/// Runs one command; the returned line is the human summary.
pub fn run(cli: &Cli) -> Result<String> {
    let load = |p: &PathBuf| io::load_log_path(p);
    match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Mine(a) => mine(a, &load(&a.log)?),
        Command::Define(a) => define(a, &load(&a.log)?),
        Command::Relax(a) => relax(a, &load(&a.log)?),
        Command::Calibrate(a) => calibrate(a, &load(&a.log)?),
        Command::Classify(a) => classify(a, &load(&a.log)?),
        Command::Evaluate(a) => evaluate(a),
        Command::Pipeline(a) => run_pipeline(a, &load(&a.log)?),
        Command::Report(a) => report(a, &load(&a.log)?),
        Command::Serve(a) => serve(a),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            let category = e.category();
            eprintln!("error[{category}]: {e}");
            category.exit_code()
        }
    }
}
