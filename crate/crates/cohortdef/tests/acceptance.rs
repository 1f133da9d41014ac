//! Acceptance suite. Prints one PASS/FAIL line per criterion. Set
//! `COHORTDEF_ACCEPTANCE_STRICT=1` to exit non-zero when any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use cohortdef::core::calibration::{elbow, lee_liu, pareto_frontier, sweep};
use cohortdef::core::{
    brute_force_mine, build_definition, classify, draw_sample, evaluate, fp_growth, relax_activities, relax_dbcs,
    score_population, select_dbcs, ActivityId, CodeId, EventLog, EventLogBuilder, Method, PatientProjection,
    RelaxSchedule,
};
use cohortdef::io;
use cohortdef::pipeline::{self, RunConfig};
use cohortdef::synth::{generate, GeneratorSpec, PlantedGroup};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SCALE_CHILD: &str = "COHORTDEF_ACCEPTANCE_SCALE_LOG";
const STRICT: &str = "COHORTDEF_ACCEPTANCE_STRICT";

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn main() {
    if let Ok(path) = std::env::var(SCALE_CHILD) {
        scale_child(Path::new(&path));
        return;
    }
    let criteria: [Criterion; 8] = [
        ("mining oracle equivalence", mining_oracle),
        ("formula fidelity", formula_fidelity),
        ("synthetic end-to-end recovery", end_to_end_recovery),
        ("recall-estimate validity", recall_validity),
        ("monotonicity properties", monotonicity),
        ("degenerate-probability pipeline", degenerate_probabilities),
        ("scale smoke", scale_smoke),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let o = check();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("{tag} [{}] {name}: {} ({:.1} s)", i + 1, o.detail, started.elapsed().as_secs_f64());
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 && std::env::var_os(STRICT).is_some() {
        std::process::exit(1);
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

fn random_sample(rng: &mut ChaCha8Rng, patients: usize, activities: u32, codes: u32) -> Vec<PatientProjection> {
    (0..patients)
        .map(|i| {
            let events = rng.random_range(0..=10);
            let pairs: Vec<_> = (0..events)
                .map(|_| (ActivityId(rng.random_range(0..activities)), CodeId(rng.random_range(0..codes))))
                .collect();
            PatientProjection::from_pairs(format!("p{i:02}"), pairs)
        })
        .collect()
}

fn pattern_set(sample: &[PatientProjection], t: f64) -> BTreeMap<Vec<ActivityId>, usize> {
    fp_growth(sample, t)
        .unwrap()
        .patterns
        .iter()
        .map(|p| (p.items().to_vec(), p.count()))
        .collect()
}

fn mining_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let thresholds = [0.3, 0.5, 0.8, 1.0];
    let started = Instant::now();
    let mut mismatches = 0;
    for _ in 0..1000 {
        let activities = rng.random_range(1..=8);
        let patients = rng.random_range(1..=12);
        let sample = random_sample(&mut rng, patients, activities, 4);
        let t = thresholds[rng.random_range(0..thresholds.len())];
        let fast = pattern_set(&sample, t);
        let brute: BTreeMap<_, _> = brute_force_mine(&sample, t)
            .unwrap()
            .patterns
            .iter()
            .map(|p| (p.items().to_vec(), p.count()))
            .collect();
        mismatches += usize::from(fast != brute);
    }
    let elapsed = started.elapsed();
    outcome(
        mismatches == 0 && elapsed < Duration::from_secs(10),
        format!("1000 samples, {mismatches} mismatches, {:.2} s", elapsed.as_secs_f64()),
    )
}

const TEN: &[(&str, &[(&str, &str)])] = &[
    ("P01", &[("a", "x"), ("b", "x"), ("c", "y"), ("d", "z")]),
    ("P02", &[("a", "x"), ("b", "y"), ("c", "y")]),
    ("P03", &[("a", "x"), ("b", "x"), ("c", "z"), ("e", "z")]),
    ("P04", &[("a", "y"), ("b", "x"), ("d", "y")]),
    ("P05", &[("a", "x"), ("c", "x"), ("d", "z"), ("f", "y")]),
    ("P06", &[("b", "z"), ("c", "y"), ("e", "x")]),
    ("P07", &[("a", "x"), ("b", "y"), ("c", "y"), ("f", "z")]),
    ("P08", &[("a", "z"), ("d", "x")]),
    ("P09", &[("e", "y"), ("f", "x")]),
    ("P10", &[("b", "x"), ("c", "z"), ("d", "y")]),
];

fn formula_fidelity() -> Outcome {
    let day = NaiveDate::from_ymd_opt(2018, 3, 1).unwrap();
    let mut b = EventLogBuilder::new();
    for (p, events) in TEN {
        for (i, (a, d)) in events.iter().enumerate() {
            b.push(p, a, d, day.and_hms_opt(8 + i as u32, 0, 0).unwrap()).unwrap();
        }
    }
    let log = b.build().unwrap();
    let sample = log.project_many(["P01", "P02", "P03", "P04", "P05"]).unwrap();
    let holdout: Vec<String> = ["P06", "P07", "P08"].map(String::from).to_vec();
    let label = |items: &[ActivityId]| items.iter().map(|&a| log.activity_label(a)).collect::<String>();
    let mut wrong = Vec::new();
    let mut check = |what: &str, ok: bool| {
        if !ok {
            wrong.push(what.to_string());
        }
    };

    // Supports as exact fractions of the five training patients.
    let mined: Vec<(String, usize)> = fp_growth(&sample, 0.6)
        .unwrap()
        .patterns
        .iter()
        .map(|p| (label(p.items()), p.count()))
        .collect();
    let expected = [("abc", 3), ("ab", 4), ("ac", 4), ("ad", 3), ("bc", 3), ("a", 5), ("b", 4), ("c", 4), ("d", 3)];
    check("frequent patterns", mined == expected.map(|(s, c)| (s.to_string(), c)));

    let def = build_definition(&log, &sample, 0.6, 0.6).unwrap();
    check("pattern", def.pattern == ["a", "b", "c"]);
    check("codes", def.dbcs == ["x", "y"]);

    let scores = score_population(&log, &def).unwrap();
    let got: Vec<(u32, u32)> = scores.iter().map(|s| (s.activity_score, s.dbc_score)).collect();
    let want = [(0, 0), (0, 0), (0, 1), (1, 0), (1, 0), (1, 0), (0, 0), (2, 1), (3, 0), (1, 0)];
    check("scores", got == want);
    check("group (0,0)", classify(&scores, 0, 0) == ["P01", "P02", "P07"]);

    let points = sweep(&scores, &holdout, 3, 2).unwrap();
    let cells: Vec<(usize, usize)> = points.iter().map(|p| (p.group_size, p.hits)).collect();
    let want = [(3, 1), (4, 1), (4, 1), (7, 2), (8, 2), (8, 2), (7, 2), (9, 3), (9, 3), (8, 2), (10, 3), (10, 3)];
    check("sweep", cells == want);
    let frontier = pareto_frontier(&points);
    let f: Vec<(u32, u32)> = frontier.iter().map(|p| (p.alpha_f, p.alpha_d)).collect();
    check("frontier", f == [(0, 0), (1, 0), (2, 1)]);
    let knee = elbow(&frontier).unwrap();
    check("elbow", (knee.point.alpha_f, knee.point.alpha_d, knee.degenerate) == (1, 0, false));
    let ll = lee_liu(&frontier).unwrap();
    check("lee-liu", (ll.alpha_f, ll.alpha_d) == (2, 1));

    let schedule = RelaxSchedule::with_step(0.2);
    let steps: Vec<String> = relax_activities(&sample, schedule)
        .unwrap()
        .map(|s| label(&s.current_selection))
        .collect();
    check("activity relaxation", steps == ["a", "ab", "abc", "abc", "abcd"]);
    let pattern: Vec<ActivityId> = ["a", "b", "c"].iter().map(|a| log.activity_id(a).unwrap()).collect();
    let codes: Vec<usize> = relax_dbcs(&pattern, &sample, schedule)
        .unwrap()
        .map(|s| s.current_selection.len())
        .collect();
    check("code relaxation", codes == [1, 1, 2, 2, 3]);

    outcome(
        wrong.is_empty(),
        if wrong.is_empty() {
            "10-patient log matches every hand-computed value".into()
        } else {
            format!("mismatch in {}", wrong.join(", "))
        },
    )
}

struct DefaultRuns {
    f1: Vec<f64>,
    rho: Vec<Option<f64>>,
    slowest: Duration,
}

fn default_runs() -> &'static DefaultRuns {
    static RUNS: std::sync::OnceLock<DefaultRuns> = std::sync::OnceLock::new();
    RUNS.get_or_init(|| {
        let mut runs = DefaultRuns {
            f1: Vec::new(),
            rho: Vec::new(),
            slowest: Duration::ZERO,
        };
        for seed in 0..20 {
            let started = Instant::now();
            let spec = GeneratorSpec {
                seed,
                ..GeneratorSpec::default()
            };
            let g = generate(&spec).unwrap();
            let cfg = RunConfig {
                seed,
                ..RunConfig::default()
            };
            match pipeline::run(&g.log, &g.manifests[0].members, &cfg) {
                Ok(r) => {
                    runs.f1.push(r.report.f_measure);
                    runs.rho.push(r.recall_validity);
                }
                Err(_) => {
                    runs.f1.push(0.0);
                    runs.rho.push(None);
                }
            }
            runs.slowest = runs.slowest.max(started.elapsed());
        }
        runs
    })
}

fn end_to_end_recovery() -> Outcome {
    let runs = default_runs();
    let m = median(runs.f1.clone());
    let min = runs.f1.iter().copied().fold(f64::INFINITY, f64::min);
    outcome(
        m >= 0.75 && runs.slowest < Duration::from_secs(30),
        format!(
            "median F1 {m:.3} over 20 seeds (min {min:.3}), slowest run {:.2} s",
            runs.slowest.as_secs_f64()
        ),
    )
}

fn recall_validity() -> Outcome {
    let runs = default_runs();
    let undefined = runs.rho.iter().filter(|r| r.is_none()).count();
    // An undefined correlation counts as no correlation.
    let m = median(runs.rho.iter().map(|r| r.unwrap_or(0.0)).collect());
    outcome(
        m >= 0.8,
        format!("median Spearman rho {m:.3} over 20 seeds, {undefined} undefined"),
    )
}

fn random_log(rng: &mut ChaCha8Rng) -> EventLog {
    let day = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let mut b = EventLogBuilder::new();
    let patients = rng.random_range(8..=40);
    for p in 0..patients {
        let events = rng.random_range(1..=12);
        for e in 0..events {
            let a = rng.random_range(0..8);
            let d = rng.random_range(0..5);
            b.push(
                &format!("p{p:02}"),
                &format!("a{a}"),
                &format!("d{d}"),
                day + chrono::Duration::hours(e),
            )
            .unwrap();
        }
    }
    b.build().unwrap()
}

fn is_subset(a: &[String], b: &[String]) -> bool {
    let b: BTreeSet<&String> = b.iter().collect();
    a.iter().all(|x| b.contains(x))
}

fn monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut a, mut b, mut c, mut d) = (0usize, 0usize, 0usize, 0usize);
    let mut violations = [0usize; 4];
    let thresholds = [1.0, 0.8, 0.6, 0.5, 0.3, 0.1];
    while a < 200 || d < 200 || b < 200 || c < 200 {
        let log = random_log(&mut rng);
        let mut ids: Vec<String> = log.patient_ids().map(String::from).collect();
        ids.shuffle(&mut rng);
        let half = ids.len() / 2;
        let train = log.project_many(&ids[..half]).unwrap();
        let holdout = &ids[half..];

        let sets: Vec<_> = thresholds.iter().map(|&t| pattern_set(&train, t)).collect();
        violations[1] += sets.windows(2).filter(|w| !w[0].keys().all(|k| w[1].contains_key(k))).count();
        b += 1;

        let phi_a = thresholds[rng.random_range(1..thresholds.len())];
        let Ok(def) = build_definition(&log, &train, phi_a, 0.5) else {
            continue;
        };
        let pattern: Vec<ActivityId> = def.pattern.iter().map(|l| log.activity_id(l).unwrap()).collect();
        let code_sets: Vec<Vec<CodeId>> = thresholds
            .iter()
            .map(|&t| select_dbcs(&pattern, &train, t).unwrap())
            .collect();
        violations[2] += code_sets
            .windows(2)
            .filter(|w| !w[0].iter().all(|x| w[1].contains(x)))
            .count();
        c += 1;

        let scores = score_population(&log, &def).unwrap();
        let (mf, md) = (def.pattern.len() as u32, def.dbcs.len() as u32);
        for af in 0..=mf {
            for ad in 0..=md {
                let g = classify(&scores, af, ad);
                if (af < mf && !is_subset(&g, &classify(&scores, af + 1, ad)))
                    || (ad < md && !is_subset(&g, &classify(&scores, af, ad + 1)))
                {
                    violations[0] += 1;
                }
            }
        }
        a += 1;

        let frontier = pareto_frontier(&sweep(&scores, holdout, mf, md).unwrap());
        violations[3] += frontier
            .windows(2)
            .filter(|w| w[1].hits <= w[0].hits || w[1].group_size <= w[0].group_size)
            .count();
        d += 1;
    }
    let total: usize = violations.iter().sum();
    outcome(
        total == 0,
        format!(
            "(a) {a} instances, {} violations; (b) {b}, {}; (c) {c}, {}; (d) {d}, {}",
            violations[0], violations[1], violations[2], violations[3]
        ),
    )
}

fn degenerate_probabilities() -> Outcome {
    let mut exact = 0;
    let mut misses = Vec::new();
    let mut extra = BTreeSet::new();
    let mut min_precision = 1.0f64;
    for seed in 0..20 {
        let spec = GeneratorSpec {
            groups: vec![PlantedGroup {
                emission_prob: 1.0,
                signature_dbc_prob: 1.0,
                leak_prob: 0.0,
                ..PlantedGroup::default()
            }],
            seed,
            ..GeneratorSpec::default()
        };
        let g = generate(&spec).unwrap();
        let truth = &g.manifests[0].members;
        let cfg = RunConfig {
            phi_a: 1.0,
            phi_d: 1.0,
            seed,
            ..RunConfig::default()
        };
        let Ok((_, def)) = pipeline::define(&g.log, truth, &cfg) else {
            misses.push(format!("seed {seed}: no pattern"));
            continue;
        };
        let scores = score_population(&g.log, &def).unwrap();
        let report = evaluate(classify(&scores, 0, 0), truth, 1.0).unwrap();
        min_precision = min_precision.min(report.precision);
        if report.f_measure == 1.0 {
            exact += 1;
        } else {
            misses.push(format!("seed {seed}: {:.4}", report.f_measure));
            extra.extend(def.pattern.iter().filter(|a| !a.starts_with("sig_")).cloned());
        }
    }
    let mut detail = format!("F1 = 1.0 exactly in {exact}/20 seeds");
    if !misses.is_empty() {
        detail.push_str(&format!(
            "; misses [{}] keep precision >= {min_precision:.3} and carry background activities {:?} \
             shared by every training patient",
            misses.join(", "),
            extra
        ));
    }
    outcome(exact == 20, detail)
}

fn vm_hwm_kb() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

/// Runs in a fresh process so the peak resident size covers only this work.
fn scale_child(log_path: &Path) {
    let started = Instant::now();
    let log = io::load_log_path(log_path).unwrap();
    let loaded = started.elapsed();
    let manifest: io::Manifest = io::read_json(log_path.with_file_name("manifest.json")).unwrap();
    let plan = draw_sample(&manifest.members, 30, 0.5, 0).unwrap();
    let cfg = RunConfig::default();
    let def = pipeline::define_from_ids(&log, &plan.train, &plan.holdout, &cfg).unwrap();
    let calibrated = pipeline::calibrate_definition(&log, &def, None, Method::Elbow).unwrap();
    let total = started.elapsed();
    println!(
        "{} {} {:.3} {:.3} {} {}",
        log.num_patients(),
        log.num_events(),
        loaded.as_secs_f64(),
        total.as_secs_f64(),
        calibrated.result.points.len(),
        vm_hwm_kb().unwrap_or(u64::MAX)
    );
}

fn scale_smoke() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let log_path: PathBuf = dir.path().join("log.csv");
    {
        let spec = GeneratorSpec {
            population: 100_000,
            background_activities: 2000,
            background_dbcs: 500,
            events_per_patient: 100.0,
            seed: 3,
            ..GeneratorSpec::default()
        };
        let g = generate(&spec).unwrap();
        io::write_log_path(&log_path, &g.log).unwrap();
        io::write_json(dir.path().join("manifest.json"), &g.manifests[0]).unwrap();
    }
    let out = Command::new(std::env::current_exe().unwrap())
        .env(SCALE_CHILD, &log_path)
        .output()
        .unwrap();
    if !out.status.success() {
        return outcome(false, format!("child failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    let text = String::from_utf8_lossy(&out.stdout);
    let f: Vec<&str> = text.split_whitespace().collect();
    let patients: usize = f[0].parse().unwrap();
    let events: usize = f[1].parse().unwrap();
    let load: f64 = f[2].parse().unwrap();
    let total: f64 = f[3].parse().unwrap();
    let cells: usize = f[4].parse().unwrap();
    let peak_kb: u64 = f[5].parse().unwrap();
    let peak_gb = peak_kb as f64 / (1024.0 * 1024.0);
    outcome(
        events >= 10_000_000 && total < 120.0 && peak_gb < 4.0,
        format!(
            "{patients} patients, {events} events: load {load:.1} s, load+score+sweep {total:.1} s over {cells} cells, peak {peak_gb:.2} GB"
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_cohortdef");
    let mut listings = Vec::new();
    for name in ["first", "second"] {
        let out = dir.path().join(name);
        let synth = Command::new(bin)
            .args(["synth", "--seed", "12", "--out"])
            .arg(&out)
            .output()
            .unwrap();
        assert!(synth.status.success());
        let run = Command::new(bin)
            .args(["pipeline", "--seed", "12", "--log"])
            .arg(out.join("log.csv"))
            .arg("--manifest")
            .arg(out.join("manifest_planted.json"))
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        if !matches!(run.status.code(), Some(0) | Some(4)) {
            return outcome(false, format!("pipeline failed: {}", String::from_utf8_lossy(&run.stderr)));
        }
        let mut files = BTreeMap::new();
        for entry in std::fs::read_dir(&out).unwrap() {
            let path = entry.unwrap().path();
            files.insert(path.file_name().unwrap().to_owned(), std::fs::read(&path).unwrap());
        }
        listings.push(files);
    }
    let differing: Vec<String> = listings[0]
        .iter()
        .filter(|(k, v)| listings[1].get(*k) != Some(*v))
        .map(|(k, _)| k.to_string_lossy().into_owned())
        .collect();
    outcome(
        differing.is_empty() && listings[0].len() == listings[1].len(),
        format!("{} artifacts compared, {} differ {:?}", listings[0].len(), differing.len(), differing),
    )
}
