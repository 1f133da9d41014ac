//! A ten-patient log worked through every stage by hand. Expected values
//! come from an exhaustive rational-arithmetic enumeration.

use chrono::NaiveDate;
use cohortdef_core::calibration::{elbow, lee_liu, pareto_frontier, sweep};
use cohortdef_core::groupdef::dbc_support_count;
use cohortdef_core::mining::support_count;
use cohortdef_core::{
    build_definition, classify, fp_growth, relax_activities, relax_dbcs, score_population, ActivityId,
    EventLog, EventLogBuilder, RelaxSchedule,
};

const ROWS: &[(&str, &[(&str, &str)])] = &[
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

const TRAIN: [&str; 5] = ["P01", "P02", "P03", "P04", "P05"];

fn holdout() -> Vec<String> {
    ["P06", "P07", "P08"].map(String::from).to_vec()
}

fn log() -> EventLog {
    let day = NaiveDate::from_ymd_opt(2018, 3, 1).unwrap();
    let mut b = EventLogBuilder::new();
    for (p, events) in ROWS {
        for (i, (a, d)) in events.iter().enumerate() {
            b.push(p, a, d, day.and_hms_opt(8 + i as u32, 0, 0).unwrap()).unwrap();
        }
    }
    b.build().unwrap()
}

fn ids(log: &EventLog, labels: &str) -> Vec<ActivityId> {
    labels.chars().map(|c| log.activity_id(&c.to_string()).unwrap()).collect()
}

fn labels(log: &EventLog, items: &[ActivityId]) -> String {
    items.iter().map(|&a| log.activity_label(a)).collect()
}

#[test]
fn itemset_supports() {
    let log = log();
    let sample = log.project_many(TRAIN).unwrap();
    for (set, count) in [("a", 5), ("b", 4), ("ab", 4), ("ac", 4), ("abc", 3), ("bc", 3), ("abd", 2), ("e", 1)] {
        assert_eq!(support_count(&ids(&log, set), &sample), count, "{set}");
    }
}

#[test]
fn frequent_patterns_at_three_fifths() {
    let log = log();
    let sample = log.project_many(TRAIN).unwrap();
    let mined = fp_growth(&sample, 0.6).unwrap();
    let got: Vec<(String, usize)> = mined
        .patterns
        .iter()
        .map(|p| (labels(&log, p.items()), p.count()))
        .collect();
    let expected = [("abc", 3), ("ab", 4), ("ac", 4), ("ad", 3), ("bc", 3), ("a", 5), ("b", 4), ("c", 4), ("d", 3)];
    assert_eq!(got, expected.map(|(s, c)| (s.to_string(), c)));
}

#[test]
fn definition_pattern_and_codes() {
    let log = log();
    let sample = log.project_many(TRAIN).unwrap();
    let def = build_definition(&log, &sample, 0.6, 0.6).unwrap();
    assert_eq!(def.pattern, ["a", "b", "c"]);
    assert_eq!(def.dbcs, ["x", "y"]);

    let f = ids(&log, "abc");
    let code = |l: &str| log.dbc_id(l).unwrap();
    assert_eq!(dbc_support_count(code("x"), &f, &sample), 5);
    assert_eq!(dbc_support_count(code("y"), &f, &sample), 3);
    assert_eq!(dbc_support_count(code("z"), &f, &sample), 1);
}

#[test]
fn population_scores() {
    let log = log();
    let sample = log.project_many(TRAIN).unwrap();
    let def = build_definition(&log, &sample, 0.6, 0.6).unwrap();
    let scores: Vec<(String, u32, u32)> = score_population(&log, &def)
        .unwrap()
        .into_iter()
        .map(|s| (s.patient_id, s.activity_score, s.dbc_score))
        .collect();
    let expected = [
        ("P01", 0, 0),
        ("P02", 0, 0),
        ("P03", 0, 1),
        ("P04", 1, 0),
        ("P05", 1, 0),
        ("P06", 1, 0),
        ("P07", 0, 0),
        ("P08", 2, 1),
        ("P09", 3, 0),
        ("P10", 1, 0),
    ];
    assert_eq!(scores, expected.map(|(p, a, d)| (p.to_string(), a, d)));
}

#[test]
fn group_membership_by_cutoffs() {
    let log = log();
    let sample = log.project_many(TRAIN).unwrap();
    let def = build_definition(&log, &sample, 0.6, 0.6).unwrap();
    let scores = score_population(&log, &def).unwrap();
    assert_eq!(classify(&scores, 0, 0), ["P01", "P02", "P07"]);
    assert_eq!(classify(&scores, 1, 0), ["P01", "P02", "P04", "P05", "P06", "P07", "P10"]);
    assert_eq!(classify(&scores, 2, 1).len(), 9);
}

#[test]
fn sweep_frontier_and_selectors() {
    let log = log();
    let sample = log.project_many(TRAIN).unwrap();
    let def = build_definition(&log, &sample, 0.6, 0.6).unwrap();
    let scores = score_population(&log, &def).unwrap();
    let points = sweep(&scores, &holdout(), 3, 2).unwrap();
    let cells: Vec<(u32, u32, usize, usize)> = points
        .iter()
        .map(|p| (p.alpha_f, p.alpha_d, p.group_size, p.hits))
        .collect();
    assert_eq!(
        cells,
        [
            (0, 0, 3, 1),
            (0, 1, 4, 1),
            (0, 2, 4, 1),
            (1, 0, 7, 2),
            (1, 1, 8, 2),
            (1, 2, 8, 2),
            (2, 0, 7, 2),
            (2, 1, 9, 3),
            (2, 2, 9, 3),
            (3, 0, 8, 2),
            (3, 1, 10, 3),
            (3, 2, 10, 3),
        ]
    );

    let frontier = pareto_frontier(&points);
    let f: Vec<(u32, u32, usize, usize)> = frontier
        .iter()
        .map(|p| (p.alpha_f, p.alpha_d, p.group_size, p.hits))
        .collect();
    assert_eq!(f, [(0, 0, 3, 1), (1, 0, 7, 2), (2, 1, 9, 3)]);

    // Normalized chord distances 0, 1/6, 0.
    let knee = elbow(&frontier).unwrap();
    assert_eq!((knee.point.alpha_f, knee.point.alpha_d), (1, 0));
    assert!(!knee.degenerate);

    // recall^2 / |G|: 1/27, 4/63, 1/9.
    let ll = lee_liu(&frontier).unwrap();
    assert_eq!((ll.alpha_f, ll.alpha_d, ll.group_size), (2, 1, 9));
}

#[test]
fn relaxation_walk() {
    let log = log();
    let sample = log.project_many(TRAIN).unwrap();
    let schedule = RelaxSchedule::with_step(0.2);
    let steps: Vec<(f64, String, String)> = relax_activities(&sample, schedule)
        .unwrap()
        .map(|s| (s.threshold, labels(&log, &s.added_items), labels(&log, &s.current_selection)))
        .collect();
    let expected = [
        (1.0, "a", "a"),
        (0.8, "b", "ab"),
        (0.6, "c", "abc"),
        (0.4, "", "abc"),
        (0.2, "d", "abcd"),
    ];
    assert_eq!(steps, expected.map(|(t, a, c)| (t, a.to_string(), c.to_string())));

    let codes: Vec<(f64, Vec<String>)> = relax_dbcs(&ids(&log, "abc"), &sample, schedule)
        .unwrap()
        .map(|s| {
            let selection = s.current_selection.iter().map(|&d| log.dbc_label(d).to_string()).collect();
            (s.threshold, selection)
        })
        .collect();
    let code_sets: Vec<(f64, Vec<&str>)> = vec![
        (1.0, vec!["x"]),
        (0.8, vec!["x"]),
        (0.6, vec!["x", "y"]),
        (0.4, vec!["x", "y"]),
        (0.2, vec!["x", "y", "z"]),
    ];
    let code_sets: Vec<(f64, Vec<String>)> = code_sets
        .into_iter()
        .map(|(t, v)| (t, v.into_iter().map(String::from).collect()))
        .collect();
    assert_eq!(codes, code_sets);
}
