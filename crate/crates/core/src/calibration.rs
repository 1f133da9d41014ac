//! Cut-off calibration from the positive sample alone.
//!
//! Every `(alpha_f, alpha_d)` cell of the cut-off grid yields a group size
//! and a recall estimated on held-out sample patients. The grid is reduced to
//! its Pareto frontier (smallest group for each recall level) and a point is
//! picked either at the elbow of that curve or by maximizing
//! `recall^2 / |group|`.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::str::FromStr;

use hashbrown::HashSet;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::eventlog::EventLog;
use crate::groupdef::GroupDefinition;
use crate::scoring::{score_population, PatientScore};

/// Distances closer than this are treated as ties when locating the elbow.
const TIE_EPS: f64 = 1e-12;

/// One cell of the cut-off grid. Recall is kept as the exact ratio
/// `hits / holdout_size`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepPoint {
    pub alpha_f: u32,
    pub alpha_d: u32,
    pub group_size: usize,
    pub hits: usize,
    pub holdout_size: usize,
}

impl SweepPoint {
    pub fn recall_bar(&self) -> f64 {
        if self.holdout_size == 0 {
            0.0
        } else {
            self.hits as f64 / self.holdout_size as f64
        }
    }

    fn cmp_recall(&self, other: &SweepPoint) -> Ordering {
        let a = self.hits as u128 * other.holdout_size as u128;
        let b = other.hits as u128 * self.holdout_size as u128;
        a.cmp(&b)
    }

    /// Total order used to make every selector independent of input order.
    fn canonical(&self, other: &SweepPoint) -> Ordering {
        self.group_size
            .cmp(&other.group_size)
            .then_with(|| other.cmp_recall(self))
            .then(self.alpha_f.cmp(&other.alpha_f))
            .then(self.alpha_d.cmp(&other.alpha_d))
    }
}

impl Serialize for SweepPoint {
    fn serialize<S: Serializer>(&self, serializer: S) -> core::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr {
            alpha_f: u32,
            alpha_d: u32,
            group_size: usize,
            recall_bar: f64,
        }
        Repr {
            alpha_f: self.alpha_f,
            alpha_d: self.alpha_d,
            group_size: self.group_size,
            recall_bar: self.recall_bar(),
        }
        .serialize(serializer)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Elbow,
    LeeLiu,
    Manual,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Elbow => "elbow",
            Method::LeeLiu => "lee_liu",
            Method::Manual => "manual",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> core::result::Result<Self, Self::Err> {
        match s {
            "elbow" => Ok(Method::Elbow),
            "lee_liu" | "lee-liu" => Ok(Method::LeeLiu),
            "manual" => Ok(Method::Manual),
            other => Err(alloc::format!("unknown method `{other}`")),
        }
    }
}

/// Evaluates every cut-off pair in `[0..=max_f] x [0..=max_d]`, `alpha_f`
/// major. Holdout ids without a score never count as hits.
pub fn sweep(
    scores: &[PatientScore],
    holdout: &[String],
    max_f: u32,
    max_d: u32,
) -> Result<Vec<SweepPoint>> {
    let holdout: HashSet<&str> = holdout.iter().map(String::as_str).collect();
    if holdout.is_empty() {
        return Err(Error::EmptyHoldout);
    }
    let (nf, nd) = (max_f as usize + 1, max_d as usize + 1);
    let mut size = vec![0usize; nf * nd];
    let mut hits = vec![0usize; nf * nd];
    for s in scores {
        let (a, d) = (s.activity_score as usize, s.dbc_score as usize);
        if a < nf && d < nd {
            size[a * nd + d] += 1;
            if holdout.contains(s.patient_id.as_str()) {
                hits[a * nd + d] += 1;
            }
        }
    }
    // 2-D prefix sums turn cell counts into "score <= cut-off" counts.
    for grid in [&mut size, &mut hits] {
        for a in 0..nf {
            for d in 0..nd {
                let mut v = grid[a * nd + d];
                if a > 0 {
                    v += grid[(a - 1) * nd + d];
                }
                if d > 0 {
                    v += grid[a * nd + d - 1];
                }
                if a > 0 && d > 0 {
                    v -= grid[(a - 1) * nd + d - 1];
                }
                grid[a * nd + d] = v;
            }
        }
    }
    let holdout_size = holdout.len();
    let mut points = Vec::with_capacity(nf * nd);
    for a in 0..nf {
        for d in 0..nd {
            points.push(SweepPoint {
                alpha_f: a as u32,
                alpha_d: d as u32,
                group_size: size[a * nd + d],
                hits: hits[a * nd + d],
                holdout_size,
            });
        }
    }
    Ok(points)
}

/// The smallest group for each achievable recall level, ascending in group
/// size with strictly increasing recall. Equal-size ties go to the smaller
/// `alpha_f`, then the smaller `alpha_d`.
pub fn pareto_frontier(points: &[SweepPoint]) -> Vec<SweepPoint> {
    let mut sorted = points.to_vec();
    sorted.sort_unstable_by(SweepPoint::canonical);
    let mut frontier: Vec<SweepPoint> = Vec::new();
    for p in sorted {
        match frontier.last() {
            Some(last) if p.cmp_recall(last) != Ordering::Greater => {}
            _ => frontier.push(p),
        }
    }
    frontier
}

/// The chosen elbow and whether the curve was too short or too straight for
/// the choice to mean anything.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Elbow {
    pub point: SweepPoint,
    pub degenerate: bool,
}

/// Point of the frontier farthest from the chord between its end points,
/// after normalizing both axes to `[0, 1]`. Ties go to the smaller group.
pub fn elbow(frontier: &[SweepPoint]) -> Result<Elbow> {
    let mut curve = frontier.to_vec();
    curve.sort_unstable_by(SweepPoint::canonical);
    let (first, last) = match (curve.first(), curve.last()) {
        (Some(f), Some(l)) => (*f, *l),
        _ => return Err(Error::EmptyFrontier),
    };
    if curve.len() < 3 {
        return Ok(Elbow {
            point: first,
            degenerate: true,
        });
    }
    let x0 = first.group_size as f64;
    let dx = last.group_size as f64 - x0;
    let y0 = first.recall_bar();
    let dy = last.recall_bar() - y0;
    if dx <= 0.0 || dy <= 0.0 {
        return Ok(Elbow {
            point: curve[1],
            degenerate: true,
        });
    }
    // In normalized coordinates the chord is y = x, so the perpendicular
    // distance is |y - x| / sqrt(2); the constant factor is dropped.
    let mut best = curve[1];
    let mut best_dist = f64::NEG_INFINITY;
    for p in &curve[1..curve.len() - 1] {
        let x = (p.group_size as f64 - x0) / dx;
        let y = (p.recall_bar() - y0) / dy;
        let dist = (y - x).abs();
        if dist > best_dist + TIE_EPS {
            best = *p;
            best_dist = dist;
        }
    }
    Ok(Elbow {
        point: best,
        degenerate: best_dist <= TIE_EPS,
    })
}

/// Argmax of `recall^2 / |group|` over points with a non-empty group. Ties
/// go to the smaller group.
pub fn lee_liu(points: &[SweepPoint]) -> Result<SweepPoint> {
    let mut best: Option<SweepPoint> = None;
    for p in points.iter().filter(|p| p.group_size > 0) {
        let better = match &best {
            None => true,
            Some(b) => {
                let lhs = sq(p.hits) * sq(b.holdout_size) * b.group_size as u128;
                let rhs = sq(b.hits) * sq(p.holdout_size) * p.group_size as u128;
                lhs.cmp(&rhs).then_with(|| b.canonical(p)) == Ordering::Greater
            }
        };
        if better {
            best = Some(*p);
        }
    }
    best.ok_or(if points.is_empty() {
        Error::EmptyFrontier
    } else {
        Error::EmptyGroups
    })
}

fn sq(x: usize) -> u128 {
    x as u128 * x as u128
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Suggestions {
    pub elbow: SweepPoint,
    pub lee_liu: Option<SweepPoint>,
}

/// Full sweep, its frontier and the chosen cut-offs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub points: Vec<SweepPoint>,
    pub frontier: Vec<SweepPoint>,
    pub chosen: SweepPoint,
    pub method: Method,
    pub degenerate: bool,
    pub suggestions: Suggestions,
}

impl CalibrationResult {
    /// Evaluates the grid and picks a point with `method`.
    pub fn from_scores(
        scores: &[PatientScore],
        holdout: &[String],
        max_f: u32,
        max_d: u32,
        method: Method,
    ) -> Result<Self> {
        let points = sweep(scores, holdout, max_f, max_d)?;
        let frontier = pareto_frontier(&points);
        let knee = elbow(&frontier)?;
        let ratio = lee_liu(&frontier).ok();
        let chosen = match method {
            Method::Elbow => knee.point,
            Method::LeeLiu => lee_liu(&frontier)?,
            Method::Manual => return Err(Error::ManualMethod("manual")),
        };
        Ok(CalibrationResult {
            points,
            frontier,
            chosen,
            method,
            degenerate: knee.degenerate,
            suggestions: Suggestions {
                elbow: knee.point,
                lee_liu: ratio,
            },
        })
    }

    /// Overrides the choice with an explicit grid cell.
    pub fn choose_manual(&mut self, alpha_f: u32, alpha_d: u32) -> Option<SweepPoint> {
        let p = *self
            .points
            .iter()
            .find(|p| p.alpha_f == alpha_f && p.alpha_d == alpha_d)?;
        self.chosen = p;
        self.method = Method::Manual;
        Some(p)
    }

    /// Copy of `def` carrying the chosen cut-offs and calibration provenance.
    pub fn apply(&self, def: &GroupDefinition, holdout: &[String]) -> GroupDefinition {
        let mut out = def.clone();
        out.alpha_f = self.chosen.alpha_f;
        out.alpha_d = self.chosen.alpha_d;
        let mut holdout_ids = holdout.to_vec();
        holdout_ids.sort_unstable();
        holdout_ids.dedup();
        out.provenance.optimistic_recall = holdout_ids
            .iter()
            .any(|h| def.provenance.train_ids.contains(h));
        out.provenance.holdout_ids = holdout_ids;
        out.provenance.calibration = Some(self.method.to_string());
        out.provenance.degenerate_curve = self.method == Method::Elbow && self.degenerate;
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibrated {
    pub result: CalibrationResult,
    pub definition: GroupDefinition,
}

/// Scores the population against `def`, sweeps the full cut-off grid on
/// `holdout` and writes the chosen cut-offs into a copy of the definition.
pub fn calibrate(
    log: &EventLog,
    def: &GroupDefinition,
    holdout: &[String],
    method: Method,
) -> Result<Calibrated> {
    if holdout.is_empty() {
        return Err(Error::EmptyHoldout);
    }
    if let Some(missing) = holdout.iter().find(|h| !log.contains_patient(h)) {
        return Err(Error::UnknownPatient(missing.clone()));
    }
    let mut base = def.clone();
    base.alpha_f = 0;
    base.alpha_d = 0;
    let mut train = base.provenance.train_ids.clone();
    train.sort_unstable();
    base.provenance.train_ids = train;
    let scores = score_population(log, &base)?;
    let result = CalibrationResult::from_scores(
        &scores,
        holdout,
        base.pattern.len() as u32,
        base.dbcs.len() as u32,
        method,
    )?;
    let definition = result.apply(&base, holdout);
    Ok(Calibrated { result, definition })
}
