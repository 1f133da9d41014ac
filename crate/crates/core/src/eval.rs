//! Ground-truth evaluation, sample drawing and rank correlation.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Precision, recall and F-measure of a predicted group against the truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    /// F-measure weight; 1 gives F1.
    pub n: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub group_size: usize,
    pub truth_size: usize,
    /// Precision is reported as 0 when nothing was predicted.
    pub empty_prediction: bool,
}

/// `(1 + n^2) * p * r / (n^2 * p + r)`, 0 when both are 0.
pub fn f_measure(precision: f64, recall: f64, n: f64) -> f64 {
    let n2 = n * n;
    let denom = n2 * precision + recall;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + n2) * precision * recall / denom
    }
}

pub fn evaluate<P, T, S1, S2>(predicted: P, truth: T, n: f64) -> Result<EvalReport>
where
    P: IntoIterator<Item = S1>,
    T: IntoIterator<Item = S2>,
    S1: AsRef<str>,
    S2: AsRef<str>,
{
    let predicted: BTreeSet<String> = predicted.into_iter().map(|s| s.as_ref().into()).collect();
    let truth: BTreeSet<String> = truth.into_iter().map(|s| s.as_ref().into()).collect();
    if truth.is_empty() {
        return Err(Error::EmptyTruth);
    }
    let tp = predicted.intersection(&truth).count();
    let fp = predicted.len() - tp;
    let fn_ = truth.len() - tp;
    let precision = if predicted.is_empty() {
        0.0
    } else {
        tp as f64 / predicted.len() as f64
    };
    let recall = tp as f64 / truth.len() as f64;
    Ok(EvalReport {
        precision,
        recall,
        f_measure: f_measure(precision, recall, n),
        n,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        group_size: predicted.len(),
        truth_size: truth.len(),
        empty_prediction: predicted.is_empty(),
    })
}

/// The expert sample `P`, split into the part that builds the definition
/// and the part that estimates recall.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub sample: Vec<String>,
    pub train: Vec<String>,
    pub holdout: Vec<String>,
    pub seed: u64,
}

/// Draws `size` members uniformly without replacement and splits them so
/// that `train` gets `ceil(size * split)` patients. Deterministic per seed.
pub fn draw_sample<I, S>(truth: I, size: usize, split: f64, seed: u64) -> Result<SamplePlan>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let truth: Vec<String> = truth
        .into_iter()
        .map(|s| s.as_ref().into())
        .collect::<BTreeSet<String>>()
        .into_iter()
        .collect();
    if size < 2 || size > truth.len() {
        return Err(Error::InvalidSampleSize {
            size,
            truth: truth.len(),
        });
    }
    if !(split > 0.0 && split < 1.0) {
        return Err(Error::InvalidSplit(split));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked: Vec<usize> = rand::seq::index::sample(&mut rng, truth.len(), size).into_vec();

    let exact = size as f64 * split;
    let mut n_train = exact as usize;
    if (n_train as f64) < exact - 1e-9 {
        n_train += 1;
    }
    let n_train = n_train.clamp(1, size - 1);

    let take = |idx: &[usize]| -> Vec<String> {
        let mut v: Vec<String> = idx.iter().map(|&i| truth[i].clone()).collect();
        v.sort_unstable();
        v
    };
    Ok(SamplePlan {
        sample: take(&picked),
        train: take(&picked[..n_train]),
        holdout: take(&picked[n_train..]),
        seed,
    })
}

/// 1-based ranks with ties sharing their average rank.
fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = alloc::vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rank correlation: Pearson correlation of average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(Error::TooFewPoints);
    }
    let constant = |v: &[f64]| v.iter().all(|&x| x == v[0]);
    if constant(xs) || constant(ys) {
        return Err(Error::ConstantSequence);
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}
