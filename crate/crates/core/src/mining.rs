//! Frequent activity itemsets over the example patients.
//!
//! [`fp_growth`] materializes every frequent itemset. [`brute_force_mine`]
//! enumerates the powerset of the sample's activities and is kept as a
//! reference implementation for small inputs. [`longest_frequent`] finds only
//! the pattern a definition would use, and stays tractable at thresholds
//! where the full itemset lattice is astronomically large.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::Serialize;

use crate::bits::Bits;
use crate::error::{Error, Result};
use crate::eventlog::{ActivityId, EventLog, PatientProjection};
use crate::threshold::Threshold;

/// Upper bound on the activity universe [`brute_force_mine`] will enumerate.
pub const BRUTE_FORCE_LIMIT: usize = 20;

/// An activity itemset with its support, kept as an exact patient count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequentPattern {
    items: Vec<ActivityId>,
    count: usize,
    sample_size: usize,
}

impl FrequentPattern {
    pub(crate) fn new(mut items: Vec<ActivityId>, count: usize, sample_size: usize) -> Self {
        items.sort_unstable();
        FrequentPattern {
            items,
            count,
            sample_size,
        }
    }

    /// Sorted ascending.
    pub fn items(&self) -> &[ActivityId] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Number of sample patients whose activity set contains the pattern.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    pub fn support(&self) -> f64 {
        self.count as f64 / self.sample_size as f64
    }
}

/// Output ordering: longer first, then higher support, then the
/// lexicographically smaller item list.
pub(crate) fn pattern_order(a: &FrequentPattern, b: &FrequentPattern) -> Ordering {
    b.items
        .len()
        .cmp(&a.items.len())
        .then(b.count.cmp(&a.count))
        .then_with(|| a.items.cmp(&b.items))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiningResult {
    pub threshold: f64,
    pub sample_size: usize,
    pub patterns: Vec<FrequentPattern>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelledPattern {
    pub items: Vec<String>,
    pub support: f64,
}

/// Serializable form of a [`MiningResult`] with labels resolved.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelledMining {
    pub threshold: f64,
    pub sample_size: usize,
    pub patterns: Vec<LabelledPattern>,
}

impl MiningResult {
    pub fn labelled(&self, log: &EventLog) -> LabelledMining {
        LabelledMining {
            threshold: self.threshold,
            sample_size: self.sample_size,
            patterns: self
                .patterns
                .iter()
                .map(|p| LabelledPattern {
                    items: p.items.iter().map(|&a| log.activity_label(a).into()).collect(),
                    support: p.support(),
                })
                .collect(),
        }
    }
}

pub fn support_count(itemset: &[ActivityId], sample: &[PatientProjection]) -> usize {
    sample.iter().filter(|p| p.contains_all(itemset)).count()
}

/// Fraction of sample patients whose activity set contains `itemset`.
pub fn support_of(itemset: &[ActivityId], sample: &[PatientProjection]) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(support_count(itemset, sample) as f64 / sample.len() as f64)
}

const ROOT: u32 = u32::MAX;

struct Node {
    rank: u32,
    count: usize,
    parent: u32,
    children: Vec<u32>,
}

/// Prefix tree over item ranks (rank 0 = most frequent item).
struct FpTree {
    nodes: Vec<Node>,
    heads: Vec<Vec<u32>>,
    totals: Vec<usize>,
}

impl FpTree {
    fn new(ranks: usize) -> Self {
        FpTree {
            nodes: Vec::new(),
            heads: vec![Vec::new(); ranks],
            totals: vec![0; ranks],
        }
    }

    /// `path` must be sorted by ascending rank.
    fn insert(&mut self, path: &[u32], count: usize) {
        let mut parent = ROOT;
        for &rank in path {
            self.totals[rank as usize] += count;
            let existing = if parent == ROOT {
                self.heads[rank as usize]
                    .iter()
                    .copied()
                    .find(|&n| self.nodes[n as usize].parent == ROOT)
            } else {
                self.nodes[parent as usize]
                    .children
                    .iter()
                    .copied()
                    .find(|&c| self.nodes[c as usize].rank == rank)
            };
            let node = match existing {
                Some(n) => {
                    self.nodes[n as usize].count += count;
                    n
                }
                None => {
                    let n = self.nodes.len() as u32;
                    self.nodes.push(Node {
                        rank,
                        count,
                        parent,
                        children: Vec::new(),
                    });
                    if parent != ROOT {
                        self.nodes[parent as usize].children.push(n);
                    }
                    self.heads[rank as usize].push(n);
                    n
                }
            };
            parent = node;
        }
    }

    /// The nodes from the root down, if the tree has no branching.
    fn single_path(&self) -> Option<Vec<u32>> {
        let roots: Vec<u32> = self
            .heads
            .iter()
            .flatten()
            .copied()
            .filter(|&n| self.nodes[n as usize].parent == ROOT)
            .collect();
        if roots.len() > 1 {
            return None;
        }
        let mut path = Vec::new();
        let mut cur = roots.first().copied();
        while let Some(n) = cur {
            path.push(n);
            let children = &self.nodes[n as usize].children;
            if children.len() > 1 {
                return None;
            }
            cur = children.first().copied();
        }
        Some(path)
    }
}

fn grow(tree: &FpTree, suffix: &mut Vec<u32>, min_count: usize, out: &mut Vec<(Vec<u32>, usize)>) {
    if let Some(path) = tree.single_path() {
        // Counts are non-increasing down a path, so a subset's support is the
        // count of its deepest node.
        let len = path.len();
        for mask in 1u64..(1u64 << len) {
            let mut items = suffix.clone();
            let mut count = usize::MAX;
            for (i, &n) in path.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    let node = &tree.nodes[n as usize];
                    items.push(node.rank);
                    count = count.min(node.count);
                }
            }
            out.push((items, count));
        }
        return;
    }

    for rank in (0..tree.heads.len()).rev() {
        let total = tree.totals[rank];
        if total < min_count {
            continue;
        }
        suffix.push(rank as u32);
        out.push((suffix.clone(), total));

        let mut base: Vec<(Vec<u32>, usize)> = Vec::new();
        let mut cond_totals = vec![0usize; rank];
        for &n in &tree.heads[rank] {
            let count = tree.nodes[n as usize].count;
            let mut prefix = Vec::new();
            let mut p = tree.nodes[n as usize].parent;
            while p != ROOT {
                let node = &tree.nodes[p as usize];
                prefix.push(node.rank);
                cond_totals[node.rank as usize] += count;
                p = node.parent;
            }
            if !prefix.is_empty() {
                prefix.reverse();
                base.push((prefix, count));
            }
        }
        if cond_totals.iter().any(|&c| c >= min_count) {
            let mut cond = FpTree::new(rank);
            for (prefix, count) in &base {
                let kept: Vec<u32> = prefix
                    .iter()
                    .copied()
                    .filter(|&r| cond_totals[r as usize] >= min_count)
                    .collect();
                if !kept.is_empty() {
                    cond.insert(&kept, *count);
                }
            }
            grow(&cond, suffix, min_count, out);
        }
        suffix.pop();
    }
}

fn item_counts(sample: &[PatientProjection]) -> Vec<(ActivityId, usize)> {
    let mut all: Vec<ActivityId> = sample.iter().flat_map(|p| p.activities().iter().copied()).collect();
    all.sort_unstable();
    let mut counts: Vec<(ActivityId, usize)> = Vec::new();
    for a in all {
        match counts.last_mut() {
            Some((last, c)) if *last == a => *c += 1,
            _ => counts.push((a, 1)),
        }
    }
    counts
}

/// Every non-empty activity itemset whose support reaches `threshold`.
pub fn fp_growth(sample: &[PatientProjection], threshold: f64) -> Result<MiningResult> {
    let threshold = Threshold::new(threshold)?;
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let min_count = threshold.min_count(sample.len());

    let mut frequent: Vec<(ActivityId, usize)> = item_counts(sample)
        .into_iter()
        .filter(|&(_, c)| c >= min_count)
        .collect();
    // Insertion order: descending frequency, ties by ascending label.
    frequent.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let ranks: Vec<ActivityId> = frequent.iter().map(|&(a, _)| a).collect();

    let mut tree = FpTree::new(ranks.len());
    let mut path = Vec::new();
    for p in sample {
        path.clear();
        path.extend(
            ranks
                .iter()
                .enumerate()
                .filter(|(_, &a)| p.has_activity(a))
                .map(|(r, _)| r as u32),
        );
        if !path.is_empty() {
            tree.insert(&path, 1);
        }
    }

    let mut raw = Vec::new();
    grow(&tree, &mut Vec::new(), min_count, &mut raw);

    let mut patterns: Vec<FrequentPattern> = raw
        .into_iter()
        .map(|(items, count)| {
            FrequentPattern::new(
                items.into_iter().map(|r| ranks[r as usize]).collect(),
                count,
                sample.len(),
            )
        })
        .collect();
    patterns.sort_unstable_by(pattern_order);
    Ok(MiningResult {
        threshold: threshold.value(),
        sample_size: sample.len(),
        patterns,
    })
}

/// Exhaustive enumeration over all subsets of the sample's activity union.
/// Refuses unions larger than [`BRUTE_FORCE_LIMIT`].
pub fn brute_force_mine(sample: &[PatientProjection], threshold: f64) -> Result<MiningResult> {
    let threshold = Threshold::new(threshold)?;
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let universe: Vec<ActivityId> = item_counts(sample).into_iter().map(|(a, _)| a).collect();
    if universe.len() > BRUTE_FORCE_LIMIT {
        return Err(Error::AlphabetTooLarge(universe.len(), BRUTE_FORCE_LIMIT));
    }
    let masks: Vec<u32> = sample
        .iter()
        .map(|p| {
            universe
                .iter()
                .enumerate()
                .filter(|(_, &a)| p.has_activity(a))
                .fold(0u32, |m, (i, _)| m | (1 << i))
        })
        .collect();
    let min_count = threshold.min_count(sample.len());
    let mut patterns = Vec::new();
    for subset in 1u32..(1u32 << universe.len()) {
        let count = masks.iter().filter(|&&m| m & subset == subset).count();
        if count >= min_count {
            let items = (0..universe.len())
                .filter(|i| subset & (1 << i) != 0)
                .map(|i| universe[i])
                .collect();
            patterns.push(FrequentPattern::new(items, count, sample.len()));
        }
    }
    patterns.sort_unstable_by(pattern_order);
    Ok(MiningResult {
        threshold: threshold.value(),
        sample_size: sample.len(),
        patterns,
    })
}

/// The first pattern in output order (longest, then most supported, then
/// lexicographically smallest) among frequent itemsets that contain
/// `containing`, without materializing the other frequent itemsets.
///
/// The winner is always a closed itemset, i.e. the intersection of the
/// activity sets of the patients supporting it, so the search walks
/// intersections of patient sets and stops shrinking a set as soon as it is
/// frequent.
pub fn longest_frequent(
    sample: &[PatientProjection],
    threshold: f64,
    containing: &[ActivityId],
) -> Result<Option<FrequentPattern>> {
    let threshold = Threshold::new(threshold)?;
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let min_count = threshold.min_count(sample.len());
    let universe: Vec<ActivityId> = item_counts(sample).into_iter().map(|(a, _)| a).collect();
    let width = universe.len();
    let to_bits = |items: &[ActivityId]| -> Option<Bits> {
        let mut idx = Vec::with_capacity(items.len());
        for a in items {
            idx.push(universe.binary_search(a).ok()?);
        }
        Some(Bits::from_indices(width, idx))
    };
    let Some(required) = to_bits(containing) else {
        return Ok(None);
    };
    let transactions: Vec<Bits> = sample
        .iter()
        .map(|p| to_bits(p.activities()).unwrap_or_else(|| Bits::empty(width)))
        .filter(|t| t.is_superset_of(&required))
        .collect();
    if transactions.len() < min_count {
        return Ok(None);
    }

    let mut best: Option<(Vec<ActivityId>, usize)> = None;
    let mut best_len = 0usize;
    let mut seen: BTreeSet<Bits> = BTreeSet::new();
    let mut stack: Vec<Bits> = transactions.clone();
    while let Some(set) = stack.pop() {
        let len = set.count();
        if len == 0 || len < best_len || seen.contains(&set) {
            continue;
        }
        let support = transactions.iter().filter(|t| t.is_superset_of(&set)).count();
        if support >= min_count {
            let items: Vec<ActivityId> = set.indices().map(|i| universe[i]).collect();
            let better = match &best {
                None => true,
                Some((b_items, b_count)) => len
                    .cmp(&b_items.len())
                    .then(support.cmp(b_count))
                    .then_with(|| b_items.cmp(&items))
                    .is_gt(),
            };
            if better {
                best_len = len;
                best = Some((items, support));
            }
        } else {
            for t in &transactions {
                if !t.is_superset_of(&set) {
                    let next = set.intersect(t);
                    if next.count() >= best_len.max(1) && !seen.contains(&next) {
                        stack.push(next);
                    }
                }
            }
        }
        seen.insert(set);
    }
    Ok(best.map(|(items, count)| FrequentPattern::new(items, count, sample.len())))
}
