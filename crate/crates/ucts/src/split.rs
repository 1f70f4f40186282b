//! Candidate split enumeration and scoring.
//!
//! A split of a node is scored by the estimated increase in expected
//! response it unlocks: each child may pick its own best treatment, so the
//! gain is the child-fraction-weighted sum of the children's best estimated
//! responses minus the parent's best estimated response. Per-treatment child
//! estimates are regularized toward the parent with weight `n_reg` and fall
//! back to the parent estimate entirely when the child holds fewer than
//! `min_split` samples of that treatment.
//!
//! All functions here are pure over immutable inputs.

use crate::data::{ColumnKind, Dataset};
use crate::error::{Error, Result};

/// Per-node sample statistics over the approximation set.
#[derive(Debug, Clone)]
pub struct NodeStats {
    /// Row indices belonging to the node.
    pub members: Vec<usize>,
    /// Per-treatment sample counts, indexed by treatment - 1.
    pub counts: Vec<usize>,
    /// Per-treatment response sums.
    pub sums: Vec<f64>,
    /// Per-treatment response estimates (regularized / inherited).
    pub estimates: Vec<f64>,
}

impl NodeStats {
    /// Root statistics: estimates are the plain per-treatment sample means.
    /// Errors if any treatment is absent from `members`.
    pub fn root(data: &Dataset, members: Vec<usize>) -> Result<Self> {
        let k = data.n_treatments();
        let (counts, sums) = tally(data, &members, k);
        if let Some(t) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Data(format!(
                "treatment {} has no samples at the root",
                t + 1
            )));
        }
        let estimates = counts
            .iter()
            .zip(&sums)
            .map(|(&c, &s)| s / c as f64)
            .collect();
        Ok(NodeStats {
            members,
            counts,
            sums,
            estimates,
        })
    }

    /// Child statistics from explicit members; estimates per Eqs. (3)-(4).
    pub fn child(
        data: &Dataset,
        members: Vec<usize>,
        parent_estimates: &[f64],
        min_split: usize,
        n_reg: f64,
    ) -> Self {
        let (counts, sums) = tally(data, &members, parent_estimates.len());
        let estimates = estimate_child_response(&counts, &sums, parent_estimates, min_split, n_reg);
        NodeStats {
            members,
            counts,
            sums,
            estimates,
        }
    }

    /// Total member count m.
    pub fn m(&self) -> usize {
        self.members.len()
    }

    pub fn max_estimate(&self) -> f64 {
        self.estimates.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

fn tally(data: &Dataset, members: &[usize], k: usize) -> (Vec<usize>, Vec<f64>) {
    let mut counts = vec![0usize; k];
    let mut sums = vec![0.0f64; k];
    for &i in members {
        let t = data.treatment_index(i);
        counts[t] += 1;
        sums[t] += data.response(i);
    }
    (counts, sums)
}

/// Smallest admissible child size: ceil(alpha * m), at least 1. A 1e-9
/// slack keeps the ceiling faithful to real arithmetic when alpha * m is an
/// integer that floating point nudges upward (e.g. 0.3 * 10).
pub fn min_side_count(alpha: f64, m: usize) -> usize {
    let c = (alpha * m as f64 - 1e-9).ceil();
    c.max(1.0) as usize
}

/// Per-treatment child estimates given raw child counts/sums and the parent
/// estimates: shrink toward the parent with weight `n_reg` when the child
/// has at least `min_split` samples of the treatment, otherwise inherit the
/// parent estimate unchanged.
pub fn estimate_child_response(
    counts: &[usize],
    sums: &[f64],
    parent_estimates: &[f64],
    min_split: usize,
    n_reg: f64,
) -> Vec<f64> {
    counts
        .iter()
        .zip(sums)
        .zip(parent_estimates)
        .map(|((&n_t, &sum), &parent)| {
            if n_t >= min_split {
                (sum + parent * n_reg) / (n_t as f64 + n_reg)
            } else {
                parent
            }
        })
        .collect()
}

/// How a split routes a feature value.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitRule {
    /// Left iff x_j <= threshold.
    Numeric { threshold: f64 },
    /// Left iff the categorical code of x_j is in `left_levels` (sorted).
    Categorical { left_levels: Vec<u32> },
}

impl SplitRule {
    pub fn goes_left(&self, value: f64) -> bool {
        match self {
            SplitRule::Numeric { threshold } => value <= *threshold,
            SplitRule::Categorical { left_levels } => {
                left_levels.binary_search(&(value as u32)).is_ok()
            }
        }
    }
}

/// A candidate split: coordinate, routing rule, and the member counts it
/// sends to each side.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitCandidate {
    pub coordinate: usize,
    pub rule: SplitRule,
    pub left_count: usize,
    pub right_count: usize,
}

/// A scored candidate with fully materialized child statistics.
#[derive(Debug, Clone)]
pub struct SplitScore {
    pub candidate: SplitCandidate,
    pub gain: f64,
    pub left: NodeStats,
    pub right: NodeStats,
}

/// Split gain: p_l * max_t est_l + p_r * max_t est_r - max_t est_parent,
/// with p the member-count fractions. Computed as the weighted sum of child
/// improvements (p_l + p_r = 1), so a split whose children both inherit
/// every parent estimate scores exactly zero.
fn gain_from(
    parent: &NodeStats,
    left_m: usize,
    right_m: usize,
    left_estimates: &[f64],
    right_estimates: &[f64],
) -> f64 {
    let m = parent.m() as f64;
    let p_l = left_m as f64 / m;
    let p_r = right_m as f64 / m;
    let best = |e: &[f64]| e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let parent_best = parent.max_estimate();
    p_l * (best(left_estimates) - parent_best) + p_r * (best(right_estimates) - parent_best)
}

/// Enumerate the candidate splits of `parent` on one coordinate.
///
/// Numeric coordinates yield thresholds at the midpoints between consecutive
/// distinct member values, in ascending order. Categorical coordinates with
/// c distinct levels present yield all 2^(c-1) - 1 binary partitions when
/// c <= 10 (bitmask order, the left side always containing the smallest
/// present level), and one-vs-rest partitions for 10 < c <= 25. More than 25
/// present levels is a configuration error.
///
/// Only candidates leaving at least `ceil(alpha * m)` members on each side
/// are returned.
pub fn enumerate_candidates(
    parent: &NodeStats,
    coordinate: usize,
    data: &Dataset,
    alpha: f64,
) -> Result<Vec<SplitCandidate>> {
    if coordinate >= data.n_features() {
        return Err(Error::Config(format!(
            "coordinate {coordinate} out of range for {} features",
            data.n_features()
        )));
    }
    let m = parent.m();
    let min_side = min_side_count(alpha, m);
    let mut out = Vec::new();
    match &data.schema().column(coordinate).kind {
        ColumnKind::Numeric => {
            let mut values: Vec<f64> = parent
                .members
                .iter()
                .map(|&i| data.feature(i, coordinate))
                .collect();
            values.sort_unstable_by(f64::total_cmp);
            for p in 0..m.saturating_sub(1) {
                if values[p] < values[p + 1] {
                    let left_count = p + 1;
                    let right_count = m - left_count;
                    if left_count >= min_side && right_count >= min_side {
                        out.push(SplitCandidate {
                            coordinate,
                            rule: SplitRule::Numeric {
                                threshold: midpoint(values[p], values[p + 1]),
                            },
                            left_count,
                            right_count,
                        });
                    }
                }
            }
        }
        ColumnKind::Categorical { .. } => {
            let level_counts = level_counts(parent, coordinate, data);
            let present: Vec<u32> = level_counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(l, _)| l as u32)
                .collect();
            for subset in categorical_subsets(&present)? {
                let left_count: usize = subset
                    .iter()
                    .map(|&l| level_counts[l as usize])
                    .sum();
                let right_count = m - left_count;
                if left_count >= min_side && right_count >= min_side {
                    out.push(SplitCandidate {
                        coordinate,
                        rule: SplitRule::Categorical {
                            left_levels: subset,
                        },
                        left_count,
                        right_count,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Midpoint threshold between two consecutive distinct values. Falls back to
/// the lower value when rounding would land on the upper one (adjacent
/// floats), preserving a non-empty right side under `x <= threshold`.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = (lo + hi) / 2.0;
    if mid < hi {
        mid
    } else {
        lo
    }
}

fn level_counts(parent: &NodeStats, coordinate: usize, data: &Dataset) -> Vec<usize> {
    let cardinality = data.schema().column(coordinate).kind.cardinality();
    let mut counts = vec![0usize; cardinality];
    for &i in &parent.members {
        counts[data.feature(i, coordinate) as usize] += 1;
    }
    counts
}

/// Left-side level subsets in canonical order. Full enumeration keeps the
/// smallest present level on the left so each partition appears once.
pub(crate) fn categorical_subsets(present: &[u32]) -> Result<Vec<Vec<u32>>> {
    let c = present.len();
    if c > 25 {
        return Err(Error::Config(format!(
            "categorical coordinate presents {c} levels in one node; more than 25 is unsupported"
        )));
    }
    if c < 2 {
        return Ok(Vec::new());
    }
    if c <= 10 {
        let full = (1u32 << c) - 1;
        let mut subsets = Vec::with_capacity((1 << (c - 1)) - 1);
        let mut mask = 1u32;
        while mask < full {
            if mask & 1 == 1 {
                subsets.push(
                    (0..c)
                        .filter(|&b| mask >> b & 1 == 1)
                        .map(|b| present[b])
                        .collect(),
                );
            }
            mask += 2; // keep the lowest present level on the left
        }
        Ok(subsets)
    } else {
        Ok(present.iter().map(|&l| vec![l]).collect())
    }
}

/// Score one candidate: materialize both children, estimate their
/// per-treatment responses, and compute the gain. The candidate's recorded
/// counts must match the actual partition (callers are expected to pass
/// candidates produced by `enumerate_candidates`).
pub fn score_split(
    parent: &NodeStats,
    candidate: &SplitCandidate,
    data: &Dataset,
    min_split: usize,
    n_reg: f64,
) -> Result<SplitScore> {
    let mut left_members = Vec::with_capacity(candidate.left_count);
    let mut right_members = Vec::with_capacity(candidate.right_count);
    for &i in &parent.members {
        if candidate.rule.goes_left(data.feature(i, candidate.coordinate)) {
            left_members.push(i);
        } else {
            right_members.push(i);
        }
    }
    if left_members.is_empty() || right_members.is_empty() {
        return Err(Error::Internal(format!(
            "degenerate split candidate on coordinate {}: {} / {} members",
            candidate.coordinate,
            left_members.len(),
            right_members.len()
        )));
    }
    if left_members.len() != candidate.left_count || right_members.len() != candidate.right_count {
        return Err(Error::Internal(format!(
            "split candidate counts ({}, {}) disagree with actual partition ({}, {})",
            candidate.left_count,
            candidate.right_count,
            left_members.len(),
            right_members.len()
        )));
    }
    let left = NodeStats::child(data, left_members, &parent.estimates, min_split, n_reg);
    let right = NodeStats::child(data, right_members, &parent.estimates, min_split, n_reg);
    let gain = gain_from(parent, left.m(), right.m(), &left.estimates, &right.estimates);
    if !gain.is_finite() {
        return Err(Error::Internal(format!("non-finite split gain {gain}")));
    }
    Ok(SplitScore {
        candidate: candidate.clone(),
        gain,
        left,
        right,
    })
}

/// Best candidate over the given coordinates, or `None` when no coordinate
/// admits an alpha-regular split. Ties are broken by coordinate order, then
/// enumeration order, so the result is deterministic.
///
/// Numeric coordinates are scanned incrementally (sorted prefix sums) rather
/// than by scoring every candidate from scratch; the winning candidate is
/// re-scored through [`score_split`] so the returned statistics match the
/// compositional path.
pub fn best_split(
    parent: &NodeStats,
    coordinates: &[usize],
    data: &Dataset,
    min_split: usize,
    n_reg: f64,
    alpha: f64,
) -> Result<Option<SplitScore>> {
    let mut best: Option<(f64, SplitCandidate)> = None;
    let mut consider = |gain: f64, candidate: SplitCandidate| {
        if best.as_ref().map_or(true, |(g, _)| gain > *g) {
            best = Some((gain, candidate));
        }
    };
    for &coordinate in coordinates {
        match &data.schema().column(coordinate).kind {
            ColumnKind::Numeric => {
                scan_numeric(parent, coordinate, data, min_split, n_reg, alpha, &mut consider)?;
            }
            ColumnKind::Categorical { .. } => {
                scan_categorical(parent, coordinate, data, min_split, n_reg, alpha, &mut consider)?;
            }
        }
    }
    match best {
        None => Ok(None),
        Some((_, candidate)) => Ok(Some(score_split(parent, &candidate, data, min_split, n_reg)?)),
    }
}

/// One sorted pass over a numeric coordinate, offering each alpha-regular
/// boundary to `consider`.
fn scan_numeric(
    parent: &NodeStats,
    coordinate: usize,
    data: &Dataset,
    min_split: usize,
    n_reg: f64,
    alpha: f64,
    consider: &mut impl FnMut(f64, SplitCandidate),
) -> Result<()> {
    if coordinate >= data.n_features() {
        return Err(Error::Config(format!(
            "coordinate {coordinate} out of range for {} features",
            data.n_features()
        )));
    }
    let m = parent.m();
    let min_side = min_side_count(alpha, m);
    let k = parent.estimates.len();
    let mut rows: Vec<(f64, usize, f64)> = parent
        .members
        .iter()
        .map(|&i| (data.feature(i, coordinate), data.treatment_index(i), data.response(i)))
        .collect();
    rows.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

    let mut left_counts = vec![0usize; k];
    let mut left_sums = vec![0.0f64; k];
    for p in 0..m.saturating_sub(1) {
        let (value, t, y) = rows[p];
        left_counts[t] += 1;
        left_sums[t] += y;
        if value < rows[p + 1].0 {
            let left_m = p + 1;
            let right_m = m - left_m;
            if left_m >= min_side && right_m >= min_side {
                let right_counts: Vec<usize> = parent
                    .counts
                    .iter()
                    .zip(&left_counts)
                    .map(|(&a, &b)| a - b)
                    .collect();
                let right_sums: Vec<f64> = parent
                    .sums
                    .iter()
                    .zip(&left_sums)
                    .map(|(&a, &b)| a - b)
                    .collect();
                let left_est =
                    estimate_child_response(&left_counts, &left_sums, &parent.estimates, min_split, n_reg);
                let right_est =
                    estimate_child_response(&right_counts, &right_sums, &parent.estimates, min_split, n_reg);
                let gain = gain_from(parent, left_m, right_m, &left_est, &right_est);
                consider(
                    gain,
                    SplitCandidate {
                        coordinate,
                        rule: SplitRule::Numeric {
                            threshold: midpoint(value, rows[p + 1].0),
                        },
                        left_count: left_m,
                        right_count: right_m,
                    },
                );
            }
        }
    }
    Ok(())
}

/// Aggregate per-level statistics once, then offer each alpha-regular level
/// partition to `consider`.
fn scan_categorical(
    parent: &NodeStats,
    coordinate: usize,
    data: &Dataset,
    min_split: usize,
    n_reg: f64,
    alpha: f64,
    consider: &mut impl FnMut(f64, SplitCandidate),
) -> Result<()> {
    let m = parent.m();
    let min_side = min_side_count(alpha, m);
    let k = parent.estimates.len();
    let cardinality = data.schema().column(coordinate).kind.cardinality();

    let mut level_m = vec![0usize; cardinality];
    let mut level_counts = vec![vec![0usize; k]; cardinality];
    let mut level_sums = vec![vec![0.0f64; k]; cardinality];
    for &i in &parent.members {
        let level = data.feature(i, coordinate) as usize;
        let t = data.treatment_index(i);
        level_m[level] += 1;
        level_counts[level][t] += 1;
        level_sums[level][t] += data.response(i);
    }
    let present: Vec<u32> = (0..cardinality)
        .filter(|&l| level_m[l] > 0)
        .map(|l| l as u32)
        .collect();

    for subset in categorical_subsets(&present)? {
        let mut left_m = 0usize;
        let mut left_counts = vec![0usize; k];
        let mut left_sums = vec![0.0f64; k];
        for &l in &subset {
            let l = l as usize;
            left_m += level_m[l];
            for t in 0..k {
                left_counts[t] += level_counts[l][t];
                left_sums[t] += level_sums[l][t];
            }
        }
        let right_m = m - left_m;
        if left_m < min_side || right_m < min_side {
            continue;
        }
        let right_counts: Vec<usize> = parent
            .counts
            .iter()
            .zip(&left_counts)
            .map(|(&a, &b)| a - b)
            .collect();
        let right_sums: Vec<f64> = parent
            .sums
            .iter()
            .zip(&left_sums)
            .map(|(&a, &b)| a - b)
            .collect();
        let left_est =
            estimate_child_response(&left_counts, &left_sums, &parent.estimates, min_split, n_reg);
        let right_est =
            estimate_child_response(&right_counts, &right_sums, &parent.estimates, min_split, n_reg);
        let gain = gain_from(parent, left_m, right_m, &left_est, &right_est);
        consider(
            gain,
            SplitCandidate {
                coordinate,
                rule: SplitRule::Categorical {
                    left_levels: subset,
                },
                left_count: left_m,
                right_count: right_m,
            },
        );
    }
    Ok(())
}
