//! Growing a single uplift tree on the approximation set, then filling in
//! honest per-treatment estimates from the estimation set.
//!
//! Growth (on S^A): a node is terminal when every treatment has fewer than
//! `min_split` samples. Otherwise one random coordinate is drawn with
//! probability `pi`, or `mtry` distinct random coordinates with probability
//! `1 - pi`, and the gain-maximizing alpha-regular split over the drawn
//! coordinates is applied. If none exists the node becomes a leaf.
//!
//! Honest estimation (on S^E): traversing level by level, a node's estimate
//! for treatment t is the mean response of its S^E samples with treatment t,
//! or the parent's estimate when it has none. Only these estimates are used
//! at prediction time, so leaf values never depend on the data that chose
//! the splits.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::split::{best_split, min_side_count, NodeStats, SplitCandidate, SplitRule};

/// Tree-growth parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthParams {
    /// Minimum per-treatment sample count enabling a fresh child estimate;
    /// a node where every treatment falls below it is terminal.
    pub min_split: usize,
    /// Shrinkage weight pulling child estimates toward the parent.
    pub n_reg: f64,
    /// Balance factor: each split leaves at least ceil(alpha * m) samples
    /// per side. Must lie in (0, 0.5).
    pub alpha: f64,
    /// Number of distinct coordinates drawn for a regular split search.
    pub mtry: usize,
    /// Probability of drawing a single random coordinate instead.
    pub pi: f64,
}

impl GrowthParams {
    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.min_split == 0 {
            return Err(Error::Config("min_split must be a positive integer".into()));
        }
        if !(self.n_reg >= 0.0 && self.n_reg.is_finite()) {
            return Err(Error::Config(format!(
                "n_reg must be a finite non-negative real, got {}",
                self.n_reg
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 0.5), got {}",
                self.alpha
            )));
        }
        if self.mtry < 1 || self.mtry > n_features {
            return Err(Error::Config(format!(
                "mtry must lie in [1, {n_features}], got {}",
                self.mtry
            )));
        }
        if !(self.pi > 0.0 && self.pi < 1.0) {
            return Err(Error::Config(format!(
                "pi must lie in (0, 1), got {}",
                self.pi
            )));
        }
        Ok(())
    }
}

/// Why a node stopped splitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeafReason {
    /// Every treatment count fell below `min_split`.
    BelowMinSplit,
    /// No alpha-regular candidate existed on the drawn coordinates.
    NoRegularSplit,
}

#[derive(Debug, Clone)]
pub enum NodeKind {
    Internal {
        split: SplitCandidate,
        left: usize,
        right: usize,
    },
    Leaf {
        reason: LeafReason,
    },
}

#[derive(Debug, Clone)]
pub struct TreeNode {
    pub kind: NodeKind,
    /// Estimates from the approximation set, used while growing.
    pub approx_estimates: Vec<f64>,
    /// Estimates from the estimation set, used at prediction time.
    /// Empty until [`honest_estimate`] runs.
    pub honest_estimates: Vec<f64>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf { .. })
    }
}

/// One uplift tree stored as an arena; node 0 is the root, children are
/// indices, and children always follow their parent (preorder).
#[derive(Debug, Clone)]
pub struct UpliftTree {
    pub(crate) nodes: Vec<TreeNode>,
}

impl UpliftTree {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    /// Maximum root-to-leaf edge count.
    pub fn depth(&self) -> usize {
        fn depth_of(nodes: &[TreeNode], id: usize) -> usize {
            match &nodes[id].kind {
                NodeKind::Leaf { .. } => 0,
                NodeKind::Internal { left, right, .. } => {
                    1 + depth_of(nodes, *left).max(depth_of(nodes, *right))
                }
            }
        }
        depth_of(&self.nodes, 0)
    }

    /// Index of the leaf that `x` routes to. `x` must conform to the schema
    /// the tree was grown with.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id].kind {
                NodeKind::Leaf { .. } => return id,
                NodeKind::Internal { split, left, right } => {
                    id = if split.rule.goes_left(x[split.coordinate]) {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    /// Honest prediction for a 0-based treatment index.
    pub fn predict(&self, x: &[f64], treatment_index: usize) -> f64 {
        self.nodes[self.leaf_index(x)].honest_estimates[treatment_index]
    }

    /// Honest predictions for all treatments at once.
    pub fn predict_all(&self, x: &[f64]) -> &[f64] {
        &self.nodes[self.leaf_index(x)].honest_estimates
    }

    /// Copy approximation-set estimates into the honest slots (single-sample
    /// estimation, as used by the CTS baseline).
    pub fn set_honest_from_approx(&mut self) {
        for node in &mut self.nodes {
            node.honest_estimates = node.approx_estimates.clone();
        }
    }

    /// FNV-1a digest of the split structure only (coordinates, rules,
    /// topology) — estimates do not contribute.
    pub fn structure_digest(&self) -> u64 {
        let mut hash = 0xcbf2_9ce4_8422_2325u64;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                hash ^= b as u64;
                hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for node in &self.nodes {
            match &node.kind {
                NodeKind::Leaf { .. } => eat(b"L"),
                NodeKind::Internal { split, left, right } => {
                    eat(b"I");
                    eat(&(split.coordinate as u64).to_le_bytes());
                    eat(&(*left as u64).to_le_bytes());
                    eat(&(*right as u64).to_le_bytes());
                    match &split.rule {
                        SplitRule::Numeric { threshold } => {
                            eat(b"n");
                            eat(&threshold.to_bits().to_le_bytes());
                        }
                        SplitRule::Categorical { left_levels } => {
                            eat(b"c");
                            for &l in left_levels {
                                eat(&l.to_le_bytes());
                            }
                        }
                    }
                }
            }
        }
        hash
    }
}

/// Draw the coordinates examined at one node: with probability `pi` a single
/// uniform coordinate, otherwise `mtry` distinct uniform coordinates.
pub fn draw_split_coordinates(
    rng: &mut ChaCha8Rng,
    n_features: usize,
    mtry: usize,
    pi: f64,
) -> Vec<usize> {
    if rng.random::<f64>() < pi {
        vec![rng.random_range(0..n_features)]
    } else {
        let mut pool: Vec<usize> = (0..n_features).collect();
        for i in 0..mtry.min(n_features) {
            let j = rng.random_range(i..n_features);
            pool.swap(i, j);
        }
        pool.truncate(mtry.min(n_features));
        pool
    }
}

/// Grow one tree on the approximation set. Deterministic given the RNG
/// state. Errors if some treatment has no sample in `approx`.
pub fn grow_tree(
    data: &Dataset,
    approx: &[usize],
    params: &GrowthParams,
    rng: &mut ChaCha8Rng,
) -> Result<UpliftTree> {
    params.validate(data.n_features())?;
    let root = NodeStats::root(data, approx.to_vec())
        .map_err(|e| Error::Data(format!("approximation set: {e}")))?;
    let mut nodes = Vec::new();
    build_node(data, root, params, rng, &mut nodes)?;
    Ok(UpliftTree { nodes })
}

fn build_node(
    data: &Dataset,
    stats: NodeStats,
    params: &GrowthParams,
    rng: &mut ChaCha8Rng,
    nodes: &mut Vec<TreeNode>,
) -> Result<usize> {
    let id = nodes.len();
    nodes.push(TreeNode {
        kind: NodeKind::Leaf {
            reason: LeafReason::BelowMinSplit,
        },
        approx_estimates: stats.estimates.clone(),
        honest_estimates: Vec::new(),
    });

    if stats.counts.iter().all(|&c| c < params.min_split) {
        return Ok(id);
    }
    let coordinates =
        draw_split_coordinates(rng, data.n_features(), params.mtry, params.pi);
    let best = best_split(
        &stats,
        &coordinates,
        data,
        params.min_split,
        params.n_reg,
        params.alpha,
    )?;
    match best {
        None => {
            nodes[id].kind = NodeKind::Leaf {
                reason: LeafReason::NoRegularSplit,
            };
            Ok(id)
        }
        Some(score) => {
            let left = build_node(data, score.left, params, rng, nodes)?;
            let right = build_node(data, score.right, params, rng, nodes)?;
            nodes[id].kind = NodeKind::Internal {
                split: score.candidate,
                left,
                right,
            };
            Ok(id)
        }
    }
}

/// Fill `honest_estimates` for every node from the estimation set, level by
/// level: a node's estimate for treatment t is the mean response of its
/// estimation samples with treatment t, or the parent's estimate when there
/// are none. Errors if the estimation set misses a treatment at the root.
pub fn honest_estimate(tree: &mut UpliftTree, data: &Dataset, estimation: &[usize]) -> Result<()> {
    let k = data.n_treatments();
    let root_stats = node_tally(data, estimation, k);
    if let Some(t) = root_stats.0.iter().position(|&c| c == 0) {
        return Err(Error::Data(format!(
            "estimation set: treatment {} has no samples at the root",
            t + 1
        )));
    }

    // Level-order traversal; parents are estimated before their children.
    let mut queue: std::collections::VecDeque<(usize, Vec<usize>, Option<Vec<f64>>)> =
        std::collections::VecDeque::from([(0, estimation.to_vec(), None)]);
    while let Some((id, members, parent_estimates)) = queue.pop_front() {
        let (counts, sums) = node_tally(data, &members, k);
        let estimates: Vec<f64> = match &parent_estimates {
            None => counts
                .iter()
                .zip(&sums)
                .map(|(&c, &s)| s / c as f64)
                .collect(),
            Some(parent) => counts
                .iter()
                .zip(&sums)
                .zip(parent)
                .map(|((&c, &s), &p)| if c > 0 { s / c as f64 } else { p })
                .collect(),
        };
        if let NodeKind::Internal { split, left, right } = &tree.nodes[id].kind {
            let (left_members, right_members): (Vec<usize>, Vec<usize>) = members
                .iter()
                .partition(|&&i| split.rule.goes_left(data.feature(i, split.coordinate)));
            queue.push_back((*left, left_members, Some(estimates.clone())));
            queue.push_back((*right, right_members, Some(estimates.clone())));
        }
        tree.nodes[id].honest_estimates = estimates;
    }
    Ok(())
}

fn node_tally(data: &Dataset, members: &[usize], k: usize) -> (Vec<usize>, Vec<f64>) {
    let mut counts = vec![0usize; k];
    let mut sums = vec![0.0f64; k];
    for &i in members {
        let t = data.treatment_index(i);
        counts[t] += 1;
        sums[t] += data.response(i);
    }
    (counts, sums)
}

/// Re-derive the growth-time statistics of every node and check the
/// regularity contract: internal nodes had some treatment at or above
/// `min_split` and their splits are alpha-regular; leaves are non-empty and
/// their recorded reason is consistent. Returns human-readable violations
/// (empty = pass).
pub fn audit_tree(
    tree: &UpliftTree,
    data: &Dataset,
    approx: &[usize],
    params: &GrowthParams,
) -> Vec<String> {
    let mut violations = Vec::new();
    let k = data.n_treatments();
    let mut queue: Vec<(usize, Vec<usize>)> = vec![(0, approx.to_vec())];
    while let Some((id, members)) = queue.pop() {
        let (counts, _) = node_tally(data, &members, k);
        let m = members.len();
        match &tree.nodes[id].kind {
            NodeKind::Leaf { reason } => {
                if m == 0 {
                    violations.push(format!("leaf {id} holds no approximation samples"));
                }
                let all_below = counts.iter().all(|&c| c < params.min_split);
                match reason {
                    LeafReason::BelowMinSplit if !all_below => violations.push(format!(
                        "leaf {id} recorded the termination rule but some treatment \
                         has >= min_split samples (counts {counts:?})"
                    )),
                    LeafReason::NoRegularSplit if all_below => violations.push(format!(
                        "leaf {id} recorded a failed split search but the termination \
                         rule should have fired first (counts {counts:?})"
                    )),
                    _ => {}
                }
            }
            NodeKind::Internal { split, left, right } => {
                if counts.iter().all(|&c| c < params.min_split) {
                    violations.push(format!(
                        "internal node {id} split although every treatment count \
                         {counts:?} is below min_split {}",
                        params.min_split
                    ));
                }
                let (left_members, right_members): (Vec<usize>, Vec<usize>) = members
                    .iter()
                    .partition(|&&i| split.rule.goes_left(data.feature(i, split.coordinate)));
                let need = min_side_count(params.alpha, m);
                if left_members.len() < need || right_members.len() < need {
                    violations.push(format!(
                        "node {id} split {}/{} violates alpha-regularity (need {need} per side of {m})",
                        left_members.len(),
                        right_members.len()
                    ));
                }
                if left_members.len() != split.left_count
                    || right_members.len() != split.right_count
                {
                    violations.push(format!(
                        "node {id} recorded counts ({}, {}) but routes ({}, {})",
                        split.left_count,
                        split.right_count,
                        left_members.len(),
                        right_members.len()
                    ));
                }
                queue.push((*left, left_members));
                queue.push((*right, right_members));
            }
        }
    }
    violations
}
