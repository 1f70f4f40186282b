//! Reference methods: single-sample tree estimation (CTS) and the Separate
//! Model Approach backed by per-treatment regression forests.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{ColumnKind, Dataset, FeatureSchema};
use crate::error::{Error, Result};
use crate::forest::{train_with, ForestConfig, Method, ResponseModel, UpliftForest};
use crate::rng;
use crate::split::{SplitCandidate, SplitRule};

/// Train a CTS-style forest: identical subsampling and tree growth, but leaf
/// estimates come from the same subsample that chose the splits. The
/// estimation half of each tree's split is discarded.
pub fn train_cts(data: &Dataset, config: &ForestConfig) -> Result<UpliftForest> {
    train_with(data, config, Method::Cts)
}

/// Regression-forest parameters for the Separate Model Approach.
#[derive(Debug, Clone, PartialEq)]
pub struct RfParams {
    /// Trees per treatment arm.
    pub n_trees: usize,
    /// Coordinates drawn per split search.
    pub mtry: usize,
    /// Minimum training samples per child.
    pub min_leaf: usize,
    pub seed: u64,
}

impl RfParams {
    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("n_trees must be a positive integer".into()));
        }
        if self.mtry < 1 || self.mtry > n_features {
            return Err(Error::Config(format!(
                "mtry must lie in [1, {n_features}], got {}",
                self.mtry
            )));
        }
        if self.min_leaf == 0 {
            return Err(Error::Config("min_leaf must be a positive integer".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum RegNodeKind {
    Internal {
        split: SplitCandidate,
        left: usize,
        right: usize,
    },
    Leaf,
}

/// Regression-tree node; `value` is the training mean of the node.
#[derive(Debug, Clone)]
pub struct RegNode {
    pub kind: RegNodeKind,
    pub value: f64,
}

/// CART-style regression tree with variance-reduction splits.
#[derive(Debug, Clone)]
pub struct RegressionTree {
    pub nodes: Vec<RegNode>,
}

impl RegressionTree {
    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n.kind, RegNodeKind::Leaf))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn depth_of(nodes: &[RegNode], id: usize) -> usize {
            match &nodes[id].kind {
                RegNodeKind::Leaf => 0,
                RegNodeKind::Internal { left, right, .. } => {
                    1 + depth_of(nodes, *left).max(depth_of(nodes, *right))
                }
            }
        }
        depth_of(&self.nodes, 0)
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut id = 0;
        loop {
            match &self.nodes[id].kind {
                RegNodeKind::Leaf => return self.nodes[id].value,
                RegNodeKind::Internal { split, left, right } => {
                    id = if split.rule.goes_left(x[split.coordinate]) {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RegressionForest {
    pub trees: Vec<RegressionTree>,
}

impl RegressionForest {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        sum / self.trees.len() as f64
    }
}

/// One regression forest per treatment; the policy is the argmax of the
/// per-arm predictions.
#[derive(Debug, Clone)]
pub struct SmaModel {
    schema: FeatureSchema,
    pub params: RfParams,
    pub forests: Vec<RegressionForest>,
}

impl SmaModel {
    pub fn from_parts(
        schema: FeatureSchema,
        params: RfParams,
        forests: Vec<RegressionForest>,
    ) -> Result<Self> {
        if forests.is_empty() {
            return Err(Error::ModelFormat("sma model with no arms".into()));
        }
        if forests.iter().any(|f| f.trees.is_empty()) {
            return Err(Error::ModelFormat("sma arm with no trees".into()));
        }
        Ok(SmaModel {
            schema,
            params,
            forests,
        })
    }
}

impl ResponseModel for SmaModel {
    fn n_treatments(&self) -> usize {
        self.forests.len()
    }

    fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    fn predict_mu(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.schema.validate_point(x)?;
        Ok(self.forests.iter().map(|f| f.predict(x)).collect())
    }
}

/// Train one regression forest per treatment on the rows assigned to it.
pub fn train_sma(data: &Dataset, params: &RfParams) -> Result<SmaModel> {
    params.validate(data.n_features())?;
    let k = data.n_treatments();
    let mut forests = Vec::with_capacity(k);
    for t in 1..=k as u32 {
        let subset: Vec<usize> = (0..data.n_samples())
            .filter(|&i| data.treatment(i) == t)
            .collect();
        if subset.is_empty() {
            return Err(Error::Data(format!("treatment {t} has no samples")));
        }
        if subset.len() < params.min_leaf {
            return Err(Error::Data(format!(
                "treatment {t} has {} samples, fewer than min_leaf {}",
                subset.len(),
                params.min_leaf
            )));
        }
        let arm_seed = rng::mix(params.seed, t as u64);
        let trees: Vec<RegressionTree> = (0..params.n_trees)
            .into_par_iter()
            .map(|b| {
                let mut stream = rng::stream(arm_seed, b as u64);
                let members: Vec<usize> = (0..subset.len())
                    .map(|_| subset[stream.random_range(0..subset.len())])
                    .collect();
                grow_regression_tree(data, &members, params, &mut stream)
            })
            .collect();
        forests.push(RegressionForest { trees });
    }
    SmaModel::from_parts(data.schema().clone(), params.clone(), forests)
}

/// Grow one regression tree on explicit member rows. Splits maximize the
/// reduction in within-node sum of squared deviations; a split is accepted
/// only if both children keep at least `min_leaf` members.
pub fn grow_regression_tree(
    data: &Dataset,
    members: &[usize],
    params: &RfParams,
    rng: &mut ChaCha8Rng,
) -> RegressionTree {
    let mut nodes = Vec::new();
    build_reg_node(data, members.to_vec(), params, rng, &mut nodes);
    RegressionTree { nodes }
}

fn mean_of(data: &Dataset, members: &[usize]) -> f64 {
    let sum: f64 = members.iter().map(|&i| data.response(i)).sum();
    sum / members.len() as f64
}

fn build_reg_node(
    data: &Dataset,
    members: Vec<usize>,
    params: &RfParams,
    rng: &mut ChaCha8Rng,
    nodes: &mut Vec<RegNode>,
) -> usize {
    let id = nodes.len();
    nodes.push(RegNode {
        kind: RegNodeKind::Leaf,
        value: mean_of(data, &members),
    });

    let m = members.len();
    let pure = members
        .windows(2)
        .all(|w| data.response(w[0]) == data.response(w[1]));
    if m < 2 * params.min_leaf || pure {
        return id;
    }

    // draw mtry distinct coordinates
    let d = data.n_features();
    let mut pool: Vec<usize> = (0..d).collect();
    for i in 0..params.mtry.min(d) {
        let j = rng.random_range(i..d);
        pool.swap(i, j);
    }
    pool.truncate(params.mtry.min(d));

    let mut best: Option<(f64, SplitCandidate)> = None;
    for &coordinate in &pool {
        best_sse_split(data, &members, coordinate, params.min_leaf, &mut best);
    }

    match best {
        None => id,
        Some((_, candidate)) => {
            let (left_members, right_members): (Vec<usize>, Vec<usize>) = members
                .iter()
                .partition(|&&i| candidate.rule.goes_left(data.feature(i, candidate.coordinate)));
            let left = build_reg_node(data, left_members, params, rng, nodes);
            let right = build_reg_node(data, right_members, params, rng, nodes);
            nodes[id].kind = RegNodeKind::Internal {
                split: candidate,
                left,
                right,
            };
            id
        }
    }
}

/// Offer the best min_leaf-feasible partition of one coordinate, scored by
/// the SSE-reduction proxy sum_l^2/n_l + sum_r^2/n_r (larger is better; the
/// shared sum-of-squares term cancels).
fn best_sse_split(
    data: &Dataset,
    members: &[usize],
    coordinate: usize,
    min_leaf: usize,
    best: &mut Option<(f64, SplitCandidate)>,
) {
    let m = members.len();
    let mut consider = |proxy: f64, candidate: SplitCandidate| {
        if best.as_ref().map_or(true, |(p, _)| proxy > *p) {
            *best = Some((proxy, candidate));
        }
    };
    match &data.schema().column(coordinate).kind {
        ColumnKind::Numeric => {
            let mut rows: Vec<(f64, f64)> = members
                .iter()
                .map(|&i| (data.feature(i, coordinate), data.response(i)))
                .collect();
            rows.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let total: f64 = rows.iter().map(|r| r.1).sum();
            let mut left_sum = 0.0;
            for p in 0..m - 1 {
                left_sum += rows[p].1;
                if rows[p].0 < rows[p + 1].0 {
                    let n_l = p + 1;
                    let n_r = m - n_l;
                    if n_l >= min_leaf && n_r >= min_leaf {
                        let right_sum = total - left_sum;
                        let proxy = left_sum * left_sum / n_l as f64
                            + right_sum * right_sum / n_r as f64;
                        consider(
                            proxy,
                            SplitCandidate {
                                coordinate,
                                rule: SplitRule::Numeric {
                                    threshold: crate::split::midpoint(rows[p].0, rows[p + 1].0),
                                },
                                left_count: n_l,
                                right_count: n_r,
                            },
                        );
                    }
                }
            }
        }
        ColumnKind::Categorical { levels } => {
            let cardinality = levels.len();
            let mut level_n = vec![0usize; cardinality];
            let mut level_sum = vec![0.0f64; cardinality];
            let mut total = 0.0;
            for &i in members {
                let l = data.feature(i, coordinate) as usize;
                level_n[l] += 1;
                level_sum[l] += data.response(i);
                total += data.response(i);
            }
            let present: Vec<u32> = (0..cardinality)
                .filter(|&l| level_n[l] > 0)
                .map(|l| l as u32)
                .collect();
            let subsets = match crate::split::categorical_subsets(&present) {
                Ok(s) => s,
                Err(_) => return, // too many levels: skip the coordinate
            };
            for subset in subsets {
                let mut n_l = 0usize;
                let mut left_sum = 0.0;
                for &l in &subset {
                    n_l += level_n[l as usize];
                    left_sum += level_sum[l as usize];
                }
                let n_r = m - n_l;
                if n_l < min_leaf || n_r < min_leaf {
                    continue;
                }
                let right_sum = total - left_sum;
                let proxy =
                    left_sum * left_sum / n_l as f64 + right_sum * right_sum / n_r as f64;
                consider(
                    proxy,
                    SplitCandidate {
                        coordinate,
                        rule: SplitRule::Categorical {
                            left_levels: subset,
                        },
                        left_count: n_l,
                        right_count: n_r,
                    },
                );
            }
        }
    }
}
