//! Uplift forest training and prediction.
//!
//! Each tree gets its own RNG stream derived from the master seed and the
//! tree index, draws its own stratified approximation/estimation split, is
//! grown on the approximation set and honest-estimated on the estimation
//! set. Trees are independent, so training parallelizes freely and the
//! result does not depend on the number of worker threads.

use rand::Rng;
use rayon::prelude::*;

use crate::data::{stratified_split, Dataset, FeatureSchema};
use crate::error::{Error, Result};
use crate::rng;
use crate::tree::{grow_tree, honest_estimate, GrowthParams, UpliftTree};

/// Which estimation scheme produced a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Honest estimation: leaf estimates from a sample disjoint from the one
    /// that chose the splits.
    Ucts,
    /// Single-sample estimation: leaf estimates from the same subsample that
    /// chose the splits.
    Cts,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Ucts => "ucts",
            Method::Cts => "cts",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ucts" => Ok(Method::Ucts),
            "cts" => Ok(Method::Cts),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

/// Ensemble training configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestConfig {
    /// Number of trees B.
    pub ntree: usize,
    /// Fraction of each treatment's samples drawn into the approximation set.
    pub rho: f64,
    pub growth: GrowthParams,
    /// Master seed; per-tree streams are derived from it.
    pub seed: u64,
}

impl ForestConfig {
    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.ntree == 0 {
            return Err(Error::Config("ntree must be a positive integer".into()));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Config(format!(
                "rho must lie in (0, 1), got {}",
                self.rho
            )));
        }
        self.growth.validate(n_features)
    }
}

/// Trained uplift forest: predicts per-treatment expected responses by
/// averaging tree estimates, and a treatment policy by their argmax.
#[derive(Debug, Clone)]
pub struct UpliftForest {
    pub method: Method,
    pub config: ForestConfig,
    pub schema: FeatureSchema,
    pub n_treatments: usize,
    pub trees: Vec<UpliftTree>,
}

/// Estimates per-treatment expected responses for a feature vector.
/// Implemented by every trainable model so evaluation code is agnostic to
/// the method.
pub trait ResponseModel {
    fn n_treatments(&self) -> usize;
    fn schema(&self) -> &FeatureSchema;
    /// Estimated expected response for each treatment, indexed by t - 1.
    fn predict_mu(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Treatment with the highest estimated response; ties go to the
    /// smallest treatment id so predictions are a pure function of the model.
    fn select_treatment(&self, x: &[f64]) -> Result<u32> {
        Ok(argmax_treatment(&self.predict_mu(x)?))
    }
}

/// Smallest treatment id attaining the maximum value (1-based).
pub fn argmax_treatment(mu: &[f64]) -> u32 {
    let mut best = 0usize;
    for t in 1..mu.len() {
        if mu[t] > mu[best] {
            best = t;
        }
    }
    (best + 1) as u32
}

/// Train an honest uplift forest.
pub fn train(data: &Dataset, config: &ForestConfig) -> Result<UpliftForest> {
    train_with(data, config, Method::Ucts)
}

pub(crate) fn train_with(
    data: &Dataset,
    config: &ForestConfig,
    method: Method,
) -> Result<UpliftForest> {
    config.validate(data.n_features())?;
    let trees: Result<Vec<UpliftTree>> = (0..config.ntree)
        .into_par_iter()
        .map(|b| {
            let mut stream = rng::stream(config.seed, b as u64);
            let split_seed: u64 = stream.random();
            let split = stratified_split(data, config.rho, split_seed)?;
            let mut tree = grow_tree(data, &split.approximation, &config.growth, &mut stream)?;
            match method {
                Method::Ucts => honest_estimate(&mut tree, data, &split.estimation)?,
                // Single-sample estimation: the approximation subsample is
                // the only training set; the estimation half is discarded.
                Method::Cts => tree.set_honest_from_approx(),
            }
            Ok(tree)
        })
        .collect();
    Ok(UpliftForest {
        method,
        config: config.clone(),
        schema: data.schema().clone(),
        n_treatments: data.n_treatments(),
        trees: trees?,
    })
}

impl UpliftForest {
    /// Per-tree leaf counts, in tree order.
    pub fn leaf_counts(&self) -> Vec<usize> {
        self.trees.iter().map(|t| t.n_leaves()).collect()
    }

    /// Per-tree depths, in tree order.
    pub fn depths(&self) -> Vec<usize> {
        self.trees.iter().map(|t| t.depth()).collect()
    }
}

impl ResponseModel for UpliftForest {
    fn n_treatments(&self) -> usize {
        self.n_treatments
    }

    fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    fn predict_mu(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.schema.validate_point(x)?;
        let mut mu = vec![0.0f64; self.n_treatments];
        for tree in &self.trees {
            for (acc, &v) in mu.iter_mut().zip(tree.predict_all(x)) {
                *acc += v;
            }
        }
        let b = self.trees.len() as f64;
        for v in &mut mu {
            *v /= b;
        }
        Ok(mu)
    }
}
