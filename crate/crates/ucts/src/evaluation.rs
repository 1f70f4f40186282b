//! Offline policy evaluation: exact oracle values on synthetic models,
//! inverse-propensity values on randomized-experiment logs, modified uplift
//! curves, and sample-size sweeps.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forest::{argmax_treatment, train, ForestConfig, ResponseModel};
use crate::rng;
use crate::synthetic::SyntheticModel;

/// How a policy value was estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueMethod {
    /// Monte Carlo against the true data model.
    Oracle,
    /// Inverse-propensity scoring on a randomized log.
    Ips,
}

impl ValueMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            ValueMethod::Oracle => "oracle",
            ValueMethod::Ips => "ips",
        }
    }
}

/// Point estimate of a policy's expected response.
#[derive(Debug, Clone)]
pub struct PolicyValueReport {
    pub value: f64,
    pub std_error: f64,
    pub n_test: usize,
    pub method: ValueMethod,
}

/// IPS over an explicit row-to-treatment assignment.
fn ips_assigned(assignments: &[u32], test: &Dataset) -> Result<PolicyValueReport> {
    let n = test.n_samples();
    debug_assert_eq!(assignments.len(), n);
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for (i, &chosen) in assignments.iter().enumerate() {
        if chosen == 0 || chosen as usize > test.n_treatments() {
            return Err(Error::Data(format!(
                "policy selected treatment {chosen}, outside 1..={}",
                test.n_treatments()
            )));
        }
        let summand = if chosen == test.treatment(i) {
            let p = test.propensities()[(chosen - 1) as usize];
            if p <= 0.0 {
                return Err(Error::Data(format!(
                    "zero propensity for treatment {chosen}"
                )));
            }
            test.response(i) / p
        } else {
            0.0
        };
        sum += summand;
        sumsq += summand * summand;
    }
    let n_f = n as f64;
    let value = sum / n_f;
    let std_error = if n >= 2 {
        let var = ((sumsq - sum * sum / n_f) / (n_f - 1.0)).max(0.0);
        (var / n_f).sqrt()
    } else {
        0.0
    };
    Ok(PolicyValueReport {
        value,
        std_error,
        n_test: n,
        method: ValueMethod::Ips,
    })
}

/// Inverse-propensity estimate of a policy's value on a randomized log:
/// mean of y_i * 1{policy(x_i) = t_i} / p_{t_i}, with the sample standard
/// error of those summands.
pub fn ips_value(policy: &dyn Fn(&[f64]) -> u32, test: &Dataset) -> Result<PolicyValueReport> {
    let assignments: Vec<u32> = (0..test.n_samples()).map(|i| policy(&test.row(i))).collect();
    ips_assigned(&assignments, test)
}

/// Oracle policy value: Monte Carlo of mu(X, policy(X)) under the true model.
pub fn oracle_value(
    policy: &dyn Fn(&[f64]) -> u32,
    model: &SyntheticModel,
    mc_samples: usize,
    seed: u64,
) -> PolicyValueReport {
    let (value, std_error) = model.oracle_policy_value(policy, mc_samples, seed);
    PolicyValueReport {
        value,
        std_error,
        n_test: mc_samples,
        method: ValueMethod::Oracle,
    }
}

/// One point of a modified uplift curve.
#[derive(Debug, Clone)]
pub struct MucPoint {
    pub fraction: f64,
    pub value: f64,
    pub std_error: f64,
}

/// Expected response as the share of the population receiving the model's
/// recommendation (instead of the control arm) grows from 0 to 1.
#[derive(Debug, Clone)]
pub struct MucCurve {
    pub control: u32,
    pub points: Vec<MucPoint>,
}

/// Build the modified uplift curve: rank test rows by predicted lift
/// max_t mu(x, t) - mu(x, control) descending; at fraction q the top
/// floor(q * n) rows receive the model's selected treatment and the rest the
/// control arm; each composite policy is scored by IPS.
///
/// The grid must be strictly increasing and span 0 to 1, so the endpoints
/// are exactly the all-control policy and the full policy.
pub fn muc_curve(
    model: &dyn ResponseModel,
    test: &Dataset,
    control: u32,
    grid: &[f64],
) -> Result<MucCurve> {
    if control == 0 || control as usize > test.n_treatments() {
        return Err(Error::Config(format!(
            "control arm {control} outside 1..={}",
            test.n_treatments()
        )));
    }
    if model.n_treatments() != test.n_treatments() {
        return Err(Error::Data(format!(
            "model has {} treatments but the test set has {}",
            model.n_treatments(),
            test.n_treatments()
        )));
    }
    if grid.is_empty() || grid[0] != 0.0 || *grid.last().unwrap() != 1.0 {
        return Err(Error::Config(
            "fraction grid must start at 0 and end at 1".into(),
        ));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("fraction grid must be strictly increasing".into()));
    }

    let n = test.n_samples();
    let mut lifts = Vec::with_capacity(n);
    let mut selections = Vec::with_capacity(n);
    for i in 0..n {
        let x = test.row(i);
        let mu = model.predict_mu(&x)?;
        let best = mu.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        lifts.push(best - mu[(control - 1) as usize]);
        selections.push(argmax_treatment(&mu));
    }
    // descending lift, ties by row order
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| lifts[b].total_cmp(&lifts[a]).then(a.cmp(&b)));
    let mut rank = vec![0usize; n];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }

    let mut points = Vec::with_capacity(grid.len());
    for &q in grid {
        // slack guards against 0.1 * n style floor misses
        let treated = ((q * n as f64) + 1e-9).floor() as usize;
        let assignments: Vec<u32> = (0..n)
            .map(|i| if rank[i] < treated { selections[i] } else { control })
            .collect();
        let report = ips_assigned(&assignments, test)?;
        points.push(MucPoint {
            fraction: q,
            value: report.value,
            std_error: report.std_error,
        });
    }
    Ok(MucCurve { control, points })
}

/// One row of a sample-size sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub n_per_treatment: usize,
    pub mean_value: f64,
    /// 95% margin: 1.96 x the standard error of the mean across seeds.
    pub ci_radius: f64,
    pub n_seeds: usize,
}

/// For each training size, repeat (sample, train, oracle-evaluate) across
/// seeds and report the mean oracle value with a 95% margin.
pub fn regret_sweep(
    model: &SyntheticModel,
    sizes: &[usize],
    config: &ForestConfig,
    seeds: &[u64],
    mc_samples: usize,
) -> Result<Vec<SweepRow>> {
    if sizes.is_empty() {
        return Err(Error::Config("sweep needs at least one training size".into()));
    }
    if seeds.len() < 2 {
        return Err(Error::Config("sweep needs at least 2 seeds".into()));
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for &n_per_treatment in sizes {
        let mut values = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let data = model.sample(n_per_treatment, rng::mix(seed, 1))?;
            let mut cfg = config.clone();
            cfg.seed = rng::mix(seed, 2);
            let forest = train(&data, &cfg)?;
            let policy = |x: &[f64]| forest.select_treatment(x).expect("schema-conforming draw");
            let report = oracle_value(&policy, model, mc_samples, rng::mix(seed, 3));
            values.push(report.value);
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        rows.push(SweepRow {
            n_per_treatment,
            mean_value: mean,
            ci_radius: 1.96 * (var / n).sqrt(),
            n_seeds: values.len(),
        });
    }
    Ok(rows)
}
