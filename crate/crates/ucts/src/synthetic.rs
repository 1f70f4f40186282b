//! Synthetic benchmark data models with exact response oracles.
//!
//! Both models expose the true conditional expectation mu(x, t), the
//! pointwise-optimal policy, and Monte Carlo policy values, so learned
//! policies can be scored against ground truth.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{ColumnSpec, Dataset, FeatureSchema};
use crate::error::{Error, Result};
use crate::rng;

/// Expected response of any single fixed treatment under [`TwoDModel`].
pub const TWO_D_SINGLE_ARM_VALUE: f64 = 25.0;
/// Expected response of the pointwise-optimal policy under [`TwoDModel`].
pub const TWO_D_OPTIMAL_VALUE: f64 = 26.25;

/// Two-feature, two-treatment model.
///
/// X1 ~ U[0, 100]; X2 uniform over {A, B, C}. Responses:
///
/// - t = 1: Y ~ U[0, X1]
/// - t = 2: Y ~ 0.8 U[0, X1] + 5 when X2 = B, else 1.2 U[0, X1] - 5
///
/// So mu(x, 1) = x1/2 and mu(x, 2) = 0.4 x1 + 5 (B) or 0.6 x1 - 5 (A, C);
/// either way the two arms cross at x1 = 50. Integrating over X gives 25.0
/// for every constant arm and 26.25 for the optimal rule.
#[derive(Debug, Clone, Copy, Default)]
pub struct TwoDModel;

impl TwoDModel {
    pub const TREATMENTS: usize = 2;

    pub fn schema() -> FeatureSchema {
        FeatureSchema::new(vec![
            ColumnSpec::numeric("x1"),
            ColumnSpec::categorical("x2", &["A", "B", "C"]),
        ])
        .expect("static schema")
    }

    pub fn sample_features(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        vec![
            rng.random_range(0.0..100.0),
            rng.random_range(0..3) as f64,
        ]
    }

    pub fn sample_response(&self, x: &[f64], t: u32, rng: &mut ChaCha8Rng) -> f64 {
        let u: f64 = rng.random::<f64>() * x[0];
        match t {
            1 => u,
            2 => {
                if x[1] == 1.0 {
                    // level B
                    0.8 * u + 5.0
                } else {
                    1.2 * u - 5.0
                }
            }
            _ => panic!("two-treatment model queried with t = {t}"),
        }
    }

    pub fn mu(&self, x: &[f64], t: u32) -> f64 {
        let half = x[0] / 2.0;
        match t {
            1 => half,
            2 => {
                if x[1] == 1.0 {
                    0.8 * half + 5.0
                } else {
                    1.2 * half - 5.0
                }
            }
            _ => panic!("two-treatment model queried with t = {t}"),
        }
    }

    pub fn optimal_treatment(&self, x: &[f64]) -> u32 {
        if self.mu(x, 1) >= self.mu(x, 2) {
            1
        } else {
            2
        }
    }

    /// (single-arm value, optimal value): closed-form integrals of the
    /// response table, namely 25.0 and 26.25.
    pub fn oracle_values() -> (f64, f64) {
        (TWO_D_SINGLE_ARM_VALUE, TWO_D_OPTIMAL_VALUE)
    }
}

/// One exponential bump of the 50-d response surface.
#[derive(Debug, Clone)]
struct Component {
    center: Vec<f64>,
    amplitude: f64,
    length_scale: f64,
}

/// Fifty-feature, four-treatment model.
///
/// X_j ~ U[0, 10] for j = 1..50. Response under treatment t:
///
/// Y = f(X) + U[0, a * X_t] + eps,   eps ~ Normal(0, sigma)
///
/// where f is a seeded mixture of 50 exponential bumps
/// `amplitude * exp(-|x - center| / length_scale)` (centers uniform in the
/// cube, amplitudes in [0.5, 1.5], length scales in [5, 15]) and `a` is the
/// effect scale. Since f and eps do not depend on t, the optimal policy is
/// argmax_t x_t regardless of f.
///
/// The noise level follows the "twice the mean treatment effect" rule:
/// E[U[0, a X_t]] = a E[X_t] / 2 = 2.5 a, so sigma = 5 a.
#[derive(Debug, Clone)]
pub struct HighDimModel {
    pub effect_scale: f64,
    pub noise_sigma: f64,
    pub mixture_seed: u64,
    components: Vec<Component>,
}

impl HighDimModel {
    pub const DIM: usize = 50;
    pub const TREATMENTS: usize = 4;
    const N_COMPONENTS: usize = 50;

    pub fn new(mixture_seed: u64, effect_scale: f64) -> Result<Self> {
        if !(effect_scale >= 0.0 && effect_scale.is_finite()) {
            return Err(Error::Config(format!(
                "effect_scale must be a non-negative real, got {effect_scale}"
            )));
        }
        let mut r = rng::stream(mixture_seed, 0xf00d);
        let components = (0..Self::N_COMPONENTS)
            .map(|_| Component {
                center: (0..Self::DIM).map(|_| r.random_range(0.0..10.0)).collect(),
                amplitude: r.random_range(0.5..1.5),
                length_scale: r.random_range(5.0..15.0),
            })
            .collect();
        Ok(HighDimModel {
            effect_scale,
            noise_sigma: 2.0 * (effect_scale * 2.5),
            mixture_seed,
            components,
        })
    }

    pub fn schema() -> FeatureSchema {
        FeatureSchema::new(
            (1..=Self::DIM)
                .map(|j| ColumnSpec::numeric(format!("x{j}")))
                .collect(),
        )
        .expect("static schema")
    }

    /// Treatment-independent term: the mixture of exponential bumps.
    pub fn f(&self, x: &[f64]) -> f64 {
        self.components
            .iter()
            .map(|c| {
                let dist2: f64 = x
                    .iter()
                    .zip(&c.center)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                c.amplitude * (-dist2.sqrt() / c.length_scale).exp()
            })
            .sum()
    }

    pub fn sample_features(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..Self::DIM).map(|_| rng.random_range(0.0..10.0)).collect()
    }

    pub fn sample_response(&self, x: &[f64], t: u32, rng: &mut ChaCha8Rng) -> f64 {
        let x_t = x[(t - 1) as usize];
        let uplift: f64 = rng.random::<f64>() * self.effect_scale * x_t;
        let noise = Normal::new(0.0, self.noise_sigma)
            .expect("valid sigma")
            .sample(rng);
        self.f(x) + uplift + noise
    }

    pub fn mu(&self, x: &[f64], t: u32) -> f64 {
        self.f(x) + self.effect_scale * x[(t - 1) as usize] / 2.0
    }

    pub fn optimal_treatment(&self, x: &[f64]) -> u32 {
        let mut best = 0usize;
        for j in 1..Self::TREATMENTS {
            if x[j] > x[best] {
                best = j;
            }
        }
        (best + 1) as u32
    }
}

/// Either benchmark model behind one interface.
#[derive(Debug, Clone)]
pub enum SyntheticModel {
    TwoD(TwoDModel),
    HighDim(HighDimModel),
}

impl SyntheticModel {
    pub fn two_d() -> Self {
        SyntheticModel::TwoD(TwoDModel)
    }

    pub fn high_dim(mixture_seed: u64, effect_scale: f64) -> Result<Self> {
        Ok(SyntheticModel::HighDim(HighDimModel::new(
            mixture_seed,
            effect_scale,
        )?))
    }

    pub fn schema(&self) -> FeatureSchema {
        match self {
            SyntheticModel::TwoD(_) => TwoDModel::schema(),
            SyntheticModel::HighDim(_) => HighDimModel::schema(),
        }
    }

    pub fn n_treatments(&self) -> usize {
        match self {
            SyntheticModel::TwoD(_) => TwoDModel::TREATMENTS,
            SyntheticModel::HighDim(_) => HighDimModel::TREATMENTS,
        }
    }

    pub fn sample_features(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            SyntheticModel::TwoD(m) => m.sample_features(rng),
            SyntheticModel::HighDim(m) => m.sample_features(rng),
        }
    }

    pub fn mu(&self, x: &[f64], t: u32) -> f64 {
        match self {
            SyntheticModel::TwoD(m) => m.mu(x, t),
            SyntheticModel::HighDim(m) => m.mu(x, t),
        }
    }

    pub fn optimal_treatment(&self, x: &[f64]) -> u32 {
        match self {
            SyntheticModel::TwoD(m) => m.optimal_treatment(x),
            SyntheticModel::HighDim(m) => m.optimal_treatment(x),
        }
    }

    /// Draw a balanced randomized experiment: `n_per_treatment` rows per
    /// arm, uniform propensities. Deterministic given the seed.
    pub fn sample(&self, n_per_treatment: usize, seed: u64) -> Result<Dataset> {
        if n_per_treatment == 0 {
            return Err(Error::Config("n_per_treatment must be positive".into()));
        }
        let k = self.n_treatments();
        let mut r = rng::stream(seed, 0);
        let n = k * n_per_treatment;
        let d = self.schema().n_features();
        let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(n); d];
        let mut treatments = Vec::with_capacity(n);
        let mut responses = Vec::with_capacity(n);
        for t in 1..=k as u32 {
            for _ in 0..n_per_treatment {
                let x = self.sample_features(&mut r);
                let y = match self {
                    SyntheticModel::TwoD(m) => m.sample_response(&x, t, &mut r),
                    SyntheticModel::HighDim(m) => m.sample_response(&x, t, &mut r),
                };
                for (col, v) in columns.iter_mut().zip(&x) {
                    col.push(*v);
                }
                treatments.push(t);
                responses.push(y);
            }
        }
        Dataset::new(
            self.schema(),
            columns,
            treatments,
            responses,
            Some(vec![1.0 / k as f64; k]),
        )
    }

    /// Monte Carlo estimate of E[mu(X, policy(X))] with its standard-error
    /// radius. Deterministic given the seed.
    pub fn oracle_policy_value(
        &self,
        policy: &dyn Fn(&[f64]) -> u32,
        mc_samples: usize,
        seed: u64,
    ) -> (f64, f64) {
        assert!(mc_samples >= 1, "mc_samples must be positive");
        let mut r = rng::stream(seed, 1);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..mc_samples {
            let x = self.sample_features(&mut r);
            let v = self.mu(&x, policy(&x));
            sum += v;
            sumsq += v * v;
        }
        let n = mc_samples as f64;
        let mean = sum / n;
        let radius = if mc_samples >= 2 {
            let var = ((sumsq - sum * sum / n) / (n - 1.0)).max(0.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        (mean, radius)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_d_oracle_means() {
        let m = TwoDModel;
        // mu(x, 1) = x1 / 2
        assert_eq!(m.mu(&[60.0, 0.0], 1), 30.0);
        // mu((60, B), 2) = 0.4 * 60 + 5 = 29
        assert_eq!(m.mu(&[60.0, 1.0], 2), 29.0);
        // mu((60, A), 2) = 0.6 * 60 - 5 = 31
        assert_eq!(m.mu(&[60.0, 0.0], 2), 31.0);
    }

    #[test]
    fn two_d_boundary_at_fifty() {
        // The arms cross at x1 = 50 for every level of x2; which arm wins on
        // each side flips between level B and levels A/C.
        let m = TwoDModel;
        for code in [0.0, 2.0] {
            assert_eq!(m.optimal_treatment(&[49.9, code]), 1);
            assert_eq!(m.optimal_treatment(&[50.1, code]), 2);
        }
        assert_eq!(m.optimal_treatment(&[49.9, 1.0]), 2);
        assert_eq!(m.optimal_treatment(&[50.1, 1.0]), 1);
        // the spec point x1 = 90, x2 = A: true means 45 vs 49
        assert_eq!(m.mu(&[90.0, 0.0], 1), 45.0);
        assert_eq!(m.mu(&[90.0, 0.0], 2), 49.0);
        assert_eq!(m.optimal_treatment(&[90.0, 0.0]), 2);
    }

    #[test]
    fn two_d_responses_stay_in_support() {
        let model = SyntheticModel::two_d();
        let data = model.sample(500, 4).unwrap();
        for i in 0..data.n_samples() {
            let x1 = data.feature(i, 0);
            let y = data.response(i);
            match data.treatment(i) {
                1 => assert!((0.0..=x1).contains(&y), "t=1 y={y} x1={x1}"),
                2 => {
                    if data.feature(i, 1) == 1.0 {
                        assert!((5.0..=0.8 * x1 + 5.0).contains(&y));
                    } else {
                        assert!((-5.0..=1.2 * x1 - 5.0).contains(&y));
                    }
                }
                t => panic!("unexpected treatment {t}"),
            }
        }
    }

    #[test]
    fn two_d_empirical_means_match_oracle() {
        // bin by (x1 decile, x2) and compare against mu with 3-sigma bands
        let model = SyntheticModel::two_d();
        let data = model.sample(30_000, 11).unwrap();
        let mut sums = vec![0.0; 10 * 3 * 2];
        let mut sqs = vec![0.0; 10 * 3 * 2];
        let mut counts = vec![0usize; 10 * 3 * 2];
        let mut mu_sums = vec![0.0; 10 * 3 * 2];
        for i in 0..data.n_samples() {
            let bin_x = ((data.feature(i, 0) / 10.0) as usize).min(9);
            let code = data.feature(i, 1) as usize;
            let t = data.treatment_index(i);
            let idx = (bin_x * 3 + code) * 2 + t;
            let y = data.response(i);
            sums[idx] += y;
            sqs[idx] += y * y;
            counts[idx] += 1;
            mu_sums[idx] += model.mu(&data.row(i), data.treatment(i));
        }
        for idx in 0..counts.len() {
            let n = counts[idx] as f64;
            assert!(n > 100.0, "bin {idx} too small");
            let mean = sums[idx] / n;
            let var = (sqs[idx] / n - mean * mean).max(1e-12);
            let se = (var / n).sqrt();
            let expected = mu_sums[idx] / n;
            assert!(
                (mean - expected).abs() < 3.0 * se + 1e-6,
                "bin {idx}: mean {mean} vs mu {expected} (se {se})"
            );
        }
    }

    #[test]
    fn oracle_policy_values_hit_constants() {
        let model = SyntheticModel::two_d();
        let (v1, r1) = model.oracle_policy_value(&|_| 1, 200_000, 5);
        assert!((v1 - 25.0).abs() < 3.0 * r1 + 0.05, "v1 = {v1} +- {r1}");
        let (v2, r2) = model.oracle_policy_value(&|_| 2, 200_000, 6);
        assert!((v2 - 25.0).abs() < 3.0 * r2 + 0.05, "v2 = {v2} +- {r2}");
        let two_d = TwoDModel;
        let (vopt, ropt) =
            model.oracle_policy_value(&|x| two_d.optimal_treatment(x), 200_000, 7);
        assert!((vopt - 26.25).abs() < 3.0 * ropt + 0.05, "vopt = {vopt} +- {ropt}");
        // optimality: any policy is bounded by the optimal one
        assert!(v1 <= vopt + 3.0 * (r1 + ropt));
        assert!(v2 <= vopt + 3.0 * (r2 + ropt));
    }

    #[test]
    fn high_dim_argmax_is_coordinate_argmax() {
        let model = HighDimModel::new(3, 1.0).unwrap();
        let mut r = rng::from_seed(21);
        for _ in 0..200 {
            let x = model.sample_features(&mut r);
            let by_mu = (1..=4u32)
                .max_by(|&a, &b| model.mu(&x, a).total_cmp(&model.mu(&x, b)))
                .unwrap();
            assert_eq!(model.optimal_treatment(&x), by_mu);
        }
    }

    #[test]
    fn high_dim_determinism_and_noise_rule() {
        let a = HighDimModel::new(9, 2.0).unwrap();
        let b = HighDimModel::new(9, 2.0).unwrap();
        let x = vec![5.0; 50];
        assert_eq!(a.f(&x), b.f(&x));
        assert_eq!(a.noise_sigma, 10.0); // 2 * (2.0 * 2.5)
        let c = HighDimModel::new(10, 2.0).unwrap();
        assert_ne!(a.f(&x), c.f(&x));
    }

    #[test]
    fn zero_effect_collapses_to_shared_value() {
        // effect scale 0: all arms share mu, so every policy scores E[f]
        let model = SyntheticModel::high_dim(4, 0.0).unwrap();
        let (va, ra) = model.oracle_policy_value(&|_| 1, 5_000, 8);
        let (vb, rb) = model.oracle_policy_value(&|x| model.optimal_treatment(x), 5_000, 8);
        assert!((va - vb).abs() < 3.0 * (ra + rb) + 1e-9, "{va} vs {vb}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let model = SyntheticModel::two_d();
        let a = model.sample(50, 3).unwrap();
        let b = model.sample(50, 3).unwrap();
        for i in 0..a.n_samples() {
            assert_eq!(a.response(i), b.response(i));
            assert_eq!(a.feature(i, 0), b.feature(i, 0));
        }
    }
}
