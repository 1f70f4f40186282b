//! Shared test helpers: an independent brute-force split oracle and random
//! dataset generators.
//!
//! The oracle re-derives the split score from scratch — naive loops, exact
//! integer alpha arithmetic, explicit partition enumeration — so it shares
//! no code path with the library's scanner.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use ucts::data::{ColumnKind, ColumnSpec, Dataset, FeatureSchema};

/// Brute-force parameters; alpha is the exact rational alpha_num / 20.
#[derive(Debug, Clone, Copy)]
pub struct BruteParams {
    pub min_split: usize,
    pub n_reg: f64,
    pub alpha_num: u32,
}

impl BruteParams {
    pub fn alpha(&self) -> f64 {
        self.alpha_num as f64 / 20.0
    }
}

/// Exact ceil(alpha_num * m / 20) in integer arithmetic.
pub fn exact_min_side(alpha_num: u32, m: usize) -> usize {
    (alpha_num as usize * m).div_ceil(20).max(1)
}

fn arm_mean(data: &Dataset, rows: &[usize], k: usize) -> Vec<f64> {
    let mut counts = vec![0usize; k];
    let mut sums = vec![0.0f64; k];
    for &i in rows {
        let t = (data.treatment(i) - 1) as usize;
        counts[t] += 1;
        sums[t] += data.response(i);
    }
    counts
        .iter()
        .zip(&sums)
        .map(|(&c, &s)| s / c as f64)
        .collect()
}

fn child_estimates(
    data: &Dataset,
    rows: &[usize],
    parent: &[f64],
    min_split: usize,
    n_reg: f64,
) -> Vec<f64> {
    let k = parent.len();
    let mut counts = vec![0usize; k];
    let mut sums = vec![0.0f64; k];
    for &i in rows {
        let t = (data.treatment(i) - 1) as usize;
        counts[t] += 1;
        sums[t] += data.response(i);
    }
    (0..k)
        .map(|t| {
            if counts[t] >= min_split {
                (sums[t] + parent[t] * n_reg) / (counts[t] as f64 + n_reg)
            } else {
                parent[t]
            }
        })
        .collect()
}

fn max_of(values: &[f64]) -> f64 {
    values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

fn partition_gain(
    data: &Dataset,
    members: &[usize],
    left: &[usize],
    right: &[usize],
    parent: &[f64],
    p: &BruteParams,
) -> f64 {
    let m = members.len() as f64;
    let left_est = child_estimates(data, left, parent, p.min_split, p.n_reg);
    let right_est = child_estimates(data, right, parent, p.min_split, p.n_reg);
    (left.len() as f64 / m) * max_of(&left_est) + (right.len() as f64 / m) * max_of(&right_est)
        - max_of(parent)
}

/// Every alpha-regular binary partition of `members` along one coordinate,
/// as (left, right) index lists.
fn coordinate_partitions(
    data: &Dataset,
    members: &[usize],
    coordinate: usize,
    min_side: usize,
) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut partitions = Vec::new();
    match &data.schema().column(coordinate).kind {
        ColumnKind::Numeric => {
            let mut values: Vec<f64> = members.iter().map(|&i| data.feature(i, coordinate)).collect();
            values.sort_by(f64::total_cmp);
            values.dedup();
            for w in values.windows(2) {
                let threshold = (w[0] + w[1]) / 2.0;
                let (l, r): (Vec<usize>, Vec<usize>) = members
                    .iter()
                    .partition(|&&i| data.feature(i, coordinate) <= threshold);
                if l.len() >= min_side && r.len() >= min_side {
                    partitions.push((l, r));
                }
            }
        }
        ColumnKind::Categorical { levels } => {
            let mut present: Vec<u32> = members
                .iter()
                .map(|&i| data.feature(i, coordinate) as u32)
                .collect();
            present.sort_unstable();
            present.dedup();
            let c = present.len();
            assert!(c <= levels.len() && c <= 10, "oracle only covers full enumeration");
            if c < 2 {
                return partitions;
            }
            // subsets of present levels containing the smallest one
            for mask in 0..(1u32 << (c - 1)) {
                let full_mask = (mask << 1) | 1;
                if full_mask == (1 << c) - 1 {
                    continue; // complement empty
                }
                let subset: Vec<u32> = (0..c)
                    .filter(|&b| full_mask >> b & 1 == 1)
                    .map(|b| present[b])
                    .collect();
                let (l, r): (Vec<usize>, Vec<usize>) = members
                    .iter()
                    .partition(|&&i| subset.contains(&(data.feature(i, coordinate) as u32)));
                if l.len() >= min_side && r.len() >= min_side {
                    partitions.push((l, r));
                }
            }
        }
    }
    partitions
}

/// Maximum split gain over every alpha-regular partition of every
/// coordinate, or `None` when no partition qualifies. The parent estimates
/// are the root initialization: plain per-treatment means.
pub fn brute_force_best_gain(data: &Dataset, members: &[usize], p: &BruteParams) -> Option<f64> {
    let parent = arm_mean(data, members, data.n_treatments());
    let min_side = exact_min_side(p.alpha_num, members.len());
    let mut best: Option<f64> = None;
    for coordinate in 0..data.n_features() {
        for (left, right) in coordinate_partitions(data, members, coordinate, min_side) {
            let gain = partition_gain(data, members, &left, &right, &parent, p);
            best = Some(match best {
                None => gain,
                Some(b) => b.max(gain),
            });
        }
    }
    best
}

/// Random small dataset: 1-2 columns (numeric or categorical), K in 1..=3,
/// every treatment present. Values are sometimes rounded to force ties.
pub fn random_small_dataset(rng: &mut ChaCha8Rng, max_n: usize, max_k: usize) -> Dataset {
    let n = rng.random_range(4..=max_n);
    let d = rng.random_range(1..=2);
    let k = rng.random_range(1..=max_k);

    let mut specs = Vec::with_capacity(d);
    let mut columns = Vec::with_capacity(d);
    for j in 0..d {
        if rng.random::<f64>() < 0.6 {
            specs.push(ColumnSpec::numeric(format!("x{j}")));
            let rounded = rng.random::<f64>() < 0.5;
            columns.push(
                (0..n)
                    .map(|_| {
                        let v: f64 = rng.random_range(0.0..10.0);
                        if rounded {
                            (v * 2.0).round() / 2.0
                        } else {
                            v
                        }
                    })
                    .collect::<Vec<f64>>(),
            );
        } else {
            let c = rng.random_range(2..=4);
            let names: Vec<String> = (0..c).map(|l| format!("L{l}")).collect();
            let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
            specs.push(ColumnSpec::categorical(format!("x{j}"), &refs));
            columns.push(
                (0..n)
                    .map(|_| rng.random_range(0..c) as f64)
                    .collect::<Vec<f64>>(),
            );
        }
    }

    let treatments: Vec<u32> = (0..n)
        .map(|i| {
            if i < k {
                (i + 1) as u32 // guarantee every treatment appears
            } else {
                rng.random_range(1..=k as u32)
            }
        })
        .collect();
    let rounded = rng.random::<f64>() < 0.3;
    let responses: Vec<f64> = (0..n)
        .map(|_| {
            let y: f64 = rng.random_range(-5.0..5.0);
            if rounded {
                y.round()
            } else {
                y
            }
        })
        .collect();

    let schema = FeatureSchema::new(specs).unwrap();
    Dataset::new(
        schema,
        columns,
        treatments,
        responses,
        Some(vec![1.0 / k as f64; k]),
    )
    .unwrap()
}

/// Random growth parameters compatible with the brute-force oracle.
pub fn random_brute_params(rng: &mut ChaCha8Rng) -> BruteParams {
    BruteParams {
        min_split: rng.random_range(1..=3),
        n_reg: [0.0, 0.5, 2.0][rng.random_range(0..3)],
        alpha_num: rng.random_range(1..=9),
    }
}
