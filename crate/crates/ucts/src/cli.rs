//! Command-line front end: simulate, train, predict, evaluate, muc, sweep.
//!
//! All randomness flows from explicit `--seed` flags, so identical argv
//! produce byte-identical artifacts. Flags may also be given in a
//! `--config` file of `key=value` lines (paper-style names like
//! `min_split=80`); explicit flags override the file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::baselines::{train_sma, RfParams};
use crate::data::{read_feature_rows, Dataset, FeatureSchema};
use crate::error::{Error, Result};
use crate::evaluation::{ips_value, muc_curve, oracle_value, regret_sweep, PolicyValueReport};
use crate::forest::{train, ForestConfig, Method, ResponseModel};
use crate::persist::Model;
use crate::synthetic::SyntheticModel;
use crate::tree::GrowthParams;

#[derive(Parser, Debug)]
#[command(
    name = "ucts",
    version,
    about = "Uplift forests with honest leaf estimation: simulate, train, evaluate"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic randomized experiment (CSV plus schema sidecar)
    Simulate(SimulateArgs),
    /// Train a model and write it to a model file plus a training summary
    Train(TrainArgs),
    /// Write per-row response estimates and the selected treatment
    Predict(PredictArgs),
    /// Estimate a trained policy's expected response (IPS or oracle)
    Evaluate(EvaluateArgs),
    /// Modified uplift curve over a treated-fraction grid
    Muc(MucArgs),
    /// Mean oracle value across training sizes and seeds
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Optional file of key=value lines; explicit flags override it
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads for training (default: all cores); results do not
    /// depend on this
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Data model: "2d" or "50d"
    #[arg(long)]
    model: String,
    /// Samples per treatment
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path; the schema sidecar lands at <out>.schema
    #[arg(long)]
    out: PathBuf,
    /// Override the sidecar path
    #[arg(long)]
    schema_out: Option<PathBuf>,
    /// Treatment-effect magnitude of the 50d model
    #[arg(long, default_value_t = 1.0)]
    effect_scale: f64,
    /// Seed of the 50d response-surface mixture
    #[arg(long, default_value_t = 0)]
    mixture_seed: u64,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct TrainingFlags {
    #[arg(long, default_value_t = 200)]
    ntree: usize,
    /// Fraction of each treatment drawn into the approximation set
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    /// Minimum per-treatment samples enabling a fresh estimate / a split
    #[arg(long, default_value_t = 80)]
    min_split: usize,
    /// Shrinkage weight toward the parent estimate
    #[arg(long, default_value_t = 0.0)]
    n_reg: f64,
    /// Balance factor in (0, 0.5): minimum fraction kept on each split side
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Coordinates examined per split search (default: all features)
    #[arg(long)]
    mtry: Option<usize>,
    /// Probability of examining a single random coordinate instead
    #[arg(long, default_value_t = 0.05)]
    pi: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl TrainingFlags {
    fn forest_config(&self, n_features: usize) -> Result<ForestConfig> {
        let config = ForestConfig {
            ntree: self.ntree,
            rho: self.rho,
            growth: GrowthParams {
                min_split: self.min_split,
                n_reg: self.n_reg,
                alpha: self.alpha,
                mtry: self.mtry.unwrap_or(n_features),
                pi: self.pi,
            },
            seed: self.seed,
        };
        config.validate(n_features)?;
        Ok(config)
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training CSV (feature columns plus treatment and response)
    #[arg(long)]
    data: PathBuf,
    /// Schema sidecar (default: <data>.schema)
    #[arg(long)]
    schema: Option<PathBuf>,
    /// ucts, cts, or sma
    #[arg(long, default_value = "ucts")]
    method: String,
    /// Output model file; a summary lands at <out>.summary.txt
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated assignment probabilities (default: empirical)
    #[arg(long)]
    propensities: Option<String>,
    /// Minimum samples per regression-tree child (sma only)
    #[arg(long, default_value_t = 5)]
    min_leaf: usize,
    #[command(flatten)]
    training: TrainingFlags,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV of feature rows (treatment/response columns are ignored)
    #[arg(long)]
    data: PathBuf,
    /// Output CSV: mu_1..mu_K and the selected treatment per row
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Randomized test log for IPS evaluation
    #[arg(long)]
    data: Option<PathBuf>,
    /// Schema sidecar for --data (default: <data>.schema)
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Comma-separated assignment probabilities of the test log
    #[arg(long)]
    propensities: Option<String>,
    /// Oracle evaluation against a synthetic model: "2d" or "50d"
    #[arg(long)]
    oracle: Option<String>,
    #[arg(long, default_value_t = 100_000)]
    mc_samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    effect_scale: f64,
    #[arg(long, default_value_t = 0)]
    mixture_seed: u64,
    /// Output CSV: method,value,std_error,n_test
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct MucArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    propensities: Option<String>,
    /// Control arm id
    #[arg(long, default_value_t = 1)]
    control: u32,
    /// Comma-separated fractions from 0 to 1
    #[arg(long, default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1")]
    grid: String,
    /// Output CSV: fraction,value,std_error,control
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Synthetic model: "2d" or "50d"
    #[arg(long)]
    oracle: String,
    /// Comma-separated training sizes (samples per treatment)
    #[arg(long)]
    sizes: String,
    #[arg(long, default_value_t = 10)]
    n_seeds: usize,
    #[arg(long, default_value_t = 100_000)]
    mc_samples: usize,
    #[arg(long, default_value_t = 1.0)]
    effect_scale: f64,
    #[arg(long, default_value_t = 0)]
    mixture_seed: u64,
    /// Output CSV: n_per_treatment,mean_value,ci_radius,n_seeds
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    training: TrainingFlags,
    #[command(flatten)]
    common: CommonArgs,
}

/// Entry point for `main`: parse argv (without the binary name), run, and
/// map errors to exit codes (0 ok, 1 usage, 2 data, 3 internal).
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let raw: Vec<String> = argv.into_iter().map(Into::into).collect();
    let merged = match merge_config_file(raw) {
        Ok(args) => args,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let mut full = vec!["ucts".to_string()];
    full.extend(merged);
    let cli = match Cli::try_parse_from(&full) {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are not errors
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Convenience wrapper used by tests.
pub fn run_from(args: &[&str]) -> i32 {
    run(args.iter().map(|s| s.to_string()))
}

/// If `--config FILE` appears in argv, append `--key value` for every file
/// entry whose flag is not already present. Underscores in keys map to
/// hyphens, so the file can use the parameter names `min_split`, `n_reg`...
fn merge_config_file(mut args: Vec<String>) -> Result<Vec<String>> {
    let path = match find_flag_value(&args, "--config") {
        Some(p) => p,
        None => return Ok(args),
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Config(format!("cannot read config {path:?}: {e}")))?;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("config line {}: expected key=value", lineno + 1))
        })?;
        let flag = format!("--{}", key.trim().replace('_', "-"));
        let already = args
            .iter()
            .any(|a| a == &flag || a.starts_with(&format!("{flag}=")));
        if !already {
            args.push(flag);
            args.push(value.trim().to_string());
        }
    }
    Ok(args)
}

fn find_flag_value(args: &[String], flag: &str) -> Option<String> {
    for (i, a) in args.iter().enumerate() {
        if a == flag {
            return args.get(i + 1).cloned();
        }
        if let Some(v) = a.strip_prefix(&format!("{flag}=")) {
            return Some(v.to_string());
        }
    }
    None
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => with_threads(&args.common, || cmd_simulate(&args)),
        Command::Train(args) => with_threads(&args.common, || cmd_train(&args)),
        Command::Predict(args) => with_threads(&args.common, || cmd_predict(&args)),
        Command::Evaluate(args) => with_threads(&args.common, || cmd_evaluate(&args)),
        Command::Muc(args) => with_threads(&args.common, || cmd_muc(&args)),
        Command::Sweep(args) => with_threads(&args.common, || cmd_sweep(&args)),
    }
}

fn with_threads<F: FnOnce() -> Result<()> + Send>(common: &CommonArgs, f: F) -> Result<()> {
    match common.threads {
        None => f(),
        Some(0) => Err(Error::Config("threads must be positive".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
            pool.install(f)
        }
    }
}

fn synthetic_model(name: &str, mixture_seed: u64, effect_scale: f64) -> Result<SyntheticModel> {
    match name {
        "2d" => Ok(SyntheticModel::two_d()),
        "50d" => SyntheticModel::high_dim(mixture_seed, effect_scale),
        other => Err(Error::Config(format!(
            "unknown data model {other:?} (expected \"2d\" or \"50d\")"
        ))),
    }
}

fn parse_f64_list(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("cannot parse {what} entry {s:?}")))
        })
        .collect()
}

fn parse_usize_list(text: &str, what: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("cannot parse {what} entry {s:?}")))
        })
        .collect()
}

fn parse_propensities(flag: &Option<String>) -> Result<Option<Vec<f64>>> {
    match flag {
        None => Ok(None),
        Some(text) => Ok(Some(parse_f64_list(text, "propensities")?)),
    }
}

fn default_sidecar(data: &Path) -> PathBuf {
    let mut s = data.as_os_str().to_os_string();
    s.push(".schema");
    PathBuf::from(s)
}

fn load_dataset(
    data: &Path,
    schema: &Option<PathBuf>,
    propensities: &Option<String>,
) -> Result<Dataset> {
    let schema_path = schema.clone().unwrap_or_else(|| default_sidecar(data));
    let schema = FeatureSchema::from_sidecar_file(&schema_path)?;
    Dataset::from_csv_file(data, &schema, parse_propensities(propensities)?)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents)?;
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let model = synthetic_model(&args.model, args.mixture_seed, args.effect_scale)?;
    let dataset = model.sample(args.n, args.seed)?;

    let mut csv_bytes = Vec::new();
    dataset.write_csv(&mut csv_bytes)?;
    std::fs::write(&args.out, &csv_bytes)?;

    let mut provenance = format!(
        "ucts simulate --model {} --n {} --seed {}",
        args.model, args.n, args.seed
    );
    if args.model == "50d" {
        let _ = write!(
            provenance,
            " --effect-scale {} --mixture-seed {}",
            args.effect_scale, args.mixture_seed
        );
    }
    let sidecar = dataset.schema().to_sidecar_string(Some(&provenance));
    let sidecar_path = args
        .schema_out
        .clone()
        .unwrap_or_else(|| default_sidecar(&args.out));
    write_file(&sidecar_path, &sidecar)?;
    println!(
        "wrote {} rows to {} (schema: {})",
        dataset.n_samples(),
        args.out.display(),
        sidecar_path.display()
    );
    Ok(())
}

fn training_summary(model: &Model) -> String {
    let mut out = String::new();
    let mut depth_histogram = std::collections::BTreeMap::new();
    match model {
        Model::Uplift(forest) => {
            for (i, tree) in forest.trees.iter().enumerate() {
                let depth = tree.depth();
                let _ = writeln!(out, "tree {i} leaves {} depth {depth}", tree.n_leaves());
                *depth_histogram.entry(depth).or_insert(0usize) += 1;
            }
        }
        Model::Sma(sma) => {
            for (a, forest) in sma.forests.iter().enumerate() {
                for (i, tree) in forest.trees.iter().enumerate() {
                    let depth = tree.depth();
                    let _ = writeln!(
                        out,
                        "arm {} tree {i} leaves {} depth {depth}",
                        a + 1,
                        tree.n_leaves()
                    );
                    *depth_histogram.entry(depth).or_insert(0usize) += 1;
                }
            }
        }
    }
    let _ = writeln!(out, "depth_histogram");
    for (depth, count) in depth_histogram {
        let _ = writeln!(out, "depth {depth} trees {count}");
    }
    out
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let dataset = load_dataset(&args.data, &args.schema, &args.propensities)?;
    let model = match args.method.as_str() {
        "sma" => {
            let params = RfParams {
                n_trees: args.training.ntree,
                mtry: args.training.mtry.unwrap_or(dataset.n_features()),
                min_leaf: args.min_leaf,
                seed: args.training.seed,
            };
            Model::Sma(train_sma(&dataset, &params)?)
        }
        name => {
            let method: Method = name.parse()?;
            let config = args.training.forest_config(dataset.n_features())?;
            let forest = match method {
                Method::Ucts => train(&dataset, &config)?,
                Method::Cts => crate::baselines::train_cts(&dataset, &config)?,
            };
            Model::Uplift(forest)
        }
    };
    model.save(&args.out)?;
    let summary_path = {
        let mut s = args.out.as_os_str().to_os_string();
        s.push(".summary.txt");
        PathBuf::from(s)
    };
    write_file(&summary_path, &training_summary(&model))?;
    println!(
        "trained {} model on {} rows -> {}",
        model.method_name(),
        dataset.n_samples(),
        args.out.display()
    );
    Ok(())
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let model = Model::load(&args.model)?;
    let file = std::fs::File::open(&args.data)?;
    let rows = read_feature_rows(file, model.schema())?;

    let k = model.n_treatments();
    let mut out = String::new();
    let header: Vec<String> = (1..=k)
        .map(|t| format!("mu_{t}"))
        .chain(std::iter::once("treatment".to_string()))
        .collect();
    let _ = writeln!(out, "{}", header.join(","));
    for x in &rows {
        let mu = model.predict_mu(x)?;
        let chosen = crate::forest::argmax_treatment(&mu);
        let cells: Vec<String> = mu
            .iter()
            .map(|v| format!("{v}"))
            .chain(std::iter::once(format!("{chosen}")))
            .collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    write_file(&args.out, &out)?;
    println!("scored {} rows -> {}", rows.len(), args.out.display());
    Ok(())
}

fn report_csv(report: &PolicyValueReport) -> String {
    format!(
        "method,value,std_error,n_test\n{},{},{},{}\n",
        report.method.as_str(),
        report.value,
        report.std_error,
        report.n_test
    )
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let model = Model::load(&args.model)?;
    let report = match (&args.data, &args.oracle) {
        (Some(_), Some(_)) | (None, None) => {
            return Err(Error::Config(
                "pass exactly one of --data (IPS) or --oracle (synthetic model)".into(),
            ))
        }
        (Some(data), None) => {
            let test = load_dataset(data, &args.schema, &args.propensities)?;
            if test.n_treatments() != model.n_treatments() {
                return Err(Error::Data(format!(
                    "model has {} treatments but the test set has {}",
                    model.n_treatments(),
                    test.n_treatments()
                )));
            }
            ips_value(&|x: &[f64]| model.select_treatment(x).unwrap_or(0), &test)?
        }
        (None, Some(oracle)) => {
            let synthetic = synthetic_model(oracle, args.mixture_seed, args.effect_scale)?;
            if synthetic.schema() != *model.schema() {
                return Err(Error::Data(format!(
                    "model schema does not match the {oracle} data model"
                )));
            }
            let policy =
                |x: &[f64]| model.select_treatment(x).expect("schema-conforming draw");
            oracle_value(&policy, &synthetic, args.mc_samples, args.seed)
        }
    };
    write_file(&args.out, &report_csv(&report))?;
    println!(
        "{} value {:.6} +- {:.6} -> {}",
        report.method.as_str(),
        report.value,
        report.std_error,
        args.out.display()
    );
    Ok(())
}

fn cmd_muc(args: &MucArgs) -> Result<()> {
    let model = Model::load(&args.model)?;
    let test = load_dataset(&args.data, &args.schema, &args.propensities)?;
    let grid = parse_f64_list(&args.grid, "grid")?;
    let curve = muc_curve(&model, &test, args.control, &grid)?;
    let mut out = String::from("fraction,value,std_error,control\n");
    for p in &curve.points {
        let _ = writeln!(out, "{},{},{},{}", p.fraction, p.value, p.std_error, curve.control);
    }
    write_file(&args.out, &out)?;
    println!("wrote {} curve points -> {}", curve.points.len(), args.out.display());
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let model = synthetic_model(&args.oracle, args.mixture_seed, args.effect_scale)?;
    let sizes = parse_usize_list(&args.sizes, "sizes")?;
    if args.n_seeds < 2 {
        return Err(Error::Config("n-seeds must be at least 2".into()));
    }
    let config = args.training.forest_config(model.schema().n_features())?;
    let seeds: Vec<u64> = (0..args.n_seeds as u64)
        .map(|i| args.training.seed.wrapping_add(i))
        .collect();
    let rows = regret_sweep(&model, &sizes, &config, &seeds, args.mc_samples)?;
    let mut out = String::from("n_per_treatment,mean_value,ci_radius,n_seeds\n");
    for row in &rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            row.n_per_treatment, row.mean_value, row.ci_radius, row.n_seeds
        );
    }
    write_file(&args.out, &out)?;
    println!("wrote {} sweep rows -> {}", rows.len(), args.out.display());
    Ok(())
}
