//! Versioned text model files.
//!
//! Layout (one record per line, space separated):
//!
//! ```text
//! uctsmodel 1
//! method ucts
//! treatments 2
//! features 2
//! column x1 numeric
//! column x2 categorical A,B,C
//! seed 7
//! ntree 200
//! rho 0.5
//! min_split 80
//! n_reg 0
//! alpha 0.1
//! mtry 2
//! pi 0.05
//! trees 200
//! tree 0 nodes 3
//! node 0 internal 1 2 num 0 51.5 honest 24.1 26.0
//! node 1 leaf min_split honest 12.0 9.5
//! node 2 leaf no_split honest 37.2 40.1
//! ...
//! checksum 8a2f63d01b9e4c77
//! ```
//!
//! `method sma` files carry one `arm <t> trees <n>` section per treatment
//! with single-value leaf records (`value <v>`). Floats use Rust's shortest
//! round-trip formatting, so parsing reproduces them bit for bit. The last
//! line is an FNV-1a 64 checksum of everything before it.

use std::fmt::Write as _;
use std::path::Path;

use crate::baselines::{RegNodeKind, RegressionForest, RegressionTree, RfParams, SmaModel};
use crate::data::{ColumnKind, ColumnSpec, FeatureSchema};
use crate::error::{Error, Result};
use crate::forest::{ForestConfig, Method, ResponseModel, UpliftForest};
use crate::split::{SplitCandidate, SplitRule};
use crate::tree::{GrowthParams, LeafReason, NodeKind, TreeNode, UpliftTree};

pub const FORMAT_MAGIC: &str = "uctsmodel";
pub const FORMAT_VERSION: u32 = 1;

/// Any model the CLI can train, save and reload.
#[derive(Debug, Clone)]
pub enum Model {
    Uplift(UpliftForest),
    Sma(SmaModel),
}

impl Model {
    pub fn method_name(&self) -> &'static str {
        match self {
            Model::Uplift(f) => f.method.as_str(),
            Model::Sma(_) => "sma",
        }
    }

    pub fn serialize(&self) -> String {
        let mut body = String::new();
        let _ = writeln!(body, "{FORMAT_MAGIC} {FORMAT_VERSION}");
        let _ = writeln!(body, "method {}", self.method_name());
        match self {
            Model::Uplift(f) => write_uplift(&mut body, f),
            Model::Sma(m) => write_sma(&mut body, m),
        }
        let digest = fnv1a64(body.as_bytes());
        let _ = writeln!(body, "checksum {digest:016x}");
        body
    }

    pub fn deserialize(text: &str) -> Result<Model> {
        let body = verify_checksum(text)?;
        let mut lines = Lines::new(body);
        let mut header = lines.next_tokens()?;
        if header.len() != 2 || header[0] != FORMAT_MAGIC {
            return Err(Error::ModelFormat("not a model file".into()));
        }
        let version: u32 = parse(&header[1], lines.lineno, "format version")?;
        if version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        header = lines.next_tokens()?;
        if header.len() != 2 || header[0] != "method" {
            return Err(Error::ModelFormat("missing method line".into()));
        }
        match header[1].as_str() {
            "ucts" => read_uplift(&mut lines, Method::Ucts).map(Model::Uplift),
            "cts" => read_uplift(&mut lines, Method::Cts).map(Model::Uplift),
            "sma" => read_sma(&mut lines).map(Model::Sma),
            other => Err(Error::ModelFormat(format!("unknown method {other:?}"))),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.serialize())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Model> {
        let text = std::fs::read_to_string(path)?;
        Model::deserialize(&text)
    }
}

impl ResponseModel for Model {
    fn n_treatments(&self) -> usize {
        match self {
            Model::Uplift(f) => f.n_treatments(),
            Model::Sma(m) => m.n_treatments(),
        }
    }

    fn schema(&self) -> &FeatureSchema {
        match self {
            Model::Uplift(f) => f.schema(),
            Model::Sma(m) => m.schema(),
        }
    }

    fn predict_mu(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Model::Uplift(f) => f.predict_mu(x),
            Model::Sma(m) => m.predict_mu(x),
        }
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Split off and verify the trailing checksum line; returns the body.
fn verify_checksum(text: &str) -> Result<&str> {
    if text.is_empty() {
        return Err(Error::ModelFormat("empty model stream".into()));
    }
    let trimmed = text.trim_end_matches('\n');
    let start = trimmed.rfind('\n').map(|i| i + 1).unwrap_or(0);
    let last = &trimmed[start..];
    let expected = last
        .strip_prefix("checksum ")
        .ok_or_else(|| Error::ModelFormat("truncated stream: checksum line missing".into()))?;
    let expected =
        u64::from_str_radix(expected.trim(), 16).map_err(|_| {
            Error::ModelFormat("truncated stream: malformed checksum line".into())
        })?;
    let body = &text[..start];
    if fnv1a64(body.as_bytes()) != expected {
        return Err(Error::ModelFormat("checksum mismatch: file is corrupted".into()));
    }
    Ok(body)
}

// ---------------------------------------------------------------------------
// writing

fn write_schema(out: &mut String, schema: &FeatureSchema, k: usize) {
    let _ = writeln!(out, "treatments {k}");
    let _ = writeln!(out, "features {}", schema.n_features());
    for col in schema.columns() {
        match &col.kind {
            ColumnKind::Numeric => {
                let _ = writeln!(out, "column {} numeric", col.name);
            }
            ColumnKind::Categorical { levels } => {
                let _ = writeln!(out, "column {} categorical {}", col.name, levels.join(","));
            }
        }
    }
}

fn write_uplift(out: &mut String, forest: &UpliftForest) {
    write_schema(out, &forest.schema, forest.n_treatments);
    let c = &forest.config;
    let _ = writeln!(out, "seed {}", c.seed);
    let _ = writeln!(out, "ntree {}", c.ntree);
    let _ = writeln!(out, "rho {}", c.rho);
    let _ = writeln!(out, "min_split {}", c.growth.min_split);
    let _ = writeln!(out, "n_reg {}", c.growth.n_reg);
    let _ = writeln!(out, "alpha {}", c.growth.alpha);
    let _ = writeln!(out, "mtry {}", c.growth.mtry);
    let _ = writeln!(out, "pi {}", c.growth.pi);
    let _ = writeln!(out, "trees {}", forest.trees.len());
    for (i, tree) in forest.trees.iter().enumerate() {
        let _ = writeln!(out, "tree {i} nodes {}", tree.n_nodes());
        for (id, node) in tree.nodes().iter().enumerate() {
            match &node.kind {
                NodeKind::Internal { split, left, right } => {
                    let _ = write!(out, "node {id} internal {left} {right} ");
                    write_rule(out, split);
                }
                NodeKind::Leaf { reason } => {
                    let token = match reason {
                        LeafReason::BelowMinSplit => "min_split",
                        LeafReason::NoRegularSplit => "no_split",
                    };
                    let _ = write!(out, "node {id} leaf {token}");
                }
            }
            let _ = write!(out, " honest");
            for v in &node.honest_estimates {
                let _ = write!(out, " {v}");
            }
            let _ = writeln!(out);
        }
    }
}

fn write_rule(out: &mut String, split: &SplitCandidate) {
    match &split.rule {
        SplitRule::Numeric { threshold } => {
            let _ = write!(out, "num {} {threshold}", split.coordinate);
        }
        SplitRule::Categorical { left_levels } => {
            let levels: Vec<String> = left_levels.iter().map(|l| l.to_string()).collect();
            let _ = write!(out, "cat {} {}", split.coordinate, levels.join(","));
        }
    }
}

fn write_sma(out: &mut String, model: &SmaModel) {
    write_schema(out, model.schema(), model.n_treatments());
    let p = &model.params;
    let _ = writeln!(out, "seed {}", p.seed);
    let _ = writeln!(out, "trees_per_arm {}", p.n_trees);
    let _ = writeln!(out, "mtry {}", p.mtry);
    let _ = writeln!(out, "min_leaf {}", p.min_leaf);
    for (idx, forest) in model.forests.iter().enumerate() {
        let _ = writeln!(out, "arm {} trees {}", idx + 1, forest.trees.len());
        for (i, tree) in forest.trees.iter().enumerate() {
            let _ = writeln!(out, "tree {i} nodes {}", tree.nodes.len());
            for (id, node) in tree.nodes.iter().enumerate() {
                match &node.kind {
                    RegNodeKind::Internal { split, left, right } => {
                        let _ = write!(out, "node {id} internal {left} {right} ");
                        write_rule(out, split);
                    }
                    RegNodeKind::Leaf => {
                        let _ = write!(out, "node {id} leaf mean");
                    }
                }
                let _ = writeln!(out, " value {}", node.value);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// reading

struct Lines<'a> {
    iter: std::str::Lines<'a>,
    lineno: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            iter: text.lines(),
            lineno: 0,
        }
    }

    fn next_tokens(&mut self) -> Result<Vec<String>> {
        let line = self.iter.next().ok_or_else(|| {
            Error::ModelFormat(format!("truncated stream after line {}", self.lineno))
        })?;
        self.lineno += 1;
        Ok(line.split(' ').map(|s| s.to_string()).collect())
    }

    fn expect(&mut self, key: &str, n_values: usize) -> Result<Vec<String>> {
        let tokens = self.next_tokens()?;
        if tokens.len() != n_values + 1 || tokens[0] != key {
            return Err(Error::ModelFormat(format!(
                "line {}: expected `{key}` with {n_values} value(s), got {:?}",
                self.lineno,
                tokens.join(" ")
            )));
        }
        Ok(tokens[1..].to_vec())
    }
}

fn parse<T: std::str::FromStr>(token: &str, lineno: usize, what: &str) -> Result<T> {
    token
        .parse()
        .map_err(|_| Error::ModelFormat(format!("line {lineno}: cannot parse {what} from {token:?}")))
}

fn read_schema(lines: &mut Lines) -> Result<(FeatureSchema, usize)> {
    let k: usize = parse(&lines.expect("treatments", 1)?[0], lines.lineno, "treatment count")?;
    if k == 0 {
        return Err(Error::ModelFormat("treatment count must be positive".into()));
    }
    let d: usize = parse(&lines.expect("features", 1)?[0], lines.lineno, "feature count")?;
    let mut columns = Vec::with_capacity(d);
    for _ in 0..d {
        let tokens = lines.next_tokens()?;
        if tokens.len() < 3 || tokens[0] != "column" {
            return Err(Error::ModelFormat(format!(
                "line {}: expected a column record",
                lines.lineno
            )));
        }
        let kind = match tokens[2].as_str() {
            "numeric" => ColumnKind::Numeric,
            "categorical" => {
                if tokens.len() != 4 {
                    return Err(Error::ModelFormat(format!(
                        "line {}: categorical column needs a level list",
                        lines.lineno
                    )));
                }
                ColumnKind::Categorical {
                    levels: tokens[3].split(',').map(|s| s.to_string()).collect(),
                }
            }
            other => {
                return Err(Error::ModelFormat(format!(
                    "line {}: unknown column kind {other:?}",
                    lines.lineno
                )))
            }
        };
        columns.push(ColumnSpec {
            name: tokens[1].clone(),
            kind,
        });
    }
    let schema = FeatureSchema::new(columns)
        .map_err(|e| Error::ModelFormat(format!("invalid schema in model file: {e}")))?;
    Ok((schema, k))
}

fn read_rule(tokens: &[String], lineno: usize, schema: &FeatureSchema) -> Result<SplitCandidate> {
    if tokens.len() != 3 {
        return Err(Error::ModelFormat(format!(
            "line {lineno}: malformed split rule"
        )));
    }
    let coordinate: usize = parse(&tokens[1], lineno, "coordinate")?;
    if coordinate >= schema.n_features() {
        return Err(Error::ModelFormat(format!(
            "line {lineno}: coordinate {coordinate} out of range"
        )));
    }
    let rule = match tokens[0].as_str() {
        "num" => {
            let threshold: f64 = parse(&tokens[2], lineno, "threshold")?;
            if !threshold.is_finite() {
                return Err(Error::ModelFormat(format!(
                    "line {lineno}: non-finite threshold"
                )));
            }
            SplitRule::Numeric { threshold }
        }
        "cat" => {
            let left_levels: Vec<u32> = tokens[2]
                .split(',')
                .map(|s| parse::<u32>(s, lineno, "level code"))
                .collect::<Result<_>>()?;
            SplitRule::Categorical { left_levels }
        }
        other => {
            return Err(Error::ModelFormat(format!(
                "line {lineno}: unknown rule kind {other:?}"
            )))
        }
    };
    // counts are growth-time metadata; they are not persisted
    Ok(SplitCandidate {
        coordinate,
        rule,
        left_count: 0,
        right_count: 0,
    })
}

fn read_estimates(tokens: &[String], lineno: usize, k: usize, marker: &str) -> Result<Vec<f64>> {
    if tokens.len() != k + 1 || tokens[0] != marker {
        return Err(Error::ModelFormat(format!(
            "line {lineno}: expected `{marker}` followed by {k} value(s)"
        )));
    }
    let values: Vec<f64> = tokens[1..]
        .iter()
        .map(|t| parse::<f64>(t, lineno, "estimate"))
        .collect::<Result<_>>()?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::ModelFormat(format!(
            "line {lineno}: non-finite estimate"
        )));
    }
    Ok(values)
}

fn read_tree_header(lines: &mut Lines, index: usize) -> Result<usize> {
    let tokens = lines.next_tokens()?;
    if tokens.len() != 4 || tokens[0] != "tree" || tokens[2] != "nodes" {
        return Err(Error::ModelFormat(format!(
            "line {}: expected a tree header",
            lines.lineno
        )));
    }
    let i: usize = parse(&tokens[1], lines.lineno, "tree index")?;
    if i != index {
        return Err(Error::ModelFormat(format!(
            "line {}: tree index {i} out of order (expected {index})",
            lines.lineno
        )));
    }
    let n_nodes: usize = parse(&tokens[3], lines.lineno, "node count")?;
    if n_nodes == 0 {
        return Err(Error::ModelFormat(format!(
            "line {}: tree with zero nodes",
            lines.lineno
        )));
    }
    Ok(n_nodes)
}

/// Common node-line prefix: `node <id> internal <l> <r> <rule...>` or
/// `node <id> leaf <tag>`; returns the remaining tokens after the prefix.
enum NodeShape {
    Internal {
        left: usize,
        right: usize,
        rule_tokens: Vec<String>,
    },
    Leaf {
        tag: String,
    },
}

fn read_node_prefix(
    lines: &mut Lines,
    id: usize,
    n_nodes: usize,
    trailer_len: usize,
) -> Result<(NodeShape, Vec<String>)> {
    let tokens = lines.next_tokens()?;
    let lineno = lines.lineno;
    if tokens.len() < 4 || tokens[0] != "node" {
        return Err(Error::ModelFormat(format!(
            "line {lineno}: expected a node record"
        )));
    }
    let got_id: usize = parse(&tokens[1], lineno, "node id")?;
    if got_id != id {
        return Err(Error::ModelFormat(format!(
            "line {lineno}: node id {got_id} out of order (expected {id})"
        )));
    }
    match tokens[2].as_str() {
        "internal" => {
            if tokens.len() < 5 + 3 + trailer_len {
                return Err(Error::ModelFormat(format!(
                    "line {lineno}: internal node record too short"
                )));
            }
            let left: usize = parse(&tokens[3], lineno, "left child")?;
            let right: usize = parse(&tokens[4], lineno, "right child")?;
            for &child in [left, right].iter() {
                if child <= id || child >= n_nodes {
                    return Err(Error::ModelFormat(format!(
                        "line {lineno}: child index {child} invalid for node {id} of {n_nodes}"
                    )));
                }
            }
            let rule_tokens = tokens[5..tokens.len() - trailer_len].to_vec();
            let trailer = tokens[tokens.len() - trailer_len..].to_vec();
            Ok((
                NodeShape::Internal {
                    left,
                    right,
                    rule_tokens,
                },
                trailer,
            ))
        }
        "leaf" => {
            if tokens.len() != 4 + trailer_len {
                return Err(Error::ModelFormat(format!(
                    "line {lineno}: leaf node record malformed"
                )));
            }
            Ok((
                NodeShape::Leaf {
                    tag: tokens[3].clone(),
                },
                tokens[4..].to_vec(),
            ))
        }
        other => Err(Error::ModelFormat(format!(
            "line {lineno}: unknown node kind {other:?}"
        ))),
    }
}

fn read_uplift(lines: &mut Lines, method: Method) -> Result<UpliftForest> {
    let (schema, k) = read_schema(lines)?;
    let seed: u64 = parse(&lines.expect("seed", 1)?[0], lines.lineno, "seed")?;
    let ntree: usize = parse(&lines.expect("ntree", 1)?[0], lines.lineno, "ntree")?;
    let rho: f64 = parse(&lines.expect("rho", 1)?[0], lines.lineno, "rho")?;
    let min_split: usize = parse(&lines.expect("min_split", 1)?[0], lines.lineno, "min_split")?;
    let n_reg: f64 = parse(&lines.expect("n_reg", 1)?[0], lines.lineno, "n_reg")?;
    let alpha: f64 = parse(&lines.expect("alpha", 1)?[0], lines.lineno, "alpha")?;
    let mtry: usize = parse(&lines.expect("mtry", 1)?[0], lines.lineno, "mtry")?;
    let pi: f64 = parse(&lines.expect("pi", 1)?[0], lines.lineno, "pi")?;
    let tree_count: usize = parse(&lines.expect("trees", 1)?[0], lines.lineno, "tree count")?;

    let mut trees = Vec::with_capacity(tree_count);
    for index in 0..tree_count {
        let n_nodes = read_tree_header(lines, index)?;
        let mut nodes = Vec::with_capacity(n_nodes);
        for id in 0..n_nodes {
            let (shape, trailer) = read_node_prefix(lines, id, n_nodes, k + 1)?;
            let honest = read_estimates(&trailer, lines.lineno, k, "honest")?;
            let kind = match shape {
                NodeShape::Internal {
                    left,
                    right,
                    rule_tokens,
                } => NodeKind::Internal {
                    split: read_rule(&rule_tokens, lines.lineno, &schema)?,
                    left,
                    right,
                },
                NodeShape::Leaf { tag } => NodeKind::Leaf {
                    reason: match tag.as_str() {
                        "min_split" => LeafReason::BelowMinSplit,
                        "no_split" => LeafReason::NoRegularSplit,
                        other => {
                            return Err(Error::ModelFormat(format!(
                                "line {}: unknown leaf tag {other:?}",
                                lines.lineno
                            )))
                        }
                    },
                },
            };
            nodes.push(TreeNode {
                kind,
                approx_estimates: Vec::new(),
                honest_estimates: honest,
            });
        }
        trees.push(UpliftTree { nodes });
    }

    let config = ForestConfig {
        ntree,
        rho,
        growth: GrowthParams {
            min_split,
            n_reg,
            alpha,
            mtry,
            pi,
        },
        seed,
    };
    Ok(UpliftForest {
        method,
        config,
        schema,
        n_treatments: k,
        trees,
    })
}

fn read_sma(lines: &mut Lines) -> Result<SmaModel> {
    let (schema, k) = read_schema(lines)?;
    let seed: u64 = parse(&lines.expect("seed", 1)?[0], lines.lineno, "seed")?;
    let n_trees: usize = parse(
        &lines.expect("trees_per_arm", 1)?[0],
        lines.lineno,
        "trees_per_arm",
    )?;
    let mtry: usize = parse(&lines.expect("mtry", 1)?[0], lines.lineno, "mtry")?;
    let min_leaf: usize = parse(&lines.expect("min_leaf", 1)?[0], lines.lineno, "min_leaf")?;

    let mut forests = Vec::with_capacity(k);
    for arm in 1..=k {
        let tokens = lines.next_tokens()?;
        if tokens.len() != 4 || tokens[0] != "arm" || tokens[2] != "trees" {
            return Err(Error::ModelFormat(format!(
                "line {}: expected an arm header",
                lines.lineno
            )));
        }
        let got: usize = parse(&tokens[1], lines.lineno, "arm id")?;
        if got != arm {
            return Err(Error::ModelFormat(format!(
                "line {}: arm {got} out of order (expected {arm})",
                lines.lineno
            )));
        }
        let tree_count: usize = parse(&tokens[3], lines.lineno, "tree count")?;
        let mut trees = Vec::with_capacity(tree_count);
        for index in 0..tree_count {
            let n_nodes = read_tree_header(lines, index)?;
            let mut nodes = Vec::with_capacity(n_nodes);
            for id in 0..n_nodes {
                let (shape, trailer) = read_node_prefix(lines, id, n_nodes, 2)?;
                let value = read_estimates(&trailer, lines.lineno, 1, "value")?[0];
                let kind = match shape {
                    NodeShape::Internal {
                        left,
                        right,
                        rule_tokens,
                    } => RegNodeKind::Internal {
                        split: read_rule(&rule_tokens, lines.lineno, &schema)?,
                        left,
                        right,
                    },
                    NodeShape::Leaf { tag } => {
                        if tag != "mean" {
                            return Err(Error::ModelFormat(format!(
                                "line {}: unknown leaf tag {tag:?}",
                                lines.lineno
                            )));
                        }
                        RegNodeKind::Leaf
                    }
                };
                nodes.push(crate::baselines::RegNode { kind, value });
            }
            trees.push(RegressionTree { nodes });
        }
        forests.push(RegressionForest { trees });
    }

    SmaModel::from_parts(
        schema,
        RfParams {
            n_trees,
            mtry,
            min_leaf,
            seed,
        },
        forests,
    )
}
