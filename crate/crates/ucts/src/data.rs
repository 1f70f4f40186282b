//! Datasets, schemas, treatment encoding, and the stratified split into
//! approximation and estimation sets.
//!
//! A [`Dataset`] is a column-major store of features (numeric values or dense
//! categorical codes), one treatment id per row in `1..=K`, one real response
//! per row, and the experiment's treatment assignment probabilities. It is
//! immutable after construction, so any number of workers may read it
//! concurrently.

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

/// Reserved CSV column carrying the treatment id.
pub const TREATMENT_COLUMN: &str = "treatment";
/// Reserved CSV column carrying the response.
pub const RESPONSE_COLUMN: &str = "response";

/// Feature column kind: real-valued or categorical with named levels.
///
/// Categorical values are stored as dense integer codes in
/// `0..levels.len()`, where code `i` means `levels[i]`.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnKind {
    Numeric,
    Categorical { levels: Vec<String> },
}

impl ColumnKind {
    pub fn is_categorical(&self) -> bool {
        matches!(self, ColumnKind::Categorical { .. })
    }

    /// Number of declared levels; 0 for numeric columns.
    pub fn cardinality(&self) -> usize {
        match self {
            ColumnKind::Numeric => 0,
            ColumnKind::Categorical { levels } => levels.len(),
        }
    }
}

/// One feature column: a name plus its kind.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

impl ColumnSpec {
    pub fn numeric(name: impl Into<String>) -> Self {
        ColumnSpec {
            name: name.into(),
            kind: ColumnKind::Numeric,
        }
    }

    pub fn categorical(name: impl Into<String>, levels: &[&str]) -> Self {
        ColumnSpec {
            name: name.into(),
            kind: ColumnKind::Categorical {
                levels: levels.iter().map(|s| s.to_string()).collect(),
            },
        }
    }
}

/// Ordered list of feature columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSchema {
    columns: Vec<ColumnSpec>,
}

fn valid_token(s: &str) -> bool {
    !s.is_empty() && !s.contains([',', '=', ' ', '\t', '\n', '\r'])
}

impl FeatureSchema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Config("schema needs at least one feature column".into()));
        }
        for (i, col) in columns.iter().enumerate() {
            if !valid_token(&col.name) {
                return Err(Error::Config(format!(
                    "invalid column name {:?}: must be non-empty without spaces, commas or '='",
                    col.name
                )));
            }
            if col.name == TREATMENT_COLUMN || col.name == RESPONSE_COLUMN {
                return Err(Error::Config(format!(
                    "column name {:?} is reserved",
                    col.name
                )));
            }
            if columns[..i].iter().any(|c| c.name == col.name) {
                return Err(Error::Config(format!("duplicate column name {:?}", col.name)));
            }
            if let ColumnKind::Categorical { levels } = &col.kind {
                if levels.is_empty() {
                    return Err(Error::Config(format!(
                        "categorical column {:?} declares no levels",
                        col.name
                    )));
                }
                for (k, level) in levels.iter().enumerate() {
                    if !valid_token(level) {
                        return Err(Error::Config(format!(
                            "invalid level {:?} in column {:?}",
                            level, col.name
                        )));
                    }
                    if levels[..k].contains(level) {
                        return Err(Error::Config(format!(
                            "duplicate level {:?} in column {:?}",
                            level, col.name
                        )));
                    }
                }
            }
        }
        Ok(FeatureSchema { columns })
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn column(&self, j: usize) -> &ColumnSpec {
        &self.columns[j]
    }

    /// Check that a feature vector conforms to this schema: right length,
    /// finite numerics, categorical codes within the declared cardinality.
    pub fn validate_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.columns.len() {
            return Err(Error::Data(format!(
                "feature vector has {} values, schema has {} columns",
                x.len(),
                self.columns.len()
            )));
        }
        for (j, (&value, col)) in x.iter().zip(&self.columns).enumerate() {
            match &col.kind {
                ColumnKind::Numeric => {
                    if !value.is_finite() {
                        return Err(Error::Data(format!(
                            "non-finite value in numeric column {:?} (index {j})",
                            col.name
                        )));
                    }
                }
                ColumnKind::Categorical { levels } => {
                    if value.fract() != 0.0 || value < 0.0 || (value as usize) >= levels.len() {
                        return Err(Error::Data(format!(
                            "categorical code {value} outside schema for column {:?} (cardinality {})",
                            col.name,
                            levels.len()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Parse the plain-text sidecar format: one `name=numeric` or
    /// `name=categorical:v1,v2,...` line per column. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn parse_sidecar(text: &str) -> Result<Self> {
        let mut columns = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, kind) = line.split_once('=').ok_or_else(|| {
                Error::Data(format!("schema line {}: expected name=kind", lineno + 1))
            })?;
            let kind = if kind == "numeric" {
                ColumnKind::Numeric
            } else if let Some(levels) = kind.strip_prefix("categorical:") {
                ColumnKind::Categorical {
                    levels: levels.split(',').map(|s| s.trim().to_string()).collect(),
                }
            } else {
                return Err(Error::Data(format!(
                    "schema line {}: unknown kind {:?}",
                    lineno + 1,
                    kind
                )));
            };
            columns.push(ColumnSpec {
                name: name.trim().to_string(),
                kind,
            });
        }
        FeatureSchema::new(columns)
    }

    pub fn from_sidecar_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_sidecar(&text)
    }

    /// Render the sidecar text, optionally with a leading `#` comment line.
    pub fn to_sidecar_string(&self, comment: Option<&str>) -> String {
        let mut out = String::new();
        if let Some(c) = comment {
            let _ = writeln!(out, "# {c}");
        }
        for col in &self.columns {
            match &col.kind {
                ColumnKind::Numeric => {
                    let _ = writeln!(out, "{}=numeric", col.name);
                }
                ColumnKind::Categorical { levels } => {
                    let _ = writeln!(out, "{}=categorical:{}", col.name, levels.join(","));
                }
            }
        }
        out
    }
}

/// Randomized-experiment dataset: features, treatments, responses,
/// assignment propensities.
#[derive(Debug, Clone)]
pub struct Dataset {
    schema: FeatureSchema,
    /// Column-major features: `columns[j][i]` is feature j of row i.
    columns: Vec<Vec<f64>>,
    /// Treatment ids, each in `1..=K`.
    treatments: Vec<u32>,
    responses: Vec<f64>,
    /// Assignment probability per treatment; strictly positive, sums to 1.
    propensities: Vec<f64>,
}

impl Dataset {
    /// Validating constructor. `propensities = None` defaults to the
    /// empirical treatment frequencies (requires every id `1..=max` present).
    pub fn new(
        schema: FeatureSchema,
        columns: Vec<Vec<f64>>,
        treatments: Vec<u32>,
        responses: Vec<f64>,
        propensities: Option<Vec<f64>>,
    ) -> Result<Self> {
        if columns.len() != schema.n_features() {
            return Err(Error::Data(format!(
                "{} feature columns provided, schema declares {}",
                columns.len(),
                schema.n_features()
            )));
        }
        let n = treatments.len();
        if n == 0 {
            return Err(Error::Data("empty table".into()));
        }
        if responses.len() != n || columns.iter().any(|c| c.len() != n) {
            return Err(Error::Data(
                "features, treatments and responses must all have the same length".into(),
            ));
        }
        for (i, &y) in responses.iter().enumerate() {
            if !y.is_finite() {
                return Err(Error::Data(format!("non-finite response at row {i}")));
            }
        }
        for (j, col) in columns.iter().enumerate() {
            let spec = schema.column(j);
            match &spec.kind {
                ColumnKind::Numeric => {
                    if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                        return Err(Error::Data(format!(
                            "non-finite value in numeric column {:?} at row {i}",
                            spec.name
                        )));
                    }
                }
                ColumnKind::Categorical { levels } => {
                    for (i, &v) in col.iter().enumerate() {
                        if v.fract() != 0.0 || v < 0.0 || (v as usize) >= levels.len() {
                            return Err(Error::Data(format!(
                                "categorical code {v} outside declared levels of column {:?} at row {i}",
                                spec.name
                            )));
                        }
                    }
                }
            }
        }

        let propensities = match propensities {
            Some(p) => p,
            None => {
                let k = *treatments.iter().max().unwrap() as usize;
                let mut counts = vec![0usize; k];
                for &t in &treatments {
                    if t == 0 {
                        return Err(Error::Data("treatment id 0; ids must start at 1".into()));
                    }
                    counts[(t - 1) as usize] += 1;
                }
                if let Some(missing) = counts.iter().position(|&c| c == 0) {
                    return Err(Error::Data(format!(
                        "treatment ids are not dense: id {} never occurs, so empirical \
                         propensities are undefined; pass propensities explicitly",
                        missing + 1
                    )));
                }
                counts.iter().map(|&c| c as f64 / n as f64).collect()
            }
        };
        let k = propensities.len();
        if k == 0 {
            return Err(Error::Data("propensities list is empty".into()));
        }
        if propensities.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::Data("propensities must be strictly positive".into()));
        }
        let total: f64 = propensities.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Data(format!(
                "propensities sum to {total}, expected 1 within 1e-9"
            )));
        }
        for (i, &t) in treatments.iter().enumerate() {
            if t == 0 || t as usize > k {
                return Err(Error::Data(format!(
                    "unknown treatment id {t} at row {i}: propensities declare {k} treatments"
                )));
            }
        }

        Ok(Dataset {
            schema,
            columns,
            treatments,
            responses,
            propensities,
        })
    }

    /// Parse and validate a CSV table (header row required). Feature columns
    /// are matched to the schema by name; `treatment` and `response` columns
    /// are mandatory. Categorical cells hold level names.
    pub fn from_csv_reader<R: Read>(
        reader: R,
        schema: &FeatureSchema,
        propensities: Option<Vec<f64>>,
    ) -> Result<Self> {
        let mut csv = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(reader);
        let headers = csv.headers()?.clone();
        let find = |name: &str| headers.iter().position(|h| h == name);

        let mut feature_idx = Vec::with_capacity(schema.n_features());
        for col in schema.columns() {
            let idx = find(&col.name).ok_or_else(|| {
                Error::Data(format!("CSV is missing feature column {:?}", col.name))
            })?;
            feature_idx.push(idx);
        }
        let t_idx = find(TREATMENT_COLUMN)
            .ok_or_else(|| Error::Data("CSV is missing the treatment column".into()))?;
        let y_idx = find(RESPONSE_COLUMN)
            .ok_or_else(|| Error::Data("CSV is missing the response column".into()))?;

        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); schema.n_features()];
        let mut treatments = Vec::new();
        let mut responses = Vec::new();
        for (row, record) in csv.records().enumerate() {
            let record = record?;
            for (j, col) in schema.columns().iter().enumerate() {
                let cell = record.get(feature_idx[j]).unwrap_or("");
                let value = match &col.kind {
                    ColumnKind::Numeric => cell.parse::<f64>().map_err(|_| {
                        Error::Data(format!(
                            "row {row}: cannot parse {cell:?} as a number in column {:?}",
                            col.name
                        ))
                    })?,
                    ColumnKind::Categorical { levels } => {
                        levels.iter().position(|l| l == cell).ok_or_else(|| {
                            Error::Data(format!(
                                "row {row}: unknown categorical level {cell:?} in column {:?}",
                                col.name
                            ))
                        })? as f64
                    }
                };
                columns[j].push(value);
            }
            let t_cell = record.get(t_idx).unwrap_or("");
            let t = t_cell.parse::<u32>().map_err(|_| {
                Error::Data(format!("row {row}: cannot parse treatment id {t_cell:?}"))
            })?;
            treatments.push(t);
            let y_cell = record.get(y_idx).unwrap_or("");
            let y = y_cell.parse::<f64>().map_err(|_| {
                Error::Data(format!("row {row}: cannot parse response {y_cell:?}"))
            })?;
            responses.push(y);
        }

        Dataset::new(schema.clone(), columns, treatments, responses, propensities)
    }

    pub fn from_csv_str(
        text: &str,
        schema: &FeatureSchema,
        propensities: Option<Vec<f64>>,
    ) -> Result<Self> {
        Self::from_csv_reader(text.as_bytes(), schema, propensities)
    }

    pub fn from_csv_file(
        path: impl AsRef<Path>,
        schema: &FeatureSchema,
        propensities: Option<Vec<f64>>,
    ) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file, schema, propensities)
    }

    /// Write the dataset as CSV (feature columns, then treatment, response).
    /// Categorical codes are written back as their level names.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.schema.columns().iter().map(|c| c.name.as_str()).collect();
        header.push(TREATMENT_COLUMN);
        header.push(RESPONSE_COLUMN);
        out.write_record(&header)?;
        for i in 0..self.n_samples() {
            let mut record: Vec<String> = Vec::with_capacity(header.len());
            for (j, col) in self.schema.columns().iter().enumerate() {
                let v = self.columns[j][i];
                match &col.kind {
                    ColumnKind::Numeric => record.push(format!("{v}")),
                    ColumnKind::Categorical { levels } => {
                        record.push(levels[v as usize].clone())
                    }
                }
            }
            record.push(format!("{}", self.treatments[i]));
            record.push(format!("{}", self.responses[i]));
            out.write_record(&record)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn n_samples(&self) -> usize {
        self.treatments.len()
    }

    pub fn n_features(&self) -> usize {
        self.schema.n_features()
    }

    /// Number of treatments K.
    pub fn n_treatments(&self) -> usize {
        self.propensities.len()
    }

    pub fn feature(&self, row: usize, col: usize) -> f64 {
        self.columns[col][row]
    }

    pub fn column_values(&self, col: usize) -> &[f64] {
        &self.columns[col]
    }

    /// Treatment id of a row, in `1..=K`.
    pub fn treatment(&self, row: usize) -> u32 {
        self.treatments[row]
    }

    /// Treatment id as a 0-based index.
    pub fn treatment_index(&self, row: usize) -> usize {
        (self.treatments[row] - 1) as usize
    }

    pub fn response(&self, row: usize) -> f64 {
        self.responses[row]
    }

    pub fn propensities(&self) -> &[f64] {
        &self.propensities
    }

    /// Copy of row `i`'s feature vector.
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    /// Per-treatment sample counts, indexed by treatment - 1.
    pub fn treatment_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_treatments()];
        for &t in &self.treatments {
            counts[(t - 1) as usize] += 1;
        }
        counts
    }
}

/// Read feature rows only (no treatment/response needed), e.g. for scoring
/// new subjects. Columns are matched by name; extra columns are ignored.
/// May be empty.
pub fn read_feature_rows<R: Read>(reader: R, schema: &FeatureSchema) -> Result<Vec<Vec<f64>>> {
    let mut csv = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = csv.headers()?.clone();
    let mut feature_idx = Vec::with_capacity(schema.n_features());
    for col in schema.columns() {
        let idx = headers
            .iter()
            .position(|h| h == col.name)
            .ok_or_else(|| Error::Data(format!("CSV is missing feature column {:?}", col.name)))?;
        feature_idx.push(idx);
    }
    let mut rows = Vec::new();
    for (row, record) in csv.records().enumerate() {
        let record = record?;
        let mut x = Vec::with_capacity(schema.n_features());
        for (j, col) in schema.columns().iter().enumerate() {
            let cell = record.get(feature_idx[j]).unwrap_or("");
            let value = match &col.kind {
                ColumnKind::Numeric => cell.parse::<f64>().map_err(|_| {
                    Error::Data(format!(
                        "row {row}: cannot parse {cell:?} as a number in column {:?}",
                        col.name
                    ))
                })?,
                ColumnKind::Categorical { levels } => {
                    levels.iter().position(|l| l == cell).ok_or_else(|| {
                        Error::Data(format!(
                            "row {row}: unknown categorical level {cell:?} in column {:?}",
                            col.name
                        ))
                    })? as f64
                }
            };
            x.push(value);
        }
        schema.validate_point(&x)?;
        rows.push(x);
    }
    Ok(rows)
}

/// Disjoint index partition into the approximation set (used to choose tree
/// structure) and the estimation set (used for honest leaf estimates).
#[derive(Debug, Clone)]
pub struct DataSplit {
    pub approximation: Vec<usize>,
    pub estimation: Vec<usize>,
}

/// Round half away from zero; for the non-negative inputs used here this is
/// round-half-up.
fn round_half_up(x: f64) -> usize {
    x.round() as usize
}

/// Split the dataset by treatment: for each treatment t with n_t samples,
/// `round(rho * n_t)` uniformly chosen rows (clamped so both sides keep at
/// least one) go to the approximation set, the rest to the estimation set.
/// Deterministic for a fixed seed.
pub fn stratified_split(data: &Dataset, rho: f64, seed: u64) -> Result<DataSplit> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Config(format!("rho must be in (0, 1), got {rho}")));
    }
    let mut rng = rng::from_seed(seed);
    let mut approximation = Vec::new();
    let mut estimation = Vec::new();
    for t in 1..=data.n_treatments() as u32 {
        let mut rows: Vec<usize> = (0..data.n_samples())
            .filter(|&i| data.treatment(i) == t)
            .collect();
        let n_t = rows.len();
        if n_t < 2 {
            return Err(Error::Data(format!(
                "treatment {t} has {n_t} samples; need at least 2 to populate both sets"
            )));
        }
        let take = round_half_up(rho * n_t as f64).clamp(1, n_t - 1);
        // Partial Fisher-Yates: the first `take` slots become the draw.
        for i in 0..take {
            let j = rng.random_range(i..n_t);
            rows.swap(i, j);
        }
        approximation.extend_from_slice(&rows[..take]);
        estimation.extend_from_slice(&rows[take..]);
    }
    approximation.sort_unstable();
    estimation.sort_unstable();
    Ok(DataSplit {
        approximation,
        estimation,
    })
}
