//! Tabular CSV ingestion, preprocessing, splits and class-balanced batches.
//!
//! Preprocessing follows a fixed order: categorical tokens become consecutive
//! integer codes (first appearance in the training file), missing cells are
//! set to `0.0`, and then every feature, codes included, is standardized as
//! `(x - mean) / (2 * std)` with statistics from the training rows only.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::BinaryLabel;
use crate::tensor::Matrix;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    /// Tokens in `positive` map to `+1`. With a non-empty `negative` list only
    /// those tokens map to `-1` and anything else is an error; otherwise every
    /// other non-empty token is negative.
    Label {
        positive: Vec<String>,
        #[serde(default)]
        negative: Vec<String>,
    },
    /// Present in the file but not used.
    Ignore,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

impl ColumnSpec {
    pub fn numeric(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Numeric,
        }
    }

    pub fn categorical(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Categorical,
        }
    }

    pub fn label(name: impl Into<String>, positive: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Label {
                positive: vec![positive.into()],
                negative: Vec::new(),
            },
        }
    }
}

/// Ordered column roles of a CSV file.
///
/// On disk this is TOML with one `[[column]]` table per column:
///
/// ```toml
/// [[column]]
/// name = "age"
/// kind = "numeric"
///
/// [[column]]
/// name = "income"
/// kind = "label"
/// positive = [">50K", ">50K."]
/// ```
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    #[serde(rename = "column")]
    columns: Vec<ColumnSpec>,
}

impl Schema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self> {
        let labels = columns
            .iter()
            .filter(|c| matches!(c.kind, ColumnKind::Label { .. }))
            .count();
        if labels != 1 {
            return Err(Error::Schema(format!(
                "exactly one label column required, found {labels}"
            )));
        }
        let mut seen = HashMap::new();
        for c in &columns {
            if seen.insert(c.name.as_str(), ()).is_some() {
                return Err(Error::Schema(format!("duplicate column {:?}", c.name)));
            }
            if let ColumnKind::Label { positive, .. } = &c.kind {
                if positive.is_empty() {
                    return Err(Error::Schema(format!(
                        "label column {:?} has no positive token",
                        c.name
                    )));
                }
            }
        }
        if !columns
            .iter()
            .any(|c| matches!(c.kind, ColumnKind::Numeric | ColumnKind::Categorical))
        {
            return Err(Error::Schema("no feature columns".into()));
        }
        Ok(Self { columns })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: Schema = toml::from_str(text)?;
        Self::new(raw.columns)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    /// Feature columns in schema order.
    pub fn features(&self) -> impl Iterator<Item = &ColumnSpec> {
        self.columns
            .iter()
            .filter(|c| matches!(c.kind, ColumnKind::Numeric | ColumnKind::Categorical))
    }

    pub fn feature_count(&self) -> usize {
        self.features().count()
    }

    pub fn label(&self) -> &ColumnSpec {
        self.columns
            .iter()
            .find(|c| matches!(c.kind, ColumnKind::Label { .. }))
            .expect("validated schema has a label")
    }

    /// All-numeric schema `x0..x{n-1}` plus label `y` with positive token `"1"`.
    pub fn numeric(feature_count: usize) -> Result<Self> {
        let mut cols: Vec<ColumnSpec> = (0..feature_count)
            .map(|i| ColumnSpec::numeric(format!("x{i}")))
            .collect();
        cols.push(ColumnSpec::label("y", "1"));
        Self::new(cols)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvOptions {
    pub has_header: bool,
    /// Raw lines dropped before parsing starts.
    pub skip_rows: usize,
    /// Extra tokens treated as missing besides the empty string.
    pub missing_tokens: Vec<String>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            has_header: true,
            skip_rows: 0,
            missing_tokens: Vec::new(),
        }
    }
}

/// Token to code, per categorical column. Codes are consecutive from 0.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CategoryMaps {
    maps: HashMap<String, HashMap<String, usize>>,
}

impl CategoryMaps {
    fn code(&mut self, column: &str, token: &str) -> usize {
        let map = self.maps.entry(column.to_string()).or_default();
        let next = map.len();
        *map.entry(token.to_string()).or_insert(next)
    }

    pub fn get(&self, column: &str, token: &str) -> Option<usize> {
        self.maps.get(column)?.get(token).copied()
    }

    pub fn len(&self, column: &str) -> usize {
        self.maps.get(column).map_or(0, HashMap::len)
    }

    pub fn is_empty(&self) -> bool {
        self.maps.values().all(HashMap::is_empty)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TabularDataset {
    /// `N x F`; missing cells are `NaN` until [`impute`] runs.
    pub features: Matrix,
    pub labels: Vec<BinaryLabel>,
    pub schema: Schema,
    pub category_maps: CategoryMaps,
}

impl TabularDataset {
    /// Dataset over an all-numeric schema, for in-memory data.
    pub fn from_parts(features: Matrix, labels: Vec<BinaryLabel>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::invalid(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        let schema = Schema::numeric(features.cols())?;
        Ok(Self {
            features,
            labels,
            schema,
            category_maps: CategoryMaps::default(),
        })
    }

    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn feature_count(&self) -> usize {
        self.features.cols()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|l| l.is_positive()).count()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Ok(Self {
            features: self.features.select_rows(indices)?,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            schema: self.schema.clone(),
            category_maps: self.category_maps.clone(),
        })
    }

    fn with_features(&self, features: Matrix) -> Self {
        Self {
            features,
            labels: self.labels.clone(),
            schema: self.schema.clone(),
            category_maps: self.category_maps.clone(),
        }
    }
}

pub fn load_csv(
    path: impl AsRef<Path>,
    schema: &Schema,
    options: &CsvOptions,
) -> Result<TabularDataset> {
    load_csv_with_maps(path, schema, options, CategoryMaps::default())
}

/// Loads a file continuing the codes in `maps`; unseen tokens get the next code.
pub fn load_csv_with_maps(
    path: impl AsRef<Path>,
    schema: &Schema,
    options: &CsvOptions,
    mut maps: CategoryMaps,
) -> Result<TabularDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let body: &str = if options.skip_rows == 0 {
        &text
    } else {
        let mut rest = text.as_str();
        for _ in 0..options.skip_rows {
            rest = rest.split_once('\n').map_or("", |(_, r)| r);
        }
        rest
    };
    let err = |row: usize, message: String| Error::Data {
        path: path.to_path_buf(),
        row,
        message,
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(options.has_header)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(body.as_bytes());

    // position in the record for each schema column
    let positions: Vec<usize> = if options.has_header {
        let header = reader.headers()?.clone();
        let mut by_name = HashMap::new();
        for (i, h) in header.iter().enumerate() {
            if !schema.columns.iter().any(|c| c.name == h) {
                return Err(err(1 + options.skip_rows, format!("unknown column {h:?}")));
            }
            by_name.insert(h.to_string(), i);
        }
        schema
            .columns
            .iter()
            .map(|c| {
                by_name.get(&c.name).copied().ok_or_else(|| {
                    let what = if matches!(c.kind, ColumnKind::Label { .. }) {
                        "missing label column"
                    } else {
                        "missing column"
                    };
                    err(1 + options.skip_rows, format!("{what} {:?}", c.name))
                })
            })
            .collect::<Result<_>>()?
    } else {
        (0..schema.columns.len()).collect()
    };
    let width = positions.iter().max().map_or(0, |m| m + 1);
    let first_data_line = 1 + options.skip_rows + usize::from(options.has_header);

    let f = schema.feature_count();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = record
            .position()
            .map_or(first_data_line + i, |p| p.line() as usize + options.skip_rows);
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        if record.len() < width {
            return Err(err(
                line,
                format!("expected {width} fields, found {}", record.len()),
            ));
        }
        let mut row = Vec::with_capacity(f);
        let mut label = None;
        for (spec, &pos) in schema.columns.iter().zip(&positions) {
            let token = record.get(pos).unwrap_or("");
            let missing = token.is_empty() || options.missing_tokens.iter().any(|m| m == token);
            match &spec.kind {
                ColumnKind::Numeric => {
                    let v = if missing {
                        f64::NAN
                    } else {
                        token.parse::<f64>().ok().filter(|v| v.is_finite()).unwrap_or(f64::NAN)
                    };
                    row.push(v);
                }
                ColumnKind::Categorical => {
                    row.push(if missing {
                        f64::NAN
                    } else {
                        maps.code(&spec.name, token) as f64
                    });
                }
                ColumnKind::Label { positive, negative } => {
                    if missing {
                        return Err(err(line, format!("missing label in {:?}", spec.name)));
                    }
                    label = Some(if positive.iter().any(|p| p == token) {
                        BinaryLabel::Positive
                    } else if negative.is_empty() || negative.iter().any(|n| n == token) {
                        BinaryLabel::Negative
                    } else {
                        return Err(err(line, format!("unmappable label token {token:?}")));
                    });
                }
                ColumnKind::Ignore => {}
            }
        }
        values.extend(row);
        labels.push(label.expect("schema has a label"));
    }
    if labels.is_empty() {
        return Err(err(first_data_line, "no data rows".into()));
    }
    Ok(TabularDataset {
        features: Matrix::from_vec(labels.len(), f, values)?,
        labels,
        schema: schema.clone(),
        category_maps: maps,
    })
}

/// Replaces missing (`NaN`) cells with `0.0`.
pub fn impute(data: &TabularDataset) -> TabularDataset {
    data.with_features(
        data.features
            .map(|x| if x.is_nan() { 0.0 } else { x }),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    /// `2 * std`, or `1.0` for constant features.
    pub divisor: Vec<f64>,
}

impl NormalizationStats {
    /// Per-column mean and population standard deviation.
    pub fn fit(features: &Matrix) -> Self {
        let n = features.rows() as f64;
        let mean: Vec<f64> = features
            .column_sums()
            .as_slice()
            .iter()
            .map(|s| s / n)
            .collect();
        let mut var = vec![0.0; features.cols()];
        for row in features.iter_rows() {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let divisor = var
            .iter()
            .map(|v| {
                let std = (v / n).sqrt();
                if std > 0.0 {
                    2.0 * std
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, divisor }
    }

    pub fn transform(&self, features: &Matrix) -> Result<Matrix> {
        self.check(features)?;
        let mut out = features.clone();
        for row in out.as_mut_slice().chunks_exact_mut(self.mean.len()) {
            for ((x, m), d) in row.iter_mut().zip(&self.mean).zip(&self.divisor) {
                *x = (*x - m) / d;
            }
        }
        Ok(out)
    }

    pub fn inverse_transform(&self, features: &Matrix) -> Result<Matrix> {
        self.check(features)?;
        let mut out = features.clone();
        for row in out.as_mut_slice().chunks_exact_mut(self.mean.len()) {
            for ((x, m), d) in row.iter_mut().zip(&self.mean).zip(&self.divisor) {
                *x = *x * d + m;
            }
        }
        Ok(out)
    }

    fn check(&self, features: &Matrix) -> Result<()> {
        if features.cols() != self.mean.len() {
            return Err(Error::invalid(format!(
                "stats cover {} features, matrix has {}",
                self.mean.len(),
                features.cols()
            )));
        }
        Ok(())
    }
}

/// Imputes every dataset, fits statistics on `train`, and standardizes all of them.
pub fn impute_and_normalize(
    train: &TabularDataset,
    others: &[&TabularDataset],
) -> Result<(NormalizationStats, TabularDataset, Vec<TabularDataset>)> {
    let train = impute(train);
    let stats = NormalizationStats::fit(&train.features);
    let train_out = train.with_features(stats.transform(&train.features)?);
    let others = others
        .iter()
        .map(|d| {
            let d = impute(d);
            Ok(d.with_features(stats.transform(&d.features)?))
        })
        .collect::<Result<_>>()?;
    Ok((stats, train_out, others))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

/// Row indices `(train, validation)`, each sorted ascending.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 5 {
        return Err(Error::invalid(format!("need at least 5 rows to split, got {n}")));
    }
    if !(spec.validation_fraction > 0.0 && spec.validation_fraction < 1.0) {
        return Err(Error::invalid("validation_fraction must be in (0, 1)"));
    }
    let val = ((spec.validation_fraction * n as f64).floor() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let mut val_idx = idx[..val].to_vec();
    let mut train_idx = idx[val..].to_vec();
    val_idx.sort_unstable();
    train_idx.sort_unstable();
    Ok((train_idx, val_idx))
}

pub fn split_train_val(
    data: &TabularDataset,
    spec: &SplitSpec,
) -> Result<(TabularDataset, TabularDataset)> {
    let (t, v) = split_indices(data.rows(), spec)?;
    Ok((data.subset(&t)?, data.subset(&v)?))
}

/// Batches with equal positive and negative counts, sampled with replacement.
#[derive(Clone, Debug)]
pub struct BalancedSampler {
    positives: Vec<usize>,
    negatives: Vec<usize>,
    rng: ChaCha8Rng,
}

impl BalancedSampler {
    pub fn new(data: &TabularDataset, seed: u64) -> Result<Self> {
        let (positives, negatives): (Vec<usize>, Vec<usize>) =
            (0..data.rows()).partition(|&i| data.labels[i].is_positive());
        if positives.is_empty() || negatives.is_empty() {
            return Err(Error::invalid(format!(
                "balanced sampling needs both classes, got {} positive and {} negative rows",
                positives.len(),
                negatives.len()
            )));
        }
        Ok(Self {
            positives,
            negatives,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// `batch_size / 2` positive rows followed by as many negative rows.
    /// Odd sizes round down.
    pub fn sample_indices(&mut self, batch_size: usize) -> Result<Vec<usize>> {
        let half = batch_size / 2;
        if half == 0 {
            return Err(Error::invalid("balanced batch size must be at least 2"));
        }
        let mut out = Vec::with_capacity(2 * half);
        for pool in [&self.positives, &self.negatives] {
            for _ in 0..half {
                out.push(pool[self.rng.random_range(0..pool.len())]);
            }
        }
        Ok(out)
    }

    pub fn sample(
        &mut self,
        data: &TabularDataset,
        batch_size: usize,
    ) -> Result<(Matrix, Vec<BinaryLabel>)> {
        let idx = self.sample_indices(batch_size)?;
        let x = data.features.select_rows(&idx)?;
        let y = idx.iter().map(|&i| data.labels[i]).collect();
        Ok((x, y))
    }
}

/// Batches per epoch under balanced resampling: `ceil(n / batch_size)`.
pub fn batches_per_epoch(n: usize, batch_size: usize) -> usize {
    n.div_ceil(batch_size.max(1)).max(1)
}

/// Where a dataset lives on disk and how to parse it.
///
/// Relative paths resolve against the manifest's own directory first and then
/// against `$BINOTAB_DATA_DIR`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default)]
    pub name: String,
    pub train: PathBuf,
    pub test: PathBuf,
    pub schema: PathBuf,
    #[serde(default)]
    pub train_options: CsvOptions,
    #[serde(default)]
    pub test_options: CsvOptions,
    #[serde(skip)]
    base_dir: Option<PathBuf>,
}

pub const DATA_DIR_ENV: &str = "BINOTAB_DATA_DIR";

impl Manifest {
    pub fn from_toml_str(text: &str, base_dir: Option<PathBuf>) -> Result<Self> {
        let mut m: Manifest = toml::from_str(text)?;
        m.base_dir = base_dir;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut m = Self::from_toml_str(&fs::read_to_string(path)?, path.parent().map(Path::to_path_buf))?;
        if m.name.is_empty() {
            m.name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
        }
        Ok(m)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        resolve_data_path(p, self.base_dir.as_deref(), std::env::var_os(DATA_DIR_ENV).map(PathBuf::from).as_deref())
    }

    /// Loads train and test files, sharing category codes from the training file.
    pub fn load_datasets(&self) -> Result<(TabularDataset, TabularDataset)> {
        let schema = Schema::load(self.resolve(&self.schema))?;
        let train = load_csv(self.resolve(&self.train), &schema, &self.train_options)?;
        let test = load_csv_with_maps(
            self.resolve(&self.test),
            &schema,
            &self.test_options,
            train.category_maps.clone(),
        )?;
        Ok((train, test))
    }
}

fn resolve_data_path(p: &Path, base: Option<&Path>, data_dir: Option<&Path>) -> PathBuf {
    if p.is_absolute() {
        return p.to_path_buf();
    }
    if let Some(b) = base {
        let candidate = b.join(p);
        if candidate.exists() {
            return candidate;
        }
    }
    if let Some(d) = data_dir {
        let candidate = d.join(p);
        if candidate.exists() {
            return candidate;
        }
    }
    base.map_or_else(|| p.to_path_buf(), |b| b.join(p))
}
