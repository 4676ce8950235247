//! Tabular data: schema-driven CSV ingestion with one-hot encoding of
//! categorical columns, retain/forget splits, backdoor poisoning, optional
//! min-max scaling, and a bundled synthetic two-class generator.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::{kv, Error, Result, Scalar};

// ---------------------------------------------------------------------------
// Schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemaColumn {
    pub name: String,
    pub kind: ColumnKind,
    /// Sorted category vocabulary; filled at ingest time for categorical
    /// columns, `None` until fitted.
    pub categories: Option<Vec<String>>,
}

/// Declarative description of a CSV file: feature columns, label column,
/// and (for binary tasks) which label value is the positive class.
///
/// The on-disk form is a `key = value` text file:
///
/// ```text
/// label = income
/// positive = >50K
/// column.age = numeric
/// column.workclass = categorical
/// # optional, written back after fitting:
/// categories.workclass = Federal-gov,Local-gov,Private
/// classes = <=50K,>50K
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSchema {
    pub columns: Vec<SchemaColumn>,
    pub label_column: String,
    pub positive_label: Option<String>,
    /// Class names in index order; filled at ingest time.
    pub classes: Option<Vec<String>>,
}

impl FeatureSchema {
    /// All-numeric schema over the given feature columns.
    pub fn numeric(
        feature_columns: &[String],
        label_column: &str,
        positive_label: Option<&str>,
    ) -> Self {
        FeatureSchema {
            columns: feature_columns
                .iter()
                .map(|name| SchemaColumn {
                    name: name.clone(),
                    kind: ColumnKind::Numeric,
                    categories: None,
                })
                .collect(),
            label_column: label_column.to_string(),
            positive_label: positive_label.map(str::to_string),
            classes: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut columns: Vec<SchemaColumn> = Vec::new();
        let mut label_column = None;
        let mut positive_label = None;
        let mut classes = None;
        let mut categories: Vec<(String, Vec<String>)> = Vec::new();

        for (key, value) in kv::parse(text)? {
            if let Some(name) = key.strip_prefix("column.") {
                let kind = match value.as_str() {
                    "numeric" => ColumnKind::Numeric,
                    "categorical" => ColumnKind::Categorical,
                    other => {
                        return Err(Error::Schema(format!(
                            "column {name:?} has unknown kind {other:?}"
                        )))
                    }
                };
                columns.push(SchemaColumn {
                    name: name.to_string(),
                    kind,
                    categories: None,
                });
            } else if let Some(name) = key.strip_prefix("categories.") {
                categories.push((name.to_string(), split_list(&value)));
            } else {
                match key.as_str() {
                    "label" => label_column = Some(value),
                    "positive" => positive_label = Some(value),
                    "classes" => classes = Some(split_list(&value)),
                    other => return Err(Error::Schema(format!("unknown schema key {other:?}"))),
                }
            }
        }

        for (name, mut cats) in categories {
            let col = columns.iter_mut().find(|c| c.name == name).ok_or_else(|| {
                Error::Schema(format!("categories given for undeclared column {name:?}"))
            })?;
            if col.kind != ColumnKind::Categorical {
                return Err(Error::Schema(format!(
                    "categories given for numeric column {name:?}"
                )));
            }
            cats.sort();
            col.categories = Some(cats);
        }

        let schema = FeatureSchema {
            columns,
            label_column: label_column
                .ok_or_else(|| Error::Schema("schema is missing `label`".into()))?,
            positive_label,
            classes,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path.as_ref()).map_err(|e| {
            Error::Schema(format!(
                "cannot read schema file {}: {e}",
                path.as_ref().display()
            ))
        })?;
        Self::parse(&text)
    }

    /// Render back to the `key = value` format, including fitted
    /// vocabularies so an encoding can be reproduced exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("label = {}\n", self.label_column));
        if let Some(pos) = &self.positive_label {
            out.push_str(&format!("positive = {pos}\n"));
        }
        if let Some(classes) = &self.classes {
            out.push_str(&format!("classes = {}\n", classes.join(",")));
        }
        for col in &self.columns {
            let kind = match col.kind {
                ColumnKind::Numeric => "numeric",
                ColumnKind::Categorical => "categorical",
            };
            out.push_str(&format!("column.{} = {kind}\n", col.name));
            if let Some(cats) = &col.categories {
                out.push_str(&format!("categories.{} = {}\n", col.name, cats.join(",")));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.columns.is_empty() {
            return Err(Error::Schema("schema declares no feature columns".into()));
        }
        let mut seen = HashSet::new();
        for col in &self.columns {
            if !seen.insert(col.name.as_str()) {
                return Err(Error::Schema(format!(
                    "duplicate column name {:?}",
                    col.name
                )));
            }
        }
        if seen.contains(self.label_column.as_str()) {
            return Err(Error::Schema(format!(
                "label column {:?} is also a feature column",
                self.label_column
            )));
        }
        Ok(())
    }
}

fn split_list(value: &str) -> Vec<String> {
    value.split(',').map(|s| s.trim().to_string()).collect()
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

/// Encoded feature matrix with labels, stable row ids, and class names.
/// Immutable after construction; all operations return new datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset<S> {
    features: Vec<S>, // row-major, num_rows x num_features
    num_features: usize,
    labels: Vec<usize>,
    feature_names: Vec<String>,
    row_ids: Vec<u64>,
    num_classes: usize,
    class_names: Vec<String>,
}

impl<S: Scalar> TabularDataset<S> {
    pub fn from_parts(
        features: Vec<S>,
        labels: Vec<usize>,
        feature_names: Vec<String>,
        num_classes: usize,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let n = labels.len();
        let row_ids = (0..n as u64).collect();
        Self::with_row_ids(
            features,
            labels,
            feature_names,
            num_classes,
            class_names,
            row_ids,
        )
    }

    pub fn with_row_ids(
        features: Vec<S>,
        labels: Vec<usize>,
        feature_names: Vec<String>,
        num_classes: usize,
        class_names: Vec<String>,
        row_ids: Vec<u64>,
    ) -> Result<Self> {
        let num_features = feature_names.len();
        if features.len() != labels.len() * num_features {
            return Err(Error::Contract(format!(
                "feature matrix has {} values, expected {} rows x {} columns",
                features.len(),
                labels.len(),
                num_features
            )));
        }
        if row_ids.len() != labels.len() {
            return Err(Error::Contract("row_ids length != labels length".into()));
        }
        if num_classes != class_names.len() || num_classes == 0 {
            return Err(Error::Contract(
                "class_names must name every class index".into(),
            ));
        }
        if let Some(bad) = labels.iter().find(|&&c| c >= num_classes) {
            return Err(Error::Contract(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("non-finite feature value".into()));
        }
        Ok(TabularDataset {
            features,
            num_features,
            labels,
            feature_names,
            row_ids,
            num_classes,
            class_names,
        })
    }

    pub fn num_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.features[i * self.num_features..(i + 1) * self.num_features]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn row_ids(&self) -> &[u64] {
        &self.row_ids
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    /// New dataset holding the given row positions (row ids travel along).
    pub fn subset(&self, positions: &[usize]) -> Self {
        let mut features = Vec::with_capacity(positions.len() * self.num_features);
        let mut labels = Vec::with_capacity(positions.len());
        let mut row_ids = Vec::with_capacity(positions.len());
        for &p in positions {
            features.extend_from_slice(self.row(p));
            labels.push(self.labels[p]);
            row_ids.push(self.row_ids[p]);
        }
        TabularDataset {
            features,
            num_features: self.num_features,
            labels,
            feature_names: self.feature_names.clone(),
            row_ids,
            num_classes: self.num_classes,
            class_names: self.class_names.clone(),
        }
    }

    /// Split into (rows whose id is in `ids`, remaining rows).
    pub fn partition_by_ids(&self, ids: &[u64]) -> (Self, Self) {
        let wanted: HashSet<u64> = ids.iter().copied().collect();
        let mut inside = Vec::new();
        let mut outside = Vec::new();
        for p in 0..self.num_rows() {
            if wanted.contains(&self.row_ids[p]) {
                inside.push(p);
            } else {
                outside.push(p);
            }
        }
        (self.subset(&inside), self.subset(&outside))
    }

    /// Column maximum of an encoded feature.
    pub fn column_max(&self, feature: usize) -> Option<S> {
        (0..self.num_rows())
            .map(|r| self.row(r)[feature])
            .fold(None, |acc, v| match acc {
                None => Some(v),
                Some(m) => Some(if v > m { v } else { m }),
            })
    }

    /// Write the encoded matrix as CSV (header = feature names + `label`,
    /// labels written as class names).
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        let mut header: Vec<String> = self.feature_names.clone();
        header.push("label".into());
        w.write_record(&header)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        for r in 0..self.num_rows() {
            let mut record: Vec<String> = self.row(r).iter().map(|v| v.to_string()).collect();
            record.push(self.class_names[self.labels[r]].clone());
            w.write_record(&record)
                .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        }
        w.flush()?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

/// Load an RFC-4180 CSV under `schema`. Numeric columns parse as scalars;
/// categorical columns one-hot encode into `{0,1}` columns named `col=cat`
/// with the vocabulary captured (or enforced, when already fitted) at load
/// time. Returns the dataset and the fitted schema.
///
/// Empty fields and unparseable numerics are rejected with their row index;
/// under a fitted schema, unseen categories or label values are encoding
/// errors.
pub fn load_csv<S: Scalar>(
    path: impl AsRef<Path>,
    schema: &FeatureSchema,
) -> Result<(TabularDataset<S>, FeatureSchema)> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())
        .map_err(|e| Error::Ingest(format!("cannot open {}: {e}", path.as_ref().display())))?;

    let headers = reader
        .headers()
        .map_err(|e| Error::Ingest(format!("cannot read header: {e}")))?
        .clone();
    let col_index = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column {name:?} not present in CSV header")))
    };
    let label_idx = col_index(&schema.label_column)?;
    let feature_idx: Vec<usize> = schema
        .columns
        .iter()
        .map(|c| col_index(&c.name))
        .collect::<Result<_>>()?;

    // Raw pass: collect selected fields and (if unfitted) vocabularies.
    let mut raw_rows: Vec<Vec<String>> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    let mut vocab_builders: Vec<BTreeSet<String>> = vec![BTreeSet::new(); schema.columns.len()];
    let mut label_values: BTreeSet<String> = BTreeSet::new();

    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Ingest(format!("row {row}: {e}")))?;
        let mut fields = Vec::with_capacity(schema.columns.len());
        for (c, &idx) in feature_idx.iter().enumerate() {
            let field = record.get(idx).unwrap_or("");
            if field.is_empty() {
                return Err(Error::Ingest(format!(
                    "row {row}: missing value in column {:?}",
                    schema.columns[c].name
                )));
            }
            if schema.columns[c].kind == ColumnKind::Categorical {
                vocab_builders[c].insert(field.to_string());
            }
            fields.push(field.to_string());
        }
        let label = record.get(label_idx).unwrap_or("");
        if label.is_empty() {
            return Err(Error::Ingest(format!("row {row}: missing label")));
        }
        label_values.insert(label.to_string());
        raw_labels.push(label.to_string());
        raw_rows.push(fields);
    }
    if raw_rows.is_empty() {
        return Err(Error::Ingest(format!(
            "{} contains no data rows",
            path.as_ref().display()
        )));
    }

    // Fit or reuse vocabularies and class list.
    let mut fitted = schema.clone();
    for (c, col) in fitted.columns.iter_mut().enumerate() {
        if col.kind == ColumnKind::Categorical && col.categories.is_none() {
            col.categories = Some(vocab_builders[c].iter().cloned().collect());
        }
    }
    if fitted.classes.is_none() {
        let mut classes: Vec<String> = label_values.iter().cloned().collect();
        if classes.len() == 2 {
            if let Some(pos) = &fitted.positive_label {
                if !classes.contains(pos) {
                    return Err(Error::Schema(format!(
                        "positive label {pos:?} never occurs in the data"
                    )));
                }
                classes.retain(|c| c != pos);
                classes.push(pos.clone());
            }
        }
        fitted.classes = Some(classes);
    }
    let classes = fitted.classes.clone().expect("classes fitted above");
    let class_of: HashMap<&str, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();

    // Encoded layout.
    let mut feature_names: Vec<String> = Vec::new();
    for col in &fitted.columns {
        match col.kind {
            ColumnKind::Numeric => feature_names.push(col.name.clone()),
            ColumnKind::Categorical => {
                for cat in col.categories.as_ref().expect("fitted") {
                    feature_names.push(format!("{}={cat}", col.name));
                }
            }
        }
    }

    // Encode.
    let width = feature_names.len();
    let mut features: Vec<S> = Vec::with_capacity(raw_rows.len() * width);
    let mut labels: Vec<usize> = Vec::with_capacity(raw_rows.len());
    for (row, fields) in raw_rows.iter().enumerate() {
        for (c, col) in fitted.columns.iter().enumerate() {
            let field = &fields[c];
            match col.kind {
                ColumnKind::Numeric => {
                    let v: f64 = field.parse().map_err(|_| {
                        Error::Ingest(format!(
                            "row {row}: cannot parse {field:?} in numeric column {:?}",
                            col.name
                        ))
                    })?;
                    if !v.is_finite() {
                        return Err(Error::Ingest(format!(
                            "row {row}: non-finite value in column {:?}",
                            col.name
                        )));
                    }
                    features.push(S::of(v));
                }
                ColumnKind::Categorical => {
                    let cats = col.categories.as_ref().expect("fitted");
                    let hit = cats.binary_search(field).map_err(|_| {
                        Error::Encoding(format!(
                            "row {row}: unknown category {field:?} in column {:?}",
                            col.name
                        ))
                    })?;
                    for k in 0..cats.len() {
                        features.push(if k == hit { S::one() } else { S::zero() });
                    }
                }
            }
        }
        let label = class_of.get(raw_labels[row].as_str()).ok_or_else(|| {
            Error::Encoding(format!(
                "row {row}: unknown label value {:?}",
                raw_labels[row]
            ))
        })?;
        labels.push(*label);
    }

    let data = TabularDataset::from_parts(features, labels, feature_names, classes.len(), classes)?;
    Ok((data, fitted))
}

// ---------------------------------------------------------------------------
// Retain/forget split
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct SplitSpec {
    /// Fraction of rows that become the forget set, in (0, 1).
    pub forget_fraction: f64,
    pub seed: u64,
    /// Preserve per-class proportions to within one row.
    pub stratified: bool,
}

/// Partition into (retain, forget) with `|forget| = round(fraction * n)`.
/// Deterministic given the seed; every row lands on exactly one side.
pub fn split_retain_forget<S: Scalar>(
    data: &TabularDataset<S>,
    spec: &SplitSpec,
) -> Result<(TabularDataset<S>, TabularDataset<S>)> {
    let n = data.num_rows();
    if n == 0 {
        return Err(Error::Split("cannot split an empty dataset".into()));
    }
    if !(spec.forget_fraction > 0.0 && spec.forget_fraction < 1.0) {
        return Err(Error::Split(format!(
            "forget_fraction must be in (0, 1), got {}",
            spec.forget_fraction
        )));
    }
    let n_forget = (spec.forget_fraction * n as f64).round() as usize;
    if n_forget == 0 || n_forget >= n {
        return Err(Error::Split(format!(
            "fraction {} of {n} rows leaves an empty side",
            spec.forget_fraction
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut forget_positions: Vec<usize> = if spec.stratified {
        stratified_pick(data, n_forget, spec.forget_fraction, &mut rng)
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        order.truncate(n_forget);
        order
    };
    forget_positions.sort_unstable();

    let member: HashSet<usize> = forget_positions.iter().copied().collect();
    let retain_positions: Vec<usize> = (0..n).filter(|p| !member.contains(p)).collect();
    Ok((
        data.subset(&retain_positions),
        data.subset(&forget_positions),
    ))
}

/// Largest-remainder quotas per class, then a seeded draw inside each class.
fn stratified_pick<S: Scalar>(
    data: &TabularDataset<S>,
    n_forget: usize,
    fraction: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let k = data.num_classes();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for p in 0..data.num_rows() {
        by_class[data.label(p)].push(p);
    }
    let mut quotas: Vec<usize> = Vec::with_capacity(k);
    let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(k);
    for (c, rows) in by_class.iter().enumerate() {
        let exact = fraction * rows.len() as f64;
        let base = exact.floor() as usize;
        quotas.push(base);
        remainders.push((exact - base as f64, c));
    }
    let assigned: usize = quotas.iter().sum();
    remainders.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    for i in 0..n_forget.saturating_sub(assigned) {
        let class = remainders[i % k].1;
        quotas[class] += 1;
    }
    let mut picked = Vec::with_capacity(n_forget);
    for (c, rows) in by_class.iter().enumerate() {
        let mut order = rows.clone();
        order.shuffle(rng);
        picked.extend(order.into_iter().take(quotas[c].min(rows.len())));
    }
    picked
}

// ---------------------------------------------------------------------------
// Backdoor poisoning
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct PoisonSpec {
    /// Fraction of rows to poison, in (0, 1).
    pub poison_fraction: f64,
    /// Encoded feature carrying the trigger; `None` picks the first
    /// plain numeric column (the first name without a `=`).
    pub trigger_feature: Option<String>,
    pub target_label: usize,
}

/// A trigger pinned to a concrete feature and the clean-training maximum
/// value observed when the poison was planted.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedTrigger<S> {
    pub feature_index: usize,
    pub feature_name: String,
    pub value: S,
}

#[derive(Debug, Clone)]
pub struct PoisonOutcome<S> {
    pub data: TabularDataset<S>,
    /// Row ids of the poisoned rows; these later serve as the forget set
    /// for backdoor-removal unlearning.
    pub poisoned_ids: Vec<u64>,
    pub trigger: ResolvedTrigger<S>,
}

impl PoisonSpec {
    pub fn resolve<S: Scalar>(&self, train: &TabularDataset<S>) -> Result<ResolvedTrigger<S>> {
        let feature_index = match &self.trigger_feature {
            Some(name) => train
                .feature_index(name)
                .ok_or_else(|| Error::Spec(format!("unknown trigger feature {name:?}")))?,
            None => train
                .feature_names()
                .iter()
                .position(|n| !n.contains('='))
                .ok_or_else(|| {
                    Error::Spec("no plain numeric column available as trigger".into())
                })?,
        };
        let value = train
            .column_max(feature_index)
            .ok_or_else(|| Error::Spec("cannot resolve a trigger on an empty dataset".into()))?;
        Ok(ResolvedTrigger {
            feature_index,
            feature_name: train.feature_names()[feature_index].clone(),
            value,
        })
    }
}

/// Poison `round(fraction * n)` rows: trigger feature forced to the clean
/// column maximum, label forced to the target. Unmodified rows are
/// bit-identical to the input.
pub fn poison<S: Scalar>(
    data: &TabularDataset<S>,
    spec: &PoisonSpec,
    seed: u64,
) -> Result<PoisonOutcome<S>> {
    if !(spec.poison_fraction > 0.0 && spec.poison_fraction < 1.0) {
        return Err(Error::Spec(format!(
            "poison_fraction must be in (0, 1), got {}",
            spec.poison_fraction
        )));
    }
    if spec.target_label >= data.num_classes() {
        return Err(Error::Spec(format!(
            "target label {} out of range for {} classes",
            spec.target_label,
            data.num_classes()
        )));
    }
    let n = data.num_rows();
    let count = (spec.poison_fraction * n as f64).round() as usize;
    if count == 0 {
        return Err(Error::Spec(format!(
            "poison_fraction {} of {n} rows rounds to zero",
            spec.poison_fraction
        )));
    }
    let trigger = spec.resolve(data)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order.truncate(count);
    order.sort_unstable();

    let mut poisoned = data.clone();
    let width = poisoned.num_features;
    for &p in &order {
        poisoned.features[p * width + trigger.feature_index] = trigger.value;
        poisoned.labels[p] = spec.target_label;
    }
    let poisoned_ids = order.iter().map(|&p| data.row_ids[p]).collect();
    Ok(PoisonOutcome {
        data: poisoned,
        poisoned_ids,
        trigger,
    })
}

/// Stamp the trigger onto every row without touching labels (test-time
/// attack set). Applying twice equals applying once.
pub fn apply_trigger<S: Scalar>(
    data: &TabularDataset<S>,
    trigger: &ResolvedTrigger<S>,
) -> Result<TabularDataset<S>> {
    if trigger.feature_index >= data.num_features() {
        return Err(Error::Spec(format!(
            "trigger feature index {} out of range",
            trigger.feature_index
        )));
    }
    let mut out = data.clone();
    let width = out.num_features;
    for p in 0..out.num_rows() {
        out.features[p * width + trigger.feature_index] = trigger.value;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Min-max scaling
// ---------------------------------------------------------------------------

/// Per-column min-max scaling fitted on a training set. Sigmoid sharpness
/// interacts with feature scale, so experiments usually scale features to
/// [0, 1] before attaching a surrogate.
#[derive(Debug, Clone)]
pub struct MinMaxScaler<S> {
    mins: Vec<S>,
    ranges: Vec<S>,
}

impl<S: Scalar> MinMaxScaler<S> {
    pub fn fit(data: &TabularDataset<S>) -> Result<Self> {
        if data.num_rows() == 0 {
            return Err(Error::Spec(
                "cannot fit a scaler on an empty dataset".into(),
            ));
        }
        let width = data.num_features();
        let mut mins = data.row(0).to_vec();
        let mut maxs = data.row(0).to_vec();
        for r in 1..data.num_rows() {
            for (c, &v) in data.row(r).iter().enumerate() {
                if v < mins[c] {
                    mins[c] = v;
                }
                if v > maxs[c] {
                    maxs[c] = v;
                }
            }
        }
        let ranges = (0..width).map(|c| maxs[c] - mins[c]).collect();
        Ok(MinMaxScaler { mins, ranges })
    }

    /// Map each column to [0, 1] by the fitted bounds; constant columns map
    /// to 0. Out-of-range values (e.g. test rows) extrapolate linearly.
    pub fn transform(&self, data: &TabularDataset<S>) -> Result<TabularDataset<S>> {
        if data.num_features() != self.mins.len() {
            return Err(Error::Contract(format!(
                "scaler fitted on {} columns, dataset has {}",
                self.mins.len(),
                data.num_features()
            )));
        }
        let mut out = data.clone();
        let width = out.num_features;
        for p in 0..out.num_rows() {
            for c in 0..width {
                let v = &mut out.features[p * width + c];
                *v = if self.ranges[c] > S::zero() {
                    (*v - self.mins[c]) / self.ranges[c]
                } else {
                    S::zero()
                };
            }
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Synthetic benchmark data
// ---------------------------------------------------------------------------

/// Bundled two-class generator used when no dataset file is supplied.
///
/// Six numeric features: `f1..f3` are Gaussian clusters separated by class
/// (sd 0.15; `f2` and `f3` center on 0.65 for class 1 and 0.35 for class 0,
/// `f1` runs the other way); `f0`, `f4`, `f5` are uniform noise on [0, 1].
/// `f1`'s inversion gives backdoor experiments a natural trigger column:
/// large `f1` is evidence *against* class 1, so stamping `f1` to its
/// maximum with label 1 plants a signal a clean model would contradict.
pub fn synthetic_two_class<S: Scalar>(n_rows: usize, seed: u64) -> TabularDataset<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0f64, 0.15).expect("valid sd");
    let mut features = Vec::with_capacity(n_rows * 6);
    let mut labels = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        let class = usize::from(rng.gen_bool(0.5));
        let center = if class == 0 { 0.35 } else { 0.65 };
        let flipped = 1.0 - center;
        let noise = |rng: &mut ChaCha8Rng| S::of(rng.gen_range(0.0..1.0));
        features.push(noise(&mut rng)); // f0
        features.push(S::of(flipped + normal.sample(&mut rng))); // f1
        features.push(S::of(center + normal.sample(&mut rng))); // f2
        features.push(S::of(center + normal.sample(&mut rng))); // f3
        features.push(noise(&mut rng)); // f4
        features.push(noise(&mut rng)); // f5
        labels.push(class);
    }
    TabularDataset::from_parts(
        features,
        labels,
        (0..6).map(|i| format!("f{i}")).collect(),
        2,
        vec!["0".into(), "1".into()],
    )
    .expect("generator produces a valid dataset")
}

// ---------------------------------------------------------------------------
// Row-id lists
// ---------------------------------------------------------------------------

/// One row id per line; used to persist split/poison selections.
pub fn write_row_ids(path: impl AsRef<Path>, ids: &[u64]) -> Result<()> {
    let mut text = String::new();
    for id in ids {
        text.push_str(&id.to_string());
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn read_row_ids(path: impl AsRef<Path>) -> Result<Vec<u64>> {
    let text = fs::read_to_string(path.as_ref())?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse()
                .map_err(|e| Error::Ingest(format!("bad row id {l:?}: {e}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn numeric_schema() -> FeatureSchema {
        FeatureSchema::parse("label = y\ncolumn.x = numeric\n").unwrap()
    }

    #[test]
    fn minimal_numeric_round_trip() {
        let csv = write_temp("x,y\n1.5,a\n2.5,b\n3.5,a\n4.5,b\n");
        let (data, fitted) = load_csv::<f64>(csv.path(), &numeric_schema()).unwrap();
        assert_eq!(data.num_rows(), 4);
        assert_eq!(data.num_features(), 1);
        assert_eq!(data.row(0), &[1.5]);
        assert_eq!(data.labels(), &[0, 1, 0, 1]);
        assert_eq!(
            fitted.classes.as_deref(),
            Some(&["a".into(), "b".into()][..])
        );
    }

    #[test]
    fn one_hot_encoding_and_decode_round_trip() {
        let csv = write_temp("c,y\nred,0\nblue,1\nred,1\n");
        let schema = FeatureSchema::parse("label = y\ncolumn.c = categorical\n").unwrap();
        let (data, fitted) = load_csv::<f64>(csv.path(), &schema).unwrap();
        // vocabulary sorted: blue before red
        assert_eq!(
            data.feature_names(),
            &["c=blue".to_string(), "c=red".to_string()]
        );
        assert_eq!(data.row(0), &[0.0, 1.0]);
        assert_eq!(data.row(1), &[1.0, 0.0]);
        assert_eq!(data.row(2), &[0.0, 1.0]);
        // decoding the one-hot block recovers the original category
        let cats = fitted.columns[0].categories.as_ref().unwrap();
        for (r, expected) in [(0, "red"), (1, "blue"), (2, "red")] {
            let hot = data.row(r).iter().position(|&v| v == 1.0).unwrap();
            assert_eq!(cats[hot], expected);
        }
    }

    #[test]
    fn missing_column_is_schema_error() {
        let csv = write_temp("x,y\n1,0\n");
        let schema = FeatureSchema::parse("label = y\ncolumn.zz = numeric\n").unwrap();
        assert!(matches!(
            load_csv::<f64>(csv.path(), &schema),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn empty_file_is_ingest_error() {
        let csv = write_temp("x,y\n");
        assert!(matches!(
            load_csv::<f64>(csv.path(), &numeric_schema()),
            Err(Error::Ingest(_))
        ));
    }

    #[test]
    fn unparseable_value_reports_row() {
        let csv = write_temp("x,y\n1.0,a\nnope,b\n");
        match load_csv::<f64>(csv.path(), &numeric_schema()) {
            Err(Error::Ingest(msg)) => assert!(msg.contains("row 1"), "{msg}"),
            other => panic!("expected ingest error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_category_under_fitted_schema_is_encoding_error() {
        let schema =
            FeatureSchema::parse("label = y\ncolumn.c = categorical\ncategories.c = blue,red\n")
                .unwrap();
        let csv = write_temp("c,y\ngreen,0\nred,1\n");
        assert!(matches!(
            load_csv::<f64>(csv.path(), &schema),
            Err(Error::Encoding(_))
        ));
    }

    #[test]
    fn positive_label_becomes_class_one() {
        let csv = write_temp("x,y\n1,small\n2,big\n");
        let schema =
            FeatureSchema::parse("label = y\npositive = small\ncolumn.x = numeric\n").unwrap();
        let (data, fitted) = load_csv::<f64>(csv.path(), &schema).unwrap();
        assert_eq!(
            fitted.classes.as_deref(),
            Some(&["big".into(), "small".into()][..])
        );
        assert_eq!(data.labels(), &[1, 0]);
    }

    #[test]
    fn schema_text_round_trip() {
        let schema = FeatureSchema::parse(
            "label = y\npositive = b\nclasses = a,b\ncolumn.x = numeric\ncolumn.c = categorical\ncategories.c = blue,red\n",
        )
        .unwrap();
        assert_eq!(FeatureSchema::parse(&schema.to_text()).unwrap(), schema);
    }

    #[test]
    fn schema_rejects_label_among_features() {
        assert!(matches!(
            FeatureSchema::parse("label = x\ncolumn.x = numeric\n"),
            Err(Error::Schema(_))
        ));
    }

    fn hundred_rows() -> TabularDataset<f64> {
        synthetic_two_class(100, 3)
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let data = hundred_rows();
        let spec = SplitSpec {
            forget_fraction: 0.10,
            seed: 7,
            stratified: false,
        };
        let (retain, forget) = split_retain_forget(&data, &spec).unwrap();
        assert_eq!(forget.num_rows(), 10);
        assert_eq!(retain.num_rows(), 90);
        let f: HashSet<u64> = forget.row_ids().iter().copied().collect();
        let r: HashSet<u64> = retain.row_ids().iter().copied().collect();
        assert!(f.is_disjoint(&r));
        assert_eq!(f.len() + r.len(), 100);

        let spec40 = SplitSpec {
            forget_fraction: 0.40,
            ..spec
        };
        let (_, forget40) = split_retain_forget(&data, &spec40).unwrap();
        assert_eq!(forget40.num_rows(), 40);
    }

    #[test]
    fn split_is_deterministic() {
        let data = hundred_rows();
        let spec = SplitSpec {
            forget_fraction: 0.2,
            seed: 99,
            stratified: false,
        };
        let (r1, f1) = split_retain_forget(&data, &spec).unwrap();
        let (r2, f2) = split_retain_forget(&data, &spec).unwrap();
        assert_eq!(f1.row_ids(), f2.row_ids());
        assert_eq!(r1.row_ids(), r2.row_ids());
    }

    #[test]
    fn stratified_split_preserves_class_balance() {
        let data = hundred_rows();
        let spec = SplitSpec {
            forget_fraction: 0.2,
            seed: 11,
            stratified: true,
        };
        let (_, forget) = split_retain_forget(&data, &spec).unwrap();
        assert_eq!(forget.num_rows(), 20);
        for class in 0..2 {
            let total = data.labels().iter().filter(|&&c| c == class).count() as f64;
            let picked = forget.labels().iter().filter(|&&c| c == class).count() as f64;
            assert!(
                (picked - 0.2 * total).abs() <= 1.0,
                "class {class}: picked {picked} of {total}"
            );
        }
    }

    #[test]
    fn degenerate_split_fractions_error() {
        let data = hundred_rows();
        for fraction in [0.0, 1.0, 0.001] {
            let spec = SplitSpec {
                forget_fraction: fraction,
                seed: 1,
                stratified: false,
            };
            assert!(
                matches!(split_retain_forget(&data, &spec), Err(Error::Split(_))),
                "fraction {fraction} should fail"
            );
        }
    }

    #[test]
    fn poison_hits_exact_count_with_max_trigger() {
        let data = hundred_rows();
        let spec = PoisonSpec {
            poison_fraction: 0.05,
            trigger_feature: Some("f0".into()),
            target_label: 1,
        };
        let out = poison(&data, &spec, 5).unwrap();
        assert_eq!(out.poisoned_ids.len(), 5);
        let max = data.column_max(0).unwrap();
        assert_eq!(out.trigger.value, max);
        let ids: HashSet<u64> = out.poisoned_ids.iter().copied().collect();
        for p in 0..data.num_rows() {
            if ids.contains(&data.row_ids()[p]) {
                assert_eq!(out.data.row(p)[0], max);
                assert_eq!(out.data.label(p), 1);
            } else {
                // untouched rows are bit-identical
                assert_eq!(out.data.row(p), data.row(p));
                assert_eq!(out.data.label(p), data.label(p));
            }
        }
    }

    #[test]
    fn poison_rejects_degenerate_fractions() {
        let data = hundred_rows();
        for fraction in [0.0, 1.0, 0.001] {
            let spec = PoisonSpec {
                poison_fraction: fraction,
                trigger_feature: None,
                target_label: 1,
            };
            assert!(matches!(poison(&data, &spec, 1), Err(Error::Spec(_))));
        }
    }

    #[test]
    fn filtering_out_poisoned_ids_recovers_originals() {
        let data = hundred_rows();
        let spec = PoisonSpec {
            poison_fraction: 0.1,
            trigger_feature: None,
            target_label: 0,
        };
        let out = poison(&data, &spec, 9).unwrap();
        let (_, clean) = out.data.partition_by_ids(&out.poisoned_ids);
        let (_, original_clean) = data.partition_by_ids(&out.poisoned_ids);
        assert_eq!(clean, original_clean);
    }

    #[test]
    fn apply_trigger_sets_every_row_and_is_idempotent() {
        let data = synthetic_two_class::<f64>(10, 4);
        let trigger = ResolvedTrigger {
            feature_index: 0,
            feature_name: "f0".into(),
            value: 0.75,
        };
        let once = apply_trigger(&data, &trigger).unwrap();
        for p in 0..once.num_rows() {
            assert_eq!(once.row(p)[0], 0.75);
            assert_eq!(once.label(p), data.label(p));
        }
        let twice = apply_trigger(&once, &trigger).unwrap();
        assert_eq!(once, twice);

        let empty = data.subset(&[]);
        let stamped = apply_trigger(&empty, &trigger).unwrap();
        assert_eq!(stamped.num_rows(), 0);
    }

    #[test]
    fn scaler_maps_training_data_into_unit_interval() {
        let data = hundred_rows();
        let scaler = MinMaxScaler::fit(&data).unwrap();
        let scaled = scaler.transform(&data).unwrap();
        for p in 0..scaled.num_rows() {
            for &v in scaled.row(p) {
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn row_id_file_round_trip() {
        let f = tempfile::NamedTempFile::new().unwrap();
        write_row_ids(f.path(), &[3, 1, 4, 1, 5]).unwrap();
        assert_eq!(read_row_ids(f.path()).unwrap(), vec![3, 1, 4, 1, 5]);
    }

    // Full-scale ingest check; runs only when the Adult CSV is present.
    #[test]
    fn adult_dataset_when_available() {
        let path = Path::new("data/adult.csv");
        if !path.exists() {
            return;
        }
        let schema = FeatureSchema::parse(concat!(
            "label = income\n",
            "positive = >50K\n",
            "column.age = numeric\ncolumn.workclass = categorical\n",
            "column.fnlwgt = numeric\ncolumn.education = categorical\n",
            "column.education-num = numeric\ncolumn.marital-status = categorical\n",
            "column.occupation = categorical\ncolumn.relationship = categorical\n",
            "column.race = categorical\ncolumn.sex = categorical\n",
            "column.capital-gain = numeric\ncolumn.capital-loss = numeric\n",
            "column.hours-per-week = numeric\ncolumn.native-country = categorical\n",
        ))
        .unwrap();
        let (data, fitted) = load_csv::<f64>(path, &schema).unwrap();
        assert_eq!(data.num_rows(), 48_842);
        assert_eq!(
            fitted.classes.as_deref(),
            Some(&["<=50K".into(), ">50K".into()][..])
        );
    }
}
