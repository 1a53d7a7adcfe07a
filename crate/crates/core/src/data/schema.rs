use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::data::table::{RawTable, Value};
use crate::data::{argmax, Dataset, FeatureLayout};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Categorical,
    /// Present in the file but not used as a feature.
    Ignore,
}

/// Column declarations, usually read from a TOML file:
///
/// ```toml
/// label = "income"
/// positive = ">50K"
///
/// [columns]
/// age = "continuous"
/// education = "categorical"
/// ```
///
/// Without `positive` the label column must hold `0` or `1`.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaDecl {
    pub label: String,
    #[serde(default)]
    pub positive: Option<String>,
    pub columns: BTreeMap<String, ColumnKind>,
}

impl SchemaDecl {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            what: "schema".into(),
            detail: e.to_string(),
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Parse { detail, .. } => Error::Parse {
                what: format!("schema {}", path.display()),
                detail,
            },
            other => other,
        })
    }

    /// Every column declared continuous, in the given order.
    pub fn all_continuous(columns: &[String], label: &str) -> Self {
        Self {
            label: label.to_string(),
            positive: None,
            columns: columns
                .iter()
                .filter(|c| *c != label)
                .map(|c| (c.clone(), ColumnKind::Continuous))
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Feature {
    Continuous { name: String, min: f64, max: f64 },
    Categorical { name: String, vocabulary: Vec<String> },
}

impl Feature {
    pub fn name(&self) -> &str {
        match self {
            Feature::Continuous { name, .. } | Feature::Categorical { name, .. } => name,
        }
    }
}

/// Fitted preprocessing statistics. Continuous features come first, in
/// header order, followed by the categorical ones.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularSchema {
    features: Vec<Feature>,
    label: String,
    positive: Option<String>,
}

/// Fits min/max and vocabularies on the rows listed in `train_rows`.
pub fn fit_schema(table: &RawTable, decl: &SchemaDecl, train_rows: &[usize]) -> Result<TabularSchema> {
    if train_rows.is_empty() {
        return Err(Error::DegenerateData("cannot fit a schema on zero rows".into()));
    }
    table.column_index(&decl.label)?;
    for declared in decl.columns.keys() {
        table.column_index(declared)?;
    }
    let mut continuous = Vec::new();
    let mut categorical = Vec::new();
    for (ci, name) in table.columns.iter().enumerate() {
        if *name == decl.label {
            continue;
        }
        let kind = decl.columns.get(name).ok_or_else(|| Error::Schema {
            column: name.clone(),
            detail: "no kind declared".into(),
        })?;
        match kind {
            ColumnKind::Ignore => {}
            ColumnKind::Continuous => {
                let mut min = f64::INFINITY;
                let mut max = f64::NEG_INFINITY;
                for &r in train_rows {
                    let v = table.rows[r][ci].as_number(name)?;
                    if !v.is_finite() {
                        return Err(Error::Schema {
                            column: name.clone(),
                            detail: format!("non-finite value in row {r}"),
                        });
                    }
                    min = min.min(v);
                    max = max.max(v);
                }
                if min >= max {
                    return Err(Error::Schema {
                        column: name.clone(),
                        detail: format!("constant column (value {min})"),
                    });
                }
                continuous.push(Feature::Continuous {
                    name: name.clone(),
                    min,
                    max,
                });
            }
            ColumnKind::Categorical => {
                let mut vocabulary: Vec<String> = Vec::new();
                for &r in train_rows {
                    let v = table.rows[r][ci].as_category();
                    if !vocabulary.contains(&v) {
                        vocabulary.push(v);
                    }
                }
                categorical.push(Feature::Categorical {
                    name: name.clone(),
                    vocabulary,
                });
            }
        }
    }
    continuous.extend(categorical);
    TabularSchema::new(continuous, decl.label.clone(), decl.positive.clone())
}

impl TabularSchema {
    pub fn new(features: Vec<Feature>, label: String, positive: Option<String>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Config("schema declares no features".into()));
        }
        let mut seen_categorical = false;
        for f in &features {
            match f {
                Feature::Continuous { name, min, max } => {
                    if seen_categorical {
                        return Err(Error::Schema {
                            column: name.clone(),
                            detail: "continuous features must precede categorical ones".into(),
                        });
                    }
                    if !(min < max) {
                        return Err(Error::Schema {
                            column: name.clone(),
                            detail: format!("min {min} must be below max {max}"),
                        });
                    }
                }
                Feature::Categorical { name, vocabulary } => {
                    seen_categorical = true;
                    let dup = vocabulary.iter().enumerate().any(|(i, v)| vocabulary[..i].contains(v));
                    if vocabulary.is_empty() || dup {
                        return Err(Error::Schema {
                            column: name.clone(),
                            detail: "vocabulary must be nonempty and duplicate-free".into(),
                        });
                    }
                }
            }
        }
        Ok(Self {
            features,
            label,
            positive,
        })
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn positive(&self) -> Option<&str> {
        self.positive.as_deref()
    }

    pub fn layout(&self) -> FeatureLayout {
        let mut layout = FeatureLayout::continuous_only(0);
        for f in &self.features {
            match f {
                Feature::Continuous { .. } => layout.continuous += 1,
                Feature::Categorical { vocabulary, .. } => layout.categorical.push(vocabulary.len()),
            }
        }
        layout
    }

    /// Names of the preprocessed columns, e.g. `age`, `edu=HS`.
    pub fn column_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for f in &self.features {
            match f {
                Feature::Continuous { name, .. } => out.push(name.clone()),
                Feature::Categorical { name, vocabulary } => {
                    out.extend(vocabulary.iter().map(|v| format!("{name}={v}")))
                }
            }
        }
        out
    }

    pub fn parse_label(&self, cell: &Value) -> Result<u8> {
        match &self.positive {
            Some(p) => Ok(u8::from(cell.as_category() == *p)),
            None => {
                let v = cell.as_number(&self.label)?;
                if v == 0.0 || v == 1.0 {
                    Ok(v as u8)
                } else {
                    Err(Error::Schema {
                        column: self.label.clone(),
                        detail: format!("label {v} is not 0 or 1"),
                    })
                }
            }
        }
    }

    /// Encodes one row given the table header. Returns the vector and the
    /// number of continuous values that fell outside the fitted range.
    pub fn preprocess_row(&self, columns: &[String], row: &[Value]) -> Result<(Vec<f64>, usize)> {
        let mut out = Vec::with_capacity(self.layout().width());
        let mut clipped = 0;
        for f in &self.features {
            let ci = columns.iter().position(|c| c == f.name()).ok_or_else(|| Error::Schema {
                column: f.name().to_string(),
                detail: "column missing from input".into(),
            })?;
            match f {
                Feature::Continuous { name, min, max } => {
                    let v = (row[ci].as_number(name)? - min) / (max - min);
                    if !(0.0..=1.0).contains(&v) {
                        clipped += 1;
                    }
                    out.push(v.clamp(0.0, 1.0));
                }
                Feature::Categorical { name, vocabulary } => {
                    let v = row[ci].as_category();
                    let k = vocabulary.iter().position(|c| *c == v).ok_or_else(|| Error::UnseenCategory {
                        column: name.clone(),
                        value: v.clone(),
                    })?;
                    out.extend((0..vocabulary.len()).map(|i| if i == k { 1.0 } else { 0.0 }));
                }
            }
        }
        Ok((out, clipped))
    }

    /// Encodes the listed rows of `table` (all rows when `rows` is `None`).
    /// Returns the dataset and the total clip count.
    pub fn preprocess_table(&self, table: &RawTable, rows: Option<&[usize]>) -> Result<(Dataset, usize)> {
        let all: Vec<usize>;
        let rows = match rows {
            Some(r) => r,
            None => {
                all = (0..table.len()).collect();
                &all
            }
        };
        let li = table.column_index(&self.label)?;
        let width = self.layout().width();
        let mut data = Vec::with_capacity(rows.len() * width);
        let mut labels = Vec::with_capacity(rows.len());
        let mut clipped = 0;
        for &r in rows {
            let (v, c) = self.preprocess_row(&table.columns, &table.rows[r])?;
            data.extend(v);
            clipped += c;
            labels.push(self.parse_label(&table.rows[r][li])?);
        }
        if rows.is_empty() {
            return Err(Error::DegenerateData("no rows to preprocess".into()));
        }
        let x = Tensor::matrix(rows.len(), width, data)?;
        Ok((Dataset::new(x, labels)?, clipped))
    }

    /// Maps a preprocessed vector back to raw feature values: continuous
    /// values are clipped to `[0, 1]` and de-normalized, categorical blocks
    /// decoded by argmax.
    pub fn depreprocess(&self, v: &[f64]) -> Result<Vec<Value>> {
        if v.len() != self.layout().width() {
            return Err(Error::dim(
                "depreprocess",
                format!("expected width {}, got {}", self.layout().width(), v.len()),
            ));
        }
        let mut pos = 0;
        let mut out = Vec::with_capacity(self.features.len());
        for f in &self.features {
            match f {
                Feature::Continuous { min, max, .. } => {
                    out.push(Value::Number(min + v[pos].clamp(0.0, 1.0) * (max - min)));
                    pos += 1;
                }
                Feature::Categorical { vocabulary, .. } => {
                    let k = argmax(&v[pos..pos + vocabulary.len()]);
                    out.push(Value::Text(vocabulary[k].clone()));
                    pos += vocabulary.len();
                }
            }
        }
        Ok(out)
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name().to_string()).collect()
    }
}

/// Differentiable-mode decoding of the categorical blocks of a full row:
/// each block becomes `softmax(scores / t)`; continuous values are left
/// untouched.
pub fn soften_categorical(layout: &FeatureLayout, row: &[f64], temperature: f64) -> Vec<f64> {
    let mut out = row.to_vec();
    for (s, e) in layout.blocks() {
        let max = row[s..e].iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        let exps: Vec<f64> = row[s..e].iter().map(|v| ((v - max) / temperature).exp()).collect();
        let total: f64 = exps.iter().sum();
        for (o, x) in out[s..e].iter_mut().zip(exps) {
            *o = x / total;
        }
    }
    out
}
