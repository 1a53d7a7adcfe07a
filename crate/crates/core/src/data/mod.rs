//! Dataset ingestion and preprocessing.
//!
//! Preprocessed samples are dense rows: a continuous block scaled to
//! `[0, 1]` followed by one one-hot block per categorical feature.

mod idx;
mod schema;
mod split;
mod synthetic;
mod table;

pub use idx::{load_mnist_idx, read_idx_images, read_idx_labels, write_idx_images, write_idx_labels, MnistDigits};
pub use schema::{fit_schema, soften_categorical, ColumnKind, Feature, SchemaDecl, TabularSchema};
pub use split::{split, SplitSpec};
pub use synthetic::{synthetic_two_gaussians, SyntheticSpec};
pub use table::{RawTable, Value};

use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor, Var};

/// Shape of a preprocessed row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureLayout {
    pub continuous: usize,
    /// Width of each one-hot block, in order.
    pub categorical: Vec<usize>,
}

impl FeatureLayout {
    pub fn continuous_only(width: usize) -> Self {
        Self {
            continuous: width,
            categorical: Vec::new(),
        }
    }

    pub fn categorical_width(&self) -> usize {
        self.categorical.iter().sum()
    }

    pub fn width(&self) -> usize {
        self.continuous + self.categorical_width()
    }

    /// Column ranges of the one-hot blocks within a full row.
    pub fn blocks(&self) -> Vec<(usize, usize)> {
        let mut start = self.continuous;
        self.categorical
            .iter()
            .map(|w| {
                let r = (start, start + w);
                start += w;
                r
            })
            .collect()
    }

    /// Applies `softmax(· / temperature)` to every categorical block of `x`,
    /// whose columns start at `offset` (0 for a categorical-only matrix,
    /// `continuous` for a full row). The continuous block is passed through.
    pub fn softmax_blocks(&self, g: &mut Graph, x: Var, offset: usize, temperature: f64) -> Result<Var> {
        let width = g.value(x).cols();
        let base = if offset == 0 { 0 } else { self.continuous };
        if width != base + self.categorical_width() {
            return Err(Error::dim("softmax_blocks", format!("width {width} vs layout {self:?}")));
        }
        let mut out = (base > 0).then(|| g.slice(x, 0, base)).transpose()?;
        let mut start = base;
        for w in &self.categorical {
            let block = g.slice(x, start, start + w)?;
            let soft = g.softmax(block, temperature)?;
            out = Some(match out {
                Some(prev) => g.concat(prev, soft)?,
                None => soft,
            });
            start += w;
        }
        Ok(out.unwrap_or(x))
    }

    /// Maps decoder output onto the data domain: continuous values clipped
    /// to `[0, 1]` and every categorical block replaced by the one-hot of its
    /// argmax.
    pub fn project(&self, row: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = row.to_vec();
        for v in &mut out[..self.continuous] {
            *v = v.clamp(0.0, 1.0);
        }
        for (s, e) in self.blocks() {
            let best = argmax(&row[s..e]);
            for (k, v) in out[s..e].iter_mut().enumerate() {
                *v = if k == best { 1.0 } else { 0.0 };
            }
        }
        out
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// How raw inputs map onto preprocessed rows.
#[derive(Clone, Debug, PartialEq)]
pub enum Preprocessor {
    Tabular(TabularSchema),
    /// Pixel intensities already in `[0, 1]`.
    Image { pixels: usize },
}

impl Preprocessor {
    pub fn layout(&self) -> FeatureLayout {
        match self {
            Preprocessor::Tabular(s) => s.layout(),
            Preprocessor::Image { pixels } => FeatureLayout::continuous_only(*pixels),
        }
    }

    pub fn column_names(&self) -> Vec<String> {
        match self {
            Preprocessor::Tabular(s) => s.column_names(),
            Preprocessor::Image { pixels } => (0..*pixels).map(|i| format!("p{i}")).collect(),
        }
    }

    pub fn schema(&self) -> Option<&TabularSchema> {
        match self {
            Preprocessor::Tabular(s) => Some(s),
            Preprocessor::Image { .. } => None,
        }
    }
}

/// Preprocessed samples with binary labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Tensor,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn new(x: Tensor, labels: Vec<u8>) -> Result<Self> {
        if x.rows() != labels.len() {
            return Err(Error::dim(
                "dataset",
                format!("{} rows but {} labels", x.rows(), labels.len()),
            ));
        }
        if let Some(bad) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::Contract(format!("label {bad} is not binary")));
        }
        Ok(Self { x, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn width(&self) -> usize {
        self.x.cols()
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let ones = self.labels.iter().filter(|&&y| y == 1).count();
        [self.labels.len() - ones, ones]
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn require_both_classes(&self) -> Result<()> {
        let [n0, n1] = self.class_counts();
        if n0 == 0 || n1 == 0 {
            return Err(Error::DegenerateData(format!(
                "need both classes, got {n0} of class 0 and {n1} of class 1"
            )));
        }
        Ok(())
    }
}

/// Inverse-frequency weights `w_c = N / (2 N_c)`.
pub fn class_weights(labels: &[u8]) -> Result<(f64, f64)> {
    let n = labels.len();
    let n1 = labels.iter().filter(|&&y| y == 1).count();
    let n0 = n - n1;
    if n0 == 0 || n1 == 0 {
        return Err(Error::DegenerateData(format!(
            "class weights need both classes ({n0} / {n1})"
        )));
    }
    Ok((n as f64 / (2.0 * n0 as f64), n as f64 / (2.0 * n1 as f64)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_for_quarter_split() {
        let labels: Vec<u8> = (0..100).map(|i| u8::from(i >= 25)).collect();
        let (w0, w1) = class_weights(&labels).unwrap();
        assert_eq!(w0, 2.0);
        assert!((w1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((w0 * 25.0 + w1 * 75.0 - 100.0).abs() < 1e-9);
    }

    #[test]
    fn weights_balanced_and_degenerate() {
        assert_eq!(class_weights(&[0, 1, 0, 1]).unwrap(), (1.0, 1.0));
        assert!(matches!(class_weights(&[1, 1, 1]), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn project_snaps_blocks_and_clips() {
        let layout = FeatureLayout {
            continuous: 2,
            categorical: vec![3, 2],
        };
        let p = layout.project(&[-0.2, 1.4, 0.1, 0.7, 0.2, 0.6, 0.4]);
        assert_eq!(p, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn softmax_blocks_sum_to_one_per_block() {
        let layout = FeatureLayout {
            continuous: 1,
            categorical: vec![2, 3],
        };
        let mut g = Graph::new();
        let x = g.constant(Tensor::row(&[0.3, 0.1, 0.9, 1.0, 2.0, 3.0]));
        let y = layout.softmax_blocks(&mut g, x, 1, 0.5).unwrap();
        let v = g.value(y).data().to_vec();
        assert_eq!(v[0], 0.3);
        assert!((v[1] + v[2] - 1.0).abs() < 1e-12);
        assert!((v[3] + v[4] + v[5] - 1.0).abs() < 1e-12);
    }
}
