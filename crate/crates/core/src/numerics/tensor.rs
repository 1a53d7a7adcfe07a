use std::hash::{DefaultHasher, Hasher};

use crate::error::{Error, Result};

/// Dense row-major `f64` array with an optional gradient buffer.
///
/// Graph operations treat every tensor as a matrix: rank-1 shapes `[d]` are
/// viewed as a single row `(1, d)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::dim("tensor", format!("invalid shape {shape:?}")));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::dim(
                "tensor",
                format!("shape {shape:?} needs {numel} values, got {}", data.len()),
            ));
        }
        Ok(Self {
            shape,
            data,
            grad: None,
        })
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            shape: vec![rows, cols],
            data: vec![0.0; rows * cols],
            grad: None,
        }
    }

    pub fn full(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            shape: vec![rows, cols],
            data: vec![value; rows * cols],
            grad: None,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::full(1, 1, value)
    }

    /// A `(1, d)` row.
    pub fn row(values: &[f64]) -> Self {
        Self {
            shape: vec![1, values.len().max(1)],
            data: if values.is_empty() {
                vec![0.0]
            } else {
                values.to_vec()
            },
            grad: None,
        }
    }

    /// A `(n, 1)` column.
    pub fn column(values: &[f64]) -> Self {
        Self {
            shape: vec![values.len(), 1],
            data: values.to_vec(),
            grad: None,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::dim("from_rows", "ragged rows"));
        }
        Self::matrix(rows.len(), cols, rows.concat())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        if self.shape.len() == 1 {
            1
        } else {
            self.shape[..self.shape.len() - 1].iter().product()
        }
    }

    pub fn cols(&self) -> usize {
        *self.shape.last().expect("shape is never empty")
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn item(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return Err(Error::Contract(format!(
                "item() on tensor of shape {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    pub fn select_rows(&self, idx: &[usize]) -> Tensor {
        let c = self.cols();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(self.row_slice(i));
        }
        Tensor {
            shape: vec![idx.len(), c],
            data,
            grad: None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    /// Adds `g` into the gradient buffer, creating it if absent.
    pub fn accumulate_grad(&mut self, g: &[f64]) -> Result<()> {
        if g.len() != self.data.len() {
            return Err(Error::dim(
                "accumulate_grad",
                format!("grad has {} values for shape {:?}", g.len(), self.shape),
            ));
        }
        match &mut self.grad {
            Some(buf) => buf.iter_mut().zip(g).for_each(|(b, v)| *b += v),
            None => self.grad = Some(g.to_vec()),
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        if let Some(buf) = &mut self.grad {
            buf.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    pub(crate) fn grad_and_data_mut(&mut self) -> (Option<&[f64]>, &mut [f64]) {
        (self.grad.as_deref(), &mut self.data)
    }

    /// Hash of the shape and the exact bit patterns of the values.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for &d in &self.shape {
            h.write_usize(d);
        }
        for v in &self.data {
            h.write_u64(v.to_bits());
        }
        h.finish()
    }
}

/// Combined fingerprint of a parameter list.
pub fn fingerprint_all<'a>(tensors: impl IntoIterator<Item = &'a Tensor>) -> u64 {
    let mut h = DefaultHasher::new();
    for t in tensors {
        h.write_u64(t.fingerprint());
    }
    h.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_data() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![0, 3], vec![]).is_err());
    }

    #[test]
    fn rank_one_is_a_row() {
        let t = Tensor::new(vec![4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((t.rows(), t.cols()), (1, 4));
    }

    #[test]
    fn grad_accumulates() {
        let mut t = Tensor::row(&[1.0, 2.0]);
        t.accumulate_grad(&[1.0, 1.0]).unwrap();
        t.accumulate_grad(&[0.5, 2.0]).unwrap();
        assert_eq!(t.grad().unwrap(), &[1.5, 3.0]);
        assert!(t.accumulate_grad(&[1.0]).is_err());
        t.zero_grad();
        assert_eq!(t.grad().unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn fingerprint_sees_bits() {
        let a = Tensor::row(&[0.0, 1.0]);
        let b = Tensor::row(&[-0.0, 1.0]);
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
    }
}
