//! Dense row-major `f64` arrays.
//!
//! Rank is unrestricted, but everything in this crate works with scalars
//! (rank 0), vectors (rank 1) and matrices (rank 2). Binary elementwise
//! operations broadcast with numpy-style rules: shapes are aligned on the
//! right and any dimension of size 1 stretches to match the other operand.

use serde::{Deserialize, Serialize};

use super::NumericsError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn numel_of(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Splits `shape` around `axis` into (outer, axis length, inner).
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let len = shape[axis];
    let inner = shape[axis + 1..].iter().product();
    (outer, len, inner)
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, NumericsError> {
        if numel_of(&shape) != data.len() {
            return Err(NumericsError::Invalid {
                op: "tensor",
                msg: format!("shape {:?} needs {} values, got {}", shape, numel_of(&shape), data.len()),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn scalar(value: f64) -> Self {
        Self { shape: vec![], data: vec![value] }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self { shape: vec![data.len()], data }
    }

    /// Builds a `rows × cols` matrix from row-major data.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericsError> {
        Self::new(vec![rows, cols], data)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NumericsError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(NumericsError::Invalid {
                    op: "from_rows",
                    msg: format!("row {} has {} entries, expected {}", i, r.len(), cols),
                });
            }
            data.extend_from_slice(r);
        }
        Self::matrix(rows.len(), cols, data)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self { shape: shape.to_vec(), data: vec![value; numel_of(shape)] }
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
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

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn is_scalar_like(&self) -> bool {
        self.data.len() == 1
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<f64, NumericsError> {
        if self.data.len() != 1 {
            return Err(NumericsError::Invalid {
                op: "item",
                msg: format!("tensor of shape {:?} is not a scalar", self.shape),
            });
        }
        Ok(self.data[0])
    }

    /// Matrix view dimensions: rank 0 is 1×1, rank 1 is 1×n.
    pub fn dims2(&self) -> (usize, usize) {
        match self.shape.len() {
            0 => (1, 1),
            1 => (1, self.shape[0]),
            2 => (self.shape[0], self.shape[1]),
            _ => {
                let cols = *self.shape.last().unwrap();
                (self.data.len() / cols.max(1), cols)
            }
        }
    }

    pub fn rows(&self) -> usize {
        self.dims2().0
    }

    pub fn cols(&self) -> usize {
        self.dims2().1
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let c = self.cols();
        self.data[i * c + j] = v;
    }

    /// Column `j` of the matrix view, copied.
    pub fn column(&self, j: usize) -> Vec<f64> {
        let (r, c) = self.dims2();
        (0..r).map(|i| self.data[i * c + j]).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self, NumericsError> {
        if numel_of(shape) != self.data.len() {
            return Err(NumericsError::ShapeMismatch {
                op: "reshape",
                lhs: self.shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        Ok(Self { shape: shape.to_vec(), data: self.data.clone() })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| v * c)
    }

    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor, NumericsError> {
        if self.rank() != 2 || rhs.rank() != 2 || self.shape[1] != rhs.shape[0] {
            return Err(NumericsError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape.clone(),
                rhs: rhs.shape.clone(),
            });
        }
        let (m, k) = (self.shape[0], self.shape[1]);
        let n = rhs.shape[1];
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let o_row = &mut out[i * n..(i + 1) * n];
            for (p, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &rhs.data[p * n..(p + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Tensor { shape: vec![m, n], data: out })
    }

    pub fn transpose(&self) -> Result<Tensor, NumericsError> {
        let (r, c) = match self.rank() {
            1 => (1, self.shape[0]),
            2 => (self.shape[0], self.shape[1]),
            _ => {
                return Err(NumericsError::Invalid {
                    op: "transpose",
                    msg: format!("needs rank 1 or 2, got shape {:?}", self.shape),
                })
            }
        };
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Tensor { shape: vec![c, r], data: out })
    }

    /// Result shape of broadcasting `a` against `b`, if compatible.
    pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
        let rank = a.len().max(b.len());
        let mut out = vec![0; rank];
        for i in 0..rank {
            let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
            let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
            out[i] = match (da, db) {
                (x, y) if x == y => x,
                (1, y) => y,
                (x, 1) => x,
                _ => return None,
            };
        }
        Some(out)
    }

    /// Stretches this tensor to `shape` following the broadcasting rules.
    pub fn broadcast_to(&self, shape: &[usize]) -> Result<Tensor, NumericsError> {
        if self.shape == shape {
            return Ok(self.clone());
        }
        let mismatch = || NumericsError::ShapeMismatch {
            op: "broadcast",
            lhs: self.shape.clone(),
            rhs: shape.to_vec(),
        };
        if Self::broadcast_shape(&self.shape, shape).as_deref() != Some(shape) {
            return Err(mismatch());
        }
        if self.data.len() == 1 {
            return Ok(Tensor::full(shape, self.data[0]));
        }
        let rank = shape.len();
        let src: Vec<usize> = (0..rank)
            .map(|i| if i + self.shape.len() >= rank { self.shape[i + self.shape.len() - rank] } else { 1 })
            .collect();
        // Source strides, zeroed along stretched dimensions.
        let mut strides = vec![0usize; rank];
        let mut acc = 1;
        for i in (0..rank).rev() {
            strides[i] = if src[i] == 1 { 0 } else { acc };
            acc *= src[i];
        }
        let total = numel_of(shape);
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; rank];
        for _ in 0..total {
            let off: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
            out.push(self.data[off]);
            for d in (0..rank).rev() {
                idx[d] += 1;
                if idx[d] < shape[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        Ok(Tensor { shape: shape.to_vec(), data: out })
    }

    /// Sums over broadcast dimensions so the result has `shape`; the adjoint
    /// of [`Tensor::broadcast_to`].
    pub fn sum_to(&self, shape: &[usize]) -> Result<Tensor, NumericsError> {
        if self.shape == shape {
            return Ok(self.clone());
        }
        if Self::broadcast_shape(shape, &self.shape).as_deref() != Some(&self.shape[..]) {
            return Err(NumericsError::ShapeMismatch {
                op: "sum_to",
                lhs: self.shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        let rank = self.shape.len();
        let lead = rank - shape.len();
        let mut cur = self.clone();
        for d in 0..rank {
            let target = if d < lead { 1 } else { shape[d - lead] };
            if target == 1 && cur.shape[d] != 1 {
                cur = cur.sum_axis(d)?;
            }
        }
        cur.reshape(shape)
    }

    fn zip_with(&self, rhs: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, NumericsError> {
        if self.shape == rhs.shape {
            let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect();
            return Ok(Tensor { shape: self.shape.clone(), data });
        }
        let shape = Self::broadcast_shape(&self.shape, &rhs.shape).ok_or_else(|| NumericsError::ShapeMismatch {
            op,
            lhs: self.shape.clone(),
            rhs: rhs.shape.clone(),
        })?;
        let a = self.broadcast_to(&shape)?;
        let b = rhs.broadcast_to(&shape)?;
        let data = a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect();
        Ok(Tensor { shape, data })
    }

    pub fn add(&self, rhs: &Tensor) -> Result<Tensor, NumericsError> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor, NumericsError> {
        self.zip_with(rhs, "sub", |a, b| a - b)
    }

    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor, NumericsError> {
        self.zip_with(rhs, "mul", |a, b| a * b)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    /// Euclidean (Frobenius) norm.
    pub fn norm2(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Sum along `axis`, keeping it as a dimension of size 1.
    pub fn sum_axis(&self, axis: usize) -> Result<Tensor, NumericsError> {
        self.check_axis("sum_axis", axis)?;
        let (outer, len, inner) = split_axis(&self.shape, axis);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let base = (o * len + l) * inner;
                let dst = &mut out[o * inner..(o + 1) * inner];
                for (d, &v) in dst.iter_mut().zip(&self.data[base..base + inner]) {
                    *d += v;
                }
            }
        }
        let mut shape = self.shape.clone();
        shape[axis] = 1;
        Ok(Tensor { shape, data: out })
    }

    fn check_axis(&self, op: &'static str, axis: usize) -> Result<(), NumericsError> {
        if axis >= self.shape.len() {
            return Err(NumericsError::Invalid {
                op,
                msg: format!("axis {} out of range for shape {:?}", axis, self.shape),
            });
        }
        Ok(())
    }

    /// Elements `start..end` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, end: usize) -> Result<Tensor, NumericsError> {
        self.check_axis("slice", axis)?;
        if start > end || end > self.shape[axis] {
            return Err(NumericsError::Invalid {
                op: "slice",
                msg: format!("range {}..{} out of bounds for axis {} of shape {:?}", start, end, axis, self.shape),
            });
        }
        let (outer, len, inner) = split_axis(&self.shape, axis);
        let width = end - start;
        let mut out = Vec::with_capacity(outer * width * inner);
        for o in 0..outer {
            let base = (o * len + start) * inner;
            out.extend_from_slice(&self.data[base..base + width * inner]);
        }
        let mut shape = self.shape.clone();
        shape[axis] = width;
        Ok(Tensor { shape, data: out })
    }

    /// Embeds this tensor at offset `start` of a zero tensor whose `axis`
    /// has length `total`; the adjoint of [`Tensor::slice`].
    pub fn pad(&self, axis: usize, start: usize, total: usize) -> Result<Tensor, NumericsError> {
        self.check_axis("pad", axis)?;
        let width = self.shape[axis];
        if start + width > total {
            return Err(NumericsError::Invalid {
                op: "pad",
                msg: format!("cannot place {} entries at {} within {}", width, start, total),
            });
        }
        let (outer, _, inner) = split_axis(&self.shape, axis);
        let mut shape = self.shape.clone();
        shape[axis] = total;
        let mut out = vec![0.0; numel_of(&shape)];
        for o in 0..outer {
            let src = &self.data[o * width * inner..(o + 1) * width * inner];
            let dst = (o * total + start) * inner;
            out[dst..dst + width * inner].copy_from_slice(src);
        }
        Ok(Tensor { shape, data: out })
    }

    pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor, NumericsError> {
        let first = parts.first().ok_or(NumericsError::Invalid { op: "concat", msg: "no operands".into() })?;
        first.check_axis("concat", axis)?;
        let mut shape = first.shape.clone();
        shape[axis] = 0;
        for p in parts {
            let compatible = p.shape.len() == first.shape.len()
                && p.shape.iter().zip(&first.shape).enumerate().all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(NumericsError::ShapeMismatch { op: "concat", lhs: first.shape.clone(), rhs: p.shape.clone() });
            }
            shape[axis] += p.shape[axis];
        }
        let (outer, _, inner) = split_axis(&first.shape, axis);
        let mut out = Vec::with_capacity(numel_of(&shape));
        for o in 0..outer {
            for p in parts {
                let w = p.shape[axis] * inner;
                out.extend_from_slice(&p.data[o * w..(o + 1) * w]);
            }
        }
        Ok(Tensor { shape, data: out })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        let a = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Tensor::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[2, 1]);
        assert_eq!(c.data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        let err = a.matmul(&b).unwrap_err().to_string();
        assert!(err.contains("matmul"), "{err}");
        assert!(err.contains("[2, 3]"), "{err}");
    }

    #[test]
    fn broadcast_bias_row() {
        let x = Tensor::zeros(&[3, 2]);
        let b = Tensor::vector(vec![1.0, 2.0]);
        let y = x.add(&b).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let back = y.sum_to(&[2]).unwrap();
        assert_eq!(back.data(), &[3.0, 6.0]);
        let col = Tensor::matrix(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(x.add(&col).unwrap().column(1), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn slice_pad_concat_adjoint() {
        let t = Tensor::matrix(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let s = t.slice(1, 1, 3).unwrap();
        assert_eq!(s.data(), &[2., 3., 5., 6.]);
        let p = s.pad(1, 1, 3).unwrap();
        assert_eq!(p.data(), &[0., 2., 3., 0., 5., 6.]);
        let left = t.slice(1, 0, 1).unwrap();
        let c = Tensor::concat(&[&left, &s], 1).unwrap();
        assert_eq!(c, t);
        let rows = Tensor::concat(&[&t.slice(0, 0, 1).unwrap(), &t.slice(0, 1, 2).unwrap()], 0).unwrap();
        assert_eq!(rows, t);
    }

    #[test]
    fn norm_and_transpose() {
        assert_eq!(Tensor::vector(vec![3.0, 4.0]).norm2(), 5.0);
        let t = Tensor::matrix(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let tt = t.transpose().unwrap();
        assert_eq!(tt.shape(), &[3, 2]);
        assert_eq!(tt.data(), &[1., 4., 2., 5., 3., 6.]);
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
