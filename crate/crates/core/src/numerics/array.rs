use crate::error::{FancError, Result};
use crate::numerics::Scalar;

/// Dense row-major array of rank 1 (vector) or rank 2 (matrix).
#[derive(Clone, Debug, PartialEq)]
pub struct RealArray<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> RealArray<T> {
    pub fn vector(data: Vec<T>) -> Self {
        RealArray {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(FancError::contract(
                "matrix",
                format!("{rows}x{cols} needs {} values, got {}", rows * cols, data.len()),
            ));
        }
        Ok(RealArray {
            shape: vec![rows, cols],
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        RealArray {
            shape: shape.to_vec(),
            data: vec![T::zero(); n],
        }
    }

    pub fn from_shape(shape: &[usize], data: Vec<T>) -> Result<Self> {
        match shape.len() {
            1 if shape[0] == data.len() => Ok(Self::vector(data)),
            2 => Self::matrix(shape[0], shape[1], data),
            _ => Err(FancError::contract(
                "from_shape",
                format!("shape {shape:?} does not hold {} values", data.len()),
            )),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut a = Self::zeros(&[n, n]);
        for i in 0..n {
            a.data[i * n + i] = T::one();
        }
        a
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_matrix(&self) -> bool {
        self.shape.len() == 2
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Column count; 1 for vectors.
    pub fn cols(&self) -> usize {
        if self.is_matrix() {
            self.shape[1]
        } else {
            1
        }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Row `i` of a matrix.
    pub fn row(&self, i: usize) -> &[T] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols() + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: T) {
        let cols = self.cols();
        self.data[r * cols + c] = value;
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        RealArray {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }
}

/// `W·x` for an `m×n` matrix and an `n`-vector. The model uses no bias terms.
pub fn affine<T: Scalar>(w: &RealArray<T>, x: &[T]) -> Result<Vec<T>> {
    if !w.is_matrix() || w.cols() != x.len() {
        return Err(FancError::contract(
            "affine",
            format!("matrix {:?} cannot multiply a vector of length {}", w.shape(), x.len()),
        ));
    }
    Ok((0..w.rows())
        .map(|r| {
            w.row(r)
                .iter()
                .zip(x)
                .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
        })
        .collect())
}

#[inline]
pub fn logistic_scalar<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Elementwise logistic sigmoid.
pub fn logistic<T: Scalar>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| logistic_scalar(v)).collect()
}

/// Elementwise `tanh`.
pub fn hyperbolic_tangent<T: Scalar>(x: &[T]) -> Vec<T> {
    x.iter().map(|v| v.tanh()).collect()
}

pub fn squared_norm<T: Scalar>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |acc, &v| acc + v * v)
}

pub fn squared_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| {
        let d = x - y;
        acc + d * d
    })
}
