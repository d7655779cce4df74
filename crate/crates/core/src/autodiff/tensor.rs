use std::fmt;

use serde::{Deserialize, Serialize};

/// Dimensions of a tensor. Rank 0 is a scalar, rank 1 a vector, rank 2 a
/// row-major matrix.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape(pub Vec<usize>);

impl Shape {
    pub fn scalar() -> Self {
        Shape(Vec::new())
    }

    pub fn vector(n: usize) -> Self {
        Shape(vec![n])
    }

    pub fn matrix(rows: usize, cols: usize) -> Self {
        Shape(vec![rows, cols])
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.0.is_empty()
    }

    /// Vector length, treating a scalar as a length-1 vector.
    pub fn as_vector(&self) -> Option<usize> {
        match self.0.as_slice() {
            [] => Some(1),
            [n] => Some(*n),
            _ => None,
        }
    }

    pub fn as_matrix(&self) -> Option<(usize, usize)> {
        match self.0.as_slice() {
            [r, c] => Some((*r, *c)),
            _ => None,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, "x")?;
            }
            write!(f, "{d}")?;
        }
        write!(f, "]")
    }
}

/// A value buffer with a gradient buffer of the same length.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Shape,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Tensor {
    /// Panics if `value.len()` does not match the shape.
    pub fn new(shape: Shape, value: Vec<f64>) -> Self {
        assert_eq!(
            shape.numel(),
            value.len(),
            "tensor value length does not match shape {shape}"
        );
        let grad = vec![0.0; value.len()];
        Tensor { shape, value, grad }
    }

    pub fn zeros(shape: Shape) -> Self {
        let n = shape.numel();
        Tensor::new(shape, vec![0.0; n])
    }

    pub fn scalar(x: f64) -> Self {
        Tensor::new(Shape::scalar(), vec![x])
    }

    pub fn vector(values: Vec<f64>) -> Self {
        Tensor::new(Shape::vector(values.len()), values)
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
