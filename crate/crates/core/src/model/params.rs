use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::Scalar;

/// Dense 1D or 2D tensor, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 2 || shape.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "tensor shape must be 1D or 2D with positive dims, got {shape:?}"
            )));
        }
        let n: usize = shape.iter().product();
        if data.len() != n {
            return Err(Error::ShapeMismatch {
                name: "tensor data".into(),
                expected: shape,
                actual: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); n],
        }
    }

    pub fn vector(data: Vec<T>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn is_matrix(&self) -> bool {
        self.shape.len() == 2
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|x| *x = T::zero());
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Copy as a [`Matrix`]; `None` for 1D tensors.
    pub fn to_matrix(&self) -> Option<Matrix<T>> {
        match self.shape[..] {
            [r, c] => Some(Matrix::from_raw(r, c, self.data.clone())),
            _ => None,
        }
    }
}

impl<T: Scalar> From<Matrix<T>> for Tensor<T> {
    fn from(m: Matrix<T>) -> Self {
        let (r, c) = m.shape();
        Self {
            shape: vec![r, c],
            data: m.into_vec(),
        }
    }
}

/// What a parameter does inside a model; decides its optimizer group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    HiddenMatrix,
    Bias,
    LayerNormGain,
    LayerNormBias,
    Embedding,
    PositionalEmbedding,
    OutputHead,
}

impl Role {
    pub const ALL: [Role; 7] = [
        Role::HiddenMatrix,
        Role::Bias,
        Role::LayerNormGain,
        Role::LayerNormBias,
        Role::Embedding,
        Role::PositionalEmbedding,
        Role::OutputHead,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::HiddenMatrix => "HiddenMatrix",
            Role::Bias => "Bias",
            Role::LayerNormGain => "LayerNormGain",
            Role::LayerNormBias => "LayerNormBias",
            Role::Embedding => "Embedding",
            Role::PositionalEmbedding => "PositionalEmbedding",
            Role::OutputHead => "OutputHead",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Role::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::UnknownRole(s.to_string()))
    }
}

/// A named model parameter with its gradient buffer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamTensor<T> {
    pub name: String,
    pub role: Role,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Scalar> ParamTensor<T> {
    pub fn new(name: impl Into<String>, role: Role, value: Tensor<T>) -> Result<Self> {
        let name = name.into();
        if role == Role::HiddenMatrix && !value.is_matrix() {
            return Err(Error::NotMatrix {
                name,
                shape: value.shape().to_vec(),
            });
        }
        let grad = Tensor::zeros(value.shape());
        Ok(Self {
            name,
            role,
            value,
            grad,
        })
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill_zero();
    }
}
