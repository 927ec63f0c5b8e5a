use super::error::{NnError, Result};

pub const MAX_RANK: usize = 5;

/// Dense row-major array of `f64` with rank 1 to 5.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > MAX_RANK {
        return Err(NnError::InvalidShape {
            shape: shape.to_vec(),
            reason: format!("rank must be 1..={MAX_RANK}"),
        });
    }
    if shape.iter().any(|&d| d == 0) {
        return Err(NnError::InvalidShape {
            shape: shape.to_vec(),
            reason: "dimension sizes must be positive".into(),
        });
    }
    Ok(shape.iter().product())
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len = check_shape(&shape)?;
        if data.len() != len {
            return Err(NnError::InvalidShape {
                shape,
                reason: format!("data length {} does not match element count {len}", data.len()),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let len = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        })
    }

    pub fn filled(shape: &[usize], value: f64) -> Result<Self> {
        let mut t = Self::zeros(shape)?;
        t.data.fill(value);
        Ok(t)
    }

    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Row-major flat index of a full multi-index.
    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &d)| acc * d + i)
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    /// Stacks equally shaped tensors along a new leading batch axis.
    pub fn stack(items: &[&Tensor]) -> Result<Self> {
        let first = items.first().ok_or(NnError::EmptyDataset)?;
        let mut shape = Vec::with_capacity(first.rank() + 1);
        shape.push(items.len());
        shape.extend_from_slice(&first.shape);
        let mut data = Vec::with_capacity(first.len() * items.len());
        for (i, t) in items.iter().enumerate() {
            if t.shape != first.shape {
                return Err(NnError::ShapeMismatch {
                    op: "stack",
                    axis: format!("item {i}"),
                    expected: first.len(),
                    found: t.len(),
                });
            }
            data.extend_from_slice(&t.data);
        }
        Self::new(shape, data)
    }

    /// Splits the leading axis into individual tensors.
    pub fn unstack(&self) -> Result<Vec<Tensor>> {
        if self.rank() < 2 {
            return Err(NnError::RankMismatch {
                op: "unstack",
                expected: ">= 2".into(),
                found: self.rank(),
            });
        }
        let inner = self.shape[1..].to_vec();
        let stride: usize = inner.iter().product();
        self.data
            .chunks(stride)
            .map(|c| Tensor::new(inner.clone(), c.to_vec()))
            .collect()
    }
}
