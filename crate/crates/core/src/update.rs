use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A flattened client model update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UpdateVector(Vec<f64>);

impl UpdateVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &UpdateVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn sq_dist(&self, other: &UpdateVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

impl From<Vec<f64>> for UpdateVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl Deref for UpdateVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Checks that `updates` is non-empty, equal-dimension and finite; returns the dimension.
pub(crate) fn check_cohort(updates: &[UpdateVector]) -> Result<usize> {
    let first = updates
        .first()
        .ok_or_else(|| crate::error::invalid("empty update set"))?;
    let dim = first.dim();
    for u in updates {
        if u.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: u.dim(),
            });
        }
        if u.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("update vector"));
        }
    }
    Ok(dim)
}

/// Unweighted coordinate-wise mean of a non-empty cohort.
pub(crate) fn mean_of<'a, I>(updates: I, dim: usize) -> UpdateVector
where
    I: IntoIterator<Item = &'a UpdateVector>,
{
    let mut acc = vec![0.0; dim];
    let mut n = 0usize;
    for u in updates {
        for (a, x) in acc.iter_mut().zip(u.iter()) {
            *a += x;
        }
        n += 1;
    }
    if n > 0 {
        let inv = 1.0 / n as f64;
        acc.iter_mut().for_each(|a| *a *= inv);
    }
    UpdateVector(acc)
}
