use rand::seq::index::sample;
use rand::Rng;

use super::Dataset;
use crate::error::{invalid, Error, Result};
use crate::UpdateVector;

/// Multinomial logistic regression; a constant-1 feature is appended to every
/// input so the last weight row is the bias.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    /// `(dim + 1) x classes`, row-major.
    weights: Vec<f64>,
    dim: usize,
    classes: usize,
}

impl ModelState {
    pub fn zeros(dim: usize, classes: usize) -> Self {
        Self {
            weights: vec![0.0; (dim + 1) * classes],
            dim,
            classes,
        }
    }

    pub fn from_weights(weights: Vec<f64>, dim: usize, classes: usize) -> Result<Self> {
        if weights.len() != (dim + 1) * classes {
            return Err(Error::DimensionMismatch {
                expected: (dim + 1) * classes,
                found: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("weights"));
        }
        Ok(Self {
            weights,
            dim,
            classes,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn num_params(&self) -> usize {
        self.weights.len()
    }

    fn check(&self, data: &Dataset) -> Result<()> {
        if data.dim() != self.dim || data.classes() != self.classes {
            return Err(invalid(format!(
                "model is {}x{}, data is {}x{}",
                self.dim,
                self.classes,
                data.dim(),
                data.classes()
            )));
        }
        Ok(())
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let c = self.classes;
        let mut z = self.weights[self.dim * c..].to_vec();
        for (f, &xf) in x.iter().enumerate() {
            if xf != 0.0 {
                let row = &self.weights[f * c..(f + 1) * c];
                z.iter_mut().zip(row).for_each(|(zk, w)| *zk += xf * w);
            }
        }
        z
    }

    fn softmax(z: &mut [f64]) {
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        z.iter_mut().for_each(|v| {
            *v = (*v - m).exp();
            s += *v;
        });
        z.iter_mut().for_each(|v| *v /= s);
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let z = self.logits(x);
        (0..z.len()).fold(0, |b, k| if z[k] > z[b] { k } else { b })
    }

    /// Mean cross-entropy over the given rows (all rows when `rows` is `None`).
    pub fn loss(&self, data: &Dataset, rows: Option<&[usize]>) -> Result<f64> {
        self.check(data)?;
        let all: Vec<usize>;
        let rows = match rows {
            Some(r) => r,
            None => {
                all = (0..data.len()).collect();
                &all
            }
        };
        if rows.is_empty() {
            return Err(invalid("loss over no rows"));
        }
        let total: f64 = rows
            .iter()
            .map(|&i| {
                let z = self.logits(data.row(i));
                let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                lse - z[data.label(i)]
            })
            .sum();
        Ok(total / rows.len() as f64)
    }

    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        self.check(data)?;
        let hits = (0..data.len())
            .filter(|&i| self.predict(data.row(i)) == data.label(i))
            .count();
        Ok(hits as f64 / data.len() as f64)
    }

    /// Gradient of the mean cross-entropy over `rows`, flattened like the weights.
    pub fn gradient(&self, data: &Dataset, rows: &[usize]) -> Result<Vec<f64>> {
        self.check(data)?;
        if rows.is_empty() {
            return Err(invalid("gradient over an empty batch"));
        }
        let c = self.classes;
        let mut g = vec![0.0; self.weights.len()];
        for &i in rows {
            let x = data.row(i);
            let mut p = self.logits(x);
            Self::softmax(&mut p);
            p[data.label(i)] -= 1.0;
            for (f, &xf) in x.iter().enumerate() {
                if xf != 0.0 {
                    g[f * c..(f + 1) * c]
                        .iter_mut()
                        .zip(&p)
                        .for_each(|(gk, pk)| *gk += xf * pk);
                }
            }
            g[self.dim * c..].iter_mut().zip(&p).for_each(|(gk, pk)| *gk += pk);
        }
        let inv = 1.0 / rows.len() as f64;
        g.iter_mut().for_each(|v| *v *= inv);
        Ok(g)
    }

    /// `w <- w - lr * step`.
    pub fn descend(&mut self, step: &[f64], lr: f64) -> Result<()> {
        if step.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                found: step.len(),
            });
        }
        self.weights.iter_mut().zip(step).for_each(|(w, s)| *w -= lr * s);
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("weights after update"));
        }
        Ok(())
    }
}

/// One local step: the mini-batch gradient at the current weights.
///
/// The batch is `batch_size` rows of `shard` drawn without replacement, or
/// the whole shard when it is smaller.
pub fn local_update(
    model: &ModelState,
    data: &Dataset,
    shard: &[usize],
    batch_size: usize,
    rng: &mut impl Rng,
) -> Result<UpdateVector> {
    if shard.is_empty() {
        return Err(invalid("local update on an empty shard"));
    }
    if batch_size == 0 {
        return Err(invalid("batch size must be positive"));
    }
    let g = if batch_size >= shard.len() {
        model.gradient(data, shard)?
    } else {
        let rows: Vec<usize> = sample(rng, shard.len(), batch_size)
            .into_iter()
            .map(|k| shard[k])
            .collect();
        model.gradient(data, &rows)?
    };
    Ok(UpdateVector::new(g))
}
