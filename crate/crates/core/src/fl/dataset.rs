use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::rng::stream;

/// Row-major features with integer class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
    classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, dim: usize, classes: usize) -> Result<Self> {
        if labels.is_empty() || dim == 0 {
            return Err(invalid("dataset must have at least one sample and one feature"));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * dim,
                found: features.len(),
            });
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= classes) {
            return Err(invalid(format!("label {y} outside 0..{classes}")));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        Ok(Self {
            features,
            labels,
            dim,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Same features with relabeled targets.
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Self> {
        Self::new(self.features.clone(), labels, self.dim, self.classes)
    }
}

fn class_centers(rng: &mut impl Rng, dim: usize, classes: usize, separation: f64) -> Vec<Vec<f64>> {
    // Orthonormal directions when they fit (Gram-Schmidt on Gaussian draws),
    // scaled so every pair of centers is exactly `separation` apart. With more
    // classes than dimensions, centers are pushed apart along a random line.
    let radius = separation / 2f64.sqrt();
    if classes <= dim {
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(classes);
        while basis.len() < classes {
            let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            for b in &basis {
                let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-8 {
                basis.push(v.into_iter().map(|x| x / n).collect());
            }
        }
        basis
            .into_iter()
            .map(|b| b.into_iter().map(|x| x * radius).collect())
            .collect()
    } else {
        let mut dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        dir.iter_mut().for_each(|x| *x /= n);
        (0..classes)
            .map(|c| dir.iter().map(|x| x * separation * c as f64).collect())
            .collect()
    }
}

fn sample_from(rng: &mut impl Rng, centers: &[Vec<f64>], n: usize, balanced: bool) -> (Vec<f64>, Vec<usize>) {
    let classes = centers.len();
    let dim = centers[0].len();
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = if balanced { i % classes } else { rng.random_range(0..classes) };
        labels.push(y);
        for c in &centers[y] {
            let e: f64 = StandardNormal.sample(rng);
            features.push(c + e);
        }
    }
    (features, labels)
}

/// `C` unit-variance Gaussian clusters whose centers are pairwise `separation` apart.
///
/// Samples cycle through the classes, so class counts differ by at most one.
pub fn synth_dataset(seed: u64, n: usize, dim: usize, classes: usize, separation: f64) -> Result<Dataset> {
    let (train, _) = synth_split(seed, n, 0, dim, classes, separation)?;
    Ok(train)
}

/// Train and test sets drawn around the same class centers.
pub fn synth_split(
    seed: u64,
    n_train: usize,
    n_test: usize,
    dim: usize,
    classes: usize,
    separation: f64,
) -> Result<(Dataset, Dataset)> {
    if classes < 2 || dim == 0 || n_train < classes || !(separation >= 0.0) {
        return Err(invalid("synthetic data needs C >= 2, d >= 1, n >= C and separation >= 0"));
    }
    let mut rng = stream(seed, &[0]);
    let centers = class_centers(&mut rng, dim, classes, separation);
    let mut train_rng = stream(seed, &[1]);
    let (f, l) = sample_from(&mut train_rng, &centers, n_train, true);
    let train = Dataset::new(f, l, dim, classes)?;
    let mut test_rng = stream(seed, &[2]);
    let (f, l) = sample_from(&mut test_rng, &centers, n_test.max(1), true);
    let test = Dataset::new(f, l, dim, classes)?;
    Ok((train, test))
}
