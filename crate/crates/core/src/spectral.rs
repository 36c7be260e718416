//! Gaussian-kernel similarity graphs over client updates and their spectra.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::numerics::{sym_eigenvalues, SymMatrix};
use crate::update::check_cohort;
use crate::UpdateVector;

/// Off-diagonal similarities within this distance of 1 (or of 0) everywhere
/// mark a graph as complete (or empty), which carries no cluster structure.
pub const DEGENERATE_TOL: f64 = 1e-6;

/// Scale of the Gaussian kernel `exp(-d^2 / (2 sigma^2))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelParams {
    sigma: f64,
}

impl KernelParams {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(invalid(format!("kernel scale must be positive, got {sigma}")));
        }
        Ok(Self { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// Squared Euclidean distances between all pairs of updates.
pub fn pairwise_sq_distances(updates: &[UpdateVector]) -> Result<SymMatrix> {
    check_cohort(updates)?;
    Ok(SymMatrix::from_upper(updates.len(), |i, j| {
        if i == j {
            0.0
        } else {
            updates[i].sq_dist(&updates[j])
        }
    }))
}

/// Applies the Gaussian kernel to a matrix of squared distances; the diagonal is exactly 1.
pub fn kernel_from_sq_distances(d2: &SymMatrix, kernel: KernelParams) -> SymMatrix {
    let s = 2.0 * kernel.sigma * kernel.sigma;
    SymMatrix::from_upper(d2.order(), |i, j| {
        if i == j {
            1.0
        } else {
            (-d2.get(i, j) / s).exp()
        }
    })
}

/// Gaussian-kernel adjacency of a cohort of updates.
pub fn build_adjacency(updates: &[UpdateVector], kernel: KernelParams) -> Result<SymMatrix> {
    if updates.len() < 2 {
        return Err(invalid("adjacency needs at least two clients"));
    }
    Ok(kernel_from_sq_distances(&pairwise_sq_distances(updates)?, kernel))
}

/// True when every off-diagonal entry is within [`DEGENERATE_TOL`] of 1, or every one is below it.
pub fn is_degenerate(a: &SymMatrix) -> bool {
    let n = a.order();
    let mut all_one = true;
    let mut all_zero = true;
    for i in 0..n {
        for j in (i + 1)..n {
            let v = a.get(i, j);
            all_one &= v > 1.0 - DEGENERATE_TOL;
            all_zero &= v < DEGENERATE_TOL;
        }
    }
    all_one || all_zero
}

/// `D^{-1/2} A D^{-1/2}` with `D` the row sums of `A`.
pub fn normalize_adjacency(a: &SymMatrix) -> Result<SymMatrix> {
    if !a.is_finite() {
        return Err(Error::NonFinite("adjacency"));
    }
    let n = a.order();
    let mut inv_sqrt = Vec::with_capacity(n);
    for i in 0..n {
        let d: f64 = a.row(i).iter().sum();
        if d <= 0.0 {
            return Err(invalid(format!("node {i} has non-positive degree")));
        }
        inv_sqrt.push(1.0 / d.sqrt());
    }
    Ok(SymMatrix::from_upper(n, |i, j| {
        a.get(i, j) * inv_sqrt[i] * inv_sqrt[j]
    }))
}

/// Descending eigenvalues and their consecutive gaps.
#[derive(Clone, Debug, Serialize)]
pub struct SpectrumSummary {
    pub eigenvalues: Vec<f64>,
    /// `gaps[i] = eigenvalues[i] - eigenvalues[i + 1]`; gap position `i + 1`.
    pub gaps: Vec<f64>,
}

impl SpectrumSummary {
    pub fn from_eigenvalues(eigenvalues: Vec<f64>) -> Self {
        let gaps = eigenvalues.windows(2).map(|w| w[0] - w[1]).collect();
        Self { eigenvalues, gaps }
    }

    /// Largest gap at position `>= min_pos` (1-based), smallest position on ties.
    pub fn max_gap_from(&self, min_pos: usize) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &g) in self.gaps.iter().enumerate() {
            let pos = i + 1;
            if pos < min_pos {
                continue;
            }
            if best.is_none_or(|(_, b)| g > b) {
                best = Some((pos, g));
            }
        }
        best
    }

    /// Largest gap over all positions.
    pub fn max_gap(&self) -> (usize, f64) {
        self.max_gap_from(1).unwrap_or((1, 0.0))
    }
}

/// Eigenvalues and gaps of a symmetric matrix with at least two rows.
pub fn spectrum_summary(l: &SymMatrix) -> Result<SpectrumSummary> {
    if l.order() < 2 {
        return Err(invalid("spectrum summary needs at least two rows"));
    }
    Ok(SpectrumSummary::from_eigenvalues(sym_eigenvalues(l)?))
}

/// Normalized cut of a labeling: sum over clusters of `cut(S, rest) / vol(S)`.
///
/// Empty clusters contribute nothing; a non-empty cluster with zero volume is an error.
pub fn ncut_cost(a: &SymMatrix, labels: &[usize]) -> Result<f64> {
    let n = a.order();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: labels.len(),
        });
    }
    let c = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut cut = vec![0.0; c];
    let mut vol = vec![0.0; c];
    let mut size = vec![0usize; c];
    for i in 0..n {
        size[labels[i]] += 1;
        for j in 0..n {
            let w = a.get(i, j);
            vol[labels[i]] += w;
            if labels[i] != labels[j] {
                cut[labels[i]] += w;
            }
        }
    }
    let mut total = 0.0;
    for k in 0..c {
        if size[k] == 0 {
            continue;
        }
        if vol[k] <= 0.0 {
            return Err(invalid(format!("cluster {k} has zero volume")));
        }
        total += cut[k] / vol[k];
    }
    Ok(total)
}
