//! The FedCut defense.
//!
//! Each round, [`pdsh`] sweeps the kernel scale over a grid and picks the
//! scale and cluster count with the largest eigengap. A count above half the
//! cohort means many updates are near-copies of each other; those are flagged
//! as mimic clients and removed, and the scale is re-chosen among the ones
//! that yield fewer than half as many clusters. [`cncut_round`] then folds the
//! round's normalized graph into a running average and partitions the
//! remaining clients by k-means on its leading eigenvectors. The largest part
//! is taken as benign.

use std::collections::BTreeSet;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::numerics::{kmeans_cluster, normalize_rows, sym_eigen, SymMatrix};
use crate::spectral::{
    is_degenerate, kernel_from_sq_distances, normalize_adjacency, pairwise_sq_distances,
    spectrum_summary, KernelParams, SpectrumSummary,
};
use crate::update::{check_cohort, mean_of};
use crate::UpdateVector;

/// Smallest cohort FedCut accepts.
pub const MIN_CLIENTS: usize = 4;

/// Ascending, positive kernel scales to sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SigmaGrid(Vec<f64>);

impl SigmaGrid {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("sigma grid is empty"));
        }
        if values.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(invalid("sigma grid values must be positive and finite"));
        }
        values.sort_by(f64::total_cmp);
        values.dedup();
        Ok(Self(values))
    }

    /// `min, min*ratio, min*ratio^2, ...` up to and including `max`.
    pub fn geometric(min: f64, max: f64, ratio: f64) -> Result<Self> {
        if !(min > 0.0 && max >= min && ratio > 1.0 && max.is_finite()) {
            return Err(invalid(format!(
                "bad sigma grid {min}:{max}:{ratio} (need 0 < min <= max, ratio > 1)"
            )));
        }
        let mut values = Vec::new();
        let mut k = 0;
        loop {
            let s = min * ratio.powi(k);
            if s > max * (1.0 + 1e-12) {
                break;
            }
            values.push(s);
            k += 1;
        }
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl Default for SigmaGrid {
    fn default() -> Self {
        Self::geometric(1e-3, 1e2, 2.0).expect("valid default grid")
    }
}

impl FromStr for SigmaGrid {
    type Err = Error;

    /// Parses `min:max:ratio`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(invalid(format!("sigma grid '{s}' is not min:max:ratio")));
        }
        let num = |p: &str| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| invalid(format!("sigma grid '{s}': '{p}' is not a number")))
        };
        Self::geometric(num(parts[0])?, num(parts[1])?, num(parts[2])?)
    }
}

/// Tuning knobs for FedCut.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FedCutParams {
    pub grid: SigmaGrid,
    /// Seed for the k-means fits inside the defense.
    pub seed: u64,
    pub kmeans_restarts: usize,
}

impl FedCutParams {
    pub fn new(grid: SigmaGrid) -> Self {
        Self {
            grid,
            seed: 0,
            kmeans_restarts: 10,
        }
    }
}

impl Default for FedCutParams {
    fn default() -> Self {
        Self::new(SigmaGrid::default())
    }
}

/// Largest eigengap found at one kernel scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SigmaProbe {
    pub sigma: f64,
    pub cluster_count: usize,
    pub gap: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PdshFallback {
    /// Every scale gave a complete or empty graph; one cluster is assumed.
    Degenerate,
    /// Mimic clients were found but no scale gives fewer than K/2 clusters;
    /// the non-mimic clients are kept without further partitioning.
    NoRestrictedScale,
}

#[derive(Clone, Debug, Serialize)]
pub struct PdshResult {
    pub cluster_count: usize,
    pub sigma_star: f64,
    pub mimic_set: BTreeSet<usize>,
    /// Scale and count at the overall largest gap, before mimic handling.
    pub global_cluster_count: usize,
    pub global_sigma: f64,
    pub fallback: Option<PdshFallback>,
    /// One entry per non-degenerate scale, in grid order.
    pub probes: Vec<SigmaProbe>,
}

fn first_max(probes: &[SigmaProbe], keep: impl Fn(&SigmaProbe) -> bool) -> Option<SigmaProbe> {
    let mut best: Option<SigmaProbe> = None;
    for p in probes.iter().filter(|p| keep(p)) {
        if best.is_none_or(|b| p.gap > b.gap) {
            best = Some(*p);
        }
    }
    best
}

fn spectral_embedding(l: &SymMatrix, c: usize) -> Result<Vec<Vec<f64>>> {
    let mut rows = sym_eigen(l)?.embedding(c);
    normalize_rows(&mut rows);
    Ok(rows)
}

/// Chooses the kernel scale and cluster count, detecting mimic clients on the way.
///
/// Partitions need at least two parts, so the per-scale count is the position
/// of the largest gap among positions 2 and up. The largest count over the
/// grid above K/2 triggers mimic detection: k-means on the embedding at that
/// scale, with every client in a cluster of two or more flagged.
pub fn pdsh(updates: &[UpdateVector], params: &FedCutParams) -> Result<PdshResult> {
    let k = updates.len();
    if k < MIN_CLIENTS {
        return Err(invalid(format!("FedCut needs at least {MIN_CLIENTS} clients, got {k}")));
    }
    let d2 = pairwise_sq_distances(updates)?;
    let mut probes = Vec::new();
    for &sigma in params.grid.values() {
        let a = kernel_from_sq_distances(&d2, KernelParams::new(sigma)?);
        if is_degenerate(&a) {
            continue;
        }
        let summary = spectrum_summary(&normalize_adjacency(&a)?)?;
        if let Some((c, gap)) = summary.max_gap_from(2) {
            probes.push(SigmaProbe {
                sigma,
                cluster_count: c,
                gap,
            });
        }
    }

    let Some(global) = first_max(&probes, |_| true) else {
        let sigma = params.grid.values()[0];
        return Ok(PdshResult {
            cluster_count: 1,
            sigma_star: sigma,
            mimic_set: BTreeSet::new(),
            global_cluster_count: 1,
            global_sigma: sigma,
            fallback: Some(PdshFallback::Degenerate),
            probes,
        });
    };

    let mut result = PdshResult {
        cluster_count: global.cluster_count,
        sigma_star: global.sigma,
        mimic_set: BTreeSet::new(),
        global_cluster_count: global.cluster_count,
        global_sigma: global.sigma,
        fallback: None,
        probes: Vec::new(),
    };

    if 2 * global.cluster_count > k {
        let c = global.cluster_count;
        let a = kernel_from_sq_distances(&d2, KernelParams::new(global.sigma)?);
        let emb = spectral_embedding(&normalize_adjacency(&a)?, c)?;
        let fit = kmeans_cluster(&emb, c, params.seed, params.kmeans_restarts)?;
        let sizes = fit.cluster_sizes();
        result.mimic_set = (0..k).filter(|&i| sizes[fit.assignment[i]] > 1).collect();
        match first_max(&probes, |p| 2 * p.cluster_count < k) {
            Some(p) => {
                result.cluster_count = p.cluster_count;
                result.sigma_star = p.sigma;
            }
            None => result.fallback = Some(PdshFallback::NoRestrictedScale),
        }
    }
    result.probes = probes;
    Ok(result)
}

/// Isolates the masked nodes: their rows and columns are zeroed and the diagonal set to 1.
pub fn mask_mimic(a: &SymMatrix, mimic: &BTreeSet<usize>) -> Result<SymMatrix> {
    let n = a.order();
    if let Some(&bad) = mimic.iter().find(|&&i| i >= n) {
        return Err(invalid(format!("mimic index {bad} out of range for {n} clients")));
    }
    Ok(SymMatrix::from_upper(n, |i, j| {
        if mimic.contains(&i) || mimic.contains(&j) {
            if i == j {
                1.0
            } else {
                0.0
            }
        } else {
            a.get(i, j)
        }
    }))
}

/// Running average of the per-round normalized adjacencies.
#[derive(Clone, Debug)]
pub struct SpectralState {
    l_avg: SymMatrix,
    rounds: usize,
}

impl SpectralState {
    pub fn new(clients: usize) -> Self {
        Self {
            l_avg: SymMatrix::zeros(clients),
            rounds: 0,
        }
    }

    pub fn clients(&self) -> usize {
        self.l_avg.order()
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn average(&self) -> &SymMatrix {
        &self.l_avg
    }

    /// Folds in round `t = rounds + 1`: `((t-1)/t) * avg + (1/t) * l`.
    pub fn observe(self, l: &SymMatrix) -> Result<Self> {
        let t = (self.rounds + 1) as f64;
        let l_avg = self.l_avg.lin_comb((t - 1.0) / t, l, 1.0 / t)?;
        Ok(Self {
            l_avg,
            rounds: self.rounds + 1,
        })
    }
}

/// Partition of one round's clients.
#[derive(Clone, Debug, Serialize)]
pub struct ClusterAssignment {
    /// Cluster of each client; `None` for masked mimic clients.
    pub labels: Vec<Option<usize>>,
    pub cluster_count: usize,
    /// Members of the largest cluster (lowest label on ties).
    pub benign_set: BTreeSet<usize>,
    pub pdsh: PdshResult,
}

/// One FedCut round: scale selection, temporal update and normalized cut.
pub fn cncut_round(
    updates: &[UpdateVector],
    state: SpectralState,
    params: &FedCutParams,
) -> Result<(ClusterAssignment, SpectralState)> {
    let k = updates.len();
    if state.clients() != k {
        return Err(Error::DimensionMismatch {
            expected: state.clients(),
            found: k,
        });
    }
    check_cohort(updates)?;
    let pd = pdsh(updates, params)?;

    let a = kernel_from_sq_distances(
        &pairwise_sq_distances(updates)?,
        KernelParams::new(pd.sigma_star)?,
    );
    let l = normalize_adjacency(&mask_mimic(&a, &pd.mimic_set)?)?;
    let state = state.observe(&l)?;

    let keep: Vec<usize> = (0..k).filter(|i| !pd.mimic_set.contains(i)).collect();
    let mut labels = vec![None; k];
    if keep.is_empty() || pd.fallback == Some(PdshFallback::NoRestrictedScale) {
        for &i in &keep {
            labels[i] = Some(0);
        }
        let benign_set = if keep.is_empty() {
            (0..k).collect()
        } else {
            keep.iter().copied().collect()
        };
        let assignment = ClusterAssignment {
            labels,
            cluster_count: 1,
            benign_set,
            pdsh: pd,
        };
        return Ok((assignment, state));
    }

    // Masked clients are isolated components of the average graph; dropping
    // them keeps their unit eigenvalues out of the embedding. Once they are
    // gone the number of remaining groups is read off the block itself.
    let sub = state.average().principal_submatrix(&keep);
    let c = if pd.mimic_set.is_empty() {
        pd.cluster_count
    } else if keep.len() >= 2 {
        spectrum_summary(&sub)?.max_gap().0
    } else {
        1
    }
    .min(keep.len());

    let sub_labels = if c <= 1 {
        vec![0; keep.len()]
    } else {
        let emb = spectral_embedding(&sub, c)?;
        kmeans_cluster(&emb, c, params.seed, params.kmeans_restarts)?.assignment
    };
    let mut sizes = vec![0usize; c.max(1)];
    for (&i, &lab) in keep.iter().zip(&sub_labels) {
        labels[i] = Some(lab);
        sizes[lab] += 1;
    }
    let big = (0..sizes.len())
        .fold(0, |best, j| if sizes[j] > sizes[best] { j } else { best });
    let benign_set = (0..k).filter(|&i| labels[i] == Some(big)).collect();
    let assignment = ClusterAssignment {
        labels,
        cluster_count: c.max(1),
        benign_set,
        pdsh: pd,
    };
    Ok((assignment, state))
}

/// Mean of the benign set chosen by [`cncut_round`].
pub fn fedcut_aggregate(
    updates: &[UpdateVector],
    state: SpectralState,
    params: &FedCutParams,
) -> Result<(UpdateVector, SpectralState, ClusterAssignment)> {
    let (assignment, state) = cncut_round(updates, state, params)?;
    let dim = updates[0].dim();
    let agg = mean_of(assignment.benign_set.iter().map(|&i| &updates[i]), dim);
    Ok((agg, state, assignment))
}

/// FedCut holding its own temporal state across rounds.
#[derive(Clone, Debug)]
pub struct FedCut {
    params: FedCutParams,
    state: Option<SpectralState>,
}

impl FedCut {
    pub fn new(params: FedCutParams) -> Self {
        Self {
            params,
            state: None,
        }
    }

    pub fn params(&self) -> &FedCutParams {
        &self.params
    }

    pub fn state(&self) -> Option<&SpectralState> {
        self.state.as_ref()
    }

    pub fn aggregate(&mut self, updates: &[UpdateVector]) -> Result<(UpdateVector, ClusterAssignment)> {
        let state = self
            .state
            .take()
            .unwrap_or_else(|| SpectralState::new(updates.len()));
        let (agg, state, assignment) = fedcut_aggregate(updates, state, &self.params)?;
        self.state = Some(state);
        Ok((agg, assignment))
    }
}

/// Spectrum of the normalized adjacency at one scale, for reporting.
pub fn spectrum_at(updates: &[UpdateVector], sigma: f64) -> Result<SpectrumSummary> {
    let a = kernel_from_sq_distances(&pairwise_sq_distances(updates)?, KernelParams::new(sigma)?);
    spectrum_summary(&normalize_adjacency(&a)?)
}
