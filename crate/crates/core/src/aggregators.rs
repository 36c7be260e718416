//! Baseline robust aggregation rules and a common front end for all defenses.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::fedcut::{FedCut, FedCutParams};
use crate::numerics::kmeans_cluster;
use crate::update::{check_cohort, mean_of};
use crate::UpdateVector;

pub const GEOMEDIAN_TOL: f64 = 1e-7;
pub const GEOMEDIAN_MAX_ITER: usize = 1000;

/// Plain coordinate-wise mean (FedAvg with equal weights).
pub fn mean_aggregate(updates: &[UpdateVector]) -> Result<UpdateVector> {
    let dim = check_cohort(updates)?;
    Ok(mean_of(updates, dim))
}

fn column(updates: &[UpdateVector], j: usize) -> Vec<f64> {
    let mut col: Vec<f64> = updates.iter().map(|u| u[j]).collect();
    col.sort_by(f64::total_cmp);
    col
}

/// Per-coordinate median; the two middle values are averaged for even K.
pub fn coordinate_median(updates: &[UpdateVector]) -> Result<UpdateVector> {
    let dim = check_cohort(updates)?;
    let k = updates.len();
    let out = (0..dim)
        .map(|j| {
            let col = column(updates, j);
            if k % 2 == 1 {
                col[k / 2]
            } else {
                0.5 * (col[k / 2 - 1] + col[k / 2])
            }
        })
        .collect();
    Ok(UpdateVector::new(out))
}

/// Per-coordinate mean after dropping the `floor(beta * K)` smallest and largest values.
pub fn trimmed_mean(updates: &[UpdateVector], beta: f64) -> Result<UpdateVector> {
    let dim = check_cohort(updates)?;
    if !(0.0..0.5).contains(&beta) {
        return Err(invalid(format!("trim fraction {beta} outside [0, 0.5)")));
    }
    let k = updates.len();
    let b = (beta * k as f64).floor() as usize;
    if k <= 2 * b {
        return Err(invalid(format!("trimming {b} per side leaves nothing of {k}")));
    }
    let out = (0..dim)
        .map(|j| {
            let col = column(updates, j);
            col[b..k - b].iter().sum::<f64>() / (k - 2 * b) as f64
        })
        .collect();
    Ok(UpdateVector::new(out))
}

/// Krum scores: sum of squared distances to the `K - q - 2` nearest other updates.
pub fn krum_scores(updates: &[UpdateVector], q: usize) -> Result<Vec<f64>> {
    check_cohort(updates)?;
    let k = updates.len();
    if k < q + 3 {
        return Err(invalid(format!("Krum needs K >= q + 3 (K = {k}, q = {q})")));
    }
    let n = k - q - 2;
    Ok((0..k)
        .map(|i| {
            let mut d: Vec<f64> = (0..k)
                .filter(|&j| j != i)
                .map(|j| updates[i].sq_dist(&updates[j]))
                .collect();
            d.sort_by(f64::total_cmp);
            d[..n].iter().sum()
        })
        .collect())
}

/// Index of the update with the lowest Krum score (lowest index on ties).
pub fn krum_select(updates: &[UpdateVector], q: usize) -> Result<usize> {
    let scores = krum_scores(updates, q)?;
    Ok((0..scores.len()).fold(0, |b, i| if scores[i] < scores[b] { i } else { b }))
}

pub fn krum(updates: &[UpdateVector], q: usize) -> Result<UpdateVector> {
    Ok(updates[krum_select(updates, q)?].clone())
}

/// Sum of Euclidean distances from `x` to every update.
pub fn geomedian_objective(updates: &[UpdateVector], x: &[f64]) -> f64 {
    updates
        .iter()
        .map(|u| {
            u.iter()
                .zip(x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .sum()
}

/// Geometric median by Weiszfeld iteration from the mean.
///
/// Stops when the (sub)gradient norm of the distance sum drops below `tol`.
/// Updates within `1e-12` of the iterate are left out of the reweighting.
/// The returned point is the better of the iterate and the best input update.
pub fn geometric_median(updates: &[UpdateVector], tol: f64, max_iter: usize) -> Result<UpdateVector> {
    let dim = check_cohort(updates)?;
    if !(tol > 0.0) {
        return Err(invalid("geometric median tolerance must be positive"));
    }
    let mut x = mean_of(updates, dim).into_inner();
    for _ in 0..max_iter {
        let mut num = vec![0.0; dim];
        let mut den = 0.0;
        let mut grad = vec![0.0; dim];
        for u in updates {
            let dist = u
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if dist <= 1e-12 {
                continue;
            }
            let w = 1.0 / dist;
            den += w;
            for j in 0..dim {
                num[j] += w * u[j];
                grad[j] += (x[j] - u[j]) * w;
            }
        }
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if den == 0.0 || gnorm <= tol {
            break;
        }
        x = num.into_iter().map(|v| v / den).collect();
    }
    let mut best = x;
    let mut best_obj = geomedian_objective(updates, &best);
    for u in updates {
        let obj = geomedian_objective(updates, u);
        if obj < best_obj {
            best_obj = obj;
            best = u.to_vec();
        }
    }
    Ok(UpdateVector::new(best))
}

/// Two-cluster k-means on raw updates; returns the mean of the larger cluster and its members.
///
/// Equal-sized clusters are broken in favour of the one with the smaller sum of client indices.
pub fn kmeans_defense(updates: &[UpdateVector], seed: u64) -> Result<(UpdateVector, BTreeSet<usize>)> {
    let dim = check_cohort(updates)?;
    if updates.len() < 2 {
        return Err(invalid("k-means defense needs at least two clients"));
    }
    let points: Vec<Vec<f64>> = updates.iter().map(|u| u.to_vec()).collect();
    let fit = kmeans_cluster(&points, 2, seed, 10)?;
    let members = |c: usize| -> Vec<usize> {
        (0..updates.len()).filter(|&i| fit.assignment[i] == c).collect()
    };
    let (m0, m1) = (members(0), members(1));
    let pick = match m0.len().cmp(&m1.len()) {
        std::cmp::Ordering::Greater => m0,
        std::cmp::Ordering::Less => m1,
        std::cmp::Ordering::Equal => {
            if m0.iter().sum::<usize>() <= m1.iter().sum::<usize>() {
                m0
            } else {
                m1
            }
        }
    };
    let agg = mean_of(pick.iter().map(|&i| &updates[i]), dim);
    Ok((agg, pick.into_iter().collect()))
}

/// Which defense to run, with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum AggregatorSpec {
    Mean,
    CoordinateMedian,
    TrimmedMean { beta: f64 },
    Krum { byzantine: usize },
    GeometricMedian { tol: f64, max_iter: usize },
    Kmeans { seed: u64 },
    FedCut(FedCutParams),
}

impl AggregatorSpec {
    pub const NAMES: [&'static str; 7] = [
        "mean",
        "median",
        "trimmed_mean",
        "krum",
        "geomedian",
        "kmeans",
        "fedcut",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Mean => "mean",
            Self::CoordinateMedian => "median",
            Self::TrimmedMean { .. } => "trimmed_mean",
            Self::Krum { .. } => "krum",
            Self::GeometricMedian { .. } => "geomedian",
            Self::Kmeans { .. } => "kmeans",
            Self::FedCut(_) => "fedcut",
        }
    }
}

impl fmt::Display for AggregatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AggregatorSpec {
    type Err = Error;

    /// Parses a defense name with default parameters. Krum gets `q = 0`
    /// until the caller fills in the attacker count.
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "mean" | "fedavg" => Self::Mean,
            "median" | "coordinate_median" => Self::CoordinateMedian,
            "trimmed_mean" | "trimmed" => Self::TrimmedMean { beta: 0.1 },
            "krum" => Self::Krum { byzantine: 0 },
            "geomedian" | "geometric_median" => Self::GeometricMedian {
                tol: GEOMEDIAN_TOL,
                max_iter: GEOMEDIAN_MAX_ITER,
            },
            "kmeans" => Self::Kmeans { seed: 0 },
            "fedcut" => Self::FedCut(FedCutParams::default()),
            _ => return Err(invalid(format!("unknown defense '{s}'"))),
        })
    }
}

/// An aggregate and the clients the defense considered benign.
#[derive(Clone, Debug)]
pub struct Aggregate {
    pub update: UpdateVector,
    /// Clients whose updates shaped the aggregate. Rules that do not single
    /// out clients report everyone.
    pub benign_set: BTreeSet<usize>,
}

/// A defense instance, stateful for FedCut.
#[derive(Clone, Debug)]
pub enum Defense {
    Stateless(AggregatorSpec),
    FedCut(FedCut),
}

impl Defense {
    pub fn new(spec: AggregatorSpec) -> Self {
        match spec {
            AggregatorSpec::FedCut(p) => Self::FedCut(FedCut::new(p)),
            other => Self::Stateless(other),
        }
    }

    pub fn aggregate(&mut self, updates: &[UpdateVector]) -> Result<Aggregate> {
        let everyone = || (0..updates.len()).collect::<BTreeSet<_>>();
        Ok(match self {
            Self::FedCut(fc) => {
                let (update, asg) = fc.aggregate(updates)?;
                Aggregate {
                    update,
                    benign_set: asg.benign_set,
                }
            }
            Self::Stateless(spec) => match spec {
                AggregatorSpec::Mean => Aggregate {
                    update: mean_aggregate(updates)?,
                    benign_set: everyone(),
                },
                AggregatorSpec::CoordinateMedian => Aggregate {
                    update: coordinate_median(updates)?,
                    benign_set: everyone(),
                },
                AggregatorSpec::TrimmedMean { beta } => Aggregate {
                    update: trimmed_mean(updates, *beta)?,
                    benign_set: everyone(),
                },
                AggregatorSpec::Krum { byzantine } => {
                    let i = krum_select(updates, *byzantine)?;
                    Aggregate {
                        update: updates[i].clone(),
                        benign_set: BTreeSet::from([i]),
                    }
                }
                AggregatorSpec::GeometricMedian { tol, max_iter } => Aggregate {
                    update: geometric_median(updates, *tol, *max_iter)?,
                    benign_set: everyone(),
                },
                AggregatorSpec::Kmeans { seed } => {
                    let (update, benign_set) = kmeans_defense(updates, *seed)?;
                    Aggregate { update, benign_set }
                }
                AggregatorSpec::FedCut(p) => {
                    *self = Self::FedCut(FedCut::new(p.clone()));
                    return self.aggregate(updates);
                }
            },
        })
    }
}
