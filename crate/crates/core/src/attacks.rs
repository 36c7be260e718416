//! Byzantine attacks on client updates, plus the synthetic cohorts used to
//! study them (one-dimensional toy scenarios and planted high-dimensional
//! cohorts).

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

use crate::error::{invalid, Error, Result};
use crate::rng::stream;
use crate::update::{check_cohort, mean_of};
use crate::UpdateVector;

/// How Byzantine clients replace their updates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum AttackSpec {
    None,
    /// Each coordinate drawn from `N(0, variance)`.
    Gaussian { variance: f64 },
    /// The all-ones vector.
    SameValue,
    /// The attacker's own update times `scale`.
    SignFlip { scale: f64 },
    /// Data poisoning: attackers train on flipped labels; updates are left alone here.
    LabelFlip,
    /// Benign mean shifted by `z` benign standard deviations per coordinate.
    Lie,
    /// A copy of client `target`'s update.
    Mimic { target: usize },
    /// `groups` tight groups around the benign mean shifted by `+s, -s, +2s, -2s, ...`.
    MultiCollusion {
        groups: usize,
        spacing: f64,
        variance: f64,
    },
}

impl AttackSpec {
    pub const NAMES: [&'static str; 8] = [
        "none",
        "gaussian",
        "same_value",
        "sign_flip",
        "label_flip",
        "lie",
        "mimic",
        "multi_collusion",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Gaussian { .. } => "gaussian",
            Self::SameValue => "same_value",
            Self::SignFlip { .. } => "sign_flip",
            Self::LabelFlip => "label_flip",
            Self::Lie => "lie",
            Self::Mimic { .. } => "mimic",
            Self::MultiCollusion { .. } => "multi_collusion",
        }
    }

    pub fn flips_labels(&self) -> bool {
        matches!(self, Self::LabelFlip)
    }
}

impl fmt::Display for AttackSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "none" => Self::None,
            "gaussian" | "noise" => Self::Gaussian { variance: 200.0 },
            "same_value" | "same" => Self::SameValue,
            "sign_flip" | "sign" => Self::SignFlip { scale: -4.0 },
            "label_flip" | "label" => Self::LabelFlip,
            "lie" => Self::Lie,
            "mimic" => Self::Mimic { target: 0 },
            "multi_collusion" | "multi" => Self::MultiCollusion {
                groups: 4,
                spacing: 1.0,
                variance: 1e-4,
            },
            _ => return Err(invalid(format!("unknown attack '{s}'"))),
        })
    }
}

/// The LIE shift: `z = Phi^-1((K - q - s) / (K - q))` with `s = floor(K/2) + 1 - q`.
pub fn lie_z(clients: usize, byzantine: usize) -> Result<f64> {
    let (k, q) = (clients as f64, byzantine as f64);
    let s = (clients / 2) as f64 + 1.0 - q;
    let p = (k - q - s) / (k - q);
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!(
            "LIE shift undefined for K = {clients}, q = {byzantine}"
        )));
    }
    Ok(StdNormal::standard().inverse_cdf(p))
}

fn sorted_benign(n: usize, byzantine: &BTreeSet<usize>) -> Vec<usize> {
    (0..n).filter(|i| !byzantine.contains(i)).collect()
}

/// Replaces the updates of `byzantine` clients according to `spec`.
///
/// `honest` holds the update every client would have sent without attacking.
/// Statistics of benign clients are taken over the non-Byzantine indices.
/// Each attacker's randomness is keyed by `(seed, client)`.
pub fn craft_attack(
    spec: &AttackSpec,
    honest: &[UpdateVector],
    byzantine: &BTreeSet<usize>,
    seed: u64,
) -> Result<Vec<UpdateVector>> {
    let dim = check_cohort(honest)?;
    let k = honest.len();
    if let Some(&bad) = byzantine.iter().find(|&&i| i >= k) {
        return Err(invalid(format!("attacker index {bad} out of range for {k} clients")));
    }
    let mut out = honest.to_vec();
    if byzantine.is_empty() {
        return Ok(out);
    }
    let benign = sorted_benign(k, byzantine);
    let benign_mean = || {
        if benign.is_empty() {
            Err(invalid("attack needs at least one benign client"))
        } else {
            Ok(mean_of(benign.iter().map(|&i| &honest[i]), dim))
        }
    };
    match spec {
        AttackSpec::None | AttackSpec::LabelFlip => {}
        AttackSpec::Gaussian { variance } => {
            let normal = Normal::new(0.0, variance.sqrt()).map_err(|e| invalid(e.to_string()))?;
            for &i in byzantine {
                let mut rng = stream(seed, &[i as u64]);
                out[i] = UpdateVector::new((0..dim).map(|_| normal.sample(&mut rng)).collect());
            }
        }
        AttackSpec::SameValue => {
            for &i in byzantine {
                out[i] = UpdateVector::new(vec![1.0; dim]);
            }
        }
        AttackSpec::SignFlip { scale } => {
            for &i in byzantine {
                out[i] = UpdateVector::new(honest[i].iter().map(|x| scale * x).collect());
            }
        }
        AttackSpec::Lie => {
            let mu = benign_mean()?;
            let z = lie_z(k, byzantine.len())?;
            let n = benign.len() as f64;
            let shifted: Vec<f64> = (0..dim)
                .map(|j| {
                    let var = benign.iter().map(|&i| (honest[i][j] - mu[j]).powi(2)).sum::<f64>() / n;
                    mu[j] + z * var.sqrt()
                })
                .collect();
            for &i in byzantine {
                out[i] = UpdateVector::new(shifted.clone());
            }
        }
        AttackSpec::Mimic { target } => {
            if *target >= k || byzantine.contains(target) {
                return Err(invalid(format!("mimic target {target} is not a benign client")));
            }
            for &i in byzantine {
                out[i] = honest[*target].clone();
            }
        }
        AttackSpec::MultiCollusion {
            groups,
            spacing,
            variance,
        } => {
            if *groups == 0 {
                return Err(invalid("multi-collusion needs at least one group"));
            }
            let mu = benign_mean()?;
            let noise = Normal::new(0.0, variance.sqrt()).map_err(|e| invalid(e.to_string()))?;
            for (pos, &i) in byzantine.iter().enumerate() {
                let g = pos % groups;
                let mag = (g / 2 + 1) as f64 * spacing;
                let offset = if g % 2 == 0 { mag } else { -mag };
                let mut rng = stream(seed, &[i as u64]);
                out[i] = UpdateVector::new(
                    mu.iter().map(|m| m + offset + noise.sample(&mut rng)).collect(),
                );
            }
        }
    }
    Ok(out)
}

/// Maps label `y` to `C - 1 - y`.
pub fn flip_labels(labels: &[usize], classes: usize) -> Result<Vec<usize>> {
    labels
        .iter()
        .map(|&y| {
            if y < classes {
                Ok(classes - 1 - y)
            } else {
                Err(invalid(format!("label {y} outside 0..{classes}")))
            }
        })
        .collect()
}

/// Reading of the second parameter of the toy distributions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum Spread {
    #[default]
    StdDev,
    Variance,
}

impl FromStr for Spread {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "std" | "stddev" | "sd" => Ok(Self::StdDev),
            "var" | "variance" => Ok(Self::Variance),
            _ => Err(invalid(format!("unknown spread convention '{s}'"))),
        }
    }
}

/// One-dimensional scenarios with 10 benign clients drawn from `N(0.1, 0.1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ToyScenario {
    /// 8 attackers from `N(0.1, 1)`.
    S1,
    /// 8 colluders from `N(-2, 0.01)`.
    S2Single,
    /// 4 colluders from `N(-2, 0.01)` and 4 from `N(4, 0.01)`.
    S2Multi,
    /// 8 colluders hugging the smallest benign value.
    S3,
    /// 3 colluders at -2, 3 at the smallest benign value and one noisy attacker.
    S4,
}

impl ToyScenario {
    pub const ALL: [ToyScenario; 5] = [Self::S1, Self::S2Single, Self::S2Multi, Self::S3, Self::S4];

    pub fn label(&self) -> &'static str {
        match self {
            Self::S1 => "S1",
            Self::S2Single => "S2-s",
            Self::S2Multi => "S2-m",
            Self::S3 => "S3",
            Self::S4 => "S4",
        }
    }

    pub fn attackers(&self) -> usize {
        match self {
            Self::S4 => 7,
            _ => 8,
        }
    }
}

impl FromStr for ToyScenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .trim()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Ok(match key.as_str() {
            "s1" => Self::S1,
            "s2s" => Self::S2Single,
            "s2m" => Self::S2Multi,
            "s3" => Self::S3,
            "s4" => Self::S4,
            _ => return Err(invalid(format!("unknown scenario '{s}'"))),
        })
    }
}

/// A toy draw: benign values followed by attacker values.
#[derive(Clone, Debug)]
pub struct ToyDraw {
    pub benign: Vec<f64>,
    pub byzantine: Vec<f64>,
}

impl ToyDraw {
    /// Benign then Byzantine, as one-dimensional updates.
    pub fn cohort(&self) -> Vec<UpdateVector> {
        self.benign
            .iter()
            .chain(&self.byzantine)
            .map(|&x| UpdateVector::new(vec![x]))
            .collect()
    }

    pub fn benign_mean(&self) -> f64 {
        self.benign.iter().sum::<f64>() / self.benign.len() as f64
    }
}

pub fn toy_draw(scenario: ToyScenario, spread: Spread, rng: &mut impl Rng) -> ToyDraw {
    let mut draw = |m: f64, s: f64, n: usize| -> Vec<f64> {
        let sd = match spread {
            Spread::StdDev => s,
            Spread::Variance => s.sqrt(),
        };
        let normal = Normal::new(m, sd).expect("positive spread");
        (0..n).map(|_| normal.sample(rng)).collect()
    };
    let benign = draw(0.1, 0.1, 10);
    let low = benign.iter().copied().fold(f64::INFINITY, f64::min);
    let byzantine = match scenario {
        ToyScenario::S1 => draw(0.1, 1.0, 8),
        ToyScenario::S2Single => draw(-2.0, 0.01, 8),
        ToyScenario::S2Multi => [draw(-2.0, 0.01, 4), draw(4.0, 0.01, 4)].concat(),
        ToyScenario::S3 => draw(low, 0.01, 8),
        ToyScenario::S4 => [draw(-2.0, 0.01, 3), draw(low, 0.01, 3), draw(0.1, 1.0, 1)].concat(),
    };
    ToyDraw { benign, byzantine }
}

/// Attack mix for a planted cohort.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PlantedCase {
    /// Independent high-variance noise.
    NonCollusion,
    /// One tight group far from the benign cluster.
    CollusionDiff,
    /// Exact copies of benign client 0.
    Mimic,
    /// One sixth noise, one sixth far group, the rest copies.
    Mixture,
}

impl PlantedCase {
    pub const ALL: [PlantedCase; 4] = [Self::NonCollusion, Self::CollusionDiff, Self::Mimic, Self::Mixture];
}

impl FromStr for PlantedCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "non_collusion" | "noncollusion" => Self::NonCollusion,
            "collusion_diff" | "collusion" => Self::CollusionDiff,
            "mimic" => Self::Mimic,
            "mixture" | "mix" => Self::Mixture,
            _ => return Err(invalid(format!("unknown planted case '{s}'"))),
        })
    }
}

/// Shape of a planted cohort: a tight benign cluster plus attackers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PlantedCohort {
    pub benign: usize,
    pub attackers: usize,
    pub dim: usize,
    /// Per-coordinate standard deviation of benign updates around their center.
    pub kappa: f64,
    /// Per-coordinate shift of the colluding group from the benign center.
    pub offset: f64,
}

impl Default for PlantedCohort {
    fn default() -> Self {
        Self {
            benign: 70,
            attackers: 30,
            dim: 10,
            kappa: 0.1,
            offset: 10.0,
        }
    }
}

impl PlantedCohort {
    /// Benign updates `c0 + N(0, kappa^2)` with `c0 ~ N(0, 1)`.
    pub fn benign_updates(&self, seed: u64) -> Result<Vec<UpdateVector>> {
        if self.dim == 0 || self.benign == 0 {
            return Err(invalid("planted cohort needs a benign client and dim >= 1"));
        }
        let mut rng = stream(seed, &[0]);
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        let center: Vec<f64> = (0..self.dim).map(|_| unit.sample(&mut rng)).collect();
        let spread = Normal::new(0.0, self.kappa).map_err(|e| invalid(e.to_string()))?;
        Ok((0..self.benign)
            .map(|_| {
                UpdateVector::new(center.iter().map(|c| c + spread.sample(&mut rng)).collect())
            })
            .collect())
    }

    /// Benign clients first, attackers after; returns the cohort and attacker indices.
    pub fn generate(&self, case: PlantedCase, seed: u64) -> Result<(Vec<UpdateVector>, BTreeSet<usize>)> {
        let mut honest = self.benign_updates(seed)?;
        let total = self.benign + self.attackers;
        honest.resize(total, UpdateVector::zeros(self.dim));
        let byz: BTreeSet<usize> = (self.benign..total).collect();
        let gaussian = AttackSpec::Gaussian { variance: 200.0 };
        let collude = AttackSpec::MultiCollusion {
            groups: 1,
            spacing: self.offset,
            variance: self.kappa * self.kappa,
        };
        let mimic = AttackSpec::Mimic { target: 0 };
        let parts: Vec<(AttackSpec, BTreeSet<usize>)> = match case {
            PlantedCase::NonCollusion => vec![(gaussian, byz.clone())],
            PlantedCase::CollusionDiff => vec![(collude, byz.clone())],
            PlantedCase::Mimic => vec![(mimic, byz.clone())],
            PlantedCase::Mixture => {
                let sixth = self.attackers / 6;
                let ids: Vec<usize> = byz.iter().copied().collect();
                vec![
                    (gaussian, ids[..sixth].iter().copied().collect()),
                    (collude, ids[sixth..2 * sixth].iter().copied().collect()),
                    (mimic, ids[2 * sixth..].iter().copied().collect()),
                ]
            }
        };
        // Benign statistics must not see the placeholder rows, so each part is
        // crafted against the full attacker set and only its own rows are kept.
        let mut cohort = honest.clone();
        for (p, (spec, members)) in parts.iter().enumerate() {
            let crafted = craft_attack(spec, &honest, &byz, crate::rng::derive_seed(seed, &[1, p as u64]))?;
            for &i in members {
                cohort[i] = crafted[i].clone();
            }
        }
        Ok((cohort, byz))
    }
}
