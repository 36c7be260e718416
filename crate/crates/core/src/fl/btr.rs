use serde::Serialize;

use crate::aggregators::{AggregatorSpec, Defense};
use crate::attacks::{toy_draw, Spread, ToyDraw, ToyScenario};
use crate::error::{invalid, Result};
use crate::rng::stream;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BtrSummary {
    pub tolerant: usize,
    pub trials: usize,
}

impl BtrSummary {
    /// Fraction of tolerant trials.
    pub fn rate(&self) -> f64 {
        self.tolerant as f64 / self.trials as f64
    }
}

/// Counts trials where `aggregate(draw)` points the same way as the benign mean.
pub fn btr_with(
    scenario: ToyScenario,
    spread: Spread,
    trials: usize,
    seed: u64,
    mut aggregate: impl FnMut(&ToyDraw) -> Result<f64>,
) -> Result<BtrSummary> {
    if trials == 0 {
        return Err(invalid("need at least one trial"));
    }
    let mut tolerant = 0;
    for t in 0..trials {
        let mut rng = stream(seed, &[t as u64]);
        let draw = toy_draw(scenario, spread, &mut rng);
        if draw.benign_mean() * aggregate(&draw)? >= 0.0 {
            tolerant += 1;
        }
    }
    Ok(BtrSummary { tolerant, trials })
}

/// Byzantine tolerant rate of a defense on a toy scenario; each trial gets a
/// fresh defense, so FedCut sees a single round.
pub fn btr_trials(
    scenario: ToyScenario,
    defense: &AggregatorSpec,
    trials: usize,
    seed: u64,
    spread: Spread,
) -> Result<BtrSummary> {
    btr_with(scenario, spread, trials, seed, |draw| {
        let agg = Defense::new(defense.clone()).aggregate(&draw.cohort())?;
        Ok(agg.update[0])
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_defenses() {
        for s in ToyScenario::ALL {
            let good = btr_with(s, Spread::StdDev, 200, 1, |d| Ok(d.benign_mean())).unwrap();
            assert_eq!(good.rate(), 1.0);
            let bad = btr_with(s, Spread::StdDev, 200, 1, |d| Ok(-d.benign_mean())).unwrap();
            assert_eq!(bad.rate(), 0.0);
        }
    }

    #[test]
    fn zero_trials_rejected() {
        assert!(btr_trials(ToyScenario::S1, &AggregatorSpec::Mean, 0, 0, Spread::StdDev).is_err());
    }
}
