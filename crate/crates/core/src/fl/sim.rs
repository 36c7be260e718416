use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::Serialize;

use super::{dirichlet_partition, iid_partition, load_idx_dataset, local_update, synth_split, Dataset, ModelState};
use crate::aggregators::{AggregatorSpec, Defense};
use crate::attacks::{craft_attack, flip_labels, AttackSpec};
use crate::error::{invalid, Result};
use crate::rng::{derive_seed, stream};

/// Where training data comes from.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum DataSpec {
    Synthetic {
        train: usize,
        test: usize,
        dim: usize,
        classes: usize,
        separation: f64,
    },
    /// MNIST-style IDX files.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        classes: usize,
    },
}

impl DataSpec {
    /// Ten well-separated classes in 20 dimensions.
    pub fn desk_scale() -> Self {
        Self::Synthetic {
            train: 4000,
            test: 1000,
            dim: 20,
            classes: 10,
            separation: 8.0,
        }
    }

    /// MNIST's standard file names under `dir`.
    pub fn mnist(dir: impl Into<PathBuf>) -> Self {
        let dir = dir.into();
        Self::Idx {
            train_images: dir.join("train-images-idx3-ubyte"),
            train_labels: dir.join("train-labels-idx1-ubyte"),
            test_images: dir.join("t10k-images-idx3-ubyte"),
            test_labels: dir.join("t10k-labels-idx1-ubyte"),
            classes: 10,
        }
    }

    fn load(&self, seed: u64) -> Result<(Dataset, Dataset)> {
        match self {
            Self::Synthetic {
                train,
                test,
                dim,
                classes,
                separation,
            } => synth_split(seed, *train, *test, *dim, *classes, *separation),
            Self::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                classes,
            } => Ok((
                load_idx_dataset(train_images, train_labels, *classes)?,
                load_idx_dataset(test_images, test_labels, *classes)?,
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Partition {
    Iid,
    Dirichlet { beta: f64 },
}

/// Server-side update rule applied to the aggregate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Optimizer {
    Sgd,
    Adam {
        beta1: f64,
        beta2: f64,
        eps: f64,
        weight_decay: f64,
    },
}

impl Optimizer {
    pub fn adam() -> Self {
        Self::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainingConfig {
    pub clients: usize,
    pub byzantine: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub rounds: usize,
    pub partition: Partition,
    pub attack: AttackSpec,
    pub defense: AggregatorSpec,
    pub data: DataSpec,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            clients: 20,
            byzantine: 0,
            learning_rate: 0.5,
            batch_size: 200,
            rounds: 200,
            partition: Partition::Iid,
            attack: AttackSpec::None,
            defense: AggregatorSpec::Mean,
            data: DataSpec::desk_scale(),
            optimizer: Optimizer::Sgd,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    /// The last `byzantine` clients attack, so client 0 is always benign.
    pub fn byzantine_set(&self) -> BTreeSet<usize> {
        (self.clients - self.byzantine..self.clients).collect()
    }

    /// Train and test sets for this configuration's seed.
    pub fn load_data(&self) -> Result<(Dataset, Dataset)> {
        self.data.load(derive_seed(self.seed, &[DATA]))
    }

    pub fn validate(&self) -> Result<()> {
        if self.clients == 0 {
            return Err(invalid("need at least one client"));
        }
        if 2 * self.byzantine >= self.clients {
            return Err(invalid(format!(
                "attackers must be fewer than half the clients (q = {}, K = {})",
                self.byzantine, self.clients
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("learning rate must be positive"));
        }
        if self.rounds == 0 || self.batch_size == 0 {
            return Err(invalid("rounds and batch size must be positive"));
        }
        if let Partition::Dirichlet { beta } = self.partition {
            if !(beta > 0.0) {
                return Err(invalid("Dirichlet concentration must be positive"));
            }
        }
        Ok(())
    }
}

/// Metrics for one round, measured after the server step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundLog {
    pub round: usize,
    /// Mean cross-entropy on the full training set.
    pub loss: f64,
    /// Test accuracy.
    pub accuracy: f64,
    pub detection_accuracy: f64,
    pub benign_set: BTreeSet<usize>,
}

impl RoundLog {
    pub fn benign_count(&self) -> usize {
        self.benign_set.len()
    }
}

/// Fraction of clients the report classifies correctly.
pub fn detection_accuracy(benign_set: &BTreeSet<usize>, byzantine: &BTreeSet<usize>, clients: usize) -> f64 {
    detection_hits(benign_set, byzantine, clients) as f64 / clients as f64
}

fn detection_hits(benign_set: &BTreeSet<usize>, byzantine: &BTreeSet<usize>, clients: usize) -> usize {
    (0..clients)
        .filter(|i| benign_set.contains(i) != byzantine.contains(i))
        .count()
}

/// Whole-run figures derived from the round logs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainingSummary {
    pub rounds: usize,
    pub final_loss: f64,
    pub final_accuracy: f64,
    /// Correct classifications over all rounds and clients.
    pub detection_accuracy: f64,
}

impl TrainingSummary {
    pub fn from_logs(logs: &[RoundLog], byzantine: &BTreeSet<usize>, clients: usize) -> Option<Self> {
        let last = logs.last()?;
        let hits: usize = logs
            .iter()
            .map(|l| detection_hits(&l.benign_set, byzantine, clients))
            .sum();
        Some(Self {
            rounds: logs.len(),
            final_loss: last.loss,
            final_accuracy: last.accuracy,
            detection_accuracy: hits as f64 / (clients * logs.len()) as f64,
        })
    }
}

const DATA: u64 = 1;
const SHARDS: u64 = 2;
const CLIENT: u64 = 3;
const ATTACK: u64 = 4;

fn shards(config: &TrainingConfig, train: &Dataset) -> Result<Vec<Vec<usize>>> {
    let seed = derive_seed(config.seed, &[SHARDS]);
    match config.partition {
        Partition::Iid => iid_partition(train.len(), config.clients, seed),
        Partition::Dirichlet { beta } => {
            // Redraw until every client holds data; tiny concentrations can
            // leave a client empty, and an empty client cannot train.
            for attempt in 0..100u64 {
                let p = dirichlet_partition(train.labels(), config.clients, beta, derive_seed(seed, &[attempt]))?;
                if p.iter().all(|s| !s.is_empty()) {
                    return Ok(p);
                }
            }
            Err(invalid(format!(
                "Dirichlet({beta}) split left a client without data in 100 draws"
            )))
        }
    }
}

/// Runs `config.rounds` rounds of federated training.
pub fn run_federated(config: &TrainingConfig) -> Result<Vec<RoundLog>> {
    config.validate()?;
    let (train, test) = config.load_data()?;
    let shards = shards(config, &train)?;
    let byzantine = config.byzantine_set();
    let flipped = if config.attack.flips_labels() {
        Some(train.with_labels(flip_labels(train.labels(), train.classes())?)?)
    } else {
        None
    };

    let mut model = ModelState::zeros(train.dim(), train.classes());
    let mut defense = Defense::new(config.defense.clone());
    let n = model.num_params();
    let (mut m1, mut m2) = (vec![0.0; n], vec![0.0; n]);
    let mut logs = Vec::with_capacity(config.rounds);

    for round in 1..=config.rounds {
        let r = round as u64;
        let honest = (0..config.clients)
            .map(|i| {
                let data = match &flipped {
                    Some(f) if byzantine.contains(&i) => f,
                    _ => &train,
                };
                let mut rng = stream(config.seed, &[CLIENT, r, i as u64]);
                local_update(&model, data, &shards[i], config.batch_size, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let updates = craft_attack(
            &config.attack,
            &honest,
            &byzantine,
            derive_seed(config.seed, &[ATTACK, r]),
        )?;
        let agg = defense.aggregate(&updates)?;

        match config.optimizer {
            Optimizer::Sgd => model.descend(&agg.update, config.learning_rate)?,
            Optimizer::Adam {
                beta1,
                beta2,
                eps,
                weight_decay,
            } => {
                let t = round as i32;
                let step: Vec<f64> = (0..n)
                    .map(|k| {
                        let g = agg.update[k] + weight_decay * model.weights()[k];
                        m1[k] = beta1 * m1[k] + (1.0 - beta1) * g;
                        m2[k] = beta2 * m2[k] + (1.0 - beta2) * g * g;
                        let mh = m1[k] / (1.0 - beta1.powi(t));
                        let vh = m2[k] / (1.0 - beta2.powi(t));
                        mh / (vh.sqrt() + eps)
                    })
                    .collect();
                model.descend(&step, config.learning_rate)?;
            }
        }

        logs.push(RoundLog {
            round,
            loss: model.loss(&train, None)?,
            accuracy: model.accuracy(&test)?,
            detection_accuracy: detection_accuracy(&agg.benign_set, &byzantine, config.clients),
            benign_set: agg.benign_set,
        });
    }
    Ok(logs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TrainingConfig {
        TrainingConfig {
            clients: 6,
            rounds: 5,
            batch_size: 16,
            data: DataSpec::Synthetic {
                train: 300,
                test: 100,
                dim: 4,
                classes: 3,
                separation: 6.0,
            },
            ..TrainingConfig::default()
        }
    }

    #[test]
    fn detection_counts() {
        let byz = BTreeSet::from([7, 8, 9]);
        let perfect: BTreeSet<usize> = (0..7).collect();
        assert_eq!(detection_accuracy(&perfect, &byz, 10), 1.0);
        assert_eq!(detection_accuracy(&byz, &byz, 10), 0.0);
        let one_off: BTreeSet<usize> = (1..7).collect();
        assert!((detection_accuracy(&one_off, &byz, 10) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn config_checks() {
        let mut c = small();
        c.byzantine = 3;
        assert!(run_federated(&c).is_err());
        c.byzantine = 0;
        c.learning_rate = 0.0;
        assert!(run_federated(&c).is_err());
        c.learning_rate = 0.1;
        c.rounds = 0;
        assert!(run_federated(&c).is_err());
    }

    #[test]
    fn deterministic() {
        let mut c = small();
        c.byzantine = 2;
        c.attack = AttackSpec::Gaussian { variance: 200.0 };
        c.defense = AggregatorSpec::CoordinateMedian;
        assert_eq!(run_federated(&c).unwrap(), run_federated(&c).unwrap());
    }

    #[test]
    fn clean_training_learns() {
        let mut c = small();
        c.rounds = 30;
        let logs = run_federated(&c).unwrap();
        assert!(logs.last().unwrap().accuracy > 0.9);
        assert!(logs.last().unwrap().loss < logs[0].loss);
    }

    #[test]
    fn adam_runs() {
        let mut c = small();
        c.optimizer = Optimizer::adam();
        c.learning_rate = 0.05;
        c.partition = Partition::Dirichlet { beta: 0.5 };
        let logs = run_federated(&c).unwrap();
        assert_eq!(logs.len(), 5);
    }
}
