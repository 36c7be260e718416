use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use byzsim_core::aggregators::AggregatorSpec;
use byzsim_core::attacks::{AttackSpec, PlantedCase, PlantedCohort, Spread, ToyScenario};
use byzsim_core::fedcut::{pdsh, spectrum_at, FedCutParams, SigmaGrid};
use byzsim_core::fl::{
    btr_trials, run_federated, DataSpec, Optimizer, Partition, TrainingConfig, TrainingSummary,
};
use byzsim_core::rng::derive_seed;
use serde_json::{json, Map, Value};

use crate::config::Settings;
use crate::output::{json_document, Format, Sink};
use crate::CliError;

pub const BTR_DEFAULTS: &[(&str, &str)] = &[
    ("format", "csv"),
    ("seed", "0"),
    ("scenarios", "S1,S2-s,S2-m,S3,S4"),
    ("defense", "fedcut,krum,median,kmeans"),
    ("trials", "1000"),
    ("spread", "std"),
    ("sigma-grid", "0.001:100:2"),
    ("trim", "0.1"),
];

pub const TRAIN_DEFAULTS: &[(&str, &str)] = &[
    ("format", "csv"),
    ("seed", "0"),
    ("clients", "20"),
    ("attackers", "0"),
    ("attack", "none"),
    ("defense", "mean"),
    ("rounds", "200"),
    ("lr", "0.5"),
    ("batch", "200"),
    ("beta", "iid"),
    ("optimizer", "sgd"),
    ("dataset", "synthetic"),
    ("samples", "4000"),
    ("test-samples", "1000"),
    ("dim", "20"),
    ("classes", "10"),
    ("separation", "8"),
    ("sigma-grid", "0.001:100:2"),
    ("trim", "0.1"),
];

pub const SPECTRUM_DEFAULTS: &[(&str, &str)] = &[
    ("format", "csv"),
    ("seed", "0"),
    ("case", "mimic"),
    ("clients", "100"),
    ("attackers", "30"),
    ("dim", "10"),
    ("kappa", "0.1"),
    ("offset", "10"),
    ("sigma-grid", "0.001:100:2"),
];

/// A defense with its parameters filled in from the settings.
fn defense_spec(name: &str, s: &Settings, attackers: usize) -> Result<AggregatorSpec, CliError> {
    Ok(match name.parse::<AggregatorSpec>()? {
        AggregatorSpec::TrimmedMean { .. } => AggregatorSpec::TrimmedMean {
            beta: s.parse("trim")?,
        },
        AggregatorSpec::Krum { .. } => AggregatorSpec::Krum { byzantine: attackers },
        AggregatorSpec::FedCut(_) => AggregatorSpec::FedCut(FedCutParams::new(s.parse::<SigmaGrid>("sigma-grid")?)),
        other => other,
    })
}

fn fmt_set(set: &BTreeSet<usize>) -> String {
    set.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

pub fn btr(s: &Settings, output: Option<&Path>) -> Result<(), CliError> {
    let format: Format = s.parse("format")?;
    let trials: usize = s.parse("trials")?;
    let seed: u64 = s.parse("seed")?;
    let spread: Spread = s.parse("spread")?;
    let scenarios = s
        .list("scenarios")?
        .iter()
        .map(|t| t.parse::<ToyScenario>())
        .collect::<Result<Vec<_>, _>>()?;
    let names = s.list("defense")?;
    // Validate every name before any trial runs.
    for name in &names {
        defense_spec(name, s, 0)?;
    }
    let sink = Sink::open(output)?;

    let mut rows = Vec::new();
    for scenario in &scenarios {
        let idx = ToyScenario::ALL.iter().position(|x| x == scenario).expect("listed scenario");
        let scenario_seed = derive_seed(seed, &[idx as u64]);
        for name in &names {
            let spec = defense_spec(name, s, scenario.attackers())?;
            let summary = btr_trials(*scenario, &spec, trials, scenario_seed, spread)?;
            rows.push((scenario.label(), spec.name(), summary));
        }
    }

    let text = match format {
        Format::Csv => {
            let mut out = s.header();
            out.push_str("scenario,defense,trials,tolerant,btr\n");
            for (sc, d, r) in &rows {
                writeln!(out, "{sc},{d},{},{},{}", r.trials, r.tolerant, r.rate()).unwrap();
            }
            out
        }
        Format::Json => {
            let results: Vec<Value> = rows
                .iter()
                .map(|(sc, d, r)| {
                    json!({"scenario": sc, "defense": d, "trials": r.trials,
                           "tolerant": r.tolerant, "btr": r.rate()})
                })
                .collect();
            let mut body = Map::new();
            body.insert("results".into(), Value::Array(results));
            json_document(s, body)
        }
    };
    sink.finish(&text)
}

fn training_config(s: &Settings) -> Result<TrainingConfig, CliError> {
    let attackers: usize = s.parse("attackers")?;
    let attack: AttackSpec = s.str("attack")?.parse()?;
    let defense = defense_spec(s.str("defense")?, s, attackers)?;
    let partition = match s.str("beta")?.trim() {
        "iid" => Partition::Iid,
        _ => Partition::Dirichlet { beta: s.parse("beta")? },
    };
    let optimizer = match s.str("optimizer")?.trim().to_ascii_lowercase().as_str() {
        "sgd" => Optimizer::Sgd,
        "adam" => Optimizer::adam(),
        other => return Err(CliError::Usage(format!("unknown optimizer '{other}'"))),
    };
    let dataset = s.str("dataset")?.trim();
    let data = if dataset == "synthetic" {
        DataSpec::Synthetic {
            train: s.parse("samples")?,
            test: s.parse("test-samples")?,
            dim: s.parse("dim")?,
            classes: s.parse("classes")?,
            separation: s.parse("separation")?,
        }
    } else if let Some(dir) = dataset.strip_prefix("mnist:") {
        DataSpec::mnist(PathBuf::from(dir))
    } else {
        return Err(CliError::Usage(format!("unknown dataset '{dataset}'")));
    };
    let config = TrainingConfig {
        clients: s.parse("clients")?,
        byzantine: attackers,
        learning_rate: s.parse("lr")?,
        batch_size: s.parse("batch")?,
        rounds: s.parse("rounds")?,
        partition,
        attack,
        defense,
        data,
        optimizer,
        seed: s.parse("seed")?,
    };
    config.validate()?;
    Ok(config)
}

pub fn train(s: &Settings, output: Option<&Path>, summary: Option<&Path>) -> Result<(), CliError> {
    let format: Format = s.parse("format")?;
    let config = training_config(s)?;
    let sink = Sink::open(output)?;
    // In csv mode the summary goes next to the output, or to stderr.
    let summary_path = summary.map(Path::to_path_buf).or_else(|| {
        output
            .filter(|p| p.as_os_str() != "-")
            .map(|p| PathBuf::from(format!("{}.summary.json", p.display())))
    });
    let summary_sink = match (format, &summary_path) {
        (Format::Csv, Some(p)) => Some(Sink::open(Some(p))?),
        _ => None,
    };

    let logs = run_federated(&config)?;
    let byz = config.byzantine_set();
    let totals = TrainingSummary::from_logs(&logs, &byz, config.clients)
        .ok_or_else(|| CliError::Usage("need at least one round".into()))?;

    match format {
        Format::Csv => {
            let mut out = s.header();
            out.push_str("round,loss,accuracy,detection_accuracy,benign_count\n");
            for l in &logs {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    l.round,
                    l.loss,
                    l.accuracy,
                    l.detection_accuracy,
                    l.benign_count()
                )
                .unwrap();
            }
            sink.finish(&out)?;
            let mut body = Map::new();
            body.insert("summary".into(), serde_json::to_value(&totals).expect("summary serializes"));
            let doc = json_document(s, body);
            match summary_sink {
                Some(sink) => sink.finish(&doc),
                None => {
                    eprint!("{doc}");
                    Ok(())
                }
            }
        }
        Format::Json => {
            let rounds: Vec<Value> = logs
                .iter()
                .map(|l| {
                    json!({"round": l.round, "loss": l.loss, "accuracy": l.accuracy,
                           "detection_accuracy": l.detection_accuracy,
                           "benign_count": l.benign_count()})
                })
                .collect();
            let mut body = Map::new();
            body.insert("summary".into(), serde_json::to_value(&totals).expect("summary serializes"));
            body.insert("rounds".into(), Value::Array(rounds));
            sink.finish(&json_document(s, body))
        }
    }
}

pub fn spectrum(s: &Settings, output: Option<&Path>) -> Result<(), CliError> {
    let format: Format = s.parse("format")?;
    let case: PlantedCase = s.str("case")?.parse()?;
    let clients: usize = s.parse("clients")?;
    let attackers: usize = s.parse("attackers")?;
    if attackers >= clients {
        return Err(CliError::Usage(format!(
            "attackers ({attackers}) must be fewer than clients ({clients})"
        )));
    }
    let cohort = PlantedCohort {
        benign: clients - attackers,
        attackers,
        dim: s.parse("dim")?,
        kappa: s.parse("kappa")?,
        offset: s.parse("offset")?,
    };
    let params = FedCutParams::new(s.parse("sigma-grid")?);
    let seed: u64 = s.parse("seed")?;
    let sink = Sink::open(output)?;

    let (updates, _) = cohort.generate(case, seed)?;
    let result = pdsh(&updates, &params)?;
    let spec = spectrum_at(&updates, result.sigma_star)?;

    let text = match format {
        Format::Csv => {
            let mut out = s.header();
            writeln!(out, "# sigma_star = {}", result.sigma_star).unwrap();
            writeln!(out, "# cluster_count = {}", result.cluster_count).unwrap();
            writeln!(out, "# global_sigma = {}", result.global_sigma).unwrap();
            writeln!(out, "# global_cluster_count = {}", result.global_cluster_count).unwrap();
            writeln!(out, "# mimic_set = {}", fmt_set(&result.mimic_set)).unwrap();
            let fallback = result.fallback.map_or("none".to_string(), |f| format!("{f:?}"));
            writeln!(out, "# fallback = {fallback}").unwrap();
            out.push_str("index,eigenvalue,gap\n");
            for (i, v) in spec.eigenvalues.iter().enumerate() {
                let gap = spec.gaps.get(i).map_or(String::new(), f64::to_string);
                writeln!(out, "{},{v},{gap}", i + 1).unwrap();
            }
            out
        }
        Format::Json => {
            let mut body = Map::new();
            body.insert("pdsh".into(), serde_json::to_value(&result).expect("pdsh serializes"));
            body.insert("spectrum".into(), serde_json::to_value(&spec).expect("spectrum serializes"));
            json_document(s, body)
        }
    };
    sink.finish(&text)
}
