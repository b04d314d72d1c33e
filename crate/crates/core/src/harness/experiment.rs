use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::asv::{asv_trials, Condition};
use super::attacker::AttackerConfig;
use super::protocol::{run_protocol, Attack, Protocol};
use crate::config::KeyValues;
use crate::embeddings::{generate_synthetic, read_embeddings, split_speaker_disjoint, Dataset, SynthConfig};
use crate::error::{Error, Result};
use crate::flow::{save_model, train, FlowModel, FlowOptions, TrainConfig, DEFAULT_DELTA};
use crate::metrics::{eer, profile_to_csv, similarity_matrix, CosineScorer, EvalReport};
use crate::protection::{global_mean, ProtectionArtifacts, ProtectorRegistry};

pub const PROTECTIONS: [&str; 3] = ["none", "proposed", "global"];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Embeddings CSV; synthetic data is generated when absent.
    pub input: Option<PathBuf>,
    pub synth: SynthConfig,
    pub seed: u64,
    pub train_fraction: f64,
    pub flow_kind: String,
    pub delta: f64,
    pub flow: FlowOptions,
    pub training: TrainConfig,
    pub attacker: AttackerConfig,
    pub similarity_scale: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::with_seed(crate::DEFAULT_SEED)
    }
}

const KEYS: &[&str] = &[
    "input",
    "seed",
    "dim",
    "speakers_per_sex",
    "utts_per_speaker",
    "shift",
    "speaker_spread",
    "utterance_spread",
    "train_fraction",
    "flow_kind",
    "delta",
    "blocks",
    "hidden",
    "scale_clamp",
    "epochs",
    "batch_size",
    "learning_rate",
    "validation_fraction",
    "cosine_decay",
    "attacker_iterations",
    "attacker_learning_rate",
    "attacker_l2",
    "similarity_scale",
];

impl ExperimentConfig {
    pub fn with_seed(seed: u64) -> Self {
        ExperimentConfig {
            input: None,
            synth: SynthConfig {
                seed,
                ..SynthConfig::default()
            },
            seed,
            train_fraction: 0.8,
            flow_kind: "linear".into(),
            delta: DEFAULT_DELTA,
            flow: FlowOptions {
                seed,
                ..FlowOptions::default()
            },
            training: TrainConfig {
                epochs: 100,
                learning_rate: 1e-2,
                cosine_decay: true,
                validation_fraction: 0.0,
                seed,
                ..TrainConfig::default()
            },
            attacker: AttackerConfig::default(),
            similarity_scale: CosineScorer::default().scale,
        }
    }

    /// Builds a config from `key = value` entries; unset keys keep their
    /// defaults, and `seed` feeds every seeded stage.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        kv.check_known(KEYS)?;
        let seed = kv.parse_or("seed", crate::DEFAULT_SEED)?;
        let d = ExperimentConfig::with_seed(seed);
        let shift = match kv.get("shift") {
            None => d.synth.shift.clone(),
            Some(s) => s.parse()?,
        };
        let cfg = ExperimentConfig {
            input: kv.get("input").map(PathBuf::from),
            synth: SynthConfig {
                dim: kv.parse_or("dim", d.synth.dim)?,
                speakers_per_sex: kv.parse_or("speakers_per_sex", d.synth.speakers_per_sex)?,
                utts_per_speaker: kv.parse_or("utts_per_speaker", d.synth.utts_per_speaker)?,
                shift,
                speaker_spread: kv.parse_or("speaker_spread", d.synth.speaker_spread)?,
                utterance_spread: kv.parse_or("utterance_spread", d.synth.utterance_spread)?,
                seed,
            },
            seed,
            train_fraction: kv.parse_or("train_fraction", d.train_fraction)?,
            flow_kind: kv.get("flow_kind").unwrap_or(&d.flow_kind).to_string(),
            delta: kv.parse_or("delta", d.delta)?,
            flow: FlowOptions {
                blocks: kv.parse_or("blocks", d.flow.blocks)?,
                hidden: kv.parse_or("hidden", d.flow.hidden)?,
                scale_clamp: kv.parse_or("scale_clamp", d.flow.scale_clamp)?,
                seed,
            },
            training: TrainConfig {
                epochs: kv.parse_or("epochs", d.training.epochs)?,
                batch_size: kv.parse_or("batch_size", d.training.batch_size)?,
                learning_rate: kv.parse_or("learning_rate", d.training.learning_rate)?,
                validation_fraction: kv.parse_or("validation_fraction", d.training.validation_fraction)?,
                cosine_decay: kv.bool_or("cosine_decay", d.training.cosine_decay)?,
                seed,
                ..d.training
            },
            attacker: AttackerConfig {
                iterations: kv.parse_or("attacker_iterations", d.attacker.iterations)?,
                learning_rate: kv.parse_or("attacker_learning_rate", d.attacker.learning_rate)?,
                l2: kv.parse_or("attacker_l2", d.attacker.l2)?,
            },
            similarity_scale: kv.parse_or("similarity_scale", d.similarity_scale)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input.is_none() {
            self.synth.validate()?;
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!("train_fraction must lie in (0, 1), got {}", self.train_fraction)));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Config(format!("delta must be > 0, got {}", self.delta)));
        }
        if !(self.similarity_scale > 0.0 && self.similarity_scale.is_finite()) {
            return Err(Error::Config("similarity_scale must be > 0".into()));
        }
        self.flow.validate()?;
        self.training.validate()
    }

    /// Resolved configuration in the same `key = value` format it is read from.
    pub fn to_text(&self) -> String {
        let mut rows: Vec<(&str, String)> = vec![("seed", self.seed.to_string())];
        if let Some(p) = &self.input {
            rows.push(("input", p.display().to_string()));
        } else {
            rows.extend([
                ("dim", self.synth.dim.to_string()),
                ("speakers_per_sex", self.synth.speakers_per_sex.to_string()),
                ("utts_per_speaker", self.synth.utts_per_speaker.to_string()),
                ("shift", self.synth.shift.to_string()),
                ("speaker_spread", self.synth.speaker_spread.to_string()),
                ("utterance_spread", self.synth.utterance_spread.to_string()),
            ]);
        }
        rows.extend([
            ("train_fraction", self.train_fraction.to_string()),
            ("flow_kind", self.flow_kind.clone()),
            ("delta", self.delta.to_string()),
            ("blocks", self.flow.blocks.to_string()),
            ("hidden", self.flow.hidden.to_string()),
            ("scale_clamp", self.flow.scale_clamp.to_string()),
            ("epochs", self.training.epochs.to_string()),
            ("batch_size", self.training.batch_size.to_string()),
            ("learning_rate", self.training.learning_rate.to_string()),
            ("validation_fraction", self.training.validation_fraction.to_string()),
            ("cosine_decay", self.training.cosine_decay.to_string()),
            ("attacker_iterations", self.attacker.iterations.to_string()),
            ("attacker_learning_rate", self.attacker.learning_rate.to_string()),
            ("attacker_l2", self.attacker.l2.to_string()),
            ("similarity_scale", self.similarity_scale.to_string()),
        ]);
        let mut s = String::new();
        for (k, v) in rows {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

/// Headline numbers of one run, also written into the bundle.
#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub attacks: BTreeMap<(String, Attack), EvalReport>,
    /// ASV-lite EER per protection and condition.
    pub asv: BTreeMap<(String, Condition), f64>,
    /// Within-sex minus cross-sex mean similarity cell, per protection.
    pub sex_gap: BTreeMap<String, f64>,
    /// Pearson correlation of model LLR against the generator's closed-form
    /// LLR on the test split; absent for ingested data.
    pub llr_pearson: Option<f64>,
    pub model: FlowModel,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub(crate) fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Runs data → split → flow training → attacks × protections → ASV-lite →
/// similarity matrices, writing everything under `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentSummary> {
    stage("config", cfg.validate())?;
    let reports_dir = out_dir.join("reports");
    stage(
        "output",
        std::fs::create_dir_all(&reports_dir).map_err(|e| Error::io(&reports_dir, e)),
    )?;
    stage("output", write(&out_dir.join("run_config.txt"), cfg.to_text()))?;

    let data: Dataset = stage(
        "data",
        match &cfg.input {
            Some(p) => read_embeddings(p),
            None => generate_synthetic(&cfg.synth),
        },
    )?;
    let (train_ds, test_ds) = stage("split", split_speaker_disjoint(&data, cfg.train_fraction, cfg.seed))?;

    let (model, curve) = stage(
        "train-flow",
        train(&cfg.flow_kind, &train_ds, cfg.delta, &cfg.flow, &cfg.training),
    )?;
    stage("output", save_model(&model, out_dir.join("model.zevf")))?;
    stage("output", write(&out_dir.join("training_curve.csv"), curve.to_csv()))?;

    let llr_pearson = match cfg.input {
        Some(_) => None,
        None => {
            let mut est = Vec::with_capacity(test_ds.len());
            for r in test_ds.records() {
                est.push(stage("protect", model.llr(&r.vec))?);
            }
            let truth: Vec<f64> = test_ds.records().iter().map(|r| cfg.synth.true_llr(&r.vec)).collect();
            Some(pearson(&est, &truth))
        }
    };

    let artifacts = ProtectionArtifacts {
        flow: Some(model.clone()),
        global_mean: Some(stage("protect", global_mean(&train_ds))?),
    };

    let mut attacks = BTreeMap::new();
    for protection in PROTECTIONS {
        for attack in Attack::ALL {
            let protocol = Protocol::new(protection, attack);
            let out = stage(
                "attack",
                run_protocol(&train_ds, &test_ds, &artifacts, &protocol, &cfg.attacker),
            )?;
            let doc = json!({
                "protection": protection,
                "attack": attack.name(),
                "eer": out.report.eer,
                "d_ece_bits": out.report.d_ece_bits,
                "cllr_min_bits": out.report.cllr_min_bits,
                "n_tar": out.report.n_tar,
                "n_non": out.report.n_non,
                "attacker_final_loss": out.attacker.loss_curve.last().copied(),
            });
            let name = format!("attack_{protection}_{}", attack.name());
            stage(
                "output",
                write(
                    &reports_dir.join(format!("{name}.json")),
                    serde_json::to_string_pretty(&doc).expect("json") + "\n",
                ),
            )?;
            stage(
                "output",
                write(
                    &out_dir.join(format!("ece_profile_{protection}_{}.csv", attack.name())),
                    profile_to_csv(&out.report.ece_profile),
                ),
            )?;
            attacks.insert((protection.to_string(), attack), out.report);
        }
    }

    let registry = ProtectorRegistry::default();
    let scorer = CosineScorer {
        scale: cfg.similarity_scale,
    };
    let mut asv = BTreeMap::new();
    let mut sex_gap = BTreeMap::new();
    let mut asv_doc = serde_json::Map::new();
    for protection in PROTECTIONS {
        let protector = stage("protect", registry.create(protection, &artifacts))?;
        let test_p = stage("protect", protector.protect_dataset(&test_ds))?;
        let mut per = serde_json::Map::new();
        for cond in Condition::ALL {
            let scores = stage("asv", asv_trials(&test_p, cond))?;
            let e = stage("asv", eer(&scores))?;
            per.insert(cond.name().to_string(), json!({ "eer": e, "n_tar": scores.tar.len(), "n_non": scores.non.len() }));
            asv.insert((protection.to_string(), cond), e);
        }
        asv_doc.insert(protection.to_string(), serde_json::Value::Object(per));

        let m = stage("simmat", similarity_matrix(&test_p, &scorer))?;
        let (within, cross) = m.sex_block_means();
        sex_gap.insert(protection.to_string(), within - cross);
        let tag = if protection == "none" { "original" } else { protection };
        stage("output", write(&out_dir.join(format!("simmat_{tag}.csv")), m.to_csv()))?;
        stage("output", write(&out_dir.join(format!("simmat_{tag}.pgm")), m.to_pgm()))?;
    }
    stage(
        "output",
        write(
            &reports_dir.join("asv.json"),
            serde_json::to_string_pretty(&serde_json::Value::Object(asv_doc)).expect("json") + "\n",
        ),
    )?;

    let summary_doc = json!({
        "train_records": train_ds.len(),
        "test_records": test_ds.len(),
        "flow_kind": model.kind().name(),
        "best_epoch": curve.best_epoch,
        "initial_val_nll": curve.initial_val(),
        "best_val_nll": curve.best_val(),
        "llr_pearson": llr_pearson,
        "sex_gap": sex_gap,
    });
    stage(
        "output",
        write(
            &reports_dir.join("summary.json"),
            serde_json::to_string_pretty(&summary_doc).expect("json") + "\n",
        ),
    )?;

    Ok(ExperimentSummary {
        attacks,
        asv,
        sex_gap,
        llr_pearson,
        model,
    })
}
