use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;

use zevox::config::KeyValues;
use zevox::embeddings::{generate_synthetic, read_embeddings, write_embeddings, Dataset, EmbeddingRecord, SynthConfig};
use zevox::flow::{load_model, save_model, train, FlowOptions, TrainConfig};
use zevox::harness::{asv_trials, run_experiment, sex_scores, train_attacker, AttackerConfig, Condition, ExperimentConfig};
use zevox::metrics::{evaluate, profile_to_csv, similarity_matrix, CosineScorer};
use zevox::pitch::{compute_targets, load_track, read_manifest, F0Targets, LabelledTrack, PitchConfig};
use zevox::protection::{global_mean, EmbeddingProtector, FlowProtection, GlobalMeanProtection};
use zevox::psola::{protect_audio, read_wav, write_wav};
use zevox::{Error, Result};

use crate::{
    AsvArgs, AsvCondition, AttackArgs, Cli, Command, ExperimentArgs, F0TargetsArgs, PitchArgs, ProtectAudioArgs,
    ProtectEmbArgs, SimmatArgs, SynthArgs, TrainArgs,
};

pub fn name(cmd: &Command) -> &'static str {
    match cmd {
        Command::SynthData(_) => "synth-data",
        Command::TrainFlow(_) => "train-flow",
        Command::ProtectEmb(_) => "protect-emb",
        Command::F0Targets(_) => "f0-targets",
        Command::ProtectAudio(_) => "protect-audio",
        Command::Attack(_) => "attack",
        Command::Asv(_) => "asv",
        Command::Simmat(_) => "simmat",
        Command::Experiment(_) => "experiment",
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let env_seed = env_seed()?;
    let seed = cli.seed.or(env_seed).unwrap_or(zevox::DEFAULT_SEED);
    let io = Loader {
        length_norm: cli.length_norm,
    };
    match &cli.command {
        Command::SynthData(a) => synth_data(a, seed),
        Command::TrainFlow(a) => train_flow(a, &io, seed),
        Command::ProtectEmb(a) => protect_emb(a, &io),
        Command::F0Targets(a) => f0_targets(a),
        Command::ProtectAudio(a) => protect_wav(a),
        Command::Attack(a) => attack(a, &io),
        Command::Asv(a) => asv(a, &io),
        Command::Simmat(a) => simmat(a, &io),
        Command::Experiment(a) => experiment(a, cli.seed, env_seed),
    }
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var("ZEVOX_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("ZEVOX_SEED={v:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

struct Loader {
    length_norm: bool,
}

impl Loader {
    fn embeddings(&self, path: &Path) -> Result<Dataset> {
        let ds = read_embeddings(path)?;
        if self.length_norm {
            ds.length_normalized()
        } else {
            Ok(ds)
        }
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => write(p, format!("{text}\n")),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn pitch_config(a: &PitchArgs) -> Result<PitchConfig> {
    let cfg = PitchConfig {
        f0_min: a.f0_min,
        f0_max: a.f0_max,
        window: a.window,
        hop: a.hop,
        yin_threshold: a.yin_threshold,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn synth_data(a: &SynthArgs, seed: u64) -> Result<()> {
    let cfg = SynthConfig {
        dim: a.dim,
        speakers_per_sex: a.speakers_per_sex,
        utts_per_speaker: a.utts_per_speaker,
        shift: a.shift.parse()?,
        speaker_spread: a.speaker_spread,
        utterance_spread: a.utterance_spread,
        seed,
    };
    let ds = generate_synthetic(&cfg)?;
    write_embeddings(&ds, &a.out)?;
    eprintln!("wrote {} embeddings of dimension {} to {}", ds.len(), ds.dim(), a.out.display());
    Ok(())
}

fn train_flow(a: &TrainArgs, io: &Loader, seed: u64) -> Result<()> {
    let ds = io.embeddings(&a.input)?;
    let opts = FlowOptions {
        blocks: a.blocks,
        hidden: a.hidden,
        scale_clamp: a.scale_clamp,
        seed,
    };
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.learning_rate,
        validation_fraction: a.validation_fraction,
        cosine_decay: !a.no_cosine_decay,
        seed,
        ..TrainConfig::default()
    };
    let (model, curve) = train(a.kind.name(), &ds, a.delta, &opts, &cfg)?;
    save_model(&model, &a.out)?;
    if let Some(p) = &a.curve {
        write(p, curve.to_csv())?;
    }
    eprintln!(
        "{} flow: validation NLL {:.4} -> {:.4}; model written to {}",
        a.kind.name(),
        curve.initial_val(),
        curve.best_val(),
        a.out.display()
    );
    Ok(())
}

fn protect_emb(a: &ProtectEmbArgs, io: &Loader) -> Result<()> {
    let ds = io.embeddings(&a.input)?;
    let protector: Box<dyn EmbeddingProtector> = match &a.model {
        Some(path) => Box::new(FlowProtection::new(load_model(path)?)),
        None => {
            let mean = match &a.mean_from {
                Some(p) => global_mean(&io.embeddings(p)?)?,
                None => global_mean(&ds)?,
            };
            Box::new(GlobalMeanProtection { mean })
        }
    };
    let records = ds
        .records()
        .par_iter()
        .map(|r| {
            Ok(EmbeddingRecord {
                vec: protector.protect(&r.vec)?,
                ..r.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_embeddings(&Dataset::new(records)?, &a.out)?;
    eprintln!("{} protection applied to {} embeddings", protector.name(), ds.len());
    Ok(())
}

fn f0_targets(a: &F0TargetsArgs) -> Result<()> {
    let cfg = pitch_config(&a.pitch)?;
    let entries = read_manifest(&a.manifest)?;
    let tracks = entries
        .par_iter()
        .map(|e| {
            Ok(LabelledTrack {
                spk_id: e.spk_id.clone(),
                sex: e.sex,
                track: load_track(&e.path, &cfg).map_err(|err| Error::Pitch(format!("{}: {err}", e.path.display())))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let targets = compute_targets(&tracks)?;
    emit(a.out.as_ref(), &targets.to_json())
}

fn protect_wav(a: &ProtectAudioArgs) -> Result<()> {
    let cfg = pitch_config(&a.pitch)?;
    let targets = F0Targets::read(&a.targets)?;
    let (out, report) = protect_audio(&read_wav(&a.input)?, &targets, &cfg)?;
    write_wav(&out, &a.out)?;
    if let Some(w) = &report.warning {
        eprintln!("warning: {w}");
    }
    emit(a.report.as_ref(), &report.to_json())
}

fn attack(a: &AttackArgs, io: &Loader) -> Result<()> {
    let train_ds = io.embeddings(&a.train)?;
    let test_ds = io.embeddings(&a.test)?;
    let cfg = AttackerConfig {
        iterations: a.iterations,
        learning_rate: a.learning_rate,
        l2: a.l2,
    };
    let attacker = train_attacker(&train_ds, &cfg, &a.train.display().to_string())?;
    let report = evaluate(&sex_scores(&attacker, &test_ds))?;
    if let Some(p) = &a.profile {
        write(p, profile_to_csv(&report.ece_profile))?;
    }
    let body = json!({
        "train": a.train.display().to_string(),
        "test": a.test.display().to_string(),
        "eer": report.eer,
        "d_ece_bits": report.d_ece_bits,
        "cllr_min_bits": report.cllr_min_bits,
        "n_tar": report.n_tar,
        "n_non": report.n_non,
        "attacker_train_accuracy": attacker.accuracy(&train_ds),
    });
    emit(a.out.as_ref(), &serde_json::to_string_pretty(&body).expect("report serializes"))
}

fn asv(a: &AsvArgs, io: &Loader) -> Result<()> {
    let ds = io.embeddings(&a.input)?;
    let condition = match a.condition {
        AsvCondition::F => Condition::F,
        AsvCondition::M => Condition::M,
        AsvCondition::Fm => Condition::FM,
    };
    let report = evaluate(&asv_trials(&ds, condition)?)?;
    let body = json!({
        "condition": condition.name(),
        "eer": report.eer,
        "cllr_min_bits": report.cllr_min_bits,
        "n_tar": report.n_tar,
        "n_non": report.n_non,
    });
    emit(a.out.as_ref(), &serde_json::to_string_pretty(&body).expect("report serializes"))
}

fn simmat(a: &SimmatArgs, io: &Loader) -> Result<()> {
    if !(a.scale.is_finite() && a.scale > 0.0) {
        return Err(Error::Config(format!("--scale must be positive, got {}", a.scale)));
    }
    let ds = io.embeddings(&a.input)?;
    let m = similarity_matrix(&ds, &CosineScorer { scale: a.scale })?;
    let with_ext = |ext: &str| {
        let mut p = a.out_prefix.clone().into_os_string();
        p.push(ext);
        PathBuf::from(p)
    };
    write(&with_ext(".csv"), m.to_csv())?;
    write(&with_ext(".pgm"), m.to_pgm())?;
    let (within, cross) = m.sex_block_means();
    eprintln!(
        "{} speakers; within-sex minus cross-sex cell {:.4}; diagonal contrast {:.4}",
        m.size(),
        within - cross,
        m.diagonal_contrast()
    );
    Ok(())
}

/// Precedence: `--seed`, then the config and `--set`, then `$ZEVOX_SEED`.
fn experiment(a: &ExperimentArgs, flag_seed: Option<u64>, env_seed: Option<u64>) -> Result<()> {
    let mut kv = match a.config.as_str() {
        "default" => KeyValues::default(),
        path => KeyValues::read(path)?,
    };
    for pair in &a.overrides {
        kv.set_pair(pair)?;
    }
    if let Some(s) = flag_seed.or(env_seed.filter(|_| kv.get("seed").is_none())) {
        kv.set("seed", &s.to_string());
    }
    let cfg = ExperimentConfig::from_kv(&kv)?;
    let summary = run_experiment(&cfg, &a.out)?;
    for ((protection, attack), r) in &summary.attacks {
        println!(
            "{protection:>8} {:<13} EER {:6.2}%  D_ECE {:.4} bit",
            attack.name(),
            100.0 * r.eer,
            r.d_ece_bits
        );
    }
    for ((protection, condition), e) in &summary.asv {
        println!("{protection:>8} ASV {:<10} EER {:6.2}%", condition.name(), 100.0 * e);
    }
    if let Some(r) = summary.llr_pearson {
        println!("LLR Pearson r on the test split: {r:.4}");
    }
    eprintln!("bundle written to {}", a.out.display());
    Ok(())
}
