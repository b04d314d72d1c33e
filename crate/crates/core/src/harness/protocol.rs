use std::fmt;
use std::str::FromStr;

use super::attacker::{train_attacker, Attacker, AttackerConfig};
use crate::embeddings::{Dataset, Sex};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalReport, ScoreSet};
use crate::protection::{ProtectionArtifacts, ProtectorRegistry};

/// What the attacker's training data looked like.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Attack {
    /// Trained on unprotected data.
    Ignorant,
    /// Trained on data passed through the same protection.
    SemiInformed,
}

impl Attack {
    pub const ALL: [Attack; 2] = [Attack::Ignorant, Attack::SemiInformed];

    pub fn name(self) -> &'static str {
        match self {
            Attack::Ignorant => "ignorant",
            Attack::SemiInformed => "semi_informed",
        }
    }
}

impl fmt::Display for Attack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Attack {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ignorant" => Ok(Attack::Ignorant),
            "semi_informed" | "semi-informed" => Ok(Attack::SemiInformed),
            _ => Err(Error::Config(format!("unknown attack {s:?} (ignorant, semi_informed)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    pub protection: String,
    pub attack: Attack,
}

impl Protocol {
    pub fn new(protection: &str, attack: Attack) -> Self {
        Protocol {
            protection: protection.to_string(),
            attack,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProtocolOutcome {
    pub attacker: Attacker,
    pub scores: ScoreSet,
    pub report: EvalReport,
}

/// Female test utterances are targets, male ones non-targets.
pub fn sex_scores(attacker: &Attacker, test: &Dataset) -> ScoreSet {
    let mut s = ScoreSet::default();
    for r in test.records() {
        let v = attacker.score(&r.vec);
        match r.sex {
            Sex::F => s.tar.push(v),
            Sex::M => s.non.push(v),
        }
    }
    s
}

pub fn run_protocol(
    train: &Dataset,
    test: &Dataset,
    artifacts: &ProtectionArtifacts,
    protocol: &Protocol,
    attacker_cfg: &AttackerConfig,
) -> Result<ProtocolOutcome> {
    let protector = ProtectorRegistry::default().create(&protocol.protection, artifacts)?;
    let test_p = protector.protect_dataset(test)?;
    let attacker = match protocol.attack {
        Attack::Ignorant => train_attacker(train, attacker_cfg, "none")?,
        Attack::SemiInformed => {
            let train_p = protector.protect_dataset(train)?;
            train_attacker(&train_p, attacker_cfg, protector.name())?
        }
    };
    let scores = sex_scores(&attacker, &test_p);
    let report = evaluate(&scores)?;
    Ok(ProtocolOutcome {
        attacker,
        scores,
        report,
    })
}
