use std::fmt;
use std::str::FromStr;

use crate::embeddings::{Dataset, Sex};
use crate::error::{Error, Result};
use crate::metrics::{cosine, ScoreSet};

/// Trial pools: within-female, within-male, and cross-sex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Condition {
    F,
    M,
    FM,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::F, Condition::M, Condition::FM];

    pub fn name(self) -> &'static str {
        match self {
            Condition::F => "F",
            Condition::M => "M",
            Condition::FM => "FM",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "F" => Ok(Condition::F),
            "M" => Ok(Condition::M),
            "FM" => Ok(Condition::FM),
            _ => Err(Error::Config(format!("unknown ASV condition {s:?} (F, M, FM)"))),
        }
    }
}

/// Cosine-scored verification trials over every utterance pair.
///
/// Targets are same-speaker pairs of distinct utterances. Non-targets are
/// cross-speaker pairs within the condition's sex, or cross-sex pairs for
/// `FM`, whose targets pool both sexes.
pub fn asv_trials(ds: &Dataset, condition: Condition) -> Result<ScoreSet> {
    let recs = ds.records();
    let in_scope = |s: Sex| match condition {
        Condition::F => s == Sex::F,
        Condition::M => s == Sex::M,
        Condition::FM => true,
    };
    let idx: Vec<usize> = (0..recs.len()).filter(|&i| in_scope(recs[i].sex)).collect();
    let speakers = ds.speakers();
    let count = |s: Sex| speakers.iter().filter(|(_, x)| *x == s).count();
    let enough = match condition {
        Condition::F => count(Sex::F) >= 2,
        Condition::M => count(Sex::M) >= 2,
        Condition::FM => count(Sex::F) >= 1 && count(Sex::M) >= 1,
    };
    if !enough {
        return Err(Error::Config(format!("not enough speakers for ASV condition {condition}")));
    }
    let mut scores = ScoreSet::default();
    for (k, &a) in idx.iter().enumerate() {
        for &b in &idx[k + 1..] {
            let (ra, rb) = (&recs[a], &recs[b]);
            if ra.spk_id == rb.spk_id {
                scores.tar.push(cosine(&ra.vec, &rb.vec));
            } else if condition != Condition::FM || ra.sex != rb.sex {
                scores.non.push(cosine(&ra.vec, &rb.vec));
            }
        }
    }
    if scores.tar.is_empty() {
        return Err(Error::Config(format!(
            "ASV condition {condition} has no target trials (speakers need >= 2 utterances)"
        )));
    }
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::{generate_synthetic, SynthConfig};
    use crate::metrics::eer;

    fn data() -> Dataset {
        generate_synthetic(&SynthConfig {
            speakers_per_sex: 4,
            utts_per_speaker: 3,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn trial_counts() {
        let ds = data();
        let f = asv_trials(&ds, Condition::F).unwrap();
        assert_eq!(f.tar.len(), 4 * 3);
        assert_eq!(f.non.len(), 6 * 9);
        let fm = asv_trials(&ds, Condition::FM).unwrap();
        assert_eq!(fm.tar.len(), 8 * 3);
        assert_eq!(fm.non.len(), 12 * 12);
    }

    #[test]
    fn speaker_structure_is_detectable() {
        let s = asv_trials(&data(), Condition::F).unwrap();
        assert!(eer(&s).unwrap() <= 0.2);
    }

    #[test]
    fn one_speaker_is_not_enough() {
        let ds = data().subset(|r| r.sex == Sex::M || r.spk_id == "F0000").unwrap();
        assert!(asv_trials(&ds, Condition::F).is_err());
    }
}
