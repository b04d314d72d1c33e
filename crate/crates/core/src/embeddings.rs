//! Speaker-embedding records, CSV I/O, speaker-disjoint splits and a
//! hierarchical Gaussian generator with a closed-form LLR.
//!
//! CSV layout: header `utt_id,spk_id,sex,v0,...,v{d-1}`, one utterance per
//! row, `sex` in `{M,F}`. Class index follows `M -> 0`, `F -> 1`, so a
//! positive LLR favours male.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Speaker sex. The class index is fixed: male is class 0, female class 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sex {
    M,
    F,
}

impl Sex {
    pub const BOTH: [Sex; 2] = [Sex::M, Sex::F];

    pub fn class(self) -> usize {
        match self {
            Sex::M => 0,
            Sex::F => 1,
        }
    }

    pub fn from_class(class: usize) -> Option<Sex> {
        match class {
            0 => Some(Sex::M),
            1 => Some(Sex::F),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Sex::M => "M",
            Sex::F => "F",
        }
    }

    pub fn parse(s: &str) -> Option<Sex> {
        match s {
            "M" => Some(Sex::M),
            "F" => Some(Sex::F),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub utt_id: String,
    pub spk_id: String,
    pub sex: Sex,
    pub vec: Vec<f64>,
}

/// A validated, immutable collection of embeddings sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<EmbeddingRecord>,
    dim: usize,
}

impl Dataset {
    /// Validates dimension, finiteness, utterance-id uniqueness and
    /// speaker/sex consistency.
    pub fn new(records: Vec<EmbeddingRecord>) -> Result<Self> {
        let dim = records
            .first()
            .map(|r| r.vec.len())
            .ok_or_else(|| Error::Config("empty dataset".into()))?;
        if dim < 2 {
            return Err(Error::Config(format!("embedding dimension {dim} < 2")));
        }
        let mut utts = HashMap::new();
        let mut spk_sex: HashMap<&str, (Sex, usize)> = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            if r.vec.len() != dim {
                return Err(Error::Config(format!(
                    "record {i} ({}) has dimension {}, expected {dim}",
                    r.utt_id,
                    r.vec.len()
                )));
            }
            if r.vec.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("record {} has non-finite components", r.utt_id)));
            }
            if let Some(prev) = utts.insert(r.utt_id.as_str(), i) {
                return Err(Error::Config(format!(
                    "duplicate utt_id {} (records {prev} and {i})",
                    r.utt_id
                )));
            }
            match spk_sex.get(r.spk_id.as_str()) {
                Some(&(s, first)) if s != r.sex => {
                    return Err(Error::Config(format!(
                        "speaker {} labelled {} (record {first}) and {} (record {i})",
                        r.spk_id,
                        s.label(),
                        r.sex.label()
                    )))
                }
                Some(_) => {}
                None => {
                    spk_sex.insert(r.spk_id.as_str(), (r.sex, i));
                }
            }
        }
        Ok(Dataset { records, dim })
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count_sex(&self, sex: Sex) -> usize {
        self.records.iter().filter(|r| r.sex == sex).count()
    }

    /// Speakers in first-appearance order with their sex.
    pub fn speakers(&self) -> Vec<(String, Sex)> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for r in &self.records {
            if seen.insert(r.spk_id.as_str()) {
                out.push((r.spk_id.clone(), r.sex));
            }
        }
        out
    }

    /// Record indices grouped per speaker, keyed by speaker id.
    pub fn by_speaker(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut map: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            map.entry(r.spk_id.as_str()).or_default().push(i);
        }
        map
    }

    /// Same records with each vector replaced by `f(record)`.
    pub fn map_vectors<F>(&self, mut f: F) -> Result<Dataset>
    where
        F: FnMut(&EmbeddingRecord) -> Result<Vec<f64>>,
    {
        let records = self
            .records
            .iter()
            .map(|r| {
                Ok(EmbeddingRecord {
                    vec: f(r)?,
                    ..r.clone()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(records)
    }

    /// Replace every vector with its unit-length version. Not applied on
    /// ingestion unless requested.
    pub fn length_normalized(&self) -> Result<Dataset> {
        self.map_vectors(|r| {
            let n = r.vec.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n == 0.0 {
                return Err(Error::Domain(format!("zero-length vector {}", r.utt_id)));
            }
            Ok(r.vec.iter().map(|v| v / n).collect())
        })
    }

    pub(crate) fn subset(&self, keep: impl Fn(&EmbeddingRecord) -> bool) -> Result<Dataset> {
        Dataset::new(self.records.iter().filter(|r| keep(r)).cloned().collect())
    }
}

pub fn write_embeddings(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_csv(ds)?).map_err(|e| Error::io(path, e))
}

pub fn to_csv(ds: &Dataset) -> Result<String> {
    let mut out = String::from("utt_id,spk_id,sex");
    for i in 0..ds.dim() {
        let _ = write!(out, ",v{i}");
    }
    out.push('\n');
    for r in ds.records() {
        for id in [&r.utt_id, &r.spk_id] {
            if id.is_empty() || id.contains([',', '\n', '\r']) {
                return Err(Error::Config(format!("identifier {id:?} not representable in CSV")));
            }
        }
        out.push_str(&r.utt_id);
        out.push(',');
        out.push_str(&r.spk_id);
        out.push(',');
        out.push_str(r.sex.label());
        for v in &r.vec {
            // 17 significant digits round-trips every f64
            let _ = write!(out, ",{v:.16e}");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, &path.display().to_string())
}

/// Parses embedding CSV text. Rows are numbered from 1 at the header.
pub fn parse_csv(text: &str, origin: &str) -> Result<Dataset> {
    let err = |row: usize, msg: String| Error::Parse {
        path: origin.to_string(),
        row,
        msg,
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| err(1, "missing header".into()))?;
    let cols: Vec<&str> = header.trim_end_matches('\r').split(',').collect();
    if cols.len() < 5 || cols[..3] != ["utt_id", "spk_id", "sex"] {
        return Err(err(1, format!("bad header {header:?}")));
    }
    for (i, c) in cols[3..].iter().enumerate() {
        if *c != format!("v{i}") {
            return Err(err(1, format!("bad column name {c:?}, expected v{i}")));
        }
    }
    let dim = cols.len() - 3;

    let mut records = Vec::new();
    let mut utt_rows: HashMap<String, usize> = HashMap::new();
    let mut spk_rows: HashMap<String, (Sex, usize)> = HashMap::new();
    for (idx, line) in lines {
        let row = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 3 {
            return Err(err(
                row,
                format!("dimension mismatch: {} values, expected {dim}", fields.len().saturating_sub(3)),
            ));
        }
        let sex = Sex::parse(fields[2]).ok_or_else(|| err(row, format!("unknown sex label {:?}, row {row}", fields[2])))?;
        let vec = fields[3..]
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(row, format!("bad number {f:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let utt_id = fields[0].to_string();
        let spk_id = fields[1].to_string();
        if let Some(prev) = utt_rows.insert(utt_id.clone(), row) {
            return Err(err(row, format!("duplicate utt_id {utt_id:?} (first at row {prev})")));
        }
        match spk_rows.get(&spk_id) {
            Some(&(s, first)) if s != sex => {
                return Err(err(
                    row,
                    format!(
                        "speaker {spk_id:?} labelled {} in row {first} and {} in row {row}",
                        s.label(),
                        sex.label()
                    ),
                ))
            }
            Some(_) => {}
            None => {
                spk_rows.insert(spk_id.clone(), (sex, row));
            }
        }
        records.push(EmbeddingRecord {
            utt_id,
            spk_id,
            sex,
            vec,
        });
    }
    if records.is_empty() {
        return Err(err(1, "no data rows".into()));
    }
    Dataset::new(records)
}

/// Speaker-disjoint split performed independently per sex.
///
/// Each sex contributes `round(n * train_fraction)` speakers to the train
/// side, clamped so both sides keep at least one speaker of each sex.
pub fn split_speaker_disjoint(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Split(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let speakers = ds.speakers();
    let mut train_spk = BTreeSet::new();
    for sex in Sex::BOTH {
        let mut ids: Vec<&str> = speakers.iter().filter(|(_, s)| *s == sex).map(|(id, _)| id.as_str()).collect();
        if ids.len() < 2 {
            return Err(Error::Split(format!(
                "need at least 2 {} speakers, found {}",
                sex.label(),
                ids.len()
            )));
        }
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        let n_train = ((ids.len() as f64 * train_fraction).round() as usize).clamp(1, ids.len() - 1);
        train_spk.extend(ids[..n_train].iter().map(|s| s.to_string()));
    }
    let train = ds.subset(|r| train_spk.contains(&r.spk_id))?;
    let test = ds.subset(|r| !train_spk.contains(&r.spk_id))?;
    Ok((train, test))
}

/// Mean shift between the two sex classes.
#[derive(Debug, Clone, PartialEq)]
pub enum Shift {
    /// Magnitude along coordinate 0.
    Axis(f64),
    /// Magnitude spread evenly over every coordinate.
    Uniform(f64),
    Vector(Vec<f64>),
}

/// `a,b,...` is a vector, `axis:m` an axis shift, a bare number uniform.
impl FromStr for Shift {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad value {s:?} for shift"));
        if s.contains(',') {
            return s
                .split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|_| bad()))
                .collect::<Result<_>>()
                .map(Shift::Vector);
        }
        match s.trim().strip_prefix("axis:") {
            Some(m) => m.trim().parse().map(Shift::Axis).map_err(|_| bad()),
            None => s.trim().parse().map(Shift::Uniform).map_err(|_| bad()),
        }
    }
}

impl fmt::Display for Shift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shift::Axis(m) => write!(f, "axis:{m}"),
            Shift::Uniform(m) => write!(f, "{m}"),
            Shift::Vector(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "{}", parts.join(","))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub dim: usize,
    pub speakers_per_sex: usize,
    pub utts_per_speaker: usize,
    pub shift: Shift,
    pub speaker_spread: f64,
    pub utterance_spread: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            dim: 16,
            speakers_per_sex: 50,
            utts_per_speaker: 10,
            shift: Shift::Uniform(6.0),
            speaker_spread: 1.0,
            utterance_spread: 0.5,
            seed: crate::DEFAULT_SEED,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::Config(format!("dim {} < 2", self.dim)));
        }
        if self.speakers_per_sex < 1 || self.utts_per_speaker < 1 {
            return Err(Error::Config("speaker and utterance counts must be >= 1".into()));
        }
        if !(self.speaker_spread > 0.0 && self.utterance_spread > 0.0) {
            return Err(Error::Config("speaker and utterance spreads must be > 0".into()));
        }
        match &self.shift {
            Shift::Axis(m) | Shift::Uniform(m) if !m.is_finite() => Err(Error::Config("non-finite shift".into())),
            Shift::Vector(v) if v.len() != self.dim => Err(Error::Config(format!(
                "shift vector has {} components, dim is {}",
                v.len(),
                self.dim
            ))),
            Shift::Vector(v) if v.iter().any(|x| !x.is_finite()) => Err(Error::Config("non-finite shift".into())),
            _ => Ok(()),
        }
    }

    pub fn shift_vector(&self) -> Vec<f64> {
        match &self.shift {
            Shift::Axis(m) => {
                let mut v = vec![0.0; self.dim];
                v[0] = *m;
                v
            }
            Shift::Uniform(m) => vec![m / (self.dim as f64).sqrt(); self.dim],
            Shift::Vector(v) => v.clone(),
        }
    }

    /// Per-coordinate variance of one utterance given its class.
    pub fn class_variance(&self) -> f64 {
        self.speaker_spread.powi(2) + self.utterance_spread.powi(2)
    }

    /// Class mean: `+shift/2` for class 0 (M), `-shift/2` for class 1 (F).
    pub fn class_mean(&self, sex: Sex) -> Vec<f64> {
        let sign = if sex == Sex::M { 0.5 } else { -0.5 };
        self.shift_vector().into_iter().map(|s| sign * s).collect()
    }

    /// Squared Mahalanobis distance between the class means; also the
    /// within-class variance of the true LLR.
    pub fn separation(&self) -> f64 {
        self.shift_vector().iter().map(|s| s * s).sum::<f64>() / self.class_variance()
    }

    /// True per-utterance LLR `log p(x|M) / p(x|F)`.
    pub fn true_llr(&self, x: &[f64]) -> f64 {
        let var = self.class_variance();
        let m0 = self.class_mean(Sex::M);
        let m1 = self.class_mean(Sex::F);
        let mut lin = 0.0;
        let mut quad = 0.0;
        for ((xi, a), b) in x.iter().zip(&m0).zip(&m1) {
            lin += (a - b) * xi;
            quad += a * a - b * b;
        }
        (lin - 0.5 * quad) / var
    }
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::with_capacity(2 * cfg.speakers_per_sex * cfg.utts_per_speaker);
    for sex in Sex::BOTH {
        let class_mean = cfg.class_mean(sex);
        for s in 0..cfg.speakers_per_sex {
            let spk_id = format!("{}{s:04}", sex.label());
            let spk_mean: Vec<f64> = class_mean
                .iter()
                .map(|m| {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    m + cfg.speaker_spread * n
                })
                .collect();
            for u in 0..cfg.utts_per_speaker {
                let vec = spk_mean
                    .iter()
                    .map(|m| {
                        let n: f64 = StandardNormal.sample(&mut rng);
                        m + cfg.utterance_spread * n
                    })
                    .collect();
                records.push(EmbeddingRecord {
                    utt_id: format!("{spk_id}_u{u:03}"),
                    spk_id: spk_id.clone(),
                    sex,
                    vec,
                });
            }
        }
    }
    Dataset::new(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            dim: 3,
            speakers_per_sex: 5,
            utts_per_speaker: 3,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn generator_counts() {
        let ds = generate_synthetic(&SynthConfig::default()).unwrap();
        assert_eq!(ds.len(), 1000);
        assert_eq!(ds.speakers().len(), 100);
        assert_eq!(ds.count_sex(Sex::M), 500);
        assert_eq!(ds.count_sex(Sex::F), 500);
    }

    #[test]
    fn generator_rejects_bad_config() {
        for cfg in [
            SynthConfig { speaker_spread: 0.0, ..small() },
            SynthConfig { utterance_spread: -1.0, ..small() },
            SynthConfig { speakers_per_sex: 0, ..small() },
            SynthConfig { utts_per_speaker: 0, ..small() },
            SynthConfig { dim: 1, ..small() },
        ] {
            assert!(matches!(generate_synthetic(&cfg), Err(Error::Config(_))));
        }
    }

    #[test]
    fn generator_is_seed_deterministic() {
        let a = generate_synthetic(&small()).unwrap();
        let b = generate_synthetic(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&SynthConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_shift_gives_zero_llr() {
        let cfg = SynthConfig {
            shift: Shift::Axis(0.0),
            ..small()
        };
        for x in [[1.0, -2.0, 3.0], [0.0, 0.0, 0.0], [-7.5, 0.1, 2.0]] {
            assert_eq!(cfg.true_llr(&x), 0.0);
        }
    }

    #[test]
    fn two_dim_llr_is_two_x0() {
        let cfg = SynthConfig {
            dim: 2,
            shift: Shift::Vector(vec![4.0, 0.0]),
            speaker_spread: 1.0,
            utterance_spread: 1.0,
            ..small()
        };
        for x in [[1.0, 5.0], [-0.25, 2.0], [3.0, -1.0]] {
            assert!((cfg.true_llr(&x) - 2.0 * x[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_shift_keeps_separation() {
        let axis = SynthConfig {
            shift: Shift::Axis(6.0),
            ..SynthConfig::default()
        };
        let uni = SynthConfig::default();
        assert!((axis.separation() - uni.separation()).abs() < 1e-12);
        assert!((uni.separation() - 36.0 / 1.25).abs() < 1e-12);
        let v = uni.shift_vector();
        assert!(v.iter().all(|&x| (x - 1.5).abs() < 1e-12));
    }

    #[test]
    fn csv_round_trip() {
        let ds = generate_synthetic(&small()).unwrap();
        let back = parse_csv(&to_csv(&ds).unwrap(), "mem").unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn unknown_sex_names_row() {
        let text = "utt_id,spk_id,sex,v0,v1\na,s1,M,1,2\nb,s2,X,1,2\n";
        let e = parse_csv(text, "t.csv").unwrap_err().to_string();
        assert!(e.contains("unknown sex label"), "{e}");
        assert!(e.contains("row 3"), "{e}");
    }

    #[test]
    fn conflicting_speaker_sex_names_rows() {
        let mut text = String::from("utt_id,spk_id,sex,v0,v1\n");
        for i in 0..8 {
            let sex = if i == 7 { "F" } else { "M" };
            let spk = if i == 1 || i == 7 { "s1" } else { "s0" };
            text.push_str(&format!("u{i},{spk},{sex},1,2\n"));
        }
        // s1 first appears at row 3, conflicting row is 9
        let e = parse_csv(&text, "t.csv").unwrap_err().to_string();
        assert!(e.contains("\"s1\"") && e.contains("row 3") && e.contains("row 9"), "{e}");
    }

    #[test]
    fn dimension_mismatch_and_duplicates() {
        let e = parse_csv("utt_id,spk_id,sex,v0,v1\na,s,M,1,2\nb,s,M,1\n", "t").unwrap_err();
        assert!(e.to_string().contains("dimension mismatch"));
        let e = parse_csv("utt_id,spk_id,sex,v0,v1\na,s,M,1,2\na,s,M,1,3\n", "t").unwrap_err();
        assert!(e.to_string().contains("duplicate utt_id"));
    }

    #[test]
    fn split_counts_and_determinism() {
        let ds = generate_synthetic(&SynthConfig {
            dim: 2,
            ..SynthConfig::default()
        })
        .unwrap();
        let (tr, te) = split_speaker_disjoint(&ds, 0.8, 9).unwrap();
        let tr_spk = tr.speakers();
        let te_spk = te.speakers();
        assert_eq!(tr_spk.len(), 80);
        assert_eq!(te_spk.len(), 20);
        assert_eq!(tr_spk.iter().filter(|(_, s)| *s == Sex::M).count(), 40);
        assert_eq!(te_spk.iter().filter(|(_, s)| *s == Sex::F).count(), 10);
        assert!(tr_spk.iter().all(|s| !te_spk.contains(s)));
        assert_eq!(tr.len() + te.len(), ds.len());
        let (tr2, te2) = split_speaker_disjoint(&ds, 0.8, 9).unwrap();
        assert_eq!(tr, tr2);
        assert_eq!(te, te2);
    }

    #[test]
    fn split_needs_two_speakers_per_sex() {
        let mut recs = Vec::new();
        for (spk, sex) in [("m1", Sex::M), ("m2", Sex::M), ("f1", Sex::F)] {
            recs.push(EmbeddingRecord {
                utt_id: format!("{spk}_0"),
                spk_id: spk.into(),
                sex,
                vec: vec![0.0, 1.0],
            });
        }
        let ds = Dataset::new(recs).unwrap();
        assert!(matches!(split_speaker_disjoint(&ds, 0.5, 0), Err(Error::Split(_))));
    }

    #[test]
    fn shift_text_round_trips() {
        for s in ["axis:4", "6", "1,-2.5,0"] {
            let shift: Shift = s.parse().unwrap();
            assert_eq!(shift.to_string(), s);
        }
        assert_eq!("axis:3".parse::<Shift>().unwrap(), Shift::Axis(3.0));
        assert!("axis:x".parse::<Shift>().is_err());
        assert!("1,,2".parse::<Shift>().is_err());
    }
}
