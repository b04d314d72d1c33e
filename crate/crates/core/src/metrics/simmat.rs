//! Speaker-level voice log-similarity matrices.

use std::fmt::Write as _;

use crate::embeddings::{Dataset, Sex};
use crate::error::{Error, Result};

/// Scores one pair of utterance embeddings.
pub trait PairScorer: Send + Sync {
    fn name(&self) -> &str;
    fn score(&self, a: &[f64], b: &[f64]) -> f64;
}

/// Cosine similarity times a fixed scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineScorer {
    pub scale: f64,
}

impl Default for CosineScorer {
    fn default() -> Self {
        CosineScorer { scale: 5.0 }
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

impl PairScorer for CosineScorer {
    fn name(&self) -> &str {
        "cosine"
    }

    fn score(&self, a: &[f64], b: &[f64]) -> f64 {
        self.scale * cosine(a, b)
    }
}

/// Cell value from the pair scores between two speakers: the log of the
/// mean sigmoid. Swap this function to change the similarity definition.
pub fn cell_value(scores: &[f64]) -> f64 {
    let m = scores.iter().map(|s| 1.0 / (1.0 + (-s).exp())).sum::<f64>() / scores.len() as f64;
    m.ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub speakers: Vec<(String, Sex)>,
    /// Row-major; `None` marks a diagonal cell of a single-utterance speaker.
    pub cells: Vec<Option<f64>>,
}

impl SimilarityMatrix {
    pub fn size(&self) -> usize {
        self.speakers.len()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.cells[i * self.size() + j]
    }

    /// Mean off-diagonal cell over same-sex and cross-sex speaker pairs.
    pub fn sex_block_means(&self) -> (f64, f64) {
        let n = self.size();
        let (mut within, mut nw, mut cross, mut nc) = (0.0, 0usize, 0.0, 0usize);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let Some(v) = self.get(i, j) else { continue };
                if self.speakers[i].1 == self.speakers[j].1 {
                    within += v;
                    nw += 1;
                } else {
                    cross += v;
                    nc += 1;
                }
            }
        }
        (within / nw.max(1) as f64, cross / nc.max(1) as f64)
    }

    /// Mean diagonal minus mean off-diagonal cell.
    pub fn diagonal_contrast(&self) -> f64 {
        let n = self.size();
        let (mut d, mut nd, mut o, mut no) = (0.0, 0usize, 0.0, 0usize);
        for i in 0..n {
            for j in 0..n {
                if let Some(v) = self.get(i, j) {
                    if i == j {
                        d += v;
                        nd += 1;
                    } else {
                        o += v;
                        no += 1;
                    }
                }
            }
        }
        d / nd.max(1) as f64 - o / no.max(1) as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("spk");
        for (id, _) in &self.speakers {
            s.push(',');
            s.push_str(id);
        }
        s.push('\n');
        for (i, (id, _)) in self.speakers.iter().enumerate() {
            s.push_str(id);
            for j in 0..self.size() {
                match self.get(i, j) {
                    Some(v) => {
                        let _ = write!(s, ",{v}");
                    }
                    None => s.push_str(",NA"),
                }
            }
            s.push('\n');
        }
        s
    }

    /// Plain-text greyscale PGM; defined cells are min-max scaled to 0..255
    /// (brighter is more similar), undefined cells are 0.
    pub fn to_pgm(&self) -> String {
        let n = self.size();
        let defined: Vec<f64> = self.cells.iter().flatten().copied().collect();
        let lo = defined.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = defined.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = format!("P2\n{n} {n}\n255\n");
        for i in 0..n {
            let row: Vec<String> = (0..n)
                .map(|j| match self.get(i, j) {
                    None => "0".to_string(),
                    Some(_) if hi <= lo => "128".to_string(),
                    Some(v) => (((v - lo) / (hi - lo)) * 255.0).round().to_string(),
                })
                .collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }
}

/// Speakers are ordered male first, then female, each by id, so sex blocks
/// appear as squares along the diagonal.
pub fn similarity_matrix(ds: &Dataset, scorer: &dyn PairScorer) -> Result<SimilarityMatrix> {
    let mut speakers = ds.speakers();
    if speakers.len() < 2 {
        return Err(Error::Metric("similarity matrix needs at least 2 speakers".into()));
    }
    speakers.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let groups = ds.by_speaker();
    let recs = ds.records();
    let n = speakers.len();
    let mut cells = vec![None; n * n];
    let mut scores = Vec::new();
    for i in 0..n {
        let ui = &groups[speakers[i].0.as_str()];
        for j in 0..n {
            let uj = &groups[speakers[j].0.as_str()];
            scores.clear();
            for &a in ui {
                for &b in uj {
                    if a != b {
                        scores.push(scorer.score(&recs[a].vec, &recs[b].vec));
                    }
                }
            }
            if !scores.is_empty() {
                cells[i * n + j] = Some(cell_value(&scores));
            }
        }
    }
    Ok(SimilarityMatrix { speakers, cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::EmbeddingRecord;

    struct Zero;
    impl PairScorer for Zero {
        fn name(&self) -> &str {
            "zero"
        }
        fn score(&self, _: &[f64], _: &[f64]) -> f64 {
            0.0
        }
    }

    /// Scores `a[0] * b[0]`; with first coordinates 0, 1, 2, 3 the pair
    /// scores are products of those values.
    struct Product;
    impl PairScorer for Product {
        fn name(&self) -> &str {
            "product"
        }
        fn score(&self, a: &[f64], b: &[f64]) -> f64 {
            a[0] * b[0]
        }
    }

    fn toy() -> Dataset {
        let rec = |u: &str, s: &str, sex, v: f64| EmbeddingRecord {
            utt_id: u.into(),
            spk_id: s.into(),
            sex,
            vec: vec![v, 1.0],
        };
        Dataset::new(vec![
            rec("a1", "A", Sex::M, 0.0),
            rec("a2", "A", Sex::M, 1.0),
            rec("b1", "B", Sex::F, 2.0),
            rec("b2", "B", Sex::F, 3.0),
        ])
        .unwrap()
    }

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn zero_scorer_gives_log_half() {
        let m = similarity_matrix(&toy(), &Zero).unwrap();
        assert!(m.cells.iter().all(|c| (c.unwrap() - 0.5f64.ln()).abs() < 1e-15));
    }

    #[test]
    fn hand_computed_cells() {
        let m = similarity_matrix(&toy(), &Product).unwrap();
        // A-A: pairs (a1,a2),(a2,a1) -> score 0 twice
        assert!((m.get(0, 0).unwrap() - sig(0.0).ln()).abs() < 1e-12);
        // B-B: 2*3 twice
        assert!((m.get(1, 1).unwrap() - sig(6.0).ln()).abs() < 1e-12);
        // A-B: 0*2, 0*3, 1*2, 1*3
        let ab = ((sig(0.0) * 2.0 + sig(2.0) + sig(3.0)) / 4.0).ln();
        assert!((m.get(0, 1).unwrap() - ab).abs() < 1e-12);
        assert!((m.get(1, 0).unwrap() - ab).abs() < 1e-12);
    }

    #[test]
    fn single_utterance_diagonal_undefined() {
        let ds = Dataset::new(vec![
            EmbeddingRecord {
                utt_id: "x".into(),
                spk_id: "X".into(),
                sex: Sex::M,
                vec: vec![1.0, 0.0],
            },
            EmbeddingRecord {
                utt_id: "y".into(),
                spk_id: "Y".into(),
                sex: Sex::F,
                vec: vec![0.0, 1.0],
            },
        ])
        .unwrap();
        let m = similarity_matrix(&ds, &CosineScorer::default()).unwrap();
        assert_eq!(m.get(0, 0), None);
        assert!(m.get(0, 1).is_some());
        assert!(m.to_csv().contains("NA"));
    }

    #[test]
    fn pgm_header_and_size() {
        let m = similarity_matrix(&toy(), &Product).unwrap();
        let pgm = m.to_pgm();
        let mut lines = pgm.lines();
        assert_eq!(lines.next(), Some("P2"));
        assert_eq!(lines.next(), Some("2 2"));
        assert_eq!(lines.next(), Some("255"));
        assert_eq!(lines.count(), 2);
    }
}
