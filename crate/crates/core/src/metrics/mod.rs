//! Detection-score metrology: PAV calibration, EER, Cllr, ECE / D_ECE and
//! voice similarity matrices.

mod cllr;
mod eer;
mod pav;
mod simmat;

use serde::Serialize;

pub use cllr::{
    binary_entropy, cllr, cllr_min, d_ece, disclosure_gap, ece, ece_profile, integrate_disclosure, prior_grid,
    profile_to_csv, softplus_bits, EcePoint, ECE_GRID_POINTS,
};
pub use eer::{eer, eer_with, rocch, EerMethod};
pub use pav::{pav_blocks, pav_llrs, PavBlock};
pub use simmat::{cell_value, cosine, similarity_matrix, CosineScorer, PairScorer, SimilarityMatrix};

use crate::error::{Error, Result};

/// Detection scores split by ground truth; higher means "more target".
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreSet {
    pub tar: Vec<f64>,
    pub non: Vec<f64>,
}

impl ScoreSet {
    pub fn new(tar: Vec<f64>, non: Vec<f64>) -> Self {
        ScoreSet { tar, non }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tar.is_empty() || self.non.is_empty() {
            return Err(Error::Metric(format!(
                "need target and non-target scores (got {} and {})",
                self.tar.len(),
                self.non.len()
            )));
        }
        if self.tar.iter().chain(&self.non).any(|s| !s.is_finite()) {
            return Err(Error::Metric("non-finite score".into()));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScoreSet {
        ScoreSet {
            tar: self.tar.iter().map(|&s| f(s)).collect(),
            non: self.non.iter().map(|&s| f(s)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub eer: f64,
    pub d_ece_bits: f64,
    pub cllr_min_bits: f64,
    pub n_tar: usize,
    pub n_non: usize,
    #[serde(skip)]
    pub ece_profile: Vec<EcePoint>,
}

/// Grid used for exported ECE profiles.
pub const PROFILE_GRID_POINTS: usize = 101;

pub fn evaluate(scores: &ScoreSet) -> Result<EvalReport> {
    let (t, n) = pav_llrs(scores)?;
    Ok(EvalReport {
        eer: eer(scores)?,
        d_ece_bits: integrate_disclosure(&t, &n, &prior_grid(ECE_GRID_POINTS))?,
        cllr_min_bits: cllr(&t, &n)?,
        n_tar: scores.tar.len(),
        n_non: scores.non.len(),
        ece_profile: ece_profile(&t, &n, &prior_grid(PROFILE_GRID_POINTS))?,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
