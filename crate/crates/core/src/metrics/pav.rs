use super::ScoreSet;
use crate::error::Result;

/// One level set of the isotonic fit: a run of adjacent scores sharing one
/// calibrated posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct PavBlock {
    pub lo: f64,
    pub hi: f64,
    pub n_tar: usize,
    pub n_non: usize,
}

impl PavBlock {
    pub fn posterior(&self) -> f64 {
        self.n_tar as f64 / (self.n_tar + self.n_non) as f64
    }
}

/// Pool-adjacent-violators fit of P(target | score), blocks in increasing
/// score order. Tied scores always share a block.
pub fn pav_blocks(scores: &ScoreSet) -> Result<Vec<PavBlock>> {
    scores.validate()?;
    let mut items: Vec<(f64, bool)> = scores
        .tar
        .iter()
        .map(|&s| (s, true))
        .chain(scores.non.iter().map(|&s| (s, false)))
        .collect();
    items.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut stack: Vec<PavBlock> = Vec::new();
    let mut i = 0;
    while i < items.len() {
        let s = items[i].0;
        let mut block = PavBlock {
            lo: s,
            hi: s,
            n_tar: 0,
            n_non: 0,
        };
        while i < items.len() && items[i].0 == s {
            if items[i].1 {
                block.n_tar += 1;
            } else {
                block.n_non += 1;
            }
            i += 1;
        }
        stack.push(block);
        while stack.len() >= 2 {
            let last = &stack[stack.len() - 1];
            let prev = &stack[stack.len() - 2];
            // p_prev >= p_last, compared without division
            if prev.n_tar * (last.n_tar + last.n_non) >= last.n_tar * (prev.n_tar + prev.n_non) {
                let last = stack.pop().expect("len >= 2");
                let prev = stack.last_mut().expect("len >= 1");
                prev.hi = last.hi;
                prev.n_tar += last.n_tar;
                prev.n_non += last.n_non;
            } else {
                break;
            }
        }
    }
    Ok(stack)
}

/// LLR of a posterior after removing the empirical prior log-odds.
/// Posteriors of exactly 0 and 1 map to -inf and +inf.
pub(crate) fn posterior_to_llr(n_tar: usize, n_non: usize, prior_logit: f64) -> f64 {
    match (n_tar, n_non) {
        (0, _) => f64::NEG_INFINITY,
        (_, 0) => f64::INFINITY,
        (t, n) => (t as f64 / n as f64).ln() - prior_logit,
    }
}

/// PAV-calibrated LLRs, in the same order as `scores.tar` and `scores.non`.
pub fn pav_llrs(scores: &ScoreSet) -> Result<(Vec<f64>, Vec<f64>)> {
    let blocks = pav_blocks(scores)?;
    let prior_logit = (scores.tar.len() as f64 / scores.non.len() as f64).ln();
    let bounds: Vec<(f64, f64)> = blocks
        .iter()
        .map(|b| (b.hi, posterior_to_llr(b.n_tar, b.n_non, prior_logit)))
        .collect();
    let lookup = |s: f64| -> f64 {
        let idx = bounds.partition_point(|(hi, _)| *hi < s);
        bounds[idx].1
    };
    Ok((
        scores.tar.iter().map(|&s| lookup(s)).collect(),
        scores.non.iter().map(|&s| lookup(s)).collect(),
    ))
}
