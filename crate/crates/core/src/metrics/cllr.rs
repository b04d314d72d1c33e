//! Cross-entropy costs of LLRs, in bits.
//!
//! Infinite LLRs follow the limit conventions `log2(1 + e^-inf) = 0` and
//! `log2(1 + e^inf) = inf`, so a PAV block holding only non-targets (LLR
//! `-inf`) contributes nothing to the non-target term.

use std::f64::consts::LN_2;

use super::pav::pav_llrs;
use super::ScoreSet;
use crate::error::{Error, Result};

/// Prior grid size used for D_ECE integration.
pub const ECE_GRID_POINTS: usize = 2001;

/// `log2(1 + e^x)` without overflow.
pub fn softplus_bits(x: f64) -> f64 {
    if x == f64::INFINITY {
        f64::INFINITY
    } else if x == f64::NEG_INFINITY {
        0.0
    } else if x > 0.0 {
        (x + (-x).exp().ln_1p()) / LN_2
    } else {
        x.exp().ln_1p() / LN_2
    }
}

fn check(tar: &[f64], non: &[f64]) -> Result<()> {
    if tar.is_empty() || non.is_empty() {
        return Err(Error::Metric("both target and non-target LLRs are required".into()));
    }
    if tar.iter().chain(non).any(|v| v.is_nan()) {
        return Err(Error::Metric("NaN LLR".into()));
    }
    Ok(())
}

fn mean(it: impl Iterator<Item = f64>, n: usize) -> f64 {
    it.sum::<f64>() / n as f64
}

pub fn cllr(tar_llrs: &[f64], non_llrs: &[f64]) -> Result<f64> {
    check(tar_llrs, non_llrs)?;
    let t = mean(tar_llrs.iter().map(|l| softplus_bits(-l)), tar_llrs.len());
    let n = mean(non_llrs.iter().map(|l| softplus_bits(*l)), non_llrs.len());
    Ok(0.5 * (t + n))
}

pub fn cllr_min(scores: &ScoreSet) -> Result<f64> {
    let (t, n) = pav_llrs(scores)?;
    cllr(&t, &n)
}

pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
}

/// Empirical cross-entropy at target prior `prior`. Zero at the end points.
pub fn ece(tar_llrs: &[f64], non_llrs: &[f64], prior: f64) -> Result<f64> {
    check(tar_llrs, non_llrs)?;
    if prior <= 0.0 || prior >= 1.0 {
        return Ok(0.0);
    }
    let lp = (prior / (1.0 - prior)).ln();
    let t = mean(tar_llrs.iter().map(|l| softplus_bits(-l - lp)), tar_llrs.len());
    let n = mean(non_llrs.iter().map(|l| softplus_bits(l + lp)), non_llrs.len());
    Ok(prior * t + (1.0 - prior) * n)
}

/// Uniform grid over `[0, 1]` with `points` nodes.
pub fn prior_grid(points: usize) -> Vec<f64> {
    let last = (points - 1) as f64;
    (0..points).map(|i| i as f64 / last).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EcePoint {
    pub prior: f64,
    pub ece_cal: f64,
    pub ece_default: f64,
}

/// `H_b(prior) - ECE(prior)`, accumulated per trial so that zero LLRs give
/// exactly zero.
pub fn disclosure_gap(tar_llrs: &[f64], non_llrs: &[f64], prior: f64) -> Result<f64> {
    check(tar_llrs, non_llrs)?;
    if prior <= 0.0 || prior >= 1.0 {
        return Ok(0.0);
    }
    let lp = (prior / (1.0 - prior)).ln();
    let t0 = softplus_bits(-lp);
    let n0 = softplus_bits(lp);
    let t = mean(tar_llrs.iter().map(|l| t0 - softplus_bits(-l - lp)), tar_llrs.len());
    let n = mean(non_llrs.iter().map(|l| n0 - softplus_bits(l + lp)), non_llrs.len());
    Ok(prior * t + (1.0 - prior) * n)
}

/// ECE of the given LLRs next to the zero-evidence reference `H_b(prior)`.
pub fn ece_profile(tar_llrs: &[f64], non_llrs: &[f64], grid: &[f64]) -> Result<Vec<EcePoint>> {
    grid.iter()
        .map(|&p| {
            let reference = binary_entropy(p);
            Ok(EcePoint {
                prior: p,
                ece_cal: reference - disclosure_gap(tar_llrs, non_llrs, p)?,
                ece_default: reference,
            })
        })
        .collect()
}

/// Trapezoid integral of `ece_default - ece_cal` over a prior grid.
pub fn integrate_disclosure(tar_llrs: &[f64], non_llrs: &[f64], grid: &[f64]) -> Result<f64> {
    let gaps = grid
        .iter()
        .map(|&p| disclosure_gap(tar_llrs, non_llrs, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(grid
        .windows(2)
        .zip(gaps.windows(2))
        .map(|(p, g)| 0.5 * (g[0] + g[1]) * (p[1] - p[0]))
        .sum())
}

/// Expected information disclosed by the scores after oracle calibration,
/// in bits; within `[0, 1/(2 ln 2)]`.
pub fn d_ece(scores: &ScoreSet) -> Result<f64> {
    let (t, n) = pav_llrs(scores)?;
    integrate_disclosure(&t, &n, &prior_grid(ECE_GRID_POINTS))
}

pub fn profile_to_csv(profile: &[EcePoint]) -> String {
    let mut s = String::from("pi,ece_cal,ece_default\n");
    for p in profile {
        s.push_str(&format!("{},{},{}\n", p.prior, p.ece_cal, p.ece_default));
    }
    s
}
