#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use zevox::flow::{CouplingFlow, FlowModel, FlowOptions, LinearFlow};
use zevox::metrics::ScoreSet;
use zevox::psola::Waveform;

pub const RATE: u32 = 16000;

pub fn random_linear(d: usize, seed: u64) -> FlowModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<f64> = (0..d * d)
        .map(|i| if i % (d + 1) == 0 { 1.0 } else { 0.0 } + rng.gen_range(-0.4..0.4))
        .collect();
    let b: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    FlowModel::new(Box::new(LinearFlow::from_parts(d, &a, &b).unwrap()), 4.0).unwrap()
}

pub fn random_coupling(d: usize, seed: u64) -> FlowModel {
    let opts = FlowOptions {
        hidden: 16,
        seed,
        ..FlowOptions::default()
    };
    FlowModel::new(Box::new(CouplingFlow::random(d, &opts, seed + 1, 0.3)), 4.0).unwrap()
}

pub fn random_points(d: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect()
}

/// Relative error of the analytic NLL gradient against central differences.
pub fn gradient_rel_error(model: &FlowModel, xs: &[Vec<f64>]) -> f64 {
    let batch: Vec<(&[f64], usize)> = xs.iter().enumerate().map(|(i, x)| (x.as_slice(), i % 2)).collect();
    let (_, g) = model.nll_and_grad(&batch).unwrap();
    let p0 = model.transform().params();
    let mut m = model.clone();
    let h = 1e-6;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..p0.len() {
        let mut p = p0.clone();
        p[i] += h;
        m.transform_mut().set_params(&p).unwrap();
        let up = m.nll(&batch).unwrap();
        p[i] -= 2.0 * h;
        m.transform_mut().set_params(&p).unwrap();
        let down = m.nll(&batch).unwrap();
        let fd = (up - down) / (2.0 * h);
        num += (fd - g[i]).powi(2);
        den += g[i].powi(2);
    }
    (num / den.max(1e-300)).sqrt()
}

/// `ln|det J|` of the forward map at `x`, from a central-difference Jacobian.
pub fn numeric_logdet(model: &FlowModel, x: &[f64]) -> f64 {
    let d = x.len();
    let h = 1e-6;
    let mut j = DMatrix::zeros(d, d);
    for c in 0..d {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[c] += h;
        xm[c] -= h;
        let zp = model.forward(&xp).unwrap().0;
        let zm = model.forward(&xm).unwrap().0;
        for r in 0..d {
            j[(r, c)] = (zp[r] - zm[r]) / (2.0 * h);
        }
    }
    j.determinant().abs().ln()
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

pub fn sine(f: f64, secs: f64) -> Waveform {
    let n = (secs * RATE as f64) as usize;
    Waveform::new(
        (0..n)
            .map(|i| 0.5 * (2.0 * std::f64::consts::PI * f * i as f64 / RATE as f64).sin())
            .collect(),
        RATE,
    )
    .unwrap()
}

pub fn sawtooth(f: f64, secs: f64) -> Waveform {
    let n = (secs * RATE as f64) as usize;
    Waveform::new(
        (0..n)
            .map(|i| {
                let ph = f * i as f64 / RATE as f64;
                0.5 * (2.0 * (ph - ph.floor()) - 1.0)
            })
            .collect(),
        RATE,
    )
    .unwrap()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    assert!(!v.is_empty(), "median of nothing");
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Best monotone step posterior by exhaustive search over contiguous
/// groupings of the tie-blocks in score order. Returns per-trial posteriors
/// (targets then non-targets, in input order) and the minimal NLL.
pub fn brute_force_isotonic(s: &ScoreSet) -> (Vec<f64>, Vec<f64>, f64) {
    let mut uniq: Vec<f64> = s.tar.iter().chain(&s.non).copied().collect();
    uniq.sort_by(f64::total_cmp);
    uniq.dedup();
    let counts: Vec<(f64, f64)> = uniq
        .iter()
        .map(|&u| {
            (
                s.tar.iter().filter(|&&t| t == u).count() as f64,
                s.non.iter().filter(|&&n| n == u).count() as f64,
            )
        })
        .collect();
    let m = uniq.len();
    let nll_term = |k: f64, p: f64| if k == 0.0 { 0.0 } else { -k * p.ln() };
    let mut best = (f64::INFINITY, Vec::new());
    for mask in 0u32..(1 << (m - 1)) {
        // bit i set => cut between block i and i+1
        let mut levels = vec![0.0; m];
        let mut start = 0;
        let mut prev_p = -1.0;
        let mut ok = true;
        let mut nll = 0.0;
        for i in 0..m {
            if i == m - 1 || mask & (1 << i) != 0 {
                let (t, n) = counts[start..=i].iter().fold((0.0, 0.0), |a, c| (a.0 + c.0, a.1 + c.1));
                let p = t / (t + n);
                if p < prev_p {
                    ok = false;
                    break;
                }
                prev_p = p;
                nll += nll_term(t, p) + nll_term(n, 1.0 - p);
                for l in &mut levels[start..=i] {
                    *l = p;
                }
                start = i + 1;
            }
        }
        if ok && nll < best.0 - 1e-12 {
            best = (nll, levels);
        }
    }
    let post = |x: f64| best.1[uniq.iter().position(|&u| u == x).unwrap()];
    (
        s.tar.iter().map(|&x| post(x)).collect(),
        s.non.iter().map(|&x| post(x)).collect(),
        best.0,
    )
}
