use crate::embeddings::{Dataset, Sex};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AttackerConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for AttackerConfig {
    fn default() -> Self {
        AttackerConfig {
            iterations: 500,
            learning_rate: 0.5,
            l2: 1e-3,
        }
    }
}

/// Linear logistic-regression sex classifier. Female is the target class,
/// so `score` grows with evidence for F.
#[derive(Debug, Clone, PartialEq)]
pub struct Attacker {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Protection applied to the data the attacker was trained on.
    pub trained_on: String,
    pub loss_curve: Vec<f64>,
}

impl Attacker {
    pub fn score(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub fn accuracy(&self, ds: &Dataset) -> f64 {
        let correct = ds
            .records()
            .iter()
            .filter(|r| (self.score(&r.vec) > 0.0) == (r.sex == Sex::F))
            .count();
        correct as f64 / ds.len() as f64
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Full-batch gradient descent on standardised features with a small L2
/// penalty; the returned weights act on raw coordinates.
pub fn train_attacker(train: &Dataset, cfg: &AttackerConfig, trained_on: &str) -> Result<Attacker> {
    for sex in Sex::BOTH {
        if train.count_sex(sex) == 0 {
            return Err(Error::Training(format!("attacker needs both sexes; no {} records", sex.label())));
        }
    }
    if cfg.iterations == 0 || !(cfg.learning_rate > 0.0) || cfg.l2 < 0.0 {
        return Err(Error::Config("attacker needs iterations >= 1, learning rate > 0, l2 >= 0".into()));
    }
    let d = train.dim();
    let n = train.len() as f64;
    let recs = train.records();
    let mean: Vec<f64> = (0..d).map(|j| recs.iter().map(|r| r.vec[j]).sum::<f64>() / n).collect();
    let scale: Vec<f64> = (0..d)
        .map(|j| {
            let var = recs.iter().map(|r| (r.vec[j] - mean[j]).powi(2)).sum::<f64>() / n;
            if var > 1e-24 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let xs: Vec<Vec<f64>> = recs
        .iter()
        .map(|r| (0..d).map(|j| (r.vec[j] - mean[j]) / scale[j]).collect())
        .collect();
    let ys: Vec<f64> = recs.iter().map(|r| if r.sex == Sex::F { 1.0 } else { 0.0 }).collect();

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut loss_curve = Vec::with_capacity(cfg.iterations);
    let mut gw = vec![0.0; d];
    for _ in 0..cfg.iterations {
        gw.iter_mut().for_each(|g| *g = 0.0);
        let mut gb = 0.0;
        let mut loss = 0.0;
        for (x, &y) in xs.iter().zip(&ys) {
            let a = w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + b;
            let p = sigmoid(a);
            // log(1 + e^a) - y a
            loss += a.max(0.0) + (-a.abs()).exp().ln_1p() - y * a;
            let e = p - y;
            for (g, xi) in gw.iter_mut().zip(x) {
                *g += e * xi;
            }
            gb += e;
        }
        loss = loss / n + 0.5 * cfg.l2 * w.iter().map(|v| v * v).sum::<f64>();
        loss_curve.push(loss);
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= cfg.learning_rate * (g / n + cfg.l2 * *wi);
        }
        b -= cfg.learning_rate * gb / n;
    }
    let weights: Vec<f64> = w.iter().zip(&scale).map(|(wi, s)| wi / s).collect();
    let bias = b - weights.iter().zip(&mean).map(|(wi, m)| wi * m).sum::<f64>();
    if weights.iter().any(|v| !v.is_finite()) || !bias.is_finite() {
        return Err(Error::Numeric("attacker training diverged".into()));
    }
    Ok(Attacker {
        weights,
        bias,
        trained_on: trained_on.to_string(),
        loss_curve,
    })
}
