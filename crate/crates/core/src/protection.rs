//! Embedding protection strategies, selected by name.
//!
//! `none` passes vectors through, `proposed` zeroes the flow LLR
//! coordinate, `global` replaces every vector with one speaker-balanced
//! mean.

use std::collections::BTreeMap;

use crate::embeddings::{Dataset, Sex};
use crate::error::{Error, Result};
use crate::flow::FlowModel;

pub trait EmbeddingProtector: Send + Sync {
    fn name(&self) -> &'static str;

    fn protect(&self, x: &[f64]) -> Result<Vec<f64>>;

    fn protect_dataset(&self, ds: &Dataset) -> Result<Dataset> {
        ds.map_vectors(|r| self.protect(&r.vec))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoProtection;

impl EmbeddingProtector for NoProtection {
    fn name(&self) -> &'static str {
        "none"
    }

    fn protect(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(x.to_vec())
    }
}

#[derive(Debug, Clone)]
pub struct FlowProtection {
    pub model: FlowModel,
    pub target_llr: f64,
}

impl FlowProtection {
    pub fn new(model: FlowModel) -> Self {
        FlowProtection { model, target_llr: 0.0 }
    }
}

impl EmbeddingProtector for FlowProtection {
    fn name(&self) -> &'static str {
        "proposed"
    }

    fn protect(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.model.protect_to(x, self.target_llr)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalMeanProtection {
    pub mean: Vec<f64>,
}

impl EmbeddingProtector for GlobalMeanProtection {
    fn name(&self) -> &'static str {
        "global"
    }

    fn protect(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mean.len() {
            return Err(Error::Domain(format!(
                "vector has dimension {}, global mean has {}",
                x.len(),
                self.mean.len()
            )));
        }
        Ok(self.mean.clone())
    }
}

/// Speaker-balanced, sex-balanced mean: utterances are averaged per
/// speaker, speakers per sex, and the two sex means are averaged.
pub fn global_mean(ds: &Dataset) -> Result<Vec<f64>> {
    let d = ds.dim();
    let recs = ds.records();
    let mut sex_sum = [vec![0.0; d], vec![0.0; d]];
    let mut sex_count = [0usize; 2];
    for idx in ds.by_speaker().values() {
        let sex = recs[idx[0]].sex.class();
        for (i, acc) in sex_sum[sex].iter_mut().enumerate() {
            *acc += idx.iter().map(|&r| recs[r].vec[i]).sum::<f64>() / idx.len() as f64;
        }
        sex_count[sex] += 1;
    }
    for sex in Sex::BOTH {
        if sex_count[sex.class()] == 0 {
            return Err(Error::Config(format!("global mean needs both sexes; no {} speakers", sex.label())));
        }
    }
    Ok((0..d)
        .map(|i| 0.5 * (sex_sum[0][i] / sex_count[0] as f64 + sex_sum[1][i] / sex_count[1] as f64))
        .collect())
}

pub fn apply_global(ds: &Dataset, mean: &[f64]) -> Result<Dataset> {
    GlobalMeanProtection { mean: mean.to_vec() }.protect_dataset(ds)
}

/// Trained pieces a protector may need.
#[derive(Debug, Clone, Default)]
pub struct ProtectionArtifacts {
    pub flow: Option<FlowModel>,
    pub global_mean: Option<Vec<f64>>,
}

type ProtectorFactory = fn(&ProtectionArtifacts) -> Result<Box<dyn EmbeddingProtector>>;

pub struct ProtectorRegistry {
    factories: BTreeMap<&'static str, ProtectorFactory>,
}

impl Default for ProtectorRegistry {
    fn default() -> Self {
        let mut reg = ProtectorRegistry {
            factories: BTreeMap::new(),
        };
        reg.register("none", |_| Ok(Box::new(NoProtection)));
        reg.register("proposed", |a| {
            let model = a
                .flow
                .clone()
                .ok_or_else(|| Error::Config("protection \"proposed\" requires a trained flow model".into()))?;
            Ok(Box::new(FlowProtection::new(model)))
        });
        reg.register("global", |a| {
            let mean = a
                .global_mean
                .clone()
                .ok_or_else(|| Error::Config("protection \"global\" requires a global mean vector".into()))?;
            Ok(Box::new(GlobalMeanProtection { mean }))
        });
        reg
    }
}

impl ProtectorRegistry {
    pub fn register(&mut self, name: &'static str, factory: ProtectorFactory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }

    pub fn create(&self, name: &str, artifacts: &ProtectionArtifacts) -> Result<Box<dyn EmbeddingProtector>> {
        let f = self.factories.get(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown protection {name:?} (available: {})",
                self.names().join(", ")
            ))
        })?;
        f(artifacts)
    }
}
