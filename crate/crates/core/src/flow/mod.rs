//! Class-conditional normalizing flow with an LLR coordinate.
//!
//! The flow maps an embedding `x` to a base vector `z`. In base space the
//! class-conditional densities are
//!
//! ```text
//! z[0] | C=0 ~ N(+delta/2, delta)      z[0] | C=1 ~ N(-delta/2, delta)
//! z[j] | C   ~ N(0, 1)                 j >= 1, both classes
//! ```
//!
//! so `log p(z|C=0) - log p(z|C=1) = z[0]` exactly: the first base
//! coordinate is the male-vs-female LLR. Protection sets it to zero and
//! inverts the flow.
//!
//! Transform families implement [`FlowTransform`] and are looked up by name
//! through [`FlowRegistry`].

mod coupling;
mod io;
mod linear;
mod registry;
mod train;

use std::f64::consts::PI;
use std::fmt;

pub use coupling::{CouplingFlow, FlowOptions};
pub use io::{load_model, read_model, save_model, write_model, MAGIC, VERSION};
pub use linear::LinearFlow;
pub use registry::{FlowFactory, FlowRegistry};
pub use train::{train, TrainConfig, TrainingCurve};

use crate::error::{Error, Result};

/// Default base-space class separation.
pub const DEFAULT_DELTA: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlowKind {
    Linear,
    Coupling,
}

impl FlowKind {
    pub fn name(self) -> &'static str {
        match self {
            FlowKind::Linear => "linear",
            FlowKind::Coupling => "coupling",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            FlowKind::Linear => 0,
            FlowKind::Coupling => 1,
        }
    }
}

impl fmt::Display for FlowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// An invertible, differentiable map `R^d -> R^d`.
///
/// Parameters are exposed as one flat vector in a fixed order, which is
/// also the on-disk order. `backward` accumulates the gradient of
/// `sum_i grad_z[i] . z(x_i) + grad_logdet * sum_i log|det J(x_i)|`.
pub trait FlowTransform: fmt::Debug + Send + Sync {
    fn kind(&self) -> FlowKind;

    fn dim(&self) -> usize;

    fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, f64)>;

    fn inverse(&self, z: &[f64]) -> Result<Vec<f64>>;

    fn params(&self) -> Vec<f64>;

    fn set_params(&mut self, params: &[f64]) -> Result<()>;

    fn backward(&self, xs: &[&[f64]], grad_z: &[Vec<f64>], grad_logdet: f64, grad: &mut [f64]) -> Result<()>;

    /// Kind-specific header bytes written between the common header and the
    /// parameter block.
    fn encode_layout(&self, out: &mut Vec<u8>);

    fn clone_box(&self) -> Box<dyn FlowTransform>;
}

impl Clone for Box<dyn FlowTransform> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

/// Two-class base density; only `delta` is free.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseDensity {
    pub delta: f64,
}

impl BaseDensity {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Config(format!("base separation delta must be > 0, got {delta}")));
        }
        Ok(BaseDensity { delta })
    }

    pub fn class_mean(&self, class: usize) -> f64 {
        if class == 0 {
            0.5 * self.delta
        } else {
            -0.5 * self.delta
        }
    }

    pub fn log_density(&self, z: &[f64], class: usize) -> Result<f64> {
        if z.is_empty() || z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("base point must be non-empty and finite".into()));
        }
        let m = self.class_mean(class);
        let first = -0.5 * (2.0 * PI * self.delta).ln() - (z[0] - m).powi(2) / (2.0 * self.delta);
        let rest: f64 = z[1..].iter().map(|v| -0.5 * (2.0 * PI).ln() - 0.5 * v * v).sum();
        Ok(first + rest)
    }

    /// `d/dz` of `-log p(z|class)`.
    fn neg_grad(&self, z: &[f64], class: usize) -> Vec<f64> {
        let mut g = z.to_vec();
        g[0] = (z[0] - self.class_mean(class)) / self.delta;
        g
    }
}

pub fn base_logdensity(z: &[f64], class: usize, delta: f64) -> Result<f64> {
    BaseDensity::new(delta)?.log_density(z, class)
}

/// A trained (or freshly initialised) flow together with its base density.
#[derive(Debug, Clone)]
pub struct FlowModel {
    base: BaseDensity,
    transform: Box<dyn FlowTransform>,
}

impl FlowModel {
    pub fn new(transform: Box<dyn FlowTransform>, delta: f64) -> Result<Self> {
        Ok(FlowModel {
            base: BaseDensity::new(delta)?,
            transform,
        })
    }

    pub fn kind(&self) -> FlowKind {
        self.transform.kind()
    }

    pub fn dim(&self) -> usize {
        self.transform.dim()
    }

    pub fn delta(&self) -> f64 {
        self.base.delta
    }

    pub fn base(&self) -> BaseDensity {
        self.base
    }

    pub fn transform(&self) -> &dyn FlowTransform {
        self.transform.as_ref()
    }

    pub fn transform_mut(&mut self) -> &mut dyn FlowTransform {
        self.transform.as_mut()
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::Domain(format!(
                "vector has dimension {}, model expects {}",
                v.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.check_dim(x)?;
        self.transform.forward(x)
    }

    pub fn inverse(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(z)?;
        self.transform.inverse(z)
    }

    /// Male-vs-female LLR of `x`, i.e. the first base coordinate.
    pub fn llr(&self, x: &[f64]) -> Result<f64> {
        Ok(self.forward(x)?.0[0])
    }

    /// Moves `x` to the point whose LLR equals `target_llr`, keeping every
    /// other base coordinate.
    pub fn protect_to(&self, x: &[f64], target_llr: f64) -> Result<Vec<f64>> {
        let (mut z, _) = self.forward(x)?;
        z[0] = target_llr;
        self.inverse(&z)
    }

    pub fn protect(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.protect_to(x, 0.0)
    }

    /// Mean negative log-likelihood of `(vector, class)` pairs.
    pub fn nll(&self, batch: &[(&[f64], usize)]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Domain("empty batch".into()));
        }
        let mut total = 0.0;
        for (i, (x, c)) in batch.iter().enumerate() {
            let (z, logdet) = self.forward(x)?;
            let lp = self
                .base
                .log_density(&z, *c)
                .map_err(|_| Error::Numeric(format!("non-finite base point at batch index {i}")))?;
            let term = lp + logdet;
            if !term.is_finite() {
                return Err(Error::Numeric(format!("non-finite log-likelihood at batch index {i}")));
            }
            total += term;
        }
        Ok(-total / batch.len() as f64)
    }

    /// Mean NLL and its gradient with respect to the flat parameter vector.
    pub fn nll_and_grad(&self, batch: &[(&[f64], usize)]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::Domain("empty batch".into()));
        }
        let n = batch.len() as f64;
        let mut total = 0.0;
        let mut grad_z = Vec::with_capacity(batch.len());
        for (i, (x, c)) in batch.iter().enumerate() {
            let (z, logdet) = self.forward(x)?;
            let lp = self
                .base
                .log_density(&z, *c)
                .map_err(|_| Error::Numeric(format!("non-finite base point at batch index {i}")))?;
            if !(lp + logdet).is_finite() {
                return Err(Error::Numeric(format!("non-finite log-likelihood at batch index {i}")));
            }
            total += lp + logdet;
            grad_z.push(self.base.neg_grad(&z, *c).into_iter().map(|g| g / n).collect());
        }
        let xs: Vec<&[f64]> = batch.iter().map(|(x, _)| *x).collect();
        let mut grad = vec![0.0; self.transform.params().len()];
        self.transform.backward(&xs, &grad_z, -1.0 / n, &mut grad)?;
        Ok((-total / n, grad))
    }
}
