use nalgebra::{DMatrix, DVector};

use super::{FlowKind, FlowTransform};
use crate::error::{Error, Result};

/// Affine flow `z = A x + b`.
///
/// Parameter order: `A` row-major, then `b`. The inverse and
/// `log|det A|` (from a partially pivoted LU) are refreshed whenever the
/// parameters change.
#[derive(Debug, Clone)]
pub struct LinearFlow {
    a: DMatrix<f64>,
    b: DVector<f64>,
    a_inv: DMatrix<f64>,
    logabsdet: f64,
}

impl LinearFlow {
    pub fn identity(dim: usize) -> Self {
        LinearFlow {
            a: DMatrix::identity(dim, dim),
            b: DVector::zeros(dim),
            a_inv: DMatrix::identity(dim, dim),
            logabsdet: 0.0,
        }
    }

    /// `a` is row-major `dim x dim`.
    pub fn from_parts(dim: usize, a: &[f64], b: &[f64]) -> Result<Self> {
        let mut flow = LinearFlow::identity(dim);
        let mut p = a.to_vec();
        p.extend_from_slice(b);
        flow.set_params(&p)?;
        Ok(flow)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn bias(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn logabsdet(&self) -> f64 {
        self.logabsdet
    }

    fn refresh(&mut self) -> Result<()> {
        let lu = self.a.clone().lu();
        let u = lu.u();
        let mut logdet = 0.0;
        for i in 0..u.nrows() {
            let d = u[(i, i)];
            if d == 0.0 || !d.is_finite() {
                return Err(Error::Numeric("singular linear flow matrix".into()));
            }
            logdet += d.abs().ln();
        }
        let inv = lu
            .try_inverse()
            .ok_or_else(|| Error::Numeric("singular linear flow matrix".into()))?;
        if !logdet.is_finite() || inv.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("ill-conditioned linear flow matrix".into()));
        }
        self.a_inv = inv;
        self.logabsdet = logdet;
        Ok(())
    }
}

impl FlowTransform for LinearFlow {
    fn kind(&self) -> FlowKind {
        FlowKind::Linear
    }

    fn dim(&self) -> usize {
        self.b.len()
    }

    fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        let z = &self.a * DVector::from_column_slice(x) + &self.b;
        Ok((z.as_slice().to_vec(), self.logabsdet))
    }

    fn inverse(&self, z: &[f64]) -> Result<Vec<f64>> {
        let x = &self.a_inv * (DVector::from_column_slice(z) - &self.b);
        Ok(x.as_slice().to_vec())
    }

    fn params(&self) -> Vec<f64> {
        let d = self.dim();
        let mut p = Vec::with_capacity(d * d + d);
        for i in 0..d {
            for j in 0..d {
                p.push(self.a[(i, j)]);
            }
        }
        p.extend(self.b.iter());
        p
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        let d = self.dim();
        if params.len() != d * d + d {
            return Err(Error::Format(format!(
                "linear flow of dim {d} needs {} parameters, got {}",
                d * d + d,
                params.len()
            )));
        }
        let prev_a = self.a.clone();
        self.a = DMatrix::from_row_slice(d, d, &params[..d * d]);
        if let Err(e) = self.refresh() {
            self.a = prev_a;
            return Err(e);
        }
        self.b = DVector::from_column_slice(&params[d * d..]);
        Ok(())
    }

    fn backward(&self, xs: &[&[f64]], grad_z: &[Vec<f64>], grad_logdet: f64, grad: &mut [f64]) -> Result<()> {
        let d = self.dim();
        for (x, gz) in xs.iter().zip(grad_z) {
            for i in 0..d {
                let gi = gz[i];
                let row = &mut grad[i * d..(i + 1) * d];
                for (g, xj) in row.iter_mut().zip(x.iter()) {
                    *g += gi * xj;
                }
                grad[d * d + i] += gi;
            }
        }
        // d log|det A| / dA = A^{-T}
        let scale = grad_logdet * xs.len() as f64;
        for i in 0..d {
            for j in 0..d {
                grad[i * d + j] += scale * self.a_inv[(j, i)];
            }
        }
        Ok(())
    }

    fn encode_layout(&self, _out: &mut Vec<u8>) {}

    fn clone_box(&self) -> Box<dyn FlowTransform> {
        Box::new(self.clone())
    }
}
