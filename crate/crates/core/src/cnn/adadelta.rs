//! Adadelta optimizer.

use serde::{Deserialize, Serialize};

use super::model::{ModelParams, ModelShape};
use crate::error::{Error, Result};

pub const DEFAULT_RHO: f64 = 0.95;
pub const DEFAULT_EPS: f64 = 1e-6;

/// One Adadelta update over a parameter block with its running averages of
/// squared gradients `eg2` and squared updates `edx2`.
pub fn adadelta_update(x: &mut [f64], g: &[f64], eg2: &mut [f64], edx2: &mut [f64], rho: f64, eps: f64) {
    for i in 0..x.len() {
        eg2[i] = rho * eg2[i] + (1.0 - rho) * g[i] * g[i];
        let dx = -((edx2[i] + eps).sqrt() / (eg2[i] + eps).sqrt()) * g[i];
        edx2[i] = rho * edx2[i] + (1.0 - rho) * dx * dx;
        x[i] += dx;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adadelta {
    pub rho: f64,
    pub eps: f64,
    eg2: ModelParams,
    edx2: ModelParams,
}

impl Adadelta {
    pub fn new(shape: ModelShape, rho: f64, eps: f64) -> Self {
        Adadelta {
            rho,
            eps,
            eg2: ModelParams::zeros(shape),
            edx2: ModelParams::zeros(shape),
        }
    }

    /// Running average of squared gradients.
    pub fn mean_sq_grad(&self) -> &ModelParams {
        &self.eg2
    }

    /// Applies one update. Parameters are left untouched when any gradient
    /// is non-finite.
    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams) -> Result<()> {
        if let Some(block) = grads.non_finite_block() {
            return Err(Error::Numeric { block });
        }
        let (rho, eps) = (self.rho, self.eps);
        let p = params.blocks_mut();
        let e = self.eg2.blocks_mut();
        let d = self.edx2.blocks_mut();
        let g = grads.blocks();
        for (((x, g), eg2), edx2) in p.into_iter().zip(g).zip(e).zip(d) {
            adadelta_update(x.1, g.1, eg2.1, edx2.1, rho, eps);
        }
        if let Some(block) = params.non_finite_block() {
            return Err(Error::Numeric { block });
        }
        Ok(())
    }
}
