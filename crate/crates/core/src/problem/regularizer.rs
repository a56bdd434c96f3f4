use crate::error::{Error, Result};

/// Block-separable regularizer `R`.
///
/// Scaling conventions: `L1(λ) = λ‖x‖₁`, `SquaredL2(λ) = (λ/2)‖x‖²`,
/// `ElasticNet(λ1, λ2) = λ1‖x‖₁ + (λ2/2)‖x‖²`, and
/// `GroupLassoPerNode(λ) = λ Σ_i ‖x_i‖₂` with one group per node block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularizer {
    L1 { lambda: f64 },
    SquaredL2 { lambda: f64 },
    ElasticNet { lambda1: f64, lambda2: f64 },
    GroupLassoPerNode { lambda: f64 },
}

impl Regularizer {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Regularizer::L1 { lambda } | Regularizer::SquaredL2 { lambda } | Regularizer::GroupLassoPerNode { lambda } => {
                lambda >= 0.0 && lambda.is_finite()
            }
            Regularizer::ElasticNet { lambda1, lambda2 } => {
                lambda1 >= 0.0 && lambda2 >= 0.0 && lambda1.is_finite() && lambda2.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!("regularizer weights must be finite and non-negative: {self:?}")))
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Regularizer::L1 { .. } => "l1",
            Regularizer::SquaredL2 { .. } => "squared_l2",
            Regularizer::ElasticNet { .. } => "elastic_net",
            Regularizer::GroupLassoPerNode { .. } => "group_lasso",
        }
    }

    /// The pair of weights as stored on disk; unused slots are zero.
    pub fn weights(&self) -> (f64, f64) {
        match *self {
            Regularizer::L1 { lambda } | Regularizer::SquaredL2 { lambda } | Regularizer::GroupLassoPerNode { lambda } => {
                (lambda, 0.0)
            }
            Regularizer::ElasticNet { lambda1, lambda2 } => (lambda1, lambda2),
        }
    }

    pub fn tag(&self) -> u8 {
        match self {
            Regularizer::L1 { .. } => 0,
            Regularizer::SquaredL2 { .. } => 1,
            Regularizer::ElasticNet { .. } => 2,
            Regularizer::GroupLassoPerNode { .. } => 3,
        }
    }

    pub fn from_tag(tag: u8, w1: f64, w2: f64) -> Result<Self> {
        let reg = match tag {
            0 => Regularizer::L1 { lambda: w1 },
            1 => Regularizer::SquaredL2 { lambda: w1 },
            2 => Regularizer::ElasticNet { lambda1: w1, lambda2: w2 },
            3 => Regularizer::GroupLassoPerNode { lambda: w1 },
            _ => return Err(Error::Codec(format!("unknown regularizer tag {tag}"))),
        };
        reg.validate()?;
        Ok(reg)
    }

    /// Strong convexity contributed by `R` alone.
    pub fn strong_convexity(&self) -> f64 {
        match *self {
            Regularizer::SquaredL2 { lambda } => lambda,
            Regularizer::ElasticNet { lambda2, .. } => lambda2,
            Regularizer::L1 { .. } | Regularizer::GroupLassoPerNode { .. } => 0.0,
        }
    }

    /// `R` restricted to one node block.
    pub fn value_block(&self, block: &[f64]) -> f64 {
        let l1 = || block.iter().map(|v| v.abs()).sum::<f64>();
        let sq = || block.iter().map(|v| v * v).sum::<f64>();
        match *self {
            Regularizer::L1 { lambda } => lambda * l1(),
            Regularizer::SquaredL2 { lambda } => 0.5 * lambda * sq(),
            Regularizer::ElasticNet { lambda1, lambda2 } => lambda1 * l1() + 0.5 * lambda2 * sq(),
            Regularizer::GroupLassoPerNode { lambda } => lambda * sq().sqrt(),
        }
    }

    /// `argmin_y ½‖y − v‖² + η R(y)` for a single node block, in place.
    pub fn prox_block_in_place(&self, block: &mut [f64], eta: f64) {
        match *self {
            Regularizer::L1 { lambda } => {
                let thr = eta * lambda;
                block.iter_mut().for_each(|v| *v = soft_threshold(*v, thr));
            }
            Regularizer::SquaredL2 { lambda } => {
                let scale = 1.0 + eta * lambda;
                block.iter_mut().for_each(|v| *v /= scale);
            }
            Regularizer::ElasticNet { lambda1, lambda2 } => {
                let thr = eta * lambda1;
                let scale = 1.0 + eta * lambda2;
                block.iter_mut().for_each(|v| *v = soft_threshold(*v, thr) / scale);
            }
            Regularizer::GroupLassoPerNode { lambda } => {
                let norm = block.iter().map(|v| v * v).sum::<f64>().sqrt();
                let factor = if norm > 0.0 { (1.0 - eta * lambda / norm).max(0.0) } else { 0.0 };
                block.iter_mut().for_each(|v| *v *= factor);
            }
        }
    }

    /// `R(x) − R(y)` on one block, evaluated without cancelling two large
    /// values against each other.
    pub fn value_difference_block(&self, x: &[f64], y: &[f64]) -> f64 {
        let abs_diff = || x.iter().zip(y).map(|(a, b)| a.abs() - b.abs()).sum::<f64>();
        let sq_diff = || x.iter().zip(y).map(|(a, b)| (a - b) * (a + b)).sum::<f64>();
        match *self {
            Regularizer::L1 { lambda } => lambda * abs_diff(),
            Regularizer::SquaredL2 { lambda } => 0.5 * lambda * sq_diff(),
            Regularizer::ElasticNet { lambda1, lambda2 } => lambda1 * abs_diff() + 0.5 * lambda2 * sq_diff(),
            Regularizer::GroupLassoPerNode { lambda } => {
                let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                if nx + ny == 0.0 {
                    0.0
                } else {
                    lambda * sq_diff() / (nx + ny)
                }
            }
        }
    }

    pub fn prox_block(&self, block: &[f64], eta: f64) -> Vec<f64> {
        let mut out = block.to_vec();
        self.prox_block_in_place(&mut out, eta);
        out
    }
}

/// `sign(v)·max(|v| − t, 0)`
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}
