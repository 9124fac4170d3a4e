//! Probabilistic classifiers `h: X -> [0,1]` and the kernels behind the
//! kernelized variant.

use serde::{Deserialize, Serialize};

use crate::data::{dot, norm, Example, NORM_TOLERANCE};
use crate::error::{invalid, PacfError, Result};

/// Positive-definite kernel on the unit ball.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `K(x, x') = 1 / (1 - <x, x'>/2)`, with values in `[2/3, 2]` on the unit ball.
    VovkHalf,
    /// `K(x, x') = <x, x'>`.
    LinearDot,
    /// Gram matrix indexed by example id.
    PrecomputedGram { matrix: Vec<Vec<f64>> },
}

impl KernelSpec {
    pub fn eval(&self, a: &Example, b: &Example) -> Result<f64> {
        match self {
            KernelSpec::VovkHalf => Ok(vovk_half(a.features(), b.features())),
            KernelSpec::LinearDot => Ok(dot(a.features(), b.features())),
            KernelSpec::PrecomputedGram { matrix } => {
                let entry = match (a.id(), b.id()) {
                    (Some(i), Some(j)) => matrix.get(i).and_then(|row| row.get(j)).copied(),
                    _ => None,
                };
                entry.ok_or(PacfError::KernelUndefined(a.id(), b.id()))
            }
        }
    }

    /// `M = sup K(x, x')` over the unit ball (or over the stored matrix).
    pub fn sup_value(&self) -> f64 {
        match self {
            KernelSpec::VovkHalf => 2.0,
            KernelSpec::LinearDot => 1.0,
            KernelSpec::PrecomputedGram { matrix } => matrix
                .iter()
                .flatten()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

pub(crate) fn vovk_half(a: &[f64], b: &[f64]) -> f64 {
    1.0 / (1.0 - 0.5 * dot(a, b))
}

/// `phi_l(z) = 1 / (1 + exp(-4 l z))`: monotone, `l`-Lipschitz, `phi_l(0) = 1/2`.
pub fn sigmoid(lipschitz: f64, z: f64) -> f64 {
    1.0 / (1.0 + (-4.0 * lipschitz * z).exp())
}

/// A kernel expansion `raw(x) = sum_l beta_l K(x_l, x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelExpansion {
    pub kernel: KernelSpec,
    pub support: Vec<Example>,
    pub coefficients: Vec<f64>,
}

impl KernelExpansion {
    /// Unclamped value; may leave `[0,1]`.
    pub fn raw(&self, x: &Example) -> Result<f64> {
        let mut acc = 0.0;
        for (sv, beta) in self.support.iter().zip(&self.coefficients) {
            acc += beta * self.kernel.eval(sv, x)?;
        }
        Ok(acc)
    }

    /// `beta^T K beta`, the squared RKHS norm of the expansion.
    pub fn rkhs_norm_sq(&self) -> Result<f64> {
        let mut acc = 0.0;
        for (a, ba) in self.support.iter().zip(&self.coefficients) {
            for (b, bb) in self.support.iter().zip(&self.coefficients) {
                acc += ba * bb * self.kernel.eval(a, b)?;
            }
        }
        Ok(acc)
    }
}

/// Probabilistic classifier; `predict` is the probability of label +1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum Predictor {
    Constant { p: f64 },
    /// `h(x) = (1 + <w, x>) / 2`, `||w|| <= 1`.
    Linear { weights: Vec<f64> },
    /// `h(x) = phi_l(<w, x>)`.
    Logistic { weights: Vec<f64>, lipschitz: f64 },
    /// `h(x) = clamp(raw(x), 0, 1)`.
    Kernel(KernelExpansion),
}

impl Predictor {
    pub fn constant(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid(format!("constant prediction {p} outside [0,1]")));
        }
        Ok(Predictor::Constant { p })
    }

    pub fn linear(weights: Vec<f64>) -> Result<Self> {
        check_weights(&weights)?;
        Ok(Predictor::Linear { weights })
    }

    pub fn logistic(weights: Vec<f64>, lipschitz: f64) -> Result<Self> {
        check_weights(&weights)?;
        if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
            return Err(invalid(format!("lipschitz constant {lipschitz} must be >= 0")));
        }
        Ok(Predictor::Logistic { weights, lipschitz })
    }

    pub fn kernel(expansion: KernelExpansion) -> Result<Self> {
        if expansion.support.len() != expansion.coefficients.len() {
            return Err(invalid("kernel support and coefficient counts differ"));
        }
        if expansion.coefficients.iter().any(|b| !b.is_finite()) {
            return Err(PacfError::NonFinite("kernel coefficients"));
        }
        Ok(Predictor::Kernel(expansion))
    }

    /// Input dimension, or `None` for predictors that ignore the input.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Predictor::Constant { .. } => None,
            Predictor::Linear { weights } | Predictor::Logistic { weights, .. } => {
                Some(weights.len())
            }
            Predictor::Kernel(k) => k.support.first().map(Example::dim),
        }
    }

    pub fn predict(&self, x: &Example) -> Result<f64> {
        if let Some(d) = self.dim() {
            if d != x.dim() {
                return Err(PacfError::DimensionMismatch {
                    expected: d,
                    got: x.dim(),
                });
            }
        }
        let p = match self {
            Predictor::Constant { p } => *p,
            Predictor::Linear { weights } => 0.5 * (1.0 + dot(weights, x.features())),
            Predictor::Logistic { weights, lipschitz } => {
                sigmoid(*lipschitz, dot(weights, x.features()))
            }
            Predictor::Kernel(k) => k.raw(x)?,
        };
        Ok(p.clamp(0.0, 1.0))
    }

    /// Predictions for every example of a slice.
    pub fn predict_all(&self, xs: &[Example]) -> Result<Vec<f64>> {
        xs.iter().map(|x| self.predict(x)).collect()
    }
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(PacfError::NonFinite("weights"));
    }
    let n = norm(weights);
    if n > 1.0 + NORM_TOLERANCE {
        return Err(invalid(format!("weight norm {n} exceeds 1")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ex(x: &[f64]) -> Example {
        Example::new(x.to_vec(), 1).unwrap()
    }

    #[test]
    fn zero_linear_predicts_half() {
        let h = Predictor::linear(vec![0.0, 0.0]).unwrap();
        assert_eq!(h.predict(&ex(&[0.3, -0.4])).unwrap(), 0.5);
    }

    #[test]
    fn logistic_values() {
        let h = Predictor::logistic(vec![1.0, 0.0], 1.0).unwrap();
        assert_eq!(h.predict(&ex(&[0.0, 0.7])).unwrap(), 0.5);
        // 1 / (1 + e^-4)
        assert_abs_diff_eq!(h.predict(&ex(&[1.0, 0.0])).unwrap(), 0.982_013_790_037_908_5, epsilon = 1e-12);
        let h7 = Predictor::logistic(vec![0.0, 1.0], 7.0).unwrap();
        assert_eq!(h7.predict(&ex(&[0.2, 0.0])).unwrap(), 0.5);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let h = Predictor::linear(vec![0.5]).unwrap();
        assert!(matches!(
            h.predict(&ex(&[0.1, 0.1])),
            Err(PacfError::DimensionMismatch { expected: 1, got: 2 })
        ));
        // constants accept any dimension
        assert_eq!(Predictor::constant(0.3).unwrap().predict(&ex(&[0.1, 0.1])).unwrap(), 0.3);
    }

    #[test]
    fn constructor_validation() {
        assert!(Predictor::linear(vec![0.8, 0.8]).is_err());
        assert!(Predictor::constant(1.5).is_err());
        assert!(Predictor::logistic(vec![0.1], -1.0).is_err());
    }

    #[test]
    fn vovk_kernel_range_endpoints() {
        let k = KernelSpec::VovkHalf;
        let a = ex(&[1.0, 0.0]);
        let b = ex(&[-1.0, 0.0]);
        assert_abs_diff_eq!(k.eval(&a, &a).unwrap(), 2.0);
        assert_abs_diff_eq!(k.eval(&a, &b).unwrap(), 2.0 / 3.0);
        assert_eq!(k.sup_value(), 2.0);
    }

    #[test]
    fn kernel_predictor_clamps() {
        let sv = ex(&[0.0]);
        let k = KernelExpansion {
            kernel: KernelSpec::VovkHalf,
            support: vec![sv.clone()],
            coefficients: vec![3.0],
        };
        assert_eq!(k.raw(&sv).unwrap(), 3.0);
        let h = Predictor::kernel(k).unwrap();
        assert_eq!(h.predict(&sv).unwrap(), 1.0);
    }

    #[test]
    fn precomputed_gram_needs_ids() {
        let k = KernelSpec::PrecomputedGram {
            matrix: vec![vec![1.0, 0.5], vec![0.5, 1.0]],
        };
        let a = ex(&[0.1]).with_id(0);
        let b = ex(&[0.2]).with_id(1);
        assert_eq!(k.eval(&a, &b).unwrap(), 0.5);
        assert!(k.eval(&a, &ex(&[0.2])).is_err());
    }
}
