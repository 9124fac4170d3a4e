//! Rademacher estimation and closed-form generalization / sample-complexity
//! calculators.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audit::hoeffding_half_width;
use crate::data::LabeledDataset;
use crate::error::{invalid, PacfError, Result};
use crate::rng;

/// Relative tolerance of the PSD check: `min eig >= -PSD_TOLERANCE * max eig`.
pub const PSD_TOLERANCE: f64 = 1e-8;

/// Iteration budget for the implicit sample-complexity fixed point.
pub const FIXED_POINT_MAX_ITERS: usize = 100;

fn check_unit_open(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} = {v} must lie in (0,1)")))
    }
}

fn check_g(g: f64) -> Result<()> {
    if g >= 1.0 && g.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("G = {g} must be finite and >= 1")))
    }
}

fn check_m(m: f64) -> Result<()> {
    if m >= 2.0 && m.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("sample size m = {m} must be >= 2")))
    }
}

/// Extreme eigenvalues of a symmetric matrix, or an error if it is not PSD.
pub fn check_psd(gram: &DMatrix<f64>) -> Result<(f64, f64)> {
    if !gram.is_square() {
        return Err(invalid("Gram matrix must be square"));
    }
    if gram.iter().any(|v| !v.is_finite()) {
        return Err(PacfError::NonFinite("Gram matrix"));
    }
    let scale = gram.amax().max(1.0);
    if (gram - gram.transpose()).amax() > 1e-12 * scale {
        return Err(invalid("Gram matrix is not symmetric"));
    }
    if gram.nrows() == 0 {
        return Ok((0.0, 0.0));
    }
    let eig = SymmetricEigen::new(gram.clone()).eigenvalues;
    let min = eig.min();
    let max = eig.max();
    if min < -PSD_TOLERANCE * max.abs().max(f64::MIN_POSITIVE) {
        return Err(PacfError::NotPsd {
            min_eigenvalue: min,
            max_eigenvalue: max,
        });
    }
    Ok((min, max))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RademacherEstimate {
    pub value: f64,
    pub n_draws: usize,
    /// 95% Hoeffding half-width of the Monte-Carlo mean.
    pub mc_half_width: f64,
}

/// Monte-Carlo estimate of the empirical Rademacher complexity of the
/// RKHS ball of radius `c`: the mean over sign vectors of
/// `(c/m) * sqrt(sigma^T K sigma)`.
pub fn empirical_rademacher_kernel_ball(
    gram: &DMatrix<f64>,
    c: f64,
    n_draws: usize,
    seed: u64,
) -> Result<RademacherEstimate> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(invalid(format!("norm bound C = {c} must be > 0")));
    }
    if n_draws == 0 {
        return Err(invalid("n_draws must be at least 1"));
    }
    let (_, lambda_max) = check_psd(gram)?;
    let m = gram.nrows();
    if m == 0 {
        return Err(invalid("Gram matrix is empty"));
    }
    let scale = c / m as f64;
    let total: f64 = (0..n_draws)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::stream(seed, t as u64);
            let sigma: Vec<f64> = (0..m).map(|_| if r.gen::<bool>() { 1.0 } else { -1.0 }).collect();
            let mut q = 0.0;
            for i in 0..m {
                let mut row = 0.0;
                for j in 0..m {
                    row += gram[(i, j)] * sigma[j];
                }
                q += sigma[i] * row;
            }
            scale * q.max(0.0).sqrt()
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    let range = c * (lambda_max.max(0.0) / m as f64).sqrt();
    Ok(RademacherEstimate {
        value: total / n_draws as f64,
        n_draws,
        mc_half_width: hoeffding_half_width(n_draws, range),
    })
}

/// Same estimate for the linear ball `{x -> <v, x> : ||v|| <= c}`, computed in
/// feature space as `(c/m) * ||sum_i sigma_i x_i||`. Agrees with
/// [`empirical_rademacher_kernel_ball`] on the dot-product Gram matrix.
pub fn empirical_rademacher_linear_ball(
    sample: &LabeledDataset,
    c: f64,
    n_draws: usize,
    seed: u64,
) -> Result<RademacherEstimate> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(invalid(format!("norm bound C = {c} must be > 0")));
    }
    if n_draws == 0 {
        return Err(invalid("n_draws must be at least 1"));
    }
    let m = sample.len();
    let n = sample.dim();
    let x = DMatrix::from_fn(m, n, |i, j| sample.get(i).features()[j]);
    let lambda_max = SymmetricEigen::new(x.tr_mul(&x)).eigenvalues.max();
    let scale = c / m as f64;
    let total: f64 = (0..n_draws)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::stream(seed, t as u64);
            let mut sum = vec![0.0; n];
            for e in sample.iter() {
                let s = if r.gen::<bool>() { 1.0 } else { -1.0 };
                sum.iter_mut().zip(e.features()).for_each(|(a, v)| *a += s * v);
            }
            scale * sum.iter().map(|v| v * v).sum::<f64>().sqrt()
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    Ok(RademacherEstimate {
        value: total / n_draws as f64,
        n_draws,
        mc_half_width: hoeffding_half_width(n_draws, c * (lambda_max.max(0.0) / m as f64).sqrt()),
    })
}

fn log_term(delta: f64) -> f64 {
    17.0 * (4.0 / delta).ln().sqrt()
}

/// `2G (4 R + (4 + 17 sqrt(ln(4/delta))) / sqrt(m - 1))`, where `r_hat` is
/// the empirical Rademacher complexity at half the sample size.
pub fn mf_generalization_delta(g: f64, delta: f64, m: f64, r_hat: f64) -> Result<f64> {
    check_g(g)?;
    check_unit_open("delta", delta)?;
    check_m(m)?;
    if !(r_hat >= 0.0 && r_hat.is_finite()) {
        return Err(invalid(format!("Rademacher complexity {r_hat} must be >= 0")));
    }
    Ok(2.0 * g * (4.0 * r_hat + (4.0 + log_term(delta)) / (m - 1.0).sqrt()))
}

/// Closed form for the RKHS ball `||v|| <= c` with `sup K = big_m`:
/// `2G (4 + 4 sqrt(2) sqrt(C M) + 17 sqrt(ln(4/delta))) / sqrt(m - 1)`.
pub fn kernel_ball_delta(g: f64, delta: f64, m: f64, c: f64, big_m: f64) -> Result<f64> {
    check_g(g)?;
    check_unit_open("delta", delta)?;
    check_m(m)?;
    if !(c > 0.0 && big_m > 0.0) {
        return Err(invalid("C and M must be positive"));
    }
    let cm = 4.0 * std::f64::consts::SQRT_2 * (c * big_m).sqrt();
    Ok(2.0 * g * (4.0 + cm + log_term(delta)) / (m - 1.0).sqrt())
}

/// Generalization slack for the linear class.
pub fn rho_linear(g: f64, delta: f64, m: f64) -> Result<f64> {
    kernel_ball_delta(g, delta, m, 1.0, 1.0)
}

/// Generalization slack for the kernel class with squared-norm bound `b`:
/// `2G (4 + 8 sqrt(B) + 17 sqrt(ln(4/delta))) / sqrt(m - 1)`.
pub fn rho_kernel(g: f64, delta: f64, m: f64, b: f64) -> Result<f64> {
    check_g(g)?;
    check_unit_open("delta", delta)?;
    check_m(m)?;
    if !(b > 0.0) {
        return Err(invalid(format!("B = {b} must be positive")));
    }
    Ok(2.0 * g * (4.0 + 8.0 * b.sqrt() + log_term(delta)) / (m - 1.0).sqrt())
}

/// `6 L^4 + exp(9 L ln(4L / eps_star) + 5)`; `+inf` on overflow.
pub fn kernel_norm_bound_b(l: f64, eps_star: f64) -> Result<f64> {
    if !(l >= 3.0 && l.is_finite()) {
        return Err(invalid(format!("L = {l} must be >= 3")));
    }
    check_unit_open("eps_star", eps_star)?;
    let exponent = 9.0 * l * (4.0 * l / eps_star).ln() + 5.0;
    let b = 6.0 * l.powi(4) + exponent.exp();
    if b.is_infinite() {
        log::warn!("kernel norm bound overflows f64 (exponent {exponent:.3}); returning +inf");
    }
    Ok(b)
}

/// Ceiling, rounded up to the next odd integer while that is representable.
pub fn next_odd_ceil(x: f64) -> f64 {
    let c = x.ceil().max(1.0);
    if c < 9.007_199_254_740_992e15 && c % 2.0 == 0.0 {
        c + 1.0
    } else {
        c
    }
}

/// How the empirical Rademacher complexity scales with the half-sample size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RademacherModel {
    Constant { value: f64 },
    /// `scale / sqrt(k)`, e.g. `sqrt(C M)` for an RKHS ball.
    InverseSqrt { scale: f64 },
}

impl RademacherModel {
    pub fn at(&self, k: f64) -> f64 {
        match *self {
            RademacherModel::Constant { value } => value,
            RademacherModel::InverseSqrt { scale } => scale / k.max(1.0).sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "formula", rename_all = "snake_case")]
pub enum SampleComplexitySpec {
    InfPacf {
        m_pac: f64,
        eps_alpha: f64,
        eps_gamma: f64,
        delta: f64,
        rademacher: RademacherModel,
    },
    LinAccuracy {
        alpha: f64,
        eps: f64,
        eps_alpha: f64,
        eps_gamma: f64,
        delta: f64,
    },
    SigmoidAccuracy {
        alpha: f64,
        eps: f64,
        eps_alpha: f64,
        eps_gamma: f64,
        delta: f64,
        l: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleComplexity {
    /// Odd integer (stored as `f64`: the kernel bound exceeds `u64`).
    pub m: f64,
    /// Value of each branch of the max before rounding.
    pub branches: Vec<f64>,
    /// Index of the dominating branch.
    pub dominant: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
}

impl SampleComplexity {
    fn from_branches(branches: Vec<f64>) -> Self {
        let (dominant, raw) = branches
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
        Self {
            m: next_odd_ceil(raw),
            branches,
            dominant,
            iterations: None,
        }
    }
}

pub fn pacf_sample_complexity(spec: &SampleComplexitySpec) -> Result<SampleComplexity> {
    match *spec {
        SampleComplexitySpec::InfPacf {
            m_pac,
            eps_alpha,
            eps_gamma,
            delta,
            rademacher,
        } => inf_pacf_sample_complexity(m_pac, eps_alpha, eps_gamma, delta, |k| rademacher.at(k)),
        SampleComplexitySpec::LinAccuracy {
            alpha,
            eps,
            eps_alpha,
            eps_gamma,
            delta,
        } => {
            for (n, v) in [("alpha", alpha), ("eps", eps), ("eps_alpha", eps_alpha), ("eps_gamma", eps_gamma), ("delta", delta)] {
                check_unit_open(n, v)?;
            }
            let s2 = std::f64::consts::SQRT_2;
            let b1 = ((s2 + (8.0 / delta).ln().sqrt()) / (s2 * eps)).powi(2);
            let b2 = (4.0 * (4.0 + 4.0 * s2 + log_term(delta))
                / ((1.0 - alpha) * eps_alpha * eps_alpha.min(eps_gamma / 2.0)))
            .powi(2);
            Ok(SampleComplexity::from_branches(vec![b1, b2]))
        }
        SampleComplexitySpec::SigmoidAccuracy {
            alpha,
            eps,
            eps_alpha,
            eps_gamma,
            delta,
            l,
        } => {
            for (n, v) in [("alpha", alpha), ("eps", eps), ("eps_alpha", eps_alpha), ("eps_gamma", eps_gamma), ("delta", delta)] {
                check_unit_open(n, v)?;
            }
            let eps_star = eps.min(eps_alpha).min(eps_gamma / 2.0);
            let b = kernel_norm_bound_b(l, eps_star)?;
            let b1 = 2.0 * b * (2.0 + 9.0 * (8.0 / delta).ln().sqrt()) / (eps * eps);
            let b2 = (4.0 * (4.0 + 8.0 * b.sqrt() + log_term(delta))
                / ((1.0 - alpha) * eps_alpha * eps_star))
                .powi(2)
                + 1.0;
            Ok(SampleComplexity::from_branches(vec![b1, b2]))
        }
    }
}

/// Resolves `m = max{m_pac, ((8 + 34 sqrt(ln(4/delta))) / (eps_a eps_g - 8 R(k)))^2 + 1}`
/// with `k = (m-1)/2`, iterating `m <- max(m, rhs(m))` from `m = 3`.
///
/// While the denominator is non-positive at the current `m`, `m` is doubled.
pub fn inf_pacf_sample_complexity(
    m_pac: f64,
    eps_alpha: f64,
    eps_gamma: f64,
    delta: f64,
    rademacher: impl Fn(f64) -> f64,
) -> Result<SampleComplexity> {
    check_unit_open("eps_alpha", eps_alpha)?;
    check_unit_open("eps_gamma", eps_gamma)?;
    check_unit_open("delta", delta)?;
    if !(m_pac >= 0.0) {
        return Err(invalid(format!("m_pac = {m_pac} must be >= 0")));
    }
    let numerator = 8.0 + 2.0 * log_term(delta);
    let mut m = 3.0_f64;
    let mut last_denominator = f64::NAN;
    for it in 1..=FIXED_POINT_MAX_ITERS {
        let r = rademacher((m - 1.0) / 2.0);
        let denominator = eps_alpha * eps_gamma - 8.0 * r;
        last_denominator = denominator;
        if denominator <= 0.0 {
            m = next_odd_ceil(2.0 * m);
            continue;
        }
        let branches = vec![m_pac, (numerator / denominator).powi(2) + 1.0];
        let mut sc = SampleComplexity::from_branches(branches);
        if sc.m <= m {
            sc.m = m;
            sc.iterations = Some(it);
            return Ok(sc);
        }
        m = sc.m;
    }
    if last_denominator <= 0.0 {
        Err(PacfError::RademacherDominates(last_denominator))
    } else {
        Err(PacfError::FixedPointDiverged(FIXED_POINT_MAX_ITERS))
    }
}

pub const BOUND_REPORT_SCHEMA: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub schema_version: u32,
    pub inputs: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_m: Option<f64>,
    pub sample_complexities: BTreeMap<String, SampleComplexity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_norm_bound: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn delta_m_reference_value() {
        let v = mf_generalization_delta(10.0, 0.05, 1_000_001.0, 0.001).unwrap();
        assert_relative_eq!(v, 0.871_731_886_996_993_1, max_relative = 1e-12);
    }

    #[test]
    fn delta_m_linear_in_g_at_zero_rademacher() {
        let a = mf_generalization_delta(3.0, 0.1, 501.0, 0.0).unwrap();
        let b = mf_generalization_delta(6.0, 0.1, 501.0, 0.0).unwrap();
        assert_relative_eq!(b, 2.0 * a, max_relative = 1e-14);
        assert!(mf_generalization_delta(3.0, 1.0, 501.0, 0.0).is_err());
        assert!(mf_generalization_delta(0.5, 0.1, 501.0, 0.0).is_err());
    }

    #[test]
    fn kernel_ball_reference_value() {
        let v = kernel_ball_delta(1.0, 0.05, 401.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(v, 4.524_344_859_934_203, max_relative = 1e-12);
        assert_relative_eq!(rho_linear(1.0, 0.05, 401.0).unwrap(), v);
    }

    #[test]
    fn rho_reference_value() {
        let v = rho_linear(20.0, 0.05, 1_000_001.0).unwrap();
        assert_relative_eq!(v, 1.809_737_943_973_681_2, max_relative = 1e-12);
        // 8 sqrt(B) = 4 sqrt(2) at B = 1/2
        assert_relative_eq!(rho_kernel(20.0, 0.05, 1_000_001.0, 0.5).unwrap(), v, max_relative = 1e-12);
    }

    #[test]
    fn kernel_norm_bound_values() {
        let b = kernel_norm_bound_b(3.0, 0.5).unwrap();
        assert_relative_eq!(b, 2.736_377_027_257_839_4e39, max_relative = 1e-9);
        assert!(kernel_norm_bound_b(3.0, 0.6).unwrap() < b);
        assert!(kernel_norm_bound_b(2.0, 0.5).is_err());
        assert!(kernel_norm_bound_b(1000.0, 0.01).unwrap().is_infinite());
    }

    #[test]
    fn lin_accuracy_values() {
        let spec = |eps| SampleComplexitySpec::LinAccuracy {
            alpha: 0.1,
            eps,
            eps_alpha: 0.1,
            eps_gamma: 0.1,
            delta: 0.05,
        };
        let sc = pacf_sample_complexity(&spec(0.1)).unwrap();
        assert_relative_eq!(sc.branches[0], 672.354_792_910_911_7, max_relative = 1e-12);
        assert_relative_eq!(sc.branches[1], 1_617_358_728.818_807_8, max_relative = 1e-12);
        assert_eq!(sc.dominant, 1);
        assert_eq!(next_odd_ceil(sc.branches[0]), 673.0);
        let half = pacf_sample_complexity(&spec(0.05)).unwrap();
        assert_relative_eq!(half.branches[0] / sc.branches[0], 4.0, max_relative = 0.02);
    }

    #[test]
    fn sigmoid_accuracy_is_dominated_by_huge_b() {
        let sc = pacf_sample_complexity(&SampleComplexitySpec::SigmoidAccuracy {
            alpha: 0.1,
            eps: 0.5,
            eps_alpha: 0.9,
            eps_gamma: 0.99,
            delta: 0.05,
            l: 3.0,
        })
        .unwrap();
        assert!(sc.m > 1e40);
        assert!(sc.m.is_finite());
    }

    #[test]
    fn inf_pacf_fixed_point() {
        let sc = inf_pacf_sample_complexity(100.0, 0.5, 0.5, 0.05, |k| 1.0 / k.sqrt()).unwrap();
        let k = (sc.m - 1.0) / 2.0;
        let rhs = ((8.0 + 34.0 * (80.0f64).ln().sqrt()) / (0.25 - 8.0 / k.sqrt())).powi(2) + 1.0;
        assert!(sc.m >= rhs && sc.m % 2.0 == 1.0);
        let err = inf_pacf_sample_complexity(100.0, 0.1, 0.1, 0.05, |_| 0.01).unwrap_err();
        assert!(err.to_string().contains("Rademacher term dominates"));
        let flat = inf_pacf_sample_complexity(1e9, 0.1, 0.1, 0.05, |_| 0.0).unwrap();
        assert_eq!(flat.m, 1_000_000_001.0);
    }

    #[test]
    fn rademacher_identity_is_exact() {
        let est = empirical_rademacher_kernel_ball(&DMatrix::identity(16, 16), 1.0, 50, 3).unwrap();
        assert_eq!(est.value, 0.25);
    }

    #[test]
    fn rademacher_all_ones() {
        let est = empirical_rademacher_kernel_ball(&DMatrix::from_element(2, 2, 1.0), 1.0, 10_000, 5).unwrap();
        assert!((est.value - 0.5).abs() <= 0.01, "{est:?}");
    }

    #[test]
    fn linear_ball_matches_dot_gram() {
        let ds = LabeledDataset::from_rows(
            (0..12)
                .map(|i| {
                    let t = i as f64 * 0.7;
                    (vec![0.6 * t.cos(), 0.5 * t.sin(), 0.1], 1)
                })
                .collect(),
        )
        .unwrap();
        let gram = DMatrix::from_fn(12, 12, |i, j| crate::data::dot(ds.get(i).features(), ds.get(j).features()));
        let a = empirical_rademacher_linear_ball(&ds, 0.7, 300, 4).unwrap();
        let b = empirical_rademacher_kernel_ball(&gram, 0.7, 300, 4).unwrap();
        assert_relative_eq!(a.value, b.value, max_relative = 1e-9);
        assert_relative_eq!(a.mc_half_width, b.mc_half_width, max_relative = 1e-9);
    }

    #[test]
    fn non_psd_is_rejected() {
        let g = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(matches!(check_psd(&g), Err(PacfError::NotPsd { .. })));
        assert!(empirical_rademacher_kernel_ball(&g, 1.0, 10, 0).is_err());
    }

    #[test]
    fn odd_rounding() {
        assert_eq!(next_odd_ceil(4.0), 5.0);
        assert_eq!(next_odd_ceil(4.2), 5.0);
        assert_eq!(next_odd_ceil(5.0), 5.0);
        assert_eq!(next_odd_ceil(0.1), 1.0);
    }
}
