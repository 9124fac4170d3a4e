//! Fairness-constrained learners.
//!
//! Both learners minimize the mean absolute error `|h(x) - (1+y)/2|` over
//! the sample subject to the per-edge mean l1 fairness loss over a matching
//! being at most `tau`.

mod kernel;
mod linear;

pub use kernel::{gram_matrix, kernel_absolute_loss_baseline, train_fair_kernel, train_fair_kernel_with_matching};
pub use linear::{brute_force_oracle_2d, linear_program_values, LinearFairProgram, train_fair_linear, train_fair_linear_with_matching};

use serde::{Deserialize, Serialize};

use crate::bounds::{kernel_norm_bound_b, rho_kernel, rho_linear};
use crate::data::MatchingStrategy;
use crate::error::{invalid, PacfError, Result};
use crate::predictor::{KernelSpec, Predictor};
use crate::solver::{SolveReport, SolverConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelNorm {
    /// Squared RKHS-norm bound derived from the sigmoid Lipschitz bound `l`.
    FromLipschitz { l: f64 },
    Explicit { b: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerKind {
    Linear,
    Kernel { kernel: KernelSpec, norm: KernelNorm },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetMode {
    /// `rho = 0`: enforce `tau = alpha * gamma_tilde` on the sample.
    #[default]
    Empirical,
    /// `tau = (alpha - rho) * gamma_tilde`; fails unless this is positive.
    Theoretical,
}

fn default_b_max() -> f64 {
    1e4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub eps: f64,
    pub eps_alpha: f64,
    pub eps_gamma: f64,
    pub delta: f64,
    pub gamma_star: f64,
    pub learner: LearnerKind,
    #[serde(default)]
    pub mode: BudgetMode,
    /// Explicit per-edge l1 budget replacing the derived one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default = "default_b_max")]
    pub b_max: f64,
    pub matching: MatchingStrategy,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl TrainConfig {
    pub fn linear(alpha: f64, gamma: f64) -> Self {
        Self {
            alpha,
            gamma,
            eps: 0.1,
            eps_alpha: 0.1,
            eps_gamma: 0.1,
            delta: 0.05,
            gamma_star: 0.05,
            learner: LearnerKind::Linear,
            mode: BudgetMode::Empirical,
            tau: None,
            b_max: default_b_max(),
            matching: MatchingStrategy::RandomPermutation { seed: 0 },
            solver: SolverConfig::default(),
        }
    }

    pub fn kernel(alpha: f64, gamma: f64, kernel: KernelSpec, norm: KernelNorm) -> Self {
        Self {
            learner: LearnerKind::Kernel { kernel, norm },
            ..Self::linear(alpha, gamma)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let open = |n: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(invalid(format!("{n} = {v} must lie in (0,1)")))
            }
        };
        open("alpha", self.alpha)?;
        open("gamma", self.gamma)?;
        open("eps", self.eps)?;
        open("eps_alpha", self.eps_alpha)?;
        open("eps_gamma", self.eps_gamma)?;
        open("delta", self.delta)?;
        open("gamma_star", self.gamma_star)?;
        if let Some(t) = self.tau {
            if !(0.0..=1.0).contains(&t) {
                return Err(invalid(format!("tau = {t} must lie in [0,1]")));
            }
        }
        if !(self.b_max > 0.0) {
            return Err(invalid("b_max must be positive"));
        }
        if let LearnerKind::Kernel { norm, .. } = self.learner {
            match norm {
                KernelNorm::FromLipschitz { l } if !(l >= 3.0) => {
                    return Err(invalid(format!("L = {l} must be >= 3")))
                }
                KernelNorm::Explicit { b } if !(b > 0.0 && b.is_finite()) => {
                    return Err(invalid(format!("B = {b} must be positive and finite")))
                }
                _ => {}
            }
        }
        self.solver.validate()
    }

    fn eps_star(&self) -> f64 {
        match self.learner {
            LearnerKind::Linear => self.eps_alpha.min(self.eps_gamma / 2.0),
            LearnerKind::Kernel { .. } => self.eps.min(self.eps_alpha).min(self.eps_gamma / 2.0),
        }
    }

    /// `(B used by the optimizer, B from the Lipschitz formula if any)`.
    pub fn kernel_norm(&self) -> Result<Option<(f64, Option<f64>)>> {
        match self.learner {
            LearnerKind::Linear => Ok(None),
            LearnerKind::Kernel { norm: KernelNorm::Explicit { b }, .. } => Ok(Some((b, None))),
            LearnerKind::Kernel { norm: KernelNorm::FromLipschitz { l }, .. } => {
                let b_star = kernel_norm_bound_b(l, self.eps_star())?;
                Ok(Some((b_star.min(self.b_max), Some(b_star))))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverDerivedParams {
    pub g: f64,
    /// Slack applied to the budget (0 in empirical mode).
    pub rho: f64,
    /// Slack from the generalization bound, reported in both modes.
    pub rho_theoretical: Option<f64>,
    pub alpha_tilde: f64,
    /// `(alpha - rho_theoretical) * gamma_tilde`.
    pub alpha_tilde_theoretical: Option<f64>,
    pub gamma_tilde: f64,
    pub tau: f64,
    pub mode: BudgetMode,
}

pub fn derive_solver_params(config: &TrainConfig, m: usize, b: Option<f64>) -> Result<SolverDerivedParams> {
    config.validate()?;
    let g = 1.0 / config.eps_star();
    let gamma_tilde = config.gamma - 1.0 / g;
    let too_small = |alpha_tilde: f64| PacfError::SampleTooSmall { alpha_tilde, gamma_tilde };
    if gamma_tilde <= 0.0 {
        return Err(too_small(f64::NAN));
    }
    let rho_theoretical = if m >= 3 {
        Some(match (&config.learner, b) {
            (LearnerKind::Linear, _) => rho_linear(g, config.delta, m as f64)?,
            (LearnerKind::Kernel { .. }, Some(b)) => rho_kernel(g, config.delta, m as f64, b)?,
            (LearnerKind::Kernel { .. }, None) => {
                return Err(invalid("kernel learner needs a norm bound B"))
            }
        })
    } else {
        None
    };
    let alpha_tilde_theoretical = rho_theoretical.map(|r| (config.alpha - r) * gamma_tilde);
    let (rho, alpha_tilde) = match config.mode {
        BudgetMode::Empirical => (0.0, config.alpha * gamma_tilde),
        BudgetMode::Theoretical => {
            let at = alpha_tilde_theoretical.unwrap_or(f64::NEG_INFINITY);
            if at <= 0.0 {
                return Err(too_small(at));
            }
            (rho_theoretical.unwrap_or(f64::INFINITY), at)
        }
    };
    Ok(SolverDerivedParams {
        g,
        rho,
        rho_theoretical,
        alpha_tilde,
        alpha_tilde_theoretical,
        gamma_tilde,
        tau: config.tau.unwrap_or(alpha_tilde),
        mode: config.mode,
    })
}

/// Utility is measured in predictor space; for the linear class this is
/// half the absolute loss of the raw score against `y` in `{-1, +1}`.
pub const UTILITY_SCALE: &str = "mean |h(x) - (1+y)/2|";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub final_objective: f64,
    pub final_constraint_slack: f64,
    pub iterations: usize,
    pub converged: bool,
    pub utility: String,
    pub n_edges: usize,
    /// Per-edge l1 fairness loss of the solution over the training matching.
    pub empirical_l1_loss: f64,
    /// 0/1 fairness loss at `gamma_tilde` over the training matching.
    pub empirical_mf_loss_at_gamma_tilde: f64,
    /// `(tau + max(0, slack)) / gamma_tilde`, which bounds the previous value.
    pub mf_loss_bound: f64,
    pub derived: SolverDerivedParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_b_used: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_b_theoretical: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_rank: Option<usize>,
}

impl TrainingReport {
    pub(crate) fn new(solve: &SolveReport, derived: SolverDerivedParams, n_edges: usize, l1: f64, mf: f64) -> Self {
        let mf_loss_bound = (derived.tau + solve.final_constraint_slack.max(0.0)) / derived.gamma_tilde;
        Self {
            final_objective: solve.final_objective,
            final_constraint_slack: solve.final_constraint_slack,
            iterations: solve.iterations,
            converged: solve.converged,
            utility: UTILITY_SCALE.to_string(),
            n_edges,
            empirical_l1_loss: l1,
            empirical_mf_loss_at_gamma_tilde: mf,
            mf_loss_bound,
            derived,
            kernel_b_used: None,
            kernel_b_theoretical: None,
            kernel_rank: None,
        }
    }
}

pub const TRAINED_MODEL_SCHEMA: u32 = 1;

/// Serialized training output. The predictor fields are inlined, so the
/// document also deserializes directly as a [`Predictor`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub schema_version: u32,
    #[serde(flatten)]
    pub predictor: Predictor,
    pub training_config: TrainConfig,
    pub report: TrainingReport,
}

pub fn train(
    sample: &crate::data::LabeledDataset,
    d: &crate::metric::SimilarityMetric,
    config: &TrainConfig,
) -> Result<TrainedModel> {
    let (predictor, report) = match config.learner {
        LearnerKind::Linear => train_fair_linear(sample, d, config)?,
        LearnerKind::Kernel { .. } => train_fair_kernel(sample, d, config)?,
    };
    Ok(TrainedModel {
        schema_version: TRAINED_MODEL_SCHEMA,
        predictor,
        training_config: config.clone(),
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg() -> TrainConfig {
        TrainConfig {
            alpha: 0.2,
            gamma: 0.3,
            ..TrainConfig::linear(0.2, 0.3)
        }
    }

    #[test]
    fn theoretical_mode_rejects_desk_scale_samples() {
        let mut c = cfg();
        c.mode = BudgetMode::Theoretical;
        let err = derive_solver_params(&c, 1_000_001, None).unwrap_err();
        assert!(err.to_string().contains("sample too small for requested fairness/error parameters"));
    }

    #[test]
    fn empirical_mode_values() {
        let p = derive_solver_params(&cfg(), 1_000_001, None).unwrap();
        assert_relative_eq!(p.g, 20.0);
        assert_relative_eq!(p.gamma_tilde, 0.25, max_relative = 1e-12);
        assert_relative_eq!(p.alpha_tilde, 0.05, max_relative = 1e-12);
        assert_relative_eq!(p.tau, 0.05, max_relative = 1e-12);
        assert_eq!(p.rho, 0.0);
        assert_relative_eq!(p.rho_theoretical.unwrap(), 1.809_737_943_973_681_2, max_relative = 1e-12);
    }

    #[test]
    fn gamma_tilde_is_nonincreasing_in_eps_gamma() {
        let mut prev = f64::INFINITY;
        for eg in [0.02, 0.05, 0.1, 0.2, 0.3, 0.4] {
            let mut c = cfg();
            c.eps_gamma = eg;
            let p = derive_solver_params(&c, 101, None).unwrap();
            assert!(p.gamma_tilde <= prev);
            prev = p.gamma_tilde;
        }
    }

    #[test]
    fn gamma_below_surrogate_width_is_rejected() {
        let mut c = cfg();
        c.gamma = 0.04;
        assert!(matches!(derive_solver_params(&c, 101, None), Err(PacfError::SampleTooSmall { .. })));
    }

    #[test]
    fn kernel_norm_is_capped() {
        let c = TrainConfig::kernel(0.2, 0.3, KernelSpec::VovkHalf, KernelNorm::FromLipschitz { l: 3.0 });
        let (used, theo) = c.kernel_norm().unwrap().unwrap();
        assert_eq!(used, 1e4);
        assert!(theo.unwrap() > 1e30);
        let p = derive_solver_params(&c, 101, Some(used)).unwrap();
        assert_relative_eq!(p.g, 20.0);
    }
}
