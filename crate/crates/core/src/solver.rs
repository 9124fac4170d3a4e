//! Alternating projected subgradient method for
//! `min f(w) s.t. g(w) <= 0, w in W` with `f`, `g` convex and `W` a convex
//! set with an exact projection.
//!
//! Each iteration takes a Polyak step on `g` when the iterate is infeasible
//! beyond tolerance and a normalized step on `f` otherwise. Iterations are
//! grouped into epochs; each epoch halves the step scale and restarts from
//! the best feasible point found so far, which is either a feasible iterate
//! or the average of the feasible iterates of an epoch.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, PacfError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    /// Objective steps of length `(f - target) / ||subgradient||` with
    /// target level `best - 0.05 * scale`, `scale` halving each epoch.
    Polyak,
    /// Objective steps of length `c0 * radius / sqrt(k + 1)`.
    InverseSqrt { c0: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub step_schedule: StepSchedule,
    pub feasibility_tolerance: f64,
    pub objective_tolerance: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    pub seed: u64,
}

fn default_epochs() -> usize {
    12
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 20_000,
            step_schedule: StepSchedule::InverseSqrt { c0: 0.5 },
            feasibility_tolerance: 1e-6,
            objective_tolerance: 1e-2,
            epochs: default_epochs(),
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || self.epochs == 0 {
            return Err(invalid("max_iters and epochs must be positive"));
        }
        if !(self.feasibility_tolerance > 0.0 && self.objective_tolerance > 0.0) {
            return Err(invalid("solver tolerances must be positive"));
        }
        if let StepSchedule::InverseSqrt { c0 } = self.step_schedule {
            if !(c0 > 0.0 && c0.is_finite()) {
                return Err(invalid(format!("step constant c0 = {c0} must be positive")));
            }
        }
        Ok(())
    }
}

/// A convex program over `R^dim`.
pub trait ConvexProgram {
    fn dim(&self) -> usize;
    /// Objective value and a subgradient.
    fn objective(&self, w: &[f64]) -> (f64, Vec<f64>);
    /// Constraint value and a subgradient; feasible iff value <= 0.
    fn constraint(&self, w: &[f64]) -> (f64, Vec<f64>);
    /// Euclidean projection onto the domain, in place.
    fn project(&self, w: &mut [f64]);
    /// Radius of a ball containing the domain.
    fn domain_radius(&self) -> f64;
}

pub type ValueAndGrad<'a> = Box<dyn Fn(&[f64]) -> (f64, Vec<f64>) + 'a>;

/// A [`ConvexProgram`] assembled from closures.
pub type Projection<'a> = Box<dyn Fn(&mut [f64]) + 'a>;

pub struct FnProgram<'a> {
    pub dim: usize,
    pub radius: f64,
    pub objective: ValueAndGrad<'a>,
    pub constraint: ValueAndGrad<'a>,
    pub project: Projection<'a>,
}

impl ConvexProgram for FnProgram<'_> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn objective(&self, w: &[f64]) -> (f64, Vec<f64>) {
        (self.objective)(w)
    }
    fn constraint(&self, w: &[f64]) -> (f64, Vec<f64>) {
        (self.constraint)(w)
    }
    fn project(&self, w: &mut [f64]) {
        (self.project)(w)
    }
    fn domain_radius(&self) -> f64 {
        self.radius
    }
}

/// Projection onto the Euclidean ball of the given radius by radial scaling.
pub fn project_ball(w: &mut [f64], radius: f64) {
    let n = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > radius {
        let s = radius / n;
        w.iter_mut().for_each(|v| *v *= s);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub final_objective: f64,
    pub final_constraint_slack: f64,
    pub iterations: usize,
    pub converged: bool,
    pub epochs_run: usize,
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn axpy(w: &mut [f64], a: f64, g: &[f64]) {
    w.iter_mut().zip(g).for_each(|(x, y)| *x += a * y);
}

struct Best {
    point: Vec<f64>,
    objective: f64,
}

pub fn solve_constrained(
    program: &dyn ConvexProgram,
    config: &SolverConfig,
    initial: &[f64],
) -> Result<(Vec<f64>, SolveReport)> {
    config.validate()?;
    let n = program.dim();
    if initial.len() != n {
        return Err(PacfError::DimensionMismatch {
            expected: n,
            got: initial.len(),
        });
    }
    let tol = config.feasibility_tolerance;
    let radius = program.domain_radius().max(f64::MIN_POSITIVE);
    let mut x = initial.to_vec();
    program.project(&mut x);

    let mut best: Option<Best> = None;
    let mut least_infeasible = (f64::INFINITY, x.clone());
    let consider = |p: &[f64], best: &mut Option<Best>| -> Option<f64> {
        let (g, _) = program.constraint(p);
        if g <= tol {
            let (f, _) = program.objective(p);
            if best.as_ref().is_none_or(|b| f < b.objective) {
                *best = Some(Best {
                    point: p.to_vec(),
                    objective: f,
                });
            }
            Some(f)
        } else {
            None
        }
    };

    let per_epoch = (config.max_iters / config.epochs).max(1);
    let mut iterations = 0;
    let mut epochs_run = 0;
    let mut stalls = 0;
    for epoch in 0..config.epochs {
        epochs_run += 1;
        let scale = 0.5f64.powi(epoch as i32);
        let before = best.as_ref().map(|b| b.objective);
        let mut avg = vec![0.0; n];
        let mut avg_weight = 0.0;
        let mut k_obj = 0usize;
        for _ in 0..per_epoch {
            iterations += 1;
            let (g, dg) = program.constraint(&x);
            if g > tol {
                if g < least_infeasible.0 {
                    least_infeasible = (g, x.clone());
                }
                let norm2 = sq_norm(&dg);
                if norm2 == 0.0 {
                    break;
                }
                axpy(&mut x, -(g + 0.5 * tol) / norm2, &dg);
            } else {
                let (f, df) = program.objective(&x);
                if best.as_ref().is_none_or(|b| f < b.objective) {
                    best = Some(Best {
                        point: x.clone(),
                        objective: f,
                    });
                }
                let norm = sq_norm(&df).sqrt();
                if norm == 0.0 {
                    break;
                }
                let step = match config.step_schedule {
                    StepSchedule::InverseSqrt { c0 } => c0 * radius * scale / ((k_obj + 1) as f64).sqrt(),
                    StepSchedule::Polyak => {
                        let target = best.as_ref().map_or(f, |b| b.objective) - 0.05 * scale;
                        ((f - target) / norm).min(radius)
                    }
                };
                avg_weight += step;
                axpy(&mut avg, step, &x);
                axpy(&mut x, -step / norm, &df);
                k_obj += 1;
            }
            program.project(&mut x);
        }
        if avg_weight > 0.0 {
            avg.iter_mut().for_each(|v| *v /= avg_weight);
            program.project(&mut avg);
            consider(&avg, &mut best);
        }
        consider(&x, &mut best);
        if let Some(b) = &best {
            x = b.point.clone();
            let improved = before.is_none_or(|f0| f0 - b.objective > 1e-12);
            stalls = if improved { 0 } else { stalls + 1 };
            if stalls >= 2 && epoch >= 3 {
                break;
            }
        }
    }

    match best {
        Some(b) => {
            let (g, _) = program.constraint(&b.point);
            Ok((
                b.point,
                SolveReport {
                    final_objective: b.objective,
                    final_constraint_slack: g,
                    iterations,
                    converged: g <= tol,
                    epochs_run,
                },
            ))
        }
        None => Err(PacfError::Infeasible {
            best_point: least_infeasible.1,
            best_slack: least_infeasible.0,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interval_program<'a>(
        f: impl Fn(f64) -> (f64, f64) + 'a,
        g: impl Fn(f64) -> (f64, f64) + 'a,
    ) -> FnProgram<'a> {
        FnProgram {
            dim: 1,
            radius: 1.0,
            objective: Box::new(move |w| {
                let (v, d) = f(w[0]);
                (v, vec![d])
            }),
            constraint: Box::new(move |w| {
                let (v, d) = g(w[0]);
                (v, vec![d])
            }),
            project: Box::new(|w| w[0] = w[0].clamp(-1.0, 1.0)),
        }
    }

    #[test]
    fn active_constraint_at_boundary() {
        let p = interval_program(|w| (-w, -1.0), |w| (w - 0.3, 1.0));
        let (w, rep) = solve_constrained(&p, &SolverConfig::default(), &[0.0]).unwrap();
        assert!((w[0] - 0.3).abs() < 1e-3, "{w:?}");
        assert!(rep.converged);
        assert!(rep.final_constraint_slack <= 1e-6);
    }

    #[test]
    fn interior_l1_minimum() {
        let w0 = [0.2, -0.4];
        let p = FnProgram {
            dim: 2,
            radius: 1.0,
            objective: Box::new(move |w| {
                let v = w.iter().zip(&w0).map(|(a, b)| (a - b).abs()).sum();
                let g = w.iter().zip(&w0).map(|(a, b)| (a - b).signum()).collect();
                (v, g)
            }),
            constraint: Box::new(|w| (-1.0, vec![0.0; w.len()])),
            project: Box::new(|w| project_ball(w, 1.0)),
        };
        let (w, rep) = solve_constrained(&p, &SolverConfig::default(), &[0.0, 0.0]).unwrap();
        assert!(rep.final_objective < 1e-3, "{w:?} {rep:?}");
    }

    #[test]
    fn infeasible_reports_best_slack() {
        let p = interval_program(|w| (w, 1.0), |w| (2.0 - w, -1.0));
        let cfg = SolverConfig {
            max_iters: 100,
            ..Default::default()
        };
        match solve_constrained(&p, &cfg, &[0.0]) {
            Err(PacfError::Infeasible { best_slack, .. }) => assert!((best_slack - 1.0).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn deterministic() {
        let p = interval_program(|w| ((w - 0.7).abs(), (w - 0.7).signum()), |w| (w - 0.5, 1.0));
        let a = solve_constrained(&p, &SolverConfig::default(), &[-0.9]).unwrap();
        let b = solve_constrained(&p, &SolverConfig::default(), &[-0.9]).unwrap();
        assert_eq!(a.0[0].to_bits(), b.0[0].to_bits());
    }

    #[test]
    fn polyak_schedule() {
        let p = interval_program(|w| ((w - 0.7).abs(), (w - 0.7).signum()), |w| (w - 0.5, 1.0));
        let cfg = SolverConfig {
            step_schedule: StepSchedule::Polyak,
            ..Default::default()
        };
        let (w, _) = solve_constrained(&p, &cfg, &[-0.9]).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-3, "{w:?}");
    }

    #[test]
    fn ball_projection() {
        let mut w = [3.0, 4.0];
        project_ball(&mut w, 1.0);
        assert!((w[0] - 0.6).abs() < 1e-15 && (w[1] - 0.8).abs() < 1e-15);
        let mut v = [0.1, 0.1];
        project_ball(&mut v, 1.0);
        assert_eq!(v, [0.1, 0.1]);
    }
}
