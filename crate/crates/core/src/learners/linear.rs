use crate::audit::{l1_loss_from_gaps, mf_loss_from_gaps};
use crate::data::{build_matching, dot, LabeledDataset, Matching};
use crate::error::{invalid, Result};
use crate::metric::SimilarityMetric;
use crate::predictor::Predictor;
use crate::solver::{project_ball, solve_constrained, ConvexProgram};

use super::{derive_solver_params, TrainConfig, TrainingReport};

/// The l1-constrained program over `w` in the unit ball with
/// `h(x) = (1 + <w,x>)/2`.
pub struct LinearFairProgram {
    xs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    diffs: Vec<Vec<f64>>,
    dists: Vec<f64>,
    tau: f64,
}

impl LinearFairProgram {
    pub fn new(sample: &LabeledDataset, matching: &Matching, d: &SimilarityMetric, tau: f64) -> Result<Self> {
        if matching.is_empty() {
            return Err(crate::error::PacfError::EmptyMatching);
        }
        let mut diffs = Vec::with_capacity(matching.len());
        let mut dists = Vec::with_capacity(matching.len());
        for &(i, j) in matching.pairs() {
            let (a, b) = (sample.get(i), sample.get(j));
            diffs.push(a.features().iter().zip(b.features()).map(|(p, q)| p - q).collect());
            dists.push(d.distance(a, b)?);
        }
        Ok(Self {
            xs: sample.iter().map(|e| e.features().to_vec()).collect(),
            targets: sample.iter().map(|e| e.target()).collect(),
            diffs,
            dists,
            tau,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

impl ConvexProgram for LinearFairProgram {
    fn dim(&self) -> usize {
        self.xs[0].len()
    }

    fn objective(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let m = self.xs.len() as f64;
        let mut value = 0.0;
        let mut grad = vec![0.0; w.len()];
        for (x, t) in self.xs.iter().zip(&self.targets) {
            let r = 0.5 * (1.0 + dot(w, x)) - t;
            value += r.abs();
            let s = 0.5 * r.signum() / m;
            grad.iter_mut().zip(x).for_each(|(g, xi)| *g += s * xi);
        }
        (value / m, grad)
    }

    fn constraint(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let k = self.diffs.len() as f64;
        let mut value = 0.0;
        let mut grad = vec![0.0; w.len()];
        for (diff, dist) in self.diffs.iter().zip(&self.dists) {
            let z = 0.5 * dot(w, diff);
            let v = z.abs() - dist;
            if v > 0.0 {
                value += v;
                let s = 0.5 * z.signum() / k;
                grad.iter_mut().zip(diff).for_each(|(g, di)| *g += s * di);
            }
        }
        (value / k - self.tau, grad)
    }

    fn project(&self, w: &mut [f64]) {
        project_ball(w, 1.0);
    }

    fn domain_radius(&self) -> f64 {
        1.0
    }
}

/// Objective and constraint value of a linear predictor, for audits and tests.
pub fn linear_program_values(program: &LinearFairProgram, w: &[f64]) -> (f64, f64) {
    (program.objective(w).0, program.constraint(w).0)
}

pub fn train_fair_linear(
    sample: &LabeledDataset,
    d: &SimilarityMetric,
    config: &TrainConfig,
) -> Result<(Predictor, TrainingReport)> {
    let matching = build_matching(sample, config.matching)?;
    train_fair_linear_with_matching(sample, &matching, d, config)
}

pub fn train_fair_linear_with_matching(
    sample: &LabeledDataset,
    matching: &Matching,
    d: &SimilarityMetric,
    config: &TrainConfig,
) -> Result<(Predictor, TrainingReport)> {
    let derived = derive_solver_params(config, sample.len(), None)?;
    let program = LinearFairProgram::new(sample, matching, d, derived.tau)?;
    let (mut w, solve) = solve_constrained(&program, &config.solver, &vec![0.0; sample.dim()])?;
    project_ball(&mut w, 1.0);
    let gaps: Vec<(f64, f64)> = program
        .diffs
        .iter()
        .zip(&program.dists)
        .map(|(diff, dist)| ((0.5 * dot(&w, diff)).abs(), *dist))
        .collect();
    let l1 = l1_loss_from_gaps(&gaps);
    let mf = mf_loss_from_gaps(&gaps, derived.gamma_tilde);
    let report = TrainingReport::new(&solve, derived, gaps.len(), l1, mf);
    Ok((Predictor::linear(w)?, report))
}

/// Exhaustive search over the grid `resolution * Z^2` inside the unit disk
/// for the feasible weight vector of least objective.
pub fn brute_force_oracle_2d(
    sample: &LabeledDataset,
    d: &SimilarityMetric,
    config: &TrainConfig,
    resolution: f64,
) -> Result<(Vec<f64>, f64)> {
    if sample.dim() != 2 {
        return Err(invalid(format!("grid oracle needs 2-D data, got {}", sample.dim())));
    }
    if !(resolution > 0.0 && resolution <= 1.0) {
        return Err(invalid(format!("grid resolution {resolution} must lie in (0,1]")));
    }
    let derived = derive_solver_params(config, sample.len(), None)?;
    let matching = build_matching(sample, config.matching)?;
    let program = LinearFairProgram::new(sample, &matching, d, derived.tau)?;
    let steps = (1.0 / resolution).floor() as i64;
    let mut best: Option<(Vec<f64>, f64)> = None;
    for i in -steps..=steps {
        for j in -steps..=steps {
            let w = [i as f64 * resolution, j as f64 * resolution];
            if w[0] * w[0] + w[1] * w[1] > 1.0 {
                continue;
            }
            let (f, g) = linear_program_values(&program, &w);
            if g <= 0.0 && best.as_ref().is_none_or(|b| f < b.1) {
                best = Some((w.to_vec(), f));
            }
        }
    }
    best.ok_or_else(|| invalid("no feasible grid point"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::MatchingStrategy;

    fn two_points() -> LabeledDataset {
        LabeledDataset::from_rows(vec![(vec![1.0], 1), (vec![-1.0], -1)]).unwrap()
    }

    #[test]
    fn vacuous_constraint_fits_labels() {
        let cfg = TrainConfig::linear(0.2, 0.3);
        let (h, rep) = train_fair_linear(&two_points(), &SimilarityMetric::constant(1.0).unwrap(), &cfg).unwrap();
        let Predictor::Linear { weights } = h else { panic!() };
        assert!((weights[0] - 1.0).abs() < 1e-3, "{weights:?}");
        assert!(rep.final_objective < 1e-3);
    }

    #[test]
    fn zero_budget_forces_constant() {
        let mut cfg = TrainConfig::linear(0.2, 0.3);
        cfg.tau = Some(0.0);
        cfg.matching = MatchingStrategy::Consecutive;
        let (h, rep) = train_fair_linear(&two_points(), &SimilarityMetric::constant(0.0).unwrap(), &cfg).unwrap();
        let Predictor::Linear { weights } = h else { panic!() };
        assert!(weights[0].abs() < 1e-5, "{weights:?}");
        assert!((rep.final_objective - 0.5).abs() < 1e-5);
        assert!(rep.final_constraint_slack <= 1e-6);
    }

    #[test]
    fn oracle_on_separable_line() {
        let ds = LabeledDataset::from_rows(vec![
            (vec![0.9, 0.0], 1),
            (vec![-0.8, 0.0], -1),
            (vec![0.5, 0.0], 1),
            (vec![-0.6, 0.0], -1),
        ])
        .unwrap();
        let cfg = TrainConfig::linear(0.2, 0.3);
        let d = SimilarityMetric::constant(1.0).unwrap();
        let (w, f) = brute_force_oracle_2d(&ds, &d, &cfg, 0.01).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-9 && w[1].abs() < 1e-9);
        let (_, coarse) = brute_force_oracle_2d(&ds, &d, &cfg, 0.02).unwrap();
        assert!(f <= coarse);
    }
}
