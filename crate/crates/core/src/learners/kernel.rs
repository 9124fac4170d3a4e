use std::cell::RefCell;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::audit::{l1_loss_from_gaps, mf_loss_from_gaps};
use crate::bounds::check_psd;
use crate::data::{build_matching, LabeledDataset, Matching};
use crate::error::{invalid, PacfError, Result};
use crate::metric::SimilarityMetric;
use crate::predictor::{KernelExpansion, KernelSpec, Predictor};
use crate::solver::{project_ball, solve_constrained, ConvexProgram, SolverConfig};

use super::{derive_solver_params, LearnerKind, TrainConfig, TrainingReport};

/// Eigenvalues below this fraction of the largest are dropped from the
/// factorization `K = L L^T`.
pub const EIGEN_CUTOFF: f64 = 1e-8;

pub fn gram_matrix(sample: &LabeledDataset, kernel: &KernelSpec) -> Result<DMatrix<f64>> {
    let m = sample.len();
    let mut k = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = kernel.eval(sample.get(i), sample.get(j))?;
            if !v.is_finite() {
                return Err(PacfError::NonFinite("Gram matrix entry"));
            }
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    check_psd(&k)?;
    Ok(k)
}

/// `K = V diag(lambda) V^T` restricted to the retained eigenpairs.
struct Factor {
    /// `V diag(sqrt(lambda))`, so that `raw = L u` and `||u||^2 = beta^T K beta`.
    l: DMatrix<f64>,
    /// `V diag(1/sqrt(lambda))`, mapping `u` back to `beta`.
    back: DMatrix<f64>,
}

fn factor(gram: &DMatrix<f64>) -> Result<Factor> {
    let eig = SymmetricEigen::new(gram.clone());
    let max = eig.eigenvalues.max();
    let keep: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > EIGEN_CUTOFF * max)
        .collect();
    if keep.is_empty() {
        return Err(invalid("Gram matrix is numerically zero"));
    }
    let m = gram.nrows();
    let mut l = DMatrix::zeros(m, keep.len());
    let mut back = DMatrix::zeros(m, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        let s = eig.eigenvalues[i].sqrt();
        let v = eig.eigenvectors.column(i);
        l.set_column(c, &(v * s));
        back.set_column(c, &(v / s));
    }
    Ok(Factor { l, back })
}

struct KernelFairProgram<'a> {
    l: &'a DMatrix<f64>,
    targets: DVector<f64>,
    edges: Vec<(usize, usize)>,
    dists: Vec<f64>,
    tau: f64,
    radius: f64,
    fairness: bool,
    cache: RefCell<Option<(Vec<f64>, DVector<f64>)>>,
}

impl KernelFairProgram<'_> {
    fn raw(&self, u: &[f64]) -> DVector<f64> {
        let mut cache = self.cache.borrow_mut();
        if let Some((cu, raw)) = cache.as_ref() {
            if cu.as_slice() == u {
                return raw.clone();
            }
        }
        let raw = self.l * DVector::from_column_slice(u);
        *cache = Some((u.to_vec(), raw.clone()));
        raw
    }
}

impl ConvexProgram for KernelFairProgram<'_> {
    fn dim(&self) -> usize {
        self.l.ncols()
    }

    fn objective(&self, u: &[f64]) -> (f64, Vec<f64>) {
        let m = self.targets.len() as f64;
        let r = self.raw(u) - &self.targets;
        let s = r.map(|v| v.signum() / m);
        (r.abs().sum() / m, (self.l.tr_mul(&s)).as_slice().to_vec())
    }

    fn constraint(&self, u: &[f64]) -> (f64, Vec<f64>) {
        if !self.fairness {
            return (-1.0, vec![0.0; u.len()]);
        }
        let raw = self.raw(u);
        let k = self.edges.len() as f64;
        let mut value = 0.0;
        let mut c = DVector::zeros(raw.len());
        for (&(i, j), dist) in self.edges.iter().zip(&self.dists) {
            let z = raw[i] - raw[j];
            let v = z.abs() - dist;
            if v > 0.0 {
                value += v;
                let s = z.signum() / k;
                c[i] += s;
                c[j] -= s;
            }
        }
        (value / k - self.tau, self.l.tr_mul(&c).as_slice().to_vec())
    }

    fn project(&self, u: &mut [f64]) {
        project_ball(u, self.radius);
    }

    fn domain_radius(&self) -> f64 {
        self.radius
    }
}

struct KernelFit {
    predictor: Predictor,
    raw: DVector<f64>,
    solve: crate::solver::SolveReport,
    rank: usize,
}

#[allow(clippy::too_many_arguments)]
fn fit(
    sample: &LabeledDataset,
    kernel: &KernelSpec,
    edges: Vec<(usize, usize)>,
    dists: Vec<f64>,
    tau: f64,
    b: f64,
    fairness: bool,
    solver: &SolverConfig,
) -> Result<KernelFit> {
    let gram = gram_matrix(sample, kernel)?;
    let f = factor(&gram)?;
    let program = KernelFairProgram {
        l: &f.l,
        targets: DVector::from_iterator(sample.len(), sample.iter().map(|e| e.target())),
        edges,
        dists,
        tau,
        radius: b.sqrt(),
        fairness,
        cache: RefCell::new(None),
    };
    let (u, solve) = solve_constrained(&program, solver, &vec![0.0; program.dim()])?;
    let u = DVector::from_vec(u);
    let beta = &f.back * &u;
    let raw = &f.l * &u;
    let predictor = Predictor::kernel(KernelExpansion {
        kernel: kernel.clone(),
        support: sample.examples().to_vec(),
        coefficients: beta.as_slice().to_vec(),
    })?;
    Ok(KernelFit {
        predictor,
        raw,
        solve,
        rank: f.l.ncols(),
    })
}

pub fn train_fair_kernel(
    sample: &LabeledDataset,
    d: &SimilarityMetric,
    config: &TrainConfig,
) -> Result<(Predictor, TrainingReport)> {
    let matching = build_matching(sample, config.matching)?;
    train_fair_kernel_with_matching(sample, &matching, d, config)
}

pub fn train_fair_kernel_with_matching(
    sample: &LabeledDataset,
    matching: &Matching,
    d: &SimilarityMetric,
    config: &TrainConfig,
) -> Result<(Predictor, TrainingReport)> {
    let LearnerKind::Kernel { kernel, .. } = &config.learner else {
        return Err(invalid("train_fair_kernel needs a kernel learner config"));
    };
    if matching.is_empty() {
        return Err(PacfError::EmptyMatching);
    }
    let (b_used, b_theoretical) = config.kernel_norm()?.expect("kernel learner");
    let derived = derive_solver_params(config, sample.len(), Some(b_used))?;
    let edges = matching.pairs().to_vec();
    let dists = edges
        .iter()
        .map(|&(i, j)| d.distance(sample.get(i), sample.get(j)))
        .collect::<Result<Vec<_>>>()?;
    let fit = fit(sample, kernel, edges.clone(), dists.clone(), derived.tau, b_used, true, &config.solver)?;
    let h = fit.raw.map(|v| v.clamp(0.0, 1.0));
    let gaps: Vec<(f64, f64)> = edges.iter().zip(&dists).map(|(&(i, j), &dist)| ((h[i] - h[j]).abs(), dist)).collect();
    let mut report = TrainingReport::new(
        &fit.solve,
        derived.clone(),
        gaps.len(),
        l1_loss_from_gaps(&gaps),
        mf_loss_from_gaps(&gaps, derived.gamma_tilde),
    );
    report.kernel_b_used = Some(b_used);
    report.kernel_b_theoretical = b_theoretical;
    report.kernel_rank = Some(fit.rank);
    Ok((fit.predictor, report))
}

/// Kernel absolute-loss regression over the RKHS ball `beta^T K beta <= b`
/// with no fairness constraint. Returns the predictor and its objective.
pub fn kernel_absolute_loss_baseline(
    sample: &LabeledDataset,
    kernel: &KernelSpec,
    b: f64,
    solver: &SolverConfig,
) -> Result<(Predictor, f64)> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(invalid(format!("B = {b} must be positive and finite")));
    }
    let fit = fit(sample, kernel, Vec::new(), Vec::new(), 0.0, b, false, solver)?;
    Ok((fit.predictor, fit.solve.final_objective))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::MatchingStrategy;
    use crate::learners::KernelNorm;

    #[test]
    fn vovk_gram_special_cases() {
        let zeros = LabeledDataset::from_rows(vec![(vec![0.0, 0.0], 1); 3]).unwrap();
        let k = gram_matrix(&zeros, &KernelSpec::VovkHalf).unwrap();
        assert!(k.iter().all(|&v| v == 1.0));
        let anti = LabeledDataset::from_rows(vec![(vec![1.0, 0.0], 1), (vec![-1.0, 0.0], -1)]).unwrap();
        let k = gram_matrix(&anti, &KernelSpec::VovkHalf).unwrap();
        assert_eq!(k[(0, 0)], 2.0);
        assert!((k[(0, 1)] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_budget_equalizes_matched_pairs() {
        let ds = LabeledDataset::from_rows(vec![
            (vec![0.5, 0.1], 1),
            (vec![-0.4, 0.2], -1),
            (vec![0.1, -0.6], 1),
            (vec![-0.3, -0.3], -1),
        ])
        .unwrap();
        let mut cfg = TrainConfig::kernel(0.2, 0.3, KernelSpec::VovkHalf, KernelNorm::Explicit { b: 100.0 });
        cfg.tau = Some(0.0);
        cfg.matching = MatchingStrategy::Consecutive;
        let (h, rep) = train_fair_kernel(&ds, &SimilarityMetric::constant(0.0).unwrap(), &cfg).unwrap();
        assert!(rep.final_constraint_slack <= 1e-6);
        let p: Vec<f64> = ds.iter().map(|x| h.predict(x).unwrap()).collect();
        assert!((p[0] - p[1]).abs() <= 2e-6 && (p[2] - p[3]).abs() <= 2e-6, "{p:?}");
    }

    #[test]
    fn expansion_reproduces_training_raw_values() {
        let ds = LabeledDataset::from_rows(
            (0..10)
                .map(|i| {
                    let t = i as f64 * 0.6;
                    (vec![0.8 * t.cos(), 0.8 * t.sin()], if i % 3 == 0 { 1 } else { -1 })
                })
                .collect(),
        )
        .unwrap();
        let cfg = TrainConfig::kernel(0.2, 0.3, KernelSpec::VovkHalf, KernelNorm::Explicit { b: 50.0 });
        let (h, _) = train_fair_kernel(&ds, &SimilarityMetric::euclidean(1.0).unwrap(), &cfg).unwrap();
        let Predictor::Kernel(exp) = &h else { panic!() };
        let gram = gram_matrix(&ds, &KernelSpec::VovkHalf).unwrap();
        let kb = &gram * DVector::from_column_slice(&exp.coefficients);
        for (i, x) in ds.iter().enumerate() {
            assert!((exp.raw(x).unwrap() - kb[i]).abs() <= 1e-9);
        }
        assert!(exp.rkhs_norm_sq().unwrap() <= 50.0 * (1.0 + 1e-6));
    }
}
