//! Fairness losses and audits.
//!
//! All losses compare prediction gaps `|h(x) - h(x')|` against the metric
//! distance `d(x, x')`. The 0/1 loss counts pairs whose gap exceeds
//! `d + gamma` strictly; the l1 loss averages the positive part of
//! `gap - d`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Example, ExampleSource, LabeledDataset, Matching};
use crate::error::{invalid, PacfError, Result};
use crate::metric::SimilarityMetric;
use crate::predictor::Predictor;
use crate::rng;

/// Confidence level of the Monte-Carlo half-widths.
pub const CONFIDENCE: f64 = 0.95;

/// Fairness targets shared by audits and learners.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessParams {
    pub alpha: f64,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha2: Option<f64>,
    /// Per-edge l1 budget.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    /// Slack of the lower l0/l1 containment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

impl FairnessParams {
    pub fn new(alpha: f64, gamma: f64) -> Result<Self> {
        let p = Self {
            alpha,
            gamma,
            alpha1: None,
            alpha2: None,
            tau: None,
            sigma: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let open = |v: f64| v > 0.0 && v < 1.0;
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(invalid(format!("alpha = {} must lie in [0,1)", self.alpha)));
        }
        if !open(self.gamma) {
            return Err(invalid(format!("gamma = {} must lie in (0,1)", self.gamma)));
        }
        for (name, v) in [("alpha1", self.alpha1), ("alpha2", self.alpha2), ("sigma", self.sigma)] {
            if let Some(v) = v {
                if !open(v) {
                    return Err(invalid(format!("{name} = {v} must lie in (0,1)")));
                }
            }
        }
        if let Some(t) = self.tau {
            if !(0.0..=1.0).contains(&t) {
                return Err(invalid(format!("tau = {t} must lie in [0,1]")));
            }
        }
        Ok(())
    }

    /// Whether `alpha1 * alpha2 >= alpha`, the regime where an
    /// `(alpha, gamma)` guarantee implies the group-level one.
    pub fn group_guarantee_applies(&self) -> Option<bool> {
        Some(self.alpha1? * self.alpha2? >= self.alpha)
    }
}

/// `1[u > gamma]`.
pub fn threshold_indicator(u: f64, gamma: f64) -> f64 {
    if u > gamma {
        1.0
    } else {
        0.0
    }
}

/// Piecewise-linear `G`-Lipschitz ramp from 0 at `gamma` to 1 at `gamma + 1/G`.
pub fn surrogate_ramp(u: f64, gamma: f64, g: f64) -> f64 {
    if u <= gamma {
        0.0
    } else if u >= gamma + 1.0 / g {
        1.0
    } else {
        g * (u - gamma)
    }
}

/// `|h(x) - h(x')|` and `d(x, x')`.
fn gap_and_distance(
    h: &Predictor,
    x: &Example,
    x2: &Example,
    d: &SimilarityMetric,
) -> Result<(f64, f64)> {
    Ok(((h.predict(x)? - h.predict(x2)?).abs(), d.distance(x, x2)?))
}

/// 0/1 metric-fairness loss on a pair.
pub fn pair_mf_loss(
    h: &Predictor,
    x: &Example,
    x2: &Example,
    d: &SimilarityMetric,
    gamma: f64,
) -> Result<u8> {
    let (gap, dist) = gap_and_distance(h, x, x2, d)?;
    Ok(u8::from(gap > dist + gamma))
}

/// `max(0, |h(x) - h(x')| - d(x, x'))`.
pub fn pair_l1_loss(h: &Predictor, x: &Example, x2: &Example, d: &SimilarityMetric) -> Result<f64> {
    let (gap, dist) = gap_and_distance(h, x, x2, d)?;
    Ok((gap - dist).max(0.0))
}

/// Surrogate loss `tau_gamma^G(|h(x) - h(x')| - d(x, x'))`.
pub fn surrogate_loss(
    h: &Predictor,
    x: &Example,
    x2: &Example,
    d: &SimilarityMetric,
    gamma: f64,
    g: f64,
) -> Result<f64> {
    if g < 1.0 {
        return Err(invalid(format!("surrogate Lipschitz constant G = {g} must be >= 1")));
    }
    let (gap, dist) = gap_and_distance(h, x, x2, d)?;
    Ok(surrogate_ramp(gap - dist, gamma, g))
}

/// Per-edge `(gap, distance)` over a matching.
pub fn edge_gaps(
    h: &Predictor,
    sample: &LabeledDataset,
    matching: &Matching,
    d: &SimilarityMetric,
) -> Result<Vec<(f64, f64)>> {
    if matching.is_empty() {
        return Err(PacfError::EmptyMatching);
    }
    matching
        .pairs()
        .iter()
        .map(|&(i, j)| gap_and_distance(h, sample.get(i), sample.get(j), d))
        .collect()
}

/// Fraction of matching edges violating `gap <= d + gamma`.
pub fn empirical_mf_loss(
    h: &Predictor,
    sample: &LabeledDataset,
    matching: &Matching,
    d: &SimilarityMetric,
    gamma: f64,
) -> Result<f64> {
    let gaps = edge_gaps(h, sample, matching, d)?;
    Ok(mf_loss_from_gaps(&gaps, gamma))
}

pub(crate) fn mf_loss_from_gaps(gaps: &[(f64, f64)], gamma: f64) -> f64 {
    let violations = gaps.iter().filter(|(g, d)| *g > d + gamma).count();
    violations as f64 / gaps.len() as f64
}

pub(crate) fn l1_loss_from_gaps(gaps: &[(f64, f64)]) -> f64 {
    gaps.iter().map(|(g, d)| (g - d).max(0.0)).sum::<f64>() / gaps.len() as f64
}

/// Average l1 violation over matching edges.
pub fn empirical_l1_loss(
    h: &Predictor,
    sample: &LabeledDataset,
    matching: &Matching,
    d: &SimilarityMetric,
) -> Result<f64> {
    Ok(l1_loss_from_gaps(&edge_gaps(h, sample, matching, d)?))
}

/// Per-edge `max(0, gap - d - gamma)`, clamped to `[0,1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViolationVector {
    pub values: Vec<f64>,
}

impl ViolationVector {
    pub fn l0(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0.0).count()
    }

    pub fn l1(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn violation_vector(
    h: &Predictor,
    sample: &LabeledDataset,
    matching: &Matching,
    d: &SimilarityMetric,
    gamma: f64,
) -> Result<ViolationVector> {
    let values = edge_gaps(h, sample, matching, d)?
        .into_iter()
        .map(|(g, dist)| (g - dist - gamma).clamp(0.0, 1.0))
        .collect();
    Ok(ViolationVector { values })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationEstimate {
    pub estimate: f64,
    /// Two-sided Hoeffding half-width at 95%.
    pub half_width: f64,
    pub n_pairs: usize,
}

/// Hoeffding half-width for the mean of `n` draws bounded in `[0, range]`.
pub fn hoeffding_half_width(n: usize, range: f64) -> f64 {
    range * ((2.0 / (1.0 - CONFIDENCE)).ln() / (2.0 * n as f64)).sqrt()
}

/// Monte-Carlo estimate of the population 0/1 loss over i.i.d. pairs.
///
/// Pair `i` is drawn from its own counter-keyed stream, so the result is
/// independent of the thread count.
pub fn population_mf_estimate(
    h: &Predictor,
    source: &dyn ExampleSource,
    d: &SimilarityMetric,
    gamma: f64,
    n_pairs: usize,
    seed: u64,
) -> Result<PopulationEstimate> {
    if n_pairs == 0 {
        return Err(invalid("n_pairs must be at least 1"));
    }
    let violations = (0..n_pairs)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            let x = source.draw(&mut r);
            let x2 = source.draw(&mut r);
            pair_mf_loss(h, &x, &x2, d, gamma).map(u64::from)
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(PopulationEstimate {
        estimate: violations as f64 / n_pairs as f64,
        half_width: hoeffding_half_width(n_pairs, 1.0),
        n_pairs,
    })
}

/// Per-individual violation rates under the empirical distribution of the
/// sample: `rate_i = (1/m) * #{j : gap(i,j) > d(i,j) + gamma}`.
pub fn individual_violation_rates(
    h: &Predictor,
    sample: &LabeledDataset,
    d: &SimilarityMetric,
    gamma: f64,
) -> Result<Vec<f64>> {
    let preds = h.predict_all(sample.examples())?;
    let m = sample.len();
    (0..m)
        .into_par_iter()
        .map(|i| {
            let mut count = 0usize;
            for j in 0..m {
                if i == j {
                    continue;
                }
                let dist = d.distance(sample.get(i), sample.get(j))?;
                if (preds[i] - preds[j]).abs() > dist + gamma {
                    count += 1;
                }
            }
            Ok(count as f64 / m as f64)
        })
        .collect()
}

/// 0/1 loss under the empirical all-pairs distribution (the mean of
/// [`individual_violation_rates`]).
pub fn all_pairs_mf_loss(
    h: &Predictor,
    sample: &LabeledDataset,
    d: &SimilarityMetric,
    gamma: f64,
) -> Result<f64> {
    let rates = individual_violation_rates(h, sample, d, gamma)?;
    Ok(rates.iter().sum::<f64>() / rates.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupFairnessPoint {
    pub alpha2: f64,
    /// Fraction of individuals whose violation rate exceeds `alpha2`.
    pub alpha1: f64,
}

pub fn group_fairness_profile(
    h: &Predictor,
    sample: &LabeledDataset,
    d: &SimilarityMetric,
    gamma: f64,
    alpha2_grid: &[f64],
) -> Result<Vec<GroupFairnessPoint>> {
    let rates = individual_violation_rates(h, sample, d, gamma)?;
    Ok(profile_from_rates(&rates, alpha2_grid))
}

pub(crate) fn profile_from_rates(rates: &[f64], alpha2_grid: &[f64]) -> Vec<GroupFairnessPoint> {
    alpha2_grid
        .iter()
        .map(|&alpha2| GroupFairnessPoint {
            alpha2,
            alpha1: rates.iter().filter(|&&r| r > alpha2).count() as f64 / rates.len() as f64,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerfectFairnessAudit {
    pub perfectly_fair: bool,
    /// Indices into the audited pair list.
    pub violating_pairs: Vec<usize>,
}

/// Check `|h(x) - h(x')| <= d(x, x') + tolerance` on every given pair.
pub fn is_perfectly_fair(
    h: &Predictor,
    pairs: &[(Example, Example)],
    d: &SimilarityMetric,
    tolerance: f64,
) -> Result<PerfectFairnessAudit> {
    let mut violating_pairs = Vec::new();
    for (k, (x, x2)) in pairs.iter().enumerate() {
        let (gap, dist) = gap_and_distance(h, x, x2, d)?;
        if gap > dist + tolerance {
            violating_pairs.push(k);
        }
    }
    Ok(PerfectFairnessAudit {
        perfectly_fair: violating_pairs.is_empty(),
        violating_pairs,
    })
}

pub const FAIRNESS_REPORT_SCHEMA: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub schema_version: u32,
    pub gamma: f64,
    pub n_edges: usize,
    pub empirical_mf_loss: f64,
    pub empirical_l1_loss: f64,
    pub population_estimate: Option<f64>,
    /// `[estimate - half_width, estimate + half_width]` clipped to `[0,1]`.
    pub population_ci: Option<[f64; 2]>,
    pub group_profile: Vec<GroupFairnessPoint>,
}

/// What to include in an audit beyond the matching-based losses.
#[derive(Clone)]
pub struct AuditOptions<'a> {
    pub gamma: f64,
    pub alpha2_grid: Vec<f64>,
    pub population: Option<(&'a dyn ExampleSource, usize, u64)>,
}

pub fn audit(
    h: &Predictor,
    sample: &LabeledDataset,
    matching: &Matching,
    d: &SimilarityMetric,
    options: &AuditOptions<'_>,
) -> Result<FairnessReport> {
    let gaps = edge_gaps(h, sample, matching, d)?;
    let group_profile = if options.alpha2_grid.is_empty() {
        Vec::new()
    } else {
        group_fairness_profile(h, sample, d, options.gamma, &options.alpha2_grid)?
    };
    let population = options
        .population
        .map(|(src, n, seed)| population_mf_estimate(h, src, d, options.gamma, n, seed))
        .transpose()?;
    Ok(FairnessReport {
        schema_version: FAIRNESS_REPORT_SCHEMA,
        gamma: options.gamma,
        n_edges: gaps.len(),
        empirical_mf_loss: mf_loss_from_gaps(&gaps, options.gamma),
        empirical_l1_loss: l1_loss_from_gaps(&gaps),
        population_estimate: population.map(|p| p.estimate),
        population_ci: population.map(|p| {
            [
                (p.estimate - p.half_width).max(0.0),
                (p.estimate + p.half_width).min(1.0),
            ]
        }),
        group_profile,
    })
}
