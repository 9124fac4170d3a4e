//! The pseudorandom-metric construction under which perfect metric-fairness
//! forces error 1/2, and a desk-scale experiment that exercises it.
//!
//! A metric is described by a `2n`-bit string `y`. Two points with opposite
//! signs in the last coordinate are at distance 0 exactly when the sign-flip
//! pattern `Δ` of their first `n-1` coordinates expands to `y`; all other
//! distinct pairs are at distance 1. In mode U, `y = E(s)` for a hidden seed
//! `s`, so every point has an opposite-label twin at distance 0. In mode V,
//! `y` is uniform and (with overwhelming probability) no twin exists.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha3::digest::{ExtendableOutput, Update, XofReader};
use sha3::Shake256;

use crate::audit::{is_perfectly_fair, l1_loss_from_gaps, mf_loss_from_gaps};
use crate::data::{Example, LabeledDataset, Matching};
use crate::error::{invalid, PacfError, Result};
use crate::learners::{train_fair_kernel_with_matching, train_fair_linear_with_matching, LearnerKind, TrainConfig};
use crate::metric::SimilarityMetric;
use crate::predictor::Predictor;
use crate::rng;

const DOMAIN_TAG: &[u8] = b"pacf/expand-seed/v1";

/// Fixed-length bit string, serialized as a string of `0`/`1`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct BitString(Vec<bool>);

impl BitString {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn random<R: Rng>(rng: &mut R, len: usize) -> Self {
        Self((0..len).map(|_| rng.gen()).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.0.len().div_ceil(8)];
        for (i, &b) in self.0.iter().enumerate() {
            if b {
                out[i / 8] |= 1 << (i % 8);
            }
        }
        out
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({})", String::from(self.clone()))
    }
}

impl From<BitString> for String {
    fn from(b: BitString) -> String {
        b.0.iter().map(|&x| if x { '1' } else { '0' }).collect()
    }
}

impl TryFrom<String> for BitString {
    type Error = PacfError;
    fn try_from(s: String) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(invalid(format!("bit string contains {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(BitString)
    }
}

/// Length-doubling expansion `{0,1}^(n-1) -> {0,1}^(2n)` built on SHAKE256.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpansionFunction {
    n: usize,
}

impl ExpansionFunction {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(invalid(format!("expansion needs n >= 2, got {n}")));
        }
        Ok(Self { n })
    }

    pub fn input_len(&self) -> usize {
        self.n - 1
    }

    pub fn output_len(&self) -> usize {
        2 * self.n
    }

    pub fn expand(&self, seed: &BitString) -> Result<BitString> {
        if seed.len() != self.input_len() {
            return Err(PacfError::BitLength {
                expected: self.input_len(),
                got: seed.len(),
            });
        }
        let mut hasher = Shake256::default();
        hasher.update(DOMAIN_TAG);
        hasher.update(&(self.n as u64).to_le_bytes());
        hasher.update(&seed.to_bytes());
        let mut reader = hasher.finalize_xof();
        let mut buf = vec![0u8; self.output_len().div_ceil(8)];
        reader.read(&mut buf);
        let bits = (0..self.output_len())
            .map(|i| buf[i / 8] >> (i % 8) & 1 == 1)
            .collect();
        Ok(BitString(bits))
    }
}

/// Expand an `(n-1)`-bit seed to `2n` bits.
pub fn expand_seed(seed: &BitString, n: usize) -> Result<BitString> {
    ExpansionFunction::new(n)?.expand(seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HardnessMode {
    /// `y` is the expansion of a hidden seed.
    U,
    /// `y` is uniformly random.
    V,
}

impl std::str::FromStr for HardnessMode {
    type Err = PacfError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "u" => Ok(HardnessMode::U),
            "v" => Ok(HardnessMode::V),
            _ => Err(invalid(format!("mode must be u or v, got {s:?}"))),
        }
    }
}

/// Description of one metric drawn from U or V.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardnessMetricHandle {
    pub n: usize,
    pub mode: HardnessMode,
    pub y: BitString,
    /// The hidden seed with `E(seed) = y`; present in mode U only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<BitString>,
}

impl HardnessMetricHandle {
    pub fn sample<R: Rng>(n: usize, mode: HardnessMode, rng: &mut R) -> Result<Self> {
        let e = ExpansionFunction::new(n)?;
        Ok(match mode {
            HardnessMode::U => {
                let s = BitString::random(rng, e.input_len());
                let y = e.expand(&s)?;
                Self {
                    n,
                    mode,
                    y,
                    seed: Some(s),
                }
            }
            HardnessMode::V => Self {
                n,
                mode,
                y: BitString::random(rng, e.output_len()),
                seed: None,
            },
        })
    }

    /// Checks the handle's internal consistency (`E(seed) = y` in mode U).
    pub fn validate(&self) -> Result<()> {
        let e = ExpansionFunction::new(self.n)?;
        if self.y.len() != e.output_len() {
            return Err(PacfError::BitLength {
                expected: e.output_len(),
                got: self.y.len(),
            });
        }
        if let Some(s) = &self.seed {
            if e.expand(s)? != self.y {
                return Err(invalid("stored seed does not expand to y"));
            }
        } else if self.mode == HardnessMode::U {
            return Err(invalid("mode U handle is missing its seed"));
        }
        Ok(())
    }
}

/// Sign-flip pattern between the first `n-1` coordinates of two points.
pub fn flip_pattern(x: &[f64], x2: &[f64]) -> BitString {
    let k = x.len() - 1;
    BitString((0..k).map(|i| (x[i] > 0.0) != (x2[i] > 0.0)).collect())
}

/// Distance in `{0, 1}` under the metric described by `handle`.
pub fn hardness_metric(handle: &HardnessMetricHandle, x: &Example, x2: &Example) -> Result<f64> {
    let n = handle.n;
    for e in [x, x2] {
        if e.dim() != n {
            return Err(PacfError::DimensionMismatch {
                expected: n,
                got: e.dim(),
            });
        }
    }
    if x.features() == x2.features() {
        return Ok(0.0);
    }
    for e in [x, x2] {
        if let Some(i) = e.features().iter().position(|&v| v == 0.0) {
            return Err(PacfError::SignUndefined(i));
        }
    }
    let (a, b) = (x.features(), x2.features());
    if (a[n - 1] > 0.0) == (b[n - 1] > 0.0) {
        return Ok(1.0);
    }
    let delta = flip_pattern(a, b);
    if ExpansionFunction::new(n)?.expand(&delta)? == handle.y {
        Ok(0.0)
    } else {
        Ok(1.0)
    }
}

/// Points interleaved with their hidden counterparts: rows `2i` and `2i+1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardPairedDataset {
    pub pairs: Vec<(usize, usize)>,
    pub dataset: LabeledDataset,
}

impl HardPairedDataset {
    /// Matching that pairs every point with its counterpart.
    pub fn counterpart_matching(&self) -> Matching {
        Matching::new(self.pairs.clone(), self.dataset.len()).expect("interleaved pairs are disjoint")
    }
}

/// Draw one point of the base distribution: uniform on the unit ball
/// conditioned on `x_n = ±1/2`, labeled by the sign of `x_n`.
pub fn sample_base_point<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Example {
    let k = n - 1;
    let radius = 0.75f64.sqrt();
    let mut head: Vec<f64>;
    loop {
        head = (0..k).map(|_| StandardNormal.sample(rng)).collect();
        let len = head.iter().map(|v: &f64| v * v).sum::<f64>().sqrt();
        if len == 0.0 {
            continue;
        }
        let r = radius * rng.gen::<f64>().powf(1.0 / k as f64);
        head.iter_mut().for_each(|v| *v *= r / len);
        if head.iter().all(|&v| v != 0.0) {
            break;
        }
    }
    let positive: bool = rng.gen();
    head.push(if positive { 0.5 } else { -0.5 });
    let label = if positive { 1 } else { -1 };
    Example::new(head, label).expect("sampled point lies in the unit ball")
}

fn counterpart(x: &Example, pattern: &BitString) -> Example {
    let f = x.features();
    let n = f.len();
    let mut out: Vec<f64> = f
        .iter()
        .take(n - 1)
        .zip(pattern.bits())
        .map(|(&v, &flip)| if flip { -v } else { v })
        .collect();
    out.push(-f[n - 1]);
    Example::new(out, -x.label()).expect("sign flips preserve the norm")
}

/// Sample `k_pairs` point/counterpart pairs together with a metric handle.
///
/// Mode U flips the coordinates selected by the hidden seed, so every pair is
/// at distance 0. Mode V flips a fresh random pattern per pair.
pub fn sample_hardness_distribution(
    n: usize,
    k_pairs: usize,
    mode: HardnessMode,
    seed: u64,
) -> Result<(HardPairedDataset, HardnessMetricHandle)> {
    if n < 4 {
        return Err(invalid(format!("hardness construction needs n >= 4, got {n}")));
    }
    if k_pairs == 0 {
        return Err(invalid("need at least one pair"));
    }
    let handle = HardnessMetricHandle::sample(n, mode, &mut rng::stream(seed, 0))?;
    let mut examples = Vec::with_capacity(2 * k_pairs);
    for p in 0..k_pairs {
        let mut r = rng::stream(seed, p as u64 + 1);
        let x = sample_base_point(n, &mut r);
        let pattern = match &handle.seed {
            Some(s) => s.clone(),
            None => BitString::random(&mut r, n - 1),
        };
        let x2 = counterpart(&x, &pattern);
        examples.push(x);
        examples.push(x2);
    }
    let dataset = LabeledDataset::new(examples)?;
    let pairs = (0..k_pairs).map(|p| (2 * p, 2 * p + 1)).collect();
    Ok((HardPairedDataset { pairs, dataset }, handle))
}

/// Error of a probabilistic classifier: mean `|h(x) - (1+y)/2|`.
pub fn classification_error(predictions: &[f64], examples: &[Example]) -> f64 {
    predictions
        .iter()
        .zip(examples)
        .map(|(p, e)| (p - e.target()).abs())
        .sum::<f64>()
        / predictions.len() as f64
}

/// The sign-of-last-coordinate classifier, saturated so that it outputs
/// exactly 0 or 1 on points with `|x_n| = 1/2`.
pub fn reference_classifier(n: usize) -> Predictor {
    let mut w = vec![0.0; n];
    w[n - 1] = 1.0;
    Predictor::logistic(w, REFERENCE_LIPSCHITZ).expect("unit weight vector")
}

pub const REFERENCE_LIPSCHITZ: f64 = 1000.0;

/// Error after replacing predictions on every distance-0 pair by their mean.
fn averaged_fair_error(preds: &[f64], paired: &HardPairedDataset, zero: &[bool]) -> f64 {
    let mut p = preds.to_vec();
    for (&(i, j), &z) in paired.pairs.iter().zip(zero) {
        if z {
            let a = 0.5 * (p[i] + p[j]);
            p[i] = a;
            p[j] = a;
        }
    }
    classification_error(&p, paired.dataset.examples())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardnessExperiment {
    pub n: usize,
    pub k_pairs: usize,
    pub seed: u64,
    pub modes: Vec<HardnessMode>,
    /// Pairs (taken from the front of the sample) used for training.
    pub train_pairs: usize,
    pub trainer: Option<TrainConfig>,
}

impl HardnessExperiment {
    pub fn new(n: usize, k_pairs: usize, seed: u64) -> Self {
        Self {
            n,
            k_pairs,
            seed,
            modes: vec![HardnessMode::U, HardnessMode::V],
            train_pairs: 100,
            trainer: None,
        }
    }

    pub fn with_trainer(mut self, trainer: TrainConfig) -> Self {
        self.trainer = Some(trainer);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerOutcome {
    pub train_pairs: usize,
    /// Error on the training points.
    pub train_error: f64,
    /// Error on the pairs not used for training, if any.
    pub holdout_error: Option<f64>,
    /// 0/1 fairness loss at `gamma` over the training counterpart pairs.
    pub mf_loss_at_gamma: f64,
    pub l1_loss: f64,
    pub tau: f64,
    pub final_constraint_slack: f64,
    pub converged: bool,
    /// Error of the learner after averaging over distance-0 pairs.
    pub averaged_fair_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeOutcome {
    pub mode: HardnessMode,
    pub n_pairs: usize,
    pub distance_zero_pairs: usize,
    pub reference_error: f64,
    pub reference_violations: usize,
    pub reference_averaged_fair_error: f64,
    pub learner: Option<LearnerOutcome>,
}

pub const HARDNESS_REPORT_SCHEMA: u32 = 1;

pub const INDISTINGUISHABILITY_NOTE: &str = "U and V differ only in whether y is an expansion of a hidden seed; \
telling them apart from samples requires inverting the expansion function";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardnessReport {
    pub schema_version: u32,
    pub n: usize,
    pub k_pairs: usize,
    pub seed: u64,
    pub modes: Vec<ModeOutcome>,
    /// Learner training error under U minus under V.
    pub accuracy_gap: Option<f64>,
    pub note: String,
}

fn run_mode(exp: &HardnessExperiment, mode: HardnessMode) -> Result<ModeOutcome> {
    let (paired, handle) = sample_hardness_distribution(exp.n, exp.k_pairs, mode, exp.seed)?;
    let metric = SimilarityMetric::Hardness(handle);
    let examples = paired.dataset.examples();
    let mut zero = Vec::with_capacity(paired.pairs.len());
    for &(i, j) in &paired.pairs {
        zero.push(metric.distance(&examples[i], &examples[j])? == 0.0);
    }
    let reference = reference_classifier(exp.n);
    let ref_preds = reference.predict_all(examples)?;
    let pair_list: Vec<(Example, Example)> = paired
        .pairs
        .iter()
        .map(|&(i, j)| (examples[i].clone(), examples[j].clone()))
        .collect();
    let audit = is_perfectly_fair(&reference, &pair_list, &metric, 0.0)?;

    let learner = match &exp.trainer {
        None => None,
        Some(cfg) => Some(run_learner(exp, cfg, &paired, &metric, &zero)?),
    };
    Ok(ModeOutcome {
        mode,
        n_pairs: paired.pairs.len(),
        distance_zero_pairs: zero.iter().filter(|&&z| z).count(),
        reference_error: classification_error(&ref_preds, examples),
        reference_violations: audit.violating_pairs.len(),
        reference_averaged_fair_error: averaged_fair_error(&ref_preds, &paired, &zero),
        learner,
    })
}

fn run_learner(
    exp: &HardnessExperiment,
    cfg: &TrainConfig,
    paired: &HardPairedDataset,
    metric: &SimilarityMetric,
    zero: &[bool],
) -> Result<LearnerOutcome> {
    let t = exp.train_pairs.clamp(1, paired.pairs.len());
    let all = paired.dataset.examples();
    let train = LabeledDataset::new(all[..2 * t].to_vec())?;
    let matching = Matching::new((0..t).map(|p| (2 * p, 2 * p + 1)).collect(), 2 * t)?;
    let (h, report) = match cfg.learner {
        LearnerKind::Linear => train_fair_linear_with_matching(&train, &matching, metric, cfg)?,
        LearnerKind::Kernel { .. } => train_fair_kernel_with_matching(&train, &matching, metric, cfg)?,
    };
    let preds = h.predict_all(all)?;
    let train_preds = &preds[..2 * t];
    let mut gaps = Vec::with_capacity(t);
    for &(i, j) in matching.pairs() {
        gaps.push(((preds[i] - preds[j]).abs(), metric.distance(&all[i], &all[j])?));
    }
    let holdout_error = (t < paired.pairs.len()).then(|| classification_error(&preds[2 * t..], &all[2 * t..]));
    Ok(LearnerOutcome {
        train_pairs: t,
        train_error: classification_error(train_preds, train.examples()),
        holdout_error,
        mf_loss_at_gamma: mf_loss_from_gaps(&gaps, cfg.gamma),
        l1_loss: l1_loss_from_gaps(&gaps),
        tau: report.derived.tau,
        final_constraint_slack: report.final_constraint_slack,
        converged: report.converged,
        averaged_fair_error: averaged_fair_error(&preds, paired, zero),
    })
}

/// Run the construction under each requested mode: the reference
/// classifier, its fairness-averaged projection, and optionally a trained
/// fairness-constrained learner.
pub fn run_hardness_experiment(exp: &HardnessExperiment) -> Result<HardnessReport> {
    if exp.modes.is_empty() {
        return Err(invalid("no hardness modes requested"));
    }
    let modes = exp
        .modes
        .iter()
        .map(|&m| run_mode(exp, m))
        .collect::<Result<Vec<_>>>()?;
    let train_error = |mode| {
        modes
            .iter()
            .find(|o| o.mode == mode)
            .and_then(|o| o.learner.as_ref())
            .map(|l| l.train_error)
    };
    let accuracy_gap = match (train_error(HardnessMode::U), train_error(HardnessMode::V)) {
        (Some(u), Some(v)) => Some(u - v),
        _ => None,
    };
    Ok(HardnessReport {
        schema_version: HARDNESS_REPORT_SCHEMA,
        n: exp.n,
        k_pairs: exp.k_pairs,
        seed: exp.seed,
        modes,
        accuracy_gap,
        note: INDISTINGUISHABILITY_NOTE.to_string(),
    })
}
