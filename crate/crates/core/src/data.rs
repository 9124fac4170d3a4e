//! Labeled samples in the unit ball, matchings over them, and CSV I/O.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, PacfError, Result};
use crate::rng;

/// Slack allowed on the unit-ball norm constraint.
pub const NORM_TOLERANCE: f64 = 1e-9;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// A feature vector in the unit ball with a ±1 label.
///
/// `id` is the row of the example within the dataset it was loaded from.
/// Metrics and kernels backed by precomputed matrices look pairs up by it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example {
    features: Vec<f64>,
    label: i8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<usize>,
}

impl Example {
    pub fn new(features: Vec<f64>, label: i8) -> Result<Self> {
        if label != 1 && label != -1 {
            return Err(invalid(format!("label must be -1 or +1, got {label}")));
        }
        if features.is_empty() {
            return Err(invalid("example has no features"));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(PacfError::NonFinite("example features"));
        }
        let n = norm(&features);
        if n > 1.0 + NORM_TOLERANCE {
            return Err(invalid(format!("feature norm {n} exceeds the unit ball")));
        }
        Ok(Self {
            features,
            label,
            id: None,
        })
    }

    pub fn with_id(mut self, id: usize) -> Self {
        self.id = Some(id);
        self
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn label(&self) -> i8 {
        self.label
    }

    /// Label mapped into prediction space: `(1 + y) / 2`.
    pub fn target(&self) -> f64 {
        if self.label > 0 {
            1.0
        } else {
            0.0
        }
    }

    pub fn id(&self) -> Option<usize> {
        self.id
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

/// A non-empty sample of equal-dimension examples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    examples: Vec<Example>,
    dim: usize,
}

impl LabeledDataset {
    /// Examples without an id receive their position as id.
    pub fn new(examples: Vec<Example>) -> Result<Self> {
        let dim = examples
            .first()
            .map(Example::dim)
            .ok_or_else(|| invalid("dataset is empty"))?;
        let mut examples = examples;
        for (i, ex) in examples.iter_mut().enumerate() {
            if ex.dim() != dim {
                return Err(PacfError::DimensionMismatch {
                    expected: dim,
                    got: ex.dim(),
                });
            }
            if ex.id.is_none() {
                ex.id = Some(i);
            }
        }
        Ok(Self { examples, dim })
    }

    pub fn from_rows(rows: Vec<(Vec<f64>, i8)>) -> Result<Self> {
        let examples = rows
            .into_iter()
            .map(|(x, y)| Example::new(x, y))
            .collect::<Result<Vec<_>>>()?;
        Self::new(examples)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn get(&self, i: usize) -> &Example {
        &self.examples[i]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Example> {
        self.examples.iter()
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let ncols = headers.len();
        if ncols < 2 || headers.get(ncols - 1).map(str::trim) != Some("y") {
            return Err(invalid("dataset header must be x1,...,xn,y"));
        }
        for (j, h) in headers.iter().take(ncols - 1).enumerate() {
            if h.trim() != format!("x{}", j + 1) {
                return Err(invalid(format!("unexpected column header {h:?}")));
            }
        }
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let parse = |s: &str| -> Result<f64> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| invalid(format!("bad number {s:?}: {e}")))
            };
            let features = record
                .iter()
                .take(ncols - 1)
                .map(parse)
                .collect::<Result<Vec<_>>>()?;
            let y = parse(&record[ncols - 1])?;
            let label = if y == 1.0 {
                1
            } else if y == -1.0 {
                -1
            } else {
                return Err(invalid(format!("label must be -1 or 1, got {y}")));
            };
            rows.push((features, label));
        }
        Self::from_rows(rows)
    }

    /// Features use 17 significant digits so that loading reproduces the
    /// exact bit patterns.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=self.dim).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        wtr.write_record(&header)?;
        for ex in &self.examples {
            let mut row: Vec<String> = ex.features.iter().map(|v| format!("{v:.16e}")).collect();
            row.push(ex.label.to_string());
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// A distribution over examples that can be sampled from a caller-supplied
/// generator.
pub trait ExampleSource: Sync {
    fn dim(&self) -> usize;
    fn draw(&self, rng: &mut dyn rand::RngCore) -> Example;
}

/// The empirical distribution: draws rows uniformly with replacement.
impl ExampleSource for LabeledDataset {
    fn dim(&self) -> usize {
        self.dim
    }

    fn draw(&self, rng: &mut dyn rand::RngCore) -> Example {
        use rand::Rng;
        self.examples[rng.gen_range(0..self.examples.len())].clone()
    }
}

/// How to pair up sample points for the empirical fairness estimator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MatchingStrategy {
    /// (0,1), (2,3), ... in dataset order.
    Consecutive,
    /// Consecutive pairing after a seeded shuffle.
    RandomPermutation { seed: u64 },
}

/// Disjoint index pairs into a dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matching {
    pairs: Vec<(usize, usize)>,
}

impl Matching {
    /// Validates indices against a sample of size `m`.
    pub fn new(pairs: Vec<(usize, usize)>, m: usize) -> Result<Self> {
        let mut seen = vec![false; m];
        for &(i, j) in &pairs {
            for k in [i, j] {
                if k >= m {
                    return Err(invalid(format!("matching index {k} out of range for m={m}")));
                }
                if seen[k] {
                    return Err(invalid(format!("index {k} appears twice in matching")));
                }
                seen[k] = true;
            }
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Pair up `floor(m/2)` disjoint edges; with odd `m` one example is left out.
pub fn build_matching(dataset: &LabeledDataset, strategy: MatchingStrategy) -> Result<Matching> {
    let m = dataset.len();
    if m < 2 {
        return Err(PacfError::InsufficientExamples(m));
    }
    let mut order: Vec<usize> = (0..m).collect();
    if let MatchingStrategy::RandomPermutation { seed } = strategy {
        order.shuffle(&mut rng::stream(seed, 0));
    }
    let pairs = order.chunks_exact(2).map(|c| (c[0], c[1])).collect();
    Matching::new(pairs, m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(m: usize) -> LabeledDataset {
        LabeledDataset::from_rows(
            (0..m)
                .map(|i| (vec![i as f64 / m as f64], if i % 2 == 0 { 1 } else { -1 }))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn consecutive_matching_drops_last_for_odd_m() {
        let m5 = build_matching(&line(5), MatchingStrategy::Consecutive).unwrap();
        assert_eq!(m5.pairs(), &[(0, 1), (2, 3)]);
        let m4 = build_matching(&line(4), MatchingStrategy::Consecutive).unwrap();
        assert_eq!(m4.pairs(), &[(0, 1), (2, 3)]);
    }

    #[test]
    fn random_matching_is_deterministic() {
        let s = MatchingStrategy::RandomPermutation { seed: 7 };
        assert_eq!(build_matching(&line(5), s).unwrap(), build_matching(&line(5), s).unwrap());
    }

    #[test]
    fn matching_needs_two_examples() {
        let err = build_matching(&line(1), MatchingStrategy::Consecutive).unwrap_err();
        assert!(err.to_string().contains("insufficient examples for matching"));
    }

    #[test]
    fn example_validation() {
        assert!(Example::new(vec![0.6, 0.8], 1).is_ok());
        assert!(Example::new(vec![0.6, 0.8 + 1e-12], 1).is_ok());
        assert!(Example::new(vec![0.9, 0.9], 1).is_err());
        assert!(Example::new(vec![0.1], 0).is_err());
        assert!(LabeledDataset::new(vec![]).is_err());
        let a = Example::new(vec![0.1], 1).unwrap();
        let b = Example::new(vec![0.1, 0.2], 1).unwrap();
        assert!(matches!(
            LabeledDataset::new(vec![a, b]),
            Err(PacfError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn csv_rejects_bad_labels_and_headers() {
        assert!(LabeledDataset::read_csv("x1,y\n0.5,2\n".as_bytes()).is_err());
        assert!(LabeledDataset::read_csv("a,y\n0.5,1\n".as_bytes()).is_err());
        let ds = LabeledDataset::read_csv("x1,x2,y\n0.5,0.25,1\n-0.1,0,-1\n".as_bytes()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.get(1).label(), -1);
        assert_eq!(ds.get(1).id(), Some(1));
    }
}
