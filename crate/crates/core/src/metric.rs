//! Task-specific similarity metrics `d: X x X -> [0,1]` and a sampling
//! validator for the pseudometric axioms.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{norm, Example, LabeledDataset};
use crate::error::{invalid, PacfError, Result};
use crate::hardness::{hardness_metric, HardnessMetricHandle};
use crate::rng;

/// Tolerance used when checking symmetry and the triangle inequality.
pub const AXIOM_TOLERANCE: f64 = 1e-12;

/// Pairwise distances over dataset rows.
///
/// `index[r]` is the dataset row that matrix row `r` describes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistanceMatrix", into = "RawDistanceMatrix")]
pub struct DistanceMatrix {
    matrix: Vec<Vec<f64>>,
    index: Vec<usize>,
    lookup: HashMap<usize, usize>,
}

#[derive(Serialize, Deserialize)]
struct RawDistanceMatrix {
    matrix: Vec<Vec<f64>>,
    index: Vec<usize>,
}

impl TryFrom<RawDistanceMatrix> for DistanceMatrix {
    type Error = PacfError;
    fn try_from(raw: RawDistanceMatrix) -> Result<Self> {
        DistanceMatrix::new(raw.matrix, raw.index)
    }
}

impl From<DistanceMatrix> for RawDistanceMatrix {
    fn from(m: DistanceMatrix) -> Self {
        RawDistanceMatrix {
            matrix: m.matrix,
            index: m.index,
        }
    }
}

impl DistanceMatrix {
    pub fn new(matrix: Vec<Vec<f64>>, index: Vec<usize>) -> Result<Self> {
        let k = matrix.len();
        if matrix.iter().any(|row| row.len() != k) {
            return Err(invalid("distance matrix must be square"));
        }
        if index.len() != k {
            return Err(invalid(format!(
                "index file has {} entries for a {k}x{k} matrix",
                index.len()
            )));
        }
        let mut lookup = HashMap::with_capacity(k);
        for (r, &row) in index.iter().enumerate() {
            if lookup.insert(row, r).is_some() {
                return Err(invalid(format!("dataset row {row} listed twice in index")));
            }
        }
        Ok(Self {
            matrix,
            index,
            lookup,
        })
    }

    /// Identity row mapping.
    pub fn from_square(matrix: Vec<Vec<f64>>) -> Result<Self> {
        let index = (0..matrix.len()).collect();
        Self::new(matrix, index)
    }

    /// Reads a headerless CSV matrix and a companion index file with one
    /// dataset row number per line.
    pub fn load(matrix_path: &std::path::Path, index_path: &std::path::Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_path(matrix_path)?;
        let mut matrix = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let row = record
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| invalid(format!("bad matrix entry {s:?}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            matrix.push(row);
        }
        let index = std::fs::read_to_string(index_path)?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.trim()
                    .parse::<usize>()
                    .map_err(|e| invalid(format!("bad index entry {l:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(matrix, index)
    }

    fn get(&self, a: &Example, b: &Example) -> Result<f64> {
        let undefined = || PacfError::MetricUndefined(a.id(), b.id());
        let ra = a.id().and_then(|i| self.lookup.get(&i)).ok_or_else(undefined)?;
        let rb = b.id().and_then(|i| self.lookup.get(&i)).ok_or_else(undefined)?;
        Ok(self.matrix[*ra][*rb])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimilarityMetric {
    /// `d = min(1, scale * ||x - x'||)`.
    EuclideanScaled { scale: f64 },
    /// `d = c` on distinct points, 0 on identical ones.
    Constant { c: f64 },
    PrecomputedMatrix(DistanceMatrix),
    Hardness(HardnessMetricHandle),
}

impl SimilarityMetric {
    pub fn constant(c: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&c) {
            return Err(invalid(format!("constant distance {c} outside [0,1]")));
        }
        Ok(SimilarityMetric::Constant { c })
    }

    pub fn euclidean(scale: f64) -> Result<Self> {
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(invalid(format!("euclidean scale {scale} must be >= 0")));
        }
        Ok(SimilarityMetric::EuclideanScaled { scale })
    }

    pub fn distance(&self, a: &Example, b: &Example) -> Result<f64> {
        match self {
            SimilarityMetric::EuclideanScaled { scale } => {
                let diff: Vec<f64> = a
                    .features()
                    .iter()
                    .zip(b.features())
                    .map(|(x, y)| x - y)
                    .collect();
                Ok((scale * norm(&diff)).min(1.0))
            }
            SimilarityMetric::Constant { c } => {
                if a.features() == b.features() {
                    Ok(0.0)
                } else {
                    Ok(*c)
                }
            }
            SimilarityMetric::PrecomputedMatrix(m) => m.get(a, b),
            SimilarityMetric::Hardness(handle) => hardness_metric(handle, a, b),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriangleViolation {
    /// `d(i,k) > d(i,j) + d(j,k)`.
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub d_ik: f64,
    pub d_ij: f64,
    pub d_jk: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n_triples: usize,
    pub reflexivity_violations: Vec<usize>,
    pub symmetry_violations: Vec<(usize, usize)>,
    pub range_violations: Vec<(usize, usize)>,
    pub triangle_violations: Vec<TriangleViolation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.reflexivity_violations.is_empty()
            && self.symmetry_violations.is_empty()
            && self.range_violations.is_empty()
            && self.triangle_violations.is_empty()
    }
}

/// Check pseudometric axioms on `n_triples` sampled index triples.
///
/// Each triple is checked with every point in the middle position, so a
/// violating triple is caught regardless of the order it was drawn in.
pub fn validate_metric(
    metric: &SimilarityMetric,
    dataset: &LabeledDataset,
    n_triples: usize,
    seed: u64,
) -> Result<ValidationReport> {
    let m = dataset.len();
    let mut report = ValidationReport {
        n_triples,
        ..Default::default()
    };
    for i in 0..m {
        let x = dataset.get(i);
        if metric.distance(x, x)? != 0.0 {
            report.reflexivity_violations.push(i);
        }
    }
    if m < 2 {
        return Ok(report);
    }
    for t in 0..n_triples {
        let mut r = rng::stream(seed, t as u64);
        let idx = draw_distinct(&mut r, m, 3.min(m));
        let (a, b, c) = match idx.as_slice() {
            [a, b, c] => (*a, *b, *c),
            [a, b] => (*a, *b, *a),
            _ => unreachable!(),
        };
        let d = |p: usize, q: usize| metric.distance(dataset.get(p), dataset.get(q));
        let (dab, dba, dbc, dcb, dac, dca) = (d(a, b)?, d(b, a)?, d(b, c)?, d(c, b)?, d(a, c)?, d(c, a)?);
        for (p, q, dpq, dqp) in [(a, b, dab, dba), (b, c, dbc, dcb), (a, c, dac, dca)] {
            if (dpq - dqp).abs() > AXIOM_TOLERANCE {
                report.symmetry_violations.push((p, q));
            }
            if !(0.0..=1.0).contains(&dpq) {
                report.range_violations.push((p, q));
            }
        }
        // middle point j in turn: (a,b,c), (b,a,c), (a,c,b)
        for (i, j, k, dik, dij, djk) in [
            (a, b, c, dac, dab, dbc),
            (b, a, c, dbc, dab, dac),
            (a, c, b, dab, dac, dbc),
        ] {
            if dik > dij + djk + AXIOM_TOLERANCE {
                report.triangle_violations.push(TriangleViolation {
                    i,
                    j,
                    k,
                    d_ik: dik,
                    d_ij: dij,
                    d_jk: djk,
                });
            }
        }
    }
    Ok(report)
}

fn draw_distinct<R: Rng>(rng: &mut R, m: usize, k: usize) -> Vec<usize> {
    rand::seq::index::sample(rng, m, k).into_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(m: usize) -> LabeledDataset {
        LabeledDataset::from_rows((0..m).map(|i| (vec![i as f64 / m as f64], 1)).collect()).unwrap()
    }

    #[test]
    fn constant_metric_validates() {
        let r = validate_metric(&SimilarityMetric::constant(1.0).unwrap(), &line(6), 200, 1).unwrap();
        assert!(r.is_clean(), "{r:?}");
    }

    #[test]
    fn euclidean_metric_validates() {
        let r = validate_metric(&SimilarityMetric::euclidean(3.0).unwrap(), &line(10), 500, 2).unwrap();
        assert!(r.is_clean(), "{r:?}");
    }

    #[test]
    fn matrix_triangle_violation_is_reported() {
        let matrix = vec![
            vec![0.0, 0.9, 1.0],
            vec![0.9, 0.0, 0.05],
            vec![1.0, 0.05, 0.0],
        ];
        let metric = SimilarityMetric::PrecomputedMatrix(DistanceMatrix::from_square(matrix).unwrap());
        let r = validate_metric(&metric, &line(3), 5, 3).unwrap();
        assert!(!r.triangle_violations.is_empty());
        let v = &r.triangle_violations[0];
        assert_eq!(v.d_ik, 1.0);
        assert!((v.d_ij + v.d_jk - 0.95).abs() < 1e-12);
        assert_eq!(v.j, 1);
    }

    #[test]
    fn matrix_missing_index_is_an_error() {
        let metric = SimilarityMetric::PrecomputedMatrix(
            DistanceMatrix::new(vec![vec![0.0, 0.5], vec![0.5, 0.0]], vec![0, 1]).unwrap(),
        );
        let err = validate_metric(&metric, &line(3), 10, 0).unwrap_err();
        assert!(err.to_string().contains("metric undefined for pair"));
    }

    #[test]
    fn matrix_index_maps_rows() {
        // matrix row 0 describes dataset row 2 and vice versa
        let m = DistanceMatrix::new(
            vec![vec![0.0, 0.3, 0.7], vec![0.3, 0.0, 0.4], vec![0.7, 0.4, 0.0]],
            vec![2, 1, 0],
        )
        .unwrap();
        let ds = line(3);
        let metric = SimilarityMetric::PrecomputedMatrix(m);
        assert_eq!(metric.distance(ds.get(2), ds.get(1)).unwrap(), 0.3);
        assert_eq!(metric.distance(ds.get(0), ds.get(1)).unwrap(), 0.4);
    }

    #[test]
    fn euclidean_is_capped_at_one() {
        let a = Example::new(vec![1.0, 0.0], 1).unwrap();
        let b = Example::new(vec![-1.0, 0.0], 1).unwrap();
        let d = SimilarityMetric::euclidean(10.0).unwrap();
        assert_eq!(d.distance(&a, &b).unwrap(), 1.0);
        assert_eq!(d.distance(&a, &a).unwrap(), 0.0);
    }
}
