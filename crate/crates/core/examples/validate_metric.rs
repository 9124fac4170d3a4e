//! Check the pseudometric axioms for built-in, precomputed and hardness metrics.

use pacf::hardness::sample_hardness_distribution;
use pacf::hardness::HardnessMode;
use pacf::metric::{validate_metric, DistanceMatrix};
use pacf::{LabeledDataset, SimilarityMetric};

fn main() -> pacf::Result<()> {
    let (paired, handle) = sample_hardness_distribution(16, 50, HardnessMode::U, 3)?;
    let hard = SimilarityMetric::Hardness(handle);
    let r = validate_metric(&hard, &paired.dataset, 10_000, 1)?;
    println!("hardness metric: clean = {}, {} triples", r.is_clean(), r.n_triples);

    let sample = LabeledDataset::from_rows(vec![(vec![0.0], 1), (vec![0.5], -1), (vec![0.9], 1)])?;
    let good = DistanceMatrix::from_square(vec![
        vec![0.0, 0.2, 0.5],
        vec![0.2, 0.0, 0.3],
        vec![0.5, 0.3, 0.0],
    ])?;
    let bad = DistanceMatrix::from_square(vec![
        vec![0.0, 0.1, 0.9],
        vec![0.1, 0.0, 0.1],
        vec![0.9, 0.1, 0.0],
    ])?;
    let sample = LabeledDataset::new(sample.examples().iter().cloned().enumerate().map(|(i, e)| e.with_id(i)).collect())?;
    for (name, m) in [("consistent matrix", good), ("matrix breaking the triangle inequality", bad)] {
        let r = validate_metric(&SimilarityMetric::PrecomputedMatrix(m), &sample, 200, 2)?;
        println!("{name}: clean = {}, triangle violations = {}", r.is_clean(), r.triangle_violations.len());
    }
    Ok(())
}
