//! Audit a fixed linear predictor: matching losses, violations, group profile
//! and a Monte-Carlo population estimate.

use pacf::audit::{audit, violation_vector, AuditOptions};
use pacf::synth::{generate_dataset, Generator, SyntheticSpec};
use pacf::{build_matching, MatchingStrategy, Predictor, SimilarityMetric};

fn main() -> pacf::Result<()> {
    let spec = SyntheticSpec {
        generator: Generator::UnitBallUniform,
        n: 3,
        m: 401,
        seed: 5,
    };
    let sample = generate_dataset(&spec)?;
    let h = Predictor::linear(spec.hidden_direction())?;
    let d = SimilarityMetric::euclidean(0.25)?;
    let matching = build_matching(&sample, MatchingStrategy::RandomPermutation { seed: 1 })?;
    let gamma = 0.05;

    let v = violation_vector(&h, &sample, &matching, &d, gamma)?;
    println!("edges {}  violating edges {}  total violation {:.4}", v.len(), v.l0(), v.l1());

    let source = spec.source()?;
    let report = audit(
        &h,
        &sample,
        &matching,
        &d,
        &AuditOptions {
            gamma,
            alpha2_grid: vec![0.01, 0.05, 0.1, 0.2],
            population: Some((&source, 20_000, 7)),
        },
    )?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
