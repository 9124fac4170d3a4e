//! Fairness-constrained linear training, compared with a grid search.

use pacf::learners::{brute_force_oracle_2d, train, TrainConfig};
use pacf::synth::{generate_dataset, Generator, SyntheticSpec};
use pacf::SimilarityMetric;

fn main() -> pacf::Result<()> {
    let sample = generate_dataset(&SyntheticSpec {
        generator: Generator::SeparableWithMargin { margin: 0.1, noise_rate: 0.1 },
        n: 2,
        m: 16,
        seed: 21,
    })?;
    let d = SimilarityMetric::euclidean(0.05)?;
    for tau in [0.0, 0.01, 0.05, 0.2] {
        let mut config = TrainConfig::linear(0.2, 0.3);
        config.tau = Some(tau);
        let model = train(&sample, &d, &config)?;
        let (_, oracle) = brute_force_oracle_2d(&sample, &d, &config, 0.01)?;
        println!(
            "tau {tau:<5} objective {:.4}  grid oracle {:.4}  slack {:+.2e}",
            model.report.final_objective, oracle, model.report.final_constraint_slack
        );
    }
    Ok(())
}
