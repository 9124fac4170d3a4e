//! The two metric distributions of the hardness construction: a learner
//! that is fair under U must be near-useless, while V admits a perfect
//! fair classifier.

use pacf::hardness::{run_hardness_experiment, HardnessExperiment};
use pacf::learners::{KernelNorm, TrainConfig};
use pacf::KernelSpec;

fn main() -> pacf::Result<()> {
    let trainer = TrainConfig::kernel(0.05, 0.1, KernelSpec::VovkHalf, KernelNorm::Explicit { b: 1e4 });
    let exp = HardnessExperiment::new(32, 500, 7).with_trainer(trainer);
    let report = run_hardness_experiment(&exp)?;
    for m in &report.modes {
        println!(
            "mode {:?}: pairs at distance 0 = {}, reference error {:.4}, reference averaged-fair error {:.4}, learner train error {:.4}",
            m.mode,
            m.distance_zero_pairs,
            m.reference_error,
            m.reference_averaged_fair_error,
            m.learner.as_ref().map_or(f64::NAN, |l| l.train_error)
        );
    }
    println!("accuracy gap {:.4}", report.accuracy_gap.unwrap_or(f64::NAN));
    Ok(())
}
