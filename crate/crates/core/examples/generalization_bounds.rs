//! Generalization gaps, Rademacher estimates and sample complexities.

use pacf::bounds::{
    empirical_rademacher_kernel_ball, kernel_ball_delta, kernel_norm_bound_b, mf_generalization_delta,
    pacf_sample_complexity, RademacherModel, SampleComplexitySpec,
};
use pacf::learners::gram_matrix;
use pacf::synth::{generate_dataset, Generator, SyntheticSpec};
use pacf::KernelSpec;

fn main() -> pacf::Result<()> {
    println!("delta_m(G=10, m=1000001, R=0.001) = {:.6}", mf_generalization_delta(10.0, 0.05, 1_000_001.0, 0.001)?);
    println!("kernel ball delta (G=10, m=10001)  = {:.6}", kernel_ball_delta(10.0, 0.05, 10_001.0, 1.0, 2.0)?);
    println!("B*(L=3, eps=0.5)                  = {:.6e}", kernel_norm_bound_b(3.0, 0.5)?);

    let sample = generate_dataset(&SyntheticSpec {
        generator: Generator::UnitBallUniform,
        n: 4,
        m: 64,
        seed: 3,
    })?;
    let gram = gram_matrix(&sample, &KernelSpec::VovkHalf)?;
    let r = empirical_rademacher_kernel_ball(&gram, 1.0, 5_000, 11)?;
    println!("Rademacher estimate (VovkHalf, m=64) = {:.5} +/- {:.5}", r.value, r.mc_half_width);

    let specs = [
        SampleComplexitySpec::LinAccuracy {
            alpha: 0.1,
            eps: 0.5,
            eps_alpha: 0.5,
            eps_gamma: 1.0 - 1e-9,
            delta: 0.05,
        },
        SampleComplexitySpec::InfPacf {
            m_pac: 1000.0,
            eps_alpha: 0.2,
            eps_gamma: 0.2,
            delta: 0.05,
            rademacher: RademacherModel::InverseSqrt { scale: 1.0 },
        },
    ];
    for spec in &specs {
        let sc = pacf_sample_complexity(spec)?;
        println!("{}", serde_json::to_string(&sc)?);
    }
    Ok(())
}
