//! Kernel learner on an XOR pattern that no linear predictor fits.

use pacf::learners::{kernel_absolute_loss_baseline, train, KernelNorm, TrainConfig};
use pacf::{KernelSpec, LabeledDataset, SimilarityMetric};

fn main() -> pacf::Result<()> {
    let mut rows = Vec::new();
    for (cx, cy, y) in [(0.5, 0.5, 1), (-0.5, -0.5, 1), (0.5, -0.5, -1), (-0.5, 0.5, -1)] {
        for k in 0..5 {
            let t = k as f64 * 1.3;
            rows.push((vec![cx + 0.1 * t.cos(), cy + 0.1 * t.sin()], y));
        }
    }
    let sample = LabeledDataset::from_rows(rows)?;
    let d = SimilarityMetric::constant(1.0)?;

    let linear = train(&sample, &d, &TrainConfig::linear(0.2, 0.3))?;
    let kernel_cfg = TrainConfig::kernel(0.2, 0.3, KernelSpec::VovkHalf, KernelNorm::Explicit { b: 1e4 });
    let kernel = train(&sample, &d, &kernel_cfg)?;
    let (_, baseline) = kernel_absolute_loss_baseline(&sample, &KernelSpec::VovkHalf, 1e4, &kernel_cfg.solver)?;

    println!("linear objective   {:.4}", linear.report.final_objective);
    println!("kernel objective   {:.4}", kernel.report.final_objective);
    println!("kernel baseline    {:.4}", baseline);
    println!("kernel rank        {:?}", kernel.report.kernel_rank);
    Ok(())
}
