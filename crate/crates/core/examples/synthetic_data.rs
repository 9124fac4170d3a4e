//! Seeded synthetic datasets and their CSV form.

use pacf::synth::{generate_dataset, Generator, SyntheticSpec};

fn main() -> pacf::Result<()> {
    let spec = SyntheticSpec {
        generator: Generator::SeparableWithMargin { margin: 0.2, noise_rate: 0.05 },
        n: 3,
        m: 6,
        seed: 42,
    };
    let ds = generate_dataset(&spec)?;
    println!("hidden direction {:?}", spec.hidden_direction());
    let mut csv = Vec::new();
    ds.write_csv(&mut csv)?;
    print!("{}", String::from_utf8_lossy(&csv));
    println!("spec as JSON: {}", serde_json::to_string(&spec)?);
    Ok(())
}
