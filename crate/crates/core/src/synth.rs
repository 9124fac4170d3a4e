//! Seeded synthetic datasets.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{dot, Example, ExampleSource, LabeledDataset};
use crate::error::{invalid, Result};
use crate::hardness::{sample_base_point, sample_hardness_distribution, HardnessMode};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    /// Uniform on the unit ball, labeled by the sign of `<w*, x>`.
    UnitBallUniform,
    /// `|<w*, x>| >= margin`, labels `sign(<w*, x>)` flipped with
    /// probability `noise_rate`.
    SeparableWithMargin { margin: f64, noise_rate: f64 },
    /// Point/counterpart pairs of the hardness construction.
    HardnessPairs { mode: HardnessMode },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub generator: Generator,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("dimension n must be positive"));
        }
        if self.m < 2 {
            return Err(invalid(format!("sample size m = {} must be >= 2", self.m)));
        }
        match self.generator {
            Generator::SeparableWithMargin { margin, noise_rate } => {
                if !(margin > 0.0 && margin <= 1.0) {
                    return Err(invalid(format!("margin {margin} must lie in (0,1]")));
                }
                if !(0.0..1.0).contains(&noise_rate) {
                    return Err(invalid(format!("noise rate {noise_rate} must lie in [0,1)")));
                }
            }
            Generator::HardnessPairs { .. } if self.n < 4 => {
                return Err(invalid("hardness pairs need n >= 4"));
            }
            _ => {}
        }
        Ok(())
    }

    /// The hidden unit labeling direction.
    pub fn hidden_direction(&self) -> Vec<f64> {
        unit_vector(self.n, &mut rng::stream(self.seed, 0))
    }

    pub fn source(&self) -> Result<SyntheticSource> {
        self.validate()?;
        Ok(SyntheticSource {
            generator: self.generator,
            n: self.n,
            w_star: self.hidden_direction(),
        })
    }
}

fn unit_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let len = dot(&v, &v).sqrt();
        if len > 0.0 {
            return v.into_iter().map(|x| x / len).collect();
        }
    }
}

/// Uniform point in the ball of the given radius in `R^n`.
fn ball_point<R: Rng + ?Sized>(n: usize, radius: f64, rng: &mut R) -> Vec<f64> {
    let r = radius * rng.gen::<f64>().powf(1.0 / n as f64);
    unit_vector(n, rng).into_iter().map(|x| x * r).collect()
}

/// The distribution behind a [`SyntheticSpec`], usable for population
/// estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSource {
    generator: Generator,
    n: usize,
    w_star: Vec<f64>,
}

impl SyntheticSource {
    pub fn w_star(&self) -> &[f64] {
        &self.w_star
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Example {
        match self.generator {
            Generator::UnitBallUniform => {
                let x = ball_point(self.n, 1.0, rng);
                let y = if dot(&self.w_star, &x) >= 0.0 { 1 } else { -1 };
                Example::new(x, y).expect("ball sample")
            }
            Generator::SeparableWithMargin { margin, noise_rate } => {
                let t = margin + (1.0 - margin) * rng.gen::<f64>();
                let t = if rng.gen::<bool>() { t } else { -t };
                // orthogonal part uniform in the ball of radius sqrt(1 - t^2)
                let mut v = ball_point(self.n, (1.0 - t * t).max(0.0).sqrt(), rng);
                let along = dot(&v, &self.w_star);
                v.iter_mut().zip(&self.w_star).for_each(|(a, w)| *a -= along * w);
                let x: Vec<f64> = v.iter().zip(&self.w_star).map(|(a, w)| a + t * w).collect();
                let clean = if t > 0.0 { 1 } else { -1 };
                let y = if rng.gen::<f64>() < noise_rate { -clean } else { clean };
                Example::new(x, y).expect("margin sample")
            }
            Generator::HardnessPairs { .. } => sample_base_point(self.n, rng),
        }
    }
}

impl ExampleSource for SyntheticSource {
    fn dim(&self) -> usize {
        self.n
    }

    fn draw(&self, rng: &mut dyn rand::RngCore) -> Example {
        self.sample(rng)
    }
}

/// Point `i` comes from its own stream, so prefixes agree across sample sizes.
pub fn generate_dataset(spec: &SyntheticSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    if let Generator::HardnessPairs { mode } = spec.generator {
        let (paired, _) = sample_hardness_distribution(spec.n, spec.m.div_ceil(2), mode, spec.seed)?;
        let mut ex = paired.dataset.examples().to_vec();
        ex.truncate(spec.m);
        return LabeledDataset::new(ex);
    }
    let source = spec.source()?;
    let examples = (0..spec.m)
        .map(|i| source.sample(&mut rng::stream(spec.seed, i as u64 + 1)))
        .collect();
    LabeledDataset::new(examples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::norm;

    #[test]
    fn margin_contract() {
        let spec = SyntheticSpec {
            generator: Generator::SeparableWithMargin { margin: 0.5, noise_rate: 0.0 },
            n: 5,
            m: 100,
            seed: 11,
        };
        let ds = generate_dataset(&spec).unwrap();
        let w = spec.hidden_direction();
        assert!(ds.iter().all(|e| e.label() as f64 * dot(&w, e.features()) >= 0.5 - 1e-12));
    }

    #[test]
    fn uniform_stays_in_ball() {
        let spec = SyntheticSpec {
            generator: Generator::UnitBallUniform,
            n: 3,
            m: 10_000,
            seed: 2,
        };
        let ds = generate_dataset(&spec).unwrap();
        assert!(ds.iter().map(|e| norm(e.features())).fold(0.0, f64::max) <= 1.0);
    }

    #[test]
    fn same_seed_same_bytes() {
        let spec = SyntheticSpec {
            generator: Generator::SeparableWithMargin { margin: 0.2, noise_rate: 0.1 },
            n: 4,
            m: 50,
            seed: 9,
        };
        let mut a = Vec::new();
        let mut b = Vec::new();
        generate_dataset(&spec).unwrap().write_csv(&mut a).unwrap();
        generate_dataset(&spec).unwrap().write_csv(&mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hardness_pairs_have_opposite_labels() {
        let spec = SyntheticSpec {
            generator: Generator::HardnessPairs { mode: HardnessMode::U },
            n: 8,
            m: 20,
            seed: 1,
        };
        let ds = generate_dataset(&spec).unwrap();
        for p in 0..10 {
            assert_eq!(ds.get(2 * p).label(), -ds.get(2 * p + 1).label());
        }
    }

    #[test]
    fn invalid_specs() {
        let bad = SyntheticSpec {
            generator: Generator::SeparableWithMargin { margin: 0.0, noise_rate: 0.0 },
            n: 2,
            m: 10,
            seed: 0,
        };
        assert!(generate_dataset(&bad).is_err());
        let small = SyntheticSpec {
            generator: Generator::UnitBallUniform,
            n: 2,
            m: 1,
            seed: 0,
        };
        assert!(generate_dataset(&small).is_err());
    }
}
