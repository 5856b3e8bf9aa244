use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Pareto};
use serde::Serialize;

use crate::error::Result;
use crate::tree::{StepFunction, Tree};

/// Generator for task `index` of a run seeded with `seed`.
///
/// Every task gets its own ChaCha stream, so results do not depend on how
/// tasks are scheduled.
pub fn derive_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Leaf value distributions for random step functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiDistribution {
    Uniform,
    Exponential,
    /// Mostly small values with rare Pareto spikes.
    TwoPoint,
    /// Each leaf picks one of the three above at random.
    #[default]
    Mixture,
}

impl PhiDistribution {
    fn sample(self, rng: &mut ChaCha8Rng, spike_rate: f64) -> f64 {
        match self {
            PhiDistribution::Uniform => rng.random::<f64>(),
            PhiDistribution::Exponential => Exp1.sample(rng),
            PhiDistribution::TwoPoint => {
                if rng.random_bool(spike_rate) {
                    Pareto::new(1.0, 1.2).expect("valid Pareto").sample(rng)
                } else if rng.random_bool(0.5) {
                    0.0
                } else {
                    0.1 * rng.random::<f64>()
                }
            }
            PhiDistribution::Mixture => {
                let pick = match rng.random_range(0..3) {
                    0 => PhiDistribution::Uniform,
                    1 => PhiDistribution::Exponential,
                    _ => PhiDistribution::TwoPoint,
                };
                pick.sample(rng, spike_rate)
            }
        }
    }
}

/// Draws i.i.d. leaf values. When `target_f` is given the result is
/// rescaled to that mean. An all-zero draw is replaced by a single spike so
/// the mean is always positive.
pub fn random_step_function(
    tree: &Tree,
    dist: PhiDistribution,
    target_f: Option<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<StepFunction> {
    let n = tree.leaf_count();
    // spikes rare enough to leave most of X near zero
    let spike_rate = rng.random_range(0.5..4.0) / n as f64;
    let mut values: Vec<f64> = (0..n).map(|_| dist.sample(rng, spike_rate.min(0.5))).collect();
    if values.iter().all(|&v| v == 0.0) {
        values[rng.random_range(0..n)] = 1.0;
    }
    let phi = StepFunction::new(tree.clone(), values)?;
    match target_f {
        Some(f) => {
            let mean = phi.moment(1.0);
            phi.scaled(f / mean)
        }
        None => Ok(phi),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let tree = Tree::uniform(3, 4).unwrap();
        let a = random_step_function(&tree, PhiDistribution::Mixture, None, &mut derive_rng(7, 3)).unwrap();
        let b = random_step_function(&tree, PhiDistribution::Mixture, None, &mut derive_rng(7, 3)).unwrap();
        let c = random_step_function(&tree, PhiDistribution::Mixture, None, &mut derive_rng(7, 4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rescaling_hits_target_mean() {
        let tree = Tree::uniform(2, 6).unwrap();
        for dist in [PhiDistribution::Uniform, PhiDistribution::TwoPoint, PhiDistribution::Exponential] {
            let phi = random_step_function(&tree, dist, Some(2.5), &mut derive_rng(1, 0)).unwrap();
            assert!((phi.moment(1.0) - 2.5).abs() < 1e-12);
            assert!(phi.values().iter().all(|v| *v >= 0.0));
        }
    }
}
