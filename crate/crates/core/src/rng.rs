//! Seeded random streams shared by every simulator.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// The single random stream type used for rounds and episodes.
pub type SimRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SimRng {
    use rand::SeedableRng;
    SimRng::seed_from_u64(seed)
}

/// Standard normal draw (Box-Muller, one value per call).
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // 1 - u keeps the argument of ln in (0, 1].
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
}

/// Draws an index from a categorical distribution given by `weights`.
///
/// Falls back to the last index when rounding leaves the cumulative sum just
/// short of the uniform draw.
pub fn categorical<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_moments_are_close() {
        let mut rng = seeded(11);
        let n = 20_000;
        let draws: alloc::vec::Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.03, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn point_mass_categorical() {
        let mut rng = seeded(0);
        for _ in 0..100 {
            assert_eq!(categorical(&mut rng, &[0.0, 1.0, 0.0]), 1);
        }
    }
}
