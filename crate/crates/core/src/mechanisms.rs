//! Local DP primitives: randomized response, the exponential mechanism, and
//! the Gaussian mechanism.
//!
//! Every randomized operation consumes draws from a caller-owned
//! [`RngStream`]; the decision rules are also exposed as pure functions of the
//! uniform draw so their exact output distributions can be enumerated.

use crate::error::{Error, Result};
use crate::rng::RngStream;

fn check_epsilon(epsilon: f64) -> Result<()> {
    // +inf is the limit case (no noise); NaN and negatives are rejected.
    if epsilon >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidEpsilon(epsilon))
    }
}

/// Probability that randomized response reports the flipped bit:
/// `1 / (1 + e^epsilon)`.
pub fn rr_flip_probability(epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    Ok(1.0 / (1.0 + epsilon.exp()))
}

/// Decision rule behind [`randomize_bit`]: flip iff the uniform draw falls
/// below the flip probability.
pub fn flip_with_draw(bit: bool, flip_probability: f64, draw: f64) -> bool {
    bit ^ (draw < flip_probability)
}

/// Binary randomized response. Consumes exactly one uniform draw.
pub fn randomize_bit(bit: bool, epsilon: f64, rng: &mut RngStream) -> Result<bool> {
    let p = rr_flip_probability(epsilon)?;
    Ok(flip_with_draw(bit, p, rng.uniform()))
}

/// Per-bit flip probability for one-hot randomized response at total budget
/// `epsilon`. Neighbouring one-hot vectors differ in two coordinates, so each
/// bit gets `epsilon / 2`.
pub fn onehot_flip_probability(epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    rr_flip_probability(epsilon / 2.0)
}

/// Flips every bit of a one-hot vector independently. The output need not be
/// one-hot.
pub fn randomize_onehot(vector: &[bool], epsilon: f64, rng: &mut RngStream) -> Result<Vec<bool>> {
    if vector.len() < 2 || vector.iter().filter(|&&b| b).count() != 1 {
        return Err(Error::NotOneHot);
    }
    let p = onehot_flip_probability(epsilon)?;
    Ok(vector
        .iter()
        .map(|&b| flip_with_draw(b, p, rng.uniform()))
        .collect())
}

/// One-hot encoding of `index` in a length-`k` bit vector.
pub fn one_hot(index: usize, k: usize) -> Vec<bool> {
    let mut v = vec![false; k];
    v[index] = true;
    v
}

/// A finite distribution over `outcomes`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution<T> {
    outcomes: Vec<T>,
    probabilities: Vec<f64>,
}

impl<T> DiscreteDistribution<T> {
    pub fn new(outcomes: Vec<T>, probabilities: Vec<f64>) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        if outcomes.len() != probabilities.len() {
            return Err(Error::LengthMismatch {
                left: outcomes.len(),
                right: probabilities.len(),
            });
        }
        if probabilities.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::InvalidConfig("probabilities must be non-negative".into()));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { outcomes, probabilities })
    }

    pub fn outcomes(&self) -> &[T] {
        &self.outcomes
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Inverse-CDF selection for a uniform draw in `[0, 1)`.
    pub fn index_for_draw(&self, draw: f64) -> usize {
        let mut cumulative = 0.0;
        let mut last_positive = 0;
        for (i, &p) in self.probabilities.iter().enumerate() {
            if p > 0.0 {
                last_positive = i;
            }
            cumulative += p;
            if draw < cumulative {
                return i;
            }
        }
        // Rounding left the cumulative sum just below 1.
        last_positive
    }

    pub fn sample(&self, rng: &mut RngStream) -> &T {
        &self.outcomes[self.index_for_draw(rng.uniform())]
    }
}

/// Output distribution of the exponential mechanism: `P(r)` proportional to
/// `exp(epsilon * u(r) / (2 * sensitivity))`, computed after subtracting the
/// maximum utility so large scores do not overflow.
pub fn exponential_distribution<T: Clone>(
    candidates: &[T],
    utilities: &[f64],
    sensitivity: f64,
    epsilon: f64,
) -> Result<DiscreteDistribution<T>> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    if candidates.len() != utilities.len() {
        return Err(Error::LengthMismatch {
            left: candidates.len(),
            right: utilities.len(),
        });
    }
    if !(sensitivity.is_finite() && sensitivity > 0.0) {
        return Err(Error::InvalidSensitivity(sensitivity));
    }
    if !epsilon.is_finite() {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    check_epsilon(epsilon)?;
    if utilities.iter().any(|u| !u.is_finite()) {
        return Err(Error::InvalidConfig("utilities must be finite".into()));
    }

    let scale = epsilon / (2.0 * sensitivity);
    let max = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = utilities.iter().map(|u| (scale * (u - max)).exp()).collect();
    let total: f64 = weights.iter().sum();
    let probabilities = weights.into_iter().map(|w| w / total).collect();
    DiscreteDistribution::new(candidates.to_vec(), probabilities)
}

/// Samples one candidate with the exponential mechanism. Consumes exactly one
/// uniform draw.
pub fn exponential_select<T: Clone>(
    candidates: &[T],
    utilities: &[f64],
    sensitivity: f64,
    epsilon: f64,
    rng: &mut RngStream,
) -> Result<T> {
    let dist = exponential_distribution(candidates, utilities, sensitivity, epsilon)?;
    Ok(dist.sample(rng).clone())
}

/// Noise scale for `(epsilon, delta)`-DP with the classical bound
/// `sigma = sensitivity * sqrt(2 ln(1.25 / delta)) / epsilon`.
///
/// The bound is derived for `epsilon < 1`; larger values are accepted and
/// treated as a heuristic calibration.
pub fn gaussian_sigma(sensitivity_l2: f64, epsilon: f64, delta: f64) -> Result<f64> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidDelta(delta));
    }
    if !(sensitivity_l2.is_finite() && sensitivity_l2 > 0.0) {
        return Err(Error::InvalidSensitivity(sensitivity_l2));
    }
    Ok(sensitivity_l2 * (2.0 * (1.25 / delta).ln()).sqrt() / epsilon)
}

/// Adds independent `N(0, sigma^2)` noise to each value.
pub fn add_gaussian_noise(values: &[f64], sigma: f64, rng: &mut RngStream) -> Result<Vec<f64>> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidSigma(sigma));
    }
    Ok(values
        .iter()
        .map(|v| v + sigma * rng.standard_normal())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{E, LN_2};

    #[test]
    fn flip_probability_values() {
        assert_eq!(rr_flip_probability(0.0).unwrap(), 0.5);
        assert!((rr_flip_probability(3f64.ln()).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(rr_flip_probability(f64::INFINITY).unwrap(), 0.0);
        assert!(rr_flip_probability(-0.1).is_err());
        assert!(rr_flip_probability(f64::NAN).is_err());
        let grid: Vec<f64> = (0..200).map(|i| i as f64 * 0.25).collect();
        for w in grid.windows(2) {
            let (a, b) = (rr_flip_probability(w[0]).unwrap(), rr_flip_probability(w[1]).unwrap());
            assert!(b < a && b > 0.0 && a <= 0.5);
        }
    }

    #[test]
    fn near_identity_at_large_epsilon() {
        assert!(rr_flip_probability(50.0).unwrap() < 2e-22);
        assert!(onehot_flip_probability(100.0).unwrap() < 1e-21);
        let mut rng = RngStream::new(3);
        for i in 0..1000 {
            let b = i % 3 == 0;
            assert_eq!(randomize_bit(b, 50.0, &mut rng).unwrap(), b);
        }
        let v = one_hot(2, 5);
        assert_eq!(randomize_onehot(&v, 100.0, &mut rng).unwrap(), v);
    }

    #[test]
    fn bit_transition_by_draw_enumeration() {
        // Enumerate the decision rule over a fine uniform grid.
        let p = rr_flip_probability(1.0).unwrap();
        let n = 1_000_000;
        let kept = (0..n)
            .filter(|i| flip_with_draw(true, p, (*i as f64 + 0.5) / n as f64))
            .count();
        let stay = kept as f64 / n as f64;
        assert!((stay - E / (1.0 + E)).abs() < 2.0 / n as f64);
        assert!((stay - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn bit_ratio_is_exactly_e() {
        let p = rr_flip_probability(1.0).unwrap();
        let prob = |y: bool, x: bool| if x == y { 1.0 - p } else { p };
        let mut worst: f64 = 0.0;
        for x in [false, true] {
            for x2 in [false, true] {
                for y in [false, true] {
                    worst = worst.max(prob(y, x) / prob(y, x2));
                }
            }
        }
        assert!((worst - E).abs() < 1e-12);
    }

    #[test]
    fn onehot_half_budget_per_bit() {
        assert!((onehot_flip_probability(0.5).unwrap() - 0.43782349911420193).abs() < 1e-15);
        let mut rng = RngStream::new(1);
        assert_eq!(randomize_onehot(&[true, true, false], 1.0, &mut rng), Err(Error::NotOneHot));
        assert_eq!(randomize_onehot(&[false, false], 1.0, &mut rng), Err(Error::NotOneHot));
        assert_eq!(randomize_onehot(&[true], 1.0, &mut rng), Err(Error::NotOneHot));
        assert!(randomize_onehot(&[true, false], -1.0, &mut rng).is_err());
    }

    #[test]
    fn onehot_exhaustive_ratio_k3() {
        let eps = 1.0;
        let p = 1.0 / (1.0 + (eps / 2.0f64).exp());
        let k = 3;
        let prob = |input: usize, out: u32| -> f64 {
            (0..k)
                .map(|j| {
                    let bit = (out >> j) & 1 == 1;
                    if bit == (j == input) { 1.0 - p } else { p }
                })
                .product()
        };
        let mut worst: f64 = 0.0;
        for a in 0..k {
            for b in 0..k {
                for out in 0..(1u32 << k) {
                    worst = worst.max(prob(a, out) / prob(b, out));
                }
            }
        }
        assert!(worst <= eps.exp() + 1e-9);
        assert!((worst - eps.exp()).abs() < 1e-9);
    }

    #[test]
    fn exponential_examples() {
        let d = exponential_distribution(&["A", "B"], &[0.0, 1.0], 1.0, 2.0).unwrap();
        assert!((d.probabilities()[1] - 0.7310585786300049).abs() < 1e-12);
        assert!((d.probabilities()[0] - 0.2689414213699951).abs() < 1e-12);

        let d = exponential_distribution(&[1, 2, 3, 4], &[5.0, -2.0, 0.0, 9.0], 1.0, 0.0).unwrap();
        assert!(d.probabilities().iter().all(|p| (p - 0.25).abs() < 1e-15));

        let mut rng = RngStream::new(9);
        for _ in 0..100 {
            assert_eq!(exponential_select(&['x'], &[3.0], 1.0, 5.0, &mut rng).unwrap(), 'x');
        }
    }

    #[test]
    fn exponential_errors() {
        let mut rng = RngStream::new(0);
        let empty: [u8; 0] = [];
        assert_eq!(exponential_select(&empty, &[], 1.0, 1.0, &mut rng), Err(Error::EmptyCandidates));
        assert!(matches!(
            exponential_select(&[1, 2], &[0.0], 1.0, 1.0, &mut rng),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            exponential_select(&[1], &[0.0], 0.0, 1.0, &mut rng),
            Err(Error::InvalidSensitivity(_))
        ));
        assert!(exponential_select(&[1], &[0.0], 1.0, -1.0, &mut rng).is_err());
    }

    #[test]
    fn exponential_handles_huge_utilities() {
        let d = exponential_distribution(&[0, 1], &[1e6, 1e6 + 2.0 * LN_2], 1.0, 1.0).unwrap();
        assert!((d.probabilities()[1] - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn exponential_empirical_frequency() {
        let mut rng = RngStream::new(11);
        let n = 200_000;
        let hits = (0..n)
            .filter(|_| exponential_select(&[0, 1], &[0.0, 1.0], 1.0, 2.0, &mut rng).unwrap() == 1)
            .count();
        let want = E / (1.0 + E);
        let se = (want * (1.0 - want) / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - want).abs() < 4.0 * se);
    }

    #[test]
    fn gaussian_sigma_values() {
        let s = gaussian_sigma(1.0, 1.0, 1.5e-7).unwrap();
        assert!((s - 5.645489189461683).abs() < 1e-12);
        assert!((gaussian_sigma(1.0, 2.0, 1.5e-7).unwrap() - 2.8227445947308416).abs() < 1e-12);
        assert_eq!(gaussian_sigma(2.0, 1.0, 1.5e-7).unwrap(), 2.0 * s);
        assert!(matches!(gaussian_sigma(1.0, 0.0, 1e-5), Err(Error::InvalidEpsilon(_))));
        assert!(matches!(gaussian_sigma(1.0, 1.0, 0.0), Err(Error::InvalidDelta(_))));
        assert!(matches!(gaussian_sigma(1.0, 1.0, 1.0), Err(Error::InvalidDelta(_))));
        assert!(gaussian_sigma(0.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn gaussian_noise_edges() {
        let mut rng = RngStream::new(5);
        assert!(add_gaussian_noise(&[], 1.0, &mut rng).unwrap().is_empty());
        let v = [1.0, -2.0, 3.5];
        let out = add_gaussian_noise(&v, 1e-12, &mut rng).unwrap();
        for (a, b) in v.iter().zip(&out) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(matches!(add_gaussian_noise(&v, 0.0, &mut rng), Err(Error::InvalidSigma(_))));
        assert!(add_gaussian_noise(&v, f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn gaussian_noise_moments() {
        let sigma = 5.6455;
        let n = 1_000_000;
        let mut rng = RngStream::new(2024);
        let out = add_gaussian_noise(&vec![0.0; n], sigma, &mut rng).unwrap();
        let mean = out.iter().sum::<f64>() / n as f64;
        let var = out.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var.sqrt() / sigma - 1.0).abs() < 0.01, "std {}", var.sqrt());
    }

    #[test]
    fn discrete_distribution_validation() {
        assert!(DiscreteDistribution::new(vec![1, 2], vec![0.5, 0.6]).is_err());
        assert!(DiscreteDistribution::new(vec![1, 2], vec![1.5, -0.5]).is_err());
        assert!(DiscreteDistribution::<u8>::new(vec![], vec![]).is_err());
        let d = DiscreteDistribution::new(vec!['a', 'b', 'c'], vec![0.25, 0.0, 0.75]).unwrap();
        assert_eq!(d.index_for_draw(0.0), 0);
        assert_eq!(d.index_for_draw(0.25), 2);
        assert_eq!(d.index_for_draw(0.999_999_999), 2);
    }

    #[test]
    fn deterministic_given_seed() {
        let run = |seed| {
            let mut rng = RngStream::new(seed);
            let bits: Vec<bool> = (0..50).map(|i| randomize_bit(i % 2 == 0, 0.7, &mut rng).unwrap()).collect();
            let oh = randomize_onehot(&one_hot(1, 4), 0.7, &mut rng).unwrap();
            let ex = exponential_select(&[1, 2, 3], &[0.0, 1.0, 0.0], 1.0, 0.7, &mut rng).unwrap();
            let g = add_gaussian_noise(&[0.0; 5], 2.0, &mut rng).unwrap();
            (bits, oh, ex, g)
        };
        assert_eq!(run(77), run(77));
    }

    proptest! {
        #[test]
        fn exponential_shift_invariant(
            utils in proptest::collection::vec(-50.0f64..50.0, 1..8),
            shift in -1e3f64..1e3,
            eps in 0.0f64..5.0,
        ) {
            let cands: Vec<usize> = (0..utils.len()).collect();
            let shifted: Vec<f64> = utils.iter().map(|u| u + shift).collect();
            let a = exponential_distribution(&cands, &utils, 1.0, eps).unwrap();
            let b = exponential_distribution(&cands, &shifted, 1.0, eps).unwrap();
            for (x, y) in a.probabilities().iter().zip(b.probabilities()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn sigma_scaling(delta_exp in 1.0f64..12.0, eps in 0.01f64..10.0, sens in 0.01f64..100.0) {
            let delta = 10f64.powf(-delta_exp);
            let base = gaussian_sigma(1.0, 1.0, delta).unwrap();
            let s = gaussian_sigma(sens, eps, delta).unwrap();
            prop_assert!((s - sens * base / eps).abs() <= 1e-12 * s.max(1.0));
        }
    }
}
