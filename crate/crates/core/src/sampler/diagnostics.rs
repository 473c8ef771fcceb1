//! Convergence diagnostics over multiple chains of one scalar quantity.

use crate::error::{Error, Result};
use crate::math::{mean, sample_variance};

/// Split-chain potential scale reduction factor.
///
/// Each chain is cut into two halves (an odd middle draw is dropped) and
/// `R = sqrt(((n - 1) / n * W + B / n) / W)` is computed over the halves,
/// with `W` the mean within-half variance and `B / n` the variance of the
/// half means. Constant chains with identical values give `1.0`; constant
/// chains at different values give `+inf`.
pub fn rhat(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: chains.len(),
        });
    }
    let n_min = chains.iter().map(Vec::len).min().unwrap_or(0);
    if n_min < 4 {
        return Err(Error::TooFewSamples {
            needed: 4,
            got: n_min,
        });
    }
    let half = n_min / 2;
    let mut halves: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let c = &c[..n_min];
        halves.push(&c[..half]);
        halves.push(&c[n_min - half..]);
    }
    Ok(potential_scale_reduction(&halves))
}

fn potential_scale_reduction(chains: &[&[f64]]) -> f64 {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let within = mean(&chains.iter().map(|c| sample_variance(c)).collect::<Vec<_>>());
    let between_over_n = sample_variance(&means);
    if within == 0.0 {
        return if between_over_n == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * within + between_over_n;
    (var_plus / within).sqrt()
}

/// Effective sample size across chains using Geyer's initial monotone
/// sequence on the multi-chain autocorrelation estimate.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if m == 0 || n < 4 {
        return f64::NAN;
    }
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let vars: Vec<f64> = chains.iter().map(|c| sample_variance(c)).collect();
    let w = mean(&vars);
    let b_over_n = if m > 1 { sample_variance(&means) } else { 0.0 };
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    if var_plus == 0.0 {
        return (m * n) as f64;
    }

    let acov = |c: &[f64], mu: f64, lag: usize| -> f64 {
        c[..n - lag]
            .iter()
            .zip(&c[lag..])
            .map(|(a, b)| (a - mu) * (b - mu))
            .sum::<f64>()
            / nf
    };
    let rho = |lag: usize| -> f64 {
        let mean_acov = chains
            .iter()
            .zip(&means)
            .map(|(c, &mu)| acov(c, mu, lag))
            .sum::<f64>()
            / m as f64;
        1.0 - (w - mean_acov) / var_plus
    };

    let mut sum_pairs = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = rho(lag) + rho(lag + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        sum_pairs += pair;
        prev_pair = pair;
        lag += 2;
    }
    // tau = -1 + 2 * sum of pairs (rho_0 = 1 is included in the first pair)
    let tau = (-1.0 + 2.0 * sum_pairs).max(1.0 / (m * n) as f64);
    (m * n) as f64 / tau
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_chain(rng: &mut ChaCha8Rng, n: usize, mean: f64) -> Vec<f64> {
        (0..n)
            .map(|_| mean + { let z: f64 = StandardNormal.sample(rng); z })
            .collect::<Vec<f64>>()
    }

    #[test]
    fn constant_chains() {
        let c = vec![vec![2.0; 10], vec![2.0; 10]];
        assert_eq!(rhat(&c).unwrap(), 1.0);
        let c = vec![vec![2.0; 10], vec![3.0; 10]];
        assert_eq!(rhat(&c).unwrap(), f64::INFINITY);
    }

    #[test]
    fn same_distribution_is_near_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = vec![normal_chain(&mut rng, 10_000, 0.0), normal_chain(&mut rng, 10_000, 0.0)];
        let r = rhat(&c).unwrap();
        // split R-hat can dip marginally below 1 by sampling noise
        assert!((1.0 - 1e-3..=1.01).contains(&r), "rhat = {r}");
    }

    #[test]
    fn separated_chains() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let c = vec![normal_chain(&mut rng, 1000, 0.0), normal_chain(&mut rng, 1000, 10.0)];
        assert!(rhat(&c).unwrap() > 1.1 * 3.0);
    }

    #[test]
    fn preconditions() {
        assert!(rhat(&[vec![1.0; 10]]).is_err());
        assert!(rhat(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]).is_err());
    }

    #[test]
    fn odd_length_drops_middle_draw() {
        let a = vec![1.0, 2.0, 100.0, 3.0, 4.0];
        let b = vec![1.0, 2.0, -100.0, 3.0, 4.0];
        let even_a = vec![1.0, 2.0, 3.0, 4.0];
        let even_b = even_a.clone();
        assert_eq!(rhat(&[a, b]).unwrap(), rhat(&[even_a, even_b]).unwrap());
    }

    #[test]
    fn ess_of_iid_draws_is_near_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let c: Vec<Vec<f64>> = (0..4).map(|_| normal_chain(&mut rng, 2000, 0.0)).collect();
        let ess = effective_sample_size(&c);
        assert!(ess > 6000.0 && ess < 10_000.0, "ess = {ess}");
    }

    #[test]
    fn ess_of_autocorrelated_draws_is_reduced() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let ar = |rng: &mut ChaCha8Rng| {
            let mut x = 0.0;
            (0..4000)
                .map(|_| {
                    x = 0.9 * x + { let z: f64 = StandardNormal.sample(rng); z };
                    x
                })
                .collect::<Vec<f64>>()
        };
        let c: Vec<Vec<f64>> = (0..2).map(|_| ar(&mut rng)).collect();
        let ess = effective_sample_size(&c);
        // AR(1) with phi = 0.9: tau = (1 + phi) / (1 - phi) = 19
        let expected = 8000.0 / 19.0;
        assert!(ess > 0.6 * expected && ess < 1.6 * expected, "ess = {ess}");
    }
}
