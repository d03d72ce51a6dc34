//! The diffusion end of the urn chain: exact Gaussian tails and sampling
//! for the limiting Ornstein-Uhlenbeck process, and the rescaled-chain
//! estimator that converges to it.

use rand_distr::{Distribution, StandardNormal};
use statrs::function::erf::erfc;

use super::tail::{monte_carlo_tail, TailEstimate, TailOptions};
use super::path_rng;
use crate::chain_model::{BirthDeathRates, StateFunction};
use crate::error::{Error, Result};

fn check_ou_params(z0: f64, lambda: f64, nu: f64, t: f64) -> Result<f64> {
    if !z0.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "starting point must be finite, got {z0}"
        )));
    }
    for (name, r) in [("lambda", lambda), ("nu", nu)] {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "{name} must be positive and finite, got {r}"
            )));
        }
    }
    if t.is_nan() || t < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "time must be nonnegative, got {t}"
        )));
    }
    if (lambda + nu - 1.0).abs() > 1e-12 {
        log::warn!(
            "rate sum {} differs from 1; the diffusion limit is stated at unit total rate",
            lambda + nu
        );
    }
    // variance of the limit at time t; the infinite horizon gives the
    // stationary value
    let shrink = if t.is_infinite() { 1.0 } else { -(-2.0 * t).exp_m1() };
    Ok(lambda * nu * shrink)
}

/// Exact upper tail of the limiting diffusion: the worst Lipschitz
/// observable is the identity scaled by its constant, so the centered
/// deviation tail is the Gaussian `P(Z >= y / (f_lip * sigma))`. Does not
/// depend on the starting point, which only shifts the mean.
pub fn ou_exact_tail(z0: f64, lambda: f64, nu: f64, t: f64, f_lip: f64, y: f64) -> Result<f64> {
    let variance = check_ou_params(z0, lambda, nu, t)?;
    if !(f_lip > 0.0) || !f_lip.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "Lipschitz constant must be positive and finite, got {f_lip}"
        )));
    }
    if !(y > 0.0) || !y.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "level must be positive and finite, got {y}"
        )));
    }
    let sigma = variance.sqrt();
    if sigma == 0.0 {
        return Ok(0.0); // the process has not moved yet
    }
    let z = y / (f_lip * sigma);
    Ok(0.5 * erfc(z / std::f64::consts::SQRT_2))
}

/// One exact draw of the limiting diffusion at time `t`: Gaussian with
/// mean `z0 e^{-t}` and the variance of [`ou_exact_tail`]. One draw per
/// seed.
pub fn ou_sample(z0: f64, lambda: f64, nu: f64, t: f64, seed: u64) -> Result<f64> {
    let variance = check_ou_params(z0, lambda, nu, t)?;
    let mean = z0 * (-t).exp();
    let mut rng = path_rng(seed, 0);
    let z: f64 = StandardNormal.sample(&mut rng);
    Ok(mean + variance.sqrt() * z)
}

/// Deviation tail of the rescaled urn chain `Z_t = (X_t - lambda n) / sqrt(n)`
/// started near `z0`, centered at its exact kernel mean. As `n` grows this
/// converges to the diffusion tail of [`ou_exact_tail`].
#[allow(clippy::too_many_arguments)]
pub fn ehrenfest_rescaled_tail(
    n: usize,
    lambda: f64,
    nu: f64,
    z0: f64,
    t: f64,
    y_grid: &[f64],
    n_paths: u64,
    confidence: f64,
    seed: u64,
    options: &TailOptions,
) -> Result<TailEstimate> {
    check_ou_params(z0, lambda, nu, t)?;
    if n == 0 {
        return Err(Error::InvalidParameter("urn needs at least one ball".into()));
    }
    let sqrt_n = (n as f64).sqrt();
    let center = lambda * n as f64;
    let start = (center + z0 * sqrt_n).round().clamp(0.0, n as f64) as usize;
    let rates = BirthDeathRates::ehrenfest(n, lambda, nu)?.to_general();
    let rescaled = StateFunction::from_fn(n + 1, |x| (x as f64 - center) / sqrt_n)?;
    monte_carlo_tail(
        &rates, start, &rescaled, t, y_grid, n_paths, confidence, seed, options,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::ou_tail_bound;
    use approx::assert_abs_diff_eq;

    #[test]
    fn diffusion_variance_saturates_at_the_rate_product() {
        let v_inf = check_ou_params(0.0, 0.5, 0.5, f64::INFINITY).unwrap();
        assert_eq!(v_inf, 0.25);
        let v_large = check_ou_params(0.0, 0.5, 0.5, 60.0).unwrap();
        assert_abs_diff_eq!(v_large, 0.25, epsilon = 1e-15);
        assert_eq!(check_ou_params(0.0, 0.5, 0.5, 0.0).unwrap(), 0.0);
        assert_eq!(ou_exact_tail(1.0, 0.5, 0.5, 0.0, 1.0, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_tail_sits_below_its_analytic_bound() {
        for t in [0.5, 1.0, f64::INFINITY] {
            for i in 1..=20 {
                let y = 0.1 * i as f64;
                let exact = ou_exact_tail(0.0, 0.5, 0.5, t, 1.0, y).unwrap();
                let bound = ou_tail_bound(y, t, 0.5, 1.0).unwrap();
                assert!(
                    exact <= bound + 1e-15,
                    "t {t} y {y}: tail {exact} above bound {bound}"
                );
            }
        }
    }

    #[test]
    fn sample_moments_match_the_diffusion_law() {
        let (z0, lambda, nu, t) = (1.3, 0.5, 0.5, 0.7);
        let n = 30_000u64;
        let draws: Vec<f64> = (0..n)
            .map(|s| ou_sample(z0, lambda, nu, t, s).unwrap())
            .collect();
        let mean: f64 = draws.iter().sum::<f64>() / n as f64;
        let var: f64 = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;

        let want_mean = z0 * (-t).exp();
        let want_var = lambda * nu * (-(-2.0 * t).exp_m1());
        let mean_se = want_var.sqrt() / (n as f64).sqrt();
        let var_se = want_var * (2.0 / n as f64).sqrt();
        assert!((mean - want_mean).abs() <= 3.0 * mean_se, "mean {mean}");
        assert!((var - want_var).abs() <= 3.0 * var_se, "variance {var}");
    }

    #[test]
    fn rescaled_start_recovers_the_target_point() {
        for n in [100usize, 400, 1600] {
            let sqrt_n = (n as f64).sqrt();
            let start = (0.5 * n as f64 + 0.8 * sqrt_n).round();
            let z0_real = (start - 0.5 * n as f64) / sqrt_n;
            assert!(
                (z0_real - 0.8).abs() <= 0.5 / sqrt_n + 1e-12,
                "n {n}: initial point {z0_real}"
            );
        }
    }

    #[test]
    fn rescaled_chain_mean_obeys_the_linear_drift() {
        // linear birth-death rates close the first-moment equation, so
        // the kernel mean of Z_t must equal Z_0 e^{-t} exactly
        let (n, t, z0) = (100usize, 1.0, 0.8);
        let est = ehrenfest_rescaled_tail(
            n,
            0.5,
            0.5,
            z0,
            t,
            &[0.5, 1.0],
            2000,
            0.99,
            31,
            &TailOptions::default(),
        )
        .unwrap();
        let sqrt_n = (n as f64).sqrt();
        let z0_real = ((0.5 * n as f64 + z0 * sqrt_n).round() - 0.5 * n as f64) / sqrt_n;
        assert_abs_diff_eq!(est.exact_mean(), z0_real * (-t).exp(), epsilon = 1e-10);
        for w in est.counts().windows(2) {
            assert!(w[0] >= w[1]);
        }
    }
}
