//! Curvature lower bounds for birth-death chains, and the machinery that
//! checks them against the semigroup they are supposed to control.
//!
//! Two notions of curvature are certified from the rate profile alone:
//!
//! * Wasserstein curvature `K`: the largest rate at which kernel rows of
//!   adjacent states contract toward each other in transport distance,
//!   bounded below by `inf_x (birth(x-1) - birth(x) + death(x) - death(x-1))`.
//! * Gamma-curvature `rho`: the contraction rate in the pointwise
//!   commutation `(Gamma P_t f)^{1/2} <= e^{-rho t} P_t (Gamma f)^{1/2}`,
//!   bounded below by `inf_x min(birth(x-1) - birth(x), death(x+1) - death(x))`
//!   over interior states, valid only when nonnegative.
//!
//! Certificates are cheap rate scans; estimates recompute the contraction
//! quantities exactly from kernels, so a certificate can always be checked
//! against the semigroup it claims to control.

use serde::{Deserialize, Serialize};

use crate::chain_model::{
    gamma, lipschitz_seminorm, BirthDeathRates, GeneralRates, Metric, StateFunction,
};
use crate::error::{Error, Result};
use crate::semigroup::{apply_semigroup, kernel_row, transition_matrix, UniformizationConfig};
use crate::tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurvatureKind {
    Wasserstein,
    Gamma,
}

/// A certified curvature lower bound obtained from a rate scan.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CurvatureCertificate {
    pub kind: CurvatureKind,
    /// The certified lower bound (units 1/time).
    pub value: f64,
    /// Whether the criterion's own validity condition holds. Always true
    /// for the Wasserstein scan; the Gamma scan requires a nonnegative
    /// value.
    #[serde(rename = "valid")]
    pub satisfied: bool,
    /// State attaining the scanned minimum, when the scan produced one.
    pub argmin: Option<usize>,
}

impl CurvatureCertificate {
    /// Wraps an externally supplied Gamma-curvature value, e.g. one known
    /// analytically rather than scanned.
    pub fn gamma_assumed(rho: f64) -> Self {
        Self {
            kind: CurvatureKind::Gamma,
            value: rho,
            satisfied: rho >= 0.0,
            argmin: None,
        }
    }
}

/// Which side of the true contraction rate an empirical estimate sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateDirection {
    /// The computed value is the contraction rate of the finite chain.
    Exact,
    /// The true rate can only be smaller (sup taken over a subfamily).
    FromAbove,
    /// The true rate can only be larger.
    FromBelow,
}

/// Empirical contraction rates along a time grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvatureEstimate {
    pub kind: CurvatureKind,
    pub t_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub direction: EstimateDirection,
}

fn check_t_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(Error::InvalidParameter("empty time grid".into()));
    }
    if !(t_grid[0] > 0.0) {
        return Err(Error::InvalidParameter(
            "time grid must be strictly positive".into(),
        ));
    }
    for pair in t_grid.windows(2) {
        if !(pair[0] < pair[1]) {
            return Err(Error::InvalidParameter(
                "time grid must be strictly increasing".into(),
            ));
        }
    }
    Ok(())
}

/// Scans the rate profile for the Wasserstein curvature lower bound
/// `inf_x (birth(x-1) - birth(x) + death(x) - death(x-1))` over `x >= 1`,
/// stopping short of the boundary margin on truncated spaces.
pub fn wasserstein_criterion(rates: &BirthDeathRates) -> Result<CurvatureCertificate> {
    let top = rates.scan_top();
    if top < 1 {
        return Err(Error::InvalidParameter(
            "curvature scan window is empty; boundary margin too wide".into(),
        ));
    }
    let mut value = f64::INFINITY;
    let mut argmin = 1;
    for x in 1..=top {
        let diff = rates.birth(x - 1) - rates.birth(x) + rates.death(x) - rates.death(x - 1);
        if diff < value {
            value = diff;
            argmin = x;
        }
    }
    Ok(CurvatureCertificate {
        kind: CurvatureKind::Wasserstein,
        value,
        satisfied: true,
        argmin: Some(argmin),
    })
}

/// Scans interior states for the Gamma-curvature lower bound
/// `inf_x min(birth(x-1) - birth(x), death(x+1) - death(x))`. The
/// certificate is marked satisfied only when the bound is nonnegative.
pub fn gamma_criterion(rates: &BirthDeathRates) -> Result<CurvatureCertificate> {
    let top = rates.scan_top().min(rates.max_state() - 1);
    if top < 1 {
        return Err(Error::InvalidParameter(
            "curvature scan window is empty; boundary margin too wide".into(),
        ));
    }
    let mut value = f64::INFINITY;
    let mut argmin = 1;
    for x in 1..=top {
        let up = rates.birth(x - 1) - rates.birth(x);
        let down = rates.death(x + 1) - rates.death(x);
        let diff = up.min(down);
        if diff < value {
            value = diff;
            argmin = x;
        }
    }
    Ok(CurvatureCertificate {
        kind: CurvatureKind::Gamma,
        value,
        satisfied: value >= 0.0,
        argmin: Some(argmin),
    })
}

/// Pointwise slack of the curvature inequality behind the Gamma
/// criterion: `Gamma_2 f - Gamma((Gamma f)^{1/2}) - rho Gamma f`.
/// Nonnegative on interior states whenever `rho` is a certified value.
pub fn gamma2_gap(rates: &GeneralRates, f: &StateFunction, rho: f64) -> Result<StateFunction> {
    let gf = gamma(rates, f)?;
    let g2f = crate::chain_model::gamma2(rates, f)?;
    let sqrt_gf = gf.map(f64::sqrt)?;
    let g_sqrt = gamma(rates, &sqrt_gf)?;
    let mut values = Vec::with_capacity(f.len());
    for x in 0..f.len() {
        values.push(g2f[x] - g_sqrt[x] - rho * gf[x]);
    }
    StateFunction::new(values)
}

fn check_distribution(p: &[f64], n: usize) -> Result<()> {
    if p.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: p.len(),
        });
    }
    let sum: f64 = p.iter().sum();
    let deficit = (sum - 1.0).abs();
    if deficit > tolerances::NORMALIZATION {
        return Err(Error::NotNormalized { deficit });
    }
    Ok(())
}

/// Transport distance between two distributions on a path metric, via the
/// cumulative-difference formula `sum_k w_k |F_mu(k) - F_nu(k)|`, exact in
/// one dimension.
pub fn w1_distance(mu: &[f64], nu: &[f64], d: &Metric) -> Result<f64> {
    if mu.len() != nu.len() {
        return Err(Error::DimensionMismatch {
            expected: mu.len(),
            found: nu.len(),
        });
    }
    d.check_states(mu.len())?;
    check_distribution(mu, mu.len())?;
    check_distribution(nu, nu.len())?;
    let mut f_mu = 0.0;
    let mut f_nu = 0.0;
    let mut total = 0.0;
    for k in 0..mu.len().saturating_sub(1) {
        f_mu += mu[k];
        f_nu += nu[k];
        total += d.edge(k) * (f_mu - f_nu).abs();
    }
    Ok(total)
}

/// Primal-dual gap: transport distance minus the best lower bound a
/// sampled family of test functions certifies through duality. Each test
/// function is normalized to unit Lipschitz seminorm; constants are
/// skipped. Nonnegative up to rounding, zero exactly when some sampled
/// function attains the supremum.
pub fn kantorovich_dual_gap(
    mu: &[f64],
    nu: &[f64],
    d: &Metric,
    sample_fns: &[StateFunction],
) -> Result<f64> {
    let primal = w1_distance(mu, nu, d)?;
    let mut dual: f64 = 0.0;
    for f in sample_fns {
        if f.len() != mu.len() {
            return Err(Error::DimensionMismatch {
                expected: mu.len(),
                found: f.len(),
            });
        }
        let lip = lipschitz_seminorm(f, d)?;
        if lip == 0.0 {
            continue;
        }
        let pairing: f64 = (0..mu.len()).map(|x| f[x] * (mu[x] - nu[x])).sum();
        dual = dual.max(pairing.abs() / lip);
    }
    Ok(primal - dual)
}

/// The exact Wasserstein contraction rate of the finite chain at each
/// grid time.
///
/// Only adjacent kernel rows are compared: on a path metric the transport
/// distance between any two rows telescopes through the states between
/// them, so the worst adjacent ratio bounds every pair's ratio, and the
/// supremum over pairs is attained on an edge. A degenerate ratio of zero
/// (coinciding rows) makes the rate infinite; it is kept, with a warning,
/// rather than silently dropped.
pub fn wasserstein_curvature_estimate(
    rates: &GeneralRates,
    d: &Metric,
    t_grid: &[f64],
    cfg: &UniformizationConfig,
) -> Result<CurvatureEstimate> {
    check_t_grid(t_grid)?;
    d.check_states(rates.n_states())?;
    let n = rates.n_states();
    if n < 2 {
        return Err(Error::InvalidParameter(
            "need at least two states to compare kernel rows".into(),
        ));
    }
    let mut values = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let kernel = transition_matrix(rates, t, cfg)?;
        let mut worst: f64 = 0.0;
        for x in 0..n - 1 {
            let w = w1_distance(kernel.row(x), kernel.row(x + 1), d)?;
            worst = worst.max(w / d.edge(x));
        }
        if worst == 0.0 {
            log::warn!("all adjacent kernel rows coincide at t = {t}; contraction rate is infinite");
            values.push(f64::INFINITY);
        } else {
            values.push(-worst.ln() / t);
        }
    }
    Ok(CurvatureEstimate {
        kind: CurvatureKind::Wasserstein,
        t_grid: t_grid.to_vec(),
        values,
        direction: EstimateDirection::Exact,
    })
}

/// The default family for [`gamma_curvature_estimate`]: the identity,
/// every single-site indicator, and seeded uniform noise in `[-1, 1]`.
pub fn default_test_functions(n_states: usize, n_random: usize, seed: u64) -> Vec<StateFunction> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut fns = Vec::with_capacity(1 + n_states + n_random);
    fns.push(StateFunction::identity(n_states));
    for site in 0..n_states {
        fns.push(StateFunction::indicator(n_states, site).expect("site in range"));
    }
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    for _ in 0..n_random {
        fns.push(
            StateFunction::from_fn(n_states, |_| rng.random_range(-1.0..1.0))
                .expect("finite values"),
        );
    }
    fns
}

/// Estimates the Gamma contraction rate over a time grid by maximizing
/// the pointwise commutation ratio over a finite family of test
/// functions. The true supremum runs over all functions, so the result
/// estimates the rate from above.
///
/// States where the semigroup has smoothed the local fluctuation to
/// exactly zero are skipped with a diagnostic rather than counted as
/// contraction; for an irreducible chain and a non-constant function this
/// cannot happen.
pub fn gamma_curvature_estimate(
    rates: &GeneralRates,
    t_grid: &[f64],
    test_fns: &[StateFunction],
    cfg: &UniformizationConfig,
) -> Result<CurvatureEstimate> {
    check_t_grid(t_grid)?;
    let usable: Vec<&StateFunction> = test_fns.iter().filter(|f| !f.is_constant()).collect();
    if usable.is_empty() {
        return Err(Error::InvalidParameter(
            "need at least one non-constant test function".into(),
        ));
    }
    let mut values = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let mut worst: f64 = 0.0;
        for f in &usable {
            let gf = gamma(rates, f)?;
            let sqrt_gf = gf.map(f64::sqrt)?;
            let smoothed_fluct = apply_semigroup(rates, &sqrt_gf, t, cfg)?;
            let ptf = apply_semigroup(rates, f, t, cfg)?;
            let fluct_of_smoothed = gamma(rates, &ptf)?;
            for x in 0..rates.n_states() {
                let denom = smoothed_fluct[x];
                if denom == 0.0 {
                    log::warn!("state {x}: P_t(Gamma f)^(1/2) vanished; skipped in the ratio");
                    continue;
                }
                worst = worst.max(fluct_of_smoothed[x].sqrt() / denom);
            }
        }
        if worst == 0.0 {
            return Err(Error::InvalidParameter(
                "every commutation ratio degenerated to 0/0".into(),
            ));
        }
        values.push(-worst.ln() / t);
    }
    Ok(CurvatureEstimate {
        kind: CurvatureKind::Gamma,
        t_grid: t_grid.to_vec(),
        values,
        direction: EstimateDirection::FromAbove,
    })
}

/// Exact covariance of two observables at time `t` against the bound a
/// Gamma-curvature certificate implies:
///
/// ```text
/// Cov_x0[g1(X_t), g2(X_t)] <= 2 L_{t,rho} sup(Gamma g1)^{1/2}
///                             . E_x0[(Gamma g2)^{1/2}(X_t)]
/// ```
///
/// Returns `(lhs, rhs)`; the caller asserts the comparison.
pub fn covariance_check(
    rates: &GeneralRates,
    x0: usize,
    g1: &StateFunction,
    g2: &StateFunction,
    t: f64,
    certificate: &CurvatureCertificate,
    cfg: &UniformizationConfig,
) -> Result<(f64, f64)> {
    if certificate.kind != CurvatureKind::Gamma {
        return Err(Error::InvalidCertificate(
            "covariance bound needs a Gamma-curvature certificate".into(),
        ));
    }
    if !certificate.satisfied {
        return Err(Error::InvalidCertificate(format!(
            "certificate value {} does not satisfy the criterion",
            certificate.value
        )));
    }
    let rho = certificate.value;
    let n = rates.n_states();
    if g1.len() != n || g2.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: if g1.len() != n { g1.len() } else { g2.len() },
        });
    }
    let (row, _) = kernel_row(rates, x0, t, cfg)?;
    let mean = |f: &StateFunction| -> f64 { row.iter().zip(f.values()).map(|(p, v)| p * v).sum() };
    let product = g1.zip_map(g2, |a, b| a * b)?;
    let lhs = mean(&product) - mean(g1) * mean(g2);

    let l = crate::bounds::contraction_integral(t, rho)?;
    let g_inf_1 = gamma(rates, g1)?.sup_norm();
    let sqrt_g2 = gamma(rates, g2)?.map(f64::sqrt)?;
    let rhs = 2.0 * l * g_inf_1.sqrt() * mean(&sqrt_g2);
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain_model::StateSpace;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn cfg() -> UniformizationConfig {
        UniformizationConfig::default()
    }

    #[test]
    fn criteria_on_presets_match_closed_forms() {
        let urn = BirthDeathRates::ehrenfest(10, 0.5, 0.5).unwrap();
        let k = wasserstein_criterion(&urn).unwrap();
        assert_eq!(k.kind, CurvatureKind::Wasserstein);
        assert_abs_diff_eq!(k.value, 1.0, epsilon = 1e-15);
        assert!(k.satisfied);
        let rho = gamma_criterion(&urn).unwrap();
        assert_abs_diff_eq!(rho.value, 0.5, epsilon = 1e-15);
        assert!(rho.satisfied);

        let queue = BirthDeathRates::mm1(1.0, 2.0, 50).unwrap();
        let k = wasserstein_criterion(&queue).unwrap();
        assert_eq!(k.value, 0.0);
        assert_eq!(k.argmin, Some(2)); // x = 1 gives the down-rate, x >= 2 give zero
        let rho = gamma_criterion(&queue).unwrap();
        assert_eq!(rho.value, 0.0);
        assert!(rho.satisfied);
    }

    #[test]
    fn bounded_random_rates_on_a_long_window_curve_nonpositively() {
        for seed in 0..5u64 {
            let mut rng = ChaCha12Rng::seed_from_u64(700 + seed);
            let n = 80;
            let birth: Vec<f64> = (0..=n).map(|_| rng.random_range(0.2..3.0)).collect();
            let mut death: Vec<f64> = (0..=n).map(|_| rng.random_range(0.2..3.0)).collect();
            death[0] = 0.0;
            let bd = BirthDeathRates::new(birth, death, true).unwrap();
            let k = wasserstein_criterion(&bd).unwrap();
            assert!(k.value <= 0.0, "seed {seed} gave K = {}", k.value);
        }
    }

    #[test]
    fn monotone_rates_with_flat_tails_curve_to_exactly_zero() {
        // up-rates non-increasing, down-rates non-decreasing, both
        // eventually constant: every scanned difference is >= 0 and some
        // are exactly 0
        let birth = vec![2.0, 2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        let death = vec![0.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0, 2.0];
        let bd = BirthDeathRates::new(birth, death, true).unwrap();
        let rho = gamma_criterion(&bd).unwrap();
        assert_eq!(rho.value, 0.0);
        assert!(rho.satisfied);
    }

    #[test]
    fn scan_windows_respect_the_boundary_margin() {
        // the stored top up-rate of a truncated chain is a fiction of the
        // cutoff; a wide enough margin must exclude it
        let mut birth = vec![1.0; 12];
        birth[9] = 50.0; // would dominate the scan if reached
        let death: Vec<f64> = (0..12).map(|x| if x == 0 { 0.0 } else { 2.0 }).collect();
        let bd = BirthDeathRates::new(birth.clone(), death.clone(), true).unwrap();
        let near = wasserstein_criterion(&bd).unwrap();
        assert!(near.value < -40.0); // margin 2 still reaches x = 9

        let wide = BirthDeathRates::new(birth, death, true)
            .unwrap()
            .with_boundary_margin(4);
        let far = wasserstein_criterion(&wide).unwrap();
        assert_eq!(far.value, 0.0);

        let tiny = BirthDeathRates::new(vec![1.0, 1.0, 1.0], vec![0.0, 1.0, 1.0], true)
            .unwrap()
            .with_boundary_margin(2);
        assert!(gamma_criterion(&tiny).is_err());
    }

    #[test]
    fn gamma2_gap_is_zero_for_constants_and_nonnegative_when_certified() {
        let chains = [
            BirthDeathRates::mm1(1.0, 2.0, 30).unwrap(),
            BirthDeathRates::ehrenfest(12, 0.4, 0.7).unwrap(),
        ];
        for bd in &chains {
            let rates = bd.to_general();
            let n = rates.n_states();
            let rho = gamma_criterion(bd).unwrap();
            assert!(rho.satisfied);

            let c = StateFunction::constant(n, 4.0).unwrap();
            let gap = gamma2_gap(&rates, &c, rho.value).unwrap();
            assert_eq!(gap.sup_norm(), 0.0);

            let mut rng = ChaCha12Rng::seed_from_u64(31);
            for _ in 0..100 {
                let f = StateFunction::from_fn(n, |_| rng.random_range(-1.0..1.0)).unwrap();
                let gap = gamma2_gap(&rates, &f, rho.value).unwrap();
                let interior_min = (1..n - 1)
                    .map(|x| gap[x])
                    .fold(f64::INFINITY, f64::min);
                assert!(
                    interior_min >= tolerances::GAMMA2_FLOOR,
                    "interior gap {interior_min} on a certified chain"
                );
            }
        }
    }

    #[test]
    fn preset_boundary_steps_are_steep_enough_for_the_full_range() {
        // both presets strengthen the criterion at the reflecting ends, so
        // the pointwise inequality extends to every state
        let chains = [
            BirthDeathRates::mm1(1.0, 2.0, 20).unwrap(),
            BirthDeathRates::ehrenfest(10, 0.5, 0.5).unwrap(),
        ];
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        for bd in &chains {
            let rates = bd.to_general();
            let n = rates.n_states();
            let rho = gamma_criterion(bd).unwrap().value;
            for _ in 0..40 {
                let f = StateFunction::from_fn(n, |_| rng.random_range(-1.0..1.0)).unwrap();
                let gap = gamma2_gap(&rates, &f, rho).unwrap();
                let min = (0..n).map(|x| gap[x]).fold(f64::INFINITY, f64::min);
                assert!(min >= tolerances::GAMMA2_FLOOR);
            }
        }
    }

    #[test]
    fn transport_distance_matches_hand_examples() {
        let d = Metric::unit();
        let delta0 = [1.0, 0.0, 0.0, 0.0];
        let delta3 = [0.0, 0.0, 0.0, 1.0];
        assert_abs_diff_eq!(w1_distance(&delta0, &delta3, &d).unwrap(), 3.0, epsilon = 1e-15);

        let split = [0.5, 0.0, 0.5];
        let point = [0.0, 1.0, 0.0];
        assert_abs_diff_eq!(w1_distance(&split, &point, &Metric::unit()).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(w1_distance(&split, &split, &Metric::unit()).unwrap(), 0.0);

        let weighted = Metric::weighted(vec![0.5, 2.0, 1.25]).unwrap();
        let a = [1.0, 0.0, 0.0, 0.0];
        let b = [0.0, 0.0, 0.0, 1.0];
        assert_abs_diff_eq!(w1_distance(&a, &b, &weighted).unwrap(), 3.75, epsilon = 1e-15);

        let ragged = [0.7, 0.2, 0.0];
        assert!(matches!(
            w1_distance(&ragged, &point, &Metric::unit()),
            Err(Error::NotNormalized { .. })
        ));
    }

    // the enumeration oracle lives next to the harness check that runs it
    // at scale; here it audits the formula on fresh draws
    use crate::verify::exhaustive_transport_cost as min_cost_transport;

    #[test]
    fn transport_distance_matches_flow_oracle_on_small_supports() {
        let mut rng = ChaCha12Rng::seed_from_u64(123);
        for _ in 0..200 {
            let n = rng.random_range(4..10usize);
            let weights: Vec<f64> = (0..n - 1).map(|_| rng.random_range(0.3..2.0)).collect();
            let d = if rng.random::<bool>() {
                Metric::unit()
            } else {
                Metric::weighted(weights).unwrap()
            };
            let mut mu = vec![0.0; n];
            let mut nu = vec![0.0; n];
            for _ in 0..rng.random_range(1..=5) {
                mu[rng.random_range(0..n)] += rng.random_range(0.1..1.0);
            }
            for _ in 0..rng.random_range(1..=5) {
                nu[rng.random_range(0..n)] += rng.random_range(0.1..1.0);
            }
            let mu_sum: f64 = mu.iter().sum();
            let nu_sum: f64 = nu.iter().sum();
            mu.iter_mut().for_each(|v| *v /= mu_sum);
            nu.iter_mut().for_each(|v| *v /= nu_sum);

            let fast = w1_distance(&mu, &nu, &d).unwrap();
            let slow = min_cost_transport(&mu, &nu, &d);
            assert_abs_diff_eq!(fast, slow, epsilon = tolerances::W1_AGREEMENT);
        }
    }

    #[test]
    fn transport_distance_is_a_metric() {
        let mut rng = ChaCha12Rng::seed_from_u64(9001);
        let d = Metric::unit();
        for _ in 0..50 {
            let n = rng.random_range(3..8usize);
            let draw = |rng: &mut ChaCha12Rng| -> Vec<f64> {
                let mut p: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
                let s: f64 = p.iter().sum();
                p.iter_mut().for_each(|v| *v /= s);
                p
            };
            let a = draw(&mut rng);
            let b = draw(&mut rng);
            let c = draw(&mut rng);
            let ab = w1_distance(&a, &b, &d).unwrap();
            let ba = w1_distance(&b, &a, &d).unwrap();
            let ac = w1_distance(&a, &c, &d).unwrap();
            let cb = w1_distance(&c, &b, &d).unwrap();
            assert_abs_diff_eq!(ab, ba, epsilon = 1e-12);
            assert!(ab <= ac + cb + 1e-12);
            assert_eq!(w1_distance(&a, &a, &d).unwrap(), 0.0);
        }
    }

    #[test]
    fn dual_gap_is_nonnegative_and_identity_attains_dominated_pairs() {
        let d = Metric::unit();
        // nu stochastically dominates mu, so the identity achieves the sup
        let mu = [0.5, 0.3, 0.2, 0.0];
        let nu = [0.1, 0.2, 0.3, 0.4];
        let id = StateFunction::identity(4);
        let gap = kantorovich_dual_gap(&mu, &nu, &d, &[id]).unwrap();
        assert!(gap.abs() <= 1e-12);

        let same = kantorovich_dual_gap(&mu, &mu, &d, &[StateFunction::identity(4)]).unwrap();
        assert_eq!(same, 0.0);

        let mut rng = ChaCha12Rng::seed_from_u64(55);
        for _ in 0..30 {
            let n = rng.random_range(3..9usize);
            let draw = |rng: &mut ChaCha12Rng| -> Vec<f64> {
                let mut p: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
                let s: f64 = p.iter().sum();
                p.iter_mut().for_each(|v| *v /= s);
                p
            };
            let mu = draw(&mut rng);
            let nu = draw(&mut rng);
            let small: Vec<StateFunction> = (0..5)
                .map(|_| StateFunction::from_fn(n, |_| rng.random_range(-1.0..1.0)).unwrap())
                .collect();
            let mut large = small.clone();
            for _ in 0..195 {
                large.push(StateFunction::from_fn(n, |_| rng.random_range(-1.0..1.0)).unwrap());
            }
            let w = w1_distance(&mu, &nu, &d).unwrap();
            let gap_small = kantorovich_dual_gap(&mu, &nu, &d, &small).unwrap();
            let gap_large = kantorovich_dual_gap(&mu, &nu, &d, &large).unwrap();
            assert!(gap_small >= tolerances::DUAL_GAP_FLOOR);
            assert!(gap_large >= tolerances::DUAL_GAP_FLOOR);
            assert!(gap_small <= w + 1e-12);
            // a larger family can only tighten the dual side
            assert!(gap_large <= gap_small + 1e-15);
        }
    }

    #[test]
    fn two_state_contraction_rate_is_the_rate_sum() {
        let space = StateSpace::new(1, false).unwrap();
        let rates =
            GeneralRates::from_entries(space, &[(0, 1, 0.7), (1, 0, 1.4)]).unwrap();
        let est = wasserstein_curvature_estimate(
            &rates,
            &Metric::unit(),
            &[0.1, 0.5, 1.0, 2.0],
            &cfg(),
        )
        .unwrap();
        assert_eq!(est.direction, EstimateDirection::Exact);
        for v in &est.values {
            assert_abs_diff_eq!(*v, 2.1, epsilon = 1e-9);
        }
    }

    #[test]
    fn adjacent_pair_reduction_agrees_with_all_pairs() {
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        for n in [5usize, 9, 12] {
            let mut birth: Vec<f64> = (0..n).map(|_| rng.random_range(0.3..2.0)).collect();
            let mut death: Vec<f64> = (0..n).map(|_| rng.random_range(0.3..2.0)).collect();
            birth[n - 1] = 0.0;
            death[0] = 0.0;
            let bd = BirthDeathRates::new(birth, death, false).unwrap();
            let rates = bd.to_general();
            let weights: Vec<f64> = (0..n - 1).map(|_| rng.random_range(0.5..1.5)).collect();
            let d = Metric::weighted(weights).unwrap();
            for t in [0.3, 1.1] {
                let kernel = transition_matrix(&rates, t, &cfg()).unwrap();
                let mut adjacent: f64 = 0.0;
                for x in 0..n - 1 {
                    let w = w1_distance(kernel.row(x), kernel.row(x + 1), &d).unwrap();
                    adjacent = adjacent.max(w / d.edge(x));
                }
                let mut all_pairs: f64 = 0.0;
                for x in 0..n {
                    for y in x + 1..n {
                        let w = w1_distance(kernel.row(x), kernel.row(y), &d).unwrap();
                        all_pairs = all_pairs.max(w / d.distance(x, y));
                    }
                }
                assert_abs_diff_eq!(adjacent, all_pairs, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn frozen_chain_has_zero_contraction_rate() {
        let space = StateSpace::new(3, false).unwrap();
        let frozen = GeneralRates::from_entries(space, &[]).unwrap();
        let est =
            wasserstein_curvature_estimate(&frozen, &Metric::unit(), &[0.5, 1.0], &cfg()).unwrap();
        for v in &est.values {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn criterion_sandwiches_estimate_for_both_kinds() {
        let chains = [
            BirthDeathRates::ehrenfest(10, 0.5, 0.5).unwrap(),
            BirthDeathRates::mm1(1.0, 2.0, 25).unwrap(),
            BirthDeathRates::new(
                vec![2.5, 1.9, 1.3, 0.8, 0.4, 0.0],
                vec![0.0, 0.6, 1.1, 1.7, 2.4, 3.0],
                false,
            )
            .unwrap(),
        ];
        let grid = [0.1, 0.5, 1.0, 2.0];
        for bd in &chains {
            let rates = bd.to_general();
            let k_cert = wasserstein_criterion(bd).unwrap();
            let k_est =
                wasserstein_curvature_estimate(&rates, &Metric::unit(), &grid, &cfg()).unwrap();
            for &k_t in &k_est.values {
                assert!(
                    k_cert.value <= k_t + tolerances::CONTRACTION_SLACK,
                    "K = {} exceeds K_t = {k_t}",
                    k_cert.value
                );
            }

            let rho_cert = gamma_criterion(bd).unwrap();
            if rho_cert.satisfied {
                let fns = default_test_functions(rates.n_states(), 10, 99);
                let rho_est = gamma_curvature_estimate(&rates, &grid, &fns, &cfg()).unwrap();
                assert_eq!(rho_est.direction, EstimateDirection::FromAbove);
                for &rho_t in &rho_est.values {
                    assert!(
                        rho_cert.value <= rho_t + tolerances::CONTRACTION_SLACK,
                        "rho = {} exceeds rho_t = {rho_t}",
                        rho_cert.value
                    );
                }
            }
        }
    }

    #[test]
    fn gamma_estimate_is_stable_in_the_short_time_limit() {
        let urn = BirthDeathRates::ehrenfest(10, 0.5, 0.5).unwrap().to_general();
        let fns = default_test_functions(11, 10, 7);
        let early =
            gamma_curvature_estimate(&urn, &[1e-4, 1e-3], &fns, &cfg()).unwrap();
        assert!((early.values[0] - early.values[1]).abs() <= 0.1);
    }

    #[test]
    fn covariance_bound_holds_exactly_where_proven() {
        let queue = BirthDeathRates::mm1(1.0, 2.0, 40).unwrap();
        let rates = queue.to_general();
        let cert = gamma_criterion(&queue).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(2024);
        for _ in 0..50 {
            let f = StateFunction::from_fn(41, |_| rng.random_range(-1.0..1.0)).unwrap();
            let (lhs, rhs) = covariance_check(&rates, 5, &f, &f, 0.8, &cert, &cfg()).unwrap();
            assert!(lhs >= -1e-10); // variance, up to row-deficit noise
            assert!(lhs <= rhs + tolerances::COVARIANCE_SLACK);
        }

        // kernel rows carry a small series-truncation deficit, so the
        // constant case is zero only up to deficit times observable size
        let c = StateFunction::constant(41, 3.0).unwrap();
        let g = StateFunction::identity(41);
        let (lhs, rhs) = covariance_check(&rates, 5, &c, &g, 0.8, &cert, &cfg()).unwrap();
        assert_abs_diff_eq!(lhs, 0.0, epsilon = 1e-10);
        assert_eq!(rhs, 0.0);

        let (lhs0, rhs0) = covariance_check(&rates, 5, &g, &g, 0.0, &cert, &cfg()).unwrap();
        assert_eq!(lhs0, 0.0);
        assert_eq!(rhs0, 0.0);
    }

    #[test]
    fn covariance_check_rejects_wrong_certificates() {
        let queue = BirthDeathRates::mm1(1.0, 2.0, 10).unwrap();
        let rates = queue.to_general();
        let f = StateFunction::identity(11);
        let wrong_kind = wasserstein_criterion(&queue).unwrap();
        assert!(matches!(
            covariance_check(&rates, 0, &f, &f, 1.0, &wrong_kind, &cfg()),
            Err(Error::InvalidCertificate(_))
        ));
        let invalid = CurvatureCertificate::gamma_assumed(-0.5);
        assert!(matches!(
            covariance_check(&rates, 0, &f, &f, 1.0, &invalid, &cfg()),
            Err(Error::InvalidCertificate(_))
        ));
    }

    #[test]
    fn results_serialize_with_stable_field_names() {
        let cert = CurvatureCertificate {
            kind: CurvatureKind::Gamma,
            value: 0.5,
            satisfied: true,
            argmin: Some(1),
        };
        let text = serde_json::to_string(&cert).unwrap();
        assert!(text.contains("\"kind\":\"gamma\""));
        assert!(text.contains("\"valid\":true"));
        assert!(text.contains("\"argmin\":1"));

        let est = CurvatureEstimate {
            kind: CurvatureKind::Wasserstein,
            t_grid: vec![0.5, 1.0],
            values: vec![1.0, 1.0],
            direction: EstimateDirection::Exact,
        };
        let text = serde_json::to_string(&est).unwrap();
        assert!(text.contains("\"direction\":\"exact\""));
        let back: CurvatureEstimate = serde_json::from_str(&text).unwrap();
        assert_eq!(back.values, est.values);
    }

    #[test]
    fn estimate_grids_are_validated() {
        let urn = BirthDeathRates::ehrenfest(4, 0.5, 0.5).unwrap().to_general();
        let d = Metric::unit();
        assert!(wasserstein_curvature_estimate(&urn, &d, &[], &cfg()).is_err());
        assert!(wasserstein_curvature_estimate(&urn, &d, &[0.0, 1.0], &cfg()).is_err());
        assert!(wasserstein_curvature_estimate(&urn, &d, &[1.0, 0.5], &cfg()).is_err());
        let constant = StateFunction::constant(5, 1.0).unwrap();
        assert!(gamma_curvature_estimate(&urn, &[1.0], &[constant], &cfg()).is_err());
    }
}
