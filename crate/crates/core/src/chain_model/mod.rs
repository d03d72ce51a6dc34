//! Chain data model: state spaces, metrics, rates, and the local operators
//! built from them.
//!
//! The generator of a conservative jump chain acts on a function `f` as
//!
//! ```text
//! L f(x) = sum_y Q(x, y) (f(y) - f(x))
//! ```
//!
//! and carries two derived quadratic forms used throughout the crate: the
//! carre du champ
//!
//! ```text
//! Gamma(f, g)(x) = (1/2) sum_y Q(x, y) (f(y) - f(x)) (g(y) - g(x))
//! ```
//!
//! and its iterate `Gamma_2 f = (1/2) (L Gamma(f) - 2 Gamma(f, L f))`.
//! `Gamma(f) = Gamma(f, f)` is nonnegative; `Gamma_2` enters the pointwise
//! curvature inequality the criteria in [`crate::curvature`] certify.
//!
//! Everything here is exact finite-dimensional arithmetic; no semigroup or
//! sampling machinery is involved.

mod function;
mod io;
mod metric;
mod rates;

pub use function::StateFunction;
pub use io::{ChainSpec, ExplicitSpec, MetricSpec, PresetSpec};
pub use metric::Metric;
pub use rates::{BirthDeathRates, GeneralRates, StateSpace, DEFAULT_BOUNDARY_MARGIN};

use crate::error::{Error, Result};
use crate::tolerances;

fn check_dims(rates: &GeneralRates, f: &StateFunction) -> Result<()> {
    if f.len() != rates.n_states() {
        return Err(Error::DimensionMismatch {
            expected: rates.n_states(),
            found: f.len(),
        });
    }
    Ok(())
}

/// Applies the generator: `L f(x) = sum_y Q(x, y) (f(y) - f(x))`.
pub fn generator_apply(rates: &GeneralRates, f: &StateFunction) -> Result<StateFunction> {
    check_dims(rates, f)?;
    let values = (0..rates.n_states())
        .map(|x| {
            rates
                .row(x)
                .iter()
                .map(|&(y, q)| q * (f[y] - f[x]))
                .sum()
        })
        .collect();
    Ok(StateFunction::from_values_unchecked(values))
}

/// The carre du champ `Gamma(f, g)`, the symmetric bilinear form measuring
/// how much the generator fails the product rule on `f * g`.
pub fn carre_du_champ(
    rates: &GeneralRates,
    f: &StateFunction,
    g: &StateFunction,
) -> Result<StateFunction> {
    check_dims(rates, f)?;
    check_dims(rates, g)?;
    let values = (0..rates.n_states())
        .map(|x| {
            0.5 * rates
                .row(x)
                .iter()
                .map(|&(y, q)| q * (f[y] - f[x]) * (g[y] - g[x]))
                .sum::<f64>()
        })
        .collect();
    Ok(StateFunction::from_values_unchecked(values))
}

/// The quadratic form `Gamma(f) = Gamma(f, f)`, pointwise nonnegative.
pub fn gamma(rates: &GeneralRates, f: &StateFunction) -> Result<StateFunction> {
    carre_du_champ(rates, f, f)
}

/// The iterated form `Gamma_2 f = (1/2) L Gamma(f) - Gamma(f, L f)`.
pub fn gamma2(rates: &GeneralRates, f: &StateFunction) -> Result<StateFunction> {
    let gf = gamma(rates, f)?;
    let lf = generator_apply(rates, f)?;
    let l_gf = generator_apply(rates, &gf)?;
    let cross = carre_du_champ(rates, f, &lf)?;
    l_gf.zip_map(&cross, |a, b| 0.5 * a - b)
}

/// The Lipschitz seminorm of `f` with respect to a path metric:
/// `sup_{x != y} |f(x) - f(y)| / d(x, y)`.
///
/// On a path metric the supremum is attained on an adjacent pair, since
/// any longer difference telescopes through intermediate states, so only
/// the `n - 1` edges are examined.
pub fn lipschitz_seminorm(f: &StateFunction, d: &Metric) -> Result<f64> {
    d.check_states(f.len())?;
    Ok((0..f.len().saturating_sub(1))
        .map(|x| (f[x + 1] - f[x]).abs() / d.edge(x))
        .fold(0.0, f64::max))
}

/// The largest metric length of any jump the generator can make.
pub fn jump_bound(rates: &GeneralRates, d: &Metric) -> Result<f64> {
    d.check_states(rates.n_states())?;
    let mut bound: f64 = 0.0;
    for x in 0..rates.n_states() {
        for &(y, q) in rates.row(x) {
            if q > 0.0 {
                bound = bound.max(d.distance(x, y));
            }
        }
    }
    Ok(bound)
}

/// The largest expected squared jump length per unit time:
/// `sup_x sum_y d(x, y)^2 Q(x, y)`.
pub fn squared_jump_bound(rates: &GeneralRates, d: &Metric) -> Result<f64> {
    d.check_states(rates.n_states())?;
    let mut bound: f64 = 0.0;
    for x in 0..rates.n_states() {
        let row_sum: f64 = rates
            .row(x)
            .iter()
            .map(|&(y, q)| {
                let dist = d.distance(x, y);
                dist * dist * q
            })
            .sum();
        bound = bound.max(row_sum);
    }
    Ok(bound)
}

/// The two jump statistics the deviation bounds consume, computed against
/// a metric. Both are finite on a finite space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainParams {
    /// Largest metric jump length.
    pub jump_bound: f64,
    /// Largest expected squared jump length per unit time.
    pub squared_jump_bound: f64,
}

impl ChainParams {
    pub fn of(rates: &GeneralRates, d: &Metric) -> Result<Self> {
        Ok(Self {
            jump_bound: jump_bound(rates, d)?,
            squared_jump_bound: squared_jump_bound(rates, d)?,
        })
    }
}

/// The unique stationary distribution of an irreducible birth-death chain,
/// from detailed balance: `pi(x+1) / pi(x) = birth(x) / death(x+1)`.
///
/// Ratios accumulate in log space so steep rate profiles cannot overflow,
/// and the result is checked against the global balance equations before
/// being returned.
pub fn stationary_distribution(rates: &BirthDeathRates) -> Result<Vec<f64>> {
    let n = rates.n_states();
    let mut log_pi = Vec::with_capacity(n);
    log_pi.push(0.0);
    for x in 0..rates.max_state() {
        let up = rates.effective_birth(x);
        let down = rates.death(x + 1);
        log_pi.push(log_pi[x] + up.ln() - down.ln());
    }
    let top = log_pi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut pi: Vec<f64> = log_pi.iter().map(|&l| (l - top).exp()).collect();
    let total: f64 = pi.iter().sum();
    if !total.is_finite() || total <= 0.0 {
        return Err(Error::InvalidParameter(
            "stationary weights did not normalize".into(),
        ));
    }
    for p in &mut pi {
        *p /= total;
    }

    let scale = rates
        .to_general()
        .max_exit_rate()
        .max(1.0);
    let mut residual: f64 = 0.0;
    for x in 0..n {
        let mut inflow = 0.0;
        if x > 0 {
            inflow += pi[x - 1] * rates.effective_birth(x - 1);
        }
        if x < n - 1 {
            inflow += pi[x + 1] * rates.death(x + 1);
        }
        residual = residual.max((inflow - pi[x] * rates.exit_rate(x)).abs());
    }
    if residual > tolerances::BALANCE_RESIDUAL * scale {
        return Err(Error::InvalidParameter(format!(
            "stationary distribution fails global balance: residual {residual:e}"
        )));
    }
    Ok(pi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    /// Dense generator matrix, the oracle route for every operator test.
    fn dense_q(rates: &GeneralRates) -> Vec<Vec<f64>> {
        let n = rates.n_states();
        let mut q = vec![vec![0.0; n]; n];
        for (x, q_row) in q.iter_mut().enumerate() {
            for &(y, rate) in rates.row(x) {
                q_row[y] = rate;
            }
            q_row[x] = -rates.exit_rate(x);
        }
        q
    }

    fn dense_apply(q: &[Vec<f64>], f: &[f64]) -> Vec<f64> {
        q.iter()
            .map(|row| row.iter().zip(f).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn random_general(seed: u64, n_states: usize) -> GeneralRates {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let space = StateSpace::new(n_states - 1, false).unwrap();
        let mut entries = Vec::new();
        for x in 0..n_states {
            for y in 0..n_states {
                if x != y && rng.random::<f64>() < 0.6 {
                    entries.push((x, y, rng.random_range(0.1..2.0)));
                }
            }
        }
        GeneralRates::from_entries(space, &entries).unwrap()
    }

    fn random_function(rng: &mut ChaCha12Rng, n: usize) -> StateFunction {
        StateFunction::from_fn(n, |_| rng.random_range(-1.0..1.0)).unwrap()
    }

    #[test]
    fn generator_matches_dense_matrix_product() {
        for seed in 0..5u64 {
            let rates = random_general(seed, 5);
            let q = dense_q(&rates);
            let mut rng = ChaCha12Rng::seed_from_u64(100 + seed);
            let f = random_function(&mut rng, 5);
            let fast = generator_apply(&rates, &f).unwrap();
            let slow = dense_apply(&q, f.values());
            for x in 0..5 {
                assert_abs_diff_eq!(fast[x], slow[x], epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn generator_kills_constants() {
        let rates = random_general(7, 6);
        let c = StateFunction::constant(6, 3.25).unwrap();
        let lc = generator_apply(&rates, &c).unwrap();
        assert_eq!(lc.sup_norm(), 0.0);
    }

    #[test]
    fn carre_du_champ_matches_product_rule_defect() {
        // Gamma(f, g) = (L(fg) - f Lg - g Lf) / 2, assembled from the
        // generator alone.
        for seed in 0..5u64 {
            let rates = random_general(20 + seed, 6);
            let mut rng = ChaCha12Rng::seed_from_u64(200 + seed);
            let f = random_function(&mut rng, 6);
            let g = random_function(&mut rng, 6);
            let fg = f.zip_map(&g, |a, b| a * b).unwrap();
            let l_fg = generator_apply(&rates, &fg).unwrap();
            let lf = generator_apply(&rates, &f).unwrap();
            let lg = generator_apply(&rates, &g).unwrap();
            let fast = carre_du_champ(&rates, &f, &g).unwrap();
            for x in 0..6 {
                let slow = 0.5 * (l_fg[x] - f[x] * lg[x] - g[x] * lf[x]);
                assert_abs_diff_eq!(fast[x], slow, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn carre_du_champ_is_bilinear_and_cauchy_schwarz() {
        let rates = random_general(3, 6);
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        for _ in 0..20 {
            let f = random_function(&mut rng, 6);
            let g = random_function(&mut rng, 6);
            let h = random_function(&mut rng, 6);
            let a = rng.random_range(-2.0..2.0);

            // Gamma(a f + h, g) = a Gamma(f, g) + Gamma(h, g)
            let combo = f.zip_map(&h, |x, y| a * x + y).unwrap();
            let lhs = carre_du_champ(&rates, &combo, &g).unwrap();
            let fg = carre_du_champ(&rates, &f, &g).unwrap();
            let hg = carre_du_champ(&rates, &h, &g).unwrap();
            for x in 0..6 {
                assert_abs_diff_eq!(lhs[x], a * fg[x] + hg[x], epsilon = 1e-12);
            }

            // Gamma(f, g)^2 <= Gamma(f) Gamma(g)
            let gf = gamma(&rates, &f).unwrap();
            let gg = gamma(&rates, &g).unwrap();
            for x in 0..6 {
                assert!(fg[x] * fg[x] <= gf[x] * gg[x] + 1e-12);
                assert!(gf[x] >= 0.0);
            }
        }
    }

    #[test]
    fn gamma_of_identity_on_queue_is_half_total_rate() {
        let queue = BirthDeathRates::mm1(1.0, 2.0, 10).unwrap();
        let rates = queue.to_general();
        let id = StateFunction::identity(11);
        let g = gamma(&rates, &id).unwrap();
        assert_abs_diff_eq!(g[0], 0.5, epsilon = 1e-15);
        for x in 1..10 {
            assert_abs_diff_eq!(g[x], 1.5, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(g[10], 1.0, epsilon = 1e-15); // top reflects
    }

    #[test]
    fn gamma2_matches_independent_dense_composition() {
        for seed in 0..5u64 {
            let rates = random_general(40 + seed, 6);
            let q = dense_q(&rates);
            let mut rng = ChaCha12Rng::seed_from_u64(300 + seed);
            let f = random_function(&mut rng, 6).into_values();

            // Dense route: everything from the matrix and raw sums.
            let n = f.len();
            let dense_gamma = |a: &[f64], b: &[f64]| -> Vec<f64> {
                (0..n)
                    .map(|x| {
                        0.5 * (0..n)
                            .filter(|&y| y != x)
                            .map(|y| q[x][y] * (a[y] - a[x]) * (b[y] - b[x]))
                            .sum::<f64>()
                    })
                    .collect()
            };
            let gf = dense_gamma(&f, &f);
            let lf = dense_apply(&q, &f);
            let l_gf = dense_apply(&q, &gf);
            let cross = dense_gamma(&f, &lf);
            let slow: Vec<f64> = (0..n).map(|x| 0.5 * l_gf[x] - cross[x]).collect();

            let fast = gamma2(&rates, &StateFunction::new(f).unwrap()).unwrap();
            for x in 0..n {
                assert_abs_diff_eq!(fast[x], slow[x], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn lipschitz_seminorm_matches_exhaustive_sup() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let weighted = Metric::weighted((0..7).map(|_| rng.random_range(0.2..2.0)).collect())
            .unwrap();
        for d in [Metric::unit(), weighted] {
            for _ in 0..20 {
                let f = random_function(&mut rng, 8);
                let fast = lipschitz_seminorm(&f, &d).unwrap();
                let mut slow: f64 = 0.0;
                for x in 0..8 {
                    for y in 0..8 {
                        if x != y {
                            slow = slow.max((f[x] - f[y]).abs() / d.distance(x, y));
                        }
                    }
                }
                assert_abs_diff_eq!(fast, slow, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn lipschitz_seminorm_of_constants_is_zero() {
        let c = StateFunction::constant(5, -2.0).unwrap();
        assert_eq!(lipschitz_seminorm(&c, &Metric::unit()).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn lipschitz_seminorm_is_a_seminorm(
            values in proptest::collection::vec(-10.0f64..10.0, 2..9),
            shift in -5.0f64..5.0,
            scale in -3.0f64..3.0,
        ) {
            let d = Metric::unit();
            let f = StateFunction::new(values.clone()).unwrap();
            let norm = lipschitz_seminorm(&f, &d).unwrap();

            // invariant under constant shifts
            let shifted = f.map(|v| v + shift).unwrap();
            prop_assert!((lipschitz_seminorm(&shifted, &d).unwrap() - norm).abs() <= 1e-12);

            // absolutely homogeneous
            let scaled = f.map(|v| scale * v).unwrap();
            prop_assert!(
                (lipschitz_seminorm(&scaled, &d).unwrap() - scale.abs() * norm).abs() <= 1e-9
            );

            // subadditive against a reversed copy
            let rev = StateFunction::new(values.iter().rev().cloned().collect()).unwrap();
            let sum = f.zip_map(&rev, |a, b| a + b).unwrap();
            let lhs = lipschitz_seminorm(&sum, &d).unwrap();
            let rhs = norm + lipschitz_seminorm(&rev, &d).unwrap();
            prop_assert!(lhs <= rhs + 1e-12);
        }
    }

    #[test]
    fn jump_statistics_on_presets() {
        let queue = BirthDeathRates::mm1(1.0, 2.0, 40).unwrap().to_general();
        let d = Metric::unit();
        assert_eq!(jump_bound(&queue, &d).unwrap(), 1.0);
        // interior states carry birth + death = 3, the top only death = 2
        assert_abs_diff_eq!(squared_jump_bound(&queue, &d).unwrap(), 3.0, epsilon = 1e-15);

        let urn = BirthDeathRates::ehrenfest(10, 0.5, 0.5).unwrap().to_general();
        assert_abs_diff_eq!(squared_jump_bound(&urn, &d).unwrap(), 5.0, epsilon = 1e-15);

        let params = ChainParams::of(&urn, &d).unwrap();
        assert_eq!(params.jump_bound, 1.0);
        assert_abs_diff_eq!(params.squared_jump_bound, 5.0, epsilon = 1e-15);
    }

    #[test]
    fn jump_statistics_respect_the_metric() {
        let space = StateSpace::new(2, false).unwrap();
        let rates =
            GeneralRates::from_entries(space, &[(0, 2, 0.5), (2, 0, 0.5), (1, 0, 1.0)]).unwrap();
        let d = Metric::weighted(vec![2.0, 3.0]).unwrap();
        assert_eq!(jump_bound(&rates, &d).unwrap(), 5.0);
        // state 0: 0.5 * 5^2 = 12.5; state 1: 1 * 2^2 = 4; state 2: 12.5
        assert_abs_diff_eq!(squared_jump_bound(&rates, &d).unwrap(), 12.5, epsilon = 1e-15);
    }

    #[test]
    fn stationary_distribution_of_queue_is_geometric() {
        let queue = BirthDeathRates::mm1(1.0, 2.0, 30).unwrap();
        let pi = stationary_distribution(&queue).unwrap();
        for x in 0..30 {
            assert_abs_diff_eq!(pi[x + 1] / pi[x], 0.5, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(pi.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn stationary_distribution_of_urn_is_binomial() {
        let urn = BirthDeathRates::ehrenfest(30, 0.5, 0.5).unwrap();
        let pi = stationary_distribution(&urn).unwrap();
        let mut binom = vec![1.0f64];
        for x in 0..30 {
            binom.push(binom[x] * (30 - x) as f64 / (x + 1) as f64);
        }
        let total: f64 = binom.iter().sum();
        for x in 0..=30 {
            assert_abs_diff_eq!(pi[x], binom[x] / total, epsilon = 1e-13);
        }
    }

    #[test]
    fn stationary_distribution_solves_global_balance_on_random_chains() {
        for seed in 0..10u64 {
            let mut rng = ChaCha12Rng::seed_from_u64(500 + seed);
            let n = rng.random_range(3..20usize);
            let mut birth: Vec<f64> = (0..=n).map(|_| rng.random_range(0.2..3.0)).collect();
            let mut death: Vec<f64> = (0..=n).map(|_| rng.random_range(0.2..3.0)).collect();
            birth[n] = 0.0;
            death[0] = 0.0;
            let bd = BirthDeathRates::new(birth, death, false).unwrap();
            let pi = stationary_distribution(&bd).unwrap();

            // oracle: dense left product pi Q against the full matrix
            let q = dense_q(&bd.to_general());
            let mut product = vec![0.0; n + 1];
            for (x, q_row) in q.iter().enumerate() {
                for (y, &rate) in q_row.iter().enumerate() {
                    product[y] += pi[x] * rate;
                }
            }
            for &column in &product {
                assert_abs_diff_eq!(column, 0.0, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn stationary_distribution_survives_steep_profiles() {
        // 400 states of supercritical drift would overflow a linear-space
        // product of ratios.
        let queue = BirthDeathRates::mm1(3.0, 1.0, 400).unwrap();
        let pi = stationary_distribution(&queue).unwrap();
        assert!(pi.iter().all(|p| p.is_finite()));
        assert_abs_diff_eq!(pi.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pi[399] / pi[400], 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        let rates = random_general(1, 5);
        let f = StateFunction::identity(4);
        assert!(matches!(
            generator_apply(&rates, &f),
            Err(Error::DimensionMismatch { .. })
        ));
        let d = Metric::weighted(vec![1.0, 1.0]).unwrap();
        assert!(lipschitz_seminorm(&StateFunction::identity(5), &d).is_err());
        assert!(jump_bound(&rates, &d).is_err());
    }
}
