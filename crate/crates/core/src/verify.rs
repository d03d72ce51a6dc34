//! The release gate: twelve checks that pit every certificate and bound in
//! the crate against an independent route to the same quantity.
//!
//! Independence is the organizing principle. Contraction certificates are
//! checked against exact semigroups, the transport formula against
//! exhaustive enumeration over coupling vertices, closed-form tail bounds
//! against exact stationary laws, Gaussian integrals, and seeded Monte
//! Carlo with exact binomial confidence bounds. A check never reuses the
//! code path it is auditing.
//!
//! Checks return structured [`CheckResult`]s instead of panicking so the
//! test suite and the command line front end can share them. Monte Carlo
//! comparisons follow the untested policy of
//! [`TailEstimate::verdicts`]: levels whose analytic bound sits below the
//! resolution of the path budget are reported, not asserted.
//!
//! `fault_scale` multiplies the analytic reference side of every
//! comparison. At the default 1.0 it is inert; any other value is an
//! injected fault that a healthy suite must detect, which is how the
//! harness checks itself.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::bounds::{
    contraction_integral, ehrenfest_prelimit_tail_bound, gamma_tail_bound, moment_growth_rate,
    multitime_tail_bound, optimized_tail_bound, ou_tail_bound, positive_curvature_tail_bound,
    DeviationBoundSpec, OptimizerConfig, RateVariant,
};
use crate::chain_model::{
    gamma, generator_apply, lipschitz_seminorm, squared_jump_bound, stationary_distribution,
    BirthDeathRates, Metric, StateFunction,
};
use crate::curvature::{
    covariance_check, gamma2_gap, gamma_criterion, w1_distance, wasserstein_criterion,
};
use crate::error::Result;
use crate::semigroup::{apply_semigroup, UniformizationConfig};
use crate::simulate::{
    ehrenfest_rescaled_tail, mm1_multisample_tail, monte_carlo_tail, ou_exact_tail,
    MultiLipschitzFn, TailEstimate, TailOptions, TailVerdict,
};
use crate::tolerances;

/// Knobs shared by every check.
#[derive(Debug, Clone, Copy)]
pub struct VerifyConfig {
    /// Path budget for the Monte Carlo checks.
    pub n_paths: u64,
    /// Master seed; every random object in the suite derives from it.
    pub seed: u64,
    /// Multiplier applied to analytic reference values before comparison.
    /// 1.0 verifies; anything else injects a fault the suite must catch.
    pub fault_scale: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            n_paths: 100_000,
            seed: 0,
            fault_scale: 1.0,
        }
    }
}

/// Outcome of one check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Every comparison the check wanted to make sat below the resolution
    /// of the sampling budget.
    Untested,
}

impl CheckStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::Untested => "untested",
        }
    }
}

/// One line of the verification report.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub status: CheckStatus,
    pub detail: String,
}

impl CheckResult {
    fn pass(name: &'static str, detail: String) -> Self {
        Self {
            name,
            status: CheckStatus::Pass,
            detail,
        }
    }

    fn fail(name: &'static str, detail: String) -> Self {
        Self {
            name,
            status: CheckStatus::Fail,
            detail,
        }
    }

    pub fn passed(&self) -> bool {
        self.status != CheckStatus::Fail
    }
}

/// Runs the whole suite in its canonical order.
pub fn run_all(cfg: &VerifyConfig) -> Result<Vec<CheckResult>> {
    Ok(vec![
        lipschitz_contraction_sweep(cfg)?,
        gamma_contraction_sweep(cfg)?,
        gamma2_gap_floor(cfg)?,
        transport_oracle_agreement(cfg)?,
        covariance_bound(cfg)?,
        ehrenfest_mc_tail(cfg)?,
        ehrenfest_stationary_tail(cfg)?,
        ou_gaussian_tail(cfg)?,
        fluid_limit_bounds(cfg)?,
        queue_multitime_tail(cfg)?,
        bound_consistency(cfg)?,
        queue_shift_identity(cfg)?,
    ])
}

/// True when no check failed; untested results do not count against a run.
pub fn all_passed(results: &[CheckResult]) -> bool {
    results.iter().all(CheckResult::passed)
}

const SWEEP_CHAINS: u64 = 20;
const SWEEP_FUNCTIONS: usize = 10;
const SWEEP_T_GRID: [f64; 4] = [0.1, 0.5, 1.0, 2.0];
const GAMMA2_FUNCTIONS: usize = 100;
const ORACLE_PAIRS: usize = 200;
const ORACLE_MAX_ATOMS: usize = 5;
const COVARIANCE_PAIRS: usize = 50;
const COVARIANCE_T_GRID: [f64; 2] = [0.5, 1.0];

fn check_rng(seed: u64, salt: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn random_function(rng: &mut ChaCha12Rng, n_states: usize) -> StateFunction {
    StateFunction::new((0..n_states).map(|_| rng.random_range(-1.0..1.0)).collect())
        .expect("finite values")
}

/// A finite birth-death chain with no structure beyond validity: up to 31
/// states, rates in [0.2, 3.0). Its criterion value is whatever it is,
/// negative included.
fn random_chain(seed: u64) -> Result<BirthDeathRates> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let n_states = rng.random_range(3..=31usize);
    let top = n_states - 1;
    let mut birth = vec![0.0; n_states];
    let mut death = vec![0.0; n_states];
    for b in birth.iter_mut().take(top) {
        *b = rng.random_range(0.2..3.0);
    }
    for d in death.iter_mut().skip(1) {
        *d = rng.random_range(0.2..3.0);
    }
    BirthDeathRates::new(birth, death, false)
}

/// A finite chain built to satisfy the increment criterion with a strictly
/// positive margin: births fall and deaths rise by at least `target + 0.05`
/// per step. The two boundary steps are steeper still, which is exactly
/// what the pointwise curvature identity needs at the reflecting ends.
fn random_curved_chain(seed: u64) -> Result<BirthDeathRates> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let n_states = rng.random_range(5..=21usize);
    let top = n_states - 1;
    let target = rng.random_range(0.0..0.6);
    let step = |rng: &mut ChaCha12Rng| rng.random_range(target + 0.05..target + 1.0);

    let mut death = vec![0.0; n_states];
    death[1] = target + 1.5;
    for x in 2..n_states {
        death[x] = death[x - 1] + step(&mut rng);
    }
    let mut birth = vec![0.0; n_states];
    birth[top - 1] = target + 1.5;
    for x in (0..top - 1).rev() {
        birth[x] = birth[x + 1] + step(&mut rng);
    }
    BirthDeathRates::new(birth, death, false)
}

/// Lipschitz seminorms contract at the certified exponential rate: 20
/// arbitrary chains, 10 random observables, 4 horizons.
pub fn lipschitz_contraction_sweep(cfg: &VerifyConfig) -> Result<CheckResult> {
    let name = "lipschitz-contraction-sweep";
    let ucfg = UniformizationConfig::default();
    let d = Metric::unit();
    let mut max_ratio: f64 = 0.0;
    let mut violations = 0usize;
    let mut first = String::new();
    for c in 0..SWEEP_CHAINS {
        let chain = random_chain(cfg.seed.wrapping_add(c))?;
        let k = wasserstein_criterion(&chain)?.value;
        let general = chain.to_general();
        let n = chain.n_states();
        let mut rng = check_rng(cfg.seed, 0x11 + c);
        for _ in 0..SWEEP_FUNCTIONS {
            let f = random_function(&mut rng, n);
            let lip0 = lipschitz_seminorm(&f, &d)?;
            if lip0 == 0.0 {
                continue;
            }
            for &t in &SWEEP_T_GRID {
                let ptf = apply_semigroup(&general, &f, t, &ucfg)?;
                let lipt = lipschitz_seminorm(&ptf, &d)?;
                let envelope = (-k * t).exp() * lip0;
                max_ratio = max_ratio.max(lipt / envelope);
                let allowed =
                    envelope * (1.0 + tolerances::CONTRACTION_SLACK) * cfg.fault_scale;
                if lipt > allowed {
                    violations += 1;
                    if first.is_empty() {
                        first = format!(
                            "chain {c} ({n} states), t = {t}: seminorm {lipt:.6e} above \
                             envelope {allowed:.6e}"
                        );
                    }
                }
            }
        }
    }
    Ok(if violations == 0 {
        CheckResult::pass(
            name,
            format!(
                "{SWEEP_CHAINS} chains x {SWEEP_FUNCTIONS} observables x {} horizons; \
                 worst seminorm ratio {max_ratio:.9} of the certified envelope",
                SWEEP_T_GRID.len()
            ),
        )
    } else {
        CheckResult::fail(name, format!("{violations} violations; first: {first}"))
    })
}

/// The pointwise commutation `sqrt(Gamma P_t f) <= e^{-rho t} P_t
/// sqrt(Gamma f)` on chains whose increments certify `rho`, at every state.
pub fn gamma_contraction_sweep(cfg: &VerifyConfig) -> Result<CheckResult> {
    let name = "gamma-contraction-sweep";
    let ucfg = UniformizationConfig::default();
    let mut max_ratio: f64 = 0.0;
    let mut violations = 0usize;
    let mut first = String::new();
    for c in 0..SWEEP_CHAINS {
        let chain = random_curved_chain(cfg.seed.wrapping_add(c))?;
        let cert = gamma_criterion(&chain)?;
        if !cert.satisfied {
            return Ok(CheckResult::fail(
                name,
                format!("chain {c} missed its own construction target {}", cert.value),
            ));
        }
        let rho = cert.value;
        let general = chain.to_general();
        let n = chain.n_states();
        let mut rng = check_rng(cfg.seed, 0x22 + c);
        for _ in 0..SWEEP_FUNCTIONS {
            let f = random_function(&mut rng, n);
            let sqrt_gf = gamma(&general, &f)?.map(f64::sqrt)?;
            for &t in &SWEEP_T_GRID {
                let ptf = apply_semigroup(&general, &f, t, &ucfg)?;
                let g_ptf = gamma(&general, &ptf)?;
                let pt_sqrt = apply_semigroup(&general, &sqrt_gf, t, &ucfg)?;
                let decay = (-rho * t).exp();
                for x in 0..n {
                    let lhs = g_ptf[x].sqrt();
                    let rhs = decay * pt_sqrt[x];
                    if rhs > 0.0 {
                        max_ratio = max_ratio.max(lhs / rhs);
                    }
                    if lhs > rhs * (1.0 + tolerances::CONTRACTION_SLACK) * cfg.fault_scale {
                        violations += 1;
                        if first.is_empty() {
                            first = format!(
                                "chain {c}, t = {t}, state {x}: {lhs:.6e} above {rhs:.6e}"
                            );
                        }
                    }
                }
            }
        }
    }
    Ok(if violations == 0 {
        CheckResult::pass(
            name,
            format!(
                "{SWEEP_CHAINS} certified chains, pointwise at every state; worst ratio \
                 {max_ratio:.9} of the commutation envelope"
            ),
        )
    } else {
        CheckResult::fail(name, format!("{violations} violations; first: {first}"))
    })
}

/// The local curvature gap stays above its floor for 100 random
/// observables per certified chain, boundary states included.
pub fn gamma2_gap_floor(cfg: &VerifyConfig) -> Result<CheckResult> {
    let name = "gamma2-gap-floor";
    let mut min_gap = f64::INFINITY;
    for c in 0..SWEEP_CHAINS {
        let chain = random_curved_chain(cfg.seed.wrapping_add(c))?;
        let rho = gamma_criterion(&chain)?.value;
        let general = chain.to_general();
        let mut rng = check_rng(cfg.seed, 0x33 + c);
        for _ in 0..GAMMA2_FUNCTIONS {
            let f = random_function(&mut rng, chain.n_states());
            let gap = gamma2_gap(&general, &f, rho)?;
            for x in 0..gap.len() {
                min_gap = min_gap.min(gap[x]);
            }
        }
    }
    Ok(if min_gap >= tolerances::GAMMA2_FLOOR {
        CheckResult::pass(
            name,
            format!(
                "{SWEEP_CHAINS} chains x {GAMMA2_FUNCTIONS} observables; minimum pointwise \
                 gap {min_gap:.3e}"
            ),
        )
    } else {
        CheckResult::fail(
            name,
            format!(
                "minimum gap {min_gap:.3e} below floor {:.1e}",
                tolerances::GAMMA2_FLOOR
            ),
        )
    })
}

/// The cumulative-difference transport distance equals the exhaustive
/// minimum over coupling vertices on 200 random sparse pairs.
pub fn transport_oracle_agreement(cfg: &VerifyConfig) -> Result<CheckResult> {
    let name = "transport-oracle-agreement";
    let mut rng = check_rng(cfg.seed, 0x44);
    let mut max_dev: f64 = 0.0;
    let mut violations = 0usize;
    let mut first = String::new();
    for pair in 0..ORACLE_PAIRS {
        let n = rng.random_range(4..10usize);
        let d = if rng.random::<bool>() {
            Metric::unit()
        } else {
            let weights = (0..n - 1).map(|_| rng.random_range(0.3..2.0)).collect();
            Metric::weighted(weights)?
        };
        let sparse = |rng: &mut ChaCha12Rng| -> Vec<f64> {
            let mut p = vec![0.0; n];
            for _ in 0..rng.random_range(1..=ORACLE_MAX_ATOMS) {
                p[rng.random_range(0..n)] += rng.random_range(0.1..1.0);
            }
            let total: f64 = p.iter().sum();
            p.iter_mut().for_each(|v| *v /= total);
            p
        };
        let mu = sparse(&mut rng);
        let nu = sparse(&mut rng);
        let fast = w1_distance(&mu, &nu, &d)? * cfg.fault_scale;
        let slow = exhaustive_transport_cost(&mu, &nu, &d);
        let dev = (fast - slow).abs();
        max_dev = max_dev.max(dev);
        if dev > tolerances::W1_AGREEMENT {
            violations += 1;
            if first.is_empty() {
                first = format!("pair {pair}: formula {fast:.9e} vs oracle {slow:.9e}");
            }
        }
    }
    Ok(if violations == 0 {
        CheckResult::pass(
            name,
            format!("{ORACLE_PAIRS} sparse pairs; largest deviation {max_dev:.3e}"),
        )
    } else {
        CheckResult::fail(name, format!("{violations} violations; first: {first}"))
    })
}

/// The covariance inequality with exact semigroups on both sides, on a
/// queue and an urn.
pub fn covariance_bound(cfg: &VerifyConfig) -> Result<CheckResult> {
    let name = "covariance-bound";
    let ucfg = UniformizationConfig::default();
    let scenarios: [(&str, BirthDeathRates, usize); 2] = [
        ("queue", BirthDeathRates::mm1(1.0, 2.0, 60)?, 5),
        ("urn", BirthDeathRates::ehrenfest(20, 0.5, 0.5)?, 10),
    ];
    let mut worst_excess = f64::NEG_INFINITY;
    let mut violations = 0usize;
    let mut first = String::new();
    for (salt, (label, chain, x0)) in scenarios.into_iter().enumerate() {
        let cert = gamma_criterion(&chain)?;
        let general = chain.to_general();
        let n = chain.n_states();
        let mut rng = check_rng(cfg.seed, 0x55 + salt as u64);
        for _ in 0..COVARIANCE_PAIRS {
            let g1 = random_function(&mut rng, n);
            let g2 = random_function(&mut rng, n);
            for &t in &COVARIANCE_T_GRID {
                let (lhs, rhs) = covariance_check(&general, x0, &g1, &g2, t, &cert, &ucfg)?;
                let excess = lhs - rhs * cfg.fault_scale;
                worst_excess = worst_excess.max(excess);
                if excess > tolerances::COVARIANCE_SLACK {
                    violations += 1;
                    if first.is_empty() {
                        first = format!(
                            "{label}, t = {t}: covariance {lhs:.6e} above bound {rhs:.6e}"
                        );
                    }
                }
            }
        }
    }
    Ok(if violations == 0 {
        CheckResult::pass(
            name,
            format!(
                "2 chains x {COVARIANCE_PAIRS} pairs x 2 horizons; worst excess over the \
                 bound {worst_excess:.3e}"
            ),
        )
    } else {
        CheckResult::fail(name, format!("{violations} violations; first: {first}"))
    })
}

struct TailSummary {
    failures: usize,
    untested: usize,
    total: usize,
    first_failure: String,
}

fn summarize_tail(label: &str, est: &TailEstimate, analytic: &[f64]) -> Result<TailSummary> {
    let verdicts = est.verdicts(analytic)?;
    let mut summary = TailSummary {
        failures: 0,
        untested: 0,
        total: verdicts.len(),
        first_failure: String::new(),
    };
    for (i, v) in verdicts.iter().enumerate() {
        match v {
            TailVerdict::Fail => {
                summary.failures += 1;
                if summary.first_failure.is_empty() {
                    summary.first_failure = format!(
                        "{label}: y = {}: confidence bound {:.4e} above analytic {:.4e}",
                        est.y_grid()[i],
                        est.upper_bounds()[i],
                        analytic[i]
                    );
                }
            }
            TailVerdict::Untested => summary.untested += 1,
            TailVerdict::Pass => {}
        }
    }
    Ok(summary)
}

/// Monte Carlo tails of the urn observable stay below the
/// positive-curvature deviation bound at 99% confidence.
pub fn ehrenfest_mc_tail(cfg: &VerifyConfig) -> Result<CheckResult> {
    let name = "ehrenfest-mc-tail";
    let chain = BirthDeathRates::ehrenfest(50, 0.5, 0.5)?;
    let general = chain.to_general();
    let k = wasserstein_criterion(&chain)?.value;
    let v2 = squared_jump_bound(&general, &Metric::unit())?;
    let mut spec = DeviationBoundSpec::new(1.0, 1.0);
    spec.wasserstein_k = Some(k);
    spec.squared_jump_bound = Some(v2);
    let y_grid = [2.0, 4.0, 6.0, 8.0];
    let analytic = y_grid
        .iter()
        .map(|&y| Ok(positive_curvature_tail_bound(y, &spec, false)? * cfg.fault_scale))
        .collect::<Result<Vec<f64>>>()?;
    let f = StateFunction::identity(chain.n_states());
    let est = monte_carlo_tail(
        &general,
        25,
        &f,
        1.0,
        &y_grid,
        cfg.n_paths,
        0.99,
        cfg.seed.wrapping_add(0x66),
        &TailOptions::default(),
    )?;
    let s = summarize_tail("urn n = 50", &est, &analytic)?;
    Ok(if s.failures > 0 {
        CheckResult::fail(name, s.first_failure)
    } else if s.untested == s.total {
        CheckResult {
            name,
            status: CheckStatus::Untested,
            detail: format!("all {} levels below the resolution of {} paths", s.total, cfg.n_paths),
        }
    } else {
        CheckResult::pass(
            name,
            format!(
                "{} of {} levels tested at {} paths, all below the bound",
                s.total - s.untested,
                s.total,
                cfg.n_paths
            ),
        )
    })
}

/// The exact invariant-law tail of the urn observable stays below the
/// stationary deviation bound. No sampling anywhere.
pub fn ehrenfest_stationary_tail(cfg: &VerifyConfig) -> Result<CheckResult> {
    let name = "ehrenfest-stationary-tail";
    let chain = BirthDeathRates::ehrenfest(30, 0.5, 0.5)?;
    let general = chain.to_general();
    let pi = stationary_distribution(&chain)?;
    let mean: f64 = pi.iter().enumerate().map(|(x, p)| x as f64 * p).sum();
    let k = wasserstein_criterion(&chain)?.value;
    let v2 = squared_jump_bound(&general, &Metric::unit())?;
    let mut spec = DeviationBoundSpec::new(f64::INFINITY, 1.0);
    spec.wasserstein_k = Some(k);
    spec.squared_jump_bound = Some(v2);
    let mut min_margin = f64::INFINITY;
    let mut violations = 0usize;
    let mut first = String::new();
    for level in 1..=8usize {
        let y = level as f64;
        let exact: f64 = pi
            .iter()
            .enumerate()
            .filter(|&(x, _)| x as f64 - mean >= y)
            .map(|(_, p)| p)
            .sum();
        let bound = positive_curvature_tail_bound(y, &spec, true)? * cfg.fault_scale;
        min_margin = min_margin.min(bound - exact);
        if exact > bound {
            violations += 1;
            if first.is_empty() {
                first = format!("y = {y}: exact tail {exact:.6e} above bound {bound:.6e}");
            }
        }
    }
    Ok(if violations == 0 {
        CheckResult::pass(
            name,
            format!("8 levels against the exact invariant law; smallest margin {min_margin:.3e}"),
        )
    } else {
        CheckResult::fail(name, format!("{violations} violations; first: {first}"))
    })
}

/// The Gaussian tail of the limiting diffusion stays below its closed-form
/// bound on a 20-point grid at three horizons, and the bound coincides
/// with the direct Gaussian exponent when the rate product is one quarter.
pub fn ou_gaussian_tail(cfg: &VerifyConfig) -> Result<CheckResult> {
    let name = "ou-gaussian-tail";
    let (lambda, nu) = (0.5, 0.5);
    let mut min_margin = f64::INFINITY;
    let mut max_identity_gap: f64 = 0.0;
    let mut violations = 0usize;
    let mut first = String::new();
    for &t in &[0.5, 1.0, f64::INFINITY] {
        let shrink = if t.is_infinite() { 1.0 } else { -(-2.0 * t).exp_m1() };
        let sigma2 = lambda * nu * shrink;
        for i in 1..=20 {
            let y = 0.1 * i as f64;
            let tail = ou_exact_tail(0.0, lambda, nu, t, 1.0, y)?;
            let bound = ou_tail_bound(y, t, nu, 1.0)? * cfg.fault_scale;
            min_margin = min_margin.min(bound - tail);
            if tail > bound {
                violations += 1;
                if first.is_empty() {
                    first = format!("t = {t}, y = {y}: Gaussian tail {tail:.6e} above {bound:.6e}");
                }
            }
            let reference = (-y * y / (2.0 * sigma2)).exp();
            let gap = (bound - reference).abs();
            max_identity_gap = max_identity_gap.max(gap);
            if gap > tolerances::BOUND_COINCIDENCE {
                violations += 1;
                if first.is_empty() {
                    first = format!(
                        "t = {t}, y = {y}: bound {bound:.12e} misses the Gaussian exponent \
                         {reference:.12e}"
                    );
                }
            }
        }
    }
    Ok(if violations == 0 {
        CheckResult::pass(
            name,
            format!(
                "60 grid points over three horizons; smallest domination margin \
                 {min_margin:.3e}, exponent identity gap {max_identity_gap:.1e}"
            ),
        )
    } else {
        CheckResult::fail(name, format!("{violations} violations; first: {first}"))
    })
}

/// The finite-size urn bound converges to the diffusion bound: exponents
/// agree within 5% at 10^4 sites, and the rescaled chain's simulated tail
/// respects the limit bound with an additive discretization allowance.
pub fn fluid_limit_bounds(cfg: &VerifyConfig) -> Result<CheckResult> {
    let name = "fluid-limit-bounds";
    let (lambda, nu, t) = (0.5, 0.5, 1.0);
    let mut max_rel: f64 = 0.0;
    let mut violations = 0usize;
    let mut first = String::new();
    for i in 0..=6 {
        let y = 0.5 + 0.25 * i as f64;
        let pre = ehrenfest_prelimit_tail_bound(y, 10_000, t, nu, 1.0)?;
        let lim = ou_tail_bound(y, t, nu, 1.0)? * cfg.fault_scale;
        let (e_pre, e_lim) = (-pre.ln(), -lim.ln());
        let rel = (e_pre - e_lim).abs() / e_lim;
        max_rel = max_rel.max(rel);
        if rel > tolerances::FLUID_EXPONENT_REL {
            violations += 1;
            if first.is_empty() {
                first = format!(
                    "y = {y}: exponent {e_pre:.5} vs limit {e_lim:.5}, off by {:.2}%",
                    rel * 100.0
                );
            }
        }
    }

    let y_grid = [0.5, 1.0, 1.5];
    let analytic = y_grid
        .iter()
        .map(|&y| {
            Ok(ou_tail_bound(y, t, nu, 1.0)? * cfg.fault_scale + tolerances::FLUID_MC_SLACK)
        })
        .collect::<Result<Vec<f64>>>()?;
    let est = ehrenfest_rescaled_tail(
        400,
        lambda,
        nu,
        0.0,
        t,
        &y_grid,
        cfg.n_paths,
        0.99,
        cfg.seed.wrapping_add(0x99),
        &TailOptions::default(),
    )?;
    let s = summarize_tail("rescaled urn n = 400", &est, &analytic)?;

    Ok(if violations > 0 {
        CheckResult::fail(name, format!("{violations} exponent violations; first: {first}"))
    } else if s.failures > 0 {
        CheckResult::fail(name, s.first_failure)
    } else {
        CheckResult::pass(
            name,
            format!(
                "exponents within {:.2}% of the limit; {} of {} simulated levels tested, \
                 all below bound plus allowance",
                max_rel * 100.0,
                s.total - s.untested,
                s.total
            ),
        )
    })
}

/// Simulated tails of the three-time queue average stay below the
/// multi-time deviation bound.
pub fn queue_multitime_tail(cfg: &VerifyConfig) -> Result<CheckResult> {
    let name = "queue-multitime-tail";
    let (lambda, nu) = (1.0, 1.2);
    let times = [1.0, 2.0, 3.0];
    let f = MultiLipschitzFn::coordinate_average(times.len())?;
    let y_grid = [1.0, 2.0, 3.0];
    let analytic = y_grid
        .iter()
        .map(|&y| {
            Ok(multitime_tail_bound(
                y,
                times.len(),
                times[times.len() - 1],
                lambda,
                nu,
                f.lip(),
                RateVariant::Standard,
            )? * cfg.fault_scale)
        })
        .collect::<Result<Vec<f64>>>()?;
    let est = mm1_multisample_tail(
        lambda,
        nu,
        200,
        0,
        &times,
        &f,
        &y_grid,
        cfg.n_paths,
        0.99,
        cfg.seed.wrapping_add(0xAA),
        &TailOptions::default(),
    )?;
    let s = summarize_tail("queue triple average", &est, &analytic)?;
    Ok(if s.failures > 0 {
        CheckResult::fail(name, s.first_failure)
    } else if s.untested == s.total {
        CheckResult {
            name,
            status: CheckStatus::Untested,
            detail: format!("all {} levels below the resolution of {} paths", s.total, cfg.n_paths),
        }
    } else {
        CheckResult::pass(
            name,
            format!(
                "{} of {} levels tested at {} paths, all below the bound",
                s.total - s.untested,
                s.total,
                cfg.n_paths
            ),
        )
    })
}

/// The numerically optimized bound never exceeds its closed-form ancestor,
/// and the moment growth rate has the predicted slope at the origin.
pub fn bound_consistency(cfg: &VerifyConfig) -> Result<CheckResult> {
    let name = "bound-consistency";
    let d = Metric::unit();
    let ocfg = OptimizerConfig::default();
    let scenarios: [(&str, BirthDeathRates); 2] = [
        ("queue", BirthDeathRates::mm1(1.0, 2.0, 200)?),
        ("urn", BirthDeathRates::ehrenfest(30, 0.5, 0.5)?),
    ];
    let y_grid = [0.5, 1.0, 2.0, 4.0];
    let mut worst_excess = f64::NEG_INFINITY;
    let mut max_slope_rel: f64 = 0.0;
    let mut violations = 0usize;
    let mut first = String::new();
    for (label, chain) in scenarios {
        let rho = gamma_criterion(&chain)?.value;
        let general = chain.to_general();
        let f = StateFunction::identity(chain.n_states());
        let g_inf = gamma(&general, &f)?.sup_norm();
        for &t in &[0.5, 1.0] {
            let mut spec = DeviationBoundSpec::new(t, 1.0);
            spec.jump_bound = Some(1.0);
            spec.gamma_rho = Some(rho);
            spec.gamma_inf = Some(g_inf);
            for &y in &y_grid {
                let sharp = optimized_tail_bound(y, &general, &f, t, rho, &d, &ocfg)?;
                let loose = gamma_tail_bound(y, &spec)? * cfg.fault_scale;
                let excess = sharp - loose;
                worst_excess = worst_excess.max(excess);
                if excess > tolerances::BOUND_DOMINANCE_SLACK {
                    violations += 1;
                    if first.is_empty() {
                        first = format!(
                            "{label}, t = {t}, y = {y}: optimized {sharp:.6e} above \
                             closed form {loose:.6e}"
                        );
                    }
                }
            }
            let s = 1e-6;
            let slope = moment_growth_rate(s, &general, &f, t, rho, &d)? / s;
            let reference = 2.0 * contraction_integral(t, rho)? * g_inf * cfg.fault_scale;
            let rel = (slope - reference).abs() / reference;
            max_slope_rel = max_slope_rel.max(rel);
            if rel > tolerances::GROWTH_SLOPE_REL {
                violations += 1;
                if first.is_empty() {
                    first = format!(
                        "{label}, t = {t}: growth slope {slope:.9e} vs {reference:.9e}, \
                         relative gap {rel:.2e}"
                    );
                }
            }
        }
    }
    Ok(if violations == 0 {
        CheckResult::pass(
            name,
            format!(
                "optimizer dominated on 16 comparisons (worst excess {worst_excess:.2e}); \
                 origin slope within {max_slope_rel:.2e} relative"
            ),
        )
    } else {
        CheckResult::fail(name, format!("{violations} violations; first: {first}"))
    })
}

/// The forward difference rides through the queue semigroup: away from the
/// reflecting boundary the shifted and unshifted routes agree, and the
/// generator commutation is exact at interior states.
pub fn queue_shift_identity(cfg: &VerifyConfig) -> Result<CheckResult> {
    let name = "queue-shift-identity";
    let chain = BirthDeathRates::mm1(1.0, 1.2, 300)?;
    let general = chain.to_general();
    let ucfg = UniformizationConfig::default();
    let n = chain.n_states();
    let t = 1.0;
    let mut rng = check_rng(cfg.seed, 0xCC);
    let mut max_shift_dev: f64 = 0.0;
    let mut max_commutation_dev: f64 = 0.0;
    let mut violations = 0usize;
    let mut first = String::new();
    for j in 0..20 {
        let lo = rng.random_range(15..=60usize);
        let hi = rng.random_range(lo + 5..=150usize);
        let mut vals = vec![0.0; n];
        for v in vals.iter_mut().take(hi + 1).skip(lo) {
            *v = rng.random_range(-1.0..1.0);
        }
        let u = StateFunction::new(vals)?;
        let v = forward_difference(&u)?;

        let ptu = apply_semigroup(&general, &u, t, &ucfg)?;
        let ptv = apply_semigroup(&general, &v, t, &ucfg)?;
        for x in 0..=50usize {
            let lhs = ptu[x + 1] - ptu[x];
            let rhs = ptv[x] * cfg.fault_scale;
            let dev = (lhs - rhs).abs();
            max_shift_dev = max_shift_dev.max(dev);
            if dev > tolerances::SHIFT_IDENTITY_ABS {
                violations += 1;
                if first.is_empty() {
                    first = format!(
                        "function {j}, state {x}: shifted {lhs:.6e} vs unshifted {rhs:.6e}"
                    );
                }
            }
        }

        let lu = generator_apply(&general, &u)?;
        let lv = generator_apply(&general, &v)?;
        for x in 1..=n - 3 {
            let dev = ((lu[x + 1] - lu[x]) - lv[x] * cfg.fault_scale).abs();
            max_commutation_dev = max_commutation_dev.max(dev);
            if dev > tolerances::COMMUTATION_ABS {
                violations += 1;
                if first.is_empty() {
                    first = format!(
                        "function {j}, state {x}: generator commutation defect {dev:.3e}"
                    );
                }
            }
        }
    }
    Ok(if violations == 0 {
        CheckResult::pass(
            name,
            format!(
                "20 compactly supported functions: shift defect {max_shift_dev:.2e}, \
                 interior commutation defect {max_commutation_dev:.2e}"
            ),
        )
    } else {
        CheckResult::fail(name, format!("{violations} violations; first: {first}"))
    })
}

fn forward_difference(u: &StateFunction) -> Result<StateFunction> {
    let n = u.len();
    StateFunction::new(
        (0..n)
            .map(|x| if x + 1 < n { u[x + 1] - u[x] } else { 0.0 })
            .collect(),
    )
}

/// Exact minimum-cost transport by basic-solution enumeration. Every
/// vertex of the transportation polytope is the unique flow on some
/// spanning tree of the complete bipartite support graph, so solving all
/// spanning trees by leaf stripping and keeping the feasible ones visits
/// every candidate the optimum could sit at. Independent of the
/// cumulative-difference formula it audits; only sensible for the tiny
/// supports the agreement check uses.
pub(crate) fn exhaustive_transport_cost(mu: &[f64], nu: &[f64], d: &Metric) -> f64 {
    let sources: Vec<usize> = (0..mu.len()).filter(|&x| mu[x] > 0.0).collect();
    let sinks: Vec<usize> = (0..nu.len()).filter(|&y| nu[y] > 0.0).collect();
    let m = sources.len();
    let n = sinks.len();
    let edges: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .collect();
    let need = m + n - 1;

    fn root(parent: &[usize], mut v: usize) -> usize {
        while parent[v] != v {
            v = parent[v];
        }
        v
    }

    fn solve_tree(
        chosen: &[(usize, usize)],
        m: usize,
        n: usize,
        mu: &[f64],
        nu: &[f64],
        cost_of: &dyn Fn(usize, usize) -> f64,
    ) -> Option<f64> {
        // signed balances: rows carry supply, columns carry -demand;
        // stripping a leaf fixes its edge's flow and pushes the rest up
        let mut balance = vec![0.0; m + n];
        for (i, b) in balance.iter_mut().take(m).enumerate() {
            *b = mu[i];
        }
        for (j, b) in balance.iter_mut().skip(m).enumerate() {
            *b = -nu[j];
        }
        let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); m + n];
        for (e, &(i, j)) in chosen.iter().enumerate() {
            adjacency[i].push((m + j, e));
            adjacency[m + j].push((i, e));
        }
        let mut alive_edge = vec![true; chosen.len()];
        let mut degree: Vec<usize> = adjacency.iter().map(Vec::len).collect();
        let mut leaves: Vec<usize> = (0..m + n).filter(|&v| degree[v] == 1).collect();
        let mut cost = 0.0;
        for _ in 0..chosen.len() {
            let v = leaves.pop().expect("a tree always has a leaf");
            let &(u, e) = adjacency[v]
                .iter()
                .find(|&&(_, e)| alive_edge[e])
                .expect("leaf keeps one live edge");
            let shipped = if v < m { balance[v] } else { -balance[v] };
            if shipped < -1e-9 {
                return None; // this basis is infeasible
            }
            cost += shipped.max(0.0) * cost_of(chosen[e].0, chosen[e].1);
            balance[u] += balance[v];
            alive_edge[e] = false;
            degree[u] -= 1;
            degree[v] -= 1;
            if degree[u] == 1 {
                leaves.push(u);
            }
        }
        Some(cost)
    }

    // backtrack over edge subsets, growing only acyclic selections
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        edges: &[(usize, usize)],
        from: usize,
        chosen: &mut Vec<(usize, usize)>,
        parent: &mut Vec<usize>,
        need: usize,
        m: usize,
        n: usize,
        mu: &[f64],
        nu: &[f64],
        cost_of: &dyn Fn(usize, usize) -> f64,
        best: &mut f64,
    ) {
        if chosen.len() == need {
            if let Some(c) = solve_tree(chosen, m, n, mu, nu, cost_of) {
                *best = best.min(c);
            }
            return;
        }
        if edges.len() - from < need - chosen.len() {
            return;
        }
        let (i, j) = edges[from];
        let (a, b) = (root(parent, i), root(parent, m + j));
        if a != b {
            let saved = parent.clone();
            parent[a] = b;
            chosen.push((i, j));
            recurse(edges, from + 1, chosen, parent, need, m, n, mu, nu, cost_of, best);
            chosen.pop();
            *parent = saved;
        }
        recurse(edges, from + 1, chosen, parent, need, m, n, mu, nu, cost_of, best);
    }

    let supply: Vec<f64> = sources.iter().map(|&x| mu[x]).collect();
    let demand: Vec<f64> = sinks.iter().map(|&y| nu[y]).collect();
    let cost_of = |i: usize, j: usize| d.distance(sources[i], sinks[j]);
    let mut best = f64::INFINITY;
    let mut parent: Vec<usize> = (0..m + n).collect();
    recurse(
        &edges,
        0,
        &mut Vec::new(),
        &mut parent,
        need,
        m,
        n,
        &supply,
        &demand,
        &cost_of,
        &mut best,
    );
    best
}
