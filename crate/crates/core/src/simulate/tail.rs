//! Monte Carlo estimation of deviation tails, centered at exact means,
//! with exact binomial confidence bounds.

use statrs::function::beta::beta_reg;

use super::{path_rng, sample_states_at_stream, walk, MultiLipschitzFn};
use crate::chain_model::{BirthDeathRates, GeneralRates, StateFunction, DEFAULT_BOUNDARY_MARGIN};
use crate::error::{Error, Result};
use crate::semigroup::{
    expectation, kernel_row, transition_matrix, TransitionKernel, UniformizationConfig,
};
use crate::tolerances;

/// Knobs shared by the tail estimators. The guard refuses to simulate a
/// truncated chain whose kernel row leaks this much mass into the top
/// boundary margin, since the finite space then misrepresents the
/// infinite chain it stands for.
#[derive(Debug, Clone)]
pub struct TailOptions {
    pub tail_mass_guard: f64,
    pub uniformization: UniformizationConfig,
}

impl Default for TailOptions {
    fn default() -> Self {
        Self {
            tail_mass_guard: tolerances::TAIL_MASS_GUARD,
            uniformization: UniformizationConfig::default(),
        }
    }
}

/// Outcome of comparing one empirical upper confidence bound against an
/// analytic bound. Deep-tail levels the path budget cannot resolve are
/// reported untested rather than passed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailVerdict {
    Pass,
    Fail,
    Untested,
}

impl TailVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            TailVerdict::Pass => "pass",
            TailVerdict::Fail => "fail",
            TailVerdict::Untested => "untested",
        }
    }
}

/// One-sided upper confidence bound for a binomial proportion at level
/// `confidence`, by the exact (Clopper-Pearson) construction: the
/// smallest `p` whose chance of producing at most `k` hits in `n` trials
/// has dropped to `1 - confidence`.
pub fn clopper_pearson_upper(k: u64, n: u64, confidence: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("no trials".into()));
    }
    if k > n {
        return Err(Error::InvalidParameter(format!("{k} hits in {n} trials")));
    }
    if !(confidence > 0.5 && confidence < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "confidence level must be in (0.5, 1), got {confidence}"
        )));
    }
    if k == n {
        return Ok(1.0);
    }
    if k == 0 {
        return Ok(1.0 - (1.0 - confidence).powf(1.0 / n as f64));
    }
    // upper limit = the confidence-level quantile of Beta(k+1, n-k);
    // bisection on the regularized incomplete beta, which is monotone
    let (a, b) = ((k + 1) as f64, (n - k) as f64);
    let mut lo = 0.0;
    let mut hi = 1.0;
    while hi - lo > tolerances::CLOPPER_PEARSON_TOL {
        let mid = 0.5 * (lo + hi);
        if beta_reg(a, b, mid) < confidence {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Empirical deviation tail of one observable: exceedance counts of
/// `f - E[f]` over a grid of levels, with exact-mean centering and
/// Clopper-Pearson upper bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct TailEstimate {
    y_grid: Vec<f64>,
    counts: Vec<u64>,
    n_paths: u64,
    exact_mean: f64,
    mean_std_error: f64,
    confidence: f64,
    upper: Vec<f64>,
}

impl TailEstimate {
    fn from_counts(
        y_grid: Vec<f64>,
        counts: Vec<u64>,
        n_paths: u64,
        exact_mean: f64,
        mean_std_error: f64,
        confidence: f64,
    ) -> Result<Self> {
        let upper = counts
            .iter()
            .map(|&k| clopper_pearson_upper(k, n_paths, confidence))
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self {
            y_grid,
            counts,
            n_paths,
            exact_mean,
            mean_std_error,
            confidence,
            upper,
        })
    }

    pub fn y_grid(&self) -> &[f64] {
        &self.y_grid
    }

    /// Exceedance counts per level, non-increasing along the grid.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n_paths(&self) -> u64 {
        self.n_paths
    }

    /// The mean the deviations were centered at.
    pub fn exact_mean(&self) -> f64 {
        self.exact_mean
    }

    /// Standard error of the centering mean: zero when it came from the
    /// semigroup, positive when it had to be estimated by simulation.
    pub fn mean_std_error(&self) -> f64 {
        self.mean_std_error
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    pub fn point_estimates(&self) -> Vec<f64> {
        self.counts
            .iter()
            .map(|&k| k as f64 / self.n_paths as f64)
            .collect()
    }

    pub fn upper_bounds(&self) -> &[f64] {
        &self.upper
    }

    /// Compares against analytic bounds level by level. A level whose
    /// analytic bound is below the resolution of the path budget cannot
    /// be told apart from zero and is marked untested.
    pub fn verdicts(&self, analytic: &[f64]) -> Result<Vec<TailVerdict>> {
        if analytic.len() != self.y_grid.len() {
            return Err(Error::DimensionMismatch {
                expected: self.y_grid.len(),
                found: analytic.len(),
            });
        }
        let floor = tolerances::UNTESTED_FACTOR / self.n_paths as f64;
        Ok(self
            .upper
            .iter()
            .zip(analytic)
            .map(|(&u, &a)| {
                if a < floor {
                    TailVerdict::Untested
                } else if u <= a {
                    TailVerdict::Pass
                } else {
                    TailVerdict::Fail
                }
            })
            .collect())
    }

    /// CSV rows `y,k,n,p_hat,upper_gamma,analytic_bound,pass`, one per
    /// grid level.
    pub fn to_csv_string(&self, analytic: &[f64]) -> Result<String> {
        let verdicts = self.verdicts(analytic)?;
        let mut out = String::from("y,k,n,p_hat,upper_gamma,analytic_bound,pass\n");
        for (i, &y) in self.y_grid.iter().enumerate() {
            out.push_str(&format!(
                "{y},{},{},{},{},{},{}\n",
                self.counts[i],
                self.n_paths,
                self.counts[i] as f64 / self.n_paths as f64,
                self.upper[i],
                analytic[i],
                verdicts[i].as_str()
            ));
        }
        Ok(out)
    }
}

fn check_y_grid(y_grid: &[f64]) -> Result<()> {
    if y_grid.is_empty() {
        return Err(Error::InvalidParameter("empty level grid".into()));
    }
    if !(y_grid[0] > 0.0) || y_grid.iter().any(|y| !y.is_finite()) {
        return Err(Error::InvalidParameter(
            "levels must be positive and finite".into(),
        ));
    }
    for pair in y_grid.windows(2) {
        if !(pair[0] < pair[1]) {
            return Err(Error::InvalidParameter(
                "levels must be strictly increasing".into(),
            ));
        }
    }
    Ok(())
}

fn check_tail_args(t: f64, n_paths: u64, confidence: f64) -> Result<()> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "time must be finite and nonnegative, got {t}"
        )));
    }
    if n_paths == 0 {
        return Err(Error::InvalidParameter("path count must be positive".into()));
    }
    if !(confidence > 0.5 && confidence < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "confidence level must be in (0.5, 1), got {confidence}"
        )));
    }
    Ok(())
}

/// Errors out when a truncated space leaks too much mass into its top
/// boundary margin at the horizon of interest.
fn guard_truncation(
    rates: &GeneralRates,
    x0: usize,
    t: f64,
    options: &TailOptions,
) -> Result<()> {
    if !rates.space().truncated() {
        return Ok(());
    }
    let mass = crate::semigroup::truncation_tail_mass(
        rates,
        x0,
        t,
        DEFAULT_BOUNDARY_MARGIN,
        &options.uniformization,
    )?;
    if mass > options.tail_mass_guard {
        return Err(Error::TailMassGuard {
            mass,
            guard: options.tail_mass_guard,
        });
    }
    if mass > tolerances::TAIL_MASS_WARN {
        log::warn!("boundary mass {mass:e} at (x0={x0}, t={t}); results may be distorted");
    }
    Ok(())
}

fn count_exceedances(counts: &mut [u64], y_grid: &[f64], deviation: f64) {
    for (count, &y) in counts.iter_mut().zip(y_grid) {
        if deviation >= y {
            *count += 1;
        } else {
            break;
        }
    }
}

/// Estimates `P_x0(f(X_t) - E_x0[f(X_t)] >= y)` per level `y` by seeded
/// Monte Carlo, centered at the exact semigroup mean, never an empirical
/// one: plugging an estimated mean into the event would bias every
/// count.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_tail(
    rates: &GeneralRates,
    x0: usize,
    f: &StateFunction,
    t: f64,
    y_grid: &[f64],
    n_paths: u64,
    confidence: f64,
    seed: u64,
    options: &TailOptions,
) -> Result<TailEstimate> {
    check_tail_args(t, n_paths, confidence)?;
    check_y_grid(y_grid)?;
    if f.len() != rates.n_states() {
        return Err(Error::DimensionMismatch {
            expected: rates.n_states(),
            found: f.len(),
        });
    }
    guard_truncation(rates, x0, t, options)?;
    let mean = expectation(rates, x0, f, t, &options.uniformization)?;
    let mut counts = vec![0u64; y_grid.len()];
    for i in 0..n_paths {
        let mut rng = path_rng(seed, i);
        let mut state = x0;
        walk(rates, x0, t, &mut rng, |_, x| {
            state = x;
            true
        });
        count_exceedances(&mut counts, y_grid, f[state] - mean);
    }
    TailEstimate::from_counts(y_grid.to_vec(), counts, n_paths, mean, 0.0, confidence)
}

/// Largest state count for which the multi-time mean is computed by the
/// exact tensorized kernel recursion rather than estimated.
const EXACT_MEAN_MAX_STATES: usize = 401;

struct KernelCache<'a> {
    rates: &'a GeneralRates,
    cfg: &'a UniformizationConfig,
    built: Vec<(u64, TransitionKernel)>,
}

impl<'a> KernelCache<'a> {
    fn new(rates: &'a GeneralRates, cfg: &'a UniformizationConfig) -> Self {
        Self {
            rates,
            cfg,
            built: Vec::new(),
        }
    }

    fn get(&mut self, gap: f64) -> Result<&TransitionKernel> {
        let key = gap.to_bits();
        if let Some(pos) = self.built.iter().position(|(k, _)| *k == key) {
            return Ok(&self.built[pos].1);
        }
        let kernel = transition_matrix(self.rates, gap, self.cfg)?;
        self.built.push((key, kernel));
        Ok(&self.built.last().expect("just pushed").1)
    }
}

/// `E_x0[f(X_{t1}, ..., X_{tn})]` by backward summation over the kernel
/// at each gap, exact up to series truncation. Cost grows like the state
/// count to the power of the arity, hence the small-arity restriction.
fn multisample_mean_exact(
    rates: &GeneralRates,
    x0: usize,
    times: &[f64],
    f: &MultiLipschitzFn,
    cfg: &UniformizationConfig,
) -> Result<f64> {
    let (first_row, _) = kernel_row(rates, x0, times[0], cfg)?;
    let mut cache = KernelCache::new(rates, cfg);
    let mut mean = 0.0;
    match times.len() {
        1 => {
            for (x1, p1) in first_row.iter().enumerate() {
                mean += p1 * f.eval(&[x1]);
            }
        }
        2 => {
            let k2 = cache.get(times[1] - times[0])?;
            for (x1, p1) in first_row.iter().enumerate() {
                let row2 = k2.row(x1);
                for (x2, p2) in row2.iter().enumerate() {
                    mean += p1 * p2 * f.eval(&[x1, x2]);
                }
            }
        }
        3 => {
            let gap2 = times[1] - times[0];
            let gap3 = times[2] - times[1];
            cache.get(gap2)?;
            cache.get(gap3)?;
            for (x1, &p1) in first_row.iter().enumerate() {
                let row2 = cache.get(gap2)?.row(x1).to_vec();
                for (x2, p2) in row2.iter().enumerate() {
                    let p12 = p1 * p2;
                    let row3 = cache.get(gap3)?.row(x2);
                    for (x3, p3) in row3.iter().enumerate() {
                        mean += p12 * p3 * f.eval(&[x1, x2, x3]);
                    }
                }
            }
        }
        _ => unreachable!("exact mean is restricted to arity <= 3"),
    }
    Ok(mean)
}

/// Stream namespace for mean-estimation paths, disjoint from the tail
/// paths of the same run.
const MEAN_STREAM_BASE: u64 = 1 << 63;

/// Deviation tail of a multi-time observable of the truncated
/// single-server queue: `P_x0(f(X_{t1}, ..., X_{tn}) - E[f] >= y)`.
///
/// The centering mean is exact (tensorized kernel recursion) when the
/// arity is at most 3 and the space is small enough; otherwise it is
/// estimated on its own RNG streams and its standard error is reported
/// in the estimate for the caller to fold into any comparison.
#[allow(clippy::too_many_arguments)]
pub fn mm1_multisample_tail(
    lambda: f64,
    nu: f64,
    truncation_n: usize,
    x0: usize,
    times: &[f64],
    f: &MultiLipschitzFn,
    y_grid: &[f64],
    n_paths: u64,
    confidence: f64,
    seed: u64,
    options: &TailOptions,
) -> Result<TailEstimate> {
    let rates = BirthDeathRates::mm1(lambda, nu, truncation_n)?.to_general();
    check_tail_args(*times.last().unwrap_or(&f64::NAN), n_paths, confidence)?;
    check_y_grid(y_grid)?;
    super::check_times(times)?;
    if times.len() != f.arity() {
        return Err(Error::DimensionMismatch {
            expected: f.arity(),
            found: times.len(),
        });
    }
    if x0 >= rates.n_states() {
        return Err(Error::InvalidParameter(format!(
            "start state {x0} outside space of {} states",
            rates.n_states()
        )));
    }
    guard_truncation(&rates, x0, *times.last().expect("times non-empty"), options)?;

    let (mean, mean_se) = if f.arity() <= 3 && rates.n_states() <= EXACT_MEAN_MAX_STATES {
        (
            multisample_mean_exact(&rates, x0, times, f, &options.uniformization)?,
            0.0,
        )
    } else {
        let n_mean = n_paths.max(10_000);
        let mut values = Vec::with_capacity(n_mean as usize);
        for i in 0..n_mean {
            let tuple = sample_states_at_stream(&rates, x0, times, seed, MEAN_STREAM_BASE + i)?;
            values.push(f.eval(&tuple));
        }
        let mean = values.iter().sum::<f64>() / n_mean as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
            / (n_mean as f64 * (n_mean - 1).max(1) as f64);
        (mean, var.sqrt())
    };

    let mut counts = vec![0u64; y_grid.len()];
    for i in 0..n_paths {
        let tuple = sample_states_at_stream(&rates, x0, times, seed, i)?;
        if i < 32 {
            f.check_perturbations(&tuple)?;
        }
        count_exceedances(&mut counts, y_grid, f.eval(&tuple) - mean);
    }
    TailEstimate::from_counts(y_grid.to_vec(), counts, n_paths, mean, mean_se, confidence)
}
