//! Exact transition kernels by uniformization.
//!
//! With `L` the largest exit rate, `M = I + Q / L` is a stochastic matrix
//! and
//!
//! ```text
//! P_t = sum_{k >= 0} e^{-Lt} (Lt)^k / k! . M^k
//! ```
//!
//! Every term is nonnegative, so truncating the series after the Poisson
//! weights have covered `1 - tolerance` of their mass leaves a kernel that
//! is entrywise below the true one by at most the leftover tail. That tail
//! is recorded on the result as the achieved error bound.
//!
//! Weights are evaluated in log space, so large `Lt` cannot underflow the
//! series, and each row is accumulated in a fixed summation order to keep
//! results reproducible.

use statrs::function::gamma::ln_gamma;

use crate::chain_model::{GeneralRates, StateFunction};
use crate::error::{Error, Result};
use crate::tolerances;

/// Truncation control for the uniformization series.
#[derive(Debug, Clone, Copy)]
pub struct UniformizationConfig {
    /// Poisson tail mass at which the series stops.
    pub tolerance: f64,
    /// Hard cap on series length.
    pub max_terms: usize,
}

impl Default for UniformizationConfig {
    fn default() -> Self {
        Self {
            tolerance: tolerances::UNIFORMIZATION_TAIL,
            max_terms: tolerances::UNIFORMIZATION_MAX_TERMS,
        }
    }
}

impl UniformizationConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "series tolerance must lie in (0, 1), got {}",
                self.tolerance
            )));
        }
        if self.max_terms == 0 {
            return Err(Error::InvalidParameter(
                "series term cap must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "time must be finite and nonnegative, got {t}"
        )));
    }
    Ok(())
}

/// A dense row-substochastic kernel `P_t(x, y)` with its truncation error.
#[derive(Debug, Clone)]
pub struct TransitionKernel {
    time: f64,
    n_states: usize,
    data: Vec<f64>,
    tail_bound: f64,
}

impl TransitionKernel {
    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Truncation error: each row's mass deficit is at most this.
    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.data[x * self.n_states..(x + 1) * self.n_states]
    }

    pub fn entry(&self, x: usize, y: usize) -> f64 {
        self.data[x * self.n_states + y]
    }

    /// Right action: `x -> sum_y f(y) P_t(x, y)`.
    pub fn apply(&self, f: &StateFunction) -> Result<StateFunction> {
        if f.len() != self.n_states {
            return Err(Error::DimensionMismatch {
                expected: self.n_states,
                found: f.len(),
            });
        }
        let values = (0..self.n_states)
            .map(|x| self.row(x).iter().zip(f.values()).map(|(p, v)| p * v).sum())
            .collect();
        Ok(StateFunction::from_values_unchecked(values))
    }

    /// Left action: `y -> sum_x mu(x) P_t(x, y)`.
    pub fn left_apply(&self, mu: &[f64]) -> Result<Vec<f64>> {
        if mu.len() != self.n_states {
            return Err(Error::DimensionMismatch {
                expected: self.n_states,
                found: mu.len(),
            });
        }
        let mut out = vec![0.0; self.n_states];
        for (x, &m) in mu.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for (y, &p) in self.row(x).iter().enumerate() {
                out[y] += m * p;
            }
        }
        Ok(out)
    }

    /// Dense CSV dump, one row of the kernel per line.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for x in 0..self.n_states {
            let line: Vec<String> = self.row(x).iter().map(|p| format!("{p}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

/// Poisson(`lambda_t`) weights up to the first index where the remaining
/// tail drops below the tolerance. Returns the weights and the leftover
/// tail mass.
fn poisson_weights(lambda_t: f64, cfg: &UniformizationConfig) -> Result<(Vec<f64>, f64)> {
    let log_lt = lambda_t.ln();
    let mut weights = Vec::new();
    let mut covered = 0.0_f64;
    loop {
        let k = weights.len();
        if k >= cfg.max_terms {
            return Err(Error::SeriesCapExceeded { cap: cfg.max_terms });
        }
        let log_w = -lambda_t + k as f64 * log_lt - ln_gamma(k as f64 + 1.0);
        let w = log_w.exp();
        weights.push(w);
        covered += w;
        if 1.0 - covered < cfg.tolerance {
            break;
        }
    }
    Ok((weights, (1.0 - covered).max(0.0)))
}

struct Uniformized {
    /// Off-diagonal rows of `M = I + Q / L`, sorted by target state.
    rows: Vec<Vec<(usize, f64)>>,
    /// Diagonal of `M`.
    diag: Vec<f64>,
}

fn uniformize(rates: &GeneralRates, lambda: f64) -> Uniformized {
    let n = rates.n_states();
    let mut rows = Vec::with_capacity(n);
    let mut diag = Vec::with_capacity(n);
    for x in 0..n {
        rows.push(
            rates
                .row(x)
                .iter()
                .map(|&(y, q)| (y, q / lambda))
                .collect(),
        );
        diag.push(1.0 - rates.exit_rate(x) / lambda);
    }
    Uniformized { rows, diag }
}

fn identity_kernel(t: f64, n: usize) -> TransitionKernel {
    let mut data = vec![0.0; n * n];
    for x in 0..n {
        data[x * n + x] = 1.0;
    }
    TransitionKernel {
        time: t,
        n_states: n,
        data,
        tail_bound: 0.0,
    }
}

/// One row of `P_t`, propagated as a distribution under the left action of
/// `M`. Returns the row and its mass deficit.
fn propagate_row(m: &Uniformized, weights: &[f64], tail: f64, x0: usize) -> Result<(Vec<f64>, f64)> {
    let n = m.diag.len();
    let mut current = vec![0.0; n];
    current[x0] = 1.0;
    let mut next = vec![0.0; n];
    let mut acc = vec![0.0; n];
    for (k, &w) in weights.iter().enumerate() {
        for (a, c) in acc.iter_mut().zip(&current) {
            *a += w * c;
        }
        if k + 1 == weights.len() {
            break;
        }
        next.iter_mut().for_each(|v| *v = 0.0);
        for z in 0..n {
            let vz = current[z];
            if vz == 0.0 {
                continue;
            }
            next[z] += vz * m.diag[z];
            for &(y, p) in &m.rows[z] {
                next[y] += vz * p;
            }
        }
        std::mem::swap(&mut current, &mut next);
    }
    finalize_row(&mut acc, tail)?;
    Ok((acc, tail))
}

/// Clamps rounding noise and checks the row carries its expected mass.
fn finalize_row(row: &mut [f64], tail: f64) -> Result<()> {
    let mut clamped = false;
    let mut pre_clamp_sum = 0.0;
    for v in row.iter_mut() {
        pre_clamp_sum += *v;
        if *v < 0.0 {
            if *v < -tolerances::KERNEL_ENTRY_FLOOR {
                return Err(Error::InvalidParameter(format!(
                    "kernel entry {v:e} is negative beyond rounding tolerance"
                )));
            }
            *v = 0.0;
            clamped = true;
        }
    }
    if clamped {
        let post: f64 = row.iter().sum();
        if post > 0.0 {
            let scale = pre_clamp_sum / post;
            for v in row.iter_mut() {
                *v *= scale;
            }
        }
    }
    let sum: f64 = row.iter().sum();
    let deficit = (1.0 - sum).abs();
    if deficit > tail + tolerances::KERNEL_ROW_SUM {
        return Err(Error::NotNormalized { deficit });
    }
    Ok(())
}

/// The full kernel `P_t`, each row propagated independently in a fixed
/// summation order.
pub fn transition_matrix(
    rates: &GeneralRates,
    t: f64,
    cfg: &UniformizationConfig,
) -> Result<TransitionKernel> {
    check_time(t)?;
    cfg.validate()?;
    let n = rates.n_states();
    let lambda = rates.max_exit_rate();
    if t == 0.0 || lambda == 0.0 {
        return Ok(identity_kernel(t, n));
    }
    let (weights, tail) = poisson_weights(lambda * t, cfg)?;
    let m = uniformize(rates, lambda);
    let mut data = Vec::with_capacity(n * n);
    for x0 in 0..n {
        let (row, _) = propagate_row(&m, &weights, tail, x0)?;
        data.extend_from_slice(&row);
    }
    Ok(TransitionKernel {
        time: t,
        n_states: n,
        data,
        tail_bound: tail,
    })
}

/// A single kernel row `P_t(x0, .)` and its truncation error, without
/// building the whole matrix.
pub fn kernel_row(
    rates: &GeneralRates,
    x0: usize,
    t: f64,
    cfg: &UniformizationConfig,
) -> Result<(Vec<f64>, f64)> {
    check_time(t)?;
    cfg.validate()?;
    let n = rates.n_states();
    if x0 >= n {
        return Err(Error::InvalidParameter(format!(
            "start state {x0} outside space of {n} states"
        )));
    }
    let lambda = rates.max_exit_rate();
    if t == 0.0 || lambda == 0.0 {
        let mut row = vec![0.0; n];
        row[x0] = 1.0;
        return Ok((row, 0.0));
    }
    let (weights, tail) = poisson_weights(lambda * t, cfg)?;
    let m = uniformize(rates, lambda);
    propagate_row(&m, &weights, tail, x0)
}

/// `P_t f` for every start state, by the right action of the series. Cheaper
/// than building the kernel when only one function is needed.
pub fn apply_semigroup(
    rates: &GeneralRates,
    f: &StateFunction,
    t: f64,
    cfg: &UniformizationConfig,
) -> Result<StateFunction> {
    check_time(t)?;
    cfg.validate()?;
    let n = rates.n_states();
    if f.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: f.len(),
        });
    }
    let lambda = rates.max_exit_rate();
    if t == 0.0 || lambda == 0.0 {
        return Ok(f.clone());
    }
    let (weights, _) = poisson_weights(lambda * t, cfg)?;
    let m = uniformize(rates, lambda);
    let mut current = f.values().to_vec();
    let mut next = vec![0.0; n];
    let mut acc = vec![0.0; n];
    for (k, &w) in weights.iter().enumerate() {
        for (a, c) in acc.iter_mut().zip(&current) {
            *a += w * c;
        }
        if k + 1 == weights.len() {
            break;
        }
        for x in 0..n {
            let mut v = m.diag[x] * current[x];
            for &(y, p) in &m.rows[x] {
                v += p * current[y];
            }
            next[x] = v;
        }
        std::mem::swap(&mut current, &mut next);
    }
    Ok(StateFunction::from_values_unchecked(acc))
}

/// `E_x0[f(X_t)]` from a single kernel row.
///
/// On truncated chains the mass this row places near the top boundary is
/// checked and a warning logged above the accepted level, since such mass
/// means the finite space is distorting the infinite chain it stands for.
pub fn expectation(
    rates: &GeneralRates,
    x0: usize,
    f: &StateFunction,
    t: f64,
    cfg: &UniformizationConfig,
) -> Result<f64> {
    if f.len() != rates.n_states() {
        return Err(Error::DimensionMismatch {
            expected: rates.n_states(),
            found: f.len(),
        });
    }
    let (row, _) = kernel_row(rates, x0, t, cfg)?;
    if rates.space().truncated() {
        let margin = crate::chain_model::DEFAULT_BOUNDARY_MARGIN.min(row.len());
        let mass: f64 = row[row.len() - margin..].iter().sum();
        if mass > tolerances::TAIL_MASS_WARN {
            log::warn!(
                "start {x0}, time {t}: mass {mass:e} within {margin} states of the \
                 truncation boundary"
            );
        }
    }
    Ok(row.iter().zip(f.values()).map(|(p, v)| p * v).sum())
}

/// Mass the chain started at `x0` places on the top `margin` states at time
/// `t`. Certifies that a truncated space is large enough for the quantities
/// being computed on it.
pub fn truncation_tail_mass(
    rates: &GeneralRates,
    x0: usize,
    t: f64,
    margin: usize,
    cfg: &UniformizationConfig,
) -> Result<f64> {
    let n = rates.n_states();
    let margin = margin.min(n);
    if x0 + margin >= n {
        log::warn!("start {x0} lies inside the top boundary margin of {n} states");
    }
    let (row, _) = kernel_row(rates, x0, t, cfg)?;
    Ok(row[n - margin..].iter().sum())
}
