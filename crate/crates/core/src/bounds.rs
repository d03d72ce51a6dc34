//! Closed-form deviation inequalities for curved chains, plus a numeric
//! optimizer for the sharpest available exponential bound.
//!
//! Every closed-form bound here descends from a moment bound of the shape
//! `E[exp(s(f(X_t) - E f(X_t)))] <= exp(a (e^{cs} - cs - 1))` for some
//! constants `a` and `c` built from a curvature certificate and jump
//! statistics. Optimizing the Chernoff argument exactly gives
//! `exp(-a h(u))` with `h(u) = (1+u) log(1+u) - u` and `u = y / (a c)`;
//! the classical simplification `h(u) >= u log(1+u) / 2` gives the weaker
//! but more readable `exp(-(y / 2c) log(1 + u))`. The [`RateVariant`]
//! switch selects between the two everywhere both make sense.
//!
//! All exponents are assembled in log space; a bound whose exponent falls
//! below [`tolerances::UNDERFLOW_EXPONENT`] is reported as exactly `0.0`
//! so callers can tell deliberate underflow from a denormal.

use serde::{Deserialize, Serialize};

use crate::chain_model::{gamma, lipschitz_seminorm, GeneralRates, Metric, StateFunction};
use crate::error::{Error, Result};
use crate::tolerances;

/// Which Chernoff rate function a closed-form bound uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateVariant {
    /// `u log(1+u) / 2`, the form the displayed inequalities use.
    #[default]
    Standard,
    /// `(1+u) log(1+u) - u`, the full Chernoff optimum. Sharper.
    Bennett,
}

/// The Chernoff rate function of the selected variant, for `u >= 0`.
pub fn rate_fn(u: f64, variant: RateVariant) -> Result<f64> {
    if !(u >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "rate function argument must be nonnegative, got {u}"
        )));
    }
    let log1pu = u.ln_1p();
    Ok(match variant {
        RateVariant::Standard => 0.5 * u * log1pu,
        RateVariant::Bennett => (1.0 + u) * log1pu - u,
    })
}

fn check_horizon(t: f64, allow_infinite: bool) -> Result<()> {
    if t.is_nan() || t < 0.0 || (t.is_infinite() && !allow_infinite) {
        return Err(Error::InvalidParameter(format!(
            "time horizon {t} is outside this bound's domain"
        )));
    }
    Ok(())
}

/// Contraction prefactor `sup_{0<=s<=t} e^{-K(t-s)} = max(1, e^{-Kt})`.
pub fn expansion_factor(t: f64, k: f64) -> Result<f64> {
    check_horizon(t, k > 0.0)?;
    Ok(1.0_f64.max((-k * t).exp()))
}

/// The integrated contraction weight `(1 - e^{-2rt}) / (2r)`, with its
/// `r = 0` limit `t` and its `t = infinity` limit `1 / (2r)` for `r > 0`.
pub fn contraction_integral(t: f64, rate: f64) -> Result<f64> {
    check_horizon(t, rate > 0.0)?;
    if rate == 0.0 {
        return Ok(t);
    }
    Ok(-(-2.0 * rate * t).exp_m1() / (2.0 * rate))
}

/// Parameters a deviation bound draws on. Each formula checks for the
/// fields it needs and rejects the call when one is missing.
#[derive(Debug, Clone, Copy)]
pub struct DeviationBoundSpec {
    /// Time horizon; `f64::INFINITY` selects the stationary forms.
    pub t: f64,
    /// Lipschitz seminorm of the observable.
    pub lip: f64,
    /// Largest metric jump length.
    pub jump_bound: Option<f64>,
    /// Angle-bracket rate bound: `sup_x sum_y d(x,y)^2 Q(x,y)`.
    pub squared_jump_bound: Option<f64>,
    /// Certified Wasserstein curvature lower bound.
    pub wasserstein_k: Option<f64>,
    /// Certified Gamma-curvature lower bound.
    pub gamma_rho: Option<f64>,
    /// `sup Gamma(f)` for the observable.
    pub gamma_inf: Option<f64>,
    /// `birth(0) + death(top)`, the extreme-state rate sum.
    pub boundary_rate_sum: Option<f64>,
    pub variant: RateVariant,
}

impl DeviationBoundSpec {
    /// A spec with only the universally required fields set.
    pub fn new(t: f64, lip: f64) -> Self {
        Self {
            t,
            lip,
            jump_bound: None,
            squared_jump_bound: None,
            wasserstein_k: None,
            gamma_rho: None,
            gamma_inf: None,
            boundary_rate_sum: None,
            variant: RateVariant::Standard,
        }
    }

    fn validate(&self, allow_infinite_t: bool) -> Result<()> {
        check_horizon(self.t, allow_infinite_t)?;
        if !(self.t > 0.0) {
            return Err(Error::InvalidParameter(
                "deviation bounds need a positive time horizon".into(),
            ));
        }
        if !(self.lip > 0.0 && self.lip.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "Lipschitz seminorm must be positive and finite, got {}",
                self.lip
            )));
        }
        Ok(())
    }

    fn need(&self, field: Option<f64>, name: &'static str) -> Result<f64> {
        let v = field.ok_or(Error::MissingParameter(name))?;
        if !v.is_finite() {
            return Err(Error::InvalidParameter(format!("{name} must be finite, got {v}")));
        }
        Ok(v)
    }
}

fn check_y(y: f64) -> Result<()> {
    if !(y > 0.0 && y.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "deviation level must be positive and finite, got {y}"
        )));
    }
    Ok(())
}

/// `exp(-a . rate(y / (a c)))`, the shared closed-form core. Returns an
/// exact `0.0` when the exponent underflows.
fn closed_form(y: f64, a: f64, c: f64, variant: RateVariant) -> Result<f64> {
    if !(a > 0.0 && a.is_finite() && c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "degenerate bound coefficients a = {a}, c = {c}"
        )));
    }
    let exponent = -a * rate_fn(y / (a * c), variant)?;
    if exponent < tolerances::UNDERFLOW_EXPONENT {
        return Ok(0.0);
    }
    Ok(exponent.exp())
}

/// Deviation bound from a Wasserstein curvature certificate together with
/// jump and angle-bracket bounds.
///
/// Needs `jump_bound`, `squared_jump_bound`, `wasserstein_k`.
pub fn wasserstein_tail_bound(y: f64, spec: &DeviationBoundSpec) -> Result<f64> {
    check_y(y)?;
    spec.validate(false)?;
    let b = spec.need(spec.jump_bound, "jump_bound")?;
    let v2 = spec.need(spec.squared_jump_bound, "squared_jump_bound")?;
    let k = spec.need(spec.wasserstein_k, "wasserstein_k")?;
    let c_factor = expansion_factor(spec.t, k)?;
    let m = contraction_integral(spec.t, k)?;
    let c = b * c_factor * spec.lip;
    let a = m * v2 / (b * c_factor).powi(2);
    closed_form(y, a, c, spec.variant)
}

/// Deviation bound for bounded jumps driven by a Gamma-curvature
/// certificate and `sup Gamma(f)`.
///
/// Needs `jump_bound`, `gamma_rho`, `gamma_inf`.
pub fn gamma_tail_bound(y: f64, spec: &DeviationBoundSpec) -> Result<f64> {
    check_y(y)?;
    spec.validate(false)?;
    let b = spec.need(spec.jump_bound, "jump_bound")?;
    let rho = spec.need(spec.gamma_rho, "gamma_rho")?;
    let g_inf = spec.need(spec.gamma_inf, "gamma_inf")?;
    if !(g_inf > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sup Gamma(f) must be positive, got {g_inf}"
        )));
    }
    let l = contraction_integral(spec.t, rho)?;
    let c = b * spec.lip;
    let a = 2.0 * l * g_inf / (c * c);
    closed_form(y, a, c, spec.variant)
}

/// Deviation bound for bounded jumps from a Gamma-curvature certificate
/// and the angle-bracket rate.
///
/// Needs `jump_bound`, `gamma_rho`, `squared_jump_bound`.
pub fn gamma_bracket_tail_bound(y: f64, spec: &DeviationBoundSpec) -> Result<f64> {
    check_y(y)?;
    spec.validate(false)?;
    let b = spec.need(spec.jump_bound, "jump_bound")?;
    let rho = spec.need(spec.gamma_rho, "gamma_rho")?;
    let v2 = spec.need(spec.squared_jump_bound, "squared_jump_bound")?;
    let l = contraction_integral(spec.t, rho)?;
    let c = b * spec.lip;
    let a = l * v2 / (b * b);
    closed_form(y, a, c, spec.variant)
}

/// Deviation bound for birth-death chains with bounded rates and
/// nonpositive Wasserstein curvature, in its `K -> 0` limit form when the
/// certificate is exactly zero.
///
/// Needs `wasserstein_k <= 0` and `squared_jump_bound = sup (birth + death)`.
pub fn birth_death_tail_bound(y: f64, spec: &DeviationBoundSpec) -> Result<f64> {
    check_y(y)?;
    spec.validate(false)?;
    let k = spec.need(spec.wasserstein_k, "wasserstein_k")?;
    let v2 = spec.need(spec.squared_jump_bound, "squared_jump_bound")?;
    if k > 0.0 {
        return Err(Error::InvalidParameter(
            "this form needs nonpositive curvature; use the positive-curvature bound".into(),
        ));
    }
    // a = V^2 (e^{2Kt} - 1) / (2K), continuous through K = 0 where it is tV^2
    let a = if k == 0.0 {
        spec.t * v2
    } else {
        v2 * (2.0 * k * spec.t).exp_m1() / (2.0 * k)
    };
    let c = spec.lip * (-k * spec.t).exp();
    closed_form(y, a, c, spec.variant)
}

/// Deviation bound for birth-death chains with monotone rate profiles,
/// driven by `sup Gamma(f)` alone (zero-curvature contraction weight `t`).
///
/// Needs `gamma_inf`.
pub fn birth_death_gamma_tail_bound(y: f64, spec: &DeviationBoundSpec) -> Result<f64> {
    check_y(y)?;
    spec.validate(false)?;
    let g_inf = spec.need(spec.gamma_inf, "gamma_inf")?;
    if !(g_inf > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sup Gamma(f) must be positive, got {g_inf}"
        )));
    }
    let c = spec.lip;
    let a = 2.0 * spec.t * g_inf / (c * c);
    closed_form(y, a, c, spec.variant)
}

/// Deviation bound under positive Wasserstein curvature; with the
/// `stationary` flag (or `t = infinity`) it bounds deviations under the
/// stationary distribution.
///
/// Needs `wasserstein_k > 0` and `squared_jump_bound`.
pub fn positive_curvature_tail_bound(
    y: f64,
    spec: &DeviationBoundSpec,
    stationary: bool,
) -> Result<f64> {
    check_y(y)?;
    spec.validate(true)?;
    let k = spec.need(spec.wasserstein_k, "wasserstein_k")?;
    let v2 = spec.need(spec.squared_jump_bound, "squared_jump_bound")?;
    if !(k > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "this form needs strictly positive curvature, got K = {k}"
        )));
    }
    let weight = if stationary {
        1.0 / (2.0 * k)
    } else {
        contraction_integral(spec.t, k)?
    };
    closed_form(y, weight * v2, spec.lip, spec.variant)
}

/// Deviation bound under positive Gamma-curvature, driven by the extreme
/// -state rate sum; `stationary` (or `t = infinity`) gives the stationary
/// form.
///
/// Needs `gamma_rho > 0` and `boundary_rate_sum`.
pub fn positive_gamma_tail_bound(
    y: f64,
    spec: &DeviationBoundSpec,
    stationary: bool,
) -> Result<f64> {
    check_y(y)?;
    spec.validate(true)?;
    let rho = spec.need(spec.gamma_rho, "gamma_rho")?;
    let sum = spec.need(spec.boundary_rate_sum, "boundary_rate_sum")?;
    if !(rho > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "this form needs strictly positive curvature, got rho = {rho}"
        )));
    }
    if !(sum > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "extreme-state rate sum must be positive, got {sum}"
        )));
    }
    let weight = if stationary {
        1.0 / (2.0 * rho)
    } else {
        contraction_integral(spec.t, rho)?
    };
    closed_form(y, weight * sum, spec.lip, spec.variant)
}

/// Gaussian deviation bound for the Ornstein-Uhlenbeck limit of the
/// rescaled urn chain: `exp(-y^2 / ((1 - e^{-2t}) nu lip^2))`.
pub fn ou_tail_bound(y: f64, t: f64, nu: f64, lip: f64) -> Result<f64> {
    check_y(y)?;
    check_horizon(t, true)?;
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(
            "the Gaussian bound needs a positive time horizon".into(),
        ));
    }
    if !(nu > 0.0 && nu.is_finite() && lip > 0.0 && lip.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "need positive down-rate and Lipschitz norm, got nu = {nu}, lip = {lip}"
        )));
    }
    let factor = -(-2.0 * t).exp_m1();
    let exponent = -y * y / (factor * nu * lip * lip);
    if exponent < tolerances::UNDERFLOW_EXPONENT {
        return Ok(0.0);
    }
    Ok(exponent.exp())
}

/// Pre-limit form of the Gaussian bound for the urn chain on `n` sites
/// rescaled by `sqrt(n)`; converges to [`ou_tail_bound`] as `n` grows.
pub fn ehrenfest_prelimit_tail_bound(y: f64, n: usize, t: f64, nu: f64, lip: f64) -> Result<f64> {
    check_y(y)?;
    check_horizon(t, true)?;
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one site".into()));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(
            "the pre-limit bound needs a positive time horizon".into(),
        ));
    }
    if !(nu > 0.0 && nu.is_finite() && lip > 0.0 && lip.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "need positive down-rate and Lipschitz norm, got nu = {nu}, lip = {lip}"
        )));
    }
    let factor = -(-2.0 * t).exp_m1();
    let sqrt_n = (n as f64).sqrt();
    let a = n as f64 * nu * factor / 2.0;
    let c = lip / sqrt_n;
    closed_form(y, a, c, RateVariant::Standard)
}

/// Multi-time deviation bound for the queue observed at `n` epochs within
/// `[0, total_time]`, for an l1-Lipschitz observable of the sample.
pub fn multitime_tail_bound(
    y: f64,
    n: usize,
    total_time: f64,
    lam: f64,
    nu: f64,
    lip_n: f64,
    variant: RateVariant,
) -> Result<f64> {
    check_y(y)?;
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one epoch".into()));
    }
    if !(total_time > 0.0 && total_time.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "need a positive finite horizon, got {total_time}"
        )));
    }
    if !(lam >= 0.0 && nu >= 0.0 && lam + nu > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need nonnegative rates with lam + nu > 0, got {lam}, {nu}"
        )));
    }
    if !(lip_n > 0.0 && lip_n.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "l1 Lipschitz constant must be positive, got {lip_n}"
        )));
    }
    closed_form(y, total_time * (lam + nu), n as f64 * lip_n, variant)
}

/// Centered moment bound for the queue: `E[e^{s(u(X_t) - E u(X_t))}]` is
/// at most `exp(t (lam + nu) (e^{s z} - s z - 1))` with `z` the Lipschitz
/// norm of `u`. Returned as that right-hand side.
pub fn mm1_mgf_bound(s: f64, t: f64, lam: f64, nu: f64, lip1: f64) -> Result<f64> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "moment parameter must be positive and finite, got {s}"
        )));
    }
    check_horizon(t, false)?;
    if !(lam >= 0.0 && nu >= 0.0) || !(lip1 > 0.0 && lip1.is_finite()) {
        return Err(Error::InvalidParameter(
            "need nonnegative rates and a positive Lipschitz norm".into(),
        ));
    }
    let z = s * lip1;
    Ok((t * (lam + nu) * (z.exp_m1() - z)).exp())
}

/// The moment growth rate of an observable: the function whose integral
/// the optimized bound minimizes. Infinite when the inner exponential
/// overflows, which doubles as the detector for the largest usable moment
/// parameter.
pub fn moment_growth_rate(
    s: f64,
    rates: &GeneralRates,
    f: &StateFunction,
    t: f64,
    rho: f64,
    d: &Metric,
) -> Result<f64> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "moment parameter must be positive and finite, got {s}"
        )));
    }
    check_horizon(t, rho > 0.0)?;
    d.check_states(rates.n_states())?;
    if f.len() != rates.n_states() {
        return Err(Error::DimensionMismatch {
            expected: rates.n_states(),
            found: f.len(),
        });
    }
    let lip = lipschitz_seminorm(f, d)?;
    if lip == 0.0 {
        return Err(Error::InvalidParameter(
            "constant observables have no moment growth".into(),
        ));
    }
    let g_inf = gamma(rates, f)?.sup_norm();
    let l = contraction_integral(t, rho)?;

    let mut max_term: f64 = 0.0;
    for x in 0..rates.n_states() {
        let mut sum = 0.0;
        for &(y, q) in rates.row(x) {
            let dist = d.distance(x, y);
            let df = f[y] - f[x];
            let ratio = (s * lip * dist).exp_m1() / (lip * dist);
            sum += df * df * ratio * ratio * q;
            if !sum.is_finite() {
                return Ok(f64::INFINITY);
            }
        }
        max_term = max_term.max(sum);
    }
    Ok(std::f64::consts::SQRT_2 * l * g_inf.sqrt() * max_term.sqrt())
}

/// Controls for the optimized bound's bracket search and quadrature.
#[derive(Debug, Clone, Copy)]
pub struct OptimizerConfig {
    /// Relative tolerance of the adaptive quadrature.
    pub quadrature_rel_tol: f64,
    /// Relative width at which the root bracket stops shrinking.
    pub bisection_rel_tol: f64,
    /// Starting point of the geometric bracket expansion.
    pub bracket_start: f64,
    /// Cap on bracket doublings before giving up.
    pub max_doublings: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            quadrature_rel_tol: tolerances::QUADRATURE_REL,
            bisection_rel_tol: 1e-12,
            bracket_start: 1e-6,
            max_doublings: 200,
        }
    }
}

// the recursion threads every endpoint evaluation to avoid recomputing f
#[allow(clippy::too_many_arguments)]
fn adaptive_simpson(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let tol = rel_tol * whole.abs().max(f64::MIN_POSITIVE);
    adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// The optimized deviation bound: minimizes `integral_0^s (psi - y)` over
/// the moment parameter `s` by solving `psi(s) = y`, then exponentiates.
/// Any `s` gives a valid upper bound, so bracket and bisection error only
/// loosen the result, never break it.
pub fn optimized_tail_bound(
    y: f64,
    rates: &GeneralRates,
    f: &StateFunction,
    t: f64,
    rho: f64,
    d: &Metric,
    cfg: &OptimizerConfig,
) -> Result<f64> {
    check_y(y)?;
    let psi = |s: f64| -> Result<f64> { moment_growth_rate(s, rates, f, t, rho, d) };

    // geometric expansion until psi exceeds y; infinity counts as exceeded
    let mut hi = cfg.bracket_start;
    let mut lo = 0.0;
    let mut doublings = 0;
    while psi(hi)? <= y {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > cfg.max_doublings {
            return Err(Error::BracketFailure(format!(
                "moment growth never reached y = {y} after {doublings} doublings"
            )));
        }
    }
    while hi - lo > cfg.bisection_rel_tol * hi {
        let mid = 0.5 * (lo + hi);
        if psi(mid)? <= y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s_star = 0.5 * (lo + hi);

    let integrand = |s: f64| -> f64 {
        if s == 0.0 {
            0.0
        } else {
            psi(s).unwrap_or(f64::INFINITY)
        }
    };
    let integral = integrate(&integrand, 0.0, s_star, cfg.quadrature_rel_tol);
    let exponent = integral - y * s_star;
    if exponent < tolerances::UNDERFLOW_EXPONENT {
        return Ok(0.0);
    }
    Ok(exponent.exp().min(1.0))
}

/// A bound evaluated over a deviation grid, with underflow flags.
#[derive(Debug, Clone)]
pub struct BoundCurve {
    y_grid: Vec<f64>,
    values: Vec<f64>,
    underflow: Vec<bool>,
}

impl BoundCurve {
    /// Evaluates `bound` over a positive, strictly increasing grid.
    pub fn evaluate(y_grid: &[f64], bound: impl Fn(f64) -> Result<f64>) -> Result<Self> {
        if y_grid.is_empty() {
            return Err(Error::InvalidParameter("empty deviation grid".into()));
        }
        for pair in y_grid.windows(2) {
            if !(pair[0] < pair[1]) {
                return Err(Error::InvalidParameter(
                    "deviation grid must be strictly increasing".into(),
                ));
            }
        }
        if !(y_grid[0] > 0.0) {
            return Err(Error::InvalidParameter(
                "deviation grid must be positive".into(),
            ));
        }
        let values: Vec<f64> = y_grid.iter().map(|&y| bound(y)).collect::<Result<_>>()?;
        let underflow = values.iter().map(|&v| v == 0.0).collect();
        Ok(Self {
            y_grid: y_grid.to_vec(),
            values,
            underflow,
        })
    }

    pub fn y_grid(&self) -> &[f64] {
        &self.y_grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// True where the bound underflowed to exact zero.
    pub fn underflow_flags(&self) -> &[bool] {
        &self.underflow
    }
}
