//! The four subcommands: certificates, bound curves, tail experiments,
//! and the verification suite.
//!
//! Every command resolves its chain and observable from the merged config,
//! writes its data files plus a manifest into the run directory, and maps
//! its outcome onto the process exit code: clean, violation found, or a
//! config problem (reported as an error by the caller).

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use log::info;
use serde::Serialize;

use curvctmc_core::bounds::{
    self, DeviationBoundSpec, OptimizerConfig, RateVariant,
};
use curvctmc_core::chain_model::{
    gamma, jump_bound, lipschitz_seminorm, squared_jump_bound, ChainSpec, GeneralRates, Metric,
    PresetSpec, StateFunction,
};
use curvctmc_core::curvature::{
    default_test_functions, gamma_criterion, gamma_curvature_estimate, wasserstein_criterion,
    wasserstein_curvature_estimate, CurvatureCertificate, CurvatureEstimate,
};
use curvctmc_core::semigroup::UniformizationConfig;
use curvctmc_core::simulate::{
    mm1_multisample_tail, monte_carlo_tail, MultiLipschitzFn, TailOptions, TailVerdict,
};
use curvctmc_core::tolerances;
use curvctmc_core::verify::{all_passed, run_all, CheckResult, VerifyConfig};
use curvctmc_core::{Error, Result};

use crate::config::{ExperimentConfig, FunctionSpec};
use crate::output::{write_manifest, RunDir, RunManifest};

/// How a completed run went. Errors are a third, separate channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Clean,
    Violation,
}

/// Everything a command needs besides its own logic.
pub struct CommandCtx {
    pub config: ExperimentConfig,
    /// Directory of the config file, for resolving relative scenario paths.
    pub base_dir: PathBuf,
    pub run: RunDir,
    pub run_id: String,
    pub seed: u64,
    pub started: Instant,
}

impl CommandCtx {
    fn finish(&self, command: &'static str, checks: &[CheckResult]) -> Result<()> {
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION"),
            command,
            run_id: &self.run_id,
            seed: self.seed,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            config: &self.config,
            checks,
        };
        write_manifest(&self.run, &manifest)
    }
}

const KNOWN_BOUNDS: &str = "wasserstein, gamma, gamma-bracket, birth-death, birth-death-gamma, \
                            positive-curvature, positive-gamma, ou, prelimit, multitime, optimized";

/// Parameters only a preset scenario carries; the limit and multi-time
/// forms are stated for the named models and need them.
struct PresetParams {
    lambda: f64,
    nu: f64,
    ehrenfest_n: Option<usize>,
    truncation_n: Option<usize>,
}

fn preset_params(spec: &ChainSpec) -> Option<PresetParams> {
    match spec {
        ChainSpec::Preset(PresetSpec::Ehrenfest { n, lambda, nu, .. }) => Some(PresetParams {
            lambda: *lambda,
            nu: *nu,
            ehrenfest_n: Some(*n),
            truncation_n: None,
        }),
        ChainSpec::Preset(PresetSpec::Mm1 {
            lambda,
            nu,
            truncation_n,
            ..
        }) => Some(PresetParams {
            lambda: *lambda,
            nu: *nu,
            ehrenfest_n: None,
            truncation_n: Some(*truncation_n),
        }),
        ChainSpec::Explicit(_) => None,
    }
}

/// Chain, observable, and every certificate or constant a bound formula
/// might ask for, assembled once per run.
struct BoundInputs {
    general: GeneralRates,
    metric: Metric,
    /// Absent when the observable is a multi-time coordinate average.
    f: Option<StateFunction>,
    lip: f64,
    jump: f64,
    v2: f64,
    k: f64,
    /// Certified Gamma curvature, present only when the criterion holds.
    rho: Option<f64>,
    gamma_inf: Option<f64>,
    boundary_sum: f64,
    preset: Option<PresetParams>,
}

impl BoundInputs {
    fn assemble(ctx: &CommandCtx) -> Result<Self> {
        let spec = ctx.config.require_scenario(&ctx.base_dir)?;
        let preset = preset_params(&spec);
        let (chain, metric) = spec.build()?;
        let general = chain.to_general();
        let wcert = wasserstein_criterion(&chain)?;
        let gcert = gamma_criterion(&chain)?;
        let function = ctx.config.function();
        let (f, lip) = match &function {
            FunctionSpec::CoordinateAverage { arity } => {
                if *arity == 0 {
                    return Err(Error::InvalidParameter(
                        "a coordinate average needs at least one coordinate".into(),
                    ));
                }
                (None, 1.0 / *arity as f64)
            }
            _ => {
                let f = function.state_function(general.n_states())?;
                let lip = lipschitz_seminorm(&f, &metric)?;
                (Some(f), lip)
            }
        };
        let gamma_inf = match &f {
            Some(f) => Some(gamma(&general, f)?.sup_norm()),
            None => None,
        };
        let boundary_sum = chain.birth(0) + chain.death(chain.max_state());
        Ok(Self {
            jump: jump_bound(&general, &metric)?,
            v2: squared_jump_bound(&general, &metric)?,
            k: wcert.value,
            rho: gcert.satisfied.then_some(gcert.value),
            general,
            metric,
            f,
            lip,
            gamma_inf,
            boundary_sum,
            preset,
        })
    }

    fn spec(&self, t: f64, variant: RateVariant) -> DeviationBoundSpec {
        DeviationBoundSpec {
            t,
            lip: self.lip,
            jump_bound: Some(self.jump),
            squared_jump_bound: Some(self.v2),
            wasserstein_k: Some(self.k),
            gamma_rho: self.rho,
            gamma_inf: self.gamma_inf,
            boundary_rate_sum: Some(self.boundary_sum),
            variant,
        }
    }

    fn preset(&self, what: &str) -> Result<&PresetParams> {
        self.preset
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter(format!("{what} needs a preset scenario")))
    }

    fn certified_rho(&self) -> Result<f64> {
        self.rho.ok_or_else(|| {
            Error::InvalidParameter(
                "the Gamma criterion does not hold on this chain, so no certified rate is available"
                    .into(),
            )
        })
    }
}

/// A bound's time column: a fixed horizon or the stationary form.
#[derive(Clone, Copy)]
enum Horizon {
    At(f64),
    Stationary,
}

impl Horizon {
    fn label(self) -> String {
        match self {
            Horizon::At(t) => format!("{t}"),
            Horizon::Stationary => "stationary".into(),
        }
    }

    fn is_stationary(self) -> bool {
        matches!(self, Horizon::Stationary)
    }

    fn spec_t(self) -> f64 {
        match self {
            Horizon::At(t) => t,
            Horizon::Stationary => f64::INFINITY,
        }
    }

    fn finite(self) -> Result<f64> {
        match self {
            Horizon::At(t) => Ok(t),
            Horizon::Stationary => Err(Error::InvalidParameter(
                "only the positive-curvature forms have stationary versions".into(),
            )),
        }
    }
}

fn evaluate_bound(
    inputs: &BoundInputs,
    name: &str,
    variant: RateVariant,
    horizon: Horizon,
    y: f64,
    times: &[f64],
) -> Result<f64> {
    match name {
        "wasserstein" => bounds::wasserstein_tail_bound(y, &inputs.spec(horizon.finite()?, variant)),
        "gamma" => bounds::gamma_tail_bound(y, &inputs.spec(horizon.finite()?, variant)),
        "gamma-bracket" => {
            bounds::gamma_bracket_tail_bound(y, &inputs.spec(horizon.finite()?, variant))
        }
        "birth-death" => bounds::birth_death_tail_bound(y, &inputs.spec(horizon.finite()?, variant)),
        "birth-death-gamma" => {
            bounds::birth_death_gamma_tail_bound(y, &inputs.spec(horizon.finite()?, variant))
        }
        "positive-curvature" => bounds::positive_curvature_tail_bound(
            y,
            &inputs.spec(horizon.spec_t(), variant),
            horizon.is_stationary(),
        ),
        "positive-gamma" => bounds::positive_gamma_tail_bound(
            y,
            &inputs.spec(horizon.spec_t(), variant),
            horizon.is_stationary(),
        ),
        "ou" => {
            let p = inputs.preset("the diffusion-limit bound")?;
            bounds::ou_tail_bound(y, horizon.finite()?, p.nu, inputs.lip)
        }
        "prelimit" => {
            let p = inputs.preset("the pre-limit bound")?;
            let n = p.ehrenfest_n.ok_or_else(|| {
                Error::InvalidParameter("the pre-limit bound is stated for the urn preset".into())
            })?;
            bounds::ehrenfest_prelimit_tail_bound(y, n, horizon.finite()?, p.nu, inputs.lip)
        }
        "multitime" => {
            let p = inputs.preset("the multi-time bound")?;
            if p.truncation_n.is_none() {
                return Err(Error::InvalidParameter(
                    "the multi-time bound is stated for the queue preset".into(),
                ));
            }
            let total = *times.last().expect("times checked non-empty");
            bounds::multitime_tail_bound(y, times.len(), total, p.lambda, p.nu, inputs.lip, variant)
        }
        "optimized" => {
            let f = inputs.f.as_ref().ok_or_else(|| {
                Error::InvalidParameter("the optimized bound needs a single-time observable".into())
            })?;
            bounds::optimized_tail_bound(
                y,
                &inputs.general,
                f,
                horizon.finite()?,
                inputs.certified_rho()?,
                &inputs.metric,
                &OptimizerConfig::default(),
            )
        }
        other => Err(Error::InvalidParameter(format!(
            "unknown bound \"{other}\"; known bounds: {KNOWN_BOUNDS}"
        ))),
    }
}

fn variant_label(variant: RateVariant) -> &'static str {
    match variant {
        RateVariant::Standard => "standard",
        RateVariant::Bennett => "bennett",
    }
}

fn require_y_grid(config: &ExperimentConfig) -> Result<&[f64]> {
    if config.y_grid.is_empty() {
        return Err(Error::MissingParameter("y_grid"));
    }
    Ok(&config.y_grid)
}

fn require_times(config: &ExperimentConfig) -> Result<&[f64]> {
    if config.times.is_empty() {
        return Err(Error::MissingParameter("times"));
    }
    Ok(&config.times)
}

#[derive(Serialize)]
struct SideReport<'a> {
    certificate: &'a CurvatureCertificate,
    estimate: &'a CurvatureEstimate,
    sandwich_pass: bool,
}

#[derive(Serialize)]
struct CurvatureReport<'a> {
    wasserstein: SideReport<'a>,
    gamma: SideReport<'a>,
}

/// Certify both curvature criteria, measure the actual contraction rates
/// on a time grid, and check that each certificate sits below what the
/// chain really does.
pub fn cmd_curvature(ctx: &CommandCtx) -> Result<Outcome> {
    let spec = ctx.config.require_scenario(&ctx.base_dir)?;
    let (chain, metric) = spec.build()?;
    let general = chain.to_general();
    let t_grid: Vec<f64> = if ctx.config.times.is_empty() {
        vec![0.5, 1.0]
    } else {
        ctx.config.times.clone()
    };
    let ucfg = UniformizationConfig::default();

    let wcert = wasserstein_criterion(&chain)?;
    let gcert = gamma_criterion(&chain)?;
    let west = wasserstein_curvature_estimate(&general, &metric, &t_grid, &ucfg)?;
    let test_fns = default_test_functions(general.n_states(), 8, ctx.seed);
    let gest = gamma_curvature_estimate(&general, &t_grid, &test_fns, &ucfg)?;

    let slack = tolerances::SANDWICH_SLACK;
    let w_ok = west.values.iter().all(|&v| wcert.value <= v + slack);
    let g_ok = gest.values.iter().all(|&v| gcert.value <= v + slack);

    let report = CurvatureReport {
        wasserstein: SideReport {
            certificate: &wcert,
            estimate: &west,
            sandwich_pass: w_ok,
        },
        gamma: SideReport {
            certificate: &gcert,
            estimate: &gest,
            sandwich_pass: g_ok,
        },
    };
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    ctx.run.write_atomic("curvature.json", text.as_bytes())?;

    println!(
        "wasserstein: certified K = {}{}",
        wcert.value,
        if wcert.satisfied { "" } else { " (criterion not valid)" }
    );
    println!(
        "gamma: certified rho = {}{}",
        gcert.value,
        if gcert.satisfied { "" } else { " (criterion not valid)" }
    );
    for (i, &t) in t_grid.iter().enumerate() {
        println!(
            "t = {t}: empirical rates wasserstein {}, gamma {}",
            west.values[i], gest.values[i]
        );
    }
    let ok = w_ok && g_ok;
    println!("sandwich: {}", if ok { "pass" } else { "fail" });

    ctx.finish("curvature", &[])?;
    Ok(if ok { Outcome::Clean } else { Outcome::Violation })
}

struct BoundRow {
    name: String,
    variant: &'static str,
    t_label: String,
    y: f64,
    value: f64,
}

/// Evaluate the selected closed forms over the horizon and level grids,
/// write the full table, and print the tightest bound per grid point.
pub fn cmd_bound(ctx: &CommandCtx) -> Result<Outcome> {
    let config = &ctx.config;
    if config.bounds.is_empty() {
        return Err(Error::MissingParameter("bounds"));
    }
    let inputs = BoundInputs::assemble(ctx)?;
    let y_grid = require_y_grid(config)?;
    let variants = config.variants();

    let horizons: Vec<Horizon> = if config.stationary {
        for name in &config.bounds {
            if name != "positive-curvature" && name != "positive-gamma" {
                return Err(Error::InvalidParameter(format!(
                    "\"{name}\" has no stationary form; only the positive-curvature forms do"
                )));
            }
        }
        vec![Horizon::Stationary]
    } else {
        require_times(config)?.iter().map(|&t| Horizon::At(t)).collect()
    };

    let mut rows: Vec<BoundRow> = Vec::new();
    for name in &config.bounds {
        // the multi-time form spans the whole epoch list, so it gets one
        // row at the final horizon rather than one per entry
        let per_bound: Vec<Horizon> = if name == "multitime" {
            vec![Horizon::At(*require_times(config)?.last().expect("non-empty"))]
        } else {
            horizons.clone()
        };
        for &variant in &variants {
            for &horizon in &per_bound {
                for &y in y_grid {
                    let value =
                        evaluate_bound(&inputs, name, variant, horizon, y, &config.times)?;
                    rows.push(BoundRow {
                        name: name.clone(),
                        variant: variant_label(variant),
                        t_label: horizon.label(),
                        y,
                        value,
                    });
                }
            }
        }
    }

    let mut csv = String::from("bound,variant,t,y,value\n");
    for row in &rows {
        writeln!(csv, "{},{},{},{},{}", row.name, row.variant, row.t_label, row.y, row.value)
            .expect("string write");
    }
    ctx.run.write_atomic("bounds.csv", csv.as_bytes())?;

    let mut seen: Vec<(String, f64)> = Vec::new();
    for row in &rows {
        let key = (row.t_label.clone(), row.y);
        if !seen.contains(&key) {
            seen.push(key);
        }
    }
    for (t_label, y) in &seen {
        let best = rows
            .iter()
            .filter(|r| r.t_label == *t_label && r.y == *y)
            .min_by(|a, b| a.value.total_cmp(&b.value))
            .expect("at least one row per key");
        println!(
            "t = {t_label}, y = {y}: tightest {} ({}) = {}",
            best.name, best.variant, best.value
        );
    }

    ctx.finish("bound", &[])?;
    Ok(Outcome::Clean)
}

/// Sample the observable at the configured horizon and compare the
/// empirical tail against one chosen bound, level by level.
pub fn cmd_tail(ctx: &CommandCtx) -> Result<Outcome> {
    let config = &ctx.config;
    if config.stationary {
        return Err(Error::InvalidParameter(
            "tail runs sample a finite horizon; drop the stationary flag".into(),
        ));
    }
    let name = match config.bounds.as_slice() {
        [one] => one.as_str(),
        [] => return Err(Error::MissingParameter("bounds")),
        _ => {
            return Err(Error::InvalidParameter(
                "a tail run compares against exactly one bound".into(),
            ))
        }
    };
    let variants = config.variants();
    if variants.len() != 1 {
        return Err(Error::InvalidParameter(
            "pick one variant for a tail run".into(),
        ));
    }
    let variant = variants[0];

    let inputs = BoundInputs::assemble(ctx)?;
    let y_grid = require_y_grid(config)?;
    let times = require_times(config)?;
    let options = TailOptions::default();

    let est = match config.function() {
        FunctionSpec::CoordinateAverage { arity } => {
            if arity != times.len() {
                return Err(Error::InvalidParameter(format!(
                    "the coordinate average has arity {arity} but {} times were given",
                    times.len()
                )));
            }
            let p = inputs.preset("the multi-time estimator")?;
            let truncation = p.truncation_n.ok_or_else(|| {
                Error::InvalidParameter("the multi-time estimator is stated for the queue preset".into())
            })?;
            mm1_multisample_tail(
                p.lambda,
                p.nu,
                truncation,
                config.x0(),
                times,
                &MultiLipschitzFn::coordinate_average(arity)?,
                y_grid,
                config.n_paths(),
                config.confidence(),
                ctx.seed,
                &options,
            )?
        }
        _ => {
            if times.len() != 1 {
                return Err(Error::InvalidParameter(
                    "a single-argument observable takes exactly one time".into(),
                ));
            }
            let f = inputs.f.as_ref().expect("single-argument observable");
            monte_carlo_tail(
                &inputs.general,
                config.x0(),
                f,
                times[0],
                y_grid,
                config.n_paths(),
                config.confidence(),
                ctx.seed,
                &options,
            )?
        }
    };

    let horizon = if name == "multitime" {
        Horizon::At(*times.last().expect("non-empty"))
    } else {
        Horizon::At(times[0])
    };
    let analytic: Vec<f64> = y_grid
        .iter()
        .map(|&y| evaluate_bound(&inputs, name, variant, horizon, y, times))
        .collect::<Result<_>>()?;

    let csv = est.to_csv_string(&analytic)?;
    ctx.run.write_atomic("tails.csv", csv.as_bytes())?;

    let verdicts = est.verdicts(&analytic)?;
    for (i, verdict) in verdicts.iter().enumerate() {
        println!(
            "y = {}: upper {} vs {} bound {} -> {}",
            y_grid[i],
            est.upper_bounds()[i],
            name,
            analytic[i],
            verdict.as_str()
        );
    }
    if verdicts.iter().all(|v| *v == TailVerdict::Untested) {
        println!("all levels untested at this path budget");
    }

    ctx.finish("tail", &[])?;
    let failed = verdicts.contains(&TailVerdict::Fail);
    Ok(if failed { Outcome::Violation } else { Outcome::Clean })
}

/// Run the whole verification suite and report one line per check.
pub fn cmd_verify(ctx: &CommandCtx) -> Result<Outcome> {
    let vcfg = VerifyConfig {
        n_paths: ctx.config.n_paths(),
        seed: ctx.seed,
        fault_scale: ctx.config.fault_scale.unwrap_or(1.0),
    };
    info!(
        "verification suite: {} paths, seed {}, scale {}",
        vcfg.n_paths, vcfg.seed, vcfg.fault_scale
    );
    let results = run_all(&vcfg)?;
    for (i, check) in results.iter().enumerate() {
        println!(
            "check {:02} {}: {} ({})",
            i + 1,
            check.name,
            check.status.as_str(),
            check.detail
        );
    }
    let ok = all_passed(&results);
    println!(
        "{}",
        if ok {
            "verification suite: all checks passed"
        } else {
            "verification suite: FAILED"
        }
    );
    ctx.finish("verify", &results)?;
    Ok(if ok { Outcome::Clean } else { Outcome::Violation })
}
