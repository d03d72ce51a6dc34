//! JSON descriptions of chains, either explicit rate vectors or a named
//! preset family. Used by the command line tools and handy in tests.

use serde::{Deserialize, Serialize};

use crate::chain_model::{BirthDeathRates, Metric};
use crate::error::{Error, Result};

/// Metric description: `{"kind": "unit"}` or
/// `{"kind": "weighted", "weights": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricSpec {
    Unit,
    Weighted { weights: Vec<f64> },
}

impl MetricSpec {
    fn build(&self) -> Result<Metric> {
        match self {
            MetricSpec::Unit => Ok(Metric::unit()),
            MetricSpec::Weighted { weights } => Metric::weighted(weights.clone()),
        }
    }
}

/// A chain description as read from JSON.
///
/// Either a preset, selected by a `"preset"` key:
///
/// ```json
/// {"preset": "ehrenfest", "n": 20, "lambda": 0.5, "nu": 0.5}
/// {"preset": "mm1", "lambda": 1.0, "nu": 2.0, "truncation_n": 200}
/// ```
///
/// or explicit rate vectors of length `n + 1`:
///
/// ```json
/// {"n": 2, "truncated": false, "lambda": [1.0, 0.5, 0.0], "nu": [0.0, 1.0, 2.0]}
/// ```
///
/// Both forms accept optional `"metric"` (default unit) and
/// `"boundary_margin"` keys.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChainSpec {
    Preset(PresetSpec),
    Explicit(ExplicitSpec),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum PresetSpec {
    Ehrenfest {
        n: usize,
        lambda: f64,
        nu: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        metric: Option<MetricSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        boundary_margin: Option<usize>,
    },
    Mm1 {
        lambda: f64,
        nu: f64,
        truncation_n: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        metric: Option<MetricSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        boundary_margin: Option<usize>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplicitSpec {
    pub n: usize,
    pub truncated: bool,
    pub lambda: Vec<f64>,
    pub nu: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<MetricSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_margin: Option<usize>,
}

impl ChainSpec {
    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Validates the description and builds the rates and metric.
    pub fn build(&self) -> Result<(BirthDeathRates, Metric)> {
        let (rates, metric_spec, margin) = match self {
            ChainSpec::Preset(PresetSpec::Ehrenfest {
                n,
                lambda,
                nu,
                metric,
                boundary_margin,
            }) => (
                BirthDeathRates::ehrenfest(*n, *lambda, *nu)?,
                metric,
                boundary_margin,
            ),
            ChainSpec::Preset(PresetSpec::Mm1 {
                lambda,
                nu,
                truncation_n,
                metric,
                boundary_margin,
            }) => (
                BirthDeathRates::mm1(*lambda, *nu, *truncation_n)?,
                metric,
                boundary_margin,
            ),
            ChainSpec::Explicit(spec) => {
                if spec.lambda.len() != spec.n + 1 {
                    return Err(Error::InvalidParameter(format!(
                        "lambda has {} entries, expected n + 1 = {}",
                        spec.lambda.len(),
                        spec.n + 1
                    )));
                }
                (
                    BirthDeathRates::new(spec.lambda.clone(), spec.nu.clone(), spec.truncated)?,
                    &spec.metric,
                    &spec.boundary_margin,
                )
            }
        };
        let rates = match margin {
            Some(m) => rates.with_boundary_margin(*m),
            None => rates,
        };
        let metric = match metric_spec {
            Some(spec) => {
                let d = spec.build()?;
                d.check_states(rates.n_states())?;
                d
            }
            None => Metric::unit(),
        };
        Ok((rates, metric))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_explicit_rates() {
        let text = r#"{
            "n": 2,
            "truncated": false,
            "lambda": [1.0, 0.5, 0.0],
            "nu": [0.0, 1.0, 2.0],
            "metric": {"kind": "weighted", "weights": [0.5, 2.0]}
        }"#;
        let (rates, metric) = ChainSpec::from_json_str(text).unwrap().build().unwrap();
        assert_eq!(rates.n_states(), 3);
        assert_eq!(rates.birth(1), 0.5);
        assert_eq!(metric.distance(0, 2), 2.5);
    }

    #[test]
    fn parses_presets() {
        let urn = ChainSpec::from_json_str(
            r#"{"preset": "ehrenfest", "n": 20, "lambda": 0.5, "nu": 0.5}"#,
        )
        .unwrap();
        let (rates, metric) = urn.build().unwrap();
        assert_eq!(rates.max_state(), 20);
        assert_eq!(rates.birth(0), 10.0);
        assert!(metric.is_unit());

        let queue = ChainSpec::from_json_str(
            r#"{"preset": "mm1", "lambda": 1.0, "nu": 2.0, "truncation_n": 50, "boundary_margin": 4}"#,
        )
        .unwrap();
        let (rates, _) = queue.build().unwrap();
        assert!(rates.space().truncated());
        assert_eq!(rates.boundary_margin(), 4);
        assert_eq!(rates.scan_top(), 46);
    }

    #[test]
    fn rejects_inconsistent_lengths_and_metrics() {
        let short = r#"{"n": 3, "truncated": false, "lambda": [1.0, 0.0], "nu": [0.0, 1.0]}"#;
        assert!(ChainSpec::from_json_str(short).unwrap().build().is_err());

        let bad_metric = r#"{
            "n": 2, "truncated": false,
            "lambda": [1.0, 1.0, 0.0], "nu": [0.0, 1.0, 1.0],
            "metric": {"kind": "weighted", "weights": [1.0]}
        }"#;
        assert!(ChainSpec::from_json_str(bad_metric).unwrap().build().is_err());
    }

    #[test]
    fn rejects_unknown_preset_names() {
        assert!(ChainSpec::from_json_str(r#"{"preset": "mm17", "lambda": 1.0}"#).is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let spec = ChainSpec::Preset(PresetSpec::Mm1 {
            lambda: 1.0,
            nu: 2.0,
            truncation_n: 50,
            metric: None,
            boundary_margin: None,
        });
        let text = serde_json::to_string(&spec).unwrap();
        let back = ChainSpec::from_json_str(&text).unwrap();
        let (a, _) = spec.build().unwrap();
        let (b, _) = back.build().unwrap();
        assert_eq!(a.birth(3), b.birth(3));
        assert_eq!(a.space().truncated(), b.space().truncated());
    }
}
