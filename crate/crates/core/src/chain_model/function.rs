use std::ops::Index;

use crate::error::{Error, Result};

/// A real-valued function on the states `0..n_states`, stored densely.
///
/// Values are validated to be finite at every construction point, so the
/// operators in this crate can assume their inputs carry no NaN or
/// infinity.
#[derive(Debug, Clone, PartialEq)]
pub struct StateFunction {
    values: Vec<f64>,
}

impl StateFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter(
                "state function needs at least one value".into(),
            ));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "state function value {v} is not finite"
            )));
        }
        Ok(Self { values })
    }

    pub fn from_fn(n_states: usize, f: impl FnMut(usize) -> f64) -> Result<Self> {
        Self::new((0..n_states).map(f).collect())
    }

    /// f(x) = x.
    pub fn identity(n_states: usize) -> Self {
        Self {
            values: (0..n_states).map(|x| x as f64).collect(),
        }
    }

    pub fn constant(n_states: usize, c: f64) -> Result<Self> {
        Self::new(vec![c; n_states])
    }

    /// The indicator of a single state.
    pub fn indicator(n_states: usize, site: usize) -> Result<Self> {
        if site >= n_states {
            return Err(Error::InvalidParameter(format!(
                "indicator site {site} outside 0..{n_states}"
            )));
        }
        let mut values = vec![0.0; n_states];
        values[site] = 1.0;
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// True when every value equals the first bitwise-comparable one.
    pub fn is_constant(&self) -> bool {
        self.values.iter().all(|&v| v == self.values[0])
    }

    /// Pointwise image under `f`; fails if `f` produces a non-finite value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise combination of two functions on the same state space.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: other.len(),
            });
        }
        Self::new(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub(crate) fn from_values_unchecked(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self { values }
    }
}

impl Index<usize> for StateFunction {
    type Output = f64;

    fn index(&self, x: usize) -> &f64 {
        &self.values[x]
    }
}
