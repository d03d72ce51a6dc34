use crate::error::{Error, Result};

/// A path metric on the integer states `0..n`.
///
/// The distance between `x` and `y` is the sum of edge weights between
/// them: `d(x, y) = w_x + w_{x+1} + ... + w_{y-1}` for `x < y`. The unit
/// variant has every edge weight equal to one, so `d(x, y) = |x - y|`.
/// Path metrics make adjacent states carry all metric information, which
/// is what lets Lipschitz seminorms and Wasserstein contraction factors be
/// computed from nearest-neighbour data alone.
#[derive(Debug, Clone, PartialEq)]
pub struct Metric {
    kind: MetricKind,
}

#[derive(Debug, Clone, PartialEq)]
enum MetricKind {
    Unit,
    Weighted {
        weights: Vec<f64>,
        /// cumulative[k] = w_0 + ... + w_{k-1}, with cumulative[0] = 0.
        cumulative: Vec<f64>,
    },
}

impl Metric {
    pub fn unit() -> Self {
        Self {
            kind: MetricKind::Unit,
        }
    }

    /// Builds a weighted path metric from per-edge weights; `weights[k]`
    /// is the distance between states `k` and `k+1`.
    pub fn weighted(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidParameter(
                "weighted metric needs at least one edge weight".into(),
            ));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w <= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "edge weight {w} is not strictly positive and finite"
            )));
        }
        let mut cumulative = Vec::with_capacity(weights.len() + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in &weights {
            acc += w;
            cumulative.push(acc);
        }
        Ok(Self {
            kind: MetricKind::Weighted {
                weights,
                cumulative,
            },
        })
    }

    pub fn is_unit(&self) -> bool {
        matches!(self.kind, MetricKind::Unit)
    }

    /// Number of states a weighted metric is pinned to, if any.
    pub fn pinned_states(&self) -> Option<usize> {
        match &self.kind {
            MetricKind::Unit => None,
            MetricKind::Weighted { weights, .. } => Some(weights.len() + 1),
        }
    }

    /// Errors unless the metric is usable on a space of `n_states` states.
    pub fn check_states(&self, n_states: usize) -> Result<()> {
        match self.pinned_states() {
            Some(n) if n != n_states => Err(Error::DimensionMismatch {
                expected: n_states,
                found: n,
            }),
            _ => Ok(()),
        }
    }

    pub fn distance(&self, x: usize, y: usize) -> f64 {
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        match &self.kind {
            MetricKind::Unit => (hi - lo) as f64,
            MetricKind::Weighted { cumulative, .. } => {
                assert!(
                    hi < cumulative.len(),
                    "state {hi} outside the weighted metric's range"
                );
                cumulative[hi] - cumulative[lo]
            }
        }
    }

    /// Distance between adjacent states `x` and `x + 1`.
    pub fn edge(&self, x: usize) -> f64 {
        match &self.kind {
            MetricKind::Unit => 1.0,
            MetricKind::Weighted { weights, .. } => {
                assert!(
                    x < weights.len(),
                    "edge {x} outside the weighted metric's range"
                );
                weights[x]
            }
        }
    }

    pub fn edge_weights(&self) -> Option<&[f64]> {
        match &self.kind {
            MetricKind::Unit => None,
            MetricKind::Weighted { weights, .. } => Some(weights),
        }
    }
}
