use crate::error::{Error, Result};

/// The integer state space `{0, 1, ..., max_state}`.
///
/// `truncated` marks a finite range standing in for the whole of the
/// nonnegative integers: the top state then reflects by construction and
/// results near it are artifacts of the cutoff rather than features of the
/// modelled chain. Criterion scans exclude a margin of top states on
/// truncated spaces, and Monte Carlo entry points guard on the mass the
/// kernel pushes into that margin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateSpace {
    max_state: usize,
    truncated: bool,
}

impl StateSpace {
    pub fn new(max_state: usize, truncated: bool) -> Result<Self> {
        if max_state == 0 {
            return Err(Error::InvalidParameter(
                "state space needs at least two states".into(),
            ));
        }
        Ok(Self {
            max_state,
            truncated,
        })
    }

    pub fn max_state(&self) -> usize {
        self.max_state
    }

    pub fn n_states(&self) -> usize {
        self.max_state + 1
    }

    pub fn truncated(&self) -> bool {
        self.truncated
    }

    pub fn contains(&self, x: usize) -> bool {
        x <= self.max_state
    }
}

/// Default number of top states excluded from criterion scans on
/// truncated spaces.
pub const DEFAULT_BOUNDARY_MARGIN: usize = 2;

/// Nearest-neighbour jump rates of a birth-death chain on `{0..N}`.
///
/// `birth[x]` is the rate of `x -> x+1` and `death[x]` the rate of
/// `x -> x-1`. State 0 always reflects (`death[0] = 0`). On a genuinely
/// finite space the top state reflects too (`birth[N] = 0`); on a
/// truncated stand-in for the integers `birth[N]` may hold the defining
/// rate, and every operator uses the effective value 0 there instead.
///
/// Construction checks irreducibility eagerly: every interior birth rate
/// and every death rate above 0 must be strictly positive, otherwise the
/// chain splits and no unique stationary distribution exists.
#[derive(Debug, Clone, PartialEq)]
pub struct BirthDeathRates {
    space: StateSpace,
    birth: Vec<f64>,
    death: Vec<f64>,
    boundary_margin: usize,
}

impl BirthDeathRates {
    pub fn new(birth: Vec<f64>, death: Vec<f64>, truncated: bool) -> Result<Self> {
        if birth.len() != death.len() {
            return Err(Error::DimensionMismatch {
                expected: birth.len(),
                found: death.len(),
            });
        }
        if birth.len() < 2 {
            return Err(Error::InvalidParameter(
                "birth-death chain needs at least two states".into(),
            ));
        }
        let space = StateSpace::new(birth.len() - 1, truncated)?;
        for (name, rates) in [("birth", &birth), ("death", &death)] {
            if let Some(r) = rates.iter().find(|r| !r.is_finite() || **r < 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} rate {r} is not finite and nonnegative"
                )));
            }
        }
        if death[0] != 0.0 {
            return Err(Error::InvalidParameter(format!(
                "state 0 must reflect: death rate there is {}",
                death[0]
            )));
        }
        let top = space.max_state();
        if !truncated && birth[top] != 0.0 {
            return Err(Error::InvalidParameter(format!(
                "finite chain must reflect at state {top}: birth rate there is {}",
                birth[top]
            )));
        }
        if let Some(x) = (0..top).find(|&x| birth[x] == 0.0) {
            return Err(Error::Reducible(format!(
                "birth rate vanishes at interior state {x}"
            )));
        }
        if let Some(x) = (1..=top).find(|&x| death[x] == 0.0) {
            return Err(Error::Reducible(format!(
                "death rate vanishes at state {x}"
            )));
        }
        Ok(Self {
            space,
            birth,
            death,
            boundary_margin: DEFAULT_BOUNDARY_MARGIN,
        })
    }

    /// Overrides the number of top states criterion scans skip on
    /// truncated spaces. Ignored on genuinely finite chains.
    pub fn with_boundary_margin(mut self, margin: usize) -> Self {
        self.boundary_margin = margin;
        self
    }

    /// The two-parameter urn chain on `{0..n}`: birth rate
    /// `lambda * (n - x)`, death rate `nu * x`. Linear rates pulling
    /// towards the center give this chain strictly positive curvature.
    pub fn ehrenfest(n: usize, lambda: f64, nu: f64) -> Result<Self> {
        if !(lambda.is_finite() && nu.is_finite()) || lambda <= 0.0 || nu <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "urn rates must be positive and finite, got lambda={lambda}, nu={nu}"
            )));
        }
        let birth = (0..=n).map(|x| lambda * (n - x) as f64).collect();
        let death = (0..=n).map(|x| nu * x as f64).collect();
        Self::new(birth, death, false)
    }

    /// The constant-rate single-server queue, truncated at
    /// `truncation_n`: birth rate `lambda` everywhere, death rate `nu`
    /// away from the reflecting empty state.
    pub fn mm1(lambda: f64, nu: f64, truncation_n: usize) -> Result<Self> {
        if !(lambda.is_finite() && nu.is_finite()) || lambda <= 0.0 || nu <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "queue rates must be positive and finite, got lambda={lambda}, nu={nu}"
            )));
        }
        let birth = vec![lambda; truncation_n + 1];
        let mut death = vec![nu; truncation_n + 1];
        death[0] = 0.0;
        Self::new(birth, death, true)
    }

    pub fn space(&self) -> StateSpace {
        self.space
    }

    pub fn n_states(&self) -> usize {
        self.space.n_states()
    }

    pub fn max_state(&self) -> usize {
        self.space.max_state()
    }

    pub fn boundary_margin(&self) -> usize {
        self.boundary_margin
    }

    /// The defining birth rate, including a possibly positive value at the
    /// top of a truncated space.
    pub fn birth(&self, x: usize) -> f64 {
        self.birth[x]
    }

    pub fn death(&self, x: usize) -> f64 {
        self.death[x]
    }

    /// The birth rate the finite-space generator actually uses: zero at
    /// the top state, where the jump has nowhere to land.
    pub fn effective_birth(&self, x: usize) -> f64 {
        if x == self.space.max_state() {
            0.0
        } else {
            self.birth[x]
        }
    }

    /// Total exit rate of the effective generator at `x`.
    pub fn exit_rate(&self, x: usize) -> f64 {
        self.effective_birth(x) + self.death[x]
    }

    /// Highest state criterion scans may touch: the top state on finite
    /// chains, `max_state - boundary_margin` on truncated ones.
    pub fn scan_top(&self) -> usize {
        if self.space.truncated() {
            self.space.max_state().saturating_sub(self.boundary_margin)
        } else {
            self.space.max_state()
        }
    }

    /// The same rates as a sparse general-chain generator (effective
    /// boundary handling included).
    pub fn to_general(&self) -> GeneralRates {
        let n = self.n_states();
        let mut rows = Vec::with_capacity(n);
        for x in 0..n {
            let mut row = Vec::with_capacity(2);
            if x > 0 && self.death[x] > 0.0 {
                row.push((x - 1, self.death[x]));
            }
            let up = self.effective_birth(x);
            if up > 0.0 {
                row.push((x + 1, up));
            }
            rows.push(row);
        }
        GeneralRates::from_rows(self.space, rows)
    }
}

/// A general conservative generator on `{0..N}`, stored as sparse
/// off-diagonal rows. Entry `(y, q)` in row `x` is the jump rate
/// `Q(x, y) = q`; the diagonal is implied by conservativeness.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralRates {
    space: StateSpace,
    rows: Vec<Vec<(usize, f64)>>,
    exit: Vec<f64>,
}

impl GeneralRates {
    /// Builds a generator from `(from, to, rate)` entries.
    pub fn from_entries(space: StateSpace, entries: &[(usize, usize, f64)]) -> Result<Self> {
        let n = space.n_states();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(from, to, rate) in entries {
            if !space.contains(from) || !space.contains(to) {
                return Err(Error::InvalidParameter(format!(
                    "jump {from} -> {to} leaves the state space"
                )));
            }
            if from == to {
                return Err(Error::InvalidParameter(format!(
                    "self-jump at state {from}"
                )));
            }
            if !rate.is_finite() || rate < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "jump rate {rate} at {from} -> {to} is not finite and nonnegative"
                )));
            }
            if rows[from].iter().any(|&(y, _)| y == to) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate jump entry {from} -> {to}"
                )));
            }
            if rate > 0.0 {
                rows[from].push((to, rate));
            }
        }
        for row in &mut rows {
            row.sort_unstable_by_key(|&(y, _)| y);
        }
        Ok(Self::from_rows(space, rows))
    }

    fn from_rows(space: StateSpace, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let exit = rows
            .iter()
            .map(|row| row.iter().map(|&(_, q)| q).sum())
            .collect();
        Self { space, rows, exit }
    }

    pub fn space(&self) -> StateSpace {
        self.space
    }

    pub fn n_states(&self) -> usize {
        self.space.n_states()
    }

    /// Off-diagonal entries of row `x`, sorted by target state.
    pub fn row(&self, x: usize) -> &[(usize, f64)] {
        &self.rows[x]
    }

    pub fn exit_rate(&self, x: usize) -> f64 {
        self.exit[x]
    }

    /// The uniformization constant: the largest total exit rate.
    pub fn max_exit_rate(&self) -> f64 {
        self.exit.iter().fold(0.0, |m, &r| m.max(r))
    }

    pub fn rate(&self, x: usize, y: usize) -> f64 {
        self.rows[x]
            .iter()
            .find(|&&(t, _)| t == y)
            .map_or(0.0, |&(_, q)| q)
    }
}
