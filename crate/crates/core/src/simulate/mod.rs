//! Seeded exact simulation of finite-range chains and Monte Carlo tail
//! estimation with exact binomial confidence bounds.
//!
//! Every path gets its own counter-derived RNG stream: path `i` of a run
//! seeded `s` draws from ChaCha12 with seed `s` and stream index `i`.
//! Results therefore do not depend on scheduling or batching, and the
//! generator family is fixed; changing it is a breaking change to every
//! recorded run.

mod fluid;
mod tail;

pub use fluid::{ehrenfest_rescaled_tail, ou_exact_tail, ou_sample};
pub use tail::{
    clopper_pearson_upper, mm1_multisample_tail, monte_carlo_tail, TailEstimate, TailOptions,
    TailVerdict,
};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp};

use crate::chain_model::GeneralRates;
use crate::error::{Error, Result};

/// One realized trajectory: the initial state, the jump times, and the
/// state entered at each jump.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    initial: usize,
    times: Vec<f64>,
    states: Vec<usize>,
}

impl Path {
    pub fn initial(&self) -> usize {
        self.initial
    }

    /// Jump times, strictly increasing.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// State entered at each jump time.
    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn n_events(&self) -> usize {
        self.times.len()
    }

    /// The right-continuous evaluation `X_t`: the state entered at the
    /// last jump up to and including `t`.
    pub fn state_at(&self, t: f64) -> usize {
        let idx = self.times.partition_point(|&s| s <= t);
        if idx == 0 {
            self.initial
        } else {
            self.states[idx - 1]
        }
    }

    pub fn final_state(&self) -> usize {
        *self.states.last().unwrap_or(&self.initial)
    }
}

/// The RNG for path `path_index` of a run with master seed `seed`.
pub(crate) fn path_rng(seed: u64, path_index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

fn check_start(rates: &GeneralRates, x0: usize) -> Result<()> {
    if x0 >= rates.n_states() {
        return Err(Error::InvalidParameter(format!(
            "start state {x0} outside space of {} states",
            rates.n_states()
        )));
    }
    Ok(())
}

/// Event-driven walk: exponential holding times at the exit rate, jump
/// target chosen proportionally to the off-diagonal rates. The visitor
/// receives each (time, entered state) pair and may stop the walk early
/// by returning false.
fn walk<R: Rng>(
    rates: &GeneralRates,
    x0: usize,
    horizon: f64,
    rng: &mut R,
    mut on_event: impl FnMut(f64, usize) -> bool,
) {
    let mut x = x0;
    let mut t = 0.0;
    loop {
        let exit = rates.exit_rate(x);
        if exit == 0.0 {
            return; // absorbed
        }
        t += Exp::new(exit).expect("positive rate").sample(rng);
        if t > horizon {
            return;
        }
        let mut remainder = rng.random::<f64>() * exit;
        let row = rates.row(x);
        let mut next = row.last().expect("positive exit rate").0;
        for &(y, q) in row {
            if remainder < q {
                next = y;
                break;
            }
            remainder -= q;
        }
        x = next;
        if !on_event(t, x) {
            return;
        }
    }
}

/// Simulates one trajectory up to `horizon`, deterministically in `seed`.
pub fn sample_path(rates: &GeneralRates, x0: usize, horizon: f64, seed: u64) -> Result<Path> {
    sample_path_stream(rates, x0, horizon, seed, 0)
}

/// Same as [`sample_path`] on the RNG stream of a given path index, so a
/// batch of paths can share one master seed yet stay independent.
pub fn sample_path_stream(
    rates: &GeneralRates,
    x0: usize,
    horizon: f64,
    seed: u64,
    path_index: u64,
) -> Result<Path> {
    check_start(rates, x0)?;
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "horizon must be finite and nonnegative, got {horizon}"
        )));
    }
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut rng = path_rng(seed, path_index);
    walk(rates, x0, horizon, &mut rng, |t, x| {
        times.push(t);
        states.push(x);
        true
    });
    Ok(Path {
        initial: x0,
        times,
        states,
    })
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidParameter("no sample times given".into()));
    }
    if !(times[0] >= 0.0) || times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidParameter(
            "sample times must be finite and nonnegative".into(),
        ));
    }
    for pair in times.windows(2) {
        if !(pair[0] < pair[1]) {
            return Err(Error::InvalidParameter(
                "sample times must be strictly increasing".into(),
            ));
        }
    }
    Ok(())
}

/// The states of one trajectory at the given (strictly increasing)
/// times, without materializing the trajectory.
pub fn sample_states_at(
    rates: &GeneralRates,
    x0: usize,
    times: &[f64],
    seed: u64,
) -> Result<Vec<usize>> {
    sample_states_at_stream(rates, x0, times, seed, 0)
}

/// [`sample_states_at`] on the RNG stream of a given path index. Draws
/// exactly the randomness [`sample_path_stream`] would up to the last
/// sample time, so the two agree path for path.
pub fn sample_states_at_stream(
    rates: &GeneralRates,
    x0: usize,
    times: &[f64],
    seed: u64,
    path_index: u64,
) -> Result<Vec<usize>> {
    check_start(rates, x0)?;
    check_times(times)?;
    let horizon = *times.last().expect("times checked non-empty");
    let mut out = Vec::with_capacity(times.len());
    let mut rng = path_rng(seed, path_index);
    let mut current = x0;
    walk(rates, x0, horizon, &mut rng, |t, x| {
        while out.len() < times.len() && times[out.len()] < t {
            out.push(current);
        }
        current = x;
        out.len() < times.len()
    });
    while out.len() < times.len() {
        out.push(current);
    }
    Ok(out)
}

/// A function of several chain states at once, carrying its declared
/// Lipschitz constant with respect to the sum of coordinate distances.
type SampleEval = Box<dyn Fn(&[usize]) -> f64>;

pub struct MultiLipschitzFn {
    arity: usize,
    lip: f64,
    eval: SampleEval,
}

impl MultiLipschitzFn {
    pub fn new(arity: usize, lip: f64, eval: impl Fn(&[usize]) -> f64 + 'static) -> Result<Self> {
        if arity == 0 {
            return Err(Error::InvalidParameter(
                "a sample function needs at least one coordinate".into(),
            ));
        }
        if !(lip > 0.0) || !lip.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "Lipschitz constant must be positive and finite, got {lip}"
            )));
        }
        Ok(Self {
            arity,
            lip,
            eval: Box::new(eval),
        })
    }

    /// The average of the coordinates, with its sharp constant
    /// `1 / arity`.
    pub fn coordinate_average(arity: usize) -> Result<Self> {
        let scale = 1.0 / arity as f64;
        Self::new(arity, scale, move |z| {
            z.iter().map(|&x| x as f64).sum::<f64>() * scale
        })
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn lip(&self) -> f64 {
        self.lip
    }

    pub fn eval(&self, z: &[usize]) -> f64 {
        debug_assert_eq!(z.len(), self.arity);
        (self.eval)(z)
    }

    /// Checks the declared constant on every unit coordinate perturbation
    /// of the given tuple.
    pub fn check_perturbations(&self, z: &[usize]) -> Result<()> {
        let base = self.eval(z);
        let mut probe = z.to_vec();
        for i in 0..self.arity {
            for delta in [1i64, -1] {
                let moved = z[i] as i64 + delta;
                if moved < 0 {
                    continue;
                }
                probe[i] = moved as usize;
                let jump = (self.eval(&probe) - base).abs();
                if jump > self.lip + 1e-9 {
                    return Err(Error::InvalidParameter(format!(
                        "declared Lipschitz constant {} violated: moving coordinate {i} \
                         by one changed the value by {jump}",
                        self.lip
                    )));
                }
                probe[i] = z[i];
            }
        }
        Ok(())
    }
}

impl std::fmt::Debug for MultiLipschitzFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MultiLipschitzFn")
            .field("arity", &self.arity)
            .field("lip", &self.lip)
            .finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain_model::{BirthDeathRates, StateSpace};
    use crate::semigroup::{kernel_row, transition_matrix, UniformizationConfig};
    use approx::assert_abs_diff_eq;

    fn tv(p: &[f64], q: &[f64]) -> f64 {
        0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }

    fn empirical_at(
        rates: &GeneralRates,
        x0: usize,
        t: f64,
        n_paths: u64,
        seed: u64,
    ) -> Vec<f64> {
        let mut counts = vec![0u64; rates.n_states()];
        for i in 0..n_paths {
            let s = sample_states_at_stream(rates, x0, &[t], seed, i).unwrap()[0];
            counts[s] += 1;
        }
        counts.iter().map(|&c| c as f64 / n_paths as f64).collect()
    }

    #[test]
    fn absorbed_chain_never_moves() {
        let space = StateSpace::new(4, false).unwrap();
        let frozen = GeneralRates::from_entries(space, &[]).unwrap();
        let path = sample_path(&frozen, 2, 50.0, 7).unwrap();
        assert_eq!(path.n_events(), 0);
        assert_eq!(path.state_at(25.0), 2);
        assert_eq!(path.final_state(), 2);
        assert_eq!(sample_states_at(&frozen, 2, &[1.0, 2.0], 7).unwrap(), vec![2, 2]);
    }

    #[test]
    fn paths_are_deterministic_and_adjacent_stepped() {
        let rates = BirthDeathRates::mm1(1.0, 2.0, 30).unwrap().to_general();
        let a = sample_path(&rates, 5, 10.0, 42).unwrap();
        let b = sample_path(&rates, 5, 10.0, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_path(&rates, 5, 10.0, 43).unwrap();
        assert_ne!(a, c); // almost surely

        for w in a.times().windows(2) {
            assert!(w[0] < w[1]);
        }
        let mut prev = a.initial();
        for &s in a.states() {
            assert_eq!(s.abs_diff(prev), 1);
            prev = s;
        }
    }

    #[test]
    fn state_at_is_right_continuous() {
        let path = Path {
            initial: 3,
            times: vec![1.0, 2.5],
            states: vec![4, 3],
        };
        assert_eq!(path.state_at(0.0), 3);
        assert_eq!(path.state_at(0.999), 3);
        assert_eq!(path.state_at(1.0), 4); // post-jump at the jump time
        assert_eq!(path.state_at(2.4), 4);
        assert_eq!(path.state_at(2.5), 3);
        assert_eq!(path.state_at(9.0), 3);
    }

    #[test]
    fn holding_time_mean_matches_the_exit_rate() {
        let rates = BirthDeathRates::mm1(1.0, 2.0, 10).unwrap().to_general();
        let x0 = 5; // exit rate 3
        let n = 100_000u64;
        let mut total = 0.0;
        for i in 0..n {
            let mut rng = path_rng(99, i);
            let mut first = f64::NAN;
            walk(&rates, x0, f64::MAX, &mut rng, |t, _| {
                first = t;
                false
            });
            total += first;
        }
        let mean = total / n as f64;
        let se = (1.0 / 3.0) / (n as f64).sqrt();
        assert!((mean - 1.0 / 3.0).abs() <= 3.0 * se, "mean {mean}");
    }

    #[test]
    fn empirical_marginal_matches_kernel_row() {
        let rates = BirthDeathRates::mm1(1.0, 2.0, 50).unwrap().to_general();
        let (row, _) = kernel_row(&rates, 5, 1.0, &UniformizationConfig::default()).unwrap();
        let emp = empirical_at(&rates, 5, 1.0, 100_000, 1234);
        assert!(tv(&emp, &row) < 0.01, "tv {}", tv(&emp, &row));
    }

    #[test]
    fn empirical_error_shrinks_with_path_doublings() {
        let rates = BirthDeathRates::ehrenfest(12, 0.6, 0.8).unwrap().to_general();
        let (row, _) = kernel_row(&rates, 3, 0.7, &UniformizationConfig::default()).unwrap();
        let mut tvs = Vec::new();
        for doubling in 0..4 {
            let n = 2000u64 << doubling;
            // fresh seed per batch keeps the four estimates independent
            let emp = empirical_at(&rates, 3, 0.7, n, 500 + doubling);
            tvs.push(tv(&emp, &row));
        }
        assert!(
            tvs[3] < 0.6 * tvs[0],
            "no square-root shrink across doublings: {tvs:?}"
        );
    }

    #[test]
    fn sampled_joint_factorizes_like_a_markov_chain() {
        let bd = BirthDeathRates::mm1(1.0, 2.0, 19).unwrap();
        let rates = bd.to_general();
        let n_states = rates.n_states();
        let (t1, t2) = (0.5, 1.25);
        let cfg = UniformizationConfig::default();
        let (row1, _) = kernel_row(&rates, 3, t1, &cfg).unwrap();
        let step = transition_matrix(&rates, t2 - t1, &cfg).unwrap();

        let n = 100_000u64;
        let mut joint = vec![0.0; n_states * n_states];
        for i in 0..n {
            let s = sample_states_at_stream(&rates, 3, &[t1, t2], 2718, i).unwrap();
            joint[s[0] * n_states + s[1]] += 1.0 / n as f64;
        }
        let mut product = vec![0.0; n_states * n_states];
        for x in 0..n_states {
            for y in 0..n_states {
                product[x * n_states + y] = row1[x] * step.entry(x, y);
            }
        }
        assert!(tv(&joint, &product) < 0.02, "tv {}", tv(&joint, &product));
    }

    #[test]
    fn sample_times_are_validated() {
        let rates = BirthDeathRates::mm1(1.0, 2.0, 5).unwrap().to_general();
        assert!(sample_states_at(&rates, 0, &[], 1).is_err());
        assert!(sample_states_at(&rates, 0, &[1.0, 1.0], 1).is_err());
        assert!(sample_states_at(&rates, 0, &[2.0, 1.0], 1).is_err());
        assert!(sample_states_at(&rates, 0, &[-1.0, 1.0], 1).is_err());
        assert!(sample_states_at(&rates, 9, &[1.0], 1).is_err());
        assert!(sample_path(&rates, 0, f64::INFINITY, 1).is_err());
        assert_eq!(sample_states_at(&rates, 3, &[0.0], 1).unwrap(), vec![3]);
    }

    #[test]
    fn declared_lipschitz_constants_are_checked() {
        let avg = MultiLipschitzFn::coordinate_average(3).unwrap();
        assert_abs_diff_eq!(avg.lip(), 1.0 / 3.0);
        assert_abs_diff_eq!(avg.eval(&[1, 2, 6]), 3.0);
        avg.check_perturbations(&[4, 0, 9]).unwrap();

        let liar = MultiLipschitzFn::new(2, 0.1, |z| z[0] as f64).unwrap();
        assert!(liar.check_perturbations(&[3, 3]).is_err());

        assert!(MultiLipschitzFn::new(0, 1.0, |_| 0.0).is_err());
        assert!(MultiLipschitzFn::new(2, 0.0, |_| 0.0).is_err());
    }
}
