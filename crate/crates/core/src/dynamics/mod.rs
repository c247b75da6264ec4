//! Forward integration of the consumer–resource system with extinction
//! thresholds.
//!
//! The state vector is laid out as `[x_0, .., x_{M-1}, v_0, .., v_{m-1}]`.
//! Species that cross their threshold are removed from the alive set, their
//! abundance is frozen at the threshold value and they no longer consume.

mod average;
mod bounds;
mod convergence;
pub(crate) mod rk;

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::EcosystemParams;
use crate::num::{max_abs_diff, max_norm, Real, Scalar};

pub use average::{time_average, time_average_by, Quantity};
pub use bounds::{abundance_upper_bound, resource_upper_bound};
pub use convergence::detect_convergence;

use rk::{hermite, PiController, Stepper};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State<T> {
    pub t: T,
    pub x: Vec<T>,
    pub v: Vec<T>,
    pub alive: Vec<bool>,
}

impl<T: Scalar> State<T> {
    /// All species alive at `t = 0`.
    pub fn initial(x: Vec<T>, v: Vec<T>) -> Self {
        let alive = vec![true; x.len()];
        Self { t: T::zero(), x, v, alive }
    }

    /// `N_e(t)`.
    pub fn n_alive(&self) -> usize {
        self.alive.iter().filter(|&&a| a).count()
    }

    pub fn alive_indices(&self) -> Vec<usize> {
        self.alive.iter().enumerate().filter_map(|(i, &a)| a.then_some(i)).collect()
    }

    fn pack(&self) -> Vec<T> {
        self.x.iter().chain(&self.v).copied().collect()
    }

    fn from_packed(t: T, y: &[T], m_species: usize, alive: &[bool]) -> Self {
        Self {
            t,
            x: y[..m_species].to_vec(),
            v: y[m_species..].to_vec(),
            alive: alive.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtinctionEvent<T> {
    pub species: usize,
    pub time: T,
    pub abundance_at_event: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Converged<T> {
    pub state: State<T>,
    pub residual: T,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    pub samples: Vec<State<T>>,
    pub events: Vec<ExtinctionEvent<T>>,
    pub converged: Option<Converged<T>>,
    /// State at the end of integration, whether or not it was sampled.
    pub last: State<T>,
    pub stats: Stats,
}

impl<T: Scalar> Trajectory<T> {
    /// `T_e`: time of the last extinction event, if any.
    pub fn last_event_time(&self) -> Option<T> {
        self.events.last().map(|e| e.time)
    }

    /// The converged state if convergence fired, otherwise the last state.
    pub fn terminal(&self) -> &State<T> {
        self.converged.as_ref().map_or(&self.last, |c| &c.state)
    }
}

/// Which states end up in [`Trajectory::samples`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Record<T> {
    /// Every accepted step and every event point.
    Steps,
    /// Dense output on a uniform grid, plus event points.
    Interval(T),
    /// Initial and final states only.
    Endpoints,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorOptions<T> {
    /// Relative per-step error tolerance.
    pub tol: T,
    /// Absolute per-step error tolerance.
    pub atol: T,
    /// Time tolerance for locating threshold crossings.
    pub event_tol: T,
    /// Convergence tolerance on `||rhs||` and on the lookback difference.
    /// `None` integrates to the horizon.
    pub convergence_tol: Option<T>,
    /// Lookback window for convergence detection.
    pub window: T,
    pub h_init: T,
    pub h_max: T,
    pub max_steps: usize,
    pub record: Record<T>,
}

impl<T: Real> Default for IntegratorOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-8),
            atol: T::lit(1e-10),
            event_tol: T::lit(1e-10),
            convergence_tol: Some(T::lit(1e-8)),
            window: T::lit(10.0),
            h_init: T::lit(1e-3),
            h_max: T::lit(10.0),
            max_steps: 5_000_000,
            record: Record::Steps,
        }
    }
}

/// Failure of [`integrate`], carrying the last accepted state.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationError<T> {
    pub error: Error,
    pub last_good: State<T>,
}

impl<T: fmt::Debug> fmt::Display for IntegrationError<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.error)
    }
}

impl<T: fmt::Debug> std::error::Error for IntegrationError<T> {}

impl<T> From<IntegrationError<T>> for Error {
    fn from(e: IntegrationError<T>) -> Self {
        e.error
    }
}

/// Packed right-hand side. Writes `dy` for the layout described in the module
/// docs.
pub(crate) fn rhs_packed<T: Scalar>(
    p: &EcosystemParams<T>,
    alive: &[bool],
    y: &[T],
    dy: &mut [T],
    phi: &mut [T],
) {
    let big_m = p.species_count();
    let (x, v) = y.split_at(big_m);
    for i in 0..big_m {
        if alive[i] {
            phi[i] = p.phi(i, v);
            dy[i] = x[i] * (phi[i] - p.mu[i] - p.gamma[i] * x[i]);
        } else {
            phi[i] = T::zero();
            dy[i] = T::zero();
        }
    }
    for k in 0..p.resource_count() {
        let mut consumption = T::zero();
        for i in 0..big_m {
            if alive[i] {
                consumption = consumption + p.c[k][i] * x[i] * phi[i];
            }
        }
        dy[big_m + k] = p.d[k] * (p.s[k] - v[k]) - consumption;
    }
}

/// Time derivative `(dx/dt, dv/dt)` as one vector of length `M + m`.
pub fn rhs<T: Scalar>(params: &EcosystemParams<T>, state: &State<T>) -> Result<Vec<T>, Error> {
    let big_m = params.species_count();
    if state.x.len() != big_m
        || state.alive.len() != big_m
        || state.v.len() != params.resource_count()
    {
        return Err(Error::Dimension(format!(
            "state has {} abundances, {} flags and {} resources for M = {big_m}, m = {}",
            state.x.len(),
            state.alive.len(),
            state.v.len(),
            params.resource_count()
        )));
    }
    let y = state.pack();
    let mut dy = vec![T::zero(); y.len()];
    let mut phi = vec![T::zero(); big_m];
    rhs_packed(params, &state.alive, &y, &mut dy, &mut phi);
    Ok(dy)
}

fn check_initial<T: Real>(p: &EcosystemParams<T>, init: &State<T>) -> Result<(), Error> {
    rhs(p, init)?;
    for i in 0..p.species_count() {
        if !init.alive[i] {
            continue;
        }
        let xi = init.x[i];
        if !(xi > T::zero()) {
            return Err(Error::InitialData(format!("x_{i}(0) must be positive")));
        }
        if p.threshold(i) > T::zero() && !(xi > p.threshold(i)) {
            return Err(Error::InitialData(format!(
                "x_{i}(0) must lie strictly above its extinction threshold"
            )));
        }
    }
    for k in 0..p.resource_count() {
        let vk = init.v[k];
        if !(vk >= T::zero() && vk <= p.s[k]) {
            return Err(Error::InitialData(format!("v_{k}(0) must lie in [0, S_{k}]")));
        }
    }
    if !init.t.is_finite() {
        return Err(Error::InitialData("initial time must be finite".into()));
    }
    Ok(())
}

struct Lookback<T> {
    window: T,
    tol: T,
    buf: VecDeque<(T, Vec<T>)>,
}

enum Progress<T> {
    Moving,
    /// Stagnant over the window but with a residual above tolerance: a
    /// spurious fixed point of the step map at too large a step size.
    Stalled,
    Converged(T),
}

impl<T: Real> Lookback<T> {
    /// Records the accepted point and classifies the recent history.
    fn push(&mut self, t: T, y: &[T], f: &[T]) -> Progress<T> {
        let residual = max_norm(f);
        self.buf.push_back((t, y.to_vec()));
        while self.buf.len() >= 2 && self.buf[1].0 <= t - self.window {
            self.buf.pop_front();
        }
        if residual == T::zero() {
            return Progress::Converged(residual);
        }
        let Some((t0, y0)) = self.buf.front() else {
            return Progress::Moving;
        };
        if *t0 > t - self.window || max_abs_diff(y, y0) > self.tol {
            return Progress::Moving;
        }
        if residual > self.tol {
            Progress::Stalled
        } else {
            Progress::Converged(residual)
        }
    }

    fn clear(&mut self) {
        self.buf.clear();
    }
}

/// Integrates from `init` up to `horizon` (absolute end time).
///
/// Threshold crossings are detected by a sign change of `x_i - X_ext_i` over
/// each accepted step and located by bisection on the cubic Hermite
/// interpolant. Integration restarts from the event point with the species
/// removed. Stops early when the convergence test fires.
pub fn integrate<T: Real>(
    params: &EcosystemParams<T>,
    init: &State<T>,
    horizon: T,
    opts: &IntegratorOptions<T>,
) -> Result<Trajectory<T>, IntegrationError<T>> {
    let fail = |error: Error, s: &State<T>| IntegrationError { error, last_good: s.clone() };
    check_initial(params, init).map_err(|e| fail(e, init))?;

    let big_m = params.species_count();
    let n = big_m + params.resource_count();
    let thresholds: Vec<T> = (0..big_m).map(|i| params.threshold(i)).collect();
    let mut alive = init.alive.clone();
    let mut phi_buf = vec![T::zero(); big_m];
    let mut stats = Stats::default();

    let mut t = init.t;
    let mut y = init.pack();
    let mut stepper = Stepper::new(n);
    let mut ctl = PiController::new();
    let mut f_tmp = vec![T::zero(); n];
    rhs_packed(params, &alive, &y, &mut f_tmp, &mut phi_buf);
    stats.rhs_evals += 1;
    stepper.set_f0(&f_tmp);

    let mut samples = vec![init.clone()];
    let mut events = Vec::new();
    let mut next_grid = match opts.record {
        Record::Interval(dt) => t + dt,
        _ => T::infinity(),
    };
    let mut lookback = opts.convergence_tol.map(|tol| Lookback {
        window: opts.window,
        tol,
        buf: VecDeque::new(),
    });
    let mut converged = None;
    if let Some(lb) = lookback.as_mut() {
        if let Progress::Converged(residual) = lb.push(t, &y, stepper.f0()) {
            let state = State::from_packed(t, &y, big_m, &alive);
            return Ok(Trajectory {
                samples,
                events,
                converged: Some(Converged { state: state.clone(), residual }),
                last: state,
                stats,
            });
        }
    }

    let span = (horizon - t).abs().max(T::one());
    let h_min = span * T::lit(1e-14);
    let mut h_cap = opts.h_max;
    let mut h = opts.h_init.min(h_cap).min(horizon - t);
    let mut y_prev = y.clone();
    let mut f_prev = vec![T::zero(); n];
    let mut y_end = vec![T::zero(); n];
    let mut f_end = vec![T::zero(); n];

    while t < horizon {
        if stats.accepted + stats.rejected >= opts.max_steps {
            let s = State::from_packed(t, &y, big_m, &alive);
            return Err(fail(Error::StepUnderflow { t: t.as_f64() }, &s));
        }
        let last_step = h >= horizon - t;
        if last_step {
            h = horizon - t;
        }
        let err = {
            let alive_ref = &alive;
            let phi_ref = &mut phi_buf;
            let mut f = |_t: T, yy: &[T], dy: &mut [T]| rhs_packed(params, alive_ref, yy, dy, phi_ref);
            stepper.try_step(&mut f, t, &y, h, opts.tol, opts.atol)
        };
        stats.rhs_evals += 6;
        if !err.is_finite() || stepper.y_new.iter().any(|v| !v.is_finite()) {
            if h <= h_min {
                let s = State::from_packed(t, &y, big_m, &alive);
                return Err(fail(Error::NonFinite { t: t.as_f64() }, &s));
            }
            stats.rejected += 1;
            h = h * T::lit(0.1);
            continue;
        }
        if err > T::one() {
            stats.rejected += 1;
            h = ctl.reject(h, err);
            if h < h_min {
                let s = State::from_packed(t, &y, big_m, &alive);
                return Err(fail(Error::StepUnderflow { t: t.as_f64() }, &s));
            }
            continue;
        }

        // accepted: keep the step start for dense output
        stats.accepted += 1;
        y_prev.copy_from_slice(&y);
        f_prev.copy_from_slice(stepper.f0());
        let t_prev = t;
        let h_step = h;
        let t_new = if last_step { horizon } else { t + h };
        y.copy_from_slice(&stepper.y_new);
        let mut clipped = false;
        for yi in y.iter_mut() {
            if *yi < T::zero() {
                *yi = T::zero();
                clipped = true;
            }
        }
        y_end.copy_from_slice(&stepper.y_new);
        f_end.copy_from_slice(stepper.f_end());
        let interp =
            |theta: T, i: usize| hermite(y_prev[i], f_prev[i], y_end[i], f_end[i], h_step, theta);

        // threshold crossings within the step
        let event_time = (0..big_m)
            .filter(|&i| alive[i] && thresholds[i] > T::zero() && y[i] <= thresholds[i])
            .map(|i| {
                let (mut lo, mut hi) = (T::zero(), T::one());
                let tol = opts.event_tol / h_step;
                while hi - lo > tol && hi - lo > T::epsilon() {
                    let mid = (lo + hi) / T::two();
                    if interp(mid, i) > thresholds[i] {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                (hi, i)
            })
            .fold(None::<(T, usize)>, |best, cand| match best {
                Some(b) if b.0 <= cand.0 => Some(b),
                _ => Some(cand),
            });

        if let Some((theta, first)) = event_time {
            let t_star = t_prev + theta * h_step;
            for i in 0..n {
                y[i] = interp(theta, i).max(T::zero());
            }
            let mut removed = vec![first];
            removed.extend(
                (0..big_m).filter(|&j| {
                    j != first && alive[j] && thresholds[j] > T::zero() && y[j] <= thresholds[j]
                }),
            );
            removed.sort_unstable();
            for &j in &removed {
                alive[j] = false;
                y[j] = thresholds[j];
                events.push(ExtinctionEvent { species: j, time: t_star, abundance_at_event: thresholds[j] });
            }
            t = t_star;
            rhs_packed(params, &alive, &y, &mut f_tmp, &mut phi_buf);
            stats.rhs_evals += 1;
            stepper.set_f0(&f_tmp);
            if let Some(lb) = lookback.as_mut() {
                lb.clear();
            }
            if let Record::Interval(dt) = opts.record {
                while next_grid < t_star {
                    let th = (next_grid - t_prev) / h_step;
                    let yy: Vec<T> = (0..n).map(|i| interp(th, i).max(T::zero())).collect();
                    let mut alive_g = alive.clone();
                    for &j in &removed {
                        alive_g[j] = true;
                    }
                    samples.push(State::from_packed(next_grid, &yy, big_m, &alive_g));
                    next_grid = next_grid + dt;
                }
            }
            if !matches!(opts.record, Record::Endpoints) {
                samples.push(State::from_packed(t, &y, big_m, &alive));
            }
            h = (h_step * (T::one() - theta)).max(opts.h_init.min(h_step));
            continue;
        }

        if let Record::Interval(dt) = opts.record {
            while next_grid <= t_new {
                let th = (next_grid - t_prev) / h_step;
                let yy: Vec<T> = (0..n).map(|i| interp(th, i).max(T::zero())).collect();
                samples.push(State::from_packed(next_grid, &yy, big_m, &alive));
                next_grid = next_grid + dt;
            }
        }
        t = t_new;
        stepper.advance_fsal();
        if clipped {
            // the FSAL derivative was taken at the unclipped point
            rhs_packed(params, &alive, &y, &mut f_tmp, &mut phi_buf);
            stats.rhs_evals += 1;
            stepper.set_f0(&f_tmp);
        }
        if matches!(opts.record, Record::Steps) {
            samples.push(State::from_packed(t, &y, big_m, &alive));
        }
        h = ctl.accept(h_step, err).min(h_cap);
        if let Some(lb) = lookback.as_mut() {
            match lb.push(t, &y, stepper.f0()) {
                Progress::Converged(residual) => {
                    converged = Some(Converged {
                        state: State::from_packed(t, &y, big_m, &alive),
                        residual,
                    });
                    break;
                }
                Progress::Stalled => {
                    h_cap = h_step / T::two();
                    h = h.min(h_cap);
                    lb.clear();
                }
                Progress::Moving => {}
            }
        }
    }

    let last = State::from_packed(t, &y, big_m, &alive);
    if samples.last().map(|s| s.t) != Some(t) {
        samples.push(last.clone());
    }
    Ok(Trajectory { samples, events, converged, last, stats })
}
