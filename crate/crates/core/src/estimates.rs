//! Closed-form and trajectory-based estimates of the number of surviving
//! species, break-even concentrations and the mass-extinction condition.

use serde::{Deserialize, Serialize};

use crate::dynamics::{time_average_by, Trajectory};
use crate::error::{Error, Result};
use crate::model::EcosystemParams;
use crate::num::{cutoff, max_of, min_of, Real, Scalar};

/// Where a reported number comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    ClosedForm,
    TrajectoryMeasured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Labeled<V> {
    pub value: V,
    pub provenance: Provenance,
}

impl<V> Labeled<V> {
    pub fn closed_form(value: V) -> Self {
        Self { value, provenance: Provenance::ClosedForm }
    }

    pub fn measured(value: V) -> Self {
        Self { value, provenance: Provenance::TrajectoryMeasured }
    }
}

/// An upper bound on a species count that may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountBound {
    Finite(u64),
    Unbounded,
}

impl CountBound {
    pub fn admits(self, n: usize) -> bool {
        match self {
            CountBound::Finite(b) => n as u64 <= b,
            CountBound::Unbounded => true,
        }
    }

    fn min(self, other: Self) -> Self {
        match (self, other) {
            (CountBound::Finite(a), CountBound::Finite(b)) => CountBound::Finite(a.min(b)),
            (CountBound::Unbounded, b) => b,
            (a, CountBound::Unbounded) => a,
        }
    }
}

fn floor_count<T: Scalar>(x: T) -> u64 {
    if x <= T::zero() {
        0
    } else {
        x.floor_val().as_f64() as u64
    }
}

/// Dimensionless groups of a neutral single-resource community.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionlessParams<T> {
    /// `mu / r`.
    pub p: T,
    /// `S / K`.
    pub s_tilde: T,
    /// `gamma X_ext / r`.
    pub eps: T,
    /// `K D gamma / (r^2 C)` with `C` the mean content coefficient.
    #[serde(rename = "R")]
    pub big_r: T,
}

impl<T: Scalar> DimensionlessParams<T> {
    pub fn new(p: T, s_tilde: T, eps: T, big_r: T) -> Result<Self> {
        if p < T::zero() || s_tilde < T::zero() || eps < T::zero() || big_r < T::zero() {
            return Err(Error::InvalidParams("dimensionless groups must be nonnegative".into()));
        }
        Ok(Self { p, s_tilde, eps, big_r })
    }

    /// Groups of a single-resource community whose species share `mu`, `r`,
    /// `K`, `gamma` and `X_ext`; only the contents `c_i` may differ.
    pub fn from_params(params: &EcosystemParams<T>) -> Result<Self> {
        params.validate()?;
        if params.resource_count() != 1 {
            return Err(Error::Dimension("neutral groups need a single resource".into()));
        }
        let n = params.species_count();
        let same = |xs: &[T]| xs.iter().all(|&x| x == xs[0]);
        let k: Vec<T> = params.growth.k.iter().map(|row| row[0]).collect();
        let x_ext: Vec<T> = (0..n).map(|i| params.threshold(i)).collect();
        if !(same(&params.mu) && same(&params.gamma) && same(&params.growth.r) && same(&k) && same(&x_ext)) {
            return Err(Error::InvalidParams("community is not neutral".into()));
        }
        let (mu, gamma, r, k, x) = (params.mu[0], params.gamma[0], params.growth.r[0], k[0], x_ext[0]);
        let c_mean = params.c[0].iter().fold(T::zero(), |a, &b| a + b) / count::<T>(n);
        Self::new(mu / r, params.s[0] / k, gamma * x / r, k * params.d[0] * gamma / (r * r * c_mean))
    }

    /// `u_eps = (p + eps) / (1 - p - eps)`; `None` when `p + eps >= 1`.
    pub fn u_eps(&self) -> Option<T> {
        let a = self.p + self.eps;
        (a < T::one()).then(|| a / (T::one() - a))
    }
}

fn count<T: Scalar>(n: usize) -> T {
    (0..n).fold(T::zero(), |a, _| a + T::one())
}

/// `V_k(S_e) = max_{i in S_e} mu_i K_ik / (r_i - mu_i)`, and for one resource
/// also `V = min_i lambda_i` over the same set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceFloor<T> {
    pub v: Vec<T>,
    pub v_bar: Option<T>,
}

pub fn resource_floor<T: Scalar>(params: &EcosystemParams<T>, alive: &[usize]) -> Result<ResourceFloor<T>> {
    let bad: Vec<usize> = alive.iter().copied().filter(|&i| params.growth.r[i] <= params.mu[i]).collect();
    if !bad.is_empty() {
        return Err(Error::NonViable(bad));
    }
    if let Some(&i) = alive.iter().find(|&&i| i >= params.species_count()) {
        return Err(Error::SpeciesIndex { index: i, count: params.species_count() });
    }
    let floor_ik = |i: usize, k: usize| {
        params.mu[i] * params.growth.k[i][k] / (params.growth.r[i] - params.mu[i])
    };
    let v = (0..params.resource_count())
        .map(|k| alive.iter().map(|&i| floor_ik(i, k)).fold(T::zero(), max_of))
        .collect();
    let v_bar = (params.resource_count() == 1 && !alive.is_empty()).then(|| {
        alive.iter().skip(1).map(|&i| floor_ik(i, 0)).fold(floor_ik(alive[0], 0), min_of)
    });
    Ok(ResourceFloor { v, v_bar })
}

/// Break-even concentrations. `None` marks species for which the value is
/// undefined (`r <= mu`, respectively `r <= mu + gamma X_ext`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakEven<T> {
    pub lambda: Vec<Option<T>>,
    pub beta: Vec<Option<T>>,
}

pub fn lambda_i<T: Scalar>(mu: T, r: T, k: T) -> Option<T> {
    (r > mu).then(|| mu * k / (r - mu))
}

pub fn beta_i<T: Scalar>(mu: T, r: T, k: T, gamma_x: T) -> Option<T> {
    let a = mu + gamma_x;
    (r > a).then(|| a * k / (r - a))
}

pub fn break_even<T: Scalar>(params: &EcosystemParams<T>) -> Result<BreakEven<T>> {
    if params.resource_count() != 1 {
        return Err(Error::Dimension("break-even concentrations need a single resource".into()));
    }
    let n = params.species_count();
    let lambda = (0..n).map(|i| lambda_i(params.mu[i], params.growth.r[i], params.growth.k[i][0])).collect();
    let beta = (0..n)
        .map(|i| {
            beta_i(
                params.mu[i],
                params.growth.r[i],
                params.growth.k[i][0],
                params.gamma[i] * params.threshold(i),
            )
        })
        .collect();
    Ok(BreakEven { lambda, beta })
}

/// Closed-form bound `min_k floor(D_k (S_k - V_k) / Z_k)` with both minima over
/// survivor sets realised by single species. Species with `r_i <= mu_i` can
/// never persist and are left out.
pub fn upper_bound_rough<T: Scalar>(params: &EcosystemParams<T>) -> CountBound {
    let candidates: Vec<usize> =
        (0..params.species_count()).filter(|&i| params.growth.r[i] > params.mu[i]).collect();
    if candidates.is_empty() {
        return CountBound::Finite(0);
    }
    (0..params.resource_count())
        .map(|k| {
            let v_bar = candidates
                .iter()
                .map(|&i| params.mu[i] * params.growth.k[i][k] / (params.growth.r[i] - params.mu[i]))
                .reduce(min_of)
                .unwrap();
            if params.s[k] <= v_bar {
                return CountBound::Finite(0);
            }
            let z = candidates
                .iter()
                .map(|&i| params.c[k][i] * params.mu[i] * params.threshold(i))
                .reduce(min_of)
                .unwrap();
            if z <= T::zero() {
                CountBound::Unbounded
            } else {
                CountBound::Finite(floor_count(params.d[k] * (params.s[k] - v_bar) / z))
            }
        })
        .fold(CountBound::Unbounded, CountBound::min)
}

/// Bound computed from measured averages `<x_i>` of the final survivor set,
/// taken over the part of the run after the last extinction event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryBound<T> {
    pub bound: CountBound,
    pub survivors: Vec<usize>,
    pub theta: Vec<T>,
    pub floor: Vec<T>,
    /// Start of the averaging window.
    pub t_from: T,
}

pub fn trajectory_upper_bound<T: Real>(
    traj: &Trajectory<T>,
    params: &EcosystemParams<T>,
) -> Result<TrajectoryBound<T>> {
    let terminal = traj.terminal();
    let survivors = terminal.alive_indices();
    if survivors.is_empty() {
        return Err(Error::Undefined("no species survive".into()));
    }
    let t_from = traj.last_event_time().unwrap_or(traj.samples.first().map_or(terminal.t, |s| s.t));
    let t_end = terminal.t;
    let window = Trajectory {
        samples: traj
            .samples
            .iter()
            .filter(|s| s.t >= t_from && s.t <= t_end)
            .cloned()
            .collect(),
        events: Vec::new(),
        converged: None,
        last: terminal.clone(),
        stats: traj.stats,
    };
    let averages: Vec<T> = survivors
        .iter()
        .map(|&i| time_average_by(&window, |s| s.x[i]))
        .collect::<Result<_>>()?;
    let floor = resource_floor(params, &survivors)?.v;
    let n_e = T::lit(survivors.len() as f64);
    let mut theta = Vec::with_capacity(params.resource_count());
    let mut bound = CountBound::Unbounded;
    for k in 0..params.resource_count() {
        let th = survivors
            .iter()
            .zip(&averages)
            .map(|(&i, &avg)| params.c[k][i] * (params.mu[i] + params.gamma[i] * params.threshold(i)) * avg)
            .fold(T::zero(), |a, b| a + b)
            / n_e;
        theta.push(th);
        let b = if params.s[k] <= floor[k] {
            CountBound::Finite(0)
        } else if th > T::zero() {
            CountBound::Finite(floor_count(params.d[k] * (params.s[k] - floor[k]) / th))
        } else {
            CountBound::Unbounded
        };
        bound = bound.min(b);
    }
    Ok(TrajectoryBound { bound, survivors, theta, floor, t_from })
}

/// The set `B_M = { i : r_i V / (K_i + S) > mu_i }` with `V = min_i lambda_i`,
/// together with the neutral-case survivor criterion
/// `a_j (1 + S/K) < min_i 1/(1 - a_i)`, `a_i = mu_i / r_i`, which is only
/// evaluated when all `K_i` coincide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBound<T> {
    pub members: Vec<usize>,
    pub count: usize,
    pub v_bar: Option<T>,
    pub neutral_criterion: Option<Vec<usize>>,
}

pub fn lower_bound_bm<T: Scalar>(params: &EcosystemParams<T>) -> Result<LowerBound<T>> {
    if params.resource_count() != 1 {
        return Err(Error::Dimension("B_M is defined for a single resource".into()));
    }
    let n = params.species_count();
    let (r, mu, s) = (&params.growth.r, &params.mu, params.s[0]);
    let k: Vec<T> = params.growth.k.iter().map(|row| row[0]).collect();
    let viable: Vec<usize> = (0..n).filter(|&i| r[i] > mu[i]).collect();
    let v_bar = viable.iter().map(|&i| mu[i] * k[i] / (r[i] - mu[i])).reduce(min_of);
    let members: Vec<usize> = match v_bar {
        Some(vb) => viable.iter().copied().filter(|&i| r[i] * vb / (k[i] + s) > mu[i]).collect(),
        None => Vec::new(),
    };
    let neutral_criterion = (n > 0 && k.iter().all(|&x| x == k[0])).then(|| {
        let a: Vec<T> = (0..n).map(|i| mu[i] / r[i]).collect();
        let rhs = a
            .iter()
            .filter(|&&ai| ai < T::one())
            .map(|&ai| T::one() / (T::one() - ai))
            .reduce(min_of);
        match rhs {
            Some(rhs) => (0..n).filter(|&j| a[j] * (T::one() + s / k[0]) < rhs).collect(),
            None => Vec::new(),
        }
    });
    Ok(LowerBound { count: members.len(), members, v_bar, neutral_criterion })
}

/// `N_*(v) = floor(R (S - v)(K + v) / (K v (v/(K+v) - p)_{+,eps}))`.
/// Fails when the cut-off is active at `v`.
pub fn n_star<T: Scalar>(v: T, d: &DimensionlessParams<T>, k: T, s: T) -> Result<u64> {
    if v <= T::zero() {
        return Err(Error::Undefined("N_* needs a positive resource level".into()));
    }
    let margin = cutoff(v / (k + v) - d.p, d.eps);
    if margin <= T::zero() {
        return Err(Error::Undefined(format!("cut-off active at v = {:?}", v)));
    }
    Ok(floor_count(n_star_raw(v, d, k, s, margin)))
}

/// Value of `N_*` before flooring, for a known positive cut-off margin.
fn n_star_raw<T: Scalar>(v: T, d: &DimensionlessParams<T>, k: T, s: T, margin: T) -> T {
    d.big_r * (s - v) * (k + v) / (k * v * margin)
}

/// Pre-floor value of `N_*` at `v`, or `None` when the cut-off is active.
pub fn n_star_value<T: Scalar>(v: T, d: &DimensionlessParams<T>, k: T, s: T) -> Option<T> {
    let margin = cutoff(v / (k + v) - d.p, d.eps);
    (v > T::zero() && margin > T::zero()).then(|| n_star_raw(v, d, k, s, margin))
}

/// `(N_*(K u_eps), N_*(K u_eps) + 1)`. At `u_eps` the cut-off margin equals
/// `eps` exactly, which is used directly so that the bracket does not depend
/// on rounding of `v/(K+v) - p` at the boundary.
pub fn n_max_bracket<T: Scalar>(d: &DimensionlessParams<T>) -> Result<(u64, u64)> {
    let u = d.u_eps().ok_or_else(|| Error::Undefined("p + eps >= 1: no viable level".into()))?;
    if u >= d.s_tilde {
        return Err(Error::Undefined("u_eps >= S/K: mass extinction".into()));
    }
    if d.eps <= T::zero() {
        return Err(Error::Undefined("bracket is unbounded without a threshold".into()));
    }
    let raw = d.big_r * (d.s_tilde - u) * (T::one() + u) / (u * d.eps);
    let lo = floor_count(raw);
    Ok((lo, lo + 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassExtinction<T> {
    /// The strict inequality `u_eps < S/K` holds.
    pub coexistence_possible: bool,
    pub mass_extinction: bool,
    /// `S/K - u_eps`; `None` when `u_eps` is infinite.
    pub margin: Option<T>,
}

pub fn mass_extinction_check<T: Scalar>(d: &DimensionlessParams<T>) -> MassExtinction<T> {
    match d.u_eps() {
        Some(u) => {
            let ok = u < d.s_tilde;
            MassExtinction { coexistence_possible: ok, mass_extinction: !ok, margin: Some(d.s_tilde - u) }
        }
        None => MassExtinction { coexistence_possible: false, mass_extinction: true, margin: None },
    }
}

/// Neutral equilibrium of a multi-resource community with identical uptake
/// parameters, limited by resource `k_star`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeutralEquilibrium<T> {
    pub w: T,
    pub k_star: usize,
    pub x_eq: Vec<T>,
    pub v_eq: Vec<T>,
}

impl<T: Scalar> NeutralEquilibrium<T> {
    /// Groups for the limiting resource, with `C` averaged over all species.
    pub fn dimensionless(&self, params: &EcosystemParams<T>) -> Result<DimensionlessParams<T>> {
        let ks = self.k_star;
        let n = params.species_count();
        let (mu, gamma, r) = (params.mu[0], params.gamma[0], params.growth.r[0]);
        let k = params.growth.k[0][ks];
        let c_mean = params.c[ks].iter().fold(T::zero(), |a, &b| a + b) / count::<T>(n);
        DimensionlessParams::new(
            mu / r,
            params.s[ks] / k,
            gamma * params.threshold(0) / r,
            k * params.d[ks] * gamma / (r * r * c_mean),
        )
    }

    /// `(N_*(w), N_*(w) + 1)`.
    pub fn n_e_bracket(&self, params: &EcosystemParams<T>) -> Result<(u64, u64)> {
        let d = self.dimensionless(params)?;
        let lo = n_star(self.w, &d, params.growth.k[0][self.k_star], params.s[self.k_star])?;
        Ok((lo, lo + 1))
    }
}

pub fn multi_resource_neutral<T: Real>(params: &EcosystemParams<T>) -> Result<NeutralEquilibrium<T>> {
    params.validate()?;
    let n = params.species_count();
    let m = params.resource_count();
    let same = |xs: &[T]| xs.iter().all(|&x| x == xs[0]);
    let x_ext: Vec<T> = (0..n).map(|i| params.threshold(i)).collect();
    let k_all: Vec<T> = params.growth.k.iter().flatten().copied().collect();
    if !(same(&params.mu) && same(&params.gamma) && same(&params.growth.r) && same(&k_all) && same(&x_ext)) {
        return Err(Error::InvalidParams("community is not neutral".into()));
    }
    let (mu, gamma, r, k, eps) = (params.mu[0], params.gamma[0], params.growth.r[0], k_all[0], params.gamma[0] * x_ext[0]);
    let phi = |z: T| r * z / (k + z);
    let psi = |z: T| {
        let f = phi(z);
        f * cutoff(f - mu, eps) / gamma
    };
    let c_sum: Vec<T> = params.c.iter().map(|row| row.iter().fold(T::zero(), |a, &b| a + b)).collect();
    let v_of = |kk: usize, w: T| (params.s[kk] - c_sum[kk] * psi(w) / params.d[kk]).max(T::zero());

    for ks in 0..m {
        // w - S + C psi(w) / D is nondecreasing in w
        let defect = |w: T| w - v_of(ks, w);
        let (mut lo, mut hi) = (T::zero(), params.s[ks]);
        for _ in 0..200 {
            let mid = (lo + hi) / T::two();
            if mid <= lo || mid >= hi {
                break;
            }
            if defect(mid) > T::zero() {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let w = (lo + hi) / T::two();
        let v_eq: Vec<T> = (0..m).map(|kk| if kk == ks { w } else { v_of(kk, w) }).collect();
        let slack = T::lit(1e3) * T::epsilon() * params.s[ks].max(T::one());
        if (0..m).all(|kk| kk == ks || v_eq[kk] >= w - slack) {
            let x = cutoff(phi(w) - mu, eps) / gamma;
            return Ok(NeutralEquilibrium { w, k_star: ks, x_eq: vec![x; n], v_eq });
        }
    }
    Err(Error::Undefined("no resource is consistently limiting".into()))
}

/// Every estimate that can be evaluated from the parameters alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiodiversityBounds<T> {
    pub resource_floor: Labeled<Option<ResourceFloor<T>>>,
    pub lambda: Labeled<Option<Vec<Option<T>>>>,
    pub beta: Labeled<Option<Vec<Option<T>>>>,
    pub upper_rough: Labeled<CountBound>,
    pub lower_bm: Labeled<Option<LowerBound<T>>>,
    pub dimensionless: Labeled<Option<DimensionlessParams<T>>>,
    pub n_star_bracket: Labeled<Option<(u64, u64)>>,
    pub mass_extinction: Labeled<Option<MassExtinction<T>>>,
    pub trajectory_upper: Option<Labeled<TrajectoryBound<T>>>,
}

pub fn biodiversity_bounds<T: Scalar>(params: &EcosystemParams<T>) -> BiodiversityBounds<T> {
    let viable: Vec<usize> =
        (0..params.species_count()).filter(|&i| params.growth.r[i] > params.mu[i]).collect();
    let be = break_even(params).ok();
    let dimless = DimensionlessParams::from_params(params).ok();
    BiodiversityBounds {
        resource_floor: Labeled::closed_form(resource_floor(params, &viable).ok()),
        lambda: Labeled::closed_form(be.as_ref().map(|b| b.lambda.clone())),
        beta: Labeled::closed_form(be.map(|b| b.beta)),
        upper_rough: Labeled::closed_form(upper_bound_rough(params)),
        lower_bm: Labeled::closed_form(lower_bound_bm(params).ok()),
        n_star_bracket: Labeled::closed_form(dimless.as_ref().and_then(|d| n_max_bracket(d).ok())),
        mass_extinction: Labeled::closed_form(dimless.as_ref().map(mass_extinction_check)),
        dimensionless: Labeled::closed_form(dimless),
        trajectory_upper: None,
    }
}
