//! Random communities and assembly experiments on a single resource.
//!
//! Every trial draws from its own ChaCha8 stream (`seed`, stream = trial
//! index), so results do not depend on how trials are scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate, IntegratorOptions, Record, State};
use crate::equilibrium::{solve_special_equilibrium, FixedPointOptions};
use crate::error::{Error, Result};
use crate::estimates::{beta_i, upper_bound_rough, CountBound};
use crate::model::{EcosystemParams, GrowthLaw};

/// Compactly supported one-dimensional law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Dist {
    /// Uniform on `[low, high]`; `low == high` is a point mass.
    Uniform { low: f64, high: f64 },
    /// Log-normal with the given mean and standard deviation (of the variable
    /// itself), conditioned on `[low, high]`.
    LogNormal { mean: f64, sigma: f64, low: f64, high: f64 },
}

impl Dist {
    pub fn point(x: f64) -> Self {
        Dist::Uniform { low: x, high: x }
    }

    /// Smallest and largest attainable values.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Dist::Uniform { low, high } | Dist::LogNormal { low, high, .. } => (low, high),
        }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        let (low, high) = self.support();
        if !(low.is_finite() && high.is_finite() && low > 0.0 && low <= high) {
            return Err(Error::InvalidParams(format!(
                "{name}: support [{low}, {high}] must be a compact subset of (0, inf)"
            )));
        }
        if let Dist::LogNormal { mean, sigma, .. } = *self {
            if !(mean.is_finite() && mean > 0.0 && sigma.is_finite() && sigma >= 0.0) {
                return Err(Error::InvalidParams(format!("{name}: log-normal needs mean > 0, sigma >= 0")));
            }
            if sigma == 0.0 && !(low..=high).contains(&mean) {
                return Err(Error::InvalidParams(format!("{name}: point mass {mean} outside [{low}, {high}]")));
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        match *self {
            Dist::Uniform { low, high } => Ok(if low == high { low } else { rng.random_range(low..=high) }),
            Dist::LogNormal { mean, sigma, low, high } => {
                if sigma == 0.0 {
                    return Ok(mean);
                }
                let s2 = (1.0 + (sigma / mean).powi(2)).ln();
                let law = LogNormal::new(mean.ln() - s2 / 2.0, s2.sqrt())
                    .map_err(|e| Error::Sampling(e.to_string()))?;
                for _ in 0..MAX_TRUNCATION_DRAWS {
                    let x = law.sample(rng);
                    if (low..=high).contains(&x) {
                        return Ok(x);
                    }
                }
                Err(Error::Sampling(format!(
                    "log-normal({mean}, {sigma}) has too little mass on [{low}, {high}]"
                )))
            }
        }
    }
}

const MAX_TRUNCATION_DRAWS: usize = 100_000;

/// Laws of the per-species parameters of a single-resource community.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterDistributions {
    pub mu: Dist,
    pub gamma: Dist,
    pub r: Dist,
    pub k: Dist,
    pub c: Dist,
    pub x_ext: Dist,
    /// Initial abundances.
    pub x_init: Dist,
    /// Resource turnover `D`.
    pub d: f64,
    /// Resource supply `S`.
    pub s: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

impl ParameterDistributions {
    pub fn validate(&self) -> Result<()> {
        for (name, d) in [
            ("mu", &self.mu),
            ("gamma", &self.gamma),
            ("r", &self.r),
            ("k", &self.k),
            ("c", &self.c),
            ("x_ext", &self.x_ext),
            ("x_init", &self.x_init),
        ] {
            d.validate(name)?;
        }
        if !(self.d.is_finite() && self.d > 0.0 && self.s.is_finite() && self.s > 0.0) {
            return Err(Error::InvalidParams("d and s must be positive and finite".into()));
        }
        Ok(())
    }

    /// Range of `beta` over the product of the supports.
    pub fn beta_range(&self) -> Option<(f64, f64)> {
        let (mu, gamma, r, k, x) =
            (self.mu.support(), self.gamma.support(), self.r.support(), self.k.support(), self.x_ext.support());
        let lo = beta_i(mu.0, r.1, k.0, gamma.0 * x.0)?;
        let hi = beta_i(mu.1, r.0, k.1, gamma.1 * x.1)?;
        Some((lo, hi))
    }
}

/// One random community and the quantities derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunitySample {
    pub params: EcosystemParams<f64>,
    pub x_init: Vec<f64>,
    pub beta: Vec<f64>,
    /// `theta_i = c_i (gamma_i X_i + mu_i) X_i / D`.
    pub theta: Vec<f64>,
    /// Species indices by increasing `beta`.
    pub beta_sorted_index: Vec<usize>,
    /// Parameter tuples redrawn because `r_i <= mu_i + gamma_i X_i` or the
    /// initial abundance was not above `X_i`.
    pub rejections: usize,
}

impl CommunitySample {
    pub fn species_count(&self) -> usize {
        self.beta.len()
    }

    pub fn beta_min(&self) -> f64 {
        self.beta[self.beta_sorted_index[0]]
    }

    pub fn mean_theta(&self) -> f64 {
        self.theta.iter().sum::<f64>() / self.theta.len() as f64
    }

    /// The same community and initial abundances under another supply.
    pub fn with_supply(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.params.s[0] = s;
        out
    }
}

/// Generator of trial `stream` under `seed`.
pub fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws `m` species from stream 0 of `rng_seed`.
pub fn sample_community(dist: &ParameterDistributions, m: usize, rng_seed: u64) -> Result<CommunitySample> {
    sample_trial(dist, m, rng_seed, 0)
}

/// Draws `m` species from stream `trial` of `rng_seed`.
pub fn sample_trial(dist: &ParameterDistributions, m: usize, rng_seed: u64, trial: u64) -> Result<CommunitySample> {
    dist.validate()?;
    if m == 0 {
        return Err(Error::InvalidParams("community needs at least one species".into()));
    }
    let mut rng = trial_rng(rng_seed, trial);
    let mut cols: [Vec<f64>; 7] = Default::default();
    let mut beta = Vec::with_capacity(m);
    let mut rejections = 0usize;
    while beta.len() < m {
        let mu = dist.mu.sample(&mut rng)?;
        let gamma = dist.gamma.sample(&mut rng)?;
        let r = dist.r.sample(&mut rng)?;
        let k = dist.k.sample(&mut rng)?;
        let c = dist.c.sample(&mut rng)?;
        let x = dist.x_ext.sample(&mut rng)?;
        let x0 = dist.x_init.sample(&mut rng)?;
        match beta_i(mu, r, k, gamma * x) {
            Some(b) if x0 > x => {
                for (col, val) in cols.iter_mut().zip([mu, gamma, r, k, c, x, x0]) {
                    col.push(val);
                }
                beta.push(b);
            }
            _ => {
                rejections += 1;
                if rejections > m {
                    return Err(Error::Sampling(format!(
                        "rejection rate above 50% ({rejections} rejected for {} accepted): \
                         draws with r <= mu + gamma X_ext or x_init <= X_ext dominate",
                        beta.len()
                    )));
                }
            }
        }
    }
    let [mu, gamma, r, k, c, x_ext, x_init] = cols;
    let theta = (0..m).map(|i| c[i] * (gamma[i] * x_ext[i] + mu[i]) * x_ext[i] / dist.d).collect();
    let params = EcosystemParams::new(mu, gamma, vec![c], vec![dist.d], vec![dist.s], GrowthLaw::holling(r, k), x_ext)?;
    let mut beta_sorted_index: Vec<usize> = (0..m).collect();
    beta_sorted_index.sort_by(|&i, &j| beta[i].total_cmp(&beta[j]).then(i.cmp(&j)));
    Ok(CommunitySample { params, x_init, beta, theta, beta_sorted_index, rejections })
}

/// Settings shared by the assembly experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimOptions {
    pub integrator: IntegratorOptions<f64>,
    pub horizon: f64,
    pub fixed_point: FixedPointOptions<f64>,
    /// Species with `|beta_i - v_eq|` below this are not counted as mismatches.
    pub tie_tol: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            integrator: IntegratorOptions { record: Record::Endpoints, ..Default::default() },
            horizon: 1e3,
            fixed_point: FixedPointOptions::default(),
            tie_tol: 1e-9,
        }
    }
}

/// Terminal state of one assembly run.
#[derive(Debug, Clone, PartialEq)]
struct Assembly {
    terminal: State<f64>,
    converged: bool,
}

fn assemble(sample: &CommunitySample, opts: &SimOptions) -> Result<Assembly> {
    let init = State::initial(sample.x_init.clone(), sample.params.s.clone());
    let mut iopts = opts.integrator.clone();
    iopts.record = Record::Endpoints;
    match integrate(&sample.params, &init, opts.horizon, &iopts) {
        Ok(traj) => Ok(Assembly { converged: traj.converged.is_some(), terminal: traj.terminal().clone() }),
        Err(e) => match e.error {
            Error::NonFinite { .. } | Error::StepUnderflow { .. } => Err(e.error),
            _ => Ok(Assembly { terminal: e.last_good, converged: false }),
        },
    }
}

/// Outcome of one R* trial. Species are labelled `1..=M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RStarReport {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N_e_simulated")]
    pub n_e_simulated: usize,
    /// `round((S - beta_min) / <theta>)`, clamped at zero.
    #[serde(rename = "N_e_predicted")]
    pub n_e_predicted: u64,
    pub survivor_set_simulated: Vec<usize>,
    /// `{ i : beta_i < v_eq }`.
    pub survivor_set_predicted: Vec<usize>,
    /// Size of the symmetric difference, ties excluded.
    pub mismatch_count: usize,
    /// Survivors are the `N_e` smallest `beta` (up to ties).
    pub rank_consistent: bool,
    /// `beta` at rank `N_e + 1` minus rank `N_e`; absent when either rank is.
    pub beta_gap: Option<f64>,
    /// Equilibrium resource level of the simulated survivors.
    pub v_eq: f64,
    pub v_terminal: f64,
    pub beta_min: f64,
    pub mean_theta: f64,
    /// `|N_sim - N_pred| / N_sim`; absent when nothing survives.
    pub relative_error: Option<f64>,
    /// `max - min` of `beta` over survivors.
    pub survivor_beta_range: Option<f64>,
    pub upper_bound_rough: CountBound,
    pub converged: bool,
    pub certified: bool,
    /// Stability number of the surviving community.
    pub rho: Option<f64>,
    pub rho_exceeds_one: bool,
    pub rejections: usize,
}

/// Assembles the community from its random initial abundances and compares
/// the survivors with the R* ordering and the survivor-count formula.
pub fn rstar_experiment(sample: &CommunitySample, opts: &SimOptions) -> Result<RStarReport> {
    let p = &sample.params;
    if p.resource_count() != 1 {
        return Err(Error::Dimension("the R* experiment needs a single resource".into()));
    }
    let m = sample.species_count();
    let run = assemble(sample, opts)?;
    let alive = &run.terminal.alive;
    let survivors: Vec<usize> = run.terminal.alive_indices();
    let n_e = survivors.len();
    let eq = solve_special_equilibrium(p, true, alive, &opts.fixed_point)?;
    let v_eq = eq.v_eq[0];
    let tie = |i: usize| (sample.beta[i] - v_eq).abs() < opts.tie_tol;

    let predicted: Vec<usize> = (0..m).filter(|&i| sample.beta[i] < v_eq).collect();
    let mismatch_count = (0..m).filter(|&i| alive[i] != (sample.beta[i] < v_eq) && !tie(i)).count();

    let ranked = &sample.beta_sorted_index;
    let rank_consistent = match (survivors.iter().map(|&i| sample.beta[i]).reduce(f64::max), n_e < m) {
        (Some(top), true) => {
            let lowest_lost = ranked.iter().filter(|&&i| !alive[i]).map(|&i| sample.beta[i]).fold(f64::INFINITY, f64::min);
            top < lowest_lost + opts.tie_tol
        }
        _ => true,
    };
    let beta_gap = (n_e > 0 && n_e < m).then(|| sample.beta[ranked[n_e]] - sample.beta[ranked[n_e - 1]]);

    let beta_min = sample.beta_min();
    let mean_theta = sample.mean_theta();
    let n_pred = ((p.s[0] - beta_min) / mean_theta).round().max(0.0) as u64;
    let survivor_beta: Vec<f64> = survivors.iter().map(|&i| sample.beta[i]).collect();
    let survivor_beta_range = (!survivor_beta.is_empty()).then(|| {
        survivor_beta.iter().copied().fold(f64::MIN, f64::max) - survivor_beta.iter().copied().fold(f64::MAX, f64::min)
    });

    Ok(RStarReport {
        m,
        n_e_simulated: n_e,
        n_e_predicted: n_pred,
        survivor_set_simulated: survivors.iter().map(|i| i + 1).collect(),
        survivor_set_predicted: predicted.iter().map(|i| i + 1).collect(),
        mismatch_count,
        rank_consistent,
        beta_gap,
        v_eq,
        v_terminal: run.terminal.v[0],
        beta_min,
        mean_theta,
        relative_error: (n_e > 0).then(|| (n_e as f64 - n_pred as f64).abs() / n_e as f64),
        survivor_beta_range,
        upper_bound_rough: upper_bound_rough(p),
        converged: run.converged,
        certified: eq.unique_certified,
        rho: eq.rho,
        rho_exceeds_one: eq.rho.is_some_and(|r| r > 1.0),
        rejections: sample.rejections,
    })
}

/// Aggregate over converged trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RStarSummary {
    #[serde(rename = "M")]
    pub m: usize,
    pub trials: usize,
    pub converged: usize,
    /// Share of converged trials whose survivors are the `N_e` smallest `beta`.
    pub rank_consistent_fraction: Option<f64>,
    /// Share of converged trials with zero mismatches.
    pub exact_fraction: Option<f64>,
    pub mean_relative_error: Option<f64>,
    #[serde(rename = "mean_N_e")]
    pub mean_n_e: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RStarEnsemble {
    pub seed: u64,
    pub summary: RStarSummary,
    pub trials: Vec<RStarReport>,
}

/// Runs `n_trials` independent R* trials on the current rayon pool.
pub fn rstar_ensemble(
    dist: &ParameterDistributions,
    m: usize,
    n_trials: usize,
    seed: u64,
    opts: &SimOptions,
) -> Result<RStarEnsemble> {
    if n_trials == 0 {
        return Err(Error::Input("n_trials must be positive".into()));
    }
    let trials = (0..n_trials as u64)
        .into_par_iter()
        .map(|t| sample_trial(dist, m, seed, t).and_then(|s| rstar_experiment(&s, opts)))
        .collect::<Result<Vec<_>>>()?;
    Ok(RStarEnsemble { seed, summary: summarize(m, &trials), trials })
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, sum) = xs.fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    (n > 0).then(|| sum / n as f64)
}

fn summarize(m: usize, trials: &[RStarReport]) -> RStarSummary {
    let ok: Vec<&RStarReport> = trials.iter().filter(|t| t.converged).collect();
    let frac = |f: fn(&RStarReport) -> bool| mean(ok.iter().map(|t| f(t) as u8 as f64));
    RStarSummary {
        m,
        trials: trials.len(),
        converged: ok.len(),
        rank_consistent_fraction: frac(|t| t.rank_consistent),
        exact_fraction: frac(|t| t.mismatch_count == 0),
        mean_relative_error: mean(ok.iter().filter_map(|t| t.relative_error)),
        mean_n_e: mean(ok.iter().map(|t| t.n_e_simulated as f64)),
    }
}

/// Empirical frequency with a 95% Wilson score interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frequency {
    pub successes: usize,
    pub trials: usize,
    pub frequency: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
}

impl Frequency {
    pub fn new(successes: usize, trials: usize) -> Result<Self> {
        if trials == 0 {
            return Err(Error::Input("n_trials must be positive".into()));
        }
        const Z: f64 = 1.959963984540054;
        let n = trials as f64;
        let p = successes as f64 / n;
        let z2 = Z * Z;
        let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
        let half = Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n);
        Ok(Self {
            successes,
            trials,
            frequency: p,
            wilson_low: (centre - half).max(0.0),
            wilson_high: (centre + half).min(1.0),
        })
    }
}

/// Frequency of `beta_(n) - beta_min < M^{-1/3}` over independent samples.
pub fn beta_gap_statistic(
    dist: &ParameterDistributions,
    m: usize,
    n: usize,
    n_trials: usize,
    rng_seed: u64,
) -> Result<Frequency> {
    if n_trials == 0 {
        return Err(Error::Input("n_trials must be positive".into()));
    }
    if n == 0 || n > m {
        return Err(Error::Input(format!("order statistic {n} out of range for M = {m}")));
    }
    let cut = (m as f64).powf(-1.0 / 3.0);
    let hits = (0..n_trials as u64)
        .into_par_iter()
        .map(|t| {
            let s = sample_trial(dist, m, rng_seed, t)?;
            let idx = &s.beta_sorted_index;
            Ok((s.beta[idx[n - 1]] - s.beta[idx[0]] < cut) as usize)
        })
        .collect::<Result<Vec<_>>>()?;
    Frequency::new(hits.iter().sum(), n_trials)
}

/// One point of an `N_e(S)` curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "N_e")]
    pub n_e: usize,
    pub v_eq: f64,
    pub mass_extinct: bool,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    /// `c r^2 / (gamma D S)` at the sample medians and the first grid supply.
    #[serde(rename = "P_stress")]
    pub p_stress: f64,
    /// `(dN/N) / (dS/S)` between the first two grid points.
    #[serde(rename = "R_b_empirical")]
    pub r_b_empirical: Option<f64>,
    #[serde(rename = "delta_S")]
    pub delta_s: f64,
    #[serde(rename = "delta_Ne")]
    pub delta_ne: i64,
    /// `R_b / (S P_stress)`, an order-of-magnitude comparison.
    pub rb_over_stress: Option<f64>,
    /// Supply at which `N_e` reaches zero, bisected between grid points.
    #[serde(rename = "mass_extinction_S_critical")]
    pub s_critical: Option<f64>,
    /// `K (mu + gamma X) / (r - mu - gamma X)` at the sample medians.
    #[serde(rename = "mass_extinction_S_predicted")]
    pub s_predicted: Option<f64>,
    /// `N_e` rose by more than one species as `S` decreased.
    pub non_monotone: bool,
    pub all_converged: bool,
    pub bisection_steps: usize,
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn sweep_point(sample: &CommunitySample, s: f64, opts: &SimOptions) -> Result<SweepPoint> {
    let run = assemble(&sample.with_supply(s), opts)?;
    let n_e = run.terminal.n_alive();
    Ok(SweepPoint { s, n_e, v_eq: run.terminal.v[0], mass_extinct: n_e == 0, converged: run.converged })
}

/// Relative width at which the critical-supply bisection stops.
pub const BISECTION_RTOL: f64 = 1e-6;

/// Re-runs the assembly over a decreasing supply grid from the same initial
/// abundances. Returns the report and the curve.
pub fn robustness_sweep(
    sample: &CommunitySample,
    s_grid: &[f64],
    opts: &SimOptions,
) -> Result<(RobustnessReport, Vec<SweepPoint>)> {
    let p = &sample.params;
    if p.resource_count() != 1 {
        return Err(Error::Dimension("the robustness sweep needs a single resource".into()));
    }
    if s_grid.len() < 2 || s_grid.windows(2).any(|w| !(w[1] < w[0])) || s_grid.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::Input("s_grid must hold at least two positive, strictly decreasing values".into()));
    }
    let curve =
        s_grid.par_iter().map(|&s| sweep_point(sample, s, opts)).collect::<Result<Vec<_>>>()?;

    let c: Vec<f64> = p.c[0].clone();
    let k: Vec<f64> = p.growth.k.iter().map(|row| row[0]).collect();
    let x: Vec<f64> = (0..sample.species_count()).map(|i| p.threshold(i)).collect();
    let (c_med, r_med, g_med) = (median(&c), median(&p.growth.r), median(&p.gamma));
    let (mu_med, k_med, x_med) = (median(&p.mu), median(&k), median(&x));
    let s0 = s_grid[0];
    let p_stress = stress_parameter(c_med, r_med, g_med, p.d[0], s0);

    let (a, b) = (&curve[0], &curve[1]);
    let delta_s = b.s - a.s;
    let delta_ne = b.n_e as i64 - a.n_e as i64;
    let r_b = (a.n_e > 0).then(|| (delta_ne as f64 / a.n_e as f64) / (delta_s / a.s));

    let mut s_critical = None;
    let mut bisection_steps = 0;
    if let Some(j) = curve.windows(2).position(|w| w[0].n_e > 0 && w[1].n_e == 0) {
        let (mut hi, mut lo) = (curve[j].s, curve[j + 1].s);
        while hi - lo > BISECTION_RTOL * hi {
            let mid = 0.5 * (hi + lo);
            if sweep_point(sample, mid, opts)?.n_e > 0 {
                hi = mid;
            } else {
                lo = mid;
            }
            bisection_steps += 1;
        }
        s_critical = Some(0.5 * (hi + lo));
    }

    let report = RobustnessReport {
        p_stress,
        r_b_empirical: r_b,
        delta_s,
        delta_ne,
        rb_over_stress: r_b.map(|rb| rb / (s0 * p_stress)),
        s_critical,
        s_predicted: beta_i(mu_med, r_med, k_med, g_med * x_med),
        non_monotone: curve.windows(2).any(|w| w[1].n_e > w[0].n_e + 1),
        all_converged: curve.iter().all(|pt| pt.converged),
        bisection_steps,
    };
    Ok((report, curve))
}

/// `c r^2 / (gamma D S)`.
pub fn stress_parameter(c: f64, r: f64, gamma: f64, d: f64, s: f64) -> f64 {
    c * r * r / (gamma * d * s)
}

#[cfg(test)]
mod tests;
