//! Special equilibria as fixed points of the resource balance map.
//!
//! The map `G(v)_k = S_k - F_k(v) / D_k`, clipped to `[0, S]`, is
//! nonincreasing, so iterating it from `v = S` yields a decreasing sequence of
//! even iterates and an increasing sequence of odd iterates that bracket every
//! fixed point.

use serde::{Deserialize, Serialize};

use crate::dynamics::{rhs, State};
use crate::error::{Error, Result};
use crate::model::{compute_rho_viable, EcosystemParams};
use crate::num::{cutoff, max_abs_diff, max_norm, max_of, pos_part, Real, Scalar};

/// Growth surplus `phi - mu` after the positive part or threshold cut-off.
#[inline]
fn surplus<T: Scalar>(p: &EcosystemParams<T>, i: usize, phi: T, thresholds_active: bool) -> T {
    let z = phi - p.mu[i];
    if thresholds_active {
        cutoff(z, p.gamma[i] * p.threshold(i))
    } else {
        pos_part(z)
    }
}

/// Total consumption `F_k(v)` by the species in `alive`.
pub fn consumption_map<T: Scalar>(
    params: &EcosystemParams<T>,
    v: &[T],
    thresholds_active: bool,
    alive: &[bool],
) -> Vec<T> {
    let mut f = vec![T::zero(); params.resource_count()];
    for i in (0..params.species_count()).filter(|&i| alive[i]) {
        let phi = params.phi(i, v);
        let z = surplus(params, i, phi, thresholds_active);
        if z == T::zero() {
            continue;
        }
        let uptake = phi * z / params.gamma[i];
        for (k, fk) in f.iter_mut().enumerate() {
            *fk = *fk + params.c[k][i] * uptake;
        }
    }
    f
}

/// One application of the clipped balance map.
pub fn balance_map<T: Scalar>(
    params: &EcosystemParams<T>,
    v: &[T],
    thresholds_active: bool,
    alive: &[bool],
) -> Vec<T> {
    consumption_map(params, v, thresholds_active, alive)
        .into_iter()
        .enumerate()
        .map(|(k, fk)| max_of(params.s[k] - fk / params.d[k], T::zero()))
        .collect()
}

/// The first `n` iterates of the balance map started at `S` (index 0 is `S`).
pub fn bracket_iterates<T: Scalar>(
    params: &EcosystemParams<T>,
    thresholds_active: bool,
    alive: &[bool],
    n: usize,
) -> Vec<Vec<T>> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(params.s.clone());
    for _ in 0..n {
        let next = balance_map(params, out.last().unwrap(), thresholds_active, alive);
        out.push(next);
    }
    out
}

/// Abundances induced by a resource vector.
pub fn induced_abundances<T: Scalar>(
    params: &EcosystemParams<T>,
    v: &[T],
    thresholds_active: bool,
    alive: &[bool],
) -> Vec<T> {
    (0..params.species_count())
        .map(|i| {
            if alive[i] {
                surplus(params, i, params.phi(i, v), thresholds_active) / params.gamma[i]
            } else {
                T::zero()
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointOptions<T> {
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for FixedPointOptions<T> {
    fn default() -> Self {
        Self { tol: T::lit(1e-10), max_iter: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult<T> {
    pub v_eq: Vec<T>,
    pub x_eq: Vec<T>,
    /// `(v_lo, v_hi)`: limits of the odd and even iterates.
    pub bracket: (Vec<T>, Vec<T>),
    /// `||v_eq - G(v_eq)||_inf`.
    pub residual: T,
    pub iterations: usize,
    /// The bracket closed below tolerance and `rho <= 1`.
    pub unique_certified: bool,
    pub bracket_closed: bool,
    /// `rho` of the viable part of the solved community, when defined.
    pub rho: Option<T>,
    pub thresholds_active: bool,
    pub alive: Vec<bool>,
}

impl<T: Scalar> EquilibriumResult<T> {
    pub fn bracket_width(&self) -> T {
        max_abs_diff(&self.bracket.0, &self.bracket.1)
    }
}

/// Solves for the special equilibrium of the species in `alive`.
///
/// If the bracket does not close (a two-cycle of the balance map, or the
/// iteration budget runs out) the result is returned uncertified. For a
/// single resource the fixed point is then refined by bisection inside the
/// bracket, since `v - G(v)` is increasing.
pub fn solve_special_equilibrium<T: Real>(
    params: &EcosystemParams<T>,
    thresholds_active: bool,
    alive: &[bool],
    opts: &FixedPointOptions<T>,
) -> Result<EquilibriumResult<T>> {
    params.validate()?;
    if alive.len() != params.species_count() {
        return Err(Error::Dimension("alive mask must have one entry per species".into()));
    }
    let alive_idx: Vec<usize> = (0..alive.len()).filter(|&i| alive[i]).collect();
    let rho = if alive_idx.is_empty() {
        None
    } else {
        compute_rho_viable(&params.restricted(&alive_idx)).map(|r| r.rho)
    };
    let s = &params.s;
    let slack = T::lit(64.0) * T::epsilon() * max_norm(s).max(T::one());

    if alive_idx.is_empty() {
        return Ok(EquilibriumResult {
            v_eq: s.clone(),
            x_eq: vec![T::zero(); alive.len()],
            bracket: (s.clone(), s.clone()),
            residual: T::zero(),
            iterations: 0,
            unique_certified: true,
            bracket_closed: true,
            rho: None,
            thresholds_active,
            alive: alive.to_vec(),
        });
    }

    let g = |v: &[T]| balance_map(params, v, thresholds_active, alive);
    let mut even = s.clone();
    let mut odd = g(&even);
    let mut iterations = 1;
    let mut closed = max_abs_diff(&even, &odd) <= opts.tol;
    while !closed && iterations < opts.max_iter {
        let even_next = g(&odd);
        let odd_next = g(&even_next);
        iterations += 2;
        let check = |lo: &[T], hi: &[T]| -> Result<()> {
            let excess = lo.iter().zip(hi).map(|(&a, &b)| a - b).fold(T::zero(), max_of);
            if excess > slack {
                Err(Error::BracketViolation { iteration: iterations, excess: excess.as_f64() })
            } else {
                Ok(())
            }
        };
        check(&even_next, &even)?;
        check(&odd, &odd_next)?;
        check(&odd_next, &even_next)?;
        if even_next.iter().chain(&odd_next).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { t: iterations as f64 });
        }
        let moved = max_abs_diff(&even_next, &even).max(max_abs_diff(&odd_next, &odd));
        even = even_next;
        odd = odd_next;
        closed = max_abs_diff(&even, &odd) <= opts.tol;
        if !closed && moved <= slack {
            // stalled on a two-cycle
            break;
        }
    }

    let mut v_eq: Vec<T> = odd.iter().zip(&even).map(|(&a, &b)| (a + b) / T::two()).collect();
    if !closed && params.resource_count() == 1 {
        let defect = |v: T| v - g(&[v])[0];
        let (mut lo, mut hi) = (odd[0], even[0]);
        while hi - lo > opts.tol.min(T::lit(1e-14) * hi.max(T::one())) {
            let mid = (lo + hi) / T::two();
            if mid <= lo || mid >= hi {
                break;
            }
            if defect(mid) > T::zero() {
                hi = mid;
            } else {
                lo = mid;
            }
            iterations += 1;
        }
        v_eq = vec![(lo + hi) / T::two()];
    }
    let residual = max_abs_diff(&v_eq, &g(&v_eq));
    let x_eq = induced_abundances(params, &v_eq, thresholds_active, alive);
    Ok(EquilibriumResult {
        v_eq,
        x_eq,
        bracket: (odd, even),
        residual,
        iterations,
        unique_certified: closed && rho.is_some_and(|r| r <= T::one()),
        bracket_closed: closed,
        rho,
        thresholds_active,
        alive: alive.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticEquilibrium<T> {
    pub v: Vec<T>,
    pub x: Vec<T>,
    /// `min_k D_k`; the expansion error is `O(1/d^2)` in `v`.
    pub d: T,
}

/// First-order large-turnover expansion of the special equilibrium.
pub fn asymptotic_equilibrium<T: Scalar>(params: &EcosystemParams<T>) -> AsymptoticEquilibrium<T> {
    let phi_s = params.phi_at_supply();
    let x: Vec<T> = (0..params.species_count())
        .map(|i| pos_part(phi_s[i] - params.mu[i]) / params.gamma[i])
        .collect();
    let v = (0..params.resource_count())
        .map(|k| {
            let uptake = (0..params.species_count())
                .map(|i| params.c[k][i] * phi_s[i] * x[i])
                .fold(T::zero(), |a, b| a + b);
            params.s[k] - uptake / params.d[k]
        })
        .collect();
    let d = params.d.iter().copied().fold(params.d[0], crate::num::min_of);
    AsymptoticEquilibrium { v, x, d }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectReport<T> {
    /// `||rhs(x_eq, v_eq)||_inf` over the alive species and all resources.
    pub defect: T,
    /// Alive species with `0 < x_eq <= X_ext`.
    pub threshold_violations: Vec<usize>,
}

/// Evaluates the dynamics at the solver output.
pub fn equilibrium_consistency_check<T: Real>(
    params: &EcosystemParams<T>,
    eq: &EquilibriumResult<T>,
) -> Result<DefectReport<T>> {
    let state = State { t: T::zero(), x: eq.x_eq.clone(), v: eq.v_eq.clone(), alive: eq.alive.clone() };
    let defect = max_norm(&rhs(params, &state)?);
    let threshold_violations = if eq.thresholds_active {
        (0..params.species_count())
            .filter(|&i| eq.alive[i] && eq.x_eq[i] > T::zero() && eq.x_eq[i] <= params.threshold(i))
            .collect()
    } else {
        Vec::new()
    };
    Ok(DefectReport { defect, threshold_violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GrowthLaw;
    use approx::assert_relative_eq;

    fn reference(d: f64) -> EcosystemParams<f64> {
        EcosystemParams::new(
            vec![0.2],
            vec![1.0],
            vec![vec![1.0]],
            vec![d],
            vec![1.0],
            GrowthLaw::holling(vec![1.0], vec![1.0]),
            vec![],
        )
        .unwrap()
    }

    /// Independent oracle: bisection on `D (S - v) = phi (phi - mu)` with
    /// `phi = v / (1 + v)`.
    fn scalar_oracle(d: f64) -> f64 {
        let h = |v: f64| {
            let phi = v / (1.0 + v);
            d * (1.0 - v) - phi * (phi - 0.2).max(0.0)
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn consumption_examples() {
        let p = reference(10.0);
        assert_eq!(consumption_map(&p, &[0.0], false, &[true]), vec![0.0]);
        assert_relative_eq!(consumption_map(&p, &[1.0], false, &[true])[0], 0.15, epsilon = 1e-15);
        let mut q = p.clone();
        q.x_ext = vec![0.35];
        assert_eq!(consumption_map(&q, &[1.0], true, &[true]), vec![0.0]);
        assert_eq!(consumption_map(&p, &[1.0], false, &[false]), vec![0.0]);
    }

    #[test]
    fn reference_equilibrium_matches_oracle() {
        let p = reference(10.0);
        let eq = solve_special_equilibrium(&p, false, &[true], &FixedPointOptions::default()).unwrap();
        let v_star = scalar_oracle(10.0);
        // frozen oracle values
        assert_relative_eq!(v_star, 0.985_294_908_647_596_5, epsilon = 1e-12);
        assert_relative_eq!(eq.v_eq[0], v_star, epsilon = 1e-10);
        assert_relative_eq!(eq.x_eq[0], 0.296_296_496_986_832_9, epsilon = 1e-9);
        assert!(eq.residual <= 1e-10);
        assert!(eq.bracket_closed && eq.unique_certified);
        let rep = equilibrium_consistency_check(&p, &eq).unwrap();
        assert!(rep.defect <= 1e-9, "{}", rep.defect);
    }

    #[test]
    fn doomed_community_sits_at_supply() {
        let mut p = reference(10.0);
        p.mu[0] = 0.6;
        let eq = solve_special_equilibrium(&p, false, &[true], &FixedPointOptions::default()).unwrap();
        assert_eq!(eq.v_eq, vec![1.0]);
        assert_eq!(eq.x_eq, vec![0.0]);
    }

    #[test]
    fn empty_alive_set_gives_supply_state() {
        let p = reference(10.0);
        let eq = solve_special_equilibrium(&p, false, &[false], &FixedPointOptions::default()).unwrap();
        assert_eq!(eq.v_eq, p.s);
        assert_eq!(eq.x_eq, vec![0.0]);
        let rep = equilibrium_consistency_check(&p, &eq).unwrap();
        assert_eq!(rep.defect, 0.0);
    }

    #[test]
    fn perturbed_equilibrium_has_defect() {
        let p = reference(10.0);
        let mut eq = solve_special_equilibrium(&p, false, &[true], &FixedPointOptions::default()).unwrap();
        eq.v_eq[0] -= 0.1;
        let rep = equilibrium_consistency_check(&p, &eq).unwrap();
        assert!(rep.defect > 1e-3);
    }

    #[test]
    fn asymptotic_reference_and_limits() {
        let p = reference(10.0);
        let a = asymptotic_equilibrium(&p);
        assert_relative_eq!(a.x[0], 0.3, epsilon = 1e-15);
        assert_relative_eq!(a.v[0], 0.985, epsilon = 1e-15);
        assert_eq!(a.d, 10.0);
        assert!((a.v[0] - scalar_oracle(10.0)).abs() < 1e-3);
        let big = asymptotic_equilibrium(&reference(1e12));
        assert!((big.v[0] - 1.0).abs() < 1e-12);
        let mut doomed = reference(10.0);
        doomed.mu[0] = 0.7;
        let a = asymptotic_equilibrium(&doomed);
        assert_eq!(a.x[0], 0.0);
        assert_eq!(a.v[0], 1.0);
    }

    #[test]
    fn asymptotic_error_shrinks_with_turnover() {
        let mut last = f64::INFINITY;
        for d in [5.0, 10.0, 20.0, 40.0, 80.0] {
            let p = reference(d);
            let eq = solve_special_equilibrium(&p, false, &[true], &FixedPointOptions::default()).unwrap();
            let err = (eq.v_eq[0] - asymptotic_equilibrium(&p).v[0]).abs();
            assert!(err <= last / 2.0, "d = {d}: {err} vs {last}");
            last = err;
        }
    }

    #[test]
    fn two_cycle_falls_back_to_bisection() {
        // slow turnover: the balance map overshoots into a two-cycle
        let p = reference(0.05);
        let eq = solve_special_equilibrium(&p, false, &[true], &FixedPointOptions::default()).unwrap();
        let v_star = scalar_oracle(0.05);
        assert!((eq.v_eq[0] - v_star).abs() < 1e-10);
        assert!(!eq.unique_certified);
        assert!(eq.bracket.0[0] <= eq.v_eq[0] && eq.v_eq[0] <= eq.bracket.1[0]);
    }

    #[test]
    fn iterates_are_ordered() {
        let p = reference(0.5);
        let it = bracket_iterates(&p, false, &[true], 40);
        for n in 1..20 {
            assert!(it[2 * n][0] <= it[2 * n - 2][0] + 1e-15);
            assert!(it[2 * n + 1][0] >= it[2 * n - 1][0] - 1e-15);
            assert!(it[2 * n + 1][0] <= it[2 * n][0] + 1e-15);
        }
    }
}
