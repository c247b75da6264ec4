use super::{rhs, State, Trajectory};
use crate::model::EcosystemParams;
use crate::num::{max_abs_diff, max_norm, Real};

/// Scans the samples for the first state at which `||rhs|| <= tol` and the
/// state differs from the one `window` earlier by at most `tol`. A state with
/// exactly zero residual is an equilibrium and fires immediately.
pub fn detect_convergence<T: Real>(
    params: &EcosystemParams<T>,
    traj: &Trajectory<T>,
    tol: T,
    window: T,
) -> Option<(State<T>, T)> {
    let samples = &traj.samples;
    let mut back = 0;
    for (j, s) in samples.iter().enumerate() {
        let residual = max_norm(&rhs(params, s).ok()?);
        if residual == T::zero() {
            return Some((s.clone(), residual));
        }
        while back + 1 < j && samples[back + 1].t <= s.t - window {
            back += 1;
        }
        if residual > tol || samples[back].t > s.t - window {
            continue;
        }
        let old = &samples[back];
        let diff = max_abs_diff(&s.x, &old.x).max(max_abs_diff(&s.v, &old.v));
        if diff <= tol {
            return Some((s.clone(), residual));
        }
    }
    None
}
