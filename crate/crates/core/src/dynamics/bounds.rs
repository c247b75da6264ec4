//! A-priori upper bounds along trajectories.

use crate::model::EcosystemParams;
use crate::num::Real;

/// Logistic comparison bound on `x_i(t)` started from `x0` at `t = 0`, with
/// growth margin `a_i = phi_i(S) - mu_i`.
pub fn abundance_upper_bound<T: Real>(params: &EcosystemParams<T>, i: usize, x0: T, t: T) -> T {
    let a = params.phi(i, &params.s) - params.mu[i];
    let g = params.gamma[i];
    if a == T::zero() {
        return x0 / (T::one() + x0 * g * t);
    }
    if a > T::zero() {
        // divided through by e^{at} so that large a t does not overflow
        let decay = -(-a * t).exp_m1() / a;
        return x0 / ((-a * t).exp() + x0 * g * decay);
    }
    // (e^{at} - 1) / a, written to stay accurate for small |a t|
    let growth = (a * t).exp_m1() / a;
    x0 * (a * t).exp() / (T::one() + x0 * g * growth)
}

/// Relaxation bound on `v_k(t)` started from `v0` at `t = 0`.
pub fn resource_upper_bound<T: Real>(params: &EcosystemParams<T>, k: usize, v0: T, t: T) -> T {
    let decay = (-params.d[k] * t).exp();
    params.s[k] * (T::one() - decay) + v0 * decay
}
