use serde::{Deserialize, Serialize};

use super::{State, Trajectory};
use crate::error::{Error, Result};
use crate::model::EcosystemParams;
use crate::num::Scalar;

/// Quantities whose running time average can be taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Abundance(usize),
    Resource(usize),
    /// `x_i * phi_i(v)`.
    Uptake(usize),
    /// `phi_i(v)`.
    Growth(usize),
}

/// `(1/t) * integral of f` over the sampled span, by the trapezoid rule.
pub fn time_average_by<T, F>(traj: &Trajectory<T>, mut f: F) -> Result<T>
where
    T: Scalar,
    F: FnMut(&State<T>) -> T,
{
    let samples = &traj.samples;
    let (first, last) = match (samples.first(), samples.last()) {
        (Some(a), Some(b)) if b.t > a.t => (a, b),
        _ => return Err(Error::EmptyTrajectory),
    };
    let two = T::two();
    let mut integral = T::zero();
    let mut prev = f(first);
    for w in samples.windows(2) {
        let next = f(&w[1]);
        integral = integral + (w[1].t - w[0].t) * (prev + next) / two;
        prev = next;
    }
    Ok(integral / (last.t - first.t))
}

pub fn time_average<T: Scalar>(
    traj: &Trajectory<T>,
    params: &EcosystemParams<T>,
    quantity: Quantity,
) -> Result<T> {
    match quantity {
        Quantity::Abundance(i) => time_average_by(traj, |s| s.x[i]),
        Quantity::Resource(k) => time_average_by(traj, |s| s.v[k]),
        Quantity::Uptake(i) => time_average_by(traj, |s| s.x[i] * params.phi(i, &s.v)),
        Quantity::Growth(i) => time_average_by(traj, |s| params.phi(i, &s.v)),
    }
}
