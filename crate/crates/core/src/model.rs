//! Ecosystem parameterization, growth laws and the global-stability criterion.
//!
//! Species are indexed `0..M`, resources `0..m`. The content matrix `c` is
//! stored resource-major (`c[k][i]`), the half-saturation matrix species-major
//! (`growth.k[i][j]`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{max_of, min_of, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthKind {
    /// Minimum over resources of saturating responses.
    Liebig,
    /// Single-resource saturating response `r v / (K + v)`.
    Holling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthLaw<T> {
    pub kind: GrowthKind,
    /// Maximal consumption rates, one per species.
    pub r: Vec<T>,
    /// Half-saturation constants, `k[i][j]` for species `i` and resource `j`.
    pub k: Vec<Vec<T>>,
}

impl<T: Scalar> GrowthLaw<T> {
    pub fn liebig(r: Vec<T>, k: Vec<Vec<T>>) -> Self {
        Self { kind: GrowthKind::Liebig, r, k }
    }

    pub fn holling(r: Vec<T>, k: Vec<T>) -> Self {
        Self {
            kind: GrowthKind::Holling,
            r,
            k: k.into_iter().map(|x| vec![x]).collect(),
        }
    }

    pub fn species_count(&self) -> usize {
        self.r.len()
    }

    pub fn resource_count(&self) -> usize {
        self.k.first().map_or(0, Vec::len)
    }

    /// Growth rate of species `i`, with resource coordinates validated.
    pub fn evaluate(&self, i: usize, v: &[T]) -> Result<T> {
        if i >= self.r.len() {
            return Err(Error::SpeciesIndex { index: i, count: self.r.len() });
        }
        if v.len() != self.resource_count() {
            return Err(Error::Dimension(format!(
                "resource vector has length {}, expected {}",
                v.len(),
                self.resource_count()
            )));
        }
        if let Some(index) = v.iter().position(|&x| x < T::zero()) {
            return Err(Error::NegativeResource { index });
        }
        Ok(self.rate(i, v))
    }

    /// Unchecked growth rate. Negative coordinates are treated as zero.
    #[inline]
    pub fn rate(&self, i: usize, v: &[T]) -> T {
        let mut sat = T::one();
        for (&vj, &kj) in v.iter().zip(&self.k[i]) {
            let vj = max_of(vj, T::zero());
            sat = min_of(sat, vj / (kj + vj));
        }
        self.r[i] * sat
    }

    fn validate(&self, species: usize, resources: usize) -> Result<()> {
        if self.r.len() != species || self.k.len() != species {
            return Err(Error::Dimension(format!(
                "growth law has {} rates and {} half-saturation rows for {species} species",
                self.r.len(),
                self.k.len()
            )));
        }
        if self.k.iter().any(|row| row.len() != resources) {
            return Err(Error::Dimension(format!(
                "half-saturation rows must have {resources} entries"
            )));
        }
        if self.kind == GrowthKind::Holling && resources != 1 {
            return Err(Error::InvalidParams(
                "Holling response requires a single resource".into(),
            ));
        }
        if self.r.iter().any(|&x| x <= T::zero()) {
            return Err(Error::InvalidParams("r must be positive".into()));
        }
        if self.k.iter().flatten().any(|&x| x <= T::zero()) {
            return Err(Error::InvalidParams(
                "half-saturation constants must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Fundamental constants of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EcosystemParams<T> {
    /// Mortality rates.
    pub mu: Vec<T>,
    /// Self-limitation coefficients.
    pub gamma: Vec<T>,
    /// Resource contents, `c[k][i]`.
    pub c: Vec<Vec<T>>,
    /// Turnover rates.
    pub d: Vec<T>,
    /// Supplies.
    pub s: Vec<T>,
    pub growth: GrowthLaw<T>,
    /// Extinction thresholds. An empty vector means the no-extinction model.
    #[serde(default)]
    pub x_ext: Vec<T>,
}

impl<T: Scalar> EcosystemParams<T> {
    /// Builds and validates a parameter set.
    pub fn new(
        mu: Vec<T>,
        gamma: Vec<T>,
        c: Vec<Vec<T>>,
        d: Vec<T>,
        s: Vec<T>,
        growth: GrowthLaw<T>,
        x_ext: Vec<T>,
    ) -> Result<Self> {
        let p = Self { mu, gamma, c, d, s, growth, x_ext };
        p.validate()?;
        Ok(p)
    }

    /// Number of species `M`.
    pub fn species_count(&self) -> usize {
        self.mu.len()
    }

    /// Number of resources `m`.
    pub fn resource_count(&self) -> usize {
        self.s.len()
    }

    #[inline]
    pub fn threshold(&self, i: usize) -> T {
        self.x_ext.get(i).copied().unwrap_or_else(T::zero)
    }

    pub fn thresholds_active(&self) -> bool {
        self.x_ext.iter().any(|&x| x > T::zero())
    }

    #[inline]
    pub fn phi(&self, i: usize, v: &[T]) -> T {
        self.growth.rate(i, v)
    }

    /// `phi_i(S)` for every species.
    pub fn phi_at_supply(&self) -> Vec<T> {
        (0..self.species_count()).map(|i| self.phi(i, &self.s)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let big_m = self.mu.len();
        let m = self.s.len();
        if big_m == 0 || m == 0 {
            return Err(Error::InvalidParams(
                "need at least one species and one resource".into(),
            ));
        }
        if self.gamma.len() != big_m {
            return Err(Error::Dimension(format!(
                "gamma has {} entries, expected {big_m}",
                self.gamma.len()
            )));
        }
        if self.d.len() != m {
            return Err(Error::Dimension(format!("d has {} entries, expected {m}", self.d.len())));
        }
        if self.c.len() != m || self.c.iter().any(|row| row.len() != big_m) {
            return Err(Error::Dimension(format!("c must be {m} x {big_m}")));
        }
        if !self.x_ext.is_empty() && self.x_ext.len() != big_m {
            return Err(Error::Dimension(format!(
                "x_ext has {} entries, expected {big_m} or none",
                self.x_ext.len()
            )));
        }
        self.growth.validate(big_m, m)?;
        let positive = |name: &str, xs: &[T]| -> Result<()> {
            if xs.iter().any(|&x| x <= T::zero()) {
                Err(Error::InvalidParams(format!("{name} must be positive")))
            } else {
                Ok(())
            }
        };
        positive("mu", &self.mu)?;
        positive("gamma", &self.gamma)?;
        positive("d", &self.d)?;
        positive("s", &self.s)?;
        for row in &self.c {
            positive("c", row)?;
        }
        if self.x_ext.iter().any(|&x| x < T::zero()) {
            return Err(Error::InvalidParams("x_ext must be nonnegative".into()));
        }
        Ok(())
    }

    /// Parameter set restricted to the listed species, in the given order.
    pub fn restricted(&self, species: &[usize]) -> Self {
        let pick = |xs: &[T]| species.iter().map(|&i| xs[i]).collect::<Vec<_>>();
        Self {
            mu: pick(&self.mu),
            gamma: pick(&self.gamma),
            c: self.c.iter().map(|row| pick(row)).collect(),
            d: self.d.clone(),
            s: self.s.clone(),
            growth: GrowthLaw {
                kind: self.growth.kind,
                r: pick(&self.growth.r),
                k: species.iter().map(|&i| self.growth.k[i].clone()).collect(),
            },
            x_ext: if self.x_ext.is_empty() { Vec::new() } else { pick(&self.x_ext) },
        }
    }

    /// Same community without extinction thresholds.
    pub fn without_thresholds(&self) -> Self {
        Self { x_ext: Vec::new(), ..self.clone() }
    }
}

/// Validated growth rate `phi_i(v)`.
pub fn evaluate_growth<T: Scalar>(growth: &GrowthLaw<T>, i: usize, v: &[T]) -> Result<T> {
    growth.evaluate(i, v)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Viability {
    pub viable: Vec<usize>,
    pub doomed: Vec<usize>,
}

/// Splits species by `phi_i(S) > mu_i`. Doomed species decay to zero.
pub fn viability_filter<T: Scalar>(params: &EcosystemParams<T>) -> Viability {
    let (viable, doomed) = (0..params.species_count())
        .partition(|&i| params.phi(i, &params.s) > params.mu[i]);
    Viability { viable, doomed }
}

/// Per-resource Lipschitz constants on `[0, S]`: `L_j = max_i r_i / K_ij`,
/// the slope of `v / (K + v)` at the origin.
pub fn lipschitz_constants<T: Scalar>(growth: &GrowthLaw<T>, _s: &[T]) -> Vec<T> {
    (0..growth.resource_count())
        .map(|j| {
            (0..growth.species_count())
                .map(|i| growth.r[i] / growth.k[i][j])
                .fold(T::zero(), max_of)
        })
        .collect()
}

pub const RHO_INDEX_CONVENTION: &str =
    "rho = max_k sum_j c[k][j] * L_k * (2 phi_j(S) - mu_j) / (D_k * gamma_j)";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport<T> {
    pub rho: T,
    pub lipschitz: Vec<T>,
    pub satisfied: bool,
    pub index_convention: String,
}

/// Global-stability criterion: outer maximum over resources, inner sum over
/// species.
pub fn compute_rho<T: Scalar>(params: &EcosystemParams<T>) -> Result<StabilityReport<T>> {
    let viability = viability_filter(params);
    if !viability.doomed.is_empty() {
        return Err(Error::NonViable(viability.doomed));
    }
    let lipschitz = lipschitz_constants(&params.growth, &params.s);
    let phi_s = params.phi_at_supply();
    let two = T::two();
    let rho = (0..params.resource_count())
        .map(|k| {
            (0..params.species_count())
                .map(|j| {
                    params.c[k][j] * lipschitz[k] * (two * phi_s[j] - params.mu[j])
                        / (params.d[k] * params.gamma[j])
                })
                .fold(T::zero(), |a, b| a + b)
        })
        .fold(T::zero(), max_of);
    Ok(StabilityReport {
        rho,
        satisfied: rho <= T::one(),
        lipschitz,
        index_convention: RHO_INDEX_CONVENTION.to_string(),
    })
}

/// [`compute_rho`] on the viable sub-community; doomed species do not affect
/// the special equilibrium.
pub fn compute_rho_viable<T: Scalar>(params: &EcosystemParams<T>) -> Option<StabilityReport<T>> {
    let viable = viability_filter(params).viable;
    if viable.is_empty() {
        return None;
    }
    compute_rho(&params.restricted(&viable)).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use num_rational::Rational64;
    use proptest::prelude::*;

    pub(crate) fn reference(d: f64) -> EcosystemParams<f64> {
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

    #[test]
    fn holling_half_saturation() {
        let g = GrowthLaw::holling(vec![1.0], vec![1.0]);
        assert_eq!(evaluate_growth(&g, 0, &[1.0]).unwrap(), 0.5);
    }

    #[test]
    fn liebig_examples() {
        let g = GrowthLaw::liebig(vec![2.0], vec![vec![1.0, 3.0]]);
        assert_eq!(evaluate_growth(&g, 0, &[1.0, 1.0]).unwrap(), 0.5);
        assert_eq!(evaluate_growth(&g, 0, &[0.0, 5.0]).unwrap(), 0.0);
        assert_eq!(evaluate_growth(&g, 0, &[5.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn growth_errors() {
        let g = GrowthLaw::liebig(vec![2.0], vec![vec![1.0, 3.0]]);
        assert_eq!(
            evaluate_growth(&g, 1, &[1.0, 1.0]),
            Err(Error::SpeciesIndex { index: 1, count: 1 })
        );
        assert_eq!(
            evaluate_growth(&g, 0, &[1.0, -1.0]),
            Err(Error::NegativeResource { index: 1 })
        );
    }

    #[test]
    fn viability_examples() {
        let mut p = reference(10.0);
        assert_eq!(viability_filter(&p).viable, vec![0]);
        p.mu[0] = 0.5;
        assert_eq!(viability_filter(&p).doomed, vec![0]);

        let mixed = EcosystemParams::new(
            vec![0.2, 0.6],
            vec![1.0, 1.0],
            vec![vec![1.0, 1.0]],
            vec![10.0],
            vec![1.0],
            GrowthLaw::holling(vec![1.0, 1.0], vec![1.0, 1.0]),
            vec![],
        )
        .unwrap();
        let v = viability_filter(&mixed);
        assert_eq!(v.viable, vec![0]);
        assert_eq!(v.doomed, vec![1]);
    }

    #[test]
    fn lipschitz_examples() {
        let g = GrowthLaw::holling(vec![1.0], vec![1.0]);
        assert_eq!(lipschitz_constants(&g, &[1.0]), vec![1.0]);
        let g = GrowthLaw::holling(vec![2.0], vec![4.0]);
        assert_eq!(lipschitz_constants(&g, &[1.0]), vec![0.5]);
        let g = GrowthLaw::liebig(vec![1.0, 3.0], vec![vec![1.0], vec![1.0]]);
        assert_eq!(lipschitz_constants(&g, &[1.0]), vec![3.0]);
    }

    #[test]
    fn rho_reference_values() {
        let rep = compute_rho(&reference(10.0)).unwrap();
        assert_relative_eq!(rep.rho, 0.08, epsilon = 1e-15);
        assert!(rep.satisfied);
        let rep = compute_rho(&reference(0.05)).unwrap();
        assert_relative_eq!(rep.rho, 16.0, epsilon = 1e-12);
        assert!(!rep.satisfied);
    }

    #[test]
    fn rho_exact() {
        let q = Rational64::new;
        let p = EcosystemParams::new(
            vec![q(1, 5)],
            vec![q(1, 1)],
            vec![vec![q(1, 1)]],
            vec![q(10, 1)],
            vec![q(1, 1)],
            GrowthLaw::holling(vec![q(1, 1)], vec![q(1, 1)]),
            vec![],
        )
        .unwrap();
        assert_eq!(compute_rho(&p).unwrap().rho, q(2, 25));
    }

    #[test]
    fn rho_vanishes_for_strong_self_limitation() {
        let mut p = reference(10.0);
        let mut last = f64::INFINITY;
        for g in [1.0, 1e2, 1e4, 1e8] {
            p.gamma[0] = g;
            let rho = compute_rho(&p).unwrap().rho;
            assert!(rho < last);
            last = rho;
        }
        assert!(last < 1e-8);
    }

    #[test]
    fn rho_rejects_doomed() {
        let mut p = reference(10.0);
        p.mu[0] = 0.7;
        assert_eq!(compute_rho(&p).unwrap_err(), Error::NonViable(vec![0]));
    }

    #[test]
    fn validation_catches_bad_shapes() {
        let mut p = reference(10.0);
        p.c = vec![vec![1.0, 2.0]];
        assert!(matches!(p.validate(), Err(Error::Dimension(_))));
        let mut p = reference(10.0);
        p.gamma[0] = 0.0;
        assert!(matches!(p.validate(), Err(Error::InvalidParams(_))));
        let mut p = reference(10.0);
        p.growth.k = vec![vec![1.0, 1.0]];
        p.s = vec![1.0, 1.0];
        p.d = vec![1.0, 1.0];
        p.c = vec![vec![1.0], vec![1.0]];
        assert!(matches!(p.validate(), Err(Error::InvalidParams(_))));
    }

    fn liebig_strategy() -> impl Strategy<Value = (GrowthLaw<f64>, Vec<f64>)> {
        (1usize..4, 1usize..4).prop_flat_map(|(big_m, m)| {
            (
                prop::collection::vec(0.1f64..5.0, big_m),
                prop::collection::vec(prop::collection::vec(0.1f64..5.0, m), big_m),
                prop::collection::vec(0.1f64..3.0, m),
            )
                .prop_map(|(r, k, s)| (GrowthLaw::liebig(r, k), s))
        })
    }

    proptest! {
        #[test]
        fn growth_monotone_and_lipschitz(
            (g, s) in liebig_strategy(),
            a in prop::collection::vec(0.0f64..1.0, 3),
            b in prop::collection::vec(0.0f64..1.0, 3),
        ) {
            let m = s.len();
            let v: Vec<f64> = (0..m).map(|j| a[j] * s[j]).collect();
            let w: Vec<f64> = (0..m).map(|j| b[j] * s[j]).collect();
            let lo: Vec<f64> = v.iter().zip(&w).map(|(x, y)| x.min(*y)).collect();
            let hi: Vec<f64> = v.iter().zip(&w).map(|(x, y)| x.max(*y)).collect();
            let lmax = lipschitz_constants(&g, &s).into_iter().fold(0.0, f64::max);
            for i in 0..g.species_count() {
                let fv = g.evaluate(i, &v).unwrap();
                let fw = g.evaluate(i, &w).unwrap();
                prop_assert!(g.rate(i, &lo) <= g.rate(i, &hi) + 1e-15);
                prop_assert!(fv >= 0.0 && fv <= g.r[i]);
                let dist = v.iter().zip(&w).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                prop_assert!((fv - fw).abs() <= lmax * dist + 1e-12);
            }
        }

        #[test]
        fn rho_scales_inversely_with_turnover(lambda in 0.01f64..100.0, d in 0.1f64..50.0) {
            let p = reference(d);
            let mut q = p.clone();
            q.d[0] *= lambda;
            let r1 = compute_rho(&p).unwrap().rho;
            let r2 = compute_rho(&q).unwrap().rho;
            prop_assert!((r2 - r1 / lambda).abs() <= 1e-12 * r1.max(1.0));
        }
    }
}
