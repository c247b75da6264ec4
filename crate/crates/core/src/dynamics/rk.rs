//! Dormand–Prince 5(4) pair with PI step-size control and cubic Hermite
//! dense output.

use crate::num::Real;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Work buffers for one stepper; reused across steps.
pub(crate) struct Stepper<T> {
    k: [Vec<T>; 7],
    tmp: Vec<T>,
    pub y_new: Vec<T>,
    err: Vec<T>,
}

impl<T: Real> Stepper<T> {
    pub fn new(n: usize) -> Self {
        let z = || vec![T::zero(); n];
        Self {
            k: [z(), z(), z(), z(), z(), z(), z()],
            tmp: z(),
            y_new: z(),
            err: z(),
        }
    }

    /// Derivative at the start of the next step (first stage).
    pub fn f0(&self) -> &[T] {
        &self.k[0]
    }

    pub fn set_f0(&mut self, f: &[T]) {
        self.k[0].copy_from_slice(f);
    }

    /// Derivative at the end of the last trial step (FSAL stage).
    pub fn f_end(&self) -> &[T] {
        &self.k[6]
    }

    /// Swaps the FSAL stage in as the first stage of the next step.
    pub fn advance_fsal(&mut self) {
        let (head, tail) = self.k.split_at_mut(6);
        std::mem::swap(&mut head[0], &mut tail[0]);
    }

    /// One trial step of size `h` from `(t, y)`; `k[0]` must hold `f(t, y)`.
    /// Returns the scaled error norm (accept when `<= 1`).
    pub fn try_step<F>(&mut self, f: &mut F, t: T, y: &[T], h: T, rtol: T, atol: T) -> T
    where
        F: FnMut(T, &[T], &mut [T]),
    {
        let l = T::lit;
        let n = y.len();
        macro_rules! stage {
            ($dst:expr, $c:expr, [$(($a:expr, $src:expr)),*]) => {{
                for i in 0..n {
                    let mut acc = T::zero();
                    $( acc = acc + l($a) * self.k[$src][i]; )*
                    self.tmp[i] = y[i] + h * acc;
                }
                let (tmp, k) = (&self.tmp, &mut self.k[$dst]);
                f(t + l($c) * h, tmp, k);
            }};
        }
        stage!(1, C2, [(A21, 0)]);
        stage!(2, C3, [(A31, 0), (A32, 1)]);
        stage!(3, C4, [(A41, 0), (A42, 1), (A43, 2)]);
        stage!(4, C5, [(A51, 0), (A52, 1), (A53, 2), (A54, 3)]);
        stage!(5, 1.0, [(A61, 0), (A62, 1), (A63, 2), (A64, 3), (A65, 4)]);
        for i in 0..n {
            let acc = l(A71) * self.k[0][i]
                + l(A73) * self.k[2][i]
                + l(A74) * self.k[3][i]
                + l(A75) * self.k[4][i]
                + l(A76) * self.k[5][i];
            self.y_new[i] = y[i] + h * acc;
        }
        {
            let (y_new, k) = (&self.y_new, &mut self.k[6]);
            f(t + h, y_new, k);
        }
        let mut norm = T::zero();
        for i in 0..n {
            let e = h
                * (l(E1) * self.k[0][i]
                    + l(E3) * self.k[2][i]
                    + l(E4) * self.k[3][i]
                    + l(E5) * self.k[4][i]
                    + l(E6) * self.k[5][i]
                    + l(E7) * self.k[6][i]);
            self.err[i] = e;
            let scale = atol + rtol * y[i].abs().max(self.y_new[i].abs());
            norm = norm.max(e.abs() / scale);
        }
        norm
    }
}

/// PI step-size controller (Gustafsson), as used in DOPRI5.
#[derive(Debug, Clone)]
pub(crate) struct PiController<T> {
    beta: T,
    expo: T,
    safety: T,
    fac_min: T,
    fac_max: T,
    err_old: T,
}

impl<T: Real> PiController<T> {
    pub fn new() -> Self {
        let beta = T::lit(0.04);
        Self {
            beta,
            expo: T::lit(0.2) - beta * T::lit(0.75),
            safety: T::lit(0.9),
            fac_min: T::lit(0.2),
            fac_max: T::lit(10.0),
            err_old: T::lit(1e-4),
        }
    }

    /// Next step size after an accepted step with error `err`.
    pub fn accept(&mut self, h: T, err: T) -> T {
        let err = err.max(T::lit(1e-16));
        let fac = err.powf(self.expo) / self.err_old.powf(self.beta) / self.safety;
        let fac = fac.max(T::one() / self.fac_max).min(T::one() / self.fac_min);
        self.err_old = err.max(T::lit(1e-4));
        h / fac
    }

    /// Reduced step size after a rejected step.
    pub fn reject(&mut self, h: T, err: T) -> T {
        let fac = err.powf(self.expo) / self.safety;
        h / fac.min(T::one() / self.fac_min)
    }
}

/// Cubic Hermite interpolant of one component on `[t0, t0 + h]`.
#[inline]
pub(crate) fn hermite<T: Real>(y0: T, f0: T, y1: T, f1: T, h: T, theta: T) -> T {
    let one = T::one();
    let two = T::two();
    let three = T::lit(3.0);
    let t2 = theta * theta;
    let t3 = t2 * theta;
    let h00 = two * t3 - three * t2 + one;
    let h10 = t3 - two * t2 + theta;
    let h01 = three * t2 - two * t3;
    let h11 = t3 - t2;
    h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1
}
