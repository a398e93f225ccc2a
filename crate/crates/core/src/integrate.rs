//! Dormand-Prince 5(4) with embedded error control.

use std::ops::{Add, Mul, Sub};

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::numeric::{Real, C};

/// Vector element the integrator can work with: real or complex scalars.
pub trait OdeElem<T: Real>:
    Copy + Zero + Add<Output = Self> + Sub<Output = Self> + Mul<T, Output = Self> + Send + Sync
{
    fn magnitude(self) -> T;
}

impl<T: Real> OdeElem<T> for T {
    fn magnitude(self) -> T {
        self.abs()
    }
}

impl<T: Real> OdeElem<T> for C<T> {
    fn magnitude(self) -> T {
        self.norm()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Tolerances<T> {
    pub rtol: T,
    pub atol: T,
    pub max_steps: usize,
}

impl<T: Real> Tolerances<T> {
    pub fn new(rtol: T, atol: T) -> Self {
        Self { rtol, atol, max_steps: 10_000_000 }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
}

/// Adaptive integrator. `rhs(t, y, dydt)` must fill `dydt`.
pub struct Dopri5<T, E, F> {
    rhs: F,
    tol: Tolerances<T>,
    h: T,
    k: [Vec<E>; 7],
    tmp: Vec<E>,
    y_new: Vec<E>,
    fsal_valid: bool,
    pub stats: OdeStats,
}

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
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
// Error coefficients: fifth-order minus embedded fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

impl<T, E, F> Dopri5<T, E, F>
where
    T: Real,
    E: OdeElem<T>,
    F: FnMut(T, &[E], &mut [E]),
{
    pub fn new(dim: usize, rhs: F, tol: Tolerances<T>) -> Self {
        let z = || vec![E::zero(); dim];
        Self {
            rhs,
            tol,
            h: T::zero(),
            k: [z(), z(), z(), z(), z(), z(), z()],
            tmp: z(),
            y_new: z(),
            fsal_valid: false,
            stats: OdeStats::default(),
        }
    }

    fn stage(&mut self, y: &[E], coeffs: &[(usize, f64)], h: T) {
        for i in 0..y.len() {
            let mut acc = E::zero();
            for &(j, a) in coeffs {
                acc = acc + self.k[j][i] * T::lit(a);
            }
            self.tmp[i] = y[i] + acc * h;
        }
    }

    fn error_norm(&self, y: &[E], err_scale: T) -> T {
        let mut sum = T::zero();
        for i in 0..y.len() {
            let e = self.k[0][i] * T::lit(E1)
                + self.k[2][i] * T::lit(E3)
                + self.k[3][i] * T::lit(E4)
                + self.k[4][i] * T::lit(E5)
                + self.k[5][i] * T::lit(E6)
                + self.k[6][i] * T::lit(E7);
            let sc = self.tol.atol + self.tol.rtol * y[i].magnitude().max(self.y_new[i].magnitude());
            let r = (e * err_scale).magnitude() / sc;
            sum += r * r;
        }
        (sum / T::lit(y.len().max(1) as f64)).sqrt()
    }

    /// Advances `y` from `t0` to `t1` (which may equal `t0`).
    pub fn advance(&mut self, t0: T, t1: T, y: &mut [E]) -> Result<()> {
        if t1 == t0 {
            return Ok(());
        }
        if t1 < t0 {
            return Err(Error::Integrator("integration backwards in time is not supported".into()));
        }
        let mut t = t0;
        if !self.fsal_valid {
            let mut k0 = std::mem::take(&mut self.k[0]);
            (self.rhs)(t, y, &mut k0);
            self.k[0] = k0;
            self.fsal_valid = true;
        }
        if self.h <= T::zero() {
            self.h = self.initial_step(t, y, t1 - t0);
        }
        let safety = T::lit(0.9);
        let mut steps = 0usize;
        while t < t1 {
            steps += 1;
            if steps > self.tol.max_steps {
                return Err(Error::Integrator(format!("step limit exceeded at t = {}", t)));
            }
            let last = t + self.h >= t1;
            let h = if last { t1 - t } else { self.h };
            if h <= T::eps() * t.abs().max(T::one()) * T::lit(4.0) {
                if last {
                    // Tail of floating-point size; nothing left to integrate.
                    break;
                }
                return Err(Error::Integrator(format!("step size underflow at t = {}", t)));
            }
            self.stage(y, &[(0, A21)], h);
            self.eval(t + h * T::lit(C2), 1);
            self.stage(y, &[(0, A31), (1, A32)], h);
            self.eval(t + h * T::lit(C3), 2);
            self.stage(y, &[(0, A41), (1, A42), (2, A43)], h);
            self.eval(t + h * T::lit(C4), 3);
            self.stage(y, &[(0, A51), (1, A52), (2, A53), (3, A54)], h);
            self.eval(t + h * T::lit(C5), 4);
            self.stage(y, &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)], h);
            self.eval(t + h, 5);
            self.stage(y, &[(0, A71), (2, A73), (3, A74), (4, A75), (5, A76)], h);
            std::mem::swap(&mut self.tmp, &mut self.y_new);
            let t_new = if last { t1 } else { t + h };
            {
                let mut k6 = std::mem::take(&mut self.k[6]);
                (self.rhs)(t_new, &self.y_new, &mut k6);
                self.k[6] = k6;
            }
            let err = self.error_norm(y, h);
            let factor = if err == T::zero() {
                T::lit(5.0)
            } else {
                (safety * err.powf(T::lit(-0.2))).min(T::lit(5.0)).max(T::lit(0.2))
            };
            if err <= T::one() {
                y.copy_from_slice(&self.y_new);
                self.k.swap(0, 6);
                t = t_new;
                self.stats.accepted += 1;
                if !last || factor < T::one() {
                    self.h = h * factor;
                }
            } else {
                self.stats.rejected += 1;
                self.h = h * factor.min(T::one());
            }
        }
        Ok(())
    }

    fn eval(&mut self, t: T, slot: usize) {
        let mut k = std::mem::take(&mut self.k[slot]);
        (self.rhs)(t, &self.tmp, &mut k);
        self.k[slot] = k;
    }

    fn initial_step(&self, _t: T, y: &[E], span: T) -> T {
        let mut d0 = T::zero();
        let mut d1 = T::zero();
        for i in 0..y.len() {
            let sc = self.tol.atol + self.tol.rtol * y[i].magnitude();
            d0 = d0.max(y[i].magnitude() / sc);
            d1 = d1.max(self.k[0][i].magnitude() / sc);
        }
        let h0 = if d0 < T::lit(1e-5) || d1 < T::lit(1e-5) {
            T::lit(1e-6)
        } else {
            T::lit(0.01) * d0 / d1
        };
        h0.min(span)
    }
}

/// Integrates and records `y` at each requested time (first must be the
/// initial time). The callback receives `(index, t, y)`.
pub fn integrate_grid<T, E, F>(
    y0: &[E],
    times: &[T],
    rhs: F,
    tol: Tolerances<T>,
    mut record: impl FnMut(usize, T, &[E]),
) -> Result<OdeStats>
where
    T: Real,
    E: OdeElem<T>,
    F: FnMut(T, &[E], &mut [E]),
{
    let mut y = y0.to_vec();
    let mut solver = Dopri5::new(y.len(), rhs, tol);
    let Some(&first) = times.first() else {
        return Ok(solver.stats);
    };
    let mut t = first;
    for (idx, &tn) in times.iter().enumerate() {
        solver.advance(t, tn, &mut y)?;
        t = tn;
        record(idx, tn, &y);
    }
    Ok(solver.stats)
}
