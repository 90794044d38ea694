//! Adaptive Simpson quadrature for real- and complex-valued integrands.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Values an integrand may return.
pub trait Integrand:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self>
{
    fn zero() -> Self;
    fn magnitude(&self) -> f64;
}

impl Integrand for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl Integrand for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

/// Result of an adaptive integration: the value and a (heuristic) bound on
/// its absolute error.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature<T> {
    pub value: T,
    pub error: f64,
}

const MAX_DEPTH: u32 = 48;
const MIN_DEPTH: u32 = 2;

/// Adaptive Simpson on `[a, b]`, split into `panels` equal panels first.
///
/// Each panel receives a share of `tol` proportional to its width. Fails with
/// [`Error::QuadratureFailed`] when some subinterval hits the depth limit
/// and the accumulated error estimate exceeds `tol`.
pub fn simpson<T, F>(f: F, a: f64, b: f64, panels: usize, tol: f64) -> Result<Quadrature<T>>
where
    T: Integrand,
    F: Fn(f64) -> T,
{
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("quadrature tolerance must be positive, got {tol}")));
    }
    if a == b {
        return Ok(Quadrature { value: T::zero(), error: 0.0 });
    }
    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    let mut value = T::zero();
    let mut error = 0.0;
    let mut failed = false;
    for p in 0..panels {
        let lo = a + width * p as f64;
        let hi = if p + 1 == panels { b } else { lo + width };
        let mid = 0.5 * (lo + hi);
        let (flo, fmid, fhi) = (f(lo), f(mid), f(hi));
        let whole = simpson_rule(lo, hi, flo, fmid, fhi);
        let mut state = Accum { error: 0.0, failed: false };
        let v = refine(&f, lo, hi, flo, fmid, fhi, whole, tol / panels as f64, 0, &mut state);
        value = value + v;
        error += state.error;
        failed |= state.failed;
    }
    if failed && error > tol {
        return Err(Error::QuadratureFailed { achieved: error, requested: tol });
    }
    Ok(Quadrature { value, error })
}

/// Integral over `[a, ∞)` via the substitution `x = a + u/(1−u)`.
///
/// The integrand must decay fast enough that `f(x)·(1+x−a)²` vanishes at
/// infinity; the mapped integrand is taken to be zero at `u = 1`.
pub fn simpson_to_infinity<T, F>(f: F, a: f64, tol: f64) -> Result<Quadrature<T>>
where
    T: Integrand,
    F: Fn(f64) -> T,
{
    let mapped = |u: f64| {
        if u >= 1.0 {
            return T::zero();
        }
        let s = 1.0 - u;
        let v = f(a + u / s);
        v * (1.0 / (s * s))
    };
    simpson(mapped, 0.0, 1.0, 16, tol)
}

struct Accum {
    error: f64,
    failed: bool,
}

fn simpson_rule<T: Integrand>(a: f64, b: f64, fa: T, fm: T, fb: T) -> T {
    (fa + fm * 4.0 + fb) * ((b - a) / 6.0)
}

#[allow(clippy::too_many_arguments)]
fn refine<T, F>(
    f: &F,
    a: f64,
    b: f64,
    fa: T,
    fm: T,
    fb: T,
    whole: T,
    tol: f64,
    depth: u32,
    acc: &mut Accum,
) -> T
where
    T: Integrand,
    F: Fn(f64) -> T,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson_rule(a, m, fa, flm, fm);
    let right = simpson_rule(m, b, fm, frm, fb);
    let delta = left + right - whole;
    let est = delta.magnitude() / 15.0;
    if depth >= MIN_DEPTH && (est <= tol || depth >= MAX_DEPTH || m <= a || m >= b) {
        if est > tol {
            acc.failed = true;
        }
        acc.error += est;
        return left + right + delta * (1.0 / 15.0);
    }
    refine(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1, acc)
        + refine(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1, acc)
}

/// Neumaier-compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}
