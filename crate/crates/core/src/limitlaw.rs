//! Predictions for the two limit regimes of `X`.
//!
//! When `f(0) ≠ 0`, `X` is asymptotically normal with mean
//! `nδf̂(0) + f(0)θH(δ)` and variance `|f(0)|²θH(δ)`, where `H(δ)` is the
//! harmonic sum over cycle lengths `ℓ < 1/δ`. When `f(0) = 0`, `X − nδf̂(0)`
//! converges to `Z = Σ_{y∈𝒳} Ξ_f(y)` for a Poisson process `𝒳` of intensity
//! `θ dy/y`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quad::{self, CompensatedSum};
use crate::testfn::TestFunction;
use crate::Complex64;

/// Default slack for the unnamed constants of the Euler–Maclaurin bound.
pub const DEFAULT_C_THETA: f64 = 10.0;
/// `log(n)·|f(±1/(2δ))|` below this counts as "small enough".
pub const LOG_TAIL_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    Clt,
    PoissonLimit,
}

impl Regime {
    pub fn of(f: &TestFunction) -> Regime {
        if f.value_at_zero().norm() == 0.0 {
            Regime::PoissonLimit
        } else {
            Regime::Clt
        }
    }
}

/// `H(δ) = Σ_{ℓ ≥ 1, ℓδ < 1} 1/ℓ`.
pub fn harmonic_below(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("δ must lie in (0, 1), got {delta}")));
    }
    if 1.0 / delta > 1e9 {
        return Err(Error::ResourceCap(format!("harmonic sum up to 1/δ = {:e}", 1.0 / delta)));
    }
    let mut s = CompensatedSum::new();
    let mut ell = 1u64;
    while (ell as f64) * delta < 1.0 {
        s.add(1.0 / ell as f64);
        ell += 1;
    }
    Ok(s.value())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CltPrediction {
    pub mean: Complex64,
    pub variance: f64,
    /// `H(δ)`.
    pub harmonic: f64,
}

/// Mean `nδf̂(0) + f(0)θH(δ)` and variance `|f(0)|²θH(δ)`.
pub fn clt_parameters(n: u64, delta: f64, theta: f64, f: &TestFunction) -> Result<CltPrediction> {
    if Regime::of(f) != Regime::Clt {
        return Err(Error::RegimeMismatch(format!(
            "`{}` vanishes at 0; the normal approximation needs f(0) ≠ 0",
            f.name()
        )));
    }
    if !(theta > 0.0) {
        return Err(Error::invalid(format!("θ must be positive, got {theta}")));
    }
    let h = harmonic_below(delta)?;
    let f0 = f.value_at_zero();
    Ok(CltPrediction {
        mean: f.fourier_at_zero()? * (n as f64 * delta) + f0 * (theta * h),
        variance: f0.norm_sqr() * theta * h,
        harmonic: h,
    })
}

/// Parameters of the Poisson-process limit, with the window `(eps, R)` that
/// truncates the process for sampling and quadrature.
#[derive(Debug, Clone)]
pub struct LimitLawSpec {
    pub theta: f64,
    pub f: TestFunction,
    pub regime: Regime,
    pub window: (f64, f64),
    pub tol: f64,
}

impl LimitLawSpec {
    pub fn new(theta: f64, f: TestFunction, window: (f64, f64), tol: f64) -> Result<Self> {
        let regime = Regime::of(&f);
        Self::with_regime(theta, f, regime, window, tol)
    }

    pub fn with_regime(theta: f64, f: TestFunction, regime: Regime, window: (f64, f64), tol: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::invalid(format!("θ must be a positive real, got {theta}")));
        }
        let (eps, r) = window;
        if !(eps > 0.0 && eps < 1.0 && r > 1.0 && r.is_finite()) {
            return Err(Error::invalid(format!("window must satisfy 0 < eps < 1 < R, got ({eps}, {r})")));
        }
        if !(tol > 0.0) {
            return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
        }
        if regime != Regime::of(&f) {
            return Err(Error::RegimeMismatch(format!(
                "`{}` has f(0) = {} which contradicts the {regime:?} regime",
                f.name(),
                f.value_at_zero()
            )));
        }
        f.fourier_at_zero()?;
        Ok(Self { theta, f, regime, window, tol })
    }

    fn require_poisson(&self) -> Result<()> {
        match self.regime {
            Regime::PoissonLimit => Ok(()),
            Regime::Clt => Err(Error::RegimeMismatch(format!(
                "`{}` has f(0) ≠ 0; the Poisson limit needs f(0) = 0",
                self.f.name()
            ))),
        }
    }

    fn log_window(&self) -> (f64, f64) {
        (self.window.0.ln(), self.window.1.ln())
    }

    /// `θ·log(R/eps)`, the expected number of points in the window.
    pub fn expected_points(&self) -> f64 {
        let (a, b) = self.log_window();
        self.theta * (b - a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitSample {
    pub value: Complex64,
    pub n_points: u64,
}

/// One draw of `Z` restricted to the window: `N ~ Poisson(θ log(R/eps))`
/// log-uniform points, each contributing `Ξ_f(y)`.
pub fn sample_limit_z<R: Rng + ?Sized>(spec: &LimitLawSpec, rng: &mut R) -> Result<LimitSample> {
    spec.require_poisson()?;
    let lambda = spec.expected_points();
    let n_points = if lambda > 0.0 {
        Poisson::new(lambda)
            .map_err(|e| Error::invalid(format!("Poisson rate {lambda}: {e}")))?
            .sample(rng) as u64
    } else {
        0
    };
    let (a, b) = spec.log_window();
    let mut value = Complex64::new(0.0, 0.0);
    for _ in 0..n_points {
        let u = a + (b - a) * rng.random::<f64>();
        value += spec.f.xi(u.exp(), spec.tol)?;
    }
    Ok(LimitSample { value, n_points })
}

/// Splits `[a, b]` at `0` (where `Ξ_f(e^u)` may jump) and integrates.
fn integrate_log_axis<T, F>(a: f64, b: f64, tol: f64, g: F) -> Result<quad::Quadrature<T>>
where
    T: quad::Integrand,
    F: Fn(f64) -> T,
{
    let left = quad::simpson(&g, a, 0.0, 32, 0.5 * tol)?;
    let right = quad::simpson(&g, 0.0, b, 32, 0.5 * tol)?;
    Ok(quad::Quadrature { value: left.value + right.value, error: left.error + right.error })
}

/// Evaluates `Ξ_f(e^u)`; quadrature callbacks cannot fail, so the first
/// error is parked and reported afterwards.
struct XiOnLogAxis<'a> {
    f: &'a TestFunction,
    tol: f64,
    err: std::cell::RefCell<Option<Error>>,
}

impl<'a> XiOnLogAxis<'a> {
    fn new(f: &'a TestFunction, tol: f64) -> Self {
        Self { f, tol, err: std::cell::RefCell::new(None) }
    }

    fn at(&self, u: f64) -> Complex64 {
        match self.f.xi(u.exp(), self.tol) {
            Ok(v) => v,
            Err(e) => {
                self.err.borrow_mut().get_or_insert(e);
                Complex64::new(0.0, 0.0)
            }
        }
    }

    fn finish(self) -> Result<()> {
        match self.err.into_inner() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

/// `E[Z]` over the window: `θ∫_eps^R Ξ_f(y) dy/y`.
pub fn mean_z(spec: &LimitLawSpec) -> Result<Complex64> {
    spec.require_poisson()?;
    let (a, b) = spec.log_window();
    let xi = XiOnLogAxis::new(&spec.f, 0.01 * spec.tol);
    let q = integrate_log_axis(a, b, spec.tol / spec.theta, |u| xi.at(u))?;
    xi.finish()?;
    Ok(q.value * spec.theta)
}

/// `θ∫_eps^R |Ξ_f(y)| dy/y`, the Lipschitz constant of the windowed
/// characteristic function.
pub fn abs_xi_log_integral(spec: &LimitLawSpec) -> Result<f64> {
    let (a, b) = spec.log_window();
    let xi = XiOnLogAxis::new(&spec.f, 0.01 * spec.tol);
    let q = integrate_log_axis(a, b, spec.tol / spec.theta, |u| xi.at(u).norm())?;
    xi.finish()?;
    Ok(q.value * spec.theta)
}

/// Bound on the expected absolute contribution of points outside the window,
/// `C_Ξ·θ·(eps + 1/R)` with `|Ξ_f(y)| ≤ C_Ξ·min(y, 1/y)`.
pub fn truncation_error(spec: &LimitLawSpec) -> Result<f64> {
    spec.require_poisson()?;
    let c = spec.f.xi_bound_constant()?;
    Ok(c * spec.theta * (spec.window.0 + 1.0 / spec.window.1))
}

/// `E[e^{itZ}]` for the windowed process:
/// `exp(θ∫_{log eps}^{log R} (e^{itΞ_f(e^u)} − 1) du)`.
///
/// Relative to the untruncated law the error is at most
/// `|t|·truncation_error(spec)`, since `|e^{iv} − 1| ≤ |v|`.
pub fn campbell_cf(spec: &LimitLawSpec, t: f64) -> Result<Complex64> {
    spec.require_poisson()?;
    if t == 0.0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let (a, b) = spec.log_window();
    let xi = XiOnLogAxis::new(&spec.f, 0.01 * spec.tol / t.abs());
    let i = Complex64::i();
    let q = integrate_log_axis(a, b, spec.tol / spec.theta, |u| (i * t * xi.at(u)).exp() - 1.0)?;
    xi.finish()?;
    Ok((q.value * spec.theta).exp())
}

/// Per-experiment check of the hypotheses under which `X′` behaves like `X`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrincipalConditions {
    /// `log(n)·max(|f(1/(2δ))|, |f(−1/(2δ))|)`.
    pub log_tail: f64,
    pub log_tail_small: bool,
    /// `n·δ^α`, which must vanish for `δ = o(n^{−1/α})`.
    pub n_delta_alpha: f64,
}

pub fn principal_conditions(n: u64, delta: f64, f: &TestFunction) -> PrincipalConditions {
    let x0 = 0.5 / delta;
    let edge = f.eval(x0).norm().max(f.eval(-x0).norm());
    let log_tail = (n as f64).ln() * edge;
    PrincipalConditions {
        log_tail,
        log_tail_small: log_tail <= LOG_TAIL_THRESHOLD,
        n_delta_alpha: n as f64 * delta.powf(f.decay().alpha),
    }
}

/// Upper bound on `E|X − X′|` from second-order Euler–Maclaurin, summed over
/// both half-lines beyond `x₀ = 1/(2δ)`. The bound does not use `f(0)`, so
/// it is accepted for either regime:
///
/// `nδ·|tail mass| + (θ/2·log n + C)|f(±x₀)| + (θπ²/72 + C)|f′(±x₀)|/δ
///  + C/δ·∫_{x₀}^∞ |f″(±u)| du`.
pub fn euler_maclaurin_discrepancy_bound(
    n: u64,
    delta: f64,
    theta: f64,
    f: &TestFunction,
    c_theta: f64,
) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("δ must lie in (0, 1), got {delta}")));
    }
    if !(theta > 0.0) || !(c_theta >= 0.0) || n == 0 {
        return Err(Error::invalid("bound needs n ≥ 1, θ > 0 and C ≥ 0"));
    }
    if !f.has_antiderivative_tail() {
        return Err(Error::MissingData { name: f.name().to_string(), what: "antiderivative tail" });
    }
    let x0 = 0.5 / delta;
    if f.support().is_some_and(|r| x0 >= r) {
        return Ok(0.0);
    }
    let mass = f.fourier_at_zero()?;
    let nf = n as f64;
    let mut total = 0.0;
    for sign in [1.0, -1.0] {
        let edge = sign * x0;
        let big_f = f.antiderivative_tail(edge).expect("checked above");
        let tail_mass = if sign > 0.0 { big_f.norm() } else { (mass + big_f).norm() };
        let curvature = quad::simpson_to_infinity(|u: f64| f.second_derivative(sign * u).norm(), x0, 1e-12)?.value;
        total += nf * delta * tail_mass
            + (0.5 * theta * nf.ln() + c_theta) * f.eval(edge).norm()
            + (theta * PI * PI / 72.0 + c_theta) * f.derivative(edge).norm() / delta
            + c_theta * curvature / delta;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ewens::replica_rng;
    use crate::testfn::builtin;
    use approx::assert_abs_diff_eq;

    fn gz_spec(window: (f64, f64)) -> LimitLawSpec {
        LimitLawSpec::new(1.0, builtin("gauss_zero").unwrap(), window, 1e-8).unwrap()
    }

    #[test]
    fn harmonic_sums() {
        let h9: f64 = (1..=9).map(|l| 1.0 / l as f64).sum();
        assert_abs_diff_eq!(harmonic_below(0.1).unwrap(), h9, epsilon = 1e-15);
        assert_abs_diff_eq!(harmonic_below(0.3).unwrap(), 1.0 + 0.5 + 1.0 / 3.0, epsilon = 1e-15);
        assert!(harmonic_below(1.0).is_err());
    }

    #[test]
    fn clt_examples() {
        let g = builtin("gauss").unwrap();
        let p = clt_parameters(1000, 0.1, 1.0, &g).unwrap();
        assert_abs_diff_eq!(p.mean.re, 100.0 + 2.828968253968254, epsilon = 1e-9);
        assert_abs_diff_eq!(p.variance, 2.828968253968254, epsilon = 1e-12);
        for theta in [0.3, 2.0] {
            let p = clt_parameters(1000, 0.01, theta, &g).unwrap();
            assert_eq!(p.variance / theta, p.harmonic);
        }
        for delta in [1e-4, 1e-5, 1e-6] {
            let p = clt_parameters(10_000_000, delta, 1.0, &g).unwrap();
            let ratio = p.variance / (1.0 / delta).ln();
            assert!((0.9..=1.1).contains(&ratio), "δ={delta}: {ratio}");
        }
        let gz = builtin("gauss_zero").unwrap();
        assert!(matches!(clt_parameters(100, 0.1, 1.0, &gz), Err(Error::RegimeMismatch(_))));
    }

    #[test]
    fn spec_validation() {
        let gz = builtin("gauss_zero").unwrap();
        assert!(LimitLawSpec::new(1.0, gz.clone(), (2.0, 3.0), 1e-8).is_err());
        assert!(LimitLawSpec::new(0.0, gz.clone(), (0.1, 3.0), 1e-8).is_err());
        assert!(LimitLawSpec::with_regime(1.0, gz, Regime::Clt, (0.1, 10.0), 1e-8).is_err());
        let g = LimitLawSpec::new(1.0, builtin("gauss").unwrap(), (0.1, 10.0), 1e-8).unwrap();
        assert!(matches!(sample_limit_z(&g, &mut replica_rng(0, 0)), Err(Error::RegimeMismatch(_))));
        assert!(campbell_cf(&g, 1.0).is_err());
    }

    #[test]
    fn vanishing_window() {
        let spec = gz_spec((1.0 - 1e-12, 1.0 + 1e-12));
        let mut rng = replica_rng(4, 0);
        let zeros = (0..1000).filter(|_| sample_limit_z(&spec, &mut rng).unwrap().n_points == 0).count();
        assert!(zeros >= 999);
    }

    #[test]
    fn campbell_basics() {
        let spec = gz_spec((1e-3, 1e3));
        assert_eq!(campbell_cf(&spec, 0.0).unwrap(), Complex64::new(1.0, 0.0));
        let lip = abs_xi_log_integral(&spec).unwrap();
        let mut prev: Option<(f64, Complex64)> = None;
        for i in -20..=20 {
            let t = i as f64 * 0.25;
            let phi = campbell_cf(&spec, t).unwrap();
            assert!(phi.norm() <= 1.0 + 1e-12);
            let conj = campbell_cf(&spec, -t).unwrap().conj();
            assert!((phi - conj).norm() < 1e-10);
            if let Some((tp, pp)) = prev {
                assert!((phi - pp).norm() <= lip * (t - tp).abs() + 1e-9);
            }
            prev = Some((t, phi));
        }
    }

    #[test]
    fn truncation_error_scaling() {
        let c = builtin("gauss_zero").unwrap().xi_bound_constant().unwrap();
        let e = truncation_error(&gz_spec((1e-3, 1e3))).unwrap();
        assert_abs_diff_eq!(e, c * 2e-3, epsilon = 1e-15);
        let small = truncation_error(&gz_spec((1e-9, 1e9))).unwrap();
        assert!(small < 1e-8 * c);
        let r1 = truncation_error(&gz_spec((1e-12, 100.0))).unwrap();
        let r2 = truncation_error(&gz_spec((1e-12, 200.0))).unwrap();
        assert!(((r2 - c * 1e-12) / (r1 - c * 1e-12) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn euler_maclaurin_examples() {
        let b = builtin("bump_c2").unwrap();
        assert_eq!(euler_maclaurin_discrepancy_bound(1000, 0.4, 1.0, &b, DEFAULT_C_THETA).unwrap(), 0.0);
        assert!(euler_maclaurin_discrepancy_bound(1000, 0.6, 1.0, &b, DEFAULT_C_THETA).unwrap() > 0.0);
        let gz = builtin("gauss_zero").unwrap();
        let n = 1_000_000u64;
        let bound = euler_maclaurin_discrepancy_bound(n, (n as f64).powf(-0.5), 1.0, &gz, DEFAULT_C_THETA).unwrap();
        assert!(bound < 1e-6);
        let h = builtin("hump").unwrap();
        let mut last = f64::INFINITY;
        for delta in [0.2, 0.1, 0.05, 0.02, 0.01] {
            let v = euler_maclaurin_discrepancy_bound(10_000, delta, 1.0, &h, DEFAULT_C_THETA).unwrap();
            assert!(v < last, "δ={delta}");
            last = v;
        }
    }

    #[test]
    fn principal_condition_flags() {
        let gz = builtin("gauss_zero").unwrap();
        let c = principal_conditions(1_000_000, 1e-3, &gz);
        assert!(c.log_tail_small);
        let h = builtin("hump").unwrap();
        let c = principal_conditions(1_000_000, 1e-2, &h);
        assert!(c.log_tail > 0.0);
    }
}
