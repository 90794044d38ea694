//! Test functions and their periodisations.
//!
//! A [`TestFunction`] bundles `f`, its first two derivatives, decay data
//! `|f(x)| ≤ M/(1+|x|)^α`, and access to the Fourier transform
//! `f̂(λ) = ∫ f(x) e^{−2iπxλ} dx` (closed form or quadrature). On top of these
//! it evaluates
//!
//! - `Θ_f(x) = Σ_{k∈ℤ} f(kx)` with a hard truncation-error guarantee, either
//!   directly or through the dual series `(1/x) Θ_{f̂}(1/x)`;
//! - `Ξ_f(x) = Θ_f(x) − f(0)·1_{x>1} − f̂(0)/x`, evaluated without the
//!   cancellation a naive subtraction would suffer;
//! - the finite principal-branch sums `Θ_{f,j}` and `Ξ_{f,j}`.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::sync::{Arc, LazyLock, OnceLock};

use num_complex::Complex64;
use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::quad;

pub type ComplexFn = Arc<dyn Fn(f64) -> Complex64 + Send + Sync>;

/// Series longer than this are treated as unreachable.
const MAX_SERIES_TERMS: u64 = 200_000_000;
/// Plain direct sums longer than this switch to tail-corrected summation.
const DIRECT_PLAIN_LIMIT: u64 = 1_000_000;
/// Tolerance used for cached quantities such as `f̂(0)`.
const CACHE_TOL: f64 = 1e-13;

fn real(v: f64) -> Complex64 {
    Complex64::new(v, 0.0)
}

/// Polynomial decay envelope `|g(x)| ≤ m / (1+|x|)^alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Decay {
    pub m: f64,
    pub alpha: f64,
}

impl Decay {
    pub fn bound(&self, x: f64) -> f64 {
        self.m / (1.0 + x.abs()).powf(self.alpha)
    }

    /// Upper bound on `Σ_{|k|>K} |g(k·step)|`.
    pub fn series_tail(&self, step: f64, k: u64) -> f64 {
        if self.alpha <= 1.0 {
            return f64::INFINITY;
        }
        let a1 = self.alpha - 1.0;
        2.0 * self.m / (step * a1 * (1.0 + k as f64 * step).powf(a1))
    }

    /// Smallest `K` with `series_tail(step, K) ≤ tol`, or `None` when the
    /// series does not converge or needs an absurd number of terms.
    pub fn series_cutoff(&self, step: f64, tol: f64) -> Option<u64> {
        if self.alpha <= 1.0 {
            return None;
        }
        let a1 = self.alpha - 1.0;
        let target = (2.0 * self.m / (step * a1 * tol)).powf(1.0 / a1);
        let k = ((target - 1.0) / step).ceil().max(0.0);
        (k.is_finite() && k <= MAX_SERIES_TERMS as f64).then_some(k as u64)
    }

    /// Upper bound on `∫_{|x|>l} |g|`.
    pub fn integral_tail(&self, l: f64) -> f64 {
        if self.alpha <= 1.0 {
            return f64::INFINITY;
        }
        let a1 = self.alpha - 1.0;
        2.0 * self.m / (a1 * (1.0 + l).powf(a1))
    }

    /// Smallest window half-width `l` with `integral_tail(l) ≤ tol`.
    pub fn integral_cutoff(&self, tol: f64) -> Option<f64> {
        if self.alpha <= 1.0 {
            return None;
        }
        let a1 = self.alpha - 1.0;
        let l = ((2.0 * self.m / (a1 * tol)).powf(1.0 / a1) - 1.0).max(0.0);
        l.is_finite().then_some(l)
    }
}

/// Power-law envelope away from the origin: `|g(λ)| ≤ c / |λ|^p` for `λ ≠ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerTail {
    pub c: f64,
    pub p: f64,
}

impl PowerTail {
    /// Smallest `K ≥ 1` with `Σ_{|k|>K} c/|k·step|^p ≤ tol`.
    pub fn series_cutoff(&self, step: f64, tol: f64) -> Option<u64> {
        if self.p <= 1.0 {
            return None;
        }
        let p1 = self.p - 1.0;
        let k = (2.0 * self.c / (step.powf(self.p) * p1 * tol))
            .powf(1.0 / p1)
            .ceil()
            .max(1.0);
        (k.is_finite() && k <= MAX_SERIES_TERMS as f64).then_some(k as u64)
    }
}

/// How `f̂` is obtained.
#[derive(Clone)]
pub enum FourierRecipe {
    ClosedForm(ComplexFn),
    /// Adaptive Simpson on a window sized from the decay envelope, split at
    /// period boundaries `1/|λ|`; `max_panels` caps the work per call.
    Quadrature { max_panels: usize },
}

impl fmt::Debug for FourierRecipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FourierRecipe::ClosedForm(_) => f.write_str("ClosedForm"),
            FourierRecipe::Quadrature { max_panels } => {
                write!(f, "Quadrature {{ max_panels: {max_panels} }}")
            }
        }
    }
}

/// A test function `f: ℝ → ℂ` with the data every statistic needs.
///
/// Values are immutable after construction and cheap to clone.
#[derive(Clone)]
pub struct TestFunction {
    name: String,
    f: ComplexFn,
    df: ComplexFn,
    ddf: ComplexFn,
    antiderivative_tail: Option<ComplexFn>,
    fourier: FourierRecipe,
    decay: Decay,
    fourier_decay: Option<PowerTail>,
    support: Option<f64>,
    value_at_zero: Complex64,
    fourier_at_zero: Option<Complex64>,
    admissible: bool,
    xi_constant: Arc<OnceLock<f64>>,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("name", &self.name)
            .field("decay", &self.decay)
            .field("fourier", &self.fourier)
            .field("fourier_decay", &self.fourier_decay)
            .field("support", &self.support)
            .field("admissible", &self.admissible)
            .finish()
    }
}

pub struct TestFunctionBuilder {
    name: String,
    f: ComplexFn,
    df: ComplexFn,
    ddf: ComplexFn,
    antiderivative_tail: Option<ComplexFn>,
    fourier: FourierRecipe,
    decay: Option<Decay>,
    fit_alpha: Option<f64>,
    fourier_decay: Option<PowerTail>,
    fit_fourier_p: Option<f64>,
    support: Option<f64>,
    admissible: bool,
}

impl TestFunctionBuilder {
    pub fn decay(mut self, m: f64, alpha: f64) -> Self {
        self.decay = Some(Decay { m, alpha });
        self
    }

    /// Fit `M` for the given `α` by a dense scan of `|f(x)|(1+|x|)^α`.
    pub fn fitted_decay(mut self, alpha: f64) -> Self {
        self.fit_alpha = Some(alpha);
        self
    }

    pub fn closed_form_fourier(mut self, g: impl Fn(f64) -> Complex64 + Send + Sync + 'static) -> Self {
        self.fourier = FourierRecipe::ClosedForm(Arc::new(g));
        self
    }

    pub fn fourier_decay(mut self, c: f64, p: f64) -> Self {
        self.fourier_decay = Some(PowerTail { c, p });
        self
    }

    /// Fit `c` in `|f̂(λ)| ≤ c/|λ|^p` by scanning the closed-form transform.
    pub fn fitted_fourier_decay(mut self, p: f64) -> Self {
        self.fit_fourier_p = Some(p);
        self
    }

    pub fn antiderivative_tail(mut self, big_f: impl Fn(f64) -> Complex64 + Send + Sync + 'static) -> Self {
        self.antiderivative_tail = Some(Arc::new(big_f));
        self
    }

    /// `f` vanishes identically outside `[−r, r]`.
    pub fn support(mut self, r: f64) -> Self {
        self.support = Some(r);
        self
    }

    pub fn admissible(mut self, admissible: bool) -> Self {
        self.admissible = admissible;
        self
    }

    pub fn build(self) -> Result<TestFunction> {
        let decay = match (self.decay, self.fit_alpha) {
            (Some(d), _) => d,
            (None, Some(alpha)) => {
                let f = self.f.clone();
                let m = scan_max(|x| f(x).norm() * (1.0 + x.abs()).powf(alpha), self.support);
                Decay { m: m * 1.02, alpha }
            }
            (None, None) => {
                return Err(Error::invalid(format!("`{}`: decay data missing", self.name)));
            }
        };
        if !(decay.m > 0.0) {
            return Err(Error::invalid(format!("`{}`: decay constant must be positive", self.name)));
        }
        if self.admissible && decay.alpha <= 1.0 {
            return Err(Error::invalid(format!(
                "`{}`: admissible functions need decay exponent > 1, got {}",
                self.name, decay.alpha
            )));
        }
        if let Some(r) = self.support {
            if !(r > 0.0) {
                return Err(Error::invalid("support radius must be positive"));
            }
        }
        let value_at_zero = (self.f)(0.0);

        let mut tf = TestFunction {
            name: self.name,
            f: self.f,
            df: self.df,
            ddf: self.ddf,
            antiderivative_tail: self.antiderivative_tail,
            fourier: self.fourier,
            decay,
            fourier_decay: self.fourier_decay,
            support: self.support,
            value_at_zero,
            fourier_at_zero: None,
            admissible: self.admissible,
            xi_constant: Arc::new(OnceLock::new()),
        };

        tf.fourier_at_zero = match &tf.fourier {
            FourierRecipe::ClosedForm(g) => Some(g(0.0)),
            FourierRecipe::Quadrature { .. } if tf.admissible => {
                Some(tf.fourier_transform_quadrature(0.0, CACHE_TOL)?)
            }
            FourierRecipe::Quadrature { .. } => None,
        };

        if tf.fourier_decay.is_none() {
            if let (Some(p), FourierRecipe::ClosedForm(g)) = (self.fit_fourier_p, &tf.fourier) {
                let g = g.clone();
                let c = scan_max(|l| if l == 0.0 { 0.0 } else { g(l).norm() * l.abs().powf(p) }, None);
                tf.fourier_decay = Some(PowerTail { c: c * 1.02, p });
            } else if tf.admissible {
                // Two integrations by parts: |f̂(λ)| ≤ ‖f″‖₁ / (4π²λ²).
                let l1 = tf.second_derivative_l1()?;
                tf.fourier_decay = Some(PowerTail { c: l1 / (4.0 * PI * PI), p: 2.0 });
            }
        }
        Ok(tf)
    }
}

/// Dense scan of a nonnegative function over the real line (or over the
/// support), returning its maximum.
fn scan_max(g: impl Fn(f64) -> f64, support: Option<f64>) -> f64 {
    let mut best: f64 = 0.0;
    let mut visit = |x: f64| {
        let v = g(x);
        if v.is_finite() {
            best = best.max(v);
        }
    };
    let lin_end = support.unwrap_or(100.0);
    let steps = 100_000;
    for i in 0..=steps {
        let x = lin_end * i as f64 / steps as f64;
        visit(x);
        visit(-x);
    }
    if support.is_none() {
        let mut x = lin_end;
        while x < 1e8 {
            visit(x);
            visit(-x);
            x *= 1.01;
        }
    }
    best
}

/// Which series evaluates `Θ_f(x)`, and how many terms on each side of zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Branch {
    Direct(u64),
    Dual(u64),
}

impl TestFunction {
    pub fn builder(
        name: impl Into<String>,
        f: impl Fn(f64) -> Complex64 + Send + Sync + 'static,
        df: impl Fn(f64) -> Complex64 + Send + Sync + 'static,
        ddf: impl Fn(f64) -> Complex64 + Send + Sync + 'static,
    ) -> TestFunctionBuilder {
        TestFunctionBuilder {
            name: name.into(),
            f: Arc::new(f),
            df: Arc::new(df),
            ddf: Arc::new(ddf),
            antiderivative_tail: None,
            fourier: FourierRecipe::Quadrature { max_panels: 2_000_000 },
            decay: None,
            fit_alpha: None,
            fourier_decay: None,
            fit_fourier_p: None,
            support: None,
            admissible: true,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn eval(&self, x: f64) -> Complex64 {
        (self.f)(x)
    }

    pub fn derivative(&self, x: f64) -> Complex64 {
        (self.df)(x)
    }

    pub fn second_derivative(&self, x: f64) -> Complex64 {
        (self.ddf)(x)
    }

    /// `F(x) = −∫_x^∞ f`, when available.
    pub fn antiderivative_tail(&self, x: f64) -> Option<Complex64> {
        self.antiderivative_tail.as_ref().map(|big_f| big_f(x))
    }

    pub fn has_antiderivative_tail(&self) -> bool {
        self.antiderivative_tail.is_some()
    }

    pub fn decay(&self) -> Decay {
        self.decay
    }

    pub fn fourier_decay(&self) -> Option<PowerTail> {
        self.fourier_decay
    }

    pub fn support(&self) -> Option<f64> {
        self.support
    }

    pub fn value_at_zero(&self) -> Complex64 {
        self.value_at_zero
    }

    pub fn is_admissible(&self) -> bool {
        self.admissible
    }

    pub fn has_closed_form_fourier(&self) -> bool {
        matches!(self.fourier, FourierRecipe::ClosedForm(_))
    }

    /// Cached `f̂(0) = ∫ f`.
    pub fn fourier_at_zero(&self) -> Result<Complex64> {
        self.fourier_at_zero.ok_or_else(|| Error::MissingData {
            name: self.name.clone(),
            what: "integrable Fourier transform",
        })
    }

    fn require_admissible(&self) -> Result<()> {
        if self.admissible {
            Ok(())
        } else {
            Err(Error::NotAdmissible(self.name.clone()))
        }
    }

    fn check_positive(x: f64) -> Result<()> {
        if x > 0.0 && x.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid(format!("argument must be a positive real, got {x}")))
        }
    }

    fn check_tol(tol: f64) -> Result<()> {
        if tol > 0.0 {
            Ok(())
        } else {
            Err(Error::invalid(format!("tolerance must be positive, got {tol}")))
        }
    }

    /// `f̂(λ)` with absolute error at most `tol`.
    pub fn fourier_transform(&self, lambda: f64, tol: f64) -> Result<Complex64> {
        Self::check_tol(tol)?;
        match &self.fourier {
            FourierRecipe::ClosedForm(g) => Ok(g(lambda)),
            FourierRecipe::Quadrature { .. } => self.fourier_transform_quadrature(lambda, tol),
        }
    }

    /// `f̂(λ)` by quadrature regardless of any closed form.
    pub fn fourier_transform_quadrature(&self, lambda: f64, tol: f64) -> Result<Complex64> {
        Self::check_tol(tol)?;
        let max_panels = match self.fourier {
            FourierRecipe::Quadrature { max_panels } => max_panels,
            FourierRecipe::ClosedForm(_) => 50_000_000,
        };
        let half_width = match self.support {
            Some(r) => r,
            None => self.decay.integral_cutoff(0.5 * tol).ok_or_else(|| {
                Error::ToleranceUnreachable {
                    requested: tol,
                    reason: format!("`{}` is not integrable under its decay bound", self.name),
                }
            })?,
        };
        let width = 2.0 * half_width;
        let panels = if lambda == 0.0 {
            16.0
        } else {
            (width * lambda.abs()).ceil().max(16.0)
        };
        if panels > max_panels as f64 {
            return Err(Error::ToleranceUnreachable {
                requested: tol,
                reason: format!("{panels} oscillation panels exceed the cap of {max_panels}"),
            });
        }
        let f = &self.f;
        let w = -2.0 * PI * lambda;
        let q = quad::simpson(
            |x: f64| f(x) * Complex64::from_polar(1.0, w * x),
            -half_width,
            half_width,
            panels as usize,
            0.5 * tol,
        )?;
        Ok(q.value)
    }

    /// `‖f″‖₁` by quadrature.
    fn second_derivative_l1(&self) -> Result<f64> {
        let ddf = &self.ddf;
        if let Some(r) = self.support {
            return Ok(quad::simpson(|x: f64| ddf(x).norm(), -r, r, 64, 1e-10)?.value);
        }
        let right = quad::simpson_to_infinity(|x: f64| ddf(x).norm(), 0.0, 1e-10)?.value;
        let left = quad::simpson_to_infinity(|x: f64| ddf(-x).norm(), 0.0, 1e-10)?.value;
        Ok(left + right)
    }

    fn direct_cutoff(&self, x: f64, tol: f64) -> Option<u64> {
        match self.support {
            Some(r) => Some((r / x).floor() as u64),
            None => self.decay.series_cutoff(x, tol),
        }
    }

    fn dual_cutoff(&self, x: f64, tol: f64) -> Option<u64> {
        self.fourier_decay?.series_cutoff(1.0 / x, tol * x)
    }

    /// Direct summation for `x ≥ 1`, the Poisson-dual series below, unless
    /// the preferred series needs more than 8× the work of the other one.
    /// Compactly supported functions always sum directly: the sum is finite.
    fn choose_branch(&self, x: f64, tol: f64) -> Result<Branch> {
        let half = 0.5 * tol;
        let direct = self.direct_cutoff(x, half);
        if self.support.is_some() {
            if let Some(k) = direct {
                return Ok(Branch::Direct(k));
            }
        }
        let dual = self.dual_cutoff(x, half);
        let weight = if self.has_closed_form_fourier() { 1.0 } else { 64.0 };
        let cost_direct = direct.map_or(f64::INFINITY, |k| k as f64 + 1.0);
        let cost_dual = dual.map_or(f64::INFINITY, |k| (k as f64 + 1.0) * weight);
        let prefer_direct = if x >= 1.0 {
            cost_direct <= 8.0 * cost_dual
        } else {
            cost_dual > 8.0 * cost_direct
        };
        match (prefer_direct, direct, dual) {
            (true, Some(k), _) => Ok(Branch::Direct(k)),
            (false, _, Some(k)) => Ok(Branch::Dual(k)),
            (_, Some(k), None) => Ok(Branch::Direct(k)),
            (_, None, Some(k)) => Ok(Branch::Dual(k)),
            (_, None, None) => Err(Error::ToleranceUnreachable {
                requested: tol,
                reason: format!("no convergent series for Θ at x = {x}"),
            }),
        }
    }

    /// `Σ_{k=−K}^{K} f(kx)` in increasing `k`.
    fn direct_sum(&self, x: f64, k_max: u64) -> Complex64 {
        let k_max = k_max as i64;
        let mut acc = Complex64::new(0.0, 0.0);
        for k in -k_max..=k_max {
            acc += (self.f)(k as f64 * x);
        }
        acc
    }

    /// `Σ_{1≤|k|≤K} f(kx)`.
    fn direct_rest(&self, x: f64, k_max: u64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for k in (1..=k_max).rev() {
            let u = k as f64 * x;
            acc += (self.f)(u) + (self.f)(-u);
        }
        acc
    }

    fn fourier_term_tol(&self, total: f64, k_max: u64) -> f64 {
        total / (2 * k_max + 1) as f64
    }

    /// `(1/x) Σ_{k=−K}^{K} f̂(k/x)`, with per-term quadrature error summing
    /// to at most `quad_tol` before the `1/x` factor.
    fn dual_sum(&self, x: f64, k_max: u64, quad_tol: f64) -> Result<Complex64> {
        let term_tol = self.fourier_term_tol(quad_tol, k_max);
        let k_max = k_max as i64;
        let mut acc = Complex64::new(0.0, 0.0);
        for k in -k_max..=k_max {
            acc += self.fourier_transform(k as f64 / x, term_tol)?;
        }
        Ok(acc / x)
    }

    /// `(1/x) Σ_{1≤|k|≤K} f̂(k/x)`.
    fn dual_rest(&self, x: f64, k_max: u64, quad_tol: f64) -> Result<Complex64> {
        let term_tol = self.fourier_term_tol(quad_tol, k_max);
        let mut acc = Complex64::new(0.0, 0.0);
        for k in (1..=k_max).rev() {
            let l = k as f64 / x;
            acc += self.fourier_transform(l, term_tol)? + self.fourier_transform(-l, term_tol)?;
        }
        Ok(acc / x)
    }

    /// `Θ_f(x) = Σ_{k∈ℤ} f(kx)` with absolute error at most `tol`.
    pub fn theta(&self, x: f64, tol: f64) -> Result<Complex64> {
        Self::check_positive(x)?;
        Self::check_tol(tol)?;
        self.require_admissible()?;
        match self.choose_branch(x, tol)? {
            Branch::Direct(k) => Ok(self.direct_sum(x, k)),
            Branch::Dual(k) => self.dual_sum(x, k, 0.5 * tol * x),
        }
    }

    /// `Θ_f(x)` by summing `f(kx)` only, never through `f̂` beyond `f̂(0)`.
    ///
    /// When the plain truncation needs more than a million terms and the
    /// antiderivative is known, the two tails are replaced by their
    /// Euler–Maclaurin expansion, whose remainder is bounded by
    /// `(x/12)∫_{Kx}^∞ |f″(±u)| du`.
    pub fn theta_direct(&self, x: f64, tol: f64) -> Result<Complex64> {
        Self::check_positive(x)?;
        Self::check_tol(tol)?;
        self.require_admissible()?;
        match self.direct_cutoff(x, tol) {
            Some(k) if k <= DIRECT_PLAIN_LIMIT || !self.has_antiderivative_tail() => {
                Ok(self.direct_sum(x, k))
            }
            _ if self.has_antiderivative_tail() => self.direct_sum_with_tails(x, tol),
            _ => Err(Error::ToleranceUnreachable {
                requested: tol,
                reason: format!("direct series for Θ at x = {x} too long"),
            }),
        }
    }

    fn direct_sum_with_tails(&self, x: f64, tol: f64) -> Result<Complex64> {
        let big_f = self.antiderivative_tail.as_ref().expect("checked by caller");
        let ddf = &self.ddf;
        let remainder = |u: f64| -> Result<f64> {
            let q = 1e-3 * tol / x;
            let plus = quad::simpson_to_infinity(|t: f64| ddf(t).norm(), u, q)?.value;
            let minus = quad::simpson_to_infinity(|t: f64| ddf(-t).norm(), u, q)?.value;
            Ok(x / 12.0 * (plus + minus) + 2e-3 * tol)
        };
        let mut u = x.max(1.0);
        while remainder(u)? > 0.5 * tol {
            u *= 2.0;
            if u / x > MAX_SERIES_TERMS as f64 {
                return Err(Error::ToleranceUnreachable {
                    requested: tol,
                    reason: format!("Euler–Maclaurin tail for Θ at x = {x} does not converge"),
                });
            }
        }
        let k = (u / x).ceil() as u64;
        let edge = k as f64 * x;
        let mass = self.fourier_at_zero()?;
        // Σ_{k'>K} g(k') = ∫_K^∞ g − g(K)/2 − g′(K)/12 + R
        let upper = -big_f(edge) / x - self.eval(edge) * 0.5 - self.derivative(edge) * (x / 12.0);
        let lower = (mass + big_f(-edge)) / x - self.eval(-edge) * 0.5 + self.derivative(-edge) * (x / 12.0);
        Ok(self.direct_sum(x, k) + upper + lower)
    }

    /// `(1/x) Θ_{f̂}(1/x)` by direct summation of the transform.
    pub fn theta_dual(&self, x: f64, tol: f64) -> Result<Complex64> {
        Self::check_positive(x)?;
        Self::check_tol(tol)?;
        self.require_admissible()?;
        let k = self.dual_cutoff(x, 0.5 * tol).ok_or_else(|| Error::ToleranceUnreachable {
            requested: tol,
            reason: format!("dual series for Θ at x = {x} too long"),
        })?;
        self.dual_sum(x, k, 0.5 * tol * x)
    }

    /// `|Θ_f(x) − (1/x)Θ_{f̂}(1/x)|`, both sides summed directly to `tol/4`.
    pub fn poisson_summation_residual(&self, x: f64, tol: f64) -> Result<f64> {
        let lhs = self.theta_direct(x, 0.25 * tol)?;
        let rhs = self.theta_dual(x, 0.25 * tol)?;
        Ok((lhs - rhs).norm())
    }

    /// `Ξ_f(x) = Θ_f(x) − f(0)·1_{x>1} − f̂(0)/x` with absolute error ≤ `tol`.
    pub fn xi(&self, x: f64, tol: f64) -> Result<Complex64> {
        Self::check_positive(x)?;
        self.xi_with_indicator(x, x > 1.0, tol)
    }

    /// `Ξ_f` with the plateau indicator supplied by the caller, so that
    /// cycle-length code can decide `ℓδ < 1` in one place.
    pub(crate) fn xi_with_indicator(&self, x: f64, above_one: bool, tol: f64) -> Result<Complex64> {
        Self::check_positive(x)?;
        Self::check_tol(tol)?;
        self.require_admissible()?;
        let plateau = if above_one { self.value_at_zero } else { Complex64::new(0.0, 0.0) };
        match self.choose_branch(x, tol)? {
            Branch::Direct(k) => {
                let rest = self.direct_rest(x, k);
                Ok(rest + (self.value_at_zero - plateau) - self.fourier_at_zero()? / x)
            }
            Branch::Dual(k) => {
                let rest = self.dual_rest(x, k, 0.5 * tol * x)?;
                Ok(rest - plateau)
            }
        }
    }

    /// `Θ_{f,j}(x) = Σ_{k=⌊−j/2⌋+1}^{⌊j/2⌋} f(kx)`, summed in increasing `k`.
    pub fn theta_partial(&self, j: u64, x: f64) -> Result<Complex64> {
        if j == 0 {
            return Err(Error::invalid("partial periodisation needs j ≥ 1"));
        }
        Self::check_positive(x)?;
        let (lo, hi) = principal_range(j);
        let mut acc = Complex64::new(0.0, 0.0);
        for k in lo..=hi {
            acc += (self.f)(k as f64 * x);
        }
        Ok(acc)
    }

    /// `Ξ_{f,j}(x) = Θ_{f,j}(x) − f(0)·1_{x>1} − f̂(0)/x`.
    pub fn xi_partial(&self, j: u64, x: f64) -> Result<Complex64> {
        let theta = self.theta_partial(j, x)?;
        let plateau = if x > 1.0 { self.value_at_zero } else { Complex64::new(0.0, 0.0) };
        Ok(theta - plateau - self.fourier_at_zero()? / x)
    }

    /// Grid estimate of the constant `C` in `|Ξ_f(x)| ≤ C·min(x, 1/x)`,
    /// over 801 log-spaced points in `[10⁻⁴, 10⁴]`. Cached after first use.
    pub fn xi_bound_constant(&self) -> Result<f64> {
        if let Some(c) = self.xi_constant.get() {
            return Ok(*c);
        }
        self.require_admissible()?;
        let mut c: f64 = 0.0;
        for i in 0..=800 {
            let x = 10f64.powf(-4.0 + i as f64 * 0.01);
            let xi = self.xi(x, 1e-12)?;
            c = c.max(xi.norm() / x.min(1.0 / x));
        }
        Ok(*self.xi_constant.get_or_init(|| c))
    }
}

/// Index range `⌊−j/2⌋+1 ..= ⌊j/2⌋` of the principal determinations.
pub fn principal_range(j: u64) -> (i64, i64) {
    let j = j as i64;
    (-((j - 1) / 2), j / 2)
}

/// Identifiers of the built-in catalog.
pub const BUILTIN_NAMES: [&str; 5] = ["gauss", "gauss_zero", "bump_c2", "hump", "cauchy_slow"];

/// Named built-in test functions.
pub struct BuiltinCatalog {
    entries: Vec<TestFunction>,
}

static CATALOG: LazyLock<BuiltinCatalog> =
    LazyLock::new(|| BuiltinCatalog::standard().expect("built-in catalog must construct"));

impl BuiltinCatalog {
    pub fn global() -> &'static BuiltinCatalog {
        &CATALOG
    }

    pub fn standard() -> Result<Self> {
        Ok(Self {
            entries: vec![gauss()?, gauss_zero()?, bump_c2()?, hump()?, cauchy_slow()?],
        })
    }

    pub fn get(&self, name: &str) -> Result<&TestFunction> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::UnknownFunction(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &TestFunction> {
        self.entries.iter()
    }
}

/// Clone of a catalog entry.
pub fn builtin(name: &str) -> Result<TestFunction> {
    BuiltinCatalog::global().get(name).cloned()
}

fn gauss() -> Result<TestFunction> {
    TestFunction::builder(
        "gauss",
        |x| real((-PI * x * x).exp()),
        |x| real(-2.0 * PI * x * (-PI * x * x).exp()),
        |x| real((4.0 * PI * PI * x * x - 2.0 * PI) * (-PI * x * x).exp()),
    )
    .fitted_decay(20.0)
    .closed_form_fourier(|l| real((-PI * l * l).exp()))
    .fitted_fourier_decay(20.0)
    .antiderivative_tail(|x| real(-0.5 * erfc(PI.sqrt() * x)))
    .build()
}

fn gauss_zero() -> Result<TestFunction> {
    TestFunction::builder(
        "gauss_zero",
        |x| real(x * x * (-PI * x * x).exp()),
        |x| real((2.0 * x - 2.0 * PI * x * x * x) * (-PI * x * x).exp()),
        |x| {
            let x2 = x * x;
            real((2.0 - 10.0 * PI * x2 + 4.0 * PI * PI * x2 * x2) * (-PI * x2).exp())
        },
    )
    .fitted_decay(20.0)
    .closed_form_fourier(|l| real((0.5 / PI - l * l) * (-PI * l * l).exp()))
    .fitted_fourier_decay(20.0)
    .antiderivative_tail(|x| {
        real(-(x * (-PI * x * x).exp() / (2.0 * PI) + erfc(PI.sqrt() * x) / (4.0 * PI)))
    })
    .build()
}

fn bump_c2() -> Result<TestFunction> {
    // (1−x²)³ on [−1, 1]: f, f′, f″ vanish at ±1, f‴ jumps by 48.
    // Total variation of f‴ is 192(1 + 1/√5), so |f̂(λ)| ≤ TV/(2πλ)⁴.
    let tv = 192.0 * (1.0 + 1.0 / 5f64.sqrt());
    TestFunction::builder(
        "bump_c2",
        |x| {
            if x.abs() < 1.0 {
                let s = 1.0 - x * x;
                real(s * s * s)
            } else {
                real(0.0)
            }
        },
        |x| {
            if x.abs() < 1.0 {
                let s = 1.0 - x * x;
                real(-6.0 * x * s * s)
            } else {
                real(0.0)
            }
        },
        |x| {
            if x.abs() < 1.0 {
                real((1.0 - x * x) * (30.0 * x * x - 6.0))
            } else {
                real(0.0)
            }
        },
    )
    .support(1.0)
    .fitted_decay(4.0)
    .closed_form_fourier(|l| real(bump_c2_transform(2.0 * PI * l)))
    .fourier_decay(tv / (2.0 * PI).powi(4), 4.0)
    .antiderivative_tail(|x| {
        let p = |u: f64| u - u.powi(3) + 0.6 * u.powi(5) - u.powi(7) / 7.0;
        if x >= 1.0 {
            real(0.0)
        } else if x <= -1.0 {
            real(-32.0 / 35.0)
        } else {
            real(-(16.0 / 35.0 - p(x)))
        }
    })
    .build()
}

/// `∫_{−1}^{1} (1−x²)³ cos(ωx) dx`.
fn bump_c2_transform(omega: f64) -> f64 {
    let w = omega.abs();
    if w < 3.0 {
        // Σ_k (−1)^k ω^{2k}/(2k)! · 96/((2k+1)(2k+3)(2k+5)(2k+7))
        let w2 = w * w;
        let mut power = 1.0;
        let mut acc = 0.0;
        for k in 0..40u32 {
            let q = 2.0 * k as f64;
            acc += power * 96.0 / ((q + 1.0) * (q + 3.0) * (q + 5.0) * (q + 7.0));
            power *= -w2 / ((q + 1.0) * (q + 2.0));
        }
        acc
    } else {
        let (s, c) = w.sin_cos();
        96.0 * ((w * w * w - 15.0 * w) * c + (15.0 - 6.0 * w * w) * s) / w.powi(7)
    }
}

/// `∫_x^∞ u²/(1+u⁴) du` for `x ≥ 0`.
fn hump_upper_tail(x: f64) -> f64 {
    if x >= 2.0 {
        // Σ_k (−1)^k x^{−1−4k}/(1+4k)
        let inv4 = x.powi(-4);
        let mut term = 1.0 / x;
        let mut acc: f64 = 0.0;
        let mut k = 0;
        while term.abs() > 1e-18 * acc.abs().max(1e-300) && k < 60 {
            acc += term / (1.0 + 4.0 * k as f64);
            term *= -inv4;
            k += 1;
        }
        acc
    } else {
        let s = SQRT_2;
        let anti = ((x * x - s * x + 1.0) / (x * x + s * x + 1.0)).ln()
            + 2.0 * (s * x + 1.0).atan()
            + 2.0 * (s * x - 1.0).atan();
        PI / (2.0 * s) - anti / (4.0 * s)
    }
}

fn hump() -> Result<TestFunction> {
    TestFunction::builder(
        "hump",
        |x| {
            let x2 = x * x;
            real(x2 / (1.0 + x2 * x2))
        },
        |x| {
            let x4 = x.powi(4);
            real((2.0 * x - 2.0 * x4 * x) / ((1.0 + x4) * (1.0 + x4)))
        },
        |x| {
            let x4 = x.powi(4);
            real(2.0 * (3.0 * x4 * x4 - 12.0 * x4 + 1.0) / (1.0 + x4).powi(3))
        },
    )
    .fitted_decay(2.0)
    .closed_form_fourier(|l| {
        let a = SQRT_2 * PI * l.abs();
        real(PI / SQRT_2 * (-a).exp() * (a.cos() - a.sin()))
    })
    .fitted_fourier_decay(10.0)
    .antiderivative_tail(|x| {
        let total = PI / SQRT_2;
        if x >= 0.0 {
            real(-hump_upper_tail(x))
        } else {
            real(-(total - hump_upper_tail(-x)))
        }
    })
    .build()
}

fn cauchy_slow() -> Result<TestFunction> {
    TestFunction::builder(
        "cauchy_slow",
        |x| real(1.0 / (1.0 + x.abs())),
        |x| real(-x.signum() / (1.0 + x.abs()).powi(2)),
        |x| real(2.0 / (1.0 + x.abs()).powi(3)),
    )
    .decay(1.0, 1.0)
    .admissible(false)
    .build()
}
