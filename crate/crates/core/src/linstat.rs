//! Mesoscopic linear statistics of permutation matrices.
//!
//! A cycle of length `ℓ` contributes the eigenangles `2πk/ℓ`. Summing
//! `f(x/(2πδ))` over every determination `x` of every eigenangle gives
//! `X = Σ_ℓ a_ℓ Θ_f(1/(ℓδ))`; keeping only determinations in `(−π, π]` gives
//! `X′ = Σ_ℓ a_ℓ Θ_{f,ℓ}(1/(ℓδ))`. Both are evaluated from cycle counts.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ewens::CycleCounts;
use crate::testfn::TestFunction;
use crate::Complex64;

/// `X = nδ f̂(0) + Σ a_ℓ Ξ_f(1/(ℓδ)) + f(0)·Σ_{ℓδ<1} a_ℓ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Decomposition {
    pub drift: Complex64,
    pub xi_sum: Complex64,
    pub small_cycle_term: Complex64,
}

impl Decomposition {
    pub fn total(&self) -> Complex64 {
        self.drift + self.xi_sum + self.small_cycle_term
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StatisticValue {
    pub value: Complex64,
    pub decomposition: Option<Decomposition>,
    /// Guaranteed bound on the truncation error of `value`; zero for the
    /// finite principal-branch sums.
    pub tol: f64,
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("δ must lie in (0, 1), got {delta}")))
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("tolerance must be positive, got {tol}")))
    }
}

#[inline]
fn short_cycle(ell: u64, delta: f64) -> bool {
    (ell as f64) * delta < 1.0
}

#[inline]
fn scale(ell: u64, delta: f64) -> f64 {
    1.0 / (ell as f64 * delta)
}

fn require_admissible(f: &TestFunction) -> Result<()> {
    if f.is_admissible() {
        Ok(())
    } else {
        Err(Error::NotAdmissible(f.name().to_string()))
    }
}

/// `X` only, without the decomposition.
pub fn linear_statistic_full_value(cc: &CycleCounts, delta: f64, f: &TestFunction, tol: f64) -> Result<Complex64> {
    check_delta(delta)?;
    check_tol(tol)?;
    require_admissible(f)?;
    let d = cc.distinct_lengths() as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for (ell, a) in cc.iter() {
        let term_tol = tol / (d * a as f64);
        acc += f.theta(scale(ell, delta), term_tol)? * a as f64;
    }
    Ok(acc)
}

/// `X − nδf̂(0) = Σ a_ℓ Ξ_f(1/(ℓδ)) + f(0)·Σ_{ℓδ<1} a_ℓ`, summed without
/// ever forming the large drift.
pub fn linear_statistic_full_centered(cc: &CycleCounts, delta: f64, f: &TestFunction, tol: f64) -> Result<Complex64> {
    check_delta(delta)?;
    check_tol(tol)?;
    require_admissible(f)?;
    let d = cc.distinct_lengths() as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    let mut short = 0u64;
    for (ell, a) in cc.iter() {
        let term_tol = tol / (d * a as f64);
        let is_short = short_cycle(ell, delta);
        acc += f.xi_with_indicator(scale(ell, delta), is_short, term_tol)? * a as f64;
        if is_short {
            short += a;
        }
    }
    Ok(acc + f.value_at_zero() * short as f64)
}

/// `X = Σ_ℓ a_ℓ Θ_f(1/(ℓδ))` with total truncation error at most `tol`,
/// together with its three-term decomposition.
pub fn linear_statistic_full(cc: &CycleCounts, delta: f64, f: &TestFunction, tol: f64) -> Result<StatisticValue> {
    let value = linear_statistic_full_value(cc, delta, f, tol)?;
    let d = cc.distinct_lengths() as f64;
    let mut xi_sum = Complex64::new(0.0, 0.0);
    let mut short = 0u64;
    for (ell, a) in cc.iter() {
        let term_tol = tol / (d * a as f64);
        let is_short = short_cycle(ell, delta);
        xi_sum += f.xi_with_indicator(scale(ell, delta), is_short, term_tol)? * a as f64;
        if is_short {
            short += a;
        }
    }
    let decomposition = Decomposition {
        drift: f.fourier_at_zero()? * (cc.n() as f64 * delta),
        xi_sum,
        small_cycle_term: f.value_at_zero() * short as f64,
    };
    Ok(StatisticValue { value, decomposition: Some(decomposition), tol })
}

/// `X′ = Σ_ℓ a_ℓ Θ_{f,ℓ}(1/(ℓδ))`. The sums are finite, so any test function
/// is accepted; the decomposition is filled when `f̂(0)` is known.
pub fn linear_statistic_principal(cc: &CycleCounts, delta: f64, f: &TestFunction) -> Result<StatisticValue> {
    check_delta(delta)?;
    let mut value = Complex64::new(0.0, 0.0);
    for (ell, a) in cc.iter() {
        value += f.theta_partial(ell, scale(ell, delta))? * a as f64;
    }
    let decomposition = match f.fourier_at_zero() {
        Ok(mass) => {
            let mut xi_sum = Complex64::new(0.0, 0.0);
            let mut short = 0u64;
            for (ell, a) in cc.iter() {
                let x = scale(ell, delta);
                let is_short = short_cycle(ell, delta);
                let plateau = if is_short { f.value_at_zero() } else { Complex64::new(0.0, 0.0) };
                xi_sum += (f.theta_partial(ell, x)? - plateau - mass / x) * a as f64;
                if is_short {
                    short += a;
                }
            }
            Some(Decomposition {
                drift: mass * (cc.n() as f64 * delta),
                xi_sum,
                small_cycle_term: f.value_at_zero() * short as f64,
            })
        }
        Err(_) => None,
    };
    Ok(StatisticValue { value, decomposition, tol: 0.0 })
}

/// `2M[(1+u)^{−α}·cycles + nδ(1+u)^{1−α}/(α−1)]`: bound on `Σ|f|` over the
/// determinations whose rescaled argument exceeds `u` in absolute value.
fn determination_tail(cc: &CycleCounts, delta: f64, f: &TestFunction, u: f64) -> f64 {
    let d = f.decay();
    if d.alpha <= 1.0 {
        return f64::INFINITY;
    }
    let base = 1.0 + u;
    2.0 * d.m
        * (cc.total_cycles() as f64 * base.powf(-d.alpha)
            + cc.n() as f64 * delta * base.powf(1.0 - d.alpha) / (d.alpha - 1.0))
}

/// Upper bound on `|X − X′|` from the decay envelope of `f`: the discarded
/// determinations all sit beyond `1/(2δ)`.
pub fn principal_gap_bound(cc: &CycleCounts, delta: f64, f: &TestFunction) -> Result<f64> {
    check_delta(delta)?;
    if f.support().is_some_and(|r| 0.5 / delta > r) {
        return Ok(0.0);
    }
    Ok(determination_tail(cc, delta, f, 0.5 / delta))
}

/// Bound on what [`eigenangle_oracle`] drops with `window` extra turns on
/// each side.
pub fn oracle_tail_bound(cc: &CycleCounts, delta: f64, f: &TestFunction, window: u64) -> f64 {
    if f.support().is_some_and(|r| window as f64 / delta >= r) {
        return 0.0;
    }
    determination_tail(cc, delta, f, window as f64 / delta)
}

/// Smallest window for which [`oracle_tail_bound`] is at most `tol`.
pub fn oracle_window(cc: &CycleCounts, delta: f64, f: &TestFunction, tol: f64) -> Result<u64> {
    check_delta(delta)?;
    check_tol(tol)?;
    for w in 1..=1_000_000u64 {
        if oracle_tail_bound(cc, delta, f, w) <= tol {
            return Ok(w);
        }
    }
    Err(Error::ToleranceUnreachable {
        requested: tol,
        reason: format!("`{}` decays too slowly for a finite eigenangle window", f.name()),
    })
}

/// Brute-force linear statistic over an explicit list of eigenangles.
///
/// Every cycle of length `ℓ` contributes the angles `2πk/ℓ`, `k = 0..ℓ`. With
/// `principal` set, each angle is taken in `(−π, π]`; otherwise it is
/// repeated at `x + 2πm` for `|m| ≤ window`. Fails when the decay bound on
/// the omitted determinations exceeds `tol`.
pub fn eigenangle_oracle(
    cc: &CycleCounts,
    delta: f64,
    f: &TestFunction,
    window: u64,
    principal: bool,
    tol: f64,
) -> Result<Complex64> {
    check_delta(delta)?;
    check_tol(tol)?;
    if cc.n() > 10_000 {
        return Err(Error::ResourceCap(format!("eigenangle oracle limited to n ≤ 10⁴, got {}", cc.n())));
    }
    if !principal {
        let tail = oracle_tail_bound(cc, delta, f, window);
        if tail > tol {
            return Err(Error::ToleranceUnreachable {
                requested: tol,
                reason: format!("window {window} leaves a tail bounded by {tail:e}"),
            });
        }
    }
    let two_pi = 2.0 * PI;
    let mut angles = Vec::with_capacity(cc.n() as usize);
    for (ell, a) in cc.iter() {
        for _ in 0..a {
            for k in 0..ell {
                // (−π, π] keeps k = ℓ/2 (angle π) and maps k > ℓ/2 to k − ℓ
                let k = if principal && 2 * k > ell { k as i64 - ell as i64 } else { k as i64 };
                angles.push(two_pi * k as f64 / ell as f64);
            }
        }
    }
    let mut total = Complex64::new(0.0, 0.0);
    let w = if principal { 0 } else { window as i64 };
    for &x in &angles {
        for m in -w..=w {
            total += f.eval((x + two_pi * m as f64) / (two_pi * delta));
        }
    }
    Ok(total)
}

/// `det(I − xM) = Π_ℓ (1 − x^ℓ)^{a_ℓ}` for a permutation matrix `M`.
pub fn characteristic_polynomial(cc: &CycleCounts, x: f64) -> Result<f64> {
    if !(x.abs() <= 1.0) {
        return Err(Error::invalid(format!("characteristic polynomial needs |x| ≤ 1, got {x}")));
    }
    let mut p = 1.0;
    for (ell, a) in cc.iter() {
        p *= (1.0 - x.powi(ell as i32)).powi(a as i32);
    }
    Ok(p)
}

/// Permutation matrix of a representative permutation with this cycle type:
/// column `i` has its one in row `σ(i)`.
pub fn permutation_matrix(cc: &CycleCounts) -> DMatrix<f64> {
    let perm = cc.representative_permutation();
    let n = perm.len();
    let mut m = DMatrix::zeros(n, n);
    for (i, &j) in perm.iter().enumerate() {
        m[(j, i)] = 1.0;
    }
    m
}

/// `det(I − xM)` from the dense matrix; meant for small `n` only.
pub fn dense_determinant(cc: &CycleCounts, x: f64) -> Result<f64> {
    if cc.n() > 64 {
        return Err(Error::ResourceCap(format!("dense determinant limited to n ≤ 64, got {}", cc.n())));
    }
    let m = permutation_matrix(cc);
    let n = m.nrows();
    Ok((DMatrix::identity(n, n) - m * x).determinant())
}

/// `n·δ^α`, which must vanish (`δ = o(n^{−1/α})`) for `X′` to track `X`.
pub fn principal_regime_indicator(n: u64, delta: f64, f: &TestFunction) -> f64 {
    n as f64 * delta.powf(f.decay().alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ewens::{partitions, replica_rng, sample_ewens};
    use crate::testfn::builtin;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_and_single_cycle() {
        let g = builtin("gauss").unwrap();
        let (n, delta) = (12, 0.3);
        let id = CycleCounts::identity(n).unwrap();
        let x = linear_statistic_full(&id, delta, &g, 1e-12).unwrap();
        assert_abs_diff_eq!(x.value.re, n as f64 * g.theta(1.0 / delta, 1e-14).unwrap().re, epsilon = 1e-11);
        let xp = linear_statistic_principal(&id, delta, &g).unwrap();
        assert_eq!(xp.value, g.value_at_zero() * n as f64);

        let cyc = CycleCounts::single_cycle(n).unwrap();
        let x = linear_statistic_full(&cyc, delta, &g, 1e-12).unwrap();
        assert_abs_diff_eq!(x.value.re, g.theta(1.0 / (n as f64 * delta), 1e-14).unwrap().re, epsilon = 1e-12);
        let xp = linear_statistic_principal(&cyc, delta, &g).unwrap();
        let direct: f64 = (-5i64..=6).map(|k| g.eval(k as f64 / (n as f64 * delta)).re).sum();
        assert_abs_diff_eq!(xp.value.re, direct, epsilon = 1e-14);
    }

    #[test]
    fn argument_checks() {
        let g = builtin("gauss").unwrap();
        let c = builtin("cauchy_slow").unwrap();
        let cc = CycleCounts::identity(4).unwrap();
        assert!(linear_statistic_full(&cc, 0.0, &g, 1e-8).is_err());
        assert!(linear_statistic_full(&cc, 1.0, &g, 1e-8).is_err());
        assert!(matches!(linear_statistic_full(&cc, 0.5, &c, 1e-8), Err(Error::NotAdmissible(_))));
        let p = linear_statistic_principal(&cc, 0.5, &c).unwrap();
        assert!(p.decomposition.is_none());
        assert!(characteristic_polynomial(&cc, 1.5).is_err());
    }

    #[test]
    fn oracle_agrees_on_all_cycle_types_of_eight() {
        let g = builtin("gauss").unwrap();
        for cc in partitions(8) {
            let w = oracle_window(&cc, 0.2, &g, 1e-12).unwrap();
            let oracle = eigenangle_oracle(&cc, 0.2, &g, w, false, 1e-12).unwrap();
            let x = linear_statistic_full(&cc, 0.2, &g, 1e-12).unwrap();
            assert!((oracle - x.value).norm() <= 1e-8, "{cc:?}");
            let po = eigenangle_oracle(&cc, 0.2, &g, 0, true, 1e-12).unwrap();
            let xp = linear_statistic_principal(&cc, 0.2, &g).unwrap();
            assert!((po - xp.value).norm() <= 1e-12, "{cc:?}");
        }
    }

    #[test]
    fn oracle_window_too_small_is_reported() {
        let h = builtin("hump").unwrap();
        let cc = CycleCounts::identity(8).unwrap();
        assert!(matches!(
            eigenangle_oracle(&cc, 0.2, &h, 1, false, 1e-8),
            Err(Error::ToleranceUnreachable { .. })
        ));
    }

    #[test]
    fn principal_identity_is_n_f0() {
        let gz = builtin("gauss_zero").unwrap();
        let cc = CycleCounts::identity(9).unwrap();
        assert_eq!(eigenangle_oracle(&cc, 0.2, &gz, 0, true, 1e-8).unwrap().norm(), 0.0);
        let g = builtin("gauss").unwrap();
        assert_abs_diff_eq!(eigenangle_oracle(&cc, 0.2, &g, 0, true, 1e-8).unwrap().re, 9.0, epsilon = 1e-15);
    }

    #[test]
    fn three_cycle_polynomial() {
        let c3 = CycleCounts::single_cycle(3).unwrap();
        assert_abs_diff_eq!(characteristic_polynomial(&c3, 0.5).unwrap(), 0.875, epsilon = 1e-15);
        assert_abs_diff_eq!(dense_determinant(&c3, 0.5).unwrap(), 0.875, epsilon = 1e-12);
        let id = CycleCounts::identity(3).unwrap();
        assert_abs_diff_eq!(characteristic_polynomial(&id, 0.5).unwrap(), 0.125, epsilon = 1e-15);
    }

    #[test]
    fn polynomial_matches_dense_determinant() {
        for cc in partitions(8) {
            for x in [-1.0, -0.4, 0.3, 0.9, 1.0] {
                let p = characteristic_polynomial(&cc, x).unwrap();
                let d = dense_determinant(&cc, x).unwrap();
                assert!((p - d).abs() <= 1e-12, "{cc:?} x={x}: {p} vs {d}");
            }
        }
    }

    #[test]
    fn decomposition_identity() {
        for name in ["gauss", "gauss_zero", "hump", "bump_c2"] {
            let f = builtin(name).unwrap();
            for (i, delta) in [0.5, 0.1, 0.01].into_iter().enumerate() {
                let cc = sample_ewens(2000, 1.0, &mut replica_rng(9, i as u64)).unwrap();
                let x = linear_statistic_full(&cc, delta, &f, 1e-9).unwrap();
                let dec = x.decomposition.unwrap();
                assert!((dec.total() - x.value).norm() <= 10.0 * x.tol, "{name} δ={delta}");
                let centered = linear_statistic_full_centered(&cc, delta, &f, 1e-9).unwrap();
                assert!((centered + dec.drift - x.value).norm() <= 10.0 * x.tol, "{name} δ={delta}");
            }
        }
    }

    #[test]
    fn principal_decomposition_identity() {
        let f = builtin("hump").unwrap();
        let cc = sample_ewens(3000, 1.0, &mut replica_rng(4, 0)).unwrap();
        let x = linear_statistic_principal(&cc, 0.05, &f).unwrap();
        let dec = x.decomposition.unwrap();
        assert!((dec.total() - x.value).norm() <= 1e-8 * x.value.norm().max(1.0));
    }

    #[test]
    fn direct_and_dual_paths_agree() {
        // Σ a_ℓ Θ with every Θ forced through each branch separately
        for name in ["gauss", "gauss_zero", "hump", "bump_c2"] {
            let f = builtin(name).unwrap();
            let tol = if f.has_closed_form_fourier() { 1e-8 } else { 1e-6 };
            for delta in [0.5, 0.1, 0.01] {
                let cc = sample_ewens(400, 1.0, &mut replica_rng(21, 0)).unwrap();
                let d = cc.distinct_lengths() as f64;
                let mut direct = Complex64::new(0.0, 0.0);
                let mut dual = Complex64::new(0.0, 0.0);
                for (ell, a) in cc.iter() {
                    let x = 1.0 / (ell as f64 * delta);
                    let t = tol / (2.0 * d * a as f64);
                    direct += f.theta_direct(x, t).unwrap() * a as f64;
                    dual += f.theta_dual(x, t).unwrap() * a as f64;
                }
                let x = linear_statistic_full_value(&cc, delta, &f, tol).unwrap();
                assert!((direct - dual).norm() <= tol, "{name} δ={delta}");
                assert!((x - direct).norm() <= 1.5 * tol, "{name} δ={delta}");
            }
        }
    }

    #[test]
    fn principal_gap_within_decay_bound() {
        let g = builtin("gauss").unwrap();
        let gz = builtin("gauss_zero").unwrap();
        let h = builtin("hump").unwrap();
        for i in 0..20 {
            let cc = sample_ewens(1000, 1.0, &mut replica_rng(33, i)).unwrap();
            for (f, delta) in [(&g, 0.01), (&gz, 0.3), (&h, 0.05), (&h, 0.3)] {
                let x = linear_statistic_full_value(&cc, delta, f, 1e-10).unwrap();
                let xp = linear_statistic_principal(&cc, delta, f).unwrap().value;
                let bound = principal_gap_bound(&cc, delta, f).unwrap();
                assert!((x - xp).norm() <= bound + 1e-9, "{} δ={delta}", f.name());
            }
        }
    }

    #[test]
    fn compact_support_principal_equals_full() {
        let b = builtin("bump_c2").unwrap();
        for i in 0..20 {
            let cc = sample_ewens(1000, 1.3, &mut replica_rng(2, i)).unwrap();
            let x = linear_statistic_full_value(&cc, 0.01, &b, 1e-10).unwrap();
            let xp = linear_statistic_principal(&cc, 0.01, &b).unwrap().value;
            assert_eq!(x, xp);
        }
    }

    #[test]
    fn linearity() {
        use crate::testfn::TestFunction;
        use std::f64::consts::PI;
        let g = builtin("gauss").unwrap();
        let gz = builtin("gauss_zero").unwrap();
        let sum = TestFunction::builder(
            "gauss_plus_gauss_zero",
            |x| Complex64::new((1.0 + x * x) * (-PI * x * x).exp(), 0.0),
            |x| Complex64::new((-2.0 * PI * x * (1.0 + x * x) + 2.0 * x) * (-PI * x * x).exp(), 0.0),
            |x| {
                let g = (-PI * x * x).exp();
                let gpp = (4.0 * PI * PI * x * x - 2.0 * PI) * g;
                let zpp = (2.0 - 10.0 * PI * x * x + 4.0 * PI * PI * x.powi(4)) * g;
                Complex64::new(gpp + zpp, 0.0)
            },
        )
        .fitted_decay(20.0)
        .closed_form_fourier(|l| Complex64::new((1.0 + 0.5 / PI - l * l) * (-PI * l * l).exp(), 0.0))
        .fitted_fourier_decay(20.0)
        .build()
        .unwrap();
        let cc = sample_ewens(5000, 0.7, &mut replica_rng(8, 0)).unwrap();
        for delta in [0.3, 0.02] {
            let lhs = linear_statistic_full_value(&cc, delta, &sum, 1e-10).unwrap();
            let rhs = linear_statistic_full_value(&cc, delta, &g, 1e-10).unwrap()
                + linear_statistic_full_value(&cc, delta, &gz, 1e-10).unwrap();
            assert!((lhs - rhs).norm() <= 3e-10);
        }
    }
}
