//! Seeded ensembles, estimators and the distributional comparisons used to
//! check the limit theorems.
//!
//! Replicate `i` of an ensemble with master seed `s` always draws from
//! [`replica_rng`]`(s, i)`, so results do not depend on the number of worker
//! threads or the order in which replicates finish.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::ewens::{default_horizon, derive_seed, replica_rng, sample_coupled, sample_ewens};
use crate::limitlaw::{campbell_cf, clt_parameters, harmonic_below, sample_limit_z, LimitLawSpec};
use crate::linstat::{linear_statistic_full_centered, linear_statistic_full_value, linear_statistic_principal};
use crate::quad::CompensatedSum;
use crate::testfn::TestFunction;
use crate::Complex64;

/// Default cap on `n·R` (or `horizon·R`) per ensemble.
pub const DEFAULT_BUDGET: f64 = 2e11;
/// Default tolerance for statistic evaluation inside ensembles.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    /// `X`, all determinations.
    Full,
    /// `X′`, principal determinations only.
    Principal,
    /// One draw of the windowed limit `Z`.
    LimitZ,
    /// `Σ_{ℓ≤n} |a_ℓ − W_ℓ|` from one Feller chain.
    CoupledDiscrepancy,
    /// `Σ_{ℓδ<1} W_ℓ` with independent `W_ℓ ~ Poisson(θ/ℓ)`.
    PoissonAggregate,
}

impl Statistic {
    pub fn id(&self) -> &'static str {
        match self {
            Statistic::Full => "full",
            Statistic::Principal => "principal",
            Statistic::LimitZ => "limit_z",
            Statistic::CoupledDiscrepancy => "coupled_discrepancy",
            Statistic::PoissonAggregate => "poisson_aggregate",
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub statistic: Statistic,
    pub n: u64,
    pub delta: f64,
    pub theta: f64,
    pub f: Option<TestFunction>,
    pub replicates: u64,
    /// Subtract `nδf̂(0)` from `X` or `X′`.
    pub center: bool,
    pub tol: f64,
    pub window: (f64, f64),
    pub horizon: Option<u64>,
    pub budget: f64,
}

impl EnsembleConfig {
    pub fn new(statistic: Statistic, n: u64, delta: f64, theta: f64, replicates: u64) -> Self {
        Self {
            statistic,
            n,
            delta,
            theta,
            f: None,
            replicates,
            center: false,
            tol: DEFAULT_TOL,
            window: (1e-3, 1e3),
            horizon: None,
            budget: DEFAULT_BUDGET,
        }
    }

    pub fn with_fn(mut self, f: TestFunction) -> Self {
        self.f = Some(f);
        self
    }

    pub fn centered(mut self, center: bool) -> Self {
        self.center = center;
        self
    }

    pub fn with_window(mut self, window: (f64, f64)) -> Self {
        self.window = window;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    fn function(&self) -> Result<&TestFunction> {
        self.f
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("statistic `{}` needs a test function", self.statistic.id())))
    }

    fn cost(&self) -> f64 {
        let per = match self.statistic {
            Statistic::CoupledDiscrepancy => self.horizon.unwrap_or_else(|| default_horizon(self.n)) as f64,
            Statistic::LimitZ => self.theta * (self.window.1 / self.window.0).ln(),
            Statistic::PoissonAggregate => 1.0 / self.delta,
            Statistic::Full | Statistic::Principal => self.n as f64,
        };
        per * self.replicates as f64
    }

    fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::invalid("replicate count must be positive"));
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::invalid(format!("θ must be a positive real, got {}", self.theta)));
        }
        let needs_delta = !matches!(self.statistic, Statistic::LimitZ | Statistic::CoupledDiscrepancy);
        if needs_delta && !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!("δ must lie in (0, 1), got {}", self.delta)));
        }
        if self.n == 0 && self.statistic != Statistic::LimitZ && self.statistic != Statistic::PoissonAggregate {
            return Err(Error::invalid("n must be at least 1"));
        }
        let cost = self.cost();
        if cost > self.budget {
            return Err(Error::ResourceCap(format!(
                "ensemble cost {cost:e} exceeds the budget {:e}",
                self.budget
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub statistic: Statistic,
    pub n: u64,
    pub delta: f64,
    pub theta: f64,
    pub fn_id: Option<String>,
    pub master_seed: u64,
    pub replicates: u64,
    pub wall_time_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSample {
    pub values: Vec<Complex64>,
    pub seeds: Vec<u64>,
    pub meta: SampleMeta,
}

impl EmpiricalSample {
    /// Real parts, or [`Error::ComplexInput`] if any value has a nonzero
    /// imaginary part.
    pub fn real_values(&self) -> Result<Vec<f64>> {
        real_parts(&self.values)
    }
}

pub fn real_parts(values: &[Complex64]) -> Result<Vec<f64>> {
    if values.iter().any(|v| v.im != 0.0) {
        return Err(Error::ComplexInput);
    }
    Ok(values.iter().map(|v| v.re).collect())
}

fn poisson_aggregate<R: rand::Rng + ?Sized>(theta: f64, delta: f64, rng: &mut R) -> Result<f64> {
    let mut total = 0.0;
    let mut ell = 1u64;
    while (ell as f64) * delta < 1.0 {
        let lambda = theta / ell as f64;
        let p = Poisson::new(lambda).map_err(|e| Error::invalid(format!("Poisson rate {lambda}: {e}")))?;
        total += p.sample(rng);
        ell += 1;
    }
    Ok(total)
}

/// Value of replicate `index`, drawn from its own stream.
pub fn run_replicate(config: &EnsembleConfig, spec: Option<&LimitLawSpec>, master_seed: u64, index: u64) -> Result<Complex64> {
    let mut rng = replica_rng(master_seed, index);
    let (n, delta, theta) = (config.n, config.delta, config.theta);
    let zero = Complex64::new(0.0, 0.0);
    match config.statistic {
        Statistic::Full => {
            let f = config.function()?;
            let cc = sample_ewens(n, theta, &mut rng)?;
            if config.center {
                linear_statistic_full_centered(&cc, delta, f, config.tol)
            } else {
                linear_statistic_full_value(&cc, delta, f, config.tol)
            }
        }
        Statistic::Principal => {
            let f = config.function()?;
            let cc = sample_ewens(n, theta, &mut rng)?;
            let v = linear_statistic_principal(&cc, delta, f)?.value;
            if config.center {
                Ok(v - f.fourier_at_zero()? * (n as f64 * delta))
            } else {
                Ok(v)
            }
        }
        Statistic::LimitZ => {
            let spec = spec.expect("limit spec prepared by run_ensemble");
            Ok(sample_limit_z(spec, &mut rng)?.value)
        }
        Statistic::CoupledDiscrepancy => {
            let horizon = config.horizon.unwrap_or_else(|| default_horizon(n));
            let s = sample_coupled(n, theta, &mut rng, horizon)?;
            Ok(zero + s.discrepancy() as f64)
        }
        Statistic::PoissonAggregate => Ok(zero + poisson_aggregate(theta, delta, &mut rng)?),
    }
}

/// Runs `R` independent replicates in parallel on the current rayon pool.
pub fn run_ensemble(config: &EnsembleConfig, master_seed: u64) -> Result<EmpiricalSample> {
    config.validate()?;
    let start = Instant::now();
    let spec = match config.statistic {
        Statistic::LimitZ => Some(LimitLawSpec::new(config.theta, config.function()?.clone(), config.window, config.tol)?),
        _ => None,
    };
    let values = (0..config.replicates)
        .into_par_iter()
        .map(|i| run_replicate(config, spec.as_ref(), master_seed, i))
        .collect::<Result<Vec<_>>>()?;
    let seeds = (0..config.replicates).map(|i| derive_seed(master_seed, i)).collect();
    Ok(EmpiricalSample {
        values,
        seeds,
        meta: SampleMeta {
            statistic: config.statistic,
            n: config.n,
            delta: config.delta,
            theta: config.theta,
            fn_id: config.f.as_ref().map(|f| f.name().to_string()),
            master_seed,
            replicates: config.replicates,
            wall_time_seconds: start.elapsed().as_secs_f64(),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub se_mean: f64,
    pub se_variance: f64,
}

/// Unbiased mean and variance with jackknife standard errors.
pub fn estimate_moments(values: &[f64]) -> Result<Moments> {
    let r = values.len();
    if r < 10 {
        return Err(Error::TooFewReplicates { required: 10, got: r });
    }
    let rf = r as f64;
    let mean = values.iter().copied().collect::<CompensatedSum>().value() / rf;
    let q = values.iter().map(|x| (x - mean) * (x - mean)).collect::<CompensatedSum>().value();
    let variance = q / (rf - 1.0);
    // Leave-one-out variance: (Q − d_i²·R/(R−1)) / (R−2).
    let loo: Vec<f64> = values
        .iter()
        .map(|x| {
            let d = x - mean;
            (q - d * d * rf / (rf - 1.0)) / (rf - 2.0)
        })
        .collect();
    let loo_mean = loo.iter().copied().collect::<CompensatedSum>().value() / rf;
    let spread = loo.iter().map(|v| (v - loo_mean) * (v - loo_mean)).collect::<CompensatedSum>().value();
    Ok(Moments {
        mean,
        variance,
        se_mean: (variance / rf).sqrt(),
        se_variance: ((rf - 1.0) / rf * spread).sqrt(),
    })
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m == 0 {
        return f64::NAN;
    }
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// Outcome of one check: `verdict = distance ≤ threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    pub observed: Value,
    pub reference: Value,
    pub distance: f64,
    pub threshold: f64,
    pub verdict: bool,
}

impl TestReport {
    pub fn new(name: impl Into<String>, observed: Value, reference: Value, distance: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            observed,
            reference,
            distance,
            threshold,
            verdict: distance <= threshold,
        }
    }

    /// One-line summary, `PASS name: distance ≤ threshold`.
    pub fn line(&self) -> String {
        format!(
            "{} {}: distance {:.6e} {} threshold {:.6e}",
            if self.verdict { "PASS" } else { "FAIL" },
            self.name,
            self.distance,
            if self.verdict { "<=" } else { ">" },
            self.threshold
        )
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// `sup_x |F_R(x) − Φ(x)|` for a standardized real sample.
pub fn ks_normal_distance(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let r = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let phi = std_normal_cdf(x);
        d = d.max((i as f64 + 1.0) / r - phi).max(phi - i as f64 / r);
    }
    d
}

/// One-sample KS distance against `N(0, 1)`.
pub fn ks_normal(name: &str, sample: &[Complex64], threshold: f64) -> Result<TestReport> {
    let values = real_parts(sample)?;
    if values.is_empty() {
        return Err(Error::TooFewReplicates { required: 1, got: 0 });
    }
    let d = ks_normal_distance(&values);
    Ok(TestReport::new(
        name,
        json!({ "replicates": values.len(), "ks": d }),
        json!("standard normal"),
        d,
        threshold,
    ))
}

/// Asymptotic Kolmogorov survival function `P(K > λ)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Two-sample KS distance `sup_x |F_a(x) − F_b(x)|`.
pub fn ks_two_sample_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

pub fn ks_two_sample(name: &str, a: &[Complex64], b: &[Complex64], threshold: f64) -> Result<TestReport> {
    let (a, b) = (real_parts(a)?, real_parts(b)?);
    if a.is_empty() || b.is_empty() {
        return Err(Error::TooFewReplicates { required: 1, got: 0 });
    }
    let d = ks_two_sample_distance(&a, &b);
    let en = ((a.len() * b.len()) as f64 / (a.len() + b.len()) as f64).sqrt();
    let p = kolmogorov_survival(en * d);
    Ok(TestReport::new(
        name,
        json!({ "sizes": [a.len(), b.len()], "ks": d, "p_value": p }),
        json!("same distribution"),
        d,
        threshold,
    ))
}

/// `(1/R) Σ e^{itx}`.
pub fn empirical_cf(values: &[f64], t: f64) -> Complex64 {
    let mut re = CompensatedSum::new();
    let mut im = CompensatedSum::new();
    for &x in values {
        let (s, c) = (t * x).sin_cos();
        re.add(c);
        im.add(s);
    }
    let r = values.len() as f64;
    Complex64::new(re.value() / r, im.value() / r)
}

/// `t = −T, −T+h, …, T`.
pub fn symmetric_grid(t_max: f64, step: f64) -> Vec<f64> {
    let k = (t_max / step).round() as i64;
    (-k..=k).map(|i| i as f64 * step).collect()
}

/// `sup_{t∈grid} |φ_R(t) − φ(t)|`. The reference is evaluated once per
/// grid point; the report lists each point with its MC standard error `1/√R`.
pub fn cf_distance<F>(name: &str, sample: &[Complex64], reference: F, grid: &[f64], threshold: f64) -> Result<TestReport>
where
    F: Fn(f64) -> Result<Complex64>,
{
    if grid.is_empty() {
        return Err(Error::invalid("characteristic-function grid is empty"));
    }
    for &t in grid {
        if !grid.iter().any(|&s| (s + t).abs() <= 1e-12 * (1.0 + t.abs())) {
            return Err(Error::invalid(format!("grid is not symmetric about 0: missing −{t}")));
        }
    }
    let values = real_parts(sample)?;
    if values.is_empty() {
        return Err(Error::TooFewReplicates { required: 1, got: 0 });
    }
    let se = 1.0 / (values.len() as f64).sqrt();
    let mut sup: f64 = 0.0;
    let mut points = Vec::with_capacity(grid.len());
    for &t in grid {
        let emp = empirical_cf(&values, t);
        let refv = reference(t)?;
        let d = (emp - refv).norm();
        sup = sup.max(d);
        points.push(json!({ "t": t, "empirical": [emp.re, emp.im], "reference": [refv.re, refv.im], "distance": d }));
    }
    Ok(TestReport::new(
        name,
        json!({ "replicates": values.len(), "standard_error_per_point": se, "points": points }),
        json!("reference characteristic function"),
        sup,
        threshold,
    ))
}

/// Regression baseline `C(θ) = 2 + 5θ(1+θ)` for `E[(Σ|a_ℓ − W_ℓ|)²]`.
///
/// Calibrated with 10⁴ chains per point at n ∈ {10², 10³, 10⁴}: the
/// measured second moments are about 2.0, 4.9, 16.6 and 69 at θ = 0.5, 1,
/// 2 and 4, independent of n.
pub fn default_coupling_baseline(theta: f64) -> f64 {
    2.0 + 5.0 * theta * (1.0 + theta)
}

/// Second moment of the coupling discrepancy at one `(n, θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingEstimate {
    pub n: u64,
    pub theta: f64,
    pub second_moment: f64,
    pub se: f64,
    pub mean_discrepancy: f64,
}

pub fn coupling_estimate(n: u64, theta: f64, replicates: u64, seed: u64) -> Result<CouplingEstimate> {
    let cfg = EnsembleConfig::new(Statistic::CoupledDiscrepancy, n, 0.5, theta, replicates);
    let sample = run_ensemble(&cfg, seed)?;
    let d = sample.real_values()?;
    let squares: Vec<f64> = d.iter().map(|x| x * x).collect();
    let m2 = estimate_moments(&squares)?;
    let m1 = estimate_moments(&d)?;
    Ok(CouplingEstimate { n, theta, second_moment: m2.mean, se: m2.se_mean, mean_discrepancy: m1.mean })
}

/// `E[(Σ|a_ℓ − W_ℓ|)²]` at one `n`, checked against a regression baseline.
pub fn coupling_discrepancy(n: u64, theta: f64, replicates: u64, seed: u64, baseline: f64) -> Result<(CouplingEstimate, TestReport)> {
    let est = coupling_estimate(n, theta, replicates, seed)?;
    let report = TestReport::new(
        format!("coupling_second_moment[n={n},theta={theta}]"),
        serde_json::to_value(est).expect("plain struct"),
        json!({ "baseline": baseline }),
        est.second_moment,
        baseline,
    );
    Ok((est, report))
}

/// No increasing trend: the largest estimate exceeds the smallest by at most
/// twice their combined standard error.
pub fn coupling_trend(theta: f64, estimates: &[CouplingEstimate]) -> Result<TestReport> {
    if estimates.len() < 2 {
        return Err(Error::invalid("trend needs at least two values of n"));
    }
    let hi = estimates.iter().max_by(|a, b| a.second_moment.total_cmp(&b.second_moment)).expect("non-empty");
    let lo = estimates.iter().min_by(|a, b| a.second_moment.total_cmp(&b.second_moment)).expect("non-empty");
    Ok(TestReport::new(
        format!("coupling_no_growth[theta={theta}]"),
        serde_json::to_value(estimates).expect("plain structs"),
        json!("bounded in n"),
        hi.second_moment - lo.second_moment,
        2.0 * (hi.se * hi.se + lo.se * lo.se).sqrt(),
    ))
}

/// Sub-seed for the `k`-th ensemble of an experiment.
pub fn sub_seed(master: u64, k: u64) -> u64 {
    derive_seed(master, u64::MAX - k)
}

/// Mean and variance of the aggregate `Σ_{ℓδ<1} W_ℓ` against `θH(δ)`.
pub fn poisson_aggregate_reports(theta: f64, delta: f64, replicates: u64, seed: u64) -> Result<(EmpiricalSample, Vec<TestReport>)> {
    let cfg = EnsembleConfig::new(Statistic::PoissonAggregate, 1, delta, theta, replicates);
    let sample = run_ensemble(&cfg, seed)?;
    let m = estimate_moments(&sample.real_values()?)?;
    let lambda = theta * harmonic_below(delta)?;
    let reports = vec![
        TestReport::new(
            "poisson_aggregate_mean",
            json!({ "mean": m.mean, "se": m.se_mean }),
            json!(lambda),
            (m.mean - lambda).abs(),
            4.0 * m.se_mean,
        ),
        TestReport::new(
            "poisson_aggregate_variance",
            json!({ "variance": m.variance, "se": m.se_variance }),
            json!(lambda),
            (m.variance - lambda).abs(),
            4.0 * m.se_variance,
        ),
    ];
    Ok((sample, reports))
}

/// `δ` as a literal or as `δ = n^{−ε}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaRule {
    Literal(f64),
    Exponent(f64),
}

impl DeltaRule {
    pub fn delta(&self, n: u64) -> f64 {
        match *self {
            DeltaRule::Literal(d) => d,
            DeltaRule::Exponent(e) => (n as f64).powf(-e),
        }
    }

    /// `δ ∈ (0, 1)` and `nδ > 1`.
    pub fn validate(&self, n: u64) -> Result<f64> {
        let d = self.delta(n);
        if !(d > 0.0 && d < 1.0) {
            return Err(Error::invalid(format!("δ = {d} at n = {n} is outside (0, 1)")));
        }
        if !(n as f64 * d > 1.0) {
            return Err(Error::invalid(format!("nδ = {} at n = {n} must exceed 1", n as f64 * d)));
        }
        Ok(d)
    }
}

/// How to standardize `X` before comparing it with `N(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Standardization {
    Predicted,
    Empirical,
}

#[derive(Debug, Clone)]
pub struct CltExperiment {
    pub f: TestFunction,
    pub theta: f64,
    pub ns: Vec<u64>,
    pub delta: DeltaRule,
    pub replicates: u64,
    pub tol: f64,
    pub mean_band: f64,
    pub variance_band_factor: f64,
    pub standardization: Standardization,
    /// `θ` is chosen so that `θH(δ)` equals this rate for the aggregate check.
    pub aggregate_rate: f64,
    pub aggregate_delta: f64,
    pub aggregate_ks_threshold: f64,
}

impl CltExperiment {
    pub fn new(f: TestFunction) -> Self {
        Self {
            f,
            theta: 1.0,
            ns: vec![1_000, 10_000, 100_000],
            delta: DeltaRule::Exponent(0.5),
            replicates: 10_000,
            tol: DEFAULT_TOL,
            mean_band: 5.0,
            variance_band_factor: 3.0,
            standardization: Standardization::Predicted,
            aggregate_rate: 100.0,
            aggregate_delta: 1e-3,
            aggregate_ks_threshold: 0.05,
        }
    }
}

pub struct ExperimentOutcome {
    pub reports: Vec<TestReport>,
    pub samples: Vec<EmpiricalSample>,
}

/// Standardized Poisson aggregate at rate `λ = θH(δ)` against `N(0, 1)`.
pub fn poisson_aggregate_normality(rate: f64, delta: f64, replicates: u64, seed: u64, threshold: f64) -> Result<(EmpiricalSample, TestReport)> {
    let h = harmonic_below(delta)?;
    let theta = rate / h;
    let cfg = EnsembleConfig::new(Statistic::PoissonAggregate, 1, delta, theta, replicates);
    let sample = run_ensemble(&cfg, seed)?;
    let z: Vec<Complex64> = sample.values.iter().map(|v| (v - rate) / rate.sqrt()).collect();
    let mut report = ks_normal("poisson_aggregate_normality", &z, threshold)?;
    report.reference = json!({ "distribution": "standard normal", "rate": rate, "theta": theta });
    Ok((sample, report))
}

/// Number of indices where `values` fails to decrease strictly.
pub fn monotone_violations(values: &[f64]) -> usize {
    values.windows(2).filter(|w| !(w[1] < w[0])).count()
}

pub fn clt_experiment(exp: &CltExperiment, seed: u64) -> Result<ExperimentOutcome> {
    let mut reports = Vec::new();
    let mut samples = Vec::new();
    let (agg, report) = poisson_aggregate_normality(
        exp.aggregate_rate,
        exp.aggregate_delta,
        exp.replicates,
        sub_seed(seed, 0),
        exp.aggregate_ks_threshold,
    )?;
    reports.push(report);
    samples.push(agg);

    let mut ks_values = Vec::new();
    for (k, &n) in exp.ns.iter().enumerate() {
        let delta = exp.delta.validate(n)?;
        let pred = clt_parameters(n, delta, exp.theta, &exp.f)?;
        let cfg = EnsembleConfig::new(Statistic::Full, n, delta, exp.theta, exp.replicates)
            .with_fn(exp.f.clone())
            .with_tol(exp.tol);
        let sample = run_ensemble(&cfg, sub_seed(seed, k as u64 + 1))?;
        let values = sample.real_values()?;
        let m = estimate_moments(&values)?;
        let (mu, var) = match exp.standardization {
            Standardization::Predicted => (pred.mean.re, pred.variance),
            Standardization::Empirical => (m.mean, m.variance),
        };
        let z: Vec<f64> = values.iter().map(|x| (x - mu) / var.sqrt()).collect();
        let ks = ks_normal_distance(&z);
        ks_values.push(ks);
        reports.push(TestReport::new(
            format!("clt_mean[n={n}]"),
            json!({ "mean": m.mean, "se": m.se_mean, "delta": delta }),
            json!({ "prediction": pred.mean.re, "band": exp.mean_band }),
            (m.mean - pred.mean.re).abs(),
            exp.mean_band + 4.0 * m.se_mean,
        ));
        let vband = exp.variance_band_factor * pred.harmonic.sqrt();
        reports.push(TestReport::new(
            format!("clt_variance[n={n}]"),
            json!({ "variance": m.variance, "se": m.se_variance, "delta": delta }),
            json!({ "prediction": pred.variance, "band": vband }),
            (m.variance - pred.variance).abs(),
            vband + 4.0 * m.se_variance,
        ));
        samples.push(sample);
    }
    reports.push(TestReport::new(
        "clt_ks_trend",
        json!({ "ns": exp.ns, "ks": ks_values, "standardization": exp.standardization }),
        json!("strictly decreasing in n"),
        monotone_violations(&ks_values) as f64,
        0.0,
    ));
    Ok(ExperimentOutcome { reports, samples })
}

#[derive(Debug, Clone)]
pub struct LimitExperiment {
    pub f: TestFunction,
    pub theta: f64,
    pub n: u64,
    pub delta: DeltaRule,
    pub replicates: u64,
    pub window: (f64, f64),
    pub tol: f64,
    pub t_grid: Vec<f64>,
    pub cf_threshold: f64,
    pub ks_threshold: f64,
}

impl LimitExperiment {
    pub fn new(f: TestFunction) -> Self {
        Self {
            f,
            theta: 1.0,
            n: 100_000,
            delta: DeltaRule::Exponent(0.6),
            replicates: 10_000,
            window: (1e-3, 1e3),
            tol: DEFAULT_TOL,
            t_grid: symmetric_grid(5.0, 0.25),
            cf_threshold: 0.05,
            ks_threshold: 0.05,
        }
    }
}

/// `X − nδf̂(0)` against the Campbell characteristic function and against
/// direct draws of the limit `Z`.
pub fn limit_experiment(exp: &LimitExperiment, seed: u64) -> Result<ExperimentOutcome> {
    let delta = exp.delta.validate(exp.n)?;
    let spec = LimitLawSpec::new(exp.theta, exp.f.clone(), exp.window, exp.tol)?;
    let xcfg = EnsembleConfig::new(Statistic::Full, exp.n, delta, exp.theta, exp.replicates)
        .with_fn(exp.f.clone())
        .centered(true)
        .with_tol(exp.tol);
    let x = run_ensemble(&xcfg, sub_seed(seed, 0))?;
    let zcfg = EnsembleConfig::new(Statistic::LimitZ, exp.n, delta, exp.theta, exp.replicates)
        .with_fn(exp.f.clone())
        .with_window(exp.window)
        .with_tol(exp.tol);
    let z = run_ensemble(&zcfg, sub_seed(seed, 1))?;

    let cf = |t: f64| campbell_cf(&spec, t);
    let mut reports = vec![cf_distance("limit_cf_distance", &x.values, cf, &exp.t_grid, exp.cf_threshold)?];
    reports.push(ks_two_sample("limit_ks_vs_z", &x.values, &z.values, exp.ks_threshold)?);
    let self_threshold = 4.0 / (exp.replicates as f64).sqrt();
    reports.push(cf_distance("limit_z_self_consistency", &z.values, cf, &exp.t_grid, self_threshold)?);
    Ok(ExperimentOutcome { reports, samples: vec![x, z] })
}

#[derive(Debug, Clone)]
pub struct CounterexampleConfig {
    pub replicates: u64,
    pub cauchy_ns: Vec<u64>,
    pub hump_ns: Vec<u64>,
    pub drift_level: f64,
    pub full_band: f64,
    pub ratio_band: f64,
    pub final_ratio_band: f64,
    pub tol: f64,
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        Self {
            replicates: 200,
            cauchy_ns: vec![10_000, 100_000, 1_000_000],
            hump_ns: vec![100_000, 1_000_000],
            drift_level: 10.0,
            full_band: 10.0,
            ratio_band: 0.3,
            final_ratio_band: 0.25,
            tol: DEFAULT_TOL,
        }
    }
}

/// The slowly decaying and the `X′`-only counterexamples.
///
/// With `f = 1/(1+|x|)` and `δ = n^{−1/2}`, `X′/(2nδ log(1/δ))` tends to 1.
/// With `f = x²/(1+x⁴)` and `δ = n^{−1/3}`, `X′ − nδf̂(0)` drifts to `−∞`
/// like `nδ²` while `X − nδf̂(0)` stays tight.
pub fn counterexample_suite(
    cauchy: &TestFunction,
    hump: &TestFunction,
    config: &CounterexampleConfig,
    seed: u64,
) -> Result<ExperimentOutcome> {
    let mut reports = Vec::new();
    let mut samples = Vec::new();
    let mut k = 0u64;

    let mut medians = Vec::new();
    for &n in &config.cauchy_ns {
        let delta = (n as f64).powf(-0.5);
        let cfg = EnsembleConfig::new(Statistic::Principal, n, delta, 1.0, config.replicates).with_fn(cauchy.clone());
        let sample = run_ensemble(&cfg, sub_seed(seed, k))?;
        k += 1;
        let scale = 2.0 * n as f64 * delta * (1.0 / delta).ln();
        let ratios: Vec<f64> = sample.real_values()?.iter().map(|x| x / scale).collect();
        medians.push(median(&ratios));
        samples.push(sample);
    }
    let gaps: Vec<f64> = medians.iter().map(|m| (m - 1.0).abs()).collect();
    reports.push(TestReport::new(
        "cauchy_ratio_trend",
        json!({ "ns": config.cauchy_ns, "median_ratios": medians }),
        json!("|median − 1| strictly decreasing"),
        monotone_violations(&gaps) as f64,
        0.0,
    ));
    let last = *medians.last().ok_or_else(|| Error::invalid("no cauchy sizes"))?;
    reports.push(TestReport::new(
        "cauchy_ratio_final",
        json!({ "median_ratio": last }),
        json!(1.0),
        (last - 1.0).abs(),
        config.final_ratio_band,
    ));

    let mut principal_medians = Vec::new();
    let mut full_medians = Vec::new();
    for &n in &config.hump_ns {
        let delta = (n as f64).powf(-1.0 / 3.0);
        let pcfg = EnsembleConfig::new(Statistic::Principal, n, delta, 1.0, config.replicates)
            .with_fn(hump.clone())
            .centered(true);
        let p = run_ensemble(&pcfg, sub_seed(seed, k))?;
        let fcfg = EnsembleConfig::new(Statistic::Full, n, delta, 1.0, config.replicates)
            .with_fn(hump.clone())
            .centered(true)
            .with_tol(config.tol);
        let f = run_ensemble(&fcfg, sub_seed(seed, k + 1))?;
        k += 2;
        principal_medians.push(median(&p.real_values()?));
        full_medians.push(median(&f.real_values()?));
        samples.push(p);
        samples.push(f);
    }
    let n_last = *config.hump_ns.last().ok_or_else(|| Error::invalid("no hump sizes"))?;
    let pm = *principal_medians.last().expect("non-empty");
    let fm = *full_medians.last().expect("non-empty");
    reports.push(TestReport::new(
        format!("hump_principal_drift[n={n_last}]"),
        json!({ "median": pm }),
        json!({ "below": -config.drift_level }),
        pm + config.drift_level,
        0.0,
    ));
    reports.push(TestReport::new(
        format!("hump_full_tight[n={n_last}]"),
        json!({ "median": fm }),
        json!({ "band": config.full_band }),
        fm.abs(),
        config.full_band,
    ));
    if principal_medians.len() >= 2 {
        let m = principal_medians.len();
        let (n0, n1) = (config.hump_ns[m - 2] as f64, config.hump_ns[m - 1] as f64);
        let expected = (n1 / n0).powf(1.0 / 3.0);
        let ratio = principal_medians[m - 1] / principal_medians[m - 2];
        reports.push(TestReport::new(
            "hump_drift_scaling",
            json!({ "ns": config.hump_ns, "principal_medians": principal_medians, "ratio": ratio }),
            json!({ "expected_ratio": expected }),
            (ratio / expected - 1.0).abs(),
            config.ratio_band,
        ));
    }
    Ok(ExperimentOutcome { reports, samples })
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    replicate: u64,
    seed: u64,
    value_re: f64,
    value_im: f64,
}

/// Writes `replicate,seed,value_re,value_im`, one replicate per row.
pub fn write_csv(sample: &EmpiricalSample, path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    for (i, (v, s)) in sample.values.iter().zip(&sample.seeds).enumerate() {
        w.serialize(CsvRow { replicate: i as u64, seed: *s, value_re: v.re, value_im: v.im })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads back values and seeds written by [`write_csv`].
pub fn read_csv(path: &Path) -> Result<(Vec<Complex64>, Vec<u64>)> {
    let mut r = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let mut values = Vec::new();
    let mut seeds = Vec::new();
    for row in r.deserialize() {
        let row: CsvRow = row?;
        values.push(Complex64::new(row.value_re, row.value_im));
        seeds.push(row.seed);
    }
    Ok((values, seeds))
}

/// The JSON document emitted for every experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub experiment: String,
    pub config: Value,
    pub reports: Vec<TestReport>,
    pub library_version: String,
    pub elapsed_seconds: f64,
    /// Derived quantities that are not part of the configuration.
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub diagnostics: Value,
}

impl ExperimentRecord {
    pub fn all_pass(&self) -> bool {
        self.reports.iter().all(|r| r.verdict)
    }
}

pub fn write_json(record: &ExperimentRecord, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, record)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json(path: &Path) -> Result<ExperimentRecord> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// `1.36/√R`, the 5% critical value of the one-sample KS distance.
pub fn ks_critical_5pct(replicates: usize) -> f64 {
    1.358 / (replicates as f64).sqrt()
}
