//! Acceptance suite. Runs every criterion at its stated tolerance, prints one
//! PASS/FAIL line per criterion (with the underlying reports indented below
//! it) and exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use mesoperm::ewens::{
    exact_cycle_type_distribution, expected_cycle_count, partitions, psi_identities, replica_rng, sample_ewens,
};
use mesoperm::linstat::{
    characteristic_polynomial, dense_determinant, eigenangle_oracle, linear_statistic_full, linear_statistic_principal,
    oracle_window,
};
use mesoperm::montecarlo::{
    clt_experiment, counterexample_suite, coupling_estimate, coupling_trend, limit_experiment,
    poisson_aggregate_reports, CltExperiment, CounterexampleConfig, LimitExperiment, TestReport,
};
use mesoperm::testfn::builtin;
use mesoperm::{Complex64, Result};
use serde_json::json;

const SEED: u64 = 0x5eed_2024;

fn poisson_summation() -> Result<Vec<TestReport>> {
    let mut out = Vec::new();
    for (name, threshold) in [("gauss", 1e-8), ("bump_c2", 1e-6)] {
        let f = builtin(name)?;
        for x in [0.05, 0.1, 0.5, 1.0, 2.0, 10.0] {
            let r = f.poisson_summation_residual(x, 0.1 * threshold)?;
            out.push(TestReport::new(format!("residual[{name}, x={x}]"), json!(r), json!(0.0), r, threshold));
        }
    }
    Ok(out)
}

fn psi() -> Result<Vec<TestReport>> {
    let mut out = Vec::new();
    for n in [100u64, 10_000] {
        for theta in [0.5, 1.0, 2.0] {
            let s = psi_identities(n, theta)?;
            let s2: f64 = (1..=n).map(|j| 1.0 / (theta + j as f64 - 1.0)).sum();
            out.push(TestReport::new(
                format!("s1[n={n}, θ={theta}]"),
                json!(s.s1),
                json!(1.0 / theta),
                (s.s1 * theta - 1.0).abs(),
                1e-10,
            ));
            out.push(TestReport::new(format!("s2[n={n}, θ={theta}]"), json!(s.s2), json!(s2), ((s.s2 - s2) / s2).abs(), 1e-10));
        }
    }
    let s = psi_identities(1_000_000, 1.0)?;
    let target = std::f64::consts::PI.powi(2) / 6.0;
    out.push(TestReport::new("s3[n=1e6, θ=1]", json!(s.s3), json!(target), ((s.s3 - target) / target).abs(), 1e-3));
    Ok(out)
}

fn oracle() -> Result<Vec<TestReport>> {
    let f = builtin("gauss")?;
    let types = partitions(8);
    let mut out = vec![TestReport::new("cycle types of 8", json!(types.len()), json!(22), (types.len() as f64 - 22.0).abs(), 0.0)];
    let (mut stat, mut det) = (0.0f64, 0.0f64);
    for cc in &types {
        let closed = linear_statistic_full(cc, 0.2, &f, 1e-12)?.value;
        let window = oracle_window(cc, 0.2, &f, 1e-12)?;
        let brute = eigenangle_oracle(cc, 0.2, &f, window, false, 1e-12)?;
        stat = stat.max((closed - brute).norm());
        for x in [-1.0, -0.6, -0.1, 0.3, 0.8, 1.0] {
            det = det.max((characteristic_polynomial(cc, x)? - dense_determinant(cc, x)?).abs());
        }
    }
    out.push(TestReport::new("max |X − eigenangle sum|", json!(stat), json!(0.0), stat, 1e-8));
    out.push(TestReport::new("max |charpoly − det|", json!(det), json!(0.0), det, 1e-12));
    Ok(out)
}

fn exact_mean() -> Result<Vec<TestReport>> {
    let f = builtin("gauss")?;
    let (n, delta) = (20u64, 0.1);
    let mut out = Vec::new();
    for theta in [0.5, 1.5] {
        let mut formula = Complex64::new(0.0, 0.0);
        for l in 1..=n {
            formula += f.theta(1.0 / (l as f64 * delta), 1e-14)? * expected_cycle_count(n, l, theta)?;
        }
        let exact = exact_cycle_type_distribution(n, theta)?;
        let mut mean = Complex64::new(0.0, 0.0);
        for (cc, p) in &exact.entries {
            mean += linear_statistic_full(cc, delta, &f, 1e-14)?.value * *p;
        }
        let d = (formula - mean).norm();
        out.push(TestReport::new(format!("E[X] at θ={theta}"), json!(mean.re), json!(formula.re), d, 1e-10));
    }
    Ok(out)
}

fn aggregate_moments() -> Result<Vec<TestReport>> {
    Ok(poisson_aggregate_reports(1.0, 1e-3, 100_000, SEED ^ 5)?.1)
}

fn clt() -> Result<Vec<TestReport>> {
    Ok(clt_experiment(&CltExperiment::new(builtin("gauss")?), SEED ^ 6)?.reports)
}

fn limit() -> Result<Vec<TestReport>> {
    let outcome = limit_experiment(&LimitExperiment::new(builtin("gauss_zero")?), SEED ^ 7)?;
    Ok(outcome
        .reports
        .into_iter()
        .filter(|r| r.name == "limit_cf_distance" || r.name == "limit_ks_vs_z")
        .collect())
}

fn coupling() -> Result<Vec<TestReport>> {
    let mut estimates = Vec::new();
    for n in [100u64, 1_000, 10_000] {
        estimates.push(coupling_estimate(n, 1.0, 10_000, SEED ^ (8 << 32) ^ n)?);
    }
    Ok(vec![coupling_trend(1.0, &estimates)?])
}

fn principal_gap() -> Result<Vec<TestReport>> {
    let mut out = Vec::new();
    let g = builtin("gauss")?;
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let cc = sample_ewens(1_000, 1.0, &mut replica_rng(SEED ^ 9, i))?;
        let x = linear_statistic_full(&cc, 0.01, &g, 1e-12)?.value;
        let xp = linear_statistic_principal(&cc, 0.01, &g)?.value;
        worst = worst.max((x - xp).norm());
    }
    out.push(TestReport::new("gauss max |X − X′|", json!(worst), json!(0.0), worst, 1e-6));
    let b = builtin("bump_c2")?;
    let mut unequal = 0;
    for i in 0..100 {
        let cc = sample_ewens(1_000, 1.0, &mut replica_rng(SEED ^ 10, i))?;
        // support radius 1 < 1/(2δ) = 2.5
        let x = linear_statistic_full(&cc, 0.2, &b, 1e-12)?.value;
        let xp = linear_statistic_principal(&cc, 0.2, &b)?.value;
        if x != xp {
            unequal += 1;
        }
    }
    out.push(TestReport::new("bump_c2 X ≠ X′ count", json!(unequal), json!(0), unequal as f64, 0.0));
    Ok(out)
}

fn counterexamples() -> Result<Vec<TestReport>> {
    Ok(counterexample_suite(&builtin("cauchy_slow")?, &builtin("hump")?, &CounterexampleConfig::default(), SEED ^ 11)?.reports)
}

type Criterion = (&'static str, fn() -> Result<Vec<TestReport>>);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("poisson summation residuals", poisson_summation),
        ("psi identities", psi),
        ("eigenangle oracle equivalence, n = 8", oracle),
        ("exact mean of X, n = 20", exact_mean),
        ("poisson aggregate mean and variance", aggregate_moments),
        ("normal regime", clt),
        ("poisson-limit regime", limit),
        ("coupling discrepancy bounded in n", coupling),
        ("all vs principal determinations", principal_gap),
        ("counterexamples", counterexamples),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (verdict, details) = match run() {
            Ok(reports) => {
                let ok = !reports.is_empty() && reports.iter().all(|r| r.verdict);
                (ok, reports.iter().map(TestReport::line).collect::<Vec<_>>())
            }
            Err(e) => (false, vec![format!("error: {e}")]),
        };
        if !verdict {
            failed += 1;
        }
        println!(
            "{} criterion {:>2}: {name} ({:.1}s)",
            if verdict { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64()
        );
        for d in details {
            println!("    {d}");
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
