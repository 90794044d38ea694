//! `mesoperm`: reproducible experiments on linear statistics of random
//! permutation matrices. Each subcommand writes a JSON record of test
//! reports (and CSV files of raw replicate values) and exits 0 only when
//! every verdict passes.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use mesoperm::ewens::{partitions, psi_identities};
use mesoperm::limitlaw::Regime;
use mesoperm::linstat::{
    characteristic_polynomial, dense_determinant, eigenangle_oracle, linear_statistic_full, oracle_window,
    principal_regime_indicator,
};
use mesoperm::montecarlo::{
    clt_experiment, counterexample_suite, coupling_discrepancy, coupling_trend, default_coupling_baseline,
    limit_experiment, symmetric_grid, write_csv, write_json, CltExperiment, CounterexampleConfig, DeltaRule,
    EmpiricalSample, ExperimentOutcome, ExperimentRecord, LimitExperiment, TestReport,
};
use mesoperm::testfn::{builtin, BuiltinCatalog, TestFunction};
use mesoperm::{Error, LIBRARY_VERSION};
use serde_json::json;

use config::{merge, ConfigError, FileConfig, Flags, NList};

#[derive(Debug, Parser)]
#[command(name = "mesoperm", version, about = "Linear statistics of random permutation matrices at mesoscopic scales")]
struct Cli {
    #[command(flatten)]
    flags: Flags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Poisson summation, Ξ bounds and partial sums for test functions
    CheckFunctions,
    /// The three Ψ_n identities across (n, θ)
    PsiIdentities,
    /// Closed-form statistics against brute-force eigenangle sums for small n
    OracleCheck,
    /// Normal approximation when f(0) ≠ 0
    Clt,
    /// Poisson-process limit when f(0) = 0
    Limit,
    /// Feller coupling discrepancy across n
    Coupling,
    /// Slow decay and principal-determination counterexamples
    Counterexamples,
}

impl Command {
    fn id(self) -> &'static str {
        match self {
            Command::CheckFunctions => "check-functions",
            Command::PsiIdentities => "psi-identities",
            Command::OracleCheck => "oracle-check",
            Command::Clt => "clt",
            Command::Limit => "limit",
            Command::Coupling => "coupling",
            Command::Counterexamples => "counterexamples",
        }
    }
}

enum Failure {
    Config(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

type Run<T> = std::result::Result<T, Failure>;

fn function(name: &str) -> Run<TestFunction> {
    Ok(builtin(name)?)
}

fn delta_rule(cfg: &FileConfig) -> DeltaRule {
    match (cfg.delta, cfg.delta_exp) {
        (Some(d), _) => DeltaRule::Literal(d),
        (None, Some(e)) => DeltaRule::Exponent(e),
        (None, None) => unreachable!("defaults fill delta_exp"),
    }
}

/// Fills unset keys with the defaults of `command`.
fn resolve(mut cfg: FileConfig, command: Command) -> FileConfig {
    macro_rules! default {
        ($field:ident, $value:expr) => {
            if cfg.$field.is_none() {
                cfg.$field = Some($value);
            }
        };
    }
    default!(seed, 20240601);
    default!(out, PathBuf::from("out"));
    default!(gnuplot, false);
    match command {
        Command::CheckFunctions => {}
        Command::PsiIdentities => {
            default!(n, NList::Many(vec![100, 10_000]));
            default!(s3_n, 1_000_000);
            default!(s3_band, 1e-3);
        }
        Command::OracleCheck => {
            default!(fn_name, "gauss".to_string());
            default!(n, NList::Many((1..=8).collect()));
            default!(delta, 0.2);
            default!(tol, 1e-8);
        }
        Command::Clt => {
            let d = CltExperiment::new(builtin("gauss").expect("builtin"));
            default!(fn_name, "gauss".to_string());
            default!(theta, d.theta);
            default!(n, NList::Many(d.ns.clone()));
            default!(delta_exp, 0.5);
            default!(replicates, d.replicates);
            default!(tol, d.tol);
            default!(mean_band, d.mean_band);
            default!(variance_band_factor, d.variance_band_factor);
            default!(standardization, d.standardization);
            default!(aggregate_rate, d.aggregate_rate);
            default!(aggregate_delta, d.aggregate_delta);
            default!(ks_threshold, d.aggregate_ks_threshold);
        }
        Command::Limit => {
            let d = LimitExperiment::new(builtin("gauss_zero").expect("builtin"));
            default!(fn_name, "gauss_zero".to_string());
            default!(theta, d.theta);
            default!(n, NList::One(d.n));
            default!(delta_exp, 0.6);
            default!(replicates, d.replicates);
            default!(window_eps, d.window.0);
            default!(window_r, d.window.1);
            default!(t_max, 5.0);
            default!(t_step, 0.25);
            default!(tol, d.tol);
            default!(cf_threshold, d.cf_threshold);
            default!(ks_threshold, d.ks_threshold);
        }
        Command::Coupling => {
            default!(theta, 1.0);
            default!(n, NList::Many(vec![100, 1_000, 10_000]));
            default!(replicates, 10_000);
            let theta = cfg.theta.expect("set above");
            default!(baseline, default_coupling_baseline(theta));
        }
        Command::Counterexamples => {
            let d = CounterexampleConfig::default();
            default!(n, NList::Many(d.cauchy_ns.clone()));
            default!(replicates, d.replicates);
            default!(tol, d.tol);
        }
    }
    cfg
}

fn check_functions(cfg: &FileConfig) -> Run<Vec<TestReport>> {
    let fns: Vec<TestFunction> = match &cfg.fn_name {
        Some(name) => vec![function(name)?],
        None => BuiltinCatalog::global().iter().filter(|f| f.is_admissible()).cloned().collect(),
    };
    let mut reports = Vec::new();
    for f in fns {
        if !f.is_admissible() {
            return Err(Failure::Config(format!(
                "`{}` is not admissible: its periodisation does not converge absolutely",
                f.name()
            )));
        }
        let threshold = cfg.tol.unwrap_or(if f.support().is_some() { 1e-6 } else { 1e-8 });
        let xs = [0.05, 0.1, 0.5, 1.0, 2.0, 10.0];
        let mut worst: f64 = 0.0;
        let mut residuals = Vec::new();
        for x in xs {
            let r = f.poisson_summation_residual(x, 0.1 * threshold)?;
            residuals.push(json!({ "x": x, "residual": r }));
            worst = worst.max(r);
        }
        reports.push(TestReport::new(
            format!("poisson_summation[{}]", f.name()),
            json!(residuals),
            json!(0.0),
            worst,
            threshold,
        ));

        let c = f.xi_bound_constant()?;
        let mut ratio: f64 = 0.0;
        for i in 0..160 {
            // midpoints between the grid used to fit the constant, plus the far ends
            let x = 10f64.powf(-6.0 + 0.075 * i as f64 + 0.0375);
            ratio = ratio.max(f.xi(x, 1e-13)?.norm() / (c * x.min(1.0 / x)));
        }
        reports.push(TestReport::new(
            format!("xi_bound[{}]", f.name()),
            json!({ "constant": c, "max_ratio": ratio }),
            json!("|Ξ(x)| ≤ C·min(x, 1/x)"),
            ratio,
            1.01,
        ));

        let mut excess: f64 = 0.0;
        for x in [0.3, 1.0, 3.0] {
            let full = f.theta(x, 1e-13)?;
            for j in [11u64, 101, 1001] {
                let err = (f.theta_partial(j, x)? - full).norm();
                let bound = f.decay().series_tail(x, j / 2 - 1) + 1e-12;
                excess = excess.max(err / bound);
            }
        }
        reports.push(TestReport::new(
            format!("partial_sums[{}]", f.name()),
            json!({ "max_error_over_tail_bound": excess }),
            json!("error within the decay tail bound"),
            excess,
            1.0,
        ));
    }
    Ok(reports)
}

fn psi_check(cfg: &FileConfig) -> Run<Vec<TestReport>> {
    let thetas = match cfg.theta {
        Some(t) => vec![t],
        None => vec![0.5, 1.0, 2.0],
    };
    let mut reports = Vec::new();
    for n in cfg.n.as_ref().expect("resolved").to_vec() {
        for &theta in &thetas {
            let s = psi_identities(n, theta)?;
            let s2_ref: f64 = (1..=n).map(|j| 1.0 / (theta + j as f64 - 1.0)).sum();
            let d1 = (s.s1 * theta - 1.0).abs();
            let d2 = ((s.s2 - s2_ref) / s2_ref).abs();
            reports.push(TestReport::new(
                format!("psi_s1[n={n},theta={theta}]"),
                json!(s.s1),
                json!(1.0 / theta),
                d1,
                1e-10,
            ));
            reports.push(TestReport::new(format!("psi_s2[n={n},theta={theta}]"), json!(s.s2), json!(s2_ref), d2, 1e-10));
        }
    }
    let n3 = cfg.s3_n.expect("resolved");
    let s = psi_identities(n3, 1.0)?;
    let target = std::f64::consts::PI.powi(2) / 6.0;
    reports.push(TestReport::new(
        format!("psi_s3[n={n3},theta=1]"),
        json!(s.s3),
        json!(target),
        ((s.s3 - target) / target).abs(),
        cfg.s3_band.expect("resolved"),
    ));
    Ok(reports)
}

fn oracle_check(cfg: &FileConfig) -> Run<Vec<TestReport>> {
    let f = function(cfg.fn_name.as_deref().expect("resolved"))?;
    let delta = cfg.delta.expect("resolved");
    let tol = cfg.tol.expect("resolved");
    let mut reports = Vec::new();
    for n in cfg.n.as_ref().expect("resolved").to_vec() {
        if n == 0 || n > 8 {
            return Err(Failure::Config(format!("oracle-check covers 1 ≤ n ≤ 8, got {n}")));
        }
        let (mut stat_dev, mut det_dev) = (0.0f64, 0.0f64);
        let types = partitions(n);
        for cc in &types {
            let closed = linear_statistic_full(cc, delta, &f, 0.01 * tol)?.value;
            let window = oracle_window(cc, delta, &f, 0.01 * tol)?;
            let brute = eigenangle_oracle(cc, delta, &f, window, false, 0.01 * tol)?;
            stat_dev = stat_dev.max((closed - brute).norm());
            for x in [-0.9, -0.3, 0.2, 0.7, 1.0] {
                det_dev = det_dev.max((characteristic_polynomial(cc, x)? - dense_determinant(cc, x)?).abs());
            }
        }
        reports.push(TestReport::new(
            format!("oracle_statistic[n={n}]"),
            json!({ "cycle_types": types.len(), "max_deviation": stat_dev }),
            json!("eigenangle sum"),
            stat_dev,
            tol,
        ));
        reports.push(TestReport::new(
            format!("oracle_determinant[n={n}]"),
            json!({ "cycle_types": types.len(), "max_deviation": det_dev }),
            json!("dense determinant"),
            det_dev,
            1e-12,
        ));
    }
    Ok(reports)
}

fn clt(cfg: &FileConfig, seed: u64) -> Run<ExperimentOutcome> {
    let f = function(cfg.fn_name.as_deref().expect("resolved"))?;
    if Regime::of(&f) != Regime::Clt {
        return Err(Failure::Config(format!("`{}` vanishes at 0; use the `limit` experiment", f.name())));
    }
    let ns = cfg.n.as_ref().expect("resolved").to_vec();
    let rule = delta_rule(cfg);
    for &n in &ns {
        rule.validate(n)?;
    }
    let mut exp = CltExperiment::new(f);
    exp.theta = cfg.theta.expect("resolved");
    exp.ns = ns;
    exp.delta = rule;
    exp.replicates = cfg.replicates.expect("resolved");
    exp.tol = cfg.tol.expect("resolved");
    exp.mean_band = cfg.mean_band.expect("resolved");
    exp.variance_band_factor = cfg.variance_band_factor.expect("resolved");
    exp.standardization = cfg.standardization.expect("resolved");
    exp.aggregate_rate = cfg.aggregate_rate.expect("resolved");
    exp.aggregate_delta = cfg.aggregate_delta.expect("resolved");
    exp.aggregate_ks_threshold = cfg.ks_threshold.expect("resolved");
    Ok(clt_experiment(&exp, seed)?)
}

fn limit(cfg: &FileConfig, seed: u64) -> Run<ExperimentOutcome> {
    let f = function(cfg.fn_name.as_deref().expect("resolved"))?;
    if Regime::of(&f) != Regime::PoissonLimit {
        return Err(Failure::Config(format!("`{}` does not vanish at 0; use the `clt` experiment", f.name())));
    }
    let rule = delta_rule(cfg);
    let mut out = ExperimentOutcome { reports: Vec::new(), samples: Vec::new() };
    for (k, n) in cfg.n.as_ref().expect("resolved").to_vec().into_iter().enumerate() {
        rule.validate(n)?;
        let mut exp = LimitExperiment::new(f.clone());
        exp.theta = cfg.theta.expect("resolved");
        exp.n = n;
        exp.delta = rule;
        exp.replicates = cfg.replicates.expect("resolved");
        exp.window = (cfg.window_eps.expect("resolved"), cfg.window_r.expect("resolved"));
        exp.tol = cfg.tol.expect("resolved");
        exp.t_grid = symmetric_grid(cfg.t_max.expect("resolved"), cfg.t_step.expect("resolved"));
        exp.cf_threshold = cfg.cf_threshold.expect("resolved");
        exp.ks_threshold = cfg.ks_threshold.expect("resolved");
        let mut o = limit_experiment(&exp, mesoperm::montecarlo::sub_seed(seed, k as u64))?;
        for r in &mut o.reports {
            r.name = format!("{}[n={n}]", r.name);
        }
        out.reports.extend(o.reports);
        out.samples.extend(o.samples);
    }
    Ok(out)
}

fn coupling(cfg: &FileConfig, seed: u64) -> Run<ExperimentOutcome> {
    let theta = cfg.theta.expect("resolved");
    let baseline = cfg.baseline.expect("resolved");
    let replicates = cfg.replicates.expect("resolved");
    let mut reports = Vec::new();
    let mut estimates = Vec::new();
    for n in cfg.n.as_ref().expect("resolved").to_vec() {
        let (est, report) = coupling_discrepancy(n, theta, replicates, mesoperm::montecarlo::sub_seed(seed, n), baseline)?;
        estimates.push(est);
        reports.push(report);
    }
    if estimates.len() >= 2 {
        reports.push(coupling_trend(theta, &estimates)?);
    }
    Ok(ExperimentOutcome { reports, samples: Vec::new() })
}

fn counterexamples(cfg: &FileConfig, seed: u64) -> Run<ExperimentOutcome> {
    let mut c = CounterexampleConfig::default();
    let ns = cfg.n.as_ref().expect("resolved").to_vec();
    if ns.len() >= 2 {
        c.hump_ns = ns[ns.len() - 2..].to_vec();
    }
    c.cauchy_ns = ns;
    c.replicates = cfg.replicates.expect("resolved");
    c.tol = cfg.tol.expect("resolved");
    Ok(counterexample_suite(&function("cauchy_slow")?, &function("hump")?, &c, seed)?)
}

fn csv_name(command: Command, k: usize, sample: &EmpiricalSample) -> String {
    format!("{}_{k:02}_{}_n{}.csv", command.id(), sample.meta.statistic.id(), sample.meta.n)
}

fn write_gnuplot(path: &Path, csvs: &[String]) -> std::io::Result<()> {
    let mut s = String::from("set datafile separator ','\nset key autotitle columnhead\nbinwidth = 0.25\nbin(x) = binwidth * floor(x / binwidth)\n");
    for csv in csvs {
        s.push_str(&format!(
            "set title '{csv}'\nplot '{csv}' using (bin($3)):(1.0) smooth freq with boxes\npause -1\n"
        ));
    }
    std::fs::write(path, s)
}

/// Extra diagnostics echoed alongside the effective config.
fn diagnostics(cfg: &FileConfig, command: Command, csvs: &[String]) -> serde_json::Value {
    let mut d = match command {
        Command::Counterexamples => {
            let hump = builtin("hump").expect("builtin");
            let ns = cfg.n.as_ref().map(NList::to_vec).unwrap_or_default();
            json!({
                "principal_regime_indicator_hump": ns
                    .iter()
                    .map(|&n| json!({ "n": n, "n_delta_alpha": principal_regime_indicator(n, (n as f64).powf(-1.0 / 3.0), &hump) }))
                    .collect::<Vec<_>>()
            })
        }
        _ => json!({}),
    };
    d["csv_files"] = json!(csvs);
    d
}

fn run(cli: &Cli) -> Run<bool> {
    let start = Instant::now();
    let command = cli.command;
    let cfg = resolve(merge(&cli.flags, command.id())?, command);
    let seed = cfg.seed.expect("resolved");
    let out_dir = cfg.out.clone().expect("resolved");

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build()
        .map_err(|e| Failure::Config(format!("cannot start worker pool: {e}")))?;
    let outcome = pool.install(|| -> Run<ExperimentOutcome> {
        let reports_only = |r: Run<Vec<TestReport>>| r.map(|reports| ExperimentOutcome { reports, samples: Vec::new() });
        match command {
            Command::CheckFunctions => reports_only(check_functions(&cfg)),
            Command::PsiIdentities => reports_only(psi_check(&cfg)),
            Command::OracleCheck => reports_only(oracle_check(&cfg)),
            Command::Clt => clt(&cfg, seed),
            Command::Limit => limit(&cfg, seed),
            Command::Coupling => coupling(&cfg, seed),
            Command::Counterexamples => counterexamples(&cfg, seed),
        }
    })?;

    std::fs::create_dir_all(&out_dir).map_err(|e| Failure::Config(format!("cannot create {}: {e}", out_dir.display())))?;
    let mut csvs = Vec::new();
    for (k, sample) in outcome.samples.iter().enumerate() {
        let name = csv_name(command, k, sample);
        write_csv(sample, &out_dir.join(&name))?;
        csvs.push(name);
    }
    if cfg.gnuplot == Some(true) && !csvs.is_empty() {
        let gp = out_dir.join(format!("{}.gp", command.id()));
        write_gnuplot(&gp, &csvs).map_err(|e| Failure::Config(format!("cannot write {}: {e}", gp.display())))?;
    }
    let config = serde_json::to_value(&cfg).expect("plain config");
    let record = ExperimentRecord {
        experiment: command.id().to_string(),
        config,
        reports: outcome.reports,
        library_version: LIBRARY_VERSION.to_string(),
        elapsed_seconds: start.elapsed().as_secs_f64(),
        diagnostics: diagnostics(&cfg, command, &csvs),
    };
    let json_path = out_dir.join(format!("{}.json", command.id()));
    write_json(&record, &json_path)?;
    for r in &record.reports {
        println!("{}", r.line());
    }
    println!("wrote {}", json_path.display());
    Ok(record.all_pass())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(3)
        }
    }
}
