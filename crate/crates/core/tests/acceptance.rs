//! Acceptance suite. Each test covers one criterion and writes a single
//! `[PASS]` or `[FAIL]` line to stderr before asserting. The tests share a
//! lock so the timing benchmark never competes with other work.

mod common;

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::Mutex;
use std::time::Instant;

use common::*;
use embedded_laplace::harness::{
    benchmark_differentiation, fit, rank_local_scales, simulate_disease_map, simulate_sparse_glm, speedups,
    BenchmarkConfig, GradientMethod, RunConfig,
};
use embedded_laplace::kernels::{CovarianceModel, HorseshoeLinear, Intercept, Skim, SquaredExp};
use embedded_laplace::laplace::{grad_adjoint, grad_reference, newton_solve, posterior_covariance, LaplaceConfig};
use embedded_laplace::likelihoods::LikelihoodModel;
use embedded_laplace::models::TargetKind;
use embedded_laplace::sampler::{run_chains, SamplerConfig, SamplerRun};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|p| p.into_inner())
}

fn verdict(id: u32, title: &str, pass: bool, detail: String, started: Instant) {
    let line = format!(
        "[{}] criterion {id}: {title}: {detail} ({:.1} s)\n",
        if pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    // Written to the raw handle so the line survives output capture.
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {id} failed: {detail}");
}

/// `‖a − b‖∞ / ‖b‖∞`.
fn rel_inf(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax().max(f64::MIN_POSITIVE)
}

fn instance(k: usize, rng: &mut impl Rng) -> Fixture {
    match k % 4 {
        0 => disease_map(rng.random_range(5..16), rng),
        1 => sparse_glm(rng.random_range(8..16), rng.random_range(3..9), rng),
        2 => skim_poisson(rng.random_range(6..13), rng.random_range(2..7), rng),
        _ => skim_bernoulli(rng.random_range(6..13), rng.random_range(2..7), rng),
    }
}

#[test]
fn criterion_1_adjoint_equals_reference() {
    let _g = serial();
    let t = Instant::now();
    let mut rng = rng(1001);
    let mut worst: f64 = 0.0;
    let mut sweeps_ok = true;
    for k in 0..100 {
        let f = instance(k, &mut rng);
        let state = newton_solve(&f.lik, &f.cov, &f.phi, &tight()).unwrap();
        let r = grad_reference(&state, &f.lik, &f.cov, &f.phi).unwrap();
        let a = grad_adjoint(&state, &f.lik, &f.cov, &f.phi).unwrap();
        worst = worst.max(rel_inf(&a.gradient, &r.gradient));
        sweeps_ok &= a.kernel_sweeps == 1 && r.kernel_sweeps == f.phi.len();
    }
    verdict(
        1,
        "adjoint/reference equivalence on 100 instances",
        worst <= 1e-8 && sweeps_ok,
        format!("max relative difference {worst:.2e} <= 1e-8, sweep counts exact: {sweeps_ok}"),
        t,
    );
}

#[test]
fn criterion_2_differentiation_scaling() {
    let _g = serial();
    let t = Instant::now();
    let records = benchmark_differentiation(&BenchmarkConfig::default()).unwrap();
    let ratios = speedups(&records);
    let ratio_at = |p: usize| ratios.iter().find(|(q, _)| *q == p).unwrap().1;
    let reference_at = |p: usize| {
        records
            .iter()
            .find(|r| r.p == p && r.method == GradientMethod::Reference)
            .unwrap()
            .seconds_per_call
    };
    let monotone = ratios.windows(2).all(|w| w[1].1 >= w[0].1);
    let fast = ratio_at(200) >= 10.0;
    let small = (0.2..=5.0).contains(&ratio_at(2));
    let linear = reference_at(200) >= 10.0 * reference_at(20);
    let listing: Vec<String> = ratios.iter().map(|(p, r)| format!("p={p}: {r:.1}x")).collect();
    verdict(
        2,
        "adjoint speedup grows with p, >= 10x at p=200",
        monotone && fast && small && linear,
        format!(
            "{} (monotone {monotone}, p=2 in [0.2, 5] {small}, reference 200/20 = {:.1})",
            listing.join(", "),
            reference_at(200) / reference_at(20)
        ),
        t,
    );
}

#[test]
fn criterion_3_gaussian_exactness() {
    let _g = serial();
    let t = Instant::now();
    let mut rng = rng(1003);
    let (mut lm_err, mut grad_err): (f64, f64) = (0.0, 0.0);
    for k in 0..50 {
        let n = rng.random_range(3..10);
        let cov = match k % 3 {
            0 => {
                let pts = DMatrix::from_fn(n, 2, |_, _| rng.random_range(0.0..1.0));
                CovarianceModel::SquaredExp(SquaredExp::new(&pts).unwrap())
            }
            1 => CovarianceModel::HorseshoeLinear(
                HorseshoeLinear::new(normal_matrix(n, 4, &mut rng), 2.0, 1.0, Intercept::Identity).unwrap(),
            ),
            _ => CovarianceModel::Skim(Skim::new(normal_matrix(n, 3, &mut rng) * 0.5, 2.0, 1.0).unwrap()),
        };
        let dim = embedded_laplace::kernels::Covariance::n_params(&cov);
        let phi = DVector::from_fn(dim, |_, _| rng.random_range(0.4..1.5));
        let sigma = rng.random_range(0.2..2.0);
        let counts: Vec<u32> = (0..n).map(|_| rng.random_range(1..4)).collect();
        let sums: Vec<f64> = counts.iter().map(|&c| rng.random_range(-2.0..2.0) * c as f64).collect();
        let lik = LikelihoodModel::gaussian_test(&sums, &counts, sigma).unwrap();
        let cfg = LaplaceConfig::default();
        let state = newton_solve(&lik, &cov, &phi, &cfg).unwrap();
        let noise = DVector::from_iterator(n, counts.iter().map(|&c| sigma * sigma / c as f64));
        let ybar = DVector::from_iterator(n, sums.iter().zip(&counts).map(|(s, &c)| s / c as f64));
        let (lm, g) = gaussian_oracle(&cov, &phi, &ybar, &noise, cfg.jitter);
        lm_err = lm_err.max((state.log_marginal - lm).abs());
        let a = grad_adjoint(&state, &lik, &cov, &phi).unwrap().gradient;
        let r = grad_reference(&state, &lik, &cov, &phi).unwrap().gradient;
        grad_err = grad_err.max(rel_inf(&a, &g)).max(rel_inf(&r, &g));
    }
    verdict(
        3,
        "gaussian likelihood matches the closed form on 50 instances",
        lm_err <= 1e-8 && grad_err <= 1e-8,
        format!("max |log marginal error| {lm_err:.2e} <= 1e-8, max gradient relative error {grad_err:.2e} <= 1e-8"),
        t,
    );
}

#[test]
fn criterion_4_quadrature() {
    let _g = serial();
    let t = Instant::now();
    let mut rng = rng(1004);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let pts = DMatrix::from_fn(2, 2, |_, _| rng.random_range(0.0..1.0));
        let cov = CovarianceModel::SquaredExp(SquaredExp::new(&pts).unwrap());
        let phi = DVector::from_vec(vec![rng.random_range(0.5..1.5), rng.random_range(0.3..1.0)]);
        let e = [rng.random_range(2e4..4e4), rng.random_range(2e4..4e4)];
        let y: Vec<f64> = e.iter().map(|&v| (v * rng.random_range(0.5f64..2.0)).round()).collect();
        let lik = LikelihoodModel::poisson_log(&y, &[1, 1], Some(&e)).unwrap();
        let state = newton_solve(&lik, &cov, &phi, &LaplaceConfig::default()).unwrap();
        let q = quadrature_log_marginal(&y, &e, &state.k, &state.theta, &posterior_covariance(&state));
        worst = worst.max((state.log_marginal - q).abs());
    }
    verdict(
        4,
        "n=2 poisson log marginal vs grid quadrature on 10 instances",
        worst <= 1e-4,
        format!("max |difference| {worst:.2e} <= 1e-4"),
        t,
    );
}

#[test]
fn criterion_5_finite_differences() {
    let _g = serial();
    let t = Instant::now();
    let mut rng = rng(1005);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for _ in 0..4 {
        for f in all_fixtures(&mut rng) {
            let state = newton_solve(&f.lik, &f.cov, &f.phi, &tight()).unwrap();
            let fd = central_difference(&f, &tight());
            let r = grad_reference(&state, &f.lik, &f.cov, &f.phi).unwrap().gradient;
            let a = grad_adjoint(&state, &f.lik, &f.cov, &f.phi).unwrap().gradient;
            worst = worst.max(rel_err(&r, &fd)).max(rel_err(&a, &fd));
            count += 1;
        }
    }
    verdict(
        5,
        "both gradients vs central differences on every fixture family",
        worst <= 1e-5,
        format!("{count} fixtures, max relative error {worst:.2e} <= 1e-5"),
        t,
    );
}

fn run_config(dir: &Path, seed: u64, model: serde_json::Value, prefix: &str, method: TargetKind) -> RunConfig {
    let mut cfg: RunConfig = serde_json::from_value(serde_json::json!({
        "seed": seed,
        "model": model,
        "sampler": { "num_warmup": 500, "num_samples": 500, "num_chains": 4, "target_accept": 0.8 },
        "output": { "prefix": dir.join(prefix) }
    }))
    .unwrap();
    cfg.method = method;
    cfg
}

fn mean_and_mcse(run: &SamplerRun, name: &str) -> (f64, f64) {
    let j = run.draws.column_index(name).unwrap();
    let s = embedded_laplace::diagnostics::summarize(&run.draws).unwrap().swap_remove(j);
    (s.mean, s.mcse_mean.unwrap())
}

#[test]
fn criterion_6_disease_map_methods_agree() {
    let _g = serial();
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("map.csv");
    simulate_disease_map(50, 1.0, 0.3, 11).unwrap().data.write_csv_file(&data).unwrap();
    let model = serde_json::json!({
        "kind": "disease-map", "data": data,
        "priors": { "alpha_shape": 2.0, "alpha_scale": 2.0, "rho_shape": 2.0, "rho_scale": 2.0 }
    });
    let lap = fit(&run_config(dir.path(), 3, model.clone(), "laplace", TargetKind::Laplace)).unwrap();
    let full = fit(&run_config(dir.path(), 3, model, "full", TargetKind::FullJoint)).unwrap();
    let mut pass = lap.run.total_divergences() == 0;
    let mut detail = vec![format!("laplace divergences {}", lap.run.total_divergences())];
    for name in ["alpha", "rho"] {
        let (ml, sl) = mean_and_mcse(&lap.run, name);
        let (mf, sf) = mean_and_mcse(&full.run, name);
        let band = 3.0 * (sl * sl + sf * sf).sqrt();
        pass &= (ml - mf).abs() <= band;
        detail.push(format!("{name}: {ml:.4} vs {mf:.4}, |diff| {:.4} <= {band:.4}", (ml - mf).abs()));
    }
    verdict(6, "laplace and full-joint posteriors agree on a disease map", pass, detail.join("; "), t);
}

#[test]
fn criterion_7_planted_covariates_are_selected() {
    let _g = serial();
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("glm.csv");
    let sim = simulate_sparse_glm(30, 200, 3, 22).unwrap();
    sim.data.write_csv_file(&data).unwrap();
    let model = serde_json::json!({ "kind": "sparse-glm", "data": data, "intercept": "shared" });
    let truth = &sim.truth.true_indices;
    let mut pass = true;
    let mut detail = Vec::new();
    for (method, label) in [(TargetKind::Laplace, "laplace"), (TargetKind::FullJoint, "full-joint")] {
        let out = fit(&run_config(dir.path(), 1, model.clone(), label, method)).unwrap();
        let ranked = rank_local_scales(&out.run.draws, 0.9).unwrap();
        let ranks: Vec<usize> = truth
            .iter()
            .map(|i| ranked.iter().position(|r| r.index == *i).unwrap())
            .collect();
        pass &= ranks.iter().all(|&r| r < 6);
        detail.push(format!("{label} ranks {ranks:?}"));
    }
    verdict(
        7,
        "all 3 planted covariates in the top 6 by q90 of log lambda",
        pass,
        format!("planted {truth:?}; {}", detail.join(", ")),
        t,
    );
}

fn mean_accept(run: &SamplerRun) -> f64 {
    run.draws.stats.iter().map(|s| s.accept_stat).sum::<f64>() / run.draws.rows() as f64
}

#[test]
fn criterion_8_sampler_calibration() {
    let _g = serial();
    let t = Instant::now();
    let mut detail = Vec::new();
    let mut pass = true;

    let std10 = Diagonal(vec![1.0; 10]);
    let base = SamplerConfig { num_warmup: 1000, num_samples: 1000, num_chains: 4, seed: 81, ..Default::default() };
    let run = run_chains(&std10, &base).unwrap();
    let accept = mean_accept(&run);
    let metric_ok = run.chains.iter().flat_map(|c| &c.inv_metric).all(|m| (0.5..=2.0).contains(m));
    pass &= (0.7..=0.9).contains(&accept) && metric_ok && run.total_divergences() == 0;
    detail.push(format!("10-d accept {accept:.3}, metric in [0.5, 2] {metric_ok}"));

    let strict = run_chains(&std10, &SamplerConfig { target_accept: 0.99, ..base.clone() }).unwrap();
    let strict_accept = mean_accept(&strict);
    let smaller = strict.chains[0].stepsize < run.chains[0].stepsize;
    pass &= strict_accept >= 0.95 && smaller;
    detail.push(format!("accept at 0.99 target {strict_accept:.3}, smaller step {smaller}"));

    let one = run_chains(&Diagonal(vec![1.0]), &SamplerConfig { num_samples: 2500, ..base.clone() }).unwrap();
    let moments = std::panic::catch_unwind(|| moments_within_mcse(&one.draws.by_chain(0), 0.0, 1.0)).is_ok();
    pass &= moments;
    detail.push(format!("1-d mean and variance within 3 MCSE {moments}"));

    let corr = run_chains(&Correlated(0.9), &SamplerConfig { seed: 82, ..base.clone() }).unwrap();
    let rhat = (0..2)
        .map(|j| embedded_laplace::diagnostics::split_rhat(&corr.draws.by_chain(j)).unwrap().unwrap())
        .fold(0.0f64, f64::max);
    pass &= rhat < 1.01;
    detail.push(format!("correlated 2-d max split R-hat {rhat:.4}"));

    let scales: Vec<f64> = (0..50).map(|i| 10f64.powf(-1.0 + 2.0 * i as f64 / 49.0)).collect();
    let ill = run_chains(&Diagonal(scales), &SamplerConfig { num_samples: 500, seed: 83, ..base }).unwrap();
    pass &= ill.total_divergences() == 0;
    detail.push(format!("ill-scaled 50-d divergences {}", ill.total_divergences()));

    verdict(8, "sampler calibration on known Gaussians", pass, detail.join("; "), t);
}

fn elaplace(args: &[&str], cwd: &Path) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_elaplace"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap();
    assert!(out.status.success(), "elaplace {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

fn json_without_timing(bytes: &[u8]) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
    v.as_object_mut().unwrap().remove("timing");
    v
}

/// Benchmark CSV with the wall-clock columns blanked.
fn benchmark_without_timing(bytes: &[u8]) -> Vec<Vec<String>> {
    let mut reader = csv::Reader::from_reader(bytes);
    let headers = reader.headers().unwrap().clone();
    reader
        .records()
        .map(|r| {
            r.unwrap()
                .iter()
                .zip(headers.iter())
                .map(|(v, h)| if h == "seconds_per_call" || h == "batch" { String::new() } else { v.to_string() })
                .collect()
        })
        .collect()
}

#[test]
fn criterion_9_cli_determinism() {
    let _g = serial();
    let t = Instant::now();
    let runs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for dir in &runs {
        let d = dir.path();
        elaplace(&["simulate", "--model", "disease-map", "--n", "10", "--seed", "4", "--out", "map.csv", "--truth", "map.json"], d);
        elaplace(&["simulate", "--model", "sparse-glm", "--n", "12", "--p", "8", "--seed", "4", "--out", "glm.csv"], d);
        elaplace(&["simulate", "--model", "skim", "--n", "12", "--p", "8", "--seed", "4", "--out", "skim.csv"], d);
        std::fs::write(
            d.join("run.json"),
            r#"{ "seed": 9,
                 "model": { "kind": "disease-map", "data": "map.csv",
                            "priors": { "alpha_shape": 2, "alpha_scale": 2, "rho_shape": 2, "rho_scale": 2 } },
                 "sampler": { "num_warmup": 150, "num_samples": 100, "num_chains": 2 },
                 "output": { "prefix": "fit" } }"#,
        )
        .unwrap();
        elaplace(&["fit", "--config", "run.json"], d);
        elaplace(&["fit", "--config", "run.json", "--method", "full", "--out-prefix", "full"], d);
        elaplace(&["benchmark", "--p-grid", "2,4", "--n", "6", "--reps", "20", "--out", "bench.csv"], d);
        let diag = elaplace(&["diagnose", "--draws", "fit.draws.csv"], d);
        std::fs::write(d.join("diagnose.json"), diag.stdout).unwrap();
    }
    let (a, b) = (runs[0].path(), runs[1].path());
    let mut identical = Vec::new();
    for name in ["map.csv", "map.json", "glm.csv", "skim.csv", "fit.draws.csv", "full.draws.csv", "diagnose.json"] {
        identical.push((name, read(a, name) == read(b, name)));
    }
    for name in ["fit.diagnostics.json", "full.diagnostics.json"] {
        identical.push((name, json_without_timing(&read(a, name)) == json_without_timing(&read(b, name))));
    }
    identical.push((
        "bench.csv",
        benchmark_without_timing(&read(a, "bench.csv")) == benchmark_without_timing(&read(b, "bench.csv")),
    ));
    let failed: Vec<&str> = identical.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    verdict(
        9,
        "every CLI command reproduces its output under a fixed seed",
        failed.is_empty(),
        format!(
            "{} outputs compared (timing fields excluded), mismatches: {failed:?}",
            identical.len()
        ),
        t,
    );
}
