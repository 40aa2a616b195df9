//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p twocultures-cli --test acceptance`. Set
//! `MARTHE_DATA=<csv>` to run criterion 11 on a real contaminant-transport table.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{ensure, Context, Result};
use twocultures_cli::artifacts::strip_timestamp;
use twocultures_cli::data::{Dataset, Table};
use twocultures_cli::experiments::{marthe_comparison, marthe_dataset, run_experiment, Experiment, ExperimentReport, ExperimentSpec, MartheSettings};
use twocultures_core::brillinger::{estimate_index, identify_linear_system, simulate_linear_system};
use twocultures_core::gp::{kernel_matrix, marginal_log_likelihood, self_kernel, GpModel, KernelParams, MeanKind};
use twocultures_core::nnet::{donut_network, train_sgd, Activation, Architecture, TrainConfig};
use twocultures_core::pipeline::{ensemble_average, Predictor};
use twocultures_core::random::{normal_matrix, normal_vector, seeded, substream, unit_vector};
use twocultures_core::shrinkage::{
    diagnostic_table, dropout_marginal_objective, dropout_objective_mc, dropout_ridge, expansion_diagnostic, shrinkage_profile, Method,
};
use twocultures_core::synthetic::{marthe_like, quadratic_score};
use twocultures_core::{fit_pls, fit_pls_helland, Error, Matrix, Vector};

struct Check {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Result<Check> {
    Ok(Check { pass, detail: detail.into() })
}

fn main() -> ExitCode {
    // `cargo test -- --list` and similar harness probes.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    type Criterion = (u32, &'static str, Option<Duration>, fn() -> Result<Check>);
    let criteria: [Criterion; 13] = [
        (1, "PLS equals OLS at full rank", Some(Duration::from_secs(1)), pls_ols_equivalence),
        (2, "NIPALS and Krylov PLS agree", Some(Duration::from_secs(10)), pls_cross_algorithm),
        (3, "shrinkage factors", Some(Duration::from_secs(5)), shrinkage_factors),
        (4, "dropout equals adaptive ridge", Some(Duration::from_secs(30)), dropout_ridge_equivalence),
        (5, "GP correctness", Some(Duration::from_secs(5)), gp_correctness),
        (6, "single-index direction recovery", Some(Duration::from_secs(60)), index_recovery),
        (7, "nonlinear system direction", Some(Duration::from_secs(30)), nonlinear_system),
        (8, "linear system identification", Some(Duration::from_secs(10)), linear_system),
        (9, "ridge-function bottleneck", Some(Duration::from_secs(120)), ridge_bottleneck),
        (10, "donut classifier", Some(Duration::from_secs(5)), donut),
        (11, "surrogate ordering", Some(Duration::from_secs(600)), surrogate_ordering),
        (12, "ensemble inequality", Some(Duration::from_secs(5)), ensemble_inequality),
        (13, "rerun determinism", None, determinism),
    ];
    let mut failed = 0;
    for (id, name, limit, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let (mut pass, mut detail) = match outcome {
            Ok(c) => (c.pass, c.detail),
            Err(e) => (false, format!("error: {e:#}")),
        };
        let timing = match limit {
            Some(l) => {
                if elapsed > l {
                    pass = false;
                    detail.push_str("; over time limit");
                }
                format!("{:.2}s / {}s", elapsed.as_secs_f64(), l.as_secs())
            }
            None => format!("{:.2}s", elapsed.as_secs_f64()),
        };
        println!("{} [{id:>2}] {name}: {detail} ({timing})", if pass { "PASS" } else { "FAIL" });
        failed += usize::from(!pass);
    }
    println!("acceptance: {} passed, {failed} failed", 13 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

// ---------------------------------------------------------------- oracles

/// Least squares with intercept through LU on the normal equations; returns the slopes.
fn ols_slopes(x: &Matrix, y: &Vector) -> Vector {
    let (n, p) = x.shape();
    let a = Matrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
    let coef = (a.transpose() * &a).lu().solve(&(a.transpose() * y)).expect("full rank design");
    coef.rows(1, p).into_owned()
}

/// Raw-scale slopes of any affine predictor, read off by probing unit inputs.
fn implied_slopes(p: usize, predict: impl Fn(&Matrix) -> Vector) -> Vector {
    let mut probe = Matrix::zeros(p + 1, p);
    for j in 0..p {
        probe[(j + 1, j)] = 1.0;
    }
    let out = predict(&probe);
    Vector::from_iterator(p, (0..p).map(|j| out[j + 1] - out[0]))
}

fn rel_err(a: &Vector, b: &Vector) -> f64 {
    (a - b).norm() / b.norm()
}

fn col(m: &Matrix) -> Vector {
    m.column(0).into_owned()
}

/// Eigen-decomposition of the correlation matrix (population scaling), descending.
fn correlation_eigen(x: &Matrix) -> (Vec<f64>, Matrix, Matrix) {
    let (n, p) = x.shape();
    let mut xs = x.clone();
    for j in 0..p {
        let m = x.column(j).mean();
        let sd = (x.column(j).iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
        for i in 0..n {
            xs[(i, j)] = (x[(i, j)] - m) / sd;
        }
    }
    let s = xs.transpose() * &xs / n as f64;
    let eig = s.symmetric_eigen();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = Matrix::from_fn(p, p, |i, c| eig.eigenvectors[(i, order[c])]);
    (values, vectors, xs)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            r[k] = (i + j) as f64 / 2.0 + 1.0;
        }
        i = j + 1;
    }
    r
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn abs_cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).abs()
}

fn run_in(dir: &Path, experiment: Experiment, seed: u64, data: Option<&Path>) -> Result<ExperimentReport> {
    let mut spec = ExperimentSpec::new(experiment, seed, dir);
    spec.marthe.data = data.map(Path::to_path_buf);
    run_experiment(&spec)
}

fn summary(report: &ExperimentReport, key: &str) -> Result<f64> {
    report.value(key).with_context(|| format!("summary key {key} missing"))
}

fn table_column(t: &Table, name: &str) -> Result<Vec<f64>> {
    let j = t.column_index(name)?;
    Ok(t.rows.iter().map(|r| r[j]).collect())
}

// ---------------------------------------------------------------- criteria

fn pls_ols_equivalence() -> Result<Check> {
    let mut rng = seeded(101);
    let x = normal_matrix(&mut rng, 50, 5);
    let b = Vector::from_vec(vec![1.0, -2.0, 0.5, 0.0, 3.0]);
    let y = &x * &b + normal_vector(&mut rng, 50) * 0.3;
    let oracle = ols_slopes(&x, &y);
    let ym = Matrix::from_column_slice(50, 1, y.as_slice());
    let nipals = fit_pls(&x, &ym, 5)?;
    let helland = fit_pls_helland(&x, &y, 5)?;
    let e1 = rel_err(&implied_slopes(5, |m| col(&nipals.predict(m).unwrap())), &oracle);
    let e2 = rel_err(&implied_slopes(5, |m| helland.predict(m).unwrap()), &oracle);
    check(e1 <= 1e-6 && e2 <= 1e-6, format!("relative error NIPALS {e1:.1e}, Krylov {e2:.1e} (tol 1e-6)"))
}

fn pls_cross_algorithm() -> Result<Check> {
    let mut worst = 0.0f64;
    for problem in 0..100u64 {
        let k = 1 + (problem % 5) as usize;
        let mut rng = seeded(2000 + problem);
        let x = normal_matrix(&mut rng, 60, 8);
        let b = normal_vector(&mut rng, 8);
        let y = &x * &b + normal_vector(&mut rng, 60);
        let ym = Matrix::from_column_slice(60, 1, y.as_slice());
        let nipals = fit_pls(&x, &ym, k)?;
        let helland = fit_pls_helland(&x, &y, k)?;
        let a = implied_slopes(8, |m| col(&nipals.predict(m).unwrap()));
        let h = implied_slopes(8, |m| helland.predict(m).unwrap());
        worst = worst.max(rel_err(&a, &h));
    }
    check(worst <= 1e-6, format!("worst relative coefficient gap {worst:.1e} over 100 problems (tol 1e-6)"))
}

fn shrinkage_factors() -> Result<Check> {
    let mut rng = seeded(303);
    let mix = normal_matrix(&mut rng, 6, 6) + Matrix::identity(6, 6) * 2.0;
    let x = normal_matrix(&mut rng, 200, 6) * mix;
    let y = &x * normal_vector(&mut rng, 6) + normal_vector(&mut rng, 200);
    let (eig, _, _) = correlation_eigen(&x);

    let mut ridge_gap = 0.0f64;
    for k in 0..10 {
        let lambda = 10f64.powf(-3.0 + 5.0 * k as f64 / 9.0);
        let profile = shrinkage_profile(Method::Ridge(lambda), &x, &y)?;
        for (j, f) in profile.f.iter().enumerate() {
            let f = f.context("ridge factor undefined on a generic problem")?;
            ridge_gap = ridge_gap.max((f - eig[j] / (eig[j] + lambda)).abs());
        }
    }

    let pcr = shrinkage_profile(Method::Pcr(3), &x, &y)?;
    let mut pcr_gap = 0.0f64;
    for (j, f) in pcr.f.iter().enumerate() {
        let f = f.context("PCR factor undefined on a generic problem")?;
        pcr_gap = pcr_gap.max((f - if j < 3 { 1.0 } else { 0.0 }).abs());
    }

    // Two correlated inputs and one PLS component: the leading direction expands.
    let mut rng = seeded(304);
    let z = normal_matrix(&mut rng, 400, 2);
    let rho: f64 = 0.6;
    let x2 = Matrix::from_fn(400, 2, |i, j| if j == 0 { z[(i, 0)] } else { rho * z[(i, 0)] + (1.0 - rho * rho).sqrt() * z[(i, 1)] });
    let y2 = Vector::from_fn(400, |i, _| x2[(i, 0)] - 0.8 * x2[(i, 1)]) + normal_vector(&mut rng, 400) * 0.1;
    let profile = shrinkage_profile(Method::Pls(1), &x2, &y2)?;
    let (e, v, xs) = correlation_eigen(&x2);
    let ym = y2.mean();
    let ysd = (y2.iter().map(|t| (t - ym).powi(2)).sum::<f64>() / 400.0).sqrt();
    let ys = y2.map(|t| (t - ym) / ysd);
    let s = xs.transpose() * &ys / 400.0;
    let alpha: Vec<f64> = (0..2).map(|j| v.column(j).dot(&s) / e[j]).collect();
    let num: f64 = (0..2).map(|k| e[k] * e[k] * alpha[k] * alpha[k]).sum();
    let den: f64 = (0..2).map(|k| e[k].powi(3) * alpha[k] * alpha[k]).sum();
    let mut pls_gap = 0.0f64;
    for (f, ej) in profile.f.iter().zip(&e) {
        let f = f.context("PLS factor undefined")?;
        pls_gap = pls_gap.max((f - ej * num / den).abs());
    }
    let expanded = expansion_diagnostic(&profile).expanded;
    let flagged = diagnostic_table(&x2, &y2, 0.5, 1, 1)?.iter().filter(|r| r.expanded).count();
    let f_max = profile.f.iter().flatten().copied().fold(f64::MIN, f64::max);

    check(
        ridge_gap <= 1e-8 && pcr_gap <= 1e-10 && pls_gap <= 1e-8 && !expanded.is_empty() && flagged >= 1,
        format!(
            "ridge gap {ridge_gap:.1e} (tol 1e-8), PCR indicator gap {pcr_gap:.1e} (tol 1e-10), crafted PLS max f = {f_max:.4} \
             (closed-form gap {pls_gap:.1e}), {flagged} direction(s) flagged"
        ),
    )
}

fn dropout_ridge_equivalence() -> Result<Check> {
    let keep = 0.5;
    let mut worst_margin = f64::INFINITY;
    for dataset in 0..5u64 {
        let mut rng = seeded(400 + dataset);
        let scales = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 2.0, 0.5, 1.5]));
        let x = normal_matrix(&mut rng, 25, 4) * scales;
        let y = &x * normal_matrix(&mut rng, 4, 1) + normal_matrix(&mut rng, 25, 1) * 0.5;
        let w = dropout_ridge(&x, &y, keep)?.weights;
        let mc_seed = 9000 + dataset;
        let best = dropout_objective_mc(&x, &y, &w, keep, 100_000, mc_seed);
        let marginal = dropout_marginal_objective(&x, &y, &w, keep);
        let mut prng = substream(400 + dataset, 1);
        for _ in 0..20 {
            let d = normal_matrix(&mut prng, 4, 1);
            let w2 = &w + d * (0.1 * w.norm() / 2.0);
            let other = dropout_objective_mc(&x, &y, &w2, keep, 100_000, mc_seed);
            ensure!(dropout_marginal_objective(&x, &y, &w2, keep) > marginal, "perturbation lowered the marginal objective");
            worst_margin = worst_margin.min((other - best) / best);
        }
    }
    check(
        worst_margin > 0.0,
        format!("closed form beats all 100 perturbations; smallest relative margin {worst_margin:.2e} (10^5 masks)"),
    )
}

fn gp_correctness() -> Result<Check> {
    // (a) unit distance.
    let params = KernelParams::new(vec![1.0, 1.0], 0.3)?;
    let a = Matrix::from_row_slice(1, 2, &[0.0, 0.0]);
    let b = Matrix::from_row_slice(1, 2, &[0.6, 0.8]);
    let k_gap = (kernel_matrix(&a, &b, &params)?[(0, 0)] - (-1f64).exp()).abs();
    let diag_gap = (self_kernel(&a, &params)?[(0, 0)] - 1.3).abs();

    // (b) interpolation with a negligible nugget.
    let xs = Matrix::from_fn(8, 1, |i, _| 0.3 * i as f64);
    let ys = xs.map(|v| (2.0 * v).sin() + 0.5 * v);
    let interp = GpModel::new(xs.clone(), col(&ys), KernelParams::new(vec![0.05], 1e-10)?, MeanKind::Zero)?;
    let fitted = interp.predict(&xs)?.mean;
    let interp_gap = (0..8).map(|i| (fitted[i] - ys[(i, 0)]).abs()).fold(0.0, f64::max);

    // (c) dense-solve oracle on three points.
    let d = [0.5, 2.0];
    let g = 0.01;
    let xt = Matrix::from_row_slice(3, 2, &[0.0, 0.0, 0.4, -0.3, -0.5, 0.9]);
    let yt = Vector::from_vec(vec![0.7, -0.2, 1.1]);
    let xn = Matrix::from_row_slice(4, 2, &[0.1, 0.1, 1.0, 1.0, -0.5, 0.9, 0.2, -0.4]);
    let kern = |p: &[f64], q: &[f64]| (-(0..2).map(|i| (p[i] - q[i]).powi(2) / d[i]).sum::<f64>()).exp();
    let row = |m: &Matrix, i: usize| [m[(i, 0)], m[(i, 1)]];
    let kk = Matrix::from_fn(3, 3, |i, j| kern(&row(&xt, i), &row(&xt, j)) + if i == j { g } else { 0.0 });
    let lu = kk.clone().full_piv_lu();
    let model = GpModel::new(xt.clone(), yt.clone(), KernelParams::new(d.to_vec(), g)?, MeanKind::Zero)?;
    let pred = model.predict(&xn)?;
    let mut dense_gap = 0.0f64;
    for j in 0..4 {
        let ks = Vector::from_fn(3, |i, _| kern(&row(&xt, i), &row(&xn, j)));
        let mean = ks.dot(&lu.solve(&yt).context("singular oracle system")?);
        let var = 1.0 + g - ks.dot(&lu.solve(&ks).context("singular oracle system")?);
        dense_gap = dense_gap.max((mean - pred.mean[j]).abs()).max((var - pred.variance[j]).abs());
    }

    // (d) gradient in log-parameters against central differences.
    let mut rng = seeded(505);
    let xg = normal_matrix(&mut rng, 10, 2);
    let yg = normal_vector(&mut rng, 10);
    let base = KernelParams::new(vec![0.7, 1.3], 0.05)?;
    let analytic = marginal_log_likelihood(&xg, &yg, &base, MeanKind::Zero)?.gradient;
    let theta = base.to_log();
    let h = 1e-5;
    let mut grad_gap = 0.0f64;
    for i in 0..theta.len() {
        let (mut up, mut dn) = (theta.clone(), theta.clone());
        up[i] += h;
        dn[i] -= h;
        let f = |t: &[f64]| marginal_log_likelihood(&xg, &yg, &KernelParams::from_log(t), MeanKind::Zero).map(|e| e.mll);
        let fd = (f(&up)? - f(&dn)?) / (2.0 * h);
        grad_gap = grad_gap.max((analytic[i] - fd).abs() / fd.abs().max(1e-6));
    }

    check(
        k_gap <= 1e-12 && diag_gap <= 1e-12 && interp_gap <= 1e-4 && dense_gap <= 1e-10 && grad_gap <= 1e-4,
        format!(
            "kernel gap {k_gap:.1e}, interpolation gap {interp_gap:.1e}, dense-solve gap {dense_gap:.1e}, \
             gradient relative gap {grad_gap:.1e}"
        ),
    )
}

fn index_recovery() -> Result<Check> {
    let (n, p) = (20_000, 10);
    let mut recovered = 0;
    let mut degenerate = 0;
    let mut min_cos = 1.0f64;
    let mut oracle_gap = 0.0f64;
    for run in 0..20u64 {
        let mut rng = seeded(600 + run);
        let beta = unit_vector(&mut rng, p);
        let x = normal_matrix(&mut rng, n, p);
        let u = &x * &beta;
        let y = u.map(|t| t * t * t + t);
        let model = estimate_index(&x, &y)?;
        // The estimate lives on the standardized scale; map it back before comparing.
        let raw = Vector::from_fn(p, |j, _| model.beta_dir[j] / model.x_std.sds[j]);
        let c = abs_cos(raw.as_slice(), beta.as_slice());
        min_cos = min_cos.min(c);
        recovered += usize::from(c >= 0.98);
        oracle_gap = oracle_gap.max(1.0 - abs_cos(raw.as_slice(), ols_slopes(&x, &y).as_slice()));

        let y_abs = u.map(|t| t.abs() - (2.0 / std::f64::consts::PI).sqrt());
        degenerate += usize::from(matches!(estimate_index(&x, &y_abs), Err(Error::DegenerateIndex { .. })));
    }
    check(
        recovered >= 18 && degenerate >= 18 && oracle_gap <= 1e-9,
        format!(
            "cubic link recovered in {recovered}/20 (min |cos| {min_cos:.4}); centered |u| degenerate in {degenerate}/20; \
             direction vs independent OLS 1-|cos| {oracle_gap:.1e}"
        ),
    )
}

fn nonlinear_system() -> Result<Check> {
    let dir = tempfile::tempdir()?;
    let report = run_in(dir.path(), Experiment::NonlinearAbs, 1, None)?;
    let cosine = summary(&report, "cosine")?;
    let agreement = summary(&report, "pls_ols_cosine")?;
    let t = Table::read(dir.path().join("directions.csv"))?;
    let recomputed = abs_cos(&table_column(&t, "true_direction")?, &table_column(&t, "estimated_direction")?);
    check(
        cosine >= 0.95 && agreement >= 0.99 && (recomputed - cosine).abs() <= 1e-9,
        format!("|cos(estimate, truth)| {cosine:.4} (>= 0.95, recomputed {recomputed:.4}); |cos(PLS, OLS)| {agreement:.5} (>= 0.99)"),
    )
}

fn linear_system() -> Result<Check> {
    let dir = tempfile::tempdir()?;
    let report = run_in(dir.path(), Experiment::LinearSystem, 1, None)?;
    let clean = summary(&report, "noiseless_residual_after_2")?;
    let noisy = summary(&report, "noisy_residual_after_2")?;
    let noise = summary(&report, "noise_variance")?;
    let ratio = noisy / noise;

    // Residual after regressing the outputs on the two extracted score vectors.
    let (x, y) = simulate_linear_system(1000, noise.sqrt(), 1)?;
    let id = identify_linear_system(&x, &y, 2)?;
    let t = Matrix::from_fn(1000, 2, |i, k| id.rounds[k].scores[i]);
    let yc = Matrix::from_fn(1000, 2, |i, j| y[(i, j)] - y.column(j).mean());
    let coef = (t.transpose() * &t).lu().solve(&(t.transpose() * &yc)).context("singular scores")?;
    let resid = &yc - &t * coef;
    let oracle = resid.norm_squared() / (1000.0 * 2.0);
    let oracle_gap = (oracle - id.rounds[1].residual_variance).abs() / oracle;

    check(
        clean <= 1e-10 && (ratio - 1.0).abs() <= 0.1 && oracle_gap <= 1e-8,
        format!(
            "noiseless residual {clean:.1e} (<= 1e-10); noisy residual / noise variance {ratio:.4} (within 10%); \
             score-regression oracle gap {oracle_gap:.1e}"
        ),
    )
}

fn ridge_bottleneck() -> Result<Check> {
    let dir = tempfile::tempdir()?;
    let report = run_in(dir.path(), Experiment::RidgeBottleneck, 1, None)?;
    let r2 = summary(&report, "r_squared")?;
    let rho = summary(&report, "abs_spearman")?;
    let t = Table::read(dir.path().join("bottleneck_test.csv"))?;
    let (y, pred) = (table_column(&t, "y")?, table_column(&t, "prediction")?);
    let ym = y.iter().sum::<f64>() / y.len() as f64;
    let sse: f64 = y.iter().zip(&pred).map(|(a, b)| (a - b).powi(2)).sum();
    let sst: f64 = y.iter().map(|a| (a - ym).powi(2)).sum();
    let r2_oracle = 1.0 - sse / sst;
    let rho_oracle = pearson(&ranks(&table_column(&t, "feature")?), &ranks(&table_column(&t, "index")?)).abs();
    check(
        r2 >= 0.9 && rho >= 0.8 && (r2 - r2_oracle).abs() <= 1e-9 && (rho - rho_oracle).abs() <= 1e-9,
        format!("test R^2 {r2:.4} (>= 0.9, recomputed {r2_oracle:.4}); |Spearman| {rho:.4} (>= 0.8, recomputed {rho_oracle:.4})"),
    )
}

fn donut() -> Result<Check> {
    let dir = tempfile::tempdir()?;
    let report = run_in(dir.path(), Experiment::Donut, 1, None)?;
    let accuracy = summary(&report, "accuracy")?;

    let net = donut_network();
    let logit = |p: [f64; 2]| -> Result<f64> {
        let hidden = net.forward_layers(&Matrix::from_row_slice(1, 2, &p), 1)?;
        Ok(hidden.sum() - 3.0)
    };
    let t = Table::read(dir.path().join("donut_points.csv"))?;
    let (x1, x2, labels) = (table_column(&t, "x1")?, table_column(&t, "x2")?, table_column(&t, "label")?);
    let mut correct = 0;
    for i in 0..labels.len() {
        correct += usize::from((logit([x1[i], x2[i]])? > 0.0) == (labels[i] == 1.0));
    }
    let recomputed = correct as f64 / labels.len() as f64;

    // The zero set of -3 + |x1 + x2| + |x1 - x2| is the square max(|x1|, |x2|) = 3/2.
    let mut worst = 0.0f64;
    for k in 0..100 {
        let s = -1.5 + 3.0 * (k % 25) as f64 / 25.0;
        let p = match k / 25 {
            0 => [s, -1.5],
            1 => [1.5, s],
            2 => [-s, 1.5],
            _ => [-1.5, -s],
        };
        worst = worst.max(logit(p)?.abs());
        let prob = net.forward(&p)?[0];
        worst = worst.max(4.0 * (prob - 0.5).abs());
    }
    check(
        accuracy >= 0.95 && (accuracy - recomputed).abs() < 1e-12 && worst <= 1e-9,
        format!("accuracy {accuracy:.4} (>= 0.95, recomputed {recomputed:.4}); max |logit| on 100 boundary points {worst:.1e} (<= 1e-9)"),
    )
}

fn surrogate_ordering() -> Result<Check> {
    let real = std::env::var_os("MARTHE_DATA").map(std::path::PathBuf::from);
    let fixed = match &real {
        Some(path) => Some(marthe_dataset(&Table::read(path)?, None, &[])?),
        None => None,
    };
    let mut pls_beats_gp = 0;
    let mut dl_beats_pls = 0;
    let mut ratios = Vec::new();
    for rep in 0..20u64 {
        let data = match &fixed {
            Some(d) => d.clone(),
            None => {
                let d = marthe_like(300, 1100 + rep);
                Dataset {
                    input_names: (1..=d.x.ncols()).map(|j| format!("x{j}")).collect(),
                    output_names: vec!["y".into()],
                    x: d.x,
                    y: d.y,
                }
            }
        };
        let mut settings = MartheSettings::new(rep);
        if fixed.is_none() {
            settings.dl_components = 3;
        }
        let cmp = marthe_comparison(&data, &settings, 1100 + rep)?;
        let rmse = |name: &str| cmp.models.iter().find(|m| m.name == name).map(|m| m.rmse).context("model missing");
        let (gp, pls_gp, dl_gp) = (rmse("gp")?, rmse("pls-gp")?, rmse("dl-gp")?);
        pls_beats_gp += usize::from(pls_gp < gp);
        dl_beats_pls += usize::from(dl_gp <= pls_gp);
        ratios.push((pls_gp / gp, dl_gp / pls_gp));
    }
    let median = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        (v[9] + v[10]) / 2.0
    };
    let m1 = median(ratios.iter().map(|r| r.0).collect());
    let m2 = median(ratios.iter().map(|r| r.1).collect());
    let source = if real.is_some() { "provided table" } else { "synthetic active-subspace data" };
    check(
        pls_beats_gp >= 16 && dl_beats_pls >= 10,
        format!(
            "{source}: PLS-GP < GP in {pls_beats_gp}/20 (>= 16, median ratio {m1:.3}); DL-GP <= PLS-GP in {dl_beats_pls}/20 \
             (>= 10, median ratio {m2:.3})"
        ),
    )
}

fn ensemble_inequality() -> Result<Check> {
    let mut worst_slack = f64::NEG_INFINITY;
    let mut sets = 0;
    for seed in 0..3u64 {
        let d = quadratic_score(240, 5, 0.2, 1200 + seed);
        let (xtr, ytr) = (d.x.rows(0, 160).into_owned(), d.y.rows(0, 160).into_owned());
        let (xte, yte) = (d.x.rows(160, 80).into_owned(), d.y.rows(160, 80).into_owned());

        let pls: Vec<_> = (1..=4).map(|l| fit_pls(&xtr, &ytr, l)).collect::<Result<_, _>>()?;
        let mlps: Vec<_> = (0..4u64)
            .map(|s| {
                let config = TrainConfig {
                    learning_rate: 0.05,
                    epochs: 40,
                    batch_size: 16,
                    seed: s,
                    ..TrainConfig::default()
                };
                train_sgd(&config, &xtr, &ytr, &Architecture::mlp(5, &[16], Activation::Relu, 1, Activation::Identity)).map(|t| t.model)
            })
            .collect::<Result<_, _>>()?;
        let xs = xtr.columns(0, 2).into_owned();
        let gp = GpModel::new(xs, col(&ytr), KernelParams::new(vec![1.0, 1.0], 0.1)?, MeanKind::Constant)?;
        let gp_member = move |x: &Matrix| gp.predict_distribution(&x.columns(0, 2).into_owned());

        let member_sets: Vec<Vec<&dyn Predictor>> = vec![
            pls.iter().map(|m| m as &dyn Predictor).collect(),
            mlps.iter().map(|m| m as &dyn Predictor).collect(),
            vec![&pls[0] as &dyn Predictor, &mlps[0], &gp_member],
            vec![&pls[3] as &dyn Predictor, &pls[3]],
        ];
        for members in member_sets {
            let ens = ensemble_average(&members, &xte)?;
            let mse = |p: &Matrix| (p - &yte).norm_squared() / yte.len() as f64;
            let mut avg = 0.0;
            for m in &members {
                avg += mse(&m.predict_distribution(&xte)?.mean);
            }
            avg /= members.len() as f64;
            worst_slack = worst_slack.max(mse(&ens.mean) - avg);
            sets += 1;
        }
    }
    check(
        worst_slack <= 1e-12,
        format!("{sets} member sets on 3 datasets; worst (ensemble MSE - mean member MSE) {worst_slack:.2e} (<= 1e-12)"),
    )
}

fn determinism() -> Result<Check> {
    let data_dir = tempfile::tempdir()?;
    let csv = data_dir.path().join("surrogate.csv");
    let d = marthe_like(300, 7);
    let mut text = (1..=20).map(|j| format!("x{j}")).collect::<Vec<_>>().join(",") + ",y\n";
    for i in 0..d.x.nrows() {
        let row: Vec<String> = d.x.row(i).iter().chain(d.y.row(i).iter()).map(|v| format!("{v:e}")).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(&csv, text)?;

    let mut compared = 0;
    let mut mismatches = Vec::new();
    for experiment in Experiment::ALL {
        let runs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir()).collect::<Result<_, _>>()?;
        for dir in &runs {
            run_in(dir.path(), experiment, 7, (experiment == Experiment::Marthe).then_some(csv.as_path()))?;
        }
        let list = |p: &Path| -> Result<BTreeMap<String, String>> {
            let mut files = BTreeMap::new();
            for entry in std::fs::read_dir(p)? {
                let path = entry?.path();
                files.insert(path.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&path)?);
            }
            Ok(files)
        };
        let (a, b) = (list(runs[0].path())?, list(runs[1].path())?);
        if a.keys().ne(b.keys()) {
            mismatches.push(format!("{}: file sets differ", experiment.name()));
        }
        for (name, text) in &a {
            compared += 1;
            if b.get(name).map(|t| strip_timestamp(t)) != Some(strip_timestamp(text)) {
                mismatches.push(format!("{}/{name}", experiment.name()));
            }
        }
    }
    check(
        mismatches.is_empty(),
        if mismatches.is_empty() {
            format!("{compared} artifacts from 6 experiments identical across reruns apart from the timestamp line")
        } else {
            format!("differing artifacts: {}", mismatches.join(", "))
        },
    )
}
