//! Property checks for every module, shared by the `invariants` test target
//! (one `#[test]` per check) and the acceptance suite (which runs them all
//! in sequence against a time budget).
//!
//! Each check returns `Err(message)` instead of panicking so the acceptance
//! runner can report it on one line.

use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use lsmc_pde::baselines::heston_cf::black_scholes;
use lsmc_pde::baselines::{fd_price, heston_european_put, lsmc_price, DirectStyle, FdConfig, FdExercise, LsmcConfig};
use lsmc_pde::clustering::{cluster_paths, cluster_paths_threshold, clustered_weights};
use lsmc_pde::fst::{build_psi, conditional_expectation_over_interval, fst_step, GridSpec, Psi, ValueSurface};
use lsmc_pde::mlmc::{interpolate_values, MlmcLevelPlan};
use lsmc_pde::model::{
    correlate, simulate_paths, theta_of_constant_path, ExerciseSchedule, HestonSpec, ModelSpec, MultiHestonSpec,
    ThetaLayout,
};
use lsmc_pde::pricer::{
    backward_induction, extract_boundary, run_hybrid_trial, HybridConfig, HybridSetup, MlmcInputs, OptionSpec, Reducers,
};
use lsmc_pde::regression::{gram_matrix, regress_surface, weighted_gram, BasisFamily, TruncationConfig};
use lsmc_pde::stats::{fit_line, mean, sample_std};

pub type Check = (&'static str, fn() -> Result<(), String>);

pub const CHECKS: &[Check] = &[
    ("model_variance_fields_nonnegative", model_variance_fields_nonnegative),
    ("model_integrated_variance_mean", model_integrated_variance_mean),
    ("model_theta_chaining", model_theta_chaining),
    ("model_increment_correlations", model_increment_correlations),
    ("fst_constant_preservation", fst_constant_preservation),
    ("fst_spatial_convergence", fst_spatial_convergence),
    ("fst_linearity", fst_linearity),
    ("fst_translation", fst_translation),
    ("regression_in_span_recovery", regression_in_span_recovery),
    ("regression_unit_weights", regression_unit_weights),
    ("regression_gram_psd", regression_gram_psd),
    ("regression_truncation_monotone", regression_truncation_monotone),
    ("clustering_weight_conservation", clustering_weight_conservation),
    ("clustering_full_cut_is_exact", clustering_full_cut_is_exact),
    ("clustering_monotone_fidelity", clustering_monotone_fidelity),
    ("mlmc_telescoping", mlmc_telescoping),
    ("mlmc_interpolation_idempotent", mlmc_interpolation_idempotent),
    ("pricer_direct_above_low", pricer_direct_above_low),
    ("pricer_bermudan_dominance", pricer_bermudan_dominance),
    ("pricer_more_dates", pricer_more_dates),
    ("pricer_single_crossing", pricer_single_crossing),
    ("baselines_lsmc_deterministic", baselines_lsmc_deterministic),
    ("baselines_fd_self_convergence", baselines_fd_self_convergence),
];

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Run a property over `cases` deterministic draws.
fn prop<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn fail(e: impl std::fmt::Display) -> TestCaseError {
    TestCaseError::fail(e.to_string())
}

fn heston() -> ModelSpec {
    ModelSpec::Heston(HestonSpec::benchmark())
}

fn monthly_put(n_dates: usize) -> OptionSpec {
    OptionSpec::put(10.0, ExerciseSchedule::new(1.0, n_dates).unwrap())
}

fn small_hybrid(paths: usize, resolution: usize, degree: usize, steps: usize) -> HybridConfig {
    HybridConfig {
        plan: MlmcLevelPlan::single(paths, resolution).unwrap(),
        x_min: -3.0,
        x_max: 3.0,
        degree,
        trunc: TruncationConfig::default(),
        n_steps: steps,
        clusters: None,
        direct_only: false,
    }
}

fn pooled_se(a: &[f64], b: &[f64]) -> f64 {
    let va = sample_std(a).powi(2) / a.len() as f64;
    let vb = sample_std(b).powi(2) / b.len() as f64;
    (va + vb).sqrt()
}

// ---------------------------------------------------------------- model

fn model_variance_fields_nonnegative() -> Result<(), String> {
    // Feller condition badly violated so the truncation is exercised often
    let harsh = ModelSpec::Heston(HestonSpec::new(0.02, 0.5, 0.04, 1.0, -0.7, 0.04, 10.0).map_err(e2s)?);
    let sched = ExerciseSchedule::new(1.0, 12).map_err(e2s)?;
    let one = simulate_paths(&harsh, &sched, 25_000, 120, 11).map_err(e2s)?;
    let two = simulate_paths(&ModelSpec::MultiHeston(MultiHestonSpec::benchmark()), &sched, 12_000, 120, 12)
        .map_err(e2s)?;
    let mut checked = 0usize;
    let mut zeros = 0usize;
    for bundle in [&one, &two] {
        let fields = bundle.layout.nonnegative_fields();
        for p in 0..bundle.n_paths {
            for n in 0..bundle.intervals {
                let rec = bundle.record(p, n);
                for &f in fields {
                    ensure!(rec[f] >= 0.0, "negative Θ field {f} = {} (path {p}, interval {n})", rec[f]);
                    zeros += (rec[f] == 0.0) as usize;
                }
                checked += bundle.layout.len();
            }
        }
    }
    ensure!(checked >= 1_000_000, "only {checked} entries sampled");
    ensure!(zeros > 0, "the truncation was never active; the check is vacuous");
    Ok(())
}

fn model_integrated_variance_mean() -> Result<(), String> {
    let h = HestonSpec::benchmark();
    let sched = ExerciseSchedule::new(1.0, 12).map_err(e2s)?;
    let paths = simulate_paths(&ModelSpec::Heston(h), &sched, 100_000, 1200, 21).map_err(e2s)?;
    let totals: Vec<f64> = (0..paths.n_paths)
        .map(|p| (0..paths.intervals).map(|n| paths.record(p, n)[ThetaLayout::INT_V]).sum())
        .collect();
    let t = sched.maturity;
    let exact = h.theta * t + (h.v0 - h.theta) * (1.0 - (-h.kappa * t).exp()) / h.kappa;
    let m = mean(&totals);
    let se = sample_std(&totals) / (totals.len() as f64).sqrt();
    ensure!((m - exact).abs() <= 3.0 * se, "mean ∫v = {m:.6}, closed form {exact:.6}, se {se:.2e}");
    Ok(())
}

fn model_theta_chaining() -> Result<(), String> {
    let sched = ExerciseSchedule::new(1.0, 12).map_err(e2s)?;
    for model in [heston(), ModelSpec::MultiHeston(MultiHestonSpec::benchmark())] {
        let b = simulate_paths(&model, &sched, 2000, 240, 31).map_err(e2s)?;
        for p in 0..b.n_paths {
            for n in 0..b.intervals - 1 {
                let end = b.layout.end_variance(b.record(p, n));
                let start = b.layout.start_variance(b.record(p, n + 1));
                ensure!(end == start, "path {p}: interval {n} ends at {end:?}, next starts at {start:?}");
            }
        }
    }
    Ok(())
}

fn model_increment_correlations() -> Result<(), String> {
    let m = MultiHestonSpec::benchmark();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let n = 100_000;
    let mut sum = [[0.0; 4]; 4];
    for _ in 0..n {
        let z: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let w = correlate(&m.chol, &z);
        for a in 0..4 {
            for b in 0..4 {
                sum[a][b] += w[a] * w[b];
            }
        }
    }
    for a in 0..4 {
        for b in 0..a {
            let c = sum[a][b] / (sum[a][a] * sum[b][b]).sqrt();
            ensure!((c - m.rho[a][b]).abs() <= 0.02, "corr({a},{b}) = {c:.4}, target {}", m.rho[a][b]);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- fst

fn theta1() -> impl Strategy<Value = [f64; 4]> {
    (0.0..1.0f64, -1.0..1.0f64, 0.0..0.5f64, 0.0..1.0f64).prop_map(|(v0, sdw, iv, v1)| [v0, sdw, iv, v1])
}

fn theta2() -> impl Strategy<Value = [f64; 9]> {
    (0.0..1.0f64, 0.0..1.0f64, -0.5..0.5f64, -0.5..0.5f64, 0.0..0.3f64, 0.0..0.3f64, 0.0..1.0f64)
        .prop_map(|(v1, v2, z1, z2, i1, i2, u)| [v1, v2, z1, z2, i1, i2, u * (i1 * i2).sqrt(), v2, v1])
}

fn psi1(theta: &[f64; 4], rho: f64, n: usize) -> Result<Psi, TestCaseError> {
    let model = ModelSpec::Heston(HestonSpec { rho, ..HestonSpec::benchmark() });
    let grid = GridSpec::standard(1, n).map_err(fail)?;
    build_psi(theta, &model, &grid, 1.0 / 12.0).map_err(fail)
}

fn fst_constant_preservation() -> Result<(), String> {
    prop(50, (theta1(), -0.99..0.99f64, -10.0..10.0f64), |(th, rho, c)| {
        let psi = psi1(&th, rho, 64)?;
        let out = fst_step(&ValueSurface::constant(psi.grid, c), &psi).map_err(fail)?;
        for v in &out.values {
            prop_assert!((v - c).abs() <= 1e-12, "{v} != {c}");
        }
        Ok(())
    })?;
    let model = ModelSpec::MultiHeston(MultiHestonSpec::benchmark());
    let grid = GridSpec::standard(2, 16).map_err(e2s)?;
    prop(50, (theta2(), -10.0..10.0f64), |(th, c)| {
        let psi = build_psi(&th, &model, &grid, 1.0 / 12.0).map_err(fail)?;
        let out = fst_step(&ValueSurface::constant(grid, c), &psi).map_err(fail)?;
        for v in &out.values {
            prop_assert!((v - c).abs() <= 1e-12, "{v} != {c}");
        }
        Ok(())
    })
}

fn fst_spatial_convergence() -> Result<(), String> {
    // frozen variance, no correlation: one step is a Black-Scholes expectation
    let h = HestonSpec { rho: 0.0, ..HestonSpec::benchmark() };
    let model = ModelSpec::Heston(h);
    let (v, t) = (0.16, 1.0);
    let theta = theta_of_constant_path(v, t).map_err(e2s)?;
    let option = OptionSpec::put(h.s0, ExerciseSchedule::new(t, 1).map_err(e2s)?);
    let exact = black_scholes(h.s0, h.s0, h.r, v.sqrt(), t).1;
    let mut logn = Vec::new();
    let mut loge = Vec::new();
    for k in 6..=10 {
        let grid = GridSpec::standard(1, 1 << k).map_err(e2s)?;
        let payoff = option.payoff_surface(&grid, &[h.s0]);
        let out = conditional_expectation_over_interval(&payoff, &theta, &model, t).map_err(e2s)?;
        logn.push(k as f64);
        loge.push((out.at_origin() - exact).abs().log2());
    }
    let order = -fit_line(&logn, &loge).slope;
    ensure!(order >= 1.9, "observed order {order:.3} (log2 errors {loge:?})");
    Ok(())
}

fn fst_linearity() -> Result<(), String> {
    let n = 64;
    let vals = prop::collection::vec(-5.0..5.0f64, n);
    prop(50, (theta1(), vals.clone(), vals, -3.0..3.0f64, -3.0..3.0f64), |(th, f, g, a, b)| {
        let psi = psi1(&th, 0.1, n)?;
        let grid = psi.grid;
        let solve = |x: Vec<f64>| fst_step(&ValueSurface::new(grid, x).unwrap(), &psi).map_err(fail);
        let combo = solve(f.iter().zip(&g).map(|(x, y)| a * x + b * y).collect())?;
        let (sf, sg) = (solve(f)?, solve(g)?);
        for i in 0..n {
            let expect = a * sf.values[i] + b * sg.values[i];
            prop_assert!((combo.values[i] - expect).abs() <= 1e-10, "node {i}: {} vs {expect}", combo.values[i]);
        }
        Ok(())
    })
}

fn fst_translation() -> Result<(), String> {
    let n = 64;
    prop(50, (theta1(), prop::collection::vec(-5.0..5.0f64, n)), |(th, f)| {
        let psi = psi1(&th, -0.4, n)?;
        let grid = psi.grid;
        let shifted: Vec<f64> = (0..n).map(|i| f[(i + n - 1) % n]).collect();
        let base = fst_step(&ValueSurface::new(grid, f).unwrap(), &psi).map_err(fail)?;
        let moved = fst_step(&ValueSurface::new(grid, shifted).unwrap(), &psi).map_err(fail)?;
        for i in 0..n {
            let expect = base.values[(i + n - 1) % n];
            prop_assert!((moved.values[i] - expect).abs() <= 1e-12, "node {i}: {} vs {expect}", moved.values[i]);
        }
        Ok(())
    })
}

// ---------------------------------------------------------------- regression

/// Variance samples and a scaled basis over their support box.
fn design(seed: u64, n: usize, degree: usize) -> (Vec<f64>, BasisFamily) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.02..0.6)).collect();
    let support = TruncationConfig::default().support_box(&v, 1).unwrap();
    (v, BasisFamily::for_box(1, degree, &support).unwrap().scaled())
}

fn loose() -> TruncationConfig {
    TruncationConfig { inverse_norm_bound: 1e14, ..TruncationConfig::default() }
}

fn regression_in_span_recovery() -> Result<(), String> {
    let coeffs = prop::collection::vec(-2.0..2.0f64, 8);
    prop(64, (0usize..8, 20usize..400, any::<u64>(), coeffs), |(degree, n, seed, a)| {
        let (v, basis) = design(seed, n, degree);
        let db = basis.size();
        let grid = GridSpec::standard(1, 4).map_err(fail)?;
        let ng = grid.len();
        // a different coefficient vector at every grid node
        let truth = |i: usize, m: usize| a[m] * (1.0 + i as f64);
        let mut pre = vec![0.0; n * ng];
        for j in 0..n {
            let phi = basis.eval(&v[j..j + 1]);
            for i in 0..ng {
                pre[j * ng + i] = (0..db).map(|m| truth(i, m) * phi[m]).sum();
            }
        }
        let fit = match regress_surface(&pre, grid, &v, &vec![1.0; n], &basis, &loose()) {
            Ok(f) => f,
            Err(_) => return Err(TestCaseError::reject("degenerate design")),
        };
        let scale = a.iter().fold(1.0f64, |m, x| m.max(x.abs())) * ng as f64;
        for i in 0..ng {
            for m in 0..db {
                let got = fit.at(i)[m];
                prop_assert!((got - truth(i, m)).abs() <= 1e-7 * scale, "node {i}, coefficient {m}: {got} vs {}", truth(i, m));
            }
        }
        Ok(())
    })
}

fn regression_unit_weights() -> Result<(), String> {
    prop(32, (0usize..6, 20usize..300, any::<u64>()), |(degree, n, seed)| {
        let (v, basis) = design(seed, n, degree);
        let plain = gram_matrix(&v, &basis, &loose());
        let weighted = weighted_gram(&v, &vec![1.0; n], &basis, &loose());
        match (plain, weighted) {
            (Ok(a), Ok(b)) => prop_assert!(a == b, "unit weights changed the Gram matrix"),
            (Err(_), Err(_)) => return Err(TestCaseError::reject("degenerate design")),
            _ => prop_assert!(false, "only one of the two Gram computations failed"),
        }
        Ok(())
    })
}

fn regression_gram_psd() -> Result<(), String> {
    let weights = prop::collection::vec(0.5..4.0f64, 400);
    prop(64, (0usize..8, 20usize..400, any::<u64>(), weights), |(degree, n, seed, w)| {
        let (v, basis) = design(seed, n, degree);
        let g = match weighted_gram(&v, &w[..n], &basis, &loose()) {
            Ok(g) => g,
            Err(_) => return Err(TestCaseError::reject("degenerate design")),
        };
        let db = g.size;
        let a = DMatrix::from_row_slice(db, db, &g.matrix);
        let scale = g.matrix.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for r in 0..db {
            for c in 0..r {
                prop_assert!((a[(r, c)] - a[(c, r)]).abs() <= 1e-14 * scale, "asymmetric at ({r}, {c})");
            }
        }
        let lmin = SymmetricEigen::new(a).eigenvalues.min();
        prop_assert!(lmin >= -1e-10, "eigenvalue {lmin}");
        Ok(())
    })
}

fn regression_truncation_monotone() -> Result<(), String> {
    prop(32, (0usize..6, 30usize..300, any::<u64>()), |(degree, n, seed)| {
        let (v, basis) = design(seed, n, degree);
        let grid = GridSpec::standard(1, 8).map_err(fail)?;
        let pre: Vec<f64> = (0..n * grid.len()).map(|k| ((k * 7919) % 101) as f64 / 101.0).collect();
        let w = vec![1.0; n];
        let tight = TruncationConfig::default();
        let Ok(a) = regress_surface(&pre, grid, &v, &w, &basis, &tight) else {
            return Err(TestCaseError::reject("bound already exceeded"));
        };
        let wide = TruncationConfig { inverse_norm_bound: tight.inverse_norm_bound * 1e4, ..tight };
        let b = regress_surface(&pre, grid, &v, &w, &basis, &wide).map_err(fail)?;
        prop_assert!(a == b, "raising the bound changed the coefficients");
        Ok(())
    })
}

// ---------------------------------------------------------------- clustering

fn clustering_weight_conservation() -> Result<(), String> {
    let points = (2usize..80, 1usize..5).prop_flat_map(|(n, d)| {
        (Just(n), Just(d), prop::collection::vec(0i32..6, n * d), 1..=n)
    });
    prop(64, points, |(n, d, raw, target)| {
        // small integer lattice so that ties are common
        let block: Vec<f64> = raw.iter().map(|&x| x as f64 * 0.5).collect();
        let cut = cluster_paths(&block, d, target).map_err(fail)?;
        prop_assert_eq!(cut.n_clusters, target);
        prop_assert_eq!(clustered_weights(&cut).iter().sum::<f64>(), n as f64);
        let mut seen: Vec<usize> = cut.members.iter().flatten().copied().collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
        for (k, m) in cut.members.iter().enumerate() {
            prop_assert_eq!(m.len(), cut.sizes[k]);
        }
        let by_distance = cluster_paths_threshold(&block, d, 1.0).map_err(fail)?;
        prop_assert_eq!(by_distance.n_points(), n);
        Ok(())
    })
}

fn clustering_full_cut_is_exact() -> Result<(), String> {
    let model = heston();
    let option = monthly_put(12);
    let paths = simulate_paths(&model, &option.schedule, 400, 120, 51).map_err(e2s)?;
    let setup = HybridSetup { grid: GridSpec::standard(1, 64).map_err(e2s)?, degree: 3, trunc: TruncationConfig::default() };
    let plain = backward_induction(&paths, &model, &option, &setup, Reducers::default()).map_err(e2s)?;
    let full = Reducers { clusters: Some(400), mlmc: None };
    let clustered = backward_induction(&paths, &model, &option, &setup, full).map_err(e2s)?;
    ensure!(plain == clustered, "clustering into N clusters changed the estimator");
    Ok(())
}

fn clustering_monotone_fidelity() -> Result<(), String> {
    let model = heston();
    let option = monthly_put(12);
    let n = 800;
    let setup = HybridSetup { grid: GridSpec::standard(1, 64).map_err(e2s)?, degree: 3, trunc: TruncationConfig::default() };
    let cuts = [n / 8, n / 4, n / 2, n];
    let mut gaps = vec![Vec::new(); cuts.len()];
    for seed in 0..10 {
        let paths = simulate_paths(&model, &option.schedule, n, 120, 60 + seed).map_err(e2s)?;
        let price = |d: usize| {
            let r = Reducers { clusters: Some(d), mlmc: None };
            backward_induction(&paths, &model, &option, &setup, r).map(|o| o.atm())
        };
        let full = price(n).map_err(e2s)?;
        for (k, &d) in cuts.iter().enumerate() {
            gaps[k].push((price(d).map_err(e2s)? - full).abs());
        }
    }
    for k in 1..cuts.len() {
        let (prev, next) = (mean(&gaps[k - 1]), mean(&gaps[k]));
        let tol = pooled_se(&gaps[k - 1], &gaps[k]);
        ensure!(next <= prev + tol, "mean gap at D={} is {next:.2e}, at D={} {prev:.2e} (se {tol:.1e})", cuts[k], cuts[k - 1]);
    }
    Ok(())
}

// ---------------------------------------------------------------- mlmc

fn mlmc_telescoping() -> Result<(), String> {
    let model = heston();
    let option = monthly_put(6);
    let paths = simulate_paths(&model, &option.schedule, 300, 60, 71).map_err(e2s)?;
    let setup = HybridSetup { grid: GridSpec::standard(1, 64).map_err(e2s)?, degree: 3, trunc: TruncationConfig::default() };
    let plain = backward_induction(&paths, &model, &option, &setup, Reducers::default()).map_err(e2s)?;
    // two levels on the same paths and resolution: every correction vanishes
    let plan = MlmcLevelPlan { paths: vec![300, 300], resolutions: vec![64, 64] };
    let corrections = [paths.clone()];
    let ml = Reducers { clusters: None, mlmc: Some(MlmcInputs { plan: &plan, corrections: &corrections }) };
    let multi = backward_induction(&paths, &model, &option, &setup, ml).map_err(e2s)?;
    ensure!(plain == multi, "degenerate multilevel estimator differs from the single-level one");
    Ok(())
}

fn mlmc_interpolation_idempotent() -> Result<(), String> {
    let shape = (1usize..=2, 3u32..6, 1u32..3).prop_flat_map(|(dim, k, up)| {
        let n = 1usize << k;
        (Just(dim), Just(n), Just(n << up), prop::collection::vec(-5.0..5.0f64, n.pow(dim as u32)))
    });
    prop(64, shape, |(dim, n, fine_n, values)| {
        let coarse = GridSpec::standard(dim, n).map_err(fail)?;
        let fine = GridSpec::standard(dim, fine_n).map_err(fail)?;
        let up = interpolate_values(&values, &coarse, &fine).map_err(fail)?;
        let back = interpolate_values(&up, &fine, &coarse).map_err(fail)?;
        prop_assert_eq!(&back, &values);
        let again = interpolate_values(&back, &coarse, &fine).map_err(fail)?;
        prop_assert_eq!(again, up);
        Ok(())
    })
}

// ---------------------------------------------------------------- pricer

struct Trials {
    direct: Vec<f64>,
    low: Vec<f64>,
}

fn hybrid_trials(option: &OptionSpec, cfg: &HybridConfig, seeds: std::ops::Range<u64>) -> Result<Trials, String> {
    let mut t = Trials { direct: Vec::new(), low: Vec::new() };
    for seed in seeds {
        let o = run_hybrid_trial(&heston(), option, cfg, seed).map_err(e2s)?;
        t.direct.push(o.direct);
        t.low.extend(o.low);
    }
    Ok(t)
}

fn pricer_direct_above_low() -> Result<(), String> {
    let t = hybrid_trials(&monthly_put(12), &small_hybrid(1000, 64, 3, 120), 0..100)?;
    let (d, l) = (mean(&t.direct), mean(&t.low));
    let se = pooled_se(&t.direct, &t.low);
    ensure!(d >= l - se, "direct {d:.5} below low {l:.5} by more than {se:.1e}");
    Ok(())
}

fn pricer_bermudan_dominance() -> Result<(), String> {
    let option = monthly_put(12);
    let cfg = HybridConfig { direct_only: true, ..small_hybrid(1000, 128, 3, 120) };
    let mut direct = Vec::new();
    for seed in 0..20 {
        let o = run_hybrid_trial(&heston(), &option, &cfg, 200 + seed).map_err(e2s)?;
        let payoff = option.payoff_surface(&o.result.direct.grid, &heston().spots());
        for (v, h) in o.result.direct.values.iter().zip(&payoff.values) {
            ensure!(v >= h, "time-zero value {v} below intrinsic {h}");
        }
        direct.push(o.direct);
    }
    let european = heston_european_put(&HestonSpec::benchmark(), 10.0, 1.0).map_err(e2s)?;
    let se = sample_std(&direct) / (direct.len() as f64).sqrt();
    ensure!(mean(&direct) >= european - 3.0 * se, "Bermudan {:.5} below European {european:.5}", mean(&direct));
    Ok(())
}

fn pricer_more_dates() -> Result<(), String> {
    let cfg = HybridConfig { direct_only: true, ..small_hybrid(1000, 64, 3, 120) };
    let one = hybrid_trials(&monthly_put(1), &cfg, 300..330)?;
    let twelve = hybrid_trials(&monthly_put(12), &cfg, 300..330)?;
    let se = pooled_se(&one.direct, &twelve.direct);
    let (a, b) = (mean(&one.direct), mean(&twelve.direct));
    ensure!(b >= a - se, "12 dates {b:.5} < 1 date {a:.5} beyond {se:.1e}");
    Ok(())
}

fn pricer_single_crossing() -> Result<(), String> {
    let model = heston();
    let option = monthly_put(12);
    let cfg = HybridConfig { direct_only: true, ..small_hybrid(4000, 256, 5, 240) };
    let o = run_hybrid_trial(&model, &option, &cfg, 401).map_err(e2s)?;
    let b = extract_boundary(&o.result, &model, &option).map_err(e2s)?;
    let spots = model.spots();
    for date in &b.dates {
        let (mut rows, mut ok) = (0usize, 0usize);
        for i in 0..b.grid.len() {
            if option.payoff_at(&spots, b.grid.point(i)) <= 0.0 {
                continue;
            }
            rows += 1;
            let flips = (1..date.slice.len()).filter(|&k| date.exercises(i, k) != date.exercises(i, k - 1)).count();
            ok += (flips <= 1) as usize;
        }
        let share = ok as f64 / rows.max(1) as f64;
        ensure!(share >= 0.99, "date {}: only {:.1}% of rows cross once", date.date, 100.0 * share);
    }
    Ok(())
}

// ---------------------------------------------------------------- baselines

fn baselines_lsmc_deterministic() -> Result<(), String> {
    let cfg = LsmcConfig { n_paths: 5000, n_low_paths: 5000, n_steps: 120, degree: 3, direct: DirectStyle::CashFlow };
    let a = lsmc_price(&heston(), &monthly_put(12), &cfg, 5).map_err(e2s)?;
    let b = lsmc_price(&heston(), &monthly_put(12), &cfg, 5).map_err(e2s)?;
    ensure!(a == b, "two runs with one seed differ");
    Ok(())
}

fn baselines_fd_self_convergence() -> Result<(), String> {
    let h = HestonSpec::benchmark();
    let option = monthly_put(12);
    let coarse = FdConfig { n_s: 256, n_v: 64, n_t: 6000, ..FdConfig::reference() };
    let fine = FdConfig { n_s: 512, n_v: 128, n_t: 24_000, ..FdConfig::reference() };
    let a = fd_price(&h, &option, &coarse, FdExercise::Bermudan).map_err(e2s)?;
    let b = fd_price(&h, &option, &fine, FdExercise::Bermudan).map_err(e2s)?;
    let (va, vb) = (a.value_at(h.s0, h.v0), b.value_at(h.s0, h.v0));
    ensure!((va - vb).abs() < 5e-4, "ATM value moved from {va:.6} to {vb:.6}");
    // deep in the money exercise at the first date is optimal, and t0 itself
    // is not an exercise date: the value is the forward-discounted intrinsic
    let df = (-h.r * option.schedule.dt()).exp();
    for s in [0.5, 1.0, 2.0] {
        let v = b.value_at(s, h.v0);
        let expect = 10.0 * df - s;
        ensure!((v - expect).abs() <= 1e-6, "value {v} at S = {s}, expected {expect}");
    }
    Ok(())
}
