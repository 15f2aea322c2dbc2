//! Multilevel (multi-grid) estimation: many paths solved on a coarse grid,
//! corrected by a few paths solved on both a coarse and a fine grid.
//!
//! Level `l` uses its own independent path set and grid resolution `n_l`.
//! The correction for level `l >= 1` solves every path of that set at `n_l`
//! and `n_{l-1}`, so the two solves share the same Θ records.

use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fst::{build_psi, FstSolver, GridSpec, ValueSurface};
use crate::model::{simulate_paths, ExerciseSchedule, ModelSpec, PathBundle};
use crate::pricer::{
    at_date, check_inputs, date_basis, level_moments, policy_sums, reduced_rows, std_error, variance_band,
    DirectResult, HybridSetup, LowResult, MlmcInputs, OptionSpec, Policy, StepContext,
};
use crate::regression::{gram_matrix, solve_coefficients, BasisFamily, CoeffSurface};
use crate::stats::{self, fit_line, LineFit};

/// Path counts and grid resolutions per level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MlmcLevelPlan {
    pub paths: Vec<usize>,
    pub resolutions: Vec<usize>,
}

impl MlmcLevelPlan {
    /// Path counts must strictly decrease and resolutions strictly increase
    /// (powers of two) across levels.
    pub fn new(paths: Vec<usize>, resolutions: Vec<usize>) -> Result<Self> {
        if paths.is_empty() || paths.len() != resolutions.len() {
            return Err(Error::Configuration(format!(
                "level plan has {} path counts and {} resolutions",
                paths.len(),
                resolutions.len()
            )));
        }
        if paths.contains(&0) {
            return Err(Error::Configuration("every level needs at least one path".into()));
        }
        if let Some(r) = resolutions.iter().find(|r| !r.is_power_of_two() || **r < 4) {
            return Err(Error::Configuration(format!("level resolution {r} is not a power of two >= 4")));
        }
        if paths.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::Configuration("path counts must strictly decrease with level".into()));
        }
        if resolutions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Configuration("grid resolutions must strictly increase with level".into()));
        }
        Ok(Self { paths, resolutions })
    }

    /// The plain estimator: one level.
    pub fn single(paths: usize, resolution: usize) -> Result<Self> {
        Self::new(vec![paths], vec![resolution])
    }

    pub fn levels(&self) -> usize {
        self.paths.len()
    }

    pub fn finest_level(&self) -> usize {
        self.paths.len() - 1
    }

    pub fn grids(&self, finest: &GridSpec) -> Result<Vec<GridSpec>> {
        self.resolutions.iter().map(|&r| finest.with_resolution(r)).collect()
    }
}

/// Map grid values between nested resolutions: injection when coarsening,
/// linear (bilinear in 2-d) interpolation when refining. Past the last
/// coarse node the last interval is extended linearly, so affine data are
/// reproduced exactly.
pub fn interpolate_values(values: &[f64], from: &GridSpec, to: &GridSpec) -> Result<Vec<f64>> {
    if values.len() != from.len() {
        return Err(Error::Configuration("value count does not match source grid".into()));
    }
    if from.n == to.n {
        from.nesting_factor(to)?;
        return Ok(values.to_vec());
    }
    if from.n > to.n {
        let inj = crate::pricer::injection(to, from)?;
        return Ok(inj.iter().map(|&k| values[k]).collect());
    }
    let stride = from.nesting_factor(to)?;
    let (nc, nf) = (from.n, to.n);
    match from.dim {
        1 => Ok(refine_line(values, stride, nf)),
        _ => {
            // along the second (fast) axis, then the first
            let mut half = vec![0.0; nc * nf];
            for r in 0..nc {
                let line = refine_line(&values[r * nc..(r + 1) * nc], stride, nf);
                half[r * nf..(r + 1) * nf].copy_from_slice(&line);
            }
            let mut out = vec![0.0; nf * nf];
            let mut col = vec![0.0; nc];
            for c in 0..nf {
                for r in 0..nc {
                    col[r] = half[r * nf + c];
                }
                for (r, v) in refine_line(&col, stride, nf).into_iter().enumerate() {
                    out[r * nf + c] = v;
                }
            }
            Ok(out)
        }
    }
}

fn refine_line(u: &[f64], stride: usize, nf: usize) -> Vec<f64> {
    let nc = u.len();
    (0..nf)
        .map(|k| {
            let (i, rem) = (k / stride, k % stride);
            if rem == 0 {
                return u[i];
            }
            let t = rem as f64 / stride as f64;
            if i + 1 < nc {
                u[i] + t * (u[i + 1] - u[i])
            } else {
                u[i] + t * (u[i] - u[i - 1])
            }
        })
        .collect()
}

pub fn interpolate_surface(surface: &ValueSurface, to_res: usize) -> Result<ValueSurface> {
    let to = surface.grid.with_resolution(to_res)?;
    Ok(ValueSurface { grid: to, values: interpolate_values(&surface.values, &surface.grid, &to)? })
}

/// Interpolate each coefficient component as a grid function.
pub fn interpolate_coeffs(c: &CoeffSurface, to_res: usize) -> Result<CoeffSurface> {
    let to = c.grid.with_resolution(to_res)?;
    let db = c.basis.size();
    let rows = stack_rows(&c.coeffs, db, c.grid.len());
    let moved = interpolate_rows(&rows, db, &c.grid, &to)?;
    let mut coeffs = vec![0.0; to.len() * db];
    for m in 0..db {
        for i in 0..to.len() {
            coeffs[i * db + m] = moved[m * to.len() + i];
        }
    }
    Ok(CoeffSurface { grid: to, basis: c.basis.clone(), coeffs, date: c.date })
}

fn stack_rows(grid_major: &[f64], db: usize, ng: usize) -> Vec<f64> {
    let mut out = vec![0.0; db * ng];
    for i in 0..ng {
        for m in 0..db {
            out[m * ng + i] = grid_major[i * db + m];
        }
    }
    out
}

/// Interpolate a `rows × from.len()` block row by row.
fn interpolate_rows(block: &[f64], rows: usize, from: &GridSpec, to: &GridSpec) -> Result<Vec<f64>> {
    if from.n == to.n {
        return Ok(block.to_vec());
    }
    let mut out = Vec::with_capacity(rows * to.len());
    for r in 0..rows {
        out.extend(interpolate_values(&block[r * from.len()..(r + 1) * from.len()], from, to)?);
    }
    Ok(out)
}

/// Level solvers and grids for a plan whose finest level is `finest`.
struct Levels {
    grids: Vec<GridSpec>,
    solvers: Vec<FstSolver>,
}

impl Levels {
    fn new(plan: &MlmcLevelPlan, finest: &GridSpec) -> Result<Self> {
        if *plan.resolutions.last().unwrap() != finest.n {
            return Err(Error::Configuration(format!(
                "finest level resolution {} differs from output grid {}",
                plan.resolutions.last().unwrap(),
                finest.n
            )));
        }
        let grids = plan.grids(finest)?;
        let solvers = grids.iter().map(|g| FstSolver::new(*g)).collect();
        Ok(Self { grids, solvers })
    }
}

/// Correction moments `sum_j phi(v_j) (C_j^fine - C_j^coarse)` of one path
/// set, both interpolated to `ctx.fine`. The two resolutions may coincide,
/// in which case the correction vanishes identically.
pub(crate) fn correction_moments(
    ctx: &StepContext<'_>,
    rows: &[f64],
    fine: &FstSolver,
    coarse: &FstSolver,
    basis: Option<&BasisFamily>,
) -> Result<Vec<f64>> {
    let db = basis.map_or(1, |b| b.size());
    let w = vec![1.0; rows.len() / ctx.layout.len()];
    let mf = level_moments(ctx, rows, &w, fine, basis)?;
    let mc = level_moments(ctx, rows, &w, coarse, basis)?;
    let mf = interpolate_rows(&mf, db, fine.grid(), &ctx.fine)?;
    let mc = interpolate_rows(&mc, db, coarse.grid(), &ctx.fine)?;
    Ok(mf.iter().zip(&mc).map(|(a, b)| a - b).collect())
}

/// Multilevel estimate of `E[phi(v_n) C(s)]` on the finest grid, already
/// normalized by each level's path count.
fn multilevel_moments(
    ctx: &StepContext<'_>,
    paths0: &PathBundle,
    corrections: &[PathBundle],
    levels: &Levels,
    interval: usize,
    basis: Option<&BasisFamily>,
    clusters: Option<usize>,
) -> Result<Vec<f64>> {
    let db = basis.map_or(1, |b| b.size());
    let (rows, weights) = reduced_rows(paths0, interval, clusters)?;
    let m0 = level_moments(ctx, &rows, &weights, &levels.solvers[0], basis)?;
    let n0 = paths0.n_paths as f64;
    let m0: Vec<f64> = m0.iter().map(|x| x / n0).collect();
    let mut total = interpolate_rows(&m0, db, &levels.grids[0], &ctx.fine)?;
    for (l, bundle) in corrections.iter().enumerate() {
        let rows = bundle.interval_block(interval);
        let corr = correction_moments(ctx, &rows, &levels.solvers[l + 1], &levels.solvers[l], basis)?;
        let nl = bundle.n_paths as f64;
        for (t, c) in total.iter_mut().zip(&corr) {
            *t += c / nl;
        }
    }
    Ok(total)
}

fn check_plan(paths0: &PathBundle, ml: &MlmcInputs<'_>) -> Result<()> {
    let plan = ml.plan;
    if plan.levels() != 1 + ml.corrections.len() {
        return Err(Error::Configuration(format!(
            "plan has {} levels but {} path sets were supplied",
            plan.levels(),
            1 + ml.corrections.len()
        )));
    }
    let counts = std::iter::once(paths0).chain(ml.corrections).map(|b| b.n_paths);
    if counts.zip(&plan.paths).any(|(a, &b)| a != b) {
        return Err(Error::Configuration("path set sizes do not match the level plan".into()));
    }
    Ok(())
}

/// Multilevel regression coefficients at one date, optionally clustering the
/// level-0 paths. The Gram matrix always uses every level-0 path.
#[allow(clippy::too_many_arguments)]
pub fn mlmc_coefficients(
    ml: MlmcInputs<'_>,
    paths0: &PathBundle,
    date: usize,
    next: Option<&CoeffSurface>,
    model: &ModelSpec,
    option: &OptionSpec,
    setup: &HybridSetup,
    clusters: Option<usize>,
) -> Result<CoeffSurface> {
    check_plan(paths0, &ml)?;
    let levels = Levels::new(ml.plan, &setup.grid)?;
    let payoff = option.payoff_surface(&setup.grid, &model.spots());
    let dt = option.schedule.dt();
    let ctx = StepContext {
        model,
        layout: paths0.layout,
        dt,
        df: (-model.rate() * dt).exp(),
        payoff: &payoff.values,
        fine: setup.grid,
        next,
    };
    date_coefficients(&ctx, paths0, ml.corrections, &levels, date, setup, clusters)
}

fn date_coefficients(
    ctx: &StepContext<'_>,
    paths0: &PathBundle,
    corrections: &[PathBundle],
    levels: &Levels,
    n: usize,
    setup: &HybridSetup,
    clusters: Option<usize>,
) -> Result<CoeffSurface> {
    let dim = ctx.model.dim();
    let v_n = paths0.start_variances(n);
    let basis = date_basis(&v_n, dim, setup)?;
    let gram = gram_matrix(&v_n, &basis, &setup.trunc).map_err(|e| at_date(e, n))?;
    let m = multilevel_moments(ctx, paths0, corrections, levels, n, Some(&basis), clusters).map_err(|e| at_date(e, n))?;
    solve_coefficients(&m, 1.0, &gram, setup.grid, basis, n).map_err(|e| at_date(e, n))
}

/// Backward induction with multilevel coefficients and a multilevel
/// time-zero average.
pub(crate) fn multilevel_backward_induction(
    paths0: &PathBundle,
    ml: MlmcInputs<'_>,
    model: &ModelSpec,
    option: &OptionSpec,
    setup: &HybridSetup,
    clusters: Option<usize>,
) -> Result<DirectResult> {
    check_plan(paths0, &ml)?;
    for b in ml.corrections {
        check_inputs(b, model, option, &setup.grid)?;
    }
    let levels = Levels::new(ml.plan, &setup.grid)?;
    let grid = setup.grid;
    let payoff = option.payoff_surface(&grid, &model.spots());
    let m = option.schedule.n_dates;
    let dt = option.schedule.dt();
    let mut coeffs: Vec<CoeffSurface> = Vec::new();
    let mut v_bands = Vec::new();
    for n in (1..m).rev() {
        let ctx = StepContext {
            model,
            layout: paths0.layout,
            dt,
            df: (-model.rate() * dt).exp(),
            payoff: &payoff.values,
            fine: grid,
            next: coeffs.last(),
        };
        let a = date_coefficients(&ctx, paths0, ml.corrections, &levels, n, setup, clusters)?;
        v_bands.push(variance_band(&paths0.start_variances(n), model.dim()));
        coeffs.push(a);
    }
    let ctx = StepContext {
        model,
        layout: paths0.layout,
        dt,
        df: (-model.rate() * dt).exp(),
        payoff: &payoff.values,
        fine: grid,
        next: coeffs.last(),
    };
    let avg = multilevel_moments(&ctx, paths0, ml.corrections, &levels, 0, None, clusters).map_err(|e| at_date(e, 0))?;
    let values = payoff.values.iter().zip(&avg).map(|(&h, &s)| h.max(s)).collect();
    coeffs.reverse();
    v_bands.reverse();
    Ok(DirectResult { coeffs, direct: ValueSurface { grid, values }, v_bands })
}

/// Multilevel low estimator: each level follows the same policy (read at
/// the injected fine nodes) on fresh paths; `bundles[0]` is level 0.
pub fn mlmc_low_estimate(
    plan: &MlmcLevelPlan,
    bundles: &[PathBundle],
    policy: Policy<'_>,
    model: &ModelSpec,
    option: &OptionSpec,
    grid: &GridSpec,
) -> Result<LowResult> {
    if bundles.is_empty() {
        return Err(Error::Configuration("no path sets for the low estimator".into()));
    }
    check_plan(&bundles[0], &MlmcInputs { plan, corrections: &bundles[1..] })?;
    for b in bundles {
        check_inputs(b, model, option, grid)?;
    }
    let levels = Levels::new(plan, grid)?;
    let payoff = option.payoff_surface(grid, &model.spots());
    let ng0 = levels.grids[0].len();
    let acc0 = policy_sums(&policy, &bundles[0], model, option, &payoff.values, grid, &levels.solvers[0], None)?;
    let n0 = bundles[0].n_paths as f64;
    let level0: Vec<f64> = acc0[..ng0].iter().map(|s| s / n0).collect();
    let mut values = interpolate_values(&level0, &levels.grids[0], grid)?;
    let se0 = std_error(acc0[ng0], acc0[ng0 + 1], n0);
    let mut var = se0 * se0;
    for l in 1..plan.levels() {
        let (gf, gc) = (&levels.grids[l], &levels.grids[l - 1]);
        let acc = policy_sums(
            &policy,
            &bundles[l],
            model,
            option,
            &payoff.values,
            grid,
            &levels.solvers[l],
            Some(&levels.solvers[l - 1]),
        )?;
        let nl = bundles[l].n_paths as f64;
        let (ngf, ngc) = (gf.len(), gc.len());
        let fine = interpolate_values(&acc[..ngf], gf, grid)?;
        let coarse = interpolate_values(&acc[ngf..ngf + ngc], gc, grid)?;
        for ((v, f), c) in values.iter_mut().zip(&fine).zip(&coarse) {
            *v += (f - c) / nl;
        }
        let se = std_error(acc[ngf + ngc], acc[ngf + ngc + 1], nl);
        var += se * se;
    }
    Ok(LowResult { surface: ValueSurface { grid: *grid, values }, atm_std_error: var.sqrt() })
}

/// Settings for the single-period level test.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelTestConfig {
    pub resolutions: Vec<usize>,
    pub reference: usize,
    pub trials: usize,
    pub n_steps: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub timing_repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelRow {
    pub level: usize,
    pub resolution: usize,
    /// `E[P_l - P_ref]` at the spot.
    pub bias: f64,
    /// `Var[Y_l]` with `Y_0 = P_0`, `Y_l = P_l - P_{l-1}`.
    pub var_y: f64,
    /// Seconds per sample of `Y_l`.
    pub cost: f64,
    pub log2_bias: f64,
    pub log2_var: f64,
    pub log2_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub r_squared: f64,
}

impl From<LineFit> for SlopeFit {
    fn from(f: LineFit) -> Self {
        Self { slope: f.slope, r_squared: f.r_squared }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelTestReport {
    pub rows: Vec<LevelRow>,
    pub reference: usize,
    pub trials: usize,
    /// Decay rate of `|bias|` (negated log2 slope), fitted over all levels.
    pub alpha: Option<SlopeFit>,
    /// Decay rate of `Var[Y_l]`, fitted over levels `l >= 1`.
    pub beta: Option<SlopeFit>,
    /// Growth rate of the cost per sample.
    pub gamma: SlopeFit,
    /// Set when every correction is identically zero, so bias and variance
    /// slopes are meaningless.
    pub degenerate_bias: bool,
}

impl LevelTestReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "level,resolution,log2_bias,log2_var,log2_cost")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{},{}", r.level, r.resolution, r.log2_bias, r.log2_var, r.log2_cost)?;
        }
        let s = |f: Option<SlopeFit>| f.map_or("nan".to_string(), |f| f.slope.to_string());
        writeln!(w, "slope,,{},{},{}", s(self.alpha), s(self.beta), self.gamma.slope)?;
        Ok(())
    }
}

/// European analogue of the option priced by a single spectral solve over
/// `[0, T]`, one variance path per trial, at each level resolution and at
/// the reference resolution.
pub fn level_test(model: &ModelSpec, option: &OptionSpec, cfg: &LevelTestConfig, seed: u64) -> Result<LevelTestReport> {
    option.validate(model)?;
    let nl = cfg.resolutions.len();
    if nl < 3 {
        return Err(Error::Configuration(format!("level test needs at least 3 levels, got {nl}")));
    }
    if cfg.trials < 2 {
        return Err(Error::Configuration("level test needs at least 2 trials".into()));
    }
    if cfg.resolutions.iter().any(|&r| r >= cfg.reference) {
        return Err(Error::Configuration("reference resolution must exceed every level".into()));
    }
    let dim = model.dim();
    let reference = GridSpec::new(dim, cfg.reference, cfg.x_min, cfg.x_max)?;
    let grids = cfg
        .resolutions
        .iter()
        .map(|&r| GridSpec::new(dim, r, cfg.x_min, cfg.x_max))
        .collect::<Result<Vec<_>>>()?;
    let whole = ExerciseSchedule::new(option.schedule.maturity, 1)?;
    let paths = simulate_paths(model, &whole, cfg.trials, cfg.n_steps, seed)?;
    let t = whole.maturity;
    let df = (-model.rate() * t).exp();
    let s0 = model.spots();

    let price_all = |grid: &GridSpec| -> Result<Vec<f64>> {
        let solver = FstSolver::new(*grid);
        let payoff = option.payoff_surface(grid, &s0);
        let origin = grid.origin_index();
        crate::par::try_map_range(cfg.trials, |j| {
            let psi = build_psi(paths.record(j, 0), model, grid, t)?;
            let mut ws = solver.workspace();
            let mut out = vec![0.0; grid.len()];
            solver.solve_into(&payoff.values, &psi, &mut ws, &mut out)?;
            Ok(df * out[origin])
        })
    };
    let p_ref = price_all(&reference)?;
    let prices = grids.iter().map(&price_all).collect::<Result<Vec<_>>>()?;
    let costs = time_levels(model, option, &paths, &grids, cfg.timing_repeats.max(1))?;

    let mut rows = Vec::with_capacity(nl);
    for l in 0..nl {
        let diff: Vec<f64> = prices[l].iter().zip(&p_ref).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = if l == 0 {
            prices[0].clone()
        } else {
            prices[l].iter().zip(&prices[l - 1]).map(|(a, b)| a - b).collect()
        };
        let bias = stats::mean(&diff);
        let var_y = stats::sample_variance(&y);
        rows.push(LevelRow {
            level: l,
            resolution: cfg.resolutions[l],
            bias,
            var_y,
            cost: costs[l],
            log2_bias: bias.abs().log2(),
            log2_var: var_y.log2(),
            log2_cost: costs[l].log2(),
        });
    }
    let degenerate_bias = rows[1..].iter().all(|r| r.var_y == 0.0)
        && prices.windows(2).all(|w| w[0].iter().zip(&w[1]).all(|(a, b)| a == b));
    let lv: Vec<f64> = (0..nl).map(|l| l as f64).collect();
    let (alpha, beta) = if degenerate_bias {
        (None, None)
    } else {
        let fa = fit_line(&lv, &rows.iter().map(|r| r.log2_bias).collect::<Vec<_>>());
        let fb = fit_line(&lv[1..], &rows[1..].iter().map(|r| r.log2_var).collect::<Vec<_>>());
        (
            Some(SlopeFit { slope: -fa.slope, r_squared: fa.r_squared }),
            Some(SlopeFit { slope: -fb.slope, r_squared: fb.r_squared }),
        )
    };
    let gamma = fit_line(&lv, &rows.iter().map(|r| r.log2_cost).collect::<Vec<_>>()).into();
    Ok(LevelTestReport { rows, reference: cfg.reference, trials: cfg.trials, alpha, beta, gamma, degenerate_bias })
}

/// Wall-clock seconds per sample of `Y_l` (solves at level `l` and `l-1`),
/// measured sequentially on the calling thread; each repeat runs whole
/// batches of trials until at least 5 ms have elapsed, and the median over
/// repeats is reported.
fn time_levels(
    model: &ModelSpec,
    option: &OptionSpec,
    paths: &PathBundle,
    grids: &[GridSpec],
    repeats: usize,
) -> Result<Vec<f64>> {
    let t = option.schedule.maturity;
    let s0 = model.spots();
    let solvers: Vec<FstSolver> = grids.iter().map(|g| FstSolver::new(*g)).collect();
    let payoffs: Vec<ValueSurface> = grids.iter().map(|g| option.payoff_surface(g, &s0)).collect();
    let mut costs = Vec::with_capacity(grids.len());
    for l in 0..grids.len() {
        let involved: Vec<usize> = if l == 0 { vec![0] } else { vec![l - 1, l] };
        let mut wss: Vec<_> = involved.iter().map(|&k| solvers[k].workspace()).collect();
        let mut outs: Vec<Vec<f64>> = involved.iter().map(|&k| vec![0.0; grids[k].len()]).collect();
        let mut samples = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let start = Instant::now();
            let mut done = 0usize;
            loop {
                for j in 0..paths.n_paths {
                    for (slot, &k) in involved.iter().enumerate() {
                        let psi = build_psi(paths.record(j, 0), model, &grids[k], t)?;
                        solvers[k].solve_into(&payoffs[k].values, &psi, &mut wss[slot], &mut outs[slot])?;
                    }
                }
                done += paths.n_paths;
                if start.elapsed().as_secs_f64() >= 5e-3 {
                    break;
                }
            }
            samples.push(start.elapsed().as_secs_f64() / done as f64);
        }
        samples.sort_by(f64::total_cmp);
        costs.push(samples[samples.len() / 2]);
    }
    Ok(costs)
}
