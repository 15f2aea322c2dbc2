//! Backward induction for the hybrid estimator: per-path spectral solves over
//! each exercise interval, cross-sectional regression in the variance, and
//! the resulting direct and low estimates and exercise boundaries.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::clustering::{cluster_paths, clustered_weights};
use crate::error::{Error, Result};
use crate::fst::{build_psi, FstSolver, GridSpec, ValueSurface};
use crate::mlmc::{self, MlmcLevelPlan};
use crate::model::{derive_seed, simulate_paths, ExerciseSchedule, ModelSpec, PathBundle, ThetaLayout};
use crate::regression::{
    accumulate_moment, dot, gram_matrix, solve_coefficients, BasisFamily, CoeffSurface, TruncationConfig,
};
use crate::{par, stats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PayoffKind {
    /// `(K - S)_+` on a single asset.
    Put,
    /// `(K - max(S1, S2))_+` on two assets.
    MaxPut,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionSpec {
    pub kind: PayoffKind,
    pub strike: f64,
    pub schedule: ExerciseSchedule,
    /// Optional half-width in log-moneyness beyond which the payoff is set to
    /// zero, giving it compact support inside the grid.
    pub clip: Option<f64>,
}

impl OptionSpec {
    pub fn put(strike: f64, schedule: ExerciseSchedule) -> Self {
        Self { kind: PayoffKind::Put, strike, schedule, clip: None }
    }

    pub fn max_put(strike: f64, schedule: ExerciseSchedule) -> Self {
        Self { kind: PayoffKind::MaxPut, strike, schedule, clip: None }
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            PayoffKind::Put => 1,
            PayoffKind::MaxPut => 2,
        }
    }

    pub fn validate(&self, model: &ModelSpec) -> Result<()> {
        if !(self.strike > 0.0) || !self.strike.is_finite() {
            return Err(Error::Parameter { name: "strike", value: self.strike, reason: "must be positive" });
        }
        if self.dim() != model.dim() {
            return Err(Error::Configuration(format!(
                "a {}-asset payoff does not fit a {}-asset model",
                self.dim(),
                model.dim()
            )));
        }
        Ok(())
    }

    /// Payoff at asset prices `spots`.
    pub fn payoff(&self, spots: &[f64]) -> f64 {
        let s = match self.kind {
            PayoffKind::Put => spots[0],
            PayoffKind::MaxPut => spots[0].max(spots[1]),
        };
        (self.strike - s).max(0.0)
    }

    /// Payoff at log-moneyness `x` relative to `s0`.
    pub fn payoff_at(&self, s0: &[f64], x: [f64; 2]) -> f64 {
        if let Some(c) = self.clip {
            if x[..self.dim()].iter().any(|xi| xi.abs() > c) {
                return 0.0;
            }
        }
        let spots: Vec<f64> = s0.iter().zip(x).map(|(s, xi)| s * xi.exp()).collect();
        self.payoff(&spots)
    }

    pub fn payoff_surface(&self, grid: &GridSpec, s0: &[f64]) -> ValueSurface {
        ValueSurface::from_fn(*grid, |p| self.payoff_at(s0, p))
    }
}

/// Exercise when the payoff is positive and at least the continuation value.
#[inline]
pub fn exercise(h: f64, continuation: f64) -> bool {
    h > 0.0 && h >= continuation
}

/// Numerical settings shared by the direct and low estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridSetup {
    /// Finest (output) grid.
    pub grid: GridSpec,
    pub degree: usize,
    pub trunc: TruncationConfig,
}

/// Optional complexity reductions for [`backward_induction`].
#[derive(Debug, Clone, Copy, Default)]
pub struct Reducers<'a> {
    /// Fixed number of clusters per date for the (level-0) paths.
    pub clusters: Option<usize>,
    pub mlmc: Option<MlmcInputs<'a>>,
}

/// Level plan plus the independent path sets for levels `1..=L`; level 0 is
/// the bundle passed to [`backward_induction`].
#[derive(Debug, Clone, Copy)]
pub struct MlmcInputs<'a> {
    pub plan: &'a MlmcLevelPlan,
    pub corrections: &'a [PathBundle],
}

/// Output of the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectResult {
    /// Continuation coefficients for dates `1..M-1`, in date order.
    pub coeffs: Vec<CoeffSurface>,
    /// Time-zero direct estimate on the finest grid.
    pub direct: ValueSurface,
    /// Per date `1..M-1`: the `[q5, q95]` band of simulated variance per factor.
    pub v_bands: Vec<Vec<(f64, f64)>>,
}

impl DirectResult {
    pub fn atm(&self) -> f64 {
        self.direct.at_origin()
    }

    /// Coefficients for exercise date `n` (`1 <= n < M`).
    pub fn coeffs_at(&self, n: usize) -> Option<&CoeffSurface> {
        self.coeffs.iter().find(|c| c.date == n)
    }
}

/// Everything needed to turn a block of Θ rows into conditional-expectation
/// moments at one date.
pub(crate) struct StepContext<'a> {
    pub model: &'a ModelSpec,
    pub layout: ThetaLayout,
    pub dt: f64,
    pub df: f64,
    /// Payoff on the finest grid.
    pub payoff: &'a [f64],
    pub fine: GridSpec,
    /// `a_{n+1}` on the finest grid; `None` when `t_{n+1}` is maturity.
    pub next: Option<&'a CoeffSurface>,
}

/// Flat indices of the fine-grid nodes that coincide with `coarse` nodes.
pub(crate) fn injection(coarse: &GridSpec, fine: &GridSpec) -> Result<Vec<usize>> {
    let stride = coarse.nesting_factor(fine)?;
    Ok(match coarse.dim {
        1 => (0..coarse.n).map(|i| i * stride).collect(),
        _ => (0..coarse.len())
            .map(|k| (k / coarse.n) * stride * fine.n + (k % coarse.n) * stride)
            .collect(),
    })
}

/// `sum_j w_j phi(v_n^j) C_j(s)` on the solver's grid, `d_B × n_grid`, with
/// `C_j = e^{-r dt} E[max(h, a_{n+1} phi(v_{n+1}^j)) | Θ_j]`. With `basis =
/// None` the weight function is the constant 1 (a single row).
pub(crate) fn level_moments(
    ctx: &StepContext<'_>,
    rows: &[f64],
    weights: &[f64],
    solver: &FstSolver,
    basis: Option<&BasisFamily>,
) -> Result<Vec<f64>> {
    let grid = *solver.grid();
    let ng = grid.len();
    let d = ctx.layout.len();
    let db = basis.map_or(1, |b| b.size());
    let inj = injection(&grid, &ctx.fine)?;
    let n_rows = weights.len();
    par::try_reduce_chunks(n_rows, db * ng, |range, acc| {
        let mut ws = solver.workspace();
        let mut terminal = vec![0.0; ng];
        let mut out = vec![0.0; ng];
        let mut phi = vec![1.0; db];
        let mut phi_next = vec![0.0; ctx.next.map_or(0, |c| c.basis.size())];
        for j in range {
            let theta = &rows[j * d..(j + 1) * d];
            terminal_values(ctx, theta, &inj, &mut phi_next, &mut terminal);
            let psi = build_psi(theta, ctx.model, &grid, ctx.dt)?;
            solver.solve_into(&terminal, &psi, &mut ws, &mut out).map_err(|e| at_row(e, j))?;
            out.iter_mut().for_each(|x| *x *= ctx.df);
            if let Some(b) = basis {
                b.eval_into(ctx.layout.start_variance(theta), &mut phi);
            }
            accumulate_moment(acc, weights[j], &phi, &out);
        }
        Ok(())
    })
}

fn at_row(e: Error, j: usize) -> Error {
    match e {
        Error::Numeric(msg) => Error::Numeric(format!("{msg} (path {j})")),
        other => other,
    }
}

/// Terminal condition `max(h, a_{n+1} . phi(v_{n+1}))` at the injected nodes.
fn terminal_values(ctx: &StepContext<'_>, theta: &[f64], inj: &[usize], phi_next: &mut [f64], out: &mut [f64]) {
    match ctx.next {
        None => {
            for (o, &k) in out.iter_mut().zip(inj) {
                *o = ctx.payoff[k];
            }
        }
        Some(next) => {
            next.basis.eval_into(ctx.layout.end_variance(theta), phi_next);
            for (o, &k) in out.iter_mut().zip(inj) {
                *o = ctx.payoff[k].max(dot(next.at(k), phi_next));
            }
        }
    }
}

/// Basis over the support box of the date's simulated variances.
pub(crate) fn date_basis(v_n: &[f64], dim: usize, setup: &HybridSetup) -> Result<BasisFamily> {
    let support = setup.trunc.support_box(v_n, dim)?;
    Ok(BasisFamily::for_box(dim, setup.degree, &support)?.scaled())
}

/// Per-component `[q5, q95]` of the variances at one date.
pub fn variance_band(v_n: &[f64], dim: usize) -> Vec<(f64, f64)> {
    (0..dim)
        .map(|c| {
            let col: Vec<f64> = v_n.iter().skip(c).step_by(dim).copied().collect();
            (stats::quantile(&col, 0.05), stats::quantile(&col, 0.95))
        })
        .collect()
}

/// Variance bands at dates `1..M-1` from a fresh simulation, for boundaries
/// of pricers that do not simulate Θ themselves.
pub fn simulated_variance_bands(
    model: &ModelSpec,
    schedule: &ExerciseSchedule,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<Vec<Vec<(f64, f64)>>> {
    let paths = simulate_paths(model, schedule, n_paths, n_steps, seed)?;
    Ok((1..schedule.n_dates).map(|n| variance_band(&paths.start_variances(n), model.dim())).collect())
}

/// Θ rows and weights for one date, clustered when requested.
pub(crate) fn reduced_rows(paths: &PathBundle, interval: usize, clusters: Option<usize>) -> Result<(Vec<f64>, Vec<f64>)> {
    let block = paths.interval_block(interval);
    match clusters {
        Some(k) => {
            let a = cluster_paths(&block, paths.layout.len(), k.min(paths.n_paths))?;
            let w = clustered_weights(&a);
            Ok((a.representatives, w))
        }
        None => Ok((block, vec![1.0; paths.n_paths])),
    }
}

pub(crate) fn check_inputs(paths: &PathBundle, model: &ModelSpec, option: &OptionSpec, grid: &GridSpec) -> Result<()> {
    model.validate()?;
    option.validate(model)?;
    if paths.layout != model.layout() || grid.dim != model.dim() {
        return Err(Error::Configuration("paths, grid and model dimensions differ".into()));
    }
    if paths.intervals != option.schedule.n_dates {
        return Err(Error::Configuration(format!(
            "paths cover {} intervals but the option has {} exercise dates",
            paths.intervals, option.schedule.n_dates
        )));
    }
    if paths.n_paths == 0 {
        return Err(Error::Configuration("no simulated paths".into()));
    }
    Ok(())
}

/// Backward induction over the exercise dates, producing the continuation
/// coefficients and the time-zero direct estimate.
///
/// `V_M = h`; for `n = M-1..1` each path's terminal condition
/// `max(h, C_{n+1}(., v_{n+1}))` is solved back over `[t_n, t_{n+1}]` and the
/// results are regressed on `v_n`; at `t_0` the solves are averaged.
pub fn backward_induction(
    paths: &PathBundle,
    model: &ModelSpec,
    option: &OptionSpec,
    setup: &HybridSetup,
    reducers: Reducers<'_>,
) -> Result<DirectResult> {
    check_inputs(paths, model, option, &setup.grid)?;
    if let Some(ml) = reducers.mlmc {
        return mlmc::multilevel_backward_induction(paths, ml, model, option, setup, reducers.clusters);
    }
    let m = option.schedule.n_dates;
    let dt = option.schedule.dt();
    let dim = model.dim();
    let grid = setup.grid;
    let payoff = option.payoff_surface(&grid, &model.spots());
    let solver = FstSolver::new(grid);
    let n_total = paths.n_paths as f64;
    let mut coeffs: Vec<CoeffSurface> = Vec::with_capacity(m.saturating_sub(1));
    let mut v_bands = Vec::with_capacity(m.saturating_sub(1));
    for n in (1..m).rev() {
        let v_n = paths.start_variances(n);
        let basis = date_basis(&v_n, dim, setup)?;
        let gram = gram_matrix(&v_n, &basis, &setup.trunc).map_err(|e| at_date(e, n))?;
        let (rows, weights) = reduced_rows(paths, n, reducers.clusters)?;
        let ctx = StepContext {
            model,
            layout: paths.layout,
            dt,
            df: (-model.rate() * dt).exp(),
            payoff: &payoff.values,
            fine: grid,
            next: coeffs.last(),
        };
        let moments = level_moments(&ctx, &rows, &weights, &solver, Some(&basis)).map_err(|e| at_date(e, n))?;
        let a = solve_coefficients(&moments, n_total, &gram, grid, basis, n).map_err(|e| at_date(e, n))?;
        v_bands.push(variance_band(&v_n, dim));
        coeffs.push(a);
    }
    let (rows, weights) = reduced_rows(paths, 0, reducers.clusters)?;
    let ctx = StepContext {
        model,
        layout: paths.layout,
        dt,
        df: (-model.rate() * dt).exp(),
        payoff: &payoff.values,
        fine: grid,
        next: coeffs.last(),
    };
    let sums = level_moments(&ctx, &rows, &weights, &solver, None).map_err(|e| at_date(e, 0))?;
    let values = payoff.values.iter().zip(&sums).map(|(&h, &s)| h.max(s / n_total)).collect();
    coeffs.reverse();
    v_bands.reverse();
    Ok(DirectResult { coeffs, direct: ValueSurface { grid, values }, v_bands })
}

pub(crate) fn at_date(e: Error, n: usize) -> Error {
    match e {
        Error::Numeric(msg) => Error::Numeric(format!("{msg} at date {n}")),
        other => other,
    }
}

/// Exercise rule used by the low estimator.
#[derive(Debug, Clone, Copy)]
pub enum Policy<'a> {
    /// Exercise where `h >= C` with `C` from the regressed coefficients.
    Regressed(&'a [CoeffSurface]),
    /// Hold until maturity: the estimator becomes a European price.
    NeverExercise,
}

impl Policy<'_> {
    fn coeffs_at(&self, n: usize) -> Result<Option<&CoeffSurface>> {
        match self {
            Policy::NeverExercise => Ok(None),
            Policy::Regressed(cs) => cs
                .iter()
                .find(|c| c.date == n)
                .map(Some)
                .ok_or_else(|| Error::Configuration(format!("no continuation coefficients for date {n}"))),
        }
    }
}

/// Result of following a policy on fresh paths.
#[derive(Debug, Clone, PartialEq)]
pub struct LowResult {
    pub surface: ValueSurface,
    /// Standard error of the value at the origin.
    pub atm_std_error: f64,
}

impl LowResult {
    pub fn atm(&self) -> f64 {
        self.surface.at_origin()
    }
}

/// Per-path backward pass along one path at the resolution of `solver`; the
/// policy is read at the injected fine-grid nodes. Leaves the time-zero
/// solve in `value`.
pub(crate) fn follow_policy(
    model: &ModelSpec,
    option: &OptionSpec,
    policy: &Policy<'_>,
    paths: &PathBundle,
    j: usize,
    solver: &FstSolver,
    payoff_fine: &[f64],
    inj: &[usize],
    bufs: &mut PolicyBuffers,
) -> Result<()> {
    let grid = *solver.grid();
    let m = option.schedule.n_dates;
    let dt = option.schedule.dt();
    let df = (-model.rate() * dt).exp();
    for (v, &k) in bufs.value.iter_mut().zip(inj) {
        *v = payoff_fine[k];
    }
    for n in (0..m).rev() {
        let theta = paths.record(j, n);
        let psi = build_psi(theta, model, &grid, dt)?;
        solver.solve_into(&bufs.value, &psi, &mut bufs.ws, &mut bufs.hold).map_err(|e| at_date(at_row(e, j), n))?;
        bufs.hold.iter_mut().for_each(|x| *x *= df);
        std::mem::swap(&mut bufs.value, &mut bufs.hold);
        if n == 0 {
            break;
        }
        if let Some(c) = policy.coeffs_at(n)? {
            bufs.phi.resize(c.basis.size(), 0.0);
            c.basis.eval_into(paths.layout.start_variance(theta), &mut bufs.phi);
            for (v, &k) in bufs.value.iter_mut().zip(inj) {
                let h = payoff_fine[k];
                if exercise(h, dot(c.at(k), &bufs.phi)) {
                    *v = h;
                }
            }
        }
    }
    Ok(())
}

pub(crate) struct PolicyBuffers {
    pub ws: crate::fst::FstWorkspace,
    pub value: Vec<f64>,
    pub hold: Vec<f64>,
    pub phi: Vec<f64>,
}

impl PolicyBuffers {
    pub fn new(solver: &FstSolver) -> Self {
        let n = solver.grid().len();
        Self { ws: solver.workspace(), value: vec![0.0; n], hold: vec![0.0; n], phi: Vec::new() }
    }
}

/// Low (policy) estimator on fresh paths: each path is solved backwards,
/// replacing the held value by the payoff wherever the policy exercises,
/// and the time-zero surfaces are averaged.
pub fn low_estimate(
    policy: Policy<'_>,
    fresh: &PathBundle,
    model: &ModelSpec,
    option: &OptionSpec,
    grid: &GridSpec,
) -> Result<LowResult> {
    check_inputs(fresh, model, option, grid)?;
    let payoff = option.payoff_surface(grid, &model.spots());
    let solver = FstSolver::new(*grid);
    let ng = grid.len();
    let acc = policy_sums(&policy, fresh, model, option, &payoff.values, grid, &solver, None)?;
    let nf = fresh.n_paths as f64;
    let values = acc[..ng].iter().map(|s| s / nf).collect();
    Ok(LowResult { surface: ValueSurface { grid: *grid, values }, atm_std_error: std_error(acc[ng], acc[ng + 1], nf) })
}

/// Sum of per-path policy values at the resolution of `solver`, and of
/// `coarse` when given, followed by the sum and sum of squares of
/// `y = P_fine(0) - P_coarse(0)` at the origin (`P_fine(0)` alone without a
/// coarse solver). Policy and payoff are read at injected nodes of `fine`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn policy_sums(
    policy: &Policy<'_>,
    paths: &PathBundle,
    model: &ModelSpec,
    option: &OptionSpec,
    payoff_fine: &[f64],
    fine: &GridSpec,
    solver: &FstSolver,
    coarse: Option<&FstSolver>,
) -> Result<Vec<f64>> {
    let inj = injection(solver.grid(), fine)?;
    let inj_c = coarse.map(|c| injection(c.grid(), fine)).transpose()?;
    let ng = solver.grid().len();
    let ngc = coarse.map_or(0, |c| c.grid().len());
    let origin = solver.grid().origin_index();
    let origin_c = coarse.map_or(0, |c| c.grid().origin_index());
    par::try_reduce_chunks(paths.n_paths, ng + ngc + 2, |range, acc| {
        let mut bufs = PolicyBuffers::new(solver);
        let mut bufs_c = coarse.map(PolicyBuffers::new);
        for j in range {
            follow_policy(model, option, policy, paths, j, solver, payoff_fine, &inj, &mut bufs)?;
            for (a, v) in acc[..ng].iter_mut().zip(&bufs.value) {
                *a += v;
            }
            let mut y = bufs.value[origin];
            if let (Some(c), Some(bc), Some(ic)) = (coarse, bufs_c.as_mut(), inj_c.as_ref()) {
                follow_policy(model, option, policy, paths, j, c, payoff_fine, ic, bc)?;
                for (a, v) in acc[ng..ng + ngc].iter_mut().zip(&bc.value) {
                    *a += v;
                }
                y -= bc.value[origin_c];
            }
            acc[ng + ngc] += y;
            acc[ng + ngc + 1] += y * y;
        }
        Ok(())
    })
}

pub(crate) fn std_error(sum: f64, sum_sq: f64, n: f64) -> f64 {
    if n < 2.0 {
        return 0.0;
    }
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    (var / n).sqrt()
}

/// Exercise region at one date.
#[derive(Debug, Clone, PartialEq)]
pub struct DateBoundary {
    pub date: usize,
    /// Variance points at which the indicator is evaluated: a 100-point
    /// lattice across the band in 1-d, the long-run variances in 2-d.
    pub slice: Vec<[f64; 2]>,
    /// `grid.len() × slice.len()`, row per grid point; `true` = exercise.
    pub indicator: Vec<bool>,
    /// 1-d only: the first crossing `C(s_i, v*) = h(s_i)` inside the band.
    pub v_star: Vec<Option<f64>>,
}

impl DateBoundary {
    pub fn exercises(&self, grid_index: usize, slice_index: usize) -> bool {
        self.indicator[grid_index * self.slice.len() + slice_index]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyBoundary {
    pub grid: GridSpec,
    pub dates: Vec<DateBoundary>,
}

pub const BOUNDARY_LATTICE: usize = 100;

/// Exercise regions from the regressed continuation values. In 1-d the
/// variance axis spans the per-date `[q5, q95]` band; in 2-d the indicator
/// is taken on the central slice `v = theta`.
pub fn extract_boundary(result: &DirectResult, model: &ModelSpec, option: &OptionSpec) -> Result<PolicyBoundary> {
    let dates: Vec<usize> = result.coeffs.iter().map(|c| c.date).collect();
    boundary_from_continuation(&result.direct.grid, model, option, &dates, &result.v_bands, |k, i, v| {
        result.coeffs[k].evaluate(i, v)
    })
}

/// Exercise regions for any continuation rule `cont(k, grid_index, v)`,
/// where `k` indexes `dates` and `bands`. Shared by the hybrid estimator
/// and the baselines so all boundaries are written in one format.
pub fn boundary_from_continuation<F>(
    grid: &GridSpec,
    model: &ModelSpec,
    option: &OptionSpec,
    dates: &[usize],
    bands: &[Vec<(f64, f64)>],
    cont: F,
) -> Result<PolicyBoundary>
where
    F: Fn(usize, usize, &[f64]) -> f64 + Sync + Send,
{
    if dates.len() != bands.len() {
        return Err(Error::Configuration(format!("{} dates but {} variance bands", dates.len(), bands.len())));
    }
    let grid = *grid;
    let dim = model.dim();
    let payoff = option.payoff_surface(&grid, &model.spots());
    let mut out = Vec::with_capacity(dates.len());
    for (k, (&date, band)) in dates.iter().zip(bands).enumerate() {
        let slice: Vec<[f64; 2]> = match dim {
            1 => lattice(band[0]).into_iter().map(|v| [v, 0.0]).collect(),
            _ => {
                let th = model.long_run_variance();
                vec![[th[0], th[1]]]
            }
        };
        let rows = par::map_range(grid.len(), |i| {
            let h = payoff.values[i];
            let ind: Vec<bool> = slice.iter().map(|v| exercise(h, cont(k, i, &v[..dim]))).collect();
            let star = if dim == 1 && h > 0.0 { crossing(|v| cont(k, i, &[v]) - h, &slice) } else { None };
            (ind, star)
        });
        let mut indicator = Vec::with_capacity(grid.len() * slice.len());
        let mut v_star = Vec::with_capacity(grid.len());
        for (ind, star) in rows {
            indicator.extend(ind);
            v_star.push(star);
        }
        out.push(DateBoundary { date, slice, indicator, v_star });
    }
    Ok(PolicyBoundary { grid, dates: out })
}

fn lattice((lo, hi): (f64, f64)) -> Vec<f64> {
    let n = BOUNDARY_LATTICE;
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

/// Bisection on the first lattice bracket where `f = C - h` changes sign.
fn crossing(f: impl Fn(f64) -> f64, slice: &[[f64; 2]]) -> Option<f64> {
    let vs: Vec<f64> = slice.iter().map(|p| p[0]).collect();
    for w in vs.windows(2) {
        let (mut a, mut b) = (w[0], w[1]);
        let (fa, fb) = (f(a), f(b));
        if fa == 0.0 {
            return Some(a);
        }
        if fa.signum() == fb.signum() {
            continue;
        }
        let mut sa = fa.signum();
        while b - a > 1e-10 {
            let mid = 0.5 * (a + b);
            let fm = f(mid);
            if fm == 0.0 {
                return Some(mid);
            }
            if fm.signum() == sa {
                a = mid;
                sa = fm.signum();
            } else {
                b = mid;
            }
        }
        return Some(0.5 * (a + b));
    }
    None
}

impl PolicyBoundary {
    /// 1-d: `date,index,x,s,v_star,indicator` with the indicator as a
    /// 0/1 string over the variance lattice. 2-d: `date,index,x1,x2,indicator`.
    pub fn write_csv<W: Write>(&self, mut w: W, s0: &[f64]) -> Result<()> {
        let g = &self.grid;
        if g.dim == 1 {
            writeln!(w, "date,index,x,s,v_star,v_lo,v_hi,indicator")?;
        } else {
            writeln!(w, "date,index,x1,x2,v1,v2,indicator")?;
        }
        for d in &self.dates {
            let k = d.slice.len();
            for i in 0..g.len() {
                let p = g.point(i);
                let bits: String = (0..k).map(|s| if d.exercises(i, s) { '1' } else { '0' }).collect();
                if g.dim == 1 {
                    let star = d.v_star[i].map_or(String::new(), |v| format!("{v:.10}"));
                    writeln!(
                        w,
                        "{},{i},{},{},{star},{},{},{bits}",
                        d.date,
                        p[0],
                        s0[0] * p[0].exp(),
                        d.slice[0][0],
                        d.slice[k - 1][0]
                    )?;
                } else {
                    writeln!(w, "{},{i},{},{},{},{},{bits}", d.date, p[0], p[1], d.slice[0][0], d.slice[0][1])?;
                }
            }
        }
        Ok(())
    }
}

/// Full configuration of one hybrid pricing trial.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridConfig {
    /// Path counts and grid resolutions per level; a single level is the
    /// plain estimator.
    pub plan: MlmcLevelPlan,
    pub x_min: f64,
    pub x_max: f64,
    pub degree: usize,
    pub trunc: TruncationConfig,
    pub n_steps: usize,
    pub clusters: Option<usize>,
    /// Skip the low estimator.
    pub direct_only: bool,
}

impl HybridConfig {
    pub fn grid(&self, dim: usize, level: usize) -> Result<GridSpec> {
        GridSpec::new(dim, self.plan.resolutions[level], self.x_min, self.x_max)
    }

    pub fn setup(&self, dim: usize) -> Result<HybridSetup> {
        Ok(HybridSetup { grid: self.grid(dim, self.plan.finest_level())?, degree: self.degree, trunc: self.trunc })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub direct: f64,
    pub low: Option<f64>,
    pub low_std_error: Option<f64>,
    pub direct_seconds: f64,
    pub low_seconds: f64,
    pub result: DirectResult,
}

/// Simulate, run backward induction and (optionally) the low estimator on
/// independently re-simulated paths, all derived from `seed`.
pub fn run_hybrid_trial(model: &ModelSpec, option: &OptionSpec, cfg: &HybridConfig, seed: u64) -> Result<TrialOutcome> {
    let dim = model.dim();
    let setup = cfg.setup(dim)?;
    let levels = cfg.plan.levels();
    let t0 = Instant::now();
    let bundles = (0..levels)
        .map(|l| simulate_paths(model, &option.schedule, cfg.plan.paths[l], cfg.n_steps, derive_seed(seed, 2 * l as u64)))
        .collect::<Result<Vec<_>>>()?;
    let reducers = Reducers {
        clusters: cfg.clusters,
        mlmc: (levels > 1).then(|| MlmcInputs { plan: &cfg.plan, corrections: &bundles[1..] }),
    };
    let result = backward_induction(&bundles[0], model, option, &setup, reducers)?;
    let direct_seconds = t0.elapsed().as_secs_f64();
    drop(bundles);
    let (mut low, mut low_se, mut low_seconds) = (None, None, 0.0);
    if !cfg.direct_only {
        let t1 = Instant::now();
        let fresh = (0..levels)
            .map(|l| {
                simulate_paths(model, &option.schedule, cfg.plan.paths[l], cfg.n_steps, derive_seed(seed, 2 * l as u64 + 1))
            })
            .collect::<Result<Vec<_>>>()?;
        let policy = Policy::Regressed(&result.coeffs);
        let lr = if levels > 1 {
            mlmc::mlmc_low_estimate(&cfg.plan, &fresh, policy, model, option, &setup.grid)?
        } else {
            low_estimate(policy, &fresh[0], model, option, &setup.grid)?
        };
        low = Some(lr.atm());
        low_se = Some(lr.atm_std_error);
        low_seconds = t1.elapsed().as_secs_f64();
    }
    Ok(TrialOutcome { direct: result.atm(), low, low_std_error: low_se, direct_seconds, low_seconds, result })
}
