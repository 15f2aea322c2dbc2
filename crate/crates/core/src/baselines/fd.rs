//! Explicit finite differences for the Bermudan put under one-factor Heston
//! on a uniform `(S, v)` grid.
//!
//! Boundary treatment:
//! - `S = 0`: Dirichlet, the strike discounted from the next exercise date
//!   (the stock is absorbed at zero and the put is exercised there).
//! - `S = S_max`: linear extrapolation from the two interior neighbours.
//! - `v = 0`: the PDE degenerates to first order; the variance drift
//!   `kappa theta > 0` points into the domain, so a forward difference is used.
//! - `v = v_max`: no variance diffusion or cross term; the drift points back
//!   into the domain and is discretized with a backward difference.
//!
//! The scheme is conditionally stable. [`max_stable_dt`] bounds the time step
//! from the largest stencil weight, and a configuration violating it is
//! refused rather than run.

use crate::error::{Error, Result};
use crate::fst::GridSpec;
use crate::model::{HestonSpec, ModelSpec};
use crate::par;
use crate::pricer::{boundary_from_continuation, exercise, OptionSpec, PayoffKind, PolicyBoundary};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdConfig {
    /// Number of intervals in `S`; nodes are `0, dS, ..., S_max`.
    pub n_s: usize,
    /// Number of intervals in `v`.
    pub n_v: usize,
    /// Time steps per exercise interval.
    pub n_t: usize,
    pub s_max: f64,
    pub v_max: f64,
}

impl FdConfig {
    /// The reference grid for the one-factor benchmark.
    pub fn reference() -> Self {
        Self { n_s: 512, n_v: 128, n_t: 100_000, s_max: 53.0, v_max: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_s < 4 || self.n_v < 2 || self.n_t == 0 {
            return Err(Error::Configuration(format!(
                "finite-difference grid too small: n_s = {}, n_v = {}, n_t = {}",
                self.n_s, self.n_v, self.n_t
            )));
        }
        if !(self.s_max > 0.0) || !(self.v_max > 0.0) {
            return Err(Error::Configuration("finite-difference domain must have positive extent".into()));
        }
        Ok(())
    }

    pub fn ds(&self) -> f64 {
        self.s_max / self.n_s as f64
    }

    pub fn dv(&self) -> f64 {
        self.v_max / self.n_v as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdExercise {
    Bermudan,
    European,
}

#[derive(Debug, Clone)]
pub struct FdSolution {
    pub config: FdConfig,
    pub dt: f64,
    pub max_stable_dt: f64,
    /// Option value at `t0`, row-major in `v`: index `j * (n_s + 1) + i`.
    pub value: Vec<f64>,
    /// Pre-exercise continuation values at dates `1..M-1` (Bermudan only).
    pub continuation: Vec<Vec<f64>>,
    strike: f64,
    kind: PayoffKind,
}

impl FdSolution {
    fn bilinear(&self, u: &[f64], s: f64, v: f64) -> f64 {
        let c = &self.config;
        let ns = c.n_s;
        let xs = (s / c.ds()).clamp(0.0, ns as f64);
        let xv = (v / c.dv()).clamp(0.0, c.n_v as f64);
        let i = (xs.floor() as usize).min(ns - 1);
        let j = (xv.floor() as usize).min(c.n_v - 1);
        let (fs, fv) = (xs - i as f64, xv - j as f64);
        let at = |jj: usize, ii: usize| u[jj * (ns + 1) + ii];
        (1.0 - fv) * ((1.0 - fs) * at(j, i) + fs * at(j, i + 1)) + fv * ((1.0 - fs) * at(j + 1, i) + fs * at(j + 1, i + 1))
    }

    /// Bilinear read-out of the `t0` value.
    pub fn value_at(&self, s: f64, v: f64) -> f64 {
        self.bilinear(&self.value, s, v)
    }

    /// Continuation value at exercise date `date` (1-based, below `M`).
    pub fn continuation_at(&self, date: usize, s: f64, v: f64) -> Option<f64> {
        let u = self.continuation.get(date.checked_sub(1)?)?;
        Some(self.bilinear(u, s, v))
    }

    /// Exercise indicator of the finite-difference policy.
    pub fn exercises(&self, date: usize, s: f64, v: f64) -> Option<bool> {
        let h = match self.kind {
            PayoffKind::Put => (self.strike - s).max(0.0),
            PayoffKind::MaxPut => return None,
        };
        self.continuation_at(date, s, v).map(|c| exercise(h, c))
    }

    /// Exercise regions on a log-moneyness grid, in the same layout as the
    /// hybrid boundary; `bands` holds the variance band of each date `1..M-1`.
    pub fn boundary(&self, model: &HestonSpec, option: &OptionSpec, grid: &GridSpec, bands: &[Vec<(f64, f64)>]) -> Result<PolicyBoundary> {
        let dates: Vec<usize> = (1..=self.continuation.len()).collect();
        let spec = ModelSpec::Heston(*model);
        boundary_from_continuation(grid, &spec, option, &dates, bands, |k, i, v| {
            let s = model.s0 * grid.point(i)[0].exp();
            self.bilinear(&self.continuation[k], s, v[0])
        })
    }
}

/// Largest stable step: the reciprocal of the largest sum of absolute
/// off-centre weights plus the discount rate, over all node types.
pub fn max_stable_dt(model: &HestonSpec, cfg: &FdConfig) -> f64 {
    let dv = cfg.dv();
    let mut worst: f64 = 0.0;
    for j in 0..=cfg.n_v {
        let v = j as f64 * dv;
        let i = (cfg.n_s - 1) as f64;
        let rate = if j == 0 {
            model.kappa * model.theta / dv + model.r
        } else if j == cfg.n_v {
            v * i * i + model.kappa * (v - model.theta).abs() / dv + model.r
        } else {
            let a2 = v * i * i;
            let c2 = model.eta * model.eta * v / (dv * dv);
            let b2 = (model.rho * model.eta * v * i / (2.0 * dv)).abs();
            a2 + c2 + b2 + model.r
        };
        worst = worst.max(rate);
    }
    1.0 / worst
}

/// Per-row weights, already multiplied by `dt`; the `S`-dependence enters
/// through the node index.
#[derive(Clone, Copy)]
struct RowWeights {
    /// `dt * v / 2` (times `i^2` at node `i`)
    a: f64,
    /// `dt * rho eta v / (4 dv)` (times `i`)
    b: f64,
    /// `dt * eta^2 v / (2 dv^2)`
    c: f64,
    /// `dt * kappa (theta - v) / (2 dv)`
    e: f64,
}

/// Price the put by backward time stepping from maturity.
pub fn fd_price(model: &HestonSpec, option: &OptionSpec, cfg: &FdConfig, style: FdExercise) -> Result<FdSolution> {
    model.validate()?;
    cfg.validate()?;
    if option.kind != PayoffKind::Put {
        return Err(Error::Configuration("the finite-difference baseline prices the one-asset put only".into()));
    }
    let strike = option.strike;
    let m = option.schedule.n_dates;
    let dt = option.schedule.dt() / cfg.n_t as f64;
    let limit = max_stable_dt(model, cfg);
    if dt > limit {
        return Err(Error::Configuration(format!(
            "explicit scheme unstable: dt = {dt:.3e} exceeds the stability limit {limit:.3e} \
             (need n_t >= {} per exercise interval)",
            (option.schedule.dt() / limit).ceil()
        )));
    }
    let (ns, nv) = (cfg.n_s, cfg.n_v);
    let width = ns + 1;
    let ds = cfg.ds();
    let dv = cfg.dv();
    let r = model.r;
    let payoff: Vec<f64> = (0..width).map(|i| (strike - i as f64 * ds).max(0.0)).collect();
    let mut u: Vec<f64> = (0..=nv).flat_map(|_| payoff.iter().copied()).collect();
    let mut next = u.clone();
    let rows: Vec<RowWeights> = (0..=nv)
        .map(|j| {
            let v = j as f64 * dv;
            RowWeights {
                a: dt * 0.5 * v,
                b: dt * model.rho * model.eta * v / (4.0 * dv),
                c: dt * 0.5 * model.eta * model.eta * v / (dv * dv),
                e: dt * model.kappa * (model.theta - v) / (2.0 * dv),
            }
        })
        .collect();
    let low_drift = dt * model.kappa * model.theta / dv;
    let top_drift = dt * model.kappa * (model.theta - cfg.v_max) / dv;
    let rdt = r * dt;
    let parallel = par::current_threads() > 1;
    let mut continuation = Vec::new();
    // time elapsed since the last exercise opportunity, for the S = 0 boundary
    let mut tau = 0.0;
    for date in (0..m).rev() {
        for _ in 0..cfg.n_t {
            tau += dt;
            let floor = strike * (-r * tau).exp();
            let src = &u;
            let step_row = |j: usize, out: &mut [f64]| {
                let mid = &src[j * width..(j + 1) * width];
                if j == 0 {
                    let up = &src[width..2 * width];
                    for i in 1..ns {
                        let d = 0.5 * rdt * i as f64;
                        out[i] = mid[i] + d * (mid[i + 1] - mid[i - 1]) + low_drift * (up[i] - mid[i]) - rdt * mid[i];
                    }
                } else if j == nv {
                    let w = rows[j];
                    let dn = &src[(j - 1) * width..j * width];
                    for i in 1..ns {
                        let fi = i as f64;
                        let (a, d) = (w.a * fi * fi, 0.5 * rdt * fi);
                        let c = mid[i];
                        out[i] = c + a * (mid[i + 1] - 2.0 * c + mid[i - 1]) + d * (mid[i + 1] - mid[i - 1])
                            + top_drift * (c - dn[i])
                            - rdt * c;
                    }
                } else {
                    interior_row(out, &src[(j + 1) * width..(j + 2) * width], mid, &src[(j - 1) * width..j * width], rows[j], rdt);
                }
                out[0] = floor;
                out[ns] = 2.0 * out[ns - 1] - out[ns - 2];
            };
            if parallel {
                par::for_each_chunk_mut(&mut next, width, |j, out| step_row(j, out));
            } else {
                for (j, out) in next.chunks_exact_mut(width).enumerate() {
                    step_row(j, out);
                }
            }
            std::mem::swap(&mut u, &mut next);
        }
        if date > 0 && style == FdExercise::Bermudan {
            continuation.push(u.clone());
            for row in u.chunks_exact_mut(width) {
                for (x, h) in row.iter_mut().zip(&payoff) {
                    *x = x.max(*h);
                }
            }
            tau = 0.0;
        }
    }
    if u.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("finite-difference solution is not finite".into()));
    }
    continuation.reverse();
    Ok(FdSolution { config: *cfg, dt, max_stable_dt: limit, value: u, continuation, strike, kind: option.kind })
}

#[inline]
fn interior_row(out: &mut [f64], up: &[f64], mid: &[f64], dn: &[f64], w: RowWeights, rdt: f64) {
    let n = mid.len();
    let (out, up, dn) = (&mut out[..n], &up[..n], &dn[..n]);
    for i in 1..n - 1 {
        let fi = i as f64;
        let a = w.a * fi * fi;
        let b = w.b * fi;
        let d = 0.5 * rdt * fi;
        let c = mid[i];
        out[i] = c
            + a * (mid[i + 1] - 2.0 * c + mid[i - 1])
            + w.c * (up[i] - 2.0 * c + dn[i])
            + b * (up[i + 1] - dn[i + 1] - up[i - 1] + dn[i - 1])
            + d * (mid[i + 1] - mid[i - 1])
            + w.e * (up[i] - dn[i])
            - rdt * c;
    }
}
