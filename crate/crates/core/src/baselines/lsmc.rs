//! Plain least-squares Monte Carlo on the full state `(S, v)`, in the
//! Tsitsiklis-Van Roy form: the regressed continuation value replaces the
//! realized one in the backward recursion.
//!
//! The basis is every monomial of total degree at most `degree` in the
//! normalized state (`S_k / K` and `v_k / theta_k`), followed by the first
//! three powers of the normalized payoff.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fst::GridSpec;
use crate::model::{derive_seed, path_rng, ModelSpec};
use crate::pricer::{boundary_from_continuation, exercise, OptionSpec, PolicyBoundary};
use crate::{par, stats};
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsmcConfig {
    pub n_paths: usize,
    /// Fresh paths for the low estimate; `0` skips it.
    pub n_low_paths: usize,
    /// Euler steps over the whole horizon; a multiple of the date count.
    pub n_steps: usize,
    /// Total degree of the state monomials.
    pub degree: usize,
    pub direct: DirectStyle,
}

/// What the backward recursion carries from one date to the previous one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DirectStyle {
    /// Realized discounted cash flows under the regressed exercise policy;
    /// the regression only drives the exercise decision.
    #[default]
    CashFlow,
    /// The regressed continuation value itself, `max(h, C_hat)`.
    ValueIteration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsmcResult {
    pub direct: f64,
    pub low: Option<f64>,
    pub low_std_error: Option<f64>,
    /// Regression coefficients for dates `1..M-1`.
    pub coeffs: Vec<Vec<f64>>,
    pub basis: LsmcBasis,
}

impl LsmcResult {
    /// Regressed continuation value at date `n` for a state `(S.., v..)`.
    pub fn continuation(&self, n: usize, state: &[f64], payoff: f64) -> Option<f64> {
        let c = self.coeffs.get(n.checked_sub(1)?)?;
        let mut phi = vec![0.0; self.basis.size()];
        self.basis.eval(state, payoff, &mut phi);
        Some(phi.iter().zip(c).map(|(a, b)| a * b).sum())
    }

    /// Exercise regions of the regressed policy on a log-moneyness grid, in
    /// the hybrid boundary layout.
    pub fn boundary(&self, model: &ModelSpec, option: &OptionSpec, grid: &GridSpec, bands: &[Vec<(f64, f64)>]) -> Result<PolicyBoundary> {
        let dates: Vec<usize> = (1..=self.coeffs.len()).collect();
        let s0 = model.spots();
        let dim = model.dim();
        boundary_from_continuation(grid, model, option, &dates, bands, |k, i, v| {
            let x = grid.point(i);
            let mut state: Vec<f64> = (0..dim).map(|c| s0[c] * x[c].exp()).collect();
            let h = option.payoff(&state);
            state.extend_from_slice(v);
            self.continuation(k + 1, &state, h).unwrap_or(f64::NAN)
        })
    }
}

/// Monomial exponents plus normalizations for the state variables.
///
/// With one asset the monomials form the tensor family `(S/K)^k (v/theta)^l`,
/// `k, l <= degree`; with two assets (four state variables) the tensor family
/// is too large to regress and the total degree is capped instead.
#[derive(Debug, Clone, PartialEq)]
pub struct LsmcBasis {
    scale: Vec<f64>,
    exponents: Vec<Vec<u32>>,
    strike: f64,
}

const PAYOFF_POWERS: usize = 3;

impl LsmcBasis {
    pub fn new(model: &ModelSpec, strike: f64, degree: usize) -> Self {
        let dim = model.dim();
        let mut scale = vec![strike; dim];
        scale.extend(model.long_run_variance().iter().take(dim));
        let mut exponents = Vec::new();
        let n = scale.len();
        let cap = if dim == 1 { n as u32 * degree as u32 } else { degree as u32 };
        for total in 0..=cap {
            collect_exponents(n, total, &mut Vec::new(), &mut exponents);
        }
        if dim == 1 {
            exponents.retain(|e| e.iter().all(|&k| k as usize <= degree));
        }
        Self { scale, exponents, strike }
    }

    pub fn size(&self) -> usize {
        self.exponents.len() + PAYOFF_POWERS
    }

    pub fn eval(&self, state: &[f64], payoff: f64, out: &mut [f64]) {
        let z: Vec<f64> = state.iter().zip(&self.scale).map(|(x, s)| x / s).collect();
        for (o, e) in out.iter_mut().zip(&self.exponents) {
            *o = z.iter().zip(e).map(|(x, &k)| x.powi(k as i32)).product();
        }
        let h = payoff / self.strike;
        let k = self.exponents.len();
        out[k] = h;
        out[k + 1] = h * h;
        out[k + 2] = h * h * h;
    }
}

/// All exponent vectors of length `n` with the given total, in
/// lexicographically decreasing order of the leading exponent.
fn collect_exponents(n: usize, total: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if prefix.len() + 1 == n {
        let mut e = prefix.clone();
        e.push(total);
        out.push(e);
        return;
    }
    for k in (0..=total).rev() {
        prefix.push(k);
        collect_exponents(n, total - k, prefix, out);
        prefix.pop();
    }
}

/// States `(S.., v..)` at every exercise date (including `t0`) for a batch of
/// paths, row-major `[path][date][state]`.
pub struct StatePaths {
    pub n_paths: usize,
    pub n_dates: usize,
    pub width: usize,
    pub states: Vec<f64>,
}

impl StatePaths {
    pub fn state(&self, p: usize, n: usize) -> &[f64] {
        let o = (p * (self.n_dates + 1) + n) * self.width;
        &self.states[o..o + self.width]
    }
}

/// Joint simulation of asset and variance: full-truncation Euler for the
/// variance and the log-Euler step for the asset.
pub fn simulate_states(model: &ModelSpec, option: &OptionSpec, n_paths: usize, n_steps: usize, seed: u64) -> Result<StatePaths> {
    model.validate()?;
    let m = option.schedule.n_dates;
    if n_steps < m || !n_steps.is_multiple_of(m) {
        return Err(Error::Configuration(format!(
            "{n_steps} Euler steps cannot be split evenly over {m} exercise intervals"
        )));
    }
    let per = n_steps / m;
    let dt = option.schedule.maturity / n_steps as f64;
    let sq = dt.sqrt();
    let dim = model.dim();
    let width = 2 * dim;
    let block = (m + 1) * width;
    let mut states = vec![0.0; n_paths * block];
    match model {
        ModelSpec::Heston(h) => {
            let rc = (1.0 - h.rho * h.rho).sqrt();
            par::for_each_chunk_mut(&mut states, block, |p, out| {
                let mut rng = path_rng(seed, p);
                let (mut x, mut v) = (h.s0.ln(), h.v0);
                out[0] = h.s0;
                out[1] = h.v0;
                for n in 1..=m {
                    for _ in 0..per {
                        let z1: f64 = StandardNormal.sample(&mut rng);
                        let z2: f64 = StandardNormal.sample(&mut rng);
                        let vp = v.max(0.0);
                        let sv = vp.sqrt();
                        x += (h.r - 0.5 * vp) * dt + sv * sq * (h.rho * z1 + rc * z2);
                        v += h.kappa * (h.theta - vp) * dt + h.eta * sv * sq * z1;
                    }
                    out[n * 2] = x.exp();
                    out[n * 2 + 1] = v.max(0.0);
                }
            });
        }
        ModelSpec::MultiHeston(mh) => {
            let a = mh.chol;
            let [f1, f2] = mh.assets;
            par::for_each_chunk_mut(&mut states, block, |p, out| {
                let mut rng = path_rng(seed, p);
                let (mut x1, mut x2) = (f1.s0.ln(), f2.s0.ln());
                let (mut v1, mut v2) = (f1.v0, f2.v0);
                out[..4].copy_from_slice(&[f1.s0, f2.s0, f1.v0, f2.v0]);
                for n in 1..=m {
                    for _ in 0..per {
                        let mut b = [0.0; 4];
                        for bk in &mut b {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            *bk = sq * z;
                        }
                        let w = crate::model::correlate(&a, &b);
                        let (p1, p2) = (v1.max(0.0), v2.max(0.0));
                        let (r1, r2) = (p1.sqrt(), p2.sqrt());
                        x1 += (mh.r - 0.5 * p1) * dt + r1 * w[0];
                        x2 += (mh.r - 0.5 * p2) * dt + r2 * w[1];
                        v1 += f1.kappa * (f1.theta - p1) * dt + f1.eta * r1 * w[2];
                        v2 += f2.kappa * (f2.theta - p2) * dt + f2.eta * r2 * w[3];
                    }
                    out[n * 4..n * 4 + 4].copy_from_slice(&[x1.exp(), x2.exp(), v1.max(0.0), v2.max(0.0)]);
                }
            });
        }
    }
    Ok(StatePaths { n_paths, n_dates: m, width, states })
}

/// Regression with a least-squares solve of the normal equations through the
/// SVD, so rank-deficient designs (e.g. an identically zero payoff) yield
/// the minimum-norm solution instead of failing.
fn regress(basis: &LsmcBasis, paths: &StatePaths, option: &OptionSpec, n: usize, targets: &[f64]) -> Result<Vec<f64>> {
    let d = basis.size();
    let dim = option.dim();
    let acc = par::try_reduce_chunks::<Error, _>(paths.n_paths, d * d + d, |range, acc| {
        let mut phi = vec![0.0; d];
        for p in range {
            let s = paths.state(p, n);
            basis.eval(s, option.payoff(&s[..dim]), &mut phi);
            let y = targets[p];
            for a in 0..d {
                let row = &mut acc[a * d..(a + 1) * d];
                for b in 0..d {
                    row[b] += phi[a] * phi[b];
                }
                acc[d * d + a] += phi[a] * y;
            }
        }
        Ok(())
    })?;
    let scale = 1.0 / paths.n_paths as f64;
    let gram = DMatrix::from_fn(d, d, |i, j| acc[i * d + j] * scale);
    let rhs = DVector::from_fn(d, |i, _| acc[d * d + i] * scale);
    let svd = gram.svd(true, true);
    let eps = svd.singular_values.max() * 1e-13;
    let sol = svd.solve(&rhs, eps).map_err(|e| Error::Numeric(format!("least-squares solve failed: {e}")))?;
    if sol.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite regression coefficients".into()));
    }
    Ok(sol.iter().copied().collect())
}

fn basis_value(basis: &LsmcBasis, coeffs: &[f64], state: &[f64], payoff: f64, phi: &mut [f64]) -> f64 {
    basis.eval(state, payoff, phi);
    phi.iter().zip(coeffs).map(|(a, b)| a * b).sum()
}

/// Direct (in-sample) estimate and, with `n_low_paths > 0`, the low estimate
/// from following the regressed policy on independent paths. The regression
/// always uses every path.
pub fn lsmc_price(model: &ModelSpec, option: &OptionSpec, cfg: &LsmcConfig, seed: u64) -> Result<LsmcResult> {
    option.validate(model)?;
    if cfg.n_paths == 0 {
        return Err(Error::Configuration("LSMC needs at least one path".into()));
    }
    let m = option.schedule.n_dates;
    let dim = option.dim();
    let df = (-model.rate() * option.schedule.dt()).exp();
    let basis = LsmcBasis::new(model, option.strike, cfg.degree);
    let paths = simulate_states(model, option, cfg.n_paths, cfg.n_steps, derive_seed(seed, 0))?;
    let payoff_at = |p: usize, n: usize| option.payoff(&paths.state(p, n)[..dim]);
    let mut value: Vec<f64> = (0..cfg.n_paths).map(|p| payoff_at(p, m)).collect();
    let mut coeffs = vec![Vec::new(); m.saturating_sub(1)];
    for n in (1..m).rev() {
        let targets: Vec<f64> = value.iter().map(|v| df * v).collect();
        let c = regress(&basis, &paths, option, n, &targets)?;
        value = par::map_range(cfg.n_paths, |p| {
            let mut phi = vec![0.0; basis.size()];
            let s = paths.state(p, n);
            let h = option.payoff(&s[..dim]);
            let cont = basis_value(&basis, &c, s, h, &mut phi);
            match (exercise(h, cont), cfg.direct) {
                (true, _) => h,
                (false, DirectStyle::CashFlow) => targets[p],
                (false, DirectStyle::ValueIteration) => cont,
            }
        });
        coeffs[n - 1] = c;
    }
    let c0 = df * stats::mean(&value);
    let h0 = option.payoff(&model.spots());
    let direct = h0.max(c0);
    let mut result = LsmcResult { direct, low: None, low_std_error: None, coeffs, basis };
    if cfg.n_low_paths > 0 {
        let fresh = simulate_states(model, option, cfg.n_low_paths, cfg.n_steps, derive_seed(seed, 1))?;
        let flows = par::map_range(cfg.n_low_paths, |p| {
            let mut phi = vec![0.0; result.basis.size()];
            for n in 1..m {
                let s = fresh.state(p, n);
                let h = option.payoff(&s[..dim]);
                if h > 0.0 && exercise(h, basis_value(&result.basis, &result.coeffs[n - 1], s, h, &mut phi)) {
                    return h * df.powi(n as i32);
                }
            }
            option.payoff(&fresh.state(p, m)[..dim]) * df.powi(m as i32)
        });
        result.low = Some(stats::mean(&flows));
        result.low_std_error = Some(stats::sample_std(&flows) / (flows.len() as f64).sqrt());
    }
    Ok(result)
}
