//! Cross-sectional regression of per-path continuation values onto a
//! polynomial basis in the variance variables.
//!
//! At every grid point `s_i` the pre-surface values `C_j(s_i)` are projected
//! onto `phi(v_j)`. All grid points share the same design, so a single Gram
//! matrix is inverted per date and applied to every right-hand side.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::fst::GridSpec;
use crate::{par, stats};

/// Polynomial basis over variance space, identically zero outside a
/// compact support box.
///
/// With `scaled` the monomials are taken in `u = (2v - lo - hi) / (hi - lo)`
/// rather than `v`. Both span the same polynomial space; the scaled form
/// keeps the Gram matrix well conditioned for degrees around five.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisFamily {
    dim: usize,
    exponents: Vec<[u32; 2]>,
    support: Vec<(f64, f64)>,
    scaled: bool,
}

impl BasisFamily {
    /// `{1, v, ..., v^degree}` on `[lo, hi]`.
    pub fn monomial(degree: usize, lo: f64, hi: f64) -> Result<Self> {
        let exponents = (0..=degree as u32).map(|e| [e, 0]).collect();
        Self::build(1, exponents, vec![(lo, hi)], false)
    }

    /// Tensor monomials `v1^a v2^b` with `a + b <= degree`.
    pub fn monomial_2d(degree: usize, support: [(f64, f64); 2]) -> Result<Self> {
        let mut exponents = Vec::new();
        for total in 0..=degree as u32 {
            for a in (0..=total).rev() {
                exponents.push([a, total - a]);
            }
        }
        Self::build(2, exponents, support.to_vec(), false)
    }

    /// Monomials of the given degree over a box, in either dimension.
    pub fn for_box(dim: usize, degree: usize, support: &[(f64, f64)]) -> Result<Self> {
        match dim {
            1 => Self::monomial(degree, support[0].0, support[0].1),
            2 => Self::monomial_2d(degree, [support[0], support[1]]),
            _ => Err(Error::Configuration(format!("no basis for {dim} variance factors"))),
        }
    }

    pub fn scaled(mut self) -> Self {
        self.scaled = true;
        self
    }

    fn build(dim: usize, exponents: Vec<[u32; 2]>, support: Vec<(f64, f64)>, scaled: bool) -> Result<Self> {
        for &(lo, hi) in &support {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Configuration(format!("basis support [{lo}, {hi}] is empty")));
            }
        }
        Ok(Self { dim, exponents, support, scaled })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn size(&self) -> usize {
        self.exponents.len()
    }

    pub fn support(&self) -> &[(f64, f64)] {
        &self.support
    }

    pub fn in_support(&self, v: &[f64]) -> bool {
        v.iter().zip(&self.support).all(|(&x, &(lo, hi))| x >= lo && x <= hi)
    }

    /// Write `phi(v)` into `out` (length [`size`](Self::size)).
    pub fn eval_into(&self, v: &[f64], out: &mut [f64]) {
        if !self.in_support(v) {
            out.fill(0.0);
            return;
        }
        let mut u = [0.0; 2];
        for d in 0..self.dim {
            let (lo, hi) = self.support[d];
            u[d] = if self.scaled { (2.0 * v[d] - lo - hi) / (hi - lo) } else { v[d] };
        }
        for (o, e) in out.iter_mut().zip(&self.exponents) {
            *o = u[0].powi(e[0] as i32) * u[1].powi(e[1] as i32);
        }
    }

    pub fn eval(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.size()];
        self.eval_into(v, &mut out);
        out
    }
}

/// Rules for the regression safeguards: the bound `R` on the Gram inverse
/// and how the basis support box is derived from simulated variances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationConfig {
    pub inverse_norm_bound: f64,
    /// Tail probability trimmed on each side before enlarging the box.
    pub support_tail: f64,
    /// Fraction of the trimmed range added to the box (half on each side).
    pub support_enlargement: f64,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        Self { inverse_norm_bound: 1e8, support_tail: 0.001, support_enlargement: 0.5 }
    }
}

impl TruncationConfig {
    /// Support box per variance factor from samples flattened as `N × dim`.
    pub fn support_box(&self, v_samples: &[f64], dim: usize) -> Result<Vec<(f64, f64)>> {
        let n = v_samples.len() / dim.max(1);
        if n == 0 {
            return Err(Error::DegenerateDesign { in_support: 0, basis_size: 1 });
        }
        (0..dim)
            .map(|d| {
                let mut col: Vec<f64> = (0..n).map(|j| v_samples[j * dim + d]).collect();
                col.sort_by(f64::total_cmp);
                let lo = stats::quantile_sorted(&col, self.support_tail);
                let hi = stats::quantile_sorted(&col, 1.0 - self.support_tail);
                let pad = 0.5 * self.support_enlargement * (hi - lo);
                // a point mass still needs a non-empty box
                let pad = if pad > 0.0 { pad } else { 1e-6_f64.max(1e-3 * lo.abs()) };
                Ok((lo - pad, hi + pad))
            })
            .collect()
    }
}

/// Sample Gram matrix `A = (1/N) sum w_j phi(v_j) phi(v_j)^T` and its
/// inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct Gram {
    pub size: usize,
    pub matrix: Vec<f64>,
    pub inverse: Vec<f64>,
    /// Spectral norm of the inverse, `1 / lambda_min`.
    pub inverse_norm: f64,
    pub min_eigenvalue: f64,
}

/// Gram matrix over `v_samples` (flattened `N × dim`), all weights one.
pub fn gram_matrix(v_samples: &[f64], basis: &BasisFamily, trunc: &TruncationConfig) -> Result<Gram> {
    let n = v_samples.len() / basis.dim();
    weighted_gram(v_samples, &vec![1.0; n], basis, trunc)
}

pub fn weighted_gram(v_samples: &[f64], weights: &[f64], basis: &BasisFamily, trunc: &TruncationConfig) -> Result<Gram> {
    let dim = basis.dim();
    let db = basis.size();
    let n = v_samples.len() / dim;
    if weights.len() != n {
        return Err(Error::Configuration(format!("{} weights for {n} samples", weights.len())));
    }
    let in_support = (0..n)
        .filter(|&j| weights[j] > 0.0 && basis.in_support(&v_samples[j * dim..(j + 1) * dim]))
        .count();
    if in_support < db {
        return Err(Error::DegenerateDesign { in_support, basis_size: db });
    }
    let total_weight: f64 = weights.iter().sum();
    let sums = par::try_reduce_chunks(n, db * db, |range, acc| {
        let mut phi = vec![0.0; db];
        for j in range {
            basis.eval_into(&v_samples[j * dim..(j + 1) * dim], &mut phi);
            let w = weights[j];
            for a in 0..db {
                let wa = w * phi[a];
                for b in 0..db {
                    acc[a * db + b] += wa * phi[b];
                }
            }
        }
        Ok::<_, Error>(())
    })?;
    let matrix: Vec<f64> = sums.iter().map(|s| s / total_weight).collect();
    invert_gram(matrix, db, trunc)
}

fn invert_gram(matrix: Vec<f64>, db: usize, trunc: &TruncationConfig) -> Result<Gram> {
    let a = DMatrix::from_row_slice(db, db, &matrix);
    let eig = SymmetricEigen::new(a.clone());
    let lmax = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let lmin = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
    if !(lmin > 1e-14 * lmax.abs().max(f64::MIN_POSITIVE)) {
        return Err(Error::DegenerateDesign { in_support: 0, basis_size: db });
    }
    let inverse_norm = 1.0 / lmin;
    if inverse_norm > trunc.inverse_norm_bound {
        return Err(Error::Truncation { norm: inverse_norm, bound: trunc.inverse_norm_bound });
    }
    let inv = match a.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => {
            // symmetric fallback through the eigen-decomposition
            let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l));
            &eig.eigenvectors * d * eig.eigenvectors.transpose()
        }
    };
    let mut inverse = vec![0.0; db * db];
    for r in 0..db {
        for c in 0..db {
            inverse[r * db + c] = inv[(r, c)];
        }
    }
    Ok(Gram { size: db, matrix, inverse, inverse_norm, min_eigenvalue: lmin })
}

/// Add `weight * phi_m * values` to row `m` of a `d_B × n_grid` moment
/// accumulator. Every estimator routes its sums through here so the
/// arithmetic is identical across code paths.
#[inline]
pub fn accumulate_moment(acc: &mut [f64], weight: f64, phi: &[f64], values: &[f64]) {
    let n = values.len();
    for (m, &p) in phi.iter().enumerate() {
        let c = weight * p;
        for (a, &x) in acc[m * n..(m + 1) * n].iter_mut().zip(values) {
            *a += c * x;
        }
    }
}

/// Regression coefficients `a(s_i)` for every grid point at one date, stored
/// grid-major (`n_grid × d_B`).
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffSurface {
    pub grid: GridSpec,
    pub basis: BasisFamily,
    pub coeffs: Vec<f64>,
    pub date: usize,
}

impl CoeffSurface {
    pub fn zeros(grid: GridSpec, basis: BasisFamily, date: usize) -> Self {
        let coeffs = vec![0.0; grid.len() * basis.size()];
        Self { grid, basis, coeffs, date }
    }

    pub fn at(&self, grid_index: usize) -> &[f64] {
        let db = self.basis.size();
        &self.coeffs[grid_index * db..(grid_index + 1) * db]
    }

    /// `a(s_i) . phi(v)`; zero outside the basis support.
    pub fn evaluate(&self, grid_index: usize, v: &[f64]) -> f64 {
        let phi = self.basis.eval(v);
        dot(self.at(grid_index), &phi)
    }

    /// Continuation value at every grid point for one variance state.
    pub fn surface_at(&self, v: &[f64], out: &mut [f64]) {
        let phi = self.basis.eval(v);
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.at(i), &phi);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    /// One row per grid point: `index, x[, x2], c0, ..., c{d_B-1}`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let db = self.basis.size();
        let coords = if self.grid.dim == 1 { "x" } else { "x1,x2" };
        let names: Vec<String> = (0..db).map(|m| format!("c{m}")).collect();
        writeln!(w, "index,{coords},{}", names.join(","))?;
        for i in 0..self.grid.len() {
            let p = self.grid.point(i);
            let xs = if self.grid.dim == 1 { format!("{}", p[0]) } else { format!("{},{}", p[0], p[1]) };
            let cs: Vec<String> = self.at(i).iter().map(|c| format!("{c:.12e}")).collect();
            writeln!(w, "{i},{xs},{}", cs.join(","))?;
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `a(s_i) = A^{-1} b(s_i) / n_total` for a `d_B × n_grid` moment matrix.
pub fn solve_coefficients(
    moments: &[f64],
    n_total: f64,
    gram: &Gram,
    grid: GridSpec,
    basis: BasisFamily,
    date: usize,
) -> Result<CoeffSurface> {
    let db = basis.size();
    let ng = grid.len();
    if moments.len() != db * ng || gram.size != db {
        return Err(Error::Configuration("moment matrix does not match basis and grid".into()));
    }
    let inv = &gram.inverse;
    let rows = par::map_range(ng, |i| {
        let b: Vec<f64> = (0..db).map(|m| moments[m * ng + i] / n_total).collect();
        (0..db).map(|r| dot(&inv[r * db..(r + 1) * db], &b)).collect::<Vec<f64>>()
    });
    let coeffs: Vec<f64> = rows.into_iter().flatten().collect();
    let surface = CoeffSurface { grid, basis, coeffs, date };
    if !surface.is_finite() {
        return Err(Error::Numeric(format!("non-finite regression coefficients at date {date}")));
    }
    Ok(surface)
}

/// Regress a materialized pre-surface (`N × n_grid`, row per path) onto the
/// basis. `v_samples` holds `v_{t_n}` per row (`N × dim`) and `weights` the
/// number of paths each row stands for; they must sum to the path count.
pub fn regress_surface(
    pre_surface: &[f64],
    grid: GridSpec,
    v_samples: &[f64],
    weights: &[f64],
    basis: &BasisFamily,
    trunc: &TruncationConfig,
) -> Result<CoeffSurface> {
    let gram = weighted_gram(v_samples, weights, basis, trunc)?;
    regress_with_gram(pre_surface, grid, v_samples, weights, &gram, basis, 0)
}

/// As [`regress_surface`] with a Gram matrix computed elsewhere, e.g. from
/// all simulated paths when the rows are cluster representatives.
pub fn regress_with_gram(
    pre_surface: &[f64],
    grid: GridSpec,
    v_samples: &[f64],
    weights: &[f64],
    gram: &Gram,
    basis: &BasisFamily,
    date: usize,
) -> Result<CoeffSurface> {
    let ng = grid.len();
    let dim = basis.dim();
    let rows = weights.len();
    if pre_surface.len() != rows * ng || v_samples.len() != rows * dim {
        return Err(Error::Configuration(format!(
            "pre-surface has {} values, samples {} values, weights {} rows",
            pre_surface.len(),
            v_samples.len(),
            rows
        )));
    }
    let total: f64 = weights.iter().sum();
    let n_paths = total.round();
    if (total - n_paths).abs() > 1e-9 * n_paths.max(1.0) {
        return Err(Error::Configuration(format!("weights sum to {total}, not a path count")));
    }
    let db = basis.size();
    let moments = par::try_reduce_chunks(rows, db * ng, |range, acc| {
        let mut phi = vec![0.0; db];
        for j in range {
            basis.eval_into(&v_samples[j * dim..(j + 1) * dim], &mut phi);
            accumulate_moment(acc, weights[j], &phi, &pre_surface[j * ng..(j + 1) * ng]);
        }
        Ok::<_, Error>(())
    })?;
    solve_coefficients(&moments, n_paths, gram, grid, basis.clone(), date)
}

/// Continuation value `a(s_i) . phi(v)` at one grid point.
pub fn evaluate_continuation(coeffs: &CoeffSurface, grid_index: usize, v: &[f64]) -> f64 {
    coeffs.evaluate(grid_index, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_basis_gram() {
        let basis = BasisFamily::monomial(0, 0.0, 1.0).unwrap();
        let g = gram_matrix(&[0.1, 0.5, 0.7], &basis, &TruncationConfig::default()).unwrap();
        assert_eq!(g.matrix, vec![1.0]);
        assert_eq!(g.inverse, vec![1.0]);
    }

    #[test]
    fn identical_samples_are_degenerate() {
        let basis = BasisFamily::monomial(1, 0.0, 1.0).unwrap();
        let err = gram_matrix(&[0.3; 50], &basis, &TruncationConfig::default()).unwrap_err();
        assert!(matches!(err, Error::DegenerateDesign { .. }));
    }

    #[test]
    fn too_few_samples_in_support() {
        let basis = BasisFamily::monomial(2, 0.0, 1.0).unwrap();
        let err = gram_matrix(&[0.1, 0.2, 5.0, 6.0], &basis, &TruncationConfig::default()).unwrap_err();
        assert_eq!(err, Error::DegenerateDesign { in_support: 2, basis_size: 3 });
    }

    #[test]
    fn truncation_bound_aborts() {
        let basis = BasisFamily::monomial(5, 0.0, 1.0).unwrap();
        let v: Vec<f64> = (0..200).map(|i| 0.1 + 0.001 * i as f64).collect();
        let tight = TruncationConfig { inverse_norm_bound: 10.0, ..Default::default() };
        assert!(matches!(gram_matrix(&v, &basis, &tight), Err(Error::Truncation { .. })));
    }

    #[test]
    fn continuation_evaluation() {
        let basis = BasisFamily::monomial(1, 0.0, 1.0).unwrap();
        let grid = GridSpec::standard(1, 4).unwrap();
        let mut c = CoeffSurface::zeros(grid, basis, 1);
        assert_eq!(evaluate_continuation(&c, 2, &[0.15]), 0.0);
        c.coeffs[2 * 2] = 1.0;
        c.coeffs[2 * 2 + 1] = 2.0;
        assert!((evaluate_continuation(&c, 2, &[0.15]) - 1.3).abs() < 1e-15);
        assert_eq!(evaluate_continuation(&c, 2, &[1.5]), 0.0);
        assert_eq!(evaluate_continuation(&c, 2, &[-0.1]), 0.0);
    }

    #[test]
    fn constant_basis_gives_weighted_mean() {
        let basis = BasisFamily::monomial(0, 0.0, 1.0).unwrap();
        let grid = GridSpec::standard(1, 4).unwrap();
        let pre = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        let w = [3.0, 1.0];
        let c = regress_surface(&pre, grid, &[0.2, 0.4], &w, &basis, &TruncationConfig::default()).unwrap();
        for i in 0..4 {
            let expect = (3.0 * pre[i] + pre[4 + i]) / 4.0;
            assert!((c.at(i)[0] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn support_box_encloses_samples() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        let b = TruncationConfig::default().support_box(&v, 1).unwrap();
        assert!(b[0].0 < 0.0 && b[0].1 > 0.999);
    }

    #[test]
    fn two_factor_basis_has_ten_cubic_terms() {
        let b = BasisFamily::monomial_2d(3, [(0.0, 1.0), (0.0, 1.0)]).unwrap();
        assert_eq!(b.size(), 10);
        let phi = b.eval(&[0.5, 0.25]);
        assert_eq!(phi[0], 1.0);
        assert_eq!(phi[1], 0.5);
        assert_eq!(phi[2], 0.25);
        assert_eq!(phi[9], 0.25f64.powi(3));
    }

    #[test]
    fn csv_export_has_row_per_point() {
        let basis = BasisFamily::monomial(2, 0.0, 1.0).unwrap();
        let grid = GridSpec::standard(1, 8).unwrap();
        let c = CoeffSurface::zeros(grid, basis, 3);
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 9);
        assert!(text.starts_with("index,x,c0,c1,c2"));
    }
}
