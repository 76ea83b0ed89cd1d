//! Deformed Cauchy–Riemann operator A = ∂_z̄ + k(∂φ̂/∂z̄) on a square in ℂ and its Laplacians.
//!
//! Functions live on a periodic torus of `points_per_side + 2·margin` nodes per axis; (0,1)-forms
//! live on the inner `points_per_side²` nodes. Derivatives are periodic spectral differences, so
//! A has 2N−1 nonzeros per row and A* is its exact conjugate transpose. The margin keeps the
//! Gaussian-localized solutions away from the seam.

use num_complex::Complex;
use rayon::prelude::*;

use crate::base::{Point, WeightSpec};
use crate::error::{invalid, Error, Result};
use crate::fit::{fit_loglog, LogLogFit};

type C = Complex<f64>;

const ZERO: C = C { re: 0.0, im: 0.0 };

/// Uniform square grid of forms nodes inside a periodic function torus.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    half_width: f64,
    points_per_side: usize,
    spacing: f64,
    margin: usize,
}

/// Relative Rayleigh-quotient stop used for gap measurements.
pub const GAP_TOL: f64 = 1e-8;
/// Spacing bound in units of the Gaussian width 1/√(k·max λ).
pub const MAX_SPACING_FACTOR: f64 = 0.2;
/// Default half-width in units of 1/√(k·min λ).
pub const DEFAULT_HALF_WIDTH_FACTOR: f64 = 6.0;
/// Default torus margin in units of 1/√(k·min λ).
pub const DEFAULT_MARGIN_FACTOR: f64 = 2.0;

impl Grid2D {
    /// Forms nodes at x = −L + i·h, i < points_per_side, with h = 2L/(points_per_side − 1).
    pub fn new(half_width: f64, points_per_side: usize, margin: usize) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(invalid(format!("half-width must be positive, got {half_width}")));
        }
        if points_per_side < 16 {
            return Err(invalid(format!("need at least 16 points per side, got {points_per_side}")));
        }
        let spacing = 2.0 * half_width / (points_per_side - 1) as f64;
        Ok(Self { half_width, points_per_side, spacing, margin })
    }

    /// Default grid for (w, k): L = 6/√(k·min λ), h ≤ 0.2/√(k·max λ), margin 2/√(k·min λ).
    pub fn for_weight(w: &WeightSpec<f64>, k: u32) -> Result<Self> {
        Self::with_factors(w, k, DEFAULT_HALF_WIDTH_FACTOR, MAX_SPACING_FACTOR)
    }

    /// L = l_factor/√(k·min λ) and h ≤ h_factor/√(k·max λ); odd points per side.
    pub fn with_factors(w: &WeightSpec<f64>, k: u32, l_factor: f64, h_factor: f64) -> Result<Self> {
        if w.dim() != 1 {
            return Err(invalid("the discretized complex is implemented for n = 1 only"));
        }
        let (lmin, lmax) = lambda_range(w);
        let kf = k as f64;
        let half_width = l_factor / (kf * lmin).sqrt();
        let target = h_factor / (kf * lmax).sqrt();
        let mut pps = (2.0 * half_width / target).ceil() as usize + 1;
        if pps % 2 == 0 {
            pps += 1;
        }
        let spacing = 2.0 * half_width / (pps - 1) as f64;
        let margin = (DEFAULT_MARGIN_FACTOR / ((kf * lmin).sqrt() * spacing)).ceil() as usize;
        Self::new(half_width, pps.max(17), margin)
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points_per_side(&self) -> usize {
        self.points_per_side
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn margin(&self) -> usize {
        self.margin
    }

    /// Nodes per axis of the function torus.
    pub fn torus_side(&self) -> usize {
        self.points_per_side + 2 * self.margin
    }

    pub fn form_len(&self) -> usize {
        self.points_per_side * self.points_per_side
    }

    pub fn function_len(&self) -> usize {
        self.torus_side() * self.torus_side()
    }

    fn coord(&self, i: usize) -> f64 {
        (i as f64 - self.margin as f64) * self.spacing - self.half_width
    }

    /// Torus nodes, x index outer.
    pub fn function_nodes(&self) -> Vec<Point<f64>> {
        let nt = self.torus_side();
        (0..nt * nt).map(|idx| Point::from_re_im(self.coord(idx / nt), self.coord(idx % nt))).collect()
    }

    /// Forms nodes, x index outer.
    pub fn form_nodes(&self) -> Vec<Point<f64>> {
        let n = self.points_per_side;
        let m = self.margin;
        (0..n * n).map(|idx| Point::from_re_im(self.coord(idx / n + m), self.coord(idx % n + m))).collect()
    }

    fn form_to_torus(&self, idx: usize) -> usize {
        let n = self.points_per_side;
        (idx / n + self.margin) * self.torus_side() + idx % n + self.margin
    }

    pub fn sample_function<F: Fn(&Point<f64>) -> C + Sync + Send>(&self, f: F) -> Vec<C> {
        self.function_nodes().par_iter().map(f).collect()
    }

    pub fn sample_form<F: Fn(&Point<f64>) -> C + Sync + Send>(&self, f: F) -> Vec<C> {
        self.form_nodes().par_iter().map(f).collect()
    }

    /// Discrete L² norm with cell area h².
    pub fn norm(&self, v: &[C]) -> f64 {
        (self.spacing * self.spacing * v.iter().map(|x| x.norm_sqr()).sum::<f64>()).sqrt()
    }

    /// Fails unless h ≤ 0.2/√(k·max λ), suggesting a points-per-side that satisfies it.
    pub fn check_resolution(&self, w: &WeightSpec<f64>, k: u32) -> Result<()> {
        let (_, lmax) = lambda_range(w);
        let max_spacing = MAX_SPACING_FACTOR / (k as f64 * lmax).sqrt();
        if self.spacing > max_spacing * (1.0 + 1e-12) {
            let suggested = (2.0 * self.half_width / max_spacing).ceil() as usize + 1;
            return Err(Error::Resolution { spacing: self.spacing, max_spacing, suggested_points: suggested | 1 });
        }
        Ok(())
    }

    /// Same half-width with points per side scaled by `factor` (rounded to odd) and the margin kept in length units.
    pub fn refined(&self, factor: f64) -> Result<Self> {
        let mut pps = ((self.points_per_side - 1) as f64 * factor).round() as usize + 1;
        if pps % 2 == 0 {
            pps += 1;
        }
        let spacing = 2.0 * self.half_width / (pps - 1) as f64;
        let margin = (self.margin as f64 * self.spacing / spacing).ceil() as usize;
        Self::new(self.half_width, pps, margin)
    }
}

fn lambda_range(w: &WeightSpec<f64>) -> (f64, f64) {
    let l = w.eigenvalues();
    (l.iter().copied().fold(f64::INFINITY, f64::min), l.iter().copied().fold(0.0, f64::max))
}

/// Periodic spectral first-derivative matrix with spacing h, row-major N×N.
fn spectral_derivative(n: usize, h: f64) -> Vec<f64> {
    let nf = n as f64;
    let scale = std::f64::consts::PI / (nf * h) * 2.0;
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let diff = i as isize - j as isize;
            let sign = if diff.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            let arg = diff as f64 * std::f64::consts::PI / nf;
            let v = if n % 2 == 1 { 0.5 * sign / arg.sin() } else { 0.5 * sign / arg.tan() };
            d[i * n + j] = v * scale;
        }
    }
    d
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C>,
}

impl SparseOperator {
    /// Duplicate (row, col) entries are summed.
    pub fn from_triplets(rows: usize, cols: usize, mut entries: Vec<(usize, usize, C)>) -> Result<Self> {
        if let Some(i) = entries.iter().position(|(r, c, v)| *r >= rows || *c >= cols || !(v.re.is_finite() && v.im.is_finite())) {
            return Err(invalid(format!("entry {i} out of range or non-finite")));
        }
        entries.sort_by_key(|(r, c, _)| (*r, *c));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(entries.len());
        let mut values: Vec<C> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            indices.push(c);
            values.push(v);
            indptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        Ok(Self { rows, cols, indptr, indices, values })
    }

    pub fn identity(n: usize) -> Self {
        Self { rows: n, cols: n, indptr: (0..=n).collect(), indices: (0..n).collect(), values: vec![C::new(1.0, 0.0); n] }
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Self { rows: n, cols: n, indptr: (0..=n).collect(), indices: (0..n).collect(), values: d.iter().map(|v| C::new(*v, 0.0)).collect() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entries as (row, col, value).
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, C)> + '_ {
        (0..self.rows).flat_map(move |r| (self.indptr[r]..self.indptr[r + 1]).map(move |p| (r, self.indices[p], self.values[p])))
    }

    pub fn get(&self, r: usize, c: usize) -> C {
        let span = &self.indices[self.indptr[r]..self.indptr[r + 1]];
        match span.binary_search(&c) {
            Ok(p) => self.values[self.indptr[r] + p],
            Err(_) => ZERO,
        }
    }

    pub fn apply(&self, x: &[C]) -> Vec<C> {
        assert_eq!(x.len(), self.cols, "operator applied to a vector of the wrong length");
        (0..self.rows)
            .into_par_iter()
            .map(|r| {
                let mut acc = ZERO;
                for p in self.indptr[r]..self.indptr[r + 1] {
                    acc += self.values[p] * x[self.indices[p]];
                }
                acc
            })
            .collect()
    }

    /// Exact conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.cols {
            counts[c + 1] += counts[c];
        }
        let mut next = counts.clone();
        let mut indices = vec![0usize; self.nnz()];
        let mut values = vec![ZERO; self.nnz()];
        for r in 0..self.rows {
            for p in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[p];
                indices[next[c]] = r;
                values[next[c]] = self.values[p].conj();
                next[c] += 1;
            }
        }
        Self { rows: self.cols, cols: self.rows, indptr: counts, indices, values }
    }

    /// max |M_ij − conj M_ji|.
    pub fn hermitian_defect(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        self.entries().fold(0.0, |m, (r, c, v)| m.max((v - self.get(c, r).conj()).norm()))
    }
}

/// Hermitian operator known through its action.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[C]) -> Vec<C>;
}

impl LinearOperator for SparseOperator {
    fn dim(&self) -> usize {
        self.rows
    }

    fn apply(&self, x: &[C]) -> Vec<C> {
        SparseOperator::apply(self, x)
    }
}

/// A from functions on the torus to forms on the inner nodes, with A u = ½(∂ₓ + i∂ᵧ)u + k(∂φ̂/∂z̄)u.
pub fn build_deformed_dbar(grid: &Grid2D, w: &WeightSpec<f64>, k: u32) -> Result<SparseOperator> {
    if w.dim() != 1 {
        return Err(invalid("the discretized complex is implemented for n = 1 only"));
    }
    grid.check_resolution(w, k)?;
    let nt = grid.torus_side();
    let d = spectral_derivative(nt, grid.spacing);
    let nodes = grid.form_nodes();
    let kf = k as f64;
    let potential: Vec<C> = nodes.par_iter().map(|p| Ok(w.dphi_dzbar(k, p)?[0] * kf)).collect::<Result<_>>()?;
    let rows = grid.form_len();
    let mut indptr = Vec::with_capacity(rows + 1);
    let mut indices = Vec::with_capacity(rows * (2 * nt - 1));
    let mut values = Vec::with_capacity(rows * (2 * nt - 1));
    indptr.push(0);
    for (r, pot) in potential.iter().enumerate() {
        let t = grid.form_to_torus(r);
        let (ix, iy) = (t / nt, t % nt);
        let mut row: Vec<(usize, C)> = Vec::with_capacity(2 * nt - 1);
        for l in 0..nt {
            if l != ix {
                row.push((l * nt + iy, C::new(0.5 * d[ix * nt + l], 0.0)));
            }
            if l != iy {
                row.push((ix * nt + l, C::new(0.0, 0.5 * d[iy * nt + l])));
            }
        }
        row.push((t, *pot));
        row.sort_by_key(|(c, _)| *c);
        for (c, v) in row {
            indices.push(c);
            values.push(v);
        }
        indptr.push(indices.len());
    }
    if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::Conditioning("non-finite operator entry".into()));
    }
    Ok(SparseOperator { rows, cols: grid.function_len(), indptr, indices, values })
}

/// Δ⁽ᵠ⁾ applied matrix-free: q = 0 gives A*A on functions, q = 1 gives AA* on forms.
#[derive(Debug, Clone)]
pub struct Laplacian {
    a: SparseOperator,
    a_adj: SparseOperator,
    q: u8,
}

pub fn laplacian(a: &SparseOperator, q: u8) -> Result<Laplacian> {
    if q > 1 {
        return Err(invalid(format!("form degree must be 0 or 1, got {q}")));
    }
    Ok(Laplacian { a: a.clone(), a_adj: a.adjoint(), q })
}

impl Laplacian {
    pub fn degree(&self) -> u8 {
        self.q
    }

    pub fn dbar(&self) -> &SparseOperator {
        &self.a
    }

    pub fn dbar_adjoint(&self) -> &SparseOperator {
        &self.a_adj
    }

    /// Explicit matrix with entries filled pairwise as (z, conj z), so Hermitian bit for bit.
    /// Dense in general; refuses dimensions above `max_dim`.
    pub fn assemble(&self, max_dim: usize) -> Result<SparseOperator> {
        // rows of `f` are the factors whose pairwise inner products form Δ
        let f = if self.q == 1 { &self.a } else { &self.a_adj };
        let n = f.rows;
        if n > max_dim {
            return Err(invalid(format!("refusing to assemble a {n}×{n} Laplacian (limit {max_dim})")));
        }
        let dense_rows: Vec<Vec<(usize, C)>> = (0..n).map(|r| (f.indptr[r]..f.indptr[r + 1]).map(|p| (f.indices[p], f.values[p])).collect()).collect();
        let mut entries = Vec::new();
        for i in 0..n {
            for j in i..n {
                let v = sparse_dot(&dense_rows[i], &dense_rows[j]);
                if v != ZERO {
                    entries.push((i, j, v));
                    if i != j {
                        entries.push((j, i, v.conj()));
                    }
                }
            }
        }
        for e in entries.iter_mut().filter(|(i, j, _)| i == j) {
            e.2 = C::new(e.2.re, 0.0);
        }
        SparseOperator::from_triplets(n, n, entries)
    }
}

/// Σ_c a_c·conj(b_c) over matching sorted column lists.
fn sparse_dot(a: &[(usize, C)], b: &[(usize, C)]) -> C {
    let (mut i, mut j) = (0, 0);
    let mut acc = ZERO;
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += a[i].1 * b[j].1.conj();
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

impl LinearOperator for Laplacian {
    fn dim(&self) -> usize {
        if self.q == 1 { self.a.rows } else { self.a.cols }
    }

    fn apply(&self, x: &[C]) -> Vec<C> {
        if self.q == 1 {
            self.a.apply(&self.a_adj.apply(x))
        } else {
            self.a_adj.apply(&self.a.apply(x))
        }
    }
}

fn dot(a: &[C], b: &[C]) -> C {
    a.iter().zip(b).fold(ZERO, |s, (x, y)| s + x.conj() * y)
}

fn vnorm(a: &[C]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative residual target of the inner conjugate-gradient solves.
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub eig_max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { cg_tol: 1e-12, cg_max_iter: 20_000, eig_max_iter: 200 }
    }
}

/// Conjugate gradients for Hermitian positive definite `op`, from x = 0.
pub fn conjugate_gradient(op: &dyn LinearOperator, b: &[C], tol: f64, max_iter: usize) -> Result<Vec<C>> {
    let n = op.dim();
    if b.len() != n {
        return Err(Error::MismatchedNodes);
    }
    let bn = vnorm(b);
    let mut x = vec![ZERO; n];
    if bn == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r).re;
    for _ in 0..max_iter {
        if rr.sqrt() <= tol * bn {
            return Ok(x);
        }
        let ap = op.apply(&p);
        let pap = dot(&p, &ap).re;
        if !(pap > 0.0) {
            return Err(Error::Singular("conjugate gradients met a non-positive direction".into()));
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += p[i] * alpha;
            r[i] -= ap[i] * alpha;
        }
        let rr_new = dot(&r, &r).re;
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + p[i] * beta;
        }
        rr = rr_new;
    }
    if rr.sqrt() <= tol * bn {
        return Ok(x);
    }
    Err(Error::NoConvergence { iterations: max_iter, residual: rr.sqrt() / bn })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenEstimate {
    pub value: f64,
    pub vector: Vec<C>,
    pub iterations: usize,
    /// ‖Δv − μv‖ for the unit vector v.
    pub residual: f64,
}

/// Smallest eigenvalue by shift-invert Lanczos from the normalized all-ones vector.
///
/// Each step applies Δ⁻¹ by conjugate gradients and reorthogonalizes fully. Stops once the
/// estimate changes by at most `tol` relative between steps and the Ritz vector's residual
/// bound for Δ⁻¹ is below 1e-3 of its eigenvalue; clustered low spectra make plain inverse
/// iteration stall, Lanczos does not.
pub fn min_eigenvalue(op: &dyn LinearOperator, tol: f64, opts: SolverOptions) -> Result<EigenEstimate> {
    let n = op.dim();
    if n == 0 {
        return Err(invalid("empty operator"));
    }
    let mut basis: Vec<Vec<C>> = vec![vec![C::new(1.0 / (n as f64).sqrt(), 0.0); n]];
    let (mut alphas, mut betas) = (Vec::<f64>::new(), Vec::<f64>::new());
    let mut mu_prev = f64::NAN;
    let mut bound = f64::INFINITY;
    for it in 1..=opts.eig_max_iter.min(n) {
        let q = basis.last().unwrap();
        let mut w = conjugate_gradient(op, q, opts.cg_tol, opts.cg_max_iter)?;
        alphas.push(dot(q, &w).re);
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &w);
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= bi * c;
                }
            }
        }
        let beta = vnorm(&w);
        let m = alphas.len();
        let t = nalgebra::DMatrix::from_fn(m, m, |i, j| match i.abs_diff(j) {
            0 => alphas[i],
            1 => betas[i.min(j)],
            _ => 0.0,
        });
        let eig = nalgebra::SymmetricEigen::new(t);
        let top = eig.eigenvalues.imax();
        let theta = eig.eigenvalues[top];
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::Singular("shift-invert Ritz value is not positive".into()));
        }
        let s = eig.eigenvectors.column(top);
        let mu = 1.0 / theta;
        bound = beta * s[m - 1].abs() / theta;
        let invariant = beta <= 1e-14 * theta;
        if invariant || ((mu - mu_prev).abs() <= tol * mu && bound <= 1e-3) || m == n {
            let mut x = vec![ZERO; n];
            for (b, sc) in basis.iter().zip(s.iter()) {
                for (xi, bi) in x.iter_mut().zip(b) {
                    *xi += bi * *sc;
                }
            }
            let nx = vnorm(&x);
            x.iter_mut().for_each(|v| *v /= nx);
            let ax = op.apply(&x);
            let value = dot(&x, &ax).re;
            let residual = ax.iter().zip(&x).map(|(a, b)| (a - b * value).norm_sqr()).sum::<f64>().sqrt();
            return Ok(EigenEstimate { value: value.min(mu), vector: x, iterations: it, residual });
        }
        mu_prev = mu;
        betas.push(beta);
        basis.push(w.into_iter().map(|c| c / beta).collect());
    }
    Err(Error::NoConvergence { iterations: opts.eig_max_iter, residual: bound })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DbarSolution {
    /// Minimal solution on the function torus.
    pub u: Vec<C>,
    /// ‖Au − α‖/‖α‖.
    pub residual: f64,
    pub u_norm: f64,
    pub alpha_norm: f64,
    /// Measured lowest eigenvalue of Δ⁽¹⁾.
    pub gap: f64,
    /// ‖u‖·√gap/‖α‖; at most 1 up to solver tolerance.
    pub certificate: f64,
}

/// u = A*(Δ⁽¹⁾)⁻¹α for a form sampled on the inner nodes.
pub fn solve_dbar(alpha: &[C], w: &WeightSpec<f64>, k: u32, grid: &Grid2D) -> Result<DbarSolution> {
    solve_dbar_with(alpha, w, k, grid, SolverOptions::default())
}

pub fn solve_dbar_with(alpha: &[C], w: &WeightSpec<f64>, k: u32, grid: &Grid2D, opts: SolverOptions) -> Result<DbarSolution> {
    if alpha.len() != grid.form_len() {
        return Err(Error::MismatchedNodes);
    }
    if let Some(i) = alpha.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::NonFinite { index: i });
    }
    let a = build_deformed_dbar(grid, w, k)?;
    let lap = laplacian(&a, 1)?;
    let gap = min_eigenvalue(&lap, GAP_TOL, opts)?.value;
    if !(gap > 0.0) {
        return Err(Error::Singular("measured gap is not positive".into()));
    }
    let y = conjugate_gradient(&lap, alpha, opts.cg_tol, opts.cg_max_iter)?;
    let u = lap.a_adj.apply(&y);
    let au = a.apply(&u);
    let alpha_norm = grid.norm(alpha);
    let diff: Vec<C> = au.iter().zip(alpha).map(|(x, y)| x - y).collect();
    let residual = if alpha_norm > 0.0 { grid.norm(&diff) / alpha_norm } else { grid.norm(&diff) };
    let u_norm = grid.norm(&u);
    let certificate = if alpha_norm > 0.0 { u_norm * gap.sqrt() / alpha_norm } else { 0.0 };
    Ok(DbarSolution { u, residual, u_norm, alpha_norm, gap, certificate })
}

/// Pu = u − A*(Δ⁽¹⁾)⁻¹Au for a function on the torus.
pub fn hodge_project(u: &[C], w: &WeightSpec<f64>, k: u32, grid: &Grid2D) -> Result<Vec<C>> {
    let a = build_deformed_dbar(grid, w, k)?;
    hodge_project_with(u, &laplacian(&a, 1)?, SolverOptions::default())
}

/// As [`hodge_project`] with a prebuilt Δ⁽¹⁾.
pub fn hodge_project_with(u: &[C], lap: &Laplacian, opts: SolverOptions) -> Result<Vec<C>> {
    if lap.q != 1 {
        return Err(invalid("projection needs the form Laplacian"));
    }
    if u.len() != lap.a.cols {
        return Err(Error::MismatchedNodes);
    }
    let au = lap.a.apply(u);
    let y = conjugate_gradient(lap, &au, opts.cg_tol, opts.cg_max_iter)?;
    let corr = lap.a_adj.apply(&y);
    Ok(u.iter().zip(&corr).map(|(a, b)| a - b).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapRow {
    pub k: u32,
    pub half_width: f64,
    pub points_per_side: usize,
    pub min_eig: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub rows: Vec<GapRow>,
    /// min_eig ≈ C·k^d fitted over the k list.
    pub fit: Option<LogLogFit<f64>>,
    /// |μ(refined) − μ|/μ per k, when refinement was requested.
    pub refinement_deltas: Vec<f64>,
}

impl GapReport {
    pub fn order(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }

    pub fn constant(&self) -> Option<f64> {
        self.fit.map(|f| f.intercept.exp())
    }

    /// Rows: k, L, points_per_side, min_eig, ratio_min_eig_over_k.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["k", "L", "points_per_side", "min_eig", "ratio_min_eig_over_k"])?;
        for r in &self.rows {
            wr.write_record([
                r.k.to_string(),
                format!("{:.16e}", r.half_width),
                r.points_per_side.to_string(),
                format!("{:.16e}", r.min_eig),
                format!("{:.16e}", r.min_eig / r.k as f64),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Lowest eigenvalue of Δ⁽¹⁾ on the default grid for each k, optionally re-measured on a grid
/// refined by `refine` per axis.
pub fn gap_study(w: &WeightSpec<f64>, k_values: &[u32], refine: Option<f64>, tol: f64) -> Result<GapReport> {
    let mut rows = Vec::new();
    let mut refinement_deltas = Vec::new();
    for &k in k_values {
        let grid = Grid2D::for_weight(w, k)?;
        let mu = measure_gap(w, k, &grid, tol)?;
        rows.push(GapRow { k, half_width: grid.half_width(), points_per_side: grid.points_per_side(), min_eig: mu });
        if let Some(f) = refine {
            let fine = grid.refined(f)?;
            let mu_fine = measure_gap(w, k, &fine, tol)?;
            refinement_deltas.push((mu_fine - mu).abs() / mu);
        }
    }
    let fit = if rows.len() >= 3 {
        let xs: Vec<f64> = rows.iter().map(|r| r.k as f64).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.min_eig).collect();
        Some(fit_loglog(&xs, &ys)?)
    } else {
        None
    };
    Ok(GapReport { rows, fit, refinement_deltas })
}

pub fn measure_gap(w: &WeightSpec<f64>, k: u32, grid: &Grid2D, tol: f64) -> Result<f64> {
    let a = build_deformed_dbar(grid, w, k)?;
    Ok(min_eigenvalue(&laplacian(&a, 1)?, tol, SolverOptions::default())?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::Poly;
    use proptest::prelude::*;

    fn model() -> WeightSpec<f64> {
        WeightSpec::model(vec![0.5], 0.1).unwrap()
    }

    fn gauss(k: u32, lam: f64) -> impl Fn(&Point<f64>) -> C + Sync + Send + Copy {
        move |p| C::new((-(k as f64) * lam * p.norm_sqr()).exp(), 0.0)
    }

    fn restrict(grid: &Grid2D, v: &[C]) -> Vec<C> {
        (0..grid.form_len()).map(|i| v[grid.form_to_torus(i)]).collect()
    }

    #[test]
    fn grid_validation() {
        assert!(Grid2D::new(1.0, 15, 0).is_err());
        assert!(Grid2D::new(0.0, 33, 0).is_err());
        let g = Grid2D::new(1.0, 33, 2).unwrap();
        assert!((g.spacing() - 1.0 / 16.0).abs() < 1e-15);
        assert_eq!(g.torus_side(), 37);
        let w = model();
        let coarse = Grid2D::new(2.0, 17, 2).unwrap();
        match coarse.check_resolution(&w, 10) {
            Err(Error::Resolution { suggested_points, .. }) => {
                let fixed = Grid2D::new(2.0, suggested_points, 2).unwrap();
                assert!(fixed.check_resolution(&w, 10).is_ok());
            }
            other => panic!("expected resolution error, got {other:?}"),
        }
    }

    #[test]
    fn spectral_derivative_is_exact_on_trig_polynomials() {
        for n in [15usize, 16] {
            let period = 3.0;
            let h = period / n as f64;
            let d = spectral_derivative(n, h);
            let om = std::f64::consts::TAU / period;
            for i in 0..n {
                let du: f64 = (0..n).map(|j| d[i * n + j] * (om * 2.0 * j as f64 * h).sin()).sum();
                assert!((du - 2.0 * om * (om * 2.0 * i as f64 * h).cos()).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn operator_examples() {
        let k = 10;
        let lam = 0.5;
        let w = model();
        let grid = Grid2D::for_weight(&w, k).unwrap();
        let a = build_deformed_dbar(&grid, &w, k).unwrap();
        let nodes = grid.form_nodes();
        let ones = vec![C::new(1.0, 0.0); grid.function_len()];
        let out = a.apply(&ones);
        for (v, p) in out.iter().zip(&nodes) {
            assert!((v - p.coords()[0] * (k as f64 * lam)).norm() < 1e-10);
        }
        let g = grid.sample_function(gauss(k, lam));
        assert!(a.apply(&g).iter().all(|v| v.norm() < 1e-10));
        let zbar_g = grid.sample_function(|p| p.coords()[0].conj() * gauss(k, lam)(p));
        let out = a.apply(&zbar_g);
        for (v, p) in out.iter().zip(&nodes) {
            assert!((v - gauss(k, lam)(p)).norm() < 1e-10);
        }
    }

    #[test]
    fn adjoint_and_hermitian_assembly() {
        let w = WeightSpec::new(vec![0.5], Poly::re_holomorphic(vec![3], C::new(0.3, 0.0)), 0.1).unwrap();
        let k = 1;
        let grid = Grid2D::new(2.0, 17, 2).unwrap();
        let a = build_deformed_dbar(&grid, &w, k).unwrap();
        assert_eq!(a.adjoint().adjoint(), a);
        for q in [0u8, 1] {
            let lap = laplacian(&a, q).unwrap();
            let m = lap.assemble(2000).unwrap();
            assert_eq!(m.hermitian_defect(), 0.0);
            // assembled and matrix-free actions agree
            let x: Vec<C> = (0..lap.dim()).map(|i| C::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos())).collect();
            let (p, r) = (m.apply(&x), LinearOperator::apply(&lap, &x));
            let err = p.iter().zip(&r).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err < 1e-9 * vnorm(&r), "{err}");
        }
        assert!(laplacian(&a, 2).is_err());
    }

    #[test]
    fn min_eigenvalue_examples() {
        let opts = SolverOptions::default();
        assert!((min_eigenvalue(&SparseOperator::identity(5), 1e-12, opts).unwrap().value - 1.0).abs() < 1e-12);
        let d = SparseOperator::diagonal(&[3.0, 5.0, 7.0]);
        assert!((min_eigenvalue(&d, 1e-13, opts).unwrap().value - 3.0).abs() < 1e-10);
        let spread: Vec<f64> = (0..40).map(|i| 1.0 + i as f64).collect();
        let tight = SolverOptions { eig_max_iter: 2, ..opts };
        assert!(matches!(min_eigenvalue(&SparseOperator::diagonal(&spread), 1e-15, tight), Err(Error::NoConvergence { .. })));
        // a tight cluster at the bottom
        let cluster: Vec<f64> = (0..60).map(|i| if i < 20 { 1.0 + 1e-3 * i as f64 } else { 2.0 + i as f64 }).collect();
        let est = min_eigenvalue(&SparseOperator::diagonal(&cluster), 1e-12, opts).unwrap();
        assert!((est.value - 1.0).abs() < 1e-9, "{}", est.value);
    }

    #[test]
    fn ground_state_of_function_laplacian() {
        let k = 10;
        let w = model();
        let grid = Grid2D::for_weight(&w, k).unwrap();
        let a = build_deformed_dbar(&grid, &w, k).unwrap();
        let lap0 = laplacian(&a, 0).unwrap();
        let g = grid.sample_function(gauss(k, 0.5));
        let lg = LinearOperator::apply(&lap0, &g);
        assert!(dot(&g, &lg).re / dot(&g, &g).re < 1e-12);
    }

    #[test]
    fn model_gap_is_2k_lambda() {
        let w = model();
        for k in [10u32, 40] {
            let mu = measure_gap(&w, k, &Grid2D::for_weight(&w, k).unwrap(), GAP_TOL).unwrap();
            assert!((mu / k as f64 - 1.0).abs() < 0.05, "k={k}: {mu}");
        }
    }

    #[test]
    fn solve_examples() {
        let k = 10;
        let lam = 0.5;
        let w = model();
        let grid = Grid2D::for_weight(&w, k).unwrap();
        let alpha = grid.sample_form(gauss(k, lam));
        let sol = solve_dbar(&alpha, &w, k, &grid).unwrap();
        assert!(sol.residual < 1e-8);
        let bound = sol.alpha_norm / (2.0 * k as f64 * lam).sqrt();
        assert!((sol.u_norm / bound - 1.0).abs() < 1e-2);
        assert!(sol.certificate <= 1.0 + 1e-3);
        let expect = grid.sample_function(|p| p.coords()[0].conj() * gauss(k, lam)(p));
        let diff: Vec<C> = sol.u.iter().zip(&expect).map(|(a, b)| a - b).collect();
        assert!(grid.norm(&diff) < 1e-6 * grid.norm(&expect));
        let zero = solve_dbar(&vec![ZERO; grid.form_len()], &w, k, &grid).unwrap();
        assert!(zero.u.iter().all(|v| *v == ZERO));
    }

    #[test]
    fn minimal_solution_recovers_orthogonal_preimage() {
        let k = 10;
        let lam = 0.5;
        let w = model();
        let grid = Grid2D::for_weight(&w, k).unwrap();
        let a = build_deformed_dbar(&grid, &w, k).unwrap();
        // z̄²·Gaussian is orthogonal to every holomorphic monomial times the Gaussian
        let g = grid.sample_function(|p| p.coords()[0].conj().powu(2) * gauss(k, lam)(p));
        let alpha = a.apply(&g);
        let sol = solve_dbar(&alpha, &w, k, &grid).unwrap();
        let diff: Vec<C> = sol.u.iter().zip(&g).map(|(x, y)| x - y).collect();
        assert!(grid.norm(&diff) < 1e-6 * grid.norm(&g));
    }

    #[test]
    fn hodge_examples() {
        let k = 10;
        let lam = 0.5;
        let w = model();
        let grid = Grid2D::for_weight(&w, k).unwrap();
        let hol = grid.sample_function(|p| p.coords()[0] * gauss(k, lam)(p));
        let p_hol = hodge_project(&hol, &w, k, &grid).unwrap();
        let d: Vec<C> = p_hol.iter().zip(&hol).map(|(a, b)| a - b).collect();
        assert!(grid.norm(&d) < 1e-8 * grid.norm(&hol));
        let anti = grid.sample_function(|p| p.coords()[0].conj() * gauss(k, lam)(p));
        let p_anti = hodge_project(&anti, &w, k, &grid).unwrap();
        assert!(grid.norm(&p_anti) < 1e-6 * grid.norm(&anti));
        let _ = restrict(&grid, &p_anti);
    }

    #[test]
    fn boundary_insensitivity() {
        let w = model();
        let k = 10;
        let base = Grid2D::for_weight(&w, k).unwrap();
        let wide = Grid2D::with_factors(&w, k, 2.0 * DEFAULT_HALF_WIDTH_FACTOR, MAX_SPACING_FACTOR).unwrap();
        let (a, b) = (measure_gap(&w, k, &base, GAP_TOL).unwrap(), measure_gap(&w, k, &wide, GAP_TOL).unwrap());
        assert!((a - b).abs() / a < 1e-3, "{a} vs {b}");
    }

    #[test]
    fn gap_report_csv() {
        let w = model();
        let rep = gap_study(&w, &[10, 20], None, 1e-8).unwrap();
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("k,L,points_per_side,min_eig,ratio_min_eig_over_k\n"));
        assert_eq!(text.lines().count(), 3);
        assert!(rep.rows.iter().all(|r| r.min_eig >= 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn hodge_projection_is_idempotent(c0 in -1.0f64..1.0, c1 in -1.0f64..1.0, c2 in -1.0f64..1.0) {
            let k = 10;
            let w = model();
            let grid = Grid2D::new(1.5, 35, 6).unwrap();
            let a = build_deformed_dbar(&grid, &w, k).unwrap();
            let lap = laplacian(&a, 1).unwrap();
            let u = grid.sample_function(|p| {
                let z = p.coords()[0];
                (C::new(c0, 0.3) + z.conj() * c1 + z * z * c2) * (-(k as f64) * 0.4 * p.norm_sqr()).exp()
            });
            let pu = hodge_project_with(&u, &lap, SolverOptions::default()).unwrap();
            let ppu = hodge_project_with(&pu, &lap, SolverOptions::default()).unwrap();
            let d: Vec<C> = ppu.iter().zip(&pu).map(|(a, b)| a - b).collect();
            prop_assert!(grid.norm(&d) <= 1e-6 * grid.norm(&u));
            let apu = a.apply(&pu);
            prop_assert!(grid.norm(&apu) <= 1e-6 * grid.norm(&a.apply(&u)).max(grid.norm(&u)));
        }
    }
}
