//! Brute-force weighted Bergman kernel from an orthonormalized monomial basis.
//!
//! The kernel is reported in the localized gauge,
//! K(z, w) = Σⱼ Ψⱼ(z)conj Ψⱼ(w)·e^{−kφ̂(z)−kφ̂(w)}, and reproduces against ρ dm.

use nalgebra::DMatrix;
use num_complex::Complex;
use rayon::prelude::*;

use crate::base::{CutoffProfile, KernelGrid, Measure, MultiIndex, Point, QuadratureGrid};
use crate::base::{MetricSpec, WeightSpec};
use crate::error::{invalid, Error, Result};
use crate::modelkernel::monomial_norm;
use crate::normalform::hermitian_eigen;

type C = Complex<f64>;

/// Monomials normalized by their model norms, orthonormalized against e^{−2kφ̂}ρ dm.
#[derive(Debug, Clone)]
pub struct OracleBasis {
    weight: WeightSpec<f64>,
    metric: MetricSpec<f64>,
    k: u32,
    max_degree: u32,
    indices: Vec<MultiIndex>,
    inv_sqrt_norms: Vec<f64>,
    gram: DMatrix<C>,
    transform: DMatrix<C>,
    condition: f64,
}

/// Smallest eigenvalue of the complex Hessian of φ̂ over samples of the cutoff ball.
///
/// Outside the ball φ̂ = φ₀, whose Hessian is diag(λ).
pub fn levi_min_eigenvalue(w: &WeightSpec<f64>, k: u32) -> Result<(f64, f64)> {
    let lam_min = w.eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
    if w.is_model() {
        return Ok((lam_min, 0.0));
    }
    let r_max = w.theta(k)?.support_radius();
    let n = w.dim();
    let mut best = (lam_min, r_max);
    let radial = 48;
    let dirs = sample_directions(n);
    for i in 0..=radial {
        let r = r_max * i as f64 / radial as f64;
        for d in &dirs {
            let z = d.scaled(r);
            let h = w.complex_hessian(k, &z)?;
            let m = DMatrix::from_fn(n, n, |a, b| h[a][b]);
            let m = (&m + m.adjoint()) * C::new(0.5, 0.0);
            let (vals, _) = hermitian_eigen(&m);
            let low = vals[n - 1];
            if low < best.0 {
                best = (low, r);
            }
        }
    }
    Ok(best)
}

/// Deterministic unit directions in ℂⁿ.
fn sample_directions(n: usize) -> Vec<Point<f64>> {
    let per: usize = if n == 1 { 96 } else { 12 };
    let mut out = Vec::new();
    let total = per.pow(n as u32) * if n > 1 { 3 } else { 1 };
    for idx in 0..total {
        let mut coords = Vec::with_capacity(n);
        let mut rem = idx;
        for j in 0..n {
            let a = (rem % per) as f64 / per as f64 * std::f64::consts::TAU;
            rem /= per;
            let mag = if n == 1 { 1.0 } else { 1.0 + ((idx / per.pow(n as u32)) as f64) * (j as f64 + 1.0) * 0.5 };
            coords.push(C::from_polar(mag, a));
        }
        let p = Point::new(coords).expect("finite direction");
        out.push(p.scaled(1.0 / p.norm()));
    }
    out
}

pub fn default_max_degree(k: u32, epsilon: f64) -> u32 {
    12u32.max((6.0 * (k as f64).powf(epsilon)).ceil() as u32)
}

/// Quadrature grid adequate for the Gram matrix of degree-A monomials.
///
/// For n = 1 a polar rule with radial panel breaks at the cutoff transitions;
/// otherwise a tensor Gauss–Hermite rule for the model Gaussian.
pub fn default_grid(w: &WeightSpec<f64>, met: &MetricSpec<f64>, k: u32, max_degree: u32) -> Result<QuadratureGrid<f64>> {
    let lam_min = w.eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
    let kf = k as f64;
    if w.dim() == 1 {
        // |z|^{2A}e^{−2kλ|z|²} has negligible mass beyond this radius
        let radius = ((2.0 * max_degree as f64 + 90.0) / (2.0 * kf * lam_min)).sqrt();
        let theta = w.theta(k)?;
        let mut breaks = vec![theta.plateau_radius(), theta.support_radius()];
        if !met.is_flat() {
            breaks.push(0.5 * met.support_radius());
            breaks.push(met.support_radius());
        }
        breaks.sort_by(f64::total_cmp);
        let per_panel = 40 + max_degree as usize;
        let angular = (2 * max_degree as usize + 32).max(96);
        QuadratureGrid::polar_disk(radius, &breaks, per_panel, angular)
    } else {
        let order = (max_degree as usize + 24).min(60);
        QuadratureGrid::gaussian(w.eigenvalues(), kf, order)
    }
}

/// Pivoted Cholesky P G Pᵀ = L L*; returns (L, permutation).
fn pivoted_cholesky(g: &DMatrix<C>, rel_tol: f64) -> Result<(DMatrix<C>, Vec<usize>)> {
    let d = g.nrows();
    let mut a = g.clone();
    let mut perm: Vec<usize> = (0..d).collect();
    let mut l = DMatrix::from_element(d, d, C::new(0.0, 0.0));
    let max_diag = (0..d).map(|i| g[(i, i)].re).fold(0.0, f64::max);
    for j in 0..d {
        let (mut piv, mut best) = (j, f64::NEG_INFINITY);
        for i in j..d {
            if a[(i, i)].re > best {
                best = a[(i, i)].re;
                piv = i;
            }
        }
        if !(best > rel_tol * max_diag) {
            return Err(Error::Conditioning(format!(
                "Gram matrix not numerically positive definite at pivot {j}: {best:.3e} vs max diagonal {max_diag:.3e}"
            )));
        }
        if piv != j {
            a.swap_rows(j, piv);
            a.swap_columns(j, piv);
            l.swap_rows(j, piv);
            perm.swap(j, piv);
        }
        let ljj = a[(j, j)].re.sqrt();
        l[(j, j)] = C::new(ljj, 0.0);
        for i in j + 1..d {
            l[(i, j)] = a[(i, j)] / ljj;
        }
        for c in j + 1..d {
            for r in j + 1..d {
                let v = l[(r, j)] * l[(c, j)].conj();
                a[(r, c)] -= v;
            }
        }
    }
    Ok((l, perm))
}

fn forward_inverse(l: &DMatrix<C>) -> DMatrix<C> {
    let d = l.nrows();
    let mut inv = DMatrix::from_element(d, d, C::new(0.0, 0.0));
    for col in 0..d {
        for i in col..d {
            let mut s = if i == col { C::new(1.0, 0.0) } else { C::new(0.0, 0.0) };
            for m in col..i {
                s -= l[(i, m)] * inv[(m, col)];
            }
            inv[(i, col)] = s / l[(i, i)];
        }
    }
    inv
}

pub fn build_basis(
    w: &WeightSpec<f64>,
    met: &MetricSpec<f64>,
    k: u32,
    max_degree: u32,
    grid: &QuadratureGrid<f64>,
) -> Result<OracleBasis> {
    if w.dim() != met.dim() || w.dim() != grid.dim() {
        return Err(invalid("weight, metric and grid dimensions differ"));
    }
    let (levi, at) = levi_min_eigenvalue(w, k)?;
    if !(levi > 0.0) {
        return Err(Error::NotPlurisubharmonic { min_eigenvalue: levi, radius: at });
    }
    let kf = k as f64;
    let lam = w.eigenvalues().to_vec();
    let indices = MultiIndex::enumerate(w.dim(), max_degree);
    let inv_sqrt_norms: Vec<f64> = indices.iter().map(|a| 1.0 / monomial_norm(a, &lam, k).sqrt()).collect();
    let d = indices.len();
    let log_density = |p: &Point<f64>| -> f64 {
        match grid.measure() {
            Measure::Lebesgue => 0.0,
            Measure::Gaussian { k: kg, lambda: lg } => {
                2.0 * kg * p.coords().iter().zip(lg).map(|(c, l)| l * c.norm_sqr()).sum::<f64>()
            }
        }
    };
    let rows: Vec<Vec<C>> = grid
        .nodes()
        .par_iter()
        .zip(grid.weights().par_iter())
        .map(|(p, wt)| -> Result<Vec<C>> {
            let phi = w.phi_hat(k, p)?;
            let rho = met.checked_density(p)?;
            let s = (wt * rho * (log_density(p) - 2.0 * kf * phi).exp()).sqrt();
            Ok(monomials(&indices, &inv_sqrt_norms, p).into_iter().map(|m| m * s).collect())
        })
        .collect::<Result<_>>()?;
    let f = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
    if f.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
        return Err(Error::Conditioning("non-finite Gram integrand".into()));
    }
    let gram = f.transpose() * f.map(|c| c.conj());
    let gram = (&gram + gram.adjoint()) * C::new(0.5, 0.0);
    let (l, perm) = pivoted_cholesky(&gram, 1e-13)?;
    let l_inv = forward_inverse(&l);
    // T = L⁻¹P, so (T e)_j = Σ_i L⁻¹_{ji} e_{perm[i]}
    let mut transform = DMatrix::from_element(d, d, C::new(0.0, 0.0));
    for j in 0..d {
        for (i, &src) in perm.iter().enumerate() {
            transform[(j, src)] = l_inv[(j, i)];
        }
    }
    let diag: Vec<f64> = (0..d).map(|i| l[(i, i)].re).collect();
    let cmax = diag.iter().copied().fold(0.0, f64::max);
    let cmin = diag.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(OracleBasis {
        weight: w.clone(),
        metric: met.clone(),
        k,
        max_degree,
        indices,
        inv_sqrt_norms,
        gram,
        transform,
        condition: (cmax / cmin).powi(2),
    })
}

/// Increases A from the default in steps of 4 until K(0,0) moves by less than `tol` relative.
pub fn build_adaptive(w: &WeightSpec<f64>, met: &MetricSpec<f64>, k: u32, tol: f64, max_a: u32) -> Result<OracleBasis> {
    let mut a = default_max_degree(k, w.epsilon());
    let origin = Point::origin(w.dim());
    let mut basis = build_basis(w, met, k, a, &default_grid(w, met, k, a)?)?;
    let mut prev = basis.kernel(&origin, &origin)?.re;
    while a + 4 <= max_a {
        a += 4;
        let next = build_basis(w, met, k, a, &default_grid(w, met, k, a)?)?;
        let v = next.kernel(&origin, &origin)?.re;
        basis = next;
        if (v - prev).abs() <= tol * v.abs() {
            break;
        }
        prev = v;
    }
    Ok(basis)
}

fn monomials(indices: &[MultiIndex], scale: &[f64], p: &Point<f64>) -> Vec<C> {
    indices
        .iter()
        .zip(scale)
        .map(|(a, s)| {
            let mut m = C::new(*s, 0.0);
            for (z, e) in p.coords().iter().zip(&a.0) {
                if *e > 0 {
                    m *= z.powu(*e);
                }
            }
            m
        })
        .collect()
}

impl OracleBasis {
    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    pub fn size(&self) -> usize {
        self.indices.len()
    }

    pub fn gram(&self) -> &DMatrix<C> {
        &self.gram
    }

    pub fn transform(&self) -> &DMatrix<C> {
        &self.transform
    }

    /// Squared ratio of the largest to smallest Cholesky pivot.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn weight(&self) -> &WeightSpec<f64> {
        &self.weight
    }

    /// Ψⱼ(z)·e^{−kφ̂(z)} for every j.
    pub fn coefficients(&self, z: &Point<f64>) -> Result<Vec<C>> {
        let e = monomials(&self.indices, &self.inv_sqrt_norms, z);
        let g = (-(self.k as f64) * self.weight.phi_hat(self.k, z)?).exp();
        let d = self.size();
        Ok((0..d)
            .map(|j| {
                let mut s = C::new(0.0, 0.0);
                for (a, ea) in e.iter().enumerate() {
                    s += self.transform[(j, a)] * ea;
                }
                s * g
            })
            .collect())
    }

    /// Kernel reproducing against ρ dm.
    pub fn kernel(&self, z: &Point<f64>, w: &Point<f64>) -> Result<C> {
        Ok(pair_sum(&self.coefficients(z)?, &self.coefficients(w)?))
    }

    /// Kernel reproducing against dm: K(z, w)·ρ(w).
    pub fn dm_kernel(&self, z: &Point<f64>, w: &Point<f64>) -> Result<C> {
        Ok(self.kernel(z, w)? * self.metric.checked_density(w)?)
    }

    /// (Πf)(z) = ∫K(z, w)f(w)ρ(w)dm(w) at each node, with the integral taken over `grid`.
    pub fn project<F>(&self, f: F, grid: &QuadratureGrid<f64>, z_nodes: &[Point<f64>]) -> Result<Vec<C>>
    where
        F: Fn(&Point<f64>) -> C + Sync + Send,
    {
        if grid.dim() != self.weight.dim() {
            return Err(invalid("grid dimension differs from the basis"));
        }
        let d = self.size();
        let partial: Vec<Vec<C>> = grid
            .nodes()
            .par_iter()
            .zip(grid.weights().par_iter())
            .map(|(p, wt)| -> Result<Vec<C>> {
                let dens = match grid.measure() {
                    Measure::Lebesgue => 1.0,
                    Measure::Gaussian { k: kg, lambda: lg } => {
                        (2.0 * kg * p.coords().iter().zip(lg).map(|(c, l)| l * c.norm_sqr()).sum::<f64>()).exp()
                    }
                };
                let scale = f(p) * (wt * dens * self.metric.checked_density(p)?);
                Ok(self.coefficients(p)?.into_iter().map(|c| c.conj() * scale).collect())
            })
            .collect::<Result<_>>()?;
        // fixed-order reduction keeps the result bit-reproducible
        let mut inner = vec![C::new(0.0, 0.0); d];
        for row in &partial {
            for (acc, v) in inner.iter_mut().zip(row) {
                *acc += v;
            }
        }
        z_nodes
            .par_iter()
            .map(|z| Ok(self.coefficients(z)?.iter().zip(&inner).fold(C::new(0.0, 0.0), |s, (a, b)| s + a * b)))
            .collect()
    }

    /// Samples the dm-kernel on a product of node lists.
    pub fn sample_dm(&self, z_nodes: Vec<Point<f64>>, w_nodes: Vec<Point<f64>>) -> Result<KernelGrid<f64>> {
        let cz: Vec<Vec<C>> = z_nodes.par_iter().map(|p| self.coefficients(p)).collect::<Result<_>>()?;
        let cw: Vec<(Vec<C>, f64)> = w_nodes
            .par_iter()
            .map(|p| Ok((self.coefficients(p)?, self.metric.checked_density(p)?)))
            .collect::<Result<_>>()?;
        let nw = w_nodes.len();
        let values = (0..z_nodes.len() * nw)
            .into_par_iter()
            .map(|idx| pair_sum(&cz[idx / nw], &cw[idx % nw].0) * cw[idx % nw].1)
            .collect();
        Ok(KernelGrid { k: self.k, z_nodes, w_nodes, values })
    }
}

fn pair_sum(a: &[C], b: &[C]) -> C {
    a.iter().zip(b).fold(C::new(0.0, 0.0), |s, (x, y)| s + *x * y.conj())
}

pub fn oracle_kernel(basis: &OracleBasis, z: &Point<f64>, y: &Point<f64>) -> Result<C> {
    basis.kernel(z, y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    Sup,
    L2,
}

impl Norm {
    pub fn name(self) -> &'static str {
        match self {
            Norm::Sup => "sup",
            Norm::L2 => "L2",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub k: u32,
    pub norm: Norm,
    /// Absolute error in the chosen norm.
    pub error: f64,
    /// Same norm of the reference kernel.
    pub reference: f64,
}

/// One row of the comparison CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRecord {
    pub report: ErrorReport,
    pub region: String,
    pub a_used: u32,
    pub gram_condition: f64,
}

/// Rows: k, region, norm, error, A_used, gram_condition.
pub fn write_error_csv<W: std::io::Write>(records: &[ErrorRecord], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["k", "region", "norm", "error", "A_used", "gram_condition"])?;
    for r in records {
        wr.write_record([
            r.report.k.to_string(),
            r.region.clone(),
            r.report.norm.name().to_string(),
            format!("{:.16e}", r.report.error),
            r.a_used.to_string(),
            format!("{:.16e}", r.gram_condition),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Difference of two kernels on shared nodes; L2 is the root-mean-square over node pairs.
pub fn compare(oracle: &KernelGrid<f64>, approx: &KernelGrid<f64>, norm: Norm) -> Result<ErrorReport> {
    if !oracle.same_nodes(approx) {
        return Err(Error::MismatchedNodes);
    }
    let diffs = oracle.values.iter().zip(&approx.values).map(|(a, b)| (*a - *b).norm());
    let refs = oracle.values.iter().map(|a| a.norm());
    let (error, reference) = match norm {
        Norm::Sup => (diffs.fold(0.0, f64::max), refs.fold(0.0, f64::max)),
        Norm::L2 => {
            let m = oracle.values.len().max(1) as f64;
            ((diffs.map(|d| d * d).sum::<f64>() / m).sqrt(), (refs.map(|d| d * d).sum::<f64>() / m).sqrt())
        }
    };
    Ok(ErrorReport { k: oracle.k, norm, error, reference })
}

/// sup |K(z, w)|·k^N over node pairs with χ_k(w) = 1 and χ̃_k(z) = 0,
/// where χ_k = χ(8k^{1/2−ε}·) and χ̃ ≡ 1 on supp χ.
pub fn offdiag_decay(kernel: &KernelGrid<f64>, n_power: u32, epsilon: f64) -> Result<f64> {
    let k = kernel.k;
    let chi = crate::base::make_cutoff(CutoffProfile::standard(), k, epsilon, 8.0)?;
    let wide = crate::base::make_cutoff(CutoffProfile::standard_wide(), k, epsilon, 8.0)?;
    let zs: Vec<usize> = (0..kernel.z_nodes.len()).filter(|&i| wide.eval(&kernel.z_nodes[i]) == 0.0).collect();
    let ws: Vec<usize> = (0..kernel.w_nodes.len()).filter(|&j| chi.eval(&kernel.w_nodes[j]) == 1.0).collect();
    if zs.is_empty() || ws.is_empty() {
        return Err(Error::EmptyRegion("no node pair with χ_k(w) = 1 and χ̃_k(z) = 0".into()));
    }
    let mut sup = 0.0f64;
    for &i in &zs {
        for &j in &ws {
            sup = sup.max(kernel.get(i, j).norm());
        }
    }
    Ok(sup * (k as f64).powi(n_power as i32))
}

/// Node lists for [`offdiag_decay`] in ℂ: w on the plateau of χ_k, z on rings beyond supp χ̃_k.
pub fn offdiag_nodes(k: u32, epsilon: f64, lambda: f64, rings: usize, per_ring: usize) -> Result<(Vec<Point<f64>>, Vec<Point<f64>>)> {
    let chi = crate::base::make_cutoff(CutoffProfile::standard(), k, epsilon, 8.0)?;
    let wide = crate::base::make_cutoff(CutoffProfile::standard_wide(), k, epsilon, 8.0)?;
    let r_w = chi.plateau_radius();
    let r_z = wide.support_radius() * (1.0 + 1e-12);
    let width = 1.0 / ((k as f64) * lambda).sqrt();
    let ring = |r: f64| -> Vec<Point<f64>> {
        (0..per_ring).map(|a| {
            let t = std::f64::consts::TAU * a as f64 / per_ring as f64;
            Point::from_re_im(r * t.cos(), r * t.sin())
        }).collect()
    };
    let mut w_nodes = vec![Point::origin(1)];
    for i in 1..=rings {
        w_nodes.extend(ring(r_w * i as f64 / rings as f64));
    }
    let mut z_nodes = Vec::new();
    for i in 0..rings {
        z_nodes.extend(ring(r_z + 4.0 * width * i as f64 / rings as f64));
    }
    Ok((z_nodes, w_nodes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::Poly;
    use crate::modelkernel::ModelKernel;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn cubic_weight(c: f64) -> WeightSpec<f64> {
        WeightSpec::new(vec![0.5], Poly::re_holomorphic(vec![3], C::new(c, 0.0)), 0.1).unwrap()
    }

    #[test]
    fn model_gram_is_diagonal_with_model_norms() {
        let w = WeightSpec::model(vec![0.5], 0.1).unwrap();
        let met = MetricSpec::flat(1);
        let grid = default_grid(&w, &met, 10, 12).unwrap();
        let b = build_basis(&w, &met, 10, 12, &grid).unwrap();
        for i in 0..b.size() {
            for j in 0..b.size() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((b.gram()[(i, j)] - C::new(expect, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn degree_zero_basis() {
        let w = WeightSpec::model(vec![0.5], 0.1).unwrap();
        let met = MetricSpec::flat(1);
        let grid = default_grid(&w, &met, 4, 0).unwrap();
        let b = build_basis(&w, &met, 4, 0, &grid).unwrap();
        assert_eq!(b.size(), 1);
        // ‖1‖² = π/(2kλ)
        assert_relative_eq!(1.0 / b.inv_sqrt_norms[0].powi(2), PI / 4.0, max_relative = 1e-14);
    }

    #[test]
    fn model_oracle_at_origin() {
        let w = WeightSpec::model(vec![0.5], 0.1).unwrap();
        let met = MetricSpec::flat(1);
        let grid = default_grid(&w, &met, 10, 14).unwrap();
        let b = build_basis(&w, &met, 10, 14, &grid).unwrap();
        let o = Point::origin(1);
        assert_relative_eq!(b.kernel(&o, &o).unwrap().re, 10.0 / PI, max_relative = 1e-12);
        let z = Point::from_re_im(0.3, -0.1);
        let v = b.kernel(&z, &z).unwrap();
        assert!(v.re > 0.0 && v.im == 0.0);
    }

    #[test]
    fn model_oracle_tail_shrinks_with_degree() {
        let w = WeightSpec::model(vec![0.5], 0.1).unwrap();
        let met = MetricSpec::flat(1);
        let k = 10;
        let m = ModelKernel::new(vec![0.5], k).unwrap();
        let r = 3.0 / (k as f64).sqrt();
        let pts: Vec<Point<f64>> = (0..8).map(|i| Point::from_re_im(r * (i as f64 * 0.8).cos(), r * (i as f64 * 0.8).sin())).collect();
        let err = |a: u32| {
            let b = build_basis(&w, &met, k, a, &default_grid(&w, &met, k, a).unwrap()).unwrap();
            let mut e = 0.0f64;
            for z in &pts {
                for y in &pts {
                    e = e.max((b.kernel(z, y).unwrap() - m.eval(z, y)).norm() / m.diagonal());
                }
            }
            e
        };
        let (e12, e32) = (err(12), err(32));
        assert!(e32 < e12, "{e32} !< {e12}");
        assert!(e32 < 1e-8, "{e32}");
    }

    #[test]
    fn perturbed_kernel_is_hermitian_and_reproducing() {
        let w = cubic_weight(0.1);
        let met = MetricSpec::flat(1);
        let k = 25;
        let a = 14;
        let grid = default_grid(&w, &met, k, a).unwrap();
        let b = build_basis(&w, &met, k, a, &grid).unwrap();
        let z = Point::from_re_im(0.05, 0.02);
        let y = Point::from_re_im(-0.03, 0.04);
        assert_eq!(b.kernel(&z, &y).unwrap(), b.kernel(&y, &z).unwrap().conj());
        // reproduce h·e^{−kφ̂} for h = 1 + z² on an independent grid
        let h = |p: &Point<f64>| C::new(1.0, 0.0) + p.coords()[0].powu(2);
        let other = QuadratureGrid::polar_disk(1.2, &[0.2, 0.5], 70, 80).unwrap();
        let kf = k as f64;
        let v = other
            .integrate_fn(|t| b.kernel(&z, t).unwrap() * h(t) * (-kf * w.phi_hat(k, t).unwrap()).exp())
            .unwrap();
        let target = h(&z) * (-kf * w.phi_hat(k, &z).unwrap()).exp();
        assert!((v - target).norm() < 1e-7 * target.norm(), "{v} vs {target}");
    }

    #[test]
    fn rejects_non_psh_weight() {
        let w = WeightSpec::new(vec![0.5], Poly::from_real_terms(1, &[(vec![4, 0], -400.0)]).unwrap(), 0.1).unwrap();
        let met = MetricSpec::flat(1);
        let grid = default_grid(&w, &met, 1, 4).unwrap();
        assert!(matches!(build_basis(&w, &met, 1, 4, &grid), Err(Error::NotPlurisubharmonic { .. })));
    }

    #[test]
    fn compare_identical_is_zero() {
        let m = ModelKernel::new(vec![0.5], 4).unwrap();
        let nodes: Vec<Point<f64>> = (0..5).map(|i| Point::from_re_im(0.1 * i as f64, 0.0)).collect();
        let g = KernelGrid::sample(4, nodes.clone(), nodes, |z, w| Ok(m.eval(z, w))).unwrap();
        let r = compare(&g, &g.clone(), Norm::Sup).unwrap();
        assert_eq!(r.error, 0.0);
        let mut h = g.clone();
        h.k = 5;
        assert!(matches!(compare(&g, &h, Norm::L2), Err(Error::MismatchedNodes)));
    }

    #[test]
    fn offdiag_controls() {
        let eps = 0.1;
        let (zn, wn) = offdiag_nodes(100, eps, 0.5, 4, 8).unwrap();
        let c = KernelGrid::sample(100, zn.clone(), wn.clone(), |_, _| Ok(C::new(2.0, 0.0))).unwrap();
        assert_relative_eq!(offdiag_decay(&c, 1, eps).unwrap(), 200.0, max_relative = 1e-15);
        let none = KernelGrid::sample(100, wn.clone(), wn, |_, _| Ok(C::new(1.0, 0.0))).unwrap();
        assert!(matches!(offdiag_decay(&none, 1, eps), Err(Error::EmptyRegion(_))));
    }
}
