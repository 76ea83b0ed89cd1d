//! Reduction of a weight germ to φ = Σλᵢ|ξⁱ|² + O(|ξ|³) with unit metric at the origin.
//!
//! The coordinate change is z = Tξ with T = conj(L^{−*}V), where the metric is M = LL*
//! and L⁻¹HL^{−*} = VΛV*. Then TᵀMT̄ = I and TᵀHT̄ = Λ.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex;

use crate::base::Poly;
use crate::error::{invalid, Error, Result};

type C = Complex<f64>;

const ZERO: C = C::new(0.0, 0.0);

/// φ(z) = c + 2Re(Σℓᵢzⁱ) + Re(ΣQᵢⱼzⁱzʲ) + ΣHᵢⱼzⁱz̄ʲ + higher.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorWeight {
    pub constant: f64,
    pub lin: Vec<C>,
    pub quad_hol: Vec<Vec<C>>,
    pub quad_mixed: Vec<Vec<C>>,
    pub higher: Poly<f64>,
}

fn unit(n: usize, i: usize) -> Vec<u32> {
    let mut e = vec![0; n];
    e[i] = 1;
    e
}

fn pair(n: usize, i: usize, j: usize) -> Vec<u32> {
    let mut e = vec![0; n];
    e[i] += 1;
    e[j] += 1;
    e
}

impl TaylorWeight {
    pub fn dim(&self) -> usize {
        self.lin.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if n == 0 {
            return Err(invalid("Taylor weight needs n ≥ 1"));
        }
        let square = |m: &Vec<Vec<C>>| m.len() == n && m.iter().all(|r| r.len() == n);
        if !square(&self.quad_hol) || !square(&self.quad_mixed) || self.higher.dim() != n {
            return Err(invalid("Taylor weight blocks have inconsistent dimensions"));
        }
        let scale = 1.0 + self.quad_mixed.iter().flatten().chain(self.quad_hol.iter().flatten()).map(|c| c.norm()).fold(0.0, f64::max);
        for i in 0..n {
            for j in 0..n {
                if (self.quad_mixed[i][j] - self.quad_mixed[j][i].conj()).norm() > 1e-12 * scale {
                    return Err(invalid("quad_mixed must be Hermitian"));
                }
                if (self.quad_hol[i][j] - self.quad_hol[j][i]).norm() > 1e-12 * scale {
                    return Err(invalid("quad_hol must be symmetric"));
                }
            }
        }
        if let Some(d) = self.higher.min_degree() {
            if d < 3 {
                return Err(invalid("higher-order part has terms of degree < 3"));
            }
        }
        if self.higher.reality_defect() > 1e-12 * (1.0 + self.higher.max_abs_coeff()) {
            return Err(invalid("higher-order part is not real-valued"));
        }
        Ok(())
    }

    /// The represented real polynomial in (z, z̄).
    pub fn to_poly(&self) -> Poly<f64> {
        let n = self.dim();
        let z0 = vec![0; n];
        let mut p = Poly::constant(n, C::new(self.constant, 0.0));
        for i in 0..n {
            p.add_term(unit(n, i), z0.clone(), self.lin[i]);
            p.add_term(z0.clone(), unit(n, i), self.lin[i].conj());
            for j in 0..n {
                p.add_term(pair(n, i, j), z0.clone(), self.quad_hol[i][j] * 0.5);
                p.add_term(z0.clone(), pair(n, i, j), self.quad_hol[i][j].conj() * 0.5);
                p.add_term(unit(n, i), unit(n, j), self.quad_mixed[i][j]);
            }
        }
        (p + self.higher.clone()).pruned(0.0)
    }

    /// Splits a real polynomial into Taylor blocks.
    pub fn from_poly(p: &Poly<f64>) -> Self {
        let n = p.dim();
        let z0 = vec![0; n];
        let lin = (0..n).map(|i| p.coefficient(&unit(n, i), &z0)).collect();
        let quad_hol = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let c = p.coefficient(&pair(n, i, j), &z0);
                        if i == j {
                            c * 2.0
                        } else {
                            c
                        }
                    })
                    .collect()
            })
            .collect();
        let quad_mixed = (0..n).map(|i| (0..n).map(|j| p.coefficient(&unit(n, i), &unit(n, j))).collect()).collect();
        Self { constant: p.coefficient(&z0, &z0).re, lin, quad_hol, quad_mixed, higher: p.degree_range(3, u32::MAX) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalForm {
    /// Unitary factor V of the diagonalization.
    pub unitary: Vec<Vec<C>>,
    /// Full change of coordinates z = Tξ.
    pub transform: Vec<Vec<C>>,
    /// Holomorphic gauge G(ξ) = c + 2Σℓ'ᵢξⁱ + ΣQ'ᵢⱼξⁱξʲ, subtracted as Re G.
    pub gauge: Poly<f64>,
    /// Descending eigenvalues λᵢ of the mixed Hessian in the normalized frame.
    pub eigenvalues: Vec<f64>,
    /// Terms of total degree ≥ 3.
    pub residual: Poly<f64>,
    /// Largest degree-≤2 coefficient left over after the reduction.
    pub low_degree_defect: f64,
}

fn to_mat(m: &[Vec<C>]) -> DMatrix<C> {
    let n = m.len();
    DMatrix::from_fn(n, n, |i, j| m[i][j])
}

fn from_mat(m: &DMatrix<C>) -> Vec<Vec<C>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

/// Hermitian eigen-decomposition with descending eigenvalues and the first
/// non-negligible entry of each eigenvector real positive.
pub fn hermitian_eigen(m: &DMatrix<C>) -> (Vec<f64>, DMatrix<C>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut v = DMatrix::from_element(n, n, ZERO);
    let mut vals = Vec::with_capacity(n);
    for (col, &src) in order.iter().enumerate() {
        vals.push(eig.eigenvalues[src]);
        let mut c = eig.eigenvectors.column(src).clone_owned();
        let big = c.iter().map(|x| x.norm()).fold(0.0, f64::max);
        if let Some(first) = c.iter().find(|x| x.norm() > 1e-10 * big).copied() {
            let phase = first.conj() / first.norm();
            c *= phase;
        }
        v.set_column(col, &c);
    }
    (vals, v)
}

pub fn normalize_weight(tw: &TaylorWeight, metric_at_origin: &[Vec<C>]) -> Result<NormalForm> {
    tw.validate()?;
    let n = tw.dim();
    if metric_at_origin.len() != n || metric_at_origin.iter().any(|r| r.len() != n) {
        return Err(invalid("metric has the wrong dimension"));
    }
    let m = to_mat(metric_at_origin);
    if (&m - m.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max) > 1e-12 * (1.0 + m.norm()) {
        return Err(invalid("metric must be Hermitian"));
    }
    let (mvals, _) = hermitian_eigen(&m);
    let (mmax, mmin) = (mvals[0], mvals[n - 1]);
    if !(mmin > 0.0) {
        return Err(invalid("metric must be positive definite"));
    }
    if mmax / mmin > 1e10 {
        return Err(Error::Conditioning(format!("metric condition number {:.3e}", mmax / mmin)));
    }
    let chol = nalgebra::Cholesky::new(m).ok_or_else(|| Error::Conditioning("metric Cholesky failed".into()))?;
    let l = chol.l();
    let l_inv = l.clone().try_inverse().ok_or_else(|| Error::Singular("metric factor".into()))?;
    let h = to_mat(&tw.quad_mixed);
    let reduced = &l_inv * &h * l_inv.adjoint();
    let reduced = (&reduced + reduced.adjoint()) * C::new(0.5, 0.0);
    let (lambda, v) = hermitian_eigen(&reduced);
    if !(lambda[n - 1] > 0.0) {
        return Err(Error::NotPlurisubharmonic { min_eigenvalue: lambda[n - 1], radius: 0.0 });
    }
    let s = l_inv.adjoint() * &v;
    let t = s.map(|c| c.conj());
    let t_rows = from_mat(&t);

    let sub = tw.to_poly().substitute_linear(&t_rows);
    let z0 = vec![0; n];
    // G collects the holomorphic part of degree ≤ 2, doubled to match Re G.
    let mut gauge = Poly::constant(n, C::new(sub.coefficient(&z0, &z0).re, 0.0));
    let mut pluri = Poly::constant(n, C::new(sub.coefficient(&z0, &z0).re, 0.0));
    for ((a, b), c) in sub.terms() {
        let da: u32 = a.iter().sum();
        let db: u32 = b.iter().sum();
        if db == 0 && (1..=2).contains(&da) {
            gauge.add_term(a.clone(), b.clone(), *c * 2.0);
            pluri.add_term(a.clone(), b.clone(), *c);
            pluri.add_term(b.clone(), a.clone(), c.conj());
        }
    }
    let mut model = Poly::zero(n);
    for (i, l) in lambda.iter().enumerate() {
        model.add_term(unit(n, i), unit(n, i), C::new(*l, 0.0));
    }
    let rest = sub - pluri - model;
    let low_degree_defect = rest.max_coeff_up_to_degree(2);
    let residual = rest.degree_range(3, u32::MAX).pruned(0.0);
    Ok(NormalForm { unitary: from_mat(&v), transform: t_rows, gauge: gauge.pruned(0.0), eigenvalues: lambda, residual, low_degree_defect })
}

impl NormalForm {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Re G(ξ) as a real polynomial.
    pub fn gauge_real_part(&self) -> Poly<f64> {
        let mut p = Poly::zero(self.dim());
        for ((a, b), c) in self.gauge.terms() {
            p.add_term(a.clone(), b.clone(), *c * 0.5);
            p.add_term(b.clone(), a.clone(), c.conj() * 0.5);
        }
        p
    }

    /// Weight in the normalized frame: Re G + Σλᵢ|ξⁱ|² + residual.
    pub fn normalized_weight(&self) -> Poly<f64> {
        let n = self.dim();
        let mut model = Poly::zero(n);
        for (i, l) in self.eigenvalues.iter().enumerate() {
            model.add_term(unit(n, i), unit(n, i), C::new(*l, 0.0));
        }
        self.gauge_real_part() + model + self.residual.clone()
    }

    /// Inverts the coordinate change and returns the weight in the original frame.
    pub fn reconstruct(&self) -> Result<TaylorWeight> {
        let t = to_mat(&self.transform);
        let t_inv = t.try_inverse().ok_or_else(|| Error::Singular("coordinate transform".into()))?;
        let p = self.normalized_weight().substitute_linear(&from_mat(&t_inv));
        Ok(TaylorWeight::from_poly(&p.pruned(0.0)))
    }
}

/// Largest coefficient difference between two Taylor weights.
pub fn taylor_distance(a: &TaylorWeight, b: &TaylorWeight) -> f64 {
    let d = a.to_poly() - b.to_poly();
    d.max_abs_coeff()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    fn identity(n: usize) -> Vec<Vec<C>> {
        (0..n).map(|i| (0..n).map(|j| if i == j { c(1.0, 0.0) } else { ZERO }).collect()).collect()
    }

    fn bare(n: usize, mixed: Vec<Vec<C>>) -> TaylorWeight {
        TaylorWeight {
            constant: 0.0,
            lin: vec![ZERO; n],
            quad_hol: vec![vec![ZERO; n]; n],
            quad_mixed: mixed,
            higher: Poly::zero(n),
        }
    }

    #[test]
    fn already_normal() {
        let nf = normalize_weight(&bare(1, vec![vec![c(1.0, 0.0)]]), &identity(1)).unwrap();
        assert_relative_eq!(nf.unitary[0][0].re, 1.0, epsilon = 1e-15);
        assert!(nf.gauge.is_zero());
        assert_eq!(nf.eigenvalues, vec![1.0]);
        assert!(nf.residual.is_zero());
    }

    #[test]
    fn gauge_example() {
        let tw = TaylorWeight {
            constant: 0.3,
            lin: vec![c(0.2, 0.0)],
            quad_hol: vec![vec![c(0.5, 0.0)]],
            quad_mixed: vec![vec![c(0.7, 0.0)]],
            higher: Poly::zero(1),
        };
        let nf = normalize_weight(&tw, &identity(1)).unwrap();
        // unit metric leaves T = 1
        assert_relative_eq!(nf.transform[0][0].re, 1.0, epsilon = 1e-15);
        assert_relative_eq!(nf.gauge.coefficient(&[0], &[0]).re, 0.3, epsilon = 1e-15);
        assert_relative_eq!(nf.gauge.coefficient(&[1], &[0]).re, 0.4, epsilon = 1e-15);
        assert_relative_eq!(nf.gauge.coefficient(&[2], &[0]).re, 0.5, epsilon = 1e-15);
        assert_relative_eq!(nf.eigenvalues[0], 0.7, epsilon = 1e-15);
        assert!(nf.residual.is_zero());
        assert!(nf.low_degree_defect < 1e-15);
    }

    #[test]
    fn two_dimensional_eigenvalues() {
        let mixed = vec![vec![c(1.0, 0.0), c(0.5, 0.0)], vec![c(0.5, 0.0), c(1.0, 0.0)]];
        let nf = normalize_weight(&bare(2, mixed), &identity(2)).unwrap();
        assert_relative_eq!(nf.eigenvalues[0], 1.5, epsilon = 1e-14);
        assert_relative_eq!(nf.eigenvalues[1], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn rejects_indefinite_hessian() {
        let mixed = vec![vec![c(1.0, 0.0), c(2.0, 0.0)], vec![c(2.0, 0.0), c(1.0, 0.0)]];
        assert!(matches!(normalize_weight(&bare(2, mixed), &identity(2)), Err(Error::NotPlurisubharmonic { .. })));
    }

    #[test]
    fn rejects_ill_conditioned_metric() {
        let m = vec![vec![c(1.0, 0.0), ZERO], vec![ZERO, c(1e-12, 0.0)]];
        assert!(matches!(normalize_weight(&bare(2, identity(2)), &m), Err(Error::Conditioning(_))));
    }

    #[test]
    fn phase_convention_is_positive() {
        let mixed = vec![vec![c(2.0, 0.0), c(0.3, 0.4)], vec![c(0.3, -0.4), c(1.0, 0.0)]];
        let nf = normalize_weight(&bare(2, mixed), &identity(2)).unwrap();
        for j in 0..2 {
            let first = (0..2).map(|i| nf.unitary[i][j]).find(|x| x.norm() > 1e-10).unwrap();
            assert!(first.im.abs() < 1e-14 && first.re > 0.0);
        }
    }

    fn rotation(t: f64, p: f64) -> Vec<Vec<C>> {
        let e = C::from_polar(1.0, p);
        vec![vec![c(t.cos(), 0.0), -e.conj() * t.sin()], vec![e * t.sin(), c(t.cos(), 0.0)]]
    }

    proptest! {
        #[test]
        fn eigenvalues_invariant_under_unitary_rotation(a in 0.5f64..3.0, b in 0.5f64..3.0, off in -0.4f64..0.4, t in 0.0f64..3.0, p in 0.0f64..6.2) {
            let mixed = vec![vec![c(a, 0.0), c(off, off / 2.0)], vec![c(off, -off / 2.0), c(b, 0.0)]];
            let tw = bare(2, mixed);
            let nf = normalize_weight(&tw, &identity(2)).unwrap();
            let r = rotation(t, p);
            let rotated = TaylorWeight::from_poly(&tw.to_poly().substitute_linear(&r));
            let nf2 = normalize_weight(&rotated, &identity(2)).unwrap();
            for (x, y) in nf.eigenvalues.iter().zip(&nf2.eigenvalues) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
