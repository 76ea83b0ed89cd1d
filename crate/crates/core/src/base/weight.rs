//! Normal-form weights φ̂ = φ₀ + θ_k·p and compactly perturbed volume densities.

use num_complex::Complex;

use super::cutoff::{check_k_eps, make_cutoff, CutoffProfile, ScaledCutoff};
use super::point::Point;
use super::poly::Poly;
use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

/// φ₀(z) = Σλᵢ|zⁱ|² plus a polynomial perturbation p localized by θ_k.
#[derive(Debug, Clone)]
pub struct WeightSpec<T> {
    eigenvalues: Vec<T>,
    perturbation: Poly<T>,
    epsilon: T,
    cutoff: CutoffProfile<T>,
    dz: Vec<Poly<T>>,
    dzbar: Vec<Poly<T>>,
    dz_dzbar: Vec<Vec<Poly<T>>>,
}

impl<T: Scalar> WeightSpec<T> {
    /// θ defaults to the standard profile (1 on B_{1/2}, 0 off B₁).
    pub fn new(eigenvalues: Vec<T>, perturbation: Poly<T>, epsilon: T) -> Result<Self> {
        Self::with_cutoff(eigenvalues, perturbation, epsilon, CutoffProfile::standard())
    }

    pub fn with_cutoff(
        eigenvalues: Vec<T>,
        perturbation: Poly<T>,
        epsilon: T,
        cutoff: CutoffProfile<T>,
    ) -> Result<Self> {
        let n = eigenvalues.len();
        if n == 0 {
            return Err(invalid("weight needs at least one eigenvalue"));
        }
        if eigenvalues.iter().any(|l| !(*l > T::zero() && l.is_finite())) {
            return Err(invalid("weight eigenvalues must be positive and finite"));
        }
        if perturbation.dim() != n {
            return Err(invalid(format!("perturbation has dimension {}, expected {n}", perturbation.dim())));
        }
        if let Some(d) = perturbation.min_degree() {
            if d < 3 {
                return Err(invalid(format!("perturbation has a term of degree {d}; all terms need degree ≥ 3")));
            }
        }
        let scale = T::one().max(perturbation.max_abs_coeff());
        if perturbation.reality_defect() > T::lit(1e-12) * scale {
            return Err(invalid("perturbation is not real-valued"));
        }
        if !(epsilon > T::zero() && epsilon < T::one() / T::lit(6.0)) {
            return Err(invalid(format!("epsilon must lie in (0, 1/6), got {epsilon}")));
        }
        if cutoff.outer > T::one() {
            return Err(invalid("θ must vanish outside the unit ball"));
        }
        let dz: Vec<Poly<T>> = (0..n).map(|i| perturbation.dz(i)).collect();
        let dzbar: Vec<Poly<T>> = (0..n).map(|i| perturbation.dzbar(i)).collect();
        let dz_dzbar = (0..n).map(|i| (0..n).map(|j| dz[i].dzbar(j)).collect()).collect();
        Ok(Self { eigenvalues, perturbation, epsilon, cutoff, dz, dzbar, dz_dzbar })
    }

    /// The unperturbed model φ₀.
    pub fn model(eigenvalues: Vec<T>, epsilon: T) -> Result<Self> {
        let n = eigenvalues.len();
        Self::new(eigenvalues, Poly::zero(n), epsilon)
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    pub fn perturbation(&self) -> &Poly<T> {
        &self.perturbation
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn is_model(&self) -> bool {
        self.perturbation.is_zero()
    }

    /// θ_k(z) = θ(k^{1/2−ε}|z|).
    pub fn theta(&self, k: u32) -> Result<ScaledCutoff<T>> {
        make_cutoff(self.cutoff, k, self.epsilon, T::one())
    }

    pub fn phi0(&self, z: &Point<T>) -> T {
        z.coords().iter().zip(&self.eigenvalues).fold(T::zero(), |acc, (c, l)| acc + *l * c.norm_sqr())
    }

    /// φ₁ = θ_k·p.
    pub fn phi1(&self, k: u32, z: &Point<T>) -> Result<T> {
        if self.is_model() {
            check_k_eps(k, self.epsilon)?;
            return Ok(T::zero());
        }
        let theta = self.theta(k)?.eval(z);
        if theta == T::zero() {
            return Ok(T::zero());
        }
        Ok(theta * self.perturbation.eval_real(z))
    }

    pub fn phi_hat(&self, k: u32, z: &Point<T>) -> Result<T> {
        Ok(self.phi0(z) + self.phi1(k, z)?)
    }

    /// ∂φ̂/∂z̄ʲ for each j.
    pub fn dphi_dzbar(&self, k: u32, z: &Point<T>) -> Result<Vec<Complex<T>>> {
        let n = self.dim();
        let mut out: Vec<Complex<T>> = (0..n).map(|j| z.coords()[j] * self.eigenvalues[j]).collect();
        if self.is_model() {
            return Ok(out);
        }
        let theta = self.theta(k)?;
        let r = z.norm();
        let (t, t1, _) = theta.radial(r);
        if t == T::zero() && t1 == T::zero() {
            return Ok(out);
        }
        let p = self.perturbation.eval_real(z);
        let half = T::lit(0.5);
        for (j, o) in out.iter_mut().enumerate() {
            *o += self.dzbar[j].eval(z) * t;
            if t1 != T::zero() {
                // ∂_{z̄ʲ} r = zʲ/(2r)
                *o += z.coords()[j] * (p * t1 * half / r);
            }
        }
        Ok(out)
    }

    /// Mixed complex Hessian H_{ij} = ∂²φ̂/∂zⁱ∂z̄ʲ.
    pub fn complex_hessian(&self, k: u32, z: &Point<T>) -> Result<Vec<Vec<Complex<T>>>> {
        let n = self.dim();
        let zero = Complex::new(T::zero(), T::zero());
        let mut h = vec![vec![zero; n]; n];
        for (i, row) in h.iter_mut().enumerate() {
            row[i] = Complex::new(self.eigenvalues[i], T::zero());
        }
        if self.is_model() {
            return Ok(h);
        }
        let theta = self.theta(k)?;
        let r = z.norm();
        let (t, t1, t2) = theta.radial(r);
        if t == T::zero() && t1 == T::zero() && t2 == T::zero() {
            return Ok(h);
        }
        let zs = z.coords();
        let quarter = T::lit(0.25);
        let half = T::lit(0.5);
        let p = self.perturbation.eval_real(z);
        let pz: Vec<Complex<T>> = self.dz.iter().map(|q| q.eval(z)).collect();
        let pzb: Vec<Complex<T>> = self.dzbar.iter().map(|q| q.eval(z)).collect();
        for i in 0..n {
            for j in 0..n {
                let mut v = self.dz_dzbar[i][j].eval(z) * t;
                if r > T::zero() && (t1 != T::zero() || t2 != T::zero()) {
                    let th_i = zs[i].conj() * (t1 * half / r);
                    let th_jb = zs[j] * (t1 * half / r);
                    let zz = zs[i].conj() * zs[j];
                    let mut th_ijb = zz * (t2 * quarter / (r * r)) - zz * (t1 * quarter / (r * r * r));
                    if i == j {
                        th_ijb += Complex::new(t1 * half / r, T::zero());
                    }
                    v += th_i * pzb[j] + th_jb * pz[i] + th_ijb * p;
                }
                h[i][j] += v;
            }
        }
        Ok(h)
    }
}

/// φ̂(z) for the given weight and semiclassical parameter.
pub fn eval_weight<T: Scalar>(w: &WeightSpec<T>, k: u32, z: &Point<T>) -> Result<T> {
    w.phi_hat(k, z)
}

/// Volume density ρ(z) = 1 + ψ(|z|/R)·q(z) with ψ = 1 on [0, 1/2], 0 on [1, ∞).
#[derive(Debug, Clone)]
pub struct MetricSpec<T> {
    n: usize,
    perturbation: Poly<T>,
    support_radius: T,
    rho_min: T,
}

impl<T: Scalar> MetricSpec<T> {
    pub fn flat(n: usize) -> Self {
        Self { n, perturbation: Poly::zero(n), support_radius: T::one(), rho_min: T::one() }
    }

    /// Checks ρ ≥ ρ_min on a polar/tensor sample of the support ball.
    pub fn new(perturbation: Poly<T>, support_radius: T, rho_min: T) -> Result<Self> {
        let n = perturbation.dim();
        if !(support_radius > T::zero() && support_radius.is_finite()) {
            return Err(invalid("density support radius must be positive"));
        }
        if !(rho_min > T::zero()) {
            return Err(invalid("rho_min must be positive"));
        }
        let scale = T::one().max(perturbation.max_abs_coeff());
        if perturbation.reality_defect() > T::lit(1e-12) * scale {
            return Err(invalid("density perturbation is not real-valued"));
        }
        let spec = Self { n, perturbation, support_radius, rho_min };
        spec.check_samples()?;
        Ok(spec)
    }

    fn check_samples(&self) -> Result<()> {
        if self.perturbation.is_zero() {
            return Ok(());
        }
        let steps = match self.n {
            1 => 48,
            2 => 10,
            _ => 4,
        };
        let dims = 2 * self.n;
        let total = (2 * steps + 1usize).pow(dims as u32);
        let mut xs = vec![T::zero(); dims];
        for idx in 0..total {
            let mut rem = idx;
            for x in xs.iter_mut() {
                let i = rem % (2 * steps + 1);
                rem /= 2 * steps + 1;
                *x = self.support_radius * T::from_count(i) / T::from_count(steps)
                    - self.support_radius;
            }
            let p = Point::from_real(&xs);
            if p.norm() > self.support_radius {
                continue;
            }
            let rho = self.density(&p);
            if !(rho >= self.rho_min) {
                return Err(Error::DensityBelowMinimum { value: rho.to_f64_lossy(), rho_min: self.rho_min.to_f64_lossy() });
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_flat(&self) -> bool {
        self.perturbation.is_zero()
    }

    pub fn support_radius(&self) -> T {
        self.support_radius
    }

    pub fn rho_min(&self) -> T {
        self.rho_min
    }

    pub fn density(&self, z: &Point<T>) -> T {
        if self.perturbation.is_zero() {
            return T::one();
        }
        let psi = CutoffProfile::<T>::standard().value(z.norm() / self.support_radius);
        if psi == T::zero() {
            return T::one();
        }
        T::one() + psi * self.perturbation.eval_real(z)
    }

    /// ρ(z), failing when it drops below ρ_min.
    pub fn checked_density(&self, z: &Point<T>) -> Result<T> {
        let rho = self.density(z);
        if rho >= self.rho_min {
            Ok(rho)
        } else {
            Err(Error::DensityBelowMinimum { value: rho.to_f64_lossy(), rho_min: self.rho_min.to_f64_lossy() })
        }
    }
}
