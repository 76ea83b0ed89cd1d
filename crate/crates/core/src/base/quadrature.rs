//! Gauss rules and tensor/polar grids over ℂⁿ.
//!
//! Rules are generated in double precision and converted to the grid scalar.

use num_complex::Complex;
use rayon::prelude::*;

use super::point::Point;
use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

/// Gauss–Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre<T: Scalar>(m: usize) -> (Vec<T>, Vec<T>) {
    let (x, w) = gauss_legendre_f64(m);
    (x.into_iter().map(T::lit).collect(), w.into_iter().map(T::lit).collect())
}

fn gauss_legendre_f64(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    let half = m.div_ceil(2);
    for i in 0..half {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 0..m {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            dp = m as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[m - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[m - 1 - i] = w[i];
    }
    (x, w)
}

/// Gauss–Hermite nodes and weights for ∫ f(x) e^{−x²} dx.
pub fn gauss_hermite<T: Scalar>(m: usize) -> (Vec<T>, Vec<T>) {
    let (x, w) = gauss_hermite_f64(m);
    (x.into_iter().map(T::lit).collect(), w.into_iter().map(T::lit).collect())
}

fn gauss_hermite_f64(m: usize) -> (Vec<f64>, Vec<f64>) {
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    let nf = m as f64;
    let half = m.div_ceil(2);
    let mut z = 0.0f64;
    for i in 0..half {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let (mut p1, mut p2) = (pim4, 0.0);
            for j in 0..m {
                let p3 = p2;
                p2 = p1;
                let jf = (j + 1) as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[m - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[m - 1 - i] = w[i];
    }
    x.reverse();
    w.reverse();
    (x, w)
}

/// Measure that the weights integrate against.
#[derive(Debug, Clone, PartialEq)]
pub enum Measure<T> {
    /// dm on the region covered by the nodes.
    Lebesgue,
    /// e^{−2kΣλᵢ|zⁱ|²} dm.
    Gaussian { k: T, lambda: Vec<T> },
}

/// Nodes and positive weights; sums run in node order.
#[derive(Debug, Clone)]
pub struct QuadratureGrid<T> {
    n: usize,
    nodes: Vec<Point<T>>,
    weights: Vec<T>,
    measure: Measure<T>,
    exactness: u32,
}

fn tensor<T: Scalar>(factors: &[(Vec<T>, Vec<T>)]) -> (Vec<Vec<T>>, Vec<T>) {
    let mut pts: Vec<Vec<T>> = vec![Vec::new()];
    let mut wts = vec![T::one()];
    for (xs, ws) in factors {
        let mut np = Vec::with_capacity(pts.len() * xs.len());
        let mut nw = Vec::with_capacity(pts.len() * xs.len());
        for (p, pw) in pts.iter().zip(&wts) {
            for (x, w) in xs.iter().zip(ws) {
                let mut q = p.clone();
                q.push(*x);
                np.push(q);
                nw.push(*pw * *w);
            }
        }
        pts = np;
        wts = nw;
    }
    (pts, wts)
}

impl<T: Scalar> QuadratureGrid<T> {
    /// Tensor Gauss–Hermite rule for e^{−2kΣλᵢ|zⁱ|²} dm, `order` nodes per real axis.
    pub fn gaussian(lambda: &[T], k: T, order: usize) -> Result<Self> {
        if lambda.is_empty() || lambda.iter().any(|l| !(*l > T::zero())) {
            return Err(invalid("Gaussian grid needs positive eigenvalues"));
        }
        if !(k > T::zero()) || order == 0 {
            return Err(invalid("Gaussian grid needs k > 0 and order ≥ 1"));
        }
        let (x, w) = gauss_hermite::<T>(order);
        let mut factors = Vec::with_capacity(2 * lambda.len());
        for l in lambda {
            let s = (T::lit(2.0) * k * *l).sqrt();
            let xs: Vec<T> = x.iter().map(|v| *v / s).collect();
            let ws: Vec<T> = w.iter().map(|v| *v / s).collect();
            factors.push((xs.clone(), ws.clone()));
            factors.push((xs, ws));
        }
        let (pts, weights) = tensor(&factors);
        Ok(Self {
            n: lambda.len(),
            nodes: pts.iter().map(|p| Point::from_real(p)).collect(),
            weights,
            measure: Measure::Gaussian { k, lambda: lambda.to_vec() },
            exactness: (2 * order - 1) as u32,
        })
    }

    /// Composite Gauss–Legendre rule for dm on the cube centered at `center` with given half-width.
    pub fn lebesgue_box(center: &Point<T>, half_width: T, panels: usize, order: usize) -> Result<Self> {
        if !(half_width > T::zero()) || panels == 0 || order == 0 {
            return Err(invalid("box grid needs positive half-width, panels and order"));
        }
        let (x, w) = gauss_legendre::<T>(order);
        let pw = T::lit(2.0) * half_width / T::from_count(panels);
        let hp = pw * T::lit(0.5);
        let mut base_x = Vec::with_capacity(panels * order);
        let mut base_w = Vec::with_capacity(panels * order);
        for p in 0..panels {
            let mid = -half_width + hp + pw * T::from_count(p);
            for (xi, wi) in x.iter().zip(&w) {
                base_x.push(mid + hp * *xi);
                base_w.push(hp * *wi);
            }
        }
        let c = center.to_real();
        let factors: Vec<(Vec<T>, Vec<T>)> =
            c.iter().map(|ci| (base_x.iter().map(|v| *v + *ci).collect(), base_w.clone())).collect();
        let (pts, weights) = tensor(&factors);
        Ok(Self {
            n: center.dim(),
            nodes: pts.iter().map(|p| Point::from_real(p)).collect(),
            weights,
            measure: Measure::Lebesgue,
            exactness: (2 * order - 1) as u32,
        })
    }

    /// Polar rule for dm on the disk |z| ≤ radius in ℂ: Gauss–Legendre in r on the
    /// panels delimited by `breaks`, trapezoid in angle.
    pub fn polar_disk(radius: T, breaks: &[T], per_panel: usize, angular: usize) -> Result<Self> {
        if !(radius > T::zero()) || per_panel == 0 || angular == 0 {
            return Err(invalid("polar grid needs positive radius, per-panel order and angular count"));
        }
        let mut edges = vec![T::zero()];
        for b in breaks {
            if *b > *edges.last().unwrap() && *b < radius {
                edges.push(*b);
            }
        }
        edges.push(radius);
        let (x, w) = gauss_legendre::<T>(per_panel);
        let two_pi = T::lit(2.0) * T::PI();
        let dth = two_pi / T::from_count(angular);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for win in edges.windows(2) {
            let (a, b) = (win[0], win[1]);
            let hp = (b - a) * T::lit(0.5);
            let mid = (a + b) * T::lit(0.5);
            for (xi, wi) in x.iter().zip(&w) {
                let r = mid + hp * *xi;
                for j in 0..angular {
                    let th = dth * T::from_count(j);
                    nodes.push(Point::from_re_im(r * th.cos(), r * th.sin()));
                    weights.push(hp * *wi * r * dth);
                }
            }
        }
        Ok(Self { n: 1, nodes, weights, measure: Measure::Lebesgue, exactness: (2 * per_panel - 1) as u32 })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Point<T>] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn measure(&self) -> &Measure<T> {
        &self.measure
    }

    /// Per-axis polynomial degree integrated exactly against the measure.
    pub fn exactness_degree(&self) -> u32 {
        self.exactness
    }

    pub fn total_weight(&self) -> T {
        self.weights.iter().fold(T::zero(), |a, w| a + *w)
    }

    /// Samples `f` at every node in parallel; order of the result follows the nodes.
    pub fn sample<F>(&self, f: F) -> Vec<Complex<T>>
    where
        F: Fn(&Point<T>) -> Complex<T> + Send + Sync,
    {
        self.nodes.par_iter().map(f).collect()
    }

    pub fn integrate_fn<F>(&self, f: F) -> Result<Complex<T>>
    where
        F: Fn(&Point<T>) -> Complex<T> + Send + Sync,
    {
        integrate(&self.sample(f), self)
    }
}

/// Σ weightᵢ·f(nodeᵢ), summed in node order.
pub fn integrate<T: Scalar>(values: &[Complex<T>], grid: &QuadratureGrid<T>) -> Result<Complex<T>> {
    if values.len() != grid.len() {
        return Err(Error::MismatchedNodes);
    }
    let mut acc = Complex::new(T::zero(), T::zero());
    for (i, (v, w)) in values.iter().zip(&grid.weights).enumerate() {
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::NonFinite { index: i });
        }
        acc += *v * *w;
    }
    Ok(acc)
}

/// Radius R with e^{−2kλR²} ≤ tail.
pub fn truncation_radius<T: Scalar>(k: T, lambda_min: T, tail: T) -> T {
    (-tail.ln() / (T::lit(2.0) * k * lambda_min)).sqrt()
}
