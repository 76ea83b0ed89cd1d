//! Semiclassical symbol families a(x, y, k) on ℝᵈ × ℝᵈ and their calculus.

use std::sync::Arc;

use num_complex::Complex;
use rayon::prelude::*;

use crate::base::{gauss_legendre, CutoffProfile, QuadratureGrid, SemiclassParams};
use crate::error::{invalid, Error, Result};

type C = Complex<f64>;

pub type Evaluator = Arc<dyn Fn(&[f64], &[f64], u32) -> C + Send + Sync>;

/// Analytic ∂ₓ^α∂ᵧ^β a; `None` defers to finite differences.
pub type DerivEvaluator = Arc<dyn Fn(&[u32], &[u32], &[f64], &[f64], u32) -> Option<C> + Send + Sync>;

#[derive(Clone)]
pub struct SymbolFamily {
    eval: Evaluator,
    derivs: Option<DerivEvaluator>,
    order: f64,
    dim: usize,
}

impl std::fmt::Debug for SymbolFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SymbolFamily")
            .field("order", &self.order)
            .field("dim", &self.dim)
            .field("analytic_derivatives", &self.derivs.is_some())
            .finish()
    }
}

impl SymbolFamily {
    pub fn new<F>(dim: usize, order: f64, f: F) -> Self
    where
        F: Fn(&[f64], &[f64], u32) -> C + Send + Sync + 'static,
    {
        Self { eval: Arc::new(f), derivs: None, order, dim }
    }

    pub fn with_derivatives<D>(mut self, d: D) -> Self
    where
        D: Fn(&[u32], &[u32], &[f64], &[f64], u32) -> Option<C> + Send + Sync + 'static,
    {
        self.derivs = Some(Arc::new(d));
        self
    }

    /// a(x, y, k) = k^m·g(√k x, √k y).
    pub fn scaled<G>(dim: usize, order: f64, g: G) -> Self
    where
        G: Fn(&[f64], &[f64]) -> C + Send + Sync + 'static,
    {
        Self::new(dim, order, move |x, y, k| {
            let s = (k as f64).sqrt();
            let u: Vec<f64> = x.iter().map(|v| v * s).collect();
            let v: Vec<f64> = y.iter().map(|v| v * s).collect();
            g(&u, &v) * (k as f64).powf(order)
        })
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(dim, f64::NEG_INFINITY, |_, _, _| C::new(0.0, 0.0)).with_derivatives(|_, _, _, _, _| Some(C::new(0.0, 0.0)))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn with_order(mut self, order: f64) -> Self {
        self.order = order;
        self
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        self.derivs.is_some()
    }

    pub fn eval(&self, x: &[f64], y: &[f64], k: u32) -> C {
        (self.eval)(x, y, k)
    }

    /// ∂ₓ^α∂ᵧ^β a, analytic when available, otherwise nested 4th-order central differences
    /// with step 1e−3·(1+|x|)/√k.
    pub fn derivative(&self, alpha: &[u32], beta: &[u32], x: &[f64], y: &[f64], k: u32) -> C {
        if let Some(d) = &self.derivs {
            if let Some(v) = d(alpha, beta, x, y, k) {
                return v;
            }
        }
        let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let h = 1e-3 * (1.0 + xn) / (k as f64).sqrt();
        let mut orders: Vec<(usize, u32)> = Vec::new();
        for (i, a) in alpha.iter().enumerate() {
            if *a > 0 {
                orders.push((i, *a));
            }
        }
        for (i, b) in beta.iter().enumerate() {
            if *b > 0 {
                orders.push((self.dim + i, *b));
            }
        }
        let mut xy: Vec<f64> = x.iter().chain(y).copied().collect();
        self.fd(&mut xy, &orders, h, k)
    }

    fn fd(&self, xy: &mut [f64], orders: &[(usize, u32)], h: f64, k: u32) -> C {
        let Some((&(axis, count), rest)) = orders.split_first() else {
            let (x, y) = xy.split_at(self.dim);
            return self.eval(x, y, k);
        };
        let rest_owned: Vec<(usize, u32)> = if count > 1 {
            let mut r = vec![(axis, count - 1)];
            r.extend_from_slice(rest);
            r
        } else {
            rest.to_vec()
        };
        let base = xy[axis];
        let mut acc = C::new(0.0, 0.0);
        for (off, c) in [(-2.0, 1.0 / 12.0), (-1.0, -8.0 / 12.0), (1.0, 8.0 / 12.0), (2.0, -1.0 / 12.0)] {
            xy[axis] = base + off * h;
            acc += self.fd(xy, &rest_owned, h, k) * c;
        }
        xy[axis] = base;
        acc / h
    }

    /// ∂ₓ^α∂ᵧ^β a as a family of order m + (|α|+|β|)/2.
    pub fn derivative_family(&self, alpha: Vec<u32>, beta: Vec<u32>) -> Self {
        let a = self.clone();
        let shift = (alpha.iter().sum::<u32>() + beta.iter().sum::<u32>()) as f64 / 2.0;
        Self::new(self.dim, self.order + shift, move |x, y, k| a.derivative(&alpha, &beta, x, y, k))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        let (a, b) = (self.clone(), other.clone());
        Ok(Self::new(self.dim, self.order.max(other.order), move |x, y, k| a.eval(x, y, k) + b.eval(x, y, k)))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        let (a, b) = (self.clone(), other.clone());
        Ok(Self::new(self.dim, self.order.max(other.order), move |x, y, k| a.eval(x, y, k) - b.eval(x, y, k)))
    }

    pub fn scale(&self, c: C) -> Self {
        let a = self.clone();
        Self::new(self.dim, self.order, move |x, y, k| a.eval(x, y, k) * c)
    }

    /// Pointwise product, order m + m′.
    pub fn product(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        let (a, b) = (self.clone(), other.clone());
        Ok(Self::new(self.dim, self.order + other.order, move |x, y, k| a.eval(x, y, k) * b.eval(x, y, k)))
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(invalid(format!("symbol dimensions differ: {} vs {}", self.dim, other.dim)));
        }
        Ok(())
    }
}

/// a*(x, y, k) = conj a(y, x, k).
pub fn adjoint(a: &SymbolFamily) -> SymbolFamily {
    let inner = a.clone();
    let mut out = SymbolFamily::new(a.dim, a.order, move |x, y, k| inner.eval(y, x, k).conj());
    if let Some(d) = a.derivs.clone() {
        out.derivs = Some(Arc::new(move |al, be, x, y, k| d(be, al, y, x, k).map(|v| v.conj())));
    }
    out
}

/// Tensor Gauss–Legendre box of half-width L·k^{−1/2} + |x−y|∞/2 centered at (x+y)/2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositionRule {
    pub half_width: f64,
    pub panels: usize,
    pub order: usize,
    /// Largest admissible ratio of boundary to interior integrand modulus.
    pub tail_tol: f64,
}

impl Default for CompositionRule {
    fn default() -> Self {
        Self { half_width: 8.0, panels: 12, order: 12, tail_tol: 1e-12 }
    }
}

impl CompositionRule {
    fn axis(&self) -> (Vec<f64>, Vec<f64>) {
        let (x, w) = gauss_legendre::<f64>(self.order);
        let pw = 2.0 * self.half_width / self.panels as f64;
        let mut nodes = Vec::with_capacity(self.panels * self.order);
        let mut weights = Vec::with_capacity(self.panels * self.order);
        for p in 0..self.panels {
            let mid = -self.half_width + pw * (p as f64 + 0.5);
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(mid + 0.5 * pw * xi);
                weights.push(0.5 * pw * wi);
            }
        }
        (nodes, weights)
    }

    /// ∫ f(t) dt over the rescaled box, with the boundary tail guard.
    pub fn integrate<F>(&self, center: &[f64], k: u32, f: F) -> Result<C>
    where
        F: Fn(&[f64]) -> C + Sync,
    {
        self.integrate_widened(center, 0.0, k, f)
    }

    /// As [`integrate`](Self::integrate) with the half-width enlarged by `extra` (absolute units).
    pub fn integrate_widened<F>(&self, center: &[f64], extra: f64, k: u32, f: F) -> Result<C>
    where
        F: Fn(&[f64]) -> C + Sync,
    {
        let d = center.len();
        let s0 = 1.0 / (k as f64).sqrt();
        let s = s0 + extra / self.half_width;
        let (ax, aw) = self.axis();
        let m = ax.len();
        let total = m.pow(d as u32);
        let point = |mut idx: usize, out: &mut Vec<f64>| -> f64 {
            out.clear();
            let mut w = 1.0;
            for c in center {
                let i = idx % m;
                idx /= m;
                out.push(c + s * ax[i]);
                w *= s * aw[i];
            }
            w
        };
        let vals: Vec<(C, f64)> = (0..total)
            .into_par_iter()
            .map_init(Vec::new, |buf, idx| {
                let w = point(idx, buf);
                (f(buf), w)
            })
            .collect();
        let mut acc = C::new(0.0, 0.0);
        let mut interior = 0.0f64;
        for (v, w) in &vals {
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::Conditioning("non-finite composition integrand".into()));
            }
            acc += *v * *w;
            interior = interior.max(v.norm());
        }
        let mut boundary = 0.0f64;
        let face_total = m.pow(d as u32 - 1);
        let mut buf = Vec::with_capacity(d);
        for axis in 0..d {
            for side in [-1.0, 1.0] {
                for idx in 0..face_total {
                    buf.clear();
                    let mut rem = idx;
                    for (j, c) in center.iter().enumerate() {
                        if j == axis {
                            buf.push(c + s * side * self.half_width);
                        } else {
                            buf.push(c + s * ax[rem % m]);
                            rem /= m;
                        }
                    }
                    boundary = boundary.max(f(&buf).norm());
                }
            }
        }
        if interior > 0.0 && boundary > self.tail_tol * interior {
            return Err(Error::GridTooSmall { tail: boundary / interior, tol: self.tail_tol });
        }
        Ok(acc)
    }
}

/// (a#b)(x, y, k) = ∫ a(x, t, k) b(t, y, k) dt, declared order m + m′ − d/2.
///
/// The evaluator panics if the tail guard trips; use [`compose_at`] for a fallible call.
pub fn compose(a: &SymbolFamily, b: &SymbolFamily, rule: CompositionRule) -> Result<SymbolFamily> {
    a.check_dim(b)?;
    let (aa, bb) = (a.clone(), b.clone());
    let d = a.dim;
    Ok(SymbolFamily::new(d, a.order + b.order - d as f64 / 2.0, move |x, y, k| {
        compose_at(&aa, &bb, rule, x, y, k).unwrap_or_else(|e| panic!("composition failed at ({x:?}, {y:?}, k={k}): {e}"))
    }))
}

pub fn compose_at(a: &SymbolFamily, b: &SymbolFamily, rule: CompositionRule, x: &[f64], y: &[f64], k: u32) -> Result<C> {
    let center: Vec<f64> = x.iter().zip(y).map(|(p, q)| 0.5 * (p + q)).collect();
    let spread = x.iter().zip(y).fold(0.0f64, |m, (p, q)| m.max(0.5 * (p - q).abs()));
    rule.integrate_widened(&center, spread, k, |t| a.eval(x, t, k) * b.eval(t, y, k))
}

/// Quadrature nodes in ℝᵈ with weights.
#[derive(Debug, Clone, PartialEq)]
pub struct RealGrid {
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl RealGrid {
    /// Real coordinates (Re z¹, Im z¹, …) of a grid over ℂⁿ.
    pub fn from_complex(g: &QuadratureGrid<f64>) -> Self {
        Self { nodes: g.nodes().iter().map(|p| p.to_real()).collect(), weights: g.weights().to_vec() }
    }

    /// Composite Gauss–Legendre tensor rule on the cube of given center and half-width.
    pub fn cube(center: &[f64], half_width: f64, panels: usize, order: usize) -> Self {
        let rule = CompositionRule { half_width, panels, order, tail_tol: f64::INFINITY };
        let (ax, aw) = rule.axis();
        let m = ax.len();
        let d = center.len();
        let mut nodes = Vec::with_capacity(m.pow(d as u32));
        let mut weights = Vec::with_capacity(m.pow(d as u32));
        for mut idx in 0..m.pow(d as u32) {
            let mut p = Vec::with_capacity(d);
            let mut w = 1.0;
            for c in center {
                p.push(c + ax[idx % m]);
                w *= aw[idx % m];
                idx /= m;
            }
            nodes.push(p);
            weights.push(w);
        }
        Self { nodes, weights }
    }
}

/// Op_k(a)u(xᵢ) = Σⱼ a(xᵢ, yⱼ, k) u(yⱼ) wⱼ with xᵢ, yⱼ the grid nodes.
pub fn quantize(a: &SymbolFamily, u: &[C], grid: &RealGrid, k: u32) -> Result<Vec<C>> {
    if u.len() != grid.nodes.len() {
        return Err(Error::MismatchedNodes);
    }
    if let Some(i) = u.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::NonFinite { index: i });
    }
    Ok(grid
        .nodes
        .par_iter()
        .map(|x| {
            let mut acc = C::new(0.0, 0.0);
            for ((y, uy), w) in grid.nodes.iter().zip(u).zip(&grid.weights) {
                acc += a.eval(x, y, k) * *uy * *w;
            }
            acc
        })
        .collect())
}

/// Probe pairs (x, y); rescaled probes are divided by √k at evaluation time.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeGrid {
    pub pairs: Vec<(Vec<f64>, Vec<f64>)>,
    pub rescaled: bool,
}

impl ProbeGrid {
    /// Pairs from a small fixed point set including the origin, in rescaled units.
    pub fn default_rescaled(d: usize) -> Self {
        let mut pts = vec![vec![0.0; d]];
        for i in 0..d {
            let mut p = vec![0.0; d];
            p[i] = 0.7;
            pts.push(p.clone());
            p[i] = -1.5;
            pts.push(p);
        }
        pts.push(vec![1.1 / (d as f64).sqrt(); d]);
        let pairs = pts.iter().flat_map(|x| pts.iter().map(move |y| (x.clone(), y.clone()))).collect();
        Self { pairs, rescaled: true }
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        for (x, y) in &mut self.pairs {
            x.iter_mut().chain(y.iter_mut()).for_each(|v| *v *= factor);
        }
        self
    }

    /// Absolute probes on a cube of half-width r (points per axis `m`, plus the origin).
    pub fn absolute_cube(d: usize, r: f64, m: usize) -> Self {
        let mut pts = vec![vec![0.0; d]];
        for i in 0..d {
            for j in 0..m {
                let mut p = vec![0.0; d];
                p[i] = -r + 2.0 * r * j as f64 / (m.max(2) - 1) as f64;
                pts.push(p);
            }
        }
        let pairs = pts.iter().flat_map(|x| pts.iter().map(move |y| (x.clone(), y.clone()))).collect();
        Self { pairs, rescaled: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MembershipRow {
    pub alpha: Vec<u32>,
    pub beta: Vec<u32>,
    pub n_power: u32,
    /// Minimal l at which the sup ratio shows no growth, if any l ≤ 12 works.
    pub l: Option<u32>,
    /// Sup ratio per k at the reported l (at l = 12 when none passes).
    pub sup_ratio: Vec<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MembershipReport {
    pub order: f64,
    pub k_values: Vec<u32>,
    pub rows: Vec<MembershipRow>,
    pub pass: bool,
}

pub const MAX_L: u32 = 12;
pub const DEFAULT_N_LIST: [u32; 3] = [2, 4, 8];
/// Allowed growth of the sup ratio over any earlier k.
pub const GROWTH_TOL: f64 = 0.10;

fn no_growth(series: &[f64]) -> bool {
    series.iter().all(|v| v.is_finite())
        && (1..series.len()).all(|j| (0..j).all(|i| series[j] <= (1.0 + GROWTH_TOL) * series[i]))
}

fn vnorm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Samples |∂ₓ^α∂ᵧ^β a|·(1+√k|x−y|)^N / (k^{m+(|α|+|β|)/2}(1+√k|x|+√k|y|)^l) over probes.
pub fn estimate_membership(
    a: &SymbolFamily,
    m: f64,
    deriv_orders: &[(Vec<u32>, Vec<u32>)],
    n_list: &[u32],
    params: &SemiclassParams<f64>,
    probes: &ProbeGrid,
) -> Result<MembershipReport> {
    if probes.pairs.is_empty() {
        return Err(invalid("probe grid is empty"));
    }
    if probes.pairs.iter().any(|(x, y)| x.len() != a.dim || y.len() != a.dim) {
        return Err(invalid("probe dimension differs from symbol dimension"));
    }
    let ks = params.k_values();
    let mut rows = Vec::new();
    for (alpha, beta) in deriv_orders {
        let total = (alpha.iter().sum::<u32>() + beta.iter().sum::<u32>()) as f64;
        // |∂a| and geometry per (k, probe)
        let samples: Vec<Vec<(f64, f64, f64)>> = ks
            .iter()
            .map(|&k| {
                let s = (k as f64).sqrt();
                probes
                    .pairs
                    .par_iter()
                    .map(|(x, y)| {
                        let (xs, ys): (Vec<f64>, Vec<f64>) = if probes.rescaled {
                            (x.iter().map(|v| v / s).collect(), y.iter().map(|v| v / s).collect())
                        } else {
                            (x.clone(), y.clone())
                        };
                        let v = a.derivative(alpha, beta, &xs, &ys, k).norm();
                        let diff: Vec<f64> = xs.iter().zip(&ys).map(|(p, q)| p - q).collect();
                        (v / (k as f64).powf(m + total / 2.0), 1.0 + s * vnorm(&diff), 1.0 + s * vnorm(&xs) + s * vnorm(&ys))
                    })
                    .collect()
            })
            .collect();
        for &n_power in n_list {
            let series = |l: u32| -> Vec<f64> {
                samples
                    .iter()
                    .map(|per_k| {
                        per_k.iter().fold(0.0f64, |acc, (v, off, grow)| acc.max(v * off.powi(n_power as i32) / grow.powi(l as i32)))
                    })
                    .collect()
            };
            let mut found = None;
            for l in 0..=MAX_L {
                let s = series(l);
                if no_growth(&s) {
                    found = Some((l, s));
                    break;
                }
            }
            let row = match found {
                Some((l, s)) => MembershipRow { alpha: alpha.clone(), beta: beta.clone(), n_power, l: Some(l), sup_ratio: s, pass: true },
                None => MembershipRow {
                    alpha: alpha.clone(),
                    beta: beta.clone(),
                    n_power,
                    l: None,
                    sup_ratio: series(MAX_L),
                    pass: false,
                },
            };
            rows.push(row);
        }
    }
    let pass = rows.iter().all(|r| r.pass);
    Ok(MembershipReport { order: m, k_values: ks.to_vec(), rows, pass })
}

/// Derivative orders (α, β) with |α| + |β| ≤ max_total.
pub fn deriv_orders_up_to(d: usize, max_total: u32) -> Vec<(Vec<u32>, Vec<u32>)> {
    let all = crate::base::MultiIndex::enumerate(2 * d, max_total);
    all.into_iter().map(|mi| (mi.0[..d].to_vec(), mi.0[d..].to_vec())).collect()
}

impl MembershipReport {
    /// Rows: alpha, beta, N, l, sup_ratio at each k, verdict.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["alpha".to_string(), "beta".into(), "N".into(), "l".into()];
        header.extend(self.k_values.iter().map(|k| format!("sup_ratio_k{k}")));
        header.push("verdict".into());
        wr.write_record(&header)?;
        for r in &self.rows {
            let join = |v: &[u32]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
            let mut rec = vec![join(&r.alpha), join(&r.beta), r.n_power.to_string(), r.l.map_or("none".into(), |l| l.to_string())];
            rec.extend(r.sup_ratio.iter().map(|v| format!("{v:.16e}")));
            rec.push(if r.pass { "pass".into() } else { "fail".into() });
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Orders m_j, thresholds μ_j and shrink exponents ε_j of an asymptotic sum.
#[derive(Debug, Clone, PartialEq)]
pub struct BorelSchedule {
    pub orders: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub epsilons: Vec<f64>,
}

impl BorelSchedule {
    pub fn new(orders: Vec<f64>, thresholds: Vec<f64>, epsilons: Vec<f64>) -> Result<Self> {
        if orders.len() != thresholds.len() || orders.len() != epsilons.len() || orders.is_empty() {
            return Err(invalid("schedule lists must be nonempty and of equal length"));
        }
        if orders.windows(2).any(|p| p[0] <= p[1]) {
            return Err(invalid("orders must be strictly decreasing"));
        }
        if thresholds.iter().any(|t| !(*t > 0.0)) || thresholds.windows(2).any(|p| p[0] >= p[1]) {
            return Err(invalid("thresholds must be positive and strictly increasing"));
        }
        if epsilons.iter().any(|e| !(*e > 0.0)) || epsilons.windows(2).any(|p| p[0] < p[1]) {
            return Err(invalid("shrink exponents must be positive and non-increasing"));
        }
        Ok(Self { orders, thresholds, epsilons })
    }

    /// ε_j = ε₀/(j+1).
    pub fn with_default_epsilons(orders: Vec<f64>, thresholds: Vec<f64>, eps0: f64) -> Result<Self> {
        let eps = (0..orders.len()).map(|j| eps0 / (j as f64 + 1.0)).collect();
        Self::new(orders, thresholds, eps)
    }
}

/// Σ_j a_j(x, y, k)·χ(k^{1/2−ε_j}|x|)χ(k^{1/2−ε_j}|y|)·1[μ_j ≤ k].
pub fn borel_sum(terms: &[SymbolFamily], schedule: &BorelSchedule, chi: CutoffProfile<f64>) -> Result<SymbolFamily> {
    if terms.is_empty() {
        return Err(invalid("asymptotic sum needs at least one term"));
    }
    if schedule.orders.len() < terms.len() {
        return Err(invalid("schedule shorter than the term list"));
    }
    let d = terms[0].dim;
    if terms.iter().any(|t| t.dim != d) {
        return Err(invalid("terms have different dimensions"));
    }
    let terms: Vec<SymbolFamily> = terms.to_vec();
    let sched = schedule.clone();
    Ok(SymbolFamily::new(d, schedule.orders[0], move |x, y, k| {
        let kf = k as f64;
        let mut acc = C::new(0.0, 0.0);
        for (j, t) in terms.iter().enumerate() {
            if sched.thresholds[j] > kf {
                continue;
            }
            let s = kf.powf(0.5 - sched.epsilons[j]);
            let w = chi.value(s * vnorm(x)) * chi.value(s * vnorm(y));
            if w != 0.0 {
                acc += t.eval(x, y, k) * w;
            }
        }
        acc
    }))
}
