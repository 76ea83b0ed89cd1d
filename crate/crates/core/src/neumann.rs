//! Perturbed projection as a Neumann series around the gauge-twisted model kernel.
//!
//! With P̂ = e^{−kφ₁(z)}P(z, w)e^{kφ₁(w)} and R = P̂*_ρ − P̂ the exact identity
//! Π = P̂ + P̂#R + ⋯ + P̂#R^{#(M−1)} + Π#R^{#M} holds for the dm-kernel Π of the true projection.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex;
use rayon::prelude::*;

use crate::base::{KernelGrid, MetricSpec, Point, QuadratureGrid, SemiclassParams, WeightSpec};
use crate::error::{invalid, Error, Result};
use crate::fit::{fit_loglog, LogLogFit};
use crate::modelkernel::ModelKernel;
use crate::oracle;
use crate::symbols::{compose, CompositionRule, SymbolFamily};

type C = Complex<f64>;

/// P̂(z, y), evaluated in log space.
pub fn hat_kernel(w: &WeightSpec<f64>, k: u32, z: &Point<f64>, y: &Point<f64>) -> Result<C> {
    let model = ModelKernel::new(w.eigenvalues().to_vec(), k)?;
    let kf = k as f64;
    let shift = kf * (w.phi1(k, y)? - w.phi1(k, z)?);
    Ok((model.log_phase(z, y) + shift).exp() * model.diagonal())
}

/// R(z, y) = P(z, y)(ρ(y)/ρ(z)·e^{k(φ₁(z)−φ₁(y))} − e^{k(φ₁(y)−φ₁(z))}).
pub fn remainder_kernel(w: &WeightSpec<f64>, met: &MetricSpec<f64>, k: u32, z: &Point<f64>, y: &Point<f64>) -> Result<C> {
    let model = ModelKernel::new(w.eigenvalues().to_vec(), k)?;
    let at = NodeData::at(w, met, k, z)?;
    let bt = NodeData::at(w, met, k, y)?;
    Ok(remainder_from(&model, z, &at, y, &bt))
}

/// φ₁ and ρ at one point.
#[derive(Debug, Clone, Copy)]
struct NodeData {
    kphi1: f64,
    rho: f64,
}

impl NodeData {
    fn at(w: &WeightSpec<f64>, met: &MetricSpec<f64>, k: u32, p: &Point<f64>) -> Result<Self> {
        Ok(Self { kphi1: k as f64 * w.phi1(k, p)?, rho: met.checked_density(p)? })
    }
}

fn remainder_from(model: &ModelKernel<f64>, z: &Point<f64>, a: &NodeData, y: &Point<f64>, b: &NodeData) -> C {
    let lp = model.log_phase(z, y);
    let d = a.kphi1 - b.kphi1;
    ((lp + d).exp() * (b.rho / a.rho) - (lp - d).exp()) * model.diagonal()
}

fn hat_from(model: &ModelKernel<f64>, z: &Point<f64>, a: &NodeData, y: &Point<f64>, b: &NodeData) -> C {
    (model.log_phase(z, y) + (b.kphi1 - a.kphi1)).exp() * model.diagonal()
}

fn family_eval<F>(w: &WeightSpec<f64>, met: &MetricSpec<f64>, f: F) -> impl Fn(&[f64], &[f64], u32) -> C + Send + Sync + 'static
where
    F: Fn(&ModelKernel<f64>, &Point<f64>, &NodeData, &Point<f64>, &NodeData) -> C + Send + Sync + 'static,
{
    let (w, met) = (w.clone(), met.clone());
    move |x, y, k| {
        let eval = || -> Result<C> {
            let model = ModelKernel::new(w.eigenvalues().to_vec(), k)?;
            let (z, y) = (Point::from_real(x), Point::from_real(y));
            let (a, b) = (NodeData::at(&w, &met, k, &z)?, NodeData::at(&w, &met, k, &y)?);
            Ok(f(&model, &z, &a, &y, &b))
        };
        // evaluators cannot fail; an invalid density shows up as NaN
        eval().unwrap_or(C::new(f64::NAN, f64::NAN))
    }
}

/// P̂ as a symbol on ℝ²ⁿ, order n.
pub fn hat_family(w: &WeightSpec<f64>) -> SymbolFamily {
    let n = w.dim();
    SymbolFamily::new(2 * n, n as f64, family_eval(w, &MetricSpec::flat(n), hat_from))
}

/// R as a symbol on ℝ²ⁿ, order n − 1/2.
pub fn remainder_family(w: &WeightSpec<f64>, met: &MetricSpec<f64>) -> SymbolFamily {
    let n = w.dim();
    SymbolFamily::new(2 * n, n as f64 - 0.5, family_eval(w, met, remainder_from))
}

/// R^{#j} by iterated composition; declared order n − j/2.
pub fn remainder_power(w: &WeightSpec<f64>, met: &MetricSpec<f64>, j: usize, rule: CompositionRule) -> Result<SymbolFamily> {
    if j == 0 {
        return Err(invalid("remainder power needs j ≥ 1"));
    }
    let r = remainder_family(w, met);
    let mut acc = r.clone();
    for _ in 1..j {
        acc = compose(&acc, &r, rule)?;
    }
    Ok(acc)
}

/// Integration grid for the Neumann terms: covers the nodes plus nine Gaussian widths.
pub fn neumann_grid(w: &WeightSpec<f64>, met: &MetricSpec<f64>, k: u32, nodes: &[Point<f64>]) -> Result<QuadratureGrid<f64>> {
    let lam_min = w.eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
    let width = 1.0 / (k as f64 * lam_min).sqrt();
    let reach = nodes.iter().map(|p| p.norm()).fold(0.0, f64::max) + 9.0 * width;
    if w.dim() == 1 {
        let theta = w.theta(k)?;
        let mut breaks = vec![theta.plateau_radius(), theta.support_radius()];
        if !met.is_flat() {
            breaks.push(0.5 * met.support_radius());
            breaks.push(met.support_radius());
        }
        // radial panels no wider than two Gaussian widths
        let mut edge = 2.0 * width;
        while edge < reach {
            breaks.push(edge);
            edge += 2.0 * width;
        }
        breaks.sort_by(f64::total_cmp);
        QuadratureGrid::polar_disk(reach, &breaks, 24, 128)
    } else {
        let panels = (reach / width).ceil() as usize;
        QuadratureGrid::lebesgue_box(&Point::origin(w.dim()), reach, panels, 6)
    }
}

/// The terms P̂, P̂#R, …, P̂#R^{#(M−1)} on `z_nodes × y_nodes`.
///
/// Each composition integrates over `grid`; the j-th term costs j·|grid|² evaluations of R per z node
/// beyond the first.
pub fn neumann_terms(
    w: &WeightSpec<f64>,
    met: &MetricSpec<f64>,
    k: u32,
    m: usize,
    z_nodes: &[Point<f64>],
    y_nodes: &[Point<f64>],
    grid: &QuadratureGrid<f64>,
) -> Result<Vec<KernelGrid<f64>>> {
    if m == 0 {
        return Err(invalid("partial sum needs M ≥ 1"));
    }
    if w.dim() != met.dim() || w.dim() != grid.dim() {
        return Err(invalid("weight, metric and grid dimensions differ"));
    }
    let model = ModelKernel::new(w.eigenvalues().to_vec(), k)?;
    let data = |ps: &[Point<f64>]| -> Result<Vec<NodeData>> { ps.par_iter().map(|p| NodeData::at(w, met, k, p)).collect() };
    let zd = data(z_nodes)?;
    let yd = data(y_nodes)?;
    let td = data(grid.nodes())?;
    let t = grid.nodes();
    let tw = grid.weights();
    let nt = t.len();

    let hat_values = (0..z_nodes.len() * y_nodes.len())
        .map(|idx| {
            let (i, j) = (idx / y_nodes.len(), idx % y_nodes.len());
            hat_from(&model, &z_nodes[i], &zd[i], &y_nodes[j], &yd[j])
        })
        .collect();
    let mut terms = vec![KernelGrid { k, z_nodes: z_nodes.to_vec(), w_nodes: y_nodes.to_vec(), values: hat_values }];
    if m == 1 {
        return Ok(terms);
    }
    // rows[i][s] = (P̂#R^{#j})(zᵢ, tₛ)·w_s, advanced one power per step
    let mut rows: Vec<Vec<C>> = (0..z_nodes.len())
        .into_par_iter()
        .map(|i| (0..nt).map(|s| hat_from(&model, &z_nodes[i], &zd[i], &t[s], &td[s]) * tw[s]).collect())
        .collect();
    for step in 1..m {
        let values: Vec<C> = (0..z_nodes.len() * y_nodes.len())
            .into_par_iter()
            .map(|idx| {
                let (i, j) = (idx / y_nodes.len(), idx % y_nodes.len());
                let row = &rows[i];
                let mut acc = C::new(0.0, 0.0);
                for s in 0..nt {
                    acc += row[s] * remainder_from(&model, &t[s], &td[s], &y_nodes[j], &yd[j]);
                }
                acc
            })
            .collect();
        terms.push(KernelGrid { k, z_nodes: z_nodes.to_vec(), w_nodes: y_nodes.to_vec(), values });
        if step + 1 < m {
            rows = rows
                .par_iter()
                .map(|row| {
                    (0..nt)
                        .map(|q| {
                            let mut acc = C::new(0.0, 0.0);
                            for s in 0..nt {
                                if row[s] != C::new(0.0, 0.0) {
                                    acc += row[s] * remainder_from(&model, &t[s], &td[s], &t[q], &td[q]);
                                }
                            }
                            acc * tw[q]
                        })
                        .collect()
                })
                .collect();
        }
    }
    Ok(terms)
}

/// P̂ + P̂#R + ⋯ + P̂#R^{#(M−1)} on `z_nodes × y_nodes`.
pub fn neumann_partial_sum(
    w: &WeightSpec<f64>,
    met: &MetricSpec<f64>,
    k: u32,
    m: usize,
    z_nodes: &[Point<f64>],
    y_nodes: &[Point<f64>],
    grid: &QuadratureGrid<f64>,
) -> Result<KernelGrid<f64>> {
    let terms = neumann_terms(w, met, k, m, z_nodes, y_nodes, grid)?;
    Ok(cumulative(&terms).pop().expect("at least one term"))
}

fn cumulative(terms: &[KernelGrid<f64>]) -> Vec<KernelGrid<f64>> {
    let mut out: Vec<KernelGrid<f64>> = Vec::with_capacity(terms.len());
    for t in terms {
        let next = match out.last() {
            Some(prev) => prev.combine(1.0, t, 1.0).expect("terms share nodes"),
            None => t.clone(),
        };
        out.push(next);
    }
    out
}

/// a₀(z, w) = (2ⁿΠλ/πⁿ)e^{Σλⱼ(2zʲw̄ʲ − |zʲ|² − |wʲ|²)}, the model kernel at k = 1.
pub fn leading_coefficient(lambda: &[f64]) -> Result<ModelKernel<f64>> {
    ModelKernel::new(lambda.to_vec(), 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionFit {
    pub k_values: Vec<u32>,
    /// coefficients[j][p] = âⱼ at probe p.
    pub coefficients: Vec<Vec<C>>,
    /// Max residual modulus per k, relative to the largest sample at that k.
    pub residuals: Vec<f64>,
    /// Condition number of the column-scaled design matrix.
    pub condition: f64,
}

/// Largest admissible condition number of the scaled design matrix.
pub const MAX_FIT_CONDITION: f64 = 1e12;

/// Least squares K(u/√k, v/√k) ≈ Σ_{j≤J} k^{n−j/2}âⱼ(u, v) per probe; `samples[i][p]` belongs to k_values[i].
pub fn fit_expansion(k_values: &[u32], samples: &[Vec<C>], n: usize, j_max: usize) -> Result<ExpansionFit> {
    if k_values.len() != samples.len() {
        return Err(invalid("one sample row per k required"));
    }
    let mut distinct = k_values.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < j_max + 2 {
        return Err(invalid(format!("fitting {} coefficients needs at least {} distinct k values", j_max + 1, j_max + 2)));
    }
    let probes = samples[0].len();
    if samples.iter().any(|s| s.len() != probes) {
        return Err(Error::MismatchedNodes);
    }
    let rows = k_values.len();
    let cols = j_max + 1;
    let design = DMatrix::from_fn(rows, cols, |i, j| (k_values[i] as f64).powf(n as f64 - j as f64 / 2.0));
    let scales: Vec<f64> = (0..cols).map(|j| design.column(j).norm()).collect();
    let scaled = DMatrix::from_fn(rows, cols, |i, j| design[(i, j)] / scales[j]);
    let svd = scaled.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = smax / smin;
    if !(condition < MAX_FIT_CONDITION) {
        return Err(Error::Conditioning(format!("expansion design matrix condition {condition:.3e}")));
    }
    let sc = scaled.map(|v| C::new(v, 0.0));
    let svd = sc.clone().svd(true, true);
    let b = DMatrix::from_fn(rows, probes, |i, p| samples[i][p]);
    let x = svd.solve(&b, 0.0).map_err(|e| Error::Conditioning(e.to_string()))?;
    let coefficients: Vec<Vec<C>> = (0..cols).map(|j| (0..probes).map(|p| x[(j, p)] / scales[j]).collect()).collect();
    let fitted = &sc * &x;
    let residuals = (0..rows)
        .map(|i| {
            let top = (0..probes).map(|p| b[(i, p)].norm()).fold(0.0, f64::max);
            let res = (0..probes).map(|p| (b[(i, p)] - fitted[(i, p)]).norm()).fold(0.0, f64::max);
            if top > 0.0 { res / top } else { res }
        })
        .collect();
    Ok(ExpansionFit { k_values: k_values.to_vec(), coefficients, residuals, condition })
}

/// Points with |u| ≤ radius: the origin plus rings at radius/2 and radius with `per_ring` points each.
pub fn rescaled_probes(radius: f64, per_ring: usize) -> Vec<Point<f64>> {
    let mut pts = vec![Point::origin(1)];
    for r in [0.5 * radius, radius] {
        for a in 0..per_ring {
            let t = std::f64::consts::TAU * a as f64 / per_ring as f64;
            pts.push(Point::from_re_im(r * t.cos(), r * t.sin()));
        }
    }
    pts
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub k: u32,
    pub m: usize,
    pub sup_error: f64,
    pub reference: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionResult {
    pub k_values: Vec<u32>,
    /// Rescaled probe points u; the physical nodes at k are u/√k.
    pub probes: Vec<Point<f64>>,
    /// Partial sums by M, one grid per k on the probes u/√k.
    pub partial_sums: BTreeMap<usize, Vec<KernelGrid<f64>>>,
    /// Oracle dm-kernel per k on the same nodes.
    pub oracle: Vec<KernelGrid<f64>>,
    pub errors: Vec<ErrorRow>,
    /// Log-log slope of the sup error against k per M.
    pub slopes: BTreeMap<usize, LogLogFit<f64>>,
    /// Oracle samples fitted as Σ k^{n−j/2}âⱼ, when requested.
    pub fit: Option<ExpansionFit>,
    /// Oracle degree A and Gram condition per k.
    pub oracle_degree: Vec<u32>,
    pub gram_condition: Vec<f64>,
}

/// Partial sums for M = 1..=max_m against the oracle over the k list, on probes z = u/√k.
pub fn run_expansion(
    w: &WeightSpec<f64>,
    met: &MetricSpec<f64>,
    params: &SemiclassParams<f64>,
    max_m: usize,
    probes: &[Point<f64>],
    fit_terms: Option<usize>,
) -> Result<ExpansionResult> {
    run_expansion_with(w, met, params, max_m, probes, fit_terms, None)
}

/// As [`run_expansion`] with an optional oracle degree override.
pub fn run_expansion_with(
    w: &WeightSpec<f64>,
    met: &MetricSpec<f64>,
    params: &SemiclassParams<f64>,
    max_m: usize,
    probes: &[Point<f64>],
    fit_terms: Option<usize>,
    max_degree: Option<u32>,
) -> Result<ExpansionResult> {
    if max_m == 0 {
        return Err(invalid("max M must be at least 1"));
    }
    let ks = params.k_values().to_vec();
    let mut partial_sums: BTreeMap<usize, Vec<KernelGrid<f64>>> = BTreeMap::new();
    let mut oracles = Vec::new();
    let mut errors = Vec::new();
    let (mut oracle_degree, mut gram_condition) = (Vec::new(), Vec::new());
    for &k in &ks {
        let nodes: Vec<Point<f64>> = probes.iter().map(|u| u.scaled(1.0 / (k as f64).sqrt())).collect();
        let a = max_degree.unwrap_or_else(|| oracle::default_max_degree(k, w.epsilon()));
        let ogrid = oracle::default_grid(w, met, k, a)?;
        let basis = oracle::build_basis(w, met, k, a, &ogrid)?;
        oracle_degree.push(a);
        gram_condition.push(basis.condition());
        let reference = basis.sample_dm(nodes.clone(), nodes.clone())?;
        let grid = neumann_grid(w, met, k, &nodes)?;
        let terms = neumann_terms(w, met, k, max_m, &nodes, &nodes, &grid)?;
        for (i, sum) in cumulative(&terms).into_iter().enumerate() {
            let rep = oracle::compare(&reference, &sum, oracle::Norm::Sup)?;
            errors.push(ErrorRow { k, m: i + 1, sup_error: rep.error, reference: rep.reference });
            partial_sums.entry(i + 1).or_default().push(sum);
        }
        oracles.push(reference);
    }
    let mut slopes = BTreeMap::new();
    if ks.len() >= 3 {
        for m in 1..=max_m {
            let ys: Vec<f64> = errors.iter().filter(|e| e.m == m).map(|e| e.sup_error).collect();
            let xs: Vec<f64> = ks.iter().map(|k| *k as f64).collect();
            if let Ok(f) = fit_loglog(&xs, &ys) {
                slopes.insert(m, f);
            }
        }
    }
    let fit = match fit_terms {
        Some(j) => {
            let samples: Vec<Vec<C>> = oracles.iter().map(|g| (0..probes.len()).map(|p| g.get(p, p)).collect()).collect();
            Some(fit_expansion(&ks, &samples, w.dim(), j)?)
        }
        None => None,
    };
    Ok(ExpansionResult { k_values: ks, probes: probes.to_vec(), partial_sums, oracle: oracles, errors, slopes, fit, oracle_degree, gram_condition })
}

impl ExpansionResult {
    /// Rows: k, M, sup_error, fitted_slope (the slope of that M over the whole k list, empty when unfitted).
    pub fn write_errors_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["k", "M", "sup_error", "fitted_slope"])?;
        for e in &self.errors {
            let slope = self.slopes.get(&e.m).map(|f| format!("{:.16e}", f.slope)).unwrap_or_default();
            wr.write_record([e.k.to_string(), e.m.to_string(), format!("{:.16e}", e.sup_error), slope])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Rows: u, v, j, re, im with (u, v) the real coordinates of the rescaled diagonal probe and
    /// re + i·im the fitted coefficient âⱼ there. Empty body without a fit.
    pub fn write_coefficients_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["u", "v", "j", "re", "im"])?;
        if let Some(fit) = &self.fit {
            for (p, probe) in self.probes.iter().enumerate() {
                let c = probe.coords()[0];
                for (j, coeffs) in fit.coefficients.iter().enumerate() {
                    wr.write_record([
                        format!("{:.16e}", c.re),
                        format!("{:.16e}", c.im),
                        j.to_string(),
                        format!("{:.16e}", coeffs[p].re),
                        format!("{:.16e}", coeffs[p].im),
                    ])?;
                }
            }
        }
        wr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::Poly;
    use crate::symbols::{compose_at, deriv_orders_up_to, estimate_membership, ProbeGrid};

    fn cubic(c: f64) -> WeightSpec<f64> {
        WeightSpec::new(vec![0.5], Poly::re_holomorphic(vec![3], C::new(c, 0.0)), 0.1).unwrap()
    }

    fn small_nodes(k: u32) -> Vec<Point<f64>> {
        rescaled_probes(0.5, 4).into_iter().map(|u| u.scaled(1.0 / (k as f64).sqrt())).collect()
    }

    #[test]
    fn hat_examples() {
        let w = cubic(0.1);
        let model = ModelKernel::new(vec![0.5], 100).unwrap();
        let z = Point::scalar(C::new(0.05, 0.0));
        let y = Point::origin(1);
        let expect = model.eval(&z, &y) * (-100.0 * 0.1 * 0.05f64.powi(3)).exp();
        assert!((hat_kernel(&w, 100, &z, &y).unwrap() - expect).norm() < 1e-12 * expect.norm());
        let flat = WeightSpec::model(vec![0.5], 0.1).unwrap();
        let p = Point::from_re_im(0.1, -0.2);
        assert_eq!(hat_kernel(&flat, 30, &z, &p).unwrap(), model_at(30, &z, &p));
        for q in [z.clone(), p.clone(), Point::from_re_im(0.3, 0.1)] {
            assert_eq!(hat_kernel(&w, 100, &q, &q).unwrap(), model_at(100, &q, &q));
        }
    }

    fn model_at(k: u32, z: &Point<f64>, y: &Point<f64>) -> C {
        ModelKernel::new(vec![0.5], k).unwrap().eval(z, y)
    }

    #[test]
    fn remainder_examples() {
        let w = cubic(0.1);
        let flat = MetricSpec::flat(1);
        let (z, y) = (Point::scalar(C::new(0.05, 0.0)), Point::scalar(C::new(0.02, 0.0)));
        let d = 100.0 * 0.1 * (0.05f64.powi(3) - 0.02f64.powi(3));
        let expect = model_at(100, &z, &y) * (d.exp() - (-d).exp());
        let got = remainder_kernel(&w, &flat, 100, &z, &y).unwrap();
        assert!((got - expect).norm() < 1e-12 * expect.norm());
        for q in [z, y, Point::from_re_im(0.4, -0.3)] {
            assert_eq!(remainder_kernel(&w, &flat, 100, &q, &q).unwrap(), C::new(0.0, 0.0));
        }
        let m = WeightSpec::model(vec![0.5], 0.1).unwrap();
        let p = Point::from_re_im(0.1, 0.2);
        assert_eq!(remainder_kernel(&m, &flat, 10, &p, &Point::origin(1)).unwrap(), C::new(0.0, 0.0));
    }

    #[test]
    fn remainder_magnitude_is_lower_order() {
        // |R|/kⁿ on rescaled probes decays like k^{−1/2}
        let w = cubic(0.1);
        let flat = MetricSpec::flat(1);
        let ratio = |k: u32| {
            let s = 1.0 / (k as f64).sqrt();
            let (z, y) = (Point::from_re_im(0.5 * s, 0.0), Point::from_re_im(-0.5 * s, 0.2 * s));
            remainder_kernel(&w, &flat, k, &z, &y).unwrap().norm() / k as f64
        };
        let fit = fit_loglog(&[25.0, 100.0, 400.0], &[ratio(25), ratio(100), ratio(400)]).unwrap();
        assert!((fit.slope + 0.5).abs() < 0.05, "{}", fit.slope);
    }

    #[test]
    fn remainder_power_examples() {
        let w = cubic(0.1);
        let flat = MetricSpec::flat(1);
        let rule = CompositionRule::default();
        let r1 = remainder_power(&w, &flat, 1, rule).unwrap();
        let (x, y) = ([0.03, 0.01], [-0.02, 0.04]);
        let zp = Point::from_real(&x);
        let yp = Point::from_real(&y);
        assert_eq!(r1.eval(&x, &y, 50), remainder_kernel(&w, &flat, 50, &zp, &yp).unwrap());
        assert_eq!(r1.order(), 0.5);
        let r2 = remainder_power(&w, &flat, 2, rule).unwrap();
        assert_eq!(r2.order(), 0.0);
        // independent polar-grid quadrature of ∫R(z,t)R(t,y)dm(t)
        let k = 50;
        let th = w.theta(k).unwrap();
        let grid = QuadratureGrid::polar_disk(1.6, &[th.plateau_radius(), th.support_radius(), 0.3, 0.45, 0.6, 0.8, 1.0, 1.3], 40, 200).unwrap();
        let direct = grid
            .integrate_fn(|t| {
                remainder_kernel(&w, &flat, k, &zp, t).unwrap() * remainder_kernel(&w, &flat, k, t, &yp).unwrap()
            })
            .unwrap();
        let fine = CompositionRule { panels: 48, order: 16, ..rule };
        let composed = crate::symbols::compose_at(&r1, &r1, fine, &x, &y, k).unwrap();
        assert!((composed - direct).norm() < 1e-8 * direct.norm().max(1e-3), "{composed} vs {direct}");
        let zero = WeightSpec::model(vec![0.5], 0.1).unwrap();
        let rz = remainder_power(&zero, &flat, 3, CompositionRule { panels: 4, order: 8, ..rule }).unwrap();
        assert_eq!(rz.eval(&x, &y, 10), C::new(0.0, 0.0));
    }

    #[test]
    fn partial_sum_examples() {
        let k = 100;
        let nodes = small_nodes(k);
        let flat = MetricSpec::flat(1);
        let model = WeightSpec::model(vec![0.5], 0.1).unwrap();
        let grid = neumann_grid(&model, &flat, k, &nodes).unwrap();
        let s = neumann_partial_sum(&model, &flat, k, 2, &nodes, &nodes, &grid).unwrap();
        for (i, z) in nodes.iter().enumerate() {
            for (j, y) in nodes.iter().enumerate() {
                assert_eq!(s.get(i, j), model_at(k, z, y));
            }
        }
        let w = cubic(0.1);
        let grid = neumann_grid(&w, &flat, k, &nodes).unwrap();
        let one = neumann_partial_sum(&w, &flat, k, 1, &nodes, &nodes, &grid).unwrap();
        for (i, z) in nodes.iter().enumerate() {
            for (j, y) in nodes.iter().enumerate() {
                assert_eq!(one.get(i, j), hat_kernel(&w, k, z, y).unwrap());
            }
        }
    }

    #[test]
    fn telescoping_matches_symbol_composition() {
        let k = 64;
        let w = cubic(0.1);
        let flat = MetricSpec::flat(1);
        let nodes = small_nodes(k);
        let grid = neumann_grid(&w, &flat, k, &nodes).unwrap();
        let s1 = neumann_partial_sum(&w, &flat, k, 1, &nodes, &nodes, &grid).unwrap();
        let s2 = neumann_partial_sum(&w, &flat, k, 2, &nodes, &nodes, &grid).unwrap();
        let hat = hat_family(&w);
        let r = remainder_family(&w, &flat);
        for (i, z) in nodes.iter().enumerate().step_by(3) {
            for (j, y) in nodes.iter().enumerate().step_by(2) {
                let fine = CompositionRule { panels: 48, order: 16, ..CompositionRule::default() };
                let term = compose_at(&hat, &r, fine, &z.to_real(), &y.to_real(), k).unwrap();
                let diff = s2.get(i, j) - s1.get(i, j);
                assert!((diff - term).norm() < 1e-8 * k as f64, "{diff} vs {term}");
            }
        }
    }

    #[test]
    fn weighted_metric_enters_remainder() {
        let w = WeightSpec::model(vec![0.5], 0.1).unwrap();
        let met = MetricSpec::new(Poly::from_real_terms(1, &[(vec![2, 0], 0.5)]).unwrap(), 1.0, 0.5).unwrap();
        let (z, y) = (Point::from_re_im(0.3, 0.0), Point::from_re_im(0.1, 0.0));
        let r = remainder_kernel(&w, &met, 20, &z, &y).unwrap();
        let expect = model_at(20, &z, &y) * (met.density(&y) / met.density(&z) - 1.0);
        assert!((r - expect).norm() < 1e-13 * expect.norm());
    }

    #[test]
    fn leading_coefficient_examples() {
        let a = leading_coefficient(&[0.5]).unwrap();
        let o = Point::origin(1);
        assert!((a.eval(&o, &o).re - 1.0 / std::f64::consts::PI).abs() < 1e-15);
        let p = Point::from_re_im(0.7, -1.1);
        assert!((a.eval(&p, &p).re - 1.0 / std::f64::consts::PI).abs() < 1e-15);
        let b = leading_coefficient(&[1.0, 2.0]).unwrap();
        let o2 = Point::origin(2);
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((b.eval(&o2, &o2).re - 8.0 / pi2).abs() < 1e-14);
        assert!(leading_coefficient(&[0.0]).is_err());
    }

    #[test]
    fn fit_recovers_synthetic_terms() {
        let ks = [25u32, 50, 100, 200, 400];
        let g0 = [C::new(0.3, 0.1), C::new(-1.0, 0.5)];
        let g1 = [C::new(0.7, 0.0), C::new(0.2, -0.4)];
        let samples: Vec<Vec<C>> = ks
            .iter()
            .map(|&k| {
                let kf = k as f64;
                (0..2).map(|p| g0[p] * kf + g1[p] * kf.sqrt()).collect()
            })
            .collect();
        let fit = fit_expansion(&ks, &samples, 1, 1).unwrap();
        for p in 0..2 {
            assert!((fit.coefficients[0][p] - g0[p]).norm() < 1e-8);
            assert!((fit.coefficients[1][p] - g1[p]).norm() < 1e-8);
        }
        assert!(fit.residuals.iter().all(|r| *r < 1e-12));
        assert!(fit_expansion(&ks[..2], &samples[..2], 1, 1).is_err());
    }

    #[test]
    fn fit_of_exact_model_has_single_term() {
        let ks = [25u32, 50, 100, 200];
        let probes = rescaled_probes(0.5, 3);
        let samples: Vec<Vec<C>> = ks
            .iter()
            .map(|&k| {
                let s = 1.0 / (k as f64).sqrt();
                probes.iter().map(|u| model_at(k, &u.scaled(s), &Point::origin(1))).collect()
            })
            .collect();
        let fit = fit_expansion(&ks, &samples, 1, 2).unwrap();
        let a0 = leading_coefficient(&[0.5]).unwrap();
        for (p, u) in probes.iter().enumerate() {
            assert!((fit.coefficients[0][p] - a0.eval(u, &Point::origin(1))).norm() < 1e-10);
            assert!(fit.coefficients[1][p].norm() < 1e-10 && fit.coefficients[2][p].norm() < 1e-10);
        }
    }

    #[test]
    fn hat_is_in_leading_class() {
        let params = SemiclassParams::new(vec![25, 50, 100, 200], 0.1).unwrap();
        let probes = ProbeGrid::default_rescaled(2).scaled(0.5);
        let r = estimate_membership(&hat_family(&cubic(0.1)), 1.0, &deriv_orders_up_to(2, 1), &[2, 4], &params, &probes).unwrap();
        assert!(r.pass, "{:?}", r.rows);
    }

    #[test]
    fn off_diagonal_decay_of_partial_sum() {
        // (1+√k|z−w|)⁴|sum|/kⁿ without growth across k
        let w = cubic(0.1);
        let flat = MetricSpec::flat(1);
        let mut sups = Vec::new();
        for k in [25u32, 100, 400] {
            let s = 1.0 / (k as f64).sqrt();
            let zs: Vec<Point<f64>> = (0..6).map(|i| Point::from_re_im(0.6 * i as f64 * s, 0.0)).collect();
            let ys = vec![Point::origin(1)];
            let grid = neumann_grid(&w, &flat, k, &zs).unwrap();
            let sum = neumann_partial_sum(&w, &flat, k, 2, &zs, &ys, &grid).unwrap();
            let sup = zs.iter().enumerate().map(|(i, z)| (1.0 + z.norm() / s).powi(4) * sum.get(i, 0).norm() / k as f64).fold(0.0, f64::max);
            sups.push(sup);
        }
        assert!(sups.windows(2).all(|p| p[1] <= 1.1 * p[0]), "{sups:?}");
    }
}
