//! JSON experiment configuration.
//!
//! Polynomials are lists of homogeneous components; each term is a real monomial
//! Π (Re zⁱ)^{p_{2i}} (Im zⁱ)^{p_{2i+1}} with its coefficient.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::base::{MetricSpec, Poly, SemiclassParams, WeightSpec};
use crate::error::{Error, Result};
use crate::normalform::TaylorWeight;

type C = Complex<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealTerm {
    pub powers: Vec<u32>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyComponent {
    pub degree: u32,
    pub coeffs: Vec<RealTerm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    #[serde(default)]
    pub perturbation: Vec<PolyComponent>,
    pub support_radius: f64,
    pub rho_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    /// Gauss–Hermite order per axis for model-space integrals.
    pub order: usize,
    /// Extent of sampled profiles in Gaussian widths 1/√(kλ).
    pub radius_sigmas: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { order: 48, radius_sigmas: 4.0 }
    }
}

/// Taylor data of a weight germ and the metric at the origin, for `normalize`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaylorConfig {
    #[serde(default)]
    pub constant: f64,
    pub lin: Vec<C>,
    pub quad_hol: Vec<Vec<C>>,
    pub quad_mixed: Vec<Vec<C>>,
    #[serde(default)]
    pub higher: Vec<PolyComponent>,
    pub metric: Vec<Vec<C>>,
}

/// Subcommand options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunOptions {
    /// Neumann truncation orders M.
    pub m_values: Vec<usize>,
    /// Oracle monomial degree A; the k-dependent default when absent.
    pub max_degree: Option<u32>,
    /// Probe region |u| ≤ r in rescaled coordinates u = √k·z.
    pub region_radius: f64,
    pub probes_per_ring: usize,
    /// Number of expansion coefficients fitted from the oracle diagonal.
    pub fit_terms: Option<usize>,
    /// Per-axis refinement factor for a second gap measurement.
    pub refine: Option<f64>,
    pub taylor: Option<TaylorConfig>,
    /// Output directory when `--out` is not given.
    pub output: Option<String>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            m_values: vec![1, 2],
            max_degree: None,
            region_radius: 0.5,
            probes_per_ring: 4,
            fit_terms: None,
            refine: None,
            taylor: None,
            output: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub lambda: Vec<f64>,
    #[serde(default)]
    pub perturbation: Vec<PolyComponent>,
    #[serde(default)]
    pub density: Option<DensityConfig>,
    pub epsilon: f64,
    pub k_values: Vec<u32>,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub run: RunOptions,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Any construction failure while interpreting the config is a config error.
fn as_config<T>(what: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| config_err(format!("{what}: {e}")))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(config_err("n must be at least 1"));
        }
        if self.lambda.len() != self.n {
            return Err(config_err(format!("lambda has {} entries, n = {}", self.lambda.len(), self.n)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0 / 6.0) {
            return Err(config_err(format!("epsilon must lie in (0, 1/6), got {}", self.epsilon)));
        }
        if self.k_values.is_empty() || self.k_values.contains(&0) {
            return Err(config_err("k_values must be a nonempty list of positive integers"));
        }
        if self.quadrature.order < 2 || !(self.quadrature.radius_sigmas > 0.0) {
            return Err(config_err("quadrature needs order ≥ 2 and positive radius_sigmas"));
        }
        if self.run.m_values.is_empty() || self.run.m_values.contains(&0) {
            return Err(config_err("m_values must be a nonempty list of positive integers"));
        }
        if !(self.run.region_radius > 0.0) || self.run.probes_per_ring == 0 {
            return Err(config_err("region_radius must be positive and probes_per_ring nonzero"));
        }
        if let Some(f) = self.run.refine {
            if !(f > 1.0) {
                return Err(config_err("refine must exceed 1"));
            }
        }
        // constructing the objects runs every remaining check
        self.weight()?;
        self.metric()?;
        self.params()?;
        if self.run.taylor.is_some() {
            self.taylor_weight()?;
        }
        Ok(())
    }

    pub fn weight(&self) -> Result<WeightSpec<f64>> {
        let p = components_to_poly(self.n, &self.perturbation)?;
        as_config("perturbation", WeightSpec::new(self.lambda.clone(), p, self.epsilon))
    }

    pub fn metric(&self) -> Result<MetricSpec<f64>> {
        match &self.density {
            None => Ok(MetricSpec::flat(self.n)),
            Some(d) => {
                let p = components_to_poly(self.n, &d.perturbation)?;
                as_config("density", MetricSpec::new(p, d.support_radius, d.rho_min))
            }
        }
    }

    pub fn params(&self) -> Result<SemiclassParams<f64>> {
        as_config("k_values", SemiclassParams::new(self.k_values.clone(), self.epsilon))
    }

    /// Taylor germ and metric matrix from `run.taylor`.
    pub fn taylor_weight(&self) -> Result<(TaylorWeight, Vec<Vec<C>>)> {
        let t = self.run.taylor.as_ref().ok_or_else(|| config_err("normalize needs run.taylor"))?;
        let n = self.n;
        let square = |m: &Vec<Vec<C>>| m.len() == n && m.iter().all(|r| r.len() == n);
        if t.lin.len() != n || !square(&t.quad_hol) || !square(&t.quad_mixed) || !square(&t.metric) {
            return Err(config_err(format!("taylor data must have dimension {n}")));
        }
        let tw = TaylorWeight {
            constant: t.constant,
            lin: t.lin.clone(),
            quad_hol: t.quad_hol.clone(),
            quad_mixed: t.quad_mixed.clone(),
            higher: components_to_poly(n, &t.higher)?,
        };
        as_config("taylor", tw.validate())?;
        Ok((tw, t.metric.clone()))
    }
}

fn components_to_poly(n: usize, comps: &[PolyComponent]) -> Result<Poly<f64>> {
    let mut terms = Vec::new();
    for c in comps {
        for t in &c.coeffs {
            if t.powers.len() != 2 * n {
                return Err(config_err(format!("monomial needs {} exponents, got {}", 2 * n, t.powers.len())));
            }
            let deg: u32 = t.powers.iter().sum();
            if deg != c.degree {
                return Err(config_err(format!("monomial {:?} has degree {deg}, component declares {}", t.powers, c.degree)));
            }
            if !t.value.is_finite() {
                return Err(config_err("non-finite polynomial coefficient"));
            }
            terms.push((t.powers.clone(), t.value));
        }
    }
    as_config("polynomial", Poly::from_real_terms(n, &terms))
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Real-monomial components of a real polynomial in (z, z̄); coefficients below `tol`·max are dropped.
pub fn poly_to_components(p: &Poly<f64>, tol: f64) -> Vec<PolyComponent> {
    let n = p.dim();
    let mut acc: BTreeMap<Vec<u32>, C> = BTreeMap::new();
    for ((za, zb), c) in p.terms() {
        // z^a z̄^b = Π (x + iy)^a (x − iy)^b, expanded coordinate by coordinate
        let mut partial: Vec<(Vec<u32>, C)> = vec![(vec![0; 2 * n], *c)];
        for i in 0..n {
            let (a, b) = (za[i], zb[i]);
            let mut next = Vec::new();
            for (pw, v) in &partial {
                for s in 0..=a {
                    for t in 0..=b {
                        let coef = binomial(a, s) * binomial(b, t);
                        // i^s · (−i)^t
                        let phase = C::new(0.0, 1.0).powu(s) * C::new(0.0, -1.0).powu(t);
                        let mut q = pw.clone();
                        q[2 * i] += a - s + b - t;
                        q[2 * i + 1] += s + t;
                        next.push((q, v * phase * coef));
                    }
                }
            }
            partial = next;
        }
        for (pw, v) in partial {
            *acc.entry(pw).or_insert(C::new(0.0, 0.0)) += v;
        }
    }
    let max = acc.values().map(|v| v.re.abs()).fold(0.0, f64::max);
    let mut by_degree: BTreeMap<u32, Vec<RealTerm>> = BTreeMap::new();
    for (pw, v) in acc {
        if v.re.abs() > tol * max && v.re != 0.0 {
            by_degree.entry(pw.iter().sum()).or_default().push(RealTerm { powers: pw, value: v.re });
        }
    }
    by_degree.into_iter().map(|(degree, coeffs)| PolyComponent { degree, coeffs }).collect()
}

/// Config of the normalized model: eigenvalues as λ and the residual as perturbation.
pub fn normalized_config(base: &ExperimentConfig, eigenvalues: &[f64], residual: &Poly<f64>) -> ExperimentConfig {
    ExperimentConfig {
        n: base.n,
        lambda: eigenvalues.to_vec(),
        perturbation: poly_to_components(residual, 1e-15),
        density: None,
        epsilon: base.epsilon,
        k_values: base.k_values.clone(),
        quadrature: base.quadrature.clone(),
        run: RunOptions { taylor: None, ..base.run.clone() },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::Point;
    use proptest::prelude::*;

    const CUBIC: &str = r#"{
        "n": 1, "lambda": [0.5], "epsilon": 0.1, "k_values": [10, 20, 40],
        "perturbation": [{"degree": 3, "coeffs": [{"powers": [3, 0], "value": 0.1}, {"powers": [1, 2], "value": -0.3}]}]
    }"#;

    #[test]
    fn parses_and_builds_weight() {
        let cfg = ExperimentConfig::from_json(CUBIC).unwrap();
        let w = cfg.weight().unwrap();
        let expect = Poly::re_holomorphic(vec![3], C::new(0.1, 0.0));
        let p = Point::from_re_im(0.3, -0.7);
        assert!((w.perturbation().eval(&p) - expect.eval(&p)).norm() < 1e-15);
        assert_eq!(cfg.quadrature, QuadratureConfig::default());
        assert_eq!(cfg.run.m_values, vec![1, 2]);
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            CUBIC.replace("\"epsilon\": 0.1", "\"epsilon\": 0.2"),
            CUBIC.replace("[0.5]", "[0.5, 1.0]"),
            CUBIC.replace("\"degree\": 3", "\"degree\": 2"),
            CUBIC.replace("[10, 20, 40]", "[]"),
            CUBIC.replace("\"n\": 1,", "\"n\": 1, \"extra\": 3,"),
            CUBIC.replace("[3, 0]", "[2, 0]").replace("[1, 2]", "[1, 1]").replace("\"degree\": 3", "\"degree\": 2"),
            "{ not json".to_string(),
        ];
        for text in bad {
            assert!(matches!(ExperimentConfig::from_json(&text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn taylor_section() {
        let text = r#"{"n": 1, "lambda": [1.0], "epsilon": 0.1, "k_values": [1],
            "run": {"taylor": {"constant": 0.3, "lin": [[0.2, 0.0]], "quad_hol": [[[0.5, 0.0]]],
                    "quad_mixed": [[[0.7, 0.0]]], "metric": [[[1.0, 0.0]]]}}}"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        let (tw, met) = cfg.taylor_weight().unwrap();
        assert_eq!(tw.quad_mixed[0][0], C::new(0.7, 0.0));
        assert_eq!(met[0][0], C::new(1.0, 0.0));
    }

    proptest! {
        #[test]
        fn component_round_trip(c in -1.0f64..1.0, d in -1.0f64..1.0, x in -1.0f64..1.0, y in -1.0f64..1.0) {
            let mut p = Poly::re_holomorphic(vec![3, 0], C::new(c, d));
            p = p + Poly::re_holomorphic(vec![2, 1], C::new(d, 0.0)) + Poly::monomial(vec![1, 1], vec![1, 1], C::new(c, 0.0));
            let comps = poly_to_components(&p, 1e-15);
            let q = components_to_poly(2, &comps).unwrap();
            let pt = Point::new(vec![C::new(x, y), C::new(y, -x)]).unwrap();
            prop_assert!((p.eval(&pt) - q.eval(&pt)).norm() < 1e-13);
        }
    }
}
