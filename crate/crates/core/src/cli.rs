//! Experiment runner behind the `bergman-lab` binary.
//!
//! Every subcommand writes fixed-column CSV files into the output directory and returns the
//! property checks it evaluated; `--check` turns a failed check into exit status 1.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use num_complex::Complex;

use crate::base::{MultiIndex, Point, Poly, QuadratureGrid, SemiclassParams};
use crate::config::{normalized_config, ExperimentConfig};
use crate::error::{Error, Result};
use crate::fit::fit_loglog;
use crate::modelkernel::{reproduce_check, ModelKernel};
use crate::neumann::{rescaled_probes, run_expansion_with};
use crate::normalform::{normalize_weight, taylor_distance};
use crate::oracle::{self, ErrorRecord, Norm};
use crate::symbols::{adjoint, compose, deriv_orders_up_to, estimate_membership, CompositionRule, ProbeGrid, SymbolFamily, DEFAULT_N_LIST};
use crate::dbar::{gap_study, GAP_TOL};

type C = Complex<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Model,
    Normalize,
    Expand,
    Oracle,
    Gap,
    Compare,
    Symbols,
}

impl Subcommand {
    pub const ALL: [Subcommand; 7] = [
        Subcommand::Model,
        Subcommand::Normalize,
        Subcommand::Expand,
        Subcommand::Oracle,
        Subcommand::Gap,
        Subcommand::Compare,
        Subcommand::Symbols,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Model => "model",
            Subcommand::Normalize => "normalize",
            Subcommand::Expand => "expand",
            Subcommand::Oracle => "oracle",
            Subcommand::Gap => "gap",
            Subcommand::Compare => "compare",
            Subcommand::Symbols => "symbols",
        }
    }
}

impl std::str::FromStr for Subcommand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| Error::Config(format!("unknown subcommand {s}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Self { name: name.to_string(), pass, detail }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub checks: Vec<Check>,
}

impl RunOutcome {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// 0 on success, 1 on numerical or (with `check`) property failure, 2 on config or output-path errors.
pub fn exit_code(result: &Result<RunOutcome>, check: bool) -> i32 {
    match result {
        Ok(o) if check && !o.all_pass() => 1,
        Ok(_) => 0,
        Err(Error::Config(_) | Error::InvalidInput(_) | Error::Io(_)) => 2,
        Err(_) => 1,
    }
}

fn f17(x: f64) -> String {
    format!("{x:.16e}")
}

struct Out<'a> {
    dir: &'a Path,
    files: Vec<PathBuf>,
}

impl Out<'_> {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let f = File::create(&path)?;
        self.files.push(path);
        Ok(BufWriter::new(f))
    }
}

/// Runs one subcommand, writing into `out_dir` (created if missing).
pub fn run_experiment(cfg: &ExperimentConfig, sub: Subcommand, out_dir: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let mut out = Out { dir: out_dir, files: Vec::new() };
    let checks = match sub {
        Subcommand::Model => run_model(cfg, &mut out)?,
        Subcommand::Normalize => run_normalize(cfg, &mut out)?,
        Subcommand::Expand => run_expand(cfg, &mut out)?,
        Subcommand::Oracle => run_oracle(cfg, &mut out)?,
        Subcommand::Gap => run_gap(cfg, &mut out)?,
        Subcommand::Compare => run_compare(cfg, &mut out)?,
        Subcommand::Symbols => run_symbols(cfg, &mut out)?,
    };
    for f in &out.files {
        ensure_finite_csv(f)?;
    }
    Ok(RunOutcome { files: out.files, checks })
}

/// Any NaN or infinity in an emitted CSV is a numerical failure.
fn ensure_finite_csv(path: &Path) -> Result<()> {
    if path.extension().is_some_and(|e| e == "csv") {
        let text = std::fs::read_to_string(path)?;
        for (line_no, line) in text.lines().enumerate() {
            if line.split(',').any(|f| matches!(f.trim().to_ascii_lowercase().as_str(), "nan" | "inf" | "-inf")) {
                return Err(Error::NonFinite { index: line_no });
            }
        }
    }
    Ok(())
}

fn leading_diagonal(lambda: &[f64], k: u32) -> f64 {
    lambda.iter().fold(1.0, |a, l| a * k as f64 * 2.0 * l / std::f64::consts::PI)
}

fn first_axis(n: usize, z: C) -> Point<f64> {
    let mut c = vec![C::new(0.0, 0.0); n];
    c[0] = z;
    Point::new(c).expect("finite point")
}

fn run_model(cfg: &ExperimentConfig, out: &mut Out) -> Result<Vec<Check>> {
    let n = cfg.n;
    let lam = &cfg.lambda;
    let steps = (2.0 * cfg.quadrature.radius_sigmas).round() as usize;
    let mut wr = csv::Writer::from_writer(out.create("model.csv")?);
    wr.write_record(["k", "z_re", "w_re", "re", "im"])?;
    let (mut diag_err, mut scale_err, mut repro_err) = (0.0f64, 0.0f64, 0.0f64);
    let unit = ModelKernel::new(lam.clone(), 1)?;
    // Σ z₁ʲ/(j+1) up to degree 5
    let mut h = Poly::zero(n);
    for j in 0..=5u32 {
        let mut e = vec![0; n];
        e[0] = j;
        h.add_term(e, vec![0; n], C::new(1.0 / (j + 1) as f64, 0.0));
    }
    for &k in &cfg.k_values {
        let model = ModelKernel::new(lam.clone(), k)?;
        let sigma = 1.0 / (k as f64 * lam[0]).sqrt();
        let w0 = Point::origin(n);
        for j in 0..=steps {
            let z = first_axis(n, C::new(0.5 * sigma * j as f64, 0.0));
            let v = model.eval(&z, &w0);
            wr.write_record([k.to_string(), f17(z.coords()[0].re), f17(0.0), f17(v.re), f17(v.im)])?;
        }
        let expect = leading_diagonal(lam, k);
        diag_err = diag_err.max((model.eval(&w0, &w0).re - expect).abs() / expect);
        let sk = (k as f64).sqrt();
        for i in 0..10 {
            let t = i as f64;
            let z = first_axis(n, C::new(0.3 * (t * 0.7).sin(), 0.2 * (t * 1.3).cos()) * sigma);
            let w = first_axis(n, C::new(-0.4 * (t * 0.5).cos(), 0.25 * (t * 0.9).sin()) * sigma);
            let direct = model.eval(&z, &w);
            let scaled = unit.eval(&z.scaled(sk), &w.scaled(sk)) * (k as f64).powi(n as i32);
            scale_err = scale_err.max((direct - scaled).norm() / direct.norm());
        }
        let grid = QuadratureGrid::gaussian(lam, k as f64, cfg.quadrature.order)?;
        for z in [C::new(0.0, 0.0), C::new(0.3, 0.0), C::new(0.5, 0.5)] {
            let zp = first_axis(n, z * sigma);
            let r = reproduce_check(lam, k, &h, &zp, &grid)?;
            repro_err = repro_err.max((r.value - r.holomorphic_target).norm() / r.holomorphic_target.norm());
        }
    }
    wr.flush()?;
    Ok(vec![
        Check::new("model_diagonal", diag_err <= 1e-14, format!("max rel err {diag_err:.3e}")),
        Check::new("scaling_identity", scale_err <= 1e-12, format!("max rel err {scale_err:.3e}")),
        Check::new("reproducing", repro_err <= 1e-6, format!("max rel err {repro_err:.3e}")),
    ])
}

fn run_normalize(cfg: &ExperimentConfig, out: &mut Out) -> Result<Vec<Check>> {
    let (tw, metric) = cfg.taylor_weight()?;
    let nf = normalize_weight(&tw, &metric)?;
    let back = nf.reconstruct()?;
    let round_trip = taylor_distance(&tw, &back);
    let mut wr = csv::Writer::from_writer(out.create("normal_form.csv")?);
    wr.write_record(["kind", "i", "j", "re", "im"])?;
    for (i, l) in nf.eigenvalues.iter().enumerate() {
        wr.write_record(["eigenvalue".to_string(), i.to_string(), String::new(), f17(*l), f17(0.0)])?;
    }
    for (i, row) in nf.unitary.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            wr.write_record(["unitary".to_string(), i.to_string(), j.to_string(), f17(v.re), f17(v.im)])?;
        }
    }
    let n = nf.dim();
    let gauge_terms = [vec![0; n]]
        .into_iter()
        .chain((0..n).map(|i| MultiIndex::enumerate(n, 1).into_iter().filter(|a| a.order() == 1).nth(i).unwrap().0))
        .chain(MultiIndex::enumerate(n, 2).into_iter().filter(|a| a.order() == 2).map(|a| a.0));
    for (idx, e) in gauge_terms.enumerate() {
        let c = nf.gauge.coefficient(&e, &vec![0; n]);
        wr.write_record(["gauge".to_string(), idx.to_string(), e.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "), f17(c.re), f17(c.im)])?;
    }
    wr.flush()?;
    let chained = normalized_config(cfg, &nf.eigenvalues, &nf.residual);
    std::io::Write::write_all(&mut out.create("normalized_config.json")?, chained.to_json().as_bytes())?;
    Ok(vec![
        Check::new("round_trip", round_trip <= 1e-10, format!("max coefficient difference {round_trip:.3e}")),
        Check::new("residual_low_degree", nf.low_degree_defect <= 1e-12, format!("largest degree-≤2 coefficient {:.3e}", nf.low_degree_defect)),
    ])
}

fn probes(cfg: &ExperimentConfig) -> Result<Vec<Point<f64>>> {
    if cfg.n != 1 {
        return Err(Error::Config("kernel probes are defined for n = 1".into()));
    }
    Ok(rescaled_probes(cfg.run.region_radius, cfg.run.probes_per_ring))
}

fn run_expand(cfg: &ExperimentConfig, out: &mut Out) -> Result<Vec<Check>> {
    let (w, met, params) = (cfg.weight()?, cfg.metric()?, cfg.params()?);
    let max_m = *cfg.run.m_values.iter().max().unwrap();
    let res = run_expansion_with(&w, &met, &params, max_m, &probes(cfg)?, cfg.run.fit_terms, cfg.run.max_degree)?;
    res.write_errors_csv(out.create("expand_errors.csv")?)?;
    res.write_coefficients_csv(out.create("expand_coefficients.csv")?)?;
    let mut checks = Vec::new();
    for &m in &cfg.run.m_values {
        let target = cfg.n as f64 - (m as f64 + 1.0) / 2.0;
        let check = match res.slopes.get(&m) {
            Some(f) => Check::new(&format!("neumann_order_M{m}"), (f.slope - target).abs() <= 0.3, format!("slope {:.4} vs {target}", f.slope)),
            None => Check::new(&format!("neumann_order_M{m}"), false, "needs three k values with nonzero error".into()),
        };
        checks.push(check);
    }
    Ok(checks)
}

fn run_oracle(cfg: &ExperimentConfig, out: &mut Out) -> Result<Vec<Check>> {
    let (w, met) = (cfg.weight()?, cfg.metric()?);
    let mut wr = csv::Writer::from_writer(out.create("oracle.csv")?);
    wr.write_record(["k", "A_used", "gram_condition", "diag_re", "diag_im", "ratio_to_leading", "offdiag_N2"])?;
    let lam_min = cfg.lambda.iter().copied().fold(f64::INFINITY, f64::min);
    let mut ratios = Vec::new();
    let mut offdiag = Vec::new();
    for &k in &cfg.k_values {
        let a = cfg.run.max_degree.unwrap_or_else(|| oracle::default_max_degree(k, w.epsilon()));
        let grid = oracle::default_grid(&w, &met, k, a)?;
        let basis = oracle::build_basis(&w, &met, k, a, &grid)?;
        let o = Point::origin(cfg.n);
        let d = basis.dm_kernel(&o, &o)?;
        let ratio = d.re / leading_diagonal(&cfg.lambda, k);
        let off = if cfg.n == 1 {
            let (zn, wn) = oracle::offdiag_nodes(k, w.epsilon(), lam_min, 4, 8)?;
            Some(oracle::offdiag_decay(&basis.sample_dm(zn, wn)?, 2, w.epsilon())?)
        } else {
            None
        };
        wr.write_record([k.to_string(), a.to_string(), f17(basis.condition()), f17(d.re), f17(d.im), f17(ratio), off.map(f17).unwrap_or_default()])?;
        ratios.push(ratio);
        offdiag.push(off);
    }
    wr.flush()?;
    let mut checks = Vec::new();
    let ks: Vec<f64> = cfg.k_values.iter().map(|k| *k as f64).collect();
    let devs: Vec<f64> = ratios.iter().map(|r| (r - 1.0).abs()).collect();
    checks.push(match fit_loglog(&ks, &devs) {
        Ok(f) => Check::new("leading_diagonal_decay", -f.slope >= 0.4, format!("|ratio − 1| decay exponent {:.4}", -f.slope)),
        Err(e) => Check::new("leading_diagonal_decay", false, e.to_string()),
    });
    if let (Some(Some(first)), Some(Some(last))) = (offdiag.first(), offdiag.last()) {
        let span = ks[ks.len() - 1] / ks[0];
        let drop = first / last;
        checks.push(Check::new("offdiag_negligible", span >= 4.0 && drop >= 10.0, format!("decrease ×{drop:.3} over k ×{span}")));
    }
    Ok(checks)
}

fn run_gap(cfg: &ExperimentConfig, out: &mut Out) -> Result<Vec<Check>> {
    let w = cfg.weight()?;
    let rep = gap_study(&w, &cfg.k_values, cfg.run.refine, GAP_TOL)?;
    rep.write_csv(out.create("gap.csv")?)?;
    let mut checks = Vec::new();
    if w.is_model() {
        let worst = rep.rows.iter().map(|r| (r.min_eig / (2.0 * r.k as f64 * cfg.lambda[0]) - 1.0).abs()).fold(0.0, f64::max);
        checks.push(Check::new("model_gap_value", worst <= 0.05, format!("max |min_eig/(2kλ) − 1| = {worst:.3e}")));
    }
    checks.push(match rep.order() {
        Some(d) => Check::new("gap_order", (0.95..=1.05).contains(&d), format!("fitted order {d:.4}")),
        None => Check::new("gap_order", false, "needs three k values".into()),
    });
    Ok(checks)
}

fn run_compare(cfg: &ExperimentConfig, out: &mut Out) -> Result<Vec<Check>> {
    let (w, met, params) = (cfg.weight()?, cfg.metric()?, cfg.params()?);
    let max_m = *cfg.run.m_values.iter().max().unwrap();
    let res = run_expansion_with(&w, &met, &params, max_m, &probes(cfg)?, None, cfg.run.max_degree)?;
    let mut records = Vec::new();
    let mut worst_rel: f64 = 0.0;
    for &m in &cfg.run.m_values {
        for (i, &k) in res.k_values.iter().enumerate() {
            for norm in [Norm::Sup, Norm::L2] {
                let report = oracle::compare(&res.oracle[i], &res.partial_sums[&m][i], norm)?;
                worst_rel = worst_rel.max(report.error / report.reference);
                records.push(ErrorRecord {
                    report,
                    region: format!("M={m};|u|<={}", cfg.run.region_radius),
                    a_used: res.oracle_degree[i],
                    gram_condition: res.gram_condition[i],
                });
                let _ = k;
            }
        }
    }
    oracle::write_error_csv(&records, out.create("compare.csv")?)?;
    let mut checks = Vec::new();
    if w.is_model() && met.is_flat() {
        checks.push(Check::new("model_exact", worst_rel <= 1e-10, format!("max relative error {worst_rel:.3e}")));
    }
    Ok(checks)
}

fn run_symbols(cfg: &ExperimentConfig, out: &mut Out) -> Result<Vec<Check>> {
    let rule = CompositionRule::default();
    let g = SymbolFamily::new(1, 0.0, |x, y, k| C::new((-(k as f64) * (x[0] - y[0]).powi(2)).exp(), 0.0));
    let gg = compose(&g, &g, rule)?;
    let mut wr = csv::Writer::from_writer(out.create("symbols_compose.csv")?);
    wr.write_record(["k", "x", "y", "value", "exact", "abs_error"])?;
    let mut comp_err: f64 = 0.0;
    for &k in &cfg.k_values {
        for (x, y) in [(0.0, 0.0), (0.3, -0.2), (1.0, 1.4)] {
            let kf = k as f64;
            let exact = (std::f64::consts::PI / (2.0 * kf)).sqrt() * (-kf * (x - y) * (x - y) / 2.0).exp();
            let v = gg.eval(&[x], &[y], k);
            let e = (v - exact).norm();
            comp_err = comp_err.max(e);
            wr.write_record([k.to_string(), f17(x), f17(y), f17(v.re), f17(exact), f17(e)])?;
        }
    }
    wr.flush()?;
    let a = SymbolFamily::new(2, 0.0, |x, y, k| C::new((1.3 * x[0] - y[1]).cos() * k as f64, x[1] * y[0].exp()));
    let aa = adjoint(&adjoint(&a));
    let mut adjoint_exact = true;
    for i in 0..25 {
        let t = i as f64;
        let (x, y) = ([t.sin(), 0.5 * t.cos()], [0.3 * t - 2.0, (0.7 * t).sin()]);
        for &k in &cfg.k_values {
            adjoint_exact &= aa.eval(&x, &y, k) == a.eval(&x, &y, k);
        }
    }
    let gauss = |m: f64| {
        SymbolFamily::scaled(2, m, |u, v| {
            let r2: f64 = u.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum();
            C::new((-r2).exp(), 0.0)
        })
    };
    let composed = compose(&gauss(1.0), &gauss(0.5), rule)?;
    let params = SemiclassParams::new(cfg.k_values.clone(), cfg.epsilon)?;
    let report = estimate_membership(&composed, composed.order(), &deriv_orders_up_to(2, 1), &DEFAULT_N_LIST, &params, &ProbeGrid::default_rescaled(2))?;
    report.write_csv(out.create("symbols_membership.csv")?)?;
    Ok(vec![
        Check::new("gaussian_composition", comp_err <= 1e-8, format!("max abs error {comp_err:.3e}")),
        Check::new("adjoint_involution", adjoint_exact, "bitwise comparison of (a*)* with a".into()),
        Check::new("composed_membership", report.pass, format!("order {} over k {:?}", composed.order(), cfg.k_values)),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> ExperimentConfig {
        ExperimentConfig::from_json(text).unwrap()
    }

    #[test]
    fn model_row_at_origin() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg(r#"{"n": 1, "lambda": [0.5], "epsilon": 0.1, "k_values": [10]}"#);
        let o = run_experiment(&c, Subcommand::Model, dir.path()).unwrap();
        assert!(o.all_pass(), "{:?}", o.checks);
        let text = std::fs::read_to_string(dir.path().join("model.csv")).unwrap();
        let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
        let v: f64 = row[3].parse().unwrap();
        assert!((v - 10.0 / std::f64::consts::PI).abs() < 1e-14);
    }

    #[test]
    fn compare_model_has_zero_error() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg(r#"{"n": 1, "lambda": [0.5], "epsilon": 0.1, "k_values": [10, 20], "run": {"m_values": [1]}}"#);
        let o = run_experiment(&c, Subcommand::Compare, dir.path()).unwrap();
        assert!(o.all_pass(), "{:?}", o.checks);
        let text = std::fs::read_to_string(dir.path().join("compare.csv")).unwrap();
        assert!(text.starts_with("k,region,norm,error,A_used,gram_condition\n"));
        for line in text.lines().skip(1) {
            let err: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
            assert!(err < 1e-10, "{line}");
        }
    }

    #[test]
    fn normalize_chains_into_config() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg(r#"{"n": 1, "lambda": [1.0], "epsilon": 0.1, "k_values": [10],
            "run": {"taylor": {"constant": 0.3, "lin": [[0.2, 0.0]], "quad_hol": [[[0.5, 0.0]]],
                    "quad_mixed": [[[0.7, 0.0]]], "metric": [[[1.0, 0.0]]]}}}"#);
        let o = run_experiment(&c, Subcommand::Normalize, dir.path()).unwrap();
        assert!(o.all_pass(), "{:?}", o.checks);
        let chained = ExperimentConfig::load(&dir.path().join("normalized_config.json")).unwrap();
        assert!((chained.lambda[0] - 0.7).abs() < 1e-14);
        assert!(chained.perturbation.is_empty());
        let run = run_experiment(&chained, Subcommand::Model, dir.path()).unwrap();
        assert!(run.all_pass());
    }

    #[test]
    fn deterministic_output() {
        let c = cfg(r#"{"n": 1, "lambda": [0.5], "epsilon": 0.1, "k_values": [10, 40]}"#);
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run_experiment(&c, Subcommand::Model, a.path()).unwrap();
        run_experiment(&c, Subcommand::Model, b.path()).unwrap();
        assert_eq!(std::fs::read(a.path().join("model.csv")).unwrap(), std::fs::read(b.path().join("model.csv")).unwrap());
    }

    #[test]
    fn exit_codes() {
        let ok = Ok(RunOutcome { files: vec![], checks: vec![Check::new("x", false, String::new())] });
        assert_eq!(exit_code(&ok, false), 0);
        assert_eq!(exit_code(&ok, true), 1);
        assert_eq!(exit_code(&Err(Error::Config("bad".into())), true), 2);
        assert_eq!(exit_code(&Err(Error::NoConvergence { iterations: 1, residual: 1.0 }), false), 1);
        assert!("oracle".parse::<Subcommand>().is_ok());
        assert!("plot".parse::<Subcommand>().is_err());
    }

    #[test]
    fn nan_in_csv_is_a_failure() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        std::fs::write(&p, "a,b\n1.0,NaN\n").unwrap();
        assert!(matches!(ensure_finite_csv(&p), Err(Error::NonFinite { index: 1 })));
    }
}
