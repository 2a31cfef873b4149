//! Evolution systems of measures: exact Gaussians for OU models, burn-in
//! clouds for general drifts, and the functionals computed on them.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{delta_method_stderr, matrix_norm, mean_stderr, pairwise_sum, sym_sqrt_psd};
use crate::model::{apply_generator, LyapunovCertificate, ProblemSpec};
use crate::ou::{evolution_measure_with, ou_kernel, GaussianMeasure, OUModel, OmegaFit};
use crate::quad::{gaussian_panel_nodes, Nodes};
use crate::sde::{path_rng, purpose, run_cloud, Estimate, SimConfig, Starts};
use crate::testfn::TestFunction;

/// Quadrature accuracy used for Gaussian functionals.
pub const GAUSSIAN_TOL: f64 = 1e-10;
/// `C` in the `C·h²` allowance of the mean-flow identity.
pub const FLOW_DERIVATIVE_C: f64 = 10.0;
const GAUSSIAN_PANELS: usize = 160;
const GAUSSIAN_HALF_WIDTH: f64 = 14.0;
const TAIL_MC_SAMPLES: usize = 200_000;

/// How an empirical measure was produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Provenance {
    /// Coefficient time at which the burn-in started.
    pub start: f64,
    pub t: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
}

/// Uniformly weighted sample cloud standing in for `μ_t`.
#[derive(Debug, Clone)]
pub struct EmpiricalMeasure {
    pub dim: usize,
    pub samples: Vec<f64>,
    pub provenance: Provenance,
    pub certificate: Option<Arc<LyapunovCertificate>>,
}

impl EmpiricalMeasure {
    pub fn new(dim: usize, samples: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if dim == 0 || samples.is_empty() || samples.len() % dim != 0 {
            return Err(Error::Dimension { expected: dim, got: samples.len() });
        }
        Ok(Self { dim, samples, provenance, certificate: None })
    }

    pub fn len(&self) -> usize {
        self.samples.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn t(&self) -> f64 {
        self.provenance.t
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight_sum(&self) -> f64 {
        let w = vec![1.0 / self.len() as f64; self.len()];
        pairwise_sum(&w)
    }

    /// The first `n` samples.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self { samples: self.samples[..n * self.dim].to_vec(), ..self.clone() }
    }

    /// One sample per row, `d` columns `x0..x{d-1}`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let header: Vec<String> = (0..self.dim).map(|k| format!("x{k}")).collect();
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.len() {
            let row: Vec<String> = self.point(i).iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()?;
        Ok(())
    }

    /// Normalised histogram of one coordinate (a diagnostic only).
    pub fn histogram(&self, axis: usize, bins: usize, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        for i in 0..self.len() {
            let v = self.point(i)[axis];
            if v >= lo && v < hi {
                counts[((v - lo) / width) as usize] += 1;
            }
        }
        let n = self.len() as f64;
        counts.iter().enumerate().map(|(k, &c)| (lo + (k as f64 + 0.5) * width, c as f64 / (n * width))).collect()
    }
}

/// Either representation of `μ_t`.
#[derive(Debug, Clone)]
pub enum Measure {
    Gaussian(GaussianMeasure),
    Empirical(EmpiricalMeasure),
}

/// Integrals of several functionals, with the per-sample values needed for
/// error propagation when the measure is empirical.
#[derive(Debug, Clone)]
pub struct Integrals {
    pub means: Vec<f64>,
    pub columns: Option<Vec<Vec<f64>>>,
}

impl Integrals {
    /// Standard error of `g(means)` given `∇g`; quadrature error otherwise.
    pub fn stderr(&self, grad: &[f64]) -> f64 {
        match &self.columns {
            Some(cols) => delta_method_stderr(cols, grad),
            None => GAUSSIAN_TOL * grad.iter().map(|g| g.abs()).sum::<f64>().max(1.0),
        }
    }
}

impl Measure {
    pub fn dim(&self) -> usize {
        match self {
            Measure::Gaussian(g) => g.dim(),
            Measure::Empirical(e) => e.dim,
        }
    }

    pub fn t(&self) -> f64 {
        match self {
            Measure::Gaussian(g) => g.t,
            Measure::Empirical(e) => e.t(),
        }
    }

    pub fn is_sampled(&self) -> bool {
        matches!(self, Measure::Empirical(_))
    }

    /// Weighted points: Kronrod panels (d = 1) or tensor Gauss–Hermite
    /// (d ≤ 3) for Gaussians; the samples themselves otherwise.
    pub fn nodes(&self) -> Nodes {
        match self {
            Measure::Gaussian(g) if g.dim() == 1 => {
                gaussian_panel_nodes(g.mean[0], g.cov[(0, 0)].sqrt(), GAUSSIAN_PANELS, GAUSSIAN_HALF_WIDTH)
            }
            Measure::Gaussian(g) if g.dim() <= crate::ou::MAX_TENSOR_DIM => {
                g.hermite_nodes(if g.dim() == 2 { crate::ou::HERMITE_ORDER } else { crate::ou::HERMITE_ORDER / 2 })
            }
            Measure::Gaussian(g) => {
                let e = gaussian_cloud(g, TAIL_MC_SAMPLES, 0x6e6f_6465);
                Nodes { dim: e.dim, weights: vec![1.0 / e.len() as f64; e.len()], points: e.samples }
            }
            Measure::Empirical(e) => Nodes { dim: e.dim, points: e.samples.clone(), weights: vec![1.0 / e.len() as f64; e.len()] },
        }
    }

    /// `∫ g_k dμ` for the `k` components filled by `g`.
    pub fn integrals(&self, k: usize, g: impl Fn(&[f64], &mut [f64]) + Sync) -> Integrals {
        let nodes = self.nodes();
        let n = nodes.len();
        let mut cols = vec![Vec::with_capacity(n); k];
        let mut buf = vec![0.0; k];
        for i in 0..n {
            g(nodes.point(i), &mut buf);
            for c in 0..k {
                cols[c].push(buf[c]);
            }
        }
        let sampled = self.is_sampled() || (self.dim() > crate::ou::MAX_TENSOR_DIM);
        let means = cols
            .iter()
            .map(|c| {
                let terms: Vec<f64> = c.iter().zip(&nodes.weights).map(|(v, w)| v * w).collect();
                pairwise_sum(&terms)
            })
            .collect();
        Integrals { means, columns: sampled.then_some(cols) }
    }

    fn certificate(&self) -> Option<&LyapunovCertificate> {
        match self {
            Measure::Empirical(e) => e.certificate.as_deref(),
            Measure::Gaussian(_) => None,
        }
    }
}

/// `m(f) = ∫ f dμ` with its error bar.
pub fn mean_estimate(mu: &Measure, f: &TestFunction) -> Result<Estimate> {
    if f.dim() != mu.dim() {
        return Err(Error::Dimension { expected: mu.dim(), got: f.dim() });
    }
    match mu {
        Measure::Gaussian(g) => {
            if f.meta().compact_support == Some(0.0) && f.meta().grad_sup_norm == Some(0.0) {
                return Ok(Estimate { mean: f.value(g.mean.as_slice()), stderr: 0.0 });
            }
            Ok(Estimate { mean: g.expect(|x| f.value(x), GAUSSIAN_TOL)?, stderr: GAUSSIAN_TOL })
        }
        Measure::Empirical(e) => {
            if !f.meta().bounded && mu.certificate().is_none() {
                return Err(Error::Refused(format!(
                    "`{}` is unbounded and no Lyapunov certificate is registered for this measure",
                    f.label()
                )));
            }
            let v: Vec<f64> = (0..e.len()).map(|i| f.value(e.point(i))).collect();
            Ok(Estimate::from_samples(&v))
        }
    }
}

/// `m(f)`.
pub fn mean_functional(mu: &Measure, f: &TestFunction) -> Result<f64> {
    mean_estimate(mu, f).map(|e| e.mean)
}

fn gaussian_cloud(g: &GaussianMeasure, n: usize, seed: u64) -> EmpiricalMeasure {
    let d = g.dim();
    let root = sym_sqrt_psd(&g.cov);
    let mut rng = path_rng(seed, purpose::REFERENCE, 0);
    let mut samples = Vec::with_capacity(n * d);
    let mut z = DVector::zeros(d);
    for _ in 0..n {
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(&mut rng);
        }
        samples.extend((&g.mean + &root * &z).iter());
    }
    EmpiricalMeasure { dim: d, samples, provenance: Provenance { start: f64::NAN, t: g.t, dt: 0.0, n_paths: n, seed }, certificate: None }
}

/// Burn-in horizon `(1/|r₀|)·log(D/tol)` with `D = 10·(1 + |x₀|)`, `x₀ = 0`.
pub fn burn_in_horizon(spec: &ProblemSpec, tol: f64) -> Result<f64> {
    if !(tol > 0.0 && tol < 10.0) {
        return Err(Error::Parameter { name: "tol".into(), reason: format!("{tol} must lie in (0, 10)") });
    }
    Ok((10.0 / tol).ln() / spec.r0.abs())
}

/// Surrogates of `μ_t` for several times from one burn-in run started at the
/// origin at coefficient time `max(times) + H` and observed at each time.
pub fn sample_mu_path(spec: &ProblemSpec, times: &[f64], horizon: f64, cfg: &SimConfig) -> Result<Vec<EmpiricalMeasure>> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[b].total_cmp(&times[a]));
    let sorted: Vec<f64> = order.iter().map(|&i| times[i]).collect();
    let top = *sorted.first().ok_or_else(|| Error::Domain("no sampling times".into()))?;
    let start = top + horizon;
    let origin = vec![0.0; spec.dim];
    let cloud = run_cloud(spec, start, &sorted, Starts::Point(&origin), cfg.n_paths, cfg, purpose::BURN_IN, false)?;
    let mut out: Vec<Option<EmpiricalMeasure>> = vec![None; times.len()];
    for (c, &i) in order.iter().enumerate() {
        out[i] = Some(EmpiricalMeasure {
            dim: spec.dim,
            samples: cloud.states[c].clone(),
            provenance: Provenance { start, t: times[i], dt: cfg.dt, n_paths: cfg.n_paths, seed: cfg.seed },
            certificate: spec.certificate.clone(),
        });
    }
    Ok(out.into_iter().map(|m| m.expect("every time sampled")).collect())
}

/// Burn-in surrogate of `μ_t`.
pub fn sample_mu(spec: &ProblemSpec, t: f64, tol: f64, cfg: &SimConfig) -> Result<EmpiricalMeasure> {
    spec.check_time(t)?;
    let h = burn_in_horizon(spec, tol)?;
    Ok(sample_mu_path(spec, &[t], h, cfg)?.remove(0))
}

/// A defect with the tolerance it should be compared against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Defect {
    pub value: f64,
    pub tolerance: f64,
    pub stderr: f64,
}

impl Defect {
    pub fn pass(&self) -> bool {
        self.value <= self.tolerance
    }
}

/// How `G(t,s)` and `μ_t` are evaluated.
#[derive(Debug, Clone)]
pub enum Evaluator<'a> {
    /// Closed-form Gaussians.
    Ou { model: &'a OUModel, fit: OmegaFit },
    /// Burn-in clouds and Euler–Maruyama paths.
    MonteCarlo { spec: &'a ProblemSpec, cfg: SimConfig, tol: f64 },
}

impl Evaluator<'_> {
    pub fn measure(&self, t: f64) -> Result<Measure> {
        match self {
            Evaluator::Ou { model, fit } => Ok(Measure::Gaussian(evolution_measure_with(model, t, GAUSSIAN_TOL, fit)?)),
            Evaluator::MonteCarlo { spec, cfg, tol } => Ok(Measure::Empirical(sample_mu(spec, t, *tol, cfg)?)),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Evaluator::Ou { model, .. } => model.dim,
            Evaluator::MonteCarlo { spec, .. } => spec.dim,
        }
    }
}

/// Tolerance of the closed-form invariance check.
pub const OU_INVARIANCE_TOL: f64 = 1e-6;

/// `|∫ G(t,s)f dμ_t − ∫ f dμ_s|`.
///
/// For OU models the left side is the integral of `f` against the image of
/// `μ_t` under the Gaussian kernel. Otherwise a burn-in cloud for `μ_t` is
/// pushed down to `s` path by path and compared with an independent cloud for
/// `μ_s`; the tolerance is three combined standard errors.
pub fn invariance_defect(ev: &Evaluator<'_>, s: f64, t: f64, f: &TestFunction) -> Result<Defect> {
    if !(s < t) {
        return Err(Error::Domain(format!("invariance needs s < t (got s={s}, t={t})")));
    }
    match ev {
        Evaluator::Ou { model, fit } => {
            let mu_t = evolution_measure_with(model, t, GAUSSIAN_TOL, fit)?;
            let mu_s = evolution_measure_with(model, s, GAUSSIAN_TOL, fit)?;
            let pushed = ou_kernel(model, t, s)?.push_forward(&mu_t);
            let lhs = pushed.expect(|x| f.value(x), GAUSSIAN_TOL)?;
            let rhs = mu_s.expect(|x| f.value(x), GAUSSIAN_TOL)?;
            Ok(Defect { value: (lhs - rhs).abs(), tolerance: OU_INVARIANCE_TOL, stderr: 2.0 * GAUSSIAN_TOL })
        }
        Evaluator::MonteCarlo { spec, cfg, tol } => {
            let h = burn_in_horizon(spec, *tol)?;
            let mu_t = sample_mu_path(spec, &[t], h, cfg)?.remove(0);
            let pushed = run_cloud(spec, t, &[s], Starts::Each(&mu_t.samples), mu_t.len(), cfg, purpose::PUSH, false)?;
            let reference_cfg = SimConfig { seed: cfg.seed ^ 0x5eed_0f_5e, ..*cfg };
            let mu_s = sample_mu_path(spec, &[s], h, &reference_cfg)?.remove(0);
            let lv: Vec<f64> = (0..pushed.n).map(|i| f.value(pushed.state(0, i))).collect();
            let rv: Vec<f64> = (0..mu_s.len()).map(|i| f.value(mu_s.point(i))).collect();
            let (lm, ls) = mean_stderr(&lv);
            let (rm, rs) = mean_stderr(&rv);
            let se = (ls * ls + rs * rs).sqrt();
            Ok(Defect { value: (lm - rm).abs(), tolerance: 3.0 * se, stderr: se })
        }
    }
}

/// Mass of `μ` outside the closed ball of radius `R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailMass {
    pub radius: f64,
    pub mass: f64,
    pub stderr: f64,
}

pub fn tightness_profile(mu: &Measure, radii: &[f64]) -> Result<Vec<TailMass>> {
    if radii.is_empty() || radii[0] <= 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("radii must be positive and strictly increasing".into()));
    }
    let cloud = match mu {
        Measure::Gaussian(g) if g.dim() == 1 => {
            let sd = g.cov[(0, 0)].sqrt();
            let m = g.mean[0];
            let mut out = Vec::with_capacity(radii.len());
            let mut prev = f64::INFINITY;
            for &r in radii {
                let split = tail_1d(m, sd, r)?;
                let mass = split.min(prev);
                prev = mass;
                out.push(TailMass { radius: r, mass, stderr: 1e-12 });
            }
            return Ok(out);
        }
        Measure::Gaussian(g) => gaussian_cloud(g, TAIL_MC_SAMPLES, 0x7461_696c),
        Measure::Empirical(e) => e.clone(),
    };
    let n = cloud.len() as f64;
    let norms: Vec<f64> = (0..cloud.len()).map(|i| cloud.point(i).iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    Ok(radii
        .iter()
        .map(|&r| {
            let p = norms.iter().filter(|&&v| v > r).count() as f64 / n;
            TailMass { radius: r, mass: p, stderr: (p * (1.0 - p) / n).sqrt() }
        })
        .collect())
}

fn tail_1d(m: f64, sd: f64, r: f64) -> Result<f64> {
    let density = |x: f64| (-0.5 * ((x - m) / sd).powi(2)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
    let far = m.abs() + 40.0 * sd + r;
    let right = crate::quad::integrate(density, r, far, 1e-14)?;
    let left = crate::quad::integrate(density, -far, -r, 1e-14)?;
    Ok(left + right)
}

/// `|∂_r m_r(f) + m_r(𝒜(r)f)|` with a central difference of step `h`,
/// compared against `max(C·h², 4·stderr)`.
pub fn flow_derivative_defect(ev: &Evaluator<'_>, f: &TestFunction, r: f64, h: f64) -> Result<Defect> {
    if f.meta().compact_support.is_none() {
        return Err(Error::Refused(format!("`{}` is not constant outside a compact set", f.label())));
    }
    if !(h > 0.0) {
        return Err(Error::Parameter { name: "h".into(), reason: "must be positive".into() });
    }
    let allowance = FLOW_DERIVATIVE_C * h * h;
    match ev {
        Evaluator::Ou { model, fit } => {
            let spec = model.to_spec_measured("flow")?;
            let mean =
                |t: f64| -> Result<f64> { evolution_measure_with(model, t, GAUSSIAN_TOL, fit)?.expect(|x| f.value(x), GAUSSIAN_TOL) };
            let diff = (mean(r + h)? - mean(r - h)?) / (2.0 * h);
            let mu_r = evolution_measure_with(model, r, GAUSSIAN_TOL, fit)?;
            let gen = mu_r.expect(|x| apply_generator(&spec, r, f, x).unwrap_or(f64::NAN), GAUSSIAN_TOL)?;
            let stderr = 2.0 * GAUSSIAN_TOL / h;
            Ok(Defect { value: (diff + gen).abs(), tolerance: allowance.max(4.0 * stderr), stderr })
        }
        Evaluator::MonteCarlo { spec, cfg, tol } => {
            let hz = burn_in_horizon(spec, *tol)?;
            let clouds = sample_mu_path(spec, &[r + h, r, r - h], hz, cfg)?;
            let n = clouds[0].len();
            let z: Vec<f64> = (0..n)
                .map(|i| {
                    let diff = (f.value(clouds[0].point(i)) - f.value(clouds[2].point(i))) / (2.0 * h);
                    diff + apply_generator(spec, r, f, clouds[1].point(i)).unwrap_or(f64::NAN)
                })
                .collect();
            let (m, se) = mean_stderr(&z);
            Ok(Defect { value: m.abs(), tolerance: allowance.max(4.0 * se), stderr: se })
        }
    }
}

/// Largest discrepancy of the means over a test family, and for two Gaussians
/// the parameter gaps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakStarGap {
    pub max_gap: f64,
    pub per_function: Vec<f64>,
    pub mean_gap: Option<f64>,
    pub cov_gap: Option<f64>,
}

pub fn weak_star_gap(mu1: &Measure, mu2: &Measure, family: &[TestFunction]) -> Result<WeakStarGap> {
    if family.is_empty() {
        return Err(Error::Domain("empty test family".into()));
    }
    let mut per_function = Vec::with_capacity(family.len());
    for f in family {
        if !f.meta().bounded {
            return Err(Error::Refused(format!("`{}` is not bounded", f.label())));
        }
        per_function.push((mean_functional(mu1, f)? - mean_functional(mu2, f)?).abs());
    }
    let (mean_gap, cov_gap) = match (mu1, mu2) {
        (Measure::Gaussian(a), Measure::Gaussian(b)) => (Some((&a.mean - &b.mean).norm()), Some(matrix_norm(&(&a.cov - &b.cov)))),
        _ => (None, None),
    };
    Ok(WeakStarGap { max_gap: per_function.iter().copied().fold(0.0, f64::max), per_function, mean_gap, cov_gap })
}

/// Sixteen bounded test functions: compactly supported bumps, tanh
/// coordinates and Gaussian bumps placed along the diagonal.
pub fn weak_star_library(dim: usize) -> Vec<TestFunction> {
    let diag = |c: f64| vec![c / (dim as f64).sqrt(); dim];
    let mut out = Vec::with_capacity(16);
    for (c, r) in [(0.0, 1.0), (0.0, 2.5), (1.0, 1.0), (-1.0, 1.0), (2.0, 1.5), (-2.0, 1.5)] {
        out.push(TestFunction::bump(&diag(c), r, 1.0, 0.0));
    }
    for (k, scale) in [(0, 1.0), (0, 0.5)] {
        out.push(TestFunction::tanh_coord(dim, k, scale, 0.0));
    }
    out.push(TestFunction::tanh_coord(dim, dim - 1, 1.0, 1.0));
    out.push(TestFunction::tanh_coord(dim, dim - 1, 2.0, -0.5));
    for (c, w) in [(0.0, 0.5), (0.0, 1.0), (0.5, 0.7), (-0.5, 0.7), (1.5, 1.0), (-1.5, 1.0)] {
        out.push(TestFunction::gaussian_bump(&diag(c), w, 1.0, 0.0));
    }
    out
}
