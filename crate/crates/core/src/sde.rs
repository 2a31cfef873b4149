//! Monte Carlo evaluation of `G(t,s)f(x) = E f(X)` by Euler–Maruyama.
//!
//! `G(t,s)` propagates data given at time `s` to time `t ≥ s`, so each path
//! starts at `x` with the coefficient clock at `t` and steps the clock down to
//! `s`: `dX = b(r, X)dτ + σ(r)dW_τ` with `r = t − τ` and `σ = (2Q)^{1/2}`.
//! For autonomous coefficients this is the usual forward SDE.
//!
//! Every path owns a ChaCha8 stream selected by `(seed, purpose, path index)`,
//! so results do not depend on the thread count or scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{mean_stderr, op_norm, sym_sqrt_psd};
use crate::model::{AuditGrid, FrozenDrift, ProblemSpec};
use crate::testfn::TestFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Euler,
    /// Drift linearly implicit in `x`: `(I − h∇b)ΔX = h·b + σ√h·ξ`.
    SemiImplicitDrift,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub scheme: Scheme,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { dt: 1e-3, n_paths: 100_000, seed: 0, scheme: Scheme::Euler }
    }
}

impl SimConfig {
    pub fn with_paths(mut self, n: usize) -> Self {
        self.n_paths = n;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, spec: &ProblemSpec) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Parameter { name: "dt".into(), reason: format!("{} must be positive", self.dt) });
        }
        if self.n_paths == 0 {
            return Err(Error::Parameter { name: "paths".into(), reason: "must be positive".into() });
        }
        if !(self.dt * spec.r0.abs() < 0.5) {
            return Err(Error::Parameter {
                name: "dt".into(),
                reason: format!("dt·|r0| = {} must stay below 0.5", self.dt * spec.r0.abs()),
            });
        }
        Ok(())
    }
}

/// Stream namespaces; distinct uses of one seed never share random numbers.
pub mod purpose {
    pub const SIMULATE: u64 = 1;
    pub const BURN_IN: u64 = 2;
    pub const INNER: u64 = 3;
    pub const PUSH: u64 = 4;
    pub const REFERENCE: u64 = 5;
}

/// The random stream of one path.
pub fn path_rng(seed: u64, purpose: u64, path: u64) -> ChaCha8Rng {
    let key = seed ^ purpose.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(path);
    rng
}

/// Precomputed per-step coefficients for a run from coefficient time `from`
/// down through a decreasing list of checkpoints.
#[derive(Debug, Clone)]
pub struct StepPlan {
    pub dim: usize,
    pub from: f64,
    pub checkpoints: Vec<f64>,
    /// Step index after which each checkpoint is reached.
    pub marks: Vec<usize>,
    h: Vec<f64>,
    sqrt_h: Vec<f64>,
    drift: Vec<FrozenDrift>,
    sigma: Vec<Vec<f64>>,
}

impl StepPlan {
    pub fn new(spec: &ProblemSpec, from: f64, checkpoints: &[f64], dt: f64) -> Result<Self> {
        let d = spec.dim;
        let mut prev = from;
        let mut h = Vec::new();
        let mut times = Vec::new();
        let mut marks = Vec::with_capacity(checkpoints.len());
        for &c in checkpoints {
            if !(c <= prev) {
                return Err(Error::Domain(format!("checkpoints must decrease from {from} (got {c} after {prev})")));
            }
            spec.check_time(c)?;
            let n = ((prev - c) / dt - 1e-9).ceil().max(0.0) as usize;
            let step = if n > 0 { (prev - c) / n as f64 } else { 0.0 };
            for k in 0..n {
                times.push(prev - k as f64 * step);
                h.push(step);
            }
            marks.push(h.len());
            prev = c;
        }
        let drift = times.iter().map(|&r| spec.drift.freeze(r, d)).collect();
        let mut cache: Option<(Vec<f64>, Vec<f64>)> = None;
        let sigma = times
            .iter()
            .map(|&r| {
                let mut q = vec![0.0; d * d];
                spec.diffusion.eval_into(r, &mut q);
                if let Some((qc, sc)) = &cache {
                    if *qc == q {
                        return sc.clone();
                    }
                }
                let m = nalgebra::DMatrix::from_row_slice(d, d, &q) * 2.0;
                let root = sym_sqrt_psd(&m);
                let flat: Vec<f64> = (0..d * d).map(|k| root[(k / d, k % d)]).collect();
                cache = Some((q, flat.clone()));
                flat
            })
            .collect();
        let sqrt_h = h.iter().map(|v| v.sqrt()).collect();
        Ok(Self { dim: d, from, checkpoints: checkpoints.to_vec(), marks, h, sqrt_h, drift, sigma })
    }

    pub fn steps(&self) -> usize {
        self.h.len()
    }

    /// Draws the Gaussian increments of one path (`steps × dim` values).
    pub fn noise(&self, rng: &mut ChaCha8Rng, out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.steps() * self.dim).map(|_| -> f64 { StandardNormal.sample(rng) }));
    }
}

/// Scratch buffers for [`advance`].
#[derive(Debug, Clone)]
pub struct Workspace {
    b: Vec<f64>,
    jb: Vec<f64>,
    tmp: Vec<f64>,
    lhs: Vec<f64>,
}

impl Workspace {
    pub fn new(d: usize) -> Self {
        Self { b: vec![0.0; d], jb: vec![0.0; d * d], tmp: vec![0.0; d * d], lhs: vec![0.0; d * d] }
    }
}

/// In-place solve of `m·X = rhs` for `k` right-hand sides stored row-major
/// `d×k`, by Gaussian elimination with partial pivoting. `m` is destroyed.
fn solve_in_place(m: &mut [f64], rhs: &mut [f64], d: usize, k: usize) {
    for col in 0..d {
        let piv = (col..d).max_by(|&a, &b| m[a * d + col].abs().total_cmp(&m[b * d + col].abs())).unwrap();
        if piv != col {
            for j in 0..d {
                m.swap(piv * d + j, col * d + j);
            }
            for j in 0..k {
                rhs.swap(piv * k + j, col * k + j);
            }
        }
        let p = m[col * d + col];
        for row in (col + 1)..d {
            let f = m[row * d + col] / p;
            if f != 0.0 {
                for j in col..d {
                    m[row * d + j] -= f * m[col * d + j];
                }
                for j in 0..k {
                    rhs[row * k + j] -= f * rhs[col * k + j];
                }
            }
        }
    }
    for col in (0..d).rev() {
        let p = m[col * d + col];
        for j in 0..k {
            let mut v = rhs[col * k + j];
            for c in (col + 1)..d {
                v -= m[col * d + c] * rhs[c * k + j];
            }
            rhs[col * k + j] = v / p;
        }
    }
}

/// Advances one path over steps `range` of the plan with the given
/// increments. Returns the failing step on overflow.
pub fn advance(
    plan: &StepPlan,
    range: std::ops::Range<usize>,
    scheme: Scheme,
    y: &mut [f64],
    mut jac: Option<&mut [f64]>,
    noise: &[f64],
    ws: &mut Workspace,
) -> std::result::Result<(), usize> {
    let d = plan.dim;
    for k in range {
        let h = plan.h[k];
        let sh = plan.sqrt_h[k];
        let drift = &plan.drift[k];
        let sigma = &plan.sigma[k];
        let xi = &noise[k * d..(k + 1) * d];
        drift.eval(y, &mut ws.b);
        let need_jb = jac.is_some() || scheme == Scheme::SemiImplicitDrift;
        if need_jb {
            drift.jacobian(y, &mut ws.jb);
        }
        match scheme {
            Scheme::Euler => {
                if let Some(j) = jac.as_deref_mut() {
                    if d == 1 {
                        j[0] += h * ws.jb[0] * j[0];
                    } else {
                        for r in 0..d {
                            for c in 0..d {
                                ws.tmp[r * d + c] = (0..d).map(|m| ws.jb[r * d + m] * j[m * d + c]).sum::<f64>();
                            }
                        }
                        for (a, b) in j.iter_mut().zip(&ws.tmp) {
                            *a += h * b;
                        }
                    }
                }
                if d == 1 {
                    y[0] += h * ws.b[0] + sigma[0] * sh * xi[0];
                } else {
                    for i in 0..d {
                        let mut inc = h * ws.b[i];
                        for m in 0..d {
                            inc += sigma[i * d + m] * sh * xi[m];
                        }
                        ws.tmp[i] = inc;
                    }
                    for i in 0..d {
                        y[i] += ws.tmp[i];
                    }
                }
            }
            Scheme::SemiImplicitDrift => {
                if d == 1 {
                    let den = 1.0 - h * ws.jb[0];
                    y[0] += (h * ws.b[0] + sigma[0] * sh * xi[0]) / den;
                    if let Some(j) = jac.as_deref_mut() {
                        j[0] /= den;
                    }
                } else {
                    let mut inc = vec![0.0; d];
                    for i in 0..d {
                        inc[i] = h * ws.b[i] + (0..d).map(|m| sigma[i * d + m] * sh * xi[m]).sum::<f64>();
                    }
                    for i in 0..d * d {
                        ws.lhs[i] = if i / d == i % d { 1.0 } else { 0.0 } - h * ws.jb[i];
                    }
                    if let Some(j) = jac.as_deref_mut() {
                        ws.tmp.copy_from_slice(&ws.lhs);
                        solve_in_place(&mut ws.tmp, j, d, d);
                    }
                    solve_in_place(&mut ws.lhs, &mut inc, d, 1);
                    for i in 0..d {
                        y[i] += inc[i];
                    }
                }
            }
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(k);
        }
    }
    Ok(())
}

/// Where the paths of a cloud start.
#[derive(Debug, Clone, Copy)]
pub enum Starts<'a> {
    /// Every path starts at the same point.
    Point(&'a [f64]),
    /// Path `i` starts at `points[i·d..(i+1)·d]`.
    Each(&'a [f64]),
}

/// States (and optionally Jacobians) of `n` paths at each checkpoint.
#[derive(Debug, Clone)]
pub struct Cloud {
    pub dim: usize,
    pub n: usize,
    pub checkpoints: Vec<f64>,
    /// `states[c]` holds `n × d` values at checkpoint `c`.
    pub states: Vec<Vec<f64>>,
    pub jacobians: Option<Vec<Vec<f64>>>,
}

impl Cloud {
    pub fn state(&self, c: usize, i: usize) -> &[f64] {
        &self.states[c][i * self.dim..(i + 1) * self.dim]
    }

    pub fn jacobian(&self, c: usize, i: usize) -> Option<&[f64]> {
        let d2 = self.dim * self.dim;
        self.jacobians.as_ref().map(|j| &j[c][i * d2..(i + 1) * d2])
    }
}

/// Runs `n` independent paths from coefficient time `from` down through
/// `checkpoints`, path `i` using stream `(cfg.seed, purpose, i)`.
pub fn run_cloud(
    spec: &ProblemSpec,
    from: f64,
    checkpoints: &[f64],
    starts: Starts<'_>,
    n: usize,
    cfg: &SimConfig,
    purpose: u64,
    with_jacobian: bool,
) -> Result<Cloud> {
    cfg.validate(spec)?;
    let d = spec.dim;
    match starts {
        Starts::Point(x) if x.len() != d => return Err(Error::Dimension { expected: d, got: x.len() }),
        Starts::Each(xs) if xs.len() != n * d => return Err(Error::Dimension { expected: n * d, got: xs.len() }),
        _ => {}
    }
    let plan = StepPlan::new(spec, from, checkpoints, cfg.dt)?;
    let nc = checkpoints.len();
    let per_path: Vec<std::result::Result<(Vec<f64>, Vec<f64>), (usize, usize)>> = (0..n)
        .into_par_iter()
        .map_init(
            || (Workspace::new(d), Vec::new()),
            |(ws, noise), i| {
                let mut rng = path_rng(cfg.seed, purpose, i as u64);
                plan.noise(&mut rng, noise);
                let mut y = match starts {
                    Starts::Point(x) => x.to_vec(),
                    Starts::Each(xs) => xs[i * d..(i + 1) * d].to_vec(),
                };
                let mut j = if with_jacobian { identity(d) } else { Vec::new() };
                let mut ys = Vec::with_capacity(nc * d);
                let mut js = Vec::with_capacity(if with_jacobian { nc * d * d } else { 0 });
                let mut at = 0;
                for &mark in &plan.marks {
                    let jac = if with_jacobian { Some(j.as_mut_slice()) } else { None };
                    advance(&plan, at..mark, cfg.scheme, &mut y, jac, noise, ws).map_err(|step| (step, i))?;
                    at = mark;
                    ys.extend_from_slice(&y);
                    js.extend_from_slice(&j);
                }
                Ok((ys, js))
            },
        )
        .collect();
    let mut states = vec![Vec::with_capacity(n * d); nc];
    let mut jacs = vec![Vec::with_capacity(if with_jacobian { n * d * d } else { 0 }); nc];
    for r in per_path {
        let (ys, js) = r.map_err(|(step, path)| Error::BlowUp { step, path })?;
        for c in 0..nc {
            states[c].extend_from_slice(&ys[c * d..(c + 1) * d]);
            if with_jacobian {
                jacs[c].extend_from_slice(&js[c * d * d..(c + 1) * d * d]);
            }
        }
    }
    Ok(Cloud { dim: d, n, checkpoints: checkpoints.to_vec(), states, jacobians: with_jacobian.then_some(jacs) })
}

pub(crate) fn identity(d: usize) -> Vec<f64> {
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    v
}

/// Terminal states and variational Jacobians `J = ∂X/∂x` of a run for `G(t,s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub dim: usize,
    pub s: f64,
    pub t: f64,
    pub states: Vec<f64>,
    pub jacobians: Vec<f64>,
    pub stream_ids: Vec<u64>,
    pub steps: usize,
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let (mean, stderr) = mean_stderr(xs);
        Self { mean, stderr }
    }
}

impl PathBundle {
    pub fn len(&self) -> usize {
        self.stream_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stream_ids.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn jacobian(&self, i: usize) -> &[f64] {
        let d2 = self.dim * self.dim;
        &self.jacobians[i * d2..(i + 1) * d2]
    }

    pub fn expect(&self, f: &TestFunction) -> Estimate {
        let v: Vec<f64> = (0..self.len()).map(|i| f.value(self.state(i))).collect();
        Estimate::from_samples(&v)
    }

    /// Pathwise estimator `E[Jᵀ∇f(X)]`, one estimate per coordinate.
    pub fn expect_grad(&self, f: &TestFunction) -> Vec<Estimate> {
        let d = self.dim;
        let mut cols = vec![Vec::with_capacity(self.len()); d];
        let mut g = vec![0.0; d];
        for i in 0..self.len() {
            f.gradient_into(self.state(i), &mut g);
            let j = self.jacobian(i);
            for c in 0..d {
                cols[c].push((0..d).map(|r| j[r * d + c] * g[r]).sum());
            }
        }
        cols.iter().map(|c| Estimate::from_samples(c)).collect()
    }

    /// Largest `log‖J‖/(t − s)` over paths and the number of paths with
    /// `‖J‖ > e^{(r₀+ε)(t−s)}`.
    pub fn jacobian_audit(&self, r0: f64, eps: f64) -> JacobianAudit {
        let gap = self.t - self.s;
        let bound = ((r0 + eps) * gap).exp();
        let mut worst = f64::NEG_INFINITY;
        let mut violations = 0;
        for i in 0..self.len() {
            let n = op_norm(self.jacobian(i), self.dim);
            if !(n <= bound) {
                violations += 1;
            }
            worst = worst.max(n.ln() / gap);
        }
        JacobianAudit { gap, bound, worst_rate: worst, violations, paths: self.len() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JacobianAudit {
    pub gap: f64,
    pub bound: f64,
    /// Largest observed `log‖J‖/(t−s)`.
    pub worst_rate: f64,
    pub violations: usize,
    pub paths: usize,
}

/// `ε_dt = 10·dt·L_grid`, with `L_grid` the largest `‖∇_x b‖` on the standard
/// audit grid of radius 10.
pub fn jacobian_slack(spec: &ProblemSpec, dt: f64) -> f64 {
    10.0 * dt * spec.jacobian_scale(&AuditGrid::standard(spec, 10.0))
}

fn check_span(spec: &ProblemSpec, s: f64, t: f64) -> Result<()> {
    spec.check_time(s)?;
    spec.check_time(t)?;
    if !(s < t) {
        return Err(Error::Domain(format!("simulation needs s < t (got s={s}, t={t})")));
    }
    Ok(())
}

/// Paths for `G(t,s)` started at `x`.
pub fn simulate(spec: &ProblemSpec, s: f64, t: f64, x: &[f64], cfg: &SimConfig) -> Result<PathBundle> {
    check_span(spec, s, t)?;
    let cloud = run_cloud(spec, t, &[s], Starts::Point(x), cfg.n_paths, cfg, purpose::SIMULATE, true)?;
    Ok(bundle_from(cloud, 0, s, t, cfg.dt))
}

/// Paths for `G(t, t − gap)` for several gaps at once (the same paths,
/// observed at each checkpoint).
pub fn simulate_gaps(spec: &ProblemSpec, t: f64, gaps: &[f64], x: &[f64], cfg: &SimConfig) -> Result<Vec<PathBundle>> {
    let checkpoints: Vec<f64> = gaps.iter().map(|g| t - g).collect();
    for &s in &checkpoints {
        check_span(spec, s, t)?;
    }
    let cloud = run_cloud(spec, t, &checkpoints, Starts::Point(x), cfg.n_paths, cfg, purpose::SIMULATE, true)?;
    Ok((0..gaps.len()).map(|c| bundle_from(cloud.clone(), c, checkpoints[c], t, cfg.dt)).collect())
}

fn bundle_from(cloud: Cloud, c: usize, s: f64, t: f64, dt: f64) -> PathBundle {
    let n = cloud.n;
    let steps = ((t - s) / dt - 1e-9).ceil() as usize;
    let mut states = cloud.states;
    let mut jacs = cloud.jacobians.unwrap_or_default();
    PathBundle {
        dim: cloud.dim,
        s,
        t,
        states: states.swap_remove(c),
        jacobians: if jacs.is_empty() { Vec::new() } else { jacs.swap_remove(c) },
        stream_ids: (0..n as u64).collect(),
        steps,
    }
}

fn admissible(spec: &ProblemSpec, f: &TestFunction) -> Result<()> {
    if f.dim() != spec.dim {
        return Err(Error::Dimension { expected: spec.dim, got: f.dim() });
    }
    if !f.meta().bounded && spec.certificate().is_none() {
        return Err(Error::UnboundedIntegrand);
    }
    Ok(())
}

/// `G(t,s)f(x)` with its standard error.
pub fn evaluate_g(spec: &ProblemSpec, s: f64, t: f64, f: &TestFunction, x: &[f64], cfg: &SimConfig) -> Result<Estimate> {
    admissible(spec, f)?;
    Ok(simulate(spec, s, t, x, cfg)?.expect(f))
}

/// `∇_x G(t,s)f(x)` by the pathwise estimator, with the certified bound
/// `e^{r₀(t−s)}·G(t,s)|∇f|(x)` estimated on the same paths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradEstimate {
    pub grad: Vec<f64>,
    pub stderr: Vec<f64>,
    pub bound: f64,
    pub bound_stderr: f64,
}

impl GradEstimate {
    pub fn norm(&self) -> f64 {
        self.grad.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub fn evaluate_grad_g(spec: &ProblemSpec, s: f64, t: f64, f: &TestFunction, x: &[f64], cfg: &SimConfig) -> Result<GradEstimate> {
    admissible(spec, f)?;
    let bundle = simulate(spec, s, t, x, cfg)?;
    Ok(grad_from_bundle(spec, &bundle, f))
}

pub fn grad_from_bundle(spec: &ProblemSpec, bundle: &PathBundle, f: &TestFunction) -> GradEstimate {
    let ests = bundle.expect_grad(f);
    let norms: Vec<f64> = (0..bundle.len()).map(|i| f.grad_norm(bundle.state(i))).collect();
    let e = Estimate::from_samples(&norms);
    let factor = (spec.r0 * (bundle.t - bundle.s)).exp();
    GradEstimate {
        grad: ests.iter().map(|e| e.mean).collect(),
        stderr: ests.iter().map(|e| e.stderr).collect(),
        bound: factor * e.mean,
        bound_stderr: factor * e.stderr,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{MatrixFn, VectorFn};
    use crate::model::Drift;

    fn ou() -> ProblemSpec {
        ProblemSpec::new(
            "ou",
            1,
            0.0,
            MatrixFn::scalar(1, 1.0),
            Drift::Affine { a: MatrixFn::scalar(1, -1.0), g: VectorFn::zero(1) },
            1.0,
            1.0,
            -1.0,
        )
        .unwrap()
    }

    fn cubic() -> ProblemSpec {
        ProblemSpec::new("cubic", 1, 0.0, MatrixFn::scalar(1, 1.0), Drift::Cubic { linear: 1.0, cubic: 1.0 }, 1.0, 1.0, -1.0).unwrap()
    }

    fn cfg(n: usize) -> SimConfig {
        SimConfig { dt: 2e-3, n_paths: n, seed: 11, scheme: Scheme::Euler }
    }

    #[test]
    fn ou_moments() {
        let spec = ou();
        let b = simulate(&spec, 1.0, 2.0, &[1.5], &cfg(20_000)).unwrap();
        let m = b.expect(&TestFunction::linear(&[1.0], 0.0));
        assert!((m.mean - 1.5 * (-1f64).exp()).abs() < 3.0 * m.stderr + 2e-3);
        let b0 = simulate(&spec, 1.0, 2.0, &[0.0], &cfg(20_000)).unwrap();
        let v = b0.expect(&TestFunction::squared_norm(1));
        assert!((v.mean - (1.0 - (-2f64).exp())).abs() < 3.0 * v.stderr + 2e-3, "{v:?}");
    }

    #[test]
    fn ou_jacobian_is_deterministic() {
        let b = simulate(&ou(), 0.5, 1.5, &[0.3], &cfg(50)).unwrap();
        // Euler product (1 − h)^n approximates e^{−1} to O(h).
        let exact = (1.0 - 2e-3f64).powi(500);
        for i in 0..b.len() {
            assert!((b.jacobian(i)[0] - exact).abs() < 1e-12);
        }
        let g = grad_from_bundle(&ou(), &b, &TestFunction::linear(&[1.0], 0.0));
        assert!((g.grad[0] - exact).abs() < 1e-12 && g.stderr[0] < 1e-12);
        let c = grad_from_bundle(&ou(), &b, &TestFunction::constant(1, 4.0));
        assert_eq!(c.grad, vec![0.0]);
    }

    #[test]
    fn normalization_and_bounded_contraction() {
        let spec = cubic();
        let e = evaluate_g(&spec, 1.0, 2.0, &TestFunction::constant(1, 1.0), &[0.2], &cfg(500)).unwrap();
        assert_eq!((e.mean, e.stderr), (1.0, 0.0));
        let f = TestFunction::tanh_coord(1, 0, 1.0, 0.0);
        let g = evaluate_grad_g(&spec, 1.0, 2.0, &f, &[0.4], &cfg(5000)).unwrap();
        assert!(g.norm() <= g.bound + 3.0 * g.bound_stderr);
    }

    #[test]
    fn unbounded_integrands_need_a_certificate() {
        let r = evaluate_g(&cubic(), 1.0, 2.0, &TestFunction::squared_norm(1), &[0.0], &cfg(10));
        assert!(matches!(r, Err(Error::UnboundedIntegrand)));
    }

    #[test]
    fn seeds_are_reproducible_and_distinct() {
        let a = simulate(&cubic(), 1.0, 1.5, &[0.0], &cfg(64)).unwrap();
        let b = simulate(&cubic(), 1.0, 1.5, &[0.0], &cfg(64)).unwrap();
        assert_eq!(a, b);
        let c = simulate(&cubic(), 1.0, 1.5, &[0.0], &cfg(64).with_seed(12)).unwrap();
        assert_ne!(a.states, c.states);
    }

    #[test]
    fn checkpoints_match_separate_runs() {
        let spec = cubic();
        let all = simulate_gaps(&spec, 3.0, &[0.5, 1.0], &[0.7], &cfg(32)).unwrap();
        let direct = simulate(&spec, 2.5, 3.0, &[0.7], &cfg(32)).unwrap();
        assert_eq!(all[0].states, direct.states);
        assert_eq!(all[1].s, 2.0);
    }

    #[test]
    fn semi_implicit_agrees_with_euler() {
        let spec = cubic();
        let f = TestFunction::tanh_coord(1, 0, 1.0, 0.0);
        let mut c = cfg(20_000);
        let e = evaluate_g(&spec, 1.0, 2.0, &f, &[1.0], &c).unwrap();
        c.scheme = Scheme::SemiImplicitDrift;
        let s = evaluate_g(&spec, 1.0, 2.0, &f, &[1.0], &c).unwrap();
        assert!((e.mean - s.mean).abs() < 0.01, "{e:?} {s:?}");
    }

    #[test]
    fn guards() {
        let spec = ou();
        assert!(simulate(&spec, 2.0, 1.0, &[0.0], &cfg(1)).is_err());
        assert!(simulate(&spec, 1.0, 2.0, &[0.0], &cfg(1).with_dt(0.6)).is_err());
        assert!(simulate(&spec, -1.0, 2.0, &[0.0], &cfg(1)).is_err());
    }

    #[test]
    fn linear_solve() {
        let mut m = vec![2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0];
        let mut r = vec![3.0, 5.0, 5.0];
        solve_in_place(&mut m, &mut r, 3, 1);
        for v in r {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }
}
