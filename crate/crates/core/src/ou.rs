//! Nonautonomous Ornstein–Uhlenbeck operators
//! `𝒜(t) = ½Tr(B(t)B(t)*D²) + ⟨A(t)x + g(t), ∇⟩`.
//!
//! Two transition objects appear and are kept apart:
//!
//! * [`transition_u`] is `U(t,s)` with `D_t U(t,s) = −A(t)U(t,s)`, `U(s,s) = I`.
//!   It decays in `s − t` for `t ≤ s` when the system is dissipative, enters the
//!   evolution measures `μ_t = N(g_t, Q_t)` and the kernel of `G(t,s)`.
//! * [`forward_flow`] is `Φ(t,s)` of `ẋ = A(t)x`; it equals `U_{Aᵀ}(s,t)ᵀ`.
//!
//! `G(t,s)` solves `D_t u = 𝒜(t)u`, `u(s) = f`, so its kernel is
//! `G(t,s)f(x) = E f(U(s,t)x + m + Z)` with `m = ∫_s^t U(s,ξ)g(ξ)dξ` and
//! `Z ~ N(0, ∫_s^t U(s,ξ)BB*(ξ)U(s,ξ)* dξ)`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::coeff::{MatrixFn, VectorFn};
use crate::error::{Error, Result};
use crate::linalg::{matrix_norm, sym_eigen_range, sym_sqrt_psd};
use crate::model::{AuditGrid, Drift, ProblemSpec};
use crate::ode::{self, OdeTolerance};
use crate::quad::{gaussian_expect_1d, gaussian_nodes, integrate_vec, Nodes};
use crate::testfn::TestFunction;

/// Gauss–Hermite points per dimension for Gaussian expectations.
pub const HERMITE_ORDER: usize = 64;
/// Above this dimension Gaussian expectations switch to Monte Carlo.
pub const MAX_TENSOR_DIM: usize = 3;
const MC_FALLBACK_SAMPLES: usize = 200_000;

#[derive(Debug, Clone, PartialEq)]
pub struct OUModel {
    pub dim: usize,
    pub a: MatrixFn,
    /// Noise factor; the diffusion matrix is `Q(t) = B(t)B(t)*/2`.
    pub b: MatrixFn,
    pub g: VectorFn,
    pub interval_start: f64,
}

impl OUModel {
    pub fn new(a: MatrixFn, b: MatrixFn, g: VectorFn, interval_start: f64) -> Result<Self> {
        let dim = a.dim();
        if b.dim() != dim {
            return Err(Error::Dimension { expected: dim, got: b.dim() });
        }
        if g.dim() != dim {
            return Err(Error::Dimension { expected: dim, got: g.dim() });
        }
        for (name, check) in [("A", a.validate()), ("B", b.validate()), ("g", g.validate())] {
            check.map_err(|reason| Error::Parameter { name: name.into(), reason })?;
        }
        Ok(Self { dim, a, b, g, interval_start })
    }

    pub fn q(&self, t: f64) -> DMatrix<f64> {
        let b = self.b.eval(t);
        &b * b.transpose() * 0.5
    }

    /// `(η₀, Λ)`: extreme eigenvalues of `Q(t)` over the given times.
    pub fn ellipticity(&self, times: &[f64]) -> (f64, f64) {
        times.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| {
            let (l, h) = sym_eigen_range(&self.q(t));
            (lo.min(l), hi.max(h))
        })
    }

    /// Largest eigenvalue of the symmetric part of `A(t)` over the given times.
    pub fn dissipativity(&self, times: &[f64]) -> f64 {
        times.iter().map(|&t| sym_eigen_range(&self.a.eval(t)).1).fold(f64::NEG_INFINITY, f64::max)
    }

    /// The general problem with drift `A(t)x + g(t)` and `Q = BB*/2`.
    pub fn to_spec(&self, name: &str, eta0: f64, lambda: f64, r0: f64) -> Result<ProblemSpec> {
        ProblemSpec::new(
            name,
            self.dim,
            self.interval_start,
            self.b.half_gram(),
            Drift::Affine { a: self.a.clone(), g: self.g.clone() },
            eta0,
            lambda,
            r0,
        )
    }

    /// [`to_spec`](Self::to_spec) with constants measured on the standard audit times.
    pub fn to_spec_measured(&self, name: &str) -> Result<ProblemSpec> {
        let times = AuditGrid::log_times(self.interval_start, 32);
        let (eta0, lambda) = self.ellipticity(&times);
        self.to_spec(name, eta0, lambda, self.dissipativity(&times))
    }

    fn bbt_sup(&self, times: &[f64]) -> f64 {
        times.iter().map(|&t| matrix_norm(&(self.q(t) * 2.0))).fold(0.0, f64::max)
    }

    fn g_sup(&self, times: &[f64]) -> f64 {
        times.iter().map(|&t| self.g.eval(t).norm()).fold(0.0, f64::max)
    }
}

fn mat_from(d: usize, flat: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(d, d, flat)
}

fn identity_flat(d: usize) -> Vec<f64> {
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    v
}

/// `U(t,s)`: `D_t U = −A(t)U`, `U(s,s) = I`, by adaptive RK45 at relative tolerance 1e−10.
pub fn transition_u(model: &OUModel, t: f64, s: f64) -> Result<DMatrix<f64>> {
    let d = model.dim;
    let mut a = vec![0.0; d * d];
    let y = ode::integrate(
        |r, u, du| {
            model.a.eval_into(r, &mut a);
            for i in 0..d {
                for j in 0..d {
                    du[i * d + j] = -(0..d).map(|k| a[i * d + k] * u[k * d + j]).sum::<f64>();
                }
            }
        },
        s,
        t,
        &identity_flat(d),
        OdeTolerance::default(),
    )?;
    Ok(mat_from(d, &y))
}

/// `Φ(t,s)`: `∂_t Φ = A(t)Φ`, `Φ(s,s) = I`.
pub fn forward_flow(model: &OUModel, t: f64, s: f64) -> Result<DMatrix<f64>> {
    let d = model.dim;
    let mut a = vec![0.0; d * d];
    let y = ode::integrate(
        |r, u, du| {
            model.a.eval_into(r, &mut a);
            for i in 0..d {
                for j in 0..d {
                    du[i * d + j] = (0..d).map(|k| a[i * d + k] * u[k * d + j]).sum::<f64>();
                }
            }
        },
        s,
        t,
        &identity_flat(d),
        OdeTolerance::default(),
    )?;
    Ok(mat_from(d, &y))
}

/// `U(t, ·)` sampled at the requested offsets (increasing, non-negative):
/// `∂_ξ U(t,ξ) = U(t,ξ)A(ξ)`. Each sample is returned as `(V, ℓ)` with
/// `U(t, t + offset) = e^ℓ·V` and `‖V‖ = 1`, so long horizons never underflow.
fn u_row_scaled(model: &OUModel, t: f64, offsets: &[f64]) -> Result<Vec<(DMatrix<f64>, f64)>> {
    let d = model.dim;
    let mut a = vec![0.0; d * d];
    let mut state = identity_flat(d);
    let mut log_scale = 0.0;
    let mut at = t;
    let mut out = Vec::with_capacity(offsets.len());
    for &off in offsets {
        let target = t + off;
        state = ode::integrate(
            |xi, u, du| {
                model.a.eval_into(xi, &mut a);
                for i in 0..d {
                    for j in 0..d {
                        du[i * d + j] = (0..d).map(|k| u[i * d + k] * a[k * d + j]).sum::<f64>();
                    }
                }
            },
            at,
            target,
            &state,
            OdeTolerance::default(),
        )?;
        at = target;
        let m = mat_from(d, &state);
        let n = matrix_norm(&m);
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::NonFinite { t, x: vec![], what: format!("‖U(t, t+{off})‖ = {n}") });
        }
        state.iter_mut().for_each(|v| *v /= n);
        log_scale += n.ln();
        out.push((m / n, log_scale));
    }
    Ok(out)
}

fn u_row(model: &OUModel, t: f64, offsets: &[f64]) -> Result<Vec<DMatrix<f64>>> {
    Ok(u_row_scaled(model, t, offsets)?.into_iter().map(|(v, l)| v * l.exp()).collect())
}

/// Fitted dichotomy bound `‖U(t,s)‖ ≤ M e^{ω(s−t)}`, `t ≤ s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OmegaFit {
    pub omega: f64,
    pub m: f64,
    /// Largest absolute deviation of `log‖U‖` from the fitted line.
    pub residual: f64,
    /// `ω < 0`, the condition for an evolution system of measures.
    pub dichotomous: bool,
}

/// Least-squares fit of `log‖U(t,s)‖` against `s − t ∈ [1, horizon]`, over
/// `samples` gaps and eight start times spread over `[start + 0.1, start + 2π + 0.1)`.
/// The slope is `ω`; `M = exp(max residual above the line)`, at least 1.
pub fn estimate_omega0(model: &OUModel, horizon: f64, samples: usize) -> Result<OmegaFit> {
    if !(horizon > 1.0) || samples < 2 {
        return Err(Error::Domain(format!("need horizon > 1 and at least 2 samples (got {horizon}, {samples})")));
    }
    const STARTS: usize = 8;
    let gaps: Vec<f64> = (0..samples).map(|k| 1.0 + (horizon - 1.0) * k as f64 / (samples - 1) as f64).collect();
    let mut pts = Vec::with_capacity(STARTS * samples);
    for j in 0..STARTS {
        let t = model.interval_start + 0.1 + std::f64::consts::TAU * j as f64 / STARTS as f64;
        for (gap, (_, log_norm)) in gaps.iter().zip(u_row_scaled(model, t, &gaps)?) {
            pts.push((*gap, log_norm));
        }
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let omega = sxy / sxx;
    let intercept = my - omega * mx;
    let residual = pts.iter().map(|p| (p.1 - intercept - omega * p.0).abs()).fold(0.0, f64::max);
    let above = pts.iter().map(|p| p.1 - omega * p.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(OmegaFit { omega, m: above.exp().max(1.0), residual, dichotomous: omega < 0.0 })
}

/// A Gaussian measure `N(mean, cov)`, tagged with the time it represents.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeasure {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub t: f64,
}

impl GaussianMeasure {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, t: f64) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::Dimension { expected: mean.len(), got: cov.nrows() });
        }
        Ok(Self { mean, cov: (&cov + cov.transpose()) * 0.5, t })
    }

    pub fn standard(dim: usize) -> Self {
        Self { mean: DVector::zeros(dim), cov: DMatrix::identity(dim, dim), t: f64::NAN }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        sym_eigen_range(&self.cov).0
    }

    /// Tensor Gauss–Hermite nodes of the given order.
    pub fn hermite_nodes(&self, order: usize) -> Nodes {
        gaussian_nodes(&self.mean, &self.cov, order)
    }

    /// `∫ f dN(mean, cov)`: adaptive Gauss–Kronrod in one dimension, tensor
    /// Gauss–Hermite up to three, seeded Monte Carlo above.
    pub fn expect(&self, f: impl Fn(&[f64]) -> f64, tol: f64) -> Result<f64> {
        let d = self.dim();
        if d == 1 {
            let mut x = [0.0];
            return gaussian_expect_1d(
                self.mean[0],
                self.cov[(0, 0)].max(0.0).sqrt(),
                |v| {
                    x[0] = v;
                    f(&x)
                },
                tol,
            );
        }
        if d <= MAX_TENSOR_DIM {
            let order = if d == 2 { HERMITE_ORDER } else { HERMITE_ORDER / 2 };
            return Ok(self.hermite_nodes(order).integrate(f));
        }
        let root = sym_sqrt_psd(&self.cov);
        let mut rng = ChaCha8Rng::seed_from_u64(0x6d65_686c_6572);
        let mut z = DVector::zeros(d);
        let mut acc = Vec::with_capacity(MC_FALLBACK_SAMPLES);
        for _ in 0..MC_FALLBACK_SAMPLES {
            for zi in z.iter_mut() {
                *zi = StandardNormal.sample(&mut rng);
            }
            let x = &self.mean + &root * &z;
            acc.push(f(x.as_slice()));
        }
        Ok(crate::linalg::pairwise_sum(&acc) / MC_FALLBACK_SAMPLES as f64)
    }

    /// Density at `x`.
    pub fn density(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let chol = self.cov.clone().cholesky().expect("covariance must be positive definite");
        let diff = DVector::from_column_slice(x) - &self.mean;
        let sol = chol.solve(&diff);
        let det = chol.l().diagonal().iter().map(|v| v * v).product::<f64>();
        (-0.5 * diff.dot(&sol)).exp() / ((2.0 * std::f64::consts::PI).powi(d as i32) * det).sqrt()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let d = self.dim();
        let cov: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| self.cov[(i, j)]).collect()).collect();
        serde_json::json!({ "mean": self.mean.as_slice(), "covariance": cov, "t": self.t })
    }
}

/// Tail horizon `T` with `(2M)²‖BB*‖_∞ e^{2ωT}/(2|ω|) < tol` and `2M‖g‖_∞e^{ωT}/|ω| < tol`.
fn tail_horizon(fit: &OmegaFit, bbt: f64, gsup: f64, tol: f64) -> f64 {
    let m = 2.0 * fit.m;
    let w = fit.omega.abs();
    let cov = if bbt > 0.0 { (m * m * bbt / (2.0 * w * tol)).ln() / (2.0 * w) } else { 0.0 };
    let mean = if gsup > 0.0 { (m * gsup / (w * tol)).ln() / w } else { 0.0 };
    cov.max(mean).max(1.0)
}

/// `μ_t = N(g_t, Q_t)` with `Q_t = ∫_t^∞ U(t,ξ)BB*(ξ)U(t,ξ)*dξ`, `g_t = ∫_t^∞ U(t,ξ)g(ξ)dξ`.
/// The dichotomy constants are fitted on a horizon of 20.
pub fn evolution_measure(model: &OUModel, t: f64, tol: f64) -> Result<GaussianMeasure> {
    let fit = estimate_omega0(model, 20.0, 40)?;
    evolution_measure_with(model, t, tol, &fit)
}

/// [`evolution_measure`] with precomputed dichotomy constants.
pub fn evolution_measure_with(model: &OUModel, t: f64, tol: f64, fit: &OmegaFit) -> Result<GaussianMeasure> {
    if !(t > model.interval_start) {
        return Err(Error::OutsideInterval { t, start: model.interval_start });
    }
    if !fit.dichotomous {
        return Err(Error::NoEvolutionMeasure { omega: fit.omega });
    }
    let d = model.dim;
    let probe: Vec<f64> = (0..64).map(|k| t + 0.25 * k as f64).collect();
    let horizon = tail_horizon(fit, model.bbt_sup(&probe), model.g_sup(&probe), tol);
    let n = d * d + d;
    // Panels are split into unit pieces so the nested transition solve stays short.
    let pieces = horizon.ceil() as usize;
    let mut total = vec![0.0; n];
    let mut u_start = DMatrix::identity(d, d);
    for p in 0..pieces {
        let (lo, hi) = (t + p as f64 * horizon / pieces as f64, t + (p + 1) as f64 * horizon / pieces as f64);
        let u0 = u_start.clone();
        let (vals, _) = integrate_vec(
            |xi, out| {
                let u: DMatrix<f64> = &u0 * &u_row(model, lo, &[xi - lo]).expect("transition solve")[0];
                let b = model.b.eval(xi);
                let ub: DMatrix<f64> = &u * b;
                let c = &ub * ub.transpose();
                let gv = &u * model.g.eval(xi);
                for i in 0..d {
                    for j in 0..d {
                        out[i * d + j] = c[(i, j)];
                    }
                    out[d * d + i] = gv[i];
                }
            },
            lo,
            hi,
            n,
            0.5 * tol / pieces as f64,
            2000,
        )?;
        for k in 0..n {
            total[k] += vals[k];
        }
        u_start = &u_start * &u_row(model, lo, &[hi - lo])?[0];
    }
    let cov = mat_from(d, &total[..d * d]);
    let mean = DVector::from_column_slice(&total[d * d..]);
    GaussianMeasure::new(mean, cov, t)
}

/// The Gaussian kernel of `G(t,s)`: `G(t,s)f(x) = E f(transition·x + shift + Z)`,
/// `Z ~ N(0, cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OuKernel {
    pub transition: DMatrix<f64>,
    pub shift: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Kernel of `G(t,s)`, `t ≥ s`, from the linear system integrated in `r` from
/// `t` down to `s`: `W' = −AW`, `m' = −g − Am`, `V' = −BB* − AV − VAᵀ`, all
/// zero at `r = t` except `W(t) = I`.
pub fn ou_kernel(model: &OUModel, t: f64, s: f64) -> Result<OuKernel> {
    if t < s {
        return Err(Error::Domain(format!("G(t,s) needs t ≥ s (got t={t}, s={s})")));
    }
    let d = model.dim;
    if t == s {
        return Ok(OuKernel { transition: DMatrix::identity(d, d), shift: DVector::zeros(d), cov: DMatrix::zeros(d, d) });
    }
    let dd = d * d;
    let mut y0 = vec![0.0; 2 * dd + d];
    y0[..dd].copy_from_slice(&identity_flat(d));
    let mut a = vec![0.0; dd];
    let mut b = vec![0.0; dd];
    let mut g = vec![0.0; d];
    let y = ode::integrate(
        |r, y, dy| {
            model.a.eval_into(r, &mut a);
            model.b.eval_into(r, &mut b);
            model.g.eval_into(r, &mut g);
            let (w, rest) = y.split_at(dd);
            let (m, v) = rest.split_at(d);
            for i in 0..d {
                for j in 0..d {
                    let mut aw = 0.0;
                    let mut av = 0.0;
                    let mut va = 0.0;
                    let mut bb = 0.0;
                    for k in 0..d {
                        aw += a[i * d + k] * w[k * d + j];
                        av += a[i * d + k] * v[k * d + j];
                        va += v[i * d + k] * a[j * d + k];
                        bb += b[i * d + k] * b[j * d + k];
                    }
                    dy[i * d + j] = -aw;
                    dy[dd + d + i * d + j] = -bb - av - va;
                }
                dy[dd + i] = -g[i] - (0..d).map(|k| a[i * d + k] * m[k]).sum::<f64>();
            }
        },
        t,
        s,
        &y0,
        OdeTolerance::default(),
    )?;
    let cov = mat_from(d, &y[dd + d..]);
    Ok(OuKernel {
        transition: mat_from(d, &y[..dd]),
        shift: DVector::from_column_slice(&y[dd..dd + d]),
        cov: (&cov + cov.transpose()) * 0.5,
    })
}

impl OuKernel {
    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    /// The Gaussian law of the transition started at `x`.
    pub fn law(&self, x: &[f64]) -> GaussianMeasure {
        let mean = &self.transition * DVector::from_column_slice(x) + &self.shift;
        GaussianMeasure { mean, cov: self.cov.clone(), t: f64::NAN }
    }

    /// Image of `N(mean, cov)` under the kernel.
    pub fn push_forward(&self, mu: &GaussianMeasure) -> GaussianMeasure {
        let mean = &self.transition * &mu.mean + &self.shift;
        let cov = &self.transition * &mu.cov * self.transition.transpose() + &self.cov;
        GaussianMeasure { mean, cov: (&cov + cov.transpose()) * 0.5, t: f64::NAN }
    }

    /// `G(t,s)f(x)`.
    pub fn apply(&self, f: &TestFunction, x: &[f64], tol: f64) -> Result<f64> {
        if self.cov.iter().all(|v| *v == 0.0) {
            let y = self.law(x).mean;
            return Ok(f.value(y.as_slice()));
        }
        self.law(x).expect(|y| f.value(y), tol)
    }

    /// `∇_x G(t,s)f(x) = transitionᵀ E ∇f(Y)`.
    pub fn apply_grad(&self, f: &TestFunction, x: &[f64], tol: f64) -> Result<Vec<f64>> {
        let d = self.dim();
        let law = self.law(x);
        let mut eg = vec![0.0; d];
        for (i, slot) in eg.iter_mut().enumerate() {
            *slot = if self.cov.iter().all(|v| *v == 0.0) {
                f.gradient(law.mean.as_slice())[i]
            } else {
                law.expect(|y| f.gradient(y)[i], tol)?
            };
        }
        let g = self.transition.transpose() * DVector::from_vec(eg);
        Ok(g.as_slice().to_vec())
    }
}

/// `G(t,s)f(x)` for the OU model, `t ≥ s`.
pub fn ou_apply_g(model: &OUModel, t: f64, s: f64, f: &TestFunction, x: &[f64]) -> Result<f64> {
    if x.len() != model.dim {
        return Err(Error::Dimension { expected: model.dim, got: x.len() });
    }
    if t == s {
        return Ok(f.value(x));
    }
    ou_kernel(model, t, s)?.apply(f, x, 1e-10)
}

/// Invariant measure of the autonomous limit, with the residual of
/// `A∞Q∞ + Q∞A∞* = −B∞B∞*`.
#[derive(Debug, Clone)]
pub struct LyapunovLimit {
    pub measure: GaussianMeasure,
    pub residual: f64,
}

/// Solves `A∞Q + QA∞* = −B∞B∞*` by vectorization and returns `N(−A∞⁻¹g∞, Q)`.
pub fn solve_lyapunov_limit(a_inf: &DMatrix<f64>, b_inf: &DMatrix<f64>, g_inf: &DVector<f64>) -> Result<LyapunovLimit> {
    let d = a_inf.nrows();
    if a_inf.ncols() != d || b_inf.nrows() != d || g_inf.len() != d {
        return Err(Error::Dimension { expected: d, got: b_inf.nrows() });
    }
    let abscissa = a_inf.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    if !(abscissa < 0.0) {
        return Err(Error::NotHurwitz { abscissa });
    }
    let eye = DMatrix::<f64>::identity(d, d);
    // vec(AQ + QAᵀ) = (I⊗A + A⊗I) vec(Q) in column-major vec.
    let op = eye.kronecker(a_inf) + a_inf.kronecker(&eye);
    let bbt = b_inf * b_inf.transpose();
    let rhs = DVector::from_column_slice((-&bbt).as_slice());
    let sol = op.lu().solve(&rhs).ok_or(Error::NotHurwitz { abscissa })?;
    let q = DMatrix::from_column_slice(d, d, sol.as_slice());
    let q = (&q + q.transpose()) * 0.5;
    let residual = (a_inf * &q + &q * a_inf.transpose() + &bbt).amax();
    let mean = -a_inf.clone().lu().solve(g_inf).ok_or(Error::NotHurwitz { abscissa })?;
    Ok(LyapunovLimit { measure: GaussianMeasure { mean, cov: q, t: f64::INFINITY }, residual })
}

/// The limit measure of a model whose coefficients converge.
pub fn limit_measure(model: &OUModel) -> Result<LyapunovLimit> {
    let (Some(a), Some(b), Some(g)) = (model.a.limit(), model.b.limit(), model.g.limit()) else {
        return Err(Error::Refused("coefficients have no limit as t → ∞".into()));
    };
    solve_lyapunov_limit(&a, &b, &g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(a: MatrixFn, g: f64) -> OUModel {
        OUModel::new(a, MatrixFn::scalar(1, 2f64.sqrt()), VectorFn::constant(vec![g]), 0.0).unwrap()
    }

    fn periodic() -> OUModel {
        scalar(MatrixFn::scalar_periodic(1, -2.0, -1.0, 1.0), 0.0)
    }

    /// Closed form of `U(t,s)` for `A(t) = −(2 + sin t)`.
    fn periodic_u(t: f64, s: f64) -> f64 {
        (2.0 * (t - s) - t.cos() + s.cos()).exp()
    }

    #[test]
    fn transition_closed_forms() {
        let m = scalar(MatrixFn::scalar(1, -1.0), 0.0);
        let u = transition_u(&m, 3.0, 1.0).unwrap();
        assert!((u[(0, 0)] - 2f64.exp()).abs() < 1e-9 * 2f64.exp());
        let p = periodic();
        for (t, s) in [(3.0, 1.0), (0.5, 4.0), (7.0, 7.0)] {
            let u = transition_u(&p, t, s).unwrap()[(0, 0)];
            assert!((u / periodic_u(t, s) - 1.0).abs() < 1e-9, "{t} {s}");
        }
    }

    #[test]
    fn forward_flow_is_transposed_reverse_transition() {
        let a = MatrixFn::Trig {
            dim: 2,
            freq: 1.0,
            constant: vec![-1.0, 0.5, -0.3, -2.0],
            cos: vec![vec![0.2, 0.0, 0.1, 0.0]],
            sin: vec![vec![0.0, 0.4, 0.0, 0.3]],
        };
        let at = MatrixFn::Trig {
            dim: 2,
            freq: 1.0,
            constant: vec![-1.0, -0.3, 0.5, -2.0],
            cos: vec![vec![0.2, 0.1, 0.0, 0.0]],
            sin: vec![vec![0.0, 0.0, 0.4, 0.3]],
        };
        let noise = MatrixFn::scalar(2, 1.0);
        let m = OUModel::new(a, noise.clone(), VectorFn::zero(2), 0.0).unwrap();
        let mt = OUModel::new(at, noise, VectorFn::zero(2), 0.0).unwrap();
        let phi = forward_flow(&m, 2.5, 0.7).unwrap();
        let u = transition_u(&mt, 0.7, 2.5).unwrap();
        assert!((phi - u.transpose()).amax() < 1e-9);
    }

    #[test]
    fn omega_fits() {
        let fit = estimate_omega0(&scalar(MatrixFn::scalar(1, -1.0), 0.0), 20.0, 20).unwrap();
        assert!((fit.omega + 1.0).abs() < 0.01 && (fit.m - 1.0).abs() < 0.01 && fit.dichotomous);
        let fit = estimate_omega0(&periodic(), 40.0, 40).unwrap();
        assert!((fit.omega + 2.0).abs() < 0.05, "{fit:?}");
        assert!(fit.m >= 1.0);
        let fit = estimate_omega0(&scalar(MatrixFn::scalar(1, 1.0), 0.0), 10.0, 10).unwrap();
        assert!((fit.omega - 1.0).abs() < 0.01 && !fit.dichotomous);
        assert!(matches!(evolution_measure(&scalar(MatrixFn::scalar(1, 1.0), 0.0), 1.0, 1e-8), Err(Error::NoEvolutionMeasure { .. })));
    }

    #[test]
    fn standard_gaussian_measure() {
        let mu = evolution_measure(&scalar(MatrixFn::scalar(1, -1.0), 0.0), 2.0, 1e-10).unwrap();
        assert!((mu.cov[(0, 0)] - 1.0).abs() < 1e-8 && mu.mean[0].abs() < 1e-8);
        let mu = evolution_measure(&scalar(MatrixFn::scalar(1, -1.0), 1.0), 2.0, 1e-10).unwrap();
        assert!((mu.mean[0] - 1.0).abs() < 1e-8);
    }

    /// Fixed-grid composite Simpson rule on `[t, t + 40]` using the closed-form `U`.
    fn simpson_q(t: f64) -> f64 {
        let n = 40_000;
        let h = 40.0 / n as f64;
        let f = |xi: f64| 2.0 * periodic_u(t, xi).powi(2);
        let mut acc = f(t) + f(t + 40.0);
        for k in 1..n {
            acc += f(t + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }

    #[test]
    fn periodic_measure_matches_simpson() {
        let tol = 1e-9;
        let m = periodic();
        for t in [0.5, 2.0, 4.0] {
            let mu = evolution_measure(&m, t, tol).unwrap();
            let oracle = simpson_q(t);
            assert!((mu.cov[(0, 0)] - oracle).abs() <= 2.0 * tol, "t={t}: {} vs {oracle}", mu.cov[(0, 0)]);
        }
    }

    #[test]
    fn kernel_examples() {
        let m = scalar(MatrixFn::scalar(1, -1.0), 0.0);
        let lin = TestFunction::linear(&[1.0], 0.0);
        assert!((ou_apply_g(&m, 2.0, 0.5, &lin, &[3.0]).unwrap() - 3.0 * (-1.5f64).exp()).abs() < 1e-9);
        let one = TestFunction::constant(1, 1.0);
        assert!((ou_apply_g(&periodic(), 3.0, 1.0, &one, &[2.0]).unwrap() - 1.0).abs() < 1e-12);
        let bump = TestFunction::bump(&[0.3], 1.0, 1.0, 0.0);
        assert_eq!(ou_apply_g(&m, 1.0, 1.0, &bump, &[0.4]).unwrap(), bump.value(&[0.4]));
        assert!(ou_apply_g(&m, 1.0, 2.0, &bump, &[0.4]).is_err());
    }

    #[test]
    fn kernel_preserves_periodic_measures() {
        let m = periodic();
        let (s, t) = (1.0, 2.7);
        let mu_t = evolution_measure(&m, t, 1e-11).unwrap();
        let mu_s = evolution_measure(&m, s, 1e-11).unwrap();
        let pushed = ou_kernel(&m, t, s).unwrap().push_forward(&mu_t);
        assert!((pushed.cov[(0, 0)] - mu_s.cov[(0, 0)]).abs() < 1e-8);
        assert!((pushed.mean[0] - mu_s.mean[0]).abs() < 1e-8);
    }

    #[test]
    fn lyapunov_limit_examples() {
        let eye = DMatrix::<f64>::identity(2, 2);
        let l = solve_lyapunov_limit(&(-&eye), &(&eye * 2f64.sqrt()), &DVector::zeros(2)).unwrap();
        assert!((l.measure.cov.clone() - &eye).amax() < 1e-12 && l.residual <= 1e-10);
        let l = solve_lyapunov_limit(&DMatrix::from_element(1, 1, -2.0), &DMatrix::from_element(1, 1, 2f64.sqrt()), &DVector::zeros(1))
            .unwrap();
        assert!((l.measure.cov[(0, 0)] - 0.5).abs() < 1e-14);
        assert!(matches!(
            solve_lyapunov_limit(&DMatrix::from_element(1, 1, 1.0), &DMatrix::from_element(1, 1, 1.0), &DVector::zeros(1)),
            Err(Error::NotHurwitz { .. })
        ));
    }

    #[test]
    fn gaussian_density_normalizes() {
        let mu =
            GaussianMeasure::new(DVector::from_vec(vec![0.3, -0.2]), DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]), 0.0).unwrap();
        // 2-D composite midpoint rule on a box of ±12 standard deviations.
        let n = 600;
        let (lo, hi) = (-12.0, 12.0);
        let h = (hi - lo) / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += mu.density(&[lo + (i as f64 + 0.5) * h, lo + (j as f64 + 0.5) * h]);
            }
        }
        assert!((acc * h * h - 1.0).abs() < 1e-6);
    }
}
