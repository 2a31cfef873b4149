//! Problem definitions: diffusion `Q(t)`, drift `b(t, x)` with its Jacobian,
//! and the declared constants `η₀`, `Λ`, `r₀`; plus grid audits of the standing
//! hypotheses (ellipticity, symmetry, dissipativity) and Lyapunov certificates.

pub mod catalog;
pub mod lyapunov;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::coeff::{MatrixFn, VectorFn};
use crate::error::{Error, Result};
use crate::linalg::{asymmetry, lambda_max_sym, sym_eigen_range};
use crate::testfn::TestFunction;

pub use lyapunov::{build_lyapunov_gaussian, build_lyapunov_power, LyapunovCertificate, LyapunovKind};

/// Absolute tolerance for every hypothesis margin.
pub const MARGIN_TOL: f64 = 1e-9;

pub type FieldFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;

/// A drift given by closures, for ad-hoc problems.
#[derive(Clone)]
pub struct CustomDrift {
    pub label: String,
    pub value: FieldFn,
    /// Row-major `∇_x b`.
    pub jacobian: FieldFn,
}

impl fmt::Debug for CustomDrift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomDrift({})", self.label)
    }
}

/// Drift field `b(t, x)`.
#[derive(Debug, Clone)]
pub enum Drift {
    /// `A(t)x + g(t)`.
    Affine {
        a: MatrixFn,
        g: VectorFn,
    },
    /// `b_i = −linear·x_i − cubic·x_i³`.
    Cubic {
        linear: f64,
        cubic: f64,
    },
    /// `b_i = −κ·y_i + w·tanh(y_i)` with `y = x − c(t)`; a softened double
    /// well around a moving centre, dissipative when `w < κ`.
    SoftWell {
        kappa: f64,
        well: f64,
        center: VectorFn,
    },
    Custom(CustomDrift),
}

/// The drift with its time argument fixed, so that path loops do not
/// re-evaluate time-dependent coefficients.
#[derive(Debug, Clone)]
pub enum FrozenDrift {
    Affine { a: Vec<f64>, g: Vec<f64> },
    Cubic { linear: f64, cubic: f64 },
    SoftWell { kappa: f64, well: f64, center: Vec<f64> },
    Custom { t: f64, drift: CustomDrift },
}

impl Drift {
    pub fn freeze(&self, t: f64, dim: usize) -> FrozenDrift {
        match self {
            Drift::Affine { a, g } => {
                let mut am = vec![0.0; dim * dim];
                let mut gv = vec![0.0; dim];
                a.eval_into(t, &mut am);
                g.eval_into(t, &mut gv);
                FrozenDrift::Affine { a: am, g: gv }
            }
            Drift::Cubic { linear, cubic } => FrozenDrift::Cubic { linear: *linear, cubic: *cubic },
            Drift::SoftWell { kappa, well, center } => {
                let mut c = vec![0.0; dim];
                center.eval_into(t, &mut c);
                FrozenDrift::SoftWell { kappa: *kappa, well: *well, center: c }
            }
            Drift::Custom(c) => FrozenDrift::Custom { t, drift: c.clone() },
        }
    }

    pub fn label(&self) -> String {
        match self {
            Drift::Affine { .. } => "affine".into(),
            Drift::Cubic { .. } => "cubic".into(),
            Drift::SoftWell { .. } => "soft_well".into(),
            Drift::Custom(c) => c.label.clone(),
        }
    }
}

impl FrozenDrift {
    #[inline]
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        let d = x.len();
        match self {
            FrozenDrift::Affine { a, g } => {
                for i in 0..d {
                    let mut acc = g[i];
                    for j in 0..d {
                        acc += a[i * d + j] * x[j];
                    }
                    out[i] = acc;
                }
            }
            FrozenDrift::Cubic { linear, cubic } => {
                for i in 0..d {
                    out[i] = -linear * x[i] - cubic * x[i] * x[i] * x[i];
                }
            }
            FrozenDrift::SoftWell { kappa, well, center } => {
                for i in 0..d {
                    let y = x[i] - center[i];
                    out[i] = -kappa * y + well * y.tanh();
                }
            }
            FrozenDrift::Custom { t, drift } => (drift.value)(*t, x, out),
        }
    }

    #[inline]
    pub fn jacobian(&self, x: &[f64], out: &mut [f64]) {
        let d = x.len();
        match self {
            FrozenDrift::Affine { a, .. } => out.copy_from_slice(a),
            FrozenDrift::Cubic { linear, cubic } => {
                out.fill(0.0);
                for i in 0..d {
                    out[i * d + i] = -linear - 3.0 * cubic * x[i] * x[i];
                }
            }
            FrozenDrift::SoftWell { kappa, well, center } => {
                out.fill(0.0);
                for i in 0..d {
                    let th = (x[i] - center[i]).tanh();
                    out[i * d + i] = -kappa + well * (1.0 - th * th);
                }
            }
            FrozenDrift::Custom { t, drift } => (drift.jacobian)(*t, x, out),
        }
    }
}

/// Coefficients `(Q, b, ∇_x b)` on `I = (interval_start, +∞)` with declared
/// constants.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub dim: usize,
    pub interval_start: f64,
    pub diffusion: MatrixFn,
    pub drift: Drift,
    pub eta0: f64,
    pub lambda: f64,
    pub r0: f64,
    pub(crate) certificate: Option<Arc<LyapunovCertificate>>,
}

impl ProblemSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        interval_start: f64,
        diffusion: MatrixFn,
        drift: Drift,
        eta0: f64,
        lambda: f64,
        r0: f64,
    ) -> Result<Self> {
        if dim == 0 || diffusion.dim() != dim {
            return Err(Error::Dimension { expected: dim, got: diffusion.dim() });
        }
        diffusion.validate().map_err(|reason| Error::Parameter { name: "diffusion".into(), reason })?;
        if let Drift::Affine { a, g } = &drift {
            if a.dim() != dim || g.dim() != dim {
                return Err(Error::Dimension { expected: dim, got: a.dim() });
            }
        }
        if !(eta0 > 0.0) {
            return Err(Error::Parameter { name: "eta0".into(), reason: format!("{eta0} must be positive (uniform ellipticity)") });
        }
        if !(lambda >= eta0) {
            return Err(Error::Parameter { name: "Lambda".into(), reason: format!("{lambda} must be at least eta0 = {eta0}") });
        }
        if !(r0 < 0.0) {
            return Err(Error::Parameter {
                name: "r0".into(),
                reason: format!("r0 = {r0} violates the dissipativity hypothesis: r0 must be negative"),
            });
        }
        Ok(Self { name: name.into(), dim, interval_start, diffusion, drift, eta0, lambda, r0, certificate: None })
    }

    /// Registers a Lyapunov certificate; unbounded integrands dominated by its
    /// `φ` become admissible for Monte Carlo evaluation.
    pub fn with_certificate(mut self, cert: LyapunovCertificate) -> Self {
        self.certificate = Some(Arc::new(cert));
        self
    }

    pub fn certificate(&self) -> Option<&LyapunovCertificate> {
        self.certificate.as_deref()
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        if t > self.interval_start && t.is_finite() {
            Ok(())
        } else {
            Err(Error::OutsideInterval { t, start: self.interval_start })
        }
    }

    pub fn q(&self, t: f64) -> DMatrix<f64> {
        self.diffusion.eval(t)
    }

    pub fn b(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.drift.freeze(t, self.dim).eval(x, &mut out);
        out
    }

    pub fn jac_b(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim * self.dim];
        self.drift.freeze(t, self.dim).jacobian(x, &mut out);
        out
    }

    /// Sample-based upper bound on `|∇_x b|` over a grid; used to size the
    /// Euler–Jacobian tolerance.
    pub fn jacobian_scale(&self, grid: &AuditGrid) -> f64 {
        let d = self.dim;
        let mut worst = 0.0_f64;
        for &t in &grid.times {
            let frozen = self.drift.freeze(t, d);
            let mut j = vec![0.0; d * d];
            for x in &grid.points {
                frozen.jacobian(x, &mut j);
                worst = worst.max(crate::linalg::op_norm(&j, d));
            }
        }
        worst
    }
}

/// `𝒜(t)f(x) = Tr(Q(t)·D²f(x)) + ⟨b(t, x), ∇f(x)⟩`.
pub fn apply_generator(spec: &ProblemSpec, t: f64, f: &TestFunction, x: &[f64]) -> Result<f64> {
    spec.check_time(t)?;
    if f.dim() != spec.dim || x.len() != spec.dim {
        return Err(Error::Dimension { expected: spec.dim, got: x.len() });
    }
    let d = spec.dim;
    let q = spec.q(t);
    let h = f.hessian(x);
    let g = f.gradient(x);
    let b = spec.b(t, x);
    let mut trace = 0.0;
    for i in 0..d {
        for j in 0..d {
            trace += q[(i, j)] * h[j * d + i];
        }
    }
    Ok(trace + b.iter().zip(&g).map(|(a, c)| a * c).sum::<f64>())
}

/// Finite `(t, x)` lattice on which hypotheses are audited.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditGrid {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
}

impl AuditGrid {
    /// 32 log-spaced times in `[start + 0.1, start + 50]` and a box lattice on
    /// `[−radius, radius]^d`.
    pub fn standard(spec: &ProblemSpec, radius: f64) -> Self {
        let per_dim = match spec.dim {
            1 => 201,
            2 => 41,
            3 => 15,
            _ => 7,
        };
        Self::new(Self::log_times(spec.interval_start, 32), Self::lattice(spec.dim, radius, per_dim))
    }

    pub fn new(times: Vec<f64>, points: Vec<Vec<f64>>) -> Self {
        Self { times, points }
    }

    pub fn log_times(start: f64, n: usize) -> Vec<f64> {
        let base = if start.is_finite() { start } else { 0.0 };
        (0..n).map(|k| base + 0.1 * 500f64.powf(k as f64 / (n.max(2) - 1) as f64)).collect()
    }

    pub fn lattice(dim: usize, radius: f64, per_dim: usize) -> Vec<Vec<f64>> {
        let axis: Vec<f64> = (0..per_dim).map(|k| -radius + 2.0 * radius * k as f64 / (per_dim.max(2) - 1) as f64).collect();
        let mut pts = vec![Vec::new()];
        for _ in 0..dim {
            pts = pts
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |&a| {
                        let mut q = p.clone();
                        q.push(a);
                        q
                    })
                })
                .collect();
        }
        pts
    }
}

/// Worst margin and where it occurs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Margin {
    pub value: f64,
    pub t: f64,
    pub x: Vec<f64>,
    /// Grid points with a margin below `−MARGIN_TOL`.
    pub failures: usize,
}

impl Margin {
    fn empty() -> Self {
        Self { value: f64::INFINITY, t: f64::NAN, x: Vec::new(), failures: 0 }
    }

    fn absorb(&mut self, value: f64, t: f64, x: &[f64]) {
        if value < -MARGIN_TOL {
            self.failures += 1;
        }
        if value < self.value {
            self.value = value;
            self.t = t;
            self.x = x.to_vec();
        }
    }

    fn merge(mut self, other: Margin) -> Self {
        let failures = self.failures + other.failures;
        if other.value < self.value {
            self = other;
        }
        self.failures = failures;
        self
    }
}

/// Outcome of [`audit_hypotheses`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisAudit {
    /// Largest `|q_ij − q_ji|` over the sampled times.
    pub symmetry_defect: f64,
    /// `min λ_min(Q(t)) − η₀`.
    pub ellipticity_lower: Margin,
    /// `Λ − max λ_max(Q(t))`.
    pub ellipticity_upper: Margin,
    /// `r₀ − λ_max(sym ∇_x b(t, x))`.
    pub dissipativity: Margin,
    pub grid_times: usize,
    pub grid_points: usize,
    pub pass: bool,
}

/// Audits symmetry and ellipticity of `Q` and dissipativity of `b` on a grid.
pub fn audit_hypotheses(spec: &ProblemSpec, grid: &AuditGrid) -> Result<HypothesisAudit> {
    if grid.times.is_empty() || grid.points.is_empty() {
        return Err(Error::Domain("audit grid is empty".into()));
    }
    for &t in &grid.times {
        spec.check_time(t)?;
    }
    let d = spec.dim;
    let per_time: Vec<Result<(f64, Margin, Margin, Margin)>> = grid
        .times
        .par_iter()
        .map(|&t| {
            let q = spec.q(t);
            if q.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { t, x: Vec::new(), what: "diffusion matrix".into() });
            }
            let sym = asymmetry(&q);
            let (lo, hi) = sym_eigen_range(&q);
            let mut lower = Margin::empty();
            let mut upper = Margin::empty();
            lower.absorb(lo - spec.eta0, t, &[]);
            upper.absorb(spec.lambda - hi, t, &[]);
            let frozen = spec.drift.freeze(t, d);
            let mut jac = vec![0.0; d * d];
            let mut diss = Margin::empty();
            for x in &grid.points {
                frozen.jacobian(x, &mut jac);
                if jac.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { t, x: x.clone(), what: "drift Jacobian".into() });
                }
                diss.absorb(spec.r0 - lambda_max_sym(&jac, d), t, x);
            }
            Ok((sym, lower, upper, diss))
        })
        .collect();
    let mut symmetry_defect = 0.0_f64;
    let mut lower = Margin::empty();
    let mut upper = Margin::empty();
    let mut diss = Margin::empty();
    for r in per_time {
        let (s, l, u, g) = r?;
        symmetry_defect = symmetry_defect.max(s);
        lower = lower.merge(l);
        upper = upper.merge(u);
        diss = diss.merge(g);
    }
    let pass = symmetry_defect <= 1e-12 && lower.value >= -MARGIN_TOL && upper.value >= -MARGIN_TOL && diss.value >= -MARGIN_TOL;
    Ok(HypothesisAudit {
        symmetry_defect,
        ellipticity_lower: lower,
        ellipticity_upper: upper,
        dissipativity: diss,
        grid_times: grid.times.len(),
        grid_points: grid.points.len(),
        pass,
    })
}

/// Outcome of [`check_monotonicity`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    /// `max ⟨b(t,x) − b(t,y), x − y⟩/|x − y|² − r₀` over the evaluated pairs.
    pub max_slack: f64,
    pub evaluated: usize,
    pub warnings: Vec<String>,
    pub pass: bool,
}

/// One-sided Lipschitz (monotonicity) form of the dissipativity condition.
pub fn check_monotonicity(spec: &ProblemSpec, pairs: &[(f64, Vec<f64>, Vec<f64>)]) -> Result<MonotonicityReport> {
    let mut max_slack = f64::NEG_INFINITY;
    let mut warnings = Vec::new();
    let mut evaluated = 0;
    for (t, x, y) in pairs {
        spec.check_time(*t)?;
        let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        let n2: f64 = diff.iter().map(|v| v * v).sum();
        if n2 == 0.0 {
            warnings.push(format!("skipped coincident pair at t={t}, x={x:?}"));
            continue;
        }
        let bx = spec.b(*t, x);
        let by = spec.b(*t, y);
        let inner: f64 = bx.iter().zip(&by).zip(&diff).map(|((a, b), d)| (a - b) * d).sum();
        if !inner.is_finite() {
            return Err(Error::NonFinite { t: *t, x: x.clone(), what: "drift".into() });
        }
        max_slack = max_slack.max(inner / n2 - spec.r0);
        evaluated += 1;
    }
    Ok(MonotonicityReport { max_slack, evaluated, warnings, pass: evaluated > 0 && max_slack <= MARGIN_TOL })
}
