//! Lyapunov certificates `𝒜(t)φ ≤ a − cφ` for the two exponential families
//! `φ = e^{δ|x|^β}` and `φ = e^{δ|x−ȳ|²}`.
//!
//! Both families are handled in log space: with `φ = e^ψ`,
//! `𝒜(t)φ / φ = Tr(Q(t)(D²ψ + ∇ψ∇ψᵀ)) + ⟨b(t,x), ∇ψ⟩`, so the audit never
//! has to form `φ` where it overflows.

use std::sync::Arc;

use serde::Serialize;

use super::{AuditGrid, ProblemSpec, MARGIN_TOL};
use crate::error::{Error, Result};
use crate::testfn::{FnMeta, TestFunction};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum LyapunovKind {
    /// `φ(x) = e^{δ|x|^β}`.
    Power { delta: f64, beta: f64 },
    /// `φ(x) = e^{δ|x−ȳ|²}`.
    Gaussian { delta: f64, center: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct LyapunovCertificate {
    pub kind: LyapunovKind,
    pub phi: TestFunction,
    pub a: f64,
    pub c: f64,
    /// `max (𝒜(t)φ + cφ − a)` over the construction grid; `≤ 0` by construction.
    pub audit_worst: f64,
}

#[derive(Debug, Clone, Copy)]
struct LogPhi {
    delta: f64,
    beta: f64,
}

impl LogPhi {
    /// `(ψ, ∇ψ, D²ψ)` at `y = x − ȳ`; `None` where `ψ` is not twice differentiable.
    fn derivatives(&self, y: &[f64]) -> Option<(f64, Vec<f64>, Vec<f64>)> {
        let d = y.len();
        let r2: f64 = y.iter().map(|v| v * v).sum();
        let r = r2.sqrt();
        let (delta, beta) = (self.delta, self.beta);
        let mut grad = vec![0.0; d];
        let mut hess = vec![0.0; d * d];
        if r == 0.0 {
            if beta < 2.0 {
                return None;
            }
            if beta == 2.0 {
                for i in 0..d {
                    hess[i * d + i] = 2.0 * delta;
                }
            }
            return Some((0.0, grad, hess));
        }
        let psi = delta * r.powf(beta);
        let s1 = delta * beta * r.powf(beta - 2.0);
        let s2 = delta * beta * (beta - 2.0) * r.powf(beta - 4.0);
        for i in 0..d {
            grad[i] = s1 * y[i];
            for j in 0..d {
                hess[i * d + j] = s2 * y[i] * y[j] + if i == j { s1 } else { 0.0 };
            }
        }
        Some((psi, grad, hess))
    }
}

fn exp_test_function(log_phi: LogPhi, center: Vec<f64>, label: String) -> TestFunction {
    let d = center.len();
    let center: Arc<[f64]> = center.into();
    let shift = move |c: &[f64], x: &[f64]| -> Vec<f64> { x.iter().zip(c).map(|(a, b)| a - b).collect() };
    let (c1, c2, c3) = (center.clone(), center.clone(), center.clone());
    TestFunction::new(
        d,
        Arc::new(move |x| {
            let y = shift(&c1, x);
            (log_phi.delta * y.iter().map(|v| v * v).sum::<f64>().sqrt().powf(log_phi.beta)).exp()
        }),
        Arc::new(move |x, g| {
            let y = shift(&c2, x);
            let (psi, gr, _) = log_phi.derivatives(&y).unwrap_or((0.0, vec![0.0; d], vec![0.0; d * d]));
            let e = psi.exp();
            for i in 0..d {
                g[i] = e * gr[i];
            }
        }),
        Arc::new(move |x, h| {
            let y = shift(&c3, x);
            let (psi, gr, hs) = log_phi.derivatives(&y).unwrap_or((0.0, vec![0.0; d], vec![f64::NAN; d * d]));
            let e = psi.exp();
            for i in 0..d {
                for j in 0..d {
                    h[i * d + j] = e * (hs[i * d + j] + gr[i] * gr[j]);
                }
            }
        }),
        FnMeta { label, bounded: false, positive_inf: Some(1.0), ..FnMeta::default() },
    )
}

/// Smallest admissible decay constant tried by the line search is `|r₀|/2^40`.
const MAX_HALVINGS: u32 = 40;
/// Points with `|x − ȳ| ≥ OUTER_SHELL·max|x − ȳ|` must satisfy `𝒜φ ≤ −cφ`.
const OUTER_SHELL: f64 = 0.8;

fn certify(spec: &ProblemSpec, grid: &AuditGrid, log_phi: LogPhi, center: Vec<f64>, kind: LyapunovKind) -> Result<LyapunovCertificate> {
    let d = spec.dim;
    let mut rows: Vec<(f64, f64, f64, Vec<f64>)> = Vec::new(); // (ψ, 𝒜φ/φ, |y|, x) per (t, x)
    let mut times = Vec::new();
    for &t in &grid.times {
        spec.check_time(t)?;
        let q = spec.q(t);
        let frozen = spec.drift.freeze(t, d);
        let mut b = vec![0.0; d];
        for x in &grid.points {
            let y: Vec<f64> = x.iter().zip(&center).map(|(a, c)| a - c).collect();
            let Some((psi, g, h)) = log_phi.derivatives(&y) else { continue };
            frozen.eval(x, &mut b);
            let mut ratio = 0.0;
            for i in 0..d {
                for j in 0..d {
                    ratio += q[(i, j)] * (h[j * d + i] + g[j] * g[i]);
                }
                ratio += b[i] * g[i];
            }
            if !ratio.is_finite() {
                return Err(Error::NonFinite { t, x: x.clone(), what: "generator of the Lyapunov function".into() });
            }
            let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            rows.push((psi, ratio, r, x.clone()));
            times.push(t);
        }
    }
    let r_max = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    let shell: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].2 >= OUTER_SHELL * r_max).collect();
    let mut accepted = None;
    for k in 0..=MAX_HALVINGS {
        let c = spec.r0.abs() / 2f64.powi(k as i32);
        if shell.iter().all(|&i| rows[i].1 + c <= 0.0) {
            accepted = Some(c);
            break;
        }
    }
    let Some(c) = accepted else {
        let worst = shell
            .iter()
            .copied()
            .max_by(|&i, &j| rows[i].1.total_cmp(&rows[j].1))
            .ok_or_else(|| Error::Domain("Lyapunov audit grid has no usable points".into()))?;
        return Err(Error::CertificateUnavailable {
            reason: format!("𝒜φ/φ = {} does not become negative on the outer shell", rows[worst].1),
            t: times[worst],
            x: rows[worst].3.clone(),
        });
    };
    let mut a = 0.0_f64;
    for (i, (psi, ratio, _, x)) in rows.iter().enumerate() {
        if ratio + c > 0.0 {
            let v = psi.exp() * (ratio + c);
            if !v.is_finite() {
                return Err(Error::CertificateUnavailable {
                    reason: "𝒜φ + cφ overflows inside the audit region".into(),
                    t: times[i],
                    x: x.clone(),
                });
            }
            a = a.max(v);
        }
    }
    let audit_worst = rows
        .iter()
        .map(|(psi, ratio, _, _)| if ratio + c > 0.0 { psi.exp() * (ratio + c) - a } else { f64::NEG_INFINITY })
        .fold(f64::NEG_INFINITY, f64::max);
    let label = match &kind {
        LyapunovKind::Power { delta, beta } => format!("exp({delta}|x|^{beta})"),
        LyapunovKind::Gaussian { delta, .. } => format!("exp({delta}|x-y|^2)"),
    };
    let phi = exp_test_function(log_phi, center, label);
    check_coercive(&phi, r_max)?;
    Ok(LyapunovCertificate { kind, phi, a, c, audit_worst })
}

/// `φ` must increase along every coordinate ray past radius 1.
fn check_coercive(phi: &TestFunction, r_max: f64) -> Result<()> {
    let d = phi.dim();
    for axis in 0..d {
        for sign in [-1.0, 1.0] {
            let mut prev = f64::NEG_INFINITY;
            for k in 0..=20 {
                let r = 1.0 + (r_max.max(2.0) - 1.0) * k as f64 / 20.0;
                let mut x = vec![0.0; d];
                x[axis] = sign * r;
                let v = phi.value(&x).ln();
                if v <= prev {
                    return Err(Error::CertificateUnavailable { reason: "φ is not coercive".into(), t: f64::NAN, x });
                }
                prev = v;
            }
        }
    }
    Ok(())
}

/// `φ = e^{δ|x|^β}` with `δ = K₁/(2βΛ)`, under `⟨b(t,x), x⟩ ≤ −K₁|x|^β` for `|x| ≥ R`.
pub fn build_lyapunov_power(spec: &ProblemSpec, grid: &AuditGrid, beta: f64, k1: f64, radius: f64) -> Result<LyapunovCertificate> {
    if !(beta > 1.0) || !(k1 > 0.0) || !(radius > 0.0) {
        return Err(Error::Domain(format!("need beta > 1, K1 > 0, R > 0 (got {beta}, {k1}, {radius})")));
    }
    let d = spec.dim;
    for &t in &grid.times {
        spec.check_time(t)?;
        let frozen = spec.drift.freeze(t, d);
        let mut b = vec![0.0; d];
        for x in &grid.points {
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r < radius {
                continue;
            }
            frozen.eval(x, &mut b);
            let inner: f64 = b.iter().zip(x).map(|(a, c)| a * c).sum();
            let bound = -k1 * r.powf(beta);
            if inner > bound + MARGIN_TOL * bound.abs().max(1.0) {
                return Err(Error::CertificateUnavailable {
                    reason: format!("⟨b, x⟩ = {inner} exceeds −K1|x|^β = {bound}"),
                    t,
                    x: x.clone(),
                });
            }
        }
    }
    let delta = 0.5 * k1 / (beta * spec.lambda);
    certify(spec, grid, LogPhi { delta, beta }, vec![0.0; d], LyapunovKind::Power { delta, beta })
}

/// `φ = e^{δ|x−ȳ|²}` with `δ = |r₀|/(4Λ)`, under `sup_t |b(t, ȳ)| ≤ K₂`.
pub fn build_lyapunov_gaussian(spec: &ProblemSpec, grid: &AuditGrid, ybar: &[f64], k2: f64) -> Result<LyapunovCertificate> {
    if ybar.len() != spec.dim {
        return Err(Error::Dimension { expected: spec.dim, got: ybar.len() });
    }
    for &t in &grid.times {
        spec.check_time(t)?;
        let b = spec.b(t, ybar);
        let norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm <= k2 + MARGIN_TOL) {
            return Err(Error::CertificateUnavailable { reason: format!("|b(t, ȳ)| = {norm} exceeds K2 = {k2}"), t, x: ybar.to_vec() });
        }
    }
    let delta = 0.5 * spec.r0.abs() / (2.0 * spec.lambda);
    certify(spec, grid, LogPhi { delta, beta: 2.0 }, ybar.to_vec(), LyapunovKind::Gaussian { delta, center: ybar.to_vec() })
}

impl LyapunovCertificate {
    pub fn delta(&self) -> f64 {
        match &self.kind {
            LyapunovKind::Power { delta, .. } | LyapunovKind::Gaussian { delta, .. } => *delta,
        }
    }

    /// Upper bound `a/c` on `∫φ dμ_t` implied by the certificate.
    pub fn moment_bound(&self) -> f64 {
        self.a / self.c
    }

    /// `max (𝒜(t)φ + cφ − a)` on a grid, in log-safe form.
    pub fn audit(&self, spec: &ProblemSpec, grid: &AuditGrid) -> Result<f64> {
        let mut worst = f64::NEG_INFINITY;
        for &t in &grid.times {
            for x in &grid.points {
                let v = super::apply_generator(spec, t, &self.phi, x)? + self.c * self.phi.value(x) - self.a;
                if v.is_finite() {
                    worst = worst.max(v);
                }
            }
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{MatrixFn, VectorFn};
    use crate::model::{CustomDrift, Drift};

    fn spec_1d(drift: Drift) -> ProblemSpec {
        ProblemSpec::new("t", 1, 0.0, MatrixFn::scalar(1, 1.0), drift, 1.0, 1.0, -1.0).unwrap()
    }

    fn custom(label: &str, b: fn(f64, f64) -> f64, db: fn(f64, f64) -> f64) -> Drift {
        Drift::Custom(CustomDrift {
            label: label.into(),
            value: Arc::new(move |t, x, out| out[0] = b(t, x[0])),
            jacobian: Arc::new(move |t, x, out| out[0] = db(t, x[0])),
        })
    }

    fn grid(spec: &ProblemSpec, radius: f64) -> AuditGrid {
        AuditGrid::new(AuditGrid::log_times(spec.interval_start, 12), AuditGrid::lattice(1, radius, 161))
    }

    /// Independent check of `𝒜φ ≤ a − cφ` using the closed-form generator of
    /// `φ = e^{δ|x|^β}` in one dimension.
    fn oracle_worst(cert: &LyapunovCertificate, b: impl Fn(f64, f64) -> f64, g: &AuditGrid) -> f64 {
        let (delta, beta, ybar) = match &cert.kind {
            LyapunovKind::Power { delta, beta } => (*delta, *beta, 0.0),
            LyapunovKind::Gaussian { delta, center } => (*delta, 2.0, center[0]),
        };
        let mut worst = f64::NEG_INFINITY;
        for &t in &g.times {
            for x in &g.points {
                let y = x[0] - ybar;
                let r = y.abs();
                if r == 0.0 && beta < 2.0 {
                    continue;
                }
                let phi = (delta * r.powf(beta)).exp();
                let d1 = delta * beta * r.powf(beta - 1.0) * y.signum();
                let d2 = if r == 0.0 {
                    if beta == 2.0 {
                        2.0 * delta
                    } else {
                        0.0
                    }
                } else {
                    delta * beta * (beta - 1.0) * r.powf(beta - 2.0)
                };
                let gen = phi * (d2 + d1 * d1) + b(t, x[0]) * phi * d1;
                let v = gen + cert.c * phi - cert.a;
                if v.is_finite() {
                    worst = worst.max(v);
                }
            }
        }
        worst
    }

    #[test]
    fn power_certificate_cubic_drift() {
        // b = −x|x| with ⟨b, x⟩ = −|x|³: β = 3, K₁ = 1, Λ = 1 → δ = 1/6.
        let spec = spec_1d(custom("x|x|", |_, x| -x * x.abs(), |_, x| -2.0 * x.abs() - 1e-9));
        let g = grid(&spec, 6.0);
        let cert = build_lyapunov_power(&spec, &g, 3.0, 1.0, 1.0).unwrap();
        assert!((cert.delta() - 1.0 / 6.0).abs() < 1e-15);
        assert!(cert.c > 0.0 && cert.a >= 0.0);
        assert!(cert.audit_worst <= 0.0);
        assert!(oracle_worst(&cert, |_, x| -x * x.abs(), &g) <= 1e-9 * cert.a.max(1.0));
    }

    #[test]
    fn power_certificate_pure_cubic() {
        let spec = spec_1d(custom("x^3", |_, x| -x * x * x, |_, x| -3.0 * x * x));
        let g = grid(&spec, 4.0);
        let cert = build_lyapunov_power(&spec, &g, 4.0, 1.0, 0.5).unwrap();
        assert!((cert.delta() - 0.125).abs() < 1e-15);
        assert!(oracle_worst(&cert, |_, x| -x * x * x, &g) <= 1e-9 * cert.a.max(1.0));
    }

    #[test]
    fn power_certificate_rejects_expansive_drift() {
        let spec = spec_1d(custom("expansive", |_, x| x, |_, _| 1.0));
        let g = grid(&spec, 5.0);
        match build_lyapunov_power(&spec, &g, 2.0, 1.0, 1.0) {
            Err(Error::CertificateUnavailable { x, .. }) => assert!(x[0].abs() >= 1.0),
            other => panic!("expected witness, got {other:?}"),
        }
    }

    #[test]
    fn gaussian_certificate_ou() {
        let spec = spec_1d(Drift::Affine { a: MatrixFn::scalar(1, -1.0), g: VectorFn::zero(1) });
        let g = grid(&spec, 8.0);
        let cert = build_lyapunov_gaussian(&spec, &g, &[0.0], 0.0).unwrap();
        assert_eq!(cert.delta(), 0.25);
        assert!(cert.c > 0.0);
        assert!(oracle_worst(&cert, |_, x| -x, &g) <= 1e-9 * cert.a.max(1.0));
        assert!(cert.audit(&spec, &g).unwrap() <= 1e-9 * cert.a.max(1.0));
    }

    #[test]
    fn gaussian_certificate_forced_ou() {
        let spec = spec_1d(custom("forced", |t, x| -x + t.sin(), |_, _| -1.0));
        let g = grid(&spec, 8.0);
        let cert = build_lyapunov_gaussian(&spec, &g, &[0.0], 1.0).unwrap();
        assert_eq!(cert.delta(), 0.25);
        assert!(oracle_worst(&cert, |t, x| -x + t.sin(), &g) <= 1e-9 * cert.a.max(1.0));
    }

    #[test]
    fn gaussian_certificate_precondition() {
        let spec = spec_1d(custom("shifted", |_, x| -x + 1.0, |_, _| -1.0));
        let g = grid(&spec, 8.0);
        assert!(matches!(build_lyapunov_gaussian(&spec, &g, &[0.0], 0.0), Err(Error::CertificateUnavailable { .. })));
    }
}
