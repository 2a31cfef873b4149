//! Scalar test functions with analytic gradient and Hessian.
//!
//! Every function carries [`FnMeta`] describing the regularity class it belongs
//! to; the engines use it to refuse integrands they cannot handle (unbounded
//! functions without a moment certificate, non-flat functions in the mean-flow
//! identity, and so on).

use std::fmt;
use std::sync::Arc;

use rand::Rng;

pub type ValueFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type FillFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Regularity metadata.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FnMeta {
    pub label: String,
    pub bounded: bool,
    /// `Some(R)`: the function is constant outside the ball `B(0, R)`.
    pub compact_support: Option<f64>,
    /// `Some(m)` with `m > 0`: `inf f ≥ m`.
    pub positive_inf: Option<f64>,
    pub sup_norm: Option<f64>,
    pub grad_sup_norm: Option<f64>,
}

#[derive(Clone)]
pub struct TestFunction {
    dim: usize,
    value: ValueFn,
    gradient: FillFn,
    hessian: FillFn,
    meta: FnMeta,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction").field("dim", &self.dim).field("meta", &self.meta).finish()
    }
}

impl TestFunction {
    pub fn new(dim: usize, value: ValueFn, gradient: FillFn, hessian: FillFn, meta: FnMeta) -> Self {
        Self { dim, value, gradient, hessian, meta }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn meta(&self) -> &FnMeta {
        &self.meta
    }

    pub fn label(&self) -> &str {
        &self.meta.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.meta.label = label.into();
        self
    }

    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    #[inline]
    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        (self.gradient)(x, out)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        self.gradient_into(x, &mut g);
        g
    }

    /// Row-major `d×d` Hessian.
    #[inline]
    pub fn hessian_into(&self, x: &[f64], out: &mut [f64]) {
        (self.hessian)(x, out)
    }

    pub fn hessian(&self, x: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; self.dim * self.dim];
        self.hessian_into(x, &mut h);
        h
    }

    pub fn grad_norm(&self, x: &[f64]) -> f64 {
        self.gradient(x).iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    /// `f ≡ c`.
    pub fn constant(dim: usize, c: f64) -> Self {
        Self::new(
            dim,
            Arc::new(move |_| c),
            Arc::new(|_, g| g.fill(0.0)),
            Arc::new(|_, h| h.fill(0.0)),
            FnMeta {
                label: format!("const({c})"),
                bounded: true,
                compact_support: Some(0.0),
                positive_inf: (c > 0.0).then_some(c),
                sup_norm: Some(c.abs()),
                grad_sup_norm: Some(0.0),
            },
        )
    }

    /// `f(x) = xᵀMx + ⟨v, x⟩ + c` with `M` row-major (symmetrised internally).
    pub fn quadratic(m: &[f64], v: &[f64], c: f64) -> Self {
        let d = v.len();
        assert_eq!(m.len(), d * d, "quadratic form must be d×d");
        let mut sym = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                sym[i * d + j] = 0.5 * (m[i * d + j] + m[j * d + i]);
            }
        }
        let sym: Arc<[f64]> = sym.into();
        let v: Arc<[f64]> = v.into();
        let (s1, v1) = (sym.clone(), v.clone());
        let (s2, v2) = (sym.clone(), v.clone());
        let is_affine = sym.iter().all(|x| *x == 0.0);
        let grad_sup = if is_affine { Some(v.iter().map(|x| x * x).sum::<f64>().sqrt()) } else { None };
        Self::new(
            d,
            Arc::new(move |x| {
                let mut acc = c;
                for i in 0..d {
                    acc += v1[i] * x[i];
                    for j in 0..d {
                        acc += x[i] * s1[i * d + j] * x[j];
                    }
                }
                acc
            }),
            Arc::new(move |x, g| {
                for i in 0..d {
                    g[i] = v2[i] + 2.0 * (0..d).map(|j| s2[i * d + j] * x[j]).sum::<f64>();
                }
            }),
            Arc::new(move |_, h| {
                for (hi, si) in h.iter_mut().zip(sym.iter()) {
                    *hi = 2.0 * si;
                }
            }),
            FnMeta { label: "quadratic".into(), bounded: false, grad_sup_norm: grad_sup, ..FnMeta::default() },
        )
    }

    /// `f(x) = ⟨v, x⟩ + c`.
    pub fn linear(v: &[f64], c: f64) -> Self {
        let d = v.len();
        Self::quadratic(&vec![0.0; d * d], v, c).with_label("linear")
    }

    /// `f(x) = |x|²`.
    pub fn squared_norm(dim: usize) -> Self {
        let mut m = vec![0.0; dim * dim];
        for i in 0..dim {
            m[i * dim + i] = 1.0;
        }
        Self::quadratic(&m, &vec![0.0; dim], 0.0).with_label("squared_norm")
    }

    /// Smooth compactly supported bump `base + height·ψ(|x−c|²/r²)` with
    /// `ψ(u) = exp(1 − 1/(1−u))` on `u < 1`, zero elsewhere. `ψ(0) = 1`.
    pub fn bump(center: &[f64], radius: f64, height: f64, base: f64) -> Self {
        let d = center.len();
        let c: Arc<[f64]> = center.into();
        let (c1, c2, c3) = (c.clone(), c.clone(), c.clone());
        let r2 = radius * radius;
        let psi = move |u: f64| -> (f64, f64, f64) {
            if u >= 1.0 {
                return (0.0, 0.0, 0.0);
            }
            let w = 1.0 / (1.0 - u);
            let p = (1.0 - w).exp();
            (p, -p * w * w, p * (w.powi(4) - 2.0 * w.powi(3)))
        };
        let u_of = move |c: &[f64], x: &[f64]| -> f64 { x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / r2 };
        let reach = c.iter().map(|x| x * x).sum::<f64>().sqrt() + radius;
        // max |∇| of ψ(|y|²) on the unit ball, evaluated numerically once.
        let grad_sup = (0..=2000)
            .map(|k| {
                let y = k as f64 / 2000.0;
                let (_, dp, _) = psi(y * y);
                (dp * 2.0 * y).abs()
            })
            .fold(0.0, f64::max)
            * height.abs()
            / radius;
        Self::new(
            d,
            Arc::new(move |x| base + height * psi(u_of(&c1, x)).0),
            Arc::new(move |x, g| {
                let (_, dp, _) = psi(u_of(&c2, x));
                for i in 0..d {
                    g[i] = height * dp * 2.0 * (x[i] - c2[i]) / r2;
                }
            }),
            Arc::new(move |x, h| {
                let (_, dp, ddp) = psi(u_of(&c3, x));
                for i in 0..d {
                    for j in 0..d {
                        let yi = x[i] - c3[i];
                        let yj = x[j] - c3[j];
                        let mut v = height * ddp * 4.0 * yi * yj / (r2 * r2);
                        if i == j {
                            v += height * dp * 2.0 / r2;
                        }
                        h[i * d + j] = v;
                    }
                }
            }),
            FnMeta {
                label: format!("bump(r={radius},h={height},b={base})"),
                bounded: true,
                compact_support: Some(reach),
                positive_inf: (base > 0.0 && base + height.min(0.0) > 0.0).then_some(base + height.min(0.0)),
                sup_norm: Some(base.abs() + height.abs()),
                grad_sup_norm: Some(grad_sup),
            },
        )
    }

    /// `base + height·exp(−|x−c|²/(2w²))`.
    pub fn gaussian_bump(center: &[f64], width: f64, height: f64, base: f64) -> Self {
        let d = center.len();
        let c: Arc<[f64]> = center.into();
        let (c1, c2, c3) = (c.clone(), c.clone(), c.clone());
        let w2 = width * width;
        let e = move |c: &[f64], x: &[f64]| (-x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / (2.0 * w2)).exp();
        Self::new(
            d,
            Arc::new(move |x| base + height * e(&c1, x)),
            Arc::new(move |x, g| {
                let v = height * e(&c2, x);
                for i in 0..d {
                    g[i] = -v * (x[i] - c2[i]) / w2;
                }
            }),
            Arc::new(move |x, h| {
                let v = height * e(&c3, x);
                for i in 0..d {
                    for j in 0..d {
                        let yi = x[i] - c3[i];
                        let yj = x[j] - c3[j];
                        h[i * d + j] = v * (yi * yj / (w2 * w2) - if i == j { 1.0 / w2 } else { 0.0 });
                    }
                }
            }),
            FnMeta {
                label: format!("gauss_bump(w={width},h={height},b={base})"),
                bounded: true,
                compact_support: None,
                positive_inf: (base > 0.0 && base + height.min(0.0) > 0.0).then_some(base + height.min(0.0)),
                sup_norm: Some(base.abs() + height.abs()),
                grad_sup_norm: Some(height.abs() / width * (-0.5_f64).exp()),
            },
        )
    }

    /// `base + amp·sin(⟨k, x⟩ + phase)`.
    pub fn trig(base: f64, amp: f64, k: &[f64], phase: f64) -> Self {
        let d = k.len();
        let k: Arc<[f64]> = k.into();
        let (k1, k2, k3) = (k.clone(), k.clone(), k.clone());
        let arg = move |k: &[f64], x: &[f64]| x.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() + phase;
        let knorm = k.iter().map(|x| x * x).sum::<f64>().sqrt();
        Self::new(
            d,
            Arc::new(move |x| base + amp * arg(&k1, x).sin()),
            Arc::new(move |x, g| {
                let c = amp * arg(&k2, x).cos();
                for i in 0..d {
                    g[i] = c * k2[i];
                }
            }),
            Arc::new(move |x, h| {
                let s = -amp * arg(&k3, x).sin();
                for i in 0..d {
                    for j in 0..d {
                        h[i * d + j] = s * k3[i] * k3[j];
                    }
                }
            }),
            FnMeta {
                label: format!("trig(base={base},amp={amp})"),
                bounded: true,
                compact_support: None,
                positive_inf: (base - amp.abs() > 0.0).then_some(base - amp.abs()),
                sup_norm: Some(base.abs() + amp.abs()),
                grad_sup_norm: Some(amp.abs() * knorm),
            },
        )
    }

    /// `tanh((x_i − center)/scale)`.
    pub fn tanh_coord(dim: usize, axis: usize, scale: f64, center: f64) -> Self {
        let mut w = vec![0.0; dim];
        w[axis] = 1.0 / scale;
        Self::tanh_sum(1.0, &[(1.0, w, -center / scale)], 0.0).with_label(format!("tanh(x{axis})"))
    }

    /// `base + Σ a_k tanh(⟨w_k, x⟩ + b_k)`.
    pub fn tanh_sum(scale_out: f64, terms: &[(f64, Vec<f64>, f64)], base: f64) -> Self {
        let d = terms.first().map_or(1, |t| t.1.len());
        let terms: Arc<[(f64, Vec<f64>, f64)]> = terms.iter().map(|(a, w, b)| (a * scale_out, w.clone(), *b)).collect();
        let (t1, t2, t3) = (terms.clone(), terms.clone(), terms.clone());
        let arg = |w: &[f64], b: f64, x: &[f64]| x.iter().zip(w).map(|(a, c)| a * c).sum::<f64>() + b;
        let amp: f64 = terms.iter().map(|t| t.0.abs()).sum();
        let gsup: f64 = terms.iter().map(|t| t.0.abs() * t.1.iter().map(|x| x * x).sum::<f64>().sqrt()).sum();
        Self::new(
            d,
            Arc::new(move |x| base + t1.iter().map(|(a, w, b)| a * arg(w, *b, x).tanh()).sum::<f64>()),
            Arc::new(move |x, g| {
                g.fill(0.0);
                for (a, w, b) in t2.iter() {
                    let th = arg(w, *b, x).tanh();
                    let s = a * (1.0 - th * th);
                    for i in 0..d {
                        g[i] += s * w[i];
                    }
                }
            }),
            Arc::new(move |x, h| {
                h.fill(0.0);
                for (a, w, b) in t3.iter() {
                    let th = arg(w, *b, x).tanh();
                    let s = -2.0 * a * th * (1.0 - th * th);
                    for i in 0..d {
                        for j in 0..d {
                            h[i * d + j] += s * w[i] * w[j];
                        }
                    }
                }
            }),
            FnMeta {
                label: "tanh_sum".into(),
                bounded: true,
                compact_support: None,
                positive_inf: (base - amp > 0.0).then_some(base - amp),
                sup_norm: Some(base.abs() + amp),
                grad_sup_norm: Some(gsup),
            },
        )
    }

    /// Smooth saturation `R·tanh(f/R)`: agrees with `f` where `|f| ≪ R` and is
    /// bounded by `R`.
    pub fn saturate(inner: &TestFunction, radius: f64) -> Self {
        let d = inner.dim;
        let (f1, f2, f3) = (inner.clone(), inner.clone(), inner.clone());
        Self::new(
            d,
            Arc::new(move |x| radius * (f1.value(x) / radius).tanh()),
            Arc::new(move |x, g| {
                let th = (f2.value(x) / radius).tanh();
                f2.gradient_into(x, g);
                for gi in g.iter_mut() {
                    *gi *= 1.0 - th * th;
                }
            }),
            Arc::new(move |x, h| {
                let th = (f3.value(x) / radius).tanh();
                let sech2 = 1.0 - th * th;
                let g = f3.gradient(x);
                f3.hessian_into(x, h);
                for i in 0..d {
                    for j in 0..d {
                        h[i * d + j] = sech2 * h[i * d + j] - 2.0 / radius * th * sech2 * g[i] * g[j];
                    }
                }
            }),
            FnMeta {
                label: format!("sat({},R={radius})", inner.meta.label),
                bounded: true,
                compact_support: None,
                positive_inf: None,
                sup_norm: Some(radius),
                grad_sup_norm: None,
            },
        )
    }

    /// `exp(slope·R·tanh(⟨e, x⟩/R))`: the exponential `e^{slope·⟨e,x⟩}` with its
    /// exponent smoothly saturated at `|⟨e,x⟩| ≈ R`.
    pub fn saturated_exp(direction: &[f64], slope: f64, radius: f64) -> Self {
        let lin = TestFunction::linear(direction, 0.0);
        let inner = TestFunction::saturate(&lin, radius);
        let d = direction.len();
        let (i1, i2, i3) = (inner.clone(), inner.clone(), inner.clone());
        Self::new(
            d,
            Arc::new(move |x| (slope * i1.value(x)).exp()),
            Arc::new(move |x, g| {
                let v = (slope * i2.value(x)).exp();
                i2.gradient_into(x, g);
                for gi in g.iter_mut() {
                    *gi *= slope * v;
                }
            }),
            Arc::new(move |x, h| {
                let v = (slope * i3.value(x)).exp();
                let g = i3.gradient(x);
                i3.hessian_into(x, h);
                for i in 0..d {
                    for j in 0..d {
                        h[i * d + j] = v * (slope * h[i * d + j] + slope * slope * g[i] * g[j]);
                    }
                }
            }),
            FnMeta {
                label: format!("sat_exp(a={slope},R={radius})"),
                bounded: true,
                compact_support: None,
                positive_inf: Some((-slope.abs() * radius).exp()),
                sup_norm: Some((slope.abs() * radius).exp()),
                grad_sup_norm: None,
            },
        )
    }

    /// `Σ α_k f_k`.
    pub fn combination(parts: &[(f64, TestFunction)]) -> Self {
        assert!(!parts.is_empty());
        let d = parts[0].1.dim;
        let parts: Arc<[(f64, TestFunction)]> = parts.into();
        let (p1, p2, p3) = (parts.clone(), parts.clone(), parts.clone());
        let bounded = parts.iter().all(|(_, f)| f.meta.bounded);
        let support = parts.iter().map(|(_, f)| f.meta.compact_support).try_fold(0.0_f64, |acc, r| r.map(|r| acc.max(r)));
        Self::new(
            d,
            Arc::new(move |x| p1.iter().map(|(a, f)| a * f.value(x)).sum()),
            Arc::new(move |x, g| {
                g.fill(0.0);
                let mut tmp = vec![0.0; d];
                for (a, f) in p2.iter() {
                    f.gradient_into(x, &mut tmp);
                    for i in 0..d {
                        g[i] += a * tmp[i];
                    }
                }
            }),
            Arc::new(move |x, h| {
                h.fill(0.0);
                let mut tmp = vec![0.0; d * d];
                for (a, f) in p3.iter() {
                    f.hessian_into(x, &mut tmp);
                    for i in 0..d * d {
                        h[i] += a * tmp[i];
                    }
                }
            }),
            FnMeta {
                label: "combination".into(),
                bounded,
                compact_support: support,
                positive_inf: None,
                sup_norm: if bounded { parts.iter().map(|(a, f)| f.meta.sup_norm.map(|s| a.abs() * s)).sum() } else { None },
                grad_sup_norm: parts.iter().map(|(a, f)| f.meta.grad_sup_norm.map(|s| a.abs() * s)).sum(),
            },
        )
    }

    /// A random bounded `C¹_b` function with positive infimum ≥ 1/2:
    /// a constant plus tanh ridges and one sinusoid with random directions.
    pub fn random_c1b<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let mut terms = Vec::new();
        for _ in 0..3 {
            let a: f64 = rng.random_range(-0.8..0.8);
            let w: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            let b: f64 = rng.random_range(-1.5..1.5);
            terms.push((a, w, b));
        }
        let amp: f64 = rng.random_range(0.0..0.6);
        let k: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let spread: f64 = terms.iter().map(|t| t.0.abs()).sum::<f64>() + amp;
        let base = 0.5 + spread * rng.random_range(1.0..2.0);
        let ridges = TestFunction::tanh_sum(1.0, &terms, base);
        let wave = TestFunction::trig(0.0, amp, &k, phase);
        let mut f = TestFunction::combination(&[(1.0, ridges), (1.0, wave)]);
        f.meta.positive_inf = Some(base - spread);
        f.meta.label = "random_c1b".into();
        f
    }
}

/// Largest relative mismatch between the analytic gradient and central
/// differences with step `h`, over the given points.
pub fn gradient_fd_mismatch(f: &TestFunction, points: &[Vec<f64>], h: f64) -> f64 {
    let d = f.dim();
    let mut worst = 0.0_f64;
    for x in points {
        let g = f.gradient(x);
        let mut xp = x.clone();
        for i in 0..d {
            xp[i] = x[i] + h;
            let fp = f.value(&xp);
            xp[i] = x[i] - h;
            let fm = f.value(&xp);
            xp[i] = x[i];
            let fd = (fp - fm) / (2.0 * h);
            let scale = g[i].abs().max(fd.abs()).max(1.0);
            worst = worst.max((fd - g[i]).abs() / scale);
        }
    }
    worst
}
