//! Quadrature: globally adaptive Gauss–Kronrod (7/15) for vector-valued
//! integrands, and Gauss–Hermite rules for Gaussian expectations.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::sym_sqrt_psd;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_3,
    0.949_107_912_342_758_524_526_189_684_047_9,
    0.864_864_423_359_769_072_789_712_788_640_9,
    0.741_531_185_599_394_439_863_864_773_280_8,
    0.586_087_235_467_691_130_294_144_845_693_0,
    0.405_845_151_377_397_166_906_606_412_076_96,
    0.207_784_955_007_898_467_600_689_403_773_24,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_97,
    0.063_092_092_629_978_553_290_700_663_189_20,
    0.104_790_010_322_250_183_839_876_322_541_52,
    0.140_653_259_715_525_918_745_189_590_510_24,
    0.169_004_726_639_267_902_826_583_426_598_55,
    0.190_350_578_064_785_409_913_256_402_421_01,
    0.204_432_940_075_298_892_414_161_999_234_65,
    0.209_482_141_084_727_828_012_999_174_891_71,
];
// Gauss weights for the odd Kronrod abscissae XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_08,
    0.279_705_391_489_276_667_901_467_771_423_78,
    0.381_830_050_505_118_944_950_369_775_488_98,
    0.417_959_183_673_469_387_755_102_040_816_33,
];

struct Panel {
    a: f64,
    b: f64,
    value: Vec<f64>,
    err: f64,
}

fn gk15<F: FnMut(f64, &mut [f64])>(f: &mut F, a: f64, b: f64, n: usize, buf: &mut [f64]) -> Panel {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kron = vec![0.0; n];
    let mut gauss = vec![0.0; n];
    f(c, buf);
    for k in 0..n {
        kron[k] = WGK[7] * buf[k];
        gauss[k] = WG[3] * buf[k];
    }
    for j in 0..7 {
        let dx = h * XGK[j];
        for x in [c - dx, c + dx] {
            f(x, buf);
            for k in 0..n {
                kron[k] += WGK[j] * buf[k];
                if j % 2 == 1 {
                    gauss[k] += WG[j / 2] * buf[k];
                }
            }
        }
    }
    let mut err = 0.0_f64;
    for k in 0..n {
        kron[k] *= h;
        gauss[k] *= h;
        err = err.max((kron[k] - gauss[k]).abs());
    }
    Panel { a, b, value: kron, err }
}

/// Integrates the `n`-component integrand `f(x, out)` over `[a, b]` until the
/// summed panel error (max over components) drops below `tol`.
pub fn integrate_vec<F>(mut f: F, a: f64, b: f64, n: usize, tol: f64, max_panels: usize) -> Result<(Vec<f64>, f64)>
where
    F: FnMut(f64, &mut [f64]),
{
    let mut buf = vec![0.0; n];
    if a == b {
        return Ok((vec![0.0; n], 0.0));
    }
    let mut panels = vec![gk15(&mut f, a, b, n, &mut buf)];
    loop {
        let total_err: f64 = panels.iter().map(|p| p.err).sum();
        if total_err <= tol || panels.len() >= max_panels {
            let mut value = vec![0.0; n];
            for p in &panels {
                for k in 0..n {
                    value[k] += p.value[k];
                }
            }
            if total_err > tol {
                return Err(Error::Quadrature { tol, err: total_err });
            }
            return Ok((value, total_err));
        }
        let (worst, _) = panels.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, p)| if p.err > acc.1 { (i, p.err) } else { acc });
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        panels.push(gk15(&mut f, p.a, mid, n, &mut buf));
        panels.push(gk15(&mut f, mid, p.b, n, &mut buf));
    }
}

/// Scalar convenience wrapper around [`integrate_vec`].
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    integrate_vec(|x, out| out[0] = f(x), a, b, 1, tol, 4000).map(|(v, _)| v[0])
}

/// Gauss–Hermite rule for the weight `e^{−x²}` (physicists' convention).
pub fn hermite_rule(n: usize) -> Arc<(Vec<f64>, Vec<f64>)> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<(Vec<f64>, Vec<f64>)>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("hermite cache poisoned");
    guard.entry(n).or_insert_with(|| Arc::new(hermite_newton(n))).clone()
}

fn hermite_newton(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0_f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[m - 1] = 0.0;
    }
    (x, w)
}

/// Weighted point set `Σ w_i δ_{x_i}`; points are stored flat, `dim` values each.
#[derive(Debug, Clone, PartialEq)]
pub struct Nodes {
    pub dim: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Nodes {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn integrate<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        let terms: Vec<f64> = (0..self.len()).map(|i| self.weights[i] * f(self.point(i))).collect();
        crate::linalg::pairwise_sum(&terms)
    }
}

/// Tensor Gauss–Hermite nodes for `N(mean, cov)` with `order` points per
/// dimension. A singular covariance yields degenerate (repeated) nodes.
pub fn gaussian_nodes(mean: &DVector<f64>, cov: &DMatrix<f64>, order: usize) -> Nodes {
    let root = sym_sqrt_psd(cov);
    gaussian_nodes_with_root(mean, &root, order)
}

pub fn gaussian_nodes_with_root(mean: &DVector<f64>, root: &DMatrix<f64>, order: usize) -> Nodes {
    let d = mean.len();
    let rule = hermite_rule(order);
    let (xs, ws) = (&rule.0, &rule.1);
    let total = order.pow(d as u32);
    let norm = std::f64::consts::PI.powf(-0.5 * d as f64);
    let mut points = Vec::with_capacity(total * d);
    let mut weights = Vec::with_capacity(total);
    let mut idx = vec![0usize; d];
    let mut z = vec![0.0; d];
    for _ in 0..total {
        let mut w = norm;
        for k in 0..d {
            z[k] = std::f64::consts::SQRT_2 * xs[idx[k]];
            w *= ws[idx[k]];
        }
        for i in 0..d {
            let mut v = mean[i];
            for k in 0..d {
                v += root[(i, k)] * z[k];
            }
            points.push(v);
        }
        weights.push(w);
        for k in (0..d).rev() {
            idx[k] += 1;
            if idx[k] < order {
                break;
            }
            idx[k] = 0;
        }
    }
    Nodes { dim: d, points, weights }
}

/// Composite 15-point Kronrod rule for `N(mean, sd²)` on `mean ± half_width·sd`
/// split into `panels` equal pieces; weights include the density.
pub fn gaussian_panel_nodes(mean: f64, sd: f64, panels: usize, half_width: f64) -> Nodes {
    let lo = mean - half_width * sd;
    let h = 2.0 * half_width * sd / panels as f64;
    let norm = 1.0 / (sd * (2.0 * std::f64::consts::PI).sqrt());
    let mut points = Vec::with_capacity(panels * 15);
    let mut weights = Vec::with_capacity(panels * 15);
    let mut push = |x: f64, w: f64| {
        let z = (x - mean) / sd;
        points.push(x);
        weights.push(w * norm * (-0.5 * z * z).exp());
    };
    for p in 0..panels {
        let c = lo + (p as f64 + 0.5) * h;
        let half = 0.5 * h;
        for j in 0..7 {
            push(c - half * XGK[j], half * WGK[j]);
            push(c + half * XGK[j], half * WGK[j]);
        }
        push(c, half * WGK[7]);
    }
    Nodes { dim: 1, points, weights }
}

/// `E f(X)`, `X ~ N(mean, sd²)` in one dimension, by adaptive Gauss–Kronrod on
/// `mean ± 14·sd` (the neglected tail has mass below 1e−44).
pub fn gaussian_expect_1d<F: FnMut(f64) -> f64>(mean: f64, sd: f64, mut f: F, tol: f64) -> Result<f64> {
    if sd == 0.0 {
        return Ok(f(mean));
    }
    let norm = 1.0 / (sd * (2.0 * std::f64::consts::PI).sqrt());
    // Split at the mean so peaked integrands are resolved from the first pass.
    let g = |x: f64, f: &mut F| {
        let z = (x - mean) / sd;
        f(x) * norm * (-0.5 * z * z).exp()
    };
    let mut f = f;
    let left = integrate(|x| g(x, &mut f), mean - 14.0 * sd, mean, 0.5 * tol)?;
    let right = integrate(|x| g(x, &mut f), mean, mean + 14.0 * sd, 0.5 * tol)?;
    Ok(left + right)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gk_integrates_exponential_tail() {
        let v = integrate(|x| (-x).exp(), 0.0, 40.0, 1e-12).unwrap();
        assert!((v - (1.0 - (-40.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn gk_handles_oscillation() {
        let v = integrate(|x| (10.0 * x).sin() * x, 0.0, 3.0, 1e-11).unwrap();
        let exact = (30.0f64).sin() / 100.0 - 3.0 * (30.0f64).cos() / 10.0;
        assert!((v - exact).abs() < 1e-10);
    }

    #[test]
    fn hermite_moments() {
        let sqrt_pi = std::f64::consts::PI.sqrt();
        for n in [1usize, 2, 5, 16, 64, 128] {
            let r = hermite_rule(n);
            let m0: f64 = r.1.iter().sum();
            assert!((m0 - sqrt_pi).abs() < 1e-12, "n={n}: {m0}");
            if n >= 2 {
                let m2: f64 = r.0.iter().zip(&r.1).map(|(x, w)| w * x * x).sum();
                assert!((m2 - sqrt_pi / 2.0).abs() < 1e-12, "n={n}");
            }
            if n >= 3 {
                let m4: f64 = r.0.iter().zip(&r.1).map(|(x, w)| w * x.powi(4)).sum();
                assert!((m4 - 3.0 * sqrt_pi / 4.0).abs() < 1e-11, "n={n}");
            }
        }
    }

    #[test]
    fn tensor_nodes_reproduce_covariance() {
        let mean = DVector::from_vec(vec![1.0, -2.0]);
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.5]);
        let nodes = gaussian_nodes(&mean, &cov, 8);
        for i in 0..2 {
            assert!((nodes.integrate(|x| x[i]) - mean[i]).abs() < 1e-12);
            for j in 0..2 {
                let c = nodes.integrate(|x| (x[i] - mean[i]) * (x[j] - mean[j]));
                assert!((c - cov[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn adaptive_gaussian_expectation_of_cosine() {
        // E cos(X) = e^{−σ²/2} cos(μ).
        let v = gaussian_expect_1d(0.4, 1.3, f64::cos, 1e-13).unwrap();
        assert!((v - (-0.5 * 1.69f64).exp() * 0.4f64.cos()).abs() < 1e-12);
    }
}
