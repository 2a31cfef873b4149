//! Parametric time-dependent coefficients: constant, trigonometric polynomial,
//! and exponentially convergent forms.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// `d×d` matrix-valued function of time (row-major storage).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum MatrixFn {
    Constant {
        dim: usize,
        value: Vec<f64>,
    },
    /// `C₀ + Σ_k (C_k cos(kωt) + S_k sin(kωt))`, harmonics `k = 1..`.
    Trig {
        dim: usize,
        freq: f64,
        constant: Vec<f64>,
        cos: Vec<Vec<f64>>,
        sin: Vec<Vec<f64>>,
    },
    /// `L + T·e^{−λt}`.
    ExpConvergent {
        dim: usize,
        limit: Vec<f64>,
        transient: Vec<f64>,
        rate: f64,
    },
    /// `F(t)F(t)*/2`, the diffusion matrix generated by a noise factor `F`.
    HalfGram {
        factor: Box<MatrixFn>,
    },
}

/// Vector-valued function of time, same forms as [`MatrixFn`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum VectorFn {
    Constant { value: Vec<f64> },
    Trig { freq: f64, constant: Vec<f64>, cos: Vec<Vec<f64>>, sin: Vec<Vec<f64>> },
    ExpConvergent { limit: Vec<f64>, transient: Vec<f64>, rate: f64 },
}

fn identity_scaled(d: usize, c: f64) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        m[i * d + i] = c;
    }
    m
}

fn trig_into(t: f64, freq: f64, constant: &[f64], cos: &[Vec<f64>], sin: &[Vec<f64>], out: &mut [f64]) {
    out.copy_from_slice(constant);
    for (k, c) in cos.iter().enumerate() {
        let w = ((k + 1) as f64 * freq * t).cos();
        for (o, ci) in out.iter_mut().zip(c) {
            *o += ci * w;
        }
    }
    for (k, s) in sin.iter().enumerate() {
        let w = ((k + 1) as f64 * freq * t).sin();
        for (o, si) in out.iter_mut().zip(s) {
            *o += si * w;
        }
    }
}

impl MatrixFn {
    pub fn constant(dim: usize, value: Vec<f64>) -> Self {
        assert_eq!(value.len(), dim * dim);
        MatrixFn::Constant { dim, value }
    }

    /// `c·I`.
    pub fn scalar(dim: usize, c: f64) -> Self {
        MatrixFn::Constant { dim, value: identity_scaled(dim, c) }
    }

    /// `(c₀ + a·sin(ωt))·I`.
    pub fn scalar_periodic(dim: usize, c0: f64, amp: f64, freq: f64) -> Self {
        MatrixFn::Trig {
            dim,
            freq,
            constant: identity_scaled(dim, c0),
            cos: vec![vec![0.0; dim * dim]],
            sin: vec![identity_scaled(dim, amp)],
        }
    }

    /// `(ℓ + τ·e^{−λt})·I`.
    pub fn scalar_convergent(dim: usize, limit: f64, transient: f64, rate: f64) -> Self {
        MatrixFn::ExpConvergent { dim, limit: identity_scaled(dim, limit), transient: identity_scaled(dim, transient), rate }
    }

    pub fn dim(&self) -> usize {
        match self {
            MatrixFn::Constant { dim, .. } | MatrixFn::Trig { dim, .. } | MatrixFn::ExpConvergent { dim, .. } => *dim,
            MatrixFn::HalfGram { factor } => factor.dim(),
        }
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        match self {
            MatrixFn::Constant { value, .. } => out.copy_from_slice(value),
            MatrixFn::Trig { freq, constant, cos, sin, .. } => trig_into(t, *freq, constant, cos, sin, out),
            MatrixFn::ExpConvergent { limit, transient, rate, .. } => {
                let e = (-rate * t).exp();
                for ((o, l), tr) in out.iter_mut().zip(limit).zip(transient) {
                    *o = l + tr * e;
                }
            }
            MatrixFn::HalfGram { factor } => {
                let d = factor.dim();
                let mut f = vec![0.0; d * d];
                factor.eval_into(t, &mut f);
                for i in 0..d {
                    for j in 0..d {
                        out[i * d + j] = 0.5 * (0..d).map(|k| f[i * d + k] * f[j * d + k]).sum::<f64>();
                    }
                }
            }
        }
    }

    /// `F(t)F(t)*/2` for this matrix taken as a noise factor.
    pub fn half_gram(&self) -> MatrixFn {
        MatrixFn::HalfGram { factor: Box::new(self.clone()) }
    }

    pub fn eval(&self, t: f64) -> DMatrix<f64> {
        let d = self.dim();
        let mut buf = vec![0.0; d * d];
        self.eval_into(t, &mut buf);
        DMatrix::from_row_slice(d, d, &buf)
    }

    /// Limit as `t → +∞` when it exists (constant or convergent forms).
    pub fn limit(&self) -> Option<DMatrix<f64>> {
        let d = self.dim();
        match self {
            MatrixFn::Constant { value, .. } => Some(DMatrix::from_row_slice(d, d, value)),
            MatrixFn::ExpConvergent { limit, rate, .. } if *rate > 0.0 => Some(DMatrix::from_row_slice(d, d, limit)),
            MatrixFn::HalfGram { factor } => factor.limit().map(|f| &f * f.transpose() * 0.5),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let d = self.dim();
        let n = d * d;
        let ok = match self {
            MatrixFn::Constant { value, .. } => value.len() == n,
            MatrixFn::Trig { constant, cos, sin, .. } => constant.len() == n && cos.iter().chain(sin).all(|c| c.len() == n),
            MatrixFn::ExpConvergent { limit, transient, .. } => limit.len() == n && transient.len() == n,
            MatrixFn::HalfGram { factor } => return factor.validate(),
        };
        if d == 0 || !ok {
            return Err(format!("matrix coefficient entries must have {d}×{d} values"));
        }
        Ok(())
    }
}

impl VectorFn {
    pub fn zero(dim: usize) -> Self {
        VectorFn::Constant { value: vec![0.0; dim] }
    }

    pub fn constant(value: Vec<f64>) -> Self {
        VectorFn::Constant { value }
    }

    pub fn dim(&self) -> usize {
        match self {
            VectorFn::Constant { value } => value.len(),
            VectorFn::Trig { constant, .. } => constant.len(),
            VectorFn::ExpConvergent { limit, .. } => limit.len(),
        }
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        match self {
            VectorFn::Constant { value } => out.copy_from_slice(value),
            VectorFn::Trig { freq, constant, cos, sin } => trig_into(t, *freq, constant, cos, sin, out),
            VectorFn::ExpConvergent { limit, transient, rate } => {
                let e = (-rate * t).exp();
                for ((o, l), tr) in out.iter_mut().zip(limit).zip(transient) {
                    *o = l + tr * e;
                }
            }
        }
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        let mut buf = vec![0.0; self.dim()];
        self.eval_into(t, &mut buf);
        DVector::from_vec(buf)
    }

    pub fn limit(&self) -> Option<DVector<f64>> {
        match self {
            VectorFn::Constant { value } => Some(DVector::from_vec(value.clone())),
            VectorFn::ExpConvergent { limit, rate, .. } if *rate > 0.0 => Some(DVector::from_vec(limit.clone())),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, VectorFn::Constant { value } if value.iter().all(|v| *v == 0.0))
    }

    pub fn validate(&self) -> Result<(), String> {
        let d = self.dim();
        let ok = match self {
            VectorFn::Constant { .. } => true,
            VectorFn::Trig { cos, sin, .. } => cos.iter().chain(sin).all(|c| c.len() == d),
            VectorFn::ExpConvergent { transient, .. } => transient.len() == d,
        };
        if d == 0 || !ok {
            return Err(format!("vector coefficient entries must have {d} values"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_scalar_form() {
        let a = MatrixFn::scalar_periodic(1, -2.0, -1.0, 1.0);
        for t in [0.0, 0.7, 3.0] {
            assert!((a.eval(t)[(0, 0)] + 2.0 + t.sin()).abs() < 1e-15);
        }
        assert!(a.limit().is_none());
    }

    #[test]
    fn convergent_form_and_limit() {
        let a = MatrixFn::scalar_convergent(2, -1.0, -1.0, 1.0);
        let m = a.eval(1.5);
        assert!((m[(1, 1)] + 1.0 + (-1.5f64).exp()).abs() < 1e-15);
        assert_eq!(m[(0, 1)], 0.0);
        assert_eq!(a.limit().unwrap(), DMatrix::from_diagonal_element(2, 2, -1.0));
    }
}
