//! Adaptive Dormand–Prince 5(4) integrator for linear matrix ODEs.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeTolerance {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for OdeTolerance {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-13, max_steps: 2_000_000 }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

/// Integrates `y' = rhs(t, y, dy)` from `t0` to `t1` (either direction).
pub fn integrate<F>(mut rhs: F, t0: f64, t1: f64, y0: &[f64], tol: OdeTolerance) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let mut y = y0.to_vec();
    if t0 == t1 {
        return Ok(y);
    }
    let dir = (t1 - t0).signum();
    let span = (t1 - t0).abs();
    let mut t = t0;
    let mut h = (span / 16.0).min(0.05);
    let mut k = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut y5 = vec![0.0; n];
    rhs(t, &y, &mut k[0]);
    for _ in 0..tol.max_steps {
        let remaining = (t1 - t).abs();
        if remaining <= 1e-15 * span.max(1.0) {
            return Ok(y);
        }
        let step = h.min(remaining);
        if step < 1e-13 * t.abs().max(1.0) {
            return Err(Error::Stiff { t });
        }
        let hs = dir * step;
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..s {
                    acc += A[s][j] * k[j][i];
                }
                tmp[i] = y[i] + hs * acc;
            }
            rhs(t + C[s] * hs, &tmp, &mut k[s]);
        }
        let mut err = 0.0_f64;
        for i in 0..n {
            let mut a5 = 0.0;
            let mut a4 = 0.0;
            for s in 0..7 {
                a5 += B5[s] * k[s][i];
                a4 += B4[s] * k[s][i];
            }
            y5[i] = y[i] + hs * a5;
            let sc = tol.atol + tol.rtol * y[i].abs().max(y5[i].abs());
            err = err.max((hs * (a5 - a4)).abs() / sc);
        }
        if err <= 1.0 {
            t += hs;
            y.copy_from_slice(&y5);
            // FSAL: the last stage is the derivative at the new point.
            k.swap(0, 6);
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h = step * factor;
    }
    Err(Error::Stiff { t })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_growth_and_decay() {
        let y = integrate(|_, y, dy| dy[0] = -y[0], 0.0, 5.0, &[1.0], OdeTolerance::default()).unwrap();
        assert!((y[0] - (-5.0f64).exp()).abs() < 1e-11);
        let y = integrate(|_, y, dy| dy[0] = -y[0], 5.0, 0.0, &[1.0], OdeTolerance::default()).unwrap();
        assert!((y[0] / 5.0f64.exp() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn time_dependent_rate() {
        // y' = −(2 + sin t) y → y(t) = exp(−2t + cos t − 1).
        let y = integrate(|t, y, dy| dy[0] = -(2.0 + t.sin()) * y[0], 0.0, 3.0, &[1.0], OdeTolerance::default()).unwrap();
        let exact = (-6.0 + 3.0f64.cos() - 1.0).exp();
        assert!((y[0] / exact - 1.0).abs() < 1e-9);
    }

    #[test]
    fn reports_stiffness() {
        let tol = OdeTolerance { max_steps: 50, ..OdeTolerance::default() };
        let r = integrate(|_, y, dy| dy[0] = -1e6 * y[0], 0.0, 10.0, &[1.0], tol);
        assert!(matches!(r, Err(Error::Stiff { .. })));
    }
}
