//! Small dense helpers shared by the engines. Matrices passed as flat slices
//! are row-major `d×d`.

use nalgebra::{DMatrix, SymmetricEigen};

/// Largest entrywise |m_ij − m_ji|.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Extreme eigenvalues of the symmetric part of `m`.
pub fn sym_eigen_range(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 1 {
        return (m[(0, 0)], m[(0, 0)]);
    }
    let s = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(s);
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// λ_max((J + Jᵀ)/2) for a flat row-major `d×d` matrix.
pub fn lambda_max_sym(flat: &[f64], d: usize) -> f64 {
    match d {
        1 => flat[0],
        2 => {
            let a = flat[0];
            let c = flat[3];
            let b = 0.5 * (flat[1] + flat[2]);
            let mean = 0.5 * (a + c);
            let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            mean + rad
        }
        _ => sym_eigen_range(&DMatrix::from_row_slice(d, d, flat)).1,
    }
}

/// Spectral (operator 2-) norm of a flat row-major `d×d` matrix.
pub fn op_norm(flat: &[f64], d: usize) -> f64 {
    if d == 1 {
        return flat[0].abs();
    }
    let m = DMatrix::from_row_slice(d, d, flat);
    let gram = m.transpose() * &m;
    sym_eigen_range(&gram).1.max(0.0).sqrt()
}

/// Symmetric PSD square root; negative eigenvalues from round-off are clamped to zero.
pub fn sym_sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 1 {
        return DMatrix::from_element(1, 1, m[(0, 0)].max(0.0).sqrt());
    }
    let s = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(s);
    let vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// Spectral norm of a general matrix.
pub fn matrix_norm(m: &DMatrix<f64>) -> f64 {
    let gram = m.transpose() * m;
    sym_eigen_range(&gram).1.max(0.0).sqrt()
}

/// Pairwise (cascade) summation with a fixed split shape, so the result only
/// depends on the input order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Standard error of `g(mean_1, …, mean_k)` by the delta method, given per-sample
/// columns and the gradient of `g` at the sample means.
pub fn delta_method_stderr(columns: &[Vec<f64>], grad: &[f64]) -> f64 {
    let n = columns.first().map_or(0, Vec::len);
    if n < 2 {
        return 0.0;
    }
    let combined: Vec<f64> = (0..n).map(|i| columns.iter().zip(grad).map(|(c, g)| g * c[i]).sum()).collect();
    mean_stderr(&combined).1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_max_matches_eigen_solver() {
        let j = [-1.0, 2.0, 0.0, -3.0];
        let direct = sym_eigen_range(&DMatrix::from_row_slice(2, 2, &j)).1;
        assert!((lambda_max_sym(&j, 2) - direct).abs() < 1e-12);
    }

    #[test]
    fn op_norm_of_rotation_is_one() {
        let (s, c) = 0.3_f64.sin_cos();
        assert!((op_norm(&[c, -s, s, c], 2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sqrt_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let r = sym_sqrt_psd(&m);
        assert!((&r * &r - &m).abs().max() < 1e-12);
    }

    #[test]
    fn pairwise_sum_is_exact_on_integers() {
        let xs: Vec<f64> = (0..1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&xs), 499_500.0);
    }
}
