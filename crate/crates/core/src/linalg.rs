//! Dense linear-algebra helpers: SVD pseudoinverse, kernel bases, eigenvalue
//! extremes, and Gauss–Legendre quadrature nodes.

use nalgebra::{DMatrix, DVector};

/// Relative singular-value cutoff used for rank decisions.
pub const SV_CUTOFF: f64 = 1e-10;

/// Moore–Penrose pseudoinverse via SVD. Singular values below
/// `SV_CUTOFF * sigma_max` are treated as zero.
pub fn pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DMatrix::zeros(m.ncols(), m.nrows());
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd with u");
    let v_t = svd.v_t.as_ref().expect("svd with v_t");
    let smax = svd.singular_values.max();
    let cutoff = SV_CUTOFF * smax.max(f64::MIN_POSITIVE);
    let mut sinv = DMatrix::zeros(v_t.nrows(), u.ncols());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            sinv[(i, i)] = 1.0 / s;
        }
    }
    v_t.transpose() * sinv * u.transpose()
}

/// Numerical rank with the same cutoff as [`pinv`].
pub fn rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let cutoff = SV_CUTOFF * sv.max().max(f64::MIN_POSITIVE);
    sv.iter().filter(|&&s| s > cutoff).count()
}

/// Induced 2-norm (largest singular value).
pub fn norm2(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = m
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

pub fn lambda_min_sym(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(0.0)
}

pub fn lambda_max_sym(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(0.0)
}

/// Smallest nonzero eigenvalue of the symmetric PSD matrix `m`, or `None`
/// when every eigenvalue is numerically zero.
pub fn smallest_nonzero_eigenvalue(m: &DMatrix<f64>) -> Option<f64> {
    let ev = sym_eigenvalues(m);
    let max = ev.last().copied().unwrap_or(0.0).abs();
    let cutoff = SV_CUTOFF * max.max(f64::MIN_POSITIVE);
    ev.into_iter().filter(|&l| l > cutoff).reduce(f64::min)
}

/// Orthonormal basis of ker(Aᵀ) as the columns of an m×k matrix, obtained
/// from the eigenvectors of AAᵀ with numerically zero eigenvalue.
pub fn kernel_basis_of_transpose(a: &DMatrix<f64>) -> DMatrix<f64> {
    let m = a.nrows();
    if m == 0 {
        return DMatrix::zeros(0, 0);
    }
    let aat = a * a.transpose();
    let eig = aat.symmetric_eigen();
    let lmax = eig
        .eigenvalues
        .iter()
        .fold(0.0_f64, |acc, &l| acc.max(l.abs()));
    let cutoff = SV_CUTOFF * lmax.max(f64::MIN_POSITIVE);
    let cols: Vec<usize> = (0..m)
        .filter(|&i| eig.eigenvalues[i].abs() <= cutoff)
        .collect();
    let mut basis = DMatrix::zeros(m, cols.len());
    for (j, &i) in cols.iter().enumerate() {
        basis.set_column(j, &eig.eigenvectors.column(i));
    }
    basis
}

/// Least-squares / minimum-norm solution of `m x = rhs` through the SVD.
pub fn svd_solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    pinv(m) * rhs
}

/// Gauss–Legendre nodes and weights on [0, 1].
///
/// Nodes are found by Newton iteration on the Legendre polynomial with the
/// Chebyshev initial guess; exact for polynomials of degree ≤ 2n−1.
pub fn gauss_legendre_01(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1, "quadrature order must be at least 1");
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // root of P_n on [-1, 1]
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // map to [0, 1]
        out.push((0.5 * (x + 1.0), 0.5 * w));
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pinv_recovers_inverse_for_square_full_rank() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 3.0]);
        let p = pinv(&m);
        let id = &m * &p;
        assert_relative_eq!(id[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(id[(1, 1)], 1.0, epsilon = 1e-12);
        assert!(id[(0, 1)].abs() < 1e-12 && id[(1, 0)].abs() < 1e-12);
    }

    #[test]
    fn pinv_satisfies_penrose_identity_on_rank_deficient_input() {
        // rank-1: rows (1,-1) and (-1,1)
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let p = pinv(&m);
        let mpm = &m * &p * &m;
        assert_relative_eq!(mpm[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(mpm[(0, 1)], -1.0, epsilon = 1e-12);
        assert_eq!(rank(&m), 1);
    }

    #[test]
    fn kernel_basis_is_orthonormal_and_annihilated() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let b = kernel_basis_of_transpose(&a);
        assert_eq!(b.ncols(), 1);
        let atb = a.transpose() * &b;
        assert!(atb.norm() < 1e-12);
        assert_relative_eq!(b.column(0).norm(), 1.0, epsilon = 1e-12);
        // spanned by (1,1)/sqrt(2)
        assert_relative_eq!(b[(0, 0)].abs(), 1.0 / 2.0_f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn full_row_rank_has_empty_transpose_kernel() {
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
        assert_eq!(kernel_basis_of_transpose(&a).ncols(), 0);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        // integral of x^4 over [0,1] = 1/5; 3 nodes integrate degree 5 exactly
        let q = gauss_legendre_01(3);
        let val: f64 = q.iter().map(|&(x, w)| w * x.powi(4)).sum();
        assert_relative_eq!(val, 0.2, epsilon = 1e-14);
        let weight_sum: f64 = q.iter().map(|&(_, w)| w).sum();
        assert_relative_eq!(weight_sum, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn gauss_legendre_16_matches_smooth_integral() {
        let q = gauss_legendre_01(16);
        let val: f64 = q.iter().map(|&(x, w)| w * (3.0 * x).sin()).sum();
        let exact = (1.0 - (3.0_f64).cos()) / 3.0;
        assert_relative_eq!(val, exact, epsilon = 1e-14);
    }

    #[test]
    fn smallest_nonzero_eig_of_singular_psd() {
        // AA^T for A = [[1,-1],[-1,1]] has eigenvalues {0, 4}
        let aat = DMatrix::from_row_slice(2, 2, &[2.0, -2.0, -2.0, 2.0]);
        assert_relative_eq!(
            smallest_nonzero_eigenvalue(&aat).unwrap(),
            4.0,
            epsilon = 1e-10
        );
    }
}
