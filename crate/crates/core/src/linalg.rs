//! Small dense linear-algebra helpers shared by the sampler, recovery and DPSS code.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::CMatrix;

/// Relative singular-value threshold used for every numerical rank decision.
pub const RANK_TOL: f64 = 1e-9;

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    m.clone().svd(false, false).singular_values.iter().copied().collect()
}

/// Numerical rank: singular values above `RANK_TOL * sigma_max`.
pub fn rank(m: &CMatrix) -> usize {
    let sv = singular_values(m);
    let max = sv.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * max).count()
}

/// Least-squares solution of `a x = b` through the pseudoinverse of a full
/// column-rank `a`. Fails with [`Error::NumericalRank`] (empty support) otherwise.
pub fn lstsq_full_rank(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    let (m, n) = a.shape();
    if n == 0 {
        return Ok(CMatrix::zeros(0, b.ncols()));
    }
    if n > m {
        return Err(rank_error());
    }
    let svd = a.clone().svd(true, true);
    let sv = &svd.singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    if max == 0.0 || sv.iter().any(|&s| s <= RANK_TOL * max) {
        return Err(rank_error());
    }
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut coeff = u.adjoint() * b;
    for (i, mut row) in coeff.row_iter_mut().enumerate() {
        row /= Complex64::new(sv[i], 0.0);
    }
    Ok(v_t.adjoint() * coeff)
}

fn rank_error() -> Error {
    Error::NumericalRank {
        support: Vec::new(),
        segment: None,
    }
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues sorted descending.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Complex matrix times a real matrix.
pub fn mul_real(a: &CMatrix, b: &DMatrix<f64>) -> CMatrix {
    assert_eq!(a.ncols(), b.nrows());
    let re = a.map(|v| v.re) * b;
    let im = a.map(|v| v.im) * b;
    CMatrix::from_fn(a.nrows(), b.ncols(), |i, j| Complex64::new(re[(i, j)], im[(i, j)]))
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            // p1 = P_n(x), p0 = P_{n-1}(x)
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}
