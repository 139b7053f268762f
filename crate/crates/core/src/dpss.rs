//! Discrete prolate spheroidal sequences and the segment dictionary built from them.
//!
//! The vectors are eigenvectors of the symmetric tridiagonal matrix that commutes
//! with the prolate kernel. The top `k` eigenpairs are found by Sturm bisection
//! and inverse iteration. Concentration values come from integrating
//! `|S(f)|^2` over `[-W, W]` with Gauss-Legendre quadrature; this equals the
//! kernel Rayleigh quotient but keeps relative accuracy for tiny values.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg;
use crate::CMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct DpssDictionary {
    pub length: usize,
    pub half_bandwidth: f64,
    pub kept: usize,
    /// `length x kept`, orthonormal columns.
    pub q: DMatrix<f64>,
    /// Concentrations, descending.
    pub eigenvalues: Vec<f64>,
}

/// `ceil(kd_factor * 2 N_D W_D)` clamped to `1..=N_D`.
pub fn kept_count(n_d: usize, w_d: f64, kd_factor: f64) -> Result<usize> {
    if !(kd_factor > 0.0 && kd_factor.is_finite()) {
        return Err(Error::invalid("kd factor must be positive"));
    }
    let k = (kd_factor * 2.0 * n_d as f64 * w_d - 1e-9).ceil().max(1.0) as usize;
    Ok(k.min(n_d))
}

fn validate(n_d: usize, w_d: f64, k_d: usize) -> Result<()> {
    if n_d == 0 {
        return Err(Error::invalid("DPSS length must be positive"));
    }
    if !(w_d > 0.0 && w_d <= 0.5) {
        return Err(Error::invalid(format!("half bandwidth {w_d} outside (0, 1/2]")));
    }
    if k_d == 0 || k_d > n_d {
        return Err(Error::invalid(format!("k_D = {k_d} outside 1..={n_d}")));
    }
    Ok(())
}

struct Tridiagonal {
    diag: Vec<f64>,
    /// `off[i]` couples rows `i` and `i + 1`.
    off: Vec<f64>,
}

impl Tridiagonal {
    fn commuting(n: usize, w: f64) -> Self {
        let c = (2.0 * PI * w).cos();
        let nf = n as f64;
        let diag = (0..n)
            .map(|i| {
                let h = (nf - 1.0 - 2.0 * i as f64) / 2.0;
                h * h * c
            })
            .collect();
        let off = (1..n).map(|i| i as f64 * (nf - i as f64) / 2.0).collect();
        Self { diag, off }
    }

    fn len(&self) -> usize {
        self.diag.len()
    }

    /// Number of eigenvalues strictly below `x` (Sturm sequence).
    fn count_below(&self, x: f64) -> usize {
        let mut count = 0;
        let mut d = self.diag[0] - x;
        let tiny = f64::MIN_POSITIVE.sqrt();
        for i in 0..self.len() {
            if i > 0 {
                d = self.diag[i] - x - self.off[i - 1] * self.off[i - 1] / d;
            }
            if d == 0.0 {
                d = -tiny;
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 }
                + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// The `m`-th smallest eigenvalue (0-based) by bisection.
    fn eigenvalue(&self, m: usize) -> f64 {
        let (mut lo, mut hi) = self.gershgorin();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > m {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Solve `(T - shift I) x = b` by LU with partial pivoting, overwriting `b`.
    fn solve_shifted(&self, shift: f64, b: &mut [f64]) {
        let n = self.len();
        if n == 1 {
            let d = self.diag[0] - shift;
            b[0] /= if d == 0.0 { f64::EPSILON } else { d };
            return;
        }
        let scale = self.gershgorin().1.abs().max(1.0);
        let guard = |v: f64| if v == 0.0 { f64::EPSILON * scale } else { v };
        // row i of U holds u0[i] (diagonal), u1[i], u2[i] (two superdiagonals)
        let mut u0: Vec<f64> = self.diag.iter().map(|d| d - shift).collect();
        let mut u1: Vec<f64> = self.off.clone();
        u1.push(0.0);
        let mut u2 = vec![0.0; n];
        let mut sub: Vec<f64> = self.off.clone();
        for i in 0..n - 1 {
            if sub[i].abs() > u0[i].abs() {
                // swap rows i and i+1
                std::mem::swap(&mut u0[i], &mut sub[i]);
                let next_diag = u0[i + 1];
                let next_sup = u1[i + 1];
                u0[i + 1] = u1[i];
                u1[i] = next_diag;
                u2[i] = next_sup;
                u1[i + 1] = 0.0;
                b.swap(i, i + 1);
                // after the swap `sub[i]` holds the old pivot row's diagonal
                let f = sub[i] / guard(u0[i]);
                u0[i + 1] -= f * u1[i];
                u1[i + 1] -= f * u2[i];
                b[i + 1] -= f * b[i];
            } else {
                let f = sub[i] / guard(u0[i]);
                u0[i + 1] -= f * u1[i];
                b[i + 1] -= f * b[i];
            }
        }
        for i in (0..n).rev() {
            let mut v = b[i];
            if i + 1 < n {
                v -= u1[i] * b[i + 1];
            }
            if i + 2 < n {
                v -= u2[i] * b[i + 2];
            }
            b[i] = v / guard(u0[i]);
        }
    }
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Flip `v` so its first non-negligible moment about the center is positive.
fn fix_sign(v: &mut [f64]) {
    let c = (v.len() as f64 - 1.0) / 2.0;
    for p in 0..4 {
        let (mut m, mut scale) = (0.0, 0.0);
        for (i, x) in v.iter().enumerate() {
            let w = (i as f64 - c).powi(p);
            m += w * x;
            scale += (w * x).abs();
        }
        if m.abs() > 1e-10 * scale {
            if m < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            return;
        }
    }
}

/// Gauss-Legendre rule on `[-w, w]` accurate for trigonometric polynomials of
/// degree below `n` in `f`.
fn band_rule(n: usize, w: f64) -> (Vec<f64>, Vec<f64>) {
    interval_rule(n, -w, w)
}

fn interval_rule(n: usize, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    let half = (hi - lo) / 2.0;
    let mid = (hi + lo) / 2.0;
    let m = (1.5 * 2.0 * PI * n as f64 * half).ceil() as usize + 48;
    let (x, wt) = linalg::gauss_legendre(m);
    (
        x.iter().map(|x| mid + x * half).collect(),
        wt.iter().map(|v| v * half).collect(),
    )
}

/// `int_{-w}^{w} |sum_n v[n] e^{-j 2 pi f n}|^2 df`.
fn band_energy(v: &[Complex64], nodes: &[f64], weights: &[f64]) -> f64 {
    nodes
        .iter()
        .zip(weights)
        .map(|(&f, &wt)| {
            let step = Complex64::from_polar(1.0, -2.0 * PI * f);
            let mut phase = Complex64::new(1.0, 0.0);
            let mut s = Complex64::new(0.0, 0.0);
            for (i, x) in v.iter().enumerate() {
                if i % 64 == 0 {
                    // refresh the recurrence to stop phase drift
                    phase = Complex64::from_polar(1.0, -2.0 * PI * f * i as f64);
                }
                s += x * phase;
                phase *= step;
            }
            wt * s.norm_sqr()
        })
        .sum()
}

/// First `k_d` DPSS vectors of length `n_d` and half bandwidth `w_d`.
pub fn compute_dpss(n_d: usize, w_d: f64, k_d: usize) -> Result<DpssDictionary> {
    validate(n_d, w_d, k_d)?;
    if w_d == 0.5 {
        return Ok(DpssDictionary {
            length: n_d,
            half_bandwidth: w_d,
            kept: k_d,
            q: DMatrix::from_fn(n_d, k_d, |i, j| if i == j { 1.0 } else { 0.0 }),
            eigenvalues: vec![1.0; k_d],
        });
    }
    let t = Tridiagonal::commuting(n_d, w_d);
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(k_d);
    for j in 0..k_d {
        let mu = t.eigenvalue(n_d - 1 - j);
        let mut v: Vec<f64> = (0..n_d)
            .map(|i| 1.0 + 0.1 * ((i * 7 + j * 13) % 17) as f64 / 17.0)
            .collect();
        for _ in 0..3 {
            t.solve_shifted(mu, &mut v);
            for prev in &vectors {
                for _ in 0..2 {
                    let dot: f64 = prev.iter().zip(&v).map(|(a, b)| a * b).sum();
                    v.iter_mut().zip(prev).for_each(|(x, p)| *x -= dot * p);
                }
            }
            normalize(&mut v);
        }
        fix_sign(&mut v);
        vectors.push(v);
    }

    let (nodes, weights) = band_rule(n_d, w_d);
    let (stop_nodes, stop_weights) = interval_rule(n_d, w_d, 1.0 - w_d);
    let eigenvalues = vectors
        .iter()
        .map(|v| {
            let c: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
            let inside = band_energy(&c, &nodes, &weights);
            if inside < 0.5 {
                return inside;
            }
            // near 1 the stop-band energy carries the significant digits
            1.0 - band_energy(&c, &stop_nodes, &stop_weights)
        })
        .collect();
    Ok(DpssDictionary {
        length: n_d,
        half_bandwidth: w_d,
        kept: k_d,
        q: DMatrix::from_fn(n_d, k_d, |i, j| vectors[j][i]),
        eigenvalues,
    })
}

/// `Z Q`: the `q x k_D` reduced measurements.
pub fn reduce(z: &CMatrix, dict: &DpssDictionary) -> Result<CMatrix> {
    if z.ncols() != dict.length {
        return Err(Error::invalid(format!(
            "segment width {} differs from dictionary length {}",
            z.ncols(),
            dict.length
        )));
    }
    Ok(linalg::mul_real(z, &dict.q))
}

/// `X Q^T`: back to `L x N_D`.
pub fn lift(x: &CMatrix, dict: &DpssDictionary) -> Result<CMatrix> {
    if x.ncols() != dict.kept {
        return Err(Error::invalid(format!(
            "coefficient matrix has {} columns, dictionary keeps {}",
            x.ncols(),
            dict.kept
        )));
    }
    Ok(linalg::mul_real(x, &dict.q.transpose()))
}

/// `||X - X Q Q^T||_F / ||X||_F`, 0 for a zero matrix.
pub fn approximation_error(x: &CMatrix, dict: &DpssDictionary) -> Result<f64> {
    let norm = linalg::frobenius(x);
    if norm == 0.0 {
        if x.ncols() != dict.length {
            return Err(Error::invalid("shape mismatch"));
        }
        return Ok(0.0);
    }
    let proj = lift(&reduce(x, dict)?, dict)?;
    Ok(linalg::frobenius(&(x - proj)) / norm)
}

/// Fraction of each row's energy whose DTFT lies outside `|f| <= w`.
pub fn row_out_of_band(x: &CMatrix, w: f64) -> Vec<f64> {
    let (nodes, weights) = band_rule(x.ncols(), w);
    x.row_iter()
        .map(|row| {
            let total = row.norm_squared();
            if total == 0.0 {
                return 0.0;
            }
            let v: Vec<Complex64> = row.iter().copied().collect();
            (1.0 - band_energy(&v, &nodes, &weights) / total).max(0.0)
        })
        .collect()
}

type CacheKey = (usize, u64, usize);

/// Shared dictionary store keyed by `(N_D, W_D, k_D)`, optionally backed by files.
#[derive(Debug, Default)]
pub struct DpssCache {
    entries: Mutex<HashMap<CacheKey, Arc<DpssDictionary>>>,
    dir: Option<PathBuf>,
}

impl DpssCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_dir(dir: impl Into<PathBuf>) -> Self {
        Self {
            entries: Mutex::default(),
            dir: Some(dir.into()),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn file_for(&self, key: CacheKey) -> Option<PathBuf> {
        self.dir
            .as_ref()
            .map(|d| d.join(format!("dpss_{}_{:016x}_{}.bin", key.0, key.1, key.2)))
    }

    /// Return the cached dictionary or compute it. Concurrent callers may both
    /// compute, but the first insertion wins and every caller gets that one.
    pub fn get_or_compute(&self, n_d: usize, w_d: f64, k_d: usize) -> Result<Arc<DpssDictionary>> {
        let key = (n_d, w_d.to_bits(), k_d);
        if let Some(d) = self.entries.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(d));
        }
        let file = self.file_for(key);
        let loaded = match &file {
            Some(p) if p.exists() => Some(read_dictionary(p)?),
            _ => None,
        };
        let fresh = loaded.is_none();
        let dict = match loaded {
            Some(d) => d,
            None => compute_dpss(n_d, w_d, k_d)?,
        };
        if let (true, Some(p)) = (fresh, &file) {
            write_dictionary(p, &dict)?;
        }
        let mut map = self.entries.lock().expect("cache lock");
        Ok(Arc::clone(map.entry(key).or_insert_with(|| Arc::new(dict))))
    }
}

/// Header `(N_D u64, W_D f64 bits, k_D u64)`, then `Q` row-major, then eigenvalues,
/// all little-endian.
pub fn write_dictionary(path: &Path, dict: &DpssDictionary) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(&(dict.length as u64).to_le_bytes())?;
        w.write_all(&dict.half_bandwidth.to_bits().to_le_bytes())?;
        w.write_all(&(dict.kept as u64).to_le_bytes())?;
        for i in 0..dict.length {
            for j in 0..dict.kept {
                w.write_all(&dict.q[(i, j)].to_le_bytes())?;
            }
        }
        for v in &dict.eigenvalues {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

pub fn read_dictionary(path: &Path) -> Result<DpssDictionary> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    let word = |i: usize| -> Result<[u8; 8]> {
        bytes
            .get(i * 8..i * 8 + 8)
            .map(|s| s.try_into().expect("8 bytes"))
            .ok_or_else(|| Error::Format(format!("{}: truncated", path.display())))
    };
    let n = u64::from_le_bytes(word(0)?) as usize;
    let w = f64::from_bits(u64::from_le_bytes(word(1)?));
    let k = u64::from_le_bytes(word(2)?) as usize;
    validate(n, w, k).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if bytes.len() != 8 * (3 + n * k + k) {
        return Err(Error::Format(format!("{}: wrong size", path.display())));
    }
    let f = |i: usize| f64::from_le_bytes(word(i).expect("size checked"));
    Ok(DpssDictionary {
        length: n,
        half_bandwidth: w,
        kept: k,
        q: DMatrix::from_fn(n, k, |i, j| f(3 + i * k + j)),
        eigenvalues: (0..k).map(|j| f(3 + n * k + j)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;

    /// Dense prolate kernel eigenpairs, descending.
    fn dense_oracle(n: usize, w: f64) -> (Vec<f64>, DMatrix<f64>) {
        let k = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                2.0 * w
            } else {
                let d = i as f64 - j as f64;
                (2.0 * PI * w * d).sin() / (PI * d)
            }
        });
        let eig = SymmetricEigen::new(k);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        (
            order.iter().map(|&i| eig.eigenvalues[i]).collect(),
            DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]),
        )
    }

    #[test]
    fn full_band_is_identity() {
        let d = compute_dpss(5, 0.5, 3).unwrap();
        assert_eq!(d.eigenvalues, vec![1.0; 3]);
        assert_eq!(d.q[(1, 1)], 1.0);
        assert_eq!(d.q[(0, 1)], 0.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(compute_dpss(0, 0.1, 1).is_err());
        assert!(compute_dpss(8, 0.0, 1).is_err());
        assert!(compute_dpss(8, 0.6, 1).is_err());
        assert!(compute_dpss(8, 0.1, 9).is_err());
        assert!(compute_dpss(8, 0.1, 0).is_err());
    }

    #[test]
    fn small_case_matches_dense_kernel() {
        let d = compute_dpss(8, 0.25, 8).unwrap();
        let (vals, vecs) = dense_oracle(8, 0.25);
        for j in 0..8 {
            assert!((d.eigenvalues[j] - vals[j]).abs() < 1e-10, "{j}");
            let dot: f64 = (0..8).map(|i| d.q[(i, j)] * vecs[(i, j)]).sum();
            assert!((dot.abs() - 1.0).abs() < 1e-9, "{j}: {dot}");
        }
    }

    #[test]
    fn orthonormal_columns() {
        let d = compute_dpss(300, 1.0 / 32.0, 40).unwrap();
        let g = d.q.transpose() * &d.q;
        for i in 0..40 {
            for j in 0..40 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - e).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn sign_convention() {
        let d = compute_dpss(33, 0.1, 4).unwrap();
        let sum0: f64 = d.q.column(0).iter().sum();
        assert!(sum0 > 0.0);
        let m1: f64 = d.q.column(1).iter().enumerate().map(|(i, v)| (i as f64 - 16.0) * v).sum();
        assert!(m1 > 0.0);
    }

    #[test]
    fn kept_counts() {
        assert_eq!(kept_count(128, 1.0 / 16.0, 2.0).unwrap(), 32);
        assert_eq!(kept_count(128, 1.0 / 16.0, 1.0).unwrap(), 16);
        assert_eq!(kept_count(10, 0.5, 4.0).unwrap(), 10);
        assert!(kept_count(10, 0.1, 0.0).is_err());
    }

    #[test]
    fn reduce_lift_shapes_and_isometry() {
        let d = compute_dpss(16, 0.2, 16).unwrap();
        let z = CMatrix::from_fn(3, 16, |i, j| Complex64::new(i as f64 - j as f64, 0.5));
        let zr = reduce(&z, &d).unwrap();
        assert!((linalg::frobenius(&zr) - linalg::frobenius(&z)).abs() < 1e-10);
        assert!(reduce(&CMatrix::zeros(3, 15), &d).is_err());
        assert!(lift(&CMatrix::zeros(3, 15), &d).is_err());
        assert_eq!(approximation_error(&CMatrix::zeros(2, 16), &d).unwrap(), 0.0);
    }

    #[test]
    fn complement_vector_error_is_one() {
        let full = compute_dpss(64, 0.1, 10).unwrap();
        let d = compute_dpss(64, 0.1, 9).unwrap();
        let x = CMatrix::from_fn(3, 64, |_, j| Complex64::new(full.q[(j, 9)], 0.0));
        assert!((approximation_error(&x, &d).unwrap() - 1.0).abs() < 1e-10);
        let y = CMatrix::from_fn(2, 64, |i, j| Complex64::new(full.q[(j, i)], 0.0));
        assert!(approximation_error(&y, &d).unwrap() < 1e-10);
    }

    #[test]
    fn cache_shares_and_persists() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DpssCache::with_dir(dir.path());
        let a = cache.get_or_compute(40, 0.05, 6).unwrap();
        let b = cache.get_or_compute(40, 0.05, 6).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(cache.len(), 1);
        let reloaded = DpssCache::with_dir(dir.path()).get_or_compute(40, 0.05, 6).unwrap();
        assert_eq!(*reloaded, *a);
    }

    #[test]
    fn out_of_band_of_dpss_vector() {
        let d = compute_dpss(64, 0.1, 3).unwrap();
        let x = CMatrix::from_fn(1, 64, |_, j| Complex64::new(d.q[(j, 2)], 0.0));
        let delta = row_out_of_band(&x, 0.1)[0];
        assert!((delta - (1.0 - d.eigenvalues[2])).abs() < 1e-12);
    }
}
