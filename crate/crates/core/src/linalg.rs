//! Dense symmetric and Hermitian eigensolvers, generic over [`Real`].
//!
//! The real symmetric path is Householder tridiagonalization followed by the
//! implicit-shift QL iteration (the classical EISPACK `tred2`/`tql2` pair).
//! Complex Hermitian matrices use the real 2n embedding when only values are
//! needed and cyclic Jacobi rotations when eigenvectors are requested.

use ndarray::Array2;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;

const MAX_QL_ITERATIONS: usize = 64;
const MAX_JACOBI_SWEEPS: usize = 100;

/// Receives the plane rotations produced by the QL iteration.
trait RotationSink<T> {
    /// Rotates columns `i` and `i + 1`.
    fn rotate(&mut self, i: usize, c: T, s: T);
}

struct NoVectors;

impl<T> RotationSink<T> for NoVectors {
    #[inline]
    fn rotate(&mut self, _: usize, _: T, _: T) {}
}

struct FullVectors<'a, T>(&'a mut Array2<T>);

impl<T: Real> RotationSink<T> for FullVectors<'_, T> {
    #[inline]
    fn rotate(&mut self, i: usize, c: T, s: T) {
        let z = &mut *self.0;
        for k in 0..z.nrows() {
            let h = z[[k, i + 1]];
            let zi = z[[k, i]];
            z[[k, i + 1]] = s * zi + c * h;
            z[[k, i]] = c * zi - s * h;
        }
    }
}

/// Tracks only the first row of the eigenvector matrix (Golub-Welsch).
struct FirstRow<'a, T>(&'a mut [T]);

impl<T: Real> RotationSink<T> for FirstRow<'_, T> {
    #[inline]
    fn rotate(&mut self, i: usize, c: T, s: T) {
        let h = self.0[i + 1];
        let zi = self.0[i];
        self.0[i + 1] = s * zi + c * h;
        self.0[i] = c * zi - s * h;
    }
}

/// Implicit QL on a symmetric tridiagonal matrix. `e[i]` couples `i` and
/// `i + 1`; `e[n - 1]` is ignored. On return `d` holds the (unsorted)
/// eigenvalues.
fn tql2<T: Real, S: RotationSink<T>>(d: &mut [T], e: &mut [T], sink: &mut S) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    e[n - 1] = T::zero();
    let eps = T::epsilon();
    let mut f = T::zero();
    let mut tst1 = T::zero();
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m == n {
            m = n - 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_QL_ITERATIONS {
                    return Err(Error::Solver(format!(
                        "QL iteration did not converge for eigenvalue {l} of {n} (|e| = {:e}, scale {:e})",
                        e[l].as_f64(),
                        tst1.as_f64()
                    )));
                }
                let two = T::lit(2.0);
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(T::one());
                if p < T::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = T::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = T::zero();
                let mut s2 = T::zero();
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    sink.rotate(i, c, s);
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = T::zero();
    }
    Ok(())
}

/// Householder reduction of a symmetric matrix (lower triangle is read) to
/// tridiagonal form. Returns `(diag, off)` with `off[i]` coupling `i, i+1`.
/// When `accumulate` is set, `v` is overwritten with the orthogonal
/// transformation.
fn tred2<T: Real>(v: &mut Array2<T>, accumulate: bool) -> (Vec<T>, Vec<T>) {
    let n = v.nrows();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    if n == 0 {
        return (d, e);
    }
    for j in 0..n {
        d[j] = v[[n - 1, j]];
    }
    for i in (1..n).rev() {
        let mut scale = T::zero();
        let mut h = T::zero();
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == T::zero() {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[[i - 1, j]];
                v[[i, j]] = T::zero();
                v[[j, i]] = T::zero();
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > T::zero() {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = T::zero();
            }
            for j in 0..i {
                f = d[j];
                v[[j, i]] = f;
                g = e[j] + v[[j, j]] * f;
                for k in (j + 1)..i {
                    let vkj = v[[k, j]];
                    g += vkj * d[k];
                    e[k] += vkj * f;
                }
                e[j] = g;
            }
            f = T::zero();
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[[k, j]] -= f * e[k] + g * d[k];
                }
                d[j] = v[[i - 1, j]];
                v[[i, j]] = T::zero();
            }
        }
        d[i] = h;
    }

    if accumulate {
        for i in 0..n - 1 {
            v[[n - 1, i]] = v[[i, i]];
            v[[i, i]] = T::one();
            let h = d[i + 1];
            if h != T::zero() {
                for k in 0..=i {
                    d[k] = v[[k, i + 1]] / h;
                }
                for j in 0..=i {
                    let mut g = T::zero();
                    for k in 0..=i {
                        g += v[[k, i + 1]] * v[[k, j]];
                    }
                    for k in 0..=i {
                        v[[k, j]] -= g * d[k];
                    }
                }
            }
            for k in 0..=i {
                v[[k, i + 1]] = T::zero();
            }
        }
        for j in 0..n {
            d[j] = v[[n - 1, j]];
            v[[n - 1, j]] = T::zero();
        }
        v[[n - 1, n - 1]] = T::one();
    } else {
        for j in 0..n {
            d[j] = v[[j, j]];
        }
    }
    // tred2 stores the sub-diagonal as e[i] = A[i][i-1]; shift to our convention.
    let mut off = vec![T::zero(); n];
    off[..(n - 1)].copy_from_slice(&e[1..n]);
    (d, off)
}

/// Eigenvalues (ascending) and optionally orthonormal eigenvectors (columns)
/// of a real symmetric matrix.
pub fn symmetric_eigen<T: Real>(a: &Array2<T>, vectors: bool) -> Result<(Vec<T>, Option<Array2<T>>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Solver(format!("matrix is {}x{}, not square", n, a.ncols())));
    }
    check_finite(a.iter().copied())?;
    let mut v = a.clone();
    let (mut d, mut e) = tred2(&mut v, vectors);
    if vectors {
        tql2(&mut d, &mut e, &mut FullVectors(&mut v))?;
        let order = ascending_order(&d);
        let vals = order.iter().map(|&i| d[i]).collect();
        let mut sorted = Array2::zeros((n, n));
        for (new, &old) in order.iter().enumerate() {
            sorted.column_mut(new).assign(&v.column(old));
        }
        Ok((vals, Some(sorted)))
    } else {
        tql2(&mut d, &mut e, &mut NoVectors)?;
        d.sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
        Ok((d, None))
    }
}

/// Eigenvalues (ascending) of a symmetric tridiagonal matrix together with
/// the first component of each normalized eigenvector.
pub fn tridiagonal_eigen_first_row<T: Real>(diag: &[T], off: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![T::zero(); n];
    e[..off.len().min(n)].copy_from_slice(&off[..off.len().min(n)]);
    let mut z = vec![T::zero(); n];
    if n > 0 {
        z[0] = T::one();
    }
    tql2(&mut d, &mut e, &mut FirstRow(&mut z))?;
    let order = ascending_order(&d);
    Ok((order.iter().map(|&i| d[i]).collect(), order.iter().map(|&i| z[i]).collect()))
}

/// Eigenvalues (ascending) of a complex Hermitian matrix, optionally with
/// eigenvectors as columns.
pub fn hermitian_eigen<T: Real>(
    a: &Array2<Complex<T>>,
    vectors: bool,
) -> Result<(Vec<T>, Option<Array2<Complex<T>>>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Solver(format!("matrix is {}x{}, not square", n, a.ncols())));
    }
    check_finite(a.iter().flat_map(|z| [z.re, z.im]))?;
    if a.iter().all(|z| z.im == T::zero()) {
        let re = a.mapv(|z| z.re);
        let (vals, vecs) = symmetric_eigen(&re, vectors)?;
        return Ok((vals, vecs.map(|v| v.mapv(|x| Complex::new(x, T::zero())))));
    }
    if vectors {
        return jacobi_hermitian(a);
    }
    // [[Re, -Im], [Im, Re]] carries every eigenvalue of `a` twice.
    let mut emb = Array2::zeros((2 * n, 2 * n));
    for i in 0..n {
        for j in 0..n {
            let z = a[[i, j]];
            emb[[i, j]] = z.re;
            emb[[i + n, j + n]] = z.re;
            emb[[i + n, j]] = z.im;
            emb[[i, j + n]] = -z.im;
        }
    }
    let (vals, _) = symmetric_eigen(&emb, false)?;
    let half = T::lit(0.5);
    Ok((vals.chunks(2).map(|p| (p[0] + p[1]) * half).collect(), None))
}

fn jacobi_hermitian<T: Real>(a: &Array2<Complex<T>>) -> Result<(Vec<T>, Option<Array2<Complex<T>>>)> {
    let n = a.nrows();
    let mut m = a.clone();
    // Symmetrize to exact Hermitian form first.
    let half = T::lit(0.5);
    for i in 0..n {
        m[[i, i]] = Complex::new(m[[i, i]].re, T::zero());
        for j in (i + 1)..n {
            let z = (m[[i, j]] + m[[j, i]].conj()).scale(half);
            m[[i, j]] = z;
            m[[j, i]] = z.conj();
        }
    }
    let mut v: Array2<Complex<T>> = Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            Complex::new(T::one(), T::zero())
        } else {
            Complex::new(T::zero(), T::zero())
        }
    });
    let eps = T::epsilon();
    let mut converged = n < 2;
    for _sweep in 0..MAX_JACOBI_SWEEPS {
        let mut off = T::zero();
        let mut diag = T::zero();
        for i in 0..n {
            diag += m[[i, i]].re * m[[i, i]].re;
            for j in (i + 1)..n {
                off += m[[i, j]].norm_sqr();
            }
        }
        if off.sqrt() <= eps * eps.sqrt() * (diag.sqrt() + off.sqrt()) || off == T::zero() {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                let mag = apq.norm();
                if mag == T::zero() {
                    continue;
                }
                let app = m[[p, p]].re;
                let aqq = m[[q, q]].re;
                if mag <= eps * T::lit(0.01) * (app.abs() + aqq.abs()) {
                    m[[p, q]] = Complex::new(T::zero(), T::zero());
                    m[[q, p]] = Complex::new(T::zero(), T::zero());
                    continue;
                }
                // Phase column q so that a_pq becomes real and positive.
                let phase = apq.conj().scale(T::one() / mag);
                for k in 0..n {
                    m[[k, q]] = m[[k, q]] * phase;
                    v[[k, q]] = v[[k, q]] * phase;
                }
                for k in 0..n {
                    m[[q, k]] = m[[q, k]] * phase.conj();
                }
                m[[q, q]] = Complex::new(aqq, T::zero());
                let theta = (aqq - app) / (T::lit(2.0) * mag);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = m[[k, p]];
                    let akq = m[[k, q]];
                    let nkp = akp.scale(c) - akq.scale(s);
                    let nkq = akp.scale(s) + akq.scale(c);
                    m[[k, p]] = nkp;
                    m[[k, q]] = nkq;
                    m[[p, k]] = nkp.conj();
                    m[[q, k]] = nkq.conj();
                }
                m[[p, p]] = Complex::new(app - t * mag, T::zero());
                m[[q, q]] = Complex::new(aqq + t * mag, T::zero());
                m[[p, q]] = Complex::new(T::zero(), T::zero());
                m[[q, p]] = Complex::new(T::zero(), T::zero());
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = vkp.scale(c) - vkq.scale(s);
                    v[[k, q]] = vkp.scale(s) + vkq.scale(c);
                }
            }
        }
    }
    if !converged {
        return Err(Error::Solver(format!(
            "Jacobi iteration did not converge in {MAX_JACOBI_SWEEPS} sweeps (n = {n})"
        )));
    }
    let d: Vec<T> = (0..n).map(|i| m[[i, i]].re).collect();
    let order = ascending_order(&d);
    let mut sorted = Array2::from_elem((n, n), Complex::new(T::zero(), T::zero()));
    for (new, &old) in order.iter().enumerate() {
        sorted.column_mut(new).assign(&v.column(old));
    }
    Ok((order.iter().map(|&i| d[i]).collect(), Some(sorted)))
}

fn ascending_order<T: Real>(d: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by(|&i, &j| d[i].partial_cmp(&d[j]).expect("finite eigenvalues"));
    order
}

fn check_finite<T: Real>(mut it: impl Iterator<Item = T>) -> Result<()> {
    if it.all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Solver("matrix has non-finite entries".into()))
    }
}

/// Largest deviation of `v^H v` from the identity.
pub fn orthogonality_defect<T: Real>(v: &Array2<Complex<T>>) -> T {
    let n = v.ncols();
    let mut worst = T::zero();
    for i in 0..n {
        for j in i..n {
            let mut s = Complex::new(T::zero(), T::zero());
            for k in 0..v.nrows() {
                s = s + v[[k, i]].conj() * v[[k, j]];
            }
            let target = if i == j { T::one() } else { T::zero() };
            worst = worst.max((s - Complex::new(target, T::zero())).norm());
        }
    }
    worst
}

/// Least-squares solution of the overdetermined system `a x = b` by
/// Householder QR. Columns must be linearly independent.
pub fn least_squares<T: Real>(a: &Array2<T>, b: &[T]) -> Result<Vec<T>> {
    let (m, n) = a.dim();
    if m < n || b.len() != m {
        return Err(Error::Solver(format!("least squares needs rows >= cols ({m} x {n}, rhs {})", b.len())));
    }
    check_finite(a.iter().copied().chain(b.iter().copied()))?;
    let mut r = a.clone();
    let mut y = b.to_vec();
    for k in 0..n {
        let norm = (k..m).map(|i| r[[i, k]] * r[[i, k]]).sum::<T>().sqrt();
        if norm == T::zero() {
            return Err(Error::Solver("rank-deficient least-squares system".into()));
        }
        let alpha = if r[[k, k]] > T::zero() { -norm } else { norm };
        let mut v: Vec<T> = (k..m).map(|i| r[[i, k]]).collect();
        v[0] -= alpha;
        let vnorm2: T = v.iter().map(|&x| x * x).sum();
        if vnorm2 == T::zero() {
            continue;
        }
        for j in k..n {
            let dot: T = (k..m).map(|i| v[i - k] * r[[i, j]]).sum();
            let f = (dot + dot) / vnorm2;
            for i in k..m {
                r[[i, j]] -= f * v[i - k];
            }
        }
        let dot: T = (k..m).map(|i| v[i - k] * y[i]).sum();
        let f = (dot + dot) / vnorm2;
        for i in k..m {
            y[i] -= f * v[i - k];
        }
    }
    let mut x = vec![T::zero(); n];
    for k in (0..n).rev() {
        let s: T = ((k + 1)..n).map(|j| r[[k, j]] * x[j]).sum();
        if r[[k, k]].abs() <= T::epsilon() * T::lit(1e-6) * r[[0, 0]].abs() {
            return Err(Error::Solver("rank-deficient least-squares system".into()));
        }
        x[k] = (y[k] - s) / r[[k, k]];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn tridiagonal_three_by_three() {
        // [[2, .5, 0], [.5, 2, .5], [0, .5, 2]] has eigenvalues 2, 2 ± sqrt(2)/2.
        let a = ndarray::arr2(&[[2.0, 0.5, 0.0], [0.5, 2.0, 0.5], [0.0, 0.5, 2.0]]);
        let (vals, vecs) = symmetric_eigen(&a, true).unwrap();
        let h = 2f64.sqrt() / 2.0;
        let expect = [2.0 - h, 2.0, 2.0 + h];
        for (v, e) in vals.iter().zip(expect) {
            assert!((v - e).abs() < 1e-14, "{v} vs {e}");
        }
        let v = vecs.unwrap();
        let recon = v.dot(&Array2::from_diag(&ndarray::Array1::from(vals))).dot(&v.t());
        for (x, y) in recon.iter().zip(a.iter()) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn values_only_matches_vectors_path() {
        let n = 40;
        let a = Array2::from_shape_fn((n, n), |(i, j)| {
            let (i, j) = (i.min(j) as f64, i.max(j) as f64);
            ((i + 1.0) * 0.37 + (j + 2.0) * 0.11).sin() / (1.0 + (j - i))
        });
        let (v1, _) = symmetric_eigen(&a, false).unwrap();
        let (v2, _) = symmetric_eigen(&a, true).unwrap();
        for (x, y) in v1.iter().zip(&v2) {
            assert!((x - y).abs() < 1e-12);
        }
        let trace: f64 = (0..n).map(|i| a[[i, i]]).sum();
        assert!((v1.iter().sum::<f64>() - trace).abs() < 1e-11);
    }

    #[test]
    fn hermitian_paths_agree() {
        let a = ndarray::arr2(&[
            [c(2.0, 0.0), c(0.3, 0.4), c(0.0, -0.2)],
            [c(0.3, -0.4), c(1.0, 0.0), c(0.5, 0.1)],
            [c(0.0, 0.2), c(0.5, -0.1), c(-1.0, 0.0)],
        ]);
        let (vals, _) = hermitian_eigen(&a, false).unwrap();
        let (vals_j, vecs) = hermitian_eigen(&a, true).unwrap();
        for (x, y) in vals.iter().zip(&vals_j) {
            assert!((x - y).abs() < 1e-13, "{x} vs {y}");
        }
        let v = vecs.unwrap();
        assert!(orthogonality_defect(&v) < 1e-13);
        // A v_k = lambda_k v_k
        for k in 0..3 {
            for i in 0..3 {
                let mut s = c(0.0, 0.0);
                for j in 0..3 {
                    s += a[[i, j]] * v[[j, k]];
                }
                assert!((s - v[[i, k]] * vals_j[k]).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn single_precision_solver() {
        let a = ndarray::arr2(&[[2.0f32, 0.5, 0.0], [0.5, 2.0, 0.5], [0.0, 0.5, 2.0]]);
        let (vals, _) = symmetric_eigen(&a, false).unwrap();
        assert!((vals[2] - (2.0 + 0.5f32.sqrt())).abs() < 1e-5);
    }

    #[test]
    fn first_row_gives_gauss_weights() {
        // Jacobi matrix of Legendre polynomials, 2 nodes: +-1/sqrt(3), weights 1/2 (normalized).
        let (x, z) = tridiagonal_eigen_first_row(&[0.0, 0.0], &[1.0 / 3f64.sqrt()]).unwrap();
        assert!((x[0] + 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((z[0] * z[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn non_finite_rejected() {
        let a = ndarray::arr2(&[[f64::NAN]]);
        assert!(matches!(symmetric_eigen(&a, false), Err(Error::Solver(_))));
    }

    #[test]
    fn least_squares_recovers_line() {
        let a = Array2::from_shape_fn((5, 2), |(i, j)| if j == 0 { 1.0 } else { i as f64 });
        let b: Vec<f64> = (0..5).map(|i| 2.0 - 0.5 * i as f64).collect();
        let x = least_squares(&a, &b).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-14 && (x[1] + 0.5).abs() < 1e-14);
    }
}
