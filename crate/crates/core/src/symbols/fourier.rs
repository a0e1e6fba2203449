//! Fourier coefficient tables for torus and finite-group symbols.

use num_complex::Complex;
use rustfft::FftPlanner;

use crate::scalar::Real;

/// Forward multi-dimensional DFT in place, row-major `shape`, normalized by
/// the total size so that entries are Fourier coefficients.
pub fn dft_n<T: Real>(data: &mut [Complex<T>], shape: &[usize]) {
    let total: usize = shape.iter().product();
    assert_eq!(total, data.len(), "shape does not match data");
    let mut planner = FftPlanner::<T>::new();
    let mut stride = 1;
    for axis in (0..shape.len()).rev() {
        let n = shape[axis];
        let fft = planner.plan_fft_forward(n);
        let mut line = vec![Complex::new(T::zero(), T::zero()); n];
        let block = n * stride;
        for outer in (0..total).step_by(block) {
            for inner in 0..stride {
                for (i, slot) in line.iter_mut().enumerate() {
                    *slot = data[outer + inner + i * stride];
                }
                fft.process(&mut line);
                for (i, v) in line.iter().enumerate() {
                    data[outer + inner + i * stride] = *v;
                }
            }
        }
        stride *= n;
    }
    let scale = T::one() / T::idx(total);
    for v in data.iter_mut() {
        *v = *v * scale;
    }
}

/// Coefficients `sigma_hat(k)` stored densely. On a torus the table covers
/// `|k_j| <= radius[j]` (zero outside); on a finite group indices are
/// reduced modulo the moduli.
#[derive(Debug, Clone)]
pub struct FourierTable<T> {
    /// Per-axis extent: `2 radius + 1` on the torus, the modulus on a group.
    pub shape: Vec<usize>,
    pub periodic: bool,
    pub data: Vec<Complex<T>>,
}

impl<T: Real> FourierTable<T> {
    pub fn get(&self, k: &[i64]) -> Complex<T> {
        let mut flat = 0usize;
        for (j, &kj) in k.iter().enumerate() {
            let n = self.shape[j] as i64;
            let idx = if self.periodic {
                kj.rem_euclid(n)
            } else {
                let r = (n - 1) / 2;
                if kj.abs() > r {
                    return Complex::new(T::zero(), T::zero());
                }
                kj + r
            };
            flat = flat * self.shape[j] + idx as usize;
        }
        self.data[flat]
    }

    /// Builds a non-periodic table from a full grid DFT of size `m^d`.
    pub fn from_grid_dft(dft: &[Complex<T>], m: usize, dim: usize, radius: usize) -> Self {
        let side = 2 * radius + 1;
        let total = side.pow(dim as u32);
        let mut data = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rem = flat;
            let mut src = 0usize;
            let mut digits = vec![0usize; dim];
            for d in (0..dim).rev() {
                digits[d] = rem % side;
                rem /= side;
            }
            for &dg in &digits {
                let k = dg as i64 - radius as i64;
                src = src * m + k.rem_euclid(m as i64) as usize;
            }
            data.push(dft[src]);
        }
        Self {
            shape: vec![side; dim],
            periodic: false,
            data,
        }
    }

    /// Averages each coefficient with the conjugate of its mirror.
    pub fn enforce_hermitian(&mut self) {
        let dims = self.shape.clone();
        let total = self.data.len();
        let mirror = |flat: usize| -> usize {
            let mut rem = flat;
            let mut digits = vec![0usize; dims.len()];
            for d in (0..dims.len()).rev() {
                digits[d] = rem % dims[d];
                rem /= dims[d];
            }
            let mut out = 0;
            for (d, &dg) in digits.iter().enumerate() {
                // Both layouts are symmetric under index -> (n - index) mod n
                // (periodic) or index -> n - 1 - index (centered).
                let m = if self.periodic { (dims[d] - dg) % dims[d] } else { dims[d] - 1 - dg };
                out = out * dims[d] + m;
            }
            out
        };
        let half = T::lit(0.5);
        let old = self.data.clone();
        for flat in 0..total {
            self.data[flat] = (old[flat] + old[mirror(flat)].conj()) * half;
        }
    }

    pub fn max_hermitian_defect(&self) -> T {
        let mut worst = T::zero();
        let dims = &self.shape;
        for flat in 0..self.data.len() {
            let mut rem = flat;
            let mut k = vec![0i64; dims.len()];
            for d in (0..dims.len()).rev() {
                let dg = (rem % dims[d]) as i64;
                rem /= dims[d];
                k[d] = if self.periodic { dg } else { dg - (dims[d] as i64 - 1) / 2 };
            }
            let neg: Vec<i64> = k.iter().map(|v| -v).collect();
            let d = (self.data[flat] - self.get(&neg).conj()).norm();
            worst = worst.max(d);
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dft_of_cosine() {
        let m = 8;
        let mut v: Vec<Complex<f64>> = (0..m)
            .map(|k| Complex::new(2.0 + (std::f64::consts::TAU * k as f64 / m as f64).cos(), 0.0))
            .collect();
        dft_n(&mut v, &[m]);
        assert!((v[0].re - 2.0).abs() < 1e-15);
        assert!((v[1].re - 0.5).abs() < 1e-15);
        assert!((v[m - 1].re - 0.5).abs() < 1e-15);
        let t = FourierTable::from_grid_dft(&v, m, 1, 2);
        assert!((t.get(&[-1]).re - 0.5).abs() < 1e-15);
        assert!(t.get(&[2]).norm() < 1e-15);
        assert_eq!(t.get(&[3]).norm(), 0.0);
    }

    #[test]
    fn two_dimensional_layout() {
        let m = 4;
        let mut v = vec![Complex::new(0.0, 0.0); m * m];
        for a in 0..m {
            for b in 0..m {
                let th = std::f64::consts::TAU / m as f64;
                v[a * m + b] = Complex::new((th * a as f64).cos() + 0.25 * (th * b as f64).sin(), 0.0);
            }
        }
        dft_n(&mut v, &[m, m]);
        let t = FourierTable::from_grid_dft(&v, m, 2, 1);
        assert!((t.get(&[1, 0]).re - 0.5).abs() < 1e-15);
        // sin = (e^{i} - e^{-i}) / 2i, so the +1 coefficient is -i/8.
        assert!((t.get(&[0, 1]).im + 0.125).abs() < 1e-15);
        assert!(t.max_hermitian_defect() < 1e-15);
    }
}
