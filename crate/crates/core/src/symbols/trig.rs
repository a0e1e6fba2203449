//! Exact Fourier data for expressions that are trigonometric polynomials in
//! the torus angles.

use std::collections::BTreeMap;

use num_complex::Complex;

use super::expr::{BinOp, Expr, Func, Var};
use crate::scalar::Real;

/// Sparse multi-index to coefficient map, `sigma(theta) = sum c_k e^{i k.theta}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPolynomial<T> {
    pub dim: usize,
    pub coeffs: BTreeMap<Vec<i64>, Complex<T>>,
}

const MAX_TERMS: usize = 200_000;
const MAX_POWER: i64 = 64;

impl<T: Real> TrigPolynomial<T> {
    pub fn constant(dim: usize, c: T) -> Self {
        let mut coeffs = BTreeMap::new();
        if c != T::zero() {
            coeffs.insert(vec![0; dim], Complex::new(c, T::zero()));
        }
        Self { dim, coeffs }
    }

    pub fn coefficient(&self, k: &[i64]) -> Complex<T> {
        self.coeffs.get(k).copied().unwrap_or_else(|| Complex::new(T::zero(), T::zero()))
    }

    /// Largest `|k_j|` over all stored indices and coordinates.
    pub fn degree(&self) -> i64 {
        self.coeffs.keys().flat_map(|k| k.iter().map(|v| v.abs())).max().unwrap_or(0)
    }

    pub fn eval(&self, theta: &[T]) -> T {
        let mut acc = T::zero();
        for (k, c) in &self.coeffs {
            let phase: T = k.iter().zip(theta).map(|(&kj, &t)| T::int(kj) * t).sum();
            acc += c.re * phase.cos() - c.im * phase.sin();
        }
        acc
    }

    /// Averages each coefficient with the conjugate of its mirror so the
    /// polynomial is exactly real-valued.
    pub fn enforce_hermitian(&mut self) {
        let keys: Vec<Vec<i64>> = self.coeffs.keys().cloned().collect();
        let mut out = BTreeMap::new();
        let half = T::lit(0.5);
        for k in keys {
            let m: Vec<i64> = k.iter().map(|v| -v).collect();
            let c = (self.coefficient(&k) + self.coefficient(&m).conj()) * half;
            if c.re != T::zero() || c.im != T::zero() {
                out.insert(k, c);
            }
        }
        self.coeffs = out;
    }

    pub fn is_hermitian(&self) -> bool {
        self.coeffs.iter().all(|(k, c)| {
            let m: Vec<i64> = k.iter().map(|v| -v).collect();
            self.coefficient(&m) == c.conj()
        })
    }

    fn add(mut self, other: &Self, sign: T) -> Self {
        for (k, c) in &other.coeffs {
            let e = self.coeffs.entry(k.clone()).or_insert_with(|| Complex::new(T::zero(), T::zero()));
            *e = *e + *c * sign;
        }
        self.coeffs.retain(|_, c| c.re != T::zero() || c.im != T::zero());
        self
    }

    fn mul(&self, other: &Self) -> Option<Self> {
        if self.coeffs.len().saturating_mul(other.coeffs.len()) > MAX_TERMS * 8 {
            return None;
        }
        let mut out: BTreeMap<Vec<i64>, Complex<T>> = BTreeMap::new();
        for (ka, ca) in &self.coeffs {
            for (kb, cb) in &other.coeffs {
                let k: Vec<i64> = ka.iter().zip(kb).map(|(a, b)| a + b).collect();
                let e = out.entry(k).or_insert_with(|| Complex::new(T::zero(), T::zero()));
                *e = *e + *ca * *cb;
            }
        }
        out.retain(|_, c| c.re != T::zero() || c.im != T::zero());
        (out.len() <= MAX_TERMS).then_some(Self { dim: self.dim, coeffs: out })
    }

    fn scale(mut self, s: T) -> Self {
        for c in self.coeffs.values_mut() {
            *c = *c * s;
        }
        self.coeffs.retain(|_, c| c.re != T::zero() || c.im != T::zero());
        self
    }

    /// Converts `expr` when it is a trigonometric polynomial in
    /// `theta1..theta{dim}`: sums, products, constant quotients and natural
    /// powers of constants and `cos`/`sin` of integer combinations of angles.
    pub fn from_expr(expr: &Expr, dim: usize) -> Option<Self> {
        if expr.vars().iter().any(|v| !matches!(v, Var::Theta(j) if *j < dim)) {
            return None;
        }
        Self::convert(expr, dim)
    }

    fn convert(expr: &Expr, dim: usize) -> Option<Self> {
        if let Some(c) = expr.as_constant() {
            return c.is_finite().then(|| Self::constant(dim, T::lit(c)));
        }
        match expr {
            Expr::Neg(a) => Some(Self::convert(a, dim)?.scale(-T::one())),
            Expr::Bin(BinOp::Add, a, b) => Some(Self::convert(a, dim)?.add(&Self::convert(b, dim)?, T::one())),
            Expr::Bin(BinOp::Sub, a, b) => Some(Self::convert(a, dim)?.add(&Self::convert(b, dim)?, -T::one())),
            Expr::Bin(BinOp::Mul, a, b) => Self::convert(a, dim)?.mul(&Self::convert(b, dim)?),
            Expr::Bin(BinOp::Div, a, b) => {
                let d = b.as_constant()?;
                (d != 0.0 && d.is_finite()).then_some(())?;
                Some(Self::convert(a, dim)?.scale(T::one() / T::lit(d)))
            }
            Expr::Bin(BinOp::Pow, a, b) => {
                let k = b.as_constant()?;
                if k.fract() != 0.0 || !(0.0..=MAX_POWER as f64).contains(&k) {
                    return None;
                }
                let base = Self::convert(a, dim)?;
                let mut acc = Self::constant(dim, T::one());
                for _ in 0..k as i64 {
                    acc = acc.mul(&base)?;
                }
                Some(acc)
            }
            Expr::Call(f @ (Func::Cos | Func::Sin), arg) => {
                let (k, shift) = linear_form(arg, dim)?;
                let (s, c) = T::lit(shift).sin_cos();
                let half = T::lit(0.5);
                // cos(L + c) = (e^{ic} e^{iL} + e^{-ic} e^{-iL}) / 2
                // sin(L + c) = (e^{ic} e^{iL} - e^{-ic} e^{-iL}) / (2i)
                let plus = Complex::new(c, s) * half;
                let (cp, cm) = match f {
                    Func::Cos => (plus, plus.conj()),
                    _ => (plus * Complex::new(T::zero(), -T::one()), plus.conj() * Complex::new(T::zero(), T::one())),
                };
                let neg: Vec<i64> = k.iter().map(|v| -v).collect();
                let mut out = Self { dim, coeffs: BTreeMap::new() };
                if k.iter().all(|&v| v == 0) {
                    return Some(Self::constant(dim, (cp + cm).re));
                }
                out.coeffs.insert(k, cp);
                out.coeffs.insert(neg, cm);
                Some(out)
            }
            _ => None,
        }
    }
}

/// `arg = sum_j k_j theta_j + c` with integer `k_j`.
fn linear_form(arg: &Expr, dim: usize) -> Option<(Vec<i64>, f64)> {
    fn go(e: &Expr, dim: usize) -> Option<(Vec<f64>, f64)> {
        if let Some(c) = e.as_constant() {
            return Some((vec![0.0; dim], c));
        }
        match e {
            Expr::Var(Var::Theta(j)) => {
                let mut k = vec![0.0; dim];
                k[*j] = 1.0;
                Some((k, 0.0))
            }
            Expr::Neg(a) => {
                let (k, c) = go(a, dim)?;
                Some((k.iter().map(|v| -v).collect(), -c))
            }
            Expr::Bin(op @ (BinOp::Add | BinOp::Sub), a, b) => {
                let (ka, ca) = go(a, dim)?;
                let (kb, cb) = go(b, dim)?;
                let s = if *op == BinOp::Add { 1.0 } else { -1.0 };
                Some((ka.iter().zip(&kb).map(|(x, y)| x + s * y).collect(), ca + s * cb))
            }
            Expr::Bin(BinOp::Mul, a, b) => {
                if let Some(c) = a.as_constant() {
                    let (k, s) = go(b, dim)?;
                    Some((k.iter().map(|v| c * v).collect(), c * s))
                } else {
                    let c = b.as_constant()?;
                    let (k, s) = go(a, dim)?;
                    Some((k.iter().map(|v| c * v).collect(), c * s))
                }
            }
            Expr::Bin(BinOp::Div, a, b) => {
                let c = b.as_constant()?;
                let (k, s) = go(a, dim)?;
                Some((k.iter().map(|v| v / c).collect(), s / c))
            }
            _ => None,
        }
    }
    let (k, c) = go(arg, dim)?;
    let mut out = Vec::with_capacity(dim);
    for v in k {
        let r = v.round();
        if (v - r).abs() > 1e-12 || r.abs() > 1e6 {
            return None;
        }
        out.push(r as i64);
    }
    c.is_finite().then_some((out, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbols::expr::parse_expr;

    fn tp(s: &str, d: usize) -> Option<TrigPolynomial<f64>> {
        TrigPolynomial::from_expr(&parse_expr(s).unwrap(), d)
    }

    #[test]
    fn cosine_plus_constant() {
        let p = tp("2 + cos(theta1)", 1).unwrap();
        assert_eq!(p.coefficient(&[0]).re, 2.0);
        assert_eq!(p.coefficient(&[1]).re, 0.5);
        assert_eq!(p.coefficient(&[-1]).re, 0.5);
        assert_eq!(p.coefficient(&[2]).re, 0.0);
        assert!(p.is_hermitian());
    }

    #[test]
    fn products_powers_and_shifts() {
        let p = tp("(cos(theta1))^2 + sin(2*theta1 - theta2 + 0.3)", 2).unwrap();
        let th = [0.7f64, -1.1];
        let direct = th[0].cos().powi(2) + (2.0 * th[0] - th[1] + 0.3).sin();
        assert!((p.eval(&th) - direct).abs() < 1e-14);
        assert!((p.coefficient(&[2, 0]).re - 0.25).abs() < 1e-16);
        assert_eq!(p.degree(), 2);
    }

    #[test]
    fn rejects_non_polynomials() {
        assert!(tp("exp(cos(theta1))", 1).is_none());
        assert!(tp("theta1", 1).is_none());
        assert!(tp("cos(theta1 / 2)", 1).is_none());
        assert!(tp("1 / (2 + cos(theta1))", 1).is_none());
        assert!(tp("cos(theta2)", 1).is_none());
    }
}
