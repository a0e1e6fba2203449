//! Gauss rules built with Golub-Welsch, composite panel rules and the
//! decay-model machinery used to extrapolate truncated sums and integrals.

use crate::error::{Error, Result};
use crate::linalg::tridiagonal_eigen_first_row;
use crate::scalar::{compensated_sum, Real};

/// A one-dimensional Gauss rule. Weights are normalized to unit total mass.
#[derive(Debug, Clone)]
pub struct GaussRule<T> {
    pub nodes: Vec<T>,
    /// `1 - node`, computed without cancellation (Jacobi rules only).
    pub complement: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> GaussRule<T> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `sum_i w_i f(t_i, 1 - t_i)`.
    pub fn apply(&self, mut f: impl FnMut(T, T) -> T) -> T {
        compensated_sum(
            self.nodes
                .iter()
                .zip(&self.complement)
                .zip(&self.weights)
                .map(|((&t, &c), &w)| w * f(t, c)),
        )
    }
}

/// Gauss-Jacobi rule on `[0, 1]` for the weight `(1 - t)^a t^b`, `a, b > -1`.
pub fn gauss_jacobi<T: Real>(m: usize, a: T, b: T) -> Result<GaussRule<T>> {
    if m == 0 {
        return Err(Error::config("Gauss rule needs at least one node"));
    }
    if a <= -T::one() || b <= -T::one() || !a.is_finite() || !b.is_finite() {
        return Err(Error::domain(format!(
            "Jacobi exponents must exceed -1 (got a = {a}, b = {b})"
        )));
    }
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let ab = a + b;
    let mut diag = Vec::with_capacity(m);
    let mut off = Vec::with_capacity(m.saturating_sub(1));
    for k in 0..m {
        let kk = T::idx(k);
        let s = two * kk + ab;
        if k == 0 {
            diag.push((b - a) / (ab + two));
        } else {
            diag.push((b * b - a * a) / (s * (s + two)));
            let num = four * kk * (kk + a) * (kk + b) * (kk + ab);
            let den = s * s * (s + T::one()) * (s - T::one());
            off.push((num / den).sqrt());
        }
    }
    let (x, z) = tridiagonal_eigen_first_row(&diag, &off)?;
    let half = T::lit(0.5);
    Ok(GaussRule {
        nodes: x.iter().map(|&x| (T::one() + x) * half).collect(),
        complement: x.iter().map(|&x| (T::one() - x) * half).collect(),
        weights: z.iter().map(|&z| z * z).collect(),
    })
}

/// Gauss-Legendre rule on `[0, 1]` (weights sum to one).
pub fn gauss_legendre<T: Real>(m: usize) -> GaussRule<T> {
    gauss_jacobi(m, T::zero(), T::zero()).expect("Legendre rule is always well posed")
}

/// Generalized Gauss-Laguerre rule for the weight `u^a e^{-u}` on `[0, inf)`.
pub fn gauss_laguerre<T: Real>(m: usize, a: T) -> Result<GaussRule<T>> {
    if m == 0 {
        return Err(Error::config("Gauss rule needs at least one node"));
    }
    if a <= -T::one() {
        return Err(Error::domain(format!("Laguerre exponent must exceed -1 (got {a})")));
    }
    let diag: Vec<T> = (0..m).map(|k| T::lit(2.0) * T::idx(k) + a + T::one()).collect();
    let off: Vec<T> = (1..m).map(|k| (T::idx(k) * (T::idx(k) + a)).sqrt()).collect();
    let (x, z) = tridiagonal_eigen_first_row(&diag, &off)?;
    Ok(GaussRule {
        complement: x.iter().map(|&x| T::one() - x).collect(),
        nodes: x,
        weights: z.iter().map(|&z| z * z).collect(),
    })
}

/// Composite Gauss-Legendre on `[a, b]` split into `panels` equal pieces.
pub fn composite<T: Real>(rule: &GaussRule<T>, a: T, b: T, panels: usize, mut f: impl FnMut(T) -> T) -> T {
    let h = (b - a) / T::idx(panels.max(1));
    let mut parts = Vec::with_capacity(panels);
    for p in 0..panels.max(1) {
        let lo = a + h * T::idx(p);
        parts.push(h * rule.apply(|t, _| f(lo + h * t)));
    }
    compensated_sum(parts)
}

/// Integrates `f` over `[start, inf)` for an integrand decaying at least
/// algebraically, via `x = start + scale * (e^s - 1)`. Stops when several
/// consecutive panels contribute below `rel_tol` of the running total.
pub fn integrate_to_infinity<T: Real>(
    rule: &GaussRule<T>,
    start: T,
    scale: T,
    rel_tol: T,
    mut f: impl FnMut(T) -> T,
) -> T {
    let width = T::lit(0.25);
    let s_max = T::max_value().ln() * T::lit(0.8);
    let mut total = T::zero();
    let mut parts = Vec::new();
    let mut quiet = 0;
    let mut s0 = T::zero();
    while s0 < s_max {
        let piece = width
            * rule.apply(|t, _| {
                let s = s0 + width * t;
                let es = s.exp();
                f(start + scale * (es - T::one())) * scale * es
            });
        parts.push(piece);
        total += piece;
        // Leading zero pieces (integrand supported further out) do not count.
        let settled = total != T::zero() || s0 > T::lit(40.0);
        if settled && (piece.abs() <= rel_tol * total.abs() || piece == T::zero()) {
            quiet += 1;
            if quiet >= 4 {
                break;
            }
        } else {
            quiet = 0;
        }
        s0 += width;
    }
    compensated_sum(parts)
}

/// Asymptotic model for a decaying sequence of constant sign:
/// `v(x) = sign * exp(a0 + beta x - q ln(x / n_ref) + sum_j c_j T_j(2 n_ref / x - 3))`
/// with Chebyshev polynomials `T_j`, fitted on `[n_ref / 2, n_ref]`. The
/// Chebyshev part is a polynomial in `1 / x`, so the model covers the usual
/// asymptotic expansions of algebraically and geometrically decaying terms.
#[derive(Debug, Clone, PartialEq)]
pub enum DecayModel<T> {
    /// The sequence vanishes identically on the fitted window.
    Zero,
    LogExpansion {
        sign: T,
        n_ref: T,
        a0: T,
        beta: T,
        q: T,
        coeffs: Vec<T>,
    },
}

fn chebyshev<T: Real>(w: T, degree: usize, out: &mut Vec<T>) {
    out.clear();
    let (mut p0, mut p1) = (T::one(), w);
    for j in 1..=degree {
        out.push(p1);
        if j < degree {
            let p2 = (w + w) * p1 - p0;
            p0 = p1;
            p1 = p2;
        }
    }
}

impl<T: Real> DecayModel<T> {
    pub fn eval(&self, x: T) -> T {
        match self {
            DecayModel::Zero => T::zero(),
            DecayModel::LogExpansion { sign, n_ref, a0, beta, q, coeffs } => {
                let mut t = Vec::with_capacity(coeffs.len());
                chebyshev(T::lit(2.0) * *n_ref / x - T::lit(3.0), coeffs.len(), &mut t);
                let poly: T = coeffs.iter().zip(&t).map(|(&c, &t)| c * t).sum();
                *sign * (*a0 + *beta * x - *q * (x / *n_ref).ln() + poly).exp()
            }
        }
    }

    /// Whether `sum_n v(n)` converges under the model.
    pub fn summable(&self) -> bool {
        match self {
            DecayModel::Zero => true,
            DecayModel::LogExpansion { beta, q, .. } => *beta < T::zero() || (*beta == T::zero() && *q > T::one()),
        }
    }

    /// Fits the model to `seq[n_ref / 2 ..= n_ref]` with `degree` Chebyshev
    /// terms, where `n_ref = seq.len() - 1`.
    pub fn fit(seq: &[T], degree: usize) -> Option<Self> {
        let last = seq.len().checked_sub(1)?;
        let first = last / 2;
        if last < 8 || last - first < degree + 3 {
            return None;
        }
        let window = &seq[first..=last];
        if window.iter().all(|&v| v == T::zero()) {
            return Some(DecayModel::Zero);
        }
        let sign = window[window.len() - 1].signum();
        if window.iter().any(|&v| v == T::zero() || v.signum() != sign || !v.is_finite()) {
            return None;
        }
        let samples = 48.min(window.len());
        let pick: Vec<usize> = (0..samples)
            .map(|i| first + (i * (last - first)) / (samples - 1).max(1))
            .collect();
        let n_ref = T::idx(last);
        let mut basis = Vec::new();
        let build = |with_beta: bool, basis: &mut Vec<T>| {
            let cols = 2 + degree + usize::from(with_beta);
            let mut a = ndarray::Array2::<T>::zeros((pick.len(), cols));
            let mut y = Vec::with_capacity(pick.len());
            for (r, &n) in pick.iter().enumerate() {
                let x = T::idx(n);
                chebyshev(T::lit(2.0) * n_ref / x - T::lit(3.0), degree, basis);
                a[[r, 0]] = T::one();
                a[[r, 1]] = -(x / n_ref).ln();
                for (j, &t) in basis.iter().enumerate() {
                    a[[r, 2 + j]] = t;
                }
                if with_beta {
                    a[[r, cols - 1]] = x / n_ref;
                }
                y.push(seq[n].abs().ln());
            }
            let coef = crate::linalg::least_squares(&a, &y).ok()?;
            let resid = pick
                .iter()
                .enumerate()
                .map(|(r, _)| {
                    let fit: T = (0..cols).map(|c| a[[r, c]] * coef[c]).sum();
                    (fit - y[r]).abs()
                })
                .fold(T::zero(), T::max);
            let beta = if with_beta { coef[cols - 1] / n_ref } else { T::zero() };
            Some((
                DecayModel::LogExpansion {
                    sign,
                    n_ref,
                    a0: coef[0],
                    beta,
                    q: coef[1],
                    coeffs: coef[2..2 + degree].to_vec(),
                },
                resid,
            ))
        };
        let (power, r_power) = build(false, &mut basis)?;
        if r_power <= T::lit(1e-9) {
            return Some(power);
        }
        match build(true, &mut basis) {
            Some((geo, r_geo)) if r_geo * T::lit(10.0) < r_power => Some(geo),
            _ => Some(power),
        }
    }
}

/// `sum_{n = first}^inf h(n)` for a smooth decaying `h` defined on reals.
/// The leading terms are summed explicitly; the remainder uses the midpoint
/// Euler-Maclaurin formula, whose higher corrections are then negligible.
pub fn tail_sum<T: Real>(rule: &GaussRule<T>, first: usize, h: impl Fn(T) -> T) -> T {
    const EXPLICIT: usize = 4096;
    let head = compensated_sum((first..first + EXPLICIT).map(|n| h(T::idx(n))));
    let x0 = T::idx(first + EXPLICIT) - T::lit(0.5);
    let integral = integrate_to_infinity(rule, x0, T::one(), T::epsilon() * T::lit(0.1), &h);
    let step = T::lit(0.25);
    let deriv = (h(x0 + step) - h(x0 - step)) / (step + step);
    head + integral + deriv / T::lit(24.0)
}

/// Tail of `sum_{n > N} g(v_1(n), v_2(n), ...)` for sequences known on
/// `0..=N`. The primary and alternate fits differ in expansion order; their
/// disagreement is the reported uncertainty.
#[derive(Debug, Clone)]
pub struct TailExtrapolation<T> {
    pub primary: Vec<DecayModel<T>>,
    pub alternate: Vec<DecayModel<T>>,
}

impl<T: Real> TailExtrapolation<T> {
    /// Fits each of `sequences` (all of the same length `N + 1`).
    pub fn fit(sequences: &[&[T]]) -> Option<Self> {
        let len = sequences.first()?.len();
        if len < 24 || sequences.iter().any(|s| s.len() != len) {
            return None;
        }
        let mut primary = Vec::new();
        let mut alternate = Vec::new();
        for seq in sequences {
            primary.push(DecayModel::fit(seq, 6)?);
            alternate.push(DecayModel::fit(seq, 5)?);
        }
        Some(Self { primary, alternate })
    }

    pub fn summable(&self) -> bool {
        self.primary.iter().all(|m| m.summable())
    }

    /// Tail of `sum_{n > N} g(values(n))` with uncertainty from the two fits.
    pub fn tail(&self, first: usize, g: impl Fn(&[T]) -> T) -> (T, T) {
        let rule = gauss_legendre::<T>(24);
        let eval = |models: &[DecayModel<T>]| {
            tail_sum(&rule, first, |x| {
                let vals: Vec<T> = models.iter().map(|m| m.eval(x)).collect();
                g(&vals)
            })
        };
        let a = eval(&self.primary);
        let b = eval(&self.alternate);
        (a, (a - b).abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_five_point_reference() {
        let r = gauss_legendre::<f64>(5);
        // Reference nodes on [-1, 1] mapped to [0, 1].
        let x = [-0.906_179_845_938_664, -0.538_469_310_105_683, 0.0, 0.538_469_310_105_683, 0.906_179_845_938_664];
        let w = [0.236_926_885_056_189_1, 0.478_628_670_499_366_5, 0.568_888_888_888_888_9, 0.478_628_670_499_366_5, 0.236_926_885_056_189_1];
        for i in 0..5 {
            assert!((r.nodes[i] - (1.0 + x[i]) / 2.0).abs() < 1e-15);
            assert!((r.weights[i] - w[i] / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn jacobi_rule_is_exact_for_beta_moments() {
        // E[t^3] under Beta(1, a+1) with weight (1-t)^a: 3! Gamma(a+2) / Gamma(a+5).
        let a = 7.5;
        let r = gauss_jacobi::<f64>(4, a, 0.0).unwrap();
        let m = r.apply(|t, _| t * t * t);
        let exact = 6.0 / ((a + 2.0) * (a + 3.0) * (a + 4.0));
        assert!((m - exact).abs() < 1e-15);
    }

    #[test]
    fn laguerre_moments() {
        let r = gauss_laguerre::<f64>(10, 2.0).unwrap();
        // E[u^2] for Gamma(3) = 3 * 4.
        assert!((r.apply(|u, _| u * u) - 12.0).abs() < 1e-12);
        assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn infinity_integral_of_power() {
        let rule = gauss_legendre::<f64>(16);
        let v = integrate_to_infinity(&rule, 2.0, 2.0, 1e-17, |x| x.powi(-3));
        assert!((v - 0.125).abs() < 1e-13, "{v}");
    }

    #[test]
    fn tail_of_rational_sequence() {
        // sum_{n > N} 1 / ((n + 5)(n + 6)) = 1 / (N + 6)
        let seq: Vec<f64> = (0..=400).map(|n| 1.0 / ((n as f64 + 5.0) * (n as f64 + 6.0))).collect();
        let fit = TailExtrapolation::fit(&[&seq]).unwrap();
        let (t, unc) = fit.tail(401, |v| v[0]);
        assert!((t - 1.0 / 406.0).abs() < 1e-12, "{t} vs {}", 1.0 / 406.0);
        assert!(unc < 1e-9, "{unc}");
    }

    #[test]
    fn tail_of_slowly_decaying_sequence() {
        // (a+1)(a+2) / ((n+a+2)(n+a+3)) with a = 3: tail after N is 20 / (N + 6).
        let seq: Vec<f64> = (0..=256).map(|n| 20.0 / ((n as f64 + 5.0) * (n as f64 + 6.0))).collect();
        let fit = TailExtrapolation::fit(&[&seq]).unwrap();
        let (t, unc) = fit.tail(257, |v| v[0]);
        let exact = 20.0 / 262.0;
        assert!((t - exact).abs() < 1e-10, "{t} vs {exact}");
        assert!((t - exact).abs() <= unc.max(1e-12) * 10.0);
    }

    #[test]
    fn tail_of_geometric_sequence() {
        let r: f64 = 0.9;
        let seq: Vec<f64> = (0..=200).map(|n| r.powi(n as i32 + 1)).collect();
        let fit = TailExtrapolation::fit(&[&seq]).unwrap();
        assert!(matches!(fit.primary[0], DecayModel::LogExpansion { beta, .. } if beta < 0.0));
        let (t, _) = fit.tail(201, |v| v[0]);
        let exact = r.powi(202) / (1.0 - r);
        assert!((t - exact).abs() < 1e-10 * exact, "{t} vs {exact}");
    }
}
