//! Finite truncations of Toeplitz operators in explicit orthonormal bases.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use ndarray::Array2;
use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quadrature::{gauss_jacobi, gauss_laguerre, gauss_legendre, GaussRule, TailExtrapolation};
use crate::scalar::{compensated_sum, ln_gamma, Real};
use crate::settings::{boundary_exponent, Domain, Family, FrameSetting, SettingIndex, Point};
use crate::symbols::fourier::dft_n;
use crate::symbols::Symbol;

#[derive(Debug, Clone, PartialEq)]
pub enum BasisKind {
    /// Characters indexed by the Folner box, row-major.
    Exponentials { indices: Vec<Vec<i64>> },
    /// Normalized monomials `e_0 .. e_{n_cut - 1}`.
    Monomials { n_cut: usize },
    /// `sqrt(2 alpha) sinc(2 alpha x - k)`, `k = -half_width ..= half_width`.
    ShiftedSinc { half_width: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisDescriptor<T> {
    pub setting: SettingIndex<T>,
    pub kind: BasisKind,
    pub size: usize,
}

impl<T: Real> BasisDescriptor<T> {
    pub fn describe(&self) -> String {
        match &self.kind {
            BasisKind::Exponentials { indices } => {
                let d = indices.first().map_or(0, |k| k.len());
                format!("exponentials dim={d} count={}", indices.len())
            }
            BasisKind::Monomials { n_cut } => format!("monomials 0..{n_cut}"),
            BasisKind::ShiftedSinc { half_width } => format!("shifted-sinc -{half_width}..{half_width}"),
        }
    }
}

/// Hermitian matrix storage.
#[derive(Debug, Clone, PartialEq)]
pub enum OperatorMatrix<T> {
    /// Exactly diagonal in the basis.
    Diagonal(Vec<T>),
    Real(Array2<T>),
    Complex(Array2<Complex<T>>),
}

impl<T: Real> OperatorMatrix<T> {
    pub fn is_diagonal(&self) -> bool {
        matches!(self, OperatorMatrix::Diagonal(_))
    }

    pub fn size(&self) -> usize {
        match self {
            OperatorMatrix::Diagonal(d) => d.len(),
            OperatorMatrix::Real(a) => a.nrows(),
            OperatorMatrix::Complex(a) => a.nrows(),
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex<T> {
        let z = T::zero();
        match self {
            OperatorMatrix::Diagonal(d) => Complex::new(if i == j { d[i] } else { z }, z),
            OperatorMatrix::Real(a) => Complex::new(a[[i, j]], z),
            OperatorMatrix::Complex(a) => a[[i, j]],
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.size()).map(|i| self.entry(i, i).re).collect()
    }

    pub fn to_complex(&self) -> Array2<Complex<T>> {
        let n = self.size();
        Array2::from_shape_fn((n, n), |(i, j)| self.entry(i, j))
    }

    /// `max |A_ij - conj(A_ji)|`.
    pub fn hermitian_defect(&self) -> T {
        match self {
            OperatorMatrix::Diagonal(_) => T::zero(),
            _ => {
                let n = self.size();
                let mut worst = T::zero();
                for i in 0..n {
                    for j in 0..=i {
                        worst = worst.max((self.entry(i, j) - self.entry(j, i).conj()).norm());
                    }
                }
                worst
            }
        }
    }

    /// Real storage when every imaginary part vanishes.
    fn from_complex(a: Array2<Complex<T>>) -> Self {
        if a.iter().all(|z| z.im == T::zero()) {
            OperatorMatrix::Real(a.mapv(|z| z.re))
        } else {
            OperatorMatrix::Complex(a)
        }
    }
}

#[derive(Debug, Clone)]
pub struct TruncatedOperator<T> {
    pub matrix: OperatorMatrix<T>,
    pub basis: BasisDescriptor<T>,
    pub symbol_tag: String,
    /// Estimate of the trace carried by basis vectors beyond the truncation;
    /// `None` when it could not be estimated.
    pub tail_estimate: Option<T>,
    pub tail_uncertainty: T,
    /// Decay model of the diagonal sequence, for extrapolating trace
    /// functionals of diagonal operators past the truncation.
    pub tail_model: Option<TailExtrapolation<T>>,
}

impl<T: Real> TruncatedOperator<T> {
    pub fn size(&self) -> usize {
        self.basis.size
    }

    /// Eigenvalues in basis order, when the operator is exactly diagonal.
    pub fn exact_diagonal(&self) -> Option<&[T]> {
        match &self.matrix {
            OperatorMatrix::Diagonal(d) => Some(d),
            _ => None,
        }
    }

    /// `tr` of the truncation (without tail).
    pub fn trace(&self) -> T {
        compensated_sum(self.matrix.diagonal())
    }
}

/// Knobs shared by the assembly routines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyOptions<T> {
    /// Number of monomials (Bergman, Fock); chosen automatically when `None`.
    pub n_cut: Option<usize>,
    /// Half width `K` of the shifted-sinc basis (Paley-Wiener).
    pub half_width: Option<usize>,
    pub tol_quad: T,
    /// Target uncertainty of the extrapolated trace tail, relative to the trace.
    pub tol_tail: T,
    /// Use the general two-dimensional path even for radial symbols.
    pub force_dense: bool,
}

impl<T: Real> Default for AssemblyOptions<T> {
    fn default() -> Self {
        Self {
            n_cut: None,
            half_width: None,
            tol_quad: T::lit(1e-12),
            tol_tail: T::lit(1e-8),
            force_dense: false,
        }
    }
}

const DENSE_DEFAULT_N: usize = 192;
const MAX_DIAGONAL_N: usize = 1 << 20;

/// Assembles the truncation appropriate to `setting`.
pub fn assemble<T: Real>(setting: &FrameSetting<T>, sigma: &Symbol<T>, opts: &AssemblyOptions<T>) -> Result<TruncatedOperator<T>> {
    if sigma.domain != setting.domain {
        return Err(Error::domain(format!(
            "symbol lives on {:?} but the setting is {}",
            sigma.domain,
            setting.family()
        )));
    }
    match setting.family() {
        Family::Torus { .. } => assemble_torus(sigma, setting, opts),
        Family::Group { .. } => assemble_group(sigma, setting, opts),
        Family::Bergman => assemble_bergman(sigma, setting.alpha(), opts),
        Family::Fock => assemble_fock(sigma, setting.alpha(), opts),
        Family::PaleyWiener => assemble_paley_wiener(sigma, setting.alpha(), opts),
    }
}

/// `[sigma_hat(j - k)]` over the Folner box `{-n..n}^d`.
pub fn assemble_torus<T: Real>(sigma: &Symbol<T>, setting: &FrameSetting<T>, opts: &AssemblyOptions<T>) -> Result<TruncatedOperator<T>> {
    if !matches!(setting.family(), Family::Torus { .. }) {
        return Err(Error::config("assemble_torus needs a torus setting"));
    }
    box_operator(sigma, setting, opts)
}

/// `[sigma_hat(xi - eta)]` over the dual box of a finite abelian group.
pub fn assemble_group<T: Real>(sigma: &Symbol<T>, setting: &FrameSetting<T>, opts: &AssemblyOptions<T>) -> Result<TruncatedOperator<T>> {
    if !matches!(setting.family(), Family::Group { .. }) {
        return Err(Error::config("assemble_group needs a finite group setting"));
    }
    box_operator(sigma, setting, opts)
}

fn box_operator<T: Real>(sigma: &Symbol<T>, setting: &FrameSetting<T>, opts: &AssemblyOptions<T>) -> Result<TruncatedOperator<T>> {
    if !sigma.is_bounded() {
        return Err(Error::Unsupported("unbounded symbols are not supported on the torus".into()));
    }
    let indices = setting.dual_box();
    let radius = setting.dual_axes().iter().map(|a| a.len() - 1).max().unwrap_or(0);
    let table = sigma.fourier_table(setting, radius, opts.tol_quad)?;
    let n = indices.len();
    let mut a = Array2::from_elem((n, n), Complex::new(T::zero(), T::zero()));
    for i in 0..n {
        for j in 0..=i {
            let k: Vec<i64> = indices[i].iter().zip(&indices[j]).map(|(x, y)| x - y).collect();
            let v = table.get(&k);
            a[[i, j]] = v;
            a[[j, i]] = v.conj();
        }
        a[[i, i]].im = T::zero();
    }
    let matrix = OperatorMatrix::from_complex(a);
    Ok(TruncatedOperator {
        matrix,
        basis: BasisDescriptor {
            setting: setting.index.clone(),
            kind: BasisKind::Exponentials { indices },
            size: n,
        },
        symbol_tag: sigma.text(),
        tail_estimate: Some(T::zero()),
        tail_uncertainty: T::zero(),
        tail_model: None,
    })
}

fn require_integrable<T: Real>(sigma: &Symbol<T>, setting: &FrameSetting<T>, tol: T) -> Result<()> {
    if sigma.is_zero() {
        return Ok(());
    }
    // Only divergence matters here; a slowly converging norm is still finite.
    match sigma.norms(setting, tol.max(T::lit(1e-6))) {
        Ok(_) | Err(Error::Accuracy { .. }) => Ok(()),
        Err(e) => Err(e),
    }
}

/// Monomial-basis truncation on the weighted Bergman space `A^2_alpha`.
pub fn assemble_bergman<T: Real>(sigma: &Symbol<T>, alpha: T, opts: &AssemblyOptions<T>) -> Result<TruncatedOperator<T>> {
    let setting = FrameSetting::bergman(alpha)?;
    if sigma.domain != Domain::Disk {
        return Err(Error::domain("Bergman symbols must be defined on the disk"));
    }
    require_integrable(sigma, &setting, opts.tol_quad)?;
    if sigma.is_radial() && !opts.force_dense {
        let p = radial_boundary_exponent(sigma);
        let eval = move |n: usize, m: usize| bergman_radial_eigenvalue(sigma, alpha, p, n, m);
        return radial_operator(sigma, &setting, opts, &eval);
    }
    if !sigma.is_bounded() {
        return Err(Error::Unsupported("unbounded non-radial symbols cannot be assembled".into()));
    }
    let n = opts.n_cut.unwrap_or(DENSE_DEFAULT_N);
    dense_planar(sigma, &setting, n, opts)
}

/// Monomial-basis truncation on the Fock space `F^2_alpha`.
pub fn assemble_fock<T: Real>(sigma: &Symbol<T>, alpha: T, opts: &AssemblyOptions<T>) -> Result<TruncatedOperator<T>> {
    let setting = FrameSetting::fock(alpha)?;
    if sigma.domain != Domain::Plane {
        return Err(Error::domain("Fock symbols must be defined on the plane"));
    }
    require_integrable(sigma, &setting, opts.tol_quad)?;
    if sigma.is_radial() && !opts.force_dense {
        let eval = move |n: usize, m: usize| fock_radial_eigenvalue(sigma, alpha, n, m);
        return radial_operator(sigma, &setting, opts, &eval);
    }
    if !sigma.is_bounded() {
        return Err(Error::Unsupported("unbounded non-radial symbols cannot be assembled".into()));
    }
    let n = opts.n_cut.unwrap_or(DENSE_DEFAULT_N);
    dense_planar(sigma, &setting, n, opts)
}

fn radial_boundary_exponent<T: Real>(sigma: &Symbol<T>) -> T {
    match boundary_exponent(&|t: T| sigma.profile(t)) {
        Some(p) if p > T::zero() && p <= T::lit(40.0) => p,
        _ => T::zero(),
    }
}

/// `lambda_n = E_{Beta(n+1, alpha+1)}[sigma(t)]`, with a boundary factor
/// `(1 - t)^p` moved into the Jacobi weight.
fn bergman_radial_eigenvalue<T: Real>(sigma: &Symbol<T>, alpha: T, p: T, n: usize, m: usize) -> Result<T> {
    let rule = gauss_jacobi(m, alpha + p, T::idx(n))?;
    let e = rule.apply(|t, one_minus| {
        let v = sigma.profile(t);
        if p == T::zero() {
            v
        } else {
            v / one_minus.powf(p)
        }
    });
    if p == T::zero() {
        return Ok(e);
    }
    // B(n+1, alpha+p+1) / B(n+1, alpha+1)
    let nn = T::idx(n);
    let log_ratio = ln_gamma(alpha + p + T::one()) + ln_gamma(nn + alpha + T::lit(2.0))
        - ln_gamma(alpha + T::one())
        - ln_gamma(nn + alpha + p + T::lit(2.0));
    Ok(e * log_ratio.exp())
}

/// `lambda_n = E_{Gamma(n+1)}[sigma(u / alpha)]`. The local exponential
/// decay rate `kappa` of the integrand near the mode is moved into the
/// Laguerre weight, which makes Gaussian profiles exact.
fn fock_radial_eigenvalue<T: Real>(sigma: &Symbol<T>, alpha: T, n: usize, m: usize) -> Result<T> {
    let u0 = T::idx(n + 1);
    let h = u0.sqrt();
    let lv = |u: T| sigma.profile(u / alpha).abs().ln();
    let mut kappa = -(lv(u0 + h) - lv((u0 - h).max(T::zero()))) / (h + h.min(u0));
    if !kappa.is_finite() || kappa < T::zero() {
        kappa = T::zero();
    }
    let gamma = T::one() + kappa.min(T::lit(1e6));
    let rule = gauss_laguerre(m, T::idx(n))?;
    // int sigma(u/a) u^n e^{-u} du / n! with u = v / gamma.
    let e = rule.apply(|v, _| {
        let u = v / gamma;
        sigma.profile(u / alpha) * (kappa * u).exp()
    });
    Ok(e * (-(T::idx(n + 1)) * gamma.ln()).exp())
}

/// Diagonal operator from per-index eigenvalue integrals, with `N_cut`
/// doubled until the extrapolated trace tail is certified.
fn radial_operator<T: Real>(
    sigma: &Symbol<T>,
    setting: &FrameSetting<T>,
    opts: &AssemblyOptions<T>,
    eval: &(dyn Fn(usize, usize) -> Result<T> + Sync),
) -> Result<TruncatedOperator<T>> {
    // Node count: grow until probes at a few indices agree.
    let mut m = 24;
    loop {
        let probes = [0usize, 7, 63, 511];
        let mut worst = T::zero();
        let mut vals = Vec::new();
        for &n in &probes {
            vals.push((eval(n, m)?, eval(n, m + m / 2)?));
        }
        // Entries far below the leading ones cannot affect any trace.
        let floor = vals.iter().map(|(a, _)| a.abs()).fold(T::zero(), T::max) * T::lit(1e-30);
        for (a, b) in vals {
            worst = worst.max((a - b).abs() / a.abs().max(floor).max(T::min_positive_value()));
        }
        if worst <= opts.tol_quad || m >= 192 {
            if worst > opts.tol_quad * T::lit(100.0) {
                return Err(Error::accuracy("radial eigenvalue quadrature", 0.0, worst.as_f64()));
            }
            break;
        }
        m *= 2;
    }
    let compute = |range: std::ops::Range<usize>| -> Result<Vec<T>> { range.into_par_iter().map(|n| eval(n, m)).collect() };
    let alpha = setting.alpha().max(T::one()).to_usize().unwrap_or(1);
    let fixed = opts.n_cut;
    let mut n_cut = fixed.unwrap_or_else(|| (4 * alpha).max(256).next_power_of_two());
    let mut diag = compute(0..n_cut)?;
    let scale = setting.scaling_constant();
    loop {
        let fit = TailExtrapolation::fit(&[&diag]);
        let (tail, unc) = match &fit {
            Some(f) if f.summable() => {
                let (t, u) = f.tail(diag.len(), |v| v[0]);
                (Some(t), u)
            }
            _ => (None, T::infinity()),
        };
        let trace = compensated_sum(diag.iter().copied()) + tail.unwrap_or(T::zero());
        let certified = unc <= opts.tol_tail * trace.abs().max(scale * T::epsilon());
        let fit_is_zero = matches!(&fit, Some(f) if f.primary.iter().all(|m| *m == crate::quadrature::DecayModel::Zero));
        if fixed.is_some() || certified || fit_is_zero || n_cut >= MAX_DIAGONAL_N || fit.is_none() {
            if fixed.is_none() && !certified && !fit_is_zero && fit.is_some() {
                return Err(Error::accuracy("truncation tail", tail.unwrap_or(T::nan()).as_f64(), unc.as_f64()));
            }
            return Ok(TruncatedOperator {
                basis: BasisDescriptor {
                    setting: setting.index.clone(),
                    kind: BasisKind::Monomials { n_cut },
                    size: n_cut,
                },
                matrix: OperatorMatrix::Diagonal(diag),
                symbol_tag: sigma.text(),
                tail_estimate: tail,
                tail_uncertainty: if tail.is_some() { unc } else { T::infinity() },
                tail_model: fit.filter(|f| f.summable()),
            });
        }
        let more = compute(n_cut..2 * n_cut)?;
        diag.extend(more);
        n_cut *= 2;
    }
}

/// Entries `<T e_m, e_n>` for a general symbol on the disk or plane, using
/// angular FFTs at the radial nodes of one Gauss rule per
/// `b = ceil((m + n) / 2)`.
fn dense_planar<T: Real>(sigma: &Symbol<T>, setting: &FrameSetting<T>, n: usize, opts: &AssemblyOptions<T>) -> Result<TruncatedOperator<T>> {
    if n == 0 {
        return Err(Error::config("n_cut must be at least 1"));
    }
    let bergman = matches!(setting.family(), Family::Bergman);
    let alpha = setting.alpha();
    let build = |m: usize| -> Result<Array2<Complex<T>>> {
        let rows: Vec<Vec<(usize, usize, Complex<T>)>> = (0..n)
            .into_par_iter()
            .map(|b| planar_band(sigma, bergman, alpha, n, b, m))
            .collect::<Result<_>>()?;
        let mut a = Array2::from_elem((n, n), Complex::new(T::zero(), T::zero()));
        for (i, j, v) in rows.into_iter().flatten() {
            a[[i, j]] = v;
            a[[j, i]] = v.conj();
        }
        for i in 0..n {
            a[[i, i]].im = T::zero();
        }
        Ok(a)
    };
    let mut m = 48;
    let mut a = build(m)?;
    loop {
        let b = build(m + m / 2)?;
        let scale = b.iter().map(|z| z.norm()).fold(T::zero(), T::max).max(T::min_positive_value());
        let diff = a.iter().zip(b.iter()).map(|(x, y)| (*x - *y).norm()).fold(T::zero(), T::max);
        a = b;
        if diff <= opts.tol_quad * scale || m >= 512 {
            if diff > opts.tol_quad.sqrt() * scale {
                return Err(Error::accuracy("dense planar assembly", scale.as_f64(), diff.as_f64()));
            }
            break;
        }
        m *= 2;
    }
    let matrix = OperatorMatrix::from_complex(a);
    let diag = matrix.diagonal();
    let fit = TailExtrapolation::fit(&[&diag]).filter(|f| f.summable());
    let (tail, unc) = match &fit {
        Some(f) => {
            let (t, u) = f.tail(n, |v| v[0]);
            (Some(t), u)
        }
        None => (None, T::infinity()),
    };
    Ok(TruncatedOperator {
        matrix,
        basis: BasisDescriptor {
            setting: setting.index.clone(),
            kind: BasisKind::Monomials { n_cut: n },
            size: n,
        },
        symbol_tag: sigma.text(),
        tail_estimate: tail,
        tail_uncertainty: unc,
        tail_model: None,
    })
}

/// All entries `(n, m)` with `m <= n < N` and `ceil((m + n) / 2) = b`.
fn planar_band<T: Real>(
    sigma: &Symbol<T>,
    bergman: bool,
    alpha: T,
    size: usize,
    b: usize,
    m: usize,
) -> Result<Vec<(usize, usize, Complex<T>)>> {
    let mut pairs = Vec::new();
    for total in [2 * b, (2 * b).wrapping_sub(1)] {
        if total > 2 * (size - 1) || total == usize::MAX {
            continue;
        }
        let lo_n = total.div_ceil(2);
        for nn in lo_n..size.min(total + 1) {
            let mm = total - nn;
            pairs.push((nn, mm));
        }
    }
    if pairs.is_empty() {
        return Ok(vec![]);
    }
    let kmax = pairs.iter().map(|(a, c)| a - c).max().unwrap_or(0);
    let l = (4 * kmax + 64).next_power_of_two();
    let bb = T::idx(b);
    let rule: GaussRule<T> = if bergman {
        gauss_jacobi(m, alpha, bb)?
    } else {
        gauss_laguerre(m, bb)?
    };
    // Angular Fourier coefficients at every radial node.
    let mut acc = vec![Complex::new(T::zero(), T::zero()); kmax + 1];
    let mut acc_odd_fix = vec![Complex::new(T::zero(), T::zero()); kmax + 1];
    let mut samples = vec![Complex::new(T::zero(), T::zero()); l];
    for ((&node, &w), _) in rule.nodes.iter().zip(&rule.weights).zip(&rule.complement) {
        let t = if bergman { node } else { node / alpha };
        let r = t.max(T::zero()).sqrt();
        for (j, s) in samples.iter_mut().enumerate() {
            let th = T::TAU() * T::idx(j) / T::idx(l);
            *s = Complex::new(sigma.eval(&Point::Planar(Complex::from_polar(r, th))), T::zero());
        }
        dft_n(&mut samples, &[l]);
        for k in 0..=kmax {
            let c = samples[k];
            acc[k] += c * w;
            if k % 2 == 1 {
                acc_odd_fix[k] += c * (w / r.max(T::min_positive_value()));
            }
        }
    }
    let mut out = Vec::with_capacity(pairs.len());
    for (nn, mm) in pairs {
        let k = nn - mm;
        let e = if k % 2 == 1 { acc_odd_fix[k] } else { acc[k] };
        let (fm, fn_) = (T::idx(mm), T::idx(nn));
        let log_pref = if bergman {
            let two = T::lit(2.0);
            T::lit(0.5) * (ln_gamma(fm + alpha + two) + ln_gamma(fn_ + alpha + two) - ln_gamma(fm + T::one()) - ln_gamma(fn_ + T::one()))
                + ln_gamma(bb + T::one())
                - ln_gamma(bb + alpha + two)
        } else {
            ((fm + fn_) * T::lit(0.5) - bb) * alpha.ln() + ln_gamma(bb + T::one())
                - T::lit(0.5) * (ln_gamma(fm + T::one()) + ln_gamma(fn_ + T::one()))
        };
        // sigma_hat_{n-m}: the DFT gives the coefficient of e^{-ik theta} with
        // k = n - m, matching <T e_m, e_n> = int sigma e^{i(m-n) theta}.
        out.push((nn, mm, e * log_pref.exp()));
    }
    Ok(out)
}

/// Shifted-sinc truncation on the Paley-Wiener space `PW_alpha`.
pub fn assemble_paley_wiener<T: Real>(sigma: &Symbol<T>, alpha: T, opts: &AssemblyOptions<T>) -> Result<TruncatedOperator<T>> {
    let setting = FrameSetting::paley_wiener(alpha)?;
    if sigma.domain != Domain::Line {
        return Err(Error::domain("Paley-Wiener symbols must be defined on the line"));
    }
    if !sigma.is_bounded() {
        return Err(Error::Unsupported("unbounded symbols are not supported on the line".into()));
    }
    let support = effective_support(sigma)?;
    let two_a = alpha + alpha;
    let needed = (two_a * support).ceil().to_usize().unwrap_or(usize::MAX);
    let k = match opts.half_width {
        Some(k) if k < needed => {
            return Err(Error::config(format!(
                "sinc half width K = {k} does not cover the effective support [-{support:.3}, {support:.3}] (needs K >= {needed})"
            )))
        }
        Some(k) => k,
        None => needed + 32,
    };
    let nodes = SincNodes::new(sigma, alpha, support, opts.tol_quad)?;
    let size = 2 * k + 1;
    let a = nodes.gram(k);
    // Trace tail: diagonal entries beyond K on both sides.
    let (tail, unc) = nodes.diagonal_tail(k);
    Ok(TruncatedOperator {
        matrix: OperatorMatrix::Real(a),
        basis: BasisDescriptor {
            setting: setting.index.clone(),
            kind: BasisKind::ShiftedSinc { half_width: k },
            size,
        },
        symbol_tag: sigma.text(),
        tail_estimate: tail,
        tail_uncertainty: unc,
        tail_model: None,
    })
}

/// Half width `X` with `|sigma| <= 1e-16 sup|sigma|` outside `[-X, X]`.
pub fn effective_support<T: Real>(sigma: &Symbol<T>) -> Result<T> {
    let sup = sigma.sup_norm();
    if sup == T::zero() {
        return Ok(T::zero());
    }
    let thresh = T::lit(1e-16) * sup;
    let mut last = T::zero();
    let mut x = T::zero();
    let step = T::lit(0.01);
    while x <= T::lit(1e6) {
        for v in [x, -x] {
            if sigma.eval(&Point::Line(v)).abs() > thresh {
                last = x;
            }
        }
        x = if x < T::lit(64.0) { x + step } else { x * T::lit(1.001) };
    }
    if last > T::lit(1e3) {
        return Err(Error::Divergence(format!(
            "symbol is not effectively supported (|sigma| exceeds 1e-16 sup beyond |x| = {last:e}); not integrable on the line"
        )));
    }
    Ok(last + step)
}

/// Panel quadrature over the effective support, aligned with the sinc grid.
struct SincNodes<T> {
    alpha: T,
    x: Vec<T>,
    /// `w_i sigma(x_i)`.
    ws: Vec<T>,
}

impl<T: Real> SincNodes<T> {
    fn new(sigma: &Symbol<T>, alpha: T, support: T, tol: T) -> Result<Self> {
        let h = T::one() / (alpha + alpha);
        let panels = ((support + support) / h).ceil().to_usize().unwrap_or(1).max(1);
        let build = |q: usize, split: usize| {
            let rule = gauss_legendre::<T>(q);
            let hh = h / T::idx(split);
            let mut x = Vec::new();
            let mut ws = Vec::new();
            for p in 0..panels * split {
                let lo = -T::idx(panels) * h * T::lit(0.5) + hh * T::idx(p);
                for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
                    let xi = lo + hh * t;
                    x.push(xi);
                    ws.push(w * hh * sigma.eval(&Point::Line(xi)));
                }
            }
            SincNodes { alpha, x, ws }
        };
        let mut split = 1;
        loop {
            let a = build(16, split);
            let b = build(24, split);
            let probe = |s: &SincNodes<T>| [s.diag(0), s.diag(3), s.entry(0, 1)];
            let (pa, pb) = (probe(&a), probe(&b));
            let scale = pb.iter().map(|v| v.abs()).fold(T::zero(), T::max).max(T::min_positive_value());
            let diff = pa.iter().zip(&pb).map(|(u, v)| (*u - *v).abs()).fold(T::zero(), T::max);
            if diff <= tol.max(T::epsilon() * T::lit(16.0)) * scale || split >= 16 {
                return Ok(b);
            }
            split *= 2;
        }
    }

    fn basis(&self, k: i64, x: T) -> T {
        let two_a = self.alpha + self.alpha;
        let u = two_a * x - T::int(k);
        let s = if u == T::zero() { T::one() } else { (T::PI() * u).sin() / (T::PI() * u) };
        two_a.sqrt() * s
    }

    fn entry(&self, j: i64, k: i64) -> T {
        compensated_sum(self.x.iter().zip(&self.ws).map(|(&x, &w)| w * self.basis(j, x) * self.basis(k, x)))
    }

    fn diag(&self, k: i64) -> T {
        self.entry(k, k)
    }

    fn gram(&self, half: usize) -> Array2<T> {
        let size = 2 * half + 1;
        let q = self.x.len();
        // Phi[i, j] = e_{j - K}(x_i)
        let phi = Array2::from_shape_fn((q, size), |(i, j)| self.basis(j as i64 - half as i64, self.x[i]));
        let mut wphi = phi.clone();
        for (i, mut row) in wphi.rows_mut().into_iter().enumerate() {
            row.mapv_inplace(|v| v * self.ws[i]);
        }
        let mut a = phi.t().dot(&wphi);
        for i in 0..size {
            for j in 0..i {
                let v = (a[[i, j]] + a[[j, i]]) * T::lit(0.5);
                a[[i, j]] = v;
                a[[j, i]] = v;
            }
        }
        a
    }

    /// `sum_{|k| > K} <T e_k, e_k>`, explicitly up to a long horizon and
    /// extrapolated beyond it.
    fn diagonal_tail(&self, half: usize) -> (Option<T>, T) {
        let horizon = (8 * half).max(1024);
        let mut total = T::zero();
        let mut unc = T::zero();
        for side in [1i64, -1] {
            let seq: Vec<T> = (0..=horizon as i64).into_par_iter().map(|j| self.diag(side * j)).collect();
            let explicit = compensated_sum(seq[half + 1..].iter().copied());
            if seq[horizon / 2..].iter().all(|v| *v == T::zero()) {
                total += explicit;
                continue;
            }
            match TailExtrapolation::fit(&[&seq]).filter(|f| f.summable()) {
                Some(f) => {
                    let (t, u) = f.tail(horizon + 1, |v| v[0]);
                    total += explicit + t;
                    unc += u;
                }
                None => return (None, T::infinity()),
            }
        }
        (Some(total), unc)
    }
}

/// The trace tail recorded at assembly, `None` when not estimable.
pub fn truncation_tail<T: Real>(op: &TruncatedOperator<T>) -> Option<T> {
    op.tail_estimate
}

/// Writes the operator as a dense row-major text matrix with a header.
pub fn write_text<T: Real, W: Write>(op: &TruncatedOperator<T>, mut out: W) -> std::io::Result<()> {
    let kind = match &op.matrix {
        OperatorMatrix::Diagonal(_) => "diagonal",
        OperatorMatrix::Real(_) => "real",
        OperatorMatrix::Complex(_) => "complex",
    };
    writeln!(out, "# szego-lab operator")?;
    writeln!(out, "# family: {}", op.basis.setting.family.name())?;
    writeln!(out, "# setting: {}", op.basis.setting.family)?;
    writeln!(out, "# alpha: {:?}", op.basis.setting.alpha.as_f64())?;
    writeln!(out, "# basis: {}", op.basis.describe())?;
    writeln!(out, "# symbol: {}", op.symbol_tag)?;
    writeln!(out, "# size: {}", op.size())?;
    writeln!(out, "# storage: {kind}")?;
    match &op.matrix {
        OperatorMatrix::Diagonal(d) => {
            for v in d {
                writeln!(out, "{:?}", v.as_f64())?;
            }
        }
        OperatorMatrix::Real(a) => {
            for row in a.rows() {
                let mut line = String::new();
                for (j, v) in row.iter().enumerate() {
                    if j > 0 {
                        line.push(' ');
                    }
                    let _ = write!(line, "{:?}", v.as_f64());
                }
                writeln!(out, "{line}")?;
            }
        }
        OperatorMatrix::Complex(a) => {
            for row in a.rows() {
                let mut line = String::new();
                for (j, v) in row.iter().enumerate() {
                    if j > 0 {
                        line.push(' ');
                    }
                    let _ = write!(line, "{:?},{:?}", v.re.as_f64(), v.im.as_f64());
                }
                writeln!(out, "{line}")?;
            }
        }
    }
    Ok(())
}

/// Reads a matrix written by [`write_text`]: header key/value pairs and
/// the dense matrix (diagonal storage is expanded).
pub fn read_text<R: BufRead>(input: R) -> Result<(Vec<(String, String)>, Array2<Complex<f64>>)> {
    let mut header = Vec::new();
    let mut rows: Vec<Vec<Complex<f64>>> = Vec::new();
    let bad = |line: usize, what: &str| Error::Parse {
        position: line,
        message: what.to_string(),
        expected: vec!["number".into()],
    };
    for (ln, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::config(e.to_string()))?;
        let line = line.trim();
        if let Some(h) = line.strip_prefix('#') {
            if let Some((k, v)) = h.split_once(':') {
                header.push((k.trim().to_string(), v.trim().to_string()));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|tok| {
                let (re, im) = tok.split_once(',').unwrap_or((tok, "0"));
                Ok(Complex::new(
                    re.parse::<f64>().map_err(|_| bad(ln, "bad real part"))?,
                    im.parse::<f64>().map_err(|_| bad(ln, "bad imaginary part"))?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let diagonal = header.iter().any(|(k, v)| k == "storage" && v == "diagonal");
    let n = rows.len();
    let a = if diagonal {
        Array2::from_shape_fn((n, n), |(i, j)| if i == j { rows[i][0] } else { Complex::new(0.0, 0.0) })
    } else {
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::config("operator text is not a square matrix"));
        }
        Array2::from_shape_fn((n, n), |(i, j)| rows[i][j])
    };
    Ok((header, a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbols::parse_symbol;

    fn opts() -> AssemblyOptions<f64> {
        AssemblyOptions::default()
    }

    #[test]
    fn torus_tridiagonal() {
        let t = FrameSetting::<f64>::torus(1, 1).unwrap();
        let s = parse_symbol("2 + cos(theta1)", &Domain::Torus(1)).unwrap();
        let op = assemble_torus(&s, &t, &opts()).unwrap();
        let OperatorMatrix::Real(a) = &op.matrix else { panic!("expected real storage") };
        for i in 0..3 {
            assert_eq!(a[[i, i]], 2.0);
        }
        assert_eq!(a[[0, 1]], 0.5);
        assert_eq!(a[[1, 2]], 0.5);
        assert_eq!(a[[0, 2]], 0.0);
        let c = parse_symbol("1.5", &Domain::Torus(1)).unwrap();
        let t3 = FrameSetting::<f64>::torus(1, 3).unwrap();
        let op = assemble_torus(&c, &t3, &opts()).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                assert_eq!(op.matrix.entry(i, j).re, if i == j { 1.5 } else { 0.0 });
            }
        }
    }

    #[test]
    fn two_dimensional_box() {
        let t = FrameSetting::<f64>::torus(2, 1).unwrap();
        let s = parse_symbol("3 + cos(theta1) + cos(theta2)", &Domain::Torus(2)).unwrap();
        let op = assemble_torus(&s, &t, &opts()).unwrap();
        assert_eq!(op.size(), 9);
        for i in 0..9 {
            assert_eq!(op.matrix.entry(i, i).re, 3.0);
        }
        // (0,0) and (0,1) differ by one step in the second index.
        assert_eq!(op.matrix.entry(0, 1).re, 0.5);
        assert_eq!(op.matrix.entry(0, 4).re, 0.0);
        assert_eq!(op.matrix.hermitian_defect(), 0.0);
    }

    #[test]
    fn shifted_symbol_is_complex_hermitian() {
        let t = FrameSetting::<f64>::torus(1, 2).unwrap();
        let s = parse_symbol("sin(theta1)", &Domain::Torus(1)).unwrap();
        let op = assemble_torus(&s, &t, &opts()).unwrap();
        assert!(matches!(op.matrix, OperatorMatrix::Complex(_)));
        assert!(op.matrix.hermitian_defect() < 1e-15);
    }

    #[test]
    fn bergman_radial_closed_form() {
        let s = parse_symbol("(1 - r2)^2", &Domain::Disk).unwrap();
        for alpha in [0.0, 4.0, 16.0] {
            let o = AssemblyOptions { n_cut: Some(300), ..opts() };
            let op = assemble_bergman(&s, alpha, &o).unwrap();
            let d = op.exact_diagonal().unwrap();
            for (n, &v) in d.iter().enumerate() {
                let nn = n as f64;
                let exact = (alpha + 1.0) * (alpha + 2.0) / ((nn + alpha + 2.0) * (nn + alpha + 3.0));
                assert!((v - exact).abs() <= 1e-12 * exact, "alpha {alpha} n {n}: {v} vs {exact}");
            }
            let exact_tail = (alpha + 1.0) * (alpha + 2.0) / (300.0 + alpha + 2.0);
            let tail = op.tail_estimate.unwrap();
            assert!((tail - exact_tail).abs() < 1e-8 * (alpha + 1.0), "{tail} vs {exact_tail}");
        }
    }

    #[test]
    fn bergman_rejects_non_integrable() {
        let s = parse_symbol("1", &Domain::Disk).unwrap();
        assert!(matches!(assemble_bergman(&s, 2.0, &opts()), Err(Error::Divergence(_))));
    }

    #[test]
    fn bergman_automatic_cut_certifies_tail() {
        let s = parse_symbol("(1 - r2)^2", &Domain::Disk).unwrap();
        let op = assemble_bergman(&s, 16.0, &opts()).unwrap();
        let n = op.size() as f64;
        let exact_tail = 17.0 * 18.0 / (n - 1.0 + 19.0);
        let t = op.tail_estimate.unwrap();
        assert!((t - exact_tail).abs() <= 1e-8 * 17.0, "{t} vs {exact_tail}");
        assert!(op.tail_uncertainty <= 1e-8 * 17.0);
    }

    #[test]
    fn fock_radial_closed_form() {
        let s = parse_symbol("exp(-r2)", &Domain::Plane).unwrap();
        let op = assemble_fock(&s, 1.0, &AssemblyOptions { n_cut: Some(40), ..opts() }).unwrap();
        let d = op.exact_diagonal().unwrap();
        assert!((d[0] - 0.5).abs() < 1e-14);
        for (n, &v) in d.iter().enumerate() {
            assert!((v - 0.5f64.powi(n as i32 + 1)).abs() < 1e-13 * 0.5f64.powi(n as i32 + 1));
        }
        let alpha = 4.0;
        let op = assemble_fock(&s, alpha, &opts()).unwrap();
        let q: f64 = alpha / (alpha + 1.0);
        let n = op.size() as i32;
        let exact_tail = q.powi(n + 1) * (alpha + 1.0);
        assert!((op.tail_estimate.unwrap() - exact_tail).abs() < 1e-9, "{:?} vs {exact_tail}", op.tail_estimate);
        let z = parse_symbol("0", &Domain::Plane).unwrap();
        let op = assemble_fock(&z, 2.0, &AssemblyOptions { n_cut: Some(10), ..opts() }).unwrap();
        assert!(op.exact_diagonal().unwrap().iter().all(|&v| v == 0.0));
        assert_eq!(op.tail_estimate.unwrap_or(0.0), 0.0);
    }

    #[test]
    fn dense_planar_matches_radial() {
        let s = parse_symbol("(1 - r2)^2", &Domain::Disk).unwrap();
        let o = AssemblyOptions { n_cut: Some(24), force_dense: true, ..opts() };
        let op = assemble_bergman(&s, 3.0, &o).unwrap();
        for n in 0..24 {
            for m in 0..24 {
                let v = op.matrix.entry(n, m);
                if n == m {
                    let nn = n as f64;
                    let exact = 4.0 * 5.0 / ((nn + 5.0) * (nn + 6.0));
                    assert!((v.re - exact).abs() < 1e-10, "{n}: {} vs {exact}", v.re);
                } else {
                    assert!(v.norm() < 1e-13);
                }
            }
        }
        let f = parse_symbol("exp(-r2)", &Domain::Plane).unwrap();
        let o = AssemblyOptions { n_cut: Some(16), force_dense: true, ..opts() };
        let op = assemble_fock(&f, 2.0, &o).unwrap();
        for n in 0..16 {
            let exact = (2.0f64 / 3.0).powi(n as i32 + 1);
            assert!((op.matrix.entry(n, n).re - exact).abs() < 1e-10 * exact.max(1e-3));
        }
    }

    #[test]
    fn dense_planar_off_diagonal() {
        // sigma = x (1 - r2)^3 couples neighbouring monomials only.
        let s = parse_symbol("x * (1 - r2)^3", &Domain::Disk).unwrap();
        let alpha = 2.0;
        let op = assemble_bergman(&s, alpha, &AssemblyOptions { n_cut: Some(6), ..opts() }).unwrap();
        // <T e_0, e_1> = c_0 c_1 (alpha+1) int (1/2) t (1-t)^{alpha+3} dt, c_n^2 = Gamma(n+a+2)/(n! Gamma(a+2)).
        let c1 = (alpha + 2.0f64).sqrt();
        let beta = 1.0 / ((alpha + 4.0) * (alpha + 5.0));
        let exact = c1 * (alpha + 1.0) * 0.5 * beta;
        assert!((op.matrix.entry(1, 0).re - exact).abs() < 1e-13, "{} vs {exact}", op.matrix.entry(1, 0).re);
        assert!(op.matrix.entry(2, 0).norm() < 1e-14);
        assert!(op.matrix.hermitian_defect() == 0.0);
    }

    #[test]
    fn paley_wiener_trace_identity() {
        let s = parse_symbol("exp(-x^2)", &Domain::Line).unwrap();
        let alpha = 2.0;
        let op = assemble_paley_wiener(&s, alpha, &opts()).unwrap();
        let tr = (op.trace() + op.tail_estimate.unwrap()) / (2.0 * alpha);
        assert!((tr - std::f64::consts::PI.sqrt()).abs() < 1e-8, "{tr}");
        assert!(matches!(
            assemble_paley_wiener(&s, alpha, &AssemblyOptions { half_width: Some(3), ..opts() }),
            Err(Error::Config(_))
        ));
        let c = parse_symbol("2", &Domain::Line).unwrap();
        assert!(matches!(assemble_paley_wiener(&c, alpha, &opts()), Err(Error::Divergence(_))));
        let z = parse_symbol("0", &Domain::Line).unwrap();
        let op = assemble_paley_wiener(&z, alpha, &AssemblyOptions { half_width: Some(4), ..opts() }).unwrap();
        assert!(op.matrix.diagonal().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn group_full_dual() {
        let g = FrameSetting::<f64>::group(&[12], 6).unwrap();
        let s = parse_symbol("1 + x / 3", &Domain::Group(vec![12])).unwrap();
        let op = assemble_group(&s, &g, &opts()).unwrap();
        assert_eq!(op.size(), 12);
        let tr = op.trace() / 12.0;
        let direct: f64 = (0..12).map(|x| 1.0 + x as f64 / 3.0).sum::<f64>() / 12.0;
        assert!((tr - direct).abs() < 1e-13);
        let z = parse_symbol("0", &Domain::Group(vec![12])).unwrap();
        let op = assemble_group(&z, &g, &opts()).unwrap();
        assert!((0..12).all(|i| (0..12).all(|j| op.matrix.entry(i, j).norm() == 0.0)));
    }

    #[test]
    fn text_round_trip() {
        let t = FrameSetting::<f64>::torus(1, 2).unwrap();
        let s = parse_symbol("sin(theta1) + 2", &Domain::Torus(1)).unwrap();
        let op = assemble_torus(&s, &t, &opts()).unwrap();
        let mut buf = Vec::new();
        write_text(&op, &mut buf).unwrap();
        let (header, a) = read_text(&buf[..]).unwrap();
        assert!(header.iter().any(|(k, v)| k == "family" && v == "torus"));
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(a[[i, j]], op.matrix.entry(i, j));
            }
        }
    }
}
