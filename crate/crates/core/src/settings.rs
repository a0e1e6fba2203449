//! The five continuous Parseval frame settings: kernel overlaps, scaling
//! constants, base measures, and quadrature over each domain.

use std::fmt;

use num_complex::Complex;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::{gauss_jacobi, gauss_laguerre, gauss_legendre, GaussRule, TailExtrapolation};
use crate::scalar::{compensated_sum, Cplx, Real};
use crate::symbols::expr::{Env, Expr, Var};

/// Which concrete setting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    Torus { dim: usize },
    Group { moduli: Vec<usize> },
    Bergman,
    Fock,
    PaleyWiener,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Torus { .. } => "torus",
            Family::Group { .. } => "group",
            Family::Bergman => "bergman",
            Family::Fock => "fock",
            Family::PaleyWiener => "paley-wiener",
        }
    }

    /// Torus and finite groups are indexed by an integer box radius.
    pub fn is_discrete_index(&self) -> bool {
        matches!(self, Family::Torus { .. } | Family::Group { .. })
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Torus { dim } => write!(f, "torus^{dim}"),
            Family::Group { moduli } => {
                let parts: Vec<String> = moduli.iter().map(|m| format!("Z{m}")).collect();
                write!(f, "group {}", parts.join("x"))
            }
            other => write!(f, "{}", other.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SettingIndex<T> {
    pub family: Family,
    /// Semi-classical parameter; the box radius for torus and groups.
    pub alpha: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaseMeasure {
    /// `d theta / 2 pi` on each circle factor.
    NormalizedArc,
    /// Uniform probability on a finite group.
    NormalizedHaar,
    /// `(1 - |z|^2)^{-2} dA` with `dA` normalized to unit disk area.
    Hyperbolic,
    /// Lebesgue area on the plane.
    PlanarArea,
    /// Lebesgue measure on the line.
    Lebesgue,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Domain {
    Torus(usize),
    Group(Vec<usize>),
    Disk,
    Plane,
    Line,
}

/// A point of a setting's domain.
#[derive(Debug, Clone, PartialEq)]
pub enum Point<T> {
    Torus(Vec<T>),
    Group(Vec<i64>),
    Planar(Cplx<T>),
    Line(T),
}

impl<T: Real> Point<T> {
    pub fn coords(&self) -> Vec<T> {
        match self {
            Point::Torus(t) => t.clone(),
            Point::Group(r) => r.iter().map(|&v| T::int(v)).collect(),
            Point::Planar(z) => vec![z.re, z.im],
            Point::Line(x) => vec![*x],
        }
    }
}

impl Domain {
    pub fn contains<T: Real>(&self, p: &Point<T>) -> bool {
        match (self, p) {
            (Domain::Torus(d), Point::Torus(t)) => t.len() == *d && t.iter().all(|v| v.is_finite()),
            (Domain::Group(m), Point::Group(r)) => r.len() == m.len(),
            (Domain::Disk, Point::Planar(z)) => z.norm_sqr() < T::one(),
            (Domain::Plane, Point::Planar(z)) => z.re.is_finite() && z.im.is_finite(),
            (Domain::Line, Point::Line(x)) => x.is_finite(),
            _ => false,
        }
    }

    /// Whether expressions on this domain may mention `v`.
    pub fn admits(&self, v: Var) -> bool {
        match (self, v) {
            (Domain::Torus(d), Var::Theta(j)) => j < *d,
            (Domain::Group(m), Var::Theta(j) | Var::Residue(j)) => j < m.len(),
            (Domain::Group(m), Var::X) => m.len() == 1,
            (Domain::Disk | Domain::Plane, Var::X | Var::Y | Var::R2) => true,
            (Domain::Line, Var::X | Var::R2) => true,
            _ => false,
        }
    }

    /// Evaluates `expr` at `p` (assumed to lie in the domain).
    pub fn eval<T: Real>(&self, expr: &Expr, p: &Point<T>) -> T {
        match p {
            Point::Torus(t) => expr.eval(&Env {
                theta: t,
                residues: &[],
                x: T::nan(),
                y: T::nan(),
                r2: T::nan(),
            }),
            Point::Group(r) => {
                let moduli: &[usize] = match self {
                    Domain::Group(m) => m,
                    _ => &[],
                };
                let mut res = vec![T::zero(); r.len()];
                let mut th = vec![T::zero(); r.len()];
                for (j, &v) in r.iter().enumerate() {
                    let m = moduli.get(j).copied().unwrap_or(1) as i64;
                    let v = v.rem_euclid(m);
                    res[j] = T::int(v);
                    th[j] = T::TAU() * T::int(v) / T::int(m);
                }
                let x = res.first().copied().unwrap_or_else(T::nan);
                expr.eval(&Env {
                    theta: &th,
                    residues: &res,
                    x,
                    y: T::nan(),
                    r2: T::nan(),
                })
            }
            Point::Planar(z) => expr.eval(&Env {
                theta: &[],
                residues: &[],
                x: z.re,
                y: z.im,
                r2: z.norm_sqr(),
            }),
            Point::Line(x) => expr.eval(&Env::scalar(*x)),
        }
    }
}

/// A quadrature approximation with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral<T> {
    pub value: T,
    pub error: T,
}

/// Part of the domain relative to a center point and a metric radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Part<T> {
    Whole,
    /// The closed metric ball of the given radius.
    Inside(T),
    /// The complement of the closed metric ball.
    Outside(T),
}

/// Explicit nodes and weights for a measure on (part of) a domain.
#[derive(Debug, Clone)]
pub struct QuadratureRule<T> {
    pub nodes: Vec<Point<T>>,
    pub weights: Vec<T>,
    pub target_measure: TargetMeasure,
    /// Polynomial degree integrated exactly, where meaningful.
    pub accuracy_order: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TargetMeasure {
    /// The base measure `nu`, restricted to the rule's window.
    Base,
    /// The scaled measure `nu_alpha = c(alpha) nu`.
    Alpha,
    /// The probability measure `mu_alpha` of the reproducing kernel space.
    Reproducing,
}

/// One of the five catalog settings at a fixed `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSetting<T> {
    pub index: SettingIndex<T>,
    pub scaling: T,
    pub base_measure: BaseMeasure,
    pub domain: Domain,
    /// Per-axis dual indices of the Folner box (torus and groups).
    dual_axes: Vec<Vec<i64>>,
}

const ANGULAR_OFFSET: f64 = 0.318_309_886_183_790_7;

/// Trapezoid mean of a `2 pi`-periodic function on a shifted grid, doubled
/// until successive levels agree. Returns `(mean, error estimate)`.
pub(crate) fn angular_mean<T: Real>(g: &dyn Fn(T) -> T, tol: T) -> (T, T) {
    let level = |m: usize| {
        let h = T::TAU() / T::idx(m);
        let off = T::lit(ANGULAR_OFFSET);
        let s = compensated_sum((0..m).map(|k| g(h * (T::idx(k) + off))));
        s / T::idx(m)
    };
    let abs_mean = |m: usize| {
        let h = T::TAU() / T::idx(m);
        (0..m).map(|k| g(h * T::idx(k)).abs()).sum::<T>() / T::idx(m)
    };
    let mut m = 16;
    let mut prev = level(m);
    loop {
        m *= 2;
        let cur = level(m);
        let err = (cur - prev).abs();
        let scale = abs_mean(16).max(cur.abs());
        if err <= tol * scale || err == T::zero() || m >= 8192 {
            return (cur, err);
        }
        prev = cur;
    }
}

fn cyclic_distance(a: i64, b: i64, m: usize) -> i64 {
    let m = m as i64;
    let d = (a - b).rem_euclid(m);
    d.min(m - d)
}

fn wrap_angle<T: Real>(t: T) -> T {
    let tau = T::TAU();
    let mut w = t - tau * (t / tau).round();
    if w <= -T::PI() {
        w += tau;
    }
    w
}

/// `sum_{k=-n}^{n} e^{ikt}`.
fn dirichlet<T: Real>(n: usize, t: T) -> T {
    let half = t * T::lit(0.5);
    let s = half.sin();
    if s.abs() < T::lit(1e-6) {
        // Near multiples of 2 pi use the cosine sum directly.
        T::one() + T::lit(2.0) * (1..=n).map(|k| (T::idx(k) * t).cos()).sum::<T>()
    } else {
        (T::idx(2 * n + 1) * half).sin() / s
    }
}

fn sinc<T: Real>(u: T) -> T {
    if u == T::zero() {
        T::one()
    } else {
        let pu = T::PI() * u;
        pu.sin() / pu
    }
}

/// Mobius involution of the disk exchanging `0` and `c`.
pub fn mobius<T: Real>(c: Cplx<T>, u: Cplx<T>) -> Cplx<T> {
    (c - u) / (Complex::new(T::one(), T::zero()) - c.conj() * u)
}

impl<T: Real> FrameSetting<T> {
    /// Builds a setting, validating the family parameters and `alpha`.
    pub fn new(family: Family, alpha: T) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::config(format!("alpha must be finite (got {alpha})")));
        }
        let (base_measure, domain, dual_axes, scaling) = match &family {
            Family::Torus { dim } => {
                if *dim == 0 {
                    return Err(Error::config("torus dimension must be at least 1"));
                }
                let n = integer_index(alpha)?;
                let axis: Vec<i64> = (-(n as i64)..=n as i64).collect();
                let scaling = T::idx(2 * n + 1).powi(*dim as i32);
                (BaseMeasure::NormalizedArc, Domain::Torus(*dim), vec![axis; *dim], scaling)
            }
            Family::Group { moduli } => {
                if moduli.is_empty() || moduli.iter().any(|&m| m < 2) {
                    return Err(Error::config(format!("group moduli must all be at least 2 (got {moduli:?})")));
                }
                let n = integer_index(alpha)? as i64;
                let axes: Vec<Vec<i64>> = moduli
                    .iter()
                    .map(|&m| {
                        let mi = m as i64;
                        let mut set: Vec<i64> = (-n..=n).map(|k| centered_residue(k, mi)).collect();
                        set.sort();
                        set.dedup();
                        set
                    })
                    .collect();
                let size: usize = axes.iter().map(|a| a.len()).product();
                (BaseMeasure::NormalizedHaar, Domain::Group(moduli.clone()), axes, T::idx(size))
            }
            Family::Bergman => {
                if alpha <= -T::one() {
                    return Err(Error::config(format!("Bergman alpha must exceed -1 (got {alpha})")));
                }
                (BaseMeasure::Hyperbolic, Domain::Disk, vec![], alpha + T::one())
            }
            Family::Fock => {
                if alpha <= T::zero() {
                    return Err(Error::config(format!("Fock alpha must be positive (got {alpha})")));
                }
                (BaseMeasure::PlanarArea, Domain::Plane, vec![], alpha / T::PI())
            }
            Family::PaleyWiener => {
                if alpha <= T::zero() {
                    return Err(Error::config(format!("Paley-Wiener alpha must be positive (got {alpha})")));
                }
                (BaseMeasure::Lebesgue, Domain::Line, vec![], alpha + alpha)
            }
        };
        Ok(Self {
            index: SettingIndex { family, alpha },
            scaling,
            base_measure,
            domain,
            dual_axes,
        })
    }

    pub fn torus(dim: usize, n: usize) -> Result<Self> {
        Self::new(Family::Torus { dim }, T::idx(n))
    }

    pub fn group(moduli: &[usize], radius: usize) -> Result<Self> {
        Self::new(Family::Group { moduli: moduli.to_vec() }, T::idx(radius))
    }

    pub fn bergman(alpha: T) -> Result<Self> {
        Self::new(Family::Bergman, alpha)
    }

    pub fn fock(alpha: T) -> Result<Self> {
        Self::new(Family::Fock, alpha)
    }

    pub fn paley_wiener(alpha: T) -> Result<Self> {
        Self::new(Family::PaleyWiener, alpha)
    }

    pub fn with_alpha(&self, alpha: T) -> Result<Self> {
        Self::new(self.index.family.clone(), alpha)
    }

    pub fn family(&self) -> &Family {
        &self.index.family
    }

    pub fn alpha(&self) -> T {
        self.index.alpha
    }

    /// `c(alpha)` with `d nu_alpha = c(alpha) d nu`.
    pub fn scaling_constant(&self) -> T {
        self.scaling
    }

    /// Dual indices of the Folner box along each axis (torus and groups).
    pub fn dual_axes(&self) -> &[Vec<i64>] {
        &self.dual_axes
    }

    /// All multi-indices of the Folner box in row-major order.
    pub fn dual_box(&self) -> Vec<Vec<i64>> {
        let mut out = vec![vec![]];
        for axis in &self.dual_axes {
            let mut next = Vec::with_capacity(out.len() * axis.len());
            for prefix in &out {
                for &k in axis {
                    let mut v = prefix.clone();
                    v.push(k);
                    next.push(v);
                }
            }
            out = next;
        }
        out
    }

    /// Every element of a finite group domain, row-major.
    pub fn group_elements(&self) -> Vec<Vec<i64>> {
        let Domain::Group(moduli) = &self.domain else {
            return vec![];
        };
        let mut out = vec![vec![]];
        for &m in moduli {
            let mut next = Vec::with_capacity(out.len() * m);
            for prefix in &out {
                for v in 0..m as i64 {
                    let mut p = prefix.clone();
                    p.push(v);
                    next.push(p);
                }
            }
            out = next;
        }
        out
    }

    fn check(&self, p: &Point<T>) -> Result<()> {
        if self.domain.contains(p) {
            Ok(())
        } else {
            Err(Error::domain(format!("point {p:?} is not in the {} domain", self.family().name())))
        }
    }

    /// `|<k_x, k_y>|^2` for the normalized reproducing kernels.
    pub fn kernel_overlap(&self, x: &Point<T>, y: &Point<T>) -> Result<T> {
        self.check(x)?;
        self.check(y)?;
        Ok(self.overlap_unchecked(x, y))
    }

    fn overlap_unchecked(&self, x: &Point<T>, y: &Point<T>) -> T {
        let a = self.alpha();
        match (x, y) {
            (Point::Torus(s), Point::Torus(t)) => {
                let n = self.dual_axes[0].len() / 2;
                let denom = T::idx(2 * n + 1);
                s.iter()
                    .zip(t)
                    .map(|(&u, &v)| {
                        let d = dirichlet(n, u - v) / denom;
                        d * d
                    })
                    .fold(T::one(), |a, b| a * b)
            }
            (Point::Group(s), Point::Group(t)) => {
                let Domain::Group(moduli) = &self.domain else { unreachable!() };
                let mut acc = T::one();
                for (j, axis) in self.dual_axes.iter().enumerate() {
                    let m = T::idx(moduli[j]);
                    let diff = T::int(s[j] - t[j]);
                    let mut sum = Complex::new(T::zero(), T::zero());
                    for &k in axis {
                        let ph = T::TAU() * T::int(k) * diff / m;
                        sum = sum + Complex::new(ph.cos(), ph.sin());
                    }
                    acc *= sum.norm_sqr() / T::idx(axis.len() * axis.len());
                }
                acc
            }
            (Point::Planar(z), Point::Planar(w)) => match self.family() {
                Family::Bergman => {
                    // 1 - |phi_z(w)|^2 = (1 - |z|^2)(1 - |w|^2) / |1 - conj(z) w|^2
                    let one = Complex::new(T::one(), T::zero());
                    let q = (T::one() - z.norm_sqr()) * (T::one() - w.norm_sqr()) / (one - z.conj() * w).norm_sqr();
                    q.min(T::one()).powf(a + T::lit(2.0))
                }
                _ => (-a * (*z - *w).norm_sqr()).exp(),
            },
            (Point::Line(u), Point::Line(v)) => {
                let s = sinc((a + a) * (*u - *v));
                s * s
            }
            _ => T::nan(),
        }
    }

    /// Metric distance used for neighborhoods: sup-metric of wrapped angle
    /// differences on tori, sup of cyclic distances on groups, hyperbolic
    /// distance on the disk, Euclidean distance otherwise.
    pub fn distance(&self, x: &Point<T>, y: &Point<T>) -> T {
        match (x, y) {
            (Point::Torus(s), Point::Torus(t)) => {
                s.iter().zip(t).map(|(&u, &v)| wrap_angle(u - v).abs()).fold(T::zero(), T::max)
            }
            (Point::Group(s), Point::Group(t)) => {
                let Domain::Group(moduli) = &self.domain else { unreachable!() };
                let d = s.iter().zip(t).zip(moduli).map(|((&a, &b), &m)| cyclic_distance(a, b, m)).max();
                T::int(d.unwrap_or(0))
            }
            (Point::Planar(z), Point::Planar(w)) => match self.family() {
                Family::Bergman => mobius(*z, *w).norm().min(T::one()).atanh(),
                _ => (*z - *w).norm(),
            },
            (Point::Line(u), Point::Line(v)) => (*u - *v).abs(),
            _ => T::nan(),
        }
    }

    /// `int f d nu` over `part` of the domain relative to the origin.
    pub fn integrate_base(&self, f: &(dyn Fn(&Point<T>) -> T + Sync), part: Part<T>, tol: T) -> Result<Integral<T>> {
        let center = self.origin();
        self.integrate_centered(f, &center, part, tol)
    }

    /// `c(alpha) * integrate_base`.
    pub fn integrate_alpha(&self, f: &(dyn Fn(&Point<T>) -> T + Sync), part: Part<T>, tol: T) -> Result<Integral<T>> {
        let r = self.integrate_base(f, part, tol)?;
        Ok(Integral {
            value: r.value * self.scaling,
            error: r.error * self.scaling,
        })
    }

    /// The distinguished base point of the domain.
    pub fn origin(&self) -> Point<T> {
        match &self.domain {
            Domain::Torus(d) => Point::Torus(vec![T::zero(); *d]),
            Domain::Group(m) => Point::Group(vec![0; m.len()]),
            Domain::Disk | Domain::Plane => Point::Planar(Complex::new(T::zero(), T::zero())),
            Domain::Line => Point::Line(T::zero()),
        }
    }

    /// `int f d nu` over `part` measured from `center`.
    pub fn integrate_centered(
        &self,
        f: &(dyn Fn(&Point<T>) -> T + Sync),
        center: &Point<T>,
        part: Part<T>,
        tol: T,
    ) -> Result<Integral<T>> {
        self.check(center)?;
        match (&self.domain, center) {
            (Domain::Torus(d), Point::Torus(c)) => torus_integral(*d, c, f, part, tol, 8),
            (Domain::Group(_), Point::Group(c)) => Ok(self.group_integral(c, f, part, &|_| T::one())),
            (Domain::Disk, Point::Planar(c)) => {
                let g = |u: Cplx<T>| f(&Point::Planar(mobius(*c, u)));
                bergman_integral(&g, None, part_range(part), tol)
            }
            (Domain::Plane, Point::Planar(c)) => {
                let g = |r: T, th: T| f(&Point::Planar(*c + Complex::from_polar(r, th)));
                plane_integral(&g, part, tol)
            }
            (Domain::Line, Point::Line(c)) => {
                let g = |v: T| f(&Point::Line(*c + v));
                line_integral(&g, T::one(), part, tol)
            }
            _ => unreachable!("center checked against domain"),
        }
    }

    /// `int f(y) |<k_x, k_y>|^2 d nu_alpha(y)` over `part` measured from `x`,
    /// with quadrature adapted to the kernel's shape.
    pub fn integrate_against_kernel(
        &self,
        f: &(dyn Fn(&Point<T>) -> T + Sync),
        x: &Point<T>,
        part: Part<T>,
        tol: T,
    ) -> Result<Integral<T>> {
        self.check(x)?;
        let a = self.alpha();
        match (&self.domain, x) {
            (Domain::Torus(d), Point::Torus(c)) => {
                let n = self.dual_axes[0].len() / 2;
                let kern = |p: &Point<T>| f(p) * self.overlap_unchecked(x, p) * self.scaling;
                torus_integral(*d, c, &kern, part, tol, 4 * n + 8)
            }
            (Domain::Group(_), Point::Group(c)) => {
                Ok(self.group_integral(c, f, part, &|p| self.overlap_unchecked(x, p) * self.scaling))
            }
            (Domain::Disk, Point::Planar(c)) => {
                // In Mobius coordinates the kernel is (alpha + 1)(1 - |u|^2)^{alpha + 2}.
                let g = |u: Cplx<T>| (a + T::one()) * f(&Point::Planar(mobius(*c, u)));
                bergman_integral(&g, Some(a + T::lit(2.0)), part_range(part), tol)
            }
            (Domain::Plane, Point::Planar(c)) => {
                // With u = alpha r^2 the kernel measure becomes e^{-u} du d theta / 2 pi.
                let g = |r: T, th: T| f(&Point::Planar(*c + Complex::from_polar(r, th)));
                fock_kernel_integral(&g, a, part, tol)
            }
            (Domain::Line, Point::Line(c)) => {
                // v = 2 alpha (y - x): kernel sinc^2(v) dv, zeros on the integers.
                let g = |v: T| {
                    let s = sinc(v);
                    f(&Point::Line(*c + v / (a + a))) * s * s
                };
                let scaled = match part {
                    Part::Whole => Part::Whole,
                    Part::Inside(r) => Part::Inside(r * (a + a)),
                    Part::Outside(r) => Part::Outside(r * (a + a)),
                };
                line_integral(&g, T::one(), scaled, tol)
            }
            _ => unreachable!("center checked against domain"),
        }
    }

    /// Kernel mass outside the metric ball of radius `r` around `x`.
    pub fn kernel_tail(&self, x: &Point<T>, r: T, tol: T) -> Result<T> {
        if !(r > T::zero()) {
            return Err(Error::domain(format!("neighborhood radius must be positive (got {r})")));
        }
        let one = |_: &Point<T>| T::one();
        let res = self.integrate_against_kernel(&one, x, Part::Outside(r), tol)?;
        if res.error > T::lit(1e-6) * res.value.abs() + tol {
            return Err(Error::accuracy("kernel mass tail", res.value.as_f64(), res.error.as_f64()));
        }
        Ok(res.value.max(T::zero()))
    }

    fn group_integral(
        &self,
        center: &[i64],
        f: &(dyn Fn(&Point<T>) -> T + Sync),
        part: Part<T>,
        weight: &dyn Fn(&Point<T>) -> T,
    ) -> Integral<T> {
        let Domain::Group(moduli) = &self.domain else { unreachable!() };
        let elems = self.group_elements();
        let total = elems.len();
        let terms = elems.into_iter().filter_map(|e| {
            let d = e
                .iter()
                .zip(center)
                .zip(moduli)
                .map(|((&a, &b), &m)| cyclic_distance(a, b, m))
                .max()
                .unwrap_or(0);
            let keep = match part {
                Part::Whole => true,
                Part::Inside(r) => T::int(d) <= r,
                Part::Outside(r) => T::int(d) > r,
            };
            keep.then(|| {
                let p = Point::Group(e);
                f(&p) * weight(&p)
            })
        });
        Integral {
            value: compensated_sum(terms) / T::idx(total),
            error: T::zero(),
        }
    }

    /// An explicit weighted grid for `nu` on a reference window. For the
    /// infinite-measure settings the window is the ball of radius `window`
    /// (hyperbolic radius on the disk).
    pub fn reference_grid(&self, resolution: usize, window: T) -> QuadratureRule<T> {
        let res = resolution.max(2);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        match &self.domain {
            Domain::Torus(d) => {
                let m = res;
                let total = m.pow(*d as u32);
                for flat in 0..total {
                    let mut idx = flat;
                    let mut th = vec![T::zero(); *d];
                    for t in th.iter_mut().rev() {
                        *t = T::TAU() * T::idx(idx % m) / T::idx(m) - T::PI();
                        idx /= m;
                    }
                    nodes.push(Point::Torus(th));
                    weights.push(T::one() / T::idx(total));
                }
            }
            Domain::Group(_) => {
                let elems = self.group_elements();
                let w = T::one() / T::idx(elems.len());
                for e in elems {
                    nodes.push(Point::Group(e));
                    weights.push(w);
                }
            }
            Domain::Disk | Domain::Plane => {
                // Gauss-Legendre in t = |z|^2 over the window, trapezoid in angle.
                let disk = self.domain == Domain::Disk;
                let t_max = if disk { window.tanh().powi(2) } else { window * window };
                let rule = gauss_legendre::<T>(res);
                let m = 2 * res;
                for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
                    let tt = t * t_max;
                    let radial = if disk {
                        w * t_max / (T::one() - tt).powi(2)
                    } else {
                        w * t_max * T::PI()
                    };
                    for k in 0..m {
                        let th = T::TAU() * T::idx(k) / T::idx(m);
                        nodes.push(Point::Planar(Complex::from_polar(tt.sqrt(), th)));
                        weights.push(radial / T::idx(m));
                    }
                }
            }
            Domain::Line => {
                let rule = gauss_legendre::<T>(8);
                let panels = res;
                let h = (window + window) / T::idx(panels);
                for p in 0..panels {
                    let lo = -window + h * T::idx(p);
                    for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
                        nodes.push(Point::Line(lo + h * t));
                        weights.push(w * h);
                    }
                }
            }
        }
        QuadratureRule {
            nodes,
            weights,
            target_measure: TargetMeasure::Base,
            accuracy_order: 2 * res - 1,
        }
    }

    /// A rule for the reproducing probability measure `mu_alpha` on the disk
    /// or plane: Gauss-Jacobi (Bergman) or Gauss-Laguerre (Fock) in `|z|^2`
    /// times an `angular`-point trapezoid rule.
    pub fn reproducing_rule(&self, radial: usize, angular: usize) -> Result<QuadratureRule<T>> {
        let a = self.alpha();
        let (rule, to_t): (GaussRule<T>, Box<dyn Fn(T) -> T>) = match self.family() {
            Family::Bergman => (gauss_jacobi(radial, a, T::zero())?, Box::new(|t| t)),
            Family::Fock => (gauss_laguerre(radial, T::zero())?, Box::new(move |u| u / a)),
            _ => return Err(Error::Unsupported("reproducing rules exist for the disk and plane".into())),
        };
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for (&s, &w) in rule.nodes.iter().zip(&rule.weights) {
            let r = to_t(s).sqrt();
            for k in 0..angular {
                let th = T::TAU() * T::idx(k) / T::idx(angular);
                nodes.push(Point::Planar(Complex::from_polar(r, th)));
                weights.push(w / T::idx(angular));
            }
        }
        Ok(QuadratureRule {
            nodes,
            weights,
            target_measure: TargetMeasure::Reproducing,
            accuracy_order: 2 * radial - 1,
        })
    }

    /// Measure of the reference window used by [`Self::reference_grid`].
    pub fn window_mass(&self, window: T) -> T {
        match &self.domain {
            Domain::Torus(_) | Domain::Group(_) => T::one(),
            Domain::Disk => {
                let s2 = window.tanh().powi(2);
                s2 / (T::one() - s2)
            }
            Domain::Plane => T::PI() * window * window,
            Domain::Line => window + window,
        }
    }
}

fn integer_index<T: Real>(alpha: T) -> Result<usize> {
    if alpha < T::zero() || alpha.fract() != T::zero() {
        return Err(Error::config(format!(
            "torus and group settings need a non-negative integer box radius (got {alpha})"
        )));
    }
    alpha
        .to_usize()
        .ok_or_else(|| Error::config(format!("box radius {alpha} out of range")))
}

/// Representative of `k mod m` in `(-m/2, m/2]`.
fn centered_residue(k: i64, m: i64) -> i64 {
    let r = k.rem_euclid(m);
    if 2 * r > m {
        r - m
    } else {
        r
    }
}

fn part_range<T: Real>(part: Part<T>) -> (T, T) {
    match part {
        Part::Whole => (T::zero(), T::one()),
        Part::Inside(r) => (T::zero(), r.tanh().powi(2)),
        Part::Outside(r) => (r.tanh().powi(2), T::one()),
    }
}

/// Tensor-product integration over `torus^d` against `d theta / (2 pi)^d`.
/// Whole-torus integrals use the trapezoid rule on `m0 * 2^j` points per
/// axis; boxes use composite Gauss-Legendre panels.
fn torus_integral<T: Real>(
    d: usize,
    center: &[T],
    f: &(dyn Fn(&Point<T>) -> T + Sync),
    part: Part<T>,
    tol: T,
    m0: usize,
) -> Result<Integral<T>> {
    let tensor = |axis: &dyn Fn(usize) -> Vec<(T, T)>, m: usize| {
        let nodes = axis(m);
        let count = nodes.len().pow(d as u32);
        let mut acc = Vec::with_capacity(count);
        let mut th = vec![T::zero(); d];
        for flat in 0..count {
            let mut idx = flat;
            let mut w = T::one();
            for j in (0..d).rev() {
                let (t, wt) = nodes[idx % nodes.len()];
                th[j] = center[j] + t;
                w *= wt;
                idx /= nodes.len();
            }
            acc.push(w * f(&Point::Torus(th.clone())));
        }
        compensated_sum(acc)
    };
    let budget = match d {
        1 => 1 << 18,
        2 => 1 << 11,
        3 => 1 << 7,
        _ => 1 << 4,
    };
    let whole_axis = |m: usize| -> Vec<(T, T)> {
        let off = T::lit(ANGULAR_OFFSET);
        (0..m)
            .map(|k| (T::TAU() * (T::idx(k) + off) / T::idx(m), T::one() / T::idx(m)))
            .collect()
    };
    let whole = |tol: T| -> Result<Integral<T>> {
        let mut m = m0.max(8);
        let mut prev = tensor(&whole_axis, m);
        loop {
            let next_m = 2 * m;
            let cur = tensor(&whole_axis, next_m);
            let err = (cur - prev).abs();
            if err <= tol * cur.abs().max(T::one()) {
                return Ok(Integral { value: cur, error: err });
            }
            if next_m > budget {
                return Err(Error::accuracy("torus quadrature", cur.as_f64(), err.as_f64()));
            }
            prev = cur;
            m = next_m;
        }
    };
    let inside = |r: T, tol: T| -> Result<Integral<T>> {
        let r = r.min(T::PI());
        let rule = gauss_legendre::<T>(16);
        let box_axis = |panels: usize| -> Vec<(T, T)> {
            let h = (r + r) / T::idx(panels);
            let mut v = Vec::with_capacity(panels * rule.len());
            for p in 0..panels {
                let lo = -r + h * T::idx(p);
                for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
                    v.push((lo + h * t, w * h / T::TAU()));
                }
            }
            v
        };
        let mut panels = (m0 / 8).max(1);
        let mut prev = tensor(&box_axis, panels);
        loop {
            let next = 2 * panels;
            let cur = tensor(&box_axis, next);
            let err = (cur - prev).abs();
            if err <= tol * cur.abs().max(T::one()) {
                return Ok(Integral { value: cur, error: err });
            }
            if next * 16 > budget {
                return Err(Error::accuracy("torus box quadrature", cur.as_f64(), err.as_f64()));
            }
            prev = cur;
            panels = next;
        }
    };
    match part {
        Part::Whole => whole(tol),
        Part::Inside(r) if r >= T::PI() => whole(tol),
        Part::Inside(r) => inside(r, tol),
        Part::Outside(r) if r >= T::PI() => Ok(Integral { value: T::zero(), error: T::zero() }),
        Part::Outside(r) => {
            let w = whole(tol)?;
            let b = inside(r, tol)?;
            Ok(Integral {
                value: w.value - b.value,
                error: w.error + b.error,
            })
        }
    }
}

/// Numerical estimate of `p` in `A(t) ~ (1 - t)^p` as `t -> 1`, snapped to
/// a multiple of 1/2 when close.
pub(crate) fn boundary_exponent<T: Real>(a: &dyn Fn(T) -> T) -> Option<T> {
    let h1 = T::lit(1e-3);
    let h2 = T::lit(1e-4);
    let v1 = a(T::one() - h1).abs();
    let v2 = a(T::one() - h2).abs();
    if v1 == T::zero() && v2 == T::zero() {
        return None;
    }
    if v2 == T::zero() {
        return Some(T::lit(40.0));
    }
    let p = (v1 / v2).ln() / T::lit(10.0).ln();
    let snapped = (p * T::lit(2.0)).round() / T::lit(2.0);
    Some(if (p - snapped).abs() < T::lit(0.05) { snapped } else { p })
}

/// `int_{t0 < |u|^2 < t1} g(u) (1 - |u|^2)^p d nu(u)` on the disk, with
/// `d nu = (1 - t)^{-2} dt d theta / 2 pi`. When `p` is `None` the boundary
/// exponent of `g` itself is estimated and `p = 0`.
fn bergman_integral<T: Real>(g: &dyn Fn(Cplx<T>) -> T, p: Option<T>, range: (T, T), tol: T) -> Result<Integral<T>> {
    let (t0, t1) = range;
    let ang_tol = tol * T::lit(0.1);
    let mean = |t: T| -> T {
        let r = t.max(T::zero()).sqrt();
        angular_mean(&|th: T| g(Complex::from_polar(r, th)), ang_tol).0
    };
    if t1 < T::one() {
        // Interior region: the density is bounded, composite Gauss-Legendre.
        let p = p.unwrap_or(T::zero());
        let dens = |t: T| mean(t) * (T::one() - t).powf(p - T::lit(2.0));
        let rule = gauss_legendre::<T>(20);
        let mut panels = 2;
        let mut prev = crate::quadrature::composite(&rule, t0, t1, panels, dens);
        loop {
            panels *= 2;
            let cur = crate::quadrature::composite(&rule, t0, t1, panels, dens);
            let err = (cur - prev).abs();
            if err <= tol * cur.abs().max(T::lit(1e-300)) || err == T::zero() {
                return Ok(Integral { value: cur, error: err });
            }
            if panels >= 1024 {
                return Err(Error::accuracy("disk quadrature", cur.as_f64(), err.as_f64()));
            }
            prev = cur;
        }
    }
    let span = T::one() - t0;
    let (shift, weight_p) = match p {
        Some(p) => (T::zero(), p),
        None => {
            let m = |tau: T| mean(t0 + span * tau);
            match boundary_exponent(&m) {
                None => (T::zero(), T::lit(2.0)),
                Some(q) => (q, q),
            }
        }
    };
    // Integrand (1 - t)^{weight_p - 2} times a smooth factor.
    let a = weight_p - T::lit(2.0);
    if a <= -T::one() {
        return Err(Error::Divergence(format!(
            "integrand behaves like (1 - |z|^2)^{:.3} at the boundary; not integrable against the hyperbolic measure",
            (weight_p - T::lit(2.0)).as_f64()
        )));
    }
    let estimate = |m: usize| -> Result<T> {
        let rule = gauss_jacobi::<T>(m, a, T::zero())?;
        let s = rule.apply(|tau, one_minus| {
            let t = t0 + span * tau;
            let v = mean(t);
            if shift == T::zero() {
                v
            } else {
                v / (one_minus * span).powf(shift)
            }
        });
        // int_{t0}^1 (1-t)^a F dt = span^{a+1} / (a+1) * E[F]
        Ok(s * span.powf(a + T::one()) / (a + T::one()))
    };
    let mut m = 16;
    let mut prev = estimate(m)?;
    loop {
        m *= 2;
        let cur = estimate(m)?;
        let err = (cur - prev).abs();
        if err <= tol * cur.abs() || err == T::zero() {
            return Ok(Integral { value: cur, error: err });
        }
        if m >= 512 {
            return Err(Error::accuracy("hyperbolic quadrature", cur.as_f64(), err.as_f64()));
        }
        prev = cur;
    }
}

/// `int g dA` on the plane in polar coordinates `g(r, theta)` around a center.
fn plane_integral<T: Real>(g: &dyn Fn(T, T) -> T, part: Part<T>, tol: T) -> Result<Integral<T>> {
    let ang_tol = tol * T::lit(0.1);
    // In t = r^2: dA = (1/2) dt d theta = pi dt (d theta / 2 pi).
    let dens = |t: T| T::PI() * angular_mean(&|th: T| g(t.max(T::zero()).sqrt(), th), ang_tol).0;
    if !matches!(part, Part::Inside(_)) {
        // r^2 mean|g| must decrease for the area integral to converge.
        let m = |r: T| angular_mean(&|th: T| g(r, th).abs(), ang_tol).0 * r * r;
        let (near, far) = (m(T::lit(1e2)), m(T::lit(1e3)));
        if !(far <= T::lit(0.5) * near) && far > T::zero() {
            return Err(Error::Divergence(format!(
                "integrand does not decay faster than |z|^-2 (r^2 mean|g| = {near:e} at r = 100, {far:e} at r = 1000)"
            )));
        }
    }
    let run = |m: usize| -> T {
        let rule = gauss_legendre::<T>(m);
        match part {
            Part::Inside(r) => crate::quadrature::composite(&rule, T::zero(), r * r, 16, dens),
            Part::Whole => crate::quadrature::integrate_to_infinity(&rule, T::zero(), T::one(), T::epsilon(), dens),
            Part::Outside(r) => {
                crate::quadrature::integrate_to_infinity(&rule, r * r, (r * r).max(T::one()), T::epsilon(), dens)
            }
        }
    };
    let a = run(16);
    let b = run(24);
    let err = (a - b).abs();
    if err > tol * b.abs().max(T::lit(1e-300)) && err > tol * T::lit(1e-3) {
        return Err(Error::accuracy("planar quadrature", b.as_f64(), err.as_f64()));
    }
    Ok(Integral { value: b, error: err })
}

/// `(alpha/pi) int g(r, theta) e^{-alpha r^2} dA` via Gauss-Laguerre in `u = alpha r^2`.
fn fock_kernel_integral<T: Real>(g: &dyn Fn(T, T) -> T, alpha: T, part: Part<T>, tol: T) -> Result<Integral<T>> {
    let ang_tol = tol * T::lit(0.1);
    let mean = |u: T| angular_mean(&|th: T| g((u.max(T::zero()) / alpha).sqrt(), th), ang_tol).0;
    let estimate = |m: usize| -> Result<T> {
        Ok(match part {
            Part::Whole => gauss_laguerre::<T>(m, T::zero())?.apply(|u, _| mean(u)),
            Part::Outside(r) => {
                let u0 = alpha * r * r;
                (-u0).exp() * gauss_laguerre::<T>(m, T::zero())?.apply(|v, _| mean(u0 + v))
            }
            Part::Inside(r) => {
                let u0 = alpha * r * r;
                let rule = gauss_legendre::<T>(m);
                crate::quadrature::composite(&rule, T::zero(), u0, (u0.to_usize().unwrap_or(0) / 8).clamp(1, 256), |u| {
                    mean(u) * (-u).exp()
                })
            }
        })
    };
    let mut m = 24;
    let mut prev = estimate(m)?;
    loop {
        m *= 2;
        let cur = estimate(m)?;
        let err = (cur - prev).abs();
        if err <= tol * cur.abs() || err == T::zero() {
            return Ok(Integral { value: cur, error: err });
        }
        if m >= 384 {
            return Err(Error::accuracy("Gaussian-weighted quadrature", cur.as_f64(), err.as_f64()));
        }
        prev = cur;
    }
}

/// `int g(v) dv` over the line (or `|v| <= r`, `|v| > r`) by unit-aligned
/// panels, extrapolating slowly decaying panel sequences.
fn line_integral<T: Real>(g: &dyn Fn(T) -> T, period: T, part: Part<T>, tol: T) -> Result<Integral<T>> {
    let rule = gauss_legendre::<T>(20);
    let panel = |lo: T, hi: T| (hi - lo) * rule.apply(|t, _| g(lo + (hi - lo) * t));
    match part {
        Part::Inside(r) => {
            let k = (r / period).ceil().to_usize().unwrap_or(1).max(1);
            let h = r / T::idx(k);
            let mut parts = Vec::with_capacity(2 * k);
            for i in 0..k {
                let lo = h * T::idx(i);
                parts.push(panel(lo, lo + h));
                parts.push(panel(-lo - h, -lo));
            }
            Ok(Integral {
                value: compensated_sum(parts),
                error: T::zero(),
            })
        }
        Part::Whole | Part::Outside(_) => {
            let start = match part {
                Part::Outside(r) => r,
                _ => T::zero(),
            };
            let mut total = Integral { value: T::zero(), error: T::zero() };
            for side in [T::one(), -T::one()] {
                let h = |k: usize| {
                    let lo = start + period * T::idx(k);
                    let v = panel(lo, lo + period);
                    if side > T::zero() {
                        v
                    } else {
                        // Mirror: int_{-hi}^{-lo} g
                        (period) * rule.apply(|t, _| g(-(lo + period * t)))
                    }
                };
                let r = half_line_sum(&h, tol)?;
                total.value += r.value;
                total.error += r.error;
            }
            Ok(total)
        }
    }
}

/// `sum_k h(k)` for panel contributions that decay either fast (stop when
/// negligible) or algebraically (fit and extrapolate).
fn half_line_sum<T: Real>(h: &dyn Fn(usize) -> T, tol: T) -> Result<Integral<T>> {
    const MAX_PANELS: usize = 1 << 16;
    let mut vals: Vec<T> = Vec::new();
    let mut quiet = 0;
    let mut next_fit = 256;
    let mut k = 0;
    let mut best_err = T::infinity();
    let mut best_val = T::zero();
    while k < MAX_PANELS {
        let v = h(k);
        vals.push(v);
        k += 1;
        let scale = vals.iter().map(|x| x.abs()).fold(T::zero(), T::max);
        if v.abs() <= T::epsilon() * T::lit(1e-2) * scale {
            quiet += 1;
            if quiet >= 8 {
                return Ok(Integral {
                    value: compensated_sum(vals.iter().copied()),
                    error: T::zero(),
                });
            }
        } else {
            quiet = 0;
        }
        if k == next_fit {
            next_fit *= 2;
            if let Some(fit) = TailExtrapolation::fit(&[&vals]) {
                if fit.summable() {
                    let (tail, unc) = fit.tail(k, |v| v[0]);
                    let value = compensated_sum(vals.iter().copied()) + tail;
                    if unc < best_err {
                        best_err = unc;
                        best_val = value;
                    }
                    if unc <= tol * value.abs().max(T::lit(1e-300)) * T::lit(0.1) || unc <= tol * T::lit(1e-3) {
                        return Ok(Integral { value, error: unc });
                    }
                }
            }
        }
    }
    if best_err.is_finite() {
        Err(Error::accuracy("line quadrature tail", best_val.as_f64(), best_err.as_f64()))
    } else {
        Err(Error::Divergence("panel contributions along the line do not decay summably".into()))
    }
}
