//! Real-valued symbols and weights, spectral functions `psi`, and their
//! analytic metadata (bounds, norms, Fourier data).

pub mod expr;
pub mod fourier;
pub mod trig;

use num_complex::Complex;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::settings::{Domain, FrameSetting, Part, Point};
pub use expr::{parse_expr, Expr, Var};
pub use fourier::FourierTable;
pub use trig::TrigPolynomial;

/// Structural class of a symbol, used to pick exact fast paths.
#[derive(Debug, Clone, PartialEq)]
pub enum SymbolClass<T> {
    /// Function of `t = |z|^2` (disk, plane) only.
    Radial,
    TrigPolynomial(TrigPolynomial<T>),
    ClosedForm,
    /// Values on a uniform torus grid or on every group element, row-major.
    SampledGrid { shape: Vec<usize>, values: Vec<T> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Integrability {
    /// `Some(true)` once `||sigma||_{L^1(nu)}` has been found finite.
    pub l1: Option<bool>,
    pub linf: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Symbol<T> {
    pub expr: Option<Expr>,
    pub domain: Domain,
    pub class: SymbolClass<T>,
    pub ess_inf: T,
    pub ess_sup: T,
    pub integrability: Integrability,
    /// Trigonometric interpolant of sampled torus data.
    interpolant: Option<TrigPolynomial<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Norms<T> {
    pub l1_nu: T,
    pub linf: T,
}

/// Parses `text` as a symbol on `domain`.
pub fn parse_symbol<T: Real>(text: &str, domain: &Domain) -> Result<Symbol<T>> {
    Symbol::parse(text, domain)
}

fn locate(text: &str, name: &str) -> usize {
    let bytes = text.as_bytes();
    let mut from = 0;
    while let Some(i) = text[from..].find(name) {
        let s = from + i;
        let e = s + name.len();
        let before = s == 0 || !(bytes[s - 1].is_ascii_alphanumeric() || bytes[s - 1] == b'_');
        let after = e >= bytes.len() || !(bytes[e].is_ascii_alphanumeric() || bytes[e] == b'_');
        if before && after {
            return s;
        }
        from = e;
    }
    0
}

fn var_name(v: Var) -> String {
    Expr::Var(v).to_string()
}

impl<T: Real> Symbol<T> {
    pub fn parse(text: &str, domain: &Domain) -> Result<Self> {
        let e = parse_expr(text)?;
        for v in e.vars() {
            if !domain.admits(v) {
                let mut name = var_name(v);
                if v == Var::Theta(0) && !text.contains("theta1") {
                    name = "theta".into();
                }
                if v == Var::Residue(0) && !text.contains("x1") {
                    name = "x".into();
                }
                return Err(Error::UnknownIdentifier {
                    position: locate(text, &name),
                    name: format!("{name} (not defined on this domain)"),
                });
            }
        }
        Self::from_expr(e, domain)
    }

    pub fn from_expr(e: Expr, domain: &Domain) -> Result<Self> {
        let vars = e.vars();
        let class = match domain {
            Domain::Torus(d) => match TrigPolynomial::from_expr(&e, *d) {
                Some(mut p) => {
                    p.enforce_hermitian();
                    SymbolClass::TrigPolynomial(p)
                }
                None => SymbolClass::ClosedForm,
            },
            Domain::Disk | Domain::Plane if vars.iter().all(|v| *v == Var::R2) => SymbolClass::Radial,
            _ => SymbolClass::ClosedForm,
        };
        let mut s = Symbol {
            expr: Some(e),
            domain: domain.clone(),
            class,
            ess_inf: T::zero(),
            ess_sup: T::zero(),
            integrability: Integrability { l1: None, linf: true },
            interpolant: None,
        };
        s.compute_bounds()?;
        Ok(s)
    }

    pub fn constant(c: T, domain: &Domain) -> Self {
        Self::from_expr(Expr::num(c.as_f64()), domain).expect("constants are valid symbols")
    }

    /// A symbol given by samples: on `torus^d` at `theta_j = 2 pi i_j / m_j`
    /// (evaluated elsewhere by trigonometric interpolation), on a finite
    /// group at every element.
    pub fn sampled(values: Vec<T>, shape: Vec<usize>, domain: &Domain) -> Result<Self> {
        let total: usize = shape.iter().product();
        if total != values.len() || shape.is_empty() {
            return Err(Error::config(format!("sample grid shape {shape:?} does not match {} values", values.len())));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonReal(format!("sample value {v} is not a finite real")));
        }
        let interpolant = match domain {
            Domain::Torus(d) if *d == shape.len() => {
                let mut data: Vec<Complex<T>> = values.iter().map(|&v| Complex::new(v, T::zero())).collect();
                fourier::dft_n(&mut data, &shape);
                let mut p = TrigPolynomial::constant(*d, T::zero());
                for (flat, c) in data.iter().enumerate() {
                    let mut rem = flat;
                    let mut k = vec![0i64; *d];
                    for j in (0..*d).rev() {
                        let m = shape[j];
                        let r = (rem % m) as i64;
                        rem /= m;
                        // Nyquist terms are split symmetrically by the Hermitian step.
                        k[j] = if 2 * r as usize > m { r - m as i64 } else { r };
                    }
                    if c.norm() > T::zero() {
                        p.coeffs.insert(k, *c);
                    }
                }
                p.enforce_hermitian();
                Some(p)
            }
            Domain::Group(m) if *m == shape => None,
            _ => return Err(Error::config("sampled symbols need a torus grid or a full finite group")),
        };
        let lo = values.iter().copied().fold(T::infinity(), T::min);
        let hi = values.iter().copied().fold(T::neg_infinity(), T::max);
        let mut s = Symbol {
            expr: None,
            domain: domain.clone(),
            class: SymbolClass::SampledGrid { shape, values },
            ess_inf: lo,
            ess_sup: hi,
            integrability: Integrability { l1: None, linf: true },
            interpolant,
        };
        if matches!(s.domain, Domain::Torus(_)) {
            // The interpolant may overshoot the samples between nodes.
            s.compute_bounds()?;
        }
        Ok(s)
    }

    pub fn text(&self) -> String {
        match (&self.expr, &self.class) {
            (Some(e), _) => e.to_string(),
            (None, SymbolClass::SampledGrid { shape, .. }) => format!("sampled{shape:?}"),
            _ => "<symbol>".into(),
        }
    }

    pub fn eval(&self, p: &Point<T>) -> T {
        if let SymbolClass::SampledGrid { shape, values } = &self.class {
            return match (p, &self.interpolant) {
                (Point::Torus(t), Some(ip)) => ip.eval(t),
                (Point::Group(r), _) => {
                    let mut flat = 0;
                    for (j, &v) in r.iter().enumerate() {
                        flat = flat * shape[j] + v.rem_euclid(shape[j] as i64) as usize;
                    }
                    values[flat]
                }
                _ => T::nan(),
            };
        }
        match &self.expr {
            Some(e) => self.domain.eval(e, p),
            None => T::nan(),
        }
    }

    /// Radial profile `t -> sigma(sqrt t)`.
    pub fn profile(&self, t: T) -> T {
        self.eval(&Point::Planar(Complex::new(t.max(T::zero()).sqrt(), T::zero())))
    }

    pub fn is_radial(&self) -> bool {
        matches!(self.class, SymbolClass::Radial)
    }

    pub fn trig(&self) -> Option<&TrigPolynomial<T>> {
        match &self.class {
            SymbolClass::TrigPolynomial(p) => Some(p),
            _ => None,
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        self.ess_inf >= T::zero()
    }

    pub fn is_bounded(&self) -> bool {
        self.ess_inf.is_finite() && self.ess_sup.is_finite()
    }

    pub fn is_zero(&self) -> bool {
        self.ess_inf == T::zero() && self.ess_sup == T::zero()
    }

    pub fn is_constant(&self) -> bool {
        self.ess_inf == self.ess_sup
    }

    pub fn sup_norm(&self) -> T {
        self.ess_inf.abs().max(self.ess_sup.abs())
    }

    /// `c * sigma`.
    pub fn scaled(&self, c: T) -> Result<Self> {
        match &self.expr {
            Some(e) => {
                let e = Expr::bin(expr::BinOp::Mul, Expr::num(c.as_f64()), e.clone());
                let mut s = Self::from_expr(e, &self.domain)?;
                s.integrability.l1 = self.integrability.l1;
                Ok(s)
            }
            None => match &self.class {
                SymbolClass::SampledGrid { shape, values } => {
                    Self::sampled(values.iter().map(|&v| v * c).collect(), shape.clone(), &self.domain)
                }
                _ => Err(Error::Unsupported("cannot rescale this symbol".into())),
            },
        }
    }

    fn compute_bounds(&mut self) -> Result<()> {
        let (lo, hi) = extrema(self)?;
        let scale = lo.abs().max(hi.abs());
        let snap = |v: T| if v.abs() <= T::lit(1e-13) * scale { T::zero() } else { v };
        self.ess_inf = snap(lo);
        self.ess_sup = snap(hi);
        self.integrability.linf = self.is_bounded();
        Ok(())
    }

    /// Fourier coefficients `sigma_hat(k)` over the Folner-box differences
    /// of `setting`: `|k_j| <= radius` on the torus, all of the dual on a
    /// finite group. Conjugate symmetry is enforced and then asserted.
    pub fn fourier_table(&self, setting: &FrameSetting<T>, radius: usize, tol: T) -> Result<FourierTable<T>> {
        match (&self.domain, &setting.domain) {
            (Domain::Torus(d), Domain::Torus(d2)) if d == d2 => self.torus_table(*d, radius, tol),
            (Domain::Group(m), Domain::Group(m2)) if m == m2 => {
                let elems = setting.group_elements();
                let mut data: Vec<Complex<T>> = elems
                    .iter()
                    .map(|e| Complex::new(self.eval(&Point::Group(e.clone())), T::zero()))
                    .collect();
                fourier::dft_n(&mut data, m);
                let mut t = FourierTable {
                    shape: m.clone(),
                    periodic: true,
                    data,
                };
                t.enforce_hermitian();
                Ok(t)
            }
            _ => Err(Error::domain("Fourier coefficients need a torus or finite-group symbol on the same domain")),
        }
    }

    fn torus_table(&self, dim: usize, radius: usize, tol: T) -> Result<FourierTable<T>> {
        let side = 2 * radius + 1;
        if let Some(p) = self.trig().or(self.interpolant.as_ref()) {
            let total = side.pow(dim as u32);
            let mut data = Vec::with_capacity(total);
            for flat in 0..total {
                let mut rem = flat;
                let mut k = vec![0i64; dim];
                for j in (0..dim).rev() {
                    k[j] = (rem % side) as i64 - radius as i64;
                    rem /= side;
                }
                data.push(p.coefficient(&k));
            }
            let mut t = FourierTable {
                shape: vec![side; dim],
                periodic: false,
                data,
            };
            t.enforce_hermitian();
            return Ok(t);
        }
        let budget = match dim {
            1 => 1 << 20,
            2 => 1 << 11,
            3 => 1 << 7,
            _ => 1 << 4,
        };
        let sample = |m: usize| -> Result<FourierTable<T>> {
            let total = m.pow(dim as u32);
            let mut data = Vec::with_capacity(total);
            let mut th = vec![T::zero(); dim];
            for flat in 0..total {
                let mut rem = flat;
                for j in (0..dim).rev() {
                    th[j] = T::TAU() * T::idx(rem % m) / T::idx(m);
                    rem /= m;
                }
                let v = self.eval(&Point::Torus(th.clone()));
                if !v.is_finite() {
                    return Err(Error::NonReal(format!("symbol is not finite at theta = {th:?}")));
                }
                data.push(Complex::new(v, T::zero()));
            }
            fourier::dft_n(&mut data, &vec![m; dim]);
            Ok(FourierTable::from_grid_dft(&data, m, dim, radius))
        };
        let mut m = (4 * (radius + 1)).next_power_of_two().max(16);
        let mut prev = sample(m)?;
        loop {
            m *= 2;
            let cur = sample(m)?;
            let scale = cur.data.iter().map(|c| c.norm()).fold(T::zero(), T::max).max(T::lit(1e-300));
            let diff = cur.data.iter().zip(&prev.data).map(|(a, b)| (*a - *b).norm()).fold(T::zero(), T::max);
            if diff <= tol * scale {
                let mut t = cur;
                t.enforce_hermitian();
                return Ok(t);
            }
            if m >= budget {
                return Err(Error::accuracy("Fourier coefficients", scale.as_f64(), diff.as_f64()));
            }
            prev = cur;
        }
    }

    /// `sigma_hat(k)` for a torus or finite-group symbol.
    pub fn fourier_coefficient(&self, setting: &FrameSetting<T>, k: &[i64], tol: T) -> Result<Complex<T>> {
        if k.len() != setting.dual_axes().len().max(k.len().min(1)) {
            return Err(Error::domain(format!("multi-index {k:?} has the wrong dimension")));
        }
        if let Some(p) = self.trig() {
            return Ok(p.coefficient(k));
        }
        let radius = k.iter().map(|v| v.unsigned_abs() as usize).max().unwrap_or(0);
        Ok(self.fourier_table(setting, radius, tol)?.get(k))
    }

    /// `||sigma||_{L^1(nu)}` by quadrature (rejecting divergent integrals)
    /// and `||sigma||_inf` from the computed bounds.
    pub fn norms(&self, setting: &FrameSetting<T>, tol: T) -> Result<Norms<T>> {
        let f = |p: &Point<T>| self.eval(p).abs();
        let l1 = setting.integrate_base(&f, Part::Whole, tol)?.value;
        Ok(Norms {
            l1_nu: l1,
            linf: self.sup_norm(),
        })
    }
}

/// Parameterization of the domain by a box used for bound searches.
struct Chart {
    dims: usize,
    periodic: Vec<bool>,
}

fn chart<T: Real>(sym: &Symbol<T>) -> Chart {
    match (&sym.domain, &sym.class) {
        (Domain::Torus(d), _) => Chart {
            dims: *d,
            periodic: vec![true; *d],
        },
        (Domain::Disk | Domain::Plane, SymbolClass::Radial) => Chart {
            dims: 1,
            periodic: vec![false],
        },
        (Domain::Disk | Domain::Plane, _) => Chart {
            dims: 2,
            periodic: vec![false, true],
        },
        (Domain::Line, _) => Chart {
            dims: 1,
            periodic: vec![false],
        },
        (Domain::Group(m), _) => Chart {
            dims: m.len(),
            periodic: vec![true; m.len()],
        },
    }
}

const EDGE: f64 = 1e-12;

fn chart_point<T: Real>(sym: &Symbol<T>, u: &[T]) -> Point<T> {
    let clamp = |v: T| v.max(T::zero()).min(T::one() - T::lit(EDGE));
    match (&sym.domain, &sym.class) {
        (Domain::Torus(_), _) => Point::Torus(u.iter().map(|&v| T::TAU() * v).collect()),
        (Domain::Disk, SymbolClass::Radial) => Point::Planar(Complex::new(clamp(u[0]).sqrt(), T::zero())),
        (Domain::Plane, SymbolClass::Radial) => {
            let s = clamp(u[0]);
            Point::Planar(Complex::new((s / (T::one() - s)).sqrt(), T::zero()))
        }
        (Domain::Disk, _) => Point::Planar(Complex::from_polar(clamp(u[0]), T::TAU() * u[1])),
        (Domain::Plane, _) => {
            let s = clamp(u[0]);
            Point::Planar(Complex::from_polar(s / (T::one() - s), T::TAU() * u[1]))
        }
        (Domain::Line, _) => {
            let s = clamp(u[0]).max(T::lit(EDGE));
            Point::Line((T::PI() * (s - T::lit(0.5))).tan())
        }
        (Domain::Group(_), _) => unreachable!("groups are enumerated"),
    }
}

/// Infimum and supremum of a symbol over its domain: exact enumeration on
/// groups, otherwise a dense chart grid refined by pattern search.
fn extrema<T: Real>(sym: &Symbol<T>) -> Result<(T, T)> {
    if let Domain::Group(m) = &sym.domain {
        let total: usize = m.iter().product();
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for flat in 0..total {
            let mut rem = flat;
            let mut e = vec![0i64; m.len()];
            for j in (0..m.len()).rev() {
                e[j] = (rem % m[j]) as i64;
                rem /= m[j];
            }
            let v = sym.eval(&Point::Group(e.clone()));
            if v.is_nan() {
                return Err(Error::NonReal(format!("symbol is undefined at group element {e:?}")));
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
        return Ok((lo, hi));
    }
    if let (Some(e), false) = (&sym.expr, matches!(sym.class, SymbolClass::SampledGrid { .. })) {
        if let Some(c) = e.as_constant() {
            if !c.is_finite() {
                return Err(Error::NonReal(format!("constant symbol evaluates to {c}")));
            }
            return Ok((T::lit(c), T::lit(c)));
        }
    }
    let ch = chart(sym);
    let per_axis: usize = match ch.dims {
        1 => 4096,
        2 => 256,
        3 => 40,
        _ => 12,
    };
    let total = per_axis.pow(ch.dims as u32);
    let mut best_lo = (T::infinity(), vec![]);
    let mut best_hi = (T::neg_infinity(), vec![]);
    let mut u = vec![T::zero(); ch.dims];
    for flat in 0..=total {
        let mut rem = flat;
        for j in (0..ch.dims).rev() {
            let i = rem % per_axis;
            rem /= per_axis;
            u[j] = if ch.periodic[j] {
                T::idx(i) / T::idx(per_axis)
            } else if flat == total {
                T::one()
            } else {
                T::idx(i) / T::idx(per_axis - 1)
            };
        }
        let p = chart_point(sym, &u);
        let v = sym.eval(&p);
        if v.is_nan() {
            return Err(Error::NonReal(format!("symbol is undefined at {p:?}")));
        }
        if v < best_lo.0 {
            best_lo = (v, u.clone());
        }
        if v > best_hi.0 {
            best_hi = (v, u.clone());
        }
    }
    let step0 = T::one() / T::idx(per_axis);
    let lo = refine(sym, &ch, best_lo, step0, -T::one());
    let hi = refine(sym, &ch, best_hi, step0, T::one());
    Ok((lo, hi))
}

/// Coordinate pattern search maximizing `sign * sigma` on the chart.
fn refine<T: Real>(sym: &Symbol<T>, ch: &Chart, start: (T, Vec<T>), step0: T, sign: T) -> T {
    let (mut best, mut u) = start;
    if !best.is_finite() {
        return best;
    }
    let mut step = step0;
    let min_step = T::lit(1e-13);
    while step > min_step {
        let mut improved = false;
        for j in 0..ch.dims {
            for dir in [T::one(), -T::one()] {
                let mut cand = u.clone();
                cand[j] += dir * step;
                if !ch.periodic[j] {
                    cand[j] = cand[j].max(T::zero()).min(T::one());
                }
                let v = sym.eval(&chart_point(sym, &cand));
                if v.is_finite() && sign * v > sign * best {
                    best = v;
                    u = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step = step * T::lit(0.5);
        }
    }
    best
}

/// Shape of the spectral function `psi`.
#[derive(Debug, Clone, PartialEq)]
pub enum PsiKind {
    Identity,
    Power(f64),
    /// `log(x + c)`.
    LogShifted(f64),
    Exp,
    /// `|x|^p`.
    AbsPower(f64),
    /// An expression in `x`.
    Custom(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsiFunction {
    pub kind: PsiKind,
}

/// Names accepted for the built-in `psi` kinds, sorted.
pub const PSI_KINDS: [&str; 6] = ["abs-power", "exp", "expr", "id", "log-shifted", "power"];

impl PsiFunction {
    pub fn new(kind: PsiKind) -> Self {
        Self { kind }
    }

    /// Parses `id`, `log`, `exp`, `abs`, `power:<k>`, `abs-power:<p>`,
    /// `log-shifted:<c>` or an expression in `x`; `log` uses `shift`.
    pub fn parse(text: &str, shift: f64) -> Result<Self> {
        if !(shift >= 0.0) || !shift.is_finite() {
            return Err(Error::config(format!("log shift must be a finite non-negative number (got {shift})")));
        }
        let t = text.trim();
        let param = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::config(format!("bad psi parameter '{s}'")))
        };
        let kind = match t {
            "id" | "identity" => PsiKind::Identity,
            "log" | "log-shifted" => PsiKind::LogShifted(shift),
            "exp" => PsiKind::Exp,
            "abs" | "abs-power" => PsiKind::AbsPower(1.0),
            _ => {
                if let Some(k) = t.strip_prefix("power:") {
                    PsiKind::Power(param(k)?)
                } else if let Some(p) = t.strip_prefix("abs-power:") {
                    PsiKind::AbsPower(param(p)?)
                } else if let Some(c) = t.strip_prefix("log-shifted:") {
                    let c = param(c)?;
                    if c < 0.0 {
                        return Err(Error::config("log shift must be non-negative"));
                    }
                    PsiKind::LogShifted(c)
                } else {
                    let e = parse_expr(t)?;
                    if let Some(v) = e.vars().into_iter().find(|v| *v != Var::X) {
                        let name = var_name(v);
                        return Err(Error::UnknownIdentifier {
                            position: locate(t, &name),
                            name: format!("{name} (psi is a function of x)"),
                        });
                    }
                    Self::recognize(&e, shift)
                }
            }
        };
        Ok(Self { kind })
    }

    fn recognize(e: &Expr, shift: f64) -> PsiKind {
        use expr::{BinOp, Func};
        let is_x = |e: &Expr| matches!(e, Expr::Var(Var::X));
        match e {
            Expr::Var(Var::X) => PsiKind::Identity,
            Expr::Bin(BinOp::Pow, b, k) if is_x(b) && k.as_constant().is_some() => PsiKind::Power(k.as_constant().unwrap()),
            Expr::Bin(BinOp::Pow, b, k) if k.as_constant().is_some() && matches!(&**b, Expr::Call(Func::Abs, a) if is_x(a)) => {
                PsiKind::AbsPower(k.as_constant().unwrap())
            }
            Expr::Call(Func::Abs, a) if is_x(a) => PsiKind::AbsPower(1.0),
            Expr::Call(Func::Exp, a) if is_x(a) => PsiKind::Exp,
            Expr::Call(Func::Log, a) if is_x(a) => PsiKind::LogShifted(shift),
            Expr::Call(Func::Log, a) => match &**a {
                Expr::Bin(BinOp::Add, l, r) if is_x(l) && r.as_constant().is_some_and(|c| c >= 0.0) => {
                    PsiKind::LogShifted(r.as_constant().unwrap())
                }
                _ => PsiKind::Custom(e.clone()),
            },
            _ => PsiKind::Custom(e.clone()),
        }
    }

    pub fn name(&self) -> String {
        match &self.kind {
            PsiKind::Identity => "id".into(),
            PsiKind::Power(k) => format!("x^{k}"),
            PsiKind::LogShifted(c) if *c == 0.0 => "log(x)".into(),
            PsiKind::LogShifted(c) => format!("log(x + {c})"),
            PsiKind::Exp => "exp(x)".into(),
            PsiKind::AbsPower(p) if *p == 1.0 => "abs(x)".into(),
            PsiKind::AbsPower(p) => format!("abs(x)^{p}"),
            PsiKind::Custom(e) => e.to_string(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            PsiKind::Identity => "id",
            PsiKind::Power(_) => "power",
            PsiKind::LogShifted(_) => "log-shifted",
            PsiKind::Exp => "exp",
            PsiKind::AbsPower(_) => "abs-power",
            PsiKind::Custom(_) => "expr",
        }
    }

    pub fn eval<T: Real>(&self, x: T) -> T {
        match &self.kind {
            PsiKind::Identity => x,
            PsiKind::Power(k) => {
                if k.fract() == 0.0 && k.abs() < 1e9 {
                    x.powi(*k as i32)
                } else {
                    x.powf(T::lit(*k))
                }
            }
            PsiKind::LogShifted(c) => (x + T::lit(*c)).ln(),
            PsiKind::Exp => x.exp(),
            PsiKind::AbsPower(p) => x.abs().powf(T::lit(*p)),
            PsiKind::Custom(e) => e.eval(&expr::Env::scalar(x)),
        }
    }

    /// Evaluates with a domain check, naming the offending argument.
    pub fn eval_checked<T: Real>(&self, x: T) -> Result<T> {
        if let PsiKind::LogShifted(c) = self.kind {
            if x + T::lit(c) <= T::zero() {
                return Err(Error::domain(format!(
                    "{} is undefined at eigenvalue {x:e} (shift {c})",
                    self.name()
                )));
            }
        }
        let v = self.eval(x);
        if v.is_nan() {
            return Err(Error::domain(format!("{} is undefined at {x:e}", self.name())));
        }
        Ok(v)
    }

    /// Smallest admissible argument, if the function has one.
    pub fn domain_lower_bound(&self) -> Option<f64> {
        match self.kind {
            PsiKind::LogShifted(c) => Some(-c),
            PsiKind::Power(k) if k.fract() != 0.0 => Some(0.0),
            _ => None,
        }
    }

    fn second_differences<T: Real>(&self, lo: T, hi: T) -> Vec<T> {
        let n = 256;
        let h = (hi - lo) / T::idx(n);
        (1..n)
            .map(|i| {
                let x = lo + h * T::idx(i);
                self.eval(x + h) - T::lit(2.0) * self.eval(x) + self.eval(x - h)
            })
            .collect()
    }

    pub fn is_convex_on<T: Real>(&self, lo: T, hi: T) -> bool {
        match &self.kind {
            PsiKind::Identity | PsiKind::Exp => true,
            PsiKind::LogShifted(_) => false,
            PsiKind::AbsPower(p) => *p >= 1.0,
            PsiKind::Power(k) => {
                let k = *k;
                if k == 0.0 || k == 1.0 {
                    true
                } else if k.fract() == 0.0 && k > 1.0 {
                    (k as i64) % 2 == 0 || lo >= T::zero()
                } else if k.fract() == 0.0 {
                    lo > T::zero() || (hi < T::zero() && (k as i64) % 2 == 0)
                } else {
                    lo >= T::zero() && k > 1.0
                }
            }
            PsiKind::Custom(_) => {
                let d = self.second_differences(lo, hi);
                let scale = d.iter().map(|v| v.abs()).fold(T::zero(), T::max);
                d.iter().all(|&v| v >= -T::lit(1e-10) * scale.max(T::epsilon()))
            }
        }
    }

    pub fn is_concave_on<T: Real>(&self, lo: T, hi: T) -> bool {
        match &self.kind {
            PsiKind::Identity => true,
            PsiKind::LogShifted(_) => true,
            PsiKind::Exp => false,
            PsiKind::AbsPower(p) => *p <= 1.0 && lo >= T::zero() || *p == 1.0 && hi <= T::zero(),
            PsiKind::Power(k) => {
                let k = *k;
                if k == 0.0 || k == 1.0 {
                    true
                } else if k.fract() == 0.0 && k > 1.0 {
                    (k as i64) % 2 == 1 && hi <= T::zero()
                } else {
                    lo >= T::zero() && k > 0.0 && k < 1.0
                }
            }
            PsiKind::Custom(_) => {
                let d = self.second_differences(lo, hi);
                let scale = d.iter().map(|v| v.abs()).fold(T::zero(), T::max);
                d.iter().all(|&v| v <= T::lit(1e-10) * scale.max(T::epsilon()))
            }
        }
    }

    pub fn is_nonnegative_on<T: Real>(&self, lo: T, hi: T) -> bool {
        let n = 512;
        (0..=n).all(|i| {
            let x = lo + (hi - lo) * T::idx(i) / T::idx(n);
            self.eval(x) >= T::zero()
        })
    }

    /// `sup |psi|` on `[lo, hi]`: endpoint maximum for monotone or convex
    /// kinds, dense sampling for custom expressions.
    pub fn sup_abs_on<T: Real>(&self, lo: T, hi: T) -> T {
        let ends = self.eval(lo).abs().max(self.eval(hi).abs());
        match self.kind {
            PsiKind::Custom(_) => {
                let n = 4096;
                (0..=n)
                    .map(|i| self.eval(lo + (hi - lo) * T::idx(i) / T::idx(n)).abs())
                    .fold(ends, T::max)
            }
            PsiKind::Power(k) if k < 0.0 && lo <= T::zero() && hi >= T::zero() => T::infinity(),
            _ => ends,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn torus1() -> Domain {
        Domain::Torus(1)
    }

    #[test]
    fn trig_symbol_detection() {
        let s: Symbol<f64> = parse_symbol("2 + cos(theta1)", &torus1()).unwrap();
        let p = s.trig().unwrap();
        assert_eq!(p.coefficient(&[0]).re, 2.0);
        assert_eq!(p.coefficient(&[1]).re, 0.5);
        assert_eq!(p.coefficient(&[-1]).re, 0.5);
        assert!((s.ess_inf - 1.0).abs() < 1e-12 && (s.ess_sup - 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_and_radial() {
        let z: Symbol<f64> = parse_symbol("0", &Domain::Disk).unwrap();
        assert_eq!((z.ess_inf, z.ess_sup), (0.0, 0.0));
        let r: Symbol<f64> = parse_symbol("(1 - r2)^2", &Domain::Disk).unwrap();
        assert!(r.is_radial());
        assert!((r.profile(0.25) - 0.5625).abs() < 1e-16);
        assert_eq!(r.ess_inf, 0.0);
        assert!((r.ess_sup - 1.0).abs() < 1e-15);
        let c: Symbol<f64> = parse_symbol("x * y", &Domain::Disk).unwrap();
        assert!(matches!(c.class, SymbolClass::ClosedForm));
        assert!((c.ess_sup - 0.5).abs() < 1e-9 && (c.ess_inf + 0.5).abs() < 1e-9);
    }

    #[test]
    fn wrong_domain_variables_are_reported() {
        match parse_symbol::<f64>("1 + r2", &torus1()) {
            Err(Error::UnknownIdentifier { position, .. }) => assert_eq!(position, 4),
            other => panic!("{other:?}"),
        }
        assert!(parse_symbol::<f64>("cos(theta2)", &torus1()).is_err());
        assert!(matches!(parse_symbol::<f64>("log(-1)", &torus1()), Err(Error::NonReal(_))));
        assert!(matches!(parse_symbol::<f64>("log(x)", &Domain::Line), Err(Error::NonReal(_))));
    }

    #[test]
    fn fourier_coefficients() {
        let t = FrameSetting::<f64>::torus(1, 2).unwrap();
        let s: Symbol<f64> = parse_symbol("2 + cos(theta1)", &torus1()).unwrap();
        let c = |k: i64| s.fourier_coefficient(&t, &[k], 1e-13).unwrap();
        assert_eq!(c(0).re, 2.0);
        assert_eq!(c(1).re, 0.5);
        assert_eq!(c(-1).re, 0.5);
        assert_eq!(c(2).norm(), 0.0);
        // The same symbol as a closed form goes through the DFT path.
        let e: Symbol<f64> = Symbol::from_expr(parse_expr("2 + cos(theta1)").unwrap(), &torus1()).unwrap();
        let mut closed = e.clone();
        closed.class = SymbolClass::ClosedForm;
        for k in -2..=2 {
            let a = closed.fourier_coefficient(&t, &[k], 1e-13).unwrap();
            assert!((a - c(k)).norm() < 1e-12, "k = {k}");
        }
        let cst: Symbol<f64> = parse_symbol("4.5", &torus1()).unwrap();
        assert_eq!(cst.fourier_coefficient(&t, &[3], 1e-13).unwrap().norm(), 0.0);
        let t2 = FrameSetting::<f64>::torus(2, 1).unwrap();
        let s2: Symbol<f64> = parse_symbol("3 + cos(theta1) + cos(theta2)", &Domain::Torus(2)).unwrap();
        assert_eq!(s2.fourier_coefficient(&t2, &[1, 0], 1e-13).unwrap().re, 0.5);
        assert_eq!(s2.fourier_coefficient(&t2, &[1, 1], 1e-13).unwrap().norm(), 0.0);
    }

    #[test]
    fn non_polynomial_torus_symbol_uses_dft() {
        // exp(cos t) has coefficients I_k(1).
        let t = FrameSetting::<f64>::torus(1, 3).unwrap();
        let s: Symbol<f64> = parse_symbol("exp(cos(theta1))", &torus1()).unwrap();
        assert!(matches!(s.class, SymbolClass::ClosedForm));
        let tab = s.fourier_table(&t, 6, 1e-14).unwrap();
        assert!((tab.get(&[0]).re - 1.266_065_877_752_008_4).abs() < 1e-14);
        assert!((tab.get(&[1]).re - 0.565_159_103_992_485).abs() < 1e-14);
        assert!(tab.max_hermitian_defect() == 0.0);
    }

    #[test]
    fn group_fourier_is_exact() {
        let g = FrameSetting::<f64>::group(&[12], 6).unwrap();
        let s: Symbol<f64> = parse_symbol("x^2 / 10", &Domain::Group(vec![12])).unwrap();
        let tab = s.fourier_table(&g, 0, 1e-14).unwrap();
        let direct: f64 = (0..12).map(|x| (x * x) as f64 / 10.0).sum::<f64>() / 12.0;
        assert!((tab.get(&[0]).re - direct).abs() < 1e-13);
        assert!((tab.get(&[-1]) - tab.get(&[11])).norm() == 0.0);
    }

    #[test]
    fn norms_examples() {
        let b = FrameSetting::<f64>::bergman(2.0).unwrap();
        let s: Symbol<f64> = parse_symbol("(1 - r2)^2", &Domain::Disk).unwrap();
        let n = s.norms(&b, 1e-12).unwrap();
        assert!((n.l1_nu - 1.0).abs() < 1e-12);
        let d: Symbol<f64> = parse_symbol("1 - r2", &Domain::Disk).unwrap();
        assert!(matches!(d.norms(&b, 1e-12), Err(Error::Divergence(_))));
        let t = FrameSetting::<f64>::torus(1, 1).unwrap();
        let s: Symbol<f64> = parse_symbol("2 + cos(theta1)", &torus1()).unwrap();
        assert!((s.norms(&t, 1e-12).unwrap().linf - 3.0).abs() < 1e-12);
    }

    #[test]
    fn sampled_symbols() {
        let vals: Vec<f64> = (0..8).map(|k| 2.0 + (std::f64::consts::TAU * k as f64 / 8.0).cos()).collect();
        let s = Symbol::sampled(vals, vec![8], &torus1()).unwrap();
        assert!((s.eval(&Point::Torus(vec![0.3])) - (2.0 + 0.3f64.cos())).abs() < 1e-14);
        let g = Symbol::<f64>::sampled(vec![1.0, 5.0, 2.0], vec![3], &Domain::Group(vec![3])).unwrap();
        assert_eq!(g.eval(&Point::Group(vec![4])), 5.0);
        assert_eq!((g.ess_inf, g.ess_sup), (1.0, 5.0));
    }

    #[test]
    fn psi_parsing_and_shape() {
        let p = PsiFunction::parse("log", 0.5).unwrap();
        assert_eq!(p.kind, PsiKind::LogShifted(0.5));
        assert!(p.is_concave_on(0.0, 3.0) && !p.is_convex_on(0.0, 3.0));
        assert!(p.eval_checked(-0.6f64).is_err());
        assert_eq!(PsiFunction::parse("x^2", 0.0).unwrap().kind, PsiKind::Power(2.0));
        assert_eq!(PsiFunction::parse("exp(x)", 0.0).unwrap().kind, PsiKind::Exp);
        assert_eq!(PsiFunction::parse("abs(x)", 0.0).unwrap().kind, PsiKind::AbsPower(1.0));
        assert_eq!(PsiFunction::parse("log(x + 2)", 0.0).unwrap().kind, PsiKind::LogShifted(2.0));
        assert_eq!(PsiFunction::parse("id", 0.0).unwrap().kind, PsiKind::Identity);
        let c = PsiFunction::parse("x^4 + x", 0.0).unwrap();
        assert!(matches!(c.kind, PsiKind::Custom(_)));
        assert!(c.is_convex_on(-2.0, 2.0));
        assert!(PsiFunction::parse("theta1", 0.0).is_err());
        assert!(PsiFunction::parse("log", -1.0).is_err());
        assert!(PsiFunction::parse("power:3", 0.0).unwrap().is_convex_on(0.0, 1.0));
        assert!(!PsiFunction::parse("power:3", 0.0).unwrap().is_convex_on(-1.0, 1.0));
        assert_eq!(PsiFunction::parse("x^2", 0.0).unwrap().sup_abs_on(-3.0, 2.0), 9.0);
    }
}
