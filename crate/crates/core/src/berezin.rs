//! Berezin transforms and the convergence diagnostics built on them.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Mutex;

use num_complex::Complex;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::operators::effective_support;
use crate::quadrature::{composite, gauss_legendre};
use crate::scalar::{compensated_sum, Real};
use crate::settings::{Domain, Family, FrameSetting, Part, Point, QuadratureRule, SettingIndex};
use crate::symbols::Symbol;

/// Evaluates `sigma~(x)` for one setting and symbol, reusing whatever can be
/// precomputed.
pub struct BerezinEvaluator<'a, T> {
    setting: &'a FrameSetting<T>,
    sigma: &'a Symbol<T>,
    tol: T,
    /// Torus: nonzero coefficients already multiplied by the Fejer weights.
    damped: Option<Vec<(Vec<i64>, Complex<T>)>>,
    radial_cache: Option<Mutex<HashMap<u64, T>>>,
    /// Line: effective support half width of the symbol, when finite.
    line_support: Option<T>,
}

impl<'a, T: Real> BerezinEvaluator<'a, T> {
    pub fn new(setting: &'a FrameSetting<T>, sigma: &'a Symbol<T>, tol: T) -> Result<Self> {
        if sigma.domain != setting.domain {
            return Err(Error::domain(format!(
                "symbol lives on {:?} but the setting is {}",
                sigma.domain,
                setting.family()
            )));
        }
        let damped = match setting.family() {
            Family::Torus { .. } => {
                let axes = setting.dual_axes();
                let n = axes[0].len() / 2;
                let table = sigma.fourier_table(setting, 2 * n, tol)?;
                let side = 4 * n + 1;
                let dim = axes.len();
                let mut out = Vec::new();
                for flat in 0..side.pow(dim as u32) {
                    let mut rem = flat;
                    let mut k = vec![0i64; dim];
                    for j in (0..dim).rev() {
                        k[j] = (rem % side) as i64 - 2 * n as i64;
                        rem /= side;
                    }
                    let c = table.get(&k);
                    if c.norm() == T::zero() {
                        continue;
                    }
                    // The overlap kernel's coefficient at k counts pairs in the
                    // box with difference k: (L - |k|) / L per axis.
                    let w = k
                        .iter()
                        .zip(axes)
                        .map(|(&kj, ax)| {
                            let l = T::idx(ax.len());
                            (l - T::int(kj.abs())).max(T::zero()) / l
                        })
                        .fold(T::one(), |a, b| a * b);
                    if w > T::zero() {
                        out.push((k, c * w));
                    }
                }
                Some(out)
            }
            _ => None,
        };
        let radial_cache = (matches!(setting.family(), Family::Bergman | Family::Fock) && sigma.is_radial())
            .then(|| Mutex::new(HashMap::new()));
        let line_support = match setting.family() {
            Family::PaleyWiener => effective_support(sigma).ok(),
            _ => None,
        };
        Ok(Self {
            setting,
            sigma,
            tol,
            damped,
            radial_cache,
            line_support,
        })
    }

    pub fn eval(&self, x: &Point<T>) -> Result<T> {
        if let (Some(terms), Point::Torus(th)) = (&self.damped, x) {
            let s = compensated_sum(terms.iter().map(|(k, c)| {
                let phase = k.iter().zip(th).fold(T::zero(), |acc, (&kj, &t)| acc + T::int(kj) * t);
                (c * Complex::from_polar(T::one(), phase)).re
            }));
            return Ok(s);
        }
        if let (Some(cache), Point::Planar(z)) = (&self.radial_cache, x) {
            let r = z.norm();
            let key = r.as_f64().to_bits();
            if let Some(v) = cache.lock().expect("cache lock").get(&key) {
                return Ok(*v);
            }
            let v = self.quadrature(&Point::Planar(Complex::new(r, T::zero())))?;
            cache.lock().expect("cache lock").insert(key, v);
            return Ok(v);
        }
        if let (Some(xs), Point::Line(c)) = (self.line_support, x) {
            return self.line_panels(*c, xs);
        }
        self.quadrature(x)
    }

    /// Panels of width `1 / (2 alpha)` between kernel zeros, covering the
    /// symbol's support rather than marching outward from `x`.
    fn line_panels(&self, x: T, support: T) -> Result<T> {
        let two_a = self.setting.alpha() + self.setting.alpha();
        // Kernel zeros sit at x + k / (2 alpha).
        let lo = x + ((-support - x) * two_a).floor() / two_a;
        let panels = ((support - lo) * two_a).ceil().to_usize().unwrap_or(0).max(1);
        let hi = lo + T::idx(panels) / two_a;
        let f = |y: T| self.sigma.eval(&Point::Line(y)) * kernel_line(two_a, x - y);
        let fine = composite(&gauss_legendre::<T>(24), lo, hi, panels, f);
        let coarse = composite(&gauss_legendre::<T>(16), lo, hi, panels, f);
        let err = (fine - coarse).abs();
        if err > T::lit(10.0) * self.tol * fine.abs() + T::lit(1e-15) * self.sigma.sup_norm() {
            return Err(Error::accuracy("Berezin transform", fine.as_f64(), err.as_f64()));
        }
        Ok(fine)
    }

    fn quadrature(&self, x: &Point<T>) -> Result<T> {
        let f = |p: &Point<T>| self.sigma.eval(p);
        let res = self.setting.integrate_against_kernel(&f, x, Part::Whole, self.tol)?;
        let scale = res.value.abs().max(self.sigma.sup_norm()).max(T::lit(1e-300));
        if res.error > T::lit(10.0) * self.tol * scale + T::lit(1e-14) * scale {
            return Err(Error::accuracy("Berezin transform", res.value.as_f64(), res.error.as_f64()));
        }
        Ok(res.value)
    }
}

/// `sigma~^alpha(x) = int sigma(y) |<k_x, k_y>|^2 d nu_alpha(y)`.
pub fn berezin_transform<T: Real>(setting: &FrameSetting<T>, sigma: &Symbol<T>, x: &Point<T>, tol: T) -> Result<T> {
    BerezinEvaluator::new(setting, sigma, tol)?.eval(x)
}

/// `sigma` and `sigma~` sampled on a weighted grid.
#[derive(Debug, Clone)]
pub struct BerezinField<T> {
    pub setting: SettingIndex<T>,
    pub symbol: String,
    pub points: Vec<Point<T>>,
    pub weights: Vec<T>,
    pub sigma: Vec<T>,
    pub values: Vec<T>,
}

pub fn berezin_field<T: Real>(setting: &FrameSetting<T>, sigma: &Symbol<T>, grid: &QuadratureRule<T>, tol: T) -> Result<BerezinField<T>> {
    let ev = BerezinEvaluator::new(setting, sigma, tol)?;
    let values = grid.nodes.par_iter().map(|p| ev.eval(p)).collect::<Result<Vec<T>>>()?;
    Ok(BerezinField {
        setting: setting.index.clone(),
        symbol: sigma.text(),
        points: grid.nodes.clone(),
        weights: grid.weights.clone(),
        sigma: grid.nodes.iter().map(|p| sigma.eval(p)).collect(),
        values,
    })
}

impl<T: Real> BerezinField<T> {
    pub fn max_abs_error(&self) -> T {
        self.sigma
            .iter()
            .zip(&self.values)
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), T::max)
    }

    /// Weighted measure of `{ |sigma~ - sigma| > eps }` on the grid.
    pub fn exceedance(&self, eps: T) -> T {
        compensated_sum(
            self.sigma
                .iter()
                .zip(&self.values)
                .zip(&self.weights)
                .filter(|((a, b), _)| (**a - **b).abs() > eps)
                .map(|(_, w)| *w),
        )
    }

    /// Columns `alpha, x..., sigma, sigma_tilde, abs_err`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let dim = self.points.first().map(|p| p.coords().len()).unwrap_or(0);
        let mut header = vec!["alpha".to_string()];
        header.extend((1..=dim).map(|i| format!("x{i}")));
        header.extend(["sigma", "sigma_tilde", "abs_err"].map(String::from));
        w.write_record(&header).map_err(csv_err)?;
        for ((p, s), v) in self.points.iter().zip(&self.sigma).zip(&self.values) {
            let mut row = vec![num(self.setting.alpha)];
            row.extend(p.coords().into_iter().map(num));
            row.extend([num(*s), num(*v), num((*s - *v).abs())]);
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::config(e.to_string()))
    }
}

/// `2 alpha sinc^2(2 alpha d)` with the normalized sinc.
fn kernel_line<T: Real>(two_a: T, d: T) -> T {
    let u = two_a * d;
    if u == T::zero() {
        return two_a;
    }
    let pu = T::PI() * u;
    let s = pu.sin() / pu;
    two_a * s * s
}

fn num<T: Real>(v: T) -> String {
    format!("{:?}", v.as_f64())
}

fn csv_err(e: csv::Error) -> Error {
    Error::config(format!("cannot write CSV: {e}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LpExponent {
    One,
    Infinity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Contraction<T> {
    pub p: LpExponent,
    /// `||sigma~||_p`.
    pub lhs: T,
    /// `||sigma||_p`.
    pub rhs: T,
}

/// A window that captures the bulk of the catalog's decaying symbols.
pub fn default_window<T: Real>(setting: &FrameSetting<T>) -> T {
    match setting.domain {
        Domain::Disk => T::lit(3.0),
        Domain::Plane => T::lit(4.0),
        Domain::Line => T::lit(8.0),
        _ => T::one(),
    }
}

fn sample_grid<T: Real>(setting: &FrameSetting<T>) -> QuadratureRule<T> {
    let res = match setting.domain {
        Domain::Torus(1) => 512,
        Domain::Torus(2) => 64,
        Domain::Torus(_) => 12,
        Domain::Line => 256,
        _ => 24,
    };
    let mut g = setting.reference_grid(res, default_window(setting));
    g.nodes.push(setting.origin());
    g.weights.push(T::zero());
    g
}

/// `(||sigma~||_p, ||sigma||_p)` for `p` in `{1, inf}`. The sup norm of
/// `sigma~` is taken over a sample grid; the `L^1` norms are integrals.
pub fn contraction_report<T: Real>(setting: &FrameSetting<T>, sigma: &Symbol<T>, p: LpExponent, tol: T) -> Result<Contraction<T>> {
    let ev = BerezinEvaluator::new(setting, sigma, tol)?;
    match p {
        LpExponent::Infinity => {
            let grid = sample_grid(setting);
            let vals = grid.nodes.par_iter().map(|x| ev.eval(x)).collect::<Result<Vec<T>>>()?;
            let lhs = vals.iter().map(|v| v.abs()).fold(T::zero(), T::max);
            Ok(Contraction { p, lhs, rhs: sigma.sup_norm() })
        }
        LpExponent::One => {
            let rhs = setting.integrate_base(&|x| sigma.eval(x).abs(), Part::Whole, tol)?.value;
            let failure: Mutex<Option<Error>> = Mutex::new(None);
            let f = |x: &Point<T>| match ev.eval(x) {
                Ok(v) => v.abs(),
                Err(e) => {
                    failure.lock().expect("error slot").get_or_insert(e);
                    T::zero()
                }
            };
            let lhs = setting.integrate_base(&f, Part::Whole, tol)?.value;
            if let Some(e) = failure.into_inner().expect("error slot") {
                return Err(e);
            }
            Ok(Contraction { p, lhs, rhs })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExceedanceRow<T> {
    pub alpha: T,
    pub epsilon: T,
    pub measure: T,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExceedanceTable<T> {
    pub window: T,
    pub window_mass: T,
    pub rows: Vec<ExceedanceRow<T>>,
    /// Grid adequacy remarks; never fatal.
    pub notes: Vec<String>,
}

pub const DEFAULT_EPSILONS: [f64; 4] = [0.2, 0.1, 0.05, 0.02];

impl<T: Real> ExceedanceTable<T> {
    /// The measures for one `eps`, in the order of the alpha ladder.
    pub fn column(&self, eps: T) -> Vec<T> {
        self.rows.iter().filter(|r| r.epsilon == eps).map(|r| r.measure).collect()
    }

    /// True when every column is non-increasing along the alpha ladder.
    pub fn is_non_increasing(&self, slack: T) -> bool {
        let mut eps: Vec<T> = self.rows.iter().map(|r| r.epsilon).collect();
        eps.dedup();
        eps.iter().all(|&e| self.column(e).windows(2).all(|w| w[1] <= w[0] + slack))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["alpha", "epsilon", "measure"]).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([num(r.alpha), num(r.epsilon), num(r.measure)]).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::config(e.to_string()))
    }
}

/// `nu{ |sigma~^alpha - sigma| > eps }` on the reference window for each
/// `alpha` and `eps`.
pub fn convergence_in_measure<T: Real>(
    setting: &FrameSetting<T>,
    alphas: &[T],
    sigma: &Symbol<T>,
    resolution: usize,
    window: T,
    epsilons: &[T],
    tol: T,
) -> Result<ExceedanceTable<T>> {
    let grid = setting.reference_grid(resolution, window);
    let mass = setting.window_mass(window);
    let mut notes = Vec::new();
    let covered = compensated_sum(grid.weights.iter().copied());
    if (covered - mass).abs() > T::lit(0.01) * mass {
        notes.push(format!(
            "grid weights sum to {:e} against a window mass of {:e}; refine the grid",
            covered.as_f64(),
            mass.as_f64()
        ));
    }
    let heaviest = grid.weights.iter().copied().fold(T::zero(), T::max);
    let mut rows = Vec::new();
    for &a in alphas {
        let s = setting.with_alpha(a)?;
        let field = berezin_field(&s, sigma, &grid, tol)?;
        for &e in epsilons {
            let m = field.exceedance(e);
            if m > T::zero() && m <= heaviest {
                notes.push(format!(
                    "alpha {}: exceedance set at eps {} is a single grid cell",
                    a.as_f64(),
                    e.as_f64()
                ));
            }
            rows.push(ExceedanceRow { alpha: a, epsilon: e, measure: m });
        }
    }
    Ok(ExceedanceTable {
        window,
        window_mass: mass,
        rows,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbols::parse_symbol;

    fn tp(t: f64) -> Point<f64> {
        Point::Torus(vec![t])
    }

    #[test]
    fn torus_fejer_damping() {
        let s = FrameSetting::<f64>::torus(1, 1).unwrap();
        let sym = parse_symbol("2 + cos(theta1)", &Domain::Torus(1)).unwrap();
        for t in [0.0, 0.4, 2.0, -3.0] {
            let v = berezin_transform(&s, &sym, &tp(t), 1e-12).unwrap();
            assert!((v - (2.0 + 2.0 / 3.0 * t.cos())).abs() < 1e-14);
        }
        // Cross-check the exact path against direct kernel quadrature.
        let f = |p: &Point<f64>| sym.eval(p);
        let q = s.integrate_against_kernel(&f, &tp(0.4), Part::Whole, 1e-13).unwrap().value;
        assert!((q - (2.0 + 2.0 / 3.0 * 0.4f64.cos())).abs() < 1e-12);
    }

    #[test]
    fn constants_are_fixed() {
        for s in [
            FrameSetting::<f64>::torus(2, 3).unwrap(),
            FrameSetting::group(&[12], 2).unwrap(),
            FrameSetting::fock(3.0).unwrap(),
            FrameSetting::bergman(2.0).unwrap(),
        ] {
            let one = Symbol::constant(1.0, &s.domain);
            let x = match &s.domain {
                Domain::Torus(_) => Point::Torus(vec![0.3, -1.0]),
                Domain::Group(_) => Point::Group(vec![5]),
                _ => Point::Planar(Complex::new(0.3, 0.2)),
            };
            let v = berezin_transform(&s, &one, &x, 1e-12).unwrap();
            assert!((v - 1.0).abs() < 1e-10, "{} gave {v}", s.family());
        }
    }

    #[test]
    fn fock_gaussian_closed_form() {
        let sym = parse_symbol("exp(-r2)", &Domain::Plane).unwrap();
        for a in [1.0f64, 4.0] {
            let s = FrameSetting::fock(a).unwrap();
            let ev = BerezinEvaluator::new(&s, &sym, 1e-12).unwrap();
            for z in [Complex::new(0.0, 0.0), Complex::new(0.5, -0.2), Complex::new(1.5, 0.0)] {
                let v = ev.eval(&Point::Planar(z)).unwrap();
                let exact = a / (a + 1.0) * (-a * z.norm_sqr() / (a + 1.0)).exp();
                assert!((v - exact).abs() < 1e-10, "alpha {a} z {z}: {v} vs {exact}");
            }
        }
    }

    #[test]
    fn fock_contraction() {
        let sym = parse_symbol::<f64>("exp(-r2)", &Domain::Plane).unwrap();
        let s = FrameSetting::fock(1.0).unwrap();
        let inf = contraction_report(&s, &sym, LpExponent::Infinity, 1e-10).unwrap();
        assert!((inf.lhs - 0.5).abs() < 1e-9 && (inf.rhs - 1.0).abs() < 1e-12);
        let one = contraction_report(&s, &sym, LpExponent::One, 1e-9).unwrap();
        let pi = std::f64::consts::PI;
        assert!((one.lhs - pi).abs() < 1e-6 && (one.rhs - pi).abs() < 1e-8, "{one:?}");
    }

    #[test]
    fn exceedance_tables() {
        let sym = parse_symbol("exp(-r2)", &Domain::Plane).unwrap();
        let s = FrameSetting::fock(1.0).unwrap();
        let eps: Vec<f64> = DEFAULT_EPSILONS.to_vec();
        let t = convergence_in_measure(&s, &[1.0, 2.0, 4.0, 8.0], &sym, 16, 4.0, &eps, 1e-10).unwrap();
        assert!(t.is_non_increasing(0.0));
        let col = t.column(0.05);
        assert!(col[0] > 0.0 && col[3] < col[0]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("alpha,epsilon,measure"));

        let c = Symbol::constant(2.5, &Domain::Torus(1));
        let t = FrameSetting::<f64>::torus(1, 1).unwrap();
        let table = convergence_in_measure(&t, &[1.0, 2.0], &c, 64, 1.0, &eps, 1e-12).unwrap();
        assert!(table.rows.iter().all(|r| r.measure == 0.0));

        // Fejer weight at frequency one is 1 - 1/(2n+1); damping below 0.1
        // clears the threshold.
        let sym = parse_symbol("2 + cos(theta1)", &Domain::Torus(1)).unwrap();
        let table = convergence_in_measure(&t, &[1.0, 2.0, 4.0, 5.0], &sym, 256, 1.0, &[0.1], 1e-12).unwrap();
        let col = table.column(0.1);
        assert!(col[0] > 0.0 && col[1] > 0.0 && col[2] > 0.0);
        assert_eq!(col[3], 0.0);
    }

    #[test]
    fn field_csv_and_bounds() {
        let s = FrameSetting::<f64>::torus(2, 2).unwrap();
        let sym = parse_symbol("3 + cos(theta1) + cos(theta2)", &Domain::Torus(2)).unwrap();
        let grid = s.reference_grid(8, 1.0);
        let f = berezin_field(&s, &sym, &grid, 1e-12).unwrap();
        assert!(f.values.iter().all(|&v| (1.0..=5.0).contains(&v)));
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("alpha,x1,x2,sigma,sigma_tilde,abs_err\n"));
        assert_eq!(text.lines().count(), 65);
    }

    #[test]
    fn line_panels_match_kernel_quadrature() {
        let sym = parse_symbol::<f64>("exp(-x^2)", &Domain::Line).unwrap();
        let s = FrameSetting::paley_wiener(2.0f64).unwrap();
        let ev = BerezinEvaluator::new(&s, &sym, 1e-12).unwrap();
        for x in [0.0, 0.7, -2.5] {
            let a = ev.eval(&Point::Line(x)).unwrap();
            let b = ev.quadrature(&Point::Line(x)).unwrap();
            assert!((a - b).abs() < 1e-10, "{x}: {a} vs {b}");
        }
        // Far from the bump the transform decays like 1 / (4 pi^2 alpha x^2) times the mass.
        let x = 40.0;
        let far = ev.eval(&Point::Line(x)).unwrap();
        let approx = std::f64::consts::PI.sqrt() / (4.0 * std::f64::consts::PI.powi(2) * 2.0 * x * x);
        assert!((far / approx - 1.0).abs() < 0.01, "{far} vs {approx}");
    }

    #[test]
    fn bergman_radial_and_off_center_agree() {
        let sym = parse_symbol("(1 - r2)^2", &Domain::Disk).unwrap();
        let s = FrameSetting::bergman(3.0f64).unwrap();
        let cached = BerezinEvaluator::new(&s, &sym, 1e-11).unwrap();
        let z = Point::Planar(Complex::new(0.3, 0.4));
        let a = cached.eval(&z).unwrap();
        let b = cached.quadrature(&z).unwrap();
        assert!((a - b).abs() < 1e-10);
        // At the origin: E[(1 - t)^2] under Beta(1, alpha + 1) = (a+1)/(a+3).
        let o = cached.eval(&s.origin()).unwrap();
        assert!((o - 4.0 / 6.0).abs() < 1e-11);
    }
}
