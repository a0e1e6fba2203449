//! The limit harness: normalized traces along an `alpha` ladder compared with
//! their phase-space integrals, plus the Berezin-Lieb sandwich, moment
//! tables and rate fits.

use std::io::Write;
use std::sync::Mutex;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::berezin::BerezinEvaluator;
use crate::error::{Error, Result};
use crate::linalg::least_squares;
use crate::operators::{assemble, AssemblyOptions, TruncatedOperator};
use crate::scalar::Real;
use crate::settings::{Family, FrameSetting, Integral, Part, Point};
use crate::spectral::{
    eigen_decompose, trace_bounds_check, trace_psi, trace_symbol_weighted, weighted_trace, Spectrum, TraceBoundsReport, TraceValue,
};
use crate::symbols::{PsiFunction, PsiKind, Symbol};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// `tr psi(T_sigma) / c(alpha)`.
    #[serde(rename = "plain")]
    PlainTrace,
    /// `tr(T_sigma psi(T_sigma)) / c(alpha)`.
    SymbolWeighted,
    /// `tr(T_eta psi(T_sigma)) / c(alpha)`.
    PairWeighted,
}

impl Variant {
    pub fn parse(text: &str) -> Result<Self> {
        match text.trim() {
            "plain" | "plain-trace" => Ok(Variant::PlainTrace),
            "symbol-weighted" => Ok(Variant::SymbolWeighted),
            "pair-weighted" => Ok(Variant::PairWeighted),
            other => Err(Error::config(format!(
                "unknown variant '{other}' (expected plain, symbol-weighted or pair-weighted)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::PlainTrace => "plain",
            Variant::SymbolWeighted => "symbol-weighted",
            Variant::PairWeighted => "pair-weighted",
        }
    }
}

/// Default ladders: box radii for torus and groups, `alpha` otherwise.
pub fn default_ladder(family: &Family) -> Vec<f64> {
    match family {
        Family::Torus { .. } | Family::Group { .. } => vec![8.0, 16.0, 32.0, 64.0],
        Family::Bergman | Family::Fock => vec![4.0, 16.0, 64.0, 256.0],
        Family::PaleyWiener => vec![2.0, 4.0, 8.0, 16.0],
    }
}

/// Runs `f` with a slot that records the first error raised inside a
/// quadrature callback, since callbacks return plain numbers.
fn guarded<T: Real>(run: impl FnOnce(&(dyn Fn(Result<T>) -> T + Sync)) -> Result<Integral<T>>) -> Result<Integral<T>> {
    let slot: Mutex<Option<Error>> = Mutex::new(None);
    let catch = |r: Result<T>| match r {
        Ok(v) => v,
        Err(e) => {
            slot.lock().expect("error slot").get_or_insert(e);
            T::zero()
        }
    };
    let out = run(&catch);
    if let Some(e) = slot.into_inner().expect("error slot") {
        return Err(e);
    }
    out
}

/// `int psi(sigma) d nu`, `int sigma psi(sigma) d nu` or
/// `int psi(sigma) eta d nu`, by quadrature.
pub fn target_integral<T: Real>(
    setting: &FrameSetting<T>,
    sigma: &Symbol<T>,
    psi: &PsiFunction,
    variant: Variant,
    eta: Option<&Symbol<T>>,
    tol: T,
) -> Result<Integral<T>> {
    if variant == Variant::PairWeighted && eta.is_none() {
        return Err(Error::config("the pair-weighted variant needs an eta symbol"));
    }
    guarded(|catch| {
        let f = |x: &Point<T>| {
            let s = sigma.eval(x);
            let p = catch(psi.eval_checked(s));
            match variant {
                Variant::PlainTrace => p,
                Variant::SymbolWeighted => s * p,
                Variant::PairWeighted => p * eta.map(|e| e.eval(x)).unwrap_or(T::one()),
            }
        };
        setting.integrate_base(&f, Part::Whole, tol)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convexity {
    Convex,
    Concave,
    Neither,
}

/// The three members of the Berezin-Lieb sandwich.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BerezinLiebRecord<T> {
    /// `int psi(sigma~) eta d nu`.
    pub lower: T,
    /// `tr(T_eta psi(T_sigma)) / c(alpha)`.
    pub middle: T,
    /// `int psi(sigma) eta~ d nu`.
    pub upper: T,
    pub convexity: Convexity,
    /// Quadrature error of the two integrals plus the middle's tail uncertainty.
    pub uncertainty: T,
}

impl<T: Real> BerezinLiebRecord<T> {
    /// Ordering in the direction implied by `convexity`, with `slack`
    /// added to the stated tolerance. `None` when `psi` is neither.
    pub fn holds(&self, slack: T) -> Option<bool> {
        let tol = slack + self.uncertainty;
        match self.convexity {
            Convexity::Convex => Some(self.lower <= self.middle + tol && self.middle <= self.upper + tol),
            Convexity::Concave => Some(self.lower + tol >= self.middle && self.middle + tol >= self.upper),
            Convexity::Neither => None,
        }
    }

    /// The smaller of the two gaps, signed so that negative means violated.
    pub fn slack(&self) -> T {
        match self.convexity {
            Convexity::Concave => (self.lower - self.middle).min(self.middle - self.upper),
            _ => (self.middle - self.lower).min(self.upper - self.middle),
        }
    }
}

fn convexity_of<T: Real>(psi: &PsiFunction, lo: T, hi: T) -> Convexity {
    if psi.is_convex_on(lo, hi) {
        Convexity::Convex
    } else if psi.is_concave_on(lo, hi) {
        Convexity::Concave
    } else {
        Convexity::Neither
    }
}

/// Everything needed to evaluate traces at one `alpha`.
struct Decomposed<T> {
    spectrum: Spectrum<T>,
    eta_op: Option<TruncatedOperator<T>>,
}

fn decompose<T: Real>(
    setting: &FrameSetting<T>,
    sigma: &Symbol<T>,
    eta: Option<&Symbol<T>>,
    opts: &AssemblyOptions<T>,
) -> Result<Decomposed<T>> {
    let op = assemble(setting, sigma, opts)?;
    let eta_op = match eta {
        Some(e) => {
            let same = AssemblyOptions {
                n_cut: match setting.family() {
                    Family::Bergman | Family::Fock => opts.n_cut.or(Some(op.size())),
                    _ => opts.n_cut,
                },
                half_width: opts.half_width.or(match &op.basis.kind {
                    crate::operators::BasisKind::ShiftedSinc { half_width } => Some(*half_width),
                    _ => None,
                }),
                force_dense: opts.force_dense || !op.matrix.is_diagonal(),
                ..opts.clone()
            };
            Some(assemble(setting, e, &same)?)
        }
        None => None,
    };
    let vectors = eta_op.is_some() && !op.matrix.is_diagonal();
    let spectrum = eigen_decompose(&op, vectors)?.clipped(sigma.ess_inf, sigma.ess_sup);
    Ok(Decomposed { spectrum, eta_op })
}

fn middle_trace<T: Real>(d: &Decomposed<T>, psi: &PsiFunction, variant: Variant) -> Result<TraceValue<T>> {
    match variant {
        Variant::PlainTrace => trace_psi(&d.spectrum, psi),
        Variant::SymbolWeighted => trace_symbol_weighted(&d.spectrum, psi),
        Variant::PairWeighted => {
            let eta = d.eta_op.as_ref().ok_or_else(|| Error::config("the pair-weighted variant needs an eta symbol"))?;
            weighted_trace(&d.spectrum, eta, psi)
        }
    }
}

/// The weight paired against `psi(sigma)`: none for plain traces, `sigma`
/// for the symbol-weighted variant, `eta` otherwise.
fn weight_symbol<'a, T: Real>(variant: Variant, sigma: &'a Symbol<T>, eta: Option<&'a Symbol<T>>) -> Option<&'a Symbol<T>> {
    match variant {
        Variant::PlainTrace => None,
        Variant::SymbolWeighted => Some(sigma),
        Variant::PairWeighted => eta,
    }
}

/// Lower and upper sandwich integrals for a given middle value.
fn sandwich<T: Real>(
    setting: &FrameSetting<T>,
    sigma: &Symbol<T>,
    weight: Option<&Symbol<T>>,
    psi: &PsiFunction,
    middle: TraceValue<T>,
    tol: T,
) -> Result<BerezinLiebRecord<T>> {
    if let Some(w) = weight {
        if !w.is_nonnegative() {
            return Err(Error::domain("the sandwich needs a non-negative weight symbol"));
        }
    }
    let sig_t = BerezinEvaluator::new(setting, sigma, tol)?;
    let w_t = match weight {
        Some(w) => Some(BerezinEvaluator::new(setting, w, tol)?),
        None => None,
    };
    let lower = guarded(|catch| {
        let f = |x: &Point<T>| {
            let s = catch(sig_t.eval(x)).max(sigma.ess_inf).min(sigma.ess_sup);
            catch(psi.eval_checked(s)) * weight.map(|w| w.eval(x)).unwrap_or(T::one())
        };
        setting.integrate_base(&f, Part::Whole, tol)
    })?;
    let upper = guarded(|catch| {
        let f = |x: &Point<T>| {
            let p = catch(psi.eval_checked(sigma.eval(x)));
            p * w_t.as_ref().map(|w| catch(w.eval(x))).unwrap_or(T::one())
        };
        setting.integrate_base(&f, Part::Whole, tol)
    })?;
    let c = setting.scaling_constant();
    Ok(BerezinLiebRecord {
        lower: lower.value,
        middle: middle.value / c,
        upper: upper.value,
        convexity: convexity_of(psi, sigma.ess_inf, sigma.ess_sup),
        uncertainty: lower.error + upper.error + middle.tail_uncertainty / c,
    })
}

/// The sandwich at one `alpha`. Without `eta` the weight is `1`.
pub fn berezin_lieb_check<T: Real>(
    setting: &FrameSetting<T>,
    sigma: &Symbol<T>,
    eta: Option<&Symbol<T>>,
    psi: &PsiFunction,
    opts: &AssemblyOptions<T>,
) -> Result<BerezinLiebRecord<T>> {
    let d = decompose(setting, sigma, eta, opts)?;
    if let (Some(e), Some(op)) = (eta, &d.eta_op) {
        let simultaneous = matches!(setting.family(), Family::Bergman | Family::Fock)
            && d.spectrum.basis_index.is_some()
            && op.matrix.is_diagonal();
        if !simultaneous && !e.is_constant() {
            return Err(Error::Unsupported(
                "the sandwich with a weight needs a simultaneously diagonal pair (radial symbols on the disk or plane)".into(),
            ));
        }
    }
    let variant = if eta.is_some() { Variant::PairWeighted } else { Variant::PlainTrace };
    let middle = middle_trace(&d, psi, variant)?;
    sandwich(setting, sigma, eta, psi, middle, opts.tol_quad.max(T::lit(1e-10)))
}

#[derive(Debug, Clone, Serialize)]
pub struct LiebTriple {
    pub lower: f64,
    pub middle: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub alpha: f64,
    pub value: Option<f64>,
    pub error: Option<f64>,
    /// Normalized contribution of the extrapolated truncation tail.
    pub tail: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_uncertainty: Option<f64>,
    pub size: usize,
    pub lieb: Option<LiebTriple>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lieb_holds: Option<bool>,
    pub bounds_hold: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RateFit {
    #[serde(rename = "C")]
    pub c: f64,
    pub p: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitReport {
    pub setting: String,
    pub symbol: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<String>,
    pub psi: String,
    pub variant: Variant,
    pub points: Vec<SweepPoint>,
    pub target: f64,
    pub target_error: f64,
    pub rate: Option<RateFit>,
    /// Which hypothesis sets the inputs satisfy; advisory.
    pub hypotheses: Vec<String>,
    pub warnings: Vec<String>,
}

/// What to sweep.
#[derive(Debug, Clone)]
pub struct SweepSpec<T> {
    pub family: Family,
    pub alphas: Vec<T>,
    pub sigma: Symbol<T>,
    pub eta: Option<Symbol<T>>,
    pub psi: PsiFunction,
    pub variant: Variant,
    pub assembly: AssemblyOptions<T>,
    /// Absolute slack allowed in the sandwich on top of quadrature errors.
    pub tol_sandwich: T,
    /// Compute the sandwich at every point.
    pub lieb: bool,
}

impl<T: Real> SweepSpec<T> {
    pub fn new(family: Family, alphas: Vec<T>, sigma: Symbol<T>, psi: PsiFunction, variant: Variant) -> Self {
        let lieb = family.is_discrete_index();
        Self {
            family,
            alphas,
            sigma,
            eta: None,
            psi,
            variant,
            assembly: AssemblyOptions::default(),
            tol_sandwich: T::lit(1e-8),
            lieb,
        }
    }
}

fn hypotheses<T: Real>(spec: &SweepSpec<T>, setting: &FrameSetting<T>, warnings: &mut Vec<String>) -> Vec<String> {
    let s = &spec.sigma;
    let (lo, hi) = (s.ess_inf, s.ess_sup);
    let mut tags = Vec::new();
    if s.is_nonnegative() && s.is_bounded() {
        tags.push("bounded-nonnegative-symbol".to_string());
    }
    if s.integrability.l1 == Some(true) {
        tags.push("integrable-symbol".to_string());
    }
    match convexity_of(&spec.psi, lo, hi) {
        Convexity::Convex => tags.push("convex-psi".into()),
        Convexity::Concave => tags.push("concave-psi".into()),
        Convexity::Neither => warnings.push(format!(
            "{} is neither convex nor concave on [{}, {}]; the sandwich direction is not determined",
            spec.psi.name(),
            lo.as_f64(),
            hi.as_f64()
        )),
    }
    if spec.psi.is_nonnegative_on(lo, hi) {
        tags.push("nonnegative-psi".into());
    }
    if spec.psi.eval(0.0) == 0.0 {
        tags.push("psi-vanishes-at-zero".into());
    }
    if matches!(spec.psi.kind, PsiKind::Identity | PsiKind::LogShifted(_)) {
        tags.push("linear-or-sublinear-growth-psi".into());
    }
    let finite = setting.family().is_discrete_index();
    if finite {
        tags.push("probability-space-dimension-scaling".into());
    }
    if let PsiKind::LogShifted(_) = spec.psi.kind {
        if !finite {
            warnings.push("log traces are normalized by the dimension only on the torus and finite groups".into());
        }
    }
    if !s.is_nonnegative() {
        warnings.push("the symbol takes negative values; the limit statements assume a non-negative symbol".into());
    }
    if spec.variant == Variant::PairWeighted {
        match &spec.eta {
            Some(e) if e.is_radial() && s.is_radial() && matches!(setting.family(), Family::Bergman | Family::Fock) => {
                tags.push("simultaneously-diagonal-pair".into())
            }
            Some(e) if e.is_constant() => {}
            Some(_) => warnings.push("sigma and eta are not known to share an eigenbasis".into()),
            None => {}
        }
    }
    tags
}

fn run_point<T: Real>(spec: &SweepSpec<T>, base: &FrameSetting<T>, alpha: T, target: T) -> SweepPoint {
    let mut point = SweepPoint {
        alpha: alpha.as_f64(),
        value: None,
        error: None,
        tail: None,
        tail_uncertainty: None,
        size: 0,
        lieb: None,
        lieb_holds: None,
        bounds_hold: None,
        failure: None,
    };
    let outcome = (|| -> Result<()> {
        let setting = base.with_alpha(alpha)?;
        let c = setting.scaling_constant();
        let d = decompose(&setting, &spec.sigma, spec.eta.as_ref(), &spec.assembly)?;
        point.size = d.spectrum.len();
        point.bounds_hold = Some(bounds_for(&d.spectrum, &spec.psi).holds);
        let middle = middle_trace(&d, &spec.psi, spec.variant)?;
        let value = middle.value / c;
        point.value = Some(value.as_f64());
        point.error = Some((value - target).abs().as_f64());
        point.tail = middle.tail.map(|t| (t / c).as_f64());
        point.tail_uncertainty = middle.tail.map(|_| (middle.tail_uncertainty / c).as_f64());
        if spec.lieb {
            let weight = weight_symbol(spec.variant, &spec.sigma, spec.eta.as_ref());
            let tol = spec.assembly.tol_quad.max(T::lit(1e-10));
            let rec = sandwich(&setting, &spec.sigma, weight, &spec.psi, middle, tol)?;
            point.lieb = Some(LiebTriple {
                lower: rec.lower.as_f64(),
                middle: rec.middle.as_f64(),
                upper: rec.upper.as_f64(),
            });
            point.lieb_holds = rec.holds(spec.tol_sandwich);
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        point.failure = Some(e.to_string());
    }
    point
}

fn bounds_for<T: Real>(spec: &Spectrum<T>, psi: &PsiFunction) -> TraceBoundsReport<T> {
    trace_bounds_check(spec, psi)
}

/// Runs every point of the ladder (in parallel) and collects a report in
/// ladder order. Per-point failures are recorded rather than propagated.
pub fn run_limit_sweep<T: Real>(spec: &SweepSpec<T>) -> Result<LimitReport> {
    if spec.alphas.is_empty() {
        return Err(Error::config("the alpha ladder is empty"));
    }
    if spec.alphas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::config("the alpha ladder must be strictly increasing"));
    }
    if spec.variant == Variant::PairWeighted && spec.eta.is_none() {
        return Err(Error::config("the pair-weighted variant needs an eta symbol"));
    }
    let base = FrameSetting::new(spec.family.clone(), spec.alphas[0])?;
    let mut warnings = Vec::new();
    let hyps = hypotheses(spec, &base, &mut warnings);
    let target = target_integral(&base, &spec.sigma, &spec.psi, spec.variant, spec.eta.as_ref(), spec.assembly.tol_quad.max(T::lit(1e-12)))?;
    let points: Vec<SweepPoint> = spec.alphas.par_iter().map(|&a| run_point(spec, &base, a, target.value)).collect();
    let mut report = LimitReport {
        setting: base.family().to_string(),
        symbol: spec.sigma.text(),
        eta: spec.eta.as_ref().map(|e| e.text()),
        psi: spec.psi.name(),
        variant: spec.variant,
        points,
        target: target.value.as_f64(),
        target_error: target.error.as_f64(),
        rate: None,
        hypotheses: hyps,
        warnings,
    };
    match rate_fit(&report) {
        Ok(r) => report.rate = Some(r),
        Err(note) => report.warnings.push(note),
    }
    Ok(report)
}

/// Least-squares fit of `log error = log C - p log alpha`. Needs three
/// points with nonzero finite errors.
pub fn rate_fit(report: &LimitReport) -> std::result::Result<RateFit, String> {
    let pts: Vec<(f64, f64)> = report
        .points
        .iter()
        .filter_map(|p| match p.error {
            Some(e) if e > 0.0 && e.is_finite() && p.alpha > 0.0 => Some((p.alpha.ln(), e.ln())),
            _ => None,
        })
        .collect();
    if pts.len() < 3 {
        return Err(format!("rate fit skipped: {} points with nonzero error (need 3)", pts.len()));
    }
    let a = Array2::from_shape_fn((pts.len(), 2), |(i, j)| if j == 0 { 1.0 } else { pts[i].0 });
    let b: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let x = least_squares(&a, &b).map_err(|e| format!("rate fit failed: {e}"))?;
    let rss: f64 = pts.iter().map(|(l, e)| (e - x[0] - x[1] * l).powi(2)).sum();
    Ok(RateFit {
        c: x[0].exp(),
        p: -x[1],
        residual: (rss / pts.len() as f64).sqrt(),
    })
}

impl LimitReport {
    pub fn errors(&self) -> Vec<Option<f64>> {
        self.points.iter().map(|p| p.error).collect()
    }

    pub fn errors_strictly_decreasing(&self) -> bool {
        let e = self.errors();
        e.iter().all(Option::is_some) && e.windows(2).all(|w| w[1].unwrap() < w[0].unwrap())
    }

    /// Assertions that gate the exit status: per-point success, trace
    /// bounds, and the sandwich where it was computed.
    pub fn failed_assertions(&self) -> Vec<String> {
        let mut out = Vec::new();
        for p in &self.points {
            if let Some(f) = &p.failure {
                out.push(format!("alpha {}: {f}", p.alpha));
            }
            if p.bounds_hold == Some(false) {
                out.push(format!("alpha {}: elementary trace bounds violated", p.alpha));
            }
            if p.lieb_holds == Some(false) {
                out.push(format!("alpha {}: Berezin-Lieb sandwich violated", p.alpha));
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// One row per alpha.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::config(format!("cannot write CSV: {e}"));
        w.write_record(["alpha", "value", "error", "tail", "lieb_lower", "lieb_middle", "lieb_upper", "target"])
            .map_err(io)?;
        let f = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        for p in &self.points {
            let l = p.lieb.as_ref();
            w.write_record([
                format!("{:?}", p.alpha),
                f(p.value),
                f(p.error),
                f(p.tail),
                f(l.map(|l| l.lower)),
                f(l.map(|l| l.middle)),
                f(l.map(|l| l.upper)),
                format!("{:?}", self.target),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::config(e.to_string()))
    }

    /// Two-column curves `(alpha, value)` and `(alpha, error)`.
    pub fn plot_curves(&self) -> Vec<(&'static str, String)> {
        let curve = |get: &dyn Fn(&SweepPoint) -> Option<f64>| {
            let mut s = String::new();
            for p in &self.points {
                if let Some(v) = get(p) {
                    s.push_str(&format!("{:?} {:?}\n", p.alpha, v));
                }
            }
            s
        };
        vec![("value", curve(&|p| p.value)), ("error", curve(&|p| p.error))]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentRow {
    pub alpha: f64,
    pub k: usize,
    pub moment: f64,
    pub bound: f64,
}

/// `m_k(alpha) = tr(T^{k+1}) / c(alpha)` for `k = 0..=k_max`, each checked
/// against `||sigma||_inf^k ||sigma||_1`.
pub fn moment_table<T: Real>(
    family: &Family,
    sigma: &Symbol<T>,
    alphas: &[T],
    k_max: usize,
    opts: &AssemblyOptions<T>,
) -> Result<(Vec<MomentRow>, Vec<String>)> {
    if !sigma.is_nonnegative() {
        return Err(Error::domain("moments are defined here for non-negative symbols"));
    }
    let first = *alphas.first().ok_or_else(|| Error::config("the alpha ladder is empty"))?;
    let base = FrameSetting::new(family.clone(), first)?;
    let l1 = sigma.norms(&base, opts.tol_quad.max(T::lit(1e-10)))?.l1_nu;
    let sup = sigma.sup_norm();
    let per_alpha: Vec<Result<Vec<MomentRow>>> = alphas
        .par_iter()
        .map(|&a| {
            let s = base.with_alpha(a)?;
            let op = assemble(&s, sigma, opts)?;
            let spec = eigen_decompose(&op, false)?.clipped(sigma.ess_inf, sigma.ess_sup);
            (0..=k_max)
                .map(|k| {
                    let psi = PsiFunction::new(PsiKind::Power((k + 1) as f64));
                    let t = trace_psi(&spec, &psi)?;
                    Ok(MomentRow {
                        alpha: a.as_f64(),
                        k,
                        moment: (t.value / s.scaling_constant()).as_f64(),
                        bound: (sup.powi(k as i32) * l1).as_f64(),
                    })
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    for r in per_alpha {
        for row in r? {
            if row.moment > row.bound * (1.0 + 1e-9) + 1e-12 {
                violations.push(format!("alpha {} k {}: moment {} exceeds {}", row.alpha, row.k, row.moment, row.bound));
            }
            rows.push(row);
        }
    }
    Ok((rows, violations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::settings::Domain;
    use crate::symbols::parse_symbol;

    fn psi(t: &str) -> PsiFunction {
        PsiFunction::parse(t, 0.0).unwrap()
    }

    #[test]
    fn targets_by_quadrature() {
        let b = FrameSetting::bergman(4.0f64).unwrap();
        let s = parse_symbol("(1 - r2)^2", &Domain::Disk).unwrap();
        let t = target_integral(&b, &s, &psi("id"), Variant::SymbolWeighted, None, 1e-12).unwrap();
        assert!((t.value - 1.0 / 3.0).abs() < 1e-10);
        let f = FrameSetting::fock(4.0f64).unwrap();
        let s = parse_symbol("exp(-r2)", &Domain::Plane).unwrap();
        let t = target_integral(&f, &s, &psi("id"), Variant::SymbolWeighted, None, 1e-12).unwrap();
        assert!((t.value - std::f64::consts::FRAC_PI_2).abs() < 1e-10);
        let tor = FrameSetting::<f64>::torus(1, 4).unwrap();
        let s = parse_symbol("2 + cos(theta1)", &Domain::Torus(1)).unwrap();
        let t = target_integral(&tor, &s, &psi("log"), Variant::PlainTrace, None, 1e-13).unwrap();
        assert!((t.value - ((2.0 + 3f64.sqrt()) / 2.0).ln()).abs() < 1e-12);
        assert!(matches!(
            target_integral(&tor, &s, &psi("log"), Variant::PairWeighted, None, 1e-13),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn fock_exact_family_and_rate() {
        let s = parse_symbol("exp(-r2)", &Domain::Plane).unwrap();
        let spec = SweepSpec::new(Family::Fock, vec![4.0, 16.0, 64.0, 256.0], s, psi("id"), Variant::SymbolWeighted);
        let r = run_limit_sweep(&spec).unwrap();
        let pi = std::f64::consts::PI;
        for p in &r.points {
            let a = p.alpha;
            assert!((p.value.unwrap() - pi * a / (2.0 * a + 1.0)).abs() < 1e-8, "{p:?}");
            assert_eq!(p.bounds_hold, Some(true));
        }
        assert!(r.errors_strictly_decreasing());
        let rate = r.rate.unwrap();
        assert!((rate.p - 1.0).abs() < 0.05, "{rate:?}");
        assert!(r.failed_assertions().is_empty());
    }

    #[test]
    fn constant_symbol_is_exact_and_rate_skipped() {
        let s = Symbol::constant(1.5, &Domain::Torus(1));
        let spec = SweepSpec::new(Family::Torus { dim: 1 }, vec![2.0, 4.0, 8.0], s, psi("exp"), Variant::PlainTrace);
        let r = run_limit_sweep(&spec).unwrap();
        for p in &r.points {
            assert!(p.error.unwrap() < 1e-13);
            let l = p.lieb.as_ref().unwrap();
            assert!((l.lower - l.middle).abs() < 1e-12 && (l.upper - l.middle).abs() < 1e-12);
        }
        assert!(r.rate.is_none() || r.points.iter().filter(|p| p.error.unwrap() > 0.0).count() >= 3);
    }

    #[test]
    fn torus_sandwich_and_frobenius() {
        let t = FrameSetting::<f64>::torus(1, 1).unwrap();
        let s = parse_symbol("2 + cos(theta1)", &Domain::Torus(1)).unwrap();
        let rec = berezin_lieb_check(&t, &s, None, &psi("x^2"), &AssemblyOptions::default()).unwrap();
        assert!((rec.middle - 13.0 / 3.0).abs() < 1e-12);
        assert!((rec.upper - 4.5).abs() < 1e-12);
        // sigma~ = 2 + (2/3) cos, so the lower member is 4 + 2/9.
        assert!((rec.lower - (4.0 + 2.0 / 9.0)).abs() < 1e-12);
        assert_eq!(rec.holds(1e-8), Some(true));
        let lg = PsiFunction::parse("log", 0.5).unwrap();
        let rec = berezin_lieb_check(&t, &s, None, &lg, &AssemblyOptions::default()).unwrap();
        assert_eq!(rec.convexity, Convexity::Concave);
        assert_eq!(rec.holds(1e-8), Some(true));
        assert!(rec.lower > rec.middle && rec.middle > rec.upper);
    }

    #[test]
    fn bergman_radial_pair_sandwich() {
        let b = FrameSetting::bergman(6.0f64).unwrap();
        let s = parse_symbol("(1 - r2)^2", &Domain::Disk).unwrap();
        let e = parse_symbol("(1 - r2)^3", &Domain::Disk).unwrap();
        let rec = berezin_lieb_check(&b, &s, Some(&e), &psi("x^2"), &AssemblyOptions::default()).unwrap();
        assert_eq!(rec.holds(1e-8), Some(true), "{rec:?}");
        assert!(rec.lower < rec.middle && rec.middle < rec.upper);
    }

    #[test]
    fn group_full_dual_is_exact() {
        let g = FrameSetting::<f64>::group(&[12], 6).unwrap();
        let s = parse_symbol::<f64>("2 + cos(pi * x1 / 6) + 0.3 * sin(pi * x1 / 2)", &Domain::Group(vec![12])).unwrap();
        let spec = SweepSpec::new(g.family().clone(), vec![6.0], s.clone(), psi("log"), Variant::PlainTrace);
        let r = run_limit_sweep(&spec).unwrap();
        let direct: f64 = (0..12).map(|x| s.eval(&Point::Group(vec![x])).ln()).sum::<f64>() / 12.0;
        assert!((r.points[0].value.unwrap() - direct).abs() < 1e-12);
        assert!(r.points[0].error.unwrap() < 1e-12);
    }

    #[test]
    fn ladder_validation_and_json() {
        let s = parse_symbol("2 + cos(theta1)", &Domain::Torus(1)).unwrap();
        let mut spec = SweepSpec::new(Family::Torus { dim: 1 }, vec![], s, psi("log"), Variant::PlainTrace);
        assert!(matches!(run_limit_sweep(&spec), Err(Error::Config(_))));
        spec.alphas = vec![4.0, 2.0];
        assert!(matches!(run_limit_sweep(&spec), Err(Error::Config(_))));
        spec.alphas = vec![2.0, 4.0, 8.0];
        let a = run_limit_sweep(&spec).unwrap().to_json();
        let b = run_limit_sweep(&spec).unwrap().to_json();
        assert_eq!(a, b);
        let v: serde_json::Value = serde_json::from_str(&a).unwrap();
        for key in ["setting", "symbol", "psi", "variant", "points", "target", "rate"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let p = &v["points"][0];
        for key in ["alpha", "value", "error", "tail", "lieb"] {
            assert!(p.get(key).is_some(), "{key}");
        }
        assert!(v["rate"].get("C").is_some());
        assert!(v["rate"]["p"].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn moments() {
        let s = parse_symbol("exp(-r2)", &Domain::Plane).unwrap();
        let (rows, bad) = moment_table(&Family::Fock, &s, &[2.0, 8.0], 3, &AssemblyOptions::default()).unwrap();
        assert!(bad.is_empty());
        let pi = std::f64::consts::PI;
        for r in rows.iter().filter(|r| r.k == 1) {
            assert!((r.moment - pi * r.alpha / (2.0 * r.alpha + 1.0)).abs() < 1e-8);
        }
        let b = parse_symbol("(1 - r2)^2", &Domain::Disk).unwrap();
        let (rows, _) = moment_table(&Family::Bergman, &b, &[4.0, 64.0], 0, &AssemblyOptions::default()).unwrap();
        for r in &rows {
            assert!((r.moment - 1.0).abs() < 1e-6, "{r:?}");
        }
        let z = Symbol::constant(0.0, &Domain::Torus(1));
        let (rows, _) = moment_table(&Family::Torus { dim: 1 }, &z, &[2.0], 2, &AssemblyOptions::default()).unwrap();
        assert!(rows.iter().all(|r| r.moment == 0.0));
    }

    #[test]
    fn scaling_covariance() {
        let s = parse_symbol("(1 - r2)^2", &Domain::Disk).unwrap();
        let o = AssemblyOptions { n_cut: Some(128), ..AssemblyOptions::default() };
        let b = FrameSetting::bergman(3.0f64).unwrap();
        let a = eigen_decompose(&assemble(&b, &s, &o).unwrap(), false).unwrap();
        let c = eigen_decompose(&assemble(&b, &s.scaled(2.0).unwrap(), &o).unwrap(), false).unwrap();
        for (x, y) in a.eigenvalues.iter().zip(&c.eigenvalues) {
            assert!((2.0 * x - y).abs() <= 1e-14 * y.abs());
        }
        let t = FrameSetting::<f64>::torus(1, 5).unwrap();
        let s = parse_symbol("2 + cos(theta1)", &Domain::Torus(1)).unwrap();
        let a = eigen_decompose(&assemble(&t, &s, &o).unwrap(), false).unwrap();
        let c = eigen_decompose(&assemble(&t, &s.scaled(3.0).unwrap(), &o).unwrap(), false).unwrap();
        for (x, y) in a.eigenvalues.iter().zip(&c.eigenvalues) {
            assert!((3.0 * x - y).abs() < 1e-10);
        }
    }
}
