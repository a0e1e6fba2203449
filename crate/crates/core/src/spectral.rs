//! Eigendecomposition of truncated operators, functional calculus traces and
//! the elementary trace bounds.

use std::io::Write;

use ndarray::Array2;
use num_complex::Complex;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, orthogonality_defect, symmetric_eigen};
use crate::operators::{BasisDescriptor, OperatorMatrix, TruncatedOperator};
use crate::quadrature::TailExtrapolation;
use crate::scalar::{compensated_sum, Real};
use crate::symbols::{PsiFunction, PsiKind};

#[derive(Debug, Clone)]
pub enum Eigenbasis<T> {
    /// Eigenvectors are basis vectors; see [`Spectrum::basis_index`].
    Standard,
    Real(Array2<T>),
    Complex(Array2<Complex<T>>),
}

#[derive(Debug, Clone)]
pub struct Spectrum<T> {
    /// Ascending, repeated according to multiplicity.
    pub eigenvalues: Vec<T>,
    /// Eigenvectors as columns, in eigenvalue order.
    pub vectors: Option<Eigenbasis<T>>,
    /// For diagonal operators, the basis index of each eigenvalue.
    pub basis_index: Option<Vec<usize>>,
    pub basis: BasisDescriptor<T>,
    /// Decay model of the diagonal beyond the truncation (diagonal operators).
    pub tail_model: Option<TailExtrapolation<T>>,
    /// Trace tail of the source operator and its uncertainty.
    pub trace_tail: Option<(T, T)>,
}

/// A trace functional: the finite sum plus the extrapolated remainder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceValue<T> {
    pub value: T,
    pub head: T,
    pub tail: Option<T>,
    pub tail_uncertainty: T,
}

impl<T: Real> TraceValue<T> {
    fn finite(head: T) -> Self {
        Self {
            value: head,
            head,
            tail: None,
            tail_uncertainty: T::zero(),
        }
    }

    fn with_tail(head: T, tail: Option<(T, T)>) -> Self {
        match tail {
            Some((t, u)) => Self {
                value: head + t,
                head,
                tail: Some(t),
                tail_uncertainty: u,
            },
            None => Self::finite(head),
        }
    }
}

fn ascending<T: Real>(d: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..d.len()).collect();
    idx.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).expect("finite eigenvalues").then(a.cmp(&b)));
    idx
}

/// Full spectrum of `op`; diagonal operators bypass the solver.
pub fn eigen_decompose<T: Real>(op: &TruncatedOperator<T>, with_vectors: bool) -> Result<Spectrum<T>> {
    let trace_tail = op.tail_estimate.map(|t| (t, op.tail_uncertainty));
    let diag_err = |e: Error, a: &dyn Fn() -> (T, T)| match e {
        Error::Solver(msg) => {
            let (lo, hi) = a();
            Error::Solver(format!("{msg}; diagonal range [{lo:e}, {hi:e}], size {}", op.size()))
        }
        other => other,
    };
    let range = || {
        let d = op.matrix.diagonal();
        (
            d.iter().copied().fold(T::infinity(), T::min),
            d.iter().copied().fold(T::neg_infinity(), T::max),
        )
    };
    let (eigenvalues, vectors, basis_index) = match &op.matrix {
        OperatorMatrix::Diagonal(d) => {
            if let Some(v) = d.iter().find(|v| !v.is_finite()) {
                return Err(Error::Solver(format!("non-finite diagonal entry {v}")));
            }
            let order = ascending(d);
            let vals = order.iter().map(|&i| d[i]).collect();
            (vals, with_vectors.then_some(Eigenbasis::Standard), Some(order))
        }
        OperatorMatrix::Real(a) => {
            let (vals, vecs) = symmetric_eigen(a, with_vectors).map_err(|e| diag_err(e, &range))?;
            (vals, vecs.map(Eigenbasis::Real), None)
        }
        OperatorMatrix::Complex(a) => {
            let (vals, vecs) = hermitian_eigen(a, with_vectors).map_err(|e| diag_err(e, &range))?;
            (vals, vecs.map(Eigenbasis::Complex), None)
        }
    };
    Ok(Spectrum {
        eigenvalues,
        vectors,
        basis_index,
        basis: op.basis.clone(),
        tail_model: op.tail_model.clone(),
        trace_tail,
    })
}

impl<T: Real> Spectrum<T> {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn min(&self) -> T {
        self.eigenvalues.first().copied().unwrap_or(T::zero())
    }

    pub fn max(&self) -> T {
        self.eigenvalues.last().copied().unwrap_or(T::zero())
    }

    /// Clips eigenvalues into `[lo, hi]`; the order is preserved.
    pub fn clipped(mut self, lo: T, hi: T) -> Self {
        for v in &mut self.eigenvalues {
            *v = v.max(lo).min(hi);
        }
        self
    }

    /// Orthogonality defect of the stored eigenbasis.
    pub fn orthogonality_defect(&self) -> Option<T> {
        match self.vectors.as_ref()? {
            Eigenbasis::Standard => Some(T::zero()),
            Eigenbasis::Real(v) => Some(orthogonality_defect(&v.mapv(|x| Complex::new(x, T::zero())))),
            Eigenbasis::Complex(v) => Some(orthogonality_defect(v)),
        }
    }

    /// Writes `index,eigenvalue` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::config(format!("cannot write spectrum: {e}"));
        w.write_record(["index", "eigenvalue"]).map_err(io)?;
        for (i, v) in self.eigenvalues.iter().enumerate() {
            w.write_record([i.to_string(), format!("{:?}", v.as_f64())]).map_err(io)?;
        }
        w.flush().map_err(|e| Error::config(e.to_string()))?;
        Ok(())
    }

    /// `sum_{n > N} g(lambda_n)` from the diagonal decay model, or `None`.
    fn tail_of(&self, g: &dyn Fn(T) -> T) -> Option<(T, T)> {
        let model = self.tail_model.as_ref()?;
        Some(model.tail(self.len(), |v| g(v[0])))
    }
}

fn psi_is_zero_at_origin(psi: &PsiFunction) -> bool {
    psi.eval(0.0f64) == 0.0
}

/// `sum_i psi(lambda_i)` plus, for infinite-dimensional spaces, the
/// extrapolated contribution of the eigenvalues beyond the truncation.
pub fn trace_psi<T: Real>(spec: &Spectrum<T>, psi: &PsiFunction) -> Result<TraceValue<T>> {
    let vals: Vec<T> = spec.eigenvalues.iter().map(|&l| psi.eval_checked(l)).collect::<Result<_>>()?;
    let head = compensated_sum(vals);
    if spec.tail_model.is_some() {
        if !psi_is_zero_at_origin(psi) {
            return Err(Error::Divergence(format!(
                "{} does not vanish at 0, so its trace over an infinite-dimensional space diverges",
                psi.name()
            )));
        }
        return Ok(TraceValue::with_tail(head, spec.tail_of(&|x| psi.eval(x))));
    }
    let tail = match psi.kind {
        PsiKind::Identity => spec.trace_tail,
        _ => None,
    };
    Ok(TraceValue::with_tail(head, tail))
}

/// `tr(T psi(T)) = sum_i lambda_i psi(lambda_i)`.
pub fn trace_symbol_weighted<T: Real>(spec: &Spectrum<T>, psi: &PsiFunction) -> Result<TraceValue<T>> {
    let vals: Vec<T> = spec
        .eigenvalues
        .iter()
        .map(|&l| Ok(l * psi.eval_checked(l)?))
        .collect::<Result<_>>()?;
    let head = compensated_sum(vals);
    let tail = spec.tail_of(&|x| x * psi.eval(x));
    Ok(TraceValue::with_tail(head, tail))
}

/// `sum_n <T_eta phi_n, phi_n> psi(lambda_n(sigma))` over the eigenbasis of
/// `spec_sigma`.
pub fn weighted_trace<T: Real>(spec_sigma: &Spectrum<T>, op_eta: &TruncatedOperator<T>, psi: &PsiFunction) -> Result<TraceValue<T>> {
    if spec_sigma.basis != op_eta.basis {
        return Err(Error::BasisMismatch(format!(
            "{} vs {}",
            spec_sigma.basis.describe(),
            op_eta.basis.describe()
        )));
    }
    let n = spec_sigma.len();
    let psi_vals: Vec<T> = spec_sigma.eigenvalues.iter().map(|&l| psi.eval_checked(l)).collect::<Result<_>>()?;
    let weights: Vec<T> = match (&spec_sigma.vectors, &spec_sigma.basis_index) {
        (Some(Eigenbasis::Standard), Some(order)) | (None, Some(order)) => {
            let d = op_eta.matrix.diagonal();
            order.iter().map(|&i| d[i]).collect()
        }
        (Some(Eigenbasis::Real(v)), _) => {
            let a = op_eta.matrix.to_complex();
            let vc = v.mapv(|x| Complex::new(x, T::zero()));
            quadratic_forms(&a, &vc)
        }
        (Some(Eigenbasis::Complex(v)), _) => quadratic_forms(&op_eta.matrix.to_complex(), v),
        _ => {
            return Err(Error::config("weighted traces need the eigenvectors of the sigma operator"));
        }
    };
    let head = compensated_sum((0..n).map(|i| weights[i] * psi_vals[i]));
    let tail = match (&spec_sigma.tail_model, &op_eta.tail_model) {
        (Some(ms), Some(me)) => {
            let joint = TailExtrapolation {
                primary: vec![ms.primary[0].clone(), me.primary[0].clone()],
                alternate: vec![ms.alternate[0].clone(), me.alternate[0].clone()],
            };
            Some(joint.tail(n, |v| v[1] * psi.eval(v[0])))
        }
        _ => None,
    };
    Ok(TraceValue::with_tail(head, tail))
}

/// `v_i^H A v_i` for each column.
fn quadratic_forms<T: Real>(a: &Array2<Complex<T>>, v: &Array2<Complex<T>>) -> Vec<T> {
    let av = a.dot(v);
    (0..v.ncols())
        .map(|j| {
            compensated_sum(
                v.column(j)
                    .iter()
                    .zip(av.column(j).iter())
                    .map(|(x, y)| (x.conj() * y).re),
            )
        })
        .collect()
}

/// Both sides of the elementary trace inequalities
/// `|tr psi(A)| <= dim sup|psi|` and `|tr(A psi(A))| <= ||A||_1 sup|psi|`,
/// with `sup` over the spectral interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceBoundsReport<T> {
    pub trace_psi: T,
    pub dim_bound: T,
    pub trace_a_psi: T,
    pub trace_norm_bound: T,
    pub holds: bool,
}

pub fn trace_bounds_check<T: Real>(spec: &Spectrum<T>, psi: &PsiFunction) -> TraceBoundsReport<T> {
    if spec.is_empty() {
        return TraceBoundsReport {
            trace_psi: T::zero(),
            dim_bound: T::zero(),
            trace_a_psi: T::zero(),
            trace_norm_bound: T::zero(),
            holds: true,
        };
    }
    let sup = psi.sup_abs_on(spec.min(), spec.max());
    let tp = compensated_sum(spec.eigenvalues.iter().map(|&l| psi.eval(l)));
    let tap = compensated_sum(spec.eigenvalues.iter().map(|&l| l * psi.eval(l)));
    let norm1 = compensated_sum(spec.eigenvalues.iter().map(|l| l.abs()));
    let dim_bound = T::idx(spec.len()) * sup;
    let tn_bound = norm1 * sup;
    let slack = |b: T| T::lit(1e-12) * (T::one() + b.abs());
    let holds = tp.abs() <= dim_bound + slack(dim_bound) && tap.abs() <= tn_bound + slack(tn_bound);
    TraceBoundsReport {
        trace_psi: tp,
        dim_bound,
        trace_a_psi: tap,
        trace_norm_bound: tn_bound,
        holds,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{assemble, assemble_bergman, AssemblyOptions};
    use crate::settings::{Domain, FrameSetting};
    use crate::symbols::parse_symbol;
    use proptest::prelude::*;

    fn torus_spec(n: usize, sym: &str, vectors: bool) -> (TruncatedOperator<f64>, Spectrum<f64>) {
        let t = FrameSetting::<f64>::torus(1, n).unwrap();
        let s = parse_symbol(sym, &Domain::Torus(1)).unwrap();
        let op = assemble(&t, &s, &AssemblyOptions::default()).unwrap();
        let sp = eigen_decompose(&op, vectors).unwrap();
        (op, sp)
    }

    #[test]
    fn three_by_three() {
        let (_, sp) = torus_spec(1, "2 + cos(theta1)", false);
        let h = std::f64::consts::SQRT_2 / 2.0;
        let exact = [2.0 - h, 2.0, 2.0 + h];
        for (a, b) in sp.eigenvalues.iter().zip(exact) {
            assert!((a - b).abs() < 1e-14);
        }
        let log = PsiFunction::parse("log", 0.0).unwrap();
        let t = trace_psi(&sp, &log).unwrap();
        assert!((t.value - 7f64.ln()).abs() < 1e-13);
        let b = trace_bounds_check(&sp, &log);
        assert!(b.holds);
        assert!((b.dim_bound - 3.0 * (2.0 + h).ln()).abs() < 1e-13);
    }

    #[test]
    fn constant_spectrum() {
        let (_, sp) = torus_spec(3, "1.25", false);
        assert!(sp.eigenvalues.iter().all(|&v| (v - 1.25).abs() < 1e-15));
        let sq = PsiFunction::parse("x^2", 0.0).unwrap();
        assert!((trace_psi(&sp, &sq).unwrap().value - 7.0 * 1.5625).abs() < 1e-13);
        let zero = PsiFunction::parse("0 * x", 0.0).unwrap();
        assert_eq!(trace_psi(&sp, &zero).unwrap().value, 0.0);
    }

    #[test]
    fn log_domain_error_names_eigenvalue() {
        let (_, sp) = torus_spec(2, "cos(theta1)", false);
        let log = PsiFunction::parse("log", 0.0).unwrap();
        match trace_psi(&sp, &log) {
            Err(Error::Domain(msg)) => assert!(msg.contains("eigenvalue")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reconstruction_matches_eigenvalue_trace() {
        let (op, sp) = torus_spec(6, "2 + cos(theta1) + 0.3 * sin(2 * theta1)", true);
        assert!(sp.orthogonality_defect().unwrap() < 1e-12);
        let Some(Eigenbasis::Complex(v)) = &sp.vectors else { panic!("complex basis expected") };
        let psi = PsiFunction::parse("exp(x)", 0.0).unwrap();
        let f = Array2::from_diag(&ndarray::Array1::from_iter(sp.eigenvalues.iter().map(|&l| Complex::new(psi.eval(l), 0.0))));
        let m = v.dot(&f).dot(&v.t().mapv(|z| z.conj()));
        let tr: f64 = (0..m.nrows()).map(|i| m[[i, i]].re).sum();
        assert!((tr - trace_psi(&sp, &psi).unwrap().value).abs() < 1e-9);
        // Identity weight reduces the weighted trace to the plain one.
        let t = FrameSetting::<f64>::torus(1, 6).unwrap();
        let one = parse_symbol("1", &Domain::Torus(1)).unwrap();
        let id_op = assemble(&t, &one, &AssemblyOptions::default()).unwrap();
        let w = weighted_trace(&sp, &id_op, &psi).unwrap().value;
        assert!((w - trace_psi(&sp, &psi).unwrap().value).abs() < 1e-12);
        let _ = op;
    }

    #[test]
    fn bergman_pair_first_term() {
        let alpha = 5.0f64;
        let o = AssemblyOptions { n_cut: Some(64), ..AssemblyOptions::default() };
        let s = parse_symbol("(1 - r2)^2", &Domain::Disk).unwrap();
        let e = parse_symbol("(1 - r2)^3", &Domain::Disk).unwrap();
        let os = assemble_bergman(&s, alpha, &o).unwrap();
        let oe = assemble_bergman(&e, alpha, &o).unwrap();
        let d = oe.exact_diagonal().unwrap();
        assert!((d[0] - (alpha + 1.0) / (alpha + 4.0)).abs() < 1e-14);
        let sp = eigen_decompose(&os, true).unwrap();
        let id = PsiFunction::parse("id", 0.0).unwrap();
        let w = weighted_trace(&sp, &oe, &id).unwrap();
        let direct: f64 = (0..64)
            .map(|n| {
                let nn = n as f64;
                let l = (alpha + 1.0) * (alpha + 2.0) / ((nn + alpha + 2.0) * (nn + alpha + 3.0));
                let m = (alpha + 1.0) * (alpha + 2.0) * (alpha + 3.0) / ((nn + alpha + 2.0) * (nn + alpha + 3.0) * (nn + alpha + 4.0));
                l * m
            })
            .sum();
        assert!((w.head - direct).abs() < 1e-13);
        assert!(w.tail.unwrap() > 0.0);
        // Diagonal case with eta = sigma: sum of squares.
        let w2 = weighted_trace(&sp, &os, &id).unwrap();
        let sq = trace_symbol_weighted(&sp, &id).unwrap();
        assert!((w2.value - sq.value).abs() < 1e-12);
        let other = assemble_bergman(&s, alpha, &AssemblyOptions { n_cut: Some(32), ..o }).unwrap();
        assert!(matches!(weighted_trace(&sp, &other, &id), Err(Error::BasisMismatch(_))));
    }

    #[test]
    fn plain_log_trace_diverges_on_infinite_dimensional_space() {
        let s = parse_symbol("(1 - r2)^2", &Domain::Disk).unwrap();
        let op = assemble_bergman(&s, 2.0, &AssemblyOptions { n_cut: Some(64), ..AssemblyOptions::default() }).unwrap();
        let sp = eigen_decompose(&op, false).unwrap();
        assert!(matches!(trace_psi(&sp, &PsiFunction::parse("exp", 0.0).unwrap()), Err(Error::Divergence(_))));
    }

    #[test]
    fn spectrum_csv() {
        let (_, sp) = torus_spec(1, "2 + cos(theta1)", false);
        let mut buf = Vec::new();
        sp.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("index,eigenvalue\n0,"));
        assert_eq!(text.lines().count(), 4);
    }

    proptest! {
        #[test]
        fn trace_is_monotone_under_increase(base in proptest::collection::vec(0.0f64..3.0, 1..40), bump in proptest::collection::vec(0.0f64..0.5, 40)) {
            let psi = PsiFunction::parse("x^2", 0.0).unwrap();
            let mk = |v: Vec<f64>| {
                let (_, mut sp) = torus_spec(0, "1", false);
                sp.eigenvalues = v;
                sp.eigenvalues.sort_by(|a, b| a.partial_cmp(b).unwrap());
                sp
            };
            let raised: Vec<f64> = base.iter().zip(&bump).map(|(a, b)| a + b).collect();
            let lo = trace_psi(&mk(base), &psi).unwrap().value;
            let hi = trace_psi(&mk(raised), &psi).unwrap().value;
            prop_assert!(hi >= lo);
        }

        #[test]
        fn bounds_hold_for_random_spectra(v in proptest::collection::vec(-5.0f64..5.0, 1..30)) {
            let (_, mut sp) = torus_spec(0, "1", false);
            sp.eigenvalues = v;
            sp.eigenvalues.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for p in ["x^2", "exp", "abs", "x^3 - x"] {
                prop_assert!(trace_bounds_check(&sp, &PsiFunction::parse(p, 0.0).unwrap()).holds);
            }
        }
    }
}
