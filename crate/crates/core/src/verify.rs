//! Invariant batteries runnable from the command line.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::berezin::{contraction_report, convergence_in_measure, BerezinEvaluator, LpExponent};
use crate::error::{Error, Result};
use crate::operators::AssemblyOptions;
use crate::settings::{Domain, Family, FrameSetting, Part, Point};
use crate::symbols::{parse_symbol, PsiFunction, Symbol};
use crate::szego::{berezin_lieb_check, run_limit_sweep, SweepSpec, Variant};

pub const SUITES: [&str; 5] = ["all", "berezin", "frames", "lieb", "szego"];

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn check(out: &mut Vec<Check>, name: impl Into<String>, outcome: Result<(bool, String)>) {
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    out.push(Check {
        name: name.into(),
        passed,
        detail,
    });
}

/// Runs one named battery; unknown names are a configuration error.
pub fn run_suite(name: &str, seed: u64) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    match name {
        "frames" => frames(&mut checks),
        "berezin" => berezin(&mut checks),
        "lieb" => lieb(&mut checks, seed, 50),
        "szego" => szego(&mut checks),
        "all" => {
            frames(&mut checks);
            berezin(&mut checks);
            lieb(&mut checks, seed, 50);
            szego(&mut checks);
        }
        other => {
            return Err(Error::config(format!(
                "unknown suite '{other}' (expected one of {})",
                SUITES.join(", ")
            )))
        }
    }
    Ok(SuiteReport {
        suite: name.to_string(),
        seed,
        checks,
    })
}

fn catalog() -> Vec<FrameSetting<f64>> {
    vec![
        FrameSetting::torus(1, 6).expect("catalog"),
        FrameSetting::torus(2, 3).expect("catalog"),
        FrameSetting::group(&[12], 3).expect("catalog"),
        FrameSetting::group(&[4, 6], 1).expect("catalog"),
        FrameSetting::bergman(3.0).expect("catalog"),
        FrameSetting::fock(2.0).expect("catalog"),
        FrameSetting::paley_wiener(2.0).expect("catalog"),
    ]
}

fn sample_points(s: &FrameSetting<f64>) -> Vec<Point<f64>> {
    match &s.domain {
        Domain::Torus(d) => vec![Point::Torus(vec![0.0; *d]), Point::Torus(vec![1.3; *d])],
        Domain::Group(m) => vec![Point::Group(vec![0; m.len()]), Point::Group(vec![1; m.len()])],
        Domain::Disk => vec![s.origin(), Point::Planar(num_complex::Complex::new(0.5, -0.6))],
        Domain::Plane => vec![s.origin(), Point::Planar(num_complex::Complex::new(1.5, 2.0))],
        Domain::Line => vec![s.origin(), Point::Line(-3.7)],
    }
}

fn frames(out: &mut Vec<Check>) {
    for s in catalog() {
        for x in sample_points(&s) {
            let one = |_: &Point<f64>| 1.0;
            let r = s.integrate_against_kernel(&one, &x, Part::Whole, 1e-10);
            check(
                out,
                format!("frame normalization, {} at {:?}", s.family(), x.coords()),
                r.map(|v| ((v.value - 1.0).abs() < 1e-8, format!("mass {:.12}", v.value))),
            );
        }
        let pts = sample_points(&s);
        let sym = s
            .kernel_overlap(&pts[0], &pts[1])
            .and_then(|a| Ok((a, s.kernel_overlap(&pts[1], &pts[0])?)));
        check(
            out,
            format!("kernel overlap symmetry, {}", s.family()),
            sym.map(|(a, b)| ((a - b).abs() <= 1e-15 * a.abs().max(1e-300), format!("{a:e} vs {b:e}"))),
        );
    }
    for a in [1.0, 4.0] {
        let f = FrameSetting::<f64>::fock(a).expect("fock");
        for r in [0.5, 1.0] {
            let t = f.kernel_tail(&f.origin(), r, 1e-12);
            let exact = (-a * r * r).exp();
            check(
                out,
                format!("Fock kernel tail, alpha {a}, R {r}"),
                t.map(|v| ((v - exact).abs() <= 1e-6 * exact, format!("{v:e} vs {exact:e}"))),
            );
        }
        let b = FrameSetting::<f64>::bergman(a).expect("bergman");
        let r = 1.0f64;
        let t = b.kernel_tail(&b.origin(), r, 1e-12);
        let exact = (1.0 - r.tanh().powi(2)).powf(a + 1.0);
        check(
            out,
            format!("Bergman kernel tail, alpha {a}, R {r}"),
            t.map(|v| ((v - exact).abs() <= 1e-6 * exact, format!("{v:e} vs {exact:e}"))),
        );
        let p = FrameSetting::<f64>::paley_wiener(a).expect("pw");
        let t = p.kernel_tail(&p.origin(), r, 1e-10);
        let bound = 1.0 / (std::f64::consts::PI.powi(2) * a * r);
        check(
            out,
            format!("Paley-Wiener kernel tail bound, alpha {a}, R {r}"),
            t.map(|v| (v <= bound, format!("{v:e} <= {bound:e}"))),
        );
    }
}

fn berezin(out: &mut Vec<Check>) {
    let cases: Vec<(FrameSetting<f64>, &str)> = vec![
        (FrameSetting::torus(1, 4).expect("catalog"), "2 + cos(theta1)"),
        (FrameSetting::group(&[12], 2).expect("catalog"), "2 + cos(pi * x1 / 6)"),
        (FrameSetting::bergman(4.0).expect("catalog"), "(1 - r2)^2"),
        (FrameSetting::fock(2.0).expect("catalog"), "exp(-r2)"),
    ];
    for (s, text) in &cases {
        let sym = match parse_symbol::<f64>(text, &s.domain) {
            Ok(v) => v,
            Err(e) => {
                check(out, format!("parse {text}"), Err(e));
                continue;
            }
        };
        let inf = contraction_report(s, &sym, LpExponent::Infinity, 1e-10);
        check(
            out,
            format!("sup-norm contraction, {} {text}", s.family()),
            inf.map(|c| (c.lhs <= c.rhs + 1e-9, format!("{:.12} <= {:.12}", c.lhs, c.rhs))),
        );
        let one = contraction_report(s, &sym, LpExponent::One, 1e-9);
        check(
            out,
            format!("integral preservation, {} {text}", s.family()),
            one.map(|c| ((c.lhs - c.rhs).abs() <= 1e-6 * c.rhs.abs().max(1e-12), format!("{:.12} vs {:.12}", c.lhs, c.rhs))),
        );
    }
    let fock_sym = parse_symbol::<f64>("exp(-r2)", &Domain::Plane).expect("symbol");
    for a in [1.0, 8.0] {
        let s = FrameSetting::fock(a).expect("fock");
        let res = BerezinEvaluator::new(&s, &fock_sym, 1e-12).and_then(|ev| {
            let mut worst = 0.0f64;
            for r in [0.0, 0.3, 0.8, 1.5] {
                let z = Point::Planar(num_complex::Complex::from_polar(r, 0.7));
                let v = ev.eval(&z)?;
                let exact = a / (a + 1.0) * (-a * r * r / (a + 1.0)).exp();
                worst = worst.max((v - exact).abs());
            }
            Ok((worst <= 1e-8, format!("max deviation {worst:e}")))
        });
        check(out, format!("Fock Gaussian closed form, alpha {a}"), res);
    }
    let eps = crate::berezin::DEFAULT_EPSILONS.to_vec();
    let tor = FrameSetting::torus(1, 1).expect("torus");
    let tsym = parse_symbol::<f64>("2 + cos(theta1)", &Domain::Torus(1)).expect("symbol");
    check(
        out,
        "exceedance non-increasing, torus",
        convergence_in_measure(&tor, &[1.0, 2.0, 4.0, 8.0, 16.0], &tsym, 256, 1.0, &eps, 1e-12)
            .map(|t| (t.is_non_increasing(0.0), format!("{} rows", t.rows.len()))),
    );
    let f = FrameSetting::fock(1.0).expect("fock");
    check(
        out,
        "exceedance non-increasing, Fock",
        convergence_in_measure(&f, &[1.0, 2.0, 4.0, 8.0, 16.0], &fock_sym, 16, 4.0, &eps, 1e-10)
            .map(|t| (t.is_non_increasing(0.0), format!("{} rows", t.rows.len()))),
    );
}

/// A real trigonometric polynomial of degree at most `degree` in one
/// variable with coefficients uniform in `[-1, 1]`, as expression text.
pub fn random_trig_polynomial<R: Rng>(rng: &mut R, degree: usize) -> String {
    let mut text = format!("{:.6}", rng.gen_range(-1.0..1.0));
    for k in 1..=degree {
        let a: f64 = rng.gen_range(-1.0..1.0);
        let b: f64 = rng.gen_range(-1.0..1.0);
        text.push_str(&format!(" + {a:.6} * cos({k} * theta1) + {b:.6} * sin({k} * theta1)"));
    }
    text
}

/// Sandwich battery on random torus symbols, including the reversed
/// direction for a shifted logarithm.
pub fn lieb(out: &mut Vec<Check>, seed: u64, count: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = AssemblyOptions {
        tol_quad: 1e-9,
        ..AssemblyOptions::default()
    };
    for i in 0..count {
        let degree = rng.gen_range(1..=4);
        let n = rng.gen_range(1..=64);
        let text = random_trig_polynomial(&mut rng, degree);
        let res = (|| -> Result<(bool, String)> {
            let s = FrameSetting::<f64>::torus(1, n)?;
            let sym = parse_symbol::<f64>(&text, &Domain::Torus(1))?;
            let shift = 0.5 - sym.ess_inf;
            let mut worst = f64::INFINITY;
            let mut ok = true;
            for psi in ["x^2", "exp(x)", "abs(x)"] {
                let p = PsiFunction::parse(psi, 0.0)?;
                let rec = berezin_lieb_check(&s, &sym, None, &p, &opts)?;
                ok &= rec.holds(1e-8) == Some(true);
                worst = worst.min(rec.slack());
            }
            let lg = PsiFunction::parse("log-shifted", shift)?;
            let rec = berezin_lieb_check(&s, &sym, None, &lg, &opts)?;
            ok &= rec.holds(1e-8) == Some(true) && rec.convexity == crate::szego::Convexity::Concave;
            Ok((ok, format!("n {n}, worst convex slack {worst:e}, concave slack {:e}", rec.slack())))
        })();
        check(out, format!("sandwich #{i}: {text}"), res);
    }
}

fn szego(out: &mut Vec<Check>) {
    let psi = |t: &str| PsiFunction::parse(t, 0.0).expect("psi");
    let mut sweep = |name: &str, spec: SweepSpec<f64>, tol_last: f64| {
        let res = run_limit_sweep(&spec).map(|r| {
            let last = r.points.last().and_then(|p| p.error).unwrap_or(f64::INFINITY);
            let ok = r.errors_strictly_decreasing() && last <= tol_last && r.failed_assertions().is_empty();
            (ok, format!("errors {:?}, target {:.10}", r.errors(), r.target))
        });
        check(out, name, res);
    };
    let sym = |t: &str, d: &Domain| parse_symbol::<f64>(t, d).expect("symbol");
    sweep(
        "torus log limit",
        SweepSpec::new(Family::Torus { dim: 1 }, vec![8.0, 16.0, 32.0], sym("2 + cos(theta1)", &Domain::Torus(1)), psi("log"), Variant::PlainTrace),
        5e-3,
    );
    sweep(
        "Fock symbol-weighted limit",
        SweepSpec::new(Family::Fock, vec![4.0, 16.0, 64.0], sym("exp(-r2)", &Domain::Plane), psi("id"), Variant::SymbolWeighted),
        2e-2,
    );
    sweep(
        "Bergman symbol-weighted limit",
        SweepSpec::new(Family::Bergman, vec![4.0, 16.0, 64.0], sym("(1 - r2)^2", &Domain::Disk), psi("id"), Variant::SymbolWeighted),
        2e-2,
    );
    let g = FrameSetting::<f64>::group(&[12], 6).expect("group");
    let gs: Symbol<f64> = sym("3 + cos(pi * x1 / 6) - 0.5 * sin(pi * x1 / 3)", &g.domain);
    let exact: f64 = (0..12).map(|x| gs.eval(&Point::Group(vec![x])).ln()).sum::<f64>() / 12.0;
    let res = run_limit_sweep(&SweepSpec::new(g.family().clone(), vec![6.0], gs, psi("log"), Variant::PlainTrace)).map(|r| {
        let v = r.points[0].value.unwrap_or(f64::NAN);
        ((v - exact).abs() < 1e-10, format!("{v:.14} vs {exact:.14}"))
    });
    check(out, "finite group full dual exactness", res);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_suite() {
        assert!(matches!(run_suite("nosuch", 1), Err(Error::Config(_))));
    }

    #[test]
    fn frames_suite_passes() {
        let r = run_suite("frames", 1).unwrap();
        for c in &r.checks {
            assert!(c.passed, "{} {}", c.name, c.detail);
        }
    }

    #[test]
    fn small_lieb_battery() {
        let mut out = Vec::new();
        lieb(&mut out, 7, 4);
        for c in &out {
            assert!(c.passed, "{} {}", c.name, c.detail);
        }
    }

    #[test]
    fn generator_is_seeded() {
        let a = random_trig_polynomial(&mut ChaCha8Rng::seed_from_u64(3), 4);
        let b = random_trig_polynomial(&mut ChaCha8Rng::seed_from_u64(3), 4);
        assert_eq!(a, b);
        assert!(a.contains("cos(4 * theta1)"));
    }
}
