//! Experiment configuration: a TOML file merged with command-line flags.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use szego_lab::operators::AssemblyOptions;
use szego_lab::settings::{Family, FrameSetting};
use szego_lab::symbols::{parse_symbol, PsiFunction};
use szego_lab::szego::{default_ladder, SweepSpec, Variant};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub setting: Option<SettingBlock>,
    pub symbols: Option<SymbolBlock>,
    pub tolerances: Option<ToleranceBlock>,
    pub assembly: Option<AssemblyBlock>,
    pub output: Option<OutputBlock>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettingBlock {
    pub family: Option<String>,
    pub dim: Option<usize>,
    pub moduli: Option<Vec<usize>>,
    pub alphas: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolBlock {
    pub sigma: Option<String>,
    pub eta: Option<String>,
    pub psi: Option<String>,
    pub psi_shift: Option<f64>,
    pub variant: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceBlock {
    pub quad: Option<f64>,
    pub tail: Option<f64>,
    pub sandwich: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssemblyBlock {
    pub n_cut: Option<usize>,
    pub half_width: Option<usize>,
    pub force_dense: Option<bool>,
    pub lieb: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: Option<PathBuf>,
    pub formats: Option<Vec<String>>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Plot,
}

impl Format {
    pub fn parse(text: &str) -> Result<Self, String> {
        match text.trim() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "plot" => Ok(Format::Plot),
            other => Err(format!("unknown format '{other}' (expected json, csv or plot)")),
        }
    }
}

/// Flag values; `None` defers to the file, then to defaults.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub family: Option<String>,
    pub dim: Option<usize>,
    pub moduli: Option<Vec<usize>>,
    pub ladder: Option<Vec<f64>>,
    pub sigma: Option<String>,
    pub eta: Option<String>,
    pub psi: Option<String>,
    pub psi_shift: Option<f64>,
    pub variant: Option<String>,
    pub out: Option<PathBuf>,
    pub formats: Option<Vec<String>>,
    pub tol_quad: Option<f64>,
    pub tol_tail: Option<f64>,
    pub tol_sandwich: Option<f64>,
    pub n_cut: Option<usize>,
    pub half_width: Option<usize>,
    pub force_dense: bool,
    pub lieb: Option<bool>,
    pub seed: Option<u64>,
}

/// A validated experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub spec: SweepSpec<f64>,
    pub out: PathBuf,
    pub formats: Vec<Format>,
    pub seed: u64,
}

pub fn parse_family(name: &str, dim: Option<usize>, moduli: Option<Vec<usize>>) -> Result<Family, String> {
    match name.trim() {
        "torus" => Ok(Family::Torus { dim: dim.unwrap_or(1) }),
        "group" => Ok(Family::Group {
            moduli: moduli.ok_or("the group setting needs moduli (e.g. --moduli 12)")?,
        }),
        "bergman" => Ok(Family::Bergman),
        "fock" => Ok(Family::Fock),
        "paley-wiener" | "pw" => Ok(Family::PaleyWiener),
        other => Err(format!(
            "unknown setting '{other}' (expected bergman, fock, group, paley-wiener or torus)"
        )),
    }
}

pub fn resolve(file: FileConfig, o: Overrides) -> Result<ExperimentConfig, String> {
    let set = file.setting.unwrap_or_default();
    let sym = file.symbols.unwrap_or_default();
    let tol = file.tolerances.unwrap_or_default();
    let asm = file.assembly.unwrap_or_default();
    let out = file.output.unwrap_or_default();

    let family_name = o.family.or(set.family).ok_or("no setting given (use --setting or [setting] family)")?;
    let family = parse_family(&family_name, o.dim.or(set.dim), o.moduli.or(set.moduli))?;
    let alphas = o.ladder.or(set.alphas).unwrap_or_else(|| default_ladder(&family));
    if alphas.is_empty() {
        return Err("the alpha ladder is empty".into());
    }
    if alphas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(format!("the alpha ladder must be strictly increasing (got {alphas:?})"));
    }
    // Validates each ladder value against the family before any work.
    let mut template = None;
    for &a in &alphas {
        template = Some(FrameSetting::<f64>::new(family.clone(), a).map_err(|e| e.to_string())?);
    }
    let template = template.expect("ladder is nonempty");

    let sigma_text = o.sigma.or(sym.sigma).ok_or("no symbol given (use --symbol or [symbols] sigma)")?;
    let sigma = parse_symbol::<f64>(&sigma_text, &template.domain).map_err(|e| format!("symbol: {e}"))?;
    let eta = match o.eta.or(sym.eta) {
        Some(t) => Some(parse_symbol::<f64>(&t, &template.domain).map_err(|e| format!("eta: {e}"))?),
        None => None,
    };
    let shift = o.psi_shift.or(sym.psi_shift).unwrap_or(0.0);
    let psi = PsiFunction::parse(&o.psi.or(sym.psi).unwrap_or_else(|| "id".into()), shift).map_err(|e| format!("psi: {e}"))?;
    let variant = Variant::parse(&o.variant.or(sym.variant).unwrap_or_else(|| "plain".into())).map_err(|e| e.to_string())?;
    if variant == Variant::PairWeighted && eta.is_none() {
        return Err("the pair-weighted variant needs --eta".into());
    }

    let positive = |name: &str, v: Option<f64>, default: f64| -> Result<f64, String> {
        let v = v.unwrap_or(default);
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(format!("{name} must be a positive number (got {v})"))
        }
    };
    let assembly = AssemblyOptions {
        n_cut: o.n_cut.or(asm.n_cut),
        half_width: o.half_width.or(asm.half_width),
        tol_quad: positive("tol-quad", o.tol_quad.or(tol.quad), 1e-12)?,
        tol_tail: positive("tol-tail", o.tol_tail.or(tol.tail), 1e-8)?,
        force_dense: o.force_dense || asm.force_dense.unwrap_or(false),
    };
    let mut spec = SweepSpec::new(family, alphas, sigma, psi, variant);
    spec.eta = eta;
    spec.assembly = assembly;
    spec.tol_sandwich = positive("tol-sandwich", o.tol_sandwich.or(tol.sandwich), 1e-8)?;
    if let Some(l) = o.lieb.or(asm.lieb) {
        spec.lieb = l;
    }
    let formats = o
        .formats
        .or(out.formats)
        .unwrap_or_else(|| vec!["json".into(), "csv".into(), "plot".into()])
        .iter()
        .map(|f| Format::parse(f))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExperimentConfig {
        spec,
        out: o.out.or(out.dir).unwrap_or_else(|| PathBuf::from("szego-report")),
        formats,
        seed: o.seed.or(file.seed).unwrap_or(0),
    })
}
