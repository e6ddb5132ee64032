//! JSON file formats for configurations, fermion systems, negative definite measures and
//! optimization problems, plus number formatting for output.

use crate::fermion::{FermionSystem, IndefiniteSpace};
use crate::homogeneous::NegDefMeasure;
use crate::matlin::{c, CMatrix, C64};
use crate::measure::{Constraint, DiscreteConfig};
use crate::optimize::{AnnealSchedule, Objective, OptimOptions, OptimProblem};
use crate::spectral::{pauli_embed, SphereConfig};
use serde::{Deserialize, Serialize};
use std::io::Read;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {message}")]
    Read { path: String, message: String },
}

impl From<serde_json::Error> for IoError {
    fn from(e: serde_json::Error) -> Self {
        let full = e.to_string();
        let suffix = format!(" at line {} column {}", e.line(), e.column());
        let message = full.strip_suffix(&suffix).unwrap_or(&full).to_string();
        IoError::Parse { line: e.line(), column: e.column(), message }
    }
}

/// File contents, with "-" meaning standard input.
pub fn read_source(path: &str) -> Result<String, IoError> {
    let err = |e: std::io::Error| IoError::Read { path: path.to_string(), message: e.to_string() };
    if path == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s).map_err(err)?;
        Ok(s)
    } else {
        std::fs::read_to_string(path).map_err(err)
    }
}

/// A float with 17 significant digits: positional for moderate magnitudes, scientific
/// otherwise. Either form reads back bit-exactly.
pub fn fmt_f64(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0.0".into() } else { "0.0".into() };
    }
    let a = x.abs();
    if (1e-5..1e16).contains(&a) {
        let decimals = (16 - a.log10().floor() as i32).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.16e}")
    }
}

struct SigDigits<F>(F);

impl<F: serde_json::ser::Formatter> serde_json::ser::Formatter for SigDigits<F> {
    fn write_f64<W: ?Sized + std::io::Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        if value.is_finite() {
            writer.write_all(fmt_f64(value).as_bytes())
        } else {
            writer.write_all(b"null")
        }
    }

    fn begin_array<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + std::io::Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + std::io::Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn end_object_key<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object_key(w)
    }
    fn begin_object_value<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + std::io::Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Pretty JSON with every float printed to 17 significant digits.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigDigits(serde_json::ser::PrettyFormatter::new()));
    value.serialize(&mut ser).expect("serializing to memory cannot fail");
    String::from_utf8(buf).expect("JSON is UTF-8")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointEntry {
    pub w: f64,
    /// Unit vector for the f = 2 Pauli form (needs `beta`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub re: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub f: usize,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub points: Vec<PointEntry>,
}

fn square(re: &[Vec<f64>], im: Option<&[Vec<f64>]>, dim: usize, what: &str) -> Result<CMatrix, IoError> {
    if re.len() != dim || re.iter().any(|r| r.len() != dim) {
        return Err(IoError::Invalid(format!("{what}: real part must be {dim}x{dim}")));
    }
    if let Some(im) = im {
        if im.len() != dim || im.iter().any(|r| r.len() != dim) {
            return Err(IoError::Invalid(format!("{what}: imaginary part must be {dim}x{dim}")));
        }
    }
    CMatrix::from_parts(re, im).map_err(|e| IoError::Invalid(format!("{what}: {e}")))
}

fn nonzero_im(m: &CMatrix) -> Option<Vec<Vec<f64>>> {
    if m.data().iter().any(|z| z.im != 0.0) {
        Some(m.im_rows())
    } else {
        None
    }
}

impl ConfigFile {
    pub fn into_config(self) -> Result<DiscreteConfig, IoError> {
        let mut pts = Vec::with_capacity(self.points.len());
        for (i, pe) in self.points.iter().enumerate() {
            let what = format!("point {i}");
            let p = match (&pe.v, &pe.re) {
                (Some(v), None) => {
                    if pe.im.is_some() {
                        return Err(IoError::Invalid(format!("{what}: 'im' given with 'v'")));
                    }
                    let beta = self.beta.ok_or_else(|| IoError::Invalid(format!("{what}: 'v' needs a top-level 'beta'")))?;
                    if self.f != 2 || self.n != 1 {
                        return Err(IoError::Invalid(format!("{what}: 'v' is only valid for f = 2, n = 1")));
                    }
                    let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                    if (r - 1.0).abs() > 1e-9 {
                        return Err(IoError::Invalid(format!("{what}: 'v' must be a unit vector (|v| = {r})")));
                    }
                    pauli_embed(*v, beta)
                }
                (None, Some(re)) => square(re, pe.im.as_deref(), self.f, &what)?,
                _ => return Err(IoError::Invalid(format!("{what}: give exactly one of 'v' or 're'/'im'"))),
            };
            pts.push((pe.w, p));
        }
        let mut cfg = DiscreteConfig::new(self.f, self.n, pts);
        cfg.beta = self.beta;
        cfg.validate().map_err(|e| IoError::Invalid(e.to_string()))?;
        Ok(cfg)
    }

    pub fn from_config(cfg: &DiscreteConfig) -> Self {
        ConfigFile {
            f: cfg.f,
            n: cfg.n,
            beta: cfg.beta,
            points: cfg.points.iter().map(|wp| PointEntry { w: wp.w, v: None, re: Some(wp.p.re_rows()), im: nonzero_im(&wp.p) }).collect(),
        }
    }
}

impl ConfigFile {
    /// The unit-vector form, one point per sphere direction.
    pub fn from_sphere(sc: &SphereConfig) -> Self {
        ConfigFile {
            f: 2,
            n: 1,
            beta: Some(sc.beta),
            points: sc.points.iter().map(|(w, v)| PointEntry { w: *w, v: Some(*v), re: None, im: None }).collect(),
        }
    }
}

pub fn parse_config(text: &str) -> Result<DiscreteConfig, IoError> {
    serde_json::from_str::<ConfigFile>(text)?.into_config()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinorEntry {
    pub re: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<f64>>,
}

/// `waves[l][x]` is the value of wave function l at site x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FermionFile {
    pub n: usize,
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub labels: Vec<String>,
    pub waves: Vec<Vec<SpinorEntry>>,
}

impl FermionFile {
    pub fn into_system(self) -> Result<FermionSystem, IoError> {
        let d = 2 * self.n;
        let mut waves = Vec::with_capacity(self.waves.len());
        for (l, wave) in self.waves.iter().enumerate() {
            let mut vals = Vec::with_capacity(wave.len());
            for (x, sp) in wave.iter().enumerate() {
                if sp.re.len() != d || sp.im.as_ref().is_some_and(|im| im.len() != d) {
                    return Err(IoError::Invalid(format!("wave {l}, site {x}: need {d} components")));
                }
                vals.push((0..d).map(|a| c(sp.re[a], sp.im.as_ref().map_or(0.0, |im| im[a]))).collect::<Vec<C64>>());
            }
            waves.push(vals);
        }
        let sys = FermionSystem { space: IndefiniteSpace { n: self.n }, weights: self.weights, labels: self.labels, waves };
        sys.validate().map_err(|e| IoError::Invalid(e.to_string()))?;
        Ok(sys)
    }

    pub fn from_system(sys: &FermionSystem) -> Self {
        let spinor = |v: &Vec<C64>| SpinorEntry {
            re: v.iter().map(|z| z.re).collect(),
            im: if v.iter().any(|z| z.im != 0.0) { Some(v.iter().map(|z| z.im).collect()) } else { None },
        };
        FermionFile {
            n: sys.space.n,
            weights: sys.weights.clone(),
            labels: sys.labels.clone(),
            waves: sys.waves.iter().map(|w| w.iter().map(spinor).collect()).collect(),
        }
    }
}

pub fn parse_fermion(text: &str) -> Result<FermionSystem, IoError> {
    serde_json::from_str::<FermionFile>(text)?.into_system()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentumEntry {
    pub p: [f64; 4],
    pub w_re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_im: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NegDefFile {
    pub n: usize,
    pub k_radius: f64,
    pub support: Vec<MomentumEntry>,
}

impl NegDefFile {
    pub fn into_measure(self) -> Result<NegDefMeasure, IoError> {
        let d = 2 * self.n;
        let mut support = Vec::with_capacity(self.support.len());
        for (i, me) in self.support.iter().enumerate() {
            support.push((me.p, square(&me.w_re, me.w_im.as_deref(), d, &format!("support point {i}"))?));
        }
        let nu = NegDefMeasure::new(self.n, self.k_radius, support);
        nu.validate().map_err(|e| IoError::Invalid(e.to_string()))?;
        Ok(nu)
    }

    pub fn from_measure(nu: &NegDefMeasure) -> Self {
        NegDefFile {
            n: nu.space.n,
            k_radius: nu.k_radius,
            support: nu.support.iter().map(|mp| MomentumEntry { p: mp.p, w_re: mp.w.re_rows(), w_im: nonzero_im(&mp.w) }).collect(),
        }
    }
}

pub fn parse_negdef(text: &str) -> Result<NegDefMeasure, IoError> {
    serde_json::from_str::<NegDefFile>(text)?.into_measure()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ObjectiveEntry {
    S,
    #[serde(rename = "T_plus_nuS")]
    TPlusNuS(f64),
    #[serde(rename = "S_with_T_cap")]
    SWithTCap(f64),
}

/// "C1" (trace), "C2" (identity) or {"C3": [c₁, …, c₂ₙ]}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ConstraintEntry {
    C1,
    C2,
    C3(Vec<f64>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionsEntry {
    pub max_iters: Option<usize>,
    pub restarts: Option<usize>,
    pub seed: Option<u64>,
    pub step: Option<f64>,
    pub tol: Option<f64>,
    /// Set to null to switch annealing off.
    #[serde(default, deserialize_with = "present", skip_serializing_if = "Option::is_none")]
    pub anneal: Option<Option<AnnealSchedule>>,
}

// distinguishes an explicit null from a missing key
fn present<'de, D: serde::Deserializer<'de>, T: Deserialize<'de>>(d: D) -> Result<Option<Option<T>>, D::Error> {
    Option::<T>::deserialize(d).map(Some)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub objective: ObjectiveEntry,
    #[serde(default)]
    pub constraints: Vec<ConstraintEntry>,
    pub m: usize,
    pub f: usize,
    pub n: usize,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub options: OptionsEntry,
    #[serde(default)]
    pub start: Option<ConfigFile>,
}

impl ProblemFile {
    pub fn into_problem(self) -> Result<OptimProblem, IoError> {
        let objective = match self.objective {
            ObjectiveEntry::S => Objective::S,
            ObjectiveEntry::TPlusNuS(nu) => Objective::TPlusNuS(nu),
            ObjectiveEntry::SWithTCap(cap) => Objective::SWithTCap(cap),
        };
        let constraints = self
            .constraints
            .into_iter()
            .map(|c| match c {
                ConstraintEntry::C1 => Constraint::Trace,
                ConstraintEntry::C2 => Constraint::Identity,
                ConstraintEntry::C3(v) => Constraint::Eigenvalues(v),
            })
            .collect();
        let d = OptimOptions::default();
        let o = self.options;
        let options = OptimOptions {
            max_iters: o.max_iters.unwrap_or(d.max_iters),
            restarts: o.restarts.unwrap_or(d.restarts),
            seed: o.seed.unwrap_or(d.seed),
            step: o.step.unwrap_or(d.step),
            tol: o.tol.unwrap_or(d.tol),
            anneal: o.anneal.unwrap_or(d.anneal),
        };
        let start = self.start.map(|s| s.into_config()).transpose()?;
        Ok(OptimProblem { objective, constraints, m: self.m, f: self.f, n: self.n, beta: self.beta, options, start })
    }
}

pub fn parse_problem(text: &str) -> Result<OptimProblem, IoError> {
    serde_json::from_str::<ProblemFile>(text)?.into_problem()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_errors_carry_positions() {
        let err = parse_config("{\n  \"f\": 2,\n  \"n\": oops\n}").unwrap_err();
        match err {
            IoError::Parse { line, column, .. } => assert_eq!((line, column), (3, 8)),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn sphere_points_need_beta() {
        let text = r#"{"f": 2, "n": 1, "points": [{"w": 1.0, "v": [0, 0, 1]}]}"#;
        assert!(matches!(parse_config(text), Err(IoError::Invalid(_))));
        let text = r#"{"f": 2, "n": 1, "beta": 0.3, "points": [{"w": 1.0, "v": [0, 0, 1]}]}"#;
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.points[0].p, pauli_embed([0.0, 0.0, 1.0], 0.3));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"{"f": 2, "n": 1, "points": [], "extra": 1}"#;
        assert!(matches!(parse_config(text), Err(IoError::Parse { .. })));
    }

    #[test]
    fn floats_have_seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "0.10000000000000001");
        assert_eq!(fmt_f64(-16.0), "-16.000000000000000");
        assert_eq!(fmt_f64(1e-7), "9.9999999999999995e-8");
        let s = to_json(&vec![1.0 / 3.0, f64::NAN, 0.0]);
        assert!(s.contains("0.33333333333333331") && s.contains("null"), "{s}");
        for x in [1e-5, 9.999999999999999e-6, 123456.789, 1e16 - 2.0, 0.1 + 0.2] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
        let back: Vec<Option<f64>> = serde_json::from_str(&s).unwrap();
        assert_eq!(back[0], Some(1.0 / 3.0));
    }

    #[test]
    fn problem_schema() {
        let text = r#"{"objective": {"T_plus_nuS": 0.5}, "constraints": ["C2", {"C3": [-0.2, 1.0]}],
                       "m": 3, "f": 2, "n": 1, "options": {"seed": 9, "anneal": null}}"#;
        let p = parse_problem(text).unwrap();
        assert_eq!(p.objective, Objective::TPlusNuS(0.5));
        assert_eq!(p.constraints, vec![Constraint::Identity, Constraint::Eigenvalues(vec![-0.2, 1.0])]);
        assert_eq!(p.options.seed, 9);
        assert_eq!(p.options.anneal, None);
        let p = parse_problem(r#"{"objective": "S", "m": 2, "f": 2, "n": 1}"#).unwrap();
        assert_eq!(p.options.anneal, OptimOptions::default().anneal);
    }
}
