//! Generators for the worked examples, each paired with its closed-form expected values.

use crate::causal::{self, CausalClass};
use crate::homogeneous::{self, CylinderGrid, HomError, NegDefMeasure, RadialDomain};
use crate::matlin::{self, c, CMatrix, C64};
use crate::measure::{self, DiscreteConfig, MeasureError};
use crate::quad;
use crate::spectral::{self, SphereConfig};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

pub const NAMES: [&str; 9] = [
    "two_point",
    "illposed",
    "divergent_tau",
    "identity_violation",
    "dirac_sphere_2d",
    "dirac_sphere_3d",
    "discontinuous_moments",
    "bubbling",
    "dirac_cylinder",
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExampleError {
    #[error("unknown example '{0}' (known: {list})", list = NAMES.join(", "))]
    UnknownExample(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Homogeneous(#[from] HomError),
}

/// Signed point masses on the real line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarMeasure {
    /// (position, weight); weights may be negative.
    pub atoms: Vec<(f64, f64)>,
}

impl ScalarMeasure {
    /// ∫ x^k dρ.
    pub fn moment(&self, k: i32) -> f64 {
        self.atoms.iter().map(|(x, w)| w * x.powi(k)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ExampleOutput {
    Discrete(DiscreteConfig),
    Sphere(SphereConfig),
    NegDef(NegDefMeasure),
    Scalar(ScalarMeasure),
}

/// Passes when |computed − value| ≤ abs_tol + rel_tol·|value|.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Expected {
    pub value: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Expected {
    fn abs(value: f64, tol: f64) -> Self {
        Expected { value, rel_tol: 0.0, abs_tol: tol }
    }

    fn rel(value: f64, tol: f64) -> Self {
        Expected { value, rel_tol: tol, abs_tol: 0.0 }
    }

    pub fn accepts(&self, computed: f64) -> bool {
        (computed - self.value).abs() <= self.abs_tol + self.rel_tol * self.value.abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleCase {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub output: ExampleOutput,
    pub expected: BTreeMap<String, Expected>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub quantity: String,
    pub expected: f64,
    pub computed: f64,
    pub tolerance: f64,
    pub pass: bool,
}

struct Params<'a> {
    given: &'a BTreeMap<String, f64>,
    used: BTreeMap<String, f64>,
}

impl<'a> Params<'a> {
    fn get(&mut self, key: &str, default: f64) -> f64 {
        let v = self.given.get(key).copied().unwrap_or(default);
        self.used.insert(key.to_string(), v);
        v
    }

    fn count(&mut self, key: &str, default: usize) -> Result<usize, ExampleError> {
        let v = self.get(key, default as f64);
        if v < 1.0 || v.fract() != 0.0 {
            return Err(ExampleError::InvalidParams(format!("{key} must be a positive integer")));
        }
        Ok(v as usize)
    }

    fn finish(self) -> Result<BTreeMap<String, f64>, ExampleError> {
        if let Some(k) = self.given.keys().find(|k| !self.used.contains_key(*k)) {
            return Err(ExampleError::InvalidParams(format!("unexpected parameter '{k}'")));
        }
        if let Some((k, _)) = self.used.iter().find(|(_, v)| !v.is_finite()) {
            return Err(ExampleError::InvalidParams(format!("{k} must be finite")));
        }
        Ok(self.used)
    }
}

fn require(ok: bool, msg: &str) -> Result<(), ExampleError> {
    if ok {
        Ok(())
    } else {
        Err(ExampleError::InvalidParams(msg.into()))
    }
}

fn pauli_comb(id: f64, v: [f64; 3]) -> CMatrix {
    let s = matlin::pauli();
    let mut m = CMatrix::identity(2).scale(id);
    for k in 0..3 {
        m = &m + &s[k].scale(v[k]);
    }
    m
}

/// Equal weights 1/m.
fn counting(f: usize, n: usize, pts: Vec<CMatrix>) -> DiscreteConfig {
    let w = 1.0 / pts.len() as f64;
    DiscreteConfig::new(f, n, pts.into_iter().map(|p| (w, p)).collect())
}

/// Builds an example. Parameters not given take their documented defaults; unknown
/// parameter names are rejected.
pub fn make(name: &str, params: &BTreeMap<String, f64>) -> Result<ExampleCase, ExampleError> {
    let mut p = Params { given: params, used: BTreeMap::new() };
    let mut expected = BTreeMap::new();
    let output = match name {
        "two_point" => {
            let beta = p.get("beta", 0.3);
            let angle = p.get("angle", PI);
            require((0.0..1.0).contains(&beta), "beta must lie in [0, 1)")?;
            let vs = [[0.0, 0.0, 1.0], [angle.sin(), 0.0, angle.cos()]];
            // the diagonal terms give ¼(1−β²)²; the off-diagonal pair vanishes when spacelike
            let s = 0.25 * (1.0 - beta * beta).powi(2) + 0.5 * spectral::lagrangian_profile(angle.cos(), beta);
            expected.insert("S".into(), Expected::abs(s, 1e-10));
            if angle.cos() < -spectral::causal_shift(beta) {
                expected.insert("S_spacelike".into(), Expected::abs(0.25 * (1.0 - beta * beta).powi(2), 1e-10));
            }
            ExampleOutput::Sphere(SphereConfig::equal_weights(beta, &vs))
        }
        "illposed" => {
            let k = p.get("k", 1.0);
            let nu = p.get("nu", 0.0);
            require(k >= 0.0, "k must be non-negative")?;
            let d = |a: f64, b: f64| CMatrix::from_real_diag(&[a, b]);
            let cfg = counting(2, 1, vec![d(k + 4.0, 0.0), d(0.0, k + 4.0), d(-k, 0.0), d(0.0, -k)]);
            // all chains have rank ≤ 1, so L = ½|A|²
            let sum_sq = 2.0 * (k + 4.0).powi(4) + 2.0 * k.powi(4) + 4.0 * k * k * (k + 4.0).powi(2);
            let value = (1.0 + nu * 0.5) * sum_sq / 16.0;
            expected.insert("T+nuS".into(), Expected { value, rel_tol: 1e-12, abs_tol: 1e-10 });
            expected.insert("C2_residual".into(), Expected::abs(0.0, 1e-12));
            ExampleOutput::Discrete(cfg)
        }
        "divergent_tau" => {
            let tau = p.get("tau", 1.0);
            let off = pauli_comb(0.0, [tau, 0.0, 0.0]);
            let cfg = counting(2, 1, vec![CMatrix::from_real_diag(&[4.0, 0.0]), CMatrix::from_real_diag(&[0.0, 4.0]), off.clone(), off.scale(-1.0)]);
            expected.insert("S".into(), Expected::abs(16.0, 1e-10));
            expected.insert("C2_residual".into(), Expected::abs(0.0, 1e-12));
            ExampleOutput::Discrete(cfg)
        }
        "identity_violation" => {
            let tau = p.get("tau", 2.0);
            require(tau > 1.0, "tau must exceed 1")?;
            let r = (1.0 + tau * tau).sqrt();
            let f1 = pauli_comb(3.0, [0.0, 0.0, 3.0 * r / tau]);
            let f2 = pauli_comb(0.0, [0.0, 1.5 * r, -1.5 * r / tau]);
            let f3 = pauli_comb(0.0, [0.0, -1.5 * r, -1.5 * r / tau]);
            expected.insert("S".into(), Expected { value: 72.0 * (1.0 + tau * tau) / (tau * tau), rel_tol: 1e-12, abs_tol: 1e-10 });
            expected.insert("C2_residual".into(), Expected::abs(0.0, 1e-12));
            ExampleOutput::Discrete(counting(2, 1, vec![f1, f2, f3]))
        }
        "dirac_sphere_2d" => {
            let tau = p.get("tau", 3.0);
            let n = p.count("N", 4000)?;
            require(tau > 1.0, "tau must exceed 1")?;
            let (s, t) = dirac_sphere_2d_closed(tau);
            expected.insert("S".into(), Expected::rel(s, 1e-2));
            expected.insert("T".into(), Expected::rel(t, 1e-2));
            expected.insert("S_quadrature".into(), Expected { value: s, rel_tol: 1e-10, abs_tol: 1e-10 });
            expected.insert("T_quadrature".into(), Expected { value: t, rel_tol: 1e-10, abs_tol: 1e-10 });
            expected.insert("eigen_formula".into(), Expected::abs(0.0, 1e-9));
            let pts = quad::fibonacci_sphere(n).into_iter().map(|x| pauli_comb(1.0, [tau * x[0], tau * x[1], tau * x[2]])).collect();
            ExampleOutput::Discrete(counting(2, 1, pts))
        }
        "dirac_sphere_3d" => {
            let tau = p.get("tau", 2.0);
            let n = p.count("N", 500)?;
            require(tau > 1.0, "tau must exceed 1")?;
            let sq = dirac_sphere_3d_quadrature(tau);
            expected.insert("S".into(), Expected::rel(sq, 5e-2));
            if tau >= 20.0 {
                // the 1/τ law holds up to O(τ⁻²)
                expected.insert("S_quadrature_times_tau".into(), Expected::rel(512.0 / (15.0 * PI), 5e-2));
            }
            ExampleOutput::Discrete(dirac_sphere_3d_config(tau, n))
        }
        "discontinuous_moments" => {
            let tau = p.get("tau", 2.0);
            require(tau > 1.0, "tau must exceed 1")?;
            let atoms = vec![(0.0, 3.0 / tau), (1.0, (tau - 4.0) / (tau - 1.0)), (tau, 3.0 / (tau * tau - tau))];
            expected.insert("moment0".into(), Expected::abs(1.0, 1e-12));
            expected.insert("moment1".into(), Expected::abs(1.0, 1e-12));
            expected.insert("moment2".into(), Expected::abs(4.0, 1e-12));
            ExampleOutput::Scalar(ScalarMeasure { atoms })
        }
        "bubbling" => {
            let eps = p.get("epsilon", 0.1);
            let kappa = p.get("kappa", 1.0);
            let n = p.count("N", 256)?;
            require(eps > 0.0 && eps < 0.5, "epsilon must lie in (0, 1/2)")?;
            require(kappa >= 0.0, "kappa must be non-negative")?;
            let s = 1.0 / (1.0 - 2.0 * eps);
            expected.insert("S".into(), Expected::rel(3.0 * s * s, 1e-2));
            expected.insert("T".into(), Expected::rel(6.0 * s * s + 16.0 * kappa * kappa * s.powi(3) + 16.0 * kappa.powi(4) * s.powi(4), 2e-2));
            expected.insert("C2_residual".into(), Expected::abs(0.0, 1e-9));
            expected.insert("pole_pairs_timelike".into(), Expected::abs(0.0, 0.0));
            expected.insert("m0_poles".into(), Expected::abs(eps, 1e-12));
            if kappa > 0.0 {
                expected.insert("m2_poles".into(), Expected::rel(kappa * kappa, 2e-2));
            }
            ExampleOutput::Discrete(bubbling_config(eps, kappa, n))
        }
        "dirac_cylinder" => {
            let tau = p.get("tau", 2.0);
            let l = p.get("L", 1.0);
            require(tau > 0.0 && l > 0.0, "tau and L must be positive")?;
            let t = PI.powi(3) * (3.0 * tau.powi(4) + 10.0 * tau * tau + 15.0) / (90.0 * l);
            expected.insert("T".into(), Expected::rel(t, 5e-3));
            expected.insert("TrP0".into(), Expected::abs(1.0, 1e-10));
            expected.insert("local_bound_slack_negative".into(), Expected::abs(0.0, 0.0));
            if tau >= 20.0 {
                expected.insert("S_times_Ltau".into(), Expected::rel(3.0 * PI * PI / 5.0, 5e-2));
            }
            ExampleOutput::NegDef(homogeneous::dirac_cylinder(tau, l, CylinderGrid::default()))
        }
        other => return Err(ExampleError::UnknownExample(other.to_string())),
    };
    let params = p.finish()?;
    Ok(ExampleCase { name: name.to_string(), params, output, expected })
}

/// Closed forms 4 − 4/(3τ²) and 4τ²(τ²−2) + 12 − 8/(3τ²).
pub fn dirac_sphere_2d_closed(tau: f64) -> (f64, f64) {
    let t2 = tau * tau;
    (4.0 - 4.0 / (3.0 * t2), 4.0 * t2 * (t2 - 2.0) + 12.0 - 8.0 / (3.0 * t2))
}

/// Eigenvalues 1 + τ² cos ϑ ± τ √(1+cos ϑ) √(2 − τ²(1−cos ϑ)) of F(x)F(y).
pub fn dirac_sphere_eigenvalues(tau: f64, cos_theta: f64) -> [C64; 2] {
    let a = 1.0 + tau * tau * cos_theta;
    let r = tau * (1.0 + cos_theta).max(0.0).sqrt() * C64::new(2.0 - tau * tau * (1.0 - cos_theta), 0.0).sqrt();
    [a + r, a - r]
}

/// S and T of the two-dimensional Dirac sphere by one-dimensional Gauss–Legendre quadrature
/// in c = cos ϑ (the integrands are polynomials on each piece).
pub fn dirac_sphere_2d_quadrature(tau: f64) -> (f64, f64) {
    let t2 = tau * tau;
    let c_max = 1.0 - 2.0 / t2;
    let (xs, ws) = quad::gauss_legendre_on(c_max, 1.0, 8);
    let mut s = 0.0;
    let mut t = 0.0;
    for (x, w) in xs.iter().zip(&ws) {
        s += 0.5 * w * 2.0 * t2 * (1.0 + x) * (2.0 - t2 * (1.0 - x));
        // real eigenvalues of equal sign: |A| = |λ₁ + λ₂|
        t += 0.5 * w * (2.0 * (1.0 + t2 * x)).powi(2);
    }
    // complex pair of modulus √(λ₁λ₂) = τ² − 1
    t += 0.5 * (c_max + 1.0) * (2.0 * (t2 - 1.0)).powi(2);
    (s, t)
}

/// (2/π) ∫₀^ϑmax 4τ²(1+cos ϑ)(2 − τ²(1−cos ϑ)) sin²ϑ dϑ.
pub fn dirac_sphere_3d_quadrature(tau: f64) -> f64 {
    let t2 = tau * tau;
    let th_max = (1.0 - 2.0 / t2).acos();
    let (xs, ws) = quad::composite(&(0..=8).map(|k| th_max * k as f64 / 8.0).collect::<Vec<_>>(), 24);
    let s: f64 = xs
        .iter()
        .zip(&ws)
        .map(|(th, w)| {
            let c = th.cos();
            w * 4.0 * t2 * (1.0 + c) * (2.0 - t2 * (1.0 - c)) * th.sin().powi(2)
        })
        .sum();
    2.0 / PI * s
}

/// Euclidean Dirac matrices γ^α = diag(σ^α, −σ^α), γ⁴ = [[0, 1], [1, 0]].
pub fn euclidean_gammas() -> [CMatrix; 4] {
    let s = matlin::pauli();
    let block = |a: &CMatrix, sign: f64| CMatrix::from_fn(4, |i, j| if i < 2 && j < 2 { a[(i, j)] } else if i >= 2 && j >= 2 { a[(i - 2, j - 2)] * sign } else { c(0.0, 0.0) });
    let g4 = CMatrix::from_fn(4, |i, j| if (i + 2 == j) || (j + 2 == i) { c(1.0, 0.0) } else { c(0.0, 0.0) });
    [block(&s[0], -1.0), block(&s[1], -1.0), block(&s[2], -1.0), g4]
}

/// S³ as x = (cos ψ, sin ψ·e) with Gauss–Legendre nodes in ψ (weight (2/π) sin²ψ) times a
/// Fibonacci lattice on S², about ∛N × N^⅔ points; F(x) = τ x·γ + 1.
pub fn dirac_sphere_3d_config(tau: f64, n: usize) -> DiscreteConfig {
    let n_psi = ((n as f64).cbrt().round() as usize).max(1);
    let n_s2 = (n / n_psi).max(1);
    let (ps, pw) = quad::gauss_legendre_on(0.0, PI, n_psi);
    let dirs = quad::fibonacci_sphere(n_s2);
    let g = euclidean_gammas();
    let mut pts = Vec::with_capacity(n_psi * n_s2);
    for (psi, wp) in ps.iter().zip(&pw) {
        let w = 2.0 / PI * psi.sin().powi(2) * wp / n_s2 as f64;
        for e in &dirs {
            let x = [psi.sin() * e[0], psi.sin() * e[1], psi.sin() * e[2], psi.cos()];
            let mut m = CMatrix::identity(4);
            for k in 0..4 {
                m = &m + &g[k].scale(tau * x[k]);
            }
            pts.push((w, m));
        }
    }
    // the ψ rule integrates sin²ψ only approximately; renormalize the total weight to one
    let tot: f64 = pts.iter().map(|(w, _)| w).sum();
    DiscreteConfig::new(4, 2, pts.into_iter().map(|(w, m)| (w / tot, m)).collect())
}

/// Circle points (1 + cos φ σ¹ + sin φ σ²)/(1−2ε) at N equally spaced angles carrying the
/// mass 1 − 2ε, and poles ±κ ε^{−½} σ³/(1−2ε) of mass ε each.
pub fn bubbling_config(eps: f64, kappa: f64, n: usize) -> DiscreteConfig {
    let s = 1.0 / (1.0 - 2.0 * eps);
    let mut pts = Vec::with_capacity(n + 2);
    for k in 0..n {
        let phi = 2.0 * PI * k as f64 / n as f64;
        pts.push(((1.0 - 2.0 * eps) / n as f64, pauli_comb(s, [s * phi.cos(), s * phi.sin(), 0.0])));
    }
    let a = kappa / eps.sqrt() * s;
    pts.push((eps, pauli_comb(0.0, [0.0, 0.0, a])));
    pts.push((eps, pauli_comb(0.0, [0.0, 0.0, -a])));
    DiscreteConfig::new(2, 1, pts)
}

fn identity_residual(cfg: &DiscreteConfig) -> f64 {
    (&cfg.weighted_sum() - &CMatrix::identity(cfg.f)).max_abs()
}

/// Computes every quantity listed in the expected map.
pub fn evaluate(case: &ExampleCase) -> Result<BTreeMap<String, f64>, ExampleError> {
    let mut out = BTreeMap::new();
    match &case.output {
        ExampleOutput::Sphere(sc) => {
            let s = sc.action();
            out.insert("S".into(), s);
            if case.expected.contains_key("S_spacelike") {
                out.insert("S_spacelike".into(), s);
            }
        }
        ExampleOutput::Scalar(m) => {
            for k in 0..3 {
                out.insert(format!("moment{k}"), m.moment(k));
            }
        }
        ExampleOutput::Discrete(cfg) => {
            let wants = |k: &str| case.expected.contains_key(k);
            if wants("S") || wants("T") || wants("T+nuS") {
                let (s, t) = measure::functionals(cfg)?;
                if wants("S") {
                    out.insert("S".into(), s);
                }
                if wants("T") {
                    out.insert("T".into(), t);
                }
                if wants("T+nuS") {
                    out.insert("T+nuS".into(), t + case.params["nu"] * s);
                }
            }
            if wants("C2_residual") {
                out.insert("C2_residual".into(), identity_residual(cfg));
            }
            if wants("S_quadrature") {
                let (s, t) = dirac_sphere_2d_quadrature(case.params["tau"]);
                out.insert("S_quadrature".into(), s);
                out.insert("T_quadrature".into(), t);
            }
            if wants("S_quadrature_times_tau") {
                let tau = case.params["tau"];
                out.insert("S_quadrature_times_tau".into(), dirac_sphere_3d_quadrature(tau) * tau);
            }
            if wants("eigen_formula") {
                out.insert("eigen_formula".into(), eigen_formula_deviation(cfg, case.params["tau"])?);
            }
            if wants("pole_pairs_timelike") {
                let m = cfg.points.len();
                let mut timelike = 0;
                for i in m - 2..m {
                    for j in 0..m {
                        if causal::classify(&cfg.points[i].p, &cfg.points[j].p, 1).map_err(MeasureError::from)? == CausalClass::Timelike {
                            timelike += 1;
                        }
                    }
                }
                out.insert("pole_pairs_timelike".into(), timelike as f64);
            }
            if wants("m0_poles") || wants("m2_poles") {
                let md = measure::moments(cfg);
                let pole = cfg.points.last().unwrap().p.clone();
                let dir = pole.scale(1.0 / pole.frob_norm());
                let ray = md.rays.iter().find(|r| r.dir.dist(&dir) < 1e-9 || r.dir.dist(&dir.scale(-1.0)) < 1e-9);
                let (a0, a2) = ray.map(|r| (r.a0, r.a2)).unwrap_or((0.0, 0.0));
                out.insert("m0_poles".into(), a0);
                out.insert("m2_poles".into(), a2);
            }
        }
        ExampleOutput::NegDef(nu) => {
            let tau = case.params["tau"];
            let l = case.params["L"];
            out.insert("TrP0".into(), nu.total().trace().re);
            let lb = homogeneous::local_bound_check(nu)?;
            out.insert("local_bound_slack_negative".into(), if lb.holds { 0.0 } else { 1.0 });
            let rep = homogeneous::radial_functionals(nu, &RadialDomain::for_cylinder(l, 400.0))?;
            out.insert("T".into(), rep.t);
            out.insert("T_trace_sq".into(), rep.t_trace_sq);
            out.insert("S".into(), rep.s);
            out.insert("S_times_Ltau".into(), rep.s * l * tau);
            out.insert("S_central_times_Ltau".into(), rep.s_central * l * tau);
        }
    }
    Ok(out)
}

/// Largest deviation between the eigenvalue formula and the computed spectrum of F(x)F(y)
/// over a sample of point pairs.
fn eigen_formula_deviation(cfg: &DiscreteConfig, tau: f64) -> Result<f64, ExampleError> {
    let m = cfg.points.len();
    let stride = (m / 40).max(1);
    let mut worst = 0.0f64;
    for i in (0..m).step_by(stride) {
        for j in (0..m).step_by(stride) {
            let (p, q) = (&cfg.points[i].p, &cfg.points[j].p);
            // recover x·y from the traceless parts: F = τ x·σ + 1
            let cos = (&(p - &CMatrix::identity(2)) * &(q - &CMatrix::identity(2))).trace().re / (2.0 * tau * tau);
            let mut want = dirac_sphere_eigenvalues(tau, cos.clamp(-1.0, 1.0)).to_vec();
            let mut got = matlin::eigenvalues(&(p * q)).map_err(MeasureError::from)?.eigenvalues;
            let key = |z: &C64| (z.re, z.im);
            want.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
            got.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
            for (a, b) in want.iter().zip(&got) {
                worst = worst.max((a - b).norm() / (1.0 + a.norm()));
            }
        }
    }
    Ok(worst)
}

/// Evaluates and compares against the expected map, in key order.
pub fn verify(case: &ExampleCase) -> Result<Vec<CheckRow>, ExampleError> {
    let vals = evaluate(case)?;
    Ok(case
        .expected
        .iter()
        .map(|(k, e)| {
            let computed = vals.get(k).copied().unwrap_or(f64::NAN);
            CheckRow { quantity: k.clone(), expected: e.value, computed, tolerance: e.abs_tol + e.rel_tol * e.value.abs(), pass: e.accepts(computed) }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(kv: &[(&str, f64)]) -> BTreeMap<String, f64> {
        kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn unknown_names_and_params() {
        assert!(matches!(make("nope", &BTreeMap::new()), Err(ExampleError::UnknownExample(_))));
        assert!(matches!(make("two_point", &params(&[("gamma", 1.0)])), Err(ExampleError::InvalidParams(_))));
        assert!(matches!(make("identity_violation", &params(&[("tau", 0.5)])), Err(ExampleError::InvalidParams(_))));
        assert!(matches!(make("dirac_sphere_2d", &params(&[("N", 2.5)])), Err(ExampleError::InvalidParams(_))));
    }

    #[test]
    fn defaults_are_recorded() {
        let case = make("bubbling", &BTreeMap::new()).unwrap();
        assert_eq!(case.params["epsilon"], 0.1);
        assert_eq!(case.params["N"], 256.0);
    }

    #[test]
    fn discontinuous_moments_at_two() {
        let case = make("discontinuous_moments", &params(&[("tau", 2.0)])).unwrap();
        let ExampleOutput::Scalar(m) = &case.output else { panic!() };
        assert_eq!(m.atoms, vec![(0.0, 1.5), (1.0, -2.0), (2.0, 1.5)]);
        assert_eq!((m.moment(0), m.moment(1), m.moment(2)), (1.0, 1.0, 4.0));
    }

    #[test]
    fn euclidean_gammas_anticommute() {
        let g = euclidean_gammas();
        for i in 0..4 {
            for j in 0..4 {
                let ac = &(&g[i] * &g[j]) + &(&g[j] * &g[i]);
                let want = if i == j { CMatrix::identity(4).scale(2.0) } else { CMatrix::zeros(4) };
                assert!(ac.dist(&want) < 1e-15);
            }
        }
    }

    #[test]
    fn sphere_2d_quadrature_matches_closed_form() {
        for tau in [1.5, 2.0, 3.0, 7.0] {
            let (s, t) = dirac_sphere_2d_quadrature(tau);
            let (se, te) = dirac_sphere_2d_closed(tau);
            assert!((s - se).abs() < 1e-10 * se, "{s} {se}");
            assert!((t - te).abs() < 1e-10 * te, "{t} {te}");
        }
    }
}
