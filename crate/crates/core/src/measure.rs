//! Discrete measures on the matrix cone: the functionals S and T, the constraints,
//! moment measures and the moment projection.

use crate::causal::{self, CausalClass, CausalError};
use crate::matlin::{self, c, small_eigenvalues, tree_sum, CMatrix, LinalgError, C64, TOL_RANK};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Tolerance for the eigenvalue sign count of a point.
const TOL_SIGN: f64 = 1e-9;
/// Directions closer than this (Frobenius distance) are one ray.
pub const RAY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeasureError {
    #[error("point {index}: {reason}")]
    InvalidPoint { index: usize, reason: String },
    #[error("point {0}: weight must be positive and finite")]
    BadWeight(usize),
    #[error("need f >= 2n >= 2, got f = {f}, n = {n}")]
    BadShape { f: usize, n: usize },
    #[error(transparent)]
    Causal(#[from] CausalError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedPoint {
    pub w: f64,
    pub p: CMatrix,
}

/// ρ = Σ w_i δ_{p_i} on the set of Hermitian f×f matrices of rank ≤ 2n with at most n
/// positive and n negative eigenvalues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteConfig {
    pub f: usize,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub points: Vec<WeightedPoint>,
}

/// Checks the rank and signature conditions of a single point.
pub fn validate_point(p: &CMatrix, n: usize) -> Result<(), String> {
    if !p.is_hermitian() {
        return Err(format!("not Hermitian (defect {:.3e})", p.hermitian_defect()));
    }
    let (vals, _) = matlin::herm_eigen(p).map_err(|e| e.to_string())?;
    let tol = TOL_SIGN.max(TOL_RANK * p.frob_norm());
    let pos = vals.iter().filter(|&&v| v > tol).count();
    let neg = vals.iter().filter(|&&v| v < -tol).count();
    if pos > n || neg > n {
        return Err(format!("{pos} positive and {neg} negative eigenvalues, at most {n} of each allowed"));
    }
    Ok(())
}

impl DiscreteConfig {
    pub fn new(f: usize, n: usize, points: Vec<(f64, CMatrix)>) -> Self {
        DiscreteConfig {
            f,
            n,
            beta: None,
            points: points.into_iter().map(|(w, p)| WeightedPoint { w, p }).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), MeasureError> {
        if self.n == 0 || self.f < 2 * self.n || self.f > matlin::MAX_DIM {
            return Err(MeasureError::BadShape { f: self.f, n: self.n });
        }
        for (index, wp) in self.points.iter().enumerate() {
            if !(wp.w.is_finite() && wp.w > 0.0) {
                return Err(MeasureError::BadWeight(index));
            }
            if wp.p.dim() != self.f {
                return Err(MeasureError::InvalidPoint { index, reason: format!("dimension {} != f", wp.p.dim()) });
            }
            validate_point(&wp.p, self.n).map_err(|reason| MeasureError::InvalidPoint { index, reason })?;
        }
        Ok(())
    }

    pub fn total_weight(&self) -> f64 {
        tree_sum(&self.points.iter().map(|p| p.w).collect::<Vec<_>>())
    }

    pub fn is_normalized(&self) -> bool {
        (self.total_weight() - 1.0).abs() <= 1e-12
    }

    /// Σ w p.
    pub fn weighted_sum(&self) -> CMatrix {
        let mut s = CMatrix::zeros(self.f);
        for wp in &self.points {
            s = &s + &wp.p.scale(wp.w);
        }
        s
    }

    /// Conjugates every point by the unitary `u`.
    pub fn conjugated(&self, u: &CMatrix) -> Self {
        let mut out = self.clone();
        for wp in out.points.iter_mut() {
            wp.p = wp.p.conjugate_by(u);
        }
        out
    }
}

/// Per-point data for fast evaluation of pair spectra.
enum PairEngine {
    /// f = 2: the raw 2×2 matrices.
    Two(Vec<[C64; 4]>),
    /// Eigen-factorization p = U diag(d) U* restricted to the nonzero eigenvalues.
    General(Vec<(Vec<C64>, Vec<f64>)>),
}

impl PairEngine {
    fn new(f: usize, points: &[&CMatrix]) -> Result<Self, MeasureError> {
        if f == 2 {
            return Ok(PairEngine::Two(points.iter().map(|p| [p[(0, 0)], p[(0, 1)], p[(1, 0)], p[(1, 1)]]).collect()));
        }
        let factors = points
            .par_iter()
            .map(|p| {
                let (vals, u) = matlin::herm_eigen(p)?;
                let tol = TOL_RANK * p.frob_norm();
                let keep: Vec<usize> = (0..f).filter(|&k| vals[k].abs() > tol).collect();
                let r = keep.len();
                let mut cols = vec![c(0.0, 0.0); f * r];
                for i in 0..f {
                    for (j, &k) in keep.iter().enumerate() {
                        cols[i * r + j] = u[(i, k)];
                    }
                }
                Ok((cols, keep.iter().map(|&k| vals[k]).collect()))
            })
            .collect::<Result<Vec<_>, LinalgError>>()?;
        Ok(PairEngine::General(factors))
    }

    /// The 2n leading chain eigenvalues of p_i·p_j, written into `out` (length 2n).
    fn eigs(&self, f: usize, i: usize, j: usize, out: &mut [C64]) -> Result<(), MeasureError> {
        out.fill(c(0.0, 0.0));
        match self {
            PairEngine::Two(m) => {
                let (a, b) = (&m[i], &m[j]);
                let prod = [
                    a[0] * b[0] + a[1] * b[2],
                    a[0] * b[1] + a[1] * b[3],
                    a[2] * b[0] + a[3] * b[2],
                    a[2] * b[1] + a[3] * b[3],
                ];
                let e = small_eigenvalues(&prod);
                out[..2].copy_from_slice(&e);
            }
            PairEngine::General(fac) => {
                let ((ui, di), (uj, dj)) = (&fac[i], &fac[j]);
                let (ri, rj) = (di.len(), dj.len());
                if ri == 0 || rj == 0 {
                    return Ok(());
                }
                // nonzero spectrum of p_i p_j equals that of diag(d_i)·M·diag(d_j)·M*, M = U_i* U_j
                let mut m = vec![c(0.0, 0.0); ri * rj];
                for a in 0..ri {
                    for b in 0..rj {
                        let mut s = c(0.0, 0.0);
                        for k in 0..f {
                            s += ui[k * ri + a].conj() * uj[k * rj + b];
                        }
                        m[a * rj + b] = s;
                    }
                }
                let bmat = CMatrix::from_fn(ri, |a, b| {
                    let mut s = c(0.0, 0.0);
                    for k in 0..rj {
                        s += m[a * rj + k] * dj[k] * m[b * rj + k].conj();
                    }
                    s * di[a]
                });
                let spec = if ri <= 2 {
                    small_eigenvalues(bmat.data())[..ri].to_vec()
                } else {
                    matlin::eigenvalues(&bmat)?.eigenvalues
                };
                let mut spec = spec;
                spec.sort_by(|x, y| y.norm().total_cmp(&x.norm()));
                let k = spec.len().min(out.len());
                if spec[k..].iter().any(|z| z.norm() > TOL_RANK * bmat.frob_norm()) {
                    return Err(CausalError::RankTooHigh { rank: spec.len(), max: out.len() }.into());
                }
                out[..k].copy_from_slice(&spec[..k]);
            }
        }
        Ok(())
    }
}

/// Row-wise accumulation over the upper triangle of the pair matrix. Each row is summed
/// sequentially and rows are combined by a fixed pairwise tree, so the result does not
/// depend on the number of worker threads.
fn pair_sums(f: usize, n: usize, weights: &[f64], points: &[&CMatrix]) -> Result<(f64, f64), MeasureError> {
    let engine = PairEngine::new(f, points)?;
    let m = points.len();
    let rows: Vec<(f64, f64)> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut eigs = vec![c(0.0, 0.0); 2 * n];
            let (mut s, mut t) = (0.0, 0.0);
            for j in i..m {
                engine.eigs(f, i, j, &mut eigs)?;
                let mult = if i == j { 1.0 } else { 2.0 };
                let ww = mult * weights[i] * weights[j];
                s += ww * causal::lagrangian_from_eigs(&eigs);
                t += ww * causal::weight_sq_from_eigs(&eigs);
            }
            Ok((s, t))
        })
        .collect::<Result<_, MeasureError>>()?;
    let s: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let t: Vec<f64> = rows.iter().map(|r| r.1).collect();
    Ok((tree_sum(&s), tree_sum(&t)))
}

/// (S, T) in one pass over the pairs.
pub fn functionals(cfg: &DiscreteConfig) -> Result<(f64, f64), MeasureError> {
    let w: Vec<f64> = cfg.points.iter().map(|p| p.w).collect();
    let pts: Vec<&CMatrix> = cfg.points.iter().map(|p| &p.p).collect();
    pair_sums(cfg.f, cfg.n, &w, &pts)
}

/// S = ΣΣ w_i w_j L[p_i p_j].
pub fn action_s(cfg: &DiscreteConfig) -> Result<f64, MeasureError> {
    Ok(functionals(cfg)?.0)
}

/// T = ΣΣ w_i w_j |p_i p_j|².
pub fn functional_t(cfg: &DiscreteConfig) -> Result<f64, MeasureError> {
    Ok(functionals(cfg)?.1)
}

/// Counts of causal classes over unordered pairs of distinct points.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Census {
    pub timelike: usize,
    pub spacelike: usize,
    pub lightlike: usize,
}

pub fn causal_census(cfg: &DiscreteConfig) -> Result<Census, MeasureError> {
    let pts: Vec<&CMatrix> = cfg.points.iter().map(|p| &p.p).collect();
    let engine = PairEngine::new(cfg.f, &pts)?;
    let m = pts.len();
    let rows = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut eigs = vec![c(0.0, 0.0); 2 * cfg.n];
            let mut cen = Census::default();
            for j in i + 1..m {
                engine.eigs(cfg.f, i, j, &mut eigs)?;
                match causal::classify_eigs(&eigs) {
                    CausalClass::Timelike => cen.timelike += 1,
                    CausalClass::Spacelike => cen.spacelike += 1,
                    CausalClass::Lightlike => cen.lightlike += 1,
                }
            }
            Ok(cen)
        })
        .collect::<Result<Vec<_>, MeasureError>>()?;
    Ok(rows.iter().fold(Census::default(), |a, b| Census {
        timelike: a.timelike + b.timelike,
        spacelike: a.spacelike + b.spacelike,
        lightlike: a.lightlike + b.lightlike,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Constraint {
    /// ∫ Tr F = f.
    Trace,
    /// ∫ F = 1.
    Identity,
    /// Prescribed eigenvalues (c_1, …, c_2n) in the order negatives then positives.
    Eigenvalues(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub trace_residual: f64,
    pub identity_residual: f64,
    pub eigen_residual: Option<f64>,
    pub tolerance: f64,
    pub satisfied: Vec<(String, bool)>,
}

/// The 2n eigenvalues of a point in the order ν_1 ≤ … ≤ ν_n ≤ 0 ≤ ν_{n+1} ≤ … ≤ ν_2n.
pub fn ordered_eigenvalues(p: &CMatrix, n: usize) -> Result<Vec<f64>, LinalgError> {
    let (vals, _) = matlin::herm_eigen(p)?;
    let f = vals.len();
    let mut out: Vec<f64> = vals[..n].iter().map(|v| v.min(0.0)).collect();
    out.extend(vals[f - n..].iter().map(|v| v.max(0.0)));
    Ok(out)
}

pub fn check_constraints(cfg: &DiscreteConfig, which: &[Constraint], tol: f64) -> Result<ConstraintReport, MeasureError> {
    let sum = cfg.weighted_sum();
    let trace_residual = (sum.trace().re - cfg.f as f64).abs();
    let identity_residual = (&sum - &CMatrix::identity(cfg.f)).frob_norm();
    let mut eigen_residual = None;
    let mut satisfied = Vec::new();
    for cst in which {
        match cst {
            Constraint::Trace => satisfied.push(("C1".to_string(), trace_residual <= tol)),
            Constraint::Identity => satisfied.push(("C2".to_string(), identity_residual <= tol)),
            Constraint::Eigenvalues(target) => {
                let mut worst: f64 = 0.0;
                for wp in &cfg.points {
                    let ev = ordered_eigenvalues(&wp.p, cfg.n)?;
                    for (a, b) in ev.iter().zip(target) {
                        worst = worst.max((a - b).abs());
                    }
                    if target.len() != ev.len() {
                        worst = f64::INFINITY;
                    }
                }
                eigen_residual = Some(worst);
                satisfied.push(("C3".to_string(), worst <= tol));
            }
        }
    }
    Ok(ConstraintReport { trace_residual, identity_residual, eigen_residual, tolerance: tol, satisfied })
}

/// One ray class {q, −q} of the unit sphere in the Frobenius norm, stored at its canonical
/// representative q. The values at −q are (a0, −a1, a2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub dir: CMatrix,
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentData {
    pub f: usize,
    pub n: usize,
    pub zero_mass: f64,
    pub rays: Vec<Ray>,
}

/// Sign σ ∈ {±1} such that σ·q is the canonical representative of {q, −q}: the first
/// nonzero diagonal entry is positive; for a vanishing diagonal, the first nonzero
/// off-diagonal entry (row-major) has positive real part, or zero real part and positive
/// imaginary part.
pub fn canonical_sign(q: &CMatrix) -> f64 {
    let tol = 1e-12 * (1.0 + q.max_abs());
    let f = q.dim();
    for i in 0..f {
        let d = q[(i, i)].re;
        if d.abs() > tol {
            return d.signum();
        }
    }
    for i in 0..f {
        for j in 0..f {
            if i != j {
                let z = q[(i, j)];
                if z.re.abs() > tol {
                    return z.re.signum();
                }
                if z.im.abs() > tol {
                    return z.im.signum();
                }
            }
        }
    }
    1.0
}

pub fn moments(cfg: &DiscreteConfig) -> MomentData {
    let mut md = MomentData { f: cfg.f, n: cfg.n, zero_mass: 0.0, rays: Vec::new() };
    for wp in &cfg.points {
        let norm = wp.p.frob_norm();
        if norm == 0.0 {
            md.zero_mass += wp.w;
            continue;
        }
        let q = wp.p.scale(1.0 / norm);
        let s = canonical_sign(&q);
        let rep = q.scale(s);
        let idx = match md.rays.iter().position(|r| r.dir.dist(&rep) <= RAY_TOL) {
            Some(i) => i,
            None => {
                md.rays.push(Ray { dir: rep, a0: 0.0, a1: 0.0, a2: 0.0 });
                md.rays.len() - 1
            }
        };
        let r = &mut md.rays[idx];
        r.a0 += 0.5 * wp.w;
        r.a1 += 0.5 * s * wp.w * norm;
        r.a2 += 0.5 * wp.w * norm * norm;
    }
    md
}

impl MomentData {
    /// m⁽⁰⁾(K) = zero mass + 2 Σ a0.
    pub fn total_mass(&self) -> f64 {
        self.zero_mass + 2.0 * tree_sum(&self.rays.iter().map(|r| r.a0).collect::<Vec<_>>())
    }

    /// ∫ p dm⁽¹⁾ over K, which equals Σ w p of the source configuration.
    pub fn first_moment_sum(&self) -> CMatrix {
        let mut s = CMatrix::zeros(self.f);
        for r in &self.rays {
            s = &s + &r.dir.scale(2.0 * r.a1);
        }
        s
    }
}

/// S from the second moment measure, with both mirror directions of every ray expanded.
pub fn action_from_moments(m: &MomentData) -> Result<f64, MeasureError> {
    Ok(moment_functionals(m)?.0)
}

pub fn t_from_moments(m: &MomentData) -> Result<f64, MeasureError> {
    Ok(moment_functionals(m)?.1)
}

fn moment_functionals(m: &MomentData) -> Result<(f64, f64), MeasureError> {
    // L and |·|² are even in each argument, so the four sign combinations of a pair of
    // rays contribute equally: ΣΣ (2 a2)(2 a2) L[q q'].
    let w: Vec<f64> = m.rays.iter().map(|r| 2.0 * r.a2).collect();
    let pts: Vec<&CMatrix> = m.rays.iter().map(|r| &r.dir).collect();
    if pts.is_empty() {
        return Ok((0.0, 0.0));
    }
    pair_sums(m.f, m.n, &w, &pts)
}

/// Replaces the mass on each ray pair by one point f(q)·q of weight 2 m⁽⁰⁾({q}), with
/// f = m⁽¹⁾/m⁽⁰⁾. The zero mass stays at the zero matrix.
pub fn project_moments(cfg: &DiscreteConfig) -> DiscreteConfig {
    let md = moments(cfg);
    let mut points = Vec::new();
    let mut zero = md.zero_mass;
    for r in &md.rays {
        let fq = if r.a0 > 0.0 { r.a1 / r.a0 } else { 0.0 };
        if fq == 0.0 {
            zero += 2.0 * r.a0;
        } else {
            points.push(WeightedPoint { w: 2.0 * r.a0, p: r.dir.scale(fq) });
        }
    }
    if zero > 0.0 {
        points.push(WeightedPoint { w: zero, p: CMatrix::zeros(cfg.f) });
    }
    DiscreteConfig { f: cfg.f, n: cfg.n, beta: cfg.beta, points }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub rays_checked: usize,
    pub unions_checked: usize,
    /// min over the tested sets of m⁽⁰⁾m⁽²⁾ − (m⁽¹⁾)².
    pub worst_slack: f64,
    pub holds: bool,
}

/// Checks (m⁽¹⁾(Ω))² ≤ m⁽⁰⁾(Ω) m⁽²⁾(Ω) on every single ray and on `unions` random unions
/// of rays (each ray entering with a random sign).
pub fn moment_inequalities(m: &MomentData, unions: usize, seed: u64) -> InequalityReport {
    let mut worst = f64::INFINITY;
    let mut tol_scale: f64 = 0.0;
    for r in &m.rays {
        worst = worst.min(r.a0 * r.a2 - r.a1 * r.a1);
        tol_scale = tol_scale.max(r.a0 * r.a2);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    if !m.rays.is_empty() {
        for _ in 0..unions {
            let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
            for r in &m.rays {
                match rng.gen_range(0..3) {
                    0 => {}
                    k => {
                        let sign = if k == 1 { 1.0 } else { -1.0 };
                        s0 += r.a0;
                        s1 += sign * r.a1;
                        s2 += r.a2;
                    }
                }
            }
            worst = worst.min(s0 * s2 - s1 * s1);
            tol_scale = tol_scale.max(s0 * s2);
            checked += 1;
        }
    }
    if !worst.is_finite() {
        worst = 0.0;
    }
    InequalityReport {
        rays_checked: m.rays.len(),
        unions_checked: checked,
        worst_slack: worst,
        holds: worst >= -1e-12 * (1.0 + tol_scale),
    }
}
