//! Numerical minimization of S, T + νS and S under T ≤ C over discrete configurations with
//! the normalized counting measure, and of S over points on the sphere (f = 2).

use crate::causal;
use crate::matlin::{self, c, CMatrix, C64};
use crate::measure::{self, check_constraints, Constraint, ConstraintReport, DiscreteConfig, MeasureError};
use crate::spectral::{dot, lagrangian_profile, lagrangian_profile_derivative, SphereConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Final tolerance on the C1/C2 residuals.
pub const FEASIBILITY_TOL: f64 = 1e-6;
/// Point norms beyond this count as escaping to infinity.
const DIVERGENCE_NORM: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OptimError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("no run reached stationarity (best value {best}, gradient norm {grad:e})")]
    NonConvergence { best: f64, grad: f64 },
    #[error("objective unbounded below: value {value:e} with point norm {norm:e}")]
    IllPosed { value: f64, norm: f64 },
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Objective {
    S,
    TPlusNuS(f64),
    SWithTCap(f64),
}

impl Objective {
    /// Coefficients (of S, of T) in the objective.
    fn coefficients(&self) -> (f64, f64) {
        match *self {
            Objective::S | Objective::SWithTCap(_) => (1.0, 0.0),
            Objective::TPlusNuS(nu) => (nu, 1.0),
        }
    }

    pub fn evaluate(&self, s: f64, t: f64) -> f64 {
        let (a, b) = self.coefficients();
        a * s + b * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub steps: usize,
    pub t0: f64,
    pub cooling: f64,
    /// Size of the random frame perturbation.
    pub kick: f64,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        AnnealSchedule { steps: 300, t0: 1e-2, cooling: 0.98, kick: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimOptions {
    pub max_iters: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Initial step length.
    pub step: f64,
    /// Stationarity tolerance on the projected gradient norm.
    pub tol: f64,
    /// Used for n ≥ 2 when present.
    #[serde(default)]
    pub anneal: Option<AnnealSchedule>,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions { max_iters: 2000, restarts: 8, seed: 0, step: 0.1, tol: 1e-6, anneal: Some(AnnealSchedule::default()) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimProblem {
    pub objective: Objective,
    #[serde(default)]
    pub constraints: Vec<Constraint>,
    pub m: usize,
    pub f: usize,
    pub n: usize,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub options: OptimOptions,
    /// Starting configuration for the first restart.
    #[serde(default)]
    pub start: Option<DiscreteConfig>,
}

impl OptimProblem {
    /// ν at or below this makes T + νS unbounded below.
    pub fn nu_bound(n: usize) -> f64 {
        -(2.0 * n as f64) / (2.0 * n as f64 - 1.0)
    }

    fn eigen_target(&self) -> Option<&Vec<f64>> {
        self.constraints.iter().find_map(|c| match c {
            Constraint::Eigenvalues(v) => Some(v),
            _ => None,
        })
    }

    fn has(&self, which: &Constraint) -> bool {
        self.constraints.iter().any(|c| std::mem::discriminant(c) == std::mem::discriminant(which))
    }

    pub fn validate(&self) -> Result<(), OptimError> {
        if self.m == 0 {
            return Err(OptimError::InvalidProblem("m must be at least 1".into()));
        }
        if self.n == 0 || self.f < 2 * self.n || self.f > matlin::MAX_DIM {
            return Err(OptimError::InvalidProblem(format!("need 2 <= 2n <= f <= {}, got f = {}, n = {}", matlin::MAX_DIM, self.f, self.n)));
        }
        if self.options.restarts == 0 {
            return Err(OptimError::InvalidProblem("restarts must be positive".into()));
        }
        if let Objective::TPlusNuS(nu) = self.objective {
            if nu == Self::nu_bound(self.n) {
                return Err(OptimError::InvalidProblem(format!("the border case ν = {nu} is excluded")));
            }
        }
        if let Objective::SWithTCap(cap) = self.objective {
            if !(cap > 0.0) {
                return Err(OptimError::InvalidProblem("the T cap must be positive".into()));
            }
        }
        if let Some(t) = self.eigen_target() {
            let n = self.n;
            if t.len() != 2 * n || t[..n].iter().any(|&x| x > 0.0) || t[n..].iter().any(|&x| x < 0.0) {
                return Err(OptimError::Infeasible("eigenvalue targets must be n non-positive then n non-negative values".into()));
            }
        }
        if let Some(s) = &self.start {
            if s.points.len() != self.m || s.f != self.f || s.n != self.n {
                return Err(OptimError::InvalidProblem("starting configuration does not match (m, f, n)".into()));
            }
            s.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub restart: usize,
    pub outer: usize,
    pub iter: usize,
    pub value: f64,
    pub grad_norm: f64,
    pub penalty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OptimConfig {
    Discrete(DiscreteConfig),
    Sphere(SphereConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimResult {
    pub config: OptimConfig,
    pub value: f64,
    pub restart: usize,
    pub grad_norm: f64,
    pub trace: Vec<TraceRow>,
    pub residuals: Option<ConstraintReport>,
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

fn random_unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v = [matlin::gauss(rng), matlin::gauss(rng), matlin::gauss(rng)];
        let r = dot(&v, &v).sqrt();
        if r > 1e-6 {
            return [v[0] / r, v[1] / r, v[2] / r];
        }
    }
}

fn normalize3(v: [f64; 3]) -> [f64; 3] {
    let r = dot(&v, &v).sqrt();
    [v[0] / r, v[1] / r, v[2] / r]
}

/// Σ_ij w_i w_j L(v_i·v_j) for arbitrary (not necessarily unit) vectors, with equal weights.
pub fn sphere_objective(vs: &[[f64; 3]], beta: f64) -> f64 {
    let w = 1.0 / vs.len() as f64;
    let rows: Vec<f64> = vs.iter().map(|a| vs.iter().map(|b| w * w * lagrangian_profile(dot(a, b), beta)).sum()).collect();
    matlin::tree_sum(&rows)
}

/// Euclidean gradient of `sphere_objective`, using the right derivative at the kink.
pub fn sphere_gradient(vs: &[[f64; 3]], beta: f64) -> Vec<[f64; 3]> {
    let w = 1.0 / vs.len() as f64;
    vs.iter()
        .map(|a| {
            let mut g = [0.0; 3];
            for b in vs {
                // the pair (i, j) and (j, i) both depend on v_i; the diagonal term is L(|v_i|²)
                let d = 2.0 * w * w * lagrangian_profile_derivative(dot(a, b), beta);
                for k in 0..3 {
                    g[k] += d * b[k];
                }
            }
            g
        })
        .collect()
}

/// Tangential part of the gradient at unit vectors.
pub fn sphere_riemannian_gradient(vs: &[[f64; 3]], beta: f64) -> Vec<[f64; 3]> {
    sphere_gradient(vs, beta)
        .into_iter()
        .zip(vs)
        .map(|(g, v)| {
            let r = dot(&g, v);
            [g[0] - r * v[0], g[1] - r * v[1], g[2] - r * v[2]]
        })
        .collect()
}

fn sphere_descent(m: usize, beta: f64, opts: &OptimOptions, restart: usize) -> (Vec<[f64; 3]>, f64, f64, bool, Vec<TraceRow>) {
    let mut rng = restart_rng(opts.seed, restart);
    let mut vs: Vec<[f64; 3]> = (0..m).map(|_| random_unit(&mut rng)).collect();
    let mut val = sphere_objective(&vs, beta);
    let mut alpha = opts.step;
    let mut trace = Vec::new();
    let mut gnorm = f64::INFINITY;
    let mut stationary = false;
    for iter in 0..opts.max_iters {
        let g = sphere_riemannian_gradient(&vs, beta);
        let g2: f64 = g.iter().map(|x| dot(x, x)).sum();
        gnorm = g2.sqrt();
        trace.push(TraceRow { restart, outer: 0, iter, value: val, grad_norm: gnorm, penalty: 0.0 });
        if gnorm <= opts.tol {
            stationary = true;
            break;
        }
        let mut accepted = false;
        while alpha > 1e-14 {
            let trial: Vec<[f64; 3]> =
                vs.iter().zip(&g).map(|(v, gi)| normalize3([v[0] - alpha * gi[0], v[1] - alpha * gi[1], v[2] - alpha * gi[2]])).collect();
            let tv = sphere_objective(&trial, beta);
            if tv < val && tv <= val - 1e-4 * alpha * g2 {
                vs = trial;
                val = tv;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // no descent along −g at any step length: a kink where the one-sided gradient
            // does not vanish but the point is locally minimal
            stationary = true;
            break;
        }
        alpha = (alpha * 2.0).min(10.0);
    }
    (vs, val, gnorm, stationary, trace)
}

/// Multi-start Riemannian gradient descent on (S²)^m with equal weights 1/m.
pub fn minimize_sphere(m: usize, beta: f64, opts: &OptimOptions) -> Result<OptimResult, OptimError> {
    if m == 0 {
        return Err(OptimError::InvalidProblem("m must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&beta) {
        return Err(OptimError::InvalidProblem(format!("beta must lie in [0, 1), got {beta}")));
    }
    if opts.restarts == 0 {
        return Err(OptimError::InvalidProblem("restarts must be positive".into()));
    }
    let runs: Vec<_> = (0..opts.restarts).into_par_iter().map(|r| sphere_descent(m, beta, opts, r)).collect();
    let best = runs
        .iter()
        .enumerate()
        .filter(|(_, r)| r.3)
        .min_by(|(i, a), (j, b)| a.1.total_cmp(&b.1).then(i.cmp(j)))
        .map(|(i, _)| i);
    let Some(bi) = best else {
        let (b, g) = runs.iter().map(|r| (r.1, r.2)).fold((f64::INFINITY, f64::INFINITY), |acc, x| if x.0 < acc.0 { x } else { acc });
        return Err(OptimError::NonConvergence { best: b, grad: g });
    };
    let trace: Vec<TraceRow> = runs.iter().flat_map(|r| r.4.iter().cloned()).collect();
    let (vs, _, gnorm, _, _) = &runs[bi];
    let cfg = SphereConfig::equal_weights(beta, vs);
    let value = cfg.action();
    Ok(OptimResult { config: OptimConfig::Sphere(cfg), value, restart: bi, grad_norm: *gnorm, trace, residuals: None })
}

/// A point p = Σ_k c_k w_k w_k* given by 2n orthonormal columns w_k ∈ C^f and real c_k.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePoint {
    pub cols: Vec<Vec<C64>>,
    pub c: Vec<f64>,
}

impl FramePoint {
    pub fn matrix(&self) -> CMatrix {
        let f = self.cols[0].len();
        CMatrix::from_fn(f, |a, b| self.cols.iter().zip(&self.c).map(|(w, ck)| w[a] * w[b].conj() * *ck).sum())
    }

    /// Frame from a valid point: eigenvectors of the n lowest and n highest eigenvalues.
    pub fn from_point(p: &CMatrix, n: usize) -> Result<Self, OptimError> {
        let (vals, u) = matlin::herm_eigen(p).map_err(MeasureError::from)?;
        let f = p.dim();
        let idx: Vec<usize> = (0..n).chain(f - n..f).collect();
        let cols = idx.iter().map(|&k| (0..f).map(|i| u[(i, k)]).collect()).collect();
        let c = idx.iter().enumerate().map(|(a, &k)| if a < n { vals[k].min(0.0) } else { vals[k].max(0.0) }).collect();
        Ok(FramePoint { cols, c })
    }

    fn random(f: usize, n: usize, target: Option<&Vec<f64>>, rng: &mut ChaCha8Rng) -> Self {
        let u = matlin::random_unitary(f, rng);
        let cols = (0..2 * n).map(|k| (0..f).map(|i| u[(i, k)]).collect()).collect();
        let c = match target {
            Some(t) => t.clone(),
            None => (0..2 * n).map(|k| if k < n { -rng.gen_range(0.1..1.0) } else { rng.gen_range(0.5..1.5) }).collect(),
        };
        FramePoint { cols, c }
    }
}

/// Gram–Schmidt on the columns.
fn orthonormalize(cols: &mut [Vec<C64>]) {
    for k in 0..cols.len() {
        for j in 0..k {
            let proj: C64 = cols[j].iter().zip(&cols[k]).map(|(a, b)| a.conj() * b).sum();
            let cj = cols[j].clone();
            for (x, y) in cols[k].iter_mut().zip(&cj) {
                *x -= proj * y;
            }
        }
        let nrm = cols[k].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for x in cols[k].iter_mut() {
            *x /= nrm;
        }
    }
}

fn to_config(frames: &[FramePoint], f: usize, n: usize) -> DiscreteConfig {
    let w = 1.0 / frames.len() as f64;
    DiscreteConfig::new(f, n, frames.iter().map(|fp| (w, fp.matrix())).collect())
}

/// ∂(αS·L + αT·|A|²)/∂|λ_k| for the leading eigenvalue moduli.
fn modulus_weights(mods: &[f64], coef: (f64, f64)) -> Vec<f64> {
    let n = mods.len() as f64 / 2.0;
    let sum: f64 = mods.iter().sum();
    mods.iter().map(|m| coef.0 * (2.0 * m - sum / n) + coef.1 * 2.0 * sum).collect()
}

fn pair_value(p: &CMatrix, q: &CMatrix, n: usize, coef: (f64, f64)) -> Result<f64, OptimError> {
    let e = causal::chain_eigenvalues(&(p * q), n).map_err(MeasureError::from)?;
    Ok(coef.0 * causal::lagrangian_from_eigs(&e) + coef.1 * causal::weight_sq_from_eigs(&e))
}

/// Gradients of h(pq) with respect to the Hermitian matrices p and q by central differences.
fn pair_gradient_fd(p: &CMatrix, q: &CMatrix, n: usize, coef: (f64, f64)) -> Result<(CMatrix, CMatrix), OptimError> {
    let f = p.dim();
    let one = |x: &CMatrix, y: &CMatrix, which: usize, e: &CMatrix, h: f64| -> Result<f64, OptimError> {
        let (xp, xm) = (x + &e.scale(h), x - &e.scale(h));
        let (a, b) = if which == 0 { (pair_value(&xp, y, n, coef)?, pair_value(&xm, y, n, coef)?) } else { (pair_value(y, &xp, n, coef)?, pair_value(y, &xm, n, coef)?) };
        Ok((a - b) / (2.0 * h))
    };
    let mut out = [CMatrix::zeros(f), CMatrix::zeros(f)];
    for which in 0..2 {
        let (x, y) = if which == 0 { (p, q) } else { (q, p) };
        let h = 1e-6 * (1.0 + x.max_abs());
        for a in 0..f {
            for b in a..f {
                if a == b {
                    let mut e = CMatrix::zeros(f);
                    e[(a, a)] = c(1.0, 0.0);
                    out[which][(a, a)] = c(one(x, y, which, &e, h)?, 0.0);
                } else {
                    let mut es = CMatrix::zeros(f);
                    es[(a, b)] = c(1.0, 0.0);
                    es[(b, a)] = c(1.0, 0.0);
                    let mut ea = CMatrix::zeros(f);
                    ea[(a, b)] = c(0.0, -1.0);
                    ea[(b, a)] = c(0.0, 1.0);
                    let (d1, d2) = (one(x, y, which, &es, h)?, one(x, y, which, &ea, h)?);
                    // tr(G E_sym) = 2 Re G_ab and tr(G E_anti) = −2 Im G_ab
                    out[which][(a, b)] = c(d1 / 2.0, -d2 / 2.0);
                    out[which][(b, a)] = c(d1 / 2.0, d2 / 2.0);
                }
            }
        }
    }
    let [gp, gq] = out;
    Ok((gp, gq))
}

/// Gradients (Hermitian) of h(pq) for p ≠ q, through dλ = tr(adj(λ − A) dA)/χ'(λ); falls back
/// to central differences when leading eigenvalues are nearly degenerate.
fn pair_gradient(p: &CMatrix, q: &CMatrix, n: usize, coef: (f64, f64)) -> Result<(CMatrix, CMatrix), OptimError> {
    let a = p * q;
    let f = a.dim();
    let all = matlin::eigenvalues(&a).map_err(MeasureError::from)?.eigenvalues;
    let top: Vec<C64> = all.iter().take(2 * n).cloned().collect();
    let scale = 1.0 + top.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let gap_tol = 1e-5 * scale;
    for (k, lk) in top.iter().enumerate() {
        if lk.norm() <= 1e-12 * scale {
            continue;
        }
        let close = all.iter().enumerate().any(|(j, lj)| j != k && (lk - lj).norm() < gap_tol);
        if close {
            return pair_gradient_fd(p, q, n, coef);
        }
    }
    let mods: Vec<f64> = top.iter().map(|z| z.norm()).collect();
    let dw = modulus_weights(&mods, coef);
    let (coeffs, pieces) = matlin::adjugate_pieces(&a);
    let dcoeffs: Vec<C64> = (1..coeffs.len()).map(|k| coeffs[k] * k as f64).collect();
    let mut z = CMatrix::zeros(f);
    for (k, lk) in top.iter().enumerate() {
        if lk.norm() <= 1e-12 * scale || dw[k] == 0.0 {
            continue;
        }
        // adj(λ − A) = Σ_k M_k λ^{f−k}
        let mut adj = CMatrix::zeros(f);
        let mut pow = c(1.0, 0.0);
        for piece in pieces.iter().rev() {
            adj = &adj + &piece.scale_c(pow);
            pow *= lk;
        }
        let dchi = matlin::poly_eval(&dcoeffs, *lk);
        let factor = lk.conj() / lk.norm() * dw[k] / dchi;
        z = &z + &adj.scale_c(factor);
    }
    // d h = Re tr(Z dA), dA = dp q + p dq
    Ok(((q * &z).hermitian_part(), (&z * p).hermitian_part()))
}

/// Objective value and Euclidean gradients (with respect to each point matrix, as Hermitian
/// matrices) of αS·S + αT·T for points given by frames; the diagonal terms depend on the
/// c's only and are returned separately as ∂/∂c.
fn frame_gradients(frames: &[FramePoint], n: usize, coef: (f64, f64)) -> Result<(Vec<CMatrix>, Vec<Vec<f64>>), OptimError> {
    let m = frames.len();
    let f = frames[0].cols[0].len();
    let w = 1.0 / m as f64;
    let pts: Vec<CMatrix> = frames.iter().map(|fp| fp.matrix()).collect();
    let rows: Vec<Vec<(usize, CMatrix)>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut acc = vec![(i, CMatrix::zeros(f))];
            for j in i + 1..m {
                let (gp, gq) = pair_gradient(&pts[i], &pts[j], n, coef)?;
                acc[0].1 = &acc[0].1 + &gp.scale(2.0 * w * w);
                acc.push((j, gq.scale(2.0 * w * w)));
            }
            Ok(acc)
        })
        .collect::<Result<_, OptimError>>()?;
    let mut grads = vec![CMatrix::zeros(f); m];
    for row in rows {
        for (j, g) in row {
            grads[j] = &grads[j] + &g;
        }
    }
    let diag = frames
        .iter()
        .map(|fp| {
            let mods: Vec<f64> = fp.c.iter().map(|x| x * x).collect();
            let dw = modulus_weights(&mods, coef);
            fp.c.iter().zip(&dw).map(|(ck, d)| w * w * d * 2.0 * ck).collect()
        })
        .collect();
    Ok((grads, diag))
}

/// S or T + νS of the configuration with equal weights built from frames.
pub fn frame_objective(frames: &[FramePoint], f: usize, n: usize, objective: Objective) -> Result<f64, OptimError> {
    let (s, t) = measure::functionals(&to_config(frames, f, n))?;
    Ok(objective.evaluate(s, t))
}

/// Gradient of the objective with respect to the frame columns and the c's. Public for the
/// finite-difference tests.
pub fn frame_gradient(frames: &[FramePoint], n: usize, objective: Objective) -> Result<Vec<FramePoint>, OptimError> {
    let (gp, diag) = frame_gradients(frames, n, objective.coefficients())?;
    Ok(frames.iter().zip(gp.iter().zip(diag)).map(|(fp, (g, d))| chain_to_frame(fp, g, &d)).collect())
}

fn chain_to_frame(fp: &FramePoint, g: &CMatrix, diag_c: &[f64]) -> FramePoint {
    let f = g.dim();
    let cols = fp
        .cols
        .iter()
        .zip(&fp.c)
        .map(|(wk, ck)| (0..f).map(|a| (0..f).map(|b| g[(a, b)] * wk[b]).sum::<C64>() * (2.0 * ck)).collect())
        .collect();
    let c = fp
        .cols
        .iter()
        .zip(diag_c)
        .map(|(wk, d)| {
            let gw: C64 = (0..f).map(|a| wk[a].conj() * (0..f).map(|b| g[(a, b)] * wk[b]).sum::<C64>()).sum();
            gw.re + d
        })
        .collect();
    FramePoint { cols, c }
}

/// Removes from a column gradient the part normal to the set of orthonormal frames.
fn project_tangent(fp: &FramePoint, g: &mut FramePoint) {
    let r = fp.cols.len();
    let m: Vec<Vec<C64>> = (0..r)
        .map(|i| (0..r).map(|j| fp.cols[i].iter().zip(&g.cols[j]).map(|(a, b)| a.conj() * b).sum()).collect())
        .collect();
    let f = fp.cols[0].len();
    let orig = g.cols.clone();
    for j in 0..r {
        for a in 0..f {
            let mut s = c(0.0, 0.0);
            for i in 0..r {
                let sym = (m[i][j] + m[j][i].conj()) * 0.5;
                s += fp.cols[i][a] * sym;
            }
            g.cols[j][a] = orig[j][a] - s;
        }
    }
}

struct Multipliers {
    mu: f64,
    lam_id: CMatrix,
    lam_tr: f64,
    identity: bool,
    trace: bool,
}

struct Evaluation {
    objective: f64,
    t: f64,
    augmented: f64,
    penalty: f64,
    residual_id: CMatrix,
    residual_tr: f64,
    max_norm: f64,
}

fn evaluate(frames: &[FramePoint], prob: &OptimProblem, al: &Multipliers) -> Result<Evaluation, OptimError> {
    let cfg = to_config(frames, prob.f, prob.n);
    let (s, t) = measure::functionals(&cfg)?;
    let objective = prob.objective.evaluate(s, t);
    let sum = cfg.weighted_sum();
    let residual_id = &sum - &CMatrix::identity(prob.f);
    let residual_tr = sum.trace().re - prob.f as f64;
    let mut penalty = 0.0;
    if al.identity {
        let inner: f64 = al.lam_id.data().iter().zip(residual_id.data()).map(|(l, r)| (l.conj() * r).re).sum();
        penalty += 0.5 * al.mu * residual_id.frob_norm().powi(2) + inner;
    }
    if al.trace {
        penalty += 0.5 * al.mu * residual_tr * residual_tr + al.lam_tr * residual_tr;
    }
    let max_norm = cfg.points.iter().map(|p| p.p.frob_norm()).fold(0.0, f64::max);
    Ok(Evaluation { objective, t, augmented: objective + penalty, penalty, residual_id, residual_tr, max_norm })
}

fn full_gradient(frames: &[FramePoint], prob: &OptimProblem, al: &Multipliers, ev: &Evaluation, free_c: bool) -> Result<Vec<FramePoint>, OptimError> {
    let (mut gp, diag) = frame_gradients(frames, prob.n, prob.objective.coefficients())?;
    let w = 1.0 / frames.len() as f64;
    let f = prob.f;
    let mut extra = CMatrix::zeros(f);
    if al.identity {
        extra = &extra + &(&ev.residual_id.scale(al.mu) + &al.lam_id).hermitian_part();
    }
    if al.trace {
        extra = &extra + &CMatrix::identity(f).scale(al.mu * ev.residual_tr + al.lam_tr);
    }
    for g in gp.iter_mut() {
        *g = &*g + &extra.scale(w);
    }
    Ok(frames
        .iter()
        .zip(gp.iter().zip(diag))
        .map(|(fp, (g, d))| {
            let mut out = chain_to_frame(fp, g, &d);
            project_tangent(fp, &mut out);
            if !free_c {
                out.c.iter_mut().for_each(|x| *x = 0.0);
            }
            // components pushing a c across zero are blocked by the sign clamp
            let n = prob.n;
            for (k, (g, x)) in out.c.iter_mut().zip(&fp.c).enumerate() {
                if *x == 0.0 && ((k < n && *g < 0.0) || (k >= n && *g > 0.0)) {
                    *g = 0.0;
                }
            }
            out
        })
        .collect())
}

fn step_frames(frames: &[FramePoint], g: &[FramePoint], alpha: f64, n: usize) -> Vec<FramePoint> {
    frames
        .iter()
        .zip(g)
        .map(|(fp, gi)| {
            let mut cols: Vec<Vec<C64>> = fp.cols.iter().zip(&gi.cols).map(|(w, d)| w.iter().zip(d).map(|(a, b)| a - b * alpha).collect()).collect();
            orthonormalize(&mut cols);
            // keep the negative block non-positive and the positive block non-negative
            let c = fp.c.iter().zip(&gi.c).enumerate().map(|(k, (x, d))| { let v = x - alpha * d; if k < n { v.min(0.0) } else { v.max(0.0) } }).collect();
            FramePoint { cols, c }
        })
        .collect()
}

fn grad_norm(g: &[FramePoint]) -> f64 {
    g.iter()
        .map(|fp| fp.cols.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>() + fp.c.iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

struct Run {
    frames: Vec<FramePoint>,
    value: f64,
    grad: f64,
    stationary: bool,
    feasible_residual: f64,
    trace: Vec<TraceRow>,
}

/// Armijo descent on the augmented objective. Returns (frames, evaluation, gradient norm,
/// stationary flag).
#[allow(clippy::too_many_arguments)]
fn descend(
    mut frames: Vec<FramePoint>,
    prob: &OptimProblem,
    al: &Multipliers,
    free_c: bool,
    restart: usize,
    outer: usize,
    trace: &mut Vec<TraceRow>,
) -> Result<(Vec<FramePoint>, Evaluation, f64, bool), OptimError> {
    let opts = &prob.options;
    let cap = match prob.objective {
        Objective::SWithTCap(cap) => Some(cap),
        _ => None,
    };
    let mut ev = evaluate(&frames, prob, al)?;
    let mut alpha = opts.step;
    let mut gnorm = f64::INFINITY;
    for iter in 0..opts.max_iters {
        if ev.max_norm > DIVERGENCE_NORM || ev.objective < -DIVERGENCE_NORM {
            return Err(OptimError::IllPosed { value: ev.objective, norm: ev.max_norm });
        }
        let g = full_gradient(&frames, prob, al, &ev, free_c)?;
        gnorm = grad_norm(&g);
        trace.push(TraceRow { restart, outer, iter, value: ev.objective, grad_norm: gnorm, penalty: ev.penalty });
        if gnorm <= opts.tol {
            return Ok((frames, ev, gnorm, true));
        }
        let mut accepted = false;
        while alpha > 1e-14 {
            let mut a = alpha;
            let mut trial = step_frames(&frames, &g, a, prob.n);
            let mut tev = evaluate(&trial, prob, al)?;
            if let Some(cap) = cap {
                if tev.t > cap {
                    // largest step along the same direction that keeps T within the cap
                    let (mut lo, mut hi) = (0.0, a);
                    for _ in 0..40 {
                        let mid = 0.5 * (lo + hi);
                        if evaluate(&step_frames(&frames, &g, mid, prob.n), prob, al)?.t <= cap {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    a = lo;
                    trial = step_frames(&frames, &g, a, prob.n);
                    tev = evaluate(&trial, prob, al)?;
                }
            }
            if a > 0.0 && tev.augmented < ev.augmented && tev.augmented <= ev.augmented - 1e-4 * a * gnorm * gnorm {
                frames = trial;
                ev = tev;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Ok((frames, ev, gnorm, true));
        }
        alpha = (alpha * 2.0).min(1e3);
    }
    Ok((frames, ev, gnorm, false))
}

fn anneal(frames: Vec<FramePoint>, prob: &OptimProblem, al: &Multipliers, sched: &AnnealSchedule, rng: &mut ChaCha8Rng) -> Result<Vec<FramePoint>, OptimError> {
    let mut cur = frames;
    let mut cur_v = evaluate(&cur, prob, al)?.augmented;
    let mut best = cur.clone();
    let mut best_v = cur_v;
    let mut temp = sched.t0 * (1.0 + cur_v.abs());
    for _ in 0..sched.steps {
        let i = rng.gen_range(0..cur.len());
        let mut trial = cur.clone();
        for col in trial[i].cols.iter_mut() {
            for z in col.iter_mut() {
                *z += c(matlin::gauss(rng), matlin::gauss(rng)) * sched.kick;
            }
        }
        orthonormalize(&mut trial[i].cols);
        let ok = match prob.objective {
            Objective::SWithTCap(cap) => evaluate(&trial, prob, al)?.t <= cap,
            _ => true,
        };
        if ok {
            let v = evaluate(&trial, prob, al)?.augmented;
            if v <= cur_v || rng.gen::<f64>() < ((cur_v - v) / temp).exp() {
                cur = trial;
                cur_v = v;
                if v < best_v {
                    best = cur.clone();
                    best_v = v;
                }
            }
        }
        temp *= sched.cooling;
    }
    Ok(best)
}

fn general_run(prob: &OptimProblem, restart: usize) -> Result<Run, OptimError> {
    let mut rng = restart_rng(prob.options.seed, restart);
    let target = prob.eigen_target();
    let free_c = target.is_none();
    let mut frames: Vec<FramePoint> = match (&prob.start, restart) {
        (Some(s), 0) => s.points.iter().map(|wp| FramePoint::from_point(&wp.p, prob.n)).collect::<Result<_, _>>()?,
        _ => (0..prob.m).map(|_| FramePoint::random(prob.f, prob.n, target, &mut rng)).collect(),
    };
    if let (Some(t), Some(_)) = (target, &prob.start) {
        if restart == 0 && frames.iter().any(|fp| fp.c.iter().zip(t).any(|(a, b)| (a - b).abs() > 1e-8)) {
            return Err(OptimError::Infeasible("starting configuration violates the prescribed eigenvalues".into()));
        }
    }
    if let Objective::SWithTCap(cap) = prob.objective {
        let t = measure::functional_t(&to_config(&frames, prob.f, prob.n))?;
        if t > cap {
            // scale the c's down until T fits (only possible without prescribed eigenvalues)
            if !free_c {
                return Err(OptimError::Infeasible(format!("starting point has T = {t} > {cap}")));
            }
            let s = (cap / t).powf(0.25) * 0.999;
            frames.iter_mut().for_each(|fp| fp.c.iter_mut().for_each(|x| *x *= s));
        }
    }
    let identity = prob.has(&Constraint::Identity);
    let trace_c = prob.has(&Constraint::Trace) && !identity;
    let mut al = Multipliers { mu: 10.0, lam_id: CMatrix::zeros(prob.f), lam_tr: 0.0, identity, trace: trace_c };
    let outers = if identity || trace_c { 5 } else { 1 };
    let mut trace = Vec::new();
    let mut ev;
    let use_anneal = prob.n >= 2 && prob.options.anneal.is_some();
    for outer in 0..outers {
        let r = descend(frames, prob, &al, free_c, restart, outer, &mut trace)?;
        frames = r.0;
        ev = r.1;
        if use_anneal && outer == 0 {
            let sched = prob.options.anneal.unwrap();
            frames = anneal(frames, prob, &al, &sched, &mut rng)?;
            let r = descend(frames, prob, &al, free_c, restart, outer, &mut trace)?;
            frames = r.0;
            ev = r.1;
        }
        if outer + 1 < outers {
            if al.identity {
                al.lam_id = &al.lam_id + &ev.residual_id.scale(al.mu);
            }
            if al.trace {
                al.lam_tr += al.mu * ev.residual_tr;
            }
            al.mu *= 10.0;
        }
    }
    // a final pass with the last multipliers, reporting stationarity
    let r = descend(frames, prob, &al, free_c, restart, outers, &mut trace)?;
    frames = r.0;
    ev = r.1;
    let gnorm = r.2;
    let mut stationary = r.3;
    let feasible_residual = if identity {
        ev.residual_id.frob_norm()
    } else if trace_c {
        ev.residual_tr.abs()
    } else {
        0.0
    };
    if !gnorm.is_finite() {
        stationary = false;
    }
    Ok(Run { frames, value: ev.objective, grad: gnorm, stationary, feasible_residual, trace })
}

/// Minimization over m equally weighted points parametrized by frames; see the module notes.
pub fn minimize_general(prob: &OptimProblem) -> Result<OptimResult, OptimError> {
    prob.validate()?;
    let runs: Vec<Result<Run, OptimError>> = (0..prob.options.restarts).into_par_iter().map(|r| general_run(prob, r)).collect();
    // an unbounded direction found by any restart makes the problem ill-posed
    if let Some(Err(e)) = runs.iter().find(|r| matches!(r, Err(OptimError::IllPosed { .. }))) {
        return Err(e.clone());
    }
    let mut ok: Vec<(usize, Run)> = Vec::new();
    let mut first_err = None;
    for (i, r) in runs.into_iter().enumerate() {
        match r {
            Ok(run) => ok.push((i, run)),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if ok.is_empty() {
        return Err(first_err.unwrap_or(OptimError::NonConvergence { best: f64::NAN, grad: f64::NAN }));
    }
    let trace: Vec<TraceRow> = ok.iter().flat_map(|(_, r)| r.trace.iter().cloned()).collect();
    let good = ok
        .iter()
        .filter(|(_, r)| r.stationary && r.feasible_residual <= FEASIBILITY_TOL)
        .min_by(|(i, a), (j, b)| a.value.total_cmp(&b.value).then(i.cmp(j)));
    let Some((bi, best)) = good else {
        let infeasible = ok.iter().all(|(_, r)| r.feasible_residual > FEASIBILITY_TOL);
        if infeasible {
            let res = ok.iter().map(|(_, r)| r.feasible_residual).fold(f64::INFINITY, f64::min);
            return Err(OptimError::Infeasible(format!("constraint residual {res:e} above {FEASIBILITY_TOL:e}")));
        }
        let (b, g) = ok.iter().map(|(_, r)| (r.value, r.grad)).fold((f64::INFINITY, f64::INFINITY), |acc, x| if x.0 < acc.0 { x } else { acc });
        return Err(OptimError::NonConvergence { best: b, grad: g });
    };
    let mut cfg = to_config(&best.frames, prob.f, prob.n);
    cfg.beta = prob.beta;
    let (s, t) = measure::functionals(&cfg)?;
    let value = prob.objective.evaluate(s, t);
    let residuals = check_constraints(&cfg, &prob.constraints, FEASIBILITY_TOL)?;
    Ok(OptimResult { config: OptimConfig::Discrete(cfg), value, restart: *bi, grad_norm: best.grad, trace, residuals: Some(residuals) })
}
