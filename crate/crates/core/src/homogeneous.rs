//! Homogeneous systems: negative definite momentum-space measures ν, the kernel
//! P(ξ) = ∫ e^{i⟨p,ξ⟩} dν(p), the functionals S and T per unit volume, near-diagonalization
//! of positive operators in the indefinite space and the lower bound for L at ξ = 0.

use crate::causal::{self, CausalClass, CausalError};
use crate::fermion::IndefiniteSpace;
use crate::matlin::{self, c, tree_sum, CMatrix, LinalgError, C64};
use crate::quad;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// Tolerance on the minimum of the quadratic form ≺v|−W v≻ over unit vectors.
pub const TOL_POSITIVE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HomError {
    #[error("support point {index}: −W is not positive (minimum {min:e})")]
    NotPositive { index: usize, min: f64 },
    #[error("support point {index}: |p| = {norm} exceeds the support radius {radius}")]
    OutOfSupport { index: usize, norm: f64, radius: f64 },
    #[error("inconsistent shape: {0}")]
    BadShape(String),
    #[error("operator is not positive (minimum of the form {0:e})")]
    OperatorNotPositive(f64),
    #[error("not supported: {0}")]
    NotSupported(String),
    #[error(transparent)]
    Causal(#[from] CausalError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentumPoint {
    /// (p⁰, p¹, p², p³).
    pub p: [f64; 4],
    pub w: CMatrix,
}

/// A discrete measure ν = Σ W_k δ_{p_k} on the ball of radius `k_radius` in momentum space,
/// with values in the 2n×2n matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegDefMeasure {
    pub space: IndefiniteSpace,
    pub k_radius: f64,
    pub support: Vec<MomentumPoint>,
}

impl NegDefMeasure {
    pub fn new(n: usize, k_radius: f64, support: Vec<([f64; 4], CMatrix)>) -> Self {
        NegDefMeasure {
            space: IndefiniteSpace { n },
            k_radius,
            support: support.into_iter().map(|(p, w)| MomentumPoint { p, w }).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    /// ν(K̂) = Σ W_k.
    pub fn total(&self) -> CMatrix {
        let mut s = CMatrix::zeros(self.dim());
        for mp in &self.support {
            s = &s + &mp.w;
        }
        s
    }

    /// U ν U⁻¹ for an S-unitary U.
    pub fn conjugated(&self, u: &CMatrix) -> Self {
        let uinv = s_inverse(u, &self.space);
        let mut out = self.clone();
        for mp in out.support.iter_mut() {
            mp.w = &(u * &mp.w) * &uinv;
        }
        out
    }

    pub fn validate(&self) -> Result<(), HomError> {
        if self.space.n == 0 {
            return Err(HomError::BadShape("n must be positive".into()));
        }
        for (index, mp) in self.support.iter().enumerate() {
            if mp.w.dim() != self.dim() {
                return Err(HomError::BadShape(format!("support point {index}: weight is {0}x{0}", mp.w.dim())));
            }
            if mp.p.iter().any(|x| !x.is_finite()) {
                return Err(HomError::BadShape(format!("support point {index}: momentum not finite")));
            }
            let norm = mp.p.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > self.k_radius * (1.0 + 1e-12) {
                return Err(HomError::OutOfSupport { index, norm, radius: self.k_radius });
            }
        }
        check_negative_definite(self)
    }
}

/// The inverse S U* S of an S-unitary matrix.
pub fn s_inverse(u: &CMatrix, space: &IndefiniteSpace) -> CMatrix {
    let s = space.signature();
    &(&s * &u.adjoint()) * &s
}

/// Minimum over unit vectors of ≺v|B v≻, or an error measure of how far the form is from
/// being real.
fn form_minimum(b: &CMatrix, space: &IndefiniteSpace) -> Result<(f64, f64), LinalgError> {
    let k = &space.signature() * b;
    let defect = k.hermitian_defect();
    let (vals, _) = matlin::herm_eigen(&k.hermitian_part())?;
    Ok((vals[0], defect))
}

/// Every weight W must make −W positive: ≺v|−W v≻ ≥ 0 for all v.
pub fn check_negative_definite(nu: &NegDefMeasure) -> Result<(), HomError> {
    for (index, mp) in nu.support.iter().enumerate() {
        let scale = 1.0f64.max(mp.w.max_abs());
        let (min, defect) = form_minimum(&(-&mp.w), &nu.space)?;
        if min < -TOL_POSITIVE * scale || defect > TOL_POSITIVE * scale {
            return Err(HomError::NotPositive { index, min: min.min(-defect) });
        }
    }
    Ok(())
}

/// ⟨p,ξ⟩ = p⁰ξ⁰ − p⃗·ξ⃗.
pub fn minkowski(p: &[f64; 4], xi: &[f64; 4]) -> f64 {
    p[0] * xi[0] - p[1] * xi[1] - p[2] * xi[2] - p[3] * xi[3]
}

/// P(ξ) = Σ_k e^{i⟨p_k,ξ⟩} W_k.
pub fn kernel_xi(nu: &NegDefMeasure, xi: &[f64; 4]) -> CMatrix {
    let d = nu.dim();
    let mut out = CMatrix::zeros(d);
    for mp in &nu.support {
        let ph = C64::cis(minkowski(&mp.p, xi));
        for i in 0..d {
            for j in 0..d {
                out[(i, j)] += ph * mp.w[(i, j)];
            }
        }
    }
    out
}

/// Tr P(0).
pub fn local_density(nu: &NegDefMeasure) -> f64 {
    nu.total().trace().re
}

/// The closed chain A(ξ) = P(ξ) P(−ξ).
pub fn chain_at(nu: &NegDefMeasure, xi: &[f64; 4]) -> CMatrix {
    let neg = [-xi[0], -xi[1], -xi[2], -xi[3]];
    &kernel_xi(nu, xi) * &kernel_xi(nu, &neg)
}

/// Integration domain for S and T.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    /// Finitely many points ξ with weights (a lattice with the counting measure, or any
    /// user-supplied quadrature).
    Lattice(Vec<([f64; 4], f64)>),
    /// ξ = (t, 0, 0, r) with weight 4πr², t ∈ [−t_cut, t_cut], r ∈ [0, r_max]. This presumes
    /// that the spectrum of A(ξ) depends on ξ⃗ only through r = |ξ⃗|.
    Radial(RadialDomain),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialDomain {
    pub t_cut: f64,
    pub t_panel: f64,
    pub r_max: f64,
    pub r_panel: f64,
    /// Gauss–Legendre nodes per panel.
    pub nodes: usize,
}

impl RadialDomain {
    /// The default for a cylinder of half-height `l`: t up to 40/l, r up to `r_max`.
    pub fn for_cylinder(l: f64, r_max: f64) -> Self {
        RadialDomain { t_cut: 40.0 / l, t_panel: 0.25 / l, r_max, r_panel: 0.25, nodes: 8 }
    }
}

/// Everything computed on a radial domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialReport {
    pub s: f64,
    pub t: f64,
    /// ∫ |Tr A(ξ)|² dξ, for comparison with T.
    pub t_trace_sq: f64,
    /// S restricted to the central region r < r_central.
    pub s_central: f64,
    /// First r > 0 at which the chain becomes spacelike (r_max if it never does).
    pub r_central: f64,
    /// ∫ |g(t) g(−t)|² dt when the measure factorizes as g(p⁰)·M(p⃗); NaN otherwise.
    pub time_factor: f64,
}

/// S[ν] = ∫ L[A(ξ)] dμ(ξ) and T[ν] = ∫ |A(ξ)|² dμ(ξ).
pub fn hom_functionals(nu: &NegDefMeasure, domain: &Domain) -> Result<(f64, f64), HomError> {
    match domain {
        Domain::Lattice(pts) => lattice_functionals(nu, pts),
        Domain::Radial(rd) => radial_functionals(nu, rd).map(|r| (r.s, r.t)),
    }
}

fn lattice_functionals(nu: &NegDefMeasure, pts: &[([f64; 4], f64)]) -> Result<(f64, f64), HomError> {
    let n = nu.space.n;
    let terms: Vec<(f64, f64)> = pts
        .par_iter()
        .map(|(xi, w)| {
            let e = causal::chain_eigenvalues(&chain_at(nu, xi), n)?;
            Ok((w * causal::lagrangian_from_eigs(&e), w * causal::weight_sq_from_eigs(&e)))
        })
        .collect::<Result<_, HomError>>()?;
    let s: Vec<f64> = terms.iter().map(|x| x.0).collect();
    let t: Vec<f64> = terms.iter().map(|x| x.1).collect();
    Ok((tree_sum(&s), tree_sum(&t)))
}

/// Support weights summed over equal (p⁰, p_z): ν seen by ξ = (t, 0, 0, r).
struct Grouped {
    omegas: Vec<f64>,
    zs: Vec<f64>,
    /// `g[a][b]` for p⁰ = omegas[a], p_z = zs[b].
    g: Vec<Vec<CMatrix>>,
}

fn group(nu: &NegDefMeasure) -> Grouped {
    let key = |x: f64| x.to_bits();
    let mut om: BTreeMap<u64, usize> = BTreeMap::new();
    let mut zz: BTreeMap<u64, usize> = BTreeMap::new();
    let (mut omegas, mut zs) = (Vec::new(), Vec::new());
    for mp in &nu.support {
        om.entry(key(mp.p[0])).or_insert_with(|| {
            omegas.push(mp.p[0]);
            omegas.len() - 1
        });
        zz.entry(key(mp.p[3])).or_insert_with(|| {
            zs.push(mp.p[3]);
            zs.len() - 1
        });
    }
    let d = nu.dim();
    let mut g = vec![vec![CMatrix::zeros(d); zs.len()]; omegas.len()];
    for mp in &nu.support {
        let (a, b) = (om[&key(mp.p[0])], zz[&key(mp.p[3])]);
        g[a][b] = &g[a][b] + &mp.w;
    }
    Grouped { omegas, zs, g }
}

fn inner_c(a: &CMatrix, b: &CMatrix) -> C64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x.conj() * y).sum()
}

/// Tries g[a][b] = c_a · M_b; returns (c, M) when it holds to 1e-12 relative.
fn factorize(gr: &Grouped) -> Option<(Vec<C64>, Vec<CMatrix>)> {
    let (mut best, mut ab) = (0.0, (0, 0));
    for (a, row) in gr.g.iter().enumerate() {
        for (b, m) in row.iter().enumerate() {
            let v = m.frob_norm();
            if v > best {
                best = v;
                ab = (a, b);
            }
        }
    }
    if best == 0.0 {
        return None;
    }
    let ms: Vec<CMatrix> = gr.g[ab.0].clone();
    let pivot = &ms[ab.1];
    let pp = inner_c(pivot, pivot);
    let cs: Vec<C64> = gr.g.iter().map(|row| inner_c(pivot, &row[ab.1]) / pp).collect();
    for (a, row) in gr.g.iter().enumerate() {
        for (b, m) in row.iter().enumerate() {
            if (m - &ms[b].scale_c(cs[a])).frob_norm() > 1e-12 * best {
                return None;
            }
        }
    }
    Some((cs, ms))
}

/// Σ_b e^{∓i z_b r} M_b for both signs of r.
fn spatial_pair(zs: &[f64], ms: &[CMatrix], r: f64) -> (CMatrix, CMatrix) {
    let d = ms[0].dim();
    let (mut plus, mut minus) = (CMatrix::zeros(d), CMatrix::zeros(d));
    for (z, m) in zs.iter().zip(ms) {
        let e = C64::cis(-z * r);
        let ec = e.conj();
        for i in 0..d {
            for j in 0..d {
                let v = m[(i, j)];
                plus[(i, j)] += e * v;
                minus[(i, j)] += ec * v;
            }
        }
    }
    (plus, minus)
}

#[derive(Clone, Copy)]
struct Sample {
    l: f64,
    t: f64,
    tr2: f64,
    active: bool,
}

fn sample_chain(a: &CMatrix, n: usize) -> Result<Sample, HomError> {
    let e = causal::chain_eigenvalues(a, n)?;
    let tr = a.trace();
    Ok(Sample {
        l: causal::lagrangian_from_eigs(&e),
        t: causal::weight_sq_from_eigs(&e),
        tr2: tr.norm_sqr(),
        active: causal::classify_eigs(&e) != CausalClass::Spacelike,
    })
}

/// ∫ 4πr² (L, |A|², |TrA|²) dr over [r0, r1] by Gauss–Legendre, refining panels in which the
/// causal class changes so that the kinks fall on panel boundaries.
fn radial_panel(
    f: &(dyn Fn(f64) -> Result<Sample, HomError> + Sync),
    r0: f64,
    r1: f64,
    nodes: usize,
) -> Result<([f64; 3], Vec<(f64, bool)>), HomError> {
    let (x, w) = quad::gauss_legendre_on(r0, r1, nodes);
    let mut probes = vec![(r0, f(r0)?)];
    for &r in &x {
        probes.push((r, f(r)?));
    }
    probes.push((r1, f(r1)?));
    let mut cuts = vec![r0];
    let mut flips = Vec::new();
    for pair in probes.windows(2) {
        let ((mut a, sa), (mut b, sb)) = (pair[0], pair[1]);
        if sa.active != sb.active {
            for _ in 0..48 {
                let m = 0.5 * (a + b);
                if f(m)?.active == sa.active {
                    a = m;
                } else {
                    b = m;
                }
            }
            let cut = 0.5 * (a + b);
            cuts.push(cut);
            flips.push((cut, sb.active));
        }
    }
    cuts.push(r1);
    let mut acc = [0.0; 3];
    if cuts.len() == 2 {
        for (r, wt) in x.iter().zip(&w) {
            let s = probes.iter().find(|p| p.0 == *r).unwrap().1;
            let g = 4.0 * PI * r * r * wt;
            acc[0] += g * s.l;
            acc[1] += g * s.t;
            acc[2] += g * s.tr2;
        }
    } else {
        for seg in cuts.windows(2) {
            let (xs, ws) = quad::gauss_legendre_on(seg[0], seg[1], nodes);
            for (r, wt) in xs.iter().zip(&ws) {
                let s = f(*r)?;
                let g = 4.0 * PI * r * r * wt;
                acc[0] += g * s.l;
                acc[1] += g * s.t;
                acc[2] += g * s.tr2;
            }
        }
    }
    Ok((acc, flips))
}

fn panel_breaks(hi: f64, width: f64) -> Vec<f64> {
    let k = (hi / width).ceil().max(1.0) as usize;
    (0..=k).map(|i| hi * i as f64 / k as f64).collect()
}

/// S, T and diagnostics on a radial domain. Measures that factorize as g(p⁰)·M(p⃗) are
/// integrated as a product of a t-integral and an r-integral, which is exact for such
/// measures; other measures use the (t, r) product rule directly.
pub fn radial_functionals(nu: &NegDefMeasure, rd: &RadialDomain) -> Result<RadialReport, HomError> {
    let n = nu.space.n;
    if nu.support.is_empty() {
        return Ok(RadialReport { s: 0.0, t: 0.0, t_trace_sq: 0.0, s_central: 0.0, r_central: rd.r_max, time_factor: 0.0 });
    }
    let gr = group(nu);
    let rb = panel_breaks(rd.r_max, rd.r_panel);
    let tb: Vec<f64> = panel_breaks(2.0 * rd.t_cut, rd.t_panel).iter().map(|t| t - rd.t_cut).collect();
    let (tx, tw) = quad::composite(&tb, rd.nodes);

    if let Some((cs, ms)) = factorize(&gr) {
        // normalize so that g(0) = 1 and M carries the spatial part of P(0)
        let c0: C64 = cs.iter().sum();
        let cs: Vec<C64> = cs.iter().map(|x| x / c0).collect();
        let ms: Vec<CMatrix> = ms.iter().map(|m| m.scale_c(c0)).collect();
        let g = |t: f64| -> C64 { cs.iter().zip(&gr.omegas).map(|(c, om)| c * C64::cis(om * t)).sum() };
        let tf: Vec<f64> = tx.iter().zip(&tw).map(|(t, w)| w * (g(*t) * g(-*t)).norm_sqr()).collect();
        let time_factor = tree_sum(&tf);
        let zs = &gr.zs;
        let f = |r: f64| -> Result<Sample, HomError> {
            let (p, q) = spatial_pair(zs, &ms, r);
            sample_chain(&(&p * &q), n)
        };
        let panels: Vec<([f64; 3], Vec<(f64, bool)>)> = rb
            .par_windows(2)
            .map(|w| radial_panel(&f, w[0], w[1], rd.nodes))
            .collect::<Result<_, HomError>>()?;
        let col = |k: usize| tree_sum(&panels.iter().map(|p| p.0[k]).collect::<Vec<_>>());
        let (s_r, t_r, tr_r) = (col(0), col(1), col(2));
        // the central region ends at the first switch to spacelike
        let mut r_central = rd.r_max;
        let start_active = f(0.0)?.active;
        if start_active {
            if let Some(&(cut, _)) = panels.iter().flat_map(|p| p.1.iter()).find(|(_, act)| !act) {
                r_central = cut;
            }
        }
        let s_central = if start_active {
            let cb = panel_breaks(r_central, rd.r_panel);
            let parts: Vec<f64> = cb
                .windows(2)
                .map(|w| radial_panel(&f, w[0], w[1], rd.nodes).map(|p| p.0[0]))
                .collect::<Result<_, HomError>>()?;
            tree_sum(&parts) * time_factor
        } else {
            0.0
        };
        return Ok(RadialReport {
            s: s_r * time_factor,
            t: t_r * time_factor,
            t_trace_sq: tr_r * time_factor,
            s_central,
            r_central,
            time_factor,
        });
    }

    let (rx, rw) = quad::composite(&rb, rd.nodes);
    let rows: Vec<[f64; 3]> = rx
        .par_iter()
        .zip(rw.par_iter())
        .map(|(r, wr)| {
            let parts: Vec<(CMatrix, CMatrix)> = gr.g.iter().map(|row| spatial_pair(&gr.zs, row, *r)).collect();
            let mut acc = [0.0; 3];
            for (t, wt) in tx.iter().zip(&tw) {
                let d = nu.dim();
                let (mut p, mut q) = (CMatrix::zeros(d), CMatrix::zeros(d));
                for ((pp, qq), om) in parts.iter().zip(&gr.omegas) {
                    p = &p + &pp.scale_c(C64::cis(om * t));
                    q = &q + &qq.scale_c(C64::cis(-om * t));
                }
                let s = sample_chain(&(&p * &q), n)?;
                let g = 4.0 * PI * r * r * wr * wt;
                acc[0] += g * s.l;
                acc[1] += g * s.t;
                acc[2] += g * s.tr2;
            }
            Ok(acc)
        })
        .collect::<Result<_, HomError>>()?;
    let col = |k: usize| tree_sum(&rows.iter().map(|p| p[k]).collect::<Vec<_>>());
    Ok(RadialReport { s: col(0), t: col(1), t_trace_sq: col(2), s_central: f64::NAN, r_central: f64::NAN, time_factor: f64::NAN })
}

/// Dirac matrices in the Dirac representation: γ⁰ = diag(1, 1, −1, −1) (the signature
/// matrix of C⁴ with n = 2) and γʲ = [[0, σʲ], [−σʲ, 0]].
pub fn dirac_gammas() -> [CMatrix; 4] {
    let s = matlin::pauli();
    let g0 = CMatrix::from_real_diag(&[1.0, 1.0, -1.0, -1.0]);
    let block = |m: &CMatrix| {
        CMatrix::from_fn(4, |i, j| match (i < 2, j < 2) {
            (true, false) => m[(i, j - 2)],
            (false, true) => -m[(i - 2, j)],
            _ => c(0.0, 0.0),
        })
    };
    [g0, block(&s[0]), block(&s[1]), block(&s[2])]
}

/// Quadrature sizes for the Dirac cylinder: Gauss–Legendre in ω on [−L, L] and in p_z on
/// [−1, 1], uniform in the azimuth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylinderGrid {
    pub omega_nodes: usize,
    pub z_nodes: usize,
    pub phi_nodes: usize,
}

impl Default for CylinderGrid {
    fn default() -> Self {
        CylinderGrid { omega_nodes: 64, z_nodes: 360, phi_nodes: 4 }
    }
}

/// The bracket −√(τ²+1) γ⁰ + τ p⃗·γ⃗ + 1.
pub fn cylinder_bracket(tau: f64, pv: [f64; 3]) -> CMatrix {
    let g = dirac_gammas();
    let mut m = &CMatrix::identity(4) - &g[0].scale((tau * tau + 1.0).sqrt());
    for k in 0..3 {
        m = &m + &g[k + 1].scale(tau * pv[k]);
    }
    m
}

/// Product-quadrature discretization of the measure
/// (1/16π) Θ(L − |ω|)/L δ(|p⃗|² − 1) [−√(τ²+1) γ⁰ + τ p⃗·γ⃗ + 1] d⁴p
/// on the cylinder [−L, L] × S².
pub fn dirac_cylinder(tau: f64, l: f64, grid: CylinderGrid) -> NegDefMeasure {
    let (om, ow) = quad::gauss_legendre_on(-l, l, grid.omega_nodes);
    let (zs, zw) = quad::gauss_legendre(grid.z_nodes);
    let mut support = Vec::with_capacity(om.len() * zs.len() * grid.phi_nodes);
    for (o, wo) in om.iter().zip(&ow) {
        for (z, wz) in zs.iter().zip(&zw) {
            let rho = (1.0 - z * z).max(0.0).sqrt();
            for k in 0..grid.phi_nodes {
                let phi = 2.0 * PI * (k as f64 + 0.5) / grid.phi_nodes as f64;
                let pv = [rho * phi.cos(), rho * phi.sin(), *z];
                // the ω and sphere weights each sum to one; the total mass is ¼ · bracket
                let w = 0.25 * (wo / (2.0 * l)) * (wz / 2.0) / grid.phi_nodes as f64;
                support.push(([*o, pv[0], pv[1], pv[2]], cylinder_bracket(tau, pv).scale(w)));
            }
        }
    }
    NegDefMeasure::new(2, (l * l + 1.0).sqrt(), support)
}

/// Closed form P(0) = ¼(−√(τ²+1) γ⁰ + 1) of the cylinder.
pub fn cylinder_p0(tau: f64) -> CMatrix {
    cylinder_bracket(tau, [0.0; 3]).scale(0.25)
}

/// Output of `near_diagonalize`: U B U⁻¹ = −diag(ν) + ΔB.
#[derive(Debug, Clone, PartialEq)]
pub struct NearDiagonal {
    pub u: CMatrix,
    pub nu: Vec<f64>,
    pub delta: CMatrix,
}

/// Brings a positive operator B (≺v|Bv≻ ≥ 0) to diagonal form up to ‖ΔB‖ < ε by an
/// S-unitary transformation. The nonzero spectrum comes from the Hermitian matrix G S G*
/// where S B = G* G; the nilpotent remainder is split into hyperbolic pairs (f, e) with
/// B e = f, which are rescaled f → √ρ f, e → e/√ρ until B is small on them. Positivity
/// rules out Jordan chains longer than two (the form ≺v|Bv≻ would be indefinite on the
/// middle of such a chain); if the construction still fails numerically the result is
/// `NotSupported`.
pub fn near_diagonalize(b: &CMatrix, eps: f64, space: &IndefiniteSpace) -> Result<NearDiagonal, HomError> {
    let d = space.dim();
    if b.dim() != d {
        return Err(HomError::BadShape(format!("operator is {}x{}, space has dimension {d}", b.dim(), b.dim())));
    }
    let scale = 1.0f64.max(b.max_abs());
    let tol = TOL_POSITIVE * scale;
    let (min, defect) = form_minimum(b, space)?;
    if min < -tol || defect > tol {
        return Err(HomError::OperatorNotPositive(min.min(-defect)));
    }
    let s = space.signature();
    let k = (&s * b).hermitian_part();
    let (kv, kvec) = matlin::herm_eigen(&k)?;
    let keep: Vec<usize> = (0..d).filter(|&i| kv[i] > tol).collect();
    let r = keep.len();
    let col = |m: &CMatrix, j: usize| -> Vec<C64> { (0..m.dim()).map(|i| m[(i, j)]).collect() };
    let sv = |v: &[C64]| -> Vec<C64> { v.iter().enumerate().map(|(i, z)| z * space.sign(i)).collect() };

    // G* y = Σ_a √κ_a y_a v_a, and its pseudo-inverse G⁺ y = Σ_a y_a v_a/√κ_a
    let gstar = |y: &[C64]| -> Vec<C64> {
        let mut out = vec![c(0.0, 0.0); d];
        for (a, &ka) in keep.iter().enumerate() {
            let v = col(&kvec, ka);
            for i in 0..d {
                out[i] += v[i] * y[a] * kv[ka].sqrt();
            }
        }
        out
    };
    let gplus = |y: &[C64]| -> Vec<C64> {
        let mut out = vec![c(0.0, 0.0); d];
        for (a, &ka) in keep.iter().enumerate() {
            let v = col(&kvec, ka);
            for i in 0..d {
                out[i] += v[i] * y[a] / kv[ka].sqrt();
            }
        }
        out
    };
    let h = CMatrix::from_fn(r.max(1), |a, bb| {
        if r == 0 {
            return c(0.0, 0.0);
        }
        let va = gstar(&unit(r, a));
        let vb = gstar(&unit(r, bb));
        space.form(&va, &vb)
    });

    // (vector, sign, ν) for the final basis
    let mut basis: Vec<(Vec<C64>, f64, f64)> = Vec::new();
    let mut pairs: Vec<(Vec<C64>, Vec<C64>)> = Vec::new();
    if r > 0 {
        let (mu, y) = matlin::herm_eigen(&h)?;
        for (kk, &m) in mu.iter().enumerate() {
            let yk = col(&y, kk);
            if m.abs() > tol {
                let u: Vec<C64> = sv(&gstar(&yk)).iter().map(|z| z / m.abs().sqrt()).collect();
                basis.push((u, m.signum(), -m));
            } else {
                pairs.push((sv(&gstar(&yk)), gplus(&yk)));
            }
        }
    }
    // make the e's mutually neutral while keeping ≺f_i|e_j≻ = δ_ij
    let gram_e: Vec<Vec<C64>> = pairs.iter().map(|(_, ei)| pairs.iter().map(|(_, ej)| space.form(ei, ej)).collect()).collect();
    let fs: Vec<Vec<C64>> = pairs.iter().map(|p| p.0.clone()).collect();
    for (i, p) in pairs.iter_mut().enumerate() {
        for (j, fj) in fs.iter().enumerate() {
            let cji = gram_e[j][i] * -0.5;
            for a in 0..d {
                p.1[a] += cji * fj[a];
            }
        }
    }

    // the rest of the space is a non-degenerate complement on which B should vanish
    let mut known: Vec<(Vec<C64>, f64)> = basis.iter().map(|(v, s, _)| (v.clone(), *s)).collect();
    let sq = std::f64::consts::FRAC_1_SQRT_2;
    for (f, e) in &pairs {
        known.push((f.iter().zip(e).map(|(x, y)| (x + y) * sq).collect(), 1.0));
        known.push((f.iter().zip(e).map(|(x, y)| (x - y) * sq).collect(), -1.0));
    }
    let project = |v: &[C64]| -> Vec<C64> {
        let mut out = v.to_vec();
        for (g, sg) in &known {
            let coef = space.form(g, v) * *sg;
            for a in 0..d {
                out[a] -= coef * g[a];
            }
        }
        out
    };
    let rest: Vec<Vec<C64>> = (0..d).map(|a| project(&unit(d, a))).collect();
    let gram = CMatrix::from_fn(d, |i, j| space.form(&rest[i], &rest[j]));
    let (gv, gvec) = matlin::herm_eigen(&gram)?;
    let mut complement = Vec::new();
    for (kk, &g) in gv.iter().enumerate() {
        if g.abs() > 1e-8 {
            let mut v = vec![c(0.0, 0.0); d];
            for (i, ri) in rest.iter().enumerate() {
                for a in 0..d {
                    v[a] += ri[a] * gvec[(i, kk)];
                }
            }
            complement.push((v.iter().map(|z| z / g.abs().sqrt()).collect::<Vec<_>>(), g.signum(), 0.0));
        }
    }
    let assemble = |rho: f64| -> Result<NearDiagonal, HomError> {
        let mut cols: Vec<(Vec<C64>, f64, f64)> = basis.clone();
        for (f, e) in &pairs {
            let (fr, er): (Vec<C64>, Vec<C64>) = (f.iter().map(|z| z * rho.sqrt()).collect(), e.iter().map(|z| z / rho.sqrt()).collect());
            cols.push((fr.iter().zip(&er).map(|(x, y)| (x + y) * sq).collect(), 1.0, 0.0));
            cols.push((fr.iter().zip(&er).map(|(x, y)| (x - y) * sq).collect(), -1.0, 0.0));
        }
        cols.extend(complement.iter().cloned());
        let pos: Vec<&(Vec<C64>, f64, f64)> = cols.iter().filter(|x| x.1 > 0.0).collect();
        let neg: Vec<&(Vec<C64>, f64, f64)> = cols.iter().filter(|x| x.1 < 0.0).collect();
        if pos.len() != space.n || neg.len() != space.n {
            return Err(HomError::NotSupported(format!(
                "basis construction found signature ({}, {}), probably a Jordan chain longer than two",
                pos.len(),
                neg.len()
            )));
        }
        let mut ordered: Vec<&(Vec<C64>, f64, f64)> = pos;
        ordered.extend(neg);
        let fmat = CMatrix::from_fn(d, |i, j| ordered[j].0[i]);
        let u = s_inverse(&fmat, space);
        let nu: Vec<f64> = ordered.iter().map(|x| x.2).collect();
        let ubu = &(&u * b) * &fmat;
        let delta = &ubu + &CMatrix::from_real_diag(&nu);
        Ok(NearDiagonal { u, nu, delta })
    };
    let first = assemble(1.0)?;
    let size = first.delta.max_abs();
    if size < eps {
        return Ok(first);
    }
    let mut rho = 2.0 * size / eps;
    for _ in 0..4 {
        let out = assemble(rho)?;
        if out.delta.max_abs() < eps {
            return Ok(out);
        }
        rho *= 10.0;
    }
    Err(HomError::NotSupported(format!("could not reduce the nilpotent part below {eps:e}")))
}

fn unit(d: usize, a: usize) -> Vec<C64> {
    let mut v = vec![c(0.0, 0.0); d];
    v[a] = c(1.0, 0.0);
    v
}

/// Both sides of L[A(0)] ≥ |P(0)|² Tr(P(0))² / (8n⁵).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalBoundReport {
    pub lagrangian: f64,
    pub bound: f64,
    pub weight: f64,
    pub trace: f64,
    pub slack: f64,
    pub holds: bool,
}

pub fn local_bound_check(nu: &NegDefMeasure) -> Result<LocalBoundReport, HomError> {
    let n = nu.space.n;
    let p0 = nu.total();
    let a0 = &p0 * &p0;
    let lagrangian = causal::lagrangian_from_eigs(&causal::chain_eigenvalues(&a0, n)?);
    let weight = matlin::spectral_weight(&p0)?;
    let trace = p0.trace().re;
    let bound = weight * weight * trace * trace / (8.0 * (n as f64).powi(5));
    let slack = lagrangian - bound;
    Ok(LocalBoundReport { lagrangian, bound, weight, trace, slack, holds: slack >= -1e-10 * (1.0 + bound) })
}

/// A random negative definite measure: W = −S G*G for Gaussian G of random rank, momenta
/// uniform in the ball of radius `radius`.
pub fn random_measure<R: rand::Rng>(n: usize, points: usize, radius: f64, rng: &mut R) -> NegDefMeasure {
    let space = IndefiniteSpace { n };
    let s = space.signature();
    let d = space.dim();
    let support = (0..points)
        .map(|_| {
            let p = loop {
                let v: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-radius..radius));
                if v.iter().map(|x| x * x).sum::<f64>() <= radius * radius {
                    break v;
                }
            };
            let rank = rng.gen_range(1..=d);
            let g = CMatrix::from_fn(d, |i, _| if i < rank { c(matlin::gauss(rng), matlin::gauss(rng)) } else { c(0.0, 0.0) });
            let k = &g.adjoint() * &g;
            (p, (&s * &k).scale(-1.0 / points as f64))
        })
        .collect();
    NegDefMeasure::new(n, radius, support)
}
