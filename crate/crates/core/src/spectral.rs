//! The f = 2 theory on the sphere: Lagrangian profile, Legendre eigenvalues λ_l(β) of the
//! integral operator, the search for negative eigenvalues and the Bessel asymptotics.

use crate::matlin::{pauli, CMatrix};
use crate::measure::DiscreteConfig;
use crate::quad;
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// λ_l values below this count as negative.
pub const NEGATIVE_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpectralError {
    #[error("no negative eigenvalue for l <= {l_max} (minimum {min:e} at l = {l})")]
    NoNegativeFound { l_max: usize, l: usize, min: f64 },
    #[error("beta must lie in [0, 1), got {0}")]
    BadBeta(f64),
    #[error("{0}")]
    BadInput(String),
}

/// (1−β)/2·1 + (1+β)/2·v·σ, with eigenvalues 1 and −β.
pub fn pauli_embed(v: [f64; 3], beta: f64) -> CMatrix {
    let s = pauli();
    let mut m = CMatrix::identity(2).scale(0.5 * (1.0 - beta));
    for k in 0..3 {
        m = &m + &s[k].scale(0.5 * (1.0 + beta) * v[k]);
    }
    m
}

/// Weighted unit vectors on S² together with β.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereConfig {
    pub beta: f64,
    pub points: Vec<(f64, [f64; 3])>,
}

impl SphereConfig {
    pub fn equal_weights(beta: f64, vs: &[[f64; 3]]) -> Self {
        let w = 1.0 / vs.len() as f64;
        SphereConfig { beta, points: vs.iter().map(|v| (w, *v)).collect() }
    }

    pub fn to_discrete(&self) -> DiscreteConfig {
        let mut c = DiscreteConfig::new(2, 1, self.points.iter().map(|(w, v)| (*w, pauli_embed(*v, self.beta))).collect());
        c.beta = Some(self.beta);
        c
    }

    /// ΣΣ w_i w_j L(v_i·v_j) through the closed-form profile.
    pub fn action(&self) -> f64 {
        let rows: Vec<f64> = (0..self.points.len())
            .map(|i| {
                let (wi, vi) = self.points[i];
                self.points.iter().map(|(wj, vj)| wi * wj * lagrangian_profile(dot(&vi, vj), self.beta)).sum()
            })
            .collect();
        crate::matlin::tree_sum(&rows)
    }
}

pub fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// (1−6β+β²)/(1+β)²; the profile vanishes for c below minus this value.
pub fn causal_shift(beta: f64) -> f64 {
    (1.0 - 6.0 * beta + beta * beta) / ((1.0 + beta) * (1.0 + beta))
}

/// L as a function of c = v_x·v_y.
pub fn lagrangian_profile(c: f64, beta: f64) -> f64 {
    let b4 = (1.0 + beta).powi(4);
    b4 / 8.0 * (1.0 + c) * (c + causal_shift(beta)).max(0.0)
}

/// dL/dc, taking the right derivative at the kink.
pub fn lagrangian_profile_derivative(c: f64, beta: f64) -> f64 {
    let b4 = (1.0 + beta).powi(4);
    let u = c + causal_shift(beta);
    if u < 0.0 {
        0.0
    } else {
        b4 / 8.0 * (u + 1.0 + c)
    }
}

/// λ_l(β) = ½ ∫ L(c) P_l(c) dc, by Gauss–Legendre on the support of L. The integrand is a
/// polynomial of degree l + 2 there, so `extra` additional nodes change nothing but roundoff.
pub fn lambda_l_with_nodes(l: usize, beta: f64, extra: usize) -> f64 {
    let lo = (-causal_shift(beta)).max(-1.0);
    if lo >= 1.0 {
        return 0.0;
    }
    let nodes = (l + 4).div_ceil(2) + extra;
    let (x, w) = quad::gauss_legendre_on(lo, 1.0, nodes);
    0.5 * x.iter().zip(&w).map(|(c, w)| w * lagrangian_profile(*c, beta) * quad::legendre(l, *c)).sum::<f64>()
}

pub fn lambda_l(l: usize, beta: f64) -> f64 {
    lambda_l_with_nodes(l, beta, 2)
}

/// Closed form of λ_0(β).
pub fn lambda_0_closed(beta: f64) -> f64 {
    (1.0 - beta).powi(4) * (1.0 + 4.0 * beta + beta * beta) / (6.0 * (1.0 + beta).powi(2))
}

/// The angular support 2(1−β)/(1+β) of the asymptotic Lagrangian near the pole.
pub fn theta_max_asymptotic(beta: f64) -> f64 {
    2.0 * (1.0 - beta) / (1.0 + beta)
}

/// l(β) = 1 + ⌊l_asy⌋ with √(l_asy(l_asy+1))·ϑ_max = 5.5: the Bessel profile then has a
/// single oscillation on the support and is negative at its edge.
pub fn l_of_beta(beta: f64) -> usize {
    let x = (5.5 / theta_max_asymptotic(beta)).powi(2);
    let l_asy = 0.5 * (-1.0 + (1.0 + 4.0 * x).sqrt());
    1 + l_asy.floor() as usize
}

/// Most negative λ_l over l ≤ l_max and l = l(β).
pub fn find_negative(beta: f64, l_max: usize) -> Result<(usize, f64), SpectralError> {
    if !(0.0..1.0).contains(&beta) {
        return Err(SpectralError::BadBeta(beta));
    }
    let mut ls: Vec<usize> = (0..=l_max).collect();
    if beta > 0.0 {
        let lb = l_of_beta(beta);
        if lb > l_max {
            ls.push(lb);
        }
    }
    let (l, min) = ls
        .par_iter()
        .map(|&l| (l, lambda_l(l, beta)))
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    if min < -NEGATIVE_TOL {
        Ok((l, min))
    } else {
        Err(SpectralError::NoNegativeFound { l_max, l, min })
    }
}

/// ₀F₁(; b; z) by its power series. Fine for |z| up to a few hundred in double precision
/// only when z ≥ 0; the arguments used here (−x with x ≲ 20) lose a few digits at most.
pub fn hyp0f1(b: f64, z: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..10_000 {
        term *= z / ((b + k as f64) * (k as f64 + 1.0));
        sum += term;
        if term.abs() <= 1e-16 * sum.abs() && (k as f64) > z.abs().sqrt() {
            break;
        }
    }
    sum
}

/// Bessel J_0 by its power series.
pub fn bessel_j0(z: f64) -> f64 {
    let q = -0.25 * z * z;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..10_000 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term.abs() <= 1e-16 * sum.abs().max(1e-300) && (k as f64) > z.abs() {
            break;
        }
    }
    sum
}

/// Closed form of ½∫ L^asy(ϑ) J_0(√λ ϑ) ϑ dϑ with λ = l(l+1) and x = (1−β)²λ/(1+β)²:
/// (1−β)⁴/((1+β)²λ) · [(1 + β(2+β+λ)) ₀F₁(3;−x) − (1+β)² ₀F₁(2;−x)].
pub fn lambda_asymptotic(l: usize, beta: f64) -> f64 {
    let lam = (l * (l + 1)) as f64;
    if lam == 0.0 {
        return lambda_asymptotic_integral(l, beta);
    }
    let bp = 1.0 + beta;
    let x = (1.0 - beta).powi(2) / (bp * bp) * lam;
    (1.0 - beta).powi(4) / (bp * bp * lam)
        * ((1.0 + beta * (2.0 + beta + lam)) * hyp0f1(3.0, -x) - bp * bp * hyp0f1(2.0, -x))
}

/// The defining integral of the asymptotic eigenvalue, by quadrature.
pub fn lambda_asymptotic_integral(l: usize, beta: f64) -> f64 {
    let bp = 1.0 + beta;
    let tm = theta_max_asymptotic(beta);
    let k = ((l * (l + 1)) as f64).sqrt();
    let breaks: Vec<f64> = (0..=16).map(|i| tm * i as f64 / 16.0).collect();
    let (t, w) = quad::composite(&breaks, 24);
    0.5 * t
        .iter()
        .zip(&w)
        .map(|(t, w)| {
            let lasy = bp.powi(4) / 8.0 * (1.0 - t * t / 4.0) * (tm * tm - t * t).max(0.0);
            w * lasy * bessel_j0(k * t) * t
        })
        .sum::<f64>()
}

/// Discretization of the operator with kernel L(v·w) on a Fibonacci grid with weights 1/N.
pub fn operator_matrix(beta: f64, grid_size: usize) -> DMatrix<f64> {
    let pts = quad::fibonacci_sphere(grid_size);
    let w = 1.0 / grid_size as f64;
    let rows: Vec<Vec<f64>> = pts
        .par_iter()
        .map(|vi| pts.iter().map(|vj| lagrangian_profile(dot(vi, vj), beta) * w).collect())
        .collect();
    let m = DMatrix::from_fn(grid_size, grid_size, |i, j| rows[i][j]);
    (&m + m.transpose()) * 0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpectrum {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Eigenvector of the largest eigenvalue, normalized with positive sum.
    pub top_vector: Vec<f64>,
}

impl OperatorSpectrum {
    /// Number of eigenvalues above `tol` in modulus.
    pub fn numerical_rank(&self, tol: f64) -> usize {
        self.eigenvalues.iter().filter(|v| v.abs() > tol).count()
    }
}

pub fn operator_spectrum(beta: f64, grid_size: usize) -> OperatorSpectrum {
    let eig = SymmetricEigen::new(operator_matrix(beta, grid_size));
    let mut idx: Vec<usize> = (0..grid_size).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvectors.column(idx[0]);
    let sign = if top.sum() < 0.0 { -1.0 } else { 1.0 };
    OperatorSpectrum {
        eigenvalues: idx.iter().map(|&i| eig.eigenvalues[i]).collect(),
        top_vector: top.iter().map(|v| v * sign).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizerReport {
    pub a: f64,
    pub total_mass: f64,
    /// ρ(z), ρ(3z²−1), ρ(3x²−1).
    pub residuals: [f64; 3],
    /// S(ρ_a) at β = 0.
    pub action: f64,
}

/// ∫ g dρ_a for the axially symmetric measure with density a + (1−a)/2·Θ(|z|−½) on
/// dz/2·dφ/2π plus circles of weight 3(1−a)/8 at z = ±½. `g` receives (z, ⟨x²⟩_φ).
fn integrate_minimizer(a: f64, g: impl Fn(f64, f64) -> f64) -> f64 {
    let gz = |z: f64| g(z, 0.5 * (1.0 - z * z));
    let mut s = 0.0;
    for (lo, hi, dens) in [(-1.0, -0.5, 0.5 * (1.0 + a)), (-0.5, 0.5, a), (0.5, 1.0, 0.5 * (1.0 + a))] {
        let (x, w) = quad::gauss_legendre_on(lo, hi, 12);
        s += 0.5 * dens * x.iter().zip(&w).map(|(z, w)| w * gz(*z)).sum::<f64>();
    }
    s + 0.375 * (1.0 - a) * (gz(0.5) + gz(-0.5))
}

/// Residuals of the three defining constraints and the action of ρ_a at β = 0. The action
/// uses L(v·w) = Σ (2l+1) λ_l P_l(v·w), which for axially symmetric measures reduces to
/// Σ (2l+1) λ_l ρ(P_l)²; at β = 0 only l ≤ 2 contribute.
pub fn distributional_minimizer_check(a: f64) -> MinimizerReport {
    let total_mass = integrate_minimizer(a, |_, _| 1.0);
    let residuals = [
        integrate_minimizer(a, |z, _| z),
        integrate_minimizer(a, |z, _| 3.0 * z * z - 1.0),
        integrate_minimizer(a, |_, x2| 3.0 * x2 - 1.0),
    ];
    let action = (0..=6)
        .map(|l| {
            let m = integrate_minimizer(a, |z, _| quad::legendre(l, z));
            (2 * l + 1) as f64 * lambda_l(l, 0.0) * m * m
        })
        .sum();
    MinimizerReport { a, total_mass, residuals, action }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub beta: f64,
    pub l: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumTable {
    pub rows: Vec<SpectrumRow>,
}

impl SpectrumTable {
    pub fn build(beta_min: f64, beta_max: f64, beta_steps: usize, l_max: usize) -> Self {
        let betas = beta_grid(beta_min, beta_max, beta_steps);
        let rows = betas
            .iter()
            .flat_map(|&beta| (0..=l_max).map(move |l| SpectrumRow { beta, l, lambda: lambda_l(l, beta) }))
            .collect();
        SpectrumTable { rows }
    }
}

/// `steps` equidistant values from `lo` to `hi` (a single value when they coincide).
pub fn beta_grid(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    if steps <= 1 || hi == lo {
        return vec![lo];
    }
    (0..steps).map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64).collect()
}
