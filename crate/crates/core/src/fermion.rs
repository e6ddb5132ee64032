//! Discrete fermion systems: wave functions at finitely many sites with values in C^2n,
//! carrying the indefinite inner product of signature (n, n).

use crate::matlin::{self, c, CMatrix, LinalgError, C64};
use crate::measure::{validate_point, DiscreteConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FermionError {
    #[error("site {index}: {reason}")]
    InvalidPoint { index: usize, reason: String },
    #[error("inconsistent shape: {0}")]
    BadShape(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// C^2n with ≺u|v≻ = u* S v, S = diag(1,…,1, −1,…,−1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndefiniteSpace {
    pub n: usize,
}

impl IndefiniteSpace {
    pub fn dim(&self) -> usize {
        2 * self.n
    }

    pub fn sign(&self, a: usize) -> f64 {
        if a < self.n {
            1.0
        } else {
            -1.0
        }
    }

    pub fn signature(&self) -> CMatrix {
        CMatrix::from_real_diag(&(0..self.dim()).map(|a| self.sign(a)).collect::<Vec<_>>())
    }

    /// ≺u|v≻.
    pub fn form(&self, u: &[C64], v: &[C64]) -> C64 {
        (0..self.dim()).map(|a| u[a].conj() * v[a] * self.sign(a)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FermionSystem {
    pub space: IndefiniteSpace,
    pub weights: Vec<f64>,
    #[serde(default)]
    pub labels: Vec<String>,
    /// `waves[l][x]` is ψ_l(x) ∈ C^2n.
    pub waves: Vec<Vec<Vec<C64>>>,
}

impl FermionSystem {
    pub fn f(&self) -> usize {
        self.waves.len()
    }

    pub fn sites(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self) -> Result<(), FermionError> {
        let d = self.space.dim();
        if self.space.n == 0 {
            return Err(FermionError::BadShape("n must be positive".into()));
        }
        if !self.labels.is_empty() && self.labels.len() != self.sites() {
            return Err(FermionError::BadShape("one label per site".into()));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(FermionError::BadShape("weights must be positive".into()));
        }
        for (l, wave) in self.waves.iter().enumerate() {
            if wave.len() != self.sites() {
                return Err(FermionError::BadShape(format!("wave {l} has {} sites", wave.len())));
            }
            if wave.iter().any(|v| v.len() != d || v.iter().any(|z| !(z.re.is_finite() && z.im.is_finite()))) {
                return Err(FermionError::BadShape(format!("wave {l} needs finite values in C^{d}")));
            }
        }
        Ok(())
    }
}

/// ⟨ψ|φ⟩ = Σ_x w_x ≺ψ(x)|φ(x)≻ for site-indexed vectors.
pub fn inner(sys: &FermionSystem, psi: &[Vec<C64>], phi: &[Vec<C64>]) -> C64 {
    (0..sys.sites()).map(|x| sys.space.form(&psi[x], &phi[x]) * sys.weights[x]).sum()
}

/// (F_x)_jk = −≺ψ_j(x)|ψ_k(x)≻.
pub fn local_correlation(sys: &FermionSystem, x: usize) -> CMatrix {
    let f = sys.f();
    CMatrix::from_fn(f, |j, k| -sys.space.form(&sys.waves[j][x], &sys.waves[k][x]))
}

/// P(x,y) = −Σ_l ψ_l(x) ≺ψ_l(y)|·≻ as a 2n×2n matrix.
pub fn kernel_p(sys: &FermionSystem, x: usize, y: usize) -> CMatrix {
    let sp = sys.space;
    CMatrix::from_fn(sp.dim(), |a, b| {
        -sys.waves.iter().map(|w| w[x][a] * w[y][b].conj() * sp.sign(b)).sum::<C64>()
    })
}

/// (⟨ψ_j|ψ_k⟩)_jk.
pub fn gram_matrix(sys: &FermionSystem) -> CMatrix {
    let f = sys.f();
    CMatrix::from_fn(f, |j, k| inner(sys, &sys.waves[j], &sys.waves[k]))
}

/// tr P = −Σ_l ⟨ψ_l|ψ_l⟩, which equals Σ_x w_x Tr F_x.
pub fn fermionic_trace(sys: &FermionSystem) -> f64 {
    -gram_matrix(sys).trace().re
}

/// The block matrix (−S P(x,y))·√(w_x w_y) over (site, component); it is the Gram matrix
/// of the vectors S ψ_l and hence positive semi-definite.
pub fn positivity_matrix(sys: &FermionSystem) -> CMatrix {
    let d = sys.space.dim();
    let m = d * sys.sites();
    let s = sys.space;
    CMatrix::from_fn(m, |i, j| {
        let (x, a) = (i / d, i % d);
        let (y, b) = (j / d, j % d);
        let p: C64 = -sys.waves.iter().map(|w| w[x][a] * w[y][b].conj() * s.sign(b)).sum::<C64>();
        -p * s.sign(a) * (sys.weights[x] * sys.weights[y]).sqrt()
    })
}

/// Applies ψ(x) → U(x) ψ(x) at every site.
pub fn gauge_transform(sys: &FermionSystem, us: &[CMatrix]) -> FermionSystem {
    let mut out = sys.clone();
    for wave in out.waves.iter_mut() {
        for (x, v) in wave.iter_mut().enumerate() {
            let u = &us[x];
            *v = (0..v.len()).map(|a| (0..v.len()).map(|b| u[(a, b)] * v[b]).sum()).collect();
        }
    }
    out
}

/// Wave functions whose local correlation matrices reproduce the points of `cfg`.
/// With F(x) = U diag(ν) U*, ρ = diag(√|ν|) over the n lowest and n highest eigenvalues
/// (negatives first), and s = diag(1ⁿ, −1ⁿ), the values are ψ_l^a(x) = (ρ U*)_{a l}.
pub fn reconstruct(cfg: &DiscreteConfig) -> Result<FermionSystem, FermionError> {
    let (f, n) = (cfg.f, cfg.n);
    let space = IndefiniteSpace { n };
    let mut waves = vec![vec![vec![c(0.0, 0.0); 2 * n]; cfg.points.len()]; f];
    for (x, wp) in cfg.points.iter().enumerate() {
        if wp.p.dim() != f {
            return Err(FermionError::InvalidPoint { index: x, reason: "dimension differs from f".into() });
        }
        validate_point(&wp.p, n).map_err(|reason| FermionError::InvalidPoint { index: x, reason })?;
        let (vals, u) = matlin::herm_eigen(&wp.p)?;
        let idx: Vec<usize> = (0..n).chain(f - n..f).collect();
        for (a, &k) in idx.iter().enumerate() {
            // the blocks must carry the right signs; a misplaced eigenvalue is a zero
            let nu = if a < n { vals[k].min(0.0) } else { vals[k].max(0.0) };
            let rho = nu.abs().sqrt();
            for (l, wave) in waves.iter_mut().enumerate() {
                wave[x][a] = u[(l, k)].conj() * rho;
            }
        }
    }
    Ok(FermionSystem { space, weights: cfg.points.iter().map(|p| p.w).collect(), labels: Vec::new(), waves })
}

/// max over sites of the entrywise deviation between F_x and the configuration point.
pub fn roundtrip_residual(cfg: &DiscreteConfig, sys: &FermionSystem) -> f64 {
    cfg.points
        .iter()
        .enumerate()
        .map(|(x, wp)| (&local_correlation(sys, x) - &wp.p).max_abs())
        .fold(0.0, f64::max)
}
