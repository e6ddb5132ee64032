//! Closed chains, the two Lagrangians and the causal classification of point pairs.

use crate::matlin::{self, c, CMatrix, LinalgError, C64, TOL_RANK};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CausalClass {
    Timelike,
    Spacelike,
    Lightlike,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CausalError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("closed chain has {rank} nonzero eigenvalues, at most {max} allowed")]
    RankTooHigh { rank: usize, max: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// The closed chain A = p·q.
pub fn closed_chain(p: &CMatrix, q: &CMatrix) -> Result<CMatrix, CausalError> {
    if p.dim() != q.dim() {
        return Err(CausalError::DimMismatch(p.dim(), q.dim()));
    }
    Ok(p * q)
}

/// The `2n` eigenvalues of largest modulus, after checking that no further eigenvalue
/// exceeds the rank tolerance.
pub fn chain_eigenvalues(a: &CMatrix, n: usize) -> Result<Vec<C64>, CausalError> {
    let spec = matlin::eigenvalues(a)?;
    let tol = TOL_RANK * a.frob_norm();
    let rank = spec.eigenvalues.iter().filter(|z| z.norm() > tol).count();
    if rank > 2 * n {
        return Err(CausalError::RankTooHigh { rank, max: 2 * n });
    }
    let mut top = spec.top(2 * n);
    top.resize(2 * n, c(0.0, 0.0));
    Ok(top)
}

/// (1/4n) ΣΣ (|λ_i| − |λ_j|)², non-negative by construction.
pub fn lagrangian_from_eigs(eigs: &[C64]) -> f64 {
    let m = eigs.len();
    if m == 0 {
        return 0.0;
    }
    let mods: Vec<f64> = eigs.iter().map(|z| z.norm()).collect();
    let mut s = 0.0;
    for i in 0..m {
        for j in 0..m {
            let d = mods[i] - mods[j];
            s += d * d;
        }
    }
    s / (2.0 * m as f64)
}

/// |A²| − (1/2n)|A|² from the eigenvalue list (length 2n).
pub fn lagdef_from_eigs(eigs: &[C64]) -> f64 {
    let m = eigs.len() as f64;
    let w: f64 = eigs.iter().map(|z| z.norm()).sum();
    let w2: f64 = eigs.iter().map(|z| z.norm_sqr()).sum();
    w2 - w * w / m
}

/// Spectral weight squared |A|² from the eigenvalue list.
pub fn weight_sq_from_eigs(eigs: &[C64]) -> f64 {
    let w: f64 = eigs.iter().map(|z| z.norm()).sum();
    w * w
}

/// ½(|λ₊| − |λ₋|)² for chains of rank at most two.
pub fn lagrangian_simple(a: &CMatrix) -> Result<f64, CausalError> {
    let e = chain_eigenvalues(a, 1)?;
    let d = e[0].norm() - e[1].norm();
    Ok(0.5 * d * d)
}

/// |A²| − (1/2n)|A|² over the top 2n eigenvalues, evaluated in the double-sum form.
pub fn lagrangian_general(a: &CMatrix, n: usize) -> Result<f64, CausalError> {
    Ok(lagrangian_from_eigs(&chain_eigenvalues(a, n)?))
}

pub fn tol_causal(eigs: &[C64]) -> f64 {
    1e-8 * (1.0 + eigs.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Classification of a chain spectrum (the 2n leading eigenvalues).
pub fn classify_eigs(eigs: &[C64]) -> CausalClass {
    let tol = tol_causal(eigs);
    let mods: Vec<f64> = eigs.iter().map(|z| z.norm()).collect();
    let (lo, hi) = mods.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &m| (l.min(m), h.max(m)));
    if eigs.is_empty() || (hi - lo <= tol && pairs_conjugate(eigs, tol)) {
        return CausalClass::Spacelike;
    }
    if eigs.iter().all(|z| z.im.abs() <= tol) {
        CausalClass::Timelike
    } else {
        CausalClass::Lightlike
    }
}

fn pairs_conjugate(eigs: &[C64], tol: f64) -> bool {
    if eigs.len() % 2 != 0 {
        return false;
    }
    let mut used = vec![false; eigs.len()];
    for i in 0..eigs.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let target = eigs[i].conj();
        let partner = (0..eigs.len())
            .filter(|&j| !used[j])
            .min_by(|&a, &b| (eigs[a] - target).norm().total_cmp(&(eigs[b] - target).norm()));
        match partner {
            Some(j) if (eigs[j] - target).norm() <= tol => used[j] = true,
            _ => return false,
        }
    }
    true
}

pub fn classify(p: &CMatrix, q: &CMatrix, n: usize) -> Result<CausalClass, CausalError> {
    let a = closed_chain(p, q)?;
    Ok(classify_eigs(&chain_eigenvalues(&a, n)?))
}
