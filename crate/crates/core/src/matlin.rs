//! Small dense complex matrices: Hermitian eigensystems, general spectra, spectral weights.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

pub type C64 = Complex64;

/// Entry mismatch allowed when deciding that a matrix is Hermitian.
pub const TOL_HERM: f64 = 1e-10;
/// Relative tolerance for spectral identities (trace, determinant, reconstruction).
pub const TOL_SPEC: f64 = 1e-9;
/// Rank decisions: singular values below `TOL_RANK * frob_norm` count as zero.
pub const TOL_RANK: f64 = 1e-9;
/// Roots closer than `CLUSTER_TOL * (1 + |z|)` are merged into one multiple root.
pub const CLUSTER_TOL: f64 = 1e-7;
pub const MAX_DIM: usize = 16;

const ABERTH_MAX_ITERS: usize = 800;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("matrix is not Hermitian (max asymmetry {0:e})")]
    NotHermitian(f64),
    #[error("root iteration did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("dimension {0} outside 1..=16")]
    BadDim(usize),
    #[error("non-finite matrix entry")]
    NonFinite,
}

pub const fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Square complex matrix stored row-major.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct CMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix({}x{})", self.dim, self.dim)?;
        for i in 0..self.dim {
            let row: Vec<String> = (0..self.dim)
                .map(|j| {
                    let z = self[(i, j)];
                    format!("{:+.6e}{:+.6e}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl CMatrix {
    pub fn zeros(dim: usize) -> Self {
        CMatrix { dim, data: vec![C64::new(0.0, 0.0); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = c(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        CMatrix { dim, data }
    }

    /// Build from row-major data; checks shape, dimension range and finiteness.
    pub fn from_vec(dim: usize, data: Vec<C64>) -> Result<Self, LinalgError> {
        if dim == 0 || dim > MAX_DIM {
            return Err(LinalgError::BadDim(dim));
        }
        if data.len() != dim * dim {
            return Err(LinalgError::DimMismatch(data.len(), dim * dim));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        Ok(CMatrix { dim, data })
    }

    pub fn from_real_diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = c(x, 0.0);
        }
        m
    }

    /// Real and imaginary parts given as nested rows.
    pub fn from_parts(re: &[Vec<f64>], im: Option<&[Vec<f64>]>) -> Result<Self, LinalgError> {
        let dim = re.len();
        let mut data = Vec::with_capacity(dim * dim);
        for (i, row) in re.iter().enumerate() {
            if row.len() != dim {
                return Err(LinalgError::DimMismatch(row.len(), dim));
            }
            for (j, &x) in row.iter().enumerate() {
                let y = match im {
                    Some(im) => {
                        if im.len() != dim || im[i].len() != dim {
                            return Err(LinalgError::DimMismatch(im.len(), dim));
                        }
                        im[i][j]
                    }
                    None => 0.0,
                };
                data.push(c(x, y));
            }
        }
        Self::from_vec(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn re_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|i| (0..self.dim).map(|j| self[(i, j)].re).collect()).collect()
    }

    pub fn im_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|i| (0..self.dim).map(|j| self[(i, j)].im).collect()).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        CMatrix { dim: self.dim, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn scale_c(&self, s: C64) -> Self {
        CMatrix { dim: self.dim, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn hermitian_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in i..self.dim {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian_defect() <= TOL_HERM
    }

    /// (A + A*)/2
    pub fn hermitian_part(&self) -> Self {
        Self::from_fn(self.dim, |i, j| (self[(i, j)] + self[(j, i)].conj()) * 0.5)
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.dim != other.dim {
            return Err(LinalgError::DimMismatch(self.dim, other.dim));
        }
        Ok(self * other)
    }

    /// Determinant by LU with partial pivoting.
    pub fn det(&self) -> C64 {
        let n = self.dim;
        let mut a = self.data.clone();
        let mut det = c(1.0, 0.0);
        for k in 0..n {
            let mut piv = k;
            for i in k + 1..n {
                if a[i * n + k].norm() > a[piv * n + k].norm() {
                    piv = i;
                }
            }
            if a[piv * n + k].norm() == 0.0 {
                return c(0.0, 0.0);
            }
            if piv != k {
                for j in 0..n {
                    a.swap(k * n + j, piv * n + j);
                }
                det = -det;
            }
            let d = a[k * n + k];
            det *= d;
            for i in k + 1..n {
                let f = a[i * n + k] / d;
                for j in k..n {
                    let t = a[k * n + j];
                    a[i * n + j] -= f * t;
                }
            }
        }
        det
    }

    /// Conjugation U A U*.
    pub fn conjugate_by(&self, u: &Self) -> Self {
        &(u * self) * &u.adjoint()
    }

    pub fn dist(&self, other: &Self) -> f64 {
        (self - other).frob_norm()
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim, "matrix product dimension mismatch");
        let n = self.dim;
        let mut out = CMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim);
        CMatrix { dim: self.dim, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect() }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim);
        CMatrix { dim: self.dim, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect() }
    }
}

impl Neg for &CMatrix {
    type Output = CMatrix;
    fn neg(self) -> CMatrix {
        self.scale(-1.0)
    }
}

/// Pauli matrices σ¹, σ², σ³.
pub fn pauli() -> [CMatrix; 3] {
    let z = c(0.0, 0.0);
    let one = c(1.0, 0.0);
    let i = c(0.0, 1.0);
    [
        CMatrix { dim: 2, data: vec![z, one, one, z] },
        CMatrix { dim: 2, data: vec![z, -i, i, z] },
        CMatrix { dim: 2, data: vec![one, z, z, -one] },
    ]
}

/// Eigenvalues with algebraic multiplicity, sorted by decreasing modulus.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<C64>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn sum(&self) -> C64 {
        self.eigenvalues.iter().sum()
    }

    pub fn product(&self) -> C64 {
        self.eigenvalues.iter().product()
    }

    pub fn max_modulus(&self) -> f64 {
        self.eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// The `k` eigenvalues of largest modulus.
    pub fn top(&self, k: usize) -> Vec<C64> {
        self.eigenvalues.iter().take(k).copied().collect()
    }

    fn sorted(mut eigenvalues: Vec<C64>) -> Self {
        eigenvalues.sort_by(|a, b| {
            b.norm()
                .total_cmp(&a.norm())
                .then(b.re.total_cmp(&a.re))
                .then(b.im.total_cmp(&a.im))
        });
        Spectrum { eigenvalues }
    }
}

/// Cyclic complex Jacobi on an arbitrary-size Hermitian matrix (row-major, length n²).
/// Returns ascending eigenvalues and the column-eigenvector matrix.
pub(crate) fn jacobi_eigen(n: usize, a: &mut [C64]) -> (Vec<f64>, Vec<C64>) {
    let mut v = vec![c(0.0, 0.0); n * n];
    for i in 0..n {
        v[i * n + i] = c(1.0, 0.0);
    }
    let total: f64 = a.iter().map(|z| z.norm_sqr()).sum::<f64>();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[p * n + q].norm_sqr();
            }
        }
        if off <= 1e-32 * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                let mag = apq.norm();
                if mag <= 1e-300 {
                    continue;
                }
                let app = a[p * n + p].re;
                let aqq = a[q * n + q].re;
                let theta = 0.5 * (2.0 * mag).atan2(aqq - app);
                let (s, co) = theta.sin_cos();
                let ph = (apq / mag).conj();
                // G = [[co, s], [-s ph, co ph]] acting on columns p, q
                let gpp = c(co, 0.0);
                let gpq = c(s, 0.0);
                let gqp = -ph * s;
                let gqq = ph * co;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = akp * gpp + akq * gqp;
                    a[k * n + q] = akp * gpq + akq * gqq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = gpp.conj() * apk + gqp.conj() * aqk;
                    a[q * n + k] = gpq.conj() * apk + gqq.conj() * aqk;
                }
                a[p * n + q] = c(0.0, 0.0);
                a[q * n + p] = c(0.0, 0.0);
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = vkp * gpp + vkq * gqp;
                    v[k * n + q] = vkp * gpq + vkq * gqq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].re.total_cmp(&a[j * n + j].re));
    let vals: Vec<f64> = order.iter().map(|&i| a[i * n + i].re).collect();
    let mut vecs = vec![c(0.0, 0.0); n * n];
    for (newc, &oldc) in order.iter().enumerate() {
        for k in 0..n {
            vecs[k * n + newc] = v[k * n + oldc];
        }
    }
    (vals, vecs)
}

/// Hermitian eigendecomposition A = U diag(values) U*, values ascending.
pub fn herm_eigen(a: &CMatrix) -> Result<(Vec<f64>, CMatrix), LinalgError> {
    let defect = a.hermitian_defect();
    if defect > TOL_HERM {
        return Err(LinalgError::NotHermitian(defect));
    }
    let mut work = a.hermitian_part().data;
    let (vals, vecs) = jacobi_eigen(a.dim, &mut work);
    Ok((vals, CMatrix { dim: a.dim, data: vecs }))
}

/// Coefficients (lowest degree first) of det(λI − A), via the Faddeev–LeVerrier recurrence.
pub fn char_poly(a: &CMatrix) -> Vec<C64> {
    let n = a.dim;
    let mut coeffs = vec![c(0.0, 0.0); n + 1];
    coeffs[n] = c(1.0, 0.0);
    let mut m = CMatrix::identity(n);
    for k in 1..=n {
        let am = a * &m;
        let ck = -am.trace() / k as f64;
        coeffs[n - k] = ck;
        m = am;
        for i in 0..n {
            m[(i, i)] += ck;
        }
    }
    coeffs
}

/// Faddeev–LeVerrier adjugate pieces: adj(λI − A) = Σ_{k=1}^{n} M_k λ^{n−k}.
pub fn adjugate_pieces(a: &CMatrix) -> (Vec<C64>, Vec<CMatrix>) {
    let n = a.dim;
    let mut coeffs = vec![c(0.0, 0.0); n + 1];
    coeffs[n] = c(1.0, 0.0);
    let mut pieces = Vec::with_capacity(n);
    let mut m = CMatrix::identity(n);
    for k in 1..=n {
        pieces.push(m.clone());
        let am = a * &m;
        let ck = -am.trace() / k as f64;
        coeffs[n - k] = ck;
        m = am;
        for i in 0..n {
            m[(i, i)] += ck;
        }
    }
    (coeffs, pieces)
}

pub fn poly_eval(coeffs: &[C64], z: C64) -> C64 {
    coeffs.iter().rev().fold(c(0.0, 0.0), |acc, &a| acc * z + a)
}

fn poly_eval_with_derivative(coeffs: &[C64], z: C64) -> (C64, C64) {
    let mut p = c(0.0, 0.0);
    let mut dp = c(0.0, 0.0);
    for &a in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + a;
    }
    (p, dp)
}

/// Roots of a polynomial (coefficients lowest degree first, leading coefficient nonzero).
/// Degree ≤ 2 is solved in closed form; higher degrees by Aberth–Ehrlich iteration.
pub fn poly_roots(coeffs: &[C64]) -> Result<Vec<C64>, LinalgError> {
    let mut deg = coeffs.len() - 1;
    while deg > 0 && coeffs[deg] == c(0.0, 0.0) {
        deg -= 1;
    }
    let lead = coeffs[deg];
    let mut p: Vec<C64> = coeffs[..=deg].iter().map(|&a| a / lead).collect();
    let mut roots = Vec::with_capacity(deg);
    while p.len() > 1 && p[0] == c(0.0, 0.0) {
        roots.push(c(0.0, 0.0));
        p.remove(0);
    }
    let d = p.len() - 1;
    match d {
        0 => {}
        1 => roots.push(-p[0]),
        2 => {
            let (b, cc) = (p[1], p[0]);
            let sq = (b * b - cc * 4.0).sqrt();
            let sgn = if (b.conj() * sq).re >= 0.0 { 1.0 } else { -1.0 };
            let q = -(b + sq * sgn) * 0.5;
            if q == c(0.0, 0.0) {
                roots.push(c(0.0, 0.0));
                roots.push(c(0.0, 0.0));
            } else {
                roots.push(q);
                roots.push(cc / q);
            }
        }
        _ => roots.extend(aberth(&p)?),
    }
    Ok(roots)
}

fn aberth(p: &[C64]) -> Result<Vec<C64>, LinalgError> {
    let d = p.len() - 1;
    let abs_coeffs: Vec<f64> = p.iter().map(|z| z.norm()).collect();
    let radius = if p[0].norm() > 0.0 { p[0].norm().powf(1.0 / d as f64) } else { 1.0 };
    let upper = (0..d)
        .map(|k| abs_coeffs[k].powf(1.0 / (d - k) as f64))
        .fold(0.0, f64::max)
        .max(1e-300);
    let r0 = radius.min(upper).max(upper * 1e-3);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_ab37);
    let mut z: Vec<C64> = (0..d)
        .map(|k| {
            let ang = std::f64::consts::TAU * (k as f64 + 0.25) / d as f64 + rng.gen_range(-0.1..0.1);
            let rad = r0 * (1.0 + rng.gen_range(-0.05..0.05));
            C64::from_polar(rad, ang)
        })
        .collect();
    let eps = f64::EPSILON;
    let mut extra = 0;
    for _it in 0..ABERTH_MAX_ITERS {
        let mut all_small = true;
        for i in 0..d {
            let (pv, dpv) = poly_eval_with_derivative(p, z[i]);
            let az = z[i].norm();
            let bound: f64 = abs_coeffs.iter().rev().fold(0.0, |acc, &a| acc * az + a);
            if pv.norm() <= 8.0 * d as f64 * eps * bound {
                continue;
            }
            all_small = false;
            let ratio = pv / dpv;
            let mut s = c(0.0, 0.0);
            for j in 0..d {
                if j != i {
                    s += (z[i] - z[j]).inv();
                }
            }
            let w = ratio / (c(1.0, 0.0) - ratio * s);
            if w.re.is_finite() && w.im.is_finite() {
                z[i] -= w;
            }
        }
        if all_small {
            extra += 1;
            if extra >= 2 {
                return Ok(z);
            }
        }
    }
    Err(LinalgError::NoConvergence(ABERTH_MAX_ITERS))
}

/// Rank-revealing factorization A ≈ X·Y with X n×r, Y r×n (row-major), taken from the
/// Hermitian dilation [[0, A], [A*, 0]] whose eigenvalues are ±σ_i.
fn rank_factor(a: &CMatrix) -> (usize, Vec<C64>, Vec<C64>) {
    let n = a.dim;
    let frob = a.frob_norm();
    let m = 2 * n;
    let mut dil = vec![c(0.0, 0.0); m * m];
    for i in 0..n {
        for j in 0..n {
            dil[i * m + (n + j)] = a[(i, j)];
            dil[(n + j) * m + i] = a[(i, j)].conj();
        }
    }
    let (vals, vecs) = jacobi_eigen(m, &mut dil);
    let tol = TOL_RANK * frob;
    let mut idx: Vec<usize> = (0..m).filter(|&k| vals[k] > tol).collect();
    idx.reverse();
    let r = idx.len();
    let s2 = std::f64::consts::SQRT_2;
    let mut x = vec![c(0.0, 0.0); n * r];
    let mut y = vec![c(0.0, 0.0); r * n];
    for (col, &k) in idx.iter().enumerate() {
        let sigma = vals[k];
        for i in 0..n {
            x[i * r + col] = vecs[i * m + k] * s2;
            y[col * n + i] = vecs[(n + i) * m + k].conj() * (s2 * sigma);
        }
    }
    (r, x, y)
}

fn poly_is_real(coeffs: &[C64], scale: f64) -> bool {
    let d = coeffs.len() - 1;
    let mut binom = 1.0;
    for k in (0..=d).rev() {
        let j = d - k;
        if j > 0 {
            binom = binom * (d - j + 1) as f64 / j as f64;
        }
        let ref_mag = coeffs[k].norm() + binom * scale.powi(j as i32);
        if coeffs[k].im.abs() > 1e-10 * ref_mag {
            return false;
        }
    }
    true
}

/// Loose tolerance for collecting candidate multiple roots; a multiplicity-m root is
/// perturbed by roughly eps^(1/m), which for m up to 16 stays well below this.
const CANDIDATE_TOL: f64 = 0.3;
/// A candidate group of size m is accepted when p, p', …, p^(m-1) all vanish at its refined
/// mean relative to their coefficient bounds.
const MULTIPLICITY_TOL: f64 = 1e-10;

fn union_find_groups(roots: &[C64], tol: impl Fn(C64, C64) -> f64) -> Vec<Vec<usize>> {
    let n = roots.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        let mut k = i;
        while p[k] != r {
            let nx = p[k];
            p[k] = r;
            k = nx;
        }
        r
    }
    for i in 0..n {
        for j in i + 1..n {
            if (roots[i] - roots[j]).norm() <= tol(roots[i], roots[j]) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[rj.max(ri)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let r = find(&mut parent, i);
        groups[r].push(i);
    }
    groups.into_iter().filter(|g| !g.is_empty()).collect()
}

fn derivative(p: &[C64]) -> Vec<C64> {
    (1..p.len()).map(|k| p[k] * k as f64).collect()
}

/// Tests whether `z` is (numerically) an m-fold root. The cluster mean is first refined
/// by Newton steps on p^(m-1), for which a true m-fold root is simple. Returns the
/// refined root on success.
fn multiple_root(coeffs: &[C64], z: C64, m: usize) -> Option<C64> {
    let mut derivs = vec![coeffs.to_vec()];
    let mut bounds = vec![coeffs.iter().map(|a| a.norm()).collect::<Vec<f64>>()];
    for k in 0..m {
        if derivs[k].len() < 2 {
            return None;
        }
        derivs.push(derivative(&derivs[k]));
        let b = &bounds[k];
        bounds.push((1..b.len()).map(|j| b[j] * j as f64).collect());
    }
    let mut z = z;
    for _ in 0..30 {
        let (q, dq) = (poly_eval(&derivs[m - 1], z), poly_eval(&derivs[m], z));
        if dq == c(0.0, 0.0) {
            break;
        }
        let step = q / dq;
        z -= step;
        if step.norm() <= 4.0 * f64::EPSILON * (1.0 + z.norm()) {
            break;
        }
    }
    let az = z.norm();
    for k in 0..m {
        let v = poly_eval(&derivs[k], z);
        let b: f64 = bounds[k].iter().rev().fold(0.0, |acc, &a| acc * az + a);
        if !(v.norm() <= MULTIPLICITY_TOL * b.max(f64::MIN_POSITIVE)) {
            return None;
        }
    }
    Some(z)
}

/// Replaces each numerically multiple root by the mean of its cluster.
fn cluster_roots(coeffs: &[C64], roots: &mut [C64]) {
    let loose = union_find_groups(roots, |a, b| CANDIDATE_TOL * (1.0 + a.norm().max(b.norm())));
    for g in loose {
        if g.len() < 2 {
            continue;
        }
        let mean = g.iter().map(|&i| roots[i]).sum::<C64>() / g.len() as f64;
        if let Some(z) = multiple_root(coeffs, mean, g.len()) {
            for &i in &g {
                roots[i] = z;
            }
            continue;
        }
        let sub: Vec<C64> = g.iter().map(|&i| roots[i]).collect();
        for h in union_find_groups(&sub, |a, b| CLUSTER_TOL * (1.0 + a.norm().max(b.norm()))) {
            let m = h.iter().map(|&k| sub[k]).sum::<C64>() / h.len() as f64;
            for &k in &h {
                roots[g[k]] = m;
            }
        }
    }
}

fn symmetrize_conjugates(roots: &mut [C64]) {
    let n = roots.len();
    let mut done = vec![false; n];
    for i in 0..n {
        if done[i] {
            continue;
        }
        done[i] = true;
        if roots[i].im == 0.0 {
            continue;
        }
        let target = roots[i].conj();
        let mut best: Option<usize> = None;
        for j in 0..n {
            if !done[j] && best.is_none_or(|b| (roots[j] - target).norm() < (roots[b] - target).norm()) {
                best = Some(j);
            }
        }
        let tol = CLUSTER_TOL * (1.0 + roots[i].norm());
        match best {
            Some(j) if (roots[j] - target).norm() <= tol => {
                let a = (roots[i] + roots[j].conj()) * 0.5;
                if a.im.abs() <= tol {
                    roots[i] = c(a.re, 0.0);
                    roots[j] = c(a.re, 0.0);
                } else {
                    roots[i] = a;
                    roots[j] = a.conj();
                }
                done[j] = true;
            }
            _ => roots[i] = c(roots[i].re, 0.0),
        }
    }
}

/// All eigenvalues of `a` with algebraic multiplicity.
pub fn eigenvalues(a: &CMatrix) -> Result<Spectrum, LinalgError> {
    if a.dim == 0 || a.dim > MAX_DIM {
        return Err(LinalgError::BadDim(a.dim));
    }
    let n = a.dim;
    if a.frob_norm() == 0.0 {
        return Ok(Spectrum { eigenvalues: vec![c(0.0, 0.0); n] });
    }
    if n <= 2 {
        let e = small_eigenvalues(a.data());
        return Ok(Spectrum::sorted(e[..n].to_vec()));
    }
    let (r, x, y) = rank_factor(a);
    let compressed = if r == n {
        a.clone()
    } else if r == 0 {
        return Ok(Spectrum { eigenvalues: vec![c(0.0, 0.0); n] });
    } else {
        // Y·X is r×r and carries the nonzero eigenvalues of X·Y ≈ A.
        CMatrix::from_fn(r, |i, j| (0..n).map(|k| y[i * n + k] * x[k * r + j]).sum())
    };
    let mut coeffs = char_poly(&compressed);
    let real = poly_is_real(&coeffs, compressed.frob_norm());
    if real {
        for z in coeffs.iter_mut() {
            z.im = 0.0;
        }
    }
    let mut roots = poly_roots(&coeffs)?;
    cluster_roots(&coeffs, &mut roots);
    if real {
        symmetrize_conjugates(&mut roots);
    }
    roots.resize(n, c(0.0, 0.0));
    Ok(Spectrum::sorted(roots))
}

/// Eigenvalues of a 1×1 or 2×2 row-major matrix, with the same rank, clustering and
/// conjugate-pair conventions as [`eigenvalues`]. Allocation free.
pub fn small_eigenvalues(a: &[C64]) -> [C64; 2] {
    let zero = c(0.0, 0.0);
    if a.len() == 1 {
        return [a[0], zero];
    }
    let f2: f64 = a.iter().map(|z| z.norm_sqr()).sum();
    if f2 == 0.0 {
        return [zero, zero];
    }
    let t = a[0] + a[3];
    let d = a[0] * a[3] - a[1] * a[2];
    let disc_s = (f2 * f2 - 4.0 * d.norm_sqr()).max(0.0).sqrt();
    let smax = ((f2 + disc_s) * 0.5).sqrt();
    let smin = d.norm() / smax;
    if smin <= TOL_RANK * f2.sqrt() {
        return [t, zero];
    }
    let frob = f2.sqrt();
    let real = t.im.abs() <= 1e-10 * (t.norm() + 2.0 * frob) && d.im.abs() <= 1e-10 * (d.norm() + f2);
    let (t, d) = if real { (c(t.re, 0.0), c(d.re, 0.0)) } else { (t, d) };
    let disc = t * t - d * 4.0;
    // a discriminant at roundoff level is an exact double root
    if disc.norm() <= 64.0 * f64::EPSILON * (t.norm_sqr() + 4.0 * f2) {
        let m = t * 0.5;
        return [m, m];
    }
    let sq = disc.sqrt();
    let sgn = if (t.conj() * sq).re >= 0.0 { 1.0 } else { -1.0 };
    let q = (t + sq * sgn) * 0.5;
    let mut r = [q, d / q];
    let tol = CLUSTER_TOL * (1.0 + r[0].norm().max(r[1].norm()));
    if (r[0] - r[1]).norm() <= tol {
        let m = (r[0] + r[1]) * 0.5;
        r = [m, m];
    }
    if real {
        if r[0].im != 0.0 || r[1].im != 0.0 {
            if (r[0] - r[1].conj()).norm() <= tol {
                let a = (r[0] + r[1].conj()) * 0.5;
                r = [a, a.conj()];
            } else {
                r = [c(r[0].re, 0.0), c(r[1].re, 0.0)];
            }
        }
    }
    r
}

pub fn spectral_weight(a: &CMatrix) -> Result<f64, LinalgError> {
    Ok(eigenvalues(a)?.eigenvalues.iter().map(|z| z.norm()).sum())
}

pub fn spectral_weight_sq(a: &CMatrix) -> Result<f64, LinalgError> {
    Ok(eigenvalues(a)?.eigenvalues.iter().map(|z| z.norm_sqr()).sum())
}

pub fn frob_norm(a: &CMatrix) -> f64 {
    a.frob_norm()
}

/// Pairwise (tree) summation in a fixed order, independent of how the terms were produced.
pub fn tree_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            tree_sum(&xs[..mid]) + tree_sum(&xs[mid..])
        }
    }
}

/// Haar-random unitary via Gram–Schmidt on a complex Gaussian matrix.
pub fn random_unitary<R: Rng>(dim: usize, rng: &mut R) -> CMatrix {
    let mut cols: Vec<Vec<C64>> = Vec::with_capacity(dim);
    while cols.len() < dim {
        let mut v: Vec<C64> = (0..dim).map(|_| c(gauss(rng), gauss(rng))).collect();
        for u in &cols {
            let proj: C64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (vi, ui) in v.iter_mut().zip(u) {
                *vi -= proj * ui;
            }
        }
        let nrm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if nrm > 1e-8 {
            cols.push(v.into_iter().map(|z| z / nrm).collect());
        }
    }
    CMatrix::from_fn(dim, |i, j| cols[j][i])
}

/// Standard normal sample by Box–Muller.
pub fn gauss<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn random_matrix<R: Rng>(dim: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(dim, |_, _| c(gauss(rng), gauss(rng)))
}

pub fn random_hermitian<R: Rng>(dim: usize, rng: &mut R) -> CMatrix {
    random_matrix(dim, rng).hermitian_part()
}
