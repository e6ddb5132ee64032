#![allow(dead_code)]

use causal_vp::matlin::{self, c, CMatrix};
use causal_vp::measure::DiscreteConfig;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A random point: Hermitian, with k_pos ≤ n positive and k_neg ≤ n negative eigenvalues.
pub fn random_point(f: usize, n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    let u = matlin::random_unitary(f, rng);
    let kp = rng.gen_range(0..=n);
    let kn = rng.gen_range(0..=n);
    let mut d = vec![0.0; f];
    for k in 0..kp {
        d[k] = rng.gen_range(0.05..2.0);
    }
    for k in 0..kn {
        d[n + k] = -rng.gen_range(0.05..2.0);
    }
    CMatrix::from_real_diag(&d).conjugate_by(&u)
}

/// Random normalized configuration with `m` points.
pub fn random_config(f: usize, n: usize, m: usize, rng: &mut ChaCha8Rng) -> DiscreteConfig {
    let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
    let tot: f64 = raw.iter().sum();
    let pts = raw.iter().map(|w| (w / tot, random_point(f, n, rng))).collect();
    DiscreteConfig::new(f, n, pts)
}

pub fn random_unit3(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v = [matlin::gauss(rng), matlin::gauss(rng), matlin::gauss(rng)];
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if r > 1e-3 {
            return [v[0] / r, v[1] / r, v[2] / r];
        }
    }
}

/// Random configuration satisfying Σ w p = 1: rank-one projectors along a random unitary
/// frame plus cancelling pairs ±q.
pub fn random_identity_config(f: usize, n: usize, pairs: usize, rng: &mut ChaCha8Rng) -> DiscreteConfig {
    let v = matlin::random_unitary(f, rng);
    let pair_w = if pairs == 0 { 0.0 } else { 0.25 / pairs as f64 };
    let w_frame = (1.0 - 2.0 * pair_w * pairs as f64) / f as f64;
    let mut pts = Vec::new();
    for j in 0..f {
        let proj = CMatrix::from_fn(f, |a, b| v[(a, j)] * v[(b, j)].conj());
        pts.push((w_frame, proj.scale(1.0 / w_frame)));
    }
    for _ in 0..pairs {
        let q = random_point(f, n, rng);
        pts.push((pair_w, q.clone()));
        pts.push((pair_w, q.scale(-1.0)));
    }
    DiscreteConfig::new(f, n, pts)
}

/// Block unitary on the ± subspaces followed by a boost mixing e_0 and e_n; preserves S.
pub fn random_s_unitary(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    let up = matlin::random_unitary(n, rng);
    let um = matlin::random_unitary(n, rng);
    let blocks = CMatrix::from_fn(2 * n, |a, b| match (a < n, b < n) {
        (true, true) => up[(a, b)],
        (false, false) => um[(a - n, b - n)],
        _ => c(0.0, 0.0),
    });
    let t: f64 = rng.gen_range(-1.5..1.5);
    let boost = CMatrix::from_fn(2 * n, |a, b| {
        if (a == 0 && b == 0) || (a == n && b == n) {
            c(t.cosh(), 0.0)
        } else if (a == 0 && b == n) || (a == n && b == 0) {
            c(t.sinh(), 0.0)
        } else if a == b {
            c(1.0, 0.0)
        } else {
            c(0.0, 0.0)
        }
    });
    &blocks * &boost
}
