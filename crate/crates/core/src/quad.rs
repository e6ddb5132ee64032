//! Quadrature rules, Legendre polynomials and equal-area point sets.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on [−1, 1], nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() <= 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        dp = if d != 0.0 { d } else { dp };
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Gauss–Legendre rule mapped to [a, b].
pub fn gauss_legendre_on(a: f64, b: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let (h, m) = (0.5 * (b - a), 0.5 * (b + a));
    (x.iter().map(|t| m + h * t).collect(), w.iter().map(|v| v * h).collect())
}

/// Composite Gauss–Legendre rule over the panels given by consecutive `breaks`.
pub fn composite(breaks: &[f64], per_panel: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::new();
    let mut ws = Vec::new();
    for p in breaks.windows(2) {
        if p[1] > p[0] {
            let (x, w) = gauss_legendre_on(p[0], p[1], per_panel);
            xs.extend(x);
            ws.extend(w);
        }
    }
    (xs, ws)
}

/// P_l(x) by the three-term recurrence.
pub fn legendre(l: usize, x: f64) -> f64 {
    legendre_with_derivative(l, x).0
}

fn legendre_with_derivative(l: usize, x: f64) -> (f64, f64) {
    if l == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=l {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = if (1.0 - x * x).abs() > 0.0 {
        l as f64 * (p0 - x * p1) / (1.0 - x * x)
    } else {
        0.5 * (l * (l + 1)) as f64 * x.powi(l as i32 + 1)
    };
    (p1, d)
}

/// P_0(x), …, P_lmax(x).
pub fn legendre_all(lmax: usize, x: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(lmax + 1);
    p.push(1.0);
    if lmax >= 1 {
        p.push(x);
    }
    for k in 2..=lmax {
        let v = ((2 * k - 1) as f64 * x * p[k - 1] - (k - 1) as f64 * p[k - 2]) / k as f64;
        p.push(v);
    }
    p
}

/// Fibonacci lattice of `n` unit vectors, each carrying weight 1/n.
pub fn fibonacci_sphere(n: usize) -> Vec<[f64; 3]> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}
