mod common;

use causal_vp::fermion::{self, FermionSystem, IndefiniteSpace};
use causal_vp::matlin::{self, c, CMatrix, C64};
use common::{random_config, random_identity_config, random_s_unitary};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_vec(d: usize, rng: &mut ChaCha8Rng) -> Vec<C64> {
    (0..d).map(|_| c(matlin::gauss(rng), matlin::gauss(rng))).collect()
}

fn random_system(n: usize, f: usize, sites: usize, rng: &mut ChaCha8Rng) -> FermionSystem {
    let raw: Vec<f64> = (0..sites).map(|_| rng.gen_range(0.1..1.0)).collect();
    let tot: f64 = raw.iter().sum();
    FermionSystem {
        space: IndefiniteSpace { n },
        weights: raw.iter().map(|w| w / tot).collect(),
        labels: Vec::new(),
        waves: (0..f).map(|_| (0..sites).map(|_| random_vec(2 * n, rng)).collect()).collect(),
    }
}

/// A random S-unitary: block unitaries on the ± subspaces times a hyperbolic boost mixing
/// the first + and first − component.
fn nonzero(v: Vec<C64>, tol: f64) -> Vec<C64> {
    v.into_iter().filter(|z| z.norm() > tol).collect()
}

fn same_multiset(a: &[C64], b: &[C64], tol: f64) -> bool {
    let mut used = vec![false; b.len()];
    a.len() == b.len()
        && a.iter().all(|x| {
            match (0..b.len()).filter(|&j| !used[j]).find(|&j| (b[j] - x).norm() <= tol) {
                Some(j) => {
                    used[j] = true;
                    true
                }
                None => false,
            }
        })
}

#[test]
fn s_unitaries_preserve_the_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let u = random_s_unitary(2, &mut rng);
    let s = IndefiniteSpace { n: 2 }.signature();
    assert!((&(&u.adjoint() * &s) * &u).dist(&s) < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn reconstruction_roundtrip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..=2);
        let f = rng.gen_range(2 * n..=8);
        let cfg = random_config(f, n, rng.gen_range(1..10), &mut rng);
        let sys = fermion::reconstruct(&cfg).unwrap();
        prop_assert!(fermion::roundtrip_residual(&cfg, &sys) < 1e-9);
        // gram = −Σ w F and tr P = Σ w Tr F
        let sum = cfg.weighted_sum();
        prop_assert!(fermion::gram_matrix(&sys).dist(&sum.scale(-1.0)) < 1e-9);
        prop_assert!((fermion::fermionic_trace(&sys) - sum.trace().re).abs() < 1e-9);
    }

    #[test]
    fn identity_constraint_gives_negative_identity_gram(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..=2);
        let f = rng.gen_range(2 * n..=8);
        let cfg = random_identity_config(f, n, rng.gen_range(0..3), &mut rng);
        prop_assert!(cfg.weighted_sum().dist(&CMatrix::identity(f)) < 1e-10);
        let sys = fermion::reconstruct(&cfg).unwrap();
        prop_assert!(fermion::gram_matrix(&sys).dist(&CMatrix::identity(f).scale(-1.0)) < 1e-9);
    }

    #[test]
    fn closed_chain_spectrum_matches_correlations(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..=2);
        let sys = random_system(n, rng.gen_range(2 * n..=6), 3, &mut rng);
        let (x, y) = (0, 2);
        let pxy = fermion::kernel_p(&sys, x, y);
        let pyx = fermion::kernel_p(&sys, y, x);
        let chain = matlin::eigenvalues(&(&pxy * &pyx)).unwrap().eigenvalues;
        let ff = matlin::eigenvalues(&(&fermion::local_correlation(&sys, x) * &fermion::local_correlation(&sys, y))).unwrap().eigenvalues;
        let scale = 1.0 + chain.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let a = nonzero(chain, 1e-9 * scale);
        let b = nonzero(ff, 1e-9 * scale);
        prop_assert!(same_multiset(&a, &b, 1e-9 * scale), "{:?} vs {:?}", a, b);
    }

    #[test]
    fn kernel_is_symmetric_for_the_form(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..=2);
        let sys = random_system(n, 3, 2, &mut rng);
        let u = random_vec(2 * n, &mut rng);
        let v = random_vec(2 * n, &mut rng);
        let apply = |m: &CMatrix, w: &[C64]| -> Vec<C64> { (0..w.len()).map(|a| (0..w.len()).map(|b| m[(a, b)] * w[b]).sum()).collect() };
        let lhs = sys.space.form(&u, &apply(&fermion::kernel_p(&sys, 0, 1), &v));
        let rhs = sys.space.form(&apply(&fermion::kernel_p(&sys, 1, 0), &u), &v);
        prop_assert!((lhs - rhs).norm() < 1e-10 * (1.0 + lhs.norm()));
    }

    #[test]
    fn inner_product_is_sesquilinear(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = random_system(2, 3, 4, &mut rng);
        let (a, b) = (c(matlin::gauss(&mut rng), matlin::gauss(&mut rng)), c(matlin::gauss(&mut rng), 0.7));
        let (p, q, r) = (&sys.waves[0], &sys.waves[1], &sys.waves[2]);
        let comb: Vec<Vec<C64>> = (0..4).map(|x| (0..4).map(|k| q[x][k] * a + r[x][k] * b).collect()).collect();
        let lhs = fermion::inner(&sys, p, &comb);
        let rhs = fermion::inner(&sys, p, q) * a + fermion::inner(&sys, p, r) * b;
        prop_assert!((lhs - rhs).norm() < 1e-10 * (1.0 + lhs.norm()));
        let conj = fermion::inner(&sys, &comb, p);
        prop_assert!((conj - lhs.conj()).norm() < 1e-10 * (1.0 + lhs.norm()));
    }

    #[test]
    fn local_gauge_invariance(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..=2);
        let sys = random_system(n, 4, 3, &mut rng);
        let us: Vec<CMatrix> = (0..3).map(|_| random_s_unitary(n, &mut rng)).collect();
        let moved = fermion::gauge_transform(&sys, &us);
        for x in 0..3 {
            let a = fermion::local_correlation(&sys, x);
            prop_assert!(fermion::local_correlation(&moved, x).dist(&a) < 1e-9 * (1.0 + a.frob_norm()));
        }
    }

    #[test]
    fn minus_s_p_is_positive(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..=2);
        let sys = random_system(n, 3, 3, &mut rng);
        let m = fermion::positivity_matrix(&sys);
        let (vals, _) = matlin::herm_eigen(&m).unwrap();
        prop_assert!(vals[0] > -1e-10 * (1.0 + m.frob_norm()));
    }
}
