mod common;

use causal_vp::fermion;
use causal_vp::homogeneous::random_measure;
use causal_vp::io::{self, ConfigFile, FermionFile, IoError, NegDefFile};
use causal_vp::measure;
use common::{random_config, random_identity_config};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn config_roundtrip_is_bit_exact(seed in any::<u64>(), n in 1usize..3, m in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = random_config(2 * n + 1, n, m, &mut rng);
        let text = io::to_json(&ConfigFile::from_config(&cfg));
        let back = io::parse_config(&text).unwrap();
        prop_assert_eq!(back.points.len(), cfg.points.len());
        for (a, b) in cfg.points.iter().zip(&back.points) {
            prop_assert_eq!(a.w, b.w);
            prop_assert_eq!(&a.p, &b.p);
        }
        prop_assert_eq!(measure::functionals(&cfg).unwrap(), measure::functionals(&back).unwrap());
    }

    #[test]
    fn fermion_roundtrip_is_bit_exact(seed in any::<u64>(), pairs in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = fermion::reconstruct(&random_identity_config(3, 1, pairs, &mut rng)).unwrap();
        let back = io::parse_fermion(&io::to_json(&FermionFile::from_system(&sys))).unwrap();
        prop_assert_eq!(back.weights, sys.weights);
        prop_assert_eq!(back.waves, sys.waves);
    }

    #[test]
    fn negdef_roundtrip_is_bit_exact(seed in any::<u64>(), points in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nu = random_measure(2, points, 1.5, &mut rng);
        let back = io::parse_negdef(&io::to_json(&NegDefFile::from_measure(&nu))).unwrap();
        for (a, b) in nu.support.iter().zip(&back.support) {
            prop_assert_eq!(a.p, b.p);
            prop_assert_eq!(&a.w, &b.w);
        }
    }
}

#[test]
fn truncated_file_reports_position() {
    let text = "{\n  \"f\": 2,\n  \"n\": 1,\n  \"points\": [\n";
    match io::parse_config(text) {
        Err(IoError::Parse { line, .. }) => assert_eq!(line, 5),
        other => panic!("{other:?}"),
    }
}

#[test]
fn invalid_configurations_are_rejected() {
    // non-Hermitian point
    let text = r#"{"f": 2, "n": 1, "points": [{"w": 1.0, "re": [[1, 2], [0, 1]]}]}"#;
    assert!(matches!(io::parse_config(text), Err(IoError::Invalid(_))));
    // wrong size
    let text = r#"{"f": 2, "n": 1, "points": [{"w": 1.0, "re": [[1]]}]}"#;
    assert!(matches!(io::parse_config(text), Err(IoError::Invalid(_))));
    // both forms
    let text = r#"{"f": 2, "n": 1, "beta": 0, "points": [{"w": 1.0, "v": [1, 0, 0], "re": [[1, 0], [0, 1]]}]}"#;
    assert!(matches!(io::parse_config(text), Err(IoError::Invalid(_))));
    // negative weight
    let text = r#"{"f": 2, "n": 1, "points": [{"w": -1.0, "re": [[1, 0], [0, 1]]}]}"#;
    assert!(io::parse_config(text).is_err());
}

#[test]
fn problem_with_start_parses() {
    let text = r#"{
        "objective": {"S_with_T_cap": 2.0},
        "constraints": ["C1"],
        "m": 2, "f": 2, "n": 1, "beta": 0.2,
        "start": {"f": 2, "n": 1, "beta": 0.2,
                  "points": [{"w": 0.5, "v": [0, 0, 1]}, {"w": 0.5, "v": [0, 0, -1]}]}
    }"#;
    let p = io::parse_problem(text).unwrap();
    assert_eq!(p.start.as_ref().unwrap().points.len(), 2);
    p.validate().unwrap();
}
