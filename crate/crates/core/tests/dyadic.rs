use fracabp::dyadic::{cz_verify, dyadic_decompose, minimal_cover, CellSet, DyadicCube};
use fracabp::experiments::{cz_trials, random_cz_instance, CzConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn cube_family_relations() {
    let q = DyadicCube::new(2, 3, &[5, 2]).unwrap();
    assert_eq!(q.side(), 0.125);
    let p = q.predecessor().unwrap();
    assert_eq!(p, DyadicCube::new(2, 2, &[2, 1]).unwrap());
    assert!(p.children().contains(&q));
    assert_eq!(p.children().len(), 4);
    assert!(DyadicCube::unit(2).predecessor().is_none());
    assert!(DyadicCube::new(2, 1, &[2, 0]).is_err());
}

#[test]
fn corner_square_decomposes_to_itself() {
    let a = CellSet::from_fn(2, 5, |x| x[0] < 0.0 && x[1] < 0.0);
    let cubes = dyadic_decompose(&a, 0.5, 5).unwrap();
    assert_eq!(cubes, vec![DyadicCube::new(2, 1, &[0, 0]).unwrap()]);
}

#[test]
fn dense_set_is_rejected() {
    let a = CellSet::full(2, 3);
    assert!(dyadic_decompose(&a, 0.5, 3).is_err());
    assert!(dyadic_decompose(&CellSet::empty(2, 3), 1.5, 3).is_err());
}

#[test]
fn cover_must_contain_the_set() {
    let a = CellSet::from_fn(2, 4, |x| x[0] < 0.5);
    let b = CellSet::empty(2, 4);
    assert!(cz_verify(&a, &b, 0.6, 4).is_err());
}

#[test]
fn minimal_cover_satisfies_the_lemma() {
    let a = CellSet::from_fn(2, 6, |x| (x[0] - 0.3).powi(2) + (x[1] - 0.6).powi(2) < 0.04);
    let delta = 0.3;
    let b = minimal_cover(&a, delta, 6).unwrap();
    let rep = cz_verify(&a, &b, delta, 6).unwrap();
    assert!(rep.hypothesis_a && rep.hypothesis_b && rep.conclusion);
    assert!(a.is_subset(&b));
}

#[test]
fn failing_cover_has_a_witness() {
    let a = CellSet::from_fn(2, 4, |x| x[0] < 0.125 && x[1] < 0.125);
    let rep = cz_verify(&a, &a, 0.1, 4).unwrap();
    assert!(!rep.hypothesis_b);
    assert!(rep.witness.is_some());
    assert!(rep.consistent());
}

#[test]
fn three_dimensional_trials() {
    let cfg = CzConfig { trials: 200, n: 3, gen: 4, max_gen: 4, seed: 3 };
    let s = cz_trials(&cfg).unwrap();
    assert!(s.violations.is_empty());
    assert_eq!(s.admissible, s.trials);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn random_instances_obey_the_lemma(seed in any::<u64>()) {
        let cfg = CzConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b, delta) = random_cz_instance(&mut rng, &cfg).unwrap();
        let rep = cz_verify(&a, &b, delta, cfg.max_gen).unwrap();
        prop_assert!(rep.hypothesis_a && rep.hypothesis_b);
        prop_assert!(a.measure() <= delta * b.measure() + 1e-15);
        for q in dyadic_decompose(&a, delta, cfg.max_gen).unwrap() {
            let cells = q.cells(a.gen);
            let inside = cells.iter().filter(|&&c| a.bits[c]).count();
            prop_assert!(inside as f64 > delta * cells.len() as f64);
            if let Some(p) = q.predecessor() {
                prop_assert!(p.cells(a.gen).iter().all(|&c| b.bits[c]));
            }
        }
    }
}
