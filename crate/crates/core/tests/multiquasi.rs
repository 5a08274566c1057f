mod common;

use common::{model, random_unit};
use novikov_atlas::multiquasi::{asymptotic_direction_4d, strip_confinement_check, ConfinementBudget};
use novikov_atlas::par::Exec;
use novikov_atlas::scanner::ScanParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// Contains the period e2 and no other lattice vector up to the search bound.
const U: [f64; 4] = [0.0, 1.0, 0.0, 0.0];
const V: [f64; 4] = [0.61, 0.0, 0.37, 0.2236];

#[test]
fn asymptotic_direction_is_shift_invariant() {
    let m = model("cos-sum4");
    let mut p = ScanParams::default();
    let a = asymptotic_direction_4d(&m, &U, &V, -0.5, &p, 32, Exec::Parallel).unwrap();
    assert_eq!(a.shifts, 32);
    assert!(a.open_shifts >= 24, "open in {} of 32", a.open_shifts);
    assert!(a.max_pairwise < 0.01, "{}", a.max_pairwise);
    assert_eq!(a.structure.w.iter().map(|x| x.abs()).collect::<Vec<_>>(), vec![0, 1, 0, 0]);

    p.seed ^= 0x5eed;
    let b = asymptotic_direction_4d(&m, &U, &V, -0.5, &p, 32, Exec::Parallel).unwrap();
    let dot = a.direction[0] * b.direction[0] + a.direction[1] * b.direction[1];
    assert!(dot.abs() > 1.0 - 1e-4, "{:?} vs {:?}", a.direction, b.direction);
}

#[test]
fn diameter_bound_is_stable_under_shift_doubling() {
    let m = model("cos-sum4");
    let p = ScanParams::default();
    let d32 = asymptotic_direction_4d(&m, &U, &V, -0.5, &p, 32, Exec::Parallel).unwrap().diameter_bound;
    let d64 = asymptotic_direction_4d(&m, &U, &V, -0.5, &p, 64, Exec::Parallel).unwrap().diameter_bound;
    assert!(d32 > 0.0);
    assert!((d64 - d32).abs() <= 0.1 * d32, "{d32} → {d64}");
}

#[test]
fn confinement_label_survives_small_tilts() {
    let m = model("planes4-perturbed");
    let p = ScanParams::default();
    let budget = ConfinementBudget::default();
    let u = [0.8, 0.31, -0.47, 0.2];
    let v = [0.1, 0.9, 0.33, -0.61];
    let base = strip_confinement_check(&m, &u, &v, 0.1, &p, &budget, Exec::Parallel).unwrap();
    assert!(base.confined, "{base:?}");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..3 {
        let du = random_unit(&mut rng, 4);
        let dv = random_unit(&mut rng, 4);
        let tu: Vec<f64> = u.iter().zip(&du).map(|(a, d)| a + 1e-3 * d).collect();
        let tv: Vec<f64> = v.iter().zip(&dv).map(|(a, d)| a + 1e-3 * d).collect();
        let r = strip_confinement_check(&m, &tu, &tv, 0.1, &p, &budget, Exec::Parallel).unwrap();
        assert_eq!(r.label, base.label, "{tu:?} {tv:?}");
    }
}

#[test]
fn three_dimensional_models_are_rejected() {
    let p = ScanParams::default();
    let m = model("cos-sum");
    assert!(strip_confinement_check(&m, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], 0.0, &p, &ConfinementBudget::default(), Exec::Sequential).is_err());
    assert!(asymptotic_direction_4d(&m, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], 0.0, &p, 4, Exec::Sequential).is_err());
}
