mod common;

use common::{model, random_unit, unit};
use novikov_atlas::io::write_records_tsv;
use novikov_atlas::par::Exec;
use novikov_atlas::scanner::{
    diagram_features, energy_interval, octa_chart, octa_direction, open_exists, probe_direction, sweep, AngularDiagram,
    CellId, OpenStatus, ScanParams, Status, SweepConfig, SweepControl, SweepOutcome,
};
use novikov_atlas::section::PlaneDirection;
use novikov_atlas::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn field(b: &[f64]) -> PlaneDirection {
    PlaneDirection::Field(unit(b))
}

fn complete(outcome: SweepOutcome) -> AngularDiagram {
    match outcome {
        SweepOutcome::Complete(d) => d,
        SweepOutcome::Interrupted { .. } => panic!("sweep interrupted"),
    }
}

fn tsv(d: &AngularDiagram) -> Vec<u8> {
    let mut out = Vec::new();
    write_records_tsv(&mut out, d).unwrap();
    out
}

fn open_levels_are_contiguous(probes: &mut Vec<(f64, OpenStatus)>) -> bool {
    probes.sort_by(|a, b| a.0.total_cmp(&b.0));
    let open: Vec<usize> = probes.iter().enumerate().filter(|(_, p)| p.1 == OpenStatus::Open).map(|(k, _)| k).collect();
    match (open.first(), open.last()) {
        (Some(&a), Some(&b)) => probes[a..=b].iter().all(|p| p.1 != OpenStatus::ClosedOnly),
        _ => true,
    }
}

#[test]
fn open_existence_examples() {
    let p = ScanParams::default();
    let planes = open_exists(&model("planes"), &field(&[0.2, 0.5, 0.84]), 0.0, &p).unwrap();
    assert_eq!(planes.status, OpenStatus::Open);
    let cs = model("cos-sum");
    assert_eq!(open_exists(&cs, &field(&[0.0, 0.0, 1.0]), 2.0, &p).unwrap().status, OpenStatus::ClosedOnly);
    assert_eq!(open_exists(&cs, &field(&[0.0, 0.0, 1.0]), 0.5, &p).unwrap().status, OpenStatus::Open);
}

#[test]
fn open_levels_form_an_interval() {
    let p = ScanParams::default();
    let cs = model("cos-sum");
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for b in [vec![0.0, 0.0, 1.0], vec![0.3, 0.5, 0.81], vec![0.1, 0.2, 0.97]] {
        let dir = field(&b);
        let iv = energy_interval(&cs, &dir, &p, Exec::Parallel, false).unwrap();
        assert!(iv.contiguous, "coarse scan of {b:?} is not contiguous");
        let mut probes = iv.probes.clone();
        for _ in 0..10 {
            let c = rng.gen_range(-2.9..2.9);
            probes.push((c, open_exists(&cs, &dir, c, &p).unwrap().status));
        }
        assert!(open_levels_are_contiguous(&mut probes), "{b:?}: {probes:?}");
    }
}

#[test]
fn stable_subinterval_is_nested() {
    let p = ScanParams::default();
    let iv = energy_interval(&model("cos-sum"), &field(&[0.1, 0.2, 0.97]), &p, Exec::Parallel, true).unwrap();
    if let Some((a, b)) = iv.stable {
        assert!(iv.lo <= a && a <= b && b <= iv.hi, "{} ≤ {a} ≤ {b} ≤ {}", iv.lo, iv.hi);
    }
}

#[test]
fn planes_diagram_is_one_zone() {
    let d = complete(sweep(&model("planes"), &SweepConfig::fixed(0.0, 8, 1), SweepControl::default()).unwrap());
    let f = diagram_features(&d, model("planes").lattice());
    let big: Vec<_> = d.zones.iter().filter(|z| !z.witnesses.is_empty()).collect();
    assert_eq!(big.len(), 1);
    assert_eq!(big[0].label, vec![1, 0, 0]);
    assert!(f.gap_fraction < 0.05, "gap fraction {}", f.gap_fraction);
}

#[test]
fn closed_only_diagram_has_no_zones_and_one_orbit_type() {
    let m = model("cos-sum");
    let d = complete(sweep(&m, &SweepConfig::fixed(2.5, 8, 0), SweepControl::default()).unwrap());
    let f = diagram_features(&d, m.lattice());
    assert_eq!(f.zone_count, 0);
    assert!((f.closed_fraction - 1.0).abs() < 1e-9);
    assert!(!f.both_orbit_types);
}

#[test]
fn sweeps_are_deterministic_across_executors() {
    let m = model("cos-sum");
    let config = SweepConfig::fixed(-0.5, 6, 1);
    let run = |exec| {
        let control = SweepControl {
            exec,
            ..SweepControl::default()
        };
        tsv(&complete(sweep(&m, &config, control).unwrap()))
    };
    let a = run(Exec::Sequential);
    assert_eq!(a, run(Exec::Parallel));
    assert_eq!(a, run(Exec::Parallel));
}

#[test]
fn interrupted_sweeps_resume_to_the_same_records() {
    let m = model("cos-sum");
    let config = SweepConfig::fixed(-0.5, 6, 1);
    let reference = tsv(&complete(sweep(&m, &config, SweepControl::default()).unwrap()));
    let dir = tempfile::tempdir().unwrap();
    let cp = dir.path().join("sweep.ckpt");
    let first = SweepControl {
        checkpoint: Some(&cp),
        stop_after: Some(9),
        ..SweepControl::default()
    };
    assert!(matches!(sweep(&m, &config, first).unwrap(), SweepOutcome::Interrupted { evaluated: 9 }));
    let rest = SweepControl {
        checkpoint: Some(&cp),
        ..SweepControl::default()
    };
    assert_eq!(tsv(&complete(sweep(&m, &config, rest).unwrap())), reference);

    let edited = SweepConfig::fixed(-0.4, 6, 1);
    assert!(matches!(sweep(&m, &edited, rest), Err(Error::ChecksumMismatch { .. })));
}

#[test]
fn sweeps_resumed_in_small_steps_match_through_refinement() {
    let m = model("cos-sum");
    let config = SweepConfig::fixed(-0.5, 4, 1);
    let reference = tsv(&complete(sweep(&m, &config, SweepControl::default()).unwrap()));
    let dir = tempfile::tempdir().unwrap();
    let cp = dir.path().join("sweep.ckpt");
    let step = SweepControl {
        checkpoint: Some(&cp),
        stop_after: Some(5),
        ..SweepControl::default()
    };
    let mut stops = 0;
    let diagram = loop {
        match sweep(&m, &config, step).unwrap() {
            SweepOutcome::Interrupted { .. } => stops += 1,
            SweepOutcome::Complete(d) => break d,
        }
        assert!(stops < 100, "no progress");
    };
    // interruptions fell both in the base grid and among refined children
    assert!(stops >= 2, "{stops}");
    assert_eq!(tsv(&diagram), reference);
}

#[test]
fn zone_areas_settle_under_refinement() {
    let m = model("cos-sum");
    let area = |refine| {
        let d = complete(sweep(&m, &SweepConfig::fixed(-0.5, 8, refine), SweepControl::default()).unwrap());
        let mut by_label = std::collections::BTreeMap::<Vec<i64>, f64>::new();
        for z in &d.zones {
            *by_label.entry(z.label.clone()).or_default() += z.area_fraction;
        }
        by_label
    };
    let (a2, a3) = (area(2), area(3));
    for (label, a) in &a3 {
        if *a < 0.02 {
            continue;
        }
        let b = a2.get(label).copied().unwrap_or(0.0);
        assert!((a - b).abs() < 0.02, "{label:?}: {b} → {a}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chart_round_trip(u in -1.0f64..1.0, v in -1.0f64..1.0) {
        let d = octa_direction(u, v);
        let n = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((n - 1.0).abs() < 1e-12);
        let (a, b) = octa_chart(&d);
        let e = octa_direction(a, b);
        for k in 0..3 {
            prop_assert!((d[k] - e[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn cell_samples_stay_inside_their_cell(depth in 0u8..3, i in 0u32..64, j in 0u32..64) {
        let res = 8;
        let cell = CellId::new(depth, i % (8 << depth), j % (8 << depth));
        let (u, v) = cell.sample(res);
        prop_assert!(cell.contains(res, u, v));
        let a = cell.antipode(res);
        let d = cell.sample_direction(res);
        let (au, av) = octa_chart(&[-d[0], -d[1], -d[2]]);
        prop_assert!(a.contains(res, au, av));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn reversing_the_field_keeps_tag_and_label(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = random_unit(&mut rng, 3);
        let nb: Vec<f64> = b.iter().map(|x| -x).collect();
        let m = model("cos-sum");
        let p = ScanParams::default();
        let a = probe_direction(&m, &b, -0.5, &p).unwrap();
        let r = probe_direction(&m, &nb, -0.5, &p).unwrap();
        prop_assert_eq!(a.status, r.status);
        prop_assert_eq!(a.tag, r.tag);
        prop_assert_eq!(&a.label, &r.label);
        prop_assert!(a.status != Status::Zone || a.label.is_some());
    }
}
