mod common;

use synergy_core::synthetic::{canonical, sample_joint_at, CanonicalName};

#[test]
fn rebuilt_marginals_converge() {
    let j = sample_joint_at(11, 0, (2, 2, 2)).unwrap();
    let coarse = common::ingest_round_trip_tv(&j, 500, 1);
    let fine = common::ingest_round_trip_tv(&j, 10_000, 1);
    assert!(fine < 0.05, "{fine}");
    assert!(fine < coarse, "{fine} vs {coarse}");
}

#[test]
fn canonical_joints_round_trip() {
    for name in CanonicalName::ALL {
        let tv = common::ingest_round_trip_tv(&canonical(name), 10_000, 2);
        assert!(tv < 0.05, "{name}: {tv}");
    }
}
