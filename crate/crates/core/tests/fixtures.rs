//! The checked-in reference curves must match what the dense oracle produces
//! today for the configs they were generated from.

use std::fs;
use std::path::PathBuf;

use rbm_otoc::experiment::{self, RunConfig};
use rbm_otoc::otoc::OtocCurve;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn fixture(name: &str) -> OtocCurve {
    let text = fs::read_to_string(root().join("tests/fixtures").join(format!("{name}.oracle.tsv"))).unwrap();
    OtocCurve::read_table(text.as_bytes()).unwrap()
}

fn check(config: PathBuf, name: &str) {
    let cfg = RunConfig::load(&config).unwrap();
    let fresh = experiment::oracle_curve(&cfg).unwrap();
    let frozen = fixture(name);
    assert_eq!(fresh.points.len(), frozen.points.len());
    for (a, b) in fresh.points.iter().zip(&frozen.points) {
        assert_eq!(a.t, b.t);
        assert!((a.f - b.f).norm() < 1e-10, "{name} t={}: {} vs {}", a.t, a.f, b.f);
        assert!((a.err - b.err).abs() < 1e-10);
    }
    for key in ["lattice", "h", "v1", "v2", "seed", "initial"] {
        assert_eq!(fresh.metadata.get(key), frozen.metadata.get(key), "{name}: metadata {key}");
    }
    assert!(frozen.metadata["generator"].contains("dense oracle"));
}

#[test]
fn nearest_neighbour_fixture() {
    check(root().join("../../configs/fig2a_3x4.cfg"), "fig2a_3x4");
}

#[test]
fn second_neighbour_fixture() {
    check(root().join("../../configs/fig2b_3x4.cfg"), "fig2b_3x4");
}

#[test]
fn ground_state_fixture() {
    check(root().join("../../configs/fig3_ground.cfg"), "fig3_ground");
}

#[test]
fn thermal_fixture() {
    check(root().join("../../configs/fig4_thermal.cfg"), "fig4_thermal");
}

#[test]
fn uniform_superposition_fixture() {
    check(root().join("tests/fixtures/uniform_3x4.cfg"), "uniform_3x4");
    let f = fixture("uniform_3x4");
    assert_eq!(f.points[0].f.re, 1.0);
    assert!(f.points.iter().all(|p| p.f.im.abs() < 1e-12 && p.f.norm() <= 1.0 + 1e-12));
}
