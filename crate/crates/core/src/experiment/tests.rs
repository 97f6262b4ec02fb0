use super::*;

const SMALL: &str = r#"
version = 1
kind = "pure"
name = "small"
seed = 3

[lattice]
rows = 2
cols = 2

[time]
t_max = 0.04
n_points = 3

[sampler]
n_chains = 2
burn_in_sweeps = 20

[dynamics]
step_size = 0.01
samples_per_step = 300

[overlap]
samples = 1000
"#;

fn small() -> RunConfig {
    RunConfig::from_toml(SMALL).unwrap()
}

#[test]
fn defaults_are_filled_in() {
    let cfg = small();
    assert_eq!(cfg.hamiltonian, HamiltonianSection { h: 1.0, j: 1.0 });
    assert_eq!(cfg.initial_kind(), InitialKind::Random);
    assert_eq!(cfg.rbm.alpha, 2);
    assert_eq!(cfg.training, SrSection::training());
    assert_eq!(cfg.time.grid(), vec![0.0, 0.02, 0.04]);
    cfg.validate().unwrap();
    let r = cfg.resolved();
    assert_eq!(r.sampler.n_chains, Some(2));
    assert_eq!(r.initial.kind, Some(InitialKind::Random));
    let minimal = RunConfig::from_toml("version = 1\nkind = \"thermal\"\n").unwrap();
    assert_eq!(minimal.initial_kind(), InitialKind::Ensemble);
    assert!(minimal.resolved().sampler.n_chains.unwrap() >= 1);
}

#[test]
fn validation_lists_every_problem() {
    let text = SMALL.replace("rows = 2", "rows = 1").replace("t_max = 0.04", "t_max = -1.0").replace("version = 1", "version = 7")
        + "\n[operators]\nv1 = { pauli = \"x\", row = 0, col = 0 }\nv2 = { pauli = \"y\", row = 5, col = 0 }\n";
    let err = RunConfig::from_toml(&text).unwrap().validate().unwrap_err();
    let Error::Config(list) = err else { panic!("expected a config error") };
    assert!(list.iter().any(|e| e.starts_with("version")));
    assert!(list.iter().any(|e| e.starts_with("lattice")));
    assert!(list.iter().any(|e| e.starts_with("time.t_max")));
    assert!(list.iter().any(|e| e.starts_with("operators.v2")));
}

#[test]
fn malformed_files_are_config_errors() {
    assert!(matches!(RunConfig::from_toml("version = 1\nkind = \"pure\"\nbogus = 3\n"), Err(Error::Config(_))));
    assert!(matches!(RunConfig::from_toml("version = 1\nkind = \"sideways\"\n"), Err(Error::Config(_))));
    assert!(matches!(RunConfig::from_toml("kind = \"pure\"\n"), Err(Error::Config(_))));
    let mismatch = SMALL.replace("[time]", "[initial]\nkind = \"ground\"\n\n[time]");
    assert!(RunConfig::from_toml(&mismatch).unwrap().validate().is_err());
}

#[test]
fn toml_round_trip() {
    let r = small().resolved();
    assert_eq!(RunConfig::from_toml(&r.to_toml().unwrap()).unwrap(), r);
}

fn curve(points: &[(f64, f64, f64)]) -> OtocCurve {
    OtocCurve {
        points: points.iter().map(|&(t, re, im)| OtocPoint { t, f: C64::new(re, im), err: 0.0, phase_correction: 0.0 }).collect(),
        metadata: BTreeMap::new(),
    }
}

#[test]
fn comparing_a_curve_with_itself() {
    let a = curve(&[(0.0, 1.0, 0.0), (0.1, 0.95, 0.01), (0.2, 0.8, 0.03)]);
    let cmp = compare_curves(&a, &a, false, 0.01, None).unwrap();
    assert!(cmp.rows.iter().all(|r| r.1 == 0.0 && r.2 == 0.0));
    assert!(cmp.within_tolerance());
}

#[test]
fn shifted_grid_needs_interpolation() {
    let a = curve(&[(0.0, 1.0, 0.0), (0.1, 0.9, 0.0), (0.2, 0.7, 0.0), (0.3, 0.4, 0.0)]);
    let shifted = curve(&[(0.1, 1.0, 0.0), (0.2, 0.9, 0.0), (0.3, 0.7, 0.0), (0.4, 0.4, 0.0)]);
    assert!(compare_curves(&a, &shifted, false, 0.01, None).is_err());
    let cmp = compare_curves(&a, &shifted, true, 0.05, None).unwrap();
    assert_eq!(cmp.rows.len(), 3);
    assert!(cmp.max_abs_re > 0.0);
    assert_eq!(cmp.first_exceed_re, Some(0.1));
    // halfway between samples
    let mid = compare_curves(&curve(&[(0.15, 0.0, 0.0)]), &a, true, 1.0, None).unwrap();
    assert!((mid.rows[0].3 - 0.8).abs() < 1e-12);
}

#[test]
fn window_restricts_checked_rows() {
    let a = curve(&[(0.0, 1.0, 0.0), (0.1, 0.9, 0.0), (0.2, 0.5, 0.0)]);
    let b = curve(&[(0.0, 1.0, 0.0), (0.1, 0.91, 0.0), (0.2, 0.8, 0.0)]);
    let cmp = compare_curves(&a, &b, false, 0.05, Some(0.85)).unwrap();
    assert!(cmp.within_tolerance());
    assert!((cmp.max_abs_re - 0.01).abs() < 1e-12);
    assert!(!compare_curves(&a, &b, false, 0.05, None).unwrap().within_tolerance());
}

#[test]
fn oracle_curve_starts_at_one() {
    let o = oracle_curve(&small()).unwrap();
    assert_eq!(o.points.len(), 3);
    assert!((o.points[0].f - C64::new(1.0, 0.0)).norm() < 1e-12);
    assert_eq!(o.metadata["lattice"], "2x2");
    assert!(o.metadata["generator"].contains("oracle"));

    let thermal = RunConfig::from_toml(&SMALL.replace("kind = \"pure\"", "kind = \"thermal\"")).unwrap();
    let t = oracle_curve(&thermal).unwrap();
    assert!((t.points[0].f - C64::new(1.0, 0.0)).norm() < 1e-12);
    assert_eq!(t.metadata["sign_vectors"].split(',').count(), 10);
}

#[test]
fn runs_are_byte_reproducible_and_manifests_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    let cfg = small();
    let out = run(&cfg, &a, dir.path()).unwrap();
    run(&cfg, &b, dir.path()).unwrap();
    let names: Vec<String> = out.files.iter().map(|p| p.file_name().unwrap().to_str().unwrap().to_string()).collect();
    for expected in ["small.curve.tsv", "small.curve.json", "small.plot.dat", "small.phaselog.tsv", "small.oracle.tsv", "small.compare.tsv", "small.manifest.toml"] {
        assert!(names.iter().any(|n| n == expected), "missing {expected}");
    }
    for n in &names {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap(), "{n} differs");
    }
    let manifest = RunConfig::load(&a.join("small.manifest.toml")).unwrap();
    assert!(manifest.manifest.is_some());
    run(&manifest, &c, dir.path()).unwrap();
    for n in &names {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(c.join(n)).unwrap(), "{n} differs after re-execution");
    }
    let table = OtocCurve::read_table(fs::read_to_string(a.join("small.curve.tsv")).unwrap().as_bytes()).unwrap();
    assert_eq!(table.metadata["seed"], "3");
    assert_eq!(table.points.len(), 3);
}

#[test]
fn oracle_compare_fails_beyond_tolerance() {
    let text = SMALL.replace("kind = \"pure\"", "kind = \"oracle-compare\"") + "\n[oracle]\ntolerance = 1e-9\n";
    let dir = tempfile::tempdir().unwrap();
    let err = run(&RunConfig::from_toml(&text).unwrap(), dir.path(), dir.path()).unwrap_err();
    assert!(matches!(err, Error::OracleMismatch(_)));
    assert!(dir.path().join("small.compare.tsv").exists());
}

#[test]
fn fit_kind_reads_curve_files() {
    let dir = tempfile::tempdir().unwrap();
    let pts: Vec<(f64, f64, f64)> =
        (0..21).map(|i| 0.03 * i as f64).map(|t| (t, if t > 0.0 { fit::model(t, 2.0, 1.9, 2.0, 0.44) } else { 1.0 }, 0.0)).collect();
    fs::write(dir.path().join("syn.tsv"), curve(&pts).to_table_string()).unwrap();
    let text = "version = 1\nkind = \"fit\"\nname = \"f\"\n[fit]\ndistance = 2.0\ncurves = [\"syn.tsv\"]\n";
    let out = run(&RunConfig::from_toml(text).unwrap(), &dir.path().join("out"), dir.path()).unwrap();
    assert_eq!(out.fits.len(), 1);
    assert!((out.fits[0].lambda - 1.9).abs() < 1e-3);
    let summary = fs::read_to_string(dir.path().join("out/f.fit.txt")).unwrap();
    assert_eq!(summary.lines().count(), 1);
    assert!(summary.starts_with("d=2 lambda=1.9"));
}
