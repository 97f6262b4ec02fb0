use super::*;
use crate::ed::{self, DenseState, Evolver};
use crate::hamiltonian::TfimParams;
use crate::lattice::Lattice;
use crate::rbm::Pauli;
use crate::sampler::SampleBatch;

fn tfim(rows: usize, cols: usize, h: f64, j: f64) -> TfimParams {
    TfimParams::new(Lattice::new(rows, cols).unwrap(), h, j).unwrap()
}

fn exact_cfg(dt: f64) -> OtocConfig {
    let sampler = SamplerConfig { exact: true, n_chains: 1, ..SamplerConfig::default() };
    OtocConfig {
        dynamics: SrConfig { step_size: dt, sampler: sampler.clone(), ..SrConfig::default() },
        overlap: sampler,
        seed: 1,
    }
}

fn mc_cfg(dt: f64, samples: usize, seed: u64) -> OtocConfig {
    let sampler = SamplerConfig { n_chains: 4, burn_in_sweeps: 50, ..SamplerConfig::default() };
    OtocConfig {
        dynamics: SrConfig { step_size: dt, samples_per_step: samples, sampler: sampler.clone(), ..SrConfig::default() },
        overlap: sampler.with_samples(4 * samples),
        seed,
    }
}

fn x(site: usize) -> PauliOp {
    PauliOp::new(Pauli::X, site)
}

fn y(site: usize) -> PauliOp {
    PauliOp::new(Pauli::Y, site)
}

#[test]
fn time_zero_anchors() {
    let ham = tfim(2, 3, 1.0, 1.0);
    let psi = RbmState::random(6, 12, 0.1, 3).unwrap();
    let distinct = compute_otoc_pure(&psi, &ham, x(0), y(1), &[0.0], &mc_cfg(0.01, 500, 1)).unwrap();
    let p = distinct.curve.points[0];
    assert_eq!(p.f, C64::new(1.0, 0.0));
    assert_eq!(p.err, 0.0);
    let same = compute_otoc_pure(&psi, &ham, x(2), y(2), &[0.0], &mc_cfg(0.01, 500, 1)).unwrap();
    let p = same.curve.points[0];
    assert!((p.f - C64::new(-1.0, 0.0)).norm() < 1e-12, "{}", p.f);
    assert_eq!(p.phase_correction, 0.0);
}

#[test]
fn rejects_bad_inputs() {
    let ham = tfim(2, 2, 1.0, 1.0);
    let psi = RbmState::random(4, 4, 0.1, 3).unwrap();
    let cfg = exact_cfg(0.01);
    assert!(compute_otoc_pure(&psi, &ham, x(0), y(4), &[0.0], &cfg).is_err());
    assert!(compute_otoc_pure(&psi, &ham, x(0), y(1), &[0.1, 0.1], &cfg).is_err());
    assert!(compute_otoc_pure(&psi, &ham, x(0), y(1), &[], &cfg).is_err());
    assert!(compute_otoc_pure(&psi, &tfim(2, 3, 1.0, 1.0), x(0), y(1), &[0.0], &cfg).is_err());
}

#[test]
fn small_lattice_matches_dense_oracle() {
    let ham = tfim(2, 2, 1.0, 1.0);
    let psi = RbmState::random(4, 8, 0.1, 5).unwrap();
    let times = [0.0, 0.1, 0.2, 0.3];
    let run = compute_otoc_pure(&psi, &ham, x(0), y(1), &times, &exact_cfg(0.005)).unwrap();
    let ev = Evolver::new(&ham).unwrap();
    let psi0 = DenseState::from_rbm(&psi).unwrap();
    let want = ed::dense_otoc_curve(&psi0, &ev, x(0), y(1), &times).unwrap();
    for (p, w) in run.curve.points.iter().zip(&want) {
        assert!((p.f - w).norm() < 0.01, "t={}: {} vs {w}", p.t, p.f);
    }
    // F(0+) continuity fixes the sign convention of the phase correction
    assert!(run.curve.points[1].phase_correction.abs() > 1e-6);
    assert_eq!(run.logs.len(), 2 + 2 * times.len());
    assert_eq!(run.logs[0].log.records.len(), 60);
}

#[test]
fn monte_carlo_points_are_bounded() {
    let ham = tfim(2, 2, 1.0, 1.0);
    let psi = RbmState::random(4, 8, 0.1, 6).unwrap();
    let times = [0.0, 0.1, 0.2];
    let run = compute_otoc_pure(&psi, &ham, x(0), y(3), &times, &mc_cfg(0.01, 1000, 2)).unwrap();
    let ev = Evolver::new(&ham).unwrap();
    let want = ed::dense_otoc_curve(&DenseState::from_rbm(&psi).unwrap(), &ev, x(0), y(3), &times).unwrap();
    for (p, w) in run.curve.points.iter().zip(&want) {
        assert!(p.f.norm() <= 1.0 + 3.0 * p.err + 1e-12);
        assert!((p.f - w).norm() < 0.05, "t={}: {} vs {w}", p.t, p.f);
    }
}

#[test]
fn results_do_not_depend_on_execution_mode() {
    let ham = tfim(2, 2, 1.0, 1.0);
    let psi = RbmState::random(4, 4, 0.1, 6).unwrap();
    let times = [0.0, 0.02, 0.04];
    let a = compute_otoc_pure(&psi, &ham, x(0), y(3), &times, &mc_cfg(0.01, 200, 2)).unwrap();
    let b = par::with_workers(1, || compute_otoc_pure(&psi, &ham, x(0), y(3), &times, &mc_cfg(0.01, 200, 2)).unwrap());
    assert_eq!(a.curve, b.curve);
}

#[test]
fn swapping_branches_conjugates() {
    let psi1 = RbmState::random(4, 4, 0.3, 1).unwrap();
    let psi2 = RbmState::random(4, 4, 0.3, 2).unwrap();
    let (b1, b2) = (SampleBatch::exact(&psi1).unwrap(), SampleBatch::exact(&psi2).unwrap());
    let f12 = overlap::overlap_from_batches(&psi1, &psi2, &b1, &b2).unwrap();
    let f21 = overlap::overlap_from_batches(&psi2, &psi1, &b2, &b1).unwrap();
    assert!((f12.value - f21.value.conj()).norm() < 1e-13);

    let ham = tfim(2, 2, 1.0, 1.0);
    let ev = Evolver::new(&ham).unwrap();
    let d = DenseState::from_rbm(&psi1).unwrap();
    let a = ed::dense_otoc(&d, &ev, x(0), y(1), 0.4).unwrap();
    let branch1 = ev.evolve(&ev.evolve(&d.apply(x(0)).unwrap(), 0.4).unwrap().apply(y(1)).unwrap(), -0.4).unwrap();
    let branch2 = ev.evolve(&ev.evolve(&d, 0.4).unwrap().apply(y(1)).unwrap(), -0.4).unwrap().apply(x(0)).unwrap();
    assert!((branch1.normalized_overlap(&branch2) - a.conj()).norm() < 1e-12);
}

#[test]
fn decoupled_hidden_unit_leaves_points_unchanged() {
    let ham = tfim(2, 2, 1.0, 1.0);
    let psi = RbmState::random(4, 4, 0.2, 7).unwrap();
    let wide = psi.with_decoupled_hidden(C64::new(0.3, -0.8));
    let a = compute_otoc_pure(&psi, &ham, x(1), y(1), &[0.0], &mc_cfg(0.01, 500, 3)).unwrap();
    let b = compute_otoc_pure(&wide, &ham, x(1), y(1), &[0.0], &mc_cfg(0.01, 500, 3)).unwrap();
    assert!((a.curve.points[0].f - b.curve.points[0].f).norm() < 1e-12);
    let p1 = psi.apply(x(2)).unwrap();
    let cfg = mc_cfg(0.01, 2000, 4).overlap;
    let o1 = overlap::overlap(&psi, &p1, &cfg).unwrap();
    // a real positive rescaling; a complex one would rotate the phase
    let wide_real = psi.with_decoupled_hidden(C64::new(0.3, 0.0));
    let o2 = overlap::overlap(&wide_real, &p1, &cfg).unwrap();
    assert!((o1.value - o2.value).norm() < 1e-12);
    assert!((o1.std_error - o2.std_error).abs() < 1e-12);
}

fn tiny_thermal() -> ThermalConfig {
    ThermalConfig {
        ensemble_size: 2,
        init_sigma: 0.02,
        n_hidden: 4,
        training: SrConfig {
            step_size: 0.05,
            max_steps: 150,
            samples_per_step: 500,
            sampler: SamplerConfig { n_chains: 2, burn_in_sweeps: 20, ..SamplerConfig::default() },
            ..SrConfig::default()
        },
        seed: 11,
    }
}

#[test]
fn identical_members_have_zero_spread() {
    let ham = tfim(2, 2, 1.0, 1.0);
    let signs = vec![vec![1, -1, 1, 1]; 3];
    let seeds = vec![5; 3];
    let out = thermal_ensemble(&ham, x(0), y(1), &[0.0, 0.02], &tiny_thermal(), &mc_cfg(0.01, 200, 1), &signs, &seeds)
        .unwrap();
    assert!(out.curve.points.iter().all(|p| p.err == 0.0));
    let f = |c: &OtocCurve| c.points.iter().map(|p| p.f).collect::<Vec<_>>();
    assert_eq!(f(&out.curve), f(&out.realizations[0].run.curve));
}

#[test]
fn single_member_reduces_to_pure() {
    let ham = tfim(2, 2, 1.0, 1.0);
    let cfg = mc_cfg(0.01, 200, 1);
    let th = tiny_thermal();
    let out = thermal_ensemble(&ham, x(0), y(1), &[0.0, 0.02], &th, &cfg, &[vec![1, 1, -1, 1]], &[9]).unwrap();
    let member = &out.realizations[0];
    for (a, b) in out.curve.points.iter().zip(&member.run.curve.points) {
        assert_eq!((a.t, a.f, a.phase_correction), (b.t, b.f, b.phase_correction));
    }
    assert!(out.curve.points.iter().all(|p| p.err == 0.0));
    assert!(!member.flagged, "training energy {}", member.training_energy);
    assert!(compute_otoc_thermal(&ham, x(0), y(1), &[0.0], &ThermalConfig { ensemble_size: 1, ..th }, &cfg).is_err());
}

#[test]
fn sign_vectors_are_seeded() {
    let a = sign_vectors(12, 10, 3);
    assert_eq!(a, sign_vectors(12, 10, 3));
    assert_ne!(a, sign_vectors(12, 10, 4));
    assert!(a.iter().all(|v| v.len() == 12 && v.iter().all(|&x| x == 1 || x == -1)));
}

fn sample_curve() -> OtocCurve {
    let mut metadata = BTreeMap::new();
    metadata.insert("lattice".to_string(), "3x4".to_string());
    metadata.insert("h".to_string(), "1".to_string());
    let points = (0..5)
        .map(|i| OtocPoint {
            t: 0.1 * i as f64,
            f: C64::new(1.0 - 0.01 * i as f64, 0.003 * i as f64),
            err: 1e-3 / 3.0,
            phase_correction: 0.0,
        })
        .collect();
    OtocCurve { points, metadata }
}

#[test]
fn table_round_trip_is_exact() {
    let curve = sample_curve();
    let text = curve.to_table_string();
    assert!(text.contains("# t\tReF\tImF\terr"));
    let back = OtocCurve::read_table(text.as_bytes()).unwrap();
    assert_eq!(back, curve);
    assert_eq!(back.to_table_string(), text);
}

#[test]
fn table_reader_rejects_garbage() {
    assert!(OtocCurve::read_table("0.1 0.2 0.3\n".as_bytes()).is_err());
    assert!(OtocCurve::read_table("0.1 x 0.3 0.4\n".as_bytes()).is_err());
    assert!(OtocCurve::read_table("0.2 1 0 0\n0.1 1 0 0\n".as_bytes()).is_err());
}

#[test]
fn json_round_trip() {
    let curve = sample_curve();
    assert_eq!(OtocCurve::from_json(&curve.to_json().unwrap()).unwrap(), curve);
}

#[test]
fn plot_data_has_three_series() {
    let mut buf = Vec::new();
    sample_curve().write_plot_data(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let blocks: Vec<&str> = text.split("\n\n\n").collect();
    assert_eq!(blocks.len(), 3);
    for b in blocks {
        let rows: Vec<&str> = b.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows.len(), 5);
        assert!(rows.iter().all(|r| r.split_whitespace().count() == 2));
    }
}

#[test]
fn ensemble_mean_checks_grids() {
    let a = sample_curve();
    let mut b = sample_curve();
    b.points[2].t = 0.25;
    assert!(ensemble_mean(&[&a, &b]).is_err());
    let (mean, mc) = ensemble_mean(&[&a, &a]).unwrap();
    assert_eq!(mean.points[3].f, a.points[3].f);
    assert!((mc[0] - a.points[0].err / 2f64.sqrt()).abs() < 1e-15);
}
