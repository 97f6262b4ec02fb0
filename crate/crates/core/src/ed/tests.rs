use super::*;
use crate::hamiltonian::TfimParams;
use crate::lattice::Lattice;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn tfim(rows: usize, cols: usize, h: f64, j: f64) -> TfimParams {
    TfimParams::new(Lattice::new(rows, cols).unwrap(), h, j).unwrap()
}

fn max_diff(a: &DenseState, b: &DenseState) -> f64 {
    a.amplitudes().iter().zip(b.amplitudes()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

#[test]
fn rbm_conversion_edge_cases() {
    let zero = RbmState::zeros(3, 2);
    let d = DenseState::from_rbm(&zero).unwrap();
    assert!(d.amplitudes().iter().all(|a| (a - c(4.0, 0.0)).norm() < 1e-12));

    let alpha = c(0.3, -0.2);
    let single = RbmState::from_parts(&[alpha], &[], &[]).unwrap();
    let d = DenseState::from_rbm(&single).unwrap();
    assert!((d.amplitudes()[0] - (-alpha).exp()).norm() < 1e-14);
    assert!((d.amplitudes()[1] - alpha.exp()).norm() < 1e-14);

    let big = RbmState::zeros(17, 1);
    assert!(matches!(DenseState::from_rbm(&big), Err(Error::OracleCap { .. })));
}

#[test]
fn rbm_conversion_matches_hidden_sum() {
    let psi = RbmState::random(4, 3, 0.6, 12).unwrap();
    let d = DenseState::from_rbm(&psi).unwrap();
    let oracle: Vec<C64> = (0..16)
        .map(|i| crate::rbm::tests::hidden_sum_amplitude(&psi, SpinConfig::from_index(4, i).as_slice()))
        .collect();
    let diff: f64 = d.amplitudes().iter().zip(&oracle).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    let scale: f64 = oracle.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    assert!(diff <= 1e-10 * scale);
}

#[test]
fn pauli_matrices_agree_with_rbm_rules() {
    // dense Pauli application vs the parameter updates (shared bit convention)
    let psi = RbmState::random(3, 2, 0.5, 5).unwrap();
    let d = DenseState::from_rbm(&psi).unwrap();
    for k in 0..3 {
        for pauli in [Pauli::X, Pauli::Y, Pauli::Z] {
            let op = PauliOp::new(pauli, k);
            let via_rbm = DenseState::from_rbm(&psi.apply(op).unwrap()).unwrap();
            let via_matrix = d.apply(op).unwrap().scale(pauli.rbm_phase());
            assert!(max_diff(&via_rbm, &via_matrix) < 1e-12, "{op}");
        }
    }
}

#[test]
fn time_zero_is_identity() {
    let ham = tfim(2, 2, 1.0, 1.0);
    let ev = Evolver::new(&ham).unwrap();
    let psi = DenseState::from_rbm(&RbmState::random(4, 2, 0.3, 1).unwrap()).unwrap();
    assert_eq!(ev.evolve(&psi, 0.0).unwrap(), psi);
}

#[test]
fn single_spin_rotation() {
    // H = -h sigma_x  =>  U = cos(ht) + i sin(ht) sigma_x
    let h = 0.8;
    let ham = crate::hamiltonian::TransverseField::new(&[-h]);
    let psi = DenseState::new(1, vec![c(0.6, 0.1), c(-0.3, 0.7)]).unwrap();
    for ev in [Evolver::new(&ham).unwrap(), Evolver::krylov(&ham)] {
        for &t in &[0.1, 1.0, 3.7] {
            let got = ev.evolve(&psi, t).unwrap();
            let (co, si) = ((h * t).cos(), (h * t).sin());
            let a = psi.amplitudes();
            let want = DenseState::new(1, vec![co * a[0] + c(0.0, si) * a[1], co * a[1] + c(0.0, si) * a[0]]).unwrap();
            assert!(max_diff(&got, &want) < 1e-12);
        }
    }
}

#[test]
fn eigen_and_krylov_agree_and_are_unitary() {
    let ham = tfim(2, 3, 1.0, 1.0);
    let psi = DenseState::from_rbm(&RbmState::random(6, 4, 0.5, 2).unwrap()).unwrap().normalized();
    let eig = Evolver::new(&ham).unwrap();
    let kry = Evolver::krylov(&ham);
    for &t in &[0.05, 0.7, 2.5] {
        let a = eig.evolve(&psi, t).unwrap();
        let b = kry.evolve(&psi, t).unwrap();
        assert!(max_diff(&a, &b) < 1e-10);
        assert!((a.norm_sqr() - 1.0).abs() < 1e-10);
        assert!((b.norm_sqr() - 1.0).abs() < 1e-10);
        let back = kry.evolve(&b, -t).unwrap();
        assert!(max_diff(&back, &psi) < 1e-9);
        let back = eig.evolve(&a, -t).unwrap();
        assert!(max_diff(&back, &psi) < 1e-9);
    }
}

#[test]
fn krylov_used_above_eigen_limit() {
    let ham = tfim(3, 4, 1.0, 1.0);
    let ev = Evolver::new(&ham).unwrap();
    assert!(matches!(ev, Evolver::Krylov { .. }));
    let psi = DenseState::from_rbm(&RbmState::random(12, 2, 0.1, 3).unwrap()).unwrap().normalized();
    let out = ev.evolve(&psi, 1.5).unwrap();
    assert!((out.norm_sqr() - 1.0).abs() < 1e-10);
    let back = ev.evolve(&out, -1.5).unwrap();
    assert!(max_diff(&back, &psi) < 1e-9);
    // energy is conserved
    let e0 = psi.expectation(&ham);
    let e1 = out.expectation(&ham);
    assert!((e0 - e1).norm() < 1e-9);
}

/// `<psi| V2 V1 V2 V1 |psi>` from Pauli algebra: every product of single-site
/// Paulis is +-(Pauli string), so the value is computed symbolically on a
/// product basis state.
#[test]
fn otoc_at_time_zero_matches_pauli_algebra() {
    let ham = tfim(2, 2, 1.0, 1.0);
    let ev = Evolver::new(&ham).unwrap();
    let psi = DenseState::from_rbm(&RbmState::random(4, 3, 0.4, 9).unwrap()).unwrap();
    let paulis = [Pauli::X, Pauli::Y, Pauli::Z];
    for &p1 in &paulis {
        for &p2 in &paulis {
            // same site: V2 V1 V2 V1 = +1 if equal, else -1; distinct: +1
            let same = dense_otoc(&psi, &ev, PauliOp::new(p1, 0), PauliOp::new(p2, 0), 0.0).unwrap();
            let want = if p1 == p2 { 1.0 } else { -1.0 };
            assert!((same - c(want, 0.0)).norm() < 1e-12, "{p1} {p2}");
            let apart = dense_otoc(&psi, &ev, PauliOp::new(p1, 0), PauliOp::new(p2, 3), 0.0).unwrap();
            assert!((apart - c(1.0, 0.0)).norm() < 1e-12);
        }
    }
}

#[test]
fn sigma_x_product_states() {
    let signs = [1i8, -1, -1, 1];
    let d = DenseState::sigma_x_product(&signs).unwrap();
    assert!((d.norm_sqr() - 1.0).abs() < 1e-14);
    for (k, &x) in signs.iter().enumerate() {
        let flipped = d.apply(PauliOp::new(Pauli::X, k)).unwrap();
        assert!(max_diff(&flipped, &d.scale(c(x as f64, 0.0))) < 1e-14);
    }
    let field = crate::hamiltonian::TransverseField::for_product_state(&signs);
    let e = d.expectation(&field);
    assert!((e.re - field.ground_energy()).abs() < 1e-12);
}

#[test]
fn thermal_average_edge_cases() {
    let ham = tfim(2, 2, 1.0, 1.0);
    let ev = Evolver::new(&ham).unwrap();
    let v1 = PauliOp::new(Pauli::X, 0);
    let v2 = PauliOp::new(Pauli::Y, 1);
    let signs = vec![1i8, -1, 1, 1];
    let single = dense_thermal_otoc(&ev, v1, v2, 0.4, std::slice::from_ref(&signs)).unwrap();
    let direct = dense_otoc(&DenseState::sigma_x_product(&signs).unwrap(), &ev, v1, v2, 0.4).unwrap();
    assert!((single.mean - direct).norm() < 1e-14);
    assert_eq!(single.spread, 0.0);

    let all: Vec<Vec<i8>> = (0..16).map(|i| (0..4).map(|k| if (i >> k) & 1 == 1 { 1 } else { -1 }).collect()).collect();
    let full = dense_thermal_otoc(&ev, v1, v2, 0.0, &all).unwrap();
    assert!((full.mean - c(1.0, 0.0)).norm() < 1e-12);
}

#[test]
fn ground_state_of_small_tfim() {
    let ham = tfim(2, 2, 1.0, 1.0);
    let (e0, gs) = DenseHamiltonian::new(&ham).ground_state().unwrap();
    assert!((gs.expectation(&ham).re - e0).abs() < 1e-10);
    let all_up = DenseState::new(4, (0..16).map(|i| c(if i == 15 { 1.0 } else { 0.0 }, 0.0)).collect()).unwrap();
    assert!(e0 < all_up.expectation(&ham).re);
}

#[test]
fn lanczos_ground_state_matches_full_diagonalization() {
    let ham = tfim(3, 3, 3.05, 1.0);
    let dense = DenseHamiltonian::new(&ham);
    let (e_full, v_full) = dense.ground_state().unwrap();
    let (e_lz, v_lz) = expm::lanczos_ground(&dense).unwrap();
    assert!((e_full - e_lz).abs() < 1e-10 * e_full.abs());
    let lz = DenseState::new(9, v_lz).unwrap();
    assert!((v_full.normalized_overlap(&lz).norm() - 1.0).abs() < 1e-9);

    let big = tfim(3, 4, 1.0, 1.0);
    let (e0, gs) = DenseHamiltonian::new(&big).ground_state().unwrap();
    assert!((gs.expectation(&big).re - e0).abs() < 1e-9);
    assert!(matches!(DenseHamiltonian::new(&big).ground_state_with_cap(10), Err(Error::OracleCap { .. })));
}
