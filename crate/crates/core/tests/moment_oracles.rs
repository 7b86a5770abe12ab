mod common;

use common::{random_scenario, separated_three_mode, standard_two_mode};
use excess_noise::moments::{
    correlation_series, default_step, evolve_correlations, evolve_means_exact, evolve_means_rk4,
    evolve_state, quadrature_variance, quasi_correlations, quasi_drive, Frame, MomentState,
    Ordering,
};
use excess_noise::{DriftMatrix, C64};
use nalgebra::{DMatrix, DVector};

fn single(gain: f64, loss: f64, omega: f64) -> DriftMatrix {
    DriftMatrix::from_parts(
        &DMatrix::from_element(1, 1, gain),
        &DMatrix::from_element(1, 1, loss),
        &DMatrix::from_element(1, 1, omega),
        &DVector::from_element(1, (0.5 * omega).sqrt()),
    )
    .unwrap()
}

/// C(t) = e^{A^H t} C₀ e^{At} + ∫₀ᵗ e^{A^H s} D e^{As} ds, the integral from
/// the block exponential of [[−A^H, D], [0, A]].
fn correlation_oracle(
    drift: &DriftMatrix,
    c0: &DMatrix<C64>,
    drive: &DMatrix<f64>,
    t: f64,
) -> DMatrix<C64> {
    let n = drift.dim();
    let a = drift.generator() * C64::new(t, 0.0);
    let ah = a.adjoint();
    let mut block = DMatrix::<C64>::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(&(-&ah));
    block
        .view_mut((0, n), (n, n))
        .copy_from(&(drive.map(|v| C64::new(v * t, 0.0))));
    block.view_mut((n, n), (n, n)).copy_from(&a);
    let e = testkit::expm(&block);
    let upper = e.view((0, n), (n, n)).into_owned();
    let right = e.view((n, n), (n, n)).into_owned();
    let left = testkit::expm(&ah);
    &left * c0 * &right + &left * upper
}

#[test]
fn single_mode_amplifier_and_absorber() {
    let (lambda, gamma, t) = (0.6, 0.9, 3.0);
    for n0 in [0.0, 2.5] {
        let c0 = DMatrix::from_element(1, 1, C64::new(n0, 0.0));
        let amp = evolve_correlations(&single(lambda, 0.0, 40.0), &c0, Ordering::Normal, t, 1e-3)
            .unwrap();
        assert!((amp[(0, 0)].re - testkit::amplifier_photon_number(lambda, n0, t)).abs() < 1e-8);
        let abs =
            evolve_correlations(&single(0.0, gamma, 40.0), &c0, Ordering::Normal, t, 1e-3).unwrap();
        assert!((abs[(0, 0)].re - testkit::absorber_photon_number(gamma, n0, t)).abs() < 1e-8);
    }
}

#[test]
fn rk4_means_match_matrix_exponential_and_quasi_modes() {
    let s = separated_three_mode();
    let a0 = DVector::from_vec(vec![
        C64::new(1.0, 0.2),
        C64::new(-0.4, 0.0),
        C64::new(0.0, 0.8),
    ]);
    let t = 2.0;
    // the lab-frame default step only reaches ~1e-5 over hundreds of carrier
    // periods; 1e-8 needs an eighth of it
    let dt = default_step(&s.drift, Frame::Lab) / 8.0;
    let rk4 = evolve_means_rk4(&s.drift, &a0, t, dt, Frame::Lab).unwrap();
    let oracle = testkit::expm(&(s.drift.generator() * C64::new(t, 0.0))) * &a0;
    let exact = evolve_means_exact(&s.set, &a0, t).unwrap();
    let scale = oracle.norm();
    assert!((&rk4 - &oracle).norm() < 1e-8 * scale);
    assert!((&exact - &oracle).norm() < 1e-8 * scale);

    let frame = Frame::Rotating {
        omega_bar: s.basis.band_center(),
    };
    let rot_dt = default_step(&s.drift, frame);
    assert!(rot_dt > 20.0 * dt);
    let rot = evolve_means_rk4(&s.drift, &a0, t, rot_dt, frame).unwrap();
    assert!((&rot - &oracle).norm() < 1e-8 * scale);
}

#[test]
fn correlations_match_block_exponential_oracle() {
    let s = separated_three_mode();
    let c0 = DMatrix::from_fn(3, 3, |i, j| {
        if i == j {
            C64::new(0.3 * i as f64, 0.0)
        } else {
            C64::new(0.05, 0.02 * (j as f64 - i as f64))
        }
    });
    let t = 1.5;
    for ordering in [Ordering::Normal, Ordering::Antinormal, Ordering::Symmetric] {
        let c = evolve_correlations(&s.drift, &c0, ordering, t, 1e-3).unwrap();
        let drive =
            excess_noise::moments::diffusion_matrix(s.drift.gain(), s.drift.loss(), ordering);
        let oracle = correlation_oracle(&s.drift, &c0, &drive, t);
        let scale = oracle.norm();
        assert!(
            testkit::max_abs_diff(&c, &oracle) < 1e-8 * scale,
            "{ordering:?}"
        );
        assert!(testkit::max_abs_diff(&c, &c.adjoint()) < 1e-10 * scale);
    }
}

#[test]
fn commutator_is_preserved() {
    for seed in [7, 11, 19] {
        let s = random_scenario(seed, 3);
        let n = s.drift.dim();
        let max_rate = s.drift.max_rate().max(1e-3);
        let t_end = 10.0 / max_rate;
        let normal0 = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(0.2, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let anti0 = &normal0 + DMatrix::identity(n, n);
        let times: Vec<f64> = (1..=5).map(|k| t_end * k as f64 / 5.0).collect();
        let dt = default_step(&s.drift, Frame::Lab);
        let normal = correlation_series(&s.drift, &normal0, Ordering::Normal, &times, dt).unwrap();
        let anti = correlation_series(&s.drift, &anti0, Ordering::Antinormal, &times, dt).unwrap();
        for (c, b) in normal.iter().zip(&anti) {
            let diff = b - c;
            let err = testkit::max_abs_diff(&diff, &DMatrix::identity(n, n));
            assert!(err < 1e-9, "seed {seed}: {err}");
        }
    }
}

#[test]
fn quasi_correlations_obey_their_equation_of_motion() {
    let s = separated_three_mode();
    let drive = quasi_drive(&s.drift, &s.set, Ordering::Normal).unwrap();
    let mu: Vec<C64> = s.set.modes().iter().map(|m| m.eigenvalue).collect();
    let c0 = DMatrix::zeros(3, 3);
    let (t, h) = (0.8, 1e-3);
    let series = correlation_series(
        &s.drift,
        &c0,
        Ordering::Normal,
        &[0.0, t - h, t, t + h],
        1e-4,
    )
    .unwrap();
    let q: Vec<DMatrix<C64>> = series
        .iter()
        .map(|c| quasi_correlations(c, &s.set).unwrap())
        .collect();

    // vacuum start: the derivative is the drive itself
    let q_h = quasi_correlations(
        &evolve_correlations(&s.drift, &c0, Ordering::Normal, h, 1e-5).unwrap(),
        &s.set,
    )
    .unwrap();
    let rhs0 = &drive;
    let fd0 = (&q_h - &q[0]) / C64::new(h, 0.0);
    let scale0 = rhs0.norm();
    assert!(
        testkit::max_abs_diff(&fd0, rhs0)
            < 2e-3 * scale0 * (1.0 + mu.iter().map(|m| m.re.abs()).sum::<f64>())
    );

    let fd = (&q[3] - &q[1]) / C64::new(2.0 * h, 0.0);
    let rhs = DMatrix::from_fn(3, 3, |i, j| {
        (mu[i].conj() + mu[j]) * q[2][(i, j)] + drive[(i, j)]
    });
    let scale = rhs.norm();
    assert!(testkit::max_abs_diff(&fd, &rhs) < 1e-5 * scale);
    for qm in &q {
        assert!(testkit::max_abs_diff(qm, &qm.adjoint()) < 1e-10 * (1.0 + qm.norm()));
    }
}

#[test]
fn vacuum_amplification_noise_exceeds_single_mode_by_k() {
    let s = standard_two_mode();
    let nu = (0..s.set.len())
        .max_by(|&a, &b| {
            s.set
                .mode(a)
                .eigenvalue
                .re
                .total_cmp(&s.set.mode(b).eigenvalue.re)
        })
        .unwrap();
    let mode = s.set.mode(nu);
    let k = mode.petermann_k();
    let vac = MomentState::vacuum(2, Ordering::Symmetric);
    for t in [0.5, 1.5, 3.0] {
        let state = evolve_state(&s.drift, &vac, t, 1e-3).unwrap();
        let var = quadrature_variance(&s.set, &state, nu).unwrap();
        // matched single mode: Var = 2𝔈² ⟨|a|²⟩_sym with 𝔈² = Ω/2
        let oracle = mode.rates.frequency
            * testkit::single_mode_symmetric(mode.rates.gain, mode.rates.loss, 0.5, t);
        let ratio = var / oracle;
        assert!(
            ((ratio - k) / k).abs() < 0.02,
            "t = {t}: ratio {ratio} vs K {k}"
        );
    }
}

#[test]
fn closed_system_conserves_everything() {
    let s = separated_three_mode();
    let z = DMatrix::zeros(3, 3);
    let drift = DriftMatrix::build(&s.basis, &z, &z).unwrap();
    let alpha = DVector::from_vec(vec![
        C64::new(1.0, 0.0),
        C64::new(0.0, -0.5),
        C64::new(0.3, 0.3),
    ]);
    let state = MomentState::coherent(&alpha, Ordering::Normal);
    let out = evolve_state(&drift, &state, 1.3, 1e-4).unwrap();
    for i in 0..3 {
        assert!((out.corr[(i, i)] - state.corr[(i, i)]).norm() < 1e-10);
        assert!((out.mean[i].norm() - alpha[i].norm()).abs() < 1e-10);
    }
}
