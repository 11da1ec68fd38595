use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::benchmarks::GreshoProblem;
use crate::mesh::generate_rectangle;
use crate::spaces::{build_taylor_hood, interpolate_pressure, interpolate_velocity};

fn square(n: usize, bounds: [f64; 4]) -> TaylorHoodSpace {
    build_taylor_hood(generate_rectangle(n, n, bounds).unwrap())
}

fn unit(n: usize) -> TaylorHoodSpace {
    square(n, [0.0, 1.0, 0.0, 1.0])
}

fn random(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[test]
fn energy_and_momentum_of_simple_fields() {
    let s = unit(3);
    let zero = vec![0.0; s.n_velocity()];
    assert_eq!(kinetic_energy(&s, &zero), 0.0);
    assert_eq!(momentum(&s, &zero), [0.0, 0.0]);
    assert_eq!(angular_momentum(&s, &zero), 0.0);
    let ex = interpolate_velocity(&s, 0.0, |_, _| [1.0, 0.0]).unwrap();
    assert!((kinetic_energy(&s, &ex) - 0.5).abs() < 1e-14);
    let m = momentum(&s, &ex);
    assert!((m[0] - 1.0).abs() < 1e-14 && m[1].abs() < 1e-15);
}

#[test]
fn angular_momentum_of_rigid_motions() {
    let s = square(8, GreshoProblem::BOUNDS);
    let rot = interpolate_velocity(&s, 0.0, |x, _| [-5.0 * x[1], 5.0 * x[0]]).unwrap();
    assert!((angular_momentum(&s, &rot) + 5.0 / 6.0).abs() < 1e-13);
    let shift = interpolate_velocity(&s, 0.0, |_, _| [1.0, 0.0]).unwrap();
    assert!(angular_momentum(&s, &shift).abs() < 1e-14);
}

#[test]
fn gresho_initial_diagnostics() {
    let s = square(48, GreshoProblem::BOUNDS);
    let u0 = interpolate_velocity(&s, 0.0, |x, _| GreshoProblem::velocity(x[0], x[1])).unwrap();
    let mon = Monitor::new(&Assembler::new(&s));
    assert!((mon.kinetic_energy(&u0) - 0.08381767482759778).abs() < 1e-12);
    let m = mon.momentum(&u0);
    assert!(m[0].abs() < 1e-12 && m[1].abs() < 1e-12);
    assert!((mon.angular_momentum(&u0) + 0.05866039715655966).abs() < 1e-12);
}

#[test]
fn g_and_f_norms() {
    let s = unit(3);
    let mon = Monitor::new(&Assembler::new(&s));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = s.n_velocity();
    let zero = vec![0.0; n];
    for _ in 0..100 {
        let a = random(n, &mut rng);
        let b = random(n, &mut rng);
        let (na, nb) = (mon.l2_sq(&a), mon.l2_sq(&b));
        assert!((mon.g_norm_sq_pair(&a, &zero) - 1.5 * na).abs() <= 1e-14 * na);
        assert!((mon.g_norm_sq_pair(&a, &a) - 0.5 * na).abs() <= 1e-14 * na);
        let g = mon.g_norm_sq_pair(&a, &b);
        assert!(g >= 0.0);
        assert!(g >= 0.75 * na - 0.25 * nb);
        // Young's inequality on the cross term gives 9/4 and 5/4 as the
        // sharp upper constants.
        assert!(g <= 2.25 * na + 1.25 * nb);
        assert!((mon.f_norm_sq(&a) - 3.0 * na).abs() <= 1e-14 * na);
    }
    assert_eq!(f_norm_sq(&s, &zero), 0.0);
    let a = random(n, &mut rng);
    assert!((g_norm_sq_pair(&s, &a, &a) - 0.5 * mon.l2_sq(&a)).abs() < 1e-14);
}

#[test]
fn inner_product_identity_for_three_levels() {
    let s = unit(2);
    let mon = Monitor::new(&Assembler::new(&s));
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = s.n_velocity();
    for dt in [1e-3, 0.1, 7.0] {
        let (w2, w1, w0) = (random(n, &mut rng), random(n, &mut rng), random(n, &mut rng));
        let bdf: Vec<f64> = (0..n).map(|i| (1.5 * w2[i] - 2.0 * w1[i] + 0.5 * w0[i]) / dt).collect();
        let f = crate::solver::f_extrapolant(&w2, &w1, &w0);
        let lhs = mon.l2_inner(&bdf, &f);
        let curv = second_difference(&w2, &w1, &w0);
        let rhs = (mon.g_norm_sq_pair(&w2, &w1) - mon.g_norm_sq_pair(&w1, &w0)) / dt
            + mon.f_norm_sq(&curv) / (4.0 * dt);
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()));
    }
}

#[test]
fn dissipation_of_steady_state() {
    let s = unit(3);
    let u = interpolate_velocity(&s, 0.0, |x, _| [x[0], 0.0]).unwrap();
    let (num, phys) = dissipation_split(&s, &u, &u, &u, 0.5, 0.1);
    assert_eq!(num, 0.0);
    assert!((phys - 0.05).abs() < 1e-13);
    let (_, phys) = dissipation_split(&s, &u, &u, &u, 0.0, 0.1);
    assert_eq!(phys, 0.0);
}

#[test]
fn energy_balance_of_constant_sequence() {
    let s = unit(2);
    let u = interpolate_velocity(&s, 0.0, |x, _| [x[1], -x[0]]).unwrap();
    let levels = vec![u.clone(), u.clone(), u.clone(), u];
    assert_eq!(energy_balance_residual(&s, &levels, 0.1, 0.0, None, 0.0).unwrap(), 0.0);
    assert!(matches!(
        energy_balance_residual(&s, &levels[..1], 0.1, 0.0, None, 0.0),
        Err(DiagnosticsError::Usage(_))
    ));
}

#[test]
fn forces_vanish_for_rest_and_constant_pressure() {
    let s = unit(4);
    let mut state = State::zeros(&s, 0.0);
    assert_eq!(drag_lift(&s, &state, 1e-3, "left", None).unwrap(), (0.0, 0.0));
    state.p = interpolate_pressure(&s, 0.0, |_, _| 3.0).unwrap();
    let (cd, cl) = drag_lift(&s, &state, 1e-3, "all", None).unwrap();
    assert!(cd.abs() < 1e-12 && cl.abs() < 1e-12);
    assert!(matches!(
        drag_lift(&s, &state, 1e-3, "cylinder", None),
        Err(DiagnosticsError::MissingMarker(_))
    ));
}

#[test]
fn pressure_force_on_one_side() {
    // p = 1 acting on the left side x = 0 pushes in +x: F_x = ∮ p n_x over
    // the side with outward normal of the body, here −(−1)·1.
    let s = unit(4);
    let mut state = State::zeros(&s, 0.0);
    state.p = vec![1.0; s.n_pressure()];
    let (cd, cl) = drag_lift(&s, &state, 0.0, "left", None).unwrap();
    assert!((cd + FORCE_SCALE).abs() < 1e-12, "{cd}");
    assert!(cl.abs() < 1e-12);
}
