//! Closed-form solution of the built-in two-qubit example, derived once by
//! hand and used as an oracle that is independent of every numerical path in
//! the crate.
//!
//! On the subspace spanned by (|10>, |01>) the drift vanishes, the control
//! Hamiltonian acts as [[0, 2i], [-2i, 0]], and the feedback value is
//! u = -2K z with z the population imbalance. In Bloch coordinates
//! (x = 2 Re rho_23, z = rho_22 - rho_33) the closed loop reads
//! x' = 8K z^2, z' = -8K z x, solved from (x, z)(0) = (0, 1) by
//! x(t) = tanh(8Kt), z(t) = sech(8Kt).
//!
//! Because the control Hamiltonian lives entirely inside the drift's kernel,
//! the frozen Hamiltonians at different times commute, and the transition
//! operator factorizes as exp(-i H0 (t-s)) * exp(-i G(t,s) H1) with
//! G(t, s) = -(gd(8Kt) - gd(8Ks)) / 4, gd(x) = atan(sinh(x)).

#![allow(dead_code)]

use lyapulse::linalg::{ComplexMatrix, C64};
use lyapulse::twoqubit::ket_index;

fn sech(x: f64) -> f64 {
    1.0 / x.cosh()
}

fn gudermannian(x: f64) -> f64 {
    x.sinh().atan()
}

/// Closed-loop state at time `t` for gain `k`.
pub fn analytic_state(k: f64, t: f64) -> ComplexMatrix {
    let x = (8.0 * k * t).tanh();
    let z = sech(8.0 * k * t);
    let i10 = ket_index(1, 0);
    let i01 = ket_index(0, 1);
    let mut m = ComplexMatrix::zeros(4);
    m.set(i10, i10, C64::new((1.0 + z) / 2.0, 0.0));
    m.set(i01, i01, C64::new((1.0 - z) / 2.0, 0.0));
    m.set(i10, i01, C64::new(x / 2.0, 0.0));
    m.set(i01, i10, C64::new(x / 2.0, 0.0));
    m
}

/// Feedback value along the closed loop, u1(t) = -2K sech(8Kt).
pub fn analytic_control(k: f64, t: f64) -> f64 {
    -2.0 * k * sech(8.0 * k * t)
}

/// Its time derivative, 16 K^2 sech(8Kt) tanh(8Kt).
pub fn analytic_control_rate(k: f64, t: f64) -> f64 {
    let w = 8.0 * k * t;
    16.0 * k * k * sech(w) * w.tanh()
}

/// Lyapunov value along the closed loop, V(t) = (1 - tanh(8Kt)) / 2.
pub fn analytic_v(k: f64, t: f64) -> f64 {
    (1.0 - (8.0 * k * t).tanh()) / 2.0
}

/// Transition unitary U[t, s] of the frozen time-varying system.
pub fn analytic_propagator(k: f64, t: f64, s: f64) -> ComplexMatrix {
    let i11 = ket_index(1, 1);
    let i10 = ket_index(1, 0);
    let i01 = ket_index(0, 1);
    let i00 = ket_index(0, 0);
    let dt = t - s;
    let g = -(gudermannian(8.0 * k * t) - gudermannian(8.0 * k * s)) / 4.0;

    // exp(-i G H1) on the inner block: H1_block squares to 4 I, so the
    // exponential is cos(2G) I - i sin(2G) H1 / 2.
    let c = (2.0 * g).cos();
    let s2 = (2.0 * g).sin();
    let mut u = ComplexMatrix::zeros(4);
    u.set(i11, i11, C64::new(0.0, -2.0 * dt).exp());
    u.set(i00, i00, C64::new(0.0, 2.0 * dt).exp());
    u.set(i10, i10, C64::new(c, 0.0));
    u.set(i01, i01, C64::new(c, 0.0));
    // -i sin(2G) * (H1 / 2): H1 has entries (i10, i01) = 2i, (i01, i10) = -2i.
    u.set(i10, i01, C64::new(s2, 0.0));
    u.set(i01, i10, C64::new(-s2, 0.0));
    u
}
