//! Pulse generation and open-loop execution: piecewise-constant controls
//! from the simulated closed loop, exact per-interval propagation of the
//! plant, the high-accuracy reference trajectory, interval propagators, and
//! the error quantities compared against the reference.

use crate::control::BilinearSystem;
use crate::error::{Error, Result};
use crate::integrators::{rk_step, tableau, ThetaSequence};
use crate::linalg::{unitary_exp, ComplexMatrix, DensityMatrix};
use crate::tol;

/// Per-interval constant control values on the grid t_n = n T / N: row `n`
/// holds the M control amplitudes applied on [t_n, t_{n+1}).
#[derive(Clone, Debug)]
pub struct PiecewiseControl {
    n_grid: usize,
    horizon: f64,
    n_controls: usize,
    values: Vec<f64>,
}

impl PiecewiseControl {
    pub fn new(n_grid: usize, horizon: f64, n_controls: usize, values: Vec<f64>) -> Result<Self> {
        if n_grid == 0 || horizon <= 0.0 {
            return Err(Error::Config(format!(
                "need at least one interval over a positive horizon, got {n_grid} over {horizon}"
            )));
        }
        if values.len() != n_grid * n_controls {
            return Err(Error::Config(format!(
                "control table size {} != {} intervals x {} controls",
                values.len(),
                n_grid,
                n_controls
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::Config("non-finite control value".into()));
        }
        Ok(Self {
            n_grid,
            horizon,
            n_controls,
            values,
        })
    }

    pub fn n_grid(&self) -> usize {
        self.n_grid
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.n_grid as f64
    }

    pub fn n_controls(&self) -> usize {
        self.n_controls
    }

    /// Control amplitudes on interval `n`.
    pub fn interval(&self, n: usize) -> &[f64] {
        &self.values[n * self.n_controls..(n + 1) * self.n_controls]
    }
}

/// Evaluate the feedback protocols on the simulated points: the control on
/// interval `n` is u_k(theta_n). The final point theta_N is unused.
pub fn step2_generate_controls(theta: &ThetaSequence, sys: &BilinearSystem) -> PiecewiseControl {
    let n = theta.n_grid();
    let m = sys.n_controls();
    let mut values = Vec::with_capacity(n * m);
    for point in &theta.points()[..n] {
        values.extend(sys.protocol_values(point));
    }
    PiecewiseControl::new(n, theta.horizon(), m, values)
        .expect("finite protocol values on a validated sequence")
}

/// Exact evolution operator of each control interval,
/// U_n = exp(-i h (H0 + sum_k u_k(t_n) H_k)).
pub fn interval_unitaries(sys: &BilinearSystem, ctrl: &PiecewiseControl) -> Result<Vec<ComplexMatrix>> {
    let h = ctrl.step();
    (0..ctrl.n_grid())
        .map(|n| unitary_exp(&sys.hamiltonian_with_controls(ctrl.interval(n)), h))
        .collect()
}

/// Drive the plant open-loop from `sigma0`: sigma(t_{n+1}) = U_n sigma(t_n)
/// U_n^dag with exact per-interval unitaries. Returns samples at t_0..t_N.
///
/// The piecewise-constant Hamiltonian makes this representation of the real
/// plant exact up to round-off; no integrator truncation enters here.
pub fn step3_propagate(
    sigma0: &DensityMatrix,
    sys: &BilinearSystem,
    ctrl: &PiecewiseControl,
) -> Result<Vec<DensityMatrix>> {
    if sigma0.dim() != sys.dim() {
        return Err(Error::DimensionMismatch {
            left: sigma0.dim(),
            right: sys.dim(),
        });
    }
    let unitaries = interval_unitaries(sys, ctrl)?;
    let mut samples = Vec::with_capacity(ctrl.n_grid() + 1);
    samples.push(sigma0.clone());
    let mut current = sigma0.matrix().clone();
    for u in &unitaries {
        current = current.conjugate_by(u);
        samples.push(DensityMatrix::with_tolerances(
            current.clone(),
            tol::PSD_FLOOR,
            tol::TOL_CONSERVATION,
        )?);
    }
    Ok(samples)
}

/// Dense, high-accuracy samples of the closed-loop solution and its control
/// values, plus per-substep unitaries whose products realize the state
/// transition superoperator of the frozen time-varying system.
#[derive(Clone, Debug)]
pub struct ReferenceTrajectory {
    n_ref: usize,
    horizon: f64,
    n_controls: usize,
    states: Vec<DensityMatrix>,
    controls: Vec<f64>,
    step_unitaries: Vec<ComplexMatrix>,
    richardson_error: f64,
}

/// Build the reference by integrating the closed loop with the fifth-order
/// method at twice the stored resolution (the intermediate points supply the
/// midpoint Hamiltonians for the step unitaries), then validate against a
/// half-resolution run by Richardson comparison.
pub fn reference_trajectory(
    sys: &BilinearSystem,
    rho0: &DensityMatrix,
    horizon: f64,
    n_ref: usize,
    tol_ref: f64,
) -> Result<ReferenceTrajectory> {
    if horizon <= 0.0 || n_ref == 0 {
        return Err(Error::Config(format!(
            "need horizon > 0 and n_ref >= 1, got {horizon} and {n_ref}"
        )));
    }
    let tab = tableau(5)?;
    let m = sys.n_controls();
    let h_ref = horizon / n_ref as f64;
    let h_fine = h_ref / 2.0;
    let f = |rho: &ComplexMatrix| sys.closed_loop_rhs(rho);

    let mut states = Vec::with_capacity(n_ref + 1);
    let mut controls = Vec::with_capacity((n_ref + 1) * m);
    let mut step_unitaries = Vec::with_capacity(n_ref);

    states.push(rho0.clone());
    controls.extend(sys.protocol_values(rho0.matrix()));

    let mut current = rho0.matrix().clone();
    for i in 0..n_ref {
        // First half-step lands on the interval midpoint.
        let midpoint = rk_step(&tab, f, &current, h_fine).hermitian_part();
        if !midpoint.is_finite() {
            return Err(Error::Divergence {
                step: 2 * i + 1,
                total: 2 * n_ref,
            });
        }
        let g_mid = sys.protocol_values(&midpoint);
        step_unitaries.push(unitary_exp(
            &sys.hamiltonian_with_controls(&g_mid),
            h_ref,
        )?);

        current = rk_step(&tab, f, &midpoint, h_fine).hermitian_part();
        if !current.is_finite() {
            return Err(Error::Divergence {
                step: 2 * i + 2,
                total: 2 * n_ref,
            });
        }
        controls.extend(sys.protocol_values(&current));
        states.push(DensityMatrix::with_psd_floor(
            current.clone(),
            tol::PSD_FLOOR_REFERENCE,
        )?);
    }

    // Richardson validation: a run at half resolution, compared at shared
    // grid points. For a fifth-order method the difference overestimates the
    // fine-run error by the factor 2^5 - 1.
    let mut coarse = rho0.matrix().clone();
    let mut max_diff = 0.0f64;
    for state in states.iter().skip(1) {
        coarse = rk_step(&tab, f, &coarse, h_ref).hermitian_part();
        max_diff = max_diff.max(state.matrix().sub(&coarse).hs_norm());
    }
    let richardson_error = max_diff / 31.0;
    if richardson_error > tol_ref {
        return Err(Error::RichardsonFailed {
            achieved: richardson_error,
            tolerance: tol_ref,
        });
    }

    for u in &step_unitaries {
        let residual = u
            .adjoint()
            .matmul(u)
            .sub(&ComplexMatrix::identity(sys.dim()))
            .hs_norm();
        if residual > tol::TOL_UNITARY_REFERENCE {
            return Err(Error::EigenFailed { residual });
        }
    }

    Ok(ReferenceTrajectory {
        n_ref,
        horizon,
        n_controls: m,
        states,
        controls,
        step_unitaries,
        richardson_error,
    })
}

impl ReferenceTrajectory {
    pub fn n_ref(&self) -> usize {
        self.n_ref
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn grid_step(&self) -> f64 {
        self.horizon / self.n_ref as f64
    }

    pub fn n_controls(&self) -> usize {
        self.n_controls
    }

    pub fn richardson_error(&self) -> f64 {
        self.richardson_error
    }

    pub fn state(&self, i: usize) -> &DensityMatrix {
        &self.states[i]
    }

    pub fn states(&self) -> &[DensityMatrix] {
        &self.states
    }

    /// Control values g_k at grid index `i`.
    pub fn controls_at(&self, i: usize) -> &[f64] {
        &self.controls[i * self.n_controls..(i + 1) * self.n_controls]
    }

    pub fn step_unitaries(&self) -> &[ComplexMatrix] {
        &self.step_unitaries
    }

    /// Frozen time-varying Hamiltonian H0 + sum_k g_k(t_i) H_k at grid index `i`.
    pub fn hamiltonian_at(&self, sys: &BilinearSystem, i: usize) -> ComplexMatrix {
        sys.hamiltonian_with_controls(self.controls_at(i))
    }

    /// Map a time to its reference grid index, rejecting off-grid times.
    pub fn index_of_time(&self, t: f64) -> Result<usize> {
        let h = self.grid_step();
        let i = (t / h).round();
        if i < 0.0 || i > self.n_ref as f64 {
            return Err(Error::OffGrid { t, step: h });
        }
        if (t - i * h).abs() > 1e-12 * t.abs().max(1.0) {
            return Err(Error::OffGrid { t, step: h });
        }
        Ok(i as usize)
    }

    /// Reference index of coarse grid point `n` out of `n_coarse`; the coarse
    /// grid must nest into the reference grid.
    pub fn nested_index(&self, n: usize, n_coarse: usize) -> Result<usize> {
        if n_coarse == 0 || !self.n_ref.is_multiple_of(n_coarse) {
            return Err(Error::GridMisaligned {
                coarse: n_coarse,
                fine: self.n_ref,
            });
        }
        Ok(n * (self.n_ref / n_coarse))
    }

    /// Product of step unitaries realizing the transition from grid index
    /// `from` to grid index `to`.
    ///
    /// Long products accumulate unitarity round-off linearly in the step
    /// count; one Newton-Schulz iteration at the end squares that residual
    /// away without moving the operator beyond its own accumulation error.
    pub fn propagator_between(&self, to: usize, from: usize) -> Result<Propagator> {
        if from > to || to > self.n_ref {
            return Err(Error::InvalidInterval {
                from: from as f64 * self.grid_step(),
                to: to as f64 * self.grid_step(),
            });
        }
        let dim = self.states[0].dim();
        let mut u = ComplexMatrix::identity(dim);
        for i in from..to {
            u = self.step_unitaries[i].matmul(&u);
        }
        let correction = ComplexMatrix::identity(dim)
            .scale_re(3.0)
            .sub(&u.adjoint().matmul(&u));
        let u = u.matmul(&correction).scale_re(0.5);
        Ok(Propagator {
            u,
            from_time: from as f64 * self.grid_step(),
            to_time: to as f64 * self.grid_step(),
        })
    }

    /// Transition superoperator over the whole horizon.
    pub fn full_propagator(&self) -> Propagator {
        self.propagator_between(self.n_ref, 0)
            .expect("full interval is always valid")
    }
}

/// The state transition superoperator of the frozen time-varying system;
/// acts by unitary conjugation.
#[derive(Clone, Debug)]
pub struct Propagator {
    u: ComplexMatrix,
    from_time: f64,
    to_time: f64,
}

impl Propagator {
    pub fn matrix(&self) -> &ComplexMatrix {
        &self.u
    }

    pub fn from_time(&self) -> f64 {
        self.from_time
    }

    pub fn to_time(&self) -> f64 {
        self.to_time
    }

    /// Apply the superoperator: A -> U A U^dag.
    pub fn apply(&self, a: &ComplexMatrix) -> ComplexMatrix {
        a.conjugate_by(&self.u)
    }

    pub fn unitarity_residual(&self) -> f64 {
        self.u
            .adjoint()
            .matmul(&self.u)
            .sub(&ComplexMatrix::identity(self.u.dim()))
            .hs_norm()
    }
}

/// U[t, s] for grid times s <= t.
pub fn propagator(reference: &ReferenceTrajectory, t: f64, s: f64) -> Result<Propagator> {
    let to = reference.index_of_time(t)?;
    let from = reference.index_of_time(s)?;
    reference.propagator_between(to, from)
}

/// Hamiltonian approximation error on interval `n`:
/// E(N, n) = sum_k (g_k(n T / N) - u~_k(n T / N)) H_k.
pub fn hamiltonian_error(
    reference: &ReferenceTrajectory,
    ctrl: &PiecewiseControl,
    sys: &BilinearSystem,
    n: usize,
) -> Result<ComplexMatrix> {
    let ref_idx = reference.nested_index(n, ctrl.n_grid())?;
    let g = reference.controls_at(ref_idx);
    let applied = ctrl.interval(n);
    let mut e = ComplexMatrix::zeros(sys.dim());
    for k in 0..sys.n_controls() {
        e.add_scaled_assign(g[k] - applied[k], sys.control(k));
    }
    Ok(e)
}

/// State error e_N(t) = rho(t) - sigma_N(t) at a shared grid time.
pub fn error_e(
    reference: &ReferenceTrajectory,
    sigma: &[DensityMatrix],
    t: f64,
) -> Result<ComplexMatrix> {
    if sigma.len() < 2 {
        return Err(Error::Config(format!(
            "need at least two open-loop samples, got {}",
            sigma.len()
        )));
    }
    let n_coarse = sigma.len() - 1;
    let coarse_step = reference.horizon() / n_coarse as f64;
    let n = (t / coarse_step).round();
    if n < 0.0 || n > n_coarse as f64 || (t - n * coarse_step).abs() > 1e-12 * t.abs().max(1.0) {
        return Err(Error::OffGrid { t, step: coarse_step });
    }
    let n = n as usize;
    let ref_idx = reference.nested_index(n, n_coarse)?;
    Ok(reference.state(ref_idx).matrix().sub(sigma[n].matrix()))
}

/// Centered error F(N, T) = e_N(T) - U[T, 0](rho0 - sigma0): what remains of
/// the terminal error after removing the propagated initialization error.
pub fn error_f(
    reference: &ReferenceTrajectory,
    sigma: &[DensityMatrix],
    full_propagator: &Propagator,
) -> Result<ComplexMatrix> {
    let e_t = error_e(reference, sigma, reference.horizon())?;
    let init = reference.state(0).matrix().sub(sigma[0].matrix());
    Ok(e_t.sub(&full_propagator.apply(&init)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::FeedbackProtocol;
    use crate::integrators::step1_simulate;
    use crate::linalg::{hs_norm, C64};
    use crate::twoqubit::{default_setup, ket_index, pauli_x, pauli_z};
    use approx::assert_relative_eq;

    fn constant_system(c: f64) -> (BilinearSystem, DensityMatrix) {
        let sys = BilinearSystem::new(
            pauli_z(),
            vec![pauli_x()],
            vec![FeedbackProtocol::constant(2, c)],
        )
        .unwrap();
        let rho0 = DensityMatrix::new(ComplexMatrix::diag(&[1.0, 0.0])).unwrap();
        (sys, rho0)
    }

    #[test]
    fn step2_constant_protocols_give_equal_rows() {
        let (sys, rho0) = constant_system(0.7);
        let theta = step1_simulate(&sys, &rho0, 1.0, 8, 2).unwrap();
        let ctrl = step2_generate_controls(&theta, &sys);
        assert_eq!(ctrl.n_grid(), 8);
        for n in 0..8 {
            assert_eq!(ctrl.interval(n), &[0.7]);
        }
    }

    #[test]
    fn step2_single_interval_two_qubit_value() {
        let s = default_setup();
        let theta = step1_simulate(s.system(), s.rho0(), 1.0, 1, 1).unwrap();
        let ctrl = step2_generate_controls(&theta, s.system());
        assert_eq!(ctrl.n_grid(), 1);
        assert_relative_eq!(ctrl.interval(0)[0], -2.0, epsilon = 1e-13);
    }

    #[test]
    fn step2_two_interval_euler_matches_hand_computation() {
        // One Euler step of size 1/2 from |10><10|: theta_1 = rho0 +
        // 2 (e2 e3^T + e3 e2^T) in the fixed basis, whose diagonal is
        // unchanged, so u(theta_1) = -2 again.
        let s = default_setup();
        let theta = step1_simulate(s.system(), s.rho0(), 1.0, 2, 1).unwrap();
        let i10 = ket_index(1, 0);
        let i01 = ket_index(0, 1);
        let point = theta.point(1);
        let mut expected = s.rho0().matrix().clone();
        expected.set(i10, i01, C64::new(2.0, 0.0));
        expected.set(i01, i10, C64::new(2.0, 0.0));
        assert!(hs_norm(&point.sub(&expected)) < 1e-14);

        let ctrl = step2_generate_controls(&theta, s.system());
        assert_relative_eq!(ctrl.interval(1)[0], -2.0, epsilon = 1e-13);
    }

    #[test]
    fn step3_commuting_case_is_constant() {
        // Diagonal drift, zero control value, diagonal initial state.
        let (sys, _) = constant_system(0.0);
        let sigma0 = DensityMatrix::new(ComplexMatrix::diag(&[0.25, 0.75])).unwrap();
        let ctrl = PiecewiseControl::new(4, 1.0, 1, vec![0.0; 4]).unwrap();
        let samples = step3_propagate(&sigma0, &sys, &ctrl).unwrap();
        for s in &samples {
            assert!(hs_norm(&s.matrix().sub(sigma0.matrix())) < 1e-14);
        }
    }

    #[test]
    fn step3_matches_constant_hamiltonian_closed_form() {
        let (sys, rho0) = constant_system(0.4);
        let n = 16;
        let ctrl = PiecewiseControl::new(n, 2.0, 1, vec![0.4; n]).unwrap();
        let samples = step3_propagate(&rho0, &sys, &ctrl).unwrap();
        let h_total = sys.hamiltonian_with_controls(&[0.4]);
        for (j, sample) in samples.iter().enumerate() {
            let t = 2.0 * j as f64 / n as f64;
            let u = unitary_exp(&h_total, t).unwrap();
            let expected = rho0.matrix().conjugate_by(&u);
            assert!(
                hs_norm(&sample.matrix().sub(&expected)) < 1e-12,
                "mismatch at sample {j}"
            );
        }
    }

    #[test]
    fn step3_preserves_trace_and_purity() {
        let s = default_setup();
        let theta = step1_simulate(s.system(), s.rho0(), 1.0, 128, 4).unwrap();
        let ctrl = step2_generate_controls(&theta, s.system());
        let samples = step3_propagate(s.sigma0(), s.system(), &ctrl).unwrap();
        let p0 = s.sigma0().purity();
        for sample in &samples {
            assert!((sample.matrix().trace().re - 1.0).abs() < 1e-12);
            assert!((sample.purity() - p0).abs() < 1e-12);
        }
    }

    #[test]
    fn interval_unitaries_are_unitary() {
        let s = default_setup();
        let theta = step1_simulate(s.system(), s.rho0(), 1.0, 32, 3).unwrap();
        let ctrl = step2_generate_controls(&theta, s.system());
        for u in interval_unitaries(s.system(), &ctrl).unwrap() {
            let res = u
                .adjoint()
                .matmul(&u)
                .sub(&ComplexMatrix::identity(4))
                .hs_norm();
            assert!(res <= tol::TOL_UNITARY);
        }
    }

    #[test]
    fn reference_matches_constant_protocol_closed_form() {
        let (sys, rho0) = constant_system(0.3);
        let reference = reference_trajectory(&sys, &rho0, 1.5, 512, tol::TOL_REF).unwrap();
        let h_total = sys.hamiltonian_with_controls(&[0.3]);
        for i in (0..=512).step_by(64) {
            let t = 1.5 * i as f64 / 512.0;
            let expected = rho0.matrix().conjugate_by(&unitary_exp(&h_total, t).unwrap());
            assert!(
                hs_norm(&reference.state(i).matrix().sub(&expected)) < 1e-10,
                "reference deviates at index {i}"
            );
        }
        // Constant system: the propagator is the matrix exponential itself.
        let u = reference.full_propagator();
        let expected = unitary_exp(&h_total, 1.5).unwrap();
        // Equal up to global phase structure: compare action on a state.
        let probe = rho0.matrix();
        assert!(hs_norm(&u.apply(probe).sub(&probe.conjugate_by(&expected))) < 1e-9);
    }

    #[test]
    fn reference_initial_sample_is_exactly_rho0() {
        let s = default_setup();
        let reference =
            reference_trajectory(s.system(), s.rho0(), 1.0, 256, tol::TOL_REF).unwrap();
        assert_eq!(reference.state(0).matrix(), s.rho0().matrix());
        assert!(reference.richardson_error() <= tol::TOL_REF);
    }

    #[test]
    fn reference_rejects_unreachable_tolerance() {
        let s = default_setup();
        // No finite grid reaches 1e-30; the Richardson check must refuse and
        // report the achieved error.
        match reference_trajectory(s.system(), s.rho0(), 1.0, 64, 1e-30) {
            Err(Error::RichardsonFailed { achieved, .. }) => assert!(achieved > 1e-30),
            other => panic!("expected Richardson failure, got {other:?}"),
        }
    }

    #[test]
    fn propagator_identity_composition_and_isometry() {
        let s = default_setup();
        let reference =
            reference_trajectory(s.system(), s.rho0(), 1.0, 128, tol::TOL_REF).unwrap();
        // U[t, t] = I.
        let same = propagator(&reference, 0.5, 0.5).unwrap();
        assert!(hs_norm(&same.matrix().sub(&ComplexMatrix::identity(4))) < 1e-15);
        // Composition U[T, 0] = U[T, T/2] U[T/2, 0].
        let full = propagator(&reference, 1.0, 0.0).unwrap();
        let late = propagator(&reference, 1.0, 0.5).unwrap();
        let early = propagator(&reference, 0.5, 0.0).unwrap();
        let composed = late.matrix().matmul(early.matrix());
        assert!(hs_norm(&full.matrix().sub(&composed)) < 1e-9);
        // Norm preservation under the action.
        let a = ComplexMatrix::from_fn(4, |i, j| C64::new((i + 2 * j) as f64, (i * j) as f64));
        assert!((hs_norm(&full.apply(&a)) - hs_norm(&a)).abs() < 1e-10);
        // Off-grid times are rejected.
        assert!(matches!(
            propagator(&reference, 0.5 + 1e-5, 0.0),
            Err(Error::OffGrid { .. })
        ));
        assert!(matches!(
            propagator(&reference, 0.25, 0.5),
            Err(Error::InvalidInterval { .. })
        ));
    }

    #[test]
    fn hamiltonian_error_zero_for_exact_controls_and_at_start() {
        let s = default_setup();
        let n = 16;
        let reference =
            reference_trajectory(s.system(), s.rho0(), 1.0, 16 * 64, tol::TOL_REF).unwrap();
        // Controls copied from the reference itself: E vanishes identically.
        let stride = reference.n_ref() / n;
        let mut values = Vec::new();
        for i in 0..n {
            values.extend_from_slice(reference.controls_at(i * stride));
        }
        let exact = PiecewiseControl::new(n, 1.0, 1, values).unwrap();
        for i in 0..n {
            let e = hamiltonian_error(&reference, &exact, s.system(), i).unwrap();
            assert_eq!(hs_norm(&e), 0.0);
        }
        // And for step-2 controls, E(N, 0) = 0 because theta_0 = rho_0.
        let theta = step1_simulate(s.system(), s.rho0(), 1.0, n, 1).unwrap();
        let ctrl = step2_generate_controls(&theta, s.system());
        let e0 = hamiltonian_error(&reference, &ctrl, s.system(), 0).unwrap();
        assert_eq!(hs_norm(&e0), 0.0);
        // Misaligned grids are rejected.
        let bad = PiecewiseControl::new(3, 1.0, 1, vec![0.0; 3]).unwrap();
        assert!(matches!(
            hamiltonian_error(&reference, &bad, s.system(), 1),
            Err(Error::GridMisaligned { .. })
        ));
    }

    #[test]
    fn error_e_at_zero_is_the_initialization_error() {
        let s = default_setup();
        let n = 8;
        let reference =
            reference_trajectory(s.system(), s.rho0(), 1.0, n * 32, tol::TOL_REF).unwrap();
        let theta = step1_simulate(s.system(), s.rho0(), 1.0, n, 2).unwrap();
        let ctrl = step2_generate_controls(&theta, s.system());
        let sigma = step3_propagate(s.sigma0(), s.system(), &ctrl).unwrap();
        let e0 = error_e(&reference, &sigma, 0.0).unwrap();
        let expected = s.rho0().matrix().sub(s.sigma0().matrix());
        assert_eq!(hs_norm(&e0.sub(&expected)), 0.0);
        // Hermitian and traceless.
        let e_mid = error_e(&reference, &sigma, 0.5).unwrap();
        assert!(e_mid.herm_residual() < 1e-12);
        assert!(e_mid.trace().norm() < 1e-12);
    }

    #[test]
    fn errors_vanish_for_perfect_init_and_constant_protocol() {
        // Constant protocol: the open loop reproduces the closed loop
        // exactly, so e_N and F are zero when sigma0 = rho0.
        let (sys, rho0) = constant_system(0.25);
        let n = 8;
        let reference = reference_trajectory(&sys, &rho0, 1.0, n * 64, tol::TOL_REF).unwrap();
        let theta = step1_simulate(&sys, &rho0, 1.0, n, 3).unwrap();
        let ctrl = step2_generate_controls(&theta, &sys);
        let sigma = step3_propagate(&rho0, &sys, &ctrl).unwrap();
        let full = reference.full_propagator();
        for j in 0..=n {
            let t = j as f64 / n as f64;
            let e = error_e(&reference, &sigma, t).unwrap();
            assert!(hs_norm(&e) < 1e-9, "e_N({t}) = {}", hs_norm(&e));
        }
        let f = error_f(&reference, &sigma, &full).unwrap();
        assert!(hs_norm(&f) < 1e-9);
    }

    #[test]
    fn error_f_is_bounded_by_triangle_inequality() {
        let s = default_setup();
        let n = 64;
        let reference =
            reference_trajectory(s.system(), s.rho0(), 1.0, n * 16, tol::TOL_REF).unwrap();
        let theta = step1_simulate(s.system(), s.rho0(), 1.0, n, 2).unwrap();
        let ctrl = step2_generate_controls(&theta, s.system());
        let sigma = step3_propagate(s.sigma0(), s.system(), &ctrl).unwrap();
        let full = reference.full_propagator();
        let f = error_f(&reference, &sigma, &full).unwrap();
        let e_t = error_e(&reference, &sigma, 1.0).unwrap();
        let init = s.rho0().matrix().sub(s.sigma0().matrix());
        assert!(hs_norm(&f) <= hs_norm(&e_t) + hs_norm(&init) + 1e-12);
    }

    #[test]
    fn nested_grid_is_bit_reproducible() {
        let s = default_setup();
        let build = || {
            let reference =
                reference_trajectory(s.system(), s.rho0(), 1.0, 64 * 8, tol::TOL_REF).unwrap();
            let theta = step1_simulate(s.system(), s.rho0(), 1.0, 8, 2).unwrap();
            let ctrl = step2_generate_controls(&theta, s.system());
            (0..8)
                .map(|n| {
                    hs_norm(&hamiltonian_error(&reference, &ctrl, s.system(), n).unwrap())
                })
                .collect::<Vec<f64>>()
        };
        let a = build();
        let b = build();
        assert_eq!(a, b);
    }
}
