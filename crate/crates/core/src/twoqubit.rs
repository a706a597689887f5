//! Two-qubit entanglement-preparation example: fixed operators and states,
//! Lyapunov diagnostics, and finite-horizon convergence evidence for the
//! closed-loop design.
//!
//! Basis ordering is (|11>, |10>, |01>, |00>) with |1> = (1, 0)^T and
//! |0> = (0, 1)^T. All matrix literals and index arithmetic in this crate
//! use that ordering.

use num_complex::Complex64;

use crate::control::{BilinearSystem, FeedbackProtocol};
use crate::error::Result;
use crate::integrators::step1_simulate;
use crate::linalg::{commutator, ComplexMatrix, DensityMatrix, C64};

pub fn pauli_x() -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(2);
    m.set(0, 1, C64::new(1.0, 0.0));
    m.set(1, 0, C64::new(1.0, 0.0));
    m
}

pub fn pauli_y() -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(2);
    m.set(0, 1, C64::new(0.0, -1.0));
    m.set(1, 0, C64::new(0.0, 1.0));
    m
}

pub fn pauli_z() -> ComplexMatrix {
    ComplexMatrix::diag(&[1.0, -1.0])
}

/// Index of |q1 q2> in the (|11>, |10>, |01>, |00>) ordering.
pub fn ket_index(q1: u8, q2: u8) -> usize {
    (1 - q1 as usize) * 2 + (1 - q2 as usize)
}

fn basis_ket(q1: u8, q2: u8) -> [C64; 4] {
    let mut v = [C64::new(0.0, 0.0); 4];
    v[ket_index(q1, q2)] = C64::new(1.0, 0.0);
    v
}

/// The example's fixed operators and states with gain `K` and control
/// horizon `T`.
#[derive(Clone, Debug)]
pub struct TwoQubitSetup {
    sys: BilinearSystem,
    rho_d: DensityMatrix,
    rho0: DensityMatrix,
    sigma0: DensityMatrix,
    gain: f64,
    horizon: f64,
}

/// Default instance: K = 1, T = 1, rho0 = |10><10|, and imperfect plant
/// initialization sigma0 = 0.95 |10><10| + 0.05 |00><00|.
pub fn default_setup() -> TwoQubitSetup {
    setup_with(1.0, 1.0)
}

/// Build the example with a chosen gain and horizon.
pub fn setup_with(gain: f64, horizon: f64) -> TwoQubitSetup {
    assert!(gain > 0.0 && horizon > 0.0);
    let i2 = ComplexMatrix::identity(2);
    let h0 = pauli_z().kron(&i2).add(&i2.kron(&pauli_z()));
    let h1 = pauli_x().kron(&pauli_y()).sub(&pauli_y().kron(&pauli_x()));

    // Target: the entangled state (|10> + |01>) / sqrt(2).
    let mut phi = [C64::new(0.0, 0.0); 4];
    phi[ket_index(1, 0)] = C64::new(1.0, 0.0);
    phi[ket_index(0, 1)] = C64::new(1.0, 0.0);
    let rho_d = DensityMatrix::from_pure(&phi).expect("target state is a valid pure state");

    // u(rho) = -K tr(i [rho_d, H1] rho), affine with m = -K i [rho_d, H1].
    let m = commutator(rho_d.matrix(), &h1)
        .expect("matched dimensions")
        .scale(Complex64::new(0.0, -gain))
        .hermitian_part();
    let protocol = FeedbackProtocol::affine(m, 0.0).expect("m is Hermitian by construction");
    let sys = BilinearSystem::new(h0, vec![h1], vec![protocol]).expect("valid by construction");

    let rho0 = DensityMatrix::from_pure(&basis_ket(1, 0)).expect("valid pure state");
    let mut sigma0_mat = ComplexMatrix::zeros(4);
    sigma0_mat.set(ket_index(1, 0), ket_index(1, 0), C64::new(0.95, 0.0));
    sigma0_mat.set(ket_index(0, 0), ket_index(0, 0), C64::new(0.05, 0.0));
    let sigma0 = DensityMatrix::new(sigma0_mat).expect("valid mixed state");

    TwoQubitSetup {
        sys,
        rho_d,
        rho0,
        sigma0,
        gain,
        horizon,
    }
}

impl TwoQubitSetup {
    pub fn system(&self) -> &BilinearSystem {
        &self.sys
    }

    pub fn target(&self) -> &DensityMatrix {
        &self.rho_d
    }

    pub fn rho0(&self) -> &DensityMatrix {
        &self.rho0
    }

    pub fn sigma0(&self) -> &DensityMatrix {
        &self.sigma0
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Lyapunov value V(rho) = 1 - tr(rho_d rho), in [0, 1].
    pub fn lyapunov_v(&self, rho: &ComplexMatrix) -> f64 {
        1.0 - self.fidelity_to_target(rho)
    }

    /// Overlap with the target, tr(rho_d rho).
    pub fn fidelity_to_target(&self, rho: &ComplexMatrix) -> f64 {
        self.rho_d.matrix().matmul(rho).trace().re
    }

    /// The Lyapunov function as an affine protocol (m = -rho_d, c = 1), so
    /// its time derivative can be taken through the same machinery as the
    /// feedback protocols.
    pub fn lyapunov_as_protocol(&self) -> FeedbackProtocol {
        FeedbackProtocol::affine(self.rho_d.matrix().scale_re(-1.0), 1.0)
            .expect("rho_d is Hermitian")
    }

    /// Closed-loop convergence evidence over `[0, t_long]`.
    ///
    /// Integrates the feedback system from rho0 at reference quality and
    /// verifies, step by step: V nonincreasing, the populations of the
    /// invariant basis states staying at zero, support confinement to
    /// span{|10>, |01>}, and purity conservation. Samples are recorded at
    /// every `stride`-th grid point.
    pub fn convergence_trace(
        &self,
        t_long: f64,
        n_steps: usize,
        stride: usize,
    ) -> Result<EvidenceReport> {
        let theta = step1_simulate(&self.sys, &self.rho0, t_long, n_steps, 5)?;
        let stride = stride.max(1);
        let h = theta.step();
        let i11 = ket_index(1, 1);
        let i00 = ket_index(0, 0);

        let mut report = EvidenceReport::default();
        let mut prev_v = f64::INFINITY;
        let initial_purity = purity_of(theta.point(0));
        for (n, point) in theta.points().iter().enumerate() {
            let t = n as f64 * h;
            let v = self.lyapunov_v(point);

            let increase = v - prev_v;
            if increase > report.max_v_step_increase {
                report.max_v_step_increase = increase;
                report.worst_v_time = t;
            }
            prev_v = v;

            let population = point.get(i11, i11).re.abs().max(point.get(i00, i00).re.abs());
            if population > report.max_invariant_population {
                report.max_invariant_population = population;
                report.worst_population_time = t;
            }

            let mut off_support = 0.0f64;
            for j in 0..4 {
                off_support = off_support
                    .max(point.get(i11, j).norm())
                    .max(point.get(j, i11).norm())
                    .max(point.get(i00, j).norm())
                    .max(point.get(j, i00).norm());
            }
            if off_support > report.max_off_support {
                report.max_off_support = off_support;
            }

            let drift = (purity_of(point) - initial_purity).abs();
            if drift > report.max_purity_drift {
                report.max_purity_drift = drift;
                report.worst_purity_time = t;
            }

            if n % stride == 0 || n == theta.n_grid() {
                report.samples.push(TraceSample {
                    t,
                    v,
                    fidelity: self.fidelity_to_target(point),
                    u1: self.sys.protocol(0).value(point),
                    purity: purity_of(point),
                });
            }
        }
        report.final_v = self.lyapunov_v(theta.point(theta.n_grid()));
        Ok(report)
    }
}

fn purity_of(rho: &ComplexMatrix) -> f64 {
    rho.matmul(rho).trace().re
}

/// One diagnostic row of the closed-loop trace.
#[derive(Clone, Copy, Debug)]
pub struct TraceSample {
    pub t: f64,
    pub v: f64,
    pub fidelity: f64,
    pub u1: f64,
    pub purity: f64,
}

/// Worst-case diagnostics of a closed-loop run; see
/// [`TwoQubitSetup::convergence_trace`].
#[derive(Clone, Debug, Default)]
pub struct EvidenceReport {
    pub samples: Vec<TraceSample>,
    /// Largest per-step increase of V (negative or ~0 when V is monotone).
    pub max_v_step_increase: f64,
    pub worst_v_time: f64,
    pub max_invariant_population: f64,
    pub worst_population_time: f64,
    pub max_off_support: f64,
    pub max_purity_drift: f64,
    pub worst_purity_time: f64,
    pub final_v: f64,
}

impl EvidenceReport {
    /// All four checks at the pinned tolerances.
    pub fn passes(&self, v_final_threshold: f64) -> bool {
        self.violations(v_final_threshold).is_empty()
    }

    pub fn violations(&self, v_final_threshold: f64) -> Vec<String> {
        let mut out = Vec::new();
        if self.max_v_step_increase > crate::tol::TOL_EVIDENCE_V_STEP {
            out.push(format!(
                "V increased by {:.3e} at t = {:.6}",
                self.max_v_step_increase, self.worst_v_time
            ));
        }
        if self.max_invariant_population > crate::tol::TOL_EVIDENCE_POPULATION {
            out.push(format!(
                "invariant population reached {:.3e} at t = {:.6}",
                self.max_invariant_population, self.worst_population_time
            ));
        }
        if self.max_off_support > crate::tol::TOL_EVIDENCE_SUPPORT {
            out.push(format!(
                "off-support entry reached {:.3e}",
                self.max_off_support
            ));
        }
        if self.max_purity_drift > crate::tol::TOL_EVIDENCE_PURITY {
            out.push(format!(
                "purity drifted by {:.3e} at t = {:.6}",
                self.max_purity_drift, self.worst_purity_time
            ));
        }
        if self.final_v > v_final_threshold {
            out.push(format!(
                "final V = {:.6e} above threshold {:.3e}",
                self.final_v, v_final_threshold
            ));
        }
        out
    }
}
