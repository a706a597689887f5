//! Bilinear feedback systems: drift and control Hamiltonians, feedback
//! protocols, protocol derivatives, and the Lipschitz-style constants used
//! by the error upper bound.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{commutator, from_coords, to_coords, ComplexMatrix, CoordinateVector};
use crate::tol;

type ValueFn = dyn Fn(&ComplexMatrix) -> f64 + Send + Sync;
type GradientFn = dyn Fn(&ComplexMatrix) -> CoordinateVector + Send + Sync;

/// Real-valued feedback protocol u(rho).
///
/// The shipped feature set is the affine family u(rho) = tr(m rho) + c with
/// Hermitian m, which has a closed-form global gradient bound. User-supplied
/// protocols are an extension point: the caller provides the value function
/// and its gradient in the coordinate chart, and gradient bounds are then
/// only estimated from sample states.
#[derive(Clone)]
pub enum FeedbackProtocol {
    Affine { m: ComplexMatrix, c: f64 },
    Custom {
        dim: usize,
        value: Arc<ValueFn>,
        gradient: Arc<GradientFn>,
    },
}

impl fmt::Debug for FeedbackProtocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeedbackProtocol::Affine { m, c } => {
                write!(f, "Affine {{ dim: {}, c: {} }}", m.dim(), c)
            }
            FeedbackProtocol::Custom { dim, .. } => write!(f, "Custom {{ dim: {dim} }}"),
        }
    }
}

impl FeedbackProtocol {
    /// Affine protocol u(rho) = tr(m rho) + c; `m` must be Hermitian so the
    /// value is real on every Hermitian input.
    pub fn affine(m: ComplexMatrix, c: f64) -> Result<Self> {
        let residual = m.herm_residual();
        if residual > tol::TOL_HERM * m.hs_norm().max(1.0) {
            return Err(Error::NotHermitian { residual });
        }
        Ok(FeedbackProtocol::Affine { m, c })
    }

    /// Constant protocol u(rho) = c.
    pub fn constant(dim: usize, c: f64) -> Self {
        FeedbackProtocol::Affine {
            m: ComplexMatrix::zeros(dim),
            c,
        }
    }

    pub fn custom(
        dim: usize,
        value: impl Fn(&ComplexMatrix) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&ComplexMatrix) -> CoordinateVector + Send + Sync + 'static,
    ) -> Self {
        FeedbackProtocol::Custom {
            dim,
            value: Arc::new(value),
            gradient: Arc::new(gradient),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FeedbackProtocol::Affine { m, .. } => m.dim(),
            FeedbackProtocol::Custom { dim, .. } => *dim,
        }
    }

    /// Evaluate the protocol on a Hermitian trace-one state.
    pub fn value(&self, rho: &ComplexMatrix) -> f64 {
        match self {
            FeedbackProtocol::Affine { m, c } => m.matmul(rho).trace().re + c,
            FeedbackProtocol::Custom { value, .. } => value(rho),
        }
    }

    /// Gradient in the coordinate chart at `rho`.
    ///
    /// For affine protocols this is state-independent: the derivative with
    /// respect to a head diagonal entry is m_ii - m_NN (the last diagonal
    /// entry is eliminated by the trace constraint), and the derivatives with
    /// respect to the real/imaginary off-diagonal coordinates are
    /// tr(m E_jk) and tr(m F_jk).
    pub fn gradient(&self, rho: &ComplexMatrix) -> CoordinateVector {
        match self {
            FeedbackProtocol::Affine { m, .. } => {
                let dim = m.dim();
                let mut g = CoordinateVector::zeros(dim);
                let m_last = m.get(dim - 1, dim - 1).re;
                for i in 0..dim - 1 {
                    g.diag[i] = m.get(i, i).re - m_last;
                }
                let mut idx = 0;
                for i in 0..dim {
                    for j in (i + 1)..dim {
                        g.re[idx] = 2.0 * m.get(i, j).re;
                        g.im[idx] = 2.0 * m.get(i, j).im;
                        idx += 1;
                    }
                }
                g
            }
            FeedbackProtocol::Custom { gradient, .. } => gradient(rho),
        }
    }

    /// Protocol derivative packaged as a matrix, evaluated at `rho`.
    pub fn derivative_matrix(&self, rho: &ComplexMatrix) -> DerivativeMatrix {
        DerivativeMatrix::from_gradient(&self.gradient(rho))
    }

    /// Closed-form global bound on the gradient norm (affine only).
    pub fn l1_constant(&self) -> Result<f64> {
        match self {
            FeedbackProtocol::Affine { .. } => {
                let dummy = ComplexMatrix::zeros(self.dim());
                Ok(self.derivative_matrix(&dummy).hs_norm())
            }
            FeedbackProtocol::Custom { .. } => Err(Error::NoClosedFormGradient),
        }
    }

    /// Maximum gradient norm over a sample set; a lower estimate of the
    /// global constant for user-supplied protocols.
    pub fn l1_max_over<'a>(&self, states: impl IntoIterator<Item = &'a ComplexMatrix>) -> f64 {
        states
            .into_iter()
            .map(|rho| self.derivative_matrix(rho).hs_norm())
            .fold(0.0, f64::max)
    }

    /// Maximum |u(rho)| over trajectory samples (finite-horizon estimate of
    /// the trajectory supremum).
    pub fn l0_estimate<'a>(&self, states: impl IntoIterator<Item = &'a ComplexMatrix>) -> f64 {
        states
            .into_iter()
            .map(|rho| self.value(rho).abs())
            .fold(0.0, f64::max)
    }

    /// Analytic cap on |u| over all density matrices (affine only):
    /// |tr(m rho)| <= |m| since |rho| <= 1, so |u| <= |m| + |c|.
    pub fn l0_cap(&self) -> Option<f64> {
        match self {
            FeedbackProtocol::Affine { m, c } => Some(m.hs_norm() + c.abs()),
            FeedbackProtocol::Custom { .. } => None,
        }
    }
}

/// The protocol-derivative matrix paired with a state derivative in the
/// trace identity d/ds u(rho(s)) = tr(D (-i)[H(s), rho(s)]).
///
/// Entries: head diagonal carries the diagonal-coordinate derivatives, the
/// last diagonal entry is zero, and the (j, k) entry for j < k is
/// (du/dR + i du/dI) / 2 with the conjugate below the diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivativeMatrix {
    mat: ComplexMatrix,
}

impl DerivativeMatrix {
    pub fn from_gradient(grad: &CoordinateVector) -> Self {
        let dim = grad.dim;
        let mut mat = ComplexMatrix::zeros(dim);
        for i in 0..dim - 1 {
            mat.set(i, i, Complex64::new(grad.diag[i], 0.0));
        }
        let mut idx = 0;
        for j in 0..dim {
            for k in (j + 1)..dim {
                let entry = Complex64::new(grad.re[idx], grad.im[idx]) * 0.5;
                mat.set(j, k, entry);
                mat.set(k, j, entry.conj());
                idx += 1;
            }
        }
        Self { mat }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn hs_norm(&self) -> f64 {
        self.mat.hs_norm()
    }
}

/// The bilinear feedback system: drift Hamiltonian, control Hamiltonians,
/// and one feedback protocol per control.
#[derive(Clone, Debug)]
pub struct BilinearSystem {
    h0: ComplexMatrix,
    controls: Vec<ComplexMatrix>,
    protocols: Vec<FeedbackProtocol>,
}

impl BilinearSystem {
    pub fn new(
        h0: ComplexMatrix,
        controls: Vec<ComplexMatrix>,
        protocols: Vec<FeedbackProtocol>,
    ) -> Result<Self> {
        if controls.is_empty() || controls.len() != protocols.len() {
            return Err(Error::Config(format!(
                "need M >= 1 control Hamiltonians with matching protocols, got {} and {}",
                controls.len(),
                protocols.len()
            )));
        }
        let dim = h0.dim();
        for h in std::iter::once(&h0).chain(controls.iter()) {
            if h.dim() != dim {
                return Err(Error::DimensionMismatch {
                    left: dim,
                    right: h.dim(),
                });
            }
            let residual = h.herm_residual();
            if residual > tol::TOL_HERM * h.hs_norm().max(1.0) {
                return Err(Error::NotHermitian { residual });
            }
        }
        for p in &protocols {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch {
                    left: dim,
                    right: p.dim(),
                });
            }
        }
        Ok(Self {
            h0,
            controls,
            protocols,
        })
    }

    pub fn dim(&self) -> usize {
        self.h0.dim()
    }

    /// Number of controls, M.
    pub fn n_controls(&self) -> usize {
        self.controls.len()
    }

    pub fn drift(&self) -> &ComplexMatrix {
        &self.h0
    }

    pub fn control(&self, k: usize) -> &ComplexMatrix {
        &self.controls[k]
    }

    pub fn protocol(&self, k: usize) -> &FeedbackProtocol {
        &self.protocols[k]
    }

    pub fn protocols(&self) -> &[FeedbackProtocol] {
        &self.protocols
    }

    /// All protocol values at a state, in control order.
    pub fn protocol_values(&self, rho: &ComplexMatrix) -> Vec<f64> {
        self.protocols.iter().map(|p| p.value(rho)).collect()
    }

    /// H0 + sum_k u_k(rho) H_k.
    pub fn total_hamiltonian(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        self.hamiltonian_with_controls(&self.protocol_values(rho))
    }

    /// H0 + sum_k u_k H_k for fixed control values.
    pub fn hamiltonian_with_controls(&self, u: &[f64]) -> ComplexMatrix {
        debug_assert_eq!(u.len(), self.controls.len());
        let mut h = self.h0.clone();
        for (hk, &uk) in self.controls.iter().zip(u) {
            h.add_scaled_assign(uk, hk);
        }
        h
    }

    /// Closed-loop right-hand side -i[H0 + sum u_k(rho) H_k, rho].
    pub fn closed_loop_rhs(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        let h = self.total_hamiltonian(rho);
        commutator(&h, rho)
            .expect("dimensions validated at construction")
            .scale(Complex64::new(0.0, -1.0))
    }

    /// Time derivative of a protocol value along the closed-loop flow,
    /// tr(D_u (-i)[H(rho), rho]).
    pub fn protocol_time_derivative(&self, p: &FeedbackProtocol, rho: &ComplexMatrix) -> f64 {
        let d = p.derivative_matrix(rho);
        d.matrix().matmul(&self.closed_loop_rhs(rho)).trace().re
    }
}

/// Chain rule for u(rho(s)) written in chart coordinates: the gradient dotted
/// with the coordinate velocities of rho_dot. Used as the independent side of
/// the trace-identity check.
pub fn chain_rule_derivative(
    p: &FeedbackProtocol,
    rho: &ComplexMatrix,
    rho_dot: &ComplexMatrix,
) -> f64 {
    let grad = p.gradient(rho);
    let vel = to_coords(rho_dot);
    let mut total = 0.0;
    for (g, v) in grad.diag.iter().zip(&vel.diag) {
        total += g * v;
    }
    for (g, v) in grad.re.iter().zip(&vel.re) {
        total += g * v;
    }
    for (g, v) in grad.im.iter().zip(&vel.im) {
        total += g * v;
    }
    total
}

/// Central-difference gradient of a protocol in the coordinate chart;
/// test oracle for `FeedbackProtocol::gradient`.
pub fn finite_difference_gradient(
    p: &FeedbackProtocol,
    rho: &ComplexMatrix,
    step: f64,
) -> CoordinateVector {
    let base = to_coords(rho);
    let flat = base.flatten();
    let dim = base.dim;
    let mut out = Vec::with_capacity(flat.len());
    for i in 0..flat.len() {
        let mut plus = flat.clone();
        let mut minus = flat.clone();
        plus[i] += step;
        minus[i] -= step;
        let up = p.value(&from_coords(&CoordinateVector::from_flat(dim, &plus)));
        let down = p.value(&from_coords(&CoordinateVector::from_flat(dim, &minus)));
        out.push((up - down) / (2.0 * step));
    }
    CoordinateVector::from_flat(dim, &out)
}
