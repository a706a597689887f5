//! Dense complex matrices at small fixed dimension, density matrices, and
//! the real coordinate chart on Hermitian trace-one matrices.

mod eigen;

pub use eigen::eigh;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tol;

pub type C64 = Complex64;

/// Square complex matrix, row-major storage.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl std::fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "ComplexMatrix(dim={})", self.dim)?;
        for i in 0..self.dim {
            let row: Vec<String> = (0..self.dim)
                .map(|j| format!("{:+.4}{:+.4}i", self.get(i, j).re, self.get(i, j).im))
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![C64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set(i, i, C64::new(1.0, 0.0));
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Build from rows; every row must have the same length as the row count.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let dim = rows.len();
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    left: dim,
                    right: row.len(),
                });
            }
        }
        Ok(Self::from_fn(dim, |i, j| rows[i][j]))
    }

    /// Diagonal matrix from real entries.
    pub fn diag(entries: &[f64]) -> Self {
        let mut m = Self::zeros(entries.len());
        for (i, &e) in entries.iter().enumerate() {
            m.set(i, i, C64::new(e, 0.0));
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: C64) {
        self.data[i * self.dim + j] = value;
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Self {
            dim: self.dim,
            data,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Self {
            dim: self.dim,
            data,
        }
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|a| a * factor).collect(),
        }
    }

    pub fn scale_re(&self, factor: f64) -> Self {
        self.scale(C64::new(factor, 0.0))
    }

    /// In-place `self += factor * other`; the workhorse of RK stage sums.
    pub fn add_scaled_assign(&mut self, factor: f64, other: &Self) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let aik = self.data[i * n + k];
                if aik == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += aik * other.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self.get(j, i).conj())
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Hermitian part (A + A^dag) / 2.
    pub fn hermitian_part(&self) -> Self {
        Self::from_fn(self.dim, |i, j| {
            (self.get(i, j) + self.get(j, i).conj()) * 0.5
        })
    }

    /// Max entrywise |A - A^dag|.
    pub fn herm_residual(&self) -> f64 {
        let mut max = 0.0f64;
        for i in 0..self.dim {
            for j in 0..self.dim {
                max = max.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        max
    }

    pub fn is_hermitian(&self, tolerance: f64) -> bool {
        self.herm_residual() <= tolerance
    }

    pub fn hs_norm(&self) -> f64 {
        self.data.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|a| a.re.is_finite() && a.im.is_finite())
    }

    /// Unitary conjugation `u self u^dag`.
    pub fn conjugate_by(&self, u: &Self) -> Self {
        u.matmul(self).matmul(&u.adjoint())
    }

    /// Kronecker product; the result acts on the tensor-product space with
    /// the left factor on the first subsystem.
    pub fn kron(&self, other: &Self) -> Self {
        let n = self.dim;
        let m = other.dim;
        ComplexMatrix::from_fn(n * m, |i, j| {
            self.get(i / m, j / m) * other.get(i % m, j % m)
        })
    }
}

/// Commutator [a, b] = ab - ba.
pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(a.matmul(b).sub(&b.matmul(a)))
}

/// Hilbert-Schmidt (Frobenius) norm, sqrt(tr(A^dag A)).
pub fn hs_norm(a: &ComplexMatrix) -> f64 {
    a.hs_norm()
}

/// Matrix exponential `e^{-i h t}` of a Hermitian `h`, via eigendecomposition.
///
/// The result is unitary up to round-off regardless of `t`, which is what the
/// propagator invariants downstream rely on.
pub fn unitary_exp(h: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
    let residual = h.herm_residual();
    if residual > tol::TOL_HERM * h.hs_norm().max(1.0) {
        return Err(Error::NotHermitian { residual });
    }
    let (values, v) = eigh(h)?;
    let n = h.dim();
    // U = V diag(e^{-i lambda t}) V^dag, assembled without forming diag.
    let mut scaled = ComplexMatrix::zeros(n);
    for (j, lambda) in values.iter().enumerate() {
        let phase = C64::new(0.0, -lambda * t).exp();
        for i in 0..n {
            scaled.set(i, j, v.get(i, j) * phase);
        }
    }
    Ok(scaled.matmul(&v.adjoint()))
}

/// Density matrix: Hermitian, trace-one, positive semi-definite within the
/// pinned tolerances.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    mat: ComplexMatrix,
}

impl DensityMatrix {
    /// Validate with the standard eigenvalue floor.
    pub fn new(mat: ComplexMatrix) -> Result<Self> {
        Self::with_psd_floor(mat, tol::PSD_FLOOR)
    }

    /// Validate with a caller-chosen eigenvalue floor (reference-trajectory
    /// samples use a relaxed one).
    pub fn with_psd_floor(mat: ComplexMatrix, floor: f64) -> Result<Self> {
        Self::with_tolerances(mat, floor, tol::TOL_TRACE)
    }

    /// Validate with a caller-chosen eigenvalue floor and trace tolerance.
    /// Long unitary-conjugation chains accumulate trace round-off beyond the
    /// construction-time tolerance; their samples are validated against the
    /// conservation allowance instead.
    pub fn with_tolerances(mat: ComplexMatrix, floor: f64, trace_tol: f64) -> Result<Self> {
        if mat.dim() < 2 {
            return Err(Error::InvalidDensity {
                reason: format!("dimension {} < 2", mat.dim()),
            });
        }
        if !mat.is_finite() {
            return Err(Error::InvalidDensity {
                reason: "non-finite entries".into(),
            });
        }
        let herm = mat.herm_residual();
        if herm > tol::TOL_HERM {
            return Err(Error::InvalidDensity {
                reason: format!("Hermiticity residual {herm:.3e}"),
            });
        }
        let tr = mat.trace();
        if (tr.re - 1.0).abs() > trace_tol || tr.im.abs() > trace_tol {
            return Err(Error::InvalidDensity {
                reason: format!("trace {} + {}i", tr.re, tr.im),
            });
        }
        let (values, _) = eigh(&mat.hermitian_part())?;
        if values[0] < floor {
            return Err(Error::InvalidDensity {
                reason: format!("eigenvalue {:.3e} below floor {floor:.1e}", values[0]),
            });
        }
        Ok(Self { mat })
    }

    /// Pure state |psi><psi| from an unnormalized state vector.
    pub fn from_pure(state: &[C64]) -> Result<Self> {
        let norm_sqr: f64 = state.iter().map(|c| c.norm_sqr()).sum();
        if norm_sqr <= 0.0 {
            return Err(Error::InvalidDensity {
                reason: "zero state vector".into(),
            });
        }
        let dim = state.len();
        let mat = ComplexMatrix::from_fn(dim, |i, j| state[i] * state[j].conj() / norm_sqr);
        Self::new(mat)
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        let mat = ComplexMatrix::identity(dim).scale_re(1.0 / dim as f64);
        Self { mat }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.dim()
    }

    /// tr(rho^2); equals 1 for pure states, conserved under unitary flow.
    pub fn purity(&self) -> f64 {
        self.mat.matmul(&self.mat).trace().re
    }

    pub fn coords(&self) -> CoordinateVector {
        to_coords(&self.mat)
    }
}

/// Real coordinates of a Hermitian trace-one matrix: the first N_S - 1
/// diagonal entries, then the real parts of the upper triangle, then the
/// imaginary parts, each block in lexicographic (i, j) order.
#[derive(Clone, Debug, PartialEq)]
pub struct CoordinateVector {
    pub dim: usize,
    pub diag: Vec<f64>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl CoordinateVector {
    pub fn zeros(dim: usize) -> Self {
        let pairs = dim * (dim - 1) / 2;
        Self {
            dim,
            diag: vec![0.0; dim - 1],
            re: vec![0.0; pairs],
            im: vec![0.0; pairs],
        }
    }

    /// Total number of coordinates, N_S^2 - 1.
    pub fn len(&self) -> usize {
        self.dim * self.dim - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flatten to a single slice-backed vector in the pinned ordering.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        out.extend_from_slice(&self.diag);
        out.extend_from_slice(&self.re);
        out.extend_from_slice(&self.im);
        out
    }

    pub fn from_flat(dim: usize, flat: &[f64]) -> Self {
        let pairs = dim * (dim - 1) / 2;
        assert_eq!(flat.len(), dim * dim - 1);
        Self {
            dim,
            diag: flat[..dim - 1].to_vec(),
            re: flat[dim - 1..dim - 1 + pairs].to_vec(),
            im: flat[dim - 1 + pairs..].to_vec(),
        }
    }
}

/// Index of the (i, j) pair, i < j (0-based), in the lexicographic ordering.
fn pair_index(dim: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < dim);
    // pairs (0,1)...(0,dim-1), (1,2)...
    i * dim - i * (i + 1) / 2 + (j - i - 1)
}

/// Extract the coordinate chart from a Hermitian trace-one matrix.
pub fn to_coords(m: &ComplexMatrix) -> CoordinateVector {
    let dim = m.dim();
    let mut c = CoordinateVector::zeros(dim);
    for i in 0..dim - 1 {
        c.diag[i] = m.get(i, i).re;
    }
    for i in 0..dim {
        for j in (i + 1)..dim {
            let idx = pair_index(dim, i, j);
            let entry = m.get(i, j);
            c.re[idx] = entry.re;
            c.im[idx] = entry.im;
        }
    }
    c
}

/// Rebuild the Hermitian trace-one matrix from chart coordinates; the last
/// diagonal entry is fixed by the trace. Positivity is not enforced.
pub fn from_coords(c: &CoordinateVector) -> ComplexMatrix {
    let dim = c.dim;
    let mut m = ComplexMatrix::zeros(dim);
    let mut trace_head = 0.0;
    for i in 0..dim - 1 {
        m.set(i, i, C64::new(c.diag[i], 0.0));
        trace_head += c.diag[i];
    }
    m.set(dim - 1, dim - 1, C64::new(1.0 - trace_head, 0.0));
    for i in 0..dim {
        for j in (i + 1)..dim {
            let idx = pair_index(dim, i, j);
            let entry = C64::new(c.re[idx], c.im[idx]);
            m.set(i, j, entry);
            m.set(j, i, entry.conj());
        }
    }
    m
}

/// Which Hermitian basis operator to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisKind {
    /// E_jk = e_j e_k^T + e_k e_j^T, j < k.
    E,
    /// F_jk = i e_j e_k^T - i e_k e_j^T, j < k.
    F,
    /// Omega_kk = e_k e_k^T.
    Omega,
}

/// Hermitian basis operator with 1-based indices matching e_j(k) = delta_jk.
pub fn basis_operator(kind: BasisKind, j: usize, k: usize, dim: usize) -> Result<ComplexMatrix> {
    let in_range = |x: usize| x >= 1 && x <= dim;
    let ok = match kind {
        BasisKind::E | BasisKind::F => in_range(j) && in_range(k) && j < k,
        BasisKind::Omega => in_range(j) && j == k,
    };
    if !ok {
        return Err(Error::IndexOutOfRange { j, k, dim });
    }
    let (j0, k0) = (j - 1, k - 1);
    let mut m = ComplexMatrix::zeros(dim);
    match kind {
        BasisKind::E => {
            m.set(j0, k0, C64::new(1.0, 0.0));
            m.set(k0, j0, C64::new(1.0, 0.0));
        }
        BasisKind::F => {
            m.set(j0, k0, C64::new(0.0, 1.0));
            m.set(k0, j0, C64::new(0.0, -1.0));
        }
        BasisKind::Omega => {
            m.set(j0, k0, C64::new(1.0, 0.0));
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    use crate::twoqubit::{pauli_x, pauli_y, pauli_z};

    fn random_density(dim: usize, rng: &mut impl Rng) -> DensityMatrix {
        let g = ComplexMatrix::from_fn(dim, |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let ggt = g.matmul(&g.adjoint());
        let tr = ggt.trace().re;
        DensityMatrix::new(ggt.scale_re(1.0 / tr).hermitian_part()).unwrap()
    }

    #[test]
    fn commutator_of_matrix_with_itself_is_zero() {
        let x = pauli_x();
        assert_eq!(commutator(&x, &x).unwrap(), ComplexMatrix::zeros(2));
    }

    #[test]
    fn commutator_z_x_is_2i_y() {
        let zx = commutator(&pauli_z(), &pauli_x()).unwrap();
        let expected = pauli_y().scale(C64::new(0.0, 2.0));
        assert!(hs_norm(&zx.sub(&expected)) < 1e-15);
    }

    #[test]
    fn commutator_dimension_mismatch_is_an_error() {
        let a = ComplexMatrix::zeros(2);
        let b = ComplexMatrix::zeros(3);
        assert!(matches!(
            commutator(&a, &b),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn matrix_from_reals(dim: usize, reals: &[f64]) -> ComplexMatrix {
        ComplexMatrix::from_fn(dim, |i, j| {
            let k = 2 * (i * dim + j);
            C64::new(reals[k], reals[k + 1])
        })
    }

    proptest::proptest! {
        #[test]
        fn commutator_antisymmetry_and_factor_two_bound(
            a_entries in proptest::collection::vec(-1.0f64..1.0, 32),
            b_entries in proptest::collection::vec(-1.0f64..1.0, 32),
        ) {
            let a = matrix_from_reals(4, &a_entries);
            let b = matrix_from_reals(4, &b_entries);
            let ab = commutator(&a, &b).unwrap();
            let ba = commutator(&b, &a).unwrap();
            proptest::prop_assert!(hs_norm(&ab.add(&ba)) < 1e-13);
            // |[A,B]| <= 2 |A| |B|
            proptest::prop_assert!(hs_norm(&ab) <= 2.0 * hs_norm(&a) * hs_norm(&b) + 1e-12);
        }

        #[test]
        fn chart_round_trips_on_arbitrary_coordinates(
            flat in proptest::collection::vec(-1.0f64..1.0, 15),
        ) {
            // The chart covers all Hermitian trace-one matrices, positive
            // or not.
            let c = CoordinateVector::from_flat(4, &flat);
            let m = from_coords(&c);
            proptest::prop_assert!(m.is_hermitian(0.0));
            proptest::prop_assert!((m.trace().re - 1.0).abs() < 1e-15);
            let back = to_coords(&m).flatten();
            for (x, y) in flat.iter().zip(back) {
                proptest::prop_assert!((x - y).abs() < tol::TOL_COORDS);
            }
        }
    }

    #[test]
    fn commutator_is_bilinear() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let rand_mat = |rng: &mut ChaCha8Rng| {
            ComplexMatrix::from_fn(3, |_, _| {
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            })
        };
        for _ in 0..20 {
            let a = rand_mat(&mut rng);
            let b = rand_mat(&mut rng);
            let c = rand_mat(&mut rng);
            let alpha = rng.gen_range(-2.0..2.0);
            let lhs = commutator(&a.scale_re(alpha).add(&b), &c).unwrap();
            let rhs = commutator(&a, &c)
                .unwrap()
                .scale_re(alpha)
                .add(&commutator(&b, &c).unwrap());
            assert!(hs_norm(&lhs.sub(&rhs)) < 1e-12);
        }
    }

    #[test]
    fn hs_norm_of_zero_and_identity() {
        assert_eq!(hs_norm(&ComplexMatrix::zeros(3)), 0.0);
        assert_relative_eq!(hs_norm(&ComplexMatrix::identity(4)), 2.0);
    }

    #[test]
    fn hs_norm_preserved_under_unitary_conjugation() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let h = ComplexMatrix::from_fn(4, |_, _| {
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            })
            .hermitian_part();
            let u = unitary_exp(&h, rng.gen_range(-3.0..3.0)).unwrap();
            let a = ComplexMatrix::from_fn(4, |_, _| {
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let conjugated = a.conjugate_by(&u);
            assert!((hs_norm(&conjugated) - hs_norm(&a)).abs() < 1e-12);
        }
    }

    #[test]
    fn unitary_exp_at_zero_time_is_identity() {
        let h = pauli_z();
        let u = unitary_exp(&h, 0.0).unwrap();
        assert!(hs_norm(&u.sub(&ComplexMatrix::identity(2))) < 1e-15);
    }

    #[test]
    fn unitary_exp_of_z_at_pi_is_minus_identity() {
        let u = unitary_exp(&pauli_z(), std::f64::consts::PI).unwrap();
        let expected = ComplexMatrix::identity(2).scale_re(-1.0);
        assert!(hs_norm(&u.sub(&expected)) < 1e-14);
    }

    #[test]
    fn unitary_exp_of_x_at_half_pi_is_minus_i_x() {
        let u = unitary_exp(&pauli_x(), std::f64::consts::FRAC_PI_2).unwrap();
        let expected = pauli_x().scale(C64::new(0.0, -1.0));
        assert!(hs_norm(&u.sub(&expected)) < 1e-14);
    }

    #[test]
    fn unitary_exp_rejects_non_hermitian_input() {
        let mut m = ComplexMatrix::zeros(2);
        m.set(0, 1, C64::new(1.0, 0.0));
        assert!(matches!(
            unitary_exp(&m, 1.0),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn unitary_exp_inverse_pairs_compose_to_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let h = ComplexMatrix::from_fn(4, |_, _| {
                C64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))
            })
            .hermitian_part();
            let t = rng.gen_range(-5.0..5.0);
            let u = unitary_exp(&h, t).unwrap();
            let uinv = unitary_exp(&h, -t).unwrap();
            let prod = u.matmul(&uinv);
            assert!(hs_norm(&prod.sub(&ComplexMatrix::identity(4))) <= tol::TOL_UNITARY);
            // And the exponential itself is unitary.
            let res = u.adjoint().matmul(&u).sub(&ComplexMatrix::identity(4));
            assert!(hs_norm(&res) <= tol::TOL_UNITARY);
        }
    }

    #[test]
    fn density_matrix_validation_catches_bad_inputs() {
        // Trace off by too much.
        let m = ComplexMatrix::diag(&[0.6, 0.6]);
        assert!(DensityMatrix::new(m).is_err());
        // Negative eigenvalue beyond the floor.
        let m = ComplexMatrix::diag(&[1.5, -0.5]);
        assert!(DensityMatrix::new(m).is_err());
        // Valid mixed state.
        let m = ComplexMatrix::diag(&[0.25, 0.75]);
        assert!(DensityMatrix::new(m).is_ok());
    }

    #[test]
    fn maximally_mixed_coords_are_uniform_diagonal() {
        let rho = DensityMatrix::maximally_mixed(4);
        let c = rho.coords();
        for d in &c.diag {
            assert_relative_eq!(*d, 0.25, epsilon = 1e-15);
        }
        assert!(c.re.iter().chain(c.im.iter()).all(|&x| x == 0.0));
    }

    #[test]
    fn coordinate_round_trip_on_random_density_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let dim = *[2usize, 3, 4, 5].choose(&mut rng).unwrap();
            let rho = random_density(dim, &mut rng);
            let rebuilt = from_coords(&rho.coords());
            assert!(
                hs_norm(&rebuilt.sub(rho.matrix())) < tol::TOL_COORDS,
                "round trip failed at dim {dim}"
            );
            // And the reverse composition on the chart side.
            let c = rho.coords();
            let c2 = to_coords(&from_coords(&c));
            assert_eq!(c.flatten().len(), c2.flatten().len());
            for (a, b) in c.flatten().iter().zip(c2.flatten()) {
                assert!((a - b).abs() < tol::TOL_COORDS);
            }
        }
    }

    #[test]
    fn basis_operators_match_their_definitions() {
        let omega = basis_operator(BasisKind::Omega, 1, 1, 2).unwrap();
        assert_eq!(omega, ComplexMatrix::diag(&[1.0, 0.0]));

        let e12 = basis_operator(BasisKind::E, 1, 2, 2).unwrap();
        assert_eq!(e12, pauli_x());

        let f12 = basis_operator(BasisKind::F, 1, 2, 2).unwrap();
        let minus_y = pauli_y().scale_re(-1.0);
        assert!(hs_norm(&f12.sub(&minus_y)) < 1e-15);
    }

    #[test]
    fn basis_operator_norms_and_index_errors() {
        for dim in [2usize, 4] {
            for j in 1..=dim {
                for k in (j + 1)..=dim {
                    let e = basis_operator(BasisKind::E, j, k, dim).unwrap();
                    let f = basis_operator(BasisKind::F, j, k, dim).unwrap();
                    assert_relative_eq!(hs_norm(&e), 2f64.sqrt(), epsilon = 1e-15);
                    assert_relative_eq!(hs_norm(&f), 2f64.sqrt(), epsilon = 1e-15);
                    assert!(e.is_hermitian(0.0));
                    assert!(f.is_hermitian(0.0));
                }
                let o = basis_operator(BasisKind::Omega, j, j, dim).unwrap();
                assert_relative_eq!(hs_norm(&o), 1.0);
            }
        }
        assert!(basis_operator(BasisKind::E, 2, 1, 4).is_err());
        assert!(basis_operator(BasisKind::E, 0, 1, 4).is_err());
        assert!(basis_operator(BasisKind::Omega, 5, 5, 4).is_err());
        assert!(basis_operator(BasisKind::F, 1, 5, 4).is_err());
    }

    #[test]
    fn kron_builds_standard_two_qubit_operators() {
        let zi = pauli_z().kron(&ComplexMatrix::identity(2));
        assert_eq!(zi, ComplexMatrix::diag(&[1.0, 1.0, -1.0, -1.0]));
        let iz = ComplexMatrix::identity(2).kron(&pauli_z());
        assert_eq!(iz, ComplexMatrix::diag(&[1.0, -1.0, 1.0, -1.0]));
    }
}

