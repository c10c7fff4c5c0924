//! Finite-dimensional Hilbert-space primitives.
//!
//! Everything is dense and complex. Tolerances use the max-absolute-entry
//! norm ([`max_abs`]) so that every threshold in the crate is reproducible.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{ensure_dim, Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Relative tolerance of the hermiticity flag on [`Operator`].
pub const HERMITIAN_TOL: f64 = 1e-12;

pub(crate) const I: C64 = C64 { re: 0.0, im: 1.0 };

pub(crate) fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Largest absolute entry of a matrix.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// `max |m_ij - conj(m_ji)|`, relative to `max |m_ij|` (0 for the zero matrix).
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    let scale = max_abs(m);
    if scale == 0.0 {
        return 0.0;
    }
    max_abs(&(m - m.adjoint())) / scale
}

pub(crate) fn all_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub(crate) fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * c(0.5)
}

/// Physical constants. Only the reduced Planck constant enters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalConstants {
    hbar: f64,
}

impl PhysicalConstants {
    pub fn new(hbar: f64) -> Result<Self> {
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(Error::invalid(format!("hbar must be > 0, got {hbar}")));
        }
        Ok(Self { hbar })
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }
}

impl Default for PhysicalConstants {
    /// Natural units, `hbar = 1`.
    fn default() -> Self {
        Self { hbar: 1.0 }
    }
}

/// Dense square operator with a declared hermiticity flag.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    matrix: CMatrix,
    hermitian: bool,
}

/// Eigen-decomposition of a Hermitian operator, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct Eigensystem {
    pub values: Vec<f64>,
    /// Column `k` is the eigenvector of `values[k]`.
    pub vectors: CMatrix,
}

impl Operator {
    /// A general (not necessarily Hermitian) operator.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() == 0 || !matrix.is_square() {
            return Err(Error::invalid(format!(
                "operator must be a non-empty square matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if !all_finite(&matrix) {
            return Err(Error::invalid("operator has non-finite entries"));
        }
        Ok(Self { matrix, hermitian: false })
    }

    /// An operator flagged Hermitian; the flag is checked against the entries.
    pub fn hermitian(matrix: CMatrix) -> Result<Self> {
        let mut op = Self::new(matrix)?;
        let defect = hermiticity_defect(&op.matrix);
        if defect > HERMITIAN_TOL {
            return Err(Error::invalid(format!(
                "operator flagged hermitian has relative defect {defect:.3e}"
            )));
        }
        op.hermitian = true;
        Ok(op)
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Result<Self> {
        let d = DVector::from_iterator(diag.len(), diag.iter().map(|&x| c(x)));
        Self::hermitian(CMatrix::from_diagonal(&d))
    }

    pub fn zeros(dim: usize) -> Self {
        Self { matrix: CMatrix::zeros(dim, dim), hermitian: true }
    }

    pub fn identity(dim: usize) -> Self {
        Self { matrix: CMatrix::identity(dim, dim), hermitian: true }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.iter().all(|z| *z == C64::new(0.0, 0.0))
    }

    /// Real multiple; keeps the hermiticity flag.
    pub fn scaled(&self, s: f64) -> Self {
        Self { matrix: &self.matrix * c(s), hermitian: self.hermitian }
    }

    pub fn adjoint(&self) -> Self {
        Self { matrix: self.matrix.adjoint(), hermitian: self.hermitian }
    }

    pub fn eigh(&self) -> Result<Eigensystem> {
        if !self.hermitian {
            return Err(Error::invalid("eigh requires an operator flagged hermitian"));
        }
        Ok(eigh_matrix(&self.matrix))
    }
}

pub(crate) fn eigh_matrix(m: &CMatrix) -> Eigensystem {
    let eig = hermitize(m).symmetric_eigen();
    let d = m.nrows();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMatrix::from_fn(d, d, |i, j| eig.eigenvectors[(i, order[j])]);
    Eigensystem { values, vectors }
}

pub(crate) fn min_eigenvalue(m: &CMatrix) -> f64 {
    hermitize(m)
        .symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |acc, &x| acc.min(x))
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Operator(dim={}, hermitian={})", self.dim(), self.hermitian)
    }
}

pub(crate) fn comm(x: &CMatrix, y: &CMatrix) -> CMatrix {
    x * y - y * x
}

pub(crate) fn anticomm(x: &CMatrix, y: &CMatrix) -> CMatrix {
    x * y + y * x
}

/// `[X, Y] = XY - YX`.
pub fn commutator(x: &Operator, y: &Operator) -> Result<Operator> {
    ensure_dim(x.dim(), y.dim())?;
    Operator::new(comm(&x.matrix, &y.matrix))
}

/// `{X, Y} = XY + YX`.
pub fn anticommutator(x: &Operator, y: &Operator) -> Result<Operator> {
    ensure_dim(x.dim(), y.dim())?;
    Operator::new(anticomm(&x.matrix, &y.matrix))
}

/// `exp(M)` for a square complex matrix.
pub fn matrix_exponential(m: &CMatrix) -> Result<CMatrix> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::invalid("matrix exponential needs a non-empty square matrix"));
    }
    if !all_finite(m) {
        return Err(Error::invalid("matrix exponential of non-finite entries"));
    }
    Ok(m.clone().exp())
}

/// Single-qubit observables.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QubitObservable {
    Sx,
    Sy,
    Sz,
    Id,
}

impl FromStr for QubitObservable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sx" => Ok(Self::Sx),
            "sy" => Ok(Self::Sy),
            "sz" => Ok(Self::Sz),
            "id" => Ok(Self::Id),
            other => Err(Error::invalid(format!(
                "unknown qubit observable '{other}' (expected sx, sy, sz or id)"
            ))),
        }
    }
}

impl QubitObservable {
    pub fn operator(self) -> Operator {
        let z = C64::new(0.0, 0.0);
        let o = c(1.0);
        let m = match self {
            Self::Sx => CMatrix::from_row_slice(2, 2, &[z, o, o, z]),
            Self::Sy => CMatrix::from_row_slice(2, 2, &[z, -I, I, z]),
            Self::Sz => CMatrix::from_row_slice(2, 2, &[o, z, z, -o]),
            Self::Id => CMatrix::identity(2, 2),
        };
        Operator { matrix: m, hermitian: true }
    }
}

/// Pauli matrix or identity by name (`sx`, `sy`, `sz`, `id`).
pub fn build_qubit(name: &str) -> Result<Operator> {
    Ok(name.parse::<QubitObservable>()?.operator())
}

/// Truncated harmonic oscillator in the Fock basis.
#[derive(Clone, Debug)]
pub struct Oscillator {
    pub q: Operator,
    pub p: Operator,
    pub h: Operator,
    pub mass: f64,
    pub omega: f64,
}

/// Position, momentum and `p^2/2m + m w^2 q^2/2`, all built from the
/// truncated ladder operator so `[q, p]` is `i hbar` except in the top level.
pub fn build_oscillator(
    d: usize,
    mass: f64,
    omega: f64,
    consts: PhysicalConstants,
) -> Result<Oscillator> {
    if d < 2 {
        return Err(Error::invalid(format!("oscillator dimension must be >= 2, got {d}")));
    }
    if !(mass.is_finite() && mass > 0.0) || !(omega.is_finite() && omega > 0.0) {
        return Err(Error::invalid("oscillator mass and frequency must be > 0"));
    }
    let hbar = consts.hbar();
    let mut a = CMatrix::zeros(d, d);
    for n in 1..d {
        a[(n - 1, n)] = c((n as f64).sqrt());
    }
    let ad = a.adjoint();
    let q = (&a + &ad) * c((hbar / (2.0 * mass * omega)).sqrt());
    let p = (&ad - &a) * (I * (hbar * mass * omega / 2.0).sqrt());
    let h = &p * &p * c(0.5 / mass) + &q * &q * c(0.5 * mass * omega * omega);
    Ok(Oscillator {
        q: Operator::hermitian(q)?,
        p: Operator::hermitian(p)?,
        h: Operator::hermitian(hermitize(&h))?,
        mass,
        omega,
    })
}

/// Possibly unnormalized state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amplitudes: CVector,
}

impl StateVector {
    pub fn new(amplitudes: CVector) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::invalid("state vector must be non-empty"));
        }
        if !amplitudes.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::invalid("state vector has non-finite amplitudes"));
        }
        Ok(Self { amplitudes })
    }

    pub fn from_slice(amplitudes: &[C64]) -> Result<Self> {
        Self::new(CVector::from_column_slice(amplitudes))
    }

    /// Same direction, unit norm.
    pub fn normalized(amplitudes: CVector) -> Result<Self> {
        let n = amplitudes.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::invalid("cannot normalize a zero or non-finite vector"));
        }
        Self::new(amplitudes / c(n))
    }

    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(Error::invalid(format!("basis index {k} out of range for dim {dim}")));
        }
        let mut v = CVector::zeros(dim);
        v[k] = c(1.0);
        Self::new(v)
    }

    /// Truncated coherent state `|alpha>`, renormalized after truncation.
    pub fn coherent(dim: usize, alpha: C64) -> Result<Self> {
        let mut v = CVector::zeros(dim);
        let mut coef = c(1.0);
        for n in 0..dim {
            if n > 0 {
                coef = coef * alpha / c((n as f64).sqrt());
            }
            v[n] = coef;
        }
        Self::normalized(v)
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> CVector {
        self.amplitudes
    }

    pub fn norm2(&self) -> f64 {
        self.amplitudes.norm_squared()
    }

    /// `|psi><psi|`, unnormalized.
    pub fn projector(&self) -> CMatrix {
        &self.amplitudes * self.amplitudes.adjoint()
    }

    /// `|<self|other>|^2 / (|self|^2 |other|^2)`.
    pub fn fidelity(&self, other: &StateVector) -> Result<f64> {
        ensure_dim(self.dim(), other.dim())?;
        let overlap = self.amplitudes.dotc(&other.amplitudes).norm_sqr();
        Ok(overlap / (self.norm2() * other.norm2()))
    }
}

/// Hermitian positive semidefinite matrix with `0 < tr <= 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() == 0 || !matrix.is_square() {
            return Err(Error::invalid("density matrix must be non-empty and square"));
        }
        if !all_finite(&matrix) {
            return Err(Error::invalid("density matrix has non-finite entries"));
        }
        let defect = hermiticity_defect(&matrix);
        if defect > HERMITIAN_TOL {
            return Err(Error::invalid(format!("density matrix not hermitian (defect {defect:.3e})")));
        }
        let tr = matrix.trace().re;
        if !(tr > 0.0 && tr <= 1.0 + 1e-10) {
            return Err(Error::invalid(format!("density matrix trace {tr} outside (0, 1]")));
        }
        let lmin = min_eigenvalue(&matrix);
        if lmin < -1e-10 * tr {
            return Err(Error::invalid(format!("density matrix has eigenvalue {lmin:.3e} < 0")));
        }
        Ok(Self { matrix })
    }

    /// No invariant checks; for integrator output that is checked separately.
    pub(crate) fn from_matrix_unchecked(matrix: CMatrix) -> Self {
        Self { matrix }
    }

    /// `|psi><psi| / <psi|psi>`.
    pub fn from_pure(psi: &StateVector) -> Result<Self> {
        let n2 = psi.norm2();
        if n2 == 0.0 {
            return Err(Error::invalid("zero state has no density matrix"));
        }
        Self::new(psi.projector() / c(n2))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self { matrix: CMatrix::identity(dim, dim) / c(dim as f64) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.matrix)
    }

    /// `Re tr(rho X)`.
    pub fn expectation(&self, x: &Operator) -> Result<f64> {
        ensure_dim(self.dim(), x.dim())?;
        Ok((&self.matrix * x.matrix()).trace().re)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn herm_random(d: usize, seed: u64) -> CMatrix {
        let mut s = seed.wrapping_mul(0x9E3779B97F4A7C15) | 1;
        let mut next = || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let m = CMatrix::from_fn(d, d, |_, _| C64::new(next(), next()));
        hermitize(&m)
    }

    #[test]
    fn self_commutator_vanishes() {
        let x = Operator::hermitian(herm_random(4, 3)).unwrap();
        assert_eq!(max_abs(commutator(&x, &x).unwrap().matrix()), 0.0);
    }

    #[test]
    fn pauli_commutator() {
        let sx = build_qubit("sx").unwrap();
        let sy = build_qubit("sy").unwrap();
        let sz = build_qubit("sz").unwrap();
        let lhs = commutator(&sx, &sy).unwrap();
        let rhs = sz.matrix() * C64::new(0.0, 2.0);
        assert_eq!(lhs.matrix(), &rhs);
    }

    #[test]
    fn pauli_anticommutators() {
        let sx = build_qubit("sx").unwrap();
        let sz = build_qubit("sz").unwrap();
        let zero = Operator::zeros(2);
        assert_eq!(max_abs(anticommutator(&sx, &zero).unwrap().matrix()), 0.0);
        assert_eq!(anticommutator(&sx, &sx).unwrap().matrix(), &(CMatrix::identity(2, 2) * c(2.0)));
        assert_eq!(max_abs(anticommutator(&sx, &sz).unwrap().matrix()), 0.0);
    }

    #[test]
    fn commutator_dimension_mismatch() {
        let err = commutator(&Operator::identity(2), &Operator::identity(3)).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch { expected: 2, found: 3 });
        assert!(anticommutator(&Operator::identity(2), &Operator::identity(3)).is_err());
    }

    #[test]
    fn truncated_canonical_commutator() {
        for (d, hbar) in [(2, 1.0), (5, 0.7), (12, 2.0)] {
            let osc = build_oscillator(d, 1.3, 0.8, PhysicalConstants::new(hbar).unwrap()).unwrap();
            let qp = commutator(&osc.q, &osc.p).unwrap();
            for i in 0..d {
                for j in 0..d {
                    let expected = if i != j {
                        C64::new(0.0, 0.0)
                    } else if i == d - 1 {
                        C64::new(0.0, hbar * (1.0 - d as f64))
                    } else {
                        C64::new(0.0, hbar)
                    };
                    assert_abs_diff_eq!((qp.matrix()[(i, j)] - expected).norm(), 0.0, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn exponential_of_zero_is_identity() {
        let e = matrix_exponential(&CMatrix::zeros(3, 3)).unwrap();
        assert_eq!(e, CMatrix::identity(3, 3));
    }

    #[test]
    fn exponential_diagonal_phase() {
        let theta = 0.83;
        let sz = build_qubit("sz").unwrap();
        let e = matrix_exponential(&(sz.matrix() * C64::new(0.0, theta))).unwrap();
        assert_abs_diff_eq!((e[(0, 0)] - C64::from_polar(1.0, theta)).norm(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!((e[(1, 1)] - C64::from_polar(1.0, -theta)).norm(), 0.0, epsilon = 1e-14);
        assert_eq!(e[(0, 1)].norm(), 0.0);
    }

    #[test]
    fn exponential_rejects_non_finite() {
        let mut m = CMatrix::zeros(2, 2);
        m[(0, 1)] = C64::new(f64::NAN, 0.0);
        assert!(matrix_exponential(&m).is_err());
    }

    #[test]
    fn exponential_matches_eigen_route_on_large_norms() {
        // exp(i t H) via the spectral decomposition, ||tH|| up to 10
        for seed in 0..20 {
            let h = herm_random(5, seed);
            let t = 10.0 / max_abs(&h).max(1e-3) / 5.0;
            let eig = eigh_matrix(&h);
            let phases = CVector::from_iterator(5, eig.values.iter().map(|&l| C64::from_polar(1.0, t * l)));
            let oracle = &eig.vectors * CMatrix::from_diagonal(&phases) * eig.vectors.adjoint();
            let e = matrix_exponential(&(&h * C64::new(0.0, t))).unwrap();
            assert!(max_abs(&(e - oracle)) < 1e-12);
        }
    }

    #[test]
    fn qubit_builders() {
        let sz = build_qubit("sz").unwrap();
        assert_eq!(sz.matrix()[(0, 0)], c(1.0));
        assert_eq!(sz.matrix()[(1, 1)], c(-1.0));
        let sx = build_qubit("SX").unwrap();
        assert_eq!(sx.matrix() * sx.matrix(), CMatrix::identity(2, 2));
        let ev = build_qubit("sy").unwrap().eigh().unwrap().values;
        assert_abs_diff_eq!(ev[0], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(ev[1], 1.0, epsilon = 1e-14);
        assert!(build_qubit("sw").is_err());
        assert!(build_qubit("id").unwrap().is_hermitian());
    }

    #[test]
    fn two_level_oscillator_is_scaled_pauli() {
        let (m, w, hbar) = (1.7, 0.6, 1.3);
        let osc = build_oscillator(2, m, w, PhysicalConstants::new(hbar).unwrap()).unwrap();
        let sx = build_qubit("sx").unwrap().scaled((hbar / (2.0 * m * w)).sqrt());
        let sy = build_qubit("sy").unwrap().scaled((hbar * m * w / 2.0).sqrt());
        assert!(max_abs(&(osc.q.matrix() - sx.matrix())) < 1e-15);
        assert!(max_abs(&(osc.p.matrix() - sy.matrix())) < 1e-15);
    }

    #[test]
    fn oscillator_ground_energy() {
        let (w, hbar) = (1.9, 0.8);
        let osc = build_oscillator(40, 0.5, w, PhysicalConstants::new(hbar).unwrap()).unwrap();
        assert_abs_diff_eq!(osc.h.matrix()[(0, 0)].re, hbar * w / 2.0, epsilon = 1e-12);
        assert!(osc.q.is_hermitian() && osc.p.is_hermitian() && osc.h.is_hermitian());
        assert!(build_oscillator(1, 1.0, 1.0, PhysicalConstants::default()).is_err());
    }

    #[test]
    fn hermitian_flag_is_checked() {
        let mut m = CMatrix::identity(2, 2);
        m[(0, 1)] = c(1.0);
        assert!(Operator::hermitian(m.clone()).is_err());
        assert!(!Operator::new(m).unwrap().is_hermitian());
    }

    #[test]
    fn density_matrix_invariants() {
        let psi = StateVector::coherent(10, C64::new(0.4, -0.2)).unwrap();
        let rho = DensityMatrix::from_pure(&psi).unwrap();
        assert_abs_diff_eq!(rho.trace(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(rho.purity(), 1.0, epsilon = 1e-13);
        assert!(DensityMatrix::new(CMatrix::identity(2, 2)).is_err()); // trace 2
        let neg = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.2), c(-0.2)]));
        assert!(DensityMatrix::new(neg).is_err());
        assert!(PhysicalConstants::new(0.0).is_err());
    }

    proptest! {
        #[test]
        fn hermitian_spectrum_is_real(seed in 0u64..10_000, d in 1usize..7) {
            let h = herm_random(d, seed);
            let eig = h.clone().eigenvalues_complex_check();
            prop_assert!(eig < 1e-10);
        }

        #[test]
        fn exp_of_i_hermitian_is_unitary(seed in 0u64..10_000, d in 1usize..7, t in -3.0f64..3.0) {
            let h = herm_random(d, seed);
            let u = matrix_exponential(&(h * C64::new(0.0, t))).unwrap();
            let defect = max_abs(&(u.adjoint() * &u - CMatrix::identity(d, d)));
            prop_assert!(defect <= 1e-11);
        }

        #[test]
        fn exp_inverse_property(seed in 0u64..10_000, d in 1usize..7) {
            let mut s = seed.wrapping_add(7);
            let mut next = || { s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5 };
            let a = CMatrix::from_fn(d, d, |_, _| C64::new(next(), next()));
            let a = &a / c(a.norm().max(1.0)); // ||A|| <= 1
            let prod = matrix_exponential(&a).unwrap() * matrix_exponential(&(-a)).unwrap();
            prop_assert!(max_abs(&(prod - CMatrix::identity(d, d))) <= 1e-12);
        }
    }

    trait SpectrumCheck {
        fn eigenvalues_complex_check(self) -> f64;
    }

    impl SpectrumCheck for CMatrix {
        // Largest imaginary part of the eigenvalues, via the general Schur route.
        fn eigenvalues_complex_check(self) -> f64 {
            let (_, t) = self.schur().unpack();
            t.diagonal().iter().fold(0.0, |a, z| a.max(z.im.abs()))
        }
    }
}
