//! Restricted path integral for monitored position on a 1D grid.
//!
//! A slice kernel is the lattice amplitude for one step between grid points,
//! multiplied entrywise by the midpoint potential phase and the midpoint
//! corridor weight:
//!
//! ```text
//! K_a(q'', q') = K0(q'', q') · exp(-(i/hbar) V(qm) dt - kappa dt (qm - a)^2),  qm = (q'' + q') / 2
//! ```
//!
//! `K0` is the free lattice amplitude `exp(-i T dt / hbar)` with `T` the
//! central-difference kinetic operator and hard walls at `±q_max`
//! ([`KineticKernel::Lattice`]), or the continuum Fresnel kernel
//! `sqrt(m / 2 pi i hbar dt) dq exp(i m (q'' - q')^2 / 2 hbar dt)`
//! ([`KineticKernel::Continuum`]). The Fresnel kernel is not a contraction on
//! a fixed grid unless `m dq^2 / hbar dt` is tiny; products of many slices
//! blow up.
//!
//! All matrices act on grid samples of the wavefunction (operator form), so
//! the empty product is the identity. [`Propagator::kernel`] gives the
//! kernel form, `matrix / dq`.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::hilbert::{c, matrix_exponential, CMatrix, CVector, Operator, PhysicalConstants, StateVector, C64, I};
use crate::monitoring::{effective_hamiltonian, MonitoringChannel, ReadoutCurve};

/// Wavepackets must keep this many widths away from the walls.
pub const SUPPORT_WIDTHS: f64 = 5.0;

#[derive(Clone)]
pub enum Potential {
    Free,
    /// `m omega^2 q^2 / 2`.
    Harmonic { omega: f64 },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Free => write!(f, "Free"),
            Self::Harmonic { omega } => write!(f, "Harmonic {{ omega: {omega} }}"),
            Self::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum KineticKernel {
    #[default]
    Lattice,
    Continuum,
}

#[derive(Clone, Debug)]
pub struct LatticeSpec {
    n_q: usize,
    q_max: f64,
    mass: f64,
    potential: Potential,
    kinetic: KineticKernel,
}

impl LatticeSpec {
    pub fn new(n_q: usize, q_max: f64, mass: f64, potential: Potential) -> Result<Self> {
        if n_q < 3 || n_q % 2 == 0 {
            return Err(Error::invalid(format!("n_q must be odd and >= 3, got {n_q}")));
        }
        if !(q_max.is_finite() && q_max > 0.0) {
            return Err(Error::invalid(format!("q_max must be > 0, got {q_max}")));
        }
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::invalid(format!("mass must be > 0, got {mass}")));
        }
        if let Potential::Harmonic { omega } = potential {
            if !omega.is_finite() {
                return Err(Error::invalid("omega must be finite"));
            }
        }
        Ok(Self { n_q, q_max, mass, potential, kinetic: KineticKernel::Lattice })
    }

    pub fn with_kinetic(mut self, kinetic: KineticKernel) -> Self {
        self.kinetic = kinetic;
        self
    }

    pub fn n_q(&self) -> usize {
        self.n_q
    }

    pub fn q_max(&self) -> f64 {
        self.q_max
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn kinetic(&self) -> KineticKernel {
        self.kinetic
    }

    pub fn dq(&self) -> f64 {
        2.0 * self.q_max / (self.n_q - 1) as f64
    }

    pub fn grid(&self) -> Vec<f64> {
        let dq = self.dq();
        (0..self.n_q).map(|i| -self.q_max + i as f64 * dq).collect()
    }

    pub fn potential(&self, q: f64) -> f64 {
        match &self.potential {
            Potential::Free => 0.0,
            Potential::Harmonic { omega } => 0.5 * self.mass * omega * omega * q * q,
            Potential::Custom(v) => v(q),
        }
    }
}

/// `-(hbar^2 / 2m)` times the central second difference, hard walls.
pub fn kinetic_operator(spec: &LatticeSpec, consts: PhysicalConstants) -> Operator {
    let n = spec.n_q;
    let s = consts.hbar().powi(2) / (2.0 * spec.mass * spec.dq().powi(2));
    let mut t = CMatrix::zeros(n, n);
    for i in 0..n {
        t[(i, i)] = c(2.0 * s);
        if i + 1 < n {
            t[(i, i + 1)] = c(-s);
            t[(i + 1, i)] = c(-s);
        }
    }
    Operator::hermitian(t).expect("real symmetric")
}

pub fn position_operator(spec: &LatticeSpec) -> Operator {
    Operator::from_real_diagonal(&spec.grid()).expect("finite grid")
}

/// Kinetic operator plus `diag(V(q_i))`.
pub fn grid_hamiltonian(spec: &LatticeSpec, consts: PhysicalConstants) -> Result<Operator> {
    let v: Vec<f64> = spec.grid().iter().map(|&q| spec.potential(q)).collect();
    let t = kinetic_operator(spec, consts);
    Operator::hermitian(t.matrix() + Operator::from_real_diagonal(&v)?.matrix())
}

/// Normalized Gaussian `exp(-(q - q0)^2 / 4 sigma^2 + i p0 q / hbar)` sampled
/// on the grid. Rejected unless it sits [`SUPPORT_WIDTHS`] widths inside the
/// walls.
pub fn gaussian_packet(spec: &LatticeSpec, q0: f64, p0: f64, sigma: f64, consts: PhysicalConstants) -> Result<StateVector> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::invalid(format!("sigma must be > 0, got {sigma}")));
    }
    if q0.abs() + SUPPORT_WIDTHS * sigma > spec.q_max {
        return Err(Error::invalid(format!(
            "packet at {q0} with width {sigma} reaches within {SUPPORT_WIDTHS} widths of the wall at {}",
            spec.q_max
        )));
    }
    let grid = spec.grid();
    let amps = grid
        .iter()
        .map(|&q| C64::new(-(q - q0).powi(2) / (4.0 * sigma * sigma), p0 * q / consts.hbar()).exp());
    StateVector::normalized(CVector::from_iterator(spec.n_q, amps))
}

/// Squared norm carried by the outer `width` of the grid on either side.
pub fn boundary_weight(spec: &LatticeSpec, psi: &CVector, width: f64) -> f64 {
    spec.grid()
        .iter()
        .zip(psi.iter())
        .filter(|(q, _)| q.abs() > spec.q_max - width)
        .map(|(_, z)| z.norm_sqr())
        .sum()
}

fn check_step(kappa: f64, dt: f64) -> Result<()> {
    if !(kappa.is_finite() && kappa >= 0.0) {
        return Err(Error::invalid(format!("kappa must be >= 0, got {kappa}")));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid(format!("dt must be > 0, got {dt}")));
    }
    Ok(())
}

fn free_kernel(spec: &LatticeSpec, dt: f64, consts: PhysicalConstants) -> Result<CMatrix> {
    let hbar = consts.hbar();
    match spec.kinetic {
        KineticKernel::Lattice => matrix_exponential(&(kinetic_operator(spec, consts).into_matrix() * (-I * (dt / hbar)))),
        KineticKernel::Continuum => {
            let q = spec.grid();
            // sqrt(1 / i) = exp(-i pi / 4)
            let pref = C64::from_polar((spec.mass / (2.0 * std::f64::consts::PI * hbar * dt)).sqrt() * spec.dq(), -std::f64::consts::FRAC_PI_4);
            let beta = spec.mass / (2.0 * hbar * dt);
            Ok(CMatrix::from_fn(spec.n_q, spec.n_q, |i, j| pref * C64::from_polar(1.0, beta * (q[i] - q[j]).powi(2))))
        }
    }
}

fn dress(free: &CMatrix, spec: &LatticeSpec, q: &[f64], a: f64, kappa: f64, dt: f64, hbar: f64) -> CMatrix {
    CMatrix::from_fn(spec.n_q, spec.n_q, |i, j| {
        let qm = 0.5 * (q[i] + q[j]);
        free[(i, j)] * C64::new(-kappa * dt * (qm - a).powi(2), -spec.potential(qm) * dt / hbar).exp()
    })
}

/// One-slice kernel in operator form for readout `a`.
pub fn short_time_kernel(spec: &LatticeSpec, a: f64, kappa: f64, dt: f64, consts: PhysicalConstants) -> Result<CMatrix> {
    check_step(kappa, dt)?;
    if !a.is_finite() {
        return Err(Error::invalid("readout value must be finite"));
    }
    let free = free_kernel(spec, dt, consts)?;
    Ok(dress(&free, spec, &spec.grid(), a, kappa, dt, consts.hbar()))
}

/// A grid propagator in operator form.
#[derive(Clone, Debug)]
pub struct Propagator {
    matrix: CMatrix,
    dq: f64,
}

impl Propagator {
    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    /// `U(q'', q')` as a kernel: `matrix / dq`.
    pub fn kernel(&self) -> CMatrix {
        &self.matrix / c(self.dq)
    }

    pub fn apply(&self, psi: &CVector) -> Result<CVector> {
        crate::error::ensure_dim(self.matrix.ncols(), psi.len())?;
        Ok(&self.matrix * psi)
    }
}

/// Ordered product over slices, reusing the factor for repeated readout values.
fn ordered_product(spec: &LatticeSpec, readout: &ReadoutCurve, mut factor: impl FnMut(f64) -> Result<CMatrix>) -> Result<Propagator> {
    let n = spec.n_q;
    let mut cache: HashMap<u64, CMatrix> = HashMap::new();
    let mut u = CMatrix::identity(n, n);
    for &a in readout.values() {
        let key = a.to_bits();
        if !cache.contains_key(&key) {
            cache.insert(key, factor(a)?);
        }
        u = &cache[&key] * u;
    }
    Ok(Propagator { matrix: u, dq: spec.dq() })
}

/// Lattice path sum `K_{a_{n-1}} ... K_{a_0}` along the readout.
pub fn rpi_propagator(spec: &LatticeSpec, readout: &ReadoutCurve, kappa: f64, consts: PhysicalConstants) -> Result<Propagator> {
    let dt = readout.dt();
    check_step(kappa, dt)?;
    let free = free_kernel(spec, dt, consts)?;
    let q = spec.grid();
    ordered_product(spec, readout, |a| Ok(dress(&free, spec, &q, a, kappa, dt, consts.hbar())))
}

/// Product of `exp(-i H_eff(a_k) dt / hbar)` with `H_eff` built from
/// [`grid_hamiltonian`] and the position operator.
pub fn effective_propagator(spec: &LatticeSpec, readout: &ReadoutCurve, kappa: f64, consts: PhysicalConstants) -> Result<Propagator> {
    let dt = readout.dt();
    check_step(kappa, dt)?;
    let h = grid_hamiltonian(spec, consts)?;
    let ch = MonitoringChannel::minimal(position_operator(spec), kappa)?;
    ordered_product(spec, readout, |a| {
        let heff = effective_hamiltonian(&ch, a, &h, consts)?;
        matrix_exponential(&(heff * (-I * (dt / consts.hbar()))))
    })
}

/// `max |rpi - effective|` at final time `t` for each `dt`, with the readout
/// sampled at slice midpoints.
pub fn convergence_study(
    spec: &LatticeSpec,
    readout: impl Fn(f64) -> f64,
    t: f64,
    dts: &[f64],
    kappa: f64,
    consts: PhysicalConstants,
) -> Result<Vec<(f64, f64)>> {
    dts.iter()
        .map(|&dt| {
            let n = (t / dt).round() as usize;
            if n == 0 || (n as f64 * dt - t).abs() > 1e-9 * t {
                return Err(Error::invalid(format!("dt = {dt} does not divide t = {t}")));
            }
            let r = ReadoutCurve::from_fn(0.0, dt, n, &readout)?;
            let rpi = rpi_propagator(spec, &r, kappa, consts)?;
            let eff = effective_propagator(spec, &r, kappa, consts)?;
            Ok((dt, crate::hilbert::max_abs(&(rpi.matrix() - eff.matrix()))))
        })
        .collect()
}

/// Piecewise-constant readout stepping from 0.5 to -0.5 over five blocks of
/// length 0.2; grids with `dt = 0.2 / n` resolve it exactly.
pub fn staircase_readout(t: f64) -> f64 {
    const LEVELS: [f64; 5] = [0.5, 0.25, 0.0, -0.25, -0.5];
    LEVELS[((t / 0.2 + 1e-9).floor().max(0.0) as usize).min(4)]
}
