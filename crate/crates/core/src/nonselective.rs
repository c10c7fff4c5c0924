//! Non-selective evolution: master equations and readout averaging.
//!
//! Three right-hand sides are provided for a list of monitoring channels,
//! entering additively:
//!
//! * simple: `-(i/hbar)[H, rho] - (kappa/2)[A, [A, rho]]`;
//! * non-minimal: adds `C` to `H`, `-(lambda^2/8 kappa hbar^2)[B, [B, rho]]`
//!   and `-(i lambda/2 hbar)[B, {A, rho}]`;
//! * canonical Lindblad form with `l = A - i (lambda / 2 kappa hbar) B`.
//!
//! The last two are the same generator written two ways.

use rayon::prelude::*;

use crate::error::{ensure_dim, Error, Result};
use crate::hilbert::{
    anticomm, build_oscillator, c, comm, hermitize, min_eigenvalue, CMatrix, DensityMatrix,
    Operator, PhysicalConstants, I,
};
use crate::io::fmt_f64;
use crate::monitoring::MonitoringChannel;
use crate::selective::{trajectory_rng, ConditionedTrajectory, SliceStepper};

/// Trace drift or negative eigenvalue beyond this aborts [`integrate`].
pub const INTEGRATION_FAILURE_TOL: f64 = 1e-6;
/// Allowed population of the two highest Fock levels in guarded runs.
pub const TRUNCATION_LIMIT: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MasterForm {
    Simple,
    Nonminimal,
    LindbladCanonical,
}

impl std::str::FromStr for MasterForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "simple" => Ok(Self::Simple),
            "nonminimal" => Ok(Self::Nonminimal),
            "lindblad_canonical" | "lindblad" => Ok(Self::LindbladCanonical),
            other => Err(Error::invalid(format!("unknown master equation form '{other}'"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MasterEquationSpec {
    h: Operator,
    channels: Vec<MonitoringChannel>,
    form: MasterForm,
    truncation_guard: bool,
}

fn validate(h: &Operator, channels: &[MonitoringChannel], form: MasterForm) -> Result<()> {
    if !h.is_hermitian() {
        return Err(Error::invalid("Hamiltonian must be flagged hermitian"));
    }
    for (n, ch) in channels.iter().enumerate() {
        ensure_dim(h.dim(), ch.dim())?;
        match form {
            MasterForm::Simple if !ch.is_minimal() => {
                return Err(Error::invalid(format!(
                    "channel {n}: the simple master equation takes minimal channels (lambda = 0, no C)"
                )))
            }
            MasterForm::Nonminimal if ch.kappa() == 0.0 && ch.lambda() != 0.0 => {
                return Err(Error::invalid(format!("channel {n}: lambda != 0 needs kappa > 0")))
            }
            MasterForm::LindbladCanonical if !(ch.kappa() > 0.0) => {
                return Err(Error::invalid(format!("channel {n}: canonical Lindblad form needs kappa > 0")))
            }
            _ => {}
        }
    }
    Ok(())
}

fn check_rho(rho: &CMatrix, h: &Operator) -> Result<()> {
    if !rho.is_square() {
        return Err(Error::invalid("rho must be square"));
    }
    ensure_dim(h.dim(), rho.nrows())
}

impl MasterEquationSpec {
    pub fn new(h: Operator, channels: Vec<MonitoringChannel>, form: MasterForm) -> Result<Self> {
        validate(&h, &channels, form)?;
        Ok(Self { h, channels, form, truncation_guard: false })
    }

    /// Abort integration when the two highest basis levels get populated.
    pub fn with_truncation_guard(mut self) -> Self {
        self.truncation_guard = true;
        self
    }

    pub fn h(&self) -> &Operator {
        &self.h
    }

    pub fn channels(&self) -> &[MonitoringChannel] {
        &self.channels
    }

    pub fn form(&self) -> MasterForm {
        self.form
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    pub fn rhs(&self, rho: &CMatrix, consts: PhysicalConstants) -> CMatrix {
        match self.form {
            MasterForm::Simple => simple(rho, &self.h, &self.channels, consts),
            MasterForm::Nonminimal => nonminimal(rho, &self.h, &self.channels, consts),
            MasterForm::LindbladCanonical => canonical(rho, &self.h, &self.channels, consts),
        }
    }
}

fn simple(rho: &CMatrix, h: &Operator, channels: &[MonitoringChannel], consts: PhysicalConstants) -> CMatrix {
    let mut out = comm(h.matrix(), rho) * (-I / consts.hbar());
    for ch in channels {
        let a = ch.a().matrix();
        out -= comm(a, &comm(a, rho)) * c(ch.kappa() / 2.0);
    }
    out
}

fn nonminimal(rho: &CMatrix, h: &Operator, channels: &[MonitoringChannel], consts: PhysicalConstants) -> CMatrix {
    let hbar = consts.hbar();
    let mut out = comm(h.matrix(), rho) * (-I / hbar);
    for ch in channels {
        let (kappa, lambda) = (ch.kappa(), ch.lambda());
        let a = ch.a().matrix();
        if let Some(cop) = ch.c() {
            out -= comm(cop.matrix(), rho) * (I / hbar);
        }
        out -= comm(a, &comm(a, rho)) * c(kappa / 2.0);
        if let (Some(b), true) = (ch.b(), lambda != 0.0) {
            let b = b.matrix();
            out -= comm(b, &comm(b, rho)) * c(lambda * lambda / (8.0 * kappa * hbar * hbar));
            out -= comm(b, &anticomm(a, rho)) * (I * (lambda / (2.0 * hbar)));
        }
    }
    out
}

/// `l = A - i (lambda / 2 kappa hbar) B`.
pub fn lindblad_operator(ch: &MonitoringChannel, consts: PhysicalConstants) -> CMatrix {
    let mu = ch.lambda() / (2.0 * ch.kappa() * consts.hbar());
    let mut l = ch.a().matrix().clone();
    if let (Some(b), true) = (ch.b(), mu != 0.0) {
        l -= b.matrix() * (I * mu);
    }
    l
}

fn canonical(rho: &CMatrix, h: &Operator, channels: &[MonitoringChannel], consts: PhysicalConstants) -> CMatrix {
    let hbar = consts.hbar();
    let mut hc = h.matrix().clone();
    let mut dissipator = CMatrix::zeros(rho.nrows(), rho.ncols());
    for ch in channels {
        let kappa = ch.kappa();
        let l = lindblad_operator(ch, consts);
        let ld = l.adjoint();
        hc += ch.c_matrix();
        hc -= (&ld * &ld - &l * &l) * (I * (kappa * hbar / 4.0));
        let ldl = &ld * &l;
        let sandwich = &l * rho * &ld;
        dissipator -= (&ldl * rho - sandwich * c(2.0) + rho * &ldl) * c(kappa / 2.0);
    }
    comm(&hc, rho) * (-I / hbar) + dissipator
}

/// `-(i/hbar)[H, rho] - sum (kappa/2)[A, [A, rho]]` for minimal channels.
pub fn rhs_simple(rho: &CMatrix, h: &Operator, channels: &[MonitoringChannel], consts: PhysicalConstants) -> Result<CMatrix> {
    check_rho(rho, h)?;
    validate(h, channels, MasterForm::Simple)?;
    Ok(simple(rho, h, channels, consts))
}

/// Non-minimal master equation, summed over channels.
pub fn rhs_nonminimal(rho: &CMatrix, h: &Operator, channels: &[MonitoringChannel], consts: PhysicalConstants) -> Result<CMatrix> {
    check_rho(rho, h)?;
    validate(h, channels, MasterForm::Nonminimal)?;
    Ok(nonminimal(rho, h, channels, consts))
}

/// The same generator in canonical Lindblad form.
pub fn rhs_lindblad_canonical(rho: &CMatrix, h: &Operator, channels: &[MonitoringChannel], consts: PhysicalConstants) -> Result<CMatrix> {
    check_rho(rho, h)?;
    validate(h, channels, MasterForm::LindbladCanonical)?;
    Ok(canonical(rho, h, channels, consts))
}

/// Oscillator whose momentum is monitored (`A = p`) and disturbed through
/// `B = omega q`, `C = 0`: the Brownian-motion master equation. Truncation is
/// guarded.
pub fn build_brownian_oscillator(
    d: usize,
    mass: f64,
    omega: f64,
    kappa: f64,
    lambda: f64,
    consts: PhysicalConstants,
) -> Result<MasterEquationSpec> {
    let osc = build_oscillator(d, mass, omega, consts)?;
    let ch = MonitoringChannel::minimal(osc.p.clone(), kappa)?.with_disturbance(lambda, osc.q.scaled(omega))?;
    Ok(MasterEquationSpec::new(osc.h, vec![ch], MasterForm::Nonminimal)?.with_truncation_guard())
}

/// Momentum damping rate `lambda * omega` implied by the Brownian equation's
/// expectation values: `d<p>/dt = -m omega^2 <q> - lambda omega <p>`.
pub fn brownian_damping_rate(lambda: f64, omega: f64) -> f64 {
    lambda * omega
}

/// Friction coefficient `2 hbar kappa / (m omega)` quoted for momentum
/// monitoring. Reported only; it is not what the equation's expectation values
/// produce (see [`brownian_damping_rate`]).
pub fn quoted_friction_coefficient(kappa: f64, mass: f64, omega: f64, consts: PhysicalConstants) -> f64 {
    2.0 * consts.hbar() * kappa / (mass * omega)
}

/// Density matrices on a uniform time grid.
#[derive(Clone, Debug)]
pub struct MasterTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
}

/// Classical fixed-step RK4 from `rho0` to `t_final` in `n_steps` steps,
/// re-hermitizing after each step. Returns all `n_steps + 1` states.
pub fn integrate(
    rho0: &DensityMatrix,
    spec: &MasterEquationSpec,
    t_final: f64,
    n_steps: usize,
    consts: PhysicalConstants,
) -> Result<MasterTrajectory> {
    ensure_dim(spec.dim(), rho0.dim())?;
    if n_steps == 0 {
        return Err(Error::invalid("n_steps must be >= 1"));
    }
    if !(t_final.is_finite() && t_final > 0.0) {
        return Err(Error::invalid(format!("t_final must be > 0, got {t_final}")));
    }
    let dt = t_final / n_steps as f64;
    let tr0 = rho0.trace();
    let d = spec.dim();
    let f = |rho: &CMatrix| spec.rhs(rho, consts);

    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    times.push(0.0);
    states.push(rho0.clone());
    let mut rho = rho0.matrix().clone();
    for step in 1..=n_steps {
        let k1 = f(&rho);
        let k2 = f(&(&rho + &k1 * c(dt / 2.0)));
        let k3 = f(&(&rho + &k2 * c(dt / 2.0)));
        let k4 = f(&(&rho + &k3 * c(dt)));
        rho += (k1 + (k2 + k3) * c(2.0) + k4) * c(dt / 6.0);
        rho = hermitize(&rho);

        let tr = rho.trace().re;
        if !tr.is_finite() || (tr - tr0).abs() > INTEGRATION_FAILURE_TOL {
            return Err(Error::IntegrationFailure { step, reason: format!("trace drifted to {tr}") });
        }
        let lmin = min_eigenvalue(&rho);
        if lmin < -INTEGRATION_FAILURE_TOL {
            return Err(Error::IntegrationFailure { step, reason: format!("negative eigenvalue {lmin:.3e}") });
        }
        if spec.truncation_guard && d >= 3 {
            let population = rho[(d - 1, d - 1)].re + rho[(d - 2, d - 2)].re;
            if population > TRUNCATION_LIMIT {
                return Err(Error::TruncationFailure { step, population, limit: TRUNCATION_LIMIT });
            }
        }
        times.push(step as f64 * dt);
        states.push(DensityMatrix::from_matrix_unchecked(rho.clone()));
    }
    Ok(MasterTrajectory { times, states })
}

/// Running sums of normalized projectors over conditioned trajectories.
///
/// Readouts drawn with probability density `|psi|^2` (w.r.t. `d[a]`) turn
/// `∫ d[a] |psi><psi|` into the plain mean of `|psi><psi| / |psi|^2`.
#[derive(Clone, Debug)]
pub struct EnsembleAccumulator {
    times: Vec<f64>,
    sums: Vec<CMatrix>,
    count: usize,
}

fn same_grid(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(1.0))
}

impl EnsembleAccumulator {
    pub fn new(times: Vec<f64>, dim: usize) -> Self {
        let sums = vec![CMatrix::zeros(dim, dim); times.len()];
        Self { times, sums, count: 0 }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn push(&mut self, traj: &ConditionedTrajectory) -> Result<()> {
        if !same_grid(&self.times, &traj.times) {
            return Err(Error::invalid("trajectory time grid does not match the ensemble"));
        }
        for (sum, psi) in self.sums.iter_mut().zip(&traj.states) {
            ensure_dim(sum.nrows(), psi.dim())?;
            *sum += psi.projector() / c(psi.norm2());
        }
        self.count += 1;
        Ok(())
    }

    pub fn merge(mut self, other: Self) -> Result<Self> {
        if !same_grid(&self.times, &other.times) {
            return Err(Error::invalid("cannot merge ensembles on different time grids"));
        }
        for (a, b) in self.sums.iter_mut().zip(other.sums) {
            *a += b;
        }
        self.count += other.count;
        Ok(self)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn average(&self) -> Result<Vec<DensityMatrix>> {
        if self.count == 0 {
            return Err(Error::invalid("empty ensemble"));
        }
        let n = c(self.count as f64);
        self.sums.iter().map(|s| DensityMatrix::new(hermitize(&(s / n)))).collect()
    }
}

/// Pairwise merge in index order; the grouping depends only on the length.
pub fn tree_reduce(mut parts: Vec<EnsembleAccumulator>) -> Result<EnsembleAccumulator> {
    if parts.is_empty() {
        return Err(Error::invalid("nothing to reduce"));
    }
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => a.merge(b)?,
                None => a,
            });
        }
        parts = next;
    }
    Ok(parts.pop().expect("non-empty"))
}

/// Mean of normalized projectors at every time of a common grid.
pub fn ensemble_average(trajectories: &[ConditionedTrajectory]) -> Result<Vec<DensityMatrix>> {
    let first = trajectories.first().ok_or_else(|| Error::invalid("no trajectories"))?;
    let parts = trajectories
        .iter()
        .map(|t| {
            let mut acc = EnsembleAccumulator::new(first.times.clone(), first.states[0].dim());
            acc.push(t).map(|_| acc)
        })
        .collect::<Result<Vec<_>>>()?;
    tree_reduce(parts)?.average()
}

/// Trajectories per work item of [`sample_ensemble`]. Fixed so that the
/// reduction tree, and hence every bit of the result, is independent of the
/// number of worker threads.
pub const ENSEMBLE_CHUNK: usize = 64;

#[derive(Clone, Debug)]
pub struct EnsembleResult {
    pub n_traj: usize,
    pub seed: u64,
    pub times: Vec<f64>,
    pub rho_avg: Vec<DensityMatrix>,
}

impl EnsembleResult {
    /// `{generator, n_traj, seed, t_grid, rho_avg}` with `rho_avg[k]` the
    /// row-major list of `[re, im]` pairs at `t_grid[k]`.
    pub fn to_json(&self, generator: &str) -> String {
        let list = |xs: Vec<String>| format!("[{}]", xs.join(","));
        let t_grid = list(self.times.iter().map(|t| fmt_f64(*t)).collect());
        let rho = list(
            self.rho_avg
                .iter()
                .map(|r| {
                    let m = r.matrix();
                    let d = m.nrows();
                    list((0..d * d)
                        .map(|k| format!("[{},{}]", fmt_f64(m[(k / d, k % d)].re), fmt_f64(m[(k / d, k % d)].im)))
                        .collect())
                })
                .collect(),
        );
        format!(
            "{{\"generator\":{:?},\"n_traj\":{},\"seed\":{},\"t_grid\":{},\"rho_avg\":{}}}\n",
            generator, self.n_traj, self.seed, t_grid, rho
        )
    }
}

/// Samples `n_traj` readouts (stream `i` of `seed` for trajectory `i`) in
/// parallel on the current rayon pool and averages them.
pub fn sample_ensemble(
    stepper: &SliceStepper,
    psi0: &crate::StateVector,
    n_steps: usize,
    n_traj: usize,
    seed: u64,
) -> Result<EnsembleResult> {
    if n_traj == 0 {
        return Err(Error::invalid("n_traj must be >= 1"));
    }
    let times: Vec<f64> = (0..=n_steps).map(|k| k as f64 * stepper.dt()).collect();
    let n_chunks = n_traj.div_ceil(ENSEMBLE_CHUNK);
    let parts = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut acc = EnsembleAccumulator::new(times.clone(), stepper.dim());
            let start = chunk * ENSEMBLE_CHUNK;
            for i in start..(start + ENSEMBLE_CHUNK).min(n_traj) {
                let traj = stepper.sample(psi0, n_steps, &mut trajectory_rng(seed, i as u64))?;
                acc.push(&traj)?;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let total = tree_reduce(parts)?;
    Ok(EnsembleResult { n_traj, seed, rho_avg: total.average()?, times })
}
