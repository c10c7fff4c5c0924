//! Invariant checks shared by the `check` run mode and the test suites.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hilbert::{
    build_oscillator, build_qubit, c, max_abs, matrix_exponential, CMatrix, CVector, DensityMatrix, Operator,
    PhysicalConstants, StateVector, C64, I,
};
use crate::lattice::{convergence_study, staircase_readout, LatticeSpec, Potential};
use crate::monitoring::{MonitoringChannel, ReadoutCurve};
use crate::nonselective::{
    build_brownian_oscillator, integrate, rhs_lindblad_canonical, rhs_nonminimal, sample_ensemble, MasterEquationSpec,
    MasterForm, MasterTrajectory,
};
use crate::selective::{generalized_unitarity_check, propagate_conditioned, ConditionedTrajectory, SliceStepper};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    /// Passes when `deviation <= tolerance`; NaN fails.
    pub fn new(name: impl Into<String>, deviation: f64, tolerance: f64) -> Self {
        Self { name: name.into(), deviation, tolerance, passed: deviation <= tolerance }
    }
}

/// Hermitian matrix with real and imaginary parts uniform in `[-1, 1]`.
pub fn random_hermitian<R: Rng>(d: usize, rng: &mut R) -> Operator {
    let g = CMatrix::from_fn(d, d, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    Operator::hermitian((&g + g.adjoint()) * c(0.5)).expect("hermitian by construction")
}

/// `G G^dag / tr(G G^dag)` for a random complex `G`.
pub fn random_density<R: Rng>(d: usize, rng: &mut R) -> DensityMatrix {
    let g = CMatrix::from_fn(d, d, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let m = &g * g.adjoint();
    let tr = m.trace();
    DensityMatrix::new(crate::hilbert::hermitize(&(m / tr))).expect("positive by construction")
}

/// Largest entrywise difference between the non-minimal and canonical
/// Lindblad right-hand sides over random instances with dims in `dims`.
pub fn master_form_agreement(
    trials: usize,
    dims: std::ops::RangeInclusive<usize>,
    seed: u64,
    consts: PhysicalConstants,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let d = rng.random_range(dims.clone());
        let h = random_hermitian(d, &mut rng);
        let a = random_hermitian(d, &mut rng);
        let b = random_hermitian(d, &mut rng);
        let cop = random_hermitian(d, &mut rng);
        let rho = random_density(d, &mut rng);
        let kappa = rng.random_range(0.1..2.0);
        let lambda = rng.random_range(0.1..2.0);
        let ch = MonitoringChannel::minimal(a, kappa)?.with_disturbance(lambda, b)?.with_phase(cop)?;
        let chs = [ch];
        let x = rhs_nonminimal(rho.matrix(), &h, &chs, consts)?;
        let y = rhs_lindblad_canonical(rho.matrix(), &h, &chs, consts)?;
        worst = worst.max(max_abs(&(x - y)));
    }
    Ok(worst)
}

/// Worst single-slice unitarity defects over the given observables and
/// `kappa dt` values: `(analytic diagonal, quadrature vs analytic)`.
pub fn unitarity_deviations(observables: &[Operator], kappa_dts: &[f64], consts: PhysicalConstants) -> Result<(f64, f64)> {
    let mut diag = 0.0f64;
    let mut quad = 0.0f64;
    for a in observables {
        for &kdt in kappa_dts {
            let dt = 0.01;
            let ch = MonitoringChannel::minimal(a.clone(), kdt / dt)?;
            let r = generalized_unitarity_check(&ch, &Operator::zeros(a.dim()), dt, consts)?;
            diag = diag.max(r.diagonal_defect);
            quad = quad.max(r.quadrature_deviation);
        }
    }
    Ok((diag, quad))
}

/// Relative residuals of `d<q>/dt = <p>/m` and
/// `d<p>/dt = -m omega^2 <q> - lambda omega <p>` along a solution, with time
/// derivatives from a five-point stencil. Each residual is scaled by the
/// largest magnitude of its right-hand side over the run.
#[derive(Clone, Copy, Debug)]
pub struct EhrenfestResiduals {
    pub position: f64,
    pub momentum: f64,
}

pub fn ehrenfest_residuals(
    sol: &MasterTrajectory,
    q: &Operator,
    p: &Operator,
    mass: f64,
    omega: f64,
    lambda: f64,
) -> Result<EhrenfestResiduals> {
    let n = sol.states.len();
    if n < 5 {
        return Err(Error::invalid("need at least five samples"));
    }
    let dt = sol.times[1] - sol.times[0];
    let qs = sol.states.iter().map(|r| r.expectation(q)).collect::<Result<Vec<_>>>()?;
    let ps = sol.states.iter().map(|r| r.expectation(p)).collect::<Result<Vec<_>>>()?;
    let deriv = |f: &[f64], k: usize| (f[k - 2] - 8.0 * f[k - 1] + 8.0 * f[k + 1] - f[k + 2]) / (12.0 * dt);
    let (mut rq, mut rp, mut sq, mut sp) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for k in 0..n {
        let fq = ps[k] / mass;
        let fp = -mass * omega * omega * qs[k] - lambda * omega * ps[k];
        sq = sq.max(fq.abs());
        sp = sp.max(fp.abs());
        if (2..n - 2).contains(&k) {
            rq = rq.max((deriv(&qs, k) - fq).abs());
            rp = rp.max((deriv(&ps, k) - fp).abs());
        }
    }
    Ok(EhrenfestResiduals { position: rq / sq, momentum: rp / sp })
}

/// Largest per-step increase of `|psi|^2` along a trajectory.
pub fn norm_increase(traj: &ConditionedTrajectory) -> f64 {
    traj.states.windows(2).fold(0.0f64, |acc, w| acc.max(w[1].norm2() - w[0].norm2()))
}

/// `(max |tr rho(t) - tr rho(0)|, min eigenvalue)` over a master solution.
pub fn master_invariants(sol: &MasterTrajectory) -> (f64, f64) {
    let tr0 = sol.states[0].trace();
    sol.states.iter().fold((0.0f64, f64::INFINITY), |(drift, lmin), r| {
        (drift.max((r.trace() - tr0).abs()), lmin.min(r.min_eigenvalue()))
    })
}

/// Fidelity defect `1 - |<exact|psi>|^2` and density max-entry error of the
/// `kappa = 0` evolution against `exp(-i H t / hbar)`.
pub fn unitary_limit(
    h: &Operator,
    a: &Operator,
    psi0: &StateVector,
    t: f64,
    n_steps: usize,
    consts: PhysicalConstants,
) -> Result<(f64, f64)> {
    let dt = t / n_steps as f64;
    let u = matrix_exponential(&(h.matrix() * (-I * (t / consts.hbar()))))?;
    let exact = StateVector::new(&u * psi0.amplitudes())?;
    let ch = MonitoringChannel::minimal(a.clone(), 0.0)?;
    let readout = ReadoutCurve::constant(0.0, n_steps, dt)?;
    let traj = propagate_conditioned(psi0, h, &ch, &readout, consts)?;
    let fidelity_defect = 1.0 - traj.final_state().fidelity(&exact)?;

    let rho0 = DensityMatrix::from_pure(psi0)?;
    let spec = MasterEquationSpec::new(h.clone(), vec![ch], MasterForm::Simple)?;
    let sol = integrate(&rho0, &spec, t, n_steps, consts)?;
    let exact_rho = &u * rho0.matrix() * u.adjoint();
    let density_error = max_abs(&(sol.states.last().expect("non-empty").matrix() - exact_rho));
    Ok((fidelity_defect, density_error))
}

/// `|psi0> = (|0> + |1>) / sqrt(2)`.
pub fn plus_state() -> StateVector {
    StateVector::normalized(CVector::from_vec(vec![c(1.0), c(1.0)])).expect("nonzero")
}

/// Max over the sample times of `| |rho01(t)| - e^{-2 kappa t} / 2 |` for the
/// ensemble-averaged qubit dephasing model.
pub fn dephasing_ensemble_error(n_traj: usize, kappa: f64, dt: f64, times: &[f64], seed: u64) -> Result<f64> {
    let consts = PhysicalConstants::default();
    let ch = MonitoringChannel::minimal(build_qubit("sz")?, kappa)?;
    let stepper = SliceStepper::new(&Operator::zeros(2), &ch, dt, consts)?;
    let n_steps = times.iter().map(|t| (t / dt).round() as usize).max().unwrap_or(0);
    let res = sample_ensemble(&stepper, &plus_state(), n_steps, n_traj, seed)?;
    let mut worst = 0.0f64;
    for &t in times {
        let k = (t / dt).round() as usize;
        let got = res.rho_avg[k].matrix()[(0, 1)].norm();
        worst = worst.max((got - 0.5 * (-2.0 * kappa * t).exp()).abs());
    }
    Ok(worst)
}

/// The invariant suite with fixed default parameters.
pub fn run_check_suite(consts: PhysicalConstants) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();

    let sz = build_qubit("sz")?;
    let osc16 = build_oscillator(16, 1.0, 1.0, consts)?;
    let (diag, quad) = unitarity_deviations(&[sz.clone(), osc16.p.clone()], &[0.01, 0.1, 1.0], consts)?;
    out.push(CheckResult::new("unitarity analytic diagonal", diag, 0.0));
    out.push(CheckResult::new("unitarity quadrature", quad, 1e-8));

    out.push(CheckResult::new("master forms agree", master_form_agreement(100, 2..=6, 7, consts)?, 1e-12));

    let (m, omega, kappa, lambda) = (1.0, 1.0, 0.1, 0.2);
    let spec = build_brownian_oscillator(32, m, omega, kappa, lambda, consts)?;
    let osc32 = build_oscillator(32, m, omega, consts)?;
    let rho0 = DensityMatrix::from_pure(&StateVector::coherent(32, c(1.0))?)?;
    let sol = integrate(&rho0, &spec, 5.0, 1000, consts)?;
    let e = ehrenfest_residuals(&sol, &osc32.q, &osc32.p, m, omega, lambda)?;
    out.push(CheckResult::new("ehrenfest position", e.position, 1e-4));
    out.push(CheckResult::new("ehrenfest momentum", e.momentum, 1e-4));
    let (drift, lmin) = master_invariants(&sol);
    out.push(CheckResult::new("master trace drift", drift, 1e-8));
    out.push(CheckResult::new("master negativity", (-lmin).max(0.0), 1e-8));

    let h_qubit = build_qubit("sx")?.scaled(0.8);
    let (f1, d1) = unitary_limit(&h_qubit, &sz, &plus_state(), 1.0, 1000, consts)?;
    let coherent16 = StateVector::coherent(16, c(1.0))?;
    let (f2, d2) = unitary_limit(&osc16.h, &osc16.q, &coherent16, 1.0, 1000, consts)?;
    out.push(CheckResult::new("unitary limit fidelity", f1.max(f2), 1e-8));
    out.push(CheckResult::new("unitary limit density", d1.max(d2), 1e-8));

    let n_traj = 2000;
    let deph = dephasing_ensemble_error(n_traj, 1.0, 0.01, &[0.25, 0.5, 1.0], 1)?;
    out.push(CheckResult::new("dephasing ensemble", deph, 5.0 / (n_traj as f64).sqrt()));

    let ch = MonitoringChannel::minimal(build_qubit("sz")?, 1.0)?.with_disturbance(0.5, build_qubit("sx")?)?;
    let stepper = SliceStepper::new(&h_qubit, &ch, 0.01, consts)?;
    let mut rng = crate::selective::trajectory_rng(3, 0);
    let traj = stepper.sample(&plus_state(), 200, &mut rng)?;
    out.push(CheckResult::new("trajectory norm increase", norm_increase(&traj).max(0.0), 1e-9));

    let lat = LatticeSpec::new(101, 8.0, 1.0, Potential::Harmonic { omega: 1.0 })?;
    let rows = convergence_study(&lat, staircase_readout, 1.0, &[1.0 / 25.0, 1.0 / 50.0], 0.5, consts)?;
    let growth = rows.windows(2).fold(0.0f64, |acc, w| acc.max(w[1].1 - w[0].1));
    out.push(CheckResult::new("lattice convergence monotone", growth.max(0.0), 0.0));
    Ok(out)
}
