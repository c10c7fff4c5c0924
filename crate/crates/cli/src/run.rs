//! Dispatch from a validated [`RunConfig`] to the simulator, producing
//! in-memory artifacts that [`crate::output`] writes out.

use std::fmt;
use std::path::Path;

use rpimon::diagnostics::{master_invariants, norm_increase, run_check_suite};
use rpimon::io::{convergence_csv, density_sequence_csv, expectation_csv, fmt_f64, propagator_csv, trajectory_csv};
use rpimon::lattice::{
    boundary_weight, convergence_study, effective_propagator, gaussian_packet, rpi_propagator, KineticKernel,
    LatticeSpec, Potential,
};
use rpimon::nonselective::{integrate, sample_ensemble, MasterEquationSpec, MasterForm};
use rpimon::selective::{propagate_conditioned, trajectory_rng, SliceStepper};
use rpimon::{
    build_oscillator, build_qubit, CMatrix, CVector, DensityMatrix, MonitoringChannel, Operator, PhysicalConstants,
    ReadoutCurve, StateVector, C64,
};
use serde::Deserialize;

use crate::config::{InitialKind, Mode, ReadoutSource, RunConfig, SystemKind};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    /// 1 config, 2 numerical failure, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<rpimon::Error> for CliError {
    fn from(e: rpimon::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub content: String,
}

#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub artifacts: Vec<Artifact>,
    pub summary: Vec<String>,
    /// Set when `check` mode found a failing invariant.
    pub failed: bool,
}

impl RunOutput {
    fn csv(&mut self, cfg: &RunConfig, name: &str, body: String) {
        self.artifacts.push(Artifact { name: name.into(), content: format!("{}{body}", header(cfg)) });
    }
}

/// Identifies the producing tool and configuration.
pub fn generator(cfg: &RunConfig) -> String {
    format!("rpimon {VERSION} config-sha256={}", cfg.hash)
}

/// First line of every text artifact.
pub fn header(cfg: &RunConfig) -> String {
    format!("# {}\n", generator(cfg))
}

struct System {
    h: Operator,
    channel: MonitoringChannel,
    observables: Vec<(String, Operator)>,
    psi0: StateVector,
    guard: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixFile {
    h: Vec<Vec<[f64; 2]>>,
    a: Vec<Vec<[f64; 2]>>,
    b: Option<Vec<Vec<[f64; 2]>>>,
    c: Option<Vec<Vec<[f64; 2]>>>,
}

fn to_operator(rows: &[Vec<[f64; 2]>], name: &str) -> Result<Operator, CliError> {
    let d = rows.len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(CliError::Config(format!("matrix '{name}' must be square and non-empty")));
    }
    let m = CMatrix::from_fn(d, d, |i, j| C64::new(rows[i][j][0], rows[i][j][1]));
    Operator::hermitian(m).map_err(|e| CliError::Config(format!("matrix '{name}': {e}")))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn named(name: &str, table: &[(&str, &Operator)], role: &str) -> Result<Operator, CliError> {
    table.iter().find(|(n, _)| *n == name).map(|(_, op)| (*op).clone()).ok_or_else(|| {
        let names: Vec<&str> = table.iter().map(|(n, _)| *n).collect();
        CliError::Config(format!("unknown {role} '{name}' (expected one of {})", names.join(", ")))
    })
}

fn build_system(cfg: &RunConfig, consts: PhysicalConstants) -> Result<System, CliError> {
    let (h, a, b, c, observables, guard) = match cfg.system {
        SystemKind::Qubit => {
            let (sx, sy, sz) = (build_qubit("sx")?, build_qubit("sy")?, build_qubit("sz")?);
            let h = Operator::hermitian(sx.matrix() * C64::new(cfg.hx, 0.0) + sy.matrix() * C64::new(cfg.hy, 0.0) + sz.matrix() * C64::new(cfg.hz, 0.0))?;
            let table = [("sx", &sx), ("sy", &sy), ("sz", &sz)];
            let a = named(cfg.observable.as_deref().unwrap_or("sz"), &table, "observable")?;
            let b = cfg.disturbance.as_deref().map(|n| named(n, &table, "disturbance")).transpose()?;
            let obs = vec![("sx".into(), sx.clone()), ("sy".into(), sy.clone()), ("sz".into(), sz.clone()), ("H".into(), h.clone())];
            (h, a, b, None, obs, false)
        }
        SystemKind::Oscillator => {
            let osc = build_oscillator(cfg.d, cfg.mass, cfg.omega, consts)?;
            let omega_q = osc.q.scaled(cfg.omega);
            let table = [("q", &osc.q), ("p", &osc.p), ("omega_q", &omega_q)];
            let a = named(cfg.observable.as_deref().unwrap_or("q"), &table, "observable")?;
            let b = cfg.disturbance.as_deref().map(|n| named(n, &table, "disturbance")).transpose()?;
            let obs = vec![("q".into(), osc.q.clone()), ("p".into(), osc.p.clone()), ("H".into(), osc.h.clone())];
            (osc.h, a, b, None, obs, true)
        }
        SystemKind::Custom => {
            let path = cfg.matrix_file.as_ref().expect("validated");
            let file: MatrixFile = serde_json::from_str(&read_text(path)?)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let h = to_operator(&file.h, "h")?;
            let a = to_operator(&file.a, "a")?;
            let b = file.b.as_deref().map(|m| to_operator(m, "b")).transpose()?;
            let c = file.c.as_deref().map(|m| to_operator(m, "c")).transpose()?;
            let obs = vec![("A".into(), a.clone()), ("H".into(), h.clone())];
            (h, a, b, c, obs, false)
        }
    };
    let mut channel = MonitoringChannel::minimal(a, cfg.kappa)?;
    if let Some(b) = b {
        channel = channel.with_disturbance(cfg.lambda, b)?;
    } else if cfg.lambda != 0.0 {
        return Err(CliError::Config("lambda != 0 needs a disturbance operator".into()));
    }
    if let Some(c) = c {
        channel = channel.with_phase(c)?;
    }
    let dim = h.dim();
    let psi0 = match cfg.initial {
        InitialKind::Uniform => StateVector::normalized(CVector::from_element(dim, C64::new(1.0, 0.0)))?,
        InitialKind::Basis => StateVector::basis(dim, cfg.basis_index)?,
        InitialKind::Coherent if cfg.system == SystemKind::Oscillator => StateVector::coherent(dim, C64::new(cfg.alpha, 0.0))?,
        InitialKind::Coherent => return Err(CliError::Config("coherent initial state needs system = oscillator".into())),
    };
    Ok(System { h, channel, observables, psi0, guard: cfg.truncation_guard.unwrap_or(guard) })
}

fn grid(cfg: &RunConfig) -> (f64, usize) {
    cfg.grid.expect("validated time grid")
}

fn readout(cfg: &RunConfig) -> Result<ReadoutCurve, CliError> {
    match cfg.readout.as_ref().expect("validated readout") {
        ReadoutSource::Inline(v) => Ok(ReadoutCurve::new(0.0, grid(cfg).0, v.clone())?),
        ReadoutSource::File(p) => Ok(ReadoutCurve::from_csv(&read_text(p)?)?),
        ReadoutSource::Levels { levels, duration } => {
            let (dt, n) = grid(cfg);
            Ok(ReadoutCurve::from_fn(0.0, dt, n, |t| ReadoutSource::level_at(levels, *duration, t))?)
        }
    }
}

fn master_spec(cfg: &RunConfig, sys: &System) -> Result<MasterEquationSpec, CliError> {
    let form = cfg.form.unwrap_or(if sys.channel.is_minimal() { MasterForm::Simple } else { MasterForm::Nonminimal });
    let spec = MasterEquationSpec::new(sys.h.clone(), vec![sys.channel.clone()], form)?;
    Ok(if sys.guard { spec.with_truncation_guard() } else { spec })
}

/// Runs the configured mode. Nothing is written; ensemble sampling uses the
/// current rayon pool.
pub fn run(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let consts = PhysicalConstants::new(cfg.hbar)?;
    let mut out = RunOutput::default();
    match cfg.mode {
        Mode::Check => {
            let results = run_check_suite(consts)?;
            let mut body = String::from("name,deviation,tolerance,passed\n");
            for r in &results {
                body.push_str(&format!("{},{},{},{}\n", r.name, fmt_f64(r.deviation), fmt_f64(r.tolerance), r.passed));
                out.summary.push(format!(
                    "{} {:<32} deviation {:.3e} tolerance {:.1e}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.deviation,
                    r.tolerance
                ));
            }
            out.failed = results.iter().any(|r| !r.passed);
            out.csv(cfg, "check.csv", body);
        }
        Mode::Selective => {
            let sys = build_system(cfg, consts)?;
            let r = readout(cfg)?;
            let traj = propagate_conditioned(&sys.psi0, &sys.h, &sys.channel, &r, consts)?;
            out.summary.push(format!("final probability density {:.6e}", traj.final_probability_density));
            out.summary.push(format!("largest per-step norm increase {:.3e}", norm_increase(&traj)));
            out.csv(cfg, "trajectory.csv", trajectory_csv(&traj));
        }
        Mode::Sample => {
            let sys = build_system(cfg, consts)?;
            let (dt, n) = grid(cfg);
            let stepper = SliceStepper::new(&sys.h, &sys.channel, dt, consts)?;
            let traj = stepper.sample(&sys.psi0, n, &mut trajectory_rng(cfg.seed.expect("validated"), 0))?;
            out.summary.push(format!("final probability density {:.6e}", traj.final_probability_density));
            out.csv(cfg, "trajectory.csv", trajectory_csv(&traj));
            out.csv(cfg, "readout.csv", traj.readout.to_csv());
        }
        Mode::Ensemble => {
            let sys = build_system(cfg, consts)?;
            let (dt, n) = grid(cfg);
            let stepper = SliceStepper::new(&sys.h, &sys.channel, dt, consts)?;
            let res = sample_ensemble(&stepper, &sys.psi0, n, cfg.n_traj, cfg.seed.expect("validated"))?;
            let sol = integrate(&DensityMatrix::from_pure(&sys.psi0)?, &master_spec(cfg, &sys)?, n as f64 * dt, n, consts)?;
            let mut body = String::from("t,deviation_max\n");
            let mut worst = 0.0f64;
            for ((t, a), b) in res.times.iter().zip(&res.rho_avg).zip(&sol.states) {
                let dev = rpimon::hilbert::max_abs(&(a.matrix() - b.matrix()));
                worst = worst.max(dev);
                body.push_str(&format!("{},{}\n", fmt_f64(*t), fmt_f64(dev)));
            }
            out.summary.push(format!(
                "max |rho_ensemble - rho_master| = {worst:.3e} (statistical scale 5/sqrt(n_traj) = {:.3e})",
                5.0 / (cfg.n_traj as f64).sqrt()
            ));
            out.artifacts.push(Artifact { name: "ensemble.json".into(), content: res.to_json(&generator(cfg)) });
            out.csv(cfg, "comparison.csv", body);
        }
        Mode::Master => {
            let sys = build_system(cfg, consts)?;
            let (dt, n) = grid(cfg);
            let rho0 = DensityMatrix::from_pure(&sys.psi0)?;
            let sol = integrate(&rho0, &master_spec(cfg, &sys)?, n as f64 * dt, n, consts)?;
            let (drift, lmin) = master_invariants(&sol);
            out.summary.push(format!("trace drift {drift:.3e}, minimum eigenvalue {lmin:.3e}"));
            let labelled: Vec<(&str, &Operator)> = sys.observables.iter().map(|(l, o)| (l.as_str(), o)).collect();
            out.csv(cfg, "expectation.csv", expectation_csv(&sol.times, &sol.states, &labelled)?);
            let mats: Vec<CMatrix> = sol.states.iter().map(|r| r.matrix().clone()).collect();
            out.csv(cfg, "density.csv", density_sequence_csv(&sol.times, &mats));
        }
        Mode::Lattice => run_lattice(cfg, consts, &mut out)?,
    }
    Ok(out)
}

fn run_lattice(cfg: &RunConfig, consts: PhysicalConstants, out: &mut RunOutput) -> Result<(), CliError> {
    let potential = if cfg.harmonic { Potential::Harmonic { omega: cfg.omega } } else { Potential::Free };
    let kinetic = if cfg.continuum_kernel { KineticKernel::Continuum } else { KineticKernel::Lattice };
    let spec = LatticeSpec::new(cfg.n_q, cfg.q_max, cfg.mass, potential)?.with_kinetic(kinetic);
    let levels: Box<dyn Fn(f64) -> f64> = match &cfg.readout {
        None => Box::new(rpimon::lattice::staircase_readout),
        Some(ReadoutSource::Levels { levels, duration }) => {
            let (levels, duration) = (levels.clone(), *duration);
            Box::new(move |t| ReadoutSource::level_at(&levels, duration, t))
        }
        Some(_) => return Err(CliError::Config("lattice mode takes its readout from readout_levels".into())),
    };
    let t = cfg.t_final.expect("validated");
    let rows = convergence_study(&spec, &levels, t, &cfg.dts, cfg.kappa, consts)?;
    for (dt, dev) in &rows {
        out.summary.push(format!("dt {dt:.6e}  max |rpi - effective| {dev:.6e}"));
    }
    let monotone = rows.windows(2).all(|w| w[1].1 < w[0].1 || w[1].1 <= 1e-12);
    out.summary.push(format!("deviation decreases monotonically: {monotone}"));

    let (dt, _) = *rows.iter().min_by(|a, b| a.0.total_cmp(&b.0)).expect("at least one dt");
    let n = (t / dt).round() as usize;
    let r = ReadoutCurve::from_fn(0.0, dt, n, &levels)?;
    let rpi = rpi_propagator(&spec, &r, cfg.kappa, consts)?;
    let eff = effective_propagator(&spec, &r, cfg.kappa, consts)?;
    let packet = gaussian_packet(&spec, cfg.q0, cfg.p0, cfg.sigma, consts)?;
    let evolved = rpi.apply(packet.amplitudes())?;
    out.summary.push(format!(
        "packet squared norm after rpi propagation {:.6e}, weight within {} of the walls {:.3e}",
        evolved.norm_squared(),
        cfg.sigma,
        boundary_weight(&spec, &evolved, cfg.sigma)
    ));
    out.csv(cfg, "convergence.csv", convergence_csv(&rows));
    out.csv(cfg, "propagator_rpi.csv", propagator_csv(rpi.matrix()));
    out.csv(cfg, "propagator_effective.csv", propagator_csv(eff.matrix()));
    Ok(())
}
