//! Text formats shared by the drivers: trajectory dumps, density-matrix
//! sequences, expectation values, propagator entries and convergence reports.
//!
//! Floats are written with 17 significant digits so every value round-trips.

use std::fmt::Write;

use crate::hilbert::{CMatrix, DensityMatrix, Operator};
use crate::selective::ConditionedTrajectory;

/// `x` in scientific notation with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// `t, norm2, re_amp_0.., im_amp_0.., a`; the final row has an empty `a`.
pub fn trajectory_csv(traj: &ConditionedTrajectory) -> String {
    let d = traj.states[0].dim();
    let mut out = String::from("t,norm2");
    (0..d).for_each(|i| write!(out, ",re_amp_{i}").unwrap());
    (0..d).for_each(|i| write!(out, ",im_amp_{i}").unwrap());
    out.push_str(",a\n");
    for (k, (t, psi)) in traj.times.iter().zip(&traj.states).enumerate() {
        write!(out, "{},{}", fmt_f64(*t), fmt_f64(psi.norm2())).unwrap();
        psi.amplitudes().iter().for_each(|z| write!(out, ",{}", fmt_f64(z.re)).unwrap());
        psi.amplitudes().iter().for_each(|z| write!(out, ",{}", fmt_f64(z.im)).unwrap());
        match traj.readout.values().get(k) {
            Some(a) => writeln!(out, ",{}", fmt_f64(*a)).unwrap(),
            None => out.push_str(",\n"),
        }
    }
    out
}

/// `t, re_rho_ij.., im_rho_ij..`, row-major.
pub fn density_sequence_csv(times: &[f64], states: &[CMatrix]) -> String {
    let d = states.first().map_or(0, |m| m.nrows());
    let mut out = String::from("t");
    for part in ["re", "im"] {
        for i in 0..d {
            for j in 0..d {
                write!(out, ",{part}_rho_{i}{j}").unwrap();
            }
        }
    }
    out.push('\n');
    for (t, m) in times.iter().zip(states) {
        out.push_str(&fmt_f64(*t));
        for i in 0..d {
            for j in 0..d {
                write!(out, ",{}", fmt_f64(m[(i, j)].re)).unwrap();
            }
        }
        for i in 0..d {
            for j in 0..d {
                write!(out, ",{}", fmt_f64(m[(i, j)].im)).unwrap();
            }
        }
        out.push('\n');
    }
    out
}

/// `t, <label>.., purity, trace, abs_rho01` for the given labelled observables.
pub fn expectation_csv(
    times: &[f64],
    states: &[DensityMatrix],
    observables: &[(&str, &Operator)],
) -> crate::Result<String> {
    let mut out = String::from("t");
    observables.iter().for_each(|(label, _)| write!(out, ",<{label}>").unwrap());
    out.push_str(",purity,trace,abs_rho01\n");
    for (t, rho) in times.iter().zip(states) {
        out.push_str(&fmt_f64(*t));
        for (_, op) in observables {
            write!(out, ",{}", fmt_f64(rho.expectation(op)?)).unwrap();
        }
        let coherence = if rho.dim() > 1 { rho.matrix()[(0, 1)].norm() } else { 0.0 };
        writeln!(out, ",{},{},{}", fmt_f64(rho.purity()), fmt_f64(rho.trace()), fmt_f64(coherence)).unwrap();
    }
    Ok(out)
}

/// `i, j, re, im` for every entry.
pub fn propagator_csv(m: &CMatrix) -> String {
    let mut out = String::from("i,j,re,im\n");
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            writeln!(out, "{i},{j},{},{}", fmt_f64(m[(i, j)].re), fmt_f64(m[(i, j)].im)).unwrap();
        }
    }
    out
}

/// `dt, deviation_max`.
pub fn convergence_csv(rows: &[(f64, f64)]) -> String {
    let mut out = String::from("dt,deviation_max\n");
    for (dt, dev) in rows {
        writeln!(out, "{},{}", fmt_f64(*dt), fmt_f64(*dev)).unwrap();
    }
    out
}
