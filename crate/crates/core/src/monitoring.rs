//! Measurement specification for monitoring an observable.
//!
//! A readout is a piecewise-constant curve `a(t)` on a uniform grid. The
//! Gaussian weight functional `exp(-kappa * sum_k (A_k - a_k)^2 dt)` describes
//! minimally disturbing monitoring; the non-minimal variant adds the phase
//! `-(i/hbar) * sum_k (lambda a_k B_k + C_k) dt`.

use crate::error::{ensure_dim, Error, Result};
use crate::hilbert::{c, CMatrix, Operator, PhysicalConstants, C64, I};
use crate::io::fmt_f64;

/// Readout `a_k` held constant on the slice `[t0 + k dt, t0 + (k+1) dt)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReadoutCurve {
    t0: f64,
    dt: f64,
    values: Vec<f64>,
}

impl ReadoutCurve {
    pub fn new(t0: f64, dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid(format!("readout dt must be > 0, got {dt}")));
        }
        if !t0.is_finite() {
            return Err(Error::invalid("readout t0 must be finite"));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("readout value {k} is not finite")));
        }
        Ok(Self { t0, dt, values })
    }

    /// Constant readout over `n` slices.
    pub fn constant(value: f64, n: usize, dt: f64) -> Result<Self> {
        Self::new(0.0, dt, vec![value; n])
    }

    /// Samples `f` at the midpoint of each of `n` slices starting at `t0`.
    pub fn from_fn(t0: f64, dt: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(t0, dt, (0..n).map(|k| f(t0 + (k as f64 + 0.5) * dt)).collect())
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Start time of slice `k`.
    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 * self.dt
    }

    /// CSV with header `t,a`, one row per slice start time.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,a\n");
        for (k, a) in self.values.iter().enumerate() {
            out.push_str(&format!("{},{}\n", fmt_f64(self.time(k)), fmt_f64(*a)));
        }
        out
    }

    /// Parses the `t,a` CSV format. Lines starting with `#` are ignored; the
    /// grid must be uniform and have at least two rows.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        match lines.next() {
            Some((_, h)) if h.split(',').map(str::trim).eq(["t", "a"]) => {}
            _ => return Err(Error::Parse("readout CSV must start with header 't,a'".into())),
        }
        let mut ts = Vec::new();
        let mut values = Vec::new();
        for (no, line) in lines {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 2 {
                return Err(Error::Parse(format!("line {}: expected 2 fields", no + 1)));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("line {}: bad number '{s}'", no + 1)))
            };
            ts.push(parse(fields[0])?);
            values.push(parse(fields[1])?);
        }
        if ts.len() < 2 {
            return Err(Error::Parse("readout CSV needs at least two rows to fix dt".into()));
        }
        let dt = ts[1] - ts[0];
        for (k, &t) in ts.iter().enumerate() {
            let expected = ts[0] + k as f64 * dt;
            if (t - expected).abs() > 1e-9 * expected.abs().max(1.0) {
                return Err(Error::Parse(format!("readout grid not uniform at row {k}")));
            }
        }
        Self::new(ts[0], dt, values)
    }
}

/// One monitored observable: `A`, strength `kappa`, and the optional
/// non-minimal disturbance `(lambda, B, C)`.
#[derive(Clone, Debug)]
pub struct MonitoringChannel {
    a: Operator,
    kappa: f64,
    lambda: f64,
    b: Option<Operator>,
    c: Option<Operator>,
}

fn require_hermitian(op: &Operator, name: &str) -> Result<()> {
    if op.is_hermitian() {
        Ok(())
    } else {
        Err(Error::invalid(format!("monitoring operator {name} must be hermitian")))
    }
}

impl MonitoringChannel {
    /// Minimally disturbing monitoring of `a`.
    pub fn minimal(a: Operator, kappa: f64) -> Result<Self> {
        require_hermitian(&a, "A")?;
        if !(kappa.is_finite() && kappa >= 0.0) {
            return Err(Error::invalid(format!("kappa must be >= 0, got {kappa}")));
        }
        Ok(Self { a, kappa, lambda: 0.0, b: None, c: None })
    }

    /// Adds the readout-linear disturbance `lambda * a(t) * B`.
    pub fn with_disturbance(mut self, lambda: f64, b: Operator) -> Result<Self> {
        require_hermitian(&b, "B")?;
        ensure_dim(self.a.dim(), b.dim())?;
        if !lambda.is_finite() {
            return Err(Error::invalid("lambda must be finite"));
        }
        self.lambda = lambda;
        self.b = Some(b);
        Ok(self)
    }

    /// Adds the readout-independent disturbance `C`.
    pub fn with_phase(mut self, c_op: Operator) -> Result<Self> {
        require_hermitian(&c_op, "C")?;
        ensure_dim(self.a.dim(), c_op.dim())?;
        self.c = Some(c_op);
        Ok(self)
    }

    pub fn a(&self) -> &Operator {
        &self.a
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn b(&self) -> Option<&Operator> {
        self.b.as_ref()
    }

    pub fn c(&self) -> Option<&Operator> {
        self.c.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    /// `lambda * B`, or zero.
    pub(crate) fn lambda_b(&self) -> CMatrix {
        match &self.b {
            Some(b) if self.lambda != 0.0 => b.matrix() * c(self.lambda),
            _ => CMatrix::zeros(self.dim(), self.dim()),
        }
    }

    pub(crate) fn c_matrix(&self) -> CMatrix {
        self.c
            .as_ref()
            .map(|op| op.matrix().clone())
            .unwrap_or_else(|| CMatrix::zeros(self.dim(), self.dim()))
    }

    /// True when the channel has no non-minimal part.
    pub fn is_minimal(&self) -> bool {
        self.lambda == 0.0 && self.c.as_ref().map_or(true, Operator::is_zero)
    }
}

/// Corridor of width `delta_a` held for duration `t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorridorSpec {
    duration: f64,
    width: f64,
}

impl CorridorSpec {
    pub fn new(duration: f64, width: f64) -> Result<Self> {
        if !(duration.is_finite() && duration > 0.0 && width.is_finite() && width > 0.0) {
            return Err(Error::invalid("corridor duration and width must be > 0"));
        }
        Ok(Self { duration, width })
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn width(&self) -> f64 {
        self.width
    }
}

/// Measurement strength of a corridor: `1 / (t * delta_a^2)`.
pub fn kappa_from_corridor(spec: &CorridorSpec) -> f64 {
    1.0 / (spec.duration * spec.width * spec.width)
}

fn check_len(path: &[f64], readout: &ReadoutCurve) -> Result<()> {
    ensure_dim(readout.len(), path.len())
}

/// Gaussian weight `exp(-kappa * sum_k (A_k - a_k)^2 dt)` of a classical path.
pub fn weight_gaussian(a_path: &[f64], readout: &ReadoutCurve, kappa: f64) -> Result<f64> {
    check_len(a_path, readout)?;
    let s: f64 = a_path.iter().zip(readout.values()).map(|(x, a)| (x - a).powi(2)).sum();
    Ok((-kappa * s * readout.dt()).exp())
}

/// Non-minimal weight
/// `exp(sum_k dt [-kappa (A_k - a_k)^2 - (i/hbar)(lambda a_k B_k + C_k)])`.
pub fn weight_nonminimal(
    a_path: &[f64],
    b_path: &[f64],
    c_path: &[f64],
    readout: &ReadoutCurve,
    ch: &MonitoringChannel,
    consts: PhysicalConstants,
) -> Result<C64> {
    check_len(a_path, readout)?;
    check_len(b_path, readout)?;
    check_len(c_path, readout)?;
    let dt = readout.dt();
    let (kappa, lambda, hbar) = (ch.kappa(), ch.lambda(), consts.hbar());
    let mut re = 0.0;
    let mut im = 0.0;
    for k in 0..readout.len() {
        let a = readout.values()[k];
        re -= kappa * (a_path[k] - a).powi(2) * dt;
        im -= (lambda * a * b_path[k] + c_path[k]) * dt / hbar;
    }
    Ok(C64::new(re, im).exp())
}

/// `H + C + lambda a B - i kappa hbar (A - a)^2` for a readout value `a`.
pub fn effective_hamiltonian(
    ch: &MonitoringChannel,
    a: f64,
    h: &Operator,
    consts: PhysicalConstants,
) -> Result<CMatrix> {
    ensure_dim(h.dim(), ch.dim())?;
    let d = h.dim();
    let shifted = ch.a().matrix() - CMatrix::identity(d, d) * c(a);
    let damping = &shifted * &shifted * (-I * (ch.kappa() * consts.hbar()));
    Ok(h.matrix() + ch.c_matrix() + ch.lambda_b() * c(a) + damping)
}
