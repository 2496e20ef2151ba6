//! System models: static Hamiltonian, windowed classical drive and waveguide
//! couplings.
//!
//! All models are written in the frame rotating at the system transition
//! frequencies, so `H0` carries no bare energies and raw amplitudes differ from
//! lab-frame ones by unit-modulus phases. Every observable in the crate is
//! insensitive to those phases.

use std::sync::Arc;

use crate::blocks::BlockStructure;
use crate::error::{invalid, Error, Result};
use crate::hilbert::{destroy, identity, tensor, Operator, SparseOperator, StateVector, I};

/// Which limit of the drive to take at a discontinuity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Sample table of a custom drive, linearly interpolated between knots and
/// zero outside `[first knot, last knot]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DriveTable {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl DriveTable {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(invalid("drive table: times and values differ in length"));
        }
        if times.len() < 2 {
            return Err(invalid("drive table: at least two samples are required"));
        }
        if times.iter().chain(&values).any(|x| !x.is_finite()) {
            return Err(invalid("drive table: samples must be finite"));
        }
        if times[0] < 0.0 {
            return Err(invalid("drive table: first sample time must be >= 0"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("drive table: sample times must be strictly increasing"));
        }
        Ok(Self { times, values })
    }

    /// Parses `time,value` rows. Blank lines and lines starting with `#` are
    /// skipped, and a single non-numeric header row is allowed.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut times = Vec::new();
        let mut values = Vec::new();
        let mut seen_header = false;
        let mut last_line = 0;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            last_line = line_no;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 2 {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected 2 comma-separated fields, found {}", fields.len()),
                });
            }
            let parsed = (fields[0].parse::<f64>(), fields[1].parse::<f64>());
            match parsed {
                (Ok(t), Ok(v)) => {
                    if !t.is_finite() || !v.is_finite() {
                        return Err(Error::Parse { line: line_no, message: "non-finite sample".into() });
                    }
                    if let Some(&prev) = times.last() {
                        if t <= prev {
                            return Err(Error::Parse {
                                line: line_no,
                                message: format!("time {t} does not increase past {prev}"),
                            });
                        }
                    } else if t < 0.0 {
                        return Err(Error::Parse { line: line_no, message: "first sample time must be >= 0".into() });
                    }
                    times.push(t);
                    values.push(v);
                }
                _ if times.is_empty() && !seen_header => seen_header = true,
                _ => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("cannot parse '{line}' as two numbers"),
                    })
                }
            }
        }
        if times.len() < 2 {
            return Err(Error::Parse { line: last_line.max(1), message: "at least two samples are required".into() });
        }
        Self::new(times, values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn start(&self) -> f64 {
        self.times[0]
    }

    fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    fn interpolate(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&x| x <= t).clamp(1, self.times.len() - 1);
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let (v0, v1) = (self.values[k - 1], self.values[k]);
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    /// Copy whose last knot is moved to `end` (values are kept).
    fn with_end(&self, end: f64) -> Result<Self> {
        let mut times = self.times.clone();
        *times.last_mut().expect("non-empty") = end;
        Self::new(times, self.values.clone())
    }
}

/// Time dependence `f(t)` of the drive term `f(t)·V`.
#[derive(Clone, Debug, PartialEq)]
pub enum DriveSpec {
    /// Constant `omega` on `[0, t_pulse]`.
    Square { omega: f64, t_pulse: f64 },
    /// `g0·exp(−(t−t0)²/2σ²)` on `[0, t_end]`.
    Gaussian { g0: f64, t0: f64, sigma: f64, t_end: f64 },
    /// Piecewise-linear samples.
    Custom(DriveTable),
}

impl DriveSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            DriveSpec::Square { omega, t_pulse } => {
                if !omega.is_finite() {
                    return Err(invalid("square drive: omega must be finite"));
                }
                if !(t_pulse.is_finite() && *t_pulse >= 0.0) {
                    return Err(invalid("square drive: t_pulse must be >= 0"));
                }
            }
            DriveSpec::Gaussian { g0, t0, sigma, t_end } => {
                if !(g0.is_finite() && t0.is_finite()) {
                    return Err(invalid("gaussian drive: g0 and t0 must be finite"));
                }
                if !(sigma.is_finite() && *sigma > 0.0) {
                    return Err(invalid("gaussian drive: sigma must be > 0"));
                }
                if !(t_end.is_finite() && *t_end >= 0.0) {
                    return Err(invalid("gaussian drive: window end must be >= 0"));
                }
            }
            DriveSpec::Custom(_) => {}
        }
        Ok(())
    }

    /// Drive horizon `T_P`.
    pub fn window_end(&self) -> f64 {
        match self {
            DriveSpec::Square { t_pulse, .. } => *t_pulse,
            DriveSpec::Gaussian { t_end, .. } => *t_end,
            DriveSpec::Custom(table) => table.end(),
        }
    }

    fn window_start(&self) -> f64 {
        match self {
            DriveSpec::Custom(table) => table.start(),
            _ => 0.0,
        }
    }

    fn inside(&self, t: f64) -> f64 {
        match self {
            DriveSpec::Square { omega, .. } => *omega,
            DriveSpec::Gaussian { g0, t0, sigma, .. } => g0 * (-(t - t0).powi(2) / (2.0 * sigma * sigma)).exp(),
            DriveSpec::Custom(table) => table.interpolate(t),
        }
    }

    /// `f(t)`, with the window taken as closed.
    pub fn amplitude(&self, t: f64) -> f64 {
        let (a, b) = (self.window_start(), self.window_end());
        if t < a || t > b || a == b {
            0.0
        } else {
            self.inside(t)
        }
    }

    /// One-sided limit of `f` at `t`.
    pub fn amplitude_side(&self, t: f64, side: Side) -> f64 {
        let (a, b) = (self.window_start(), self.window_end());
        let on = match side {
            Side::Left => t > a && t <= b,
            Side::Right => t >= a && t < b,
        };
        if on {
            self.inside(t)
        } else {
            0.0
        }
    }

    /// Discontinuities of `f` (window edges).
    pub fn breakpoints(&self) -> [f64; 2] {
        [self.window_start(), self.window_end()]
    }

    /// The value of `f` if it is constant on the open interval `(a, b)`.
    pub fn constant_on(&self, a: f64, b: f64) -> Option<f64> {
        let (start, end) = (self.window_start(), self.window_end());
        let tol = 1e-12 * end.abs().max(b.abs()).max(1.0);
        if b <= start + tol || a >= end - tol || start == end {
            return Some(0.0);
        }
        match self {
            DriveSpec::Square { omega, .. } => (a >= start - tol && b <= end + tol).then_some(*omega),
            DriveSpec::Gaussian { .. } => None,
            DriveSpec::Custom(table) => {
                if a < start - tol || b > end + tol {
                    return None;
                }
                let k = table.times.partition_point(|&x| x <= a + tol).clamp(1, table.times.len() - 1);
                let within = b <= table.times[k] + tol;
                (within && table.values[k - 1] == table.values[k]).then_some(table.values[k])
            }
        }
    }

    fn snapped(&self, end: f64) -> Result<Self> {
        Ok(match self {
            DriveSpec::Square { omega, .. } => DriveSpec::Square { omega: *omega, t_pulse: end },
            DriveSpec::Gaussian { g0, t0, sigma, .. } => {
                DriveSpec::Gaussian { g0: *g0, t0: *t0, sigma: *sigma, t_end: end }
            }
            DriveSpec::Custom(table) => DriveSpec::Custom(table.with_end(end)?),
        })
    }
}

/// System operator `a_i` and rate `γ_i` of one waveguide.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveguideCoupling {
    operator: Operator,
    rate: f64,
}

impl WaveguideCoupling {
    pub fn new(operator: Operator, rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(invalid(format!("coupling rate must be >= 0, got {rate}")));
        }
        if !operator.is_finite() {
            return Err(invalid("coupling operator has non-finite entries"));
        }
        Ok(Self { operator, rate })
    }

    pub fn operator(&self) -> &Operator {
        &self.operator
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

/// Initial state of a two-level emitter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TlsInitial {
    Ground,
    Excited,
}

/// Parameters of the pumped two-mode pair source.
#[derive(Clone, Debug, PartialEq)]
pub struct PairSourceParams {
    pub g0: f64,
    pub t0: f64,
    pub sigma: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub n_max: usize,
    /// The pump is truncated at `t0 + window_sigmas·σ`.
    pub window_sigmas: f64,
}

impl PairSourceParams {
    pub fn build(&self) -> Result<SystemModel> {
        if self.n_max < 1 {
            return Err(invalid("pair source: n_max must be >= 1"));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(invalid("pair source: sigma must be > 0"));
        }
        if !(self.window_sigmas.is_finite() && self.window_sigmas >= 0.0) {
            return Err(invalid("pair source: window_sigmas must be >= 0"));
        }
        let a = destroy(self.n_max)?;
        let id = identity(self.n_max + 1);
        let a1 = tensor(&a, &id)?;
        let a2 = tensor(&id, &a)?;
        let dim = a1.dim();
        let v = &a1.matmul(&a2) + &a1.adjoint().matmul(&a2.adjoint());
        let t_end = (self.t0 + self.window_sigmas * self.sigma).max(0.0);
        let drive = DriveSpec::Gaussian { g0: self.g0, t0: self.t0, sigma: self.sigma, t_end };
        let couplings = vec![WaveguideCoupling::new(a1, self.gamma1)?, WaveguideCoupling::new(a2, self.gamma2)?];
        SystemModel::assemble(
            ModelKind::PairSource(self.clone()),
            Operator::zeros(dim),
            v,
            drive,
            couplings,
            StateVector::basis(dim, 0)?,
        )
    }
}

/// Family a model was built from.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelKind {
    Tls,
    PairSource(PairSourceParams),
    Custom,
}

/// Finite-dimensional driven system coupled to chiral waveguides.
#[derive(Clone, Debug)]
pub struct SystemModel {
    kind: ModelKind,
    h0: Operator,
    drive_operator: Operator,
    drive: DriveSpec,
    couplings: Vec<WaveguideCoupling>,
    initial_state: StateVector,
    decay: Operator,
    jumps: Vec<SparseOperator>,
    structure: Arc<BlockStructure>,
}

/// Two-level emitter driven by a square pulse of Rabi frequency `omega`.
pub fn build_tls(gamma: f64, omega: f64, t_pulse: f64, initial: TlsInitial) -> Result<SystemModel> {
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(invalid(format!("gamma must be >= 0, got {gamma}")));
    }
    let sigma = destroy(1)?;
    let v = (&sigma.adjoint() - &sigma).scale(I);
    let initial_state = match initial {
        TlsInitial::Ground => StateVector::basis(2, 0)?,
        TlsInitial::Excited => StateVector::basis(2, 1)?,
    };
    SystemModel::assemble(
        ModelKind::Tls,
        Operator::zeros(2),
        v,
        DriveSpec::Square { omega, t_pulse },
        vec![WaveguideCoupling::new(sigma, gamma)?],
        initial_state,
    )
}

/// Pair source with the default pump truncation at five widths past the peak.
pub fn build_pair_source(g0: f64, t0: f64, sigma: f64, gamma1: f64, gamma2: f64, n_max: usize) -> Result<SystemModel> {
    PairSourceParams { g0, t0, sigma, gamma1, gamma2, n_max, window_sigmas: 5.0 }.build()
}

impl SystemModel {
    /// General model `H0 + f(t)·V` with the given couplings.
    pub fn custom(
        h0: Operator,
        drive_operator: Operator,
        drive: DriveSpec,
        couplings: Vec<WaveguideCoupling>,
        initial_state: StateVector,
    ) -> Result<Self> {
        Self::assemble(ModelKind::Custom, h0, drive_operator, drive, couplings, initial_state)
    }

    fn assemble(
        kind: ModelKind,
        h0: Operator,
        drive_operator: Operator,
        drive: DriveSpec,
        couplings: Vec<WaveguideCoupling>,
        initial_state: StateVector,
    ) -> Result<Self> {
        drive.validate()?;
        let dim = h0.dim();
        if dim == 0 {
            return Err(invalid("model dimension must be positive"));
        }
        if drive_operator.dim() != dim || initial_state.dim() != dim {
            return Err(invalid("model operators and initial state must share one dimension"));
        }
        if couplings.iter().any(|c| c.operator.dim() != dim) {
            return Err(invalid("coupling operator dimension differs from the model"));
        }
        for (name, op) in [("H0", &h0), ("drive operator", &drive_operator)] {
            let tol = 1e-12 * op.max_norm().max(1.0);
            if !op.is_finite() || !op.is_hermitian(tol) {
                return Err(invalid(format!("{name} must be finite and Hermitian")));
            }
        }
        if initial_state.amplitudes().iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(invalid("initial state has non-finite amplitudes"));
        }
        if initial_state.norm_sqr() > 1.0 + 1e-12 {
            return Err(invalid("initial state norm exceeds 1"));
        }
        let mut decay = Operator::zeros(dim);
        for c in &couplings {
            let term = c.operator.adjoint().matmul(&c.operator).scale_real(c.rate / 2.0);
            decay = &decay + &term;
        }
        let jumps = couplings.iter().map(|c| SparseOperator::from_dense(&c.operator)).collect();
        let structure = Arc::new(BlockStructure::from_operators(dim, &[&h0, &drive_operator, &decay]));
        Ok(Self { kind, h0, drive_operator, drive, couplings, initial_state, decay, jumps, structure })
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.h0.dim()
    }

    pub fn h0(&self) -> &Operator {
        &self.h0
    }

    pub fn drive_operator(&self) -> &Operator {
        &self.drive_operator
    }

    pub fn drive(&self) -> &DriveSpec {
        &self.drive
    }

    pub fn couplings(&self) -> &[WaveguideCoupling] {
        &self.couplings
    }

    pub fn n_channels(&self) -> usize {
        self.couplings.len()
    }

    pub fn initial_state(&self) -> &StateVector {
        &self.initial_state
    }

    /// Drive horizon `T_P`.
    pub fn t_pulse(&self) -> f64 {
        self.drive.window_end()
    }

    /// `Σ_i (γ_i/2)·a_i†a_i`.
    pub fn decay_operator(&self) -> &Operator {
        &self.decay
    }

    /// Sparse copy of `a_i` (without the rate).
    pub fn jump(&self, channel: usize) -> &SparseOperator {
        &self.jumps[channel]
    }

    pub fn block_structure(&self) -> &Arc<BlockStructure> {
        &self.structure
    }

    /// `f(t)·V`.
    pub fn drive_term(&self, t: f64) -> Operator {
        self.drive_operator.scale_real(self.drive.amplitude(t))
    }

    /// `H0 + f·V − iΣ(γ_i/2)a_i†a_i` for a given drive value `f`.
    pub fn h_eff_at_drive(&self, f: f64) -> Operator {
        let mut h = &self.h0 + &self.drive_operator.scale_real(f);
        for (o, d) in h.data_mut().iter_mut().zip(self.decay.data()) {
            *o -= I * d;
        }
        h
    }

    pub fn h_eff(&self, t: f64) -> Operator {
        self.h_eff_at_drive(self.drive.amplitude(t))
    }

    /// Copy with the drive horizon moved to the nearest multiple of `dt`;
    /// returns the model and the absolute shift.
    pub fn snapped(&self, dt: f64) -> Result<(SystemModel, f64)> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid("snap: dt must be > 0"));
        }
        let end = self.t_pulse();
        let snapped_end = (end / dt).round() * dt;
        let mut model = self.clone();
        model.drive = self.drive.snapped(snapped_end)?;
        model.drive.validate()?;
        if let ModelKind::PairSource(p) = &mut model.kind {
            p.window_sigmas = (snapped_end - p.t0) / p.sigma;
        }
        Ok((model, (snapped_end - end).abs()))
    }

    pub(crate) fn rate(&self, channel: usize) -> f64 {
        self.couplings[channel].rate
    }
}
