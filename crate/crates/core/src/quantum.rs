//! Exact state-vector mechanics for two- and three-qubit systems.
//!
//! Basis states are indexed by bitstrings with qubit 0 as the most
//! significant bit, so for two qubits the order is `00, 01, 10, 11`.
//! A measurement outcome `+1` is "spin up" (bit 0 in the measured
//! eigenbasis) and `-1` is "spin down".

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, TAU};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

/// Complex amplitude of one basis state.
pub type Amplitude = Complex64;

/// Tolerance used for every exact-arithmetic check in this crate.
pub const EXACT_TOL: f64 = 1e-12;

/// Round-off below this magnitude is clipped to zero in distributions.
pub const CLIP_TOL: f64 = 1e-15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantumError {
    #[error("unsupported qubit count {0} (expected 2 or 3)")]
    QubitCount(usize),
    #[error("expected {expected} amplitudes, got {got}")]
    AmplitudeCount { expected: usize, got: usize },
    #[error("amplitudes must be finite")]
    NonFinite,
    #[error("state is not normalized (squared norm {0})")]
    NotNormalized(f64),
    #[error("expected {expected} measurement settings, got {got}")]
    SettingCount { expected: usize, got: usize },
    #[error("angle {0} is outside [0, 2pi)")]
    Angle(f64),
    #[error("invalid setting encoding {0:?}")]
    SettingEncoding(String),
    #[error("outcome has zero probability given the outcomes already issued")]
    ImpossibleCondition,
}

/// Which entangled resource to prepare.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntangledKind {
    /// `(|01> - |10>)/sqrt(2)`
    Singlet,
    /// `(|000> - |111>)/sqrt(2)`
    GhzMinus,
}

/// Pure state of 2 or 3 qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<Amplitude>,
}

impl StateVector {
    pub fn new(num_qubits: usize, amplitudes: Vec<Amplitude>) -> Result<Self, QuantumError> {
        if !(2..=3).contains(&num_qubits) {
            return Err(QuantumError::QubitCount(num_qubits));
        }
        let expected = 1 << num_qubits;
        if amplitudes.len() != expected {
            return Err(QuantumError::AmplitudeCount {
                expected,
                got: amplitudes.len(),
            });
        }
        if amplitudes.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(QuantumError::NonFinite);
        }
        let state = StateVector {
            num_qubits,
            amplitudes,
        };
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > EXACT_TOL {
            return Err(QuantumError::NotNormalized(norm));
        }
        Ok(state)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Amplitude] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Applies the single-qubit operator `op` to `qubit`, in place, without
    /// renormalizing.
    fn apply_local(amps: &mut [Amplitude], num_qubits: usize, qubit: usize, op: &Matrix2) {
        let stride = 1 << (num_qubits - 1 - qubit);
        for base in 0..amps.len() {
            if base & stride != 0 {
                continue;
            }
            let a0 = amps[base];
            let a1 = amps[base | stride];
            amps[base] = op[0][0] * a0 + op[0][1] * a1;
            amps[base | stride] = op[1][0] * a0 + op[1][1] * a1;
        }
    }
}

/// Prepares one of the two shared resources used by the games.
pub fn make_entangled_state(kind: EntangledKind) -> StateVector {
    let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    match kind {
        EntangledKind::Singlet => StateVector {
            num_qubits: 2,
            amplitudes: vec![zero, h, -h, zero],
        },
        EntangledKind::GhzMinus => {
            let mut amplitudes = vec![zero; 8];
            amplitudes[0] = h;
            amplitudes[7] = -h;
            StateVector {
                num_qubits: 3,
                amplitudes,
            }
        }
    }
}

/// A spin measurement direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeasurementSetting {
    PauliX,
    PauliY,
    /// Direction in the x-z plane at `theta` radians from the z axis.
    PlanarXZ(f64),
}

impl MeasurementSetting {
    /// Builds a planar setting, reducing the angle into `[0, 2pi)`.
    pub fn planar(theta: f64) -> Self {
        let mut t = theta.rem_euclid(TAU);
        if t >= TAU {
            t = 0.0;
        }
        MeasurementSetting::PlanarXZ(t)
    }

    pub fn validate(&self) -> Result<(), QuantumError> {
        match *self {
            MeasurementSetting::PlanarXZ(t) if !(t.is_finite() && (0.0..TAU).contains(&t)) => {
                Err(QuantumError::Angle(t))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for MeasurementSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasurementSetting::PauliX => f.write_str("X"),
            MeasurementSetting::PauliY => f.write_str("Y"),
            MeasurementSetting::PlanarXZ(t) => write!(f, "xz:{t:?}"),
        }
    }
}

impl FromStr for MeasurementSetting {
    type Err = QuantumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let setting = match s {
            "X" => MeasurementSetting::PauliX,
            "Y" => MeasurementSetting::PauliY,
            _ => {
                let theta = s
                    .strip_prefix("xz:")
                    .and_then(|t| t.parse::<f64>().ok())
                    .ok_or_else(|| QuantumError::SettingEncoding(s.to_string()))?;
                MeasurementSetting::PlanarXZ(theta)
            }
        };
        setting.validate()?;
        Ok(setting)
    }
}

pub type Matrix2 = [[Amplitude; 2]; 2];

/// The ±1-valued observable measured for a setting.
pub fn setting_observable(s: MeasurementSetting) -> Matrix2 {
    let c = |re: f64, im: f64| Complex64::new(re, im);
    match s {
        MeasurementSetting::PauliX => [[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]],
        MeasurementSetting::PauliY => [[c(0.0, 0.0), c(0.0, -1.0)], [c(0.0, 1.0), c(0.0, 0.0)]],
        MeasurementSetting::PlanarXZ(theta) => {
            // cos(pi/2) is not exactly zero in floating point; snap the
            // axis-aligned angles so the x axis reproduces PauliX bit for bit.
            let (sin, cos) = snapped_sin_cos(theta);
            [[c(cos, 0.0), c(sin, 0.0)], [c(sin, 0.0), c(-cos, 0.0)]]
        }
    }
}

fn snapped_sin_cos(theta: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    let snap = |v: f64| if v.abs() < 1e-15 { 0.0 } else { v };
    (snap(s), snap(c))
}

/// Projector onto the eigenspace with eigenvalue `outcome` (±1).
fn projector(s: MeasurementSetting, outcome: Outcome) -> Matrix2 {
    let obs = setting_observable(s);
    let sign = f64::from(outcome.value());
    let half = Complex64::new(0.5, 0.0);
    let mut p = [[Complex64::new(0.0, 0.0); 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            let id = if r == c { 1.0 } else { 0.0 };
            p[r][c] = half * (Complex64::new(id, 0.0) + obs[r][c] * sign);
        }
    }
    p
}

/// A single ±1 measurement result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Outcome {
    Up,
    Down,
}

impl Outcome {
    pub fn value(self) -> i8 {
        match self {
            Outcome::Up => 1,
            Outcome::Down => -1,
        }
    }

    pub fn from_value(v: i64) -> Option<Self> {
        match v {
            1 => Some(Outcome::Up),
            -1 => Some(Outcome::Down),
            _ => None,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Outcome::Up => Outcome::Down,
            Outcome::Down => Outcome::Up,
        }
    }
}

/// One outcome per qubit.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OutcomeTuple(pub Vec<Outcome>);

impl OutcomeTuple {
    /// All 2^n tuples, `+1` before `-1`, qubit 0 most significant.
    pub fn all(n: usize) -> Vec<OutcomeTuple> {
        (0..1usize << n)
            .map(|bits| {
                OutcomeTuple(
                    (0..n)
                        .map(|q| {
                            if bits >> (n - 1 - q) & 1 == 0 {
                                Outcome::Up
                            } else {
                                Outcome::Down
                            }
                        })
                        .collect(),
                )
            })
            .collect()
    }

    pub fn product(&self) -> i8 {
        self.0.iter().map(|o| o.value()).product()
    }
}

/// Born-rule law over the outcome tuples of one simultaneous measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    entries: BTreeMap<OutcomeTuple, f64>,
}

impl JointDistribution {
    /// Builds a distribution from explicit entries, checking the sum contract.
    pub fn from_entries(
        entries: impl IntoIterator<Item = (OutcomeTuple, f64)>,
    ) -> Result<Self, QuantumError> {
        let entries: BTreeMap<_, _> = entries.into_iter().collect();
        let total: f64 = entries.values().sum();
        if entries.values().any(|p| *p < 0.0 || !p.is_finite()) || (total - 1.0).abs() > EXACT_TOL
        {
            return Err(QuantumError::NotNormalized(total));
        }
        Ok(JointDistribution { entries })
    }

    pub fn prob(&self, t: &OutcomeTuple) -> f64 {
        self.entries.get(t).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&OutcomeTuple, f64)> {
        self.entries.iter().map(|(t, p)| (t, *p))
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }

    /// Mass on tuples whose outcome product equals `sign`.
    pub fn parity_mass(&self, sign: i8) -> f64 {
        self.iter()
            .filter(|(t, _)| t.product() == sign)
            .map(|(_, p)| p)
            .sum()
    }
}

fn apply_projectors(
    state: &StateVector,
    measured: &[(usize, MeasurementSetting, Outcome)],
) -> Vec<Amplitude> {
    let mut amps = state.amplitudes.clone();
    for &(qubit, setting, outcome) in measured {
        StateVector::apply_local(&mut amps, state.num_qubits, qubit, &projector(setting, outcome));
    }
    amps
}

fn clip(p: f64) -> f64 {
    debug_assert!(p >= -CLIP_TOL, "negative probability {p}");
    p.max(0.0)
}

/// Born-rule distribution for measuring every qubit simultaneously.
pub fn joint_distribution(
    state: &StateVector,
    settings: &[MeasurementSetting],
) -> Result<JointDistribution, QuantumError> {
    if settings.len() != state.num_qubits {
        return Err(QuantumError::SettingCount {
            expected: state.num_qubits,
            got: settings.len(),
        });
    }
    for s in settings {
        s.validate()?;
    }
    let entries = OutcomeTuple::all(state.num_qubits)
        .into_iter()
        .map(|tuple| {
            let measured: Vec<_> = tuple
                .0
                .iter()
                .enumerate()
                .map(|(q, &o)| (q, settings[q], o))
                .collect();
            let amps = apply_projectors(state, &measured);
            let p = clip(amps.iter().map(|a| a.norm_sqr()).sum());
            (tuple, p)
        })
        .collect();
    Ok(JointDistribution { entries })
}

/// Draws one tuple by inverse CDF in tuple order.
pub fn sample_outcome<R: Rng + ?Sized>(d: &JointDistribution, rng: &mut R) -> OutcomeTuple {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = None;
    for (t, p) in d.iter() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = Some(t);
        if u < acc {
            return t.clone();
        }
    }
    // u landed in the round-off gap above the accumulated total.
    last.expect("distribution has positive mass").clone()
}

/// Measures the qubits of a shared state one at a time, each draw conditioned
/// on the outcomes already issued.
///
/// The induced law over all qubits equals [`joint_distribution`] for the same
/// settings. Only the settings of qubits measured so far are ever consulted,
/// so a caller does not need to know the other parties' choices in advance.
#[derive(Debug, Clone)]
pub struct SequentialMeasurement<'a> {
    state: &'a StateVector,
    measured: Vec<(usize, MeasurementSetting, Outcome)>,
    /// Squared norm of the state projected onto the issued outcomes.
    weight: f64,
}

/// Detached state of a [`SequentialMeasurement`].
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementHistory {
    measured: Vec<(usize, MeasurementSetting, Outcome)>,
    weight: f64,
}

impl Default for MeasurementHistory {
    fn default() -> Self {
        MeasurementHistory {
            measured: Vec::new(),
            weight: 1.0,
        }
    }
}

impl<'a> SequentialMeasurement<'a> {
    pub fn new(state: &'a StateVector) -> Self {
        SequentialMeasurement {
            state,
            measured: Vec::with_capacity(state.num_qubits),
            weight: 1.0,
        }
    }

    /// Resumes a measurement sequence saved with [`Self::into_parts`].
    pub fn from_parts(state: &'a StateVector, parts: MeasurementHistory) -> Self {
        SequentialMeasurement {
            state,
            measured: parts.measured,
            weight: parts.weight,
        }
    }

    pub fn into_parts(self) -> MeasurementHistory {
        MeasurementHistory {
            measured: self.measured,
            weight: self.weight,
        }
    }

    pub fn is_measured(&self, qubit: usize) -> bool {
        self.measured.iter().any(|(q, _, _)| *q == qubit)
    }

    pub fn issued(&self) -> &[(usize, MeasurementSetting, Outcome)] {
        &self.measured
    }

    /// Probability of `Up` for `qubit` given everything issued so far.
    pub fn prob_up(&self, qubit: usize, setting: MeasurementSetting) -> f64 {
        let mut with_next = self.measured.clone();
        with_next.push((qubit, setting, Outcome::Up));
        let amps = apply_projectors(self.state, &with_next);
        let up: f64 = clip(amps.iter().map(|a| a.norm_sqr()).sum());
        (up / self.weight).clamp(0.0, 1.0)
    }

    /// Measures `qubit`, drawing one uniform from `rng`.
    ///
    /// Panics if the qubit index is out of range or already measured.
    pub fn measure<R: Rng + ?Sized>(
        &mut self,
        qubit: usize,
        setting: MeasurementSetting,
        rng: &mut R,
    ) -> Outcome {
        assert!(qubit < self.state.num_qubits, "qubit {qubit} out of range");
        assert!(!self.is_measured(qubit), "qubit {qubit} already measured");
        let p_up = self.prob_up(qubit, setting);
        let u: f64 = rng.gen();
        let outcome = if u < p_up { Outcome::Up } else { Outcome::Down };
        let p = if outcome == Outcome::Up { p_up } else { 1.0 - p_up };
        self.measured.push((qubit, setting, outcome));
        self.weight *= p;
        outcome
    }
}
