//! Strategy representations, exact win-probability evaluation and
//! exhaustive classical optimization.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use num_rational::Ratio;
use rayon::prelude::*;
use thiserror::Error;

use crate::games::{validate_beads, Answer, GameError, GameKind, GameSpec, GhzQuestion, Question};
use crate::quantum::{
    joint_distribution, make_entangled_state, EntangledKind, MeasurementSetting, Outcome,
    QuantumError, StateVector, EXACT_TOL,
};

/// Default bound on the number of deterministic profiles brute force visits.
pub const DEFAULT_PROFILE_CAP: u64 = 1 << 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrategyError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error("profile has {got} players, game needs {expected}")]
    PlayerCount { expected: usize, got: usize },
    #[error("player {player} has no answer for question {question}")]
    MissingQuestion { player: usize, question: Question },
    #[error("mixture weights must be non-negative and sum to 1 (sum {0})")]
    MixtureWeights(f64),
    #[error("search space exceeds cap: 2^{slots} profiles > {cap}")]
    SearchSpaceExceedsCap { slots: u32, cap: u64 },
    #[error("strategy file: {0}")]
    Parse(String),
    #[error("player needs a {0} resource")]
    MissingResource(&'static str),
    #[error("measurement failed: {0}")]
    Measurement(String),
}

/// One player's pre-agreed answer for every question it may receive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerTable(pub BTreeMap<Question, Answer>);

impl AnswerTable {
    pub fn get(&self, q: Question) -> Option<Answer> {
        self.0.get(&q).copied()
    }
}

/// A local-hidden-variable profile without randomness.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeterministicStrategy {
    pub tables: Vec<AnswerTable>,
}

impl DeterministicStrategy {
    /// Every player answers `answer` to everything.
    pub fn constant(spec: &GameSpec, answer: Answer) -> Self {
        DeterministicStrategy {
            tables: spec
                .alphabets
                .iter()
                .map(|alpha| AnswerTable(alpha.iter().map(|&q| (q, answer)).collect()))
                .collect(),
        }
    }

    /// Both players hold the same coloring `G R G R ...`.
    pub fn alternating_necklace(n: u32) -> Result<Self, StrategyError> {
        validate_beads(n)?;
        let table = AnswerTable(
            (1..=n)
                .map(|i| {
                    let a = if i % 2 == 1 { Answer::GREEN } else { Answer::RED };
                    (Question::Bead(i), a)
                })
                .collect(),
        );
        Ok(DeterministicStrategy {
            tables: vec![table.clone(), table],
        })
    }

    fn check(&self, spec: &GameSpec) -> Result<(), StrategyError> {
        if self.tables.len() != spec.num_players {
            return Err(StrategyError::PlayerCount {
                expected: spec.num_players,
                got: self.tables.len(),
            });
        }
        for (player, (table, alphabet)) in self.tables.iter().zip(&spec.alphabets).enumerate() {
            if let Some(&q) = alphabet.iter().find(|q| !table.0.contains_key(q)) {
                return Err(StrategyError::MissingQuestion { player, question: q });
            }
        }
        Ok(())
    }

    /// Exact value as a fraction of the interrogator's weight total.
    pub fn win_ratio(&self, spec: &GameSpec) -> Result<Ratio<u64>, StrategyError> {
        self.check(spec)?;
        let mut wins = 0;
        for (t, &w) in spec.legal_tuples.iter().zip(&spec.weights) {
            let answers: Vec<Answer> = t
                .0
                .iter()
                .zip(&self.tables)
                .map(|(&q, table)| table.0[&q])
                .collect();
            if spec.predicate(t, &answers).is_win() {
                wins += w;
            }
        }
        Ok(Ratio::new(wins, spec.weight_total))
    }

    /// Parses the plain-text strategy format: one line per player, a G/R
    /// string for the necklace or `X:+1 Y:-1` for GHZ. Blank lines and `#`
    /// comments are ignored.
    pub fn parse_text(spec: &GameSpec, text: &str) -> Result<Self, StrategyError> {
        let lines: Vec<&str> = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .collect();
        if lines.len() != spec.num_players {
            return Err(StrategyError::Parse(format!(
                "expected {} player lines, found {}",
                spec.num_players,
                lines.len()
            )));
        }
        let tables = lines
            .iter()
            .map(|line| match spec.kind {
                GameKind::Necklace { n } => parse_coloring(line, n),
                GameKind::Ghz => parse_ghz_line(line),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let strategy = DeterministicStrategy { tables };
        strategy.check(spec)?;
        Ok(strategy)
    }

    pub fn to_text(&self, spec: &GameSpec) -> String {
        let mut out = String::new();
        for table in &self.tables {
            match spec.kind {
                GameKind::Necklace { .. } => {
                    out.extend(table.0.values().map(|a| a.color_char()));
                }
                GameKind::Ghz => {
                    let parts: Vec<String> = table
                        .0
                        .iter()
                        .map(|(q, a)| format!("{q}:{:+}", a.value()))
                        .collect();
                    out.push_str(&parts.join(" "));
                }
            }
            out.push('\n');
        }
        out
    }
}

fn parse_coloring(line: &str, n: u32) -> Result<AnswerTable, StrategyError> {
    if line.chars().count() != n as usize {
        return Err(StrategyError::Parse(format!(
            "coloring {line:?} has {} beads, expected {n}",
            line.chars().count()
        )));
    }
    line.chars()
        .zip(1..=n)
        .map(|(c, i)| {
            Answer::from_color_char(c)
                .map(|a| (Question::Bead(i), a))
                .ok_or_else(|| StrategyError::Parse(format!("bad color {c:?} at bead {i}")))
        })
        .collect::<Result<BTreeMap<_, _>, _>>()
        .map(AnswerTable)
}

fn parse_ghz_line(line: &str) -> Result<AnswerTable, StrategyError> {
    let mut table = BTreeMap::new();
    for item in line.split_whitespace() {
        let (q, a) = item
            .split_once(':')
            .ok_or_else(|| StrategyError::Parse(format!("expected Q:A, got {item:?}")))?;
        let q = match q {
            "X" => Question::Ghz(GhzQuestion::X),
            "Y" => Question::Ghz(GhzQuestion::Y),
            _ => return Err(StrategyError::Parse(format!("unknown GHZ question {q:?}"))),
        };
        let a = a
            .parse::<i64>()
            .ok()
            .and_then(Answer::from_value)
            .ok_or_else(|| StrategyError::Parse(format!("answer must be +1 or -1, got {a:?}")))?;
        if table.insert(q, a).is_some() {
            return Err(StrategyError::Parse(format!("duplicate question {q}")));
        }
    }
    Ok(AnswerTable(table))
}

/// Deterministic profiles mixed by a shared random variable.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedRandomClassical {
    pub members: Vec<(f64, DeterministicStrategy)>,
    pub seed: u64,
}

impl SharedRandomClassical {
    fn check(&self, spec: &GameSpec) -> Result<(), StrategyError> {
        let sum: f64 = self.members.iter().map(|(w, _)| *w).sum();
        if self.members.is_empty()
            || self.members.iter().any(|(w, _)| w.is_nan() || *w < 0.0)
            || (sum - 1.0).abs() > EXACT_TOL
        {
            return Err(StrategyError::MixtureWeights(sum));
        }
        self.members.iter().try_for_each(|(_, m)| m.check(spec))
    }

    /// Index of the member selected by a uniform draw `u` in `[0, 1)`.
    pub fn pick(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (i, (w, _)) in self.members.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        self.members.len() - 1
    }
}

/// Maps a measurement outcome to the answer reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutcomeMap {
    pub up: Answer,
    pub down: Answer,
}

impl OutcomeMap {
    pub const IDENTITY: OutcomeMap = OutcomeMap {
        up: Answer::Plus,
        down: Answer::Minus,
    };

    pub fn apply(self, o: Outcome) -> Answer {
        match o {
            Outcome::Up => self.up,
            Outcome::Down => self.down,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumStrategy {
    pub shared_state: StateVector,
    pub settings: Vec<BTreeMap<Question, MeasurementSetting>>,
    pub outcome_maps: Vec<OutcomeMap>,
}

impl QuantumStrategy {
    fn check(&self, spec: &GameSpec) -> Result<(), StrategyError> {
        let players = spec.num_players;
        for got in [
            self.shared_state.num_qubits(),
            self.settings.len(),
            self.outcome_maps.len(),
        ] {
            if got != players {
                return Err(StrategyError::PlayerCount { expected: players, got });
            }
        }
        for (player, (settings, alphabet)) in self.settings.iter().zip(&spec.alphabets).enumerate() {
            if let Some(&q) = alphabet.iter().find(|q| !settings.contains_key(q)) {
                return Err(StrategyError::MissingQuestion { player, question: q });
            }
        }
        Ok(())
    }

    pub fn setting(&self, player: usize, q: Question) -> Option<MeasurementSetting> {
        self.settings.get(player)?.get(&q).copied()
    }
}

/// GHZ state, X question measured as sigma_x and Y as sigma_y, up answers +1.
pub fn canonical_quantum_ghz() -> QuantumStrategy {
    let settings: BTreeMap<Question, MeasurementSetting> = [
        (Question::Ghz(GhzQuestion::X), MeasurementSetting::PauliX),
        (Question::Ghz(GhzQuestion::Y), MeasurementSetting::PauliY),
    ]
    .into_iter()
    .collect();
    QuantumStrategy {
        shared_state: make_entangled_state(EntangledKind::GhzMinus),
        settings: vec![settings; 3],
        outcome_maps: vec![OutcomeMap::IDENTITY; 3],
    }
}

/// Singlet; bead `i` is measured along the x-z direction at angle `pi*i/n`
/// by both players, up answers green.
pub fn canonical_quantum_necklace(n: u32) -> Result<QuantumStrategy, StrategyError> {
    validate_beads(n)?;
    let settings: BTreeMap<Question, MeasurementSetting> = (1..=n)
        .map(|i| {
            let theta = PI * f64::from(i) / f64::from(n);
            (Question::Bead(i), MeasurementSetting::planar(theta))
        })
        .collect();
    let map = OutcomeMap {
        up: Answer::GREEN,
        down: Answer::RED,
    };
    Ok(QuantumStrategy {
        shared_state: make_entangled_state(EntangledKind::Singlet),
        settings: vec![settings; 2],
        outcome_maps: vec![map; 2],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum StrategyProfile {
    Deterministic(DeterministicStrategy),
    SharedRandom(SharedRandomClassical),
    Quantum(QuantumStrategy),
}

impl StrategyProfile {
    pub fn check(&self, spec: &GameSpec) -> Result<(), StrategyError> {
        match self {
            StrategyProfile::Deterministic(d) => d.check(spec),
            StrategyProfile::SharedRandom(s) => s.check(spec),
            StrategyProfile::Quantum(q) => q.check(spec),
        }
    }

    pub fn canonical_quantum(kind: GameKind) -> Result<Self, StrategyError> {
        Ok(StrategyProfile::Quantum(match kind {
            GameKind::Ghz => canonical_quantum_ghz(),
            GameKind::Necklace { n } => canonical_quantum_necklace(n)?,
        }))
    }

    /// The part of the profile player `k` carries into its room.
    pub fn player(&self, k: usize) -> PlayerStrategy {
        match self {
            StrategyProfile::Deterministic(d) => PlayerStrategy::Table(d.tables[k].clone()),
            StrategyProfile::SharedRandom(s) => {
                PlayerStrategy::Mixed(s.members.iter().map(|(_, m)| m.tables[k].clone()).collect())
            }
            StrategyProfile::Quantum(q) => PlayerStrategy::Quantum {
                settings: q.settings[k].clone(),
                outcome_map: q.outcome_maps[k],
            },
        }
    }

    pub fn players(&self, spec: &GameSpec) -> Vec<PlayerStrategy> {
        (0..spec.num_players).map(|k| self.player(k)).collect()
    }
}

/// A device holding one party's share of an entangled resource.
pub trait LocalQubit {
    fn measure(&mut self, setting: MeasurementSetting) -> Result<Outcome, StrategyError>;
}

/// What a player has in its room besides the question.
pub enum LocalResource<'a> {
    None,
    /// Value of the shared random variable agreed before separation.
    SharedIndex(usize),
    Qubit(&'a mut dyn LocalQubit),
}

/// One player's strategy, detached from the rest of the profile.
#[derive(Debug, Clone, PartialEq)]
pub enum PlayerStrategy {
    Table(AnswerTable),
    Mixed(Vec<AnswerTable>),
    Quantum {
        settings: BTreeMap<Question, MeasurementSetting>,
        outcome_map: OutcomeMap,
    },
}

impl PlayerStrategy {
    /// Computes this player's answer from its own question and its own
    /// local resource only.
    pub fn answer(&self, question: Question, resource: LocalResource<'_>) -> Result<Answer, StrategyError> {
        let missing = || StrategyError::MissingQuestion { player: 0, question };
        match (self, resource) {
            (PlayerStrategy::Table(t), _) => t.get(question).ok_or_else(missing),
            (PlayerStrategy::Mixed(tables), LocalResource::SharedIndex(i)) => tables
                .get(i)
                .and_then(|t| t.get(question))
                .ok_or_else(missing),
            (PlayerStrategy::Mixed(_), _) => Err(StrategyError::MissingResource("shared random")),
            (PlayerStrategy::Quantum { settings, outcome_map }, LocalResource::Qubit(qubit)) => {
                let setting = settings.get(&question).copied().ok_or_else(missing)?;
                Ok(outcome_map.apply(qubit.measure(setting)?))
            }
            (PlayerStrategy::Quantum { .. }, _) => Err(StrategyError::MissingResource("qubit")),
        }
    }

    pub fn setting(&self, question: Question) -> Option<MeasurementSetting> {
        match self {
            PlayerStrategy::Quantum { settings, .. } => settings.get(&question).copied(),
            _ => None,
        }
    }
}

/// Exact probability that the profile wins one round against the game's
/// question distribution.
pub fn exact_win_probability(spec: &GameSpec, profile: &StrategyProfile) -> Result<f64, StrategyError> {
    profile.check(spec)?;
    match profile {
        StrategyProfile::Deterministic(d) => {
            let r = d.win_ratio(spec)?;
            Ok(*r.numer() as f64 / *r.denom() as f64)
        }
        StrategyProfile::SharedRandom(s) => {
            let mut total = 0.0;
            for (w, member) in &s.members {
                let r = member.win_ratio(spec)?;
                total += w * (*r.numer() as f64 / *r.denom() as f64);
            }
            Ok(total.clamp(0.0, 1.0))
        }
        StrategyProfile::Quantum(q) => {
            let mut total = 0.0;
            for (i, t) in spec.legal_tuples.iter().enumerate() {
                let settings: Vec<MeasurementSetting> = t
                    .0
                    .iter()
                    .enumerate()
                    .map(|(k, &question)| q.settings[k][&question])
                    .collect();
                let dist = joint_distribution(&q.shared_state, &settings)?;
                let win_mass: f64 = dist
                    .iter()
                    .filter(|(outcomes, _)| {
                        let answers: Vec<Answer> = outcomes
                            .0
                            .iter()
                            .zip(&q.outcome_maps)
                            .map(|(&o, map)| map.apply(o))
                            .collect();
                        spec.predicate(t, &answers).is_win()
                    })
                    .map(|(_, p)| p)
                    .sum();
                total += spec.tuple_probability(i) * win_mass;
            }
            Ok(total.clamp(0.0, 1.0))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalOptimum {
    pub value: Ratio<u64>,
    pub witness: DeterministicStrategy,
    pub profiles_searched: u64,
}

impl ClassicalOptimum {
    pub fn value_f64(&self) -> f64 {
        *self.value.numer() as f64 / *self.value.denom() as f64
    }
}

/// Enumerates every deterministic profile and returns the best value with
/// the lexicographically first maximizer.
///
/// A profile is indexed by concatenating the players' answer tables (player
/// order, then each player's alphabet order) with `+1` encoded as 0 and the
/// first slot as the most significant bit.
pub fn brute_force_classical_optimum(spec: &GameSpec, cap: u64) -> Result<ClassicalOptimum, StrategyError> {
    let slots: Vec<(usize, Question)> = spec
        .alphabets
        .iter()
        .enumerate()
        .flat_map(|(p, alpha)| alpha.iter().map(move |&q| (p, q)))
        .collect();
    let slot_count = slots.len() as u32;
    let total = if slot_count < 64 { 1u64 << slot_count } else { u64::MAX };
    if slot_count >= 64 || total > cap {
        return Err(StrategyError::SearchSpaceExceedsCap { slots: slot_count, cap });
    }

    // For each legal tuple: the bit shift of each player's slot, and the
    // weighted win value for every combination of answer bits.
    let players = spec.num_players;
    let compiled: Vec<(Vec<u32>, Vec<u64>)> = spec
        .legal_tuples
        .iter()
        .zip(&spec.weights)
        .map(|(t, &w)| {
            let shifts = t
                .0
                .iter()
                .enumerate()
                .map(|(p, q)| {
                    let pos = slots.iter().position(|s| *s == (p, *q)).expect("question in alphabet");
                    slot_count - 1 - pos as u32
                })
                .collect();
            let table = (0..1usize << players)
                .map(|combo| {
                    let answers: Vec<Answer> = (0..players)
                        .map(|p| if combo >> p & 1 == 0 { Answer::Plus } else { Answer::Minus })
                        .collect();
                    if spec.predicate(t, &answers).is_win() {
                        w
                    } else {
                        0
                    }
                })
                .collect();
            (shifts, table)
        })
        .collect();

    let score = |idx: u64| -> u64 {
        compiled
            .iter()
            .map(|(shifts, table)| {
                let combo = shifts
                    .iter()
                    .enumerate()
                    .fold(0usize, |acc, (p, &s)| acc | (((idx >> s) & 1) as usize) << p);
                table[combo]
            })
            .sum()
    };

    let (best, best_idx) = (0..total)
        .into_par_iter()
        .map(|idx| (score(idx), idx))
        .reduce(
            || (0, u64::MAX),
            |a, b| {
                if a.0 > b.0 || (a.0 == b.0 && a.1 < b.1) {
                    a
                } else {
                    b
                }
            },
        );

    let mut tables = vec![AnswerTable(BTreeMap::new()); players];
    for (pos, &(p, q)) in slots.iter().enumerate() {
        let bit = (best_idx >> (slot_count - 1 - pos as u32)) & 1;
        tables[p].0.insert(q, if bit == 0 { Answer::Plus } else { Answer::Minus });
    }
    Ok(ClassicalOptimum {
        value: Ratio::new(best, spec.weight_total),
        witness: DeterministicStrategy { tables },
        profiles_searched: total,
    })
}

/// The best classical profile: the brute-force witness when the search fits
/// under `cap`, otherwise the alternating coloring for the necklace.
pub fn classical_best(spec: &GameSpec, cap: u64) -> Result<DeterministicStrategy, StrategyError> {
    match brute_force_classical_optimum(spec, cap) {
        Ok(opt) => Ok(opt.witness),
        Err(StrategyError::SearchSpaceExceedsCap { .. }) if matches!(spec.kind, GameKind::Necklace { .. }) => {
            DeterministicStrategy::alternating_necklace(spec.kind.beads().unwrap_or_default())
        }
        Err(e) => Err(e),
    }
}

/// Per-round and per-session success curves for the necklace game.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormCurves {
    pub classical_round_win: f64,
    pub quantum_round_fail: f64,
    /// `(1 - 1/N)^(5N)`
    pub eq1_classical_session: f64,
    /// `(1 - sin^2(pi/2N))^(5N)`
    pub eq2_quantum_session: f64,
}

pub fn closed_form_curves(n: u32) -> Result<ClosedFormCurves, StrategyError> {
    validate_beads(n)?;
    let nf = f64::from(n);
    let rounds = 5 * n as i32;
    let classical_round_win = 1.0 - 1.0 / nf;
    let quantum_round_fail = (PI / (2.0 * nf)).sin().powi(2);
    Ok(ClosedFormCurves {
        classical_round_win,
        quantum_round_fail,
        eq1_classical_session: classical_round_win.powi(rounds),
        eq2_quantum_session: (1.0 - quantum_round_fail).powi(rounds),
    })
}

/// Renders a witness in the loadable text format with a short header.
pub fn describe_witness(spec: &GameSpec, opt: &ClassicalOptimum) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# {} classical optimum {}/{} over {} profiles",
        spec.kind.name(),
        opt.value.numer(),
        opt.value.denom(),
        opt.profiles_searched
    );
    s.push_str(&opt.witness.to_text(spec));
    s
}
