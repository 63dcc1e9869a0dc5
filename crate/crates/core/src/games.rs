//! The two games: question alphabets, the interrogator's distribution, and
//! the win predicates.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GameError {
    #[error("necklace bead count must be even, got {0}")]
    OddBeads(u32),
    #[error("necklace needs at least 4 beads, got {0}")]
    TooFewBeads(u32),
    #[error("question tuple {0} is not legal for this game")]
    IllegalTuple(String),
    #[error("expected {expected} answers, got {got}")]
    AnswerCount { expected: usize, got: usize },
    #[error("invalid question encoding {0:?}")]
    QuestionEncoding(String),
    #[error("invalid answer {0:?}")]
    AnswerEncoding(String),
    #[error("unknown game {0:?}")]
    UnknownGame(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GhzQuestion {
    X,
    Y,
}

/// A single question put to one player.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Question {
    Ghz(GhzQuestion),
    /// 1-based bead index.
    Bead(u32),
}

impl fmt::Display for Question {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Question::Ghz(GhzQuestion::X) => f.write_str("X"),
            Question::Ghz(GhzQuestion::Y) => f.write_str("Y"),
            Question::Bead(i) => write!(f, "bead:{i}"),
        }
    }
}

impl FromStr for Question {
    type Err = GameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "X" => Ok(Question::Ghz(GhzQuestion::X)),
            "Y" => Ok(Question::Ghz(GhzQuestion::Y)),
            _ => s
                .strip_prefix("bead:")
                .and_then(|i| i.parse().ok())
                .filter(|&i| i >= 1)
                .map(Question::Bead)
                .ok_or_else(|| GameError::QuestionEncoding(s.to_string())),
        }
    }
}

/// One question per player.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QuestionTuple(pub Vec<Question>);

impl fmt::Display for QuestionTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|q| q.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// A player's reply. For the necklace, `Plus` renders as green and `Minus`
/// as red.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Answer {
    Plus,
    Minus,
}

impl Answer {
    pub const GREEN: Answer = Answer::Plus;
    pub const RED: Answer = Answer::Minus;

    pub fn value(self) -> i8 {
        match self {
            Answer::Plus => 1,
            Answer::Minus => -1,
        }
    }

    pub fn from_value(v: i64) -> Option<Self> {
        match v {
            1 => Some(Answer::Plus),
            -1 => Some(Answer::Minus),
            _ => None,
        }
    }

    pub fn color_char(self) -> char {
        match self {
            Answer::Plus => 'G',
            Answer::Minus => 'R',
        }
    }

    pub fn from_color_char(c: char) -> Option<Self> {
        match c {
            'G' | 'g' => Some(Answer::GREEN),
            'R' | 'r' => Some(Answer::RED),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Win,
    Lose,
}

impl Verdict {
    pub fn is_win(self) -> bool {
        self == Verdict::Win
    }
}

/// Game kind and parameters, in the form used by description documents:
/// `{"game":"ghz"}` or `{"game":"necklace","n":100}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "game", rename_all = "lowercase")]
pub enum GameKind {
    Ghz,
    Necklace { n: u32 },
}

impl GameKind {
    pub fn spec(self) -> Result<GameSpec, GameError> {
        match self {
            GameKind::Ghz => Ok(ghz_spec()),
            GameKind::Necklace { n } => necklace_spec(n),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GameKind::Ghz => "ghz",
            GameKind::Necklace { .. } => "necklace",
        }
    }

    pub fn beads(self) -> Option<u32> {
        match self {
            GameKind::Ghz => None,
            GameKind::Necklace { n } => Some(n),
        }
    }
}

pub fn validate_beads(n: u32) -> Result<(), GameError> {
    if !n.is_multiple_of(2) {
        return Err(GameError::OddBeads(n));
    }
    if n < 4 {
        return Err(GameError::TooFewBeads(n));
    }
    Ok(())
}

/// Full description of a game as the interrogator plays it.
#[derive(Debug, Clone, PartialEq)]
pub struct GameSpec {
    pub kind: GameKind,
    pub num_players: usize,
    pub legal_tuples: Vec<QuestionTuple>,
    /// Integer weight per legal tuple; probability is `weight / weight_total`.
    pub weights: Vec<u64>,
    pub weight_total: u64,
    /// Questions each player can receive, in canonical order.
    pub alphabets: Vec<Vec<Question>>,
    pub session_rounds_default: u64,
}

impl GameSpec {
    pub fn tuple_probability(&self, index: usize) -> f64 {
        self.weights[index] as f64 / self.weight_total as f64
    }

    pub fn is_legal(&self, q: &QuestionTuple) -> bool {
        self.legal_tuples.contains(q)
    }

    /// Draws a legal tuple according to the declared weights.
    pub fn sample_questions<R: Rng + ?Sized>(&self, rng: &mut R) -> QuestionTuple {
        self.legal_tuples[self.sample_index(rng)].clone()
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let mut ticket = rng.gen_range(0..self.weight_total);
        for (i, &w) in self.weights.iter().enumerate() {
            if ticket < w {
                return i;
            }
            ticket -= w;
        }
        unreachable!("weights sum to weight_total")
    }

    /// Applies the win predicate after checking legality and arity.
    pub fn judge(&self, q: &QuestionTuple, answers: &[Answer]) -> Result<Verdict, GameError> {
        if answers.len() != self.num_players {
            return Err(GameError::AnswerCount {
                expected: self.num_players,
                got: answers.len(),
            });
        }
        if !self.is_legal(q) {
            return Err(GameError::IllegalTuple(q.to_string()));
        }
        Ok(self.predicate(q, answers))
    }

    /// The raw predicate; `q` must be legal and `answers` of the right length.
    pub fn predicate(&self, q: &QuestionTuple, answers: &[Answer]) -> Verdict {
        let win = match self.kind {
            GameKind::Ghz => {
                let xs = q.0.iter().filter(|&&q| q == Question::Ghz(GhzQuestion::X)).count();
                let product: i8 = answers.iter().map(|a| a.value()).product();
                if xs == 3 {
                    product == -1
                } else {
                    product == 1
                }
            }
            GameKind::Necklace { n } => {
                let (Question::Bead(i), Question::Bead(j)) = (q.0[0], q.0[1]) else {
                    return Verdict::Lose;
                };
                let crossing = (i.min(j), i.max(j)) == (1, n);
                let same = answers[0] == answers[1];
                if crossing {
                    same
                } else {
                    !same
                }
            }
        };
        if win {
            Verdict::Win
        } else {
            Verdict::Lose
        }
    }
}

/// Three players; all asked X, or exactly one asked X and two asked Y.
pub fn ghz_spec() -> GameSpec {
    use GhzQuestion::{X, Y};
    let legal_tuples: Vec<QuestionTuple> = [[X, X, X], [X, Y, Y], [Y, X, Y], [Y, Y, X]]
        .iter()
        .map(|t| QuestionTuple(t.iter().map(|&q| Question::Ghz(q)).collect()))
        .collect();
    let alphabet = vec![Question::Ghz(X), Question::Ghz(Y)];
    GameSpec {
        kind: GameKind::Ghz,
        num_players: 3,
        weights: vec![1; legal_tuples.len()],
        weight_total: legal_tuples.len() as u64,
        legal_tuples,
        alphabets: vec![alphabet; 3],
        session_rounds_default: 1000,
    }
}

/// Two players asked cyclically adjacent beads of an `n`-bead necklace, in
/// both orders.
pub fn necklace_spec(n: u32) -> Result<GameSpec, GameError> {
    validate_beads(n)?;
    let mut legal_tuples = Vec::with_capacity(2 * n as usize);
    for i in 1..=n {
        let prev = if i == 1 { n } else { i - 1 };
        let next = if i == n { 1 } else { i + 1 };
        let (lo, hi) = (prev.min(next), prev.max(next));
        for j in [lo, hi] {
            legal_tuples.push(QuestionTuple(vec![Question::Bead(i), Question::Bead(j)]));
        }
    }
    let alphabet: Vec<Question> = (1..=n).map(Question::Bead).collect();
    Ok(GameSpec {
        kind: GameKind::Necklace { n },
        num_players: 2,
        weights: vec![1; legal_tuples.len()],
        weight_total: legal_tuples.len() as u64,
        legal_tuples,
        alphabets: vec![alphabet.clone(), alphabet],
        session_rounds_default: 5 * u64::from(n),
    })
}
