//! Line-delimited JSON framing for match traffic.
//!
//! Every line is one object carrying the protocol version `v`, a `type`
//! tag and the round it refers to, e.g.
//!
//! ```text
//! {"v":1,"type":"QUESTION","round":3,"q":"bead:17","deadline_ms":500}
//! ```

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::games::{GameError, GameKind};
use crate::referee::RunStats;

pub const PROTOCOL_VERSION: u32 = 1;

const KNOWN_TYPES: [&str; 8] = [
    "HELLO", "QUESTION", "ANSWER", "RESULT", "SUMMARY", "MEASURE", "OUTCOME", "ERROR",
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("malformed message")]
    Malformed,
    #[error("unsupported protocol version {0:?}")]
    Version(Option<u64>),
    #[error("unknown message type {0:?}")]
    UnknownType(String),
    #[error("invalid {kind} message: {detail}")]
    Fields { kind: String, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Referee,
    Player,
    Provider,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WireMessage {
    /// Handshake. Players announce their 1-based seat and the game they
    /// expect; the referee and provider echo back the session they serve.
    Hello {
        round: u64,
        role: Role,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        player: Option<u32>,
        game: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<u32>,
        session: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rounds: Option<u64>,
    },
    Question {
        round: u64,
        q: String,
        deadline_ms: u64,
    },
    Answer {
        round: u64,
        a: i8,
    },
    Result {
        round: u64,
        win: bool,
    },
    Summary {
        round: u64,
        stats: RunStats,
    },
    Measure {
        round: u64,
        session: u64,
        player: u32,
        setting: String,
    },
    Outcome {
        round: u64,
        outcome: i8,
    },
    Error {
        round: u64,
        text: String,
    },
}

#[derive(Serialize)]
struct EnvelopeOut<'a> {
    v: u32,
    #[serde(flatten)]
    msg: &'a WireMessage,
}

impl WireMessage {
    pub fn round(&self) -> u64 {
        match self {
            WireMessage::Hello { round, .. }
            | WireMessage::Question { round, .. }
            | WireMessage::Answer { round, .. }
            | WireMessage::Result { round, .. }
            | WireMessage::Summary { round, .. }
            | WireMessage::Measure { round, .. }
            | WireMessage::Outcome { round, .. }
            | WireMessage::Error { round, .. } => *round,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            WireMessage::Hello { .. } => "HELLO",
            WireMessage::Question { .. } => "QUESTION",
            WireMessage::Answer { .. } => "ANSWER",
            WireMessage::Result { .. } => "RESULT",
            WireMessage::Summary { .. } => "SUMMARY",
            WireMessage::Measure { .. } => "MEASURE",
            WireMessage::Outcome { .. } => "OUTCOME",
            WireMessage::Error { .. } => "ERROR",
        }
    }

    pub fn hello(role: Role, player: Option<u32>, game: GameKind, session: u64, rounds: Option<u64>) -> Self {
        WireMessage::Hello {
            round: 0,
            role,
            player,
            game: game.name().to_string(),
            n: game.beads(),
            session,
            rounds,
        }
    }

    pub fn error(round: u64, text: impl Into<String>) -> Self {
        WireMessage::Error {
            round,
            text: text.into(),
        }
    }
}

/// Game announced in a HELLO.
pub fn hello_game(game: &str, n: Option<u32>) -> Result<GameKind, GameError> {
    match (game, n) {
        ("ghz", None) => Ok(GameKind::Ghz),
        ("necklace", Some(n)) => Ok(GameKind::Necklace { n }),
        _ => Err(GameError::UnknownGame(format!("{game} n={n:?}"))),
    }
}

/// One message as a single UTF-8 line, newline included.
pub fn encode_message(m: &WireMessage) -> Vec<u8> {
    let mut bytes = serde_json::to_vec(&EnvelopeOut {
        v: PROTOCOL_VERSION,
        msg: m,
    })
    .expect("wire messages always serialize");
    bytes.push(b'\n');
    bytes
}

pub fn decode_message(bytes: &[u8]) -> Result<WireMessage, DecodeError> {
    let line = bytes.strip_suffix(b"\n").unwrap_or(bytes);
    let line = line.strip_suffix(b"\r").unwrap_or(line);
    let mut value: Value = serde_json::from_slice(line).map_err(|_| DecodeError::Malformed)?;
    let obj = value.as_object_mut().ok_or(DecodeError::Malformed)?;
    match obj.remove("v") {
        Some(Value::Number(v)) if v.as_u64() == Some(u64::from(PROTOCOL_VERSION)) => {}
        Some(Value::Number(v)) => return Err(DecodeError::Version(v.as_u64())),
        _ => return Err(DecodeError::Version(None)),
    }
    let kind = match obj.get("type") {
        Some(Value::String(t)) => t.clone(),
        _ => return Err(DecodeError::Malformed),
    };
    if !KNOWN_TYPES.contains(&kind.as_str()) {
        return Err(DecodeError::UnknownType(kind));
    }
    serde_json::from_value(value).map_err(|e| DecodeError::Fields {
        kind,
        detail: e.to_string(),
    })
}

/// Writes one message and flushes.
pub fn send<W: Write>(w: &mut W, m: &WireMessage) -> io::Result<()> {
    w.write_all(&encode_message(m))?;
    w.flush()
}

#[derive(Debug)]
pub enum Received {
    Message(WireMessage),
    Invalid(DecodeError),
    Closed,
}

/// Reads the next line. I/O errors count as a closed stream.
pub fn receive<R: BufRead>(r: &mut R) -> io::Result<Received> {
    let mut line = Vec::new();
    let n = r.read_until(b'\n', &mut line)?;
    if n == 0 {
        return Ok(Received::Closed);
    }
    Ok(match decode_message(&line) {
        Ok(m) => Received::Message(m),
        Err(e) => Received::Invalid(e),
    })
}
