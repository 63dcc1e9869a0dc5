//! Networked matches between separate processes.
//!
//! Three roles talk over TCP using line-delimited JSON ([`wire`]):
//!
//! * the referee ([`serve_referee`]) seats the players, puts questions,
//!   enforces the answer deadline and scores rounds;
//! * each player ([`run_player_client`]) answers from its own strategy;
//! * the entanglement provider ([`serve_provider`]) holds the shared
//!   quantum state and resolves local measurements for quantum players.
//!
//! Players only ever talk to the referee and to the provider. No message
//! type carries one player's question, setting or outcome to another player.

use std::io;
use std::time::Duration;

use thiserror::Error;

use crate::games::{Answer, GameError, GameKind, QuestionTuple};
use crate::referee::{RefereeError, RunStats, TranscriptRow};
use crate::strategies::StrategyError;

mod client;
mod provider;
mod server;
pub mod wire;

pub use client::{run_player_client, ClientConfig, ClientReport};
pub use provider::{serve_provider, EntanglementProvider, ProviderConfig, ProviderError};
pub use server::{serve_referee, serve_referee_on};
pub use wire::{decode_message, encode_message, DecodeError, Role, WireMessage, PROTOCOL_VERSION};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("rejected: {0}")]
    Rejected(String),
    #[error("connection lost")]
    ConnectionLost,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Referee(#[from] RefereeError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchConfig {
    pub game: GameKind,
    pub rounds: u64,
    pub deadline_ms: u64,
    pub listen: String,
    pub seed: u64,
    /// Session index; selects the seed substream, so a match is comparable
    /// with session `session` of an in-process experiment.
    pub session: u64,
}

impl MatchConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        if self.rounds == 0 {
            return Err(NetError::Config("rounds must be >= 1".into()));
        }
        if self.deadline_ms == 0 {
            return Err(NetError::Config("deadline_ms must be >= 1".into()));
        }
        self.game.spec()?;
        Ok(())
    }

    pub fn deadline(&self) -> Duration {
        Duration::from_millis(self.deadline_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchRound {
    pub round: u64,
    pub questions: QuestionTuple,
    pub answers: Vec<Option<Answer>>,
    pub win: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutcome {
    pub stats: RunStats,
    pub rounds: Vec<MatchRound>,
    /// A player dropped and the remaining rounds were forfeited.
    pub disconnected: bool,
}

impl MatchOutcome {
    pub fn rows(&self, session: u64) -> impl Iterator<Item = TranscriptRow<'_>> {
        self.rounds.iter().map(move |r| TranscriptRow {
            session,
            round: r.round,
            questions: &r.questions,
            answers: r.answers.clone(),
            win: r.win,
        })
    }
}
