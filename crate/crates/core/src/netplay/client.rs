//! A player process: answers the referee's questions from its own strategy
//! and, for quantum strategies, its own line to the entanglement provider.

use std::io::BufReader;
use std::net::TcpStream;
use std::thread;
use std::time::Duration;

use super::wire::{receive, send, Received, Role, WireMessage};
use super::NetError;
use crate::games::{GameKind, Question};
use crate::quantum::{MeasurementSetting, Outcome};
use crate::referee::RunStats;
use crate::strategies::{LocalQubit, LocalResource, PlayerStrategy, StrategyError};

#[derive(Debug, Clone, PartialEq)]
pub struct ClientConfig {
    pub referee: String,
    pub provider: Option<String>,
    /// 1-based seat.
    pub player: u32,
    pub game: GameKind,
    pub session: u64,
    /// Artificial delay before each answer.
    pub answer_delay: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientReport {
    pub answered: u64,
    pub wins: u64,
    pub summary: Option<RunStats>,
}

struct Line {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Line {
    fn open(addr: &str) -> Result<Self, NetError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Line {
            reader: BufReader::new(stream.try_clone()?),
            writer: stream,
        })
    }

    fn send(&mut self, m: &WireMessage) -> Result<(), NetError> {
        send(&mut self.writer, m).map_err(NetError::from)
    }

    fn recv(&mut self) -> Result<WireMessage, NetError> {
        match receive(&mut self.reader)? {
            Received::Message(m) => Ok(m),
            Received::Invalid(e) => Err(NetError::Protocol(e.to_string())),
            Received::Closed => Err(NetError::ConnectionLost),
        }
    }

    fn handshake(&mut self, cfg: &ClientConfig, expect: Role) -> Result<(), NetError> {
        self.send(&WireMessage::hello(
            Role::Player,
            Some(cfg.player),
            cfg.game,
            cfg.session,
            None,
        ))?;
        match self.recv()? {
            WireMessage::Hello { role, .. } if role == expect => Ok(()),
            WireMessage::Error { text, .. } => Err(NetError::Rejected(text)),
            other => Err(NetError::Protocol(format!("unexpected {} during handshake", other.kind()))),
        }
    }
}

/// This player's half of the shared state, reached over the provider line.
struct ProviderQubit<'a> {
    line: &'a mut Line,
    session: u64,
    round: u64,
    player: u32,
}

impl LocalQubit for ProviderQubit<'_> {
    fn measure(&mut self, setting: MeasurementSetting) -> Result<Outcome, StrategyError> {
        let request = WireMessage::Measure {
            round: self.round,
            session: self.session,
            player: self.player,
            setting: setting.to_string(),
        };
        let failed = |e: NetError| StrategyError::Measurement(e.to_string());
        self.line.send(&request).map_err(failed)?;
        match self.line.recv().map_err(failed)? {
            WireMessage::Outcome { round, outcome } if round == self.round => Outcome::from_value(i64::from(outcome))
                .ok_or_else(|| StrategyError::Measurement(format!("invalid outcome {outcome}"))),
            WireMessage::Error { text, .. } => Err(StrategyError::Measurement(text)),
            other => Err(StrategyError::Measurement(format!("unexpected {} from provider", other.kind()))),
        }
    }
}

/// Connects to the referee (and the provider, for quantum strategies) and
/// plays until the referee sends SUMMARY.
pub fn run_player_client(cfg: &ClientConfig, strategy: &PlayerStrategy) -> Result<ClientReport, NetError> {
    let mut provider = match (strategy, &cfg.provider) {
        (PlayerStrategy::Quantum { .. }, Some(addr)) => {
            let mut line = Line::open(addr)?;
            line.handshake(cfg, Role::Provider)?;
            Some(line)
        }
        (PlayerStrategy::Quantum { .. }, None) => {
            return Err(NetError::Config("quantum strategies need a provider endpoint".into()))
        }
        (PlayerStrategy::Mixed(_), _) => {
            return Err(NetError::Config(
                "shared-randomness strategies are not supported over the network".into(),
            ))
        }
        (PlayerStrategy::Table(_), _) => None,
    };
    let mut referee = Line::open(&cfg.referee)?;
    referee.handshake(cfg, Role::Referee)?;

    let mut report = ClientReport {
        answered: 0,
        wins: 0,
        summary: None,
    };
    loop {
        match referee.recv() {
            Ok(WireMessage::Question { round, q, .. }) => {
                let question: Question = q.parse()?;
                let answer = match provider.as_mut() {
                    Some(line) => {
                        let mut qubit = ProviderQubit {
                            line,
                            session: cfg.session,
                            round,
                            player: cfg.player,
                        };
                        strategy.answer(question, LocalResource::Qubit(&mut qubit))?
                    }
                    None => strategy.answer(question, LocalResource::None)?,
                };
                if !cfg.answer_delay.is_zero() {
                    thread::sleep(cfg.answer_delay);
                }
                let sent = referee.send(&WireMessage::Answer {
                    round,
                    a: answer.value(),
                });
                if sent.is_err() {
                    // The referee may already have closed the match.
                    return Ok(report);
                }
                report.answered += 1;
            }
            Ok(WireMessage::Result { win, .. }) => report.wins += u64::from(win),
            Ok(WireMessage::Summary { stats, .. }) => {
                report.summary = Some(stats);
                return Ok(report);
            }
            Ok(WireMessage::Error { text, .. }) => return Err(NetError::Protocol(text)),
            Ok(other) => return Err(NetError::Protocol(format!("unexpected {} from referee", other.kind()))),
            Err(e) => return Err(e),
        }
    }
}
