//! Entanglement provider: a service standing in for the shared quantum
//! resource when the players live in separate processes.
//!
//! Within a round, measurement requests are resolved in seat order. The
//! caller in seat `k` is answered only after seats `0..k` have been served,
//! from the Born distribution conditioned on their outcomes. Outcomes for a
//! round are drawn from the same resource substream the in-process referee
//! uses, so a networked match reproduces an in-process one exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufReader;
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::wire::{hello_game, receive, send, Received, Role, WireMessage};
use super::NetError;
use crate::games::GameKind;
use crate::quantum::{
    make_entangled_state, EntangledKind, MeasurementHistory, MeasurementSetting, Outcome, QuantumError,
    SequentialMeasurement, StateVector,
};
use crate::referee::RoundStreams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("unknown session {0}")]
    UnknownSession(u64),
    #[error("player {player} already measured in round {round}")]
    Duplicate { round: u64, player: usize },
    #[error("no seat {0} in this game")]
    NoSuchPlayer(usize),
    #[error("timed out waiting for earlier seats in round {round}")]
    OrderTimeout { round: u64 },
    #[error(transparent)]
    Setting(#[from] QuantumError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProviderConfig {
    pub game: GameKind,
    pub seed: u64,
    pub session: u64,
    /// How long a later seat waits for the earlier seats of its round.
    pub order_timeout: Duration,
}

impl ProviderConfig {
    pub fn new(game: GameKind, seed: u64) -> Self {
        ProviderConfig {
            game,
            seed,
            session: 0,
            order_timeout: Duration::from_secs(10),
        }
    }
}

struct OpenRound {
    history: MeasurementHistory,
    served: Vec<bool>,
    rng: ChaCha8Rng,
}

#[derive(Default)]
struct Rounds {
    open: BTreeMap<u64, OpenRound>,
    done: BTreeSet<u64>,
}

pub struct EntanglementProvider {
    cfg: ProviderConfig,
    state: StateVector,
    num_players: usize,
    rounds: Mutex<Rounds>,
    turn: Condvar,
}

impl EntanglementProvider {
    pub fn new(cfg: ProviderConfig) -> Self {
        let (kind, num_players) = match cfg.game {
            GameKind::Ghz => (EntangledKind::GhzMinus, 3),
            GameKind::Necklace { .. } => (EntangledKind::Singlet, 2),
        };
        EntanglementProvider {
            cfg,
            state: make_entangled_state(kind),
            num_players,
            rounds: Mutex::new(Rounds::default()),
            turn: Condvar::new(),
        }
    }

    pub fn num_players(&self) -> usize {
        self.num_players
    }

    /// Measures seat `player` (0-based) of `round` along `setting`.
    pub fn measure(
        &self,
        session: u64,
        round: u64,
        player: usize,
        setting: MeasurementSetting,
    ) -> Result<Outcome, ProviderError> {
        if session != self.cfg.session {
            return Err(ProviderError::UnknownSession(session));
        }
        if player >= self.num_players {
            return Err(ProviderError::NoSuchPlayer(player));
        }
        setting.validate()?;

        let deadline = Instant::now() + self.cfg.order_timeout;
        let mut rounds = self.rounds.lock().expect("provider lock");
        loop {
            if rounds.done.contains(&round) {
                return Err(ProviderError::Duplicate { round, player });
            }
            let (seed, session, n) = (self.cfg.seed, self.cfg.session, self.num_players);
            let open = rounds.open.entry(round).or_insert_with(|| OpenRound {
                history: MeasurementHistory::default(),
                served: vec![false; n],
                rng: RoundStreams::resource_only(seed, session, round),
            });
            if open.served[player] {
                return Err(ProviderError::Duplicate { round, player });
            }
            if open.served[..player].iter().all(|&s| s) {
                break;
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(ProviderError::OrderTimeout { round });
            }
            rounds = self.turn.wait_timeout(rounds, deadline - now).expect("provider lock").0;
        }

        let open = rounds.open.get_mut(&round).expect("round opened above");
        let mut physics = SequentialMeasurement::from_parts(&self.state, std::mem::take(&mut open.history));
        let outcome = physics.measure(player, setting, &mut open.rng);
        open.history = physics.into_parts();
        open.served[player] = true;
        if open.served.iter().all(|&s| s) {
            rounds.open.remove(&round);
            rounds.done.insert(round);
        }
        self.turn.notify_all();
        Ok(outcome)
    }
}

/// Accepts one connection per seat, serves MEASURE requests, and returns
/// once every seated player has disconnected.
pub fn serve_provider(cfg: ProviderConfig, listener: TcpListener) -> Result<(), NetError> {
    let provider = Arc::new(EntanglementProvider::new(cfg));
    let mut seated = BTreeSet::new();
    let mut handles = Vec::new();
    while seated.len() < provider.num_players() {
        let (stream, _) = listener.accept()?;
        stream.set_nodelay(true)?;
        match provider_handshake(&provider, &stream, &seated) {
            Ok(seat) => {
                seated.insert(seat);
                let provider = Arc::clone(&provider);
                handles.push(thread::spawn(move || serve_seat(&provider, stream, seat)));
            }
            Err(text) => {
                let mut w = &stream;
                let _ = send(&mut w, &WireMessage::error(0, text));
            }
        }
    }
    for h in handles {
        let _ = h.join();
    }
    Ok(())
}

fn provider_handshake(
    provider: &EntanglementProvider,
    stream: &TcpStream,
    seated: &BTreeSet<usize>,
) -> Result<usize, String> {
    stream
        .set_read_timeout(Some(Duration::from_secs(10)))
        .map_err(|e| e.to_string())?;
    let mut reader = BufReader::new(stream);
    let hello = match receive(&mut reader) {
        Ok(Received::Message(m)) => m,
        Ok(Received::Invalid(e)) => return Err(e.to_string()),
        Ok(Received::Closed) | Err(_) => return Err("no HELLO received".into()),
    };
    let WireMessage::Hello {
        role: Role::Player,
        player: Some(player),
        game,
        n,
        session,
        ..
    } = hello
    else {
        return Err("expected HELLO from a player".into());
    };
    let game = hello_game(&game, n).map_err(|e| e.to_string())?;
    let cfg = &provider.cfg;
    if game != cfg.game {
        return Err(format!(
            "game mismatch: provider serves {:?}, player expects {game:?}",
            cfg.game
        ));
    }
    if session != cfg.session {
        return Err(ProviderError::UnknownSession(session).to_string());
    }
    let seat = (player as usize).wrapping_sub(1);
    if seat >= provider.num_players() {
        return Err(ProviderError::NoSuchPlayer(player as usize).to_string());
    }
    if seated.contains(&seat) {
        return Err(format!("player {player} already connected"));
    }
    stream.set_read_timeout(None).map_err(|e| e.to_string())?;
    let mut w = stream;
    send(
        &mut w,
        &WireMessage::hello(Role::Provider, Some(player), cfg.game, cfg.session, None),
    )
    .map_err(|e| e.to_string())?;
    Ok(seat)
}

fn serve_seat(provider: &EntanglementProvider, stream: TcpStream, seat: usize) {
    let mut reader = BufReader::new(&stream);
    let mut writer = &stream;
    loop {
        let reply = match receive(&mut reader) {
            Ok(Received::Message(WireMessage::Measure {
                round,
                session,
                player,
                setting,
            })) => {
                if (player as usize).wrapping_sub(1) != seat {
                    WireMessage::error(round, format!("connection is seated as player {}", seat + 1))
                } else {
                    match setting
                        .parse::<MeasurementSetting>()
                        .map_err(ProviderError::from)
                        .and_then(|s| provider.measure(session, round, seat, s))
                    {
                        Ok(o) => WireMessage::Outcome {
                            round,
                            outcome: o.value(),
                        },
                        Err(e) => WireMessage::error(round, e.to_string()),
                    }
                }
            }
            Ok(Received::Message(other)) => {
                WireMessage::error(other.round(), format!("unexpected {} message", other.kind()))
            }
            Ok(Received::Invalid(e)) => WireMessage::error(0, e.to_string()),
            Ok(Received::Closed) | Err(_) => return,
        };
        if send(&mut writer, &reply).is_err() {
            return;
        }
    }
}
