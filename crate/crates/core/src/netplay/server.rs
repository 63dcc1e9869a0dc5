//! Referee side of a networked match.

use std::io::BufReader;
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread;
use std::time::{Duration, Instant};

use super::wire::{hello_game, receive, send, Received, Role, WireMessage};
use super::{MatchConfig, MatchRound, MatchOutcome, NetError};
use crate::games::{Answer, GameSpec};
use crate::referee::{RoundStreams, RunStats};

enum Event {
    Message(WireMessage),
    Invalid(String),
    Closed,
}

struct Seat {
    stream: TcpStream,
    alive: bool,
}

/// Binds `cfg.listen` and runs the match.
pub fn serve_referee(cfg: &MatchConfig) -> Result<MatchOutcome, NetError> {
    let listener = TcpListener::bind(&cfg.listen)?;
    serve_referee_on(cfg, listener)
}

/// Runs a match on an already bound listener.
///
/// Seats are filled by players announcing themselves with HELLO. Each round
/// the QUESTION lines go out to every seat before any answer is read; the
/// round closes when all answers are in or `deadline_ms` elapses. Missing or
/// late answers lose the round. After a disconnect every remaining round is
/// lost. A protocol violation aborts the match with ERROR.
pub fn serve_referee_on(cfg: &MatchConfig, listener: TcpListener) -> Result<MatchOutcome, NetError> {
    cfg.validate()?;
    let spec = cfg.game.spec()?;
    let (tx, rx) = mpsc::channel::<(usize, Event)>();
    let mut seats = accept_players(cfg, &spec, &listener, &tx)?;
    drop(tx);

    let deadline = Duration::from_millis(cfg.deadline_ms);
    let mut rounds = Vec::with_capacity(cfg.rounds as usize);
    let mut dropped = false;
    for round in 0..cfg.rounds {
        let questions = spec.sample_questions(&mut RoundStreams::derive(cfg.seed, cfg.session, round).questions);
        let mut answers: Vec<Option<Answer>> = vec![None; spec.num_players];
        if !dropped {
            for (seat, q) in seats.iter_mut().zip(&questions.0) {
                let msg = WireMessage::Question {
                    round,
                    q: q.to_string(),
                    deadline_ms: cfg.deadline_ms,
                };
                if send(&mut seat.stream, &msg).is_err() {
                    seat.alive = false;
                }
            }
            dropped = seats.iter().any(|s| !s.alive);
            if !dropped {
                if let Err(e) = collect_answers(&rx, &mut seats, round, deadline, &mut answers) {
                    abort(&mut seats, round, &e);
                    return Err(e);
                }
                dropped = seats.iter().any(|s| !s.alive);
            }
        }
        let win = match answers.iter().copied().collect::<Option<Vec<Answer>>>() {
            Some(full) => spec.judge(&questions, &full)?.is_win(),
            None => false,
        };
        for seat in seats.iter_mut().filter(|s| s.alive) {
            if send(&mut seat.stream, &WireMessage::Result { round, win }).is_err() {
                seat.alive = false;
            }
        }
        rounds.push(MatchRound {
            round,
            questions,
            answers,
            win,
        });
    }

    let wins = rounds.iter().filter(|r| r.win).count() as u64;
    let stats = RunStats::from_sessions([(cfg.rounds, wins)])?;
    for seat in seats.iter_mut().filter(|s| s.alive) {
        let _ = send(
            &mut seat.stream,
            &WireMessage::Summary {
                round: cfg.rounds,
                stats: stats.clone(),
            },
        );
    }
    for seat in &seats {
        let _ = seat.stream.shutdown(std::net::Shutdown::Both);
    }
    Ok(MatchOutcome {
        stats,
        rounds,
        disconnected: dropped,
    })
}

fn accept_players(
    cfg: &MatchConfig,
    spec: &GameSpec,
    listener: &TcpListener,
    tx: &Sender<(usize, Event)>,
) -> Result<Vec<Seat>, NetError> {
    let mut seats: Vec<Option<Seat>> = (0..spec.num_players).map(|_| None).collect();
    while seats.iter().any(Option::is_none) {
        let (stream, _) = listener.accept()?;
        stream.set_nodelay(true)?;
        match referee_handshake(cfg, &stream, &seats) {
            Ok(seat) => {
                let reader = stream.try_clone()?;
                let tx = tx.clone();
                thread::spawn(move || forward(seat, reader, tx));
                seats[seat] = Some(Seat { stream, alive: true });
            }
            Err(text) => {
                let mut w = &stream;
                let _ = send(&mut w, &WireMessage::error(0, text));
            }
        }
    }
    Ok(seats.into_iter().map(|s| s.expect("all seats filled")).collect())
}

fn referee_handshake(cfg: &MatchConfig, stream: &TcpStream, seats: &[Option<Seat>]) -> Result<usize, String> {
    stream
        .set_read_timeout(Some(Duration::from_secs(10)))
        .map_err(|e| e.to_string())?;
    let mut reader = BufReader::new(stream);
    let (player, game, n, session) = match receive(&mut reader) {
        Ok(Received::Message(WireMessage::Hello {
            role: Role::Player,
            player: Some(player),
            game,
            n,
            session,
            ..
        })) => (player, game, n, session),
        Ok(Received::Message(_)) => return Err("expected HELLO from a player".into()),
        Ok(Received::Invalid(e)) => return Err(e.to_string()),
        Ok(Received::Closed) | Err(_) => return Err("no HELLO received".into()),
    };
    let game = hello_game(&game, n).map_err(|e| e.to_string())?;
    if game != cfg.game {
        return Err(format!("game mismatch: referee runs {:?}, player expects {game:?}", cfg.game));
    }
    if session != cfg.session {
        return Err(format!("unknown session {session}"));
    }
    let seat = (player as usize).wrapping_sub(1);
    match seats.get(seat) {
        None => return Err(format!("no seat {player} in this game")),
        Some(Some(_)) => return Err(format!("player {player} already connected")),
        Some(None) => {}
    }
    stream.set_read_timeout(None).map_err(|e| e.to_string())?;
    let mut w = stream;
    send(
        &mut w,
        &WireMessage::hello(Role::Referee, Some(player), cfg.game, cfg.session, Some(cfg.rounds)),
    )
    .map_err(|e| e.to_string())?;
    Ok(seat)
}

fn forward(seat: usize, stream: TcpStream, tx: Sender<(usize, Event)>) {
    let mut reader = BufReader::new(stream);
    loop {
        let event = match receive(&mut reader) {
            Ok(Received::Message(m)) => Event::Message(m),
            Ok(Received::Invalid(e)) => Event::Invalid(e.to_string()),
            Ok(Received::Closed) | Err(_) => Event::Closed,
        };
        let closed = matches!(event, Event::Closed);
        if tx.send((seat, event)).is_err() || closed {
            return;
        }
    }
}

fn collect_answers(
    rx: &Receiver<(usize, Event)>,
    seats: &mut [Seat],
    round: u64,
    deadline: Duration,
    answers: &mut [Option<Answer>],
) -> Result<(), NetError> {
    let end = Instant::now() + deadline;
    while answers.iter().any(Option::is_none) {
        let remaining = end.saturating_duration_since(Instant::now());
        if remaining.is_zero() {
            return Ok(());
        }
        let (seat, event) = match rx.recv_timeout(remaining) {
            Ok(e) => e,
            Err(RecvTimeoutError::Timeout) => return Ok(()),
            Err(RecvTimeoutError::Disconnected) => {
                seats.iter_mut().for_each(|s| s.alive = false);
                return Ok(());
            }
        };
        match event {
            Event::Closed => {
                seats[seat].alive = false;
                return Ok(());
            }
            Event::Invalid(e) => return Err(NetError::Protocol(format!("player {}: {e}", seat + 1))),
            // Answers to rounds that already closed arrived too late; they
            // were scored as losses and are dropped here.
            Event::Message(WireMessage::Answer { round: r, .. }) if r < round => {}
            Event::Message(WireMessage::Answer { round: r, a }) => {
                if r != round {
                    return Err(NetError::Protocol(format!(
                        "player {} answered round {r} while round {round} is outstanding",
                        seat + 1
                    )));
                }
                if answers[seat].is_some() {
                    return Err(NetError::Protocol(format!("player {} answered twice", seat + 1)));
                }
                let a = Answer::from_value(i64::from(a))
                    .ok_or_else(|| NetError::Protocol(format!("player {}: answer {a} is not ±1", seat + 1)))?;
                answers[seat] = Some(a);
            }
            Event::Message(other) => {
                return Err(NetError::Protocol(format!(
                    "player {}: unexpected {} message",
                    seat + 1,
                    other.kind()
                )))
            }
        }
    }
    Ok(())
}

fn abort(seats: &mut [Seat], round: u64, e: &NetError) {
    for seat in seats.iter_mut().filter(|s| s.alive) {
        let _ = send(&mut seat.stream, &WireMessage::error(round, e.to_string()));
        let _ = seat.stream.shutdown(std::net::Shutdown::Both);
    }
}
