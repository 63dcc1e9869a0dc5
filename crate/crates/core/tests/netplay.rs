use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use bellgames::games::{GameKind, Question};
use bellgames::netplay::wire::{decode_message, encode_message, Role, WireMessage};
use bellgames::netplay::{
    run_player_client, serve_provider, serve_referee_on, ClientConfig, EntanglementProvider, MatchConfig,
    MatchOutcome, NetError, ProviderConfig,
};
use bellgames::quantum::{joint_distribution, sample_outcome, MeasurementSetting, OutcomeTuple};
use bellgames::referee::{run_experiment, SessionConfig};
use bellgames::strategies::{canonical_quantum_necklace, DeterministicStrategy, PlayerStrategy, StrategyProfile};
use bellgames::{make_entangled_state, EntangledKind};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bind() -> (TcpListener, String) {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = l.local_addr().unwrap().to_string();
    (l, addr)
}

struct Match {
    game: GameKind,
    rounds: u64,
    deadline_ms: u64,
    seed: u64,
}

fn play_match(m: &Match, profile: &StrategyProfile, delays: &[Duration]) -> MatchOutcome {
    let (ref_listener, ref_addr) = bind();
    let cfg = MatchConfig {
        game: m.game,
        rounds: m.rounds,
        deadline_ms: m.deadline_ms,
        listen: ref_addr.clone(),
        seed: m.seed,
        session: 0,
    };
    let referee = thread::spawn(move || serve_referee_on(&cfg, ref_listener));

    let provider_addr = if matches!(profile, StrategyProfile::Quantum(_)) {
        let (l, addr) = bind();
        let pcfg = ProviderConfig::new(m.game, m.seed);
        thread::spawn(move || serve_provider(pcfg, l));
        Some(addr)
    } else {
        None
    };

    let spec = m.game.spec().unwrap();
    let clients: Vec<_> = (0..spec.num_players)
        .map(|k| {
            let cfg = ClientConfig {
                referee: ref_addr.clone(),
                provider: provider_addr.clone(),
                player: k as u32 + 1,
                game: m.game,
                session: 0,
                answer_delay: delays.get(k).copied().unwrap_or_default(),
            };
            let strategy = profile.player(k);
            thread::spawn(move || run_player_client(&cfg, &strategy))
        })
        .collect();
    let outcome = referee.join().unwrap().unwrap();
    for c in clients {
        let _ = c.join().unwrap();
    }
    outcome
}

#[test]
fn networked_quantum_match_matches_in_process() {
    let game = GameKind::Necklace { n: 10 };
    let profile = StrategyProfile::Quantum(canonical_quantum_necklace(10).unwrap());
    let seed = 20_260_101;
    let net = play_match(
        &Match {
            game,
            rounds: 50,
            deadline_ms: 5_000,
            seed,
        },
        &profile,
        &[],
    );
    let spec = game.spec().unwrap();
    let local = run_experiment(
        &spec,
        &profile,
        &SessionConfig {
            rounds_per_session: 50,
            num_sessions: 1,
            seed,
        },
        true,
    )
    .unwrap();
    let local = local.transcript.unwrap();
    assert_eq!(net.rounds.len(), 50);
    for (n, l) in net.rounds.iter().zip(&local) {
        assert_eq!(n.questions, l.questions, "round {}", n.round);
        assert_eq!(n.win, l.win, "round {}", n.round);
        let answers: Vec<_> = n.answers.iter().map(|a| a.unwrap()).collect();
        assert_eq!(answers, l.answers);
    }
}

#[test]
fn networked_classical_necklace_rate() {
    let game = GameKind::Necklace { n: 10 };
    let profile = StrategyProfile::Deterministic(DeterministicStrategy::alternating_necklace(10).unwrap());
    let out = play_match(
        &Match {
            game,
            rounds: 10_000,
            deadline_ms: 5_000,
            seed: 3,
        },
        &profile,
        &[],
    );
    let p = 0.9;
    let sigma = (p * (1.0 - p) / 10_000.0f64).sqrt();
    assert!((out.stats.win_rate - p).abs() < 4.0 * sigma, "{}", out.stats.win_rate);
    assert!(!out.disconnected);
}

#[test]
fn slow_client_loses_every_round() {
    let game = GameKind::Necklace { n: 4 };
    let profile = StrategyProfile::Deterministic(DeterministicStrategy::alternating_necklace(4).unwrap());
    let out = play_match(
        &Match {
            game,
            rounds: 20,
            deadline_ms: 20,
            seed: 1,
        },
        &profile,
        &[Duration::ZERO, Duration::from_millis(60)],
    );
    assert_eq!(out.stats.wins, 0);
    assert_eq!(out.stats.win_rate, 0.0);
}

#[test]
fn lower_deadline_never_helps_a_slow_client() {
    let game = GameKind::Necklace { n: 4 };
    let profile = StrategyProfile::Deterministic(DeterministicStrategy::alternating_necklace(4).unwrap());
    let delay = [Duration::from_millis(15), Duration::ZERO];
    let rate = |deadline_ms| {
        play_match(
            &Match {
                game,
                rounds: 12,
                deadline_ms,
                seed: 9,
            },
            &profile,
            &delay,
        )
        .stats
        .win_rate
    };
    let generous = rate(2_000);
    let tight = rate(5);
    assert!(tight <= generous, "{tight} > {generous}");
    assert_eq!(tight, 0.0);
}

#[test]
fn mismatched_game_is_rejected() {
    let (l, addr) = bind();
    let cfg = MatchConfig {
        game: GameKind::Necklace { n: 10 },
        rounds: 1,
        deadline_ms: 100,
        listen: addr.clone(),
        seed: 0,
        session: 0,
    };
    thread::spawn(move || serve_referee_on(&cfg, l));
    let client = ClientConfig {
        referee: addr,
        provider: None,
        player: 1,
        game: GameKind::Necklace { n: 12 },
        session: 0,
        answer_delay: Duration::ZERO,
    };
    let strategy = PlayerStrategy::Table(DeterministicStrategy::alternating_necklace(12).unwrap().tables[0].clone());
    let err = run_player_client(&client, &strategy).unwrap_err();
    assert!(matches!(err, NetError::Rejected(ref t) if t.contains("game mismatch")), "{err}");
}

#[test]
fn answer_for_future_round_aborts_match() {
    use std::io::{BufRead, BufReader, Write};
    use std::net::TcpStream;

    let (l, addr) = bind();
    let cfg = MatchConfig {
        game: GameKind::Necklace { n: 4 },
        rounds: 3,
        deadline_ms: 2_000,
        listen: addr.clone(),
        seed: 0,
        session: 0,
    };
    let referee = thread::spawn(move || serve_referee_on(&cfg, l));
    let mut socks: Vec<(TcpStream, BufReader<TcpStream>)> = (1..=2)
        .map(|p| {
            let s = TcpStream::connect(&addr).unwrap();
            let mut r = BufReader::new(s.try_clone().unwrap());
            let mut w = s.try_clone().unwrap();
            w.write_all(&encode_message(&WireMessage::hello(
                Role::Player,
                Some(p),
                GameKind::Necklace { n: 4 },
                0,
                None,
            )))
            .unwrap();
            let mut line = String::new();
            r.read_line(&mut line).unwrap();
            assert!(matches!(decode_message(line.as_bytes()), Ok(WireMessage::Hello { .. })));
            (s, r)
        })
        .collect();
    let mut line = String::new();
    socks[0].1.read_line(&mut line).unwrap();
    assert!(matches!(decode_message(line.as_bytes()), Ok(WireMessage::Question { round: 0, .. })));
    socks[0]
        .0
        .write_all(&encode_message(&WireMessage::Answer { round: 5, a: 1 }))
        .unwrap();
    let result = referee.join().unwrap();
    assert!(matches!(result, Err(NetError::Protocol(_))));
    line.clear();
    socks[0].1.read_line(&mut line).unwrap();
    assert!(matches!(decode_message(line.as_bytes()), Ok(WireMessage::Error { .. })), "{line}");
}

#[test]
fn disconnect_forfeits_remaining_rounds() {
    use std::io::{BufRead, BufReader, Write};
    use std::net::TcpStream;

    let (l, addr) = bind();
    let game = GameKind::Necklace { n: 4 };
    let cfg = MatchConfig {
        game,
        rounds: 5,
        deadline_ms: 2_000,
        listen: addr.clone(),
        seed: 0,
        session: 0,
    };
    let referee = thread::spawn(move || serve_referee_on(&cfg, l));
    let good = {
        let addr = addr.clone();
        thread::spawn(move || {
            let strategy =
                PlayerStrategy::Table(DeterministicStrategy::alternating_necklace(4).unwrap().tables[0].clone());
            let cfg = ClientConfig {
                referee: addr,
                provider: None,
                player: 1,
                game,
                session: 0,
                answer_delay: Duration::ZERO,
            };
            run_player_client(&cfg, &strategy)
        })
    };
    {
        let s = TcpStream::connect(&addr).unwrap();
        let mut r = BufReader::new(s.try_clone().unwrap());
        let mut w = s.try_clone().unwrap();
        w.write_all(&encode_message(&WireMessage::hello(Role::Player, Some(2), game, 0, None)))
            .unwrap();
        let mut line = String::new();
        r.read_line(&mut line).unwrap();
        // Dropping the socket here hangs up before the first answer.
    }
    let out = referee.join().unwrap().unwrap();
    assert!(out.disconnected);
    assert_eq!(out.stats.wins, 0);
    assert_eq!(out.rounds.len(), 5);
    let _ = good.join();
}

#[test]
fn provider_angle_law() {
    let n = 10u32;
    let p = EntanglementProvider::new(ProviderConfig::new(GameKind::Necklace { n }, 77));
    let a = MeasurementSetting::planar(std::f64::consts::PI * 3.0 / f64::from(n));
    let b = MeasurementSetting::planar(std::f64::consts::PI * 4.0 / f64::from(n));
    let rounds = 1_000_000u64;
    let equal = (0..rounds)
        .filter(|&r| p.measure(0, r, 0, a).unwrap() == p.measure(0, r, 1, b).unwrap())
        .count();
    let expected = (std::f64::consts::PI / (2.0 * f64::from(n))).sin().powi(2);
    let freq = equal as f64 / rounds as f64;
    let sigma = (expected * (1.0 - expected) / rounds as f64).sqrt();
    assert!((freq - expected).abs() < 4.0 * sigma, "{freq} vs {expected}");
}

fn histogram(samples: impl Iterator<Item = OutcomeTuple>) -> std::collections::BTreeMap<OutcomeTuple, u64> {
    let mut h = std::collections::BTreeMap::new();
    for t in samples {
        *h.entry(t).or_insert(0) += 1;
    }
    h
}

#[test]
fn sequential_sampling_agrees_with_joint_sampling() {
    let state = make_entangled_state(EntangledKind::Singlet);
    let settings = [MeasurementSetting::planar(0.3), MeasurementSetting::planar(2.1)];
    let joint = joint_distribution(&state, &settings).unwrap();
    let provider = EntanglementProvider::new(ProviderConfig::new(GameKind::Necklace { n: 4 }, 5));
    let n = 1_000_000u64;
    let seq = histogram((0..n).map(|r| {
        OutcomeTuple(vec![
            provider.measure(0, r, 0, settings[0]).unwrap(),
            provider.measure(0, r, 1, settings[1]).unwrap(),
        ])
    }));
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let direct = histogram((0..n).map(|_| sample_outcome(&joint, &mut rng)));
    for t in OutcomeTuple::all(2) {
        let p = joint.prob(&t);
        let a = *seq.get(&t).unwrap_or(&0) as f64 / n as f64;
        let b = *direct.get(&t).unwrap_or(&0) as f64 / n as f64;
        // Two independent estimates: the difference has variance 2p(1-p)/n.
        let sigma = (2.0 * p * (1.0 - p) / n as f64).sqrt();
        assert!((a - b).abs() < 4.0 * sigma, "{t:?}: {a} vs {b}");
    }
}

#[test]
fn provider_reproduces_joint_law_for_random_settings() {
    let mut rng = ChaCha8Rng::seed_from_u64(2718);
    let state = make_entangled_state(EntangledKind::Singlet);
    let n = 100_000u64;
    for pair in 0..20u64 {
        let settings = [
            MeasurementSetting::planar(rng.gen_range(0.0..std::f64::consts::TAU)),
            MeasurementSetting::planar(rng.gen_range(0.0..std::f64::consts::TAU)),
        ];
        let joint = joint_distribution(&state, &settings).unwrap();
        let provider = EntanglementProvider::new(ProviderConfig::new(GameKind::Necklace { n: 4 }, pair));
        let h = histogram((0..n).map(|r| {
            OutcomeTuple(vec![
                provider.measure(0, r, 0, settings[0]).unwrap(),
                provider.measure(0, r, 1, settings[1]).unwrap(),
            ])
        }));
        for t in OutcomeTuple::all(2) {
            let p = joint.prob(&t);
            let f = *h.get(&t).unwrap_or(&0) as f64 / n as f64;
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!((f - p).abs() <= 4.0 * sigma, "pair {pair} {t:?}: {f} vs {p}");
        }
    }
}

#[test]
fn quantum_client_sends_planar_setting() {
    // The quantum player asked bead i measures along pi*i/N.
    let q = canonical_quantum_necklace(10).unwrap();
    let profile = StrategyProfile::Quantum(q);
    let player = profile.player(0);
    assert_eq!(
        player.setting(Question::Bead(3)),
        Some(MeasurementSetting::planar(std::f64::consts::PI * 3.0 / 10.0))
    );
}

fn arb_message() -> impl Strategy<Value = WireMessage> {
    let round = 0u64..1_000_000;
    let text = "[ -~]{0,24}";
    prop_oneof![
        (round.clone(), prop_oneof![Just(Role::Referee), Just(Role::Player), Just(Role::Provider)], proptest::option::of(1u32..4), prop_oneof![Just(GameKind::Ghz), (4u32..500).prop_map(|n| GameKind::Necklace { n: n * 2 })], any::<u64>(), proptest::option::of(1u64..100_000))
            .prop_map(|(r, role, player, game, session, rounds)| {
                let mut m = WireMessage::hello(role, player, game, session, rounds);
                if let WireMessage::Hello { round, .. } = &mut m {
                    *round = r;
                }
                m
            }),
        (round.clone(), 1u32..1000, 1u64..100_000).prop_map(|(round, b, d)| WireMessage::Question {
            round,
            q: format!("bead:{b}"),
            deadline_ms: d
        }),
        (round.clone(), prop_oneof![Just(1i8), Just(-1i8)]).prop_map(|(round, a)| WireMessage::Answer { round, a }),
        (round.clone(), any::<bool>()).prop_map(|(round, win)| WireMessage::Result { round, win }),
        (round.clone(), 1u64..10_000, 0.0f64..1.0).prop_map(|(round, total, f)| {
            let wins = (total as f64 * f) as u64;
            WireMessage::Summary {
                round,
                stats: bellgames::referee::RunStats::from_sessions([(total, wins)]).unwrap(),
            }
        }),
        (round.clone(), any::<u64>(), 1u32..4, 0.0f64..std::f64::consts::TAU).prop_map(|(round, session, player, t)| {
            WireMessage::Measure {
                round,
                session,
                player,
                setting: MeasurementSetting::planar(t).to_string(),
            }
        }),
        (round.clone(), prop_oneof![Just(1i8), Just(-1i8)])
            .prop_map(|(round, outcome)| WireMessage::Outcome { round, outcome }),
        (round, text).prop_map(|(round, text)| WireMessage::Error { round, text }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn wire_round_trip(m in arb_message()) {
        let bytes = encode_message(&m);
        prop_assert_eq!(bytes.iter().filter(|&&b| b == b'\n').count(), 1);
        prop_assert_eq!(decode_message(&bytes), Ok(m));
    }
}
