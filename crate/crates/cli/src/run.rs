//! Command implementations. Every command that writes files also writes a
//! `manifest.json` holding the fully resolved [`Invocation`], so
//! `bellgames replay` can regenerate the same bytes.

use std::fs;
use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use bellgames::games::{GameKind, GameSpec};
use bellgames::netplay::{self, ClientConfig, MatchConfig, ProviderConfig};
use bellgames::referee::{run_experiment, write_transcript_csv, RoundRecord, RunStats, SessionConfig};
use bellgames::strategies::{
    brute_force_classical_optimum, classical_best, closed_form_curves, describe_witness, exact_win_probability,
    DeterministicStrategy, StrategyError, StrategyProfile,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::Usage;

pub const TOOL: &str = "bellgames";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// A resolved command, as recorded in a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Invocation {
    Exact {
        game: GameKind,
        cap: u64,
    },
    Optimize {
        game: GameKind,
        cap: u64,
    },
    /// Closed-form necklace curves for every even N in `n_min..=n_max`.
    Curves {
        n_min: u32,
        n_max: u32,
    },
    Simulate {
        game: GameKind,
        strategy: String,
        /// Contents of a `file:` strategy at the time of the run.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        strategy_text: Option<String>,
        rounds: u64,
        sessions: u64,
        seed: u64,
        cap: u64,
        transcript: bool,
    },
    Serve {
        game: GameKind,
        rounds: u64,
        deadline_ms: u64,
        listen: String,
        seed: u64,
        session: u64,
        transcript: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub invocation: Invocation,
    pub outputs: Vec<String>,
}

/// Rounds to 12 significant digits.
pub fn sig12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

fn rounded_stats(s: &RunStats) -> RunStats {
    RunStats {
        win_rate: sig12(s.win_rate),
        session_pass_rate: sig12(s.session_pass_rate),
        wilson_low: sig12(s.wilson_low),
        wilson_high: sig12(s.wilson_high),
        ..s.clone()
    }
}

fn game_json(game: GameKind) -> Value {
    serde_json::to_value(game).expect("game kind serializes")
}

fn to_document(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn write_manifest(dir: &Path, invocation: &Invocation, outputs: &[&str]) -> Result<()> {
    let manifest = RunManifest {
        tool: TOOL.to_string(),
        version: VERSION.to_string(),
        invocation: invocation.clone(),
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write_file(dir, "manifest.json", text.as_bytes())
}

pub fn load_manifest(path: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| Usage(format!("invalid manifest {}: {e}", path.display())))?;
    if manifest.tool != TOOL {
        return Err(Usage(format!("manifest was written by {:?}", manifest.tool)).into());
    }
    Ok(manifest)
}

pub fn spec_for(game: GameKind) -> Result<GameSpec> {
    game.spec().map_err(|e| Usage(e.to_string()).into())
}

fn usage_from_strategy(e: StrategyError) -> anyhow::Error {
    match e {
        StrategyError::Game(_)
        | StrategyError::SearchSpaceExceedsCap { .. }
        | StrategyError::Parse(_)
        | StrategyError::PlayerCount { .. }
        | StrategyError::MissingQuestion { .. } => Usage(e.to_string()).into(),
        other => other.into(),
    }
}

/// Resolves `quantum`, `classical-best` or `file:PATH` into a profile.
/// For `file:` the already-read text may be supplied.
pub fn resolve_strategy(spec: &GameSpec, source: &str, text: Option<&str>, cap: u64) -> Result<StrategyProfile> {
    match source {
        "quantum" => StrategyProfile::canonical_quantum(spec.kind).map_err(usage_from_strategy),
        "classical-best" => classical_best(spec, cap)
            .map(StrategyProfile::Deterministic)
            .map_err(usage_from_strategy),
        _ => {
            let path = source
                .strip_prefix("file:")
                .ok_or_else(|| Usage(format!("unknown strategy {source:?}")))?;
            let owned;
            let text = match text {
                Some(t) => t,
                None => {
                    owned = fs::read_to_string(path).with_context(|| format!("reading strategy file {path}"))?;
                    &owned
                }
            };
            DeterministicStrategy::parse_text(spec, text)
                .map(StrategyProfile::Deterministic)
                .map_err(usage_from_strategy)
        }
    }
}

/// Executes an invocation; writes files into `out` when given and returns
/// the primary document printed on stdout.
pub fn execute(invocation: &Invocation, out: Option<&Path>) -> Result<String> {
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    match invocation {
        Invocation::Exact { game, cap } => {
            let doc = to_document(&exact_document(*game, *cap)?);
            if let Some(dir) = out {
                write_file(dir, "exact.json", doc.as_bytes())?;
                write_manifest(dir, invocation, &["exact.json"])?;
            }
            Ok(doc)
        }
        Invocation::Optimize { game, cap } => {
            let spec = spec_for(*game)?;
            let opt = brute_force_classical_optimum(&spec, *cap).map_err(usage_from_strategy)?;
            let witness = describe_witness(&spec, &opt);
            let doc = to_document(&json!({
                "game": game_json(*game),
                "optimum": sig12(opt.value_f64()),
                "optimum_fraction": format!("{}/{}", opt.value.numer(), opt.value.denom()),
                "profiles_searched": opt.profiles_searched,
                "witness": witness,
            }));
            if let Some(dir) = out {
                write_file(dir, "optimize.json", doc.as_bytes())?;
                write_file(dir, "witness.txt", witness.as_bytes())?;
                write_manifest(dir, invocation, &["optimize.json", "witness.txt"])?;
            }
            Ok(doc)
        }
        Invocation::Curves { n_min, n_max } => {
            let csv = curves_csv(*n_min, *n_max)?;
            if let Some(dir) = out {
                write_file(dir, "curves.csv", csv.as_bytes())?;
                write_manifest(dir, invocation, &["curves.csv"])?;
            }
            Ok(csv)
        }
        Invocation::Simulate {
            game,
            strategy,
            strategy_text,
            rounds,
            sessions,
            seed,
            cap,
            transcript,
        } => {
            let spec = spec_for(*game)?;
            let profile = resolve_strategy(&spec, strategy, strategy_text.as_deref(), *cap)?;
            let cfg = SessionConfig {
                rounds_per_session: *rounds,
                num_sessions: *sessions,
                seed: *seed,
            };
            cfg.validate().map_err(|e| Usage(e.to_string()))?;
            let exp = run_experiment(&spec, &profile, &cfg, *transcript && out.is_some())?;
            let exact = exact_win_probability(&spec, &profile)?;
            let doc = to_document(&json!({
                "game": game_json(*game),
                "strategy": strategy,
                "rounds_per_session": rounds,
                "num_sessions": sessions,
                "seed": seed,
                "exact_win_probability": sig12(exact),
                "stats": rounded_stats(&exp.stats),
            }));
            if let Some(dir) = out {
                write_file(dir, "stats.json", doc.as_bytes())?;
                let mut outputs = vec!["stats.json"];
                if let Some(records) = &exp.transcript {
                    write_csv(dir, spec.num_players, records)?;
                    outputs.push("transcript.csv");
                }
                write_manifest(dir, invocation, &outputs)?;
            }
            Ok(doc)
        }
        Invocation::Serve {
            game,
            rounds,
            deadline_ms,
            listen,
            seed,
            session,
            transcript,
        } => {
            let spec = spec_for(*game)?;
            let cfg = MatchConfig {
                game: *game,
                rounds: *rounds,
                deadline_ms: *deadline_ms,
                listen: listen.clone(),
                seed: *seed,
                session: *session,
            };
            cfg.validate().map_err(|e| Usage(e.to_string()))?;
            let listener = TcpListener::bind(listen).with_context(|| format!("binding {listen}"))?;
            eprintln!("referee listening on {}", listener.local_addr()?);
            let outcome = netplay::serve_referee_on(&cfg, listener)?;
            let doc = to_document(&json!({
                "game": game_json(*game),
                "rounds": rounds,
                "deadline_ms": deadline_ms,
                "seed": seed,
                "session": session,
                "disconnected": outcome.disconnected,
                "stats": rounded_stats(&outcome.stats),
            }));
            if let Some(dir) = out {
                write_file(dir, "stats.json", doc.as_bytes())?;
                let mut outputs = vec!["stats.json"];
                if *transcript {
                    let mut buf = Vec::new();
                    write_transcript_csv(&mut buf, spec.num_players, outcome.rows(*session))?;
                    write_file(dir, "transcript.csv", &buf)?;
                    outputs.push("transcript.csv");
                }
                write_manifest(dir, invocation, &outputs)?;
            }
            Ok(doc)
        }
    }
}

fn write_csv(dir: &Path, num_players: usize, records: &[RoundRecord]) -> Result<()> {
    let path = dir.join("transcript.csv");
    let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = std::io::BufWriter::new(file);
    write_transcript_csv(&mut w, num_players, records.iter().map(RoundRecord::row))?;
    w.flush()?;
    Ok(())
}

fn curves_csv(n_min: u32, n_max: u32) -> Result<String> {
    if n_min > n_max {
        return Err(Usage(format!("empty range {n_min}..={n_max}")).into());
    }
    let mut s = String::from("n,rounds,classical_round_win,quantum_round_fail,eq1,eq2,advantage\n");
    for n in (n_min..=n_max).filter(|n| n % 2 == 0) {
        let c = closed_form_curves(n).map_err(usage_from_strategy)?;
        let advantage = 1.0 - c.quantum_round_fail - c.classical_round_win;
        s.push_str(&format!(
            "{n},{},{},{},{},{},{}\n",
            5 * n,
            sig12(c.classical_round_win),
            sig12(c.quantum_round_fail),
            sig12(c.eq1_classical_session),
            sig12(c.eq2_quantum_session),
            sig12(advantage)
        ));
    }
    Ok(s)
}

fn exact_document(game: GameKind, cap: u64) -> Result<Value> {
    let spec = spec_for(game)?;
    let quantum = exact_win_probability(&spec, &StrategyProfile::canonical_quantum(game)?)?;
    let mut doc = json!({ "game": game_json(game), "quantum_value": sig12(quantum) });
    match brute_force_classical_optimum(&spec, cap) {
        Ok(opt) => {
            doc["classical_optimum"] = json!(sig12(opt.value_f64()));
            doc["classical_optimum_fraction"] = json!(format!("{}/{}", opt.value.numer(), opt.value.denom()));
        }
        Err(e @ StrategyError::SearchSpaceExceedsCap { .. }) => {
            eprintln!("notice: classical optimum omitted ({e})");
            doc["classical_optimum"] = Value::Null;
            doc["classical_optimum_note"] = json!(e.to_string());
        }
        Err(e) => return Err(e.into()),
    }
    if let GameKind::Necklace { n } = game {
        let c = closed_form_curves(n)?;
        doc["rounds_per_session"] = json!(spec.session_rounds_default);
        doc["classical_round_win"] = json!(sig12(c.classical_round_win));
        doc["per_round_fail"] = json!(sig12(c.quantum_round_fail));
        doc["eq1"] = json!(sig12(c.eq1_classical_session));
        doc["eq2"] = json!(sig12(c.eq2_quantum_session));
    }
    Ok(doc)
}

pub struct PlayArgs {
    pub game: GameKind,
    pub strategy: String,
    pub connect: String,
    pub provider: Option<String>,
    pub player: u32,
    pub session: u64,
    pub cap: u64,
    pub answer_delay_ms: u64,
}

pub fn play(args: &PlayArgs) -> Result<String> {
    let spec = spec_for(args.game)?;
    if args.player == 0 || args.player as usize > spec.num_players {
        return Err(Usage(format!("--player must be in 1..={}", spec.num_players)).into());
    }
    let profile = resolve_strategy(&spec, &args.strategy, None, args.cap)?;
    let cfg = ClientConfig {
        referee: args.connect.clone(),
        provider: args.provider.clone(),
        player: args.player,
        game: args.game,
        session: args.session,
        answer_delay: Duration::from_millis(args.answer_delay_ms),
    };
    let report = netplay::run_player_client(&cfg, &profile.player(args.player as usize - 1))?;
    Ok(to_document(&json!({
        "player": args.player,
        "answered": report.answered,
        "wins": report.wins,
        "summary": report.summary.as_ref().map(rounded_stats),
    })))
}

pub fn provide(game: GameKind, listen: &str, seed: u64, session: u64) -> Result<()> {
    spec_for(game)?;
    let listener = TcpListener::bind(listen).with_context(|| format!("binding {listen}"))?;
    eprintln!("provider listening on {}", listener.local_addr()?);
    let cfg = ProviderConfig {
        session,
        ..ProviderConfig::new(game, seed)
    };
    netplay::serve_provider(cfg, listener)?;
    Ok(())
}

/// Output directory for a replay: the explicit one, or the manifest's own.
pub fn replay_dir(manifest: &Path, out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| manifest.parent().map(Path::to_path_buf).unwrap_or_default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(sig12(0.883_932_012_059_080_7), 0.883_932_012_059);
        assert_eq!(sig12(0.006_570_483_042_414_603), 0.006_570_483_042_41);
        assert_eq!(sig12(1.0), 1.0);
        assert_eq!(sig12(0.0), 0.0);
    }

    #[test]
    fn invocation_round_trips() {
        let inv = Invocation::Simulate {
            game: GameKind::Necklace { n: 10 },
            strategy: "file:x.txt".into(),
            strategy_text: Some("GRGRGRGRGR\nGRGRGRGRGR\n".into()),
            rounds: 50,
            sessions: 3,
            seed: 1,
            cap: 1 << 24,
            transcript: true,
        };
        let text = serde_json::to_string(&inv).unwrap();
        assert_eq!(serde_json::from_str::<Invocation>(&text).unwrap(), inv);
    }
}
