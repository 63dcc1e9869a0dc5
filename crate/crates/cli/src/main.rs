//! `bellgames`: exact values, simulations, classical search and networked
//! matches for the GHZ game and the impossible-necklace game.
//!
//! Exit codes: 0 on success, 2 for usage or validation errors, 3 for
//! runtime and protocol failures.

mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use bellgames::games::GameKind;
use bellgames::strategies::DEFAULT_PROFILE_CAP;
use clap::{Args, Parser, Subcommand, ValueEnum};

use run::Invocation;

/// A usage or validation failure; maps to exit code 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Parser)]
#[command(name = "bellgames", version, about = "Nonlocal game lab: GHZ and impossible-necklace games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum GameName {
    Ghz,
    Necklace,
}

#[derive(Args, Clone)]
struct GameArgs {
    #[arg(long, value_enum)]
    game: GameName,
    /// Bead count for the necklace game (even, at least 4).
    #[arg(long)]
    n: Option<u32>,
}

impl GameArgs {
    fn kind(&self) -> Result<GameKind> {
        match (self.game, self.n) {
            (GameName::Ghz, None) => Ok(GameKind::Ghz),
            (GameName::Ghz, Some(_)) => Err(Usage("--n only applies to the necklace game".into()).into()),
            (GameName::Necklace, Some(n)) => {
                bellgames::games::validate_beads(n).map_err(|e| Usage(e.to_string()))?;
                Ok(GameKind::Necklace { n })
            }
            (GameName::Necklace, None) => Err(Usage("the necklace game needs --n".into()).into()),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Exact classical and quantum values and session curves.
    Exact {
        #[command(flatten)]
        game: GameArgs,
        /// Largest number of deterministic profiles to enumerate.
        #[arg(long, default_value_t = DEFAULT_PROFILE_CAP)]
        cap: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form necklace curves over a range of even N, as CSV.
    Curves {
        #[arg(long, default_value_t = 4)]
        n_min: u32,
        #[arg(long, default_value_t = 200)]
        n_max: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo sessions against the in-process referee.
    Simulate {
        #[command(flatten)]
        game: GameArgs,
        /// quantum, classical-best or file:PATH
        #[arg(long, default_value = "quantum")]
        strategy: String,
        /// Rounds per session; defaults to the game's session length.
        #[arg(long)]
        rounds: Option<u64>,
        #[arg(long, default_value_t = 1)]
        sessions: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_PROFILE_CAP)]
        cap: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Skip transcript.csv.
        #[arg(long)]
        no_transcript: bool,
    },
    /// Brute-force classical optimum with a witness strategy file.
    Optimize {
        #[command(flatten)]
        game: GameArgs,
        #[arg(long, default_value_t = DEFAULT_PROFILE_CAP)]
        cap: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a networked referee for one session.
    Serve {
        #[command(flatten)]
        game: GameArgs,
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
        #[arg(long)]
        rounds: Option<u64>,
        #[arg(long, default_value_t = 1000)]
        deadline_ms: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        session: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_transcript: bool,
    },
    /// Join a networked match as one player.
    Play {
        #[command(flatten)]
        game: GameArgs,
        #[arg(long, default_value = "127.0.0.1:7878")]
        connect: String,
        /// Entanglement provider address; required for quantum strategies.
        #[arg(long)]
        provider: Option<String>,
        /// 1-based seat.
        #[arg(long)]
        player: u32,
        #[arg(long, default_value = "quantum")]
        strategy: String,
        #[arg(long, default_value_t = 0)]
        session: u64,
        #[arg(long, default_value_t = DEFAULT_PROFILE_CAP)]
        cap: u64,
        #[arg(long, default_value_t = 0, hide = true)]
        answer_delay_ms: u64,
    },
    /// Serve measurements on the shared state to networked players.
    Provide {
        #[command(flatten)]
        game: GameArgs,
        #[arg(long, default_value = "127.0.0.1:7879")]
        listen: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        session: u64,
    },
    /// Re-run the command recorded in a manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory; defaults to the manifest's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn dispatch(command: Command) -> Result<()> {
    let (invocation, out) = match command {
        Command::Exact { game, cap, out } => (Invocation::Exact { game: game.kind()?, cap }, out),
        Command::Optimize { game, cap, out } => (Invocation::Optimize { game: game.kind()?, cap }, out),
        Command::Curves { n_min, n_max, out } => (Invocation::Curves { n_min, n_max }, out),
        Command::Simulate {
            game,
            strategy,
            rounds,
            sessions,
            seed,
            cap,
            out,
            no_transcript,
        } => {
            let kind = game.kind()?;
            let strategy_text = match strategy.strip_prefix("file:") {
                Some(path) => Some(std::fs::read_to_string(path).map_err(|e| Usage(format!("{path}: {e}")))?),
                None => None,
            };
            let rounds = rounds.unwrap_or(run::spec_for(kind)?.session_rounds_default);
            let inv = Invocation::Simulate {
                game: kind,
                strategy,
                strategy_text,
                rounds,
                sessions,
                seed,
                cap,
                transcript: !no_transcript,
            };
            (inv, out)
        }
        Command::Serve {
            game,
            listen,
            rounds,
            deadline_ms,
            seed,
            session,
            out,
            no_transcript,
        } => {
            let kind = game.kind()?;
            let rounds = rounds.unwrap_or(run::spec_for(kind)?.session_rounds_default);
            let inv = Invocation::Serve {
                game: kind,
                rounds,
                deadline_ms,
                listen,
                seed,
                session,
                transcript: !no_transcript,
            };
            (inv, out)
        }
        Command::Play {
            game,
            connect,
            provider,
            player,
            strategy,
            session,
            cap,
            answer_delay_ms,
        } => {
            let args = run::PlayArgs {
                game: game.kind()?,
                strategy,
                connect,
                provider,
                player,
                session,
                cap,
                answer_delay_ms,
            };
            print!("{}", run::play(&args)?);
            return Ok(());
        }
        Command::Provide {
            game,
            listen,
            seed,
            session,
        } => return run::provide(game.kind()?, &listen, seed, session),
        Command::Replay { manifest, out } => {
            let m = run::load_manifest(&manifest)?;
            let dir = run::replay_dir(&manifest, out);
            (m.invocation, Some(dir))
        }
    };
    print!("{}", run::execute(&invocation, out.as_deref())?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
