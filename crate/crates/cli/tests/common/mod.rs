#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, ChildStderr, Command, Output, Stdio};
use std::thread;

pub const BIN: &str = env!("CARGO_BIN_EXE_bellgames");

pub fn bellgames(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn bellgames")
}

pub fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is json")
}

/// A long-running role (serve or provide) bound to an ephemeral port.
pub struct Daemon {
    pub child: Child,
    pub addr: String,
}

impl Daemon {
    /// Spawns `bellgames <args> --listen 127.0.0.1:0` and waits for the
    /// "listening on" line to learn the port.
    pub fn spawn(args: &[&str]) -> Daemon {
        let mut full = args.to_vec();
        full.extend(["--listen", "127.0.0.1:0"]);
        Daemon::spawn_raw(&full)
    }

    /// Replays a recorded `serve` manifest, which already names its address.
    pub fn spawn_replay(manifest: &Path, out: &Path) -> Daemon {
        Daemon::spawn_raw(&["replay", "--manifest", manifest.to_str().unwrap(), "--out", out.to_str().unwrap()])
    }

    fn spawn_raw(args: &[&str]) -> Daemon {
        let mut child = Command::new(BIN)
            .args(args)
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .expect("spawn daemon");
        let mut stderr = BufReader::new(child.stderr.take().unwrap());
        let mut line = String::new();
        stderr.read_line(&mut line).expect("read listen line");
        let addr = line
            .trim()
            .rsplit(' ')
            .next()
            .filter(|_| line.contains("listening on"))
            .unwrap_or_else(|| panic!("unexpected first line {line:?}"))
            .to_string();
        drain(stderr);
        Daemon { child, addr }
    }

    pub fn wait(self) -> Output {
        self.child.wait_with_output().expect("daemon exits")
    }
}

fn drain(mut r: BufReader<ChildStderr>) {
    thread::spawn(move || {
        let mut sink = String::new();
        while r.read_line(&mut sink).map(|n| n > 0).unwrap_or(false) {
            sink.clear();
        }
    });
}

pub fn spawn_player(game: &[&str], referee: &str, provider: Option<&str>, player: u32, extra: &[&str]) -> Child {
    let mut cmd = Command::new(BIN);
    cmd.arg("play")
        .args(game)
        .args(["--connect", referee, "--player", &player.to_string()])
        .args(extra)
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    if let Some(p) = provider {
        cmd.args(["--provider", p]);
    }
    cmd.spawn().expect("spawn player")
}

/// Runs a full networked match through the binary and returns the referee's
/// output. Quantum strategies get a provider process.
pub fn cli_match(game: &[&str], serve_extra: &[&str], strategy: &str, player_extra: &[&str]) -> (Output, Vec<Output>) {
    let seats = if game.contains(&"ghz") { 3 } else { 2 };
    let provider = (strategy == "quantum").then(|| {
        let mut args = vec!["provide"];
        args.extend_from_slice(game);
        args.extend_from_slice(seed_of(serve_extra));
        Daemon::spawn(&args)
    });
    let mut args = vec!["serve"];
    args.extend_from_slice(game);
    args.extend_from_slice(serve_extra);
    let referee = Daemon::spawn(&args);
    let mut extra = vec!["--strategy", strategy];
    extra.extend_from_slice(player_extra);
    let players: Vec<Child> = (1..=seats)
        .map(|k| spawn_player(game, &referee.addr, provider.as_ref().map(|d| d.addr.as_str()), k, &extra))
        .collect();
    let outputs = players.into_iter().map(|c| c.wait_with_output().unwrap()).collect();
    let served = referee.wait();
    if let Some(p) = provider {
        p.wait();
    }
    (served, outputs)
}

fn seed_of<'a>(args: &'a [&'a str]) -> &'a [&'a str] {
    match args.iter().position(|a| *a == "--seed") {
        Some(i) => &args[i..i + 2],
        None => &[],
    }
}
