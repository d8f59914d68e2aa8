use std::io::BufRead;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::{Duration, Instant};

use anyhow::{bail, Context};
use clap::Parser;
use hopes_core::session::{replay, EventBody, RunStatus, Session};
use hopes_server::api::{router, AppState, ServerSettings};
use hopes_server::cli::{Cli, Command, ReplayArgs, RunArgs, ServeArgs};
use tracing_subscriber::EnvFilter;

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Serve(args) => serve(args),
        Command::Replay(args) => replay_run(args),
    }
}

/// Stdin lines, read on a separate thread so a turn can time out.
fn stdin_lines() -> Receiver<String> {
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        for line in std::io::stdin().lock().lines() {
            let Ok(line) = line else { break };
            if tx.send(line).is_err() {
                break;
            }
        }
    });
    rx
}

/// One message: lines up to a blank line or end of input. Returns what was
/// typed when the deadline passes.
fn read_message(lines: &Receiver<String>, timeout: Option<Duration>) -> String {
    let deadline = timeout.map(|t| Instant::now() + t);
    let mut text: Vec<String> = Vec::new();
    loop {
        let line = match deadline {
            Some(deadline) => {
                match lines.recv_timeout(deadline.saturating_duration_since(Instant::now())) {
                    Ok(line) => line,
                    Err(RecvTimeoutError::Timeout) => {
                        eprintln!("(time is up)");
                        break;
                    }
                    Err(RecvTimeoutError::Disconnected) => break,
                }
            }
            None => match lines.recv() {
                Ok(line) => line,
                Err(_) => break,
            },
        };
        if line.trim().is_empty() && !text.is_empty() {
            break;
        }
        if !line.trim().is_empty() {
            text.push(line);
        }
    }
    text.join("\n")
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let config = args.config.session_config()?;
    if let Some(dir) = &config.out_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut session = Session::create("cli", config)?;
    session.events().subscribe(|e| match &e.body {
        EventBody::MessageEmitted { message } => {
            let who = if message.authored_by_human { " (you)" } else { "" };
            println!("\n[phase {} tick {}] {}{who}:\n{}", message.phase, message.tick, message.agent, message.text.trim_end());
        }
        EventBody::DecisionApplied { phase, decision, carried_over, .. } => {
            let carried = if *carried_over { " (carried over)" } else { "" };
            println!(
                "\n== phase {phase} decision{carried}: agri {:.0}%, env {:.0}%, meat goal {:+.0}%, PA goal {:+.0}%",
                decision.share_agri * 100.0,
                decision.share_env * 100.0,
                decision.adj_meat * 100.0,
                decision.adj_pa * 100.0
            );
        }
        _ => {}
    });
    session.begin(None)?;
    let timeout = args.human_timeout.map(Duration::from_secs);
    let lines = stdin_lines();
    let mut status = session.run_until_pause()?;
    while let RunStatus::AwaitingHuman { agent } = &status {
        let snapshot = session.snapshot();
        if let Some(prompt) = &snapshot.human_prompt {
            eprintln!(
                "\n---- your turn as {agent} ----\n{}\n",
                prompt.user.trim_end()
            );
        }
        eprintln!("Type your message and end it with a blank line:");
        let text = read_message(&lines, timeout);
        status = if text.trim().is_empty() {
            session.expire_human()?
        } else {
            session.submit_human_decision(&text)?
        };
    }
    let snapshot = session.snapshot();
    println!(
        "\nrun {} {:?} at tick {}: agricultural surplus {:.3}, environmental surplus {:.3}",
        snapshot.run,
        status,
        snapshot.tick,
        snapshot.accounts.agri.surplus,
        snapshot.accounts.env.surplus
    );
    if let Some(dir) = session.run_dir() {
        println!("records written to {}", dir.display());
    }
    if let RunStatus::Failed { reason } = status {
        bail!("run failed: {reason}");
    }
    Ok(())
}

fn serve(args: ServeArgs) -> anyhow::Result<()> {
    let base = args.config.session_config()?;
    let settings = ServerSettings {
        out_root: base.out_dir.clone(),
        base: hopes_core::session::SessionConfig {
            out_dir: None,
            ..base
        },
    };
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&args.addr)
            .await
            .with_context(|| format!("binding {}", args.addr))?;
        tracing::info!(addr = %listener.local_addr()?, "listening");
        axum::serve(listener, router(AppState::new(settings))).await?;
        Ok(())
    })
}

fn replay_run(args: ReplayArgs) -> anyhow::Result<()> {
    let session = replay(&args.run_dir, args.out.clone())?;
    let mut mismatched = Vec::new();
    for (name, replayed) in [
        ("series.csv", session.series_csv()),
        ("transcript.jsonl", session.transcript_jsonl()),
    ] {
        let path = args.run_dir.join(name);
        let original = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        if original != replayed {
            mismatched.push(name);
        }
    }
    if !mismatched.is_empty() {
        bail!(
            "replay differs from the recording in {}",
            mismatched.join(", ")
        );
    }
    println!(
        "replay of {} matches: {} ticks, {} messages",
        args.run_dir.display(),
        session.tick(),
        session.messages().len()
    );
    Ok(())
}
