use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use idcoach_core::board::{Blackboard, ProjectGlobals};
use idcoach_core::solve::{self, Evaluation};
use idcoach_gateway::{load_session, run_script_on, save_session, service, AppState, ConsultationScript, PortfolioStore};

#[derive(Parser)]
#[command(name = "idcoach", version, about = "Coached influence-diagram consultations for R&D funding decisions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Start a fresh session file.
    New {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        rate: Option<f64>,
        #[arg(long)]
        horizon: Option<u32>,
        #[arg(long)]
        currency: Option<String>,
    },
    /// Replay a consultation script, optionally on top of a saved session.
    Run {
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        session: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a completed session and print the tornado table.
    Eval {
        session: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Serve the HTTP interface used by the coach front end.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long, default_value = "idcoach-data")]
        data: PathBuf,
    },
    /// List the portfolio, or record a completed session into it.
    Portfolio {
        #[arg(long, default_value = "idcoach-data/portfolio.jsonl")]
        store: PathBuf,
        #[arg(long)]
        record: Option<PathBuf>,
    },
}

fn print_evaluation(ev: &Evaluation, currency: &str) {
    println!("P(technical achievement)       {:.6}", ev.p_ta);
    println!("E[investment PV]               {:.4} {currency}", ev.e_invest_pv);
    println!("E[contribution PV | success]   {:.4} {currency}", ev.e_contrib_pv_given_success);
    println!("E[NPV | fund]                  {:.4} {currency}", ev.e_npv_fund);
    println!("Decision                       {}", serde_json::to_string(&ev.decision).unwrap_or_default().trim_matches('"'));
    if !ev.tornado.is_empty() {
        println!();
        println!("{:<32} {:>12} {:>12} {:>12}", "variable", "NPV low", "NPV high", "swing");
        for t in &ev.tornado {
            println!("{:<32} {:>12.4} {:>12.4} {:>12.4}", t.name, t.npv_low, t.npv_high, t.swing);
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::New { out, name, rate, horizon, currency } => {
            let mut g = ProjectGlobals::default();
            if let Some(n) = name {
                g.project_name = n;
            }
            if let Some(r) = rate {
                g.rate = r;
            }
            if let Some(h) = horizon {
                g.horizon = h;
            }
            if let Some(c) = currency {
                g.currency = c;
            }
            let bb = Blackboard::new(g)?;
            save_session(&bb, &out)?;
            println!("created {}", out.display());
        }
        Command::Run { script, session, out } => {
            let text = std::fs::read_to_string(&script).with_context(|| format!("reading {}", script.display()))?;
            let script = ConsultationScript::parse(&text)?;
            let bb = match &session {
                Some(p) => load_session(p)?,
                None => Blackboard::new(script.globals.clone().unwrap_or_default())?,
            };
            match run_script_on(bb, &script) {
                Ok(outcome) => {
                    println!("ran {} steps", outcome.effects.len());
                    if let Some(p) = out.as_ref().or(session.as_ref()) {
                        save_session(&outcome.blackboard, p)?;
                    }
                    match &outcome.evaluation {
                        Some(ev) => print_evaluation(ev, &outcome.blackboard.globals().currency),
                        None => println!("model not complete yet"),
                    }
                }
                Err(abort) => {
                    eprintln!("{abort}");
                    if let Some(p) = &out {
                        save_session(&abort.partial, p)?;
                    }
                    return Ok(ExitCode::from(2));
                }
            }
        }
        Command::Eval { session, json } => {
            let bb = load_session(&session)?;
            let ev = solve::evaluate(bb.diagram(), &bb.globals().discounting())?;
            if json {
                println!("{}", serde_json::to_string_pretty(&ev)?);
            } else {
                print_evaluation(&ev, &bb.globals().currency);
            }
        }
        Command::Serve { addr, data } => {
            let state = AppState::open(&data)?;
            let rt = tokio::runtime::Runtime::new()?;
            eprintln!("listening on http://{addr}");
            rt.block_on(service::serve(addr, state))?;
        }
        Command::Portfolio { store, record } => {
            let store = PortfolioStore::new(store);
            if let Some(p) = record {
                let s = store.record(&load_session(&p)?)?;
                println!("recorded {}", s.project_name);
            }
            for s in store.list()? {
                println!("{:<32} p={:.4} E[NPV]={:.4} {}", s.project_name, s.p_ta, s.e_npv_fund, s.recorded_at);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
