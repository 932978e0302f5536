//! `mdae`: structural analysis and hot-restart synthesis for multimode DAE
//! models.
//!
//! Exit codes: 0 success / good solution; 2 diagnosis produced (restart
//! under-determined); 3 structural failure; 4 usage or IO errors.

use clap::{Args, Parser, Subcommand};
use mdae_core::corpus::{param_values, parse_limits};
use mdae_core::mcarray::ModeChange;
use mdae_core::model::{parse_model, validate_model, Model};
use mdae_core::report::{transition_report, Report, SCHEMA_VERSION};
use mdae_core::restart::{
    epsilon_convergence_check, previous_consistency_residuals, solve_restart_numeric, Outcome,
};
use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "mdae",
    version,
    about = "structural analysis of multimode DAE mode changes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Emit the machine-readable JSON report instead of text.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a model: squareness and per-mode signature analysis.
    Check { model: PathBuf },
    /// Synthesize the restart system for one transition.
    Restart(RestartArgs),
    /// Dump the full mode-change array (instants, facts, disabled rows, matching).
    Explain {
        model: PathBuf,
        /// Source mode of the transition.
        #[arg(long)]
        from: String,
        /// Target mode of the transition.
        #[arg(long)]
        to: String,
        /// Force the array height (reproduces over-tall negative results).
        #[arg(long)]
        height: Option<u32>,
    },
    /// Run the golden corpus and print one line per case.
    Corpus {
        /// Fixture directory (defaults to the workspace corpus/).
        dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RestartArgs {
    model: PathBuf,
    /// Source mode of the transition.
    #[arg(long)]
    from: String,
    /// Target mode of the transition.
    #[arg(long)]
    to: String,
    /// Force the array height instead of the computed bound.
    #[arg(long)]
    height: Option<u32>,
    /// Left-limit valuation: a JSON file or an inline JSON object.
    #[arg(long)]
    limits: Option<String>,
    /// Comma-separated eps values for the convergence table (needs --limits).
    #[arg(long, value_delimiter = ',')]
    verify_eps: Vec<f64>,
}

fn color_enabled() -> bool {
    if std::env::var("MDAE_COLOR")
        .map(|v| v == "0")
        .unwrap_or(false)
    {
        return false;
    }
    std::io::stdout().is_terminal()
}

fn load_model(path: &PathBuf) -> Result<Model, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_model(&text).map_err(|e| format!("{}:{e}", path.display()))
}

fn run() -> Result<u8, String> {
    let cli = Cli::parse();
    match cli.command {
        Command::Check { model } => {
            let m = load_model(&model)?;
            let report = validate_model(&m);
            if cli.json {
                let mut doc = serde_json::Map::new();
                doc.insert("schema_version".into(), SCHEMA_VERSION.into());
                doc.insert("model".into(), m.name.to_string().into());
                doc.insert(
                    "findings".into(),
                    serde_json::to_value(&report.findings).unwrap(),
                );
                println!("{}", serde_json::to_string_pretty(&doc).unwrap());
            } else {
                for f in &report.findings {
                    println!("{}: {}", f.severity, f.message);
                }
                if report.ok() {
                    println!(
                        "model {} validates: {} modes, {} transitions",
                        m.name,
                        m.modes.len(),
                        m.transitions.len()
                    );
                }
            }
            Ok(if report.ok() { 0 } else { 3 })
        }
        Command::Restart(args) => {
            let m = load_model(&args.model)?;
            let mc = ModeChange::from_model(&m, &args.from, &args.to).map_err(|e| e.to_string())?;
            let params = param_values(&m);
            let limits = match &args.limits {
                Some(spec) => {
                    let text = if spec.trim_start().starts_with('{') {
                        spec.clone()
                    } else {
                        std::fs::read_to_string(spec).map_err(|e| format!("{spec}: {e}"))?
                    };
                    Some(parse_limits(&text)?)
                }
                None => None,
            };
            let outcome = match mdae_core::generate_restart(&mc, args.height) {
                Ok(o) => o,
                Err(e) => {
                    eprintln!("{e}");
                    return Ok(3);
                }
            };
            let mut warnings = Vec::new();
            let mut numeric = None;
            let mut convergence = None;
            if let Some(limits) = &limits {
                for (row, residual) in previous_consistency_residuals(&mc, limits, &params) {
                    if residual.abs() > 1e-9 {
                        warnings.push(format!(
                            "left limits violate previous-mode consistency {row} (residual {residual:.3e})"
                        ));
                    }
                }
                if let Outcome::Good {
                    array,
                    solution,
                    restart,
                } = &outcome
                {
                    match solve_restart_numeric(restart, limits, &params, Default::default()) {
                        Ok(val) => {
                            if !args.verify_eps.is_empty() {
                                match epsilon_convergence_check(
                                    array,
                                    solution,
                                    restart,
                                    limits,
                                    &params,
                                    &args.verify_eps,
                                ) {
                                    Ok(rows) => convergence = Some(rows),
                                    Err(e) => {
                                        warnings.push(format!("convergence check failed: {e}"))
                                    }
                                }
                            }
                            numeric = Some(val);
                        }
                        Err(e) => warnings.push(format!("numeric solve failed: {e}")),
                    }
                }
            }
            let good = matches!(outcome, Outcome::Good { .. });
            let report: Report = transition_report(
                &m,
                &args.from,
                &args.to,
                &outcome,
                numeric.as_ref(),
                convergence,
                warnings,
            );
            if cli.json {
                println!("{}", report.to_json());
            } else {
                print!("{}", report.to_text(color_enabled()));
            }
            Ok(if good { 0 } else { 2 })
        }
        Command::Explain {
            model,
            from,
            to,
            height,
        } => {
            let m = load_model(&model)?;
            let mc = ModeChange::from_model(&m, &from, &to).map_err(|e| e.to_string())?;
            let outcome = match mdae_core::generate_restart(&mc, height) {
                Ok(o) => o,
                Err(e) => {
                    eprintln!("{e}");
                    return Ok(3);
                }
            };
            let report = transition_report(&m, &from, &to, &outcome, None, None, vec![]);
            if cli.json {
                println!("{}", report.to_json());
            } else {
                print!("{}", report.to_text(color_enabled()));
            }
            Ok(0)
        }
        Command::Corpus { dir } => {
            let dir = dir.unwrap_or_else(mdae_core::corpus::default_corpus_dir);
            let results = mdae_core::corpus::run_corpus(&dir)?;
            let mut ok = true;
            for r in &results {
                if r.passed() {
                    println!("PASS {}", r.name);
                } else {
                    ok = false;
                    println!("FAIL {}", r.name);
                    for f in &r.failures {
                        println!("     {f}");
                    }
                }
            }
            Ok(if ok { 0 } else { 3 })
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(4)
        }
    }
}
