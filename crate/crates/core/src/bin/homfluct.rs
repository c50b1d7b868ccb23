use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use homfluct::cli::{run, ExperimentConfig, ExperimentKind};

#[derive(Parser)]
#[command(name = "homfluct", version, about = "Fluctuations in stochastic homogenization with random potentials")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the random potential at a point and one correlation length away.
    FieldSample(Common),
    /// Effective potential strength, with the Gaussian closed form.
    Sigma2(Common),
    /// Corrector variance by quadrature and by field ensemble.
    Corrector(Common),
    /// Raw u_eps ensemble via Feynman-Kac.
    Simulate(Common),
    /// Convergence rate of E|u_eps - u_hom|.
    Rates(Common),
    /// Distributional test of the rescaled fluctuation.
    DistTest(Common),
    /// Limiting SPDE variance against finite-eps variance.
    SpdeVar(Common),
    /// Exact-identity validation suite.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set problem.t=0.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads. Results do not depend on this.
    #[arg(long, env = "HF_WORKERS")]
    workers: Option<usize>,
}

fn split(cmd: Command) -> (ExperimentKind, Common) {
    match cmd {
        Command::FieldSample(c) => (ExperimentKind::FieldSample, c),
        Command::Sigma2(c) => (ExperimentKind::Sigma2, c),
        Command::Corrector(c) => (ExperimentKind::Corrector, c),
        Command::Simulate(c) => (ExperimentKind::Simulate, c),
        Command::Rates(c) => (ExperimentKind::Rates, c),
        Command::DistTest(c) => (ExperimentKind::DistTest, c),
        Command::SpdeVar(c) => (ExperimentKind::SpdeVar, c),
        Command::Validate(c) => (ExperimentKind::Validate, c),
    }
}

fn key_of(line: &str) -> Option<&str> {
    let l = line.split('#').next()?.trim();
    l.split_once('=').map(|(k, _)| k.trim())
}

fn build_config(kind: ExperimentKind, c: &Common) -> homfluct::Result<ExperimentConfig> {
    let text = match &c.config {
        Some(p) => std::fs::read_to_string(p)?,
        None => String::new(),
    };
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    for o in &c.overrides {
        let k = key_of(o).ok_or_else(|| homfluct::Error::Config { key: o.clone(), reason: "expected KEY=VALUE".into() })?;
        lines.retain(|l| key_of(l) != Some(k));
        lines.push(o.clone());
    }
    let mut cfg = ExperimentConfig::parse_str(&lines.join("\n"))?;
    if lines.iter().any(|l| key_of(l) == Some("kind")) && cfg.kind != kind {
        return Err(homfluct::Error::Config {
            key: "kind".into(),
            reason: format!("config says `{}` but the subcommand is `{}`", cfg.kind.name(), kind.name()),
        });
    }
    cfg.kind = kind;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, common) = split(cli.command);
    let cfg = match build_config(kind, &common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match run(&cfg, common.workers) {
        Ok(outcome) => {
            for v in &outcome.verdicts {
                let tag = if v.pass { "PASS" } else { "FAIL" };
                println!("{tag} {}: observed {:.6e}, expected {:.6e}, tolerance {:.3e}", v.criterion, v.observed, v.expected, v.tolerance);
            }
            if outcome.flagged_invalid {
                println!("INVALID run: statistics flagged, see summary.json");
            }
            println!("wrote {} files to {}", outcome.files.len(), cfg.out.display());
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
